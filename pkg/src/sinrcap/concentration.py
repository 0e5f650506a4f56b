"""Monte-Carlo concentration experiments and the tail bounds they are checked against."""

from __future__ import annotations

import functools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .flows import (
    CutSpec,
    InstanceTooLarge,
    RoleAssignment,
    _digraph_from_roles,
    max_flow,
)
from .geometry import PathLossModel, ValueOutOfRange, expected_path_loss
from .network import (
    ExpectationTable,
    NetworkInstance,
    PowerModel,
    SinrParams,
    SinrSource,
    annulus_counts,
    attenuation_matrix,
    capacity_matrix,
    compute_epsilons,
    coupled_radius,
    coupled_threshold,
    estimate_expectations,
)

SIGMA = 3.0
CAPACITY_SLACK = 5.0
MAX_MARTINGALE_RELAYS = 12


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str  # "constant" or "heterogeneous"
    n: int
    m: int
    loss: PathLossModel
    sinr: SinrParams
    power: PowerModel
    l: int = 1
    k: int = 0
    trials: int = 200
    base_seed: int = 0
    alpha_exponent: float = 1.0
    eta: float = 1.0
    epsilon: float = 0.5
    cbar_samples: int = 16
    include_other_destinations: bool = False
    power_scaling: dict | None = None  # {"n_ref": int, "exponent": float | None}
    series_trials: int = 1

    def __post_init__(self):
        if self.scenario not in ("constant", "heterogeneous"):
            raise ValueError(f"scenario: unknown value {self.scenario!r}")
        if (self.scenario == "constant") != self.power.is_constant:
            raise ValueError("scenario: does not match the power distribution")
        if self.trials < 1:
            raise ValueError("trials: must be >= 1")
        if self.m + self.l + 1 > self.n:
            raise ValueError(f"m: m + l + 1 = {self.m + self.l + 1} exceeds n = {self.n}")
        if not 0 <= self.k <= self.m:
            raise ValueError(f"k: must lie in [0, m], got {self.k}")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon: must lie in (0, 1)")
        if self.eta <= 0 or self.alpha_exponent <= 0:
            raise ValueError("eta and alpha_exponent must be positive")

    @property
    def constant(self) -> bool:
        return self.scenario == "constant"

    def effective_power(self) -> PowerModel:
        """Power distribution after the optional per-n scaling rule."""
        if not self.power_scaling:
            return self.power
        expo = self.power_scaling.get("exponent")
        if expo is None:
            expo = 1.0 - self.loss.alpha / 2.0
        return self.power.scaled((self.n / self.power_scaling["n_ref"]) ** expo)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["loss"] = PathLossModel(**d["loss"])
        d["sinr"] = SinrParams(**d["sinr"])
        d["power"] = PowerModel(**d["power"])
        return cls(**d)


@dataclass(frozen=True)
class TailBoundSpec:
    """One exponential tail bound: Chernoff (lower/upper) or Azuma."""

    kind: str  # "chernoff_lower", "chernoff_upper", "azuma"
    center: float
    eps: float
    cs: tuple = ()

    @property
    def value(self) -> float:
        if self.kind == "chernoff_lower":
            return math.exp(-self.center * self.eps**2 / 2)
        if self.kind == "chernoff_upper":
            return math.exp(-self.center * self.eps**2 / 3)
        if self.kind == "azuma":
            return azuma_bound(self.eps * self.center, self.cs)
        raise ValueError(f"unknown bound kind {self.kind!r}")


def azuma_bound(lam: float, cs) -> float:
    """exp(-lam^2 / (2 sum c_i^2)) for a martingale with differences bounded by cs."""
    cs = np.asarray(cs, dtype=float)
    if cs.size == 0:
        raise ValueError("need at least one difference bound")
    return math.exp(-(lam**2) / (2 * float(np.sum(cs**2))))


def binomial_stderr(p: float, n: int) -> float:
    p = min(max(p, 0.0), 1.0)
    return math.sqrt(p * (1 - p) / n)


@dataclass
class ConcentrationReport:
    quantity: str
    empirical_mean: float
    empirical_sd: float
    lower_tail_freq: float
    upper_tail_freq: float
    theory_lower_bound: float
    theory_upper_bound: float
    thresholds: dict
    trials: int
    seed: int
    samples: int
    extras: dict = field(default_factory=dict)
    series: dict | None = field(default=None, repr=False, compare=False)

    @property
    def lower_stderr(self) -> float:
        return binomial_stderr(self.theory_lower_bound, self.samples)

    @property
    def upper_stderr(self) -> float:
        return binomial_stderr(self.theory_upper_bound, self.samples)

    def bound_rows(self) -> list:
        """(quantity, eps, empirical_freq, theory_bound, stderr) for both tails."""
        return [
            (f"{self.quantity}:lower", self.thresholds.get("eps_lower"), self.lower_tail_freq, self.theory_lower_bound, self.lower_stderr),
            (f"{self.quantity}:upper", self.thresholds.get("eps_upper"), self.upper_tail_freq, self.theory_upper_bound, self.upper_stderr),
        ]

    @property
    def bounds_hold(self) -> bool:
        return all(f <= b + SIGMA * se for _, _, f, b, se in self.bound_rows())

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("series")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ConcentrationReport":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def trial_rng(base_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(index,)))


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("SINRCAP_THREADS", "1")))
    except ValueError:
        return 1


def _map_trials(fn, n_trials: int):
    """Run ``fn(i)`` for every trial index; results come back in index order."""
    w = _workers()
    if w == 1:
        return [fn(i) for i in range(n_trials)]
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(fn, range(n_trials)))


@functools.lru_cache(maxsize=32)
def _expectations(loss, power, sinr, n, samples, seed, with_capacity) -> ExpectationTable:
    if not with_capacity:
        return ExpectationTable.from_moments(n, expected_path_loss(loss), power.mean)
    return estimate_expectations(loss, power, sinr, n, samples=samples, seed=seed)


def expectations_for(cfg: ExperimentConfig, with_capacity: bool = True) -> ExpectationTable:
    """Expectation table for a config; capacity means use a seed derived from base_seed."""
    seed = (cfg.base_seed, 0x5EED)
    return _expectations(cfg.loss, cfg.effective_power(), cfg.sinr, cfg.n, cfg.cbar_samples, seed, with_capacity)


def _instance(cfg, rng):
    return NetworkInstance.random(cfg.n, cfg.effective_power(), cfg.loss, cfg.sinr, rng)


def _brackets(cfg, exp, eps):
    """(lower, upper) interference bracket and Chernoff mean for the scenario."""
    if cfg.constant:
        return (1 - eps.eps1) * exp.E_J, (1 + eps.eps1_prime) * exp.E_J, exp.E_J, eps.eps1, eps.eps1_prime
    return (1 - eps.eps2) * exp.E_I, (1 + eps.eps2_prime) * exp.E_I, exp.E_I, eps.eps2, eps.eps2_prime


def _receiver_interference(cfg, inst, receivers):
    L = attenuation_matrix(inst, None, receivers)
    return L.sum(axis=0) if cfg.constant else inst.powers @ L


# --- interference -----------------------------------------------------------


def run_interference_experiment(cfg: ExperimentConfig) -> ConcentrationReport:
    """Per-node interference against the Chernoff brackets.

    J(j) is tracked for constant power and I(j) otherwise.
    """
    exp = expectations_for(cfg, with_capacity=False)
    eps = compute_epsilons(cfg.n, exp)
    lo, hi, mu, e_lo, e_hi = _brackets(cfg, exp, eps)

    def one(i):
        inst = _instance(cfg, trial_rng(cfg.base_seed, i))
        L = attenuation_matrix(inst)
        return L.sum(axis=0), inst.powers @ L

    results = _map_trials(one, cfg.trials)
    J = np.stack([r[0] for r in results])
    I = np.stack([r[1] for r in results])
    X = J if cfg.constant else I
    total = X.size
    chernoff_mu = (cfg.n - 1) * exp.E_L if cfg.constant else (cfg.n - 1) * exp.E_P * exp.E_L
    trial_means = X.mean(axis=1)
    rows = [
        (t, j, float(J[t, j]), float(I[t, j]))
        for t in range(min(cfg.series_trials, cfg.trials))
        for j in range(cfg.n)
    ]
    return ConcentrationReport(
        quantity="InterferenceJ" if cfg.constant else "InterferenceI",
        empirical_mean=float(X.mean()),
        empirical_sd=float(X.std(ddof=1)) if total > 1 else 0.0,
        lower_tail_freq=float(np.mean(X <= lo)),
        upper_tail_freq=float(np.mean(X >= hi)),
        theory_lower_bound=TailBoundSpec("chernoff_lower", chernoff_mu, e_lo).value,
        theory_upper_bound=TailBoundSpec("chernoff_upper", chernoff_mu, e_hi).value,
        thresholds={"eps_lower": e_lo, "eps_upper": e_hi, "lower": lo, "upper": hi, "mean": mu},
        trials=cfg.trials,
        seed=cfg.base_seed,
        samples=total,
        extras={
            "E_L": exp.E_L,
            "mean_rel_error": float(X.mean() / mu - 1),
            "mean_se": float(trial_means.std(ddof=1) / math.sqrt(cfg.trials)) if cfg.trials > 1 else math.nan,
        },
        series={"interference": rows},
    )


# --- cuts ---------------------------------------------------------------------


def random_subset(m: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform k-subset of range(m) by a partial Fisher-Yates shuffle."""
    a = np.arange(m)
    for i in range(k):
        j = i + int(rng.integers(m - i))
        a[i], a[j] = a[j], a[i]
    return np.sort(a[:k])


def _cut_value(cap, side):
    """Forward capacity of a cut for positions laid out [s, relays..., t]."""
    src = 1 + np.flatnonzero(side)
    snk = 1 + np.flatnonzero(~side)
    return int(cap[0, snk].sum() + cap[np.ix_(src, snk)].sum() + cap[src, -1].sum())


def cut_samples(cfg: ExperimentConfig, ks) -> dict:
    """Per-trial C_k, C'_k, C''_k for each k in ``ks`` (all evaluated on the same instances).

    Returns arrays of shape (trials, len(ks)) in capacity units of R together
    with bracket and sandwich diagnostics.
    """
    if cfg.sinr.capacity_mode != "threshold":
        raise ValueError("cut experiments use threshold capacities")
    ks = list(ks)
    for k in ks:
        if not 0 <= k <= cfg.m:
            raise ValueError(f"k={k} outside [0, {cfg.m}]")
    exp = expectations_for(cfg, with_capacity=False)
    eps = compute_epsilons(cfg.n, exp)
    lo, hi, *_ = _brackets(cfg, exp, eps)

    def one(i):
        rng = trial_rng(cfg.base_seed, i)
        inst = _instance(cfg, rng)
        roles = RoleAssignment.random(cfg.n, 1, cfg.m, rng)
        nodes = (roles.source, *roles.relays, roles.destinations[0])
        L_all = attenuation_matrix(inst)
        X_all = L_all.sum(axis=0) if cfg.constant else inst.powers @ L_all
        X = X_all[list(nodes)]
        caps = [
            capacity_matrix(inst, nodes, nodes, src, eps, exp, X)[0]
            for src in (SinrSource.ACTUAL, SinrSource.PRIME, SinrSource.DPRIME)
        ]
        for c in caps:
            c[0, -1] = c[-1, 0] = 0
        ok = (X >= lo) & (X <= hi)
        ok_recv = bool(ok[1:].all())
        c, c1, c2 = caps
        bad_links = ((c1 > c) | (c > c2)) & ok[None, :]
        vals = np.zeros((3, len(ks)), dtype=np.int64)
        for col, k in enumerate(ks):
            side = np.zeros(cfg.m, dtype=bool)
            side[random_subset(cfg.m, k, rng)] = True
            for row in range(3):
                vals[row, col] = _cut_value(caps[row], side)
        return vals, ok_recv, bool(((X_all >= lo) & (X_all <= hi)).all()), int(bad_links.sum()), int(ok.sum()) * len(nodes)

    res = _map_trials(one, cfg.trials)
    vals = np.stack([r[0] for r in res])
    return {
        "ks": ks,
        "C": vals[:, 0, :],
        "C_prime": vals[:, 1, :],
        "C_dprime": vals[:, 2, :],
        "bracket_receivers": np.array([r[1] for r in res]),
        "bracket_all": np.array([r[2] for r in res]),
        "link_violations": int(sum(r[3] for r in res)),
        "links_checked": int(sum(r[4] for r in res)),
        "eps": eps,
    }


def run_cut_experiment(cfg: ExperimentConfig, exp: ExpectationTable | None = None) -> ConcentrationReport:
    """Capacity of a uniformly random s-t cut of size cfg.k, with its coupled bounds."""
    exp = exp or expectations_for(cfg)
    data = cut_samples(cfg, [cfg.k])
    R = cfg.sinr.R
    C = data["C"][:, 0] * R
    C1 = data["C_prime"][:, 0] * R
    C2 = data["C_dprime"][:, 0] * R
    m, k, e = cfg.m, cfg.k, cfg.epsilon
    size = m + k * (m - k)
    E1, E2 = size * exp.C_bar_prime, size * exp.C_bar_dprime
    if cfg.constant:
        b_lo = TailBoundSpec("chernoff_lower", E1, e).value
        b_hi = TailBoundSpec("chernoff_upper", E2, e).value
        variants = {}
    else:
        b_lo = math.exp(-size * exp.C_bar_prime**2 * e**2 / (2 * cfg.eta**2 * R**2))
        b_hi = math.exp(-size * exp.C_bar_dprime**2 * e**2 / (2 * cfg.eta**2 * R**2))
        eta1 = cfg.eta + 1
        variants = {
            "bound_lower_eta_plus_1": math.exp(-size * exp.C_bar_prime**2 * e**2 / (2 * eta1**2 * R**2)),
            "bound_upper_eta_plus_1": math.exp(-size * exp.C_bar_dprime**2 * e**2 / (2 * eta1**2 * R**2)),
        }
    held = data["bracket_receivers"]
    sandwich_bad = held & ((C1 > C) | (C > C2))
    pred = size * exp.C_bar
    se = float(C.std(ddof=1) / math.sqrt(len(C))) if len(C) > 1 else math.nan
    rows = [
        (t, k, float(C[t]), float(C1[t]), float(C2[t]))
        for t in range(len(C))
    ]
    return ConcentrationReport(
        quantity="CutCapacityK",
        empirical_mean=float(C.mean()),
        empirical_sd=float(C.std(ddof=1)) if len(C) > 1 else 0.0,
        lower_tail_freq=float(np.mean(C <= (1 - e) * E1)),
        upper_tail_freq=float(np.mean(C >= (1 + e) * E2)),
        theory_lower_bound=b_lo,
        theory_upper_bound=b_hi,
        thresholds={"eps_lower": e, "eps_upper": e, "lower": (1 - e) * E1, "upper": (1 + e) * E2, "k": k, "m": m},
        trials=cfg.trials,
        seed=cfg.base_seed,
        samples=len(C),
        extras={
            "predicted_mean": pred,
            "predicted_mean_se": size * exp.C_bar_se,
            "mean_se": se,
            "C_bar": exp.C_bar,
            "C_bar_prime": exp.C_bar_prime,
            "C_bar_dprime": exp.C_bar_dprime,
            "sandwich_checked": int(held.sum()),
            "sandwich_violations": int(sandwich_bad.sum()),
            "link_sandwich_violations": data["link_violations"],
            **variants,
        },
        series={"cuts": rows},
    )


# --- coding capacity ----------------------------------------------------------


def capacity_epsilons(cfg: ExperimentConfig, exp: ExpectationTable) -> dict:
    """Deviation widths for the capacity theorems, with E[C_0] = m * C_bar."""
    m, a = cfg.m, cfg.alpha_exponent
    ec0 = m * exp.C_bar
    if ec0 <= 0 or m < 2:
        return {"lower": math.inf, "upper": math.inf, "lower_eta_plus_1": math.inf, "upper_eta_plus_1": math.inf}
    if cfg.constant:
        lo = math.sqrt(2 * a * math.log(m) / ec0)
        hi = math.sqrt(3 * a * math.log(m) / ec0)
        return {"lower": lo, "upper": hi, "lower_eta_plus_1": lo, "upper_eta_plus_1": hi}
    R = cfg.sinr.R
    w = math.sqrt(2 * a * m * math.log(m)) / ec0
    return {
        "lower": cfg.eta * R * w,
        "upper": cfg.eta * R * w,
        "lower_eta_plus_1": (cfg.eta + 1) * R * w,
        "upper_eta_plus_1": (cfg.eta + 1) * R * w,
    }


def capacity_samples(cfg: ExperimentConfig, with_coupled: bool = False) -> dict:
    """Per-trial coding capacity (and optionally its coupled counterparts)."""
    exp_c = expectations_for(cfg, with_capacity=False)
    eps = compute_epsilons(cfg.n, exp_c)
    lo, hi, *_ = _brackets(cfg, exp_c, eps)

    def one(i):
        rng = trial_rng(cfg.base_seed, i)
        inst = _instance(cfg, rng)
        roles = RoleAssignment.random(cfg.n, cfg.l, cfg.m, rng)
        nodes = (roles.source, *roles.relays, *roles.destinations)
        if with_coupled:
            X_all = _receiver_interference(cfg, inst, None)
            X = X_all[list(nodes)]
            bracket = bool(((X_all >= lo) & (X_all <= hi)).all())
        else:
            X = _receiver_interference(cfg, inst, nodes)
            bracket = None
        out = []
        sources = (SinrSource.ACTUAL, SinrSource.PRIME, SinrSource.DPRIME) if with_coupled else (SinrSource.ACTUAL,)
        for src in sources:
            cap, unit = capacity_matrix(inst, nodes, nodes, src, eps, exp_c, X)
            per = [
                max_flow(_digraph_from_roles(nodes, cap, unit, roles, t, cfg.include_other_destinations))
                for t in roles.destinations
            ]
            out.append(min(per))
            if src is SinrSource.ACTUAL:
                first = per
                out_sum = float(cap[0, 1 : 1 + cfg.m].sum() * unit)
        return out, first, out_sum, bracket

    res = _map_trials(one, cfg.trials)
    d = {
        "C": np.array([r[0][0] for r in res]),
        "per_destination": [r[1] for r in res],
        "source_cut": np.array([r[2] for r in res]),
    }
    if with_coupled:
        d["C_prime"] = np.array([r[0][1] for r in res])
        d["C_dprime"] = np.array([r[0][2] for r in res])
        d["bracket_all"] = np.array([r[3] for r in res])
    return d


def run_capacity_experiment(cfg: ExperimentConfig, exp: ExpectationTable | None = None, with_coupled: bool = False) -> ConcentrationReport:
    """Coding capacity C_{s,T} against the (1 +/- eps_alpha) m C_bar window."""
    exp = exp or expectations_for(cfg)
    data = capacity_samples(cfg, with_coupled)
    C = data["C"]
    center = cfg.m * exp.C_bar
    ea = capacity_epsilons(cfg, exp)
    ma = cfg.m**cfg.alpha_exponent
    nominal_lo, nominal_hi = cfg.l / ma, 1 / ma
    f_lo = float(np.mean(C <= (1 - ea["lower"]) * center))
    f_hi = float(np.mean(C >= (1 + ea["upper"]) * center))
    extras = {
        "C_bar": exp.C_bar,
        "E_C0": center,
        "slack": CAPACITY_SLACK,
        "lower_freq_normalized": f_lo * ma / cfg.l,
        "upper_freq_normalized": f_hi * ma,
        "lower_within_slack": f_lo <= CAPACITY_SLACK * nominal_lo,
        "upper_within_slack": f_hi <= CAPACITY_SLACK * nominal_hi,
        "source_cut_violations": int(np.sum(C > data["source_cut"] + 1e-9)),
        "eps_lower_eta_plus_1": ea["lower_eta_plus_1"],
        "eps_upper_eta_plus_1": ea["upper_eta_plus_1"],
        "lower_freq_eta_plus_1": float(np.mean(C <= (1 - ea["lower_eta_plus_1"]) * center)),
        "upper_freq_eta_plus_1": float(np.mean(C >= (1 + ea["upper_eta_plus_1"]) * center)),
    }
    if with_coupled:
        held = data["bracket_all"]
        bad = held & ((data["C_prime"] > C + 1e-9) | (C > data["C_dprime"] + 1e-9))
        extras.update(sandwich_checked=int(held.sum()), sandwich_violations=int(bad.sum()))
    rows = [(t, float(C[t]), *map(float, data["per_destination"][t])) for t in range(len(C))]
    return ConcentrationReport(
        quantity="CodingCapacity",
        empirical_mean=float(C.mean()),
        empirical_sd=float(C.std(ddof=1)) if len(C) > 1 else 0.0,
        lower_tail_freq=f_lo,
        upper_tail_freq=f_hi,
        theory_lower_bound=nominal_lo,
        theory_upper_bound=nominal_hi,
        thresholds={
            "eps_lower": ea["lower"],
            "eps_upper": ea["upper"],
            "lower": (1 - ea["lower"]) * center,
            "upper": (1 + ea["upper"]) * center,
        },
        trials=cfg.trials,
        seed=cfg.base_seed,
        samples=len(C),
        extras=extras,
        series={"capacity": rows},
    )


# --- annuli -----------------------------------------------------------------


def run_annulus_experiment(cfg: ExperimentConfig) -> ConcentrationReport:
    """Per-node counts in the coupled annuli (r_min, r_max] and Pr(count > eta).

    The primed radii must exist (their failure propagates).  The double-primed
    annulus is reported only when its radii exist.
    """
    if cfg.constant:
        raise ValueError("annulus statistics need heterogeneous power")
    power = cfg.effective_power()
    exp = expectations_for(cfg, with_capacity=False)
    eps = compute_epsilons(cfg.n, exp)
    radius = lambda w, p: coupled_radius(cfg.loss, cfg.sinr, w, eps, exp, p)
    r1 = (radius(SinrSource.PRIME, power.p_min), radius(SinrSource.PRIME, power.p_max))
    try:
        r2 = (radius(SinrSource.DPRIME, power.p_min), radius(SinrSource.DPRIME, power.p_max))
        r2_note = None
    except ValueOutOfRange as err:
        r2, r2_note = None, str(err)

    def one(i):
        inst = _instance(cfg, trial_rng(cfg.base_seed, i))
        a = annulus_counts(inst, *r1)
        b = annulus_counts(inst, *r2) if r2 else None
        return a, b

    res = _map_trials(one, cfg.trials)
    A = np.stack([r[0] for r in res])
    n = cfg.n
    p1 = math.pi * (r1[1] ** 2 - r1[0] ** 2)
    exact_mean = (n - 1) * p1
    # pair indicators on the torus are pairwise independent, so the node
    # average has variance 2 (n-1) p (1-p) / n per trial
    mean_se = math.sqrt(2 * (n - 1) * p1 * (1 - p1) / (n * cfg.trials))
    extras = {
        "r_min_prime": r1[0],
        "r_max_prime": r1[1],
        "predicted_mean": n * p1,
        "predicted_mean_exact": exact_mean,
        "mean_se": mean_se,
        "p_min": power.p_min,
        "p_max": power.p_max,
        "eta": cfg.eta,
    }
    if r2:
        B = np.stack([r[1] for r in res])
        p2 = math.pi * (r2[1] ** 2 - r2[0] ** 2)
        extras.update(
            r_min_dprime=r2[0],
            r_max_dprime=r2[1],
            dprime_mean=float(B.mean()),
            dprime_predicted_mean=(n - 1) * p2,
            dprime_exceed_freq=float(np.mean(B > cfg.eta)),
        )
    else:
        extras["dprime_unavailable"] = r2_note
    return ConcentrationReport(
        quantity="AnnulusCount",
        empirical_mean=float(A.mean()),
        empirical_sd=float(A.std(ddof=1)) if A.size > 1 else 0.0,
        lower_tail_freq=0.0,
        upper_tail_freq=float(np.mean(A > cfg.eta)),
        theory_lower_bound=1.0,
        theory_upper_bound=float(stats.binom.sf(math.floor(cfg.eta), n - 1, p1)),
        thresholds={"eps_lower": None, "eps_upper": None, "eta": cfg.eta},
        trials=cfg.trials,
        seed=cfg.base_seed,
        samples=int(A.size),
        extras=extras,
        series={"annulus": [(t, j, int(A[t, j])) for t in range(min(cfg.series_trials, cfg.trials)) for j in range(n)]},
    )


# --- bounded differences --------------------------------------------------------


def martingale_sequence(roles: RoleAssignment, t: int, cut: CutSpec) -> list:
    """Link order used for the Doob martingale of a cut sum.

    Source links into V_k^c first, then V_k -> V_k^c row by row, then V_k -> t.
    """
    near = [u for u in roles.relays if u in cut.v_k]
    far = [u for u in roles.relays if u not in cut.v_k]
    seq = [(roles.source, j) for j in far]
    seq += [(i, j) for i in near for j in far]
    seq += [(i, t) for i in near]
    return seq


def _transmitter_max_diff(thresholds, power: PowerModel):
    """Largest |E[S_i | prefix, Y_l = R] - E[S_i | prefix, Y_l = 0]| / R.

    S_i counts the links of one transmitter; link h is up iff P_i >= thresholds[h].
    Every positive-probability prefix of earlier link values is enumerated.
    """
    q = len(thresholds)
    best = 0.0

    def up_prob(lo, hi, th):
        m = power.mass(lo, hi)
        return power.mass(max(lo, th), hi) / m

    def walk(l, lo, hi):
        nonlocal best
        if l == q:
            return
        th = thresholds[l]
        m1 = power.mass(max(lo, th), hi)
        m0 = power.mass(lo, min(hi, th))
        if m1 > 0 and m0 > 0:
            i1 = (max(lo, th), hi)
            i0 = (lo, min(hi, th))
            diff = sum(up_prob(*i1, thresholds[h]) - up_prob(*i0, thresholds[h]) for h in range(l, q))
            best = max(best, abs(diff))
        if m1 > 0:
            walk(l + 1, max(lo, th), hi)
        if m0 > 0:
            walk(l + 1, lo, min(hi, th))

    walk(0, -math.inf, math.inf)
    return best


def bounded_difference_check(
    inst: NetworkInstance,
    roles: RoleAssignment,
    t: int,
    cut: CutSpec,
    eta: float,
    R: float | None = None,
    which=SinrSource.PRIME,
    exp: ExpectationTable | None = None,
):
    """Martingale difference bound for a coupled-model cut sum.

    Node positions are held fixed and transmit powers are random, which is
    where the dependence between links from one transmitter comes from.  The
    conditional expectations are computed exactly from the power distribution.
    Returns ``(max_observed_diff, max_observed_diff <= eta * R)``.
    """
    m = len(roles.relays)
    if m > MAX_MARTINGALE_RELAYS:
        raise InstanceTooLarge(f"{m} relays exceed the limit of {MAX_MARTINGALE_RELAYS}")
    R = inst.sinr.R if R is None else R
    if exp is None:
        exp = ExpectationTable.from_moments(inst.n, expected_path_loss(inst.loss), inst.power_model.mean)
    eps = compute_epsilons(inst.n, exp)
    const = inst.power_model.is_constant
    v = coupled_threshold(inst.sinr, which, eps, exp, const, inst.power_model.p_min if const else None)
    by_tx = {}
    for a, b in martingale_sequence(roles, t, cut):
        L = float(attenuation_matrix(inst, [a], [b])[0, 0])
        by_tx.setdefault(a, []).append(v / L if v > 0 else -math.inf)
    worst = max((_transmitter_max_diff(th, inst.power_model) for th in by_tx.values()), default=0.0)
    worst *= R
    return worst, worst <= eta * R * (1 + 1e-12)


def transmitters_annulus_ok(inst, roles, t, cut, eta, which=SinrSource.PRIME, exp=None) -> bool:
    """True when every transmitter of the cut sum has at most eta nodes in its coupled annulus."""
    if exp is None:
        exp = ExpectationTable.from_moments(inst.n, expected_path_loss(inst.loss), inst.power_model.mean)
    eps = compute_epsilons(inst.n, exp)
    pm = inst.power_model
    try:
        r_in = coupled_radius(inst.loss, inst.sinr, which, eps, exp, pm.p_min)
    except ValueOutOfRange:
        r_in = 0.0
    r_out = coupled_radius(inst.loss, inst.sinr, which, eps, exp, pm.p_max)
    tx = sorted({a for a, _ in martingale_sequence(roles, t, cut)})
    return bool(np.all(annulus_counts(inst, r_in, r_out, tx) <= eta))
