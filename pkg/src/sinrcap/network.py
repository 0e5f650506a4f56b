"""Random SINR networks: interference sums, link SINRs and capacities.

Everything here works on one realised :class:`NetworkInstance`.  Coupled
SINRs replace the realised interference at the receiver by a deterministic
surrogate (mean interference inflated or deflated by an epsilon), which turns
link existence into a power-dependent disk rule.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np

from .geometry import (
    PathLossModel,
    ValueOutOfRange,
    cross_distances,
    disk_area,
    expected_path_loss,
    path_loss,
    path_loss_inverse,
    sample_points,
    torus_distance,
)


class SinrSource(str, Enum):
    ACTUAL = "actual"
    PRIME = "prime"  # surrogate interference (1 + eps') E[.]: lower-bounds capacity
    DPRIME = "dprime"  # surrogate interference (1 - eps) E[.]: upper-bounds capacity


@dataclass(frozen=True)
class PowerModel:
    """Distribution of per-node transmit powers.

    kind is ``constant`` (p_min == p_max == P0), ``uniform`` on [p_min, p_max],
    or ``two_point`` with mass ``w_min`` at p_min and the rest at p_max.
    """

    kind: str
    p_min: float
    p_max: float
    w_min: float = 0.5

    def __post_init__(self):
        if self.kind not in ("constant", "uniform", "two_point"):
            raise ValueError(f"unknown power distribution {self.kind!r}")
        if not (0 < self.p_min <= self.p_max < math.inf):
            raise ValueError(f"need 0 < p_min <= p_max < inf, got {self.p_min}, {self.p_max}")
        if self.kind == "constant" and self.p_min != self.p_max:
            raise ValueError("constant power needs p_min == p_max")
        if self.kind == "two_point" and not 0 < self.w_min < 1:
            raise ValueError("w_min must lie in (0, 1)")

    @classmethod
    def constant(cls, p0: float) -> "PowerModel":
        return cls("constant", p0, p0)

    @classmethod
    def uniform(cls, p_min: float, p_max: float) -> "PowerModel":
        return cls("uniform", p_min, p_max)

    @classmethod
    def two_point(cls, p_min: float, p_max: float, w_min: float = 0.5) -> "PowerModel":
        return cls("two_point", p_min, p_max, w_min)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    @property
    def mean(self) -> float:
        if self.kind == "two_point":
            return self.w_min * self.p_min + (1 - self.w_min) * self.p_max
        return 0.5 * (self.p_min + self.p_max)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "constant":
            return np.full(n, self.p_min)
        if self.kind == "uniform":
            return rng.uniform(self.p_min, self.p_max, size=n)
        return np.where(rng.random(n) < self.w_min, self.p_min, self.p_max)

    def mass(self, lo: float, hi: float) -> float:
        """Pr(lo <= P < hi)."""
        if hi <= lo:
            return 0.0
        if self.kind == "two_point":
            return (self.w_min if lo <= self.p_min < hi else 0.0) + (
                1 - self.w_min if lo <= self.p_max < hi else 0.0
            )
        if self.p_min == self.p_max:
            return 1.0 if lo <= self.p_min < hi else 0.0
        a, b = max(lo, self.p_min), min(hi, self.p_max)
        return max(b - a, 0.0) / (self.p_max - self.p_min)

    def scaled(self, factor: float) -> "PowerModel":
        return replace(self, p_min=self.p_min * factor, p_max=self.p_max * factor)

    def assumption_flags(self, beta: float, n0: float) -> dict:
        return {
            "p_min_above_noise": self.p_min > beta * n0,
            "mass_at_both_endpoints": self.kind in ("constant", "two_point"),
        }


@dataclass(frozen=True)
class SinrParams:
    N0: float
    beta: float
    gamma: float
    R: float = 1.0
    capacity_mode: str = "threshold"  # or "gaussian"

    def __post_init__(self):
        if not (self.N0 > 0 and self.beta > 0 and self.R > 0):
            raise ValueError("N0, beta and R must be positive")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if self.capacity_mode not in ("threshold", "gaussian"):
            raise ValueError(f"unknown capacity mode {self.capacity_mode!r}")


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    points: np.ndarray
    powers: np.ndarray
    power_model: PowerModel
    loss: PathLossModel
    sinr: SinrParams

    def __post_init__(self):
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError("points must have shape (n, 2)")
        if len(self.points) != len(self.powers):
            raise ValueError("one power per node required")
        if self.n < 2:
            raise ValueError("need at least two nodes")

    @property
    def n(self) -> int:
        return len(self.points)

    @classmethod
    def random(cls, n, power_model, loss, sinr, seed) -> "NetworkInstance":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        pts = sample_points(n, rng)
        return cls(pts, power_model.sample(n, rng), power_model, loss, sinr)


def _indices(n, idx):
    if idx is None:
        return np.arange(n)
    return np.atleast_1d(np.asarray(idx, dtype=np.int64))


def attenuation_matrix(inst: NetworkInstance, senders=None, receivers=None) -> np.ndarray:
    """L(d) between senders (rows) and receivers (columns); 0 where they coincide."""
    s = _indices(inst.n, senders)
    r = _indices(inst.n, receivers)
    out = path_loss(inst.loss, cross_distances(inst.points[s], inst.points[r]))
    out = np.atleast_2d(out)
    out[s[:, None] == r[None, :]] = 0.0
    return out


def _interference(inst, j, weights):
    scalar = np.ndim(j) == 0 and j is not None
    L = attenuation_matrix(inst, None, j)
    w = np.ones(inst.n) if weights is None else weights
    out = w @ L
    return float(out[0]) if scalar else out


def interference_J(inst: NetworkInstance, j=None):
    """Sum of attenuations from every other node into receiver(s) ``j``."""
    return _interference(inst, j, None)


def interference_I(inst: NetworkInstance, j=None):
    """Power-weighted interference sum into receiver(s) ``j``."""
    return _interference(inst, j, inst.powers)


@dataclass(frozen=True)
class EpsilonSchedule:
    eps1: float
    eps1_prime: float
    eps2: float
    eps2_prime: float

    @classmethod
    def zero(cls) -> "EpsilonSchedule":
        return cls(0.0, 0.0, 0.0, 0.0)


@dataclass
class ExpectationTable:
    E_L: float
    E_J: float
    E_P: float
    E_I: float
    C_bar: float = math.nan
    C_bar_prime: float = math.nan
    C_bar_dprime: float = math.nan
    C_bar_se: float = math.nan
    C_bar_prime_se: float = 0.0
    C_bar_dprime_se: float = 0.0
    provenance: dict = field(default_factory=lambda: {"kind": "closed_form"})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_moments(cls, n: int, E_L: float, E_P: float) -> "ExpectationTable":
        return cls(E_L=E_L, E_J=(n - 1) * E_L, E_P=E_P, E_I=(n - 1) * E_P * E_L)


def compute_epsilons(n: int, exp: ExpectationTable) -> EpsilonSchedule:
    if n < 2:
        raise ValueError("n must be >= 2")
    ln = math.log(n)
    mu1 = (n - 1) * exp.E_L
    mu2 = (n - 1) * exp.E_P * exp.E_L
    return EpsilonSchedule(
        eps1=math.sqrt(4 * ln / mu1),
        eps1_prime=math.sqrt(6 * ln / mu1),
        eps2=math.sqrt(4 * ln / mu2),
        eps2_prime=math.sqrt(6 * ln / mu2),
    )


def surrogate_interference(constant_power: bool, which, eps: EpsilonSchedule, exp: ExpectationTable, p0=None) -> float:
    """Deterministic interference used by a coupled model, in power units.

    Constant power uses (1 +/- eps1) P0 E[J]; heterogeneous power uses
    (1 +/- eps2) E[I].
    """
    which = SinrSource(which)
    if which is SinrSource.ACTUAL:
        raise ValueError("surrogate interference is only defined for coupled models")
    if constant_power:
        base = p0 * exp.E_J
        f = 1 + eps.eps1_prime if which is SinrSource.PRIME else 1 - eps.eps1
    else:
        base = exp.E_I
        f = 1 + eps.eps2_prime if which is SinrSource.PRIME else 1 - eps.eps2
    return f * base


def _ratio(num, den):
    # a non-positive denominator means the interference surrogate is so small
    # that any received signal decodes
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num > 0, np.inf, 0.0))
    return out


def sinr_matrix(
    inst: NetworkInstance,
    senders=None,
    receivers=None,
    source=SinrSource.ACTUAL,
    eps: EpsilonSchedule | None = None,
    exp: ExpectationTable | None = None,
    interference: np.ndarray | None = None,
) -> np.ndarray:
    """SINR of every sender->receiver link; coincident pairs get 0.

    ``interference`` optionally supplies the receivers' J (constant power) or
    I (otherwise) values so callers can reuse them.
    """
    source = SinrSource(source)
    s = _indices(inst.n, senders)
    r = _indices(inst.n, receivers)
    p = inst.sinr
    L = attenuation_matrix(inst, s, r)
    const = inst.power_model.is_constant
    if source is SinrSource.ACTUAL:
        if interference is None:
            interference = interference_J(inst, r) if const else interference_I(inst, r)
        if const:
            # L / (N0/P0 + gamma J(j) - gamma L)
            p0 = inst.power_model.p_min
            out = _ratio(L, p.N0 / p0 + p.gamma * (interference[None, :] - L))
        else:
            S = inst.powers[s, None] * L
            out = _ratio(S, p.N0 + p.gamma * (interference[None, :] - S))
    else:
        if eps is None or exp is None:
            raise ValueError("coupled SINR needs an epsilon schedule and expectation table")
        if const:
            p0 = inst.power_model.p_min
            sur = surrogate_interference(True, source, eps, exp, p0) / p0
            out = _ratio(L, p.N0 / p0 + p.gamma * (sur - L))
        else:
            sur = surrogate_interference(False, source, eps, exp)
            S = inst.powers[s, None] * L
            out = _ratio(S, p.N0 + p.gamma * (sur - S))
    out[s[:, None] == r[None, :]] = 0.0
    return out


def sinr(inst: NetworkInstance, i: int, j: int) -> float:
    if i == j:
        raise ValueError("a link needs distinct endpoints")
    return float(sinr_matrix(inst, [i], [j])[0, 0])


def sinr_coupled(inst, i, j, which, eps, exp) -> float:
    if i == j:
        raise ValueError("a link needs distinct endpoints")
    return float(sinr_matrix(inst, [i], [j], which, eps, exp)[0, 0])


def sinr_direct(inst: NetworkInstance, i: int, j: int) -> float:
    """SINR straight from the defining sum over k != i, j (no rewriting)."""
    p = inst.sinr
    k = np.array([x for x in range(inst.n) if x != i and x != j], dtype=np.int64)
    d_kj = torus_distance(inst.points[k], inst.points[j]) if len(k) else np.zeros(0)
    interf = float(np.sum(inst.powers[k] * path_loss(inst.loss, d_kj))) if len(k) else 0.0
    signal = inst.powers[i] * path_loss(inst.loss, torus_distance(inst.points[i], inst.points[j]))
    return signal / (p.N0 + p.gamma * interf)


def capacity_from_sinr(b, params: SinrParams):
    """Link capacity for SINR value(s) ``b``; threshold includes equality."""
    b = np.asarray(b, dtype=float)
    ok = b >= params.beta
    if params.capacity_mode == "threshold":
        out = np.where(ok, params.R, 0.0)
    else:
        with np.errstate(over="ignore"):
            out = np.where(ok, 0.5 * np.log2(1.0 + b), 0.0)
    return float(out) if out.ndim == 0 else out


def link_capacity(inst, i, j, sinr_source=SinrSource.ACTUAL, eps=None, exp=None) -> float:
    b = sinr_matrix(inst, [i], [j], sinr_source, eps, exp)[0, 0]
    return capacity_from_sinr(b, inst.sinr)


def capacity_matrix(inst, senders=None, receivers=None, sinr_source=SinrSource.ACTUAL, eps=None, exp=None, interference=None):
    """Capacities of all sender->receiver links.

    Threshold mode returns integer multiples of R (0/1) with ``unit = R``;
    Gaussian mode returns real capacities with ``unit = 1``.
    """
    b = sinr_matrix(inst, senders, receivers, sinr_source, eps, exp, interference)
    if inst.sinr.capacity_mode == "threshold":
        return (b >= inst.sinr.beta).astype(np.int64), inst.sinr.R
    return capacity_from_sinr(b, inst.sinr), 1.0


@dataclass(frozen=True)
class CouplingRadii:
    r_min_prime: float
    r_max_prime: float
    r_min_dprime: float
    r_max_dprime: float


def coupled_threshold(params: SinrParams, which, eps, exp, constant_power=False, p0=None) -> float:
    """Received power P_i L(d) at which a coupled link just decodes."""
    sur = surrogate_interference(constant_power, which, eps, exp, p0)
    return params.beta * (params.N0 + params.gamma * sur) / (1 + params.gamma * params.beta)


def coupled_radius(loss: PathLossModel, params: SinrParams, which, eps, exp, p: float, constant_power=False) -> float:
    """Distance within which a node of power ``p`` reaches everyone in the coupled model."""
    v = coupled_threshold(params, which, eps, exp, constant_power, p if constant_power else None)
    if v <= 0:
        raise ValueOutOfRange(
            f"{SinrSource(which).value} surrogate interference leaves a non-positive noise floor; every link decodes"
        )
    try:
        return path_loss_inverse(loss, v / p)
    except ValueOutOfRange as e:
        raise ValueOutOfRange(f"power {p:g} cannot reach SINR {params.beta:g} at any distance: {e}") from None


def coupling_radii(params: SinrParams, eps, exp, p_min: float, p_max: float, loss: PathLossModel) -> CouplingRadii:
    """Inner/outer coupled connection radii for the heterogeneous-power model."""
    r = lambda which, p: coupled_radius(loss, params, which, eps, exp, p)
    return CouplingRadii(
        r(SinrSource.PRIME, p_min),
        r(SinrSource.PRIME, p_max),
        r(SinrSource.DPRIME, p_min),
        r(SinrSource.DPRIME, p_max),
    )


def radius_spread(loss: PathLossModel, params: SinrParams, p_min: float, p_max: float) -> float:
    """(p_max^(2/a) - p_min^(2/a)) [c (1 + gamma beta) / beta]^(2/a) for pure power-law loss."""
    a = 2.0 / loss.alpha
    g = params.gamma * params.beta
    return (p_max**a - p_min**a) * (loss.c * (1 + g) / params.beta) ** a


def annulus_counts(inst: NetworkInstance, r_inner: float, r_outer: float, centers=None) -> np.ndarray:
    """Per-centre count of other nodes with r_inner < d <= r_outer."""
    c = _indices(inst.n, centers)
    d = cross_distances(inst.points[c], inst.points)
    hit = (d > r_inner) & (d <= r_outer)
    hit[np.arange(len(c)), c] = False
    return hit.sum(axis=1)


def annulus_count(inst: NetworkInstance, i: int, r_inner: float, r_outer: float) -> int:
    if not 0 <= r_inner <= r_outer:
        raise ValueError("need 0 <= r_inner <= r_outer")
    return int(annulus_counts(inst, r_inner, r_outer, [i])[0])


def _coupled_link_means(loss, power_model, params, eps, exp, n_links, rng):
    """Mean capacity (and standard error) of a link in each coupled model."""
    const = power_model.is_constant
    p0 = power_model.p_min if const else None
    which = (SinrSource.PRIME, SinrSource.DPRIME)
    if const and params.capacity_mode == "threshold":
        out = []
        for w in which:
            thr = coupled_threshold(params, w, eps, exp, True, p0) / p0
            if thr <= 0:
                out += [params.R, 0.0]
            elif thr > loss.ceiling * (1 + 1e-15):
                out += [0.0, 0.0]
            else:
                out += [params.R * disk_area(path_loss_inverse(loss, thr)), 0.0]
        return out
    # no closed form: sample (power, offset) pairs, shared by both models
    P = power_model.sample(n_links, rng)
    d = torus_distance(rng.random((n_links, 2)), np.zeros(2))
    S = P * path_loss(loss, d)
    out = []
    for w in which:
        sur = surrogate_interference(const, w, eps, exp, p0)
        c = capacity_from_sinr(_ratio(S, params.N0 + params.gamma * (sur - S)), params)
        out += [float(c.mean()), float(c.std(ddof=1) / math.sqrt(n_links))]
    return out


def estimate_expectations(
    loss: PathLossModel,
    power_model: PowerModel,
    params: SinrParams,
    n: int,
    samples: int = 16,
    seed: int = 0,
    link_samples: int = 1_000_000,
    with_capacity: bool = True,
) -> ExpectationTable:
    """Mean attenuation/interference (quadrature) and mean link capacities.

    C_bar is a seeded Monte-Carlo average over ``samples`` fresh instances of
    size ``n`` (its standard error comes from the spread between instances).
    Coupled means use the closed form R * area(radius) for constant power in
    threshold mode, and ``link_samples`` Monte-Carlo draws otherwise.
    """
    tab = ExpectationTable.from_moments(n, expected_path_loss(loss), power_model.mean)
    if not with_capacity:
        return tab
    ss = np.random.SeedSequence(seed)
    inst_seq, link_seq = ss.spawn(2)
    means = []
    for child in inst_seq.spawn(samples):
        inst = NetworkInstance.random(n, power_model, loss, params, np.random.default_rng(child))
        cap, unit = capacity_matrix(inst)
        means.append(cap.sum() * unit / (n * (n - 1)))
    tab.C_bar = float(np.mean(means))
    tab.C_bar_se = float(np.std(means, ddof=1) / math.sqrt(samples)) if samples > 1 else math.nan
    eps = compute_epsilons(n, tab)
    rng = np.random.default_rng(link_seq)
    (tab.C_bar_prime, tab.C_bar_prime_se, tab.C_bar_dprime, tab.C_bar_dprime_se) = _coupled_link_means(
        loss, power_model, params, eps, tab, link_samples, rng
    )
    tab.provenance = {"kind": "monte_carlo", "samples": samples, "seed": seed, "link_samples": link_samples}
    return tab


def check_assumptions(power_model: PowerModel, params: SinrParams) -> dict:
    """Flag modelling assumptions the chosen powers violate (warns, never raises)."""
    flags = power_model.assumption_flags(params.beta, params.N0)
    for k, ok in flags.items():
        if not ok:
            warnings.warn(f"power model violates assumption {k}", stacklevel=2)
    return flags
