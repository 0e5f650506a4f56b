"""Oracle suites behind ``sinrcap verify``.

Each check returns ``(ok, detail)``.  Capacities are looked up through the
``network`` module at call time so a patched implementation is exercised.
"""

from __future__ import annotations

import time

import numpy as np

from . import network as nm
from .concentration import ExperimentConfig, run_annulus_experiment, run_interference_experiment
from .config import PRESETS
from .flows import CapacitatedDigraph, max_flow, min_cut_bruteforce
from .geometry import PathLossModel, cross_distances, expected_path_loss, path_loss_inverse

_SIZES = {
    "quick": {"graphs": 300, "disk": 20, "rewrite": 4, "sandwich": 10, "annulus_trials": 5},
    "full": {"graphs": 1000, "disk": 100, "rewrite": 20, "sandwich": 50, "annulus_trials": 20},
}


def _base_config(name: str, **kw) -> ExperimentConfig:
    d = dict(PRESETS[name]["config"])
    d.update(kw)
    return ExperimentConfig.from_dict(d)


def random_digraph(rng: np.random.Generator, m: int, max_cap: int = 3, density: float = 0.5) -> CapacitatedDigraph:
    cap = rng.integers(0, max_cap + 1, size=(m + 2, m + 2))
    cap[rng.random(cap.shape) > density] = 0
    return CapacitatedDigraph.from_matrix(cap)


def check_flow_vs_enumeration(count: int, seed: int = 1) -> tuple:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(count):
        g = random_digraph(rng, int(rng.integers(1, 13)), density=float(rng.uniform(0.2, 0.9)))
        if max_flow(g) != min_cut_bruteforce(g)[0]:
            bad += 1
    return bad == 0, f"{bad} mismatches in {count} graphs"


def check_disk_reduction(count: int, seed: int = 2, n: int = 400) -> tuple:
    """With gamma = 0 the constant-power link set is a disk graph."""
    loss = PathLossModel(1e-3 / 64, 3.0, 0.02)
    params = nm.SinrParams(0.02, 0.2, 0.0)
    power = nm.PowerModel.constant(0.01)
    radius = path_loss_inverse(loss, params.beta * params.N0 / power.p_min)
    bad = 0
    links = 0
    for i in range(count):
        inst = nm.NetworkInstance.random(n, power, loss, params, np.random.SeedSequence(seed, spawn_key=(i,)))
        cap, _ = nm.capacity_matrix(inst)
        disk = cross_distances(inst.points, inst.points) <= radius
        np.fill_diagonal(disk, False)
        bad += int(np.sum((cap > 0) != disk))
        links += int(disk.sum())
    return bad == 0, f"{bad} mismatches, {links} disk links, radius {radius:.6g}"


def check_rewrite_identity(count: int, seed: int = 3, n: int = 50) -> tuple:
    worst = 0.0
    for i, power in enumerate([nm.PowerModel.constant(0.01), nm.PowerModel.uniform(0.01, 0.02)] * count):
        inst = nm.NetworkInstance.random(
            n, power, PathLossModel(1e-3 / 64, 3.0, 0.02), nm.SinrParams(0.02, 0.2, 0.02), np.random.SeedSequence(seed, spawn_key=(i,))
        )
        fast = nm.sinr_matrix(inst)
        for a in range(n):
            for b in range(n):
                if a != b:
                    ref = nm.sinr_direct(inst, a, b)
                    worst = max(worst, abs(fast[a, b] - ref) / abs(ref))
    return worst <= 1e-12, f"max relative deviation {worst:.3g} over {2 * count * n * (n - 1)} links"


def check_sandwich(count: int, seed: int = 4, n: int = 400) -> tuple:
    """Coupled capacities bracket the actual one wherever interference is bracketed."""
    bad = checked = 0
    for name in ("fig3", "fig5"):
        cfg = _base_config(name, n=n, m=n - 2, trials=count)
        power, loss, params = cfg.power, cfg.loss, cfg.sinr
        exp = nm.ExpectationTable.from_moments(n, expected_path_loss(loss), power.mean)
        eps = nm.compute_epsilons(n, exp)
        const = power.is_constant
        mu = exp.E_J if const else exp.E_I
        lo = (1 - (eps.eps1 if const else eps.eps2)) * mu
        hi = (1 + (eps.eps1_prime if const else eps.eps2_prime)) * mu
        for i in range(count):
            inst = nm.NetworkInstance.random(n, power, loss, params, np.random.SeedSequence(seed, spawn_key=(i,)))
            X = nm.interference_J(inst) if const else nm.interference_I(inst)
            c = nm.capacity_matrix(inst, interference=X)[0]
            c1 = nm.capacity_matrix(inst, sinr_source=nm.SinrSource.PRIME, eps=eps, exp=exp)[0]
            c2 = nm.capacity_matrix(inst, sinr_source=nm.SinrSource.DPRIME, eps=eps, exp=exp)[0]
            ok = (X >= lo) & (X <= hi)
            bad += int(np.sum(((c1 > c) | (c > c2)) & ok[None, :]))
            checked += int(ok.sum()) * (n - 1)
    return bad == 0, f"{bad} violations among {checked} bracketed links"


def check_annulus_mean(trials: int) -> tuple:
    cfg = _base_config("annulus", trials=trials)
    rep = run_annulus_experiment(cfg)
    pred, se = rep.extras["predicted_mean"], rep.extras["mean_se"]
    z = (rep.empirical_mean - pred) / se
    return abs(z) <= 3, f"mean {rep.empirical_mean:.5g} vs n*pi*dr^2 {pred:.5g} (z={z:.2f})"


def check_interference_scale(trials: int = 50) -> tuple:
    cfg = _base_config("fig3", trials=trials, series_trials=0)
    rep = run_interference_experiment(cfg)
    rel = abs(rep.extras["mean_rel_error"])
    ok = rel <= 0.01 and rep.bounds_hold
    return ok, f"mean rel. error {rel:.2e}, tails {rep.lower_tail_freq:.3g}/{rep.upper_tail_freq:.3g}"


def suite(name: str) -> list:
    if name not in _SIZES:
        raise ValueError(f"unknown suite {name!r}")
    z = _SIZES[name]
    checks = [
        ("flow_vs_enumeration", lambda: check_flow_vs_enumeration(z["graphs"])),
        ("disk_reduction", lambda: check_disk_reduction(z["disk"])),
        ("rewrite_identity", lambda: check_rewrite_identity(z["rewrite"])),
        ("sandwich", lambda: check_sandwich(z["sandwich"])),
        ("annulus_mean", lambda: check_annulus_mean(z["annulus_trials"])),
    ]
    if name == "full":
        checks.append(("interference_n2000", check_interference_scale))
    return checks


def run_suite(name: str, out=print) -> bool:
    all_ok = True
    for label, fn in suite(name):
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as err:  # a crash is a failed check, not an aborted suite
            ok, detail = False, f"{type(err).__name__}: {err}"
        all_ok &= ok
        out(f"{'PASS' if ok else 'FAIL'}  {label:<22} {time.perf_counter() - t0:7.2f}s  {detail}")
    return all_ok
