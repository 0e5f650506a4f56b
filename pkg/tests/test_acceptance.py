"""Acceptance criteria 1-10, each at its stated scale and tolerance.

Run with ``pytest tests/test_acceptance.py -v``; a per-criterion PASS/FAIL
table is printed at the end of the session.
"""

import math
import time

import numpy as np
import pytest

from sinrcap import cli
from sinrcap.concentration import (
    ExperimentConfig,
    bounded_difference_check,
    capacity_samples,
    cut_samples,
    expectations_for,
    run_annulus_experiment,
    run_capacity_experiment,
    run_interference_experiment,
    transmitters_annulus_ok,
)
from sinrcap.config import PRESETS
from sinrcap.flows import CutSpec, RoleAssignment, build_digraph, max_flow, min_cut_bruteforce
from sinrcap.geometry import PathLossModel, cross_distances, path_loss, path_loss_inverse
from sinrcap.network import NetworkInstance, PowerModel, SinrParams, capacity_matrix, sinr_direct, sinr_matrix


def preset_config(name, **kw):
    d = dict(PRESETS[name]["config"])
    d.update(kw)
    return ExperimentConfig.from_dict(d)


@pytest.mark.criterion(1, "max-flow equals brute-force min-cut on 1,000 instances")
def test_duality_oracle(detail):
    loss = PathLossModel(1e-3, 3.0, 0.01)
    params = SinrParams(0.02, 0.2, 0.02)
    t0 = time.perf_counter()
    mismatches = nonzero = 0
    for i in range(1000):
        rng = np.random.default_rng(np.random.SeedSequence(101, spawn_key=(i,)))
        m = int(rng.integers(1, 13))
        pm = PowerModel.constant(0.04) if i % 2 else PowerModel.uniform(0.01, 0.08)
        inst = NetworkInstance.random(m + 2 + int(rng.integers(0, 8)), pm, loss, params, rng)
        roles = RoleAssignment.random(inst.n, 1, m, rng)
        g = build_digraph(inst, roles, roles.destinations[0])
        f = max_flow(g)
        mismatches += f != min_cut_bruteforce(g)[0]
        nonzero += f > 0
    elapsed = time.perf_counter() - t0
    detail(f"{mismatches} mismatches, {nonzero} instances with positive flow, {elapsed:.1f}s")
    assert mismatches == 0
    assert nonzero >= 100
    assert elapsed < 120


@pytest.mark.criterion(2, "gamma=0 link set equals the disk graph")
def test_gamma_zero_reduction(detail):
    loss = PathLossModel(1e-3 / 64, 3.0, 0.02)
    params = SinrParams(0.02, 0.2, 0.0)
    pm = PowerModel.constant(0.01)
    radius = path_loss_inverse(loss, params.beta * params.N0 / pm.p_min)
    mismatches = links = 0
    for i in range(100):
        inst = NetworkInstance.random(500, pm, loss, params, np.random.SeedSequence(202, spawn_key=(i,)))
        cap, _ = capacity_matrix(inst)
        disk = cross_distances(inst.points, inst.points) <= radius
        np.fill_diagonal(disk, False)
        mismatches += int(np.sum(cap.astype(bool) != disk))
        links += int(disk.sum())
    detail(f"{mismatches} mismatches over {links} disk links (radius {radius:.5f})")
    assert mismatches == 0 and links > 0


def _direct_sinr_all(inst):
    """Defining form: P_i L_ij / (N0 + gamma sum_{k != i, j} P_k L_kj), summed explicitly."""
    n = inst.n
    M = inst.powers[:, None] * path_loss(inst.loss, cross_distances(inst.points, inst.points))
    np.fill_diagonal(M, 0.0)
    out = np.zeros((n, n))
    for i in range(n):
        others = np.delete(M, i, axis=0).sum(axis=0)  # excludes k = i; k = j is zero on the diagonal
        out[i] = M[i] / (inst.sinr.N0 + inst.sinr.gamma * others)
    np.fill_diagonal(out, 0.0)
    return out


@pytest.mark.criterion(3, "defining and rewritten SINR forms agree to 1e-12 over 1e6 links")
def test_rewrite_identity(detail):
    loss = PathLossModel(1e-3 / 64, 3.0, 0.02)
    params = SinrParams(0.02, 0.2, 0.02)
    n, links, worst, i = 100, 0, 0.0, 0
    while links < 1_000_000:
        pm = PowerModel.constant(0.01) if i % 2 else PowerModel.uniform(0.01, 0.02)
        inst = NetworkInstance.random(n, pm, loss, params, np.random.SeedSequence(303, spawn_key=(i,)))
        fast = sinr_matrix(inst)
        ref = _direct_sinr_all(inst)
        off = ~np.eye(n, dtype=bool)
        worst = max(worst, float(np.max(np.abs(fast[off] - ref[off]) / ref[off])))
        if i < 2:
            for a, b in ((0, 1), (7, 3), (99, 50)):
                worst = max(worst, abs(fast[a, b] - sinr_direct(inst, a, b)) / sinr_direct(inst, a, b))
        links += n * (n - 1)
        i += 1
    detail(f"max relative deviation {worst:.2e} over {links} links")
    assert worst <= 1e-12


@pytest.mark.criterion(4, "coupled sandwich at link, cut and capacity level (n=1000, 200 trials)")
@pytest.mark.parametrize("preset", ["fig3", "fig5"])
def test_sandwich(detail, preset):
    cfg = preset_config(preset, n=1000, m=998, k=0, trials=200, base_seed=404)
    cuts = cut_samples(cfg, [0, 50, 499])
    held = cuts["bracket_all"]
    bad_cut = held[:, None] & ((cuts["C_prime"] > cuts["C"]) | (cuts["C"] > cuts["C_dprime"]))
    caps = capacity_samples(preset_config(preset, n=1000, m=30, k=0, trials=200, base_seed=405), with_coupled=True)
    cheld = caps["bracket_all"]
    bad_cap = cheld & ((caps["C_prime"] > caps["C"]) | (caps["C"] > caps["C_dprime"]))
    detail(
        f"{preset}: link violations {cuts['link_violations']}/{cuts['links_checked']}, "
        f"cut {int(bad_cut.sum())}/{int(held.sum()) * 3}, capacity {int(bad_cap.sum())}/{int(cheld.sum())}"
    )
    assert cuts["link_violations"] == 0 and cuts["links_checked"] > 0
    assert bad_cut.sum() == 0 and held.sum() > 0
    assert bad_cap.sum() == 0 and cheld.sum() > 0


@pytest.mark.criterion(5, "interference concentration at n=2000 (50 trials)")
def test_interference_concentration(detail):
    cfg = preset_config("fig3", trials=50, base_seed=505)
    t0 = time.perf_counter()
    rep = run_interference_experiment(cfg)
    elapsed = time.perf_counter() - t0
    rel = rep.extras["mean_rel_error"]
    detail(
        f"mean J {rep.empirical_mean:.5g} vs (n-1)E[L] {rep.thresholds['mean']:.5g} (rel {rel:+.2e}); "
        f"tails {rep.lower_tail_freq:.2e}/{rep.upper_tail_freq:.2e} vs bounds "
        f"{rep.theory_lower_bound:.2e}/{rep.theory_upper_bound:.2e}; {elapsed:.1f}s"
    )
    assert abs(rel) <= 0.01
    assert rep.lower_tail_freq <= rep.theory_lower_bound + 3 * rep.lower_stderr
    assert rep.upper_tail_freq <= rep.theory_upper_bound + 3 * rep.upper_stderr
    assert elapsed < 300


@pytest.mark.criterion(6, "cut-capacity mean [m+k(m-k)]C_bar and symmetry (m=200)")
@pytest.mark.parametrize("preset", ["fig3", "fig5"])
def test_cut_capacity_mean(detail, preset):
    cfg = preset_config(preset, m=200, k=0, trials=200, base_seed=606)
    exp = expectations_for(cfg)
    ks = [0, 50, 100, 150, 200]
    C = cut_samples(cfg, ks)["C"] * cfg.sinr.R
    T, m = C.shape[0], cfg.m
    out = []
    for col, k in enumerate(ks):
        size = m + k * (m - k)
        pred = size * exp.C_bar
        se = math.hypot(C[:, col].std(ddof=1) / math.sqrt(T), size * exp.C_bar_se)
        z = (C[:, col].mean() - pred) / se
        out.append(f"k={k}: z={z:+.2f}")
        assert abs(z) <= 3, (k, C[:, col].mean(), pred, se)
    for k in (0, 50, 100):
        diff = C[:, ks.index(k)] - C[:, ks.index(m - k)]
        sd = diff.std(ddof=1)
        z = 0.0 if sd == 0 else diff.mean() / (sd / math.sqrt(T))
        out.append(f"sym {k}/{m - k}: z={z:+.2f}")
        assert abs(z) <= 3
    detail(f"{preset}: " + ", ".join(out))


@pytest.mark.criterion(7, "coding-capacity concentration, l=1, m=30, 500 trials")
@pytest.mark.parametrize("preset", ["capacity-constant", "capacity-heterogeneous"])
def test_capacity_concentration(detail, preset):
    cfg = preset_config(preset, base_seed=707)
    t0 = time.perf_counter()
    rep = run_capacity_experiment(cfg)
    elapsed = time.perf_counter() - t0
    limit = 5 / cfg.m
    x = rep.extras
    detail(
        f"{preset}: m*C_bar {x['E_C0']:.4f}, eps {rep.thresholds['eps_lower']:.3g}/{rep.thresholds['eps_upper']:.3g}, "
        f"freq {rep.lower_tail_freq:.3g}/{rep.upper_tail_freq:.3g} "
        f"(eta+1: {x['lower_freq_eta_plus_1']:.3g}/{x['upper_freq_eta_plus_1']:.3g}) vs 5/m={limit:.3g}; {elapsed:.1f}s"
    )
    assert rep.lower_tail_freq <= limit and rep.upper_tail_freq <= limit
    assert x["lower_freq_eta_plus_1"] <= limit and x["upper_freq_eta_plus_1"] <= limit
    assert x["source_cut_violations"] == 0
    assert elapsed < 600


@pytest.mark.criterion(8, "annulus mean and decay of Pr(count > eta) under power scaling")
def test_annulus_mean(detail):
    rep = run_annulus_experiment(preset_config("annulus", trials=50, base_seed=808))
    pred, se = rep.extras["predicted_mean"], rep.extras["mean_se"]
    z = (rep.empirical_mean - pred) / se
    detail(f"mean {rep.empirical_mean:.4f} vs n*pi*dr^2 {pred:.4f} (z={z:+.2f})")
    assert abs(z) <= 3


@pytest.mark.criterion(8, "annulus mean and decay of Pr(count > eta) under power scaling")
def test_annulus_trend_under_power_scaling(detail):
    freqs = []
    for n in (500, 1000, 2000):
        cfg = preset_config(
            "annulus", n=n, m=n - 2, trials=50, eta=1.0, base_seed=809,
            power_scaling={"n_ref": 2000, "exponent": None},
        )
        freqs.append(run_annulus_experiment(cfg).upper_tail_freq)
    detail("Pr(count > 1) at n=500/1000/2000: " + "/".join(f"{f:.3f}" for f in freqs))
    assert freqs[0] >= freqs[1] >= freqs[2]


@pytest.mark.criterion(9, "fixed config and seed give byte-identical CSVs")
def test_determinism(detail, tmp_path, monkeypatch):
    runs = {
        "fig3": ["--set", "trials=3"],
        "fig5": ["--set", "trials=3"],
        "capacity-constant": ["--set", "trials=40"],
        "capacity-heterogeneous": ["--set", "trials=40"],
        "annulus": ["--set", "trials=3"],
    }
    compared = 0
    for name, extra in runs.items():
        for rep, threads in (("a", "1"), ("b", "2")):
            monkeypatch.setenv("SINRCAP_THREADS", threads)
            assert cli.main(["run", "--config", name, *extra, "--out", str(tmp_path / rep / name)]) == 0
        for f in sorted((tmp_path / "a" / name).glob("*.csv")):
            assert f.read_bytes() == (tmp_path / "b" / name / f.name).read_bytes(), f"{name}/{f.name}"
            compared += 1
    detail(f"{compared} CSV files identical across two executions")


@pytest.mark.criterion(10, "martingale differences <= eta R on 100 coupled instances")
def test_bounded_differences(detail):
    loss = PathLossModel(1e-3, 3.0, 0.1)
    params = SinrParams(0.02, 0.2, 0.02)
    pm = PowerModel.uniform(0.01, 0.08)
    eta, n = 2.0, 14
    accepted, tried, diffs, failures = 0, 0, [], 0
    while accepted < 100:
        rng = np.random.default_rng(np.random.SeedSequence(1010, spawn_key=(tried,)))
        tried += 1
        m = int(rng.integers(1, 11))
        inst = NetworkInstance.random(n, pm, loss, params, rng)
        roles = RoleAssignment.random(n, 1, m, rng)
        t = roles.destinations[0]
        cut = CutSpec(rng.choice(roles.relays, int(rng.integers(0, m + 1)), replace=False))
        if not transmitters_annulus_ok(inst, roles, t, cut, eta):
            continue
        accepted += 1
        d, holds = bounded_difference_check(inst, roles, t, cut, eta)
        diffs.append(d)
        failures += not holds
    detail(f"{failures} failures; max diff {max(diffs):.3f} (eta*R={eta}); {sum(d > 0 for d in diffs)} nonzero; {tried} drawn")
    assert failures == 0
    assert sum(d > 0 for d in diffs) >= 20
