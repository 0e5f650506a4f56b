import itertools
import json
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sinrcap.concentration import (
    ConcentrationReport,
    ExperimentConfig,
    TailBoundSpec,
    azuma_bound,
    bounded_difference_check,
    capacity_epsilons,
    cut_samples,
    expectations_for,
    martingale_sequence,
    random_subset,
    run_annulus_experiment,
    run_capacity_experiment,
    run_cut_experiment,
    run_interference_experiment,
    transmitters_annulus_ok,
)
from sinrcap.flows import CutSpec, InstanceTooLarge, RoleAssignment
from sinrcap.geometry import PathLossModel, expected_path_loss, path_loss, torus_distance
from sinrcap.network import (
    ExpectationTable,
    NetworkInstance,
    PowerModel,
    SinrParams,
    SinrSource,
    compute_epsilons,
    coupled_threshold,
)

LOSS = PathLossModel(1e-3 / 64, 3.0, 0.02)
PARAMS = SinrParams(0.02, 0.2, 0.02)
CONST = PowerModel.constant(0.01)
UNIF = PowerModel.uniform(0.01, 0.02)


def config(**kw):
    base = dict(scenario="constant", n=300, m=40, loss=LOSS, sinr=PARAMS, power=CONST, k=10, trials=10, base_seed=5, cbar_samples=4)
    base.update(kw)
    return ExperimentConfig(**base)


# --- config and bounds ----------------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [dict(m=299), dict(k=41), dict(trials=0), dict(scenario="heterogeneous"), dict(epsilon=1.0), dict(eta=0.0), dict(scenario="other")],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        config(**kw)


def test_config_round_trip():
    cfg = config(power_scaling={"n_ref": 2000, "exponent": None})
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


def test_power_scaling_rule():
    cfg = config(scenario="heterogeneous", power=UNIF, n=500, m=10, power_scaling={"n_ref": 2000, "exponent": None})
    f = (500 / 2000) ** (1 - 3 / 2)
    assert cfg.effective_power().p_max == pytest.approx(0.02 * f)
    assert config().effective_power() == CONST


def test_azuma_examples():
    assert azuma_bound(0.0, [1.0, 2.0]) == 1.0
    assert azuma_bound(math.sqrt(2), [1.0]) == pytest.approx(math.exp(-1))
    cs = [0.5, 1.0, 2.0]
    e1 = -math.log(azuma_bound(3.0, cs))
    e2 = -math.log(azuma_bound(3.0, [2 * c for c in cs]))
    assert e2 == pytest.approx(e1 / 4)
    with pytest.raises(ValueError):
        azuma_bound(1.0, [])


@given(st.floats(0, 1e4), st.floats(0, 10), st.sampled_from(["chernoff_lower", "chernoff_upper"]))
def test_chernoff_bounds_in_unit_interval(mu, eps, kind):
    v = TailBoundSpec(kind, mu, eps).value
    assert 0 <= v <= 1
    assert TailBoundSpec("chernoff_lower", mu, eps).value <= 1


def test_chernoff_at_epsilon_schedule_is_n_squared():
    n = 2000
    exp = ExpectationTable.from_moments(n, expected_path_loss(LOSS), 0.01)
    eps = compute_epsilons(n, exp)
    mu = (n - 1) * exp.E_L
    assert TailBoundSpec("chernoff_lower", mu, eps.eps1).value == pytest.approx(n**-2)
    assert TailBoundSpec("chernoff_upper", mu, eps.eps1_prime).value == pytest.approx(n**-2)


def test_random_subset_is_uniform():
    rng = np.random.default_rng(0)
    counts = Counter(tuple(random_subset(5, 2, rng)) for _ in range(20_000))
    assert len(counts) == 10
    expected = 2000
    chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
    assert chi2 < 27.9  # 99.9% point of chi-square with 9 dof


# --- reports --------------------------------------------------------------------


def test_report_round_trip():
    rep = run_interference_experiment(config(trials=3))
    again = ConcentrationReport.from_dict(json.loads(rep.to_json()))
    assert again.to_dict() == rep.to_dict()
    assert 0 <= rep.lower_tail_freq <= 1 and 0 <= rep.upper_tail_freq <= 1
    assert len(rep.series["interference"]) == 300


def test_interference_experiment_is_deterministic(monkeypatch):
    a = run_interference_experiment(config(trials=4))
    monkeypatch.setenv("SINRCAP_THREADS", "3")
    b = run_interference_experiment(config(trials=4))
    assert a.to_dict() == b.to_dict()
    assert a.series == b.series


def test_interference_tails_shrink_with_n():
    small = run_interference_experiment(config(n=50, m=10, trials=100))
    big = run_interference_experiment(config(n=2000, m=10, trials=3))
    assert big.lower_tail_freq <= small.lower_tail_freq
    assert big.upper_tail_freq <= small.upper_tail_freq


def test_doubled_epsilon_empties_lower_tail():
    cfg = config(n=2000, m=10, trials=2)
    rep = run_interference_experiment(cfg)
    eps1 = rep.thresholds["eps_lower"]
    J = np.array([row[2] for row in rep.series["interference"]])
    assert np.all(J > (1 - 2 * eps1) * rep.thresholds["mean"])


def test_heterogeneous_interference_quantity():
    rep = run_interference_experiment(config(scenario="heterogeneous", power=UNIF, trials=2))
    assert rep.quantity == "InterferenceI"
    assert rep.thresholds["mean"] == pytest.approx((300 - 1) * 0.015 * expected_path_loss(LOSS))


def test_cut_experiment_small():
    rep = run_cut_experiment(config(trials=15))
    assert rep.quantity == "CutCapacityK"
    assert rep.extras["sandwich_violations"] == 0
    assert rep.extras["link_sandwich_violations"] == 0
    assert len(rep.series["cuts"]) == 15


def test_cut_samples_extremes():
    cfg = config(trials=5)
    data = cut_samples(cfg, [0, cfg.m])
    assert data["C"].shape == (5, 2)
    assert np.all(data["C_prime"] <= data["C_dprime"])
    with pytest.raises(ValueError):
        cut_samples(cfg, [cfg.m + 1])


def test_capacity_experiment_small():
    cfg = config(m=12, l=2, trials=20)
    rep = run_capacity_experiment(cfg, with_coupled=True)
    assert rep.extras["source_cut_violations"] == 0
    assert rep.extras["sandwich_violations"] == 0
    assert all(len(row) == 4 for row in rep.series["capacity"])
    ea = capacity_epsilons(cfg, expectations_for(cfg))
    assert ea["upper"] / ea["lower"] == pytest.approx(math.sqrt(1.5))


def test_capacity_epsilons_heterogeneous_variants():
    cfg = config(scenario="heterogeneous", power=UNIF, m=30, eta=2.0)
    exp = ExpectationTable(E_L=0.0, E_J=0.0, E_P=0.0, E_I=0.0, C_bar=0.01)
    ea = capacity_epsilons(cfg, exp)
    expected = 2.0 / (30 * 0.01) * math.sqrt(2 * 30 * math.log(30))
    assert ea["lower"] == pytest.approx(expected)
    assert ea["lower_eta_plus_1"] == pytest.approx(expected * 1.5)


def test_annulus_degenerate_power_range():
    flat = PowerModel.uniform(0.015, 0.015)
    rep = run_annulus_experiment(config(scenario="heterogeneous", power=flat, n=2000, m=10, trials=2))
    assert rep.empirical_mean == 0 and rep.upper_tail_freq == 0


def test_annulus_reports_missing_dprime_radii():
    rep = run_annulus_experiment(config(scenario="heterogeneous", power=UNIF, n=2000, m=10, trials=2))
    assert "dprime_unavailable" in rep.extras
    assert rep.extras["r_min_prime"] < rep.extras["r_max_prime"]


def test_annulus_rejects_constant_power():
    with pytest.raises(ValueError):
        run_annulus_experiment(config())


# --- bounded differences --------------------------------------------------------

BD_LOSS = PathLossModel(1e-3, 3.0, 0.01)
WIDE = PowerModel.uniform(0.01, 0.08)


def bd_instance(points, params=SinrParams(0.02, 0.2, 0.0), pm=WIDE):
    pts = np.asarray(points, dtype=float)
    return NetworkInstance(pts, np.full(len(pts), pm.p_min), pm, BD_LOSS, params)


def grid_oracle(inst, roles, t, cut, which=SinrSource.PRIME, grid=200_001):
    """Brute-force averaging over a fine power grid, one transmitter at a time."""
    exp = ExpectationTable.from_moments(inst.n, expected_path_loss(inst.loss), inst.power_model.mean)
    eps = compute_epsilons(inst.n, exp)
    v = coupled_threshold(inst.sinr, which, eps, exp)
    P = np.linspace(inst.power_model.p_min, inst.power_model.p_max, grid)
    by_tx = {}
    for a, b in martingale_sequence(roles, t, cut):
        L = path_loss(inst.loss, torus_distance(inst.points[a], inst.points[b]))
        by_tx.setdefault(a, []).append(P * L >= v)
    worst = 0.0
    for ys in by_tx.values():
        Y = np.array(ys)
        for l in range(len(Y)):
            for prefix in itertools.product((False, True), repeat=l):
                keep = np.all(Y[:l] == np.array(prefix, dtype=bool)[:, None], axis=0) if l else np.ones(grid, bool)
                on, off = keep & Y[l], keep & ~Y[l]
                if on.sum() < 100 or off.sum() < 100:
                    continue
                tail = Y[l:].sum(axis=0)
                worst = max(worst, abs(tail[on].mean() - tail[off].mean()))
    return worst * inst.sinr.R


def test_independent_links_flip_by_exactly_r():
    # annulus for gamma = 0 is (0.1357, 0.2714]; every transmitter has one random link
    inst = bd_instance([[0.1, 0.1], [0.5, 0.1], [0.3, 0.1], [0.9, 0.6]])
    roles = RoleAssignment(0, (3,), (1, 2))
    diff, holds = bounded_difference_check(inst, roles, 3, CutSpec({1}), eta=1.0)
    assert diff == pytest.approx(1.0) and holds


def test_sparse_relays_stay_below_r():
    pts = [[0.05, 0.05], [0.05, 0.55], [0.55, 0.05], [0.55, 0.55], [0.3, 0.3]]
    inst = bd_instance(pts, SinrParams(0.02, 0.2, 0.02))
    roles = RoleAssignment(0, (4,), (1, 2, 3))
    for side in ({1}, {1, 2}, set()):
        diff, holds = bounded_difference_check(inst, roles, 4, CutSpec(side), eta=1.0)
        assert diff <= 1.0 and holds


def test_dense_cluster_detected():
    pts = [[0.5, 0.5], [0.65, 0.5], [0.5, 0.68], [0.3, 0.4], [0.0, 0.0]]
    inst = bd_instance(pts)
    roles = RoleAssignment(0, (4,), (1, 2, 3))
    diff, holds = bounded_difference_check(inst, roles, 4, CutSpec(()), eta=1.0)
    assert diff > 1.0 and not holds
    assert not transmitters_annulus_ok(inst, roles, 4, CutSpec(()), 1.0)
    assert diff == pytest.approx(grid_oracle(inst, roles, 4, CutSpec(())), abs=1e-3)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_bounded_difference_matches_grid_oracle(seed, m):
    rng = np.random.default_rng(seed)
    inst = NetworkInstance.random(m + 3, WIDE, BD_LOSS, SinrParams(0.02, 0.2, 0.02), rng)
    roles = RoleAssignment.random(inst.n, 1, m, rng)
    t = roles.destinations[0]
    cut = CutSpec(rng.choice(roles.relays, int(rng.integers(0, m + 1)), replace=False))
    diff, _ = bounded_difference_check(inst, roles, t, cut, eta=1.0)
    assert diff == pytest.approx(grid_oracle(inst, roles, t, cut), abs=1e-3)


def test_constant_power_has_no_randomness():
    pm = PowerModel.constant(0.03)
    inst = bd_instance([[0.1, 0.1], [0.3, 0.1], [0.5, 0.1], [0.9, 0.6]], pm=pm)
    diff, holds = bounded_difference_check(inst, RoleAssignment(0, (3,), (1, 2)), 3, CutSpec({1}), eta=1.0)
    assert diff == 0 and holds


def test_bounded_difference_size_limit():
    inst = NetworkInstance.random(20, WIDE, BD_LOSS, PARAMS, 0)
    roles = RoleAssignment(0, (1,), tuple(range(2, 15)))
    with pytest.raises(InstanceTooLarge):
        bounded_difference_check(inst, roles, 1, CutSpec(()), eta=1.0)
