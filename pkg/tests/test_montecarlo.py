import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mta.ddc import DdcModel, solve_model
from mta.errors import ValidationError
from mta.montecarlo import (
    McDesign,
    PanelData,
    ResourceModelSpec,
    build_resource_model,
    estimate_ccp_and_transitions,
    fit_metrics,
    resource_shock_spec,
    run_montecarlo,
    shrinkage_sweep,
    simplex_grid,
    simulate_panel,
    summarize,
    write_sweep_csv,
)
from mta.shocks import GumbelIID, discretize
from mta.surplus import choice_probs


@pytest.fixture(scope="module")
def resource():
    model = build_resource_model()
    sol = solve_model(model, discretize(model.shocks, 1000, 11))
    return model, sol


def test_resource_model_examples():
    m = build_resource_model()
    assert m.n_states == 30 and m.n_actions == 3 and m.benchmark == 2
    row = m.transitions[2, 0]  # no extraction from x = 1
    np.testing.assert_allclose(row[:4], [0.3, 0.35, 0.25, 0.10])
    assert row[4:].sum() == 0
    assert m.flows[0, 3] == pytest.approx(-1.0)  # full extraction at x = 4
    assert np.all(m.flows[2] == 0)
    np.testing.assert_allclose(m.transitions.sum(axis=2), 1.0, atol=1e-12)


def test_resource_model_targets():
    m = build_resource_model()
    # full extraction always restarts at 1..4
    np.testing.assert_allclose(m.transitions[0][:, :4], np.tile([0.3, 0.35, 0.25, 0.10], (30, 1)))
    # partial extraction from x = 20 leaves 10..13
    np.testing.assert_allclose(m.transitions[1, 19, 9:13], [0.3, 0.35, 0.25, 0.10])
    # growth from the top state stays at the top
    assert m.transitions[2, 29, 29] == pytest.approx(1.0, abs=1e-12)


def test_resource_spec_validation():
    with pytest.raises(ValidationError, match="pi"):
        ResourceModelSpec(pi=(0.5, 0.5, 0.5, 0.0))
    with pytest.raises(ValidationError, match="cov"):
        ResourceModelSpec(cov=((1.0, 2.0), (2.0, 1.0)))
    cov = resource_shock_spec().cov
    assert cov[2].tolist() == [0, 0, 0]


def test_panel_deterministic(resource):
    model, sol = resource
    a = simulate_panel(sol, model, 20, 15, seed=9)
    b = simulate_panel(sol, model, 20, 15, seed=9)
    for f in ("agent", "period", "state", "action"):
        assert getattr(a, f).tobytes() == getattr(b, f).tobytes()
    c = simulate_panel(sol, model, 20, 15, seed=10)
    assert c.action.tobytes() != a.action.tobytes()


def test_single_record_panel(resource):
    model, sol = resource
    p = simulate_panel(sol, model, 1, 1, seed=0)
    assert len(p) == 1 and p.N == 1 and p.T == 1
    assert p.transitions_observed()[0].size == 0
    with pytest.raises(ValidationError):
        simulate_panel(sol, model, 0, 5, seed=0)


def test_frequencies_converge_to_model(resource):
    model, sol = resource
    panel = simulate_panel(sol, model, 1000, 1000, seed=4)
    freq = estimate_ccp_and_transitions(panel)
    # simulation draws continuous shocks, so compare with a large independent draw
    big = discretize(model.shocks, 400_000, 99)
    ref = np.vstack([choice_probs(sol.w[:, x], big) for x in range(model.n_states)])
    busy = freq.visits >= 20_000
    assert busy.sum() >= 10
    assert np.abs(freq.ccp[busy] - ref[busy]).max() <= 0.01
    checked = 0
    for y in range(3):
        ok = freq.action_counts[:, y] >= 5_000
        if not ok.any():
            continue
        checked += 1
        assert np.abs(freq.transitions[y, ok] - model.transitions[y, ok]).max() <= 0.02
    assert checked >= 2


def test_frequency_examples():
    panel = PanelData(agent=[0, 0, 0, 1, 1], period=[1, 2, 3, 1, 2], state=[0, 1, 1, 0, 0],
                      action=[1, 0, 1, 1, 0], n_states=3, n_actions=2)
    f = estimate_ccp_and_transitions(panel)
    np.testing.assert_allclose(f.ccp[0], [1 / 3, 2 / 3])
    np.testing.assert_allclose(f.ccp[1], [0.5, 0.5])
    assert np.isnan(f.ccp[2]).all() and f.visits.tolist() == [3, 2, 0]
    np.testing.assert_allclose(f.transitions[1, 0], [0.5, 0.5, 0.0])
    np.testing.assert_allclose(f.transitions[0, 1], [0.0, 1.0, 0.0])
    assert np.isnan(f.transitions[0, 0]).all()  # (x=0, y=0) only ever in a final period
    assert f.transition_filled.tolist() == [[False, True, False], [True, False, False]]


def test_panel_rejects_out_of_range():
    with pytest.raises(ValidationError, match="state"):
        PanelData(agent=[0], period=[1], state=[3], action=[0], n_states=3, n_actions=2)
    with pytest.raises(ValidationError, match="action"):
        PanelData(agent=[0], period=[1], state=[0], action=[2], n_states=3, n_actions=2)


def test_panel_csv(tmp_path, resource):
    model, sol = resource
    p = simulate_panel(sol, model, 3, 2, seed=1)
    path = tmp_path / "panel.csv"
    p.to_csv(path, state_labels=model.states)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 6 and set(rows[0]) == {"i", "t", "x", "y"}
    assert all(1 <= int(r["x"]) <= 30 for r in rows)


def test_fit_metric_identities():
    rng = np.random.default_rng(0)
    true = rng.normal(size=(3, 10))
    perfect = fit_metrics(true, true, np.ones(10, bool), benchmark=2)
    assert perfect.rmse == {0: 0.0, 1: 0.0} and perfect.r2 == {0: 1.0, 1: 1.0}
    shifted = fit_metrics(true + 0.5, true, np.arange(10), benchmark=2)
    assert shifted.rmse[0] == pytest.approx(0.5)
    mean_only = np.tile(true.mean(axis=1, keepdims=True), (1, 10))
    assert fit_metrics(mean_only, true, np.ones(10, bool)).r2[1] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValidationError, match="no identified"):
        fit_metrics(true, true, np.zeros(10, bool))


def test_simplex_grid():
    exact = simplex_grid(7, 3, decimals=None)
    assert exact.shape == (15, 3) and (exact > 0).all()
    np.testing.assert_allclose(exact.sum(axis=1), 1.0)
    rounded = simplex_grid(7, 3, decimals=2)
    np.testing.assert_allclose(rounded.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(rounded * 100, np.round(rounded * 100), atol=1e-9)
    assert np.abs(rounded - exact).max() < 0.01


@settings(max_examples=20, deadline=None)
@given(n=st.integers(2, 9), dim=st.integers(2, 4))
def test_simplex_grid_counts(n, dim):
    from math import comb

    g = simplex_grid(n, dim, decimals=None)
    assert len(g) == comb(n - 1, dim - 1)


def test_sweep_rows_and_csv(tmp_path):
    grid = [[0.2, 0.3, 0.5], [1 / 7, 2 / 7, 4 / 7]]
    rows = shrinkage_sweep(grid, [50, 100], [0, 1], GumbelIID(dim=3), master_seed=3)
    assert len(rows) == 8
    assert all(r.width.shape == (3,) and (r.width >= -1e-9).all() for r in rows)
    # generic mass on a 1/7 grid point can not be split across 50 or 100 atoms
    assert all(r.max_width <= 1e-9 for r in rows if r.p[0] == pytest.approx(1 / 7))
    again = shrinkage_sweep(grid, [50, 100], [0, 1], GumbelIID(dim=3), master_seed=3)
    assert [r.width.tolist() for r in rows] == [r.width.tolist() for r in again]
    path = tmp_path / "sweep.csv"
    write_sweep_csv(rows, path, header_comment="test")
    lines = path.read_text().splitlines()
    assert lines[0] == "# test"
    assert lines[1] == "p1,p2,p3,S,seed,width_y0,width_y1,width_y2"
    assert len(lines) == 10


def test_small_montecarlo_runs():
    spec = ResourceModelSpec(n_states=8)
    design = McDesign(N=200, T=50, replications=2, S_true=300, S_est=200, seed=1)
    model, sol, reps = run_montecarlo(design, spec)
    assert len(reps) == 2
    s = summarize(reps)
    assert s["replications"] == 2
    if s["succeeded"]:
        assert s["rmse_y0_mean"] >= 0


def test_known_transitions_do_not_change_flows_at_beta_zero():
    # with beta = 0 the transitions drop out of the second step
    P = np.array([[[0.5, 0.5], [0.5, 0.5]], [[1.0, 0.0], [0.0, 1.0]]])
    m = DdcModel(beta=0.0, transitions=P, flows=np.array([[0.0, 0.0], [0.3, -0.2]]),
                 shocks=GumbelIID())
    sol = solve_model(m, discretize(GumbelIID(), 500, 1))
    from mta.ddc import estimate

    sh = discretize(GumbelIID(), 500, 1)
    a = estimate(sol.ccp, P, 0.0, sh, 0)
    b = estimate(sol.ccp, P[::-1], 0.0, sh, 0)
    np.testing.assert_allclose(a.flows, b.flows, atol=1e-12)
