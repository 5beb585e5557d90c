"""Acceptance checks 1-9.  Each test records one PASS/FAIL line shown in the run summary."""

from itertools import combinations

import numpy as np
import pytest
from scipy.optimize import linprog

from mta.cli import main
from mta.dataio import BusConfig, discretize_mileage, estimate_bus, simulate_bus_records
from mta.ddc import estimate, ex_ante_values, solve_model
from mta.errors import IdentificationError
from mta.montecarlo import (
    McDesign,
    ResourceModelSpec,
    build_resource_model,
    resource_shock_spec,
    run_montecarlo,
    shrinkage_sweep,
    simplex_grid,
    summarize,
)
from mta.shocks import DiscreteShocks, GumbelIID, discretize
from mta.surplus import EULER_GAMMA, surplus_value
from mta.transport import TransportProblem, invert_ccp, solve_transport

# ----------------------------------------------------------------- 1

LOGIT_CASES = [np.array([0.5, 0.5]), np.array([0.2, 0.8]), np.full(3, 1 / 3)]


def test_c1_logit_oracle_convergence(criterion):
    mean_err = {}
    for S in (1_000, 10_000, 100_000):
        errs = []
        for p in LOGIT_CASES:
            for seed in range(5):
                sh = discretize(GumbelIID(dim=p.size), S, seed)
                errs.append(np.abs(invert_ccp(p, sh).w0 - (np.log(p) - EULER_GAMMA)).max())
        mean_err[S] = float(np.mean(errs))
    e3, e4, e5 = mean_err[1_000], mean_err[10_000], mean_err[100_000]
    ok = e3 <= 0.1 and e4 <= 0.03 and e3 > e4 > e5
    criterion("criterion 1 (logit oracle)", ok, f"mean sup error S=1e3 {e3:.4f}, 1e4 {e4:.4f}, 1e5 {e5:.4f}")


# ----------------------------------------------------------------- 2 and 3

def _constraints(m, S):
    A = np.zeros((m + S, m * S))
    for y in range(m):
        A[y, y * S:(y + 1) * S] = 1.0
    for s in range(S):
        A[m + s, s::S] = 1.0
    return A


def _vertex_best(p, eps):
    S, m = eps.shape
    A = _constraints(m, S)
    b = np.concatenate([p, np.full(S, 1.0 / S)])
    c = eps.T.reshape(-1)
    rank = np.linalg.matrix_rank(A)
    best = -np.inf
    for basis in combinations(range(m * S), rank):
        B = A[:, basis]
        if np.linalg.matrix_rank(B) < rank:
            continue
        x, *_ = np.linalg.lstsq(B, b, rcond=None)
        if np.abs(B @ x - b).max() <= 1e-10 and x.min() >= -1e-12:
            best = max(best, float(c[list(basis)] @ x))
    return best


def _instances(n=200):
    rng = np.random.default_rng(20150)
    out = []
    for k in range(n):
        small = k < 60
        m = int(rng.integers(2, 4 if small else 5))
        S = int(rng.integers(1, 5 if small else 51))
        eps = rng.normal(size=(S, m))
        if k % 5 == 0:
            eps = np.round(eps)  # ties
        p = rng.dirichlet(np.ones(m))
        p[-1] = 1.0 - p[:-1].sum()
        out.append((p, DiscreteShocks(eps)))
    return out


@pytest.fixture(scope="module")
def lp_instances():
    return _instances()


def test_c2_lp_structure(criterion, lp_instances):
    worst = {"primal": 0.0, "gap": 0.0, "cs": 0.0, "dual": 0.0, "vertex": 0.0, "highs": 0.0}
    n_vertex = 0
    for p, sh in lp_instances:
        eps = sh.points
        sol = solve_transport(TransportProblem(p, sh))
        pi = sol.coupling
        worst["primal"] = max(worst["primal"], np.abs(pi.sum(axis=1) - p).max(),
                              np.abs(pi.sum(axis=0) - 1 / sh.S).max(), max(0.0, -pi.min()))
        worst["gap"] = max(worst["gap"], abs(sol.primal_objective - sol.dual_objective)
                           / (1 + abs(sol.primal_objective)))
        slack = sol.lam[:, None] + sol.z[None, :] - eps.T
        worst["dual"] = max(worst["dual"], max(0.0, -slack.min()))
        worst["cs"] = max(worst["cs"], float(np.abs(slack * pi).max()))
        res = linprog(-eps.T.reshape(-1), A_eq=_constraints(sh.n_actions, sh.S),
                      b_eq=np.concatenate([p, np.full(sh.S, 1 / sh.S)]), bounds=(0, None), method="highs")
        worst["highs"] = max(worst["highs"], abs(-res.fun - sol.primal_objective))
        if sh.n_actions <= 3 and sh.S <= 4:
            n_vertex += 1
            worst["vertex"] = max(worst["vertex"], abs(_vertex_best(p, eps) - sol.primal_objective))
    ok = (worst["primal"] <= 1e-10 and worst["gap"] <= 1e-9 and worst["dual"] <= 1e-9
          and worst["cs"] <= 1e-10 and worst["vertex"] <= 1e-9 and worst["highs"] <= 1e-8 and n_vertex >= 50)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {n_vertex} enumerated"
    criterion("criterion 2 (LP structure, 200 instances)", ok, detail)


def test_c3_normalization_and_fenchel(criterion, lp_instances):
    g_err = f_err = 0.0
    for p, sh in lp_instances:
        res = invert_ccp(p, sh)
        g_err = max(g_err, abs(surplus_value(res.w0, sh)))
        f_err = max(f_err, abs(res.gstar - float(p @ res.w0)))
    ok = g_err <= 1e-8 and f_err <= 1e-8
    criterion("criterion 3 (G(w0)=0, Fenchel equality)", ok, f"max |G(w0)| {g_err:.1e}, max Fenchel {f_err:.1e}")


# ----------------------------------------------------------------- 4

def _shrinkage(grid):
    """Share of grid points with max width <= 0.01, averaged over 5 discretization seeds."""
    rows = shrinkage_sweep(grid, [100, 300, 1000], range(5), resource_shock_spec(), master_seed=2015)
    share, median, per_seed = {}, {}, {}
    for S in (100, 300, 1000):
        w = np.array([[r.max_width for r in rows if r.S == S and r.p == tuple(g)] for g in grid.tolist()])
        per_seed[S] = (w <= 0.01).mean(axis=0)
        share[S] = float(per_seed[S].mean())
        median[S] = float(np.median(w))
    return share, median, per_seed


@pytest.mark.parametrize("decimals", [None, 2], ids=["grid_k_over_7", "grid_rounded_0.01"])
def test_c4_identified_set_shrinkage(criterion, decimals):
    grid = simplex_grid(7, 3, decimals=decimals)
    assert len(grid) == 15
    share, med, per_seed = _shrinkage(grid)
    ok = share[1000] >= 0.9 and med[100] >= med[300] >= med[1000]
    label = "exact k/7" if decimals is None else "rounded to 0.01"
    seeds = " ".join(f"{v:.2f}" for v in per_seed[1000])
    criterion(f"criterion 4 (shrinkage, {label})", ok,
              f"share <= 0.01 at S=1000 {share[1000]:.3f} (per seed {seeds}); median widths "
              f"{med[100]:.4f} >= {med[300]:.4f} >= {med[1000]:.4f}")


# ----------------------------------------------------------------- 5

def test_c5_exact_ccp_recovery(criterion):
    model = build_resource_model(ResourceModelSpec(beta=0.9))
    shocks = discretize(model.shocks, 5000, 2015)
    sol = solve_model(model, shocks)
    res = estimate(sol.ccp, model.transitions, model.beta, shocks, model.benchmark)
    idx = res.identified_states
    err = float(np.abs(res.flows - model.flows)[:, idx].max())
    bench = float(np.abs(res.flows[model.benchmark, idx]).max())
    ok = idx.size > 0 and err <= 0.05 and bench <= 1e-8
    criterion("criterion 5 (exact-CCP recovery)", ok,
              f"{idx.size} interior states; max flow error {err:.4f}; max |benchmark flow| {bench:.1e}")


# ----------------------------------------------------------------- 6

TARGET_RMSE, TARGET_RMSE_SD = 0.0543, 0.0176
TARGET_R2, TARGET_R2_SD = 0.9820, 0.0101


def _mc(N, T, reps):
    design = McDesign(N=N, T=T, replications=reps, S_true=5000, S_est=2000, seed=2015)
    _, _, results = run_montecarlo(design)
    return summarize(results)


@pytest.fixture(scope="module")
def mc_large():
    return _mc(1000, 1000, 20)


def test_c6_monte_carlo_full(criterion, mc_large):
    s = mc_large
    rmse, r2 = s["rmse_y0_mean"], s["r2_y1_mean"]
    ok = (s["succeeded"] == 20 and abs(rmse - TARGET_RMSE) <= 3 * TARGET_RMSE_SD
          and abs(r2 - TARGET_R2) <= 3 * TARGET_R2_SD)
    criterion("criterion 6 (Monte Carlo N=T=1000, 20 reps)", ok,
              f"mean RMSE y0 {rmse:.4f} (band {TARGET_RMSE:.4f}+-{3 * TARGET_RMSE_SD:.4f}); "
              f"mean R2 y1 {r2:.4f} (band {TARGET_R2:.4f}+-{3 * TARGET_R2_SD:.4f})")


def test_c6_monte_carlo_quick(criterion):
    s = _mc(1000, 1000, 5)
    rmse, r2 = s["rmse_y0_mean"], s["r2_y1_mean"]
    ok = abs(rmse - TARGET_RMSE) <= 5 * TARGET_RMSE_SD and abs(r2 - TARGET_R2) <= 5 * TARGET_R2_SD
    criterion("criterion 6 (quick, 5 reps, 5 sd bands)", ok, f"mean RMSE y0 {rmse:.4f}; mean R2 y1 {r2:.4f}")


def test_c6_small_design_ordering(criterion, mc_large):
    small = _mc(100, 100, 20)
    ok = small["rmse_y0_mean"] > mc_large["rmse_y0_mean"] and small["rmse_y1_mean"] > mc_large["rmse_y1_mean"]
    criterion("criterion 6 (ordering N=T=100 vs 1000)", ok,
              f"RMSE y0 {small['rmse_y0_mean']:.4f} vs {mc_large['rmse_y0_mean']:.4f}; "
              f"RMSE y1 {small['rmse_y1_mean']:.4f} vs {mc_large['rmse_y1_mean']:.4f}")


# ----------------------------------------------------------------- 7

def test_c7_second_step_linear_algebra(criterion):
    rng = np.random.default_rng(7)
    worst = 0.0
    beta0_exact = True
    for n in (1, 2, 10, 100, 500):
        for beta in (0.0, 0.5, 0.9, 0.99):
            for sparse in (False, True):
                P0 = rng.random((n, n)) ** (8 if sparse else 1)
                P0 /= P0.sum(axis=1, keepdims=True)
                W = rng.normal(size=n) * 10
                V = ex_ante_values(W, P0, beta)
                worst = max(worst, np.abs((beta * P0 - np.eye(n)) @ V - W).max() / (1 + np.abs(W).max()))
                if beta == 0.0:
                    beta0_exact &= bool(np.array_equal(V, -W))
    ok = worst <= 1e-10 and beta0_exact
    criterion("criterion 7 (second-step residual)", ok,
              f"max scaled residual {worst:.1e}; beta=0 gives -W exactly: {beta0_exact}")


# ----------------------------------------------------------------- 8

BUS_STATES = slice(9, 26)


def _bus_check(keep_flow, label, criterion):
    recs, _, _ = simulate_bus_records(np.full(30, keep_flow), theta=0.7405, a=0.1, b=0.5,
                                      n_buses=200, n_periods=400, seed=2015, S=2000)
    panel = discretize_mileage(recs)
    n_rep = int(panel.replacements_by_state().sum())
    try:
        est = estimate_bus(panel, BusConfig(S=2000, seed=1))
    except IdentificationError as exc:
        criterion(label, False, f"{n_rep} replacements in the synthetic panel; estimation failed: {exc}")
        return
    f = est.flows_keep[BUS_STATES]
    err = float(np.nanmax(np.abs(f - keep_flow))) if np.isfinite(f).any() else np.inf
    ok = bool(np.isfinite(f).all() and est.interior[BUS_STATES].all() and err <= 0.5)
    criterion(label, ok, f"{n_rep} replacements; states 9-25 max error {err:.3f}, "
                         f"range [{np.nanmin(f):.3f}, {np.nanmax(f):.3f}]")


def test_c8_bus_pipeline_flat_9_25(criterion):
    _bus_check(9.25, "criterion 8 (bus pipeline, keep flow 9.25)", criterion)


def test_c8_bus_pipeline_flat_2_supplemental(criterion):
    _bus_check(2.0, "criterion 8 supplemental (bus pipeline, keep flow 2.0)", criterion)


# ----------------------------------------------------------------- 9

CONFIGS = {
    "invert": "seed = 9\nshocks.family = gumbel\nshocks.dim = 3\ndiscretization.S = 2000\n"
              "invert.p = 0.2,0.3,0.5; 0.6,0.2,0.2\n",
    "estimate": "seed = 9\nestimation.source = resource\ndiscretization.S = 1000\n",
    "montecarlo": "seed = 9\nmontecarlo.N = 100\nmontecarlo.T = 50\nmontecarlo.replications = 3\n"
                  "montecarlo.S_true = 1000\nmontecarlo.S_est = 500\n",
    "sweep": "seed = 9\nshocks.family = resource\nsweep.S = 100,300\nsweep.seeds = 0,1\n",
    "bootstrap": "seed = 9\nshocks.family = bus_mixture\nbus.S = 300\nbus.synthetic_keep_flow = 2.0\n"
                 "bus.synthetic_buses = 60\nbus.synthetic_periods = 200\nbootstrap.B = 4\n",
}


def test_c9_cli_determinism(criterion, tmp_path):
    mismatched, checked, failed = [], 0, []
    for command, text in CONFIGS.items():
        cfg = tmp_path / f"{command}.cfg"
        cfg.write_text(text)
        flags = ["--bounds"] if command in ("invert", "estimate") else []
        for run in ("a", "b"):
            code = main([command, "--config", str(cfg), "--out", str(tmp_path / run / command)] + flags)
            if code != 0:
                failed.append(command)
        for path in sorted((tmp_path / "a" / command).glob("*.csv")):
            checked += 1
            if path.read_bytes() != (tmp_path / "b" / command / path.name).read_bytes():
                mismatched.append(f"{command}/{path.name}")
    ok = not mismatched and not failed and checked >= 7
    criterion("criterion 9 (CLI determinism)", ok,
              f"{checked} CSVs compared; mismatched {mismatched or 'none'}; failed commands {failed or 'none'}")
