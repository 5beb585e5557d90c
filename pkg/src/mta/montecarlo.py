"""Resource-extraction experiments: model, panel simulation, fit metrics, sweeps."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .ddc import DdcModel, EstimationResult, ModelSolution, estimate
from .errors import ValidationError
from .shocks import (
    MultivariateNormal,
    ShockSpec,
    StateDependentNormalMixture,
    derive_seed,
    discretize,
    sample,
)
from .transport import identified_set_bounds, invert_ccp

__all__ = [
    "ResourceModelSpec",
    "PanelData",
    "FitMetrics",
    "build_resource_model",
    "resource_shock_spec",
    "simulate_panel",
    "estimate_ccp_and_transitions",
    "fit_metrics",
    "simplex_grid",
    "shrinkage_sweep",
    "write_sweep_csv",
    "McDesign",
    "Replication",
    "true_solution",
    "run_replication",
    "run_montecarlo",
    "summarize",
]

DEFAULT_PI = (0.3, 0.35, 0.25, 0.10)
DEFAULT_COV = ((0.5, 0.5), (0.5, 1.0))


@dataclass(frozen=True, eq=False)
class ResourceModelSpec:
    n_states: int = 30
    pi: tuple = DEFAULT_PI
    beta: float = 0.9
    cov: tuple = DEFAULT_COV

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        if pi.shape != (4,) or (pi < 0).any() or abs(pi.sum() - 1) > 1e-12:
            raise ValidationError(f"pi must be a nonnegative 4-vector summing to 1, got {self.pi}")
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (2, 2) or not np.allclose(cov, cov.T) or np.linalg.eigvalsh(cov).min() < -1e-12:
            raise ValidationError("cov must be a symmetric PSD 2 x 2 matrix")
        if self.n_states < 4:
            raise ValidationError("n_states must be at least 4")
        if not 0 <= self.beta < 1:
            raise ValidationError("beta must lie in [0, 1)")


def resource_shock_spec(spec: ResourceModelSpec = ResourceModelSpec()) -> MultivariateNormal:
    """Three-action law with (eps_0 - eps_2, eps_1 - eps_2) ~ N(0, cov) and eps_2 = 0."""
    cov = np.zeros((3, 3))
    cov[:2, :2] = np.asarray(spec.cov, dtype=float)
    return MultivariateNormal(mean=np.zeros(3), cov=cov)


def build_resource_model(spec: ResourceModelSpec = ResourceModelSpec()) -> DdcModel:
    """States 1..n (stored as positions 0..n-1), actions full / partial / no extraction.

    Support points that coincide (small states under partial extraction) are
    merged by summing their probabilities; growth beyond the top state stacks on
    the top state.
    """
    n = spec.n_states
    pi = np.asarray(spec.pi, dtype=float)
    labels = np.arange(1, n + 1)
    P = np.zeros((3, n, n))
    for i, x in enumerate(labels):
        for k in range(4):
            targets = (
                k + 1,
                max(k + 1, x - 10 + k),
                min(x + k, n),
            )
            for y, t in enumerate(targets):
                P[y, i, t - 1] += pi[k]
    root = np.sqrt(labels)
    flows = np.vstack([0.5 * root - 2.0, 0.4 * root - 2.0, np.zeros(n)])
    return DdcModel(beta=spec.beta, transitions=P, flows=flows, shocks=resource_shock_spec(spec),
                    benchmark=2, states=labels, actions=np.arange(3))


@dataclass(frozen=True, eq=False)
class PanelData:
    """One record per (agent, period); states and actions are 0-based positions."""

    agent: np.ndarray
    period: np.ndarray
    state: np.ndarray
    action: np.ndarray
    n_states: int
    n_actions: int

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=np.int64) for a in (self.agent, self.period, self.state, self.action)]
        if len({a.shape for a in arrs}) != 1 or arrs[0].ndim != 1:
            raise ValidationError("panel columns must be 1-d arrays of equal length")
        if arrs[0].size and (arrs[2].min() < 0 or arrs[2].max() >= self.n_states):
            raise ValidationError("panel state outside the state space")
        if arrs[0].size and (arrs[3].min() < 0 or arrs[3].max() >= self.n_actions):
            raise ValidationError("panel action outside the action space")
        for name, a in zip(("agent", "period", "state", "action"), arrs):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def N(self) -> int:
        return int(np.unique(self.agent).size)

    @property
    def T(self) -> int:
        return int(np.unique(self.period).size)

    def __len__(self):
        return self.agent.size

    def transitions_observed(self):
        """(x, y, x_next) for consecutive periods of the same agent."""
        order = np.lexsort((self.period, self.agent))
        a, t = self.agent[order], self.period[order]
        x, y = self.state[order], self.action[order]
        nxt = (a[1:] == a[:-1]) & (t[1:] == t[:-1] + 1)
        return x[:-1][nxt], y[:-1][nxt], x[1:][nxt]

    def to_csv(self, path, state_labels=None) -> None:
        lab = np.arange(self.n_states) if state_labels is None else np.asarray(state_labels)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["i", "t", "x", "y"])
            for row in zip(self.agent.tolist(), self.period.tolist(), lab[self.state].tolist(),
                           self.action.tolist()):
                writer.writerow(row)


def simulate_panel(solution: ModelSolution, model: DdcModel, N: int, T: int, seed: int,
                   initial=None) -> PanelData:
    """Forward-simulate N agents for T periods with fresh continuous shocks each period.

    Initial states are uniform on the state space unless ``initial`` gives a
    probability vector over states.
    """
    if N < 1 or T < 1:
        raise ValidationError("N and T must be positive")
    if model.shocks is None:
        raise ValidationError("model has no shock law to simulate from")
    rng = np.random.default_rng(seed)
    n = model.n_states
    init = np.full(n, 1.0 / n) if initial is None else np.asarray(initial, dtype=float)
    cdf = np.cumsum(model.transitions, axis=2)
    cdf[..., -1] = 1.0
    x = np.minimum(np.searchsorted(np.cumsum(init), rng.random(N), side="right"), n - 1)
    states = np.empty((T, N), np.int64)
    actions = np.empty((T, N), np.int64)
    for t in range(T):
        if isinstance(model.shocks, StateDependentNormalMixture):
            eps = sample(model.shocks, N, rng, state=model.states[x])
        else:
            eps = sample(model.shocks, N, rng)
        y = np.argmax(solution.w[:, x].T + eps, axis=1)
        states[t] = x
        actions[t] = y
        u = rng.random(N)
        x = (cdf[y, x] <= u[:, None]).sum(axis=1)
        np.minimum(x, n - 1, out=x)
    agent = np.tile(np.arange(N), T)
    period = np.repeat(np.arange(1, T + 1), N)
    return PanelData(agent=agent, period=period, state=states.ravel(), action=actions.ravel(),
                     n_states=n, n_actions=model.n_actions)


@dataclass(frozen=True, eq=False)
class FrequencyEstimates:
    ccp: np.ndarray          # |X| x |Y|, NaN rows at unvisited states
    transitions: np.ndarray  # |Y| x |X| x |X|, NaN rows where (x, y) has no observed move
    visits: np.ndarray       # |X|
    action_counts: np.ndarray  # |X| x |Y|

    @property
    def visited(self) -> np.ndarray:
        return self.visits > 0

    @property
    def transition_filled(self) -> np.ndarray:
        return np.isfinite(self.transitions).all(axis=2)


def estimate_ccp_and_transitions(panel: PanelData, n_states: int | None = None,
                                 n_actions: int | None = None) -> FrequencyEstimates:
    """Frequency estimators of CCPs and per-action transition matrices."""
    if len(panel) == 0:
        raise ValidationError("panel is empty")
    nx = panel.n_states if n_states is None else n_states
    ny = panel.n_actions if n_actions is None else n_actions
    counts = np.bincount(panel.state * ny + panel.action, minlength=nx * ny).reshape(nx, ny)
    visits = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ccp = counts / visits[:, None]
    x, y, x1 = panel.transitions_observed()
    moves = np.bincount((y * nx + x) * nx + x1, minlength=ny * nx * nx).reshape(ny, nx, nx)
    tot = moves.sum(axis=2, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        trans = moves / tot
    return FrequencyEstimates(ccp=ccp, transitions=trans, visits=visits, action_counts=counts)


@dataclass(frozen=True)
class FitMetrics:
    rmse: dict
    r2: dict
    states_used: tuple


def fit_metrics(estimated, true, identified, benchmark: int | None = None) -> FitMetrics:
    """RMSE and R^2 of estimated flows per non-benchmark action over identified states."""
    est = np.asarray(estimated, dtype=float)
    tru = np.asarray(true, dtype=float)
    mask = np.asarray(identified)
    if mask.dtype != bool:
        m = np.zeros(tru.shape[1], bool)
        m[mask] = True
        mask = m
    if est.shape != tru.shape or mask.shape != (tru.shape[1],):
        raise ValidationError("estimated, true and identified disagree in shape")
    if not mask.any():
        raise ValidationError("no identified states to evaluate")
    rmse, r2 = {}, {}
    for y in range(tru.shape[0]):
        if y == benchmark:
            continue
        e, t = est[y, mask], tru[y, mask]
        err = e - t
        rmse[y] = float(np.sqrt(np.mean(err**2)))
        ss_tot = float(np.sum((t - t.mean()) ** 2))
        r2[y] = float(1.0 - np.sum(err**2) / ss_tot) if ss_tot > 0 else float("nan")
    return FitMetrics(rmse=rmse, r2=r2, states_used=tuple(np.flatnonzero(mask).tolist()))


def simplex_grid(n: int = 7, dim: int = 3, decimals: int | None = 2) -> np.ndarray:
    """Interior grid points k/n of the simplex (all k >= 1).

    With ``decimals`` set, points are rounded to that many decimals by largest
    remainder so that they still sum to one; for n=7, dim=3 this yields 15
    points whose masses are whole multiples of 1/100.
    """
    pts = [k for k in product(range(1, n), repeat=dim) if sum(k) == n]
    grid = np.array(pts, dtype=float) / n
    if decimals is None:
        return grid
    unit = 10**decimals
    out = np.empty_like(grid)
    for i, g in enumerate(grid):
        raw = g * unit
        base = np.floor(raw)
        short = int(unit - base.sum())
        base[np.argsort(-(raw - base), kind="stable")[:short]] += 1
        out[i] = base / unit
    return out


@dataclass(frozen=True, eq=False)
class SweepRow:
    p: tuple
    S: int
    seed: int
    width: np.ndarray

    @property
    def max_width(self) -> float:
        return float(self.width.max())


def shrinkage_sweep(grid, S_list, seeds, shock_spec: ShockSpec, master_seed: int = 0) -> list[SweepRow]:
    """Identified-set widths for every (p, S, seed) combination.

    The discretization for (S, seed) is shared across grid points.
    """
    rows = []
    for S in S_list:
        for seed in seeds:
            shocks = discretize(shock_spec, int(S), derive_seed(master_seed, int(S), int(seed)))
            for p in np.asarray(grid, dtype=float):
                res = invert_ccp(p, shocks)
                b = identified_set_bounds(p, shocks, res.solution)
                rows.append(SweepRow(p=tuple(p.tolist()), S=int(S), seed=int(seed), width=b.width))
    return rows


def write_sweep_csv(rows, path, header_comment=None) -> None:
    m = len(rows[0].p) if rows else 0
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow([f"p{k + 1}" for k in range(m)] + ["S", "seed"] + [f"width_y{k}" for k in range(m)])
        for r in rows:
            writer.writerow([repr(v) for v in r.p] + [r.S, r.seed] + [repr(float(v)) for v in r.width])


# ---------------------------------------------------------------- replications

@dataclass(frozen=True)
class McDesign:
    N: int = 1000
    T: int = 1000
    replications: int = 20
    S_true: int = 5000
    S_est: int = 2000
    seed: int = 2015
    estimated_transitions: bool = True


@dataclass(frozen=True, eq=False)
class Replication:
    index: int
    metrics: FitMetrics | None
    n_identified: int
    failure: str = ""


def true_solution(spec: ResourceModelSpec, S_true: int, seed: int):
    model = build_resource_model(spec)
    shocks = discretize(model.shocks, S_true, derive_seed(seed, 0))
    from .ddc import solve_model

    return model, solve_model(model, shocks)


def run_replication(model: DdcModel, solution: ModelSolution, design: McDesign, r: int) -> Replication:
    panel = simulate_panel(solution, model, design.N, design.T, derive_seed(design.seed, 1, r))
    freq = estimate_ccp_and_transitions(panel)
    shocks = discretize(model.shocks, design.S_est, derive_seed(design.seed, 2, r))
    trans = freq.transitions if design.estimated_transitions else model.transitions
    try:
        est = estimate_for_panel(freq, trans, model, shocks)
    except (ValueError, RuntimeError) as exc:
        return Replication(index=r, metrics=None, n_identified=0, failure=str(exc))
    metrics = fit_metrics(est.flows, model.flows, est.identified, benchmark=model.benchmark)
    return Replication(index=r, metrics=metrics, n_identified=int(est.identified.sum()))


def estimate_for_panel(freq: FrequencyEstimates, transitions, model: DdcModel, shocks) -> EstimationResult:
    """Estimate on frequency CCPs; boundary-CCP states enter W through the boundary LP."""
    return estimate(freq.ccp, transitions, model.beta, shocks, model.benchmark,
                    state_labels=model.states)


def run_montecarlo(design: McDesign, spec: ResourceModelSpec = ResourceModelSpec(), jobs: int = 1):
    model, sol = true_solution(spec, design.S_true, design.seed)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futs = [ex.submit(run_replication, model, sol, design, r) for r in range(design.replications)]
            reps = [f.result() for f in futs]
    else:
        reps = [run_replication(model, sol, design, r) for r in range(design.replications)]
    return model, sol, reps


def summarize(reps) -> dict:
    """Mean and standard deviation of each metric across successful replications."""
    ok = [r.metrics for r in reps if r.metrics is not None]
    out = {"replications": len(reps), "succeeded": len(ok)}
    if not ok:
        return out
    for name in ("rmse", "r2"):
        for y in ok[0].rmse:
            vals = np.array([getattr(m, name)[y] for m in ok])
            out[f"{name}_y{y}_mean"] = float(np.mean(vals))
            out[f"{name}_y{y}_std"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return out
