"""Dynamic discrete choice: forward solution and two-step flow-utility recovery.

Arrays use the layout ``flows[y, x]``, ``w[y, x]``, ``transitions[y, x, x']``
and ``ccp[x, y]``; states and actions are 0-based positions, with display
labels kept on :class:`DdcModel`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, IdentificationError, NotInteriorError, ValidationError
from .shocks import DiscreteShocks, ShockSpec
from .surplus import check_ccp, choice_probs
from .transport import (
    IdentifiedSetBounds,
    TransportProblem,
    identified_set_bounds,
    invert_ccp,
    solve_transport,
)

ROW_TOL = 1e-12

__all__ = [
    "DdcModel",
    "ModelSolution",
    "EstimationResult",
    "check_transitions",
    "solve_model",
    "ex_ante_values",
    "utility_flows",
    "estimate",
]


def check_transitions(transitions) -> np.ndarray:
    P = np.asarray(transitions, dtype=float)
    if P.ndim != 3 or P.shape[1] != P.shape[2]:
        raise ValidationError(f"transitions must have shape (|Y|, |X|, |X|), got {P.shape}")
    if (P < 0).any():
        raise ValidationError("transition probabilities must be nonnegative")
    bad = np.argwhere(np.abs(P.sum(axis=2) - 1.0) > ROW_TOL)
    if bad.size:
        y, x = bad[0]
        raise ValidationError(f"transition row (y={y}, x={x}) does not sum to 1")
    return P


@dataclass(frozen=True, eq=False)
class DdcModel:
    beta: float
    transitions: np.ndarray
    flows: np.ndarray
    shocks: ShockSpec | None = None
    benchmark: int = 0
    states: np.ndarray | None = None
    actions: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValidationError(f"beta must lie in [0, 1), got {self.beta}")
        P = check_transitions(self.transitions)
        u = np.asarray(self.flows, dtype=float)
        if u.shape != P.shape[:2]:
            raise ValidationError(f"flows must have shape {P.shape[:2]}, got {u.shape}")
        if not 0 <= self.benchmark < P.shape[0]:
            raise ValidationError(f"benchmark action {self.benchmark} is not an action")
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "flows", u)
        if self.states is None:
            object.__setattr__(self, "states", np.arange(P.shape[1]))
        if self.actions is None:
            object.__setattr__(self, "actions", np.arange(P.shape[0]))

    @property
    def n_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[0]


@dataclass(frozen=True, eq=False)
class ModelSolution:
    V: np.ndarray
    w: np.ndarray
    ccp: np.ndarray
    bellman_residual: float
    iterations: int
    residuals: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True, eq=False)
class EstimationResult:
    w0: np.ndarray
    V: np.ndarray
    flows: np.ndarray
    identified: np.ndarray
    benchmark: int
    bounds: list | None = None
    linear_residual: float = 0.0

    @property
    def identified_states(self) -> np.ndarray:
        return np.flatnonzero(self.identified)

    def to_csv(self, path, states=None, header_comment: str | None = None) -> None:
        """Rows (x, y, w0, flow, lower, upper, identified_flag)."""
        n_actions, n_states = self.flows.shape
        labels = np.arange(n_states) if states is None else np.asarray(states)
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "w0", "flow", "lower", "upper", "identified"])
            for x in range(n_states):
                b = self.bounds[x] if self.bounds is not None else None
                for y in range(n_actions):
                    lo = "" if b is None else _fmt(b.lower[y])
                    hi = "" if b is None else _fmt(b.upper[y])
                    writer.writerow([labels[x], y, _fmt(self.w0[y, x]), _fmt(self.flows[y, x]),
                                     lo, hi, int(self.identified[x])])


def _fmt(v):
    return "" if not np.isfinite(v) else repr(float(v))


def _per_state(shocks, n_states) -> list:
    if isinstance(shocks, DiscreteShocks):
        return [shocks] * n_states
    shocks = list(shocks)
    if len(shocks) != n_states:
        raise ValidationError(f"expected {n_states} shock discretizations, got {len(shocks)}")
    return shocks


def _surplus_all(w, shocks):
    """G(w[:, x]; x) for every state, reusing shared shock matrices."""
    V = np.empty(w.shape[1])
    for x, sh in enumerate(shocks):
        vals = (sh.points + w[:, x]).max(axis=1)
        V[x] = np.cumsum(vals)[-1] / vals.size
    return V


def solve_model(model: DdcModel, shocks, tol: float = 1e-10, max_iter: int = 100_000) -> ModelSolution:
    """Value iteration on V(x) <- G(u(., x) + beta * P_. V; x) over discretized shocks."""
    if not tol > 0:
        raise ValidationError("tol must be positive")
    shocks = _per_state(shocks, model.n_states)
    if any(sh.n_actions != model.n_actions for sh in shocks):
        raise ValidationError("shock discretizations disagree with the number of actions")
    P, u, beta = model.transitions, model.flows, model.beta
    V = np.zeros(model.n_states)
    residuals = []
    for it in range(1, max_iter + 1):
        w = u + beta * (P @ V)
        V_new = _surplus_all(w, shocks)
        res = float(np.abs(V_new - V).max())
        residuals.append(res)
        V = V_new
        if res <= tol:
            break
    else:
        raise ConvergenceError(
            f"value iteration did not converge in {max_iter} iterations (residual {res:.3e})",
            residual=res, iterations=max_iter,
        )
    w = u + beta * (P @ V)
    ccp = np.vstack([choice_probs(w[:, x], sh) for x, sh in enumerate(shocks)])
    return ModelSolution(V=V, w=w, ccp=ccp, bellman_residual=res, iterations=it,
                         residuals=np.array(residuals))


def ex_ante_values(W, trans0, beta: float) -> np.ndarray:
    """Solve (beta * P0 - I) V = W by LU with partial pivoting."""
    W = np.asarray(W, dtype=float).reshape(-1)
    P0 = np.asarray(trans0, dtype=float)
    n = W.size
    if P0.shape != (n, n):
        raise ValidationError(f"benchmark transition matrix must be {n} x {n}")
    if not 0.0 <= beta < 1.0:
        raise ValidationError(f"beta must lie in [0, 1), got {beta}")
    if (P0 < 0).any() or np.abs(P0.sum(axis=1) - 1.0).max() > ROW_TOL:
        raise ValidationError("benchmark transition matrix is not row-stochastic")
    A = beta * P0 - np.eye(n)
    diag = np.abs(np.diag(A))
    off = np.abs(A).sum(axis=1) - diag
    if not (diag > off).all():
        raise ValidationError("I - beta * P0 is not strictly diagonally dominant")
    lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    return scipy.linalg.lu_solve((lu, piv), W)


def utility_flows(w0, V, transitions, beta: float) -> np.ndarray:
    """u_y(x) = w0_y(x) + V(x) - beta * sum_x' P_y[x, x'] V(x')."""
    w0 = np.asarray(w0, dtype=float)
    V = np.asarray(V, dtype=float).reshape(-1)
    P = np.asarray(transitions, dtype=float)
    if w0.shape != P.shape[:2] or P.shape[2] != V.size or w0.shape[1] != V.size:
        raise ValidationError(
            f"dimension mismatch: w0 {w0.shape}, V {V.shape}, transitions {P.shape}"
        )
    return w0 + V[None, :] - beta * (P @ V)


def estimate(
    ccps,
    transitions,
    beta: float,
    shocks,
    y0: int,
    with_bounds: bool = False,
    strict: bool = False,
    state_labels: Sequence | None = None,
    benchmark_boundary: str = "raise",
) -> EstimationResult:
    """Two-step recovery of flow utilities from CCPs and transition matrices.

    Step one inverts every state's CCP vector into normalized payoffs w0(x).
    Step two solves for ex-ante values from the benchmark row and backs out the
    flows.  A state is identified when its CCP vector is interior and every
    transition row at that state is usable (finite); flows elsewhere are NaN.

    States whose CCP has an interior benchmark entry but some other action at
    zero still enter the linear system, through the transport duals of the
    boundary problem, and are flagged as not identified.  ``strict=True``
    rejects such states instead.

    A benchmark CCP of 0 or 1 leaves W undefined at that state and raises by
    default.  ``benchmark_boundary="dual"`` substitutes the transport duals of
    the boundary problem there, an arbitrary selection from an unbounded set;
    the state is flagged, and flows elsewhere inherit that choice through the
    linear system.  Use it only where data force it (sparse replacement data).
    """
    P = np.asarray(transitions, dtype=float)
    ccps = np.asarray(ccps, dtype=float)
    n_actions, n_states = P.shape[0], P.shape[1]
    if ccps.shape != (n_states, n_actions):
        raise ValidationError(f"ccps must have shape {(n_states, n_actions)}, got {ccps.shape}")
    if not 0 <= y0 < n_actions:
        raise ValidationError(f"benchmark action {y0} out of range")
    if benchmark_boundary not in ("raise", "dual"):
        raise ValidationError(f"benchmark_boundary must be 'raise' or 'dual', got {benchmark_boundary!r}")
    shocks = _per_state(shocks, n_states)
    labels = list(range(n_states)) if state_labels is None else list(state_labels)

    P0 = P[y0]
    if not np.isfinite(P0).all():
        bad = int(np.flatnonzero(~np.isfinite(P0).all(axis=1))[0])
        raise IdentificationError(
            f"benchmark transition row unavailable at state {labels[bad]}", state=labels[bad]
        )

    w0 = np.full((n_actions, n_states), np.nan)
    identified = np.zeros(n_states, dtype=bool)
    bounds = [None] * n_states if with_bounds else None
    for x in range(n_states):
        p = ccps[x]
        try:
            p = check_ccp(p)
        except ValidationError as exc:
            raise IdentificationError(f"state {labels[x]}: {exc}", state=labels[x]) from exc
        if not 0.0 < p[y0] < 1.0 and benchmark_boundary == "raise":
            raise IdentificationError(
                f"benchmark CCP equals {p[y0]:g} at state {labels[x]}; W cannot be formed",
                state=labels[x],
            )
        if (p > 0).all():
            res = invert_ccp(p, shocks[x])
            w0[:, x] = res.w0
            identified[x] = np.isfinite(P[:, x]).all()
            if with_bounds:
                bounds[x] = identified_set_bounds(p, shocks[x], res.solution)
        else:
            if strict and 0.0 < p[y0] < 1.0:
                raise NotInteriorError(
                    f"CCP not interior at state {labels[x]}: payoffs not point-identified"
                )
            sol = solve_transport(TransportProblem(p, shocks[x]))
            w = -(sol.lam + np.cumsum(sol.z)[-1] / sol.z.size)
            drop = p == 0
            drop[y0] = False
            w[drop] = np.nan
            w0[:, x] = w

    W = w0[y0]
    V = ex_ante_values(W, P0, beta)
    resid = float(np.abs((beta * P0 - np.eye(n_states)) @ V - W).max())
    flows = np.full((n_actions, n_states), np.nan)
    Pf = np.where(np.isfinite(P), P, 0.0)
    full = utility_flows(np.nan_to_num(w0), V, Pf, beta)
    flows[:, identified] = full[:, identified]
    return EstimationResult(w0=w0, V=V, flows=flows, identified=identified, benchmark=y0,
                            bounds=bounds, linear_residual=resid)
