"""CCP inversion by optimal transport between actions and discretized shocks.

Sign conventions.  The solver works in gain form:

    maximize   sum_{y,s} pi[y,s] * eps[s,y]
    subject to sum_s pi[y,s] = p_y,   sum_y pi[y,s] = 1/S,   pi >= 0

with dual  min  p . lam + (1/S) sum_s z_s  s.t.  lam_y + z_s >= eps[s,y].
The optimal value is ``-G*(p)`` (cost ``c(y, eps) = -eps_y`` in minimization
form).  Cost-form potentials are ``(-lam, -z)``, so the normalized payoff
vector with ``G(w0) = 0`` is

    w0_y = -(lam_y + (1/S) sum_s z_s).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from . import _netsimplex
from .errors import TransportError, ValidationError
from .shocks import DiscreteShocks
from .surplus import check_ccp, surplus_value

FEAS_TOL = 1e-10
GAP_TOL = 1e-9
NORM_TOL = 1e-8
MAX_S = 200_000
MAX_ACTIONS = 50

__all__ = [
    "TransportProblem",
    "TransportSolution",
    "InversionResult",
    "IdentifiedSetBounds",
    "solve_transport",
    "invert_ccp",
    "identified_set_bounds",
    "fenchel_check",
    "conjugate_value",
]


@dataclass(frozen=True, eq=False)
class TransportProblem:
    p: np.ndarray
    shocks: DiscreteShocks

    def __post_init__(self):
        if not isinstance(self.shocks, DiscreteShocks):
            object.__setattr__(self, "shocks", DiscreteShocks(self.shocks))
        p = check_ccp(self.p)
        if p.size != self.shocks.n_actions:
            raise ValidationError(
                f"p has {p.size} actions but shocks have {self.shocks.n_actions} columns"
            )
        if self.shocks.S > MAX_S or p.size > MAX_ACTIONS:
            raise ValidationError(
                f"problem too large: S={self.shocks.S} (max {MAX_S}), |Y|={p.size} (max {MAX_ACTIONS})"
            )
        object.__setattr__(self, "p", p)

    @property
    def gain(self) -> np.ndarray:
        """|Y| x S gain matrix g[y, s] = eps^s_y."""
        return self.shocks.points.T


@dataclass(frozen=True, eq=False)
class TransportSolution:
    coupling: np.ndarray  # |Y| x S
    lam: np.ndarray
    z: np.ndarray
    primal_objective: float
    dual_objective: float
    iterations: int
    basis_degenerate: bool
    degenerate_pivots: int = 0

    @property
    def gstar(self) -> float:
        return -self.primal_objective

    @property
    def duality_gap(self) -> float:
        return abs(self.primal_objective - self.dual_objective)

    def to_csv(self, path) -> None:
        """Long-format audit dump: kind,index,y,value rows for pi (nonzero), lam and z."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kind", "s", "y", "value"])
            ys, ss = np.nonzero(self.coupling)
            for y, s in sorted(zip(ys.tolist(), ss.tolist()), key=lambda t: (t[1], t[0])):
                writer.writerow(["pi", s, y, repr(float(self.coupling[y, s]))])
            for y, v in enumerate(self.lam):
                writer.writerow(["lam", "", y, repr(float(v))])
            for s, v in enumerate(self.z):
                writer.writerow(["z", s, "", repr(float(v))])


@dataclass(frozen=True, eq=False)
class InversionResult:
    w0: np.ndarray
    gstar: float
    surplus_residual: float
    solution: TransportSolution

    @property
    def fenchel_residual(self) -> float:
        p = self.solution.coupling.sum(axis=1)
        return abs(self.gstar - float(p @ self.w0))


@dataclass(frozen=True, eq=False)
class IdentifiedSetBounds:
    lower: np.ndarray
    upper: np.ndarray

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


def solve_transport(problem: TransportProblem, max_pivots: int | None = None) -> TransportSolution:
    """Optimal basic coupling and duals of the transportation LP."""
    p = problem.p
    eps = problem.shocks.points
    S, m = eps.shape
    gain = np.ascontiguousarray(eps)
    rowmass = p * S
    if m > 1:
        rowmass[-1] = S - rowmass[:-1].sum()
    scale = 1.0 + float(np.abs(gain).max())
    gtol = 1e-11 * scale
    ftol = 1e-9
    block = max(8, int(np.sqrt(S)))
    if max_pivots is None:
        max_pivots = 200 * m * (S + m) + 10_000
    order = _netsimplex.initial_order(gain, rowmass)
    status, deg, adj, flow, u, pivots, ndeg = _netsimplex.solve(
        gain, rowmass, order, int(max_pivots), gtol, ftol, block, 50
    )
    if status != _netsimplex.OPTIMAL:
        raise TransportError(
            f"network simplex stopped after {pivots} pivots without reaching optimality",
            diagnostics={"pivots": pivots, "degenerate_pivots": ndeg, "S": S, "actions": m},
        )

    coupling = np.zeros((m, S))
    cols = np.repeat(np.arange(S), deg)
    rows = np.concatenate([adj[s, : deg[s]] for s in range(S)]) if S else np.empty(0, int)
    vals = np.concatenate([flow[s, : deg[s]] for s in range(S)])
    coupling[rows, cols] = vals / S
    lam = u.copy()
    z = gain[np.arange(S), adj[:, 0]] - lam[adj[:, 0]]

    primal = float(np.cumsum((coupling * eps.T).sum(axis=0))[-1])
    dual = float(p @ lam + np.cumsum(z)[-1] / S)
    return TransportSolution(
        coupling=coupling,
        lam=lam,
        z=z,
        primal_objective=primal,
        dual_objective=dual,
        iterations=int(pivots),
        basis_degenerate=bool((vals <= ftol).any()),
        degenerate_pivots=int(ndeg),
    )


def conjugate_value(p, shocks: DiscreteShocks) -> float:
    """G*(p) on the discretized shocks."""
    return solve_transport(TransportProblem(p, shocks)).gstar


def invert_ccp(p, shocks: DiscreteShocks, max_pivots: int | None = None) -> InversionResult:
    """Normalized payoff vector w0 in the subdifferential of G* at an interior p."""
    p = check_ccp(p, interior=True)
    sol = solve_transport(TransportProblem(p, shocks), max_pivots=max_pivots)
    w0 = -(sol.lam + np.cumsum(sol.z)[-1] / sol.z.size)
    return InversionResult(
        w0=w0,
        gstar=sol.gstar,
        surplus_residual=surplus_value(w0, shocks),
        solution=sol,
    )


_HIGHS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
SUPPORT_TOL = 1e-12


def _row_gaps(p, eps, coupling):
    """c[y, y'] = min over s carrying mass from y of eps[s, y] - eps[s, y'] (inf if none)."""
    m = p.size
    c = np.full((m, m), np.inf)
    support = coupling > SUPPORT_TOL / eps.shape[0]
    for y in range(m):
        cols = np.flatnonzero(support[y])
        if cols.size:
            c[y] = (eps[cols, y][:, None] - eps[cols]).min(axis=0)
    np.fill_diagonal(c, 0.0)
    return c


def identified_set_bounds(p, shocks: DiscreteShocks, base: TransportSolution,
                          method: str = "face") -> IdentifiedSetBounds:
    """Componentwise bounds on the normalized identified set of payoff vectors.

    ``method="face"`` works on the optimal dual face.  Complementary slackness
    against the optimal coupling ``base`` pins the row potentials to
    ``lam_y - lam_y' <= c[y, y']`` (see ``_row_gaps``), and on that face the
    dual objective is constant, so ``w0_y = G*(p) - lam_y + p . lam`` is linear
    in ``lam``.  Each bound is then an LP in ``|Y|`` variables.

    ``method="full"`` solves the LP over cost-form potentials ``(w, z)`` with
    ``w_y + z_s <= -eps^s_y``, ``mean(z) = 0`` and ``p . w >= G*(p) - delta``
    (weak duality makes the inequality equivalent to equality up to
    ``delta``).  It is slower and kept as an independent check.
    """
    p = check_ccp(p)
    eps = shocks.points
    S, m = eps.shape
    if p.size != m:
        raise ValidationError("p and shocks disagree on the number of actions")
    if method == "face":
        return _face_bounds(p, eps, base)
    if method == "full":
        return _full_bounds(p, eps, base)
    raise ValidationError(f"unknown bounds method {method!r}")


def _face_bounds(p, eps, base):
    m = p.size
    c = _row_gaps(p, eps, base.coupling)
    pairs = [(a, b) for a in range(m) for b in range(m) if a != b and np.isfinite(c[a, b])]
    A = np.zeros((len(pairs), m))
    for k, (a, b) in enumerate(pairs):
        A[k, a] = 1.0
        A[k, b] = -1.0
    ub = np.array([c[a, b] for a, b in pairs])
    var_bounds = [(0.0, 0.0)] + [(None, None)] * (m - 1)
    lower = np.empty(m)
    upper = np.empty(m)
    for y in range(m):
        # w0_y - G*(p) = (p - e_y) . lam
        obj = p.copy()
        obj[y] -= 1.0
        for sign, out in ((1.0, lower), (-1.0, upper)):
            res = linprog(sign * obj, A_ub=A if pairs else None, b_ub=ub if pairs else None,
                          bounds=var_bounds, method="highs", options=_HIGHS)
            if res.status == 3:
                out[y] = -sign * np.inf
                continue
            if res.status != 0:
                raise TransportError(
                    f"identified-set LP for action {y} failed: {res.message}",
                    diagnostics={"status": res.status, "gstar": base.gstar},
                )
            out[y] = base.gstar + float(obj @ res.x)
    return IdentifiedSetBounds(lower=lower, upper=upper)


def _full_bounds(p, eps, base):
    S, m = eps.shape
    gstar = base.gstar
    delta = GAP_TOL * (1.0 + abs(gstar))

    # rows indexed (s, y): w_y + z_s <= -eps[s, y]
    n_rows = S * m
    r_idx = np.arange(n_rows)
    ys = np.tile(np.arange(m), S)
    ss = np.repeat(np.arange(S), m)
    A = sp.csr_matrix(
        (np.ones(2 * n_rows), (np.concatenate([r_idx, r_idx]), np.concatenate([ys, m + ss]))),
        shape=(n_rows, m + S),
    )
    A = sp.vstack([A, sp.csr_matrix(np.concatenate([-p, np.zeros(S)])[None, :])]).tocsr()
    b = np.concatenate([-eps.reshape(-1), [-(gstar - delta)]])
    A_eq = sp.csr_matrix(np.concatenate([np.zeros(m), np.full(S, 1.0 / S)])[None, :])
    b_eq = np.zeros(1)
    bounds = [(None, None)] * (m + S)

    lower = np.empty(m)
    upper = np.empty(m)
    for y in range(m):
        for sign, out in ((1.0, lower), (-1.0, upper)):
            c = np.zeros(m + S)
            c[y] = sign
            res = linprog(c, A_ub=A, b_ub=b, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                          method="highs", options=_HIGHS)
            if res.status == 3:
                out[y] = -sign * np.inf
                continue
            if res.status != 0:
                raise TransportError(
                    f"identified-set LP for action {y} failed: {res.message}",
                    diagnostics={"status": res.status, "gstar": gstar},
                )
            out[y] = res.x[y]
    return IdentifiedSetBounds(lower=lower, upper=upper)


def fenchel_check(w, p, shocks: DiscreteShocks, base: TransportSolution | None = None) -> float:
    """|G(w) + G*(p) - p . w|; zero exactly when w is in the subdifferential of G* at p."""
    p = check_ccp(p)
    if base is None:
        base = solve_transport(TransportProblem(p, shocks))
    w = np.asarray(w, dtype=float)
    return abs(surplus_value(w, shocks) + base.gstar - float(p @ w))
