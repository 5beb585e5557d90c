"""Bus engine replacement data: CSV ingestion, mileage bins, estimation, bootstrap.

CSV contract (header required, extra columns ignored)::

    bus_id,t,mileage,replace
    1,1,0,0
    1,2,13000,1

``mileage`` is cumulative miles since the last engine replacement as of period
``t``; ``replace`` is the decision taken in period ``t``.  Any reset of mileage
after a replacement must already be reflected in the next period's row.

Actions are 0 (keep) and 1 (replace, the benchmark with flow fixed at 0).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from .ddc import DdcModel, EstimationResult, estimate, solve_model
from .errors import DataError, IdentificationError, ValidationError
from .montecarlo import PanelData, estimate_ccp_and_transitions, simulate_panel
from .shocks import StateDependentNormalMixture, derive_seed, shocks_per_state

BIN_WIDTH = 12_500
N_STATES = 30
KEEP, REPLACE = 0, 1
QUANTILES = (0.05, 0.25, 0.50, 0.75, 0.95)

__all__ = [
    "RawBusRecord",
    "DiscretizedPanel",
    "BusConfig",
    "BusEstimate",
    "BootstrapResult",
    "ingest_bus_csv",
    "write_bus_csv",
    "discretize_mileage",
    "bus_transition_template",
    "estimate_theta",
    "bus_shock_spec",
    "estimate_bus",
    "bootstrap_estimate",
    "simulate_bus_records",
]


@dataclass(frozen=True)
class RawBusRecord:
    bus_id: int
    t: int
    mileage: float
    replace: int

    def __post_init__(self):
        if not np.isfinite(self.mileage) or self.mileage < 0:
            raise ValidationError(f"mileage must be finite and nonnegative, got {self.mileage}")
        if self.replace not in (0, 1):
            raise ValidationError(f"replace must be 0 or 1, got {self.replace}")


REQUIRED = ("bus_id", "t", "mileage", "replace")


def _parse_int(text):
    v = float(text)
    if not np.isfinite(v) or v != int(v):
        raise ValueError(f"not an integer: {text!r}")
    return int(v)


def ingest_bus_csv(path) -> list[RawBusRecord]:
    """Parse the bus CSV; every malformed row is reported with its line number."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file", lines=[1]) from None
        missing = [c for c in REQUIRED if c not in header]
        if missing:
            raise DataError(f"{path}: missing columns {missing}", lines=[1])
        pos = [header.index(c) for c in REQUIRED]
        records, bad, seen = [], [], {}
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            try:
                if len(row) < len(header):
                    raise ValueError("too few fields")
                bus, t, miles, rep = (row[k].strip() for k in pos)
                rec = RawBusRecord(bus_id=_parse_int(bus), t=_parse_int(t), mileage=float(miles),
                                   replace=_parse_int(rep))
            except (ValueError, ValidationError) as exc:
                bad.append((line, str(exc)))
                continue
            key = (rec.bus_id, rec.t)
            if key in seen:
                bad.append((line, f"duplicate (bus_id, t) first seen on line {seen[key]}"))
                continue
            seen[key] = line
            records.append(rec)
    if bad:
        detail = "; ".join(f"line {ln}: {msg}" for ln, msg in bad[:20])
        raise DataError(f"{path}: {len(bad)} malformed rows ({detail})", lines=[ln for ln, _ in bad])
    if not records:
        raise DataError(f"{path}: no data rows")
    return records


def write_bus_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REQUIRED)
        for r in records:
            writer.writerow([r.bus_id, r.t, repr(float(r.mileage)), r.replace])


@dataclass(frozen=True, eq=False)
class DiscretizedPanel:
    panel: PanelData
    bin_width: float = BIN_WIDTH

    @property
    def n_states(self) -> int:
        return self.panel.n_states

    @property
    def buses(self) -> np.ndarray:
        return np.unique(self.panel.agent)

    def replacements_by_state(self) -> np.ndarray:
        rep = self.panel.action == REPLACE
        return np.bincount(self.panel.state[rep], minlength=self.n_states)


def discretize_mileage(records, bin_width: float = BIN_WIDTH, n_states: int = N_STATES) -> DiscretizedPanel:
    """State = min(floor(mileage / bin_width), n_states - 1); rows sorted by (bus, t)."""
    if not records:
        raise ValidationError("no records to discretize")
    rows = sorted(records, key=lambda r: (r.bus_id, r.t))
    miles = np.array([r.mileage for r in rows], dtype=float)
    state = np.minimum(np.floor(miles / bin_width), n_states - 1).astype(np.int64)
    panel = PanelData(
        agent=np.array([r.bus_id for r in rows]),
        period=np.array([r.t for r in rows]),
        state=state,
        action=np.array([r.replace for r in rows]),
        n_states=n_states,
        n_actions=2,
    )
    return DiscretizedPanel(panel=panel, bin_width=bin_width)


def bus_transition_template(theta: float, theta_replace: float | None = None,
                            n_states: int = N_STATES) -> np.ndarray:
    """Keep: stay w.p. theta, else advance one state (top state absorbs).
    Replace: state 0 w.p. theta_replace (default theta), else state 1."""
    tr = theta if theta_replace is None else theta_replace
    for name, v in (("theta", theta), ("theta_replace", tr)):
        if not 0.0 < v < 1.0:
            raise ValidationError(f"{name} must lie strictly between 0 and 1, got {v}")
    if n_states < 2:
        raise ValidationError("need at least two states")
    P = np.zeros((2, n_states, n_states))
    idx = np.arange(n_states)
    P[KEEP, idx, idx] = theta
    P[KEEP, idx, np.minimum(idx + 1, n_states - 1)] += 1.0 - theta
    P[REPLACE, :, 0] = tr
    P[REPLACE, :, 1] = 1.0 - tr
    return P


def estimate_theta(panel: DiscretizedPanel, action_specific: bool = False):
    """Frequency of zero-increment moves (keep: same state, replace: state 0).

    Keep moves out of the top state are uninformative and skipped.  Returns a
    float, or ``(theta_keep, theta_replace)`` when ``action_specific``.
    """
    x, y, x1 = panel.panel.transitions_observed()
    top = panel.n_states - 1
    keep = (y == KEEP) & (x < top)
    rep = y == REPLACE
    zk, nk = int((x1[keep] == x[keep]).sum()), int(keep.sum())
    zr, nr = int((x1[rep] == 0).sum()), int(rep.sum())
    if action_specific:
        if nk == 0 or nr == 0:
            raise DataError("cannot estimate action-specific theta: an action has no observed moves")
        return zk / nk, zr / nr
    if nk + nr == 0:
        raise DataError("no consecutive-period moves in the panel")
    return (zk + zr) / (nk + nr)


def bus_shock_spec(a: float = 0.1, b: float = 0.5) -> StateDependentNormalMixture:
    return StateDependentNormalMixture(a=a, b=b)


@dataclass(frozen=True)
class BusConfig:
    beta: float = 0.9
    S: int = 2000
    seed: int = 0
    a: float = 0.1
    b: float = 0.5
    theta: float | None = None
    theta_replace: float | None = None
    action_specific_theta: bool = False


@dataclass(frozen=True, eq=False)
class BusEstimate:
    """Keep-flow estimates on the full state grid (NaN beyond the visited range)."""

    result: EstimationResult
    theta: tuple
    n_used: int
    flows_keep: np.ndarray
    interior: np.ndarray
    visits: np.ndarray
    replacements: np.ndarray


def estimate_bus(panel: DiscretizedPanel, config: BusConfig = BusConfig()) -> BusEstimate:
    """Two-step estimation on a discretized bus panel.

    The model is truncated at the highest visited state (which then absorbs
    keep moves).  States where replacement is never observed enter the linear
    system through boundary transport duals and are reported as not interior.
    """
    if config.theta is not None:
        th = (config.theta, config.theta if config.theta_replace is None else config.theta_replace)
    elif config.action_specific_theta:
        th = estimate_theta(panel, action_specific=True)
    else:
        t = estimate_theta(panel)
        th = (t, t)
    n_full = panel.n_states
    freq = estimate_ccp_and_transitions(panel.panel)
    visited = np.flatnonzero(freq.visited)
    n_used = int(visited.max()) + 1
    if n_used < 2:
        raise IdentificationError("panel visits fewer than two states")
    hole = np.flatnonzero(~freq.visited[:n_used])
    if hole.size:
        raise IdentificationError(f"state {int(hole[0])} is never visited", state=int(hole[0]))
    ccp = freq.ccp[:n_used]
    if (ccp[:, REPLACE] == 0).all() or (ccp[:, REPLACE] == 1).all():
        raise IdentificationError("replacement CCP is on the boundary at every state")
    P = bus_transition_template(th[0], th[1], n_states=n_used)
    states = np.arange(n_used)
    shocks = shocks_per_state(bus_shock_spec(config.a, config.b), config.S, config.seed, states)
    res = estimate(ccp, P, config.beta, shocks, REPLACE, state_labels=states,
                   benchmark_boundary="dual")
    flows = np.full(n_full, np.nan)
    flows[:n_used] = res.flows[KEEP]
    interior = np.zeros(n_full, bool)
    interior[:n_used] = res.identified
    return BusEstimate(result=res, theta=tuple(float(v) for v in th), n_used=n_used,
                       flows_keep=flows, interior=interior, visits=freq.visits.copy(),
                       replacements=freq.action_counts[:, REPLACE].copy())


def _resample(panel: DiscretizedPanel, buses: np.ndarray) -> DiscretizedPanel:
    """Stack the chosen buses; each draw gets a fresh agent id so duplicates stay distinct."""
    p = panel.panel
    order = np.argsort(p.agent, kind="stable")
    agent_sorted = p.agent[order]
    lo = np.searchsorted(agent_sorted, buses, side="left")
    hi = np.searchsorted(agent_sorted, buses, side="right")
    rows = np.concatenate([order[a:b] for a, b in zip(lo, hi)])
    agent = np.repeat(np.arange(len(buses)), hi - lo)
    new = PanelData(agent=agent, period=p.period[rows], state=p.state[rows], action=p.action[rows],
                    n_states=p.n_states, n_actions=p.n_actions)
    return dc_replace(panel, panel=new)


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    estimates: list
    resamples: list
    excluded: list
    quantiles: np.ndarray  # n_states x 5, NaN where no resample identifies the state
    replacements: np.ndarray

    @property
    def n_excluded(self) -> int:
        return len(self.excluded)

    def to_csv(self, path, header_comment: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh)
            writer.writerow(["x", "q05", "q25", "q50", "q75", "q95", "n_replacements_observed"])
            for x, q in enumerate(self.quantiles):
                writer.writerow([x] + ["" if not np.isfinite(v) else repr(float(v)) for v in q]
                                + [int(self.replacements[x])])


def _one_resample(panel, config, buses):
    sub = _resample(panel, buses)
    try:
        return estimate_bus(sub, config), ""
    except (ValueError, RuntimeError) as exc:
        return None, str(exc)


def bootstrap_estimate(panel: DiscretizedPanel, B: int, seed: int, config: BusConfig = BusConfig(),
                       resample_size: int | None = None, test_mode: bool = False,
                       jobs: int = 1, redraw_shocks: bool = True) -> BootstrapResult:
    """Resample whole buses with replacement and re-estimate keep flows.

    With ``redraw_shocks`` each resample also uses a fresh shock discretization,
    so the quantiles include the error from the finite shock support and not
    only sampling noise.  ``test_mode`` (requires ``B == 1``) uses every bus
    once, in order, with the configured discretization, which reproduces the
    point estimate.  Resamples whose estimation fails (for instance no
    replacement anywhere) are excluded and listed in ``excluded``.
    """
    if B < 1:
        raise ValidationError("B must be at least 1")
    buses = panel.buses
    size = buses.size if resample_size is None else int(resample_size)
    if size < 1:
        raise ValidationError("resample size must be positive")
    if test_mode:
        if B != 1:
            raise ValidationError("test mode runs exactly one resample")
        draws = [buses.copy()]
    else:
        draws = [buses[np.random.default_rng(derive_seed(seed, b)).integers(0, buses.size, size)]
                 for b in range(B)]
    if redraw_shocks and not test_mode:
        configs = [dc_replace(config, seed=derive_seed(config.seed, seed, b)) for b in range(B)]
    else:
        configs = [config] * B
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            outs = list(ex.map(_one_resample, [panel] * B, configs, draws))
    else:
        outs = [_one_resample(panel, c, d) for c, d in zip(configs, draws)]
    estimates = [e for e, _ in outs]
    excluded = [(b, msg) for b, (e, msg) in enumerate(outs) if e is None]
    n = panel.n_states
    vals = np.full((B, n), np.nan)
    for b, e in enumerate(estimates):
        if e is not None:
            vals[b] = np.where(e.interior, e.flows_keep, np.nan)
    q = np.full((n, len(QUANTILES)), np.nan)
    for x in range(n):
        v = vals[:, x][np.isfinite(vals[:, x])]
        if v.size:
            q[x] = np.quantile(v, QUANTILES)
    return BootstrapResult(estimates=estimates, resamples=draws, excluded=excluded, quantiles=q,
                           replacements=panel.replacements_by_state())


def simulate_bus_records(flows_keep, theta: float = 0.7405, a: float = 0.1, b: float = 0.5,
                         n_buses: int = 100, n_periods: int = 400, seed: int = 0,
                         S: int = 2000, beta: float = 0.9, initial=None):
    """Synthetic bus data from a known model; mileage is drawn uniformly within each bin.

    Returns ``(records, model, solution)``.  Initial states are uniform unless
    ``initial`` is a probability vector over states.
    """
    u0 = np.asarray(flows_keep, dtype=float)
    n = u0.size
    P = bus_transition_template(theta, n_states=n)
    spec = bus_shock_spec(a, b)
    model = DdcModel(beta=beta, transitions=P, flows=np.vstack([u0, np.zeros(n)]), shocks=spec,
                     benchmark=REPLACE)
    shocks = shocks_per_state(spec, S, derive_seed(seed, 0), np.arange(n))
    sol = solve_model(model, shocks)
    panel = simulate_panel(sol, model, n_buses, n_periods, derive_seed(seed, 1), initial=initial)
    rng = np.random.default_rng(derive_seed(seed, 2))
    miles = (panel.state + rng.random(len(panel))) * BIN_WIDTH
    top = panel.state == n - 1
    miles[top] = (n - 1) * BIN_WIDTH + rng.random(int(top.sum())) * 4 * BIN_WIDTH
    records = [RawBusRecord(bus_id=int(i) + 1, t=int(t), mileage=float(m), replace=int(y))
               for i, t, m, y in zip(panel.agent, panel.period, miles, panel.action)]
    return records, model, sol
