"""``mta`` command line: invert, estimate, montecarlo, sweep, bootstrap.

Exit codes: 0 success, 1 numerical or identification failure, 2 input error.
Failures print one JSON object on stderr.  Every CSV starts with a comment line
carrying the package version and the sha256 of the config text plus flags.

Seeds: every random stream is ``derive_seed(seed, stream, ...)`` with the
master ``seed`` from the config and a fixed stream number per use.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .ddc import estimate, solve_model
from .errors import DataError, NotInteriorError, ValidationError
from .shocks import StateDependentNormalMixture, derive_seed, discretize, shocks_per_state
from .transport import identified_set_bounds, invert_ccp

STREAM_SHOCKS = 1
STREAM_MC = 2
STREAM_SWEEP = 3
STREAM_BOOT = 4
STREAM_SYNTH = 5


def _num(v) -> str:
    v = float(v)
    return repr(v) if np.isfinite(v) else ""


class Output:
    def __init__(self, out_dir: Path, cfg: RunConfig, flags: str):
        self.dir = out_dir
        self.dir.mkdir(parents=True, exist_ok=True)
        tag = hashlib.sha256((cfg.digest + "|" + flags).encode()).hexdigest()
        self.header = f"mta {__version__} config_sha256={tag}"

    def path(self, name) -> Path:
        return self.dir / name

    def table(self, name, columns, rows) -> Path:
        path = self.path(name)
        with open(path, "w", newline="") as fh:
            fh.write(f"# {self.header}\n")
            writer = csv.writer(fh)
            writer.writerow(columns)
            writer.writerows(rows)
        return path


def _shocks_for_states(cfg: RunConfig, n_states: int, S=None):
    spec = cfg.shocks.build()
    S = cfg.discretization.S if S is None else S
    seed = derive_seed(cfg.seed, STREAM_SHOCKS, cfg.discretization.seed)
    return spec, shocks_per_state(spec, S, seed, np.arange(n_states))


# ------------------------------------------------------------------ readers

def _read_table(path, required):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise DataError(f"{path}: empty file", lines=[1])
    header = [h.strip() for h in rows[0]]
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(f"{path}: missing columns {missing}", lines=[1])
    return header, rows[1:]


def _floats(path, header, rows, names):
    idx = [header.index(n) for n in names]
    out, bad = [], []
    for k, row in enumerate(rows, start=2):
        try:
            vals = [float(row[i]) for i in idx]
            if not all(np.isfinite(vals)):
                raise ValueError
            out.append(vals)
        except (ValueError, IndexError):
            bad.append(k)
    if bad:
        raise DataError(f"{path}: malformed rows at lines {bad[:20]}", lines=bad)
    return np.array(out, dtype=float).reshape(len(out), len(names))


def read_p_csv(path):
    """Rows of CCP vectors; columns p0, p1, ... (an optional ``case`` column is ignored)."""
    with open(path, newline="") as fh:
        first = next((r for r in csv.reader(fh) if r and not r[0].startswith("#")), None)
    if first is None:
        raise DataError(f"{path}: empty file", lines=[1])
    names = [h.strip() for h in first if h.strip().startswith("p")]
    if not names:
        raise DataError(f"{path}: no p0, p1, ... columns", lines=[1])
    header, rows = _read_table(path, names)
    return _floats(path, header, rows, names)


def read_ccp_csv(path):
    """Columns x, p0, p1, ...; states are 0-based positions."""
    p = read_p_csv(path)
    header, rows = _read_table(path, ["x"])
    x = _floats(path, header, rows, ["x"])[:, 0].astype(int)
    if sorted(x.tolist()) != list(range(x.size)):
        raise DataError(f"{path}: states must be 0..n-1, each once")
    return p[np.argsort(x)]


def read_transitions_csv(path, n_states, n_actions):
    """Long format y, x, x_next, prob; unspecified entries are zero."""
    header, rows = _read_table(path, ["y", "x", "x_next", "prob"])
    t = _floats(path, header, rows, ["y", "x", "x_next", "prob"])
    P = np.zeros((n_actions, n_states, n_states))
    idx = t[:, :3].astype(int)
    if (idx < 0).any() or (idx[:, 0] >= n_actions).any() or (idx[:, 1:] >= n_states).any():
        raise DataError(f"{path}: index out of range")
    np.add.at(P, (idx[:, 0], idx[:, 1], idx[:, 2]), t[:, 3])
    return P


def read_panel_csv(path, n_states=None, n_actions=None):
    from .montecarlo import PanelData

    header, rows = _read_table(path, ["i", "t", "x", "y"])
    t = _floats(path, header, rows, ["i", "t", "x", "y"]).astype(np.int64)
    ns = int(t[:, 2].max()) + 1 if n_states is None else n_states
    na = int(t[:, 3].max()) + 1 if n_actions is None else n_actions
    return PanelData(agent=t[:, 0], period=t[:, 1], state=t[:, 2], action=t[:, 3],
                     n_states=ns, n_actions=na)


# ------------------------------------------------------------------ commands

def cmd_invert(cfg: RunConfig, out: Output, args) -> int:
    cases = read_p_csv(cfg.io.p_csv) if cfg.io.p_csv else np.array(cfg.invert.p, dtype=float)
    if cases.size == 0:
        raise ValidationError("no CCP vectors: set invert.p or io.p_csv")
    spec = cfg.shocks.build()
    if isinstance(spec, StateDependentNormalMixture):
        raise ValidationError("invert needs a state-independent shock law")
    seed = derive_seed(cfg.seed, STREAM_SHOCKS, cfg.discretization.seed)
    shocks = discretize(spec, cfg.discretization.S, seed)
    cols = ["case", "y", "p", "w0", "gstar", "duality_gap"] + (["lower", "upper"] if args.bounds else [])
    rows = []
    for k, p in enumerate(cases):
        res = invert_ccp(p, shocks)
        b = identified_set_bounds(p, shocks, res.solution) if args.bounds else None
        for y in range(p.size):
            row = [k, y, _num(p[y]), _num(res.w0[y]), _num(res.gstar), _num(res.solution.duality_gap)]
            if b is not None:
                row += [_num(b.lower[y]), _num(b.upper[y])]
            rows.append(row)
        print(f"case {k}: w0 = {np.array2string(res.w0, precision=6)}  G*(p) = {res.gstar:.6f}")
    path = out.table("invert.csv", cols, rows)
    print(f"wrote {path}")
    return 0


def cmd_estimate(cfg: RunConfig, out: Output, args) -> int:
    ec = cfg.estimation
    with_bounds = args.bounds or ec.bounds
    if ec.source == "bus":
        return _estimate_bus(cfg, out)
    truth = None
    if ec.source == "resource":
        from .montecarlo import ResourceModelSpec, build_resource_model

        model = build_resource_model(ResourceModelSpec(beta=ec.beta))
        seed = derive_seed(cfg.seed, STREAM_SHOCKS, cfg.discretization.seed)
        shocks = discretize(model.shocks, cfg.discretization.S, seed)
        sol = solve_model(model, shocks, tol=ec.tol)
        ccp, P, y0, labels = sol.ccp, model.transitions, model.benchmark, model.states
        truth = model.flows
    elif ec.source == "panel":
        from .montecarlo import estimate_ccp_and_transitions

        if not cfg.io.panel:
            raise ValidationError("estimation.source = panel needs io.panel")
        panel = read_panel_csv(cfg.io.panel, ec.n_states, ec.n_actions)
        freq = estimate_ccp_and_transitions(panel)
        ccp = freq.ccp
        if cfg.io.transitions:
            P = read_transitions_csv(cfg.io.transitions, panel.n_states, panel.n_actions)
        else:
            P = freq.transitions
        _, shocks = _shocks_for_states(cfg, panel.n_states)
        y0, labels = ec.y0, np.arange(panel.n_states)
    elif ec.source == "ccp":
        if not (cfg.io.ccp and cfg.io.transitions):
            raise ValidationError("estimation.source = ccp needs io.ccp and io.transitions")
        ccp = read_ccp_csv(cfg.io.ccp)
        P = read_transitions_csv(cfg.io.transitions, ccp.shape[0], ccp.shape[1])
        _, shocks = _shocks_for_states(cfg, ccp.shape[0])
        y0, labels = ec.y0, np.arange(ccp.shape[0])
    else:
        raise ValidationError(f"unknown estimation.source {ec.source!r}")
    res = estimate(ccp, P, ec.beta, shocks, y0, with_bounds=with_bounds, strict=ec.strict,
                   state_labels=labels)
    path = out.path("estimate.csv")
    res.to_csv(path, states=labels, header_comment=out.header)
    ident = res.identified_states
    print(f"states identified: {ident.size} of {res.identified.size}")
    print(f"linear-system residual: {res.linear_residual:.3e}")
    if ident.size:
        print(f"max |benchmark flow|: {np.abs(res.flows[y0, ident]).max():.3e}")
    if truth is not None and ident.size:
        err = np.abs(res.flows - truth)[:, ident].max()
        print(f"max abs flow error vs true model: {err:.4f}")
    print(f"wrote {path}")
    return 0


def _bus_panel(cfg: RunConfig):
    from .dataio import discretize_mileage, ingest_bus_csv, simulate_bus_records

    if cfg.io.bus_csv:
        return discretize_mileage(ingest_bus_csv(cfg.io.bus_csv)), "file"
    bc = cfg.bus
    records, _, _ = simulate_bus_records(
        np.full(30, bc.synthetic_keep_flow), theta=0.7405 if bc.theta is None else bc.theta,
        a=cfg.shocks.a, b=cfg.shocks.b, n_buses=bc.synthetic_buses, n_periods=bc.synthetic_periods,
        seed=derive_seed(cfg.seed, STREAM_SYNTH), S=bc.S, beta=bc.beta,
    )
    return discretize_mileage(records), "synthetic"


def _bus_config(cfg: RunConfig):
    from .dataio import BusConfig

    bc = cfg.bus
    return BusConfig(beta=bc.beta, S=bc.S, seed=derive_seed(cfg.seed, STREAM_SHOCKS, cfg.discretization.seed),
                     a=cfg.shocks.a, b=cfg.shocks.b, theta=bc.theta, theta_replace=bc.theta_replace,
                     action_specific_theta=bc.action_specific_theta)


def _estimate_bus(cfg: RunConfig, out: Output) -> int:
    from .dataio import estimate_bus

    panel, origin = _bus_panel(cfg)
    est = estimate_bus(panel, _bus_config(cfg))
    rows = [[x, _num(est.flows_keep[x]), int(est.interior[x]), int(est.visits[x]),
             int(est.replacements[x])] for x in range(panel.n_states)]
    path = out.table("bus_estimate.csv", ["x", "flow_keep", "interior", "visits", "replacements"], rows)
    print(f"data: {origin}; theta = {est.theta[0]:.4f}; interior states: {np.flatnonzero(est.interior).tolist()}")
    print(f"wrote {path}")
    return 0


def cmd_montecarlo(cfg: RunConfig, out: Output, args) -> int:
    from .montecarlo import McDesign, ResourceModelSpec, run_montecarlo, summarize

    mc = cfg.montecarlo
    reps = 5 if args.quick else mc.replications
    design = McDesign(N=mc.N, T=mc.T, replications=reps, S_true=mc.S_true, S_est=mc.S_est,
                      seed=derive_seed(cfg.seed, STREAM_MC), estimated_transitions=mc.estimated_transitions)
    model, _, results = run_montecarlo(design, ResourceModelSpec(beta=cfg.estimation.beta), jobs=args.jobs)
    acts = [y for y in range(model.n_actions) if y != model.benchmark]
    cols = ["replication", "N", "T", "n_identified"] + [f"rmse_y{y}" for y in acts] + \
        [f"r2_y{y}" for y in acts] + ["failure"]
    rows = []
    for r in results:
        m = r.metrics
        vals = [""] * (2 * len(acts)) if m is None else \
            [_num(m.rmse[y]) for y in acts] + [_num(m.r2[y]) for y in acts]
        rows.append([r.index, mc.N, mc.T, r.n_identified] + vals + [r.failure])
    out.table("montecarlo_replications.csv", cols, rows)
    s = summarize(results)
    design_label = f"N={mc.N}, T={mc.T}"
    metric_cols = [f"rmse_y{y}" for y in acts] + [f"r2_y{y}" for y in acts]
    srows = [[design_label, stat, s["succeeded"]] + [_num(s.get(f"{c}_{stat}", float("nan"))) for c in metric_cols]
             for stat in ("mean", "std")]
    path = out.table("montecarlo_summary.csv", ["design", "statistic", "replications"] + metric_cols, srows)
    print(f"{design_label}: {s['succeeded']}/{s['replications']} replications succeeded")
    for c in metric_cols:
        if f"{c}_mean" in s:
            print(f"  {c}: mean {s[c + '_mean']:.4f}  std {s[c + '_std']:.4f}")
    print(f"wrote {path}")
    return 0


def cmd_sweep(cfg: RunConfig, out: Output, args) -> int:
    from .montecarlo import shrinkage_sweep, simplex_grid, write_sweep_csv

    sw = cfg.sweep
    spec = cfg.shocks.build()
    if isinstance(spec, StateDependentNormalMixture):
        raise ValidationError("sweep needs a state-independent shock law")
    grid = simplex_grid(sw.grid_n, spec.dim, sw.decimals)
    rows = shrinkage_sweep(grid, sw.S, sw.seeds, spec, master_seed=derive_seed(cfg.seed, STREAM_SWEEP))
    path = out.path("sweep.csv")
    write_sweep_csv(rows, path, header_comment=out.header)
    for S in sw.S:
        w = np.array([r.max_width for r in rows if r.S == S])
        print(f"S={S}: median max width {np.median(w):.5f}; share <= 0.01: {(w <= 0.01).mean():.2f}")
    print(f"wrote {path}")
    return 0


def cmd_bootstrap(cfg: RunConfig, out: Output, args) -> int:
    from .dataio import bootstrap_estimate, estimate_bus

    panel, origin = _bus_panel(cfg)
    bcfg = _bus_config(cfg)
    point = estimate_bus(panel, bcfg)
    bs = cfg.bootstrap
    res = bootstrap_estimate(panel, bs.B, derive_seed(cfg.seed, STREAM_BOOT), bcfg,
                             resample_size=bs.resample_size, test_mode=bs.test_mode, jobs=args.jobs)
    path = out.path("bootstrap.csv")
    res.to_csv(path, header_comment=out.header)
    rows = [[x, _num(point.flows_keep[x]), int(point.interior[x]), int(point.visits[x]),
             int(point.replacements[x])] for x in range(panel.n_states)]
    out.table("bus_estimate.csv", ["x", "flow_keep", "interior", "visits", "replacements"], rows)
    print(f"data: {origin}; theta = {point.theta[0]:.4f}")
    print(f"interior states (point estimate): {np.flatnonzero(point.interior).tolist()}")
    print(f"resamples excluded: {res.n_excluded} of {bs.B}")
    print(f"wrote {path}")
    return 0


COMMANDS = {
    "invert": cmd_invert,
    "estimate": cmd_estimate,
    "montecarlo": cmd_montecarlo,
    "sweep": cmd_sweep,
    "bootstrap": cmd_bootstrap,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mta", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"mta {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key = value config file")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
        if name in ("invert", "estimate"):
            p.add_argument("--bounds", action="store_true", help="add identified-set bounds")
        if name == "montecarlo":
            p.add_argument("--quick", action="store_true", help="5 replications")
    return parser


def _fail(exc: BaseException, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    state = getattr(exc, "state", None)
    if state is not None:
        payload["state"] = state if isinstance(state, (int, str)) else str(state)
    lines = getattr(exc, "lines", None)
    if lines:
        payload["lines"] = list(lines)
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        return _fail(ValidationError("--jobs must be at least 1"), 2)
    try:
        cfg = load_config(args.config)
        flags = f"{args.command} bounds={getattr(args, 'bounds', False)} quick={getattr(args, 'quick', False)}"
        out = Output(Path(args.out), cfg, flags)
        return COMMANDS[args.command](cfg, out, args)
    except NotInteriorError as exc:
        return _fail(exc, 1)
    except (ValueError, OSError) as exc:
        return _fail(exc, 2)
    except RuntimeError as exc:
        return _fail(exc, 1)


if __name__ == "__main__":
    sys.exit(main())
