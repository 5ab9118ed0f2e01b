"""Command-line entry points: run, sweep, validate, report.

Settings come from built-in defaults, then an optional flat ``key=value`` file
(``--config``), then flags; later sources win. Exit codes: 0 success, 1 a
check failed, 2 usage or input error.

Run output is JSON lines (or the per-phase CSV when ``--out`` ends in .csv).
The first line is a header record; its ``timestamp`` field is the only part
that varies between identical runs and ``--no-timestamp`` sets it to null.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__, aggregation, drr, gossip
from .metrics import (
    ComparisonRow, MetricsFormatError, RunMetrics, comparison_table, fit_growth, load_runs,
    summarize, write_csv,
)
from .protocols import PROTOCOLS, BudgetOverrides, ConfigError, ProtocolConfig, parse_values, run_protocol
from .seeding import trial_seed
from .topology import ConstructionError, GraphError, GraphKind, parse_topology
from .transport import NetworkSim, Phase

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    protocol: str | None = None
    topology: str | None = None
    delta: float = 0.0
    trials: int = 1
    seed: int = 0
    values: str = "uniform:0,1"
    budgets: BudgetOverrides = field(default_factory=BudgetOverrides)
    drr_mode: str | None = None
    crash_fraction: float = 0.0
    tolerance: float | None = None
    jobs: int = 1
    out: str | None = None
    timestamp: bool = True
    n_list: tuple[int, ...] = ()
    estimates: bool = False

    def validate(self, *, need_protocol: bool = True) -> None:
        if need_protocol:
            if self.protocol is None:
                raise SpecError("--protocol is required")
            if self.topology is None:
                raise SpecError("--topology is required")
        if self.protocol is not None and self.protocol not in PROTOCOLS:
            raise SpecError(f"unknown protocol {self.protocol!r}; expected one of {', '.join(PROTOCOLS)}")
        if not 0.0 <= self.delta < 1.0:
            raise SpecError(f"delta must lie in [0, 1), got {self.delta}")
        if self.trials < 1:
            raise SpecError(f"trials must be >= 1, got {self.trials}")
        if self.jobs < 1:
            raise SpecError(f"jobs must be >= 1, got {self.jobs}")
        if self.drr_mode not in (None, "sampled", "local"):
            raise SpecError(f"drr mode must be sampled or local, got {self.drr_mode!r}")
        try:
            parse_values(self.values)
        except ConfigError as exc:
            raise SpecError(str(exc)) from None
        for n in self.n_list:
            if n < 1:
                raise SpecError(f"n-list entries must be >= 1, got {n}")

    def protocol_config(self, k: int, topology: str | None = None) -> ProtocolConfig:
        return ProtocolConfig(
            topology=topology or self.topology, delta=self.delta, seed=trial_seed(self.seed, k),
            values=self.values, drr_mode=self.drr_mode, budgets=self.budgets,
            crash_fraction=self.crash_fraction, tolerance=self.tolerance,
        )


# -- argument handling --------------------------------------------------------

BUDGET_KEYS = ("gossip_rounds", "sampling_rounds", "ave_rounds", "baseline_rounds", "c", "alpha")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file; flags override it")
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.add_argument("--topology", help="complete:n | dregular:n,d | chord:bits | file:path")
    p.add_argument("--delta", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--values", help="uniform:a,b | constant:v | zipf:s")
    p.add_argument("--jobs", type=int)
    p.add_argument("--out")
    p.add_argument("--drr-mode", choices=("sampled", "local"))
    p.add_argument("--crash-fraction", type=float)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--estimates", action="store_const", const=True, default=None,
                   help="include every node's final answer in JSON records")
    p.add_argument("--no-timestamp", dest="timestamp", action="store_const", const=False, default=None)
    for key in BUDGET_KEYS:
        kind = float if key in ("c", "alpha") else int
        p.add_argument(f"--budget-{key.replace('_', '-')}", dest=f"budget_{key}", type=kind)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drrgossip", description="DRR-gossip aggregate simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run trials of one protocol, write one record per trial")
    _add_common(run)
    sweep = sub.add_parser("sweep", help="run over several n and write a summary CSV")
    _add_common(sweep)
    sweep.add_argument("--n-list", help="comma separated node counts")
    sweep.add_argument("--summary", help="summary CSV path (default: stdout)")
    val = sub.add_parser("validate", help="run the invariant suite")
    _add_common(val)
    val.add_argument("--inject-drop", metavar="PHASE", choices=[p.value for p in Phase],
                     help="force the first message of PHASE to be lost (self-test of the checks)")
    rep = sub.add_parser("report", help="comparison table and growth fits from metrics files")
    rep.add_argument("paths", nargs="+")
    rep.add_argument("--out", help="write the comparison CSV here")
    rep.add_argument("--reference", help="protocol the ratios are relative to")
    return parser


def read_config_file(path) -> dict[str, str]:
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise SpecError(f"{path}: {exc.strerror}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise SpecError(f"{path}:{lineno}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


_SCALARS = {f.name: f.type for f in fields(ExperimentSpec)}


def _coerce(key: str, raw: str):
    if key.startswith("budget_"):
        return (float if key[7:] in ("c", "alpha") else int)(raw)
    if key in ("delta", "crash_fraction", "tolerance"):
        return float(raw)
    if key in ("trials", "seed", "jobs"):
        return int(raw)
    if key in ("timestamp", "estimates"):
        if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(raw)
        return raw.lower() in ("true", "1", "yes")
    if key == "no_timestamp":
        return raw.lower() in ("true", "1", "yes")
    return raw


def _parse_n_list(text: str) -> tuple[int, ...]:
    try:
        ns = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise SpecError(f"bad --n-list {text!r}") from None
    return ns


def spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    merged: dict[str, object] = {}
    if getattr(args, "config", None):
        for key, raw in read_config_file(args.config).items():
            try:
                val = _coerce(key, raw)
            except ValueError:
                raise SpecError(f"{args.config}: bad value for {key}: {raw!r}") from None
            if key == "no_timestamp":
                key, val = "timestamp", not val
            if key not in _SCALARS and not key.startswith("budget_"):
                raise SpecError(f"{args.config}: unknown key {key!r}")
            merged[key] = val
    for key, val in vars(args).items():
        if val is not None and (key in _SCALARS or key.startswith("budget_")):
            merged[key] = val
    budget = {k[7:]: merged.pop(k) for k in list(merged) if k.startswith("budget_")}
    unknown = set(budget) - set(BUDGET_KEYS)
    if unknown:
        raise SpecError(f"unknown budget keys {sorted(unknown)}")
    if "n_list" in merged:
        merged["n_list"] = _parse_n_list(str(merged["n_list"]))
    return ExperimentSpec(budgets=BudgetOverrides(**budget), **merged)


# -- execution -----------------------------------------------------------------

def _run_one(job) -> str:
    spec, k, topology = job
    res = run_protocol(spec.protocol, spec.protocol_config(k, topology))
    rm = RunMetrics.from_result(k, res, delta=spec.delta, seed=trial_seed(spec.seed, k),
                                keep_estimates=spec.estimates)
    return rm.to_json()


def execute(spec: ExperimentSpec, topology: str | None = None, offset: int = 0) -> list[str]:
    """JSON records for every trial, in trial order whatever ``jobs`` is."""
    jobs = [(spec, offset + k, topology) for k in range(spec.trials)]
    if spec.jobs == 1 or len(jobs) == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
        return list(pool.map(_run_one, jobs))


def header_record(spec: ExperimentSpec, command: str) -> str:
    d = asdict(spec)
    d.pop("out")
    d.pop("jobs")
    d.pop("timestamp")
    d["n_list"] = list(spec.n_list)
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds") if spec.timestamp else None
    return json.dumps({"header": {"command": command, "version": __version__, "experiment": d,
                                  "timestamp": stamp}}, sort_keys=True, separators=(",", ":"))


def _write_records(spec: ExperimentSpec, command: str, records: list[str]) -> None:
    if spec.out and spec.out.endswith(".csv"):
        runs = [RunMetrics.from_json(r) for r in records]
        with open(spec.out, "w", encoding="utf-8", newline="") as fh:
            head = json.loads(header_record(spec, command))["header"]
            fh.write(f"# timestamp={head['timestamp']}\n")
            write_csv(runs, fh)
        return
    text = "\n".join([header_record(spec, command)] + records) + "\n"
    if spec.out:
        with open(spec.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_run(spec: ExperimentSpec) -> int:
    spec.validate()
    records = execute(spec)
    _write_records(spec, "run", records)
    return EXIT_OK


def topology_for_n(topology: str, n: int) -> str:
    kind, _, arg = topology.partition(":")
    if kind == "complete":
        return f"complete:{n}"
    if kind == "dregular":
        d = arg.split(",")[-1] if arg else ""
        if not d:
            raise SpecError("sweep over dregular needs the degree, e.g. dregular:0,8")
        return f"dregular:{n},{d}"
    if kind == "chord":
        bits = n.bit_length() - 1
        if n != 1 << bits:
            raise SpecError(f"chord sweeps need powers of two, got {n}")
        return f"chord:{bits}"
    raise SpecError(f"cannot sweep n over topology {topology!r}")


def cmd_sweep(spec: ExperimentSpec, summary_path: str | None = None) -> int:
    spec.validate()
    if not spec.n_list:
        raise SpecError("sweep needs a non-empty --n-list")
    records = []
    for n in spec.n_list:
        records += execute(spec, topology_for_n(spec.topology, n))
    if spec.out:
        _write_records(spec, "sweep", records)
    summary = summarize([RunMetrics.from_json(r) for r in records])
    text = summary.to_csv()
    if summary_path:
        with open(summary_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- validate --------------------------------------------------------------------

def _drop_first(phase_name: str):
    target = Phase(phase_name)
    fired = [False]

    def hook(phase, k):
        mask = np.zeros(k, dtype=bool)
        if phase is target and not fired[0] and k:
            mask[0] = True
            fired[0] = True
        return mask

    return hook


def run_checks(spec: ExperimentSpec, inject_drop: str | None = None) -> list[str]:
    """Forest, conservation, oracle-equivalence and meter-audit checks; returns failures."""
    topology = spec.topology or "complete:64"
    failures: list[str] = []
    g = parse_topology(topology, seed=spec.seed)
    local = spec.drr_mode == "local" or (spec.drr_mode is None and g.kind is not GraphKind.COMPLETE)
    for k in range(spec.trials):
        ts = trial_seed(spec.seed, k)
        rng = np.random.default_rng(ts)
        hook = _drop_first(inject_drop) if inject_drop else None
        sim = NetworkSim(g.n, spec.delta, rng=np.random.default_rng(ts + 1), drop_hook=hook)
        f = drr.run_local_drr(sim, g, rng) if local else drr.run_drr(sim, g.n, rng)
        for p in drr.validate_forest(f):
            failures.append(f"trial {k} forest: {p}")

        vals = rng.integers(-1000, 1000, size=g.n)
        mx = aggregation.convergecast_max(sim, f, vals)
        sm = aggregation.convergecast_sum(sim, f, vals)
        for r, v, s, size in zip(f.roots.tolist(), mx.local_max.tolist(),
                                 sm.local_sum.tolist(), sm.tree_size.tolist()):
            members = f.root_of == r
            if v != vals[members].max() or s != vals[members].sum() or size != members.sum():
                failures.append(f"trial {k} convergecast: root {r} disagrees with direct scan")
        if int(sm.tree_size.sum()) != g.n or int(sm.local_sum.sum()) != int(vals.sum()):
            failures.append(f"trial {k} convergecast: totals not conserved")

        if g.n > 1 and spec.delta < 0.5:
            budgets = gossip.GossipBudgets.defaults(g.n, spec.delta, m=f.m)
            ave = gossip.gossip_ave(sim, f, sm.local_sum.astype(float), sm.tree_size, budgets, rng=rng)
            if spec.delta == 0.0:
                s0 = float(vals.sum())
                for t, s, gg, _ in ave.totals:
                    if abs(s - s0) > 1e-9 * max(abs(s0), 1.0) or abs(gg - g.n) > 1e-9 * g.n:
                        failures.append(f"trial {k} push-sum: mass drifted at round {t}")
                        break
            est = gossip.gossip_max(sim, f, mx.local_max, budgets, rng=rng)
            if np.any(est > vals.max()):
                failures.append(f"trial {k} gossip-max: estimate above the true max")

        for p in sim.audit():
            failures.append(f"trial {k} meters: {p}")
    return failures


def cmd_validate(spec: ExperimentSpec, inject_drop: str | None = None) -> int:
    spec.validate(need_protocol=False)
    failures = run_checks(spec, inject_drop)
    for line in failures:
        print(f"FAIL {line}", file=sys.stderr)
    print("validate: " + ("ok" if not failures else f"{len(failures)} check(s) failed"))
    return EXIT_OK if not failures else EXIT_CHECK


# -- report ------------------------------------------------------------------------

def cmd_report(paths: list[str], out: str | None = None, reference: str | None = None) -> int:
    runs = []
    for p in paths:
        runs += load_runs(p)
    if not runs:
        raise SpecError("no runs in the given metrics files")
    summary = summarize(runs)
    rows = comparison_table(summary, reference)
    lines = [ComparisonRow.CSV_HEADER] + [r.csv_row() for r in rows]
    print("\n".join(lines))
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    for protocol in sorted({r.protocol for r in summary.rows}):
        pts = [(r.n, r.messages.mean) for r in summary.rows if r.protocol == protocol]
        rpts = [(r.n, r.rounds.mean) for r in summary.rows if r.protocol == protocol]
        if len(pts) < 3:
            continue
        print(f"\n{protocol}: growth fits (regressor, slope, r2)")
        for name in ("n", "n log2 n", "n log2 log2 n"):
            fit = fit_growth(pts, name)
            print(f"  messages ~ {name}: slope={fit.slope:.4g} r2={fit.r2:.6f}")
        for name in ("log2 n", "(log2 n)^2"):
            fit = fit_growth(rpts, name)
            print(f"  rounds ~ {name}: slope={fit.slope:.4g} r2={fit.r2:.6f}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        if args.command == "report":
            return cmd_report(args.paths, args.out, args.reference)
        spec = spec_from_args(args)
        if args.command == "run":
            return cmd_run(spec)
        if args.command == "sweep":
            return cmd_sweep(spec, args.summary)
        return cmd_validate(spec, args.inject_drop)
    except (SpecError, ConfigError, GraphError, ConstructionError, MetricsFormatError) as exc:
        print(f"drrgossip: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
