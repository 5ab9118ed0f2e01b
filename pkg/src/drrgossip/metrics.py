"""Run records, sweep summaries, growth fits and protocol comparison tables.

Everything here is a pure function of its inputs. Means and variances use
``math.fsum`` so a summary does not depend on the order runs arrive in.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .transport import Phase

CSV_HEADER = ("run_id", "protocol", "n", "delta", "seed", "phase", "rounds", "msgs_sent", "msgs_delivered")
QUANTILES = (0.05, 0.5, 0.95)


class MetricsFormatError(ValueError):
    def __init__(self, source, reason: str):
        super().__init__(f"{source}: {reason}")
        self.source = source


@dataclass(frozen=True)
class PhaseCounts:
    rounds: int = 0
    msgs_sent: int = 0
    msgs_delivered: int = 0


@dataclass(frozen=True)
class RunMetrics:
    run_id: int
    protocol: str
    n: int
    delta: float
    seed: int
    phases: dict[str, PhaseCounts]
    correct: bool = True
    max_rel_error: float = 0.0
    forest: dict | None = None
    estimates: list[float] | None = None

    def __post_init__(self):
        unknown = set(self.phases) - {p.value for p in Phase}
        if unknown:
            raise ValueError(f"unknown phases {sorted(unknown)}")

    @property
    def rounds(self) -> int:
        return sum(p.rounds for p in self.phases.values())

    @property
    def msgs_sent(self) -> int:
        return sum(p.msgs_sent for p in self.phases.values())

    @property
    def msgs_delivered(self) -> int:
        return sum(p.msgs_delivered for p in self.phases.values())

    @classmethod
    def from_result(cls, run_id: int, result, *, delta: float, seed: int,
                    keep_estimates: bool = False) -> "RunMetrics":
        phases = {
            name: PhaseCounts(**counts) for name, counts in result.meters.as_dict().items()
        }
        forest = None
        if result.forest is not None:
            forest = {
                "tree_count": result.forest.tree_count,
                "max_size": result.forest.max_size,
                "max_height": result.forest.max_height,
            }
        estimates = None
        if keep_estimates and result.answers is not None:
            estimates = [None if math.isnan(x) else x for x in result.answers.tolist()]
        return cls(
            run_id=run_id, protocol=result.protocol, n=result.n, delta=float(delta), seed=int(seed),
            phases=phases, correct=bool(result.correct), max_rel_error=float(result.max_rel_error),
            forest=forest, estimates=estimates,
        )

    # -- serialization ----------------------------------------------------
    def to_json(self) -> str:
        d = asdict(self)
        d["totals"] = {"rounds": self.rounds, "msgs_sent": self.msgs_sent,
                       "msgs_delivered": self.msgs_delivered}
        if d["forest"] is None:
            del d["forest"]
        if d["estimates"] is None:
            del d["estimates"]
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "RunMetrics":
        d = json.loads(line)
        totals = d.pop("totals", None)
        d["phases"] = {k: PhaseCounts(**v) for k, v in d["phases"].items()}
        rm = cls(**d)
        if totals is not None and totals != {"rounds": rm.rounds, "msgs_sent": rm.msgs_sent,
                                             "msgs_delivered": rm.msgs_delivered}:
            raise ValueError("totals disagree with per-phase counts")
        return rm

    def csv_rows(self) -> list[tuple]:
        return [
            (self.run_id, self.protocol, self.n, self.delta, self.seed, name,
             c.rounds, c.msgs_sent, c.msgs_delivered)
            for name, c in self.phases.items()
        ]


def write_csv(runs: Iterable[RunMetrics], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in runs:
        w.writerows(r.csv_rows())


def read_csv(fh, source="<csv>") -> list[RunMetrics]:
    """Rebuild runs from the per-phase CSV; correctness fields are not in the CSV."""
    rows = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader, None)
    if header is None or tuple(header) != CSV_HEADER:
        raise MetricsFormatError(source, f"expected CSV header {','.join(CSV_HEADER)}")
    runs: dict[tuple, dict] = {}
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(CSV_HEADER):
            raise MetricsFormatError(source, f"line {lineno}: expected {len(CSV_HEADER)} fields")
        try:
            run_id, protocol, n, delta, seed = int(row[0]), row[1], int(row[2]), float(row[3]), int(row[4])
            counts = PhaseCounts(int(row[6]), int(row[7]), int(row[8]))
        except ValueError:
            raise MetricsFormatError(source, f"line {lineno}: bad number") from None
        key = (protocol, n, delta, seed, run_id)
        runs.setdefault(key, {})[row[5]] = counts
    try:
        return [
            RunMetrics(run_id=k[4], protocol=k[0], n=k[1], delta=k[2], seed=k[3], phases=ph)
            for k, ph in runs.items()
        ]
    except ValueError as exc:
        raise MetricsFormatError(source, str(exc)) from None


def read_jsonl(fh, source="<jsonl>") -> list[RunMetrics]:
    out = []
    for lineno, line in enumerate(fh, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            d = json.loads(line)
            if "header" in d:
                continue
            out.append(RunMetrics.from_json(line))
        except (ValueError, TypeError, KeyError) as exc:
            raise MetricsFormatError(source, f"line {lineno}: {exc}") from None
    return out


def load_runs(path) -> list[RunMetrics]:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise MetricsFormatError(path, exc.strerror or "unreadable") from None
    fh = io.StringIO(text)
    if str(path).endswith(".csv"):
        return read_csv(fh, path)
    return read_jsonl(fh, path)


# -- summaries --------------------------------------------------------------

@dataclass(frozen=True)
class Stat:
    mean: float
    std: float
    quantiles: tuple[float, ...]

    @classmethod
    def of(cls, xs: Sequence[float]) -> "Stat":
        xs = [float(x) for x in xs]
        k = len(xs)
        mean = math.fsum(xs) / k
        var = math.fsum((x - mean) ** 2 for x in xs) / k
        q = np.quantile(np.sort(xs), QUANTILES)
        return cls(mean=mean, std=math.sqrt(var), quantiles=tuple(float(v) for v in q))


@dataclass(frozen=True)
class SummaryRow:
    protocol: str
    n: int
    trials: int
    rounds: Stat
    messages: Stat
    correct_rate: float
    ratios: dict[str, float] = field(default_factory=dict)

    CSV_HEADER = (
        "protocol,n,trials,rounds_mean,rounds_std,rounds_p05,rounds_p50,rounds_p95,"
        "msgs_mean,msgs_std,msgs_p05,msgs_p50,msgs_p95,correct_rate,"
        "msgs_per_n_loglog,msgs_per_n_log,rounds_per_log,rounds_per_log2"
    )

    def csv_row(self) -> str:
        vals = [self.rounds.mean, self.rounds.std, *self.rounds.quantiles,
                self.messages.mean, self.messages.std, *self.messages.quantiles,
                self.correct_rate, *self.ratios.values()]
        return ",".join([self.protocol, str(self.n), str(self.trials)] + [f"{v:.10g}" for v in vals])


@dataclass(frozen=True)
class SweepSummary:
    rows: tuple[SummaryRow, ...]

    def row(self, protocol: str, n: int) -> SummaryRow:
        for r in self.rows:
            if r.protocol == protocol and r.n == n:
                return r
        raise KeyError((protocol, n))

    def to_csv(self) -> str:
        return "\n".join([SummaryRow.CSV_HEADER] + [r.csv_row() for r in self.rows]) + "\n"


def _ratios(n: int, rounds: float, msgs: float) -> dict[str, float]:
    lg = math.log2(n) if n > 1 else float("nan")
    llg = math.log2(lg) if n > 2 else float("nan")
    nan = float("nan")
    return {
        "msgs_per_n_loglog": msgs / (n * llg) if n > 2 else nan,
        "msgs_per_n_log": msgs / (n * lg) if n > 1 else nan,
        "rounds_per_log": rounds / lg if n > 1 else nan,
        "rounds_per_log2": rounds / lg**2 if n > 1 else nan,
    }


def summarize(runs: Sequence[RunMetrics]) -> SweepSummary:
    """Descriptive statistics per (protocol, n), rows sorted by protocol then n."""
    runs = list(runs)
    if not runs:
        raise ValueError("cannot summarize an empty set of runs")
    groups: dict[tuple[str, int], list[RunMetrics]] = {}
    for r in runs:
        groups.setdefault((r.protocol, r.n), []).append(r)
    rows = []
    for (protocol, n), rs in sorted(groups.items()):
        rounds = Stat.of([r.rounds for r in rs])
        msgs = Stat.of([r.msgs_sent for r in rs])
        rows.append(SummaryRow(
            protocol=protocol, n=n, trials=len(rs), rounds=rounds, messages=msgs,
            correct_rate=sum(r.correct for r in rs) / len(rs),
            ratios=_ratios(n, rounds.mean, msgs.mean),
        ))
    return SweepSummary(rows=tuple(rows))


# -- growth fits ------------------------------------------------------------

def _loglog(n):
    return np.log2(np.log2(n))


REGRESSORS = {
    "log2 n": np.log2,
    "log2 log2 n": _loglog,
    "(log2 n)^2": lambda n: np.log2(n) ** 2,
    "n": lambda n: n,
    "n log2 n": lambda n: n * np.log2(n),
    "n log2 log2 n": lambda n: n * _loglog(n),
}


@dataclass(frozen=True)
class GrowthFit:
    regressor: str
    slope: float
    intercept: float
    r2: float


def fit_growth(points: Sequence[tuple[float, float]], regressor: str) -> GrowthFit:
    """Least-squares y = slope * g(n) + intercept."""
    if regressor not in REGRESSORS:
        raise ValueError(f"unknown regressor {regressor!r}; choose from {list(REGRESSORS)}")
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (n, y) pairs")
    n, y = pts[:, 0], pts[:, 1]
    if len(np.unique(n)) < 3:
        raise ValueError("growth fits need at least 3 distinct n")
    if np.any(n <= 2) and "log2 log2" in regressor:
        raise ValueError("log2 log2 n needs every n > 2")
    if np.any(n <= 0):
        raise ValueError("n must be positive")
    x = REGRESSORS[regressor](n)
    if not np.all(np.isfinite(x)) or np.ptp(x) == 0:
        raise ValueError(f"regressor {regressor!r} is degenerate on these n")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        r2 = 1.0
        slope, intercept = 0.0, float(y.mean())
    else:
        r2 = 1.0 - ss_res / ss_tot
    return GrowthFit(regressor=regressor, slope=float(slope), intercept=float(intercept), r2=r2)


def best_power_of_log(points: Sequence[tuple[float, float]], exponents=None) -> tuple[float, list]:
    """Pick e so that y ~ a (log2 n)^e + b fits best; returns (e, [(e, r2), ...])."""
    pts = np.asarray(points, dtype=np.float64)
    exponents = np.round(np.arange(0.5, 4.01, 0.05), 2) if exponents is None else exponents
    n, y = pts[:, 0], pts[:, 1]
    scores = []
    for e in exponents:
        x = np.log2(n) ** e
        slope, icpt = np.polyfit(x, y, 1)
        resid = y - slope * x - icpt
        ss_tot = float(((y - y.mean()) ** 2).sum())
        scores.append((float(e), 1.0 - float(resid @ resid) / ss_tot if ss_tot else 1.0))
    best = max(scores, key=lambda t: t[1])[0]
    return best, scores


# -- comparison -------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonRow:
    protocol: str
    n: int
    rounds: float
    messages: float
    rounds_ratio: float
    messages_ratio: float

    CSV_HEADER = "protocol,n,rounds_mean,msgs_mean,rounds_ratio,msgs_ratio"

    def csv_row(self) -> str:
        return (f"{self.protocol},{self.n},{self.rounds:.10g},{self.messages:.10g},"
                f"{self.rounds_ratio:.6g},{self.messages_ratio:.6g}")


def comparison_table(summary: SweepSummary, reference: str | None = None) -> list[ComparisonRow]:
    """Rounds and messages of every protocol relative to ``reference`` at the same n."""
    protocols = sorted({r.protocol for r in summary.rows})
    if reference is None:
        reference = "drr-gossip-ave" if "drr-gossip-ave" in protocols else protocols[0]
    ref = {r.n: r for r in summary.rows if r.protocol == reference}
    out = []
    for r in summary.rows:
        base = ref.get(r.n)
        if base is None:
            rr = mr = float("nan")
        else:
            rr = r.rounds.mean / base.rounds.mean if base.rounds.mean else float("nan")
            mr = r.messages.mean / base.messages.mean if base.messages.mean else float("nan")
        out.append(ComparisonRow(r.protocol, r.n, r.rounds.mean, r.messages.mean, rr, mr))
    return out
