"""End-to-end runs: DRR-gossip-max, DRR-gossip-ave, the push-sum baseline, forest-only runs.

Every run owns one NetworkSim and four independent random streams split from
the config seed: graph construction, node values, protocol choices (ranks,
targets) and link failures. Protocol choices therefore do not depend on delta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import aggregation, drr, gossip
from .drr import Forest, ForestStats, forest_stats, validate_forest
from .gossip import GossipBudgets, Router
from .topology import Graph, GraphKind, parse_topology
from .transport import MeterSnapshot, NetworkSim

PROTOCOLS = ("drr-gossip-max", "drr-gossip-ave", "uniform-push-sum", "drr-only", "local-drr-only")
AGGREGATES = ("max", "sum", "ave", "count")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BudgetOverrides:
    gossip_rounds: int | None = None
    sampling_rounds: int | None = None
    ave_rounds: int | None = None
    baseline_rounds: int | None = None
    c: float | None = None
    alpha: float | None = None


@dataclass(frozen=True)
class ProtocolConfig:
    topology: str = "complete:1024"
    delta: float = 0.0
    seed: int = 0
    values: str = "uniform:0,1"
    drr_mode: str | None = None          # "sampled", "local", or None to follow the topology
    budgets: BudgetOverrides = field(default_factory=BudgetOverrides)
    probe_budget: int | None = None
    count_probe_replies: bool = False
    forward_batching: bool = True
    crash_fraction: float = 0.0
    tolerance: float | None = None
    drop_hook: object = field(default=None, compare=False, repr=False)


@dataclass(eq=False)
class ProtocolResult:
    protocol: str
    n: int
    answers: np.ndarray | None
    oracle: float | None
    meters: MeterSnapshot
    forest: ForestStats | None
    correct: bool
    max_rel_error: float
    diagnostics: dict = field(default_factory=dict)


def oracle_aggregate(vals, kind: str) -> float:
    """Direct single-pass aggregate; the ground truth protocols are scored against."""
    vals = np.asarray(vals)
    if vals.size == 0:
        raise ValueError("empty input has no aggregate")
    if kind == "max":
        return vals.max().item()
    if kind == "sum":
        return vals.sum().item()
    if kind == "ave":
        return float(math.fsum(vals.tolist()) / vals.size)
    if kind == "count":
        return int(vals.size)
    raise ValueError(f"unknown aggregate {kind!r}; expected one of {AGGREGATES}")


def parse_values(spec: str):
    """``uniform:a,b`` | ``constant:v`` | ``zipf:s`` -> sampler(rng, n)."""
    kind, _, arg = spec.partition(":")
    try:
        if kind == "uniform":
            a, b = (float(x) for x in arg.split(","))
            if not b > a:
                raise ConfigError(f"uniform needs a < b, got {spec!r}")
            return lambda rng, n: rng.uniform(a, b, size=n)
        if kind == "constant":
            v = float(arg)
            return lambda rng, n: np.full(n, v)
        if kind == "zipf":
            s = float(arg)
            if s <= 1:
                raise ConfigError(f"zipf exponent must exceed 1, got {s}")
            return lambda rng, n: rng.zipf(s, size=n).astype(np.float64)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value distribution {spec!r}") from None
    raise ConfigError(f"unknown value distribution {spec!r}")


def _rel_errors(answers: np.ndarray, truth: float) -> np.ndarray:
    scale = abs(truth) if truth != 0 else 1.0
    return np.abs(answers - truth) / scale


@dataclass(eq=False)
class _Setup:
    graph: Graph
    alive: np.ndarray          # original ids of surviving nodes
    n_total: int
    sub: Graph                 # graph over survivors, relabelled 0..n-1
    router: Router
    vals: np.ndarray           # survivor values
    sim: NetworkSim
    rng: np.random.Generator   # protocol choices

    @property
    def n(self) -> int:
        return len(self.alive)


def _induced(g: Graph, alive: np.ndarray) -> Graph:
    if g.kind is GraphKind.COMPLETE:
        return Graph(n=len(alive), kind=GraphKind.COMPLETE)
    relabel = np.full(g.n, -1, dtype=np.int64)
    relabel[alive] = np.arange(len(alive))
    adjacency = []
    for i in alive.tolist():
        nb = relabel[g.adjacency[i]]
        adjacency.append(np.sort(nb[nb >= 0]))
    kind = GraphKind.CUSTOM if g.kind is GraphKind.DREGULAR else g.kind
    return Graph(n=len(alive), kind=kind, adjacency=tuple(adjacency),
                 chord_bits=g.chord_bits, fingers=g.fingers)


def _setup(cfg: ProtocolConfig) -> _Setup:
    if not 0.0 <= cfg.delta < 1.0:
        raise ConfigError(f"delta must lie in [0, 1), got {cfg.delta}")
    if not 0.0 <= cfg.crash_fraction < 1.0:
        raise ConfigError(f"crash_fraction must lie in [0, 1), got {cfg.crash_fraction}")
    graph_ss, value_ss, proto_ss, link_ss = np.random.SeedSequence(cfg.seed).spawn(4)
    try:
        g = parse_topology(cfg.topology, seed=int(graph_ss.generate_state(1)[0]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sampler = parse_values(cfg.values)
    value_rng = np.random.default_rng(value_ss)
    all_vals = sampler(value_rng, g.n)
    crashed = int(math.floor(cfg.crash_fraction * g.n))
    if crashed:
        alive = np.sort(value_rng.choice(g.n, size=g.n - crashed, replace=False))
    else:
        alive = np.arange(g.n)
    sub = g if not crashed else _induced(g, alive)
    if g.kind is GraphKind.CHORD:
        router = Router(ring=g.n, ids=alive if crashed else None)
    else:
        router = Router()
    sim = NetworkSim(
        len(alive), cfg.delta, rng=np.random.default_rng(link_ss),
        forward_batching=cfg.forward_batching, drop_hook=cfg.drop_hook,
    )
    return _Setup(graph=g, alive=alive, n_total=g.n, sub=sub, router=router,
                  vals=all_vals[alive], sim=sim, rng=np.random.default_rng(proto_ss))


def _build_forest(cfg: ProtocolConfig, st: _Setup, mode: str | None = None) -> Forest:
    mode = mode or cfg.drr_mode or ("sampled" if st.sub.kind is GraphKind.COMPLETE else "local")
    if mode == "sampled":
        return drr.run_drr(st.sim, st.n, st.rng, probe_budget=cfg.probe_budget,
                           count_probe_replies=cfg.count_probe_replies)
    if mode == "local":
        if st.sub.kind is GraphKind.COMPLETE:
            raise ConfigError("local DRR needs a topology with explicit adjacency")
        return drr.run_local_drr(st.sim, st.sub, st.rng)
    raise ConfigError(f"unknown drr mode {mode!r}")


def _budgets(cfg: ProtocolConfig, n: int, m: int) -> GossipBudgets:
    o = cfg.budgets
    c = o.c if o.c is not None else 0.25
    alpha = o.alpha if o.alpha is not None else 1.0
    if cfg.delta < 0.5:
        base = GossipBudgets.defaults(n, cfg.delta, m=m, c=min(c, 0.49), alpha=alpha)
        base = base.with_overrides(c=c)
    else:
        missing = [k for k in ("gossip_rounds", "sampling_rounds", "ave_rounds") if getattr(o, k) is None]
        if missing:
            raise ConfigError(f"delta >= 1/2 needs explicit budgets for {missing}")
        base = GossipBudgets(0, 0, 0, c=c, alpha=alpha)
    return base.with_overrides(gossip_rounds=o.gossip_rounds, sampling_rounds=o.sampling_rounds,
                               ave_rounds=o.ave_rounds)


def _spread_answers(st: _Setup, per_node: np.ndarray) -> np.ndarray:
    out = np.full(st.n_total, np.nan)
    out[st.alive] = per_node
    return out


def _finish(protocol, cfg, st, forest, answers, truth, tol, diagnostics) -> ProtocolResult:
    errs = _rel_errors(answers, truth)
    worst = float(errs.max())
    return ProtocolResult(
        protocol=protocol,
        n=st.n,
        answers=_spread_answers(st, answers),
        oracle=truth,
        meters=st.sim.snapshot_metrics(),
        forest=forest_stats(forest) if forest is not None else None,
        correct=bool(worst <= tol),
        max_rel_error=worst,
        diagnostics=diagnostics,
    )


def drr_gossip_max(cfg: ProtocolConfig) -> ProtocolResult:
    """Forest, root addresses down, tree max up, gossip-max among roots, result down."""
    st = _setup(cfg)
    f = _build_forest(cfg, st)
    root_of = aggregation.broadcast_down(st.sim, f, f.roots)
    local = aggregation.convergecast_max(st.sim, f, st.vals)
    budgets = _budgets(cfg, st.n, f.m)
    est = gossip.gossip_max(st.sim, f, local.local_max, budgets, rng=st.rng,
                            root_of=root_of, router=st.router)
    answers = aggregation.broadcast_down(st.sim, f, est)
    truth = oracle_aggregate(st.vals, "max")
    diag = {
        "roots": f.m,
        "consensus": bool(np.all(est == est[0])),
        "roots_with_max": int(np.sum(est == truth)),
        "budgets": budgets,
        "audit": st.sim.audit(),
    }
    tol = 0.0 if cfg.tolerance is None else cfg.tolerance
    return _finish("drr-gossip-max", cfg, st, f, answers, truth, tol, diag)


def drr_gossip_ave(cfg: ProtocolConfig) -> ProtocolResult:
    """Forest, addresses down, (sum, size) up, find the largest tree, push-sum, spread, down."""
    st = _setup(cfg)
    f = _build_forest(cfg, st)
    root_of = aggregation.broadcast_down(st.sim, f, f.roots)
    local = aggregation.convergecast_sum(st.sim, f, st.vals)
    budgets = _budgets(cfg, st.n, f.m)

    # (size, id) pairs packed into one int64 so that max picks the larger id on size ties
    own_key = local.tree_size.astype(np.int64) * st.n + f.roots
    best_key = gossip.gossip_max(st.sim, f, own_key, budgets, rng=st.rng, root_of=root_of,
                                 router=st.router, fields=2)
    claim = best_key == own_key

    ave = gossip.gossip_ave(st.sim, f, local.local_sum, local.tree_size, budgets, rng=st.rng,
                            root_of=root_of, router=st.router)
    spread, got = gossip.spread_max(
        st.sim, f, ave.estimate, claim, budgets, rng=st.rng, root_of=root_of, router=st.router,
        phases=(gossip.Phase.DATA_SPREAD, gossip.Phase.DATA_SPREAD),
    )
    final = np.where(got, spread, ave.estimate)
    answers = aggregation.broadcast_down(st.sim, f, final)
    truth = oracle_aggregate(st.vals, "ave")
    z = int(np.argmax(own_key))
    diag = {
        "roots": f.m,
        "largest_root": int(f.roots[z]),
        "largest_claimants": int(claim.sum()),
        "largest_root_error": float(_rel_errors(ave.estimate[z:z + 1], truth)[0]),
        "spread_coverage": float(got.mean()),
        "ave_totals": ave.totals,
        "sum_s0": float(np.sum(local.local_sum)),
        "value_sum": oracle_aggregate(st.vals, "sum"),
        "budgets": budgets,
        "audit": st.sim.audit(),
    }
    tol = 1e-2 if cfg.tolerance is None else cfg.tolerance
    return _finish("drr-gossip-ave", cfg, st, f, answers, truth, tol, diag)


def uniform_push_sum(cfg: ProtocolConfig) -> ProtocolResult:
    st = _setup(cfg)
    b = cfg.budgets
    rounds = b.baseline_rounds
    if rounds is None:
        alpha = b.alpha if b.alpha is not None else 1.0
        lg = math.log2(st.n) if st.n > 1 else 0.0
        rounds = math.ceil(lg + 2 * alpha * lg)
    est = gossip.uniform_push_sum_baseline(st.sim, st.n, st.vals, rounds, rng=st.rng,
                                           router=st.router)
    truth = oracle_aggregate(st.vals, "ave")
    tol = 1e-2 if cfg.tolerance is None else cfg.tolerance
    diag = {"rounds": rounds, "audit": st.sim.audit()}
    return _finish("uniform-push-sum", cfg, st, None, est, truth, tol, diag)


def _forest_only(cfg: ProtocolConfig, mode: str, name: str) -> ProtocolResult:
    st = _setup(cfg)
    f = _build_forest(cfg, st, mode)
    problems = validate_forest(f)
    return ProtocolResult(
        protocol=name, n=st.n, answers=None, oracle=None,
        meters=st.sim.snapshot_metrics(), forest=forest_stats(f),
        correct=not problems, max_rel_error=0.0,
        diagnostics={"forest_problems": problems, "audit": st.sim.audit(), "roots": f.m},
    )


def run_protocol(name: str, cfg: ProtocolConfig) -> ProtocolResult:
    if name == "drr-gossip-max":
        return drr_gossip_max(cfg)
    if name == "drr-gossip-ave":
        return drr_gossip_ave(cfg)
    if name == "uniform-push-sum":
        return uniform_push_sum(cfg)
    if name == "drr-only":
        return _forest_only(cfg, "sampled", name)
    if name == "local-drr-only":
        return _forest_only(cfg, "local", name)
    raise ConfigError(f"unknown protocol {name!r}; expected one of {PROTOCOLS}")
