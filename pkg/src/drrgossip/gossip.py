"""Root-level gossip: max with sampling, data spread, push-sum averaging.

Roots talk to each other by calling a uniformly random node of V; a non-root
that gets called relays to its root. A root is therefore hit with probability
proportional to its tree size. Each round is two-stage: every send is decided
first, then all deliveries are applied, so node iteration order never matters.

Also here: the plain push-sum baseline over all n nodes, and an instrumented
push-sum that tracks full contribution vectors to measure potential contraction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .drr import Forest
from .topology import chord_hops
from .transport import NetworkSim, Phase, two_hop_many


@dataclass(frozen=True)
class GossipBudgets:
    gossip_rounds: int
    sampling_rounds: int
    ave_rounds: int
    c: float = 0.25
    alpha: float = 1.0

    def __post_init__(self):
        for name in ("gossip_rounds", "sampling_rounds", "ave_rounds"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 < self.c < 1.0:
            raise ValueError(f"c must lie in (0, 1), got {self.c}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")

    @classmethod
    def defaults(cls, n: int, delta: float = 0.0, m: int | None = None,
                 c: float = 0.25, alpha: float = 1.0) -> "GossipBudgets":
        """Round budgets shaped after the convergence arguments, with c and alpha exposed.

        gossip:   ceil(8 log n / (1 - 2 delta)) + ceil(log_beta n),
                  beta = 1 + (1 - 2c)(1 - 2 delta) / 2
        sampling: ceil(log n / c)
        average:  ceil(log m + 2 alpha log n)
        """
        if not 0.0 <= delta < 0.5:
            raise ValueError(f"default budgets need delta in [0, 1/2), got {delta}")
        if not 0.0 < c < 0.5:
            raise ValueError(f"default budgets need c in (0, 1/2), got {c}")
        lg = math.log2(n) if n > 1 else 0.0
        if m is None:
            lm = lg
        else:
            lm = math.log2(m) if m > 1 else 0.0
        beta = 1.0 + (1.0 - 2 * c) * (1.0 - 2 * delta) / 2.0
        return cls(
            gossip_rounds=math.ceil(8 * lg / (1 - 2 * delta)) + math.ceil(lg / math.log2(beta)),
            sampling_rounds=math.ceil(lg / c),
            ave_rounds=math.ceil(lm + 2 * alpha * lg),
            c=c,
            alpha=alpha,
        )

    def with_overrides(self, **kw) -> "GossipBudgets":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass(frozen=True)
class RootState:
    root: int
    est_max: float | None = None
    s: float = 0.0
    g: float = 0.0
    w: float = 1.0


@dataclass(frozen=True, eq=False)
class Router:
    """Hop costs for reaching arbitrary nodes.

    ``ring=None`` means direct calls (one hop each). Otherwise legs are routed
    greedily on a full Chord ring of that size; ``ids`` maps simulated node
    indices to ring ids when some ring positions were removed.
    """

    ring: int | None = None
    ids: np.ndarray | None = None

    def hops(self, src, dst):
        if self.ring is None:
            return None
        src = np.asarray(src)
        dst = np.asarray(dst)
        if self.ids is not None:
            src, dst = self.ids[src], self.ids[dst]
        return chord_hops(self.ring, src, dst)


DIRECT = Router()


def pick_targets(rng: np.random.Generator, src: np.ndarray, n: int) -> np.ndarray:
    """One uniform node of V minus the caller, per caller."""
    t = rng.integers(n - 1, size=len(src))
    return t + (t >= src)


def _root_index(f: Forest) -> np.ndarray:
    ridx = np.full(f.n, -1, dtype=np.int64)
    ridx[f.roots] = np.arange(f.m)
    return ridx


def _floor(dtype) -> object:
    if np.issubdtype(dtype, np.integer):
        return np.iinfo(dtype).min
    return -np.inf


def _fold_max(val, has, recv, incoming):
    """In-place max fold of delivered values into receiving roots."""
    if recv.size == 0:
        return
    tmp = np.where(has, val, _floor(val.dtype))
    np.maximum.at(tmp, recv, incoming)
    has[recv] = True
    val[has] = tmp[has]


def spread_max(
    sim: NetworkSim,
    f: Forest,
    init: np.ndarray,
    present: np.ndarray,
    budgets: GossipBudgets,
    *,
    rng: np.random.Generator,
    root_of: np.ndarray | None = None,
    router: Router = DIRECT,
    phases: tuple[Phase, Phase] = (Phase.GOSSIP_MAX, Phase.GOSSIP_SAMPLE),
    fields: int = 1,
    trace: list | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Gossip procedure followed by the sampling procedure.

    ``init``/``present`` are aligned with ``f.roots``; an absent entry is the
    identity of the max fold. Returns the final (values, present) pair.
    """
    roots = f.roots
    root_of = f.root_of if root_of is None else np.asarray(root_of)
    ridx = _root_index(f)
    val = np.array(init, copy=True)
    has = np.array(present, dtype=bool, copy=True)
    if trace is not None:
        trace.append((val.copy(), has.copy()))
    if f.n == 1:
        return val, has
    gossip_phase, sample_phase = phases

    for _ in range(budgets.gossip_rounds):
        snap_val, snap_has = val.copy(), has.copy()
        with sim.step(gossip_phase) as h:
            tgt = pick_targets(rng, roots, f.n)
            res = two_hop_many(
                sim, h, roots, tgt, root_of, fields=fields,
                hops_first=router.hops(roots, tgt),
                hops_forward=router.hops(tgt, root_of[tgt]),
            )
        ok = res.delivered & snap_has
        _fold_max(val, has, ridx[res.root[ok]], snap_val[ok])
        if trace is not None:
            trace.append((val.copy(), has.copy()))

    for _ in range(budgets.sampling_rounds):
        snap_val, snap_has = val.copy(), has.copy()
        with sim.step(sample_phase) as h:
            tgt = pick_targets(rng, roots, f.n)
            h1 = router.hops(roots, tgt)
            h2 = router.hops(tgt, root_of[tgt])
            res = two_hop_many(sim, h, roots, tgt, root_of, fields=1,
                               hops_first=h1, hops_forward=h2)
            asked = np.flatnonzero(res.delivered & (res.root != roots))
            answerer = res.root[asked]
            h3 = router.hops(answerer, roots[asked])
            ok = sim.send_many(h, answerer, fields=fields, initiation=False, hops=h3)
            if h3 is not None:
                chain = h1[asked] + np.where(res.forwarded[asked], h2[asked], 0) + h3
                h.note_latency(chain)
        inquirer = asked[ok]
        src = ridx[answerer[ok]]
        keep = snap_has[src]
        _fold_max(val, has, inquirer[keep], snap_val[src[keep]])
        if trace is not None:
            trace.append((val.copy(), has.copy()))
    return val, has


def gossip_max(
    sim: NetworkSim,
    f: Forest,
    init,
    budgets: GossipBudgets,
    *,
    rng: np.random.Generator,
    root_of: np.ndarray | None = None,
    router: Router = DIRECT,
    fields: int = 1,
    trace: list | None = None,
) -> np.ndarray:
    """Every root's estimate of the max of ``init`` (array over roots or dict root -> value)."""
    if isinstance(init, dict):
        missing = [r for r in f.roots.tolist() if r not in init]
        if missing:
            raise ValueError(f"gossip_max init missing roots {missing[:5]}")
        init = np.array([init[r] for r in f.roots.tolist()])
    init = np.asarray(init)
    if init.shape != (f.m,):
        raise ValueError(f"gossip_max init needs {f.m} root values, got shape {init.shape}")
    val, _ = spread_max(sim, f, init, np.ones(f.m, dtype=bool), budgets, rng=rng,
                        root_of=root_of, router=router, fields=fields, trace=trace)
    return val


def data_spread(
    sim: NetworkSim,
    f: Forest,
    source_root: int,
    value,
    budgets: GossipBudgets,
    *,
    rng: np.random.Generator,
    root_of: np.ndarray | None = None,
    router: Router = DIRECT,
) -> tuple[np.ndarray, np.ndarray]:
    """Spread one root's value; everyone else starts absent."""
    ridx = _root_index(f)
    if not 0 <= source_root < f.n or ridx[source_root] < 0:
        raise ValueError(f"data_spread source {source_root} is not a root")
    init = np.zeros(f.m, dtype=np.asarray(value).dtype)
    present = np.zeros(f.m, dtype=bool)
    init[ridx[source_root]] = value
    present[ridx[source_root]] = True
    return spread_max(sim, f, init, present, budgets, rng=rng, root_of=root_of,
                      router=router, phases=(Phase.DATA_SPREAD, Phase.DATA_SPREAD))


@dataclass(eq=False)
class AveResult:
    roots: np.ndarray
    estimate: np.ndarray
    s: np.ndarray
    g: np.ndarray
    w: np.ndarray
    totals: list[tuple[int, float, float, float]] = field(default_factory=list)
    history: list[np.ndarray] | None = None

    def states(self) -> list[RootState]:
        return [
            RootState(root=int(r), s=float(s), g=float(g), w=float(w))
            for r, s, g, w in zip(self.roots, self.s, self.g, self.w)
        ]

    def trace_csv(self) -> list[str]:
        rows = ["round,root,estimate"]
        for t, est in enumerate(self.history or []):
            rows += [f"{t},{r},{e!r}" for r, e in zip(self.roots.tolist(), est.tolist())]
        return rows


def gossip_ave(
    sim: NetworkSim,
    f: Forest,
    s0,
    g0,
    budgets: GossipBudgets,
    *,
    rng: np.random.Generator,
    root_of: np.ndarray | None = None,
    router: Router = DIRECT,
    keep_history: bool = False,
) -> AveResult:
    """Push-sum over roots on (tree sum, tree size) pairs.

    Each round every root keeps half of (s, g, w) and ships the other half to a
    random node, which relays it to its root. A lost half is lost mass. ``w`` is
    the unit-start diagnostic weight and plays no part in the estimate.
    """
    g = np.array(g0, dtype=np.float64)
    s = np.array(s0, dtype=np.float64)
    if s.shape != (f.m,) or g.shape != (f.m,):
        raise ValueError(f"gossip_ave needs {f.m} (s, g) pairs")
    if np.any(g <= 0):
        raise ValueError("gossip_ave needs every tree size g > 0")
    w = np.ones(f.m)
    roots = f.roots
    root_of = f.root_of if root_of is None else np.asarray(root_of)
    ridx = _root_index(f)
    totals = [(0, float(s.sum()), float(g.sum()), float(w.sum()))]
    history = [s / g] if keep_history else None
    rounds = budgets.ave_rounds if f.n > 1 else 0
    for t in range(1, rounds + 1):
        with sim.step(Phase.GOSSIP_AVE) as h:
            tgt = pick_targets(rng, roots, f.n)
            res = two_hop_many(
                sim, h, roots, tgt, root_of, fields=3,
                hops_first=router.hops(roots, tgt),
                hops_forward=router.hops(tgt, root_of[tgt]),
            )
        s, g, w = s / 2, g / 2, w / 2
        ok = res.delivered
        recv = ridx[res.root[ok]]
        s = s + np.bincount(recv, weights=s[ok], minlength=f.m)
        g = g + np.bincount(recv, weights=g[ok], minlength=f.m)
        w = w + np.bincount(recv, weights=w[ok], minlength=f.m)
        totals.append((t, float(s.sum()), float(g.sum()), float(w.sum())))
        if keep_history:
            history.append(s / g)
    return AveResult(roots=roots, estimate=s / g, s=s, g=g, w=w, totals=totals, history=history)


def uniform_push_sum_baseline(
    sim: NetworkSim,
    n: int,
    vals,
    rounds: int,
    *,
    rng: np.random.Generator,
    router: Router = DIRECT,
) -> np.ndarray:
    """Plain push-sum on all n nodes; returns every node's s / w estimate."""
    if n < 1:
        raise ValueError("n must be >= 1")
    s = np.array(vals, dtype=np.float64)
    w = np.ones(n)
    if n == 1:
        return s / w
    src = np.arange(n)
    for _ in range(rounds):
        with sim.step(Phase.BASELINE) as h:
            tgt = pick_targets(rng, src, n)
            ok = sim.send_many(h, src, fields=2, hops=router.hops(src, tgt))
        s, w = s / 2, w / 2
        s = s + np.bincount(tgt[ok], weights=s[ok], minlength=n)
        w = w + np.bincount(tgt[ok], weights=w[ok], minlength=n)
    return s / w


def contraction_factor(p) -> float:
    """Exact one-round E[phi_{t+1}] / phi_t of lossless push-sum.

    ``p[i]`` is the probability that a sender picks root i (including itself);
    the factor is 1/2 - sum(p_i^2) / 4.
    """
    p = np.asarray(p, dtype=np.float64)
    return 0.5 - 0.25 * float(np.sum(p * p))


def potential(y: np.ndarray) -> np.ndarray:
    """sum_{i,j} (y_ij - w_i/m)^2 over the last two axes of contribution matrices."""
    m = y.shape[-1]
    w = y.sum(axis=-1, keepdims=True)
    return ((y - w / m) ** 2).sum(axis=(-2, -1))


@dataclass(frozen=True, eq=False)
class PotentialTrace:
    phi0: float
    mean_ratio: np.ndarray      # per round, mean over trials of phi_{t+1}/phi_t
    mean_phi: np.ndarray        # per round boundary, mean over trials
    selection: np.ndarray       # P_i = (1 - delta) g_i / n


def track_push_sum_potential(
    m: int,
    tree_sizes,
    delta: float,
    trials: int,
    rounds: int,
    *,
    rng: np.random.Generator,
) -> PotentialTrace:
    """Push-sum among m roots with full contribution vectors y (one-hot at start).

    A root picks root j with probability g_j / n and the half arrives with
    probability 1 - delta. Tracks phi_t per trial.
    """
    sizes = np.asarray(tree_sizes, dtype=np.float64)
    if m < 2:
        raise ValueError("potential tracking needs m >= 2")
    if sizes.shape != (m,):
        raise ValueError(f"need {m} tree sizes, got {sizes.shape}")
    if np.any(sizes <= 0):
        raise ValueError("tree sizes must be positive")
    n = sizes.sum()
    pick = sizes / n
    y = np.broadcast_to(np.eye(m), (trials, m, m)).copy()
    phi = potential(y)
    phis = [phi.mean()]
    ratios = []
    rows = np.arange(trials)[:, None]
    cols = np.arange(m)[None, :]
    for _ in range(rounds):
        tgt = rng.choice(m, size=(trials, m), p=pick)
        arrive = rng.random((trials, m)) >= delta if delta > 0 else np.ones((trials, m), bool)
        move = np.zeros((trials, m, m))
        np.add.at(move, (rows, tgt, np.broadcast_to(cols, tgt.shape)), arrive.astype(np.float64))
        half = 0.5 * y
        y = half + np.matmul(move, half)
        nxt = potential(y)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = nxt / phi
        ratios.append(float(np.nanmean(np.where(phi > 0, r, np.nan))))
        phis.append(nxt.mean())
        phi = nxt
    return PotentialTrace(
        phi0=float(phis[0]),
        mean_ratio=np.array(ratios),
        mean_phi=np.array(phis),
        selection=(1.0 - delta) * pick,
    )
