"""Tree-local aggregation: convergecast up to each root, broadcast back down.

Scheduling is level-synchronous. A node reports to its parent only after all
of its children have reported, and a report lost on the link is resent the
next round until it gets through. The parent's acknowledgement rides on the
same exchange and is not metered separately. With no loss, both directions
take exactly (max tree height) rounds and n - |roots| messages.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .drr import NO_PARENT, Forest, validate_forest
from .transport import ModelViolation, NetworkSim, Phase


@dataclass(frozen=True, eq=False)
class RootAggregates:
    """Per-root tree aggregates, aligned with ``roots``."""

    roots: np.ndarray
    local_max: np.ndarray | None = None
    local_sum: np.ndarray | None = None
    tree_size: np.ndarray | None = None

    def as_dict(self) -> dict[int, object]:
        out = {}
        for k, r in enumerate(self.roots.tolist()):
            if self.local_max is not None:
                out[r] = self.local_max[k].item()
            else:
                out[r] = (self.local_sum[k].item(), int(self.tree_size[k]))
        return out

    def csv_rows(self) -> list[str]:
        if self.local_max is not None:
            rows = ["root_id,max"]
            rows += [f"{r},{v!r}" for r, v in zip(self.roots.tolist(), self.local_max.tolist())]
        else:
            rows = ["root_id,s,g"]
            rows += [
                f"{r},{s!r},{g}"
                for r, s, g in zip(self.roots.tolist(), self.local_sum.tolist(), self.tree_size.tolist())
            ]
        return rows


def _require_valid(f: Forest) -> None:
    problems = validate_forest(f)
    if problems:
        raise ModelViolation("invalid forest: " + "; ".join(problems[:3]))


def _convergecast(sim: NetworkSim, f: Forest, fields: int, merge) -> None:
    """Drive the upward wave; ``merge(senders, parents)`` folds delivered reports."""
    parent = f.parent
    non_root = parent != NO_PARENT
    waiting = np.zeros(f.n, dtype=np.int64)
    np.add.at(waiting, parent[non_root], 1)
    done = ~non_root
    while not done.all():
        ready = np.flatnonzero(~done & (waiting == 0))
        with sim.step(Phase.CONVERGECAST) as h:
            ok = sim.send_many(h, ready, fields=fields)
        got = ready[ok]
        merge(got, parent[got])
        done[got] = True
        np.subtract.at(waiting, parent[got], 1)


def convergecast_max(sim: NetworkSim, f: Forest, vals) -> RootAggregates:
    _require_valid(f)
    acc = np.array(vals, copy=True)
    if acc.shape != (f.n,):
        raise ValueError(f"need one value per node ({f.n}), got shape {acc.shape}")

    def merge(src, dst):
        np.maximum.at(acc, dst, acc[src])

    _convergecast(sim, f, 1, merge)
    return RootAggregates(roots=f.roots, local_max=acc[f.roots])


def convergecast_sum(sim: NetworkSim, f: Forest, vals) -> RootAggregates:
    """(value sum, node count) per tree; a child zeroes its pair once acknowledged."""
    _require_valid(f)
    s = np.array(vals, copy=True)
    if s.shape != (f.n,):
        raise ValueError(f"need one value per node ({f.n}), got shape {s.shape}")
    g = np.ones(f.n, dtype=np.int64)

    def merge(src, dst):
        np.add.at(s, dst, s[src])
        np.add.at(g, dst, g[src])
        s[src] = 0
        g[src] = 0

    _convergecast(sim, f, 2, merge)
    return RootAggregates(roots=f.roots, local_sum=s[f.roots], tree_size=g[f.roots])


def broadcast_down(sim: NetworkSim, f: Forest, root_payload) -> np.ndarray:
    """Push each root's payload to every node of its tree.

    ``root_payload`` is an array aligned with ``f.roots`` (trailing dimensions
    allowed) or a mapping root -> value. Returns the payload as seen by every
    node; entries are only filled by actual delivery along tree edges.
    """
    _require_valid(f)
    if isinstance(root_payload, dict):
        missing = set(f.roots.tolist()) - set(root_payload)
        if missing:
            raise ValueError(f"no payload for roots {sorted(missing)[:5]}")
        root_payload = np.array([root_payload[r] for r in f.roots.tolist()])
    root_payload = np.asarray(root_payload)
    if len(root_payload) != f.m:
        raise ValueError(f"payload for {len(root_payload)} roots, forest has {f.m}")
    fields = 1 if root_payload.ndim == 1 else int(np.prod(root_payload.shape[1:]))
    out = np.zeros((f.n,) + root_payload.shape[1:], dtype=root_payload.dtype)
    out[f.roots] = root_payload
    have = np.zeros(f.n, dtype=bool)
    have[f.roots] = True
    parent = f.parent
    while not have.all():
        edges = np.flatnonzero(~have & (parent != NO_PARENT))
        edges = edges[have[parent[edges]]]
        with sim.step(Phase.BROADCAST) as h:
            ok = sim.send_many(h, parent[edges], fields=fields, initiation=False)
        got = edges[ok]
        out[got] = out[parent[got]]
        have[got] = True
    return out
