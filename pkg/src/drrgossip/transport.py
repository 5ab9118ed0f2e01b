"""Round-synchronous random phone-call network with lossy links and per-phase meters.

Every protocol step goes through a :class:`NetworkSim`. A round is opened for
one phase, messages are charged to that phase, and delivery is decided per
message (per routed leg) with probability ``1 - delta``.

A node may *initiate* at most one call per round and phase. Replies on an
established call and forwards along known tree/root links pass
``initiation=False``: they are charged as messages but do not use the budget.
"""
from __future__ import annotations

import enum
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

DEFAULT_PAYLOAD_FIELDS = 4


class Phase(str, enum.Enum):
    DRR_PROBE = "DrrProbe"
    DRR_CONNECT = "DrrConnect"
    CONVERGECAST = "Convergecast"
    BROADCAST = "Broadcast"
    GOSSIP_MAX = "GossipMax"
    GOSSIP_SAMPLE = "GossipSample"
    GOSSIP_AVE = "GossipAve"
    DATA_SPREAD = "DataSpread"
    BASELINE = "Baseline"


class ModelViolation(RuntimeError):
    """A send that breaks the phone-call model (double initiation, oversized payload)."""


class UsageError(RuntimeError):
    """Round API misuse, e.g. nested rounds."""


@dataclass(frozen=True)
class Message:
    src: int
    dst: int
    phase: Phase
    payload: tuple = ()


@dataclass
class PhaseMeter:
    rounds: int = 0
    messages_sent: int = 0
    messages_delivered: int = 0

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.rounds, self.messages_sent, self.messages_delivered)


@dataclass(frozen=True)
class MeterSnapshot:
    """Immutable copy of all phase meters plus the sim-wide counters."""

    phases: tuple[tuple[Phase, tuple[int, int, int]], ...]
    total_rounds: int
    total_sent: int
    total_delivered: int

    def __getitem__(self, phase: Phase) -> tuple[int, int, int]:
        return dict(self.phases)[Phase(phase)]

    def as_dict(self) -> dict[str, dict[str, int]]:
        return {
            p.value: {"rounds": r, "msgs_sent": s, "msgs_delivered": d}
            for p, (r, s, d) in self.phases
        }


class RoundHandle:
    __slots__ = ("phase", "initiated", "latency", "is_open")

    def __init__(self, phase: Phase, n: int):
        self.phase = phase
        self.initiated = np.zeros(n, dtype=bool)
        self.latency = 1
        self.is_open = True

    def note_latency(self, lat) -> None:
        lat = np.asarray(lat)
        if lat.size:
            self.latency = max(self.latency, int(lat.max()))


DropHook = Callable[[Phase, int], np.ndarray]


class NetworkSim:
    """Round clock, failure injector and message meters for one trial.

    ``drop_hook`` is a fault-injection hook for the self-check suite: given a
    phase and a message count it returns a mask of messages to drop regardless
    of ``delta``.
    """

    def __init__(
        self,
        n: int,
        delta: float = 0.0,
        seed: int | None = None,
        *,
        rng: np.random.Generator | None = None,
        payload_field_limit: int = DEFAULT_PAYLOAD_FIELDS,
        forward_batching: bool = True,
        drop_hook: DropHook | None = None,
    ):
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        if not 0.0 <= delta < 1.0:
            raise ValueError(f"delta must lie in [0, 1), got {delta}")
        self.n = n
        self.delta = float(delta)
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.payload_field_limit = payload_field_limit
        self.forward_batching = forward_batching
        self.drop_hook = drop_hook
        self.round = 0
        self.meters: dict[Phase, PhaseMeter] = {p: PhaseMeter() for p in Phase}
        # Sim-wide counters are bumped independently of the phase meters so the
        # two can be audited against each other.
        self.total_sent = 0
        self.total_delivered = 0
        self.total_rounds = 0
        self._open: RoundHandle | None = None

    # -- rounds -----------------------------------------------------------
    def begin_round(self, phase: Phase) -> RoundHandle:
        if self._open is not None:
            raise UsageError(f"round for {self._open.phase.value} still open")
        self._open = RoundHandle(Phase(phase), self.n)
        return self._open

    def end_round(self, handle: RoundHandle) -> int:
        if handle is not self._open or not handle.is_open:
            raise UsageError("ending a round that is not open")
        handle.is_open = False
        self._open = None
        elapsed = handle.latency
        self.meters[handle.phase].rounds += elapsed
        self.round += elapsed
        self.total_rounds += elapsed
        return elapsed

    @contextmanager
    def step(self, phase: Phase):
        handle = self.begin_round(phase)
        try:
            yield handle
        finally:
            if handle.is_open:
                self.end_round(handle)

    # -- delivery ---------------------------------------------------------
    def _check_open(self, handle: RoundHandle) -> None:
        if not handle.is_open or handle is not self._open:
            raise UsageError("send outside an open round")

    def _decide(self, phase: Phase, k: int) -> np.ndarray:
        if k == 0:
            return np.zeros(0, dtype=bool)
        if self.delta > 0.0:
            ok = self.rng.random(k) >= self.delta
        else:
            ok = np.ones(k, dtype=bool)
        if self.drop_hook is not None:
            ok &= ~np.asarray(self.drop_hook(phase, k), dtype=bool)
        return ok

    def _charge(self, phase: Phase, sent: int, delivered: int) -> None:
        m = self.meters[phase]
        m.messages_sent += sent
        m.messages_delivered += delivered
        self.total_sent += sent
        self.total_delivered += delivered

    def _claim_initiations(self, handle: RoundHandle, src: np.ndarray) -> None:
        if src.size == 0:
            return
        if src.size > 1:
            s = np.sort(src)
            dup = s[1:][s[1:] == s[:-1]]
            if dup.size:
                raise ModelViolation(
                    f"node {int(dup[0])} initiates more than one call in a {handle.phase.value} round"
                )
        again = handle.initiated[src]
        if again.any():
            raise ModelViolation(
                f"node {int(src[again][0])} initiates more than one call in a {handle.phase.value} round"
            )
        handle.initiated[src] = True

    def _check_fields(self, fields: int) -> None:
        if fields > self.payload_field_limit:
            raise ModelViolation(
                f"payload of {fields} fields exceeds limit {self.payload_field_limit}"
            )

    def send(self, handle: RoundHandle, msg: Message, *, initiation: bool = True) -> bool:
        self._check_open(handle)
        if msg.phase is not handle.phase:
            raise UsageError(f"{msg.phase.value} message in a {handle.phase.value} round")
        self._check_fields(len(msg.payload))
        if initiation:
            self._claim_initiations(handle, np.array([msg.src]))
        ok = bool(self._decide(handle.phase, 1)[0])
        self._charge(handle.phase, 1, int(ok))
        return ok

    def send_many(
        self,
        handle: RoundHandle,
        src,
        *,
        fields: int = 1,
        hops=None,
        initiation: bool = True,
    ) -> np.ndarray:
        """Vectorized send of one message (or routed leg) per entry of ``src``.

        ``hops`` gives the routed path length of each leg; a leg is charged
        ``hops`` messages and lost as a whole with probability ``delta``.
        Returns the delivery mask.
        """
        self._check_open(handle)
        self._check_fields(fields)
        src = np.asarray(src, dtype=np.int64)
        if initiation:
            self._claim_initiations(handle, src)
        ok = self._decide(handle.phase, src.size)
        if hops is None:
            self._charge(handle.phase, int(src.size), int(ok.sum()))
        else:
            hops = np.asarray(hops, dtype=np.int64)
            handle.note_latency(hops)
            self._charge(handle.phase, int(hops.sum()), int(hops[ok].sum()))
        return ok

    # -- reporting --------------------------------------------------------
    def snapshot_metrics(self) -> MeterSnapshot:
        return MeterSnapshot(
            phases=tuple((p, self.meters[p].as_tuple()) for p in Phase),
            total_rounds=self.total_rounds,
            total_sent=self.total_sent,
            total_delivered=self.total_delivered,
        )

    def audit(self) -> list[str]:
        """Meter ledger inconsistencies; empty when the books balance."""
        problems = []
        sent = sum(m.messages_sent for m in self.meters.values())
        delivered = sum(m.messages_delivered for m in self.meters.values())
        rounds = sum(m.rounds for m in self.meters.values())
        if sent != self.total_sent:
            problems.append(f"phase sent {sent} != global sent {self.total_sent}")
        if delivered != self.total_delivered:
            problems.append(f"phase delivered {delivered} != global {self.total_delivered}")
        if rounds != self.total_rounds:
            problems.append(f"phase rounds {rounds} != global {self.total_rounds}")
        for p, m in self.meters.items():
            if m.messages_delivered > m.messages_sent:
                problems.append(f"{p.value}: delivered {m.messages_delivered} > sent {m.messages_sent}")
            if self.delta == 0.0 and m.messages_delivered != m.messages_sent:
                problems.append(
                    f"{p.value}: delta=0 but delivered {m.messages_delivered} != sent {m.messages_sent}"
                )
        return problems


def two_hop_root_send(
    sim: NetworkSim,
    handle: RoundHandle,
    src: int,
    target: int,
    root_of: Mapping[int, int] | np.ndarray,
    payload: tuple = (),
) -> tuple[bool, int]:
    """Send to ``target`` and, if it is not a root, have it forward to its root.

    One message when ``target`` is a root, otherwise two, each dropped
    independently.
    """
    root = int(root_of[target])
    msg = Message(src, target, handle.phase, payload)
    if not sim.send(handle, msg):
        return False, root
    if root == target:
        return True, root
    fwd = Message(target, root, handle.phase, payload)
    return sim.send(handle, fwd, initiation=False), root


@dataclass
class TwoHopResult:
    root: np.ndarray        # root reached (or aimed at) by each message
    delivered: np.ndarray   # bool mask: message reached that root
    forwarded: np.ndarray   # bool mask: second hop was needed


def two_hop_many(
    sim: NetworkSim,
    handle: RoundHandle,
    src: np.ndarray,
    target: np.ndarray,
    root_of: np.ndarray,
    *,
    fields: int = 1,
    hops_first: np.ndarray | None = None,
    hops_forward: np.ndarray | None = None,
) -> TwoHopResult:
    """Vectorized two-hop root delivery for one round.

    With ``sim.forward_batching`` each intermediate node forwards a single
    combined message to its root no matter how many it received, so all
    messages relayed through one node share that forward's fate.

    ``hops_first``/``hops_forward`` carry routed path lengths on sparse
    overlays; ``None`` means a direct one-hop call.
    """
    src = np.asarray(src, dtype=np.int64)
    target = np.asarray(target, dtype=np.int64)
    root = root_of[target]
    forwarded = root != target
    ok1 = sim.send_many(handle, src, fields=fields, hops=hops_first)
    need = ok1 & forwarded
    delivered = ok1.copy()
    idx = np.flatnonzero(need)
    if idx.size:
        via = target[idx]
        fh = None if hops_forward is None else np.asarray(hops_forward)[idx]
        if sim.forward_batching:
            uniq, first, inverse = np.unique(via, return_index=True, return_inverse=True)
            ok2 = sim.send_many(
                handle, uniq, fields=fields, initiation=False,
                hops=None if fh is None else fh[first],
            )[inverse]
        else:
            ok2 = sim.send_many(handle, via, fields=fields, initiation=False, hops=fh)
        delivered[idx] = ok2
    if hops_first is not None:
        lat = np.asarray(hops_first).copy()
        if hops_forward is not None:
            lat = lat + np.where(forwarded, hops_forward, 0)
        handle.note_latency(lat)
    return TwoHopResult(root=root, delivered=delivered, forwarded=forwarded)
