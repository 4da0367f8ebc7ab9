"""Single-threaded discrete-event kernel with nanosecond time.

All inter-agent traffic is a timestamped message in a priority queue ordered
by (delivery time, enqueue sequence).  Each agent owns a current-time clock
that only moves forward: delivery advances it to the delivery timestamp, and
computation charges push it further so later sends depart later.  Pairwise
latency is a per-run base matrix plus a bounded cubic jitter per message.

Two timing modes exist.  In measured mode agents charge the wall-clock
nanoseconds their handlers actually took, so simulated durations estimate a
real deployment on this host.  In fixed mode every charge is replaced by a
configured constant, which makes whole traces bit-reproducible across hosts.
"""

import hashlib
import heapq
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import rng as rngmod
from .errors import KernelError

MEASURED = "measured"
FIXED = "fixed"

DEFAULT_EVENT_CEILING = 5_000_000


@dataclass(frozen=True)
class Message:
    sender: int
    recipient: int
    deliver_at: int
    payload: Any
    seq: int

    @property
    def kind(self) -> str:
        return type(self.payload).__name__


@dataclass(frozen=True)
class TraceRecord:
    time: int
    sender: int
    recipient: int
    kind: str


@dataclass
class LatencyModel:
    """Symmetric pairwise base latency (ns) plus cubic jitter."""

    base: np.ndarray
    jitter_max: int
    jitter_rng: np.random.Generator

    @classmethod
    def build(cls, n_agents: int, latency_range: tuple[int, int], jitter_max: int,
              seed: int) -> "LatencyModel":
        lo, hi = latency_range
        if lo < 0 or hi < lo:
            raise KernelError(f"bad latency range ({lo}, {hi})")
        gen = rngmod.stream(seed, rngmod.LATENCY)
        draw = gen.integers(lo, hi + 1, size=(n_agents, n_agents))
        base = np.triu(draw, 1)
        base = base + base.T  # symmetric, zero diagonal
        return cls(base=base, jitter_max=int(jitter_max),
                   jitter_rng=rngmod.stream(seed, rngmod.JITTER))

    def delay(self, sender: int, recipient: int) -> int:
        u = self.jitter_rng.random()
        return int(self.base[sender][recipient]) + round(self.jitter_max * u**3)


@dataclass
class ChargeRecord:
    agent: int
    phase: str
    iteration: int
    nanoseconds: int


class Kernel:
    """Deterministic event loop; agents interact only through messages.

    Agents are any objects with an integer ``agent_id`` and a method
    ``on_message(kernel, when, sender, payload)``.  Handlers may call
    :meth:`send` and :meth:`charge`.
    """

    def __init__(self, latency: LatencyModel, timing_mode: str = FIXED,
                 fixed_compute_ns: int = 1_000_000,
                 event_ceiling: int = DEFAULT_EVENT_CEILING,
                 record_payloads: bool = False):
        if timing_mode not in (MEASURED, FIXED):
            raise KernelError(f"unknown timing mode {timing_mode!r}")
        self.latency = latency
        self.timing_mode = timing_mode
        self.fixed_compute_ns = int(fixed_compute_ns)
        self.event_ceiling = int(event_ceiling)
        self.record_payloads = record_payloads

        self._agents: dict[int, Any] = {}
        self._queue: list[tuple[int, int, Message]] = []
        self._seq = 0
        self.clocks: dict[int, int] = {}
        self.trace: list[TraceRecord] = []
        self.message_log: list[Message] = []
        self.charges: list[ChargeRecord] = []
        self.now = 0
        self._active: int | None = None

    # -- setup ---------------------------------------------------------

    def register(self, agent) -> None:
        aid = agent.agent_id
        if aid in self._agents:
            raise KernelError(f"agent id {aid} registered twice")
        if aid >= len(self.latency.base):
            raise KernelError(f"agent id {aid} outside the latency matrix")
        self._agents[aid] = agent
        self.clocks[aid] = 0

    # -- agent-facing API ------------------------------------------------

    def send(self, sender: int, recipient: int, payload) -> Message:
        if sender not in self._agents or recipient not in self._agents:
            raise KernelError(f"send between unregistered agents {sender}->{recipient}")
        now = self.clocks[sender]
        deliver_at = now + self.latency.delay(sender, recipient)
        if deliver_at < now:
            raise KernelError("negative latency would violate causality")
        msg = Message(sender=sender, recipient=recipient, deliver_at=deliver_at,
                      payload=payload, seq=self._seq)
        self._seq += 1
        heapq.heappush(self._queue, (deliver_at, msg.seq, msg))
        return msg

    def charge(self, agent: int, phase: str, iteration: int,
               measured_ns: int, fixed_ns: int | None = None) -> int:
        """Advance the agent's clock by the computation cost and ledger it.

        In fixed mode the configured constant (or the caller's ``fixed_ns``
        override) replaces the measurement; agents therefore charge each phase
        exactly once per iteration.
        """
        if agent not in self._agents:
            raise KernelError(f"charge for unregistered agent {agent}")
        if self.timing_mode == FIXED:
            ns = self.fixed_compute_ns if fixed_ns is None else int(fixed_ns)
        else:
            ns = max(0, int(measured_ns))
        self.clocks[agent] += ns
        self.charges.append(ChargeRecord(agent=agent, phase=phase,
                                         iteration=iteration, nanoseconds=ns))
        return ns

    # -- execution -------------------------------------------------------

    def schedule_start(self, agent_id: int, payload, at: int = 0) -> None:
        msg = Message(sender=agent_id, recipient=agent_id, deliver_at=at,
                      payload=payload, seq=self._seq)
        self._seq += 1
        heapq.heappush(self._queue, (at, msg.seq, msg))

    def run(self, until: int | None = None) -> list[TraceRecord]:
        """Drain the queue in (deliver_at, seq) order; returns the trace."""
        events = 0
        while self._queue:
            if until is not None and self._queue[0][0] > until:
                break
            deliver_at, _, msg = heapq.heappop(self._queue)
            events += 1
            if events > self.event_ceiling:
                raise KernelError(
                    f"event ceiling {self.event_ceiling} exceeded at t={deliver_at}ns; "
                    "possible livelock")
            self.now = deliver_at
            agent = self._agents[msg.recipient]
            self.clocks[msg.recipient] = max(self.clocks[msg.recipient], deliver_at)
            self.trace.append(TraceRecord(time=deliver_at, sender=msg.sender,
                                          recipient=msg.recipient, kind=msg.kind))
            if self.record_payloads:
                self.message_log.append(msg)
            self._active = msg.recipient
            agent.on_message(self, deliver_at, msg.sender, msg.payload)
            self._active = None
        return self.trace

    # -- reporting ---------------------------------------------------------

    def trace_hash(self) -> str:
        h = hashlib.sha256()
        for rec in self.trace:
            h.update(f"{rec.time},{rec.sender},{rec.recipient},{rec.kind}\n".encode())
        return h.hexdigest()

    def end_time(self) -> int:
        last_event = self.trace[-1].time if self.trace else 0
        busiest = max(self.clocks.values(), default=0)
        return max(last_event, busiest)


def write_trace_csv(trace: list[TraceRecord], path) -> None:
    """Debug dump: one record per delivery."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_ns", "sender", "recipient", "kind"])
        for rec in trace:
            writer.writerow([rec.time, rec.sender, rec.recipient, rec.kind])
