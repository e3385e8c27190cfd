"""Event-driven simulation of the n-server, N-class join-or-leave system under FP or SLQ."""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DeviatorNotArrived, DrainTimeout
from .model import Model, arrival_rate_n, join_cutoff
from .rng import ArrivalClock, PrimitiveDraws

FP = "fp"
SLQ = "slq"
POLICIES = (FP, SLQ)

# event kinds as stored in EventTrace.kinds
INIT, JOIN, RENEGE, DEPART = 0, 1, 2, 3
KIND_NAMES = ("init", "join", "renege", "departure")

_DEPARTURE_TIER = 0
_ARRIVAL_TIER = 1


@dataclass(frozen=True)
class Scenario:
    kind: str = "reference"
    deviator: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        if self.kind == "reference":
            if self.deviator is not None:
                raise ValueError("reference scenario takes no deviator")
        elif self.kind == "deviator":
            if self.deviator is None:
                raise ValueError("deviator scenario needs (class, arrival index)")
            i, j = self.deviator
            if i < 1 or j < 1:
                raise ValueError(f"deviator indices are 1-based, got {self.deviator}")
        else:
            raise ValueError(f"unknown scenario kind {self.kind!r}")

    @classmethod
    def reference(cls) -> "Scenario":
        return cls()

    @classmethod
    def at(cls, i: int, j: int) -> "Scenario":
        return cls("deviator", (int(i), int(j)))

    @classmethod
    def parse(cls, text: str) -> "Scenario":
        """``ref`` or ``dev:i:j``."""
        if text == "ref":
            return cls()
        parts = text.split(":")
        if len(parts) == 3 and parts[0] == "dev":
            return cls.at(int(parts[1]), int(parts[2]))
        raise ValueError(f"scenario must be 'ref' or 'dev:i:j', got {text!r}")

    @property
    def label(self) -> str:
        if self.deviator is None:
            return "ref"
        return "dev:%d:%d" % self.deviator


@dataclass
class CustomerRecord:
    i: int
    j: int
    at: float
    q_observed: int
    joined: bool
    post_horizon: bool
    rt: Optional[float] = None

    @property
    def wt(self) -> Optional[float]:
        if self.rt is None:
            return None
        return self.rt - self.at


@dataclass
class EventTrace:
    """Post-event system state after every event, plus per-customer records.

    Row 0 is the initial state at ``t = 0``. Count arrays have shape ``(rows, N)``.
    ``routed[k]`` is the 1-based class sent to service at event ``k`` (0 if none).
    """

    model: Model
    n: int
    policy: str
    scenario: Scenario
    seed: int
    replication: int
    t_end: float
    end_time: float
    times: np.ndarray
    kinds: np.ndarray
    classes: np.ndarray
    indices: np.ndarray
    routed: np.ndarray
    E: np.ndarray
    J: np.ndarray
    R: np.ndarray
    B: np.ndarray
    D: np.ndarray
    Q: np.ndarray
    Psi: np.ndarray
    customers: Dict[int, List[CustomerRecord]] = field(default_factory=dict)

    @property
    def Q0(self) -> np.ndarray:
        return self.Q[0]

    @property
    def Psi0(self) -> np.ndarray:
        return self.Psi[0]

    @property
    def busy(self) -> np.ndarray:
        return self.Psi.sum(axis=1)

    def row_at(self, t: float) -> int:
        """Index of the state in force at time ``t`` (right-continuous)."""
        return int(np.searchsorted(self.times, t, side="right")) - 1

    def record(self, i: int, j: int) -> Optional[CustomerRecord]:
        recs = self.customers.get(i, [])
        return recs[j - 1] if 0 < j <= len(recs) else None

    def all_records(self) -> List[CustomerRecord]:
        return [r for i in sorted(self.customers) for r in self.customers[i]]


def next_class_fp(queues: Sequence[int]) -> Optional[int]:
    for k, q in enumerate(queues):
        if q > 0:
            return k + 1
    return None


def next_class_slq(queues: Sequence[int]) -> Optional[int]:
    best = 0
    pick = None
    for k, q in enumerate(queues):
        if q > best:
            best = q
            pick = k + 1
    return pick


def default_initial_busy(model: Model, n: int) -> List[int]:
    return [int(math.floor(rho * n)) for rho in model.rho]


def run(
    model: Model,
    policy: str,
    scenario: Scenario,
    n: int,
    t_end: float,
    seed: int,
    replication: int = 0,
    *,
    initial_busy: Optional[Sequence[int]] = None,
    workload: Optional[Callable[[int, int], float]] = None,
    drain_cap: Optional[float] = None,
) -> EventTrace:
    """Simulate one scenario until every customer who joined by ``t_end`` is in service.

    ``initial_busy`` overrides the number of initially-in-service customers per
    class (default ``floor(rho_i * n)``). ``workload(i, j)`` overrides the unit
    service requirement of arriving customer ``(i, j)``; it is a test hook.
    """
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}, got {policy!r}")
    if n < 1 or not t_end > 0:
        raise ValueError("need n >= 1 and t_end > 0")
    N = model.N
    if scenario.deviator is not None and scenario.deviator[0] > N:
        raise ValueError(f"deviator class {scenario.deviator[0]} exceeds N={N}")
    drain_cap = 10.0 * t_end if drain_cap is None else drain_cap
    mu = model.mu
    fp = policy == FP

    draws = PrimitiveDraws(model, seed, replication)
    clocks = [ArrivalClock(draws, i, arrival_rate_n(model, i, n)) for i in range(1, N + 1)]
    cutoff = [join_cutoff(model, i, n) for i in range(1, N + 1)]
    work = workload if workload is not None else draws.workload
    dev_i, dev_j = scenario.deviator if scenario.deviator is not None else (0, 0)

    E = [0] * N
    J = [0] * N
    R = [0] * N
    B = [0] * N
    D = [0] * N
    Q = [0] * N
    Psi = list(default_initial_busy(model, n) if initial_busy is None else initial_busy)
    if len(Psi) != N or sum(Psi) > n or min(Psi) < 0:
        raise ValueError(f"initial in-service counts {Psi} invalid for n={n}, N={N}")
    busy = sum(Psi)

    heap: list = []
    sid = 0
    for c in range(N):
        for k in range(1, Psi[c] + 1):
            dur = draws.initial_workload(c + 1, k) / mu[c]
            heap.append((dur, _DEPARTURE_TIER, sid, c, -k))
            sid += 1
    idle = list(range(sid, n))
    heapq.heapify(idle)
    for c in range(N):
        heap.append((clocks[c][1], _ARRIVAL_TIER, c, c, 1))
    heapq.heapify(heap)

    waiting = [deque() for _ in range(N)]
    records: List[List[CustomerRecord]] = [[] for _ in range(N)]
    pending_pre = 0
    t_cap = t_end + drain_cap

    times = [0.0]
    meta = [(INIT, 0, 0, 0)]
    rows = [E + J + R + B + D + Q + Psi]
    t = 0.0

    while True:
        t, tier, tie, c, j = heap[0]
        if t > t_end and pending_pre == 0:
            break
        if t > t_cap:
            raise DrainTimeout(
                f"{pending_pre} customers who joined by t={t_end} still waiting at t={t}; "
                "model is probably mis-specified"
            )
        heapq.heappop(heap)
        routed = 0
        if tier == _DEPARTURE_TIER:
            D[c] += 1
            Psi[c] -= 1
            busy -= 1
            kind = DEPART
            if any(Q):
                if fp:
                    k = next(x for x in range(N) if Q[x] > 0)
                else:
                    k = max(range(N), key=Q.__getitem__)
                wj, wat = waiting[k].popleft()
                Q[k] -= 1
                B[k] += 1
                Psi[k] += 1
                busy += 1
                rec = records[k][wj - 1]
                rec.rt = t
                if wat <= t_end:
                    pending_pre -= 1
                heapq.heappush(heap, (t + work(k + 1, wj) / mu[k], _DEPARTURE_TIER, tie, k, wj))
                routed = k + 1
            else:
                heapq.heappush(idle, tie)
        else:
            E[c] += 1
            q = Q[c]
            joins = q <= cutoff[c]
            pre = t <= t_end
            if c + 1 == dev_i and j == dev_j and pre:
                joins = not joins
            rec = CustomerRecord(c + 1, j, t, q, joins, not pre)
            records[c].append(rec)
            if joins:
                J[c] += 1
                kind = JOIN
                if busy < n:
                    s = heapq.heappop(idle)
                    B[c] += 1
                    Psi[c] += 1
                    busy += 1
                    rec.rt = t
                    heapq.heappush(heap, (t + work(c + 1, j) / mu[c], _DEPARTURE_TIER, s, c, j))
                    routed = c + 1
                else:
                    Q[c] += 1
                    waiting[c].append((j, t))
                    if pre:
                        pending_pre += 1
            else:
                R[c] += 1
                kind = RENEGE
            heapq.heappush(heap, (clocks[c][j + 1], _ARRIVAL_TIER, c, c, j + 1))
        times.append(t)
        meta.append((kind, c + 1, j, routed))
        rows.append(E + J + R + B + D + Q + Psi)

    end_time = max(t_end, times[-1])
    m = np.asarray(meta, dtype=np.int64)
    counts = np.asarray(rows, dtype=np.int64).reshape(len(rows), 7, N)
    return EventTrace(
        model=model,
        n=n,
        policy=policy,
        scenario=scenario,
        seed=seed,
        replication=replication,
        t_end=t_end,
        end_time=end_time,
        times=np.asarray(times),
        kinds=m[:, 0],
        classes=m[:, 1],
        indices=m[:, 2],
        routed=m[:, 3],
        E=counts[:, 0],
        J=counts[:, 1],
        R=counts[:, 2],
        B=counts[:, 3],
        D=counts[:, 4],
        Q=counts[:, 5],
        Psi=counts[:, 6],
        customers={i + 1: records[i] for i in range(N)},
    )


def arrivals_by(trace: EventTrace, i: int, t: float) -> int:
    return sum(1 for r in trace.customers.get(i, []) if r.at <= t)


def run_coupled(
    model: Model,
    policy: str,
    n: int,
    t_end: float,
    seed: int,
    replication: int,
    deviator: Tuple[int, int],
    reference: Optional[EventTrace] = None,
    **kwargs,
) -> Tuple[EventTrace, EventTrace]:
    """Reference and single-deviator traces driven by the same primitives.

    Pass a previously computed ``reference`` trace to skip re-simulating it.
    """
    i, j = deviator
    ref = reference
    if ref is None:
        ref = run(model, policy, Scenario.reference(), n, t_end, seed, replication, **kwargs)
    if arrivals_by(ref, i, t_end) < j:
        raise DeviatorNotArrived(
            f"fewer than {j} class-{i} arrivals by t={t_end}", reference=ref
        )
    dev = run(model, policy, Scenario.at(i, j), n, t_end, seed, replication, **kwargs)
    return ref, dev


def check_invariants(trace: EventTrace) -> List[str]:
    """Exact dynamic checks over every event; returns human-readable violations."""
    out = []
    n = trace.n
    model = trace.model
    Q, Psi, B = trace.Q, trace.Psi, trace.B
    if not np.array_equal(Q, Q[0] + trace.E - B - trace.R):
        out.append("queue balance Q = Q(0) + E - B - R violated")
    if not np.array_equal(Psi, Psi[0] + B - trace.D):
        out.append("service balance Psi = Psi(0) + B - D violated")
    if (Q < 0).any() or (Psi < 0).any():
        out.append("negative queue or in-service count")
    busy = Psi.sum(axis=1)
    if (busy > n).any():
        out.append("more than n customers in service")
    idling = (Q.sum(axis=1) > 0) & (busy != n)
    if idling.any():
        out.append(f"non-idling violated at t={trace.times[np.argmax(idling)]}")

    jumps = np.diff(B, axis=0)
    if (jumps < 0).any() or (jumps.sum(axis=1) > 1).any():
        out.append("routing counts must jump by at most one per event")
    before = Q[:-1]
    k, cls = np.nonzero(jumps > 0)
    if trace.policy == FP:
        higher = np.cumsum(before, axis=1) - before
        bad = higher[k, cls] > 0
        if bad.any():
            out.append(f"FP routing legality violated at t={trace.times[k[bad][0] + 1]}")
    else:
        bad = before[k, cls] < before[k].max(axis=1)
        if bad.any():
            out.append(f"SLQ routing legality violated at t={trace.times[k[bad][0] + 1]}")

    slack = 1 if trace.scenario.deviator is None else 2
    ceiling = math.sqrt(n) * np.asarray(model.theta) + slack
    if (Q > ceiling).any():
        out.append("threshold ceiling on queue lengths exceeded")

    for rec in trace.all_records():
        if rec.joined:
            if rec.rt is not None and rec.rt < rec.at:
                out.append(f"negative wait for customer {(rec.i, rec.j)}")
        elif rec.rt is not None:
            out.append(f"reneging customer {(rec.i, rec.j)} was routed")
    return out
