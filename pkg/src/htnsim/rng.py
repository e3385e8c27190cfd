"""Keyed stochastic primitives shared by coupled scenarios.

Every draw is a pure function of ``(seed, replication, purpose, class, customer)``.
Internally draws are produced in fixed-size blocks; block ``b`` of a stream is
generated by a Philox generator keyed on the stream identity plus ``b``, so a
value never depends on which other values were requested before it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .model import IaDist, Model, arrival_rate_n

BLOCK = 512
PURPOSES = ("interarrival", "service", "initial_service")
_PURPOSE_CODE = {p: k for k, p in enumerate(PURPOSES)}
_GRID = 2.0**-52
_EXPONENTIAL = IaDist("exponential")


@dataclass(frozen=True)
class StreamKey:
    seed: int
    replication: int
    purpose: str
    class_index: int
    customer_index: int


def _block(seed: int, replication: int, purpose: str, class_index: int, block: int, dist: IaDist) -> np.ndarray:
    if dist.kind == "deterministic":
        return np.ones(BLOCK)
    ss = np.random.SeedSequence(
        entropy=int(seed) & (2**64 - 1),
        spawn_key=(int(replication), _PURPOSE_CODE[purpose], int(class_index), int(block)),
    )
    k = np.random.Generator(np.random.Philox(ss)).integers(0, 2**52, BLOCK)
    # midpoints of a 2**-52 grid: strictly inside (0, 1), so every draw is > 0
    u = (k + 0.5) * _GRID
    if dist.kind == "exponential":
        return -np.log(u)
    return 1.0 + dist.param * (u - 0.5)


def draw(key: StreamKey, dist: Optional[IaDist] = None) -> float:
    """Single keyed draw. ``dist`` applies to inter-arrival keys; service keys are unit exponential."""
    if key.purpose != "interarrival" or dist is None:
        dist = _EXPONENTIAL
    if key.customer_index < 1:
        raise ValueError("customer_index is 1-based")
    b, off = divmod(key.customer_index - 1, BLOCK)
    return float(_block(key.seed, key.replication, key.purpose, key.class_index, b, dist)[off])


class PrimitiveDraws:
    """Cached view of all draws for one ``(seed, replication)``; indices are 1-based."""

    def __init__(self, model: Model, seed: int, replication: int):
        self.model = model
        self.seed = seed
        self.replication = replication
        self._cache: Dict[Tuple[str, int, int], np.ndarray] = {}

    def _get(self, purpose: str, i: int, j: int) -> float:
        b, off = divmod(j - 1, BLOCK)
        k = (purpose, i, b)
        arr = self._cache.get(k)
        if arr is None:
            dist = self.model.classes[i - 1].ia_dist if purpose == "interarrival" else _EXPONENTIAL
            arr = _block(self.seed, self.replication, purpose, i, b, dist)
            self._cache[k] = arr
        return float(arr[off])

    def ia(self, i: int, j: int) -> float:
        return self._get("interarrival", i, j)

    def workload(self, i: int, j: int) -> float:
        return self._get("service", i, j)

    def initial_workload(self, i: int, k: int) -> float:
        return self._get("initial_service", i, k)

    def ia_block(self, i: int, b: int) -> np.ndarray:
        """Inter-arrival draws for customers ``b*BLOCK+1 .. (b+1)*BLOCK`` of class ``i``."""
        self._get("interarrival", i, b * BLOCK + 1)
        return self._cache[("interarrival", i, b)]


class ArrivalClock:
    """Lazily generated arrival epochs ``AT_ij = AT_i(j-1) + IA_i(j) / lambda_i^n``."""

    def __init__(self, draws: PrimitiveDraws, i: int, rate: float):
        self.draws = draws
        self.i = i
        self.rate = rate
        self._times: list = []
        self._last = 0.0

    def __getitem__(self, j: int) -> float:
        while len(self._times) < j:
            b = len(self._times) // BLOCK
            steps = self.draws.ia_block(self.i, b) / self.rate
            # add.accumulate is strictly sequential, so blocks chain exactly
            times = np.add.accumulate(np.concatenate(([self._last], steps)))[1:]
            self._times.extend(times.tolist())
            self._last = self._times[-1]
        return self._times[j - 1]


def arrival_times(model: Model, i: int, n: int, seed: int, replication: int, horizon: float) -> list:
    """Class-``i`` arrival epochs that do not exceed ``horizon``."""
    clock = ArrivalClock(PrimitiveDraws(model, seed, replication), i, arrival_rate_n(model, i, n))
    out: list = []
    j = 1
    while True:
        t = clock[j]
        if t > horizon:
            return out
        out.append(t)
        j += 1
