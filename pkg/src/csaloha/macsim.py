"""Finite-N frameless ALOHA with the base station's iterative inter/intra-slot IC receiver."""
from __future__ import annotations

import math
import statistics
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .capture import CaptureTable


class ContentionGraph:
    """Bipartite user/slot graph plus the receiver's per-slot recovery state."""

    def __init__(self, n_users: int, slot_users):
        self.n_users = n_users
        self.slot_users = [np.asarray(s, dtype=np.int64) for s in slot_users]
        self.n_slots = len(self.slot_users)
        self.user_slots = [[] for _ in range(n_users)]
        for j, users in enumerate(self.slot_users):
            if users.size != np.unique(users).size:
                raise ValueError(f"slot {j} lists a user twice")
            if users.size and (users.min() < 0 or users.max() >= n_users):
                raise ValueError(f"slot {j} references a user outside 0..{n_users - 1}")
            for u in users:
                self.user_slots[u].append(j)
        self.reset()

    def reset(self):
        self.recovered = np.zeros(self.n_users, dtype=bool)
        self.residual_degree = np.array([s.size for s in self.slot_users], dtype=np.int64)
        self.failed_at = np.full(self.n_slots, -1, dtype=np.int64)
        self.recovery_order: list[int] = []

    @property
    def slot_degrees(self) -> np.ndarray:
        return np.array([s.size for s in self.slot_users], dtype=np.int64)

    def unrecovered_in(self, j: int) -> np.ndarray:
        users = self.slot_users[j]
        return users[~self.recovered[users]]

    def mark_recovered(self, u: int):
        if self.recovered[u]:
            return
        self.recovered[u] = True
        self.recovery_order.append(int(u))
        for j in self.user_slots[u]:
            self.residual_degree[j] -= 1

    def check(self):
        for j in range(self.n_slots):
            if self.residual_degree[j] != self.unrecovered_in(j).size:
                raise AssertionError(f"residual degree of slot {j} is out of sync")


def generate_graph(n_users: int, n_slots: int, beta: float, rng) -> ContentionGraph:
    """Every (user, slot) edge present independently with probability beta / N."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    p_a = beta / n_users
    if p_a > 1:
        raise ValueError(f"activation probability beta/N = {p_a:g} exceeds 1")
    slots = []
    for k in rng.binomial(n_users, p_a, size=n_slots):
        slots.append(np.sort(rng.choice(n_users, size=k, replace=False)))
    return ContentionGraph(n_users, slots)


def example_graph() -> ContentionGraph:
    """Three users, four slots: u1 in s3; u2 in s1, s4; u3 in s1, s3 (0-based ids)."""
    return ContentionGraph(3, [[1, 2], [], [0, 2], [1]])


class TableOracle:
    """Samples s ~ p(.|t_A) and recovers s of the unrecovered users chosen uniformly."""

    def __init__(self, table: CaptureTable):
        self.table = table

    def start(self, graph: ContentionGraph, rng):
        pass

    def __call__(self, graph: ContentionGraph, slot: int, candidates: np.ndarray, rng) -> np.ndarray:
        d = candidates.size
        if d > self.table.t_max:
            return candidates[:0]
        row = self.table.p[d, : d + 1]
        s = int(rng.choice(d + 1, p=row / row.sum()))
        if s == 0:
            return candidates[:0]
        return rng.choice(candidates, size=s, replace=False)


class PhyOracle:
    """Runs the CS-MUD engine on the slot's actual residual signal.

    Channels are drawn once per contention period; each user sends the same
    information bits in every replica; each slot has its own noise realisation.
    Inter- and intra-slot IC are perfect, so the residual signal is the sum of
    the unrecovered users' signals plus the slot's noise.
    """

    def __init__(self, engine):
        self.engine = engine
        self._slot_noise = {}

    def start(self, graph: ContentionGraph, rng):
        sc = self.engine.scenario
        if graph.n_users != sc.n_users:
            raise ValueError(f"graph has {graph.n_users} users but the PHY scenario has {sc.n_users}")
        self.channels = self.engine_channels(rng)
        self.bits = rng.integers(0, 2, size=(graph.n_users, self.engine.n_info))
        self._noise_seed = int(rng.integers(2**63))
        self._slot_noise = {}

    def engine_channels(self, rng):
        from .phy.engine import gen_channels

        return gen_channels(self.engine.scenario, rng)

    def noise(self, slot: int) -> np.ndarray:
        from .phy.engine import unit_complex_noise

        if slot not in self._slot_noise:
            r = np.random.default_rng([self._noise_seed, slot])
            self._slot_noise[slot] = unit_complex_noise(r, self.engine.scenario.received_chips)
        return self._slot_noise[slot]

    def __call__(self, graph: ContentionGraph, slot: int, candidates: np.ndarray, rng) -> np.ndarray:
        y, A = self.engine.synthesize(candidates, self.channels, self.bits[candidates], self.noise(slot))
        res = self.engine.detect(y, A)
        ok = self.engine.decode_users(res, {int(u): self.bits[u] for u in candidates})
        return np.array(sorted(ok), dtype=np.int64)


@dataclass
class RecoveryReport:
    n_users: int
    n_slots: int
    recovered: int
    order: list = field(default_factory=list)
    oracle_calls: int = 0
    slot_degree: np.ndarray | None = None
    final_residual: np.ndarray | None = None

    @property
    def p_r(self) -> float:
        return self.recovered / self.n_users

    @property
    def throughput(self) -> float:
        return self.recovered / self.n_slots


def run_receiver(graph: ContentionGraph, oracle, rng) -> RecoveryReport:
    """Slot-by-slot receiver with inter-slot and intra-slot interference cancellation.

    Each arriving slot is detected repeatedly on its residual (intra-slot IC)
    until a pass recovers nobody. Every earlier slot that lost a transmission
    to inter-slot IC is queued and processed the same way. A slot whose last
    pass failed at residual degree d is not queried again until d changes.
    """
    graph.reset()
    oracle.start(graph, rng)
    calls = 0
    queue: deque[int] = deque()
    queued = np.zeros(graph.n_slots, dtype=bool)

    def drain(arrived: int):
        nonlocal calls
        while queue:
            k = queue.popleft()
            queued[k] = False
            while True:
                cands = graph.unrecovered_in(k)
                d = cands.size
                if d == 0 or graph.failed_at[k] == d:
                    break
                calls += 1
                new = oracle(graph, k, cands, rng)
                if len(new) == 0:
                    graph.failed_at[k] = d
                    break
                for u in new:
                    graph.mark_recovered(int(u))
                    for k2 in graph.user_slots[u]:
                        if k2 <= arrived and k2 != k and not queued[k2]:
                            queue.append(k2)
                            queued[k2] = True

    for j in range(graph.n_slots):
        queue.append(j)
        queued[j] = True
        drain(j)
    # closure pass over every slot; a no-op unless the queue discipline missed a slot
    for k in range(graph.n_slots):
        if graph.residual_degree[k] and graph.failed_at[k] != graph.residual_degree[k]:
            queue.append(k)
            queued[k] = True
    drain(graph.n_slots - 1)

    return RecoveryReport(graph.n_users, graph.n_slots, int(graph.recovered.sum()), list(graph.recovery_order),
                          calls, graph.slot_degrees, graph.residual_degree.copy())


@dataclass
class EmpiricalStats:
    runs: int
    mean_p_r: float
    mean_t: float
    p_r_half_width: float | None
    t_half_width: float | None


def empirical_stats(reports) -> EmpiricalStats:
    """Sample means with normal-approximation 95% half-widths (absent for one run)."""
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one report")
    pr = [r.p_r for r in reports]
    t = [r.throughput for r in reports]
    n = len(reports)
    if n == 1:
        return EmpiricalStats(1, pr[0], t[0], None, None)
    z = 1.959963984540054
    # statistics.stdev works in exact arithmetic, so identical runs give exactly zero spread
    hw = lambda x: z * statistics.stdev(x) / math.sqrt(n)
    return EmpiricalStats(n, statistics.fmean(pr), statistics.fmean(t), hw(pr), hw(t))


def simulate(n_users: int, n_slots: int, beta: float, oracle, runs: int, seed: int):
    """Independent runs; run k uses a generator derived from (seed, k)."""
    reports = []
    for k in range(runs):
        rng = np.random.default_rng([seed, k])
        graph = generate_graph(n_users, n_slots, beta, rng)
        reports.append(run_receiver(graph, oracle, rng))
    return reports
