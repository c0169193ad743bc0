"""Monte-Carlo CS-MUD slot simulation and capture-table estimation."""
from __future__ import annotations

import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..capture import CaptureTable
from .coding import ConvCode, encode_frame
from .gomp import detect_gomp
from .scenario import PhyScenario

log = logging.getLogger(__name__)

# stream tags for seed derivation
_SPREAD_STREAM = 0x5EED
_TRIAL_STREAM = 0x7A1


def gen_spreading(scenario: PhyScenario, rng) -> np.ndarray:
    """Unit-norm bipolar sequences, one row per user."""
    chips = rng.integers(0, 2, size=(scenario.n_users, scenario.spreading_factor))
    return (1.0 - 2.0 * chips) / np.sqrt(scenario.spreading_factor)


def tap_powers(scenario: PhyScenario) -> np.ndarray:
    p = np.exp(-scenario.pdp_decay * np.arange(scenario.channel_taps))
    return p / p.sum()


def gen_channels(scenario: PhyScenario, rng, n: int | None = None) -> np.ndarray:
    """Rayleigh taps with an exponential power-delay profile, unit total expected power."""
    n = scenario.n_users if n is None else n
    std = np.sqrt(tap_powers(scenario) / 2)
    g = rng.standard_normal((n, scenario.channel_taps, 2))
    return std * (g[..., 0] + 1j * g[..., 1])


def build_system_matrix(sequences: np.ndarray, channels: np.ndarray, n_symbols: int) -> np.ndarray:
    """F' x (N L) matrix; column i*L + m is user i's chip waveform for symbol m."""
    sequences = np.asarray(sequences)
    channels = np.asarray(channels)
    if sequences.ndim != 2 or channels.ndim != 2 or sequences.shape[0] != channels.shape[0]:
        raise ValueError("need one spreading sequence and one channel per user")
    if n_symbols < 1:
        raise ValueError("n_symbols must be positive")
    n, ns = sequences.shape
    lh = channels.shape[1]
    # per-user chip response: spreading sequence convolved with the channel
    resp = np.zeros((n, ns + lh - 1), dtype=complex)
    for k in range(lh):
        resp[:, k : k + ns] += channels[:, k : k + 1] * sequences
    f_rx = n_symbols * ns + lh - 1
    A = np.zeros((f_rx, n, n_symbols), dtype=complex)
    for m in range(n_symbols):
        A[m * ns : m * ns + ns + lh - 1, :, m] = resp.T
    return A.reshape(f_rx, n * n_symbols)


@dataclass
class SlotOutcome:
    t_a: int
    active: np.ndarray
    recovered: set
    detected: list = field(default_factory=list)
    ill_conditioned: bool = False

    @property
    def s(self) -> int:
        return len(self.recovered)


class PhyEngine:
    """CS-MUD receiver for one scenario; spreading sequences are fixed per scenario."""

    def __init__(self, scenario: PhyScenario):
        self.scenario = scenario
        self.code = ConvCode(scenario.generators, constraint_length=max(scenario.generators).bit_length())
        self.n_info = self.code.info_length(scenario.symbols_per_frame)
        self.sequences = gen_spreading(scenario, np.random.default_rng([scenario.seed, _SPREAD_STREAM]))

    def trial_rng(self, t_a: int, trial: int) -> np.random.Generator:
        return np.random.default_rng([self.scenario.seed, _TRIAL_STREAM, t_a, trial])

    def detect(self, y, A, candidates=None):
        sc = self.scenario
        return detect_gomp(y, A, sc.symbols_per_frame, sc.detector, noise_var=sc.noise_var, candidates=candidates)

    def decode_users(self, result, bits_of: dict) -> set:
        """Users whose decoded information bits match what they sent."""
        ok = set()
        for g in result.active:
            sent = bits_of.get(g)
            if sent is None:
                continue
            if np.array_equal(self.code.decode(result.symbols[g]), sent):
                ok.add(g)
        return ok

    def synthesize(self, users, channels, bits, unit_noise):
        """Received slot signal for ``users`` with the given channels and bits."""
        sc = self.scenario
        A = build_system_matrix(self.sequences, channels, sc.symbols_per_frame)
        x = np.zeros((sc.n_users, sc.symbols_per_frame))
        for u, b in zip(users, bits):
            x[u] = encode_frame(b, self.code, sc.symbols_per_frame)
        y = A @ x.ravel() + np.sqrt(sc.noise_var) * unit_noise
        return y, A

    def draw_slot(self, t_a: int, rng):
        sc = self.scenario
        users = rng.choice(sc.n_users, size=t_a, replace=False)
        channels = gen_channels(sc, rng)
        bits = rng.integers(0, 2, size=(t_a, self.n_info))
        unit_noise = unit_complex_noise(rng, sc.received_chips)
        return users, channels, bits, unit_noise

    def run_slot(self, t_a: int, rng) -> SlotOutcome:
        """One detection pass on a slot with t_a uniformly drawn active users."""
        if not 1 <= t_a <= self.scenario.n_users:
            raise ValueError(f"t_A must lie in [1, {self.scenario.n_users}], got {t_a}")
        users, channels, bits, unit_noise = self.draw_slot(t_a, rng)
        y, A = self.synthesize(users, channels, bits, unit_noise)
        res = self.detect(y, A)
        rec = self.decode_users(res, {int(u): b for u, b in zip(users, bits)})
        return SlotOutcome(t_a, users, rec, res.active, res.ill_conditioned)

    def capture_counts(self, t_a: int, trials) -> np.ndarray:
        counts = np.zeros(t_a + 1, dtype=np.int64)
        for trial in trials:
            counts[self.run_slot(t_a, self.trial_rng(t_a, trial)).s] += 1
        return counts


def unit_complex_noise(rng, n: int) -> np.ndarray:
    g = rng.standard_normal((n, 2))
    return (g[:, 0] + 1j * g[:, 1]) / np.sqrt(2)


def _count_job(args):
    scenario, t_a, start, stop = args
    return PhyEngine(scenario).capture_counts(t_a, range(start, stop))


def estimate_capture_table(scenario: PhyScenario, t_max: int, t_sim: int, workers: int = 1,
                           t_values=None, progress: bool = False) -> CaptureTable:
    """Empirical p(s|t_A) from t_sim independent slots per t_A.

    Trial k of row t_A always uses the same derived seed, so the table does not
    depend on ``workers``. Rows outside ``t_values`` (default: all) are filled
    with a point mass at s = 0 and flagged in the metadata.
    """
    if t_max < 1 or t_sim < 1:
        raise ValueError("t_max and t_sim must be >= 1")
    rows = list(range(1, t_max + 1)) if t_values is None else sorted(set(t_values))
    if any(not 1 <= t <= t_max for t in rows):
        raise ValueError("t_values must lie in 1..t_max")
    chunk = max(1, -(-t_sim // max(workers, 1)))
    jobs = [(scenario, t, a, min(a + chunk, t_sim)) for t in rows for a in range(0, t_sim, chunk)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_count_job, jobs))
    else:
        parts = []
        for job in jobs:
            parts.append(_count_job(job))
            if progress:
                print(f"t_A={job[1]} trials {job[2]}..{job[3] - 1} done", file=sys.stderr)
    p = np.zeros((t_max + 1, t_max + 1))
    for job, counts in zip(jobs, parts):
        p[job[1], : job[1] + 1] += counts
    for t in range(1, t_max + 1):
        if t in rows:
            p[t] /= t_sim
        else:
            p[t, 0] = 1.0
    meta = {
        "source": "monte-carlo",
        "snr_db": scenario.snr_db,
        "T_sim": t_sim,
        "seed": scenario.seed,
        "phy_hash": scenario.digest(),
    }
    if t_values is not None:
        meta["rows_simulated"] = rows
    return CaptureTable(p, meta)
