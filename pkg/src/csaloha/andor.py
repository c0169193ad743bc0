"""Asymptotic and-or tree evaluation of frameless ALOHA with multi-user capture."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .capture import CaptureVector
from .degree import edge_perspective, slot_degree_dist

log = logging.getLogger(__name__)

TRUNCATION_WARN = 1e-6
# Poisson tail left out of the slot-degree sum; counted as unrecovered
SLOT_TAIL_TOL = 1e-16


def user_update(q: float, beta: float, epsilon: float) -> float:
    """Probability that an outgoing user edge is unrecovered, given q on the incoming ones."""
    return math.exp(-(1.0 + epsilon) * beta * (1.0 - q))


class SlotKernel:
    """Precomputed slot-side quantities for one (beta, capture vector) pair.

    Holds the edge-perspective slot degree weights and the capture vector with
    trailing zeros trimmed, so padding a capture vector with zeros does not
    change any result bit.
    """

    def __init__(self, beta: float, capture: CaptureVector, tail_tol: float = SLOT_TAIL_TOL):
        if not beta > 0:
            raise ValueError(f"beta must be positive, got {beta}")
        self.beta = beta
        omega = edge_perspective(slot_degree_dist(beta, tail_tol))
        # omega_l for l >= 1; inner sums run over n = l - 1 other edges
        self.weights = omega.probs[1:]
        self.n = np.arange(self.weights.size)
        C = np.asarray(capture.C)
        nz = np.nonzero(C)[0]
        self.C = C[: nz[-1] + 1] if nz.size else C[:0]
        self.t = np.arange(self.C.size)
        # log binomial coefficients, zero-weight entries where t > n
        n, t = self.n[:, None], self.t[None, :]
        valid = t <= n
        self._valid = valid
        self._log_binom = np.where(valid, gammaln(n + 1) - gammaln(t + 1) - gammaln(np.maximum(n - t, 0) + 1), -np.inf)
        # Poisson edge mass where the interferer count can reach past the capture vector
        self.truncation_mass = float(omega.probs[capture.t_max + 1 :].sum())

    def recovered_prob(self, r: float) -> float:
        """1 - q: probability an outgoing slot edge is recovered."""
        if self.C.size == 0:
            return 0.0
        n, t = self.n[:, None], self.t[None, :]
        # log of (1 - r)^(n - t) r^t, with 0 * log 0 = 0
        with np.errstate(divide="ignore", invalid="ignore"):
            log_term = self._log_binom + xlog1py(np.maximum(n - t, 0), -r) + xlogy(t, r)
        pmf = np.where(self._valid, np.exp(log_term), 0.0)
        inner = pmf @ self.C
        return float(np.dot(self.weights, inner))

    def __call__(self, r: float) -> float:
        return min(1.0, max(0.0, 1.0 - self.recovered_prob(r)))


def slot_update(r: float, beta: float, capture: CaptureVector) -> float:
    """Probability that an outgoing slot edge is unrecovered, given r on the incoming ones."""
    return SlotKernel(beta, capture)(r)


@dataclass
class FixedPointTrace:
    iterates: list = field(default_factory=list)
    converged: bool = False
    p_r: float = 0.0
    throughput: float = 0.0
    iterations_used: int = 0
    truncation_mass: float = 0.0
    beta: float = 0.0
    epsilon: float = 0.0


def evaluate(beta: float, epsilon: float, capture: CaptureVector, tol: float = 1e-10,
             max_iter: int = 10_000, kernel: SlotKernel | None = None) -> FixedPointTrace:
    """Iterate r_m = f(q_{m-1}), q_m = g(r_m) from q_0 = 1 until r settles."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if not epsilon > -1:
        raise ValueError(f"epsilon must exceed -1, got {epsilon}")
    g = kernel if kernel is not None else SlotKernel(beta, capture)
    trace = FixedPointTrace(beta=beta, epsilon=epsilon, truncation_mass=g.truncation_mass)
    if g.truncation_mass > TRUNCATION_WARN:
        log.warning("slot-degree mass %.3g lies beyond capture t_max=%d (beta=%g); consider raising t_max",
                    g.truncation_mass, capture.t_max, beta)
    q = 1.0
    r_prev = None
    for m in range(1, max_iter + 1):
        r = user_update(q, beta, epsilon)
        q = g(r)
        trace.iterates.append((r, q))
        trace.iterations_used = m
        if r_prev is not None and abs(r - r_prev) < tol:
            trace.converged = True
            break
        r_prev = r
    r_final = trace.iterates[-1][0]
    trace.p_r = 1.0 - r_final
    trace.throughput = trace.p_r / (1.0 + epsilon)
    return trace


def node_recovery_prob(q: float, beta: float, epsilon: float) -> float:
    """User-node recovery probability 1 - sum_k Lambda_k q^k for Poisson user degrees."""
    return 1.0 - math.exp(-(1.0 + epsilon) * beta * (1.0 - q))


@dataclass
class BetaSweep:
    beta_star: float
    p_r_star: float
    t_star: float
    betas: np.ndarray
    p_r: np.ndarray
    throughput: np.ndarray


def _eval_grid(epsilon, capture, betas, tol, max_iter):
    out = np.empty((len(betas), 2))
    for i, b in enumerate(betas):
        tr = evaluate(float(b), epsilon, capture, tol=tol, max_iter=max_iter)
        out[i] = tr.p_r, tr.throughput
    return out


def sweep_beta(epsilon: float, capture: CaptureVector, beta_grid, refine: int = 0,
               tol: float = 1e-10, max_iter: int = 10_000) -> BetaSweep:
    """Maximise P_R over a beta grid; ties go to the smaller beta.

    With ``refine > 0`` the search repeats that many times on a grid ten times
    finer spanning one original step either side of the current optimum.
    """
    betas = np.unique(np.asarray(beta_grid, dtype=float))
    if betas.size == 0 or np.any(betas <= 0):
        raise ValueError("beta grid must be non-empty and positive")
    vals = _eval_grid(epsilon, capture, betas, tol, max_iter)
    all_b, all_v = [betas], [vals]
    i = int(np.argmax(vals[:, 0]))
    best_b, best = betas[i], vals[i]
    step = float(np.min(np.diff(betas))) if betas.size > 1 else 0.0
    for _ in range(refine):
        if step <= 0:
            break
        lo = max(best_b - step, step / 10)
        fine = np.linspace(lo, best_b + step, int(round((best_b + step - lo) / (step / 10))) + 1)
        fv = _eval_grid(epsilon, capture, fine, tol, max_iter)
        all_b.append(fine)
        all_v.append(fv)
        j = int(np.argmax(fv[:, 0]))
        if fv[j, 0] > best[0] or (fv[j, 0] == best[0] and fine[j] < best_b):
            best_b, best = fine[j], fv[j]
        step /= 10
    b = np.concatenate(all_b)
    v = np.concatenate(all_v)
    order = np.argsort(b, kind="stable")
    return BetaSweep(float(best_b), float(best[0]), float(best[1]), b[order], v[order, 0], v[order, 1])


@dataclass
class SweepResult:
    """Per-ratio optima; ``curves`` holds the full beta sweep behind each row."""

    grid: list
    curves: list = field(default_factory=list)

    def summary_rows(self):
        return [dict(zip(("m_over_n", "beta_star", "p_r_star", "t_star"), row)) for row in self.grid]

    def long_rows(self):
        for ratio, sw in zip((g[0] for g in self.grid), self.curves):
            for b, pr, t in zip(sw.betas, sw.p_r, sw.throughput):
                yield {"m_over_n": ratio, "beta": float(b), "p_r": float(pr), "t": float(t)}


def _sweep_one(args):
    ratio, capture, beta_grid, refine, tol, max_iter = args
    return sweep_beta(ratio - 1.0, capture, beta_grid, refine=refine, tol=tol, max_iter=max_iter)


def sweep_ratio(ratio_grid, capture: CaptureVector, beta_grid, refine: int = 0, workers: int = 1,
                tol: float = 1e-10, max_iter: int = 10_000) -> SweepResult:
    """Run :func:`sweep_beta` at epsilon = ratio - 1 for every M/N ratio."""
    ratios = [float(x) for x in ratio_grid]
    if not ratios or any(x <= 0 for x in ratios):
        raise ValueError("ratios must be positive")
    jobs = [(x, capture, beta_grid, refine, tol, max_iter) for x in ratios]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            sweeps = list(pool.map(_sweep_one, jobs))
    else:
        sweeps = [_sweep_one(j) for j in jobs]
    grid = [(x, sw.beta_star, sw.p_r_star, sw.t_star) for x, sw in zip(ratios, sweeps)]
    return SweepResult(grid, sweeps)
