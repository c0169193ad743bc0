"""Node degree distributions of frameless ALOHA.

Slot degrees are Poisson with mean ``beta``; user degrees are Poisson with
mean ``(1 + epsilon) * beta``. Both are truncated where the upper tail drops
below a tolerance and the dropped mass is carried explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

DEFAULT_TAIL_TOL = 1e-10


@dataclass(frozen=True)
class DegreeDistribution:
    probs: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("probs must be a non-empty vector")
        if np.any(probs < 0) or np.any(probs > 1):
            raise ValueError("degree probabilities must lie in [0, 1]")
        if not 0 <= self.tail_mass <= 1:
            raise ValueError("tail_mass must lie in [0, 1]")
        if abs(probs.sum() + self.tail_mass - 1.0) > 1e-12:
            raise ValueError("probabilities plus tail mass must sum to 1")

    @property
    def d_max(self) -> int:
        return self.probs.size - 1

    @property
    def degrees(self) -> np.ndarray:
        return np.arange(self.probs.size)

    def mean(self) -> float:
        return float(np.dot(self.degrees, self.probs))


@dataclass(frozen=True)
class AccessParams:
    """Access parameters: average slot degree and slot/user ratio minus one."""

    beta: float
    epsilon: float
    n_users: int | None = None
    n_slots: int | None = None

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.epsilon > -1:
            raise ValueError(f"epsilon must exceed -1, got {self.epsilon}")
        if self.n_users is not None:
            if self.n_users < 1:
                raise ValueError("n_users must be positive")
            if self.beta / self.n_users > 1:
                raise ValueError("activation probability beta/N exceeds 1")
            if self.n_slots is not None and self.n_slots != round(self.n_users * (1 + self.epsilon)):
                raise ValueError("n_slots must equal round(N * (1 + epsilon))")

    @classmethod
    def from_counts(cls, beta: float, n_users: int, n_slots: int) -> "AccessParams":
        return cls(beta, n_slots / n_users - 1.0, n_users, n_slots)

    @property
    def ratio(self) -> float:
        return 1.0 + self.epsilon

    @property
    def activation_prob(self) -> float:
        if self.n_users is None:
            raise ValueError("activation probability needs a finite user count")
        return self.beta / self.n_users

    @property
    def mean_user_degree(self) -> float:
        return (1.0 + self.epsilon) * self.beta


def poisson_dist(mean: float, tail_tol: float = DEFAULT_TAIL_TOL) -> DegreeDistribution:
    """Poisson(mean) truncated at the smallest support whose upper tail is <= tail_tol."""
    if not mean > 0:
        raise ValueError(f"Poisson mean must be positive, got {mean}")
    if not 0 < tail_tol < 1:
        raise ValueError(f"tail_tol must lie in (0, 1), got {tail_tol}")
    # grow the support until the complement of the represented mass is small enough
    d_max = int(mean + 10 * np.sqrt(mean) + 10)
    while True:
        k = np.arange(d_max + 1)
        probs = np.exp(k * np.log(mean) - mean - gammaln(k + 1))
        # tail computed from the pmf beyond d_max, not 1 - sum, to avoid cancellation
        kk = np.arange(d_max + 1, d_max + 1 + 200 + int(4 * np.sqrt(mean)))
        tail = float(np.exp(kk * np.log(mean) - mean - gammaln(kk + 1)).sum())
        if tail <= tail_tol:
            break
        d_max *= 2
    # trim down to the smallest adequate support
    rev_tail = np.cumsum(probs[::-1])[::-1] + tail  # rev_tail[d] = P(K >= d)
    ok = np.nonzero(rev_tail <= tail_tol)[0]
    cut = int(ok[0]) if ok.size else d_max + 1
    cut = max(cut, 1)
    tail_mass = float(rev_tail[cut]) if cut <= d_max else tail
    return DegreeDistribution(probs[:cut], tail_mass)


def slot_degree_dist(beta: float, tail_tol: float = DEFAULT_TAIL_TOL) -> DegreeDistribution:
    return poisson_dist(beta, tail_tol)


def user_degree_dist(beta: float, epsilon: float, tail_tol: float = DEFAULT_TAIL_TOL) -> DegreeDistribution:
    """User degrees: Poisson with mean (1 + epsilon) * beta.

    The normalisation follows the mean-user-degree identity and the closed-form
    user update, i.e. exp(-(1 + epsilon) * beta), not exp(-beta).
    """
    if not epsilon > -1:
        raise ValueError(f"epsilon must exceed -1, got {epsilon}")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return poisson_dist((1.0 + epsilon) * beta, tail_tol)


def edge_perspective(node_dist: DegreeDistribution) -> DegreeDistribution:
    """Probability that an edge attaches to a node of each degree."""
    weighted = node_dist.degrees * node_dist.probs
    total = weighted.sum()
    if not total > 0:
        raise ValueError("edge perspective undefined for a zero-mean distribution")
    return DegreeDistribution(weighted / total, 0.0)
