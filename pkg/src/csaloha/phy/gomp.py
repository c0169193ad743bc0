"""Group orthogonal matching pursuit for joint activity and data detection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .scenario import GompSettings


@dataclass
class GompResult:
    active: list
    symbols: dict
    selected: list = field(default_factory=list)
    ill_conditioned: bool = False


def _real_system(A: np.ndarray, y: np.ndarray):
    # symbols are real (BPSK), so solve over stacked real and imaginary parts
    if np.iscomplexobj(A) or np.iscomplexobj(y):
        return np.vstack([A.real, A.imag]), np.concatenate([y.real, y.imag])
    return np.asarray(A, dtype=float), np.asarray(y, dtype=float)


def _fit(Ar, yr, groups, L):
    cols = np.concatenate([np.arange(g * L, (g + 1) * L) for g in groups])
    sub = Ar[:, cols]
    x, _, rank, _ = np.linalg.lstsq(sub, yr, rcond=None)
    return x, rank == cols.size, yr - sub @ x


class _GrowingQR:
    """Thin QR of a column block that grows one group at a time."""

    RANK_TOL = 1e-8

    def __init__(self, yr):
        self.yr = yr
        self.Q = np.zeros((yr.size, 0))
        self.R = np.zeros((0, 0))
        self.z = np.zeros(0)  # Q^T y
        self.resid = yr.copy()

    def add(self, B) -> bool:
        """Append columns B; returns False (and leaves state unchanged) if B is near-dependent."""
        k = self.Q.shape[1]
        R12 = self.Q.T @ B
        W = B - self.Q @ R12
        # second Gram-Schmidt pass keeps Q orthonormal to working precision
        corr = self.Q.T @ W
        W -= self.Q @ corr
        R12 += corr
        Qn, R22 = np.linalg.qr(W)
        scale = np.linalg.norm(B, axis=0).max()
        if scale == 0 or np.min(np.abs(np.diag(R22))) < self.RANK_TOL * scale:
            return False
        L = B.shape[1]
        R = np.zeros((k + L, k + L))
        R[:k, :k] = self.R
        R[:k, k:] = R12
        R[k:, k:] = R22
        zn = Qn.T @ self.yr
        self.Q = np.hstack([self.Q, Qn])
        self.R = R
        self.z = np.concatenate([self.z, zn])
        self.resid = self.resid - Qn @ zn
        return True

    def solve(self):
        return solve_triangular(self.R, self.z) if self.z.size else self.z


def _strong_enough(energy: float, noise_var: float, threshold: float) -> bool:
    if energy <= 0:
        return False
    return energy / (energy + noise_var) >= threshold


def group_energy(Ar, g, x_g, L, noise_var: float = 0.0) -> float:
    """Received energy per symbol of one group's estimated contribution.

    ``noise_var`` is the complex noise variance per chip; the noise energy a
    least-squares fit leaks into an L-dimensional group, L * noise_var / 2, is
    removed so the estimate is unbiased.
    """
    contrib = Ar[:, g * L : (g + 1) * L] @ x_g
    return (float(contrib @ contrib) - L * noise_var / 2) / L


def detect_gomp(y, A, group_size: int, settings: GompSettings, noise_var: float | None = None,
                candidates=None) -> GompResult:
    """Greedy block-sparse recovery of ``y = A x + n``.

    Columns of ``A`` come in groups of ``group_size`` (one group per user).
    Each step adds the group whose columns correlate most strongly with the
    residual, then re-fits all selected groups jointly by least squares.
    ``candidates`` restricts the search to a subset of groups.
    """
    Ar, yr = _real_system(np.asarray(A), np.asarray(y))
    L = group_size
    n_groups = Ar.shape[1] // L
    if Ar.shape[1] != n_groups * L:
        raise ValueError("column count is not a multiple of the group size")
    if Ar.shape[0] != yr.size:
        raise ValueError(f"observation length {yr.size} does not match system matrix rows {Ar.shape[0]}")
    allowed = np.zeros(n_groups, dtype=bool)
    allowed[list(range(n_groups)) if candidates is None else list(candidates)] = True

    # per-group column energy; selection compares correlation energy per unit column energy
    col_energy = np.einsum("fc,fc->c", Ar, Ar).reshape(n_groups, L).sum(axis=1)
    col_energy[col_energy == 0] = np.inf
    y_energy = float(yr @ yr)
    stop = settings.residual_stop * y_energy
    if noise_var is not None:
        stop = max(stop, settings.noise_stop * noise_var * Ar.shape[0] / 2)
    selected: list[int] = []
    qr = _GrowingQR(yr)
    ill = False
    while len(selected) < min(settings.max_groups, int(allowed.sum())) and qr.resid @ qr.resid > stop:
        corr = (Ar.T @ qr.resid).reshape(n_groups, L)
        energy = np.einsum("gl,gl->g", corr, corr) / col_energy
        energy[~allowed] = -1.0
        energy[selected] = -1.0
        g = int(np.argmax(energy))
        if not qr.add(Ar[:, g * L : (g + 1) * L]):
            ill = True
            break
        selected.append(g)
    x = qr.solve()

    # declare inactive any group whose estimated received energy per symbol is weak
    # next to the noise floor, then re-fit on what is left
    est = {g: x[k * L : (k + 1) * L] for k, g in enumerate(selected)}
    nv = noise_var or 0.0
    active = [g for g in selected if _strong_enough(group_energy(Ar, g, est[g], L, nv), nv, settings.activity_threshold)]
    if active and len(active) < len(selected):
        x, ok, _ = _fit(Ar, yr, active, L)
        est = {g: x[k * L : (k + 1) * L] for k, g in enumerate(active)}
    else:
        est = {g: est[g] for g in active}
    return GompResult(active=active, symbols=est, selected=selected, ill_conditioned=ill)
