"""Truncated Fock-basis states and the Helstrom bound for thermal vs coherent.

The coherent amplitude is taken real and positive, so every matrix here is
real symmetric.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .special import log_gamma
from .stats import TAIL_TOLERANCE, pmf_bose_einstein, pmf_poisson

HARD_TAIL_LIMIT = 1e-8
JACOBI_TOLERANCE = 1e-12


class InsufficientCutoffError(ValueError):
    """The Fock truncation throws away too much probability."""


@dataclass(frozen=True)
class DensityMatrix:
    data: np.ndarray

    def __post_init__(self):
        m = np.array(self.data, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density matrix must be square")
        if np.max(np.abs(m - m.T), initial=0.0) > 1e-12:
            raise ValueError("density matrix must be symmetric")
        m.setflags(write=False)
        object.__setattr__(self, "data", m)

    @property
    def cutoff(self) -> int:
        return self.data.shape[0] - 1

    def trace(self) -> float:
        return float(np.trace(self.data))

    def purity(self) -> float:
        return float(np.sum(self.data * self.data))

    def eigenvalues(self) -> np.ndarray:
        return eigenvalues_symmetric(self.data)


def _tail_check(tail: float, what: str) -> None:
    if tail >= HARD_TAIL_LIMIT:
        raise InsufficientCutoffError(f"{what}: tail mass {tail:.3g} beyond cutoff >= {HARD_TAIL_LIMIT}")
    if tail >= TAIL_TOLERANCE:
        warnings.warn(f"{what}: tail mass {tail:.3g} beyond cutoff exceeds {TAIL_TOLERANCE}", stacklevel=3)


def auto_cutoff(mean_n: float) -> int:
    """Cutoff satisfying the tail policy for both the thermal and coherent state."""
    return max(pmf_bose_einstein(mean_n).cutoff, pmf_poisson(mean_n).cutoff)


def thermal_state(mean_n: float, cutoff: int | None = None) -> DensityMatrix:
    """Diagonal thermal state with Bose-Einstein weights."""
    pmf = pmf_bose_einstein(mean_n, cutoff)
    _tail_check(pmf.tail_mass, "thermal state")
    return DensityMatrix(np.diag(pmf.probs))


def coherent_amplitudes(mean_n: float, cutoff: int) -> np.ndarray:
    """Fock amplitudes exp(-nbar/2) nbar^(n/2) / sqrt(n!) of |sqrt(nbar)>."""
    c = np.zeros(cutoff + 1)
    if mean_n == 0:
        c[0] = 1.0
        return c
    n = np.arange(cutoff + 1, dtype=float)
    return np.exp(-0.5 * mean_n + 0.5 * n * math.log(mean_n) - 0.5 * log_gamma(n + 1.0))


def coherent_state(mean_n: float, cutoff: int | None = None) -> DensityMatrix:
    pmf = pmf_poisson(mean_n, cutoff)
    _tail_check(pmf.tail_mass, "coherent state")
    c = coherent_amplitudes(mean_n, pmf.cutoff)
    return DensityMatrix(np.outer(c, c))


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Rounds of disjoint index pairs covering every pair once (circle method)."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            p, q = players[i], players[m - 1 - i]
            if p < n and q < n:
                ps.append(min(p, q))
                qs.append(max(p, q))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def eigenvalues_symmetric(m, tol: float = JACOBI_TOLERANCE, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations, ascending.

    Sweeps use a round-robin ordering so that each round applies n/2 disjoint
    rotations at once. Iteration stops when the off-diagonal Frobenius norm
    drops below ``tol * max(1, ||m||_F)``.
    """
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-9 * max(1.0, np.max(np.abs(a), initial=0.0)):
        raise ValueError("matrix must be symmetric")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    if n <= 1:
        return np.diag(a).copy()
    target = tol * max(1.0, float(np.linalg.norm(a)))
    rounds = _round_robin(n)
    tiny = 1e-3 * target / n
    for _ in range(max_sweeps):
        d = np.diag(a).copy()
        np.fill_diagonal(a, 0.0)
        off = float(np.linalg.norm(a))
        np.fill_diagonal(a, d)
        if off < target:
            break
        for p, q in rounds:
            apq = a[p, q]
            # entries this small move no eigenvalue by more than ~tiny
            active = np.abs(apq) > tiny
            if not active.all():
                a[p[~active], q[~active]] = 0.0
                a[q[~active], p[~active]] = 0.0
                if not active.any():
                    continue
                p, q, apq = p[active], q[active], apq[active]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            big = np.abs(theta) > 1e150
            safe = np.where(big, 1.0, theta)
            t = np.where(big, 0.5 / np.where(big, theta, 1.0), np.sign(safe) / (np.abs(safe) + np.sqrt(safe * safe + 1.0)))
            t[theta == 0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # A <- J^T A J, rows then columns
            rp, rq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
            a[p, q] = 0.0
            a[q, p] = 0.0
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    return np.sort(np.diag(a))


def trace_norm(m) -> float:
    return float(np.sum(np.abs(eigenvalues_symmetric(m))))


def helstrom_error(mean_n: float, cutoff: int | None = None) -> float:
    """Minimum error for telling a thermal from a coherent state of equal mean.

    0.5 - 0.25 * ||rho_th - rho_coh||_1 with equal priors.
    """
    if not math.isfinite(mean_n) or mean_n < 0:
        raise ValueError("mean_n must be finite and >= 0")
    if cutoff is None:
        cutoff = auto_cutoff(mean_n)
    rho_th = thermal_state(mean_n, cutoff)
    rho_coh = coherent_state(mean_n, cutoff)
    err = 0.5 - 0.25 * trace_norm(rho_th.data - rho_coh.data)
    return min(0.5, max(0.0, err))
