"""Normal modes of real quadratic boson Hamiltonians.

In quadratures x = (a + a^dag)/sqrt2, p = (a - a^dag)/(i sqrt2) a form
(A, B, E0) reads 1/2 x.K.x + 1/2 p.L.p - tr(A)/2 + E0 with K = A + B and
L = A - B. Squared normal frequencies are the eigenvalues of L K; with K
positive definite they are those of the symmetric matrix K^1/2 L K^1/2.
"""
from __future__ import annotations

import heapq
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .errors import InstabilityError
from .fock import FockBasis, OperatorMatrix, annihilation, embed
from .models import QuadraticForm

ZERO_TOL = 1e-10


class Stability(NamedTuple):
    stable: bool
    margin: float


@dataclass(frozen=True, eq=False)
class BogoliubovResult:
    """b_k = sum_i u_ki a_i + v_ki a_i^dag, H = sum_k nu_k b_k^dag b_k + ground_energy."""

    frequencies: np.ndarray
    ground_energy: float
    u: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> QuadraticForm:
        """Rebuild (A, B, E0) from the normal-mode data."""
        nu = np.diag(self.frequencies)
        U, V = self.u, self.v
        A = U.T @ nu @ U + V.T @ nu @ V
        B = U.T @ nu @ V + V.T @ nu @ U
        E0 = self.ground_energy + float(np.trace(V.T @ nu @ V))
        return QuadraticForm(0.5 * (A + A.T), 0.5 * (B + B.T), E0)

    def quadrature_covariance(self) -> tuple[np.ndarray, np.ndarray]:
        """Ground-state <x x^T> and <p p^T> (zero mean)."""
        Tinv = self.u + self.v
        Tt = self.u - self.v
        return 0.5 * Tt.T @ Tt, 0.5 * Tinv.T @ Tinv

    def gap(self) -> float:
        return float(self.frequencies[0])


def _check_real(q: QuadraticForm):
    if np.iscomplexobj(q.A) or np.iscomplexobj(q.B):
        raise TypeError("complex quadratic forms are not supported")


def _is_posdef(M: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return True


def _sqrtm_sym(M: np.ndarray) -> np.ndarray:
    w, Q = np.linalg.eigh(M)
    return (Q * np.sqrt(np.clip(w, 0.0, None))) @ Q.T


def stability(q: QuadraticForm, warn: bool = True) -> Stability:
    """Smallest squared normal frequency; stable iff it exceeds 1e-10.

    Never raises. Marginal cases are reported unstable, with a warning
    unless ``warn`` is off.
    """
    _check_real(q)
    K, L = q.A + q.B, q.A - q.B
    if _is_posdef(K):
        R = _sqrtm_sym(K)
        margin = float(np.linalg.eigvalsh(R @ L @ R)[0])
    elif _is_posdef(L):
        R = _sqrtm_sym(L)
        margin = float(np.linalg.eigvalsh(R @ K @ R)[0])
    else:
        margin = float(min(np.linalg.eigvalsh(K)[0], np.linalg.eigvalsh(L)[0]))
        if margin > 0:
            margin = 0.0
    if warn and abs(margin) <= ZERO_TOL:
        warnings.warn(f"marginal stability: squared frequency {margin:.3e} within {ZERO_TOL}", stacklevel=2)
    return Stability(margin > ZERO_TOL, margin)


def diagonalize(q: QuadraticForm) -> BogoliubovResult:
    _check_real(q)
    K, L = q.A + q.B, q.A - q.B
    if not _is_posdef(K):
        margin = stability(q).margin
        raise InstabilityError(f"A + B is not positive definite (margin {margin:.6g})", margin)
    R = _sqrtm_sym(K)
    Rinv = np.linalg.inv(R)
    nu2, W = np.linalg.eigh(R @ L @ R)
    if nu2[0] <= ZERO_TOL:
        raise InstabilityError(
            f"dynamical instability: squared normal frequency {nu2[0]:.6g}", float(nu2[0])
        )
    nu = np.sqrt(nu2)
    # x = T y, p = T^-T q with T = K^-1/2 W nu^1/2
    T = Rinv @ W * np.sqrt(nu)
    Tinv = (W / np.sqrt(nu)).T @ R
    u = 0.5 * (Tinv + T.T)
    v = 0.5 * (Tinv - T.T)
    ground = q.E0 + 0.5 * (float(np.sum(nu)) - float(np.trace(q.A)))
    return BogoliubovResult(nu, ground, u, v)


def excitation_spectrum(result: BogoliubovResult, levels: int) -> np.ndarray:
    """The ``levels`` lowest values of ground_energy + sum_k n_k nu_k."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    nu = np.asarray(result.frequencies, dtype=float)
    start = (0,) * len(nu)
    heap = [(0.0, start)]
    seen = {start}
    out = []
    while heap and len(out) < levels:
        e, occ = heapq.heappop(heap)
        out.append(e)
        for k in range(len(nu)):
            nxt = occ[:k] + (occ[k] + 1,) + occ[k + 1 :]
            if nxt not in seen:
                seen.add(nxt)
                heapq.heappush(heap, (e + nu[k], nxt))
    return result.ground_energy + np.array(out)


def fock_matrix(q: QuadraticForm, basis: FockBasis) -> OperatorMatrix:
    """The quadratic Hamiltonian projected onto a truncated Fock basis."""
    if basis.n_modes != q.n_modes or basis.n_spins:
        raise ValueError("basis must have exactly the form's modes and no spins")
    a = [embed(basis, i, annihilation(c)) for i, c in enumerate(basis.mode_cutoffs)]
    H = q.E0 * sp.identity(basis.dimension, format="csr")
    n = q.n_modes
    for i in range(n):
        for j in range(n):
            if q.A[i, j]:
                H = H + q.A[i, j] * (a[i].T @ a[j])
            if q.B[i, j]:
                H = H + 0.5 * q.B[i, j] * (a[i].T @ a[j].T + a[i] @ a[j])
    return OperatorMatrix(basis, 0.5 * (H + H.T), hermitian=True)
