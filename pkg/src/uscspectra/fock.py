"""Truncated Fock space for bosonic modes plus spin-1/2 sites.

Basis ordering is little-endian mixed radix: mode 0 is the fastest digit,
spins follow the modes as trailing (most significant) bits. Spin bit 0 is
sigma_z = +1, bit 1 is sigma_z = -1.

Displaced frames are handled by substitution a -> a + alpha with real alpha,
so every operator built here is exact on the truncated box as long as it is
assembled in normal order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import SizingError

DENSE_CAP = 200_000
SPARSE_CAP = 10_000_000
# below this dimension operators are assembled densely; sparse overhead dominates
SMALL_DIM = 256

LadderKind = Literal["annihilate", "create", "number", "quadrature"]

_SIGMA = {
    "x": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]]),
}


@dataclass(frozen=True)
class FockBasis:
    mode_cutoffs: tuple[int, ...]
    n_spins: int = 0

    @property
    def n_modes(self) -> int:
        return len(self.mode_cutoffs)

    @property
    def dims(self) -> tuple[int, ...]:
        """Local dimension of every tensor factor, fastest first."""
        return tuple(self.mode_cutoffs) + (2,) * self.n_spins

    @property
    def dimension(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.dims else 1

    def index(self, occupation: Sequence[int]) -> int:
        """Flat index of an occupation tuple (modes first, then spin bits)."""
        occupation = tuple(int(n) for n in occupation)
        if len(occupation) != len(self.dims):
            raise ValueError(f"expected {len(self.dims)} digits, got {len(occupation)}")
        idx, stride = 0, 1
        for n, d in zip(occupation, self.dims):
            if not 0 <= n < d:
                raise IndexError(f"digit {n} outside range 0..{d - 1}")
            idx += n * stride
            stride *= d
        return idx

    def occupation(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.dimension:
            raise IndexError(f"index {index} outside basis of dimension {self.dimension}")
        digits = []
        for d in self.dims:
            index, r = divmod(index, d)
            digits.append(r)
        return tuple(digits)

    def digits(self) -> np.ndarray:
        """(dimension, n_factors) integer array of all occupation tuples in basis order."""
        if not self.dims:
            return np.zeros((1, 0), dtype=np.int64)
        grids = np.indices(self.dims[::-1]).reshape(len(self.dims), -1)[::-1]
        return grids.T.astype(np.int64)


def build_basis(mode_cutoffs: Sequence[int], n_spins: int = 0, cap: int = SPARSE_CAP) -> FockBasis:
    """Create a basis, refusing anything whose dimension exceeds ``cap``."""
    cutoffs = tuple(int(c) for c in mode_cutoffs)
    if any(c < 2 for c in cutoffs):
        raise ValueError(f"every mode cutoff must be >= 2, got {list(cutoffs)}")
    if n_spins < 0:
        raise ValueError("n_spins must be non-negative")
    basis = FockBasis(cutoffs, int(n_spins))
    if basis.dimension > cap:
        product = " x ".join(str(d) for d in basis.dims)
        raise SizingError(
            f"basis dimension {product} = {basis.dimension} exceeds the cap of {cap}"
        )
    return basis


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    basis: FockBasis
    matrix: sp.csr_matrix
    hermitian: bool = False

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix)
        m.sum_duplicates()
        m.sort_indices()
        object.__setattr__(self, "matrix", m)
        n = self.basis.dimension
        if m.shape != (n, n):
            raise ValueError(f"matrix shape {m.shape} does not match basis dimension {n}")
        if self.hermitian:
            if n <= SMALL_DIM:
                d = m.toarray()
                err = float(np.max(np.abs(d - d.conj().T))) if n else 0.0
            else:
                diff = m - m.conj().T
                err = float(np.max(np.abs(diff.data))) if diff.nnz else 0.0
            if err >= 1e-12:
                raise ValueError("operator flagged hermitian but |M - M^dagger| >= 1e-12")

    @property
    def shape(self):
        return self.matrix.shape

    def dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        if self.basis.dimension > cap:
            raise SizingError(
                f"dense conversion of dimension {self.basis.dimension} exceeds the cap of {cap}"
            )
        return self.matrix.toarray()

    def adjoint(self) -> "OperatorMatrix":
        return OperatorMatrix(self.basis, self.matrix.conj().T.tocsr(), self.hermitian)

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            return OperatorMatrix(self.basis, self.matrix @ other.matrix)
        return self.matrix @ other


def annihilation(cutoff: int) -> sp.csr_matrix:
    """Single-mode truncated a with <n-1|a|n> = sqrt(n)."""
    return sp.diags(np.sqrt(np.arange(1, cutoff, dtype=float)), 1, format="csr")


def _kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    (p, q), (r, t) = A.shape, B.shape
    return np.multiply.outer(A, B).transpose(0, 2, 1, 3).reshape(p * r, q * t)


def embed(basis: FockBasis, factor: int, local, dense: bool = False):
    """Tensor ``local`` into the full space at tensor factor ``factor``.

    Returns CSR, or an ndarray when ``dense`` is set.
    """
    dims = basis.dims
    # mode 0 fastest means it is the rightmost Kronecker factor
    inner = int(np.prod(dims[:factor], dtype=np.int64))
    outer = int(np.prod(dims[factor + 1 :], dtype=np.int64))
    if dense:
        op = local.toarray() if sp.issparse(local) else np.asarray(local, dtype=float)
        if inner > 1:
            op = _kron(op, np.eye(inner))
        if outer > 1:
            op = _kron(np.eye(outer), op)
        return op
    op = sp.csr_matrix(local)
    if inner > 1:
        op = sp.kron(op, sp.identity(inner, format="csr"), format="csr")
    if outer > 1:
        op = sp.kron(sp.identity(outer, format="csr"), op, format="csr")
    return op


def local_operators(basis: FockBasis, frame=None):
    """Embedded a_i + frame_i and sigma_x, sigma_z per spin, dense for small bases."""
    dense = basis.dimension <= SMALL_DIM
    frame = np.zeros(basis.n_modes) if frame is None else frame
    eye = np.eye(basis.dimension) if dense else sp.identity(basis.dimension, format="csr")
    a = [
        embed(basis, i, annihilation(c), dense) + float(frame[i]) * eye
        for i, c in enumerate(basis.mode_cutoffs)
    ]
    sx = [embed(basis, basis.n_modes + k, _SIGMA["x"], dense) for k in range(basis.n_spins)]
    sz = [embed(basis, basis.n_modes + k, _SIGMA["z"], dense) for k in range(basis.n_spins)]
    return a, sx, sz


def ladder_op(
    basis: FockBasis, site: int, kind: LadderKind, displacement: float = 0.0
) -> OperatorMatrix:
    """Ladder-type operator on mode ``site`` in the frame a -> a + displacement."""
    if not 0 <= site < basis.n_modes:
        raise IndexError(f"mode {site} out of range for {basis.n_modes} modes")
    alpha = float(displacement)
    if not np.isfinite(alpha):
        raise ValueError("displacement must be finite")
    a = embed(basis, site, annihilation(basis.mode_cutoffs[site]))
    eye = sp.identity(basis.dimension, format="csr")
    if kind == "annihilate":
        return OperatorMatrix(basis, a + alpha * eye)
    if kind == "create":
        return OperatorMatrix(basis, a.T + alpha * eye)
    if kind == "number":
        return OperatorMatrix(basis, a.T @ a + alpha * (a + a.T) + alpha**2 * eye, hermitian=True)
    if kind == "quadrature":
        return OperatorMatrix(basis, a + a.T + 2.0 * alpha * eye, hermitian=True)
    raise ValueError(f"unknown ladder kind {kind!r}")


def spin_op(basis: FockBasis, spin_index: int, axis: Literal["x", "z"]) -> OperatorMatrix:
    if not 0 <= spin_index < basis.n_spins:
        raise IndexError(f"spin {spin_index} out of range for {basis.n_spins} spins")
    if axis not in _SIGMA:
        raise ValueError(f"unsupported spin axis {axis!r}")
    return OperatorMatrix(
        basis, embed(basis, basis.n_modes + spin_index, _SIGMA[axis]), hermitian=True
    )


def parity_diagonal(basis: FockBasis) -> np.ndarray:
    """Diagonal of prod_modes (-1)^n * prod_spins sigma_z."""
    digits = basis.digits()
    flips = digits[:, : basis.n_modes].sum(axis=1) + digits[:, basis.n_modes :].sum(axis=1)
    return np.where(flips % 2 == 0, 1.0, -1.0)


def parity_op(basis: FockBasis) -> OperatorMatrix:
    n = basis.dimension
    idx = np.arange(n + 1)
    return OperatorMatrix(basis, sp.csr_matrix((parity_diagonal(basis), idx[:-1], idx), shape=(n, n)), hermitian=True)


def displacement_elements(gamma: float, rows: int, cols: int) -> np.ndarray:
    """<k|D(gamma)|m> for real gamma, k < rows, m < cols (no truncation error).

    Built from the closed Laguerre form in log space so that tiny elements
    underflow cleanly to zero instead of overflowing intermediate powers.
    """
    from scipy.special import eval_genlaguerre, gammaln

    g = float(gamma)
    x = g * g
    out = np.zeros((rows, cols))
    for k in range(rows):
        for m in range(cols):
            lo, hi = min(k, m), max(k, m)
            lag = eval_genlaguerre(lo, hi - lo, x)
            if lag == 0.0:
                continue
            if g == 0.0:
                out[k, m] = 1.0 if k == m else 0.0
                continue
            logmag = 0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) + (hi - lo) * np.log(abs(g)) - 0.5 * x
            logmag += np.log(abs(lag))
            sign = np.sign(lag)
            # k < m carries (-gamma)^(m-k), k >= m carries gamma^(k-m)
            base = g if k >= m else -g
            if base < 0 and (hi - lo) % 2:
                sign = -sign
            out[k, m] = sign * np.exp(logmag)
    return out
