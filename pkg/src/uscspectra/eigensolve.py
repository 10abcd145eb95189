"""Exact diagonalization, doublet clustering and parity diagnostics.

Two solvers live here. ``spectrum`` diagonalizes one Hamiltonian matrix in a
single truncated box. ``mirror_frame_spectrum`` handles the ultrastrong regime,
where the ground doublet lives on two mirror-image displaced frames: it works
in the span of D[v]|n> and P D[v]|n>, which splits into the two parity sectors
because P commutes with H.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import reduce
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonConvergenceError, SizingError
from .fock import (
    DENSE_CAP,
    FockBasis,
    OperatorMatrix,
    build_basis,
    displacement_elements,
    ladder_op,
    parity_op,
)
from .models import ModelSpec, build_hamiltonian

DENSE_SWITCH = 2000
MIRROR_CAP = 6000
TOL_REL = 1e-10
TOL_ABS_SCALE = 1e-8
OVERLAP_FLOOR = 1e-8
PARITY_BOUND = 1.0 + 1e-9


@dataclass(frozen=True)
class Cluster:
    indices: tuple[int, ...]
    max_internal_splitting: float

    @property
    def is_doublet(self) -> bool:
        return len(self.indices) == 2


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None
    clusters: tuple[Cluster, ...] = ()
    parity_diag: tuple[np.ndarray, ...] = ()
    order_params: tuple[dict, ...] = ()
    truncation_error: float = float("nan")
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.asarray(self.eigenvalues, dtype=float)
        if np.any(np.diff(e) < 0):
            raise ValueError("eigenvalues must be nondecreasing")
        object.__setattr__(self, "eigenvalues", e)
        for pd in self.parity_diag:
            if np.any(np.abs(pd) > PARITY_BOUND):
                raise ValueError("parity eigenvalues must lie in [-1, 1]")

    def replace(self, **changes) -> "SpectrumReport":
        return dataclasses.replace(self, **changes)

    def doublets(self) -> list[Cluster]:
        return [c for c in self.clusters if c.is_doublet]

    def lowest_splitting(self) -> float:
        """Width of the lowest cluster if it is a doublet, else E1 - E0."""
        if self.clusters and self.clusters[0].is_doublet:
            return self.clusters[0].max_internal_splitting
        return float(self.eigenvalues[1] - self.eigenvalues[0])


def _fix_phase(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _residuals(H, E, V) -> np.ndarray:
    R = H @ V - V * E
    return np.linalg.norm(R, axis=0)


def spectrum(H: OperatorMatrix, k: int, dense_switch: int | None = None) -> SpectrumReport:
    """The k lowest eigenpairs of a hermitian operator.

    Dense LAPACK up to ``dense_switch``; above it, ARPACK in shift-invert mode
    with the shift placed just below a coarse estimate of the ground energy.
    """
    if not H.hermitian:
        raise ValueError("spectrum needs a hermitian-flagged operator")
    if dense_switch is None:
        dense_switch = DENSE_SWITCH
    n = H.basis.dimension
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}, got {k}")
    M = H.matrix
    if n <= dense_switch or k >= n - 1:
        E, V = la.eigh(H.dense(max(DENSE_CAP, dense_switch)), subset_by_index=[0, k - 1])
    else:
        e0 = spla.eigsh(M, k=1, which="SA", tol=1e-6, return_eigenvectors=False)[0]
        scale = float(abs(M).max())
        sigma = e0 - 1e-3 * (1.0 + abs(e0)) - 1e-6 * scale
        try:
            E, V = spla.eigsh(M, k=k, sigma=sigma, which="LM", tol=1e-13)
        except spla.ArpackNoConvergence as exc:
            raise NonConvergenceError(f"ARPACK did not converge: {exc}") from exc
        order = np.argsort(E)
        E, V = E[order], V[:, order]
    res = _residuals(M, E, V)
    bad = res > 1e-8 * (1.0 + np.abs(E))
    if np.any(bad):
        worst = float(np.max(res))
        raise NonConvergenceError(f"eigenpair residual {worst:.3e} above tolerance", worst)
    return SpectrumReport(E, _fix_phase(V), extras={"residuals": res, "dimension": n})


def default_tol_abs(eigenvalues) -> float:
    e = np.asarray(eigenvalues, dtype=float)
    return TOL_ABS_SCALE * max(float(np.max(np.abs(e))), 1.0) if e.size else TOL_ABS_SCALE


def cluster_doublets(eigenvalues, tol_abs: float | None = None, tol_rel: float = TOL_REL) -> tuple[Cluster, ...]:
    """Maximal runs of consecutive levels whose gaps are below tol_abs + tol_rel * spread."""
    e = np.asarray(eigenvalues, dtype=float)
    if tol_abs is None:
        tol_abs = default_tol_abs(e)
    if tol_abs <= 0 or tol_rel <= 0:
        raise ValueError("clustering tolerances must be positive")
    if e.size == 0:
        return ()
    if np.any(np.diff(e) < 0):
        raise ValueError("eigenvalues must be sorted")
    thresh = tol_abs + tol_rel * float(e[-1] - e[0])
    clusters, start = [], 0
    for i in range(1, e.size + 1):
        if i == e.size or e[i] - e[i - 1] >= thresh:
            clusters.append(Cluster(tuple(range(start, i)), float(e[i - 1] - e[start])))
            start = i
    return tuple(clusters)


def _as_array(P):
    if isinstance(P, OperatorMatrix):
        return P.matrix
    return P


def _check_orthonormal(V: np.ndarray, tol: float = 1e-8):
    gram = V.T @ V
    err = float(np.max(np.abs(gram - np.eye(V.shape[1])))) if V.size else 0.0
    if err >= tol:
        raise ValueError(f"vectors are not orthonormal (Gram residual {err:.3e})")


def parity_in_subspace(vectors, P) -> np.ndarray:
    """Eigenvalues of V^T P V on the span of orthonormal columns V."""
    V = np.asarray(vectors, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    _check_orthonormal(V)
    PV = _as_array(P) @ V
    W = V.T @ PV
    return np.linalg.eigvalsh(0.5 * (W + W.T))


def parity_leakage(vectors, P) -> float:
    """Spectral norm of (I - Pi) P Pi for the projector Pi onto span(V)."""
    V = np.asarray(vectors, dtype=float)
    _check_orthonormal(V)
    PV = np.asarray(_as_array(P) @ V)
    out = PV - V @ (V.T @ PV)
    return float(np.linalg.norm(out, 2))


def order_parameter(state, op) -> float:
    """<state|op|state> for a normalized state."""
    psi = np.asarray(state)
    M = _as_array(op)
    if psi.ndim != 1 or psi.shape[0] != M.shape[0]:
        raise ValueError(f"state of length {psi.shape} does not match operator {M.shape}")
    norm = float(np.vdot(psi, psi).real)
    if abs(norm - 1.0) > 1e-8:
        raise ValueError(f"state is not normalized (norm^2 = {norm:.12g})")
    val = np.vdot(psi, M @ psi)
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ValueError("expectation value has an imaginary part")
    return float(val.real)


def observables(basis: FockBasis, frame=None) -> dict[str, OperatorMatrix]:
    """Lab-frame photon number and quadrature for every mode, as seen from ``frame``."""
    frame = np.zeros(basis.n_modes) if frame is None else np.asarray(frame, dtype=float)
    ops = {}
    for i in range(basis.n_modes):
        ops[f"n_{i + 1}"] = ladder_op(basis, i, "number", frame[i])
        ops[f"x_{i + 1}"] = ladder_op(basis, i, "quadrature", frame[i])
    return ops


def analyze(
    report: SpectrumReport,
    parity=None,
    ops: Mapping[str, object] | None = None,
    tol_abs: float | None = None,
    tol_rel: float = TOL_REL,
) -> SpectrumReport:
    """Fill clusters, per-cluster parity eigenvalues and order parameters."""
    clusters = cluster_doublets(report.eigenvalues, tol_abs, tol_rel)
    pdiag: tuple = ()
    V = report.eigenvectors
    if parity is not None and V is not None:
        pdiag = tuple(parity_in_subspace(V[:, list(c.indices)], parity) for c in clusters)
    params: tuple = ()
    if ops and V is not None:
        params = tuple(
            {name: order_parameter(V[:, j], op) for name, op in ops.items()} for j in range(V.shape[1])
        )
    return report.replace(clusters=clusters, parity_diag=pdiag, order_params=params)


def displaced_parity(basis: FockBasis, frame) -> sp.csr_matrix:
    """D^dag[v] P D[v] = D[-2v] P projected onto the box (spins carry sigma_z)."""
    return sp.csr_matrix(_mirror_overlap(basis, np.asarray(frame, dtype=float), extra=0))


def _mirror_overlap(basis: FockBasis, v: np.ndarray, extra: int) -> np.ndarray:
    # rows span the box enlarged by ``extra`` per mode, columns the box
    factors = []
    for i, c in enumerate(basis.mode_cutoffs):
        d = displacement_elements(-2.0 * v[i], c + extra, c)
        factors.append(d * (-1.0) ** np.arange(c))
    factors += [np.diag([1.0, -1.0])] * basis.n_spins
    return reduce(np.kron, factors[::-1])


def solve_frame(
    spec: ModelSpec,
    cutoffs: Sequence[int],
    k: int,
    frame=None,
    tol_abs: float | None = None,
    tol_rel: float = TOL_REL,
    cap: int = DENSE_CAP,
) -> SpectrumReport:
    """ED in one (possibly displaced) frame with parity and order-parameter analysis."""
    basis = build_basis(cutoffs, spec.n_spins, cap=cap)
    frame = np.zeros(spec.n_modes) if frame is None else np.asarray(frame, dtype=float)
    H = build_hamiltonian(spec, basis, frame)
    rep = spectrum(H, min(k, basis.dimension))
    if np.any(frame):
        P = displaced_parity(basis, frame)
    else:
        P = parity_op(basis)
    rep = analyze(rep, P, observables(basis, frame), tol_abs, tol_rel)
    return rep.replace(extras={**rep.extras, "frame": frame, "cutoffs": tuple(cutoffs), "mode": "single"})


def _inv_sqrt(S: np.ndarray) -> tuple[np.ndarray | None, float]:
    w, Q = np.linalg.eigh(S)
    if w[0] <= OVERLAP_FLOOR:
        return None, float(w[0])
    return (Q / np.sqrt(w)) @ Q.T, float(w[0])


def mirror_frame_spectrum(
    spec: ModelSpec,
    frame,
    cutoffs: Sequence[int],
    k: int,
    tol_abs: float | None = None,
    tol_rel: float = TOL_REL,
    cap: int = MIRROR_CAP,
) -> SpectrumReport:
    """ED on the two mirror frames D[v] and P D[v] = D[-v] P.

    In sector s = +1/-1 the Hamiltonian and overlap are H_v + s H_v M and
    1 + s M with M = D^dag[v] P D[v] on the box; the cross term H_v M is
    exact because H_v only raises the occupation by two. Eigenvectors are
    returned in the orthonormal basis (even sector, odd sector), where
    parity is diag(1, -1).
    """
    v = np.asarray(frame, dtype=float)
    if v.shape != (spec.n_modes,):
        raise ValueError(f"frame must have length {spec.n_modes}")
    basis = build_basis(cutoffs, spec.n_spins, cap=cap)
    ext = build_basis([c + 2 for c in basis.mode_cutoffs], spec.n_spins, cap=cap * 4)
    n = basis.dimension
    Hbox = build_hamiltonian(spec, basis, v).dense(cap)
    Hext = build_hamiltonian(spec, ext, v).matrix
    digits = ext.digits()
    inside = np.all(digits[:, : ext.n_modes] < np.array(basis.mode_cutoffs), axis=1)
    rows = np.flatnonzero(inside)
    Mext = _mirror_overlap(basis, v, extra=2)
    Mbox = Mext[rows]
    C = np.asarray(Hext[rows] @ Mext)
    C = 0.5 * (C + C.T)

    sectors = {}
    min_overlap = np.inf
    for s in (1, -1):
        S = np.eye(n) + s * Mbox
        S = 0.5 * (S + S.T)
        Sih, wmin = _inv_sqrt(S)
        min_overlap = min(min_overlap, wmin)
        if wmin <= OVERLAP_FLOOR:
            raise ValueError(
                f"mirror frames overlap (overlap eigenvalue {wmin:.3e}); use a single frame"
            )
        Hs = Sih @ (Hbox + s * C) @ Sih
        E, Y = np.linalg.eigh(0.5 * (Hs + Hs.T))
        sectors[s] = (E, Y, Sih)

    kk = min(k, 2 * n)
    labelled = sorted(
        [(e, s, j) for s in (1, -1) for j, e in enumerate(sectors[s][0])], key=lambda t: (t[0], -t[1])
    )[:kk]
    E = np.array([t[0] for t in labelled])
    V = np.zeros((2 * n, kk))
    for col, (_, s, j) in enumerate(labelled):
        off = 0 if s == 1 else n
        V[off : off + n, col] = sectors[s][1][:, j]
    V = _fix_phase(V)
    P = sp.diags(np.r_[np.ones(n), -np.ones(n)], format="csr")

    nops = {f"n_{i + 1}": ladder_op(ext, i, "number", v[i]).matrix for i in range(spec.n_modes)}
    params = []
    for _, s, j in labelled:
        _, Y, Sih = sectors[s]
        c = Sih @ Y[:, j]
        d = {}
        for name, op in nops.items():
            Nbox = op[rows][:, rows]
            Ncross = np.asarray(op[rows] @ Mext)
            d[name] = float(c @ (Nbox @ c) + s * c @ (Ncross @ c))
            # quadratures are parity-odd, so they vanish on sector eigenstates
            d["x" + name[1:]] = 0.0
        params.append(d)

    rep = SpectrumReport(E, V)
    rep = analyze(rep, P, None, tol_abs, tol_rel).replace(order_params=tuple(params))
    ep, em = sectors[1][0], sectors[-1][0]
    m = min(len(ep), len(em))
    floor = 64.0 * np.finfo(float).eps * (1.0 + float(np.max(np.abs(np.r_[ep[:2], em[:2]]))))
    return rep.replace(
        extras={
            "mode": "mirror",
            "frame": v,
            "cutoffs": tuple(cutoffs),
            "sector_energies": {"+": ep[: min(k, m)], "-": em[: min(k, m)]},
            "splitting": float(abs(em[0] - ep[0])),
            "splitting_floor": floor,
            "overlap_min_eig": min_overlap,
            "dimension": 2 * n,
        }
    )


def convergence_ladder(
    spec: ModelSpec,
    frame,
    k: int,
    cutoff_start: int,
    levels: int,
    mirror: bool = False,
    tol_abs: float | None = None,
    tol_rel: float = TOL_REL,
    cap: int | None = None,
) -> SpectrumReport:
    """Diagonalize at cutoffs c, 2c, 4c, ... and report the last doubling shift.

    Stops early once the basis would exceed ``cap``; at least two rungs must
    complete. The returned report is the one at the largest cutoff.
    """
    if levels < 2:
        raise ValueError("levels must be >= 2")
    if cutoff_start < 2:
        raise ValueError("cutoff_start must be >= 2")
    if cap is None:
        cap = MIRROR_CAP if mirror else DENSE_CAP
    frame = np.zeros(spec.n_modes) if frame is None else np.asarray(frame, dtype=float)
    reports, shifts = [], []
    c = cutoff_start
    for _ in range(levels):
        cutoffs = [c] * spec.n_modes
        try:
            if mirror:
                rep = mirror_frame_spectrum(spec, frame, cutoffs, k, tol_abs, tol_rel, cap=cap)
            else:
                rep = solve_frame(spec, cutoffs, k, frame, tol_abs, tol_rel, cap=cap)
        except SizingError:
            if len(reports) < 2:
                raise
            break
        if reports:
            prev = reports[-1].eigenvalues
            m = min(len(prev), len(rep.eigenvalues), k)
            shifts.append(float(np.max(np.abs(rep.eigenvalues[:m] - prev[:m]))))
        reports.append(rep)
        c *= 2
    if len(reports) < 2:
        raise SizingError("dimension cap reached before two ladder levels completed")
    last = reports[-1]
    grounds = [float(r.eigenvalues[0]) for r in reports]
    return last.replace(
        truncation_error=shifts[-1],
        extras={**last.extras, "ladder_shifts": shifts, "ladder_ground": grounds},
    )
