"""Hamiltonian families, sparse assembly and displaced quadratic expansion.

Conventions
-----------
Every unordered pair of sites appears once in the coupling maps. For bosonic
chains the classical energy of a real displacement vector is

    E(alpha) = sum_i omega_i alpha_i^2 + eps_i alpha_i^4 + sum_{i<j} 4 g_ij alpha_i alpha_j

which is also the vacuum expectation value of the Hamiltonian in the frame
a_i -> a_i + alpha_i.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import PhysicalParameterError
from .fock import FockBasis, OperatorMatrix, local_operators


@dataclass(frozen=True)
class Mode:
    omega: float
    epsilon: float = 0.0


@dataclass(frozen=True)
class Spin:
    omega_q: float


def _canonical_pairs(couplings, n_left, n_right, symmetric, label):
    out = {}
    for key, value in dict(couplings or {}).items():
        i, j = (int(k) for k in key)
        if not (0 <= i < n_left and 0 <= j < n_right):
            raise ValueError(f"{label} coupling {key} references a missing site")
        if symmetric:
            if i == j:
                raise ValueError(f"{label} self-coupling ({i}, {j}) is not allowed")
            i, j = min(i, j), max(i, j)
        value = float(value)
        if not math.isfinite(value):
            raise PhysicalParameterError(f"{label} coupling {key} is not finite")
        if (i, j) in out and out[(i, j)] != value:
            raise ValueError(f"{label} coupling ({i}, {j}) given twice with different values")
        out[(i, j)] = value
    return dict(sorted(out.items()))


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Declarative model: modes, spins and the three kinds of coupling.

    ``mode_mode[(i, j)]`` multiplies (a_i + a_i^dag)(a_j + a_j^dag),
    ``mode_spin[(i, k)]`` multiplies (a_i + a_i^dag) sigma_x^(k) and
    ``spin_spin[(k, l)]`` multiplies sigma_x^(k) sigma_x^(l).
    """

    modes: tuple[Mode, ...]
    spins: tuple[Spin, ...] = ()
    mode_mode: Mapping[tuple[int, int], float] = field(default_factory=dict)
    mode_spin: Mapping[tuple[int, int], float] = field(default_factory=dict)
    spin_spin: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        modes = tuple(m if isinstance(m, Mode) else Mode(**m) for m in self.modes)
        spins = tuple(s if isinstance(s, Spin) else Spin(**s) for s in self.spins)
        for i, m in enumerate(modes):
            if not (math.isfinite(m.omega) and m.omega > 0):
                raise PhysicalParameterError(f"modes[{i}].omega must be > 0, got {m.omega}")
            if not (math.isfinite(m.epsilon) and m.epsilon >= 0):
                raise PhysicalParameterError(f"modes[{i}].epsilon must be >= 0, got {m.epsilon}")
        for k, s in enumerate(spins):
            if not math.isfinite(s.omega_q):
                raise PhysicalParameterError(f"spins[{k}].omega_q must be finite")
        n, m = len(modes), len(spins)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "spins", spins)
        object.__setattr__(self, "mode_mode", _canonical_pairs(self.mode_mode, n, n, True, "mode-mode"))
        object.__setattr__(self, "mode_spin", _canonical_pairs(self.mode_spin, n, m, False, "mode-spin"))
        object.__setattr__(self, "spin_spin", _canonical_pairs(self.spin_spin, m, m, True, "spin-spin"))

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def n_spins(self) -> int:
        return len(self.spins)

    @property
    def omegas(self) -> np.ndarray:
        return np.array([m.omega for m in self.modes])

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([m.epsilon for m in self.modes])

    def coupling_matrix(self) -> np.ndarray:
        """Symmetric n_modes x n_modes matrix of g_ij with zero diagonal."""
        G = np.zeros((self.n_modes, self.n_modes))
        for (i, j), g in self.mode_mode.items():
            G[i, j] = G[j, i] = g
        return G

    def __eq__(self, other):
        if not isinstance(other, ModelSpec):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def to_dict(self) -> dict:
        return {
            "modes": [{"omega": m.omega, "epsilon": m.epsilon} for m in self.modes],
            "spins": [{"omega_q": s.omega_q} for s in self.spins],
            "mode_mode": [[i, j, g] for (i, j), g in self.mode_mode.items()],
            "mode_spin": [[i, k, g] for (i, k), g in self.mode_spin.items()],
            "spin_spin": [[k, l, c] for (k, l), c in self.spin_spin.items()],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        return cls(
            modes=tuple(Mode(**m) for m in d.get("modes", ())),
            spins=tuple(Spin(**s) for s in d.get("spins", ())),
            mode_mode={(i, j): g for i, j, g in d.get("mode_mode", ())},
            mode_spin={(i, k): g for i, k, g in d.get("mode_spin", ())},
            spin_spin={(k, l): c for k, l, c in d.get("spin_spin", ())},
        )

    def with_coupling(self, g: float) -> "ModelSpec":
        """Rescale every coupling so the largest one equals ``g``.

        A template without any coupling gets all-to-all mode couplings g.
        """
        pools = (self.mode_mode, self.mode_spin, self.spin_spin)
        ref = max((abs(v) for pool in pools for v in pool.values()), default=0.0)
        if ref == 0.0:
            mm = {(i, j): g for i in range(self.n_modes) for j in range(i + 1, self.n_modes)}
            return ModelSpec(self.modes, self.spins, mm, self.mode_spin, self.spin_spin)
        scale = g / ref
        return ModelSpec(
            self.modes,
            self.spins,
            {k: v * scale for k, v in self.mode_mode.items()},
            {k: v * scale for k, v in self.mode_spin.items()},
            {k: v * scale for k, v in self.spin_spin.items()},
        )


def dimer(omega1=1.0, omega2=1.0, eps1=0.0, eps2=0.0, g=0.0) -> ModelSpec:
    """Bose-Hubbard dimer with quadrature-quadrature coupling g."""
    return ModelSpec((Mode(omega1, eps1), Mode(omega2, eps2)), mode_mode={(0, 1): g})


def chain(omegas, epsilons, g) -> ModelSpec:
    """Bose-Hubbard chain. ``g`` is a scalar (all pairs) or a full symmetric matrix."""
    omegas = list(omegas)
    n = len(omegas)
    G = np.broadcast_to(np.asarray(g, dtype=float), (n, n)) if np.ndim(g) else np.full((n, n), float(g))
    modes = tuple(Mode(float(w), float(e)) for w, e in zip(omegas, epsilons))
    return ModelSpec(modes, mode_mode={(i, j): float(G[i, j]) for i in range(n) for j in range(i + 1, n)})


def two_spin_bounded(omega_q=1.0, g=1.0) -> ModelSpec:
    """(omega_q/2)(sz1 + sz2) + g sx1 sx2: the bounded-operator example."""
    return ModelSpec((), (Spin(omega_q), Spin(omega_q)), spin_spin={(0, 1): g})


FamilyName = Literal["dicke_type", "rabi_type", "two_atom_dicke"]


@dataclass(frozen=True)
class ScaledFamily:
    """A Hamiltonian family with a formal scaling parameter N.

    ``control`` is lambda = 2 g / sqrt(omega1 omega2) for the two oscillator
    families and the spin-spin coupling chi for ``two_atom_dicke``.
    ``omega_q`` of the two-atom model defaults to 0.05 omega.
    """

    family: FamilyName
    control: float
    N: float = 1.0
    omega1: float = 1.0
    omega2: float = 1.0
    epsilon1: float = 0.1
    epsilon2: float = 0.1
    omega: float = 1.0
    g: float = 0.5
    omega_q: float | None = None

    def __post_init__(self):
        if self.family not in ("dicke_type", "rabi_type", "two_atom_dicke"):
            raise ValueError(f"unknown family {self.family!r}")
        if not (math.isfinite(self.N) and self.N > 0):
            raise PhysicalParameterError(f"N must be a positive finite number, got {self.N}")
        if not math.isfinite(self.control):
            raise PhysicalParameterError("control parameter must be finite")

    @property
    def coupling(self) -> float:
        """Unscaled light-matter coupling g."""
        if self.family == "two_atom_dicke":
            return self.g
        return self.control * math.sqrt(self.omega1 * self.omega2) / 2.0

    @property
    def spin_splitting(self) -> float:
        return 0.05 * self.omega if self.omega_q is None else self.omega_q

    def replace(self, **changes) -> "ScaledFamily":
        from dataclasses import replace

        return replace(self, **changes)

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


def instantiate(family: ScaledFamily) -> ModelSpec:
    N = family.N
    if family.family == "dicke_type":
        return dimer(family.omega1, family.omega2, family.epsilon1 / N, family.epsilon2 / N, family.coupling)
    if family.family == "rabi_type":
        return dimer(
            family.omega1,
            N * family.omega2,
            family.epsilon1 / N,
            family.epsilon2 / N,
            math.sqrt(N) * family.coupling,
        )
    if family.family == "two_atom_dicke":
        wq = family.spin_splitting
        gs = family.g * math.sqrt(N)
        return ModelSpec(
            (Mode(family.omega),),
            (Spin(wq), Spin(wq)),
            mode_spin={(0, 0): gs, (0, 1): gs},
            spin_spin={(0, 1): family.control * N},
        )
    raise ValueError(f"unknown family {family.family!r}")


def build_hamiltonian(spec: ModelSpec, basis: FockBasis, frame: Sequence[float] | None = None) -> OperatorMatrix:
    """Sparse Hamiltonian on ``basis`` in the frame a_i -> a_i + frame[i]."""
    if basis.n_modes != spec.n_modes or basis.n_spins != spec.n_spins:
        raise ValueError(
            f"basis has {basis.n_modes} modes / {basis.n_spins} spins, "
            f"model has {spec.n_modes} / {spec.n_spins}"
        )
    frame = np.zeros(spec.n_modes) if frame is None else np.asarray(frame, dtype=float)
    if frame.shape != (spec.n_modes,):
        raise ValueError(f"frame must have length {spec.n_modes}")
    if not np.all(np.isfinite(frame)):
        raise ValueError("frame entries must be finite")

    a_ops, sx, sz = local_operators(basis, frame)
    H = 0.0 * (sz[0] if sz else a_ops[0])
    quad = []
    for mode, a in zip(spec.modes, a_ops):
        ad = a.T
        H = H + mode.omega * (ad @ a)
        if mode.epsilon:
            H = H + mode.epsilon * (ad @ ad @ a @ a)
        quad.append(a + ad)
    for k, s in enumerate(spec.spins):
        H = H + 0.5 * s.omega_q * sz[k]
    for (i, j), g in spec.mode_mode.items():
        H = H + g * (quad[i] @ quad[j])
    for (i, k), g in spec.mode_spin.items():
        H = H + g * (quad[i] @ sx[k])
    for (k, l), chi in spec.spin_spin.items():
        H = H + chi * (sx[k] @ sx[l])
    H = 0.5 * (H + H.T)
    return OperatorMatrix(basis, sp.csr_matrix(H), hermitian=True)


def classical_energy(spec: ModelSpec, alphas) -> float:
    """Vacuum energy in the displaced frame (bosonic models)."""
    x = np.asarray(alphas, dtype=float)
    w, e = spec.omegas, spec.epsilons
    return float(np.sum(w * x**2 + e * x**4) + 2.0 * x @ spec.coupling_matrix() @ x)


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """H = sum_ij A_ij a_i^dag a_j + 1/2 sum_ij B_ij (a_i^dag a_j^dag + a_i a_j) + E0.

    ``linear`` holds the coefficients of (a_i + a_i^dag) left over when the
    expansion point is not stationary; ``discarded`` is the magnitude of the
    dropped cubic/quartic coefficients.
    """

    A: np.ndarray
    B: np.ndarray
    E0: float = 0.0
    linear: np.ndarray | None = None
    discarded: float = 0.0

    def __post_init__(self):
        if np.iscomplexobj(self.A) or np.iscomplexobj(self.B):
            raise TypeError("quadratic forms are real")
        A = np.array(self.A, dtype=float)
        B = np.array(self.B, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
            raise ValueError(f"A {A.shape} and B {B.shape} must be equal square matrices")
        if not (np.allclose(A, A.T, atol=1e-12, rtol=0) and np.allclose(B, B.T, atol=1e-12, rtol=0)):
            raise ValueError("A and B must be symmetric")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "E0", float(self.E0))

    @property
    def n_modes(self) -> int:
        return self.A.shape[0]


def quadratic_expansion(spec: ModelSpec, alphas) -> QuadraticForm:
    """Quadratic part of the Hamiltonian around the real displacement ``alphas``.

    The Kerr term contributes 4 eps alpha^2 to the frequency and
    eps alpha^2 (a^dag^2 + a^2) of squeezing.
    """
    if spec.n_spins:
        raise ValueError("quadratic expansion is defined for bosonic models only")
    x = np.asarray(alphas, dtype=float)
    if x.shape != (spec.n_modes,):
        raise ValueError(f"alphas must have length {spec.n_modes}")
    w, e = spec.omegas, spec.epsilons
    G = spec.coupling_matrix()
    A = np.diag(w + 4.0 * e * x**2) + G
    B = np.diag(2.0 * e * x**2) + G
    linear = w * x + 2.0 * e * x**3 + 2.0 * G @ x
    discarded = float(np.max(np.maximum(np.abs(e * x), e))) if spec.n_modes else 0.0
    return QuadraticForm(A, B, classical_energy(spec, x), linear, discarded)


def block_hamiltonian_2d(family: ScaledFamily, s1: int, s2: int) -> tuple[ModelSpec, float, float]:
    """Fixed-sigma_x block of the two-atom model with the spin splitting dropped.

    With sigma_x^(k) -> s_k the block is
        omega a^dag a + g sqrt(N) (s1 + s2)(a + a^dag) + chi N s1 s2,
    diagonalised by the displacement alpha = -g sqrt(N)(s1 + s2)/omega.
    Returns (single-mode spec, constant offset chi N s1 s2, alpha); the block
    ground energy is offset - omega alpha^2.
    """
    if family.family != "two_atom_dicke":
        raise ValueError("block form exists only for the two_atom_dicke family")
    if s1 not in (1, -1) or s2 not in (1, -1):
        raise ValueError("s1 and s2 must be +1 or -1")
    sqN = math.sqrt(family.N)
    alpha = -family.g * sqN * (s1 + s2) / family.omega
    offset = family.control * family.N * s1 * s2
    return ModelSpec((Mode(family.omega),)), offset, alpha


def block_ground_energy(family: ScaledFamily, s1: int, s2: int) -> float:
    _, offset, alpha = block_hamiltonian_2d(family, s1, s2)
    return offset - family.omega * alpha**2


def critical_chi(g: float, omega: float) -> float:
    """Spin-spin coupling at which the parallel and orthogonal blocks cross."""
    return 2.0 * g**2 / omega
