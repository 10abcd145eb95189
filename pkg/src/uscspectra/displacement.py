"""Real stationary displacements of the classical energy landscape.

The residual solved here is half the gradient of ``models.classical_energy``:

    r_i = omega_i alpha_i + 2 eps_i alpha_i^3 + sum_{j != i} 2 g_ij alpha_j
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from . import bogoliubov
from .errors import InstabilityError
from .models import ModelSpec, classical_energy, quadratic_expansion

DEDUP_TOL = 1e-6
MAX_ITER = 60
CBRT2 = 2.0 ** (1.0 / 3.0)


class NoSeedError(ValueError):
    """Raised when the asymptotic seeds do not exist (a Kerr coefficient vanishes)."""


@dataclass(frozen=True, eq=False)
class DisplacementSolution:
    alphas: np.ndarray
    residual_norm: float
    stable: bool
    margin: float
    energy: float
    branch_id: str
    converged: bool = True


def stationarity_residual(spec: ModelSpec, alphas) -> np.ndarray:
    x = np.asarray(alphas, dtype=float)
    return spec.omegas * x + 2.0 * spec.epsilons * x**3 + 2.0 * spec.coupling_matrix() @ x


def stationarity_jacobian(spec: ModelSpec, alphas) -> np.ndarray:
    x = np.asarray(alphas, dtype=float)
    return np.diag(spec.omegas + 6.0 * spec.epsilons * x**2) + 2.0 * spec.coupling_matrix()


def _residual_floor(spec: ModelSpec, x: np.ndarray) -> float:
    # rounding floor of the residual evaluation at x
    scale = (
        np.abs(spec.omegas * x)
        + np.abs(2.0 * spec.epsilons * x**3)
        + 2.0 * np.abs(spec.coupling_matrix()) @ np.abs(x)
    )
    return 32.0 * np.finfo(float).eps * float(np.linalg.norm(scale))


def solve_k(tol: float = 1e-14) -> float:
    """Positive root of k^(8/3) + k^(2/3) - 2^(1/3) on (0, 1).

    Safeguarded Newton: a Newton step is kept only when it stays inside the
    current bracket, otherwise the bracket is bisected.
    """

    def f(k):
        return k ** (8.0 / 3.0) + k ** (2.0 / 3.0) - CBRT2

    def df(k):
        return (8.0 / 3.0) * k ** (5.0 / 3.0) + (2.0 / 3.0) * k ** (-1.0 / 3.0)

    lo, hi = 0.0, 1.0  # f(0) < 0 < f(1)
    k = 0.75
    for _ in range(200):
        fk = f(k)
        if fk < 0:
            lo = k
        else:
            hi = k
        step = fk / df(k)
        nxt = k - step
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - k) <= tol * max(1.0, k) or hi - lo <= tol:
            return nxt
        k = nxt
    return k


def asymptotic_seed(spec: ModelSpec) -> list[np.ndarray]:
    """Ultrastrong-coupling seeds, one per +/- pair.

    Dimer: alpha^2 = g / (eps1^3 eps2)^(1/4), beta = -sign(g) alpha (eps1/eps2)^(1/4).
    Trimer: two sites at k sqrt(g/eps), the third at -(k + k^3) sqrt(g/eps), for
    each of the three choices of the odd site. Off the symmetric point the
    mean coupling and per-site Kerr coefficients are used.
    """
    if spec.n_spins:
        raise ValueError("seeds are defined for bosonic models only")
    eps = spec.epsilons
    if np.any(eps <= 0):
        raise NoSeedError("every Kerr coefficient must be > 0 for a bounded landscape")
    G = spec.coupling_matrix()
    if spec.n_modes == 2:
        g = G[0, 1]
        if g == 0:
            return []
        e1, e2 = eps
        alpha = math.sqrt(abs(g) / (e1**3 * e2) ** 0.25)
        eta = (e1 / e2) ** 0.25
        return [np.array([alpha, -math.copysign(1.0, g) * eta * alpha])]
    if spec.n_modes == 3:
        gbar = float(np.mean(np.abs(G[np.triu_indices(3, 1)])))
        if gbar == 0:
            return []
        k = solve_k()
        scale = np.sqrt(gbar / eps)
        seeds = []
        for odd in range(3):
            s = k * scale
            s[odd] = -(k + k**3) * scale[odd]
            seeds.append(s)
        return seeds
    raise ValueError("asymptotic seeds exist for 2 or 3 modes only")


def _seed_box(spec: ModelSpec, seeds) -> float:
    if seeds:
        return 2.0 * max(float(np.max(np.abs(s))) for s in seeds)
    eps = spec.epsilons
    gsum = np.abs(spec.coupling_matrix()).sum(axis=1)
    with np.errstate(divide="ignore"):
        r = np.where(eps > 0, np.sqrt((2.0 * gsum + spec.omegas) / (2.0 * np.where(eps > 0, eps, 1.0))), 1.0)
    return 2.0 * float(np.max(r)) if r.size else 1.0


def extra_seeds(spec: ModelSpec, box: float) -> list[np.ndarray]:
    """Deterministic Halton points, 5 * 2^n of them, in |alpha_i| <= box."""
    n = spec.n_modes
    count = 5 * 2**n
    pts = qmc.Halton(d=n, scramble=False).random(count + 1)[1:]
    return [box * (2.0 * p - 1.0) for p in pts]


def damped_newton(spec: ModelSpec, x0, tol: float = 1e-10, max_iter: int = MAX_ITER):
    """Newton on the stationarity residual with halving backtracking.

    Returns (x, residual_norm, converged).
    """
    x = np.array(x0, dtype=float)
    r = stationarity_residual(spec, x)
    nr = float(np.linalg.norm(r))
    for _ in range(max_iter):
        if nr <= max(tol, _residual_floor(spec, x)):
            return x, nr, True
        J = stationarity_jacobian(spec, x)
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            return x, nr, False
        if not np.all(np.isfinite(step)) or np.linalg.cond(J) > 1e14:
            return x, nr, False
        t = 1.0
        while True:
            xn = x - t * step
            rn = stationarity_residual(spec, xn)
            nrn = float(np.linalg.norm(rn))
            if nrn < nr or t < 2.0**-30:
                break
            t *= 0.5
        if nrn >= nr:
            # stalled at the rounding floor or at a non-root local minimum of |r|
            return x, nr, nr <= max(tol, _residual_floor(spec, x))
        x, r, nr = xn, rn, nrn
    return x, nr, nr <= max(tol, _residual_floor(spec, x))


def _canonical(x: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(x) > DEDUP_TOL)
    if nz.size and x[nz[0]] < 0:
        return -x
    return x


def branch_label(x: np.ndarray) -> str:
    c = _canonical(x)
    return "".join("0" if abs(v) <= DEDUP_TOL else ("+" if v > 0 else "-") for v in c)


def certify(spec: ModelSpec, alphas, residual_norm: float, converged: bool = True) -> DisplacementSolution:
    x = np.asarray(alphas, dtype=float)
    # marginal points are common among enumerated saddles; the margin records them
    st = bogoliubov.stability(quadratic_expansion(spec, x), warn=False)
    return DisplacementSolution(
        alphas=x,
        residual_norm=residual_norm,
        stable=bool(st.stable),
        margin=st.margin,
        energy=classical_energy(spec, x),
        branch_id=branch_label(x),
        converged=converged,
    )


def solve_displacements(
    spec: ModelSpec,
    seeds=None,
    tol: float = 1e-10,
    extra: bool = True,
    require_stable_nonzero: bool = False,
) -> list[DisplacementSolution]:
    """All distinct stationary points reachable from the seeds and the origin.

    ``seeds=None`` uses the asymptotic seeds when they exist. Each converged
    point is reported together with its mirror image, certified by the
    Bogoliubov stability of the expansion there, and the list is sorted by
    energy then lexicographically.
    """
    if spec.n_spins:
        raise ValueError("displacement equations are defined for bosonic models only")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if seeds is None:
        try:
            seeds = asymptotic_seed(spec)
        except (NoSeedError, ValueError):
            seeds = []
    seeds = [np.asarray(s, dtype=float) for s in seeds]
    candidates = [np.zeros(spec.n_modes)] + seeds
    if extra:
        candidates += extra_seeds(spec, _seed_box(spec, seeds))

    found: list[tuple[np.ndarray, float]] = []
    for x0 in candidates:
        x, nr, ok = damped_newton(spec, x0, tol)
        if not ok:
            continue
        c = _canonical(x)
        if any(np.linalg.norm(c - f) < DEDUP_TOL for f, _ in found):
            continue
        found.append((c, nr))

    solutions = []
    for c, nr in found:
        sol = certify(spec, c, nr)
        solutions.append(sol)
        if np.any(np.abs(c) > DEDUP_TOL):
            solutions.append(certify(spec, -c, float(np.linalg.norm(stationarity_residual(spec, -c)))))
    solutions.sort(key=lambda s: (s.energy, tuple(s.alphas)))
    if require_stable_nonzero and not any(
        s.stable and np.any(np.abs(s.alphas) > DEDUP_TOL) for s in solutions
    ):
        raise InstabilityError("no stable displaced solution found")
    return solutions


def lowest_stable(solutions) -> DisplacementSolution | None:
    """Lowest-energy stable solution in canonical sign, or None."""
    for s in solutions:
        if s.stable and np.array_equal(s.alphas, _canonical(s.alphas)):
            return s
    return None

