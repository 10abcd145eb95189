import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uscspectra import displacement as D
from uscspectra.errors import InstabilityError
from uscspectra.models import chain, classical_energy, dimer, quadratic_expansion

# positive real root of u^4 + u - 2^(1/3), mapped back with k = u^(3/2)
K_ORACLE = 0.7373527057603279


def test_residual_origin_and_example():
    spec = dimer(1.0, 1.0, 0.1, 0.1, 1.0)
    assert np.array_equal(D.stationarity_residual(spec, [0.0, 0.0]), [0.0, 0.0])
    assert np.allclose(D.stationarity_residual(spec, [1.0, 1.0]), [3.2, 3.2], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(0.2, 4.0), min_size=2, max_size=4),
    st.floats(0.0, 0.5),
    st.floats(-2.0, 2.0),
    st.lists(st.floats(-3.0, 3.0), min_size=4, max_size=4),
)
def test_residual_is_half_energy_gradient(omegas, eps, g, xs):
    n = len(omegas)
    spec = chain(omegas, [eps] * n, g)
    x = np.array(xs[:n])
    h = 1e-5
    fd = np.array(
        [(classical_energy(spec, x + h * e) - classical_energy(spec, x - h * e)) / (2 * h) for e in np.eye(n)]
    )
    assert np.allclose(D.stationarity_residual(spec, x), 0.5 * fd, atol=1e-6, rtol=1e-8)


def test_jacobian_matches_finite_difference():
    spec = chain([1.0, 2.0, 3.0], [0.1, 0.2, 0.05], 0.7)
    x = np.array([0.3, -1.2, 2.0])
    h = 1e-6
    fd = np.column_stack(
        [(D.stationarity_residual(spec, x + h * e) - D.stationarity_residual(spec, x - h * e)) / (2 * h) for e in np.eye(3)]
    )
    assert np.allclose(D.stationarity_jacobian(spec, x), fd, atol=1e-6)


def test_solve_k():
    k = D.solve_k()
    assert round(k, 2) == 0.74
    assert abs(k ** (8 / 3) + k ** (2 / 3) - 2 ** (1 / 3)) < 1e-12
    assert abs(k - K_ORACLE) < 1e-10


def test_dimer_seed():
    (seed,) = D.asymptotic_seed(dimer(1.0, 1.0, 0.1, 0.1, 10.0))
    assert np.allclose(seed, [10.0, -10.0])


def test_dimer_seed_eta():
    (seed,) = D.asymptotic_seed(dimer(1.0, 1.0, 1.6, 0.1, 10.0))
    assert math.isclose(seed[1], -2.0 * seed[0])


def test_trimer_seeds():
    seeds = D.asymptotic_seed(chain([1.0] * 3, [0.01] * 3, 1.0))
    assert len(seeds) == 3
    k = D.solve_k()
    for odd, s in enumerate(seeds):
        others = np.delete(s, odd)
        assert np.allclose(others, 10 * k)
        assert math.isclose(s[odd], -10 * (k + k**3))
    assert math.isclose(seeds[0][1], 7.373527057603276, rel_tol=1e-12)


def test_trimer_seed_solves_usc_equations():
    # with omega dropped the seed is an exact root of the displacement equations
    spec = chain([1e-12] * 3, [0.01] * 3, 1.0)
    for s in D.asymptotic_seed(spec):
        assert np.linalg.norm(D.stationarity_residual(spec, s)) < 1e-9


def test_no_seed_without_kerr():
    with pytest.raises(D.NoSeedError):
        D.asymptotic_seed(dimer(1.0, 1.0, 0.0, 0.1, 1.0))


def test_weak_coupling_only_origin_stable():
    spec = dimer(1.0, 1.0, 0.1, 0.1, 0.1)
    sols = D.solve_displacements(spec)
    stable = [s for s in sols if s.stable]
    assert len(stable) == 1 and np.allclose(stable[0].alphas, 0.0)
    # grid-scan oracle of the classical landscape
    grid = np.linspace(-3, 3, 121)
    E = np.array([[classical_energy(spec, [a, b]) for b in grid] for a in grid])
    i, j = np.unravel_index(np.argmin(E), E.shape)
    assert grid[i] == 0.0 and grid[j] == 0.0


def test_strong_coupling_pair():
    sols = D.solve_displacements(dimer(1.0, 1.0, 0.1, 0.1, 10.0))
    stable = [s for s in sols if s.stable]
    assert len(stable) == 2
    a, b = stable
    assert np.allclose(a.alphas, -b.alphas)
    assert a.energy == b.energy
    # symmetric branch: alpha^2 = (2g - omega) / (2 eps) = 95, on the 5% boundary
    assert math.isclose(a.alphas[0] ** 2, 95.0, rel_tol=1e-12)
    assert abs(a.alphas[0] ** 2 / 100 - 1) <= 0.05 + 1e-12
    assert a.branch_id == b.branch_id == "+-"


def test_sorted_by_energy():
    sols = D.solve_displacements(chain([1.0, 2.0, 4.0], [0.01, 0.02, 0.04], 5.0))
    energies = [s.energy for s in sols]
    assert energies == sorted(energies)


@settings(max_examples=15, deadline=None)
@given(
    st.lists(st.floats(0.5, 4.0), min_size=2, max_size=3),
    st.lists(st.floats(0.01, 0.2), min_size=3, max_size=3),
    st.floats(0.1, 5.0),
)
def test_sign_symmetry(omegas, eps, g):
    n = len(omegas)
    spec = chain(omegas, eps[:n], g)
    for s in D.solve_displacements(spec, extra=False):
        assert s.residual_norm < max(1e-10, D._residual_floor(spec, s.alphas))
        assert np.linalg.norm(D.stationarity_residual(spec, -s.alphas)) < max(1e-10, D._residual_floor(spec, s.alphas))
        qp = quadratic_expansion(spec, s.alphas)
        qm = quadratic_expansion(spec, -s.alphas)
        assert np.max(np.abs(qp.A - qm.A)) <= 1e-12
        assert np.max(np.abs(qp.B - qm.B)) <= 1e-12


def test_usc_scaling_dimer():
    deviations = []
    for g in (1e2, 1e3, 1e4):
        best = D.lowest_stable(D.solve_displacements(dimer(1.0, 1.0, 0.1, 0.1, g)))
        deviations.append(abs(best.alphas[0] ** 2 * 0.1 / g - 1))
        assert math.isclose(best.alphas[1] / best.alphas[0], -1.0, abs_tol=1e-3)
    assert deviations[0] > deviations[1] > deviations[2]
    assert deviations[1] < 0.01


def test_trimer_asymptotics():
    k = D.solve_k()
    eps = 0.01
    for g in (1e3, 1e4):
        best = D.lowest_stable(D.solve_displacements(chain([1.0] * 3, [eps] * 3, g)))
        a = best.alphas
        odd = int(np.argmax(np.abs(a)))
        gamma = a[odd]
        alpha = np.delete(a, odd)[0]
        s = math.sqrt(g / eps)
        assert abs(gamma / s + (k + k**3)) < 0.05 / math.sqrt(g / 1e3)
        assert abs(abs(alpha) / s - k) < 0.05 / math.sqrt(g / 1e3)
        assert abs(gamma / alpha + (1 + k**2)) < 0.05


def test_require_stable_nonzero():
    with pytest.raises(InstabilityError):
        D.solve_displacements(dimer(1.0, 1.0, 0.1, 0.1, 0.1), require_stable_nonzero=True)


def test_origin_only_seed_policy():
    sols = D.solve_displacements(dimer(1.0, 1.0, 0.1, 0.1, 10.0), seeds=[], extra=False)
    assert len(sols) == 1 and not sols[0].stable


def test_bad_tolerance():
    with pytest.raises(ValueError):
        D.solve_displacements(dimer(g=1.0), tol=0.0)


def test_branch_label_canonical():
    assert D.branch_label(np.array([-1.0, 2.0, 0.0])) == "+-0"
    assert D.branch_label(np.zeros(3)) == "000"


def test_halton_seeds_deterministic():
    spec = chain([1.0, 2.0, 4.0], [0.01, 0.02, 0.04], 1.0)
    a = D.extra_seeds(spec, 3.0)
    b = D.extra_seeds(spec, 3.0)
    assert len(a) == 5 * 2**3
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert max(np.max(np.abs(x)) for x in a) <= 3.0
