import math

import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from uscspectra import displacement
from uscspectra import eigensolve as es
from uscspectra.errors import NonConvergenceError, SizingError
from uscspectra.fock import OperatorMatrix, build_basis, ladder_op, parity_op
from uscspectra.models import (
    ModelSpec,
    Mode,
    ScaledFamily,
    block_hamiltonian_2d,
    build_hamiltonian,
    chain,
    dimer,
    instantiate,
    two_spin_bounded,
)


def diag_op(values):
    return OperatorMatrix(build_basis([len(values)]), sp.diags(np.asarray(values, float), format="csr"), hermitian=True)


def bounded_exact(omega_q, g):
    # even sector [[w, g], [g, -w]] and odd sector [[0, g], [g, 0]]
    r = math.hypot(g, omega_q)
    return np.sort([-r, -g, g, r])


def test_spectrum_diag():
    rep = es.spectrum(diag_op([0.0, 1.0, 2.0]), 2)
    assert np.array_equal(rep.eigenvalues, [0.0, 1.0])
    assert np.array_equal(np.abs(rep.eigenvectors[:2]), np.eye(2))


def test_spectrum_k_range():
    with pytest.raises(ValueError):
        es.spectrum(diag_op([0.0, 1.0]), 3)
    with pytest.raises(ValueError):
        es.spectrum(diag_op([0.0, 1.0]), 0)


def test_spectrum_needs_hermitian_flag():
    op = OperatorMatrix(build_basis([2]), sp.csr_matrix(np.eye(2)))
    with pytest.raises(ValueError):
        es.spectrum(op, 1)


def test_phase_convention():
    rep = es.spectrum(build_hamiltonian(dimer(1.0, 1.3, 0.1, 0.1, 0.3), build_basis([6, 6])), 4)
    V = rep.eigenvectors
    idx = np.argmax(np.abs(V), axis=0)
    assert np.all(V[idx, np.arange(V.shape[1])] > 0)


def test_iterative_path_matches_dense():
    spec = dimer(1.0, 1.2, 0.1, 0.1, 0.4)
    H = build_hamiltonian(spec, build_basis([50, 50]))
    assert H.basis.dimension > es.DENSE_SWITCH
    it = es.spectrum(H, 4)
    dense = es.spectrum(H, 4, dense_switch=3000)
    assert np.max(np.abs(it.eigenvalues - dense.eigenvalues)) < 1e-9
    assert np.all(it.extras["residuals"] < 1e-8 * (1 + np.abs(it.eigenvalues)))


def test_iterative_nonconvergence(monkeypatch):
    H = build_hamiltonian(dimer(1.0, 1.0, 0.1, 0.1, 0.3), build_basis([10, 10]))

    def stalled(*args, **kwargs):
        if "sigma" in kwargs:
            raise spla.ArpackNoConvergence("stalled", np.zeros(0), np.zeros((0, 0)))
        return np.array([0.0])

    monkeypatch.setattr(es.spla, "eigsh", stalled)
    with pytest.raises(NonConvergenceError):
        es.spectrum(H, 2, dense_switch=10)


def test_inaccurate_eigenpairs_rejected(monkeypatch):
    H = build_hamiltonian(dimer(1.0, 1.0, 0.1, 0.1, 0.3), build_basis([10, 10]))

    def sloppy(M, k, **kwargs):
        if "sigma" not in kwargs:
            return np.array([0.0])
        V = np.zeros((M.shape[0], k))
        V[:k, :k] = np.eye(k)
        return np.arange(k, dtype=float), V

    monkeypatch.setattr(es.spla, "eigsh", sloppy)
    with pytest.raises(NonConvergenceError) as info:
        es.spectrum(H, 2, dense_switch=10)
    assert info.value.residual > 1e-8


def test_bounded_model_strong_coupling():
    spec = two_spin_bounded(1.0, 100.0)
    rep = es.solve_frame(spec, [], 4, tol_abs=0.01)
    exact = bounded_exact(1.0, 100.0)
    assert np.max(np.abs(rep.eigenvalues - exact)) < 1e-12
    assert [c.indices for c in rep.clusters] == [(0, 1), (2, 3)]
    for pd in rep.parity_diag:
        assert np.allclose(pd, [-1.0, 1.0], atol=1e-12)
    # splitting is sqrt(g^2 + omega_q^2) - g, i.e. omega_q^2 / (2g) at leading order
    assert math.isclose(rep.lowest_splitting(), math.hypot(100.0, 1.0) - 100.0, rel_tol=1e-9)


def test_bounded_model_uncoupled_is_not_a_doublet():
    rep = es.solve_frame(two_spin_bounded(1.0, 0.0), [], 4)
    assert np.allclose(rep.eigenvalues, [-1.0, 0.0, 0.0, 1.0])
    assert [c.indices for c in rep.clusters] == [(0,), (1, 2), (3,)]
    assert rep.clusters[1].is_doublet
    # both members are sigma_z-antialigned, so parity does not flip across the pair
    assert np.allclose(rep.parity_diag[1], [-1.0, -1.0])


def test_cluster_examples():
    cl = es.cluster_doublets([0.0, 1e-9, 1.0, 1.0 + 1e-9], 1e-6)
    assert [c.indices for c in cl] == [(0, 1), (2, 3)]
    assert all(c.is_doublet for c in cl)
    cl = es.cluster_doublets([0.0, 0.5, 1.0], 1e-6)
    assert [c.indices for c in cl] == [(0,), (1,), (2,)]


def test_cluster_validation():
    with pytest.raises(ValueError):
        es.cluster_doublets([0.0, 1.0], 0.0)
    with pytest.raises(ValueError):
        es.cluster_doublets([1.0, 0.0], 1e-6)
    assert es.cluster_doublets([], 1e-6) == ()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=12), st.floats(1e-6, 1.0))
def test_cluster_partition(values, tol):
    e = np.sort(values)
    cl = es.cluster_doublets(e, tol)
    flat = [i for c in cl for i in c.indices]
    assert flat == list(range(len(e)))
    thresh = tol + es.TOL_REL * (e[-1] - e[0])
    for c in cl:
        assert np.all(np.diff(e[list(c.indices)]) < thresh)
    for a, b in zip(cl, cl[1:]):
        assert e[b.indices[0]] - e[a.indices[-1]] >= thresh


def test_report_invariants():
    with pytest.raises(ValueError):
        es.SpectrumReport(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        es.SpectrumReport(np.array([0.0, 1.0]), parity_diag=(np.array([1.5]),))


def test_parity_examples():
    basis = build_basis([4])
    V = np.eye(4)[:, :2]
    assert np.allclose(es.parity_in_subspace(V, parity_op(basis)), [-1.0, 1.0])
    spec = dimer(1.0, 1.0, 0.1, 0.1, 0.0)
    b2 = build_basis([5, 5])
    rep = es.spectrum(build_hamiltonian(spec, b2), 1)
    assert np.allclose(es.parity_in_subspace(rep.eigenvectors, parity_op(b2)), [1.0])


def test_parity_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        es.parity_in_subspace(np.ones((4, 1)), parity_op(build_basis([4])))


def test_order_parameter_examples():
    basis = build_basis([6])
    n = ladder_op(basis, 0, "number")
    vac = np.eye(6)[0]
    three = np.eye(6)[3]
    assert es.order_parameter(vac, n) == 0.0
    assert math.isclose(es.order_parameter(three, n), 3.0, rel_tol=1e-15)
    with pytest.raises(ValueError):
        es.order_parameter(np.ones(5) / math.sqrt(5), n)
    with pytest.raises(ValueError):
        es.order_parameter(2 * vac, n)


def test_two_atom_block_photon_number():
    fam = ScaledFamily("two_atom_dicke", 0.3, N=50, g=0.5, omega=1.0)
    spec, _, alpha = block_hamiltonian_2d(fam, 1, 1)
    # the block spec is already centred on alpha; measure lab-frame photons
    basis = build_basis([30])
    rep = es.spectrum(build_hamiltonian(spec, basis), 1)
    assert abs(es.order_parameter(rep.eigenvectors[:, 0], ladder_op(basis, 0, "number", alpha)) - 50.0) < 1e-9
    # lab-frame oracle: omega a^dag a + 2 g sqrt(N) (a + a^dag) in a wide box
    lab = build_basis([200])
    H = ladder_op(lab, 0, "number").matrix + 2 * 0.5 * math.sqrt(50) * ladder_op(lab, 0, "quadrature").matrix
    E, V = la.eigh(H.toarray(), subset_by_index=[0, 0])
    assert abs(es.order_parameter(V[:, 0], ladder_op(lab, 0, "number")) - 50.0) < 1e-8


CATALOG = [
    dimer(1.0, 1.0, 0.1, 0.1, 0.7),
    chain([1.0, 2.0, 4.0], [0.01, 0.02, 0.04], 0.9),
    two_spin_bounded(1.0, 3.0),
    instantiate(ScaledFamily("dicke_type", 1.3, N=4)),
    instantiate(ScaledFamily("rabi_type", 1.3, N=4)),
    instantiate(ScaledFamily("two_atom_dicke", 0.8, N=3)),
]


@pytest.mark.parametrize("spec", CATALOG)
def test_parity_leakage_in_eigenspaces(spec):
    basis = build_basis([7] * spec.n_modes, spec.n_spins)
    H = build_hamiltonian(spec, basis).dense()
    E, V = la.eigh(H)
    P = parity_op(basis)
    for c in es.cluster_doublets(E):
        assert es.parity_leakage(V[:, list(c.indices)], P) < 1e-8


def test_harmonic_ladder_is_exact():
    spec = ModelSpec((Mode(1.0),))
    rep = es.convergence_ladder(spec, None, 3, 4, 3)
    assert rep.truncation_error == 0.0
    assert np.allclose(rep.eigenvalues, [0.0, 1.0, 2.0])


def test_ladder_shifts_shrink():
    rep = es.convergence_ladder(dimer(1.0, 1.0, 0.1, 0.1, 2.0), None, 4, 10, 3)
    shifts = rep.extras["ladder_shifts"]
    assert len(shifts) == 2 and shifts[1] < shifts[0]
    assert rep.truncation_error == shifts[-1]
    assert rep.extras["cutoffs"] == (40, 40)


@pytest.mark.parametrize("g", [0.5, 2.0])
def test_variational_monotonicity(g):
    grounds = es.convergence_ladder(dimer(1.0, 1.0, 0.1, 0.1, g), None, 2, 6, 3).extras["ladder_ground"]
    assert all(b <= a + 1e-12 for a, b in zip(grounds, grounds[1:]))


def test_displaced_frame_beats_lab_frame():
    spec = dimer(1.0, 1.0, 0.1, 0.1, 20.0)
    v = displacement.lowest_stable(displacement.solve_displacements(spec)).alphas
    shifted = es.convergence_ladder(spec, v, 2, 8, 2)
    lab = es.convergence_ladder(spec, None, 2, 8, 2)
    assert shifted.truncation_error * 1e3 < lab.truncation_error


def test_ladder_cap():
    with pytest.raises(SizingError):
        es.convergence_ladder(dimer(g=0.1), None, 2, 40, 3, cap=2000)
    rep = es.convergence_ladder(dimer(g=0.1), None, 2, 10, 4, cap=2000)
    assert rep.extras["cutoffs"] == (40, 40)
    with pytest.raises(ValueError):
        es.convergence_ladder(dimer(g=0.1), None, 2, 10, 1)


def test_displaced_parity_matches_conjugation():
    # D^dag P D restricted to a small box, checked against a large-box expm
    from uscspectra.fock import annihilation

    v = 0.8
    big = 80
    a = annihilation(big).toarray()
    D = la.expm(v * (a.T - a))
    P = np.diag((-1.0) ** np.arange(big))
    ref = (D.T @ P @ D)[:10, :10]
    got = es.displaced_parity(build_basis([10]), [v]).toarray()
    assert np.max(np.abs(got - ref)) < 1e-12


@pytest.mark.parametrize("g", [5.0, 20.0])
def test_usc_dimer_doublets(g):
    spec = dimer(1.0, 1.0, 0.1, 0.1, g)
    v = displacement.lowest_stable(displacement.solve_displacements(spec)).alphas
    rep = es.mirror_frame_spectrum(spec, v, [24, 24], 4)
    assert [c.indices for c in rep.clusters] == [(0, 1), (2, 3)]
    for pd in rep.parity_diag:
        assert np.allclose(pd, [-1.0, 1.0], atol=1e-6)
    assert rep.extras["splitting"] <= rep.extras["splitting_floor"]
    # each sector alone matches single-frame ED to truncation accuracy
    single = es.solve_frame(spec, [24, 24], 1, frame=v)
    assert abs(rep.eigenvalues[0] - single.eigenvalues[0]) < 1e-6
    assert abs(rep.order_params[0]["n_1"] - v[0] ** 2) < 0.5


def test_mirror_frames_overlap_at_weak_coupling():
    spec = dimer(1.0, 1.0, 0.1, 0.1, 0.6)
    with pytest.raises(ValueError, match="overlap"):
        es.mirror_frame_spectrum(spec, [0.05, -0.05], [10, 10], 4)


def test_mirror_matches_lab_frame_where_both_converge():
    # frames overlap only partly and lab-frame ED still converges
    spec = dimer(1.0, 1.0, 0.1, 0.1, 3.0)
    v = displacement.lowest_stable(displacement.solve_displacements(spec)).alphas
    mirror = es.mirror_frame_spectrum(spec, v, [24, 24], 4)
    lab = es.solve_frame(spec, [60, 60], 4)
    assert np.max(np.abs(mirror.eigenvalues - lab.eigenvalues)) < 1e-6
