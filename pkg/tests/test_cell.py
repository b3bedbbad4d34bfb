import numpy as np
import pytest

from hmm_helmholtz.cell import (
    CellConfig,
    CellSolver,
    effective_a,
    eigen_oracle_tail_bound,
    locate_sign_changes,
    mu_eff_eigen_oracle,
    mu_eff_sweep,
    resonance_wavenumbers,
)
from hmm_helmholtz.errors import NotASquareInclusion
from hmm_helmholtz.mesh import AxisBox

CFG = CellConfig(n_cell=32)


@pytest.fixture(scope="module")
def solver():
    return CellSolver(CFG)


def grid(field, n):
    return field.values.reshape(n + 1, n + 1)  # [j, i] = value at (i/n, j/n)


def test_config_validation():
    with pytest.raises(ValueError):
        CellConfig(eps_e_inv=-1.0)
    with pytest.raises(ValueError):
        CellConfig(eps_i_inv=10 + 0.01j)
    with pytest.raises(ValueError):
        CellConfig(D=AxisBox(0.0, 0.25, 0.75, 0.75))


def test_empty_inclusion_is_trivial():
    s = CellSolver(CellConfig(D=None, n_cell=8))
    w1, w2 = s.correctors()
    assert np.abs(w1.values).max() < 1e-12 and np.abs(w2.values).max() < 1e-12
    assert np.allclose(s.effective_a(), 10 * np.eye(2))
    assert s.mu_eff(29.0) == 1.0


def test_corrector_symmetries(solver):
    n = CFG.n_cell
    w1, w2 = (grid(w, n) for w in solver.correctors())
    # w1 is odd in x1 and even in x2; w2 is w1 with the axes swapped.
    assert np.allclose(w1, -w1[:, ::-1], atol=1e-12)
    assert np.allclose(w1, w1[::-1, :], atol=1e-12)
    assert np.allclose(w2, w1.T, atol=1e-12)


def test_corrector_zero_mean_and_periodic(solver):
    n = CFG.n_cell
    for w in solver.correctors():
        assert abs(w.integral()) < 1e-12
        g = grid(w, n)
        assert np.allclose(g[:, 0], g[:, -1]) and np.allclose(g[0, :], g[-1, :])


def test_a_eff_invariants(solver):
    a = solver.effective_a()
    assert np.allclose(a, a.T, atol=1e-12)
    assert np.all(np.linalg.eigvalsh(a) > 0)
    assert abs(a[0, 1]) < 1e-10
    assert a[0, 0] == pytest.approx(a[1, 1], rel=1e-12)
    # Bounded by the energy of the zero corrector.
    assert a[0, 0] <= CFG.eps_e_inv * 0.75
    assert a[0, 0] == pytest.approx(solver.cell_energy(1))


def test_galerkin_energy_decreases_with_refinement():
    energies = [CellSolver(CFG.with_n(n)).cell_energy(1) for n in (8, 16, 32, 64)]
    assert all(e1 > e2 for e1, e2 in zip(energies, energies[1:]))


def test_effective_a_function_matches_method(solver):
    assert np.allclose(effective_a(CFG, *solver.correctors()), solver.effective_a())


def test_resonant_solution_vanishes_outside(solver):
    w = solver.solve_resonant(20.0)
    inside = CFG.D.inside(w.mesh.vertices, tol=-1e-12)
    assert np.all(w.values[~inside] == 0)
    assert np.abs(w.values[inside]).max() > 0


def test_oracle_small_k_limit():
    assert mu_eff_eigen_oracle(CFG, 0.0) == 1.0
    assert abs(mu_eff_eigen_oracle(CFG, 1e-3) - 1) < 1e-6


def test_oracle_truncation_converges():
    for k in (15.0, 34.0, 60.0):
        coarse = mu_eff_eigen_oracle(CFG, k, M=41)
        fine = mu_eff_eigen_oracle(CFG, k, M=201)
        assert abs(coarse - fine) <= 2 * eigen_oracle_tail_bound(CFG, k, M=41)
        assert abs(coarse - fine) < 1e-3 * abs(fine)


def test_oracle_needs_square():
    with pytest.raises(NotASquareInclusion):
        mu_eff_eigen_oracle(CellConfig(D=AxisBox(0.25, 0.25, 0.75, 0.5)), 10.0)
    with pytest.raises(NotASquareInclusion):
        mu_eff_eigen_oracle(CellConfig(D=None), 10.0)
    with pytest.raises(ValueError):
        mu_eff_eigen_oracle(CFG, 10.0, M=0)


def test_resonances():
    ks = resonance_wavenumbers(CFG, 70.0)
    # Lowest mode (1,1): k^2 Re(eps_i) = 2 pi^2 / L^2.
    assert ks[0] == pytest.approx(np.sqrt(2 * np.pi**2 / 0.25 / (1 / (10 - 0.01j)).real))
    assert ks == sorted(ks)


def test_oracle_sign_changes():
    ks = np.arange(15.0, 68.01, 0.5)
    f = lambda k: mu_eff_eigen_oracle(CFG, k).real
    changes = locate_sign_changes(f, ks, [f(k) for k in ks])
    down = [c.k for c in changes if c.direction == "down"]
    assert down[0] == pytest.approx(28.1, abs=0.3)
    assert down[1] == pytest.approx(62.8, abs=0.3)


def test_fem_mu_matches_oracle_on_moderate_mesh():
    s = CellSolver(CFG.with_n(128))
    for k in (15.0, 25.0, 34.0):
        mu, ref = s.mu_eff(k), mu_eff_eigen_oracle(CFG, k)
        assert abs(mu - ref) / abs(ref) < 1e-2


def test_mu_imaginary_part_positive_and_negative_band():
    sweep = mu_eff_sweep(CFG.with_n(64), np.arange(15.0, 68.01, 2.0))
    assert np.all(sweep.mu.imag > 0)
    assert CellSolver(CFG.with_n(64)).mu_eff(29.0).real < 0
    assert sweep.a_eff.shape == (2, 2)
