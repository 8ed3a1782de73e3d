import numpy as np
import pytest

from src.diagonalize import (
    dense_spectrum,
    eigen_residual,
    ground_overlap,
    lowest_k,
    sector_spectrum,
    spectrum,
    total_magnetization,
)
from src.hamiltonian import ModelSpec, assemble
from src.utils import DenseCapExceeded, DimensionError, NotConservedError

SINGLET = np.array([0, 1, -1, 0]) / np.sqrt(2)


def _pair(sign=1.0):
    return assemble(ModelSpec(spins=(0.5, 0.5), couplings={(0, 1): sign * np.eye(3)}))


def _chain(n, coupling, fields, offset=0.0):
    return assemble(ModelSpec(spins=(0.5,) * n, fields=fields, energy_offset=offset,
                              couplings={(i, i + 1): coupling for i in range(n - 1)}))


def test_dense_spectrum_of_heisenberg_pair():
    result = dense_spectrum(_pair())
    assert result.method == "dense"
    assert np.allclose(result.eigenvalues, [-0.75, 0.25, 0.25, 0.25])
    assert result.degeneracy == 1
    assert result.gap == pytest.approx(1.0)
    assert result.residual_bound < 1e-12
    assert ground_overlap(result, SINGLET) == pytest.approx(1.0)


def test_ferromagnetic_pair_has_threefold_ground_level():
    result = dense_spectrum(_pair(-1.0))
    assert result.degeneracy == 3
    assert result.gap == pytest.approx(1.0)
    assert ground_overlap(result, np.array([1.0, 0, 0, 0])) == pytest.approx(1.0)
    assert ground_overlap(result, SINGLET) == pytest.approx(0.0, abs=1e-12)


def test_lowest_k_matches_dense_on_random_field_chain():
    rng = np.random.default_rng(8)
    hamiltonian = _chain(8, np.diag([1.0, 0.7, 0.4]), rng.normal(size=(8, 3)))
    dense = dense_spectrum(hamiltonian)
    iterative = lowest_k(hamiltonian, k=4, seed=5)
    assert iterative.method == "iterative"
    assert iterative.residual_bound < 1e-8
    assert np.allclose(iterative.eigenvalues, dense.eigenvalues[:4], atol=1e-8)

    overlap = abs(np.vdot(iterative.vectors[:, 0], dense.vectors[:, 0]))
    assert overlap == pytest.approx(1.0, abs=1e-8)


def test_dense_and_iterative_degeneracy_tolerances_agree():
    # J2 = J1 / 2 ring: twofold dimer ground level, spectral width 6
    n = 8
    couplings = {tuple(sorted((i, (i + 1) % n))): np.eye(3) for i in range(n)}
    couplings.update({tuple(sorted((i, (i + 2) % n))): 0.5 * np.eye(3) for i in range(n)})
    hamiltonian = assemble(ModelSpec(spins=(0.5,) * n, couplings=couplings))
    dense = dense_spectrum(hamiltonian)
    iterative = lowest_k(hamiltonian, k=4, seed=3)
    assert iterative.method == "iterative"
    assert dense.delta == pytest.approx(6e-8)
    assert iterative.delta == pytest.approx(dense.delta, rel=1e-5)
    assert iterative.degeneracy == dense.degeneracy == 2


def test_lowest_k_includes_energy_offset():
    rng = np.random.default_rng(9)
    fields = rng.normal(size=(8, 3))
    plain = lowest_k(_chain(8, np.eye(3), fields), k=2)
    shifted = lowest_k(_chain(8, np.eye(3), fields, offset=2.0), k=2)
    assert np.allclose(shifted.eigenvalues, plain.eigenvalues + 2.0, atol=1e-8)


def test_small_problems_fall_back_to_dense():
    result = spectrum(_pair(), k=2)
    assert result.method == "dense"
    assert np.allclose(result.eigenvalues, [-0.75, 0.25])
    with pytest.raises(ValueError):
        lowest_k(_pair(), k=0)
    with pytest.raises(ValueError):
        spectrum(_pair(), method="power")


def test_dense_cap_is_enforced():
    rng = np.random.default_rng(12)
    hamiltonian = _chain(8, np.eye(3), rng.normal(size=(8, 3)))
    with pytest.raises(DenseCapExceeded):
        dense_spectrum(hamiltonian, cap=32)
    assert spectrum(hamiltonian, cap=32).method == "iterative"


def test_eigen_residual():
    assert eigen_residual(_pair(), SINGLET) < 1e-15
    # ⟨H²⟩ - ⟨H⟩² = 1/4 for |↑↓⟩
    assert eigen_residual(_pair(), np.array([0, 1.0, 0, 0])) == pytest.approx(0.5)
    with pytest.raises(DimensionError):
        eigen_residual(_pair(), np.ones(8))


def test_total_magnetization_order():
    assert np.allclose(total_magnetization([0.5, 0.5]), [1, 0, 0, -1])
    assert np.allclose(total_magnetization([1, 0.5]), [1.5, 0.5, 0.5, -0.5, -0.5, -1.5])


def test_sector_spectrum_agrees_with_dense():
    rng = np.random.default_rng(10)
    fields = np.zeros((6, 3))
    fields[:, 2] = rng.normal(size=6)
    hamiltonian = _chain(6, np.diag([1.0, 1.0, 0.5]), fields, offset=-0.3)
    sectors = sector_spectrum(hamiltonian, [0.5] * 6)
    dense = dense_spectrum(hamiltonian)
    assert sectors.method == "sector"
    assert np.allclose(sectors.eigenvalues, dense.eigenvalues, atol=1e-10)
    assert sorted(sectors.sectors) == [-3, -2, -1, 0, 1, 2, 3]
    assert sum(v.size for v in sectors.sectors.values()) == 64
    assert ground_overlap(sectors, dense.vectors[:, 0]) == pytest.approx(1.0, abs=1e-8)


def test_sector_spectrum_needs_conserved_magnetization():
    fields = np.zeros((4, 3))
    fields[0, 0] = 0.2
    with pytest.raises(NotConservedError):
        sector_spectrum(_chain(4, np.eye(3), fields), [0.5] * 4)
    with pytest.raises(DimensionError):
        sector_spectrum(_pair(), [0.5] * 3)
