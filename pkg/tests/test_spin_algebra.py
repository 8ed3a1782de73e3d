import math

import numpy as np
import pytest

from src.spin_algebra import (
    SiteOperatorSet,
    clebsch_gordan,
    cluster_operators,
    complete_operator_set,
    embed_product,
    rotation,
    spin_components,
    spin_matrices,
    structure_constants,
    total_spin,
)
from src.utils import DimensionError, as_spin


@pytest.mark.parametrize("s", [0.5, 1, 1.5, 2])
def test_spin_components_obey_su2(s):
    sx, sy, sz = spin_components(s)
    dim = int(2 * s + 1)

    assert np.allclose(sx @ sy - sy @ sx, 1j * sz)
    assert np.allclose(sy @ sz - sz @ sy, 1j * sx)
    assert np.allclose(sx @ sx + sy @ sy + sz @ sz, s * (s + 1) * np.eye(dim))


def test_spin_half_matrices_are_half_pauli():
    sx, sy, sz = spin_components(0.5)

    assert np.allclose(sx, [[0, 0.5], [0.5, 0]])
    assert np.allclose(sz, np.diag([0.5, -0.5]))


def test_basis_runs_from_m_equals_s_down():
    _, _, sz = spin_components(1)
    assert np.allclose(np.diag(sz).real, [1, 0, -1])


def test_structure_constants_of_spin_half():
    consts = structure_constants(spin_matrices(0.5))
    entries = consts.nonzero_entries()

    assert consts.residual_norm < 1e-12
    assert entries[("Sx", "Sy", "Sz")] == pytest.approx(1j)
    assert entries[("Sy", "Sz", "Sx")] == pytest.approx(1j)
    assert consts.table[2, 0, 1] == pytest.approx(1j)


def test_complete_operator_set_spans_all_matrices():
    ops = complete_operator_set(3)
    assert len(ops) == 9
    assert ops.labels[0] == "I"


def test_dependent_operators_are_rejected():
    sx, _, _ = spin_components(0.5)
    with pytest.raises(ValueError):
        SiteOperatorSet(ops=(sx, 2 * sx), labels=("a", "b"))


def test_cluster_operators_label_sites():
    ops = cluster_operators([0.5, 1])

    assert len(ops) == 6
    assert ops.site_dim == 6
    assert np.allclose(ops.component(1, "z"), np.kron(np.eye(2), spin_components(1)[2]))


def test_total_spin_of_pair_annihilates_singlet():
    ops = cluster_operators([0.5, 0.5])
    singlet = np.array([0, 1, -1, 0]) / math.sqrt(2)
    for comp in total_spin(ops):
        assert np.linalg.norm(comp @ singlet) < 1e-14


def test_clebsch_gordan_singlet_values():
    assert clebsch_gordan(0.5, 0.5, 0.5, -0.5, 0, 0) == pytest.approx(1 / math.sqrt(2))
    assert clebsch_gordan(0.5, -0.5, 0.5, 0.5, 0, 0) == pytest.approx(-1 / math.sqrt(2))
    assert clebsch_gordan(1, 1, 1, -1, 2, 0) == pytest.approx(1 / math.sqrt(6))
    assert clebsch_gordan(1, 1, 1, 1, 0, 0) == 0.0


@pytest.mark.parametrize("big_j", [0, 1, 2])
def test_clebsch_gordan_columns_are_normalized(big_j):
    total = sum(clebsch_gordan(1, m, 1, -m, big_j, 0) ** 2 for m in (-1, 0, 1))
    assert total == pytest.approx(1.0, abs=1e-14)


def test_rotation_by_two_pi_is_minus_one_for_half_spin():
    assert np.allclose(rotation(0.5, (0, 0, 1), 2 * math.pi), -np.eye(2))
    assert np.allclose(rotation(1, (1, 1, 0), 2 * math.pi), np.eye(3))


def test_embed_product_places_operator_on_factor():
    sz = spin_components(0.5)[2]
    op = embed_product({1: sz}, (2, 2, 2))

    assert np.allclose(op.to_dense(), np.kron(np.kron(np.eye(2), sz), np.eye(2)))


def test_embed_product_checks_shapes():
    with pytest.raises(DimensionError):
        embed_product({0: np.eye(3)}, (2, 2))


def test_spin_zero_is_a_one_dimensional_site():
    assert as_spin(0) == 0
    assert all(np.allclose(op, np.zeros((1, 1))) for op in spin_components(0))
    assert spin_matrices(0).site_dim == 1
    with pytest.raises(ValueError):
        as_spin(0, positive=True)
    with pytest.raises(ValueError):
        as_spin(-0.5)
    with pytest.raises(ValueError):
        as_spin(0.25)
