import math

import numpy as np
import pytest

from src.spin_algebra import cluster_operators, spin_components, total_spin
from src.states import (
    GeneralizedSingletSpec,
    LocalState,
    ProductState,
    cluster_spin0_state,
    generalized_singlet,
    local_moments,
    partial_trace,
    reduced_density,
    singlet_conserved_operators,
    spin_coherent,
    split_separable,
)

SPINS = [0.5, 1, 1.5, 2]
ANGLES = np.linspace(0.15, math.pi - 0.15, 10)


def test_singlet_at_half_pi_is_the_textbook_singlet():
    state = generalized_singlet(GeneralizedSingletSpec(0.5, math.pi / 2))
    assert np.allclose(state.amplitudes, np.array([0, 1, -1, 0]) / math.sqrt(2))


def test_spin_half_generalized_singlet_amplitudes():
    xi = 1.1
    state = generalized_singlet(GeneralizedSingletSpec(0.5, xi))
    assert np.allclose(state.amplitudes, [0, math.cos(xi / 2), -math.sin(xi / 2), 0])


@pytest.mark.parametrize("s", SPINS)
@pytest.mark.parametrize("parity", [-1, 1])
def test_conserved_operators_annihilate_generalized_singlet(s, parity):
    for xi in ANGLES:
        spec = GeneralizedSingletSpec(s, xi, parity)
        psi = generalized_singlet(spec).amplitudes
        for q in singlet_conserved_operators(spec).values():
            assert np.linalg.norm(q @ psi) < 1e-12


@pytest.mark.parametrize("s", SPINS)
def test_reduced_density_is_a_paramagnet(s):
    dim = int(2 * s + 1)
    m = np.array([s - k for k in range(dim)])
    for xi in ANGLES:
        state = generalized_singlet(GeneralizedSingletSpec(s, xi))
        beta = 2 * math.log(math.tan(xi / 2))
        expected = np.exp(-beta * m)
        expected /= expected.sum()

        rho1 = reduced_density(state, [0])
        rho2 = reduced_density(state, [1])
        assert np.allclose(rho1, np.diag(expected), atol=1e-12)
        assert np.allclose(rho2, np.diag(expected[::-1]), atol=1e-12)


@pytest.mark.parametrize("s", SPINS)
def test_local_moments_match_reduced_density(s):
    sz = spin_components(s)[2]
    for xi in ANGLES:
        state = generalized_singlet(GeneralizedSingletSpec(s, xi))
        rho = reduced_density(state, [0])
        mean = np.trace(rho @ sz).real
        variance = np.trace(rho @ sz @ sz).real - mean ** 2

        moments = local_moments(s, xi)
        assert moments.mean_z[0] == pytest.approx(mean, abs=1e-11)
        assert moments.mean_z[1] == pytest.approx(-mean, abs=1e-11)
        assert moments.variance_z == pytest.approx(variance, abs=1e-11)


def test_spin_half_local_moments_closed_form():
    xi = 0.7
    moments = local_moments(0.5, xi)
    assert moments.mean_z[0] == pytest.approx(math.cos(xi) / 2, abs=1e-14)
    assert moments.variance_z == pytest.approx(math.sin(xi) ** 2 / 4, abs=1e-14)


def test_local_moments_at_product_limits():
    assert local_moments(1, 0.0) == ((1.0, -1.0), 0.0)
    assert local_moments(1, math.pi) == ((-1.0, 1.0), 0.0)


def test_invalid_singlet_spec():
    with pytest.raises(ValueError):
        GeneralizedSingletSpec(0.5, 4.0)
    with pytest.raises(ValueError):
        GeneralizedSingletSpec(0.5, 1.0, parity=0)


def test_spin_coherent_points_along_direction():
    theta, phi = 0.8, 1.9
    state = spin_coherent(1, theta, phi)
    sx, sy, sz = spin_components(1)
    mean = np.array([state.expectation(op).real for op in (sx, sy, sz)])
    n = np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])

    assert np.allclose(mean, n)


@pytest.mark.parametrize("size,s", [(2, 0.5), (4, 0.5), (2, 1), (4, 1)])
def test_spin0_cluster_has_zero_total_spin_and_maximal_halves(size, s):
    state = cluster_spin0_state(size, s)
    ops = cluster_operators([s] * size)
    psi = state.amplitudes
    for comp in total_spin(ops):
        assert np.linalg.norm(comp @ psi) < 1e-12

    half = size // 2
    big_s = half * s
    left = [sum(ops.component(k, axis) for k in range(half)) for axis in "xyz"]
    casimir = sum(c @ c for c in left)
    assert np.vdot(psi, casimir @ psi).real == pytest.approx(big_s * (big_s + 1))


def test_spin0_cluster_rejects_odd_size():
    with pytest.raises(ValueError):
        cluster_spin0_state(3, 0.5)


def test_local_state_must_be_normalized():
    with pytest.raises(ValueError):
        LocalState(np.array([1.0, 1.0]), (0.5,))
    assert LocalState.normalized([1.0, 1.0], (0.5,)).dim == 2


def test_partial_trace_of_product_density():
    a = np.diag([0.25, 0.75])
    b = np.array([[0.5, 0.5j], [-0.5j, 0.5]])
    rho = np.kron(a, b)

    assert np.allclose(partial_trace(rho, [2, 2], [0]), a)
    assert np.allclose(partial_trace(rho, [2, 2], [1]), b)


def test_product_state_vector_uses_natural_site_order():
    up = LocalState(np.array([1.0, 0.0]), (0.5,))
    singlet = generalized_singlet(GeneralizedSingletSpec(0.5, math.pi / 2))
    state = ProductState((singlet, up), ((0, 2), (1,)))

    # site 1 up, sites 0 and 2 in the singlet
    psi = state.vector()
    assert psi[0b001] == pytest.approx(1 / math.sqrt(2))   # (up, up, down)
    assert psi[0b100] == pytest.approx(-1 / math.sqrt(2))  # (down, up, up)
    assert np.linalg.norm(psi) == pytest.approx(1.0)


def test_split_separable_on_product_limit():
    state = ProductState((generalized_singlet(GeneralizedSingletSpec(0.5, 0.0)),))
    split = split_separable(state)

    assert split is not None
    assert split.sites == ((0,), (1,))
    assert np.allclose(np.abs(split.vector()), np.abs(state.vector()))


def test_split_separable_refuses_entangled_pairs():
    state = ProductState((generalized_singlet(GeneralizedSingletSpec(0.5, 1.0)),))
    assert split_separable(state) is None
