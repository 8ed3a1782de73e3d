import math
from dataclasses import replace
from itertools import combinations

import numpy as np
import pytest

from src.covariance import covariance_matrix
from src.factorization import (
    check_conditions,
    cluster_check,
    coupling_space_basis,
    full_factorization_check,
    generalized_singlet_constraints,
    internal_solution,
    singlet_dimer_check,
    singlet_ground_window,
    solve_all_fields,
    solve_fields,
)
from src.hamiltonian import ModelSpec, assemble, global_variance
from src.models import MgXxzParams, mg_xxz_chain, spin0_cluster_chain, xyz_factorized_chain, xyz_tetramer
from src.spin_algebra import cluster_operators
from src.states import (
    GeneralizedSingletSpec,
    LocalState,
    ProductState,
    cluster_spin0_state,
    generalized_singlet,
    spin_coherent,
)
from src.utils import DegenerateAngleError, DimensionError


def _cov(local):
    return covariance_matrix(local, cluster_operators(local.factor_spins))


def test_majumdar_ghosh_dimers_factorize():
    bundle = mg_xxz_chain(MgXxzParams())
    candidate = bundle.candidates["dimer"]
    report = check_conditions(candidate.model, candidate.state)
    assert report.verdict
    assert report.energy == pytest.approx(-3.0, abs=1e-10)
    assert report.ranks == (3, 3, 3, 3)
    assert report.global_residual < 1e-12

    solution = internal_solution(candidate.model, candidate.state, 0)
    assert solution.family == "gs_xxz"
    assert solution.predicted_energy == pytest.approx(-0.75)
    assert solution.energy == pytest.approx(-0.75, abs=1e-12)
    assert solution.xi == pytest.approx(math.pi / 2)
    assert solution.level_degeneracy == 1


def test_broken_coupling_fails_the_verdict():
    candidate = mg_xxz_chain(MgXxzParams()).candidates["dimer"]
    couplings = dict(candidate.model.couplings)
    couplings[(1, 2)] = couplings[(1, 2)] * 1.3
    report = check_conditions(replace(candidate.model, couplings=couplings), candidate.state)
    assert not report.verdict
    assert report.energy is None
    assert max(report.coupling_residuals.values()) > 1e-3


def test_coupling_space_dimension_between_generalized_singlets():
    p = generalized_singlet(GeneralizedSingletSpec(0.5, 0.9))
    q = generalized_singlet(GeneralizedSingletSpec(0.5, 2.0))
    space = coupling_space_basis(_cov(p), _cov(q))
    assert space.dimension == 27
    assert space.expected_dimension == 27
    assert space.direct_dimension == 27


@pytest.mark.parametrize("s", [0.5, 1])
def test_coupling_space_dimension_between_coherent_sites(s):
    p, q = spin_coherent(s, 0.3, 1.0), spin_coherent(s, 2.1, -0.4)
    space = coupling_space_basis(_cov(p), _cov(q))
    assert space.dimension == 8
    assert space.direct_dimension == 8

    # every solution, real or complex, satisfies C_p J C_q^T = 0
    cp, cq = _cov(p).entries, _cov(q).entries
    for j in space.matrices() + space.matrices(real=True):
        assert np.linalg.norm(cp @ j @ cq.T) < 1e-10


def test_compose_lands_in_the_kernel():
    p = generalized_singlet(GeneralizedSingletSpec(1, 1.2))
    q = spin_coherent(1, 0.7, 0.2)
    cov_p, cov_q = _cov(p), _cov(q)
    space = coupling_space_basis(cov_p, cov_q)
    rng = np.random.default_rng(2)
    k_left = rng.normal(size=(space.null_p.shape[1], 3))
    k_right = rng.normal(size=(6, space.null_q.shape[1]))
    j = space.compose(k_left, k_right)
    assert np.linalg.norm(cov_p.entries @ j @ cov_q.entries.T) < 1e-10


def test_spin_up_admits_only_z_fields():
    up = spin_coherent(0.5, 0.0, 0.0)
    model = ModelSpec(spins=(0.5,))
    space = solve_fields(_cov(up), model, ProductState((up,)), 0)
    assert space.dimension == 1
    assert np.allclose(np.abs(space.real_directions[:, 0]), [0, 0, 1])
    with pytest.raises(DimensionError):
        space.field_for([1.0, 2.0])


def _random_factor(rng):
    kind = int(rng.integers(4))
    if kind == 0:
        s = float(rng.choice([0.5, 1.0, 1.5]))
        return spin_coherent(s, rng.uniform(0.2, math.pi - 0.2), rng.uniform(-math.pi, math.pi))
    if kind in (1, 2):
        spec = GeneralizedSingletSpec(0.5 * kind, rng.uniform(0.2, math.pi - 0.2), int(rng.choice([-1, 1])))
        return generalized_singlet(spec)
    return cluster_spin0_state(4, 0.5)


def _random_product(rng, max_dim=256):
    while True:
        factors = tuple(_random_factor(rng) for _ in range(int(rng.integers(2, 5))))
        if np.prod([f.amplitudes.size for f in factors]) <= max_dim:
            return ProductState(factors)


def _solved_model(rng, state):
    """Random inter-factor couplings and fields drawn from the solution spaces of `state`."""
    covs = [_cov(f) for f in state.factors]
    couplings = {}
    for p, q in combinations(range(len(state.factors)), 2):
        real = coupling_space_basis(covs[p], covs[q], (p, q)).real_basis
        block = (rng.normal(size=real.shape[0]) @ real).reshape(covs[p].dim, covs[q].dim)
        for a, i in enumerate(state.sites[p]):
            for b, j in enumerate(state.sites[q]):
                couplings[(i, j)] = block[3 * a:3 * a + 3, 3 * b:3 * b + 3]
    model = ModelSpec(spins=state.site_spins, clusters=state.sites, couplings=couplings)
    fields = [space.field_for(rng.normal(size=space.dimension)) for space in solve_all_fields(model, state)]
    return replace(model, fields=np.real(np.concatenate(fields)).reshape(-1, 3))


def _verdicts_match_variance(seed, n_states):
    rng = np.random.default_rng(seed)
    for _ in range(n_states):
        state = _random_product(rng)
        solved = _solved_model(rng, state)
        noisy = replace(solved, fields=solved.fields + rng.normal(size=solved.fields.shape),
                        couplings={k: v + 0.3 * rng.normal(size=(3, 3)) for k, v in solved.couplings.items()})
        for model, expected in ((solved, True), (noisy, False)):
            hamiltonian = assemble(model)
            scale = np.linalg.norm(hamiltonian.dense(), 2) ** 2
            assert check_conditions(model, state, global_check=False).verdict == expected
            assert (global_variance(hamiltonian, state) < 1e-18 * scale) == expected


def test_verdict_agrees_with_global_variance():
    _verdicts_match_variance(99, 20)


@pytest.mark.slow
def test_verdict_agrees_with_global_variance_on_mixed_factors():
    # 250 states, one solved and one perturbed model each
    _verdicts_match_variance(2024, 250)


def test_singlet_dimer_check_between_pairs():
    a, b = 0.7, 0.3
    block = np.zeros((6, 6))
    block[0:3, 0:3] = a * np.eye(3)
    block[3:6, 3:6] = a * np.eye(3)
    block[0:3, 3:6] = b * np.eye(3)
    block[3:6, 0:3] = (2 * a - b) * np.eye(3)
    assert singlet_dimer_check(block).relative_residual < 1e-14

    block[3:6, 0:3] += np.diag([0.0, 0.0, 0.1])
    assert singlet_dimer_check(block).norm == pytest.approx(0.1)


def test_singlet_dimer_check_inside_a_spin_half_pair():
    block = np.zeros((6, 6))
    j12 = np.diag([1.0, 2.0, 3.0])
    block[0:3, 3:6] = j12
    block[3:6, 0:3] = j12.T
    check = singlet_dimer_check(block, internal=True, spin=0.5)
    assert check.j_pair == pytest.approx(2.0)
    assert check.norm == pytest.approx(0.0)
    assert check.notes


def test_cluster_check_accepts_separable_blocks():
    rng = np.random.default_rng(4)
    left = [rng.normal(size=(3, 3)) for _ in range(3)]
    right = [rng.normal(size=(3, 3)) for _ in range(2)]
    block = np.block([[left[i] + right[j] for j in range(2)] for i in range(3)])
    check = cluster_check(block, (3, 2))
    assert check.max_quadruple_residual < 1e-12
    assert check.relative_residual < 1e-12

    block[0:3, 0:3] += np.eye(3)
    assert cluster_check(block, (3, 2)).max_quadruple_residual > 0.5


def test_generalized_singlet_constraints_vanish_on_mg_chain():
    bundle = mg_xxz_chain(MgXxzParams(J_D=0.35))
    model = bundle.model
    xis = model.params["xi"]
    result = generalized_singlet_constraints(model.factor_block(0, 1), xis[0], xis[1])
    assert result.max_residual < 1e-12
    assert max(abs(v) for v in result.f1.values()) < 1e-12
    assert abs(result.zz) < 1e-12
    assert "upper" in result.f2
    assert all(abs(v) < 1e-12 for v in result.f2.values())

    with pytest.raises(DegenerateAngleError):
        generalized_singlet_constraints(model.factor_block(0, 1), 0.0, xis[1])
    with pytest.raises(ValueError):
        generalized_singlet_constraints(model.factor_block(0, 1), 4.0, xis[1])


@pytest.mark.parametrize("label", ["plus", "minus", "horizontal"])
def test_generalized_singlet_constraints_vanish_on_tetramer_candidates(label):
    model = xyz_tetramer(J_z=0.4).candidates[label].model
    xis, parities = model.params["xi"], tuple(model.params["parity"])
    result = generalized_singlet_constraints(model.factor_block(0, 1), xis[0], xis[1], parities)
    assert result.max_residual < 1e-10
    assert max(abs(v) for v in result.f1.values()) < 1e-10
    assert abs(result.zz) < 1e-10
    assert all(abs(v) < 1e-10 for v in result.f2.values())


def test_generalized_singlet_constraints_of_a_heisenberg_bond():
    # S_1 · S_1' between two ξ = π/2 pairs
    block = np.zeros((6, 6))
    block[0:3, 0:3] = np.eye(3)
    result = generalized_singlet_constraints(block, math.pi / 2, math.pi / 2)
    assert result.raw[("z", "z")] == pytest.approx(1.0)
    assert result.zz == pytest.approx(0.5)
    assert result.f1["+-upper"] == pytest.approx(0.25)
    assert result.relative_residual > 0.1


def test_generalized_singlet_constraints_of_random_couplings():
    block = np.random.default_rng(8).normal(size=(6, 6))
    result = generalized_singlet_constraints(block, 0.7, 1.9)
    assert result.max_residual > 1e-3
    assert max(abs(v) for v in result.f1.values()) > 1e-6
    assert abs(result.zz) > 1e-6
    assert set(result.f2) == {"upper", "lower"}
    assert max(abs(v) for v in result.f2.values()) > 1e-6


def test_spin_zero_site_is_inert():
    model = ModelSpec(spins=(0, 0.5), fields=[[0, 0, 0], [0, 0, 0.8]], couplings={(0, 1): np.eye(3)})
    state = ProductState((LocalState(np.array([1.0]), (0,)), spin_coherent(0.5, 0.0, 0.0)))
    report = check_conditions(model, state)
    assert report.verdict
    assert report.energy == pytest.approx(0.4, abs=1e-12)
    assert report.ranks == (0, 1)
    assert np.allclose(np.linalg.eigvalsh(assemble(model).dense()), [-0.4, 0.4])


@pytest.mark.parametrize("jx,jy,b", [(1.0, 1.0, 0.0), (1.0, 0.4, 0.3), (0.8, -0.2, -0.5)])
def test_singlet_ground_window_matches_two_spin_spectrum(jx, jy, b):
    jz_c = singlet_ground_window(jx, jy, b)
    singlet = generalized_singlet(GeneralizedSingletSpec(0.5, math.pi / 2)).amplitudes
    for jz, inside in ((jz_c + 0.05, True), (jz_c - 0.05, False)):
        model = ModelSpec(spins=(0.5, 0.5), fields=[[0, 0, b], [0, 0, b]],
                          couplings={(0, 1): [jx, jy, jz]})
        values, vectors = np.linalg.eigh(assemble(model).dense())
        overlap = abs(np.vdot(vectors[:, 0], singlet)) ** 2
        assert (overlap > 1 - 1e-10) == inside


def test_full_factorization_of_xyz_chain():
    bundle = xyz_factorized_chain(n_sites=5, J_x=1.0, J_y=0.6, J_z=0.2)
    candidate = bundle.candidates["coherent"]
    check = full_factorization_check(candidate.model, candidate.state)
    assert check.verdict
    assert len(check.directions) == 5

    report = check_conditions(candidate.model, candidate.state)
    assert report.verdict
    assert report.energy == pytest.approx(candidate.energy, abs=1e-10)


def test_full_factorization_rejects_clusters():
    state = ProductState((generalized_singlet(GeneralizedSingletSpec(0.5, 1.0)),))
    model = ModelSpec(spins=(0.5, 0.5), clusters=((0, 1),))
    with pytest.raises(DimensionError):
        full_factorization_check(model, state)


def test_spin0_cluster_level_is_unique_inside_the_cluster():
    candidate = spin0_cluster_chain(n_clusters=2, cluster_size=4).primary
    solution = internal_solution(candidate.model, candidate.state, 1)
    assert solution.family == "spin0_cluster"
    assert solution.energy == pytest.approx(-2.0, abs=1e-12)
    assert solution.predicted_energy == pytest.approx(-2.0, abs=1e-12)
    assert solution.level_degeneracy == 1
    assert max(solution.coupling_constraints.values()) < 1e-12
