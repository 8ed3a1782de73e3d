import math

import numpy as np
import pytest

from src.diagonalize import dense_spectrum, ground_overlap, lowest_k, spectrum
from src.factorization import check_conditions
from src.hamiltonian import assemble
from src.models import (
    MgXxzParams,
    XyzLadderParams,
    bisect_boundary,
    build_bundle,
    canonical_params,
    full_factor_chain,
    long_range_dimer_chain,
    mg_angle,
    mg_xxz_chain,
    run_sweep,
    spin0_cluster_chain,
    sweep_point,
    tetramer_boundaries,
    tetramer_critical_coupling,
    verify_candidates,
    xyz_factorizing_angle,
    xyz_ladder,
    xyz_tetramer,
)
from src.utils import ConfigError, ConstraintViolation, DegenerateAngleError, NoRealAngleError

TETRAMER = {"J_x": 1.0, "J_y": 0.5, "JD_x": 1.5}


# ---------- XXZ chain with alternating field ----------
def test_mg_point_is_twofold_degenerate():
    bundle = mg_xxz_chain(MgXxzParams(n_pairs=4, J=1.0, J_E=1.0, J_D=0.5))
    result = dense_spectrum(assemble(bundle.model))
    assert result.ground_energy == pytest.approx(-3.0, abs=1e-10)
    assert result.degeneracy == 2
    assert ground_overlap(result, bundle.primary.state) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("ratio", np.round(np.arange(0.1, 0.95, 0.1), 2))
def test_dimers_are_the_unique_ground_state_below_the_mg_point(ratio):
    bundle = mg_xxz_chain(MgXxzParams(J_D=ratio / 2))
    assert math.sin(bundle.predictions["xi"]) == pytest.approx(ratio)
    result = dense_spectrum(assemble(bundle.model))
    assert result.degeneracy == 1
    assert result.gap > 1e-6
    assert result.ground_energy == pytest.approx(4 * bundle.predictions["pair_energy"], abs=1e-10)
    assert ground_overlap(result, bundle.primary.state) == pytest.approx(1.0, abs=1e-8)
    assert verify_candidates(bundle)["dimer"].verdict


@pytest.mark.slow
def test_spin_one_chain_ground_energy():
    bundle = mg_xxz_chain(MgXxzParams(n_pairs=4, s=1, J=1.5, J_E=1.0, J_D=0.5))
    # J_z = J J^E / (2 J^D) = 1.5, E = -8 J_z
    assert bundle.predictions["energy"] == pytest.approx(-12.0)
    result = spectrum(assemble(bundle.model), k=2)
    assert result.method == "iterative"
    assert result.ground_energy == pytest.approx(-12.0, abs=1e-8)


def test_spin_one_dense_and_iterative_agree():
    bundle = mg_xxz_chain(MgXxzParams(n_pairs=3, s=1, J=1.5, J_E=1.0, J_D=0.5))
    hamiltonian = assemble(bundle.model)
    dense = dense_spectrum(hamiltonian)
    iterative = lowest_k(hamiltonian, k=2)
    assert iterative.method == "iterative"
    assert iterative.ground_energy == pytest.approx(dense.ground_energy, abs=1e-8)
    report = verify_candidates(bundle)["dimer"]
    assert report.verdict
    assert report.energy == pytest.approx(-9.0, abs=1e-10)


def test_mg_angle_domain():
    assert mg_angle(MgXxzParams(J_D=0.25)) == pytest.approx(math.pi / 6)
    with pytest.raises(NoRealAngleError):
        mg_angle(MgXxzParams(J_D=0.6))
    with pytest.raises(DegenerateAngleError):
        mg_angle(MgXxzParams(J_D=0.0))
    with pytest.raises(ValueError):
        MgXxzParams(n_pairs=0)


def test_mg_anisotropy_mismatch_gives_no_candidate():
    bundle = mg_xxz_chain(MgXxzParams(J_D=0.3, J_D_z=0.9))
    assert bundle.candidates == {}
    assert bundle.notes
    with pytest.raises(ConstraintViolation):
        bundle.primary


# ---------- XYZ ladder ----------
def test_ladder_candidates_are_exact_on_a_ring():
    bundle = xyz_ladder(XyzLadderParams(n_pairs=3))
    assert bundle.model.range_weights == {(0, 1): 1.0, (0, 2): 1.0, (1, 2): 1.0}
    assert set(bundle.candidates) == {"plus", "minus"}
    for label, report in verify_candidates(bundle).items():
        assert report.verdict, label
        assert report.energy == pytest.approx(bundle.candidates[label].energy, abs=1e-10)


def test_ladder_leg_constraint():
    loose = xyz_ladder(XyzLadderParams(J_Dy=1.0))
    assert loose.notes
    assert loose.predictions["constraint_residual"] == pytest.approx(0.5)
    with pytest.raises(ConstraintViolation):
        xyz_ladder(XyzLadderParams(J_Dy=1.0, exact=True))
    with pytest.raises(ConstraintViolation):
        XyzLadderParams(J_Dx=0.2)


def test_ladder_with_z_leg_coupling_is_not_factorized():
    bundle = xyz_ladder(XyzLadderParams(J_Dz=0.3))
    report = verify_candidates(bundle)["plus"]
    assert not report.verdict
    assert max(report.coupling_residuals.values()) > 1e-3


# ---------- XYZ tetramer ----------
def test_tetramer_critical_coupling_and_derived_leg():
    bundle = xyz_tetramer(**TETRAMER)
    assert tetramer_critical_coupling(1.0, 1.5) == pytest.approx(math.sqrt(1.25))
    assert bundle.predictions["J_Dy"] == pytest.approx(math.sqrt(1.5))
    assert set(bundle.candidates) == {"plus", "minus", "horizontal"}


def test_tetramer_candidates_are_exact_for_every_jz():
    jd_y = math.sqrt(1.5)
    for jz in np.linspace(-3.0, 3.0, 20):
        bundle = xyz_tetramer(J_z=float(jz), **TETRAMER)
        reports = verify_candidates(bundle)
        for label, report in reports.items():
            assert report.verdict, label
            assert report.energy == pytest.approx(bundle.candidates[label].energy, abs=1e-10)

        xi_minus = bundle.predictions["xi_minus"]
        xi_plus = bundle.predictions["xi_plus"]
        assert bundle.candidates["minus"].energy == pytest.approx(0.5 * (-1.5 / math.sin(xi_minus) - jz))
        assert bundle.candidates["plus"].energy == pytest.approx(0.5 * (-0.5 / math.sin(xi_plus) + jz))
        assert bundle.candidates["horizontal"].energy == pytest.approx(
            -0.5 * (math.sqrt(1.25) + 1.5 + jd_y))


@pytest.mark.parametrize("jz,label", [(-2.0, "plus"), (0.0, "horizontal"), (2.0, "minus")])
def test_tetramer_ground_state_by_region(jz, label):
    row = sweep_point("xyz_tetramer", TETRAMER, "J_z", jz)
    assert row[f"in_ground_{label}"]
    others = {"plus", "minus", "horizontal"} - {label}
    assert not any(row[f"in_ground_{o}"] for o in others)
    assert row["ground_energy"] == pytest.approx(row[f"energy_{label}"], abs=1e-10)


def test_tetramer_boundaries_sit_at_critical_coupling():
    lower, upper = tetramer_boundaries(**TETRAMER)
    jz_c = math.sqrt(1.25)
    assert lower == pytest.approx(-jz_c, abs=1e-5)
    assert upper == pytest.approx(jz_c, abs=1e-5)


def test_run_sweep_keeps_input_order():
    rows = run_sweep(sweep_point, "xyz_tetramer", TETRAMER, "J_z", [2.0, -2.0, 0.0], n_jobs=1)
    assert [row["J_z"] for row in rows] == [2.0, -2.0, 0.0]
    assert rows[0]["in_ground_minus"] and rows[1]["in_ground_plus"]


# ---------- other families ----------
def test_long_range_dimer_chain():
    bundle = long_range_dimer_chain(n_pairs=4, k=2)
    report = verify_candidates(bundle)["dimer"]
    assert report.verdict
    assert report.energy == pytest.approx(-6.0, abs=1e-10)
    with pytest.raises(ValueError):
        long_range_dimer_chain(k=3)


def test_spin0_cluster_chain():
    bundle = spin0_cluster_chain(n_clusters=2, cluster_size=4, J_p=1.0, J_inter=0.5)
    candidate = bundle.primary
    report = check_conditions(candidate.model, candidate.state)
    assert report.verdict
    assert report.energy == pytest.approx(-4.0, abs=1e-10)
    assert candidate.energy == pytest.approx(-4.0)


def test_xyz_factorizing_angle():
    assert xyz_factorizing_angle(1.0, 0.6, 0.2) == pytest.approx(math.pi / 4)
    with pytest.raises(DegenerateAngleError):
        xyz_factorizing_angle(1.0, 1.0, 1.0)
    with pytest.raises(NoRealAngleError):
        xyz_factorizing_angle(1.0, 2.0, 0.0)


def test_full_factor_chain_rejects_inconsistent_directions():
    with pytest.raises(ConstraintViolation):
        full_factor_chain([(0.0, 0.0), (math.pi / 2, 0.0)], np.eye(3))


# ---------- registry and bisection ----------
def test_build_bundle_resolves_aliases():
    assert canonical_params("xyz_tetramer", {"JDx": 1.5, "Jz": 0.2}) == {"JD_x": 1.5, "J_z": 0.2}
    bundle = build_bundle("mg_xxz", {"pairs": 2, "JD": 0.25})
    assert bundle.predictions["n_pairs"] == 2
    with pytest.raises(ConfigError):
        build_bundle("no_such_family")
    with pytest.raises(ConfigError):
        build_bundle("mg_xxz", {"colour": 1})


def test_bisect_boundary():
    assert bisect_boundary(lambda x: x > 0.3, 0.0, 1.0, resolution=1e-9) == pytest.approx(0.3, abs=1e-9)
    with pytest.raises(ValueError):
        bisect_boundary(lambda x: True, 0.0, 1.0)
