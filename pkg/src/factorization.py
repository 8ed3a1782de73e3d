# -*- coding: utf-8 -*-
"""
factorization.py — exact-factorization conditions and their solution spaces

A product state ⊗_p|ψ_p⟩ is an eigenstate of
H = Σ_p b^p·S_p + ½ Σ_{p≠q} S_p·J^{pq}·S_q (+ internal cluster terms) iff

    C_p h^p = 0                    h^p = b^p + Σ_{q≠p} J^{pq}⟨S_q⟩
    C_p J^{pq} C_q^T = 0           for every coupled pair p ≠ q

(for clusters with internal terms the field condition is replaced by the
internal eigen-equation of the mean-field cluster Hamiltonian).
All residuals are divided by the norms entering them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from src.config import resolve
from src.covariance import (
    CovarianceMatrix,
    conserved_operators,
    covariance_matrix,
    expectation_values,
)
from src.hamiltonian import (
    ModelSpec,
    assemble,
    factor_hamiltonian,
    global_variance,
    internal_quadratic,
    mean_fields,
)
from src.logger import get_logger
from src.spin_algebra import cluster_operators
from src.states import ProductState, coherent_frame
from src.utils import (
    ConstraintViolation,
    DegenerateAngleError,
    DimensionError,
    NoRealAngleError,
    UnknownFamilyError,
    relative,
)

logger = get_logger(__name__)

GLOBAL_CHECK_CAP = 1 << 16
ANGLE_ATOL = 1e-12

# S^x = (S^+ + S^-)/2, S^y = (S^+ - S^-)/2i ; columns +, -, z
_PM_TRANSFORM = np.array([[0.5, 0.5, 0.0], [-0.5j, 0.5j, 0.0], [0.0, 0.0, 1.0]])
_PM_LABELS = ("+", "-", "z")


# ================================================
# REPORT TYPES
# ================================================
@dataclass(frozen=True)
class EffectiveField:
    factor: int
    vector: np.ndarray  # h^p
    bare: np.ndarray  # b^p

    @property
    def mean_field(self) -> np.ndarray:
        return self.vector - self.bare


@dataclass(frozen=True)
class FactorizationReport:
    field_residuals: tuple
    coupling_residuals: dict
    internal_residuals: dict
    conserved: tuple
    ranks: tuple
    factor_energies: tuple
    verdict: bool
    energy: Optional[float]
    tolerance: float
    global_residual: Optional[float] = None
    notes: tuple = ()

    @property
    def max_residual(self) -> float:
        values = list(self.field_residuals) + list(self.coupling_residuals.values()) \
            + list(self.internal_residuals.values())
        return max(values, default=0.0)


@dataclass(frozen=True)
class CouplingSpaceBasis:
    """
    Kernel of C_p ⊗ C_q acting on J^{pq} (row-major vec). Every solution reads
    J = N_p K_left + K_right N_q^T with N the nullspace columns.
    """

    pair: tuple
    basis: np.ndarray  # rows = orthonormal vectors of length d_p d_q
    shape: tuple
    null_p: np.ndarray
    null_q: np.ndarray
    expected_dimension: int
    direct_dimension: int
    real_basis: np.ndarray  # rows = real orthonormal solutions

    @property
    def dimension(self) -> int:
        return self.basis.shape[0]

    def compose(self, k_left: np.ndarray, k_right: np.ndarray) -> np.ndarray:
        """J = N_p K_left + K_right N_q^T with K_left (n_p, d_q), K_right (d_p, n_q)."""
        k_left = np.asarray(k_left, dtype=complex).reshape(self.null_p.shape[1], self.shape[1])
        k_right = np.asarray(k_right, dtype=complex).reshape(self.shape[0], self.null_q.shape[1])
        return self.null_p @ k_left + k_right @ self.null_q.T

    def matrices(self, real: bool = False) -> list:
        rows = self.real_basis if real else self.basis
        return [row.reshape(self.shape) for row in rows]


@dataclass(frozen=True)
class FieldSpace:
    """Admissible fields of one factor: b^p = Σ e_α n^α - Σ_q J^{pq}⟨S_q⟩."""

    factor: int
    directions: np.ndarray  # columns n^α
    real_directions: np.ndarray  # columns of the real solution space
    mean_field: np.ndarray
    current: np.ndarray

    @property
    def dimension(self) -> int:
        return self.real_directions.shape[1]

    def field_for(self, weights: Sequence[float]) -> np.ndarray:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (self.dimension,):
            raise DimensionError(f"expected {self.dimension} weights, got {weights.shape}")
        return self.real_directions @ weights - self.mean_field


@dataclass(frozen=True)
class DimerCheck:
    residuals: np.ndarray  # 3x3
    norm: float
    relative_residual: float
    j_pair: Optional[float] = None
    antisymmetric: float = 0.0
    notes: tuple = ()


@dataclass(frozen=True)
class ClusterCheck:
    max_quadruple_residual: float
    lsq_residual: float
    relative_residual: float
    kernel_residual: Optional[float] = None


@dataclass(frozen=True)
class GeneralizedSingletResiduals:
    raw: dict  # (μ, ν) in {+,-,z}² -> k_p^μ·J̃_{μν}·k_q^ν
    f1: dict
    zz: complex
    f2: dict
    max_residual: float
    relative_residual: float


@dataclass(frozen=True)
class InternalSolution:
    family: str
    field_constraints: dict
    coupling_constraints: dict
    delta_h: np.ndarray
    energy: float
    predicted_energy: Optional[float]
    internal_residual: float
    xi: Optional[float] = None
    notes: tuple = ()
    level_degeneracy: Optional[int] = None  # factor levels sharing the trial energy


@dataclass(frozen=True)
class FullFactorizationCheck:
    directions: tuple  # (θ, φ) per site
    field_residuals: tuple  # (n^{x'}·h, n^{y'}·h) per site
    coupling_residuals: dict  # (p, q) -> (xx - yy, xy + yx) relations
    verdict: bool


# ================================================
# GENERAL CONDITIONS
# ================================================
def factor_covariances(state: ProductState, tolerance: Optional[float] = None) -> tuple:
    """Complete operator sets and covariance matrices of every factor."""
    ops = [cluster_operators(f.factor_spins) for f in state.factors]
    covs = [covariance_matrix(f, o, tolerance) for f, o in zip(state.factors, ops)]
    return ops, covs


def effective_fields(model: ModelSpec, state: ProductState) -> list:
    return [EffectiveField(p, h, model.factor_fields(p))
            for p, h in enumerate(mean_fields(model, state))]


def coupling_residual(cov_p: CovarianceMatrix, cov_q: CovarianceMatrix, block: np.ndarray) -> float:
    """‖C_p J C_q^T‖ / (‖C_p‖ ‖C_q‖ ‖J‖)"""
    block = np.asarray(block, dtype=complex)
    raw = np.linalg.norm(cov_p.entries @ block @ cov_q.entries.T)
    return relative(raw, cov_p.norm * cov_q.norm * np.linalg.norm(block))


def field_residual(cov: CovarianceMatrix, h: np.ndarray) -> float:
    """‖C h‖ / (‖C‖ ‖h‖)"""
    return relative(np.linalg.norm(cov.entries @ h), cov.norm * np.linalg.norm(h))


def _global_check(model: ModelSpec, state: ProductState) -> tuple:
    hamiltonian = assemble(model, allow_non_hermitian=not model.hermitian)
    variance = global_variance(hamiltonian, state)
    scale = max(spla.norm(hamiltonian.matrix.csr, 1), 1e-300)
    return relative(math.sqrt(variance), scale), hamiltonian


def check_conditions(model: ModelSpec, state: ProductState, tolerance: Optional[float] = None,
                     global_check: Optional[bool] = None) -> FactorizationReport:
    """Residuals of the field and coupling conditions, with a verdict and the energy."""
    tolerance = resolve(tolerance, "verdict_tolerance")
    ops, covs = factor_covariances(state)
    fields = mean_fields(model, state)  # validates the model/state match
    notes = []

    field_res, internal_res, factor_energies = [], {}, []
    for p, (f, o, cov) in enumerate(zip(state.factors, ops, covs)):
        h = fields[p]
        if model.has_internal_terms(p):
            internal = internal_quadratic(model, state, p, tolerance)
            internal_res[p] = internal.internal_residual
            if internal.span_residual > tolerance:
                # folded field is undefined; the cluster eigen-equation decides alone
                notes.append(f"factor {p}: internal couplings outside the N K + K^T N^T span "
                             f"(residual {internal.span_residual:.2e})")
                field_res.append(internal.internal_residual)
            else:
                field_res.append(internal.field_residual)
        else:
            field_res.append(field_residual(cov, h))
        # own terms plus half of every inter-factor bond
        own = factor_hamiltonian(model, p, model.factor_fields(p) + 0.5 * (h - model.factor_fields(p)))
        factor_energies.append(float(np.real(f.expectation(own))))
        logger.debug(f"factor {p}: rank {cov.rank}/{cov.dim}, field residual {field_res[-1]:.2e}")

    coupling_res = {}
    for p, q in model.coupled_factor_pairs():
        coupling_res[(p, q)] = coupling_residual(covs[p], covs[q], model.factor_block(p, q))

    verdict = all(r < tolerance for r in field_res) \
        and all(r < tolerance for r in coupling_res.values()) \
        and all(r < tolerance for r in internal_res.values())

    do_global = global_check if global_check is not None else state.total_dim <= GLOBAL_CHECK_CAP
    global_residual = None
    if do_global:
        global_residual, _ = _global_check(model, state)
        if verdict and global_residual >= tolerance:
            logger.warning(f"conditions hold but global residual is {global_residual:.3e}")
            notes.append("global eigen-residual disagrees with the local conditions")
            verdict = False

    energy = None
    if verdict:
        energy = float(sum(factor_energies)) + model.energy_offset
    conserved = tuple(tuple(conserved_operators(f, o)) for f, o in zip(state.factors, ops))
    logger.info(f"verdict {verdict} on {len(state.factors)} factors"
                + (f", energy {energy:.12g}" if energy is not None else ""))
    return FactorizationReport(
        field_residuals=tuple(field_res),
        coupling_residuals=coupling_res,
        internal_residuals=internal_res,
        conserved=conserved,
        ranks=tuple(c.rank for c in covs),
        factor_energies=tuple(factor_energies),
        verdict=bool(verdict),
        energy=energy,
        tolerance=tolerance,
        global_residual=global_residual,
        notes=tuple(notes),
    )


# ================================================
# SOLUTION SPACES
# ================================================
def _real_solutions(projector: np.ndarray) -> np.ndarray:
    """Orthonormal real x with P x = 0."""
    stacked = np.vstack([projector.real, projector.imag])
    return sla.null_space(stacked, rcond=1e-10)


def coupling_space_basis(cov_p: CovarianceMatrix, cov_q: CovarianceMatrix,
                         pair: tuple = (0, 1)) -> CouplingSpaceBasis:
    d_p, d_q = cov_p.dim, cov_q.dim
    null_p, null_q = cov_p.null_vectors, cov_q.null_vectors
    generators = []
    for alpha in range(null_p.shape[1]):
        for nu in range(d_q):
            generators.append(np.kron(null_p[:, alpha], np.eye(d_q)[nu]))
    for beta in range(null_q.shape[1]):
        for mu in range(d_p):
            generators.append(np.kron(np.eye(d_p)[mu], null_q[:, beta]))
    if generators:
        basis = sla.orth(np.stack(generators, axis=1), rcond=1e-10).T
    else:
        basis = np.zeros((0, d_p * d_q), dtype=complex)

    expected = d_p * d_q - cov_p.rank * cov_q.rank
    direct = sla.null_space(np.kron(cov_p.entries, cov_q.entries),
                            rcond=max(cov_p.tolerance, cov_q.tolerance)).shape[1]
    if basis.shape[0] != expected or direct != expected:
        logger.warning(f"pair {pair}: coupling space dimension {basis.shape[0]}, expected "
                       f"{expected}, direct kernel {direct}")

    real = _real_solutions(np.kron(cov_p.range_projector, cov_q.range_projector)).T
    return CouplingSpaceBasis(pair=tuple(pair), basis=basis, shape=(d_p, d_q), null_p=null_p,
                              null_q=null_q, expected_dimension=expected,
                              direct_dimension=direct, real_basis=real)


def solve_fields(cov: CovarianceMatrix, model: ModelSpec, state: ProductState, p: int) -> FieldSpace:
    """Admissible b^p given the couplings and the other factors."""
    h = mean_fields(model, state)[p]
    bare = model.factor_fields(p)
    directions = cov.null_vectors
    if directions.shape[1] == 0:
        logger.info(f"factor {p} has no conserved linear operator; only b^p = -mean field works")
    return FieldSpace(factor=p, directions=directions,
                      real_directions=_real_solutions(cov.range_projector),
                      mean_field=h - bare, current=bare)


def solve_all_fields(model: ModelSpec, state: ProductState) -> list:
    _, covs = factor_covariances(state)
    return [solve_fields(cov, model, state, p) for p, cov in enumerate(covs)]


# ================================================
# SINGLET DIMERS AND CLUSTERS
# ================================================
def _blocks(matrix: np.ndarray, rows: int, cols: int) -> list:
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.shape != (3 * rows, 3 * cols):
        raise DimensionError(f"coupling block of shape {matrix.shape}, need {(3 * rows, 3 * cols)}")
    return [[matrix[3 * a:3 * a + 3, 3 * b:3 * b + 3] for b in range(cols)] for a in range(rows)]


def singlet_dimer_check(block: np.ndarray, internal: bool = False,
                        spin: Optional[float] = None) -> DimerCheck:
    """
    Inter-pair: J^{11} + J^{22} - J^{12} - J^{21} = 0 (nine entries).
    Internal: J^{12} symmetric and J^{12} - ½(J^{11} + J^{22}) = J^p·1.
    For spin 1/2 only the antisymmetric part of J^{12} matters and J^p = tr J^{12}/3.
    """
    b = _blocks(block, 2, 2)
    scale = float(np.linalg.norm(block))
    if not internal:
        res = b[0][0] + b[1][1] - b[0][1] - b[1][0]
        return DimerCheck(residuals=res, norm=float(np.linalg.norm(res)),
                          relative_residual=relative(np.linalg.norm(res), scale))

    j12, j11, j22 = b[0][1], b[0][0], b[1][1]
    anti = (j12 - j12.T) / 2
    notes = []
    if spin is not None and float(spin) == 0.5:
        j_pair = float(np.real(np.trace(j12))) / 3
        res = anti
        notes.append("spin 1/2: J^p = tr(J^12)/3, symmetric part of J^12 unconstrained")
    else:
        offset = (j12 + j12.T) / 2 - (j11 + j22) / 2
        j_pair = float(np.real(np.trace(offset))) / 3
        res = offset - j_pair * np.eye(3) + anti
    return DimerCheck(residuals=res, norm=float(np.linalg.norm(res)),
                      relative_residual=relative(np.linalg.norm(res), scale), j_pair=j_pair,
                      antisymmetric=float(np.linalg.norm(anti)), notes=tuple(notes))


def cluster_check(block: np.ndarray, sizes: tuple, cov_p: Optional[CovarianceMatrix] = None,
                  cov_q: Optional[CovarianceMatrix] = None) -> ClusterCheck:
    """
    J^{ij} + J^{kl} - J^{il} - J^{kj} over all index quadruples, and the
    least-squares distance of J to the J^{ij} = K^{i} + K^{j} form. With
    covariances given the exact kernel residual is reported alongside.
    """
    n_p, n_q = (int(n) for n in sizes)
    if n_p < 2 or n_q < 2:
        raise ValueError("cluster check needs clusters of at least two sites")
    b = _blocks(block, n_p, n_q)
    worst = 0.0
    for i in range(n_p):
        for k in range(n_p):
            for j in range(n_q):
                for m in range(n_q):
                    worst = max(worst, float(np.linalg.norm(b[i][j] + b[k][m] - b[i][m] - b[k][j])))

    # J^{ij} ≈ A_i + B_j, solved entrywise
    design = np.zeros((n_p * n_q, n_p + n_q))
    for i in range(n_p):
        for j in range(n_q):
            design[i * n_q + j, i] = design[i * n_q + j, n_p + j] = 1.0
    stacked = np.stack([b[i][j].ravel() for i in range(n_p) for j in range(n_q)])
    coeffs = np.linalg.lstsq(design, stacked, rcond=None)[0]
    lsq = float(np.linalg.norm(design @ coeffs - stacked))

    kernel = None
    if cov_p is not None and cov_q is not None:
        kernel = coupling_residual(cov_p, cov_q, block)
    scale = float(np.linalg.norm(block))
    return ClusterCheck(max_quadruple_residual=worst, lsq_residual=lsq,
                        relative_residual=relative(lsq, scale), kernel_residual=kernel)


# ================================================
# GENERALIZED SINGLETS
# ================================================
def _check_angle(xi: float) -> float:
    xi = float(xi)
    if not -ANGLE_ATOL <= xi <= math.pi + ANGLE_ATOL:
        raise ValueError(f"xi must lie in [0, pi], got {xi}")
    if abs(xi) <= ANGLE_ATOL or abs(xi - math.pi) <= ANGLE_ATOL:
        raise DegenerateAngleError(f"xi = {xi} is a product state; use the full-factorization check")
    return xi


def _parity_flip(block: np.ndarray, parity_p: int, parity_q: int) -> np.ndarray:
    """Rotate spin 2 of an x-rotated partner back to the |m, -m⟩ frame."""
    block = np.array(block, dtype=complex)
    if parity_p == 1:
        block[4:6, :] *= -1
    if parity_q == 1:
        block[:, 4:6] *= -1
    return block


def pm_components(coupling: np.ndarray) -> np.ndarray:
    """J̃ = T^T J T, so S·J·S' = Σ J̃_{ρσ} S^ρ S'^σ over (+, -, z)."""
    return _PM_TRANSFORM.T @ np.asarray(coupling, dtype=complex) @ _PM_TRANSFORM


def _range_vectors(xi: float) -> dict:
    a = xi / 2
    return {"+": np.array([math.sin(a), -math.cos(a)]),
            "-": np.array([math.cos(a), -math.sin(a)]),
            "z": np.array([1.0, -1.0])}


def generalized_singlet_constraints(block: np.ndarray, xi_p: float, xi_q: float,
                                    parities: tuple = (-1, -1),
                                    tolerance: Optional[float] = None) -> GeneralizedSingletResiduals:
    """
    Residuals of (C_p ⊗ C_q) J = 0 between two generalized-singlet pairs,
    written with D^± = (J^{11} ± J^{22})/2 and E^± = (J^{12} ± J^{21})/2 of
    each (+,-,z) component.
    """
    xi_p, xi_q = _check_angle(xi_p), _check_angle(xi_q)
    block = _parity_flip(block, *parities)
    b = _blocks(block, 2, 2)
    tilde = [[pm_components(b[a][c]) for c in range(2)] for a in range(2)]
    kp, kq = _range_vectors(xi_p), _range_vectors(xi_q)

    raw = {}
    for m, mu in enumerate(_PM_LABELS):
        for n, nu in enumerate(_PM_LABELS):
            sites = np.array([[tilde[a][c][m, n] for c in range(2)] for a in range(2)])
            raw[(mu, nu)] = complex(kp[mu] @ sites @ kq[nu])

    def d_e(m, n):
        j = np.array([[tilde[a][c][m, n] for c in range(2)] for a in range(2)])
        return ((j[0, 0] + j[1, 1]) / 2, (j[0, 0] - j[1, 1]) / 2,
                (j[0, 1] + j[1, 0]) / 2, (j[0, 1] - j[1, 0]) / 2)

    s_sum, s_diff = (xi_q + xi_p) / 2, (xi_q - xi_p) / 2
    dp_pm, dm_pm, ep_pm, em_pm = d_e(0, 1)
    dp_pp, dm_pp, ep_pp, em_pp = d_e(0, 0)
    dp_zz, _, ep_zz, _ = d_e(2, 2)
    f1 = {
        "+-upper": complex(math.sin(s_sum) * dp_pm - math.cos(s_diff) * ep_pm),
        "+-lower": complex(math.sin(s_diff) * dm_pm - math.cos(s_sum) * em_pm),
        "++upper": complex(math.cos(s_diff) * dp_pp - math.sin(s_sum) * ep_pp),
        "++lower": complex(math.cos(s_sum) * dm_pp - math.sin(s_diff) * em_pp),
    }
    zz = complex(dp_zz - ep_zz)

    f2 = {}
    if abs(math.sin(s_sum) * math.cos(s_diff)) > ANGLE_ATOL:
        f2["upper"] = complex(dp_pp * dp_pm - ep_pp * ep_pm)
    if abs(math.sin(s_diff) * math.cos(s_sum)) > ANGLE_ATOL:
        f2["lower"] = complex(dm_pp * dm_pm - em_pp * em_pm)

    worst = max(abs(v) for v in raw.values())
    return GeneralizedSingletResiduals(raw=raw, f1=f1, zz=zz, f2=f2, max_residual=worst,
                                       relative_residual=relative(worst, float(np.linalg.norm(block))))


def singlet_ground_window(jx: float, jy: float, b: float) -> float:
    """
    J_z above which the spin-1/2 singlet is the ground state of
    S1·J·S2 + b(S1z + S2z) with J = diag(Jx, Jy, Jz) (Jx + Jy > 0 assumed).
    """
    return 0.5 * math.hypot(4 * b, jx - jy) - (jx + jy) / 2


# ================================================
# INTERNAL SOLUTIONS
# ================================================
def _pair_sites(model: ModelSpec, p: int) -> tuple:
    group = model.clusters[p]
    if len(group) != 2:
        raise DimensionError(f"factor {p} is not a pair")
    i, j = group
    if model.spins[i] != model.spins[j]:
        raise DimensionError(f"pair {p} mixes spins {model.spins[i]} and {model.spins[j]}")
    return i, j


def _family_param(model: ModelSpec, key: str, p: int, default=None):
    value = model.params.get(key, default)
    if isinstance(value, (list, tuple)):
        return value[p]
    return value


def _spin0_pair(model, state, p, h, notes):
    i, j = _pair_sites(model, p)
    s = float(model.spins[i])
    block = model.factor_block(p, p)
    check = singlet_dimer_check(block, internal=True, spin=s)
    notes.extend(check.notes)
    fields = {"b2-b1": float(np.linalg.norm(h[3:6] - h[0:3]))}
    couplings = {"singlet": check.norm, "antisymmetric": check.antisymmetric}
    return fields, couplings, -s * (s + 1) * check.j_pair, None


def _gs_pair(model, state, p, h, notes, family):
    i, j = _pair_sites(model, p)
    s = float(model.spins[i])
    parity = int(_family_param(model, "parity", p, -1))
    tagged = _family_param(model, "xi", p)
    j12 = model.factor_block(p, p)[0:3, 3:6]
    jx, jy, jz = (float(np.real(j12[k, k])) for k in range(3))
    b1, b2 = float(np.real(h[2])), float(np.real(h[5]))
    if parity == 1:
        # x-rotated partner maps onto the |m,-m⟩ formulas
        jy, jz, b2 = -jy, -jz, -b2

    couplings = {"offdiag": float(np.linalg.norm(j12 - np.diag(np.diag(j12))))}
    fields = {"transverse": float(np.linalg.norm(np.concatenate([h[0:2], h[3:5]])))}
    if s == 0.5:
        jxy = (jx + jy) / 2
        if jxy == 0:
            raise DegenerateAngleError(f"pair {p}: no transverse coupling, state is a product")
        if jxy < 0:
            raise NoRealAngleError(f"pair {p}: (Jx + Jy)/2 = {jxy:.6g} < 0 gives xi outside [0, pi]")
        xi = float(tagged) if tagged is not None else math.atan2(jxy, b2 - b1)
        fields["b2-b1"] = abs((b2 - b1) - jxy / math.tan(xi))
        energy = -0.25 * ((jx + jy) / math.sin(xi) + jz)
    else:
        if family == "gs_xyz":
            raise ConstraintViolation("XYZ pair formulas only hold for spin 1/2")
        if jz == 0:
            raise DegenerateAngleError(f"pair {p}: J_z = 0")
        ratio = jx / jz
        if ratio < 0 or ratio > 1:
            raise NoRealAngleError(f"pair {p}: sin xi = Jx/Jz = {ratio:.6g} outside [0, 1]")
        sign = math.copysign(1.0, jz)
        xi = float(tagged) if tagged is not None else math.atan2(sign * jx, sign * (b2 - b1))
        couplings["Jx-Jy"] = abs(jx - jy)
        couplings["Jx-Jz sin xi"] = abs(jx - jz * math.sin(xi))
        fields["b2-b1"] = abs((b2 - b1) - jz * math.cos(xi))
        energy = -s * (s + 1) * jz
    return fields, couplings, energy, xi


def _spin0_cluster(model, state, p, h, notes):
    group = model.clusters[p]
    n = len(group)
    if n < 2 or n % 2:
        raise DimensionError(f"spin-0 cluster {p} needs an even number of sites")
    s = float(model.spins[group[0]])
    half = n // 2
    block = model.factor_block(p, p)
    b = _blocks(block, n, n)
    inter = [b[a][c] for a in range(half) for c in range(half, n)]
    j_p = float(np.real(np.trace(inter[0]))) / 3
    inter_res = max(float(np.linalg.norm(m - j_p * np.eye(3))) for m in inter)

    def intra(lo, hi):
        mats = [b[a][c] for a in range(lo, hi) for c in range(lo, hi) if a < c]
        if not mats:
            return 0.0, 0.0
        j = float(np.real(np.trace(mats[0]))) / 3
        return j, max(float(np.linalg.norm(m - j * np.eye(3))) for m in mats)

    j_a, res_a = intra(0, half)
    j_b, res_b = intra(half, n)
    self_res = max(float(np.linalg.norm(b[a][a] - np.trace(b[a][a]) / 3 * np.eye(3)))
                   for a in range(n))
    big_s = half * s
    pairs_energy = (big_s * (big_s + 1) - half * s * (s + 1)) / 2
    self_energy = sum(float(np.real(np.trace(b[a][a]))) / 3 * s * (s + 1) / 2 for a in range(n))
    energy = -big_s * (big_s + 1) * j_p + (j_a + j_b) * pairs_energy + self_energy
    spread = max(float(np.linalg.norm(h[3 * a:3 * a + 3] - h[0:3])) for a in range(n))
    return ({"nonuniform": spread},
            {"inter-half": inter_res, "intra-half": max(res_a, res_b), "self": self_res},
            energy, None)


FAMILIES = ("spin0_pair", "gs_xxz", "gs_xyz", "spin0_cluster")


def internal_solution(model: ModelSpec, state: ProductState, p: int,
                      family: Optional[str] = None) -> InternalSolution:
    """Closed-form constraints and energy of a tagged internal family, checked directly."""
    family = family or model.params.get("internal_family") or model.family_tag
    if family in ("mg_xxz",):
        family = "gs_xxz"
    elif family in ("xyz_ladder", "xyz_tetramer"):
        family = "gs_xyz"
    elif family in ("long_range_dimer",):
        family = "spin0_pair"
    if family not in FAMILIES:
        raise UnknownFamilyError(f"unrecognized internal family {family!r}")

    h = mean_fields(model, state)[p]
    notes = []
    if family == "spin0_pair":
        fields, couplings, predicted, xi = _spin0_pair(model, state, p, h, notes)
    elif family == "spin0_cluster":
        fields, couplings, predicted, xi = _spin0_cluster(model, state, p, h, notes)
    else:
        fields, couplings, predicted, xi = _gs_pair(model, state, p, h, notes, family)

    quad = internal_quadratic(model, state, p)
    h_mf = factor_hamiltonian(model, p, h)
    local = state.factors[p]
    energy = float(np.real(local.expectation(h_mf)))
    levels = np.linalg.eigvalsh((h_mf + h_mf.conj().T) / 2)
    delta = resolve(None, "degeneracy_delta") * max(levels[-1] - levels[0], 1.0)
    multiplicity = int(np.sum(np.abs(levels - energy) <= delta))
    if family == "spin0_cluster" and multiplicity > 1:
        notes.append(f"spin-0 level is {multiplicity}-fold degenerate inside the cluster")
    return InternalSolution(family=family, field_constraints=fields, coupling_constraints=couplings,
                            delta_h=quad.delta_h, energy=energy, predicted_energy=predicted,
                            internal_residual=quad.internal_residual, xi=xi, notes=tuple(notes),
                            level_degeneracy=multiplicity)


# ================================================
# FULL FACTORIZATION (SPIN-COHERENT PRODUCTS)
# ================================================
def _direction(mean: np.ndarray) -> tuple:
    m = np.real(mean)
    r = np.linalg.norm(m)
    if r == 0:
        raise ValueError("state has zero mean spin; not a coherent state")
    return math.acos(max(-1.0, min(1.0, m[2] / r))), math.atan2(m[1], m[0])


def full_factorization_check(model: ModelSpec, state: ProductState,
                             tolerance: Optional[float] = None) -> FullFactorizationCheck:
    """
    Rotated-frame conditions for a product of spin-coherent states:
    n^{x'}·h = n^{y'}·h = 0 per site and, per coupled pair,
    n^{x'}_p J n^{x'}_q = n^{y'}_p J n^{y'}_q and n^{x'}_p J n^{y'}_q = -n^{y'}_p J n^{x'}_q.
    """
    tolerance = resolve(tolerance, "verdict_tolerance")
    if any(len(g) != 1 for g in state.sites):
        raise DimensionError("full factorization needs single-site factors")
    fields = mean_fields(model, state)
    frames, directions = [], []
    for f in state.factors:
        theta, phi = _direction(expectation_values(f, cluster_operators(f.factor_spins)))
        directions.append((theta, phi))
        frames.append(coherent_frame(theta, phi))

    field_res = []
    for (nx, ny, _), h in zip(frames, fields):
        scale = max(np.linalg.norm(h), 1e-300)
        field_res.append((relative(abs(nx @ h), scale), relative(abs(ny @ h), scale)))

    coupling_res = {}
    for p, q in model.coupled_factor_pairs():
        j = model.factor_block(p, q)
        (xp, yp, _), (xq, yq, _) = frames[p], frames[q]
        scale = max(np.linalg.norm(j), 1e-300)
        coupling_res[(p, q)] = (relative(abs(xp @ j @ xq - yp @ j @ yq), scale),
                                relative(abs(xp @ j @ yq + yp @ j @ xq), scale))

    verdict = all(max(r) < tolerance for r in field_res) \
        and all(max(r) < tolerance for r in coupling_res.values())
    return FullFactorizationCheck(directions=tuple(directions), field_residuals=tuple(field_res),
                                  coupling_residuals=coupling_res, verdict=bool(verdict))
