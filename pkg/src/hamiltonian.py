# -*- coding: utf-8 -*-
"""
hamiltonian.py — model specifications and many-body Hamiltonians

H = Σ_i b^i·S_i + Σ_{i<j} S_i·J^{ij}·S_j + Σ_i ½ S_i·J^{ii}·S_i

Couplings are stored once per unordered site pair (i < j) oriented as
S_i·J^{ij}·S_j; self-edges (i, i) carry the ½ and must be symmetric.
Sites are grouped into factors (clusters); range weights r_pq rescale
every coupling between factors p and q.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from typing import Mapping, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from src.config import resolve
from src.covariance import covariance_matrix, expectation_values
from src.logger import get_logger
from src.spin_algebra import (
    AXES,
    SparseManyBodyOperator,
    cluster_operators,
    embed_product,
    spin_components,
    structure_constants,
)
from src.states import ProductState, coherent_frame
from src.utils import (
    DimensionError,
    NonHermitianError,
    NotConservedError,
    as_spin,
    relative,
)

logger = get_logger(__name__)

SYMMETRY_ATOL = 1e-12
HALF = Fraction(1, 2)
CLOSURE_TOL = 1e-10
PSD_ATOL = 1e-12


def _coupling_matrix(value) -> np.ndarray:
    arr = np.array(value, dtype=complex)
    if arr.shape == (3,):
        arr = np.diag(arr)
    if arr.shape != (3, 3):
        raise DimensionError(f"coupling must be 3x3 (or a diagonal 3-vector), got {arr.shape}")
    return arr


# ================================================
# MODEL SPEC
# ================================================
@dataclass(frozen=True, eq=False)
class QuadraticShift:
    """
    A quadratic form Σ S_i·M·S_j (i, j inside one factor) that the trial
    state diagonalizes. Internal couplings may absorb any multiple of it.
    """

    site_i: int
    site_j: int
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _coupling_matrix(self.matrix))


@dataclass(frozen=True, eq=False)
class ModelSpec:
    spins: tuple
    clusters: Optional[tuple] = None
    fields: Optional[np.ndarray] = None
    couplings: Mapping = field(default_factory=dict)
    range_weights: Mapping = field(default_factory=dict)
    family_tag: Optional[str] = None
    params: Mapping = field(default_factory=dict)
    shifts: tuple = ()
    energy_offset: float = 0.0
    hermitian: bool = True

    def __post_init__(self):
        spins = tuple(as_spin(s) for s in self.spins)
        n = len(spins)
        if n == 0:
            raise ValueError("model needs at least one site")
        object.__setattr__(self, "spins", spins)

        clusters = self.clusters
        if clusters is None:
            clusters = tuple((i,) for i in range(n))
        clusters = tuple(tuple(int(i) for i in group) for group in clusters)
        flat = sorted(i for group in clusters for i in group)
        if flat != list(range(n)) or any(not group for group in clusters):
            raise DimensionError(f"clusters {clusters} do not partition sites 0..{n - 1}")
        object.__setattr__(self, "clusters", clusters)

        fields = np.zeros((n, 3), dtype=complex) if self.fields is None \
            else np.array(self.fields, dtype=complex)
        if fields.shape != (n, 3):
            raise DimensionError(f"fields must have shape ({n}, 3), got {fields.shape}")
        fields.setflags(write=False)
        object.__setattr__(self, "fields", fields)

        couplings = {}
        for key, value in dict(self.couplings).items():
            i, j = (int(k) for k in key)
            if not (0 <= i < n and 0 <= j < n):
                raise DimensionError(f"coupling ({i}, {j}) outside sites 0..{n - 1}")
            mat = _coupling_matrix(value)
            if i > j:
                i, j, mat = j, i, mat.T
            if i == j and np.abs(mat - mat.T).max() > SYMMETRY_ATOL * max(1.0, np.abs(mat).max()):
                raise ValueError(f"self-coupling on site {i} must be symmetric")
            couplings[(i, j)] = couplings.get((i, j), 0) + mat
        for mat in couplings.values():
            mat.setflags(write=False)
        object.__setattr__(self, "couplings", dict(sorted(couplings.items())))

        weights = {}
        for key, value in dict(self.range_weights).items():
            p, q = sorted(int(k) for k in key)
            if p == q or not (0 <= p and q < len(clusters)):
                raise DimensionError(f"range weight key {key} is not a factor pair")
            if float(value) < 0:
                raise ValueError(f"range weight r_{p}{q} must be non-negative")
            weights[(p, q)] = float(value)
        object.__setattr__(self, "range_weights", weights)

        shifts = tuple(self.shifts)
        for shift in shifts:
            if self.factor_of(shift.site_i) != self.factor_of(shift.site_j):
                raise ValueError("a quadratic shift must act inside one factor")
        object.__setattr__(self, "shifts", shifts)
        object.__setattr__(self, "params", dict(self.params))

    # ---------- structure ----------
    @property
    def n_sites(self) -> int:
        return len(self.spins)

    @property
    def n_factors(self) -> int:
        return len(self.clusters)

    @property
    def site_dims(self) -> tuple:
        return tuple(int(2 * s + 1) for s in self.spins)

    @cached_property
    def _factor_lookup(self) -> dict:
        return {i: (p, a) for p, group in enumerate(self.clusters) for a, i in enumerate(group)}

    def factor_of(self, site: int) -> int:
        return self._factor_lookup[site][0]

    def factor_spins(self, p: int) -> tuple:
        return tuple(self.spins[i] for i in self.clusters[p])

    def range_weight(self, p: int, q: int) -> float:
        if p == q:
            return 1.0
        return self.range_weights.get((min(p, q), max(p, q)), 1.0)

    # ---------- couplings ----------
    def coupling(self, i: int, j: int) -> np.ndarray:
        """Bare J^{ij} oriented as S_i·J·S_j (zero when absent)."""
        if i <= j:
            return np.asarray(self.couplings.get((i, j), np.zeros((3, 3), dtype=complex)))
        return self.coupling(j, i).T

    def effective_coupling(self, i: int, j: int) -> np.ndarray:
        return self.range_weight(self.factor_of(i), self.factor_of(j)) * self.coupling(i, j)

    def effective_couplings(self) -> dict:
        """Every stored coupling with its range weight applied."""
        return {(i, j): self.effective_coupling(i, j) for (i, j) in self.couplings}

    def factor_block(self, p: int, q: int) -> np.ndarray:
        """
        J^{pq} over the factors' cluster operators (index 3·local site + axis).
        For p == q this is the symmetric internal matrix of ½ S_p·J^{pp}·S_p.
        """
        gp, gq = self.clusters[p], self.clusters[q]
        block = np.zeros((3 * len(gp), 3 * len(gq)), dtype=complex)
        for a, i in enumerate(gp):
            for b, j in enumerate(gq):
                if p == q and a == b:
                    block[3 * a:3 * a + 3, 3 * b:3 * b + 3] = self.coupling(i, i)
                elif i != j:
                    block[3 * a:3 * a + 3, 3 * b:3 * b + 3] = self.effective_coupling(i, j)
        return block

    def factor_fields(self, p: int) -> np.ndarray:
        return np.concatenate([self.fields[i] for i in self.clusters[p]])

    def has_internal_terms(self, p: int) -> bool:
        group = set(self.clusters[p])
        return any(i in group and j in group for (i, j) in self.couplings)

    def coupled_factor_pairs(self) -> list:
        """Sorted factor pairs (p < q) joined by at least one nonzero coupling."""
        pairs = set()
        for (i, j), mat in self.couplings.items():
            p, q = self.factor_of(i), self.factor_of(j)
            if p != q and np.any(mat != 0) and self.range_weight(p, q) != 0:
                pairs.add((min(p, q), max(p, q)))
        return sorted(pairs)

    # ---------- transformations ----------
    def baked(self) -> "ModelSpec":
        """Same Hamiltonian with range weights folded into the couplings."""
        if not self.range_weights:
            return self
        return replace(self, couplings=self.effective_couplings(), range_weights={})

    def with_clusters(self, clusters: Sequence[Sequence[int]]) -> "ModelSpec":
        """Regroup the sites into other factors (range weights are baked first)."""
        return replace(self.baked(), clusters=tuple(tuple(g) for g in clusters), shifts=())

    def _check_compatible(self, other: "ModelSpec") -> None:
        if (self.spins != other.spins or self.clusters != other.clusters
                or self.range_weights != other.range_weights):
            raise ValueError("models differ in sites, clusters or range weights")

    def combine(self, other: "ModelSpec", a: complex = 1.0, b: complex = 1.0) -> "ModelSpec":
        """a·self + b·other."""
        self._check_compatible(other)
        couplings = {key: a * mat for key, mat in self.couplings.items()}
        for key, mat in other.couplings.items():
            couplings[key] = couplings.get(key, 0) + b * mat
        hermitian = self.hermitian and other.hermitian and np.isreal(a) and np.isreal(b)
        return replace(
            self,
            fields=a * self.fields + b * other.fields,
            couplings=couplings,
            energy_offset=float(np.real(a * self.energy_offset + b * other.energy_offset)),
            family_tag=self.family_tag if self.family_tag == other.family_tag else None,
            shifts=self.shifts + tuple(s for s in other.shifts if s not in self.shifts),
            hermitian=bool(hermitian),
        )

    def scaled(self, factor: complex) -> "ModelSpec":
        return replace(
            self,
            fields=factor * self.fields,
            couplings={key: factor * mat for key, mat in self.couplings.items()},
            energy_offset=float(np.real(factor * self.energy_offset)),
            hermitian=bool(self.hermitian and np.isreal(factor)),
        )

    def __add__(self, other: "ModelSpec") -> "ModelSpec":
        return self.combine(other)

    def __mul__(self, factor: complex) -> "ModelSpec":
        return self.scaled(factor)

    __rmul__ = __mul__


# ================================================
# ASSEMBLED HAMILTONIANS
# ================================================
@dataclass(frozen=True)
class Term:
    """Provenance of one assembled contribution: coefficient·Π operators."""

    kind: str  # "field", "coupling", "self", "compatible"
    sites: tuple
    labels: tuple
    coefficient: complex
    matrix: Optional[SparseManyBodyOperator] = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class AssembledHamiltonian:
    matrix: SparseManyBodyOperator
    term_list: tuple
    energy_offset: float = 0.0
    predicted_energy: Optional[float] = None

    @property
    def total_dim(self) -> int:
        return self.matrix.total_dim

    def dot(self, vector: np.ndarray) -> np.ndarray:
        """H|v⟩ including the constant offset."""
        vector = np.asarray(vector, dtype=complex)
        return self.matrix.dot(vector) + self.energy_offset * vector

    def expectation(self, vector: np.ndarray) -> complex:
        vector = np.asarray(vector, dtype=complex)
        return complex(np.vdot(vector, self.dot(vector)) / np.vdot(vector, vector))

    def dense(self) -> np.ndarray:
        return self.matrix.to_dense() + self.energy_offset * np.eye(self.total_dim)


@dataclass(frozen=True)
class FactorLayout:
    """
    Maps factor-ordered Kronecker products onto the natural site order used
    by every full-space vector and matrix.
    """

    groups: tuple
    spins: tuple

    @classmethod
    def from_state(cls, state: ProductState) -> "FactorLayout":
        return cls(state.sites, state.site_spins)

    @classmethod
    def from_model(cls, model: ModelSpec) -> "FactorLayout":
        return cls(model.clusters, model.spins)

    @property
    def factor_dims(self) -> tuple:
        return tuple(int(np.prod([2 * self.spins[i] + 1 for i in g])) for g in self.groups)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.factor_dims))

    @cached_property
    def natural_order(self) -> bool:
        order = [i for g in self.groups for i in g]
        return order == sorted(order)

    @cached_property
    def perm(self) -> np.ndarray:
        """perm[k] = factor-order index of natural-order basis state k."""
        order = [i for g in self.groups for i in g]
        dims = [int(2 * self.spins[i] + 1) for i in order]
        return np.arange(self.total_dim).reshape(dims).transpose(np.argsort(order)).ravel()

    def embed(self, ops: Mapping[int, np.ndarray]) -> SparseManyBodyOperator:
        """Product of factor-space operators, returned in natural site order."""
        product = embed_product(ops, self.factor_dims)
        if self.natural_order:
            return product
        perm = self.perm
        natural = product.csr[perm, :][:, perm]
        return SparseManyBodyOperator(natural, tuple(int(2 * s + 1) for s in self.spins))


def _sum_terms(terms: Sequence[Term], dims: tuple, hermitian: bool) -> SparseManyBodyOperator:
    total = None
    for term in terms:
        contribution = term.matrix.csr * term.coefficient
        total = contribution if total is None else total + contribution
    if total is None:
        size = int(np.prod(dims))
        total = sp.csr_matrix((size, size), dtype=complex)
    return SparseManyBodyOperator(total, dims, hermitian=hermitian)


def assemble(model: ModelSpec, allow_non_hermitian: bool = False) -> AssembledHamiltonian:
    """Sparse many-body H of a ModelSpec in natural site order."""
    dims = model.site_dims
    comps = {s: spin_components(s) for s in set(model.spins)}
    terms = []

    for i in range(model.n_sites):
        for mu in range(3):
            b = model.fields[i, mu]
            if b != 0:
                op = embed_product({i: comps[model.spins[i]][mu]}, dims)
                terms.append(Term("field", (i,), (f"S{AXES[mu]}",), complex(b), op))

    for (i, j), mat in model.effective_couplings().items():
        for mu in range(3):
            for nu in range(3):
                c = mat[mu, nu]
                if c == 0:
                    continue
                si, sj = comps[model.spins[i]][mu], comps[model.spins[j]][nu]
                labels = (f"S{AXES[mu]}", f"S{AXES[nu]}")
                if i == j:
                    op = embed_product({i: si @ sj}, dims)
                    terms.append(Term("self", (i, i), labels, complex(c) / 2, op))
                else:
                    op = embed_product({i: si, j: sj}, dims)
                    terms.append(Term("coupling", (i, j), labels, complex(c), op))

    check = model.hermitian and not allow_non_hermitian
    matrix = _sum_terms(terms, dims, hermitian=check)
    logger.debug(f"assembled {len(terms)} terms on dimension {matrix.total_dim}")
    return AssembledHamiltonian(matrix=matrix, term_list=tuple(terms),
                                energy_offset=float(model.energy_offset))


def global_variance(hamiltonian: AssembledHamiltonian, state) -> float:
    """⟨H²⟩ - |⟨H⟩|² = ‖H|ψ⟩ - ⟨H⟩|ψ⟩‖² of a normalized state."""
    psi = state.vector() if isinstance(state, ProductState) else np.asarray(state, dtype=complex)
    if psi.shape != (hamiltonian.total_dim,):
        raise DimensionError(f"state of size {psi.size} for H of dimension {hamiltonian.total_dim}")
    h_psi = hamiltonian.matrix.dot(psi)
    shifted = h_psi - np.vdot(psi, h_psi) * psi
    return float(np.vdot(shifted, shifted).real)


# ================================================
# FACTOR-LEVEL PIECES
# ================================================
def factor_means(model: ModelSpec, state: ProductState) -> list:
    """⟨S_q⟩ over the cluster operators of every factor."""
    _check_model_state(model, state)
    return [expectation_values(f, cluster_operators(f.factor_spins)) for f in state.factors]


def mean_fields(model: ModelSpec, state: ProductState) -> list:
    """h^p = b^p + Σ_{q≠p} J^{pq}⟨S_q⟩ for every factor."""
    means = factor_means(model, state)
    result = []
    for p in range(model.n_factors):
        h = model.factor_fields(p).copy()
        for q in range(model.n_factors):
            if q != p:
                h = h + model.factor_block(p, q) @ means[q]
        result.append(h)
    return result


def _check_model_state(model: ModelSpec, state: ProductState) -> None:
    if state.sites != model.clusters:
        raise DimensionError(f"state factors {state.sites} do not match model clusters {model.clusters}")
    if state.site_spins != model.spins:
        raise DimensionError("state spins do not match model spins")


def factor_hamiltonian(model: ModelSpec, p: int, field_vector: Optional[np.ndarray] = None) -> np.ndarray:
    """Dense h·S_p + ½ S_p·J^{pp}·S_p on the factor space."""
    ops = cluster_operators(model.factor_spins(p))
    h = model.factor_fields(p) if field_vector is None else np.asarray(field_vector, dtype=complex)
    mats = ops.matrices
    internal = model.factor_block(p, p)
    quad = np.einsum("mn,mij,njk->ik", internal, mats, mats) / 2
    return np.tensordot(h, mats, axes=1) + quad


@dataclass(frozen=True)
class InternalQuadraticResult:
    delta_h: np.ndarray
    k_matrix: np.ndarray
    shift_coefficients: np.ndarray
    span_residual: float
    field_residual: float
    internal_residual: float
    energy: complex
    verdict: bool


def _internal_shift_patterns(model: ModelSpec, p: int) -> list:
    """Quadratic forms the trial state diagonalizes trivially, as (3N_p)² patterns."""
    group = model.clusters[p]
    size = 3 * len(group)
    patterns = []
    for a, i in enumerate(group):
        if model.spins[i] == HALF:
            # (S^μ)² and S^μS^ν + S^νS^μ are constants for spin 1/2
            for mu in range(3):
                for nu in range(mu, 3):
                    pat = np.zeros((size, size), dtype=complex)
                    pat[3 * a + mu, 3 * a + nu] = pat[3 * a + nu, 3 * a + mu] = 1.0
                    patterns.append(pat)
        else:
            pat = np.zeros((size, size), dtype=complex)
            pat[3 * a:3 * a + 3, 3 * a:3 * a + 3] = np.eye(3)
            patterns.append(pat)
    local = {i: a for a, i in enumerate(group)}
    for shift in model.shifts:
        if shift.site_i not in local:
            continue
        a, b = local[shift.site_i], local[shift.site_j]
        pat = np.zeros((size, size), dtype=complex)
        pat[3 * a:3 * a + 3, 3 * b:3 * b + 3] += shift.matrix
        pat[3 * b:3 * b + 3, 3 * a:3 * a + 3] += shift.matrix.T
        if a == b:
            pat /= 2
        patterns.append(pat)
    return patterns


def internal_quadratic(model: ModelSpec, state: ProductState, p: int,
                       tolerance: Optional[float] = None) -> InternalQuadraticResult:
    """
    Write J^{pp} = N K + K^T N^T (up to trivially conserved shifts), with N the
    nullspace of C_p, then fold the commutator part into the field:
    Δh_μ = ½ Σ f^{μ'ν'}_μ N_{μ'α} K_{αν'}.
    """
    tolerance = resolve(tolerance, "verdict_tolerance")
    _check_model_state(model, state)
    local = state.factors[p]
    ops = cluster_operators(local.factor_spins)
    consts = structure_constants(ops)
    if consts.residual_norm > CLOSURE_TOL:
        raise ValueError(f"operator set not closed under commutation "
                         f"(residual {consts.residual_norm:.3e})")

    cov = covariance_matrix(local, ops)
    null = cov.null_vectors
    d, n_null = len(ops), null.shape[1]
    internal = model.factor_block(p, p)
    h = mean_fields(model, state)[p]

    columns = []
    for alpha in range(n_null):
        for nu in range(d):
            k = np.zeros((n_null, d), dtype=complex)
            k[alpha, nu] = 1.0
            columns.append((null @ k + (null @ k).T).ravel())
    patterns = _internal_shift_patterns(model, p)
    columns.extend(pat.ravel() for pat in patterns)

    target = internal.ravel()
    scale = max(np.linalg.norm(target), 1e-300)
    if columns and np.linalg.norm(target) > 0:
        system = np.stack(columns, axis=1)
        solution = np.linalg.lstsq(system, target, rcond=None)[0]
        span_residual = relative(np.linalg.norm(system @ solution - target), scale)
    else:
        solution = np.zeros(len(columns), dtype=complex)
        span_residual = 0.0 if np.linalg.norm(target) == 0 else 1.0

    k_matrix = solution[:n_null * d].reshape(n_null, d)
    shift_coeffs = solution[n_null * d:]
    delta_h = 0.5 * np.einsum("uvr,ua,av->r", consts.table, null, k_matrix)

    psi = local.amplitudes
    lam = np.array([np.vdot(psi, ops.combination(null[:, a]) @ psi) for a in range(n_null)])
    vector = h + delta_h + lam @ k_matrix
    field_residual = relative(np.linalg.norm(cov.entries @ vector),
                              cov.norm * max(np.linalg.norm(h), np.linalg.norm(internal), 1e-300))

    h_mf = factor_hamiltonian(model, p, h)
    energy = complex(np.vdot(psi, h_mf @ psi))
    internal_residual = relative(np.linalg.norm(h_mf @ psi - energy * psi), np.linalg.norm(h_mf, 2))
    verdict = bool(internal_residual < tolerance)
    logger.debug(f"factor {p}: span residual {span_residual:.2e}, internal residual "
                 f"{internal_residual:.2e}")
    return InternalQuadraticResult(
        delta_h=delta_h,
        k_matrix=k_matrix,
        shift_coefficients=shift_coeffs,
        span_residual=span_residual,
        field_residual=field_residual,
        internal_residual=internal_residual,
        energy=energy,
        verdict=verdict,
    )


# ================================================
# COMPATIBLE HAMILTONIANS
# ================================================
@dataclass(frozen=True)
class FieldTerm:
    """e·Q on one factor, Q = Σ coefficients_μ S^μ over the factor's cluster operators."""

    factor: int
    coefficients: np.ndarray
    weight: float


@dataclass(frozen=True)
class PairTerm:
    """c·Q̃_p B_q + h.c. with Q_p conserved on factor p and B_q arbitrary on factor q."""

    factor_p: int
    conserved: np.ndarray
    factor_q: int
    partner: np.ndarray
    coefficient: complex = 1.0


@dataclass(frozen=True)
class CompatibleCouplingSpec:
    """
    Hamiltonian built from conserved local operators:
    Σ e·Q + Σ (c Q̃_p B_q + h.c.) + ½ Σ_ab K_ab Q̃_b† Q̃_a + constant.
    `quadratic_operators` lists (factor, coefficients) pairs indexing K.
    """

    field_terms: tuple = ()
    pair_terms: tuple = ()
    quadratic_operators: tuple = ()
    quadratic_matrix: Optional[np.ndarray] = None
    psd: bool = False
    constant: float = 0.0

    def __post_init__(self):
        n = len(self.quadratic_operators)
        if self.quadratic_matrix is None:
            if n:
                raise ValueError("quadratic operators given without a K matrix")
            return
        k = np.asarray(self.quadratic_matrix, dtype=complex)
        if k.shape != (n, n):
            raise DimensionError(f"K must be {n}x{n}, got {k.shape}")
        if np.abs(k - k.conj().T).max(initial=0.0) > PSD_ATOL * max(1.0, np.abs(k).max()):
            raise NonHermitianError("K matrix must be Hermitian")
        if self.psd:
            low = np.linalg.eigvalsh((k + k.conj().T) / 2).min()
            if low < -PSD_ATOL:
                raise ValueError(f"K is not positive semidefinite (eigenvalue {low:.3e})")
        object.__setattr__(self, "quadratic_matrix", k)


def _conserved_eigenvalue(state: ProductState, p: int, coefficients: np.ndarray,
                          tolerance: float) -> tuple:
    local = state.factors[p]
    ops = cluster_operators(local.factor_spins)
    q = ops.combination(coefficients)
    psi = local.amplitudes
    lam = complex(np.vdot(psi, q @ psi))
    residual = float(np.linalg.norm(q @ psi - lam * psi))
    if residual > tolerance:
        raise NotConservedError(f"operator on factor {p} is not conserved (residual {residual:.3e})")
    return q, lam


def _pair_operators(state: ProductState, term: "PairTerm", tolerance: float) -> tuple:
    """
    (Q̃_p, λ, B_q) of a pair term. The adjoint half c* Q̃_p† B_q† must also
    annihilate the product, so Q̃_p† or B_q† has to kill its factor.
    """
    if term.factor_p == term.factor_q:
        raise ValueError("pair terms need two different factors")
    q, lam = _conserved_eigenvalue(state, term.factor_p, term.conserved, tolerance)
    q_tilde = q - lam * np.eye(q.shape[0])
    b = cluster_operators(state.factors[term.factor_q].factor_spins).combination(term.partner)
    left = float(np.linalg.norm(q_tilde.conj().T @ state.factors[term.factor_p].amplitudes))
    right = float(np.linalg.norm(b.conj().T @ state.factors[term.factor_q].amplitudes))
    if left > tolerance and right > tolerance:
        raise NonHermitianError(
            f"pair term on factors ({term.factor_p}, {term.factor_q}): the adjoint of the conserved "
            f"operator ({left:.3e}) and of the partner ({right:.3e}) both leave the state; "
            f"pair the non-Hermitian operator with its conjugate partner")
    return q_tilde, lam, b


def compatible_hamiltonian(spec: CompatibleCouplingSpec, state: ProductState,
                           tolerance: Optional[float] = None) -> AssembledHamiltonian:
    """Many-body Hamiltonian having the product state as eigenvector by construction."""
    tolerance = resolve(tolerance, "conserved_tolerance")
    layout = FactorLayout.from_state(state)
    terms = []
    predicted = float(spec.constant)
    offset = float(spec.constant)

    for term in spec.field_terms:
        q, lam = _conserved_eigenvalue(state, term.factor, term.coefficients, tolerance)
        if term.weight != 0:
            if not np.isreal(term.weight) or np.abs(q - q.conj().T).max() > SYMMETRY_ATOL:
                raise NonHermitianError("nonzero field weight on a non-Hermitian conserved operator")
            predicted += float(np.real(term.weight * lam))
        terms.append(Term("compatible", (term.factor,), ("Q",), complex(term.weight),
                          layout.embed({term.factor: q})))

    for term in spec.pair_terms:
        q_tilde, _, b = _pair_operators(state, term, tolerance)
        c = complex(term.coefficient)
        pieces = {term.factor_p: q_tilde, term.factor_q: b}
        adjoint = {term.factor_p: q_tilde.conj().T, term.factor_q: b.conj().T}
        sites = (term.factor_p, term.factor_q)
        terms.append(Term("compatible", sites, ("Q~", "B"), c, layout.embed(pieces)))
        terms.append(Term("compatible", sites, ("Q~+", "B+"), c.conjugate(), layout.embed(adjoint)))

    if spec.quadratic_operators:
        k = spec.quadratic_matrix
        resolved = [(p, *_conserved_eigenvalue(state, p, coeffs, tolerance))
                    for p, coeffs in spec.quadratic_operators]
        for a, (pa, qa, la) in enumerate(resolved):
            for b_idx, (pb, qb, lb) in enumerate(resolved):
                kab = k[a, b_idx]
                if kab == 0:
                    continue
                qa_t = qa - la * np.eye(qa.shape[0])
                qb_dag = (qb - lb * np.eye(qb.shape[0])).conj().T
                if pa == pb:
                    op = layout.embed({pa: qb_dag @ qa_t})
                else:
                    op = layout.embed({pa: qa_t, pb: qb_dag})
                terms.append(Term("compatible", (pb, pa), (f"Q{b_idx}~+", f"Q{a}~"), kab / 2, op))

    dims = tuple(int(2 * s + 1) for s in state.site_spins)
    matrix = _sum_terms(terms, dims, hermitian=True)
    hamiltonian = AssembledHamiltonian(matrix=matrix, term_list=tuple(terms), energy_offset=offset,
                                       predicted_energy=predicted)
    psi = state.vector()
    h_psi = hamiltonian.dot(psi)
    residual = relative(float(np.linalg.norm(h_psi - predicted * psi)), max(1.0, float(np.linalg.norm(h_psi))))
    if residual > resolve(None, "verdict_tolerance"):
        raise NotConservedError(f"product state is not an eigenvector of the compatible Hamiltonian "
                                f"(residual {residual:.3e})")
    return hamiltonian


def _linear_part(quad: np.ndarray, ops) -> tuple:
    """Split Σ M_{μν} S^μ S^ν into its symmetric form plus a field from the commutators."""
    sym = (quad + quad.T) / 2
    anti = (quad - quad.T) / 2
    consts = structure_constants(ops)
    field_part = 0.5 * np.einsum("uv,uvr->r", anti, consts.table)
    constant = 0.5 * np.einsum("uv,uv->", anti, consts.identity_part)
    return sym, field_part, constant


def compatible_to_model(spec: CompatibleCouplingSpec, state: ProductState) -> ModelSpec:
    """Re-expand a compatible Hamiltonian into fields and couplings over the spin operators."""
    n_f = len(state.factors)
    sizes = [3 * len(g) for g in state.sites]
    lam_of = {}

    def eigenvalue(p, coeffs):
        key = (p, np.asarray(coeffs, dtype=complex).tobytes())
        if key not in lam_of:
            lam_of[key] = _conserved_eigenvalue(state, p, coeffs, resolve(None, "conserved_tolerance"))[1]
        return lam_of[key]

    fields = [np.zeros(s, dtype=complex) for s in sizes]
    blocks = {}
    internal = [np.zeros((s, s), dtype=complex) for s in sizes]
    constant = complex(spec.constant)

    def add_block(p, q, mat):
        if p > q:
            p, q, mat = q, p, mat.T
        blocks[(p, q)] = blocks.get((p, q), 0) + mat

    for term in spec.field_terms:
        fields[term.factor] += term.weight * np.asarray(term.coefficients)

    for term in spec.pair_terms:
        _, lam, _ = _pair_operators(state, term, resolve(None, "conserved_tolerance"))
        n, m = np.asarray(term.conserved), np.asarray(term.partner)
        c = complex(term.coefficient)
        add_block(term.factor_p, term.factor_q, c * np.outer(n, m) + np.conj(c * np.outer(n, m)))
        fields[term.factor_q] += -(c * lam * m + np.conj(c * lam * m))

    if spec.quadratic_operators:
        k = spec.quadratic_matrix
        items = [(p, np.asarray(c, dtype=complex), eigenvalue(p, c)) for p, c in spec.quadratic_operators]
        for a, (pa, na, la) in enumerate(items):
            for b, (pb, nb, lb) in enumerate(items):
                kab = k[a, b] / 2
                if kab == 0:
                    continue
                # Q̃_b† Q̃_a = Q_b† Q_a - λ_a Q_b† - λ_b* Q_a + λ_b* λ_a
                if pa == pb:
                    internal[pa] += kab * np.outer(nb.conj(), na)
                else:
                    add_block(pb, pa, kab * np.outer(nb.conj(), na))
                fields[pb] += -kab * la * nb.conj()
                fields[pa] += -kab * np.conj(lb) * na
                constant += kab * np.conj(lb) * la

    couplings = {}
    site_fields = np.zeros((state.n_sites, 3), dtype=complex)
    for p in range(n_f):
        ops = cluster_operators(state.factors[p].factor_spins)
        sym, extra, const = _linear_part(internal[p], ops)
        fields[p] = fields[p] + extra
        constant += const
        group = state.sites[p]
        for a, i in enumerate(group):
            site_fields[i] = fields[p][3 * a:3 * a + 3]
            for b, j in enumerate(group):
                if a < b:
                    blk = 2 * sym[3 * a:3 * a + 3, 3 * b:3 * b + 3]
                    couplings[(i, j)] = couplings.get((i, j), 0) + blk
                elif a == b:
                    couplings[(i, i)] = couplings.get((i, i), 0) + 2 * sym[3 * a:3 * a + 3, 3 * a:3 * a + 3]
    for (p, q), mat in blocks.items():
        for a, i in enumerate(state.sites[p]):
            for b, j in enumerate(state.sites[q]):
                couplings[(i, j)] = couplings.get((i, j), 0) + mat[3 * a:3 * a + 3, 3 * b:3 * b + 3]

    imag = max([np.abs(site_fields.imag).max(initial=0.0)]
               + [np.abs(m.imag).max() for m in couplings.values()])
    if imag > 1e-10:
        raise NonHermitianError(f"re-expanded model is not real (imaginary part {imag:.3e})")
    return ModelSpec(
        spins=state.site_spins,
        clusters=state.sites,
        fields=site_fields.real,
        couplings={key: np.real(m) for key, m in couplings.items()},
        energy_offset=float(np.real(constant)),
    )


def coherent_parent_couplings(state: ProductState, directions: Sequence[tuple],
                              weights: Sequence[float],
                              inter_blocks: Optional[Mapping] = None) -> CompatibleCouplingSpec:
    """
    Parent form of a spin-coherent product: per site Q^{z'} = n·S and
    Q^{+'} = (n^{x'} + i n^{y'})·S with diagonal K blocks -2e/(2s+1), so that
    the on-site part reduces to Σ e S^{z'} - Σ e s. The constant Σ e s restores it.
    `inter_blocks[(p, q)]` adds 2x2 couplings between the (z', +') operators.
    """
    n_f = len(state.factors)
    if len(directions) != n_f or len(weights) != n_f:
        raise DimensionError("one direction and one weight per site required")
    operators, diag = [], []
    constant = 0.0
    for p, ((theta, phi), e) in enumerate(zip(directions, weights)):
        if len(state.sites[p]) != 1:
            raise DimensionError("coherent parent form needs single-site factors")
        s = state.factors[p].factor_spins[0]
        nx, ny, n = coherent_frame(theta, phi)
        operators.append((p, n.astype(complex)))
        operators.append((p, nx + 1j * ny))
        diag.extend([-2 * e / (2 * float(s) + 1)] * 2)
        constant += e * float(s)
    k = np.diag(np.array(diag, dtype=complex))
    for (p, q), block in dict(inter_blocks or {}).items():
        block = np.asarray(block, dtype=complex)
        k[2 * p:2 * p + 2, 2 * q:2 * q + 2] += block
        k[2 * q:2 * q + 2, 2 * p:2 * p + 2] += block.conj().T
    psd = bool(np.linalg.eigvalsh(k).min() >= -PSD_ATOL)
    return CompatibleCouplingSpec(quadratic_operators=tuple(operators), quadratic_matrix=k,
                                  psd=psd, constant=constant)
