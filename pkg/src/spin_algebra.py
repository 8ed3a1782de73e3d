# -*- coding: utf-8 -*-
"""
spin_algebra.py — spin matrices, local operator sets and many-body embedding

Basis of a spin s is the S^z eigenbasis ordered m = s, s-1, ..., -s
(Condon–Shortley phases). Many-body operators use a fixed Kronecker order:
factor 0 is the leftmost (slowest varying) index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, reduce
from typing import Mapping, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from src.logger import get_logger
from src.utils import DimensionError, NonHermitianError, Number, as_spin

logger = get_logger(__name__)

AXES = ("x", "y", "z")
INDEPENDENCE_RTOL = 1e-10
HERMITIAN_ATOL = 1e-12


# ================================================
# LOCAL OPERATORS
# ================================================
@dataclass(frozen=True)
class SpinMatrix:
    """Dense operator on one site (or one cluster)."""

    entries: np.ndarray
    hermitian: Optional[bool] = None

    def __post_init__(self):
        a = np.array(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"operator must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("operator has non-finite entries")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

        is_hermitian = bool(np.allclose(a, a.conj().T, rtol=0.0, atol=HERMITIAN_ATOL))
        if self.hermitian is None:
            object.__setattr__(self, "hermitian", is_hermitian)
        elif self.hermitian and not is_hermitian:
            raise NonHermitianError("operator flagged Hermitian but entries are not")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def dagger(self) -> "SpinMatrix":
        return SpinMatrix(self.entries.conj().T, hermitian=self.hermitian)


@dataclass(frozen=True)
class SiteOperatorSet:
    """
    Ordered, linearly independent operators S^μ acting on one factor.

    `spins` lists the spins making up the factor when the set is built from
    spin operators (one entry for a single site, N_p for a cluster); generic
    sets leave it empty.
    """

    ops: tuple
    labels: tuple
    spins: tuple = field(default=())

    def __post_init__(self):
        ops = tuple(op if isinstance(op, SpinMatrix) else SpinMatrix(op) for op in self.ops)
        labels = tuple(str(label) for label in self.labels)
        if not ops:
            raise ValueError("operator set is empty")
        if len(labels) != len(ops):
            raise ValueError(f"{len(ops)} operators but {len(labels)} labels")
        if len(set(labels)) != len(labels):
            raise ValueError("operator labels must be unique")
        dims = {op.dim for op in ops}
        if len(dims) != 1:
            raise DimensionError(f"operators of different dimensions {sorted(dims)}")
        object.__setattr__(self, "ops", ops)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "spins", tuple(as_spin(s) for s in self.spins))

        if self.spins and int(np.prod([2 * s + 1 for s in self.spins])) != self.site_dim:
            raise DimensionError("spins do not match the operator dimension")

        vectors = np.stack([op.entries.ravel() for op in ops], axis=1)
        if any(s == 0 for s in self.spins):
            # spin-0 sites carry identically zero components
            vectors = vectors[:, np.abs(vectors).max(axis=0) > 0]
            if vectors.shape[1] == 0:
                return
        sv = np.linalg.svd(vectors, compute_uv=False)
        if sv[0] == 0.0 or sv[-1] <= INDEPENDENCE_RTOL * sv[0]:
            raise ValueError("operators are not linearly independent")

    @property
    def site_dim(self) -> int:
        return self.ops[0].dim

    def __len__(self) -> int:
        return len(self.ops)

    @cached_property
    def matrices(self) -> np.ndarray:
        """Stacked operators, shape (d, D, D)."""
        stacked = np.stack([op.entries for op in self.ops])
        stacked.setflags(write=False)
        return stacked

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def op(self, label: str) -> np.ndarray:
        return self.ops[self.index(label)].entries

    def component(self, site: int, axis: str) -> np.ndarray:
        """Spin component `axis` of site `site` inside this factor."""
        if len(self.spins) <= 1:
            return self.op(f"S{axis}")
        return self.op(f"S{site + 1}{axis}")

    def raising(self, site: int = 0) -> np.ndarray:
        return self.component(site, "x") + 1j * self.component(site, "y")

    def lowering(self, site: int = 0) -> np.ndarray:
        return self.component(site, "x") - 1j * self.component(site, "y")

    def combination(self, coefficients: Sequence[complex]) -> np.ndarray:
        """Σ_μ n_μ S^μ"""
        coefficients = np.asarray(coefficients, dtype=complex)
        if coefficients.shape != (len(self),):
            raise DimensionError(f"expected {len(self)} coefficients, got {coefficients.shape}")
        return np.tensordot(coefficients, self.matrices, axes=1)


def spin_components(s: Number) -> tuple:
    """(S^x, S^y, S^z) as dense arrays for spin s."""
    s = as_spin(s)
    dim = int(2 * s + 1)
    m = np.array([float(s) - k for k in range(dim)])
    plus = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        # S^+ |m> = sqrt((s-m)(s+m+1)) |m+1>, with m = s - k
        plus[k - 1, k] = math.sqrt((float(s) - m[k]) * (float(s) + m[k] + 1))
    minus = plus.conj().T
    sx = (plus + minus) / 2
    sy = (plus - minus) / 2j
    sz = np.diag(m).astype(complex)
    return sx, sy, sz


def spin_matrices(s: Number) -> SiteOperatorSet:
    """{S^x, S^y, S^z} of one spin s; S^± via `raising()` / `lowering()`."""
    sx, sy, sz = spin_components(s)
    return SiteOperatorSet(ops=(sx, sy, sz), labels=("Sx", "Sy", "Sz"), spins=(s,))


def cluster_operators(spins: Sequence[Number]) -> SiteOperatorSet:
    """Operators S^μ_i of every spin of a cluster, embedded in the cluster space."""
    spins = [as_spin(s) for s in spins]
    if len(spins) == 1:
        return spin_matrices(spins[0])
    dims = [int(2 * s + 1) for s in spins]
    ops, labels = [], []
    for k, s in enumerate(spins):
        left = np.eye(int(np.prod(dims[:k])))
        right = np.eye(int(np.prod(dims[k + 1:])))
        for axis, comp in zip(AXES, spin_components(s)):
            ops.append(np.kron(np.kron(left, comp), right))
            labels.append(f"S{k + 1}{axis}")
    return SiteOperatorSet(ops=tuple(ops), labels=tuple(labels), spins=tuple(spins))


def total_spin(ops: SiteOperatorSet) -> tuple:
    """Total (S^x, S^y, S^z) of a spin operator set."""
    n_sites = max(len(ops.spins), 1)
    return tuple(sum(ops.component(k, axis) for k in range(n_sites)) for axis in AXES)


def complete_operator_set(dim: int) -> SiteOperatorSet:
    """Identity plus the generalized Gell-Mann basis: dim² independent operators."""
    if dim < 1:
        raise ValueError("dimension must be positive")
    ops, labels = [np.eye(dim, dtype=complex)], ["I"]
    for j in range(dim):
        for k in range(j + 1, dim):
            sym = np.zeros((dim, dim), dtype=complex)
            sym[j, k] = sym[k, j] = 1.0
            anti = np.zeros((dim, dim), dtype=complex)
            anti[j, k], anti[k, j] = -1j, 1j
            ops += [sym, anti]
            labels += [f"X{j}{k}", f"Y{j}{k}"]
    for level in range(1, dim):
        diag = np.zeros(dim)
        diag[:level] = 1.0
        diag[level] = -level
        ops.append(np.diag(diag * math.sqrt(2.0 / (level * (level + 1)))).astype(complex))
        labels.append(f"Z{level}")
    return SiteOperatorSet(ops=tuple(ops), labels=tuple(labels))


def rotation(s: Number, axis: Sequence[float], angle: float) -> np.ndarray:
    """exp(-i angle n·S) for unit axis n."""
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    generator = sum(c * comp for c, comp in zip(n, spin_components(s)))
    return sla.expm(-1j * angle * generator)


# ================================================
# STRUCTURE CONSTANTS
# ================================================
@dataclass(frozen=True)
class StructureConstants:
    """[S^μ, S^ν] = Σ_ρ table[μ, ν, ρ] S^ρ + identity_part[μ, ν]·1"""

    table: np.ndarray
    identity_part: np.ndarray
    residual_norm: float
    labels: tuple

    def nonzero_entries(self, atol: float = 1e-12) -> dict:
        entries = {}
        d = len(self.labels)
        for mu in range(d):
            for nu in range(mu + 1, d):
                for rho in range(d):
                    value = self.table[mu, nu, rho]
                    if abs(value) > atol:
                        entries[(self.labels[mu], self.labels[nu], self.labels[rho])] = complex(value)
        return entries


def structure_constants(ops: SiteOperatorSet) -> StructureConstants:
    d = len(ops)
    dim = ops.site_dim
    mats = ops.matrices
    basis = np.concatenate([mats.reshape(d, -1), np.eye(dim).reshape(1, -1)]).T

    table = np.zeros((d, d, d), dtype=complex)
    identity_part = np.zeros((d, d), dtype=complex)
    residual = 0.0
    for mu in range(d):
        for nu in range(mu + 1, d):
            comm = (mats[mu] @ mats[nu] - mats[nu] @ mats[mu]).ravel()
            coeffs, *_ = np.linalg.lstsq(basis, comm, rcond=None)
            residual = max(residual, float(np.linalg.norm(basis @ coeffs - comm)))
            table[mu, nu], table[nu, mu] = coeffs[:d], -coeffs[:d]
            identity_part[mu, nu], identity_part[nu, mu] = coeffs[d], -coeffs[d]

    if residual > 1e-10:
        logger.debug(f"operator set not closed under commutation, residual {residual:.3e}")
    return StructureConstants(table=table, identity_part=identity_part,
                              residual_norm=residual, labels=ops.labels)


# ================================================
# CLEBSCH–GORDAN (exact rational accumulation)
# ================================================
def _fact(x: Fraction) -> int:
    return math.factorial(int(x))


def clebsch_gordan(j1: Number, m1: Number, j2: Number, m2: Number, J: Number, M: Number) -> float:
    """<j1 m1; j2 m2 | J M> in the Condon–Shortley convention (Racah formula)."""
    j1, m1, j2, m2, J, M = (Fraction(x).limit_denominator(2) for x in (j1, m1, j2, m2, J, M))
    if m1 + m2 != M:
        return 0.0
    if not abs(j1 - j2) <= J <= j1 + j2:
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(M) > J:
        return 0.0
    for j, m in ((j1, m1), (j2, m2), (J, M)):
        if (j - m).denominator != 1:
            return 0.0
    if (j1 + j2 + J).denominator != 1:
        return 0.0

    prefactor = Fraction(
        (2 * J + 1) * _fact(J + j1 - j2) * _fact(J - j1 + j2) * _fact(j1 + j2 - J),
        _fact(j1 + j2 + J + 1),
    )
    prefactor *= (_fact(J + M) * _fact(J - M) * _fact(j1 - m1) * _fact(j1 + m1)
                  * _fact(j2 - m2) * _fact(j2 + m2))

    total = Fraction(0)
    k_max = int(min(j1 + j2 - J, j1 - m1, j2 + m2))
    for k in range(k_max + 1):
        args = (j1 + j2 - J - k, j1 - m1 - k, j2 + m2 - k, J - j2 + m1 + k, J - j1 - m2 + k)
        if any(a < 0 for a in args):
            continue
        denom = _fact(Fraction(k)) * reduce(lambda acc, a: acc * _fact(a), args, 1)
        total += Fraction((-1) ** k, denom)

    return float(total) * math.sqrt(prefactor)


# ================================================
# MANY-BODY EMBEDDING
# ================================================
@dataclass(frozen=True)
class SparseManyBodyOperator:
    """Operator on ⊗_p H_p stored as COO triplets, CSR view for products."""

    entries: sp.coo_matrix
    factor_dims: tuple
    hermitian: bool = False

    def __post_init__(self):
        dims = tuple(int(d) for d in self.factor_dims)
        total = int(np.prod(dims)) if dims else 1
        coo = sp.coo_matrix(self.entries, dtype=complex)
        if coo.shape != (total, total):
            raise DimensionError(f"matrix shape {coo.shape} does not match dims {dims}")
        coo.sum_duplicates()
        object.__setattr__(self, "entries", coo)
        object.__setattr__(self, "factor_dims", dims)
        if self.hermitian:
            gap = abs(coo - coo.conj().T)
            worst = gap.max() if gap.nnz else 0.0
            scale = max(1.0, abs(coo).max() if coo.nnz else 0.0)
            if worst > HERMITIAN_ATOL * scale:
                raise NonHermitianError(f"operator not Hermitian (max deviation {worst:.3e})")

    @property
    def total_dim(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def csr(self) -> sp.csr_matrix:
        return self.entries.tocsr()

    def dot(self, vector: np.ndarray) -> np.ndarray:
        return self.csr @ np.asarray(vector, dtype=complex)

    def to_dense(self) -> np.ndarray:
        return self.entries.toarray()

    def __add__(self, other: "SparseManyBodyOperator") -> "SparseManyBodyOperator":
        if self.factor_dims != other.factor_dims:
            raise DimensionError("cannot add operators on different spaces")
        return SparseManyBodyOperator(self.csr + other.csr, self.factor_dims,
                                      hermitian=self.hermitian and other.hermitian)

    def scaled(self, factor: complex) -> "SparseManyBodyOperator":
        real = np.isreal(factor)
        return SparseManyBodyOperator(self.csr * factor, self.factor_dims,
                                      hermitian=bool(self.hermitian and real))

    def __matmul__(self, other: "SparseManyBodyOperator") -> "SparseManyBodyOperator":
        if self.factor_dims != other.factor_dims:
            raise DimensionError("cannot multiply operators on different spaces")
        return SparseManyBodyOperator(self.csr @ other.csr, self.factor_dims)


def _check_dims(factor_dims: Sequence[int]) -> tuple:
    dims = tuple(int(d) for d in factor_dims)
    if not dims or any(d < 1 for d in dims):
        raise DimensionError(f"invalid factor dimensions {factor_dims!r}")
    return dims


def embed_product(ops: Mapping[int, np.ndarray], factor_dims: Sequence[int],
                  hermitian: bool = False) -> SparseManyBodyOperator:
    """Kronecker product with ops[i] on factor i and identities elsewhere."""
    dims = _check_dims(factor_dims)
    for index, op in ops.items():
        if not 0 <= index < len(dims):
            raise DimensionError(f"factor index {index} out of range for {len(dims)} factors")
        if np.shape(op) != (dims[index], dims[index]):
            raise DimensionError(f"operator shape {np.shape(op)} does not fit factor {index} "
                                 f"of dimension {dims[index]}")

    result = sp.identity(1, dtype=complex, format="coo")
    pending = 1
    for index, d in enumerate(dims):
        if index in ops:
            if pending > 1:
                result = sp.kron(result, sp.identity(pending, dtype=complex), format="coo")
                pending = 1
            result = sp.kron(result, sp.coo_matrix(np.asarray(ops[index], dtype=complex)), format="coo")
        else:
            pending *= d
    if pending > 1:
        result = sp.kron(result, sp.identity(pending, dtype=complex), format="coo")
    return SparseManyBodyOperator(result, dims, hermitian=hermitian)


def embed(op, factor_index: int, factor_dims: Sequence[int]) -> SparseManyBodyOperator:
    """Place a local operator on factor `factor_index`, identity elsewhere."""
    matrix = op if isinstance(op, SpinMatrix) else SpinMatrix(op)
    return embed_product({factor_index: matrix.entries}, factor_dims, hermitian=bool(matrix.hermitian))
