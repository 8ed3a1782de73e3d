# -*- coding: utf-8 -*-
"""
covariance.py — quantum covariance matrices of local operator sets

C^{μν} = ⟨S^{μ†} S^ν⟩ - ⟨S^{μ†}⟩⟨S^ν⟩. Its nullspace vectors n give the
conserved local operators Q = Σ_μ n_μ S^μ with Q|ψ⟩ = λ|ψ⟩.

Degenerate near-zero eigenvalues: the nullspace basis is whatever orthonormal
set the eigensolver returns. Consumers only use the spanned subspace.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla

from src.config import resolve
from src.logger import get_logger
from src.spin_algebra import SiteOperatorSet, SpinMatrix, cluster_operators
from src.states import LocalState
from src.utils import DimensionError

logger = get_logger(__name__)

LAMBDA_FLOOR = 1e-14
NEGATIVE_ATOL = 1e-10
CROSS_ATOL = 1e-12

StateLike = Union[LocalState, np.ndarray]


# ================================================
# TYPES
# ================================================
@dataclass(frozen=True)
class CovarianceMatrix:
    entries: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    rank: int
    tolerance: float
    means: Optional[np.ndarray] = None

    @classmethod
    def from_entries(cls, entries: np.ndarray, tolerance: Optional[float] = None,
                     means: Optional[np.ndarray] = None) -> "CovarianceMatrix":
        tolerance = resolve(tolerance, "rank_tolerance")
        c = np.asarray(entries, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DimensionError(f"covariance must be square, got {c.shape}")
        scale = max(np.abs(c).max(initial=0.0), 1.0)
        if np.abs(c - c.conj().T).max(initial=0.0) > 1e-12 * scale:
            raise ValueError("covariance matrix is not Hermitian")
        c = (c + c.conj().T) / 2

        values, vectors = np.linalg.eigh(c)
        top = max(values[-1], 0.0) if values.size else 0.0
        if values.size and values[0] < -NEGATIVE_ATOL * max(top, 1.0):
            logger.warning(f"covariance eigenvalue {values[0]:.3e} below zero, clipping")
        values = np.clip(values, 0.0, None)
        cutoff = tolerance * max(top, LAMBDA_FLOOR)
        rank = int(np.count_nonzero(values > cutoff))
        return cls(entries=c, eigenvalues=values, eigenvectors=vectors, rank=rank,
                   tolerance=tolerance, means=means)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def norm(self) -> float:
        """Spectral norm (largest eigenvalue)."""
        return float(self.eigenvalues[-1]) if self.eigenvalues.size else 0.0

    @property
    def cutoff(self) -> float:
        return self.tolerance * max(self.norm, LAMBDA_FLOOR)

    @cached_property
    def null_vectors(self) -> np.ndarray:
        return self.eigenvectors[:, self.eigenvalues <= self.cutoff]

    @cached_property
    def range_vectors(self) -> np.ndarray:
        return self.eigenvectors[:, self.eigenvalues > self.cutoff]

    @cached_property
    def range_projector(self) -> np.ndarray:
        k = self.range_vectors
        return k @ k.conj().T

    @cached_property
    def null_projector(self) -> np.ndarray:
        n = self.null_vectors
        return n @ n.conj().T


@dataclass(frozen=True)
class NullspaceBasis:
    vectors: np.ndarray  # columns n^α

    @property
    def count(self) -> int:
        return self.vectors.shape[1]

    def __iter__(self):
        return iter(self.vectors.T)


@dataclass(frozen=True)
class ConservedOperator:
    coefficients: np.ndarray
    matrix: SpinMatrix
    eigenvalue: complex
    residual: float


# ================================================
# AVERAGES
# ================================================
def _as_vector_or_density(state: StateLike) -> tuple:
    if isinstance(state, LocalState):
        return state.amplitudes, None
    arr = np.asarray(state, dtype=complex)
    if arr.ndim == 1:
        return arr, None
    if arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
        return None, arr
    raise DimensionError(f"state must be a vector or a density matrix, got shape {arr.shape}")


def _state_dim(state: StateLike) -> int:
    psi, rho = _as_vector_or_density(state)
    return psi.size if psi is not None else rho.shape[0]


def _check_dims(state: StateLike, ops: SiteOperatorSet) -> None:
    if _state_dim(state) != ops.site_dim:
        raise DimensionError(f"state of dimension {_state_dim(state)} but operators of "
                             f"dimension {ops.site_dim}")


def expectation_values(state: StateLike, ops: SiteOperatorSet) -> np.ndarray:
    """⟨S^μ⟩ for every operator of the set."""
    _check_dims(state, ops)
    psi, rho = _as_vector_or_density(state)
    mats = ops.matrices
    if psi is not None:
        return np.einsum("i,mij,j->m", psi.conj(), mats, psi)
    return np.einsum("ji,mij->m", rho, mats)


def covariance_matrix(state: StateLike, ops: SiteOperatorSet,
                      tolerance: Optional[float] = None) -> CovarianceMatrix:
    """Covariance of `ops` in a pure state (vector) or a mixed state (density matrix)."""
    _check_dims(state, ops)
    psi, rho = _as_vector_or_density(state)
    mats = ops.matrices
    means = expectation_values(state, ops)
    if psi is not None:
        v = np.einsum("mij,j->mi", mats, psi)
        second = v.conj() @ v.T
    else:
        # ⟨S^{μ†} S^ν⟩ = Tr(ρ S^{μ†} S^ν)
        second = np.einsum("mji,njk,ki->mn", mats.conj(), mats, rho)
    return CovarianceMatrix.from_entries(second - np.outer(means.conj(), means),
                                         tolerance, means=means)


def nullspace(cov: CovarianceMatrix) -> NullspaceBasis:
    return NullspaceBasis(cov.null_vectors)


# ================================================
# CONSERVED OPERATORS
# ================================================
def amplitude_matrix(state: StateLike, ops: SiteOperatorSet) -> np.ndarray:
    """A[m, μ] = ⟨m|(S^μ - ⟨S^μ⟩)|ψ⟩, so that A†A = C."""
    psi, rho = _as_vector_or_density(state)
    if psi is None:
        raise ValueError("amplitude matrix needs a pure state")
    _check_dims(psi, ops)
    means = expectation_values(psi, ops)
    return np.einsum("mij,j->im", ops.matrices, psi) - np.outer(psi, means)


def direct_nullspace(state: StateLike, ops: SiteOperatorSet,
                     tolerance: Optional[float] = None) -> np.ndarray:
    """Kernel of A by SVD; singular values of A are square roots of C's eigenvalues."""
    tolerance = resolve(tolerance, "rank_tolerance")
    return sla.null_space(amplitude_matrix(state, ops), rcond=np.sqrt(tolerance))


def conserved_operators(state: StateLike, ops: SiteOperatorSet,
                        tolerance: Optional[float] = None) -> list:
    """One ConservedOperator per nullspace vector, each checked on the state."""
    psi, _ = _as_vector_or_density(state)
    if psi is None:
        raise ValueError("conserved operators are defined for pure states")
    cov = covariance_matrix(psi, ops, tolerance)
    limit = 10 * cov.tolerance * max(np.sqrt(cov.norm), 1.0)

    result = []
    for n in nullspace(cov):
        q = ops.combination(n)
        lam = complex(np.vdot(psi, q @ psi))
        residual = float(np.linalg.norm(q @ psi - lam * psi))
        if residual > limit:
            logger.warning(f"nullspace vector with eigen-residual {residual:.3e} above {limit:.3e}")
        result.append(ConservedOperator(coefficients=n, matrix=SpinMatrix(q), eigenvalue=lam,
                                        residual=residual))
    return result


def annihilator_singular_values(state: StateLike, operators: Sequence[np.ndarray]) -> np.ndarray:
    """Singular values of the map a -> Σ_k a_k O_k|ψ⟩ (zero iff some combination annihilates ψ)."""
    psi, _ = _as_vector_or_density(state)
    if psi is None:
        raise ValueError("needs a pure state")
    columns = np.stack([np.asarray(op) @ psi for op in operators], axis=1)
    return np.linalg.svd(columns, compute_uv=False)


# ================================================
# ZERO-MAGNETIZATION PAIR BLOCKS
# ================================================
@dataclass(frozen=True)
class BlockCovariance:
    plus: CovarianceMatrix
    minus: CovarianceMatrix
    zz: CovarianceMatrix
    mean_z: np.ndarray
    cross_norm: float
    identity_residual: float


def block_covariance(state: LocalState, ops: Optional[SiteOperatorSet] = None,
                     tolerance: Optional[float] = None) -> BlockCovariance:
    """C^{++}, C^{--}, C^{zz} of a two-spin state with total S^z = 0."""
    if len(state.factor_spins) != 2:
        raise DimensionError("block covariance needs a two-spin state")
    ops = ops or cluster_operators(state.factor_spins)
    _check_dims(state, ops)
    psi = state.amplitudes

    total_z = ops.component(0, "z") + ops.component(1, "z")
    mz_residual = float(np.linalg.norm(total_z @ psi))
    if mz_residual > 1e-10:
        raise ValueError(f"state is not a total S^z = 0 eigenstate (residual {mz_residual:.3e})")

    sequence = [ops.raising(0), ops.raising(1), ops.lowering(0), ops.lowering(1),
                ops.component(0, "z"), ops.component(1, "z")]
    means = np.array([np.vdot(psi, op @ psi) for op in sequence])
    shifted = np.stack([op @ psi - m * psi for op, m in zip(sequence, means)])
    full = shifted.conj() @ shifted.T

    blocks = [full[0:2, 0:2], full[2:4, 2:4], full[4:6, 4:6]]
    mask = np.ones((6, 6), dtype=bool)
    for k in range(3):
        mask[2 * k:2 * k + 2, 2 * k:2 * k + 2] = False
    cross = float(np.abs(full[mask]).max())
    if cross > CROSS_ATOL * max(1.0, float(np.abs(full).max())):
        raise ValueError(f"cross-blocks between the +, - and z sectors do not vanish ({cross:.3e})")

    mean_z = means[4:6].real
    ident = blocks[1] - blocks[0].T - 2 * np.diag(mean_z)
    return BlockCovariance(
        plus=CovarianceMatrix.from_entries(blocks[0], tolerance),
        minus=CovarianceMatrix.from_entries(blocks[1], tolerance),
        zz=CovarianceMatrix.from_entries(blocks[2], tolerance),
        mean_z=mean_z,
        cross_norm=cross,
        identity_residual=float(np.abs(ident).max()),
    )
