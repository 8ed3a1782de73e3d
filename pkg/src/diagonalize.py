# -*- coding: utf-8 -*-
"""
diagonalize.py — spectra of assembled Hamiltonians

Dense LAPACK diagonalization up to the dense cap, ARPACK (implicitly
restarted Lanczos, scipy eigsh) for the lowest levels beyond it, and an
optional total-S^z sector path for Hamiltonians that conserve it.
Reported eigenvalues include the Hamiltonian's energy offset.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from src.config import resolve
from src.hamiltonian import AssembledHamiltonian
from src.logger import get_logger
from src.monitor import check_dense_feasible, track_run
from src.spin_algebra import spin_components
from src.states import ProductState
from src.utils import ConvergenceError, DimensionError, NotConservedError, as_spin

logger = get_logger(__name__)

KEEP_VECTORS = 16
TRACE_RTOL = 1e-8
SMALL_DIM = 64


# ================================================
# RESULT
# ================================================
@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray  # ascending, offset included
    method: str  # dense | iterative | sector
    residual_bound: float
    delta: float
    vectors: Optional[np.ndarray] = None  # columns for the lowest eigenvalues
    sectors: Optional[dict] = None

    @property
    def ground_energy(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def degeneracy(self) -> int:
        return degeneracy(self, self.delta)

    @property
    def gap(self) -> Optional[float]:
        above = self.eigenvalues[self.eigenvalues > self.ground_energy + self.delta]
        return float(above[0] - self.ground_energy) if above.size else None


def _delta(width: float, delta: Optional[float]) -> float:
    rel = resolve(delta, "degeneracy_delta")
    return rel * max(width, 1.0)


def _matrix_norm(hamiltonian: AssembledHamiltonian) -> float:
    """1-norm bound of the matrix part (≥ spectral norm for Hermitian H)"""
    return float(spla.norm(hamiltonian.matrix.csr, 1))


# ================================================
# DENSE
# ================================================
def dense_spectrum(hamiltonian: AssembledHamiltonian, cap: Optional[int] = None,
                   delta: Optional[float] = None) -> SpectrumResult:
    """All eigenvalues by LAPACK; DenseCapExceeded above the cap."""
    dim = hamiltonian.total_dim
    check_dense_feasible(dim, cap)
    with track_run(f"dense eigh, dim {dim}"):
        matrix = hamiltonian.dense()
        values, vectors = sla.eigh(matrix)

    trace = float(np.real(np.trace(matrix)))
    if abs(values.sum() - trace) > TRACE_RTOL * max(1.0, np.abs(values).sum()):
        logger.warning(f"eigenvalue sum {values.sum():.12g} differs from trace {trace:.12g}")

    residual = float(np.abs(matrix @ vectors[:, :KEEP_VECTORS]
                            - vectors[:, :KEEP_VECTORS] * values[:KEEP_VECTORS]).max())
    width = float(values[-1] - values[0])
    d = _delta(width, delta)
    keep = max(KEEP_VECTORS, int(np.count_nonzero(values <= values[0] + d)))
    return SpectrumResult(eigenvalues=values, method="dense", residual_bound=residual,
                          delta=d, vectors=vectors[:, :keep])


# ================================================
# ITERATIVE
# ================================================
def _gershgorin_top(hamiltonian: AssembledHamiltonian) -> float:
    csr = hamiltonian.matrix.csr
    diag = csr.diagonal().real
    radii = np.asarray(abs(csr).sum(axis=1)).ravel() - np.abs(diag)
    return float((diag + radii).max())


def _spectral_width(hamiltonian: AssembledHamiltonian, lowest: float, v0: np.ndarray,
                    max_iter: int) -> float:
    """Top minus bottom of the matrix spectrum; the top falls back to a Gershgorin bound."""
    try:
        top = spla.eigsh(hamiltonian.matrix.csr, k=1, which="LA", v0=v0, tol=1e-6,
                         maxiter=max_iter, return_eigenvectors=False)[0]
    except spla.ArpackNoConvergence:
        logger.debug("largest eigenvalue did not converge, using the Gershgorin bound")
        top = _gershgorin_top(hamiltonian)
    return float(top - lowest)


def lowest_k(hamiltonian: AssembledHamiltonian, k: int = 6, seed: Optional[int] = None,
             tol: Optional[float] = None, max_iter: Optional[int] = None,
             delta: Optional[float] = None) -> SpectrumResult:
    """
    Lowest k eigenvalues by eigsh (which='SA') from a seeded start vector.
    A few extra Ritz values are requested so that degenerate ground levels
    are not truncated.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    seed = resolve(seed, "seed")
    tol = resolve(tol, "lanczos_tol")
    max_iter = resolve(max_iter, "lanczos_max_iter")
    dim = hamiltonian.total_dim
    k_eff = k + 4
    if dim <= max(SMALL_DIM, 2 * k_eff + 2):
        dense = dense_spectrum(hamiltonian, cap=max(dim, 1), delta=delta)
        return SpectrumResult(eigenvalues=dense.eigenvalues[:k], method="dense",
                              residual_bound=dense.residual_bound, delta=dense.delta,
                              vectors=dense.vectors[:, :k])

    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    ncv = min(dim, max(2 * k_eff + 1, 40))
    norm = max(_matrix_norm(hamiltonian), 1e-300)
    with track_run(f"eigsh k={k_eff}, dim {dim}"):
        try:
            values, vectors = spla.eigsh(hamiltonian.matrix.csr, k=k_eff, which="SA", v0=v0,
                                         ncv=ncv, tol=tol * 1e-2, maxiter=max_iter)
        except spla.ArpackNoConvergence as err:
            best = float("nan")
            if err.eigenvectors is not None and len(err.eigenvalues):
                r = hamiltonian.matrix.csr @ err.eigenvectors - err.eigenvectors * err.eigenvalues
                best = float(np.linalg.norm(r, axis=0).min() / norm)
            raise ConvergenceError(f"eigsh did not converge in {max_iter} iterations", best) from err

    order = np.argsort(values)
    values, vectors = values[order], vectors[:, order]
    residuals = np.linalg.norm(hamiltonian.matrix.csr @ vectors - vectors * values, axis=0) / norm
    bound = float(residuals.max())
    if bound > tol:
        raise ConvergenceError(f"Ritz residual {bound:.3e} above {tol:.1e}", bound)

    d = _delta(_spectral_width(hamiltonian, values[0], v0, max_iter), delta)
    values = values + hamiltonian.energy_offset
    if np.all(values <= values[0] + d):
        logger.warning(f"all {k_eff} computed levels are degenerate; degeneracy is a lower bound")
    logger.info(f"iterative ground energy {values[0]:.12g} (dim {dim})")
    return SpectrumResult(eigenvalues=values[:k], method="iterative", residual_bound=bound,
                          delta=d, vectors=vectors[:, :k])


def spectrum(hamiltonian: AssembledHamiltonian, method: str = "auto", k: Optional[int] = None,
             cap: Optional[int] = None, seed: Optional[int] = None) -> SpectrumResult:
    cap = resolve(cap, "dense_cap")
    if method == "auto":
        method = "dense" if hamiltonian.total_dim <= cap and k is None else "iterative"
        logger.info(f"spectrum method {method} for dimension {hamiltonian.total_dim}")
    if method == "dense":
        return dense_spectrum(hamiltonian, cap)
    if method == "iterative":
        return lowest_k(hamiltonian, k or 6, seed)
    raise ValueError(f"unknown spectrum method {method!r}")


# ================================================
# STATE CHECKS
# ================================================
def _vector(state) -> np.ndarray:
    return state.vector() if isinstance(state, ProductState) else np.asarray(state, dtype=complex)


def eigen_residual(hamiltonian: AssembledHamiltonian, state) -> float:
    """‖H|ψ⟩ - ⟨H⟩|ψ⟩‖"""
    psi = _vector(state)
    if psi.shape != (hamiltonian.total_dim,):
        raise DimensionError(f"state of size {psi.size} for dimension {hamiltonian.total_dim}")
    h_psi = hamiltonian.matrix.dot(psi)
    return float(np.linalg.norm(h_psi - np.vdot(psi, h_psi) * psi))


def degeneracy(result: SpectrumResult, delta: Optional[float] = None) -> int:
    delta = result.delta if delta is None else delta
    return int(np.count_nonzero(result.eigenvalues <= result.eigenvalues[0] + delta))


def ground_overlap(result: SpectrumResult, state) -> float:
    """Weight of the state in the (possibly degenerate) ground eigenspace."""
    if result.vectors is None:
        raise ValueError("spectrum was computed without eigenvectors")
    psi = _vector(state)
    n = min(degeneracy(result), result.vectors.shape[1])
    ground = result.vectors[:, :n]
    return float(np.linalg.norm(ground.conj().T @ psi) ** 2 / np.vdot(psi, psi).real)


# ================================================
# MAGNETIZATION SECTORS
# ================================================
def total_magnetization(spins: Sequence) -> np.ndarray:
    """Σ_i m_i of every basis state in natural site order."""
    total = np.zeros(1)
    for s in spins:
        m = np.real(np.diag(spin_components(as_spin(s))[2]))
        total = np.add.outer(total, m).ravel()
    return total


def sector_spectrum(hamiltonian: AssembledHamiltonian, spins: Sequence,
                    cap: Optional[int] = None, delta: Optional[float] = None) -> SpectrumResult:
    """Dense spectrum block by block in total S^z; requires [H, S^z_tot] = 0."""
    cap = resolve(cap, "dense_cap")
    mags = np.round(2 * total_magnetization(spins)).astype(int)
    if mags.size != hamiltonian.total_dim:
        raise DimensionError("spins do not match the Hamiltonian dimension")
    coo = hamiltonian.matrix.entries
    leak = np.abs(coo.data[mags[coo.row] != mags[coo.col]])
    if leak.size and leak.max() > 1e-12:
        raise NotConservedError(f"H does not conserve total S^z (off-sector entry {leak.max():.3e})")

    csr = hamiltonian.matrix.csr
    sectors, values, vectors = {}, [], []
    with track_run(f"sector spectrum, dim {hamiltonian.total_dim}"):
        for two_m in sorted(set(mags.tolist())):
            idx = np.flatnonzero(mags == two_m)
            check_dense_feasible(idx.size, cap)
            block = csr[idx, :][:, idx].toarray() + hamiltonian.energy_offset * np.eye(idx.size)
            vals, vecs = sla.eigh(block)
            sectors[two_m / 2] = vals
            full = np.zeros((hamiltonian.total_dim, vals.size), dtype=complex)
            full[idx, :] = vecs
            values.append(vals)
            vectors.append(full[:, :KEEP_VECTORS])
    values = np.concatenate(values)
    stacked = np.concatenate(vectors, axis=1)
    low = np.concatenate([vals[:KEEP_VECTORS] for vals in sectors.values()])
    order = np.argsort(values, kind="stable")
    low_order = np.argsort(low, kind="stable")
    width = float(values.max() - values.min())
    return SpectrumResult(eigenvalues=values[order], method="sector", residual_bound=0.0,
                          delta=_delta(width, delta), vectors=stacked[:, low_order],
                          sectors=sectors)
