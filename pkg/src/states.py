# -*- coding: utf-8 -*-
"""
states.py — trial local states and product states

Spin-coherent states, generalized singlets (and their x-rotated partners),
maximal-half-spin spin-0 clusters, reduced densities and the closed-form
local moments of a generalized singlet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from src.config import resolve
from src.logger import get_logger
from src.spin_algebra import clebsch_gordan, cluster_operators, rotation, spin_components
from src.utils import DimensionError, Number, as_spin

logger = get_logger(__name__)

NORM_ATOL = 1e-12
SMALL_BETA = 0.5


# ================================================
# STATE TYPES
# ================================================
@dataclass(frozen=True)
class LocalState:
    """Normalized state of one factor (a single spin or a cluster of spins)."""

    amplitudes: np.ndarray
    factor_spins: tuple

    def __post_init__(self):
        spins = tuple(as_spin(s) for s in np.atleast_1d(np.asarray(self.factor_spins, dtype=object)))
        amps = np.array(self.amplitudes, dtype=complex).ravel()
        expected = int(np.prod([2 * s + 1 for s in spins]))
        if amps.size != expected:
            raise DimensionError(f"{amps.size} amplitudes for spins {spins} (need {expected})")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_ATOL:
            raise ValueError(f"local state not normalized (norm {norm:.15f})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "factor_spins", spins)

    @classmethod
    def normalized(cls, amplitudes, factor_spins) -> "LocalState":
        amps = np.asarray(amplitudes, dtype=complex).ravel()
        norm = np.linalg.norm(amps)
        if norm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return cls(amps / norm, factor_spins)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def site_dims(self) -> tuple:
        return tuple(int(2 * s + 1) for s in self.factor_spins)

    def expectation(self, op: np.ndarray) -> complex:
        return complex(np.vdot(self.amplitudes, op @ self.amplitudes))


@dataclass(frozen=True)
class ProductState:
    """
    ⊗_p |ψ_p⟩. `sites[p]` lists the physical sites carried by factor p; the
    materialized vector is always in natural site order (site 0 leftmost).
    """

    factors: tuple
    sites: Optional[tuple] = field(default=None)

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise ValueError("product state needs at least one factor")
        if self.sites is None:
            sites, start = [], 0
            for f in factors:
                n = len(f.factor_spins)
                sites.append(tuple(range(start, start + n)))
                start += n
        else:
            sites = [tuple(int(i) for i in group) for group in self.sites]
        if len(sites) != len(factors):
            raise DimensionError("one site group per factor required")
        for f, group in zip(factors, sites):
            if len(group) != len(f.factor_spins):
                raise DimensionError(f"factor with {len(f.factor_spins)} spins mapped to sites {group}")
        flat = sorted(i for group in sites for i in group)
        if flat != list(range(len(flat))):
            raise DimensionError(f"site groups {sites} do not partition 0..{len(flat) - 1}")
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "sites", tuple(sites))

    @property
    def total_dim(self) -> int:
        return int(np.prod([f.dim for f in self.factors]))

    @property
    def n_sites(self) -> int:
        return sum(len(group) for group in self.sites)

    @property
    def site_spins(self) -> tuple:
        spins = [None] * self.n_sites
        for f, group in zip(self.factors, self.sites):
            for i, s in zip(group, f.factor_spins):
                spins[i] = s
        return tuple(spins)

    def vector(self) -> np.ndarray:
        psi = reduce(np.kron, [f.amplitudes for f in self.factors])
        order = [i for group in self.sites for i in group]
        if order == sorted(order):
            return psi
        spins = self.site_spins
        tensor = psi.reshape([int(2 * spins[i] + 1) for i in order])
        return tensor.transpose(np.argsort(order)).ravel()


@dataclass(frozen=True)
class GeneralizedSingletSpec:
    """Two spins s, angle ξ ∈ [0, π]; parity -1 is the |m,-m⟩ form, +1 its x-rotated partner."""

    s: Fraction
    xi: float
    parity: int = -1

    def __post_init__(self):
        object.__setattr__(self, "s", as_spin(self.s, positive=True))
        xi = float(self.xi)
        if -1e-12 < xi < 0.0:
            xi = 0.0
        if math.pi < xi < math.pi + 1e-12:
            xi = math.pi
        if not 0.0 <= xi <= math.pi:
            raise ValueError(f"xi must lie in [0, pi], got {self.xi}")
        if self.parity not in (1, -1):
            raise ValueError(f"parity must be +1 or -1, got {self.parity}")
        object.__setattr__(self, "xi", xi)


# ================================================
# CONSTRUCTORS
# ================================================
def spin_coherent(s: Number, theta: float, phi: float) -> LocalState:
    """Maximal-spin state along n = (sinθ cosφ, sinθ sinφ, cosθ)."""
    s = as_spin(s)
    _, sy, sz = spin_components(s)
    rot = sla.expm(-1j * phi * sz) @ sla.expm(-1j * theta * sy)
    return LocalState.normalized(rot[:, 0], (s,))


def _second_spin_flip(s: Fraction) -> np.ndarray:
    """e^{-iπ S^x} on spin 2 of a pair, with the uniform phase e^{-iπ s} removed."""
    dim = int(2 * s + 1)
    flip = rotation(s, (1.0, 0.0, 0.0), math.pi) * np.exp(1j * math.pi * float(s))
    return np.kron(np.eye(dim), flip)


def generalized_singlet(spec: GeneralizedSingletSpec) -> LocalState:
    s = spec.s
    dim = int(2 * s + 1)
    c, sn = math.cos(spec.xi / 2), math.sin(spec.xi / 2)
    amps = np.zeros(dim * dim, dtype=complex)
    for k in range(dim):
        # m = s - k on spin 1, -m on spin 2 (index 2s - k)
        amps[k * dim + (dim - 1 - k)] = (-1) ** k * c ** (dim - 1 - k) * sn ** k
    if spec.parity == 1:
        amps = _second_spin_flip(s) @ amps
    return LocalState.normalized(amps, (s, s))


def singlet_conserved_coefficients(spec: GeneralizedSingletSpec) -> dict:
    """
    Coefficients of Q^z, Q^+, Q^- over (S1x, S1y, S1z, S2x, S2y, S2z).

    The x-rotated partner (parity +1) flips S2y and S2z.
    """
    c, sn = math.cos(spec.xi / 2), math.sin(spec.xi / 2)
    q = {
        "z": np.array([0, 0, 1, 0, 0, 1], dtype=complex),
        "+": np.array([c, 1j * c, 0, sn, 1j * sn, 0], dtype=complex),
        "-": np.array([sn, -1j * sn, 0, c, -1j * c, 0], dtype=complex),
    }
    if spec.parity == 1:
        flip = np.array([1, 1, 1, 1, -1, -1], dtype=complex)
        q = {key: v * flip for key, v in q.items()}
    return q


def singlet_conserved_operators(spec: GeneralizedSingletSpec) -> dict:
    """Q^z, Q^+, Q^- annihilating the generalized singlet (parity adjusted)."""
    ops = cluster_operators([spec.s, spec.s])
    return {key: ops.combination(v) for key, v in singlet_conserved_coefficients(spec).items()}


def coherent_frame(theta: float, phi: float) -> tuple:
    """(n^{x'}, n^{y'}, n) orthonormal frame with n the coherent-state direction."""
    ct, st, cp, sp = math.cos(theta), math.sin(theta), math.cos(phi), math.sin(phi)
    n = np.array([st * cp, st * sp, ct])
    nx = np.array([ct * cp, ct * sp, -st])
    ny = np.array([-sp, cp, 0.0])
    return nx, ny, n


def cluster_spin0_state(n_sites: int, s: Number, dim_cap: Optional[int] = None) -> LocalState:
    """Total-spin-0 state of two halves, each at maximal spin S = n s / 2."""
    s = as_spin(s, positive=True)
    if n_sites < 2 or n_sites % 2:
        raise ValueError(f"cluster size must be even and >= 2, got {n_sites}")
    if (n_sites * s).denominator != 1:
        raise ValueError(f"N_p s must be an integer (N_p={n_sites}, s={s})")
    dim_cap = resolve(dim_cap, "cluster_dim_cap")
    if (2 * s + 1) ** n_sites > dim_cap:
        raise DimensionError(f"cluster dimension {(2 * s + 1) ** n_sites} exceeds cap {dim_cap}")

    half = n_sites // 2
    half_ops = cluster_operators([s] * half)
    lower = sum(half_ops.lowering(k) for k in range(half))
    big_s = half * s
    half_dim = half_ops.site_dim

    # |S, S> is the all-up product, lower down the multiplet
    multiplet = [np.eye(half_dim, dtype=complex)[0]]
    m = big_s
    while m > -big_s:
        nxt = lower @ multiplet[-1]
        multiplet.append(nxt / math.sqrt(float((big_s + m) * (big_s - m + 1))))
        m -= 1

    psi = np.zeros(half_dim * half_dim, dtype=complex)
    for k, ket in enumerate(multiplet):
        mm = big_s - k
        psi += clebsch_gordan(big_s, mm, big_s, -mm, 0, 0) * np.kron(ket, multiplet[-1 - k])
    return LocalState.normalized(psi, (s,) * n_sites)


# ================================================
# REDUCED DENSITIES
# ================================================
def _validate_keep(keep: Sequence[int], n: int) -> list:
    keep = sorted(int(k) for k in keep)
    if not keep or len(set(keep)) != len(keep) or keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"invalid index set {keep} for {n} subsystems")
    return keep


def partial_trace(rho: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    dims = [int(d) for d in dims]
    n = len(dims)
    keep = _validate_keep(keep, n)
    rest = [i for i in range(n) if i not in keep]
    total = int(np.prod(dims))
    if rho.shape != (total, total):
        raise DimensionError(f"density of shape {rho.shape} does not match dims {dims}")
    dk = int(np.prod([dims[i] for i in keep]))
    dr = int(np.prod([dims[i] for i in rest])) if rest else 1
    perm = keep + rest
    tensor = rho.reshape(dims + dims).transpose(perm + [n + p for p in perm])
    return np.einsum("ajbj->ab", tensor.reshape(dk, dr, dk, dr))


def reduced_density(state: LocalState, keep: Sequence[int]) -> np.ndarray:
    """Partial trace of |ψ⟩⟨ψ| over every spin not in `keep`."""
    dims = list(state.site_dims)
    keep = _validate_keep(keep, len(dims))
    rest = [i for i in range(len(dims)) if i not in keep]
    dk = int(np.prod([dims[i] for i in keep]))
    psi = state.amplitudes.reshape(dims).transpose(keep + rest).reshape(dk, -1)
    return psi @ psi.conj().T


class LocalMoments(NamedTuple):
    mean_z: tuple
    variance_z: float


def local_moments(s: Number, xi: float) -> LocalMoments:
    """
    ⟨S^z_i⟩ and σ_z² of a generalized singlet. Each spin is a paramagnet
    ρ_1 ∝ exp(-β S^z), ρ_2 ∝ exp(+β S^z) with β = ln tan²(ξ/2).
    """
    s = as_spin(s)
    xi = GeneralizedSingletSpec(s, xi).xi
    fs = float(s)
    if xi == 0.0:
        return LocalMoments((fs, -fs), 0.0)
    if xi == math.pi:
        return LocalMoments((-fs, fs), 0.0)

    beta = 2.0 * math.log(math.tan(xi / 2))
    if abs(beta) < SMALL_BETA:
        # near the singlet: direct sums avoid the coth cancellation
        m = np.array([fs - k for k in range(int(2 * s + 1))])
        w = np.exp(-beta * m)
        w /= w.sum()
        mean = float(m @ w)
        variance = float((m * m) @ w - mean * mean)
    else:
        a = fs + 0.5
        with np.errstate(over="ignore"):
            mean = -(a / np.tanh(a * beta) - 0.5 / np.tanh(beta / 2))
            variance = 1.0 / (4.0 * np.sinh(beta / 2) ** 2) - a * a / np.sinh(a * beta) ** 2
        mean, variance = float(mean), float(variance)
    return LocalMoments((mean, -mean), max(variance, 0.0))


def split_separable(state: ProductState, atol: float = 1e-12) -> Optional[ProductState]:
    """
    The same state over single-site factors when every factor is itself a
    product of site states; None as soon as one site is entangled.
    """
    if all(len(group) == 1 for group in state.sites):
        return state
    factors, sites = [], []
    for local, group in zip(state.factors, state.sites):
        for a, i in enumerate(group):
            rho = reduced_density(local, [a])
            purity = float(np.real(np.trace(rho @ rho)))
            if 1.0 - purity > atol:
                return None
            values, vectors = np.linalg.eigh(rho)
            factors.append(LocalState.normalized(vectors[:, -1], (local.factor_spins[a],)))
            sites.append((i,))
    order = np.argsort([g[0] for g in sites])
    return ProductState(tuple(factors[k] for k in order), tuple(sites[k] for k in order))
