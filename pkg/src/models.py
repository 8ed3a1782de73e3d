# -*- coding: utf-8 -*-
"""
models.py — prebuilt models with exact factorized eigenstates

Every generator returns a ModelBundle: the Hamiltonian, its candidate
product eigenstates (each with the model regrouped into that state's
factors) and the closed-form predictions. Sweeps and phase-boundary
bisection run on top of the bundles.

Pairs are laid out as sites (2p, 2p+1) = (1_p, 2_p).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from src.config import resolve
from src.diagonalize import ground_overlap, spectrum
from src.factorization import check_conditions, full_factorization_check
from src.hamiltonian import HALF, ModelSpec, assemble, mean_fields
from src.logger import get_logger
from src.states import (
    GeneralizedSingletSpec,
    LocalState,
    ProductState,
    cluster_spin0_state,
    generalized_singlet,
    spin_coherent,
)
from src.utils import (
    ConfigError,
    ConstraintViolation,
    DegenerateAngleError,
    NoRealAngleError,
    UnknownFamilyError,
    as_spin,
)

logger = get_logger(__name__)

PARAM_RTOL = 1e-12
FIELD_RTOL = 1e-10


# ================================================
# BUNDLES
# ================================================
@dataclass(frozen=True)
class Candidate:
    """A predicted product eigenstate and the model grouped into its factors."""

    label: str
    state: ProductState
    model: ModelSpec
    energy: Optional[float]


@dataclass(frozen=True)
class ModelBundle:
    model: ModelSpec
    candidates: dict
    predictions: dict = field(default_factory=dict)
    notes: tuple = ()

    @property
    def primary(self) -> Candidate:
        if not self.candidates:
            raise ConstraintViolation("model has no predicted factorized eigenstate")
        return next(iter(self.candidates.values()))


def verify_candidates(bundle: ModelBundle, tolerance: Optional[float] = None) -> dict:
    """FactorizationReport of every candidate, keyed by label."""
    return {label: check_conditions(c.model, c.state, tolerance)
            for label, c in bundle.candidates.items()}


def _diag(x: float, y: float, z: float) -> np.ndarray:
    return np.diag([x, y, z]).astype(float)


def _add(couplings: dict, i: int, j: int, mat: np.ndarray) -> None:
    if i > j:
        i, j, mat = j, i, mat.T
    couplings[(i, j)] = couplings.get((i, j), 0) + mat


def _ring_bonds(n: int, cyclic: bool) -> list:
    """Nearest-neighbour factor pairs (p, p+1), closing the ring when cyclic."""
    bonds = [(p, p + 1) for p in range(n - 1)]
    if cyclic and n > 2:
        bonds.append((n - 1, 0))
    return bonds


def _singlet_product(s: Fraction, xis: Sequence[float], parities: Sequence[int],
                     sites: Optional[Sequence] = None) -> ProductState:
    factors = [generalized_singlet(GeneralizedSingletSpec(s, xi, parity))
               for xi, parity in zip(xis, parities)]
    return ProductState(tuple(factors), None if sites is None else tuple(sites))


def _compensate(model: ModelSpec, state: ProductState, target: np.ndarray) -> ModelSpec:
    """Bare fields b = target - mean field, so the effective fields equal the target."""
    zero = replace(model, fields=None)
    bare = np.array(target, dtype=float)
    for p, h in enumerate(mean_fields(zero, state)):
        for a, i in enumerate(model.clusters[p]):
            bare[i] -= np.real(h[3 * a:3 * a + 3])
    bare[np.abs(bare) < 1e-15] = 0.0
    return replace(model, fields=bare)


# ================================================
# XXZ CHAIN WITH ALTERNATING FIELD
# ================================================
@dataclass(frozen=True)
class MgXxzParams:
    """
    XXZ chain with first (J inside pairs, J^E between them) and second
    neighbour (J^D) couplings. Unset anisotropies follow J^E_z/J^E = J_z/J,
    J^D_z = J^E_z/2 and, for s ≥ 1, J_z = J J^E / (2 J^D).
    """

    n_pairs: int = 4
    s: Fraction = HALF
    J: float = 1.0
    J_z: Optional[float] = None
    J_E: float = 1.0
    J_E_z: Optional[float] = None
    J_D: float = 0.5
    J_D_z: Optional[float] = None
    b_0: float = 0.0
    cyclic: bool = True

    def __post_init__(self):
        s = as_spin(self.s, positive=True)
        object.__setattr__(self, "s", s)
        if int(self.n_pairs) < 1:
            raise ValueError(f"n_pairs must be >= 1, got {self.n_pairs}")
        if self.cyclic and int(self.n_pairs) < 2:
            raise ValueError("a cyclic chain needs at least two pairs")
        object.__setattr__(self, "n_pairs", int(self.n_pairs))
        jz = self.J_z
        if jz is None:
            jz = self.J if s == HALF or self.J_D == 0 else self.J * self.J_E / (2 * self.J_D)
        jez = self.J_E_z
        if jez is None:
            jez = jz * self.J_E / self.J if self.J != 0 else self.J_E
        jdz = jez / 2 if self.J_D_z is None else self.J_D_z
        object.__setattr__(self, "J_z", float(jz))
        object.__setattr__(self, "J_E_z", float(jez))
        object.__setattr__(self, "J_D_z", float(jdz))


def mg_angle(params: MgXxzParams) -> float:
    """ξ ∈ (0, π/2] with sin ξ = 2J^D / J^E."""
    if params.J_E == 0:
        raise NoRealAngleError("J^E = 0 leaves sin xi = 2J^D/J^E undefined")
    ratio = 2 * params.J_D / params.J_E
    if ratio < 0 or ratio > 1 + PARAM_RTOL:
        raise NoRealAngleError(f"no real xi: 2J^D/J^E = {ratio:.6g} outside [0, 1]")
    if ratio == 0:
        raise DegenerateAngleError("J^D = 0 gives xi = 0, a product of Neel pairs")
    return math.asin(min(ratio, 1.0))


def mg_pair_energy(params: MgXxzParams, xi: float) -> float:
    if params.s == HALF:
        return -0.25 * (2 * params.J / math.sin(xi) + params.J_z)
    return -float(params.s * (params.s + 1)) * params.J_z


def mg_xxz_chain(params: MgXxzParams) -> ModelBundle:
    n, s = params.n_pairs, params.s
    xi = mg_angle(params)
    if params.cyclic and n % 2 and abs(xi - math.pi / 2) > PARAM_RTOL:
        raise ConstraintViolation(f"alternating angles need an even number of pairs on a ring, got {n}")
    xis = [xi if p % 2 == 0 else math.pi - xi for p in range(n)]

    couplings = {}
    for p in range(n):
        _add(couplings, 2 * p, 2 * p + 1, _diag(params.J, params.J, params.J_z))
    for p, q in _ring_bonds(n, params.cyclic) + ([(1, 0)] if params.cyclic and n == 2 else []):
        _add(couplings, 2 * p + 1, 2 * q, _diag(params.J_E, params.J_E, params.J_E_z))
        for i in (0, 1):
            _add(couplings, 2 * p + i, 2 * q + i, _diag(params.J_D, params.J_D, params.J_D_z))

    model = ModelSpec(
        spins=(s,) * (2 * n),
        clusters=tuple((2 * p, 2 * p + 1) for p in range(n)),
        couplings=couplings,
        family_tag="mg_xxz",
        params={"xi": xis, "parity": [-1] * n},
    )
    state = _singlet_product(s, xis, [-1] * n)

    # b^{1_p} = b_0 - ½ J cot ξ_p, b^{2_p} = b_0 + ½ J cot ξ_p
    target = np.zeros((2 * n, 3))
    for p, xi_p in enumerate(xis):
        half = 0.5 * params.J / math.tan(xi_p)
        target[2 * p, 2] = params.b_0 - half
        target[2 * p + 1, 2] = params.b_0 + half
    model = _compensate(model, state, target)

    e_p = mg_pair_energy(params, xi)
    scale = params.J / math.sin(xi)
    predictions = {"xi": xi, "pair_energy": e_p, "n_pairs": n, "energy_scale": scale,
                   "alternating_field": 0.5 * params.J / math.tan(xi)}

    notes = []
    zz_ok = abs(params.J_E_z - 2 * params.J_D_z) <= PARAM_RTOL * max(1.0, abs(params.J_E_z))
    jz_ok = s == HALF or abs(params.J_z - scale) <= PARAM_RTOL * max(1.0, abs(scale))
    if not zz_ok:
        notes.append(f"J^E_z = {params.J_E_z:.6g} differs from 2J^D_z = {2 * params.J_D_z:.6g}")
    if not jz_ok:
        notes.append(f"spin {s} needs J_z = J/sin(xi) = {scale:.6g}, got {params.J_z:.6g}")
    if notes:
        for note in notes:
            logger.warning(f"mg_xxz: {note}; no dimerized prediction")
        return ModelBundle(model=model, candidates={}, predictions=predictions, notes=tuple(notes))

    if s == HALF:
        ground = params.J * params.J_E / params.J_D > 0 and e_p < -abs(params.b_0) + params.J_z / 4
    else:
        ground = params.J_z > 0 and params.b_0 == 0
    predictions.update(energy=n * e_p, pair_ground=bool(ground))
    logger.info(f"mg_xxz: {n} pairs, spin {s}, xi = {xi:.6f}, E = {n * e_p:.12g}")
    return ModelBundle(model=model, candidates={"dimer": Candidate("dimer", state, model, n * e_p)},
                       predictions=predictions)


# ================================================
# XYZ LADDER AND TETRAMER
# ================================================
@dataclass(frozen=True)
class XyzLadderParams:
    """
    Spin-1/2 pairs with XYZ internal couplings and interpair couplings
    r_pq [J^D on 1-1 and 2-2 legs, J^E on the diagonals]. Unset J^D_y
    follows (J^D_x)² - (J^D_y)² = (J^E_x)² - (J^E_y)²; unset fields
    follow the uniform dimerizing values. Fields carry no mean-field
    correction, so nonzero z interpair couplings show up in the verdict.
    """

    n_pairs: int = 2
    J_x: float = 1.0
    J_y: float = 0.5
    J_z: float = 0.0
    J_Ex: float = 1.0
    J_Ey: float = 0.5
    J_Ez: float = 0.0
    J_Dx: float = 1.5
    J_Dy: Optional[float] = None
    J_Dz: float = 0.0
    range_weights: Optional[Mapping] = None
    B_1: Optional[float] = None
    B_2: Optional[float] = None
    cyclic: bool = True
    exact: bool = False

    def __post_init__(self):
        if int(self.n_pairs) < 2:
            raise ValueError(f"a ladder needs at least two pairs, got {self.n_pairs}")
        object.__setattr__(self, "n_pairs", int(self.n_pairs))
        if self.J_Dy is None:
            square = self.J_Dx ** 2 - self.J_Ex ** 2 + self.J_Ey ** 2
            if square < 0:
                raise ConstraintViolation(f"J^D_y would be imaginary ((J^D_y)² = {square:.6g})")
            object.__setattr__(self, "J_Dy", math.sqrt(square))

    @property
    def constraint_residual(self) -> float:
        """(J^D_x)² - (J^D_y)² - (J^E_x)² + (J^E_y)²"""
        return self.J_Dx ** 2 - self.J_Dy ** 2 - self.J_Ex ** 2 + self.J_Ey ** 2

    def weights(self) -> dict:
        if self.range_weights is not None:
            return {tuple(sorted(k)): float(v) for k, v in dict(self.range_weights).items()}
        return {tuple(sorted(b)): 1.0 for b in _ring_bonds(self.n_pairs, self.cyclic)}


def ladder_angle(j_e: float, j_d_plus: float) -> float:
    """ξ ∈ [0, π/2] with sin ξ = J^E_∓ / J^D_+."""
    if j_d_plus == 0:
        raise NoRealAngleError("J^D_x + J^D_y = 0")
    ratio = j_e / j_d_plus
    if ratio < 0 or ratio > 1 + PARAM_RTOL:
        raise NoRealAngleError(f"no real xi: sin xi = {ratio:.6g}")
    if ratio == 0:
        raise DegenerateAngleError("sin xi = 0: the pair state is a product")
    return math.asin(min(ratio, 1.0))


def ladder_pair_energy(jx: float, jy: float, jz: float, xi: float, parity: int) -> float:
    """¼(-(J_x ∓ J_y)/sin ξ ± J_z) for parity ±1."""
    return 0.25 * (-(jx - parity * jy) / math.sin(xi) + parity * jz)


def _ladder_model(params: XyzLadderParams, b1: float, b2: float) -> ModelSpec:
    n = params.n_pairs
    couplings, weights = {}, {}
    for p in range(n):
        _add(couplings, 2 * p, 2 * p + 1, _diag(params.J_x, params.J_y, params.J_z))
    d = _diag(params.J_Dx, params.J_Dy, params.J_Dz)
    e = _diag(params.J_Ex, params.J_Ey, params.J_Ez)
    for (p, q), r in params.weights().items():
        if r == 0:
            continue
        if p == q or not (0 <= p < n and 0 <= q < n):
            raise ConfigError(f"range weight key {(p, q)} is not a pair of distinct pairs")
        weights[(p, q)] = r
        _add(couplings, 2 * p, 2 * q, d)
        _add(couplings, 2 * p + 1, 2 * q + 1, d)
        _add(couplings, 2 * p, 2 * q + 1, e)
        _add(couplings, 2 * p + 1, 2 * q, e)
    fields = np.zeros((2 * n, 3))
    fields[0::2, 2] = b1
    fields[1::2, 2] = b2
    return ModelSpec(spins=(HALF,) * (2 * n), clusters=tuple((2 * p, 2 * p + 1) for p in range(n)),
                     fields=fields, couplings=couplings, range_weights=weights,
                     family_tag="xyz_ladder")


def xyz_ladder(params: XyzLadderParams) -> ModelBundle:
    """Both uniform vertical dimerized candidates |Ψ^+⟩ and |Ψ^-⟩ of the ladder."""
    n = params.n_pairs
    if not (params.J_x >= abs(params.J_y) and params.J_Dx >= params.J_Ex >= abs(params.J_Ey)):
        logger.warning("xyz_ladder: parameters outside J_x >= |J_y|, J^D_x >= J^E_x >= |J^E_y|")
    residual = params.constraint_residual
    scale = max(1.0, params.J_Dx ** 2, params.J_Ex ** 2)
    notes = []
    if abs(residual) > PARAM_RTOL * scale:
        message = f"(J^D_x)² - (J^D_y)² != (J^E_x)² - (J^E_y)² (residual {residual:.3e})"
        if params.exact:
            raise ConstraintViolation(message)
        notes.append(message)
        logger.warning(f"xyz_ladder: {message}")

    j_d_plus = params.J_Dx + params.J_Dy
    angles, fields = {}, {}
    for parity, j_e in ((1, params.J_Ex - params.J_Ey), (-1, params.J_Ex + params.J_Ey)):
        try:
            xi = ladder_angle(j_e, j_d_plus)
        except (NoRealAngleError, DegenerateAngleError) as err:
            notes.append(f"parity {parity:+d}: {err}")
            continue
        angles[parity] = xi
        # B_± = -½ (J_x ∓ J_y) cot ξ^±
        fields[parity] = -0.5 * (params.J_x - parity * params.J_y) / math.tan(xi)
    if not angles:
        raise NoRealAngleError("no dimerizing angle for either parity: " + "; ".join(notes))

    b_plus, b_minus = fields.get(1, 0.0), fields.get(-1, 0.0)
    b1 = params.B_1 if params.B_1 is not None else (b_plus + b_minus) / 2
    b2 = params.B_2 if params.B_2 is not None else (b_plus - b_minus) / 2
    model = _ladder_model(params, b1, b2)

    candidates = {}
    predictions = {"n_pairs": n, "energy_scale": params.J_x, "B_1": b1, "B_2": b2,
                   "constraint_residual": residual}
    for parity, xi in angles.items():
        label = "plus" if parity == 1 else "minus"
        e_p = ladder_pair_energy(params.J_x, params.J_y, params.J_z, xi, parity)
        tagged = replace(model, params={"xi": [xi] * n, "parity": [parity] * n})
        state = _singlet_product(HALF, [xi] * n, [parity] * n)
        candidates[label] = Candidate(label, state, tagged, n * e_p)
        predictions[f"xi_{label}"] = xi
        predictions[f"pair_energy_{label}"] = e_p
        predictions[f"energy_{label}"] = n * e_p
    return ModelBundle(model=model, candidates=candidates, predictions=predictions, notes=tuple(notes))


def tetramer_critical_coupling(J_x: float, JD_x: float) -> float:
    """J_z^c = √((J^D_x)² - J_x²)"""
    return math.sqrt(JD_x ** 2 - J_x ** 2)


def xyz_tetramer(J_x: float = 1.0, J_y: float = 0.5, JD_x: float = 1.5, J_z: float = 0.0) -> ModelBundle:
    """
    Two pairs with J^E = J on x, y and no z interpair coupling. Besides the
    vertical |Ψ^±⟩ the horizontal mixed-parity state (upper legs in |ψ'^+⟩,
    lower legs in |ψ'^-⟩ at ξ'^- = π/2) is an exact eigenstate for every J_z.
    """
    if not JD_x > J_x > abs(J_y):
        raise ConstraintViolation(f"tetramer needs J^D_x > J_x > |J_y| (got {JD_x}, {J_x}, {J_y})")
    params = XyzLadderParams(n_pairs=2, J_x=J_x, J_y=J_y, J_z=J_z, J_Ex=J_x, J_Ey=J_y, J_Ez=0.0,
                             J_Dx=JD_x, J_Dz=0.0, range_weights={(0, 1): 1.0}, exact=True)
    bundle = xyz_ladder(params)
    model = replace(bundle.model, family_tag="xyz_tetramer")
    jd_y = params.J_Dy
    b1 = bundle.predictions["B_1"]

    # tan ξ'^+ = -¼ (J^D_x - J^D_y) / B_1
    xi_h = math.atan2(0.25 * (JD_x - jd_y), -b1)
    horizontal_model = replace(model.with_clusters(((0, 2), (1, 3))),
                               params={"xi": [xi_h, math.pi / 2], "parity": [1, -1]})
    horizontal_state = _singlet_product(HALF, [xi_h, math.pi / 2], [1, -1], sites=((0, 2), (1, 3)))
    e_h = -0.25 * ((JD_x - jd_y) / math.sin(xi_h) + JD_x + jd_y)

    candidates = {label: replace(c, model=replace(c.model, family_tag="xyz_tetramer"))
                  for label, c in bundle.candidates.items()}
    candidates["horizontal"] = Candidate("horizontal", horizontal_state, horizontal_model, e_h)
    jz_c = tetramer_critical_coupling(J_x, JD_x)
    predictions = dict(bundle.predictions, J_Dy=jd_y, xi_horizontal=xi_h, energy_horizontal=e_h,
                       jz_c=jz_c)
    logger.info(f"xyz_tetramer: J_z^c = {jz_c:.12g}, E' = {e_h:.12g}")
    return ModelBundle(model=model, candidates=candidates, predictions=predictions, notes=bundle.notes)


# ================================================
# FULLY FACTORIZED (SPIN-COHERENT) CHAINS
# ================================================
def xyz_factorizing_angle(J_x: float, J_y: float, J_z: float) -> float:
    """θ ∈ [0, π/2] of the uniform factorizing direction (sin θ, 0, cos θ)."""
    if J_x == J_z:
        if J_y == J_z:
            raise DegenerateAngleError("isotropic couplings: every uniform direction factorizes")
        raise NoRealAngleError("J_x = J_z with J_y != J_z has no factorizing direction")
    ratio = (J_y - J_z) / (J_x - J_z)
    if ratio < -PARAM_RTOL or ratio > 1 + PARAM_RTOL:
        raise NoRealAngleError(f"cos²θ = {ratio:.6g} outside [0, 1]")
    return math.acos(math.sqrt(min(max(ratio, 0.0), 1.0)))


def _axis_strengths(model: ModelSpec, state: ProductState, directions, axis) -> list:
    """Field strengths e_i along n_i that leave b_i = e_i n_i - h_i^mf parallel to `axis`."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    strengths = []
    for (theta, phi), h in zip(directions, mean_fields(replace(model, fields=None), state)):
        n = np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])
        m = np.real(h)
        n_perp, m_perp = n - (n @ axis) * axis, m - (m @ axis) * axis
        e = float(n_perp @ m_perp / (n_perp @ n_perp)) if np.linalg.norm(n_perp) > FIELD_RTOL else 0.0
        if np.linalg.norm(e * n_perp - m_perp) > FIELD_RTOL * max(1.0, np.linalg.norm(m)):
            raise ConstraintViolation(f"no field along {axis.tolist()} factorizes direction {(theta, phi)}")
        strengths.append(e)
    return strengths


def full_factor_chain(directions: Sequence[tuple], couplings, s=HALF,
                      strengths: Optional[Sequence[float]] = None, field_axis=None,
                      cyclic: bool = False) -> ModelBundle:
    """
    Product of spin-coherent states along n_p = (θ_p, φ_p). `couplings` is a
    uniform nearest-neighbour coupling (3x3 or diagonal 3-vector) or a
    mapping {(i, j): J}. Fields are solved so that every effective field is
    e_p n_p; with `field_axis` the e_p are chosen to keep the bare fields
    along that axis.
    """
    s = as_spin(s)
    n = len(directions)
    if n < 1:
        raise ValueError("at least one direction required")
    if isinstance(couplings, Mapping):
        bonds = dict(couplings)
    else:
        bonds = {(i, j): couplings for i, j in _ring_bonds(n, cyclic)}
    model = ModelSpec(spins=(s,) * n, couplings=bonds, family_tag="full_factor",
                      params={"directions": [list(d) for d in directions]})
    state = ProductState(tuple(spin_coherent(s, theta, phi) for theta, phi in directions))

    coupling_check = full_factorization_check(model, state)
    tolerance = resolve(None, "verdict_tolerance")
    bad = {k: r for k, r in coupling_check.coupling_residuals.items() if max(r) >= tolerance}
    if bad:
        raise ConstraintViolation(f"couplings inconsistent with the directions on bonds {sorted(bad)}")

    if field_axis is not None:
        strengths = _axis_strengths(model, state, directions, field_axis)
    strengths = [0.0] * n if strengths is None else [float(e) for e in strengths]
    if len(strengths) != n:
        raise ValueError(f"{len(strengths)} field strengths for {n} sites")
    target = np.array([e * np.array([math.sin(t) * math.cos(f), math.sin(t) * math.sin(f), math.cos(t)])
                       for e, (t, f) in zip(strengths, directions)])
    model = _compensate(model, state, target)

    # ⟨S_i⟩ = s n_i
    means = [float(s) * np.array([math.sin(t) * math.cos(f), math.sin(t) * math.sin(f), math.cos(t)])
             for t, f in directions]
    energy = float(sum(model.fields[i].real @ means[i] for i in range(n))
                   + sum(means[i] @ np.real(mat) @ means[j] for (i, j), mat in model.couplings.items()))
    predictions = {"energy": energy, "strengths": strengths, "n_pairs": n, "energy_scale": 1.0}
    return ModelBundle(model=model, candidates={"coherent": Candidate("coherent", state, model, energy)},
                       predictions=predictions)


def xyz_factorized_chain(n_sites: int = 4, J_x: float = 1.0, J_y: float = 0.5, J_z: float = 0.0,
                         s=HALF, cyclic: bool = False) -> ModelBundle:
    """Uniform XYZ chain in a z field at its factorizing point."""
    theta = xyz_factorizing_angle(J_x, J_y, J_z)
    bundle = full_factor_chain([(theta, 0.0)] * int(n_sites), np.array([J_x, J_y, J_z]), s,
                               field_axis=(0.0, 0.0, 1.0), cyclic=cyclic)
    # bulk value 2s √((J_x - J_z)(J_y - J_z))
    field_f = 2 * float(as_spin(s)) * math.sqrt(max((J_x - J_z) * (J_y - J_z), 0.0))
    predictions = dict(bundle.predictions, theta=theta, factorizing_field=field_f,
                       energy_scale=J_x, n_pairs=int(n_sites))
    return replace(bundle, predictions=predictions)


# ================================================
# SINGLET DIMERS AND SPIN-0 CLUSTERS
# ================================================
def long_range_dimer_chain(n_pairs: int = 4, k: int = 2, J: float = 1.0, s=HALF,
                           cyclic: bool = False) -> ModelBundle:
    """
    Isotropic chain with J^{i,i+j} = J (k + 1 - j) for j ≤ k (k even); the
    product of pair singlets on (2p, 2p+1) is an exact eigenstate.
    """
    s = as_spin(s)
    if k < 2 or k % 2:
        raise ValueError(f"range k must be an even integer >= 2, got {k}")
    n_sites = 2 * int(n_pairs)
    if cyclic and n_sites < 2 * k + 4:
        raise ValueError(f"a cyclic chain with range {k} needs at least {2 * k + 4} sites")
    couplings = {}
    for i in range(n_sites):
        for j in range(i + 1, n_sites):
            dist = min(j - i, n_sites - (j - i)) if cyclic else j - i
            if dist <= k:
                _add(couplings, i, j, J * (k + 1 - dist) * np.eye(3))
    j_pair = J * k
    model = ModelSpec(spins=(s,) * n_sites, clusters=tuple((2 * p, 2 * p + 1) for p in range(n_pairs)),
                      couplings=couplings, family_tag="long_range_dimer")
    state = _singlet_product(s, [math.pi / 2] * n_pairs, [-1] * n_pairs)
    e_p = -float(s * (s + 1)) * j_pair
    return ModelBundle(model=model,
                       candidates={"dimer": Candidate("dimer", state, model, n_pairs * e_p)},
                       predictions={"pair_energy": e_p, "energy": n_pairs * e_p, "n_pairs": n_pairs,
                                    "energy_scale": J})


def spin0_cluster_chain(n_clusters: int = 2, cluster_size: int = 4, s=HALF, J_p: float = 1.0,
                        J_inter=0.5, cyclic: bool = False) -> ModelBundle:
    """
    Clusters of N_p spins in the total-spin-0 state with maximal spin on each
    half. Internal coupling J_p S_{1'}·S_{2'}; neighbouring clusters couple
    every site pair through the same J_inter (scalar, 3-vector or 3x3).
    """
    s = as_spin(s)
    n_clusters, size = int(n_clusters), int(cluster_size)
    local: LocalState = cluster_spin0_state(size, s)
    inter = np.array(J_inter, dtype=float)
    if inter.ndim == 0:
        inter = float(inter) * np.eye(3)
    elif inter.shape == (3,):
        inter = np.diag(inter)

    clusters = tuple(tuple(range(c * size, (c + 1) * size)) for c in range(n_clusters))
    couplings = {}
    half = size // 2
    for group in clusters:
        for a in group[:half]:
            for b in group[half:]:
                _add(couplings, a, b, J_p * np.eye(3))
    for p, q in _ring_bonds(n_clusters, cyclic):
        for i in clusters[p]:
            for j in clusters[q]:
                _add(couplings, i, j, inter)

    model = ModelSpec(spins=(s,) * (n_clusters * size), clusters=clusters, couplings=couplings,
                      family_tag="spin0_cluster")
    state = ProductState((local,) * n_clusters)
    big_s = float(half * s)
    e_p = -big_s * (big_s + 1) * J_p
    return ModelBundle(model=model,
                       candidates={"cluster": Candidate("cluster", state, model, n_clusters * e_p)},
                       predictions={"pair_energy": e_p, "energy": n_clusters * e_p,
                                    "n_pairs": n_clusters, "energy_scale": J_p})


# ================================================
# REGISTRY
# ================================================
def _mg(**kw) -> ModelBundle:
    return mg_xxz_chain(MgXxzParams(**kw))


def _ladder(**kw) -> ModelBundle:
    return xyz_ladder(XyzLadderParams(**kw))


GENERATORS = {
    "mg_xxz": _mg,
    "xyz_ladder": _ladder,
    "xyz_tetramer": xyz_tetramer,
    "xyz_factorized": xyz_factorized_chain,
    "long_range_dimer": long_range_dimer_chain,
    "spin0_cluster": spin0_cluster_chain,
}

# command-line spellings
PARAM_ALIASES = {
    "pairs": "n_pairs", "JE": "J_E", "JD": "J_D", "Jz": "J_z", "JEz": "J_E_z", "JDz": "J_D_z",
    "b0": "b_0", "Jx": "J_x", "Jy": "J_y", "JEx": "J_Ex", "JEy": "J_Ey", "JDx": "J_Dx",
    "JDy": "J_Dy", "B1": "B_1", "B2": "B_2", "sites": "n_sites", "clusters": "n_clusters",
    "size": "cluster_size", "Jp": "J_p", "Jinter": "J_inter",
}


def canonical_params(family: str, params: Mapping) -> dict:
    """Apply command-line aliases (tetramer takes J_z from Jz, JD_x from JDx)."""
    out = {}
    for key, value in dict(params).items():
        key = PARAM_ALIASES.get(key, key)
        if family == "xyz_tetramer" and key == "J_Dx":
            key = "JD_x"
        out[key] = value
    return out


def build_bundle(family: str, params: Optional[Mapping] = None) -> ModelBundle:
    if family not in GENERATORS:
        raise UnknownFamilyError(f"unknown model family {family!r}; known: {sorted(GENERATORS)}")
    kwargs = canonical_params(family, params or {})
    try:
        return GENERATORS[family](**kwargs)
    except TypeError as err:
        raise ConfigError(f"bad parameters for {family}: {err}") from err


# ================================================
# SWEEPS AND BOUNDARIES
# ================================================
def sweep_point(family: str, params: Mapping, axis: str, value: float, k: Optional[int] = None,
                cap: Optional[int] = None, seed: Optional[int] = None,
                threshold: Optional[float] = None) -> dict:
    """Ground energy, gap, degeneracy and candidate overlaps at one sweep value."""
    threshold = resolve(threshold, "overlap_threshold")
    bundle = build_bundle(family, {**dict(params), axis: value})
    result = spectrum(assemble(bundle.model), k=k, cap=cap, seed=seed)
    n_pairs = bundle.predictions.get("n_pairs", 1)
    scale = bundle.predictions.get("energy_scale", 1.0) or 1.0
    row = {
        axis: value,
        "ground_energy": result.ground_energy,
        "ground_energy_scaled": result.ground_energy / (n_pairs * scale),
        "gap": result.gap,
        "degeneracy": result.degeneracy,
        "method": result.method,
    }
    for label, cand in bundle.candidates.items():
        overlap = ground_overlap(result, cand.state)
        row[f"overlap_{label}"] = overlap
        row[f"energy_{label}"] = cand.energy
        row[f"in_ground_{label}"] = bool(overlap > 1 - threshold)
    return row


def bundle_from_model(model: ModelSpec, state: Optional[ProductState] = None) -> ModelBundle:
    """Wrap a user model (and optional trial state) without predictions."""
    candidates = {}
    if state is not None:
        if state.sites != model.clusters:
            model = model.with_clusters(state.sites)
        candidates["trial"] = Candidate("trial", state, model, None)
    return ModelBundle(model=model, candidates=candidates, predictions={"n_pairs": 1, "energy_scale": 1.0})


def bundle_spectrum_row(bundle: ModelBundle, k: Optional[int] = None, cap: Optional[int] = None,
                        seed: Optional[int] = None) -> dict:
    """Ascending levels E0, E1, ... with predicted candidate energies as marked columns."""
    result = spectrum(assemble(bundle.model), k=k, cap=cap, seed=seed)
    row = {"scale": bundle.predictions.get("n_pairs", 1) * (bundle.predictions.get("energy_scale") or 1.0),
           "method": result.method}
    for label, cand in bundle.candidates.items():
        row[f"predicted_{label}"] = cand.energy
    row.update({f"E{i}": float(e) for i, e in enumerate(result.eigenvalues)})
    return row


def spectrum_row(family: str, params: Mapping, axis: str, value: float, k: Optional[int] = None,
                 cap: Optional[int] = None, seed: Optional[int] = None) -> dict:
    bundle = build_bundle(family, {**dict(params), axis: value})
    return {axis: value, **bundle_spectrum_row(bundle, k=k, cap=cap, seed=seed)}


def run_sweep(worker: Callable, family: str, params: Mapping, axis: str, values: Sequence[float],
              n_jobs: Optional[int] = None, **kwargs) -> list:
    """Map `worker` over the sweep values with joblib; output keeps the input order."""
    n_jobs = resolve(n_jobs, "n_jobs")
    values = [float(v) for v in values]
    logger.info(f"sweep {family}.{axis} over {len(values)} points (n_jobs={n_jobs})")
    return Parallel(n_jobs=n_jobs)(
        delayed(worker)(family, dict(params), axis, v, **kwargs) for v in values
    )


def bisect_boundary(predicate: Callable[[float], bool], lo: float, hi: float,
                    resolution: Optional[float] = None) -> float:
    """Point where `predicate` flips inside [lo, hi], to within `resolution`."""
    resolution = resolve(resolution, "boundary_resolution")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    f_lo, f_hi = bool(predicate(lo)), bool(predicate(hi))
    if f_lo == f_hi:
        raise ValueError(f"predicate does not change between {lo} and {hi}")
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if bool(predicate(mid)) == f_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _is_ground(family: str, params: Mapping, axis: str, label: str, value: float,
               k: Optional[int] = None, cap: Optional[int] = None,
               threshold: Optional[float] = None) -> bool:
    row = sweep_point(family, params, axis, value, k=k, cap=cap, threshold=threshold)
    return bool(row.get(f"in_ground_{label}", False))


def ground_state_predicate(family: str, params: Mapping, axis: str, label: str,
                           k: Optional[int] = None, cap: Optional[int] = None) -> Callable[[float], bool]:
    """value -> whether candidate `label` spans the ground space there."""
    return lambda value: _is_ground(family, params, axis, label, value, k=k, cap=cap)


def sweep_boundaries(rows: Sequence[dict], family: str, params: Mapping, axis: str,
                     resolution: Optional[float] = None, k: Optional[int] = None,
                     cap: Optional[int] = None) -> list:
    """Bisect every change of a candidate's ground-state flag between adjacent sweep points."""
    prefix = "in_ground_"
    labels = sorted({key[len(prefix):] for row in rows for key in row if key.startswith(prefix)})
    boundaries = []
    for label in labels:
        predicate = ground_state_predicate(family, params, axis, label, k=k, cap=cap)
        for left, right in zip(rows, rows[1:]):
            a, b = left.get(prefix + label, False), right.get(prefix + label, False)
            if a != b:
                value = bisect_boundary(predicate, left[axis], right[axis], resolution)
                boundaries.append({"label": label, "boundary": value, "enters": bool(b)})
                logger.info(f"{label}: ground-state boundary at {axis} = {value:.10g}")
    return boundaries


def tetramer_boundaries(J_x: float = 1.0, J_y: float = 0.5, JD_x: float = 1.5,
                        resolution: Optional[float] = None) -> tuple:
    """
    Bisected J_z where |Ψ^+⟩ (below) and |Ψ^-⟩ (above) take over from the
    horizontal state, i.e. -J_z^c and +J_z^c.
    """
    resolution = resolve(resolution, "boundary_resolution") * abs(J_x)
    span = 2 * (tetramer_critical_coupling(J_x, JD_x) + JD_x)
    params = {"J_x": J_x, "J_y": J_y, "JD_x": JD_x}
    lower = bisect_boundary(ground_state_predicate("xyz_tetramer", params, "J_z", "plus"),
                            -span, 0.0, resolution)
    upper = bisect_boundary(ground_state_predicate("xyz_tetramer", params, "J_z", "minus"),
                            0.0, span, resolution)
    return lower, upper
