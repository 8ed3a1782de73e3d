# -*- coding: utf-8 -*-
"""
cli.py — command-line front end of covfactor
→ verify | solve | spectrum | sweep | export-model
→ Models come from a built-in family (--model) or a JSON model file (--config)
→ Data goes to stdout or --out, diagnostics to stderr
→ Exit codes: 0 ok, 1 bad input, 2 no exact dimerization, 3 numerical failure, 4 verdict false
"""

import argparse
import json
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from src.config import resolve
from src.factorization import (
    check_conditions,
    coupling_space_basis,
    factor_covariances,
    full_factorization_check,
    solve_fields,
)
from src.hamiltonian import ModelSpec, QuadraticShift, assemble
from src.logger import get_logger
from src.models import (
    ModelBundle,
    build_bundle,
    bundle_from_model,
    bundle_spectrum_row,
    canonical_params,
    run_sweep,
    spectrum_row,
    sweep_boundaries,
    sweep_point,
)
from src.monitor import check_dense_feasible, track_run
from src.reporter import generate_pdf_report, report_to_dict, to_jsonable, write_csv, write_json, write_matrix
from src.spin_algebra import AXES
from src.states import (
    GeneralizedSingletSpec,
    LocalState,
    ProductState,
    cluster_spin0_state,
    generalized_singlet,
    spin_coherent,
    split_separable,
)
from src.utils import (
    ConfigError,
    ConstraintViolation,
    ConvergenceError,
    CovFactorError,
    DegenerateAngleError,
    DenseCapExceeded,
    NoRealAngleError,
    NonHermitianError,
    NotConservedError,
)

logger = get_logger(__name__)

COMMANDS = ("verify", "solve", "spectrum", "sweep", "export-model")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NO_DIMERIZATION = 2
EXIT_NUMERICAL = 3
EXIT_VERDICT_FALSE = 4


# ================================================
# RUN CONFIG
# ================================================
@dataclass(frozen=True)
class SweepAxis:
    name: str
    start: float
    stop: float
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"sweep needs at least one step, got {self.steps}")

    def values(self) -> list:
        if self.steps == 1:
            return [float(self.start)]
        return [float(v) for v in np.linspace(self.start, self.stop, self.steps)]


@dataclass(frozen=True)
class RunConfig:
    command: str
    family: Optional[str] = None
    params: dict = field(default_factory=dict)
    config_path: Optional[str] = None
    tolerance: Optional[float] = None
    dense_cap: Optional[int] = None
    lowest: Optional[int] = None
    seed: Optional[int] = None
    n_jobs: Optional[int] = None
    out: Optional[str] = None
    candidate: Optional[str] = None
    sweep: Optional[SweepAxis] = None
    pdf: Optional[str] = None
    matrix: Optional[str] = None
    basis: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if (self.family is None) == (self.config_path is None):
            raise ConfigError("give exactly one of --model FAMILY or --config FILE")
        if self.tolerance is not None and self.tolerance <= 0:
            raise ConfigError(f"--tol must be positive, got {self.tolerance}")
        if self.dense_cap is not None and self.dense_cap < 1:
            raise ConfigError(f"--dense-cap must be positive, got {self.dense_cap}")
        if self.lowest is not None and self.lowest < 1:
            raise ConfigError(f"--lowest must be >= 1, got {self.lowest}")
        if self.command == "sweep" and self.sweep is None:
            raise ConfigError("sweep needs --sweep AXIS START STOP STEPS")
        if self.sweep is not None and self.family is None:
            raise ConfigError("sweeps run over built-in families only (--model)")


# ================================================
# ARGUMENT PARSING
# ================================================
class CliParser(argparse.ArgumentParser):
    """argparse that raises ConfigError instead of exiting"""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> CliParser:
    parser = CliParser(prog="covfactor", allow_abbrev=False,
                       description="Exact factorized eigenstates of quadratic spin Hamiltonians.",
                       epilog="Family parameters follow as --name value, e.g. --pairs 4 --JD 0.25.")
    parser.add_argument("command", choices=COMMANDS)
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--model", dest="family", help="built-in model family")
    source.add_argument("--config", dest="config_path", help="JSON model file")
    parser.add_argument("--tol", type=float, help="verdict tolerance (relative)")
    parser.add_argument("--dense-cap", type=int, help="largest dimension for dense diagonalization")
    parser.add_argument("--lowest", type=int, help="iterative solver: number of lowest levels")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--jobs", dest="n_jobs", type=int, help="parallel sweep workers")
    parser.add_argument("--out", help="output file (default stdout)")
    parser.add_argument("--candidate", help="candidate state label of the family")
    parser.add_argument("--sweep", nargs=4, metavar=("AXIS", "START", "STOP", "STEPS"))
    parser.add_argument("--pdf", help="verify: also write a PDF report")
    parser.add_argument("--matrix", help="export-model: coordinate-triplet Hamiltonian file")
    parser.add_argument("--basis", action="store_true", help="solve: include coupling-space bases")
    boundary = parser.add_mutually_exclusive_group()
    boundary.add_argument("--cyclic", dest="cyclic", action="store_true")
    boundary.add_argument("--open", dest="cyclic", action="store_false")
    parser.set_defaults(cyclic=None)
    return parser


def parse_value(raw: str):
    """JSON scalar or list, a fraction like 1/2, else the raw string"""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        pass
    try:
        return Fraction(raw)
    except ValueError:
        return raw


def parse_family_params(extras: Sequence[str]) -> dict:
    params, i = {}, 0
    extras = list(extras)
    while i < len(extras):
        token = extras[i]
        if not token.startswith("--") or len(token) == 2:
            raise ConfigError(f"unexpected argument {token!r}")
        key = token[2:]
        if "=" in key:
            key, raw = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extras):
                raise ConfigError(f"parameter --{key} needs a value")
            raw = extras[i + 1]
            i += 2
        params[key] = parse_value(raw)
    return params


def parse_args(argv: Optional[Sequence[str]] = None) -> RunConfig:
    args, extras = build_parser().parse_known_args(argv)
    params = parse_family_params(extras)
    if params and args.family is None:
        raise ConfigError(f"family parameters {sorted(params)} need --model")
    if args.cyclic is not None:
        params["cyclic"] = args.cyclic
    sweep = None
    if args.sweep:
        name, start, stop, steps = args.sweep
        try:
            sweep = SweepAxis(name, float(start), float(stop), int(steps))
        except ValueError as err:
            raise ConfigError(f"bad --sweep values: {err}") from err
    return RunConfig(
        command=args.command, family=args.family, params=params, config_path=args.config_path,
        tolerance=args.tol, dense_cap=args.dense_cap, lowest=args.lowest, seed=args.seed,
        n_jobs=args.n_jobs, out=args.out, candidate=args.candidate, sweep=sweep, pdf=args.pdf,
        matrix=args.matrix, basis=args.basis,
    )


# ================================================
# MODEL FILES
# ================================================
def _spin(value):
    return Fraction(value) if isinstance(value, str) else value


def _axis(value) -> int:
    if isinstance(value, str):
        if value not in AXES:
            raise ConfigError(f"axis must be one of {AXES}, got {value!r}")
        return AXES.index(value)
    if int(value) not in (0, 1, 2):
        raise ConfigError(f"axis index must be 0, 1 or 2, got {value!r}")
    return int(value)


def _complex(re, im) -> complex:
    return complex(float(re), float(im))


def _matrix_records(records) -> dict:
    out = {}
    for rec in records:
        i, j, mu, nu, re, im = rec
        mat = out.setdefault((int(i), int(j)), np.zeros((3, 3), dtype=complex))
        mat[_axis(mu), _axis(nu)] += _complex(re, im)
    return out


def _local_state(record: dict) -> LocalState:
    kind = record.get("type")
    if kind == "generalized_singlet":
        return generalized_singlet(GeneralizedSingletSpec(_spin(record["s"]), float(record["xi"]),
                                                          int(record.get("parity", -1))))
    if kind == "coherent":
        return spin_coherent(_spin(record["s"]), float(record["theta"]), float(record["phi"]))
    if kind == "spin0_cluster":
        return cluster_spin0_state(int(record["n_sites"]), _spin(record["s"]))
    if kind == "amplitudes":
        amps = [_complex(re, im) for re, im in record["amplitudes"]]
        return LocalState.normalized(amps, tuple(_spin(s) for s in record["spins"]))
    raise ConfigError(f"unknown factor type {kind!r}")


def model_from_dict(doc: dict) -> tuple:
    """(ModelSpec, ProductState or None) from a parsed model document"""
    try:
        spins = tuple(_spin(s) for s in doc["spins"])
        fields = np.zeros((len(spins), 3), dtype=complex)
        for site, axis, re, im in doc.get("fields", []):
            fields[int(site), _axis(axis)] += _complex(re, im)
        shifts = tuple(QuadraticShift(i, j, mat)
                       for (i, j), mat in _matrix_records(doc.get("shifts", [])).items())
        model = ModelSpec(
            spins=spins,
            clusters=doc.get("clusters"),
            fields=fields,
            couplings=_matrix_records(doc.get("couplings", [])),
            range_weights={(int(p), int(q)): float(r) for p, q, r in doc.get("range_weights", [])},
            family_tag=doc.get("family_tag"),
            params=doc.get("params", {}),
            shifts=shifts,
            energy_offset=float(doc.get("energy_offset", 0.0)),
        )
        state = None
        if doc.get("state"):
            block = doc["state"]
            factors = tuple(_local_state(rec) for rec in block["factors"])
            state = ProductState(factors, block.get("sites"))
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as err:
        raise ConfigError(f"malformed model file: {err}") from err
    return model, state


def load_model_file(path: str) -> tuple:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as err:
        raise ConfigError(f"cannot read model file {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"model file {path} is not valid JSON: {err}") from err
    if not isinstance(doc, dict):
        raise ConfigError(f"model file {path} must hold a JSON object")
    logger.info(f"loaded model file {path}")
    return model_from_dict(doc)


def _records(matrix: np.ndarray, i: int, j: int) -> list:
    return [[i, j, AXES[mu], AXES[nu], matrix[mu, nu].real, matrix[mu, nu].imag]
            for mu in range(3) for nu in range(3) if matrix[mu, nu] != 0]


def model_to_dict(model: ModelSpec, state: Optional[ProductState] = None) -> dict:
    """Explicit record form; amplitudes are written out for every trial factor."""
    doc = {
        "spins": [str(s) for s in model.spins],
        "clusters": [list(g) for g in model.clusters],
        "fields": [[i, AXES[a], model.fields[i, a].real, model.fields[i, a].imag]
                   for i in range(model.n_sites) for a in range(3) if model.fields[i, a] != 0],
        "couplings": [rec for (i, j), mat in model.couplings.items() for rec in _records(mat, i, j)],
        "range_weights": [[p, q, r] for (p, q), r in model.range_weights.items()],
        "shifts": [rec for sh in model.shifts for rec in _records(sh.matrix, sh.site_i, sh.site_j)],
        "family_tag": model.family_tag,
        "params": to_jsonable(model.params),
        "energy_offset": model.energy_offset,
    }
    if state is not None:
        doc["state"] = {
            "factors": [{"type": "amplitudes", "spins": [str(s) for s in f.factor_spins],
                         "amplitudes": to_jsonable(f.amplitudes)} for f in state.factors],
            "sites": [list(g) for g in state.sites],
        }
    return doc


# ================================================
# MODEL RESOLUTION
# ================================================
def resolve_bundle(config: RunConfig) -> ModelBundle:
    if config.family is not None:
        return build_bundle(config.family, config.params)
    model, state = load_model_file(config.config_path)
    return bundle_from_model(model, state)


def _candidate(bundle: ModelBundle, label: Optional[str]):
    if label is None:
        if not bundle.candidates:
            if bundle.notes:
                raise ConstraintViolation("; ".join(bundle.notes))
            raise ConfigError("no trial state: add a state block to the model file")
        return bundle.primary
    if label not in bundle.candidates:
        raise ConfigError(f"unknown candidate {label!r}; available: {sorted(bundle.candidates)}")
    return bundle.candidates[label]


def _axis_key(config: RunConfig) -> str:
    return next(iter(canonical_params(config.family, {config.sweep.name: 0.0})))


def _check_dense_cap(model: ModelSpec, config: RunConfig) -> None:
    if config.lowest is None:
        check_dense_feasible(int(np.prod(model.site_dims)), config.dense_cap)


# ================================================
# COMMANDS
# ================================================
def cmd_verify(config: RunConfig) -> int:
    bundle = resolve_bundle(config)
    cand = _candidate(bundle, config.candidate)
    report = check_conditions(cand.model, cand.state, config.tolerance)
    out = dict(report_to_dict(report), candidate=cand.label, family=cand.model.family_tag,
               predicted_energy=cand.energy)
    if cand.energy is not None and report.energy is not None:
        out["energy_mismatch"] = abs(report.energy - cand.energy)
    write_json(out, config.out)
    if config.pdf:
        label = f"{config.family or config.config_path} / {cand.label}"
        generate_pdf_report(report, config.pdf, model_label=label)
    return EXIT_OK if report.verdict else EXIT_VERDICT_FALSE


def _pair_entry(basis, include_basis: bool) -> dict:
    entry = {
        "pair": list(basis.pair),
        "dimension": basis.dimension,
        "expected_dimension": basis.expected_dimension,
        "direct_dimension": basis.direct_dimension,
        "real_dimension": basis.real_basis.shape[0],
        "total": basis.shape[0] * basis.shape[1],
    }
    if include_basis:
        entry["basis"] = basis.matrices()
    return entry


def solve_spaces(model: ModelSpec, state: ProductState, include_basis: bool = False) -> dict:
    """Coupling spaces of every coupled factor pair (all pairs when none are coupled) and field spaces."""
    _, covs = factor_covariances(state)
    pairs = model.coupled_factor_pairs() or list(combinations(range(len(covs)), 2))
    factors = []
    for p, cov in enumerate(covs):
        space = solve_fields(cov, model, state, p)
        factors.append({
            "factor": p,
            "sites": list(state.sites[p]),
            "rank": cov.rank,
            "dim": cov.dim,
            "field_dimension": space.dimension,
            "field_directions": space.directions.T,
            "real_field_dimension": space.real_directions.shape[1],
            "mean_field": space.mean_field,
        })
    couplings = [_pair_entry(coupling_space_basis(covs[p], covs[q], (p, q)), include_basis)
                 for p, q in pairs]
    return {"factors": factors, "pairs": couplings}


def cmd_solve(config: RunConfig) -> int:
    bundle = resolve_bundle(config)
    cand = _candidate(bundle, config.candidate)
    model, state = cand.model, cand.state
    out = {"candidate": cand.label, "separable": False}

    separable = split_separable(state) if any(len(g) > 1 for g in state.sites) else None
    if separable is not None:
        logger.info("trial state is a product of single-site states; using full factorization")
        model, state = model.with_clusters(separable.sites), separable
        out["separable"] = True
    out.update(solve_spaces(model, state, config.basis))

    if all(len(g) == 1 for g in state.sites):
        try:
            full = full_factorization_check(model, state, config.tolerance)
            out["full_factorization"] = full
        except ValueError as err:
            out["full_factorization"] = None
            logger.warning(f"full factorization check skipped: {err}")
    write_json(out, config.out)
    return EXIT_OK


def cmd_spectrum(config: RunConfig) -> int:
    if config.sweep is None:
        bundle = resolve_bundle(config)
        _check_dense_cap(bundle.model, config)
        with track_run("spectrum"):
            rows = [bundle_spectrum_row(bundle, k=config.lowest, cap=config.dense_cap, seed=config.seed)]
    else:
        axis = _axis_key(config)
        values = config.sweep.values()
        _check_dense_cap(build_bundle(config.family, {**config.params, axis: values[0]}).model, config)
        with track_run("spectrum sweep"):
            rows = run_sweep(spectrum_row, config.family, config.params, axis, values,
                             n_jobs=config.n_jobs, k=config.lowest, cap=config.dense_cap,
                             seed=config.seed)
    write_csv(rows, config.out)
    return EXIT_OK


def cmd_sweep(config: RunConfig) -> int:
    axis = _axis_key(config)
    values = config.sweep.values()
    first = build_bundle(config.family, {**config.params, axis: values[0]})
    _check_dense_cap(first.model, config)
    with track_run("phase sweep"):
        points = run_sweep(sweep_point, config.family, config.params, axis, values,
                           n_jobs=config.n_jobs, k=config.lowest, cap=config.dense_cap,
                           seed=config.seed)
        scale = abs(first.predictions.get("energy_scale") or 1.0)
        resolution = resolve(None, "boundary_resolution") * scale
        boundaries = sweep_boundaries(points, config.family, config.params, axis,
                                      resolution=resolution, k=config.lowest, cap=config.dense_cap)
    rows = [{"kind": "point", **row} for row in points]
    rows += [{"kind": "boundary", axis: b["boundary"], "label": b["label"], "enters": b["enters"]}
             for b in boundaries]
    write_csv(rows, config.out)
    return EXIT_OK


def cmd_export_model(config: RunConfig) -> int:
    bundle = resolve_bundle(config)
    model, state = bundle.model, None
    if bundle.candidates:
        cand = _candidate(bundle, config.candidate)
        model, state = cand.model, cand.state
    write_json(model_to_dict(model, state), config.out)
    if config.matrix:
        write_matrix(assemble(model, allow_non_hermitian=not model.hermitian), config.matrix)
    return EXIT_OK


HANDLERS = {
    "verify": cmd_verify,
    "solve": cmd_solve,
    "spectrum": cmd_spectrum,
    "sweep": cmd_sweep,
    "export-model": cmd_export_model,
}


# ================================================
# ENTRY
# ================================================
def exit_code(err: BaseException) -> int:
    if isinstance(err, (NoRealAngleError, DegenerateAngleError, ConstraintViolation)):
        return EXIT_NO_DIMERIZATION
    if isinstance(err, (NotConservedError, NonHermitianError, DenseCapExceeded, ConvergenceError)):
        return EXIT_NUMERICAL
    return EXIT_CONFIG


def run(config: RunConfig) -> int:
    if config.tolerance is not None:
        logger.debug(f"verdict tolerance {config.tolerance:g} for this run")
    return HANDLERS[config.command](config)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        config = parse_args(argv)
        return run(config)
    except (CovFactorError, ValueError) as err:
        code = exit_code(err)
        if isinstance(err, ConvergenceError):
            logger.error(f"{err} (best residual {err.best_residual:.3e})")
        else:
            logger.error(f"{type(err).__name__}: {err}")
        return code
