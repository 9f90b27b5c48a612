"""Scenario files, the three-controller pipeline, and result emission.

A scenario is one YAML document (conventionally ``*.scn``) declaring the
problem data plus solver and simulation options.  The schema is strict:
unknown keys are rejected so typos fail loudly.  Layout::

    name: double-integrator          # optional
    horizon: 10
    system:                          # constant matrices ...
      A: [[1, 1], [0, 1]]
      B: [[0], [1]]
      D: [[0.01, 0], [0, 0.01]]
    # ... or per-step lists (A_steps: [ [[...]], ... ]), or a template:
    # system: {template: planar_double_integrator, dt: 0.2, noise: 0.01}
    cost:
      Q: [[0, 0], [0, 0]]            # or Q_steps / R_steps
      R: [[1]]
    boundary:
      mu0: [0, 8]
      Sigma0: [[1, 0], [0, 0.5]]
      muN: [6, 0]
      SigmaN: [[0.5, 0], [0, 0.5]]
    chance:                          # optional
      total_risk: 0.011
      halfspaces:
        - {a: [1, 1], b: 20, steps: all, p_fail: 0.001}
    solver:                          # optional
      backend: CLARABEL
      tol: 1.0e-8
      max_iters: 200
    simulation:                      # optional
      samples: 10000
      seed: 0
    output_dir: results/di          # optional

``steps`` is ``all``, an explicit list, or ``{from: i, to: j}``
(inclusive).  The ``planar_double_integrator`` template expands, before
validation, to the planar kinematic model

    A = [[1,0,dt,0],[0,1,0,dt],[0,0,1,0],[0,0,0,1]],
    B = [[dt^2,0],[0,dt^2],[dt,0],[0,dt]],      D = noise * I_4.

Emitted files (per controller mode, see :func:`emit`): a trajectory CSV
(``step, mean_0..mean_{n-1}``), a covariance CSV (``step`` plus the
row-major entries ``cov_i_j``), an optional terminal-sample CSV, and one
machine-readable JSON summary.  Emission is deterministic: re-running with
the same seed and backend settings reproduces the files byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .backends import CvxpyBackend, default_backend
from .chance import DeterministicRow, make_rows, row_residual
from .conic import SolveReport, assemble, objective_value, solve
from .lifting import LiftedSystem, build_lifted, lift_halfspaces
from .meansteer import MeanPlan, open_loop_gain, solve_mean
from .problem import HalfspaceConstraint, ProblemSpec
from .simulate import SimReport, closed_moments, monte_carlo, recover_L, step_moments

__all__ = [
    "ParseError",
    "SchemaError",
    "ScenarioOptions",
    "ChanceCheck",
    "ResultBundle",
    "MODES",
    "parse_scenario",
    "bundled_scenario",
    "run",
    "emit",
]

MODES = ("mean-only", "cov", "chance")
CSV_SCHEMA_VERSION = 1
# Numerical slack when declaring a deterministic chance row satisfied.
CHANCE_CHECK_TOL = 1e-9


class ParseError(ValueError):
    """Scenario file is not well-formed YAML."""


class SchemaError(ValueError):
    """Scenario file violates the strict schema."""


@dataclass(frozen=True)
class ScenarioOptions:
    name: str = ""
    backend: str | None = None
    tol: float | None = None
    max_iters: int | None = None
    samples: int = 10000
    seed: int = 0
    output_dir: str | None = None
    scenario_hash: str | None = None


@dataclass(frozen=True)
class ChanceCheck:
    """Deterministic chance rows evaluated at a fixed gain."""

    feasible: bool
    residuals: np.ndarray
    labels: tuple[str, ...]
    worst_label: str
    worst_residual: float


@dataclass(frozen=True)
class ResultBundle:
    """Everything one controller mode produced for one scenario."""

    name: str
    mode: str
    scenario_hash: str | None
    cost: float
    mean_traj: np.ndarray            # (N+1, n_x) closed-loop mean
    cov_traj: np.ndarray             # (N+1, n_x, n_x) closed-loop covariance
    gain: np.ndarray
    solve_report: SolveReport | None
    mean_plan: MeanPlan | None
    chance_check: ChanceCheck | None
    sim_report: SimReport | None
    backend_name: str
    seed: int
    samples: int
    versions: dict


# ---------------------------------------------------------------------------
# parsing

def _check_keys(mapping, where: str, required=(), optional=()):
    if not isinstance(mapping, dict):
        raise SchemaError(f"{where} must be a mapping")
    unknown = sorted(set(mapping) - set(required) - set(optional))
    if unknown:
        raise SchemaError(f"unknown key '{unknown[0]}' in {where}")
    missing = sorted(set(required) - set(mapping))
    if missing:
        raise SchemaError(f"missing key '{missing[0]}' in {where}")


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where} must be a number, got {value!r}")
    return float(value)


def _integer(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{where} must be an integer, got {value!r}")
    return value


def _vector(value, where: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise SchemaError(f"{where} must be a nonempty list of numbers")
    return np.array([_number(v, where) for v in value])


def _matrix(value, where: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise SchemaError(f"{where} must be a nonempty list of rows")
    rows = [_vector(row, f"{where} row {i}") for i, row in enumerate(value)]
    width = rows[0].size
    if any(r.size != width for r in rows):
        raise SchemaError(f"{where} has ragged rows")
    return np.vstack(rows)


def _matrix_steps(section, where: str, base: str, horizon: int) -> list[np.ndarray]:
    """Resolve a constant matrix or per-step list for key ``base``."""
    const_key, steps_key = base, f"{base}_steps"
    if (const_key in section) == (steps_key in section):
        raise SchemaError(
            f"{where} needs exactly one of '{const_key}' or '{steps_key}'"
        )
    if const_key in section:
        return [_matrix(section[const_key], f"{where}.{const_key}")] * horizon
    value = section[steps_key]
    if not isinstance(value, list) or len(value) != horizon:
        raise SchemaError(
            f"{where}.{steps_key} must list exactly {horizon} matrices"
        )
    return [
        _matrix(v, f"{where}.{steps_key}[{k}]") for k, v in enumerate(value)
    ]


def _expand_template(section, where: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    _check_keys(section, where, required=("template", "dt"), optional=("noise",))
    kind = section["template"]
    if kind != "planar_double_integrator":
        raise SchemaError(f"unknown system template '{kind}' in {where}")
    dt = _number(section["dt"], f"{where}.dt")
    noise = _number(section.get("noise", 0.0), f"{where}.noise")
    A = np.array([
        [1.0, 0.0, dt, 0.0],
        [0.0, 1.0, 0.0, dt],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    B = np.array([
        [dt * dt, 0.0],
        [0.0, dt * dt],
        [dt, 0.0],
        [0.0, dt],
    ])
    D = noise * np.eye(4)
    return A, B, D


def _steps(value, where: str, horizon: int) -> tuple[int, ...]:
    if value == "all":
        return tuple(range(horizon + 1))
    if isinstance(value, list):
        return tuple(_integer(v, where) for v in value)
    if isinstance(value, dict):
        _check_keys(value, where, required=("from", "to"))
        lo = _integer(value["from"], f"{where}.from")
        hi = _integer(value["to"], f"{where}.to")
        if lo > hi:
            raise SchemaError(f"{where} has from > to")
        return tuple(range(lo, hi + 1))
    raise SchemaError(f"{where} must be 'all', a list, or a from/to mapping")


def parse_scenario(path) -> tuple[ProblemSpec, ScenarioOptions]:
    """Parse and validate a scenario file.

    Raises :class:`ParseError` for malformed YAML, :class:`SchemaError`
    for schema violations (naming the offending key), and forwards
    :class:`covsteer.problem.InvalidProblem` when the resulting spec fails
    validation.
    """
    path = Path(path)
    raw = path.read_bytes()
    try:
        doc = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top level must be a mapping")

    _check_keys(
        doc,
        "scenario",
        required=("horizon", "system", "cost", "boundary"),
        optional=("name", "chance", "solver", "simulation", "output_dir"),
    )
    horizon = _integer(doc["horizon"], "horizon")
    if horizon < 1:
        raise SchemaError("horizon must be >= 1")

    system = doc["system"]
    if isinstance(system, dict) and "template" in system:
        A, B, D = _expand_template(system, "system")
        systems = [(A, B, D)] * horizon
    else:
        _check_keys(
            system, "system",
            optional=("A", "B", "D", "A_steps", "B_steps", "D_steps"),
        )
        As = _matrix_steps(system, "system", "A", horizon)
        Bs = _matrix_steps(system, "system", "B", horizon)
        Ds = _matrix_steps(system, "system", "D", horizon)
        systems = list(zip(As, Bs, Ds))

    cost = doc["cost"]
    _check_keys(cost, "cost", optional=("Q", "R", "Q_steps", "R_steps"))
    Qs = _matrix_steps(cost, "cost", "Q", horizon)
    Rs = _matrix_steps(cost, "cost", "R", horizon)

    boundary = doc["boundary"]
    _check_keys(boundary, "boundary", required=("mu0", "Sigma0", "muN", "SigmaN"))

    chance = doc.get("chance", {})
    halfspaces: list[HalfspaceConstraint] = []
    total_risk = None
    if chance:
        _check_keys(chance, "chance", optional=("total_risk", "halfspaces"))
        if "total_risk" in chance:
            total_risk = _number(chance["total_risk"], "chance.total_risk")
        for j, item in enumerate(chance.get("halfspaces", [])):
            where = f"chance.halfspaces[{j}]"
            _check_keys(item, where, required=("a", "b", "steps"), optional=("p_fail",))
            halfspaces.append(
                HalfspaceConstraint(
                    a=_vector(item["a"], f"{where}.a"),
                    b=_number(item["b"], f"{where}.b"),
                    steps=_steps(item["steps"], f"{where}.steps", horizon),
                    p_fail=(
                        _number(item["p_fail"], f"{where}.p_fail")
                        if "p_fail" in item
                        else None
                    ),
                )
            )

    solver = doc.get("solver", {})
    _check_keys(solver, "solver", optional=("backend", "tol", "max_iters"))
    simulation = doc.get("simulation", {})
    _check_keys(simulation, "simulation", optional=("samples", "seed"))

    name = doc.get("name", path.stem)
    if not isinstance(name, str):
        raise SchemaError("name must be a string")
    output_dir = doc.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        raise SchemaError("output_dir must be a string")

    spec = ProblemSpec(
        horizon=horizon,
        systems=tuple(systems),
        weights=tuple(zip(Qs, Rs)),
        mu0=_vector(boundary["mu0"], "boundary.mu0"),
        Sigma0=_matrix(boundary["Sigma0"], "boundary.Sigma0"),
        muN=_vector(boundary["muN"], "boundary.muN"),
        SigmaN=_matrix(boundary["SigmaN"], "boundary.SigmaN"),
        chance_set=tuple(halfspaces),
        total_risk=total_risk,
        name=name,
    ).require_valid()

    options = ScenarioOptions(
        name=name,
        backend=solver.get("backend"),
        tol=_number(solver["tol"], "solver.tol") if "tol" in solver else None,
        max_iters=(
            _integer(solver["max_iters"], "solver.max_iters")
            if "max_iters" in solver
            else None
        ),
        samples=_integer(simulation.get("samples", 10000), "simulation.samples"),
        seed=_integer(simulation.get("seed", 0), "simulation.seed"),
        output_dir=output_dir,
        scenario_hash=hashlib.sha256(raw).hexdigest(),
    )
    return spec, options


def bundled_scenario(name: str) -> Path:
    """Path of a scenario shipped with the package (``di``, ``vehicle``)."""
    candidate = resources.files("covsteer") / "scenarios" / f"{name}.scn"
    with resources.as_file(candidate) as p:
        if not p.exists():
            raise FileNotFoundError(f"no bundled scenario named '{name}'")
        return Path(p)


# ---------------------------------------------------------------------------
# pipeline

def _versions() -> dict:
    from importlib import metadata

    return {
        "covsteer": __version__,
        "numpy": np.__version__,
        "scipy": metadata.version("scipy"),
        "cvxpy": metadata.version("cvxpy"),
        "python": sys.version.split()[0],
    }


def _chance_check(
    rows: tuple[DeterministicRow, ...], K: np.ndarray, lifted: LiftedSystem
) -> ChanceCheck | None:
    if not rows:
        return None
    residuals = np.array([row_residual(r, K, lifted) for r in rows])
    worst = int(np.argmax(residuals))
    return ChanceCheck(
        feasible=bool(residuals.max() <= CHANCE_CHECK_TOL),
        residuals=residuals,
        labels=tuple(r.label for r in rows),
        worst_label=rows[worst].label,
        worst_residual=float(residuals[worst]),
    )


def _make_backend(options: ScenarioOptions):
    kwargs = {"tol": options.tol, "max_iters": options.max_iters}
    if options.backend:
        return CvxpyBackend(solver=options.backend, **kwargs)
    return default_backend(**kwargs)


def run(
    spec: ProblemSpec,
    mode: str,
    options: ScenarioOptions | None = None,
    backend=None,
    simulate: bool = True,
    keep_samples: bool = False,
) -> ResultBundle:
    """Run one controller mode end to end.

    ``mean-only`` applies the closed-form mean controller open loop (the
    covariance is then the uncontrolled one) and only checks the
    deterministic chance rows; ``cov`` solves the conic program with no
    chance rows; ``chance`` solves the full program.  All modes finish
    with seeded Monte-Carlo validation unless ``simulate`` is off.

    Solver infeasibility in the conic modes propagates as
    :class:`covsteer.conic.InfeasibleError`.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    options = options or ScenarioOptions(name=spec.name)
    spec.require_valid()
    lifted = build_lifted(spec)
    det_rows = make_rows(lift_halfspaces(spec, lifted), lifted)

    mean_plan = None
    solve_report = None
    if mode == "mean-only":
        mean_plan = solve_mean(lifted, spec.mu0, spec.muN)
        K = open_loop_gain(lifted, mean_plan.Ubar)
        cost = objective_value(K, lifted)
    else:
        rows = det_rows if mode == "chance" else ()
        program = assemble(lifted, spec.muN, spec.SigmaN, rows=rows)
        K, solve_report = solve(program, backend or _make_backend(options))
        cost = solve_report.objective

    check = _chance_check(det_rows, K, lifted)
    mean_stacked, cov_stacked = closed_moments(K, lifted)
    mean_traj, cov_traj = step_moments(mean_stacked, cov_stacked, lifted)

    sim_report = None
    if simulate:
        policy = recover_L(K, lifted)
        sim_report = monte_carlo(
            policy,
            spec,
            options.samples,
            options.seed,
            lifted=lifted,
            keep_samples=keep_samples,
        )

    backend_name = (
        solve_report.backend if solve_report is not None else "closed-form"
    )
    return ResultBundle(
        name=options.name or spec.name,
        mode=mode,
        scenario_hash=options.scenario_hash,
        cost=cost,
        mean_traj=mean_traj,
        cov_traj=cov_traj,
        gain=K,
        solve_report=solve_report,
        mean_plan=mean_plan,
        chance_check=check,
        sim_report=sim_report,
        backend_name=backend_name,
        seed=options.seed,
        samples=options.samples,
        versions=_versions(),
    )


# ---------------------------------------------------------------------------
# emission

def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def emit(bundle: ResultBundle, outdir, include_samples: bool = False) -> list[Path]:
    """Write one mode's tables and summary; returns the written paths.

    Files: ``<mode>_trajectory.csv`` (step, mean components),
    ``<mode>_covariance.csv`` (step, row-major covariance entries),
    optional ``<mode>_samples.csv`` (per-rollout terminal states), and
    ``<mode>_summary.json``.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tag = bundle.mode.replace("-", "_")
    n_x = bundle.mean_traj.shape[1]
    written = []

    traj = outdir / f"{tag}_trajectory.csv"
    _write_csv(
        traj,
        ["step"] + [f"mean_{i}" for i in range(n_x)],
        ([k, *bundle.mean_traj[k]] for k in range(bundle.mean_traj.shape[0])),
    )
    written.append(traj)

    cov = outdir / f"{tag}_covariance.csv"
    _write_csv(
        cov,
        ["step"] + [f"cov_{i}_{j}" for i in range(n_x) for j in range(n_x)],
        ([k, *bundle.cov_traj[k].reshape(-1)] for k in range(bundle.cov_traj.shape[0])),
    )
    written.append(cov)

    if include_samples and bundle.sim_report is not None \
            and bundle.sim_report.terminal_states is not None:
        samples = outdir / f"{tag}_samples.csv"
        _write_csv(
            samples,
            ["sample"] + [f"x_{i}" for i in range(n_x)],
            ([i, *row] for i, row in enumerate(bundle.sim_report.terminal_states)),
        )
        written.append(samples)

    summary: dict = {
        "csv_schema": CSV_SCHEMA_VERSION,
        "name": bundle.name,
        "mode": bundle.mode,
        "scenario_hash": bundle.scenario_hash,
        "cost": bundle.cost,
        "backend": bundle.backend_name,
        "seed": bundle.seed,
        "samples": bundle.samples,
        "versions": bundle.versions,
    }
    if bundle.solve_report is not None:
        r = bundle.solve_report
        summary["solve"] = {
            "status": r.status,
            "objective": r.objective,
            "max_chance_residual": (
                None if not r.chance_residuals.size else r.max_chance_residual
            ),
            "terminal_mean_residual": r.terminal_mean_residual,
            "terminal_cov_slack": r.terminal_cov_slack,
            "iterations": r.iterations,
        }
    if bundle.mean_plan is not None:
        summary["mean_plan"] = {
            "cost": bundle.mean_plan.cost,
            "kkt_residual": bundle.mean_plan.kkt_residual,
        }
    if bundle.chance_check is not None:
        c = bundle.chance_check
        summary["chance_check"] = {
            "feasible": c.feasible,
            "worst_label": c.worst_label,
            "worst_residual": c.worst_residual,
        }
    if bundle.sim_report is not None:
        s = bundle.sim_report
        summary["simulation"] = {
            "n": s.n,
            "rng": s.rng,
            "cost_mean": s.cost_mean,
            "cost_stderr": s.cost_stderr,
            "union_violation": s.union_freq,
            "row_labels": list(s.row_labels),
            "row_violation": [float(f) for f in s.row_freqs],
            "row_risk": [float(p) for p in s.row_risks],
        }
    out = outdir / f"{tag}_summary.json"
    out.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.append(out)
    return written
