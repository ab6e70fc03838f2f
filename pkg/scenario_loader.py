"""Scenario files: JSON schema validation and resolution into planner inputs.

A scenario argument is either a path or the name of a shipped scenario
under config.SCENARIO_DIR. Region rows become box formulas bound into the
specification text, so "F[20,25] A" reads region A from the same file.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

import config
import polytope_geom
import stl_core
from dynamics import CONFIG_DIMS, PLANAR_AXES, RigidBodyModel
from errors import DynamicsError, GeometryError, ScenarioError, SpecError
from estimation_ekf import EkfConfig
from planner_milp import PlanningTask
from polytope_geom import Polytope

logger = logging.getLogger(__name__)

DIM_ALIASES = {"phi": "roll", "theta": "pitch", "psi": "yaw"}
SCENARIO_SCHEMA = "scenario.schema.json"
# roll and yaw are undefined at pitch +-90 deg (Z-Y-X angles)
PITCH_LIMIT = math.radians(80.0)


@lru_cache(maxsize=None)
def load_schema(name):
    path = os.path.join(config.SCHEMA_DIR, name)
    with open(path, "r", encoding="utf-8") as f:
        schema = json.load(f)
    Draft202012Validator.check_schema(schema)
    return schema


def validate_document(document, schema_name):
    """Raise ScenarioError at the most relevant schema violation."""
    validator = Draft202012Validator(load_schema(schema_name))
    error = best_match(validator.iter_errors(document))
    if error is not None:
        where = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in error.absolute_path)
        raise ScenarioError(error.message, path=where)


def canonical_dim(name):
    return DIM_ALIASES.get(name, name)


@dataclass(frozen=True, eq=False)
class Platform:
    """One robot: dynamics, input set, disturbance bound and disturbance gain."""

    name: str
    model: RigidBodyModel
    U: Polytope
    d_bar: np.ndarray
    K: np.ndarray

    @property
    def alpha_max(self):
        return polytope_geom.alpha_max_for_zero_input(self.U, self.K, self.d_bar)

    def tightened(self, alpha):
        return polytope_geom.tighten(self.U, self.K, self.d_bar, alpha)


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    dims: tuple
    axes: tuple
    t_f: float
    planner: dict
    spec: stl_core.Formula
    spec_text: str
    regions: dict
    x0: np.ndarray
    workspace_lower: np.ndarray
    workspace_upper: np.ndarray
    space: Platform
    underwater: Platform
    terminal_lower: np.ndarray | None = None
    terminal_upper: np.ndarray | None = None
    description: str = ""
    seed: int = config.DEFAULT_SEED
    mpc: dict = field(default_factory=dict)
    ekf: EkfConfig = field(default_factory=EkfConfig)
    injection: dict = field(default_factory=lambda: {"profile": "none"})
    measurement_noise: float = 0.0
    source: str = ""

    @property
    def dt(self):
        return float(self.planner["dt"])

    @property
    def N(self):
        return int(round(self.t_f / self.dt))

    @property
    def planar(self):
        return self.axes == PLANAR_AXES

    def planning_task(self, alpha_cap=None):
        """Space-side planning task; alpha is capped by the underwater zero-input bound."""
        cap = self.underwater.alpha_max if alpha_cap is None else alpha_cap
        return PlanningTask(
            spec=self.spec,
            model=self.space.model,
            U=self.space.U,
            K=self.space.K,
            d_bar=self.space.d_bar,
            dt=self.dt,
            N=self.N,
            x0=self.x0,
            workspace_lower=self.workspace_lower,
            workspace_upper=self.workspace_upper,
            axes=self.axes,
            c1=float(self.planner.get("c1", 1e3)),
            c2=float(self.planner.get("c2", 1e-3)),
            terminal_lower=self.terminal_lower,
            terminal_upper=self.terminal_upper,
            rest_at_end=bool(self.planner.get("rest_at_end", False)),
            rho_cap=self.planner.get("rho_cap"),
            alpha_cap=cap if math.isfinite(cap) else None,
            alpha_min=float(self.planner.get("alpha_min", 0.0)),
            name=self.name,
        )

    def summary(self):
        return {
            "name": self.name,
            "description": self.description,
            "dims": list(self.dims),
            "t_f": self.t_f,
            "dt": self.dt,
            "regions": sorted(self.regions),
            "spec": self.spec_text,
        }


# --- Resolution helpers ---

def resolve_path(name_or_path):
    """Path as given if it exists, else a shipped scenario by name."""
    if os.path.isfile(name_or_path):
        return name_or_path
    stem = name_or_path if name_or_path.endswith(".json") else f"{name_or_path}.json"
    candidate = os.path.join(config.SCENARIO_DIR, stem)
    if os.path.isfile(candidate):
        return candidate
    raise ScenarioError("scenario not found", path=name_or_path)


def _vector(values, size, where):
    out = np.asarray(values, dtype=float).ravel()
    if out.size != size:
        raise ScenarioError(f"expected {size} values, got {out.size}", path=where)
    return out


def _box_bounds(box, dims, where):
    """(lower, upper) over `dims` with NaN on unconstrained dimensions."""
    box_dims = [canonical_dim(d) for d in box.get("dims", dims)]
    center = _vector(box["center"], len(box_dims), f"{where}.center")
    widths = _vector(box["widths"], len(box_dims), f"{where}.widths")
    lower = np.full(len(dims), np.nan)
    upper = np.full(len(dims), np.nan)
    for c, w, dim in zip(center, widths, box_dims):
        if dim not in dims:
            raise ScenarioError(f"dimension '{dim}' is not planned", path=f"{where}.dims")
        i = dims.index(dim)
        lower[i], upper[i] = c - w / 2.0, c + w / 2.0
    return lower, upper


def _model(data, axes, platform, allocation=None, mu=None):
    where = f"$.platforms.{platform}.model"
    kwargs = {k: v for k, v in data.items() if k != "kind"}
    try:
        return RigidBodyModel(
            kind=data["kind"],
            planar=axes == PLANAR_AXES,
            name=platform,
            allocation=allocation,
            mu_min=None if mu is None else mu[0],
            mu_max=None if mu is None else mu[1],
            **kwargs,
        )
    except (DynamicsError, ValueError) as e:
        raise ScenarioError(e.args[0], path=where) from e


def _platform(data, axes, platform):
    where = f"$.platforms.{platform}"
    n = len(axes)
    allocation = mu = None
    try:
        if "input_bounds" in data:
            U = Polytope.symmetric_box(_vector(data["input_bounds"], n, f"{where}.input_bounds"))
        else:
            if axes not in (PLANAR_AXES, tuple(range(6))):
                raise ScenarioError("thruster sets need planar or full 6-DOF axes", path=f"{where}.thrusters")
            allocation = polytope_geom.allocation_matrix(data["thrusters"])
            m = allocation.shape[1]
            mu = (_vector(data["thrust_min"], m, f"{where}.thrust_min"), _vector(data["thrust_max"], m, f"{where}.thrust_max"))
            U = polytope_geom.effective_input_set(allocation, mu[0], mu[1], data.get("inscribed_shape", "cube"),
                                                  planar=axes == PLANAR_AXES)
        d_bar = _vector(data["disturbance_bounds"], n, f"{where}.disturbance_bounds")
        K = data.get("K", "identity")
        K = np.eye(n) if K == "identity" else np.asarray(K, dtype=float)
        if K.shape != (n, n):
            raise ScenarioError(f"K must be {n}x{n}", path=f"{where}.K")
        if not polytope_geom.can_cancel_disturbance(U, K, d_bar):
            raise ScenarioError("input set cannot cancel the worst-case disturbance", path=where)
    except GeometryError as e:
        raise ScenarioError(e.args[0], path=where) from e
    model = _model(data["model"], axes, platform, allocation, mu)
    return Platform(data.get("name", platform), model, U, d_bar, K)


def _regions(document, dims):
    bindings, regions = {}, {}
    for name, row in document["regions"].items():
        where = f"$.regions.{name}"
        region_dims = [canonical_dim(d) for d in row["dims"]]
        missing = [d for d in region_dims if d not in dims]
        if missing:
            raise ScenarioError(f"region uses dimensions {missing} outside the planned {list(dims)}", path=where)
        try:
            bindings[name] = stl_core.box_formula(row["center"], row["widths"], region_dims, dims, name)
        except SpecError as e:
            raise ScenarioError(e.args[0], path=where) from e
        if "pitch" in region_dims:
            i = region_dims.index("pitch")
            reach = abs(float(row["center"][i])) + 0.5 * float(row["widths"][i])
            if reach > PITCH_LIMIT:
                raise ScenarioError(f"region reaches pitch {reach:.4g} rad, beyond +-{PITCH_LIMIT:.4g}", path=where)
        regions[name] = {
            "center": list(map(float, row["center"])),
            "widths": list(map(float, row["widths"])),
            "dims": region_dims,
            "interval": row.get("interval"),
        }
    return bindings, regions


def scenario_from_dict(document, source=""):
    """Validate and resolve an already-parsed scenario document."""
    validate_document(document, SCENARIO_SCHEMA)
    dims = tuple(canonical_dim(d) for d in document["dims"])
    if len(set(dims)) != len(dims):
        raise ScenarioError("dimension listed twice (aliases included)", path="$.dims")
    axes = tuple(CONFIG_DIMS.index(d) for d in dims)
    if list(axes) != sorted(axes):
        raise ScenarioError("dims must follow the order x y z roll pitch yaw", path="$.dims")
    n = len(axes)

    t_f = float(document["t_f"])
    dt = float(document["planner"]["dt"])
    if abs(round(t_f / dt) * dt - t_f) > 1e-9 * max(1.0, t_f):
        raise ScenarioError(f"planner dt {dt} does not divide t_f {t_f}", path="$.planner.dt")

    bindings, regions = _regions(document, dims)
    try:
        spec = stl_core.parse_spec(document["spec"], dims, bindings)
    except SpecError as e:
        raise ScenarioError(e.args[0], path="$.spec") from e
    if stl_core.horizon(spec) > t_f + 1e-9:
        raise ScenarioError(f"specification horizon {stl_core.horizon(spec)} exceeds t_f {t_f}", path="$.spec")

    initial = document["initial"]
    config0 = _vector(initial["config"], n, "$.initial.config")
    rates0 = _vector(initial.get("rates", [0.0] * n), n, "$.initial.rates")
    lower = _vector(document["workspace"]["lower"], n, "$.workspace.lower")
    upper = _vector(document["workspace"]["upper"], n, "$.workspace.upper")
    if np.any(lower > upper):
        raise ScenarioError("workspace lower bound exceeds upper bound", path="$.workspace")
    if "pitch" in dims:
        j = dims.index("pitch")
        if max(abs(lower[j]), abs(upper[j])) > PITCH_LIMIT:
            raise ScenarioError(f"workspace pitch must stay within +-{PITCH_LIMIT:.4g} rad", path="$.workspace")
    terminal_lower = terminal_upper = None
    if "terminal" in document:
        terminal_lower, terminal_upper = _box_bounds(document["terminal"], dims, "$.terminal")

    platforms = document["platforms"]
    scenario = Scenario(
        name=document["name"],
        description=document.get("description", ""),
        seed=int(document.get("seed", config.DEFAULT_SEED)),
        dims=dims,
        axes=axes,
        t_f=t_f,
        planner=dict(document["planner"]),
        spec=spec,
        spec_text=document["spec"],
        regions=regions,
        x0=np.concatenate([config0, rates0]),
        workspace_lower=lower,
        workspace_upper=upper,
        terminal_lower=terminal_lower,
        terminal_upper=terminal_upper,
        space=_platform(platforms["space"], axes, "space"),
        underwater=_platform(platforms["underwater"], axes, "underwater"),
        mpc=dict(document.get("mpc", {})),
        ekf=EkfConfig.from_dict(document.get("ekf")),
        injection=dict(document.get("injection", {"profile": "none"})),
        measurement_noise=float(document.get("measurement_noise", 0.0)),
        source=source,
    )
    logger.info("[Scenario] loaded '%s': dims=%s, %d regions, N=%d", scenario.name, ",".join(dims),
                len(regions), scenario.N)
    return scenario


def load_scenario(name_or_path):
    """Read, validate and resolve a scenario file.

    :raises ScenarioError: missing file, bad JSON, schema violation (with its
        JSON path), unresolved region or inconsistent dimensions
    """
    path = resolve_path(name_or_path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"invalid JSON: {e.msg}", path=f"{path}:{e.lineno}:{e.colno}") from e
    except OSError as e:
        raise ScenarioError(f"cannot read scenario: {e}", path=path) from e
    return scenario_from_dict(document, source=path)


def list_scenarios():
    if not os.path.isdir(config.SCENARIO_DIR):
        return []
    return sorted(f[:-5] for f in os.listdir(config.SCENARIO_DIR) if f.endswith(".json"))
