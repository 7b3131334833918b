"""Scenario files: TOML with a [grid] table, constants, field sources and outputs.

Everything is validated here, before any field is computed: unknown keys,
unknown operations, malformed expressions and missing files are all
:class:`ScenarioError` (exit code 2).  Grid constraints surface later as
:class:`~madelung_strain.errors.GridError` (exit code 3).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import tomli

from ..grid import Grid
from .expr import ExpressionError, parse_expression

KINDS = ("madelung", "relativistic", "conformal", "curve", "plate", "metric")

OPERATIONS = {
    "madelung": (
        "rho", "quantum_potential", "quantum_force", "stress_tensor", "mean_pressure",
        "equilibrium_residual", "field_equation_residuals", "lagrangian_density", "constitutive_stress",
    ),
    "relativistic": (
        "rho", "kg_residual", "rel_field_residuals", "effective_mass", "dispersion_residual",
        "rel_stress_tensor", "energy_momentum_tensor", "rel_mean_pressure", "rel_lagrangian",
        "constitutive_stress",
    ),
    "conformal": (
        "rho", "strain_one_form", "strain_differential", "constitutive_stress", "teleparallel_connection",
        "torsion_and_structure", "curvature_residual", "compatibility_suite", "polar_frame_decomposition",
        "deformed_metric",
    ),
    "curve": ("arclength_resample", "frenet_frame", "strain_rates", "wire_couple_stress", "virtual_work",
              "frame_reconstruction"),
    "plate": ("plate_couple_stress",),
    "metric": ("strain_from_metric", "connection_from_strain", "inverse_strain_pair", "curvature_stack",
               "einstein_divergence", "first_order_sweep"),
}

CATALOG = {
    "gaussian": {"rho0", "a", "center"},
    "plane_wave": {"k", "omega", "amplitude"},
    "oscillator_ground": {"omega0"},
    "exp_linear": {"a", "scale"},
}

FIELD_ROLES = {
    "madelung": ("R", "S", "V"),
    "relativistic": ("R", "S"),
    "conformal": ("R",),
    "plate": ("z",),
    "metric": (),
    "curve": (),
}

TOP_KEYS = {"name", "kind", "stationary", "operations", "dump", "grid", "constants", "parameters",
            "fields", "tolerances", "probes", "curve", "plate", "metric", "four_velocity", "description"}
GRID_KEYS = {"shape", "spacing", "origin", "signature", "time_axis"}
CONSTANT_KEYS = {"hbar", "mass", "m0", "c"}
DEFAULT_CONSTANTS = {"hbar": 1.0, "mass": 1.0, "m0": 1.0, "c": 1.0}


class ScenarioError(ValueError):
    """Malformed scenario: parse error, unknown name or missing input (exit 2)."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location


@dataclass(frozen=True)
class FieldSource:
    role: str
    source: str  # catalog | expr | file
    spec: dict


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str
    grid_spec: dict
    constants: dict
    parameters: dict
    fields: dict
    operations: tuple
    dump: tuple
    stationary: bool = False
    tolerances: dict = field(default_factory=dict)
    probes: tuple = ()
    sections: dict = field(default_factory=dict)  # curve / plate / metric / four_velocity
    path: str | None = None
    description: str = ""

    def build_grid(self) -> Grid:
        return build_grid(self.grid_spec)

    @property
    def base_dir(self) -> Path:
        return Path(self.path).parent if self.path else Path.cwd()

    def echo(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "description": self.description,
            "stationary": self.stationary,
            "grid": dict(self.grid_spec),
            "constants": dict(self.constants),
            "parameters": dict(self.parameters),
            "fields": {k: {"source": v.source, **_plain(v.spec)} for k, v in sorted(self.fields.items())},
            "operations": list(self.operations),
            "dump": list(self.dump),
            "tolerances": dict(self.tolerances),
            "probes": [list(p) for p in self.probes],
            **{k: _plain(v) for k, v in sorted(self.sections.items())},
        }


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in sorted(v.items())}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def build_grid(spec: dict) -> Grid:
    shape = tuple(int(n) for n in spec["shape"])
    dim = len(shape)
    spacing = spec.get("spacing", 1.0)
    origin = spec.get("origin", 0.0)
    sig = spec.get("signature", "euclidean")
    if sig == "lorentzian":
        return Grid.lorentzian(shape, spacing, origin)
    if sig == "euclidean":
        return Grid.euclidean(shape, spacing, origin, time_axis=bool(spec.get("time_axis", False)))
    return Grid(shape, spacing if not isinstance(spacing, list) else tuple(spacing),
                origin if not isinstance(origin, list) else tuple(origin), tuple(sig) if len(sig) == dim else sig)


def coordinate_names(grid: Grid) -> list[str]:
    """Variable names bound to each axis inside expressions."""
    names = []
    spatial = 0
    for k, role in enumerate(grid.axis_roles):
        if role == "time":
            names.append("x0" if grid.is_lorentzian else "t")
        else:
            spatial += 1
            names.append(f"x{spatial}")
    return names


def expression_names(spec: dict, parameters: dict) -> set[str]:
    """All variables an expression may use for a grid described by ``spec``."""
    dim = len(spec.get("shape", ()))
    names = {"x", "y", "z", "t", "x0"} | {f"x{i}" for i in range(1, dim + 1)}
    return names | set(parameters) | set(CONSTANT_KEYS)


def _require(cond: bool, where: str, message: str):
    if not cond:
        raise ScenarioError(where, message)


def _check_keys(table: dict, allowed: set, where: str):
    extra = sorted(set(table) - allowed)
    _require(not extra, where, f"unknown key(s) {', '.join(extra)}; allowed: {', '.join(sorted(allowed))}")


def _number(v, where: str) -> float:
    _require(isinstance(v, (int, float)) and not isinstance(v, bool), where, f"expected a number, got {v!r}")
    return float(v)


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(str(path), "scenario file not found")
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError(str(path), f"TOML parse error: {exc}") from None
    return parse_scenario(raw, str(path))


def parse_scenario(raw: dict, path: str | None = None) -> Scenario:
    where = path or "<scenario>"
    _check_keys(raw, TOP_KEYS, where)
    _require("name" in raw and isinstance(raw["name"], str), where, "missing string key 'name'")
    kind = raw.get("kind")
    _require(kind in KINDS, f"{where}:kind", f"kind must be one of {', '.join(KINDS)}, got {kind!r}")

    grid_spec = dict(raw.get("grid", {}))
    if kind != "curve":
        _require("grid" in raw, where, "missing [grid] table")
        _check_keys(grid_spec, GRID_KEYS, f"{where}:[grid]")
        _require(isinstance(grid_spec.get("shape"), list) and grid_spec["shape"], f"{where}:[grid].shape",
                 "shape must be a non-empty list of integers")
        for n in grid_spec["shape"]:
            _require(isinstance(n, int) and not isinstance(n, bool), f"{where}:[grid].shape",
                     f"shape entries must be integers, got {n!r}")
        sig = grid_spec.get("signature", "euclidean")
        _require(sig in ("euclidean", "lorentzian") or isinstance(sig, list), f"{where}:[grid].signature",
                 "signature must be 'euclidean', 'lorentzian' or a list of +1/-1")

    constants = dict(DEFAULT_CONSTANTS)
    ctab = raw.get("constants", {})
    _check_keys(ctab, CONSTANT_KEYS, f"{where}:[constants]")
    for k, v in ctab.items():
        constants[k] = _number(v, f"{where}:[constants].{k}")

    parameters = {}
    for k, v in raw.get("parameters", {}).items():
        parameters[k] = _number(v, f"{where}:[parameters].{k}")

    allowed_names = expression_names(grid_spec, parameters)
    fields = {}
    roles = FIELD_ROLES[kind]
    for role, spec in raw.get("fields", {}).items():
        fw = f"{where}:[fields.{role}]"
        _require(role in roles, fw, f"unknown field {role!r} for kind {kind}; expected one of {', '.join(roles)}")
        _require(isinstance(spec, dict), fw, "field source must be a table")
        sources = [k for k in ("catalog", "expr", "file") if k in spec]
        _require(len(sources) == 1, fw, "give exactly one of catalog, expr or file")
        src = sources[0]
        if src == "catalog":
            name = spec["catalog"]
            _require(name in CATALOG, fw, f"unknown catalog entry {name!r}; known: {', '.join(CATALOG)}")
            _check_keys({k: v for k, v in spec.items() if k != "catalog"}, CATALOG[name], fw)
            _check_catalog(name, spec, fw)
        elif src == "expr":
            _check_keys(spec, {"expr"}, fw)
            try:
                parse_expression(spec["expr"], allowed_names)
            except ExpressionError as exc:
                raise ScenarioError(fw, str(exc)) from None
        else:
            _check_keys(spec, {"file"}, fw)
            fpath = Path(path).parent / spec["file"] if path else Path(spec["file"])
            _require(fpath.exists(), fw, f"field file {str(fpath)!r} does not exist")
        fields[role] = FieldSource(role, src, dict(spec))
    needed = {"madelung": ("R", "S"), "relativistic": ("R", "S"), "conformal": ("R",), "plate": ("z",)}.get(kind, ())
    for role in needed:
        _require(role in fields, f"{where}:[fields]", f"kind {kind} needs field {role!r}")

    ops = raw.get("operations", [])
    _require(isinstance(ops, list), f"{where}:operations", "operations must be a list")
    for op in ops:
        _require(op in OPERATIONS[kind], f"{where}:operations",
                 f"unknown operation {op!r} for kind {kind}; available: {', '.join(OPERATIONS[kind])}")
    dump = raw.get("dump", [])
    _require(isinstance(dump, list), f"{where}:dump", "dump must be a list of output names")

    sections = {}
    for key in ("curve", "plate", "metric", "four_velocity"):
        if key in raw:
            sections[key] = raw[key]
    for key, text in _section_expressions(sections):
        try:
            parse_expression(text, allowed_names)
        except ExpressionError as exc:
            raise ScenarioError(f"{where}:[{key}]", str(exc)) from None

    tolerances = {}
    for k, v in raw.get("tolerances", {}).items():
        tolerances[k] = _number(v, f"{where}:[tolerances].{k}")
    probes = tuple(tuple(float(x) for x in p) for p in raw.get("probes", []))

    return Scenario(
        name=raw["name"],
        kind=kind,
        grid_spec=grid_spec,
        constants=constants,
        parameters=parameters,
        fields=fields,
        operations=tuple(ops),
        dump=tuple(dump),
        stationary=bool(raw.get("stationary", False)),
        tolerances=tolerances,
        probes=probes,
        sections=sections,
        path=path,
        description=str(raw.get("description", "")),
    )


def _check_catalog(name: str, spec: dict, where: str):
    if name == "gaussian":
        if "a" in spec:
            _require(_number(spec["a"], where + ".a") > 0, where, "gaussian width a must be > 0")
        if "rho0" in spec:
            _require(_number(spec["rho0"], where + ".rho0") > 0, where, "gaussian rho0 must be > 0")
    if name == "oscillator_ground" and "omega0" in spec:
        _require(_number(spec["omega0"], where + ".omega0") > 0, where, "omega0 must be > 0")


def _section_expressions(sections: dict):
    metric = sections.get("metric", {})
    for key in ("phi", "rho"):
        if key in metric:
            yield "metric", metric[key]
