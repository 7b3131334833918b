"""Turn a scenario into states, run its operations and collect the report."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .. import __version__
from .. import framestrain as fs
from .. import grid as g
from .. import madelung as md
from .. import metricstrain as ms
from .. import relativistic as rl
from .. import wire as wr
from ..errors import ConfigurationError
from ..grid import CovectorField, Field, Grid, MatrixField, ScalarField
from .config import OPERATIONS, Scenario, ScenarioError, build_grid, coordinate_names
from .expr import parse_expression

# outputs each operation can dump; names are the CSV column stems
OUTPUTS = {
    "rho": ("rho",),
    "quantum_potential": ("V_q",),
    "quantum_force": ("f_q",),
    "stress_tensor": ("sigma", "sigma_amplitude_form"),
    "mean_pressure": ("pi_bar", "pi_bar_amplitude_form", "pi_bar_potential_form"),
    "equilibrium_residual": ("equilibrium",),
    "field_equation_residuals": ("continuity", "hamilton_jacobi", "vorticity_kinematic", "vorticity_dynamic"),
    "lagrangian_density": ("lagrangian",),
    "constitutive_stress": ("sigma_constitutive",),
    "kg_residual": ("kg_real", "kg_imag"),
    "rel_field_residuals": ("continuity", "mass_shell"),
    "effective_mass": ("m_eff",),
    "dispersion_residual": ("dispersion",),
    "rel_stress_tensor": ("sigma", "sigma_amplitude_form"),
    "energy_momentum_tensor": ("T", "div_T"),
    "rel_mean_pressure": ("pi_bar", "pi_bar_box_form", "pi_bar_amplitude_form"),
    "rel_lagrangian": ("lagrangian",),
    "strain_one_form": ("omega",),
    "strain_differential": ("d_omega",),
    "teleparallel_connection": ("connection", "coframe_parallelism"),
    "torsion_and_structure": ("torsion", "torsion_from_connection", "structure"),
    "curvature_residual": ("curvature",),
    "compatibility_suite": ("parallel_covector", "deformed_frame_connection", "volume_parallelism",
                            "metric_parallelism"),
    "polar_frame_decomposition": ("rotation", "frame_strain", "rotation_part", "strain_part"),
    "deformed_metric": ("g",),
    "plate_couple_stress": ("K", "Lambda", "Pi"),
    "strain_from_metric": ("E", "g"),
    "connection_from_strain": ("Gamma",),
    "inverse_strain_pair": ("E_upper", "E_upper_first_order"),
    "curvature_stack": ("riemann", "ricci", "scalar_curvature", "einstein"),
    "einstein_divergence": ("div_einstein",),
    "first_order_sweep": (),
    "arclength_resample": ("curve",),
    "frenet_frame": ("frames",),
    "strain_rates": ("rates",),
    "wire_couple_stress": ("couple_stress",),
    "virtual_work": (),
    "frame_reconstruction": (),
}

CONVENTIONS = {
    "phase": "Psi = R exp(-i S / hbar); decompose returns S = -hbar arg(Psi)",
    "amplitude_floor": md.AMPLITUDE_FLOOR,
    "form_agreement": "10 h^2, relative to the size of the compared terms",
    "stress_coupling": "sigma = (hbar^2 / 2m) rho Hess(ln R) = (hbar^2 / 4m) rho Hess(ln rho)",
    "mean_pressure": "-(1/3) trace(sigma); relativistic -(1/4) eta-trace",
    "strain_one_form": "+d(ln R)",
    "connection_sign": fs.CONNECTION_SIGN,
    "effective_mass": "sqrt(m0^2 - (hbar / c)^2 box(R) / R), negative radicands flagged",
    "lorentzian": "eta = diag(+1, -1, ..., -1), x0 = c t",
    "wire_rates": "kappa = -<e1', e2>, lam = +<e1', e3>, tau = -<e3', e2>",
}


def available_outputs(kind: str) -> list[str]:
    names = []
    for op in OPERATIONS[kind]:
        for n in OUTPUTS[op]:
            if n not in names:
                names.append(n)
    return names


# --------------------------------------------------------------------------
# field construction


def coordinate_env(grid: Grid, constants: dict, parameters: dict) -> dict:
    env = dict(constants)
    env.update(parameters)
    mesh = grid.mesh()
    names = coordinate_names(grid)
    for name, arr in zip(names, mesh):
        env[name] = arr
    spatial = [mesh[k] for k in grid.spatial_axes]
    for alias, arr in zip(("x", "y", "z"), spatial):
        env[alias] = arr
    t = grid.time_axis
    if t is not None:
        env["t"] = mesh[t] / constants["c"] if grid.is_lorentzian else mesh[t]
        env["x0"] = mesh[t] if grid.is_lorentzian else mesh[t]
    else:
        env["t"] = np.zeros(grid.shape)
    return env


def _spatial_r2(grid: Grid, env: dict, center) -> np.ndarray:
    mesh = grid.mesh()
    axes = grid.spatial_axes
    center = [0.0] * len(axes) if center is None else list(center)
    if len(center) != len(axes):
        raise ConfigurationError(f"center needs {len(axes)} entries, got {len(center)}")
    return sum((mesh[k] - c0) ** 2 for k, c0 in zip(axes, center))


def _mass(scn: Scenario) -> float:
    return scn.constants["m0"] if scn.kind == "relativistic" else scn.constants["mass"]


def catalog_values(scn: Scenario, grid: Grid, role: str, spec: dict, env: dict) -> np.ndarray:
    name = spec["catalog"]
    hbar = scn.constants["hbar"]
    mass = _mass(scn)
    if name == "gaussian":
        if role not in ("R", "z"):
            raise ConfigurationError(f"catalog gaussian describes an amplitude, not field {role!r}")
        rho0, a = float(spec.get("rho0", 1.0)), float(spec.get("a", 1.0))
        r2 = _spatial_r2(grid, env, spec.get("center"))
        return math.sqrt(rho0) * np.exp(-0.5 * a * r2)
    if name == "plane_wave":
        if role == "R":
            return np.full(grid.shape, float(spec.get("amplitude", 1.0)))
        if role == "V":
            return np.zeros(grid.shape)
        if role != "S":
            raise ConfigurationError(f"catalog plane_wave cannot supply field {role!r}")
        k = np.atleast_1d(np.asarray(spec.get("k", [0.0]), dtype=float))
        mesh = grid.mesh()
        if "omega" in spec:
            axes = grid.spatial_axes
            if len(k) != len(axes):
                raise ConfigurationError(f"plane_wave k needs {len(axes)} spatial entries, got {len(k)}")
            phase = sum(kk * mesh[ax] for kk, ax in zip(k, axes)) - float(spec["omega"]) * env["t"]
        else:
            if len(k) != grid.dim:
                raise ConfigurationError(f"plane_wave without omega needs {grid.dim} entries in k")
            phase = sum(kk * mesh[ax] for ax, kk in enumerate(k))
        return hbar * np.broadcast_to(phase, grid.shape)
    if name == "oscillator_ground":
        w0 = float(spec.get("omega0", 1.0))
        r2 = _spatial_r2(grid, env, None)
        ds = len(grid.spatial_axes)
        if role == "R":
            return (mass * w0 / (math.pi * hbar)) ** (ds / 4.0) * np.exp(-mass * w0 * r2 / (2 * hbar))
        if role == "S":
            return -(ds * hbar * w0 / 2.0) * env["t"]
        if role == "V":
            return 0.5 * mass * w0**2 * r2
        raise ConfigurationError(f"catalog oscillator_ground cannot supply field {role!r}")
    if name == "exp_linear":
        a = np.atleast_1d(np.asarray(spec.get("a", 1.0), dtype=float))
        mesh = grid.mesh()
        if len(a) == 1:
            axis = grid.spatial_axes[0] if grid.spatial_axes else 0
            expo = a[0] * mesh[axis]
        elif len(a) == grid.dim:
            expo = sum(ak * mesh[k] for k, ak in enumerate(a))
        else:
            raise ConfigurationError(f"exp_linear a needs 1 or {grid.dim} entries")
        return float(spec.get("scale", 1.0)) * np.exp(expo)
    raise ConfigurationError(f"unknown catalog entry {name!r}")


def build_scalar(scn: Scenario, grid: Grid, role: str) -> ScalarField:
    src = scn.fields[role]
    env = coordinate_env(grid, scn.constants, scn.parameters)
    if src.source == "catalog":
        vals = catalog_values(scn, grid, role, src.spec, env)
    elif src.source == "expr":
        expr = parse_expression(src.spec["expr"], set(env))
        vals = expr(env)
    else:
        try:
            return g.load_csv(grid, scn.base_dir / src.spec["file"], 0)
        except ValueError as exc:
            raise ScenarioError(f"{scn.path or scn.name}:[fields.{role}]", str(exc)) from None
    vals = np.broadcast_to(np.asarray(vals, dtype=float), grid.shape)
    return ScalarField(grid, vals)


def build_state(scn: Scenario, grid: Grid | None = None):
    """The module-level object a scenario describes, on ``grid`` if given."""
    if scn.kind == "curve":
        return build_curve(scn)
    grid = grid or scn.build_grid()
    c = scn.constants
    if scn.kind == "madelung":
        V = build_scalar(scn, grid, "V") if "V" in scn.fields else None
        return md.WaveState(build_scalar(scn, grid, "R"), build_scalar(scn, grid, "S"), V,
                            c["hbar"], c["mass"], scn.stationary)
    if scn.kind == "relativistic":
        return rl.RelWaveState(build_scalar(scn, grid, "R"), build_scalar(scn, grid, "S"), c["m0"], c["hbar"], c["c"])
    if scn.kind == "conformal":
        return fs.ConformalDeformation(build_scalar(scn, grid, "R"))
    if scn.kind == "plate":
        return build_scalar(scn, grid, "z")
    if scn.kind == "metric":
        return build_metric(scn, grid)
    raise ConfigurationError(f"unknown kind {scn.kind}")


def build_metric(scn: Scenario, grid: Grid, eps: float | None = None) -> ms.MetricStrainField:
    sec = scn.sections.get("metric", {})
    form = sec.get("form", "zero")
    d = grid.dim
    E = np.zeros(grid.shape + (d, d))
    env = coordinate_env(grid, scn.constants, scn.parameters)
    if eps is not None:
        E[..., 0, 0] = eps
    elif form == "zero":
        pass
    elif form == "constant":
        M = np.asarray(sec.get("E"), dtype=float)
        if M.shape != (d, d):
            raise ConfigurationError(f"constant strain needs a {d}x{d} matrix")
        E[...] = M
    elif form == "weak_field":
        phi = parse_expression(sec["phi"], set(env))(env)
        E[..., 0, 0] = 2.0 * np.broadcast_to(phi, grid.shape)
    elif form == "conformal":
        rho = np.broadcast_to(parse_expression(sec["rho"], set(env))(env), grid.shape)
        E[...] = (rho - 1.0)[..., None, None] * grid.eta
    else:
        raise ConfigurationError(f"unknown metric form {form!r}")
    return ms.MetricStrainField(MatrixField(grid, E, symmetry="symmetric"))


def build_curve(scn: Scenario) -> wr.SampledCurve:
    sec = scn.sections.get("curve", {})
    if "helix" in sec:
        h = sec["helix"]
        return wr.helix(float(h.get("r", 1.0)), float(h.get("pitch", 0.0)), int(h.get("n", 2000)),
                        float(h.get("turns", 1.0)), int(h.get("pad", 0)))
    if "file" in sec:
        return wr.load_curve_csv(scn.base_dir / sec["file"])
    raise ConfigurationError("curve scenarios need [curve] helix = {...} or file = ...")


# --------------------------------------------------------------------------
# running


@dataclass
class RunResult:
    scenario: Scenario
    grid: Grid | None
    outputs: dict = field(default_factory=dict)  # name -> Field or tabular dict
    results: dict = field(default_factory=dict)  # operation -> summary values
    checks: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def check(self, name: str, relation: str, value: float, tolerance: float, relative: bool = False):
        tol = self.scenario.tolerances.get(name, tolerance)
        value = float(value)
        self.checks.append({
            "name": name,
            "relation": relation,
            "value": value,
            "tolerance": float(tol),
            "passed": bool(value <= tol),
        })

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)


def _probe_values(res: RunResult, f: Field) -> list:
    grid = f.grid
    out = []
    for p in res.scenario.probes:
        if len(p) != grid.dim:
            continue
        idx = tuple(int(round((x - o) / h)) for x, o, h in zip(p, grid.origin, grid.spacing))
        if not all(0 <= i < n for i, n in zip(idx, grid.shape)):
            continue
        point = [float(c[i]) for c, i in zip(grid.coords(), idx)]
        val = f.values[idx] if f.mask[idx] else None
        out.append({"point": point, "value": None if val is None else np.asarray(val).tolist()})
    return out


def _summary(res: RunResult, f: Field) -> dict:
    d = {"norms": g.norms(f), "valid_points": f.n_valid}
    probes = _probe_values(res, f)
    if probes:
        d["probes"] = probes
    return d


def _offdiag_stats(sigma: MatrixField) -> dict:
    m = sigma.mask
    v = sigma.values[m]
    scale = float(np.max(np.abs(v))) if v.size else 0.0
    d = sigma.grid.dim
    off = v.copy()
    for i in range(d):
        off[:, i, i] = 0.0
    diag = np.stack([v[:, i, i] for i in range(d)], axis=1)
    spread = float(np.max(diag.max(axis=1) - diag.min(axis=1))) if v.size else 0.0
    return {
        "scale": scale,
        "offdiag_relative": float(np.max(np.abs(off))) / scale if scale else 0.0,
        "diagonal_spread_relative": spread / scale if scale else 0.0,
    }


def _rel_identity(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    return fs.relative_mismatch(a, b, mask)


def run_operations(scn: Scenario, grid: Grid | None = None, operations=None) -> RunResult:
    grid = grid or (scn.build_grid() if scn.kind != "curve" else None)
    res = RunResult(scn, grid)
    state = build_state(scn, grid)
    ops = list(operations if operations is not None else scn.operations)
    runner = _RUNNERS[scn.kind]
    runner(res, state, ops)
    return res


def _madelung(res: RunResult, w: md.WaveState, ops):
    grid = w.grid
    tol = md.FORM_AGREEMENT_C * grid.h**2
    res.warnings.extend(w.warnings)
    for op in ops:
        if op == "rho":
            res.outputs["rho"] = w.rho
            res.results[op] = _summary(res, w.rho)
        elif op == "quantum_potential":
            f = md.quantum_potential(w)
            res.outputs["V_q"] = f
            res.results[op] = _summary(res, f)
        elif op == "quantum_force":
            f = md.quantum_force(w)
            res.outputs["f_q"] = f
            res.results[op] = _summary(res, f)
        elif op == "stress_tensor":
            sf = md.stress_tensor_forms(w)
            res.outputs["sigma"] = sf.log_form
            res.outputs["sigma_amplitude_form"] = sf.amplitude_form
            res.results[op] = dict(_summary(res, sf.log_form), form_mismatch=sf.relative_mismatch,
                                   **_offdiag_stats(sf.log_form))
            res.check("stress_two_forms", "log-density and amplitude forms of the stress agree",
                      sf.relative_mismatch, tol)
        elif op == "mean_pressure":
            pf = md.mean_pressure_forms(w)
            res.outputs["pi_bar"] = pf.trace_form
            res.outputs["pi_bar_amplitude_form"] = pf.amplitude_form
            res.outputs["pi_bar_potential_form"] = pf.potential_form
            kin = pf.kinetic_term
            res.results[op] = dict(_summary(res, pf.trace_form), mismatches=pf.mismatches,
                                   kinetic_term_min=float(np.min(kin.values[kin.mask])))
            for k, v in sorted(pf.mismatches.items()):
                res.check(f"mean_pressure_{k.replace('-', '_')}", "mean pressure forms agree", v, tol)
        elif op == "equilibrium_residual":
            f = md.equilibrium_residual(w)
            res.outputs["equilibrium"] = f
            res.results[op] = _summary(res, f)
            res.check("equilibrium", "stress divergence balances rho times the quantum force",
                      g.sup_norm(f), tol)
        elif op == "field_equation_residuals":
            rep = md.field_equation_residuals(w)
            res.outputs.update({
                "continuity": rep.continuity_residual,
                "hamilton_jacobi": rep.hj_residual,
                "vorticity_kinematic": rep.vorticity_kinematic,
                "vorticity_dynamic": rep.vorticity_dynamic,
            })
            res.results[op] = {"summary": rep.summary}
            for key in ("continuity", "hamilton_jacobi"):
                res.check(key, f"{key.replace('_', '-')} residual vanishes", rep.summary[key]["sup"], tol)
        elif op == "lagrangian_density":
            f = md.lagrangian_density(w)
            res.outputs["lagrangian"] = f
            res.results[op] = _summary(res, f)
        elif op == "constitutive_stress":
            c = fs.ConformalDeformation(w.R)
            sc = fs.constitutive_stress(c, w.hbar, w.mass)
            res.outputs["sigma_constitutive"] = sc
            out = _summary(res, sc)
            if grid.time_axis is None:
                st = md.stress_tensor(w)
                out["identity_mismatch"] = fs.constitutive_mismatch(sc, st, c, w.hbar, w.mass)
                res.check("constitutive_identity", "frame-strain stress equals the Madelung stress",
                          out["identity_mismatch"], 1e-12)
            res.results[op] = out


def _four_velocity(res: RunResult, s: rl.RelWaveState) -> CovectorField:
    spec = res.scenario.sections.get("four_velocity", {"u": [1.0] + [0.0] * (s.grid.dim - 1)})
    grid = s.grid
    if "u" in spec:
        u = np.asarray(spec["u"], dtype=float)
        if u.shape != (grid.dim,):
            raise ConfigurationError(f"four_velocity.u needs {grid.dim} entries")
        return CovectorField(grid, np.broadcast_to(u, grid.shape + (grid.dim,)).copy())
    if spec.get("from") == "momentum":
        p = g.gradient(s.S)
        sig = np.asarray(grid.signature, dtype=float)
        p2 = np.sum(sig * p.values**2, axis=-1)
        ok = p.mask & (p2 > 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            u = np.where(ok[..., None], p.values / np.sqrt(p2)[..., None], np.nan)
        return CovectorField(grid, u, ok)
    raise ConfigurationError("four_velocity needs u = [...] or from = 'momentum'")


def _relativistic(res: RunResult, s: rl.RelWaveState, ops):
    grid = s.grid
    tol = md.FORM_AGREEMENT_C * grid.h**2
    shell = None
    for op in ops:
        if op == "rho":
            res.outputs["rho"] = s.rho
            res.results[op] = _summary(res, s.rho)
        elif op == "kg_residual":
            re, im = rl.kg_residual(s)
            res.outputs["kg_real"], res.outputs["kg_imag"] = re, im
            sup = max(g.sup_norm(re), g.sup_norm(im))
            res.results[op] = {"real": g.norms(re), "imag": g.norms(im)}
            res.check("klein_gordon", "wave equation residual vanishes", sup, tol)
        elif op == "rel_field_residuals":
            rep = rl.rel_field_residuals(s)
            shell = rep.mass_shell_residual
            res.outputs["continuity"] = rep.continuity_residual
            res.outputs["mass_shell"] = rep.mass_shell_residual
            res.results[op] = {"summary": rep.summary}
        elif op == "effective_mass":
            em = rl.effective_mass(s)
            res.outputs["m_eff"] = em.mass
            out = _summary(res, em.mass) if em.mass.n_valid else {"valid_points": 0}
            out["tachyonic_points"] = int(em.tachyonic.sum())
            if em.has_tachyonic:
                res.warnings.append(f"effective mass: {int(em.tachyonic.sum())} tachyonic points excluded")
            res.results[op] = out
        elif op == "dispersion_residual":
            f = rl.dispersion_residual(s)
            res.outputs["dispersion"] = f
            out = _summary(res, f)
            ref = shell if shell is not None else rl.rel_field_residuals(s).mass_shell_residual
            mask = f.mask & ref.mask
            out["rescaling_mismatch"] = _rel_identity(s.hbar**2 * f.values, ref.values, mask)
            res.check("dispersion_rescaling", "hbar^2 times the dispersion residual equals the mass-shell residual",
                      out["rescaling_mismatch"], 1e-12)
            res.results[op] = out
        elif op == "rel_stress_tensor":
            sf = rl.rel_stress_tensor_forms(s)
            res.outputs["sigma"] = sf.log_form
            res.outputs["sigma_amplitude_form"] = sf.amplitude_form
            res.results[op] = dict(_summary(res, sf.log_form), form_mismatch=sf.relative_mismatch)
            res.check("rel_stress_two_forms", "log-density and amplitude forms of the stress agree",
                      sf.relative_mismatch, tol)
        elif op == "energy_momentum_tensor":
            em = rl.energy_momentum_tensor(s, _four_velocity(res, s))
            res.outputs["T"] = em.T
            res.outputs["div_T"] = em.divergence
            res.results[op] = {"T": g.norms(em.T), "divergence": g.norms(em.divergence)}
        elif op == "rel_mean_pressure":
            pf = rl.rel_mean_pressure_forms(s)
            res.outputs["pi_bar"] = pf.trace_form
            res.outputs["pi_bar_box_form"] = pf.box_form
            res.outputs["pi_bar_amplitude_form"] = pf.amplitude_form
            res.results[op] = dict(_summary(res, pf.trace_form), mismatches=pf.mismatches)
            for k in ("trace-box", "trace-amplitude"):
                res.check(f"rel_mean_pressure_{k.replace('-', '_')}", "mean pressure forms agree",
                          pf.mismatches[k], tol)
        elif op == "rel_lagrangian":
            f = rl.rel_lagrangian(s)
            res.outputs["lagrangian"] = f
            res.results[op] = _summary(res, f)
        elif op == "constitutive_stress":
            c = fs.ConformalDeformation(s.R)
            sc = fs.constitutive_stress(c, s.hbar, s.m0)
            st = rl.rel_stress_tensor(s)
            res.outputs["sigma_constitutive"] = sc
            mismatch = fs.constitutive_mismatch(sc, st, c, s.hbar, s.m0)
            res.results[op] = dict(_summary(res, sc), identity_mismatch=mismatch)
            res.check("constitutive_identity", "frame-strain stress equals the Madelung stress", mismatch, 1e-12)


def _conformal(res: RunResult, c: fs.ConformalDeformation, ops):
    grid = c.grid
    tol = md.FORM_AGREEMENT_C * grid.h**2
    hbar, mass = res.scenario.constants["hbar"], res.scenario.constants["mass"]
    for op in ops:
        if op == "rho":
            res.outputs["rho"] = c.rho
            res.results[op] = _summary(res, c.rho)
        elif op == "strain_one_form":
            f = fs.strain_one_form(c)
            res.outputs["omega"] = f
            res.results[op] = _summary(res, f)
        elif op == "strain_differential":
            f = fs.strain_differential(c)
            res.outputs["d_omega"] = f
            res.results[op] = _summary(res, f)
        elif op == "constitutive_stress":
            sc = fs.constitutive_stress(c, hbar, mass)
            res.outputs["sigma_constitutive"] = sc
            out = _summary(res, sc)
            if not grid.is_lorentzian and grid.time_axis is None:
                zero = ScalarField(grid, np.zeros(grid.shape))
                st = md.stress_tensor(md.WaveState(c.R, zero, None, hbar, mass, stationary=True))
                out["identity_mismatch"] = fs.constitutive_mismatch(sc, st, c, hbar, mass)
                res.check("constitutive_identity", "frame-strain stress equals the Madelung stress",
                          out["identity_mismatch"], 1e-12)
            res.results[op] = out
        elif op == "teleparallel_connection":
            conn = fs.teleparallel_connection(c)
            res.outputs["connection"] = conn.omega_coeffs
            res.outputs["coframe_parallelism"] = conn.parallelism_residual
            rel = fs.relative_residual(fs.compatibility_terms(c)["coframe"])
            res.results[op] = {"convention_sign": conn.convention_sign,
                               "coframe_parallelism": dict(g.norms(conn.parallelism_residual), relative=rel)}
            res.check("coframe_parallelism", "deformed coframe is parallel", rel, tol)
        elif op == "torsion_and_structure":
            t = fs.torsion_and_structure(c)
            res.outputs["torsion"] = t.torsion
            res.outputs["torsion_from_connection"] = t.torsion_from_connection
            res.outputs["structure"] = t.structure
            res.results[op] = {"torsion": g.norms(t.torsion), "mismatches": t.mismatches}
            for k, v in sorted(t.mismatches.items()):
                res.check(f"torsion_{k.replace('-', '_')}", "torsion routes agree", v, tol)
        elif op == "curvature_residual":
            f = fs.curvature_residual(c)
            res.outputs["curvature"] = f
            res.results[op] = _summary(res, f)
            res.check("curvature", "teleparallel curvature vanishes", g.sup_norm(f), tol)
        elif op == "compatibility_suite":
            rep = fs.compatibility_suite(c)
            res.outputs["parallel_covector"] = rep.parallel_covector
            res.outputs["deformed_frame_connection"] = rep.deformed_frame_connection
            res.outputs["volume_parallelism"] = rep.volume
            res.outputs["metric_parallelism"] = rep.metric
            r = rep.residuals()
            res.results[op] = {"residuals": r, "coefficients": list(rep.coefficients),
                               "convention_sign": rep.convention_sign}
            for k in sorted(r):
                res.check(k, "parallel transport residual vanishes", r[k]["relative"], tol)
        elif op == "polar_frame_decomposition":
            p = fs.polar_frame_decomposition(c.coframe())
            res.outputs["rotation"] = p.rotation
            res.outputs["frame_strain"] = p.strain
            res.outputs["rotation_part"] = p.rotation_part
            res.outputs["strain_part"] = p.strain_part
            res.results[op] = {"iterations": p.iterations, "rotation_part": g.norms(p.rotation_part),
                               "strain_part": g.norms(p.strain_part)}
        elif op == "deformed_metric":
            f = c.metric()
            res.outputs["g"] = f
            res.results[op] = _summary(res, f)


def _plate(res: RunResult, z: ScalarField, ops):
    coeffs = wr.PlateCoefficients(**{k: float(v) for k, v in res.scenario.sections.get("plate", {}).items()})
    for op in ops:
        if op == "plate_couple_stress":
            pc = wr.plate_couple_stress(z, coeffs)
            res.outputs.update({"K": pc.K, "Lambda": pc.Lam, "Pi": pc.Pi})
            res.results[op] = {
                name: {"min": float(np.min(f.values[f.mask])), "max": float(np.max(f.values[f.mask]))}
                for name, f in (("K", pc.K), ("Lambda", pc.Lam), ("Pi", pc.Pi))
            }


def first_order_sweep(scn: Scenario, grid: Grid, eps_values) -> dict:
    errors = []
    residuals = []
    for eps in eps_values:
        pair = ms.inverse_strain_pair(build_metric(scn, grid, eps=float(eps)))
        errors.append(pair.first_order_error)
        residuals.append(pair.residual)
    slope = float(np.polyfit(np.log(eps_values), np.log(errors), 1)[0])
    return {"eps": [float(e) for e in eps_values], "first_order_error": errors, "residual": residuals, "slope": slope}


def _metric(res: RunResult, m: ms.MetricStrainField, ops):
    grid = m.grid
    tol = md.FORM_AGREEMENT_C * grid.h**2
    stack = None
    for op in ops:
        if op == "strain_from_metric":
            res.outputs["E"] = m.E_lower
            res.outputs["g"] = m.g_lower
            res.results[op] = {"E": g.norms(m.E_lower), "singular_points": int(m.singular.sum())}
        elif op == "connection_from_strain":
            gam = ms.connection_from_strain(m)
            res.outputs["Gamma"] = gam
            res.results[op] = _summary(res, gam)
        elif op == "inverse_strain_pair":
            p = ms.inverse_strain_pair(m)
            res.outputs["E_upper"] = p.E_upper
            res.outputs["E_upper_first_order"] = p.first_order
            res.results[op] = {"residual": p.residual, "first_order_error": p.first_order_error}
            res.check("inverse_strain_exact", "exact inverse-strain relation holds", p.residual, 1e-10)
        elif op == "curvature_stack":
            stack = ms.curvature_stack(m)
            res.outputs.update({"riemann": stack.riemann, "ricci": stack.ricci,
                                "scalar_curvature": stack.scalar, "einstein": stack.einstein})
            res.results[op] = {
                "riemann": g.norms(stack.riemann),
                "ricci": g.norms(stack.ricci),
                "scalar": g.norms(stack.scalar),
                "einstein": _summary(res, stack.einstein),
                "first_bianchi": stack.first_bianchi,
                "einstein_asymmetry": stack.einstein_asymmetry,
            }
            res.check("first_bianchi", "cyclic sum of the curvature vanishes", stack.first_bianchi, tol)
        elif op == "einstein_divergence":
            stack = stack or ms.curvature_stack(m)
            div = ms.einstein_divergence(stack)
            res.outputs["div_einstein"] = div
            res.results[op] = _summary(res, div)
            res.check("einstein_divergence", "covariant divergence of the Einstein tensor vanishes",
                      g.sup_norm(div), tol)
        elif op == "first_order_sweep":
            eps = res.scenario.sections.get("metric", {}).get("eps_sweep", [1e-1, 1e-2, 1e-3])
            sweep = first_order_sweep(res.scenario, grid, eps)
            res.results[op] = sweep
            res.check("first_order_slope", "first-order inverse strain error scales as eps^2",
                      abs(sweep["slope"] - 2.0), 0.1)


def _curve(res: RunResult, curve: wr.SampledCurve, ops):
    sec = res.scenario.sections.get("curve", {})
    n_out = int(sec.get("resample", 0))
    if n_out:
        curve = wr.arclength_resample(curve, n_out)
    frames = rates = None

    def get_frames():
        nonlocal frames
        if frames is None:
            src = sec.get("frames", "frenet")
            frames = wr.frenet_frame(curve) if src == "frenet" else wr.load_frames_csv(res.scenario.base_dir / src, curve.s)
        return frames

    def get_rates():
        nonlocal rates
        if rates is None:
            rates = wr.strain_rates(get_frames())
        return rates

    stiffness = wr.StiffnessMatrix(np.asarray(sec.get("stiffness", np.eye(3).tolist()), dtype=float))
    for op in ops:
        if op == "arclength_resample":
            res.outputs["curve"] = {"s": curve.s, "x": curve.points[:, 0], "y": curve.points[:, 1], "z": curve.points[:, 2]}
            res.results[op] = {"samples": len(curve), "length": curve.length,
                               "spacing_deviation": curve.spacing_deviation()}
        elif op == "frenet_frame":
            F = get_frames()
            res.outputs["frames"] = {"s": F.s, **{f"e{i + 1}{a}": F.frames[:, i, j]
                                                  for i in range(3) for j, a in enumerate("xyz")}}
            res.results[op] = {"samples": len(F), "orthonormality_defect": wr.orthonormality_defect(F.frames),
                               "flag": F.flag}
        elif op == "strain_rates":
            r = get_rates()
            res.outputs["rates"] = {"s": r.s, "kappa": r.kappa, "lam": r.lam, "tau": r.tau}
            res.results[op] = {
                name: {"mean": float(np.mean(v)), "min": float(np.min(v)), "max": float(np.max(v))}
                for name, v in (("kappa", r.kappa), ("lam", r.lam), ("tau", r.tau), ("bending", r.bending()))
            }
            res.results[op]["rate_asymmetry"] = r.rate_asymmetry
            res.results[op]["diagonal_defect"] = r.diagonal_defect
            ds = float(r.s[1] - r.s[0])
            res.check("rate_antisymmetry", "frame rate matrix is antisymmetric", r.rate_asymmetry,
                      md.FORM_AGREEMENT_C * ds**2)
        elif op == "wire_couple_stress":
            M = wr.wire_couple_stress(get_rates(), stiffness)
            res.outputs["couple_stress"] = {"s": M.s, "K": M.values[:, 0], "L": M.values[:, 1], "T": M.values[:, 2]}
            res.results[op] = {"mean": np.mean(M.values, axis=0).tolist(), "stiffness": stiffness.A.tolist()}
        elif op == "virtual_work":
            r = get_rates()
            res.results[op] = {"self_pairing": wr.virtual_work(wr.wire_couple_stress(r, stiffness), r)}
        elif op == "frame_reconstruction":
            F, r = get_frames(), get_rates()
            s, rec = wr.reconstruct_frames(r, F.frames[1])
            idx = np.searchsorted(F.s, s)
            res.results[op] = {"max_error": float(np.max(np.abs(rec - F.frames[idx])))}
            res.check("frame_reconstruction", "frames rebuilt from the rates match the input",
                      res.results[op]["max_error"], 1e-3)


_RUNNERS = {
    "madelung": _madelung,
    "relativistic": _relativistic,
    "conformal": _conformal,
    "plate": _plate,
    "metric": _metric,
    "curve": _curve,
}


# --------------------------------------------------------------------------
# report and dumps


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, g.ExactMatch):
        return "EXACT_MATCH"
    return obj


def write_json(path: Path, payload: dict):
    text = json.dumps(jsonable(payload), sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n")


def timestamp() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


def build_report(res: RunResult, dumps: dict | None = None) -> dict:
    return {
        "version": __version__,
        "timestamp": timestamp(),
        "scenario": res.scenario.echo(),
        "grid": res.grid.describe() if res.grid is not None else None,
        "conventions": CONVENTIONS,
        "operations": res.results,
        "checks": res.checks,
        "warnings": list(res.warnings),
        "passed": res.passed,
        "dumps": dumps or {},
    }


def mask_extent(f: Field) -> dict:
    idx = np.argwhere(f.mask)
    labels = g.coordinate_labels(f.grid)
    coords = f.grid.coords()
    if not len(idx):
        return {}
    return {lab: [float(coords[k][idx[:, k].min()]), float(coords[k][idx[:, k].max()])]
            for k, lab in enumerate(labels)}


def dump_tabular(table: dict, path: Path) -> int:
    cols = list(table)
    n = len(table[cols[0]])
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in range(n):
            fh.write(",".join(repr(float(table[c][r])) for c in cols) + "\n")
    return n


def write_dumps(res: RunResult, names, out: Path) -> dict:
    manifest = {}
    for name in names:
        obj = res.outputs[name]
        path = out / f"{name}.csv"
        if isinstance(obj, Field):
            rows = g.dump_csv(obj, path, name)
            manifest[name] = {"file": path.name, "rows": rows, "rank": obj.rank,
                              "mask_extent": mask_extent(obj), "valid_points": obj.n_valid}
        else:
            rows = dump_tabular(obj, path)
            s = np.asarray(obj["s"])
            manifest[name] = {"file": path.name, "rows": rows, "rank": None,
                              "mask_extent": {"s": [float(s.min()), float(s.max())]}}
    return manifest


def _ops_for(scn: Scenario, names) -> list[str]:
    ops = []
    for name in names:
        owners = [op for op in OPERATIONS[scn.kind] if name in OUTPUTS[op]]
        preferred = [op for op in owners if op in scn.operations]
        op = (preferred or owners)[0]
        if op not in ops:
            ops.append(op)
    return ops


def check_output_names(scn: Scenario, names):
    avail = available_outputs(scn.kind)
    unknown = [n for n in names if n not in avail]
    if unknown:
        raise ScenarioError(f"{scn.path or scn.name}:fields",
                            f"unknown field(s) {', '.join(unknown)}; available: {', '.join(avail)}")


def run_scenario(scn: Scenario, out: Path) -> dict:
    check_output_names(scn, scn.dump)
    ops = list(scn.operations)
    for op in _ops_for(scn, scn.dump):
        if op not in ops:
            ops.append(op)
    res = run_operations(scn, operations=ops)
    out.mkdir(parents=True, exist_ok=True)
    dumps = write_dumps(res, scn.dump, out)
    report = build_report(res, dumps)
    write_json(out / "report.json", report)
    return report


def export_fields(scn: Scenario, names, out: Path) -> dict:
    check_output_names(scn, names)
    res = run_operations(scn, operations=_ops_for(scn, names))
    out.mkdir(parents=True, exist_ok=True)
    manifest = write_dumps(res, names, out)
    payload = {"scenario": scn.name, "version": __version__, "dumps": manifest}
    write_json(out / "manifest.json", payload)
    return payload
