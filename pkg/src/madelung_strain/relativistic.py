"""Relativistic Madelung medium from the Klein-Gordon equation.

Grids are Lorentzian with x0 = c t and eta = diag(+1, -1, ..., -1).  All
traces and index raisings use that eta.  The mass-shell residual keeps the
sign p^2 - m0^2 c^2 + hbar^2 box(R)/R; see :func:`rel_field_residuals`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import grid as g
from .errors import ConfigurationError, DimensionError, NormalizationError
from .grid import CovectorField, Grid, MatrixField, ScalarField
from .madelung import FORM_AGREEMENT_C, amplitude_mask, check_agreement, _scale

UNIT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class RelWaveState:
    R: ScalarField
    S: ScalarField
    m0: float = 1.0
    hbar: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        grid = self.R.grid
        if self.S.grid != grid:
            raise ConfigurationError("R and S must share one grid")
        if not grid.is_lorentzian:
            raise ConfigurationError("RelWaveState needs a Lorentzian grid")
        if not (self.m0 > 0 and self.hbar > 0 and self.c > 0):
            raise ConfigurationError("m0, hbar and c must be positive")
        if np.any(self.R.values[self.R.mask] < 0):
            raise ConfigurationError("amplitude R must be non-negative")
        support = amplitude_mask(self.R) & self.S.mask
        object.__setattr__(self, "R", self.R.restrict(support))
        object.__setattr__(self, "S", self.S.restrict(support))

    @property
    def grid(self) -> Grid:
        return self.R.grid

    @property
    def support(self) -> np.ndarray:
        return self.R.mask

    @property
    def rho(self) -> ScalarField:
        return ScalarField(self.grid, self.R.values**2, self.support)

    @property
    def k0(self) -> float:
        return self.m0 * self.c / self.hbar


def _eta_norm2(grid: Grid, cov: np.ndarray) -> np.ndarray:
    return np.sum(np.asarray(grid.signature, dtype=float) * cov**2, axis=-1)


def _box_ratio(s: RelWaveState) -> ScalarField:
    box = g.laplace_beltrami_flat(s.R)
    mask = box.mask & s.support
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(mask, box.values / s.R.values, np.nan)
    return ScalarField(s.grid, vals, mask)


def kg_residual(s: RelWaveState) -> tuple[ScalarField, ScalarField]:
    """Real and imaginary parts of box(Psi) + k0^2 Psi with Psi = R exp(-iS/hbar)."""
    phase = -s.S.values / s.hbar
    re = ScalarField(s.grid, s.R.values * np.cos(phase), s.support)
    im = ScalarField(s.grid, s.R.values * np.sin(phase), s.support)
    k02 = s.k0**2
    out = []
    for part in (re, im):
        box = g.laplace_beltrami_flat(part)
        out.append(ScalarField(s.grid, box.values + k02 * part.values, box.mask))
    return out[0], out[1]


@dataclass(frozen=True, eq=False)
class RelativisticReport:
    continuity_residual: ScalarField
    mass_shell_residual: ScalarField
    summary: dict = field(default_factory=dict)


def rel_field_residuals(s: RelWaveState) -> RelativisticReport:
    """div(rho p^sharp) and p^2 - m0^2 c^2 + hbar^2 box(R)/R, with p = dS."""
    grid = s.grid
    rho = s.rho
    p = g.gradient(s.S)
    flux = CovectorField(grid, rho.values[..., None] * p.values, p.mask & s.support)
    continuity = g.divergence(flux)
    ratio = _box_ratio(s)
    mask = ratio.mask & p.mask
    shell = _eta_norm2(grid, p.values) - (s.m0 * s.c) ** 2 + s.hbar**2 * ratio.values
    shell = ScalarField(grid, shell, mask)
    return RelativisticReport(
        continuity,
        shell,
        {"continuity": g.norms(continuity), "mass_shell": g.norms(shell)},
    )


@dataclass(frozen=True, eq=False)
class EffectiveMass:
    mass: ScalarField
    tachyonic: np.ndarray  # points where m^2 < 0; excluded from ``mass``

    @property
    def has_tachyonic(self) -> bool:
        return bool(self.tachyonic.any())


def effective_mass(s: RelWaveState) -> EffectiveMass:
    """m = sqrt(m0^2 - (hbar/c)^2 box(R)/R); negative radicands are flagged."""
    ratio = _box_ratio(s)
    radicand = s.m0**2 - (s.hbar / s.c) ** 2 * ratio.values
    with np.errstate(invalid="ignore"):
        tachyonic = ratio.mask & (radicand < 0)
        ok = ratio.mask & ~tachyonic
        m = np.sqrt(np.where(ok, radicand, np.nan))
    return EffectiveMass(ScalarField(s.grid, m, ok), tachyonic)


def dispersion_residual(s: RelWaveState) -> ScalarField:
    """k^2 - k0^2 + box(R)/R with k = dS / hbar."""
    p = g.gradient(s.S)
    ratio = _box_ratio(s)
    k = p.values / s.hbar
    mask = ratio.mask & p.mask
    return ScalarField(s.grid, _eta_norm2(s.grid, k) - s.k0**2 + ratio.values, mask)


@dataclass(frozen=True, eq=False)
class RelStressForms:
    log_form: MatrixField
    amplitude_form: MatrixField
    relative_mismatch: float
    tolerance: float


def rel_stress_tensor_forms(s: RelWaveState, check: bool = True) -> RelStressForms:
    grid = s.grid
    rho = s.rho
    with np.errstate(divide="ignore", invalid="ignore"):
        log_rho = ScalarField(grid, np.log(rho.values), s.support)
    hl = g.hessian(log_rho)
    hr = g.hessian(s.R)
    dr = g.gradient(s.R)
    mask = hl.mask & hr.mask
    c4 = s.hbar**2 / (4 * s.m0)
    c2 = s.hbar**2 / (2 * s.m0)
    rr = s.R.values[..., None, None] * hr.values
    outer = dr.values[..., :, None] * dr.values[..., None, :]
    log_form = c4 * rho.values[..., None, None] * hl.values
    amp_form = c2 * (rr - outer)
    tol = FORM_AGREEMENT_C * grid.h**2
    mismatch = check_agreement(
        "relativistic stress two-form agreement", log_form, amp_form, mask,
        c2 * _scale(rr, outer, mask), tol if check else np.inf,
    )
    return RelStressForms(
        MatrixField(grid, log_form, mask, symmetry="symmetric"),
        MatrixField(grid, 0.5 * (amp_form + np.swapaxes(amp_form, -1, -2)), mask, symmetry="symmetric"),
        mismatch,
        tol,
    )


def rel_stress_tensor(s: RelWaveState) -> MatrixField:
    """sigma_{mu nu} = (hbar^2/4m0) rho d_mu d_nu ln(rho), lower indices.

    Cross-checked against (hbar^2/2m0)(R d d R - dR dR) like the
    non-relativistic stress.
    """
    return rel_stress_tensor_forms(s).log_form


def raise_both(grid: Grid, t: np.ndarray) -> np.ndarray:
    sig = np.asarray(grid.signature, dtype=float)
    return sig[:, None] * t * sig[None, :]


@dataclass(frozen=True, eq=False)
class EnergyMomentum:
    T: MatrixField  # upper indices
    divergence: CovectorField  # d_nu T^{mu nu}


def energy_momentum_tensor(s: RelWaveState, u: CovectorField) -> EnergyMomentum:
    """T^{mu nu} = m0 rho u^mu u^nu - sigma^{mu nu} and its divergence.

    ``u`` holds covariant components u_mu and must satisfy eta(u, u) = 1 on
    its valid points.
    """
    grid = s.grid
    if u.grid != grid:
        raise ConfigurationError("four-velocity lives on a different grid")
    sig = np.asarray(grid.signature, dtype=float)
    norm = _eta_norm2(grid, u.values)
    valid = u.mask & s.support
    if valid.any():
        worst = float(np.max(np.abs(norm[valid] - 1.0)))
        if worst > UNIT_TOL:
            raise NormalizationError(f"four-velocity is not unit-normalized: max |eta(u,u) - 1| = {worst:.3e}")
    u_up = sig * u.values
    sigma = rel_stress_tensor(s)
    sigma_up = raise_both(grid, sigma.values)
    kinetic = s.m0 * s.rho.values[..., None, None] * u_up[..., :, None] * u_up[..., None, :]
    mask = sigma.mask & u.mask
    T = MatrixField(grid, kinetic - sigma_up, mask, symmetry="symmetric")
    div = g.tensor_divergence(T, "second", raise_contracted=False)
    return EnergyMomentum(T, div)


@dataclass(frozen=True, eq=False)
class RelPressureForms:
    trace_form: ScalarField  # -(1/4) sigma^mu_mu
    box_form: ScalarField  # -(hbar^2/16 m0) rho box(ln rho)
    amplitude_form: ScalarField  # (hbar^2/8 m0)(|dR|^2 - R box R), sign as derived
    flipped_amplitude_form: ScalarField  # the opposite overall sign, reported for comparison
    mismatches: dict
    tolerance: float


def rel_mean_pressure_forms(s: RelWaveState, check: bool = True) -> RelPressureForms:
    grid = s.grid
    if grid.dim != 4:
        raise DimensionError(f"rel_mean_pressure uses the 1/4 trace factor and needs a 4-D grid, got {grid.dim}-D")
    sigma = rel_stress_tensor_forms(s, check=check).log_form
    sig = np.asarray(grid.signature, dtype=float)
    trace = np.einsum("...ii,i->...", sigma.values, sig)
    p_trace = -trace / 4.0

    with np.errstate(divide="ignore", invalid="ignore"):
        log_rho = ScalarField(grid, np.log(s.rho.values), s.support)
    box_log = g.laplace_beltrami_flat(log_rho)
    p_box = -(s.hbar**2 / (16 * s.m0)) * s.rho.values * box_log.values

    dr = g.gradient(s.R)
    box_r = g.laplace_beltrami_flat(s.R)
    grad2 = _eta_norm2(grid, dr.values)
    r_box = s.R.values * box_r.values
    c8 = s.hbar**2 / (8 * s.m0)
    p_amp = c8 * (grad2 - r_box)

    mask = sigma.mask & box_log.mask & dr.mask & box_r.mask
    tol = FORM_AGREEMENT_C * grid.h**2
    scale = c8 * _scale(grad2, r_box, mask)
    limit = tol if check else np.inf
    mismatches = {
        "trace-box": check_agreement("relativistic pressure trace/box", p_trace, p_box, mask, scale, limit),
        "trace-amplitude": check_agreement("relativistic pressure trace/amplitude", p_trace, p_amp, mask, scale, limit),
    }
    if mask.any() and scale > 0:
        mismatches["trace-flipped_amplitude"] = float(np.max(np.abs(p_trace[mask] + p_amp[mask]))) / scale
    return RelPressureForms(
        ScalarField(grid, p_trace, mask),
        ScalarField(grid, p_box, mask),
        ScalarField(grid, p_amp, mask),
        ScalarField(grid, -p_amp, mask),
        mismatches,
        tol,
    )


def rel_mean_pressure(s: RelWaveState) -> ScalarField:
    """pi_bar = -(1/4) sigma^mu_mu with eta-raising (4-D grids only)."""
    return rel_mean_pressure_forms(s).trace_form


def rel_lagrangian(s: RelWaveState) -> ScalarField:
    """L = -(hbar^2/2m0)|dR|^2 - (rho/2)(|dS|^2/m0 + m0 c^2), eta-norms."""
    grid = s.grid
    dr = g.gradient(s.R)
    ds = g.gradient(s.S)
    mask = dr.mask & ds.mask
    vals = -(s.hbar**2 / (2 * s.m0)) * _eta_norm2(grid, dr.values) - 0.5 * s.rho.values * (
        _eta_norm2(grid, ds.values) / s.m0 + s.m0 * s.c**2
    )
    return ScalarField(grid, vals, mask)
