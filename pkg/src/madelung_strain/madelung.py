"""Non-relativistic Madelung medium on a Euclidean grid.

The wave function is carried as the pair (R, S) with Psi = R exp(-i S / hbar)
and rho = R^2.  Points where R falls below ``AMPLITUDE_FLOOR * max(R)`` are
masked out of every derived quantity, so ratios such as Delta R / R never
blow up at nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import grid as g
from .errors import (
    ConfigurationError,
    DimensionError,
    EmptySupportError,
    InternalConsistencyError,
)
from .grid import CovectorField, Grid, MatrixField, ScalarField

AMPLITUDE_FLOOR = 1e-8
FORM_AGREEMENT_C = 10.0


def amplitude_mask(R: ScalarField, floor: float = AMPLITUDE_FLOOR) -> np.ndarray:
    valid = R.values[R.mask]
    if valid.size == 0 or np.max(valid) <= 0:
        raise EmptySupportError()
    cutoff = floor * float(np.max(valid))
    with np.errstate(invalid="ignore"):
        mask = R.mask & (R.values >= cutoff) & (R.values > 0)
    if not mask.any():
        raise EmptySupportError()
    return mask


def check_agreement(name: str, a: np.ndarray, b: np.ndarray, mask: np.ndarray, scale: float, tol: float) -> float:
    """Relative sup-norm mismatch of ``a`` and ``b``; raises beyond ``tol``."""
    if not mask.any():
        return 0.0
    diff = float(np.max(np.abs(a[mask] - b[mask])))
    rel = diff / scale if scale > 0 else diff
    if rel > tol:
        raise InternalConsistencyError(name, rel, tol)
    return rel


def _scale(*arrays_and_mask) -> float:
    *arrays, mask = arrays_and_mask
    if not mask.any():
        return 0.0
    return max(float(np.max(np.abs(a[mask]))) for a in arrays)


def _bmask(mask, ndim):
    return mask.reshape(mask.shape + (1,) * (ndim - mask.ndim))


@dataclass(frozen=True, eq=False)
class WaveState:
    """Madelung pair (R, S) with constants; the support mask is applied on construction."""

    R: ScalarField
    S: ScalarField
    V: ScalarField | None = None
    hbar: float = 1.0
    mass: float = 1.0
    stationary: bool = False
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        grid = self.R.grid
        if self.S.grid != grid or (self.V is not None and self.V.grid != grid):
            raise ConfigurationError("R, S and V must share one grid")
        if grid.is_lorentzian:
            raise ConfigurationError("WaveState needs a Euclidean grid (use RelWaveState for Lorentzian grids)")
        if not (self.hbar > 0 and self.mass > 0):
            raise ConfigurationError("hbar and mass must be positive")
        if np.any(self.R.values[self.R.mask] < 0):
            raise ConfigurationError("amplitude R must be non-negative")
        support = amplitude_mask(self.R) & self.S.mask
        if self.V is not None:
            support &= self.V.mask
        object.__setattr__(self, "R", self.R.restrict(support))
        object.__setattr__(self, "S", self.S.restrict(support))
        if self.V is not None:
            object.__setattr__(self, "V", self.V.restrict(support))

    @property
    def grid(self) -> Grid:
        return self.R.grid

    @property
    def support(self) -> np.ndarray:
        return self.R.mask

    @property
    def rho(self) -> ScalarField:
        return ScalarField(self.grid, self.R.values**2, self.support)

    def time_derivative(self, f: ScalarField) -> ScalarField:
        """d/dt on the time axis, or zero for a declared-stationary state."""
        t = self.grid.time_axis
        if t is None:
            if not self.stationary:
                raise ConfigurationError(
                    "time derivatives requested on a grid without a time axis; "
                    "declare the scenario stationary"
                )
            return ScalarField(self.grid, np.zeros(self.grid.shape), f.mask)
        return ScalarField(self.grid, g.gradient(f).values[..., t], g.erode(f.mask, 1))


def _require_spatial(w: WaveState, what: str):
    if w.grid.time_axis is not None:
        raise DimensionError(f"{what} needs a purely spatial grid (no time axis)")


def _spatial_only(grid: Grid, values: np.ndarray) -> np.ndarray:
    t = grid.time_axis
    if t is not None:
        values = values.copy()
        values[..., t] = 0.0
    return values


def decompose(psi_real: ScalarField, psi_imag: ScalarField, hbar: float = 1.0, mass: float = 1.0,
              stationary: bool = False) -> WaveState:
    """Polar form of a sampled wave function.

    S = -hbar * arg(Psi), with the phase unwrapped by line sweeps along
    axis 0 and then each further axis in turn.  Remaining jumps above pi
    between neighbouring valid points are reported in ``warnings``.
    """
    if psi_real.grid != psi_imag.grid:
        raise ConfigurationError("real and imaginary parts live on different grids")
    grid = psi_real.grid
    mask = psi_real.mask & psi_imag.mask
    re = np.where(mask, psi_real.values, 0.0)
    im = np.where(mask, psi_imag.values, 0.0)
    R = ScalarField(grid, np.hypot(re, im), mask)
    support = amplitude_mask(R)

    phase = np.arctan2(im, re)
    for axis in range(grid.dim):
        phase = np.unwrap(phase, axis=axis)

    warnings = []
    for axis in range(grid.dim):
        jump = np.abs(np.diff(phase, axis=axis))
        both = np.logical_and(np.delete(support, -1, axis=axis), np.delete(support, 0, axis=axis))
        n_bad = int(np.count_nonzero(jump[both] > np.pi))
        if n_bad:
            warnings.append(f"unwrap: {n_bad} phase jump(s) above pi along axis {axis}")

    S = ScalarField(grid, -hbar * phase, mask)
    return WaveState(R, S, None, hbar, mass, stationary, tuple(warnings))


def _laplacian_ratio(w: WaveState) -> ScalarField:
    lap = g.laplace_beltrami_flat(w.R)
    mask = lap.mask & w.support
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(mask, lap.values / w.R.values, np.nan)
    return ScalarField(w.grid, ratio, mask)


def quantum_potential(w: WaveState) -> ScalarField:
    """V_q = -(hbar^2 / 2m) Delta R / R (spatial Laplacian only)."""
    ratio = _laplacian_ratio(w)
    return ScalarField(w.grid, -(w.hbar**2 / (2 * w.mass)) * ratio.values, ratio.mask)


def quantum_force(w: WaveState) -> CovectorField:
    """f_q = (hbar^2 / 2m) d(Delta R / R); time components are zero."""
    grad = g.gradient(_laplacian_ratio(w))
    vals = _spatial_only(w.grid, (w.hbar**2 / (2 * w.mass)) * grad.values)
    return CovectorField(w.grid, vals, grad.mask)


@dataclass(frozen=True, eq=False)
class StressForms:
    log_form: MatrixField
    amplitude_form: MatrixField
    relative_mismatch: float
    tolerance: float


def stress_tensor_forms(w: WaveState, check: bool = True) -> StressForms:
    """Both algebraic forms of the Madelung stress, cross-checked."""
    _require_spatial(w, "stress_tensor")
    grid = w.grid
    rho = w.rho
    with np.errstate(divide="ignore", invalid="ignore"):
        log_rho = ScalarField(grid, np.log(rho.values), w.support)
    hl = g.hessian(log_rho)
    hr = g.hessian(w.R)
    dr = g.gradient(w.R)
    mask = hl.mask & hr.mask

    c4 = w.hbar**2 / (4 * w.mass)
    c2 = w.hbar**2 / (2 * w.mass)
    R = w.R.values[..., None, None]
    rr = R * hr.values
    outer = dr.values[..., :, None] * dr.values[..., None, :]
    log_form = c4 * rho.values[..., None, None] * hl.values
    amp_form = c2 * (rr - outer)

    tol = FORM_AGREEMENT_C * grid.h**2
    scale = c2 * _scale(rr, outer, mask)
    mismatch = check_agreement("stress two-form agreement", log_form, amp_form, mask, scale, tol if check else np.inf)
    return StressForms(
        MatrixField(grid, log_form, mask, symmetry="symmetric"),
        MatrixField(grid, 0.5 * (amp_form + np.swapaxes(amp_form, -1, -2)), mask, symmetry="symmetric"),
        mismatch,
        tol,
    )


def stress_tensor(w: WaveState) -> MatrixField:
    """sigma_ij = (hbar^2/4m) rho d_i d_j ln(rho).

    The amplitude form (hbar^2/2m)(R d_i d_j R - d_i R d_j R) is evaluated
    alongside and must agree within 10 h^2 relative, otherwise an
    :class:`InternalConsistencyError` is raised.
    """
    return stress_tensor_forms(w).log_form


@dataclass(frozen=True, eq=False)
class PressureForms:
    trace_form: ScalarField
    amplitude_form: ScalarField
    potential_form: ScalarField
    mismatches: dict
    tolerance: float
    kinetic_term: ScalarField  # (hbar^2/6m)|dR|^2, never negative


def mean_pressure_forms(w: WaveState, check: bool = True) -> PressureForms:
    """Mean pressure three ways: -tr(sigma)/3, the |dR|^2 - R Delta R form,
    and rho V_q / 3 + (hbar^2/6m)|dR|^2."""
    _require_spatial(w, "mean_pressure")
    grid = w.grid
    if grid.dim != 3:
        raise DimensionError(f"mean_pressure uses the 1/3 trace factor and needs a 3-D grid, got {grid.dim}-D")
    sigma = stress_tensor_forms(w, check=check).log_form
    trace = np.trace(sigma.values, axis1=-2, axis2=-1)
    p_trace = -trace / 3.0

    dr = g.gradient(w.R)
    lap = g.laplace_beltrami_flat(w.R)
    vq = quantum_potential(w)
    c6 = w.hbar**2 / (6 * w.mass)
    grad2 = np.sum(dr.values**2, axis=-1)
    r_lap = w.R.values * lap.values
    p_amp = c6 * (grad2 - r_lap)
    p_pot = w.rho.values * vq.values / 3.0 + c6 * grad2

    mask = sigma.mask & dr.mask & lap.mask & vq.mask
    tol = FORM_AGREEMENT_C * grid.h**2
    scale = c6 * _scale(grad2, r_lap, mask)
    limit = tol if check else np.inf
    mismatches = {
        "trace-amplitude": check_agreement("mean pressure trace/amplitude", p_trace, p_amp, mask, scale, limit),
        "trace-potential": check_agreement("mean pressure trace/potential", p_trace, p_pot, mask, scale, limit),
        "amplitude-potential": check_agreement("mean pressure amplitude/potential", p_amp, p_pot, mask, scale, limit),
    }
    return PressureForms(
        ScalarField(grid, p_trace, mask),
        ScalarField(grid, p_amp, mask),
        ScalarField(grid, p_pot, mask),
        mismatches,
        tol,
        ScalarField(grid, c6 * grad2, mask),
    )


def mean_pressure(w: WaveState) -> ScalarField:
    """pi_bar = -(1/3) sigma^i_i on a 3-D grid, cross-checked against two closed forms."""
    return mean_pressure_forms(w).trace_form


def equilibrium_residual(w: WaveState) -> CovectorField:
    """d_j sigma_i^j - rho (f_q)_i; zero analytically, O(h^2) discretely."""
    _require_spatial(w, "equilibrium_residual")
    sigma = stress_tensor(w)
    div = g.tensor_divergence(sigma, "second")
    fq = quantum_force(w)
    mask = div.mask & fq.mask
    vals = div.values - w.rho.values[..., None] * fq.values
    return CovectorField(w.grid, vals, mask)


@dataclass(frozen=True, eq=False)
class MadelungReport:
    continuity_residual: ScalarField
    hj_residual: ScalarField
    vorticity_kinematic: MatrixField
    vorticity_dynamic: MatrixField
    equilibrium_residual: CovectorField | None
    summary: dict = field(default_factory=dict)


def _momentum(w: WaveState) -> CovectorField:
    dS = g.gradient(w.S)
    return CovectorField(w.grid, _spatial_only(w.grid, dS.values), dS.mask)


def _zero_time_block(grid: Grid, m: MatrixField) -> MatrixField:
    t = grid.time_axis
    if t is None:
        return m
    vals = m.values.copy()
    vals[..., t, :] = 0.0
    vals[..., :, t] = 0.0
    return MatrixField(grid, vals, m.mask, symmetry=m.symmetry)


def field_equation_residuals(w: WaveState) -> MadelungReport:
    """Residuals of the continuity and Hamilton-Jacobi equations plus vorticities.

    continuity:  m d_t rho + div(rho p)
    HJ:          d_t S + |dS|^2 / 2m + V + V_q
    Without a time axis the state must be declared stationary, which sets
    the d_t terms to zero.
    """
    grid = w.grid
    rho = w.rho
    p = _momentum(w)

    flux = CovectorField(grid, rho.values[..., None] * p.values, p.mask & w.support)
    div = g.divergence(flux)
    rho_t = w.time_derivative(rho)
    cont_mask = div.mask & rho_t.mask
    continuity = ScalarField(grid, w.mass * rho_t.values + div.values, cont_mask)

    vq = quantum_potential(w)
    s_t = w.time_derivative(w.S)
    weights = grid.contraction_weights()
    p2 = np.sum(weights * p.values**2, axis=-1)
    V = w.V.values if w.V is not None else 0.0
    hj_mask = vq.mask & s_t.mask & p.mask
    hj = ScalarField(grid, s_t.values + p2 / (2 * w.mass) + V + vq.values, hj_mask)

    omega_d = _zero_time_block(grid, g.exterior_derivative(p))
    omega_k = MatrixField(grid, omega_d.values / w.mass, omega_d.mask, symmetry="antisymmetric")

    eq = equilibrium_residual(w) if grid.time_axis is None else None
    summary = {
        "continuity": g.norms(continuity),
        "hamilton_jacobi": g.norms(hj),
        "vorticity_kinematic": g.norms(omega_k),
        "vorticity_dynamic": g.norms(omega_d),
    }
    if eq is not None:
        summary["equilibrium"] = g.norms(eq)
    return MadelungReport(continuity, hj, omega_k, omega_d, eq, summary)


def lagrangian_density(w: WaveState) -> ScalarField:
    """L = -rho [d_t S + |dS|^2/2m + V + (hbar^2/8m) |d rho|^2 / rho^2]."""
    grid = w.grid
    rho = w.rho
    p = _momentum(w)
    drho = g.gradient(rho)
    s_t = w.time_derivative(w.S)
    weights = grid.contraction_weights()
    p2 = np.sum(weights * p.values**2, axis=-1)
    drho2 = np.sum(weights * drho.values**2, axis=-1)
    V = w.V.values if w.V is not None else 0.0
    mask = p.mask & drho.mask & s_t.mask & w.support
    with np.errstate(divide="ignore", invalid="ignore"):
        bracket = s_t.values + p2 / (2 * w.mass) + V + (w.hbar**2 / (8 * w.mass)) * drho2 / rho.values**2
    return ScalarField(grid, np.where(mask, -rho.values * bracket, np.nan), mask)
