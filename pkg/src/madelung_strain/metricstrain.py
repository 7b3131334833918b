"""Metric strain E = g - eta on a Lorentzian grid and the curvature it carries.

Index layout: ``gamma[..., l, m, n] = Gamma^l_{mn}``,
``riemann[..., r, s, m, n] = R^r_{smn}`` with

    R^r_{smn} = d_m Gamma^r_{ns} - d_n Gamma^r_{ms}
                + Gamma^r_{ml} Gamma^l_{ns} - Gamma^r_{nl} Gamma^l_{ms},

``ricci[s, n] = R^r_{srn}`` and ``einstein = ricci - (scalar / 2) g``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grid as g
from .errors import ConfigurationError, InternalConsistencyError
from .grid import CovectorField, FourIndexField, Grid, MatrixField, ScalarField, ThreeIndexField

SINGULAR_DET = 1e-10
INVERSE_TOL = 1e-10
ROUTE_RTOL = 1e-12


def _bm(mask, ndim):
    return mask.reshape(mask.shape + (1,) * (ndim - mask.ndim))


def _sup(x: np.ndarray, mask: np.ndarray) -> float:
    return float(np.max(np.abs(x[mask]))) if mask.any() else 0.0


@dataclass(frozen=True, eq=False)
class MetricStrainField:
    """Strain of a metric against the flat background: g_lower = eta + E_lower."""

    E_lower: MatrixField
    singular: np.ndarray | None = None

    def __post_init__(self):
        grid = self.E_lower.grid
        if not grid.is_lorentzian:
            raise ConfigurationError("metric strain lives on a Lorentzian grid")
        if self.E_lower.symmetry != "symmetric":
            E = MatrixField(grid, self.E_lower.values, self.E_lower.mask, symmetry="symmetric")
            object.__setattr__(self, "E_lower", E)
        mask = self.E_lower.mask
        gl = np.where(_bm(mask, self.E_lower.values.ndim), self.E_lower.values + grid.eta, grid.eta)
        det = np.linalg.det(gl)
        singular = mask & (np.abs(det) <= SINGULAR_DET)
        object.__setattr__(self, "singular", singular)
        if singular.any():
            object.__setattr__(self, "E_lower", self.E_lower.restrict(~singular))

    @property
    def grid(self) -> Grid:
        return self.E_lower.grid

    @property
    def mask(self) -> np.ndarray:
        return self.E_lower.mask

    @property
    def g_lower(self) -> MatrixField:
        return MatrixField(self.grid, self.E_lower.values + self.grid.eta, self.mask, symmetry="symmetric")

    @property
    def g_upper(self) -> MatrixField:
        mask = self.mask
        gl = np.where(_bm(mask, 2 + self.grid.dim), self.E_lower.values + self.grid.eta, self.grid.eta)
        gu = np.linalg.inv(gl)
        gu = 0.5 * (gu + np.swapaxes(gu, -1, -2))
        defect = _sup(gu @ gl - np.eye(self.grid.dim), mask)
        if defect > INVERSE_TOL:
            raise InternalConsistencyError("metric inverse", defect, INVERSE_TOL)
        return MatrixField(self.grid, gu, mask, symmetry="symmetric")


def strain_from_metric(g_lower: MatrixField) -> MetricStrainField:
    """E = g - eta; derivatives of g and E coincide."""
    E = MatrixField(g_lower.grid, g_lower.values - g_lower.grid.eta, g_lower.mask, symmetry="symmetric")
    return MetricStrainField(E)


def connection_from_strain(m: MetricStrainField, check: bool = True) -> ThreeIndexField:
    """Gamma^l_{mn} = 1/2 g^{la} (d_m E_an + d_n E_ma - d_a E_mn).

    With ``check`` the result is compared against :func:`levi_civita`, which
    differentiates g itself through a separate loop.
    """
    grid = m.grid
    dE = g.partials(grid, m.E_lower.values)  # [..., a, n, m] = d_m E_an
    first = np.swapaxes(dE, -1, -2)  # d_m E_an
    second = np.einsum("...man->...amn", dE)  # d_n E_ma
    third = np.einsum("...mna->...amn", dE)  # d_a E_mn
    lowered = 0.5 * (first + second - third)  # Gamma_{a, mn}
    gu = m.g_upper.values
    gamma = np.einsum("...la,...amn->...lmn", gu, lowered)
    gamma = 0.5 * (gamma + np.swapaxes(gamma, -1, -2))
    mask = g.erode(m.mask, 1)
    out = ThreeIndexField(grid, gamma, mask)
    if check:
        other = levi_civita(m.g_lower, m.g_upper)
        scale = max(_sup(gamma, mask), _sup(other.values, mask))
        diff = _sup(gamma - other.values, mask)
        rel = diff / scale if scale > 0 else diff
        if rel > ROUTE_RTOL:
            raise InternalConsistencyError("connection from strain vs Levi-Civita from metric", rel, ROUTE_RTOL)
    return out


def levi_civita(g_lower: MatrixField, g_upper: MatrixField | None = None) -> ThreeIndexField:
    """Christoffel symbols from first-kind symbols of g, one component at a time."""
    grid = g_lower.grid
    d = grid.dim
    gl = g_lower.values
    gu = np.linalg.inv(np.where(_bm(g_lower.mask, gl.ndim), gl, np.eye(d))) if g_upper is None else g_upper.values
    dg = [[[g.d1(gl[..., a, b], k, grid.spacing[k]) for k in range(d)] for b in range(d)] for a in range(d)]
    out = np.zeros(grid.shape + (d, d, d))
    for lam in range(d):
        for mu in range(d):
            for nu in range(mu, d):
                acc = np.zeros(grid.shape)
                for a in range(d):
                    kind1 = 0.5 * (dg[a][nu][mu] + dg[mu][a][nu] - dg[mu][nu][a])
                    acc = acc + gu[..., lam, a] * kind1
                out[..., lam, mu, nu] = acc
                out[..., lam, nu, mu] = acc
    return ThreeIndexField(grid, out, g.erode(g_lower.mask, 1))


@dataclass(frozen=True, eq=False)
class InverseStrain:
    E_upper: MatrixField  # g^{mn} - eta^{mn}
    first_order: MatrixField  # -eta^{mk} eta^{nl} E_kl
    residual: float  # sup of the exact quadratic relation
    first_order_error: float  # sup |E_upper - first_order|


def inverse_strain_pair(m: MetricStrainField) -> InverseStrain:
    """Exact and first-order contravariant strain.

    g g^-1 = I with g = eta + E and g^-1 = eta^-1 + E^up expands to
    eta E^up + E eta^-1 + E E^up = 0, evaluated here as the residual.
    """
    grid = m.grid
    eta = grid.eta
    eta_inv = np.linalg.inv(eta)
    mask = m.mask
    E = m.E_lower.values
    Eu = m.g_upper.values - eta_inv
    resid = eta @ Eu + E @ eta_inv + E @ Eu
    first = -(eta_inv @ E @ eta_inv)
    return InverseStrain(
        MatrixField(grid, Eu, mask, symmetry="symmetric"),
        MatrixField(grid, first, mask, symmetry="symmetric"),
        _sup(resid, mask),
        _sup(Eu - first, mask),
    )


@dataclass(frozen=True, eq=False)
class CurvatureStack:
    gamma: ThreeIndexField
    riemann: FourIndexField
    ricci: MatrixField
    scalar: ScalarField
    einstein: MatrixField
    g_lower: MatrixField
    g_upper: MatrixField
    first_bianchi: float  # sup of the cyclic sum, relative to sup |Riemann|
    pair_antisymmetry: float  # sup |R^r_{smn} + R^r_{snm}|
    einstein_asymmetry: float  # sup |G - G^T|


def curvature_stack(m: MetricStrainField, gamma: ThreeIndexField | None = None) -> CurvatureStack:
    grid = m.grid
    gam = connection_from_strain(m) if gamma is None else gamma
    G = gam.values
    dG = g.partials(grid, G)  # [..., r, a, b, k] = d_k Gamma^r_{ab}
    t1 = np.einsum("...rnsm->...rsmn", dG)  # d_m Gamma^r_{ns}
    quad = np.einsum("...rml,...lns->...rsmn", G, G)
    riem = t1 - np.swapaxes(t1, -1, -2) + quad - np.swapaxes(quad, -1, -2)
    mask = g.erode(gam.mask, 1)

    ric = np.einsum("...rsrn->...sn", riem)
    gu = m.g_upper.values
    gl = m.g_lower.values
    scal = np.einsum("...sn,...sn->...", gu, ric)
    ein = ric - 0.5 * scal[..., None, None] * gl

    cyc = riem + np.einsum("...rmns->...rsmn", riem) + np.einsum("...rnsm->...rsmn", riem)
    rs = _sup(riem, mask)
    bianchi = _sup(cyc, mask) / rs if rs > 0 else _sup(cyc, mask)
    return CurvatureStack(
        gam,
        FourIndexField(grid, riem, mask),
        MatrixField(grid, ric, mask),
        ScalarField(grid, scal, mask),
        MatrixField(grid, ein, mask),
        m.g_lower,
        m.g_upper,
        bianchi,
        _sup(riem + np.swapaxes(riem, -1, -2), mask),
        _sup(ein - np.swapaxes(ein, -1, -2), mask),
    )


def einstein_divergence(stack: CurvatureStack) -> CovectorField:
    """nabla_m G^m_n with the mixed tensor G^m_n = g^{ms} G_sn."""
    grid = stack.einstein.grid
    mixed = np.einsum("...ms,...sn->...mn", stack.g_upper.values, stack.einstein.values)
    G = stack.gamma.values
    dmixed = g.partials(grid, mixed)  # [..., m, n, k]
    div = np.einsum("...mnm->...n", dmixed)
    div = div + np.einsum("...mml,...ln->...n", G, mixed) - np.einsum("...lmn,...ml->...n", G, mixed)
    return CovectorField(grid, div, g.erode(stack.einstein.mask, 1))


@dataclass(frozen=True, eq=False)
class VierbeinField:
    h: MatrixField  # h[..., k, m] = h^k_m

    def __post_init__(self):
        vals = np.where(_bm(self.h.mask, self.h.values.ndim), self.h.values, np.eye(self.h.grid.dim))
        det = np.abs(np.linalg.det(vals))
        size = np.max(np.abs(vals), axis=(-2, -1)) ** self.h.grid.dim
        if np.any(self.h.mask & ~(det > SINGULAR_DET * size)):
            raise ConfigurationError("vierbein is not invertible at every valid point")


def vierbein_metric(v: VierbeinField) -> MatrixField:
    """g_mn = eta_kl h^k_m h^l_n."""
    grid = v.h.grid
    h = v.h.values
    gm = np.swapaxes(h, -1, -2) @ grid.eta @ h
    gm = 0.5 * (gm + np.swapaxes(gm, -1, -2))
    return MatrixField(grid, gm, v.h.mask, symmetry="symmetric")


def boost(rapidity: float, axis: int = 1, dim: int = 4) -> np.ndarray:
    L = np.eye(dim)
    ch, sh = np.cosh(rapidity), np.sinh(rapidity)
    L[0, 0] = L[axis, axis] = ch
    L[0, axis] = L[axis, 0] = sh
    return L
