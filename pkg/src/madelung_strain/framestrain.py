"""Frame strain of a conformal deformation and its teleparallelism connection.

A positive amplitude R deforms the natural coframe to theta^i = R dx^i and
the flat metric to g = rho * eta with rho = R^2.  Two sign conventions are
in play and both are pinned here:

* the strain one-form is ``omega = +d(ln R)`` (:func:`strain_one_form`);
* the connection that makes theta parallel, written in the natural frame,
  has coefficients ``omega^i_{jk} = CONNECTION_SIGN * d_k(ln R) delta^i_j``
  with ``CONNECTION_SIGN = -1``, so that
  ``d theta^i + omega^i_j theta^j = 0``.

Index layout for three-index arrays is ``[..., i, j, k]`` with ``k`` the
one-form (derivative) slot unless stated otherwise.  Identity checks compare
coordinate-basis components, where no factor 1/rho amplifies the O(h^2)
discretisation error near the amplitude floor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grid as g
from .errors import ConfigurationError, InternalConsistencyError
from .grid import CovectorField, Grid, MatrixField, ScalarField, ThreeIndexField
from .madelung import AMPLITUDE_FLOOR, FORM_AGREEMENT_C, amplitude_mask

CONNECTION_SIGN = -1
SINGULAR_DET = 1e-10
POLAR_TOL = 1e-12


def _ein(spec, *ops):
    return np.einsum(spec, *ops, optimize=True)


def _sandwich(X: np.ndarray, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """out[i, a, b] = X[i, j, k] A[j, a] B[k, b], batched with matmul."""
    At = np.swapaxes(A, -1, -2)[..., None, :, :]
    return At @ X @ B[..., None, :, :]


def _lead(M: np.ndarray, X: np.ndarray) -> np.ndarray:
    """out[i, ...] = M[i, c] X[c, ...] on the first of three trailing indices."""
    d = M.shape[-1]
    flat = X.reshape(X.shape[:-3] + (d, d * d))
    return (M @ flat).reshape(X.shape)


def _bm(mask, ndim):
    return mask.reshape(mask.shape + (1,) * (ndim - mask.ndim))


def _masked(values, mask):
    return np.where(_bm(mask, values.ndim), values, np.nan)


def relative_mismatch(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    """sup|a - b| / max(sup|a|, sup|b|) over ``mask``; 0 when both vanish."""
    if not mask.any():
        return 0.0
    diff = float(np.max(np.abs(a[mask] - b[mask])))
    scale = max(float(np.max(np.abs(a[mask]))), float(np.max(np.abs(b[mask]))))
    if scale == 0.0:
        return diff
    return diff / scale


def _assert_small(name: str, value: float, tol: float):
    if value > tol:
        raise InternalConsistencyError(name, value, tol)


@dataclass(frozen=True, eq=False)
class ConformalDeformation:
    """Dilatation of the natural coframe by a positive amplitude R."""

    R: ScalarField
    floor: float = AMPLITUDE_FLOOR

    def __post_init__(self):
        if np.any(self.R.values[self.R.mask] < 0):
            raise ConfigurationError("dilatation factor R must be non-negative")
        object.__setattr__(self, "R", self.R.restrict(amplitude_mask(self.R, self.floor)))

    @property
    def grid(self) -> Grid:
        return self.R.grid

    @property
    def mask(self) -> np.ndarray:
        return self.R.mask

    @property
    def rho(self) -> ScalarField:
        return ScalarField(self.grid, self.R.values**2, self.mask)

    @property
    def log_R(self) -> ScalarField:
        with np.errstate(divide="ignore", invalid="ignore"):
            return ScalarField(self.grid, np.log(self.R.values), self.mask)

    def metric(self) -> MatrixField:
        """Deformed metric g = rho * eta (eta = identity on Euclidean grids)."""
        vals = self.rho.values[..., None, None] * self.grid.eta
        return MatrixField(self.grid, vals, self.mask, symmetry="symmetric")

    def coframe(self) -> "FrameDeformation":
        vals = self.R.values[..., None, None] * np.eye(self.grid.dim)
        return FrameDeformation(MatrixField(self.grid, vals, self.mask))


@dataclass(frozen=True, eq=False)
class FrameDeformation:
    """Coframe theta^i = h^i_j dx^j.  Near-singular points are masked out.

    Singularity is judged scale-free, |det h| / max|h_ij|^d <= 1e-10, so an
    overall dilatation R * I is never flagged however small R gets.
    """

    h: MatrixField
    singular: np.ndarray | None = None

    def __post_init__(self):
        vals = np.where(_bm(self.h.mask, self.h.values.ndim), self.h.values, 0.0)
        det = np.abs(np.linalg.det(vals))
        size = np.max(np.abs(vals), axis=(-2, -1)) ** self.h.grid.dim
        with np.errstate(divide="ignore", invalid="ignore"):
            singular = self.h.mask & ~(det > SINGULAR_DET * size)
        object.__setattr__(self, "singular", singular)
        if singular.any():
            object.__setattr__(self, "h", self.h.restrict(~singular))

    @property
    def grid(self) -> Grid:
        return self.h.grid

    @property
    def mask(self) -> np.ndarray:
        return self.h.mask

    def inverse(self) -> MatrixField:
        vals = np.where(_bm(self.mask, self.h.values.ndim), self.h.values, np.eye(self.grid.dim))
        return MatrixField(self.grid, np.linalg.inv(vals), self.mask)


# --------------------------------------------------------------------------
# strain


def strain_one_form(c: ConformalDeformation) -> CovectorField:
    """omega = d(ln R)."""
    return g.gradient(c.log_R)


def strain_differential(c: ConformalDeformation) -> MatrixField:
    """Symmetric second differential of ln R (= half the Hessian of ln rho).

    The antisymmetric exterior derivative of omega is computed as well and
    must vanish to within 10 h^2 relative, since omega is exact.
    """
    hess = g.hessian(c.log_R)
    curl = g.exterior_derivative(strain_one_form(c))
    mask = hess.mask & curl.mask
    if mask.any():
        scale = max(float(np.max(np.abs(hess.values[mask]))), 1.0)
        _assert_small("closedness of the strain one-form",
                      float(np.max(np.abs(curl.values[mask]))) / scale, FORM_AGREEMENT_C * c.grid.h**2)
    return hess


def constitutive_stress(c: ConformalDeformation, hbar: float = 1.0, mass: float = 1.0) -> MatrixField:
    """sigma = (hbar^2 / 2m) rho * (second differential of ln R)."""
    hess = g.hessian(c.log_R)
    vals = (hbar**2 / (2 * mass)) * c.rho.values[..., None, None] * hess.values
    return MatrixField(c.grid, vals, hess.mask, symmetry="symmetric")


def constitutive_mismatch(a: MatrixField, b: MatrixField, c: ConformalDeformation,
                          hbar: float = 1.0, mass: float = 1.0) -> float:
    """Entrywise gap between two stress fields, relative to their size.

    When both stresses are at rounding level (ln R affine, say) a plain
    ratio compares noise with noise, so the gap is measured against the
    size of the terms entering the stencil, (hbar^2/2m) max(rho) max|ln R| / h^2.
    """
    mask = a.mask & b.mask
    if not mask.any():
        return 0.0
    diff = float(np.max(np.abs(a.values[mask] - b.values[mask])))
    size = max(float(np.max(np.abs(a.values[mask]))), float(np.max(np.abs(b.values[mask]))))
    sup = c.mask
    terms = (hbar**2 / (2 * mass)) * float(np.max(c.rho.values[sup])) \
        * max(float(np.max(np.abs(c.log_R.values[sup]))), 1.0) / min(c.grid.spacing) ** 2
    if size <= 1e3 * np.finfo(float).eps * terms:
        return diff / terms
    return diff / size


# --------------------------------------------------------------------------
# general frames


def frame_connection(fd: FrameDeformation) -> ThreeIndexField:
    """omega^i_{jk} = (d_k h^i_l) (h^-1)^l_j, the gl(d)-valued one-form dh h^-1."""
    dh = g.partials(fd.grid, fd.h.values)  # [..., i, l, k]
    hinv = fd.inverse().values
    vals = _ein("...ilk,...lj->...ijk", dh, hinv)
    return ThreeIndexField(fd.grid, vals, g.erode(fd.mask, 1))


def _polar_factors(h: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Scaled Newton iteration X <- (g X + X^-T / g)/2 for the orthogonal polar factor.

    The per-point Frobenius scaling g = sqrt(|X^-1| / |X|) removes the slow
    start when h is far from unit size (R * I with small R).
    """
    X = h.copy()
    iterations = 0
    for iterations in range(1, 101):
        Xinv_t = np.swapaxes(np.linalg.inv(X), -1, -2)
        gamma = np.sqrt(np.linalg.norm(Xinv_t, axis=(-2, -1)) / np.linalg.norm(X, axis=(-2, -1)))
        gamma = gamma[..., None, None]
        X_new = 0.5 * (gamma * X + Xinv_t / gamma)
        delta = float(np.max(np.abs(X_new - X))) if X.size else 0.0
        X = X_new
        if delta < POLAR_TOL:
            break
    E = np.swapaxes(X, -1, -2) @ h
    E = 0.5 * (E + np.swapaxes(E, -1, -2))
    return X, E, iterations


@dataclass(frozen=True, eq=False)
class PolarDecomposition:
    rotation: MatrixField
    strain: MatrixField  # symmetric positive-definite; [g] = strain^T strain
    omega: ThreeIndexField  # dh h^-1
    rotation_part: ThreeIndexField  # dQ Q^T, so(d)-valued
    strain_part: ThreeIndexField  # Q dE E^-1 Q^T
    iterations: int

    def metric(self) -> MatrixField:
        E = self.strain.values
        return MatrixField(self.strain.grid, np.swapaxes(E, -1, -2) @ E, self.strain.mask, symmetry="symmetric")


def polar_frame_decomposition(fd: FrameDeformation) -> PolarDecomposition:
    """Pointwise h = Q E with Q orthogonal and E = sqrt(h^T h).

    The frame connection dh h^-1 is split into the rotational term dQ Q^T
    and the strain term Q dE E^-1 Q^T; for h = R * I the rotational term is
    zero and the strain term is d(ln R) times the identity.
    """
    grid = fd.grid
    d = grid.dim
    mask = fd.mask
    h = np.where(_bm(mask, fd.h.values.ndim), fd.h.values, np.eye(d))
    Q, E, iterations = _polar_factors(h)

    orth = np.swapaxes(Q, -1, -2) @ Q - np.eye(d)
    if mask.any():
        _assert_small("polar rotation orthogonality", float(np.max(np.abs(orth[mask]))), 1e-10)
        eig = np.linalg.eigvalsh(E[mask])
        if np.min(eig) <= 0:
            raise InternalConsistencyError("polar strain positive-definiteness", float(-np.min(eig)), 0.0)

    rot = MatrixField(grid, Q, mask)
    strain = MatrixField(grid, E, mask, symmetry="symmetric")
    omega = frame_connection(fd)
    dQ = g.partials(grid, _masked(Q, mask))  # [..., i, l, k]
    dE = g.partials(grid, _masked(E, mask))
    Qt = np.swapaxes(Q, -1, -2)
    Einv = np.linalg.inv(E)
    rot_part = _ein("...ilk,...lj->...ijk", dQ, Qt)
    strain_part = _ein("...ia,...abk,...bc,...cj->...ijk", Q, dE, Einv, Qt)
    inner = g.erode(mask, 1)
    return PolarDecomposition(
        rot, strain, omega,
        ThreeIndexField(grid, rot_part, inner),
        ThreeIndexField(grid, strain_part, inner),
        iterations,
    )


# --------------------------------------------------------------------------
# teleparallelism connection


@dataclass(frozen=True, eq=False)
class TeleparallelConnection:
    """Connection making the deformed coframe parallel.

    ``omega_scalar`` is the strain one-form d(ln R); ``omega_coeffs`` holds
    the natural-frame coefficients ``CONNECTION_SIGN * omega_k delta^i_j``.
    ``parallelism_residual`` is (nabla theta)^i_{jk} = d_k h^i_j + h^i_l
    omega^l_{jk}, which vanishes up to O(h^2).
    """

    omega_scalar: CovectorField
    omega_coeffs: ThreeIndexField
    parallelism_residual: ThreeIndexField
    convention_sign: int = CONNECTION_SIGN

    def christoffel(self) -> np.ndarray:
        """Gamma^a_{kb} stored as [..., a, k, b] (derivative index in the middle)."""
        return -np.swapaxes(self.omega_coeffs.values, -1, -2)


def teleparallel_connection(c: ConformalDeformation) -> TeleparallelConnection:
    grid = c.grid
    d = grid.dim
    omega = strain_one_form(c)
    coeffs = CONNECTION_SIGN * np.eye(d)[:, :, None] * omega.values[..., None, None, :]
    coeffs = ThreeIndexField(grid, coeffs, omega.mask)

    h = c.coframe().h.values
    dh = g.partials(grid, h)  # [..., i, j, k] = d_k h^i_j
    resid = dh + _ein("...il,...ljk->...ijk", h, coeffs.values)
    mask = omega.mask
    return TeleparallelConnection(omega, coeffs, ThreeIndexField(grid, resid, mask))


def metric_compatibility_residual(c: ConformalDeformation, conn: TeleparallelConnection | None = None) -> ThreeIndexField:
    """nabla_k g_{ij} = d_k g_ij - Gamma^l_{ki} g_lj - Gamma^l_{kj} g_il for g = rho * eta."""
    conn = conn or teleparallel_connection(c)
    grid = c.grid
    gm = c.metric().values
    dg = g.partials(grid, gm)  # [..., i, j, k]
    gam = conn.christoffel()  # [..., l, k, i]
    t1 = _ein("...lki,...lj->...ijk", gam, gm)
    t2 = _ein("...lkj,...il->...ijk", gam, gm)
    mask = g.erode(c.mask, 1) & conn.omega_coeffs.mask
    return ThreeIndexField(grid, dg - t1 - t2, mask)


# --------------------------------------------------------------------------
# torsion and structure functions


def _to_frame(X: np.ndarray, hinv: np.ndarray) -> np.ndarray:
    return _sandwich(X, hinv, hinv)


def to_coordinate_basis(X: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Pull frame components X^i_{ab} back to dx-components X^i_{ab} h^a_j h^b_k."""
    return _sandwich(X, h, h)


def anholonomy(fd: FrameDeformation) -> ThreeIndexField:
    """Coordinate components of d^theta^i: d_j h^i_k - d_k h^i_j."""
    dh = g.partials(fd.grid, fd.h.values)  # [..., i, k, j] = d_j h^i_k
    vals = np.swapaxes(dh, -1, -2) - dh
    return ThreeIndexField(fd.grid, vals, g.erode(fd.mask, 1))


def structure_functions(fd: FrameDeformation) -> ThreeIndexField:
    """c^i_{ab} from the frame-vector brackets: [e_a, e_b] = c^i_{ab} e_i.

    With this definition d^theta^i = -(1/2) c^i_{ab} theta^a ^ theta^b.  The
    route differentiates the inverse frame and never touches a connection.
    """
    grid = fd.grid
    hinv = fd.inverse()
    e = hinv.values  # e[..., j, a] = component j of frame vector a
    de = g.partials(grid, e)  # [..., j, b, k] = d_k e^j_b
    term = _ein("...ka,...jbk->...jab", e, de)
    bracket = term - np.swapaxes(term, -1, -2)
    c = _lead(fd.h.values, bracket)
    return ThreeIndexField(grid, c, g.erode(fd.mask, 1))


@dataclass(frozen=True, eq=False)
class Torsion:
    """Torsion of the teleparallel connection in the deformed frame.

    ``torsion`` comes from the anholonomy of theta, ``torsion_from_connection``
    from the antisymmetrised connection, ``structure`` from frame brackets.
    The identities are torsion = torsion_from_connection = -structure.
    """

    torsion: ThreeIndexField
    torsion_from_connection: ThreeIndexField
    structure: ThreeIndexField
    coframe: FrameDeformation
    mismatches: dict
    tolerance: float

    def coordinate(self, name: str) -> ThreeIndexField:
        f = getattr(self, name)
        vals = to_coordinate_basis(f.values, self.coframe.h.values)
        return ThreeIndexField(f.grid, vals, f.mask)


def torsion_and_structure(c: ConformalDeformation, check: bool = True) -> Torsion:
    grid = c.grid
    fd = c.coframe()
    hinv = fd.inverse().values
    h = fd.h.values

    route_a = _to_frame(anholonomy(fd).values, hinv)

    conn = teleparallel_connection(c)
    gam = conn.christoffel()  # Gamma^a_{jk}
    T = gam - np.swapaxes(gam, -1, -2)
    route_b = _sandwich(_lead(h, T), hinv, hinv)

    struct = structure_functions(fd).values
    mask = g.erode(c.mask, 1) & conn.omega_coeffs.mask

    coords = {name: to_coordinate_basis(v, h) for name, v in
              (("a", route_a), ("b", route_b), ("c", -struct))}
    tol = FORM_AGREEMENT_C * grid.h**2
    mismatches = {
        "anholonomy-connection": relative_mismatch(coords["a"], coords["b"], mask),
        "anholonomy-structure": relative_mismatch(coords["a"], coords["c"], mask),
        "connection-structure": relative_mismatch(coords["b"], coords["c"], mask),
    }
    if check:
        for name, value in mismatches.items():
            _assert_small(f"torsion identity {name}", value, tol)
    return Torsion(
        ThreeIndexField(grid, route_a, mask),
        ThreeIndexField(grid, route_b, mask),
        ThreeIndexField(grid, struct, mask),
        fd,
        mismatches,
        tol,
    )


def curvature_residual(c: ConformalDeformation) -> MatrixField:
    """Omega = d^omega + omega ^ omega for omega = -(1/R) dR.

    The wedge term vanishes identically for a connection proportional to
    the identity, leaving the exterior derivative.  The one-form is
    discretised as dR / R rather than d(ln R): central differences commute,
    so the latter would make the residual vanish by construction.
    """
    dr = g.gradient(c.R)
    with np.errstate(divide="ignore", invalid="ignore"):
        omega = CONNECTION_SIGN * dr.values / c.R.values[..., None]
    return g.exterior_derivative(CovectorField(c.grid, omega, dr.mask))


# --------------------------------------------------------------------------
# compatibility checks


@dataclass(frozen=True, eq=False)
class CompatibilityReport:
    parallel_covector: MatrixField  # nabla_k alpha_i for alpha = a_i theta^i
    deformed_frame_connection: ThreeIndexField  # connection re-expressed in theta
    volume: CovectorField  # nabla_k of rho^{d/2}
    metric: ThreeIndexField  # nabla_k g_ij
    coefficients: tuple[float, ...]
    relative: dict  # sup|A + B| / max(sup|A|, sup|B|) per check
    convention_sign: int = CONNECTION_SIGN

    def residuals(self) -> dict[str, dict[str, float]]:
        out = {}
        for name in ("parallel_covector", "deformed_frame_connection", "volume", "metric"):
            out[name] = dict(g.norms(getattr(self, name)), relative=self.relative[name])
        return out


def compatibility_terms(c: ConformalDeformation, a=None) -> dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """The two sides of every compatibility residual.

    Returns name -> (derivative term, connection term, mask); the residual
    is their sum.  ``coframe`` is the parallelism of theta itself.
    """
    grid = c.grid
    d = grid.dim
    a = np.ones(d) if a is None else np.asarray(a, dtype=float)
    if a.shape != (d,):
        raise ConfigurationError(f"expected {d} frame coefficients, got {a.shape}")
    conn = teleparallel_connection(c)
    gam = conn.christoffel()  # [..., l, k, i]
    inner = g.erode(c.mask, 1) & conn.omega_coeffs.mask
    out = {}

    alpha = c.R.values[..., None] * a
    out["parallel_covector"] = (g.partials(grid, alpha), -_ein("...lki,...l->...ik", gam, alpha), inner)

    fd = c.coframe()
    h, hinv = fd.h.values, fd.inverse().values
    out["deformed_frame_connection"] = (
        _ein("...iak,...aj->...ijk", g.partials(grid, h), hinv),
        _ein("...ia,...abk,...bj->...ijk", h, conn.omega_coeffs.values, hinv),
        inner,
    )

    vol = c.rho.values ** (d / 2.0)
    out["volume"] = (g.partials(grid, vol), -_ein("...lkl->...k", gam) * vol[..., None], inner)

    gm = c.metric().values
    out["metric"] = (
        g.partials(grid, gm),
        -_ein("...lki,...lj->...ijk", gam, gm) - _ein("...lkj,...il->...ijk", gam, gm),
        inner,
    )

    out["coframe"] = (g.partials(grid, h), _ein("...il,...ljk->...ijk", h, conn.omega_coeffs.values), inner)
    return out


def compatibility_suite(c: ConformalDeformation, a=None) -> CompatibilityReport:
    """Parallel transport checks for the teleparallel connection.

    * a covector with constant frame components a_i (coordinate components
      R a_i) has vanishing covariant derivative;
    * the connection transformed into the deformed frame,
      h omega h^-1 + dh h^-1, vanishes;
    * the volume density rho^{d/2} is parallel;
    * the deformed metric is parallel.
    """
    terms = compatibility_terms(c, a)
    grid = c.grid
    d = grid.dim
    a = np.ones(d) if a is None else np.asarray(a, dtype=float)

    def total(name):
        x, y, mask = terms[name]
        return x + y, mask

    par, m = total("parallel_covector")
    conn, _ = total("deformed_frame_connection")
    vol, _ = total("volume")
    met, _ = total("metric")
    return CompatibilityReport(
        MatrixField(grid, par, m),
        ThreeIndexField(grid, conn, m),
        CovectorField(grid, vol, m),
        ThreeIndexField(grid, met, m),
        tuple(float(x) for x in a),
        {k: relative_residual(v) for k, v in terms.items() if k != "coframe"},
    )


def relative_residual(terms: tuple[np.ndarray, np.ndarray, np.ndarray]) -> float:
    """sup|A + B| / max(sup|A|, sup|B|) for a residual written as A + B."""
    a, b, mask = terms
    return relative_mismatch(a, -b, mask)
