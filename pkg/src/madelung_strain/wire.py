"""Adapted frames along wires, their rotation rates and linear couple-stress laws.

Frames are stored as ``(n, 3, 3)`` arrays whose rows are e1, e2, e3.  Rates
are read off the frame derivative as

    kappa = -<e1', e2>,   lam = +<e1', e3>,   tau = -<e3', e2>,

so the matrix W_ij = <e_i', e_j> that drives e_i' = W_ij e_j is

    [[0, -kappa, lam], [kappa, 0, tau], [-lam, -tau, 0]].

For a Frenet frame this gives kappa = -(Frenet curvature), lam = 0 and
tau = +(Frenet torsion).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from . import grid as g
from .errors import AlignmentError, ConfigurationError, DimensionError, FrameDegeneracyError, SamplingError
from .grid import ScalarField

MIN_SPLINE_SAMPLES = 4
MIN_FRENET_SAMPLES = 7
DEGENERATE_BEND = 1e-8
ORTHONORMAL_TOL = 1e-10
GAUSS_ORDER = 8


@dataclass(frozen=True, eq=False)
class SampledCurve:
    points: np.ndarray  # (n, 3)
    s: np.ndarray | None = None  # strictly increasing parameter; defaults to the index

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise SamplingError(f"curve points must have shape (n, 3), got {pts.shape}")
        n = len(pts)
        if n < MIN_SPLINE_SAMPLES:
            raise SamplingError(f"a curve needs at least {MIN_SPLINE_SAMPLES} samples, got {n}")
        if not np.all(np.isfinite(pts)):
            raise SamplingError("curve points must be finite")
        s = np.arange(n, dtype=float) if self.s is None else np.array(self.s, dtype=float)
        if s.shape != (n,):
            raise SamplingError(f"parameter has shape {s.shape}, expected ({n},)")
        if np.any(np.diff(s) <= 0):
            raise SamplingError("curve parameter must be strictly increasing")
        steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(steps == 0):
            k = int(np.argmax(steps == 0))
            raise SamplingError(f"consecutive samples {k} and {k + 1} coincide")
        pts.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "s", s)

    def __len__(self):
        return len(self.points)

    @property
    def chord_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))

    @property
    def length(self) -> float:
        """Parameter span; equals the arc length after :func:`arclength_resample`."""
        return float(self.s[-1] - self.s[0])

    def uniform_step(self, rtol: float = 1e-9) -> float:
        ds = np.diff(self.s)
        if np.max(np.abs(ds - ds[0])) > rtol * abs(ds[0]):
            raise SamplingError("curve parameter is not uniformly spaced; resample first")
        return float(ds[0])

    def spacing_deviation(self) -> float:
        """max | |x_{n+1} - x_n| / ds - 1 |, the chord-versus-arc gap."""
        steps = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return float(np.max(np.abs(steps / np.diff(self.s) - 1.0)))

    def rotated(self, Q: np.ndarray, shift=(0.0, 0.0, 0.0)) -> "SampledCurve":
        return SampledCurve(self.points @ np.asarray(Q).T + np.asarray(shift), self.s)


def _arc_lengths(spline: CubicSpline, knots: np.ndarray) -> np.ndarray:
    """Arc length of each knot interval by Gauss-Legendre quadrature of |x'(u)|."""
    xg, wg = np.polynomial.legendre.leggauss(GAUSS_ORDER)
    a, b = knots[:-1, None], knots[1:, None]
    u = 0.5 * (b - a) * xg + 0.5 * (b + a)
    speed = np.linalg.norm(spline(u, 1), axis=-1)
    return 0.5 * (b - a)[:, 0] * (speed @ wg)


def arclength_resample(c: SampledCurve, n_out: int) -> SampledCurve:
    """Resample to ``n_out`` points equally spaced in arc length.

    The input is interpolated by a cubic spline in cumulative chord length;
    arc length along the spline is integrated per interval and inverted by
    safeguarded Newton steps.
    """
    if n_out < 2:
        raise SamplingError("n_out must be at least 2")
    steps = np.linalg.norm(np.diff(c.points, axis=0), axis=1)
    u = np.concatenate([[0.0], np.cumsum(steps)])
    spline = CubicSpline(u, c.points, axis=0)
    seg = _arc_lengths(spline, u)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    targets = np.linspace(0.0, total, n_out)

    idx = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, len(seg) - 1)
    lo, hi = u[idx], u[idx + 1]
    frac = np.where(seg[idx] > 0, (targets - cum[idx]) / seg[idx], 0.0)
    x = lo + frac * (hi - lo)
    xg, wg = np.polynomial.legendre.leggauss(GAUSS_ORDER)
    for _ in range(50):
        # arc length from lo to x, by quadrature
        nodes = 0.5 * (x - lo)[:, None] * xg + 0.5 * (x + lo)[:, None]
        part = 0.5 * (x - lo) * (np.linalg.norm(spline(nodes, 1), axis=-1) @ wg)
        err = cum[idx] + part - targets
        speed = np.linalg.norm(spline(x, 1), axis=-1)
        x_new = np.clip(x - err / speed, lo, hi)
        done = np.max(np.abs(x_new - x)) < 1e-14 * max(total, 1.0)
        x = x_new
        if done:
            break
    x[0], x[-1] = u[0], u[-1]
    return SampledCurve(spline(x), targets)


@dataclass(frozen=True, eq=False)
class AdaptedFrame:
    frames: np.ndarray  # (n, 3, 3), rows e1, e2, e3
    s: np.ndarray
    flag: str = "supplied"  # "frenet" | "supplied"

    def __post_init__(self):
        F = np.array(self.frames, dtype=float)
        s = np.array(self.s, dtype=float)
        if F.ndim != 3 or F.shape[1:] != (3, 3):
            raise SamplingError(f"frames must have shape (n, 3, 3), got {F.shape}")
        if s.shape != (len(F),):
            raise AlignmentError(f"{len(F)} frames but {s.shape} parameter values")
        if self.flag not in ("frenet", "supplied"):
            raise ConfigurationError(f"unknown frame flag {self.flag!r}")
        dev = orthonormality_defect(F)
        if dev > ORTHONORMAL_TOL:
            raise ConfigurationError(f"frames are not orthonormal: max |F F^T - I| = {dev:.3e}")
        F.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "frames", F)
        object.__setattr__(self, "s", s)

    def __len__(self):
        return len(self.frames)

    @property
    def e1(self):
        return self.frames[:, 0]

    @property
    def e2(self):
        return self.frames[:, 1]

    @property
    def e3(self):
        return self.frames[:, 2]


def orthonormality_defect(F: np.ndarray) -> float:
    return float(np.max(np.abs(F @ np.swapaxes(F, -1, -2) - np.eye(3)))) if len(F) else 0.0


def _runs(flags: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive [start, stop] index ranges where ``flags`` is true."""
    out = []
    k = 0
    n = len(flags)
    while k < n:
        if flags[k]:
            j = k
            while j + 1 < n and flags[j + 1]:
                j += 1
            out.append((k, j))
            k = j + 1
        else:
            k += 1
    return out


def frenet_frame(c: SampledCurve) -> AdaptedFrame:
    """Tangent, principal normal and binormal from central differences.

    The curve should be arc-length parameterised with uniform spacing.  Like
    every stencil here the end samples get no frame: the result covers
    samples 1 .. n-2.
    """
    if len(c) < MIN_FRENET_SAMPLES:
        raise SamplingError(f"Frenet frames need at least {MIN_FRENET_SAMPLES} samples, got {len(c)}")
    ds = c.uniform_step()
    x = c.points
    d1 = (x[2:] - x[:-2]) / (2.0 * ds)
    d2 = (x[2:] - 2.0 * x[1:-1] + x[:-2]) / ds**2
    e1 = d1 / np.linalg.norm(d1, axis=1)[:, None]
    normal = d2 - np.sum(d2 * e1, axis=1)[:, None] * e1
    bend = np.linalg.norm(normal, axis=1)
    flat = bend < DEGENERATE_BEND
    if flat.any():
        runs = [(a + 1, b + 1) for a, b in _runs(flat)]
        start, stop = runs[0]
        desc = ", ".join(f"{a}..{b}" for a, b in runs[:5])
        raise FrameDegeneracyError(
            f"second derivative vanishes on samples {desc}; the principal normal is undefined "
            "there, supply frames instead",
            start,
            stop,
        )
    e2 = normal / bend[:, None]
    e3 = np.cross(e1, e2)
    F = np.stack([e1, e2, e3], axis=1)
    # one polar clean-up step keeps rounding below the orthonormality bound
    u, _, vt = np.linalg.svd(F)
    return AdaptedFrame(u @ vt, c.s[1:-1], "frenet")


@dataclass(frozen=True, eq=False)
class StrainRates:
    kappa: np.ndarray
    lam: np.ndarray
    tau: np.ndarray
    s: np.ndarray
    rate_asymmetry: float = 0.0  # max |W + W^T| of the measured rate matrix
    diagonal_defect: float = 0.0  # max |<e_i', e_i>|

    def __post_init__(self):
        arrays = [np.array(a, dtype=float) for a in (self.kappa, self.lam, self.tau, self.s)]
        n = len(arrays[3])
        if any(a.shape != (n,) for a in arrays):
            raise AlignmentError("kappa, lam, tau and s must have one value per sample")
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ConfigurationError("strain rates must be finite")
        for name, a in zip(("kappa", "lam", "tau", "s"), arrays):
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    def __len__(self):
        return len(self.s)

    def vector(self) -> np.ndarray:
        """(n, 3) rows (kappa, lam, tau)."""
        return np.stack([self.kappa, self.lam, self.tau], axis=1)

    def bending(self) -> np.ndarray:
        """Total curvature sqrt(kappa^2 + lam^2)."""
        return np.hypot(self.kappa, self.lam)

    def rate_matrix(self) -> np.ndarray:
        """W with e_i' = W_ij e_j, shape (n, 3, 3); antisymmetric by construction."""
        W = np.zeros((len(self), 3, 3))
        W[:, 0, 1], W[:, 1, 0] = -self.kappa, self.kappa
        W[:, 0, 2], W[:, 2, 0] = self.lam, -self.lam
        W[:, 1, 2], W[:, 2, 1] = self.tau, -self.tau
        return W

    def omega_matrix(self) -> np.ndarray:
        """Alternative layout [[0, -lam, kappa], [lam, 0, -tau], [-kappa, tau, 0]].

        Relative to :meth:`rate_matrix`, kappa and lam trade places and tau flips sign.
        """
        W = np.zeros((len(self), 3, 3))
        W[:, 0, 1], W[:, 1, 0] = -self.lam, self.lam
        W[:, 0, 2], W[:, 2, 0] = self.kappa, -self.kappa
        W[:, 1, 2], W[:, 2, 1] = -self.tau, self.tau
        return W

    @classmethod
    def constant(cls, s, kappa=0.0, lam=0.0, tau=0.0) -> "StrainRates":
        s = np.asarray(s, dtype=float)
        one = np.ones_like(s)
        return cls(kappa * one, lam * one, tau * one, s)


def strain_rates(f: AdaptedFrame, ds: float | None = None) -> StrainRates:
    """Rates from central differences of the frame rows; both end samples are dropped."""
    if len(f) < 3:
        raise SamplingError("need at least three frames for a central difference")
    if ds is None:
        steps = np.diff(f.s)
        ds = float(steps[0])
        if np.max(np.abs(steps - ds)) > 1e-9 * abs(ds):
            raise SamplingError("frames are not uniformly spaced in s")
    F = f.frames
    dF = (F[2:] - F[:-2]) / (2.0 * ds)
    Fm = F[1:-1]
    W = dF @ np.swapaxes(Fm, -1, -2)  # W[n, i, j] = <e_i', e_j>
    kappa = -W[:, 0, 1]
    lam = W[:, 0, 2]
    tau = -W[:, 2, 1]
    asym = float(np.max(np.abs(W + np.swapaxes(W, -1, -2)))) if len(W) else 0.0
    diag = float(np.max(np.abs(np.diagonal(W, axis1=1, axis2=2)))) if len(W) else 0.0
    return StrainRates(kappa, lam, tau, f.s[1:-1], asym, diag)


def reconstruct_frames(rates: StrainRates, initial: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Integrate e_i' = W_ij e_j with classical RK4 from ``initial`` at rates.s[0].

    Each step spans two samples and uses the middle sample for the half-step
    rate, so only measured rates are needed.  Returns (s, frames) at the
    even-offset samples.
    """
    W = rates.rate_matrix()
    s = rates.s
    F = np.array(initial, dtype=float)
    out_s = [s[0]]
    out_F = [F.copy()]
    for k in range(0, len(s) - 2, 2):
        hstep = s[k + 2] - s[k]
        k1 = W[k] @ F
        k2 = W[k + 1] @ (F + 0.5 * hstep * k1)
        k3 = W[k + 1] @ (F + 0.5 * hstep * k2)
        k4 = W[k + 2] @ (F + hstep * k3)
        F = F + hstep / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out_s.append(s[k + 2])
        out_F.append(F.copy())
    return np.array(out_s), np.array(out_F)


@dataclass(frozen=True)
class StiffnessMatrix:
    A: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.shape != (3, 3):
            raise ConfigurationError(f"stiffness must be 3x3, got {A.shape}")
        scale = max(float(np.max(np.abs(A))), 1.0)
        if np.max(np.abs(A - A.T)) > 1e-12 * scale:
            raise ConfigurationError("stiffness matrix must be symmetric")
        if np.min(np.linalg.eigvalsh(A)) < -1e-12 * scale:
            raise ConfigurationError("stiffness matrix must be positive semi-definite")
        A.flags.writeable = False
        object.__setattr__(self, "A", A)


@dataclass(frozen=True, eq=False)
class CoupleStress:
    values: np.ndarray  # (n, 3) rows (K, L, T)
    s: np.ndarray


def wire_couple_stress(sr: StrainRates, A: StiffnessMatrix | np.ndarray) -> CoupleStress:
    """M_i = A_ij (kappa, lam, tau)^j per sample."""
    if not isinstance(A, StiffnessMatrix):
        A = StiffnessMatrix(A)
    return CoupleStress(sr.vector() @ A.A.T, sr.s)


def virtual_work(M: CoupleStress, delta: StrainRates, atol: float = 1e-12) -> float:
    """Trapezoid-rule integral of sum_i M_i * delta_i over s."""
    if len(M.s) != len(delta.s) or not np.allclose(M.s, delta.s, rtol=0.0, atol=atol):
        raise AlignmentError("couple stress and strain variation are sampled at different s")
    integrand = np.sum(M.values * delta.vector(), axis=1)
    return float(np.trapezoid(integrand, delta.s))


@dataclass(frozen=True)
class PlateCoefficients:
    A: float = 0.0
    B: float = 0.0
    C: float = 0.0
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0


@dataclass(frozen=True, eq=False)
class PlateCouples:
    K: ScalarField
    Lam: ScalarField
    Pi: ScalarField


def plate_couple_stress(z: ScalarField, coeffs: PlateCoefficients | dict) -> PlateCouples:
    """Bending and twisting couples of a plate from the Hessian of its deflection z.

    K = A z_xx + c z_yy + b z_xy, Lam = c z_xx + B z_yy + a z_xy and
    2 Pi = b z_xx + a z_yy + C z_xy; Pi is returned already halved.
    """
    if z.grid.dim != 2:
        raise DimensionError(f"plate deflection must live on a 2-D grid, got {z.grid.dim}-D")
    k = coeffs if isinstance(coeffs, PlateCoefficients) else PlateCoefficients(**coeffs)
    H = g.hessian(z)
    zxx, zyy, zxy = H.values[..., 0, 0], H.values[..., 1, 1], H.values[..., 0, 1]
    grid, mask = z.grid, H.mask
    K = k.A * zxx + k.c * zyy + k.b * zxy
    L = k.c * zxx + k.B * zyy + k.a * zxy
    P = 0.5 * (k.b * zxx + k.a * zyy + k.C * zxy)
    return PlateCouples(ScalarField(grid, K, mask), ScalarField(grid, L, mask), ScalarField(grid, P, mask))


# --------------------------------------------------------------------------
# CSV input


def _read_rows(path) -> tuple[list[str] | None, np.ndarray]:
    with open(Path(path), newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(x.strip() for x in r)]
    if not rows:
        raise SamplingError(f"{path}: no rows")
    header = None
    try:
        [float(x) for x in rows[0]]
    except ValueError:
        header, rows = [x.strip() for x in rows[0]], rows[1:]
    try:
        data = np.array([[float(x) for x in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise SamplingError(f"{path}: {exc}") from None
    return header, data


def load_curve_csv(path) -> SampledCurve:
    """Rows ``s,x,y,z`` or ``x,y,z`` (index parameter)."""
    _, data = _read_rows(path)
    if data.ndim != 2 or data.shape[1] not in (3, 4):
        raise SamplingError(f"{path}: expected 3 or 4 columns, got {data.shape}")
    if data.shape[1] == 4:
        return SampledCurve(data[:, 1:], data[:, 0])
    return SampledCurve(data)


def load_frames_csv(path, s) -> AdaptedFrame:
    """Rows of nine entries e1x,e1y,e1z,e2x,...,e3z."""
    _, data = _read_rows(path)
    if data.ndim != 2 or data.shape[1] != 9:
        raise SamplingError(f"{path}: expected 9 columns per frame, got {data.shape}")
    return AdaptedFrame(data.reshape(-1, 3, 3), s, "supplied")


def helix(r: float, pitch: float, n: int, turns: float = 1.0, pad: int = 0) -> SampledCurve:
    """Unit-speed helix (r cos(s/c), r sin(s/c), pitch s/c), c = sqrt(r^2 + pitch^2).

    ``pad`` extra samples are added beyond each end at the same spacing.
    """
    c = float(np.hypot(r, pitch))
    length = 2 * np.pi * c * turns
    ds = length / (n - 1)
    s = ds * np.arange(-pad, n + pad)
    pts = np.stack([r * np.cos(s / c), r * np.sin(s / c), pitch * s / c], axis=1)
    return SampledCurve(pts, s)


def helix_frenet(r: float, pitch: float, s: np.ndarray) -> np.ndarray:
    """Closed-form Frenet frames of :func:`helix`."""
    c = float(np.hypot(r, pitch))
    t = np.asarray(s) / c
    e1 = np.stack([-r * np.sin(t), r * np.cos(t), pitch * np.ones_like(t)], axis=1) / c
    e2 = np.stack([-np.cos(t), -np.sin(t), np.zeros_like(t)], axis=1)
    e3 = np.stack([pitch * np.sin(t), -pitch * np.cos(t), r * np.ones_like(t)], axis=1) / c
    return np.stack([e1, e2, e3], axis=1)
