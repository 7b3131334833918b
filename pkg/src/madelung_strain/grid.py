"""Uniform grids, point-indexed tensor fields and second-order stencils.

Every field carries a boolean validity mask.  Values outside the mask are
stored as NaN, so any stencil that silently reads an invalid point poisons
its output instead of producing a plausible number.  Stencil operators
never use one-sided differences: they erode the mask instead.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, ClassVar, Sequence

import numpy as np
from scipy import ndimage

from .errors import GridError, StencilDomainError

MIN_POINTS = 5
SYMMETRY_RTOL = 1e-12

TIME = "time"
SPACE = "space"


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular lattice.

    ``signature`` holds the diagonal of the flat metric per axis.  A
    Lorentzian grid uses ``x0 = c t`` on axis 0, so ``c`` never enters a
    stencil.
    """

    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...] | None = None
    signature: tuple[int, ...] | None = None
    axis_roles: tuple[str, ...] | None = None

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        dim = len(shape)
        if dim not in (1, 2, 3, 4):
            raise GridError("dim", f"grid dimension must be 1..4, got {dim}")
        spacing = _per_axis(self.spacing, dim, "spacing", float)
        origin = _per_axis(self.origin if self.origin is not None else 0.0, dim, "origin", float)
        signature = _per_axis(self.signature if self.signature is not None else 1, dim, "signature", int)
        if self.axis_roles is None:
            lorentz = any(s < 0 for s in signature)
            roles = ((TIME,) + (SPACE,) * (dim - 1)) if lorentz else (SPACE,) * dim
        else:
            roles = tuple(str(r) for r in self.axis_roles)
        if len(roles) != dim:
            raise GridError("axis_roles", f"expected {dim} axis roles, got {len(roles)}")

        for k, n in enumerate(shape):
            if n < MIN_POINTS:
                raise GridError(
                    "shape>=5",
                    f"axis {k} has {n} points; every axis needs at least {MIN_POINTS} "
                    "(second-order stencils plus an interior margin)",
                )
        for k, h in enumerate(spacing):
            if not (h > 0 and math.isfinite(h)):
                raise GridError("spacing>0", f"axis {k} spacing must be positive, got {h}")
        if any(s not in (1, -1) for s in signature):
            raise GridError("signature", f"signature entries must be +1 or -1, got {signature}")
        if any(r not in (TIME, SPACE) for r in roles):
            raise GridError("axis_roles", f"axis roles must be 'time' or 'space', got {roles}")
        if roles.count(TIME) > 1:
            raise GridError("time-axes<=1", "at most one time axis is allowed")
        if any(s < 0 for s in signature):
            if roles[0] != TIME or signature[0] != 1 or any(s != -1 for s in signature[1:]):
                raise GridError(
                    "lorentzian-layout",
                    "a Lorentzian grid needs signature (+,-,...,-) with the time axis at position 0",
                )

        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "signature", signature)
        object.__setattr__(self, "axis_roles", roles)

    @classmethod
    def euclidean(cls, shape, spacing, origin=None, time_axis: bool = False) -> "Grid":
        dim = len(shape)
        roles = (TIME,) + (SPACE,) * (dim - 1) if time_axis else None
        return cls(tuple(shape), _per_axis(spacing, dim, "spacing", float), origin, None, roles)

    @classmethod
    def lorentzian(cls, shape, spacing, origin=None) -> "Grid":
        dim = len(shape)
        sig = (1,) + (-1,) * (dim - 1)
        return cls(tuple(shape), _per_axis(spacing, dim, "spacing", float), origin, sig)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def is_lorentzian(self) -> bool:
        return any(s < 0 for s in self.signature)

    @property
    def time_axis(self) -> int | None:
        return self.axis_roles.index(TIME) if TIME in self.axis_roles else None

    @property
    def spatial_axes(self) -> tuple[int, ...]:
        return tuple(k for k, r in enumerate(self.axis_roles) if r == SPACE)

    @property
    def h(self) -> float:
        """Largest step; the scale used by O(h^2) tolerances."""
        return max(self.spacing)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def eta(self) -> np.ndarray:
        return np.diag(np.asarray(self.signature, dtype=float))

    def contraction_weights(self) -> np.ndarray:
        """Per-axis weights for traces and divergences.

        Lorentzian: the signature over every axis.  Euclidean: 1 on spatial
        axes and 0 on a time axis, so only spatial derivatives are summed.
        """
        if self.is_lorentzian:
            return np.asarray(self.signature, dtype=float)
        return np.array([1.0 if r == SPACE else 0.0 for r in self.axis_roles])

    def coords(self) -> list[np.ndarray]:
        return [o + h * np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.shape)]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.coords(), indexing="ij")

    def refined(self) -> "Grid":
        """Same extent, half the spacing; coarse points sit at even indices."""
        return Grid(
            tuple(2 * n - 1 for n in self.shape),
            tuple(h / 2 for h in self.spacing),
            self.origin,
            self.signature,
            self.axis_roles,
        )

    def coarsened(self) -> "Grid":
        """Double the spacing, keeping the origin; ``coarsened().refined()`` nests."""
        return Grid(
            tuple((n + 1) // 2 for n in self.shape),
            tuple(2 * h for h in self.spacing),
            self.origin,
            self.signature,
            self.axis_roles,
        )

    def full_mask(self) -> np.ndarray:
        return np.ones(self.shape, dtype=bool)

    def describe(self) -> dict:
        return {
            "dim": self.dim,
            "shape": list(self.shape),
            "spacing": list(self.spacing),
            "origin": list(self.origin),
            "signature": list(self.signature),
            "axis_roles": list(self.axis_roles),
        }


def _per_axis(value, dim, name, kind):
    if np.isscalar(value):
        return (kind(value),) * dim
    value = tuple(kind(v) for v in value)
    if len(value) != dim:
        raise GridError(name, f"expected {dim} {name} entries, got {len(value)}")
    return value


# --------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class Field:
    """Values of rank ``rank`` at every grid point plus a validity mask."""

    grid: Grid
    values: np.ndarray
    mask: np.ndarray | None = None

    rank: ClassVar[int] = 0

    def __post_init__(self):
        grid = self.grid
        values = np.array(self.values, dtype=float)
        expected = grid.shape + (grid.dim,) * self.rank
        if values.shape != expected:
            raise ValueError(f"{type(self).__name__} values have shape {values.shape}, expected {expected}")
        mask = grid.full_mask() if self.mask is None else np.array(self.mask, dtype=bool)
        if mask.shape != grid.shape:
            raise ValueError(f"mask shape {mask.shape} does not match grid shape {grid.shape}")
        values[~mask] = np.nan
        if not np.all(np.isfinite(values[mask])):
            raise ValueError(f"{type(self).__name__} has non-finite values on its valid mask")
        values.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def n_valid(self) -> int:
        return int(self.mask.sum())

    def components(self) -> np.ndarray:
        """Valid values as an (n_valid, n_components) array, row-major order."""
        return self.values[self.mask].reshape(self.n_valid, -1)

    def restrict(self, mask: np.ndarray):
        """Copy of this field with its mask intersected with ``mask``."""
        return self.replace(mask=self.mask & mask)

    def replace(self, values=None, mask=None):
        kwargs = {k: getattr(self, k) for k in self._extra_fields()}
        return type(self)(
            self.grid,
            self.values if values is None else values,
            self.mask if mask is None else mask,
            **kwargs,
        )

    def _extra_fields(self) -> tuple[str, ...]:
        return ()


class ScalarField(Field):
    rank = 0


class CovectorField(Field):
    rank = 1


@dataclass(frozen=True, eq=False)
class MatrixField(Field):
    symmetry: str = "none"

    rank: ClassVar[int] = 2

    def __post_init__(self):
        super().__post_init__()
        if self.symmetry not in ("none", "symmetric", "antisymmetric"):
            raise ValueError(f"unknown symmetry flag {self.symmetry!r}")
        if self.symmetry != "none" and self.n_valid:
            v = self.values[self.mask]
            vt = np.swapaxes(v, -1, -2)
            other = vt if self.symmetry == "symmetric" else -vt
            scale = np.max(np.abs(v))
            if np.max(np.abs(v - other)) > SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
                raise ValueError(f"MatrixField declared {self.symmetry} but is not")

    def _extra_fields(self):
        return ("symmetry",)


class ThreeIndexField(Field):
    rank = 3


class FourIndexField(Field):
    rank = 4


_BY_RANK = {0: ScalarField, 1: CovectorField, 2: MatrixField, 3: ThreeIndexField, 4: FourIndexField}


def field_of_rank(grid: Grid, values, mask, **kwargs) -> Field:
    rank = np.ndim(values) - grid.dim
    return _BY_RANK[rank](grid, values, mask, **kwargs)


# --------------------------------------------------------------------------
# masks and raw stencils


def erode(mask: np.ndarray, layers: int = 1) -> np.ndarray:
    """Remove ``layers`` layers of points (box neighbourhood) from ``mask``."""
    if layers <= 0:
        return mask.copy()
    structure = np.ones((3,) * mask.ndim, dtype=bool)
    return ndimage.binary_erosion(mask, structure=structure, iterations=layers, border_value=0)


def _check_domain(grid: Grid, mask: np.ndarray, layers: int, what: str) -> np.ndarray:
    if any(n < 2 * layers + 1 for n in grid.shape):
        raise StencilDomainError(f"{what} needs at least {2 * layers + 1} points per axis, grid is {grid.shape}")
    out = erode(mask, layers)
    if not out.any():
        raise StencilDomainError(f"{what}: no valid points remain after eroding the mask by {layers} layer(s)")
    return out


def d1(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Central first difference along a grid axis; the two edge layers are NaN."""
    out = np.full(values.shape, np.nan)
    n = values.shape[axis]
    inner = [slice(None)] * values.ndim
    inner[axis] = slice(1, n - 1)
    plus = list(inner)
    plus[axis] = slice(2, n)
    minus = list(inner)
    minus[axis] = slice(0, n - 2)
    out[tuple(inner)] = (values[tuple(plus)] - values[tuple(minus)]) / (2.0 * h)
    return out


def d2(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Three-point second difference along a grid axis."""
    out = np.full(values.shape, np.nan)
    n = values.shape[axis]
    inner = [slice(None)] * values.ndim
    inner[axis] = slice(1, n - 1)
    plus = list(inner)
    plus[axis] = slice(2, n)
    minus = list(inner)
    minus[axis] = slice(0, n - 2)
    out[tuple(inner)] = (values[tuple(plus)] - 2.0 * values[tuple(inner)] + values[tuple(minus)]) / (h * h)
    return out


def partials(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Append a derivative index: result[..., k] = d(values)/dx^k."""
    return np.stack([d1(values, k, grid.spacing[k]) for k in range(grid.dim)], axis=-1)


def _hessian_values(grid: Grid, values: np.ndarray) -> tuple[np.ndarray, float]:
    d = grid.dim
    out = np.empty(grid.shape + (d, d))
    asym = 0.0
    first = [d1(values, k, grid.spacing[k]) for k in range(d)]
    for i in range(d):
        out[..., i, i] = d2(values, i, grid.spacing[i])
        for j in range(i + 1, d):
            dij = d1(first[j], i, grid.spacing[i])
            dji = d1(first[i], j, grid.spacing[j])
            with np.errstate(invalid="ignore"):
                diff = np.nanmax(np.abs(dij - dji)) if np.isfinite(dij).any() else 0.0
            asym = max(asym, float(diff))
            out[..., i, j] = out[..., j, i] = 0.5 * (dij + dji)
    return out, asym


# --------------------------------------------------------------------------
# tensor-calculus operators


def gradient(f: ScalarField) -> CovectorField:
    """Second-order central gradient; component k is df/dx^k."""
    mask = _check_domain(f.grid, f.mask, 1, "gradient")
    return CovectorField(f.grid, partials(f.grid, f.values), mask)


def hessian(f: ScalarField, return_asymmetry: bool = False):
    """Symmetric matrix of second partials.

    Diagonal entries use the three-point stencil, mixed entries nested
    central differences averaged over both orderings.  With
    ``return_asymmetry`` the pre-averaging mismatch is returned as well.
    """
    mask = _check_domain(f.grid, f.mask, 2, "hessian")
    values, asym = _hessian_values(f.grid, f.values)
    out = MatrixField(f.grid, values, mask, symmetry="symmetric")
    return (out, asym) if return_asymmetry else out


def laplace_beltrami_flat(f: ScalarField) -> ScalarField:
    """Signature-weighted trace of the Hessian (Laplacian or d'Alembertian)."""
    grid = f.grid
    mask = _check_domain(grid, f.mask, 2, "laplace_beltrami_flat")
    w = grid.contraction_weights()
    out = np.zeros(grid.shape)
    for k in range(grid.dim):
        if w[k] != 0.0:
            out += w[k] * d2(f.values, k, grid.spacing[k])
    return ScalarField(grid, out, mask)


def exterior_derivative(a: CovectorField) -> MatrixField:
    """(da)_{ij} = d_i a_j - d_j a_i."""
    grid = a.grid
    mask = _check_domain(grid, a.mask, 1, "exterior_derivative")
    p = partials(grid, a.values)  # p[..., j, i] = d_i a_j
    out = np.swapaxes(p, -1, -2) - p
    return MatrixField(grid, out, mask, symmetry="antisymmetric")


def divergence(a: CovectorField) -> ScalarField:
    """Sum_k w_k d_k a_k with the grid's contraction weights (index raised)."""
    grid = a.grid
    mask = _check_domain(grid, a.mask, 1, "divergence")
    w = grid.contraction_weights()
    out = np.zeros(grid.shape)
    for k in range(grid.dim):
        if w[k] != 0.0:
            out += w[k] * d1(a.values[..., k], k, grid.spacing[k])
    return ScalarField(grid, out, mask)


def tensor_divergence(t: MatrixField, index: str = "second", raise_contracted: bool = True) -> CovectorField:
    """Component i = sum_j w_j d_j t_{ij} (``index='second'``) or t_{ji}.

    ``w`` is the grid's contraction weight; with ``raise_contracted=False``
    the contracted index is taken as already raised (plain partial sum).
    """
    if index not in ("first", "second"):
        raise ValueError("index must be 'first' or 'second'")
    grid = t.grid
    mask = _check_domain(grid, t.mask, 1, "tensor_divergence")
    vals = t.values if index == "second" else np.swapaxes(t.values, -1, -2)
    w = grid.contraction_weights() if raise_contracted else np.ones(grid.dim)
    out = np.zeros(grid.shape + (grid.dim,))
    for j in range(grid.dim):
        if w[j] != 0.0:
            out += w[j] * d1(vals[..., :, j], j, grid.spacing[j])
    return CovectorField(grid, out, mask)


# --------------------------------------------------------------------------
# norms


def sup_norm(f: Field, mask: np.ndarray | None = None) -> float:
    m = f.mask if mask is None else (f.mask & mask)
    if not m.any():
        return 0.0
    return float(np.max(np.abs(f.values[m])))


def l2_norm(f: Field, mask: np.ndarray | None = None) -> float:
    """Cell-volume weighted L2 norm over the (intersected) mask."""
    m = f.mask if mask is None else (f.mask & mask)
    if not m.any():
        return 0.0
    return float(math.sqrt(f.grid.cell_volume * np.sum(f.values[m] ** 2)))


def norms(f: Field, mask: np.ndarray | None = None) -> dict[str, float]:
    return {"sup": sup_norm(f, mask), "l2": l2_norm(f, mask)}


def difference(a: Field, b: Field) -> Field:
    """a - b on the intersection of masks."""
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    mask = a.mask & b.mask
    vals = np.where(_broadcast_mask(mask, a.values), a.values - b.values, np.nan)
    kwargs = {"symmetry": a.symmetry} if isinstance(a, MatrixField) and a.symmetry == getattr(b, "symmetry", None) else {}
    return field_of_rank(a.grid, vals, mask, **kwargs)


def _broadcast_mask(mask: np.ndarray, values: np.ndarray) -> np.ndarray:
    return mask.reshape(mask.shape + (1,) * (values.ndim - mask.ndim))


# --------------------------------------------------------------------------
# convergence harness


class ExactMatch:
    """Sentinel: the error vanished at one resolution, so no order exists."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "EXACT_MATCH"

    def __reduce__(self):
        return (ExactMatch, ())


EXACT_MATCH = ExactMatch()


def observed_order(err_coarse: float, err_fine: float, zero: float = 0.0):
    """log2(err_h / err_{h/2}), or EXACT_MATCH when either error is <= ``zero``."""
    if err_coarse <= zero or err_fine <= zero:
        return EXACT_MATCH
    return math.log2(err_coarse / err_fine)


def refinement_errors(coarse: Field, fine: Field, exact=None) -> tuple[float, float]:
    """Sup-norm errors of a nested (h, h/2) pair at the coarse valid points.

    ``exact`` is an array on the coarse grid, a callable taking the coarse
    grid, or None for a residual whose reference is zero.
    """
    if fine.grid != coarse.grid.refined():
        raise ValueError("fine field must live on coarse.grid.refined()")
    sub = tuple(slice(None, None, 2) for _ in range(coarse.grid.dim))
    fine_vals = fine.values[sub]
    common = coarse.mask & fine.mask[sub]
    if not common.any():
        raise StencilDomainError("coarse and fine fields share no valid points")
    if exact is None:
        ref = np.zeros_like(coarse.values)
    elif callable(exact):
        ref = np.asarray(exact(coarse.grid), dtype=float)
    else:
        ref = np.asarray(exact, dtype=float)
    err_c = float(np.max(np.abs(coarse.values[common] - ref[common])))
    err_f = float(np.max(np.abs(fine_vals[common] - ref[common])))
    return err_c, err_f


def convergence_order(coarse: Field, fine: Field, exact=None, zero: float | None = None):
    """Observed order of a nested refinement pair against an analytic reference.

    Errors at or below ``zero`` (default: 1e-11 times the reference scale,
    i.e. rounding level) count as exact and yield :data:`EXACT_MATCH`.
    """
    err_c, err_f = refinement_errors(coarse, fine, exact)
    if zero is None:
        if exact is None:
            scale = 1.0
        else:
            ref = exact(coarse.grid) if callable(exact) else exact
            scale = max(1.0, float(np.nanmax(np.abs(ref))))
        zero = 1e-11 * scale
    return observed_order(err_c, err_f, zero)


# --------------------------------------------------------------------------
# CSV dump format


def component_labels(f: Field, name: str) -> list[str]:
    if f.rank == 0:
        return [name]
    idx = np.ndindex(*(f.grid.dim,) * f.rank)
    return [f"{name}_{''.join(str(i) for i in ix)}" for ix in idx]


def coordinate_labels(grid: Grid) -> list[str]:
    names = []
    spatial = 0
    for role in grid.axis_roles:
        if role == TIME:
            names.append("x0" if grid.is_lorentzian else "t")
        else:
            names.append(("x", "y", "z")[spatial] if grid.dim - (grid.time_axis is not None) <= 3 else f"x{spatial + 1}")
            spatial += 1
    return names


def dump_csv(f: Field, path, name: str) -> int:
    """Write valid points as CSV rows (coordinates then components).

    Rows follow lexicographic grid-index order; returns the row count.
    """
    grid = f.grid
    idx = np.argwhere(f.mask)  # argwhere is lexicographic already
    coords = [c[idx[:, k]] for k, c in enumerate(grid.coords())]
    comps = f.values[f.mask].reshape(len(idx), -1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(coordinate_labels(grid) + component_labels(f, name))
        for r in range(len(idx)):
            writer.writerow([repr(float(c[r])) for c in coords] + [repr(float(v)) for v in comps[r]])
    return len(idx)


def load_csv(grid: Grid, path, rank: int = 0) -> Field:
    """Read a dump written by :func:`dump_csv` back onto ``grid``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty field file")
    header, body = rows[0], rows[1:]
    ncomp = grid.dim**rank
    if len(header) != grid.dim + ncomp:
        raise ValueError(f"{path}: expected {grid.dim + ncomp} columns, found {len(header)}")
    values = np.full(grid.shape + (grid.dim,) * rank, np.nan)
    mask = np.zeros(grid.shape, dtype=bool)
    flat = values.reshape(grid.shape + (ncomp,))
    for lineno, row in enumerate(body, start=2):
        nums = [float(v) for v in row]
        index = []
        for k in range(grid.dim):
            pos = (nums[k] - grid.origin[k]) / grid.spacing[k]
            i = int(round(pos))
            if abs(pos - i) > 1e-6 or not (0 <= i < grid.shape[k]):
                raise ValueError(f"{path}:{lineno}: coordinate {nums[k]} is not a point of the grid")
            index.append(i)
        flat[tuple(index)] = nums[grid.dim :]
        mask[tuple(index)] = True
    return _BY_RANK[rank](grid, values, mask)


def sample(grid: Grid, fn: Callable[..., np.ndarray], mask: np.ndarray | None = None) -> ScalarField:
    """Evaluate ``fn(*mesh)`` on the grid as a scalar field."""
    vals = np.broadcast_to(np.asarray(fn(*grid.mesh()), dtype=float), grid.shape)
    return ScalarField(grid, vals, mask)


def stack_covector(grid: Grid, comps: Sequence[np.ndarray], mask=None) -> CovectorField:
    return CovectorField(grid, np.stack([np.broadcast_to(c, grid.shape) for c in comps], axis=-1), mask)


__all__ = [
    "Grid",
    "Field",
    "ScalarField",
    "CovectorField",
    "MatrixField",
    "ThreeIndexField",
    "FourIndexField",
    "EXACT_MATCH",
    "gradient",
    "hessian",
    "laplace_beltrami_flat",
    "exterior_derivative",
    "divergence",
    "tensor_divergence",
    "convergence_order",
    "observed_order",
    "refinement_errors",
    "erode",
    "sup_norm",
    "l2_norm",
    "norms",
    "dump_csv",
    "load_csv",
    "sample",
]
