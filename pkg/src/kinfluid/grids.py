"""Uniform tensor-product grids, midpoint quadrature and second-order stencils.

Cell-centered layout on every axis: cell i of axis k owns the interval
[i*h_k, (i+1)*h_k] and carries its value at the midpoint.  Boundary
conditions enter differential operators through an explicit ghost layer
(one cell on each side of each axis); operators refuse fields that do not
carry it.  All integrals are midpoint sums so that conservative upwind
fluxes telescope exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import GhostLayerMissing, NonFiniteField


def _as_tuple(value, d, cast):
    if np.isscalar(value):
        return (cast(value),) * d
    out = tuple(cast(v) for v in value)
    if len(out) != d:
        raise ValueError(f"expected {d} per-axis values, got {len(out)}")
    return out


@dataclass
class SpatialGrid:
    """Uniform grid on the box prod_k [0, L_k].

    ``periodic`` is a test-mode switch: it removes physical boundaries from
    the transport operators (used for space-homogeneous and manufactured
    runs); elliptic solves reject periodic grids.
    """

    extents: tuple
    cells: tuple
    periodic: bool = False

    def __post_init__(self):
        if np.isscalar(self.cells):
            self.cells = (int(self.cells),)
        else:
            self.cells = tuple(int(n) for n in self.cells)
        d = len(self.cells)
        self.extents = _as_tuple(self.extents, d, float)
        if any(n < 1 for n in self.cells):
            raise ValueError("need at least one cell per axis")
        if any(L <= 0 for L in self.extents):
            raise ValueError("extents must be positive")
        self.h = tuple(L / n for L, n in zip(self.extents, self.cells))

    @property
    def dim(self):
        return len(self.cells)

    @property
    def shape(self):
        return self.cells

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    def centers(self, axis):
        n, h = self.cells[axis], self.h[axis]
        return (np.arange(n) + 0.5) * h

    def center_mesh(self):
        """Cell-center coordinates, shape (d, *cells)."""
        axes = [self.centers(k) for k in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def face_area(self, axis):
        """Measure of one boundary face cell orthogonal to ``axis``."""
        return float(np.prod([h for k, h in enumerate(self.h) if k != axis])) if self.dim > 1 else 1.0

    def boundary_sides(self):
        """All (axis, side) pairs; side 0 is the low face, side 1 the high face."""
        if self.periodic:
            return []
        return [(a, s) for a in range(self.dim) for s in (0, 1)]

    def normal_sign(self, side):
        """Outward normal component along the face axis: -1 low, +1 high."""
        return -1.0 if side == 0 else 1.0

    def face_shape(self, axis):
        return tuple(n for k, n in enumerate(self.cells) if k != axis)


@dataclass
class VelocityGrid:
    """Uniform grid on [-vmax_k, vmax_k] per axis, symmetric about v = 0."""

    vmax: tuple
    cells: tuple

    def __post_init__(self):
        if np.isscalar(self.cells):
            self.cells = (int(self.cells),)
        else:
            self.cells = tuple(int(n) for n in self.cells)
        d = len(self.cells)
        self.vmax = _as_tuple(self.vmax, d, float)
        if any(v <= 0 for v in self.vmax):
            raise ValueError("vmax must be positive")
        self.h = tuple(2 * v / n for v, n in zip(self.vmax, self.cells))

    @property
    def dim(self):
        return len(self.cells)

    @property
    def shape(self):
        return self.cells

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    def centers(self, axis):
        n, h = self.cells[axis], self.h[axis]
        return -self.vmax[axis] + (np.arange(n) + 0.5) * h

    def faces(self, axis):
        n, h = self.cells[axis], self.h[axis]
        return -self.vmax[axis] + np.arange(n + 1) * h

    def center_mesh(self):
        axes = [self.centers(k) for k in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def speed_mesh(self):
        """|v| at velocity cell centers."""
        return np.sqrt(np.sum(self.center_mesh() ** 2, axis=0))


def quadrature(values, grid, region=None):
    """Midpoint-rule integral of a grid function over cells.

    ``region`` is an optional boolean mask selecting cells.  Raises
    NonFiniteField if any selected value is not finite.
    """
    values = np.asarray(values, dtype=float)
    if region is not None:
        values = np.where(region, values, 0.0)
        checked = values
    else:
        checked = values
    if not np.all(np.isfinite(checked)):
        raise NonFiniteField("quadrature input contains non-finite values")
    return float(values.sum()) * grid.cell_volume


def face_integral(values, grid, axis):
    """Integral of a function living on the face cells orthogonal to ``axis``."""
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise NonFiniteField("face integral input contains non-finite values")
    return float(values.sum()) * grid.face_area(axis)


# ---------------------------------------------------------------------------
# ghost layers and centered operators
# ---------------------------------------------------------------------------

def pad_field(values, grid, mode="mirror", boundary_values=None):
    """Attach one ghost cell per side of every axis.

    modes:
      mirror    -- ghost = -interior (zero Dirichlet face value)
      dirichlet -- ghost = 2*b - interior for face value b (``boundary_values``
                   maps (axis, side) -> scalar/array)
      neumann   -- ghost = interior (zero-gradient)
      periodic  -- wrap around
      zero      -- ghost = 0
    """
    v = np.asarray(values, dtype=float)
    d = grid.dim
    out = np.pad(v, [(1, 1)] * d + [(0, 0)] * (v.ndim - d), mode="edge")
    for axis in range(d):
        lo = [slice(1, -1)] * d
        lo[axis] = 0
        hi = [slice(1, -1)] * d
        hi[axis] = -1
        lo_in = [slice(1, -1)] * d
        lo_in[axis] = 1
        hi_in = [slice(1, -1)] * d
        hi_in[axis] = -2
        lo, hi, lo_in, hi_in = map(tuple, (lo, hi, lo_in, hi_in))
        if mode == "mirror":
            out[lo] = -out[lo_in]
            out[hi] = -out[hi_in]
        elif mode == "neumann":
            out[lo] = out[lo_in]
            out[hi] = out[hi_in]
        elif mode == "zero":
            out[lo] = 0.0
            out[hi] = 0.0
        elif mode == "periodic":
            out[lo] = out[hi_in]
            out[hi] = out[lo_in]
        elif mode == "dirichlet":
            b_lo = boundary_values[(axis, 0)] if boundary_values else 0.0
            b_hi = boundary_values[(axis, 1)] if boundary_values else 0.0
            out[lo] = 2.0 * b_lo - out[lo_in]
            out[hi] = 2.0 * b_hi - out[hi_in]
        else:
            raise ValueError(f"unknown pad mode {mode!r}")
    return out


def _check_padded(values, grid, extra_dims=0):
    expected = tuple(n + 2 for n in grid.cells)
    got = np.asarray(values).shape
    if got[extra_dims:] != expected:
        raise GhostLayerMissing(
            f"operator needs interior+ghost shape {expected}, got {got[extra_dims:]}"
        )


def grad(padded, grid):
    """Second-order centered gradient of a padded scalar field -> (d, *cells)."""
    _check_padded(padded, grid)
    padded = np.asarray(padded, dtype=float)
    d = grid.dim
    out = np.empty((d,) + grid.cells)
    for axis in range(d):
        up = [slice(1, -1)] * d
        dn = [slice(1, -1)] * d
        up[axis] = slice(2, None)
        dn[axis] = slice(0, -2)
        out[axis] = (padded[tuple(up)] - padded[tuple(dn)]) / (2.0 * grid.h[axis])
    return out


def divergence(padded_vec, grid):
    """Centered divergence of a padded vector field (d, *cells+2) -> (*cells)."""
    padded_vec = np.asarray(padded_vec, dtype=float)
    _check_padded(padded_vec, grid, extra_dims=1)
    d = grid.dim
    out = np.zeros(grid.cells)
    for axis in range(d):
        up = [slice(1, -1)] * d
        dn = [slice(1, -1)] * d
        up[axis] = slice(2, None)
        dn[axis] = slice(0, -2)
        out += (padded_vec[axis][tuple(up)] - padded_vec[axis][tuple(dn)]) / (2.0 * grid.h[axis])
    return out


def laplace(padded, grid):
    """Second-order centered Laplacian of a padded scalar field."""
    _check_padded(padded, grid)
    padded = np.asarray(padded, dtype=float)
    d = grid.dim
    out = np.zeros(grid.cells)
    ctr = tuple([slice(1, -1)] * d)
    for axis in range(d):
        up = [slice(1, -1)] * d
        dn = [slice(1, -1)] * d
        up[axis] = slice(2, None)
        dn[axis] = slice(0, -2)
        out += (padded[tuple(up)] - 2.0 * padded[ctr] + padded[tuple(dn)]) / grid.h[axis] ** 2
    return out


# ---------------------------------------------------------------------------
# sparse operator assembly (shared by the elliptic and implicit solvers)
# ---------------------------------------------------------------------------

def _laplacian_1d(n, h, bc):
    """1D Laplacian matrix; bc 'dirichlet' uses the mirror ghost (zero face
    value), bc 'neumann' the copy ghost (zero flux)."""
    main = np.full(n, -2.0)
    off = np.ones(n - 1)
    if bc == "dirichlet":
        main[0] = main[-1] = -3.0
    elif bc == "neumann":
        main[0] = main[-1] = -1.0
    else:
        raise ValueError(f"unknown bc {bc!r}")
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


def laplacian_matrix(grid, bc="dirichlet"):
    """Sparse d-dimensional Laplacian with the given boundary treatment."""
    if grid.periodic:
        raise ValueError("no Laplacian matrix for periodic test grids")
    mats = [_laplacian_1d(n, h, bc) for n, h in zip(grid.cells, grid.h)]
    d = grid.dim
    total = None
    for axis in range(d):
        term = None
        for k in range(d):
            blk = mats[k] if k == axis else sp.identity(grid.cells[k], format="csr")
            term = blk if term is None else sp.kron(term, blk, format="csr")
        total = term if total is None else total + term
    return total.tocsr()


@dataclass
class StencilSet:
    """Bundle of the discrete operators one solver configuration uses.

    ``iterated_order`` m selects the 2(2m+1)-order operator used by the
    regularized field solve; the transport solvers always use the
    first-order upwind flux and the centered second-order stencils above.
    """

    iterated_order: int = 1
    gradient: callable = field(default=grad, repr=False)
    div: callable = field(default=divergence, repr=False)
    laplacian: callable = field(default=laplace, repr=False)

    def dirichlet_matrix(self, grid):
        return laplacian_matrix(grid, bc="dirichlet")

    def neumann_matrix(self, grid):
        return laplacian_matrix(grid, bc="neumann")

    def iterated_dirichlet_matrix(self, grid):
        """Matrix of Delta^(2m+1) with Delta^j = 0 boundary data, built by
        composing the Dirichlet Laplacian (each application re-imposes a
        zero face value, which is exactly the iterated boundary chain)."""
        L = self.dirichlet_matrix(grid)
        out = L
        for _ in range(2 * self.iterated_order):
            out = out @ L
        return out.tocsr()


def thomas_solve(lower, diag, upper, rhs):
    """Vectorized tridiagonal solve along the last axis.

    lower[..., i] multiplies x[..., i-1] in row i (lower[..., 0] ignored),
    upper[..., i] multiplies x[..., i+1] (upper[..., -1] ignored).  Assumes
    the rows are diagonally dominant (all callers build M-matrices).
    """
    n = rhs.shape[-1]
    c = np.empty_like(rhs)
    dloc = np.empty_like(rhs)
    c[..., 0] = upper[..., 0] / diag[..., 0]
    dloc[..., 0] = rhs[..., 0] / diag[..., 0]
    for i in range(1, n):
        denom = diag[..., i] - lower[..., i] * c[..., i - 1]
        c[..., i] = upper[..., i] / denom
        dloc[..., i] = (rhs[..., i] - lower[..., i] * dloc[..., i - 1]) / denom
    x = np.empty_like(rhs)
    x[..., -1] = dloc[..., -1]
    for i in range(n - 2, -1, -1):
        x[..., i] = dloc[..., i] - c[..., i] * x[..., i + 1]
    return x
