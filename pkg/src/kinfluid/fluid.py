"""Compressible isentropic fluid step with artificial regularizations.

Density: conservative donor-cell advection with prescribed boundary mass
fluxes (inflow density on the inflow part, upwind interior values
elsewhere) plus an implicit zero-flux diffusion solve weighted by eps.
Momentum: explicit advection and pressure, explicit quartic-gradient
regularization with its own step bound, implicit Newtonian viscosity and
implicit drag relaxation toward the kinetic momentum density.  The
boundary extension field (matching the wall data, nonincreasing ramp into
the interior, nonnegative divergence in its layer) is the reference frame
of the energy audit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ExtensionFailed,
    InsufficientHistory,
    NonFiniteField,
    PositivityLost,
    TimeStepTooLarge,
)
from .grids import laplacian_matrix, pad_field, grad, quadrature, thomas_solve


@dataclass
class FluidParams:
    """Pressure law and viscosity coefficients plus regularization weights."""

    gamma: float = 1.8
    mu1: float = 0.1
    mu2: float = 0.0
    eps: float = 0.0
    delta: float = 0.0
    beta: float = 5.0

    def __post_init__(self):
        if self.gamma <= 1.5:
            raise ValueError("adiabatic exponent must satisfy gamma > 3/2")
        if self.mu1 <= 0.0:
            raise ValueError("mu1 must be positive")
        if 2.0 * self.mu1 + 3.0 * self.mu2 < 0.0:
            raise ValueError("need 2*mu1 + 3*mu2 >= 0")
        if self.delta > 0.0 and self.beta <= max(self.gamma, 4.5):
            raise ValueError("artificial pressure exponent must exceed max(gamma, 9/2)")
        if self.eps < 0.0 or self.delta < 0.0:
            raise ValueError("eps and delta must be nonnegative")

    def pressure(self, rho):
        return rho**self.gamma + self.delta * rho**self.beta

    def sound_speed_sq(self, rho):
        return self.gamma * rho ** (self.gamma - 1.0) + self.delta * self.beta * rho ** (
            self.beta - 1.0
        )


@dataclass
class FluidState:
    """Positive density and velocity on the spatial grid."""

    rho: np.ndarray
    u: np.ndarray
    grid: object

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        d = self.grid.dim
        if self.rho.shape != self.grid.shape:
            raise ValueError("density shape mismatch")
        if self.u.shape != (d,) + self.grid.shape:
            raise ValueError("velocity shape mismatch")
        if not (np.all(np.isfinite(self.rho)) and np.all(np.isfinite(self.u))):
            raise NonFiniteField("fluid state contains non-finite values")
        if self.rho.min(initial=np.inf) <= 0.0:
            raise PositivityLost("density must be strictly positive")

    def momentum(self):
        return self.rho[None] * self.u

    def kinetic_energy(self):
        return 0.5 * quadrature(self.rho * (self.u**2).sum(axis=0), self.grid)


# ---------------------------------------------------------------------------
# boundary data and the extension field
# ---------------------------------------------------------------------------

def _ramp(name):
    # defined for all s <= 1 so ghost points continue the profile smoothly:
    # the linear ramp extrapolates through the face, the smoothstep ramp is
    # flat there (phi'(0) = 0), so clamping keeps it C^1
    if name == "linear":
        return lambda s: np.where(s < 1.0, 1.0 - s, 0.0)
    if name == "smoothstep":
        def phi(s):
            s = np.clip(s, 0.0, 1.0)
            return 1.0 - s * s * (3.0 - 2.0 * s)
        return phi
    raise ValueError(f"unknown ramp {name!r}")


class FluidBoundary:
    """Velocity data on every side, inflow density on the inflow part.

    ``u_B`` maps (axis, side) to a length-d vector; sides not listed are
    walls.  ``rho_in`` is a scalar or a callable of time.  Sides are
    classified once from the sign of u_B . nu: strictly negative is inflow,
    strictly positive outflow, zero a wall.
    """

    def __init__(self, grid, u_B=None, rho_in=1.0, layer_width=None,
                 ramp="smoothstep", min_layer=None):
        self.grid = grid
        d = grid.dim
        self.u_B = {}
        for key in grid.boundary_sides():
            vec = np.zeros(d)
            if u_B and key in u_B:
                vec = np.asarray(u_B[key], dtype=float).reshape(d)
            self.u_B[key] = vec
        self.rho_in = rho_in
        self.ramp_name = ramp
        width = layer_width if layer_width is not None else 0.25 * min(grid.extents)
        self.extension = build_extension(
            self.u_B, grid, width, ramp=ramp, min_layer=min_layer
        )

    def u_nu(self, key):
        axis, side = key
        return float(self.u_B[key][axis] * self.grid.normal_sign(side))

    def side_kind(self, key):
        un = self.u_nu(key)
        if un < 0.0:
            return "inflow"
        if un > 0.0:
            return "outflow"
        return "wall"

    def gamma_in(self):
        return [k for k in self.grid.boundary_sides() if self.side_kind(k) == "inflow"]

    def gamma_out(self):
        return [k for k in self.grid.boundary_sides() if self.side_kind(k) == "outflow"]

    def rho_in_at(self, t):
        value = self.rho_in(t) if callable(self.rho_in) else self.rho_in
        value = float(value)
        if value <= 0.0:
            raise ValueError("inflow density must be positive")
        return value

    def is_rest(self):
        return all(np.all(v == 0.0) for v in self.u_B.values())


@dataclass
class ExtensionField:
    """Interior continuation of the boundary velocity data.

    ``padded`` carries one ghost ring sampled from the same closed formula,
    so centered gradients of the extension are consistent everywhere.
    """

    values: np.ndarray
    padded: np.ndarray
    layer_width: float
    divergence: np.ndarray
    layer_mask: np.ndarray
    grid: object

    def gradient(self):
        """G[i, j] = d u_inf_j / d x_i at cell centers."""
        d = self.grid.dim
        out = np.empty((d, d) + self.grid.shape)
        for j in range(d):
            out[:, j] = grad(self.padded[j], self.grid)
        return out

    def is_zero(self):
        return not np.any(self.values)


def _extension_eval(u_B, grid, width, phi, points):
    """Evaluate the extension formula at arbitrary points (d, ...)."""
    d = grid.dim
    dist = np.full(points.shape[1:], np.inf)
    nearest = np.zeros(points.shape[1:], dtype=int)
    keys = list(u_B.keys())
    for idx, (axis, side) in enumerate(keys):
        dk = points[axis] if side == 0 else grid.extents[axis] - points[axis]
        closer = dk < dist
        dist = np.where(closer, dk, dist)
        nearest = np.where(closer, idx, nearest)
    out = np.zeros((d,) + points.shape[1:])
    ramp_val = phi(dist / width)
    for idx, key in enumerate(keys):
        sel = nearest == idx
        for comp in range(d):
            out[comp] = np.where(sel, u_B[key][comp] * ramp_val, out[comp])
    return out, dist


def build_extension(u_B, grid, layer_width, ramp="smoothstep", min_layer=None,
                    tol=1e-12):
    """Extension u_inf(x) = u_B(pi(x)) * phi(dist/width) of the wall data.

    pi is the nearest-boundary projection and phi a nonincreasing ramp from
    1 to 0.  After building, the divergence is checked on the layer
    {dist < width}; if it dips below zero anywhere the width is halved until
    the sign condition holds or the width underflows (ExtensionFailed, which
    reports the worst cell).
    """
    if grid.periodic:
        zero = np.zeros((grid.dim,) + grid.shape)
        padded = np.zeros((grid.dim,) + tuple(n + 2 for n in grid.cells))
        return ExtensionField(zero, padded, 0.0, np.zeros(grid.shape),
                              np.zeros(grid.shape, dtype=bool), grid)
    phi = _ramp(ramp)
    min_layer = min_layer if min_layer is not None else min(grid.h)
    d = grid.dim
    # cell centers plus one ghost ring, from the same closed formula
    axes = [np.concatenate(([-grid.h[k] / 2.0], grid.centers(k),
                            [grid.extents[k] + grid.h[k] / 2.0])) for k in range(d)]
    mesh_pad = np.stack(np.meshgrid(*axes, indexing="ij"))
    width = float(layer_width)
    interior = tuple([slice(1, -1)] * d)
    while True:
        padded, dist_pad = _extension_eval(u_B, grid, width, phi, mesh_pad)
        values = padded[(slice(None),) + interior]
        dist = dist_pad[interior]
        div = np.zeros(grid.shape)
        for k in range(d):
            up = [slice(1, -1)] * d
            dn = [slice(1, -1)] * d
            up[k] = slice(2, None)
            dn[k] = slice(0, -2)
            div += (padded[k][tuple(up)] - padded[k][tuple(dn)]) / (2.0 * grid.h[k])
        mask = dist < width
        worst = float(div[mask].min()) if mask.any() else 0.0
        if worst >= -tol:
            return ExtensionField(values, padded, width, div, mask, grid)
        if width / 2.0 < min_layer:
            cells = np.argwhere(mask & (div < -tol))
            worst_cell = tuple(cells[np.argmin(div[mask & (div < -tol)])]) if len(cells) else None
            raise ExtensionFailed(
                f"div u_inf = {worst:.3e} < 0 persists at minimum layer width",
                worst_cell=worst_cell,
                worst_value=worst,
            )
        width /= 2.0


# ---------------------------------------------------------------------------
# stress tensor
# ---------------------------------------------------------------------------

def stress(grad_u, params):
    """S(G) = mu1 (G + G^T) + mu2 tr(G) I for G[i, j] = d_i u_j."""
    G = np.asarray(grad_u, dtype=float)
    d = G.shape[0]
    tr = np.trace(G, axis1=0, axis2=1)
    S = params.mu1 * (G + np.swapaxes(G, 0, 1))
    for i in range(d):
        S[i, i] += params.mu2 * tr
    return S


def stress_contraction(grad_u, params):
    """S(G) : G, nonnegative whenever 2 mu1 + d mu2 >= 0."""
    return np.einsum("ij...,ij...->...", stress(grad_u, params), np.asarray(grad_u))


def velocity_gradient(u, grid, bdry=None):
    """Centered gradient of a velocity field, G[i, j] = d_i u_j.

    Ghost values honor the Dirichlet wall data when ``bdry`` is given
    (periodic wrap on periodic grids, zero-gradient otherwise).
    """
    d = grid.dim
    out = np.empty((d, d) + grid.shape)
    for j in range(d):
        if grid.periodic:
            padded = pad_field(u[j], grid, mode="periodic")
        elif bdry is not None:
            bv = {key: bdry.u_B[key][j] for key in grid.boundary_sides()}
            padded = pad_field(u[j], grid, mode="dirichlet", boundary_values=bv)
        else:
            padded = pad_field(u[j], grid, mode="neumann")
        out[:, j] = grad(padded, grid)
    return out


# ---------------------------------------------------------------------------
# density step
# ---------------------------------------------------------------------------

@dataclass
class FluidStepRecord:
    """Boundary bookkeeping of one continuity step.

    outward_flux maps (axis, side) to the outward mass flux rate through
    that whole side; rho_face holds the upwind face density values the
    solver actually used (the audit integrates powers of these, never
    re-interpolated values).
    """

    dt: float
    outward_flux: dict = field(default_factory=dict)
    rho_face: dict = field(default_factory=dict)
    source_mass: float = 0.0

    def total_outward(self):
        return sum(self.outward_flux.values())


_diffusion_cache = {}


def _diffusion_solver(grid, coef):
    key = (id(grid), float(coef))
    if key not in _diffusion_cache:
        n = int(np.prod(grid.shape))
        A = (sp.identity(n, format="csr") - coef * laplacian_matrix(grid, bc="neumann")).tocsc()
        _diffusion_cache[key] = spla.factorized(A)
    return _diffusion_cache[key]


def _mass_face_fluxes(rho, u, grid, bdry, t):
    """Donor-cell mass fluxes per axis, with prescribed boundary values.

    Returns (faces, record_data): faces[axis] has the flux oriented along
    +axis on every face; record_data collects outward rates and face
    densities per side.
    """
    d = grid.dim
    faces = []
    outward = {}
    rho_face = {}
    for axis in range(d):
        n = grid.cells[axis]
        if grid.periodic:
            left = np.concatenate([rho.take([-1], axis=axis), rho], axis=axis)
            right = np.concatenate([rho, rho.take([0], axis=axis)], axis=axis)
            ua = u[axis]
            ul = np.concatenate([ua.take([-1], axis=axis), ua], axis=axis)
            ur = np.concatenate([ua, ua.take([0], axis=axis)], axis=axis)
            uf = 0.5 * (ul + ur)
            faces.append(np.where(uf > 0.0, left, right) * uf)
            continue
        ua = u[axis]
        uf_int = 0.5 * (ua.take(range(0, n - 1), axis=axis) + ua.take(range(1, n), axis=axis))
        rl = rho.take(range(0, n - 1), axis=axis)
        rr = rho.take(range(1, n), axis=axis)
        f_int = np.where(uf_int > 0.0, rl, rr) * uf_int
        side_vals = {}
        for side in (0, 1):
            key = (axis, side)
            kind = bdry.side_kind(key)
            ub = bdry.u_B[key][axis]
            interior = rho.take([0 if side == 0 else -1], axis=axis)
            if kind == "inflow":
                rb = bdry.rho_in_at(t)
                flux = ub * rb * np.ones_like(interior)
                rho_face[key] = rb
            elif kind == "outflow":
                flux = ub * interior
                rho_face[key] = interior.squeeze(axis=axis).copy()
            else:
                flux = np.zeros_like(interior)
                rho_face[key] = interior.squeeze(axis=axis).copy()
            side_vals[side] = flux
            out_rate = float(flux.sum()) * grid.face_area(axis) * grid.normal_sign(side)
            outward[key] = out_rate
        faces.append(np.concatenate([side_vals[0], f_int, side_vals[1]], axis=axis))
    return faces, outward, rho_face


def continuity_step(rho, u, dt, eps, bdry, grid, source=None, t=0.0, cfl_safety=0.9):
    """Advance the density: donor-cell advection with prescribed boundary
    fluxes, then implicit zero-flux diffusion weighted by eps.

    Total mass changes exactly by dt * (prescribed boundary fluxes) plus the
    injected source.  Returns (rho_new, FluidStepRecord).
    """
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    d = grid.dim
    rate = sum(np.abs(u[a]).max() / grid.h[a] for a in range(d))
    if dt * rate > cfl_safety:
        raise TimeStepTooLarge(
            f"continuity advection: dt={dt:.3e} exceeds {cfl_safety / max(rate, 1e-300):.3e}"
        )
    faces, outward, rho_face = _mass_face_fluxes(rho, u, grid, bdry, t)
    out = rho.copy()
    for axis in range(d):
        n = grid.cells[axis]
        upper = faces[axis].take(range(1, n + 1), axis=axis)
        lower = faces[axis].take(range(0, n), axis=axis)
        out -= (dt / grid.h[axis]) * (upper - lower)
    record = FluidStepRecord(dt=dt, outward_flux=outward, rho_face=rho_face)
    if source is not None:
        out += dt * np.asarray(source, dtype=float)
        record.source_mass = dt * quadrature(np.asarray(source, dtype=float), grid)
    if eps > 0.0:
        if grid.periodic:
            raise ValueError("diffusive density step needs a bounded domain")
        solve = _diffusion_solver(grid, eps * dt)
        out = solve(out.ravel()).reshape(grid.shape)
    if out.min(initial=np.inf) <= 0.0:
        raise PositivityLost(f"density reached {out.min():.3e}; check CFL and boundary data")
    return out, record


# ---------------------------------------------------------------------------
# momentum step
# ---------------------------------------------------------------------------

def _pad_rho(rho, grid, bdry, t):
    padded = pad_field(rho, grid, mode="neumann")
    d = grid.dim
    for (axis, side) in bdry.gamma_in():
        idx = [slice(1, -1)] * d
        idx[axis] = 0 if side == 0 else -1
        inner = [slice(1, -1)] * d
        inner[axis] = 1 if side == 0 else -2
        padded[tuple(idx)] = 2.0 * bdry.rho_in_at(t) - padded[tuple(inner)]
    return padded


def _implicit_component_solve(mass, nu, dt, rhs, grid, bdry, comp):
    """Solve (mass - dt * nu * Laplace) x = rhs with Dirichlet data on the
    boundary faces, by sequential per-axis tridiagonal factors."""
    d = grid.dim
    x = rhs
    for axis in range(d):
        lam = dt * nu / grid.h[axis] ** 2
        moved = np.moveaxis(x, axis, -1).copy()
        mass_m = np.moveaxis(mass, axis, -1)
        n = grid.cells[axis]
        diag = (mass_m + 2.0 * lam * np.ones(n)).copy()
        lower = np.full(moved.shape, -lam)
        upper = np.full(moved.shape, -lam)
        if grid.periodic:
            # zero-gradient ghosts: exact for the spatially uniform solves
            # the periodic test mode is used for
            diag[..., 0] -= lam
            diag[..., -1] -= lam
        else:
            # mirror ghost u_ghost = 2 u_B - u_interior
            diag[..., 0] += lam
            diag[..., -1] += lam
            moved[..., 0] += 2.0 * lam * bdry.u_B[(axis, 0)][comp]
            moved[..., -1] += 2.0 * lam * bdry.u_B[(axis, 1)][comp]
        x = np.moveaxis(thomas_solve(lower, diag, upper, moved), -1, axis)
        if axis < d - 1:
            x = mass * x
    return x


def quartic_regularizer(u, extension, grid, eps):
    """eps * div(|grad w|^2 grad w) with w = u - u_inf, face-conservative.

    w vanishes on the boundary, so mirror ghosts apply.  Returns the term
    and the largest |grad w|^2 (for the step-size bound).
    """
    d = grid.dim
    w = u - extension.values
    mode = "periodic" if grid.periodic else "mirror"
    padded = np.stack([pad_field(w[j], grid, mode=mode) for j in range(d)])
    # |grad w|^2 at cell centers
    gsq = np.zeros(grid.shape)
    for j in range(d):
        gsq += (grad(padded[j], grid) ** 2).sum(axis=0)
    gsq_pad = pad_field(gsq, grid, mode="periodic" if grid.periodic else "neumann")
    out = np.zeros((d,) + grid.shape)
    gmax = float(gsq.max(initial=0.0))
    for comp in range(d):
        for axis in range(d):
            h = grid.h[axis]
            sl = [slice(1, -1)] * d
            sl[axis] = slice(None)
            pj = np.moveaxis(padded[comp][tuple(sl)], axis, -1)
            gq = np.moveaxis(gsq_pad[tuple(sl)], axis, -1)
            dw = (pj[..., 1:] - pj[..., :-1]) / h          # n+1 faces
            gface = 0.5 * (gq[..., 1:] + gq[..., :-1])
            flux = gface * dw
            term = (flux[..., 1:] - flux[..., :-1]) / h
            out[comp] += np.moveaxis(term, -1, axis)
    return eps * out, gmax


def momentum_step(state, moments, u_eff, dt, params, bdry, grid, *,
                  rho_new=None, u_tilde=None, chi=None, t=0.0, cfl_safety=0.9):
    """Advance the velocity.

    Explicit: advection by the iterate's mass fluxes, isentropic plus
    artificial pressure gradients, the eps grad(rho).grad(u) commutator and
    the quartic gradient regularization.  Implicit: Newtonian viscosity and
    the drag relaxation chi * (j - n u'); at the coupling fixed point the
    drag equals the cutoff-weighted kinetic momentum exchange.
    """
    rho = state.rho
    u = state.u
    d = grid.dim
    if rho_new is None:
        rho_new = rho
    if u_tilde is None:
        u_tilde = u
    if chi is None:
        chi = np.ones(grid.shape)
    if rho_new.min(initial=np.inf) <= 0.0:
        raise PositivityLost("momentum step needs a positive density")

    cs = float(np.sqrt(params.sound_speed_sq(rho).max()))
    rate = sum((np.abs(u_tilde[a]).max() + cs) / grid.h[a] for a in range(d))
    if dt * rate > cfl_safety:
        raise TimeStepTooLarge(
            f"momentum advection/acoustics: dt={dt:.3e} exceeds "
            f"{cfl_safety / max(rate, 1e-300):.3e}"
        )

    # explicit quartic regularization and its stability bound
    if params.eps > 0.0:
        quartic, gmax = quartic_regularizer(u, bdry.extension, grid, params.eps)
        if gmax > 0.0:
            qlimit = cfl_safety * min(grid.h) ** 2 / (4.0 * params.eps * gmax)
            if dt > qlimit:
                raise TimeStepTooLarge(
                    f"quartic regularization: dt={dt:.3e} exceeds {qlimit:.3e}"
                )
    else:
        quartic = 0.0

    faces, _, _ = _mass_face_fluxes(rho, u_tilde, grid, bdry, t)

    # momentum advection: upwind the transported velocity by the mass flux
    adv = np.zeros((d,) + grid.shape)
    for comp in range(d):
        uc = u[comp]
        for axis in range(d):
            n = grid.cells[axis]
            fm = faces[axis]
            if grid.periodic:
                left = np.concatenate([uc.take([-1], axis=axis), uc], axis=axis)
                right = np.concatenate([uc, uc.take([0], axis=axis)], axis=axis)
            else:
                blo = np.full_like(uc.take([0], axis=axis), bdry.u_B[(axis, 0)][comp])
                bhi = np.full_like(uc.take([0], axis=axis), bdry.u_B[(axis, 1)][comp])
                left = np.concatenate([blo, uc], axis=axis)
                right = np.concatenate([uc, bhi], axis=axis)
            fq = np.where(fm > 0.0, left, right) * fm
            upper = fq.take(range(1, n + 1), axis=axis)
            lower = fq.take(range(0, n), axis=axis)
            adv[comp] += (upper - lower) / grid.h[axis]

    # pressure gradients (inflow ghost density, zero-gradient elsewhere)
    if grid.periodic:
        rho_pad = pad_field(rho, grid, mode="periodic")
    else:
        rho_pad = _pad_rho(rho, grid, bdry, t)
    gradP = grad(rho_pad**params.gamma, grid)
    if params.delta > 0.0:
        gradP = gradP + params.delta * grad(rho_pad**params.beta, grid)

    # eps * (grad rho . grad) u
    if params.eps > 0.0:
        grho = grad(rho_pad, grid)
        gu = velocity_gradient(u, grid, bdry=None if grid.periodic else bdry)
        comm = params.eps * np.einsum("i...,ij...->j...", grho, gu)
    else:
        comm = 0.0

    rhs = rho[None] * u - dt * (adv + gradP + comm - quartic)
    rhs = rhs + dt * chi[None] * moments.j

    # implicit viscosity + drag
    mass = rho_new + dt * chi * moments.n
    if d == 1:
        nu_tot = 2.0 * params.mu1 + params.mu2
        out = _implicit_component_solve(mass, nu_tot, dt, rhs[0], grid, bdry, 0)[None]
    else:
        # mu1 Laplacian implicit per axis; the (mu1+mu2) grad div part explicit
        nu_x = params.mu1 + params.mu2
        gu = velocity_gradient(u, grid, bdry=None if grid.periodic else bdry)
        divu = np.trace(gu, axis1=0, axis2=1)
        divu_pad = pad_field(divu, grid, mode="periodic" if grid.periodic else "neumann")
        rhs = rhs + dt * nu_x * grad(divu_pad, grid)
        drate = 2.0 * d * nu_x / min(grid.h) ** 2
        if nu_x > 0.0 and dt * drate > cfl_safety:
            raise TimeStepTooLarge("explicit grad-div viscosity: dt too large")
        out = np.stack([
            _implicit_component_solve(mass, params.mu1, dt, rhs[c], grid, bdry, c)
            for c in range(d)
        ])
    if not np.all(np.isfinite(out)):
        raise NonFiniteField("momentum step produced non-finite velocity")
    return out


# ---------------------------------------------------------------------------
# min/max principle audit
# ---------------------------------------------------------------------------

def density_bounds_check(times, rho_series, divu_series):
    """Margins of inf rho0 e^{-I(t)} <= rho <= sup rho0 e^{+I(t)} with
    I(t) the running integral of ||div u||_inf (trapezoid).

    Returns (times, lower_margins, upper_margins); both margins should stay
    above -C(dt + h) on pure-transport runs.
    """
    if len(rho_series) < 2:
        raise InsufficientHistory("need at least two density snapshots")
    times = np.asarray(times, dtype=float)
    sup_div = np.array([float(np.abs(dv).max()) for dv in divu_series])
    integral = np.concatenate(
        ([0.0], np.cumsum(0.5 * (sup_div[1:] + sup_div[:-1]) * np.diff(times)))
    )
    inf0 = float(np.min(rho_series[0]))
    sup0 = float(np.max(rho_series[0]))
    lower = np.array([
        float(np.min(r)) - inf0 * np.exp(-I) for r, I in zip(rho_series, integral)
    ])
    upper = np.array([
        sup0 * np.exp(I) - float(np.max(r)) for r, I in zip(rho_series, integral)
    ])
    return times, lower, upper
