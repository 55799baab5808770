"""Electrostatic field solves with zero-potential boundary data.

Plain operator: -laplace(phi) = n - c with phi = 0 on the boundary.
Regularized operator adds -eps * laplace^(2m+1)(phi) with the chain of
boundary conditions phi = laplace(phi) = ... = laplace^(2m)(phi) = 0,
realized by composing the Dirichlet Laplacian matrix with itself (each
application re-imposes a zero face value).  1D systems are factorized
directly; higher dimensions use conjugate gradients to a relative
residual of 1e-10.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EllipticSolveFailed, NonFiniteField, StencilUnderresolved
from .grids import StencilSet, grad, laplacian_matrix, pad_field, quadrature

CG_RTOL = 1e-10


@dataclass
class Potential:
    """Electric potential (zero on the boundary) with its cached gradient."""

    phi: np.ndarray
    grad: np.ndarray
    grid: object
    eps: float = 0.0
    order: int = 1

    def field_energy(self, operator=None):
        """Discrete Dirichlet energies: (|grad phi|^2 part, eps-weighted part).

        Both are evaluated through the same matrices that produced phi, so
        phi^T A phi = phi^T source holds to solver tolerance.
        """
        op = operator or PoissonOperator(self.grid, eps=self.eps, m=self.order)
        x = self.phi.ravel()
        base = -float(x @ (op.L @ x)) * self.grid.cell_volume
        if op.eps > 0.0:
            reg = -op.eps * float(x @ (op.L_iter @ x)) * self.grid.cell_volume
        else:
            reg = 0.0
        return base, reg


@dataclass
class Background:
    """Charge background c(x); either sign is accepted."""

    values: np.ndarray

    def lp_norm(self, grid, p):
        v = np.abs(np.asarray(self.values, dtype=float))
        if np.isinf(p):
            return float(v.max()) if v.size else 0.0
        return quadrature(v**p, grid) ** (1.0 / p)


class PoissonOperator:
    """Assembled matrices and factorization for one (grid, eps, m) triple."""

    def __init__(self, grid, eps=0.0, m=1):
        if grid.periodic:
            raise ValueError("field solve needs a bounded domain")
        if eps < 0.0:
            raise ValueError("eps must be nonnegative")
        if m < 1:
            raise ValueError("iterated order m must be >= 1")
        if eps > 0.0 and min(grid.cells) < 4 * m + 3:
            raise StencilUnderresolved(
                f"order-{2 * (2 * m + 1)} operator needs >= {4 * m + 3} cells per axis, "
                f"grid has {min(grid.cells)}"
            )
        self.grid = grid
        self.eps = float(eps)
        self.m = int(m)
        self.L = laplacian_matrix(grid, bc="dirichlet")
        if self.eps > 0.0:
            self.L_iter = StencilSet(iterated_order=m).iterated_dirichlet_matrix(grid)
            self.A = (-self.L - self.eps * self.L_iter).tocsc()
        else:
            self.L_iter = None
            self.A = (-self.L).tocsc()
        self._lu = None
        self._opnorm = float(np.abs(self.A).sum(axis=1).max())

    def solve(self, rhs):
        b = np.asarray(rhs, dtype=float).ravel()
        n = b.size
        if self.grid.dim == 1 or n <= 20000:
            if self._lu is None:
                try:
                    self._lu = spla.splu(self.A)
                except RuntimeError as err:
                    raise EllipticSolveFailed(f"factorization failed: {err}") from err
            x = self._lu.solve(b)
        else:
            x, info = spla.cg(self.A, b, rtol=CG_RTOL, atol=0.0, maxiter=20 * n)
            if info != 0:
                raise EllipticSolveFailed(f"CG stopped with info={info}")
        # backward-error check: the eps-weighted operator is very stiff, so
        # the residual is judged against |A||x| + |b|, not |b| alone
        res = np.linalg.norm(self.A @ x - b)
        scale = np.linalg.norm(b) + self._opnorm * np.linalg.norm(x)
        if scale > 0.0 and res > 1e-8 * scale:
            raise EllipticSolveFailed(f"backward error {res / scale:.2e} too large")
        return x.reshape(self.grid.cells)


def _gradient_of(phi, grid):
    return grad(pad_field(phi, grid, mode="mirror"), grid)


def solve_poisson(n, c, grid, operator=None):
    """Solve -laplace(phi) = n - c with zero boundary potential."""
    n = np.asarray(n, dtype=float)
    cvals = c.values if isinstance(c, Background) else np.asarray(c, dtype=float)
    if not (np.all(np.isfinite(n)) and np.all(np.isfinite(cvals))):
        raise NonFiniteField("poisson source must be finite")
    op = operator or PoissonOperator(grid, eps=0.0)
    phi = op.solve(n - cvals)
    return Potential(phi=phi, grad=_gradient_of(phi, grid), grid=grid, eps=0.0, order=op.m)


def solve_poisson_regularized(n, c, grid, eps, m=1, operator=None):
    """Solve -laplace(phi) - eps*laplace^(2m+1)(phi) = n - c.

    At eps = 0 this delegates to the plain solve (same matrix, same
    factorization path), so results match bit for bit.
    """
    if eps == 0.0:
        return solve_poisson(n, c, grid, operator=operator)
    n = np.asarray(n, dtype=float)
    cvals = c.values if isinstance(c, Background) else np.asarray(c, dtype=float)
    if not (np.all(np.isfinite(n)) and np.all(np.isfinite(cvals))):
        raise NonFiniteField("poisson source must be finite")
    op = operator or PoissonOperator(grid, eps=eps, m=m)
    phi = op.solve(n - cvals)
    return Potential(phi=phi, grad=_gradient_of(phi, grid), grid=grid, eps=float(eps), order=m)
