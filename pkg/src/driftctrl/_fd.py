"""Shared finite-difference stencils on the uniform spatial grid.

Second derivatives close the boundary with second-order ghost nodes
encoding the Neumann data g0, gb:
    u[-1]   = u[1]   - 2 dx g0   ->  D2u[0]  = (2u[1] - 2u[0])/dx^2 - 2 g0/dx
    u[nx+1] = u[nx-1] + 2 dx gb  ->  D2u[nx] = (2u[nx-1] - 2u[nx])/dx^2 + 2 gb/dx
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded


def second_diff(u: np.ndarray, dx: float, g0t: float = 0.0, gbt: float = 0.0) -> np.ndarray:
    d2 = np.empty_like(u)
    d2[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (dx * dx)
    d2[0] = (2.0 * u[1] - 2.0 * u[0]) / (dx * dx) - 2.0 * g0t / dx
    d2[-1] = (2.0 * u[-2] - 2.0 * u[-1]) / (dx * dx) + 2.0 * gbt / dx
    return d2


def centered_gradient(u: np.ndarray, dx: float, g0t: float = 0.0, gbt: float = 0.0) -> np.ndarray:
    """Centered interior gradient; boundary entries carry the imposed data."""
    du = np.empty_like(u)
    du[1:-1] = (u[2:] - u[:-2]) / (2.0 * dx)
    du[0] = g0t
    du[-1] = gbt
    return du


def one_sided_gradient(u: np.ndarray, dx: float) -> np.ndarray:
    """Centered interior, second-order one-sided at both ends (no boundary data)."""
    du = np.empty_like(u)
    du[1:-1] = (u[2:] - u[:-2]) / (2.0 * dx)
    du[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * dx)
    du[-1] = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * dx)
    return du


def implicit_diffusion_banded(a: np.ndarray, dx: float, dt: float) -> np.ndarray:
    """Banded form of A = I - dt * diag(a) * L with ghost-node Neumann closure.

    a is the diffusion coefficient per node (>= 0).  Rows 0 and nx fold the
    ghost node into a doubled off-diagonal; the boundary-data constants go
    to the right-hand side, not the matrix.
    """
    n = len(a)
    r = dt / (dx * dx)
    ab = np.zeros((3, n))
    ab[1, :] = 1.0 + 2.0 * r * a          # diagonal
    ab[0, 1:] = -r * a[:-1]               # superdiagonal, row i entry (i, i+1)
    ab[2, :-1] = -r * a[1:]               # subdiagonal, row i entry (i, i-1)
    ab[0, 1] = -2.0 * r * a[0]
    ab[2, -2] = -2.0 * r * a[-1]
    return ab


def solve_implicit(ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return solve_banded((1, 1), ab, rhs)


def quadratic_interp(x_nodes: np.ndarray, values: np.ndarray, x: float) -> float:
    """3-point Lagrange interpolation; exact for quadratics."""
    n = len(x_nodes)
    dx = x_nodes[1] - x_nodes[0]
    i = int(np.clip(round((x - x_nodes[0]) / dx), 1, n - 2))
    xm, x0, xp = x_nodes[i - 1], x_nodes[i], x_nodes[i + 1]
    vm, v0, vp = values[i - 1], values[i], values[i + 1]
    return (vm * (x - x0) * (x - xp) / ((xm - x0) * (xm - xp))
            + v0 * (x - xm) * (x - xp) / ((x0 - xm) * (x0 - xp))
            + vp * (x - xm) * (x - x0) / ((xp - xm) * (xp - x0)))
