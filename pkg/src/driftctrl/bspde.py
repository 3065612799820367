"""Binomial Wiener-tree solver for backward stochastic PDEs with zero
Neumann boundary data and coefficients depending on (t, x, W_t).

The driving Wiener process is discretized as a recombining binomial tree
(steps +-sqrt(dt), probability 1/2 each), aligned with the time grid.
Node (k, j), j in {-k, -k+2, ..., k}, carries spatial vectors u and psi
with psi the exact martingale-representation density on the tree:

    ubar[k][j] = (u[k+1][j+1] + u[k+1][j-1]) / 2
    psi[k][j]  = (u[k+1][j+1] - u[k+1][j-1]) / (2 sqrt(dt))

followed by one implicit spatial step per node

    u = ubar + dt * (lam*(1/2 (sigma^2 + sigma_bar^2) D2u + sigma Dpsi)
                     + (1 - lam) D2u + source)

with zero-Neumann ghost closure; the sigma*Dpsi coupling stays explicit so
each node costs one tridiagonal solve.  lam = 1 (the default) is the
operator of interest; lam < 1 blends in a plain Laplacian as a test knob.
The semilinear solver runs Picard iteration, refreezing the nonlinearity
at the previous iterate until the (u, psi) max-norm change drops below tol.
The second driving noise never appears on the tree: solutions are adapted
to W alone and the second loading enters only through sigma_bar^2.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._fd import (centered_gradient, implicit_diffusion_banded, one_sided_gradient,
                  second_diff, solve_implicit)
from .hjb import AssumptionError
from .model import Grid, Scenario, validate_scenario


class PicardDivergenceError(RuntimeError):
    """Fixed-point iteration did not converge; carries the last residual."""

    def __init__(self, iterations: int, residual: float):
        super().__init__(f"no fixed point after {iterations} iterations, "
                         f"last (u, psi) max-norm change {residual:.3e}")
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class SemilinearSpec:
    """Nonlinearity Gamma(t, x, u, Du, D2u, psi, Dpsi, w) -> array over x,
    with the author-declared Lipschitz metadata (mu on the D2u / Dpsi
    differences, lip on the lower-order ones)."""

    gamma: Callable
    mu: float = 0.0
    lip: float = 0.0

    def __post_init__(self):
        if self.mu < 0.0 or self.lip < 0.0:
            raise ValueError("declared Lipschitz constants must be nonnegative")


@dataclass(frozen=True)
class TreeSolution:
    """(u, psi) indexed by tree node x space node.

    u[k] has shape (k+1, nx+1); row r holds node j = 2r - k, whose Wiener
    value is j*sqrt(dt).  psi[nt] is zero by convention.  source[k] is the
    realized drift source of the solved equation (sampled h, or the frozen
    nonlinearity at the fixed point), kept for the energy diagnostic.
    """

    grid: Grid
    u: tuple
    psi: tuple
    source: tuple
    lam: float = 1.0
    iterations: int = 1
    picard_deltas: tuple = ()

    @property
    def depth(self) -> int:
        return self.grid.nt

    def j_values(self, k: int) -> np.ndarray:
        return np.arange(-k, k + 1, 2)

    def w_value(self, k: int, j: int) -> float:
        return j * math.sqrt(self.grid.dt)

    def node_u(self, k: int, j: int) -> np.ndarray:
        return self.u[k][(j + k) // 2]

    def node_psi(self, k: int, j: int) -> np.ndarray:
        return self.psi[k][(j + k) // 2]

    def layer_weights(self, k: int) -> np.ndarray:
        """Probability of each node in layer k (symmetric binomial)."""
        return np.array([math.comb(k, r) for r in range(k + 1)], dtype=float) / 2.0 ** k

    def max_abs_psi(self) -> float:
        return max(float(np.max(np.abs(p))) if p.size else 0.0 for p in self.psi)


def _check_assumptions(s: Scenario):
    report = validate_scenario(s, n_samples=256, seed=0)
    if not report.pass_a1:
        raise AssumptionError(
            f"ellipticity check failed: sampled min sigma_bar^2 = {report.kappa_hat:.3g} "
            f"< kappa = {s.kappa:.3g}")


def _solve_tree(s: Scenario, grid: Grid, source_fn, lam: float):
    """Backward induction; source_fn(k, x, w) -> spatial array."""
    nt, nx = grid.nt, grid.nx
    x = grid.x_nodes
    dx, dt = grid.dx, grid.dt
    sqdt = math.sqrt(dt)
    ones = np.ones_like(x)

    u_layers = [None] * (nt + 1)
    psi_layers = [None] * (nt + 1)
    src_layers = [None] * (nt + 1)
    u_layers[nt] = np.array([np.asarray(s.terminal(x, (2 * r - nt) * sqdt)) * ones
                             for r in range(nt + 1)])
    psi_layers[nt] = np.zeros((nt + 1, nx + 1))       # unset by convention
    src_layers[nt] = np.zeros((nt + 1, nx + 1))

    for k in range(nt - 1, -1, -1):
        tk = grid.t_nodes[k]
        u_next = u_layers[k + 1]
        uk = np.empty((k + 1, nx + 1))
        pk = np.empty((k + 1, nx + 1))
        sk = np.empty((k + 1, nx + 1))
        for r in range(k + 1):
            w = (2 * r - k) * sqdt
            up = u_next[r + 1]                         # child j+1
            dn = u_next[r]                             # child j-1
            ubar = 0.5 * (up + dn)
            psi = (up - dn) / (2.0 * sqdt)
            sig = np.asarray(s.sigma(tk, x, w)) * ones
            sigb = np.asarray(s.sigma_bar(tk, x, w)) * ones
            a = lam * 0.5 * (sig * sig + sigb * sigb) + (1.0 - lam)
            src = np.asarray(source_fn(k, x, w)) * ones
            rhs = ubar + dt * (lam * sig * one_sided_gradient(psi, dx) + src)
            uk[r] = solve_implicit(implicit_diffusion_banded(a, dx, dt), rhs)
            pk[r] = psi
            sk[r] = src
        u_layers[k] = uk
        psi_layers[k] = pk
        src_layers[k] = sk

    return u_layers, psi_layers, src_layers


def solve_linear_tree(s: Scenario, h, grid: Grid, lam: float = 1.0) -> TreeSolution:
    """Backward induction for the linear equation with source h(t, x, w)."""
    _check_assumptions(s)
    if h is None:
        source_fn = lambda k, x, w: np.zeros_like(x)
    else:
        source_fn = lambda k, x, w: h(grid.t_nodes[k], x, w)
    u, psi, src = _solve_tree(s, grid, source_fn, lam)
    return TreeSolution(grid=grid, u=tuple(u), psi=tuple(psi), source=tuple(src), lam=lam)


def _freeze_nonlinearity(s: Scenario, grid: Grid, spec: SemilinearSpec,
                         u_layers, psi_layers):
    """Gamma evaluated at the previous iterate, one array per node."""
    dx = grid.dx
    sqdt = math.sqrt(grid.dt)
    x = grid.x_nodes
    frozen = []
    for k in range(grid.nt):
        tk = grid.t_nodes[k]
        rows = np.empty_like(u_layers[k])
        for r in range(k + 1):
            w = (2 * r - k) * sqdt
            u_row = u_layers[k][r]
            du = centered_gradient(u_row, dx)          # zero Neumann data
            d2u = second_diff(u_row, dx)
            psi_row = psi_layers[k][r]
            dpsi = one_sided_gradient(psi_row, dx)
            rows[r] = np.asarray(spec.gamma(tk, x, u_row, du, d2u, psi_row, dpsi, w)) \
                * np.ones_like(x)
        frozen.append(rows)
    return frozen


def solve_semilinear_tree(s: Scenario, spec: SemilinearSpec, grid: Grid,
                          tol: float = 1e-10, max_iter: int = 100,
                          lam: float = 1.0) -> TreeSolution:
    """Picard iteration: freeze (u, psi) inside Gamma, solve the linear tree,
    repeat until the max-norm change of (u, psi) over all nodes is below tol.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    _check_assumptions(s)

    zero_src = lambda k, x, w: np.zeros_like(x)
    u_prev, psi_prev, _ = _solve_tree(s, grid, zero_src, lam)
    deltas = []
    delta = math.inf
    for it in range(1, max_iter + 1):
        frozen = _freeze_nonlinearity(s, grid, spec, u_prev, psi_prev)
        source_fn = lambda k, x, w, _f=frozen: _f[k][(round(w / math.sqrt(grid.dt)) + k) // 2]
        u_cur, psi_cur, src_cur = _solve_tree(s, grid, source_fn, lam)
        delta = 0.0
        for k in range(grid.nt + 1):
            delta = max(delta, float(np.max(np.abs(u_cur[k] - u_prev[k]))))
            delta = max(delta, float(np.max(np.abs(psi_cur[k] - psi_prev[k]))))
        deltas.append(delta)
        if delta < tol:
            return TreeSolution(grid=grid, u=tuple(u_cur), psi=tuple(psi_cur),
                                source=tuple(src_cur), lam=lam, iterations=it,
                                picard_deltas=tuple(deltas))
        u_prev, psi_prev = u_cur, psi_cur
    raise PicardDivergenceError(max_iter, delta)


def energy_identity_residual(ts: TreeSolution, s: Scenario, h=None) -> np.ndarray:
    """Per-layer residual of the discrete square-norm identity

        E||u_k||^2 + sum_{j>=k} dt E||psi_j||^2
            = E||G||^2 + 2 sum_{j>=k} dt E<F_j, u_j>,

    with F the full drift of the solved equation, tree expectations over the
    binomial weights and trapezoid quadrature in space.  Exact telescoping
    leaves only the dt^2 ||F||^2 defect, so residuals are O(dt).
    """
    grid = ts.grid
    x = grid.x_nodes
    dx, dt = grid.dx, grid.dt
    nt = grid.nt
    sqdt = math.sqrt(dt)
    ones = np.ones_like(x)

    if callable(h):
        src_at = lambda k, r: np.asarray(h(grid.t_nodes[k], x, (2 * r - k) * sqdt)) * ones
    else:
        src_at = lambda k, r: ts.source[k][r]

    u_sq = np.empty(nt + 1)          # E||u_k||^2
    psi_sq = np.zeros(nt + 1)        # E||psi_k||^2 (layers 0..nt-1)
    cross = np.zeros(nt + 1)         # 2 E<F_k, u_k>
    for k in range(nt + 1):
        wts = ts.layer_weights(k)
        tk = grid.t_nodes[k]
        usq = 0.0
        psq = 0.0
        crs = 0.0
        for r in range(k + 1):
            u_row = ts.u[k][r]
            usq += wts[r] * np.trapezoid(u_row * u_row, dx=dx)
            if k < nt:
                w = (2 * r - k) * sqdt
                psi_row = ts.psi[k][r]
                psq += wts[r] * np.trapezoid(psi_row * psi_row, dx=dx)
                sig = np.asarray(s.sigma(tk, x, w)) * ones
                sigb = np.asarray(s.sigma_bar(tk, x, w)) * ones
                d2u = second_diff(u_row, dx)
                drift = (ts.lam * (0.5 * (sig * sig + sigb * sigb) * d2u
                                   + sig * one_sided_gradient(psi_row, dx))
                         + (1.0 - ts.lam) * d2u + src_at(k, r))
                crs += wts[r] * 2.0 * np.trapezoid(drift * u_row, dx=dx)
        u_sq[k] = usq
        psi_sq[k] = psq
        cross[k] = crs

    residuals = np.empty(nt + 1)
    psi_tail = 0.0
    cross_tail = 0.0
    residuals[nt] = 0.0
    for k in range(nt - 1, -1, -1):
        psi_tail += dt * psi_sq[k]
        cross_tail += dt * cross[k]
        residuals[k] = abs(u_sq[k] + psi_tail - u_sq[nt] - cross_tail)
    return residuals


def export_tree_csv(ts: TreeSolution, path) -> None:
    grid = ts.grid
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "j", "w", "x", "u", "psi"])
        for k in range(grid.nt + 1):
            for r, j in enumerate(ts.j_values(k)):
                w = ts.w_value(k, j)
                for i, xi in enumerate(grid.x_nodes):
                    writer.writerow([k, j, f"{w:.17g}", f"{xi:.17g}",
                                     f"{ts.u[k][r, i]:.17g}", f"{ts.psi[k][r, i]:.17g}"])


def export_tree_summary(ts: TreeSolution, s: Scenario, path) -> None:
    res = energy_identity_residual(ts, s)
    lines = [
        f"depth={ts.depth}",
        f"nx={ts.grid.nx}",
        f"lam={ts.lam:.17g}",
        f"iterations={ts.iterations}",
        f"max_abs_psi={ts.max_abs_psi():.17g}",
        f"max_energy_residual={float(np.max(res)):.17g}",
        f"energy_residual_t0={float(res[0]):.17g}",
    ]
    for i, d in enumerate(ts.picard_deltas):
        lines.append(f"picard_delta_{i}={d:.17g}")
    Path_text = "\n".join(lines) + "\n"
    with open(path, "w") as fh:
        fh.write(Path_text)
