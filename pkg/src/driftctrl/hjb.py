"""Backward solver for the Neumann HJB equation with deterministic
coefficients (the martingale density vanishes, so the equation reduces to

    -du/dt = 1/2 (sigma^2 + sigma_bar^2) D2u + inf_theta {beta Du + f},
    Du(t, 0) = g0(t),  Du(t, b) = gb(t),  u(T, .) = terminal,

solved on the grid by an implicit-in-diffusion / explicit-upwind splitting),
plus strong (boundary) and weak (test-function) residual diagnostics.

Scheme, stepping back from u[k+1] to u[k]:
  * each control candidate is scored with the one-sided gradient matching
    the sign of its drift (Kushner upwinding, ghost nodes at the barriers),
    and the pointwise minimum enters explicitly;
  * the diffusion term is solved implicitly through one tridiagonal system
    per step, boundary data folded in via second-order ghost nodes;
  * coefficients are evaluated at the left endpoint t_k.
The explicit part is monotone only under dt * sup|beta| / dx <= 1, which is
checked up front.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._fd import (centered_gradient, implicit_diffusion_banded, one_sided_gradient,
                  second_diff, solve_implicit)
from .hamiltonian import PolicyField, hamiltonian_row, policy_field
from .model import Grid, Scenario, validate_scenario


class CflError(RuntimeError):
    """Explicit Hamiltonian step would not be monotone at this resolution."""


class AssumptionError(RuntimeError):
    """Sampled scenario assumptions failed where a solve requires them."""


@dataclass(frozen=True)
class SchemeInfo:
    upwind: bool
    iterations_per_step: int
    cfl_ratio: float
    drift_sup: float


@dataclass(frozen=True)
class ValueField:
    """Discrete value function with its gradient and policy tables.

    u, du have shape (nt + 1, nx + 1); du is centered at interior nodes with
    the imposed Neumann data at the barriers, and the policy table is the
    Hamiltonian minimizer of that gradient (the feedback of the verification
    theorem, defined at boundaries too).
    """

    u: np.ndarray
    du: np.ndarray
    policy: PolicyField
    grid: Grid
    scheme: SchemeInfo


def drift_sup(s: Scenario, grid: Grid) -> float:
    """sup |beta| over grid nodes and control candidates (w = 0)."""
    sup = 0.0
    x = grid.x_nodes
    for tk in grid.t_nodes:
        for theta in s.theta_set.candidates():
            sup = max(sup, float(np.max(np.abs(np.asarray(
                s.beta(tk, x, theta, 0.0)) * np.ones_like(x)))))
    return sup


def _check_cfl(s: Scenario, grid: Grid, override: bool) -> SchemeInfo:
    sup = drift_sup(s, grid)
    ratio = grid.dt * sup / grid.dx
    if ratio > 1.0 and not override:
        raise CflError(
            f"dt*sup|beta|/dx = {ratio:.3g} > 1: explicit Hamiltonian step is not "
            f"monotone; refine nt or pass override_cfl=True")
    return SchemeInfo(upwind=True, iterations_per_step=1, cfl_ratio=ratio, drift_sup=sup)


def _upwind_candidate_scores(s, tk, x, u_next, dx, g0t, gbt):
    """Upwinded beta*Du + f per control candidate, shape (ncand, nx+1)."""
    dplus = np.empty_like(u_next)
    dminus = np.empty_like(u_next)
    dplus[:-1] = (u_next[1:] - u_next[:-1]) / dx
    dplus[-1] = (u_next[-2] + 2.0 * dx * gbt - u_next[-1]) / dx     # ghost above b
    dminus[1:] = (u_next[1:] - u_next[:-1]) / dx
    dminus[0] = (u_next[0] - (u_next[1] - 2.0 * dx * g0t)) / dx     # ghost below 0
    cand = s.theta_set.candidates()
    scores = np.empty((len(cand), len(x)))
    for i, theta in enumerate(cand):
        beta = np.asarray(s.beta(tk, x, theta, 0.0)) * np.ones_like(x)
        f = np.asarray(s.f(tk, x, theta, 0.0)) * np.ones_like(x)
        scores[i] = np.maximum(beta, 0.0) * dplus + np.minimum(beta, 0.0) * dminus + f
    return scores, cand


def _backward_sweep(s: Scenario, grid: Grid, fixed_policy=None):
    """Shared stepping loop; fixed_policy pins theta per node instead of minimizing."""
    x = grid.x_nodes
    t = grid.t_nodes
    dx, dt = grid.dx, grid.dt
    nt, nx = grid.nt, grid.nx
    u = np.empty((nt + 1, nx + 1))
    u[nt] = np.asarray(s.terminal(x, 0.0)) * np.ones_like(x)
    for k in range(nt - 1, -1, -1):
        tk = t[k]
        g0t = float(s.g0(tk))
        gbt = float(s.gb(tk))
        scores, cand = _upwind_candidate_scores(s, tk, x, u[k + 1], dx, g0t, gbt)
        if fixed_policy is None:
            ham = scores.min(axis=0)
        else:
            row = np.asarray(fixed_policy[k])
            idx = np.array([int(np.argmin(np.abs(cand - th))) for th in row])
            ham = scores[idx, np.arange(nx + 1)]
        sig = np.asarray(s.sigma(tk, x, 0.0)) * np.ones_like(x)
        sigb = np.asarray(s.sigma_bar(tk, x, 0.0)) * np.ones_like(x)
        a = 0.5 * (sig * sig + sigb * sigb)
        rhs = u[k + 1] + dt * ham
        rhs[0] += dt * a[0] * (-2.0 * g0t / dx)     # ghost-node boundary data
        rhs[-1] += dt * a[-1] * (2.0 * gbt / dx)
        u[k] = solve_implicit(implicit_diffusion_banded(a, dx, dt), rhs)
    return u


def _gradient_table(s: Scenario, grid: Grid, u: np.ndarray) -> np.ndarray:
    du = np.empty_like(u)
    for k in range(grid.nt + 1):
        tk = grid.t_nodes[k]
        du[k] = centered_gradient(u[k], grid.dx, float(s.g0(tk)), float(s.gb(tk)))
    return du


def solve_hjb(s: Scenario, grid: Grid, override_cfl: bool = False) -> ValueField:
    """Backward solve from the terminal condition; see module docstring."""
    if not s.is_deterministic:
        raise AssumptionError("solve_hjb needs a deterministic-mode scenario; "
                              "use the tree solver for w-markovian coefficients")
    report = validate_scenario(s, n_samples=256, seed=0)
    if not report.pass_a1:
        raise AssumptionError(
            f"ellipticity check failed: sampled min sigma_bar^2 = {report.kappa_hat:.3g} "
            f"< kappa = {s.kappa:.3g}")
    scheme = _check_cfl(s, grid, override_cfl)
    u = _backward_sweep(s, grid)
    du = _gradient_table(s, grid, u)
    policy = policy_field(du, s, grid, provenance=f"solve_hjb:{s.name}")
    return ValueField(u=u, du=du, policy=policy, grid=grid, scheme=scheme)


def evaluate_policy(s: Scenario, grid: Grid, policy, override_cfl: bool = False) -> np.ndarray:
    """Cost table of a fixed Markov policy under the same discrete chain.

    policy is a PolicyField or an (nt, nx+1) / (nt+1, nx+1) array of controls;
    row k is used for the step t_k -> t_{k+1}.  Exact backward induction:
    together with monotonicity this dominates the minimizing solve nodewise.
    """
    theta = policy.theta if isinstance(policy, PolicyField) else np.asarray(policy)
    if theta.shape[1] != grid.nx + 1 or theta.shape[0] < grid.nt:
        raise ValueError(f"policy table shape {theta.shape} does not cover grid "
                         f"({grid.nt}+1, {grid.nx}+1)")
    _check_cfl(s, grid, override_cfl)
    return _backward_sweep(s, grid, fixed_policy=theta)


def neumann_residual(v: ValueField, s: Scenario):
    """Max deviation of the one-sided boundary gradient from the Neumann data."""
    grid = v.grid
    r0 = 0.0
    rb = 0.0
    for k in range(grid.nt + 1):
        tk = grid.t_nodes[k]
        du = one_sided_gradient(v.u[k], grid.dx)
        r0 = max(r0, abs(du[0] - float(s.g0(tk))))
        rb = max(rb, abs(du[-1] - float(s.gb(tk))))
    return r0, rb


def _sine_bumps(x: np.ndarray, b: float, n_test: int):
    """Smooth bumps compactly supported in (0, b)."""
    bumps = []
    for m in range(1, n_test + 1):
        center = b * m / (n_test + 1)
        hw = 0.9 * b / (n_test + 1)
        phi = np.where(np.abs(x - center) < hw,
                       np.sin(np.pi * (x - center + hw) / (2.0 * hw)) ** 2, 0.0)
        bumps.append(phi)
    return bumps


def weak_residual(v: ValueField, s: Scenario, n_test: int) -> float:
    """Tested integral identity at t = 0 against interior sine bumps.

    For each test function phi the discrete residual is
        <phi, u_0> - <phi, u_T> - sum_k w_k dt <phi, F_k>,
    with F the drift 1/2 (sigma^2 + sigma_bar^2) D2u + H(., Du) of the solved
    equation (martingale density identically zero here), trapezoid weights in
    both space and time.  Returns the largest residual normalized by ||phi||.
    """
    if n_test < 1:
        raise ValueError("need at least one test function")
    grid = v.grid
    x = grid.x_nodes
    dx, dt = grid.dx, grid.dt
    F = np.empty_like(v.u)
    for k in range(grid.nt + 1):
        tk = grid.t_nodes[k]
        sig = np.asarray(s.sigma(tk, x, 0.0)) * np.ones_like(x)
        sigb = np.asarray(s.sigma_bar(tk, x, 0.0)) * np.ones_like(x)
        d2 = second_diff(v.u[k], dx, float(s.g0(tk)), float(s.gb(tk)))
        ham, _ = hamiltonian_row(tk, x, v.du[k], 0.0, s)
        F[k] = 0.5 * (sig * sig + sigb * sigb) * d2 + ham
    tw = np.ones(grid.nt + 1)
    tw[0] = tw[-1] = 0.5
    worst = 0.0
    for phi in _sine_bumps(x, grid.b, n_test):
        norm = np.sqrt(np.trapezoid(phi * phi, dx=dx))
        head = np.trapezoid(phi * (v.u[0] - v.u[-1]), dx=dx)
        integral = sum(tw[k] * dt * np.trapezoid(phi * F[k], dx=dx)
                       for k in range(grid.nt + 1))
        worst = max(worst, abs(head - integral) / norm)
    return worst


def export_value_csv(v: ValueField, path) -> None:
    """Row-major (k, i) dump at full double precision."""
    grid = v.grid
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "u", "du", "theta_star"])
        for k in range(grid.nt + 1):
            tk = grid.t_nodes[k]
            for i in range(grid.nx + 1):
                writer.writerow([f"{tk:.17g}", f"{grid.x_nodes[i]:.17g}",
                                 f"{v.u[k, i]:.17g}", f"{v.du[k, i]:.17g}",
                                 f"{v.policy.theta[k, i]:.17g}"])


def read_value_csv(path) -> ValueField:
    """Rebuild a ValueField from an export; exact round-trip of the tables."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "x", "u", "du", "theta_star"]:
        raise ValueError(f"{path} is not a value-field export")
    data = np.array([[float(c) for c in row] for row in rows[1:]])
    t = np.unique(data[:, 0])
    x = np.unique(data[:, 1])
    nt, nx = len(t) - 1, len(x) - 1
    grid = Grid(b=float(x[-1]), nx=nx, T=float(t[-1]), nt=nt)
    shape = (nt + 1, nx + 1)
    u = data[:, 2].reshape(shape)
    du = data[:, 3].reshape(shape)
    theta = data[:, 4].reshape(shape)
    scheme = SchemeInfo(upwind=True, iterations_per_step=1, cfl_ratio=float("nan"),
                        drift_sup=float("nan"))
    return ValueField(u=u, du=du, policy=PolicyField(theta=theta, provenance=str(path)),
                      grid=grid, scheme=scheme)
