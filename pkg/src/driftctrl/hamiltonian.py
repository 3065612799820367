"""Pointwise Hamiltonian: inf over controls of beta * v + f, and the
feedback policy tables built from a gradient field.

The minimum is exhaustive over the control candidates (a finite list, or
the n_theta-point grid of an interval set); ties go to the smallest
control value so policies are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Grid, Scenario


@dataclass(frozen=True)
class HamiltonianValue:
    value: float
    argmin: float
    attained: bool = True      # always true for finite / gridded control sets


@dataclass(frozen=True)
class PolicyField:
    """Minimizing control per (time node, space node)."""

    theta: np.ndarray          # shape (nt + 1, nx + 1)
    provenance: str = ""


def minimize_hamiltonian(t: float, x: float, v: float, w: float, s: Scenario) -> HamiltonianValue:
    """Exhaustive minimum of beta(t,x,theta,w) * v + f(t,x,theta,w)."""
    if not (0.0 <= x <= s.b):
        raise ValueError(f"state {x} outside [0, {s.b}]")
    best_val = np.inf
    best_theta = None
    for theta in s.theta_set.candidates():
        val = float(s.beta(t, x, theta, w)) * v + float(s.f(t, x, theta, w))
        if val < best_val:           # strict: first (smallest) candidate wins ties
            best_val = val
            best_theta = float(theta)
    return HamiltonianValue(value=best_val, argmin=best_theta)


def hamiltonian_row(t: float, x: np.ndarray, v: np.ndarray, w: float, s: Scenario):
    """Vectorized minimize_hamiltonian over a row of nodes.

    Returns (h, theta) arrays.  np.argmin picks the first minimal index,
    which with ascending candidates reproduces the smallest-theta tie-break.
    """
    cand = s.theta_set.candidates()
    vals = np.empty((len(cand), len(x)))
    for i, theta in enumerate(cand):
        vals[i] = np.broadcast_to(np.asarray(s.beta(t, x, theta, w)) * v
                                  + np.asarray(s.f(t, x, theta, w)), x.shape)
    idx = np.argmin(vals, axis=0)
    return vals[idx, np.arange(len(x))], cand[idx]


def policy_field(du: np.ndarray, s: Scenario, grid: Grid, w: float = 0.0,
                 provenance: str = "") -> PolicyField:
    """Minimizer table over the whole grid for a given gradient table."""
    du = np.asarray(du, dtype=float)
    if du.shape != (grid.nt + 1, grid.nx + 1):
        raise ValueError(f"gradient table shape {du.shape} does not match grid "
                         f"{(grid.nt + 1, grid.nx + 1)}")
    x = grid.x_nodes
    t = grid.t_nodes
    theta = np.empty_like(du)
    for k in range(grid.nt + 1):
        _, theta[k] = hamiltonian_row(t[k], x, du[k], w, s)
    return PolicyField(theta=theta, provenance=provenance)
