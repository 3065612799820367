"""Discrete two-sided reflection on [0, b] with exact local-time bookkeeping.

One projection (clamp) per step: the tentative move y = x + dz is pushed
back to the nearest barrier and the push is booked in the lower (L) or
upper (U) local time.  Exactly one of dL, dU is nonzero per step, the
state sits exactly on the barrier whenever a push occurred, and the
discrete complementarity sums X.dL and (b - X).dU vanish identically.
Valid in the small-increment regime |dz| <= b; larger increments are
clamped once and counted in a diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BarrierError(ValueError):
    """State outside [0, b]."""


@dataclass(frozen=True)
class ReflectedPath:
    """A reflected path with its local times.

    x[k] is the state after step k; dl[k], du[k] are the pushes applied
    during step k (dl[0] = du[0] = 0), and l, u their running sums.
    """

    times: np.ndarray
    x: np.ndarray
    dl: np.ndarray
    du: np.ndarray
    l: np.ndarray
    u: np.ndarray
    b: float
    oversize_steps: int = 0       # steps with |dz| > b (clamped once)

    def __len__(self):
        return len(self.x)


def reflect_step(x_prev: float, dz: float, b: float):
    """One clamp step: returns (x_new, dl, du).

    y = x_prev + dz lands at 0 (resp. b) with dl = -y (resp. du = y - b)
    when it overshoots; ties y == 0 or y == b need no push.
    """
    if not (0.0 <= x_prev <= b):
        raise BarrierError(f"state {x_prev} outside [0, {b}]")
    y = x_prev + dz
    if y < 0.0:
        return 0.0, -y, 0.0
    if y > b:
        return b, 0.0, y - b
    return y, 0.0, 0.0


def reflect_path(x0: float, increments, b: float, times=None) -> ReflectedPath:
    """Fold reflect_step over a sequence of free increments."""
    dz = np.asarray(increments, dtype=float)
    n = len(dz)
    if times is None:
        times = np.arange(n + 1, dtype=float)
    else:
        times = np.asarray(times, dtype=float)
        if len(times) != n + 1:
            raise ValueError(f"need {n + 1} times for {n} increments, got {len(times)}")
    x = np.empty(n + 1)
    dl = np.zeros(n + 1)
    du = np.zeros(n + 1)
    x[0] = x0
    if not (0.0 <= x0 <= b):
        raise BarrierError(f"state {x0} outside [0, {b}]")
    for k in range(n):
        x[k + 1], dl[k + 1], du[k + 1] = reflect_step(x[k], dz[k], b)
    return ReflectedPath(
        times=times, x=x, dl=dl, du=du,
        l=np.cumsum(dl), u=np.cumsum(du), b=b,
        oversize_steps=int(np.count_nonzero(np.abs(dz) > b)),
    )


def reflect_paths_bulk(x0, increments: np.ndarray, b: float):
    """Clamp scheme applied to many paths at once.

    increments has shape (npaths, nsteps); x0 is a scalar or (npaths,).
    Returns (x, dl, du, oversize) with x of shape (npaths, nsteps + 1).
    Step-for-step identical to folding reflect_step per path.
    """
    dz = np.asarray(increments, dtype=float)
    npaths, n = dz.shape
    x = np.empty((npaths, n + 1))
    dl = np.zeros((npaths, n + 1))
    du = np.zeros((npaths, n + 1))
    x[:, 0] = x0
    if np.any(x[:, 0] < 0.0) or np.any(x[:, 0] > b):
        raise BarrierError(f"initial states outside [0, {b}]")
    for k in range(n):
        y = x[:, k] + dz[:, k]
        low = y < 0.0
        high = y > b
        dl[:, k + 1] = np.where(low, -y, 0.0)
        du[:, k + 1] = np.where(high, y - b, 0.0)
        x[:, k + 1] = np.where(low, 0.0, np.where(high, b, y))
    oversize = int(np.count_nonzero(np.abs(dz) > b))
    return x, dl, du, oversize
