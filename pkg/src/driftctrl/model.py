"""Problem data for drift control of a diffusion reflected on [0, b].

A Scenario bundles the coefficient functions (drift beta, volatility
loadings sigma / sigma_bar, running cost f, boundary cost traces g0 / gb,
terminal cost), the control set and the declared coefficient bounds.
Coefficients may depend on the current value w of the driving Wiener
process W ("w-markovian" mode) or ignore it ("deterministic" mode).
This module also builds uniform grids, samples the standing assumptions
(uniform ellipticity of sigma_bar, boundedness, drift Lipschitz bound),
and constructs the linear boundary lift that turns inhomogeneous Neumann
data into a homogeneous problem.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.stats import qmc


class ParameterError(ValueError):
    """Rejected problem parameters (bad grid sizes, empty control sets, ...)."""


DETERMINISTIC = "deterministic"
W_MARKOVIAN = "w-markovian"


@dataclass(frozen=True)
class Grid:
    """Uniform discretization of [0, T] x [0, b]."""

    b: float
    nx: int
    T: float
    nt: int

    @property
    def dx(self) -> float:
        return self.b / self.nx

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def x_nodes(self) -> np.ndarray:
        # linspace pins both endpoints exactly
        return np.linspace(0.0, self.b, self.nx + 1)

    @property
    def t_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt + 1)

    def refined(self, factor_x: int = 2, factor_t: int = 4) -> "Grid":
        return Grid(self.b, self.nx * factor_x, self.T, self.nt * factor_t)


def build_grid(b: float, nx: int, T: float, nt: int) -> Grid:
    """Uniform grid with nodes x_i = i*b/nx, t_k = k*T/nt."""
    if not (b > 0.0) or not (T > 0.0):
        raise ParameterError(f"barrier and horizon must be positive, got b={b}, T={T}")
    if nx < 2:
        raise ParameterError(f"need at least 2 spatial cells, got nx={nx}")
    if nt < 1:
        raise ParameterError(f"need at least 1 time step, got nt={nt}")
    return Grid(float(b), int(nx), float(T), int(nt))


@dataclass(frozen=True)
class ControlSet:
    """Admissible scalar controls: an explicit list or a gridded interval."""

    kind: str                      # "finite_list" | "interval"
    values: tuple = ()             # finite_list only
    lo: float = 0.0                # interval only
    hi: float = 0.0
    n_theta: int = 0

    @classmethod
    def finite(cls, values) -> "ControlSet":
        vals = tuple(float(v) for v in values)
        if not vals:
            raise ParameterError("control set must be nonempty")
        return cls(kind="finite_list", values=tuple(sorted(vals)))

    @classmethod
    def interval(cls, lo: float, hi: float, n_theta: int) -> "ControlSet":
        if hi < lo:
            raise ParameterError(f"interval control set needs lo <= hi, got [{lo}, {hi}]")
        if n_theta < 2:
            raise ParameterError(f"interval control set needs n_theta >= 2, got {n_theta}")
        return cls(kind="interval", lo=float(lo), hi=float(hi), n_theta=int(n_theta))

    def candidates(self) -> np.ndarray:
        """Ascending control values scanned during Hamiltonian minimization."""
        if self.kind == "finite_list":
            return np.asarray(self.values, dtype=float)
        return np.linspace(self.lo, self.hi, self.n_theta)

    def contains(self, theta: float, tol: float = 1e-12) -> bool:
        if self.kind == "finite_list":
            return bool(np.min(np.abs(np.asarray(self.values) - theta)) <= tol)
        return self.lo - tol <= theta <= self.hi + tol


@dataclass(frozen=True)
class Scenario:
    """Full problem datum.

    Coefficient signatures (x may be an ndarray, w a float):
        beta(t, x, theta, w), sigma(t, x, w), sigma_bar(t, x, w),
        f(t, x, theta, w), g0(t), gb(t), terminal(x, w).
    In deterministic mode every coefficient must ignore w.  The boundary
    traces g0, gb are deterministic functions of time in both modes.
    """

    name: str
    b: float
    T: float
    beta: Callable
    sigma: Callable
    sigma_bar: Callable
    f: Callable
    g0: Callable
    gb: Callable
    terminal: Callable
    theta_set: ControlSet
    kappa: float
    k_bound: float
    lambda_bound: float
    coefficient_mode: str = DETERMINISTIC

    def __post_init__(self):
        if self.coefficient_mode not in (DETERMINISTIC, W_MARKOVIAN):
            raise ParameterError(f"unknown coefficient mode {self.coefficient_mode!r}")
        if not (self.kappa > 0.0):
            raise ParameterError("ellipticity floor kappa must be positive")

    @property
    def is_deterministic(self) -> bool:
        return self.coefficient_mode == DETERMINISTIC

    def with_running_cost(self, f, name=None) -> "Scenario":
        return replace(self, f=f, name=name or self.name)


@dataclass(frozen=True)
class ValidationReport:
    """Sampled extrema of the standing assumptions."""

    kappa_hat: float        # min of sigma_bar^2 over samples
    k_hat: float            # max of |sigma|, |sigma_bar| and their difference quotients
    lambda_hat: float       # max sampled |d beta / dx|
    kappa: float
    k_bound: float
    lambda_bound: float
    n_samples: int
    pass_a1: bool
    pass_a2: bool

    @property
    def all_pass(self) -> bool:
        return self.pass_a1 and self.pass_a2


def validate_scenario(s: Scenario, n_samples: int, seed: int) -> ValidationReport:
    """Sample (t, x, w, theta) quasi-randomly and report assumption extrema.

    Pure function of (scenario, n_samples, seed).  w is drawn from
    [-3 sqrt(T), 3 sqrt(T)]; spatial difference quotients use a centered
    step of 1e-5 * b (shifted one-sided at the barriers).
    """
    if n_samples < 1:
        raise ParameterError("n_samples must be >= 1")
    sampler = qmc.Halton(d=4, scramble=True, seed=seed)
    pts = sampler.random(n_samples)
    t = pts[:, 0] * s.T
    x = pts[:, 1] * s.b
    w = (2.0 * pts[:, 2] - 1.0) * 3.0 * math.sqrt(s.T)
    cand = s.theta_set.candidates()
    theta = cand[np.minimum((pts[:, 3] * len(cand)).astype(int), len(cand) - 1)]

    h = 1e-5 * s.b
    xm = np.clip(x - h, 0.0, s.b)
    xp = np.clip(x + h, 0.0, s.b)
    denom = xp - xm

    kappa_hat = math.inf
    k_hat = 0.0
    lambda_hat = 0.0
    for i in range(n_samples):
        sb = float(s.sigma_bar(t[i], x[i], w[i]))
        sg = float(s.sigma(t[i], x[i], w[i]))
        dsb = (float(s.sigma_bar(t[i], xp[i], w[i])) - float(s.sigma_bar(t[i], xm[i], w[i]))) / denom[i]
        dsg = (float(s.sigma(t[i], xp[i], w[i])) - float(s.sigma(t[i], xm[i], w[i]))) / denom[i]
        dbe = (float(s.beta(t[i], xp[i], theta[i], w[i])) - float(s.beta(t[i], xm[i], theta[i], w[i]))) / denom[i]
        kappa_hat = min(kappa_hat, sb * sb)
        k_hat = max(k_hat, abs(sb), abs(sg), abs(dsb), abs(dsg))
        lambda_hat = max(lambda_hat, abs(dbe))

    pass_a1 = kappa_hat >= s.kappa > 0.0
    pass_a2 = (k_hat <= s.k_bound) and (lambda_hat <= s.lambda_bound)
    return ValidationReport(
        kappa_hat=kappa_hat, k_hat=k_hat, lambda_hat=lambda_hat,
        kappa=s.kappa, k_bound=s.k_bound, lambda_bound=s.lambda_bound,
        n_samples=n_samples, pass_a1=pass_a1, pass_a2=pass_a2,
    )


@dataclass(frozen=True)
class BoundaryLift:
    """Linear-in-x interpolant of the boundary traces and its antiderivative.

    g(t, x)        = g0(t) + (gb(t) - g0(t)) * x / b
    ghat(t, x)     = g0(t) * x + (gb(t) - g0(t)) * x^2 / (2b),  ghat(t, 0) = 0
    dghat_dt(t, x) = time derivative of ghat (g deterministic)
    """

    b: float
    T: float
    g0: Callable
    gb: Callable

    def g(self, t, x):
        lo = self.g0(t)
        return lo + (self.gb(t) - lo) * np.asarray(x) / self.b

    def dg_dx(self, t):
        # constant in x at each t
        return (self.gb(t) - self.g0(t)) / self.b

    def ghat(self, t, x):
        x = np.asarray(x)
        return self.g0(t) * x + (self.gb(t) - self.g0(t)) * x * x / (2.0 * self.b)

    def dghat_dt(self, t, x):
        # centered difference in t, one-sided at the horizon endpoints
        h = 1e-6 * max(self.T, 1.0)
        t0, t1 = max(t - h, 0.0), min(t + h, self.T)
        if t1 <= t0:
            return np.zeros_like(np.asarray(x, dtype=float))
        x = np.asarray(x)
        up = self.g0(t1) * x + (self.gb(t1) - self.g0(t1)) * x * x / (2.0 * self.b)
        dn = self.g0(t0) * x + (self.gb(t0) - self.g0(t0)) * x * x / (2.0 * self.b)
        return (up - dn) / (t1 - t0)


def lift_boundary(g0: Callable, gb: Callable, grid: Grid) -> BoundaryLift:
    """Lift deterministic Neumann traces to the linear interpolant pair."""
    return BoundaryLift(b=grid.b, T=grid.T, g0=g0, gb=gb)


# ---------------------------------------------------------------------------
# built-in scenarios
# ---------------------------------------------------------------------------

def _const(c):
    return lambda t: c


def zero_scenario(b: float = 1.0, T: float = 1.0) -> Scenario:
    """Zero costs and drift; unit sigma_bar keeps the operator elliptic."""
    return Scenario(
        name="zero", b=b, T=T,
        beta=lambda t, x, th, w: np.zeros_like(np.asarray(x, dtype=float)),
        sigma=lambda t, x, w: np.zeros_like(np.asarray(x, dtype=float)),
        sigma_bar=lambda t, x, w: np.ones_like(np.asarray(x, dtype=float)),
        f=lambda t, x, th, w: np.zeros_like(np.asarray(x, dtype=float)),
        g0=_const(0.0), gb=_const(0.0),
        terminal=lambda x, w: np.zeros_like(np.asarray(x, dtype=float)),
        theta_set=ControlSet.finite([0.0]),
        kappa=0.5, k_bound=2.0, lambda_bound=1.0,
    )


def heat_eigen_scenario(b: float = 1.0, T: float = 0.5, a: float = 1.0) -> Scenario:
    """Pure diffusion with terminal cos(pi x / b); closed-form solution
    u(t, x) = exp(-a^2 pi^2 (T - t) / (2 b^2)) cos(pi x / b)."""
    return Scenario(
        name="heat_eigen", b=b, T=T,
        beta=lambda t, x, th, w: np.zeros_like(np.asarray(x, dtype=float)),
        sigma=lambda t, x, w: np.zeros_like(np.asarray(x, dtype=float)),
        sigma_bar=lambda t, x, w: a * np.ones_like(np.asarray(x, dtype=float)),
        f=lambda t, x, th, w: np.zeros_like(np.asarray(x, dtype=float)),
        g0=_const(0.0), gb=_const(0.0),
        terminal=lambda x, w: np.cos(np.pi * np.asarray(x) / b),
        theta_set=ControlSet.finite([0.0]),
        kappa=0.5 * a * a, k_bound=2.0 * a, lambda_bound=1.0,
    )


def example21_scenario(b: float = 1.0, T: float = 1.0, mu: float = 0.3,
                       p: float = 1.0, h: Callable | None = None) -> Scenario:
    """Bang-bang drift control: theta in [-1, 0], beta = theta,
    f = mu |theta| + h(x), boundary traces (0, p), terminal p x^2 / (2b).

    The running cost is affine in theta on [-1, 0], so the 2-point
    endpoint grid evaluates the Hamiltonian -(v - mu)^+ + h exactly.
    """
    hx = h if h is not None else (lambda t, x: np.zeros_like(np.asarray(x, dtype=float)))
    return Scenario(
        name="example21", b=b, T=T,
        beta=lambda t, x, th, w: th * np.ones_like(np.asarray(x, dtype=float)),
        sigma=lambda t, x, w: 0.2 * np.asarray(x) * (b - np.asarray(x)) / b,
        sigma_bar=lambda t, x, w: 0.5 * np.ones_like(np.asarray(x, dtype=float)),
        f=lambda t, x, th, w: mu * abs(th) + hx(t, x),
        g0=_const(0.0), gb=_const(p),
        terminal=lambda x, w: p * np.asarray(x) ** 2 / (2.0 * b),
        theta_set=ControlSet.interval(-1.0, 0.0, 2),
        kappa=0.2, k_bound=1.0, lambda_bound=1.0,
    )


BUILTIN_SCENARIOS = {
    "zero": zero_scenario,
    "heat_eigen": heat_eigen_scenario,
    "example21": example21_scenario,
}

_DEFAULT_GRIDS = {
    "zero": dict(nx=50, nt=100),
    "heat_eigen": dict(nx=200, nt=400),
    "example21": dict(nx=100, nt=400),
}


def _builtin(name: str, **params) -> tuple[Scenario, Grid]:
    s = BUILTIN_SCENARIOS[name](**params)
    g = _DEFAULT_GRIDS[name]
    return s, build_grid(s.b, g["nx"], s.T, g["nt"])


def load_scenario(name_or_path: str) -> tuple[Scenario, Grid]:
    """Resolve a built-in scenario name or parse a scenario config file.

    Config files are INI documents with sections [grid], [coefficients]
    (key `name` picks a built-in family, remaining numeric keys are passed
    through), and optional [control_set] and [bounds] overrides.
    """
    if name_or_path in BUILTIN_SCENARIOS:
        return _builtin(name_or_path)

    path = Path(name_or_path)
    if not path.is_file():
        raise ParameterError(f"unknown scenario {name_or_path!r}: not a built-in "
                             f"({', '.join(sorted(BUILTIN_SCENARIOS))}) and not a readable file")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(path.read_text())
    except configparser.Error as exc:
        raise ParameterError(f"cannot parse scenario file {path}: {exc}") from exc

    if "coefficients" not in parser or "name" not in parser["coefficients"]:
        raise ParameterError(f"scenario file {path} needs [coefficients] with a name key")
    coef = dict(parser["coefficients"])
    name = coef.pop("name")
    if name not in BUILTIN_SCENARIOS:
        raise ParameterError(f"scenario file {path} names unknown coefficient family {name!r}")
    params = {k: float(v) for k, v in coef.items()}

    gsec = parser["grid"] if "grid" in parser else {}
    if "b" in gsec:
        params["b"] = float(gsec["b"])
    if "T" in gsec or "t" in gsec:
        params["T"] = float(gsec.get("T", gsec.get("t")))
    s = BUILTIN_SCENARIOS[name](**params)

    if "control_set" in parser:
        cs = parser["control_set"]
        kind = cs.get("kind", "interval")
        if kind == "finite_list":
            values = [float(v) for v in cs["values"].split(",")]
            theta_set = ControlSet.finite(values)
        elif kind == "interval":
            theta_set = ControlSet.interval(float(cs["lo"]), float(cs["hi"]), int(cs.get("n", 9)))
        else:
            raise ParameterError(f"unknown control_set kind {kind!r} in {path}")
        s = replace(s, theta_set=theta_set)

    if "bounds" in parser:
        bs = parser["bounds"]
        s = replace(
            s,
            kappa=float(bs.get("kappa", s.kappa)),
            k_bound=float(bs.get("K", bs.get("k", s.k_bound))),
            lambda_bound=float(bs.get("Lambda", bs.get("lambda", s.lambda_bound))),
        )

    defaults = _DEFAULT_GRIDS[name]
    nx = int(gsec.get("nx", defaults["nx"])) if gsec else defaults["nx"]
    nt = int(gsec.get("nt", defaults["nt"])) if gsec else defaults["nt"]
    return s, build_grid(s.b, nx, s.T, nt)
