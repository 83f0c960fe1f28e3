"""Closed-form optimal controls, the transition-function ODE, a Feynman-Kac
Monte Carlo sampler and a drift steady-state finder."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import formulas as F
from .errors import (DegenerateDenominator, DomainError, NoConvergence, NumericalOverflow,
                     UnsupportedExponent, ValidationError)
from .model import INTERNAL_ORDER, Controls, ModelParams, StateVector, _controls, drift_internal
from .sim import brownian_increments, euler_maruyama

DENOM_EPS = 1e-12


def _positive_state(state) -> np.ndarray:
    x = state.as_array() if isinstance(state, StateVector) else np.asarray(state, dtype=np.float64)
    for name, val in zip(INTERNAL_ORDER, x):
        if not val > 0:
            raise DomainError(name, float(val))
    return x


@dataclass(frozen=True)
class GValue:
    g: float
    dg_ds: float
    grad: np.ndarray  # dg/dx_i, internal order
    hess_diag: np.ndarray  # d2g/dx_i^2; cross partials are zero


def g_value(s: float, state) -> GValue:
    """g(s, X) = sum_i [s x_i - 1 - ln x_i] with its exact partials."""
    x = _positive_state(state)
    g = float(np.sum(s * x - 1.0 - np.log(x)))
    return GValue(g, float(np.sum(x)), s - 1.0 / x, 1.0 / x**2)


def f_tilde_terms(s: float, state, u, params: ModelParams) -> dict[str, float]:
    """The six additive groups of f-tilde.

    ``drift`` is mu . dg/dX; ``diffusion`` follows ``params.gxx_sign``:
    ``printed`` -1/2 sum sigma_i (x_i - x_i*) / x_i^2 (beta paired with sigma4,
    no M), ``analytic`` the same with the sign flipped, ``quadratic`` the full
    1/2 tr(sigma^T H sigma) with the diffusion entries squared (M included).
    """
    x = _positive_state(state)
    e, v = _controls(u)
    p = params.pack()
    b, sp, ip, rp = x
    gv = g_value(s, x)
    tt, tv = params.temperature_table()
    mu = np.array(F.drift_f(s, b, sp, ip, rp, e, v, p, tt, tv))
    disc = math.exp(-params.r_disc * s)
    (a11, a12, a13), (a21, a22, a23) = params.alpha
    terms = {
        "cost": disc * (sp * (0.5 * a11 * v * v + a12 * v + a13) + ip * (0.5 * a21 * e * e + a22 * e + a23)),
        "infection": b * sp * ip,
        "g": gv.g,
        "g_s": gv.dg_ds,
        "drift": float(np.dot(mu, gv.grad)),
    }
    dev = x - params.x_star.as_array()
    sig = np.array([params.sigma[3], params.sigma[0], params.sigma[1], params.sigma[2]])
    if params.gxx_sign == "quadratic":
        entries = np.array(F.diffusion_f(b, sp, ip, rp, p))
        terms["diffusion"] = 0.5 * float(np.sum(entries**2 / x**2))
    else:
        sign = -1.0 if params.gxx_sign == "printed" else 1.0
        terms["diffusion"] = sign * 0.5 * float(np.sum(sig * dev / x**2))
    return terms


def f_tilde(s: float, state, u, params: ModelParams) -> float:
    return float(sum(f_tilde_terms(s, state, u, params).values()))


def f_tilde_control_gradient(s: float, state, u, params: ModelParams, h: float = 0.25) -> tuple[float, float]:
    """Central differences of f-tilde in (e, v).

    Differences are taken group by group so the large control-free groups
    (g and its partials near the state floor) cancel exactly. f-tilde is
    quadratic in each control when theta1 = theta2 = 2, so any ``h`` is exact
    up to rounding.
    """
    e, v = _controls(u)

    def diff(up, down):
        a = f_tilde_terms(s, state, up, params)
        b = f_tilde_terms(s, state, down, params)
        return sum(a[k] - b[k] for k in a) / (2.0 * h)

    return diff((e + h, v), (e - h, v)), diff((e, v + h), (e, v - h))


@dataclass(frozen=True)
class LockdownDiagnostics:
    a1: float
    a2: float
    a3: float
    raw_e: float
    e_opt: float
    clamped_e: bool


@dataclass(frozen=True)
class VaccinationDiagnostics:
    b1: float
    b2: float
    b3: float
    raw_v: float
    v_opt: float
    clamped_v: bool
    # the closed form presumes B1 > B2
    condition_violated: bool


@dataclass(frozen=True)
class ControlDiagnostics:
    a1: float
    a2: float
    a3: float
    b1: float
    b2: float
    b3: float
    raw_e: float
    raw_v: float
    e_opt: float
    v_opt: float
    clamped_e: bool
    clamped_v: bool
    condition_violated: bool

    @property
    def controls(self) -> Controls:
        return Controls(self.e_opt, self.v_opt)


def _clip01(x: float) -> tuple[float, bool]:
    c = min(max(x, 0.0), 1.0)
    return c, c != x


def optimal_lockdown(s: float, state, params: ModelParams, denom_eps: float = DENOM_EPS) -> LockdownDiagnostics:
    """e* = (A2 + A3) / (A1 + A2), valid for theta1 = 2."""
    if params.theta1 != 2:
        raise UnsupportedExponent(f"lock-down closed form needs theta1 == 2, got {params.theta1}")
    b, sp, ip, rp = _positive_state(state)
    a1, a2, a3 = (float(c) for c in F.lockdown_coeffs(s, b, sp, ip, rp, params.pack()))
    den = a1 + a2
    if abs(den) < denom_eps:
        raise DegenerateDenominator("A1+A2", den)
    raw = (a2 + a3) / den
    e, clamped = _clip01(raw)
    return LockdownDiagnostics(a1, a2, a3, raw, e, clamped)


def optimal_vaccination(s: float, state, params: ModelParams, denom_eps: float = DENOM_EPS) -> VaccinationDiagnostics:
    """v* = B3 / (B1 - B2), valid for theta2 = 2 and B1 > B2."""
    if params.theta2 != 2:
        raise UnsupportedExponent(f"vaccination closed form needs theta2 == 2, got {params.theta2}")
    b, sp, ip, rp = _positive_state(state)
    b1, b2, b3 = (float(c) for c in F.vaccination_coeffs(s, b, sp, ip, rp, params.pack()))
    den = b1 - b2
    if abs(den) < denom_eps:
        raise DegenerateDenominator("B1-B2", den)
    raw = b3 / den
    v, clamped = _clip01(raw)
    return VaccinationDiagnostics(b1, b2, b3, raw, v, clamped, not b1 > b2)


def optimal_controls(s: float, state, params: ModelParams, denom_eps: float = DENOM_EPS) -> ControlDiagnostics:
    lk = optimal_lockdown(s, state, params, denom_eps)
    vc = optimal_vaccination(s, state, params, denom_eps)
    return ControlDiagnostics(lk.a1, lk.a2, lk.a3, vc.b1, vc.b2, vc.b3, lk.raw_e, vc.raw_v, lk.e_opt,
                              vc.v_opt, lk.clamped_e, vc.clamped_v, vc.condition_violated)


# ------------------------------------------------------------ transition function

@dataclass(frozen=True)
class TransitionFunction:
    times: np.ndarray
    psi: np.ndarray
    psi0: float


def _sample(f: Callable, t: np.ndarray) -> np.ndarray:
    try:
        vals = np.asarray(f(t), dtype=np.float64)
        if vals.shape != t.shape:
            raise ValueError
    except (TypeError, ValueError):
        vals = np.array([float(f(float(tk))) for tk in t])
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        tk = float(t[bad[0]])
        raise NumericalOverflow(f"non-finite f-tilde sample at t={tk}", t=tk)
    return vals


def evolve_transition_function(s0: float, tau: float, psi0: float, f_path: Callable,
                               n_steps: int = 1000) -> TransitionFunction:
    """Solve dPsi/ds = -f(s) Psi on [s0, tau] as psi0 * exp(-int f).

    The integral uses Simpson's rule on every grid panel (endpoints plus
    midpoint), accumulated so Psi is available at each grid node.
    """
    if not tau > s0:
        raise ValidationError("tau must be > s0")
    if not psi0 > 0:
        raise ValidationError("psi0 must be > 0")
    if n_steps < 1:
        raise ValidationError("n_steps must be >= 1")
    t = np.linspace(s0, tau, n_steps + 1)
    h = (tau - s0) / n_steps
    mid = s0 + (np.arange(n_steps) + 0.5) * h
    fn = _sample(f_path, t)
    fm = _sample(f_path, mid)
    panels = h / 6.0 * (fn[:-1] + 4.0 * fm + fn[1:])
    integral = np.concatenate(([0.0], np.cumsum(panels)))
    return TransitionFunction(t, psi0 * np.exp(-integral), float(psi0))


def f_tilde_series(times: np.ndarray, states: np.ndarray, controls: np.ndarray,
                   params: ModelParams) -> np.ndarray:
    """f-tilde at each grid point of a path (controls row k applies at times[k])."""
    return np.array([f_tilde(float(t), x, (float(u[0]), float(u[1])), params)
                     for t, x, u in zip(times, states, controls)])


# ------------------------------------------------------------ Feynman-Kac sampler

@dataclass(frozen=True)
class MCConfig:
    n_paths: int = 2000
    n_steps: int = 100
    seed: int = 7
    state_floor: float = 1e-8
    replicate_offset: int = 0


def feynman_kac_estimate(s: float, x, tau: float, phi: Callable[[StateVector], float],
                         params: ModelParams, u, mc: MCConfig = MCConfig()) -> tuple[float, float]:
    """Monte Carlo E[phi(X(tau)) | X(s) = x] with its standard error.

    Paths are driven by the generic vectorised Euler-Maruyama driver under
    fixed controls ``u``, not by the compiled ensemble kernels.
    """
    if not tau > s:
        raise ValidationError("tau must be > s")
    e, v = _controls(u)
    x0 = x.as_array() if isinstance(x, StateVector) else np.asarray(x, dtype=np.float64)
    p = params.pack()
    tt, tv = params.temperature_table()
    dt = (tau - s) / mc.n_steps

    def drift(t, X):
        return np.stack(F.drift_f(t, X[:, 0], X[:, 1], X[:, 2], X[:, 3], e, v, p, tt, tv), axis=1)

    def diffusion(t, X):
        return np.stack(F.diffusion_f(X[:, 0], X[:, 1], X[:, 2], X[:, 3], p), axis=1)

    dW = brownian_increments(mc.seed, mc.n_paths, mc.n_steps, 4, dt, replicate_offset=mc.replicate_offset)
    with np.errstate(over="raise", invalid="raise"):
        try:
            paths = euler_maruyama(drift, diffusion, x0, dW, dt, t_start=s, floor=mc.state_floor)
        except FloatingPointError as exc:
            raise NumericalOverflow(f"Feynman-Kac paths overflowed: {exc}") from exc
    vals = np.array([float(phi(StateVector.from_array(xt))) for xt in paths[:, -1]])
    if np.all(vals == vals[0]):
        return float(vals[0]), 0.0
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))


# ------------------------------------------------------------ steady state

@dataclass(frozen=True)
class SteadyState:
    state: StateVector
    method: str
    residual: float
    iterations: int


def projected_residual(x: np.ndarray, f: np.ndarray, floor: float) -> np.ndarray:
    """Drift with components pinned at the floor and pushing downward zeroed:
    those components are stationary under the floor-clamped dynamics."""
    r = np.array(f, dtype=np.float64)
    r[(x <= floor * (1.0 + 1e-9)) & (r < 0)] = 0.0
    return r


def _rk4_clamped(x, u, params, t_end, dt, floor):
    p = params.pack()
    temp = params.temperature_table()

    def f(t, y):
        return drift_internal(t, y, u, params, packed=p, temp=temp)

    n = int(round(t_end / dt))
    for k in range(n):
        t = k * dt
        k1 = f(t, x)
        k2 = f(t + dt / 2, x + dt / 2 * k1)
        k3 = f(t + dt / 2, x + dt / 2 * k2)
        k4 = f(t + dt, x + dt * k3)
        x = np.maximum(x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4), floor)
        if not np.all(np.isfinite(x)):
            break
    return x


def find_steady_state(params: ModelParams, u, guess, *, state_floor: float = 1e-8, tol: float = 1e-8,
                      max_iter: int = 60, t_long: float = 200.0, dt_long: float = 0.01) -> SteadyState:
    """Root of the drift (autonomous part at t = 0) on the floor-clamped domain.

    Tries damped Newton with a finite-difference Jacobian from ``guess``;
    otherwise integrates the drift to ``t_long`` with clamped RK4 and polishes
    with Newton from there. The residual is :func:`projected_residual`.
    """
    e, v = _controls(u)
    p = params.pack()
    temp = params.temperature_table()

    def f(x):
        return drift_internal(0.0, x, (e, v), params, packed=p, temp=temp)

    def res(x):
        return float(np.max(np.abs(projected_residual(x, f(x), state_floor))))

    x0 = np.maximum(np.asarray(guess.as_array() if isinstance(guess, StateVector) else guess, float),
                    state_floor)
    best = [x0.copy(), res(x0)]

    def newton(x):
        x = x.copy()
        r = res(x)
        for it in range(1, max_iter + 1):
            if r <= tol:
                return x, r, it - 1
            fx = f(x)
            jac = np.empty((4, 4))
            for j in range(4):
                h = 1e-7 * max(1.0, abs(x[j]))
                xp = x.copy()
                xp[j] += h
                xm = x.copy()
                xm[j] = max(x[j] - h, 0.0)
                jac[:, j] = (f(xp) - f(xm)) / (xp[j] - xm[j])
            if not (np.all(np.isfinite(jac)) and np.all(np.isfinite(fx))):
                return x, r, it
            free = ~((x <= state_floor * (1 + 1e-9)) & (fx < 0))
            step = np.zeros(4)
            if free.any():
                sol = np.linalg.lstsq(jac[np.ix_(free, free)], -fx[free], rcond=None)[0]
                step[free] = sol
            lam = 1.0
            while lam > 1e-6:
                xn = np.maximum(x + lam * step, state_floor)
                rn = res(xn)
                if np.isfinite(rn) and rn < r:
                    break
                lam *= 0.5
            else:
                return x, r, it
            x, r = xn, rn
            if r < best[1]:
                best[0], best[1] = x.copy(), r
        return x, r, max_iter

    if best[1] <= tol:
        return SteadyState(StateVector.from_array(x0), "initial", best[1], 0)
    xn, rn, it = newton(x0)
    if rn <= tol:
        return SteadyState(StateVector.from_array(xn), "newton", rn, it)
    xl = _rk4_clamped(x0, (e, v), params, t_long, dt_long, state_floor)
    if np.all(np.isfinite(xl)):
        rl = res(xl)
        if rl < best[1]:
            best[0], best[1] = xl.copy(), rl
        if rl <= tol:
            return SteadyState(StateVector.from_array(xl), "integration", rl, int(t_long / dt_long))
        xn, rn, it = newton(xl)
        if rn <= tol:
            return SteadyState(StateVector.from_array(xn), "integration+newton", rn, it)
    raise NoConvergence("steady-state search failed", best[1], StateVector.from_array(best[0]))
