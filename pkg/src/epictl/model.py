"""State, parameters and the coefficient functions of the controlled system.

Internal state order is ``(beta, S, I, R)``. :func:`drift` and
:func:`diffusion` return in display order ``(S, I, R, beta)``; use
:data:`DISPLAY_TO_INTERNAL` / :data:`INTERNAL_TO_DISPLAY` to move between the
two instead of re-indexing by hand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np

from . import formulas as F
from .errors import InvalidState, NumericalOverflow, ParamValidationError

INTERNAL_ORDER = ("beta", "S", "I", "R")
DISPLAY_ORDER = ("S", "I", "R", "beta")
# display[k] == internal[DISPLAY_TO_INTERNAL[k]]
DISPLAY_TO_INTERNAL = (1, 2, 3, 0)
# internal[k] == display[INTERNAL_TO_DISPLAY[k]]
INTERNAL_TO_DISPLAY = (3, 0, 1, 2)

INCIDENCE_MODES = ("eq1", "saturated")
GXX_MODES = ("printed", "analytic", "quadratic")


@dataclass(frozen=True)
class StateVector:
    beta: float
    s_pop: float
    i_pop: float
    r_pop: float

    def as_array(self) -> np.ndarray:
        return np.array([self.beta, self.s_pop, self.i_pop, self.r_pop], dtype=np.float64)

    @classmethod
    def from_array(cls, x: Sequence[float]) -> "StateVector":
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (4,):
            raise InvalidState(f"state must have 4 components, got shape {x.shape}")
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]))

    def to_dict(self) -> dict:
        return {"beta": self.beta, "S": self.s_pop, "I": self.i_pop, "R": self.r_pop}


@dataclass(frozen=True)
class Controls:
    """Lock-down intensity ``e`` (0 = complete shut-down) and vaccination rate ``v``."""

    e_lock: float
    v_vacc: float

    def __post_init__(self):
        for name in ("e_lock", "v_vacc"):
            val = getattr(self, name)
            if not (0.0 <= val <= 1.0):
                raise InvalidState(f"{name} must lie in [0,1], got {val!r}")


TempSpec = Union[float, tuple]


@dataclass(frozen=True)
class ModelParams:
    eta: float
    kappa: float
    zeta: float
    mu: float
    rho: float
    n_pop: float
    beta0: float
    beta1: float
    beta2: float
    theta1: float
    theta2: float
    m_pm: float
    q_mod: float
    temp: TempSpec
    r_disc: float
    alpha: tuple
    sigma: tuple
    x_star: StateVector
    incidence_denominator: str = "eq1"
    gxx_sign: str = "printed"

    def pack(self) -> np.ndarray:
        p = np.zeros(F.N_PACKED, dtype=np.float64)
        p[F.ETA], p[F.KAPPA], p[F.ZETA], p[F.MU] = self.eta, self.kappa, self.zeta, self.mu
        p[F.RHO], p[F.NPOP] = self.rho, self.n_pop
        p[F.B0], p[F.B1], p[F.B2] = self.beta0, self.beta1, self.beta2
        p[F.TH1], p[F.TH2] = self.theta1, self.theta2
        p[F.MPM], p[F.QMOD], p[F.RDISC] = self.m_pm, self.q_mod, self.r_disc
        (p[F.A11], p[F.A12], p[F.A13]), (p[F.A21], p[F.A22], p[F.A23]) = self.alpha
        p[F.SIG1], p[F.SIG2], p[F.SIG3], p[F.SIG4] = self.sigma
        p[F.XB], p[F.XS], p[F.XI], p[F.XR] = self.x_star.as_array()
        p[F.ETA_N_ON] = 1.0 if self.incidence_denominator == "eq1" else 0.0
        return p

    def temperature_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Knots for piecewise-linear T(t); a constant becomes a single knot."""
        if isinstance(self.temp, (int, float)):
            return np.array([0.0]), np.array([float(self.temp)])
        knots = np.asarray(self.temp, dtype=np.float64).reshape(-1, 2)
        return knots[:, 0].copy(), knots[:, 1].copy()

    def temperature(self, t: float) -> float:
        tt, tv = self.temperature_table()
        return float(np.interp(t, tt, tv))

    def replace(self, **changes) -> "ModelParams":
        return replace(self, **changes)


def _state_array(state) -> np.ndarray:
    x = state.as_array() if isinstance(state, StateVector) else np.asarray(state, dtype=np.float64)
    if x.shape != (4,):
        raise InvalidState(f"state must have 4 components, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidState(f"non-finite state {x.tolist()}")
    return x


def _controls(u) -> tuple[float, float]:
    if isinstance(u, Controls):
        return u.e_lock, u.v_vacc
    e, v = u
    return float(e), float(v)


def incidence(state, params: ModelParams) -> float:
    """beta*S*I / ((1 + rho*I) + eta*N); the ``saturated`` mode drops eta*N."""
    b, s, i, _ = _state_array(state)
    return float(F.incidence_f(b, s, i, params.pack()))


def drift_internal(t: float, x: np.ndarray, u, params: ModelParams, packed=None, temp=None) -> np.ndarray:
    e, v = _controls(u)
    p = params.pack() if packed is None else packed
    tt, tv = params.temperature_table() if temp is None else temp
    return np.array(F.drift_f(t, x[0], x[1], x[2], x[3], e, v, p, tt, tv), dtype=np.float64)


def drift(t: float, state, u, params: ModelParams) -> np.ndarray:
    """Drift vector in display order (S, I, R, beta)."""
    x = _state_array(state)
    out = drift_internal(t, x, u, params)[list(DISPLAY_TO_INTERNAL)]
    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        k = int(bad[0])
        raise NumericalOverflow(f"non-finite drift component {DISPLAY_ORDER[k]}", component=k, t=t,
                                state=x.tolist())
    return out


def diffusion(state, params: ModelParams) -> np.ndarray:
    """Diagonal 4x4 noise matrix in display order; the beta entry carries M."""
    x = _state_array(state)
    d = np.array(F.diffusion_f(x[0], x[1], x[2], x[3], params.pack()))
    return np.diag(d[list(DISPLAY_TO_INTERNAL)])


def cost_integrand(t: float, state, u, params: ModelParams) -> float:
    x = _state_array(state)
    e, v = _controls(u)
    return float(F.cost_f(t, x[0], x[1], x[2], x[3], e, v, params.pack()))


def validate_params(params: ModelParams) -> ModelParams:
    """Return ``params`` unchanged or raise with every violated constraint listed."""
    errs: list[str] = []

    def finite(name, val):
        if not isinstance(val, (int, float)) or not math.isfinite(val):
            errs.append(f"{name} must be a finite real, got {val!r}")
            return False
        return True

    for name in ("eta", "kappa", "zeta", "mu"):
        val = getattr(params, name)
        if finite(name, val) and val < 0:
            errs.append(f"{name} must be >= 0")
    if finite("rho", params.rho) and not (0.0 < params.rho <= 1.0):
        errs.append("rho must lie in (0,1]")
    if finite("n_pop", params.n_pop) and params.n_pop <= 0:
        errs.append("n_pop must be > 0")
    for name in ("beta0", "beta1", "beta2"):
        val = getattr(params, name)
        if finite(name, val) and not (0.0 <= val <= 1.0):
            errs.append(f"{name} must lie in [0,1]")
    for name in ("theta1", "theta2"):
        val = getattr(params, name)
        if finite(name, val) and val <= 1.0:
            errs.append(f"{name} must be > 1")
    if finite("m_pm", params.m_pm) and params.m_pm <= 0:
        errs.append("m_pm must be > 0")
    finite("q_mod", params.q_mod)
    if finite("r_disc", params.r_disc) and not (0.0 < params.r_disc < 1.0):
        errs.append("r_disc must lie in (0,1)")

    alpha = np.asarray(params.alpha, dtype=object)
    if alpha.shape != (2, 3):
        errs.append(f"alpha must be a 2x3 matrix, got shape {alpha.shape}")
    else:
        for i in range(2):
            for j in range(3):
                finite(f"alpha[{i + 1}][{j + 1}]", alpha[i, j])
        for i in range(2):
            a = alpha[i, 0]
            if isinstance(a, (int, float)) and math.isfinite(a) and a <= 0:
                errs.append(f"alpha[{i + 1}][1] must be > 0")

    if len(params.sigma) != 4:
        errs.append(f"sigma must have 4 entries, got {len(params.sigma)}")
    else:
        for k, s in enumerate(params.sigma, start=1):
            if finite(f"sigma{k}", s) and s < 0:
                errs.append(f"sigma{k} must be >= 0")

    for name, val in params.x_star.to_dict().items():
        if finite(f"x_star.{name}", val) and val < 0:
            errs.append(f"x_star.{name} must be >= 0")

    if isinstance(params.temp, (int, float)):
        finite("temp", params.temp)
    else:
        try:
            knots = np.asarray(params.temp, dtype=np.float64).reshape(-1, 2)
        except (TypeError, ValueError):
            errs.append("temp must be a number or a list of [time, value] pairs")
        else:
            if knots.shape[0] == 0 or not np.all(np.isfinite(knots)):
                errs.append("temp table must be non-empty and finite")
            elif np.any(np.diff(knots[:, 0]) <= 0):
                errs.append("temp table times must be strictly increasing")

    if params.incidence_denominator not in INCIDENCE_MODES:
        errs.append(f"incidence_denominator must be one of {INCIDENCE_MODES}")
    if params.gxx_sign not in GXX_MODES:
        errs.append(f"gxx_sign must be one of {GXX_MODES}")

    if errs:
        raise ParamValidationError(errs)
    return params
