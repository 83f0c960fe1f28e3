"""Euler-Maruyama simulation of the four-dimensional controlled system."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import lambertw

from . import formulas as F
from . import kernels, rng
from ._accel import resolve_backend
from .errors import (DegenerateDenominator, InvalidState, NumericalOverflow, UnsupportedExponent,
                     ValidationError)
from .model import INTERNAL_ORDER, Controls, ModelParams, StateVector, drift_internal

CONTROL_MODES = ("fixed", "optimal_feedback", "schedule")


@dataclass(frozen=True)
class SimConfig:
    t_end: float = 1.0
    n_steps: int = 1000
    n_replicates: int = 100
    seed: int = 20210101
    state_floor: float = 1e-8
    control_mode: str = "fixed"
    fixed_controls: Controls = Controls(1.0, 0.674)
    # rows of (t, e, v), linearly interpolated, held flat outside the table
    schedule: tuple = ()
    t_start: float = 0.0
    denom_eps: float = 1e-12

    def __post_init__(self):
        errs = []
        if not (isinstance(self.n_steps, int) and self.n_steps >= 1):
            errs.append("n_steps must be an integer >= 1")
        if not (isinstance(self.n_replicates, int) and self.n_replicates >= 1):
            errs.append("n_replicates must be an integer >= 1")
        if not (math.isfinite(self.t_end) and self.t_end > self.t_start):
            errs.append("t_end must be > t_start")
        if not (self.state_floor > 0):
            errs.append("state_floor must be > 0")
        if self.control_mode not in CONTROL_MODES:
            errs.append(f"control_mode must be one of {CONTROL_MODES}")
        if self.control_mode == "schedule":
            tab = np.asarray(self.schedule, dtype=float).reshape(-1, 3) if len(self.schedule) else None
            if tab is None or np.any(np.diff(tab[:, 0]) <= 0):
                errs.append("schedule needs rows (t, e, v) with increasing t")
            elif np.any((tab[:, 1:] < 0) | (tab[:, 1:] > 1)):
                errs.append("schedule controls must lie in [0,1]")
        try:
            rng.split_seed(self.seed)
        except (TypeError, ValueError) as exc:
            errs.append(str(exc))
        if errs:
            raise ValidationError("; ".join(errs))

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    def times(self) -> np.ndarray:
        return self.t_start + np.arange(self.n_steps + 1) * self.dt


@dataclass
class SimPath:
    times: np.ndarray
    states: np.ndarray  # (n_steps + 1, 4), internal order
    controls: np.ndarray  # (n_steps, 2): (e, v) applied over each step
    clamp_events: int
    replicate_index: int
    terminal_controls: np.ndarray = field(default_factory=lambda: np.full(2, np.nan))

    def state(self, k: int) -> StateVector:
        return StateVector.from_array(self.states[k])

    def column(self, name: str) -> np.ndarray:
        return self.states[:, INTERNAL_ORDER.index(name)]


@dataclass
class Ensemble:
    states: np.ndarray  # (n_replicates, n_steps + 1, 4)
    controls: np.ndarray  # (n_replicates, n_steps + 1, 2), last row is feedback at t_end
    clamp_events: np.ndarray
    replicate_indices: np.ndarray
    config: SimConfig
    params: ModelParams
    x0: StateVector
    backend: str = "numba"

    @property
    def times(self) -> np.ndarray:
        return self.config.times()

    def path(self, j: int) -> SimPath:
        return SimPath(self.times, self.states[j], self.controls[j, :-1], int(self.clamp_events[j]),
                       int(self.replicate_indices[j]), self.controls[j, -1].copy())

    @property
    def paths(self) -> list[SimPath]:
        return [self.path(j) for j in range(self.states.shape[0])]


@dataclass
class EnsembleStats:
    times: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    sup_moment: float
    c0: float


def _x0_array(x0, floor: float) -> np.ndarray:
    x = x0.as_array() if isinstance(x0, StateVector) else np.asarray(x0, dtype=np.float64)
    if x.shape != (4,) or not np.all(np.isfinite(x)):
        raise InvalidState(f"x0 must be 4 finite components, got {x}")
    if np.any(x < floor):
        raise InvalidState(f"x0 components must be >= state_floor={floor}, got {x.tolist()}")
    return x


def step_euler_maruyama(t: float, state, u, params: ModelParams, dt: float, dW: Sequence[float],
                        state_floor: float = 1e-8) -> tuple[StateVector, int]:
    """One step X' = X + mu dt + sigma dW in internal order, then floor-clamped.

    ``dW`` is in internal order ``(beta, S, I, R)`` and already scaled by sqrt(dt).
    Returns the new state and the number of clamped components.
    """
    if not dt > 0:
        raise ValidationError("dt must be > 0")
    x = state.as_array() if isinstance(state, StateVector) else np.asarray(state, dtype=np.float64)
    p = params.pack()
    d = drift_internal(t, x, u, params, packed=p)
    g = np.array(F.diffusion_f(x[0], x[1], x[2], x[3], p))
    xn = x + d * dt + g * np.asarray(dW, dtype=np.float64)
    if not np.all(np.isfinite(xn)):
        raise NumericalOverflow(f"non-finite state after step at t={t}", t=t, state=x.tolist(),
                                component=int(np.argmin(np.isfinite(xn))))
    low = xn < state_floor
    xn[low] = state_floor
    return StateVector.from_array(xn), int(low.sum())


def _run_kernel(params: ModelParams, config: SimConfig, x0, reps: np.ndarray, backend: str | None):
    backend = resolve_backend(backend)
    x = _x0_array(x0, config.state_floor)
    mode = CONTROL_MODES.index(config.control_mode)
    if mode == kernels.MODE_FEEDBACK and (params.theta1 != 2 or params.theta2 != 2):
        raise UnsupportedExponent("optimal feedback needs theta1 == theta2 == 2")
    if mode == kernels.MODE_SCHEDULE:
        tab = np.asarray(config.schedule, dtype=np.float64).reshape(-1, 3)
        sched_t, sched_e, sched_v = (np.ascontiguousarray(tab[:, c]) for c in range(3))
    else:
        sched_t = sched_e = sched_v = np.zeros(1)
    k0, k1 = rng.split_seed(config.seed)
    tt, tv = params.temperature_table()
    fn = kernels.simulate_numba if backend == "numba" else kernels.simulate_numpy
    out = fn(x, float(config.t_start), float(config.dt), int(config.n_steps),
             np.ascontiguousarray(reps, dtype=np.int64), np.uint64(k0), np.uint64(k1), params.pack(),
             tt, tv, mode, float(config.fixed_controls.e_lock), float(config.fixed_controls.v_vacc),
             sched_t, sched_e, sched_v, float(config.state_floor), float(config.denom_eps))
    states, controls, clamps, status = out
    failed = np.flatnonzero(status[:, 0])
    if failed.size:
        j = int(failed[np.argmin(reps[failed])])
        code, step, comp = (int(c) for c in status[j])
        t = config.t_start + step * config.dt
        where = f"replicate {int(reps[j])}, step {step} (t={t:.6g})"
        if code == kernels.OVERFLOW:
            raise NumericalOverflow(f"non-finite {INTERNAL_ORDER[comp]} at {where}", component=comp,
                                    t=t, step=step, replicate=int(reps[j]),
                                    state=states[j, step].tolist())
        name = "A1+A2" if code == kernels.DEGENERATE_E else "B1-B2"
        exc = DegenerateDenominator(name, float("nan"))
        exc.args = (f"degenerate {name} at {where}",)
        exc.step, exc.replicate = step, int(reps[j])
        raise exc
    return states, controls, clamps, backend


def simulate_path(params: ModelParams, config: SimConfig, x0, replicate_index: int = 0,
                  backend: str | None = None) -> SimPath:
    reps = np.array([replicate_index], dtype=np.int64)
    states, controls, clamps, _ = _run_kernel(params, config, x0, reps, backend)
    return SimPath(config.times(), states[0], controls[0, :-1], int(clamps[0]), int(replicate_index),
                   controls[0, -1].copy())


def simulate_ensemble(params: ModelParams, config: SimConfig, x0, backend: str | None = None,
                      replicate_indices: Sequence[int] | None = None) -> Ensemble:
    """Simulate ``config.n_replicates`` paths; replicate ``i`` depends only on ``(seed, i)``.

    ``replicate_indices`` overrides which replicates are run (and in what order).
    """
    if replicate_indices is None:
        reps = np.arange(config.n_replicates, dtype=np.int64)
    else:
        reps = np.asarray(replicate_indices, dtype=np.int64)
    x = _x0_array(x0, config.state_floor)
    states, controls, clamps, used = _run_kernel(params, config, x, reps, backend)
    return Ensemble(states, controls, clamps, reps, config, params, StateVector.from_array(x), used)


def fit_c0(sup_moment: float, x0_norm2: float, horizon: float) -> float:
    """Smallest c0 with sup_moment <= c0 (1 + |x0|^2) exp(c0 * horizon)."""
    if not (math.isfinite(sup_moment) and sup_moment >= 0):
        raise ValueError(f"sup_moment must be finite and >= 0, got {sup_moment}")
    y = sup_moment / (1.0 + x0_norm2)
    if horizon <= 0:
        return y
    # c e^{c t} = y  <=>  (c t) e^{c t} = y t
    return float(lambertw(y * horizon).real / horizon)


def ensemble_stats(ens: Ensemble) -> EnsembleStats:
    x = ens.states
    if x.shape[0] == 0:
        raise ValidationError("empty ensemble")
    sq = np.einsum("rtk,rtk->rt", x, x)
    sup_moment = float(np.mean(sq.max(axis=1)))
    x0n = float(np.dot(x[0, 0], x[0, 0]))
    horizon = ens.config.t_end - ens.config.t_start
    # extended-precision accumulation keeps identical rows (e.g. t = 0) exact
    mean = x.mean(axis=0, dtype=np.longdouble).astype(float)
    return EnsembleStats(ens.times, mean, x.std(axis=0), sup_moment,
                         fit_c0(sup_moment, x0n, horizon))



def estimate_cost(ens: Ensemble) -> tuple[float, float]:
    """Monte Carlo estimate of the discounted cost over the horizon.

    Each path's integral uses a left-point rule, matching controls that are
    held constant over each step. Returns (mean, standard error).
    """
    x = ens.states
    u = ens.controls
    t = ens.times
    p = ens.params.pack()
    vals = F.cost_f(t[None, :-1], x[:, :-1, 0], x[:, :-1, 1], x[:, :-1, 2], x[:, :-1, 3],
                    u[:, :-1, 0], u[:, :-1, 1], p)
    per_path = vals.sum(axis=1) * ens.config.dt
    n = per_path.size
    se = float(per_path.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(per_path.mean()), se


# ------------------------------------------------------------ generic driver

def brownian_increments(seed: int, n_replicates: int, n_steps: int, dim: int, dt: float,
                        substeps: int = 1, replicate_offset: int = 0,
                        stream: int = rng.STREAM_SDE) -> np.ndarray:
    """Increments of shape (n_replicates, n_steps, dim) over steps of size ``dt``.

    Each step aggregates ``substeps`` finer increments, so runs with
    ``(n, substeps=2)`` and ``(2n, substeps=1)`` share one Brownian path.
    """
    reps = np.arange(replicate_offset, replicate_offset + n_replicates, dtype=np.int64)
    fine = n_steps * substeps
    z = rng.normals(seed, reps[:, None], np.arange(fine)[None, :], dim, stream=stream)
    z = z.reshape(n_replicates, n_steps, substeps, dim).sum(axis=2)
    return z * math.sqrt(dt / substeps)


def euler_maruyama(drift: Callable, diffusion: Callable, x0, dW: np.ndarray, dt: float,
                   t_start: float = 0.0, floor: float | None = None) -> np.ndarray:
    """Vectorised EM for diagonal-noise SDEs.

    ``drift(t, X)`` and ``diffusion(t, X)`` map (R, d) arrays to (R, d).
    Returns the full path array of shape (R, n_steps + 1, d).
    """
    n_rep, n_steps, dim = dW.shape
    out = np.empty((n_rep, n_steps + 1, dim))
    x = np.broadcast_to(np.asarray(x0, dtype=np.float64), (n_rep, dim)).copy()
    out[:, 0] = x
    for k in range(n_steps):
        t = t_start + k * dt
        x = x + drift(t, x) * dt + diffusion(t, x) * dW[:, k]
        if floor is not None:
            np.maximum(x, floor, out=x)
        out[:, k + 1] = x
    return out
