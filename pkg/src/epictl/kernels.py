"""Hot loops of the Euler-Maruyama ensemble driver, twice.

``simulate_numba`` runs replicate-parallel scalar loops under ``@njit``;
``simulate_numpy`` advances all replicates at once with array arithmetic.
Both consume the same Philox counters and the same formula source, so they
agree to rounding (libm ulps in log/cos/exp are the only divergence).

Status codes written per replicate: 0 ok, 1 non-finite state, 2 degenerate
lock-down denominator, 3 degenerate vaccination denominator. Failed
replicates stop advancing; the caller raises for the lowest failing index.
"""

from __future__ import annotations

import numpy as np

from . import formulas as F
from . import rng
from ._accel import njit, prange

MODE_FIXED = 0
MODE_FEEDBACK = 1
MODE_SCHEDULE = 2

OK, OVERFLOW, DEGENERATE_E, DEGENERATE_V = 0, 1, 2, 3

_drift = njit(cache=True)(F.drift_f)
_diffusion = njit(cache=True)(F.diffusion_f)
_lock = njit(cache=True)(F.lockdown_coeffs)
_vacc = njit(cache=True)(F.vaccination_coeffs)


@njit(cache=True, parallel=True)
def simulate_numba(x0, t0, dt, n_steps, reps, k0, k1, p, temp_t, temp_v, mode,
                   fixed_e, fixed_v, sched_t, sched_e, sched_v, floor, denom_eps):
    n_rep = reps.shape[0]
    states = np.empty((n_rep, n_steps + 1, 4))
    controls = np.empty((n_rep, n_steps + 1, 2))
    clamps = np.zeros(n_rep, dtype=np.int64)
    status = np.zeros((n_rep, 3), dtype=np.int64)
    sqdt = np.sqrt(dt)
    for j in prange(n_rep):
        rep = reps[j]
        b = x0[0]
        s = x0[1]
        i = x0[2]
        r = x0[3]
        states[j, 0, 0] = b
        states[j, 0, 1] = s
        states[j, 0, 2] = i
        states[j, 0, 3] = r
        for k in range(n_steps + 1):
            t = t0 + k * dt
            if mode == 0:
                e = fixed_e
                v = fixed_v
            elif mode == 1:
                a1, a2, a3 = _lock(t, b, s, i, r, p)
                c1, c2, c3 = _vacc(t, b, s, i, r, p)
                if abs(a1 + a2) < denom_eps:
                    status[j, 0] = 2
                    status[j, 1] = k
                    break
                if abs(c1 - c2) < denom_eps:
                    status[j, 0] = 3
                    status[j, 1] = k
                    break
                e = min(max((a2 + a3) / (a1 + a2), 0.0), 1.0)
                v = min(max(c3 / (c1 - c2), 0.0), 1.0)
            else:
                e = np.interp(t, sched_t, sched_e)
                v = np.interp(t, sched_t, sched_v)
            controls[j, k, 0] = e
            controls[j, k, 1] = v
            if k == n_steps:
                break
            db, ds, di, dr = _drift(t, b, s, i, r, e, v, p, temp_t, temp_v)
            gb, gs, gi, gr = _diffusion(b, s, i, r, p)
            z0, z1 = rng.normal_pair_scalar(k0, k1, k, rep, 0, 0)
            z2, z3 = rng.normal_pair_scalar(k0, k1, k, rep, 1, 0)
            nb = b + db * dt + gb * (sqdt * z0)
            ns = s + ds * dt + gs * (sqdt * z1)
            ni = i + di * dt + gi * (sqdt * z2)
            nr = r + dr * dt + gr * (sqdt * z3)
            bad = -1
            if not np.isfinite(nb):
                bad = 0
            elif not np.isfinite(ns):
                bad = 1
            elif not np.isfinite(ni):
                bad = 2
            elif not np.isfinite(nr):
                bad = 3
            if bad >= 0:
                status[j, 0] = 1
                status[j, 1] = k
                status[j, 2] = bad
                break
            if nb < floor:
                nb = floor
                clamps[j] += 1
            if ns < floor:
                ns = floor
                clamps[j] += 1
            if ni < floor:
                ni = floor
                clamps[j] += 1
            if nr < floor:
                nr = floor
                clamps[j] += 1
            b = nb
            s = ns
            i = ni
            r = nr
            states[j, k + 1, 0] = b
            states[j, k + 1, 1] = s
            states[j, k + 1, 2] = i
            states[j, k + 1, 3] = r
    return states, controls, clamps, status


def simulate_numpy(x0, t0, dt, n_steps, reps, k0, k1, p, temp_t, temp_v, mode,
                   fixed_e, fixed_v, sched_t, sched_e, sched_v, floor, denom_eps):
    reps = np.asarray(reps, dtype=np.int64)
    n_rep = reps.shape[0]
    seed = (int(k1) << 32) | int(k0)
    states = np.full((n_rep, n_steps + 1, 4), np.nan)
    controls = np.full((n_rep, n_steps + 1, 2), np.nan)
    clamps = np.zeros(n_rep, dtype=np.int64)
    status = np.zeros((n_rep, 3), dtype=np.int64)
    x = np.tile(np.asarray(x0, dtype=np.float64), (n_rep, 1))
    states[:, 0, :] = x
    alive = np.ones(n_rep, dtype=bool)
    sqdt = np.sqrt(dt)
    ones = np.ones(n_rep)
    with np.errstate(all="ignore"):
        for k in range(n_steps + 1):
            t = t0 + k * dt
            b, s, i, r = x[:, 0], x[:, 1], x[:, 2], x[:, 3]
            if mode == MODE_FIXED:
                e = fixed_e * ones
                v = fixed_v * ones
            elif mode == MODE_FEEDBACK:
                a1, a2, a3 = F.lockdown_coeffs(t, b, s, i, r, p)
                c1, c2, c3 = F.vaccination_coeffs(t, b, s, i, r, p)
                bad_e = alive & (np.abs(a1 + a2) < denom_eps)
                bad_v = alive & ~bad_e & (np.abs(c1 - c2) < denom_eps)
                for mask, code in ((bad_e, DEGENERATE_E), (bad_v, DEGENERATE_V)):
                    status[mask, 0] = code
                    status[mask, 1] = k
                alive &= ~(bad_e | bad_v)
                e = np.minimum(np.maximum((a2 + a3) / (a1 + a2), 0.0), 1.0)
                v = np.minimum(np.maximum(c3 / (c1 - c2), 0.0), 1.0)
            else:
                e = np.interp(t, sched_t, sched_e) * ones
                v = np.interp(t, sched_t, sched_v) * ones
            controls[alive, k, 0] = e[alive]
            controls[alive, k, 1] = v[alive]
            if k == n_steps:
                break
            d = np.stack(F.drift_f(t, b, s, i, r, e, v, p, temp_t, temp_v), axis=1)
            g = np.stack(F.diffusion_f(b, s, i, r, p), axis=1)
            z = rng.normals(seed, reps, k)
            xn = x + d * dt + g * (sqdt * z)
            finite = np.isfinite(xn)
            bad = alive & ~finite.all(axis=1)
            if bad.any():
                status[bad, 0] = OVERFLOW
                status[bad, 1] = k
                status[bad, 2] = np.argmin(finite[bad], axis=1)
                alive &= ~bad
            low = xn < floor
            clamps += np.where(alive, low.sum(axis=1), 0)
            xn = np.where(low, floor, xn)
            x = np.where(alive[:, None], xn, x)
            states[alive, k + 1, :] = x[alive]
    return states, controls, clamps, status
