"""Branch-free model arithmetic on a packed parameter vector.

These functions accept python floats, numpy scalars or arrays (broadcasting
over replicates), and are also compiled verbatim by numba inside the
simulation kernels. State arguments are always in internal order
``(beta, S, I, R)``.
"""

from __future__ import annotations

import numpy as np

# packed parameter layout
ETA, KAPPA, ZETA, MU, RHO, NPOP = 0, 1, 2, 3, 4, 5
B0, B1, B2, TH1, TH2, MPM, QMOD, RDISC = 6, 7, 8, 9, 10, 11, 12, 13
A11, A12, A13, A21, A22, A23 = 14, 15, 16, 17, 18, 19
SIG1, SIG2, SIG3, SIG4 = 20, 21, 22, 23
XB, XS, XI, XR = 24, 25, 26, 27
ETA_N_ON = 28
N_PACKED = 29


def incidence_f(b, s, i, p):
    return b * s * i / ((1.0 + p[RHO] * i) + p[ETA_N_ON] * p[ETA] * p[NPOP])


def drift_f(t, b, s, i, r, e, v, p, temp_t, temp_v):
    inc = b * s * i / ((1.0 + p[RHO] * i) + p[ETA_N_ON] * p[ETA] * p[NPOP])
    temp = np.interp(t, temp_t, temp_v)
    db = p[QMOD] * i * (p[B0] * temp + p[B1] * p[MPM] * (1.0 - e) ** p[TH1] - p[B2] * v ** p[TH2])
    ds = p[ETA] * p[NPOP] - inc - p[KAPPA] * s - v + p[ZETA] * r
    di = inc - (p[MU] + p[KAPPA]) * i - e
    dr = p[MU] * v * i - (p[KAPPA] + p[ZETA]) * e * r
    return db, ds, di, dr


def diffusion_f(b, s, i, r, p):
    return (
        p[SIG4] * (b - p[XB]) * p[MPM],
        p[SIG1] * (s - p[XS]),
        p[SIG2] * (i - p[XI]),
        p[SIG3] * (r - p[XR]),
    )


def cost_f(t, b, s, i, r, e, v, p):
    disc = np.exp(-p[RDISC] * t)
    vacc = s * (0.5 * p[A11] * v * v + p[A12] * v + p[A13])
    lock = i * (0.5 * p[A21] * e * e + p[A22] * e + p[A23])
    return disc * (vacc + lock) + b * s * i


def lockdown_coeffs(t, b, s, i, r, p):
    """(A1, A2, A3) of the theta1 = 2 lock-down closed form."""
    disc = np.exp(-p[RDISC] * t)
    a1 = disc * i * p[A21]
    a2 = 2.0 * p[QMOD] * i * p[B1] * p[MPM] * (t - 1.0 / b)
    a3 = (t - 1.0 / i) + r * (t - 1.0 / r) * (p[KAPPA] + p[ZETA]) - disc * i * p[A22]
    return a1, a2, a3


def vaccination_coeffs(t, b, s, i, r, p):
    """(B1, B2, B3) of the theta2 = 2 vaccination closed form."""
    disc = np.exp(-p[RDISC] * t)
    b1 = disc * s * p[A11]
    b2 = 2.0 * p[QMOD] * i * p[B2] * (t - 1.0 / b)
    b3 = (t - 1.0 / s) - p[MU] * i * (t - 1.0 / r) - disc * s * p[A12]
    return b1, b2, b3
