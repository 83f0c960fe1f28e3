"""Total variation distance between finite discrete distributions.

Three characterisations are computed independently: the supremum over
events, one minus the mass of a maximal coupling's diagonal, and one minus
the summed overlaps over the finest partition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDistribution

NORM_TOL = 1e-12
EXHAUSTIVE_MAX_ATOMS = 15


@dataclass(frozen=True)
class TVResult:
    tv_sup: float
    tv_coupling: float
    tv_partition: float

    def as_tuple(self) -> tuple[float, float, float]:
        return self.tv_sup, self.tv_coupling, self.tv_partition


def as_distribution(atoms, tol: float = NORM_TOL) -> np.ndarray:
    p = np.asarray(atoms, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise InvalidDistribution("a distribution is a non-empty 1-d vector of atoms")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InvalidDistribution("atoms must be finite and non-negative")
    if abs(p.sum() - 1.0) > tol:
        raise InvalidDistribution(f"atoms sum to {p.sum()!r}, not 1 within {tol}")
    return p


def tv_sup(p, q) -> float:
    """sup_B |P(B) - Q(B)|, attained at B = {k : p_k > q_k}."""
    diff = p - q
    return float(diff[diff > 0].sum())


def tv_sup_exhaustive(p, q) -> float:
    """Same supremum by enumerating all 2^k events (k <= 15)."""
    k = len(p)
    if k > EXHAUSTIVE_MAX_ATOMS:
        raise ValueError(f"exhaustive enumeration limited to {EXHAUSTIVE_MAX_ATOMS} atoms")
    masks = (np.arange(1 << k)[:, None] >> np.arange(k)[None, :]) & 1
    diffs = masks @ (np.asarray(p) - np.asarray(q))
    return float(np.abs(diffs).max())


def maximal_coupling(p, q) -> np.ndarray:
    """Joint law with marginals p, q putting mass min(p_k, q_k) on the diagonal;
    the leftover mass is spread as an independent product of the residuals."""
    m = np.minimum(p, q)
    rp, rq = p - m, q - m
    left = rp.sum()
    pi = np.diag(m)
    if left > 0:
        pi = pi + np.outer(rp, rq) / left
    return pi


def tv_coupling(p, q) -> float:
    """1 - P(X = Y) under the maximal coupling, summed as the off-diagonal
    mass so identical inputs give exactly 0."""
    pi = maximal_coupling(p, q)
    return float(pi[~np.eye(len(pi), dtype=bool)].sum())


def tv_partition(p, q) -> float:
    """1 - sum over singleton cells of min(P, Q); singletons attain the infimum.
    The total mass of ``p`` stands in for 1."""
    return float(np.sum(p) - np.minimum(p, q).sum())


def tv_all(p, q, verify: bool = False) -> TVResult:
    p = as_distribution(p)
    q = as_distribution(q)
    if p.shape != q.shape:
        raise InvalidDistribution(f"atom counts differ: {p.size} vs {q.size}")
    res = TVResult(tv_sup(p, q), tv_coupling(p, q), tv_partition(p, q))
    if verify and p.size <= EXHAUSTIVE_MAX_ATOMS:
        ex = tv_sup_exhaustive(p, q)
        if abs(ex - res.tv_sup) > 1e-12:
            raise AssertionError(f"event supremum {res.tv_sup} != exhaustive {ex}")
    return res


def histogram_distribution(samples, edges) -> np.ndarray:
    counts, _ = np.histogram(np.asarray(samples, dtype=np.float64), bins=edges)
    total = counts.sum()
    if total == 0:
        raise InvalidDistribution("no samples fall inside the histogram range")
    return counts / total


def shared_edges(a, b, bins: int = 20) -> np.ndarray:
    lo = float(min(np.min(a), np.min(b)))
    hi = float(max(np.max(a), np.max(b)))
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, bins + 1)
