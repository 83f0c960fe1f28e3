"""Immunity-stratified Erdos-Renyi graphs and homophily-weighted rewiring.

Communities for modularity are the immunity levels themselves. A rewiring
update picks a uniform node ``v``; it drops one of ``v``'s edges with weight
``(1-h) + h*d`` and links ``v`` to one non-neighbour with weight
``(1-h) + h*(1-d)``, where ``d = |level_v - level_w| / 4``. Both candidates are
drawn from the pre-update graph. All draws come from the counter-based
generator keyed by ``(seed, update index)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from ._accel import njit, resolve_backend
from .errors import InvalidPartition, UndefinedModularity, ValidationError

LEVEL_NAMES = ("very low", "somewhat low", "medium", "somewhat high", "very high")
N_LEVELS = len(LEVEL_NAMES)
DEFAULT_LEVEL_COUNTS = (21, 24, 18, 20, 17)


@dataclass
class ImmunityNetwork:
    n: int
    adjacency: np.ndarray  # (n, n) uint8, symmetric, zero diagonal
    levels: np.ndarray  # (n,) int64 in 0..4
    seed: int = 0
    updates_done: int = 0  # next update consumes counter ``updates_done``

    @property
    def rng_state(self) -> tuple[int, int]:
        return self.seed, self.updates_done

    def copy(self) -> "ImmunityNetwork":
        return ImmunityNetwork(self.n, self.adjacency.copy(), self.levels.copy(), self.seed, self.updates_done)

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum()) // 2

    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(i.tolist(), j.tolist()))


@dataclass
class UpdateTrace:
    removed: np.ndarray  # (k, 2), -1 where nothing was removed
    added: np.ndarray
    modularity: np.ndarray
    density: np.ndarray
    initial_modularity: float = float("nan")
    initial_density: float = float("nan")
    update: np.ndarray = field(init=False)

    def __post_init__(self):
        self.update = np.arange(1, len(self.modularity) + 1)

    def __len__(self) -> int:
        return len(self.modularity)

    def rows(self):
        for k in range(len(self)):
            yield (int(self.update[k]), _edge_str(self.removed[k]), _edge_str(self.added[k]),
                   repr(float(self.modularity[k])), repr(float(self.density[k])))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["update", "removed", "added", "modularity", "density"])
            w.writerows(self.rows())


def _edge_str(edge) -> str:
    a, b = int(edge[0]), int(edge[1])
    return "" if a < 0 else f"{a}-{b}"


def generate_er(n: int, p: float, level_counts, seed: int = 0) -> ImmunityNetwork:
    """G(n, p) with immunity levels assigned by shuffling the count multiset."""
    counts = [int(c) for c in level_counts]
    if len(counts) != N_LEVELS or any(c < 0 for c in counts):
        raise InvalidPartition(f"need {N_LEVELS} non-negative level counts, got {level_counts}")
    if sum(counts) != n:
        raise InvalidPartition(f"level counts sum to {sum(counts)}, expected n={n}")
    if not (0.0 <= p <= 1.0):
        raise ValidationError(f"edge probability must lie in [0,1], got {p}")
    iu, ju = np.triu_indices(n, 1)
    pair = np.arange(iu.size, dtype=np.int64)
    u = rng.uniforms(seed, pair // 4, 0, stream=rng.STREAM_ER)[np.arange(iu.size), pair % 4] if iu.size else np.empty(0)
    adj = np.zeros((n, n), dtype=np.uint8)
    hit = u < p
    adj[iu[hit], ju[hit]] = 1
    adj[ju[hit], iu[hit]] = 1
    multiset = np.repeat(np.arange(N_LEVELS, dtype=np.int64), counts)
    keys = rng.uniforms(seed, np.arange(n, dtype=np.int64), 0, stream=rng.STREAM_LEVELS)[:, 0]
    levels = multiset[np.argsort(keys, kind="stable")]
    return ImmunityNetwork(n, adj, levels, int(seed), 0)


def _community_index(labels: np.ndarray) -> tuple[np.ndarray, int]:
    uniq, inv = np.unique(np.asarray(labels), return_inverse=True)
    return inv.astype(np.int64), int(uniq.size)


@njit(cache=True)
def _modularity_nb(adj, comm, n_comm):
    n = adj.shape[0]
    inside = np.zeros(n_comm, dtype=np.int64)
    degsum = np.zeros(n_comm, dtype=np.int64)
    two_m = 0
    for i in range(n):
        ci = comm[i]
        for j in range(n):
            if adj[i, j]:
                two_m += 1
                degsum[ci] += 1
                if comm[j] == ci:
                    inside[ci] += 1
    if two_m == 0:
        return np.nan
    q = 0.0
    for c in range(n_comm):
        q += inside[c] / two_m - (degsum[c] / two_m) ** 2
    return q


def _modularity_np(adj, comm, n_comm):
    a = adj.astype(np.int64)
    deg = a.sum(axis=1)
    two_m = int(deg.sum())
    if two_m == 0:
        return float("nan")
    onehot = np.zeros((adj.shape[0], n_comm), dtype=np.int64)
    onehot[np.arange(adj.shape[0]), comm] = 1
    inside = np.einsum("ic,ij,jc->c", onehot, a, onehot)
    degsum = onehot.T @ deg
    q = 0.0
    for c in range(n_comm):
        q += int(inside[c]) / two_m - (int(degsum[c]) / two_m) ** 2
    return q


def modularity(net: ImmunityNetwork, communities=None, backend: str | None = None) -> float:
    """Newman modularity with immunity levels (or ``communities``) as the partition."""
    labels = net.levels if communities is None else np.asarray(communities)
    comm, n_comm = _community_index(labels)
    adj = np.ascontiguousarray(net.adjacency, dtype=np.uint8)
    fn = _modularity_nb if resolve_backend(backend) == "numba" else _modularity_np
    q = float(fn(adj, comm, n_comm))
    if not np.isfinite(q):
        raise UndefinedModularity("modularity is undefined for a graph without edges")
    return q


def density(net: ImmunityNetwork) -> float:
    if net.n < 2:
        raise ValidationError("density needs at least 2 nodes")
    return net.n_edges / (net.n * (net.n - 1) / 2)


@njit(cache=True)
def _pick_nb(cand, weights, count, u):
    total = 0.0
    for k in range(count):
        total += weights[k]
    if total <= 0.0:
        idx = int(u * count)
        return cand[min(idx, count - 1)]
    thresh = u * total
    cum = 0.0
    for k in range(count):
        cum += weights[k]
        if cum > thresh:
            return cand[k]
    return cand[count - 1]


@njit(cache=True)
def _updates_nb(adj, levels, k0, k1, start, n_updates, h, activity, record):
    n = adj.shape[0]
    removed = np.full((n_updates, 2), -1, dtype=np.int64)
    added = np.full((n_updates, 2), -1, dtype=np.int64)
    mods = np.full(n_updates, np.nan)
    dens = np.full(n_updates, np.nan)
    nbr = np.empty(n, dtype=np.int64)
    nbw = np.empty(n)
    non = np.empty(n, dtype=np.int64)
    nonw = np.empty(n)
    n_edges = 0
    for i in range(n):
        for j in range(i + 1, n):
            n_edges += adj[i, j]
    for u in range(n_updates):
        u0, u1, u2, u3 = rng.uniforms_scalar(k0, k1, start + u, 0, 1)
        v = min(int(u0 * n), n - 1)
        cn = 0
        cx = 0
        for w in range(n):
            if w == v:
                continue
            d = abs(levels[v] - levels[w]) / 4.0
            if adj[v, w]:
                nbr[cn] = w
                nbw[cn] = (1.0 - h) + h * d
                cn += 1
            else:
                non[cx] = w
                nonw[cx] = (1.0 - h) + h * (1.0 - d)
                cx += 1
        if cn > 0:
            w = _pick_nb(nbr, nbw, cn, u1)
            adj[v, w] = 0
            adj[w, v] = 0
            n_edges -= 1
            removed[u, 0] = v
            removed[u, 1] = w
        if cx > 0 and u3 < activity:
            w = _pick_nb(non, nonw, cx, u2)
            adj[v, w] = 1
            adj[w, v] = 1
            n_edges += 1
            added[u, 0] = v
            added[u, 1] = w
        if record:
            mods[u] = _modularity_nb(adj, levels, 5)
            dens[u] = n_edges / (n * (n - 1) / 2.0)
    return removed, added, mods, dens


def _pick_np(cand, weights, u):
    cum = np.cumsum(weights)
    total = cum[-1]
    if total <= 0.0:
        return int(cand[min(int(u * cand.size), cand.size - 1)])
    idx = int(np.searchsorted(cum, u * total, side="right"))
    return int(cand[min(idx, cand.size - 1)])


def _updates_np(adj, levels, k0, k1, start, n_updates, h, activity, record):
    n = adj.shape[0]
    seed = (int(k1) << 32) | int(k0)
    removed = np.full((n_updates, 2), -1, dtype=np.int64)
    added = np.full((n_updates, 2), -1, dtype=np.int64)
    mods = np.full(n_updates, np.nan)
    dens = np.full(n_updates, np.nan)
    draws = rng.uniforms(seed, np.arange(start, start + n_updates, dtype=np.int64), 0) if n_updates else None
    n_edges = int(np.triu(adj, 1).sum())
    others = np.arange(n)
    for u in range(n_updates):
        u0, u1, u2, u3 = draws[u]
        v = min(int(u0 * n), n - 1)
        mask = others != v
        d = np.abs(levels[v] - levels) / 4.0
        linked = adj[v].astype(bool) & mask
        unlinked = ~adj[v].astype(bool) & mask
        nbr, non = others[linked], others[unlinked]
        if nbr.size:
            w = _pick_np(nbr, (1.0 - h) + h * d[linked], u1)
            adj[v, w] = adj[w, v] = 0
            n_edges -= 1
            removed[u] = (v, w)
        if non.size and u3 < activity:
            w = _pick_np(non, (1.0 - h) + h * (1.0 - d[unlinked]), u2)
            adj[v, w] = adj[w, v] = 1
            n_edges += 1
            added[u] = (v, w)
        if record:
            mods[u] = _modularity_np(adj, levels, N_LEVELS)
            dens[u] = n_edges / (n * (n - 1) / 2.0)
    return removed, added, mods, dens


def _check_weight(h: float, activity: float) -> None:
    if not (0.0 <= h <= 1.0):
        raise ValidationError(f"homophily_weight must lie in [0,1], got {h}")
    if not (0.0 <= activity):
        raise ValidationError(f"activity must be >= 0, got {activity}")


def _apply(net, n_updates, h, activity, record, backend):
    if net.n < 3:
        raise ValidationError("rewiring needs at least 3 nodes")
    _check_weight(h, activity)
    k0, k1 = rng.split_seed(net.seed)
    fn = _updates_nb if resolve_backend(backend) == "numba" else _updates_np
    adj = np.ascontiguousarray(net.adjacency, dtype=np.uint8)
    out = fn(adj, np.ascontiguousarray(net.levels, dtype=np.int64), np.uint64(k0), np.uint64(k1),
             net.updates_done, int(n_updates), float(h), float(activity), record)
    net.adjacency = adj
    net.updates_done += int(n_updates)
    return out


def update_step(net: ImmunityNetwork, homophily_weight: float, activity: float = 1.0,
                backend: str | None = None):
    """One rewiring update in place; returns ``(net, removed, added)`` with
    ``None`` for a skipped action."""
    removed, added, _, _ = _apply(net, 1, homophily_weight, activity, False, backend)
    rem = None if removed[0, 0] < 0 else (int(removed[0, 0]), int(removed[0, 1]))
    add = None if added[0, 0] < 0 else (int(added[0, 0]), int(added[0, 1]))
    return net, rem, add


def run_updates(net: ImmunityNetwork, n_updates: int, homophily_weight: float, activity: float = 1.0,
                backend: str | None = None) -> UpdateTrace:
    if n_updates < 0:
        raise ValidationError("n_updates must be >= 0")
    q0 = modularity(net, backend=backend) if net.n_edges else float("nan")
    d0 = density(net)
    removed, added, mods, dens = _apply(net, n_updates, homophily_weight, activity, True, backend)
    return UpdateTrace(removed, added, mods, dens, q0, d0)


# ------------------------------------------------------------ text formats

def write_edge_list(net: ImmunityNetwork, path) -> None:
    with open(path, "w") as fh:
        for a, b in net.edges():
            fh.write(f"{a} {b}\n")


def write_levels(net: ImmunityNetwork, path) -> None:
    with open(path, "w") as fh:
        for node, lvl in enumerate(net.levels.tolist()):
            fh.write(f"{node} {lvl}\n")


def read_network(edge_path, level_path, seed: int = 0) -> ImmunityNetwork:
    levels = {}
    for line in Path(level_path).read_text().splitlines():
        if line.strip():
            node, lvl = line.split()
            levels[int(node)] = int(lvl)
    n = len(levels)
    if sorted(levels) != list(range(n)):
        raise ValidationError("level file must list nodes 0..n-1")
    lv = np.array([levels[k] for k in range(n)], dtype=np.int64)
    if np.any((lv < 0) | (lv >= N_LEVELS)):
        raise ValidationError("immunity levels must lie in 0..4")
    adj = np.zeros((n, n), dtype=np.uint8)
    for line in Path(edge_path).read_text().splitlines():
        if line.strip():
            a, b = (int(x) for x in line.split())
            if a == b:
                raise ValidationError(f"self-loop on node {a}")
            adj[a, b] = adj[b, a] = 1
    return ImmunityNetwork(n, adj, lv, seed, 0)
