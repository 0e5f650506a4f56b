"""s-t cuts, maximum flow and multicast (network coding) capacity.

A :class:`CapacitatedDigraph` is laid out as ``[s, u_1 .. u_m, t]``.  In
threshold mode capacities are stored as integer multiples of ``unit`` (= R) so
that max-flow and cut enumeration agree exactly.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .network import NetworkInstance, SinrSource, capacity_matrix

MAX_ENUMERATION_RELAYS = 20


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class RoleAssignment:
    source: int
    destinations: tuple
    relays: tuple

    def __post_init__(self):
        object.__setattr__(self, "destinations", tuple(int(t) for t in self.destinations))
        object.__setattr__(self, "relays", tuple(int(u) for u in self.relays))
        dset, rset = set(self.destinations), set(self.relays)
        if self.source in dset or self.source in rset or dset & rset:
            raise ValueError("source, destinations and relays must be disjoint")
        if len(rset) != len(self.relays):
            raise ValueError("relays must be distinct")

    @classmethod
    def random(cls, n: int, l: int, m: int, rng: np.random.Generator) -> "RoleAssignment":
        """Source, ``l`` destinations and ``m`` relays drawn from a shuffled index list."""
        if m + l + 1 > n:
            raise ValueError(f"need m + l + 1 <= n, got m={m}, l={l}, n={n}")
        perm = rng.permutation(n)
        return cls(int(perm[0]), tuple(perm[1 : 1 + l]), tuple(perm[1 + l : 1 + l + m]))

    def validate(self, n: int):
        for v in (self.source, *self.destinations, *self.relays):
            if not 0 <= v < n:
                raise ValueError(f"node index {v} out of range for n={n}")


@dataclass(frozen=True, eq=False)
class CapacitatedDigraph:
    nodes: tuple  # original node ids: source, relays..., destination
    cap: np.ndarray  # cap[a, b] for the link a -> b, in units
    unit: float = 1.0

    def __post_init__(self):
        k = len(self.nodes)
        if self.cap.shape != (k, k):
            raise ValueError("capacity matrix must be square over the node list")
        if np.any(self.cap < 0):
            raise ValueError("capacities must be non-negative")
        if np.any(np.diag(self.cap) != 0):
            raise ValueError("self-loops are not allowed")
        if self.cap[0, -1] != 0 or self.cap[-1, 0] != 0:
            raise ValueError("direct source/destination links must be removed")

    @property
    def m(self) -> int:
        return len(self.nodes) - 2

    @property
    def relays(self) -> tuple:
        return self.nodes[1:-1]

    @property
    def exact(self) -> bool:
        return np.issubdtype(self.cap.dtype, np.integer)

    @classmethod
    def from_matrix(cls, cap, unit: float = 1.0, nodes=None) -> "CapacitatedDigraph":
        """Wrap a raw matrix, zeroing the diagonal and the s<->t entries."""
        cap = np.array(cap, copy=True)
        np.fill_diagonal(cap, 0)
        cap[0, -1] = cap[-1, 0] = 0
        cap[:, 0] = 0
        cap[-1, :] = 0
        return cls(tuple(range(len(cap))) if nodes is None else tuple(nodes), cap, unit)


@dataclass(frozen=True)
class CutSpec:
    v_k: frozenset  # relay ids on the source side

    def __post_init__(self):
        object.__setattr__(self, "v_k", frozenset(int(v) for v in self.v_k))

    @property
    def k(self) -> int:
        return len(self.v_k)


def _role_matrix(inst, roles, sinr_source, eps, exp, interference=None):
    nodes = (roles.source, *roles.relays, *roles.destinations)
    cap, unit = capacity_matrix(inst, nodes, nodes, sinr_source, eps, exp, interference)
    return nodes, cap, unit


def _digraph_from_roles(nodes, cap, unit, roles, t, include_other_destinations):
    m = len(roles.relays)
    dest_pos = {d: 1 + m + i for i, d in enumerate(roles.destinations)}
    extra = [d for d in roles.destinations if d != t] if include_other_destinations else []
    keep = [0, *range(1, 1 + m), *(dest_pos[d] for d in extra), dest_pos[t]]
    ids = [nodes[i] for i in keep]
    return CapacitatedDigraph.from_matrix(cap[np.ix_(keep, keep)], unit, ids)


def build_digraph(
    inst: NetworkInstance,
    roles: RoleAssignment,
    t: int,
    sinr_source=SinrSource.ACTUAL,
    eps=None,
    exp=None,
    include_other_destinations: bool = False,
) -> CapacitatedDigraph:
    """Capacitated graph over s, the relays and destination ``t``.

    Other destinations are left out unless ``include_other_destinations``,
    in which case they act as extra relays.
    """
    if t not in roles.destinations:
        raise ValueError(f"{t} is not a destination")
    roles.validate(inst.n)
    nodes, cap, unit = _role_matrix(inst, roles, sinr_source, eps, exp)
    return _digraph_from_roles(nodes, cap, unit, roles, t, include_other_destinations)


def cut_capacity(g: CapacitatedDigraph, cut: CutSpec) -> float:
    """Forward capacity of the cut ({s} + V_k | V_k^c + {t})."""
    relays = g.relays
    unknown = cut.v_k - set(relays)
    if unknown:
        raise ValueError(f"cut contains non-relay nodes {sorted(unknown)}")
    side = np.array([u in cut.v_k for u in relays], dtype=bool)
    src = 1 + np.flatnonzero(side)
    snk = 1 + np.flatnonzero(~side)
    c = g.cap
    total = c[0, snk].sum() + c[np.ix_(src, snk)].sum() + c[src, -1].sum()
    return float(total) * g.unit


def _subset_key(mask: int, m: int) -> tuple:
    return tuple(b for b in range(m) if mask >> b & 1)


def min_cut_bruteforce(g: CapacitatedDigraph):
    """Minimum over all 2^m relay partitions; ties go to the lexicographically smallest subset."""
    m = g.m
    if m > MAX_ENUMERATION_RELAYS:
        raise InstanceTooLarge(f"{m} relays exceed the enumeration limit of {MAX_ENUMERATION_RELAYS}")
    c = g.cap
    c_s = c[0, 1 : m + 1]
    c_t = c[1 : m + 1, -1]
    c_r = c[1 : m + 1, 1 : m + 1]
    bits = 1 << np.arange(m)
    best_val, best = None, []
    chunk = 1 << 14
    for start in range(0, 1 << m, chunk):
        masks = np.arange(start, min(start + chunk, 1 << m))
        side = (masks[:, None] & bits[None, :]) != 0
        other = ~side
        vals = other @ c_s + side @ c_t + ((side @ c_r) * other).sum(axis=1)
        lo = vals.min()
        if best_val is None or lo < best_val:
            best_val, best = lo, []
        if lo == best_val:
            best.extend(int(x) for x in masks[vals == lo])
    mask = min(best, key=lambda x: _subset_key(x, m))
    cut = CutSpec(g.relays[b] for b in _subset_key(mask, m))
    return float(best_val) * g.unit, cut


def max_flow(g: CapacitatedDigraph) -> float:
    """Maximum s->t flow (Dinic's blocking flows)."""
    n = len(g.nodes)
    exact = g.exact
    res = [[int(x) if exact else float(x) for x in row] for row in g.cap]
    tol = 0 if exact else 1e-12 * max(1.0, float(np.max(g.cap, initial=0.0)))
    adj = [[b for b in range(n) if b != a and (g.cap[a, b] > 0 or g.cap[b, a] > 0)] for a in range(n)]
    s, t = 0, n - 1
    total = 0

    while True:
        level = [-1] * n
        level[s] = 0
        q = deque([s])
        while q:
            a = q.popleft()
            for b in adj[a]:
                if level[b] < 0 and res[a][b] > tol:
                    level[b] = level[a] + 1
                    q.append(b)
        if level[t] < 0:
            break
        it = [0] * n
        path = [s]
        while path:
            a = path[-1]
            if a == t:
                f = min(res[u][v] for u, v in zip(path, path[1:]))
                for u, v in zip(path, path[1:]):
                    res[u][v] -= f
                    res[v][u] += f
                total += f
                path = [s]
                continue
            nbrs = adj[a]
            while it[a] < len(nbrs):
                b = nbrs[it[a]]
                if level[b] == level[a] + 1 and res[a][b] > tol:
                    path.append(b)
                    break
                it[a] += 1
            else:
                # dead end: retire the arc that led here
                path.pop()
                if path:
                    it[path[-1]] += 1
    return float(total) * g.unit


def coding_capacity(
    inst: NetworkInstance,
    roles: RoleAssignment,
    sinr_source=SinrSource.ACTUAL,
    eps=None,
    exp=None,
    include_other_destinations: bool = False,
    interference=None,
):
    """Multicast capacity: the smallest s-t max-flow over destinations.

    Returns ``(value, per_destination)`` with one entry per listed destination.
    """
    if not roles.destinations:
        raise ValueError("at least one destination is required")
    roles.validate(inst.n)
    nodes, cap, unit = _role_matrix(inst, roles, sinr_source, eps, exp, interference)
    cache = {}
    per = []
    for t in roles.destinations:
        if t not in cache:
            cache[t] = max_flow(_digraph_from_roles(nodes, cap, unit, roles, t, include_other_destinations))
        per.append(cache[t])
    return min(per), per
