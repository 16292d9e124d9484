"""Abstract polymer systems: Kotecky-Preiss check and small-system expansions.

Two polymers are compatible iff their supports are disjoint; every polymer
is incompatible with itself. The partition function is::

    Z = sum over pairwise compatible subsets S of prod_{g in S} w(g)

and ``ln Z`` has the cluster expansion ``sum_n (1/n!) sum_{(g_1..g_n)}
phi^T(g_1..g_n) prod w(g_k)``, where ``phi^T`` is the sum of
``(-1)^{|E|}`` over connected spanning subgraphs of the incompatibility
graph of the tuple.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, UsageError

__all__ = [
    "Polymer",
    "PolymerSystem",
    "kp_check",
    "brute_force_logZ",
    "partition_coefficients",
    "log_series",
    "truncated_expansion",
    "ursell_coefficient",
    "ursell_order",
    "random_system",
    "read_system",
    "write_system",
]

MAX_BRUTE_FORCE = 20


@dataclass(frozen=True)
class Polymer:
    id: int
    support: frozenset

    def __post_init__(self):
        object.__setattr__(self, "support", frozenset(int(s) for s in self.support))
        if not self.support:
            raise UsageError(f"polymer {self.id} has an empty support")

    def compatible(self, other: "Polymer") -> bool:
        return self.support.isdisjoint(other.support)


@dataclass
class PolymerSystem:
    polymers: list
    weight: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [g.id for g in self.polymers]
        if len(set(ids)) != len(ids):
            raise UsageError("polymer ids must be unique")
        if set(self.weight) != set(ids):
            raise UsageError("weights must be given for exactly the polymer ids")
        for k, w in self.weight.items():
            if not math.isfinite(w):
                raise UsageError(f"weight of polymer {k} is not finite")

    @classmethod
    def from_lists(cls, supports, weights) -> "PolymerSystem":
        polys = [Polymer(i, frozenset(s)) for i, s in enumerate(supports)]
        return cls(polys, {i: float(w) for i, w in enumerate(weights)})

    def __len__(self):
        return len(self.polymers)

    def weights(self) -> np.ndarray:
        return np.array([self.weight[g.id] for g in self.polymers], dtype=float)

    def incompatibility(self) -> np.ndarray:
        """Boolean matrix ``M[i, j]`` = polymers i and j overlap (diagonal True)."""
        n = len(self.polymers)
        M = np.zeros((n, n), dtype=bool)
        for i, g in enumerate(self.polymers):
            for j, h in enumerate(self.polymers):
                M[i, j] = not g.compatible(h)
        return M

    def scaled(self, factor: float) -> "PolymerSystem":
        return PolymerSystem(list(self.polymers), {k: factor * w for k, w in self.weight.items()})

    def disjoint_union(self, other: "PolymerSystem") -> "PolymerSystem":
        """Place ``other`` on fresh sites and ids, so no polymer of one meets the other."""
        site_shift = 1 + max((max(g.support) for g in self.polymers), default=-1)
        id_shift = 1 + max((g.id for g in self.polymers), default=-1)
        moved = [Polymer(g.id + id_shift, frozenset(s + site_shift for s in g.support)) for g in other.polymers]
        weight = dict(self.weight)
        weight.update({g.id + id_shift: other.weight[g.id] for g in other.polymers})
        return PolymerSystem(list(self.polymers) + moved, weight)


def kp_check(system: PolymerSystem, a=None, d=None):
    """Kotecky-Preiss criterion.

    For every polymer ``g``: ``sum_{g' incompatible with g} |w(g')| e^{a(g') + d(g')} <= a(g)``.
    ``a`` defaults to the support size and ``d`` to 0. Returns
    ``(holds, worst_ratio)`` with ``worst_ratio = max_g LHS / a(g)``.
    """
    a = a or (lambda g: float(len(g.support)))
    d = d or (lambda g: 0.0)
    if not system.polymers:
        return True, 0.0
    av = np.array([a(g) for g in system.polymers], dtype=float)
    if np.any(av <= 0):
        raise UsageError("a(g) must be positive for every polymer")
    dv = np.array([d(g) for g in system.polymers], dtype=float)
    term = np.abs(system.weights()) * np.exp(av + dv)
    lhs = system.incompatibility().astype(float) @ term
    worst = float(np.max(lhs / av))
    return bool(worst <= 1.0), worst


def _compatible_subsets(M):
    """Yield index tuples of pairwise compatible subsets (empty set included)."""
    n = M.shape[0]

    def rec(start, chosen, blocked):
        yield tuple(chosen)
        for i in range(start, n):
            if not blocked[i]:
                chosen.append(i)
                yield from rec(i + 1, chosen, blocked | M[i])
                chosen.pop()

    yield from rec(0, [], np.zeros(n, dtype=bool))


def partition_coefficients(system: PolymerSystem) -> np.ndarray:
    """Coefficients ``a_k`` of ``Z(lam) = sum_k a_k lam^k`` (weights scaled by ``lam``)."""
    if len(system) > MAX_BRUTE_FORCE:
        raise UsageError(f"brute force limited to {MAX_BRUTE_FORCE} polymers, got {len(system)}")
    M = system.incompatibility()
    w = system.weights()
    coeffs = np.zeros(len(system) + 1)
    for subset in _compatible_subsets(M):
        coeffs[len(subset)] += float(np.prod(w[list(subset)])) if subset else 1.0
    return coeffs


def brute_force_logZ(system: PolymerSystem) -> float:
    """``ln Z`` by enumerating all compatible subsets (at most 20 polymers)."""
    Z = float(np.sum(partition_coefficients(system)))
    if Z <= 0:
        raise DomainError(f"Z = {Z!r} <= 0: weights outside the range where ln Z is defined")
    return math.log(Z)


def log_series(coeffs, order: int) -> np.ndarray:
    """Taylor coefficients ``c_1..c_order`` of ``ln(sum_k a_k lam^k)`` with ``a_0 = 1``.

    From ``Z' = Z (ln Z)'``: ``n c_n = n a_n - sum_{k=1}^{n-1} k c_k a_{n-k}``.
    """
    a = np.zeros(order + 1)
    m = min(len(coeffs), order + 1)
    a[:m] = coeffs[:m]
    if a[0] != 1.0:
        raise UsageError("constant coefficient must be 1")
    c = np.zeros(order + 1)
    for n in range(1, order + 1):
        s = n * a[n]
        for k in range(1, n):
            s -= k * c[k] * a[n - k]
        c[n] = s / n
    return c[1:]


def truncated_expansion(system: PolymerSystem, max_order: int) -> float:
    """Cluster expansion of ``ln Z`` summed over clusters of at most ``max_order`` polymers.

    The order-``n`` term is the ``lam^n`` coefficient of ``ln Z(lam)``,
    obtained from the brute-force coefficients of ``Z(lam)`` by the
    logarithm recursion; :func:`ursell_order` computes the same terms
    directly for ``n <= 4``.
    """
    if max_order < 1:
        raise UsageError(f"max_order must be >= 1, got {max_order}")
    return float(np.sum(log_series(partition_coefficients(system), max_order)))


def ursell_coefficient(M_sub) -> int:
    """``sum_{G connected spanning} (-1)^{|E(G)|}`` for the graph with adjacency ``M_sub``."""
    n = M_sub.shape[0]
    if n == 1:
        return 1
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if M_sub[i, j]]
    total = 0
    for mask in range(1 << len(edges)):
        chosen = [edges[k] for k in range(len(edges)) if mask >> k & 1]
        if _connected(n, chosen):
            total += -1 if len(chosen) % 2 else 1
    return total


def _connected(n, edges):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in edges:
        parent[find(i)] = find(j)
    return len({find(i) for i in range(n)}) == 1


def ursell_order(system: PolymerSystem, n: int) -> float:
    """Order-``n`` cluster-expansion term by direct enumeration of ordered tuples (``n <= 4``)."""
    if not 1 <= n <= 4:
        raise UsageError(f"direct Ursell enumeration supports 1 <= n <= 4, got {n}")
    M = system.incompatibility()
    w = system.weights()
    total = 0.0
    cache = {}
    for tup in itertools.product(range(len(system)), repeat=n):
        sub = M[np.ix_(tup, tup)]
        key = sub.tobytes()
        if key not in cache:
            cache[key] = ursell_coefficient(sub)
        coef = cache[key]
        if coef:
            total += coef * float(np.prod(w[list(tup)]))
    return total / math.factorial(n)


def random_system(rng, n_polymers: int, n_sites: int = 10, max_support: int = 3,
                  weight_scale: float = 0.2) -> PolymerSystem:
    """Random supports on ``n_sites`` sites with weights uniform in ``[-scale, scale]``."""
    supports = []
    for _ in range(n_polymers):
        k = int(rng.integers(1, max_support + 1))
        supports.append(rng.choice(n_sites, size=k, replace=False).tolist())
    weights = rng.uniform(-weight_scale, weight_scale, size=n_polymers)
    return PolymerSystem.from_lists(supports, weights)


_LINE = re.compile(r"^\s*(-?\d+)\s*:\s*([-\d,\s]+?)\s*:\s*(\S+)\s*$")


def read_system(path) -> PolymerSystem:
    """Parse lines ``id: s1,s2,... : weight``; blank lines and ``#`` comments are skipped."""
    polys, weight = [], {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        mt = _LINE.match(line)
        if not mt:
            raise UsageError(f"{path}:{lineno}: expected 'id: s1,s2,... : weight', got {raw!r}")
        pid = int(mt.group(1))
        sites = [int(s) for s in mt.group(2).split(",") if s.strip()]
        try:
            w = float(mt.group(3))
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad weight {mt.group(3)!r}") from None
        polys.append(Polymer(pid, frozenset(sites)))
        weight[pid] = w
    return PolymerSystem(polys, weight)


def write_system(path, system: PolymerSystem) -> None:
    lines = [
        f"{g.id}: {','.join(str(s) for s in sorted(g.support))} : {system.weight[g.id]:.17g}"
        for g in system.polymers
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
