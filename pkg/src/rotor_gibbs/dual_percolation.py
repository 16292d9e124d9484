"""Low-energy site percolation on the dual lattice.

Dual site ``a`` is the plaquette based at lattice site ``a`` (corners
``(r,c), (r,c+1), (r+1,c), (r+1,c+1)``). It is occupied when its plaquette
energy is within ``delta`` of the ground-state plaquette energy ``m``;
occupied dual sites are joined along the torus edges of the dual lattice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .rotor_model import FieldSpec, LatticeShape, XYParams, plaquette_energies

__all__ = [
    "LowEnergyGraph",
    "ClusterReport",
    "UnionFind",
    "build_low_energy_graph",
    "connected_clusters",
    "classify_cluster",
    "stable_delta",
    "report_row",
    "CSV_HEADER",
]

CSV_HEADER = "delta,n_vertices,n_clusters,largest_fraction,spans,orientation_of_largest"


@dataclass
class LowEnergyGraph:
    config: np.ndarray
    energies: np.ndarray  # plaquette energy per dual site, (L, L)
    vertices: np.ndarray  # bool (L, L)
    m: float
    delta: float

    @property
    def side(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.sum())

    def edges(self):
        """Occupied nearest-neighbour dual pairs ``(a, b, (dr, dc))`` with ``b = a + (dr, dc)``."""
        L = self.side
        out = []
        for r, c in zip(*np.nonzero(self.vertices)):
            for dr, dc in ((0, 1), (1, 0)):
                r2, c2 = (r + dr) % L, (c + dc) % L
                if self.vertices[r2, c2]:
                    out.append((int(r * L + c), int(r2 * L + c2), (dr, dc)))
        return out


def build_low_energy_graph(config, params: XYParams, fields: FieldSpec | None, delta: float,
                           ground) -> LowEnergyGraph:
    """Occupy the dual sites with ``plaquette_energy <= m + delta``.

    ``ground`` is the :class:`GroundStatePair` for the same parameters; its
    ``m`` is re-derived from ``(params, fields)`` and a mismatch is rejected.
    """
    if not np.isfinite(delta) or delta < 0:
        raise UsageError(f"delta must be finite and >= 0, got {delta}")
    config = np.asarray(config, dtype=float)
    if config.shape != ground.x_ri.shape:
        raise UsageError(f"config shape {config.shape} does not match ground state {ground.x_ri.shape}")
    m = float(ground.m)
    check = plaquette_energies(ground.x_ri, params, fields)
    tol = 1e-12 * max(1.0, abs(m))
    if np.max(np.abs(check - m)) > tol:
        raise UsageError(
            f"ground-state energy m={m!r} is inconsistent with the given params/fields "
            f"(recomputed {float(check.min())!r})"
        )
    energies = plaquette_energies(config, params, fields)
    return LowEnergyGraph(config, energies, energies <= m + delta + tol, m, float(delta))


class UnionFind:
    """Union-find with path compression that also tracks lattice offsets.

    ``offset[x]`` is the unwrapped displacement from ``x`` to its parent;
    joining two sites of one cluster along a displacement that disagrees
    with the stored offsets means the cluster winds around the torus.
    """

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.offset = [(0, 0)] * n
        self.wraps = [False] * n

    def find(self, x):
        """Return ``(root, displacement from x to root)``."""
        path = []
        while self.parent[x] != x:
            path.append(x)
            x = self.parent[x]
        root = x
        # compress, accumulating offsets from the top of the path down
        acc = (0, 0)
        for node in reversed(path):
            o = self.offset[node]
            acc = (acc[0] + o[0], acc[1] + o[1])
            self.offset[node] = acc
            self.parent[node] = root
        return root, (self.offset[path[0]] if path else (0, 0))

    def union(self, a, b, d):
        """Join ``a`` and ``b`` where ``b`` sits at ``a + d`` in unwrapped coordinates."""
        ra, oa = self.find(a)
        rb, ob = self.find(b)
        # offsets are pos(root) - pos(x)
        if ra == rb:
            if (oa[0] - d[0] - ob[0], oa[1] - d[1] - ob[1]) != (0, 0):
                self.wraps[ra] = True
            return
        # pos(rb) = pos(b) + ob = pos(a) + d + ob = pos(ra) - oa + d + ob
        self.parent[rb] = ra
        self.offset[rb] = (oa[0] - d[0] - ob[0], oa[1] - d[1] - ob[1])
        self.wraps[ra] = self.wraps[ra] or self.wraps[rb]


@dataclass
class ClusterReport:
    labels: np.ndarray  # (L, L) cluster id per dual site, -1 if unoccupied
    sizes: list
    spans_by_cluster: list
    orientations: list
    largest_fraction: float
    spans: bool
    members: list = field(default_factory=list, repr=False)

    @property
    def n_clusters(self) -> int:
        return len(self.sizes)

    @property
    def percolates(self) -> bool:
        """Finite-volume proxy: the largest cluster wraps or covers half the dual lattice."""
        return self.spans or self.largest_fraction >= 0.5

    @property
    def orientation_of_largest(self) -> str:
        return self.orientations[0] if self.orientations else "none"


def connected_clusters(graph: LowEnergyGraph) -> ClusterReport:
    """Clusters ordered by decreasing size (ties by smallest member)."""
    L = graph.side
    uf = UnionFind(L * L)
    for a, b, d in graph.edges():
        uf.union(a, b, d)
    groups = {}
    for a in np.flatnonzero(graph.vertices.ravel()):
        root, _ = uf.find(int(a))
        groups.setdefault(root, []).append(int(a))
    ordered = sorted(groups.items(), key=lambda kv: (-len(kv[1]), kv[1][0]))
    labels = np.full(L * L, -1, dtype=np.int64)
    sizes, spans, orient, members = [], [], [], []
    for k, (root, sites) in enumerate(ordered):
        labels[sites] = k
        sizes.append(len(sites))
        spans.append(bool(uf.wraps[root]))
        orient.append(classify_cluster(graph.config, sites))
        members.append(sites)
    largest = sizes[0] / (L * L) if sizes else 0.0
    return ClusterReport(labels.reshape(L, L), sizes, spans, orient, largest,
                         bool(spans[0]) if spans else False, members)


def classify_cluster(config, cluster) -> str:
    """``'ri'`` if every plaquette of ``cluster`` has positive mean ``sin``,
    ``'le'`` if every one is negative, else ``'mixed'``."""
    x = np.asarray(config, dtype=float)
    L = LatticeShape.of(x).side
    cluster = list(cluster)
    if not cluster:
        raise UsageError("cannot classify an empty cluster")
    s = np.sin(x)
    signs = set()
    for a in cluster:
        r, c = divmod(int(a), L)
        r1, c1 = (r + 1) % L, (c + 1) % L
        mean = 0.25 * (s[r, c] + s[r, c1] + s[r1, c] + s[r1, c1])
        signs.add(1 if mean > 0 else (-1 if mean < 0 else 0))
    if signs == {1}:
        return "ri"
    if signs == {-1}:
        return "le"
    return "mixed"


def stable_delta(configs, params: XYParams, fields: FieldSpec | None, ground, deltas) -> float:
    """Largest ``delta`` of the increasing list ``deltas`` up to which no
    cluster of any config is mixed; 0.0 if the first value already fails."""
    best = 0.0
    for d in sorted(deltas):
        for x in configs:
            rep = connected_clusters(build_low_energy_graph(x, params, fields, d, ground))
            if "mixed" in rep.orientations:
                return best
        best = float(d)
    return best


def report_row(delta: float, graph: LowEnergyGraph, report: ClusterReport) -> str:
    return (f"{delta:.17g},{graph.n_vertices},{report.n_clusters},{report.largest_fraction:.17g},"
            f"{int(report.spans)},{report.orientation_of_largest}")
