"""Rooted marked networks and their embedding into a group.

A configuration containing the identity becomes a rooted network by
drawing a connected graph on its points and marking each half-edge
(X, g) of an edge g = {X, Y} with the displacement of Y seen from X.
The reverse direction multiplies half-edge marks along paths from the
root: when the products are path-independent the network reconstructs
the configuration exactly, and re-rooting at v reconstructs its left
translate by the inverse of the root-to-v product.

Reconstruction collapses to the one-point configuration when two
vertices receive identical positions, the degenerate symptom of a
rooted symmetry of the marked network; generic point samples never
trigger it.

Serialization is a line-oriented adjacency-list text format, one record
per line, documented in ``serialize_network``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import groups, sampling, shifts
from .groups import GroupModel
from .sampling import PointConfiguration, RngStream
from .shifts import PointShiftSpec
from .transport import TransportReport

PATH_PRODUCT_TOL = 1e-9
COLLAPSE_TOL = 1e-12


class NotEmbeddableError(RuntimeError):
    """Half-edge marks are inconsistent with any point configuration."""


@dataclass
class RootedNetwork:
    """Connected, locally finite graph with a root and group-element marks.

    ``edges`` lists unordered vertex pairs; ``half_edge_marks[(k, v)]``
    is the mark carried by edge ``k`` at its endpoint ``v``.  For
    embedding networks the two marks of an edge are inverse to each
    other.  ``directed_out`` optionally records the orientation the
    edges had in the shift graph the network was built from;
    ``censored_vertices`` records vertices whose shift evaluation was
    not window-determined.
    """

    model: GroupModel
    n_vertices: int
    root: int
    edges: list[tuple[int, int]]
    half_edge_marks: dict[tuple[int, int], np.ndarray]
    vertex_marks: list | None = None
    directed_out: dict[int, int] | None = None
    censored_vertices: frozenset = frozenset()

    def __post_init__(self):
        if not 0 <= self.root < self.n_vertices:
            raise ValueError("root index out of range")

    def neighbors(self) -> list[list[tuple[int, int]]]:
        """Adjacency lists as (edge index, other endpoint) pairs."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n_vertices)]
        for k, (i, j) in enumerate(self.edges):
            adj[i].append((k, j))
            adj[j].append((k, i))
        return adj

    def _pair_set(self) -> set[tuple[int, int]]:
        cached = getattr(self, "_pairs", None)
        if cached is None:
            cached = {(min(i, j), max(i, j)) for i, j in self.edges}
            self._pairs = cached
        return cached

    def degree(self, v: int) -> int:
        degs = getattr(self, "_degrees", None)
        if degs is None:
            degs = np.zeros(self.n_vertices, dtype=np.int64)
            for i, j in self.edges:
                degs[i] += 1
                degs[j] += 1
            self._degrees = degs
        return int(degs[v])

    def adjacent(self, x: int, y: int) -> bool:
        return (min(x, y), max(x, y)) in self._pair_set()

    def graph_distances(self, source: int) -> np.ndarray:
        dist = np.full(self.n_vertices, -1, dtype=np.int64)
        dist[source] = 0
        adj = self.neighbors()
        queue = deque([source])
        while queue:
            v = queue.popleft()
            for _, w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
        return dist

    def rerooted(self, new_root: int) -> "RootedNetwork":
        return RootedNetwork(
            self.model,
            self.n_vertices,
            new_root,
            self.edges,
            self.half_edge_marks,
            self.vertex_marks,
            self.directed_out,
            self.censored_vertices,
        )


def _rule_edges(
    config: PointConfiguration, rule: str, shift: PointShiftSpec | None
) -> tuple[list[tuple[int, int]], dict[int, int] | None, frozenset]:
    n = config.n
    if rule == "complete":
        return [(i, j) for i in range(n) for j in range(i + 1, n)], None, frozenset()
    if rule == "delaunay_1d":
        if config.model.kind != groups.EUCLIDEAN or config.model.dim != 1:
            raise ValueError("delaunay_1d applies to euclidean d=1 configurations")
        order = np.argsort(config.points[:, 0])
        edges = [
            (min(int(order[k]), int(order[k + 1])), max(int(order[k]), int(order[k + 1])))
            for k in range(n - 1)
        ]
        return edges, None, frozenset()
    if rule == "shift_graph":
        if shift is None:
            raise ValueError("shift_graph rule needs a shift")
        ev = shifts.evaluate_all(shift, config)
        edges_set = set()
        directed: dict[int, int] = {}
        for i in range(n):
            j = int(ev.images[i])
            if j >= 0:
                directed[i] = j
                if j != i:
                    edges_set.add((min(i, j), max(i, j)))
        censored = frozenset(int(i) for i in np.where(ev.censored)[0])
        return sorted(edges_set), directed, censored
    raise ValueError(f"unknown graph rule {rule!r}")


def network_from_config(
    config: PointConfiguration,
    rule: str = "complete",
    shift: PointShiftSpec | None = None,
) -> RootedNetwork:
    """Root the configuration at its identity atom and mark half-edges
    with the displacement of the far endpoint seen from the near one."""
    root = config.identity_index()
    model = config.model
    edges, directed, censored = _rule_edges(config, rule, shift)

    marks: dict[tuple[int, int], np.ndarray] = {}
    for k, (i, j) in enumerate(edges):
        xi_inv = model.invert(config.points[i])
        xj_inv = model.invert(config.points[j])
        marks[(k, i)] = model.multiply(xi_inv, config.points[j])
        marks[(k, j)] = model.multiply(xj_inv, config.points[i])

    net = RootedNetwork(
        model,
        config.n,
        root,
        edges,
        marks,
        directed_out=directed,
        censored_vertices=censored,
    )
    if config.n and np.any(net.graph_distances(root) < 0):
        raise ValueError(f"graph rule {rule!r} produced a disconnected network")
    return net


def _deviation(model: GroupModel, a: np.ndarray, b: np.ndarray) -> float:
    """Coordinate deviation between group elements; wrap-aware on the torus."""
    diff = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    if model.kind == groups.TORUS:
        diff = np.minimum(diff, 1.0 - diff)
    return float(np.max(diff))


def path_products(network: RootedNetwork) -> np.ndarray:
    """Root-to-vertex mark products along a spanning tree, with every
    non-tree edge checked for path independence.

    Raises ``NotEmbeddableError`` when some cycle's mark product strays
    from the identity by more than the tolerance, or when a pair of
    marks violates the inverse relation.
    """
    model = network.model
    n = network.n_vertices
    t = np.zeros((n, model.dim))
    t[network.root] = model.identity()
    seen = np.zeros(n, dtype=bool)
    seen[network.root] = True
    adj = network.neighbors()
    queue = deque([network.root])
    tree_edges = set()
    while queue:
        v = queue.popleft()
        for k, w in adj[v]:
            if not seen[w]:
                seen[w] = True
                tree_edges.add(k)
                t[w] = model.multiply(t[v], network.half_edge_marks[(k, v)])
                queue.append(w)
    if not np.all(seen):
        raise ValueError("network is not connected")

    e = model.identity()
    for k, (i, j) in enumerate(network.edges):
        m_ij = network.half_edge_marks[(k, i)]
        m_ji = network.half_edge_marks[(k, j)]
        if _deviation(model, model.multiply(m_ij, m_ji), e) > PATH_PRODUCT_TOL:
            raise NotEmbeddableError(
                f"half-edge marks of edge {k} are not mutually inverse"
            )
        if k in tree_edges:
            continue
        if _deviation(model, model.multiply(t[i], m_ij), t[j]) > PATH_PRODUCT_TOL:
            raise NotEmbeddableError(
                f"cycle through edge {k} has mark product away from the identity"
            )
    return t


def reconstruct(network: RootedNetwork) -> PointConfiguration:
    """Configuration realized by the network's path products.

    The root lands on the identity.  Collapses to the one-point
    configuration {identity} when two vertices receive identical
    positions (the marked network has a rooted symmetry and no faithful
    embedding).
    """
    model = network.model
    t = path_products(network)
    t[network.root] = model.identity()
    if network.n_vertices > 1:
        diff = np.abs(t[:, None, :] - t[None, :, :])
        if model.kind == groups.TORUS:
            diff = np.minimum(diff, 1.0 - diff)
        gaps = np.max(diff, axis=2)
        np.fill_diagonal(gaps, np.inf)
        if np.any(gaps <= COLLAPSE_TOL):
            pts = model.identity()[None, :]
            window = _hull_window(model, pts)
            return PointConfiguration(model, window, pts, contains_identity=True)
    window = _hull_window(model, t)
    # Points stay in vertex order so callers can compare them one-to-one
    # with the source configuration; the identity-first convention only
    # holds when the root is vertex 0 (as network_from_config arranges).
    return PointConfiguration(
        model, window, t, contains_identity=(network.root == 0)
    )


def _hull_window(model: GroupModel, pts: np.ndarray) -> groups.Box:
    if model.kind == groups.TORUS:
        return groups.full_torus(model.dim)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    pad = np.maximum(1.0, 0.1 * (hi - lo))
    lo, hi = lo - pad, hi + pad
    if model.kind == groups.AX_B:
        lo[0] = max(lo[0], pts[:, 0].min() / 2.0)
    return groups.Box(tuple(lo), tuple(hi))


def unimodularity_check(
    network_sampler,
    g,
    n_samples: int,
    rng: RngStream,
    radius: int | None = None,
) -> TransportReport:
    """Two-sided Monte Carlo check of the rooted mass transport identity:
    expected total mass the root sends equals expected total mass it
    receives.

    ``g(network, x, y)`` must vanish beyond graph distance ``radius``
    of its first argument when a radius is given; samples whose
    radius-ball around the root touches a censored vertex are
    discarded.
    """
    out_vals, in_vals = [], []
    discarded = 0
    for i in range(n_samples):
        net: RootedNetwork = network_sampler(rng.shifted(i))
        dist = net.graph_distances(net.root)
        if radius is not None:
            near = np.where((dist >= 0) & (dist <= radius + 1))[0]
            if any(int(v) in net.censored_vertices for v in near):
                discarded += 1
                continue
            vertices = [int(v) for v in np.where((dist >= 0) & (dist <= radius))[0]]
        else:
            if net.censored_vertices:
                discarded += 1
                continue
            vertices = list(range(net.n_vertices))
        out_vals.append(sum(g(net, net.root, v) for v in vertices))
        in_vals.append(sum(g(net, v, net.root) for v in vertices))
    return TransportReport.from_values(
        "mass_out_of_root",
        "mass_into_root",
        np.asarray(out_vals),
        np.asarray(in_vals),
        n_samples,
        discarded,
        discarded,
    )


# ---------------------------------------------------------------------------
# Serialization


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def serialize_network(network: RootedNetwork) -> str:
    """Adjacency-list text format, 17 significant digits per coordinate.

    Line order and fields::

        palmshift-network 1
        model <kind> <dim>
        vertices <n>
        root <index>
        vmark <vertex> <values...>          (optional, one per marked vertex)
        edge <i> <j> <mark at i ...> <mark at j ...>

    Edges appear in construction order; each edge line carries the two
    half-edge marks, ``dim`` coordinates each, endpoint ``i`` first.
    """
    lines = [
        "palmshift-network 1",
        f"model {network.model.kind} {network.model.dim}",
        f"vertices {network.n_vertices}",
        f"root {network.root}",
    ]
    if network.vertex_marks is not None:
        for v, mark in enumerate(network.vertex_marks):
            if mark is None:
                continue
            vals = " ".join(_fmt(x) for x in np.atleast_1d(mark))
            lines.append(f"vmark {v} {vals}")
    for k, (i, j) in enumerate(network.edges):
        mi = " ".join(_fmt(x) for x in network.half_edge_marks[(k, i)])
        mj = " ".join(_fmt(x) for x in network.half_edge_marks[(k, j)])
        lines.append(f"edge {i} {j} {mi} {mj}")
    return "\n".join(lines) + "\n"


def parse_network(text: str) -> RootedNetwork:
    lines = [line.strip() for line in text.strip().splitlines() if line.strip()]
    if not lines or lines[0] != "palmshift-network 1":
        raise ValueError("not a palmshift network document")
    _, kind, dim = lines[1].split()
    dim = int(dim)
    if kind == groups.EUCLIDEAN:
        model = groups.euclidean(dim)
    elif kind == groups.TORUS:
        model = groups.torus(dim)
    elif kind == groups.AX_B:
        model = groups.ax_b()
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    n = int(lines[2].split()[1])
    root = int(lines[3].split()[1])
    edges: list[tuple[int, int]] = []
    marks: dict[tuple[int, int], np.ndarray] = {}
    vertex_marks: list | None = None
    for line in lines[4:]:
        parts = line.split()
        if parts[0] == "vmark":
            if vertex_marks is None:
                vertex_marks = [None] * n
            vertex_marks[int(parts[1])] = np.array([float(x) for x in parts[2:]])
            continue
        if parts[0] != "edge":
            raise ValueError(f"unexpected record {parts[0]!r}")
        i, j = int(parts[1]), int(parts[2])
        vals = [float(x) for x in parts[3:]]
        if len(vals) != 2 * dim:
            raise ValueError("edge record has wrong number of mark coordinates")
        k = len(edges)
        edges.append((i, j))
        marks[(k, i)] = np.array(vals[:dim])
        marks[(k, j)] = np.array(vals[dim:])
    return RootedNetwork(model, n, root, edges, marks, vertex_marks=vertex_marks)
