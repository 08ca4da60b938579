"""The directed graph a point-shift induces on a configuration.

Every point carries at most one out-edge (to its image), so connected
components consist of trees hanging off a single cycle, and iterating
the shift sorts each component into generations.  On a finite window
only fully observed components can be classified honestly: a component
is labeled FF exactly when no member's evaluation was censored and no
member could receive an edge from outside the window; everything else
is labeled CENSORED rather than guessed.

For FF components the cycle, the foils (classes of points whose
forward orbits have merged), the per-vertex distance to the cycle, and
the primeval subset (points surviving every forward image) are
computed and cross-checked: one cycle per component, foil count equal
to cycle length, primeval set equal to the cycle vertex set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import groups, shifts
from .groups import ParallelogramD
from .sampling import PointConfiguration
from .shifts import CensoredEvaluationError, EvaluatedShift, PointShiftSpec

CLASS_FF = "FF"
CLASS_CENSORED = "CENSORED"


@dataclass
class ShiftGraph:
    """Vertices are configuration indices; ``out_edge[i] = -1`` means censored."""

    config: PointConfiguration
    shift: PointShiftSpec
    out_edge: np.ndarray
    censored: np.ndarray
    candidates: np.ndarray
    exposed: np.ndarray

    @property
    def n(self) -> int:
        return self.config.n

    def in_degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        for j in self.out_edge:
            if j >= 0:
                deg[j] += 1
        return deg


def build_graph(shift: PointShiftSpec, config: PointConfiguration) -> ShiftGraph:
    ev: EvaluatedShift = shifts.evaluate_all(shift, config)
    return ShiftGraph(config, shift, ev.images, ev.censored, ev.candidates, ev.exposed)


@dataclass
class ComponentRecord:
    """One undirected component of the shift graph with its classification."""

    vertices: list[int]
    klass: str
    cycle: list[int] | None = None
    foils: list[list[int]] | None = None
    generations: dict[int, int] | None = None  # vertex -> distance to cycle
    primeval: list[int] | None = None


def _undirected_components(graph: ShiftGraph) -> list[list[int]]:
    n = graph.n
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    for i in range(n):
        # candidate edges of censored vertices still bind components:
        # the true image is either the candidate or something unseen.
        j = int(graph.candidates[i])
        if j >= 0:
            union(i, j)
    comps: dict[int, list[int]] = {}
    for i in range(n):
        comps.setdefault(find(i), []).append(i)
    return list(comps.values())


def _analyze_ff_component(graph: ShiftGraph, members: list[int]) -> ComponentRecord:
    out = {v: int(graph.out_edge[v]) for v in members}
    size = len(members)

    # Walk far enough to be on the cycle, then read it off.
    v = members[0]
    for _ in range(size):
        v = out[v]
    cycle = [v]
    w = out[v]
    while w != v:
        cycle.append(w)
        w = out[w]

    # Foils are the level sets of the ``size``-fold iterate: orbits that
    # merge must have merged within |C| steps in a finite component.
    final: dict[int, int] = {}
    for u in members:
        w = u
        for _ in range(size):
            w = out[w]
        final[u] = w
    foil_map: dict[int, list[int]] = {}
    for u in members:
        foil_map.setdefault(final[u], []).append(u)
    foils = [sorted(foil_map[k]) for k in sorted(foil_map)]

    primeval = sorted(set(final.values()))

    cycle_set = set(cycle)
    generations: dict[int, int] = {}
    for u in members:
        steps = 0
        w = u
        while w not in cycle_set:
            w = out[w]
            steps += 1
        generations[u] = steps

    if set(primeval) != cycle_set:
        raise RuntimeError("primeval subset of a finite component must equal its cycle")
    if len(foils) != len(cycle):
        raise RuntimeError("foil count of a finite component must equal its cycle length")
    if sorted(u for foil in foils for u in foil) != sorted(members):
        raise RuntimeError("foils must partition the component")

    return ComponentRecord(
        vertices=sorted(members),
        klass=CLASS_FF,
        cycle=cycle,
        foils=foils,
        generations=generations,
        primeval=primeval,
    )


def components(graph: ShiftGraph) -> list[ComponentRecord]:
    """Undirected components, classified FF or CENSORED.

    A component touching a censored vertex cannot be told apart from
    the visible part of a larger (possibly infinite) component, so it
    is reported as CENSORED; class IF/II cannot be certified on a
    finite window at all.  On compact models nothing censors and the
    classification is absolute; elsewhere FF certifies the structure of
    the component as observed through the window.
    """
    records = []
    for members in _undirected_components(graph):
        if any(graph.censored[v] for v in members):
            records.append(ComponentRecord(vertices=sorted(members), klass=CLASS_CENSORED))
        else:
            records.append(_analyze_ff_component(graph, members))
    return records


def descendant_count(graph: ShiftGraph, x, n: int) -> int:
    """Number of points mapped onto ``x`` by the n-fold iterate.

    Walks the in-edges back ``n`` levels.  If any vertex on the walk is
    censored, or could receive an edge from outside the window, the
    true count is undecidable and a ``CensoredEvaluationError`` is
    raised.
    """
    if n < 0:
        raise ValueError("descendant depth must be nonnegative")
    i = shifts._resolve_index(graph.config, x)
    if n == 0:
        return 1
    in_lists: dict[int, list[int]] = {}
    for u in range(graph.n):
        c = int(graph.candidates[u])
        if c >= 0:
            in_lists.setdefault(c, []).append(u)
    level = {i}
    for _ in range(n):
        if any(graph.exposed[v] for v in level):
            raise CensoredEvaluationError(
                "descendant count undecidable: a vertex on the walk may have unseen preimages"
            )
        nxt: set[int] = set()
        for v in level:
            for u in in_lists.get(v, []):
                if graph.censored[u]:
                    raise CensoredEvaluationError(
                        "descendant count undecidable: censored vertex on the walk"
                    )
                nxt.add(u)
        level = nxt
    return len(level)


@dataclass(frozen=True)
class StripOrbitStats:
    """Orbit-of-the-identity statistics for the strip shift."""

    stabilized: bool
    censored: bool
    steps: int
    strip_occupancy_sum: float


def strip_fixed_point_stats(
    shift: PointShiftSpec, config: PointConfiguration, max_steps: int = 200
) -> StripOrbitStats:
    """Iterate the strip shift from the identity atom until it pins down.

    ``strip_occupancy_sum`` accumulates, along the orbit, the number of
    other configuration points inside each visited (truncated) strip;
    the orbit has stabilized once that count hits zero, i.e. the
    current point is the right-most point of its own strip.
    """
    if shift.kind != shifts.STRIP:
        raise ValueError("strip_fixed_point_stats expects a strip shift")
    base = config.identity_index()
    pts = config.points
    a, b = pts[:, 0], pts[:, 1]
    model = config.model
    current = base
    occupancy = 0.0
    for step in range(max_steps + 1):
        strip = shifts.dependency_strip(shift, pts[current])
        if not groups.contains_window(model, config.window, strip):
            return StripOrbitStats(False, True, step, occupancy)
        reach = a[current] * shift.a_max_ratio
        in_strip = (
            (a >= a[current])
            & (a <= reach)
            & (np.abs(b - b[current]) <= shift.delta * a[current])
        )
        members = np.where(in_strip)[0]
        occupancy += members.size - 1
        if members.size == 1:
            return StripOrbitStats(True, False, step, occupancy)
        top = a[members].max()
        best = members[a[members] == top]
        nxt = int(best[0]) if best.size == 1 else shifts._lex_max(pts, best)
        if nxt == current:
            return StripOrbitStats(True, False, step, occupancy)
        current = nxt
    return StripOrbitStats(False, False, max_steps, occupancy)


def parallelogram_mass(delta: float, a_min: float) -> float:
    """Closed-form Haar mass of the fixed-point catchment parallelogram
    truncated to ``a >= a_min`` (0 < a_min <= 1/2).

    Diverges like ``2*delta*log(1/(2*a_min))`` as ``a_min -> 0``, which
    is the engine behind fixed points accumulating preimages.
    """
    if a_min <= 0:
        raise ValueError("a_min must be positive")
    region = ParallelogramD(delta, a_min)
    return groups.haar_mass(groups.ax_b(), region)
