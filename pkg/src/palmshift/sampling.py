"""Point-process samplers and Palm-version constructions.

Two process families are provided: homogeneous Poisson processes with
respect to the model's Haar measure (every model) and the stationarized
unit-spacing lattice on the euclidean line (a deterministic oracle for
identities that hold exactly).  Palm versions come two independent
ways: the Poisson one through the add-a-point construction, and a
window-average estimator that any stationary sampler supports.

All samplers are pure functions of ``(spec, window, RngStream)``;
replications with distinct stream ids are reproducible bit-for-bit and
embarrassingly parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import groups
from .groups import Box, GroupModel, Window


class SimplicityError(RuntimeError):
    """A sample produced duplicate points; should never happen."""


@dataclass(frozen=True)
class RngStream:
    """Deterministic, splittable random stream identified by (seed, stream_id)."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.default_rng(seq)

    def shifted(self, offset: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + offset)


def _generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or numpy Generator")


@dataclass(frozen=True)
class ProcessSpec:
    """Process family: ``poisson(intensity)`` or ``lattice(spacing)``."""

    kind: str
    intensity_: float = 0.0
    spacing: float = 0.0

    @property
    def intensity(self) -> float:
        """Points per unit Haar mass."""
        if self.kind == "poisson":
            return self.intensity_
        return 1.0 / self.spacing


def poisson(intensity: float) -> ProcessSpec:
    if not (intensity > 0.0 and math.isfinite(intensity)):
        raise ValueError(f"poisson intensity must be finite and positive, got {intensity}")
    return ProcessSpec("poisson", intensity_=float(intensity))


def lattice(spacing: float) -> ProcessSpec:
    if spacing <= 0:
        raise ValueError("lattice spacing must be positive")
    return ProcessSpec("lattice", spacing=float(spacing))


@dataclass(frozen=True)
class PointConfiguration:
    """A finite realization of a simple point process on a window.

    ``points`` is an (n, dim) array.  When ``contains_identity`` is
    set, the identity atom sits at row 0 exactly.  Configurations are
    immutable by convention: no code in this package mutates ``points``
    after construction.  ``censor_margin`` optionally records an inner
    region inside which evaluations are known to be boundary-safe; it
    is carried as metadata for experiment bookkeeping.
    """

    model: GroupModel
    window: Window
    points: np.ndarray
    contains_identity: bool = False
    censor_margin: Window | None = None

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def identity_index(self) -> int:
        if not self.contains_identity:
            raise ValueError("configuration does not carry an identity atom")
        return 0

    def index_of(self, element) -> int:
        """Index of an exact coordinate match; raises if absent."""
        el = np.asarray(element, dtype=float)
        hits = np.where(np.all(self.points == el, axis=1))[0]
        if hits.size == 0:
            raise ValueError(f"element {el} is not a point of the configuration")
        return int(hits[0])


def _assert_simple(points: np.ndarray) -> None:
    if points.shape[0] < 2:
        return
    order = np.lexsort(points.T[::-1])
    sorted_pts = points[order]
    dup = np.all(sorted_pts[1:] == sorted_pts[:-1], axis=1)
    if np.any(dup):
        raise SimplicityError("sample contains coincident points")


def _poisson_locations(model: GroupModel, window: Box, n: int, gen: np.random.Generator) -> np.ndarray:
    lo = np.asarray(window.lo)
    hi = np.asarray(window.hi)
    if model.kind in (groups.EUCLIDEAN, groups.TORUS):
        return gen.uniform(lo, hi, size=(n, model.dim))
    # ax_b: a-coordinate by inverse CDF of the 1/a^2 marginal, b uniform.
    a_lo, a_hi = lo[0], hi[0]
    inv_lo = 1.0 / a_lo
    inv_hi = 0.0 if math.isinf(a_hi) else 1.0 / a_hi
    u = gen.uniform(size=n)
    a = 1.0 / (inv_lo - u * (inv_lo - inv_hi))
    b = gen.uniform(lo[1], hi[1], size=n)
    return np.column_stack([a, b])


def sample(spec: ProcessSpec, model: GroupModel, window: Window, rng) -> PointConfiguration:
    """Draw one stationary realization on the window.

    Poisson: the count is Poisson(intensity * haar_mass(window)) and
    locations are i.i.d. with density proportional to the Haar density.
    Lattice (euclidean d=1 only): the grid ``phase + spacing * Z`` with
    a uniform random phase.
    """
    gen = _generator(rng)
    if spec.kind == "poisson":
        if not isinstance(window, Box):
            raise ValueError("poisson sampling expects a box window")
        mass = groups.haar_mass(model, window)  # raises InfiniteMassError when unbounded
        n = int(gen.poisson(spec.intensity_ * mass))
        pts = _poisson_locations(model, window, n, gen)
        _assert_simple(pts)
        return PointConfiguration(model, window, pts)
    if model.kind != groups.EUCLIDEAN or model.dim != 1:
        raise ValueError("the lattice process is available only on euclidean d=1")
    lo, hi = window.lo[0], window.hi[0]
    s = spec.spacing
    phase = gen.uniform(0.0, s)
    k_lo = math.ceil((lo - phase) / s)
    k_hi = math.floor((hi - phase) / s)
    pts = (phase + s * np.arange(k_lo, k_hi + 1, dtype=float))[:, None]
    return PointConfiguration(model, window, pts)


def palm_sample_slivnyak(spec: ProcessSpec, model: GroupModel, window: Box, rng) -> PointConfiguration:
    """Palm version of the Poisson process: a fresh sample plus an atom
    at the identity (valid for Poisson and only for Poisson)."""
    if spec.kind != "poisson":
        raise ValueError("the add-a-point Palm construction applies only to Poisson processes")
    e = model.identity()
    if not bool(groups.contains_points(model, window, e)):
        raise ValueError("window must contain the identity for Palm sampling")
    base = sample(spec, model, window, rng)
    pts = np.vstack([e[None, :], base.points])
    _assert_simple(pts)
    return PointConfiguration(model, window, pts, contains_identity=True)


def palm_sample_lattice(spec: ProcessSpec, window: Box) -> PointConfiguration:
    """Palm version of the lattice process: the grid anchored at 0."""
    if spec.kind != "lattice":
        raise ValueError("palm_sample_lattice expects a lattice spec")
    s = spec.spacing
    lo, hi = window.lo[0], window.hi[0]
    k_lo = math.ceil(lo / s)
    k_hi = math.floor(hi / s)
    ks = np.arange(k_lo, k_hi + 1, dtype=float)
    # identity atom first, then the rest in ascending order
    ks = np.concatenate([[0.0], ks[ks != 0.0]])
    model = groups.euclidean(1)
    return PointConfiguration(model, window, (s * ks)[:, None], contains_identity=True)


def recenter(config: PointConfiguration, base: int) -> PointConfiguration:
    """Left-translate the configuration by the inverse of point ``base``.

    The base point lands exactly on the identity (set by construction,
    not by arithmetic); the window is translated alongside.
    """
    model = config.model
    x = config.points[base]
    pts = model.multiply(model.invert(x), config.points)
    pts[base] = model.identity()
    window = groups.translate_window(model, model.invert(x), config.window)
    return PointConfiguration(model, window, pts, contains_identity=True)


def palm_expectation_window_average(
    f: Callable[[PointConfiguration, int], float],
    config: PointConfiguration,
    inner: Window,
) -> tuple[float, int]:
    """One replication of the window-average Palm estimator.

    Returns ``(sum over points X of config in inner of f(config
    recentered at X, X), count)``.  Across replications the caller
    normalizes the summed values by ``intensity * haar_mass(inner) *
    n_reps`` to estimate the Palm expectation of ``f``; the weight
    function is the normalized indicator of ``inner``.
    """
    mass = groups.haar_mass(config.model, inner)
    if mass <= 0:
        raise ValueError("inner window must have positive Haar mass")
    mask = groups.contains_points(config.model, inner, config.points)
    total = 0.0
    count = 0
    for i in np.where(mask)[0]:
        shifted = recenter(config, int(i))
        value = f(shifted, int(i))
        if value is None:
            raise ValueError("window-average functional returned None inside the inner window")
        total += value
        count += 1
    return total, count


def separation_check(
    config: PointConfiguration, feature: Callable[[np.ndarray], np.ndarray]
) -> list[tuple[int, int]]:
    """All unordered index pairs whose feature values collide exactly.

    ``feature`` maps the (n, dim) point array to one value per point.
    Exact floating equality is intentional: the coincidences being
    hunted are measure-zero events, and float collisions are their
    desk-scale surrogate.
    """
    if config.n == 0:
        return []
    values = np.asarray(feature(config.points))
    order = np.argsort(values, kind="stable")
    ties: list[tuple[int, int]] = []
    sv = values[order]
    runs = np.where(sv[1:] == sv[:-1])[0]
    for start in runs:
        i, j = int(order[start]), int(order[start + 1])
        ties.append((min(i, j), max(i, j)))
    return ties
