"""Flow-adapted point-shift rules and their censored evaluation.

Four rules are built in:

* ``strip_shift(delta, a_max_ratio)`` on ax_b: send X to the point of
  the configuration with maximal a-coordinate inside the strip
  anchored at X, truncated at ``a_X * a_max_ratio``.  The truncation is
  multiplicative so the rule commutes exactly with left translation;
  the Haar mass it discards is ``2*delta/a_max_ratio`` uniformly in the
  anchor (the default ratio of 1e4 keeps that below 1e-4 of the strip
  mass).
* ``right_neighbor()`` on euclidean d=1: the nearest point strictly to
  the right.
* ``nearest_neighbor()`` on euclidean or torus models: the point
  minimizing euclidean (resp. torus geodesic) distance, lexicographic
  tie-break.
* ``identity_shift()`` on any model.

Evaluation on a finite window is censored whenever the rule's
dependency region is not contained in the window, so every uncensored
image agrees with the infinite-volume shift.  Alongside the censored
verdict we track the best in-window candidate (what the image would be
if nothing outside the window interferes) and a per-point exposure
flag (could an unseen point outside the window map here); both feed
the honest preimage and descendant-count logic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import groups
from .groups import Box, GroupModel, Strip
from .sampling import PointConfiguration

STRIP = "strip"
RIGHT_NEIGHBOR = "right_neighbor"
NEAREST_NEIGHBOR = "nearest_neighbor"
IDENTITY = "identity"

DEFAULT_STRIP_RATIO = 1e4


class NotBijectiveError(RuntimeError):
    """Raised when a unique preimage is required but does not exist."""


class CensoredEvaluationError(RuntimeError):
    """Raised when boundary effects make a requested quantity undecidable."""


@dataclass(frozen=True)
class PointShiftSpec:
    kind: str
    delta: float = 0.0
    a_max_ratio: float = 0.0

    def describe(self) -> str:
        if self.kind == STRIP:
            return f"strip(delta={self.delta}, a_max_ratio={self.a_max_ratio})"
        return self.kind


def strip_shift(delta: float, a_max_ratio: float = DEFAULT_STRIP_RATIO) -> PointShiftSpec:
    if delta <= 0:
        raise ValueError("strip delta must be positive")
    if a_max_ratio <= 1:
        raise ValueError("strip truncation ratio must exceed 1")
    return PointShiftSpec(STRIP, delta=float(delta), a_max_ratio=float(a_max_ratio))


def right_neighbor() -> PointShiftSpec:
    return PointShiftSpec(RIGHT_NEIGHBOR)


def nearest_neighbor() -> PointShiftSpec:
    return PointShiftSpec(NEAREST_NEIGHBOR)


def identity_shift() -> PointShiftSpec:
    return PointShiftSpec(IDENTITY)


def validate_shift_model(shift: PointShiftSpec, model: GroupModel) -> None:
    kind = shift.kind
    if kind == STRIP and model.kind != groups.AX_B:
        raise ValueError("the strip shift is defined on the ax_b model only")
    if kind == RIGHT_NEIGHBOR and not (model.kind == groups.EUCLIDEAN and model.dim == 1):
        raise ValueError("right_neighbor is defined on euclidean d=1 only")
    if kind == NEAREST_NEIGHBOR and model.kind == groups.AX_B:
        raise ValueError("nearest_neighbor is defined on euclidean and torus models")
    if kind not in (STRIP, RIGHT_NEIGHBOR, NEAREST_NEIGHBOR, IDENTITY):
        raise ValueError(f"unknown shift kind {kind!r}")


@dataclass(frozen=True)
class ShiftEvaluation:
    """Outcome of evaluating a shift at one point of a configuration."""

    source: np.ndarray
    image: np.ndarray | None
    censored: bool
    source_index: int
    image_index: int | None


def dependency_strip(shift: PointShiftSpec, x) -> Strip:
    """The truncated strip read by a strip-shift evaluation at ``x``."""
    a, b = float(x[0]), float(x[1])
    return Strip((a, b), shift.delta, a * shift.a_max_ratio)


def strip_preimage_bounds(shift: PointShiftSpec, x) -> Box:
    """Bounding box of the region whose truncated strip contains ``x``."""
    a, b = float(x[0]), float(x[1])
    half = shift.delta * a
    return Box((a / shift.a_max_ratio, b - half), (a, b + half))


def _ball_in_box(point: np.ndarray, radius: float, window: Box) -> bool:
    lo = np.asarray(window.lo)
    hi = np.asarray(window.hi)
    return bool(np.all(point - radius >= lo) and np.all(point + radius <= hi))


def _lex_max(points: np.ndarray, indices: np.ndarray) -> int:
    """Index (into the original array) of the lexicographic maximum."""
    sub = points[indices]
    order = np.lexsort(sub.T[::-1])
    return int(indices[order[-1]])


def _lex_min(points: np.ndarray, indices: np.ndarray) -> int:
    sub = points[indices]
    order = np.lexsort(sub.T[::-1])
    return int(indices[order[0]])


def _torus_delta(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.abs(a - b)
    return np.minimum(d, 1.0 - d)


@dataclass
class EvaluatedShift:
    """Vectorized evaluation of a shift on every point of a configuration.

    ``images[i]`` is -1 when censored, ``candidates[i]`` is the best
    in-window candidate regardless of censoring (-1 when none), and
    ``exposed[i]`` is True when some unseen point outside the window
    could have point i as its image.
    """

    shift: PointShiftSpec
    config: PointConfiguration
    images: np.ndarray
    censored: np.ndarray
    candidates: np.ndarray
    exposed: np.ndarray


def evaluate_all(shift: PointShiftSpec, config: PointConfiguration) -> EvaluatedShift:
    validate_shift_model(shift, config.model)
    n = config.n
    pts = config.points
    censored = np.zeros(n, dtype=bool)
    candidates = np.full(n, -1, dtype=np.int64)
    exposed = np.zeros(n, dtype=bool)
    window = config.window

    if shift.kind == IDENTITY:
        candidates = np.arange(n, dtype=np.int64)
    elif shift.kind == RIGHT_NEIGHBOR:
        x = pts[:, 0]
        order = np.argsort(x, kind="stable")
        candidates[order[:-1]] = order[1:]
        if n > 0:
            censored[order[-1]] = True  # no right neighbor visible
            exposed[order[0]] = True  # an unseen point to the left could map here
    elif shift.kind == NEAREST_NEIGHBOR:
        if n == 1:
            if config.model.kind == groups.TORUS:
                candidates[0] = 0  # sole point of a fully observed compact model
            else:
                censored[0] = True
                exposed[0] = True
        elif n > 1:
            if config.model.kind == groups.TORUS:
                diffs = _torus_delta(pts[:, None, :], pts[None, :, :])
            else:
                diffs = np.abs(pts[:, None, :] - pts[None, :, :])
            dist = np.sqrt(np.sum(diffs**2, axis=2))
            np.fill_diagonal(dist, np.inf)
            for i in range(n):
                row = dist[i]
                m = row.min()
                nearest = np.where(row == m)[0]
                cand = nearest[0] if nearest.size == 1 else _lex_min(pts, nearest)
                candidates[i] = cand
                if config.model.kind == groups.EUCLIDEAN:
                    censored[i] = not _ball_in_box(pts[i], m, window)
            if config.model.kind == groups.EUCLIDEAN:
                if config.model.dim == 1:
                    exposed[int(np.argmin(pts[:, 0]))] = True
                    exposed[int(np.argmax(pts[:, 0]))] = True
                else:
                    # No cheap certificate that a Voronoi cell avoids the
                    # boundary in d >= 2; treat every point as exposed.
                    exposed[:] = True
    else:  # strip
        a = pts[:, 0]
        b = pts[:, 1]
        for i in range(n):
            reach = a[i] * shift.a_max_ratio
            in_strip = (a >= a[i]) & (a <= reach) & (np.abs(b - b[i]) <= shift.delta * a[i])
            members = np.where(in_strip)[0]
            if members.size:
                top = a[members].max()
                best = members[a[members] == top]
                candidates[i] = best[0] if best.size == 1 else _lex_max(pts, best)
            censored[i] = not groups.contains_window(
                config.model, window, dependency_strip(shift, pts[i])
            )
            exposed[i] = not groups.contains_window(
                config.model, window, strip_preimage_bounds(shift, pts[i])
            )

    images = np.where(censored, -1, candidates)
    return EvaluatedShift(shift, config, images, censored, candidates, exposed)


def _evaluation(config: PointConfiguration, ev: EvaluatedShift, i: int) -> ShiftEvaluation:
    if ev.censored[i]:
        return ShiftEvaluation(config.points[i], None, True, i, None)
    j = int(ev.images[i])
    return ShiftEvaluation(config.points[i], config.points[j], False, i, j)


def _resolve_index(config: PointConfiguration, x) -> int:
    if isinstance(x, (int, np.integer)):
        i = int(x)
        if not 0 <= i < config.n:
            raise ValueError(f"point index {i} out of range")
        return i
    return config.index_of(x)


def _single_candidate(shift: PointShiftSpec, config: PointConfiguration, i: int) -> tuple[int, bool]:
    """(best in-window candidate or -1, censored flag) for one point, O(n)."""
    pts = config.points
    window = config.window
    if shift.kind == IDENTITY:
        return i, False
    if shift.kind == RIGHT_NEIGHBOR:
        x = pts[:, 0]
        right = np.where(x > x[i])[0]
        if right.size == 0:
            return -1, True
        return int(right[np.argmin(x[right])]), False
    if shift.kind == NEAREST_NEIGHBOR:
        if config.n == 1:
            if config.model.kind == groups.TORUS:
                return i, False
            return -1, True
        if config.model.kind == groups.TORUS:
            diffs = _torus_delta(pts, pts[i])
        else:
            diffs = np.abs(pts - pts[i])
        dist = np.sqrt(np.sum(diffs**2, axis=1))
        dist[i] = np.inf
        m = dist.min()
        nearest = np.where(dist == m)[0]
        cand = int(nearest[0]) if nearest.size == 1 else _lex_min(pts, nearest)
        if config.model.kind == groups.EUCLIDEAN:
            return cand, not _ball_in_box(pts[i], m, window)
        return cand, False
    # strip
    a, b = pts[:, 0], pts[:, 1]
    reach = a[i] * shift.a_max_ratio
    in_strip = (a >= a[i]) & (a <= reach) & (np.abs(b - b[i]) <= shift.delta * a[i])
    members = np.where(in_strip)[0]
    if members.size == 0:
        cand = -1
    else:
        top = a[members].max()
        best = members[a[members] == top]
        cand = int(best[0]) if best.size == 1 else _lex_max(pts, best)
    censored = not groups.contains_window(
        config.model, window, dependency_strip(shift, pts[i])
    )
    return cand, censored


def evaluate_at(shift: PointShiftSpec, config: PointConfiguration, x) -> ShiftEvaluation:
    """Evaluate the shift at one point without building the full graph."""
    validate_shift_model(shift, config.model)
    i = _resolve_index(config, x)
    cand, censored = _single_candidate(shift, config, i)
    if censored:
        return ShiftEvaluation(config.points[i], None, True, i, None)
    return ShiftEvaluation(config.points[i], config.points[cand], False, i, cand)


def apply(shift: PointShiftSpec, config: PointConfiguration, x) -> ShiftEvaluation:
    """Evaluate the shift at one point (given by index or exact coordinates)."""
    return evaluate_at(shift, config, x)


@dataclass(frozen=True)
class OrbitResult:
    """The orbit of a point under iterated application of a shift."""

    evaluations: list[ShiftEvaluation]
    stabilized: bool
    stabilized_at: int | None
    censored: bool


def iterate(shift: PointShiftSpec, config: PointConfiguration, x, n: int) -> OrbitResult:
    """Orbit [H^0(x), ..., H^n(x)], stopping early with a censored tail.

    ``stabilized_at`` is the first k with H^{k+1}(x) = H^k(x); once a
    fixed point is reached the remaining entries repeat it.
    """
    if n < 0:
        raise ValueError("orbit length must be nonnegative")
    validate_shift_model(shift, config.model)
    i = _resolve_index(config, x)
    here = config.points[i]
    orbit = [ShiftEvaluation(here, here, False, i, i)]
    current = i
    for _ in range(n):
        step = evaluate_at(shift, config, current)
        orbit.append(step)
        if step.censored:
            return OrbitResult(orbit, False, None, True)
        if step.image_index == current:
            stabilized_at = len(orbit) - 2
            while len(orbit) < n + 1:
                orbit.append(step)
            return OrbitResult(orbit, True, stabilized_at, False)
        current = step.image_index
    final = evaluate_at(shift, config, current)
    stabilized = not final.censored and final.image_index == current
    return OrbitResult(orbit, stabilized, n if stabilized else None, False)


@dataclass(frozen=True)
class PreimageAnalysis:
    definite: list[int]
    threatened: bool


def preimage_analysis(
    shift: PointShiftSpec, config: PointConfiguration, x, ev: EvaluatedShift | None = None
) -> PreimageAnalysis:
    """Known preimages of ``x`` plus a flag for boundary uncertainty.

    ``threatened`` is set when either an unseen point outside the
    window could map to ``x``, or a censored in-window point has ``x``
    as its best candidate image (so its true image might be ``x``).
    """
    i = _resolve_index(config, x)
    if ev is None:
        ev = evaluate_all(shift, config)
    uncensored = ~ev.censored
    definite = np.where(uncensored & (ev.images == i))[0]
    threat = bool(ev.exposed[i]) or bool(np.any(ev.censored & (ev.candidates == i)))
    return PreimageAnalysis([int(k) for k in definite], threat)


def preimages(shift: PointShiftSpec, config: PointConfiguration, x) -> list[np.ndarray]:
    """All non-censored points whose image is ``x``."""
    analysis = preimage_analysis(shift, config, x)
    return [config.points[k] for k in analysis.definite]


def identity_preimage_analysis(shift: PointShiftSpec, config: PointConfiguration) -> PreimageAnalysis:
    """Preimages of the identity atom, via per-rule shortcuts.

    Matches ``preimage_analysis`` exactly but avoids the full O(n^2)
    evaluation for the rules whose preimage candidates are confined to
    a small known region (right neighbor: the nearest left point;
    strip: the region of anchors whose strip reaches the identity).
    """
    validate_shift_model(shift, config.model)
    base = config.identity_index()
    pts = config.points
    if shift.kind == IDENTITY:
        return PreimageAnalysis([base], False)
    if shift.kind == RIGHT_NEIGHBOR:
        x = pts[:, 0]
        left = np.where(x < x[base])[0]
        if left.size == 0:
            # an unseen point beyond the left edge would map to the
            # leftmost visible point, i.e. to the identity
            return PreimageAnalysis([], True)
        return PreimageAnalysis([int(left[np.argmax(x[left])])], False)
    if shift.kind == NEAREST_NEIGHBOR:
        return preimage_analysis(shift, config, base, evaluate_all(shift, config))
    # strip: anchors whose truncated strip can contain the identity
    a, b = pts[:, 0], pts[:, 1]
    ae, be = pts[base, 0], pts[base, 1]
    threatened = not groups.contains_window(
        config.model, config.window, strip_preimage_bounds(shift, pts[base])
    )
    mask = (a <= ae) & (a * shift.a_max_ratio >= ae) & (np.abs(be - b) <= shift.delta * a)
    definite = []
    for j in np.where(mask)[0]:
        cand, censored = _single_candidate(shift, config, int(j))
        if censored:
            if cand == base:
                threatened = True
            continue
        if cand == base:
            definite.append(int(j))
    return PreimageAnalysis(definite, threatened)


def reverse(shift: PointShiftSpec, config: PointConfiguration, x) -> ShiftEvaluation:
    """The unique preimage of ``x`` where the shift is invertible.

    Censored when boundary effects make uniqueness undecidable, an
    error when the point verifiably has zero or several preimages.
    """
    i = _resolve_index(config, x)
    analysis = preimage_analysis(shift, config, i)
    if analysis.threatened:
        return ShiftEvaluation(config.points[i], None, True, i, None)
    if len(analysis.definite) != 1:
        raise NotBijectiveError(
            f"not bijective here: point has {len(analysis.definite)} preimages"
        )
    j = analysis.definite[0]
    return ShiftEvaluation(config.points[i], config.points[j], False, i, j)


def isomodularity_defect(shift: PointShiftSpec, config: PointConfiguration) -> float:
    """Max over non-censored points of |modular(image) - modular(source)|.

    Zero means the shift acted isomodularly on this sample; identically
    zero on unimodular models.
    """
    ev = evaluate_all(shift, config)
    ok = ~ev.censored
    if not np.any(ok):
        return 0.0
    src = config.points[ok]
    img = config.points[ev.images[ok]]
    model = config.model
    return float(np.max(np.abs(model.modular(img) - model.modular(src))))
