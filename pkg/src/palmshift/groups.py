"""Concrete group models and window geometry.

Three models are supported:

* ``euclidean(d)``: R^d under addition, with Lebesgue measure as Haar
  measure.  Unimodular.
* ``ax_b()``: the affine group of the line, realized as the half-plane
  ``{(a, b): a > 0}`` with product ``(a, b)(c, d) = (ac, ad + b)`` and
  inverse ``(a, b)^-1 = (1/a, -b/a)``.  The left Haar measure has
  density ``1/a^2`` with respect to ``da db`` and the modular function
  is ``1/a``; this is the standard non-unimodular test bed.
* ``torus(d)``: ``[0, 1)^d`` under addition mod 1, with Lebesgue
  measure.  Compact and unimodular.

Group elements are float arrays of length ``dim`` (2 for ax_b, with
``coords[0] = a > 0``).  The algebra routines broadcast over a leading
axis, so a whole configuration can be translated in one call.  All
algebraic identities (associativity, inverses, the modular
homomorphism) hold to ``ALGEBRA_TOL`` per coordinate; exact rational
arithmetic is deliberately not used because Monte Carlo error dominates
every downstream budget.

Window geometry lives here too: axis-aligned boxes for every model,
plus the ax_b-specific ``Strip`` and ``ParallelogramD`` regions with
closed-form Haar masses and a quadrature fallback for cross-checking.
A ``Strip`` anchored at ``(a, b)`` with half-width parameter ``delta``
is ``[a, a_max] x [b - delta*a, b + delta*a]``; its untruncated Haar
mass is exactly ``2*delta`` and the truncation tail is
``2*delta*a/a_max``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EUCLIDEAN = "euclidean"
AX_B = "ax_b"
TORUS = "torus"

# Documented tolerance for algebraic identities in floating point.
ALGEBRA_TOL = 1e-12


class InfiniteMassError(ValueError):
    """Raised when a window has infinite Haar mass and no truncation."""


class UnrepresentableWindowError(ValueError):
    """Raised when a translated window leaves the representable family."""


def _as_points(x) -> tuple[np.ndarray, bool]:
    """Normalize ``x`` to a (n, dim) float array; flag if input was 1-d."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim != 2:
        raise ValueError(f"group elements must be 1-d or 2-d arrays, got shape {arr.shape}")
    return arr, False


@dataclass(frozen=True)
class GroupModel:
    """Algebraic and measure-theoretic structure of one concrete group.

    Instances are immutable and safe to share across workers.
    """

    kind: str
    dim: int

    def identity(self) -> np.ndarray:
        if self.kind == AX_B:
            return np.array([1.0, 0.0])
        return np.zeros(self.dim)

    def validate(self, x) -> None:
        pts, _ = _as_points(x)
        if pts.shape[1] != self.dim:
            raise ValueError(
                f"dimension mismatch: model {self.kind} has dim {self.dim}, "
                f"element has {pts.shape[1]} coordinates"
            )
        if self.kind == AX_B and np.any(pts[:, 0] <= 0.0):
            raise ValueError("ax_b elements require a strictly positive first coordinate")
        if self.kind == TORUS and (np.any(pts < 0.0) or np.any(pts >= 1.0)):
            raise ValueError("torus coordinates must lie in [0, 1)")

    def multiply(self, x, y) -> np.ndarray:
        """Group product x * y, broadcasting over leading axes."""
        xs, x1 = _as_points(x)
        ys, y1 = _as_points(y)
        if self.kind == EUCLIDEAN:
            out = xs + ys
        elif self.kind == TORUS:
            out = np.mod(xs + ys, 1.0)
        else:
            a = xs[:, 0] * ys[:, 0]
            b = xs[:, 0] * ys[:, 1] + xs[:, 1]
            out = np.stack([a, b], axis=1)
        return out[0] if (x1 and y1) else out

    def invert(self, x) -> np.ndarray:
        xs, x1 = _as_points(x)
        if self.kind == EUCLIDEAN:
            out = -xs
        elif self.kind == TORUS:
            out = np.mod(-xs, 1.0)
        else:
            a = 1.0 / xs[:, 0]
            out = np.stack([a, -xs[:, 1] * a], axis=1)
        return out[0] if x1 else out

    def modular(self, x):
        """Value of the modular function; identically 1 on unimodular models."""
        xs, x1 = _as_points(x)
        if self.kind == AX_B:
            out = 1.0 / xs[:, 0]
        else:
            out = np.ones(xs.shape[0])
        return float(out[0]) if x1 else out

    def haar_density(self, x):
        """Density of left Haar measure against coordinate volume."""
        xs, x1 = _as_points(x)
        if self.kind == AX_B:
            out = 1.0 / xs[:, 0] ** 2
        else:
            out = np.ones(xs.shape[0])
        return float(out[0]) if x1 else out

    @property
    def unimodular(self) -> bool:
        return self.kind != AX_B


def euclidean(dim: int) -> GroupModel:
    if dim < 1:
        raise ValueError("euclidean model needs dim >= 1")
    return GroupModel(EUCLIDEAN, dim)


def ax_b() -> GroupModel:
    return GroupModel(AX_B, 2)


def torus(dim: int) -> GroupModel:
    if dim < 1:
        raise ValueError("torus model needs dim >= 1")
    return GroupModel(TORUS, dim)


# ---------------------------------------------------------------------------
# Windows


@dataclass(frozen=True)
class Box:
    """Axis-aligned box window.

    For ax_b the coordinates are (a, b) and ``hi[0]`` may be ``inf``:
    deep boxes still have finite Haar mass because the density 1/a^2 is
    integrable at infinity.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("box lo/hi length mismatch")
        if any(l >= h for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"box must have positive extent, got lo={self.lo} hi={self.hi}")


@dataclass(frozen=True)
class Strip:
    """ax_b strip ``[a, a_max] x [b - delta*a, b + delta*a]`` anchored at (a, b)."""

    anchor: tuple[float, float]
    delta: float
    a_max: float = math.inf

    def __post_init__(self):
        if self.anchor[0] <= 0:
            raise ValueError("strip anchor requires a > 0")
        if self.delta <= 0:
            raise ValueError("strip half-width parameter delta must be positive")
        if self.a_max <= self.anchor[0]:
            raise ValueError("strip truncation a_max must exceed the anchor a-coordinate")


@dataclass(frozen=True)
class ParallelogramD:
    """The ax_b parallelogram with corners (0,0), (1/2, d/2), (1, 0), (1/2, -d/2),
    truncated to ``a >= a_min``.

    Its full Haar mass diverges like ``2*delta*log(1/(2*a_min))`` as the
    truncation is removed, which is why the truncation parameter is
    mandatory.
    """

    delta: float
    a_min: float

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if not 0.0 < self.a_min <= 0.5:
            raise ValueError("truncation a_min must lie in (0, 1/2]")


Window = Box | Strip | ParallelogramD


def box1d(lo: float, hi: float) -> Box:
    return Box((float(lo),), (float(hi),))


def full_torus(dim: int) -> Box:
    return Box((0.0,) * dim, (1.0,) * dim)


def _check_window_model(model: GroupModel, window: Window) -> None:
    if isinstance(window, Box):
        if len(window.lo) != model.dim:
            raise ValueError("window dimension does not match model")
        if model.kind == AX_B and window.lo[0] <= 0:
            raise ValueError("ax_b box windows require a_lo > 0")
        if model.kind == TORUS and (min(window.lo) < 0 or max(window.hi) > 1):
            raise ValueError("torus box windows must sit inside [0, 1]^d")
    elif model.kind != AX_B:
        raise ValueError(f"{type(window).__name__} windows exist only on the ax_b model")


def haar_mass(model: GroupModel, window: Window) -> float:
    """Closed-form left Haar mass of a window.

    Raises ``InfiniteMassError`` for unbounded regions of infinite mass
    (e.g. a euclidean box with an infinite side).  ax_b boxes with
    ``a_hi = inf`` are fine: their mass is ``(1/a_lo) * (b_hi - b_lo)``.
    """
    _check_window_model(model, window)
    if isinstance(window, Box):
        lo = np.asarray(window.lo)
        hi = np.asarray(window.hi)
        if model.kind in (EUCLIDEAN, TORUS):
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                raise InfiniteMassError("unbounded box has infinite Haar mass on this model")
            return float(np.prod(hi - lo))
        a_lo, b_lo = window.lo
        a_hi, b_hi = window.hi
        if not (math.isfinite(b_lo) and math.isfinite(b_hi)):
            raise InfiniteMassError("ax_b box with unbounded b-extent has infinite mass")
        inv_hi = 0.0 if math.isinf(a_hi) else 1.0 / a_hi
        return (1.0 / a_lo - inv_hi) * (b_hi - b_lo)
    if isinstance(window, Strip):
        if math.isinf(window.a_max):
            return 2.0 * window.delta
        a = window.anchor[0]
        return 2.0 * window.delta * a * (1.0 / a - 1.0 / window.a_max)
    # ParallelogramD: left wedge has width 2*delta*x, right half 2*delta*(1-x).
    d, t = window.delta, window.a_min
    right_half = 2.0 * d * (1.0 - math.log(2.0))
    return 2.0 * d * math.log(0.5 / t) + right_half


def strip_tail_mass(strip: Strip) -> float:
    """Haar mass removed by the truncation: ``2*delta*a / a_max``."""
    if math.isinf(strip.a_max):
        return 0.0
    return 2.0 * strip.delta * strip.anchor[0] / strip.a_max


def haar_mass_quadrature(model: GroupModel, window: Window, tol: float = 1e-9) -> float:
    """Numerical Haar mass, used as an independent cross-check of the
    closed forms (absolute tolerance ``tol``)."""
    from scipy import integrate

    _check_window_model(model, window)
    if isinstance(window, Box) and model.kind in (EUCLIDEAN, TORUS):
        return float(np.prod(np.asarray(window.hi) - np.asarray(window.lo)))
    if isinstance(window, Box):
        (a_lo, b_lo), (a_hi, b_hi) = window.lo, window.hi
        val, _ = integrate.dblquad(
            lambda y, x: 1.0 / x**2, a_lo, a_hi, b_lo, b_hi, epsabs=tol / 10
        )
        return float(val)
    if isinstance(window, Strip):
        a, b = window.anchor
        val, _ = integrate.dblquad(
            lambda y, x: 1.0 / x**2,
            a,
            window.a_max,
            b - window.delta * a,
            b + window.delta * a,
            epsabs=tol / 10,
        )
        return float(val)
    d, t = window.delta, window.a_min
    val, _ = integrate.dblquad(
        lambda y, x: 1.0 / x**2,
        t,
        1.0,
        lambda x: max(-d * x, d * (x - 1.0)),
        lambda x: min(d * x, d * (1.0 - x)),
        epsabs=tol / 10,
    )
    return float(val)


def translate_window(model: GroupModel, z, window: Window) -> Window:
    """The set ``{z * x : x in window}`` in closed form.

    Boxes map to boxes on every model (torus boxes only when the
    translate does not wrap around the seam) and strips map to strips
    on ax_b, with the truncation bound scaled by the a-coordinate of
    ``z``.
    """
    _check_window_model(model, window)
    z = np.asarray(z, dtype=float)
    model.validate(z)
    if isinstance(window, Box):
        lo = np.asarray(window.lo)
        hi = np.asarray(window.hi)
        if model.kind == EUCLIDEAN:
            return Box(tuple(lo + z), tuple(hi + z))
        if model.kind == TORUS:
            width = hi - lo
            if np.all(width >= 1.0 - 1e-12):
                return window  # the full torus is translation invariant
            new_lo = np.mod(lo + z, 1.0)
            if np.any(new_lo + width > 1.0 + 1e-12):
                raise UnrepresentableWindowError(
                    "translated torus box wraps around the seam"
                )
            return Box(tuple(new_lo), tuple(new_lo + width))
        c, d = z
        return Box((c * lo[0], c * lo[1] + d), (c * hi[0], c * hi[1] + d))
    if isinstance(window, Strip):
        c, d = z
        anchor = (c * window.anchor[0], c * window.anchor[1] + d)
        return Strip(anchor, window.delta, c * window.a_max)
    raise UnrepresentableWindowError("ParallelogramD translates are not representable")


def contains_points(model: GroupModel, window: Window, points) -> np.ndarray:
    """Boolean membership mask for an (n, dim) array of points."""
    _check_window_model(model, window)
    pts, one = _as_points(points)
    if isinstance(window, Box):
        lo = np.asarray(window.lo)
        hi = np.asarray(window.hi)
        mask = np.all((pts >= lo) & (pts <= hi), axis=1)
    elif isinstance(window, Strip):
        a0, b0 = window.anchor
        mask = (
            (pts[:, 0] >= a0)
            & (pts[:, 0] <= window.a_max)
            & (np.abs(pts[:, 1] - b0) <= window.delta * a0)
        )
    else:
        x, y = pts[:, 0], pts[:, 1]
        d = window.delta
        mask = (
            (x >= window.a_min)
            & (x <= 1.0)
            & (np.abs(y) <= d * x)
            & (y <= d * (1.0 - x))
            & (y >= d * (x - 1.0))
        )
    return mask[0] if one else mask


def contains_window(model: GroupModel, outer: Box, inner: Window) -> bool:
    """True if ``inner`` is contained in the box ``outer``."""
    _check_window_model(model, outer)
    _check_window_model(model, inner)
    if isinstance(inner, Box):
        return all(ol <= il for ol, il in zip(outer.lo, inner.lo)) and all(
            ih <= oh for ih, oh in zip(inner.hi, outer.hi)
        )
    if isinstance(inner, Strip):
        a0, b0 = inner.anchor
        half = inner.delta * a0
        return (
            outer.lo[0] <= a0
            and inner.a_max <= outer.hi[0]
            and outer.lo[1] <= b0 - half
            and b0 + half <= outer.hi[1]
        )
    d = inner.delta
    return (
        outer.lo[0] <= inner.a_min
        and 1.0 <= outer.hi[0]
        and outer.lo[1] <= -d / 2
        and d / 2 <= outer.hi[1]
    )
