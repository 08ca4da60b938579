import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from palmshift import groups
from palmshift.groups import Box, ParallelogramD, Strip

AXB = groups.ax_b()
E1 = groups.euclidean(1)
E2 = groups.euclidean(2)
T2 = groups.torus(2)

finite_a = st.floats(min_value=0.05, max_value=50.0, allow_nan=False)
finite_b = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False)


def test_axb_product_example():
    assert np.allclose(AXB.multiply([2.0, 1.0], [3.0, 4.0]), [6.0, 9.0])


def test_axb_identity_product():
    assert np.allclose(AXB.multiply([1.0, 0.0], [5.0, -2.0]), [5.0, -2.0])


def test_euclidean_product_is_addition():
    assert np.allclose(E2.multiply([1.0, 2.0], [3.0, 4.0]), [4.0, 6.0])


def test_axb_inverse_example():
    assert np.allclose(AXB.invert([2.0, 4.0]), [0.5, -2.0])


def test_identity_inverse():
    for model in (AXB, E2, T2):
        e = model.identity()
        assert np.allclose(model.invert(e), e)


def test_inverse_cancels():
    x = np.array([2.0, 4.0])
    assert np.max(np.abs(AXB.multiply(x, AXB.invert(x)) - AXB.identity())) < groups.ALGEBRA_TOL


def test_modular_example():
    assert AXB.modular([2.0, 3.0]) == pytest.approx(0.5, abs=1e-15)
    assert AXB.modular(AXB.identity()) == 1.0
    assert E2.modular([3.0, -1.0]) == 1.0


def test_torus_wraps_and_maps_ties_to_zero():
    out = T2.multiply([0.3, 0.6], [0.7, 0.6])
    assert np.allclose(out, [0.0, 0.2])
    assert out[0] == 0.0  # tie at 1.0 becomes 0.0


def test_validate_errors():
    with pytest.raises(ValueError, match="dimension"):
        E2.validate([1.0])
    with pytest.raises(ValueError, match="positive first"):
        AXB.validate([-1.0, 0.0])
    with pytest.raises(ValueError, match=r"\[0, 1\)"):
        T2.validate([0.5, 1.0])


@settings(max_examples=200, deadline=None)
@given(finite_a, finite_b, finite_a, finite_b, finite_a, finite_b)
def test_axb_associativity(a1, b1, a2, b2, a3, b3):
    x, y, z = [a1, b1], [a2, b2], [a3, b3]
    left = AXB.multiply(AXB.multiply(x, y), z)
    right = AXB.multiply(x, AXB.multiply(y, z))
    scale = max(1.0, np.max(np.abs(left)))
    assert np.max(np.abs(left - right)) < groups.ALGEBRA_TOL * scale


@settings(max_examples=200, deadline=None)
@given(finite_a, finite_b, finite_a, finite_b)
def test_modular_is_homomorphism(a1, b1, a2, b2):
    x, y = [a1, b1], [a2, b2]
    lhs = AXB.modular(AXB.multiply(x, y))
    rhs = AXB.modular(x) * AXB.modular(y)
    assert abs(lhs - rhs) < groups.ALGEBRA_TOL * max(1.0, abs(lhs))


def test_bulk_associativity_all_models():
    rng = np.random.default_rng(0)
    for model in (E2, T2, AXB):
        if model.kind == groups.AX_B:
            xs = np.column_stack([rng.uniform(0.2, 5.0, 10000), rng.uniform(-5, 5, 10000)])
            ys = np.column_stack([rng.uniform(0.2, 5.0, 10000), rng.uniform(-5, 5, 10000)])
            zs = np.column_stack([rng.uniform(0.2, 5.0, 10000), rng.uniform(-5, 5, 10000)])
        else:
            xs = rng.uniform(0, 1, (10000, model.dim))
            ys = rng.uniform(0, 1, (10000, model.dim))
            zs = rng.uniform(0, 1, (10000, model.dim))
        left = model.multiply(model.multiply(xs, ys), zs)
        right = model.multiply(xs, model.multiply(ys, zs))
        assert np.max(np.abs(left - right)) < 1e-11


# ---------------------------------------------------------------------------
# Haar masses


def test_axb_box_mass():
    assert groups.haar_mass(AXB, Box((1.0, 0.0), (2.0, 1.0))) == pytest.approx(0.5, abs=1e-15)


def test_strip_mass_untruncated_exact():
    assert groups.haar_mass(AXB, Strip((1.0, 0.0), 0.1)) == 0.2
    assert groups.haar_mass(AXB, Strip((7.3, -4.0), 0.1)) == 0.2


def test_euclidean_unit_box():
    assert groups.haar_mass(E2, Box((0.0, 0.0), (1.0, 1.0))) == 1.0


def test_infinite_mass_signalled():
    with pytest.raises(groups.InfiniteMassError):
        groups.haar_mass(E1, Box((0.0,), (math.inf,)))
    with pytest.raises(groups.InfiniteMassError):
        groups.haar_mass(AXB, Box((1.0, 0.0), (2.0, math.inf)))


def test_axb_deep_box_mass_is_finite():
    mass = groups.haar_mass(AXB, Box((0.5, 0.0), (math.inf, 1.0)))
    assert mass == pytest.approx(2.0, rel=1e-12)


def test_strip_tail_formula():
    anchor = (2.0, 3.0)
    full = groups.haar_mass(AXB, Strip(anchor, 0.1))
    trunc = groups.haar_mass(AXB, Strip(anchor, 0.1, a_max=10.0))
    tail = groups.strip_tail_mass(Strip(anchor, 0.1, a_max=10.0))
    assert tail == pytest.approx(2 * 0.1 * 2.0 / 10.0, rel=1e-12)
    assert full - trunc == pytest.approx(tail, abs=1e-9)


def test_quadrature_agrees_with_closed_forms():
    cases = [
        (AXB, Box((1.0, 0.0), (2.0, 1.0))),
        (AXB, Strip((2.0, 3.0), 0.1, a_max=50.0)),
        (AXB, ParallelogramD(0.1, 0.05)),
        (E2, Box((0.0, -1.0), (2.0, 1.0))),
    ]
    for model, window in cases:
        closed = groups.haar_mass(model, window)
        quad = groups.haar_mass_quadrature(model, window)
        assert closed == pytest.approx(quad, abs=1e-8)


def test_right_translation_scales_mass_by_modular():
    # Haar(Bx) computed by quadrature over the sheared image region:
    # the b-width stays constant so the mass reduces to a 1-d integral.
    from scipy import integrate

    box = Box((1.0, 0.0), (3.0, 2.0))
    rng = np.random.default_rng(5)
    for _ in range(25):
        c = rng.uniform(0.2, 4.0)
        width = box.hi[1] - box.lo[1]
        val, _ = integrate.quad(lambda ap: width / ap**2, c * box.lo[0], c * box.hi[0])
        expected = AXB.modular([c, 0.0]) * groups.haar_mass(AXB, box)
        assert val == pytest.approx(expected, rel=1e-9)


def test_left_invariance_of_box_mass():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        z = np.array([rng.uniform(0.2, 5.0), rng.uniform(-5, 5)])
        lo = np.array([rng.uniform(0.1, 2.0), rng.uniform(-3, 0)])
        hi = lo + np.array([rng.uniform(0.1, 3.0), rng.uniform(0.1, 3.0)])
        box = Box(tuple(lo), tuple(hi))
        moved = groups.translate_window(AXB, z, box)
        assert groups.haar_mass(AXB, moved) == pytest.approx(
            groups.haar_mass(AXB, box), rel=1e-9
        )


# ---------------------------------------------------------------------------
# Window geometry


def test_translate_strip_reproduces_anchored_strip():
    strip = Strip((1.0, 0.0), 0.1)
    z = np.array([2.0, 3.0])
    moved = groups.translate_window(AXB, z, strip)
    assert moved == Strip((2.0, 3.0), 0.1)


def test_translate_by_identity_is_noop():
    strip = Strip((2.0, 1.0), 0.2, a_max=30.0)
    assert groups.translate_window(AXB, AXB.identity(), strip) == strip
    box = Box((0.0,), (1.0,))
    assert groups.translate_window(E1, E1.identity(), box) == box


def test_translate_euclidean_box():
    assert groups.translate_window(E1, np.array([3.0]), Box((0.0,), (1.0,))) == Box((3.0,), (4.0,))


def test_translate_torus_box_wrap_error():
    box = Box((0.4, 0.4), (0.9, 0.9))
    with pytest.raises(groups.UnrepresentableWindowError):
        groups.translate_window(T2, np.array([0.5, 0.0]), box)
    full = groups.full_torus(2)
    assert groups.translate_window(T2, np.array([0.5, 0.3]), full) == full


def test_parallelogram_membership_and_truncation():
    region = ParallelogramD(0.1, 0.05)
    pts = np.array(
        [
            [0.5, 0.0],  # inside (center line)
            [0.5, 0.049],  # inside, near the upper corner
            [0.5, 0.051],  # outside (above the wedge)
            [0.25, 0.02],  # inside the left wedge
            [0.9, 0.02],  # outside: above the right descending edge
            [0.04, 0.0],  # outside: below the truncation
        ]
    )
    assert groups.contains_points(AXB, region, pts).tolist() == [
        True,
        True,
        False,
        True,
        False,
        False,
    ]


def test_contains_window_strip_in_box():
    strip = Strip((1.0, 0.0), 0.1, a_max=50.0)
    assert groups.contains_window(AXB, Box((0.5, -1.0), (60.0, 1.0)), strip)
    assert not groups.contains_window(AXB, Box((0.5, -1.0), (40.0, 1.0)), strip)
    assert groups.contains_window(AXB, Box((0.5, -1.0), (math.inf, 1.0)), Strip((1.0, 0.0), 0.1))
