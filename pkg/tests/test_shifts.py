import math

import numpy as np
import pytest

from palmshift import groups, sampling, shifts
from palmshift.groups import Box, Strip
from palmshift.sampling import PointConfiguration, RngStream

E1 = groups.euclidean(1)
AXB = groups.ax_b()
T2 = groups.torus(2)


def config_e1(points, lo=-2.0, hi=8.0, identity=False):
    pts = np.asarray(points, dtype=float)[:, None]
    return PointConfiguration(E1, Box((lo,), (hi,)), pts, contains_identity=identity)


def test_shift_model_validation():
    with pytest.raises(ValueError):
        shifts.validate_shift_model(shifts.strip_shift(0.1), E1)
    with pytest.raises(ValueError):
        shifts.validate_shift_model(shifts.right_neighbor(), T2)
    with pytest.raises(ValueError):
        shifts.validate_shift_model(shifts.nearest_neighbor(), AXB)


def test_strip_apply_hand_example():
    pts = np.array([[1.0, 0.0], [2.0, 0.05], [4.0, 10.0]])
    config = PointConfiguration(AXB, Box((0.5, -12.0), (60.0, 12.0)), pts)
    ev = shifts.apply(shifts.strip_shift(0.1, 50.0), config, 0)
    assert not ev.censored
    assert np.allclose(ev.image, [2.0, 0.05])


def test_strip_sole_candidate_is_fixed_point():
    pts = np.array([[1.0, 0.0]])
    config = PointConfiguration(AXB, Box((0.5, -1.0), (6.0, 1.0)), pts)
    ev = shifts.apply(shifts.strip_shift(0.1, 5.0), config, 0)
    assert not ev.censored and ev.image_index == 0


def test_right_neighbor_hand_example():
    config = config_e1([0.0, 1.0, 3.0])
    ev = shifts.apply(shifts.right_neighbor(), config, 0)
    assert ev.image_index == 1
    last = shifts.apply(shifts.right_neighbor(), config, 2)
    assert last.censored and last.image is None


def test_apply_rejects_non_points():
    config = config_e1([0.0, 1.0])
    with pytest.raises(ValueError, match="not a point"):
        shifts.apply(shifts.right_neighbor(), config, np.array([0.5]))


def test_iterate_zero_steps():
    config = config_e1([0.0, 1.0, 3.0])
    orbit = shifts.iterate(shifts.right_neighbor(), config, 0, 0)
    assert len(orbit.evaluations) == 1
    assert orbit.evaluations[0].image_index == 0


def test_iterate_right_neighbor_orbit_and_censoring():
    config = config_e1([0.0, 1.0, 3.0])
    orbit = shifts.iterate(shifts.right_neighbor(), config, 0, 2)
    assert [ev.image_index for ev in orbit.evaluations] == [0, 1, 2]
    assert not orbit.censored and not orbit.stabilized
    longer = shifts.iterate(shifts.right_neighbor(), config, 0, 3)
    assert longer.censored
    assert longer.evaluations[-1].censored


def test_iterate_fixed_point_orbit_stabilizes():
    pts = np.array([[1.0, 0.0]])
    config = PointConfiguration(
        AXB, Box((0.5, -1.0), (6.0, 1.0)), pts, contains_identity=True
    )
    orbit = shifts.iterate(shifts.strip_shift(0.1, 5.0), config, 0, 4)
    assert orbit.stabilized and orbit.stabilized_at == 0
    assert all(ev.image_index == 0 for ev in orbit.evaluations)


def test_preimages_right_neighbor():
    config = config_e1([0.0, 1.0, 3.0])
    pre = shifts.preimages(shifts.right_neighbor(), config, 1)
    assert [p.tolist() for p in pre] == [[0.0]]


def test_preimages_nearest_neighbor_hand_example():
    config = config_e1([0.0, 1.0, 3.0])
    pre = shifts.preimages(shifts.nearest_neighbor(), config, 1)
    assert sorted(p[0] for p in pre) == [0.0, 3.0]


def test_preimages_identity_shift():
    config = config_e1([0.0, 1.0, 3.0])
    pre = shifts.preimages(shifts.identity_shift(), config, 2)
    assert [p.tolist() for p in pre] == [[3.0]]


def test_reverse_on_lattice():
    grid = sampling.palm_sample_lattice(sampling.lattice(1.0), Box((-4.5,), (4.5,)))
    rev = shifts.reverse(shifts.right_neighbor(), grid, 0)
    assert not rev.censored and rev.image[0] == -1.0


def test_reverse_not_bijective_here():
    config = config_e1([0.0, 1.0, 3.0])
    with pytest.raises(shifts.NotBijectiveError, match="not bijective here"):
        shifts.reverse(shifts.nearest_neighbor(), config, 1)


def test_reverse_identity_shift():
    config = config_e1([0.0, 1.0, 3.0])
    rev = shifts.reverse(shifts.identity_shift(), config, 1)
    assert rev.image_index == 1


def test_reverse_censored_when_boundary_uncertain():
    # the leftmost point may have an unseen preimage beyond the window
    config = config_e1([0.0, 1.0, 3.0])
    rev = shifts.reverse(shifts.right_neighbor(), config, 0)
    assert rev.censored and rev.image is None


def test_inverse_consistency_where_defined():
    rng = RngStream(101, 4)
    config = sampling.palm_sample_slivnyak(
        sampling.poisson(1.0), E1, Box((-20.0,), (20.0,)), rng
    )
    shift = shifts.right_neighbor()
    ev = shifts.evaluate_all(shift, config)
    order = np.argsort(config.points[:, 0])
    interior = order[1:-1]
    for i in interior[:10]:
        fwd = shifts.apply(shift, config, int(i))
        back = shifts.reverse(shift, config, fwd.image_index)
        assert back.image_index == int(i)


def test_right_neighbor_bijective_on_interior():
    rng = RngStream(103, 9)
    config = sampling.sample(sampling.poisson(1.0), E1, Box((0.0,), (40.0,)), rng)
    shift = shifts.right_neighbor()
    order = np.argsort(config.points[:, 0])
    for i in order[1:-1]:
        analysis = shifts.preimage_analysis(shift, config, int(i))
        assert not analysis.threatened
        assert len(analysis.definite) == 1


def test_isomodularity_defect_zero_on_unimodular_models():
    config = sampling.sample(
        sampling.poisson(20.0), T2, groups.full_torus(2), RngStream(107, 0)
    )
    assert shifts.isomodularity_defect(shifts.nearest_neighbor(), config) == 0.0
    config1 = sampling.sample(sampling.poisson(1.0), E1, Box((0.0,), (20.0,)), RngStream(109, 0))
    assert shifts.isomodularity_defect(shifts.right_neighbor(), config1) == 0.0


def test_isomodularity_defect_identity_on_axb():
    config = sampling.sample(
        sampling.poisson(1.0), AXB, Box((0.5, -1.0), (4.0, 1.0)), RngStream(113, 0)
    )
    assert shifts.isomodularity_defect(shifts.identity_shift(), config) == 0.0


def test_isomodularity_defect_strip_hand_example():
    pts = np.array([[1.0, 0.0], [2.0, 0.05]])
    config = PointConfiguration(AXB, Box((0.5, -12.0), (210.0, 12.0)), pts)
    defect = shifts.isomodularity_defect(shifts.strip_shift(0.1, 100.0), config)
    assert defect == pytest.approx(0.5, abs=1e-12)


def test_strip_membership_matches_left_coset_form():
    rng = np.random.default_rng(12)
    delta = 0.1
    for _ in range(500):
        x = np.array([rng.uniform(0.2, 4.0), rng.uniform(-3, 3)])
        y = np.array([rng.uniform(0.2, 8.0), rng.uniform(-3, 3)])
        direct = bool(groups.contains_points(AXB, Strip(tuple(x), delta), y))
        u = AXB.multiply(AXB.invert(x), y)
        referred = bool(
            groups.contains_points(AXB, Strip((1.0, 0.0), delta), u)
        )
        assert direct == referred


# ---------------------------------------------------------------------------
# Flow equivariance


def _random_translation(model, rng):
    if model.kind == groups.AX_B:
        return np.array([rng.uniform(0.3, 3.0), rng.uniform(-2.0, 2.0)])
    if model.kind == groups.TORUS:
        return rng.uniform(0.0, 1.0, model.dim)
    return rng.uniform(-5.0, 5.0, model.dim)


def _translated(config, z):
    model = config.model
    pts = model.multiply(z, config.points)
    window = groups.translate_window(model, z, config.window)
    return PointConfiguration(model, window, pts)


@pytest.mark.parametrize(
    "model,shift,window,intensity",
    [
        (E1, shifts.right_neighbor(), Box((-6.0,), (6.0,)), 1.0),
        (E1, shifts.nearest_neighbor(), Box((-6.0,), (6.0,)), 1.0),
        (E1, shifts.identity_shift(), Box((-6.0,), (6.0,)), 1.0),
        (T2, shifts.nearest_neighbor(), groups.full_torus(2), 12.0),
        (AXB, shifts.strip_shift(0.1, 20.0), Box((0.25, -4.0), (80.0, 4.0)), 1.0),
        (AXB, shifts.strip_shift(0.1, math.inf), Box((0.25, -4.0), (math.inf, 4.0)), 1.0),
    ],
)
def test_flow_equivariance(model, shift, window, intensity):
    # translating the configuration and the window together must
    # translate every evaluation, censoring flags included
    rng = np.random.default_rng(abs(hash((model.kind, shift.kind, shift.a_max_ratio))) % 2**32)
    spec = sampling.poisson(intensity)
    for rep in range(1000):
        config = sampling.sample(spec, model, window, RngStream(127, rep))
        if config.n == 0:
            continue
        z = _random_translation(model, rng)
        moved = _translated(config, z)
        ev = shifts.evaluate_all(shift, config)
        ev_moved = shifts.evaluate_all(shift, moved)
        assert np.array_equal(ev.censored, ev_moved.censored)
        assert np.array_equal(ev.images, ev_moved.images)
        ok = ~ev.censored
        if np.any(ok):
            lhs = moved.points[ev_moved.images[ok]]
            rhs = model.multiply(z, config.points[ev.images[ok]])
            diff = np.abs(lhs - rhs)
            if model.kind == groups.TORUS:
                diff = np.minimum(diff, 1.0 - diff)
            assert np.max(diff) < 1e-12 * max(1.0, float(np.max(np.abs(lhs))))
