import math

import numpy as np
import pytest
from scipy import stats as sps

from palmshift import groups, sampling
from palmshift.groups import Box
from palmshift.sampling import RngStream

E1 = groups.euclidean(1)
AXB = groups.ax_b()
T2 = groups.torus(2)


def test_intensity_validation():
    with pytest.raises(ValueError):
        sampling.poisson(0.0)
    with pytest.raises(ValueError):
        sampling.poisson(math.inf)
    with pytest.raises(ValueError):
        sampling.lattice(0.0)


def test_vacuous_intensity_gives_empty_sample():
    spec = sampling.poisson(1e-12)
    for stream in range(5):
        config = sampling.sample(spec, E1, Box((0.0,), (1.0,)), RngStream(3, stream))
        assert config.n == 0


def test_poisson_count_mean_euclidean():
    spec = sampling.poisson(2.0)
    window = Box((0.0,), (5.0,))
    counts = np.array(
        [sampling.sample(spec, E1, window, RngStream(17, i)).n for i in range(20000)]
    )
    se = counts.std(ddof=1) / math.sqrt(len(counts))
    assert abs(counts.mean() - 10.0) <= 3 * se


def test_poisson_count_mean_axb_box():
    spec = sampling.poisson(1.0)
    window = Box((1.0, 0.0), (2.0, 1.0))  # Haar mass 0.5
    counts = np.array(
        [sampling.sample(spec, AXB, window, RngStream(19, i)).n for i in range(20000)]
    )
    se = counts.std(ddof=1) / math.sqrt(len(counts))
    assert abs(counts.mean() - 0.5) <= 3 * se


def test_axb_locations_follow_haar_marginal():
    # inverse-CDF sampling: P(a > t) = (1/t - 1/a_hi)/(1/a_lo - 1/a_hi)
    spec = sampling.poisson(30.0)
    window = Box((1.0, 0.0), (4.0, 1.0))
    pts = np.vstack(
        [sampling.sample(spec, AXB, window, RngStream(23, i)).points for i in range(400)]
    )
    observed = np.mean(pts[:, 0] > 2.0)
    expected = (1 / 2 - 1 / 4) / (1 / 1 - 1 / 4)
    assert abs(observed - expected) < 0.02


def test_sample_reproducibility_bit_for_bit():
    spec = sampling.poisson(3.0)
    window = Box((0.0, 0.0), (1.0, 1.0))
    a = sampling.sample(spec, T2, window, RngStream(5, 77))
    b = sampling.sample(spec, T2, window, RngStream(5, 77))
    c = sampling.sample(spec, T2, window, RngStream(5, 78))
    assert a.points.tobytes() == b.points.tobytes()
    assert a.points.tobytes() != c.points.tobytes()


def test_samples_are_simple():
    spec = sampling.poisson(50.0)
    for i in range(50):
        config = sampling.sample(spec, T2, groups.full_torus(2), RngStream(29, i))
        assert len(np.unique(config.points, axis=0)) == config.n


def test_lattice_requires_euclidean_1d():
    with pytest.raises(ValueError):
        sampling.sample(sampling.lattice(1.0), T2, groups.full_torus(2), RngStream(1, 0))


def test_stationarity_of_counts_under_translation():
    # counts in a window and in its translate are independent Poisson
    # draws within one realization; compare their histograms
    spec = sampling.poisson(1.0)
    big = Box((0.0,), (10.0,))
    w = Box((0.0,), (2.0,))
    zw = groups.translate_window(E1, np.array([5.0]), w)
    counts_w, counts_zw = [], []
    for i in range(20000):
        pts = sampling.sample(spec, E1, big, RngStream(31, i)).points
        counts_w.append(int(groups.contains_points(E1, w, pts).sum()))
        counts_zw.append(int(groups.contains_points(E1, zw, pts).sum()))
    top = max(max(counts_w), max(counts_zw))
    table = np.array(
        [np.bincount(counts_w, minlength=top + 1), np.bincount(counts_zw, minlength=top + 1)]
    )
    table = table[:, table.sum(axis=0) >= 10]
    _, p, _, _ = sps.chi2_contingency(table)
    assert p > 0.01


# ---------------------------------------------------------------------------
# Palm versions


def test_slivnyak_contains_identity():
    spec = sampling.poisson(1.0)
    window = Box((-2.0,), (2.0,))
    for i in range(20):
        config = sampling.palm_sample_slivnyak(spec, E1, window, RngStream(37, i))
        assert config.contains_identity
        assert np.all(config.points[config.identity_index()] == 0.0)


def test_slivnyak_vacuous_intensity():
    config = sampling.palm_sample_slivnyak(
        sampling.poisson(1e-12), E1, Box((-1.0,), (1.0,)), RngStream(41, 0)
    )
    assert config.n == 1


def test_slivnyak_rejects_non_poisson_and_bad_window():
    with pytest.raises(ValueError, match="Poisson"):
        sampling.palm_sample_slivnyak(
            sampling.lattice(1.0), E1, Box((-1.0,), (1.0,)), RngStream(1, 0)
        )
    with pytest.raises(ValueError, match="identity"):
        sampling.palm_sample_slivnyak(
            sampling.poisson(1.0), E1, Box((1.0,), (2.0,)), RngStream(1, 0)
        )


def test_slivnyak_count_law_is_shifted_poisson():
    spec = sampling.poisson(2.0)
    window = Box((-1.0,), (1.0,))  # mass 2, so counts are 1 + Poisson(4)
    counts = np.array(
        [
            sampling.palm_sample_slivnyak(spec, E1, window, RngStream(43, i)).n
            for i in range(20000)
        ]
    )
    assert counts.min() >= 1
    mu = 4.0
    kmax = int(counts.max())
    expected = len(counts) * np.array(
        [sps.poisson.pmf(k - 1, mu) for k in range(1, kmax + 1)]
    )
    observed = np.bincount(counts, minlength=kmax + 1)[1:]
    # merge the tail so every expected cell is at least 5
    while expected[-1] < 5:
        expected[-2] += expected[-1]
        observed[-2] += observed[-1]
        expected, observed = expected[:-1], observed[:-1]
    expected[-1] += len(counts) - expected.sum()
    _, p = sps.chisquare(observed, expected)
    assert p > 0.01


def test_slivnyak_minus_identity_matches_plain_poisson():
    spec = sampling.poisson(1.5)
    window = Box((-1.0,), (1.0,))
    palm_counts, plain_counts = [], []
    for i in range(20000):
        palm = sampling.palm_sample_slivnyak(spec, E1, window, RngStream(47, i))
        palm_counts.append(palm.n - 1)
        plain_counts.append(sampling.sample(spec, E1, window, RngStream(53, i)).n)
    top = max(max(palm_counts), max(plain_counts))
    table = np.array(
        [
            np.bincount(palm_counts, minlength=top + 1),
            np.bincount(plain_counts, minlength=top + 1),
        ]
    )
    table = table[:, table.sum(axis=0) >= 10]
    _, p, _, _ = sps.chi2_contingency(table)
    assert p > 0.01


def test_palm_lattice_examples():
    grid = sampling.palm_sample_lattice(sampling.lattice(1.0), Box((-2.5,), (2.5,)))
    assert sorted(grid.points[:, 0].tolist()) == [-2.0, -1.0, 0.0, 1.0, 2.0]
    assert grid.points[grid.identity_index(), 0] == 0.0

    single = sampling.palm_sample_lattice(sampling.lattice(2.0), Box((-1.0,), (1.0,)))
    assert single.points[:, 0].tolist() == [0.0]


def test_recenter_moves_base_to_identity_exactly():
    spec = sampling.poisson(2.0)
    config = sampling.sample(spec, AXB, Box((0.5, -1.0), (3.0, 1.0)), RngStream(59, 1))
    if config.n == 0:
        pytest.skip("empty draw")
    shifted = sampling.recenter(config, 0)
    assert np.all(shifted.points[0] == AXB.identity())
    # other points transform by left multiplication with the inverse
    x_inv = AXB.invert(config.points[0])
    expected = AXB.multiply(x_inv, config.points[1:])
    assert np.allclose(shifted.points[1:], expected, atol=1e-14)


# ---------------------------------------------------------------------------
# Window-average Palm estimator


def test_window_average_unit_functional():
    spec = sampling.poisson(1.0)
    window = Box((-10.0,), (10.0,))
    inner = Box((-8.0,), (8.0,))
    sums = []
    for i in range(20000):
        config = sampling.sample(spec, E1, window, RngStream(61, i))
        total, _ = sampling.palm_expectation_window_average(lambda c, b: 1.0, config, inner)
        sums.append(total)
    sums = np.asarray(sums)
    norm = spec.intensity * groups.haar_mass(E1, inner)
    estimate = sums.mean() / norm
    se = sums.std(ddof=1) / math.sqrt(len(sums)) / norm
    assert abs(estimate - 1.0) <= 3 * se


def test_window_average_on_lattice_nearest_distance():
    grid = sampling.sample(sampling.lattice(1.0), E1, Box((-10.0,), (10.0,)), RngStream(67, 0))

    def nearest_distance(config, base):
        x = config.points[:, 0]
        d = np.abs(x - x[base])
        d[base] = np.inf
        return float(d.min())

    total, count = sampling.palm_expectation_window_average(
        nearest_distance, grid, Box((-8.0,), (8.0,))
    )
    assert count > 0
    assert total == count  # every grid point sits at distance exactly 1


def test_window_average_empty_inner_rejected():
    config = sampling.sample(sampling.poisson(1.0), E1, Box((0.0,), (1.0,)), RngStream(71, 0))
    with pytest.raises(ValueError):
        sampling.palm_expectation_window_average(
            lambda c, b: 1.0, config, Box((0.0,), (0.0,))
        )


# ---------------------------------------------------------------------------
# Separation


def test_separation_no_ties_for_axb_first_coordinate():
    spec = sampling.poisson(1.0)
    window = Box((0.5, 0.0), (math.inf, 5.0))
    for i in range(1000):
        config = sampling.sample(spec, AXB, window, RngStream(73, i))
        assert sampling.separation_check(config, lambda pts: pts[:, 0]) == []


def test_separation_reports_constructed_tie():
    pts = np.array([[1.0, 0.0], [1.0, 3.0], [2.0, 1.0]])
    config = sampling.PointConfiguration(AXB, Box((0.5, -1.0), (3.0, 4.0)), pts)
    ties = sampling.separation_check(config, lambda p: p[:, 0])
    assert ties == [(0, 1)]


def test_separation_empty_config():
    config = sampling.PointConfiguration(E1, Box((0.0,), (1.0,)), np.empty((0, 1)))
    assert sampling.separation_check(config, lambda p: p[:, 0]) == []
