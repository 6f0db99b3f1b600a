"""Set-distance metric tests against brute-force and hand oracles."""

import itertools
import math

import numpy as np
import pytest

from phdfuse.metrics import (
    OspaConfig,
    cardinality_error,
    network_ospa,
    ospa,
    time_averaged_network_ospa,
)


def brute_force_ospa(x, y, config):
    """Enumerate every assignment of the smaller set into the larger one.

    The clipped pairwise-distance matrix uses the same vectorized expression
    as the solver (norm kernels differ by 1 ulp between the 1-d and broadcast
    code paths), so what this oracle checks independently is the
    optimal-assignment search and the metric formula on top of that matrix.
    """
    a = np.asarray(x, dtype=float).reshape(-1, 2) if len(x) else np.empty((0, 2))
    b = np.asarray(y, dtype=float).reshape(-1, 2) if len(y) else np.empty((0, 2))
    if len(a) > len(b):
        a, b = b, a
    m, n = len(a), len(b)
    if n == 0:
        return 0.0
    p, c = config.order, config.cutoff
    if m == 0:
        return c
    clipped = np.minimum(
        np.linalg.norm(a[:, np.newaxis, :] - b[np.newaxis, :, :], axis=-1), c
    )
    best = min(
        math.fsum(clipped[i, j] ** p for i, j in enumerate(assignment))
        for assignment in itertools.permutations(range(n), m)
    )
    return ((best + c**p * (n - m)) / n) ** (1.0 / p)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError, match="order"):
            OspaConfig(order=0.5)
        with pytest.raises(ValueError, match="cutoff"):
            OspaConfig(cutoff=0.0)
        assert OspaConfig().order == 1.0 and OspaConfig().cutoff == 100.0


class TestOspaConventions:
    def test_both_empty(self):
        result = ospa(np.empty((0, 2)), np.empty((0, 2)))
        assert result.distance == 0.0

    def test_one_empty_is_cutoff(self):
        config = OspaConfig(order=1.0, cutoff=100.0)
        points = np.array([[1.0, 2.0]])
        assert ospa(points, np.empty((0, 2)), config).distance == 100.0
        assert ospa(np.empty((0, 2)), points, config).distance == 100.0
        assert ospa(np.empty((0, 2)), points, config).cardinality == 100.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimensions differ"):
            ospa(np.ones((1, 2)), np.ones((1, 3)))

    def test_identical_sets_zero(self):
        points = np.array([[0.0, 0.0], [10.0, -5.0], [3.0, 4.0]])
        assert ospa(points, points).distance == 0.0


class TestOspaHandValues:
    def test_single_pair_below_cutoff(self):
        # One point each, 5 m apart: distance is just 5.
        result = ospa(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]]))
        assert result.distance == 5.0
        assert result.localization == 5.0
        assert result.cardinality == 0.0

    def test_cutoff_saturates_distance(self):
        result = ospa(np.array([[0.0, 0.0]]), np.array([[500.0, 0.0]]))
        assert result.distance == 100.0

    def test_cardinality_mismatch_hand_value(self):
        # Matched pair at distance 6, one unmatched point: p=1, c=100 gives
        # (6 + 100) / 2 = 53.
        x = np.array([[0.0, 0.0]])
        y = np.array([[6.0, 0.0], [50.0, 50.0]])
        result = ospa(x, y)
        assert result.distance == pytest.approx(53.0, rel=1e-12)
        assert result.localization == pytest.approx(3.0, rel=1e-12)
        assert result.cardinality == pytest.approx(50.0, rel=1e-12)

    def test_order_two_hand_value(self):
        # p=2: sqrt((6^2 + 100^2) / 2).
        x = np.array([[0.0, 0.0]])
        y = np.array([[6.0, 0.0], [50.0, 50.0]])
        result = ospa(x, y, OspaConfig(order=2.0, cutoff=100.0))
        assert result.distance == pytest.approx(
            math.sqrt((36.0 + 10000.0) / 2.0), rel=1e-12
        )

    def test_order_one_split_is_additive(self):
        # For p=1 the total is exactly localization + cardinality.
        rng = np.random.default_rng(2)
        for _ in range(50):
            x = rng.uniform(-50, 50, size=(int(rng.integers(1, 5)), 2))
            y = rng.uniform(-50, 50, size=(int(rng.integers(1, 5)), 2))
            result = ospa(x, y)
            assert result.distance == pytest.approx(
                result.localization + result.cardinality, rel=1e-12
            )

    def test_assignment_picks_minimum(self):
        # Crossing pairing costs 2 + 8 = 10; the solver must find 0 + 10.
        x = np.array([[0.0, 0.0], [10.0, 0.0]])
        y = np.array([[10.0, 0.0], [2.0, 0.0]])
        result = ospa(x, y)
        assert result.distance == pytest.approx(1.0, rel=1e-12)  # (0+2)/2


class TestOspaBruteForce:
    def test_matches_enumeration_exactly(self):
        rng = np.random.default_rng(7)
        config = OspaConfig(order=1.0, cutoff=100.0)
        for _ in range(200):
            m = int(rng.integers(0, 5))
            n = int(rng.integers(0, 5))
            x = rng.uniform(-200, 200, size=(m, 2))
            y = rng.uniform(-200, 200, size=(n, 2))
            assert ospa(x, y, config).distance == brute_force_ospa(x, y, config)

    def test_symmetry_exact(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            x = rng.uniform(-200, 200, size=(int(rng.integers(0, 6)), 2))
            y = rng.uniform(-200, 200, size=(int(rng.integers(0, 6)), 2))
            assert ospa(x, y).distance == ospa(y, x).distance

    def test_triangle_inequality_sampled(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            x = rng.uniform(-100, 100, size=(3, 2))
            y = rng.uniform(-100, 100, size=(3, 2))
            z = rng.uniform(-100, 100, size=(3, 2))
            d_xy = ospa(x, y).distance
            d_yz = ospa(y, z).distance
            d_xz = ospa(x, z).distance
            assert d_xz <= d_xy + d_yz + 1e-9


class TestAggregation:
    def test_network_mean(self):
        truth = np.array([[0.0, 0.0]])
        perfect = np.array([[0.0, 0.0]])
        missing = np.empty((0, 2))
        value = network_ospa([perfect, missing], truth)
        assert value == pytest.approx(50.0, rel=1e-12)  # mean of 0 and 100
        with pytest.raises(ValueError, match="at least one sensor"):
            network_ospa([], truth)

    def test_time_average(self):
        assert time_averaged_network_ospa([1.0, 2.0, 3.0]) == pytest.approx(2.0)
        with pytest.raises(ValueError, match="at least one value"):
            time_averaged_network_ospa([])

    def test_cardinality_error_signed(self):
        errors = cardinality_error([5.5, 7.0, 6.0], true_count=6)
        np.testing.assert_allclose(errors, [-0.5, 1.0, 0.0], rtol=1e-12)
