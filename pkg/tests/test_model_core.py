import math

import numpy as np
import pytest

from efimov_kit.errors import ConfigurationError
from efimov_kit.model.core import (
    PairIndex,
    SystemConfig,
    amplitudes,
    epsilon,
    forward_coordinate_map,
    inverse_coordinate_map,
    minimum_point,
    pair_band_edges,
    pair_dispersion,
    reduce_torus,
    three_body_band,
    three_body_symbol,
)

EQUAL = SystemConfig(1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
UNEQUAL = SystemConfig(1.0, 2.0, 3.0, 1.0, 1.0, 1.0, strict_hypothesis=True)


def test_derived_coefficients_equal_masses():
    assert EQUAL.M == pytest.approx(3.0)
    assert EQUAL.m == pytest.approx((1 / 3, 1 / 3, 1 / 3))
    assert EQUAL.n == pytest.approx((1.5, 1.5, 1.5))


def test_derived_coefficients_unequal_masses():
    assert UNEQUAL.M == pytest.approx(1 + 1 / 2 + 1 / 3)
    assert sum(UNEQUAL.m) == pytest.approx(1.0)
    assert UNEQUAL.n_of(1) == pytest.approx(11.0 / 5.0)


def test_pair_index_cycles():
    pair = PairIndex(1)
    assert (pair.beta, pair.gamma) == (2, 3)
    assert (PairIndex(3).beta, PairIndex(3).gamma) == (1, 2)
    with pytest.raises(ConfigurationError):
        PairIndex(4)


def test_invalid_parameters():
    with pytest.raises(ConfigurationError):
        SystemConfig(1.0, -1.0, 1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        SystemConfig(1.0, 1.0, 2.0, 1.0, 1.0, 1.0, strict_hypothesis=True)


def test_reduce_torus_half_open():
    assert reduce_torus(-math.pi) == pytest.approx(math.pi)
    assert reduce_torus(3 * math.pi) == pytest.approx(math.pi)
    assert reduce_torus(0.5 + 2 * math.pi) == pytest.approx(0.5)


def test_epsilon_values():
    assert epsilon(np.zeros(3)) == 0.0
    assert epsilon(np.full(3, math.pi)) == pytest.approx(6.0)


def test_coordinate_maps_round_trip():
    rng = np.random.default_rng(0)
    for cfg in (EQUAL, UNEQUAL):
        for alpha in (1, 2, 3):
            K, q, p = rng.uniform(-math.pi, math.pi, (3, 20, 3))
            k_a, k_b, k_g = inverse_coordinate_map(alpha, K, q, p, cfg)
            q2, p2 = forward_coordinate_map(alpha, k_a, k_b, k_g, cfg)
            assert np.allclose(reduce_torus(q2 - q), 0.0, atol=1e-12)
            assert np.allclose(reduce_torus(p2 - p), 0.0, atol=1e-12)
            assert np.allclose(reduce_torus(k_a + k_b + k_g - K), 0.0, atol=1e-12)


def test_three_body_symbol_is_channel_independent():
    rng = np.random.default_rng(2)
    K = rng.uniform(-1, 1, 3)
    k1, k2 = rng.uniform(-math.pi, math.pi, (2, 3))
    k3 = K - k1 - k2
    momenta = {1: k1, 2: k2, 3: k3}
    expected = sum(UNEQUAL.l_of(i) * epsilon(momenta[i]) for i in (1, 2, 3))
    for alpha in (1, 2, 3):
        pair = PairIndex(alpha)
        q, p = forward_coordinate_map(
            alpha, momenta[pair.alpha], momenta[pair.beta], momenta[pair.gamma], UNEQUAL
        )
        assert three_body_symbol(alpha, K, q, p, UNEQUAL) == pytest.approx(expected, abs=1e-12)


def test_minimum_point_minimizes_pair_dispersion():
    rng = np.random.default_rng(4)
    for alpha in (1, 2, 3):
        k = rng.uniform(-math.pi, math.pi, 3)
        p, _ = minimum_point(alpha, k, UNEQUAL)
        e_min, _ = pair_band_edges(alpha, k, UNEQUAL)
        assert pair_dispersion(alpha, k, p, UNEQUAL) == pytest.approx(float(e_min), abs=1e-12)
        probes = p + rng.normal(scale=0.05, size=(50, 3))
        assert np.all(pair_dispersion(alpha, k, probes, UNEQUAL) >= e_min - 1e-12)


def test_minimum_point_at_origin():
    p, r = minimum_point(1, np.zeros(3), EQUAL)
    assert np.allclose(p, 0.0)
    assert np.allclose(r, 2.0)


def test_degenerate_amplitude_reports_zero_component():
    p, r = minimum_point(1, np.array([math.pi, 0.0, 0.0]), EQUAL)
    assert r[0] == pytest.approx(0.0, abs=1e-12)
    assert p[0] == 0.0


def test_pair_band_edges():
    e_min, e_max = pair_band_edges(1, np.zeros(3), EQUAL)
    assert e_min == pytest.approx(0.0)
    assert e_max == pytest.approx(12.0)
    e_min, _ = pair_band_edges(1, np.array([0.4, 0.0, 0.0]), EQUAL)
    assert e_min > 0.0


def test_amplitudes_are_even():
    k = np.array([0.3, -1.2, 2.0])
    assert np.allclose(amplitudes(2, k, UNEQUAL), amplitudes(2, -k, UNEQUAL))


def test_three_body_band():
    low, high = three_body_band(np.zeros(3), EQUAL)
    assert low == pytest.approx(0.0, abs=1e-10)
    assert high == pytest.approx(13.5, rel=1e-6)
    low, _ = three_body_band(np.array([0.3, 0.0, 0.0]), UNEQUAL)
    assert low > 0.0
