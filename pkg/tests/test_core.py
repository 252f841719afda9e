from __future__ import annotations

import math

import numpy as np
import pytest

from fodp.core import (
    ConfigError,
    DimensionError,
    MechanismConfig,
    MemoryVariant,
    PrivacyConfig,
    Rng,
    gaussian_vector,
    vec_axpy,
    vec_norm2,
    vec_scale,
)

# Box-Muller applied by hand to the raw Philox words of Rng(0)'s noise substream
FROZEN_GAUSS_SEED0 = [-0.5513916061272756, 1.3929727286934361, -1.1249215559092096, 0.19536117865736088]


def test_vector_helpers():
    assert vec_norm2(np.array([3.0, 4.0])) == 5.0
    np.testing.assert_array_equal(vec_axpy(2.0, np.array([1.0, 1.0]), np.array([0.0, 1.0])), [2.0, 3.0])
    np.testing.assert_array_equal(vec_scale(0.0, np.array([1.5, -2.0])), [0.0, 0.0])
    with pytest.raises(DimensionError):
        vec_axpy(1.0, np.zeros(2), np.zeros(3))


def test_gaussian_zero_std_is_zero():
    np.testing.assert_array_equal(gaussian_vector(Rng(1).stream("noise"), 3, 0.0), np.zeros(3))


def test_gaussian_zero_std_still_advances_stream():
    a, b = Rng(5), Rng(5)
    gaussian_vector(a.stream("noise"), 4, 0.0)
    gaussian_vector(b.stream("noise"), 4, 1.0)
    assert a.stream("noise").random() == b.stream("noise").random()


def test_gaussian_negative_std_rejected():
    with pytest.raises(ValueError):
        gaussian_vector(Rng(0).stream("noise"), 3, -1.0)


def test_gaussian_frozen_values():
    z = gaussian_vector(Rng(0).stream("noise"), 4, 1.0)
    np.testing.assert_allclose(z, FROZEN_GAUSS_SEED0, rtol=0, atol=1e-15)


def test_gaussian_odd_length_truncates():
    z = gaussian_vector(Rng(0).stream("noise"), 3, 1.0)
    assert z.shape == (3,)


def test_gaussian_moments():
    n = 10**5
    z = gaussian_vector(Rng(11).stream("noise"), n, 1.0)
    assert abs(z.mean()) < 4 / math.sqrt(n)
    assert abs(z.var() - 1.0) < 0.05


def test_substreams_independent_and_replayable():
    r = Rng(3)
    a = gaussian_vector(r.stream("noise"), 8, 1.0)
    b = gaussian_vector(r.stream("mask"), 8, 1.0)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, gaussian_vector(Rng(3).stream("noise"), 8, 1.0))


def test_drawing_one_substream_does_not_shift_another():
    r1, r2 = Rng(9), Rng(9)
    r1.stream("mask").random(1000)
    assert r1.stream("noise").random() == r2.stream("noise").random()


def test_custom_stream_names():
    r = Rng(0)
    assert r.stream("other").random() != r.stream("noise").random()
    assert r.stream("other") is r.stream("other")


@pytest.mark.parametrize("seed", [-1, 2**64])
def test_seed_range(seed):
    with pytest.raises(ConfigError):
        Rng(seed)


def test_config_defaults():
    m, p = MechanismConfig(), PrivacyConfig()
    assert (m.beta, m.alpha, m.memory_window) == (0.90, 0.80, 8)
    assert (p.clip_c, p.sigma, p.q, p.delta) == (1.0, 1.1, 0.04, 1e-5)
    assert m.memory_variant is MemoryVariant.FRACTIONAL_CA


def test_variant_coerced_from_string():
    assert MechanismConfig(memory_variant="uniform").memory_variant is MemoryVariant.UNIFORM


@pytest.mark.parametrize(
    "kwargs",
    [
        {"beta": 0.0}, {"beta": 1.1}, {"alpha": 0.0}, {"alpha": 1.5}, {"memory_window": 0},
        {"memory_window": 2.5}, {"temper_lambda": -0.1}, {"tau": -1.0}, {"gamma": 0.0},
        {"kappa": 0.0}, {"zeta": 0.0}, {"eps_stab": 0.0}, {"exp_decay": 1.0}, {"memory_variant": "nope"},
    ],
)
def test_mechanism_config_rejects(kwargs):
    with pytest.raises((ConfigError, ValueError)):
        MechanismConfig(**kwargs)


@pytest.mark.parametrize(
    "kwargs",
    [{"clip_c": 0.0}, {"sigma": 0.0}, {"q": 0.0}, {"q": 1.5}, {"delta": 0.0}, {"delta": 1.0}, {"steps_T": 0}],
)
def test_privacy_config_rejects(kwargs):
    with pytest.raises(ConfigError):
        PrivacyConfig(**kwargs)
