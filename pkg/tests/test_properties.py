"""Property-based checks of the package invariants."""

from __future__ import annotations

import numpy as np
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fodp.accountant import DEFAULT_ORDERS, RdpCurve, compose, rdp_curve_values, rdp_subsampled_gaussian
from fodp.core import MechanismConfig, PrivacyConfig
from fodp.kernel import ReleaseBuffer, confidence, ema_update, kernel_weights, raw_log_kernel
from fodp.model import Mlp
from fodp.oracle import brute_force_sensitivity
from fodp.sampling import clip, clipped_sum

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
pos = st.floats(1e-3, 10.0)


@given(arrays(np.float64, st.integers(1, 20), elements=finite), st.floats(0.01, 10.0))
def test_clip_norm_bounded(g, c):
    out = clip(g, c)
    assert np.linalg.norm(out) <= c * (1 + 1e-12)
    if np.linalg.norm(g) <= c:
        assert np.array_equal(out, g)


@given(arrays(np.float64, st.tuples(st.integers(0, 10), st.just(4)), elements=finite), st.floats(0.1, 5.0))
def test_clipped_sum_norm_bounded_by_count(g, c):
    assert np.linalg.norm(clipped_sum(g, c)) <= len(g) * c * (1 + 1e-12)


mech_cfgs = st.builds(
    MechanismConfig,
    alpha=st.floats(0.05, 1.0),
    memory_window=st.integers(2, 12),
    temper_lambda=st.floats(0.0, 5.0),
    tau=st.floats(0.0, 10.0),
    gamma=st.floats(0.01, 1.0),
    memory_variant=st.sampled_from(["fractional_ca", "uniform", "exponential"]),
)


@given(mech_cfgs, st.integers(1, 20), st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_weights_form_a_convex_combination(cfg, steps, seed, scale):
    rel = np.random.default_rng(seed).standard_normal((steps, 3)) * scale
    b = ReleaseBuffer.empty(cfg.memory_window)
    for r in rel:
        b = ema_update(b, r, cfg.gamma)
    w = kernel_weights(b, cfg).weights
    assert len(w) == min(cfg.memory_window - 1, steps)
    assert np.all(w >= 0) and abs(w.sum() - 1.0) <= 1e-12


lags = st.integers(1, 30)


@given(lags, st.floats(0.05, 1.0), st.floats(0.0, 2.0), pos, pos, pos, st.floats(0.01, 5.0))
def test_raw_weight_decreases_in_tau_nu_chi(j, alpha, lam, chi, tau, nu, bump):
    chi = min(chi, 0.999)
    base = raw_log_kernel(np.array([j]), alpha, lam, chi, tau, np.array([nu]))[0]
    assert raw_log_kernel(np.array([j]), alpha, lam, chi, tau + bump, np.array([nu]))[0] < base
    assert raw_log_kernel(np.array([j]), alpha, lam, chi, tau, np.array([nu + bump]))[0] < base
    chi2 = chi + (1 - chi) * bump / (bump + 1)
    assume(chi2 > chi)
    assert raw_log_kernel(np.array([j]), alpha, lam, chi2, tau, np.array([nu]))[0] < base


@given(st.floats(0, 1e6), st.floats(0, 1e6), pos)
def test_confidence_monotone_in_trend_norm(a, b, zeta):
    lo, hi = sorted((a, b))
    c_lo, c_hi = confidence(np.array([lo]), zeta), confidence(np.array([hi]), zeta)
    assert 0 <= c_lo <= c_hi < 1 or (c_hi == 1.0 and hi / zeta > 1e15)


@given(st.floats(1e-4, 0.5), st.floats(1e-4, 0.5), st.floats(0.5, 5.0), st.floats(0.5, 5.0),
       st.sampled_from(DEFAULT_ORDERS[:40]))
def test_rdp_monotone_in_q_and_rho(q1, q2, r1, r2, order):
    q_lo, q_hi = sorted((q1, q2))
    r_lo, r_hi = sorted((r1, r2))
    assert rdp_subsampled_gaussian(order, q_lo, r_lo) <= rdp_subsampled_gaussian(order, q_hi, r_lo) * (1 + 1e-12)
    assert rdp_subsampled_gaussian(order, q_lo, r_hi) <= rdp_subsampled_gaussian(order, q_lo, r_lo) * (1 + 1e-12)


@given(st.floats(1e-4, 1.0), st.floats(0.5, 5.0))
def test_rdp_nondecreasing_in_order_and_bounded(q, rho):
    vals = rdp_curve_values(q, rho)
    assert np.all(vals >= 0)
    assert np.all(np.diff(vals) >= -1e-12 * vals[1:])
    assert np.all(vals <= np.array(DEFAULT_ORDERS) / (2 * rho**2) * (1 + 1e-11))


@given(st.floats(1e-4, 1.0), st.floats(0.5, 5.0), st.integers(0, 5000), st.integers(0, 5000))
def test_composition_additive_and_monotone(q, rho, t1, t2):
    per = rdp_curve_values(q, rho)
    a = compose(compose(RdpCurve(), per, t1), per, t2)
    b = compose(RdpCurve(), per, t1 + t2)
    np.testing.assert_allclose(a.eps_at_order, b.eps_at_order, rtol=1e-12, atol=0)
    assert np.all(compose(b, per, 1).eps_at_order >= b.eps_at_order)


@given(st.integers(0, 2**32 - 1), st.sampled_from([1.0, 0.9, 0.5, 0.25]), st.integers(1, 10))
def test_sensitivity_never_exceeds_bound(seed, beta, k):
    rng = np.random.default_rng(seed)
    grads = rng.standard_normal((6, 3)) * rng.uniform(0.1, 3.0)
    mask = rng.random(6) < 0.5
    prefix = list(rng.standard_normal((int(rng.integers(0, 12)), 3)))
    rep = brute_force_sensitivity(grads, mask, prefix, MechanismConfig(beta=beta, memory_window=k),
                                  PrivacyConfig(clip_c=1.0))
    assert not rep.violated


@given(st.integers(0, 2**32 - 1))
def test_small_step_decreases_full_batch_loss(seed):
    rng = np.random.default_rng(seed)
    m = Mlp(4, 3, hidden=(5, 4))
    th = rng.standard_normal(m.dim) * 0.5
    X = rng.standard_normal((30, 4))
    y = rng.integers(0, 3, 30)
    g = m.batch_grads(th, X, y).mean(axis=0)
    assume(np.linalg.norm(g) > 1e-6)
    before = m.evaluate(th, X, y)[1]
    after = m.evaluate(th - 1e-3 * g, X, y)[1]
    assert after < before
