from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from kolmoqi.bounds import (
    STYLES,
    WANG_COEF,
    GammaForm,
    control_distance,
    gamma2_eval,
    gamma2_lower_bound,
    gamma_eval,
    girsanov_density,
    girsanov_log_density_state,
    girsanov_path,
    gradient,
    integrated_harnack_bound_general,
    integrated_harnack_bound_kolmogorov,
    rn_bound,
    wang_constant_general,
    wang_constant_kolmogorov,
)
from kolmoqi.drift import DriftComponent, DriftSpec, Linear, builtin_drifts, identity_drift, tanh_drift
from kolmoqi.kolmogorov import KolmogorovState, ShiftVector, lq_log_norm_exact, sample_exact
from kolmoqi.wiener import WienerSpaceModel, sample_brownian_path, uniform_grid

S = KolmogorovState
LIN1 = DriftSpec((DriftComponent((1,), Linear(1.0), 1.0, 1.0),))


def test_wang_coefficient_identity():
    assert WANG_COEF == pytest.approx(4 + math.sqrt(13), rel=1e-14)
    # the coefficient is the larger root of (c - 2)(c - 6) = 9
    assert (WANG_COEF - 2) * (WANG_COEF - 6) == pytest.approx(9, rel=1e-12)


# control distance ---------------------------------------------------------


def test_control_distance_examples():
    assert control_distance(0, 1, S([0], [0]), S([3], [4])) == pytest.approx(5, rel=1e-15)
    assert control_distance(1, 1, S([0], [0]), S([1], [1])) == pytest.approx(math.sqrt(5), rel=1e-15)
    assert control_distance(2, 3, S([0, 0], [0]), S([1, 1], [1])) == pytest.approx(math.sqrt(31 / 3), rel=1e-15)
    with pytest.raises(ValueError):
        control_distance(1, 0, S([0], [0]), S([1], [1]))


def _sup_linear(alpha, beta, dp, dxi, n=200_000, seed=0):
    """Lower estimate of sup (f(y) - f(x)) over linear f with Gamma <= 1."""
    g = np.random.default_rng(seed)
    d = dp.size
    coef = g.normal(size=(n, d + 1))
    a, c = coef[:, :d], coef[:, d]
    gam = np.sum((a - alpha * c[:, None]) ** 2, axis=1) + beta * c**2
    coef /= np.sqrt(gam)[:, None]
    return float(np.max(coef[:, :d] @ dp + coef[:, d] * dxi))


@pytest.mark.parametrize("alpha,beta,dp,dxi", [(2, 3, [1, 1], 1), (0.5, 2, [1, -2], 0.3), (1, 1, [0.5], -2)])
def test_control_distance_supremum_oracle(alpha, beta, dp, dxi):
    dp = np.array(dp, float)
    d = control_distance(alpha, beta, S(np.zeros(dp.size), [0]), S(dp, [dxi]))
    lower = _sup_linear(alpha, beta, dp, dxi)
    assert lower <= d * (1 + 1e-12)
    assert lower >= d * 0.995


pts = st.lists(st.floats(-5, 5), min_size=3, max_size=3)


@given(pts, pts, pts, st.floats(0, 3), st.floats(0.1, 3))
@settings(max_examples=300, deadline=None)
def test_control_distance_is_metric(x, y, z, alpha, beta):
    X, Y, Z = (S(v[:2], v[2:]) for v in (x, y, z))
    dxy = control_distance(alpha, beta, X, Y)
    assert dxy == pytest.approx(control_distance(alpha, beta, Y, X), rel=1e-12, abs=1e-12)
    assert control_distance(alpha, beta, X, Z) <= dxy + control_distance(alpha, beta, Y, Z) + 1e-12 * (1 + dxy)
    assert control_distance(alpha, beta, X, X) == 0


# gradient forms -------------------------------------------------------------


def test_gamma_examples():
    pt = [0.3, -0.2, 0.7]
    for alpha, beta in [(0, 0), (1, 1), (2.5, 0.5)]:
        form = GammaForm(alpha, beta, 2)
        assert gamma_eval(form, lambda p, xi: xi[:, 0], pt) == pytest.approx(2 * alpha**2 + beta, rel=1e-8)
        assert gamma_eval(form, lambda p, xi: p[:, 0], pt) == pytest.approx(1.0, rel=1e-8)


def test_gamma_zero_form_is_carre_du_champ():
    g = np.random.default_rng(1)
    z = g.normal(size=(200, 3))
    f = lambda p, xi: np.sin(p[:, 0] * xi[:, 0]) + p[:, 1] ** 2 * np.cos(xi[:, 0])  # noqa: E731
    got = gamma_eval(GammaForm(0, 0, 2), f, z)
    p1, p2, xi = z.T
    exact = (xi * np.cos(p1 * xi)) ** 2 + (2 * p2 * np.cos(xi)) ** 2
    assert np.allclose(got, exact, rtol=1e-6, atol=1e-8)
    assert np.all(gamma_eval(GammaForm(1.3, 0.4, 2), f, z) >= 0)


def _random_smooth(g):
    c = g.normal(size=6)
    return lambda p, xi: (
        np.sin(c[0] * p[:, 0] + c[1] * xi[:, 0]) + c[2] * p[:, 0] ** 2 * xi[:, 0] + c[3] * np.cos(c[4] * xi[:, 0] - c[5] * p[:, 0])
    )


def test_gamma2_lower_bound_spot_check():
    g = np.random.default_rng(2)
    spec = tanh_drift((1,))
    m, M = 2.0, 3.0
    worst = math.inf
    for _ in range(10):
        f = _random_smooth(g)
        z = g.normal(size=(100, 2))
        for alpha in (0.5, 1.0, 2.0):
            form = GammaForm(alpha, 1.0, 1)
            g2 = gamma2_eval(form, f, z, spec)
            grad = gradient(lambda w: f(w[:, :1], w[:, 1:]), z)
            worst = min(worst, float(np.min(g2 - gamma2_lower_bound(form, grad, m, M))))
    assert worst >= -1e-4


def test_gamma2_kolmogorov_quadratic():
    # f = xi: Gamma(f) is constant and Lf = p, so Gamma_2 = -Gamma(f, Lf) = alpha
    alpha, beta = 1.5, 0.5
    form = GammaForm(alpha, beta, 1)
    val = gamma2_eval(form, lambda p, xi: xi[:, 0], [0.4, 0.1])
    assert val == pytest.approx(alpha, abs=1e-6)


# Harnack constants ------------------------------------------------------------


def test_wang_kolmogorov_examples():
    x = S([0.3], [0.2])
    assert wang_constant_kolmogorov(2, 1, x, x).value == 1.0
    r = wang_constant_kolmogorov(2, 1, S([1], [0]), S([0], [0]))
    assert r.log_value == pytest.approx(6 / (4 - math.sqrt(13)), rel=1e-14)
    assert r.log_value == pytest.approx(15.2110, abs=2e-4)
    assert r.value == pytest.approx(math.exp(sum(r.exponent_breakdown.values())), rel=1e-12)
    with pytest.raises(ValueError):
        wang_constant_kolmogorov(1.0, 1, x, x)


def test_wang_kolmogorov_decreases_in_alpha():
    x, y = S([1.0], [0.5]), S([0.0], [0.0])
    logs = [wang_constant_kolmogorov(a, 1.0, x, y).log_value for a in (1.1, 1.5, 2, 4, 10, 1e6)]
    assert all(a > b for a, b in zip(logs, logs[1:]))
    limit = WANG_COEF * (1 + 0.25)
    assert logs[-1] == pytest.approx(limit, rel=1e-5)


def test_harnack_kolmogorov_examples():
    assert integrated_harnack_bound_kolmogorov(2, 1, [0], [0]).value == 1.0
    r = integrated_harnack_bound_kolmogorov(2, 1, [0], [1])
    assert r.log_value == pytest.approx(9 / (4 - math.sqrt(13)), rel=1e-14)
    assert r.log_value == pytest.approx(22.8166, abs=2e-4)
    with pytest.raises(ValueError):
        integrated_harnack_bound_kolmogorov(1, 1, [0], [1])


@given(st.floats(1.01, 10), st.floats(0.1, 5), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=200, deadline=None)
def test_harnack_equals_wang_at_dual_exponent(q, t, p, xi):
    h = integrated_harnack_bound_kolmogorov(q, t, [p], [xi]).log_value
    w = wang_constant_kolmogorov((q + 1) / q, t, S([p], [xi]), S([0], [0])).log_value
    assert h == pytest.approx(w, rel=1e-12, abs=1e-12)


def test_wang_general_examples():
    r = wang_constant_general(2, 1, S([0], [1]), S([0], [0]), LIN1)
    assert r.log_value == pytest.approx(6, rel=1e-14)
    x = S([0.4], [0.1])
    assert wang_constant_general(2, 1, x, x, LIN1).value == 1.0


def test_wang_general_a2_product():
    spec = DriftSpec((DriftComponent((1,), Linear(1.5), 1.5, 1.5),))
    alpha, t = 3.0, 0.7
    x, y = S([0.4, -0.9], [0.3]), S([0.0, 0.2], [-0.1])
    got = wang_constant_general(alpha, t, x, y, spec, mode="A2").log_value
    c = alpha / (alpha - 1)
    m = M = 1.5
    dp1, dp2, dxi = 0.4, -1.1, 0.4
    a_form = c * M / (4 * m * t) * (12 / (m**2 * t**2) * (m * t / 2 * dp1 + dxi) ** 2 + dp1**2)
    gauss = c / (4 * t) * dp2**2
    assert got == pytest.approx(a_form + gauss, rel=1e-13)


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.floats(-2, 2), st.floats(1.05, 6), st.floats(0.2, 3))
@settings(max_examples=200, deadline=None)
def test_a3_reduces_to_a(dp, dxi, alpha, t):
    spec = tanh_drift((1, 2, 3))
    x, y = S(dp, [dxi]), S([0, 0, 0], [0])
    a = wang_constant_general(alpha, t, x, y, spec, mode="A").log_value
    a3 = wang_constant_general(alpha, t, x, y, spec, mode="A3").log_value
    assert a3 == pytest.approx(a, rel=1e-12, abs=1e-12)


def test_harnack_general_examples():
    assert integrated_harnack_bound_general(2, 1, S([0], [0]), LIN1).value == 1.0
    assert integrated_harnack_bound_general(2, 1, S([0], [1]), LIN1).log_value == pytest.approx(9, rel=1e-14)
    spec = DriftSpec((DriftComponent((1,), Linear(2.0), 2.0, 2.0),))
    t, xi = 0.8, 0.6
    r = integrated_harnack_bound_general(3, t, S([-2 * xi / (2.0 * t)], [xi]), spec, mode="A3")
    assert r.exponent_breakdown["A1_cross"] == pytest.approx(0, abs=1e-14)


def test_general_rejects_invalid_drift():
    bad = DriftSpec((DriftComponent((1,), Linear(1.0), 0.0, 1.0),))
    with pytest.raises(ValueError):
        wang_constant_general(2, 1, S([0], [1]), S([0], [0]), bad)


# density-ratio bounds ----------------------------------------------------------


def test_rn_bound_examples():
    zero = ShiftVector([0.0], [0.0])
    spec = identity_drift(1)
    for style in STYLES:
        assert rn_bound(style, 2, 1, zero, spec).value == 1.0
    k1 = ShiftVector([0.0], [1.0])
    assert rn_bound("ex315", 2, 1, k1).log_value == pytest.approx(9, rel=1e-14)
    assert rn_bound("cmm_exact", 2, 1, k1).log_value == pytest.approx(6, rel=1e-14)
    with pytest.raises(ValueError):
        rn_bound("thm33", 1, 1, k1)
    with pytest.raises(ValueError):
        rn_bound("thm33", 2, 0, k1)
    with pytest.raises(ValueError):
        rn_bound("thm312", 2, 1, k1)


def test_rn_bound_breakdown_sums():
    sh = ShiftVector([0.3, -0.5], [0.8, 0.1])
    spec = identity_drift(2)
    for style in STYLES:
        r = rn_bound(style, 2.5, 0.6, sh, spec)
        assert r.value == pytest.approx(math.exp(sum(r.exponent_breakdown.values())), rel=1e-12)


def test_identity_drift_general_bound_matches_example_form():
    g = np.random.default_rng(3)
    spec = identity_drift(3)
    for _ in range(50):
        sh = ShiftVector(g.normal(size=3), g.normal(size=3))
        q, t = g.uniform(1.1, 5), g.uniform(0.3, 2)
        a = rn_bound("thm312", q, t, sh, spec).log_value
        assert a == pytest.approx(rn_bound("ex315", q, t, sh).log_value, rel=1e-12)
        assert rn_bound("thm39", q, t, sh, spec).log_value == pytest.approx(a, rel=1e-12)


def test_thm312_divergent_status():
    spec = builtin_drifts()["log_perturbed"]
    r = rn_bound("thm312", 2, 1e-3, ShiftVector([0.0], [1e3]), spec)
    assert r.status == "DIVERGENT"
    assert r.value == math.inf


def test_domination_on_random_grid():
    g = np.random.default_rng(4)
    violations = 0
    for _ in range(1000):
        q, t = g.uniform(1.01, 10), g.uniform(0.05, 5)
        sh = ShiftVector(g.normal(size=2) * 2, g.normal(size=2) * 2)
        if rn_bound("thm33", q, t, sh).log_value < lq_log_norm_exact(t, sh, q):
            violations += 1
    assert violations == 0


@given(st.floats(1.01, 8), st.floats(0.01, 4), st.floats(0.2, 3), st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=200, deadline=None)
def test_bounds_monotone_in_q(q, dq, t, h, k):
    sh = ShiftVector([h], [k])
    spec = identity_drift(1)
    for style in STYLES:
        assert rn_bound(style, q + dq, t, sh, spec).log_value >= rn_bound(style, q, t, sh, spec).log_value - 1e-12


# Girsanov ------------------------------------------------------------------------


def test_girsanov_path_examples():
    a, b, nsq = girsanov_path(1, ShiftVector([1.0], [0.0]))
    assert (a[0], b[0], nsq) == pytest.approx((-4, 3, 4), rel=1e-15)
    a, b, nsq = girsanov_path(1, ShiftVector([0.0], [0.0]))
    assert np.all(a == 0) and np.all(b == 0) and nsq == 0
    a, b, _ = girsanov_path(2, ShiftVector([0.0], [1.0]))
    assert (a[0], b[0]) == pytest.approx((-1.5, 0.75), rel=1e-15)
    area = integrate.quad(lambda s: s * a[0] + s**2 * b[0], 0, 2)[0]
    assert area == pytest.approx(-1.0, rel=1e-12)


@given(st.floats(0.05, 5), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=200, deadline=None)
def test_girsanov_endpoint_identities(t, h, k):
    a, b, nsq = girsanov_path(t, ShiftVector([h], [k]))
    end = t * a[0] + t**2 * b[0]
    area = t**2 / 2 * a[0] + t**3 / 3 * b[0]
    scale = 1 + abs(h) + abs(k) * (1 + 1 / t)
    assert abs(end + h) <= 1e-12 * scale * (1 + 1 / t)
    assert abs(area + (t * h + k)) <= 1e-12 * scale * (1 + t)
    assert nsq == pytest.approx(4 * h * h / t + 12 * h * k / t**2 + 12 * k * k / t**3, rel=1e-12, abs=1e-12)


def test_girsanov_density_trivial_and_grid_checks():
    path = sample_brownian_path(WienerSpaceModel(), 1, uniform_grid(1.0, 8), seed=1, replicates=10)
    assert np.all(girsanov_density(path, [0.0], [0.0], 1.0) == 1.0)
    with pytest.raises(ValueError):
        girsanov_density(path, [1.0], [0.0], 2.0)


def test_girsanov_reduction_vs_ito():
    a, b, _ = girsanov_path(1.0, ShiftVector([1.0], [0.5]))
    gaps = []
    for steps in (64, 256, 1024):
        path = sample_brownian_path(WienerSpaceModel(), 1, uniform_grid(1.0, steps), seed=2, replicates=2000)
        red = np.log(girsanov_density(path, a, b, 1.0, "reduction"))
        ito = np.log(girsanov_density(path, a, b, 1.0, "ito"))
        gaps.append(float(np.mean(np.abs(red - ito))))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 5.0 / 1024


def test_girsanov_density_moments():
    n = 10**6
    s = sample_exact(1.0, S([0], [0]), n, seed=3)
    a, b, nsq = girsanov_path(1.0, ShiftVector([1.0], [0.0]))
    j = np.exp(girsanov_log_density_state(s, a, b, 1.0))
    assert abs(j.mean() - 1) < 3 * j.std(ddof=1) / math.sqrt(n)
    # J is the density of the law shifted by gamma; its mean under the shifted
    # law of f equals E[f(X + shift)]
    f = np.cos(s.p[:, 0] - s.xi[:, 0])
    shifted = sample_exact(1.0, S([-1.0], [0.0]), n, seed=4)
    g = np.cos(shifted.p[:, 0] - shifted.xi[:, 0])
    fj = f * j
    se = math.sqrt(fj.var() / n + g.var() / n)
    assert abs(fj.mean() - g.mean()) < 3 * se
