import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from hinterf.core import ValidationError
from hinterf.perturbation import ZERO, ExperimentGeometry, Gaussian, TopHat, composite_profile
from hinterf.solver import (
    QuadratureError,
    check_collimator_distance,
    compute_corrections,
    compute_integrals,
    first_order_amplitude,
    integrate_two_level,
    kernel_integral,
    two_slit_amplitude,
)

BETA = 0.054791594297209697


def tophat_kernel(a, b, h, beta=BETA):
    k = beta - 1j
    return h * (np.exp(k * b) - np.exp(k * a)) / k


# ---------------------------------------------------------------- kernel_integral


def test_kernel_zero_profile():
    assert kernel_integral(ZERO, -10, 10, BETA) == 0


def test_kernel_tophat_closed_form():
    got = kernel_integral(TopHat(-3.2, 7.9, 0.01), -50, 50, BETA)
    assert got == pytest.approx(tophat_kernel(-3.2, 7.9, 0.01), rel=1e-11)


def test_kernel_tophat_cross_checked_by_scipy_quad():
    a, b, h = 1.0, 14.0, 0.02
    re = quad(lambda x: math.exp(BETA * x) * math.cos(x) * h, a, b, limit=200, epsrel=1e-13)[0]
    im = quad(lambda x: -math.exp(BETA * x) * math.sin(x) * h, a, b, limit=200, epsrel=1e-13)[0]
    assert kernel_integral(TopHat(a, b, h), a, b, BETA) == pytest.approx(re + 1j * im, rel=1e-11)


def test_kernel_delta_limit():
    eps, c, sigma = 1e-3, 2.5, 0.01
    g = Gaussian(c, sigma, eps / (sigma * math.sqrt(2 * math.pi)))  # area eps
    got = kernel_integral(g, -10, 10, BETA)
    assert got == pytest.approx(eps * np.exp((BETA - 1j) * c), rel=1e-3)


def test_kernel_clips_to_limits():
    p = TopHat(-2.0, 2.0, 0.01)
    assert kernel_integral(p, 0.0, 5.0, BETA) == pytest.approx(tophat_kernel(0.0, 2.0, 0.01),
                                                               rel=1e-11)
    assert kernel_integral(p, 3.0, 5.0, BETA) == 0


def test_kernel_rejects_reversed_limits():
    with pytest.raises(ValidationError):
        kernel_integral(TopHat(0, 1, 0.01), 1.0, 0.0, BETA)


def test_kernel_long_range_oscillation():
    # many periods: panels keep the tolerance
    got = kernel_integral(TopHat(-200.0, 100.0, 0.001), -300, 300, BETA)
    assert got == pytest.approx(tophat_kernel(-200.0, 100.0, 0.001), rel=1e-10)


def test_quadrature_error_is_a_runtime_error():
    assert issubclass(QuadratureError, RuntimeError)


# ---------------------------------------------------------- first-order amplitude


def test_first_order_trivial_cases():
    assert first_order_amplitude(ZERO, 1.0, 0.0, -5, 5, BETA) == 0
    got = first_order_amplitude(ZERO, 1.0, 1.0, -5, 5, BETA)
    assert got == pytest.approx(np.exp((1j - BETA) * 10), rel=1e-15)


def test_first_order_tophat_closed_form():
    delta, h, xs = 2.0, 0.004, 30.0
    got = first_order_amplitude(TopHat(-delta, 0.0, h), 1.0, 0.0, -40.0, xs, BETA)
    k = BETA - 1j
    want = 1j * np.exp((1j - BETA) * xs) * h * (1 - np.exp(-k * delta)) / k
    assert got == pytest.approx(want, rel=1e-10)


def test_first_order_rejects_bad_interval():
    with pytest.raises(ValidationError):
        first_order_amplitude(ZERO, 1.0, 0.0, 5, 5, BETA)


# ------------------------------------------------------------------ ODE oracle


def test_ode_trivial_cases():
    a = integrate_two_level(ZERO, 1.0, 0.0, -5, 5, BETA)
    assert a.a_s == pytest.approx(1.0) and abs(a.a_p) < 1e-14
    X = 12.0
    a = integrate_two_level(ZERO, 0.0, 1.0, 0.0, X, BETA)
    assert a.a_p == pytest.approx(np.exp((1j - BETA) * X), rel=1e-9)
    assert abs(a.a_p) == pytest.approx(math.exp(-BETA * X), rel=1e-9)


def test_ode_matches_first_order_small_peak():
    phi = Gaussian(0.0, 1.0, 1e-3)
    ode = integrate_two_level(phi, 1.0, 0.0, -20.0, 20.0, BETA).a_p
    fo = first_order_amplitude(phi, 1.0, 0.0, -20.0, 20.0, BETA)
    assert abs(ode - fo) <= 1e-5


def test_ode_against_tiny_step_reference():
    phi = Gaussian(0.0, 1.0, 1e-3)
    fine = integrate_two_level(phi, 1.0, 0.0, -20.0, 20.0, BETA, rtol=1e-13, atol=1e-16,
                               max_step=0.01).a_p
    default = integrate_two_level(phi, 1.0, 0.0, -20.0, 20.0, BETA).a_p
    assert abs(fine - default) <= 1e-10


def _errors(p0):
    out = []
    for eps in (1e-2, 1e-3, 1e-4):
        phi = Gaussian(0.0, 1.0, eps)
        ode = integrate_two_level(phi, 1.0, p0, -5.0, 20.0, BETA, rtol=1e-12,
                                  atol=1e-16).a_p
        out.append(abs(ode - first_order_amplitude(phi, 1.0, p0, -5.0, 20.0, BETA)))
    return np.log10(out)


def test_first_order_error_quadratic_with_initial_2p():
    slope = np.polyfit([-2, -3, -4], _errors(0.1), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.1)


def test_first_order_error_cubic_without_initial_2p():
    # with P0 = 0 the second-order term vanishes identically (A_s stays S0 to first order)
    slope = np.polyfit([-2, -3], _errors(0.0)[:2], 1)[0]
    assert slope == pytest.approx(3.0, abs=0.1)


def test_trajectory_norm_nonincreasing():
    traj = integrate_two_level(Gaussian(0.0, 1.0, 0.04), 0.8, 0.3j, -10.0, 30.0, BETA,
                               return_trajectory=True)
    n = traj.norm
    assert n[-1] < n[0]
    assert np.all(np.diff(n) <= 1e-9)


# ---------------------------------------------------------- perturbation integrals

GEOM = ExperimentGeometry(xi0=-40.0, x_star=40.0)


def test_integrals_narrow_profiles():
    p = Gaussian(0.0, 0.5, 0.01)
    ints = compute_integrals(p, p, GEOM, 3.0, 1.0, 0.0, BETA)
    corr = compute_corrections(p, p, GEOM, 3.0, ints.rho0, BETA, ints)
    assert abs(ints.z1 - ints.z10) <= abs(corr.delta1) + 1e-15
    assert ints.rho0 == 0
    assert ints.alpha10 == pytest.approx(np.angle(ints.z10))


def test_integrals_zero_second_profile():
    ints = compute_integrals(Gaussian(0, 0.5, 0.01), ZERO, GEOM, 2.0, 1.0, 0.0, BETA)
    assert ints.z2 == 0 and ints.z20 == 0


def test_integrals_rho0_and_s0_guard():
    ints = compute_integrals(ZERO, ZERO, GEOM, 2.0, 2.0, 0.5, BETA)
    assert ints.rho0 == pytest.approx(-1j * 0.25 * np.exp((BETA - 1j) * GEOM.xi0))
    with pytest.raises(ValidationError):
        compute_integrals(ZERO, ZERO, GEOM, 2.0, 0.0, 0.5, BETA)


def test_integral_decomposition_identity():
    # broad profiles reaching the window edges
    p1 = Gaussian(30.0, 4.0, 0.01)
    p2 = Gaussian(-30.0, 4.0, 0.01)
    for d in (0.5, 3.0, 7.0):
        ints = compute_integrals(p1, p2, GEOM, d, 1.0, 0.2, BETA)
        corr = compute_corrections(p1, p2, GEOM, d, ints.rho0, BETA, ints)
        assert ints.z1 == pytest.approx(ints.z10 + corr.delta1 - ints.rho0, rel=1e-10)
        assert ints.z2 == pytest.approx(ints.z20 + corr.delta2, rel=1e-10)


def test_corrections_vanish_for_interior_profiles():
    p = Gaussian(0.0, 0.5, 0.01)
    ints = compute_integrals(p, p, GEOM, 2.0, 1.0, 0.0, BETA)
    corr = compute_corrections(p, p, GEOM, 2.0, ints.rho0, BETA, ints)
    assert corr.eps1 == 0 and corr.eps2 == 0 and corr.eps0 == 0
    assert corr.delta10 == 0 and corr.delta20 == 0
    assert corr.small


def test_linearised_corrections_converge():
    p1 = Gaussian(36.0, 3.0, 0.01)
    p2 = Gaussian(-36.0, 3.0, 0.01)
    ratios = []
    for d in (0.1, 0.01, 0.001):
        ints = compute_integrals(p1, p2, GEOM, d, 1.0, 0.0, BETA)
        corr = compute_corrections(p1, p2, GEOM, d, ints.rho0, BETA, ints)
        ratios.append((abs(corr.delta10 / corr.delta1 - 1), abs(corr.delta20 / corr.delta2 - 1)))
    ratios = np.array(ratios)
    assert np.all(np.diff(ratios, axis=0) < 0)
    assert np.all(ratios[-1] < 1e-3)


def test_corrections_need_nonzero_principal_values():
    ints = compute_integrals(ZERO, Gaussian(0, 1, 0.01), GEOM, 1.0, 1.0, 0.0, BETA)
    with pytest.raises(ValidationError):
        compute_corrections(ZERO, Gaussian(0, 1, 0.01), GEOM, 1.0, 0j, BETA, ints)


# ---------------------------------------------------------- collimator distance


def test_collimator_examples():
    assert check_collimator_distance(-10.0, 0.054792, 2.0).threshold == pytest.approx(0.0)
    c = check_collimator_distance(-300.0, 0.054792, 0.02)
    assert c.threshold == pytest.approx(84.05, abs=0.01)
    assert c.threshold == pytest.approx(math.log(100) / 0.054792, rel=1e-14)
    assert c.satisfied
    assert not check_collimator_distance(-200.0, 0.054792, 0.02).satisfied
    with pytest.raises(ValidationError):
        check_collimator_distance(-1.0, 0.05, 0.0)


def test_two_slit_amplitude_equals_composite_route():
    p1, p2 = Gaussian(0.0, 0.5, 0.01), Gaussian(0.2, 0.3, 0.02)
    d = 2.0
    a = two_slit_amplitude(p1, p2, GEOM, d, 1.0, 0.0, BETA)
    direct = 1j * np.exp((1j - BETA) * GEOM.x_star) * (
        np.exp((1j - BETA) * d) * kernel_integral(p1, GEOM.xi0, GEOM.x_star + d, BETA)
        + kernel_integral(p2, GEOM.xi0 - d, GEOM.x_star, BETA))
    assert a == pytest.approx(direct, rel=1e-10)


# ---------------------------------------------------------- properties

small = st.floats(1e-4, 0.02)


@settings(max_examples=200, deadline=None)
@given(e1=small, e2=small, s=st.floats(0.1, 2.0), d=st.floats(0, 8))
def test_linearity(e1, e2, s, d):
    phi = composite_profile(Gaussian(0.3, 0.6, e1), TopHat(-1.0, 0.5, e2), d)
    a = first_order_amplitude(phi, 1.0, 0.0, -30, 30, BETA)
    b = first_order_amplitude(phi.scaled(s), 1.0, 0.0, -30, 30, BETA)
    assert b == pytest.approx(s * a, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(c=st.floats(-25, 25), eps=small, d=st.floats(0, 6), p0=st.complex_numbers(max_magnitude=0.1))
def test_translation_covariance(c, eps, d, p0):
    p1, p2 = Gaussian(0.5, 0.7, eps), Gaussian(-0.4, 0.5, eps)
    a = first_order_amplitude(composite_profile(p1, p2, d), 1.0, p0, -20 - d, 25, BETA)
    b = first_order_amplitude(composite_profile(p1.shifted(c), p2.shifted(c), d), 1.0, p0,
                              -20 - d + c, 25 + c, BETA)
    assert abs(b) ** 2 == pytest.approx(abs(a) ** 2, rel=1e-9, abs=1e-30)
