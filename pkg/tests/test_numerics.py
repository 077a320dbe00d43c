import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from tclevy.numerics import (
    ContractError,
    DomainError,
    Grid1D,
    RngStream,
    bessel_k1,
    sample_cir_transition,
    sample_gamma,
    sample_inverse_gaussian,
    sqrt_right_halfplane,
    trapezoid,
)

from conftest import within_se


def k1_quadrature(x):
    """K1(x) = int_0^inf exp(-x cosh t) cosh t dt, evaluated with mpmath.

    The integrand peaks near t = acosh(1/x) for small x and is below
    e^-60 of its peak once x cosh t exceeds x + 60, so the range is cut there.
    """
    mpmath.mp.dps = 25
    x = mpmath.mpf(x)
    f = lambda t: mpmath.exp(-x * (mpmath.cosh(t) - 1)) * mpmath.cosh(t)
    top = mpmath.acosh(1 + 60 / x)
    pts = sorted({mpmath.mpf(0), *(top * q for q in (0.25, 0.5, 0.75, 0.9)), top})
    return float(mpmath.exp(-x) * mpmath.quad(f, pts))


# -- grids --------------------------------------------------------------------


def test_grid_rejects_short_and_unsorted():
    with pytest.raises(ContractError):
        Grid1D(np.array([1.0]))
    with pytest.raises(ContractError):
        Grid1D(np.array([0.0, 2.0, 1.0]))
    with pytest.raises(ContractError):
        Grid1D(np.array([0.0, 1.0, 2.5]), spacing=1.0)


def test_symmetric_grid_is_exactly_mirrored():
    g = Grid1D.symmetric(4.6, 0.01)
    assert g.is_symmetric
    assert g.points[-1] >= 4.6
    assert g.spacing == 0.01


def test_uniform_grid_endpoints():
    g = Grid1D.uniform(-10.0, 10.0, 0.01)
    assert len(g) == 2001
    assert g.points[0] == -10.0 and abs(g.points[-1] - 10.0) < 1e-12


# -- RNG streams -------------------------------------------------------------


def test_stream_reproducible_and_distinct():
    a = RngStream(42, 3).generator.random(5)
    b = RngStream(42, 3).generator.random(5)
    c = RngStream(42, 4).generator.random(5)
    d = RngStream(43, 3).generator.random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_substreams_are_independent():
    s = RngStream(1, 0)
    x = s.substream(0).generator.standard_normal(20000)
    y = s.substream(1).generator.standard_normal(20000)
    assert abs(np.corrcoef(x, y)[0, 1]) < 3 / np.sqrt(20000)


def test_stream_rejects_out_of_range():
    with pytest.raises(DomainError):
        RngStream(-1, 0)
    with pytest.raises(DomainError):
        RngStream(0, 2**64)


# -- K1 -----------------------------------------------------------------------


def test_k1_at_one():
    assert abs(bessel_k1(1.0) - 0.6019072302) < 1e-10


@pytest.mark.parametrize("x", [1e-8, 1e-3, 0.1, 0.7, 1.0, 2.5, 10.0, 50.0, 300.0, 700.0])
def test_k1_matches_integral_representation(x):
    ref = k1_quadrature(x)
    assert abs(bessel_k1(x) / ref - 1) < 1e-10


def test_k1_small_argument_limit():
    assert abs(1e-6 * bessel_k1(1e-6) - 1) < 1e-5


def test_k1_large_argument_asymptotic():
    ratio = bessel_k1(10.0) / (np.sqrt(np.pi / 20) * np.exp(-10))
    assert 0.95 <= ratio <= 1.05


def test_k1_underflow_and_domain():
    assert bessel_k1(800.0) == 0.0
    for bad in (0.0, -1.0):
        with pytest.raises(DomainError):
            bessel_k1(bad)


def test_k1_strictly_decreasing():
    x = np.geomspace(1e-6, 600, 500)
    assert np.all(np.diff(bessel_k1(x)) < 0)


# -- square root --------------------------------------------------------------


@pytest.mark.parametrize("z, w", [(1, 1), (-1, 1j), (3 + 4j, 2 + 1j), (complex(-4, -0.0), 2j)])
def test_sqrt_examples(z, w):
    assert abs(sqrt_right_halfplane(z) - w) < 1e-15


def test_sqrt_squares_back():
    rng = np.random.default_rng(0)
    z = rng.standard_normal(10000) * 10 + 1j * rng.standard_normal(10000) * 10
    w = sqrt_right_halfplane(z)
    assert np.all(w.real >= 0)
    assert np.max(np.abs(w**2 - z) / np.abs(z)) < 1e-12


# -- trapezoid ----------------------------------------------------------------


def test_trapezoid_examples():
    g = Grid1D.uniform(0.0, 1.0, 0.1)
    assert abs(trapezoid(np.ones(len(g)), g) - 1) < 1e-14
    g = Grid1D.uniform(-1.0, 1.0, 0.01)
    assert abs(trapezoid(g.points, g)) < 1e-14
    x = np.linspace(0, np.pi, 1001)
    assert abs(trapezoid(np.sin(x), x) - 2) < 1e-5


def test_trapezoid_length_mismatch():
    with pytest.raises(ContractError):
        trapezoid(np.ones(3), Grid1D.uniform(0.0, 1.0, 0.25))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 200), st.floats(0.01, 2.0))
def test_trapezoid_even_function_is_twice_half(m, h):
    g = Grid1D.symmetric(m * h, h)
    f = np.cosh(g.points / (m * h))
    half = Grid1D(g.points[m:])
    assert abs(trapezoid(f, g) - 2 * trapezoid(f[m:], half)) < 1e-12 * abs(trapezoid(f, g))


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-3, 3), st.floats(0.1, 4))
def test_trapezoid_exact_for_affine(a, b, lo, width):
    x = np.linspace(lo, lo + width, 17)
    exact = a * width + b * ((lo + width) ** 2 - lo**2) / 2
    assert abs(trapezoid(a + b * x, x) - exact) < 1e-10 * (1 + abs(exact))


# -- samplers -----------------------------------------------------------------


def test_gamma_moments_and_survival():
    x = sample_gamma(2.0, 4.0, RngStream(1), size=100_000)
    assert within_se(x, 0.5)
    sq = (x - 0.5) ** 2
    assert within_se(sq, 0.125)
    e = sample_gamma(1.0, 1.0, RngStream(2), size=100_000)
    assert within_se(e > 1, np.exp(-1))


def test_gamma_tiny_shape_stays_positive():
    x = sample_gamma(1e-3, 1.0, RngStream(3), size=10_000)
    assert np.all(x > 0)


def test_gamma_domain():
    with pytest.raises(DomainError):
        sample_gamma(0.0, 1.0, RngStream(0))
    with pytest.raises(DomainError):
        sample_gamma(1.0, -1.0, RngStream(0))


def test_inverse_gaussian_moments():
    x = sample_inverse_gaussian(1.0, 2.0, RngStream(4), size=100_000)
    assert within_se(x, 1.0)
    assert within_se((x - 1.0) ** 2, 0.5)


def test_inverse_gaussian_laplace_transform():
    mean, shape, s = 1.0, 2.0, 1.0
    x = sample_inverse_gaussian(mean, shape, RngStream(5), size=100_000)
    exact = np.exp(shape / mean * (1 - np.sqrt(1 + 2 * mean**2 * s / shape)))
    assert within_se(np.exp(-s * x), exact)


def test_inverse_gaussian_ks():
    mean, shape = 0.7, 1.3
    x = sample_inverse_gaussian(mean, shape, RngStream(6), size=20_000)
    ref = stats.invgauss(mu=mean / shape, scale=shape)
    assert stats.kstest(x, ref.cdf).pvalue > 0.01


def test_inverse_gaussian_extreme_shapes_are_finite():
    x = sample_inverse_gaussian(1e-4, 1e-10, RngStream(7), size=10_000)
    assert np.all(np.isfinite(x)) and np.all(x > 0)
    with pytest.raises(DomainError):
        sample_inverse_gaussian(1.0, 0.0, RngStream(0))


def test_cir_transition_conditional_mean():
    x = sample_cir_transition(2.0, 1.0, 1.0, 0.1, 0.5, RngStream(8), size=100_000)
    assert within_se(x, 1 + np.exp(-0.5))


def test_cir_transition_small_volatility_is_ode():
    x = sample_cir_transition(2.0, 1.0, 1.0, 1e-6, 0.5, RngStream(9))
    assert abs(x - (1 + np.exp(-0.5))) < 1e-3


def test_cir_transition_preserves_stationary_law():
    kappa, eta, zeta = 1.0, 1.0, 0.3
    shape, rate = 2 * kappa * eta / zeta**2, 2 * kappa / zeta**2
    x0 = sample_gamma(shape, rate, RngStream(10), size=10_000)
    x1 = sample_cir_transition(x0, kappa, eta, zeta, 0.5, RngStream(11))
    ref = sample_gamma(shape, rate, RngStream(12), size=10_000)
    assert stats.ks_2samp(x1, ref).pvalue > 0.01


def test_cir_transition_domain():
    with pytest.raises(DomainError):
        sample_cir_transition(1.0, 0.0, 1.0, 0.1, 0.1, RngStream(0))
    with pytest.raises(DomainError):
        sample_cir_transition(-1.0, 1.0, 1.0, 0.1, 0.1, RngStream(0))


def test_samplers_reproducible():
    a = sample_inverse_gaussian(1.0, 2.0, RngStream(99, 5), size=50)
    b = sample_inverse_gaussian(1.0, 2.0, RngStream(99, 5), size=50)
    assert np.array_equal(a, b)
    a = sample_cir_transition(1.0, 1.0, 1.0, 0.1, 0.1, RngStream(99, 6), size=50)
    b = sample_cir_transition(1.0, 1.0, 1.0, 0.1, 0.1, RngStream(99, 6), size=50)
    assert np.array_equal(a, b)
