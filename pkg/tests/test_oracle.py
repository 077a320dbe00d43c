import numpy as np
import pytest
from scipy import integrate

from tclevy.levy import NigParams, nig_bar_nu, nig_char_exponent, nig_psi1, nig_psi2
from tclevy.numerics import ContractError, Grid1D
from tclevy.oracle import (
    ModelTruth,
    composite_cf,
    composite_cf_partials_fd,
    fourier_pair_residual,
    nig_tail_mass_bound,
    psi2_from_fd,
    rate_function,
)
from tclevy.timechange import CirChange, Deterministic, GammaChange


@pytest.fixture
def gamma_truth(triple):
    return ModelTruth(triple, GammaChange(1.0, 1.0), 1.0)


@pytest.fixture
def cir_truth(triple):
    return ModelTruth(triple, CirChange(1.0, 1.0, 0.1), 0.1)


def test_composite_cf_basics(gamma_truth):
    assert composite_cf(gamma_truth, [0, 0, 0]) == 1
    rng = np.random.default_rng(0)
    assert all(abs(composite_cf(gamma_truth, u)) <= 1 for u in rng.normal(scale=4, size=(100, 3)))


def test_pure_levy_reduction(triple):
    truth = ModelTruth(triple, Deterministic(1.0), 0.4)
    for u in ([0.3, -1.0, 2.0], [5.0, 0.0, -0.1]):
        expected = np.exp(0.4 * sum(nig_char_exponent(c.nig, x) for c, x in zip(triple, u)))
        assert abs(composite_cf(truth, u) - expected) < 1e-12


def test_surrogate_drift_derivative():
    truth = ModelTruth([lambda u: 1j * u], Deterministic(1.0), 1.0)
    assert abs(composite_cf_partials_fd(truth, [0.0], (0,)) - 1j) < 1e-10


def test_order_contract(gamma_truth):
    with pytest.raises(ContractError):
        composite_cf_partials_fd(gamma_truth, [0, 0, 0], (0, 0, 1, 1))
    with pytest.raises(ContractError):
        composite_cf_partials_fd(gamma_truth, [0, 0, 0], ())


def test_fd_accuracy_against_closed_form(triple):
    # deterministic clock: phi = exp(delta * sum psi_k) with analytic derivatives
    delta = 0.5
    truth = ModelTruth(triple, Deterministic(1.0), delta)
    u = np.array([1.0, 0.0, 0.0])
    a, b = triple[0].nig, triple[2].nig
    phi = composite_cf(truth, u)
    d_kk = phi * (delta * nig_psi2(a, 1.0) + (delta * nig_psi1(a, 1.0)) ** 2)
    d_lk = phi * delta**2 * nig_psi1(a, 1.0) * nig_psi1(b, 0.0)
    d_llk = phi * delta * nig_psi1(a, 1.0) * (delta * nig_psi2(b, 0.0) + (delta * nig_psi1(b, 0.0)) ** 2)
    assert abs(composite_cf_partials_fd(truth, u, (0, 0)) - d_kk) < 1e-6
    assert abs(composite_cf_partials_fd(truth, u, (2, 0)) - d_lk) < 1e-6
    assert abs(composite_cf_partials_fd(truth, u, (2, 2, 0)) - d_llk) < 1e-6


def test_moments_at_zero(gamma_truth, triple):
    # Gamma(1, 1) clock over delta = 1: E T = 1, E T^2 = 2
    zero = np.zeros(3)
    m = triple[0].nig.mean()
    v = triple[0].nig.variance()
    assert abs(composite_cf_partials_fd(gamma_truth, zero, (0,)) - 1j * m) < 1e-6
    second = -(v * 1.0 + 2.0 * m**2)
    assert abs(composite_cf_partials_fd(gamma_truth, zero, (0, 0)) - second) < 1e-6


def test_first_derivative_ratio_identity(gamma_truth, triple):
    u = np.array([1.0, 0.0, 0.0])
    ratio = composite_cf_partials_fd(gamma_truth, u, (0,)) / composite_cf_partials_fd(gamma_truth, u, (2,))
    expected = nig_psi1(triple[0].nig, 1.0) / nig_psi1(triple[2].nig, 0.0)
    assert abs(ratio - expected) < 1e-5


@pytest.mark.parametrize("u", [0.5, 1.0, 2.0])
def test_psi2_identity_gamma_and_cir(gamma_truth, cir_truth, triple, u):
    for truth in (gamma_truth, cir_truth):
        assert abs(psi2_from_fd(truth, 0, 2, u) - nig_psi2(triple[0].nig, u)) < 1e-5


def test_fourier_pair_residual_small_band(nig1):
    res = fourier_pair_residual(nig1, Grid1D.symmetric(5.0, 0.5), Grid1D.uniform(-60.0, 60.0, 0.005))
    assert res < 1e-4


def test_fourier_pair_needs_wide_band(nig1):
    with pytest.raises(ContractError, match="tail mass"):
        fourier_pair_residual(nig1, Grid1D.symmetric(1.0, 0.5), Grid1D.uniform(-5.0, 5.0, 0.01))


def test_fourier_pair_delta_scaling():
    ub, xb = Grid1D.symmetric(10.0, 1.0), Grid1D.uniform(-60.0, 60.0, 0.01)
    r1 = fourier_pair_residual(NigParams(1.0, -0.05, 1.0, -0.5), ub, xb)
    r2 = fourier_pair_residual(NigParams(1.0, -0.05, 2.0, -0.5), ub, xb)
    assert r2 <= 2 * r1 + 1e-12


@pytest.mark.parametrize("cut", [5.0, 20.0, 40.0])
def test_tail_bound_dominates_quadrature(nig1, cut):
    f = lambda x: nig_bar_nu(nig1, x)
    tail = integrate.quad(f, cut, np.inf)[0] + integrate.quad(f, -np.inf, -cut)[0]
    assert tail <= nig_tail_mass_bound(nig1, cut)


def test_rate_function_at_zero(gamma_truth, triple):
    expected = (1 + abs(nig_psi1(triple[0].nig, 0.0))) ** 2 / 1.0
    assert abs(rate_function(gamma_truth, 0, 0.0) - expected) < 1e-12


def test_rate_function_growth(gamma_truth, cir_truth):
    u = np.geomspace(10, 1e3, 12)
    g = np.array([np.log(rate_function(gamma_truth, 0, x)) for x in u])
    assert np.all(g / np.log(u) < 5)
    c = np.array([np.log(rate_function(cir_truth, 0, x)) for x in u])
    ratio = c / np.sqrt(u)
    assert np.all(ratio > 0.5) and np.all(ratio < 10)
