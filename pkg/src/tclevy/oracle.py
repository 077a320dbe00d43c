"""Closed-form and brute-force references.

Nothing here touches the estimator's code paths: quadrature is Simpson's
rule from scipy, derivatives are finite differences of the composite c.f.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy import integrate, special

from .levy import LevyComponentSpec, NigParams, nig_bar_nu, nig_char_exponent, nig_psi1, nig_psi2
from .numerics import ContractError, Grid1D
from .timechange import TimeChangeSpec, laplace, laplace_derivative

Component = Union[LevyComponentSpec, Callable]


@dataclass(frozen=True)
class ModelTruth:
    """Lévy components (or bare exponent callables), a clock and the sampling step."""

    components: Sequence[Component]
    timechange: TimeChangeSpec
    delta: float


def component_exponent(c: Component, u):
    if isinstance(c, LevyComponentSpec):
        return nig_char_exponent(c.nig, u) - 0.5 * c.sigma**2 * np.asarray(u, dtype=float) ** 2
    return c(u)


def composite_cf(truth: ModelTruth, u) -> complex:
    """E exp(i u . Z) = L_delta(-sum_k psi_k(u_k))."""
    u = np.asarray(u, dtype=float)
    total = sum(component_exponent(c, uk) for c, uk in zip(truth.components, u))
    return complex(laplace(truth.timechange, truth.delta, -total))


def composite_cf_partials_fd(truth: ModelTruth, u, which: Sequence[int], step: float = 1e-3) -> complex:
    """Mixed partial d^|which| phi_Z / du_{which[0]} du_{which[1]} ... at u.

    Tensor product of central differences, one per index, combined over
    steps h and 2h by one Richardson step (error O(h^4)).
    """
    which = tuple(int(i) for i in which)
    if not 1 <= len(which) <= 3:
        raise ContractError("derivative order must be 1, 2 or 3")
    u0 = np.asarray(u, dtype=float)

    def stencil(h):
        total = 0.0 + 0.0j
        for signs in np.ndindex(*(2,) * len(which)):
            point = u0.copy()
            sgn = 1.0
            for idx, s in zip(which, signs):
                point[idx] += h if s == 0 else -h
                sgn *= 1.0 if s == 0 else -1.0
            total += sgn * composite_cf(truth, point)
        return total / (2 * h) ** len(which)

    return (4 * stencil(step) - stencil(2 * step)) / 3


def nig_tail_mass_bound(p: NigParams, cut: float) -> float:
    """Upper bound on the integral of x^2 nu(x) over |x| > cut.

    Uses K1(z) <= sqrt(pi / 2z) e^{-z} (1 + 1/z) (valid for z >= 1/2) and
    exp(kappa x) <= exp(|kappa| |x|) on both tails.
    """
    z = p.alpha * cut
    if z < 0.5:
        return np.inf
    c = p.alpha - abs(p.kappa_sym)
    pref = p.alpha * p.delta / np.pi * np.sqrt(np.pi / (2 * p.alpha)) * (1 + 1 / z)
    # int_cut^inf sqrt(x) e^{-c x} dx = Gamma(3/2, c cut) / c^{3/2}
    tail = special.gammaincc(1.5, c * cut) * special.gamma(1.5) / c**1.5
    return float(2 * pref * tail)


def fourier_transform_bar_nu(p: NigParams, u, xband: Grid1D) -> np.ndarray:
    """Simpson quadrature of int e^{iux} x^2 nu(x) dx over xband."""
    x = xband.points
    f = nig_bar_nu(p, x)
    arg = np.outer(np.atleast_1d(u), x)
    re = integrate.simpson(np.cos(arg) * f, x=x, axis=1)
    im = integrate.simpson(np.sin(arg) * f, x=x, axis=1)
    return re + 1j * im


def fourier_pair_residual(p: NigParams, uband: Grid1D, xband: Grid1D, tail_tol: float = 1e-8) -> float:
    """max_u |F[x^2 nu](u) + psi''(u)|, quadrature against the analytic derivative."""
    cut = min(-xband.points[0], xband.points[-1])
    bound = nig_tail_mass_bound(p, cut)
    if not bound < tail_tol:
        raise ContractError(f"x-band [-{cut:g}, {cut:g}] leaves tail mass up to {bound:.3g} > {tail_tol:g}")
    u = uband.points
    return float(np.max(np.abs(fourier_transform_bar_nu(p, u, xband) + nig_psi2(p, u))))


def rate_function(truth: ModelTruth, k: int, u: float) -> float:
    """(1 + |psi_k'(u)|)^2 / |L_delta'(-psi_k(u))|."""
    c = truth.components[k]
    psi1 = nig_psi1(c.nig, u) - c.sigma**2 * u
    z = -component_exponent(c, u)
    num = (1 + abs(psi1)) ** 2
    return float(num / abs(laplace_derivative(truth.timechange, truth.delta, z, order=1)))


def psi2_from_fd(truth: ModelTruth, k: int, l: int, u: float) -> complex:
    """psi_k''(u) through the pilot-mean identity, with every c.f. derivative by finite differences.

    psi'' = psi_l'(0) (phi_kk phi_l - phi_k phi_lk) / phi_l^2 at u^(k),
    psi_l'(0) = phi_l(0) / delta.
    """
    d = len(truth.components)
    uk = np.zeros(d)
    uk[k] = u
    f = lambda *w: composite_cf_partials_fd(truth, uk, w)
    phi_l0 = composite_cf_partials_fd(truth, np.zeros(d), (l,))
    return phi_l0 / truth.delta * (f(k, k) * f(l) - f(k) * f(l, k)) / f(l) ** 2


__all__ = [
    "ModelTruth",
    "composite_cf",
    "composite_cf_partials_fd",
    "fourier_pair_residual",
    "fourier_transform_bar_nu",
    "nig_tail_mass_bound",
    "psi2_from_fd",
    "rate_function",
]
