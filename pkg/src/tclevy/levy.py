"""Normal inverse Gaussian Lévy components.

Parameters are per unit time: the increment over a time span ``t`` is
NIG(alpha, kappa_sym, t*delta, t*mu), with characteristic exponent

    psi(u) = delta * (sqrt(alpha^2 - kappa_sym^2) - sqrt(alpha^2 - (kappa_sym + iu)^2)) + i*mu*u.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import (
    DomainError,
    as_generator,
    bessel_k1,
    _inverse_gaussian,
    sqrt_right_halfplane,
)


@dataclass(frozen=True)
class NigParams:
    alpha: float
    kappa_sym: float
    delta: float
    mu: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.delta > 0):
            raise DomainError("NIG requires alpha > 0 and delta > 0")
        if not abs(self.kappa_sym) < self.alpha:
            raise DomainError("NIG requires |kappa_sym| < alpha")

    @property
    def gamma(self) -> float:
        """sqrt(alpha^2 - kappa_sym^2)."""
        return float(np.sqrt(self.alpha**2 - self.kappa_sym**2))

    def mean(self) -> float:
        """E[L_1] = mu + delta * kappa_sym / gamma."""
        return self.mu + self.delta * self.kappa_sym / self.gamma

    def variance(self) -> float:
        """Var[L_1] = delta * alpha^2 / gamma^3, also the integral of x^2 nu(x)."""
        return self.delta * self.alpha**2 / self.gamma**3

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "kappa_sym": self.kappa_sym, "delta": self.delta, "mu": self.mu}


@dataclass(frozen=True)
class LevyComponentSpec:
    nig: NigParams
    sigma: float = 0.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise DomainError("sigma must be nonnegative")

    def as_dict(self) -> dict:
        return {**self.nig.as_dict(), "sigma": self.sigma}


def _root(p: NigParams, u):
    return sqrt_right_halfplane(p.alpha**2 - (p.kappa_sym + 1j * np.asarray(u, dtype=float)) ** 2)


def nig_char_exponent(p: NigParams, u):
    """Per-unit-time characteristic exponent psi(u); E exp(iuL_t) = exp(t psi(u))."""
    u = np.asarray(u, dtype=float)
    return p.delta * (p.gamma - _root(p, u)) + 1j * p.mu * u


def nig_psi1(p: NigParams, u):
    """psi'(u) = i*mu + i*delta*(kappa_sym + iu) / sqrt(alpha^2 - (kappa_sym + iu)^2)."""
    u = np.asarray(u, dtype=float)
    return 1j * p.mu + 1j * p.delta * (p.kappa_sym + 1j * u) / _root(p, u)


def nig_psi2(p: NigParams, u):
    """psi''(u) = -delta * alpha^2 / (alpha^2 - (kappa_sym + iu)^2)^{3/2}."""
    r = _root(p, u)
    return -p.delta * p.alpha**2 / r**3


def nig_levy_density(p: NigParams, x):
    """nu(x) = (alpha delta / pi) exp(kappa_sym x) K1(alpha |x|) / |x| for x != 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x == 0):
        raise DomainError("the Lévy density is not defined at x = 0")
    ax = np.abs(x)
    out = p.alpha * p.delta / np.pi * np.exp(p.kappa_sym * x) * bessel_k1(p.alpha * ax) / ax
    return out if out.ndim else float(out)


def nig_bar_nu(p: NigParams, x):
    """x^2 nu(x), continuously extended by delta/pi at the origin.

    Computed as (alpha delta / pi) |x| exp(kappa_sym x) K1(alpha |x|), which
    avoids the 0 * inf of the naive product near 0.
    """
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    safe = np.where(ax > 0, ax, 1.0)
    val = p.alpha * p.delta / np.pi * ax * np.exp(p.kappa_sym * x) * bessel_k1(p.alpha * safe)
    out = np.where(ax > 0, val, p.delta / np.pi)
    return out if out.ndim else float(out)


def sample_nig_increment(p: NigParams, t, rng, size=None):
    """Exact draws of L_t as the normal variance-mean mixture t*mu + kappa_sym*V + sqrt(V)*N.

    V ~ IG(t*delta/gamma, (t*delta)^2); ``t`` may be an array of time spans
    (one draw per entry), which is how time-changed increments are produced.
    """
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("time span t must be positive")
    if size is None:
        size = t.shape
    g = as_generator(rng)
    td = t * p.delta
    # shape/mean = td*gamma and mean^2/shape = 1/gamma^2: td^2 itself is never formed
    v = _inverse_gaussian(td / p.gamma, td * p.gamma, np.full_like(td, 1.0 / p.gamma**2), g, size)
    out = t * p.mu + p.kappa_sym * v + np.sqrt(v) * g.standard_normal(size)
    return out if np.ndim(out) else float(out)
