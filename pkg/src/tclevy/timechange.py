"""Random clocks T(t): Gamma subordinator, integrated CIR rate, deterministic.

Each variant provides the Laplace transform L_t(z) = E exp(-z T(t)) and a
sampler for the block increments T(k delta) - T((k-1) delta).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np

from .numerics import (
    ContractError,
    DomainError,
    as_generator,
    sample_cir_transition,
    sample_gamma,
    sqrt_right_halfplane,
)


class ClockScaleWarning(UserWarning):
    """The clock is not normalised to E[T(t)] = t."""


def _warn_clock_scale(what: str, mean_rate: float) -> None:
    warnings.warn(f"{what}: E[T(t)] = {mean_rate:g} * t, not t; ratio estimates will be scaled",
                  ClockScaleWarning, stacklevel=3)


@dataclass(frozen=True)
class GammaChange:
    """Gamma subordinator with Lévy density theta x^{-1} exp(-lambda x)."""

    theta: float
    lam: float
    kind = "gamma"

    def __post_init__(self):
        if not (self.theta > 0 and self.lam > 0):
            raise DomainError("Gamma time change needs theta > 0 and lambda > 0")
        if self.theta != self.lam:
            _warn_clock_scale("GammaChange", self.mean_rate)

    @property
    def mean_rate(self) -> float:
        return self.theta / self.lam

    def as_dict(self) -> dict:
        return {"kind": self.kind, "theta": self.theta, "lambda": self.lam}


@dataclass(frozen=True)
class CirChange:
    """T(t) = integral of a stationary CIR rate dZ = k(eta - Z)dt + zeta sqrt(Z) dW."""

    kappa_speed: float
    eta: float
    zeta: float
    substeps: int = 10
    kind = "cir"

    def __post_init__(self):
        if not (self.kappa_speed > 0 and self.eta > 0 and self.zeta > 0):
            raise DomainError("CIR time change needs positive kappa, eta, zeta")
        if not 2 * self.kappa_speed * self.eta > self.zeta**2:
            raise DomainError("stationary start requires 2 kappa eta > zeta^2")
        if int(self.substeps) != self.substeps or self.substeps < 2:
            raise DomainError("substeps must be an integer >= 2")
        if self.eta != 1:
            _warn_clock_scale("CirChange", self.eta)

    @property
    def mean_rate(self) -> float:
        return self.eta

    @property
    def stationary_shape(self) -> float:
        return 2 * self.kappa_speed * self.eta / self.zeta**2

    @property
    def stationary_rate(self) -> float:
        return 2 * self.kappa_speed / self.zeta**2

    def as_dict(self) -> dict:
        return {"kind": self.kind, "kappa": self.kappa_speed, "eta": self.eta,
                "zeta": self.zeta, "substeps": self.substeps}


@dataclass(frozen=True)
class Deterministic:
    """T(t) = rate * t; rate 1 is the plain Lévy case."""

    rate: float = 1.0
    kind = "deterministic"

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError("deterministic clock rate must be positive")
        if self.rate != 1:
            _warn_clock_scale("Deterministic", self.rate)

    @property
    def mean_rate(self) -> float:
        return self.rate

    def as_dict(self) -> dict:
        return {"kind": self.kind, "rate": self.rate}


TimeChangeSpec = Union[GammaChange, CirChange, Deterministic]


# ---------------------------------------------------------------------------
# Laplace transforms


def cir_log_laplace_given_start(c: CirChange, t: float, z, x0):
    """log E[exp(-z T(t)) | Z_0 = x0] for the integrated CIR clock.

    The classical closed form A(t, z) exp(-B(t, z) x0) with
    gamma(z) = sqrt(kappa^2 + 2 zeta^2 z), written in logarithms so that large
    |gamma t| neither overflows cosh/sinh nor loses the branch.
    """
    k, eta, zeta = c.kappa_speed, c.eta, c.zeta
    z = np.asarray(z, dtype=complex)
    g = sqrt_right_halfplane(k**2 + 2 * zeta**2 * z)
    a = g * t / 2
    e = np.exp(-2 * a)
    # cosh(a) + (k/g) sinh(a) = e^a / 2 * (1 + k/g) * (1 + e^{-2a} (g - k)/(g + k))
    log_d = a - np.log(2.0) + np.log1p(k / g) + np.log1p(e * (g - k) / (g + k))
    coth = (1 + e) / (1 - e)
    b = 2 * z / (k + g * coth)
    log_a = k**2 * eta * t / zeta**2 - (2 * k * eta / zeta**2) * log_d
    return log_a - b * x0, b


def _log_laplace(spec: TimeChangeSpec, t: float, z):
    z = np.asarray(z, dtype=complex)
    if isinstance(spec, GammaChange):
        return -spec.theta * t * np.log1p(z / spec.lam)
    if isinstance(spec, Deterministic):
        return -z * spec.rate * t
    if isinstance(spec, CirChange):
        # average exp(-B x0) over the stationary Gamma(shape, rate) start
        log_a, b = cir_log_laplace_given_start(spec, t, z, 0.0)
        return log_a - spec.stationary_shape * np.log1p(b / spec.stationary_rate)
    raise ContractError(f"unknown time change {spec!r}")


def laplace(spec: TimeChangeSpec, t: float, z):
    """L_t(z) = E exp(-z T(t)) for Re z >= 0 (stationary start for CIR)."""
    z = np.asarray(z, dtype=complex)
    if not t > 0:
        raise DomainError("t must be positive")
    if np.any(z.real < 0):
        raise DomainError("Laplace transform evaluated only for Re z >= 0")
    out = np.exp(_log_laplace(spec, t, z))
    return out if out.ndim else complex(out)


def _richardson(f, z, order: int, h: float):
    def central(step):
        if order == 1:
            return (f(z + step) - f(z - step)) / (2 * step)
        return (f(z + step) - 2 * f(z) + f(z - step)) / step**2

    return (4 * central(h / 2) - central(h)) / 3


def laplace_derivative(spec: TimeChangeSpec, t: float, z, order: int = 1):
    """d^order/dz^order L_t(z), order 1 or 2.

    Closed forms for Gamma and deterministic clocks; the CIR transform is
    differentiated numerically along the real direction (it is analytic in z)
    with one Richardson step on central differences.
    """
    if order not in (1, 2):
        raise ContractError("laplace_derivative supports order 1 or 2")
    z = np.asarray(z, dtype=complex)
    if np.any(z.real < 0):
        raise DomainError("Laplace transform evaluated only for Re z >= 0")
    if isinstance(spec, GammaChange):
        s, lam = spec.theta * t, spec.lam
        base = 1 + z / lam
        if order == 1:
            out = -(s / lam) * base ** (-s - 1)
        else:
            out = s * (s + 1) / lam**2 * base ** (-s - 2)
    elif isinstance(spec, Deterministic):
        at = spec.rate * t
        out = (-at) ** order * np.exp(-z * at)
    else:
        # the log form is analytic for small negative Re z too, so the stencil may cross 0
        step = 1e-4 if order == 1 else 1e-3
        out = _richardson(lambda w: np.exp(_log_laplace(spec, t, w)), z, order, step)
    return out if np.ndim(out) else complex(out)


# ---------------------------------------------------------------------------
# Sampling


def cir_rate_path(c: CirChange, delta: float, n: int, rng, substeps: int | None = None,
                  paths: int | None = None) -> np.ndarray:
    """Stationary CIR rate on the grid j * delta / substeps, j = 0..n*substeps.

    Returns shape (n*substeps + 1,) or (paths, n*substeps + 1) when ``paths``
    independent paths are requested. Transitions are exact.
    """
    m = c.substeps if substeps is None else int(substeps)
    g = as_generator(rng)
    x = sample_gamma(c.stationary_shape, c.stationary_rate, g, size=paths)
    out = np.empty((n * m + 1,) if paths is None else (n * m + 1, paths))
    out[0] = x
    dt = delta / m
    for j in range(1, n * m + 1):
        x = sample_cir_transition(x, c.kappa_speed, c.eta, c.zeta, dt, g)
        out[j] = x
    return out if paths is None else out.T


def integrate_blocks(rates: np.ndarray, delta: float, substeps: int) -> np.ndarray:
    """Trapezoid integral of a rate path over consecutive blocks of length delta."""
    rates = np.asarray(rates, dtype=float)
    dt = delta / substeps
    n = (rates.shape[-1] - 1) // substeps
    inner = rates[..., :-1].reshape(*rates.shape[:-1], n, substeps)
    ends = rates[..., substeps::substeps]
    return dt * (inner.sum(axis=-1) - 0.5 * inner[..., 0] + 0.5 * ends)


def sample_increments(spec: TimeChangeSpec, delta: float, n: int, rng) -> np.ndarray:
    """Block increments T_k = T(k delta) - T((k-1) delta), k = 1..n."""
    if not (delta > 0 and n >= 1):
        raise DomainError("need delta > 0 and n >= 1")
    if isinstance(spec, GammaChange):
        return sample_gamma(spec.theta * delta, spec.lam, rng, size=n)
    if isinstance(spec, Deterministic):
        return np.full(n, spec.rate * delta)
    if isinstance(spec, CirChange):
        rates = cir_rate_path(spec, delta, n, rng)
        return np.maximum(integrate_blocks(rates, delta, spec.substeps), np.finfo(float).tiny)
    raise ContractError(f"unknown time change {spec!r}")


def timechange_from_dict(d: dict) -> TimeChangeSpec:
    d = dict(d)
    kind = d.pop("kind")
    if kind == "gamma":
        return GammaChange(theta=d["theta"], lam=d["lambda"])
    if kind == "cir":
        return CirChange(kappa_speed=d["kappa"], eta=d["eta"], zeta=d["zeta"],
                         substeps=d.get("substeps", 10))
    if kind == "deterministic":
        return Deterministic(rate=d.get("rate", 1.0))
    raise ContractError(f"unknown time change kind {kind!r}")
