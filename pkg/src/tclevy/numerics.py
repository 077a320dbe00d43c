"""Shared numerical building blocks: grids, RNG streams, K1, branch-safe
square roots, trapezoid quadrature and the elementary samplers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ContractError(ValueError):
    """Inputs violate a structural precondition (shapes, grid coverage, ...)."""


# ---------------------------------------------------------------------------
# Grids


@dataclass(frozen=True)
class Grid1D:
    """Strictly increasing 1-d grid; ``spacing`` is set iff the grid is uniform."""

    points: np.ndarray
    spacing: float | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ContractError("a grid needs at least 2 points")
        diffs = np.diff(pts)
        if np.any(diffs <= 0):
            raise ContractError("grid points must be strictly increasing")
        if self.spacing is not None:
            scale = max(float(np.max(np.abs(pts))), abs(self.spacing))
            if np.max(np.abs(diffs - self.spacing)) >= 1e-12 * scale:
                raise ContractError("grid declared uniform but spacing deviates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, start: float, stop: float, spacing: float) -> Grid1D:
        """Uniform grid from ``start`` to ``stop`` (both included, up to rounding)."""
        m = int(round((stop - start) / spacing))
        pts = start + spacing * np.arange(m + 1)
        return cls(pts, spacing)

    @classmethod
    def symmetric(cls, half_width: float, spacing: float) -> Grid1D:
        """Uniform grid ``k * spacing`` for ``|k| <= ceil(half_width / spacing)``.

        Built from integer multiples so that ``points[::-1] == -points`` exactly.
        """
        m = int(np.ceil(half_width / spacing - 1e-9))
        return cls(spacing * np.arange(-m, m + 1), spacing)

    def __len__(self) -> int:
        return self.points.size

    @property
    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.points[::-1], -self.points))

    def same_as(self, other: Grid1D) -> bool:
        return len(self) == len(other) and bool(np.array_equal(self.points, other.points))


# ---------------------------------------------------------------------------
# Random streams


@dataclass
class RngStream:
    """Reproducible random stream keyed by ``(master_seed, stream_id)``.

    Backed by the counter-based Philox generator. The key is derived through
    :class:`numpy.random.SeedSequence` with ``stream_id`` in the spawn key, so
    distinct pairs give independent streams by construction. ``substream(i)``
    derives a further child keyed by ``(stream_id, i)``.
    """

    master_seed: int
    stream_id: int = 0
    _path: tuple = field(default=(), repr=False)
    _gen: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0 <= self.master_seed < 2**64 and 0 <= self.stream_id < 2**64):
            raise DomainError("master_seed and stream_id must be 64-bit unsigned integers")

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id, *self._path))
            self._gen = np.random.Generator(np.random.Philox(ss))
        return self._gen

    def substream(self, index: int) -> RngStream:
        return RngStream(self.master_seed, self.stream_id, (*self._path, int(index)))

    def descriptor(self) -> dict:
        return {"master_seed": self.master_seed, "stream_id": self.stream_id, "path": list(self._path)}


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream or a bare numpy Generator."""
    if isinstance(rng, RngStream):
        return rng.generator
    return rng


# ---------------------------------------------------------------------------
# Special functions and quadrature


def bessel_k1(x):
    """Modified Bessel function of the second kind (third kind, in older
    terminology) of order one.

    Values beyond the double-precision underflow threshold (x > ~705) are 0.
    """
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("bessel_k1 requires x > 0")
    out = special.k1(x)
    return out if out.ndim else float(out)


def sqrt_right_halfplane(z):
    """Square root with ``Re(w) >= 0``; on the cut (``Re(w) == 0``) ``Im(w) >= 0``."""
    z = np.asarray(z, dtype=complex)
    w = np.sqrt(z)
    # numpy's principal branch already has Re >= 0; fix the sign of -0 imaginary
    # parts on the negative real axis so that sqrt(-1) == +1j.
    on_cut = (w.real == 0) & (w.imag < 0)
    w = np.where(on_cut, -w, w)
    return w if w.ndim else complex(w)


def trapezoid(values, grid: Grid1D | np.ndarray, axis: int = -1):
    """Composite trapezoid rule of ``values`` sampled on ``grid``."""
    pts = grid.points if isinstance(grid, Grid1D) else np.asarray(grid, dtype=float)
    values = np.asarray(values)
    if values.shape[axis] != pts.size:
        raise ContractError(
            f"values have length {values.shape[axis]} along axis {axis}, grid has {pts.size}"
        )
    return np.trapezoid(values, pts, axis=axis)


# ---------------------------------------------------------------------------
# Samplers


def sample_gamma(shape, rate, rng, size=None):
    """Gamma(shape, rate) draws, density proportional to x**(shape-1) exp(-rate x).

    Draws are floored at the smallest normal double: for tiny shapes the exact
    variate can underflow to 0, which would break strict positivity.
    """
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(~(shape > 0)) or np.any(~(rate > 0)):
        raise DomainError("gamma shape and rate must be positive")
    x = as_generator(rng).gamma(shape, 1.0 / rate, size=size)
    return np.maximum(x, np.finfo(float).tiny)


def sample_inverse_gaussian(mean, shape, rng, size=None):
    """Inverse Gaussian IG(mean, shape) draws (Michael-Schucany-Haas).

    Uses a cancellation-free form of the smaller root, so that tiny shapes
    stay accurate.
    """
    mean = np.asarray(mean, dtype=float)
    shape = np.asarray(shape, dtype=float)
    if np.any(~(mean > 0)) or np.any(~(shape > 0)):
        raise DomainError("inverse Gaussian mean and shape must be positive")
    return _inverse_gaussian(mean, shape / mean, mean / (shape / mean), rng, size)


def _inverse_gaussian(mean, ratio, mean_over_ratio, rng, size=None):
    """IG(mean, mean * ratio) given ratio = shape/mean and mean/ratio = mean^2/shape.

    Passing both lets callers avoid forming mean * ratio when it would
    underflow. The smaller root of the MSH quadratic is mean * 2s/(2s + y + sqrt(y(4s + y))).
    """
    if size is None:
        size = np.broadcast(mean, ratio).shape
    g = as_generator(rng)
    y = g.standard_normal(size) ** 2
    spread = y + np.sqrt(y) * np.sqrt(4.0 * ratio + y)
    small = mean * (2.0 * ratio) / (2.0 * ratio + spread)
    large = mean + mean_over_ratio * spread / 2.0
    accept = g.random(size) * (mean + small) <= mean
    return np.where(accept, small, large)


def sample_cir_transition(x0, kappa, eta, zeta, dt, rng, size=None):
    """Exact draw of X_{t+dt} given X_t = x0 for dX = kappa(eta - X)dt + zeta sqrt(X) dW.

    X_{t+dt} = chi2'(df, nc) / c with c = 4 kappa / (zeta^2 (1 - e^{-kappa dt})),
    df = 4 kappa eta / zeta^2 and nc = c e^{-kappa dt} x0. numpy's noncentral
    chi-squared handles fractional df through its Poisson mixture.
    """
    if not (kappa > 0 and eta > 0 and zeta > 0 and dt > 0):
        raise DomainError("CIR parameters and dt must be positive")
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 < 0):
        raise DomainError("CIR state must be nonnegative")
    decay = np.exp(-kappa * dt)
    c = 4.0 * kappa / (zeta**2 * -np.expm1(-kappa * dt))
    df = 4.0 * kappa * eta / zeta**2
    out = as_generator(rng).noncentral_chisquare(df, c * decay * x0, size=size) / c
    return out if np.ndim(out) else float(out)
