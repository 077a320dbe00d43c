"""Estimation of x^2 nu_k(x) from an increment panel.

Pipeline: empirical moments of the characteristic function along axis k,
a ratio estimate of psi_k'' that cancels the unknown clock, a kernel-damped
Fourier inversion, and quasi-optimal choice of the bandwidth.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .numerics import ContractError, Grid1D, trapezoid
from .simulate import IncrementPanel

BRANCH_MEAN = "mean"
BRANCH_SECOND_MOMENT = "second_moment"

DEFAULT_KAPPA_THRESHOLD = 1.0
PLATEAU = 0.05


class SingularityError(ArithmeticError):
    """A denominator of the ratio estimate vanished exactly."""


# ---------------------------------------------------------------------------
# Empirical characteristic-function moments


@dataclass(frozen=True)
class EcfPartials:
    """Moment-weighted empirical c.f. values along u^(k) = (0, .., u, .., 0).

    Each ``phi_<ab..>`` is (1/n) sum_j Z^a Z^b .. exp(i u Z^k). These are the
    plain moment sums, without the powers of i carried by true derivatives.
    """

    ugrid: Grid1D
    k: int
    l: int
    phi: np.ndarray
    phi_k: np.ndarray
    phi_l: np.ndarray
    phi_kk: np.ndarray
    phi_lk: np.ndarray
    phi_ll: np.ndarray
    phi_llk: np.ndarray
    phi_l_at_zero: float
    phi_ll_at_zero: float
    n: int

    SEQUENCES = ("phi", "phi_k", "phi_l", "phi_kk", "phi_lk", "phi_ll", "phi_llk")


def _moment_cf(x: np.ndarray, weights: np.ndarray, u: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """(1/n) sum_j weights[j, :] exp(i u x_j) for every u; returns (len(u), n_weights)."""
    n = x.size
    re = np.zeros((u.size, weights.shape[1]))
    im = np.zeros_like(re)
    for s in range(0, n, chunk):
        arg = np.outer(u, x[s:s + chunk])
        w = weights[s:s + chunk]
        re += np.cos(arg) @ w
        im += np.sin(arg) @ w
    return (re + 1j * im) / n


def ecf_partials(panel: IncrementPanel, k: int, l: int, ugrid: Grid1D) -> EcfPartials:
    if k == l:
        raise ContractError("k and l must be different coordinates")
    if not (0 <= k < panel.d and 0 <= l < panel.d):
        raise ContractError(f"coordinates must lie in [0, {panel.d})")
    zk, zl = panel.z[:, k], panel.z[:, l]
    weights = np.column_stack([np.ones_like(zk), zk, zl, zk * zk, zk * zl, zl * zl, zl * zl * zk])
    u = ugrid.points
    if ugrid.is_symmetric:
        # evaluate on u >= 0 and mirror by conjugation: exact Hermitian symmetry
        m = u.size // 2
        half = _moment_cf(zk, weights, u[m:])
        vals = np.concatenate([np.conj(half[:0:-1]), half])
    else:
        vals = _moment_cf(zk, weights, u)
    cols = dict(zip(EcfPartials.SEQUENCES, vals.T))
    return EcfPartials(ugrid=ugrid, k=k, l=l, **cols, phi_l_at_zero=float(np.mean(zl)),
                       phi_ll_at_zero=float(np.mean(zl * zl)), n=panel.n)


def default_pilot(panel: IncrementPanel, k: int) -> int:
    """The coordinate other than k with the largest |sample mean|."""
    means = np.abs(panel.z.mean(axis=0))
    means[k] = -np.inf
    return int(np.argmax(means))


# ---------------------------------------------------------------------------
# Ratio estimate of psi''


@dataclass(frozen=True)
class Psi2Curve:
    ugrid: Grid1D
    values: np.ndarray
    branch: str
    kappa_threshold: float
    stability: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["u", "re", "im", "branch"])
            for u, v in zip(self.ugrid.points, self.values):
                w.writerow([f"{u:.17g}", f"{v.real:.17g}", f"{v.imag:.17g}", self.branch])


def psi2_hat(partials: EcfPartials, delta: float, n: int | None = None,
             kappa_threshold: float = DEFAULT_KAPPA_THRESHOLD) -> Psi2Curve:
    """Estimate psi_k''(u) on the partials' grid.

    If |mean(Z^l)| > kappa_threshold / sqrt(n) the pilot's mean is used:

        psi'' = -m_l / delta * (phi_kk phi_l - phi_k phi_lk) / phi_l^2,

    otherwise its second moment:

        psi'' = -m_ll / delta * (phi_kk phi_ll - phi_k phi_llk) / phi_ll^2.

    The leading minus sign converts the plain moment sums into the
    true-derivative identity; with it the curve converges to psi_k''.
    """
    n = partials.n if n is None else n
    p = partials
    if abs(p.phi_l_at_zero) > kappa_threshold / np.sqrt(n):
        branch, scale, den, cross = BRANCH_MEAN, p.phi_l_at_zero, p.phi_l, p.phi_lk
    else:
        branch, scale, den, cross = BRANCH_SECOND_MOMENT, p.phi_ll_at_zero, p.phi_ll, p.phi_llk
    zero = den == 0
    if np.any(zero):
        bad = p.ugrid.points[np.argmax(zero)]
        raise SingularityError(f"pilot characteristic-function moment vanishes at u = {bad:g}")
    values = -scale / delta * (p.phi_kk * den - p.phi_k * cross) / den**2
    stability = float(np.max(1.0 / np.abs(den)))
    return Psi2Curve(p.ugrid, values, branch, kappa_threshold, stability)


# ---------------------------------------------------------------------------
# Regularised Fourier inversion


def flat_top_kernel(x):
    """1 on |x| <= 0.05, exp(-exp(-1/(|x| - 0.05)) / (1 - |x|)) inside (0.05, 1), 0 beyond."""
    ax = np.abs(np.asarray(x, dtype=float))
    mid = (ax > PLATEAU) & (ax < 1)
    am = np.where(mid, ax, 0.5)
    taper = np.exp(-np.exp(-1.0 / (am - PLATEAU)) / (1.0 - am))
    out = np.where(ax <= PLATEAU, 1.0, np.where(mid, taper, 0.0))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class DensityEstimate:
    xgrid: Grid1D
    values: np.ndarray
    bandwidth: float
    imag_residual: float = 0.0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "nu_hat"])
            for x, v in zip(self.xgrid.points, self.values):
                w.writerow([f"{x:.17g}", f"{v:.17g}"])


def _hermitian_part(curve_values: np.ndarray, ugrid: Grid1D) -> np.ndarray:
    if ugrid.is_symmetric:
        return 0.5 * (curve_values + np.conj(curve_values[::-1]))
    return curve_values


def _check_coverage(ugrid: Grid1D, h: float) -> None:
    need = 1.0 / h
    lo, hi = ugrid.points[0], ugrid.points[-1]
    if hi < need * (1 - 1e-9) or -lo < need * (1 - 1e-9):
        raise ContractError(
            f"frequency grid [{lo:g}, {hi:g}] must cover [-{need:g}, {need:g}] for h = {h:g}"
        )


def _fourier_matrix(xgrid: Grid1D, ugrid: Grid1D) -> np.ndarray:
    return np.exp(-1j * np.outer(xgrid.points, ugrid.points))


def _trapezoid_weights(ugrid: Grid1D) -> np.ndarray:
    d = np.diff(ugrid.points)
    w = np.zeros(ugrid.points.size)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


def _invert_many(g: np.ndarray, ugrid: Grid1D, bandwidths, xgrid: Grid1D, fmat=None):
    """Columns: -(1/2pi) * trapezoid of e^{-iux} g(u) K(u h) for each h."""
    hs = np.atleast_1d(np.asarray(bandwidths, dtype=float))
    for h in hs:
        _check_coverage(ugrid, h)
    fmat = _fourier_matrix(xgrid, ugrid) if fmat is None else fmat
    weights = flat_top_kernel(np.outer(ugrid.points, hs)) * _trapezoid_weights(ugrid)[:, None]
    vals = -(fmat @ (g[:, None] * weights)) / (2 * np.pi)
    return vals.real, np.max(np.abs(vals.imag), axis=0)


def invert_density(curve: Psi2Curve, sigma: float, h: float, xgrid: Grid1D) -> DensityEstimate:
    """nu_hat(x) = -(1/2pi) int e^{-iux} (psi2(u) + sigma^2) K(u h) du.

    The integrand is replaced by its Hermitian part on symmetric grids; the
    largest discarded imaginary part is kept as ``imag_residual``.
    """
    g = _hermitian_part(curve.values + sigma**2, curve.ugrid)
    real, imag = _invert_many(g, curve.ugrid, [h], xgrid)
    return DensityEstimate(xgrid, real[:, 0], float(h), float(imag[0]))


# ---------------------------------------------------------------------------
# Error norms and functionals


def weight(x):
    """w(x) = log(e + |x|)^(-1/2)."""
    return 1.0 / np.sqrt(np.log(np.e + np.abs(np.asarray(x, dtype=float))))


def _truth_values(est: DensityEstimate, truth) -> np.ndarray:
    if isinstance(truth, DensityEstimate):
        if not truth.xgrid.same_as(est.xgrid):
            raise ContractError("estimates live on different x-grids")
        return truth.values
    if callable(truth):
        return np.asarray(truth(est.xgrid.points), dtype=float)
    vals = np.asarray(truth, dtype=float)
    if vals.shape != est.values.shape:
        raise ContractError(f"truth has shape {vals.shape}, estimate {est.values.shape}")
    return vals


def weighted_sup_error(est: DensityEstimate, truth) -> float:
    """max over the grid of w(|x|) |est(x) - truth(x)|."""
    diff = np.abs(est.values - _truth_values(est, truth))
    return float(np.max(weight(est.xgrid.points) * diff))


def l1_distance(a: DensityEstimate, b: DensityEstimate) -> float:
    if not a.xgrid.same_as(b.xgrid):
        raise ContractError("estimates live on different x-grids")
    return float(trapezoid(np.abs(a.values - b.values), a.xgrid))


def density_functionals(est: DensityEstimate) -> tuple[float, float]:
    """(integral, first moment) of the estimate over its grid."""
    x = est.xgrid.points
    return float(trapezoid(est.values, est.xgrid)), float(trapezoid(x * est.values, est.xgrid))


# ---------------------------------------------------------------------------
# Bandwidth selection


@dataclass(frozen=True)
class BandwidthGrid:
    h_values: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h_values, dtype=float)
        if h.ndim != 1 or h.size < 2:
            raise ContractError("a bandwidth grid needs at least 2 values")
        if np.any(h <= 0) or np.any(np.diff(h) <= 0):
            raise ContractError("bandwidths must be positive and strictly increasing")
        object.__setattr__(self, "h_values", h)

    def __len__(self) -> int:
        return self.h_values.size

    @classmethod
    def from_cutoffs(cls, cutoffs) -> BandwidthGrid:
        """Grid of h = 1/cutoff, sorted increasing (so cutoffs decrease with l)."""
        return cls(np.sort(1.0 / np.asarray(cutoffs, dtype=float)))

    @classmethod
    def default(cls) -> BandwidthGrid:
        """Spectral cutoffs 0.5 + 0.1 l, l = 1..41: forty consecutive differences."""
        return cls.from_cutoffs(0.5 + 0.1 * np.arange(1, 42))


def default_xgrid() -> Grid1D:
    return Grid1D.uniform(-10.0, 10.0, 0.01)


def default_ugrid(grid: BandwidthGrid, xgrid: Grid1D) -> Grid1D:
    """Symmetric grid reaching 1/h_min with spacing min(pi / x_max, 0.01)."""
    x_max = float(np.max(np.abs(xgrid.points)))
    du = min(np.pi / x_max, 0.01)
    return Grid1D.symmetric(1.0 / grid.h_values[0], du)


@dataclass(frozen=True)
class QuasiOptimalResult:
    selected: int  # 1-based index l* into the bandwidth grid
    f: np.ndarray  # f[l-1] = ||nu^(l+1) - nu^(l)||_L1, l = 1..L-1
    estimate: DensityEstimate
    curve: Psi2Curve
    grid: BandwidthGrid
    estimates: tuple

    def f_to_csv(self, path) -> None:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["l", "h", "f"])
            for i, fv in enumerate(self.f):
                w.writerow([i + 1, f"{self.grid.h_values[i]:.17g}", f"{fv:.17g}"])


def select_bandwidth(curve: Psi2Curve, grid: BandwidthGrid, sigma: float,
                     xgrid: Grid1D) -> QuasiOptimalResult:
    """Quasi-optimality on a fixed curve: argmin_l ||nu^(l+1) - nu^(l)||_L1.

    Ties go to the smallest index (``np.argmin`` returns the first minimum).
    """
    g = _hermitian_part(curve.values + sigma**2, curve.ugrid)
    vals, imag = _invert_many(g, curve.ugrid, grid.h_values, xgrid)
    ests = tuple(DensityEstimate(xgrid, vals[:, i], float(h), float(imag[i]))
                 for i, h in enumerate(grid.h_values))
    f = trapezoid(np.abs(np.diff(vals, axis=1)), xgrid, axis=0)
    sel = int(np.argmin(f))
    return QuasiOptimalResult(sel + 1, f, ests[sel], curve, grid, ests)


def quasi_optimal_bandwidth(panel: IncrementPanel, k: int = 0, l: int | None = None,
                            grid: BandwidthGrid | None = None, sigma: float = 0.0,
                            kappa_threshold: float = DEFAULT_KAPPA_THRESHOLD,
                            xgrid: Grid1D | None = None,
                            ugrid: Grid1D | None = None) -> QuasiOptimalResult:
    """Full estimator: one psi'' curve on the widest grid, inverted for every h."""
    grid = BandwidthGrid.default() if grid is None else grid
    xgrid = default_xgrid() if xgrid is None else xgrid
    ugrid = default_ugrid(grid, xgrid) if ugrid is None else ugrid
    l = default_pilot(panel, k) if l is None else l
    partials = ecf_partials(panel, k, l, ugrid)
    curve = psi2_hat(partials, panel.delta, panel.n, kappa_threshold)
    return select_bandwidth(curve, grid, sigma, xgrid)
