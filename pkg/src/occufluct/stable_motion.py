"""Symmetric alpha-stable motion: exact increments, transition density, semigroup.

Normalization: the motion has characteristic function exp(-t |z|^alpha), so
alpha=2 is a Brownian motion with variance 2t and alpha=1 is Cauchy with
scale t.  The unit-time density then satisfies the scaling identity
p_t(x) = t^(-1/alpha) p_1(x t^(-1/alpha)) and p_1(0) = Gamma(1/alpha)/(alpha pi).

Two semigroup routes are provided:

* ``semigroup_apply`` -- discrete FFT convolution of the density with a test
  function sampled on a uniform grid, guarded by a mass-leak check.  Use this
  when the *mass* of L_t(phi) over the grid matters.
* ``semigroup_values`` -- pointwise values of L_t(phi) through the damped
  cosine transform of the Gaussian mixture, accurate uniformly in t.  Use
  this when only values on a compact window matter (the moment oracle does).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import fftconvolve
from scipy.special import gamma as gamma_fn

from .testfuncs import TestFunction

# exp(-u) below 1e-16 is treated as zero when truncating quadratures
EXP_CUT = -math.log(1e-16)

_TABLE_X_SWITCH = 32.0  # beyond this |x| the asymptotic tail series takes over
_TABLE_NODES = 4001
_TAIL_TERMS = 4
_CACHE_VERSION = 1


class MassLeakError(ValueError):
    """Grid too narrow: the stable kernel leaks more mass than allowed."""


def _validate_alpha(alpha: float) -> None:
    if not (0.0 < alpha <= 2.0):
        raise ValueError(f"alpha must be in (0, 2], got {alpha}")


@dataclass(frozen=True)
class StableParams:
    alpha: float

    def __post_init__(self):
        _validate_alpha(self.alpha)


# ----------------------------------------------------------------------
# increment sampling (Chambers-Mallows-Stuck, symmetric case)
# ----------------------------------------------------------------------

def cms_standard(alpha: float, u1: float, u2: float) -> float:
    """Standard symmetric stable variate from two uniforms in [0, 1).

    Scalar transform shared verbatim by the compiled and pure-Python
    evolution kernels; the same expression is exact at alpha=1 (Cauchy,
    the second factor has exponent 0) and alpha=2 (a Box-Muller normal
    with variance 2).
    """
    u = math.pi * (u1 - 0.5)
    w = -math.log1p(-u2)
    ia = 1.0 / alpha
    return (
        math.sin(alpha * u)
        / math.pow(math.cos(u), ia)
        * math.pow(math.cos((1.0 - alpha) * u) / w, (1.0 - alpha) * ia)
    )


def sample_increment(alpha, dt, rng, size=None):
    """Increment of the motion over a span dt: dt^(1/alpha) times a standard variate."""
    _validate_alpha(alpha)
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    u = np.pi * (rng.random(size) - 0.5)
    w = -np.log1p(-rng.random(size))
    ia = 1.0 / alpha
    s = np.sin(alpha * u) / np.cos(u) ** ia * (np.cos((1.0 - alpha) * u) / w) ** ((1.0 - alpha) * ia)
    return dt**ia * s


# ----------------------------------------------------------------------
# unit-time density table
# ----------------------------------------------------------------------

def _gl_panels(breakpoints, n_gl):
    """Gauss-Legendre nodes/weights on a sequence of panels."""
    gx, gw = np.polynomial.legendre.leggauss(n_gl)
    a = np.asarray(breakpoints[:-1])
    b = np.asarray(breakpoints[1:])
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    nodes = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    weights = (half[:, None] * gw[None, :]).ravel()
    return nodes, weights


def _subdivided(breaks, cap):
    out = [breaks[0]]
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b - a > cap:
            k = int(math.ceil((b - a) / cap))
            out.extend(a + (b - a) * (i + 1) / k for i in range(k))
        else:
            out.append(b)
    return np.asarray(out)


def _tail_coeffs(alpha, n_terms=_TAIL_TERMS):
    """Coefficients of the large-x series p_1(x) ~ (1/pi) sum c_k x^(-k alpha - 1)."""
    ks = np.arange(1, n_terms + 1)
    signs = (-1.0) ** (ks + 1)
    return signs * gamma_fn(ks * alpha + 1.0) / gamma_fn(ks + 1.0) * np.sin(ks * math.pi * alpha / 2.0)


class StableDensity:
    """Tabulated p_1 for one alpha, with closed forms at alpha in {1, 2}.

    The table holds p_1 on a uniform grid of [0, x_switch] built by
    panelled Gauss-Legendre quadrature of (1/pi) int cos(zx) exp(-z^alpha) dz
    truncated where exp(-z^alpha) < 1e-16; a cubic spline interpolates
    between nodes and the Bergstroem series covers |x| > x_switch.
    """

    def __init__(self, alpha, x_switch=_TABLE_X_SWITCH, n_nodes=_TABLE_NODES):
        _validate_alpha(alpha)
        self.alpha = float(alpha)
        self.x_switch = float(x_switch)
        self.n_nodes = int(n_nodes)
        self._closed = "gauss" if alpha == 2.0 else ("cauchy" if alpha == 1.0 else None)
        if self._closed is None:
            xs = np.linspace(0.0, self.x_switch, self.n_nodes)
            self._build_from_values(xs, self._cosine_transform(xs))

    # -- construction ---------------------------------------------------
    def _cosine_transform(self, xs):
        alpha = self.alpha
        z_max = EXP_CUT ** (1.0 / alpha)
        cap = math.pi / (2.0 * (xs[-1] + 1.0))
        breaks = _subdivided(np.array([0.0, z_max]), cap)
        z, wz = _gl_panels(breaks, 8)
        damp = wz * np.exp(-(z**alpha))
        vals = np.empty_like(xs)
        block = 512
        for i in range(0, len(xs), block):
            xb = xs[i : i + block]
            vals[i : i + block] = np.cos(np.outer(xb, z)) @ damp
        return vals / math.pi

    def _build_from_values(self, xs, vals):
        self._xs = xs
        self._vals = np.maximum(vals, 0.0)
        # clamped-even at 0 keeps the spline symmetric through the origin
        self._spline = CubicSpline(xs, self._vals, bc_type=((1, 0.0), "not-a-knot"))
        self._cum = self._spline.antiderivative()
        self._tail_c = _tail_coeffs(self.alpha)

    # -- serialization (optimization only; results identical without it) -
    def save(self, path) -> None:
        if self._closed is not None:
            raise ValueError("closed-form alpha needs no table cache")
        np.savez(
            path,
            version=_CACHE_VERSION,
            alpha=self.alpha,
            x_switch=self.x_switch,
            n_nodes=self.n_nodes,
            xs=self._xs,
            vals=self._vals,
        )

    @classmethod
    def load(cls, path) -> "StableDensity":
        with np.load(path) as data:
            if int(data["version"]) != _CACHE_VERSION:
                raise ValueError(f"unsupported density cache version {data['version']}")
            obj = cls.__new__(cls)
            obj.alpha = float(data["alpha"])
            obj.x_switch = float(data["x_switch"])
            obj.n_nodes = int(data["n_nodes"])
            obj._closed = None
            obj._build_from_values(data["xs"], data["vals"])
        return obj

    # -- evaluation -----------------------------------------------------
    def _tail_pdf(self, ax):
        ks = np.arange(1, len(self._tail_c) + 1)
        return (self._tail_c[None, :] * ax[:, None] ** (-ks[None, :] * self.alpha - 1.0)).sum(
            axis=1
        ) / math.pi

    def _tail_int(self, ax):
        """Integral of the tail series from ax to infinity."""
        ks = np.arange(1, len(self._tail_c) + 1)
        return (
            self._tail_c[None, :]
            / (ks[None, :] * self.alpha)
            * ax[:, None] ** (-ks[None, :] * self.alpha)
        ).sum(axis=1) / math.pi

    def pdf1(self, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        if self._closed == "gauss":
            return np.exp(-(ax**2) / 4.0) / (2.0 * math.sqrt(math.pi))
        if self._closed == "cauchy":
            return 1.0 / (math.pi * (1.0 + ax**2))
        out = np.empty_like(ax)
        core = ax <= self.x_switch
        out[core] = np.maximum(self._spline(ax[core]), 0.0)
        if np.any(~core):
            out[~core] = self._tail_pdf(ax[~core])
        return out

    def cdf1(self, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        if self._closed == "gauss":
            upper = 0.5 * (1.0 + np.vectorize(math.erf)(ax / 2.0))
        elif self._closed == "cauchy":
            upper = 0.5 + np.arctan(ax) / math.pi
        else:
            upper = np.empty_like(ax)
            core = ax <= self.x_switch
            upper[core] = 0.5 + self._cum(ax[core])
            if np.any(~core):
                edge = 0.5 + self._cum(self.x_switch)
                tail_edge = self._tail_int(np.array([self.x_switch]))[0]
                upper[~core] = edge + (tail_edge - self._tail_int(ax[~core]))
        return np.where(x >= 0.0, upper, 1.0 - upper)

    def pdf(self, t, x):
        if t <= 0.0:
            raise ValueError(f"t must be > 0, got {t}")
        scale = t ** (-1.0 / self.alpha)
        return scale * self.pdf1(np.asarray(x, dtype=float) * scale)

    def cdf(self, t, x):
        if t <= 0.0:
            raise ValueError(f"t must be > 0, got {t}")
        return self.cdf1(np.asarray(x, dtype=float) * t ** (-1.0 / self.alpha))


_tables: dict[float, StableDensity] = {}


def density_table(alpha: float, cache_path=None) -> StableDensity:
    """Per-alpha table, built once per process (or loaded from a cache file)."""
    _validate_alpha(alpha)
    key = float(alpha)
    if key not in _tables:
        if cache_path is not None:
            import os

            if os.path.exists(cache_path):
                _tables[key] = StableDensity.load(cache_path)
            else:
                table = StableDensity(key)
                table.save(cache_path)
                _tables[key] = table
        else:
            _tables[key] = StableDensity(key)
    return _tables[key]


def density(alpha, t, x):
    """Transition density p_t(x); closed forms at alpha in {1, 2}."""
    return density_table(alpha).pdf(t, x)


def density_at_zero(alpha: float) -> float:
    """p_1(0) = Gamma(1/alpha) / (alpha pi)."""
    _validate_alpha(alpha)
    return float(gamma_fn(1.0 / alpha)) / (alpha * math.pi)


def tail_radius(alpha: float, eps: float) -> float:
    """Smallest r with P(|xi(1)| > r) <= eps (bisection on the tabulated CDF)."""
    table = density_table(alpha)

    def tail(r):
        return 2.0 * (1.0 - float(table.cdf1(np.array([r]))[0]))

    hi = 1.0
    while tail(hi) > eps:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("tail radius out of range")
    lo = hi / 2.0 if hi > 1.0 else 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if tail(mid) > eps:
            lo = mid
        else:
            hi = mid
    return hi


# ----------------------------------------------------------------------
# density on a grid (shared, immutable kernel for convolution consumers)
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class DensityGrid:
    alpha: float
    t: float
    grid: np.ndarray
    values: np.ndarray

    @classmethod
    def build(cls, alpha, t=1.0, halfwidth=None, step=None, mass_tol=1e-4) -> "DensityGrid":
        _validate_alpha(alpha)
        if t <= 0.0:
            raise ValueError(f"t must be > 0, got {t}")
        spread = t ** (1.0 / alpha)
        if halfwidth is None:
            halfwidth = tail_radius(alpha, 0.5 * mass_tol) * spread
        if step is None:
            step = min(spread / 40.0, halfwidth / 1000.0)
        n = int(math.ceil(halfwidth / step))
        grid = np.arange(-n, n + 1) * step
        return cls(alpha, t, grid, density(alpha, t, grid))

    def trapezoid_mass(self) -> float:
        return float(np.trapezoid(self.values, self.grid))


# ----------------------------------------------------------------------
# semigroup: grid convolution route
# ----------------------------------------------------------------------

def required_halfwidth(alpha, t, phi: TestFunction, mass_tol=1e-6) -> float:
    """Grid halfwidth wide enough that L_t(phi) keeps all but mass_tol of its mass."""
    return phi.support_radius(1e-8) + tail_radius(alpha, mass_tol) * t ** (1.0 / alpha)


def semigroup_apply(alpha, t, phi: TestFunction, grid, mass_tol=1e-6):
    """L_t(phi) sampled on a uniform grid via FFT convolution with p_t.

    Rejects grids that either miss test-function mass (> 1e-8 of the total)
    or would let the kernel push more than mass_tol of the mass outside.
    """
    _validate_alpha(alpha)
    if t < 0.0:
        raise ValueError(f"t must be >= 0, got {t}")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 3:
        raise ValueError("grid must be a 1-d array with at least 3 points")
    steps = np.diff(grid)
    h = steps[0]
    tol = max(1e-9 * h, 8.0 * np.finfo(float).eps * float(np.abs(grid).max()))
    if not np.allclose(steps, h, rtol=0.0, atol=tol):
        raise ValueError("grid must be uniform")
    if phi.mass_outside(min(grid[-1], -grid[0])) > 1e-8 * phi.integral:
        raise ValueError("grid misses test-function mass; widen it")
    if t == 0.0:
        return phi(grid)
    margin = min(grid[-1], -grid[0]) - phi.support_radius(1e-8)
    table = density_table(alpha)
    leak = 2.0 * (1.0 - float(table.cdf(t, np.array([margin]))[0])) if margin > 0.0 else 1.0
    if leak > mass_tol:
        raise MassLeakError(
            f"kernel mass leak {leak:.3e} exceeds {mass_tol:.1e} for t={t}; "
            f"need halfwidth >= {required_halfwidth(alpha, t, phi, mass_tol):.1f}"
        )
    n = len(grid)
    offsets = np.arange(-(n - 1), n) * h
    kernel = table.pdf(t, offsets)
    return np.maximum(fftconvolve(phi(grid), kernel, mode="same") * h, 0.0)


# ----------------------------------------------------------------------
# semigroup: pointwise characteristic-function route
# ----------------------------------------------------------------------

def _semigroup_z_grid(alpha, taus, phi: TestFunction, xs, n_gl):
    w_min = min(c.width for c in phi.components)
    zg = math.sqrt(2.0 * EXP_CUT) / w_min
    tau_pos = taus[taus > 0.0]
    z_cut = zg
    if len(tau_pos):
        z_cut = min(zg, (EXP_CUT / tau_pos.min()) ** (1.0 / alpha))
        z_fine = 0.05 * tau_pos.max() ** (-1.0 / alpha)
    else:
        z_fine = z_cut
    xspan = max(
        (max(abs(float(xs.max() - c.center)), abs(float(xs.min() - c.center))) for c in phi.components),
        default=1.0,
    )
    cap = min(0.25 * z_cut, math.pi / (2.0 * (xspan + 1.0)))
    breaks = [0.0]
    z = min(z_fine, z_cut / 8.0)
    while z < z_cut:
        breaks.append(z)
        z *= 2.0
    breaks.append(z_cut)
    return _gl_panels(_subdivided(np.asarray(breaks), cap), n_gl)


def semigroup_values(alpha, ts, phi: TestFunction, xs, n_gl=8):
    """Pointwise L_t(phi)(x) for a batch of times and positions.

    Evaluates sum_c a_c w_c sqrt(2/pi) int_0^inf exp(-t z^alpha - w_c^2 z^2/2)
    cos(z (x - m_c)) dz on a panelled Gauss-Legendre grid; exact for t=0.
    Returns an array of shape (len(ts), len(xs)).
    """
    _validate_alpha(alpha)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if np.any(ts < 0.0):
        raise ValueError("times must be >= 0")
    out = np.empty((len(ts), len(xs)))
    zero = ts == 0.0
    if np.any(zero):
        out[zero] = phi(xs)[None, :]
    if np.all(zero):
        return out
    pos = ~zero
    z, wz = _semigroup_z_grid(alpha, ts[pos], phi, xs, n_gl)
    pmat = np.zeros((len(z), len(xs)))
    for c in phi.components:
        damp = c.amplitude * c.width * math.sqrt(2.0 / math.pi) * np.exp(-0.5 * (c.width * z) ** 2)
        block = 4096
        for i in range(0, len(xs), block):
            pmat[:, i : i + block] += (damp * wz)[:, None] * np.cos(
                np.outer(z, xs[i : i + block] - c.center)
            )
    emat = np.exp(-np.outer(ts[pos], z**alpha))
    out[pos] = emat @ pmat
    return out
