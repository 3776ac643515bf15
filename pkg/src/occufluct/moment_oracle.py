"""Noise-free moments of the particle system via explicit covariance formulas.

For the Poisson-started system the exact second moments are

  Cov(<N(s), phi>, <N(t), phi>) = int phi L_(t-s) phi dx
      + 2 gamma int sigma(x) int_0^s L_(s-u) phi(x) L_(t-u) phi(x) du dx

and the fluctuation covariance follows by integrating that kernel over
scaled-time rectangles with the norming F_T.  Semigroup values are taken
from the pointwise characteristic-function route (`semigroup_values`),
which is uniformly accurate in the time argument, so the spatial grids
only need to cover the supports of phi and sigma.  Every public entry
point re-evaluates itself on a refined quadrature and fails loudly when
the two disagree beyond tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .branching import ModelParams, SigmaProfile
from .occupation import ScalingRegime
from .stable_motion import required_halfwidth, semigroup_apply, semigroup_values
from .testfuncs import TestFunction


class QuadratureError(RuntimeError):
    """Refinement ratio test failed: the quadrature did not converge."""


class SemigroupSelfCheckError(RuntimeError):
    """Numeric mass of L_t phi disagrees with the analytic integral."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Node counts and grids for the oracle quadratures.

    The spatial extent only needs to cover the supports of phi and sigma
    (plus padding); pointwise semigroup evaluation removes the need to
    track the motion's spread.
    """

    step: float = 0.02
    pad: float = 4.0
    extent: float | None = None
    time_nodes: int = 16
    z_nodes: int = 8
    rtol_cov_n: float = 1e-4
    rtol_cov_xt: float = 1e-3
    atol: float = 1e-9

    def __post_init__(self):
        if self.time_nodes < 8:
            raise ValueError(f"time_nodes must be >= 8, got {self.time_nodes}")
        if self.step <= 0.0 or self.pad < 0.0:
            raise ValueError("step must be > 0 and pad >= 0")

    def refined(self) -> "QuadratureSpec":
        return replace(self, step=self.step / 2.0, time_nodes=2 * self.time_nodes,
                       z_nodes=2 * self.z_nodes)


DEFAULT_SPEC = QuadratureSpec()


# ----------------------------------------------------------------------
# grids and panels
# ----------------------------------------------------------------------

def _trap_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _phi_grid(phi: TestFunction, spec: QuadratureSpec):
    r = spec.extent if spec.extent is not None else phi.support_radius(1e-10) + spec.pad
    n = int(math.ceil(r / spec.step))
    x = np.arange(-n, n + 1) * spec.step
    return x, _trap_weights(len(x), spec.step)


def _sigma_grid(sigma: SigmaProfile, spec: QuadratureSpec):
    """Trapezoid nodes carrying sigma(x) weights; endpoints sit on the support."""
    if sigma.kind == "zero":
        return None, None
    if sigma.kind == "interval":
        n = max(8, int(math.ceil((sigma.hi - sigma.lo) / spec.step)))
        x = np.linspace(sigma.lo, sigma.hi, n + 1)
        w = _trap_weights(len(x), x[1] - x[0])
    else:
        r = 6.0 * sigma.width + spec.pad
        n = int(math.ceil(r / spec.step))
        x = sigma.center + np.arange(-n, n + 1) * spec.step
        w = _trap_weights(len(x), spec.step)
    return x, w * sigma.value(x)


def _gl_on_breaks(breaks, n_gl):
    gx, gw = np.polynomial.legendre.leggauss(n_gl)
    a, b = breaks[:-1], breaks[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    return (mid[:, None] + half[:, None] * gx[None, :]).ravel(), (
        half[:, None] * gw[None, :]
    ).ravel()


def _panel_nodes(length, n_gl, fine_lo=None, fine_hi=None):
    """Composite Gauss-Legendre nodes on [0, length] with optional geometric
    clustering toward either endpoint (to resolve 1/T boundary layers)."""
    if length <= 0.0:
        return np.empty(0), np.empty(0)
    half = 0.5 * length
    pts = {0.0, 0.25 * length, half, 0.75 * length, length}
    for fine, from_lo in ((fine_lo, True), (fine_hi, False)):
        if fine is None:
            continue
        step = min(fine, 0.25 * half)
        while step < half:
            pts.add(step if from_lo else length - step)
            step *= 2.0
    return _gl_on_breaks(np.array(sorted(pts)), n_gl)


# ----------------------------------------------------------------------
# finite-T covariance of <N(s), phi>
# ----------------------------------------------------------------------

def _cov_n_once(phi, params, s, t, spec):
    xg, wg = _phi_grid(phi, spec)
    phiw = phi(xg) * wg
    term_a = float(semigroup_values(params.alpha, [t - s], phi, xg, spec.z_nodes)[0] @ phiw)
    term_b = 0.0
    if params.gamma > 0.0 and params.sigma.D > 0.0 and s > 0.0:
        xs, wsig = _sigma_grid(params.sigma, spec)
        u, wu = _panel_nodes(s, spec.time_nodes, fine_hi=min(1.0, 0.25 * s))
        l1 = semigroup_values(params.alpha, s - u, phi, xs, spec.z_nodes)
        l2 = semigroup_values(params.alpha, t - u, phi, xs, spec.z_nodes)
        term_b = 2.0 * params.gamma * float(wu @ ((l1 * l2) @ wsig))
    return term_a + term_b


def cov_N(phi: TestFunction, params: ModelParams, s: float, t: float,
          spec: QuadratureSpec = DEFAULT_SPEC, check: bool = True) -> float:
    """Exact covariance of (<N(s), phi>, <N(t), phi>) for the Poisson-started system."""
    s, t = (s, t) if s <= t else (t, s)
    if s < 0.0 or t > params.T:
        raise ValueError("need 0 <= s, t <= T")
    val = _cov_n_once(phi, params, s, t, spec)
    if not check:
        return val
    ref = _cov_n_once(phi, params, s, t, spec.refined())
    if abs(val - ref) > max(spec.rtol_cov_n * abs(ref), spec.atol):
        raise QuadratureError(
            f"cov_N({s}, {t}) refinement drift {abs(val - ref):.3e} "
            f"(value {ref:.6e}); tighten QuadratureSpec"
        )
    return ref


def mean_N(phi: TestFunction, params: ModelParams, t: float,
           self_check: bool = True) -> float:
    """E <N(t), phi> = <lambda, phi>, with a numeric semigroup mass self-check."""
    if t < 0.0:
        raise ValueError("t must be >= 0")
    val = phi.integral
    if self_check and t > 0.0:
        halfwidth = required_halfwidth(params.alpha, t, phi, mass_tol=2e-6)
        h = min(c.width for c in phi.components) / 8.0
        n = int(math.ceil(halfwidth / h))
        grid = np.arange(-n, n + 1) * h
        num = float(np.trapezoid(semigroup_apply(params.alpha, t, phi, grid, mass_tol=2e-6), grid))
        if abs(num - val) > 1e-5 * val:
            raise SemigroupSelfCheckError(
                f"numeric mass of L_t phi = {num:.8e} vs analytic {val:.8e} at t={t}"
            )
    return val


# ----------------------------------------------------------------------
# fluctuation covariance at finite T
# ----------------------------------------------------------------------

def _overlap_weight(d, s, t):
    """Length of {(u, v) in [0,s] x [0,t]: u - v = d} + the mirrored strip."""
    l1 = np.maximum(0.0, np.minimum(s, t + d) - d)
    l2 = np.maximum(0.0, np.minimum(t, s + d) - d)
    return l1 + l2


def _cov_xt_once(phi, params, regime, s, t, spec):
    T = params.T
    f2 = regime.norming(T) ** 2
    lo, hi = (s, t) if s <= t else (t, s)
    xg, wg = _phi_grid(phi, spec)
    phiw = phi(xg) * wg

    # motion term: reduce the double time integral to |u - v|
    d, wd = _panel_nodes(hi, spec.time_nodes, fine_lo=1.0 / T)
    a_vals = semigroup_values(params.alpha, T * d, phi, xg, spec.z_nodes) @ phiw
    total = (T * T / f2) * float((a_vals * _overlap_weight(d, lo, hi)) @ wd)

    # branching term: outer branch-time integral of the product of
    # time-integrated semigroups over the two observation windows
    if params.gamma > 0.0 and params.sigma.D > 0.0:
        xs, wsig = _sigma_grid(params.sigma, spec)
        rho, wr = _panel_nodes(lo, spec.time_nodes, fine_hi=1.0 / T)
        acc = 0.0
        for r, w_r in zip(rho, wr):
            a, wa = _panel_nodes(lo - r, spec.time_nodes, fine_lo=1.0 / T)
            b, wb = _panel_nodes(hi - r, spec.time_nodes, fine_lo=1.0 / T)
            ga = wa @ semigroup_values(params.alpha, T * a, phi, xs, spec.z_nodes)
            gb = wb @ semigroup_values(params.alpha, T * b, phi, xs, spec.z_nodes)
            acc += w_r * float((wsig * ga) @ gb)
        total += (2.0 * params.gamma * T**3 / f2) * acc
    return total


def exact_cov_XT(phi: TestFunction, params: ModelParams, regime: ScalingRegime,
                 s: float, t: float, spec: QuadratureSpec = DEFAULT_SPEC,
                 check: bool = True) -> float:
    """Covariance of (<X_T(s), phi>, <X_T(t), phi>) on scaled times in [0, 1]."""
    if not (0.0 <= s <= 1.0 and 0.0 <= t <= 1.0):
        raise ValueError("scaled times must lie in [0, 1]")
    if s == 0.0 or t == 0.0:
        return 0.0
    val = _cov_xt_once(phi, params, regime, s, t, spec)
    if not check:
        return val
    ref = _cov_xt_once(phi, params, regime, s, t, spec.refined())
    if abs(val - ref) > max(spec.rtol_cov_xt * abs(ref), spec.atol):
        raise QuadratureError(
            f"exact_cov_XT({s}, {t}) refinement drift {abs(val - ref):.3e} "
            f"(value {ref:.6e}); tighten QuadratureSpec"
        )
    return ref


def cov_matrix_XT(phi, params, regime, grid, spec: QuadratureSpec = DEFAULT_SPEC,
                  check: bool = True) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    n = len(grid)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            out[i, j] = out[j, i] = exact_cov_XT(phi, params, regime, grid[i], grid[j],
                                                 spec, check)
    return out


# ----------------------------------------------------------------------
# space-time functional variance (the alpha = 1 test statistic)
# ----------------------------------------------------------------------

def functional_variance(phi: TestFunction, params: ModelParams, regime: ScalingRegime,
                        h_tilde=None, spec: QuadratureSpec = DEFAULT_SPEC,
                        check: bool = True) -> float:
    """Variance of int_0^1 h(t) <X_T(t), phi> dt.

    h enters through its tail integral h_tilde(u) = int_u^1 h; the default
    is h identically 1, i.e. h_tilde(u) = 1 - u.
    """
    if h_tilde is None:
        h_tilde = lambda u: 1.0 - u  # noqa: E731

    def once(sp):
        T = params.T
        f2 = regime.norming(T) ** 2
        xg, wg = _phi_grid(phi, sp)
        phiw = phi(xg) * wg
        d, wd = _panel_nodes(1.0, sp.time_nodes, fine_lo=1.0 / T)
        a_vals = semigroup_values(params.alpha, T * d, phi, xg, sp.z_nodes) @ phiw
        gx, gw = np.polynomial.legendre.leggauss(sp.time_nodes)
        omega = np.empty_like(d)
        for i, dd in enumerate(d):
            u = 0.5 * (dd + 1.0) + 0.5 * (1.0 - dd) * gx
            wu = 0.5 * (1.0 - dd) * gw
            omega[i] = 2.0 * float(wu @ (h_tilde(u) * h_tilde(u - dd)))
        total = (T * T / f2) * float((a_vals * omega) @ wd)
        if params.gamma > 0.0 and params.sigma.D > 0.0:
            xs, wsig = _sigma_grid(params.sigma, sp)
            rho, wr = _panel_nodes(1.0, sp.time_nodes, fine_hi=1.0 / T)
            acc = 0.0
            for r, w_r in zip(rho, wr):
                a, wa = _panel_nodes(1.0 - r, sp.time_nodes, fine_lo=1.0 / T)
                g = (wa * h_tilde(r + a)) @ semigroup_values(params.alpha, T * a, phi, xs,
                                                             sp.z_nodes)
                acc += w_r * float((wsig * g) @ g)
            total += (2.0 * params.gamma * T**3 / f2) * acc
        return total

    val = once(spec)
    if not check:
        return val
    ref = once(spec.refined())
    if abs(val - ref) > max(spec.rtol_cov_xt * abs(ref), spec.atol):
        raise QuadratureError(
            f"functional_variance refinement drift {abs(val - ref):.3e} (value {ref:.6e})"
        )
    return ref
