"""Centered Gaussian limit processes: covariance kernels, exact samplers,
limit constants, and the dependence-exponent law.

Kernels (all reduce to s ^ t at H = 1/2):

* BM       min(s, t)
* FBM      (s^2H + t^2H - |t-s|^2H) / 2
* SubFBM   s^2H + t^2H - ((s+t)^2H + |t-s|^2H) / 2
* RL       int_0^(s^t) ((t-u)(s-u))^(H-1/2) du   (moving-average process)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn

FAMILIES = ("bm", "fbm", "subfbm", "rl")


class KernelPSDError(RuntimeError):
    """Covariance factorization failed beyond the jitter budget."""


@dataclass(frozen=True)
class CovKernel:
    family: str
    H: float = 0.5

    def __post_init__(self):
        fam = self.family
        if fam not in FAMILIES:
            raise ValueError(f"unknown kernel family {fam!r}; choose from {FAMILIES}")
        if fam == "bm" and self.H != 0.5:
            raise ValueError("BM kernel has H fixed at 1/2")
        if fam in ("fbm", "subfbm") and not (0.0 < self.H < 1.0):
            raise ValueError(f"{fam} needs H in (0, 1), got {self.H}")
        if fam == "rl" and self.H <= 0.0:
            raise ValueError(f"rl needs H > 0, got {self.H}")


def _rl_cov(H, s, t):
    m, big = (s, t) if s <= t else (t, s)
    if m == 0.0:
        return 0.0
    if s == t:
        return m ** (2.0 * H) / (2.0 * H)
    nu = H - 0.5
    c = big - m
    # substitute u -> m - x: integral of x^nu (c+x)^nu with the endpoint
    # singularity handled by the algebraic-weight rule
    val, _ = quad(lambda x: (c + x) ** nu, 0.0, m, weight="alg", wvar=(nu, 0.0),
                  epsabs=1e-13, epsrel=1e-11, limit=200)
    return val


def cov(kernel: CovKernel, s: float, t: float) -> float:
    """Covariance value of the kernel at (s, t)."""
    if s < 0.0 or t < 0.0:
        raise ValueError("times must be >= 0")
    H = kernel.H
    if H == 0.5:
        return min(s, t)
    if kernel.family == "fbm":
        return 0.5 * (s ** (2 * H) + t ** (2 * H) - abs(t - s) ** (2 * H))
    if kernel.family == "subfbm":
        return s ** (2 * H) + t ** (2 * H) - 0.5 * ((s + t) ** (2 * H) + abs(t - s) ** (2 * H))
    return _rl_cov(H, s, t)


def cov_matrix(kernel: CovKernel, grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    n = len(grid)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            out[i, j] = out[j, i] = cov(kernel, grid[i], grid[j])
    return out


@dataclass(frozen=True)
class LimitConstants:
    """Amplitude and temporal law of the fluctuation limit for one regime."""

    H: float
    amplitude: float
    regime: str  # "power" (RL limit) or "log" (BM limit)
    kernel: CovKernel

    def limit_cov(self, s: float, t: float, lam_phi: float) -> float:
        return (self.amplitude * lam_phi) ** 2 * cov(self.kernel, s, t)


def limit_constants(alpha: float, gamma: float, D: float) -> LimitConstants:
    """Limit law for the scaled occupation fluctuations.

    alpha in (1, 2): RL process with H = 3/2 - 1/alpha and amplitude
    K = sqrt(2 gamma D) Gamma(1/alpha) / (pi (alpha - 1)); alpha = 1:
    Brownian limit with amplitude C = 2 sqrt(gamma D) / pi.
    """
    if gamma <= 0.0 or D <= 0.0:
        raise ValueError("gamma and D must be > 0")
    if alpha == 1.0:
        c = 2.0 * math.sqrt(gamma * D) / math.pi
        return LimitConstants(0.5, c, "log", CovKernel("bm"))
    if 1.0 < alpha < 2.0:
        H = 1.5 - 1.0 / alpha
        k = math.sqrt(2.0 * gamma * D) * float(gamma_fn(1.0 / alpha)) / (math.pi * (alpha - 1.0))
        return LimitConstants(H, k, "power", CovKernel("rl", H))
    raise ValueError(f"no limit theorem for alpha = {alpha}; need 1 or (1, 2)")


# ----------------------------------------------------------------------
# exact Gaussian sampling
# ----------------------------------------------------------------------

def sample_paths(kernel: CovKernel, grid, n: int, rng, jitter_max: float = 1e-10) -> np.ndarray:
    """n paths of the centered Gaussian law with matrix cov(t_i, t_j).

    Cholesky with escalating diagonal jitter up to jitter_max (relative to
    the largest variance); zero-variance grid points (t = 0) are pinned to 0.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0.0) or grid[0] < 0.0:
        raise ValueError("grid must be strictly increasing and nonnegative")
    mat = cov_matrix(kernel, grid)
    live = np.diag(mat) > 0.0
    sub = mat[np.ix_(live, live)]
    scale = max(float(np.diag(sub).max()), 1.0) if sub.size else 1.0
    chol = None
    jitter = 0.0
    while True:
        try:
            chol = np.linalg.cholesky(sub + jitter * np.eye(len(sub)))
            break
        except np.linalg.LinAlgError:
            jitter = 1e-14 * scale if jitter == 0.0 else jitter * 10.0
            if jitter > jitter_max * scale:
                raise KernelPSDError(
                    f"{kernel.family}(H={kernel.H}) not PSD within jitter budget"
                ) from None
    z = rng.standard_normal((n, len(sub)))
    out = np.zeros((n, len(grid)))
    out[:, live] = z @ chol.T
    return out


def rl_moving_average_paths(H: float, grid, rng, n: int = 1) -> np.ndarray:
    """Discretized moving-average construction of the RL process.

    R(t_i) ~= sum_(j < i) (t_i - u_j)^(H-1/2) sqrt(dt) Z_j with midpoint
    kernel nodes u_j = (j + 1/2) dt; needs H >= 1/2 (the kernel is singular
    below) and a uniform grid aligned to dt.
    """
    if not (0.5 <= H <= 1.0):
        raise ValueError(f"moving-average sampler needs H in [1/2, 1], got {H}")
    grid = np.asarray(grid, dtype=float)
    steps = np.diff(grid)
    if len(grid) < 2 or np.any(steps <= 0.0):
        raise ValueError("grid must be strictly increasing")
    dt = grid[1] - grid[0] if grid[0] > 0.0 else steps[0]
    if grid[0] not in (0.0, dt) or not np.allclose(steps, dt, rtol=1e-9, atol=0.0):
        raise ValueError("grid must be uniform starting at 0 or dt")
    idx = np.rint(grid / dt).astype(int)
    m = idx.max()
    mids = (np.arange(m) + 0.5) * dt
    weights = np.zeros((len(grid), m))
    for row, i in enumerate(idx):
        if i > 0:
            weights[row, :i] = (grid[row] - mids[:i]) ** (H - 0.5)
    z = rng.standard_normal((n, m))
    return math.sqrt(dt) * z @ weights.T


# ----------------------------------------------------------------------
# long-range dependence
# ----------------------------------------------------------------------

def increment_cov(kernel: CovKernel, u: float, v: float, s: float, t: float, T: float) -> float:
    """Cov(X(v) - X(u), X(T+t) - X(T+s)) by bilinearity of the kernel."""
    if not (0.0 <= u < v < s < t):
        raise ValueError("need 0 <= u < v < s < t")
    if T < 0.0:
        raise ValueError("T must be >= 0")
    return (
        cov(kernel, v, T + t)
        - cov(kernel, v, T + s)
        - cov(kernel, u, T + t)
        + cov(kernel, u, T + s)
    )


@dataclass(frozen=True)
class DependenceFit:
    exponent: float | None
    decays: bool
    T_grid: np.ndarray
    covariances: np.ndarray
    message: str = ""


def dependence_exponent_fit(kernel: CovKernel, u, v, s, t, T_grid) -> DependenceFit:
    """Least-squares decay exponent of |Cov| of separated increments.

    Fits log|increment_cov| against log T and returns minus the slope; a
    numerically vanishing covariance (independent increments) is reported
    as no polynomial decay instead of a slope.
    """
    T_grid = np.asarray(T_grid, dtype=float)
    if len(T_grid) < 2 or np.any(np.diff(T_grid) <= 0.0):
        raise ValueError("T grid must be increasing with at least 2 points")
    vals = np.array([increment_cov(kernel, u, v, s, t, T) for T in T_grid])
    floor = 1e-14 * max(cov(kernel, t, t), 1.0)
    if np.any(np.abs(vals) <= floor):
        return DependenceFit(None, False, T_grid, vals,
                             "covariance numerically zero: no polynomial decay")
    slope = np.polyfit(np.log(T_grid), np.log(np.abs(vals)), 1)[0]
    return DependenceFit(-float(slope), True, T_grid, vals)
