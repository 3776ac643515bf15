"""Event-driven simulation of the site-dependent branching particle system.

Particles start from a Poisson field with Lebesgue intensity on [-L, L],
move by exact symmetric alpha-stable increments between events, and branch
at rate gamma with the critical position-dependent offspring law
p0 = sigma(x), p1 = 1 - 2 sigma(x), p2 = sigma(x).

The inner loop exists twice: a compiled extension (``_evolve_core``) and a
pure-Python mirror selected at import time.  Both consume the Generator's
raw uniform stream in the same order, so their records are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .testfuncs import TestFunction

try:
    from ._evolve_core import evolve_core as _evolve_core

    HAVE_EXT = True
except ImportError:  # pure-Python install
    _evolve_core = None
    HAVE_EXT = False

DEFAULT_CAP = 1_000_000

_SIGMA_KINDS = {"zero": 0, "interval": 1, "gaussian": 2}


class PopulationCapError(RuntimeError):
    """A replication exceeded the alive-particle cap and was aborted."""


@dataclass(frozen=True)
class SigmaProfile:
    """Branching intensity profile sigma(x), constrained to [0, 1/2]."""

    kind: str
    level: float = 0.0
    lo: float = 0.0
    hi: float = 0.0
    center: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in _SIGMA_KINDS:
            raise ValueError(f"unknown sigma profile kind {self.kind!r}")
        if not (0.0 <= self.level <= 0.5):
            raise ValueError(f"sigma level must be in [0, 1/2], got {self.level}")
        if self.kind == "interval" and not self.lo < self.hi:
            raise ValueError("interval profile needs lo < hi")
        if self.kind == "gaussian" and self.width <= 0.0:
            raise ValueError("gaussian profile needs width > 0")

    @classmethod
    def zero(cls) -> "SigmaProfile":
        return cls("zero")

    @classmethod
    def interval(cls, level, lo, hi) -> "SigmaProfile":
        return cls("interval", level=level, lo=lo, hi=hi)

    @classmethod
    def gaussian(cls, level, center, width) -> "SigmaProfile":
        return cls("gaussian", level=level, center=center, width=width)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "interval":
            return np.where((x >= self.lo) & (x <= self.hi), self.level, 0.0)
        return self.level * np.exp(-((x - self.center) ** 2) / (2.0 * self.width**2))

    @property
    def D(self) -> float:
        """Analytic integral of sigma over the line."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "interval":
            return self.level * (self.hi - self.lo)
        return self.level * self.width * math.sqrt(2.0 * math.pi)

    def kernel_params(self):
        """(kind code, level, p1, p2) packing shared by both evolve lanes."""
        code = _SIGMA_KINDS[self.kind]
        if self.kind == "interval":
            return code, self.level, self.lo, self.hi
        if self.kind == "gaussian":
            return code, self.level, self.center, 1.0 / (2.0 * self.width**2)
        return code, 0.0, 0.0, 0.0

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "level": self.level}
        if self.kind == "interval":
            d.update(lo=self.lo, hi=self.hi)
        elif self.kind == "gaussian":
            d.update(center=self.center, width=self.width)
        return d

    @classmethod
    def from_dict(cls, d) -> "SigmaProfile":
        kind = d["kind"]
        if kind == "zero":
            return cls.zero()
        if kind == "interval":
            return cls.interval(d["level"], d["lo"], d["hi"])
        if kind == "gaussian":
            return cls.gaussian(d["level"], d["center"], d["width"])
        raise ValueError(f"unknown sigma profile kind {kind!r}")


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    gamma: float
    sigma: SigmaProfile
    T: float
    L: float
    delta: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0):
            raise ValueError(f"alpha must be in (0, 2], got {self.alpha}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.T <= 0.0:
            raise ValueError(f"T must be > 0, got {self.T}")
        if self.delta <= 0.0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        steps = self.T / self.delta
        if abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
            raise ValueError(f"T/delta must be an integer, got {steps}")
        if self.L <= 0.0:
            raise ValueError(f"L must be > 0, got {self.L}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.delta))


def default_window(phi: TestFunction, alpha: float, T: float, factor: float = 10.0) -> float:
    """Truncation halfwidth: test-function support plus factor * T^(1/alpha)."""
    return phi.support_radius(1e-8) + factor * T ** (1.0 / alpha)


@dataclass(frozen=True)
class Particle:
    position: float
    next_branch_time: float


@dataclass(frozen=True)
class OccupationRecord:
    """phi-functionals of the population on the grid s_k = k delta."""

    delta: float
    values: np.ndarray
    counts: np.ndarray

    @property
    def T(self) -> float:
        return (len(self.values) - 1) * self.delta

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.delta

    def subsample(self, factor: int) -> "OccupationRecord":
        """Same realization on a grid coarsened by an integer factor."""
        if (len(self.values) - 1) % factor != 0:
            raise ValueError("factor must divide the number of steps")
        return OccupationRecord(self.delta * factor, self.values[::factor], self.counts[::factor])


def _draw_initial(L, gamma, rng, branching_off=False):
    n0 = int(rng.poisson(2.0 * L))
    x0 = rng.uniform(-L, L, n0)
    if branching_off or gamma == 0.0:
        clocks = np.full(n0, np.inf)
    else:
        clocks = rng.standard_exponential(n0) / gamma
    return x0, clocks


def init_population(L, gamma, rng) -> list[Particle]:
    """Poisson(2L) particles uniform on [-L, L] with fresh Exp(gamma) clocks."""
    if L <= 0.0:
        raise ValueError(f"L must be > 0, got {L}")
    x0, clocks = _draw_initial(L, gamma, rng)
    return [Particle(float(x), float(c)) for x, c in zip(x0, clocks)]


def offspring_count(sigma_x: float, rng) -> int:
    """0, 1 or 2 offspring with probabilities (sigma_x, 1-2 sigma_x, sigma_x)."""
    if not (0.0 <= sigma_x <= 0.5):
        raise ValueError(f"sigma(x) must be in [0, 1/2], got {sigma_x}")
    u = rng.random()
    if u < sigma_x:
        return 0
    if u < 2.0 * sigma_x:
        return 2
    return 1


def _evolve_python(rng, x0, clocks, alpha, gamma, delta, n_steps,
                   sigma_kind, sigma_level, sigma_p1, sigma_p2,
                   phi_amp, phi_center, phi_i2w2, v, counts, cap):
    """Pure-Python mirror of _evolve_core.evolve_core; keep draw order in sync."""
    pi = math.pi
    ia = 1.0 / alpha
    oma = 1.0 - alpha
    ce = oma * ia
    nc = len(phi_amp)
    qx = list(x0)
    qt = [0.0] * len(x0)
    qb = list(clocks)
    head = 0
    while head < len(qx):
        x = qx[head]
        t = qt[head]
        b = qb[head]
        head += 1
        k = int(t / delta) + 1
        while k * delta <= t:
            k += 1
        alive = True
        while alive and k <= n_steps:
            s_next = k * delta
            t_ev = b if b < s_next else s_next
            dt = t_ev - t
            if dt > 0.0:
                u1 = rng.random()
                u2 = rng.random()
                u = pi * (u1 - 0.5)
                w = -math.log1p(-u2)
                x = x + math.pow(dt, ia) * (
                    math.sin(alpha * u) / math.pow(math.cos(u), ia)
                    * math.pow(math.cos(oma * u) / w, ce)
                )
            t = t_ev
            if t_ev == s_next:
                val = 0.0
                for j in range(nc):
                    d = x - phi_center[j]
                    val += phi_amp[j] * math.exp(-(d * d * phi_i2w2[j]))
                v[k] += val
                counts[k] += 1
                if counts[k] > cap:
                    return 1
                k += 1
            if t_ev == b:
                if sigma_kind == 0:
                    sx = 0.0
                elif sigma_kind == 1:
                    sx = sigma_level if (x >= sigma_p1 and x <= sigma_p2) else 0.0
                else:
                    d = x - sigma_p1
                    sx = sigma_level * math.exp(-(d * d * sigma_p2))
                u = rng.random()
                if u < sx:
                    alive = False
                else:
                    if u < 2.0 * sx:
                        qx.append(x)
                        qt.append(t)
                        qb.append(t - math.log1p(-rng.random()) / gamma)
                    b = t - math.log1p(-rng.random()) / gamma
    return 0


def evolve(params: ModelParams, phi: TestFunction, rng, impl="auto",
           cap=DEFAULT_CAP, short_circuit_noop=True) -> OccupationRecord:
    """One replication: exact-in-law occupation record on the delta-grid.

    Branch times are exact Exp(gamma) clocks and motion jumps straight
    between events, so there is no discretization error in law at grid
    times.  When sigma is identically zero (and short_circuit_noop is set)
    the no-op branch events are skipped entirely.
    """
    if phi.support_radius(1e-8) > params.L:
        raise ValueError("window halfwidth L smaller than test-function support")
    if impl not in ("auto", "cython", "python"):
        raise ValueError(f"unknown impl {impl!r}")
    if impl == "cython" and not HAVE_EXT:
        raise RuntimeError("compiled kernel not available in this install")
    use_ext = HAVE_EXT if impl == "auto" else impl == "cython"

    branching_off = params.gamma == 0.0 or (params.sigma.kind == "zero" and short_circuit_noop)
    x0, clocks = _draw_initial(params.L, params.gamma, rng, branching_off=branching_off)
    n_steps = params.n_steps
    v = np.zeros(n_steps + 1)
    counts = np.zeros(n_steps + 1, dtype=np.int64)
    v[0] = float(phi(x0).sum())
    counts[0] = len(x0)
    if counts[0] > cap:
        raise PopulationCapError(f"initial population {counts[0]} exceeds cap {cap}")

    kind, level, p1, p2 = params.sigma.kernel_params()
    amp = np.array([c.amplitude for c in phi.components])
    cen = np.array([c.center for c in phi.components])
    i2w = np.array([1.0 / (2.0 * c.width**2) for c in phi.components])

    if use_ext:
        status = _evolve_core(
            rng.bit_generator, x0, clocks,
            params.alpha, params.gamma, params.delta, n_steps,
            kind, level, p1, p2, amp, cen, i2w, v, counts, cap,
        )
    else:
        status = _evolve_python(
            rng, x0, clocks,
            params.alpha, params.gamma, params.delta, n_steps,
            kind, level, p1, p2, amp, cen, i2w, v, counts, cap,
        )
    if status != 0:
        raise PopulationCapError(f"alive count exceeded cap {cap}")
    return OccupationRecord(params.delta, v, counts)
