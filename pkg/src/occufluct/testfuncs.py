"""Nonnegative rapidly-decreasing test functions built from Gaussian bumps.

A mixture sum(a_i * exp(-(x - m_i)^2 / (2 w_i^2))) stands in for a smooth
rapidly decreasing function: its integral, Fourier transform and tail mass
are all analytic, which the quadrature oracles rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class GaussComponent:
    amplitude: float
    center: float
    width: float

    def __post_init__(self):
        if self.amplitude < 0.0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.width <= 0.0:
            raise ValueError(f"width must be > 0, got {self.width}")


@dataclass(frozen=True)
class TestFunction:
    components: tuple[GaussComponent, ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("test function needs at least one component")

    @classmethod
    def unit_bump(cls) -> "TestFunction":
        return cls((GaussComponent(1.0, 0.0, 1.0),))

    @classmethod
    def from_tuples(cls, comps) -> "TestFunction":
        return cls(tuple(GaussComponent(a, m, w) for a, m, w in comps))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for c in self.components:
            out += c.amplitude * np.exp(-((x - c.center) ** 2) / (2.0 * c.width**2))
        return out

    @property
    def integral(self) -> float:
        """Analytic integral over the line."""
        return sum(c.amplitude * c.width * SQRT_2PI for c in self.components)

    def scaled(self, factor: float) -> "TestFunction":
        if factor < 0.0:
            raise ValueError("amplitude scale must be >= 0")
        return TestFunction(
            tuple(GaussComponent(factor * c.amplitude, c.center, c.width) for c in self.components)
        )

    def mass_outside(self, r: float) -> float:
        """Analytic mass of the function outside [-r, r]."""
        total = 0.0
        for c in self.components:
            inside = 0.5 * (
                math.erf((r - c.center) / (math.sqrt(2.0) * c.width))
                + math.erf((r + c.center) / (math.sqrt(2.0) * c.width))
            )
            total += c.amplitude * c.width * SQRT_2PI * (1.0 - inside)
        return total

    def support_radius(self, eps: float = 1e-8) -> float:
        """Radius containing all but a fraction eps of the total mass."""
        target = eps * self.integral
        lo = 0.0
        hi = max(abs(c.center) + 8.0 * c.width for c in self.components)
        while self.mass_outside(hi) > target:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.mass_outside(mid) > target:
                lo = mid
            else:
                hi = mid
        return hi

    # spectral side: fourier(z) = integral of phi(x) exp(izx) dx
    def fourier_abs2(self, z):
        """|Fourier transform|^2 on a real frequency grid."""
        z = np.asarray(z, dtype=float)
        re = np.zeros_like(z)
        im = np.zeros_like(z)
        for c in self.components:
            mag = c.amplitude * c.width * SQRT_2PI * np.exp(-0.5 * (c.width * z) ** 2)
            re += mag * np.cos(z * c.center)
            im += mag * np.sin(z * c.center)
        return re**2 + im**2

    def to_dict(self) -> list[dict]:
        return [
            {"amplitude": c.amplitude, "center": c.center, "width": c.width}
            for c in self.components
        ]

    @classmethod
    def from_dict(cls, data) -> "TestFunction":
        return cls(
            tuple(GaussComponent(d["amplitude"], d["center"], d["width"]) for d in data)
        )
