"""Experiment orchestration: configuration, covariance reports with bootstrap
errors, and the limit-convergence trend verdict."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .branching import ModelParams, SigmaProfile, default_window
from .gaussian_limits import LimitConstants, limit_constants
from .occupation import Ensemble, ScalingRegime
from .testfuncs import TestFunction

_BOOT_TAG = 0xB005  # seed-sequence tag separating bootstrap streams from replications


class ConfigError(ValueError):
    """Malformed experiment configuration; message names the offending field."""


@dataclass(frozen=True)
class Thresholds:
    final_dev: float = 0.15
    se_mult: float = 3.0
    limit_floor: float = 0.02

    def to_dict(self):
        return {"final_dev": self.final_dev, "se_mult": self.se_mult,
                "limit_floor": self.limit_floor}


@dataclass(frozen=True)
class ExperimentConfig:
    alpha: float = 1.5
    gamma: float = 1.0
    sigma: SigmaProfile = field(default_factory=lambda: SigmaProfile.interval(0.5, -1.0, 1.0))
    phi: TestFunction = field(default_factory=TestFunction.unit_bump)
    T_list: tuple[float, ...] = (20.0, 60.0, 200.0)
    n_reps: int = 2000
    n_t: int = 20
    delta: float = 0.25
    window_factor: float = 10.0
    master_seed: int = 20260810
    workers: int = 8
    cap: int = 1_000_000
    n_boot: int = 1000
    thresholds: Thresholds = field(default_factory=Thresholds)

    def __post_init__(self):
        if self.alpha != 1.0 and not (1.0 < self.alpha < 2.0):
            raise ConfigError(f"alpha: limit experiments need 1 or (1, 2), got {self.alpha}")
        if self.gamma < 0.0:
            raise ConfigError(f"gamma: must be >= 0, got {self.gamma}")
        if not self.T_list or any(b <= a for a, b in zip(self.T_list, self.T_list[1:])):
            raise ConfigError(f"T_list: must be strictly increasing, got {list(self.T_list)}")
        if any(T <= 1.0 for T in self.T_list):
            raise ConfigError("T_list: horizons must exceed 1 (norming requires it)")
        if self.n_reps < 2:
            raise ConfigError(f"n_reps: must be >= 2, got {self.n_reps}")
        if self.n_t < 1:
            raise ConfigError(f"n_t: must be >= 1, got {self.n_t}")
        if self.delta <= 0.0:
            raise ConfigError(f"delta: must be > 0, got {self.delta}")
        for T in self.T_list:
            steps = T / self.delta
            if abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
                raise ConfigError(f"delta: T={T} is not a multiple of delta={self.delta}")
            if round(steps) % self.n_t != 0:
                raise ConfigError(
                    f"n_t: record grid for T={T} ({round(steps)} steps) must refine n_t={self.n_t}"
                )
        if self.window_factor <= 0.0:
            raise ConfigError(f"window_factor: must be > 0, got {self.window_factor}")
        if self.workers < 1:
            raise ConfigError(f"workers: must be >= 1, got {self.workers}")
        if self.n_boot < 10:
            raise ConfigError(f"n_boot: must be >= 10, got {self.n_boot}")

    # -- derived objects -------------------------------------------------
    def regime(self) -> ScalingRegime:
        return ScalingRegime.for_alpha(self.alpha)

    def model_params(self, T: float) -> ModelParams:
        L = default_window(self.phi, self.alpha, T, self.window_factor)
        return ModelParams(self.alpha, self.gamma, self.sigma, T, L, self.delta)

    def limits(self) -> LimitConstants:
        return limit_constants(self.alpha, self.gamma, self.sigma.D)

    # -- (de)serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "gamma": self.gamma,
            "sigma": self.sigma.to_dict(),
            "phi": self.phi.to_dict(),
            "T_list": list(self.T_list),
            "n_reps": self.n_reps,
            "n_t": self.n_t,
            "delta": self.delta,
            "window_factor": self.window_factor,
            "master_seed": self.master_seed,
            "workers": self.workers,
            "cap": self.cap,
            "n_boot": self.n_boot,
            "thresholds": self.thresholds.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {
            "alpha", "gamma", "sigma", "phi", "T_list", "n_reps", "n_t", "delta",
            "window_factor", "master_seed", "workers", "cap", "n_boot", "thresholds",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kwargs = dict(data)
        try:
            if "sigma" in kwargs:
                kwargs["sigma"] = SigmaProfile.from_dict(kwargs["sigma"])
            if "phi" in kwargs:
                kwargs["phi"] = TestFunction.from_dict(kwargs["phi"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"sigma/phi: {exc}") from exc
        if "T_list" in kwargs:
            kwargs["T_list"] = tuple(float(t) for t in kwargs["T_list"])
        if "thresholds" in kwargs:
            kwargs["thresholds"] = Thresholds(**kwargs["thresholds"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_override(self, path: str, value) -> "ExperimentConfig":
        """Dotted-path override, e.g. 'sigma.level' or 'n_reps'."""
        data = self.to_dict()
        node = data
        parts = path.split(".")
        for p in parts[:-1]:
            if not isinstance(node, dict) or p not in node:
                raise ConfigError(f"override path {path!r}: no field {p!r}")
            node = node[p]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError(f"override path {path!r}: no field {parts[-1]!r}")
        node[parts[-1]] = value
        return ExperimentConfig.from_dict(data)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as exc:
        raise ConfigError(f"config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)


# ----------------------------------------------------------------------
# covariance report
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class CovReport:
    times: np.ndarray
    mc: np.ndarray
    se: np.ndarray
    oracle: np.ndarray | None = None
    limit: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def with_limit(self, lc: LimitConstants, lam_phi: float) -> "CovReport":
        from .gaussian_limits import cov

        lim = np.array(
            [[lc.limit_cov(s, t, lam_phi) for t in self.times] for s in self.times]
        )
        return replace(self, limit=lim)

    def rows(self):
        for i, s in enumerate(self.times):
            for j, t in enumerate(self.times):
                if j < i:
                    continue
                yield {
                    "s": float(s),
                    "t": float(t),
                    "mc": float(self.mc[i, j]),
                    "se": float(self.se[i, j]),
                    "oracle": None if self.oracle is None else float(self.oracle[i, j]),
                    "limit": None if self.limit is None else float(self.limit[i, j]),
                }

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "times": [float(t) for t in self.times],
            "entries": list(self.rows()),
            "meta": self.meta,
        }

    def save(self, directory, stem="cov_report") -> None:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, f"{stem}.json"), "w") as f:
            json.dump(self.to_json_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        with open(os.path.join(directory, f"{stem}.csv"), "w") as f:
            f.write("s,t,mc,se,oracle,limit\n")
            for r in self.rows():
                oracle = "" if r["oracle"] is None else repr(r["oracle"])
                limit = "" if r["limit"] is None else repr(r["limit"])
                f.write(f"{r['s']!r},{r['t']!r},{r['mc']!r},{r['se']!r},{oracle},{limit}\n")


def estimate_cov(ens: Ensemble, n_boot: int = 1000, seed=None) -> CovReport:
    """Unbiased sample covariance across replications plus bootstrap SEs.

    The bootstrap stream is derived from the ensemble's master seed unless an
    explicit seed is given, so reports are reproducible from the ensemble.
    """
    paths = ens.paths
    n = len(paths)
    if n < 100:
        raise ValueError(f"need >= 100 replications for covariance estimates, got {n}")
    mc = np.cov(paths, rowvar=False, ddof=1)
    rng = np.random.default_rng([ens.master_seed, _BOOT_TAG] if seed is None else seed)
    boots = np.empty((n_boot,) + mc.shape)
    for b in range(n_boot):
        idx = rng.integers(0, n, n)
        boots[b] = np.cov(paths[idx], rowvar=False, ddof=1)
    se = boots.std(axis=0, ddof=1)
    meta = {
        "n_reps": int(n),
        "n_aborted": ens.n_aborted,
        "n_boot": int(n_boot),
        "master_seed": int(ens.master_seed),
        "T": ens.params.T,
    }
    return CovReport(np.asarray(ens.times), mc, se, meta=meta)


# ----------------------------------------------------------------------
# limit trend verdict
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class TrendVerdict:
    passed: bool
    median_devs: tuple[float, ...]
    reasons: tuple[str, ...]
    excluded_pairs: tuple[tuple[float, float], ...]
    per_pair_final: dict

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "passed": bool(self.passed),
            "median_devs": [float(d) for d in self.median_devs],
            "reasons": list(self.reasons),
            "excluded_pairs": [[float(s), float(t)] for s, t in self.excluded_pairs],
            "per_pair_final": self.per_pair_final,
        }


def limit_trend_test(reports: list[tuple[float, CovReport]],
                     thresholds: Thresholds = Thresholds()) -> TrendVerdict:
    """PASS when the median relative deviation from the limit is nonincreasing
    over the T list, ends below the final threshold, and every included pair
    is within max(final_dev, se_mult * SE / |limit|) at the last T.

    Pairs whose |limit| falls below the floor are excluded and listed.
    """
    if len(reports) < 3:
        raise ValueError("need at least 3 horizons for a trend test")
    reasons = []
    median_devs = []
    excluded = []
    per_pair_final = {}
    for which, (T, rep) in enumerate(reports):
        if rep.limit is None:
            raise ValueError("reports must carry limit values")
        iu = np.triu_indices(len(rep.times))
        lim = rep.limit[iu]
        mc = rep.mc[iu]
        se = rep.se[iu]
        keep = np.abs(lim) >= thresholds.limit_floor
        if which == 0:
            excluded = [
                (float(rep.times[i]), float(rep.times[j]))
                for i, j, k in zip(iu[0], iu[1], keep)
                if not k
            ]
        dev = np.abs(mc[keep] - lim[keep]) / np.abs(lim[keep])
        median_devs.append(float(np.median(dev)))
        if which == len(reports) - 1:
            allowed = np.maximum(thresholds.final_dev,
                                 thresholds.se_mult * se[keep] / np.abs(lim[keep]))
            bad = dev > allowed
            per_pair_final = {
                f"({rep.times[i]:g},{rep.times[j]:g})": {
                    "dev": float(d),
                    "allowed": float(a),
                    "ok": bool(d <= a),
                }
                for (i, j), d, a in zip(
                    np.array(iu).T[keep], dev, allowed
                )
            }
            if np.any(bad):
                worst = np.argmax(dev - allowed)
                reasons.append(
                    f"{int(bad.sum())} pair(s) beyond per-pair allowance at final T "
                    f"(worst dev {dev[worst]:.3f} > {allowed[worst]:.3f})"
                )
    if any(b > a for a, b in zip(median_devs, median_devs[1:])):
        reasons.append(f"median deviation not nonincreasing: {median_devs}")
    if median_devs[-1] >= thresholds.final_dev:
        reasons.append(
            f"final median deviation {median_devs[-1]:.3f} >= {thresholds.final_dev}"
        )
    return TrendVerdict(not reasons, tuple(median_devs), tuple(reasons),
                        tuple(excluded), per_pair_final)
