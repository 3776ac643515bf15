"""Scaled occupation-time fluctuation paths and replication ensembles.

A record of <N(s), phi> on the delta-grid is centered at the mean <lambda, phi>,
time-integrated by the trapezoid rule and divided by the regime norming F_T,
giving the fluctuation path on the scaled-time grid t_j = j / n_t in [0, 1].
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .branching import ModelParams, OccupationRecord, PopulationCapError, evolve
from .testfuncs import TestFunction

DEFAULT_N_T = 20


@dataclass(frozen=True)
class ScalingRegime:
    """Norming F_T for the two covered regimes.

    kind "power": F_T^2 = T^(3 - 2/alpha) for alpha in (1, 2);
    kind "log":   F_T^2 = T (ln T)^2 for alpha = 1 (natural log).
    """

    kind: str
    alpha: float

    def __post_init__(self):
        if self.kind == "power":
            if not (1.0 < self.alpha < 2.0):
                raise ValueError(f"power regime needs alpha in (1, 2), got {self.alpha}")
        elif self.kind == "log":
            if self.alpha != 1.0:
                raise ValueError(f"log regime needs alpha = 1, got {self.alpha}")
        else:
            raise ValueError(f"unknown regime kind {self.kind!r}")

    @classmethod
    def for_alpha(cls, alpha: float) -> "ScalingRegime":
        if alpha == 1.0:
            return cls("log", 1.0)
        if 1.0 < alpha < 2.0:
            return cls("power", alpha)
        raise ValueError(f"no limit regime for alpha = {alpha}; need 1 or (1, 2)")

    def norming(self, T: float) -> float:
        if T <= 1.0:
            raise ValueError(f"T must exceed 1 for the norming, got {T}")
        if self.kind == "power":
            return T ** (1.5 - 1.0 / self.alpha)
        return math.sqrt(T) * math.log(T)


@dataclass(frozen=True)
class FluctuationPath:
    times: np.ndarray
    values: np.ndarray


def fluctuation_path(record: OccupationRecord, params: ModelParams, phi: TestFunction,
                     regime: ScalingRegime, n_t: int = DEFAULT_N_T) -> FluctuationPath:
    """Scaled fluctuation path on t_j = j/n_t from one occupation record."""
    steps = len(record.values) - 1
    if steps % n_t != 0:
        raise ValueError(f"record grid ({steps} steps) must refine the path grid ({n_t})")
    stride = steps // n_t
    centered = record.values - phi.integral
    # cumulative trapezoid over the record grid; exact 0 at t=0
    cum = np.zeros(steps + 1)
    cum[1:] = np.cumsum(0.5 * (centered[1:] + centered[:-1])) * record.delta
    f_t = regime.norming(params.T)
    return FluctuationPath(np.arange(n_t + 1) / n_t, cum[::stride] / f_t)


def spacetime_functional(path: FluctuationPath, h) -> float:
    """Trapezoid of h(t) * path(t) over [0, 1]; h is a callable or grid array."""
    hv = np.asarray(h(path.times) if callable(h) else h, dtype=float)
    if hv.shape != path.values.shape:
        raise ValueError("weight grid must match the path grid")
    return float(np.trapezoid(hv * path.values, path.times))


@dataclass(frozen=True)
class Ensemble:
    params: ModelParams
    phi: TestFunction
    regime: ScalingRegime
    n_t: int
    master_seed: int
    paths: np.ndarray  # (n_completed, n_t + 1)
    rep_ids: np.ndarray  # replication index of each row
    aborted: tuple[int, ...]  # replication indices stopped by the cap

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_t + 1) / self.n_t

    @property
    def n_aborted(self) -> int:
        return len(self.aborted)


def rep_rng(master_seed: int, rep: int) -> np.random.Generator:
    """Deterministic per-replication stream, independent of scheduling."""
    return np.random.default_rng([int(master_seed), int(rep)])


def _run_block(args):
    (params, phi, regime, n_t, master_seed, start, count, impl, cap, keep_records) = args
    vals = np.empty((count, n_t + 1))
    recs = [] if keep_records else None
    aborted = []
    for i in range(count):
        rep = start + i
        try:
            rec = evolve(params, phi, rep_rng(master_seed, rep), impl=impl, cap=cap)
        except PopulationCapError:
            aborted.append(rep)
            vals[i] = np.nan
            if keep_records:
                recs.append(None)
            continue
        vals[i] = fluctuation_path(rec, params, phi, regime, n_t).values
        if keep_records:
            recs.append(rec)
    return start, vals, aborted, recs


def run_ensemble(params: ModelParams, phi: TestFunction, regime: ScalingRegime,
                 n_reps: int, master_seed: int, n_t: int = DEFAULT_N_T,
                 workers: int = 1, impl: str = "auto", cap: int = 1_000_000,
                 keep_records: bool = False):
    """Independent replications with per-replication seeding.

    The result is a deterministic function of (params, phi, regime, n_t,
    master_seed, n_reps) alone; worker count only affects wall time.  When
    keep_records is set, the per-replication occupation records are returned
    alongside the ensemble (None for aborted replications).
    """
    if n_reps < 2:
        raise ValueError(f"need at least 2 replications, got {n_reps}")
    block = max(1, math.ceil(n_reps / max(4 * workers, 1)))
    tasks = [
        (params, phi, regime, n_t, master_seed, start, min(block, n_reps - start), impl, cap,
         keep_records)
        for start in range(0, n_reps, block)
    ]
    all_vals = np.empty((n_reps, n_t + 1))
    records: list = [None] * n_reps if keep_records else []
    aborted: list[int] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_block, tasks))
    else:
        results = [_run_block(t) for t in tasks]
    for start, vals, bad, recs in results:
        all_vals[start : start + len(vals)] = vals
        aborted.extend(bad)
        if keep_records:
            records[start : start + len(recs)] = recs
    ok = np.ones(n_reps, dtype=bool)
    ok[aborted] = False
    ens = Ensemble(params, phi, regime, n_t, master_seed,
                   all_vals[ok], np.flatnonzero(ok), tuple(sorted(aborted)))
    if keep_records:
        return ens, records
    return ens


# ----------------------------------------------------------------------
# persistence
# ----------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def save_ensemble(ens: Ensemble, directory, extra_meta=None) -> None:
    """Write ensemble.csv (rep,t,value) plus a JSON sidecar with full context."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "ensemble.csv"), "w") as f:
        f.write("rep,t,value\n")
        for row, rep in zip(ens.paths, ens.rep_ids):
            for t, val in zip(ens.times, row):
                f.write(f"{int(rep)},{_fmt(t)},{_fmt(val)}\n")
    meta = {
        "schema_version": 1,
        "params": {
            "alpha": ens.params.alpha,
            "gamma": ens.params.gamma,
            "sigma": ens.params.sigma.to_dict(),
            "T": ens.params.T,
            "L": ens.params.L,
            "delta": ens.params.delta,
        },
        "phi": ens.phi.to_dict(),
        "regime": ens.regime.kind,
        "n_t": ens.n_t,
        "master_seed": ens.master_seed,
        "n_reps": int(len(ens.rep_ids) + ens.n_aborted),
        "aborted": list(ens.aborted),
    }
    if extra_meta:
        meta.update(extra_meta)
    with open(os.path.join(directory, "ensemble_meta.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_ensemble(directory) -> Ensemble:
    from .branching import SigmaProfile

    with open(os.path.join(directory, "ensemble_meta.json")) as f:
        meta = json.load(f)
    raw = np.loadtxt(os.path.join(directory, "ensemble.csv"), delimiter=",", skiprows=1)
    reps = np.unique(raw[:, 0]).astype(int)
    n_t = int(meta["n_t"])
    paths = np.empty((len(reps), n_t + 1))
    order = {r: i for i, r in enumerate(reps)}
    for rep in reps:
        rows = raw[raw[:, 0] == rep]
        paths[order[rep]] = rows[np.argsort(rows[:, 1]), 2]
    p = meta["params"]
    params = ModelParams(p["alpha"], p["gamma"], SigmaProfile.from_dict(p["sigma"]),
                         p["T"], p["L"], p["delta"])
    phi = TestFunction.from_dict(meta["phi"])
    regime = ScalingRegime(meta["regime"], p["alpha"])
    return Ensemble(params, phi, regime, n_t, int(meta["master_seed"]),
                    paths, reps, tuple(meta.get("aborted", [])))


def save_record_csv(record: OccupationRecord, path) -> None:
    """Debug dump of one occupation record as CSV with header s,value."""
    with open(path, "w") as f:
        f.write("s,value\n")
        for s, val in zip(record.times, record.values):
            f.write(f"{_fmt(s)},{_fmt(val)}\n")
