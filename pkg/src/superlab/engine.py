"""Event-driven particle engine for the stable-branching superprocess.

Particles carry mass 1/N, branch at rate rho_N = (1+beta) N^beta with the
heavy-tailed critical offspring law, and move as independent Brownian
motions.  A finite truncation level K couples the full process with its
truncated component: branching events of net mass (k-1)/N > K keep the
parent alive as a single offspring in the truncated component while the
full process receives all k offspring, so the truncated measure is a
subset of the full one at all times and equal to it before the first big
event.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _sim
from .measures import AtomicMeasure
from .offspring import OffspringLaw, build_offspring_law, jump_rate_constant
from .stats import EstimateWithError, binomial_estimate, derive_seeds

MODE_PLAIN = 0
MODE_TRUNCATED_ONLY = 1
MODE_COUPLED = 2

DEFAULT_POP_CAP = 5_000_000


class PopulationOverflowError(RuntimeError):
    """A replicate exceeded the particle-slot cap and was aborted."""


class JumpLogOverflowError(RuntimeError):
    """The jump log buffer filled up; raise the cap or the threshold."""


def _check_status(status: int) -> None:
    if status == _sim.STATUS_POP_OVERFLOW:
        raise PopulationOverflowError("population cap exceeded, replicate aborted")
    if status == _sim.STATUS_JUMP_OVERFLOW:
        raise JumpLogOverflowError("jump log capacity exceeded")


@dataclass(frozen=True)
class EngineParams:
    """Parameters of one engine run.

    K is the truncation level in superprocess mass units (None for no
    truncation); particle mass is 1/mass_scale.
    """

    beta: float
    d: int
    mass_scale: int
    horizon: float
    snapshot_times: tuple[float, ...]
    K: float | None = None
    seed: int = 0
    pop_cap: int = DEFAULT_POP_CAP
    jump_log_threshold: float | None = None  # net-mass logging floor, default 10/N

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0,1)")
        if self.d < 3 or self.d <= 2.0 / self.beta:
            raise ValueError("need dimension d >= 3 with d > 2/beta")
        if self.mass_scale < 1:
            raise ValueError("mass_scale must be a positive integer")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        ts = tuple(float(t) for t in self.snapshot_times)
        if not ts:
            raise ValueError("snapshot_times must be nonempty")
        if any(t <= 0 or t > self.horizon for t in ts):
            raise ValueError("snapshot times must lie in (0, horizon]")
        if list(ts) != sorted(ts):
            raise ValueError("snapshot times must be sorted")
        object.__setattr__(self, "snapshot_times", ts)
        if self.K is not None:
            if self.K <= 0:
                raise ValueError("K must be positive")
            if self.K * self.mass_scale < 2:
                raise ValueError("K * mass_scale must be >= 2")

    @property
    def rho(self) -> float:
        return (1.0 + self.beta) * self.mass_scale ** self.beta

    @property
    def clip_n(self) -> int:
        """Offspring-excess threshold: an event is big when k-1 > clip_n."""
        if self.K is None:
            return 0
        return int(math.floor(self.K * self.mass_scale))

    @property
    def log_min_excess(self) -> int:
        thr = self.jump_log_threshold
        if thr is None:
            thr = 10.0 / self.mass_scale
        return max(1, int(math.ceil(thr * self.mass_scale)))

    def law(self) -> OffspringLaw:
        return build_offspring_law(self.beta)


@dataclass(frozen=True)
class JumpLog:
    """Logged branching events above the logging threshold."""

    times: np.ndarray
    locations: np.ndarray
    net_mass: np.ndarray
    truncated: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.times) < 0):
            raise ValueError("jump times must be nondecreasing")
        if np.any(self.net_mass <= 0):
            raise ValueError("logged net jump masses must be positive")

    def __len__(self) -> int:
        return self.times.size

    def to_csv(self, path: str | Path) -> None:
        d = self.locations.shape[1] if self.locations.ndim == 2 else 0
        header = "t," + ",".join(f"x{i+1}" for i in range(d)) + ",r,truncated"
        data = np.column_stack([self.times, self.locations, self.net_mass,
                                self.truncated.astype(float)])
        np.savetxt(path, data, delimiter=",", header=header, comments="",
                   fmt="%.17g")


@dataclass(frozen=True)
class CoupledTrajectory:
    """Snapshots of the full process with kept-flags marking the truncated one."""

    params: EngineParams
    times: tuple[float, ...]
    snapshots: tuple[AtomicMeasure, ...]
    kept: tuple[np.ndarray, ...]
    jump_log: JumpLog
    tau_k: float

    def full(self, i: int) -> AtomicMeasure:
        return self.snapshots[i]

    def truncated(self, i: int) -> AtomicMeasure:
        m = self.snapshots[i]
        sel = self.kept[i].astype(bool)
        return AtomicMeasure(m.positions[sel], m.masses[sel], m.dim)

    def coupling_ok(self) -> bool:
        """Subset invariant plus pre-tau equality, exact."""
        for t, kp in zip(self.times, self.kept):
            if t < self.tau_k and not np.all(kp):
                return False
        return True


def _particles_from_measure(initial: AtomicMeasure, mass_scale: int
                            ) -> tuple[np.ndarray, int]:
    counts = np.rint(initial.masses * mass_scale).astype(np.int64)
    counts = np.maximum(counts, 0)
    n = int(counts.sum())
    if n == 0:
        raise ValueError("initial measure rounds to zero particles")
    x0 = np.repeat(initial.positions, counts, axis=0)
    return np.ascontiguousarray(x0, dtype=np.float64), n


def simulate_coupled(params: EngineParams, initial: AtomicMeasure,
                     mode: int | None = None) -> CoupledTrajectory:
    """Simulate one replicate, deterministic given params.seed."""
    if initial.dim != params.d:
        raise ValueError("initial measure dimension mismatch")
    x0, n0 = _particles_from_measure(initial, params.mass_scale)
    if mode is None:
        mode = MODE_COUPLED if params.K is not None else MODE_PLAIN
    law = params.law()
    snap = np.asarray(params.snapshot_times, dtype=np.float64)
    lin0 = np.arange(n0, dtype=np.int64)
    kept0 = np.ones(n0, dtype=np.uint8)
    jcap = 1_000_000
    out = _sim.spatial_path(x0, lin0, kept0, params.rho, law.cumulative,
                            params.beta, snap, mode, params.clip_n,
                            params.pop_cap, np.uint64(params.seed),
                            params.log_min_excess, jcap)
    status, tau, pos, lin, kept, counts, jt, jexc, jloc, jbig = out
    _check_status(status)
    measures = []
    kept_flags = []
    row = 0
    w = 1.0 / params.mass_scale
    for c in counts:
        c = int(c)
        p = pos[row:row + c]
        measures.append(AtomicMeasure(p.copy(), np.full(c, w), params.d))
        kept_flags.append(kept[row:row + c].copy())
        row += c
    log = JumpLog(jt.copy(), jloc.copy(),
                  jexc.astype(float) / params.mass_scale,
                  jbig.astype(bool))
    return CoupledTrajectory(params, params.snapshot_times, tuple(measures),
                             tuple(kept_flags), log, float(tau))


def simulate_mass(params: EngineParams, initial_mass: float, reps: int,
                  clip: bool = False, log_jumps: bool = False,
                  jump_cap: int = 2_000_000, seed_stream: int = 0
                  ) -> tuple[np.ndarray, JumpLog | None, np.ndarray]:
    """Total-mass-only replicate batch.

    Returns (masses[reps, nsnap], jump_log or None, jump_rep_index).
    Spatial coordinates are never generated, so this is the cheap path for
    Laplace-functional, extinction, and jump-rate experiments.
    """
    if reps < 1:
        raise ValueError("reps must be positive")
    law = params.law()
    n0 = int(round(initial_mass * params.mass_scale))
    if n0 == 0:
        raise ValueError("initial mass rounds to zero particles")
    snap = np.asarray(params.snapshot_times, dtype=np.float64)
    seeds = derive_seeds(params.seed, reps, stream=seed_stream)
    lme = params.log_min_excess if log_jumps else 0
    jcap = jump_cap if log_jumps else 1
    jt = np.empty(jcap)
    jexc = np.empty(jcap, np.int64)
    jrep = np.empty(jcap, np.int64)
    counts, nj, status = _sim.mass_ensemble(
        reps, n0, params.rho, law.cumulative, params.beta, snap, clip,
        params.clip_n, seeds, lme, jt, jexc, jrep)
    _check_status(status)
    masses = counts.astype(float) / params.mass_scale
    log = None
    jrep_out = jrep[:nj].copy()
    if log_jumps:
        order = np.argsort(jt[:nj], kind="stable")
        log = JumpLog(jt[:nj][order],
                      np.zeros((nj, 0)),
                      jexc[:nj][order].astype(float) / params.mass_scale,
                      np.zeros(nj, dtype=bool))
        jrep_out = jrep_out[order]
    return masses, log, jrep_out


def mass_laplace_oracle(m: float, t: float, lam: float, beta: float) -> float:
    """Closed-form E exp(-lam * total mass at t) for the limiting CSBP."""
    if min(m, t, lam) <= 0 or not 0 < beta < 1:
        raise ValueError("all arguments must be positive, beta in (0,1)")
    v = (lam ** -beta + beta * t) ** (-1.0 / beta)
    return math.exp(-m * v)


def extinction_prob_oracle(m: float, t: float, beta: float) -> float:
    """Closed-form P{total mass at t is 0} for the limiting CSBP."""
    if min(m, t) <= 0 or not 0 < beta < 1:
        raise ValueError("all arguments must be positive, beta in (0,1)")
    return math.exp(-m * (beta * t) ** (-1.0 / beta))


@dataclass(frozen=True)
class TauTailReport:
    """P{first big jump before t} estimates against the analytic rate."""

    K_ladder: tuple[float, ...]
    estimates: tuple[EstimateWithError, ...]
    analytic_rates: tuple[float, ...]


def tau_tail_experiment(params: EngineParams, initial_mass: float, reps: int,
                        K_ladder: Sequence[float] | None = None
                        ) -> TauTailReport:
    """Estimate P{tau_K <= horizon} on a K-ladder from one jump-logged batch.

    The analytic comparison value is t * mass * K^{-1-beta}, the rate bound
    governing the tail of the first-big-jump time.
    """
    if reps < 2:
        raise ValueError("reps must be at least 2")
    if K_ladder is None:
        if params.K is None:
            raise ValueError("K must be finite")
        K_ladder = [params.K]
    K_ladder = sorted(float(K) for K in K_ladder)
    thr = K_ladder[0]
    p = EngineParams(params.beta, params.d, params.mass_scale, params.horizon,
                     params.snapshot_times, K=None, seed=params.seed,
                     jump_log_threshold=thr)
    _, log, jrep = simulate_mass(p, initial_mass, reps, log_jumps=True,
                                 seed_stream=11)
    t = params.horizon
    ests = []
    rates = []
    for K in K_ladder:
        big = log.net_mass > K
        n_hit = np.unique(jrep[big]).size
        ests.append(binomial_estimate(int(n_hit), reps))
        rates.append(t * initial_mass * K ** (-1.0 - params.beta))
    return TauTailReport(tuple(K_ladder), tuple(ests), tuple(rates))


def jump_compensator_check(params: EngineParams, initial_mass: float,
                           reps: int, r_ladder: Sequence[float]
                           ) -> dict:
    """Empirical big-jump counts against the compensator prediction.

    Expected number of net jumps > r on [0, t] is
    c_beta * r^{-1-beta} / (1+beta) * integral of mean mass, and the mean
    mass is constant (criticality), so the reference is
    c_beta * r^{-1-beta} / (1+beta) * m * t.
    """
    r_ladder = sorted(float(r) for r in r_ladder)
    if r_ladder[0] * params.mass_scale < 1:
        raise ValueError("smallest r below particle resolution")
    p = EngineParams(params.beta, params.d, params.mass_scale, params.horizon,
                     params.snapshot_times, K=None, seed=params.seed,
                     jump_log_threshold=r_ladder[0])
    _, log, _ = simulate_mass(p, initial_mass, reps, log_jumps=True,
                              jump_cap=20_000_000, seed_stream=13)
    if len(log) == 0:
        raise ValueError("empty jump log")
    cb = jump_rate_constant(params.beta)
    t = params.horizon
    rows = []
    for r in r_ladder:
        count = int(np.count_nonzero(log.net_mass > r))
        predicted = cb * r ** (-1.0 - params.beta) / (1.0 + params.beta) \
            * initial_mass * t * reps
        rows.append({"r": r, "count": count, "predicted": predicted,
                     "ratio": count / predicted})
    return {"rows": rows, "c_beta": cb, "reps": reps,
            "mass": initial_mass, "t": t}


def save_trajectory(traj: CoupledTrajectory, outdir: str | Path) -> None:
    """Persist a run: manifest.json, snapshots/*.csv with kept flag, jumps.csv."""
    out = Path(outdir)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    p = traj.params
    manifest = {
        "beta": p.beta, "d": p.d, "mass_scale": p.mass_scale,
        "horizon": p.horizon, "snapshot_times": list(p.snapshot_times),
        "K": p.K, "seed": p.seed, "pop_cap": p.pop_cap,
        "jump_log_threshold": p.jump_log_threshold,
        "tau_k": traj.tau_k if math.isfinite(traj.tau_k) else None,
        "rng": "xoshiro256+ seeded by splitmix64; replicate seeds from "
               "numpy SeedSequence(seed, spawn_key=(stream,))",
        "format_version": 1,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    for i, (t, m, kp) in enumerate(zip(traj.times, traj.snapshots, traj.kept)):
        path = out / "snapshots" / f"t{i:03d}.csv"
        header = ",".join(f"x{j+1}" for j in range(m.dim)) + ",mass,kept"
        data = np.column_stack([m.positions, m.masses, kp.astype(float)])
        np.savetxt(path, data, delimiter=",", header=header, comments="",
                   fmt="%.17g")
    traj.jump_log.to_csv(out / "jumps.csv")


def load_trajectory(outdir: str | Path) -> CoupledTrajectory:
    out = Path(outdir)
    with open(out / "manifest.json") as fh:
        man = json.load(fh)
    params = EngineParams(man["beta"], man["d"], man["mass_scale"],
                          man["horizon"], tuple(man["snapshot_times"]),
                          K=man["K"], seed=man["seed"],
                          pop_cap=man["pop_cap"],
                          jump_log_threshold=man["jump_log_threshold"])
    snaps = []
    kept = []
    for path in sorted((out / "snapshots").glob("t*.csv")):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            data = data.reshape(0, params.d + 2)
        snaps.append(AtomicMeasure(data[:, :params.d], data[:, params.d],
                                   params.d))
        kept.append(data[:, params.d + 1].astype(np.uint8))
    jdata = np.loadtxt(out / "jumps.csv", delimiter=",", skiprows=1, ndmin=2)
    if jdata.size == 0:
        jdata = jdata.reshape(0, params.d + 3)
    log = JumpLog(jdata[:, 0], jdata[:, 1:1 + params.d],
                  jdata[:, 1 + params.d], jdata[:, 2 + params.d].astype(bool))
    tau = man["tau_k"] if man["tau_k"] is not None else math.inf
    return CoupledTrajectory(params, params.snapshot_times, tuple(snaps),
                             tuple(kept), log, tau)
