"""Cluster sampling and Cox-decomposition diagnostics.

An h-cluster is the descendant cloud, h time units later, of a single
ancestor, conditioned on survival.  At particle level a cluster is sampled
by rejection: run the engine from one particle of mass 1/N and accept on
survival to age h.  The ancestors of the time-t population, seen from time
s = t - h, form a Cox process directed by the time-s measure divided by
the normalizer a(h); for the untruncated process a(h) = (beta h)^{1/beta}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as sp_stats

from . import _sim
from .engine import (EngineParams, MODE_PLAIN, MODE_TRUNCATED_ONLY,
                     _check_status, simulate_mass)
from .measures import AtomicMeasure, convolve_heat, heat_kernel
from .stats import EstimateWithError, derive_seeds


@dataclass(frozen=True)
class ClusterSample:
    root: np.ndarray
    age: float
    measure: AtomicMeasure
    truncated: bool
    attempts: int

    def __post_init__(self):
        if len(self.measure) == 0:
            raise ValueError("clusters are conditioned on survival")
        if self.age <= 0:
            raise ValueError("age must be positive")


@dataclass(frozen=True)
class AncestorField:
    time: float
    points: np.ndarray
    intensity_normalizer: float

    def __post_init__(self):
        if self.intensity_normalizer <= 0:
            raise ValueError("normalizer must be positive")


class SamplingFailureError(RuntimeError):
    """Rejection sampling exhausted its attempt budget."""

    def __init__(self, attempts: int, found: int):
        rate = found / attempts if attempts else 0.0
        super().__init__(
            f"no surviving cluster in {attempts} attempts "
            f"(acceptance rate so far {rate:.3g})")
        self.attempts = attempts
        self.acceptance_rate = rate


def survival_prob_oracle(h: float, beta: float, mass: float) -> float:
    """P{a seed of the given mass has descendants at age h} in the limit."""
    return 1.0 - math.exp(-mass * (beta * h) ** (-1.0 / beta))


def _cluster_mode(params: EngineParams) -> int:
    return MODE_TRUNCATED_ONLY if params.K is not None else MODE_PLAIN


def sample_clusters(x: np.ndarray, h: float, params: EngineParams,
                    n_clusters: int, max_attempts: int | None = None,
                    seed_stream: int = 21) -> tuple[list[np.ndarray], int]:
    """Sample surviving h-clusters rooted at x.

    Returns (positions per cluster, attempts used).  Each cluster is a
    (k, d) position array of particles of mass 1/N.
    """
    if h <= 0:
        raise ValueError("age must be positive")
    x = np.asarray(x, dtype=float)
    law = params.law()
    p_surv = survival_prob_oracle(h, params.beta, 1.0 / params.mass_scale)
    if max_attempts is None:
        max_attempts = int(20 * n_clusters / p_surv) + 100
    mean_size = int(1.0 / p_surv) + 8  # conditional mean mass is 1/(N p_surv)
    buf_rows = 12 * mean_size * n_clusters
    cap = max(200 * mean_size, 10_000)
    seed = derive_seeds(params.seed, 1, stream=seed_stream)[0]
    pos, offsets, attempts, status = _sim.cluster_batch(
        x, h, n_clusters, max_attempts, params.rho, law.cumulative,
        params.beta, _cluster_mode(params), params.clip_n, cap, buf_rows,
        seed)
    _check_status(status)
    found = offsets.size - 1
    if found < n_clusters:
        raise SamplingFailureError(attempts, found)
    clusters = [pos[offsets[i]:offsets[i + 1]].copy() for i in range(found)]
    return clusters, attempts


def sample_cluster(x: np.ndarray, h: float, params: EngineParams,
                   max_attempts: int = 1_000_000) -> ClusterSample:
    clusters, attempts = sample_clusters(x, h, params, 1, max_attempts)
    pos = clusters[0]
    w = np.full(pos.shape[0], 1.0 / params.mass_scale)
    return ClusterSample(np.asarray(x, dtype=float), h,
                         AtomicMeasure(pos, w, params.d),
                         params.K is not None, attempts)


def estimate_a_h(h: float, K: float | None, params: EngineParams,
                 reps: int, initial_mass: float | None = None,
                 seed_stream: int = 23) -> EstimateWithError:
    """Estimate the cluster-intensity normalizer a(h).

    Surviving-cluster counts from mass m are Poisson(m / a(h)), so
    a(h) = -m / log P{extinct by h}; P is estimated by Monte Carlo and the
    error bar follows by the delta method.
    """
    if h <= 0:
        raise ValueError("age must be positive")
    if initial_mass is None:
        initial_mass = (params.beta * h) ** (1.0 / params.beta)
    p = EngineParams(params.beta, params.d, params.mass_scale, h, (h,),
                     K=K, seed=params.seed, pop_cap=params.pop_cap)
    masses, _, _ = simulate_mass(p, initial_mass, reps, clip=K is not None,
                                 seed_stream=seed_stream)
    n_ext = int(np.count_nonzero(masses[:, 0] == 0.0))
    if n_ext == 0 or n_ext == reps:
        raise RuntimeError(
            "extinction probability estimate degenerate (0 or 1); "
            "adjust initial mass for this age")
    p_ext = n_ext / reps
    a = -initial_mass / math.log(p_ext)
    sd_p = math.sqrt(p_ext * (1.0 - p_ext) / reps)
    sd_a = initial_mass * sd_p / (p_ext * math.log(p_ext) ** 2)
    return EstimateWithError(a, sd_a, reps)


def eta_prob_from_xi(p: float, t: float, beta: float,
                     normalizer: float | None = None) -> float:
    """Cluster hitting rate from the process hitting probability.

    With Poisson(m/a) ancestors, P{process hits} = 1 - exp(-q/a) where q is
    the mass-weighted cluster rate; this inverts that relation.  The default
    normalizer a = (beta t)^{1/beta} is the untruncated one.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError("probability must lie in [0,1)")
    if normalizer is None:
        normalizer = (beta * t) ** (1.0 / beta)
    return -normalizer * math.log1p(-p)


def xi_prob_from_eta(q: float, t: float, beta: float,
                     normalizer: float | None = None) -> float:
    """Inverse of eta_prob_from_xi."""
    if q < 0:
        raise ValueError("rate must be nonnegative")
    if normalizer is None:
        normalizer = (beta * t) ** (1.0 / beta)
    return -math.expm1(-q / normalizer)


def cluster_hit_prob(x: np.ndarray, h: float, eps: float,
                     center: np.ndarray, params: EngineParams,
                     n_clusters: int) -> EstimateWithError:
    """P{a surviving h-cluster rooted at x puts an atom in the eps-ball}."""
    clusters, _ = sample_clusters(x, h, params, n_clusters)
    center = np.asarray(center, dtype=float)
    hits = 0
    for pos in clusters:
        d2 = np.sum((pos - center) ** 2, axis=1)
        if d2.min() < eps * eps:
            hits += 1
    p = hits / n_clusters
    return EstimateWithError(p, math.sqrt(p * (1 - p) / n_clusters),
                             n_clusters)


def _run_snapshot(x0: np.ndarray, lin0: np.ndarray, params: EngineParams,
                  t: float, mode: int, seed: int):
    kept0 = np.ones(x0.shape[0], dtype=np.uint8)
    out = _sim.spatial_path(np.ascontiguousarray(x0, dtype=np.float64),
                            lin0, kept0, params.rho,
                            params.law().cumulative, params.beta,
                            np.array([t]), mode, params.clip_n,
                            params.pop_cap, np.uint64(seed), 0, 1)
    status, tau, pos, lin, kept, counts, *_ = out
    _check_status(status)
    n = int(counts[0])
    return pos[:n], lin[:n], kept[:n]


def cox_decomposition_check(t: float, h: float, params: EngineParams,
                            reps: int, initial: AtomicMeasure,
                            f=None, ks_level: float = 0.01) -> dict:
    """Two-route consistency of the cluster decomposition at age h.

    Route A simulates through to t.  Route B stops at s = t - h, draws a
    binomial number of surviving ancestors (per-particle survival measured
    on the same engine) and superposes fresh surviving clusters at their
    positions.  Total mass and one test-function integral are compared by
    two-sample Kolmogorov-Smirnov tests.
    """
    if not 0 < h < t:
        raise ValueError("need 0 < h < t")
    if f is None:
        def f(x):
            return np.exp(-0.5 * np.sum(x * x, axis=1))
    s = t - h
    N = params.mass_scale
    w = 1.0 / N
    x0_all = np.repeat(initial.positions,
                       np.rint(initial.masses * N).astype(int), axis=0)
    seeds = derive_seeds(params.seed, 3 * reps, stream=31)
    rng = np.random.default_rng(derive_seeds(params.seed, 1, stream=32)[0])

    # per-particle survival to age h, measured on the same engine
    law = params.law()
    p_surv = survival_prob_oracle(h, params.beta, w)
    probe = 4000
    mean_size = int(1.0 / p_surv) + 8
    seed0 = derive_seeds(params.seed, 1, stream=33)[0]
    _, offs, attempts, status = _sim.cluster_batch(
        np.zeros(params.d), h, probe, int(4 * probe / p_surv), params.rho,
        law.cumulative, params.beta, MODE_PLAIN, 0,
        max(200 * mean_size, 10_000), 8 * probe * mean_size, seed0)
    _check_status(status)
    q_hat = (offs.size - 1) / attempts

    mass_a = np.empty(reps)
    mass_b = np.empty(reps)
    f_a = np.empty(reps)
    f_b = np.empty(reps)
    for r in range(reps):
        lin0 = np.arange(x0_all.shape[0], dtype=np.int64)
        pos_s, _, _ = _run_snapshot(x0_all, lin0, params, s, MODE_PLAIN,
                                    seeds[3 * r])
        # route A: continue the same population to t
        if pos_s.shape[0] > 0:
            lin_s = np.arange(pos_s.shape[0], dtype=np.int64)
            pos_t, _, _ = _run_snapshot(pos_s, lin_s, params, h, MODE_PLAIN,
                                        seeds[3 * r + 1])
        else:
            pos_t = pos_s
        mass_a[r] = pos_t.shape[0] * w
        f_a[r] = f(pos_t).sum() * w if pos_t.shape[0] else 0.0
        # route B: binomial ancestor thinning + fresh surviving clusters
        n_anc = rng.binomial(pos_s.shape[0], q_hat) if pos_s.shape[0] else 0
        if n_anc > 0:
            roots = pos_s[rng.choice(pos_s.shape[0], n_anc, replace=False)]
            total = 0
            fsum = 0.0
            clusters, _ = sample_clusters(
                np.zeros(params.d), h, params, n_anc,
                seed_stream=40 + (int(seeds[3 * r + 2]) & 0xFFFF))
            for root, cpos in zip(roots, clusters):
                shifted = cpos + (root - 0.0)
                total += cpos.shape[0]
                fsum += f(shifted).sum()
            mass_b[r] = total * w
            f_b[r] = fsum * w
        else:
            mass_b[r] = 0.0
            f_b[r] = 0.0
    ks_mass = sp_stats.ks_2samp(mass_a, mass_b)
    ks_f = sp_stats.ks_2samp(f_a, f_b)
    return {
        "ks_mass_pvalue": float(ks_mass.pvalue),
        "ks_f_pvalue": float(ks_f.pvalue),
        "pass": ks_mass.pvalue > ks_level and ks_f.pvalue > ks_level,
        "mean_mass_a": float(mass_a.mean()), "mean_mass_b": float(mass_b.mean()),
        "stderr_mass_a": float(mass_a.std(ddof=1) / np.sqrt(reps)),
        "stderr_mass_b": float(mass_b.std(ddof=1) / np.sqrt(reps)),
        "survival_rate": q_hat, "reps": reps,
    }


def multi_hit_bound(eps: float, t: float, h: float, center: np.ndarray,
                    initial: AtomicMeasure, beta: float, d: int) -> float:
    """Reference scale for the second factorial moment of cluster hits."""
    mu_pt = convolve_heat(initial, t, center)
    mu_p2t = convolve_heat(initial, 2.0 * t, center)
    return eps ** (2.0 * (d - 2.0 / beta)) * (
        h ** (1.0 - d / 2.0) * mu_pt + mu_p2t ** 2)


def multi_hit_count(t: float, h: float, eps_ladder: Sequence[float],
                    ball_center: np.ndarray, params: EngineParams,
                    reps: int, initial: AtomicMeasure) -> dict:
    """Second factorial moment of the number of h-clusters hitting a ball.

    Lineages are reset at s = t - h so each time-s ancestor tags its
    descendants; for each eps the number kappa of distinct lineages with an
    atom in the ball contributes kappa(kappa-1).  The eps-ladder is coupled:
    every eps is evaluated on the same replicates.
    """
    eps_ladder = sorted(float(e) for e in eps_ladder)
    if eps_ladder[0] ** 2 > h or h > t:
        raise ValueError("need eps^2 <= h <= t")
    center = np.asarray(ball_center, dtype=float)
    s = t - h
    N = params.mass_scale
    x0_all = np.repeat(initial.positions,
                       np.rint(initial.masses * N).astype(int), axis=0)
    mode = _cluster_mode(params)
    seeds = derive_seeds(params.seed, 2 * reps, stream=51)
    ne = len(eps_ladder)
    acc = np.zeros(ne)
    acc2 = np.zeros(ne)
    for r in range(reps):
        lin0 = np.arange(x0_all.shape[0], dtype=np.int64)
        pos_s, _, _ = _run_snapshot(x0_all, lin0, params, s, mode,
                                    seeds[2 * r]) if s > 0 else (
            x0_all, None, None)
        if pos_s.shape[0] == 0:
            continue
        lin_s = np.arange(pos_s.shape[0], dtype=np.int64)
        pos_t, lin_t, _ = _run_snapshot(pos_s, lin_s, params, h, mode,
                                        seeds[2 * r + 1])
        if pos_t.shape[0] == 0:
            continue
        dist = np.sqrt(np.sum((pos_t - center) ** 2, axis=1))
        for i, eps in enumerate(eps_ladder):
            kappa = np.unique(lin_t[dist < eps]).size
            v = kappa * (kappa - 1)
            acc[i] += v
            acc2[i] += v * v
    rows = []
    for i, eps in enumerate(eps_ladder):
        mean = acc[i] / reps
        var = acc2[i] / reps - mean ** 2
        se = math.sqrt(max(var, 0.0) / reps)
        bound = multi_hit_bound(eps, t, h, center, initial, params.beta,
                                params.d)
        rows.append({"eps": eps, "estimate": mean, "stderr": se,
                     "bound": bound})
    return {"rows": rows, "reps": reps, "t": t, "h": h}
