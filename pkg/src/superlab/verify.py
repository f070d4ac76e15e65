"""Verification suite: 14 acceptance criteria over the whole laboratory.

Each criterion is a function of a VerifyContext and returns a
CriterionResult with a measured value, tolerance, and pass flag.  Two
tiers: "fast" shrinks replicate counts and particle resolution for smoke
runs, "full" runs the pinned parameters the criteria are stated at.
Expensive artifacts (mass ensembles, the Lebesgue-scaling ensemble, the
PDE constant) are cached on the context and shared between criteria.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .clusters import (cluster_hit_prob, estimate_a_h, eta_prob_from_xi,
                       multi_hit_count, xi_prob_from_eta)
from .engine import (EngineParams, extinction_prob_oracle,
                     jump_compensator_check, mass_laplace_oracle,
                     simulate_coupled, simulate_mass, tau_tail_experiment)
from .hitting import (asymptotic_constant, extinction_equivalence,
                      hit_counts, sandwich_check)
from .measures import AtomicMeasure, heat_kernel_radial
from .neighborhood import default_test_fns, scaling_curve, validity_band
from .offspring import (build_offspring_law, levy_identity_residual,
                        tail_first_moment, tail_sum)
from .pde import (estimate_c_beta_d, heat_convolve_bump, solve_radial,
                  v0_ode, ConstantEstimate)
from .stats import loglog_slope

BETA = 0.8
DIM = 3

OUT_OF_SCOPE = [
    "almost-sure and vague convergence as such: single-path statements are "
    "replaced by ensemble/L1 surrogates at particle resolution",
    "exact values of the truncated-cluster normalizer from its defining "
    "ODE: the normalizer is measured and only its bracket is asserted",
    "behavior of the limiting measure-valued process below the particle "
    "resolution scale (the validity band excludes it explicitly)",
]


@dataclass
class CriterionResult:
    cid: int
    name: str
    target: str
    measured: str
    tolerance: str
    passed: bool
    skipped: bool = False
    reason: str = ""
    runtime_s: float = 0.0
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        if self.skipped:
            status = "SKIP"
        else:
            status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] criterion {self.cid:2d} {self.name}: "
                f"measured {self.measured} vs {self.target} "
                f"(tol {self.tolerance}, {self.runtime_s:.1f}s)"
                + (f" [{self.reason}]" if self.reason else ""))


@dataclass
class VerifyContext:
    tier: str = "full"
    seed: int = 20260826
    cache: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tier not in ("fast", "full"):
            raise ValueError("tier must be 'fast' or 'full'")

    @property
    def full(self) -> bool:
        return self.tier == "full"


def _timed(fn: Callable[[], CriterionResult]) -> CriterionResult:
    t0 = time.time()
    res = fn()
    res.runtime_s = time.time() - t0
    return res


# ---------------------------------------------------------------- criterion 1

def criterion_1(ctx: VerifyContext) -> CriterionResult:
    law = build_offspring_law(BETA)
    p = law.probs
    M = law.tail_cutoff
    errs = [
        abs(p[0] - 1.0 / (1.0 + BETA)),
        abs(p[1]),
        abs(p[2] - BETA / 2.0),
        abs(p.sum() + tail_sum(BETA, M) - 1.0),
    ]
    ks = np.arange(M + 1)
    mean = float(np.dot(ks, p)) + tail_first_moment(BETA, M) \
        + tail_sum(BETA, M)
    errs.append(abs(mean - 1.0))
    k = np.arange(2, M)
    rec = np.max(np.abs(p[k + 1] * (k + 1) - p[k] * (k - 1 - BETA)))
    errs.append(float(rec))
    worst = max(errs)
    return CriterionResult(
        1, "offspring-law identities", "all identities exact",
        f"max deviation {worst:.2e}", "1e-10", worst <= 1e-10,
        details={"errors": errs})


# ------------------------------------------------------- criteria 2 and 3

def _mass_grid(ctx: VerifyContext) -> dict:
    if "mass_grid" not in ctx.cache:
        N, reps = (10_000, 2000) if ctx.full else (2000, 300)
        out = {"N": N, "reps": reps, "masses": {}}
        for m in (0.5, 1.0):
            p = EngineParams(BETA, DIM, N, 1.0, (0.25, 1.0), seed=ctx.seed)
            masses, _, _ = simulate_mass(p, m, reps,
                                         seed_stream=101 + int(2 * m))
            out["masses"][m] = masses
        ctx.cache["mass_grid"] = out
    return ctx.cache["mass_grid"]


def criterion_2(ctx: VerifyContext) -> CriterionResult:
    grid = _mass_grid(ctx)
    reps = grid["reps"]
    worst = 0.0
    details = []
    for m, masses in grid["masses"].items():
        for i, t in enumerate((0.25, 1.0)):
            for lam in (0.5, 2.0):
                emp = np.exp(-lam * masses[:, i])
                mean = float(emp.mean())
                se = float(emp.std(ddof=1) / math.sqrt(reps))
                oracle = mass_laplace_oracle(m, t, lam, BETA)
                z = abs(mean - oracle) / se
                worst = max(worst, z)
                details.append({"m": m, "t": t, "lam": lam, "emp": mean,
                                "oracle": oracle, "z": z})
    return CriterionResult(
        2, "total-mass Laplace functional", "engine matches closed form",
        f"max |z| = {worst:.2f}", "3 stderr", worst <= 3.0,
        details={"grid": details, "reps": reps, "N": grid["N"]})


def criterion_3(ctx: VerifyContext) -> CriterionResult:
    grid = _mass_grid(ctx)
    reps = grid["reps"]
    worst = 0.0
    details = []
    for m, masses in grid["masses"].items():
        for i, t in enumerate((0.25, 1.0)):
            p_hat = float(np.mean(masses[:, i] == 0.0))
            oracle = extinction_prob_oracle(m, t, BETA)
            se = math.sqrt(max(p_hat * (1 - p_hat),
                               oracle * (1 - oracle)) / reps)
            z = abs(p_hat - oracle) / se
            worst = max(worst, z)
            details.append({"m": m, "t": t, "emp": p_hat, "oracle": oracle,
                            "z": z})
    return CriterionResult(
        3, "extinction probability", "engine matches closed form",
        f"max |z| = {worst:.2f}", "3 stderr", worst <= 3.0,
        details={"grid": details, "reps": reps, "N": grid["N"]})


# ---------------------------------------------------------------- criterion 4

def criterion_4(ctx: VerifyContext) -> CriterionResult:
    reps = 500 if ctx.full else 60
    mu = AtomicMeasure.point([0.0, 0.0, 0.0], 1.0)
    violations = 0
    taus_seen = 0
    for r in range(reps):
        p = EngineParams(BETA, DIM, 1000, 0.5, (0.1, 0.3, 0.5), K=0.05,
                         seed=ctx.seed + 1000 + r)
        traj = simulate_coupled(p, mu)
        if not traj.coupling_ok():
            violations += 1
        if math.isfinite(traj.tau_k):
            taus_seen += 1
            big = traj.jump_log.truncated
            if big.any():
                first_big = float(traj.jump_log.times[big][0])
                if abs(first_big - traj.tau_k) > 0.0:
                    violations += 1
        for kp in traj.kept:
            if kp.size and not np.isin(kp, (0, 1)).all():
                violations += 1
    # determinism: identical params reproduce identical snapshots
    p = EngineParams(BETA, DIM, 1000, 0.5, (0.1, 0.5), K=0.05,
                     seed=ctx.seed + 77)
    t1 = simulate_coupled(p, mu)
    t2 = simulate_coupled(p, mu)
    for a, b in zip(t1.snapshots, t2.snapshots):
        if not (np.array_equal(a.positions, b.positions)
                and np.array_equal(a.masses, b.masses)):
            violations += 1
    # no truncation: everything kept
    p_inf = EngineParams(BETA, DIM, 1000, 0.5, (0.5,), seed=ctx.seed + 78)
    t_inf = simulate_coupled(p_inf, mu)
    if t_inf.kept[0].size and not np.all(t_inf.kept[0] == 1):
        violations += 1
    return CriterionResult(
        4, "coupling invariants", "0 violations",
        f"{violations} violations over {reps} coupled replicates "
        f"({taus_seen} with a big jump)", "exact", violations == 0,
        details={"reps": reps, "taus_seen": taus_seen})


# ---------------------------------------------------------------- criterion 5

def criterion_5(ctx: VerifyContext) -> CriterionResult:
    reps = 200_000 if ctx.full else 60_000
    params = EngineParams(BETA, DIM, 300, 0.25, (0.25,), seed=ctx.seed)
    rep = tau_tail_experiment(params, 0.5, reps, K_ladder=(0.5, 1.0, 2.0, 4.0))
    K = np.array(rep.K_ladder)
    P = np.array([e.value for e in rep.estimates])
    se_p = np.array([e.stderr for e in rep.estimates])
    # weighted log-log fit; the rare large-K points carry most noise
    w = (P / se_p) ** 2
    x = np.log(K) - np.average(np.log(K), weights=w)
    slope = float(np.sum(w * x * np.log(P)) / np.sum(w * x * x))
    se = float(math.sqrt(1.0 / np.sum(w * x * x)))
    target = -(1.0 + BETA)
    ok = abs(slope - target) <= 0.1
    return CriterionResult(
        5, "first-big-jump tail scaling", f"log-log slope {target}",
        f"slope {slope:.3f} (se {se:.3f})", "+/- 0.1", ok,
        details={"K": list(K), "P": list(P), "stderr": list(se_p),
                 "analytic_rates": list(rep.analytic_rates),
                 "reps": reps})


# ---------------------------------------------------------------- criterion 6

def criterion_6(ctx: VerifyContext) -> CriterionResult:
    lam_grid = np.array([0.5, 1.0, 2.0, 5.0, 10.0])
    levy_res = float(np.max(np.abs(levy_identity_residual(BETA, lam_grid))))
    if levy_res > 1e-8:
        return CriterionResult(
            6, "jump compensator", "rate-constant oracle",
            f"Levy identity residual {levy_res:.2e}", "1e-8", False)
    N, reps = (10_000, 400) if ctx.full else (3000, 120)
    r_ladder = (0.01, 0.02, 0.04, 0.08) if ctx.full else (0.02, 0.04, 0.08)
    params = EngineParams(BETA, DIM, N, 0.25, (0.25,), seed=ctx.seed)
    rep = jump_compensator_check(params, 1.0, reps, r_ladder)
    rows = rep["rows"]
    r = np.array([row["r"] for row in rows])
    counts = np.array([row["count"] for row in rows], dtype=float)
    slope, se = loglog_slope(r, counts)
    ratios = [row["ratio"] for row in rows]
    slope_ok = abs(slope - (-(1.0 + BETA))) <= 0.1
    level_ok = all(abs(x - 1.0) <= 0.15 for x in ratios)
    return CriterionResult(
        6, "jump compensator", "slope -1.8, level ratio 1",
        f"slope {slope:.3f}, level ratios "
        + "/".join(f"{x:.3f}" for x in ratios),
        "slope +/- 0.1, level 15%, oracle 1e-8",
        slope_ok and level_ok,
        details={"levy_residual": levy_res, "rows": rows, "reps": reps,
                 "N": N})


# ---------------------------------------------------------------- criterion 7

def criterion_7(ctx: VerifyContext) -> CriterionResult:
    reps = 8000 if ctx.full else 1500
    failures = []
    details = []
    for h in (0.01, 0.03, 0.1):
        # keep the particle-vs-limit survival bias well under the stderr
        N = int(math.ceil((150.0 / (BETA * h)) ** 1.25))
        lower = (BETA * h) ** (1.0 / BETA)
        upper = 2.0 * lower
        params = EngineParams(BETA, DIM, N, h, (h,), seed=ctx.seed)
        est_inf = estimate_a_h(h, None, params, reps, seed_stream=211)
        est_k = estimate_a_h(h, 1.0, params, reps, seed_stream=212)
        ok_inf = abs(est_inf.value - lower) <= 3.0 * est_inf.stderr
        ok_k = (est_k.value >= lower - 3.0 * est_k.stderr
                and est_k.value <= upper + 3.0 * est_k.stderr)
        if not ok_inf:
            failures.append(f"h={h} untruncated")
        if not ok_k:
            failures.append(f"h={h} truncated")
        details.append({"h": h, "N": N, "lower": lower, "upper": upper,
                        "a_inf": est_inf.value, "a_inf_se": est_inf.stderr,
                        "a_K": est_k.value, "a_K_se": est_k.stderr})
    return CriterionResult(
        7, "cluster normalizer bracket",
        "a(h) in [(beta h)^{1/beta}, 2(beta h)^{1/beta}]",
        "all in bracket" if not failures else "; ".join(failures),
        "3 stderr", not failures, details={"rows": details, "reps": reps})


# ---------------------------------------------------------------- criterion 8

def criterion_8(ctx: VerifyContext) -> CriterionResult:
    # round-trip identity, exact
    t = 0.7
    ps = np.concatenate([np.logspace(-9, -0.05, 40), [0.0]])
    rt = max(abs(xi_prob_from_eta(eta_prob_from_xi(p, t, BETA), t, BETA) - p)
             for p in ps)
    if rt > 1e-12:
        return CriterionResult(
            8, "cluster/process transfer identities", "round trip exact",
            f"round-trip error {rt:.2e}", "1e-12", False)
    # cross-estimator transfer at one probe
    N = 5000 if ctx.full else 2000
    reps_hit = 2500 if ctx.full else 500
    n_clusters = 3000 if ctx.full else 500
    m, t, eps = 0.5, 0.5, 0.3
    center = np.array([0.5, 0.0, 0.0])
    mu = AtomicMeasure.point([0.0, 0.0, 0.0], m)
    params = EngineParams(BETA, DIM, N, t, (t,), seed=ctx.seed)
    run = hit_counts(mu, t, center[None, :], [eps], params, reps_hit,
                     seed_stream=221)
    p_hat = run["hits"][0, 0] / reps_hit
    q_transfer = eta_prob_from_xi(p_hat, t, BETA) / m
    se_p = math.sqrt(p_hat * (1 - p_hat) / reps_hit)
    se_tr = (BETA * t) ** (1.0 / BETA) * se_p / ((1.0 - p_hat) * m)
    direct = cluster_hit_prob(np.zeros(3), t, eps, center, params,
                              n_clusters)
    comb = math.hypot(se_tr, direct.stderr)
    z = abs(q_transfer - direct.value) / comb
    return CriterionResult(
        8, "cluster/process transfer identities",
        "round trip exact; transfer matches direct cluster estimate",
        f"round-trip {rt:.1e}; transfer z = {z:.2f}",
        "1e-12 / 3 combined stderr", z <= 3.0,
        details={"q_transfer": q_transfer, "q_direct": direct.value,
                 "se": comb, "p_hat": p_hat, "N": N})


# ---------------------------------------------------------------- criterion 9

def criterion_9(ctx: VerifyContext) -> CriterionResult:
    # linear case vs Gaussian-convolution quadrature
    sol = solve_radial(BETA, DIM, 1.0, 0.5, out_times=[0.5], reaction=False,
                       dr=0.01)
    xs = np.linspace(0.0, 3.0, 25)
    lin_err = float(np.max(np.abs(sol.at(0.5, xs) - heat_convolve_bump(0.5, xs))))
    # flat case matches the reaction ODE closed form
    flat = solve_radial(BETA, DIM, 2.0, 1.0, out_times=[1.0],
                        profile=lambda r: np.ones_like(r),
                        neumann_outer=True)
    flat_err = float(abs(flat.at(1.0, 0.5) - v0_ode(1.0, 2.0, BETA)))
    # Richardson refinement: halving dr shrinks the change
    vals = [solve_radial(BETA, DIM, 2.0, 0.5, out_times=[0.5],
                         dr=dr).at(0.5, 0.0) for dr in (0.04, 0.02, 0.01)]
    d1, d2 = abs(vals[1] - vals[0]), abs(vals[2] - vals[1])
    rich_ok = d2 < d1
    ok = lin_err <= 1e-3 and flat_err <= 1e-6 and rich_ok
    return CriterionResult(
        9, "radial solver validation",
        "linear 1e-3, flat 1e-6, refinement contracts",
        f"linear {lin_err:.1e}, flat {flat_err:.1e}, "
        f"refine {d1:.1e}->{d2:.1e}", "1e-3 / 1e-6 / monotone", ok,
        details={"lin_err": lin_err, "flat_err": flat_err,
                 "richardson": [d1, d2]})


# ----------------------------------------------- shared Lebesgue ensemble

LEB_EPS_LADDER = (0.5, 0.4, 0.32, 0.25, 0.2, 0.16, 0.125, 0.1, 0.08,
                  0.063, 0.05, 0.04)


def _leb_runs(ctx: VerifyContext, N: int, want: int, max_runs: int,
              ladder, seed_base: int) -> dict:
    """Ensemble of coupled paths with scaled neighborhood numerators.

    Stores per replicate the scaled volume s(eps) = eps^{2/beta-d} *
    leb(eps-neighborhood) and the total mass, for the full and the kept
    (truncated) component, so both mass-weighted and per-path curves can
    be formed later.
    """
    m, t, K = 0.5, 0.5, 0.5
    mu = AtomicMeasure.point([0.0, 0.0, 0.0], m)
    fns = default_test_fns(1.0)[:2]  # constant and the origin bump
    s_full, w_full, s_kept, w_kept, bands = [], [], [], [], []
    r = 0
    while len(s_full) < want and r < max_runs:
        p = EngineParams(BETA, DIM, N, t, (t,), K=K,
                         seed=seed_base + r, pop_cap=4_000_000,
                         jump_log_threshold=K)
        traj = simulate_coupled(p, mu)
        r += 1
        snap = traj.full(0)
        if len(snap) == 0:
            continue
        kept = traj.truncated(0)
        curve_f = scaling_curve(snap, ladder, fns, BETA,
                                enforce_band=False)
        xi = np.array([float(np.sum(snap.masses * f(snap.positions)))
                       for f in fns])
        s_full.append(curve_f.scaled_ratio * xi[None, :])
        w_full.append(xi)
        bands.append(validity_band(snap.positions))
        if len(kept) > 0:
            curve_k = scaling_curve(kept, ladder, fns, BETA,
                                    enforce_band=False)
            xi_k = np.array([float(np.sum(kept.masses
                                          * f(kept.positions)))
                             for f in fns])
            s_kept.append(curve_k.scaled_ratio * xi_k[None, :])
            w_kept.append(xi_k)
    return {
        "eps": np.array(sorted(ladder, reverse=True)),
        "t": t, "N": N,
        "s_full": np.array(s_full), "w_full": np.array(w_full),
        "s_kept": np.array(s_kept), "w_kept": np.array(w_kept),
        "band_low": float(np.median([b[0] for b in bands])),
        "band_high": float(np.median([b[1] for b in bands])),
        "surviving": len(s_full), "runs": r,
    }


def _ratio_of_sums(ens: dict, which: str = "full", fidx: int = 1):
    """Mass-weighted ensemble curve with a delta-method stderr.

    fidx selects the test function: 0 is the constant (volume curve,
    edge-effect prone), 1 the origin bump (the compactly supported
    class the vague-convergence statement is about).
    """
    s = ens["s_" + which][:, :, fidx]
    w = ens["w_" + which][:, fidx]
    ratio = s.sum(axis=0) / w.sum()
    n = s.shape[0]
    resid = s - ratio[None, :] * w[:, None]
    se = resid.std(axis=0, ddof=1) * math.sqrt(n) / w.sum()
    return ratio, se


def _lebesgue_ensemble(ctx: VerifyContext) -> dict:
    if "lebesgue" not in ctx.cache:
        if ctx.full:
            ctx.cache["lebesgue"] = _leb_runs(
                ctx, 100_000, 50, 80, LEB_EPS_LADDER[:11], ctx.seed)
        else:
            ctx.cache["lebesgue"] = _leb_runs(
                ctx, 10_000, 24, 48, (0.8,) + LEB_EPS_LADDER[:11],
                ctx.seed)
    return ctx.cache["lebesgue"]


def _lebesgue_fit_ensembles(ctx: VerifyContext) -> list:
    """Large ensembles at cheaper particle densities for the constant fit.

    The mass-weighted ratio curve is dominated by the few heaviest
    surviving paths, so its sampling error at the flatness ensemble's
    replicate count is far too large for a 25% cross-route comparison;
    paths at lower N are cheap enough to buy the precision there.
    """
    if "lebesgue_fit" not in ctx.cache:
        if ctx.full:
            ctx.cache["lebesgue_fit"] = [
                _leb_runs(ctx, 20_000, 300, 400, LEB_EPS_LADDER[:10],
                          ctx.seed + 5000),
                _leb_runs(ctx, 60_000, 100, 140, LEB_EPS_LADDER[:10],
                          ctx.seed + 9000),
            ]
        else:
            ctx.cache["lebesgue_fit"] = [
                _leb_runs(ctx, 2500, 50, 80, LEB_EPS_LADDER[:9],
                          ctx.seed + 5000),
            ]
    return ctx.cache["lebesgue_fit"]


def _c_lebesgue(ctx: VerifyContext) -> ConstantEstimate:
    from .hitting import fit_hitting_constant
    rows = []
    for ens in [_lebesgue_ensemble(ctx)] + _lebesgue_fit_ensembles(ctx):
        ratio, se = _ratio_of_sums(ens, "full")
        for j, eps in enumerate(ens["eps"]):
            rows.append({
                "eps": float(eps), "N": ens["N"],
                "scaled": float(ratio[j]),
                # floor: residual model error of the sqrt transient form
                "stderr": float(max(se[j], 0.03 * ratio[j])),
                "eps_scaled": float(eps) / math.sqrt(ens["t"]),
                "resolution": ens["N"] * float(eps) ** (2.0 / BETA),
            })
    est = fit_hitting_constant(rows, max_eps_scaled=0.6,
                               min_resolution=8.0,
                               transient_amplitude=_pde_transient(ctx))
    return ConstantEstimate(est.c_beta_d, "lebesgue-ratio",
                            est.error_bar)


def _c_pde(ctx: VerifyContext) -> ConstantEstimate:
    if "c_pde" not in ctx.cache:
        ctx.cache["c_pde"] = estimate_c_beta_d(BETA, DIM)
    return ctx.cache["c_pde"]


def _pde_transient(ctx: VerifyContext) -> float:
    if "pde_alpha" not in ctx.cache:
        from .pde import scaling_transient
        ctx.cache["pde_alpha"] = scaling_transient(BETA, DIM)
    return ctx.cache["pde_alpha"]


def _c_hitting(ctx: VerifyContext) -> ConstantEstimate:
    if "c_hit" not in ctx.cache:
        if ctx.full:
            N = 10_000
            t_reps = {0.25: 2000, 1.0: 800}
        else:
            N = 2000
            t_reps = {0.25: 800, 1.0: 400}
        m = 0.5
        mu = AtomicMeasure.point([0.0, 0.0, 0.0], m)
        params = EngineParams(BETA, DIM, N, 1.0, (1.0,), seed=ctx.seed)
        ctx.cache["c_hit"] = asymptotic_constant(
            mu, t_reps, (0.1, 0.14, 0.2, 0.28), params)
    return ctx.cache["c_hit"]


def criterion_10(ctx: VerifyContext) -> CriterionResult:
    ests = [_c_pde(ctx), _c_hitting(ctx), _c_lebesgue(ctx)]
    vals = {e.method: e.c_beta_d for e in ests}
    pairs_ok = all(a.agrees(b, 0.25) for i, a in enumerate(ests)
                   for b in ests[i + 1:])
    positive = all(e.c_beta_d > 0 for e in ests)
    measured = ", ".join(f"{k}={v:.3f}" for k, v in vals.items())
    return CriterionResult(
        10, "constant triangulation", "three positive estimates agree",
        measured, "pairwise within 25%", positive and pairs_ok,
        details={"estimates": [
            {"method": e.method, "value": e.c_beta_d, "err": e.error_bar}
            for e in ests]})


def criterion_11(ctx: VerifyContext) -> CriterionResult:
    N, reps = (2000, 4000) if ctx.full else (1000, 600)
    m = 0.5
    mu = AtomicMeasure.point([0.0, 0.0, 0.0], m)
    center = np.array([0.5, 0.0, 0.0])
    params = EngineParams(BETA, DIM, N, 2.0, (2.0,), K=0.5, seed=ctx.seed)
    rep = sandwich_check(mu, center, (0.5, 1.0, 2.0), (0.2, 0.3, 0.4),
                         params, reps)
    n_pts = len(rep["rows"])
    coupled_ok = all(r["scaled_K"] <= r["scaled"] + 1e-12
                     for r in rep["rows"])
    positive = all(r["p_hat"] > 0 for r in rep["rows"])
    ok = (n_pts >= 9 and rep["c_low"] > 0 and math.isfinite(rep["c_up"])
          and positive and coupled_ok
          and rep["c_up_K"] <= rep["c_up"] + 1e-12)
    return CriterionResult(
        11, "hitting-rate heat-kernel sandwich",
        "fitted c_low > 0, c_up finite, truncated under full",
        f"c_low {rep['c_low']:.3f}, c_up {rep['c_up']:.3f}, "
        f"c_up_K {rep['c_up_K']:.3f} on {n_pts} grid points",
        "fitted constants exist", ok,
        details={"rows": rep["rows"], "reps": reps, "N": N})


def criterion_12(ctx: VerifyContext) -> CriterionResult:
    from .neighborhood import overlap_defect
    # The clean exponent regime needs atom spacing << eps << sqrt(h):
    # eps <= 0.23 sqrt(h) with N eps^{2/beta} >= 30 at the smallest rung.
    # Decomposing at age h = t keeps the event count affordable at that N.
    N = 60_000
    m, t, h = 0.5, 0.25, 0.25
    ladder = (0.05, 0.066, 0.087, 0.115)
    mu = AtomicMeasure.point([0.0, 0.0, 0.0], m)
    target = 2.0 * (DIM - 2.0 / BETA)
    reps_mh = 400 if ctx.full else 60
    params = EngineParams(BETA, DIM, N, t, (t,), K=0.5, seed=ctx.seed)
    mh = multi_hit_count(t, h, ladder, np.zeros(3), params, reps_mh, mu)
    mh_eps = np.array([r["eps"] for r in mh["rows"]])
    mh_val = np.array([r["estimate"] for r in mh["rows"]])
    mh_slope, mh_se = loglog_slope(mh_eps, mh_val)
    reps_od = 100 if ctx.full else 20
    od = overlap_defect(t, h, ladder, params, reps_od, mu)
    od_eps = np.array([r["eps"] for r in od["rows"]])
    od_val = np.array([r["estimate"] for r in od["rows"]])
    od_slope, od_se = loglog_slope(od_eps, od_val)
    ok = (abs(mh_slope - target) <= 0.3 and abs(od_slope - target) <= 0.3)
    return CriterionResult(
        12, "multi-hit and overlap exponents", f"slope {target}",
        f"multi-hit {mh_slope:.3f}, overlap {od_slope:.3f}", "+/- 0.3", ok,
        details={"multi_hit": mh["rows"], "overlap": od["rows"],
                 "reps": [reps_mh, reps_od]})


def criterion_13(ctx: VerifyContext) -> CriterionResult:
    ens = _lebesgue_ensemble(ctx)
    eps = ens["eps"]
    lo, hi = ens["band_low"], ens["band_high"]
    results = {}
    curves = {}
    for name in ("full", "kept"):
        curve, _ = _ratio_of_sums(ens, name)
        curves[name] = curve
        best = math.inf
        best_decade = None
        for i in range(eps.size):
            if not (lo <= eps[i] <= hi):
                continue
            sel = (eps <= eps[i]) & (eps >= eps[i] / 10.0) & (eps >= lo)
            if eps[sel].size < 3 or eps[sel].min() > eps[i] / 8.0:
                continue  # not a full decade inside the band
            vals = curve[sel]
            ratio = float(vals.max() / vals.min())
            if ratio < best:
                best = ratio
                best_decade = (float(eps[sel].min()), float(eps[i]))
        results[name] = (best, best_decade)
    worst = max(results["full"][0], results["kept"][0])
    ok = worst <= 1.3 and ens["surviving"] >= (50 if ctx.full else 10)
    # Per-path diagnostics on the same decade: pathwise curves converge
    # faster for heavy paths, so record how much surviving mass already
    # satisfies the flatness bound path by path.
    per_path = {}
    if results["full"][1] is not None:
        d_lo, d_hi = results["full"][1]
        sel = (eps >= d_lo) & (eps <= d_hi)
        s = ens["s_full"][:, sel, 1]
        w = ens["w_full"][:, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            pc = s / w[:, None]
            path_ratio = pc.max(axis=1) / pc.min(axis=1)
        good = np.isfinite(path_ratio) & (path_ratio <= 1.3)
        per_path = {
            "decade": [d_lo, d_hi],
            "path_ratios": list(np.sort(path_ratio[np.isfinite(path_ratio)])),
            "mass_share_flat": float(w[good].sum() / w.sum()),
        }
    return CriterionResult(
        13, "Lebesgue-scaling flatness", "max/min over a decade",
        f"full {results['full'][0]:.3f} on {results['full'][1]}, "
        f"kept {results['kept'][0]:.3f} on {results['kept'][1]}, "
        f"{ens['surviving']} surviving", "<= 1.3", ok,
        details={"band": [lo, hi], "eps": list(eps),
                 "curve_full": list(curves["full"]),
                 "curve_kept": list(curves["kept"]),
                 "per_path": per_path,
                 "surviving": ens["surviving"]})


def criterion_14(ctx: VerifyContext) -> CriterionResult:
    reps = 2000 if ctx.full else 300
    m = 0.5
    mu = AtomicMeasure.point([0.0, 0.0, 0.0], m)
    params = EngineParams(BETA, DIM, 1000, 8.0, (8.0,), seed=ctx.seed)
    rep = extinction_equivalence(mu, (1.0, 2.0, 4.0, 8.0),
                                 np.array([0.5, 0.0, 0.0]), 0.5,
                                 params, reps)
    surv_ok = all(
        abs(r["survival"] - r["survival_oracle"])
        <= 3.0 * math.sqrt(max(r["survival_oracle"]
                               * (1 - r["survival_oracle"]), 1e-12) / reps)
        + 0.01
        for r in rep["rows"])
    ok = (rep["monotone_decline"] and math.isfinite(rep["fitted_C"])
          and rep["fitted_C"] > 0 and surv_ok)
    p_line = "/".join(f"{r['p_hit']:.4f}" for r in rep["rows"])
    return CriterionResult(
        14, "extinction equivalence diagnostics",
        "monotone decline, single bound constant",
        f"p_hit {p_line}, fitted C {rep['fitted_C']:.2f}, "
        f"monotone {rep['monotone_decline']}",
        "monotone within 3 stderr", ok, details=rep)


CRITERIA: dict[int, Callable[[VerifyContext], CriterionResult]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
    5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8,
    9: criterion_9, 10: criterion_10, 11: criterion_11, 12: criterion_12,
    13: criterion_13, 14: criterion_14,
}


@dataclass
class VerifyReport:
    tier: str
    seed: int
    results: list[CriterionResult]
    out_of_scope: list[str]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results if not r.skipped)

    def to_json(self, path) -> None:
        payload = {
            "tier": self.tier, "seed": self.seed,
            "overall": "pass" if self.passed else "fail",
            "out_of_scope": self.out_of_scope,
            "criteria": [{
                "id": r.cid, "name": r.name, "target": r.target,
                "measured": r.measured, "tolerance": r.tolerance,
                "passed": r.passed, "skipped": r.skipped,
                "reason": r.reason, "runtime_s": r.runtime_s,
                "details": _jsonable(r.details),
            } for r in self.results],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)

    def render(self) -> str:
        lines = [r.line() for r in self.results]
        lines.append(f"overall: {'pass' if self.passed else 'fail'} "
                     f"(tier {self.tier}, seed {self.seed})")
        return "\n".join(lines)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def run_verify(tier: str = "full", seed: int = 20260826,
               only: list[int] | None = None,
               progress: Callable[[str], None] | None = None
               ) -> VerifyReport:
    ctx = VerifyContext(tier=tier, seed=seed)
    results = []
    for cid in sorted(CRITERIA):
        if only is not None and cid not in only:
            results.append(CriterionResult(
                cid, "", "", "", "", passed=True, skipped=True,
                reason="not selected"))
            continue
        try:
            res = _timed(lambda: CRITERIA[cid](ctx))
        except Exception as exc:  # record, never hide, a crashed criterion
            res = CriterionResult(
                cid, CRITERIA[cid].__name__, "", f"error: {exc}", "",
                passed=False, reason=type(exc).__name__)
        results.append(res)
        if progress is not None:
            progress(res.line())
    return VerifyReport(tier, seed, results, OUT_OF_SCOPE)
