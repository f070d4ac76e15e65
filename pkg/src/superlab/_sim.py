"""Numba event-driven kernels for the branching particle engine.

All kernels are exact event simulations: particle lifetimes are exponential
with rate rho per particle, offspring counts are drawn from the tabulated
law with an analytic power-law tail beyond the table, and spatial motion is
Brownian, sampled lazily as exact Gaussian increments at branch times and
snapshot boundaries.  Randomness comes from an explicit xoshiro256+ stream
seeded per replicate, so a replicate is a pure function of its 64-bit seed.

Modes for the coupled/truncated dynamics (threshold clip_n in offspring
excess units, i.e. an event is "big" when k - 1 > clip_n):

  mode 0: plain process, clip_n only flags big jumps (for tau / logging);
  mode 1: truncated process alone: big events produce a single offspring
          (the parent continues with a fresh lifetime);
  mode 2: coupled pair: the full process takes all offspring, the kept
          flags mark the truncated component (parent stays kept, the extra
          offspring of a big event are born un-kept).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_POP_OVERFLOW = 1
STATUS_JUMP_OVERFLOW = 2

U64 = np.uint64
_INV53 = 1.0 / 9007199254740992.0  # 2^-53


@njit(cache=True, inline="always")
def _splitmix64(z):
    z = U64(z + U64(0x9E3779B97F4A7C15))
    z = U64((z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9))
    z = U64((z ^ (z >> U64(27))) * U64(0x94D049BB133111EB))
    return U64(z ^ (z >> U64(31)))


@njit(cache=True)
def _seed_state(seed):
    s = np.empty(4, U64)
    z = U64(seed)
    for i in range(4):
        z = U64(z + U64(0x9E3779B97F4A7C15))
        s[i] = _splitmix64(z)
    if s[0] | s[1] | s[2] | s[3] == U64(0):
        s[0] = U64(1)
    return s


@njit(cache=True, inline="always")
def _next_u64(s):
    r = U64(s[0] + s[3])
    t = U64(s[1] << U64(17))
    s[2] = U64(s[2] ^ s[0])
    s[3] = U64(s[3] ^ s[1])
    s[1] = U64(s[1] ^ s[2])
    s[0] = U64(s[0] ^ s[3])
    s[2] = U64(s[2] ^ t)
    s[3] = U64((s[3] << U64(45)) | (s[3] >> U64(19)))
    return r


@njit(cache=True, inline="always")
def _rand01(s):
    return float(_next_u64(s) >> U64(11)) * _INV53


@njit(cache=True, inline="always")
def _rand_exp(s):
    u = _rand01(s)
    return -math.log1p(-u)


@njit(cache=True, inline="always")
def _rand_index(s, n):
    return int(_rand01(s) * n)


@njit(cache=True, inline="always")
def _randn_pair(s, out):
    # Marsaglia polar method
    while True:
        v1 = 2.0 * _rand01(s) - 1.0
        v2 = 2.0 * _rand01(s) - 1.0
        q = v1 * v1 + v2 * v2
        if 0.0 < q < 1.0:
            break
    g = math.sqrt(-2.0 * math.log(q) / q)
    out[0] = v1 * g
    out[1] = v2 * g


@njit(cache=True, inline="always")
def _gauss_move(X, i, d, sd, s, gbuf):
    j = 0
    while j + 1 < d:
        _randn_pair(s, gbuf)
        X[i, j] += sd * gbuf[0]
        X[i, j + 1] += sd * gbuf[1]
        j += 2
    if j < d:
        _randn_pair(s, gbuf)
        X[i, j] += sd * gbuf[0]


@njit(cache=True)
def _log_tail(beta, n):
    # log sum_{k>n} p_k = log[(n+1) p_{n+1} / (1+beta)], n >= 1
    return (
        math.log(beta)
        + math.log(n + 1.0)
        + math.lgamma(n - beta)
        - math.lgamma(1.0 - beta)
        - math.lgamma(n + 2.0)
        - math.log1p(beta)
    )


@njit(cache=True, inline="always")
def _sample_k(s, pcum, beta):
    """Draw an offspring count; head by table search, tail by exact inversion."""
    u = _rand01(s)
    if u < pcum[0]:
        return 0
    if u < pcum[2]:
        return 2
    if u < pcum[3]:
        return 3
    if u < pcum[4]:
        return 4
    M = pcum.shape[0] - 1
    if u <= pcum[M]:
        lo = 5
        hi = M
        while lo < hi:
            mid = (lo + hi) // 2
            if pcum[mid] >= u:
                hi = mid
            else:
                lo = mid + 1
        return lo
    # tail: smallest k with tail_sum(k) <= 1 - u
    v = 1.0 - u
    if v <= 0.0:
        v = 5e-324
    logv = math.log(v)
    lo = M
    hi = 2 * M
    while _log_tail(beta, hi) > logv:
        lo = hi
        hi *= 2
    while lo < hi:
        mid = (lo + hi) // 2
        if _log_tail(beta, mid) <= logv:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True)
def mass_ensemble(reps, n0, rho, pcum, beta, snap_times, clip, clip_n, seeds,
                  log_min_excess, jt, jexcess, jrep):
    """Total-mass-only replicates (populations in units of 1/N particles).

    Returns (snap_counts[reps, nsnap], n_jumps, status).  Jumps with excess
    k-1 >= log_min_excess are appended to the (jt, jexcess, jrep) buffers;
    in clip mode the suppressed big events are still logged but do not
    change the population.
    """
    nsnap = snap_times.shape[0]
    horizon = snap_times[nsnap - 1]
    snap_counts = np.zeros((reps, nsnap), np.int64)
    jcap = jt.shape[0]
    nj = 0
    log_jumps = log_min_excess > 0
    for r in range(reps):
        s = _seed_state(seeds[r])
        n = n0
        t = 0.0
        isnap = 0
        while n > 0:
            dt = _rand_exp(s) / (n * rho)
            tnew = t + dt
            while isnap < nsnap and snap_times[isnap] <= tnew:
                snap_counts[r, isnap] = n
                isnap += 1
            if isnap >= nsnap or tnew > horizon:
                break
            t = tnew
            k = _sample_k(s, pcum, beta)
            if k == 0:
                n -= 1
            else:
                excess = k - 1
                if log_jumps and excess >= log_min_excess:
                    if nj >= jcap:
                        return snap_counts, nj, STATUS_JUMP_OVERFLOW
                    jt[nj] = t
                    jexcess[nj] = excess
                    jrep[nj] = r
                    nj += 1
                if clip and excess > clip_n:
                    pass
                else:
                    n += excess
    return snap_counts, nj, STATUS_OK


@njit(cache=True)
def _sync_to(X, tl, n, d, ts, s, gbuf):
    for i in range(n):
        dt = ts - tl[i]
        if dt > 0.0:
            _gauss_move(X, i, d, math.sqrt(dt), s, gbuf)
        tl[i] = ts


@njit(cache=True)
def _spatial_core(s, X, tl, lin, kp, n, snap_times, rho, pcum, beta, mode,
                  clip_n, out_pos, out_lin, out_kept, out_counts, base_row,
                  jt, jexcess, jloc, jbig, nj_start, log_min_excess):
    """Run one replicate over the snapshot schedule.

    Returns (status, tau, n_jumps, rows_written).  Snapshot rows are written
    contiguously from base_row in schedule order, sizes in out_counts.
    """
    cap = X.shape[0]
    d = X.shape[1]
    nsnap = snap_times.shape[0]
    horizon = snap_times[nsnap - 1]
    jcap = jt.shape[0]
    nj = nj_start
    log_jumps = log_min_excess > 0
    gbuf = np.empty(2)
    tau = np.inf
    row = base_row
    t = 0.0
    isnap = 0
    status = STATUS_OK
    have_spare = False
    spare = 0.0
    while True:
        if n == 0:
            while isnap < nsnap:
                out_counts[isnap] = 0
                isnap += 1
            break
        dt = _rand_exp(s) / (n * rho)
        tnew = t + dt
        while isnap < nsnap and snap_times[isnap] <= tnew:
            ts = snap_times[isnap]
            _sync_to(X, tl, n, d, ts, s, gbuf)
            for i in range(n):
                for j in range(d):
                    out_pos[row, j] = X[i, j]
                out_lin[row] = lin[i]
                out_kept[row] = kp[i]
                row += 1
            out_counts[isnap] = n
            isnap += 1
        if isnap >= nsnap or tnew > horizon:
            break
        t = tnew
        i = _rand_index(s, n)
        k = _sample_k(s, pcum, beta)
        if k == 0:
            # the dying particle's position is never needed, so the lazy
            # Brownian increment is simply dropped
            n -= 1
            if i != n:
                for j in range(d):
                    X[i, j] = X[n, j]
                tl[i] = tl[n]
                lin[i] = lin[n]
                kp[i] = kp[n]
            continue
        excess = k - 1
        if excess == 0:
            continue
        big = clip_n > 0 and excess > clip_n
        if big and tau == np.inf:
            tau = t
        materialize = log_jumps and excess >= log_min_excess
        suppressed = big and mode == 1
        if (not suppressed) or materialize:
            # realize the parent position at t before it is copied/logged;
            # increments are additive so deferring past k==1 events is exact
            dti = t - tl[i]
            if dti > 0.0:
                sd = math.sqrt(dti)
                for j in range(d):
                    if have_spare:
                        g = spare
                        have_spare = False
                    else:
                        _randn_pair(s, gbuf)
                        g = gbuf[0]
                        spare = gbuf[1]
                        have_spare = True
                    X[i, j] += sd * g
            tl[i] = t
        if materialize:
            if nj >= jcap:
                status = STATUS_JUMP_OVERFLOW
                break
            jt[nj] = t
            for j in range(d):
                jloc[nj, j] = X[i, j]
            jexcess[nj] = excess
            jbig[nj] = 1 if big else 0
            nj += 1
        if suppressed:
            continue  # truncated-only: parent continues as single offspring
        if n + excess > cap:
            status = STATUS_POP_OVERFLOW
            break
        child_kept = kp[i]
        if big and mode == 2:
            child_kept = 0  # parent stays in the kept component
        for c in range(excess):
            for j in range(d):
                X[n, j] = X[i, j]
            tl[n] = t
            lin[n] = lin[i]
            kp[n] = child_kept
            n += 1
    return status, tau, nj, row


@njit(cache=True)
def spatial_path(x0, lin0, kept0, rho, pcum, beta, snap_times, mode, clip_n,
                 cap, seed, log_min_excess, jcap):
    """One spatial replicate; returns snapshots plus jump log."""
    n0 = x0.shape[0]
    d = x0.shape[1]
    nsnap = snap_times.shape[0]
    X = np.empty((cap, d))
    tl = np.zeros(cap)
    lin = np.zeros(cap, np.int64)
    kp = np.ones(cap, np.uint8)
    s = _seed_state(seed)
    for i in range(n0):
        for j in range(d):
            X[i, j] = x0[i, j]
        lin[i] = lin0[i]
        kp[i] = kept0[i]
    out_pos = np.empty((nsnap * cap, d))
    out_lin = np.empty(nsnap * cap, np.int64)
    out_kept = np.empty(nsnap * cap, np.uint8)
    out_counts = np.zeros(nsnap, np.int64)
    jt = np.empty(jcap)
    jexcess = np.empty(jcap, np.int64)
    jloc = np.empty((jcap, d))
    jbig = np.zeros(jcap, np.uint8)
    status, tau, nj, rows = _spatial_core(
        s, X, tl, lin, kp, n0, snap_times, rho, pcum, beta, mode, clip_n,
        out_pos, out_lin, out_kept, out_counts, 0,
        jt, jexcess, jloc, jbig, 0, log_min_excess)
    return (status, tau, out_pos[:rows], out_lin[:rows], out_kept[:rows],
            out_counts, jt[:nj], jexcess[:nj], jloc[:nj], jbig[:nj])


@njit(cache=True)
def hit_ensemble(reps, x0, lin0, kept0, rho, pcum, beta, t_obs, mode, clip_n,
                 cap, seeds, centers, eps_ladder):
    """Monte-Carlo ball hitting over probe centers and a coupled eps ladder.

    Returns (hits[nc, ne], hits_kept[nc, ne], survived[reps],
    mass_counts[reps], status).  hits counts replicates with at least one
    atom strictly inside the ball; hits_kept restricts to the kept
    (truncated) component.
    """
    n0 = x0.shape[0]
    d = x0.shape[1]
    nc = centers.shape[0]
    ne = eps_ladder.shape[0]
    X = np.empty((cap, d))
    tl = np.zeros(cap)
    lin = np.zeros(cap, np.int64)
    kp = np.ones(cap, np.uint8)
    out_pos = np.empty((cap, d))
    out_lin = np.empty(cap, np.int64)
    out_kept = np.empty(cap, np.uint8)
    out_counts = np.zeros(1, np.int64)
    snap_times = np.empty(1)
    snap_times[0] = t_obs
    jt = np.empty(0)
    jexcess = np.empty(0, np.int64)
    jloc = np.empty((0, d))
    jbig = np.zeros(0, np.uint8)
    hits = np.zeros((nc, ne), np.int64)
    hits_kept = np.zeros((nc, ne), np.int64)
    survived = np.zeros(reps, np.uint8)
    mass_counts = np.zeros(reps, np.int64)
    eps2max = eps_ladder[ne - 1] * eps_ladder[ne - 1]
    for r in range(reps):
        s = _seed_state(seeds[r])
        for i in range(n0):
            for j in range(d):
                X[i, j] = x0[i, j]
            tl[i] = 0.0
            lin[i] = lin0[i]
            kp[i] = kept0[i]
        status, tau, nj, rows = _spatial_core(
            s, X, tl, lin, kp, n0, snap_times, rho, pcum, beta, mode, clip_n,
            out_pos, out_lin, out_kept, out_counts, 0,
            jt, jexcess, jloc, jbig, 0, 0)
        if status != STATUS_OK:
            return hits, hits_kept, survived, mass_counts, status
        n = out_counts[0]
        mass_counts[r] = n
        if n > 0:
            survived[r] = 1
        for c in range(nc):
            best_full = np.inf
            best_kept = np.inf
            for i in range(n):
                r2 = 0.0
                for j in range(d):
                    dx = out_pos[i, j] - centers[c, j]
                    r2 += dx * dx
                if r2 < best_full:
                    best_full = r2
                if out_kept[i] == 1 and r2 < best_kept:
                    best_kept = r2
                if best_kept <= 0.0:
                    break
            if best_full < eps2max:
                for e in range(ne):
                    if best_full < eps_ladder[e] * eps_ladder[e]:
                        hits[c, e] += 1
            if best_kept < eps2max:
                for e in range(ne):
                    if best_kept < eps_ladder[e] * eps_ladder[e]:
                        hits_kept[c, e] += 1
    return hits, hits_kept, survived, mass_counts, status


@njit(cache=True)
def cluster_batch(x0, h, n_clusters, max_attempts, rho, pcum, beta, mode,
                  clip_n, cap, buf_rows, seed):
    """Rejection-sample descendant clouds of age h from one small founder.

    Runs single-particle replicates (founder at x0) and keeps those alive at
    age h.  Returns (pos, offsets[n_found+1], attempts, status); cluster i
    occupies pos[offsets[i]:offsets[i+1]].
    """
    d = x0.shape[0]
    s = _seed_state(seed)
    X = np.empty((cap, d))
    tl = np.zeros(cap)
    lin = np.zeros(cap, np.int64)
    kp = np.ones(cap, np.uint8)
    scratch_pos = np.empty((cap, d))
    scratch_lin = np.empty(cap, np.int64)
    buf_pos = np.empty((buf_rows, d))
    out_kept = np.empty(cap, np.uint8)
    out_counts = np.zeros(1, np.int64)
    snap_times = np.empty(1)
    snap_times[0] = h
    jt = np.empty(0)
    jexcess = np.empty(0, np.int64)
    jloc = np.empty((0, d))
    jbig = np.zeros(0, np.uint8)
    offsets = np.zeros(n_clusters + 1, np.int64)
    found = 0
    attempts = 0
    row = 0
    while found < n_clusters and attempts < max_attempts:
        attempts += 1
        for j in range(d):
            X[0, j] = x0[j]
        tl[0] = 0.0
        lin[0] = attempts
        kp[0] = 1
        status, tau, nj, rows = _spatial_core(
            s, X, tl, lin, kp, 1, snap_times, rho, pcum, beta, mode, clip_n,
            scratch_pos, scratch_lin, out_kept,
            out_counts, 0, jt, jexcess, jloc, jbig, 0, 0)
        if status != STATUS_OK:
            return buf_pos[:row], offsets[:found + 1], attempts, status
        n = out_counts[0]
        if n > 0:
            if row + n > buf_rows:
                return (buf_pos[:row], offsets[:found + 1], attempts,
                        STATUS_POP_OVERFLOW)
            for i in range(n):
                for j in range(d):
                    buf_pos[row, j] = scratch_pos[i, j]
                row += 1
            found += 1
            offsets[found] = row
    return buf_pos[:row], offsets[:found + 1], attempts, STATUS_OK
