"""Command-line front end.

Subcommands: simulate | cluster | neighborhood | hitting | pde | verify
| report.  Options come from an optional TOML config file with flag
overrides on top; every run writes a manifest.json with all defaults
materialized so outputs are reproducible from the manifest alone.

Exit status: 0 if all executed checks pass, 1 on runtime failure, 2 on
usage or config errors.  SUPERLAB_OUTPUT_ROOT sets the default output
root (default ./runs).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .clusters import estimate_a_h
from .engine import EngineParams, save_trajectory, simulate_coupled
from .hitting import hit_counts
from .measures import AtomicMeasure
from .neighborhood import default_test_fns, scaling_curve, validity_band
from .pde import estimate_c_beta_d
from .verify import run_verify

RNG_NAME = "xoshiro256+ / splitmix64, streams split by (seed, replicate)"


class UsageError(Exception):
    pass


def _output_root() -> Path:
    return Path(os.environ.get("SUPERLAB_OUTPUT_ROOT", "runs"))


def _fmt(x):
    """Locale-independent full-precision numbers for manifests."""
    if isinstance(x, float):
        return repr(x)
    return x


def _write_manifest(outdir: Path, command: str, options: dict) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "version": __version__,
        "rng": RNG_NAME,
        "options": {k: _fmt(v) for k, v in sorted(options.items())},
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}")


def _merged(args: argparse.Namespace, keys: list[str]) -> dict:
    """Config file values overridden by explicitly passed flags."""
    cfg = _load_config(getattr(args, "config", None))
    out = {}
    for k in keys:
        flag = getattr(args, k)
        out[k] = cfg.get(k, flag) if flag is None else flag
    return out


def _params(o: dict, snapshot_times) -> EngineParams:
    try:
        return EngineParams(
            beta=o["beta"], d=o["d"], mass_scale=o["mass_scale"],
            horizon=max(snapshot_times), snapshot_times=tuple(snapshot_times),
            K=o.get("K"), seed=o["seed"])
    except ValueError as exc:
        raise UsageError(str(exc))


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file; flags override it")
    p.add_argument("--out", help="output directory")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--mass-scale", dest="mass_scale", type=int, default=None,
                   help="particles per unit mass N")
    p.add_argument("--mass", type=float, default=None,
                   help="initial mass at the origin")
    p.add_argument("--K", type=float, default=None,
                   help="truncation level (omit for no truncation)")
    p.add_argument("--seed", type=int, default=None)


_DEFAULTS = {"beta": 0.8, "d": 3, "mass_scale": 10_000, "mass": 1.0,
             "K": None, "seed": 0}


def _resolve(args, extra_keys: list[str], extra_defaults: dict) -> dict:
    keys = list(_DEFAULTS) + extra_keys
    o = _merged(args, keys)
    for k, v in {**_DEFAULTS, **extra_defaults}.items():
        if o.get(k) is None:
            o[k] = v
    return o


def _outdir(args, o: dict, name: str) -> Path:
    if args.out:
        return Path(args.out)
    return _output_root() / f"{name}-seed{o['seed']}"


def cmd_simulate(args) -> int:
    o = _resolve(args, ["times"], {"times": [0.25, 0.5, 1.0]})
    times = [float(t) for t in o["times"]]
    params = _params(o, times)
    mu = AtomicMeasure.point([0.0] * o["d"], o["mass"])
    traj = simulate_coupled(params, mu)
    outdir = _outdir(args, o, "simulate")
    save_trajectory(traj, outdir)
    _write_manifest(outdir, "simulate", o)
    print(f"wrote trajectory ({len(times)} snapshots) to {outdir}")
    return 0


def cmd_cluster(args) -> int:
    o = _resolve(args, ["h", "reps"], {"h": 0.1, "reps": 4000})
    params = _params(o, [o["h"]])
    est = estimate_a_h(o["h"], o["K"], params, int(o["reps"]))
    lower = (o["beta"] * o["h"]) ** (1.0 / o["beta"])
    outdir = _outdir(args, o, "cluster")
    _write_manifest(outdir, "cluster", o)
    payload = {"a_h": est.value, "stderr": est.stderr, "reps": est.reps,
               "bracket": [lower, 2.0 * lower]}
    with open(outdir / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2)
    print(f"a({o['h']}) = {est.value!r} +/- {est.stderr!r} "
          f"(bracket [{lower!r}, {2 * lower!r}])")
    return 0


def cmd_neighborhood(args) -> int:
    o = _resolve(args, ["t", "eps"],
                 {"t": 0.5, "eps": [0.4, 0.3, 0.2, 0.15, 0.1]})
    t = float(o["t"])
    params = _params(o, [t])
    mu = AtomicMeasure.point([0.0] * o["d"], o["mass"])
    traj = simulate_coupled(params, mu)
    snap = traj.full(0)
    outdir = _outdir(args, o, "neighborhood")
    _write_manifest(outdir, "neighborhood", o)
    if len(snap) == 0:
        print("path went extinct before the snapshot time; no curve")
        return 1
    band = validity_band(snap.positions)
    fns = default_test_fns(1.0)
    curve = scaling_curve(snap, [float(e) for e in o["eps"]], fns,
                          o["beta"], enforce_band=False)
    curve.to_csv(outdir / "curve.csv")
    with open(outdir / "report.json", "w") as fh:
        json.dump({"validity_band": list(band),
                   "eps": curve.eps.tolist(),
                   "scaled_ratio": curve.scaled_ratio.tolist()}, fh,
                  indent=2)
    print(f"wrote scaling curve to {outdir} "
          f"(validity band [{band[0]!r}, {band[1]!r}])")
    return 0


def cmd_hitting(args) -> int:
    o = _resolve(args, ["t", "eps", "center", "reps"],
                 {"t": 0.5, "eps": [0.3, 0.2, 0.15, 0.1],
                  "center": [0.5, 0.0, 0.0], "reps": 2000})
    t = float(o["t"])
    params = _params(o, [t])
    mu = AtomicMeasure.point([0.0] * o["d"], o["mass"])
    center = np.asarray([float(c) for c in o["center"]])[None, :]
    run = hit_counts(mu, t, center, [float(e) for e in o["eps"]], params,
                     int(o["reps"]))
    outdir = _outdir(args, o, "hitting")
    _write_manifest(outdir, "hitting", o)
    reps = run["reps"]
    rows = [{"eps": float(e), "p_hat": int(h) / reps,
             "stderr": float(np.sqrt(h / reps * (1 - h / reps) / reps)),
             "p_hat_truncated": int(hk) / reps}
            for e, h, hk in zip(run["eps"], run["hits"][0],
                                run["hits_kept"][0])]
    with open(outdir / "report.json", "w") as fh:
        json.dump({"center": o["center"], "t": t, "reps": reps,
                   "rows": rows}, fh, indent=2)
    for r in rows:
        print(f"eps {r['eps']!r}: p_hat {r['p_hat']!r} "
              f"+/- {r['stderr']!r}")
    return 0


def cmd_pde(args) -> int:
    o = _resolve(args, [], {})
    est = estimate_c_beta_d(o["beta"], o["d"])
    outdir = _outdir(args, o, "pde")
    _write_manifest(outdir, "pde", o)
    payload = {"c_beta_d": est.c_beta_d, "method": est.method,
               "error_bar": est.error_bar}
    with open(outdir / "constants.json", "w") as fh:
        json.dump(payload, fh, indent=2)
    print(f"c_beta_d = {est.c_beta_d!r} +/- {est.error_bar!r} "
          f"({est.method})")
    return 0 if est.c_beta_d > 0 else 1


def cmd_verify(args) -> int:
    cfg = _load_config(args.config)
    tier = args.tier or cfg.get("tier", "fast")
    seed = args.seed if args.seed is not None else cfg.get("seed", 20260826)
    if tier not in ("fast", "full"):
        raise UsageError("tier must be 'fast' or 'full'")
    only = [int(x) for x in args.only.split(",")] if args.only else None
    o = {"tier": tier, "seed": seed, "only": args.only or "all"}
    outdir = Path(args.out) if args.out else _output_root() / f"verify-{tier}"
    _write_manifest(outdir, "verify", o)
    report = run_verify(tier=tier, seed=seed, only=only, progress=print)
    report.to_json(outdir / "report.json")
    print(f"report written to {outdir / 'report.json'}")
    return 0 if report.passed else 1


def cmd_report(args) -> int:
    outdir = Path(args.dir)
    manifest_path = outdir / "manifest.json"
    if not manifest_path.exists():
        raise UsageError(f"no manifest.json in {outdir}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    print(f"run: {manifest['command']} (version {manifest['version']})")
    print(f"rng: {manifest['rng']}")
    for k, v in manifest["options"].items():
        print(f"  {k} = {v}")
    for name in ("report.json", "constants.json"):
        path = outdir / name
        if not path.exists():
            continue
        with open(path) as fh:
            payload = json.load(fh)
        print(f"-- {name} --")
        if "criteria" in payload:
            for c in payload["criteria"]:
                status = ("SKIP" if c["skipped"]
                          else "PASS" if c["passed"] else "FAIL")
                print(f"[{status}] {c['id']:2d} {c['name']}: {c['measured']}"
                      f" (target {c['target']}, tol {c['tolerance']})")
            print(f"overall: {payload['overall']}")
        else:
            print(json.dumps(payload, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="superlab",
        description="branching-particle laboratory for stable "
                    "superprocess supports")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="run one coupled trajectory")
    _common_flags(sp)
    sp.add_argument("--times", type=float, nargs="+", default=None)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("cluster", help="estimate the cluster normalizer")
    _common_flags(sp)
    sp.add_argument("--h", type=float, default=None, help="cluster age")
    sp.add_argument("--reps", type=int, default=None)
    sp.set_defaults(fn=cmd_cluster)

    sp = sub.add_parser("neighborhood",
                        help="eps-neighborhood scaling curve of one path")
    _common_flags(sp)
    sp.add_argument("--t", type=float, default=None)
    sp.add_argument("--eps", type=float, nargs="+", default=None)
    sp.set_defaults(fn=cmd_neighborhood)

    sp = sub.add_parser("hitting", help="ball hitting probabilities")
    _common_flags(sp)
    sp.add_argument("--t", type=float, default=None)
    sp.add_argument("--eps", type=float, nargs="+", default=None)
    sp.add_argument("--center", type=float, nargs="+", default=None)
    sp.add_argument("--reps", type=int, default=None)
    sp.set_defaults(fn=cmd_hitting)

    sp = sub.add_parser("pde", help="constant from the scaled PDE solution")
    _common_flags(sp)
    sp.set_defaults(fn=cmd_pde)

    sp = sub.add_parser("verify", help="run the acceptance criteria")
    sp.add_argument("--config", help="TOML config file; flags override it")
    sp.add_argument("--tier", choices=("fast", "full"), default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--only", help="comma-separated criterion ids")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("report", help="render a run directory")
    sp.add_argument("dir")
    sp.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
