"""Command-line front end: experiments, calculators, and the check suite.

Subcommands mirror the library layers: ``predict`` (closed-form report),
``simulate`` (equilibrium sampling), ``couple`` (coalescence-time samples),
``mix`` (coupled mixing profile), ``meanfield`` (ODE trajectory / fixed
point), ``oracle`` (exact distributions at small n), and ``verify`` (named
checks; exit code 0 iff all selected checks pass).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from .model import ModelParams, QueueState, derive_seed, make_stream
from .simulate import (SamplingPlan, default_warmup, estimate_tail,
                       run_trajectory)
from .coupling import coalescence_time, mixing_profile
from .meanfield import default_truncation, fixed_point, integrate, derivative
from .oracle import CappedChainSpec, stationary, transient
from .theory import predict
from .verify import CHECK_NAMES, run_checks


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _emit_json(payload, out: Optional[str]) -> None:
    _emit(json.dumps(payload, indent=2, default=_json_default), out)


def _emit_csv(header: Sequence[str], rows, out: Optional[str]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    _emit(buf.getvalue(), out)


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("SUPERSIM_SEED")
    if env is not None:
        return int(env)
    return 0


def _params(args) -> ModelParams:
    return ModelParams(n=args.n, lam=args.lam, d=args.d)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=100, help="number of queues")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5,
                   help="per-queue arrival intensity, in (0,1)")
    p.add_argument("--d", type=int, default=2, help="choices per arrival")
    p.add_argument("--seed", type=int, default=None,
                   help="stream seed (default: $SUPERSIM_SEED, then 0)")
    p.add_argument("--warmup", type=float, default=None,
                   help="warm-up time before sampling (default: 40 ln n/(1-lambda))")
    p.add_argument("--interval", type=float, default=None,
                   help="spacing between samples / grid step")
    p.add_argument("--samples", type=int, default=None,
                   help="number of samples / replicas")
    p.add_argument("--horizon", type=float, default=None,
                   help="time horizon")
    p.add_argument("--out", type=str, default=None, metavar="PATH",
                   help="write output to PATH instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default=None,
                   help="output format (default depends on subcommand)")


def _cmd_predict(args) -> int:
    report = predict(args.n, args.lam, args.d)
    payload = report.to_dict()
    if (args.format or "json") == "json":
        _emit_json(payload, args.out)
    else:
        rows = []
        for key, val in payload.items():
            if isinstance(val, (list, tuple)):
                val = " ".join(f"{v:.6g}" for v in val)
            rows.append((key, val))
        _emit_csv(("quantity", "value"), rows, args.out)
    return 0


def _cmd_simulate(args) -> int:
    params = _params(args)
    plan = SamplingPlan(
        warmup=args.warmup if args.warmup is not None else default_warmup(params),
        interval=args.interval if args.interval is not None else 1.0,
        count=args.samples if args.samples is not None else 1000,
    )
    snaps = run_trajectory(params, QueueState.zeros(params.n), plan,
                           seed=_resolve_seed(args))
    est = estimate_tail(snaps)
    if (args.format or "csv") == "csv":
        k_max = max(s.max_len for s in snaps)
        header = ["t", "total", "max"] + [f"ell_{k}" for k in range(k_max + 1)]
        rows = []
        for s in snaps:
            ell = np.zeros(k_max + 1, dtype=np.int64)
            ell[:len(s.ell)] = s.ell
            rows.append([f"{s.t:.6f}", s.total, s.max_len] + ell.tolist())
        _emit_csv(header, rows, args.out)
    else:
        _emit_json({
            "params": {"n": params.n, "lambda": params.lam, "d": params.d,
                       "seed": _resolve_seed(args)},
            "plan": {"warmup": plan.warmup, "interval": plan.interval,
                     "count": plan.count},
            "u": est.u, "se": est.se,
            "max_hist": {str(k): v for k, v in est.max_hist.items()},
        }, args.out)
    return 0


def _cmd_couple(args) -> int:
    params = _params(args)
    seed = _resolve_seed(args)
    replicas = args.samples if args.samples is not None else 100
    horizon = args.horizon if args.horizon is not None else \
        40.0 * max(math.log(params.n), 1.0) / (1.0 - params.lam)
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((seed, 0))))
    times: list[float] = []
    censored: list[bool] = []
    for r in range(replicas):
        xl = rng.integers(0, args.max_init + 1, size=params.n)
        x = QueueState.from_lengths(xl)
        yl = xl.copy()
        yl[rng.integers(0, params.n)] += 1
        y = QueueState.from_lengths(yl)
        stream = make_stream(params, derive_seed(seed, 1, r), horizon=horizon)
        res = coalescence_time(x, y, stream, horizon=horizon)
        times.append(math.nan if res.censored else res.time)
        censored.append(res.censored)
    if (args.format or "csv") == "csv":
        _emit_csv(("coalescence_time",),
                  [[f"{t:.6f}" if not math.isnan(t) else "nan"]
                   for t in times], args.out)
    else:
        _emit_json({"params": {"n": params.n, "lambda": params.lam,
                               "d": params.d, "seed": seed},
                    "horizon": horizon, "times": times,
                    "censored": censored}, args.out)
    return 0


def _cmd_mix(args) -> int:
    params = _params(args)
    horizon = args.horizon if args.horizon is not None else 10.0
    step = args.interval if args.interval is not None else 0.5
    replicas = args.samples if args.samples is not None else 200
    grid = np.arange(0.0, horizon + step / 2, step)
    prof = mixing_profile(params, grid, replicas=replicas,
                          seed_base=_resolve_seed(args), warmup=args.warmup)
    header = ("t", "pr_neq", "se_neq", "deficit", "se_deficit", "bound_lower")
    if (args.format or "csv") == "csv":
        rows = [
            [f"{prof.t[i]:.6f}", f"{prof.pr_neq[i]:.8f}",
             f"{prof.se_neq[i]:.8f}", f"{prof.deficit[i]:.8f}",
             f"{prof.se_deficit[i]:.8f}", f"{prof.bound_lower[i]:.8e}"]
            for i in range(len(prof.t))
        ]
        _emit_csv(header, rows, args.out)
    else:
        _emit_json({name: getattr(prof, name) for name in header}, args.out)
    return 0


def _cmd_meanfield(args) -> int:
    lam, d = args.lam, args.d
    K = args.K if args.K is not None else default_truncation(lam, d)
    fp = fixed_point(lam, d, K)
    if args.fixed_point or (args.format == "json" and args.horizon is None):
        resid = float(np.max(np.abs(derivative(fp.v, lam, d))))
        _emit_json({"lambda": lam, "d": d, "K": K, "v": fp.v,
                    "residual": resid}, args.out)
        return 0
    T = args.horizon if args.horizon is not None else 50.0
    traj = integrate(np.zeros(K), lam, d, T, dt=args.dt)
    if (args.format or "csv") == "csv":
        header = ["t"] + [f"v{k}" for k in range(1, K + 1)]
        stride = max(1, len(traj.times) // (args.samples or 500))
        idx = list(range(0, len(traj.times), stride))
        if idx[-1] != len(traj.times) - 1:
            idx.append(len(traj.times) - 1)
        rows = [[f"{traj.times[i]:.6f}"]
                + [f"{v:.10g}" for v in traj.values[i]] for i in idx]
        _emit_csv(header, rows, args.out)
    else:
        _emit_json({"lambda": lam, "d": d, "K": K, "t": traj.times,
                    "v": traj.values, "fixed_point": fp.v}, args.out)
    return 0


def _cmd_oracle(args) -> int:
    spec = CappedChainSpec(n=args.n, lam=args.lam, d=args.d, cap=args.cap)
    if args.transient_t is not None:
        probs = transient(spec, (0,) * spec.n, args.transient_t)
    else:
        probs = stationary(spec)
    if (args.format or "csv") == "csv":
        header = ["state_index"] + [f"x{j}" for j in range(1, spec.n + 1)] \
            + ["prob"]
        rows = [[i] + list(spec.index_state(i)) + [f"{probs[i]:.12e}"]
                for i in range(spec.n_states)]
        _emit_csv(header, rows, args.out)
    else:
        _emit_json({"n": spec.n, "lambda": spec.lam, "d": spec.d,
                    "cap": spec.cap,
                    "kind": "transient" if args.transient_t is not None
                            else "stationary",
                    "prob": probs}, args.out)
    return 0


def _cmd_verify(args) -> int:
    names = args.check if args.check else None
    results = run_checks(names, quick=args.quick)
    for res in results:
        print(res.line(), file=sys.stderr)
    verdicts = [res.verdict() for res in results]
    _emit_json(verdicts, args.out)
    return 0 if all(res.passed for res in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="supersim",
        description="Join-shortest-of-d queue laboratory", )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="closed-form predictions as JSON")
    _add_common(p)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("simulate", help="equilibrium snapshot run")
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("couple", help="coalescence times of adjacent pairs")
    _add_common(p)
    p.add_argument("--max-init", type=int, default=10,
                   help="initial lengths drawn uniformly in 0..max-init")
    p.set_defaults(func=_cmd_couple)

    p = sub.add_parser("mix", help="coupled mixing profile on a time grid")
    _add_common(p)
    p.set_defaults(func=_cmd_mix)

    p = sub.add_parser("meanfield", help="tail ODE trajectory / fixed point")
    _add_common(p)
    p.add_argument("--K", type=int, default=None, help="truncation level")
    p.add_argument("--dt", type=float, default=0.01, help="integration step")
    p.add_argument("--fixed-point", action="store_true",
                   help="emit the fixed point instead of a trajectory")
    p.set_defaults(func=_cmd_meanfield)

    p = sub.add_parser("oracle", help="exact distributions of the capped chain")
    _add_common(p)
    p.add_argument("--cap", type=int, default=8, help="per-queue length cap")
    p.add_argument("--transient-t", type=float, default=None,
                   help="emit the law at this time from the empty state "
                        "(default: stationary)")
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("verify", help="run named acceptance checks")
    _add_common(p)
    p.add_argument("--check", action="append", default=None,
                   metavar="NAME", choices=CHECK_NAMES,
                   help="run only this check (repeatable); all by default")
    p.add_argument("--quick", action="store_true",
                   help="smaller sample sizes for a fast smoke run")
    p.set_defaults(func=_cmd_verify)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
