"""Command-line front end: latnorm {generate, oracle, ellipsoid, reduce, suite, kissing}.

Exit codes: 0 success, 2 validation error, 3 budget/tolerance/search failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BUDGET = 3


def _load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _emit(data, out: str | None) -> None:
    text = json.dumps(data, indent=2, sort_keys=True)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _norm_from_args(args) -> dict:
    if args.norm_file:
        return _load_json(args.norm_file)
    return json.loads(args.norm)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="latnorm",
        description="Lattice SVP/CVP approximation in arbitrary norms")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="root RNG seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads (suite)")
    common.add_argument("--out", type=str, default=None, help="output path (default stdout)")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="random lattice instances")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--dim", type=int, default=None)
    g.add_argument("--bound", type=int, default=5)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--norm", type=str, default='{"kind":"lp","p":2.0}')
    g.add_argument("--norm-file", type=str, default=None)
    g.add_argument("--target", action="store_true", help="attach an in-span target")

    o = sub.add_parser("oracle", parents=[common], help="exact SVP/CVP by enumeration")
    o.add_argument("--instance", type=str, required=True)
    o.add_argument("--mode", choices=["svp", "cvp"], default="svp")
    o.add_argument("--budget", type=int, default=10**8, help="enumeration node budget")

    e = sub.add_parser("ellipsoid", parents=[common], help="M-ellipsoid construction")
    e.add_argument("--norm", type=str, default=None)
    e.add_argument("--norm-file", type=str, default=None)
    e.add_argument("--epsilon", type=float, default=0.25)
    e.add_argument("--C", type=float, default=2.0)
    e.add_argument("--budget", type=int, default=20000, help="certification budget")

    r = sub.add_parser("reduce", parents=[common], help="run one reduction pipeline")
    r.add_argument("--mode", required=True,
                   choices=["svp-cvp2", "svp-cvpQ", "cvp-sieve2", "cvp-sieveQ"])
    r.add_argument("--instance", type=str, required=True)
    r.add_argument("--epsilon", type=float, default=0.25)
    r.add_argument("--norm-q", type=str, default=None, help="norm JSON file for Q modes")
    r.add_argument("--report", type=str, default=None)
    r.add_argument("--low-memory", action="store_true",
                   help="store only the best pair of oracle answers")
    r.add_argument("--budget", type=int, default=None, help="repetition budget override")
    r.add_argument("--q-scale", type=float, default=None)
    r.add_argument("--p-min", type=int, default=11)

    s = sub.add_parser("suite", parents=[common], help="run an experiment suite")
    s.add_argument("--config", type=str, default=None)
    s.add_argument("--preset", type=str, default=None,
                   choices=["paper-figure-2-analogue"])

    k = sub.add_parser("kissing", parents=[common], help="kissing-variant estimate")
    k.add_argument("--norm", type=str, default=None)
    k.add_argument("--norm-file", type=str, default=None)
    k.add_argument("--gamma", type=float, default=0.1)
    k.add_argument("--budget", type=int, default=10000)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (ValueError, KeyError, json.JSONDecodeError, FileNotFoundError) as err:
        print(f"latnorm: validation error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


def _dispatch(args) -> int:
    from .bodies import (SamplingInfeasibleError, body_from_json,
                         estimate_kissing_variant)
    from .ellipsoid import LoopDivergenceError, build_m_ellipsoid
    from .harness import (ExperimentConfig, InstanceSpec, generate_instance,
                          instance_from_json, run_suite, write_report)
    from .oracle import BudgetExceededError, exact_cvp, exact_svp
    from .reductions import (ReductionConfig, cvp_via_sieve2, cvp_via_sieveQ,
                             make_exact_cvp_oracle, svp_via_cvp2, svp_via_cvpQ)
    from .sieve import SieveFailure

    rng = np.random.default_rng(args.seed)

    if args.command == "generate":
        spec = InstanceSpec(n=args.n, dim=args.dim, bound=args.bound,
                            norm=_norm_from_args(args), with_target=args.target)
        out = [generate_instance(spec, rng) for _ in range(args.count)]
        _emit(out[0] if args.count == 1 else out, args.out)
        return EXIT_OK

    if args.command == "oracle":
        basis, body, target = instance_from_json(_load_json(args.instance))
        try:
            if args.mode == "svp":
                res = exact_svp(basis, body, node_budget=args.budget)
            else:
                if target is None:
                    raise ValueError("cvp mode needs an instance with a target")
                res = exact_cvp(basis, target, body, node_budget=args.budget)
        except BudgetExceededError as err:
            _emit({"status": "budget-exceeded",
                   "best_value": err.best.value if err.best else None}, args.out)
            return EXIT_BUDGET
        _emit({"status": "ok", "value": res.value,
               "coeffs": [int(c) for c in res.coeffs],
               "vector": [float(v) for v in res.vector],
               "nodes_visited": res.nodes_visited}, args.out)
        return EXIT_OK

    if args.command == "ellipsoid":
        body = body_from_json(_norm_from_args_required(args))
        try:
            res = build_m_ellipsoid(body, args.epsilon, rng, C=args.C,
                                    certify_budget=args.budget)
        except LoopDivergenceError as err:
            print(f"latnorm: {err}", file=sys.stderr)
            return EXIT_BUDGET
        _emit({
            "T_eps": res.T_eps.tolist(),
            "c_eps": res.c_eps,
            "epsilon": res.epsilon,
            "C": res.C,
            "condition": res.condition,
            "iterations": [{
                "alpha": p.alpha, "distance_estimate": p.distance_estimate,
                "m_value": p.m_value, "m_value_ci": p.m_value_ci,
                "m_dual": p.m_dual, "m_dual_ci": p.m_dual_ci,
            } for p in res.iterations],
            "certification": {
                "volume_ratio_k_plus_b": res.certification.volume_ratio_k_plus_b,
                "volume_ratio_k_plus_b_ci": res.certification.volume_ratio_k_plus_b_ci,
                "volume_ratio_b_plus_ck": res.certification.volume_ratio_b_plus_ck,
                "volume_ratio_b_plus_ck_ci": res.certification.volume_ratio_b_plus_ck_ci,
                "roundness": list(res.certification.roundness),
            },
        }, args.out)
        return EXIT_OK

    if args.command == "reduce":
        basis, body, target = instance_from_json(_load_json(args.instance))
        cfg = ReductionConfig(epsilon=args.epsilon, seed=args.seed,
                              repetition_budget=args.budget,
                              q_scale=args.q_scale, p_min=args.p_min,
                              low_memory=args.low_memory)
        norm_q = _load_json(args.norm_q) if args.norm_q else None
        try:
            if args.mode == "svp-cvp2":
                res = svp_via_cvp2(basis, body, cfg,
                                   make_exact_cvp_oracle(_l2_factory()))
            elif args.mode == "svp-cvpQ":
                if norm_q is None:
                    raise ValueError("svp-cvpQ needs --norm-q")
                res = svp_via_cvpQ(basis, body, body_from_json(norm_q), cfg,
                                   make_exact_cvp_oracle(_q_factory(norm_q)))
            elif args.mode == "cvp-sieve2":
                if target is None:
                    raise ValueError("cvp modes need an instance with a target")
                res = cvp_via_sieve2(basis, target, body, cfg)
            else:
                if target is None or norm_q is None:
                    raise ValueError("cvp-sieveQ needs a target and --norm-q")
                res = cvp_via_sieveQ(basis, target, body, body_from_json(norm_q), cfg)
        except (SieveFailure, SamplingInfeasibleError) as err:
            print(f"latnorm: {err}", file=sys.stderr)
            return EXIT_BUDGET
        payload = {
            "mode": res.mode,
            "value": res.value,
            "achieved_factor": res.achieved_factor,
            "gamma_realized": res.gamma_realized,
            "coeffs": None if res.coeffs is None else [int(c) for c in res.coeffs],
            "vector": None if res.vector is None else [float(v) for v in res.vector],
            "failed": res.failed,
            "trace_digest": res.trace_digest,
            "notes": _jsonable(res.notes),
            "trace": res.trace,
        }
        _emit(payload, args.report or args.out)
        return EXIT_BUDGET if res.failed else EXIT_OK

    if args.command == "suite":
        if args.preset == "paper-figure-2-analogue":
            data = {
                "suite": "paper-figure-2-analogue",
                "modes": ["svp-cvp2"],
                "epsilon": 0.1,
                "seeds": list(range(5)),
                "instances": [
                    {"n": n, "bound": 5, "count": 2,
                     "norm": {"kind": "lp", "p": "inf"}} for n in (4, 5, 6)
                ],
                "overrides": {"repetition_budget": 20, "p_min": 5,
                              "scale_grid_ratio": 0.6, "grid_span": 8.0},
            }
        elif args.config:
            data = _load_json(args.config)
        else:
            raise ValueError("suite needs --config or --preset")
        cfg = ExperimentConfig.from_json({**data, "threads": args.threads})
        report = run_suite(cfg)
        out = args.out or data.get("out") or "latnorm_report.json"
        write_report(report, out)
        print(f"report written to {out} ({report['aggregates']})")
        return EXIT_OK

    if args.command == "kissing":
        body = body_from_json(_norm_from_args_required(args))
        est = estimate_kissing_variant(body, args.gamma, args.budget, rng)
        _emit({"gamma": est.gamma, "count": est.count, "budget": est.budget},
              args.out)
        return EXIT_OK

    raise ValueError(f"unknown command {args.command!r}")


def _norm_from_args_required(args) -> dict:
    if args.norm_file:
        return _load_json(args.norm_file)
    if args.norm:
        return json.loads(args.norm)
    raise ValueError("need --norm or --norm-file")


def _l2_factory():
    from .bodies import LpBall

    return lambda d: LpBall(2.0, d)


def _q_factory(norm_q: dict):
    from .bodies import body_from_json

    def factory(d: int):
        norm = dict(norm_q)
        if norm.get("kind") == "lp":
            norm["dim"] = d
        return body_from_json(norm)

    return factory


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


if __name__ == "__main__":
    sys.exit(main())
