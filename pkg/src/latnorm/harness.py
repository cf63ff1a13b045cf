"""Experiment front end: instance generation, suite execution, reporting.

Instances, norms and reports travel as JSON; the records section of a
report is deterministic given (config, seeds), with wall-clock timings
kept in a parallel section so reruns stay byte-comparable.
"""

from __future__ import annotations

import csv
import json
import math
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .bodies import LpBall, NormBody, body_from_json, body_to_json
from .lattice import Basis, RankDeficiencyError
from .oracle import exact_cvp, exact_svp
from .reductions import (ReductionConfig, cvp_via_sieve2, cvp_via_sieveQ,
                         make_exact_cvp_oracle, svp_via_cvp2, svp_via_cvpQ)

__all__ = [
    "InstanceSpec",
    "ExperimentConfig",
    "generate_instance",
    "instance_to_json",
    "instance_from_json",
    "run_suite",
    "write_report",
    "report_schema",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ["instance_id", "mode", "n", "norm", "epsilon", "seed", "factor",
               "runtime_ms", "status"]


@dataclass(frozen=True)
class InstanceSpec:
    n: int
    bound: int = 5
    dim: Optional[int] = None
    norm: dict = field(default_factory=lambda: {"kind": "lp", "p": 2.0})
    count: int = 1
    with_target: bool = False


def _entry_to_json(x: Fraction):
    return int(x) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def instance_to_json(basis: Basis, norm: dict, target=None) -> dict:
    cols = [[_entry_to_json(v) for v in basis.matrix[:, j]] for j in range(basis.rank)]
    out = {"dim": basis.dim, "rank": basis.rank, "basis": cols, "norm": norm}
    if target is not None:
        out["target"] = [float(v) for v in np.asarray(target, dtype=float)]
    return out


def instance_from_json(data: dict) -> tuple[Basis, NormBody, Optional[np.ndarray]]:
    basis = Basis.from_rows_of_columns(data["basis"])
    if basis.dim != data["dim"] or basis.rank != data["rank"]:
        raise ValueError("instance dim/rank fields disagree with the basis")
    norm = data.get("norm")
    if norm is None:
        body = LpBall(2.0, basis.dim)
    else:
        norm = dict(norm)
        if norm.get("kind") == "lp" and "dim" not in norm:
            norm["dim"] = basis.dim
        body = body_from_json(norm)
    target = np.asarray(data["target"], dtype=float) if "target" in data else None
    return basis, body, target


def generate_instance(spec: InstanceSpec, rng: np.random.Generator) -> dict:
    """Random full-rank integer basis with entries in [-bound, bound].

    The optional target is drawn uniformly from the fundamental
    parallelepiped, so it always lies in span(L).
    """
    n = spec.n
    d = spec.dim if spec.dim is not None else n
    if d < n:
        raise ValueError("dim must be at least rank")
    basis = None
    for _ in range(100):
        M = rng.integers(-spec.bound, spec.bound + 1, size=(d, n))
        try:
            basis = Basis.from_integers(M)
            break
        except RankDeficiencyError:
            continue
    if basis is None:
        raise RuntimeError("could not draw a full-rank basis in 100 tries")
    norm = dict(spec.norm)
    if norm.get("kind") == "lp" and "dim" not in norm:
        norm["dim"] = d
    target = None
    if spec.with_target:
        u = rng.uniform(0.0, 1.0, size=n)
        target = basis.as_float() @ u
    return instance_to_json(basis, norm, target)


# ----------------------------------------------------------------------
# suite runner


@dataclass(frozen=True)
class ExperimentConfig:
    suite: str
    modes: list
    instances: list                     # list of InstanceSpec-like dicts
    epsilon: float = 0.25
    seeds: list = field(default_factory=lambda: [0])
    instance_seed: int = 1234
    overrides: dict = field(default_factory=dict)
    norm_q: Optional[dict] = None
    threads: int = 1
    out: Optional[str] = None

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentConfig":
        return cls(suite=data["suite"], modes=list(data["modes"]),
                   instances=list(data["instances"]),
                   epsilon=float(data.get("epsilon", 0.25)),
                   seeds=list(data.get("seeds", [0])),
                   instance_seed=int(data.get("instance_seed", 1234)),
                   overrides=dict(data.get("overrides", {})),
                   norm_q=data.get("norm_q"),
                   threads=int(data.get("threads", 1)),
                   out=data.get("out"))


def _reduction_config(cfg: ExperimentConfig, seed: int) -> ReductionConfig:
    kw = dict(cfg.overrides)
    kw.pop("epsilon", None)
    return ReductionConfig(epsilon=cfg.epsilon, seed=seed, **kw)


def _one_run(mode: str, inst: dict, seed: int, cfg: ExperimentConfig) -> tuple[dict, float]:
    basis, body, target = instance_from_json(inst)
    rcfg = _reduction_config(cfg, seed)
    t0 = time.perf_counter()
    status = "ok"
    value = math.nan
    factor = None
    digest = ""
    try:
        if mode == "svp-cvp2":
            res = svp_via_cvp2(basis, body, rcfg,
                               make_exact_cvp_oracle(lambda d: LpBall(2.0, d)))
        elif mode == "svp-cvpQ":
            q = body_from_json(cfg.norm_q)
            res = svp_via_cvpQ(basis, body, q, rcfg,
                               make_exact_cvp_oracle(lambda d, qq=cfg.norm_q:
                                                     _resized(qq, d)))
        elif mode == "cvp-sieve2":
            res = cvp_via_sieve2(basis, target, body, rcfg)
        elif mode == "cvp-sieveQ":
            res = cvp_via_sieveQ(basis, target, body, body_from_json(cfg.norm_q), rcfg)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        value = res.value
        factor = res.achieved_factor
        digest = res.trace_digest
        if res.failed:
            status = "failed"
    except Exception as err:  # per-run failures never abort the suite
        status = f"error:{type(err).__name__}"
    ms = 1000.0 * (time.perf_counter() - t0)
    record = {
        "instance_id": inst["id"], "mode": mode, "n": inst["rank"],
        "norm": inst["norm"]["kind"], "epsilon": cfg.epsilon, "seed": seed,
        "factor": factor, "value": None if math.isnan(value) else value,
        "status": status, "trace_digest": digest,
    }
    return record, ms


def _resized(norm_json: dict, dim: int) -> NormBody:
    norm = dict(norm_json)
    if norm.get("kind") == "lp":
        norm["dim"] = dim
    return body_from_json(norm)


def run_suite(cfg: ExperimentConfig) -> dict:
    """Execute all (mode, instance, seed) runs and assemble the report."""
    rng = np.random.default_rng(cfg.instance_seed)
    instances = []
    for spec_data in cfg.instances:
        spec = InstanceSpec(n=spec_data["n"], bound=spec_data.get("bound", 5),
                            dim=spec_data.get("dim"),
                            norm=spec_data.get("norm", {"kind": "lp", "p": 2.0}),
                            count=spec_data.get("count", 1),
                            with_target=spec_data.get("target", False))
        for k in range(spec.count):
            inst = generate_instance(spec, rng)
            inst["id"] = f"{cfg.suite}-{spec.n}-{len(instances)}"
            instances.append(inst)

    jobs = [(mode, inst, seed)
            for mode in cfg.modes for inst in instances for seed in cfg.seeds]
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(lambda j: _one_run(j[0], j[1], j[2], cfg), jobs))
    else:
        results = [_one_run(*j, cfg) for j in jobs]
    records = [r for r, _ in results]
    timings = [ms for _, ms in results]

    factors = sorted(r["factor"] for r in records
                     if r["status"] == "ok" and r["factor"] is not None)
    aggregates = {
        "runs": len(records),
        "success_rate": (sum(r["status"] == "ok" for r in records) / len(records)
                         if records else None),
        "median_factor": _quantile(factors, 0.5),
        "p90_factor": _quantile(factors, 0.9),
    }
    return {
        "schema_version": 1,
        "suite": cfg.suite,
        "environment": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "platform": platform.platform(),
        },
        "config": {
            "epsilon": cfg.epsilon, "seeds": list(cfg.seeds),
            "modes": list(cfg.modes), "overrides": dict(cfg.overrides),
            "instance_seed": cfg.instance_seed,
        },
        "instances": instances,
        "records": records,
        "timings_ms": timings,
        "aggregates": aggregates,
    }


def _quantile(sorted_vals: list, q: float):
    if not sorted_vals:
        return None
    idx = min(len(sorted_vals) - 1, int(math.ceil(q * len(sorted_vals))) - 1)
    return sorted_vals[max(idx, 0)]


def report_schema() -> dict:
    with resources.files("latnorm").joinpath("report_schema.json").open() as fh:
        return json.load(fh)


def write_report(report: dict, out_path: str | Path) -> None:
    """Write the report JSON (schema-validated) plus the CSV summary."""
    import jsonschema

    jsonschema.validate(report, report_schema())
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2, sort_keys=True))
    csv_path = out.with_suffix(".csv")
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec, ms in zip(report["records"], report["timings_ms"]):
            writer.writerow([rec["instance_id"], rec["mode"], rec["n"], rec["norm"],
                             rec["epsilon"], rec["seed"],
                             "" if rec["factor"] is None else rec["factor"],
                             f"{ms:.1f}", rec["status"]])
