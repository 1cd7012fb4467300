"""Command-line frontend: gen-data, run, eval, params.

All randomness flows from --seed; rerunning `run` with the same flags writes a
byte-identical result file.  Wall-clock timings go to a sidecar file next to
the result so the result itself stays deterministic.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .bitstogram import bitstogram_params
from .core import treehist_params
from .harness import (
    Dataset,
    ExperimentConfig,
    HeavyHitters,
    exact_counts,
    gen_powerlaw,
    ingest_corpus,
    read_dataset,
    run_experiment,
    summarize,
    write_dataset,
)

SCHEMA_RESULT = "ldp-hh/1"
SCHEMA_TIMINGS = "ldp-hh-timings/1"
SCHEMA_EVAL = "ldp-hh-eval/1"


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _hex(value: int, domain_bits: int) -> str:
    return format(value, f"0{(domain_bits + 3) // 4}x")


def _load_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise SystemExit(f"config {path}:{ln}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


_RUN_KEYS = {
    "protocol": str, "dataset": str, "epsilon": float, "beta": float,
    "seed": int, "repetitions": int, "threshold": float, "out": str,
    "t": int, "m": int, "eta": float, "prune_threshold": float,
    "max_survivors": int, "R": int, "T": int,
}


def _apply_config(args: argparse.Namespace, path: str) -> None:
    # config supplies values only for flags not given on the command line
    cfg = _load_config_file(path)
    unknown = set(cfg) - set(_RUN_KEYS)
    if unknown:
        raise SystemExit(f"config {path}: unknown keys {sorted(unknown)}")
    for key, raw in cfg.items():
        if getattr(args, key, None) is None:
            try:
                setattr(args, key, _RUN_KEYS[key](raw))
            except ValueError:
                raise SystemExit(f"config {path}: bad value for {key}: {raw!r}") from None


def _params_echo(protocol: str, n: int, d: int, epsilon: float, beta: float, overrides: dict) -> dict:
    if protocol == "treehist":
        p = treehist_params(n, d, epsilon, beta, t=overrides.get("t"), m=overrides.get("m"), eta=overrides.get("eta"))
        return {"t": p.t, "m": p.m, "eta": p.eta, "a_eps": p.a_eps}
    if protocol == "bitstogram":
        p = bitstogram_params(n, d, epsilon, beta, R=overrides.get("R"), T=overrides.get("T"))
        return {
            "R": p.R,
            "T": p.T,
            "code_bits": p.code.n_code,
            "inner_R": p.inner.R,
            "inner_T": p.inner.T,
            "outer_R": p.outer.R,
            "outer_T": p.outer.T,
            "heavy_w": p.heavy_w,
        }
    return {"domain": d}


def cmd_gen_data(args: argparse.Namespace) -> int:
    if args.dist == "powerlaw":
        if args.domain_bits is None:
            raise SystemExit("gen-data powerlaw requires --domain-bits")
        ds = gen_powerlaw(args.domain_bits, args.n, args.power, args.bins, args.seed)
    else:
        if args.corpus is None:
            raise SystemExit("gen-data corpus requires --corpus FILE")
        ds = ingest_corpus(args.corpus, args.n, args.seed, length=args.token_length, domain_bits=args.domain_bits)
    write_dataset(ds, args.out)
    print(f"wrote {ds.n} items of {ds.domain_bits} bits to {args.out}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    if args.config:
        _apply_config(args, args.config)
    for key in ("protocol", "dataset", "epsilon", "out"):
        if getattr(args, key) is None:
            raise SystemExit(f"run requires --{key.replace('_', '-')} (flag or config)")
    if args.epsilon <= 0:
        raise SystemExit(f"invalid epsilon {args.epsilon}: must be > 0")
    beta = args.beta if args.beta is not None else 0.05
    seed = args.seed if args.seed is not None else 0
    reps = args.repetitions if args.repetitions is not None else 1
    overrides = {
        k: getattr(args, k)
        for k in ("t", "m", "eta", "prune_threshold", "max_survivors", "R", "T")
        if getattr(args, k) is not None
    }
    ds = read_dataset(args.dataset)
    cfg = ExperimentConfig(
        protocol=args.protocol, epsilon=args.epsilon, beta=beta, seed=seed,
        repetitions=reps, threshold=args.threshold, overrides=overrides,
    )
    doc = run_experiment(cfg, ds)
    # timings go to the conventional sidecar so the result bytes stay
    # independent of wall clocks and of the chosen output path
    timings_path = args.out + ".timings.json"
    result = {
        "schema": SCHEMA_RESULT,
        "config": {
            "protocol": args.protocol,
            "dataset": args.dataset,
            "epsilon": f"{args.epsilon:.6f}",
            "beta": beta,
            "seed": seed,
            "repetitions": reps,
            "threshold": doc["threshold"],
            "overrides": overrides,
        },
        "dataset": {"n": ds.n, "domain_bits": ds.domain_bits},
        "params": _params_echo(args.protocol, ds.n, ds.d, args.epsilon, beta, overrides),
        "runs": [
            {
                "seed": run["seed"],
                "items": [[_hex(v, ds.domain_bits), e] for v, e in run["items"]],
                "meta": run["meta"],
            }
            for run in doc["runs"]
        ],
    }
    _write_json(args.out, result)
    _write_json(
        timings_path,
        {
            "schema": SCHEMA_TIMINGS,
            "runs": [{"seed": run["seed"], "timings": run["timings"]} for run in doc["runs"]],
        },
    )
    print(f"wrote {args.out} ({reps} repetition(s), {len(doc['runs'][0]['items'])} items in first list)")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    with open(args.result, encoding="utf-8") as fh:
        result = json.load(fh)
    if result.get("schema") != SCHEMA_RESULT:
        raise SystemExit(f"{args.result} is not a result file (schema {result.get('schema')!r})")
    ds = read_dataset(args.dataset)
    gt = exact_counts(ds)
    threshold = args.threshold
    if threshold is None:
        threshold = result["config"].get("threshold") or 15.0 * math.sqrt(ds.n)
    lists = [
        HeavyHitters(
            [int(h, 16) for h, _ in run["items"]],
            [float(e) for _, e in run["items"]],
            ds.domain_bits,
            run.get("meta", {}),
        )
        for run in result["runs"]
    ]
    doc = {"schema": SCHEMA_EVAL, "threshold": threshold, "result_file": args.result}
    doc.update(summarize(lists, gt, threshold))
    for row in doc["per_item"]:
        row["item"] = _hex(row["item"], ds.domain_bits)
    try:
        with open(args.result + ".timings.json", encoding="utf-8") as fh:
            timings = json.load(fh)
        phases: dict[str, list[float]] = {}
        for run in timings.get("runs", []):
            for phase, secs in run.get("timings", {}).items():
                phases.setdefault(phase, []).append(secs)
        doc["runtimes"] = {phase: float(np.mean(v)) for phase, v in sorted(phases.items())}
    except (OSError, json.JSONDecodeError):
        pass  # timings sidecar is optional
    _write_json(args.out, doc)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("item,true_f,est_mean\n")
            for row in doc["per_item"]:
                fh.write(f"{row['item']},{row['true_f']},{row['est_mean']!r}\n")
    prec = doc["metrics"]["precision"]["mean"]
    rec = doc["metrics"]["recall"]["mean"]
    print(f"precision={prec:.4f} recall={rec:.4f} threshold={threshold:.1f} -> {args.out}")
    return 0


def cmd_params(args: argparse.Namespace) -> int:
    if args.epsilon <= 0:
        raise SystemExit(f"invalid epsilon {args.epsilon}: must be > 0")
    d = 1 << args.domain_bits
    echo = _params_echo(args.protocol, args.n, d, args.epsilon, args.beta, {})
    echo.update({"n": args.n, "domain_bits": args.domain_bits, "epsilon": f"{args.epsilon:.6f}", "beta": args.beta})
    print(json.dumps(echo, sort_keys=True, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldp-hh", description="Locally private heavy hitters simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate or ingest a dataset file")
    g.add_argument("--dist", choices=["powerlaw", "corpus"], required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--domain-bits", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--power", type=float, default=15.0)
    g.add_argument("--bins", type=int, default=100)
    g.add_argument("--corpus", default=None, help="newline-delimited token file")
    g.add_argument("--token-length", type=int, default=6)
    g.set_defaults(func=cmd_gen_data)

    r = sub.add_parser("run", help="run a protocol over a dataset")
    r.add_argument("--config", default=None, help="key=value file; flags take precedence")
    r.add_argument("--protocol", choices=["treehist", "bitstogram", "explicit-oracle"], default=None)
    r.add_argument("--dataset", default=None)
    r.add_argument("--epsilon", type=float, default=None)
    r.add_argument("--beta", type=float, default=None)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--repetitions", type=int, default=None)
    r.add_argument("--threshold", type=float, default=None)
    r.add_argument("--out", default=None)
    r.add_argument("--t", type=int, default=None, help="override hash-pair count")
    r.add_argument("--m", type=int, default=None, help="override sketch width")
    r.add_argument("--eta", type=float, default=None, help="override pruning scale")
    r.add_argument("--prune-threshold", type=float, default=None)
    r.add_argument("--max-survivors", type=int, default=None)
    r.add_argument("--R", type=int, default=None, help="override repetition count")
    r.add_argument("--T", type=int, default=None, help="override hash range")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="score a result file against its dataset")
    e.add_argument("--result", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--threshold", type=float, default=None)
    e.add_argument("--out", required=True)
    e.add_argument("--csv", default=None)
    e.set_defaults(func=cmd_eval)

    p = sub.add_parser("params", help="print derived parameters")
    p.add_argument("--protocol", choices=["treehist", "bitstogram"], default="treehist")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--domain-bits", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--beta", type=float, default=0.05)
    p.set_defaults(func=cmd_params)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
