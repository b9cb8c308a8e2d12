"""Command line interface.

Exit codes: 0 success, 2 bad input, 3 uncontrollable system, 4 numerical failure.
Results go to files; stdout gets a one-line summary.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import BenchConfig, generate_system, run_benchmark
from .conditioning import OptimizerSettings
from .core import InputError, NumericalError, Uncontrollable, load_system, save_system
from .luenberger import luenberger_pipeline
from .parametrization import random_parameters
from .pipeline import proposed_pipeline, verify_triple
from .staircase import index_summary, reduce_to_staircase

EXIT_OK, EXIT_INPUT, EXIT_UNCONTROLLABLE, EXIT_NUMERICAL = 0, 2, 3, 4
OUTPUT_DIR_ENV = "BRUNOVSKY_OUTPUT_DIR"

log = logging.getLogger("brunovsky")


def _output_path(args, input_path: str | None, suffix: str) -> Path:
    if args.out:
        return Path(args.out)
    base = Path(os.environ.get(OUTPUT_DIR_ENV, "."))
    stem = Path(input_path).stem if input_path else "system"
    return base / f"{stem}.{suffix}.json"


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InputError("config file must hold a JSON object")
    return cfg


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2))


def cmd_staircase(args) -> int:
    sys_ = load_system(args.input)
    stair = reduce_to_staircase(sys_)
    idx = index_summary(stair)
    out = _output_path(args, args.input, "staircase")
    _write_json(out, {"staircase": stair.to_dict(), "indices": idx.to_dict()})
    print(f"weyr={list(stair.weyr)} mu={list(idx.mu)} -> {out}")
    return EXIT_OK


def cmd_transform(args) -> int:
    cfg = _load_config(args.config)
    sys_ = load_system(args.input)
    if args.method == "luenberger":
        triple = verify_triple(sys_, luenberger_pipeline(sys_))
        payload = {"method": "luenberger", "triple": triple.to_dict()}
    else:
        try:
            settings = OptimizerSettings.from_dict(cfg.get("optimizer"))
        except (TypeError, ValueError) as exc:
            raise InputError(str(exc)) from exc
        init = None
        if args.seed is not None:
            idx = index_summary(reduce_to_staircase(sys_))
            init = random_parameters(idx, args.seed)
        res = proposed_pipeline(
            sys_,
            deadbeat=not args.no_deadbeat,
            optimize=not args.no_optimize,
            settings=settings,
            init=init,
        )
        triple = res.triple
        payload = {"method": "proposed", "deadbeat": not args.no_deadbeat, "optimize": not args.no_optimize}
        payload.update(res.to_dict())
    out = _output_path(args, args.input, f"{args.method}")
    _write_json(out, payload)
    d = triple.diagnostics
    print(
        f"{args.method}: mu={list(triple.mu)} residual_A={d['residual_A']:.3e} "
        f"residual_B={d['residual_B']:.3e} kappa_T={d['kappa_T']:.3e} -> {out}"
    )
    return EXIT_OK


def _parse_cond_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise InputError(f"--cond-range must look like lo:hi, got {text!r}") from exc
    return lo, hi


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise InputError(f"expected comma-separated integers, got {text!r}") from exc


def cmd_bench(args) -> int:
    cfg = _load_config(args.config)
    flags = {
        "trials": args.trials,
        "n": args.n,
        "m": args.m,
        "indices": _parse_int_list(args.indices) if args.indices else None,
        "cond_range": _parse_cond_range(args.cond_range) if args.cond_range else None,
        "seed": args.seed,
        "methods": args.methods.split(",") if args.methods else None,
        "mode": args.mode,
        "workers": args.workers,
        "timing": True if args.timing else None,
    }
    cfg.update({k: v for k, v in flags.items() if v is not None})
    try:
        config = BenchConfig(**cfg)
        config.validate()
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    result = run_benchmark(config)
    out_dir = Path(args.out or os.environ.get(OUTPUT_DIR_ENV, "bench_out"))
    paths = result.write(out_dir, plot_script=not args.no_plot_script)
    summary = result.summary()["methods"]
    parts = [
        f"{m}: median err_Ab={summary[m]['err_Ab']['median']:.2e} failed={summary[m]['failed']}"
        for m in config.methods
    ]
    print(f"{config.trials} trials; " + "; ".join(parts) + f" -> {paths['csv']}")
    return EXIT_OK


def cmd_generate(args) -> int:
    mu = _parse_int_list(args.indices)
    sys_, truth = generate_system(mu, args.cond, args.seed, args.mode)
    out = Path(args.out) if args.out else Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / "system.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_system(sys_, out)
    if args.truth:
        _write_json(Path(args.truth), truth.to_dict())
    print(f"n={sys_.n} m={sys_.m} mu={mu} -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="brunovsky", description="Numerically reliable Brunovsky transformations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("staircase", help="staircase form, Weyr characteristics and controllability indices")
    s.add_argument("input", help="system JSON file")
    s.add_argument("--out", help="output JSON path")
    s.set_defaults(func=cmd_staircase)

    t = sub.add_parser("transform", help="compute a Brunovsky transformation (T, F, G)")
    t.add_argument("input", help="system JSON file")
    t.add_argument("--method", choices=("proposed", "luenberger"), default="proposed")
    t.add_argument("--no-deadbeat", action="store_true", help="skip the deadbeat preprocessing")
    t.add_argument("--no-optimize", action="store_true", help="skip the condition number optimization")
    t.add_argument("--seed", type=int, help="start from random parameters drawn with this seed")
    t.add_argument("--config", help="JSON config with an 'optimizer' section")
    t.add_argument("--out", help="output JSON path")
    t.set_defaults(func=cmd_transform)

    b = sub.add_parser("bench", help="compare the proposed and Luenberger methods on random systems")
    b.add_argument("--trials", type=int)
    b.add_argument("--n", type=int)
    b.add_argument("--m", type=int)
    b.add_argument("--indices", help="controllability indices, e.g. 5,5,3,2")
    b.add_argument("--cond-range", help="conditioning sweep lo:hi, e.g. 1e2:1e12")
    b.add_argument("--seed", type=int)
    b.add_argument("--methods", help="comma-separated subset of proposed,luenberger")
    b.add_argument("--mode", choices=("dynamics", "transform"), help="where the generator puts the ill-conditioning")
    b.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
    b.add_argument("--timing", action="store_true", help="record wall times (makes the CSV non-reproducible)")
    b.add_argument("--no-plot-script", action="store_true")
    b.add_argument("--config", help="JSON file with benchmark settings; flags win")
    b.add_argument("--out", help="output directory")
    b.set_defaults(func=cmd_bench)

    g = sub.add_parser("generate", help="write a random system with prescribed indices")
    g.add_argument("--indices", required=True, help="controllability indices, e.g. 5,5,3,2")
    g.add_argument("--cond", type=float, default=1e2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--mode", choices=("dynamics", "transform"), default="dynamics")
    g.add_argument("--truth", help="also write the ground-truth triple here")
    g.add_argument("--out", help="output JSON path")
    g.set_defaults(func=cmd_generate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Uncontrollable as exc:
        where = f" (stage {exc.stage}, {exc.achieved} states reached)" if exc.stage is not None else ""
        print(f"uncontrollable: {exc}{where}", file=sys.stderr)
        return EXIT_UNCONTROLLABLE
    except NumericalError as exc:
        print(f"numerical failure: {exc}; try another --seed", file=sys.stderr)
        return EXIT_NUMERICAL
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
