"""Command-line entry point: gen-data, train, eval, gradcheck, sweep, bench.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric abort,
1 when gradcheck finds a failing check.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import numerics as nx
from .checkpoint import load_checkpoint
from .config import RunConfig, _format, build_config, load_config
from .errors import ConfigError, DataError, GenerationError, NumericError
from .evaluation import write_predictions
from .gradcheck import format_table, run_gradcheck
from .model import HOIModel, estimate_flops
from .synth import interaction_counts, make_splits, rare_classes, read_dataset
from .training import evaluate_model, load_split, train

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4

SWEEP_AXES = {"Kg": "k_geo", "Ks": "k_sem", "Lg": "geo_layers", "Ls": "sem_layers", "group_mode": "group_mode"}
ABLATIONS = ("none", "no-geo", "no-sem")


def _parse_sets(items) -> dict:
    values = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    return values


def resolve_config(args, seed_key: str = "seed") -> RunConfig:
    """Config file (or defaults) + ``--set`` overrides + ``--seed``."""
    base = load_config(args.config) if args.config else build_config({})
    values = _parse_sets(getattr(args, "set", None))
    if args.seed is not None:
        values[seed_key] = str(args.seed)
    if not values:
        return base
    merged = {k: _format(v) for k, v in base.resolved().items()}
    if seed_key == "seed" and "seed" in values and "init_seed" not in values:
        values["init_seed"] = values["seed"]
    merged.update(values)
    return build_config(merged, base.text)


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


def _rare_for(data_dir: Path, cfg: RunConfig) -> list[int]:
    meta = data_dir / "meta.json"
    if meta.exists():
        return list(json.loads(meta.read_text(encoding="utf-8"))["rare"])
    train_file = data_dir / "train.jsonl"
    if train_file.exists():
        return rare_classes(interaction_counts(read_dataset(train_file), cfg.synth.num_interactions))
    return []


# -- commands ---------------------------------------------------------------------------
def cmd_gen_data(args) -> int:
    cfg = resolve_config(args, seed_key="data_seed")
    out = Path(args.out or cfg.train.data_dir)
    files = make_splits(cfg.synth, cfg.train.n_train, cfg.train.n_val, cfg.train.data_seed, out)
    print(f"train: {files.train}")
    print(f"val: {files.val}")
    print(f"meta: {files.meta}")
    print("train_counts: " + ",".join(str(c) for c in files.train_counts))
    print("rare: " + ",".join(str(c) for c in files.rare))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    data_dir = Path(args.data or cfg.train.data_dir)
    for name in ("train.jsonl", "val.jsonl"):
        if not (data_dir / name).exists():
            raise DataError(f"missing {data_dir / name}; run gen-data first")
    out = Path(args.out or cfg.train.out_dir)
    res = train(cfg, data_dir, out)
    print(f"steps: {res.steps}")
    if res.losses:
        print(f"final_loss: {res.losses[-1]:.6f}")
    if res.report is not None:
        print(f"val_map: {res.report.full:.6f}")
    print(f"checkpoint: {res.checkpoint}")
    return EXIT_OK


def _load_model(cfg: RunConfig, ckpt: Path) -> HOIModel:
    model = HOIModel(cfg.model)
    load_checkpoint(ckpt, model.store, cfg.model.architecture())
    return model.eval()


def run_eval(cfg: RunConfig, ckpt: Path, data_file: Path, out: Path, ablate: str = "none",
             rare=None, top_k: int | None = None):
    if not data_file.exists():
        raise DataError(f"dataset {data_file} not found")
    model = _load_model(cfg, ckpt)
    data = load_split(data_file, cfg)
    rare = _rare_for(data_file.parent, cfg) if rare is None else rare
    report, preds = evaluate_model(model, data, cfg.synth.num_interactions, rare, ablate,
                                   cfg.train.nms_iou, top_k or cfg.train.top_k)
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "eval.csv", report.to_csv(cfg.synth.num_interactions))
    write_predictions(out / "predictions.jsonl", [s.seed for s in data.scenes], preds)
    return report


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    ckpt = Path(args.checkpoint or Path(cfg.train.out_dir) / "model.ckpt")
    if not ckpt.exists():
        raise DataError(f"checkpoint {ckpt} not found")
    data = Path(args.data) if args.data else Path(cfg.train.data_dir) / "val.jsonl"
    if data.is_dir():
        data = data / "val.jsonl"
    out = Path(args.out or Path(cfg.train.out_dir) / f"eval_{args.ablate}")
    report = run_eval(cfg, ckpt, data, out, args.ablate, top_k=args.top_k)
    fmt = lambda v: "absent" if v is None else f"{v:.6f}"
    print(f"full: {fmt(report.full)} rare: {fmt(report.rare_map)} non_rare: {fmt(report.non_rare_map)}")
    print(f"csv: {out / 'eval.csv'}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    tol = math.inf if str(args.tol).lower() in ("inf", "infinity") else float(args.tol)
    seed = args.seed if args.seed is not None else 0
    rows = run_gradcheck(tol=tol, seed=seed)
    table = format_table(rows)
    print(table, end="")
    if args.out:
        _write_text(Path(args.out) / "gradcheck.csv", table)
    return EXIT_OK if all(r.passed for r in rows) else EXIT_FAIL


def sweep_rows(cfg: RunConfig, axis: str, values: list[str], data_dir: Path, out: Path):
    """Train and evaluate once per setting.

    Returns ``(table, runs)``: the table has one ``setting,full,rare,non_rare``
    row per value; ``runs`` records final loss and step count per value.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    key = SWEEP_AXES[axis]
    rare = _rare_for(data_dir, cfg)
    table = [f"{axis},full,rare,non_rare"]
    runs = [f"{axis},final_loss,steps"]
    fmt = lambda v: "" if v is None else f"{v:.6f}"
    for value in values:
        run_cfg = cfg.with_overrides(**{key: build_config({key: value}).resolved()[key]})
        run_dir = out / f"{axis}={value}"
        res = train(run_cfg, data_dir, run_dir)
        report = run_eval(run_cfg, res.checkpoint, data_dir / "val.jsonl", run_dir / "eval", rare=rare)
        table.append(f"{value},{fmt(report.full)},{fmt(report.rare_map)},{fmt(report.non_rare_map)}")
        runs.append(f"{value},{fmt(res.losses[-1]) if res.losses else ''},{res.steps}")
    return table, runs


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    if args.axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {args.axis!r}; choose from {sorted(SWEEP_AXES)}")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values must list at least one setting")
    data_dir = Path(args.data or cfg.train.data_dir)
    if not (data_dir / "train.jsonl").exists():
        raise DataError(f"missing {data_dir / 'train.jsonl'}; run gen-data first")
    out = Path(args.out or Path(cfg.train.out_dir) / f"sweep_{args.axis}")
    table, runs = sweep_rows(cfg, args.axis, values, data_dir, out)
    _write_text(out / f"sweep_{args.axis}.csv", "\n".join(table) + "\n")
    _write_text(out / f"sweep_{args.axis}_runs.csv", "\n".join(runs) + "\n")
    print("\n".join(table))
    return EXIT_OK


def bench(cfg: RunConfig, runs: int = 100, warmup: int = 5) -> dict:
    model = HOIModel(cfg.model).eval()
    n_tokens = cfg.synth.grid_h * cfg.synth.grid_w
    rng = np.random.default_rng(cfg.train.seed)
    feats = rng.normal(size=(1, n_tokens, cfg.model.feature_dim))
    pos = rng.normal(size=(n_tokens, cfg.model.d_entity))
    with nx.no_grad():
        for _ in range(warmup):
            model(feats, pos)
        t0 = time.perf_counter()
        for _ in range(runs):
            model(feats, pos)
        elapsed = time.perf_counter() - t0
    return {"params": model.num_params(), "flops": estimate_flops(cfg.model, n_tokens),
            "runs": runs, "seconds": elapsed, "scenes_per_sec": runs / elapsed}


def cmd_bench(args) -> int:
    cfg = resolve_config(args)
    runs = max(100, args.runs)
    stats = bench(cfg, runs)
    text = "metric,value\n" + "".join(
        f"{k},{v:.6f}\n" if isinstance(v, float) else f"{k},{v}\n" for k, v in stats.items())
    print(text, end="")
    if args.out:
        _write_text(Path(args.out) / "bench.csv", text)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grouped-hoi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="override the run seed (data seed for gen-data)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        return p

    common(sub.add_parser("gen-data", help="write train/val scene files")).set_defaults(func=cmd_gen_data)
    p = common(sub.add_parser("train", help="train from scratch"))
    p.add_argument("--data", help="dataset directory (default: data_dir from config)")
    p.set_defaults(func=cmd_train)
    p = common(sub.add_parser("eval", help="evaluate a checkpoint"))
    p.add_argument("--checkpoint")
    p.add_argument("--data", help="scene file or dataset directory")
    p.add_argument("--ablate", choices=ABLATIONS, default="none")
    p.add_argument("--top-k", type=int, dest="top_k")
    p.set_defaults(func=cmd_eval)
    p = common(sub.add_parser("gradcheck", help="finite-difference gradient verification"))
    p.add_argument("--tol", default="1e-4")
    p.set_defaults(func=cmd_gradcheck)
    p = common(sub.add_parser("sweep", help="train/eval across one ablation axis"))
    p.add_argument("--axis", required=True)
    p.add_argument("--values", required=True, help="comma-separated settings")
    p.add_argument("--data")
    p.set_defaults(func=cmd_sweep)
    p = common(sub.add_parser("bench", help="parameter count, FLOP estimate and throughput"))
    p.add_argument("--runs", type=int, default=100)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, GenerationError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
