"""Command-line entry point: generate | train | eval | diagnose-sampler | sweep."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .config import ConfigError, RunConfig
from .data import DatasetFormatError, load_dataset, save_dataset
from .encoder import CheckpointError, load_checkpoint, save_checkpoint
from .evaluate import TASKS, evaluate, write_report
from .probe import ProbeSplitError
from .sampler import InsufficientCandidates, RankIndex, curriculum_tau, diagnose
from .sweep import VARIANTS_BY_NAME, ALL_VARIANTS, run_sweep, worker_count
from .synth import generate_dataset
from .train import NonFiniteLoss, train, write_log

EXIT_USAGE, EXIT_MISMATCH, EXIT_NUMERIC = 2, 3, 4

log = logging.getLogger("ntssl")


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind = code, kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, "usage", f"{self.prog}: {message}")


def _load_config(path) -> RunConfig:
    return RunConfig.load(path)


def _load_data(path: str):
    p = Path(path)
    if not p.is_file():
        raise CliError(EXIT_USAGE, "usage", f"dataset file not found: {p}")
    try:
        return load_dataset(p)
    except DatasetFormatError as exc:
        raise CliError(EXIT_MISMATCH, "data", f"{p}: {exc}") from None


def _echo(cfg: RunConfig, **extra) -> dict:
    return {"config": cfg.to_dict(), **extra}


# -- generate -------------------------------------------------------------------

def cmd_generate(args) -> int:
    if args.config is None:
        raise CliError(EXIT_USAGE, "usage", "generate requires a config file")
    cfg = _load_config(args.config)
    cfg = cfg.override("synth", seed=args.seed)
    try:
        ds = generate_dataset(cfg.synth, cfg.builder)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, "config", str(exc)) from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out)
    polyps = ds.polyp_ids()
    index = RankIndex.from_dataset(ds)
    usable = index.usable(cfg.train.K).size
    print(f"wrote {out}: N={len(ds)} L={ds.L} d_in={ds.d_in} "
          f"videos={len({t.video_id for t in ds})} polyps={len(set(polyps))} "
          f"usable_anchors(K={cfg.train.K})={usable}")
    return 0


# -- train ----------------------------------------------------------------------

def _train_overrides(cfg: RunConfig, args) -> RunConfig:
    cfg = cfg.override("train", total_steps=args.steps, K=args.K, sampling=args.sampling,
                       curriculum=args.curriculum, seed=args.seed, lr=args.lr, batch_size=args.batch_size)
    cfg = cfg.override("schedule", tau_min=args.tau_min, tau_max=args.tau_max)
    return cfg.override("loss", level=args.level)


def cmd_train(args) -> int:
    cfg = _train_overrides(_load_config(args.config), args)
    ds = _load_data(args.data)
    enc = cfg.encoder.build(ds.d_in, ds.L)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = train(ds, enc, cfg.loss, cfg.train, dump_dir=out)
    except NonFiniteLoss as exc:
        raise CliError(EXIT_NUMERIC, "numeric", str(exc)) from None
    except InsufficientCandidates as exc:
        raise CliError(EXIT_MISMATCH, "data", str(exc)) from None
    save_checkpoint(out / "checkpoint.bin", result.params, enc, _echo(cfg))
    write_log(result.log, out / "train_log.csv")
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    plotting.training_curves(result.log, out / "train_log.png")
    first, last = result.log[0]["loss_total"], result.log[-1]["loss_total"]
    print(f"trained {len(result.log)} step(s): loss {first:.4f} -> {last:.4f}; wrote {out / 'checkpoint.bin'}")
    return 0


# -- eval -----------------------------------------------------------------------

def _parse_tasks(raw: str | None, default) -> tuple[str, ...]:
    if raw is None:
        return tuple(default)
    tasks = tuple(t.strip() for t in raw.split(",") if t.strip())
    bad = set(tasks) - set(TASKS)
    if bad or not tasks:
        raise CliError(EXIT_USAGE, "usage", f"--tasks must be a comma list drawn from {','.join(TASKS)}")
    return tasks


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    cfg = cfg.override("probe", split_seed=args.seed)
    tasks = _parse_tasks(args.tasks, cfg.eval.tasks)
    ds = _load_data(args.data)
    if not Path(args.checkpoint).is_file():
        raise CliError(EXIT_USAGE, "usage", f"checkpoint not found: {args.checkpoint}")
    try:
        params, enc, extra = load_checkpoint(args.checkpoint)
    except CheckpointError as exc:
        raise CliError(EXIT_MISMATCH, "checkpoint", str(exc)) from None
    if (enc.L, enc.d_in) != (ds.L, ds.d_in):
        raise CliError(EXIT_MISMATCH, "mismatch",
                       f"config mismatch: checkpoint L={enc.L}, d_in={enc.d_in}; dataset L={ds.L}, d_in={ds.d_in}")
    probe_ds = _load_data(args.probe_data) if args.probe_data else None
    if probe_ds is not None and (probe_ds.L, probe_ds.d_in) != (ds.L, ds.d_in):
        raise CliError(EXIT_MISMATCH, "mismatch", "config mismatch: --probe-data shape differs from --data")
    try:
        report = evaluate(ds, params, enc, tasks, cfg.probe, args.space or cfg.eval.space, probe_ds)
    except (DatasetFormatError, ProbeSplitError) as exc:
        raise CliError(EXIT_MISMATCH, "data", str(exc)) from None
    report["provenance"] = {
        "checkpoint": str(args.checkpoint),
        "dataset": str(args.data),
        "probe_dataset": args.probe_data,
        "tasks": list(tasks),
        "eval_config": cfg.to_dict(),
        "train_config": extra.get("config"),
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report(report, out)
    print(json.dumps({k: v for k, v in report.items() if k != "provenance"}, sort_keys=True))
    return 0


# -- diagnose-sampler -------------------------------------------------------------

def cmd_diagnose_sampler(args) -> int:
    cfg = _load_config(args.config)
    cfg = cfg.override("train", K=args.K)
    cfg = cfg.override("schedule", tau_min=args.tau_min, tau_max=args.tau_max)
    if args.grid < 2:
        raise CliError(EXIT_USAGE, "usage", "--grid must be >= 2")
    ds = _load_data(args.data)
    try:
        codes = np.unique(ds.polyp_ids(), return_inverse=True)[1]
    except DatasetFormatError as exc:
        raise CliError(EXIT_MISMATCH, "data", f"purity needs polyp ids: {exc}") from None
    cs = np.arange(args.grid) / (args.grid - 1)
    taus = [curriculum_tau(cfg.schedule, float(c)) for c in cs]
    try:
        stats = diagnose(RankIndex.from_dataset(ds), codes, cfg.train.K, taus, args.samples, args.seed)
    except InsufficientCandidates as exc:
        raise CliError(EXIT_MISMATCH, "data", str(exc)) from None
    rows = [{"c": float(c), "tau": t, "mean_rank": r, "purity": p} for c, t, (r, p) in zip(cs, taus, stats)]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["c", "tau", "mean_rank", "purity"])
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) for k, v in row.items()})
    fig = plotting.sampler_diagnostics(rows, out.with_suffix(".png"))
    print(f"wrote {out} and {fig}")
    return 0


# -- sweep ------------------------------------------------------------------------

def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    cfg = cfg.override("train", total_steps=args.steps)
    ds = _load_data(args.data)
    if args.variants:
        names = [n.strip() for n in args.variants.split(",") if n.strip()]
        bad = [n for n in names if n not in VARIANTS_BY_NAME]
        if bad:
            raise CliError(EXIT_USAGE, "usage", f"unknown variant(s) {bad}; choose from {sorted(VARIANTS_BY_NAME)}")
        variants = [VARIANTS_BY_NAME[n] for n in names]
    else:
        variants = list(ALL_VARIANTS)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [args.seed if args.seed is not None else cfg.train.seed]
    tasks = _parse_tasks(args.tasks, ("retrieval", "reid"))
    try:
        rows = run_sweep(ds, cfg, args.out_dir, variants, seeds, tasks, force=args.force, workers=worker_count())
    except FileExistsError as exc:
        raise CliError(EXIT_USAGE, "exists", str(exc)) from None
    except NonFiniteLoss as exc:
        raise CliError(EXIT_NUMERIC, "numeric", str(exc)) from None
    for row in rows:
        print(f"{row['variant']:<24} map={row.get('map', float('nan')):.4f} auroc={row.get('auroc', float('nan')):.4f}")
    return 0


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ntssl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("generate", help="synthesize a tracklet dataset")
    g.add_argument("config", nargs="?", help="JSON run config")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="contrastive training")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--config")
    t.add_argument("--steps", type=int)
    t.add_argument("--K", type=int)
    t.add_argument("--tau-min", type=float)
    t.add_argument("--tau-max", type=float)
    t.add_argument("--sampling", choices=("topk", "exp"))
    t.add_argument("--curriculum", dest="curriculum", action="store_true", default=None)
    t.add_argument("--no-curriculum", dest="curriculum", action="store_false")
    t.add_argument("--level", choices=("tracklet", "frame", "both"))
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="retrieval / ReID / probe metrics")
    e.add_argument("--data", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--tasks", help="comma list of retrieval,reid,probe")
    e.add_argument("--out", required=True)
    e.add_argument("--config")
    e.add_argument("--space", choices=("hidden", "projected"))
    e.add_argument("--seed", type=int)
    e.add_argument("--probe-data", help="separate dataset for attribute probes (default: --data)")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("diagnose-sampler", help="sampled rank and bag purity over the curriculum")
    d.add_argument("--data", required=True)
    d.add_argument("--samples", type=int, default=10000, help="bags per grid point")
    d.add_argument("--grid", type=int, default=11)
    d.add_argument("--out", required=True)
    d.add_argument("--config")
    d.add_argument("--K", type=int)
    d.add_argument("--tau-min", type=float)
    d.add_argument("--tau-max", type=float)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_diagnose_sampler)

    s = sub.add_parser("sweep", help="ablation over sampling/curriculum and loss level")
    s.add_argument("--data", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--config")
    s.add_argument("--steps", type=int)
    s.add_argument("--variants", help=f"comma list from {','.join(VARIANTS_BY_NAME)}")
    s.add_argument("--seeds", help="comma list of training seeds")
    s.add_argument("--seed", type=int)
    s.add_argument("--tasks", help="comma list of retrieval,reid,probe (default retrieval,reid)")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.command is None:
            raise CliError(EXIT_USAGE, "usage", "a subcommand is required: generate|train|eval|diagnose-sampler|sweep")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except CliError as exc:
        print(f"error[{exc.kind}]: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"error[numeric]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
