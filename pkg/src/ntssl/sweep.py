"""Ablation sweep over bag sampling/curriculum and loss level."""

from __future__ import annotations

import csv
import json
import os
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import plotting
from .config import RunConfig
from .data import TrackletDataset
from .encoder import save_checkpoint
from .evaluate import evaluate, flat_metrics, write_report
from .train import train, write_log


@dataclass(frozen=True)
class Variant:
    name: str
    sampling: str
    curriculum: bool
    level: str

    @property
    def dirname(self) -> str:
        return self.name.replace(":", "-").replace("+", "-")


SAMPLER_VARIANTS = (
    Variant("sampler:topk", "topk", False, "both"),
    Variant("sampler:exp", "exp", False, "both"),
    Variant("sampler:exp+curriculum", "exp", True, "both"),
)
LEVEL_VARIANTS = (
    Variant("level:frame", "exp", True, "frame"),
    Variant("level:tracklet", "exp", True, "tracklet"),
    Variant("level:both", "exp", True, "both"),
)
ALL_VARIANTS = SAMPLER_VARIANTS + LEVEL_VARIANTS
VARIANTS_BY_NAME = {v.name: v for v in ALL_VARIANTS}


def worker_count() -> int:
    env = os.environ.get("NTSSL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"NTSSL_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def variant_config(cfg: RunConfig, v: Variant, seed: int) -> RunConfig:
    cfg = cfg.override("train", sampling=v.sampling, curriculum=v.curriculum, seed=seed)
    return cfg.override("loss", level=v.level)


def _prepare_out_dir(out_dir: Path, force: bool) -> None:
    if out_dir.exists() and any(out_dir.iterdir()):
        if not force:
            raise FileExistsError(f"output directory {out_dir} is not empty (use --force to overwrite)")
        shutil.rmtree(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)


def run_sweep(
    dataset: TrackletDataset,
    cfg: RunConfig,
    out_dir: str | Path,
    variants=ALL_VARIANTS,
    seeds=None,
    tasks=("retrieval", "reid"),
    force: bool = False,
    workers: int | None = None,
    probe_dataset: TrackletDataset | None = None,
) -> list[dict]:
    """Train and evaluate every (variant, seed); returns one seed-averaged row per variant.

    Writes ``<variant>/seed<k>/{checkpoint.bin,train_log.csv,report.json}``,
    ``ablation_runs.csv`` (per seed), ``ablation.csv`` (means) and
    ``ablation.png``. Variants with identical effective settings are trained
    once and written to each variant directory.
    """
    out_dir = Path(out_dir)
    _prepare_out_dir(out_dir, force)
    seeds = [cfg.train.seed] if seeds is None else list(seeds)
    enc = cfg.encoder.build(dataset.d_in, dataset.L)

    jobs = {}
    for v in variants:
        for s in seeds:
            key = (v.sampling, v.curriculum, v.level, s)
            jobs.setdefault(key, variant_config(cfg, v, s))

    def run(key):
        rc = jobs[key]
        result = train(dataset, enc, rc.loss, rc.train)
        report = evaluate(dataset, result.params, enc, tasks, rc.probe, rc.eval.space, probe_dataset)
        return key, result, report

    n_workers = workers or worker_count()
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            done = dict((k, (r, rep)) for k, r, rep in pool.map(run, sorted(jobs)))
    else:
        done = {k: (r, rep) for k, r, rep in map(run, sorted(jobs))}

    run_rows, rows = [], []
    for v in variants:
        per_seed = []
        for s in seeds:
            key = (v.sampling, v.curriculum, v.level, s)
            result, report = done[key]
            rc = jobs[key]
            run_dir = out_dir / v.dirname / f"seed{s}"
            run_dir.mkdir(parents=True, exist_ok=True)
            save_checkpoint(run_dir / "checkpoint.bin", result.params, enc, {"config": rc.to_dict(), "variant": v.name})
            write_log(result.log, run_dir / "train_log.csv")
            write_report({**report, "provenance": {"config": rc.to_dict(), "variant": v.name, "seed": s}},
                         run_dir / "report.json")
            flat = flat_metrics(report)
            per_seed.append(flat)
            run_rows.append({"variant": v.name, "seed": s, **flat})
        keys = per_seed[0].keys()
        rows.append({"variant": v.name, "seeds": len(seeds), **{k: float(np.mean([p[k] for p in per_seed])) for k in keys}})

    _write_csv(run_rows, out_dir / "ablation_runs.csv")
    _write_csv(rows, out_dir / "ablation.csv")
    (out_dir / "sweep_config.json").write_text(
        json.dumps({"config": cfg.to_dict(), "seeds": seeds, "variants": [v.name for v in variants]}, indent=2) + "\n"
    )
    plotting.ablation_bars(rows, out_dir / "ablation.png")
    return rows


def _write_csv(rows: list[dict], path: Path) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def read_csv(path: str | Path) -> list[dict]:
    with Path(path).open() as fh:
        return list(csv.DictReader(fh))


def with_steps(cfg: RunConfig, steps: int | None) -> RunConfig:
    return cfg if steps is None else replace(cfg, train=replace(cfg.train, total_steps=steps))
