"""Downstream evaluation of a checkpoint and the serialized metrics report."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import ATTRIBUTES, TrackletDataset
from .encoder import EncoderConfig, ParamStore
from .metrics import reid_metrics, retrieval_metrics
from .probe import ProbeConfig, probe_eval
from .synth import SynthConfig, generate_dataset
from .train import EmbeddingSet, embed_all

TASKS = ("retrieval", "reid", "probe")


def retrieval_eval(embs: EmbeddingSet, dataset: TrackletDataset) -> dict[str, float]:
    return retrieval_metrics(embs.tracklet_emb, dataset.polyp_ids(), ks=(1, 5))


def reid_eval(embs: EmbeddingSet, dataset: TrackletDataset) -> dict[str, float]:
    return reid_metrics(embs.tracklet_emb, dataset.polyp_ids())


def probe_attribute(embs: EmbeddingSet, dataset: TrackletDataset, attribute: str, cfg: ProbeConfig) -> dict:
    return probe_eval(embs.tracklet_emb, dataset.polyp_ids(), dataset.attribute(attribute), attribute, cfg)


def evaluate(
    dataset: TrackletDataset,
    params: ParamStore,
    enc_cfg: EncoderConfig,
    tasks=TASKS,
    probe_cfg: ProbeConfig = ProbeConfig(),
    space: str = "projected",
    probe_dataset: TrackletDataset | None = None,
) -> dict:
    """Metrics report with one block per requested task.

    Probes run on ``probe_dataset`` when given (a separate attribute
    evaluation set), otherwise on ``dataset``.
    """
    unknown = set(tasks) - set(TASKS)
    if unknown:
        raise ValueError(f"unknown task(s): {sorted(unknown)}")
    report: dict = {}
    embs = embed_all(dataset, params, enc_cfg, space)
    if "retrieval" in tasks:
        report["retrieval"] = retrieval_eval(embs, dataset)
    if "reid" in tasks:
        report["reid"] = reid_eval(embs, dataset)
    if "probe" in tasks:
        pds = dataset if probe_dataset is None else probe_dataset
        pembs = embs if probe_dataset is None else embed_all(pds, params, enc_cfg, space)
        report["probes"] = {a: probe_attribute(pembs, pds, a, probe_cfg) for a in ATTRIBUTES}
    return report


def noise_free_attribute_set(num_videos: int = 500, seed: int = 1000, attr_margin: float = 0.1) -> TrackletDataset:
    """Synthetic set with no drift or frame noise, for checking attribute separability."""
    return generate_dataset(SynthConfig(num_videos=num_videos, drift_scale=0.0, noise_scale=0.0,
                                        attr_margin=attr_margin, seed=seed))


def feature_probes(dataset: TrackletDataset, probe_cfg: ProbeConfig = ProbeConfig()) -> dict:
    """Probe every attribute on mean input frame features (no encoder)."""
    emb = dataset.training_view().frames.mean(axis=1)
    ids = dataset.polyp_ids()
    return {a: probe_eval(emb, ids, dataset.attribute(a), a, probe_cfg) for a in ATTRIBUTES}


def flat_metrics(report: dict) -> dict[str, float]:
    """``{"map": ..., "hr@1": ..., "auroc": ..., "size_class": ...}`` for tables."""
    flat = {}
    flat.update(report.get("retrieval", {}))
    flat.update(report.get("reid", {}))
    for attr, block in report.get("probes", {}).items():
        flat[attr] = block["value"]
    return flat


def metric_values_in_unit_interval(report: dict) -> bool:
    return all(0.0 <= v <= 1.0 and np.isfinite(v) for v in flat_metrics(report).values())


def write_report(report: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def read_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
