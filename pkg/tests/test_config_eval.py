import json

import numpy as np
import pytest

from ntssl.config import ConfigError, RunConfig
from ntssl.encoder import EncoderConfig, init_params
from ntssl.evaluate import (
    evaluate,
    feature_probes,
    flat_metrics,
    metric_values_in_unit_interval,
    noise_free_attribute_set,
    read_report,
    write_report,
)
from ntssl.probe import ProbeConfig


def test_default_config_file_matches_defaults():
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "configs" / "default.json"
    assert RunConfig.load(path) == RunConfig()


def test_round_trip_dict():
    cfg = RunConfig().override("train", K=3).override("schedule", tau_min=0.5)
    again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    assert again.train.schedule.tau_min == 0.5


@pytest.mark.parametrize("raw", [
    {"nope": {}},
    {"train": {"bogus": 1}},
    {"train": {"schedule": {}}},
    {"train": {"batch_size": 1}},
    {"eval": {"tasks": ["retrieval", "x"]}},
    [],
])
def test_rejects_bad_config(raw):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(raw)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        RunConfig.load(tmp_path / "nope.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError, match="not valid JSON"):
        RunConfig.load(tmp_path / "bad.json")


def test_override_ignores_none():
    cfg = RunConfig()
    assert cfg.override("train", K=None) is cfg
    with pytest.raises(ConfigError):
        cfg.override("train", batch_size=0)


@pytest.fixture(scope="module")
def report(small_dataset_module):
    ds = small_dataset_module
    enc = EncoderConfig(d_in=ds.d_in, L=ds.L, d_model=8, num_heads=2, d_ff=16, proj_hidden=8, proj_out=4)
    return evaluate(ds, init_params(enc, 0), enc, ("retrieval", "reid", "probe"), ProbeConfig(epochs=1))


@pytest.fixture(scope="module")
def small_dataset_module():
    from ntssl.synth import SynthConfig, generate_dataset

    return generate_dataset(SynthConfig(num_videos=6, polyps_per_video=4, seed=11))


def test_report_schema(report, tmp_path):
    assert set(report) == {"retrieval", "reid", "probes"}
    assert set(report["retrieval"]) == {"map", "hr@1", "hr@5"}
    assert set(report["reid"]) == {"auroc", "aupr"}
    assert report["probes"]["size_class"]["metric"] == "f1_identity_weighted"
    assert report["probes"]["histology_class"]["metric"] == "accuracy"
    assert metric_values_in_unit_interval(report)
    write_report(report, tmp_path / "r.json")
    assert read_report(tmp_path / "r.json") == report
    assert set(flat_metrics(report)) == {"map", "hr@1", "hr@5", "auroc", "aupr", "size_class", "histology_class"}


def test_task_selection(small_dataset_module):
    ds = small_dataset_module
    enc = EncoderConfig(d_in=ds.d_in, L=ds.L, d_model=8, num_heads=2, d_ff=16, proj_hidden=8, proj_out=4)
    out = evaluate(ds, init_params(enc, 0), enc, ("retrieval",))
    assert set(out) == {"retrieval"}
    with pytest.raises(ValueError):
        evaluate(ds, init_params(enc, 0), enc, ("bogus",))


def test_noise_free_attribute_set_is_clean():
    ds = noise_free_attribute_set(num_videos=2, seed=3)
    # no drift and no frame noise: every frame of a tracklet is the same vector
    frames = ds.training_view().frames
    assert np.array_equal(frames, np.broadcast_to(frames[:, :1, :], frames.shape))
    probes = feature_probes(ds, ProbeConfig(epochs=1))
    assert set(probes) == {"size_class", "histology_class"}
    assert all(0.0 <= b["value"] <= 1.0 for b in probes.values())
