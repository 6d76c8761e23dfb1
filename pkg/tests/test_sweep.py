import pytest

from ntssl.config import RunConfig
from ntssl.sweep import ALL_VARIANTS, LEVEL_VARIANTS, SAMPLER_VARIANTS, read_csv, run_sweep, worker_count
from ntssl.synth import SynthConfig, generate_dataset

SMALL = RunConfig.from_dict({
    "encoder": {"d_model": 8, "num_heads": 2, "d_ff": 16, "proj_hidden": 8, "proj_out": 4},
    "train": {"total_steps": 2, "batch_size": 8},
})


@pytest.fixture(scope="module")
def ds():
    return generate_dataset(SynthConfig(num_videos=4, polyps_per_video=3, seed=1))


def test_enumeration():
    assert len(ALL_VARIANTS) == 6
    assert [(v.sampling, v.curriculum) for v in SAMPLER_VARIANTS] == [("topk", False), ("exp", False), ("exp", True)]
    assert {v.level for v in SAMPLER_VARIANTS} == {"both"}
    assert [v.level for v in LEVEL_VARIANTS] == ["frame", "tracklet", "both"]
    assert all(v.sampling == "exp" and v.curriculum for v in LEVEL_VARIANTS)


def test_sampler_variants_plumbing(ds, tmp_path):
    rows = run_sweep(ds, SMALL, tmp_path / "s", SAMPLER_VARIANTS, seeds=[0], workers=1)
    assert len(rows) == 3
    assert len(list((tmp_path / "s").glob("*/seed0/checkpoint.bin"))) == 3
    assert len(list((tmp_path / "s").glob("*/seed0/report.json"))) == 3
    assert len(read_csv(tmp_path / "s" / "ablation.csv")) == 3
    assert (tmp_path / "s" / "ablation.png").exists()


def test_repeat_is_identical(ds, tmp_path):
    v = SAMPLER_VARIANTS[0]
    a = run_sweep(ds, SMALL, tmp_path / "a", [v], seeds=[0, 1], workers=1)
    b = run_sweep(ds, SMALL, tmp_path / "b", [v], seeds=[0, 1], workers=2)
    assert a == b
    assert (tmp_path / "a" / "ablation_runs.csv").read_text() == (tmp_path / "b" / "ablation_runs.csv").read_text()


def test_same_settings_share_runs(ds, tmp_path):
    # sampler:exp+curriculum and level:both are the same configuration
    rows = run_sweep(ds, SMALL, tmp_path / "d", [SAMPLER_VARIANTS[2], LEVEL_VARIANTS[2]], seeds=[0], workers=1)
    assert {k: v for k, v in rows[0].items() if k != "variant"} == {k: v for k, v in rows[1].items() if k != "variant"}


def test_refuses_overwrite(ds, tmp_path):
    run_sweep(ds, SMALL, tmp_path / "o", [SAMPLER_VARIANTS[0]], seeds=[0], workers=1)
    with pytest.raises(FileExistsError):
        run_sweep(ds, SMALL, tmp_path / "o", [SAMPLER_VARIANTS[0]], seeds=[0], workers=1)
    run_sweep(ds, SMALL, tmp_path / "o", [SAMPLER_VARIANTS[0]], seeds=[0], workers=1, force=True)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("NTSSL_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("NTSSL_THREADS", "x")
    with pytest.raises(ValueError):
        worker_count()
    monkeypatch.delenv("NTSSL_THREADS")
    assert worker_count() >= 1
