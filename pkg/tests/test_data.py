import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ntssl.data import SCHEMA, BoundingBox, DatasetFormatError, TrackletDataset, load_dataset, save_dataset

from conftest import make_tracklet


def test_bounding_box_rejects_degenerate():
    with pytest.raises(ValueError):
        BoundingBox(1, 0, 1, 2)
    assert BoundingBox(0, 0, 2, 3).area == 6


def test_empty_dataset_round_trip(tmp_path):
    ds = TrackletDataset.from_tracklets([], L=8, d_in=4)
    path = tmp_path / "empty.jsonl"
    save_dataset(ds, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 1 and json.loads(lines[0])["schema"] == SCHEMA
    back = load_dataset(path)
    assert back.N == 0 and back.L == 8 and back.d_in == 4


def test_two_records_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    ts = [make_tracklet(f"v/t{i}", "v", 4 * i, fill=rng.normal(size=(8, 4))) for i in range(2)]
    ds = TrackletDataset.from_tracklets(ts)
    save_dataset(ds, tmp_path / "d.jsonl")
    back = load_dataset(tmp_path / "d.jsonl")
    assert (back.N, back.L, back.d_in) == (2, 8, 4)
    assert back == ds


def test_absent_polyp_id_is_omitted(tmp_path):
    ds = TrackletDataset.from_tracklets([make_tracklet("a", "v", 0), make_tracklet("b", "v", 3, polyp="p")])
    save_dataset(ds, tmp_path / "d.jsonl")
    records = [json.loads(x) for x in (tmp_path / "d.jsonl").read_text().splitlines()[1:]]
    assert "polyp_id" not in records[0] and records[1]["polyp_id"] == "p"
    back = load_dataset(tmp_path / "d.jsonl")
    assert back[0].polyp_id is None and back == ds


def test_inconsistent_length_reports_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = {"tracklet_id": "a", "video_id": "v", "position": 0, "frames": [[0.0] * 4] * 8}
    bad = {"tracklet_id": "b", "video_id": "v", "position": 4, "frames": [[0.0] * 4] * 7}
    path.write_text("\n".join(json.dumps(x) for x in ({"schema": SCHEMA, "L": 8, "d_in": 4}, good, bad)) + "\n")
    with pytest.raises(DatasetFormatError, match="inconsistent tracklet length"):
        load_dataset(path)


def test_malformed_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps({"schema": SCHEMA, "L": 1, "d_in": 1}) + "\n{not json\n")
    with pytest.raises(DatasetFormatError, match="line 2"):
        load_dataset(path)


def test_duplicate_ids_rejected():
    with pytest.raises(DatasetFormatError, match="duplicate"):
        TrackletDataset.from_tracklets([make_tracklet("a", "v", 0), make_tracklet("a", "v", 1)])


def test_inconsistent_dim_rejected():
    with pytest.raises(DatasetFormatError, match="feature dimension"):
        TrackletDataset.from_tracklets([make_tracklet("a", "v", 0), make_tracklet("b", "v", 1, d_in=5)])


def test_tracklet_frames_read_only():
    t = make_tracklet("a", "v", 0)
    with pytest.raises(ValueError):
        t.frames[0, 0] = 1.0


def test_training_view_has_no_labels(small_dataset):
    view = small_dataset.training_view()
    assert set(vars(view)) == {"tracklet_ids", "video_ids", "positions", "frames"}
    assert view.frames.shape == (small_dataset.N, small_dataset.L, small_dataset.d_in)


def test_missing_labels_raise():
    ds = TrackletDataset.from_tracklets([make_tracklet("a", "v", 0)])
    with pytest.raises(DatasetFormatError):
        ds.polyp_ids()
    with pytest.raises(DatasetFormatError):
        ds.attribute("size_class")


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(0, 5),
    st.integers(1, 4),
    st.integers(1, 3),
    st.data(),
)
def test_round_trip_property(tmp_path_factory, n, L, d_in, data):
    ts = []
    for i in range(n):
        frames = np.array(data.draw(st.lists(st.lists(finite, min_size=d_in, max_size=d_in), min_size=L, max_size=L)))
        polyp = data.draw(st.one_of(st.none(), st.text(min_size=1, max_size=5)))
        attrs = data.draw(st.one_of(st.none(), st.fixed_dictionaries({"size_class": st.integers(0, 1)})))
        ts.append(make_tracklet(f"id{i}", data.draw(st.sampled_from(["a", "b"])), data.draw(st.integers(0, 10**6)),
                                polyp=polyp, attrs=attrs, fill=frames))
    ds = TrackletDataset.from_tracklets(ts, L=L, d_in=d_in)
    path = tmp_path_factory.mktemp("rt") / "d.jsonl"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert back == ds
    assert [t.tracklet_id for t in back] == [t.tracklet_id for t in ds]
    for a, b in zip(ds, back):
        assert a.frames.tobytes() == b.frames.tobytes()
