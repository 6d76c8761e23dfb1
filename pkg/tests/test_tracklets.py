import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ntssl.data import BoundingBox
from ntssl.tracklets import BuilderConfig, build_tracklets, chain_detections, iou, windows

from conftest import make_detection


def test_defaults():
    cfg = BuilderConfig()
    assert (cfg.iou_threshold, cfg.subsample_stride, cfg.tracklet_length) == (0.1, 4, 8)


def test_iou_cases():
    a = BoundingBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(BoundingBox(0, 0, 1, 1), BoundingBox(5, 5, 6, 6)) == 0.0
    assert iou(a, BoundingBox(5, 0, 15, 10)) == pytest.approx(50 / 150, abs=1e-15)


def test_identical_consecutive_boxes_chain():
    chains = chain_detections([make_detection("v", 0), make_detection("v", 1)])
    assert [len(c) for c in chains] == [2]


def test_zero_iou_splits():
    chains = chain_detections([make_detection("v", 0), make_detection("v", 1, box=(50, 50, 60, 60))])
    assert [len(c) for c in chains] == [1, 1]


def test_low_iou_in_middle():
    # third box overlaps the second with IoU 0.05, then stays put
    boxes = [(0, 0, 10, 10), (0, 0, 10, 10)]
    # width-w overlap on a 10x10 box: w*10 / (200 - w*10) = 0.05 -> w = 20/21
    shift = 10 - 20 / 21
    boxes += [(shift, 0, shift + 10, 10)] * 3
    stream = [make_detection("v", i, box=b) for i, b in enumerate(boxes)]
    assert iou(stream[1].box, stream[2].box) == pytest.approx(0.05)
    assert [len(c) for c in chain_detections(stream)] == [2, 3]


def test_frame_gap_splits():
    chains = chain_detections([make_detection("v", 0), make_detection("v", 2)])
    assert [len(c) for c in chains] == [1, 1]


def test_unsorted_input_rejected():
    with pytest.raises(ValueError, match="unsorted input"):
        chain_detections([make_detection("v", 3), make_detection("v", 2)])


def test_track_mode_uses_identity():
    cfg = BuilderConfig(chain_by="track")
    stream = [make_detection("v", 0, polyp="a"), make_detection("v", 1, box=(50, 50, 60, 60), polyp="a"),
              make_detection("v", 2, polyp="b")]
    assert [len(c) for c in chain_detections(stream, cfg)] == [2, 1]


@pytest.mark.parametrize("n,expected", [(64, 2), (31, 1), (7, 0)])
def test_window_counts(n, expected):
    chain = [make_detection("v", i, polyp="p") for i in range(n)]
    out = windows(chain)
    assert len(out) == expected
    for t in out:
        assert t.L == 8 and t.polyp_id == "p"


def test_window_positions_and_ids():
    chain = [make_detection("v", 100 + i) for i in range(64)]
    out = windows(chain, start_index=3)
    assert [t.position for t in out] == [100, 132]
    assert [t.tracklet_id for t in out] == ["v/t00003", "v/t00004"]
    # features carry the frame index, so the retained frames are visible
    assert list(out[0].frames[:, 0]) == [100 + 4 * k for k in range(8)]


def _stream(lengths, video):
    out, t = [], 0
    for n in lengths:
        out += [make_detection(video, t + i) for i in range(n)]
        t += n + 1
    return out


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 80), min_size=1, max_size=4), st.lists(st.integers(1, 80), min_size=1, max_size=4),
       st.integers(1, 5), st.integers(1, 9), st.randoms(use_true_random=False))
def test_builder_invariants(la, lb, stride, L, rnd):
    cfg = BuilderConfig(subsample_stride=stride, tracklet_length=L)
    a, b = _stream(la, "a"), _stream(lb, "b")
    # random interleaving that keeps per-video order
    merged, ia, ib = [], 0, 0
    while ia < len(a) or ib < len(b):
        if ib >= len(b) or (ia < len(a) and rnd.random() < 0.5):
            merged.append(a[ia]); ia += 1
        else:
            merged.append(b[ib]); ib += 1
    tracklets = build_tracklets(merged, cfg)
    assert [t.tracklet_id for t in tracklets] == [t.tracklet_id for t in build_tracklets(a + b, cfg)]
    used = []
    for t in tracklets:
        idx = t.frames[:, 0].astype(int).tolist()
        assert len(idx) == L
        assert all(y - x == stride for x, y in zip(idx, idx[1:]))
        used += [(t.video_id, i) for i in idx]
    assert len(used) == len(set(used))
    expected = sum(((n + stride - 1) // stride) // L for n in la + lb)
    assert len(tracklets) == expected
