import numpy as np
import pytest

from ntssl.data import BoundingBox, Detection, Tracklet, TrackletDataset
from ntssl.synth import SynthConfig, generate_dataset


def make_tracklet(tid, video, position, L=2, d_in=3, polyp=None, attrs=None, fill=None):
    frames = np.full((L, d_in), float(position)) if fill is None else fill
    return Tracklet(tid, video, position, frames, polyp, attrs)


def make_detection(video, frame, box=(0, 0, 10, 10), polyp=None, d_in=2):
    return Detection(video, frame, BoundingBox(*box), np.full(d_in, float(frame)), polyp)


@pytest.fixture(scope="session")
def default_dataset() -> TrackletDataset:
    return generate_dataset(SynthConfig())


@pytest.fixture(scope="session")
def small_dataset() -> TrackletDataset:
    return generate_dataset(SynthConfig(num_videos=3, polyps_per_video=3, encounters_per_polyp=2, seed=5))
