"""Domain types and the JSON Lines tracklet dataset format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

SCHEMA = "ntssl-tracklets/1"
ATTRIBUTES = ("size_class", "histology_class")


class DatasetFormatError(ValueError):
    """Malformed or inconsistent dataset file/contents."""


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate bounding box {self}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


@dataclass(frozen=True)
class Detection:
    video_id: str
    frame_index: int
    box: BoundingBox
    features: np.ndarray
    polyp_id: str | None = None


@dataclass(frozen=True, eq=False)
class Tracklet:
    """L consecutive (subsampled) detections of one polyp.

    ``position`` is the frame index of the first retained frame.
    ``polyp_id`` and ``attrs`` are ground truth for evaluation only.
    """

    tracklet_id: str
    video_id: str
    position: int
    frames: np.ndarray
    polyp_id: str | None = None
    attrs: Mapping[str, int] | None = None

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise DatasetFormatError(f"tracklet {self.tracklet_id}: frames must be a non-empty L x d_in matrix")
        if self.position < 0:
            raise DatasetFormatError(f"tracklet {self.tracklet_id}: negative position")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        if self.attrs is not None:
            object.__setattr__(self, "attrs", dict(self.attrs))

    @property
    def L(self) -> int:
        return self.frames.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tracklet):
            return NotImplemented
        return (
            self.tracklet_id == other.tracklet_id
            and self.video_id == other.video_id
            and self.position == other.position
            and self.polyp_id == other.polyp_id
            and self.attrs == other.attrs
            and self.frames.shape == other.frames.shape
            and bool(np.array_equal(self.frames, other.frames))
        )


@dataclass(frozen=True)
class TrainingView:
    """Label-free arrays the trainer is allowed to see."""

    tracklet_ids: tuple[str, ...]
    video_ids: tuple[str, ...]
    positions: np.ndarray
    frames: np.ndarray  # N x L x d_in


@dataclass(frozen=True, eq=False)
class TrackletDataset:
    tracklets: tuple[Tracklet, ...]
    L: int
    d_in: int
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        tracklets = tuple(self.tracklets)
        object.__setattr__(self, "tracklets", tracklets)
        index = {}
        for i, t in enumerate(tracklets):
            if t.frames.shape[0] != self.L:
                raise DatasetFormatError(
                    f"inconsistent tracklet length: {t.tracklet_id} has {t.frames.shape[0]} frames, expected L={self.L}"
                )
            if t.frames.shape[1] != self.d_in:
                raise DatasetFormatError(
                    f"inconsistent feature dimension: {t.tracklet_id} has d_in={t.frames.shape[1]}, expected {self.d_in}"
                )
            if t.tracklet_id in index:
                raise DatasetFormatError(f"duplicate tracklet_id {t.tracklet_id!r}")
            index[t.tracklet_id] = i
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_tracklets(cls, tracklets, L: int | None = None, d_in: int | None = None) -> "TrackletDataset":
        tracklets = tuple(tracklets)
        if tracklets:
            L = tracklets[0].frames.shape[0] if L is None else L
            d_in = tracklets[0].frames.shape[1] if d_in is None else d_in
        if L is None or d_in is None:
            raise DatasetFormatError("L and d_in are required for an empty dataset")
        return cls(tracklets, L, d_in)

    def __len__(self) -> int:
        return len(self.tracklets)

    def __iter__(self) -> Iterator[Tracklet]:
        return iter(self.tracklets)

    def __getitem__(self, i: int) -> Tracklet:
        return self.tracklets[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrackletDataset):
            return NotImplemented
        return self.L == other.L and self.d_in == other.d_in and self.tracklets == other.tracklets

    @property
    def N(self) -> int:
        return len(self.tracklets)

    def index_of(self, tracklet_id: str) -> int:
        return self._index[tracklet_id]

    def get(self, tracklet_id: str) -> Tracklet:
        return self.tracklets[self._index[tracklet_id]]

    def training_view(self) -> TrainingView:
        frames = np.stack([t.frames for t in self.tracklets]) if self.tracklets else np.zeros((0, self.L, self.d_in))
        return TrainingView(
            tracklet_ids=tuple(t.tracklet_id for t in self.tracklets),
            video_ids=tuple(t.video_id for t in self.tracklets),
            positions=np.array([t.position for t in self.tracklets], dtype=np.int64),
            frames=frames,
        )

    # evaluation-only accessors
    def polyp_ids(self) -> list[str]:
        missing = [t.tracklet_id for t in self.tracklets if t.polyp_id is None]
        if missing:
            raise DatasetFormatError(f"missing polyp_id on {len(missing)} tracklet(s), e.g. {missing[0]!r}")
        return [t.polyp_id for t in self.tracklets]

    def attribute(self, name: str) -> np.ndarray:
        if name not in ATTRIBUTES:
            raise KeyError(name)
        values = []
        for t in self.tracklets:
            if not t.attrs or name not in t.attrs:
                raise DatasetFormatError(f"tracklet {t.tracklet_id!r} lacks attribute {name!r}")
            values.append(int(t.attrs[name]))
        return np.array(values, dtype=np.int64)


def _record(t: Tracklet) -> dict:
    rec = {
        "tracklet_id": t.tracklet_id,
        "video_id": t.video_id,
        "position": int(t.position),
        # float repr is the shortest string that round-trips exactly
        "frames": t.frames.tolist(),
    }
    if t.polyp_id is not None:
        rec["polyp_id"] = t.polyp_id
    if t.attrs is not None:
        rec["attrs"] = {k: int(v) for k, v in t.attrs.items()}
    return rec


def save_dataset(dataset: TrackletDataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": SCHEMA, "L": dataset.L, "d_in": dataset.d_in}) + "\n")
        for t in dataset.tracklets:
            fh.write(json.dumps(_record(t), allow_nan=False) + "\n")


def _parse_record(obj, lineno: int) -> Tracklet:
    if not isinstance(obj, dict):
        raise DatasetFormatError(f"line {lineno}: record must be a JSON object")
    try:
        frames = np.array(obj["frames"], dtype=np.float64)
        attrs = obj.get("attrs")
        if attrs is not None:
            if not isinstance(attrs, dict) or any(v not in (0, 1) for v in attrs.values()):
                raise DatasetFormatError(f"line {lineno}: attrs must map to 0/1")
        position = obj["position"]
        if not isinstance(position, int):
            raise DatasetFormatError(f"line {lineno}: position must be an integer")
        return Tracklet(
            tracklet_id=str(obj["tracklet_id"]),
            video_id=str(obj["video_id"]),
            position=position,
            frames=frames,
            polyp_id=obj.get("polyp_id"),
            attrs=attrs,
        )
    except KeyError as exc:
        raise DatasetFormatError(f"line {lineno}: missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DatasetFormatError):
            raise
        raise DatasetFormatError(f"line {lineno}: {exc}") from None


def load_dataset(path: str | Path) -> TrackletDataset:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError("line 1: missing header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"line 1: malformed header ({exc.msg})") from None
    if not isinstance(header, dict) or header.get("schema") != SCHEMA:
        raise DatasetFormatError(f"line 1: expected schema {SCHEMA!r}")
    L, d_in = header.get("L"), header.get("d_in")
    if not isinstance(L, int) or not isinstance(d_in, int) or L < 1 or d_in < 1:
        raise DatasetFormatError("line 1: header needs positive integer L and d_in")

    tracklets = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"line {lineno}: malformed JSON ({exc.msg})") from None
        t = _parse_record(obj, lineno)
        if t.frames.shape[0] != L:
            raise DatasetFormatError(
                f"line {lineno}: inconsistent tracklet length ({t.frames.shape[0]} frames, header L={L})"
            )
        if t.frames.shape[1] != d_in:
            raise DatasetFormatError(
                f"line {lineno}: inconsistent feature dimension ({t.frames.shape[1]}, header d_in={d_in})"
            )
        if t.tracklet_id in seen:
            raise DatasetFormatError(f"line {lineno}: duplicate tracklet_id {t.tracklet_id!r}")
        seen.add(t.tracklet_id)
        tracklets.append(t)
    return TrackletDataset(tuple(tracklets), L, d_in)
