"""Detection chaining and fixed-length tracklet windows."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .data import BoundingBox, Detection, Tracklet


@dataclass(frozen=True)
class BuilderConfig:
    iou_threshold: float = 0.1
    subsample_stride: int = 4
    tracklet_length: int = 8
    chain_by: Literal["iou", "track"] = "iou"

    def __post_init__(self):
        if not 0.0 <= self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must lie in [0, 1]")
        if self.subsample_stride < 1 or self.tracklet_length < 1:
            raise ValueError("subsample_stride and tracklet_length must be >= 1")
        if self.chain_by not in ("iou", "track"):
            raise ValueError("chain_by must be 'iou' or 'track'")


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def chain_detections(stream: Sequence[Detection], cfg: BuilderConfig = BuilderConfig()) -> list[list[Detection]]:
    """Split a detection stream into chains.

    Frame indices must be strictly increasing within each video; videos may
    be interleaved. Consecutive frames join a chain when their boxes overlap
    with IoU >= ``cfg.iou_threshold`` (or, with ``chain_by="track"``, when
    they carry the same polyp_id). Any frame gap starts a new chain. Chains
    are returned grouped by video in sorted video_id order.
    """
    per_video: dict[str, list[Detection]] = {}
    for det in stream:
        dets = per_video.setdefault(det.video_id, [])
        if dets and det.frame_index <= dets[-1].frame_index:
            raise ValueError(
                f"unsorted input: video {det.video_id} frame {det.frame_index} follows frame {dets[-1].frame_index}"
            )
        dets.append(det)
    chains: list[list[Detection]] = []
    for vid in sorted(per_video):
        current: list[Detection] = []
        for det in per_video[vid]:
            if current and _links(current[-1], det, cfg):
                current.append(det)
            else:
                if current:
                    chains.append(current)
                current = [det]
        if current:
            chains.append(current)
    return chains


def _links(prev: Detection, cur: Detection, cfg: BuilderConfig) -> bool:
    if cur.frame_index - prev.frame_index != 1:
        return False
    if cfg.chain_by == "track":
        return prev.polyp_id is not None and prev.polyp_id == cur.polyp_id
    return iou(prev.box, cur.box) >= cfg.iou_threshold


def windows(chain: Sequence[Detection], cfg: BuilderConfig = BuilderConfig(), start_index: int = 0) -> list[Tracklet]:
    """Subsample a chain and cut it into non-overlapping windows of length L.

    Tracklet ids are ``{video_id}/t{n:05d}`` with ``n`` counting from
    ``start_index``.
    """
    kept = list(chain[:: cfg.subsample_stride])
    L = cfg.tracklet_length
    out = []
    for w in range(len(kept) // L):
        block = kept[w * L : (w + 1) * L]
        first = block[0]
        out.append(
            Tracklet(
                tracklet_id=f"{first.video_id}/t{start_index + w:05d}",
                video_id=first.video_id,
                position=first.frame_index,
                frames=np.stack([d.features for d in block]),
                polyp_id=first.polyp_id,
            )
        )
    return out


def build_tracklets(stream: Sequence[Detection], cfg: BuilderConfig = BuilderConfig()) -> list[Tracklet]:
    tracklets: list[Tracklet] = []
    counters: dict[str, int] = {}
    for chain in chain_detections(stream, cfg):
        vid = chain[0].video_id
        made = windows(chain, cfg, start_index=counters.get(vid, 0))
        counters[vid] = counters.get(vid, 0) + len(made)
        tracklets.extend(made)
    return tracklets
