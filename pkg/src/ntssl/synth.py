"""Procedural colonoscopy-like detection streams.

Each video is a sequence of polyp encounters. Polyp ``p`` has a latent
appearance ``a_p`` on the unit sphere; every visible frame shows
``a_p + drift + noise`` where the drift is a random walk accumulated over
the polyp's visible frames (restricted to a fixed nuisance subspace, the
last ``nuisance_dims`` coordinates) and the noise is fresh per frame.
Two binary attributes are sign tests on coordinates 0 and 1 of ``a_p``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import BoundingBox, Detection, TrackletDataset
from .tracklets import BuilderConfig, build_tracklets

FRAME_W, FRAME_H = 640.0, 480.0


@dataclass(frozen=True)
class SynthConfig:
    num_videos: int = 20
    polyps_per_video: int = 5
    encounters_per_polyp: int = 4
    frames_per_encounter: int = 64
    gap_frames: int = 40
    overlap_prob: float = 0.3
    d_in: int = 16
    drift_scale: float = 0.3
    noise_scale: float = 0.3
    nuisance_dims: int = 8
    attr_margin: float = 0.05
    seed: int = 0

    def __post_init__(self):
        counts = ("num_videos", "polyps_per_video", "encounters_per_polyp", "frames_per_encounter", "d_in")
        for name in counts:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.gap_frames < 1:
            raise ValueError("gap_frames must be >= 1")
        if not 0.0 <= self.overlap_prob <= 1.0:
            raise ValueError("overlap_prob must lie in [0, 1]")
        if self.drift_scale < 0 or self.noise_scale < 0 or self.attr_margin < 0:
            raise ValueError("scales must be >= 0")
        if self.d_in < 2:
            raise ValueError("d_in must be >= 2 (two attribute coordinates)")
        if self.nuisance_dims < 0 or self.nuisance_dims > self.d_in - 2:
            raise ValueError("nuisance_dims must leave coordinates 0 and 1 outside the nuisance subspace")
        if self.attr_margin >= 1 / np.sqrt(2):
            raise ValueError("attr_margin too large for a unit vector")

    def to_dict(self) -> dict:
        return asdict(self)


def _latent(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    while True:
        a = rng.standard_normal(cfg.d_in)
        a /= np.linalg.norm(a)
        if abs(a[0]) >= cfg.attr_margin and abs(a[1]) >= cfg.attr_margin:
            return a


def _encounter_order(rng: np.random.Generator, cfg: SynthConfig) -> list[int]:
    """Polyp index per encounter slot, with optional interleaving of the next polyp."""
    blocks = [[p] * cfg.encounters_per_polyp for p in range(cfg.polyps_per_video)]
    for p in range(cfg.polyps_per_video - 1):
        if rng.random() < cfg.overlap_prob:
            # pull one encounter of p+1 into p's block, between two of p's encounters
            blocks[p + 1].pop(0)
            slot = int(rng.integers(1, cfg.encounters_per_polyp)) if cfg.encounters_per_polyp > 1 else 1
            own = [i for i, q in enumerate(blocks[p]) if q == p]
            at = own[slot - 1] + 1 if slot - 1 < len(own) else len(blocks[p])
            blocks[p].insert(at, p + 1)
    return [p for block in blocks for p in block]


def _simulate(cfg: SynthConfig):
    rng = np.random.default_rng(cfg.seed)
    d = cfg.d_in
    k = cfg.nuisance_dims if cfg.nuisance_dims > 0 else d
    detections: list[Detection] = []
    attrs: dict[str, dict[str, int]] = {}
    for v in range(cfg.num_videos):
        vid = f"v{v:03d}"
        latents = [_latent(rng, cfg) for _ in range(cfg.polyps_per_video)]
        drift = [np.zeros(d) for _ in range(cfg.polyps_per_video)]
        for p, a in enumerate(latents):
            attrs[f"{vid}/p{p}"] = {"size_class": int(a[0] > 0), "histology_class": int(a[1] > 0)}
        t = int(rng.integers(0, cfg.gap_frames + 1))
        for p in _encounter_order(rng, cfg):
            pid = f"{vid}/p{p}"
            side = float(rng.uniform(60.0, 120.0))
            cx = float(rng.uniform(side, FRAME_W - side))
            cy = float(rng.uniform(side, FRAME_H - side))
            vx, vy = rng.uniform(-1.0, 1.0, size=2)
            for _ in range(cfg.frames_per_encounter):
                step = np.zeros(d)
                step[d - k :] = rng.standard_normal(k) / np.sqrt(k)
                drift[p] = drift[p] + cfg.drift_scale * step
                noise = rng.standard_normal(d) / np.sqrt(d)
                feats = latents[p] + drift[p] + cfg.noise_scale * noise
                half = side / 2
                box = BoundingBox(cx - half, cy - half, cx + half, cy + half)
                detections.append(Detection(vid, t, box, feats, pid))
                cx = float(np.clip(cx + vx, half, FRAME_W - half))
                cy = float(np.clip(cy + vy, half, FRAME_H - half))
                t += 1
            t += 1 + int(rng.poisson(cfg.gap_frames))
    return detections, attrs


def generate_stream(cfg: SynthConfig) -> list[Detection]:
    """Detections sorted by (video_id, frame_index); deterministic in ``cfg.seed``."""
    return _simulate(cfg)[0]


def generate_dataset(cfg: SynthConfig, builder: BuilderConfig = BuilderConfig()) -> TrackletDataset:
    stream, attrs = _simulate(cfg)
    tracklets = build_tracklets(stream, builder)
    if not tracklets:
        raise ValueError("no tracklets produced")
    labelled = [
        type(t)(t.tracklet_id, t.video_id, t.position, t.frames, t.polyp_id, attrs[t.polyp_id]) for t in tracklets
    ]
    return TrackletDataset(tuple(labelled), builder.tracklet_length, cfg.d_in)
