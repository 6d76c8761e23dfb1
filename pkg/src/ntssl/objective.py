"""Noise-aware multiple-positive contrastive loss and its frame/tracklet levels."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

LEVELS = ("tracklet", "frame", "both")


@dataclass(frozen=True)
class LossConfig:
    sim_temperature: float = 0.1
    level: Literal["tracklet", "frame", "both"] = "both"
    frame_pairing: Literal["all", "aligned"] = "all"

    def __post_init__(self):
        if not self.sim_temperature > 0:
            raise ValueError("sim_temperature must be > 0")
        if self.level not in LEVELS:
            raise ValueError(f"level must be one of {LEVELS}")
        if self.frame_pairing not in ("all", "aligned"):
            raise ValueError("frame_pairing must be 'all' or 'aligned'")


@dataclass
class LossOutput:
    total: Tensor
    per_level: dict[str, float] = field(default_factory=dict)
    per_anchor: np.ndarray | None = None

    @property
    def value(self) -> float:
        return self.total.item()


def similarity(u, v, cfg: LossConfig = LossConfig()) -> float:
    """Cosine similarity divided by the temperature."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("similarity of a zero-norm vector is undefined")
    return float(u @ v / (nu * nv)) / cfg.sim_temperature


def _check_finite(*arrays: Tensor) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a.data)):
            raise FloatingPointError("non-finite embedding passed to the loss")


def bag_logits(anchors: Tensor, bags: Tensor, cfg: LossConfig) -> Tensor:
    """Scaled cosines ``S[..., i, k, j] = s(z_ik, y_j)``.

    anchors (..., N, d); bags (..., N, K, d) or (N, K, d) shared across the
    leading dims of ``anchors``.
    """
    y = ad.l2_normalize(anchors)
    z = ad.l2_normalize(bags)
    *lead, N, _ = y.shape
    *zlead, _, K, d = z.shape
    zf = z.reshape(*zlead, N * K, d)
    s = (zf @ ad.swapaxes(y, -1, -2)) * (1.0 / cfg.sim_temperature)
    return s.reshape(*lead, N, K, N)


def loss_from_logits(S: Tensor) -> Tensor:
    """Per-anchor loss from logits ``(..., N, K, N)``; returns ``(..., N)``.

    ``-log( sum_k e^{S[i,k,i]} / sum_{k,j} e^{S[i,k,j]} )``, both sums by
    log-sum-exp with the max subtracted. The double sum is taken over ``j``
    first; the per-member terms are then sorted before the sum over ``k`` so
    the result does not depend on the order in which bag members are listed.
    """
    *lead, N, K, _ = S.shape
    diag = np.arange(N) * (N + 1)
    pos = ad.swapaxes(S, -1, -2).reshape(*lead, N * N, K)[(Ellipsis, diag, slice(None))]  # (..., N, K)
    pos_lse = ad.logsumexp(ad.sort(pos, axis=-1), axis=-1)
    per_member = ad.logsumexp(S, axis=-1)  # (..., N, K)
    all_lse = ad.logsumexp(ad.sort(per_member, axis=-1), axis=-1)
    return all_lse - pos_lse


def noise_aware_loss(anchors, bags, cfg: LossConfig = LossConfig()) -> LossOutput:
    """Mean over anchors of the bag-level log-sum-exp contrastive loss.

    anchors: (N, d); bags: (N, K, d). Negatives for anchor ``i`` are the
    similarities between its own bag members and every other anchor.
    """
    anchors, bags = ad.as_tensor(anchors), ad.as_tensor(bags)
    if anchors.ndim != 2 or bags.ndim != 3 or bags.shape[0] != anchors.shape[0] or bags.shape[2] != anchors.shape[1]:
        raise ValueError(f"shape mismatch: anchors {anchors.shape}, bags {bags.shape}")
    N = anchors.shape[0]
    if N < 2:
        raise ValueError("need at least 2 anchors (no negatives otherwise)")
    if bags.shape[1] < 1:
        raise ValueError("bags must have K >= 1 members")
    _check_finite(anchors, bags)
    per_anchor = loss_from_logits(bag_logits(anchors, bags, cfg))
    total = ad.mean(per_anchor)
    return LossOutput(total, {"tracklet": total.item()}, per_anchor.data.copy())


def frame_level_loss(anchor_frames, bag_frames, cfg: LossConfig = LossConfig()) -> tuple[Tensor, Tensor]:
    """Frame-level term. anchor_frames (N, L, d); bag_frames (N, K, L, d).

    For each frame slot t, anchor frame y_i^(t) is an anchor. With
    ``frame_pairing="all"`` its bag is the K*L frames of its bag members;
    with ``"aligned"`` only the K members' frame t. Negatives pair those bag
    frames with the other anchors' frame t. Returns (mean loss, per-anchor
    loss averaged over t).
    """
    anchor_frames, bag_frames = ad.as_tensor(anchor_frames), ad.as_tensor(bag_frames)
    N, L, d = anchor_frames.shape
    if L < 1:
        raise ValueError("frame level needs L >= 1")
    if N < 2:
        raise ValueError("need at least 2 anchors (no negatives otherwise)")
    K = bag_frames.shape[1]
    if bag_frames.shape != (N, K, L, d):
        raise ValueError(f"shape mismatch: anchor frames {anchor_frames.shape}, bag frames {bag_frames.shape}")
    _check_finite(anchor_frames, bag_frames)
    y = ad.transpose(anchor_frames, (1, 0, 2))  # L, N, d
    if cfg.frame_pairing == "all":
        S = bag_logits(y, bag_frames.reshape(N, K * L, d), cfg)
    else:
        z = ad.transpose(bag_frames, (2, 0, 1, 3))  # L, N, K, d
        S = bag_logits(y, z, cfg)
    per = loss_from_logits(S)  # L, N
    per_anchor = ad.mean(per, axis=0)
    return ad.mean(per_anchor), per_anchor


def multi_level_loss(
    anchor_tok, bag_tok, anchor_frames=None, bag_frames=None, cfg: LossConfig = LossConfig()
) -> LossOutput:
    """Tracklet term, frame term, or their sum, per ``cfg.level``.

    anchor_tok (N, d), bag_tok (N, K, d), anchor_frames (N, L, d),
    bag_frames (N, K, L, d).
    """
    terms: list[Tensor] = []
    per_anchor_terms: list[np.ndarray] = []
    per_level: dict[str, float] = {}
    if cfg.level in ("tracklet", "both"):
        out = noise_aware_loss(anchor_tok, bag_tok, cfg)
        terms.append(out.total)
        per_anchor_terms.append(out.per_anchor)
        per_level["tracklet"] = out.total.item()
    if cfg.level in ("frame", "both"):
        if anchor_frames is None or bag_frames is None:
            raise ValueError("frame level requires frame embeddings")
        total, per_anchor = frame_level_loss(anchor_frames, bag_frames, cfg)
        terms.append(total)
        per_anchor_terms.append(per_anchor.data.copy())
        per_level["frame"] = total.item()
    total = terms[0] if len(terms) == 1 else terms[0] + terms[1]
    return LossOutput(total, per_level, np.sum(per_anchor_terms, axis=0))
