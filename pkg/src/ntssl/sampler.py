"""Temporal bags: rank orders, the exponential rank distribution, curriculum."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .data import TrackletDataset

log = logging.getLogger(__name__)


class InsufficientCandidates(ValueError):
    pass


@dataclass(frozen=True)
class RankOrder:
    """Same-video tracklets sorted by temporal distance to the anchor."""

    anchor_id: str
    ordered_ids: tuple[str, ...]
    distances: tuple[int, ...] = ()

    @property
    def C(self) -> int:
        return len(self.ordered_ids)


@dataclass(frozen=True)
class Bag:
    anchor_id: str
    member_ids: tuple[str, ...]
    sampled_ranks: tuple[int, ...]

    @property
    def K(self) -> int:
        return len(self.member_ids)


@dataclass(frozen=True)
class CurriculumSchedule:
    tau_min: float = 0.3
    tau_max: float = 12.0

    def __post_init__(self):
        if not self.tau_min > 0:
            raise ValueError("tau_min must be > 0")
        if self.tau_max < self.tau_min:
            raise ValueError("tau_max must be >= tau_min")

    def evaluate(self, c: float) -> float:
        return curriculum_tau(self, c)


def curriculum_tau(sched: CurriculumSchedule, c: float) -> float:
    """Cosine ramp from tau_min (c=0) to tau_max (c=1)."""
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"curriculum progress c={c} outside [0, 1]")
    if c == 0.0:
        return sched.tau_min
    if c == 1.0:
        return sched.tau_max
    return sched.tau_min + 0.5 * (1.0 - math.cos(math.pi * c)) * (sched.tau_max - sched.tau_min)


def rank_pmf(C: int, tau: float) -> np.ndarray:
    """P(r) proportional to exp(-r / tau) for r = 1..C."""
    if C < 1:
        raise ValueError("C must be >= 1")
    if not tau > 0:
        raise ValueError("tau must be > 0")
    # shifted by the max logit (-1/tau) so the first weight is exactly 1
    w = np.exp(-(np.arange(C, dtype=np.float64)) / tau)
    return w / w.sum()


def _order_from_arrays(anchor: int, same: np.ndarray, positions: np.ndarray, ids) -> np.ndarray:
    cand = same[same != anchor]
    dist = np.abs(positions[cand] - positions[anchor])
    keys = sorted(range(len(cand)), key=lambda k: (dist[k], positions[cand[k]], ids[cand[k]]))
    return cand[np.array(keys, dtype=np.int64)] if keys else cand


def rank_order(dataset: TrackletDataset, anchor_id: str) -> RankOrder:
    i = dataset.index_of(anchor_id)
    view = dataset.training_view()
    videos = np.array(view.video_ids)
    same = np.flatnonzero(videos == view.video_ids[i])
    order = _order_from_arrays(i, same, view.positions, view.tracklet_ids)
    return RankOrder(
        anchor_id=anchor_id,
        ordered_ids=tuple(view.tracklet_ids[j] for j in order),
        distances=tuple(int(abs(view.positions[j] - view.positions[i])) for j in order),
    )


class RankIndex:
    """Rank orders for every anchor, as index arrays, computed once per dataset."""

    def __init__(self, tracklet_ids, video_ids, positions):
        self.tracklet_ids = tuple(tracklet_ids)
        positions = np.asarray(positions, dtype=np.int64)
        by_video: dict[str, list[int]] = {}
        for j, v in enumerate(video_ids):
            by_video.setdefault(v, []).append(j)
        groups = {v: np.array(js, dtype=np.int64) for v, js in by_video.items()}
        self.orders: list[np.ndarray] = [
            _order_from_arrays(i, groups[v], positions, self.tracklet_ids) for i, v in enumerate(video_ids)
        ]

    @classmethod
    def from_dataset(cls, dataset: TrackletDataset) -> "RankIndex":
        view = dataset.training_view()
        return cls(view.tracklet_ids, view.video_ids, view.positions)

    def __len__(self) -> int:
        return len(self.orders)

    def candidates(self, i: int) -> np.ndarray:
        return self.orders[i]

    def rank_order(self, i: int) -> RankOrder:
        return RankOrder(self.tracklet_ids[i], tuple(self.tracklet_ids[j] for j in self.orders[i]))

    def usable(self, K: int) -> np.ndarray:
        return np.array([i for i, o in enumerate(self.orders) if len(o) >= K], dtype=np.int64)


def sample_ranks(C: int, K: int, tau: float, rng: np.random.Generator) -> np.ndarray:
    """K distinct 1-based ranks by sequential draws renormalised over the remaining ranks."""
    if K > C:
        raise InsufficientCandidates(f"insufficient candidates: K={K} > C={C}")
    logits = -np.arange(1, C + 1, dtype=np.float64) / tau
    alive = np.ones(C, dtype=bool)
    out = np.empty(K, dtype=np.int64)
    for step in range(K):
        # shift by the best remaining logit so the remaining mass never underflows
        best = logits[alive].max()
        w = np.zeros(C)
        w[alive] = np.exp(logits[alive] - best)
        cdf = np.cumsum(w)
        u = rng.random() * cdf[-1]
        r = min(int(np.searchsorted(cdf, u, side="right")), C - 1)
        while not alive[r]:
            r -= 1
        alive[r] = False
        out[step] = r + 1
    return out


def sample_bag(order: RankOrder, K: int, tau: float, rng: np.random.Generator) -> Bag:
    ranks = sample_ranks(order.C, K, tau, rng)
    return Bag(order.anchor_id, tuple(order.ordered_ids[r - 1] for r in ranks), tuple(int(r) for r in ranks))


def top_k_bag(order: RankOrder, K: int) -> Bag:
    if K > order.C:
        raise InsufficientCandidates(f"insufficient candidates: K={K} > C={order.C}")
    return Bag(order.anchor_id, tuple(order.ordered_ids[:K]), tuple(range(1, K + 1)))


def bag_purity(bags, dataset: TrackletDataset) -> float:
    """Fraction of bags whose members all share the anchor's polyp identity."""
    bags = list(bags)
    if not bags:
        raise ValueError("no bags")
    ids = dataset.polyp_ids()
    pure = 0
    for bag in bags:
        target = ids[dataset.index_of(bag.anchor_id)]
        pure += all(ids[dataset.index_of(m)] == target for m in bag.member_ids)
    return pure / len(bags)


def purity_of_indices(anchor_idx: np.ndarray, member_idx: np.ndarray, polyp_codes: np.ndarray) -> float:
    """Vectorised purity for index arrays: anchors (B,), members (B, K)."""
    same = polyp_codes[member_idx] == polyp_codes[anchor_idx][:, None]
    return float(same.all(axis=1).mean())


def diagnose(index: RankIndex, polyp_codes: np.ndarray, K: int, taus, n_bags: int, seed: int):
    """Mean sampled rank and bag purity per temperature, over ``n_bags`` random usable anchors each."""
    usable = index.usable(K)
    if usable.size == 0:
        raise InsufficientCandidates("no anchor has at least K candidates")
    rows = []
    for g, tau in enumerate(taus):
        rng = np.random.default_rng([seed, g])
        anchors = usable[rng.integers(0, usable.size, size=n_bags)]
        members = np.empty((n_bags, K), dtype=np.int64)
        ranks = np.empty((n_bags, K), dtype=np.int64)
        for b, a in enumerate(anchors):
            cand = index.candidates(a)
            r = sample_ranks(len(cand), K, tau, rng)
            ranks[b] = r
            members[b] = cand[r - 1]
        rows.append((float(ranks.mean()), purity_of_indices(anchors, members, polyp_codes)))
    return rows
