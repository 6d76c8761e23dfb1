"""Contrastive training with temporal bags and curriculum progress."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Literal

import numpy as np

from .autodiff import no_grad
from .data import DatasetFormatError, TrackletDataset
from .encoder import EncoderConfig, ParamStore, encode_batch, init_params, project
from .objective import LossConfig, multi_level_loss
from .optim import AdamW
from .sampler import CurriculumSchedule, InsufficientCandidates, RankIndex, curriculum_tau, purity_of_indices, sample_ranks

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "c", "tau", "loss_total", "loss_tracklet", "loss_frame", "purity")


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 2000
    batch_size: int = 60
    K: int = 4
    lr: float = 1e-4
    weight_decay: float = 1e-2
    sampling: Literal["topk", "exp"] = "exp"
    curriculum: bool = True
    schedule: CurriculumSchedule = field(default_factory=CurriculumSchedule)
    fixed_tau: float | None = None  # None -> schedule midpoint
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.sampling not in ("topk", "exp"):
            raise ValueError("sampling must be 'topk' or 'exp'")
        if isinstance(self.schedule, dict):
            object.__setattr__(self, "schedule", CurriculumSchedule(**self.schedule))
        if self.fixed_tau is not None and not self.fixed_tau > 0:
            raise ValueError("fixed_tau must be > 0")

    @property
    def constant_tau(self) -> float:
        return curriculum_tau(self.schedule, 0.5) if self.fixed_tau is None else self.fixed_tau

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    params: ParamStore
    initial_params: ParamStore
    encoder: EncoderConfig
    log: list[dict]

    def losses(self) -> np.ndarray:
        return np.array([row["loss_total"] for row in self.log])


@dataclass
class EmbeddingSet:
    tracklet_emb: np.ndarray  # N x d
    frame_embs: np.ndarray  # N x L x d

    def __len__(self) -> int:
        return self.tracklet_emb.shape[0]


def progress(step: int, total_steps: int) -> float:
    return step / max(total_steps - 1, 1)


def step_tau(cfg: TrainConfig, step: int) -> tuple[float, float]:
    c = progress(step, cfg.total_steps)
    tau = curriculum_tau(cfg.schedule, c) if cfg.curriculum else cfg.constant_tau
    return c, tau


def _bag_stream(seed: int, epoch: int, anchor: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1, epoch, anchor])


def draw_bags(index: RankIndex, anchors: np.ndarray, K: int, tau: float, sampling: str, seed: int, epoch: int):
    """Member indices (B, K) and sampled ranks (B, K) for each anchor."""
    members = np.empty((anchors.size, K), dtype=np.int64)
    ranks = np.empty((anchors.size, K), dtype=np.int64)
    for b, a in enumerate(anchors):
        cand = index.candidates(a)
        if sampling == "topk":
            if K > cand.size:
                raise InsufficientCandidates(f"insufficient candidates: K={K} > C={cand.size}")
            r = np.arange(1, K + 1)
        else:
            r = sample_ranks(cand.size, K, tau, _bag_stream(seed, epoch, int(a)))
        ranks[b] = r
        members[b] = cand[r - 1]
    return members, ranks


def batch_loss(frames: np.ndarray, anchors, members, params, enc_cfg: EncoderConfig, loss_cfg: LossConfig,
               mode: str = "train", rng=None):
    """Encode anchors and bag members, project, and evaluate the multi-level loss."""
    B, K = members.shape
    idx = np.concatenate([anchors, members.reshape(-1)])
    tok, fr = encode_batch(frames[idx], params, enc_cfg, mode, rng)
    L, D, P = enc_cfg.L, enc_cfg.d_model, enc_cfg.proj_out
    zt = project(tok, params, enc_cfg)
    need_frames = loss_cfg.level in ("frame", "both")
    zf = project(fr.reshape(-1, D), params, enc_cfg).reshape(-1, L, P) if need_frames else None
    return multi_level_loss(
        zt[:B],
        zt[B:].reshape(B, K, P),
        zf[:B] if need_frames else None,
        zf[B:].reshape(B, K, L, P) if need_frames else None,
        loss_cfg,
    )


class _AnchorSchedule:
    """Without-replacement anchor batches, reshuffled every epoch."""

    def __init__(self, usable: np.ndarray, batch_size: int, seed: int):
        self.usable = usable
        self.batch = min(batch_size, usable.size)
        self.seed = seed
        self.epoch = -1
        self.queue = np.empty(0, dtype=np.int64)

    def next(self) -> tuple[int, np.ndarray]:
        if self.queue.size < self.batch:
            self.epoch += 1
            self.queue = np.random.default_rng([self.seed, 0, self.epoch]).permutation(self.usable)
        out, self.queue = self.queue[: self.batch], self.queue[self.batch :]
        return self.epoch, out


def train(
    dataset: TrackletDataset,
    enc_cfg: EncoderConfig,
    loss_cfg: LossConfig = LossConfig(),
    train_cfg: TrainConfig = TrainConfig(),
    dump_dir: str | Path | None = None,
) -> TrainResult:
    if (enc_cfg.L, enc_cfg.d_in) != (dataset.L, dataset.d_in):
        raise ValueError(f"config mismatch: encoder (L={enc_cfg.L}, d_in={enc_cfg.d_in}) vs dataset "
                         f"(L={dataset.L}, d_in={dataset.d_in})")
    view = dataset.training_view()
    index = RankIndex(view.tracklet_ids, view.video_ids, view.positions)
    usable = index.usable(train_cfg.K)
    if usable.size == 0:
        raise InsufficientCandidates(f"no usable anchors: every tracklet has fewer than K={train_cfg.K} candidates")
    if usable.size < len(index):
        log.warning("excluding %d anchor(s) with fewer than K=%d same-video candidates",
                    len(index) - usable.size, train_cfg.K)
    if usable.size < 2:
        raise InsufficientCandidates("need at least 2 usable anchors for negatives")

    # labels are read for the purity diagnostic only
    try:
        codes = np.unique(dataset.polyp_ids(), return_inverse=True)[1]
    except DatasetFormatError:
        codes = None

    params = init_params(enc_cfg, train_cfg.seed)
    initial = params.copy()
    opt = AdamW(params, lr=train_cfg.lr, weight_decay=train_cfg.weight_decay)
    schedule = _AnchorSchedule(usable, train_cfg.batch_size, train_cfg.seed)
    drop_rng = np.random.default_rng([train_cfg.seed, 2])
    rows = []
    for step in range(train_cfg.total_steps):
        c, tau = step_tau(train_cfg, step)
        epoch, anchors = schedule.next()
        members, _ = draw_bags(index, anchors, train_cfg.K, tau, train_cfg.sampling, train_cfg.seed, epoch)
        params.zero_grad()
        try:
            out = batch_loss(view.frames, anchors, members, params, enc_cfg, loss_cfg, "train", drop_rng)
        except FloatingPointError as exc:
            _dump(dump_dir, step, anchors, members, None)
            raise NonFiniteLoss(f"non-finite embeddings at step {step} (c={c:.4f}, tau={tau:.4f}): {exc}") from None
        if not np.isfinite(out.value):
            _dump(dump_dir, step, anchors, members, out)
            raise NonFiniteLoss(f"non-finite loss at step {step} (c={c:.4f}, tau={tau:.4f})")
        out.total.backward()
        opt.step()
        rows.append({
            "step": step,
            "c": c,
            "tau": tau,
            "loss_total": out.value,
            "loss_tracklet": out.per_level.get("tracklet", float("nan")),
            "loss_frame": out.per_level.get("frame", float("nan")),
            "purity": purity_of_indices(anchors, members, codes) if codes is not None else float("nan"),
        })
    return TrainResult(params, initial, enc_cfg, rows)


def _dump(dump_dir, step, anchors, members, out) -> None:
    if dump_dir is None:
        return
    path = Path(dump_dir) / f"nonfinite_step{step}.npz"
    extra = {} if out is None else {"per_anchor": out.per_anchor}
    np.savez(path, anchors=anchors, members=members, **extra)
    log.error("dumped offending batch to %s", path)


def write_log(rows: list[dict], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def read_log(path: str | Path) -> list[dict]:
    with Path(path).open() as fh:
        return [
            {k: (int(v) if k == "step" else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)
        ]


def embed_all(dataset: TrackletDataset, params: ParamStore, cfg: EncoderConfig,
              space: Literal["hidden", "projected"] = "hidden", chunk: int = 256) -> EmbeddingSet:
    """Eval-mode embeddings of every tracklet."""
    if (cfg.L, cfg.d_in) != (dataset.L, dataset.d_in):
        raise ValueError(f"config mismatch: checkpoint (L={cfg.L}, d_in={cfg.d_in}) vs dataset "
                         f"(L={dataset.L}, d_in={dataset.d_in})")
    if space not in ("hidden", "projected"):
        raise ValueError(f"unknown embedding space {space!r}")
    frames = dataset.training_view().frames
    d = cfg.d_model if space == "hidden" else cfg.proj_out
    toks, frs = [np.zeros((0, d))], [np.zeros((0, cfg.L, d))]
    with no_grad():
        for start in range(0, len(dataset), chunk):
            tok, fr = encode_batch(frames[start : start + chunk], params, cfg, "eval")
            if space == "projected":
                n = tok.shape[0]
                tok = project(tok, params, cfg)
                fr = project(fr.reshape(-1, cfg.d_model), params, cfg).reshape(n, cfg.L, d)
            toks.append(tok.data)
            frs.append(fr.data)
    return EmbeddingSet(np.concatenate(toks), np.concatenate(frs))


def with_overrides(cfg: TrainConfig, **kw) -> TrainConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
