"""Non-linear probes on frozen tracklet embeddings, split by polyp identity."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .encoder import ParamStore
from .optim import AdamW

PROBE_LR = {"size_class": 1e-4, "histology_class": 1e-5}
PROBE_METRIC = {"size_class": "f1_identity_weighted", "histology_class": "accuracy"}


class ProbeSplitError(ValueError):
    pass


@dataclass(frozen=True)
class ProbeConfig:
    hidden: int = 256
    dropout: float = 0.1
    epochs: int = 20
    lr: float | None = None  # None -> per-attribute default (PROBE_LR)
    batch_size: int = 64
    weight_decay: float = 1e-2
    train_fraction: float = 0.7
    standardize: bool = True
    split_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.hidden < 1 or self.batch_size < 1:
            raise ValueError("hidden and batch_size must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")

    def lr_for(self, attribute: str) -> float:
        return PROBE_LR[attribute] if self.lr is None else self.lr

    def to_dict(self) -> dict:
        return asdict(self)


def identity_weights(identities) -> np.ndarray:
    """1 / (number of items sharing the identity), so every identity sums to 1."""
    _, inverse, counts = np.unique(np.asarray(identities), return_inverse=True, return_counts=True)
    return 1.0 / counts[inverse]


def weighted_f1_macro(y_true, y_pred, weights=None, classes=(0, 1)) -> float:
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    w = np.ones(y_true.size) if weights is None else np.asarray(weights, dtype=np.float64)
    scores = []
    for c in classes:
        tp = w[(y_true == c) & (y_pred == c)].sum()
        fp = w[(y_true != c) & (y_pred == c)].sum()
        fn = w[(y_true == c) & (y_pred != c)].sum()
        denom = 2 * tp + fp + fn
        scores.append(0.0 if denom == 0 else 2 * tp / denom)
    return float(np.mean(scores))


def weighted_accuracy(y_true, y_pred, weights=None) -> float:
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    w = np.ones(y_true.size) if weights is None else np.asarray(weights, dtype=np.float64)
    return float(w[y_true == y_pred].sum() / w.sum())


def split_identities(identities, labels, train_fraction: float, seed: int, attempts: int = 10):
    """Boolean train mask over items; identities are never split across sides.

    Reshuffles with seed+1, seed+2, ... until both classes appear on both
    sides.
    """
    identities = np.asarray(identities)
    labels = np.asarray(labels)
    uniq = np.unique(identities)
    n_train = int(round(train_fraction * uniq.size))
    for attempt in range(attempts):
        perm = np.random.default_rng(seed + attempt).permutation(uniq)
        train_ids = set(perm[:n_train].tolist())
        mask = np.array([i in train_ids for i in identities.tolist()])
        if mask.all() or not mask.any():
            continue
        if np.unique(labels[mask]).size == 2 and np.unique(labels[~mask]).size == 2:
            return mask
    raise ProbeSplitError(f"could not find a split with both classes on both sides after {attempts} attempts")


class MLPProbe:
    """Linear -> GELU -> dropout -> linear, two-way softmax output."""

    def __init__(self, d_in: int, hidden: int, dropout: float, rng: np.random.Generator):
        b1, b2 = 1 / np.sqrt(d_in), 1 / np.sqrt(hidden)
        self.params = ParamStore({
            "W1": rng.uniform(-b1, b1, (d_in, hidden)),
            "b1": np.zeros(hidden),
            "W2": rng.uniform(-b2, b2, (hidden, 2)),
            "b2": np.zeros(2),
        })
        self.dropout = dropout

    def logits(self, x, rng=None):
        p = self.params
        h = ad.gelu(ad.as_tensor(x) @ p["W1"] + p["b1"])
        h = ad.dropout(h, self.dropout, rng)
        return h @ p["W2"] + p["b2"]

    def predict(self, x) -> np.ndarray:
        with ad.no_grad():
            return self.logits(x).data.argmax(axis=1)


def fit_probe(x: np.ndarray, y: np.ndarray, cfg: ProbeConfig, lr: float, seed: int) -> MLPProbe:
    rng = np.random.default_rng([seed, 7])
    probe = MLPProbe(x.shape[1], cfg.hidden, cfg.dropout, rng)
    opt = AdamW(probe.params, lr=lr, weight_decay=cfg.weight_decay)
    for _ in range(cfg.epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            probe.params.zero_grad()
            ad.cross_entropy(probe.logits(x[idx], rng), y[idx]).backward()
            opt.step()
    return probe


def probe_eval(emb: np.ndarray, identities, labels, attribute: str, cfg: ProbeConfig = ProbeConfig()) -> dict:
    """Train on 70% of identities, score the rest.

    ``size_class`` reports identity-weighted macro F1; ``histology_class``
    reports plain accuracy.
    """
    if attribute not in PROBE_METRIC:
        raise ValueError(f"unknown attribute {attribute!r}")
    emb = np.asarray(emb, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    identities = np.asarray(identities)
    mask = split_identities(identities, labels, cfg.train_fraction, cfg.split_seed)
    x_tr, x_te = emb[mask], emb[~mask]
    if cfg.standardize:
        mu, sd = x_tr.mean(axis=0), x_tr.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        x_tr, x_te = (x_tr - mu) / sd, (x_te - mu) / sd
    probe = fit_probe(x_tr, labels[mask], cfg, cfg.lr_for(attribute), cfg.split_seed)
    pred = probe.predict(x_te)
    truth = labels[~mask]
    metric = PROBE_METRIC[attribute]
    if metric == "f1_identity_weighted":
        value = weighted_f1_macro(truth, pred, identity_weights(identities[~mask]))
    else:
        value = weighted_accuracy(truth, pred)
    return {"metric": metric, "value": value, "n_train": int(mask.sum()), "n_test": int((~mask).sum())}
