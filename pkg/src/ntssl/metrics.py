"""Retrieval (mAP, HR@K) and pairwise re-identification (AUROC, AUPR) on frozen embeddings."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def cosine_matrix(emb: np.ndarray) -> np.ndarray:
    emb = np.asarray(emb, dtype=np.float64)
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero-norm embedding")
    unit = emb / norms
    return unit @ unit.T


def average_precision(relevant_sorted: np.ndarray) -> float:
    """AP of a ranked list given relevance flags in rank order."""
    rel = np.asarray(relevant_sorted, dtype=bool)
    npos = rel.sum()
    if npos == 0:
        raise ValueError("no relevant items")
    hits = np.cumsum(rel)
    ranks = np.flatnonzero(rel) + 1
    return float(np.mean(hits[rel] / ranks))


def retrieval_metrics(emb: np.ndarray, labels, ks=(1, 5)) -> dict[str, float]:
    """Each item queries all others ranked by descending cosine (stable on ties).

    Queries without any same-label item are skipped.
    """
    labels = np.asarray(labels)
    n = labels.size
    sims = cosine_matrix(emb)
    aps, hits = [], {k: [] for k in ks}
    for q in range(n):
        others = np.delete(np.arange(n), q)
        rel = labels[others] == labels[q]
        if not rel.any():
            continue
        order = np.argsort(-sims[q, others], kind="stable")
        rel_sorted = rel[order]
        aps.append(average_precision(rel_sorted))
        for k in ks:
            hits[k].append(float(rel_sorted[:k].any()))
    if not aps:
        raise ValueError("no valid queries: every identity has a single tracklet")
    out = {"map": float(np.mean(aps))}
    out.update({f"hr@{k}": float(np.mean(hits[k])) for k in ks})
    return out


def auroc(scores, labels) -> float:
    """P(score of a random positive > score of a random negative), ties counted 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos, n_neg = labels.sum(), (~labels).sum()
    if n_pos == 0 or n_neg == 0:
        raise ValueError("degenerate label set: need positives and negatives")
    ranks = rankdata(scores)  # average ranks handle ties
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def aupr(scores, labels) -> float:
    """Average precision over the score-sorted list (descending, stable on ties)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if labels.all() or not labels.any():
        raise ValueError("degenerate label set: need positives and negatives")
    order = np.argsort(-scores, kind="stable")
    return average_precision(labels[order])


def pair_scores(emb: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray]:
    """Cosine and same-identity flag for every unordered pair i < j."""
    labels = np.asarray(labels)
    sims = cosine_matrix(emb)
    iu, ju = np.triu_indices(labels.size, k=1)
    return sims[iu, ju], labels[iu] == labels[ju]


def reid_metrics(emb: np.ndarray, labels) -> dict[str, float]:
    scores, same = pair_scores(emb, labels)
    return {"auroc": auroc(scores, same), "aupr": aupr(scores, same)}
