"""Independent reference implementations shared by the unit and acceptance tests."""

import itertools
import math

import numpy as np


def infonce_oracle(anchors, positives, temperature):
    """Plain one-positive contrastive loss, written with python floats."""
    def cos(u, v):
        return sum(a * b for a, b in zip(u, v)) / math.sqrt(sum(a * a for a in u) * sum(b * b for b in v))

    n = len(anchors)
    total = 0.0
    for i in range(n):
        logits = [cos(positives[i], anchors[j]) / temperature for j in range(n)]
        m = max(logits)
        total += m + math.log(sum(math.exp(l - m) for l in logits)) - logits[i]
    return total / n


def bag_loss_scalar(anchors, bags, temperature):
    """Direct evaluation of the bag loss with explicit loops and math.exp."""
    def s(u, v):
        return float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))) / temperature

    n = len(anchors)
    out = 0.0
    for i in range(n):
        num = sum(math.exp(s(z, anchors[i])) for z in bags[i])
        den = num + sum(math.exp(s(z, anchors[j])) for j in range(n) if j != i for z in bags[i])
        out += -math.log(num / den)
    return out / n



def ref_retrieval(emb, labels, ks=(1, 5)):
    n = len(labels)
    unit = [e / np.linalg.norm(e) for e in emb]
    aps, hits = [], {k: [] for k in ks}
    for q in range(n):
        gallery = [j for j in range(n) if j != q]
        if not any(labels[j] == labels[q] for j in gallery):
            continue
        # descending similarity, earlier index first on ties
        ranked = sorted(gallery, key=lambda j: (-float(np.dot(unit[q], unit[j])), gallery.index(j)))
        found, precisions = 0, []
        for r, j in enumerate(ranked, start=1):
            if labels[j] == labels[q]:
                found += 1
                precisions.append(found / r)
        aps.append(sum(precisions) / len(precisions))
        for k in ks:
            hits[k].append(1.0 if any(labels[j] == labels[q] for j in ranked[:k]) else 0.0)
    out = {"map": sum(aps) / len(aps)}
    out.update({f"hr@{k}": sum(h) / len(h) for k, h in hits.items()})
    return out


def ref_auroc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    total = 0.0
    for p, n in itertools.product(pos, neg):
        total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def ref_aupr(scores, labels):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    found, acc = 0, 0.0
    for r, i in enumerate(order, start=1):
        if labels[i]:
            found += 1
            acc += found / r
    return acc / found


