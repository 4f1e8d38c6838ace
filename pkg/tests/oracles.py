"""Independent reference computations used as test oracles.

Nothing here imports the code under test except for plain data containers.
"""

from __future__ import annotations

import numpy as np


def central_diff(f, arrays, h=1e-5):
    """Central finite differences of scalar ``f(arrays)`` w.r.t. every entry."""
    out = []
    for k, a in enumerate(arrays):
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            plus = [b.copy() for b in arrays]
            minus = [b.copy() for b in arrays]
            plus[k][idx] += h
            minus[k][idx] -= h
            g[idx] = (f(plus) - f(minus)) / (2 * h)
        out.append(g)
    return out


def max_rel_err(analytic, numeric, floor=1e-4):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def chain_forward(weights, biases, acts, x, slope=0.2):
    """Straight-line MLP evaluation written with explicit loops."""
    h = [list(map(float, row)) for row in np.atleast_2d(x)]
    for w, b, act in zip(weights, biases, acts):
        nxt = []
        for row in h:
            out = []
            for j in range(w.shape[0]):
                s = float(b[j])
                for i in range(w.shape[1]):
                    s += float(w[j, i]) * row[i]
                if act == "leaky_relu" and s <= 0:
                    s *= slope
                out.append(s)
            nxt.append(out)
        h = nxt
    return np.array(h)


def brute_confusion(golds, preds, labels):
    pos = {c: i for i, c in enumerate(labels)}
    cm = [[0] * len(labels) for _ in labels]
    for g, p in zip(golds, preds):
        cm[pos[g]][pos[p]] += 1
    return np.array(cm, dtype=np.int64).reshape(len(labels), len(labels))


def brute_rates(golds, preds, labels):
    """OA, mACC, mIoU in percent by direct counting; absent gold classes skipped."""
    n = len(golds)
    oa = 100.0 * sum(1 for g, p in zip(golds, preds) if g == p) / n
    accs, ious = [], []
    for c in labels:
        gold_c = sum(1 for g in golds if g == c)
        if gold_c == 0:
            continue
        tp = sum(1 for g, p in zip(golds, preds) if g == c and p == c)
        fp = sum(1 for g, p in zip(golds, preds) if g != c and p == c)
        fn = gold_c - tp
        accs.append(100.0 * tp / gold_c)
        ious.append(100.0 * tp / (tp + fp + fn))
    return oa, sum(accs) / len(accs), sum(ious) / len(ious)


def mlp_input_grad(weights, biases, acts, u, slope=0.2):
    """d(sum of scalar head)/du for each row, by a hand-written backward pass."""
    pres, h = [], np.atleast_2d(u)
    for w, b, act in zip(weights, biases, acts):
        z = h @ w.T + b
        pres.append(z)
        h = np.where(z > 0, z, slope * z) if act == "leaky_relu" else z
    g = np.ones((len(h), 1))
    for w, z, act in reversed(list(zip(weights, pres, acts))):
        if act == "leaky_relu":
            g = g * np.where(z > 0, 1.0, slope)
        g = g @ w
    return g


def critic_loss_oracle(gen, disc, real, sem, z, alpha, lam):
    """WGAN-GP critic objective recomputed from plain arrays.

    ``gen`` and ``disc`` are (weights, biases, acts) triples.
    """
    fake = chain_forward(*gen, np.concatenate([sem, z], axis=1))
    d_real = chain_forward(*disc, np.concatenate([real, sem], axis=1))[:, 0]
    d_fake = chain_forward(*disc, np.concatenate([fake, sem], axis=1))[:, 0]
    a = alpha[:, None]
    xhat = a * real + (1 - a) * fake
    grad = mlp_input_grad(*disc, np.concatenate([xhat, sem], axis=1))[:, : real.shape[1]]
    norms = np.sqrt((grad**2).sum(axis=1))
    gap = d_fake.mean() - d_real.mean()
    penalty = lam * ((norms - 1) ** 2).mean()
    return gap + penalty, gap, penalty
