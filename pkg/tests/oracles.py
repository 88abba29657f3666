"""Independent reference implementations used only by the tests.

Everything here is written in plain Python or float64 numpy, without calling
into the package, so a test compares the package against a second derivation.
"""
from __future__ import annotations

import math
from fractions import Fraction
from itertools import product

import numpy as np


def dense_forward(weights, biases, x):
    """Loop-based forward pass: ReLU on hidden layers, linear output."""
    a = [float(v) for v in x]
    for li, (w, b) in enumerate(zip(weights, biases)):
        z = [sum(float(w[r][c]) * a[c] for c in range(len(a))) + float(b[r])
             for r in range(len(b))]
        a = z if li == len(weights) - 1 else [max(v, 0.0) for v in z]
    return a


def central_difference(f, params, h=1e-5):
    """d f / d params[i][j...] for every entry of every array, in place-safe."""
    grads = []
    for p in params:
        g = np.zeros_like(p, dtype=float)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = f()
            p[idx] = old - h
            down = f()
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def wmse(pred, target, w):
    n = len(pred)
    return sum(((p - t) * wi) ** 2 for p, t, wi in zip(pred, target, w)) / n


def adam_scalar(theta, grads, lr=0.01, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        theta = theta - lr * mhat / (math.sqrt(vhat) + eps)
    return theta


# -- rewards ---------------------------------------------------------------------
AGENT, OTHER, NORMAL = 0, 1, 2


def reward_cases(true, action, k):
    """The five-case reward rule; cells it leaves open fall to -1."""
    if true == AGENT and action == AGENT:
        return k
    if true == AGENT:
        return -k
    if action == true:
        return 1
    if action == AGENT:
        return -k
    return -1


HAND_TABLE = {
    # (true, action): reward as a function of k, enumerated by hand
    (AGENT, AGENT): lambda k: k, (AGENT, OTHER): lambda k: -k, (AGENT, NORMAL): lambda k: -k,
    (OTHER, AGENT): lambda k: -k, (OTHER, OTHER): lambda k: 1, (OTHER, NORMAL): lambda k: -1,
    (NORMAL, AGENT): lambda k: -k, (NORMAL, OTHER): lambda k: -1, (NORMAL, NORMAL): lambda k: 1,
}


# -- metrics ---------------------------------------------------------------------

def brute_force_metrics(pairs, labels):
    """Per-class one-vs-rest rates as exact Fractions from raw (true, pred) pairs."""
    out = {}
    for c in labels:
        tp = sum(1 for t, p in pairs if t == c and p == c)
        fp = sum(1 for t, p in pairs if t != c and p == c)
        fn = sum(1 for t, p in pairs if t == c and p != c)
        tn = sum(1 for t, p in pairs if t != c and p != c)
        prec = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
        rec = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else Fraction(0)
        fpr = Fraction(fp, fp + tn) if fp + tn else Fraction(0)
        out[c] = dict(precision=prec, recall=rec, f1=f1, fpr=fpr, support=tp + fn)
    return out


def brute_force_weighted(per_class, n):
    return {m: sum(Fraction(v["support"], n) * v[m] for v in per_class.values())
            for m in ("precision", "recall", "f1", "fpr")}


def pairwise_auc(scores, positive):
    """Probability a random positive outscores a random negative, ties = 1/2."""
    pos = [s for s, y in zip(scores, positive) if y]
    neg = [s for s, y in zip(scores, positive) if not y]
    total = Fraction(0)
    for a, b in product(pos, neg):
        total += 1 if a > b else Fraction(1, 2) if a == b else 0
    return total / (len(pos) * len(neg))


# -- data ------------------------------------------------------------------------

def hamilton(counts, fraction):
    """Largest-remainder apportionment of floor(fraction * total) across classes."""
    fraction = Fraction(fraction).limit_denominator(10 ** 9)
    total = sum(counts.values())
    budget = math.floor(fraction * total)
    quotas = {c: Fraction(budget * n, total) for c, n in counts.items()}
    base = {c: math.floor(q) for c, q in quotas.items()}
    left = budget - sum(base.values())
    ranked = sorted(counts, key=lambda c: (-(quotas[c] - base[c]), -counts[c], c))
    for c in ranked[:left]:
        base[c] += 1
    return base
