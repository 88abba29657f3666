"""Synthetic flow datasets built from Gaussian clusters.

Used by the test-suite and for desk-scale experiments; the public flow data
is too large to train on in a unit test.
"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Mapping

import numpy as np

from .data import Dataset

IMBALANCE_RATIOS = {"Attack-A": 1000, "Attack-B": 100, "Attack-C": 10, "Attack-D": 10,
                    "BENIGN": 2000}


def apportion(total: int, ratios: Mapping[str, int]) -> dict[str, int]:
    """Integer class sizes summing to ``total`` in the given integer ratios.

    Largest-remainder rounding; ties go to the label listed first.
    """
    denom = sum(ratios.values())
    shares = {k: Fraction(total * v, denom) for k, v in ratios.items()}
    sizes = {k: math.floor(s) for k, s in shares.items()}
    order = sorted(ratios, key=lambda k: -(shares[k] - sizes[k]))
    for k in order[: total - sum(sizes.values())]:
        sizes[k] += 1
    return sizes


def gaussian_flows(class_sizes: Mapping[str, int], n_features: int = 10,
                   separation: float = 6.0, seed=0, centers: Mapping[str, np.ndarray] | None = None
                   ) -> Dataset:
    """One isotropic unit-variance Gaussian cluster per label.

    Cluster centres are random directions scaled to ``separation``.  Each
    feature is then given its own scale and offset, as raw flow statistics
    would have, so normalization matters.  Rows are shuffled.
    """
    rng = np.random.default_rng(seed)
    centers = dict(centers or {})
    for label in class_sizes:
        if label not in centers:
            d = rng.standard_normal(n_features)
            centers[label] = separation * d / np.linalg.norm(d)
    xs, ys = [], []
    for label, n in class_sizes.items():
        xs.append(centers[label] + rng.standard_normal((n, n_features)))
        ys.extend([label] * n)
    x = np.concatenate(xs)
    scale = 10.0 ** rng.uniform(-1, 3, n_features)
    offset = rng.uniform(0, 100, n_features)
    x = x * scale + offset
    perm = rng.permutation(len(x))
    return Dataset(x[perm], np.array(ys, dtype=object)[perm],
                   tuple(f"feature_{i}" for i in range(n_features)),
                   (f"synthetic gaussian seed={seed}",))


def imbalanced_flows(total: int = 20_000, ratios: Mapping[str, float] = IMBALANCE_RATIOS,
                     n_features: int = 10, seed=0) -> Dataset:
    return gaussian_flows(apportion(total, ratios), n_features=n_features, seed=seed)
