"""Synthetic datasets with known generative distributions.

The Gaussian mixture carries an exact Bayes posterior, which serves as the
ground-truth calibration oracle for the evaluation pipeline. The shifted
variant plays the role of an out-of-distribution test set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn

KINDS = ("gaussian_mixture", "two_arcs", "ood_shift")


@dataclass
class DatasetSpec:
    kind: str
    dim: int = 2
    classes: int = 2
    seed: int = 0
    # gaussian_mixture
    centers: np.ndarray | None = None
    sigma: float = 1.0
    per_class_n: int = 100
    # two_arcs
    radius: float = 1.0
    noise: float = 0.1
    n: int = 200
    # ood_shift
    base: "DatasetSpec | None" = None
    offset: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "gaussian_mixture":
            if self.centers is None:
                raise ValueError("gaussian_mixture needs centers")
            self.centers = np.asarray(self.centers, dtype=np.float64)
            self.classes, self.dim = self.centers.shape
            if self.sigma <= 0:
                raise ValueError("sigma must be > 0")
            if self.per_class_n < 1:
                raise ValueError("per_class_n must be >= 1")
        elif self.kind == "two_arcs":
            self.classes, self.dim = 2, 2
            if self.n < 2:
                raise ValueError("two_arcs needs n >= 2")
        else:
            if self.base is None or self.offset is None:
                raise ValueError("ood_shift needs base spec and offset")
            self.offset = np.asarray(self.offset, dtype=np.float64).reshape(-1)
            self.classes, self.dim = self.base.classes, self.base.dim
            if self.offset.shape[0] != self.dim:
                raise ValueError("offset length != base dim")


def unit_triangle_centers():
    """Three class centers on an equilateral triangle with side 1."""
    return np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3.0) / 2.0]])


def reference_mixture_spec(seed=0, sigma=0.2, per_class_n=500):
    """The stock 3-class mixture on the unit triangle.

    sigma=0.2 gives the well-separated toy set used for manifold/attack
    work; sigma=0.6 is the overlapping variant used in the calibration
    experiments (Bayes accuracy well below 1).
    """
    return DatasetSpec("gaussian_mixture", centers=unit_triangle_centers(),
                       sigma=sigma, per_class_n=per_class_n, seed=seed)


def gen_dataset(spec, rng=None):
    """Draw (data, labels, meta) from a spec; same seed, same bits.

    meta carries per-feature (min, max) bounds and the basic shape facts.
    """
    if rng is None:
        rng = nn.make_rng(spec.seed)
    if spec.kind == "gaussian_mixture":
        parts, labels = [], []
        for k in range(spec.classes):
            parts.append(spec.centers[k]
                         + spec.sigma * rng.standard_normal((spec.per_class_n, spec.dim)))
            labels.append(np.full(spec.per_class_n, k, dtype=np.int64))
        data = np.vstack(parts)
        labels = np.concatenate(labels)
    elif spec.kind == "two_arcs":
        n0 = spec.n // 2
        n1 = spec.n - n0
        t0 = rng.uniform(0.0, np.pi, n0)
        t1 = rng.uniform(0.0, np.pi, n1)
        upper = spec.radius * np.column_stack([np.cos(t0), np.sin(t0)])
        lower = np.column_stack([spec.radius - spec.radius * np.cos(t1),
                                 spec.radius * 0.5 - spec.radius * np.sin(t1)])
        data = np.vstack([upper, lower]) + spec.noise * rng.standard_normal((spec.n, 2))
        labels = np.concatenate([np.zeros(n0, dtype=np.int64),
                                 np.ones(n1, dtype=np.int64)])
    else:  # ood_shift
        data, labels, _ = gen_dataset(spec.base, rng)
        data = data + spec.offset
    meta = {
        "bounds": np.column_stack([data.min(axis=0), data.max(axis=0)]),
        "classes": spec.classes,
        "dim": spec.dim,
    }
    return np.ascontiguousarray(data), labels, meta


def analytic_posterior(spec, x):
    """Exact Bayes posterior p(y | x) for a Gaussian mixture spec.

    Classes share the isotropic covariance sigma^2 I and have equal priors
    (equal per-class counts), so the posterior is a softmax over
    -||x - center||^2 / (2 sigma^2).
    """
    if spec.kind != "gaussian_mixture":
        raise ValueError("analytic posterior only defined for gaussian_mixture")
    x = nn.as_matrix(x)
    if x.shape[1] != spec.dim:
        raise nn.ShapeError(f"x has {x.shape[1]} columns, spec dim is {spec.dim}")
    d2 = ((x[:, None, :] - spec.centers[None, :, :]) ** 2).sum(axis=2)
    return nn.softmax(-d2 / (2.0 * spec.sigma ** 2))


def default_ood_offset(spec, scale=6.0):
    """Diagonal shift with norm scale * sigma; the stock OOD displacement."""
    direction = np.ones(spec.dim) / np.sqrt(spec.dim)
    return scale * spec.sigma * direction
