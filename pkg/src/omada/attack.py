"""Targeted sign-gradient attacks on the latent classifier.

Walking a latent code toward a target class (or a two-class decision
boundary) traces a path through the low-density regions between clusters;
decoding points from that path and labelling them with the latent
classifier's soft outputs yields the augmentation set.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import backends, manifold, nn

SAMPLE_MODES = ("uniform", "entropy")
LABEL_MODES = ("soft", "hard", "uniform")


class AttackError(RuntimeError):
    """Attack aborted (non-finite iterates)."""


@dataclass
class AttackConfig:
    steps: int = 1000
    alpha: float = 0.01
    record_stride: int = 10
    early_stop_target_prob: float | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


@dataclass(frozen=True)
class TargetSpec:
    """Attack objective: a single class or a two-class boundary.

    vector is the target distribution: one-hot for single_class, 0.5 on
    each class of a boundary pair.
    """

    kind: str
    classes: tuple
    vector: np.ndarray


def make_target(kind, classes, c):
    """Build a TargetSpec; classes is an id (single_class) or a pair."""
    if np.isscalar(classes):
        classes = (int(classes),)
    classes = tuple(int(k) for k in classes)
    if any(k < 0 or k >= c for k in classes):
        raise ValueError(f"class id out of range for c={c}")
    vec = np.zeros(c)
    if kind == "single_class":
        if len(classes) != 1:
            raise ValueError("single_class takes exactly one class id")
        vec[classes[0]] = 1.0
    elif kind == "boundary":
        if len(classes) != 2 or classes[0] == classes[1]:
            raise ValueError("boundary takes two distinct class ids")
        vec[list(classes)] = 0.5
    else:
        raise ValueError(f"unknown target kind {kind!r}")
    return TargetSpec(kind, classes, vec)


@dataclass
class AttackPath:
    """Recorded latent iterates with their soft labels and entropies."""

    source_index: int
    source_class: int
    target: TargetSpec
    codes: np.ndarray        # (k, m)
    soft_labels: np.ndarray  # (k, c)
    entropies: np.ndarray    # (k,)
    step_ids: np.ndarray     # (k,) attack-step number of each record

    def __len__(self):
        return self.codes.shape[0]


def pgd_attack(gm, lc, x_source, target, cfg, source_index=-1, source_class=-1):
    """Unconstrained L_inf sign-gradient descent on CE(target, C(z)).

    Iterates z <- z - alpha * sign(grad) from z0 = encode(x_source) for
    cfg.steps steps, recording step 0, every record_stride-th step and the
    final step. With early_stop_target_prob set, stops as soon as the
    target mass sum_i y_i p_i reaches the threshold.
    """
    if target.vector.shape[0] != lc.num_classes:
        raise ValueError("target vector length != classifier classes")
    x_source = nn.as_matrix(x_source)
    z0 = manifold.encode(gm, x_source)[0]
    kern = backends.get_backend()
    early = cfg.early_stop_target_prob if cfg.early_stop_target_prob is not None else -1.0
    codes, probs, step_ids = kern.attack_steps(
        lc.net.weights, lc.net.biases, nn.ACT_CODES[lc.net.spec.activation],
        z0, target.vector, cfg.steps, cfg.alpha, cfg.record_stride, early)
    if not (np.isfinite(codes).all() and np.isfinite(probs).all()):
        bad = int(np.argmax(~np.isfinite(codes).all(axis=1) | ~np.isfinite(probs).all(axis=1)))
        raise AttackError(
            f"non-finite attack iterate at recorded step {int(step_ids[bad])} "
            f"(source_index={source_index}, target={target.classes})")
    return AttackPath(source_index, source_class, target, codes, probs,
                      nn.shannon_entropy(probs), step_ids)


def sample_path(path, mode, k, rng):
    """Draw k recorded-step indices, uniformly or entropy-weighted.

    Entropy weighting uses pmf_i = H_i / sum_j H_j; a zero-entropy path
    falls back to uniform.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n = len(path)
    if mode == "uniform":
        return rng.integers(0, n, size=k)
    if mode == "entropy":
        total = path.entropies.sum()
        if total <= 0.0:
            return rng.integers(0, n, size=k)
        return rng.choice(n, size=k, p=path.entropies / total)
    raise ValueError(f"unknown sample mode {mode!r}")


def transform_label(soft, mode, c):
    """Soft labels pass through; hard takes the argmax (lowest index wins
    ties); uniform replaces everything with 1/c."""
    soft = np.asarray(soft, dtype=np.float64).reshape(-1)
    if mode == "soft":
        return soft.copy()
    if mode == "hard":
        out = np.zeros(c)
        out[int(np.argmax(soft))] = 1.0
        return out
    if mode == "uniform":
        return np.full(c, 1.0 / c)
    raise ValueError(f"unknown label mode {mode!r}")


@dataclass
class OmadaSample:
    input: np.ndarray        # decoded sample, (d,)
    label: np.ndarray        # (c,)
    provenance: tuple        # (path id, attack step)


class AugmentationSet:
    """Decoded on-manifold samples with their (transformed) labels.

    Keeps the sampled latent codes and untransformed soft labels so
    hard/uniform relabelled variants of the same samples can be derived
    cheaply.
    """

    def __init__(self, inputs, codes, soft_labels, labels, provenance,
                 sample_mode, label_mode):
        self.inputs = inputs
        self.codes = codes
        self.soft_labels = soft_labels
        self.labels = labels
        self.provenance = provenance
        self.sample_mode = sample_mode
        self.label_mode = label_mode

    def __len__(self):
        return self.inputs.shape[0]

    def __getitem__(self, i):
        return OmadaSample(self.inputs[i], self.labels[i],
                           (int(self.provenance[i, 0]), int(self.provenance[i, 1])))

    @property
    def num_classes(self):
        return self.soft_labels.shape[1]

    def relabel(self, label_mode):
        """Same samples, labels re-derived from the stored soft labels."""
        c = self.num_classes
        labels = np.vstack([transform_label(s, label_mode, c) for s in self.soft_labels])
        return AugmentationSet(self.inputs, self.codes, self.soft_labels, labels,
                               self.provenance, self.sample_mode, label_mode)


def build_omada_set(gm, lc, sources, source_labels, attack_cfg, sample_mode,
                    label_mode, set_size, rng, samples_per_path=5,
                    boundary_targets=False, max_aborts=100):
    """Create the offline augmentation set.

    Repeatedly picks a random source row and a random target (a class
    other than the source's; with boundary_targets, half the paths aim for
    a random two-class boundary instead), attacks, samples codes along the
    path, decodes them, and attaches transformed latent soft labels.
    Aborted attacks are skipped and resampled up to max_aborts times.
    """
    if set_size < 1:
        raise ValueError("set_size must be >= 1")
    if sample_mode not in SAMPLE_MODES:
        raise ValueError(f"unknown sample mode {sample_mode!r}")
    if label_mode not in LABEL_MODES:
        raise ValueError(f"unknown label mode {label_mode!r}")
    sources = nn.as_matrix(sources)
    source_labels = np.asarray(source_labels, dtype=np.int64).reshape(-1)
    if sources.shape[0] == 0:
        raise ValueError("sources must be non-empty")
    if sources.shape[0] != source_labels.shape[0]:
        raise nn.ShapeError("sources and source_labels disagree")
    c = lc.num_classes

    inputs, codes, softs, labels, prov = [], [], [], [], []
    n_collected = 0
    path_id = 0
    aborts = 0
    while n_collected < set_size:
        src = int(rng.integers(0, sources.shape[0]))
        y_s = int(source_labels[src])
        if boundary_targets and rng.random() < 0.5:
            pair = rng.choice(c, size=2, replace=False)
            target = make_target("boundary", (int(pair[0]), int(pair[1])), c)
        else:
            others = [k for k in range(c) if k != y_s]
            target = make_target("single_class", others[int(rng.integers(0, len(others)))], c)
        try:
            path = pgd_attack(gm, lc, sources[src], target, attack_cfg,
                              source_index=src, source_class=y_s)
        except AttackError:
            aborts += 1
            if aborts > max_aborts:
                raise
            continue
        take = min(samples_per_path, set_size - n_collected)
        idx = sample_path(path, sample_mode, take, rng)
        picked = path.codes[idx]
        decoded = manifold.decode(gm, picked)
        soft = manifold.latent_classify(lc, picked)
        for j, i_step in enumerate(idx):
            inputs.append(decoded[j])
            codes.append(picked[j])
            softs.append(soft[j])
            labels.append(transform_label(soft[j], label_mode, c))
            prov.append((path_id, int(path.step_ids[i_step])))
        n_collected += take
        path_id += 1

    return AugmentationSet(np.vstack(inputs), np.vstack(codes), np.vstack(softs),
                           np.vstack(labels), np.asarray(prov, dtype=np.int64),
                           sample_mode, label_mode)


def export_path_csv(path, gm, out):
    """Write one row per recorded step: step, z columns (2-D latents only),
    class probabilities, entropy. Floats use 17 significant digits."""
    m = gm.latent_dim
    c = path.soft_labels.shape[1]
    include_codes = m == 2
    header = ["step"]
    if include_codes:
        header += [f"z{j + 1}" for j in range(m)]
    header += [f"p_class_{j}" for j in range(c)] + ["entropy"]
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(path)):
            row = [int(path.step_ids[i])]
            if include_codes:
                row += [format(v, ".17g") for v in path.codes[i]]
            row += [format(v, ".17g") for v in path.soft_labels[i]]
            row.append(format(path.entropies[i], ".17g"))
            writer.writerow(row)
