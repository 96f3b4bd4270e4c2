"""Input-space classifier training with augmentation baselines.

Every method trains with the soft cross-entropy loss and the same number
of updates per epoch as plain training. Augmented methods (the on-manifold
set, CEDA noise) fill half of each batch; label-smoothing methods reshape
the targets; the mixup family mixes inputs or hidden activations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .attack import AugmentationSet


@dataclass(frozen=True)
class Omada:
    """Mix half of every batch from an offline augmentation set."""

    aug_set: AugmentationSet

    @property
    def name(self):
        parts = ["omada"]
        if self.aug_set.sample_mode == "entropy":
            parts.append("se")
        if self.aug_set.label_mode == "hard":
            parts.append("h")
        elif self.aug_set.label_mode == "uniform":
            parts.append("u")
        return "-".join(parts)


@dataclass(frozen=True)
class Mixup:
    alpha: float = 0.1
    name: str = "mixup"

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")


@dataclass(frozen=True)
class ManifoldMixup:
    alpha: float = 2.0
    name: str = "manifold-mixup"

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")


@dataclass(frozen=True)
class EpsSmoothing:
    epsilon: float = 0.1
    name: str = "eps-smoothing"

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must be in (0, 1)")


@dataclass(frozen=True)
class CedaNoise:
    fraction_permuted: float = 0.5
    name: str = "ceda"

    def __post_init__(self):
        if not 0.0 <= self.fraction_permuted <= 1.0:
            raise ValueError("fraction_permuted must be in [0, 1]")


def method_name(method):
    return "base" if method is None else method.name


@dataclass
class ClfTrainConfig:
    epochs: int = 150
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 64
    lr_milestones: tuple = (75, 120)
    lr_decay: float = 0.1
    validation_fraction: float = 0.1
    early_stop_on_val_acc: bool = True
    seed: int = 0
    # architecture
    hidden: tuple = (32, 32)
    dropout_rate: float = 0.0
    activation: str = "relu"

    def __post_init__(self):
        if list(self.lr_milestones) != sorted(set(self.lr_milestones)):
            raise ValueError("lr_milestones must be strictly increasing")
        if not 0.0 < self.validation_fraction <= 0.5:
            raise ValueError("validation_fraction must be in (0, 0.5]")


@dataclass
class TrainedClassifier:
    net: nn.Mlp
    config: ClfTrainConfig
    history: dict
    selected_epoch: int | None
    val_indices: np.ndarray


def eps_smooth_labels(y_onehot, epsilon, c):
    """Correct class keeps 1 - eps; the eps mass spreads over the others."""
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("epsilon must be in [0, 1)")
    y = nn.as_matrix(y_onehot)
    return y * (1.0 - epsilon) + (1.0 - y) * (epsilon / (c - 1))


def mixup_batch(x1, y1, x2, y2, alpha, rng, lam=None):
    """Convex combination of a batch pair with lam ~ Beta(alpha, alpha).

    Returns (x_mix, y_mix, lam); pass lam explicitly to pin the mixing
    coefficient.
    """
    x1, y1, x2, y2 = map(nn.as_matrix, (x1, y1, x2, y2))
    if x1.shape != x2.shape or y1.shape != y2.shape:
        raise nn.ShapeError("mixup pair shapes disagree")
    if lam is None:
        lam = float(rng.beta(alpha, alpha))
    return lam * x1 + (1 - lam) * x2, lam * y1 + (1 - lam) * y2, lam


def _mix_layer_count(net):
    # eligible mixing points: the input plus each hidden activation
    return net.spec.num_layers


def _forward_from(net, h, start_layer, stop_layer=None):
    """Forward (eval-path, no dropout) through layers [start, stop).

    Returns (value at stop, per-layer inputs, per-layer activations); the
    caches are what _backward_range needs.
    """
    act = net.spec.activation
    stop = net.spec.num_layers if stop_layer is None else stop_layer
    inputs = []
    hiddens = []
    cur = h
    for i in range(start_layer, stop):
        inputs.append(cur)
        cur = cur @ net.weights[i] + net.biases[i]
        if i < net.spec.num_layers - 1:
            cur = np.tanh(cur) if act == "tanh" else np.maximum(cur, 0.0)
            hiddens.append(cur)
    return cur, inputs, hiddens


def _backward_range(net, inputs, hiddens, grad_out, start_layer):
    """Backprop through layers [start_layer, L); returns per-layer grads
    (dws, dbs aligned to absolute layer index) and the gradient at the
    mixing point."""
    act = net.spec.activation
    dws = {}
    dbs = {}
    delta = grad_out
    for idx in range(net.spec.num_layers - 1, start_layer - 1, -1):
        local = idx - start_layer
        dws[idx] = inputs[local].T @ delta
        dbs[idx] = delta.sum(axis=0, keepdims=True)
        dh = delta @ net.weights[idx].T
        if idx == start_layer:
            return dws, dbs, dh
        h = hiddens[local - 1]
        delta = dh * (1.0 - h * h) if act == "tanh" else dh * (h > 0.0)
    return dws, dbs, grad_out


def manifold_mixup_forward(net, x1, y1, x2, y2, alpha, rng, lam=None, layer=None):
    """Mix activations of a random layer (input included) and run forward.

    Returns (output, y_mix). Pass lam/layer to pin the draw.
    """
    out, y_mix, _ = _manifold_mixup_pass(net, x1, y1, x2, y2, alpha, rng,
                                         lam=lam, layer=layer)
    return out, y_mix


def _manifold_mixup_pass(net, x1, y1, x2, y2, alpha, rng, lam=None, layer=None):
    x1, y1, x2, y2 = map(nn.as_matrix, (x1, y1, x2, y2))
    if layer is None:
        layer = int(rng.integers(0, _mix_layer_count(net)))
    if lam is None:
        lam = float(rng.beta(alpha, alpha))
    ctx = {"layer": layer, "lam": lam}
    if layer == 0:
        h_mix = lam * x1 + (1 - lam) * x2
    else:
        a1, in1, hid1 = _forward_from(net, x1, 0, stop_layer=layer)
        a2, in2, hid2 = _forward_from(net, x2, 0, stop_layer=layer)
        h_mix = lam * a1 + (1 - lam) * a2
        ctx["branch_caches"] = ((in1, hid1), (in2, hid2))
    out, tail_in, tail_hid = _forward_from(net, h_mix, layer)
    ctx["tail"] = (tail_in, tail_hid)
    return out, lam * y1 + (1 - lam) * y2, ctx


def _manifold_mixup_backward(net, ctx, grad_out):
    """Parameter gradients for a mixed pass: tail layers get the mixed
    gradient; branch layers get lam- and (1-lam)-scaled contributions."""
    layer, lam = ctx["layer"], ctx["lam"]
    tail_in, tail_hid = ctx["tail"]
    dws_t, dbs_t, dh_mix = _backward_range(net, tail_in, tail_hid, grad_out, layer)
    dws = [np.zeros_like(w) for w in net.weights]
    dbs = [np.zeros_like(b) for b in net.biases]
    for idx, g in dws_t.items():
        dws[idx] += g
    for idx, g in dbs_t.items():
        dbs[idx] += g
    if layer > 0:
        act = net.spec.activation
        for scale, (b_in, b_hid) in zip((lam, 1 - lam), ctx["branch_caches"]):
            h = b_hid[layer - 1]
            delta = (scale * dh_mix) * (1.0 - h * h) if act == "tanh" \
                else (scale * dh_mix) * (h > 0.0)
            for idx in range(layer - 1, -1, -1):
                dws[idx] += b_in[idx].T @ delta
                dbs[idx] += delta.sum(axis=0, keepdims=True)
                if idx > 0:
                    dh = delta @ net.weights[idx].T
                    h = b_hid[idx - 1]
                    delta = dh * (1.0 - h * h) if act == "tanh" else dh * (h > 0.0)
    return dws, dbs


def ceda_noise_batch(batch_size, data_bounds, fraction_permuted, real_batch,
                     num_classes, rng):
    """Noise half-batch: permuted-feature copies of real rows plus uniform
    noise within the per-feature bounds, all labelled uniformly."""
    real_batch = nn.as_matrix(real_batch)
    d = real_batch.shape[1]
    bounds = np.asarray(data_bounds, dtype=np.float64).reshape(d, 2)
    n_perm = int(round(batch_size * fraction_permuted))
    n_noise = batch_size - n_perm
    rows = []
    if n_perm:
        src = real_batch[rng.integers(0, real_batch.shape[0], size=n_perm)]
        perm_rows = np.empty_like(src)
        for i in range(n_perm):
            perm_rows[i] = src[i, rng.permutation(d)]
        rows.append(perm_rows)
    if n_noise:
        lo, hi = bounds[:, 0], bounds[:, 1]
        rows.append(rng.random((n_noise, d)) * (hi - lo) + lo)
    x_noise = np.vstack(rows) if rows else np.empty((0, d))
    return x_noise, np.full((batch_size, num_classes), 1.0 / num_classes)


def _epoch_lr(cfg, epoch):
    decays = sum(1 for m in cfg.lr_milestones if epoch >= m)
    return cfg.lr * cfg.lr_decay ** decays


def train_classifier(data, labels_onehot, method, cfg, rng=None):
    """Train an input-space classifier with the given augmentation method.

    A validation split (cfg.validation_fraction, at least 100 rows when
    available) is withheld from training; with early_stop_on_val_acc the
    returned net is the epoch with the best validation accuracy.
    """
    data = nn.as_matrix(data)
    y = nn.as_matrix(labels_onehot)
    n, d = data.shape
    c = y.shape[1]
    if y.shape[0] != n:
        raise nn.ShapeError("labels rows != data rows")
    if rng is None:
        rng = nn.make_rng(cfg.seed)
    if isinstance(method, Omada) and len(method.aug_set) == 0:
        raise ValueError("OMADA method needs a non-empty augmentation set")

    perm = rng.permutation(n)
    n_val = min(max(int(np.ceil(cfg.validation_fraction * n)), 100), n // 2)
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]
    x_train, y_train = data[train_idx], y[train_idx]
    x_val = data[val_idx]
    val_labels = y[val_idx].argmax(axis=1)

    if len(train_idx) < cfg.batch_size:
        raise ValueError("training split smaller than batch_size")
    n_updates = len(train_idx) // cfg.batch_size
    half_real = (cfg.batch_size + 1) // 2
    half_aug = cfg.batch_size // 2
    bounds = np.column_stack([x_train.min(axis=0), x_train.max(axis=0)])

    net = nn.init_mlp(nn.MlpSpec((d, *cfg.hidden, c), activation=cfg.activation,
                                 dropout_rate=cfg.dropout_rate), rng)
    state = None
    history = {"train_loss": [], "val_acc": [], "lr": [], "batches": []}
    best = None

    for epoch in range(cfg.epochs):
        lr = _epoch_lr(cfg, epoch)
        order = rng.permutation(len(train_idx))
        loss_sum = 0.0
        for b in range(n_updates):
            if isinstance(method, (Omada, CedaNoise)):
                sl = order[b * half_real:(b + 1) * half_real]
                xb_real, yb_real = x_train[sl], y_train[sl]
                if isinstance(method, Omada):
                    pick = rng.integers(0, len(method.aug_set), size=half_aug)
                    xb_aug = method.aug_set.inputs[pick]
                    yb_aug = method.aug_set.labels[pick]
                else:
                    xb_aug, yb_aug = ceda_noise_batch(
                        half_aug, bounds, method.fraction_permuted, xb_real, c, rng)
                xb = np.vstack([xb_real, xb_aug])
                yb = np.vstack([yb_real, yb_aug])
                history["batches"].append((len(xb_real), len(xb_aug)))
            else:
                sl = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
                xb, yb = x_train[sl], y_train[sl]
                history["batches"].append((len(xb), 0))

            if isinstance(method, EpsSmoothing):
                yb = eps_smooth_labels(yb, method.epsilon, c)
            elif isinstance(method, Mixup):
                pair = rng.permutation(len(xb))
                xb, yb, _ = mixup_batch(xb, yb, xb[pair], yb[pair], method.alpha, rng)
            elif isinstance(method, ManifoldMixup):
                pair = rng.permutation(len(xb))
                out, y_mix, ctx = _manifold_mixup_pass(
                    net, xb, yb, xb[pair], yb[pair], method.alpha, rng)
                loss, dout = nn.softmax_cross_entropy(out, y_mix)
                if not np.isfinite(loss):
                    raise RuntimeError(f"non-finite loss at epoch {epoch} batch {b}")
                dws, dbs = _manifold_mixup_backward(net, ctx, dout)
                state = nn.sgd_update(net, dws + dbs, lr=lr, momentum=cfg.momentum,
                                      weight_decay=cfg.weight_decay, state=state)
                loss_sum += loss
                continue

            out, cache = nn.forward(net, xb, mode="train", rng=rng)
            loss, dout = nn.softmax_cross_entropy(out, yb)
            if not np.isfinite(loss):
                raise RuntimeError(f"non-finite loss at epoch {epoch} batch {b}")
            grads = nn.backward(net, cache, dout)
            state = nn.sgd_update(net, grads, lr=lr, momentum=cfg.momentum,
                                  weight_decay=cfg.weight_decay, state=state)
            loss_sum += loss

        val_out, _ = nn.forward(net, x_val)
        val_acc = float((val_out.argmax(axis=1) == val_labels).mean())
        history["train_loss"].append(loss_sum / max(n_updates, 1))
        history["val_acc"].append(val_acc)
        history["lr"].append(lr)
        if cfg.early_stop_on_val_acc and (best is None or val_acc > best[1]):
            best = (epoch, val_acc, net.copy())

    if cfg.epochs == 0:
        selected = None
    elif cfg.early_stop_on_val_acc:
        selected = int(np.argmax(history["val_acc"]))
        net = best[2]
    else:
        selected = cfg.epochs - 1
    return TrainedClassifier(net, cfg, history, selected, val_idx)


def ensemble_predict(nets, x):
    """Arithmetic mean of member softmax outputs."""
    if not nets:
        raise ValueError("empty ensemble")
    dims = {(n.spec.in_dim, n.spec.out_dim) for n in nets}
    if len(dims) != 1:
        raise nn.ShapeError("ensemble members disagree on in/out dims")
    probs = [nn.softmax(nn.forward(net, x)[0]) for net in nets]
    return np.mean(probs, axis=0)


def mc_dropout_predict(net, x, passes=15, rng=None):
    """Mean softmax over train-mode (dropout-active) forward passes."""
    if passes < 1:
        raise ValueError("passes must be >= 1")
    if rng is None:
        rng = nn.make_rng(0)
    probs = [nn.softmax(nn.forward(net, x, mode="train", rng=rng)[0])
             for _ in range(passes)]
    return np.mean(probs, axis=0)
