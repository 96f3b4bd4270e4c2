"""Autoencoder-based manifold model with a jointly trained latent classifier.

The encoder/decoder pair approximates the data manifold; a Gaussian-style
L2 penalty on latent codes keeps them inside the prior's support, and the
latent classifier clusters codes by class so its decision boundaries can be
attacked. All three networks are updated together on every batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn


@dataclass
class GenModel:
    """Encoder (d -> m) and decoder (m -> d) defining the learned manifold."""

    encoder: nn.Mlp
    decoder: nn.Mlp
    latent_dim: int

    def __post_init__(self):
        if self.encoder.spec.out_dim != self.latent_dim:
            raise nn.ShapeError("encoder output dim != latent_dim")
        if self.decoder.spec.in_dim != self.latent_dim:
            raise nn.ShapeError("decoder input dim != latent_dim")
        if self.latent_dim < 2:
            raise ValueError("latent_dim must be >= 2")


@dataclass
class LatentClassifier:
    """Classifier over latent codes (m -> c)."""

    net: nn.Mlp
    num_classes: int

    def __post_init__(self):
        if self.net.spec.out_dim != self.num_classes:
            raise nn.ShapeError("classifier output dim != num_classes")


@dataclass
class GenTrainConfig:
    epochs: int = 400
    lr: float = 0.05
    beta_latent_reg: float = 0.05
    gamma_cls: float = 1.0
    batch_size: int = 64
    seed: int = 0
    # architecture knobs (encoder/decoder are tanh, classifier relu)
    latent_dim: int = 2
    enc_hidden: tuple = (64, 64)
    cls_hidden: tuple = (32,)
    momentum: float = 0.9

    def __post_init__(self):
        if self.beta_latent_reg < 0 or self.gamma_cls < 0:
            raise ValueError("loss weights must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def encode(gm, x):
    """Deterministic latent code of x (n x d -> n x m)."""
    out, _ = nn.forward(gm.encoder, x)
    return out


def decode(gm, z):
    """Deterministic reconstruction from latent codes (n x m -> n x d)."""
    out, _ = nn.forward(gm.decoder, z)
    return out


def latent_classify(lc, z):
    """Class probabilities for latent codes; rows sum to 1."""
    logits, _ = nn.forward(lc.net, z)
    return nn.softmax(logits)


def reconstruction_error(gm, data):
    """Mean squared reconstruction error over all entries."""
    data = nn.as_matrix(data)
    if data.shape[0] == 0:
        raise ValueError("empty data")
    diff = decode(gm, encode(gm, data)) - data
    return float((diff * diff).mean())


def train_generative(data, labels, cfg, rng=None):
    """Jointly train encoder, decoder and latent classifier.

    Per-batch loss: MSE(x, decode(encode(x)))
                    + beta * mean(||z||^2) / m
                    + gamma * CE(labels, latent_classify(encode(x))).

    Returns (GenModel, LatentClassifier, history) where history holds
    per-epoch averages of each loss component and the latent classifier's
    batch accuracy.
    """
    data = nn.as_matrix(data)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, d = data.shape
    if n == 0:
        raise ValueError("empty data")
    if labels.shape[0] != n:
        raise nn.ShapeError("labels length != data rows")
    c = int(labels.max()) + 1 if n else 0
    if c < 2:
        raise ValueError("need at least 2 classes")
    if n < cfg.batch_size:
        raise ValueError("data rows must be >= batch_size")
    if rng is None:
        rng = nn.make_rng(cfg.seed)

    m = cfg.latent_dim
    encoder = nn.init_mlp(nn.MlpSpec((d, *cfg.enc_hidden, m), activation="tanh"), rng)
    decoder = nn.init_mlp(nn.MlpSpec((m, *reversed(cfg.enc_hidden), d), activation="tanh"), rng)
    cls_net = nn.init_mlp(nn.MlpSpec((m, *cfg.cls_hidden, c), activation="relu"), rng)
    gm = GenModel(encoder, decoder, m)
    lc = LatentClassifier(cls_net, c)

    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels] = 1.0

    states = [None, None, None]
    history = {"total": [], "recon": [], "latent_reg": [], "cls_ce": [], "cls_acc": []}
    n_batches = max(n // cfg.batch_size, 1)

    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        sums = np.zeros(4)
        acc_hits = 0
        seen = 0
        for b in range(n_batches):
            idx = perm[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            x = data[idx]
            y = onehot[idx]

            z, enc_cache = nn.forward(encoder, x)
            xh, dec_cache = nn.forward(decoder, z)
            logits, cls_cache = nn.forward(cls_net, z)

            recon, d_xh = nn.squared_error(xh, x)
            reg = float((z * z).mean())
            ce, d_logits = nn.softmax_cross_entropy(logits, y)
            total = recon + cfg.beta_latent_reg * reg + cfg.gamma_cls * ce
            if not np.isfinite(total):
                raise RuntimeError(f"non-finite generative loss at batch {b}")

            dec_grads = nn.backward(decoder, dec_cache, d_xh)
            cls_grads = nn.backward(cls_net, cls_cache, cfg.gamma_cls * d_logits)
            dz = (dec_grads.input + cls_grads.input
                  + cfg.beta_latent_reg * 2.0 * z / z.size)
            enc_grads = nn.backward(encoder, enc_cache, dz)

            # one joint update across all three networks
            for j, (net, grads) in enumerate(((encoder, enc_grads),
                                              (decoder, dec_grads),
                                              (cls_net, cls_grads))):
                states[j] = nn.sgd_update(net, grads, lr=cfg.lr,
                                          momentum=cfg.momentum, state=states[j])

            sums += (total, recon, reg, ce)
            acc_hits += int((logits.argmax(axis=1) == labels[idx]).sum())
            seen += len(idx)
        history["total"].append(sums[0] / n_batches)
        history["recon"].append(sums[1] / n_batches)
        history["latent_reg"].append(sums[2] / n_batches)
        history["cls_ce"].append(sums[3] / n_batches)
        history["cls_acc"].append(acc_hits / seen if seen else 0.0)

    return gm, lc, history
