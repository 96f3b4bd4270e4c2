"""Shared test helpers: independent oracles kept deliberately simple."""

import numpy as np

from omada import nn


def linear_probe_accuracy(latents, labels, num_classes, seed=1, epochs=150):
    """Train a fresh linear softmax classifier on the latents and report
    its training accuracy (linear-separability oracle)."""
    rng = nn.make_rng(seed)
    net = nn.init_mlp(nn.MlpSpec((latents.shape[1], num_classes)), rng)
    onehot = np.zeros((len(labels), num_classes))
    onehot[np.arange(len(labels)), labels] = 1.0
    state = None
    batch = min(50, len(labels))
    for _ in range(epochs):
        perm = rng.permutation(len(labels))
        for b in range(max(len(labels) // batch, 1)):
            idx = perm[b * batch:(b + 1) * batch]
            out, cache = nn.forward(net, latents[idx])
            _, dout = nn.softmax_cross_entropy(out, onehot[idx])
            state = nn.sgd_update(net, nn.backward(net, cache, dout), lr=0.5, state=state)
    preds = nn.forward(net, latents)[0].argmax(axis=1)
    return float((preds == labels).mean())


def identity_autoencoder(dim=2):
    """GenModel whose encoder and decoder are exact identity maps."""
    from omada import manifold

    def ident():
        return nn.Mlp(nn.MlpSpec((dim, dim)), [np.eye(dim)], [np.zeros((1, dim))])

    return manifold.GenModel(ident(), ident(), dim)


def linear_latent_classifier(weights, num_classes):
    """Latent classifier with a single affine layer and given weights."""
    from omada import manifold

    w = np.asarray(weights, dtype=np.float64)
    net = nn.Mlp(nn.MlpSpec((w.shape[0], w.shape[1])), [np.ascontiguousarray(w)],
                 [np.zeros((1, w.shape[1]))])
    return manifold.LatentClassifier(net, num_classes)
