"""Dense feed-forward networks with explicit backpropagation.

Matrices are 2-D float64 C-contiguous (row-major) numpy arrays; vector
quantities are 1 x d rows. All randomness flows through an explicit
numpy Generator (PCG64), so identical seeds reproduce identical results
across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backends

ACT_CODES = {"tanh": 0, "relu": 1}

PROB_FLOOR = 1e-12  # clamp for probabilities before taking logs


class ShapeError(ValueError):
    """Dimension mismatch between an operand and a network layer."""


def make_rng(seed):
    """Deterministic generator; same seed gives the same stream everywhere."""
    return np.random.default_rng(seed)


def spawn_rng(seed, *labels):
    """Independent child stream keyed by a seed and string labels.

    Stage labels are hashed with crc32 so the derivation is stable across
    runs and platforms.
    """
    import zlib

    keys = [zlib.crc32(str(label).encode()) for label in labels]
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF] + keys))


def as_matrix(x):
    """Coerce to a 2-D float64 row-major matrix (1-D input becomes one row)."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"expected 1-D or 2-D data, got ndim={a.ndim}")
    return np.ascontiguousarray(a)


@dataclass(frozen=True)
class MlpSpec:
    """Architecture description: sizes, hidden activation, dropout rate."""

    layer_sizes: tuple
    activation: str = "tanh"
    dropout_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ValueError("layer_sizes needs at least input and output dims")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError("layer sizes must be positive")
        if self.activation not in ACT_CODES:
            raise ValueError(f"activation must be one of {sorted(ACT_CODES)}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    @property
    def in_dim(self):
        return self.layer_sizes[0]

    @property
    def out_dim(self):
        return self.layer_sizes[-1]

    @property
    def num_layers(self):
        return len(self.layer_sizes) - 1


@dataclass
class Mlp:
    """A network instance: spec plus per-layer weight/bias matrices."""

    spec: MlpSpec
    weights: list
    biases: list

    def __post_init__(self):
        sizes = self.spec.layer_sizes
        if len(self.weights) != self.spec.num_layers or len(self.biases) != self.spec.num_layers:
            raise ShapeError("parameter count does not match spec")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (1, sizes[i + 1]):
                raise ShapeError(f"layer {i} parameter shape mismatch")

    def parameters(self):
        """Flat parameter list: all weights, then all biases."""
        return list(self.weights) + list(self.biases)

    def copy(self):
        return Mlp(self.spec, [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases])


def init_mlp(spec, rng):
    """Glorot-uniform init for tanh nets, He-normal for relu; zero biases."""
    weights, biases = [], []
    sizes = spec.layer_sizes
    for i in range(spec.num_layers):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        if spec.activation == "relu":
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        weights.append(np.ascontiguousarray(w))
        biases.append(np.zeros((1, fan_out)))
    return Mlp(spec, weights, biases)


@dataclass
class ForwardCache:
    """Activation record produced by forward(), consumed by backward()."""

    inputs: list       # per-layer inputs (post-dropout); inputs[0] is x
    hiddens: list      # pre-dropout activations of each hidden layer
    masks: list | None  # pre-scaled dropout masks, None in eval mode
    output: np.ndarray
    num_layers: int


def forward(net, x, mode="eval", rng=None):
    """Run the network; returns (output, cache).

    Eval mode is deterministic. Train mode applies inverted dropout at the
    rate from the spec and needs an rng when that rate is positive.
    """
    x = as_matrix(x)
    if x.shape[1] != net.spec.in_dim:
        raise ShapeError(f"input has {x.shape[1]} columns, net expects {net.spec.in_dim}")
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    masks = None
    p = net.spec.dropout_rate
    if mode == "train" and p > 0.0:
        if rng is None:
            raise ValueError("train-mode forward with dropout needs an rng")
        keep = 1.0 - p
        masks = [
            (rng.random((x.shape[0], size)) < keep).astype(np.float64) / keep
            for size in net.spec.layer_sizes[1:-1]
        ]
    kern = backends.get_backend()
    inputs, hiddens, out = kern.forward_pass(
        net.weights, net.biases, ACT_CODES[net.spec.activation], x, masks)
    return out, ForwardCache(inputs, hiddens, masks, out, net.spec.num_layers)


@dataclass
class Gradients:
    """Parameter gradients (shapes mirror the net) plus the input gradient."""

    weights: list
    biases: list
    input: np.ndarray

    def parameters(self):
        return list(self.weights) + list(self.biases)


def backward(net, cache, loss_grad):
    """Backprop loss_grad (d loss / d output) through a cached forward."""
    loss_grad = as_matrix(loss_grad)
    if len(cache.inputs) != net.spec.num_layers:
        raise ShapeError("cache does not match network depth")
    if loss_grad.shape != cache.output.shape:
        raise ShapeError("loss_grad shape does not match cached output")
    if cache.inputs[0].shape[1] != net.spec.in_dim:
        raise ShapeError("cache does not match network input width")
    kern = backends.get_backend()
    dws, dbs, dx = kern.backward_pass(
        net.weights, ACT_CODES[net.spec.activation],
        cache.inputs, cache.hiddens, cache.masks, loss_grad)
    return Gradients(dws, dbs, dx)


def softmax(logits):
    """Row-wise softmax with max subtraction for stability."""
    logits = as_matrix(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def soft_cross_entropy(pred_probs, target_probs):
    """Mean over rows of -sum_i t_i log p_i (natural log).

    Probabilities are clamped at 1e-12 before the log so exact zeros do
    not produce infinities.
    """
    p = as_matrix(pred_probs)
    t = as_matrix(target_probs)
    if p.shape != t.shape:
        raise ShapeError("prediction and target shapes differ")
    return float(-(t * np.log(np.maximum(p, PROB_FLOOR))).sum(axis=1).mean())


def shannon_entropy(probs):
    """Per-row natural-log entropy; 0 log 0 is treated as 0."""
    p = as_matrix(probs)
    logp = np.log(np.maximum(p, PROB_FLOOR))
    return -(np.where(p > 0.0, p * logp, 0.0)).sum(axis=1)


def softmax_cross_entropy(logits, target_probs):
    """Fused softmax + soft cross-entropy for training.

    Returns (loss, d loss / d logits) with the mean-over-rows convention,
    so the gradient is (softmax(logits) - targets) / n_rows.
    """
    logits = as_matrix(logits)
    t = as_matrix(target_probs)
    p = softmax(logits)
    loss = float(-(t * np.log(np.maximum(p, PROB_FLOOR))).sum(axis=1).mean())
    return loss, (p - t) / logits.shape[0]


def squared_error(output, target):
    """Mean over all entries of (output - target)^2, with gradient."""
    o = as_matrix(output)
    t = as_matrix(target)
    diff = o - t
    return float((diff * diff).mean()), 2.0 * diff / diff.size


@dataclass
class SgdState:
    """Per-parameter momentum buffers, created lazily on the first step."""

    velocities: list = field(default_factory=list)


def sgd_update(net, grads, lr, momentum=0.9, weight_decay=0.0, state=None):
    """SGD with momentum and L2 weight decay, updating the net in place.

    v <- momentum * v + (g + weight_decay * w);  w <- w - lr * v.
    Returns the state so velocity carries across calls.
    """
    if lr < 0.0:
        raise ValueError("lr must be non-negative")
    if state is None:
        state = SgdState()
    params = net.parameters()
    gs = grads.parameters() if isinstance(grads, Gradients) else list(grads)
    if not state.velocities:
        state.velocities = [np.zeros_like(p) for p in params]
    for p, g, v in zip(params, gs, state.velocities):
        np.add(momentum * v, g + weight_decay * p, out=v)
        p -= lr * v
    return state


_LOSSES = {}


def _register_losses():
    _LOSSES["soft_ce"] = softmax_cross_entropy
    _LOSSES["squared_error"] = squared_error


_register_losses()


def grad_check(net, x, target, loss="soft_ce", h=1e-5):
    """Max relative error between backprop and central finite differences.

    loss is a name from {'soft_ce', 'squared_error'} or a callable
    (output, target) -> (value, grad). The relative error per entry is
    |analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    if not 1e-6 <= h <= 1e-3:
        raise ValueError("h must be in [1e-6, 1e-3]")
    loss_fn = _LOSSES[loss] if isinstance(loss, str) else loss
    x = as_matrix(x)
    target = as_matrix(target)

    out, cache = forward(net, x, mode="eval")
    _, dout = loss_fn(out, target)
    analytic = backward(net, cache, dout).parameters()

    worst = 0.0
    for p, g in zip(net.parameters(), analytic):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            plus, _ = loss_fn(forward(net, x, mode="eval")[0], target)
            flat[i] = orig - h
            minus, _ = loss_fn(forward(net, x, mode="eval")[0], target)
            flat[i] = orig
            numeric = (plus - minus) / (2.0 * h)
            a = gflat[i]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if err > worst:
                worst = err
    return worst
