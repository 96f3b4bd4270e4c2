"""Pure numpy implementations of the hot kernels.

Fallback backend used when the compiled extension is unavailable (or when
forced via OMADA_BACKEND=pure). Signatures mirror ``omada.backends._core``.

Activation codes: 0 = tanh, 1 = relu. Dropout masks, when given, are
pre-scaled (entries 0 or 1/keep_prob) so train-time expectations match the
eval forward.
"""

import numpy as np

NAME = "pure"


def _activate(a, act_code):
    if act_code == 0:
        return np.tanh(a)
    return np.maximum(a, 0.0)


def forward_pass(weights, biases, act_code, x, masks):
    """Full MLP forward: affine -> activation (-> dropout) per hidden layer,
    final layer affine only.

    Returns (inputs, hiddens, out) where inputs[i] is what layer i consumed
    (post-dropout) and hiddens[i] is the pre-dropout activation of hidden
    layer i. Both are needed by backward_pass.
    """
    n_layers = len(weights)
    inputs = [x]
    hiddens = []
    cur = x
    for i in range(n_layers - 1):
        h = _activate(cur @ weights[i] + biases[i], act_code)
        hiddens.append(h)
        if masks is not None:
            h = h * masks[i]
        inputs.append(h)
        cur = h
    out = cur @ weights[-1] + biases[-1]
    return inputs, hiddens, out


def backward_pass(weights, act_code, inputs, hiddens, masks, grad_out):
    """Backprop through a cached forward pass.

    Returns (dws, dbs, dx) with parameter gradients in layer order and the
    gradient with respect to the network input.
    """
    n_layers = len(weights)
    dws = [None] * n_layers
    dbs = [None] * n_layers
    delta = grad_out
    for i in range(n_layers - 1, -1, -1):
        dws[i] = inputs[i].T @ delta
        dbs[i] = delta.sum(axis=0, keepdims=True)
        if i == 0:
            return dws, dbs, delta @ weights[0].T
        dh = delta @ weights[i].T
        if masks is not None:
            dh = dh * masks[i - 1]
        h = hiddens[i - 1]
        if act_code == 0:
            delta = dh * (1.0 - h * h)
        else:
            delta = dh * (h > 0.0)
    raise AssertionError("unreachable")


def _row_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def attack_steps(weights, biases, act_code, z0, target, steps, alpha,
                 record_stride, early_stop):
    """Sign-gradient descent on CE(target, softmax(net(z))) with respect
    to z, recording step 0, every ``record_stride``-th iterate and the
    final iterate.

    z0: (m,) start code; target: (c,) probability vector;
    early_stop: stop once sum(target * probs) >= early_stop (pass a
    negative value to disable).

    Returns (codes (k, m), probs (k, c), step_ids (k,)).
    """
    z = np.array(z0, dtype=np.float64).reshape(1, -1)
    tgt = np.asarray(target, dtype=np.float64).reshape(1, -1)

    inputs, hiddens, logits = forward_pass(weights, biases, act_code, z, None)
    p = _row_softmax(logits)
    codes = [z[0].copy()]
    probs_rec = [p[0].copy()]
    step_ids = [0]

    for k in range(1, steps + 1):
        _, _, dz = backward_pass(weights, act_code, inputs, hiddens, None, p - tgt)
        z = z - alpha * np.sign(dz)
        inputs, hiddens, logits = forward_pass(weights, biases, act_code, z, None)
        p = _row_softmax(logits)
        stop = early_stop >= 0.0 and float(p @ tgt.T) >= early_stop
        if k % record_stride == 0 or k == steps or stop:
            codes.append(z[0].copy())
            probs_rec.append(p[0].copy())
            step_ids.append(k)
        if stop:
            break
    return (np.array(codes), np.array(probs_rec),
            np.array(step_ids, dtype=np.int64))
