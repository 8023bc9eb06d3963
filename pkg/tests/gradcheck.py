"""Shared gradient-check harness.

Backprop is compared against central finite differences of an
independent float64 re-evaluation of the same network function. The
float64 reference keeps the perturbed coordinate exact (no float32
round-trip), so the finite-difference oracle is accurate to O(h^2) and
the comparison isolates genuine backprop defects.

Finite differences are only valid away from the kinks introduced by
ReLU and max-pooling: if a preactivation sits within the perturbation's
reach of zero (or two pool cells nearly tie), the secant straddles a
non-differentiable point and measures nothing. `kink_margin` reports
the distance to the nearest kink; callers scan seeds until the margin
clears a threshold, which keeps the check deterministic and honest.
"""

import numpy as np

from fpsim.nn import Network, binary_cross_entropy

H = 1e-3
REL_TOL = 1e-4
MARGIN = 1e-2


def _param_segments(net: Network):
    """(layer, start, stop) for each parameterized layer, canonical order."""
    out = []
    pos = 0
    for layer in net.layers:
        if layer.has_params:
            n = layer.weights.size + layer.bias.size
            out.append((layer, pos, pos + n))
            pos += n
    return out


def _layer_params64(layer, p64, start, stop):
    cout = layer.bias.size
    seg = p64[start:stop].reshape(cout, -1)
    w = seg[:, :-1].reshape(layer.weights.shape)
    b = seg[:, -1]
    return w, b


def ref_loss(net: Network, p64: np.ndarray, x64: np.ndarray,
             y: np.ndarray) -> float:
    """Float64 forward + binary cross-entropy on exact f64 parameters."""
    segs = iter(_param_segments(net))
    a = x64
    for layer in net.layers:
        kind = layer.kind
        if kind == "dense":
            _, start, stop = _advance(segs, layer)
            w, b = _layer_params64(layer, p64, start, stop)
            a = a @ w.T + b
        elif kind == "conv2d":
            _, start, stop = _advance(segs, layer)
            w, b = _layer_params64(layer, p64, start, stop)
            a = _conv64(a, w, b, layer.pad)
        elif kind == "relu":
            a = np.maximum(a, 0.0)
        elif kind == "maxpool2d":
            a = _pool64(a, layer.k)
        elif kind == "globalavgpool":
            a = a.mean(axis=(2, 3))
        elif kind == "flatten":
            a = a.reshape(a.shape[0], -1)
        else:
            raise AssertionError(f"unhandled layer kind {kind}")
    return float(np.mean(np.logaddexp(0.0, a) - a * y))


def _advance(segs, layer):
    entry = next(segs)
    assert entry[0] is layer
    return entry


def _conv64(a, w, b, pad):
    bsz, cin, h, wd = a.shape
    cout, _, kh, kw = w.shape
    ho, wo = h + 2 * pad - kh + 1, wd + 2 * pad - kw + 1
    xp = np.zeros((bsz, cin, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad : pad + h, pad : pad + wd] = a
    y = np.empty((bsz, cout, ho, wo))
    for co in range(cout):
        acc = np.zeros((bsz, ho, wo))
        for ci in range(cin):
            for dh in range(kh):
                for dw in range(kw):
                    acc += xp[:, ci, dh : dh + ho, dw : dw + wo] * \
                        w[co, ci, dh, dw]
        y[:, co] = acc + b[co]
    return y


def _pool64(a, k):
    bsz, c, h, wd = a.shape
    ho, wo = h // k, wd // k
    a = a[:, :, : ho * k, : wo * k]
    win = a.reshape(bsz, c, ho, k, wo, k).transpose(0, 1, 2, 4, 3, 5)
    return win.reshape(bsz, c, ho, wo, k * k).max(axis=-1)


def kink_margin(net: Network, x64: np.ndarray) -> float:
    """Distance from the forward pass to the nearest ReLU/pool kink."""
    p64 = net.get_params().astype(np.float64)
    segs = iter(_param_segments(net))
    a = x64
    margin = np.inf
    for layer in net.layers:
        kind = layer.kind
        if kind == "dense":
            _, start, stop = _advance(segs, layer)
            w, b = _layer_params64(layer, p64, start, stop)
            a = a @ w.T + b
        elif kind == "conv2d":
            _, start, stop = _advance(segs, layer)
            w, b = _layer_params64(layer, p64, start, stop)
            a = _conv64(a, w, b, layer.pad)
        elif kind == "relu":
            margin = min(margin, float(np.min(np.abs(a))))
            a = np.maximum(a, 0.0)
        elif kind == "maxpool2d":
            k = layer.k
            bsz, c, h, wd = a.shape
            ho, wo = h // k, wd // k
            win = a[:, :, : ho * k, : wo * k].reshape(
                bsz, c, ho, k, wo, k
            ).transpose(0, 1, 2, 4, 3, 5).reshape(bsz, c, ho, wo, k * k)
            top2 = np.sort(win, axis=-1)[..., -2:]
            # Runner-up cells stuck at a ReLU zero cannot move; only a
            # positive runner-up can overtake the winner under a small
            # parameter perturbation (the ReLU margin covers the rest).
            movable = top2[..., 0] > 0
            if movable.any():
                gaps = (top2[..., 1] - top2[..., 0])[movable]
                margin = min(margin, float(gaps.min()))
            a = win.max(axis=-1)
        elif kind == "globalavgpool":
            a = a.mean(axis=(2, 3))
        elif kind == "flatten":
            a = a.reshape(a.shape[0], -1)
    return margin


def backprop_gradient(net: Network, x: np.ndarray,
                      y: np.ndarray) -> np.ndarray:
    logits = net.forward(x, cache=True)
    _, lgrad = binary_cross_entropy(logits, y)
    return net.backward(lgrad)


def fd_gradient(net: Network, x64: np.ndarray, y: np.ndarray) -> np.ndarray:
    base = net.get_params().astype(np.float64)
    out = np.empty(base.size)
    for i in range(base.size):
        p = base.copy()
        p[i] += H
        up = ref_loss(net, p, x64, y)
        p[i] = base[i] - H
        down = ref_loss(net, p, x64, y)
        out[i] = (up - down) / (2.0 * H)
    return out


def max_rel_error(net: Network, x: np.ndarray, y: np.ndarray) -> float:
    got = backprop_gradient(net, x, y).astype(np.float64)
    want = fd_gradient(net, x.astype(np.float64), y)
    rel = np.abs(got - want) / np.maximum(
        np.maximum(np.abs(got), np.abs(want)), 1e-6
    )
    return float(rel.max())


def sample_with_margin(net: Network, rng: np.random.Generator, batch: int,
                       num_out: int, margin: float = MARGIN, tries: int = 200):
    """First (x, y) draw whose forward pass clears the kink margin."""
    shape = (batch, *net.input_shape)
    for _ in range(tries):
        x = rng.uniform(-1.0, 1.0, size=shape).astype(np.float32)
        y = rng.integers(0, 2, size=(batch, num_out)).astype(np.float32)
        if kink_margin(net, x.astype(np.float64)) > margin:
            return x, y
    raise AssertionError(
        f"no kink-free sample found in {tries} draws; margin {margin}"
    )
