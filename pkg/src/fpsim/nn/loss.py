"""Binary cross-entropy over logits for multi-label targets."""

from __future__ import annotations

import numpy as np


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument only, so no overflow either side
    pos = z >= 0
    ez = np.exp(np.where(pos, -z, z))
    return np.where(pos, 1.0 / (1.0 + ez), ez / (1.0 + ez))


def binary_cross_entropy(
    logits: np.ndarray, targets: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean BCE over all (sample, class) cells, plus the logit gradient.

    loss = mean( log(1 + e^z) - z*y ) computed with logaddexp, which equals
    -[y log sigma(z) + (1-y) log(1 - sigma(z))] without the catastrophic
    cancellation of the naive form. Gradient: (sigma(z) - y) / N with
    N = number of cells, matching the mean reduction.
    """
    if logits.shape != targets.shape:
        raise ValueError(
            f"logits shape {logits.shape} != targets shape {targets.shape}"
        )
    t = np.asarray(targets)
    if not np.isin(t, (0, 1)).all():
        raise ValueError("targets must be binary (0 or 1)")
    z = np.asarray(logits, np.float64)
    y = t.astype(np.float64)
    cells = np.logaddexp(0.0, z) - z * y
    loss = float(cells.mean())
    grad = (_sigmoid(z) - y) / z.size
    return loss, grad.astype(np.float32)
