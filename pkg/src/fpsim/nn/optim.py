"""Adam with bias correction over flat parameter vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """Optimizer state for one flat parameter vector.

    Moments are stored float32 alongside the parameters; the update itself
    is computed in float64 and cast once.
    """

    size: int
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: np.ndarray = field(init=False)
    second_moment: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("size must be >= 1")
        if not 0 < self.beta1 < 1 or not 0 < self.beta2 < 1:
            raise ValueError("betas must lie in (0, 1)")
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ValueError("learning_rate and epsilon must be positive")
        self.first_moment = np.zeros(self.size, np.float32)
        self.second_moment = np.zeros(self.size, np.float32)


def adam_step(
    params: np.ndarray, grad: np.ndarray, state: AdamState
) -> np.ndarray:
    """One Adam update; returns new params and advances state in place."""
    if params.shape != grad.shape or params.shape != (state.size,):
        raise ValueError(
            f"length mismatch: params {params.shape}, grad {grad.shape}, "
            f"state {state.size}"
        )
    g = grad.astype(np.float64)
    m = state.first_moment.astype(np.float64)
    v = state.second_moment.astype(np.float64)
    state.step_count += 1
    t = state.step_count
    m = state.beta1 * m + (1.0 - state.beta1) * g
    v = state.beta2 * v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new = params.astype(np.float64) - state.learning_rate * m_hat / (
        np.sqrt(v_hat) + state.epsilon
    )
    state.first_moment = m.astype(np.float32)
    state.second_moment = v.astype(np.float32)
    return new.astype(np.float32)
