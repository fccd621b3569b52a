"""
Adam optimizer over DiffTensor parameters
"""

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, LEARNING_RATE
from .errors import UsageError
from .tensor import DiffTensor


@dataclass
class AdamState:
    """First/second moment buffers (one per parameter) and the step counter."""

    lr: float = LEARNING_RATE
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON
    step_count: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[DiffTensor], **kwargs) -> "AdamState":
        state = cls(**kwargs)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(state: AdamState, params: Sequence[DiffTensor],
              grads: Sequence[np.ndarray]) -> Tuple[Sequence[DiffTensor], AdamState]:
    """
    Apply one bias-corrected Adam update in place.

    Args:
        state (AdamState): Moment buffers; created lazily on the first step
        params (Sequence[DiffTensor]): Parameters, updated in place
        grads (Sequence[np.ndarray]): One gradient per parameter

    Returns:
        Tuple[Sequence[DiffTensor], AdamState]: The updated params and state
    """
    if len(params) != len(grads):
        raise UsageError(f"adam_step: {len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise UsageError(f"adam_step: state tracks {len(state.m)} parameters, got {len(params)}")
    for index, (param, grad) in enumerate(zip(params, grads)):
        if np.shape(grad) != param.shape or state.m[index].shape != param.shape:
            raise UsageError(f"adam_step: parameter {index} has shape {param.shape}, "
                             f"gradient has shape {np.shape(grad)}")

    state.step_count += 1
    t = state.step_count
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for index, (param, grad) in enumerate(zip(params, grads)):
        m = state.m[index]
        v = state.v[index]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(grad)
        m_hat = m / correction1
        v_hat = v / correction2
        param.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state
