"""Dense float64 math primitives: matmul, softmax, cross-entropy, Adam,
and a central-finite-difference gradient oracle.

All tensors are numpy float64 arrays (matrices are 2-D row-major, vectors
1-D). Every operation is a pure function; nothing here mutates its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import DimensionError, OracleError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

PROB_FLOOR = 1e-12

# Denominator floor for relative errors, so near-zero gradients do not blow up.
REL_ERR_FLOOR = 1e-8


def as_f64(values, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce to a float64 array, optionally checking a 2-D shape."""
    arr = np.asarray(values, dtype=np.float64)
    if rows is not None and cols is not None and arr.shape != (rows, cols):
        raise DimensionError(f"expected shape ({rows}, {cols}), got {arr.shape}")
    return arr


def require_finite(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def softmax_row(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax of a single vector (max-subtraction)."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0:
        raise ValueError("softmax_row: empty input")
    require_finite("softmax_row input", logits)
    shifted = logits - logits.max()
    exps = np.exp(shifted)
    return exps / exps.sum()


def cross_entropy(probabilities: np.ndarray, target_index: int) -> float:
    """-log p[target], with p floored at 1e-12 so the result stays finite."""
    probs = np.asarray(probabilities, dtype=np.float64)
    if probs.ndim != 1:
        raise ValueError(f"cross_entropy expects a vector, got shape {probs.shape}")
    if not 0 <= target_index < probs.size:
        raise ValueError(
            f"cross_entropy target index {target_index} out of range for size {probs.size}"
        )
    return float(-np.log(max(probs[target_index], PROB_FLOOR)))


@dataclass
class AdamState:
    """Per-parameter Adam accumulators."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros_like(cls, param: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(param), np.zeros_like(param), 0)


def adam_step(
    param: np.ndarray, grad: np.ndarray, state: AdamState, lr: float
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update. Returns new (param, state); inputs untouched."""
    if param.shape != grad.shape:
        raise DimensionError(f"adam_step shape mismatch: param {param.shape}, grad {grad.shape}")
    if state.first_moment.shape != param.shape or state.second_moment.shape != param.shape:
        raise DimensionError(
            f"adam_step state shape mismatch: param {param.shape}, "
            f"state {state.first_moment.shape}"
        )
    if lr <= 0:
        raise ValueError(f"adam_step learning rate must be positive, got {lr}")
    t = state.step_count + 1
    m = ADAM_BETA1 * state.first_moment + (1 - ADAM_BETA1) * grad
    v = ADAM_BETA2 * state.second_moment + (1 - ADAM_BETA2) * (grad * grad)
    m_hat = m / (1 - ADAM_BETA1**t)
    v_hat = v / (1 - ADAM_BETA2**t)
    new_param = param - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return new_param, AdamState(m, v, t)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_ERR_FLOOR)


def check_gradients(
    loss_fn: Callable[[dict[str, np.ndarray]], float],
    params: Mapping[str, np.ndarray],
    analytic: Mapping[str, np.ndarray],
    epsilon: float = 1e-5,
) -> dict[str, float]:
    """Compare analytic gradients against central finite differences.

    loss_fn takes the full named-parameter dict and returns a scalar; it must
    be deterministic (two baseline evaluations are compared and must agree).
    Returns, per parameter name, the max relative error over all entries:
    |a - n| / max(|a|, |n|, 1e-8).
    """
    if not 1e-6 <= epsilon <= 1e-4:
        raise ValueError(f"check_gradients epsilon must be in [1e-6, 1e-4], got {epsilon}")
    if set(params.keys()) != set(analytic.keys()):
        raise ValueError("check_gradients: params and analytic gradients name different tensors")

    work = {name: np.array(p, dtype=np.float64) for name, p in params.items()}
    base1 = loss_fn(work)
    base2 = loss_fn(work)
    if base1 != base2:
        raise OracleError(
            f"loss function is not deterministic: baseline evaluations {base1!r} != {base2!r}"
        )

    worst: dict[str, float] = {}
    for name, param in work.items():
        grad = np.asarray(analytic[name], dtype=np.float64)
        if grad.shape != param.shape:
            raise DimensionError(
                f"analytic gradient for {name!r} has shape {grad.shape}, "
                f"parameter has {param.shape}"
            )
        max_err = 0.0
        flat = param.reshape(-1)
        grad_flat = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + epsilon
            plus = loss_fn(work)
            flat[i] = original - epsilon
            minus = loss_fn(work)
            flat[i] = original
            numeric = (plus - minus) / (2 * epsilon)
            max_err = max(max_err, relative_error(grad_flat[i], numeric))
        worst[name] = max_err
    return worst
