"""Mini-batch Adam training loop with deterministic resume.

All randomness (epoch shuffles, per-example dropout masks) is derived from
the run seed plus loop coordinates, never from carried RNG state, so a run
resumed from a checkpoint retraces the interrupted run exactly. Checkpoints
written here carry the optimizer moments and epoch counter as extra tensors
alongside the model.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, TrainingDivergedError
from .model import ModelParams, backward, forward, loss, save_checkpoint
from .numerics import AdamState, adam_step
from .text import TokenizedCaption

DEFAULT_LEARNING_RATE = 2e-4
DEFAULT_BATCH_SIZE = 64
DEFAULT_EPOCHS = 50
DEFAULT_DROPOUT = 0.5
DEFAULT_HIDDEN = 512
DEFAULT_CLIP_NORM = 5.0


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = DEFAULT_BATCH_SIZE
    epochs: int = DEFAULT_EPOCHS
    dropout: float = DEFAULT_DROPOUT
    hidden: int = DEFAULT_HIDDEN
    clip_norm: float = DEFAULT_CLIP_NORM
    seed: int = 0

    def validate(self) -> "TrainingConfig":
        if self.learning_rate < 0:
            raise ValueError(f"learning rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.hidden < 1:
            raise ValueError(f"hidden size must be >= 1, got {self.hidden}")
        if self.clip_norm <= 0:
            raise ValueError(f"clip norm must be positive, got {self.clip_norm}")
        return self


@dataclass
class TrainingExample:
    video_id: str
    pooled: np.ndarray  # feature summary vector, model input
    caption: TokenizedCaption

    @property
    def target_tokens(self) -> int:
        # Non-PAD prediction targets: the content tokens plus the end marker.
        return self.caption.content_length + 1


@dataclass
class TrainResult:
    params: ModelParams
    epoch_losses: list[float] = field(default_factory=list)


def derive_seed(*parts: int) -> int:
    """Mix loop coordinates into one RNG seed, stable across runs."""
    h = 0
    for p in parts:
        h = (h * 1_000_003 + int(p) + 1) % (2**63)
    return h


def make_batches(count: int, batch_size: int, seed: int) -> list[list[int]]:
    """Seeded shuffle of range(count) chunked into batches; the final short
    batch is kept."""
    if count < 1:
        raise ValueError("cannot batch an empty dataset")
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    order = np.random.default_rng(seed).permutation(count)
    return [order[i : i + batch_size].tolist() for i in range(0, count, batch_size)]


def clip_global_norm(
    grads: dict[str, np.ndarray], max_norm: float
) -> tuple[dict[str, np.ndarray], float]:
    """Scale the whole gradient set down if its global L2 norm exceeds max_norm."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}, norm


def _batch_gradients(
    params: ModelParams,
    examples: Sequence[TrainingExample],
    indices: Sequence[int],
    config: TrainingConfig,
    epoch: int,
    batch_idx: int,
) -> tuple[dict[str, np.ndarray], float, int]:
    """Token-weighted mean gradient and loss over one batch."""
    grads: dict[str, np.ndarray] | None = None
    loss_sum = 0.0
    token_sum = 0
    for idx in indices:
        ex = examples[idx]
        mask_seed = derive_seed(config.seed, epoch, batch_idx, idx)
        trace, logits = forward(
            params, ex.pooled, ex.caption, config.dropout, mode="train", seed=mask_seed
        )
        ex_loss = loss(logits, ex.caption)
        ex_grads = backward(trace, params, ex.caption)
        weight = ex.target_tokens
        loss_sum += ex_loss * weight
        token_sum += weight
        if grads is None:
            grads = {name: g * weight for name, g in ex_grads.items()}
        else:
            for name, g in ex_grads.items():
                grads[name] += g * weight
    assert grads is not None
    for name in grads:
        grads[name] /= token_sum
    return grads, loss_sum / token_sum, token_sum


def _norm_table(tensors: dict[str, np.ndarray]) -> str:
    """Per-tensor L2 norms, for divergence diagnostics."""
    return ", ".join(
        f"{name}={float(np.linalg.norm(value)):.3e}" for name, value in sorted(tensors.items())
    )


def _checkpoint_extras(
    adam: dict[str, AdamState], completed_epochs: int
) -> dict[str, np.ndarray]:
    extras: dict[str, np.ndarray] = {}
    step = 0
    for name, state in adam.items():
        extras[f"adam.{name}.m"] = state.first_moment
        extras[f"adam.{name}.v"] = state.second_moment
        step = state.step_count
    extras["adam.step"] = np.array([[float(step)]])
    extras["train.epoch"] = np.array([[float(completed_epochs)]])
    return extras


def adam_states_from_extras(
    params: ModelParams, extras: dict[str, np.ndarray]
) -> tuple[dict[str, AdamState], int]:
    """Rebuild optimizer state from checkpoint extras; returns (states, next epoch).

    A checkpoint without optimizer tensors yields fresh zeroed state.
    """
    tensors = params.to_dict()
    step = int(extras["adam.step"][0, 0]) if "adam.step" in extras else 0
    states: dict[str, AdamState] = {}
    for name, param in tensors.items():
        m_key, v_key = f"adam.{name}.m", f"adam.{name}.v"
        if m_key in extras and v_key in extras:
            m = extras[m_key].reshape(param.shape)
            v = extras[v_key].reshape(param.shape)
            states[name] = AdamState(first_moment=m, second_moment=v, step_count=step)
        else:
            states[name] = AdamState.zeros_like(param)
    epoch = int(extras["train.epoch"][0, 0]) if "train.epoch" in extras else 0
    return states, epoch


def train(
    params: ModelParams,
    examples: Sequence[TrainingExample],
    config: TrainingConfig,
    log_path: str | Path | None = None,
    checkpoint_path: str | Path | None = None,
    start_epoch: int = 0,
    adam: dict[str, AdamState] | None = None,
    on_epoch: Callable[[int, float], None] | None = None,
) -> TrainResult:
    """Run epochs [start_epoch, config.epochs); returns final params and the
    per-epoch token-weighted mean losses.

    Appends one JSON line per epoch to log_path and rewrites checkpoint_path
    (model + optimizer extras) after every epoch.
    """
    config.validate()
    if not examples:
        raise ValueError("training needs at least one example")
    if params.dims.hidden != config.hidden:
        raise DimensionError(
            f"config hidden size {config.hidden} does not match "
            f"model hidden size {params.dims.hidden}"
        )
    pooled_dim = params.dims.pooled_dim
    for ex in examples:
        vec = np.asarray(ex.pooled)
        if vec.shape != (pooled_dim,):
            raise DimensionError(
                f"example {ex.video_id!r} pooled vector has shape {vec.shape}, "
                f"model expects ({pooled_dim},)"
            )
    if not 0 <= start_epoch <= config.epochs:
        raise ValueError(f"start epoch {start_epoch} outside [0, {config.epochs}]")

    tensors = dict(params.to_dict())
    if adam is None:
        adam = {name: AdamState.zeros_like(t) for name, t in tensors.items()}

    log_file = None
    if log_path is not None:
        log_file = open(log_path, "a" if start_epoch > 0 else "w", encoding="utf-8")

    losses: list[float] = []
    try:
        for epoch in range(start_epoch, config.epochs):
            epoch_start = time.perf_counter()
            batches = make_batches(len(examples), config.batch_size, derive_seed(config.seed, epoch))
            epoch_loss_sum = 0.0
            epoch_tokens = 0
            for batch_idx, indices in enumerate(batches):
                try:
                    grads, batch_loss, batch_tokens = _batch_gradients(
                        params, examples, indices, config, epoch, batch_idx
                    )
                except ValueError as exc:
                    # Inputs were validated up front, so a ValueError inside the
                    # batch means non-finite activations: the run has diverged.
                    raise TrainingDivergedError(
                        f"aborted at epoch {epoch}, batch {batch_idx}: {exc}; "
                        f"parameter norms: {_norm_table(tensors)}"
                    ) from exc
                if not np.isfinite(batch_loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, batch {batch_idx}; "
                        f"parameter norms: {_norm_table(tensors)}"
                    )
                grads, grad_norm = clip_global_norm(grads, config.clip_norm)
                if not np.isfinite(grad_norm):
                    raise TrainingDivergedError(
                        f"non-finite gradient norm at epoch {epoch}, batch {batch_idx}; "
                        f"parameter norms: {_norm_table(tensors)}"
                    )
                if config.learning_rate > 0.0:
                    for name in tensors:
                        tensors[name], adam[name] = adam_step(
                            tensors[name], grads[name], adam[name], config.learning_rate
                        )
                    params = ModelParams.from_dict(tensors, params.dims)
                epoch_loss_sum += batch_loss * batch_tokens
                epoch_tokens += batch_tokens
            epoch_loss = epoch_loss_sum / epoch_tokens
            losses.append(epoch_loss)
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, params, _checkpoint_extras(adam, epoch + 1))
            if log_file is not None:
                record = {
                    "epoch": epoch,
                    "mean_loss": epoch_loss,
                    "wall_seconds": time.perf_counter() - epoch_start,
                    "checkpoint_path": (
                        str(checkpoint_path) if checkpoint_path is not None else None
                    ),
                }
                log_file.write(json.dumps(record) + "\n")
                log_file.flush()
            if on_epoch is not None:
                on_epoch(epoch, epoch_loss)
    finally:
        if log_file is not None:
            log_file.close()
    return TrainResult(params=params, epoch_losses=losses)
