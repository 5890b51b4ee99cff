"""Dual-stream caption decoder: forward, hand-written backward, checkpoints.

Two LSTM streams consume the same embedded caption prefix. Stream one is
seeded with the projected visual summary as its initial hidden state; stream
two reads the visual summary concatenated onto its input at every step. The
streams' outputs are fused by element-wise product, projected to vocabulary
logits, and softmaxed. Backpropagation through time is written out by hand;
`gradient_check` verifies it against central finite differences.

Checkpoint format (little-endian):
    magic    4 bytes  b"DSCK"
    version  u32      1
    dims     5 x u32  vocab_size, embed_dim, hidden, pooled_dim, tensor_count
    tensors  tensor_count records, each:
             u16 name length, UTF-8 name, u32 rows, u32 cols,
             rows*cols float64 values (row-major)
Model tensors come first in PARAM_ORDER; 1-D tensors are written with
rows=1. Extra tensors (optimizer state, epoch counters) follow in sorted
name order and are ignored by consumers that only need the model.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DimensionError, FormatError, StateError
from .numerics import check_gradients, cross_entropy, softmax_row
from .text import CAPTION_SLOTS, PAD_ID, TokenizedCaption

CHECKPOINT_MAGIC = b"DSCK"
CHECKPOINT_VERSION = 1

INIT_SCALE = 0.08
FORGET_BIAS = 1.0

# Flat named-tensor order; also the serialization order of model tensors.
PARAM_ORDER = (
    "embedding",
    "embedding_bias",
    "lstm1.input_weights",
    "lstm1.recurrent_weights",
    "lstm1.gate_bias",
    "lstm2.input_weights",
    "lstm2.recurrent_weights",
    "lstm2.gate_bias",
    "visual_projection",
    "visual_bias",
    "output_projection",
    "output_bias",
)


@dataclass(frozen=True)
class ModelDims:
    vocab_size: int
    embed_dim: int
    hidden: int = 512
    pooled_dim: int = 1

    def validate(self) -> "ModelDims":
        for name, value in vars(self).items():
            if value < 1:
                raise ValueError(f"model dim {name} must be positive, got {value}")
        return self


@dataclass
class LSTMCellParams:
    """One LSTM cell; gate order along the 4H axis is [input, forget, candidate, output]."""

    input_weights: np.ndarray  # (4H, input_dim)
    recurrent_weights: np.ndarray  # (4H, H)
    gate_bias: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.recurrent_weights.shape[1]

    @property
    def input_dim(self) -> int:
        return self.input_weights.shape[1]


@dataclass
class ModelParams:
    embedding: np.ndarray  # (embed_dim, vocab_size)
    embedding_bias: np.ndarray  # (embed_dim,)
    lstm1: LSTMCellParams  # input_dim = embed_dim
    lstm2: LSTMCellParams  # input_dim = embed_dim + hidden
    visual_projection: np.ndarray  # (hidden, pooled_dim)
    visual_bias: np.ndarray  # (hidden,)
    output_projection: np.ndarray  # (vocab_size, hidden)
    output_bias: np.ndarray  # (vocab_size,)
    dims: ModelDims

    def to_dict(self) -> dict[str, np.ndarray]:
        """Live references to every tensor, keyed by PARAM_ORDER names."""
        return {
            "embedding": self.embedding,
            "embedding_bias": self.embedding_bias,
            "lstm1.input_weights": self.lstm1.input_weights,
            "lstm1.recurrent_weights": self.lstm1.recurrent_weights,
            "lstm1.gate_bias": self.lstm1.gate_bias,
            "lstm2.input_weights": self.lstm2.input_weights,
            "lstm2.recurrent_weights": self.lstm2.recurrent_weights,
            "lstm2.gate_bias": self.lstm2.gate_bias,
            "visual_projection": self.visual_projection,
            "visual_bias": self.visual_bias,
            "output_projection": self.output_projection,
            "output_bias": self.output_bias,
        }

    @classmethod
    def from_dict(cls, tensors: Mapping[str, np.ndarray], dims: ModelDims) -> "ModelParams":
        expected = param_shapes(dims)
        arrays = {}
        for name, shape in expected.items():
            if name not in tensors:
                raise ValueError(f"missing parameter tensor {name!r}")
            arr = np.asarray(tensors[name], dtype=np.float64)
            if arr.shape != shape:
                raise DimensionError(f"tensor {name!r} has shape {arr.shape}, expected {shape}")
            arrays[name] = arr
        return cls(
            embedding=arrays["embedding"],
            embedding_bias=arrays["embedding_bias"],
            lstm1=LSTMCellParams(
                arrays["lstm1.input_weights"],
                arrays["lstm1.recurrent_weights"],
                arrays["lstm1.gate_bias"],
            ),
            lstm2=LSTMCellParams(
                arrays["lstm2.input_weights"],
                arrays["lstm2.recurrent_weights"],
                arrays["lstm2.gate_bias"],
            ),
            visual_projection=arrays["visual_projection"],
            visual_bias=arrays["visual_bias"],
            output_projection=arrays["output_projection"],
            output_bias=arrays["output_bias"],
            dims=dims,
        )


def param_shapes(dims: ModelDims) -> dict[str, tuple[int, ...]]:
    v, e, h, p = dims.vocab_size, dims.embed_dim, dims.hidden, dims.pooled_dim
    return {
        "embedding": (e, v),
        "embedding_bias": (e,),
        "lstm1.input_weights": (4 * h, e),
        "lstm1.recurrent_weights": (4 * h, h),
        "lstm1.gate_bias": (4 * h,),
        "lstm2.input_weights": (4 * h, e + h),
        "lstm2.recurrent_weights": (4 * h, h),
        "lstm2.gate_bias": (4 * h,),
        "visual_projection": (h, p),
        "visual_bias": (h,),
        "output_projection": (v, h),
        "output_bias": (v,),
    }


def init_params(dims: ModelDims, seed: int) -> ModelParams:
    """Seeded uniform [-0.08, 0.08] weights; zero biases except forget gate = 1."""
    dims.validate()
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(dims).items():
        if name.endswith("bias"):
            tensors[name] = np.zeros(shape, dtype=np.float64)
        else:
            tensors[name] = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
    h = dims.hidden
    for cell in ("lstm1", "lstm2"):
        tensors[f"{cell}.gate_bias"][h : 2 * h] = FORGET_BIAS
    return ModelParams.from_dict(tensors, dims)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign to avoid exp overflow on large negative inputs.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _lstm_step_cached(
    cell: LSTMCellParams, x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray
):
    """One cell step returning (h, c, gates_post, tanh_c) for the trace."""
    h = cell.hidden
    pre = cell.input_weights @ x + cell.recurrent_weights @ h_prev + cell.gate_bias
    gates = np.empty_like(pre)
    gates[: h] = _sigmoid(pre[: h])  # input gate
    gates[h : 2 * h] = _sigmoid(pre[h : 2 * h])  # forget gate
    gates[2 * h : 3 * h] = np.tanh(pre[2 * h : 3 * h])  # candidate
    gates[3 * h :] = _sigmoid(pre[3 * h :])  # output gate
    c = gates[h : 2 * h] * c_prev + gates[: h] * gates[2 * h : 3 * h]
    tanh_c = np.tanh(c)
    h_new = gates[3 * h :] * tanh_c
    return h_new, c, gates, tanh_c


def lstm_step(
    cell: LSTMCellParams, x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Standard LSTM cell update returning the new (hidden, cell) state."""
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    h = cell.hidden
    if x.shape != (cell.input_dim,):
        raise DimensionError(f"cell input has shape {x.shape}, expected ({cell.input_dim},)")
    if h_prev.shape != (h,) or c_prev.shape != (h,):
        raise DimensionError(
            f"cell state shapes {h_prev.shape}/{c_prev.shape} do not match hidden size {h}"
        )
    h_new, c_new, _, _ = _lstm_step_cached(cell, x, h_prev, c_prev)
    return h_new, c_new


@dataclass
class ForwardTrace:
    """Cached activations from one forward pass, enough to replay or backprop."""

    dims: ModelDims
    tokens: np.ndarray  # (T,) int
    pooled: np.ndarray  # (pooled_dim,)
    visual: np.ndarray  # (hidden,) projected conditioning vector
    embeds: np.ndarray  # (T, embed_dim)
    s1_gates: np.ndarray  # (T, 4H) post-activation gates, stream one
    s1_c: np.ndarray  # (T, H)
    s1_h: np.ndarray  # (T, H)
    s1_tanh_c: np.ndarray  # (T, H)
    s2_gates: np.ndarray
    s2_c: np.ndarray
    s2_h: np.ndarray
    s2_tanh_c: np.ndarray
    drop1: np.ndarray  # (T, H) inverted-dropout masks (0 or 1/keep), ones in eval
    drop2: np.ndarray
    fused: np.ndarray  # (T, H)
    logits: np.ndarray  # (T, vocab)
    probs: np.ndarray  # (T, vocab)
    dropout_rate: float
    mode: str
    seed: int

    def __len__(self) -> int:
        return self.tokens.shape[0]


def project_visual(params: ModelParams, pooled: np.ndarray) -> np.ndarray:
    pooled = np.asarray(pooled, dtype=np.float64)
    if pooled.shape != (params.dims.pooled_dim,):
        raise DimensionError(
            f"pooled summary has shape {pooled.shape}, expected ({params.dims.pooled_dim},)"
        )
    return params.visual_projection @ pooled + params.visual_bias


def forward(
    params: ModelParams,
    pooled: np.ndarray,
    inputs: TokenizedCaption,
    dropout_rate: float = 0.0,
    mode: str = "eval",
    seed: int = 0,
) -> tuple[ForwardTrace, np.ndarray]:
    """Teacher-forced pass over the caption prefix.

    Step t consumes inputs.ids[t]; the pass runs content_length + 1 steps,
    through the step whose target is the end marker. Inverted dropout is
    applied to each stream's output before the product in train mode.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"forward mode must be 'train' or 'eval', got {mode!r}")
    if not 0.0 <= dropout_rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {dropout_rate}")
    dims = params.dims
    hid, emb = dims.hidden, dims.embed_dim
    visual = project_visual(params, pooled)
    steps = inputs.content_length + 1
    if steps > CAPTION_SLOTS - 1:
        raise DimensionError(f"caption yields {steps} steps, max is {CAPTION_SLOTS - 1}")

    tokens = np.asarray(inputs.ids[:steps], dtype=np.int64)
    if tokens.min() < 0 or tokens.max() >= dims.vocab_size:
        raise DimensionError(f"token id outside vocabulary of size {dims.vocab_size}")

    rng = np.random.default_rng(seed)
    if mode == "train":
        keep = 1.0 - dropout_rate
        drop1 = (rng.random((steps, hid)) < keep) / keep
        drop2 = (rng.random((steps, hid)) < keep) / keep
    else:
        drop1 = np.ones((steps, hid))
        drop2 = np.ones((steps, hid))

    embeds = np.empty((steps, emb))
    s1_gates = np.empty((steps, 4 * hid))
    s1_c = np.empty((steps, hid))
    s1_h = np.empty((steps, hid))
    s1_tanh_c = np.empty((steps, hid))
    s2_gates = np.empty((steps, 4 * hid))
    s2_c = np.empty((steps, hid))
    s2_h = np.empty((steps, hid))
    s2_tanh_c = np.empty((steps, hid))
    fused = np.empty((steps, hid))
    logits = np.empty((steps, dims.vocab_size))
    probs = np.empty((steps, dims.vocab_size))

    h1, c1 = visual, np.zeros(hid)
    h2, c2 = np.zeros(hid), np.zeros(hid)
    for t in range(steps):
        y = params.embedding[:, tokens[t]] + params.embedding_bias
        embeds[t] = y
        h1, c1, s1_gates[t], s1_tanh_c[t] = _lstm_step_cached(params.lstm1, y, h1, c1)
        s1_h[t], s1_c[t] = h1, c1
        x2 = np.concatenate([y, visual])
        h2, c2, s2_gates[t], s2_tanh_c[t] = _lstm_step_cached(params.lstm2, x2, h2, c2)
        s2_h[t], s2_c[t] = h2, c2
        fused[t] = (h1 * drop1[t]) * (h2 * drop2[t])
        logits[t] = params.output_projection @ fused[t] + params.output_bias
        probs[t] = softmax_row(logits[t])

    trace = ForwardTrace(
        dims=dims, tokens=tokens, pooled=np.asarray(pooled, dtype=np.float64), visual=visual,
        embeds=embeds,
        s1_gates=s1_gates, s1_c=s1_c, s1_h=s1_h, s1_tanh_c=s1_tanh_c,
        s2_gates=s2_gates, s2_c=s2_c, s2_h=s2_h, s2_tanh_c=s2_tanh_c,
        drop1=drop1, drop2=drop2, fused=fused, logits=logits, probs=probs,
        dropout_rate=dropout_rate, mode=mode, seed=seed,
    )
    return trace, logits


def replay_forward(trace: ForwardTrace, params: ModelParams) -> np.ndarray:
    """Re-run the forward pass from a trace's inputs and dropout masks."""
    dims = params.dims
    hid = dims.hidden
    visual = project_visual(params, trace.pooled)
    h1, c1 = visual, np.zeros(hid)
    h2, c2 = np.zeros(hid), np.zeros(hid)
    logits = np.empty_like(trace.logits)
    for t in range(len(trace)):
        y = params.embedding[:, trace.tokens[t]] + params.embedding_bias
        h1, c1, _, _ = _lstm_step_cached(params.lstm1, y, h1, c1)
        h2, c2, _, _ = _lstm_step_cached(params.lstm2, np.concatenate([y, visual]), h2, c2)
        fused = (h1 * trace.drop1[t]) * (h2 * trace.drop2[t])
        logits[t] = params.output_projection @ fused + params.output_bias
    return logits


def _counted_positions(n_steps: int, targets: TokenizedCaption) -> list[int]:
    return [t for t in range(n_steps) if targets.ids[t + 1] != PAD_ID]


def loss(logits: np.ndarray, targets: TokenizedCaption) -> float:
    """Mean next-token cross-entropy over non-PAD target positions."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise DimensionError(f"loss expects (steps, vocab) logits, got shape {logits.shape}")
    if logits.shape[0] > CAPTION_SLOTS - 1:
        raise DimensionError(f"{logits.shape[0]} steps exceeds the {CAPTION_SLOTS}-slot layout")
    counted = _counted_positions(logits.shape[0], targets)
    if not counted:
        raise ValueError("loss: no non-PAD target positions")
    total = 0.0
    for t in counted:
        total += cross_entropy(softmax_row(logits[t]), targets.ids[t + 1])
    return total / len(counted)


def _lstm_step_backward(
    cell: LSTMCellParams,
    x: np.ndarray,
    h_prev: np.ndarray,
    c_prev: np.ndarray,
    gates: np.ndarray,
    tanh_c: np.ndarray,
    dh: np.ndarray,
    dc_in: np.ndarray,
    grads: dict[str, np.ndarray],
    prefix: str,
):
    """Backprop one cell step; returns (dx, dh_prev, dc_prev)."""
    hid = cell.hidden
    i, f, g, o = gates[:hid], gates[hid : 2 * hid], gates[2 * hid : 3 * hid], gates[3 * hid :]
    dc = dc_in + dh * o * (1.0 - tanh_c * tanh_c)
    do = dh * tanh_c
    di = dc * g
    dg = dc * i
    df = dc * c_prev
    dc_prev = dc * f
    dpre = np.concatenate([
        di * i * (1.0 - i),
        df * f * (1.0 - f),
        dg * (1.0 - g * g),
        do * o * (1.0 - o),
    ])
    grads[f"{prefix}.input_weights"] += np.outer(dpre, x)
    grads[f"{prefix}.recurrent_weights"] += np.outer(dpre, h_prev)
    grads[f"{prefix}.gate_bias"] += dpre
    dx = cell.input_weights.T @ dpre
    dh_prev = cell.recurrent_weights.T @ dpre
    return dx, dh_prev, dc_prev


def backward(
    trace: ForwardTrace, params: ModelParams, targets: TokenizedCaption
) -> dict[str, np.ndarray]:
    """Analytic gradients of the mean masked loss w.r.t. every parameter.

    Covers both uses of the embedded input (each stream), the product fusion,
    the visual conditioning vector at stream one's initial state and in stream
    two's per-step input, and the pooled-to-hidden projection behind it.
    """
    if trace.dims != params.dims:
        raise StateError(
            f"trace was produced for dims {trace.dims}, parameters have {params.dims}"
        )
    dims = params.dims
    hid, emb = dims.hidden, dims.embed_dim
    steps = len(trace)
    counted = _counted_positions(steps, targets)
    if not counted:
        raise ValueError("backward: no non-PAD target positions")
    scale = 1.0 / len(counted)
    counted_set = set(counted)

    grads = {name: np.zeros(shape) for name, shape in param_shapes(dims).items()}
    dh1 = np.zeros(hid)
    dc1 = np.zeros(hid)
    dh2 = np.zeros(hid)
    dc2 = np.zeros(hid)
    dvisual = np.zeros(hid)

    for t in reversed(range(steps)):
        if t in counted_set:
            dlogits = trace.probs[t] * scale
            dlogits[targets.ids[t + 1]] -= scale
            grads["output_projection"] += np.outer(dlogits, trace.fused[t])
            grads["output_bias"] += dlogits
            dfused = params.output_projection.T @ dlogits
            z1d = trace.s1_h[t] * trace.drop1[t]
            z2d = trace.s2_h[t] * trace.drop2[t]
            dh1 += dfused * z2d * trace.drop1[t]
            dh2 += dfused * z1d * trace.drop2[t]

        h1_prev = trace.s1_h[t - 1] if t > 0 else trace.visual
        c1_prev = trace.s1_c[t - 1] if t > 0 else np.zeros(hid)
        dy1, dh1, dc1 = _lstm_step_backward(
            params.lstm1, trace.embeds[t], h1_prev, c1_prev,
            trace.s1_gates[t], trace.s1_tanh_c[t], dh1, dc1, grads, "lstm1",
        )

        h2_prev = trace.s2_h[t - 1] if t > 0 else np.zeros(hid)
        c2_prev = trace.s2_c[t - 1] if t > 0 else np.zeros(hid)
        x2 = np.concatenate([trace.embeds[t], trace.visual])
        dx2, dh2, dc2 = _lstm_step_backward(
            params.lstm2, x2, h2_prev, c2_prev,
            trace.s2_gates[t], trace.s2_tanh_c[t], dh2, dc2, grads, "lstm2",
        )

        dy = dy1 + dx2[:emb]
        dvisual += dx2[emb:]
        grads["embedding"][:, trace.tokens[t]] += dy
        grads["embedding_bias"] += dy

    # Stream one's initial hidden state is the conditioning vector itself.
    dvisual += dh1
    grads["visual_projection"] += np.outer(dvisual, trace.pooled)
    grads["visual_bias"] += dvisual
    return grads


# Central differences resolve a derivative only down to the rounding jitter
# of the loss (~1e-12 here), so a comparison point is usable only if no true
# gradient entry falls inside (0, _MIN_CHECKABLE_GRAD): such entries would be
# all noise against the 1e-8 relative-error floor. Exact zeros are fine (both
# perturbed losses are bitwise equal, the difference is exactly zero).
_MIN_CHECKABLE_GRAD = 1e-6
_CHECK_DRAWS = 64


def _draw_check_data(dims: ModelDims, seed: int, steps: int):
    """Random params/pooled/caption at a point where every nonzero gradient
    entry is large enough for finite differences to resolve.

    The training init's tiny weights leave activations (and most gradients)
    near the noise floor, so the check point is drawn wider, with O(1)
    activations. Candidate points are redrawn until no analytic entry sits
    in the unresolvable band; the selection only conditions the comparison
    point, it cannot hide a wrong gradient at the point finally checked.
    """
    best = None
    best_floor = -1.0
    for attempt in range(_CHECK_DRAWS):
        rng = np.random.default_rng([seed, attempt])
        tensors = {
            name: rng.uniform(-0.5, 0.5, size=shape)
            for name, shape in param_shapes(dims).items()
        }
        params = ModelParams.from_dict(tensors, dims)
        pooled = rng.standard_normal(dims.pooled_dim)
        content = rng.integers(4, dims.vocab_size, size=steps - 1).tolist()
        caption = TokenizedCaption(
            ids=[1] + content + [2] + [0] * (CAPTION_SLOTS - steps - 1),
            content_length=steps - 1,
        ).validate()
        trace, _ = forward(params, pooled, caption)
        analytic = backward(trace, params, caption)
        magnitudes = np.concatenate([np.abs(g).reshape(-1) for g in analytic.values()])
        nonzero = magnitudes[magnitudes > 0]
        floor = float(nonzero.min()) if nonzero.size else np.inf
        if floor >= _MIN_CHECKABLE_GRAD:
            return params, pooled, caption
        if floor > best_floor:
            best_floor = floor
            best = (params, pooled, caption)
    return best


def gradient_check(
    dims: ModelDims,
    seed: int,
    steps: int = 5,
    epsilon: float = 1e-4,
    dropout_rate: float = 0.0,
) -> dict[str, float]:
    """Finite-difference check of `backward` on random data; returns per-tensor
    max relative error."""
    dims.validate()
    if dims.vocab_size < 5:
        raise ValueError("gradient_check needs at least one non-reserved vocabulary entry")
    params, pooled, caption = _draw_check_data(dims, seed, steps)
    mode = "train" if dropout_rate > 0 else "eval"

    def loss_fn(tensors: dict[str, np.ndarray]) -> float:
        candidate = ModelParams.from_dict(tensors, dims)
        _, logits = forward(candidate, pooled, caption, dropout_rate, mode, seed=seed)
        return loss(logits, caption)

    trace, logits = forward(params, pooled, caption, dropout_rate, mode, seed=seed)
    analytic = backward(trace, params, caption)
    return check_gradients(loss_fn, params.to_dict(), analytic, epsilon)


def _write_tensor(out: list[bytes], name: str, arr: np.ndarray) -> None:
    arr2 = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    encoded = name.encode("utf-8")
    out.append(struct.pack("<H", len(encoded)))
    out.append(encoded)
    out.append(struct.pack("<II", arr2.shape[0], arr2.shape[1]))
    out.append(arr2.astype("<f8").tobytes())


def save_checkpoint(
    path: str | Path, params: ModelParams, extras: Mapping[str, np.ndarray] | None = None
) -> None:
    """Write model tensors (PARAM_ORDER) plus optional extra tensors."""
    extras = dict(extras or {})
    d = params.dims
    count = len(PARAM_ORDER) + len(extras)
    chunks = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", CHECKPOINT_VERSION),
        struct.pack("<5I", d.vocab_size, d.embed_dim, d.hidden, d.pooled_dim, count),
    ]
    tensors = params.to_dict()
    for name in PARAM_ORDER:
        _write_tensor(chunks, name, tensors[name])
    for name in sorted(extras):
        _write_tensor(chunks, name, extras[name])
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> tuple[ModelParams, dict[str, np.ndarray]]:
    """Read a checkpoint; returns (params, extra tensors as stored 2-D arrays)."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 28:
        raise FormatError(f"{path.name}: truncated header", offset=len(blob))
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path.name}: bad magic bytes {blob[:4]!r}", offset=0)
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path.name}: unsupported version {version}", offset=4)
    vocab, embed, hidden, pooled, count = struct.unpack_from("<5I", blob, 8)
    dims = ModelDims(vocab_size=vocab, embed_dim=embed, hidden=hidden, pooled_dim=pooled)

    offset = 28
    raw: dict[str, np.ndarray] = {}
    for _ in range(count):
        if offset + 2 > len(blob):
            raise FormatError(f"{path.name}: truncated tensor record", offset=offset)
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        if offset + 8 > len(blob):
            raise FormatError(f"{path.name}: truncated tensor header for {name!r}", offset=offset)
        rows, cols = struct.unpack_from("<II", blob, offset)
        offset += 8
        nbytes = 8 * rows * cols
        if offset + nbytes > len(blob):
            raise FormatError(f"{path.name}: truncated payload for {name!r}", offset=offset)
        raw[name] = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=offset).reshape(
            rows, cols
        ).copy()
        offset += nbytes
    if offset != len(blob):
        raise FormatError(f"{path.name}: {len(blob) - offset} trailing bytes", offset=offset)

    tensors: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(dims).items():
        if name not in raw:
            raise FormatError(f"{path.name}: missing model tensor {name!r}")
        arr = raw.pop(name)
        tensors[name] = arr.reshape(shape) if len(shape) == 1 else arr
    return ModelParams.from_dict(tensors, dims), raw
