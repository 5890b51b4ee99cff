"""Greedy caption generation from a trained decoder.

Generation starts from the begin marker with the visual summary wired in
exactly as during training, takes the argmax token at each step (ties go to
the smallest id), and stops at the end marker or after `max_len` content
tokens. Marker and padding ids never appear in the output: PAD and BOS are
excluded from the candidate set, EOS terminates.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ValidationError
from .model import ModelParams, _lstm_step_cached, project_visual
from .text import BOS_ID, EOS_ID, MAX_CONTENT_TOKENS, PAD_ID, Vocabulary


def greedy_generate(
    params: ModelParams, pooled: np.ndarray, max_len: int = MAX_CONTENT_TOKENS
) -> list[int]:
    """Return the generated content token ids (markers excluded)."""
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    hid = params.dims.hidden
    visual = project_visual(params, pooled)
    h1, c1 = visual, np.zeros(hid)
    h2, c2 = np.zeros(hid), np.zeros(hid)
    token = BOS_ID
    out: list[int] = []
    for _ in range(max_len):
        y = params.embedding[:, token] + params.embedding_bias
        h1, c1, _, _ = _lstm_step_cached(params.lstm1, y, h1, c1)
        h2, c2, _, _ = _lstm_step_cached(params.lstm2, np.concatenate([y, visual]), h2, c2)
        logits = params.output_projection @ (h1 * h2) + params.output_bias
        logits = logits.copy()
        logits[PAD_ID] = -np.inf
        logits[BOS_ID] = -np.inf
        token = int(np.argmax(logits))  # first max wins, so ties take the smallest id
        if token == EOS_ID:
            break
        out.append(token)
    return out


def generate_captions(
    params: ModelParams, pooled_by_video: Mapping[str, np.ndarray], vocab: Vocabulary,
    max_len: int = MAX_CONTENT_TOKENS,
) -> dict[str, str]:
    """Greedy caption text for every video, keyed by id."""
    captions: dict[str, str] = {}
    for video_id in sorted(pooled_by_video):
        ids = greedy_generate(params, pooled_by_video[video_id], max_len)
        captions[video_id] = " ".join(vocab.token(i) for i in ids)
    return captions


def write_hypotheses(path: str | Path, captions: Mapping[str, str]) -> None:
    """Write a video id -> caption JSON map (sorted keys, stable bytes)."""
    text = json.dumps(dict(captions), indent=2, sort_keys=True, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_hypotheses(path: str | Path) -> dict[str, str]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path.name}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path.name}: expected an object mapping video id to caption")
    for key, value in data.items():
        if not isinstance(key, str) or not isinstance(value, str):
            raise ValidationError(f"{path.name}: entry {key!r} is not a string-to-string pair")
    return data
