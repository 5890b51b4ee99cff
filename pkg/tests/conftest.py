"""Shared fixtures: synthetic corpora, feature files, and the memorization run."""

from __future__ import annotations

import time
from types import SimpleNamespace

import numpy as np
import pytest

from dualcap.model import ModelDims, init_params
from dualcap.text import RESERVED_TOKENS, Vocabulary, encode
from dualcap.training import TrainingConfig, TrainingExample, train

# One entry per acceptance criterion: (name, passed, detail). The terminal
# summary hook below prints them as a single PASS/FAIL line each.
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def record_acceptance(name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}: {detail}")


def memorization_setup(n_videos: int = 4, words_per_caption: int = 5):
    """A tiny corpus the decoder must be able to memorize: one-hot visual
    vectors (mutually orthogonal) and disjoint fixed-length captions."""
    words = [f"w{i:02d}" for i in range(n_videos * words_per_caption)]
    vocab = Vocabulary(id_to_token=list(RESERVED_TOKENS) + words)
    captions = {
        f"v{v}": words[v * words_per_caption : (v + 1) * words_per_caption]
        for v in range(n_videos)
    }
    examples = []
    for v in range(n_videos):
        pooled = np.zeros(n_videos)
        pooled[v] = 1.0
        examples.append(
            TrainingExample(f"v{v}", pooled, encode(captions[f"v{v}"], vocab).validate())
        )
    dims = ModelDims(vocab_size=vocab.size, embed_dim=16, hidden=32, pooled_dim=n_videos)
    return SimpleNamespace(vocab=vocab, captions=captions, examples=examples, dims=dims)


@pytest.fixture(scope="session")
def overfit_run():
    """Train the tiny-corpus decoder once per session; several tests assert
    different contracts (loss level, monotonicity, greedy reproduction) on it."""
    setup = memorization_setup()
    config = TrainingConfig(
        learning_rate=3e-3,
        batch_size=4,
        epochs=700,
        dropout=0.0,
        hidden=setup.dims.hidden,
        clip_norm=5.0,
        seed=0,
    )
    params = init_params(setup.dims, config.seed)
    start = time.perf_counter()
    result = train(params, setup.examples, config)
    seconds = time.perf_counter() - start
    steps = config.epochs * (len(setup.examples) // config.batch_size)
    return SimpleNamespace(
        setup=setup,
        config=config,
        params=result.params,
        losses=result.epoch_losses,
        seconds=seconds,
        steps=steps,
    )


def write_feature_dir(root, specs, m_x: int = 20, seed: int = 0):
    """Write one .vfea file per video id under root/features.

    specs: iterable of video ids, or (video_id, segments) pairs. Plain ids get
    seeded random segments of shape (3, m_x).
    """
    from dualcap.features import FeatureSequence, write_features

    feature_dir = root / "features"
    feature_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for spec in specs:
        if isinstance(spec, str):
            video_id, segments = spec, rng.normal(size=(3, m_x))
        else:
            video_id, segments = spec
        write_features(
            feature_dir / f"{video_id}.vfea",
            FeatureSequence(video_id, np.asarray(segments, dtype=np.float64)),
        )
    return feature_dir
