"""Training loop: batching, clipping, determinism, resume, divergence."""

import json

import numpy as np
import pytest

from dualcap.errors import DimensionError, TrainingDivergedError
from dualcap.model import init_params, load_checkpoint
from dualcap.training import (
    TrainingConfig,
    adam_states_from_extras,
    clip_global_norm,
    derive_seed,
    make_batches,
    train,
)
from conftest import memorization_setup


def tiny_config(**overrides):
    base = dict(
        learning_rate=5e-3, batch_size=4, epochs=4, dropout=0.0, hidden=32, clip_norm=5.0, seed=0
    )
    base.update(overrides)
    return TrainingConfig(**base).validate()


class TestConfig:
    @pytest.mark.parametrize(
        "field,value",
        [
            ("learning_rate", -1e-4),
            ("batch_size", 0),
            ("epochs", 0),
            ("dropout", 1.0),
            ("dropout", -0.1),
            ("hidden", 0),
            ("clip_norm", 0.0),
        ],
    )
    def test_invalid_values_rejected(self, field, value):
        with pytest.raises(ValueError):
            tiny_config(**{field: value})

    def test_defaults_follow_training_recipe(self):
        config = TrainingConfig()
        assert config.learning_rate == 2e-4
        assert config.batch_size == 64
        assert config.epochs == 50
        assert config.dropout == 0.5
        assert config.hidden == 512


class TestBatches:
    def test_partition_sizes(self):
        batches = make_batches(10, 4, seed=0)
        assert [len(b) for b in batches] == [4, 4, 2]

    def test_same_seed_same_order(self):
        assert make_batches(20, 6, seed=5) == make_batches(20, 6, seed=5)

    def test_union_is_input_multiset(self):
        batches = make_batches(17, 5, seed=3)
        flat = sorted(i for b in batches for i in b)
        assert flat == list(range(17))

    def test_zero_batch_size_rejected(self):
        with pytest.raises(ValueError):
            make_batches(4, 0, seed=0)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            make_batches(0, 4, seed=0)


class TestDeriveSeed:
    def test_deterministic(self):
        assert derive_seed(3, 1, 4) == derive_seed(3, 1, 4)

    def test_order_sensitive(self):
        assert derive_seed(1, 2) != derive_seed(2, 1)


class TestClip:
    def test_norm_below_ceiling_unchanged(self):
        grads = {"a": np.array([[3.0, 4.0]])}
        clipped, norm = clip_global_norm(grads, 10.0)
        assert norm == 5.0
        assert np.array_equal(clipped["a"], grads["a"])

    def test_norm_above_ceiling_scaled(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            grads = {
                "a": rng.normal(scale=10.0, size=(3, 3)),
                "b": rng.normal(scale=10.0, size=(5,)),
            }
            clipped, _ = clip_global_norm(grads, 1.5)
            total = sum(float(np.sum(g * g)) for g in clipped.values())
            assert np.sqrt(total) <= 1.5 + 1e-9

    def test_zero_gradients_untouched(self):
        grads = {"a": np.zeros((2, 2))}
        clipped, norm = clip_global_norm(grads, 1.0)
        assert norm == 0.0
        assert np.array_equal(clipped["a"], grads["a"])


class TestTrainLoop:
    def test_zero_learning_rate_freezes_model(self):
        setup = memorization_setup()
        config = tiny_config(learning_rate=0.0, epochs=3)
        params = init_params(setup.dims, 0)
        before = {n: t.copy() for n, t in params.to_dict().items()}
        result = train(params, setup.examples, config)
        # Constant loss (up to summation-order jitter from the epoch shuffle).
        assert max(result.epoch_losses) - min(result.epoch_losses) <= 1e-12
        for name, tensor in result.params.to_dict().items():
            assert np.array_equal(tensor, before[name])

    def test_two_runs_identical_loss_logs(self):
        setup = memorization_setup()
        config = tiny_config(epochs=3, dropout=0.2)
        a = train(init_params(setup.dims, 0), setup.examples, config)
        b = train(init_params(setup.dims, 0), setup.examples, config)
        assert a.epoch_losses == b.epoch_losses

    def test_log_records_and_rolling_checkpoint(self, tmp_path):
        setup = memorization_setup()
        config = tiny_config(epochs=2)
        log_path = tmp_path / "log.jsonl"
        ckpt_path = tmp_path / "model.dsck"
        train(
            init_params(setup.dims, 0), setup.examples, config,
            log_path=log_path, checkpoint_path=ckpt_path,
        )
        lines = [json.loads(l) for l in log_path.read_text().splitlines()]
        assert [l["epoch"] for l in lines] == [0, 1]
        for line in lines:
            assert set(line) == {"epoch", "mean_loss", "wall_seconds", "checkpoint_path"}
            assert line["checkpoint_path"] == str(ckpt_path)
            assert line["wall_seconds"] >= 0.0
        params, extras = load_checkpoint(ckpt_path)
        assert extras["train.epoch"][0, 0] == 2.0
        assert extras["adam.step"][0, 0] == 2.0  # one batch per epoch

    def test_resume_retraces_uninterrupted_run(self, tmp_path):
        setup = memorization_setup()
        full_config = tiny_config(epochs=6, dropout=0.3)
        full_ckpt = tmp_path / "full.dsck"
        full_log = tmp_path / "full.jsonl"
        full = train(
            init_params(setup.dims, 0), setup.examples, full_config,
            log_path=full_log, checkpoint_path=full_ckpt,
        )

        part_ckpt = tmp_path / "part.dsck"
        part_log = tmp_path / "part.jsonl"
        train(
            init_params(setup.dims, 0), setup.examples, tiny_config(epochs=3, dropout=0.3),
            log_path=part_log, checkpoint_path=part_ckpt,
        )
        params, extras = load_checkpoint(part_ckpt)
        adam, start_epoch = adam_states_from_extras(params, extras)
        assert start_epoch == 3
        resumed = train(
            params, setup.examples, full_config,
            log_path=part_log, checkpoint_path=part_ckpt,
            start_epoch=start_epoch, adam=adam,
        )
        assert full_ckpt.read_bytes() == part_ckpt.read_bytes()
        assert resumed.epoch_losses == full.epoch_losses[3:]
        full_losses = [json.loads(l)["mean_loss"] for l in full_log.read_text().splitlines()]
        part_losses = [json.loads(l)["mean_loss"] for l in part_log.read_text().splitlines()]
        assert part_losses == full_losses

    def test_non_finite_loss_aborts_with_diagnostics(self):
        setup = memorization_setup()
        params = init_params(setup.dims, 0)
        # Corrupt the output bias: it feeds every logits row, so the
        # first forward pass hits non-finite activations.
        params.output_bias[0] = np.nan
        with pytest.raises(TrainingDivergedError, match="epoch 0.*parameter norms"):
            train(params, setup.examples, tiny_config())

    def test_hidden_size_mismatch_rejected(self):
        setup = memorization_setup()
        params = init_params(setup.dims, 0)
        with pytest.raises(DimensionError):
            train(params, setup.examples, tiny_config(hidden=16))

    def test_pooled_shape_mismatch_rejected(self):
        setup = memorization_setup()
        params = init_params(setup.dims, 0)
        setup.examples[0].pooled = np.zeros(3)
        with pytest.raises(DimensionError):
            train(params, setup.examples, tiny_config())

    def test_empty_dataset_rejected(self):
        setup = memorization_setup()
        with pytest.raises(ValueError):
            train(init_params(setup.dims, 0), [], tiny_config())

    def test_start_epoch_bounds(self):
        setup = memorization_setup()
        params = init_params(setup.dims, 0)
        with pytest.raises(ValueError):
            train(params, setup.examples, tiny_config(epochs=2), start_epoch=5)


class TestMemorization:
    def test_loss_reaches_target(self, overfit_run):
        assert overfit_run.steps <= 2000
        assert overfit_run.losses[-1] < 0.05

    def test_loss_non_increasing_after_warmup(self, overfit_run):
        losses = overfit_run.losses
        for i in range(3, len(losses) - 1):
            assert losses[i + 1] <= losses[i] + 1e-9
