"""Loss-log parsing and figure rendering."""

import json

import pytest

from dualcap.errors import ValidationError
from dualcap.metrics import evaluate, report_to_dict
from dualcap.plots import read_loss_log, render_loss_curve, render_metrics_chart

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def write_log(path, losses):
    lines = [
        json.dumps({"epoch": i, "mean_loss": loss, "wall_seconds": 0.1,
                    "checkpoint_path": "x"})
        for i, loss in enumerate(losses)
    ]
    path.write_text("\n".join(lines) + "\n")


class TestReadLossLog:
    def test_parses_epoch_and_loss_sequences(self, tmp_path):
        log = tmp_path / "train_log.jsonl"
        write_log(log, [2.5, 1.25, 0.7])
        assert read_loss_log(log) == ([0, 1, 2], [2.5, 1.25, 0.7])

    def test_bad_line_reports_position(self, tmp_path):
        log = tmp_path / "train_log.jsonl"
        log.write_text('{"epoch": 0, "mean_loss": 1.0}\nnot json\n')
        with pytest.raises(ValidationError, match="train_log.jsonl:2"):
            read_loss_log(log)

    def test_missing_field_rejected(self, tmp_path):
        log = tmp_path / "train_log.jsonl"
        log.write_text('{"epoch": 0}\n')
        with pytest.raises(ValidationError, match=":1"):
            read_loss_log(log)

    def test_empty_log_rejected(self, tmp_path):
        log = tmp_path / "train_log.jsonl"
        log.write_text("")
        with pytest.raises(ValidationError):
            read_loss_log(log)


class TestRenderLossCurve:
    def test_writes_png(self, tmp_path):
        log = tmp_path / "train_log.jsonl"
        write_log(log, [2.0, 1.0, 0.5, 0.25])
        out = render_loss_curve(log, tmp_path / "loss_curve.png")
        assert out.read_bytes().startswith(PNG_MAGIC)

    def test_handles_zero_losses(self, tmp_path):
        # A zero entry forces the linear scale branch.
        log = tmp_path / "train_log.jsonl"
        write_log(log, [1.0, 0.0])
        out = render_loss_curve(log, tmp_path / "loss_curve.png")
        assert out.read_bytes().startswith(PNG_MAGIC)


class TestRenderMetricsChart:
    def report(self):
        return report_to_dict(evaluate({"v": "a b c d"}, {"v": ["a b c d"]}))

    def test_writes_png(self, tmp_path):
        out = render_metrics_chart(self.report(), tmp_path / "report.png")
        assert out.read_bytes().startswith(PNG_MAGIC)

    def test_missing_score_rejected(self, tmp_path):
        payload = self.report()
        del payload["cider"]
        with pytest.raises(ValidationError, match="cider"):
            render_metrics_chart(payload, tmp_path / "report.png")
