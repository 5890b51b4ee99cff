"""Feature file I/O and window-average pooling."""

import struct

import numpy as np
import pytest

from dualcap.errors import FormatError
from dualcap.features import (
    HEADER,
    MAGIC,
    FeatureSequence,
    average_pool,
    load_feature_manifest,
    load_features,
    pooled_dim,
    write_features,
)


def seq(values, video_id="vid"):
    return FeatureSequence(video_id, np.asarray(values, dtype=np.float64))


class TestAveragePool:
    def test_window5_even_split(self):
        out = average_pool(seq([[1, 2, 3, 4, 5, 6, 7, 8, 9, 10]]))
        assert np.allclose(out.pooled_segments, [[3.0, 8.0]])
        assert np.allclose(out.summary, [3.0, 8.0])

    def test_window5_partial_tail(self):
        out = average_pool(seq([[1, 2, 3, 4, 5, 6, 7]]))
        # The two-element tail is averaged over its actual length.
        assert np.allclose(out.pooled_segments, [[3.0, 6.5]])

    def test_window1_is_identity(self):
        data = np.arange(12, dtype=np.float64).reshape(3, 4)
        out = average_pool(seq(data), window=1)
        assert np.array_equal(out.pooled_segments, data)

    def test_window0_rejected(self):
        with pytest.raises(ValueError):
            average_pool(seq([[1.0, 2.0]]), window=0)

    def test_mean_preserved_when_window_divides(self):
        rng = np.random.default_rng(3)
        data = rng.normal(size=(4, 20))
        out = average_pool(seq(data), window=5)
        assert np.allclose(out.pooled_segments.mean(axis=1), data.mean(axis=1))

    def test_summary_invariant_under_segment_reorder(self):
        rng = np.random.default_rng(4)
        data = rng.normal(size=(6, 15))
        original = average_pool(seq(data)).summary
        shuffled = average_pool(seq(data[::-1].copy())).summary
        assert np.allclose(original, shuffled, atol=1e-12)

    def test_pooled_dim_is_ceiling(self):
        assert pooled_dim(10) == 2
        assert pooled_dim(7) == 2
        assert pooled_dim(11) == 3
        assert pooled_dim(5, window=5) == 1


class TestFileFormat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        for i in range(10):
            n, m_x = int(rng.integers(1, 6)), int(rng.integers(1, 12))
            data = rng.normal(size=(n, m_x)).astype(np.float32).astype(np.float64)
            path = tmp_path / f"v{i}.vfea"
            write_features(path, seq(data, f"v{i}"))
            loaded = load_features(path)
            assert loaded.video_id == f"v{i}"
            assert np.array_equal(loaded.segments, data)
            # Re-serialization is byte-identical.
            second = tmp_path / f"v{i}_again.vfea"
            write_features(second, loaded)
            assert path.read_bytes() == second.read_bytes()

    def test_payload_size_must_match_header(self, tmp_path):
        path = tmp_path / "x.vfea"
        good = HEADER.pack(MAGIC, 1, 4, 10) + b"\x00" * 4 * 40
        path.write_bytes(good)
        assert load_features(path).segments.shape == (4, 10)
        path.write_bytes(good[:-4])  # 39 floats for a 4x10 header
        with pytest.raises(FormatError):
            load_features(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "x.vfea"
        path.write_bytes(b"VFE")
        with pytest.raises(FormatError) as err:
            load_features(path)
        assert err.value.offset == 3

    def test_bad_magic_offset_zero(self, tmp_path):
        path = tmp_path / "x.vfea"
        path.write_bytes(b"NOPE" + struct.pack("<III", 1, 1, 1) + b"\x00" * 4)
        with pytest.raises(FormatError) as err:
            load_features(path)
        assert err.value.offset == 0

    def test_bad_version_offset_four(self, tmp_path):
        path = tmp_path / "x.vfea"
        path.write_bytes(HEADER.pack(MAGIC, 9, 1, 1) + b"\x00" * 4)
        with pytest.raises(FormatError) as err:
            load_features(path)
        assert err.value.offset == 4

    def test_zero_counts_rejected(self, tmp_path):
        path = tmp_path / "x.vfea"
        path.write_bytes(HEADER.pack(MAGIC, 1, 0, 5))
        with pytest.raises(FormatError) as err:
            load_features(path)
        assert err.value.offset == 8
        path.write_bytes(HEADER.pack(MAGIC, 1, 5, 0))
        with pytest.raises(FormatError) as err:
            load_features(path)
        assert err.value.offset == 12

    def test_non_finite_payload_located(self, tmp_path):
        path = tmp_path / "x.vfea"
        payload = struct.pack("<4f", 1.0, float("nan"), 3.0, 4.0)
        path.write_bytes(HEADER.pack(MAGIC, 1, 1, 4) + payload)
        with pytest.raises(FormatError) as err:
            load_features(path)
        assert err.value.offset == HEADER.size + 4  # second float

    def test_validate_rejects_non_finite_and_empty(self):
        with pytest.raises(ValueError):
            seq([[1.0, float("inf")]]).validate()
        with pytest.raises(ValueError):
            FeatureSequence("v", np.zeros((0, 3))).validate()


class TestManifest:
    def test_directory_scan_by_stem(self, tmp_path):
        for vid in ("b", "a"):
            write_features(tmp_path / f"{vid}.vfea", seq([[1.0, 2.0]], vid))
        manifest = load_feature_manifest(tmp_path)
        assert sorted(manifest) == ["a", "b"]
        assert manifest["a"].name == "a.vfea"

    def test_manifest_file_wins(self, tmp_path):
        write_features(tmp_path / "stored.vfea", seq([[1.0, 2.0]], "stored"))
        (tmp_path / "features.json").write_text('{"alias": "stored.vfea"}')
        manifest = load_feature_manifest(tmp_path)
        assert list(manifest) == ["alias"]
        assert load_features(manifest["alias"]).segments.shape == (1, 2)

    def test_manifest_must_be_object(self, tmp_path):
        (tmp_path / "features.json").write_text("[1, 2]")
        with pytest.raises(FormatError):
            load_feature_manifest(tmp_path)
