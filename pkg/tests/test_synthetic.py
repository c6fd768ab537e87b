import numpy as np
import pytest

from drowsae.dataset import read_manifest
from drowsae.features import load_feature_file
from drowsae.synthetic import (
    SyntheticSpec,
    generate_synthetic,
    generate_video_features,
    make_smooth_sequences,
)


class TestSpec:
    def test_defaults_valid(self):
        spec = SyntheticSpec()
        assert spec.n_normal_videos == 8 and spec.n_anomaly_videos == 4

    def test_validation(self):
        with pytest.raises(ValueError):
            SyntheticSpec(dim=1)
        with pytest.raises(ValueError):
            SyntheticSpec(anomaly_kinds=("wobble",))
        with pytest.raises(ValueError):
            SyntheticSpec(segment_frac=0.7)
        with pytest.raises(ValueError):
            SyntheticSpec(n_normal_videos=0, n_anomaly_videos=0)


class TestVideoFeatures:
    def test_rows_unit_norm(self):
        rng = np.random.default_rng(0)
        feats, labels = generate_video_features(rng, SyntheticSpec(), anomalous=True)
        assert np.allclose(np.linalg.norm(feats, axis=1), 1.0, atol=1e-12)
        assert feats.shape == (200, 8)
        assert labels.shape == (200,)

    def test_normal_video_all_zero_labels(self):
        rng = np.random.default_rng(1)
        _, labels = generate_video_features(rng, SyntheticSpec(), anomalous=False)
        assert labels.sum() == 0

    def test_anomalous_video_has_segments(self):
        rng = np.random.default_rng(2)
        spec = SyntheticSpec(segments_per_video=2, segment_frac=0.2)
        _, labels = generate_video_features(rng, spec, anomalous=True)
        assert labels.sum() > 0
        # two contiguous runs of ones
        changes = np.flatnonzero(np.diff(np.r_[0, labels, 0]))
        assert len(changes) == 4

    def test_segments_never_start_at_frame_zero(self):
        spec = SyntheticSpec(segments_per_video=3, segment_frac=0.1)
        for seed in range(30):
            rng = np.random.default_rng(seed)
            _, labels = generate_video_features(rng, spec, anomalous=True)
            assert labels[0] == 0

    def test_jump_frames_move_more_than_normal_frames(self):
        # consecutive-row distances inside jump segments dwarf those of
        # normal frames: the injected component flips direction every 3
        # frames while the base drifts slowly
        spec = SyntheticSpec(anomaly_kinds=("jump",), segments_per_video=2)
        for seed in range(5):
            rng = np.random.default_rng(seed)
            feats, labels = generate_video_features(rng, spec, anomalous=True)
            step = np.linalg.norm(np.diff(feats, axis=0), axis=1)
            both = np.minimum(labels[1:], labels[:-1]).astype(bool)
            neither = (labels[1:] + labels[:-1]) == 0
            assert step[both].mean() > 2 * step[neither].mean()

    def test_freeze_frames_are_constant(self):
        spec = SyntheticSpec(anomaly_kinds=("freeze",), segments_per_video=1)
        rng = np.random.default_rng(3)
        feats, labels = generate_video_features(rng, spec, anomalous=True)
        seg = np.flatnonzero(labels)
        segment_rows = feats[seg]
        assert np.allclose(segment_rows, segment_rows[0], atol=1e-12)
        # and equal to the row just before the segment (hold semantics)
        assert np.allclose(segment_rows[0], feats[seg[0] - 1], atol=1e-12)


class TestSmoothSequences:
    def test_shapes_and_norms(self):
        seqs = make_smooth_sequences(5, 12, 8, seed=0)
        assert len(seqs) == 5
        for s in seqs:
            assert s.shape == (12, 8)
            assert np.allclose(np.linalg.norm(s, axis=1), 1.0, atol=1e-12)

    def test_deterministic(self):
        a = make_smooth_sequences(3, 10, 4, seed=7)
        b = make_smooth_sequences(3, 10, 4, seed=7)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_sequences_differ_from_each_other(self):
        seqs = make_smooth_sequences(2, 10, 4, seed=1)
        assert not np.allclose(seqs[0], seqs[1])

    def test_smoothness(self):
        # neighboring rows stay close: the carrier moves only a few degrees
        # per frame
        (s,) = make_smooth_sequences(1, 30, 6, seed=2)
        steps = np.linalg.norm(np.diff(s, axis=0), axis=1)
        assert steps.max() < 0.35


class TestGenerateSynthetic:
    def test_layout_and_manifest(self, tmp_path):
        spec = SyntheticSpec(n_normal_videos=3, n_anomaly_videos=2,
                             frames_per_video=50, dim=4)
        manifest = generate_synthetic(spec, seed=0, out_dir=tmp_path)
        entries = read_manifest(manifest)
        assert [e.video_id for e in entries] == [
            "normal000", "normal001", "normal002", "anom000", "anom001"
        ]
        # one subject per video
        assert len({e.subject_id for e in entries}) == 5

    def test_labels_match_video_kind(self, tmp_path):
        spec = SyntheticSpec(n_normal_videos=2, n_anomaly_videos=2,
                             frames_per_video=60, dim=4)
        manifest = generate_synthetic(spec, seed=1, out_dir=tmp_path)
        for entry in read_manifest(manifest):
            (video,) = load_feature_file(entry.path)
            if entry.video_id.startswith("normal"):
                assert video.labels.sum() == 0
            else:
                assert 0 < video.labels.sum() < video.n_frames

    def test_deterministic_bytes(self, tmp_path):
        spec = SyntheticSpec(n_normal_videos=2, n_anomaly_videos=1,
                             frames_per_video=40, dim=4)
        m1 = generate_synthetic(spec, seed=3, out_dir=tmp_path / "a")
        m2 = generate_synthetic(spec, seed=3, out_dir=tmp_path / "b")
        for e1, e2 in zip(read_manifest(m1), read_manifest(m2)):
            with open(e1.path, "rb") as f1, open(e2.path, "rb") as f2:
                assert f1.read() == f2.read()

    def test_no_anomaly_videos(self, tmp_path):
        spec = SyntheticSpec(n_normal_videos=2, n_anomaly_videos=0,
                             frames_per_video=40, dim=4)
        manifest = generate_synthetic(spec, seed=0, out_dir=tmp_path)
        assert len(read_manifest(manifest)) == 2
