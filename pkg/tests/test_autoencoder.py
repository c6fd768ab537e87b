import copy

import numpy as np
import pytest

import reference_lstm as ref
from drowsae.autoencoder import (
    AutoencoderParams,
    LstmLayerParams,
    TrainConfig,
    anomaly_score,
    backward,
    clip_loss,
    decode,
    encode,
    init_params,
    load_checkpoint,
    loss_and_gradients,
    lstm_cell_step,
    reconstruct,
    save_checkpoint,
    tensor_items,
    train,
)
from drowsae.errors import DivergenceError, ShapeMismatchError


def _zero_params(dim, hidden):
    def layer(d_in):
        return LstmLayerParams(
            w_x=np.zeros((4 * hidden, d_in)),
            w_h=np.zeros((4 * hidden, hidden)),
            b=np.zeros(4 * hidden),
        )

    return AutoencoderParams(
        enc1=layer(dim),
        enc2=layer(hidden),
        dec1=layer(hidden),
        dec2=layer(hidden),
        w_out=np.zeros((dim, hidden)),
        b_out=np.zeros(dim),
    )


def _apply_update(params, grads, lr):
    updated = copy.deepcopy(params)
    for (_, tensor), (_, g) in zip(tensor_items(updated), tensor_items(grads)):
        tensor -= lr * g
    return updated


class TestCellStep:
    def test_zero_params_zero_state(self):
        p = LstmLayerParams(np.zeros((8, 3)), np.zeros((8, 2)), np.zeros(8))
        h, c = lstm_cell_step(np.ones(3), np.zeros(2), np.zeros(2), p)
        assert np.array_equal(c, np.zeros(2))
        assert np.array_equal(h, np.zeros(2))

    def test_zero_params_unit_cell_state(self):
        # gates sigmoid(0) = 0.5, candidate tanh(0) = 0:
        # c' = 0.5 * 1 = 0.5, h' = 0.5 * tanh(0.5)
        p = LstmLayerParams(np.zeros((8, 3)), np.zeros((8, 2)), np.zeros(8))
        h, c = lstm_cell_step(np.zeros(3), np.zeros(2), np.ones(2), p)
        assert np.allclose(c, 0.5, atol=1e-15)
        assert np.allclose(h, 0.5 * np.tanh(0.5), atol=1e-15)
        assert h[0] == pytest.approx(0.23105857863000487, abs=1e-12)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            p = LstmLayerParams(
                w_x=rng.normal(size=(8, 3)),
                w_h=rng.normal(size=(8, 2)),
                b=rng.normal(size=8),
            )
            x = rng.normal(size=3)
            h, c = lstm_cell_step(x, np.zeros(2), np.zeros(2), p)
            (h_ref,) = ref.layer_forward(
                [list(x)],
                [[float(v) for v in row] for row in p.w_x],
                [[float(v) for v in row] for row in p.w_h],
                [float(v) for v in p.b],
            )
            assert np.allclose(h, h_ref, atol=1e-12)

    def test_shape_mismatch(self):
        p = LstmLayerParams(np.zeros((8, 3)), np.zeros((8, 2)), np.zeros(8))
        with pytest.raises(ShapeMismatchError):
            lstm_cell_step(np.zeros(4), np.zeros(2), np.zeros(2), p)


class TestEncode:
    def test_zero_params_zero_context(self):
        p = _zero_params(3, 4)
        rng = np.random.default_rng(1)
        assert np.array_equal(encode(rng.normal(size=(5, 3)), p), np.zeros(4))

    def test_single_step_composition(self):
        # N = 1: context is just layer2(layer1(x)) from zero states
        rng = np.random.default_rng(2)
        p = init_params(3, 4, rng)
        x = rng.normal(size=3)
        h1, _ = lstm_cell_step(x, np.zeros(4), np.zeros(4), p.enc1)
        h2, _ = lstm_cell_step(h1, np.zeros(4), np.zeros(4), p.enc2)
        assert np.allclose(encode(x[None, :], p), h2, atol=1e-15)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            p = init_params(4, 3, rng)
            seq = rng.normal(size=(6, 4))
            h1 = ref.layer_forward(
                [list(map(float, r)) for r in seq], *ref._layer_lists(p.enc1)
            )
            h2 = ref.layer_forward(h1, *ref._layer_lists(p.enc2))
            assert np.allclose(encode(seq, p), h2[-1], atol=1e-12)

    def test_appending_timestep_changes_context(self):
        rng = np.random.default_rng(4)
        p = init_params(3, 5, rng)
        seq = rng.normal(size=(4, 3))
        longer = np.vstack([seq, rng.normal(size=(1, 3))])
        assert not np.allclose(encode(seq, p), encode(longer, p))


class TestDecode:
    def test_zero_params_emits_bias(self):
        p = _zero_params(3, 4)
        p.b_out[:] = [0.5, -1.0, 2.0]
        out = decode(np.zeros(4), 3, p)
        assert np.allclose(out, np.tile([0.5, -1.0, 2.0], (3, 1)), atol=1e-15)

    def test_matches_scalar_oracle_full_pass(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            p = init_params(3, 4, rng)
            seq = rng.normal(size=(5, 3))
            assert np.allclose(
                reconstruct(seq, p), ref.reconstruct(seq, p), atol=1e-12
            )

    def test_context_fed_every_step(self):
        # manual unroll: feeding the same context at each step must equal decode
        rng = np.random.default_rng(6)
        p = init_params(2, 3, rng)
        ctx = rng.normal(size=3)
        h = c = np.zeros(3)
        h2 = c2 = np.zeros(3)
        rows = []
        for _ in range(4):
            h, c = lstm_cell_step(ctx, h, c, p.dec1)
            h2, c2 = lstm_cell_step(h, h2, c2, p.dec2)
            rows.append(p.w_out @ h2 + p.b_out)
        assert np.allclose(decode(ctx, 4, p), np.stack(rows), atol=1e-14)

    def test_bad_context_shape(self):
        p = _zero_params(3, 4)
        with pytest.raises(ShapeMismatchError):
            decode(np.zeros(5), 3, p)


class TestClipLoss:
    def test_perfect_reverse_reconstruction_is_zero(self):
        rng = np.random.default_rng(7)
        f = rng.normal(size=(6, 3))
        assert clip_loss(f, f[::-1]) == 0.0

    def test_single_frame(self):
        assert clip_loss([[1.0, 0.0]], [[0.0, 0.0]]) == 1.0

    def test_two_frame_reverse_alignment(self):
        # F = [[1],[0]], emissions [[0],[0]]: step 1 targets F(2)=0 (cost 0),
        # step 2 targets F(1)=1 (cost 1); total 1
        assert clip_loss([[1.0], [0.0]], [[0.0], [0.0]]) == 1.0

    def test_identity_emissions_cost_double(self):
        # emitting F itself (forward order) against the reversed target
        # costs 2 here; distinguishes reverse from forward alignment
        assert clip_loss([[1.0], [0.0]], [[1.0], [0.0]]) == 2.0

    def test_non_negative_and_zero_iff_reversed(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            f = rng.normal(size=(5, 2))
            y = rng.normal(size=(5, 2))
            assert clip_loss(f, y) >= 0.0
        assert clip_loss(f, f[::-1]) == 0.0

    def test_row_permutation_sensitivity(self):
        # reordering F's rows for fixed emissions changes the loss
        rng = np.random.default_rng(9)
        f = rng.normal(size=(5, 3))
        y = rng.normal(size=(5, 3))
        base = clip_loss(f, y)
        perm = f[[1, 0, 3, 4, 2]]
        assert abs(clip_loss(perm, y) - base) > 1e-8

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            clip_loss(np.zeros((3, 2)), np.zeros((2, 2)))


class TestAnomalyScore:
    def test_zero_params_unit_frame(self):
        # emissions all zero, F = [[1, 0]]: loss 1 over N*D = 2 values
        p = _zero_params(2, 4)
        assert anomaly_score([[1.0, 0.0]], p) == 0.5

    def test_normalization_identity(self):
        rng = np.random.default_rng(10)
        p = init_params(3, 4, rng)
        seq = rng.normal(size=(7, 3))
        expected = clip_loss(seq, reconstruct(seq, p)) / seq.size
        assert anomaly_score(seq, p) == pytest.approx(expected, abs=0.0)

    def test_zero_input_zero_params_scores_zero(self):
        p = _zero_params(3, 4)
        assert anomaly_score(np.zeros((5, 3)), p) == 0.0


def _fd_loss(seq, params):
    return clip_loss(seq, reconstruct(seq, params))


def _fd_gradients(seq, params, eps=1e-5):
    """Central finite differences for every tensor; slow, used as oracle."""
    grads = []
    for name, _ in tensor_items(params):
        work = copy.deepcopy(params)
        tensor = dict(tensor_items(work))[name]
        g = np.zeros_like(tensor)
        it = np.nditer(tensor, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = tensor[idx]
            tensor[idx] = orig + eps
            up = _fd_loss(seq, work)
            tensor[idx] = orig - eps
            down = _fd_loss(seq, work)
            tensor[idx] = orig
            g[idx] = (up - down) / (2 * eps)
        grads.append((name, g))
    return grads


def _max_rel_err(a, n):
    # The 1e-5 floor keeps finite-difference roundoff (~ eps * loss / 2h,
    # around 1e-11 here) from dominating entries whose true gradient is
    # near zero; bugs on normally-sized entries still blow well past 1e-4.
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-5)
    return float(np.max(np.abs(a - n) / denom))


class TestGradients:
    def test_zero_residual_zero_gradients(self):
        # constant rows equal to b_out with all weights zero: emissions match
        # the reversed input exactly, so every gradient vanishes
        p = _zero_params(3, 4)
        p.b_out[:] = [0.2, -0.4, 1.0]
        seq = np.tile(p.b_out, (5, 1))
        loss, grads = loss_and_gradients(seq, p)
        assert loss == 0.0
        for name, g in tensor_items(grads):
            assert np.array_equal(g, np.zeros_like(g)), name

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        p = init_params(4, 8, rng)
        seq = rng.normal(size=(5, 4)) * 0.5
        _, analytic = loss_and_gradients(seq, p)
        for (name, a), (_, n) in zip(tensor_items(analytic), _fd_gradients(seq, p)):
            assert _max_rel_err(a, n) <= 1e-4, name

    def test_decoder_input_weights_zero_kills_encoder_gradients(self):
        # with dec1.w_x = 0 the context cannot reach the decoder (initial
        # states are zero), so encoder parameters cannot affect the loss
        rng = np.random.default_rng(12)
        p = init_params(3, 5, rng)
        p.dec1.w_x[:] = 0.0
        seq = rng.normal(size=(4, 3))
        _, grads = loss_and_gradients(seq, p)
        for name in ("enc1", "enc2"):
            layer = getattr(grads, name)
            for field in ("w_x", "w_h", "b"):
                g = getattr(layer, field)
                assert np.array_equal(g, np.zeros_like(g)), f"{name}.{field}"
        # decoder and projection gradients are generically nonzero
        assert np.abs(grads.b_out).max() > 0

    def test_loss_matches_forward_pass(self):
        rng = np.random.default_rng(13)
        p = init_params(3, 4, rng)
        seq = rng.normal(size=(6, 3))
        loss, _ = loss_and_gradients(seq, p)
        assert loss == pytest.approx(clip_loss(seq, reconstruct(seq, p)), abs=0.0)

    def test_backward_returns_same_grads(self):
        rng = np.random.default_rng(14)
        p = init_params(2, 3, rng)
        seq = rng.normal(size=(4, 2))
        _, g1 = loss_and_gradients(seq, p)
        g2 = backward(seq, p)
        for (_, a), (_, b) in zip(tensor_items(g1), tensor_items(g2)):
            assert np.array_equal(a, b)

    def test_single_step_descent_with_lr_halving(self):
        # one SGD step must reduce the loss for a small enough lr; at most
        # 20 halvings from 0.1 are allowed before declaring failure
        rng = np.random.default_rng(15)
        for trial in range(5):
            p = init_params(3, 6, rng)
            seq = rng.normal(size=(5, 3))
            loss0, grads = loss_and_gradients(seq, p)
            lr = 0.1
            for _ in range(20):
                candidate = _apply_update(p, grads, lr)
                new_loss, _ = loss_and_gradients(seq, candidate)
                if new_loss < loss0:
                    break
                lr *= 0.5
            else:
                pytest.fail(f"trial {trial}: no descent after 20 lr halvings")


class TestInit:
    def test_bounds(self):
        p = init_params(5, 16, seed=0)
        bound = 1.0 / 4.0
        for name, arr in tensor_items(p):
            assert np.abs(arr).max() <= bound, name

    def test_deterministic(self):
        a = init_params(3, 8, seed=42)
        b = init_params(3, 8, seed=42)
        for (_, x), (_, y) in zip(tensor_items(a), tensor_items(b)):
            assert np.array_equal(x, y)

    def test_tensor_names_fixed_order(self):
        p = init_params(2, 2, seed=0)
        names = [name for name, _ in tensor_items(p)]
        assert names == [
            "enc1.w_x", "enc1.w_h", "enc1.b",
            "enc2.w_x", "enc2.w_h", "enc2.b",
            "dec1.w_x", "dec1.w_h", "dec1.b",
            "dec2.w_x", "dec2.w_h", "dec2.b",
            "w_out", "b_out",
        ]

    def test_invalid_sizes(self):
        with pytest.raises(ValueError):
            init_params(0, 4, seed=0)
        with pytest.raises(ValueError):
            init_params(4, 0, seed=0)


def _smooth_clips(n_clips, n, d, seed):
    rng = np.random.default_rng(seed)
    clips = []
    for _ in range(n_clips):
        t = np.arange(n)[:, None]
        phase = rng.uniform(0, 2 * np.pi, size=d)
        raw = np.sin(2 * np.pi * t / 20.0 + phase) + 0.1 * rng.normal(size=(n, d)) + 1.5
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
        clips.append(raw)
    return clips


class TestTrain:
    def test_zero_lr_is_a_no_op(self):
        clips = _smooth_clips(4, 6, 3, seed=16)
        short = train(clips, TrainConfig(epochs=1, hidden=4, learning_rate=0.0, seed=1))
        long = train(clips, TrainConfig(epochs=5, hidden=4, learning_rate=0.0, seed=1))
        for (_, a), (_, b) in zip(
            tensor_items(short.params), tensor_items(long.params)
        ):
            assert np.array_equal(a, b)
        # constant loss trace too
        assert len(set(f"{v:.17e}" for v in long.epoch_losses)) == 1

    def test_epoch_loss_is_mean_clip_loss(self):
        clips = _smooth_clips(5, 6, 3, seed=17)
        result = train(clips, TrainConfig(epochs=3, hidden=4, learning_rate=0.0, seed=2))
        expected = np.mean(
            [clip_loss(s, reconstruct(s, result.params)) for s in clips]
        )
        assert result.epoch_losses[0] == pytest.approx(expected, rel=1e-12)

    def test_deterministic_given_seed(self):
        clips = _smooth_clips(6, 8, 4, seed=18)
        cfg = TrainConfig(epochs=4, hidden=5, learning_rate=0.01, batch_size=2, seed=7)
        a = train(clips, cfg)
        b = train(clips, cfg)
        assert a.epoch_losses == b.epoch_losses
        for (_, x), (_, y) in zip(tensor_items(a.params), tensor_items(b.params)):
            assert np.array_equal(x, y)

    def test_different_seeds_differ(self):
        clips = _smooth_clips(6, 8, 4, seed=19)
        a = train(clips, TrainConfig(epochs=2, hidden=5, seed=0))
        b = train(clips, TrainConfig(epochs=2, hidden=5, seed=1))
        assert not np.array_equal(a.params.w_out, b.params.w_out)

    def test_single_clip_converges(self):
        clips = _smooth_clips(1, 12, 8, seed=20)
        result = train(
            clips, TrainConfig(epochs=200, hidden=16, learning_rate=0.01, seed=3)
        )
        assert result.epoch_losses[-1] < 0.1 * result.epoch_losses[0]

    def test_divergence_detected(self):
        clips = _smooth_clips(2, 6, 3, seed=21)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(DivergenceError):
                train(
                    clips,
                    TrainConfig(epochs=50, hidden=4, learning_rate=1e4, seed=4),
                )

    def test_grad_clip_caps_update_norm(self):
        # with a tiny cap the first update's parameter change has norm
        # lr * cap (the batch gradient norm is far above the cap)
        clips = _smooth_clips(4, 6, 3, seed=22)
        cap = 1e-3
        cfg = TrainConfig(
            epochs=1, hidden=4, learning_rate=0.5, batch_size=4, seed=5, grad_clip=cap
        )
        result = train(clips, cfg)
        init = init_params(3, 4, np.random.default_rng([5, 0]))
        delta_sq = 0.0
        for (_, after), (_, before) in zip(
            tensor_items(result.params), tensor_items(init)
        ):
            delta_sq += float(((after - before) ** 2).sum())
        assert np.sqrt(delta_sq) == pytest.approx(0.5 * cap, rel=1e-6)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(epochs=1, learning_rate=-0.1)
        with pytest.raises(ValueError):
            TrainConfig(epochs=1, batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(epochs=1, grad_clip=0.0)

    def test_mismatched_dims_rejected(self):
        with pytest.raises(ShapeMismatchError):
            train(
                [np.zeros((4, 3)), np.zeros((4, 2))],
                TrainConfig(epochs=1, hidden=4),
            )


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(23)
        p = init_params(4, 6, rng)
        path = tmp_path / "ck.npz"
        save_checkpoint(path, p)
        q = load_checkpoint(path)
        for (name, a), (_, b) in zip(tensor_items(p), tensor_items(q)):
            assert np.array_equal(a, b), name

    def test_scores_identical_after_reload(self, tmp_path):
        rng = np.random.default_rng(24)
        clips = _smooth_clips(3, 8, 4, seed=25)
        result = train(clips, TrainConfig(epochs=3, hidden=5, seed=6))
        path = tmp_path / "ck.npz"
        save_checkpoint(path, result.params)
        reloaded = load_checkpoint(path)
        for s in clips:
            assert anomaly_score(s, result.params) == anomaly_score(s, reloaded)

    def test_corrupt_checkpoint_rejected(self, tmp_path):
        rng = np.random.default_rng(26)
        p = init_params(3, 4, rng)
        path = tmp_path / "ck.npz"
        arrays = {name.replace(".", "__"): arr for name, arr in tensor_items(p)}
        arrays["meta"] = np.array([1, 99, 4], dtype=np.int64)  # wrong dim
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)
        with pytest.raises(ValueError):
            load_checkpoint(path)

    def test_unknown_version_rejected(self, tmp_path):
        rng = np.random.default_rng(27)
        p = init_params(3, 4, rng)
        path = tmp_path / "ck.npz"
        arrays = {name.replace(".", "__"): arr for name, arr in tensor_items(p)}
        arrays["meta"] = np.array([2, 3, 4], dtype=np.int64)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)
        with pytest.raises(ValueError):
            load_checkpoint(path)
