"""LSTM autoencoder over feature sequences, trained from scratch.

A 2-layer LSTM encoder compresses an N x D feature sequence into its final
layer-2 hidden state (the context vector). A 2-layer LSTM decoder receives
that same context vector as input at every step and, through an affine
output projection, emits the reconstruction *in reverse order*: the emission
at step t is compared against input row N - t + 1. Training minimizes the
summed squared reconstruction error with plain SGD; gradients are exact
backpropagation through time over both unrolls, including the fan-out of
the context into all decoder steps. The per-element mean of the same error
is the clip's anomaly score.

Gate order along the stacked 4H axis is input, forget, cell, output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, ShapeMismatchError

GATE_NAMES = ("input", "forget", "cell", "output")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Evaluated piecewise so large |x| cannot overflow exp.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LstmLayerParams:
    """One LSTM layer: input weights, recurrent weights, bias.

    Arrays stack the four gates along the first axis: ``w_x`` is (4H, D_in),
    ``w_h`` is (4H, H), ``b`` is (4H,).
    """

    w_x: np.ndarray
    w_h: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.w_x = np.asarray(self.w_x, dtype=np.float64)
        self.w_h = np.asarray(self.w_h, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        h = self.hidden_size
        if self.w_h.shape != (4 * h, h) or self.w_x.shape[0] != 4 * h or self.b.shape != (4 * h,):
            raise ShapeMismatchError(
                f"inconsistent layer shapes: w_x {self.w_x.shape}, "
                f"w_h {self.w_h.shape}, b {self.b.shape}"
            )

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_x.shape[1]

    def gates(self) -> dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """Per-gate (w_x, w_h, b) views, keyed by gate name."""
        h = self.hidden_size
        out = {}
        for k, name in enumerate(GATE_NAMES):
            sl = slice(k * h, (k + 1) * h)
            out[name] = (self.w_x[sl], self.w_h[sl], self.b[sl])
        return out


@dataclass
class AutoencoderParams:
    """Encoder/decoder LSTM stacks plus the affine output projection."""

    enc1: LstmLayerParams  # D -> H
    enc2: LstmLayerParams  # H -> H
    dec1: LstmLayerParams  # H (context) -> H
    dec2: LstmLayerParams  # H -> H
    w_out: np.ndarray      # (D, H)
    b_out: np.ndarray      # (D,)

    def __post_init__(self):
        self.w_out = np.asarray(self.w_out, dtype=np.float64)
        self.b_out = np.asarray(self.b_out, dtype=np.float64)
        h = self.enc1.hidden_size
        d = self.enc1.input_size
        ok = (
            self.enc2.input_size == h
            and all(p.hidden_size == h for p in (self.enc2, self.dec1, self.dec2))
            and self.dec1.input_size == h
            and self.dec2.input_size == h
            and self.w_out.shape == (d, h)
            and self.b_out.shape == (d,)
        )
        if not ok:
            raise ShapeMismatchError("encoder/decoder/projection shapes disagree")

    @property
    def dim(self) -> int:
        return self.enc1.input_size

    @property
    def hidden(self) -> int:
        return self.enc1.hidden_size


def tensor_items(params: AutoencoderParams) -> list[tuple[str, np.ndarray]]:
    """All parameter tensors with stable names, in a fixed order."""
    out = []
    for layer_name in ("enc1", "enc2", "dec1", "dec2"):
        layer = getattr(params, layer_name)
        for field in ("w_x", "w_h", "b"):
            out.append((f"{layer_name}.{field}", getattr(layer, field)))
    out.append(("w_out", params.w_out))
    out.append(("b_out", params.b_out))
    return out


def init_params(dim: int, hidden: int, seed) -> AutoencoderParams:
    """Fresh parameters, each entry uniform in [-1/sqrt(H), +1/sqrt(H)].

    ``seed`` may be an int or a numpy Generator; the draw order is fixed, so
    equal seeds give bit-identical parameters.
    """
    if dim < 1 or hidden < 1:
        raise ValueError(f"dim and hidden must be >= 1, got {dim}, {hidden}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    s = 1.0 / np.sqrt(hidden)

    def layer(d_in: int) -> LstmLayerParams:
        return LstmLayerParams(
            w_x=rng.uniform(-s, s, (4 * hidden, d_in)),
            w_h=rng.uniform(-s, s, (4 * hidden, hidden)),
            b=rng.uniform(-s, s, 4 * hidden),
        )

    return AutoencoderParams(
        enc1=layer(dim),
        enc2=layer(hidden),
        dec1=layer(hidden),
        dec2=layer(hidden),
        w_out=rng.uniform(-s, s, (dim, hidden)),
        b_out=rng.uniform(-s, s, dim),
    )


def lstm_cell_step(x, h, c, p: LstmLayerParams):
    """One LSTM cell update; returns (h_new, c_new)."""
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    hs = p.hidden_size
    if x.shape != (p.input_size,) or h.shape != (hs,) or c.shape != (hs,):
        raise ShapeMismatchError(
            f"cell step shapes x{x.shape}, h{h.shape}, c{c.shape} do not match "
            f"layer (D_in={p.input_size}, H={hs})"
        )
    z = p.w_x @ x + p.w_h @ h + p.b
    i = _sigmoid(z[:hs])
    f = _sigmoid(z[hs : 2 * hs])
    g = np.tanh(z[2 * hs : 3 * hs])
    o = _sigmoid(z[3 * hs :])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


@dataclass
class _LayerCache:
    inputs: np.ndarray  # (N, D_in)
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tc: np.ndarray      # tanh(c)
    h: np.ndarray


def _layer_forward(p: LstmLayerParams, inputs: np.ndarray):
    n = inputs.shape[0]
    hs = p.hidden_size
    zx = inputs @ p.w_x.T + p.b
    i = np.empty((n, hs)); f = np.empty((n, hs))
    g = np.empty((n, hs)); o = np.empty((n, hs))
    c = np.empty((n, hs)); tc = np.empty((n, hs)); hseq = np.empty((n, hs))
    h_prev = np.zeros(hs)
    c_prev = np.zeros(hs)
    for t in range(n):
        z = zx[t] + p.w_h @ h_prev
        i[t] = _sigmoid(z[:hs])
        f[t] = _sigmoid(z[hs : 2 * hs])
        g[t] = np.tanh(z[2 * hs : 3 * hs])
        o[t] = _sigmoid(z[3 * hs :])
        c[t] = f[t] * c_prev + i[t] * g[t]
        tc[t] = np.tanh(c[t])
        hseq[t] = o[t] * tc[t]
        h_prev = hseq[t]
        c_prev = c[t]
    return hseq, _LayerCache(inputs, i, f, g, o, c, tc, hseq)


def _layer_backward(p: LstmLayerParams, cache: _LayerCache, dh_ext: np.ndarray):
    """BPTT through one layer given per-step gradients flowing into h_t.

    Returns (dx, grads): gradients w.r.t. the layer inputs and parameters.
    """
    n, hs = cache.h.shape
    dz_all = np.empty((n, 4 * hs))
    dh_carry = np.zeros(hs)
    dc_carry = np.zeros(hs)
    for t in range(n - 1, -1, -1):
        dh = dh_ext[t] + dh_carry
        do = dh * cache.tc[t]
        dc = dc_carry + dh * cache.o[t] * (1.0 - cache.tc[t] ** 2)
        c_prev = cache.c[t - 1] if t > 0 else 0.0
        dz_all[t, :hs] = dc * cache.g[t] * cache.i[t] * (1.0 - cache.i[t])
        dz_all[t, hs : 2 * hs] = dc * c_prev * cache.f[t] * (1.0 - cache.f[t])
        dz_all[t, 2 * hs : 3 * hs] = dc * cache.i[t] * (1.0 - cache.g[t] ** 2)
        dz_all[t, 3 * hs :] = do * cache.o[t] * (1.0 - cache.o[t])
        dz = dz_all[t]
        dh_carry = p.w_h.T @ dz
        dc_carry = dc * cache.f[t]
    h_prev = np.vstack([np.zeros((1, hs)), cache.h[:-1]])
    grads = LstmLayerParams(
        w_x=dz_all.T @ cache.inputs,
        w_h=dz_all.T @ h_prev,
        b=dz_all.sum(axis=0),
    )
    return dz_all @ p.w_x, grads


def _check_sequence(seq, dim: int) -> np.ndarray:
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ShapeMismatchError(f"expected an N x D sequence, got shape {arr.shape}")
    if arr.shape[1] != dim:
        raise ShapeMismatchError(f"sequence dim {arr.shape[1]} != model dim {dim}")
    return arr


def encode(seq, params: AutoencoderParams) -> np.ndarray:
    """Context vector: encoder layer-2 hidden state after the last step."""
    arr = _check_sequence(seq, params.dim)
    h1, _ = _layer_forward(params.enc1, arr)
    h2, _ = _layer_forward(params.enc2, h1)
    return h2[-1]


def decode(context, n_steps: int, params: AutoencoderParams) -> np.ndarray:
    """Decoder emissions (N x D) from a context fed identically to every step.

    The emission at step t is the reconstruction of input row N - t + 1.
    """
    context = np.asarray(context, dtype=np.float64)
    if context.shape != (params.hidden,):
        raise ShapeMismatchError(
            f"context shape {context.shape} != (H={params.hidden},)"
        )
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    inputs = np.tile(context, (n_steps, 1))
    h1, _ = _layer_forward(params.dec1, inputs)
    h2, _ = _layer_forward(params.dec2, h1)
    return h2 @ params.w_out.T + params.b_out


def reconstruct(seq, params: AutoencoderParams) -> np.ndarray:
    """Full autoencoder pass; emissions are in reverse target order."""
    arr = _check_sequence(seq, params.dim)
    return decode(encode(arr, params), arr.shape[0], params)


def clip_loss(seq, emissions) -> float:
    """Summed squared error pairing emission step t with input row N - t + 1.

    No normalization; this is the training objective for one clip.
    """
    f = np.asarray(seq, dtype=np.float64)
    y = np.asarray(emissions, dtype=np.float64)
    if f.shape != y.shape or f.ndim != 2:
        raise ShapeMismatchError(f"shapes {f.shape} and {y.shape} must match, 2-D")
    return float(((y - f[::-1]) ** 2).sum())


def anomaly_score(seq, params: AutoencoderParams) -> float:
    """Per-element mean squared reconstruction error; higher = more anomalous."""
    arr = _check_sequence(seq, params.dim)
    return clip_loss(arr, reconstruct(arr, params)) / arr.size


def loss_and_gradients(seq, params: AutoencoderParams):
    """Clip loss and exact BPTT gradients for every parameter tensor."""
    arr = _check_sequence(seq, params.dim)
    n = arr.shape[0]

    h1e, cache_e1 = _layer_forward(params.enc1, arr)
    h2e, cache_e2 = _layer_forward(params.enc2, h1e)
    context = h2e[-1]
    dec_inputs = np.tile(context, (n, 1))
    h1d, cache_d1 = _layer_forward(params.dec1, dec_inputs)
    h2d, cache_d2 = _layer_forward(params.dec2, h1d)
    emissions = h2d @ params.w_out.T + params.b_out

    resid = emissions - arr[::-1]
    loss = float((resid ** 2).sum())

    dy = 2.0 * resid
    g_w_out = dy.T @ h2d
    g_b_out = dy.sum(axis=0)

    dh2d = dy @ params.w_out
    dh1d, g_dec2 = _layer_backward(params.dec2, cache_d2, dh2d)
    dctx_steps, g_dec1 = _layer_backward(params.dec1, cache_d1, dh1d)
    # The same context feeds every decoder step, so its gradient fans in.
    dcontext = dctx_steps.sum(axis=0)

    dh2e = np.zeros_like(h2e)
    dh2e[-1] = dcontext
    dh1e, g_enc2 = _layer_backward(params.enc2, cache_e2, dh2e)
    _, g_enc1 = _layer_backward(params.enc1, cache_e1, dh1e)

    grads = AutoencoderParams(g_enc1, g_enc2, g_dec1, g_dec2, g_w_out, g_b_out)
    return loss, grads


def backward(seq, params: AutoencoderParams) -> AutoencoderParams:
    """Gradients of :func:`clip_loss` w.r.t. every parameter tensor."""
    return loss_and_gradients(seq, params)[1]


@dataclass
class TrainConfig:
    """Autoencoder training settings (plain SGD)."""

    epochs: int
    hidden: int = 128
    learning_rate: float = 0.01
    batch_size: int = 4
    seed: int = 0
    grad_clip: float | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.hidden < 1:
            raise ValueError(f"hidden must be >= 1, got {self.hidden}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError(f"grad_clip must be positive, got {self.grad_clip}")


@dataclass
class TrainResult:
    params: AutoencoderParams
    epoch_losses: list[float]


def train(sequences, cfg: TrainConfig) -> TrainResult:
    """Train on feature sequences with SGD over mean per-batch gradients.

    The epoch loss trace records the mean clip loss over all sequences, as
    computed during that epoch. Initialization and shuffling derive from
    ``cfg.seed`` through separate streams, so the whole trajectory is a
    deterministic function of (data, config).
    """
    seqs = [np.asarray(s, dtype=np.float64) for s in sequences]
    if not seqs:
        raise ValueError("need at least one training sequence")
    dim = seqs[0].shape[1]
    for s in seqs:
        _check_sequence(s, dim)

    params = init_params(dim, cfg.hidden, np.random.default_rng([cfg.seed, 0]))
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    names_and_tensors = tensor_items(params)

    epoch_losses = []
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(seqs))
        total = 0.0
        for lo in range(0, len(seqs), cfg.batch_size):
            batch = [seqs[i] for i in order[lo : lo + cfg.batch_size]]
            acc = None
            for s in batch:
                loss, grads = loss_and_gradients(s, params)
                total += loss
                items = tensor_items(grads)
                if acc is None:
                    acc = [arr for _, arr in items]
                else:
                    for slot, (_, arr) in zip(acc, items):
                        slot += arr
            scale = 1.0 / len(batch)
            if cfg.grad_clip is not None:
                norm = np.sqrt(sum(float(((a * scale) ** 2).sum()) for a in acc))
                if norm > cfg.grad_clip:
                    scale *= cfg.grad_clip / norm
            for (_, tensor), g in zip(names_and_tensors, acc):
                tensor -= cfg.learning_rate * scale * g
        epoch_loss = total / len(seqs)
        epoch_losses.append(epoch_loss)
        if not np.isfinite(epoch_loss):
            raise DivergenceError(
                f"epoch {epoch + 1} loss is non-finite ({epoch_loss}); "
                f"reduce the learning rate or enable grad_clip"
            )
    return TrainResult(params, epoch_losses)


def save_checkpoint(path, params: AutoencoderParams) -> None:
    """Write parameters to an .npz container; exact at 64-bit precision."""
    arrays = {name.replace(".", "__"): arr for name, arr in tensor_items(params)}
    arrays["meta"] = np.array([1, params.dim, params.hidden], dtype=np.int64)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> AutoencoderParams:
    """Read parameters written by :func:`save_checkpoint`."""
    with np.load(path) as data:
        meta = data["meta"]
        if meta[0] != 1:
            raise ValueError(f"unknown checkpoint format version {meta[0]}")

        def layer(name: str) -> LstmLayerParams:
            return LstmLayerParams(
                w_x=data[f"{name}__w_x"], w_h=data[f"{name}__w_h"], b=data[f"{name}__b"]
            )

        params = AutoencoderParams(
            enc1=layer("enc1"),
            enc2=layer("enc2"),
            dec1=layer("dec1"),
            dec2=layer("dec2"),
            w_out=data["w_out"],
            b_out=data["b_out"],
        )
    if (params.dim, params.hidden) != (int(meta[1]), int(meta[2])):
        raise ValueError("checkpoint metadata does not match tensor shapes")
    for name, arr in tensor_items(params):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"checkpoint tensor {name} has non-finite values")
    return params
