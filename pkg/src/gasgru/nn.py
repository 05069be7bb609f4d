"""External attention -> stacked GRU -> GeLU decoder, with exact gradients.

Shapes: a batch of feature sequences is ``(B, T, D)``. The attention block
holds ``S`` learned key/value memory rows; each time step attends over the
slots with a softmax, so its output is a convex combination of value rows.
Three GRU layers of width ``H`` follow (dropout between blocks), and the last
hidden state ``h_T`` of the top layer feeds a two-layer GeLU decoder producing
one logit per class.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
from scipy.special import erf

from . import _kernels
from ._rng import make_rng

N_CLASSES = 3


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class ModelDims:
    n_inputs: int
    slots: int = 500
    hidden: int = 8
    layers: int = 3
    decoder_hidden: int = 16
    n_classes: int = N_CLASSES

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise ValueError(f"{f.name} must be >= 1")


@dataclass
class ExternalAttentionParams:
    M_k: np.ndarray  # (S, D) keys
    M_v: np.ndarray  # (S, D) values


@dataclass
class GruLayerParams:
    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    def stacked(self):
        W = np.concatenate([self.W_z, self.W_r, self.W_h], axis=0)
        U = np.stack([self.U_z, self.U_r, self.U_h])
        b = np.concatenate([self.b_z, self.b_r, self.b_h])
        return W, U, b


@dataclass
class DecoderParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray


@dataclass
class ModelParams:
    attention: ExternalAttentionParams
    gru_layers: list[GruLayerParams]
    decoder: DecoderParams
    dropout_rate: float = 0.2
    version: int = field(default=0, compare=False)

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = [("attention.M_k", self.attention.M_k), ("attention.M_v", self.attention.M_v)]
        for i, layer in enumerate(self.gru_layers):
            out += [(f"gru.{i}.{f.name}", getattr(layer, f.name)) for f in fields(layer)]
        out += [(f"decoder.{f.name}", getattr(self.decoder, f.name)) for f in fields(self.decoder)]
        return out

    @property
    def dims(self) -> ModelDims:
        S, D = self.attention.M_k.shape
        return ModelDims(
            n_inputs=D,
            slots=S,
            hidden=self.gru_layers[0].U_z.shape[0],
            layers=len(self.gru_layers),
            decoder_hidden=self.decoder.W1.shape[0],
            n_classes=self.decoder.W2.shape[0],
        )

    def map(self, fn) -> "ModelParams":
        """New ModelParams with ``fn`` applied to every array."""
        return ModelParams(
            ExternalAttentionParams(fn(self.attention.M_k), fn(self.attention.M_v)),
            [GruLayerParams(*(fn(getattr(l, f.name)) for f in fields(l))) for l in self.gru_layers],
            DecoderParams(*(fn(getattr(self.decoder, f.name)) for f in fields(self.decoder))),
            self.dropout_rate,
        )

    def copy(self) -> "ModelParams":
        return self.map(np.copy)

    def zeros_like(self) -> "ModelParams":
        return self.map(np.zeros_like)

    def validate(self) -> None:
        dims = self.dims
        expect = _shapes(dims)
        for name, arr in self.named_arrays():
            if arr.shape != expect[name]:
                raise ShapeError(f"{name}: shape {arr.shape}, expected {expect[name]}")
            if not np.isfinite(arr).all():
                raise ValueError(f"{name}: non-finite parameter")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")


Gradients = ModelParams


def _shapes(dims: ModelDims) -> dict[str, tuple[int, ...]]:
    S, D, H = dims.slots, dims.n_inputs, dims.hidden
    out = {"attention.M_k": (S, D), "attention.M_v": (S, D)}
    for i in range(dims.layers):
        d_in = D if i == 0 else H
        for g in "zrh":
            out[f"gru.{i}.W_{g}"] = (H, d_in)
        for g in "zrh":
            out[f"gru.{i}.U_{g}"] = (H, H)
        for g in "zrh":
            out[f"gru.{i}.b_{g}"] = (H,)
    out["decoder.W1"] = (dims.decoder_hidden, H)
    out["decoder.b1"] = (dims.decoder_hidden,)
    out["decoder.W2"] = (dims.n_classes, dims.decoder_hidden)
    out["decoder.b2"] = (dims.n_classes,)
    return out


def init_params(dims: ModelDims, seed: int = 0, dropout_rate: float = 0.2, stream: int = 0) -> ModelParams:
    """Glorot-uniform matrices, zero biases. Memories use fans (S, D).

    ``stream`` selects an independent draw for the same seed (one per CV fold).
    """
    rng = make_rng(seed, 20, stream)
    arrays = {}
    for name, shape in _shapes(dims).items():
        if len(shape) == 1:
            arrays[name] = np.zeros(shape)
        else:
            a = np.sqrt(6.0 / (shape[0] + shape[1]))
            arrays[name] = rng.uniform(-a, a, size=shape)
    return params_from_arrays(dims, arrays, dropout_rate)


def params_from_arrays(dims: ModelDims, arrays: dict[str, np.ndarray], dropout_rate: float) -> ModelParams:
    get = lambda k: np.array(arrays[k], dtype=np.float64)  # noqa: E731
    layers = [
        GruLayerParams(*(get(f"gru.{i}.{f.name}") for f in fields(GruLayerParams))) for i in range(dims.layers)
    ]
    p = ModelParams(
        ExternalAttentionParams(get("attention.M_k"), get("attention.M_v")),
        layers,
        DecoderParams(get("decoder.W1"), get("decoder.b1"), get("decoder.W2"), get("decoder.b2")),
        float(dropout_rate),
    )
    p.validate()
    return p


# ---------------------------------------------------------------------------
# elementwise pieces

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x):
    """Exact GeLU ``x * Phi(x)`` and its derivative ``Phi(x) + x * phi(x)``."""
    x = np.asarray(x, dtype=np.float64)
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return x * cdf, cdf + x * pdf


def softmax(logits, axis=-1):
    z = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(logits, label: int) -> tuple[float, np.ndarray]:
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - logits.max()
    log_norm = np.log(np.exp(z).sum())
    loss = float(log_norm - z[label])
    d = np.exp(z - log_norm)
    d[label] -= 1.0
    return loss, d


def batch_cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and its gradient w.r.t. each row of logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    B = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    losses = log_norm - z[np.arange(B), labels]
    d = np.exp(z - log_norm[:, None])
    d[np.arange(B), labels] -= 1.0
    return float(losses.mean()), d / B


# ---------------------------------------------------------------------------
# attention and GRU on their own (batch-first)


def external_attention_forward(X, p: ExternalAttentionParams) -> np.ndarray:
    """``softmax(X M_k^T) M_v`` for ``X`` of shape (T, D) or (B, T, D)."""
    X = np.asarray(X, dtype=np.float64)
    batched = X.ndim == 3
    Xb = X if batched else X[None]
    _check_finite(Xb)
    Y, _, _ = _kernels.attention_forward(Xb, np.ascontiguousarray(p.M_k.T), np.ascontiguousarray(p.M_v))
    return Y if batched else Y[0]


def attention_weights(X, p: ExternalAttentionParams) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    Xb = X if X.ndim == 3 else X[None]
    kt = np.ascontiguousarray(p.M_k.T)
    _, rmax, rsum = _kernels.attention_forward(Xb, kt, np.ascontiguousarray(p.M_v))
    A = _kernels.attention_weights(Xb, kt, rmax, rsum)
    return A if X.ndim == 3 else A[0]


def gru_layer_forward(X, p: GruLayerParams, h0=None) -> np.ndarray:
    """Hidden sequence (T, H) (or (B, T, H) for batched input)."""
    X = np.asarray(X, dtype=np.float64)
    Xb = X if X.ndim == 3 else X[None]
    _check_finite(Xb)
    W, U, b = p.stacked()
    H = U.shape[1]
    h0 = np.zeros((Xb.shape[0], H)) if h0 is None else np.broadcast_to(np.asarray(h0, float), (Xb.shape[0], H)).copy()
    pre = np.matmul(W, Xb.transpose(1, 2, 0)) + b[:, None]  # (T, 3H, B)
    hs, _, _, _ = _kernels.gru_forward(pre, U, np.ascontiguousarray(h0.T))
    hs = hs.transpose(2, 0, 1)
    return hs if X.ndim == 3 else hs[0]


def _check_finite(X):
    if not np.isfinite(X).all():
        raise ValueError("non-finite input features")


# ---------------------------------------------------------------------------
# full model


@dataclass
class ForwardCache:
    X: np.ndarray
    keys_t: np.ndarray
    values_t: np.ndarray
    rmax: np.ndarray
    rsum: np.ndarray
    masks: list  # dropout masks (None when inactive): attention out, between GRU layers, decoder
    layer_inputs: list  # time-major (T, F, B), like everything inside the GRU stack
    layer_states: list  # (hs, zs, rs, cs) per GRU layer
    h_last: np.ndarray
    pre_dec: np.ndarray
    dec_act: np.ndarray
    dec_act_grad: np.ndarray
    dec_out: np.ndarray
    params: ModelParams
    version: int


def _dropout(x, rate: float, train: bool, rng):
    if not train or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("train mode with dropout needs an rng")
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep) / keep
    return x * mask, mask


def forward_batch(X, params: ModelParams, train: bool = False, rng: np.random.Generator | None = None):
    """Logits (B, n_classes) for a (B, T, D) batch, plus the cache for backward."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ShapeError(f"expected a (B, T, D) batch, got shape {X.shape}")
    D = params.attention.M_k.shape[1]
    if X.shape[2] != D:
        raise ShapeError(f"input has {X.shape[2]} feature channels, model expects {D}")
    _check_finite(X)
    rate = params.dropout_rate
    kt = np.ascontiguousarray(params.attention.M_k.T)
    vt = np.ascontiguousarray(params.attention.M_v.T)
    Y, rmax, rsum = _kernels.attention_forward(X, kt, np.ascontiguousarray(params.attention.M_v))
    masks = []
    h, m = _dropout(Y, rate, train, rng)
    masks.append(m)
    inputs, states = [], []
    B = X.shape[0]
    h = np.ascontiguousarray(h.transpose(1, 2, 0))  # (T, D, B): batch innermost for the recurrence
    for i, layer in enumerate(params.gru_layers):
        W, U, b = layer.stacked()
        inputs.append(h)
        st = _kernels.gru_forward(np.matmul(W, h) + b[:, None], U, np.zeros((U.shape[1], B)))
        states.append(st)
        h = st[0]
        if i < len(params.gru_layers) - 1:
            h, m = _dropout(h, rate, train, rng)
            masks.append(m)
    h_last = h[-1].T
    dec = params.decoder
    pre = h_last @ dec.W1.T + dec.b1
    act, act_grad = gelu(pre)
    out, m = _dropout(act, rate, train, rng)
    masks.append(m)
    logits = out @ dec.W2.T + dec.b2
    cache = ForwardCache(X, kt, vt, rmax, rsum, masks, inputs, states, h_last, pre, act, act_grad, out,
                         params, params.version)
    return logits, cache


def backward_batch(cache: ForwardCache, dlogits) -> Gradients:
    p = cache.params
    if cache.version != p.version:
        raise ValueError("stale cache: parameters changed since the forward pass")
    dlogits = np.asarray(dlogits, dtype=np.float64)
    B = cache.X.shape[0]
    if dlogits.shape != (B, p.decoder.W2.shape[0]):
        raise ShapeError(f"dlogits shape {dlogits.shape} does not match batch logits ({B}, {p.decoder.W2.shape[0]})")
    grads = p.zeros_like()
    dec, gdec = p.decoder, grads.decoder
    gdec.W2[:] = dlogits.T @ cache.dec_out
    gdec.b2[:] = dlogits.sum(axis=0)
    d = dlogits @ dec.W2
    if cache.masks[-1] is not None:
        d = d * cache.masks[-1]
    d = d * cache.dec_act_grad
    gdec.W1[:] = d.T @ cache.h_last
    gdec.b1[:] = d.sum(axis=0)
    d_last = d @ dec.W1

    n_layers = len(p.gru_layers)
    T = cache.X.shape[1]
    H = p.gru_layers[0].U_z.shape[0]
    dH = np.zeros((T, H, B))
    dH[-1] = d_last.T
    for i in range(n_layers - 1, -1, -1):
        layer, glayer = p.gru_layers[i], grads.gru_layers[i]
        W, U, _ = layer.stacked()
        hs, zs, rs, cs = cache.layer_states[i]
        dpre, dW, dU, _ = _kernels.gru_backward(U, np.zeros((H, B)), hs, zs, rs, cs, dH, cache.layer_inputs[i])
        db = dpre.sum(axis=(0, 2))
        glayer.W_z[:], glayer.W_r[:], glayer.W_h[:] = dW[:H], dW[H:2 * H], dW[2 * H:]
        glayer.U_z[:], glayer.U_r[:], glayer.U_h[:] = dU
        glayer.b_z[:], glayer.b_r[:], glayer.b_h[:] = db[:H], db[H:2 * H], db[2 * H:]
        dH = np.matmul(W.T, dpre)
        mask = cache.masks[i]  # masks[i] sits below layer i; masks[0] is on the attention output
        if i > 0 and mask is not None:
            dH = dH * mask
    dY = np.ascontiguousarray(dH.transpose(2, 0, 1))
    if cache.masks[0] is not None:
        dY *= cache.masks[0]
    dkt, dvt = _kernels.attention_backward(cache.X, cache.keys_t, cache.values_t, cache.rmax, cache.rsum, dY)
    grads.attention.M_k[:] = dkt.T
    grads.attention.M_v[:] = dvt.T
    return grads


def model_forward(features, params: ModelParams, mode: str = "eval", rng=None):
    """Single sequence (T, D) -> (logits of length n_classes, cache)."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"expected a (T, D) sequence, got shape {X.shape}")
    logits, cache = forward_batch(X[None], params, mode == "train", rng)
    return logits[0], cache


def model_backward(cache: ForwardCache, dlogits) -> Gradients:
    dlogits = np.asarray(dlogits, dtype=np.float64)
    return backward_batch(cache, dlogits[None] if dlogits.ndim == 1 else dlogits)


def predict_logits(params: ModelParams, X, batch_size: int = 64) -> np.ndarray:
    """Eval-mode logits for a (N, T, D) stack of sequences."""
    X = np.asarray(X, dtype=np.float64)
    out = [forward_batch(X[i:i + batch_size], params)[0] for i in range(0, X.shape[0], batch_size)]
    return np.concatenate(out, axis=0)


def argmax_first(scores) -> np.ndarray:
    """Row-wise argmax; ties resolve to the smallest index (numpy's rule)."""
    return np.argmax(np.asarray(scores), axis=-1)


# ---------------------------------------------------------------------------
# finite-difference checking


def loss_and_gradients(params: ModelParams, X, labels):
    logits, cache = forward_batch(X, params, train=False)
    loss, dlogits = batch_cross_entropy(logits, labels)
    return loss, backward_batch(cache, dlogits)


def numerical_gradients(params: ModelParams, X, labels, eps: float = 1e-5) -> Gradients:
    """Central differences of the eval-mode mean loss, one parameter entry at a time."""
    grads = params.zeros_like()
    for (_, arr), (_, g) in zip(params.named_arrays(), grads.named_arrays()):
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            lp = batch_cross_entropy(forward_batch(X, params)[0], labels)[0]
            flat[j] = orig - eps
            lm = batch_cross_entropy(forward_batch(X, params)[0], labels)[0]
            flat[j] = orig
            gflat[j] = (lp - lm) / (2 * eps)
    return grads


def relative_error(analytic, numeric, floor: float = 1e-6) -> np.ndarray:
    """Entrywise |a - n| / max(|a|, |n|, floor)."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def gradient_check(params: ModelParams, X, labels, eps: float = 1e-5, floor: float = 1e-6) -> dict[str, float]:
    """Max relative error per parameter array (dropout must be off)."""
    _, analytic = loss_and_gradients(params, X, labels)
    numeric = numerical_gradients(params, X, labels, eps)
    return {
        name: float(relative_error(a, n, floor).max())
        for (name, a), (_, n) in zip(analytic.named_arrays(), numeric.named_arrays())
    }
