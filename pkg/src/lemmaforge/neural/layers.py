"""Dense layers with hand-written backward passes.

Every forward function returns its output together with a cache; the matching
``*_backward`` consumes that cache, accumulates parameter gradients into
``Parameter.grad`` and returns gradients for the inputs. All arrays are
float64. Functions accept an optional leading batch axis.
"""

from __future__ import annotations

import numpy as np


class Parameter:
    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _as2d(x):
    return x.reshape(-1, x.shape[-1])


# -- embedding -------------------------------------------------------------

def embed(table: Parameter, ids) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.value.shape[0]):
        raise IndexError(f"symbol id out of range [0, {table.value.shape[0]})")
    return table.value[ids]


def embed_backward(table: Parameter, ids, dout) -> None:
    ids = np.asarray(ids, dtype=np.int64)
    np.add.at(table.grad, ids.reshape(-1), _as2d(dout))


# -- linear ----------------------------------------------------------------

def linear(W: Parameter, b: Parameter | None, x) -> np.ndarray:
    """y = x W^T + b with W of shape (out, in)."""
    if x.shape[-1] != W.value.shape[1]:
        raise ValueError(f"linear: input dim {x.shape[-1]} != {W.value.shape[1]}")
    y = x @ W.value.T
    if b is not None:
        y = y + b.value
    return y


def linear_backward(W: Parameter, b: Parameter | None, x, dy) -> np.ndarray:
    W.grad += _as2d(dy).T @ _as2d(x)
    if b is not None:
        b.grad += _as2d(dy).sum(axis=0)
    return dy @ W.value


# -- LSTM ------------------------------------------------------------------

class LstmCell:
    """LSTM cell with gate order (input, forget, cell, output)."""

    def __init__(self, name: str, input_dim: int, hidden_dim: int, rng: np.random.Generator | None = None,
                 forget_bias: float = 1.0):
        if input_dim <= 0 or hidden_dim <= 0:
            raise ValueError("LSTM dimensions must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        fan_in = input_dim + hidden_dim
        H = hidden_dim
        self.Wx = Parameter(f"{name}.Wx", uniform_init(rng, (4 * H, input_dim), fan_in))
        self.Wh = Parameter(f"{name}.Wh", uniform_init(rng, (4 * H, H), fan_in))
        bias = np.zeros(4 * H)
        bias[H:2 * H] = forget_bias
        self.b = Parameter(f"{name}.b", bias)

    def parameters(self):
        return [self.Wx, self.Wh, self.b]


def lstm_step(cell: LstmCell, x, h, c):
    """One LSTM step. Returns (h', c', cache)."""
    if x.shape[-1] != cell.input_dim or h.shape[-1] != cell.hidden_dim or c.shape[-1] != cell.hidden_dim:
        raise ValueError("lstm_step: shape mismatch with cell dimensions")
    H = cell.hidden_dim
    z = x @ cell.Wx.value.T + h @ cell.Wh.value.T + cell.b.value
    i = sigmoid(z[..., :H])
    f = sigmoid(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = sigmoid(z[..., 3 * H:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (x, h, c, i, f, g, o, tc)


def lstm_step_backward(cell: LstmCell, cache, dh_new, dc_new):
    """Returns (dx, dh, dc) and accumulates cell parameter gradients."""
    x, h, c, i, f, g, o, tc = cache
    dc_total = dc_new + dh_new * o * (1.0 - tc * tc)
    dz = np.concatenate([
        dc_total * g * i * (1.0 - i),
        dc_total * c * f * (1.0 - f),
        dc_total * i * (1.0 - g * g),
        dh_new * tc * o * (1.0 - o),
    ], axis=-1)
    dz2 = _as2d(dz)
    cell.Wx.grad += dz2.T @ _as2d(x)
    cell.Wh.grad += dz2.T @ _as2d(h)
    cell.b.grad += dz2.sum(axis=0)
    return dz @ cell.Wx.value, dz @ cell.Wh.value, dc_total * f


def lstm_sequence(cell: LstmCell, xs, mask=None, reverse: bool = False):
    """Run a cell over xs of shape (B, T, D) with zero initial state.

    Positions where ``mask`` is False leave the state untouched, so padded
    sequences reproduce their unpadded result. Returns (outputs (B, T, H),
    cache); outputs[:, t] is the state after reading position t.
    """
    B, T, _ = xs.shape
    if mask is None:
        mask = np.ones((B, T), dtype=bool)
    H = cell.hidden_dim
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    outs = np.zeros((B, T, H))
    steps = []
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        h_new, c_new, cache = lstm_step(cell, xs[:, t], h, c)
        m = mask[:, t, None]
        h = np.where(m, h_new, h)
        c = np.where(m, c_new, c)
        outs[:, t] = h
        steps.append((t, m, cache))
    return outs, (cell, steps, xs.shape)


def lstm_sequence_backward(seq_cache, douts, dh_last=None, dc_last=None):
    """Backward through ``lstm_sequence``; douts has shape (B, T, H).

    ``dh_last``/``dc_last`` are gradients w.r.t. the state after the final
    step. Returns dxs.
    """
    cell, steps, xs_shape = seq_cache
    B = xs_shape[0]
    H = cell.hidden_dim
    dh = np.zeros((B, H)) if dh_last is None else dh_last.copy()
    dc = np.zeros((B, H)) if dc_last is None else dc_last.copy()
    dxs = np.zeros(xs_shape)
    for t, m, cache in reversed(steps):
        dh = dh + douts[:, t]
        dh_new = np.where(m, dh, 0.0)
        dc_new = np.where(m, dc, 0.0)
        dx, dh_prev, dc_prev = lstm_step_backward(cell, cache, dh_new, dc_new)
        dxs[:, t] = dx
        dh = np.where(m, dh_prev, dh)
        dc = np.where(m, dc_prev, dc)
    return dxs


def bilstm_encode(fwd: LstmCell, bwd: LstmCell, xs, mask=None):
    """Bidirectional encoding. xs is (T, D) or (B, T, D).

    Output position t is [forward state after x_1..x_t ; backward state after
    x_T..x_t]. Returns (outputs, cache).
    """
    single = xs.ndim == 2
    if single:
        xs = xs[None]
        if mask is not None:
            mask = np.asarray(mask)[None]
    if xs.shape[1] == 0:
        raise ValueError("bilstm_encode: empty sequence")
    out_f, cache_f = lstm_sequence(fwd, xs, mask, reverse=False)
    out_b, cache_b = lstm_sequence(bwd, xs, mask, reverse=True)
    out = np.concatenate([out_f, out_b], axis=-1)
    if single:
        out = out[0]
    return out, (single, cache_f, cache_b, fwd.hidden_dim)


def bilstm_backward(cache, dout):
    single, cache_f, cache_b, H = cache
    if single:
        dout = dout[None]
    dxs = lstm_sequence_backward(cache_f, dout[..., :H]) + lstm_sequence_backward(cache_b, dout[..., H:])
    return dxs[0] if single else dxs


def final_states(memory, lengths, hidden_dim):
    """[forward final ; backward final] for each batch row of a BiLSTM output."""
    B = memory.shape[0]
    last = np.asarray(lengths) - 1
    return np.concatenate([memory[np.arange(B), last, :hidden_dim], memory[:, 0, hidden_dim:]], axis=-1)


def final_states_backward(dfinal, memory_shape, lengths, hidden_dim):
    dmem = np.zeros(memory_shape)
    B = memory_shape[0]
    last = np.asarray(lengths) - 1
    dmem[np.arange(B), last, :hidden_dim] += dfinal[:, :hidden_dim]
    dmem[:, 0, hidden_dim:] += dfinal[:, hidden_dim:]
    return dmem


# -- attention -------------------------------------------------------------

def soft_dot_attention(query, memory, W_a: Parameter | None = None, mask=None):
    """Bilinear attention: score_t = memory_t . (W_a query).

    query is (Hq,) or (B, Hq); memory is (T, Hm) or (B, T, Hm). With
    ``W_a=None`` the plain dot product is used. Returns (context, weights,
    cache).
    """
    if memory.shape[-2] == 0:
        raise ValueError("attention over empty memory")
    proj = query @ W_a.value.T if W_a is not None else query
    if proj.shape[-1] != memory.shape[-1]:
        raise ValueError("attention: query/memory dimension mismatch")
    scores = np.einsum("...th,...h->...t", memory, proj)
    if mask is not None:
        scores = np.where(mask, scores, -np.inf)
    scores = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    weights = e / e.sum(axis=-1, keepdims=True)
    context = np.einsum("...t,...th->...h", weights, memory)
    return context, weights, (query, memory, W_a, proj, weights)


def attention_backward(cache, dcontext):
    """Returns (dquery, dmemory); accumulates into W_a.grad."""
    query, memory, W_a, proj, weights = cache
    dw = np.einsum("...h,...th->...t", dcontext, memory)
    dscores = weights * (dw - (weights * dw).sum(axis=-1, keepdims=True))
    dmemory = weights[..., :, None] * dcontext[..., None, :] + dscores[..., :, None] * proj[..., None, :]
    dproj = np.einsum("...t,...th->...h", dscores, memory)
    if W_a is None:
        return dproj, dmemory
    W_a.grad += _as2d(dproj).T @ _as2d(query)
    return dproj @ W_a.value, dmemory


# -- loss ------------------------------------------------------------------

def log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_xent(logits, target):
    """Cross-entropy of softmax(logits) against integer target(s).

    Accepts a single logit vector with a scalar target, or (N, V) logits with
    N targets. Returns (loss, dloss/dlogits); for batches the loss is a
    per-row vector.
    """
    logp = log_softmax(logits)
    if logits.ndim == 1:
        loss = -logp[target]
        grad = np.exp(logp)
        grad[target] -= 1.0
        return float(loss), grad
    target = np.asarray(target)
    rows = np.arange(logits.shape[0])
    loss = -logp[rows, target]
    grad = np.exp(logp)
    grad[rows, target] -= 1.0
    return loss, grad


# -- dropout ---------------------------------------------------------------

def dropout_mask(rng: np.random.Generator | None, shape, rate: float):
    """Inverted-dropout scaling mask, or None when dropout is inactive."""
    if rng is None or rate <= 0.0:
        return None
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep
