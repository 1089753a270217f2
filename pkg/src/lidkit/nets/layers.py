"""Differentiable layer primitives: forward returns (output, cache), the
matching backward consumes the cache and upstream gradients.

Shape conventions: sequence activations are (B, T, C); key/pad masks are
(B, T) with 1.0 on valid frames.
"""

import numpy as np
from scipy.special import expit as sigmoid

BN_EPS = 1e-10
LN_EPS = 1e-5
ATTN_NEG = 1e30


# ---------------------------------------------------------------- linear

def linear_forward(x, w, b):
    return x @ w + b, (x, w)


def linear_backward(cache, dy):
    x, w = cache
    flat_x = x.reshape(-1, x.shape[-1])
    flat_dy = dy.reshape(-1, dy.shape[-1])
    dw = flat_x.T @ flat_dy
    db = flat_dy.sum(axis=0)
    dx = dy @ w.T
    return dx, dw, db


# ------------------------------------------------------------------ LSTM

def lstm_forward(x, w, u, b):
    """Standard LSTM recurrence over the full padded length.

    x: (B, T, D); w: (D, 4H); u: (H, 4H); b: (4H,). Gate order [i, f, g, o].
    Returns the full hidden sequence (B, T, H).
    """
    bsz, t_max, _ = x.shape
    h_dim = u.shape[0]
    gi = np.empty((bsz, t_max, h_dim))
    gf = np.empty_like(gi)
    gg = np.empty_like(gi)
    go = np.empty_like(gi)
    cs = np.empty_like(gi)
    tc = np.empty_like(gi)
    hs = np.empty_like(gi)

    h_prev = np.zeros((bsz, h_dim))
    c_prev = np.zeros((bsz, h_dim))
    for t in range(t_max):
        a = x[:, t] @ w + h_prev @ u + b
        i = sigmoid(a[:, :h_dim])
        f = sigmoid(a[:, h_dim : 2 * h_dim])
        g = np.tanh(a[:, 2 * h_dim : 3 * h_dim])
        o = sigmoid(a[:, 3 * h_dim :])
        c = f * c_prev + i * g
        tch = np.tanh(c)
        h = o * tch
        gi[:, t], gf[:, t], gg[:, t], go[:, t] = i, f, g, o
        cs[:, t], tc[:, t], hs[:, t] = c, tch, h
        h_prev, c_prev = h, c
    cache = (x, w, u, gi, gf, gg, go, cs, tc, hs)
    return hs, cache


def lstm_backward(cache, dh_seq):
    """Backprop through time given gradients w.r.t. every hidden output."""
    x, w, u, gi, gf, gg, go, cs, tc, hs = cache
    bsz, t_max, h_dim = hs.shape

    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    du = np.zeros_like(u)
    db = np.zeros(4 * h_dim)
    dh_next = np.zeros((bsz, h_dim))
    dc_next = np.zeros((bsz, h_dim))
    for t in reversed(range(t_max)):
        i, f, g, o = gi[:, t], gf[:, t], gg[:, t], go[:, t]
        dh = dh_seq[:, t] + dh_next
        do = dh * tc[:, t]
        dc = dh * o * (1.0 - tc[:, t] ** 2) + dc_next
        di = dc * g
        dg = dc * i
        c_prev = cs[:, t - 1] if t > 0 else np.zeros((bsz, h_dim))
        df = dc * c_prev
        dc_next = dc * f

        da = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), dg * (1 - g**2), do * o * (1 - o)],
            axis=1,
        )
        h_prev = hs[:, t - 1] if t > 0 else np.zeros((bsz, h_dim))
        dw += x[:, t].T @ da
        du += h_prev.T @ da
        db += da.sum(axis=0)
        dx[:, t] = da @ w.T
        dh_next = da @ u.T
    return dx, dw, du, db


def reverse_valid(x, lengths):
    """Reverse each sequence within its valid range; pads stay zero."""
    out = np.zeros_like(x)
    for i, n in enumerate(lengths):
        out[i, :n] = x[i, :n][::-1]
    return out


def reverse_valid_backward(dy, lengths):
    # Reversal is its own inverse; pad gradients are dropped.
    return reverse_valid(dy, lengths)


# ------------------------------------------------------------ convolution

def conv1d_forward(x, w, b):
    """Temporal conv, kernel 3, stride 1, zero same-padding.

    x: (B, T, Cin); w: (3, Cin, Cout); b: (Cout,).
    """
    xp = np.pad(x, ((0, 0), (1, 1), (0, 0)))
    y = xp[:, :-2] @ w[0] + xp[:, 1:-1] @ w[1] + xp[:, 2:] @ w[2] + b
    return y, (xp, w)


def conv1d_backward(cache, dy):
    xp, w = cache
    dw = np.stack(
        [
            np.einsum("btc,btk->ck", xp[:, :-2], dy),
            np.einsum("btc,btk->ck", xp[:, 1:-1], dy),
            np.einsum("btc,btk->ck", xp[:, 2:], dy),
        ]
    )
    db = dy.sum(axis=(0, 1))
    dxp = np.zeros_like(xp)
    dxp[:, :-2] += dy @ w[0].T
    dxp[:, 1:-1] += dy @ w[1].T
    dxp[:, 2:] += dy @ w[2].T
    return dxp[:, 1:-1], dw, db


# ------------------------------------------------------------- batch norm

def batchnorm_forward(x, mask, gamma, beta, running_mean, running_var,
                      train, momentum=0.9):
    """Per-channel normalization over the valid (batch x time) positions.

    Training mode uses batch statistics of masked frames and returns updated
    running averages; eval mode normalizes with the running averages.
    """
    m3 = mask[..., None]
    if train:
        n = float(mask.sum())
        mean = (x * m3).sum(axis=(0, 1)) / n
        var = (((x - mean) ** 2) * m3).sum(axis=(0, 1)) / n
        new_rm = momentum * running_mean + (1.0 - momentum) * mean
        new_rv = momentum * running_var + (1.0 - momentum) * var
    else:
        n = 0.0
        mean, var = running_mean, running_var
        new_rm, new_rv = running_mean, running_var
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean) * inv
    y = gamma * xhat + beta
    cache = (xhat, inv, gamma, m3, train, n)
    return y, (new_rm, new_rv), cache


def batchnorm_backward(cache, dy):
    xhat, inv, gamma, m3, train, n = cache
    dgamma = (dy * xhat).sum(axis=(0, 1))
    dbeta = dy.sum(axis=(0, 1))
    dxhat = dy * gamma
    if not train:
        return dxhat * inv, dgamma, dbeta
    # Mean/variance were computed over the masked set; the direct path exists
    # everywhere, the statistics paths feed back only into valid positions.
    s1 = dxhat.sum(axis=(0, 1))
    s2 = (dxhat * xhat).sum(axis=(0, 1))
    dx = inv * (dxhat - m3 * (s1 + xhat * s2) / n)
    return dx, dgamma, dbeta


# -------------------------------------------------------------- layer norm

def layernorm_forward(x, gamma, beta):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    y = gamma * xhat + beta
    return y, (xhat, inv, gamma)


def layernorm_backward(cache, dy):
    xhat, inv, gamma = cache
    dxhat = dy * gamma
    dgamma = (dy * xhat).reshape(-1, dy.shape[-1]).sum(axis=0)
    dbeta = dy.reshape(-1, dy.shape[-1]).sum(axis=0)
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dgamma, dbeta


# ---------------------------------------------------------- self-attention

def mhsa_forward(x, key_mask, wqkv, bqkv, wo, bo, n_heads):
    """Padding-masked multi-head self-attention.

    Pad keys receive an additive -1e30 before softmax, so their attention
    weight underflows to exactly zero.
    """
    bsz, t, d = x.shape
    hd = d // n_heads
    qkv = x @ wqkv + bqkv
    q, k, v = np.split(qkv, 3, axis=2)
    q = q.reshape(bsz, t, n_heads, hd).transpose(0, 2, 1, 3)
    k = k.reshape(bsz, t, n_heads, hd).transpose(0, 2, 1, 3)
    v = v.reshape(bsz, t, n_heads, hd).transpose(0, 2, 1, 3)

    scores = q @ k.transpose(0, 1, 3, 2) / np.sqrt(hd)
    scores = scores - (1.0 - key_mask)[:, None, None, :] * ATTN_NEG
    scores = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    attn = e / e.sum(axis=-1, keepdims=True)

    ctx = attn @ v
    merged = ctx.transpose(0, 2, 1, 3).reshape(bsz, t, d)
    out = merged @ wo + bo
    cache = (x, q, k, v, attn, merged, wqkv, wo, n_heads)
    return out, cache


def mhsa_backward(cache, dout):
    x, q, k, v, attn, merged, wqkv, wo, n_heads = cache
    bsz, t, d = x.shape
    hd = d // n_heads

    flat_m = merged.reshape(-1, d)
    flat_do = dout.reshape(-1, d)
    dwo = flat_m.T @ flat_do
    dbo = flat_do.sum(axis=0)
    dmerged = dout @ wo.T
    dctx = dmerged.reshape(bsz, t, n_heads, hd).transpose(0, 2, 1, 3)

    dattn = dctx @ v.transpose(0, 1, 3, 2)
    dv = attn.transpose(0, 1, 3, 2) @ dctx
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dscores = dscores / np.sqrt(hd)
    dq = dscores @ k
    dk = dscores.transpose(0, 1, 3, 2) @ q

    def merge_heads(a):
        return a.transpose(0, 2, 1, 3).reshape(bsz, t, d)

    dqkv = np.concatenate([merge_heads(dq), merge_heads(dk), merge_heads(dv)], axis=2)
    flat_x = x.reshape(-1, d)
    dwqkv = flat_x.T @ dqkv.reshape(-1, 3 * d)
    dbqkv = dqkv.reshape(-1, 3 * d).sum(axis=0)
    dx = dqkv @ wqkv.T
    return dx, dwqkv, dbqkv, dwo, dbo


# ----------------------------------------------------------------- misc

def relu_forward(x):
    return np.maximum(0.0, x), x > 0


def relu_backward(cache, dy):
    return dy * cache


def dropout_forward(x, p, train, rng):
    """Inverted dropout; identity outside training or when p == 0."""
    if not train or p <= 0.0:
        return x, None
    keep = (rng.uniform(size=x.shape) >= p) / (1.0 - p)
    return x * keep, keep


def dropout_backward(cache, dy):
    return dy if cache is None else dy * cache


def masked_mean_forward(x, lengths):
    """Mean over the first lengths[i] frames of each sequence."""
    bsz, t, d = x.shape
    mask = (np.arange(t)[None, :] < np.asarray(lengths)[:, None]).astype(np.float64)
    pooled = (x * mask[..., None]).sum(axis=1) / np.asarray(lengths)[:, None]
    return pooled, (mask, np.asarray(lengths), t)


def masked_mean_backward(cache, dpooled):
    mask, lengths, t = cache
    dx = mask[..., None] * (dpooled[:, None, :] / lengths[:, None, None])
    return dx


def mask_frames(x, lengths):
    """Zero out frames at and beyond each sequence's valid length."""
    t = x.shape[1]
    mask = (np.arange(t)[None, :] < np.asarray(lengths)[:, None]).astype(np.float64)
    return x * mask[..., None], mask


def sinusoidal_positions(t_max, d_model):
    """Fixed sinusoidal positional code, sin on even dims, cos on odd."""
    pos = np.arange(t_max)[:, None].astype(np.float64)
    i = np.arange(d_model)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d_model)
    pe = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return pe
