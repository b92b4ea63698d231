"""Parameterized building blocks: embedding, FC, LSTM/GRU cells, attention."""

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import ShapeError
from .tensor import (Tensor, add, add_bias, concat, gather_rows, log_softmax_rows,
                     matmul, mul, pick_nll, repeat_rows, reshape, scale, sigmoid,
                     softmax_rows, tanh, weighted_region_sum)


def glorot_uniform(rng, n_in, n_out, dtype=np.float32):
    """Uniform in +-sqrt(6/(fan_in+fan_out)); biases elsewhere start at zero."""
    limit = math.sqrt(6.0 / (n_in + n_out))
    w = rng.uniform(-limit, limit, size=(n_in, n_out)).astype(dtype)
    return Tensor(w, requires_grad=True)


def zeros_param(shape, dtype=np.float32):
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


class _ParamStruct:
    """Mixin giving dataclass parameter bundles a stable (name, tensor) walk."""

    def named(self, prefix):
        for f in fields(self):
            yield f"{prefix}/{f.name}", getattr(self, f.name)


@dataclass
class LinearParams(_ParamStruct):
    w: Tensor
    b: Tensor

    @classmethod
    def init(cls, rng, n_in, n_out, dtype=np.float32):
        return cls(glorot_uniform(rng, n_in, n_out, dtype), zeros_param((n_out,), dtype))


@dataclass
class EmbeddingParams(_ParamStruct):
    weight: Tensor  # V x E

    @classmethod
    def init(cls, rng, vocab_size, embed_size, dtype=np.float32):
        return cls(glorot_uniform(rng, vocab_size, embed_size, dtype))


@dataclass
class LstmParams(_ParamStruct):
    """Gate weights over the concatenated [x; h] input, shapes (I+H)xH / (H,)."""

    w_i: Tensor
    b_i: Tensor
    w_f: Tensor
    b_f: Tensor
    w_o: Tensor
    b_o: Tensor
    w_g: Tensor
    b_g: Tensor

    @classmethod
    def init(cls, rng, input_size, hidden_size, dtype=np.float32):
        n_in = input_size + hidden_size
        mk = lambda: glorot_uniform(rng, n_in, hidden_size, dtype)
        bk = lambda: zeros_param((hidden_size,), dtype)
        return cls(mk(), bk(), mk(), bk(), mk(), bk(), mk(), bk())


@dataclass
class GruParams(_ParamStruct):
    w_z: Tensor
    b_z: Tensor
    w_r: Tensor
    b_r: Tensor
    w_n: Tensor
    b_n: Tensor

    @classmethod
    def init(cls, rng, input_size, hidden_size, dtype=np.float32):
        n_in = input_size + hidden_size
        mk = lambda: glorot_uniform(rng, n_in, hidden_size, dtype)
        bk = lambda: zeros_param((hidden_size,), dtype)
        return cls(mk(), bk(), mk(), bk(), mk(), bk())


@dataclass
class AttentionParams(_ParamStruct):
    w_v: Tensor  # D_a x A, region projection (applied once per image)
    w_h: Tensor  # H x A, hidden projection
    w_score: Tensor  # A x 1

    @classmethod
    def init(cls, rng, region_dim, hidden_size, attention_size, dtype=np.float32):
        return cls(glorot_uniform(rng, region_dim, attention_size, dtype),
                   glorot_uniform(rng, hidden_size, attention_size, dtype),
                   glorot_uniform(rng, attention_size, 1, dtype))


@dataclass
class LstmState:
    h: Tensor
    c: Tensor

    @classmethod
    def zeros(cls, batch, hidden, dtype=np.float32):
        return cls(Tensor(np.zeros((batch, hidden), dtype=dtype)),
                   Tensor(np.zeros((batch, hidden), dtype=dtype)))


def linear(x, p, tape=None):
    return add_bias(matmul(x, p.w, tape), p.b, tape)


def embed(p, ids, tape=None):
    return gather_rows(p.weight, ids, tape)


def lstm_cell(x, state, p, tape=None):
    """i,f,o = sigmoid gates, g = tanh candidate; c' = f*c + i*g; h' = o*tanh(c')."""
    xh = concat([x, state.h], axis=1, tape=tape)
    i = sigmoid(add_bias(matmul(xh, p.w_i, tape), p.b_i, tape), tape)
    f = sigmoid(add_bias(matmul(xh, p.w_f, tape), p.b_f, tape), tape)
    o = sigmoid(add_bias(matmul(xh, p.w_o, tape), p.b_o, tape), tape)
    g = tanh(add_bias(matmul(xh, p.w_g, tape), p.b_g, tape), tape)
    c2 = add(mul(f, state.c, tape), mul(i, g, tape), tape)
    h2 = mul(o, tanh(c2, tape), tape)
    return LstmState(h2, c2)


def gru_cell(x, h, p, tape=None):
    """z,r = sigmoid gates; n = tanh over [x; r*h]; h' = (1-z)*n + z*h."""
    xh = concat([x, h], axis=1, tape=tape)
    z = sigmoid(add_bias(matmul(xh, p.w_z, tape), p.b_z, tape), tape)
    r = sigmoid(add_bias(matmul(xh, p.w_r, tape), p.b_r, tape), tape)
    xrh = concat([x, mul(r, h, tape)], axis=1, tape=tape)
    n = tanh(add_bias(matmul(xrh, p.w_n, tape), p.b_n, tape), tape)
    return add(mul(scale(z, -1.0, 1.0, tape), n, tape), mul(z, h, tape), tape)


def project_regions(regions, p, tape=None):
    """Precompute regions @ w_v for attend(); regions is a B x R x D_a tensor."""
    b, r, d = regions.shape
    flat = reshape(regions, (b * r, d), tape)
    return matmul(flat, p.w_v, tape)  # (B*R) x A


def attend(regions, projected, h, p, tape=None):
    """Additive attention: score_r = w . tanh(projected_r + W_h h).

    Returns (weights B x R, context B x D_a) with context the weighted sum of
    the raw region vectors.
    """
    if regions.data.ndim != 3:
        raise ShapeError(f"attend: regions must be B x R x D_a, got {regions.shape}")
    b, r, _ = regions.shape
    if r == 0:
        raise ShapeError("attend: zero regions")
    hs = matmul(h, p.w_h, tape)  # B x A
    act = tanh(add(projected, repeat_rows(hs, r, tape), tape), tape)
    scores = reshape(matmul(act, p.w_score, tape), (b, r), tape)
    weights = softmax_rows(scores, tape)
    context = weighted_region_sum(weights, regions, tape)
    return weights, context


def classify(features, p, tape=None):
    """Log-probabilities over the vocabulary (rows sum to 1 once exponentiated)."""
    if p.w.shape[1] < 2:
        raise ShapeError("classify: vocabulary must have at least 2 entries")
    return log_softmax_rows(linear(features, p, tape), tape)


def cross_entropy(logprobs, targets, mask=None, denom=None, tape=None):
    """Mean NLL of target ids under logprob rows; mask selects real positions."""
    b = logprobs.shape[0]
    if mask is None:
        mask = np.ones(b, dtype=logprobs.dtype)
    if denom is None:
        denom = float(np.asarray(mask).sum())
    return pick_nll(logprobs, targets, mask, denom, tape)
