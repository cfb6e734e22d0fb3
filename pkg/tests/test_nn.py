"""Tensor engine, layers, and optimizer tests."""

from __future__ import annotations

import numpy as np
import pytest

from rltrack.nn import (
    Adam,
    BatchNorm,
    Conv3d,
    Dropout,
    Embedding,
    LayerNorm,
    Linear,
    MultiheadAttention,
    PositionalEncoding,
    Tensor,
    concat,
    dilate3d,
    gather_last,
    no_grad,
    pad3d,
    parameter,
    softmax,
)
from rltrack.errors import ConfigError

from gradcheck import check_gradients


def rng(seed=0):
    return np.random.default_rng(seed)


# --------------------------------------------------------------- tensor ops


def test_linear_identity_weight_is_identity():
    lin = Linear(4, 4, rng(), dtype=np.float64)
    lin.weight.data = np.eye(4)
    lin.bias.data = np.zeros(4)
    x = rng(1).normal(size=(5, 4))
    out = lin(Tensor(x))
    np.testing.assert_allclose(out.data, x, atol=0)


def test_half_norm_squared_gradient_matches_finite_differences():
    # loss = 0.5 * ||W x||^2 -> dL/dW = (W x) x^T
    x = rng(2).normal(size=(4, 1))

    def loss(ts):
        (w,) = ts
        y = w @ Tensor(x)
        return (y * y).sum() * 0.5

    w0 = rng(3).normal(size=(3, 4))
    check_gradients(loss, [w0], rtol=1e-5)


def test_dropout_rate_zero_is_exact_identity():
    d = Dropout(0.0)
    x = Tensor(rng(4).normal(size=(6, 3)))
    out = d(x)
    assert out is x


def test_dropout_eval_mode_identity():
    d = Dropout(0.5, rng(0))
    d.eval()
    x = Tensor(rng(4).normal(size=(6, 3)))
    assert d(x) is x


def test_no_grad_skips_graph():
    w = parameter(np.ones((2, 2)), dtype=np.float64)
    with no_grad():
        y = (Tensor(np.ones((2, 2))) @ w).sum()
    assert y._parents == ()


def test_backward_accumulates_over_reuse():
    x = parameter(np.array([2.0]), dtype=np.float64)
    y = x * x + x * 3.0
    y.sum().backward()
    np.testing.assert_allclose(x.grad, [7.0])


@pytest.mark.parametrize("seed", range(6))
def test_mixed_op_chains_pass_gradcheck(seed):
    r = rng(seed)
    a0 = r.normal(size=(3, 4))
    b0 = r.normal(size=(4, 5))
    c0 = r.normal(size=(5,))

    def loss(ts):
        a, b, c = ts
        y = (a @ b) + c
        z = y.tanh() * y.sigmoid() + (y * y + 1.0).log()
        return (z * z).mean()

    check_gradients(loss, [a0, b0, c0])


def test_getitem_and_concat_gradients():
    r = rng(11)
    a0 = r.normal(size=(6, 3))

    def loss(ts):
        (a,) = ts
        top = a[:3]
        bottom = a[3:]
        joined = concat([top * 2.0, bottom], axis=0)
        return (joined * joined).sum()

    check_gradients(loss, [a0])


def test_gather_last_gradients():
    idx = np.array([[0, 2], [1, 1]])
    a0 = rng(12).normal(size=(2, 4))

    def loss(ts):
        (a,) = ts
        return (gather_last(a, idx) ** 2).sum()

    check_gradients(loss, [a0])


def test_pad_and_dilate_gradients():
    a0 = rng(13).normal(size=(1, 2, 3, 3, 3))

    def loss(ts):
        (a,) = ts
        return (dilate3d(pad3d(a, 1), 2) ** 2).sum()

    check_gradients(loss, [a0])


def test_clip_gradient_masks_outside():
    x = parameter(np.array([-3.0, 0.5, 4.0]), dtype=np.float64)
    y = x.clip(-1.0, 1.0)
    y.sum().backward()
    np.testing.assert_allclose(x.grad, [0.0, 1.0, 0.0])


# ------------------------------------------------------------------- layers


def test_layernorm_moments():
    ln = LayerNorm(16, dtype=np.float64)
    x = Tensor(rng(5).normal(2.0, 3.0, size=(8, 16)))
    out = ln(x).data
    assert np.max(np.abs(out.mean(axis=-1))) <= 1e-10
    assert np.max(np.abs(out.var(axis=-1) - 1.0)) <= 1e-8


def test_layernorm_gradcheck():
    x0 = rng(6).normal(size=(3, 8))
    ln = LayerNorm(8, dtype=np.float64)

    def loss(ts):
        x, gamma, beta = ts
        ln.gamma.data, ln.beta.data = gamma.data, beta.data
        object.__setattr__(ln, "gamma", gamma)
        object.__setattr__(ln, "beta", beta)
        return (ln(x) ** 2).sum()

    check_gradients(loss, [x0, np.ones(8), np.zeros(8)])


def test_batchnorm_standardized_input_passthrough():
    bn = BatchNorm(4, dtype=np.float64)
    x = rng(7).normal(size=(256, 4))
    x = (x - x.mean(axis=0)) / x.std(axis=0)
    out = bn(Tensor(x)).data
    np.testing.assert_allclose(out, x, atol=1e-4)


def test_batchnorm_union_batch_moments():
    bn = BatchNorm(3, dtype=np.float64)
    r = rng(8)
    b1 = r.normal(0.0, 1.0, size=(16, 3))
    b2 = r.normal(4.0, 2.0, size=(16, 3))
    union = np.concatenate([b1, b2], axis=0)
    out = bn(Tensor(union)).data
    # moments used must be those of the full 2B-row union
    expected = (union - union.mean(axis=0)) / np.sqrt(union.var(axis=0) + bn.eps)
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_batchnorm_eval_uses_frozen_stats():
    bn = BatchNorm(2)
    r = rng(9)
    for _ in range(10):
        bn(Tensor(r.normal(1.0, 2.0, size=(64, 2)).astype(np.float32)))
    bn.eval()
    x = Tensor(r.normal(size=(5, 2)).astype(np.float32))
    out1 = bn(x).data
    out2 = bn(x).data
    np.testing.assert_array_equal(out1, out2)


def test_batchnorm_batch_of_one_rejected():
    bn = BatchNorm(3)
    with pytest.raises(ValueError):
        bn(Tensor(np.ones((1, 3), dtype=np.float32)))


def test_batchnorm_gradcheck():
    x0 = rng(10).normal(size=(6, 3))
    bn = BatchNorm(3, dtype=np.float64)

    def loss(ts):
        (x,) = ts
        return (bn(x) ** 2).sum()

    check_gradients(loss, [x0])


def test_attention_single_token_reduces_to_value_chain():
    mha = MultiheadAttention(8, 2, rng(0), dtype=np.float64)
    x = Tensor(rng(1).normal(size=(2, 1, 8)))
    out = mha(x, x, x).data
    expected = mha.wo(mha.wv(x)).data
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_attention_uniform_query_invariant_to_kv_permutation():
    mha = MultiheadAttention(8, 2, rng(2), dtype=np.float64)
    q = Tensor(np.tile(rng(3).normal(size=(1, 1, 8)), (1, 4, 1)))
    kv = rng(4).normal(size=(1, 4, 8))
    perm = kv[:, [2, 0, 3, 1], :]
    out1 = mha(q, Tensor(kv), Tensor(kv)).data
    out2 = mha(q, Tensor(perm), Tensor(perm)).data
    np.testing.assert_allclose(out1, out2, atol=1e-12)


def naive_attention(q, k, v, wq, bq, wk, bk, wv, bv, wo, bo, n_heads):
    """Dense reference implementation, one head at a time."""
    B, S, D = q.shape
    hd = D // n_heads
    qp, kp, vp = q @ wq + bq, k @ wk + bk, v @ wv + bv
    out = np.zeros_like(qp)
    for h in range(n_heads):
        sl = slice(h * hd, (h + 1) * hd)
        qh, kh, vh = qp[..., sl], kp[..., sl], vp[..., sl]
        scores = qh @ kh.transpose(0, 2, 1) / np.sqrt(hd)
        e = np.exp(scores - scores.max(axis=-1, keepdims=True))
        attn = e / e.sum(axis=-1, keepdims=True)
        out[..., sl] = attn @ vh
    return out @ wo + bo


def test_attention_matches_naive_reference():
    mha = MultiheadAttention(8, 2, rng(5), dtype=np.float64)
    x = rng(6).normal(size=(2, 3, 8))
    got = mha(Tensor(x), Tensor(x), Tensor(x)).data
    want = naive_attention(
        x, x, x,
        mha.wq.weight.data, mha.wq.bias.data,
        mha.wk.weight.data, mha.wk.bias.data,
        mha.wv.weight.data, mha.wv.bias.data,
        mha.wo.weight.data, mha.wo.bias.data,
        2,
    )
    np.testing.assert_allclose(got, want, atol=1e-10)


def test_attention_gradcheck():
    mha = MultiheadAttention(4, 2, rng(7), dtype=np.float64)
    x0 = rng(8).normal(size=(1, 3, 4))

    def loss(ts):
        (x,) = ts
        return (mha(x, x, x) ** 2).sum()

    check_gradients(loss, [x0])


def test_conv3d_matches_direct_convolution():
    conv = Conv3d(2, 3, rng(9), ksize=3, stride=2, pad=1, dtype=np.float64)
    x = rng(10).normal(size=(2, 2, 5, 5, 5))
    got = conv(Tensor(x)).data

    xp = np.pad(x, [(0, 0), (0, 0), (1, 1), (1, 1), (1, 1)])
    w, b = conv.weight.data, conv.bias.data
    out = np.zeros((2, 3, 3, 3, 3))
    for bi in range(2):
        for co in range(3):
            for d in range(3):
                for h in range(3):
                    for ww in range(3):
                        patch = xp[bi, :, 2 * d:2 * d + 3, 2 * h:2 * h + 3, 2 * ww:2 * ww + 3]
                        out[bi, co, d, h, ww] = (patch * w[co]).sum() + b[co]
    np.testing.assert_allclose(got, out, atol=1e-10)


def test_conv3d_gradcheck():
    conv = Conv3d(1, 2, rng(11), ksize=3, stride=1, pad=1, dtype=np.float64)
    x0 = rng(12).normal(size=(1, 1, 3, 3, 3))

    def loss(ts):
        (x,) = ts
        return (conv(x) ** 2).sum()

    check_gradients(loss, [x0])


def test_embedding_lookup_and_grad():
    emb = Embedding(5, 3, rng(13), dtype=np.float64)
    idx = np.array([1, 1, 4])
    out = emb(idx)
    np.testing.assert_array_equal(out.data, emb.weight.data[idx])
    out.sum().backward()
    grad = emb.weight.grad
    np.testing.assert_allclose(grad[1], [2.0, 2.0, 2.0])
    np.testing.assert_allclose(grad[4], [1.0, 1.0, 1.0])
    np.testing.assert_allclose(grad[0], [0.0, 0.0, 0.0])


def test_positional_encoding_shape_and_direct_values():
    pe = PositionalEncoding(8, max_len=16, dtype=np.float64)
    assert pe.pe.shape == (16, 8)
    np.testing.assert_allclose(pe.pe[0], [0, 1, 0, 1, 0, 1, 0, 1], atol=1e-12)
    x = Tensor(np.zeros((2, 4, 8)))
    np.testing.assert_allclose(pe(x).data[0], pe.pe[:4])


def test_softmax_rows_sum_to_one():
    x = Tensor(rng(14).normal(size=(5, 7)))
    s = softmax(x, axis=-1).data
    np.testing.assert_allclose(s.sum(axis=-1), np.ones(5), atol=1e-12)


def test_mha_dim_head_mismatch_raises():
    with pytest.raises(ConfigError):
        MultiheadAttention(10, 4, rng(15))


def test_shape_mismatch_reports_both_shapes():
    lin = Linear(4, 2, rng(16))
    with pytest.raises(ValueError) as err:
        lin(Tensor(np.ones((3, 5), dtype=np.float32)))
    msg = str(err.value)
    assert "5" in msg and "4" in msg


# ---------------------------------------------------------------- optimizer


def test_adam_zero_gradients_leave_parameters_unchanged():
    p = parameter(np.array([1.0, 2.0]), dtype=np.float64)
    opt = Adam([p], lr=0.1)
    before = p.data.copy()
    p.grad = np.zeros_like(p.data)
    opt.step()
    np.testing.assert_array_equal(p.data, before)
    p.grad = None
    opt.step()
    np.testing.assert_array_equal(p.data, before)


def test_adam_descends_quadratic():
    p = parameter(np.array([5.0]), dtype=np.float64)
    opt = Adam([p], lr=0.1)
    for _ in range(500):
        opt.zero_grad()
        loss = (p * p).sum()
        loss.backward()
        opt.step()
    assert abs(p.data[0]) < 1e-2


def test_forward_deterministic_given_seed():
    def build():
        d = Dropout(0.5, np.random.default_rng(42))
        return d(Tensor(np.ones((4, 4), dtype=np.float32))).data

    np.testing.assert_array_equal(build(), build())
