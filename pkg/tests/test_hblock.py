import numpy as np
import pytest

from ssmdistill.distill import DistillConfig, optimize
from ssmdistill.hblock import (
    HBlockSpec,
    channel_error_bound,
    default_short_filters,
    forward_conv,
    forward_recurrent,
    hyena_forward,
    multihead_forward,
    qkv_project,
)
from ssmdistill.linsys import Filter, ModalSSM, impulse_response

from conftest import random_modal

IDENT = np.array([[1.0, 0, 0]] * 3)


def toeplitz(h, L):
    T = np.zeros((L, L))
    for i in range(L):
        for j in range(i + 1):
            if i - j < len(h):
                T[i, j] = h[i - j]
    return T


def test_spec_validation():
    with pytest.raises(ValueError):
        HBlockSpec(6, 4, IDENT)
    with pytest.raises(ValueError):
        HBlockSpec(4, 2, np.ones((3, 6)))
    with pytest.raises(ValueError):
        HBlockSpec(4, 2, IDENT, [Filter([1.0])])
    assert HBlockSpec(8, 4, IDENT).head_dim == 2


# --- qkv ---------------------------------------------------------------------------


def test_qkv_identity(rng):
    u = rng.standard_normal((10, 3))
    q, k, v = qkv_project(u, HBlockSpec(3, 1, IDENT))
    for a in (q, k, v):
        np.testing.assert_allclose(a, u, atol=1e-15)


def test_qkv_delay_on_k(rng):
    u = rng.standard_normal((10, 2))
    taps = np.array([[1.0, 0, 0], [0, 1.0, 0], [1.0, 0, 0]])
    _, k, _ = qkv_project(u, HBlockSpec(2, 1, taps))
    np.testing.assert_allclose(k[1:], u[:-1], atol=1e-15)
    np.testing.assert_allclose(k[0], 0, atol=1e-15)


def test_qkv_direct_oracle(rng):
    L, D = 32, 4
    u = rng.standard_normal((L, D))
    taps = rng.standard_normal((3, D, 3))
    outs = qkv_project(u, HBlockSpec(D, 1, taps))
    for c in range(3):
        ref = np.zeros((L, D))
        for t in range(L):
            for s in range(3):
                if t - s >= 0:
                    ref[t] += taps[c, :, s] * u[t - s]
        assert np.max(np.abs(outs[c] - ref)) < 1e-12


# --- single head --------------------------------------------------------------------


def test_hyena_unit_impulse(rng):
    q, k, v = rng.standard_normal((3, 12, 3))
    np.testing.assert_allclose(hyena_forward(q, k, v, Filter([1.0])), q * k * v, atol=1e-14)


def test_hyena_ones_gates(rng):
    v = rng.standard_normal((20, 2))
    h = rng.standard_normal(20)
    ones = np.ones_like(v)
    y = hyena_forward(ones, ones, v, Filter(h))
    np.testing.assert_allclose(y, np.stack([toeplitz(h, 20) @ v[:, c] for c in range(2)], 1), atol=1e-12)


def test_hyena_decomposition_identity():
    rng = np.random.default_rng(3)
    for L in (1, 5, 16, 32):
        q, k, v = rng.standard_normal((3, L, 2))
        h = rng.standard_normal(L)
        y = hyena_forward(q, k, v, Filter(h))
        for c in range(2):
            ref = np.diag(q[:, c]) @ toeplitz(h, L) @ np.diag(k[:, c]) @ v[:, c]
            assert np.max(np.abs(y[:, c] - ref)) < 1e-12


# --- multi head -----------------------------------------------------------------------


def loop_oracle(q, k, v, filters, M):
    L, D = q.shape
    N = D // M
    y = np.zeros((L, D))
    for m in range(M):
        h = filters[m]
        for t in range(L):
            for j in range(N):
                acc = 0.0
                for i in range(N):
                    s = sum(h[t - tau] * k[tau, m * N + i] * v[tau, m * N + j]
                            for tau in range(t + 1) if t - tau < len(h))
                    acc += s * q[t, m * N + i]
                y[t, m * N + j] = acc
    return y


def test_multihead_loop_oracle(rng):
    L, D, M = 8, 4, 2
    q, k, v = rng.standard_normal((3, L, D))
    filters = [rng.standard_normal(L) for _ in range(M)]
    spec = HBlockSpec(D, M, IDENT, [Filter(f) for f in filters])
    assert np.max(np.abs(multihead_forward(q, k, v, spec) - loop_oracle(q, k, v, filters, M))) < 1e-12


def test_multihead_single_channel_heads(rng):
    L, D = 16, 3
    q, k, v = rng.standard_normal((3, L, D))
    filters = [Filter(rng.standard_normal(L)) for _ in range(D)]
    spec = HBlockSpec(D, D, IDENT, filters)
    np.testing.assert_allclose(multihead_forward(q, k, v, spec), hyena_forward(q, k, v, filters), atol=1e-12)


def test_multihead_attention_identity(rng):
    L, D, M = 10, 6, 2
    q, k, v = rng.standard_normal((3, L, D))
    spec = HBlockSpec(D, M, IDENT, [Filter([1.0])] * M)
    y = multihead_forward(q, k, v, spec)
    for m in range(M):
        sl = slice(3 * m, 3 * m + 3)
        expect = v[:, sl] * np.sum(k[:, sl] * q[:, sl], axis=1, keepdims=True)
        np.testing.assert_allclose(y[:, sl], expect, atol=1e-12)


def test_multihead_average_flag(rng):
    L, D, M = 8, 4, 2
    q, k, v = rng.standard_normal((3, L, D))
    filters = [Filter(rng.standard_normal(L)) for _ in range(M)]
    cat = multihead_forward(q, k, v, HBlockSpec(D, M, IDENT, filters))
    avg = multihead_forward(q, k, v, HBlockSpec(D, M, IDENT, filters, combine="average"))
    np.testing.assert_allclose(avg, 0.5 * (cat[:, :2] + cat[:, 2:]), atol=1e-14)


def test_head_locality(rng):
    L, D, M = 12, 6, 2
    q, k, v = rng.standard_normal((3, L, D))
    spec = HBlockSpec(D, M, IDENT, [Filter(rng.standard_normal(L)) for _ in range(M)])
    y = multihead_forward(q, k, v, spec)
    perm = np.arange(D)
    perm[3:] = [5, 3, 4]
    yp = multihead_forward(q[:, perm], k[:, perm], v[:, perm], spec)
    np.testing.assert_allclose(yp, y[:, perm], atol=1e-12)


@pytest.mark.parametrize("mode", ["single", "multihead"])
def test_causality(rng, mode):
    L, D = 24, 4
    spec = HBlockSpec(D, 2, default_short_filters(D), [Filter(rng.standard_normal(L)) for _ in range(2)])
    u = rng.standard_normal((L, D))
    y = forward_conv(u, spec, mode)
    for tau in (1, 7, 20):
        u2 = u.copy()
        u2[tau:] = 0.0
        np.testing.assert_allclose(forward_conv(u2, spec, mode)[:tau], y[:tau], atol=1e-12)


# --- recurrent mode -----------------------------------------------------------------------


@pytest.mark.parametrize("M", [1, 2, 4])
@pytest.mark.parametrize("mode", ["single", "multihead"])
def test_recurrent_matches_conv_exact(rng, M, mode):
    L, D = 64, 8
    ssms = [random_modal(rng, 2) for _ in range(M)]
    spec = HBlockSpec(D, M, default_short_filters(D, seed=M), ssms)
    conv_spec = spec.with_long_filters([impulse_response(s, L) for s in ssms])
    u = rng.standard_normal((L, D))
    diff = forward_recurrent(u, spec, mode) - forward_conv(u, conv_spec, mode)
    assert np.max(np.abs(diff)) < 1e-7


def test_recurrent_zero_filters(rng):
    L, D = 16, 4
    zero = ModalSSM([0.5, -0.5], [0.0, 0.0], 0.0)
    spec = HBlockSpec(D, 2, default_short_filters(D), [zero, zero])
    assert np.all(forward_recurrent(rng.standard_normal((L, D)), spec) == 0)


def test_recurrent_requires_modal():
    spec = HBlockSpec(2, 1, IDENT, [Filter([1.0])])
    with pytest.raises(TypeError):
        forward_recurrent(np.ones((4, 2)), spec)


@pytest.mark.parametrize("mode", ["single", "multihead"])
def test_distilled_discrepancy_within_bound(rng, mode):
    L, D, M = 64, 4, 2
    t = np.arange(L)
    targets = [Filter(np.exp(-a * t / L) * np.cos(w * t)) for a, w in ((3.0, 0.4), (6.0, 1.3))]
    ssms = [optimize(h, DistillConfig(order=4, iterations=300, learning_rate=1e-2))[0] for h in targets]
    spec_exact = HBlockSpec(D, M, default_short_filters(D), targets)
    spec_ssm = spec_exact.with_long_filters(ssms)
    u = rng.standard_normal((L, D))
    gap = np.abs(forward_recurrent(u, spec_ssm, mode) - forward_conv(u, spec_exact, mode))
    bound = channel_error_bound(u, spec_exact, targets, ssms, mode)
    assert np.all(gap <= bound + 1e-9)
    assert gap.max() > 0
