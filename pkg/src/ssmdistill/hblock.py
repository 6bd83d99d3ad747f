"""Toy Hyena block: short qkv filters, long convolution, gating.

Shapes follow the sequence-major convention: an input ``u`` is ``L x D``.

Single-head operator (``hyena_forward``)::

    y_t = q_t * (h * (k v))_t            (per channel, elementwise)

Multi-head operator (``multihead_forward``): channels are split into ``M``
heads of ``N = D / M`` channels.  For head ``m`` the ``N x N`` outer
products ``z_t[i, j] = k_t[i] v_t[j]`` are each convolved with ``h^m`` and

    y_t[j] = sum_i (h^m * z)_t[i, j] q_t[i],

so a unit-impulse filter gives ``y_t = v_t <k_t, q_t>``.

Both operators run either by FFT convolution (``forward_conv``) or by
stepping modal systems in place of the long filters
(``forward_recurrent``).
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import SystemOverflowError
from .linsys import Filter, ModalSSM, causal_conv, impulse_response


@dataclass(frozen=True)
class HBlockSpec:
    """Block configuration.

    Attributes
    ----------
    width : int
        Number of channels ``D``.
    heads : int
        Number of heads ``M``; must divide ``D``.
    short_filters : ndarray
        Shape ``(3, S)`` (shared by all channels) or ``(3, D, S)``, the FIR
        taps producing ``q``, ``k`` and ``v``.  ``S <= 4``.
    long_filters : sequence
        ``M`` long filters, each a :class:`Filter` or a :class:`ModalSSM`.
        In single-head mode channel ``c`` uses ``long_filters[c // N]``.
    combine : {"concat", "average"}
        How multi-head outputs are composed.
    """

    width: int
    heads: int
    short_filters: np.ndarray
    long_filters: Sequence = field(default_factory=tuple)
    combine: str = "concat"

    def __post_init__(self):
        if self.width < 1 or self.heads < 1 or self.width % self.heads:
            raise ValueError(f"heads ({self.heads}) must divide width ({self.width})")
        sf = np.array(self.short_filters, dtype=float)
        if sf.ndim == 2:
            sf = np.broadcast_to(sf[:, None, :], (3, self.width, sf.shape[-1])).copy()
        if sf.ndim != 3 or sf.shape[:2] != (3, self.width):
            raise ValueError("short_filters must have shape (3, S) or (3, D, S)")
        if not 1 <= sf.shape[-1] <= 4:
            raise ValueError("short filters must have between 1 and 4 taps")
        sf.setflags(write=False)
        object.__setattr__(self, "short_filters", sf)
        lf = tuple(self.long_filters)
        if lf and len(lf) != self.heads:
            raise ValueError(f"expected {self.heads} long filters, got {len(lf)}")
        object.__setattr__(self, "long_filters", lf)
        if self.combine not in ("concat", "average"):
            raise ValueError("combine must be 'concat' or 'average'")

    @property
    def head_dim(self):
        return self.width // self.heads

    def with_long_filters(self, filters):
        return HBlockSpec(self.width, self.heads, self.short_filters, tuple(filters), self.combine)


def default_short_filters(width, seed=0):
    """Random length-3 FIR taps per channel, normalised to unit sum of squares."""
    rng = np.random.default_rng(seed)
    taps = rng.standard_normal((3, width, 3))
    return taps / np.linalg.norm(taps, axis=-1, keepdims=True)


def _as_taps(h, length):
    if isinstance(h, ModalSSM):
        return impulse_response(h, length).taps
    taps = h.taps if isinstance(h, Filter) else np.asarray(h, dtype=float)
    out = np.zeros(length)
    n = min(length, taps.size)
    out[:n] = taps[:n]
    return out


def qkv_project(u, spec):
    """Per-channel causal convolution of ``u`` with the three short filters."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[1] != spec.width:
        raise ValueError(f"input must be L x {spec.width}")
    L = u.shape[0]
    out = []
    for f in spec.short_filters:
        # f: (D, S); convolve along time for every channel
        out.append(causal_conv(f, u.T, L).T)
    return tuple(out)


def hyena_forward(q, k, v, h):
    """``y = q * (h * (k v))`` channel-wise.

    ``h`` is one filter shared by all channels or a sequence of ``D``
    per-channel filters.
    """
    q, k, v = (np.asarray(a, dtype=float) for a in (q, k, v))
    if not q.shape == k.shape == v.shape or q.ndim != 2:
        raise ValueError("q, k, v must share one L x D shape")
    L, D = q.shape
    single = isinstance(h, (Filter, ModalSSM)) or (
        isinstance(h, np.ndarray) and h.ndim == 1
    ) or (isinstance(h, (list, tuple)) and len(h) > 0 and np.isscalar(h[0]))
    if single:
        H = np.broadcast_to(_as_taps(h, L), (D, L))
    else:
        if len(h) != D:
            raise ValueError(f"expected {D} channel filters, got {len(h)}")
        H = np.stack([_as_taps(x, L) for x in h])
    kv = (k * v).T
    return q * causal_conv(H, kv, L).T


def channel_filters(spec):
    """Long filter of every channel in single-head mode."""
    N = spec.head_dim
    return [spec.long_filters[c // N] for c in range(spec.width)]


def _combine(heads, spec):
    if spec.combine == "average":
        return np.mean(heads, axis=0)
    return np.concatenate(heads, axis=1)


def multihead_forward(q, k, v, spec):
    """Multi-head operator with ``N x N`` outer-product state per head."""
    q, k, v = (np.asarray(a, dtype=float) for a in (q, k, v))
    L, D = q.shape
    if D != spec.width:
        raise ValueError(f"inputs have {D} channels, spec has {spec.width}")
    N = spec.head_dim
    heads = []
    for m in range(spec.heads):
        sl = slice(m * N, (m + 1) * N)
        qm, km, vm = q[:, sl], k[:, sl], v[:, sl]
        z = km[:, :, None] * vm[:, None, :]                       # L x N x N
        h = _as_taps(spec.long_filters[m], L)
        conv = causal_conv(h, z.reshape(L, N * N).T, L).T.reshape(L, N, N)
        heads.append(np.einsum("tij,ti->tj", conv, qm))
    return _combine(heads, spec)


def forward_conv(u, spec, mode="single"):
    """Full block in convolutional mode (``mode`` is ``single`` or ``multihead``)."""
    q, k, v = qkv_project(u, spec)
    if mode == "single":
        return hyena_forward(q, k, v, channel_filters(spec))
    if mode == "multihead":
        return multihead_forward(q, k, v, spec)
    raise ValueError("mode must be 'single' or 'multihead'")


def _short_recurrent(u, spec):
    """qkv projections by stepping shift registers over time."""
    L, D = u.shape
    taps = spec.short_filters                       # 3 x D x S
    S = taps.shape[-1]
    reg = np.zeros((D, S))                          # reg[:, j] = u_{t-j}
    out = np.zeros((3, L, D))
    for t in range(L):
        reg[:, 1:] = reg[:, :-1]
        reg[:, 0] = u[t]
        out[:, t, :] = np.einsum("cds,ds->cd", taps, reg)
    return out[0], out[1], out[2]


def _modal_scan(series, ssm):
    """Run ``ssm`` over every row of ``series`` (``n_series x L``) by stepping."""
    n, L = series.shape
    x = np.zeros((n, ssm.d), dtype=complex)
    out = np.zeros((n, L))
    lam, R = ssm.poles, ssm.residues
    for t in range(L):
        ut = series[:, t]
        out[:, t] = (x @ R).real + ssm.h0 * ut
        x = x * lam + ut[:, None]
    if not np.all(np.isfinite(out)):
        bad = ~np.isfinite(out)
        raise SystemOverflowError(int(np.nonzero(bad.any(axis=0))[0][0]))
    return out


def forward_recurrent(u, spec, mode="single"):
    """Block output with every long filter replaced by a stepped modal system."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[1] != spec.width:
        raise ValueError(f"input must be L x {spec.width}")
    if not all(isinstance(f, ModalSSM) for f in spec.long_filters):
        raise TypeError("forward_recurrent needs ModalSSM long filters")
    q, k, v = _short_recurrent(u, spec)
    L, D = u.shape
    N = spec.head_dim
    if mode == "single":
        kv = (k * v).T
        y = np.zeros((D, L))
        for m, ssm in enumerate(spec.long_filters):
            y[m * N:(m + 1) * N] = _modal_scan(kv[m * N:(m + 1) * N], ssm)
        return q * y.T
    if mode != "multihead":
        raise ValueError("mode must be 'single' or 'multihead'")
    heads = []
    for m, ssm in enumerate(spec.long_filters):
        sl = slice(m * N, (m + 1) * N)
        z = k[:, sl][:, :, None] * v[:, sl][:, None, :]
        conv = _modal_scan(z.reshape(L, N * N).T, ssm).T.reshape(L, N, N)
        heads.append(np.einsum("tij,ti->tj", conv, q[:, sl]))
    return _combine(heads, spec)


def channel_error_bound(u, spec, exact, approx, mode="single"):
    """Per-output worst-case discrepancy between two sets of long filters.

    For one channel, ``|dy_t| <= |q_t| ||kv||_2 ||h - hhat||_2`` by
    Cauchy-Schwarz on the convolution sum.  In multi-head mode the bound
    of output ``j`` sums ``|q_t[i]| ||z[:, i, j]||_2`` over ``i``.

    Returns
    -------
    ndarray
        ``L x D`` array of bounds (``L x N`` when heads are averaged).
    """
    q, k, v = qkv_project(u, spec)
    L = q.shape[0]
    N = spec.head_dim
    gaps = [np.linalg.norm(_as_taps(a, L) - _as_taps(b, L)) for a, b in zip(exact, approx)]
    if mode == "single":
        zeta = np.linalg.norm(k * v, axis=0)
        g = np.array([gaps[c // N] for c in range(spec.width)])
        return np.abs(q) * (zeta * g)[None, :]
    heads = []
    for m in range(spec.heads):
        sl = slice(m * N, (m + 1) * N)
        z = k[:, sl][:, :, None] * v[:, sl][:, None, :]
        zn = np.linalg.norm(z, axis=0)                     # N x N
        heads.append(gaps[m] * np.abs(q[:, sl]) @ zn)
    if spec.combine == "average":
        return np.mean(heads, axis=0)
    return np.concatenate(heads, axis=1)
