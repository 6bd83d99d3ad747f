"""Hankel-operator analysis of truncated filters.

The Hankel matrix of a filter is ``S = (h_{i+j})`` with 1-based ``i, j`` so
the top-left entry is ``h_2``.  The passthrough ``h_0`` is never part of it
(it is carried exactly by the ``h0`` term of every system type).  Taps past
the end of the filter are treated as zero.

For a filter produced by a ``d``-state system, ``S`` has rank at most ``d``
as long as no zero-filled entry is used.  The default size
``floor((L - 1) / 2)`` is the largest square matrix whose entries all come
from the actual taps, see :func:`default_hankel_size`.
"""

from dataclasses import dataclass

import numpy as np

from .eigen import jacobi_eigh
from .errors import NumericalFailureError
from .linsys import Filter


@dataclass(frozen=True)
class HankelSpectrum:
    """Hankel singular values, sorted non-increasing.

    Attributes
    ----------
    sigmas : ndarray
        ``sigma_1 >= sigma_2 >= ... >= 0``.
    source_length : int
        Length ``L`` of the analysed filter.
    """

    sigmas: np.ndarray
    source_length: int

    def __post_init__(self):
        s = np.array(self.sigmas, dtype=float).ravel()
        if not np.all(np.isfinite(s)) or np.any(s < 0):
            raise ValueError("Hankel singular values must be finite and non-negative")
        if np.any(np.diff(s) > 0):
            raise ValueError("Hankel singular values must be non-increasing")
        s.setflags(write=False)
        object.__setattr__(self, "sigmas", s)
        object.__setattr__(self, "source_length", int(self.source_length))

    def __len__(self):
        return self.sigmas.size

    @property
    def size(self):
        return self.sigmas.size

    def sigma(self, n):
        """1-based access, zero past the end."""
        if n < 1:
            raise IndexError("singular values are 1-indexed")
        return float(self.sigmas[n - 1]) if n <= self.sigmas.size else 0.0

    def to_list(self):
        return [float(s) for s in self.sigmas]


def _taps(h):
    return h.taps if isinstance(h, Filter) else np.asarray(h, dtype=float).ravel()


def default_hankel_size(length):
    """Largest ``m`` with every entry of the ``m x m`` matrix inside the filter.

    Entry ``(m, m)`` is ``h_{2m}``, so ``2m <= L - 1``.
    """
    return max(1, (int(length) - 1) // 2)


def hankel_matrix(filt, size=None):
    """Symmetric Hankel matrix ``S[i-1, j-1] = h_{i+j}`` (zero past the end).

    Parameters
    ----------
    filt : Filter or array_like
    size : int, optional
        Matrix dimension ``m``; defaults to :func:`default_hankel_size`.
    """
    h = _taps(filt)
    m = default_hankel_size(h.size) if size is None else int(size)
    if m < 1:
        raise ValueError("Hankel size must be at least 1")
    ext = np.zeros(2 * m + 1)
    n = min(h.size, ext.size)
    ext[:n] = h[:n]
    idx = np.arange(1, m + 1)
    return ext[idx[:, None] + idx[None, :]]


def hankel_spectrum(filt, size=None, full=False):
    """Hankel singular values of a filter.

    Parameters
    ----------
    filt : Filter or array_like
    size : int, optional
        Matrix dimension. Ignored when ``full`` is set.
    full : bool
        Use the ``L x L`` matrix.  Its lower-right triangle is zero-filled,
        which can lift ``sigma_{d+1}`` above zero for an order-``d`` filter.

    Returns
    -------
    HankelSpectrum
    """
    h = _taps(filt)
    m = h.size if full else size
    S = hankel_matrix(h, m)
    w, _ = jacobi_eigh(S)
    sig = np.sort(np.abs(w))[::-1]
    return HankelSpectrum(sig, h.size)


def estimate_order(spectrum, rel_tol=1e-4):
    """Smallest ``d`` with ``sigma_{d+1} <= rel_tol * sigma_1``.

    Returns
    -------
    order : int
    flag : str or None
        ``"no_decay"`` when the threshold is never met (``order`` is then the
        spectrum length) and ``"zero_filter"`` when ``sigma_1 == 0``
        (``order`` is 0).
    """
    if not 0 < rel_tol < 1:
        raise ValueError("rel_tol must lie in (0, 1)")
    s = spectrum.sigmas
    if s.size == 0:
        raise ValueError("empty spectrum")
    if s[0] == 0.0:
        return 0, "zero_filter"
    below = np.nonzero(s <= rel_tol * s[0])[0]
    if below.size == 0:
        return int(s.size), "no_decay"
    return int(below[0]), None


def aak_lower_bound(spectrum, order):
    """Lower bound ``sigma_{d+1}`` on the spectral-norm error of any rank-``d``
    approximant of the Hankel matrix."""
    d = int(order)
    if not 1 <= d < spectrum.size:
        raise ValueError(f"order must satisfy 1 <= d < {spectrum.size}, got {d}")
    return float(spectrum.sigmas[d])


def spectral_norm_sym(S, tol=1e-9, max_iter=10_000):
    """Largest ``|eigenvalue|`` of a symmetric matrix by power iteration on ``S^2``.

    Stops once the residual ``||S^2 v - mu v||`` is below ``tol * mu``: by
    the symmetric residual bound an eigenvalue of ``S^2`` then lies within
    that distance of ``mu``.
    """
    S = np.asarray(S, dtype=float)
    m = S.shape[0]
    if not np.any(S):
        return 0.0
    v = np.random.default_rng(0).standard_normal(m)
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = S @ (S @ v)
        mu = float(v @ w)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        resid = np.linalg.norm(w - mu * v)
        if resid <= tol * mu:
            return float(np.sqrt(mu))
        v = w / nrm
    raise NumericalFailureError("power iteration for the Hankel norm did not converge", max_iter)


def error_hankel_norm(h, hhat, size=None, tol=1e-9, max_iter=10_000):
    """Spectral norm of ``hankel_matrix(h - hhat)``.

    The shorter filter is zero-padded.  ``size`` defaults to the same size
    :func:`hankel_spectrum` uses for the longer filter, so the value is
    directly comparable with :func:`aak_lower_bound`.
    """
    a, b = _taps(h), _taps(hhat)
    L = max(a.size, b.size)
    diff = np.zeros(L)
    diff[:a.size] += a
    diff[:b.size] -= b
    return spectral_norm_sym(hankel_matrix(diff, size), tol, max_iter)
