"""Dense eigensolvers and polynomial helpers.

Two solvers live here:

* :func:`eig_dense` -- eigenvalues of a general real matrix through
  Householder reduction to upper Hessenberg form followed by implicitly
  double-shifted (Francis) QR sweeps.
* :func:`jacobi_eigh` -- eigen-decomposition of a real symmetric matrix by
  cyclic Jacobi rotations.  Rotations are applied in round-robin order so
  that each round touches disjoint index pairs and can be vectorised; the
  order is fixed, hence results are deterministic.
"""

import numpy as np

from .errors import NumericalFailureError

EIG_CAP = 512


def _house(x):
    """Householder vector ``v`` and ``beta`` with ``(I - beta v v^T) x = alpha e_1``."""
    v = np.array(x, dtype=float)
    nrm = np.sqrt(v @ v)
    if nrm == 0.0:
        return v, 0.0
    alpha = -nrm if v[0] >= 0 else nrm
    v[0] -= alpha
    vv = v @ v
    if vv == 0.0:
        return v, 0.0
    return v, 2.0 / vv


def hessenberg(a):
    """Reduce a square matrix to upper Hessenberg form (similarity transform)."""
    h = np.array(a, dtype=float, copy=True)
    n = h.shape[0]
    for k in range(n - 2):
        v, beta = _house(h[k + 1:, k])
        if beta == 0.0:
            continue
        h[k + 1:, k:] -= beta * np.outer(v, v @ h[k + 1:, k:])
        h[:, k + 1:] -= beta * np.outer(h[:, k + 1:] @ v, v)
        h[k + 2:, k] = 0.0
    return h


def _eig2x2(a, b, c, d):
    """Eigenvalues of [[a, b], [c, d]]."""
    p = 0.5 * (a + d)
    det = a * d - b * c
    disc = p * p - det
    if disc >= 0:
        s = np.sqrt(disc)
        big = p + s if p >= 0 else p - s
        # other root from the product to avoid cancellation
        small = det / big if big != 0 else p - s
        return complex(big), complex(small)
    s = np.sqrt(-disc)
    return complex(p, s), complex(p, -s)


def eig_dense(a, tol=1e-12, max_iter_factor=100):
    """Eigenvalues of a real square matrix.

    Parameters
    ----------
    a : (d, d) array_like
        Real matrix, ``d <= 512``.
    tol : float
        A subdiagonal entry is treated as zero once it falls below
        ``tol * ||A||_F`` (or below machine precision relative to its
        diagonal neighbours).
    max_iter_factor : int
        The total number of QR sweeps is capped at ``max_iter_factor * d``.

    Returns
    -------
    ndarray of complex, shape (d,)
        Eigenvalues in deflation order (not sorted).
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("eig_dense expects a square matrix")
    n = a.shape[0]
    if n > EIG_CAP:
        raise ValueError(f"matrix dimension {n} exceeds the eigensolver cap {EIG_CAP}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    if n == 0:
        return np.zeros(0, dtype=complex)
    if n == 1:
        return np.array([complex(a[0, 0])])

    h = hessenberg(a)
    anorm = np.linalg.norm(a)
    small = tol * anorm
    eps = np.finfo(float).eps
    eigs = []
    hi = n - 1
    its = 0
    total = 0
    max_total = max_iter_factor * n
    while hi >= 0:
        # find the start of the active unreduced block
        lo = hi
        while lo > 0:
            s = abs(h[lo - 1, lo - 1]) + abs(h[lo, lo])
            if abs(h[lo, lo - 1]) <= max(small, eps * s):
                h[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            eigs.append(complex(h[hi, hi]))
            hi -= 1
            its = 0
            continue
        if lo == hi - 1:
            eigs.extend(_eig2x2(h[hi - 1, hi - 1], h[hi - 1, hi], h[hi, hi - 1], h[hi, hi]))
            hi -= 2
            its = 0
            continue
        total += 1
        its += 1
        if total > max_total:
            raise NumericalFailureError("Hessenberg QR iteration did not converge", total)
        _francis_step(h, lo, hi, exceptional=(its % 10 == 0))
    return np.array(eigs[::-1], dtype=complex)


def _francis_step(h, lo, hi, exceptional=False):
    """One implicit double-shift QR sweep on the block ``h[lo:hi+1, lo:hi+1]``."""
    if exceptional:
        s = abs(h[hi, hi - 1]) + abs(h[hi - 1, hi - 2])
        h11 = 0.75 * s + h[hi, hi]
        h12 = -0.4375 * s
        tr = 2.0 * h11
        det = h11 * h11 - h12 * s
    else:
        tr = h[hi - 1, hi - 1] + h[hi, hi]
        det = h[hi - 1, hi - 1] * h[hi, hi] - h[hi - 1, hi] * h[hi, hi - 1]
    x = h[lo, lo] * h[lo, lo] + h[lo, lo + 1] * h[lo + 1, lo] - tr * h[lo, lo] + det
    y = h[lo + 1, lo] * (h[lo, lo] + h[lo + 1, lo + 1] - tr)
    z = h[lo + 1, lo] * h[lo + 2, lo + 1]
    for k in range(lo, hi - 1):
        v, beta = _house((x, y, z))
        if beta != 0.0:
            q = max(lo, k - 1)
            blk = h[k:k + 3, q:hi + 1]
            blk -= beta * np.outer(v, v @ blk)
            r = min(k + 3, hi)
            blk = h[lo:r + 1, k:k + 3]
            blk -= beta * np.outer(blk @ v, v)
        x = h[k + 1, k]
        y = h[k + 2, k]
        if k < hi - 2:
            z = h[k + 3, k]
    v, beta = _house((x, y))
    if beta != 0.0:
        blk = h[hi - 1:hi + 1, hi - 2:hi + 1]
        blk -= beta * np.outer(v, v @ blk)
        blk = h[lo:hi + 1, hi - 1:hi + 1]
        blk -= beta * np.outer(blk @ v, v)


def _round_robin(n):
    """Disjoint (p, q) pairings covering every pair once per sweep."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            p, q = players[i], players[m - 1 - i]
            if p < n and q < n:
                ps.append(min(p, q))
                qs.append(max(p, q))
        rounds.append((np.array(ps, dtype=int), np.array(qs, dtype=int)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(s, tol=1e-12, max_sweeps=60):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi.

    Parameters
    ----------
    s : (m, m) array_like
        Symmetric matrix.
    tol : float
        Stop once the off-diagonal Frobenius norm is below
        ``tol * ||S||_F``.
    max_sweeps : int
        Raise :class:`NumericalFailureError` if not converged after this many
        sweeps.

    Returns
    -------
    w : ndarray, shape (m,)
        Eigenvalues (unsorted, in diagonal order).
    v : ndarray, shape (m, m)
        Orthonormal eigenvectors as columns.
    """
    a = np.array(s, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("jacobi_eigh expects a square matrix")
    n = a.shape[0]
    v = np.eye(n)
    if n <= 1:
        return np.diag(a).copy(), v
    a = 0.5 * (a + a.T)
    fro = np.linalg.norm(a)
    if fro == 0.0:
        return np.zeros(n), v
    thresh = tol * fro
    rounds = _round_robin(n)
    offmask = ~np.eye(n, dtype=bool)
    for sweep in range(max_sweeps + 1):
        off = np.sqrt(np.sum(a[offmask] ** 2))
        if off <= thresh:
            return np.diag(a).copy(), v
        if sweep == max_sweeps:
            break
        for p, q in rounds:
            apq = a[p, q]
            active = apq != 0.0
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            # an off-diagonal entry far below the diagonal gap gives tau = inf, t = 0
            with np.errstate(over="ignore"):
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            sn = t * c
            ap = a[p, :].copy()
            aq = a[q, :]
            a[p, :] = c[:, None] * ap - sn[:, None] * aq
            a[q, :] = sn[:, None] * ap + c[:, None] * aq
            ap = a[:, p].copy()
            aq = a[:, q]
            a[:, p] = ap * c - aq * sn
            a[:, q] = ap * sn + aq * c
            # exact zeros on the annihilated entries
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp = v[:, p].copy()
            vq = v[:, q]
            v[:, p] = vp * c - vq * sn
            v[:, q] = vp * sn + vq * c
    raise NumericalFailureError("Jacobi eigensolver did not converge", max_sweeps)


def poly_from_roots(roots, real=True, imag_tol=1e-9):
    """Monic polynomial coefficients (highest power first) with the given roots.

    Built by sequential convolution with ``(z - r)``.  With ``real=True`` the
    root set must be closed under conjugation; residual imaginary parts up to
    ``imag_tol`` (relative to the coefficient scale) are discarded.
    """
    roots = np.asarray(roots, dtype=complex).ravel()
    c = np.zeros(roots.size + 1, dtype=complex)
    c[0] = 1.0
    for k, r in enumerate(roots):
        c[1:k + 2] = c[1:k + 2] - r * c[0:k + 1]
    if not real:
        return c
    scale = max(1.0, float(np.max(np.abs(c))))
    if np.max(np.abs(c.imag), initial=0.0) > imag_tol * scale:
        raise ValueError("roots are not closed under conjugation; real coefficients requested")
    return c.real.copy()


def companion_matrix(coeffs):
    """Top-row companion matrix of a monic polynomial (highest power first)."""
    c = np.asarray(coeffs, dtype=float)
    if c.size == 0 or c[0] != 1.0:
        raise ValueError("companion_matrix expects monic coefficients")
    d = c.size - 1
    m = np.zeros((d, d))
    if d:
        m[0, :] = -c[1:]
        m[1:, :-1] = np.eye(d - 1)
    return m


def poly_roots(coeffs, polish_steps=3):
    """Roots of a real monic polynomial via its companion matrix.

    The eigenvalues are refined with a few Newton steps on the polynomial
    itself, which recovers several digits when roots are clustered. A step
    is kept only if it lowers the residual.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    roots = eig_dense(companion_matrix(coeffs))
    if roots.size == 0 or polish_steps <= 0:
        return roots
    deriv = np.polyder(coeffs)
    with np.errstate(all="ignore"):
        for _ in range(polish_steps):
            f = np.polyval(coeffs, roots)
            cand = roots - f / np.polyval(deriv, roots)
            better = np.isfinite(cand) & (np.abs(np.polyval(coeffs, cand)) < np.abs(f))
            roots = np.where(better, cand, roots)
    return roots
