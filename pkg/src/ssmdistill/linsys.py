"""Discrete-time SISO linear systems and exact conversions between forms.

Conventions
-----------
* A filter ``h_0 .. h_{L-1}`` is the impulse response; ``h_0`` is the
  passthrough.  For a state-space model ``h_t = C A^{t-1} B`` for ``t >= 1``.
* Transfer functions are stored as coefficient vectors in powers of
  ``z^{-1}``::

      H(z) = (b_0 + b_1 z^-1 + ... + b_d z^-d) / (1 + a_1 z^-1 + ... + a_d z^-d)

  so ``num = (b_0, ..., b_d)`` and ``den = (1, a_1, ..., a_d)``.  The same
  vectors read as highest-power-first coefficients of polynomials in ``z``
  after multiplying through by ``z^d``.
* DFT: ``H_k = sum_t h_t exp(-2j pi k t / L)`` (unnormalised forward, the
  inverse carries ``1/L``); ``H_k`` is then ``H(e^{2j pi k / L})``.

All system types are frozen dataclasses whose arrays are read-only.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .eigen import EIG_CAP, eig_dense, poly_from_roots, poly_roots
from .errors import (
    ConsistencyError,
    IllConditionedError,
    NonDiagonalizableError,
    PoleProximityError,
    SystemOverflowError,
)

EPS_DISTINCT = 1e-8
EPS_DIV = 1e-300
EPS_POLE = 1e-9
IMAG_RESIDUE_TOL = 1e-9


def _frozen(x, dtype=float):
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# ----------------------------------------------------------------------------
# types
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Filter:
    """A real truncated impulse response ``h_0 .. h_{L-1}``."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=float).ravel()
        if taps.size < 1:
            raise ValueError("a filter needs at least one tap")
        if not np.all(np.isfinite(taps)):
            raise ValueError("filter taps must be finite")
        object.__setattr__(self, "taps", _frozen(taps))

    @property
    def length(self):
        return self.taps.size

    @property
    def h0(self):
        return float(self.taps[0])

    def __len__(self):
        return self.taps.size

    def padded(self, length):
        """Copy zero-padded (or truncated) to ``length`` taps."""
        out = np.zeros(length)
        n = min(length, self.length)
        out[:n] = self.taps[:n]
        return Filter(out)


@dataclass(frozen=True)
class DenseSSM:
    """``x_{t+1} = A x_t + B u_t``,  ``y_t = C x_t + h0 u_t`` with dense matrices."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    h0: float = 0.0
    notes: tuple = ()

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float).ravel()
        C = np.asarray(self.C, dtype=float).ravel()
        d = A.shape[0]
        if A.shape != (d, d) or B.size != d or C.size != d or d < 1:
            raise ValueError(f"inconsistent shapes A{A.shape}, B{B.shape}, C{C.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B)) and np.all(np.isfinite(C))
                and np.isfinite(self.h0)):
            raise ValueError("DenseSSM entries must be finite")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "h0", float(self.h0))
        object.__setattr__(self, "notes", tuple(self.notes))

    @property
    def d(self):
        return self.A.shape[0]

    def spectral_radius(self):
        return float(np.max(np.abs(eig_dense(self.A))))

    def is_stable(self):
        return self.spectral_radius() < 1.0


def _conjugate_partner(values, tol):
    """Index of each value's conjugate partner, or None if the set is not closed."""
    values = np.asarray(values, dtype=complex)
    n = values.size
    partner = -np.ones(n, dtype=int)
    for i in range(n):
        if partner[i] >= 0:
            continue
        target = np.conj(values[i])
        scale = max(1.0, abs(values[i]))
        if abs(values[i].imag) <= tol * scale:
            partner[i] = i
            continue
        cand = [j for j in range(n) if partner[j] < 0 and j != i]
        if not cand:
            return None
        dist = np.abs(values[cand] - target)
        j = cand[int(np.argmin(dist))]
        if dist.min() > tol * scale:
            return None
        partner[i] = j
        partner[j] = i
    return partner


def min_pairwise_distance(values):
    v = np.asarray(values, dtype=complex)
    if v.size < 2:
        return np.inf
    diff = np.abs(v[:, None] - v[None, :])
    diff[np.diag_indices(v.size)] = np.inf
    return float(diff.min())


@dataclass(frozen=True)
class ModalSSM:
    """Diagonal realisation: poles ``lambda_n``, residues ``R_n``, passthrough ``h0``.

    The state recurrence is ``x_{t+1} = diag(lambda) x_t + 1 u_t`` and the
    output is ``y_t = Re[sum_n R_n x_t[n]] + h0 u_t``, so the impulse response
    is ``h_t = Re[sum_n R_n lambda_n^{t-1}]`` for ``t >= 1``.
    """

    poles: np.ndarray
    residues: np.ndarray
    h0: float = 0.0
    conjugate_closed: bool = False
    eps_distinct: float = EPS_DISTINCT
    notes: tuple = ()

    def __post_init__(self):
        poles = np.asarray(self.poles, dtype=complex).ravel()
        residues = np.asarray(self.residues, dtype=complex).ravel()
        if poles.size != residues.size:
            raise ValueError("poles and residues must have equal length")
        if not (np.all(np.isfinite(poles)) and np.all(np.isfinite(residues)) and np.isfinite(self.h0)):
            raise ValueError("ModalSSM entries must be finite")
        if min_pairwise_distance(poles) <= self.eps_distinct:
            raise NonDiagonalizableError(
                f"poles are not pairwise distinct (min distance {min_pairwise_distance(poles):.3e})"
            )
        if self.conjugate_closed:
            partner = _conjugate_partner(poles, 1e-8)
            if partner is None:
                raise ValueError("conjugate_closed set but poles are not closed under conjugation")
            scale = max(1.0, float(np.max(np.abs(residues), initial=0.0)))
            if np.any(np.abs(residues[partner] - np.conj(residues)) > 1e-8 * scale):
                raise ValueError("conjugate_closed set but paired residues are not conjugate")
        object.__setattr__(self, "poles", _frozen(poles, complex))
        object.__setattr__(self, "residues", _frozen(residues, complex))
        object.__setattr__(self, "h0", float(self.h0))
        object.__setattr__(self, "notes", tuple(self.notes))

    @property
    def d(self):
        return self.poles.size

    def spectral_radius(self):
        return float(np.max(np.abs(self.poles), initial=0.0))

    def real_closure(self):
        """Conjugate-closed system with the same (real-part) impulse response.

        Complex poles that lack a partner are split into the pair
        ``(lambda, R/2), (conj(lambda), conj(R)/2)``; real poles keep
        ``Re(R)``.  Returns ``self`` when already closed.
        """
        if self.conjugate_closed:
            return self
        partner = _conjugate_partner(self.poles, 1e-12)
        if partner is not None:
            res = self.residues
            pair_ok = np.all(np.abs(res[partner] - np.conj(res)) <= 1e-12 * max(1.0, np.abs(res).max(initial=0)))
            if pair_ok:
                return ModalSSM(self.poles, self.residues, self.h0, True, self.eps_distinct, self.notes)
        poles, res = [], []
        for lam, r in zip(self.poles, self.residues):
            if lam.imag == 0.0:
                poles.append(complex(lam.real))
                res.append(complex(r.real))
            else:
                poles.extend([lam, np.conj(lam)])
                res.extend([r / 2, np.conj(r) / 2])
        return ModalSSM(poles, res, self.h0, True, self.eps_distinct, self.notes)


@dataclass(frozen=True)
class CompanionSSM:
    """Companion canonical realisation ``(a, beta, b0)``.

    The state matrix is the shift ``L`` minus ``e_1 a^T``, ``B = e_1`` and
    ``C = beta``.  The matrices are never formed.
    """

    a: np.ndarray
    beta: np.ndarray
    b0: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).ravel()
        beta = np.asarray(self.beta, dtype=float).ravel()
        if a.size != beta.size:
            raise ValueError("a and beta must have equal length")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(beta)) and np.isfinite(self.b0)):
            raise ValueError("CompanionSSM entries must be finite")
        object.__setattr__(self, "a", _frozen(a))
        object.__setattr__(self, "beta", _frozen(beta))
        object.__setattr__(self, "b0", float(self.b0))

    @property
    def d(self):
        return self.a.size

    @property
    def h0(self):
        return self.b0

    def to_tf(self):
        """Transfer function with ``b_n = beta_n + b0 a_n``."""
        den = np.concatenate(([1.0], self.a))
        num = np.concatenate(([self.b0], self.beta + self.b0 * self.a))
        return TransferFunction(num, den)

    def to_dense(self):
        d = self.d
        A = np.zeros((d, d))
        A[0, :] = -self.a
        if d > 1:
            A[1:, :-1] = np.eye(d - 1)
        B = np.zeros(d)
        B[0] = 1.0
        return DenseSSM(A, B, self.beta, self.b0)


@dataclass(frozen=True)
class ShiftSSM:
    """FIR filter as a shift-register SSM of dimension ``L - 1``.

    State ``x_t = (u_{t-1}, ..., u_{t-L+1})``; step is a shift plus one dot
    product with ``h_1 .. h_{L-1}``.
    """

    taps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "taps", Filter(self.taps).taps)

    @property
    def d(self):
        return self.taps.size - 1

    @property
    def h0(self):
        return float(self.taps[0])

    @property
    def C(self):
        return self.taps[1:]

    def to_dense(self):
        d = self.d
        A = np.zeros((d, d))
        if d > 1:
            A[1:, :-1] = np.eye(d - 1)
        B = np.zeros(d)
        B[0] = 1.0
        return DenseSSM(A, B, self.taps[1:], self.h0)


@dataclass(frozen=True)
class TransferFunction:
    """Proper rational function in ``z^{-1}`` with monic denominator."""

    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        num = np.asarray(self.num, dtype=float).ravel()
        den = np.asarray(self.den, dtype=float).ravel()
        if den.size < 1 or den[0] != 1.0:
            raise ValueError("denominator must be monic (den[0] == 1)")
        if num.size > den.size:
            raise ValueError("transfer function must be proper")
        if num.size < den.size:
            num = np.concatenate((num, np.zeros(den.size - num.size)))
        if not (np.all(np.isfinite(num)) and np.all(np.isfinite(den))):
            raise ValueError("transfer function coefficients must be finite")
        object.__setattr__(self, "num", _frozen(num))
        object.__setattr__(self, "den", _frozen(den))

    @property
    def order(self):
        return self.den.size - 1


@dataclass(frozen=True)
class FrequencyResponse:
    """Values ``H(exp(2j pi k / L))`` for ``k = 0 .. L-1``."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(np.asarray(self.values).ravel(), complex))

    @property
    def length(self):
        return self.values.size


System = Union[DenseSSM, ModalSSM, CompanionSSM, ShiftSSM]


# ----------------------------------------------------------------------------
# operation counting
# ----------------------------------------------------------------------------


@dataclass
class OpCounter:
    """Counts scalar arithmetic performed by the step routines.

    ``mul_adds`` counts fused multiply-accumulate units; ``flops`` counts
    multiplies and adds separately (in the scalar field of the state, real
    or complex).
    """

    mul_adds: int = 0
    flops: int = 0
    steps: int = 0
    per_step: list = field(default_factory=list)

    def record(self, mul_adds, flops):
        self.mul_adds += mul_adds
        self.flops += flops
        self.steps += 1
        self.per_step.append(mul_adds)


# ----------------------------------------------------------------------------
# recurrent steps
# ----------------------------------------------------------------------------


def companion_step(state, u, ssm, counter=None):
    """One companion-form step; returns ``(new_state, y)``.

    ``y = beta . x + b0 u`` and the new state is ``(u - a . x, x_1, ..., x_{d-1})``.
    """
    x = np.asarray(state, dtype=float)
    if x.size != ssm.d:
        raise ValueError(f"state has length {x.size}, expected {ssm.d}")
    y = float(ssm.beta @ x) + ssm.b0 * u
    new = np.empty_like(x)
    if ssm.d:
        new[0] = u - ssm.a @ x
        new[1:] = x[:-1]
    if counter is not None:
        d = ssm.d
        counter.record(2 * d + 1, 4 * d + 1)
    return new, y


def modal_step(state, u, ssm, counter=None):
    """One diagonal step; returns ``(new_state, y)``.

    ``y = Re[R . x] + h0 u`` is read from the incoming state, then
    ``x <- lambda * x + u``.
    """
    x = np.asarray(state, dtype=complex)
    if x.size != ssm.d:
        raise ValueError(f"state has length {x.size}, expected {ssm.d}")
    y = float((ssm.residues @ x).real) + ssm.h0 * u
    new = ssm.poles * x + u
    if counter is not None:
        d = ssm.d
        counter.record(2 * d + 1, 4 * d + 2)
    return new, y


def shift_step(state, u, ssm, counter=None):
    """One step of a :class:`ShiftSSM`; returns ``(new_state, y)``."""
    x = np.asarray(state, dtype=float)
    if x.size != ssm.d:
        raise ValueError(f"state has length {x.size}, expected {ssm.d}")
    y = float(ssm.C @ x) + ssm.h0 * u
    new = np.empty_like(x)
    if ssm.d:
        new[0] = u
        new[1:] = x[:-1]
    if counter is not None:
        counter.record(ssm.d + 1, 2 * ssm.d + 1)
    return new, y


def zero_state(ssm):
    """All-zero initial state of the right dtype for ``ssm``."""
    if isinstance(ssm, ModalSSM):
        return np.zeros(ssm.d, dtype=complex)
    if isinstance(ssm, DenseSSM):
        return np.zeros(ssm.d)
    return np.zeros(ssm.d)


def step(state, u, ssm, counter=None):
    """Dispatch to the step routine matching ``ssm``'s type."""
    if isinstance(ssm, ModalSSM):
        return modal_step(state, u, ssm, counter)
    if isinstance(ssm, CompanionSSM):
        return companion_step(state, u, ssm, counter)
    if isinstance(ssm, ShiftSSM):
        return shift_step(state, u, ssm, counter)
    if isinstance(ssm, DenseSSM):
        x = np.asarray(state, dtype=float)
        y = float(ssm.C @ x) + ssm.h0 * u
        return ssm.A @ x + ssm.B * u, y
    raise TypeError(f"unsupported system type {type(ssm).__name__}")


# ----------------------------------------------------------------------------
# impulse responses
# ----------------------------------------------------------------------------


def _check_finite(values, offset=0):
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise SystemOverflowError(offset + int(np.argmax(bad)))


def impulse_response(system, length):
    """Impulse response ``h_0 .. h_{L-1}`` of any supported realisation.

    Dense systems are propagated by repeated matrix-vector products, modal
    systems by accumulated powers of the poles, companion and shift systems
    by stepping their recurrence on a unit impulse.

    Raises
    ------
    SystemOverflowError
        If the response overflows; ``err.index`` is the first bad ``t``.
    """
    L = int(length)
    if L < 1:
        raise ValueError("length must be >= 1")
    h = np.zeros(L)
    h[0] = system.h0
    with np.errstate(over="ignore", invalid="ignore"):
        if isinstance(system, DenseSSM):
            x = system.B.copy()
            for t in range(1, L):
                h[t] = system.C @ x
                if not np.isfinite(h[t]):
                    raise SystemOverflowError(t)
                x = system.A @ x
        elif isinstance(system, ModalSSM):
            if system.d and L > 1:
                pw = np.empty((L - 1, system.d), dtype=complex)
                pw[0] = 1.0
                if L > 2:
                    pw[1:] = system.poles
                    pw = np.cumprod(pw, axis=0)
                vals = (pw @ system.residues).real
                _check_finite(vals, offset=1)
                h[1:] = vals
        elif isinstance(system, ShiftSSM):
            n = min(L, system.taps.size)
            h[:n] = system.taps[:n]
        elif isinstance(system, CompanionSSM):
            x = np.zeros(system.d)
            u = 1.0
            for t in range(L):
                x, y = companion_step(x, u, system)
                if not np.isfinite(y):
                    raise SystemOverflowError(t)
                h[t] = y
                u = 0.0
        else:
            raise TypeError(f"unsupported system type {type(system).__name__}")
    return Filter(h)


def frequency_response(filt):
    """Length-L DFT of a filter (unnormalised forward transform)."""
    return FrequencyResponse(np.fft.fft(filt.taps))


# ----------------------------------------------------------------------------
# transfer-function evaluation
# ----------------------------------------------------------------------------


def _horner_inv(coeffs, w):
    """Evaluate ``sum_n c_n w^n`` by nested multiplication."""
    acc = np.zeros_like(w) + coeffs[-1]
    for c in coeffs[-2::-1]:
        acc = acc * w + c
    return acc


def tf_eval_horner(tf, points, eps_div=EPS_DIV):
    """Evaluate ``num(z)/den(z)`` at arbitrary points by Horner's scheme in ``z^{-1}``."""
    z = np.atleast_1d(np.asarray(points, dtype=complex))
    if np.any(z == 0):
        if tf.order > 0:
            raise PoleProximityError(0j, "z = 0 is outside the region of convergence")
    w = 1.0 / z
    num = _horner_inv(tf.num, w)
    den = _horner_inv(tf.den, w)
    bad = np.abs(den) < eps_div
    if np.any(bad):
        raise PoleProximityError(z[int(np.argmax(bad))])
    return num / den


def tf_poles(tf):
    """Roots of the denominator (eigenvalues of its companion matrix)."""
    if tf.order == 0:
        return np.zeros(0, dtype=complex)
    return poly_roots(tf.den)


def _check_unit_circle(tf, eps_pole):
    poles = tf_poles(tf)
    if poles.size:
        gap = np.abs(np.abs(poles) - 1.0)
        if gap.min() <= eps_pole:
            raise PoleProximityError(poles[int(np.argmin(gap))], "denominator root on the unit circle")
    return poles


def tf_eval_unit_circle(tf, length, eps_pole=EPS_POLE, check_poles=True):
    """Frequency response on the ``L`` roots of unity via two length-L FFTs."""
    L = int(length)
    if L < tf.order + 1:
        raise ValueError(f"length {L} is shorter than order + 1 = {tf.order + 1}")
    if check_poles:
        _check_unit_circle(tf, eps_pole)
    # real coefficients: half spectrum, then mirror by conjugate symmetry
    num = np.fft.rfft(tf.num, n=L)
    den = np.fft.rfft(tf.den, n=L)
    small = np.abs(den) < EPS_DIV
    if np.any(small):
        k = int(np.argmax(small))
        raise PoleProximityError(np.exp(2j * np.pi * k / L))
    half = num / den
    full = np.empty(L, dtype=complex)
    full[:half.size] = half
    full[half.size:] = np.conj(half[1:L - half.size + 1][::-1])
    return FrequencyResponse(full)


def aliasing_bound(tf, length):
    """Upper bound on ``sum_{t >= L} |h_t|`` from the modal decomposition.

    Returns ``inf`` for unstable systems or when the modal form does not
    exist (clustered poles).
    """
    if tf.order == 0:
        return 0.0
    try:
        modal = tf_to_modal(tf)
    except NonDiagonalizableError:
        return float("inf")
    mag = np.abs(modal.poles)
    if np.any(mag >= 1.0):
        return float("inf")
    return float(np.sum(np.abs(modal.residues) * mag ** (length - 1) / (1.0 - mag)))


def tf_to_filter(tf, length, eps_pole=EPS_POLE, with_aliasing=False):
    """Impulse response recovered by inverse FFT of the frequency response.

    The result is the L-periodised response; ``with_aliasing=True`` also
    returns a bound on the per-tap periodisation error.
    """
    resp = tf_eval_unit_circle(tf, length, eps_pole)
    h = np.fft.ifft(resp.values)
    scale = max(1.0, float(np.max(np.abs(h.real))))
    resid = float(np.max(np.abs(h.imag)))
    if resid > IMAG_RESIDUE_TOL * scale:
        raise ConsistencyError(f"imaginary residue {resid:.3e} after inverse FFT")
    filt = Filter(h.real)
    if with_aliasing:
        return filt, aliasing_bound(tf, length)
    return filt


def tf_impulse_response(tf, length, tol=1e-13, max_grid=1 << 22):
    """First ``L`` taps of the (non-periodised) impulse response via FFT.

    The grid is the smallest power of two ``N >= L`` whose aliasing bound is
    below ``tol``; the periodised response on that grid is then truncated.
    """
    L = int(length)
    n = 1 << int(np.ceil(np.log2(max(L, tf.order + 1, 1))))
    while aliasing_bound(tf, n) > tol:
        if n >= max_grid:
            raise IllConditionedError("no FFT grid keeps the aliasing error below tolerance")
        n *= 2
    return Filter(tf_to_filter(tf, n).taps[:L])


# ----------------------------------------------------------------------------
# conversions
# ----------------------------------------------------------------------------


def ss_to_tf(system):
    """Transfer function of a dense, shift, companion or modal system.

    Dense: ``den = poly(eig(A))``, ``num = poly(eig(A - B C)) + (h0 - 1) den``.
    Modal: ``den = poly(poles)`` and the strictly proper numerator is
    recombined from the partial fractions, plus ``h0 * den``.  A modal system
    that is not conjugate-closed is first replaced by its real closure.
    """
    if isinstance(system, CompanionSSM):
        return system.to_tf()
    if isinstance(system, ShiftSSM):
        den = np.zeros(system.taps.size)
        den[0] = 1.0
        return TransferFunction(system.taps, den)
    if isinstance(system, ModalSSM):
        closed = system.real_closure()
        poles, res = closed.poles, closed.residues
        d = poles.size
        den = poly_from_roots(poles, real=True)
        strict = np.zeros(d, dtype=complex)
        for n in range(d):
            others = np.delete(poles, n)
            strict += res[n] * poly_from_roots(others, real=False)
        scale = max(1.0, float(np.max(np.abs(strict), initial=0.0)))
        if np.max(np.abs(strict.imag), initial=0.0) > 1e-9 * scale:
            raise ConsistencyError("numerator is not real after partial-fraction recombination")
        num = closed.h0 * den
        num[1:] += strict.real
        return TransferFunction(num, den)
    if isinstance(system, DenseSSM):
        if system.d > EIG_CAP:
            raise ValueError(f"state dimension {system.d} exceeds the eigensolver cap {EIG_CAP}")
        den = poly_from_roots(eig_dense(system.A), real=True)
        closed_loop = poly_from_roots(eig_dense(system.A - np.outer(system.B, system.C)), real=True)
        num = closed_loop + (system.h0 - 1.0) * den
        return TransferFunction(num, den)
    raise TypeError(f"unsupported system type {type(system).__name__}")


def tf_to_companion(tf):
    """Companion realisation: ``b0 = num[0]``, ``beta_n = b_n - b0 a_n``."""
    b0 = float(tf.num[0])
    a = tf.den[1:]
    beta = tf.num[1:] - b0 * a
    return CompanionSSM(a, beta, b0)


def tf_to_modal(tf, eps_distinct=EPS_DISTINCT):
    """Pole/residue form of a transfer function with distinct poles.

    Residues are ``beta(lambda_n) / p'(lambda_n)`` where ``beta`` is the
    strictly proper numerator left after removing the passthrough by long
    division.
    """
    comp = tf_to_companion(tf)
    d = tf.order
    if d == 0:
        return ModalSSM([], [], comp.b0, True, eps_distinct)
    poles = tf_poles(tf)
    gap = min_pairwise_distance(poles)
    if gap <= eps_distinct:
        raise NonDiagonalizableError(
            f"denominator has repeated or clustered roots (min distance {gap:.3e})"
        )
    # beta(z) = beta_1 z^{d-1} + ... + beta_d ; p(z) = z^d + a_1 z^{d-1} + ...
    beta_poly = comp.beta
    dp = np.polyder(tf.den)
    residues = np.polyval(beta_poly, poles) / np.polyval(dp, poles)
    partner = _conjugate_partner(poles, 1e-8)
    closed = False
    if partner is not None:
        # snap pairs to exact conjugates so the flag's invariant holds bit-for-bit
        poles = poles.copy()
        residues = residues.copy()
        for i, j in enumerate(partner):
            if j == i:
                poles[i] = poles[i].real
                residues[i] = residues[i].real
            elif i < j:
                poles[j] = np.conj(poles[i])
                residues[j] = np.conj(residues[i])
        closed = True
    return ModalSSM(poles, residues, comp.b0, closed, eps_distinct)


def canonicalize(system):
    """Companion form of any realisation (transfer-function invariant)."""
    return tf_to_companion(ss_to_tf(system))


def dense_to_modal(system, eps_distinct=EPS_DISTINCT):
    """Modal form of a dense system by eigen-decomposition of ``A``."""
    w, V = np.linalg.eig(system.A)
    if min_pairwise_distance(w) <= eps_distinct:
        raise NonDiagonalizableError("state matrix has repeated eigenvalues")
    Btil = np.linalg.solve(V, system.B.astype(complex))
    Ctil = system.C @ V
    return ModalSSM(w, Btil * Ctil, system.h0, False, eps_distinct).real_closure()


def fir_to_shift_ssm(filt):
    """Shift-register realisation of an FIR filter (dimension ``L - 1``)."""
    if not isinstance(filt, Filter):
        filt = Filter(filt)
    return ShiftSSM(filt.taps)


def modal_to_dense(system):
    """Real dense realisation of a modal system (block-diagonal 2x2 for pairs)."""
    closed = system.real_closure()
    partner = _conjugate_partner(closed.poles, 1e-12)
    blocks_A, Bs, Cs = [], [], []
    seen = set()
    for i, j in enumerate(partner):
        if i in seen:
            continue
        lam, r = closed.poles[i], closed.residues[i]
        if j == i:
            blocks_A.append(np.array([[lam.real]]))
            Bs.append([1.0])
            Cs.append([r.real])
            seen.add(i)
        else:
            # r/(z-lam) + conj: realised with x = (Re s, Im s), s_{t+1} = lam s + u
            a, b = lam.real, lam.imag
            blocks_A.append(np.array([[a, -b], [b, a]]))
            Bs.append([1.0, 0.0])
            Cs.append([2 * r.real, -2 * r.imag])
            seen.update((i, j))
    d = sum(b.shape[0] for b in blocks_A)
    A = np.zeros((d, d))
    k = 0
    for blk in blocks_A:
        m = blk.shape[0]
        A[k:k + m, k:k + m] = blk
        k += m
    return DenseSSM(A, np.concatenate(Bs), np.concatenate(Cs), closed.h0)


def truncation_correction(system, length, direction="apply", eps=1e-12):
    """Fold (``apply``) or unfold (``remove``) the finite-length correction.

    ``apply`` maps ``C -> C (I - A^L)`` (residues scaled by ``1 - lambda^L``);
    ``remove`` inverts it.
    """
    L = int(length)
    if direction not in ("apply", "remove"):
        raise ValueError("direction must be 'apply' or 'remove'")
    if isinstance(system, ModalSSM):
        factor = 1.0 - system.poles.astype(complex) ** L
        if direction == "remove":
            bad = np.abs(factor) <= eps
            if np.any(bad):
                lam = system.poles[int(np.argmax(bad))]
                raise IllConditionedError(f"1 - lambda^L vanishes for pole {lam!r}")
            res = system.residues / factor
        else:
            res = system.residues * factor
        return ModalSSM(system.poles, res, system.h0, system.conjugate_closed,
                        system.eps_distinct, system.notes)
    if isinstance(system, DenseSSM):
        M = np.eye(system.d) - np.linalg.matrix_power(system.A, L)
        if direction == "apply":
            C = system.C @ M
        else:
            cond = np.linalg.cond(M)
            if not np.isfinite(cond) or cond > 1.0 / eps:
                raise IllConditionedError(f"I - A^L is ill-conditioned (cond {cond:.3e})")
            C = np.linalg.solve(M.T, system.C)
        return DenseSSM(system.A, system.B, C, system.h0, system.notes)
    raise TypeError(f"unsupported system type {type(system).__name__}")


def causal_conv(h, u, n_out=None):
    """Causal linear convolution ``y_t = sum_{j<=t} h_{t-j} u_j`` via zero-padded FFT."""
    h = np.asarray(h, dtype=float)
    u = np.asarray(u, dtype=float)
    n_out = u.shape[-1] if n_out is None else n_out
    n = h.shape[-1] + u.shape[-1] - 1
    nfft = 1 << max(0, int(np.ceil(np.log2(max(n, 1)))))
    y = np.fft.irfft(np.fft.rfft(h, nfft) * np.fft.rfft(u, nfft), nfft)
    return y[..., :n_out]
