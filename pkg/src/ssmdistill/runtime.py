"""Auto-regressive generation with a single filter.

Two execution modes are implemented and instrumented:

* **conv** keeps every past input and computes each new output as a direct
  sum over the cache, so step ``t`` costs ``t + 1`` multiply-adds;
* **recurrent** keeps the state of a modal or companion system, so every
  step costs ``O(d)`` regardless of how many tokens came before.

The prompt ``u_0 .. u_{T-1}`` is consumed by a prefill.  Generation step
``k`` then produces the output at time ``T + k``; in closed loop its input
is the previous output ``y_{T+k-1}``, otherwise it is taken from a supplied
input sequence.

Counters measure multiply-adds and the number of resident numeric values
(a complex number counts as two) separately for the prefill and the
generation phase.
"""

import csv
import io
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .eigen import poly_from_roots
from .errors import SystemOverflowError
from .linsys import (
    CompanionSSM,
    Filter,
    ModalSSM,
    OpCounter,
    TransferFunction,
    aliasing_bound,
    causal_conv,
    ss_to_tf,
    step,
    tf_poles,
    tf_to_companion,
    zero_state,
)

FFT_TAIL_TOL = 1e-12
CSV_COLUMNS = (
    "mode", "d", "T", "K", "prefill", "mul_adds_total",
    "mul_adds_per_step_first", "mul_adds_per_step_last", "peak_values", "wall_ns",
)


@dataclass
class GenSession:
    """State and counters of one generation run.

    Attributes
    ----------
    mode : {"conv", "recurrent"}
    prompt_length : int
    generated : int
        Number of outputs produced after the prompt.
    state : ndarray or None
        Recurrent state (recurrent mode).
    cache : list
        Inputs consumed so far (conv mode); its length equals the number of
        outputs produced.
    prefill : str
        ``"conv"``, ``"step"`` or ``"fft"``.
    """

    mode: str
    order: int = 0
    prompt_length: int = 0
    generated: int = 0
    state: object = None
    cache: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    prefill: str = ""
    prefill_counter: OpCounter = field(default_factory=OpCounter)
    gen_counter: OpCounter = field(default_factory=OpCounter)
    peak_values_prefill: int = 0
    peak_values_generation: int = 0
    wall_ns: int = 0
    notes: list = field(default_factory=list)


def _state_values(x):
    x = np.asarray(x)
    return x.size * (2 if np.iscomplexobj(x) else 1)


def _feedback_inputs(feedback, K):
    if isinstance(feedback, str):
        if feedback != "closed":
            raise ValueError("feedback must be 'closed' or a sequence of inputs")
        return None
    inputs = np.asarray(feedback, dtype=float).ravel()
    if inputs.size < K:
        raise ValueError(f"need {K} external inputs, got {inputs.size}")
    return inputs


# ----------------------------------------------------------------------------
# prefill strategies
# ----------------------------------------------------------------------------


def conv_prefill(filt, prompt):
    """Outputs ``y_0 .. y_{T-1}`` of the causal convolution with ``prompt``.

    Uses a zero-padded FFT of length at least ``T + L - 1``.
    """
    h = filt.taps if isinstance(filt, Filter) else np.asarray(filt, dtype=float)
    u = np.asarray(prompt, dtype=float).ravel()
    if u.size < 1:
        raise ValueError("prompt must contain at least one value")
    return causal_conv(h, u, u.size)


def recurrent_prefill(ssm, prompt, counter=None):
    """Step the recurrence over the prompt.

    Returns
    -------
    state : ndarray
        State after consuming ``u_0 .. u_{T-1}``.
    y_last : float
        Output ``y_{T-1}``.
    """
    u = np.asarray(prompt, dtype=float).ravel()
    if u.size < 1:
        raise ValueError("prompt must contain at least one value")
    x = zero_state(ssm)
    y = 0.0
    for t, ut in enumerate(u):
        x, y = step(x, ut, ssm, counter)
        if not np.isfinite(y) or not np.all(np.isfinite(x)):
            raise SystemOverflowError(t)
    return x, float(y)


def _closure(ssm):
    """Real monic denominator ``(1, a_1, .., a_d)`` and companion form of ``ssm``."""
    if isinstance(ssm, CompanionSSM):
        return np.concatenate(([1.0], ssm.a)), ssm
    if isinstance(ssm, ModalSSM):
        closed = ssm.real_closure()
        den = poly_from_roots(closed.poles)
        comp = tf_to_companion(ss_to_tf(closed))
        return den, comp
    raise TypeError("fft_prefill needs a CompanionSSM or ModalSSM")


def _inverse_den_response(den, T):
    """Taps ``g_0 .. g_{T-1}`` of ``1 / den(z)`` from an inverse FFT.

    The grid starts at the smallest power of two ``>= 2T`` and doubles until
    the periodisation error bound drops below ``FFT_TAIL_TOL``.
    """
    tf = TransferFunction([1.0], den)
    N = 1 << max(1, math.ceil(math.log2(2 * T)))
    while aliasing_bound(tf, N) > FFT_TAIL_TOL:
        N *= 2
        if N > 1 << 26:
            raise ValueError("inverse denominator does not decay fast enough")
    g = np.fft.irfft(1.0 / np.fft.rfft(den, N), N)
    return g[:T], N


def modal_state_from_companion(poles, den, v_hist):
    """Modal state ``s_n`` from the companion history ``v_{T-1} .. v_{T-d'}``.

    With ``u_t = sum_k a_k v_{t-k}`` (``a_0 = 1``) and ``den(lambda_n) = 0``,
    ``s_n = sum_{m=1}^{d'} v_{T-m} sum_{k=0}^{m-1} a_k lambda_n^(m-1-k)``.
    """
    poles = np.asarray(poles, dtype=complex)
    dd = den.size - 1
    # coef[n, m-1] = sum_{k<m} a_k lam^(m-1-k), a Horner-style running sum
    coef = np.zeros((poles.size, dd), dtype=complex)
    acc = np.zeros(poles.size, dtype=complex)
    for m in range(dd):
        acc = acc * poles + den[m]
        coef[:, m] = acc
    return coef @ np.asarray(v_hist, dtype=float)


def fft_prefill(ssm, prompt, counter=None, session=None):
    """Prefill through one FFT convolution with the inverse denominator.

    For the companion form the state after the prompt is
    ``(v_{T-1}, .., v_{T-d})`` with ``v = g * u`` and ``G = 1 / den``.  A
    modal system is handled through its real-closure denominator and the
    state is mapped back with :func:`modal_state_from_companion`.  The
    output ``y_{T-1}`` is read off the same convolution.

    If the denominator has roots on or outside the unit circle a warning is
    issued and :func:`recurrent_prefill` is used instead.

    Returns
    -------
    state, y_last
    """
    u = np.asarray(prompt, dtype=float).ravel()
    T = u.size
    if T < 1:
        raise ValueError("prompt must contain at least one value")
    den, comp = _closure(ssm)
    dd = den.size - 1
    roots = tf_poles(TransferFunction([1.0], den)) if dd else np.zeros(0)
    if dd and np.max(np.abs(roots)) >= 1.0:
        msg = "denominator has roots on or outside the unit circle; falling back to step prefill"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        if session is not None:
            session.notes.append(msg)
            session.prefill = "step (fft fallback)"
        return recurrent_prefill(ssm, u, counter)
    if dd == 0:
        y = comp.b0 * u[-1]
        x = zero_state(ssm)
        if counter is not None:
            counter.record(1, 1)
        return x, float(y)
    g, N = _inverse_den_response(den, T)
    v = causal_conv(g, u, T)
    # history v_{T-1}, .., v_{T-d'-1}; entries before time 0 are zero
    hist = np.zeros(dd + 1)
    n = min(dd + 1, T)
    hist[:n] = v[T - 1::-1][:n]
    x_comp = hist[:dd]
    x_prev = hist[1:dd + 1]
    y = float(comp.beta @ x_prev + comp.b0 * u[-1])
    if counter is not None:
        fft_len = 1 << math.ceil(math.log2(2 * T - 1)) if T > 1 else 1
        work = int(3 * fft_len * max(1, math.log2(fft_len)) + N * max(1, math.log2(N)))
        counter.record(work + dd + 1, 2 * work + 2 * dd + 1)
    if session is not None:
        session.peak_values_prefill = max(session.peak_values_prefill, N + 3 * T + dd)
        session.notes.append(f"fft prefill grid {N}")
    if isinstance(ssm, ModalSSM):
        return modal_state_from_companion(ssm.poles, den, x_comp), y
    return x_comp, y


# ----------------------------------------------------------------------------
# generation
# ----------------------------------------------------------------------------


def generate_conv(filt, prompt, K, feedback="closed", return_session=False):
    """Generate ``K`` outputs by direct sums over the growing input cache.

    Parameters
    ----------
    filt : Filter
        Taps past the end of the filter are treated as zero.
    prompt : array_like, shape (T,)
    K : int
    feedback : "closed" or array_like
        Closed loop feeds each output back as the next input.
    return_session : bool
        Also return the :class:`GenSession` with counters.
    """
    h = filt.taps if isinstance(filt, Filter) else np.asarray(filt, dtype=float)
    u = np.asarray(prompt, dtype=float).ravel()
    T = u.size
    K = int(K)
    inputs = _feedback_inputs(feedback, K)
    sess = GenSession(mode="conv", order=h.size, prompt_length=T, prefill="conv")
    t0 = time.perf_counter_ns()
    y_pre = conv_prefill(h, u)
    L = h.size
    # preallocated cache; only the first T + k entries are live
    cache = np.zeros(T + K)
    cache[:T] = u
    sess.peak_values_prefill = 2 * T + L
    outs = np.zeros(K)
    last = float(y_pre[-1])
    for k in range(K):
        t = T + k
        cache[t] = last if inputs is None else inputs[k]
        lo = max(0, t - L + 1)
        # y_t = sum_j h_{t-j} u_j over the live window
        y = float(np.dot(h[t - lo::-1], cache[lo:t + 1]))
        n = t + 1 - lo
        sess.gen_counter.record(n, 2 * n - 1)
        outs[k] = y
        last = y
        sess.peak_values_generation = max(sess.peak_values_generation, L + (t + 1) + (T + k + 1))
    sess.wall_ns = time.perf_counter_ns() - t0
    sess.generated = K
    sess.cache = cache[:T + K].tolist()
    sess.outputs = outs.tolist()
    return (outs, sess) if return_session else outs


def _ssm_order(ssm):
    return ssm.d


def generate_recurrent(ssm, prompt, K, feedback="closed", prefill="step", return_session=False):
    """Generate ``K`` outputs by stepping a recurrent system.

    Parameters
    ----------
    ssm : ModalSSM or CompanionSSM
    prompt : array_like, shape (T,)
    K : int
    feedback : "closed" or array_like
    prefill : {"step", "fft"}
    return_session : bool
    """
    if prefill not in ("step", "fft"):
        raise ValueError("prefill must be 'step' or 'fft'")
    u = np.asarray(prompt, dtype=float).ravel()
    K = int(K)
    inputs = _feedback_inputs(feedback, K)
    sess = GenSession(mode="recurrent", order=_ssm_order(ssm), prompt_length=u.size, prefill=prefill)
    t0 = time.perf_counter_ns()
    if prefill == "step":
        x, last = recurrent_prefill(ssm, u, sess.prefill_counter)
        sess.peak_values_prefill = _state_values(x) + 2
    else:
        x, last = fft_prefill(ssm, u, sess.prefill_counter, session=sess)
        if sess.prefill.startswith("step"):
            sess.peak_values_prefill = _state_values(x) + 2
    outs = np.zeros(K)
    for k in range(K):
        ut = last if inputs is None else inputs[k]
        x, y = step(x, ut, ssm, sess.gen_counter)
        if not np.isfinite(y):
            raise SystemOverflowError(u.size + k)
        outs[k] = y
        last = y
        # state plus the current input and output
        sess.peak_values_generation = max(sess.peak_values_generation, _state_values(x) + 2)
    sess.wall_ns = time.perf_counter_ns() - t0
    sess.state = x
    sess.generated = K
    sess.outputs = outs.tolist()
    return (outs, sess) if return_session else outs


def complexity_report(session):
    """Counters of a finished session as a plain dictionary."""
    per = list(session.gen_counter.per_step)
    return {
        "mode": session.mode,
        "d": session.order,
        "T": session.prompt_length,
        "K": session.generated,
        "prefill": session.prefill,
        "mul_adds_prefill": session.prefill_counter.mul_adds,
        "mul_adds_total": session.gen_counter.mul_adds,
        "flops_total": session.gen_counter.flops,
        "mul_adds_per_step": per,
        "mul_adds_per_step_first": per[0] if per else 0,
        "mul_adds_per_step_last": per[-1] if per else 0,
        "peak_values_prefill": session.peak_values_prefill,
        "peak_values": session.peak_values_generation,
        "wall_ns": session.wall_ns,
        "notes": list(session.notes),
    }


def fit_exponent(xs, ys):
    """Slope of the least-squares line through ``(log x, log y)``."""
    lx, ly = np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def csv_rows(reports):
    """Project complexity reports onto the benchmark CSV columns."""
    return [{c: r[c] for c in CSV_COLUMNS} for r in reports]


def write_csv(reports, fh=None):
    """Write benchmark rows; returns the CSV text when ``fh`` is None."""
    own = fh is None
    out = io.StringIO() if own else fh
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(csv_rows(reports))
    return out.getvalue() if own else None


def run_benchmark(system, filt, Ts, Ks, modes=("conv", "recurrent"), prefills=("step", "fft"), seed=0):
    """Run every (mode, T, K[, prefill]) combination on a random prompt.

    ``system`` drives recurrent runs and ``filt`` (its impulse response)
    the conv runs.  Returns a list of complexity reports.
    """
    rng = np.random.default_rng(seed)
    reports = []
    for T in Ts:
        prompt = rng.standard_normal(T)
        for K in Ks:
            if "conv" in modes:
                _, s = generate_conv(filt, prompt, K, return_session=True)
                rep = complexity_report(s)
                rep["d"] = system.d
                reports.append(rep)
            if "recurrent" in modes:
                for p in prefills:
                    _, s = generate_recurrent(system, prompt, K, prefill=p, return_session=True)
                    reports.append(complexity_report(s))
    return reports
