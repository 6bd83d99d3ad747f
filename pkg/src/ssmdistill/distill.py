"""Distillation of long convolution filters into low-order modal systems.

A filter ``h`` of length ``L`` is approximated by

    hhat_t = Re[ sum_n R_n lambda_n^(t-1) ],   t >= 1,   hhat_0 = h_0,

with poles ``lambda_n = r_n exp(i alpha_n)`` and residues stored in
cartesian form.  The parameters are fit by Adam on a time-domain (``l2``)
or frequency-domain (``h2``) squared error.  Two classical model-order
reduction baselines are provided: modal truncation of an existing modal
system and balanced truncation of a filter's Hankel matrix.

With conjugate pairing on, each stored mode stands for a conjugate pair, so
``n_modes = d // 2``.  An odd order adds one real mode whose phase and
imaginary residue are pinned at zero.
"""

import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .eigen import eig_dense, jacobi_eigh
from .errors import (
    ConsistencyError,
    DistillationError,
    NumericalFailureError,
    SystemOverflowError,
)
from .linsys import EPS_DISTINCT, DenseSSM, Filter, ModalSSM
from .spectral import aak_lower_bound, error_hankel_norm, default_hankel_size, hankel_matrix, hankel_spectrum

R_MIN = 1e-6
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


# ----------------------------------------------------------------------------
# parameters and configuration
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ModalParams:
    """Trainable modal parameters.

    Attributes
    ----------
    radii, phases : ndarray, shape (n_modes,)
        Pole magnitudes ``r_n > 0`` and angles ``alpha_n``.
    residue_re, residue_im : ndarray, shape (n_modes,)
        Cartesian residues.
    paired : bool
        Every complex mode stands for a conjugate pair.
    n_real : int
        Number of trailing modes pinned to the real axis (phase 0, real
        residue).  Only used with ``paired``.
    """

    radii: np.ndarray
    phases: np.ndarray
    residue_re: np.ndarray
    residue_im: np.ndarray
    paired: bool = True
    n_real: int = 0

    def __post_init__(self):
        arrs = [np.array(getattr(self, k), dtype=float).ravel()
                for k in ("radii", "phases", "residue_re", "residue_im")]
        n = arrs[0].size
        if any(a.size != n for a in arrs):
            raise ValueError("all parameter vectors must have the same length")
        if not 0 <= self.n_real <= n:
            raise ValueError("n_real out of range")
        for k, a in zip(("radii", "phases", "residue_re", "residue_im"), arrs):
            a.setflags(write=False)
            object.__setattr__(self, k, a)

    @property
    def n_modes(self):
        return self.radii.size

    @property
    def order(self):
        """State dimension of the exported (real-response) system."""
        if self.paired:
            return 2 * (self.n_modes - self.n_real) + self.n_real
        return self.n_modes

    @property
    def poles(self):
        return self.radii * np.exp(1j * self.phases)

    @property
    def residues(self):
        return self.residue_re + 1j * self.residue_im

    def to_vector(self):
        return np.concatenate([self.radii, self.phases, self.residue_re, self.residue_im])

    @classmethod
    def from_vector(cls, vec, paired=True, n_real=0):
        r, a, br, bi = np.split(np.asarray(vec, dtype=float), 4)
        return cls(r, a, br, bi, paired, n_real)

    def frozen_mask(self):
        """Boolean mask over :meth:`to_vector` of entries held fixed."""
        n = self.n_modes
        mask = np.zeros(4 * n, dtype=bool)
        if self.paired and self.n_real:
            real = np.arange(n - self.n_real, n)
            mask[n + real] = True
            mask[3 * n + real] = True
        return mask

    def to_modal_ssm(self, h0=0.0, eps_distinct=EPS_DISTINCT):
        """Export as a :class:`ModalSSM` whose impulse response is the real part.

        Paired modes become ``(lambda, R/2), (conj lambda, conj R/2)``; a
        paired mode that landed on the real axis becomes one real pole with
        residue ``Re R``.
        """
        lam, R = self.poles, self.residues
        if not self.paired:
            return ModalSSM(lam, R, h0, False, eps_distinct)
        poles, res = [], []
        for k, (p, c) in enumerate(zip(lam, R)):
            if k >= self.n_modes - self.n_real or abs(p.imag) <= eps_distinct / 2:
                poles.append(complex(p.real))
                res.append(complex(c.real))
            else:
                poles.extend([p, np.conj(p)])
                res.extend([c / 2, np.conj(c) / 2])
        return ModalSSM(poles, res, h0, True, eps_distinct)


@dataclass(frozen=True)
class DistillConfig:
    """Settings for :func:`optimize`.

    ``order`` is the state dimension of the exported system.  The objective
    is ``"l2"`` (time domain) or ``"h2"`` (squared DFT error).  With
    ``real_part_objective=False`` and pairing off, the imaginary part of the
    complex modal sum is also pushed to zero.  ``polish_residues`` re-solves
    the residues by linear least squares at the best poles once Adam has
    finished; the result is kept only if it lowers the loss.  ``init`` picks
    the starting point: ``"random"`` (:func:`init_params`, varied by
    ``seed``) or ``"spectral"`` (:func:`spectral_init`).  Adam stops early
    once the error relative to the target's own energy (passthrough
    excluded) falls to ``stop_rel_error``.
    """

    order: int
    objective: str = "l2"
    iterations: int = 30_000
    learning_rate: float = 3e-4
    lr_floor: float = 1e-6
    schedule: str = "cosine"
    seed: int = 0
    conjugate_pairing: bool = True
    real_part_objective: bool = True
    polish_residues: bool = True
    init: str = "random"
    stop_rel_error: float = 1e-12

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.objective not in ("l2", "h2"):
            raise ValueError("objective must be 'l2' or 'h2'")
        if self.stop_rel_error < 0:
            raise ValueError("stop_rel_error must be non-negative")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 < self.lr_floor <= self.learning_rate:
            raise ValueError("need 0 < lr_floor <= learning_rate")
        if self.schedule not in ("cosine", "constant"):
            raise ValueError("schedule must be 'cosine' or 'constant'")
        if self.init not in ("random", "spectral"):
            raise ValueError("init must be 'random' or 'spectral'")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DistillReport:
    """Error metrics and run statistics of one distillation.

    ``h2_error`` is ``sqrt(sum_k |H_k - Hhat_k|^2 / L)``, which by Parseval
    equals the absolute l2 error and bounds ``linf_error``.
    ``aak_bound`` is ``sigma_{d+1}`` of the target's Hankel spectrum and
    ``aak_bound_sigma_d`` is ``sigma_d``; ``d`` here is ``effective_order``.
    """

    l2_error: float
    l2_error_rel: float
    linf_error: float
    h2_error: float
    hankel_error: Optional[float]
    aak_bound: Optional[float]
    aak_bound_sigma_d: Optional[float]
    effective_order: int
    iterations_run: int
    best_iteration: int
    final_lr: float
    wall_time: float
    restarts: int = 0
    final_loss: float = 0.0
    warnings: tuple = ()

    def __post_init__(self):
        if self.linf_error > self.h2_error + 1e-9:
            raise ConsistencyError(
                f"sup-norm error {self.linf_error:.3e} exceeds H2 error {self.h2_error:.3e}"
            )

    def to_dict(self):
        out = asdict(self)
        out["warnings"] = list(self.warnings)
        return out


# ----------------------------------------------------------------------------
# model evaluation, losses and gradients
# ----------------------------------------------------------------------------


def _taps(h):
    return h.taps if isinstance(h, Filter) else np.asarray(h, dtype=float).ravel()


def _mode_powers(params, L):
    """``z[n, k] = lambda_n^k`` for ``k = 0 .. L-2``, with overflow detection."""
    k = np.arange(max(L - 1, 0))
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        mag = np.exp(np.outer(np.log(params.radii), k))
        z = mag * np.exp(1j * np.outer(params.phases, k))
    bad = ~np.isfinite(z)
    if np.any(bad):
        first = int(np.nonzero(bad.any(axis=0))[0][0])
        raise SystemOverflowError(first + 1)
    return z, k


def _complex_taps(params, L, z=None):
    if z is None:
        z, _ = _mode_powers(params, L)
    return params.residues @ z


def eval_modal(params, length, h0=0.0):
    """Real-part impulse response of the modal parameters.

    ``taps[t] = sum_n r_n^(t-1) [Re R_n cos(alpha_n (t-1)) - Im R_n sin(alpha_n (t-1))]``
    for ``t >= 1`` and ``taps[0] = h0``.
    """
    L = int(length)
    if L < 1:
        raise ValueError("length must be >= 1")
    taps = np.empty(L)
    taps[0] = h0
    if L > 1:
        vals = _complex_taps(params, L).real
        if not np.all(np.isfinite(vals)):
            raise SystemOverflowError(1 + int(np.argmax(~np.isfinite(vals))))
        taps[1:] = vals
    return Filter(taps)


def loss_l2(h, hhat):
    """``sum_t (h_t - hhat_t)^2``."""
    a, b = _taps(h), _taps(hhat)
    if a.size != b.size:
        raise ValueError("filters must have equal length")
    return float(np.sum((a - b) ** 2))


def loss_h2(h, hhat):
    """``sum_k |H_k - Hhat_k|^2`` over the length-L DFT (equals ``L * loss_l2``)."""
    a, b = _taps(h), _taps(hhat)
    if a.size != b.size:
        raise ValueError("filters must have equal length")
    return float(np.sum(np.abs(np.fft.fft(a - b)) ** 2))


def grad_modal(params, target, objective="l2", real_part=True, return_loss=False):
    """Analytic gradient of the distillation loss.

    Parameters
    ----------
    params : ModalParams
    target : Filter
        The passthrough ``h_0`` is copied, so only taps ``t >= 1`` matter.
    objective : {"l2", "h2"}
    real_part : bool
        Fit ``Re`` of the modal sum (the default).  ``False`` fits the
        complex sum to the real target.
    return_loss : bool
        Also return the loss at ``params``.

    Returns
    -------
    ModalParams
        Gradient with the same layout as ``params``; frozen entries are 0.
    """
    h = _taps(target)
    L = h.size
    n = params.n_modes
    if L < 2 or n == 0:
        g = ModalParams(np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n), params.paired, params.n_real)
        return (g, 0.0) if return_loss else g
    z, k = _mode_powers(params, L)
    f = params.residues @ z
    e = (f.real if real_part else f) - h[1:]
    # huge but finite errors overflow when squared; that is reported below
    with np.errstate(over="ignore", invalid="ignore"):
        if objective == "l2":
            loss = float(np.sum(np.abs(e) ** 2))
            g = 2.0 * e
        else:
            full = np.zeros(L, dtype=e.dtype)
            full[1:] = e
            spec = np.fft.fft(full)
            loss = float(np.sum(np.abs(spec) ** 2))
            g = 2.0 * L * np.fft.ifft(spec)[1:]
            if real_part:
                g = g.real
    if not np.isfinite(loss):
        with np.errstate(over="ignore"):
            bad = ~np.isfinite(np.abs(e) ** 2)
        raise SystemOverflowError(1 + int(np.argmax(bad)))
    gc = np.conj(g)
    G = z @ gc
    Gk = z @ (k * gc)
    R = params.residues
    d_re = G.real
    d_im = -G.imag
    d_r = (R * Gk).real / params.radii
    d_a = -(R * Gk).imag
    vec = np.concatenate([d_r, d_a, d_re, d_im])
    vec[params.frozen_mask()] = 0.0
    grad = ModalParams.from_vector(vec, params.paired, params.n_real)
    return (grad, loss) if return_loss else grad


# ----------------------------------------------------------------------------
# initialisation and optimisation
# ----------------------------------------------------------------------------


def init_params(order, length, seed=0, conjugate_pairing=True):
    """Deterministic starting point.

    Radii ``0.99 exp(-(n / n_modes) (8 / L))`` spread the decay scales up to
    the filter length, phases are equispaced in ``(0, pi)`` and residues are
    drawn from ``N(0, (1/d)^2)``.
    """
    d = int(order)
    if d < 1:
        raise ValueError("order must be >= 1")
    L = max(int(length), 2)
    if conjugate_pairing:
        n_pairs, n_real = d // 2, d % 2
    else:
        n_pairs, n_real = d, 0
    n = n_pairs + n_real
    rng = np.random.default_rng(seed)
    idx = np.arange(1, n + 1)
    radii = 0.99 * np.exp(-(idx / n) * (8.0 / L))
    phases = np.zeros(n)
    if n_pairs:
        phases[:n_pairs] = np.pi * (np.arange(1, n_pairs + 1) - 0.5) / n_pairs
    scale = 1.0 / d
    res_re = rng.normal(0.0, scale, n)
    res_im = rng.normal(0.0, scale, n)
    if n_real and conjugate_pairing:
        res_im[n_pairs:] = 0.0
    return ModalParams(radii, phases, res_re, res_im, conjugate_pairing, n_real if conjugate_pairing else 0)


def spectral_init(target, order, conjugate_pairing=True):
    """Starting point estimated from the target's Hankel matrix.

    The dominant ``order``-dimensional eigenspace ``V`` of the corner-free
    Hankel matrix is shift invariant for an exactly order-``order`` filter,
    ``V[1:] = V[:-1] A``, so the eigenvalues of the least-squares ``A`` are
    the poles.  One stored mode is used per conjugate pair (surplus real
    poles get a tiny phase so Adam can split them) and the residues are
    then solved by least squares.
    """
    h = _taps(target)
    d = int(order)
    S = hankel_matrix(h)
    m = S.shape[0]
    if not 1 <= d < m:
        raise ValueError(f"spectral init needs 1 <= order < {m}")
    w, V = jacobi_eigh(S)
    V = V[:, np.argsort(-np.abs(w), kind="stable")[:d]]
    A, *_ = np.linalg.lstsq(V[:-1], V[1:], rcond=None)
    lam = eig_dense(A)
    lam = lam[np.argsort(-np.abs(lam), kind="stable")]
    if conjugate_pairing:
        n_pairs, n_real = d // 2, d % 2
        upper = [p for p in lam if p.imag > 1e-12]
        reals = [complex(p.real) for p in lam if abs(p.imag) <= 1e-12]
        real_modes = reals[:n_real]
        spare = reals[n_real:]
        pair_modes = upper[:n_pairs]
        while len(pair_modes) < n_pairs:
            p = spare.pop(0) if spare else complex(0.5)
            pair_modes.append(complex(p.real, 1e-3))
        while len(real_modes) < n_real:
            real_modes.append(complex(0.5))
        modes = np.array(pair_modes + real_modes, dtype=complex)
    else:
        n_real = 0
        modes = lam
    radii = np.clip(np.abs(modes), R_MIN, 1.0 - 1e-6)
    phases = np.angle(modes)
    zeros = np.zeros(modes.size)
    params = ModalParams(radii, phases, zeros, zeros, conjugate_pairing, n_real)
    return polish_residues(params, h)


def cosine_lr(i, iterations, lr, floor):
    """Cosine decay from ``lr`` at ``i = 0`` to ``floor`` at the last step."""
    if iterations <= 1:
        return lr
    return floor + 0.5 * (lr - floor) * (1.0 + math.cos(math.pi * i / (iterations - 1)))


def _run_adam(theta0, mask, target, config, lr, paired, n_real):
    """Adam loop; returns (best_theta, best_loss, best_iter, iters, last_lr) or raises."""
    theta = theta0.copy()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2 = ADAM_BETAS
    n = theta.size // 4
    best_theta, best_loss, best_iter = theta.copy(), np.inf, 0
    N = config.iterations
    h = _taps(target)
    with np.errstate(over="ignore"):
        scale = float(np.sum(h[1:] ** 2)) * (h.size if config.objective == "h2" else 1)
    stop = config.stop_rel_error ** 2 * scale
    cur_lr = lr
    for i in range(N):
        params = ModalParams.from_vector(theta, paired, n_real)
        grad, loss = grad_modal(params, target, config.objective, config.real_part_objective, True)
        gv = grad.to_vector()
        if not (np.isfinite(loss) and np.all(np.isfinite(gv))):
            raise FloatingPointError(f"non-finite loss at iteration {i}")
        if loss < best_loss:
            best_theta, best_loss, best_iter = theta.copy(), loss, i
        if loss <= stop:
            return best_theta, best_loss, best_iter, i + 1, cur_lr
        cur_lr = cosine_lr(i, N, lr, config.lr_floor * lr / config.learning_rate) \
            if config.schedule == "cosine" else lr
        m = b1 * m + (1 - b1) * gv
        v = b2 * v + (1 - b2) * gv * gv
        mhat = m / (1 - b1 ** (i + 1))
        vhat = v / (1 - b2 ** (i + 1))
        step = cur_lr * mhat / (np.sqrt(vhat) + ADAM_EPS)
        step[mask] = 0.0
        theta = theta - step
        theta[:n] = np.maximum(theta[:n], R_MIN)
    # the final iterate has not been scored yet
    try:
        params = ModalParams.from_vector(theta, paired, n_real)
        loss = loss_fn(params, target, config)
        if np.isfinite(loss) and loss < best_loss:
            best_theta, best_loss, best_iter = theta.copy(), loss, N
    except SystemOverflowError:
        pass
    return best_theta, best_loss, best_iter, N, cur_lr


def loss_fn(params, target, config):
    """Distillation objective of ``params`` under ``config``."""
    h = _taps(target)
    f = _complex_taps(params, h.size) if h.size > 1 else np.zeros(0)
    e = (f.real if config.real_part_objective else f) - h[1:]
    val = float(np.sum(np.abs(e) ** 2))
    return val * h.size if config.objective == "h2" else val


def polish_residues(params, target, real_part=True):
    """Least-squares optimal residues for fixed poles.

    The objective is quadratic in the residues, so they can be solved for
    exactly.  Frozen entries stay at zero.
    """
    h = _taps(target)
    L = h.size
    if L < 2 or params.n_modes == 0:
        return params
    z, _ = _mode_powers(params, L)
    free_im = ~params.frozen_mask()[3 * params.n_modes:]
    cols_re = z.T
    cols_im = (1j * z[free_im]).T
    basis = np.hstack([cols_re, cols_im])
    if real_part:
        A, b = basis.real, h[1:]
    else:
        A = np.vstack([basis.real, basis.imag])
        b = np.concatenate([h[1:], np.zeros(L - 1)])
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    n = params.n_modes
    res_im = np.zeros(n)
    res_im[free_im] = coef[n:]
    return ModalParams(params.radii, params.phases, coef[:n], res_im, params.paired, params.n_real)


def optimize(target, config, init=None, spectrum=None):
    """Fit a modal system to ``target``.

    Parameters
    ----------
    target : Filter
    config : DistillConfig
    init : ModalParams, optional
        Starting point; defaults to :func:`init_params` with ``config.seed``.
    spectrum : HankelSpectrum, optional
        Precomputed Hankel spectrum of ``target`` (saves one eigensolve).

    Returns
    -------
    system : ModalSSM
    report : DistillReport

    Raises
    ------
    DistillationError
        When the loss diverges twice (the retry uses a tenth of the
        learning rate).
    """
    if not isinstance(target, Filter):
        target = Filter(target)
    L = target.length
    notes = []
    if config.order > L / 2:
        notes.append(f"order {config.order} exceeds L/2 = {L / 2:g}")
    if not config.conjugate_pairing and config.real_part_objective is False:
        notes.append("complex objective: imaginary part of the modal sum is fit to zero")
    if init is not None:
        p0 = init
    elif config.init == "spectral" and config.order < default_hankel_size(L):
        p0 = spectral_init(target, config.order, config.conjugate_pairing)
    else:
        if config.init == "spectral":
            notes.append("spectral init needs order below the Hankel size; fell back to random init")
        p0 = init_params(config.order, L, config.seed, config.conjugate_pairing)
    mask = p0.frozen_mask()
    t0 = time.perf_counter()
    lr = config.learning_rate
    restarts = 0
    failures = []
    while True:
        try:
            theta, loss, best_iter, iters, last_lr = _run_adam(
                p0.to_vector(), mask, target, config, lr, p0.paired, p0.n_real)
            break
        except (FloatingPointError, SystemOverflowError) as err:
            failures.append({"learning_rate": lr, "error": str(err)})
            if restarts == 1:
                raise DistillationError(
                    "distillation diverged twice",
                    {"attempts": failures, "config": config.to_dict()},
                ) from err
            restarts += 1
            lr = lr / 10.0
            notes.append(f"diverged at learning rate {lr * 10:g}; restarted at {lr:g}")
    params = ModalParams.from_vector(theta, p0.paired, p0.n_real)
    if config.polish_residues:
        polished = polish_residues(params, target, config.real_part_objective)
        new_loss = loss_fn(polished, target, config)
        if new_loss < loss:
            params, loss = polished, new_loss
    wall = time.perf_counter() - t0
    system = params.to_modal_ssm(target.h0)
    if system.spectral_radius() >= 1.0:
        notes.append("exported system has a pole on or outside the unit circle")
    report = build_report(target, system, params, spectrum,
                          iterations_run=iters, best_iteration=best_iter,
                          final_lr=last_lr, wall_time=wall, restarts=restarts,
                          final_loss=loss, notes=notes)
    return system, report


def _effective_order(system):
    return system.real_closure().d


def build_report(target, system, params=None, spectrum=None, notes=(), **run):
    """Compute every error metric of ``system`` against ``target``."""
    h = _taps(target)
    L = h.size
    if params is not None:
        hhat = eval_modal(params, L, system.h0).taps
    else:
        from .linsys import impulse_response
        hhat = impulse_response(system, L).taps
    diff = h - hhat
    l2 = float(np.linalg.norm(diff))
    ref = float(np.linalg.norm(h))
    h2 = float(np.sqrt(np.sum(np.abs(np.fft.fft(diff)) ** 2) / L))
    notes = list(notes)
    try:
        hank = error_hankel_norm(h, hhat)
    except NumericalFailureError as err:
        hank = None
        notes.append(f"Hankel-norm error unavailable: {err}")
    d_eff = _effective_order(system)
    spec = spectrum if spectrum is not None else hankel_spectrum(h)
    if 1 <= d_eff < spec.size:
        bound = aak_lower_bound(spec, d_eff)
        bound_d = spec.sigma(d_eff)
    else:
        bound = bound_d = None
    return DistillReport(
        l2_error=l2,
        l2_error_rel=l2 / ref if ref > 0 else l2,
        linf_error=float(np.max(np.abs(diff))),
        h2_error=h2,
        hankel_error=hank,
        aak_bound=bound,
        aak_bound_sigma_d=bound_d,
        effective_order=d_eff,
        iterations_run=int(run.get("iterations_run", 0)),
        best_iteration=int(run.get("best_iteration", 0)),
        final_lr=float(run.get("final_lr", 0.0)),
        wall_time=float(run.get("wall_time", 0.0)),
        restarts=int(run.get("restarts", 0)),
        final_loss=float(run.get("final_loss", l2 ** 2)),
        warnings=tuple(notes),
    )


# ----------------------------------------------------------------------------
# truncation baselines
# ----------------------------------------------------------------------------


def modal_truncation(system, n):
    """Keep the ``n`` most influential modes of a modal system.

    Modes are ranked by ``|R_i| / |1 - |lambda_i||``, ties broken by larger
    ``|R_i|`` and then by lower index.  Conjugate pairs of a conjugate-closed
    system are kept or dropped together; a pair that does not fit in the
    remaining budget is skipped in favour of the next unit that does.
    """
    d = system.d
    n = int(n)
    if not 1 <= n <= d:
        raise ValueError(f"need 1 <= n <= {d}, got {n}")
    lam, R = system.poles, system.residues
    mag = np.abs(lam)
    notes = list(system.notes)
    on_circle = mag == 1.0
    if np.any(on_circle):
        msg = f"{int(on_circle.sum())} mode(s) on the unit circle have infinite score and are kept"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    with np.errstate(divide="ignore"):
        score = np.where(on_circle, np.inf, np.abs(R) / np.abs(1.0 - mag))
    units = []
    if system.conjugate_closed:
        seen = set()
        for i in range(d):
            if i in seen:
                continue
            if lam[i].imag == 0.0:
                units.append((i,))
                seen.add(i)
                continue
            j = next(j for j in range(d) if j not in seen and j != i and lam[j] == np.conj(lam[i]))
            units.append((i, j))
            seen.update((i, j))
    else:
        units = [(i,) for i in range(d)]
    units.sort(key=lambda u: (-score[u[0]], -abs(R[u[0]]), min(u)))
    keep, budget = [], n
    for u in units:
        if len(u) <= budget:
            keep.extend(u)
            budget -= len(u)
        if budget == 0:
            break
    keep.sort()
    return ModalSSM(lam[keep], R[keep], system.h0, system.conjugate_closed,
                    system.eps_distinct, tuple(notes))


def modal_truncation_bound(system, kept):
    """``sum_dropped |R_i| / |1 - |lambda_i||`` for the modes absent from ``kept``."""
    kept_set = {complex(p) for p in kept.poles}
    total = 0.0
    for lam, r in zip(system.poles, system.residues):
        if complex(lam) not in kept_set:
            total += abs(r) / abs(1.0 - abs(lam))
    return total


def balanced_truncation(target, n, return_sigmas=False):
    """Order-``n`` realisation of a filter by balanced truncation.

    The Hankel matrix ``S = (h_{i+j-1})`` of size ``L - 1`` is
    eigendecomposed, eigenvectors are ordered by ``|eigenvalue|`` (the
    Hankel singular values) and with ``V = V[:, :n]``::

        A = V[1:].T @ V[:-1],  B = V[0],  C = h[1:L] @ V,  D = h_0.

    This is an orthogonal projection of the shift-register realisation of
    the filter onto its dominant Hankel directions.  The result carries a
    note when ``sigma_n`` and ``sigma_{n+1}`` coincide to 1e-10 relative.
    """
    h = _taps(target)
    L = h.size
    d = L - 1
    if d < 1:
        raise ValueError("filter too short for balanced truncation")
    n = int(n)
    if not 1 <= n <= d:
        raise ValueError(f"need 1 <= n <= {d}, got {n}")
    ext = np.zeros(2 * d)
    ext[:L] = h
    idx = np.arange(d)
    S = ext[1 + idx[:, None] + idx[None, :]]
    w, V = jacobi_eigh(S)
    order = np.argsort(-np.abs(w), kind="stable")
    sig = np.abs(w[order])
    V = V[:, order]
    notes = []
    if n < d and abs(sig[n - 1] - sig[n]) <= 1e-10 * max(sig[0], np.finfo(float).tiny):
        notes.append(f"sigma_{n} and sigma_{n + 1} are not separated; the truncation is not unique")
    Vn = V[:, :n]
    A = Vn[1:].T @ Vn[:-1]
    B = Vn[0].copy()
    C = h[1:d + 1] @ Vn
    system = DenseSSM(A, B, C, h[0], tuple(notes))
    return (system, sig) if return_sigmas else system


# ----------------------------------------------------------------------------
# banks
# ----------------------------------------------------------------------------


@dataclass
class BankResult:
    """Per-filter outcomes of :func:`distill_bank` plus aggregate statistics."""

    systems: list
    reports: list
    errors: list
    aggregate: dict = field(default_factory=dict)

    @property
    def n_failed(self):
        return sum(e is not None for e in self.errors)


def _distill_one(args):
    taps, config = args
    try:
        system, report = optimize(Filter(taps), config)
        return system, report, None
    except Exception as err:  # isolated per filter by contract
        return None, None, f"{type(err).__name__}: {err}"


def aggregate_reports(reports):
    """Min/mean/max of the main error metrics over successful runs."""
    ok = [r for r in reports if r is not None]
    out = {"count": len(reports), "succeeded": len(ok)}
    for key in ("l2_error", "l2_error_rel", "linf_error", "h2_error", "hankel_error"):
        vals = np.array([getattr(r, key) for r in ok if getattr(r, key) is not None], dtype=float)
        if vals.size:
            out[key] = {"min": float(vals.min()), "mean": float(vals.mean()), "max": float(vals.max())}
    return out


def distill_bank(filters, config, workers=1):
    """Distill every filter of a bank independently.

    Results are returned in input order and depend only on the filter and
    ``config``; ``workers > 1`` fans out over processes.  A failing filter
    yields ``None`` entries and an error string instead of aborting.
    """
    taps = [_taps(f) for f in filters]
    if not taps:
        raise ValueError("empty filter bank")
    jobs = [(t, config) for t in taps]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_distill_one, jobs))
    else:
        results = [_distill_one(j) for j in jobs]
    systems = [r[0] for r in results]
    reports = [r[1] for r in results]
    errors = [r[2] for r in results]
    return BankResult(systems, reports, errors, aggregate_reports(reports))
