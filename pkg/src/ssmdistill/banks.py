"""Binary bank formats and synthetic filter banks.

Two little-endian containers are supported.

``LHFB`` (filter bank)::

    magic "LHFB" | u32 version | u32 count | u64 length | u32 dtype | payload

with ``dtype`` 0 for float64 and 1 for float32 and a row-major
``count x length`` payload.

``LHSS`` (modal system bank)::

    magic "LHSS" | u32 version | u32 count | records...
    record: u32 d | f64 h0 | d x (f64 re, f64 im) poles | d x (f64 re, f64 im) residues

Readers raise :class:`BankFormatError` carrying the byte offset at which
the file stops making sense.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import BankFormatError
from .linsys import Filter, ModalSSM, impulse_response

FILTER_MAGIC = b"LHFB"
SSM_MAGIC = b"LHSS"
FORMAT_VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_FB_HEADER = struct.Struct("<4sIIQI")
_SS_HEADER = struct.Struct("<4sII")
_SS_RECORD = struct.Struct("<Id")


def _read_bytes(source):
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    return Path(source).read_bytes()


def _check_header(buf, header, magic):
    if len(buf) < header.size:
        raise BankFormatError(f"file too short for header ({len(buf)} < {header.size} bytes)", len(buf))
    fields = header.unpack_from(buf, 0)
    if fields[0] != magic:
        raise BankFormatError(f"bad magic {fields[0]!r}, expected {magic!r}", 0)
    if fields[1] != FORMAT_VERSION:
        raise BankFormatError(f"unsupported version {fields[1]}", 4)
    return fields


def _first_nonfinite(values, base, itemsize):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise BankFormatError("non-finite value in payload", base + int(bad[0]) * itemsize)


# ----------------------------------------------------------------------------
# filter banks
# ----------------------------------------------------------------------------


def encode_filter_bank(taps, dtype=0):
    """Serialise a ``count x L`` array (or list of filters) to LHFB bytes."""
    arr = np.asarray([f.taps if isinstance(f, Filter) else f for f in taps], dtype=float)
    if arr.ndim != 2:
        raise ValueError("filter bank must be a 2-d array of taps")
    if dtype not in _DTYPES:
        raise ValueError(f"unknown dtype code {dtype}")
    header = _FB_HEADER.pack(FILTER_MAGIC, FORMAT_VERSION, arr.shape[0], arr.shape[1], dtype)
    return header + arr.astype(_DTYPES[dtype]).tobytes(order="C")


def decode_filter_bank(buf):
    """Parse LHFB bytes into a float64 ``count x L`` array."""
    _, _, count, length, code = _check_header(buf, _FB_HEADER, FILTER_MAGIC)
    if code not in _DTYPES:
        raise BankFormatError(f"unknown dtype code {code}", 20)
    dt = _DTYPES[code]
    start = _FB_HEADER.size
    expected = count * length * dt.itemsize
    got = len(buf) - start
    if got < expected:
        raise BankFormatError(f"payload truncated: {got} of {expected} bytes", len(buf))
    if got > expected:
        raise BankFormatError(f"{got - expected} trailing bytes after payload", start + expected)
    if count and not length:
        raise BankFormatError("filters of length 0", 12)
    values = np.frombuffer(buf, dtype=dt, count=count * length, offset=start)
    _first_nonfinite(values, start, dt.itemsize)
    return values.astype(float).reshape(count, length)


def write_filter_bank(path, taps, dtype=0):
    Path(path).write_bytes(encode_filter_bank(taps, dtype))


def read_filter_bank(source):
    """Read a filter bank from a path or raw bytes."""
    return decode_filter_bank(_read_bytes(source))


# ----------------------------------------------------------------------------
# SSM banks
# ----------------------------------------------------------------------------


def encode_ssm_bank(systems):
    """Serialise modal systems to LHSS bytes.

    ``None`` entries (failed fits) are written as order-0 records with a
    zero passthrough.
    """
    parts = [_SS_HEADER.pack(SSM_MAGIC, FORMAT_VERSION, len(systems))]
    for sys_ in systems:
        if sys_ is None:
            parts.append(_SS_RECORD.pack(0, 0.0))
            continue
        parts.append(_SS_RECORD.pack(sys_.d, sys_.h0))
        for arr in (sys_.poles, sys_.residues):
            parts.append(np.ascontiguousarray(arr, dtype="<c16").tobytes())
    return b"".join(parts)


def decode_ssm_bank(buf):
    """Parse LHSS bytes into a list of :class:`ModalSSM`."""
    _, _, count = _check_header(buf, _SS_HEADER, SSM_MAGIC)
    pos = _SS_HEADER.size
    systems = []
    for i in range(count):
        if pos + _SS_RECORD.size > len(buf):
            raise BankFormatError(f"record {i} header truncated", len(buf))
        d, h0 = _SS_RECORD.unpack_from(buf, pos)
        if not np.isfinite(h0):
            raise BankFormatError(f"record {i} has non-finite h0", pos + 4)
        pos += _SS_RECORD.size
        nbytes = 2 * d * 16
        if pos + nbytes > len(buf):
            raise BankFormatError(f"record {i} payload truncated (order {d})", len(buf))
        vals = np.frombuffer(buf, dtype="<f8", count=4 * d, offset=pos)
        _first_nonfinite(vals, pos, 8)
        cplx = vals.view("<c16").astype(complex)
        try:
            systems.append(ModalSSM(cplx[:d], cplx[d:], h0))
        except Exception as err:
            raise BankFormatError(f"record {i} is not a valid modal system: {err}", pos) from err
        pos += nbytes
    if pos != len(buf):
        raise BankFormatError(f"{len(buf) - pos} trailing bytes after last record", pos)
    return systems


def write_ssm_bank(path, systems):
    Path(path).write_bytes(encode_ssm_bank(systems))


def read_ssm_bank(source):
    return decode_ssm_bank(_read_bytes(source))


# ----------------------------------------------------------------------------
# synthetic banks
# ----------------------------------------------------------------------------


def hyena_window(length, rate=None):
    """Exponential decay window ``exp(-rate t)``; keeps rank since it only scales poles."""
    rate = 2.0 / length if rate is None else rate
    return np.exp(-rate * np.arange(length))


def damped_sinusoid_filter(rng, length, order):
    """Windowed sum of damped sinusoids whose Hankel rank equals ``order``.

    ``order // 2`` damped cosines (rank two each) plus one damped
    exponential for odd orders; decay rates are log-spaced in
    ``[2/L, 64/L]`` with a random shuffle across components.
    """
    n_pairs, n_real = order // 2, order % 2
    n = n_pairs + n_real
    rates = np.geomspace(2.0 / length, 64.0 / length, max(n, 1))[:n]
    rates = rng.permutation(rates)
    t = np.arange(length)
    h = np.zeros(length)
    # well separated frequencies, one per stratum of (0, pi)
    strata = (np.arange(n_pairs) + rng.uniform(0.2, 0.8, n_pairs)) * np.pi / max(n_pairs, 1)
    for k in range(n_pairs):
        amp, phase = rng.uniform(0.5, 1.5), rng.uniform(0, 2 * np.pi)
        h[1:] += amp * np.exp(-rates[k] * t[1:]) * np.cos(strata[k] * t[1:] + phase)
    if n_real:
        sign = rng.choice([-1.0, 1.0])
        h[1:] += sign * rng.uniform(0.5, 1.5) * np.exp(-rates[-1] * t[1:])
    h[0] = rng.uniform(-0.5, 0.5)
    return h * hyena_window(length)


def planted_modal_system(rng, order, rmin=0.6, rmax=0.95):
    """Random conjugate-closed modal system of exact order ``order``.

    Pole angles are stratified over ``(0, pi)`` so modes stay distinct; an
    odd order adds one real pole.
    """
    n_pairs, n_real = order // 2, order % 2
    r = rng.uniform(rmin, rmax, n_pairs)
    theta = (np.arange(n_pairs) + rng.uniform(0.2, 0.8, n_pairs)) * np.pi / max(n_pairs, 1)
    lam = r * np.exp(1j * theta)
    res = rng.uniform(0.5, 1.5, n_pairs) * np.exp(1j * rng.uniform(0, 2 * np.pi, n_pairs))
    poles = list(np.ravel(np.column_stack([lam, lam.conj()])))
    residues = list(np.ravel(np.column_stack([res / 2, res.conj() / 2])))
    if n_real:
        poles.append(rng.choice([-1.0, 1.0]) * rng.uniform(rmin, rmax))
        residues.append(rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.5))
    return ModalSSM(poles, residues, rng.uniform(-0.5, 0.5), conjugate_closed=True)


def synth_bank(kind, count, length, order=8, seed=0):
    """Deterministic synthetic bank.

    Returns
    -------
    taps : ndarray
        ``count x length`` array.
    truth : list of ModalSSM or None
        Ground-truth systems for ``kind="planted-ssm"``.
    """
    if count < 1 or length < 2:
        raise ValueError("need count >= 1 and length >= 2")
    rng = np.random.default_rng(seed)
    if kind == "zero":
        return np.zeros((count, length)), None
    if kind == "damped-sinusoid":
        return np.array([damped_sinusoid_filter(rng, length, order) for _ in range(count)]), None
    if kind == "planted-ssm":
        systems = [planted_modal_system(rng, order) for _ in range(count)]
        return np.array([impulse_response(s, length).taps for s in systems]), systems
    raise ValueError(f"unknown synthetic kind {kind!r}")


def systems_to_json(systems):
    """Ground-truth sidecar content for planted banks."""
    return [
        {
            "order": s.d,
            "h0": s.h0,
            "poles": [[p.real, p.imag] for p in s.poles],
            "residues": [[r.real, r.imag] for r in s.residues],
        }
        for s in systems
    ]


def write_sidecar(path, systems, config):
    payload = {"schema_version": 1, "config": config, "systems": systems_to_json(systems)}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
