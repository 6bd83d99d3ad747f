import struct

import numpy as np
import pytest

from ssmdistill.banks import (
    decode_filter_bank,
    decode_ssm_bank,
    encode_filter_bank,
    encode_ssm_bank,
    read_filter_bank,
    synth_bank,
    systems_to_json,
    write_filter_bank,
)
from ssmdistill.errors import BankFormatError
from ssmdistill.linsys import ModalSSM, impulse_response
from ssmdistill.spectral import estimate_order, hankel_spectrum

from conftest import random_modal


def full_mantissa(rng, shape):
    # random bit patterns reinterpreted as doubles, filtered to finite values
    bits = rng.integers(0, 2**63, size=np.prod(shape) * 2, dtype=np.uint64)
    vals = bits.view(np.float64)
    vals = vals[np.isfinite(vals)][: np.prod(shape)]
    return vals.reshape(shape)


def test_filter_bank_roundtrip_bit_exact(rng):
    taps = full_mantissa(rng, (5, 33))
    buf = encode_filter_bank(taps)
    back = decode_filter_bank(buf)
    assert back.tobytes() == taps.astype("<f8").tobytes()
    assert encode_filter_bank(back) == buf


def test_filter_bank_header_layout():
    buf = encode_filter_bank(np.ones((2, 3)))
    magic, version, count, length, dtype = struct.unpack_from("<4sIIQI", buf)
    assert (magic, version, count, length, dtype) == (b"LHFB", 1, 2, 3, 0)
    assert len(buf) == 24 + 2 * 3 * 8


def test_filter_bank_float32(rng):
    taps = rng.standard_normal((3, 10)).astype(np.float32)
    back = decode_filter_bank(encode_filter_bank(taps, dtype=1))
    assert back.dtype == np.float64
    np.testing.assert_array_equal(back.astype(np.float32), taps)


def test_filter_bank_file_roundtrip(tmp_path, rng):
    taps = rng.standard_normal((4, 16))
    write_filter_bank(tmp_path / "b.lhfb", taps)
    np.testing.assert_array_equal(read_filter_bank(tmp_path / "b.lhfb"), taps)


@pytest.mark.parametrize(
    "mutate, offset",
    [
        (lambda b: b"XXXX" + b[4:], 0),
        (lambda b: b[:4] + struct.pack("<I", 7) + b[8:], 4),
        (lambda b: b[:20] + struct.pack("<I", 9) + b[24:], 20),
        (lambda b: b[:-5], "end"),
        (lambda b: b + b"\0", 24 + 2 * 4 * 8),
        (lambda b: b[:10], "end"),
    ],
)
def test_filter_bank_malformed_offsets(mutate, offset):
    good = encode_filter_bank(np.ones((2, 4)))
    bad = mutate(good)
    with pytest.raises(BankFormatError) as exc:
        decode_filter_bank(bad)
    assert exc.value.offset == (len(bad) if offset == "end" else offset)


def test_filter_bank_nonfinite_offset():
    taps = np.ones((2, 4))
    taps[1, 2] = np.nan
    buf = encode_filter_bank(taps)
    with pytest.raises(BankFormatError) as exc:
        decode_filter_bank(buf)
    assert exc.value.offset == 24 + (4 + 2) * 8


def test_ssm_bank_roundtrip_bit_exact(rng):
    systems = [random_modal(rng, k, h0=float(rng.standard_normal())) for k in (1, 3, 8)]
    systems.append(ModalSSM([0.5], [2.0], 0.0))
    buf = encode_ssm_bank(systems)
    back = decode_ssm_bank(buf)
    assert encode_ssm_bank(back) == buf
    for a, b in zip(systems, back):
        assert a.poles.tobytes() == b.poles.tobytes()
        assert a.residues.tobytes() == b.residues.tobytes()
        assert a.h0 == b.h0


def test_ssm_bank_failed_entry_is_order_zero():
    back = decode_ssm_bank(encode_ssm_bank([None]))
    assert back[0].d == 0
    assert np.all(impulse_response(back[0], 8).taps == 0)


def test_ssm_bank_truncated_and_trailing(rng):
    buf = encode_ssm_bank([random_modal(rng, 2)])
    with pytest.raises(BankFormatError) as exc:
        decode_ssm_bank(buf[:-3])
    assert exc.value.offset == len(buf) - 3
    with pytest.raises(BankFormatError) as exc:
        decode_ssm_bank(buf + b"ab")
    assert exc.value.offset == len(buf)
    with pytest.raises(BankFormatError) as exc:
        decode_ssm_bank(b"LHFB" + buf[4:])
    assert exc.value.offset == 0


def test_ssm_bank_duplicate_poles_rejected():
    buf = encode_ssm_bank([ModalSSM([0.5, 0.6], [1.0, 1.0])])
    # overwrite the second pole with the first
    rec = 12 + 12
    buf = buf[:rec + 16] + buf[rec:rec + 16] + buf[rec + 32:]
    with pytest.raises(BankFormatError) as exc:
        decode_ssm_bank(buf)
    assert exc.value.offset == rec


# --- synthetic banks ---------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["damped-sinusoid", "planted-ssm", "zero"])
def test_synth_deterministic(kind):
    a, _ = synth_bank(kind, 3, 64, 4, seed=5)
    b, _ = synth_bank(kind, 3, 64, 4, seed=5)
    assert a.tobytes() == b.tobytes()
    c, _ = synth_bank(kind, 3, 64, 4, seed=6)
    assert kind == "zero" or a.tobytes() != c.tobytes()


def test_synth_zero():
    taps, truth = synth_bank("zero", 2, 10)
    assert np.all(taps == 0) and truth is None


@pytest.mark.parametrize("kind", ["damped-sinusoid", "planted-ssm"])
@pytest.mark.parametrize("order", [1, 4, 8])
def test_synth_rank(kind, order):
    taps, _ = synth_bank(kind, 5, 256, order, seed=order)
    assert [estimate_order(hankel_spectrum(t), 1e-6)[0] for t in taps] == [order] * 5


def test_planted_truth_matches_taps():
    taps, truth = synth_bank("planted-ssm", 3, 128, 6, seed=1)
    for t, s in zip(taps, truth):
        np.testing.assert_array_equal(t, impulse_response(s, 128).taps)
        assert s.d == 6 and s.spectral_radius() < 1
    js = systems_to_json(truth)
    assert js[0]["order"] == 6 and len(js[0]["poles"]) == 6


def test_synth_rejects_unknown_kind():
    with pytest.raises(ValueError):
        synth_bank("chirp", 1, 16)
