"""Command-line entry point: ``ssmdistill <command> [options]``.

Commands
--------
synth    write a deterministic synthetic filter bank
analyze  Hankel spectra, order estimates and AAK bounds of a filter bank
distill  fit modal systems to every filter of a bank
verify   compare convolutional and recurrent execution of a bank pair
bench    counter-based generation benchmark to CSV

Exit codes: 0 success, 1 I/O failure, 2 malformed input or usage error,
3 every filter failed to distill.  Data goes to files or stdout; all
diagnostics go to stderr.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .banks import (
    read_filter_bank,
    read_ssm_bank,
    synth_bank,
    write_filter_bank,
    write_sidecar,
    write_ssm_bank,
)
from .distill import DistillConfig, distill_bank
from .errors import BankFormatError
from .hblock import HBlockSpec, channel_error_bound, default_short_filters, forward_conv, forward_recurrent
from .linsys import Filter, impulse_response
from .runtime import complexity_report, generate_conv, generate_recurrent, write_csv
from .spectral import aak_lower_bound, estimate_order, hankel_spectrum

SCHEMA_VERSION = 1
SIGMA_CAP = 512
AAK_ORDERS = (4, 8, 16, 32, 64)
BOUND_SLACK = 1e-9

EXIT_OK, EXIT_IO, EXIT_FORMAT, EXIT_ALL_FAILED = 0, 1, 2, 3

log = logging.getLogger("ssmdistill")


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _int_list(text):
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or min(vals) < 0:
        raise argparse.ArgumentTypeError("expected non-negative integers")
    return vals


def _repeats(text):
    val = int(text)
    if val < 3:
        raise argparse.ArgumentTypeError("--repeats must be at least 3")
    return val


def _effective_config(args):
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    return json.loads(json.dumps(cfg, default=str))


def _emit_json(payload, out):
    text = json.dumps(payload, indent=2, allow_nan=False, default=_json_default) + "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _load_filters(path):
    try:
        return read_filter_bank(path)
    except BankFormatError as err:
        raise CLIError(f"{path}: malformed filter bank at byte offset {err.offset}: {err}", EXIT_FORMAT)
    except OSError as err:
        raise CLIError(f"{path}: {err}", EXIT_IO)


def _load_ssms(path):
    try:
        return read_ssm_bank(path)
    except BankFormatError as err:
        raise CLIError(f"{path}: malformed SSM bank at byte offset {err.offset}: {err}", EXIT_FORMAT)
    except OSError as err:
        raise CLIError(f"{path}: {err}", EXIT_IO)


def _header(command, args):
    return {"schema_version": SCHEMA_VERSION, "tool_version": __version__,
            "command": command, "config": _effective_config(args)}


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------


def cmd_synth(args):
    taps, truth = synth_bank(args.kind, args.count, args.length, args.order, args.seed)
    write_filter_bank(args.out, taps)
    if truth is not None:
        sidecar = args.sidecar or str(args.out) + ".json"
        write_sidecar(sidecar, truth, _effective_config(args))
        log.info("wrote ground truth to %s", sidecar)
    log.info("wrote %d filters of length %d to %s", args.count, args.length, args.out)
    return EXIT_OK


def cmd_analyze(args):
    bank = _load_filters(args.input)
    rows = []
    for i, taps in enumerate(bank):
        spec = hankel_spectrum(taps, size=args.size)
        order, flag = estimate_order(spec, args.tol)
        bounds = {str(n): (aak_lower_bound(spec, n) if n < spec.size else None) for n in AAK_ORDERS}
        rows.append({
            "index": i,
            "hankel_size": spec.size,
            "sigmas": [float(s) for s in spec.sigmas[:SIGMA_CAP]],
            "sigmas_truncated": spec.size > SIGMA_CAP,
            "order": order,
            "flag": flag,
            "aak_bounds": bounds,
        })
    payload = _header("analyze", args)
    payload["filters"] = rows
    orders = [r["order"] for r in rows]
    payload["summary"] = {"count": len(rows), "order_min": min(orders), "order_max": max(orders),
                          "order_mean": float(np.mean(orders))}
    _emit_json(payload, args.out)
    return EXIT_OK


def _resolve_workers(value):
    if value is not None:
        return value
    env = os.environ.get("LH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer LH_THREADS=%r", env)
    return 1


def cmd_distill(args):
    bank = _load_filters(args.input)
    args.workers = _resolve_workers(args.workers)
    config = DistillConfig(
        order=args.order, objective=args.objective, iterations=args.iters,
        learning_rate=args.lr, seed=args.seed, polish_residues=not args.no_polish,
        init=args.init, lr_floor=min(1e-6, args.lr),
    )
    result = distill_bank(list(bank), config, workers=args.workers)
    write_ssm_bank(args.out, result.systems)
    per = []
    for i, (rep, err) in enumerate(zip(result.reports, result.errors)):
        entry = {"index": i, "ok": err is None}
        if err is not None:
            entry["error"] = err
            log.warning("filter %d failed: %s", i, err)
        else:
            entry.update(rep.to_dict())
        per.append(entry)
    payload = _header("distill", args)
    payload["distill_config"] = config.to_dict()
    payload["filters"] = per
    payload["aggregate"] = result.aggregate
    if args.report:
        _emit_json(payload, args.report)
    if result.n_failed == len(bank):
        log.error("all %d filters failed", len(bank))
        return EXIT_ALL_FAILED
    return EXIT_OK


def _verify_one(i, taps, ssm, T, K, rng, block_len):
    L = taps.size
    h = Filter(taps)
    n = T + K
    prompt = rng.standard_normal(T)
    drive = rng.standard_normal(K)
    y_conv = generate_conv(h, prompt, K, feedback=drive)
    y_rec = generate_recurrent(ssm, prompt, K, feedback=drive)
    gen_gap = np.abs(y_conv - y_rec)
    # both runs see the same input u = prompt ++ drive; compare filters on T + K taps
    u = np.concatenate([prompt, drive])
    h_pad = np.zeros(n)
    h_pad[:min(L, n)] = taps[:n]
    hhat_n = impulse_response(ssm, n).taps
    gap_bound = float(np.linalg.norm(u) * np.linalg.norm(h_pad - hhat_n))
    # filter-level sup norm against the H2 (= l2 by Parseval) error over L taps
    diff_L = taps - impulse_response(ssm, L).taps
    linf = float(np.max(np.abs(diff_L)))
    h2 = float(np.sqrt(np.sum(np.abs(np.fft.fft(diff_L)) ** 2) / L))
    # block-level cross-mode check: one head, two channels
    width = 2
    spec_conv = HBlockSpec(width, 1, default_short_filters(width, seed=i), [Filter(taps[:block_len])])
    spec_rec = spec_conv.with_long_filters([ssm])
    ub = rng.standard_normal((block_len, width))
    blk_gap = np.abs(forward_recurrent(ub, spec_rec) - forward_conv(ub, spec_conv))
    blk_bound = channel_error_bound(ub, spec_conv, spec_conv.long_filters, [ssm])
    return {
        "index": i,
        "generation_max_abs": float(gen_gap.max()) if K else 0.0,
        "generation_mean_abs": float(gen_gap.mean()) if K else 0.0,
        "output_gap_bound": gap_bound,
        "output_gap_bound_holds": bool(gen_gap.max(initial=0.0) <= gap_bound + BOUND_SLACK),
        "filter_linf_error": linf,
        "filter_h2_error": h2,
        "linf_le_h2_holds": bool(linf <= h2 + BOUND_SLACK),
        "block_max_abs": float(blk_gap.max()),
        "block_mean_abs": float(blk_gap.mean()),
        "block_bound_holds": bool(np.all(blk_gap <= blk_bound + BOUND_SLACK)),
    }


def cmd_verify(args):
    bank = _load_filters(args.filters)
    ssms = _load_ssms(args.ssms)
    if len(bank) != len(ssms):
        raise CLIError(f"count mismatch: {len(bank)} filters vs {len(ssms)} systems", EXIT_FORMAT)
    rng = np.random.default_rng(args.seed)
    block_len = min(bank.shape[1], args.block_length)
    rows = [_verify_one(i, taps, s, args.prompt_len, args.gen_len, rng, block_len)
            for i, (taps, s) in enumerate(zip(bank, ssms))]
    for r in rows:
        worst = max(r["generation_max_abs"], r["block_max_abs"])
        r["within_tolerance"] = bool(worst <= args.tol)
    payload = _header("verify", args)
    payload["filters"] = rows
    payload["summary"] = {
        "generation_max_abs": max(r["generation_max_abs"] for r in rows),
        "generation_mean_abs": float(np.mean([r["generation_mean_abs"] for r in rows])),
        "block_max_abs": max(r["block_max_abs"] for r in rows),
        "all_output_gap_bounds_hold": all(r["output_gap_bound_holds"] for r in rows),
        "all_linf_le_h2_hold": all(r["linf_le_h2_holds"] for r in rows),
        "all_block_bounds_hold": all(r["block_bound_holds"] for r in rows),
        "all_within_tolerance": all(r["within_tolerance"] for r in rows),
    }
    _emit_json(payload, args.out)
    return EXIT_OK


def cmd_bench(args):
    ssms = _load_ssms(args.ssms)
    rng = np.random.default_rng(args.seed)
    reports = []
    for ssm in ssms:
        for T in args.prompt_len:
            prompt = rng.standard_normal(T)
            for K in args.gen_len:
                runs = []
                for _ in range(args.repeats):
                    if args.mode == "conv":
                        filt = impulse_response(ssm, max(T + K, 1))
                        _, sess = generate_conv(filt, prompt, K, return_session=True)
                        rep = complexity_report(sess)
                        rep["d"] = ssm.d
                    else:
                        _, sess = generate_recurrent(ssm, prompt, K, prefill=args.prefill, return_session=True)
                        rep = complexity_report(sess)
                    runs.append(rep)
                rep = dict(runs[0])
                rep["wall_ns"] = int(np.median([r["wall_ns"] for r in runs]))
                reports.append(rep)
    if args.out in (None, "-"):
        write_csv(reports, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            write_csv(reports, fh)
    return EXIT_OK


# ----------------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="ssmdistill", description="Distill long convolution filters into modal SSMs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic filter bank")
    p.add_argument("--kind", required=True, choices=["damped-sinusoid", "planted-ssm", "zero"])
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--length", type=int, default=256)
    p.add_argument("--order", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--sidecar", help="ground-truth JSON path (default: <out>.json)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="Hankel spectral analysis of a filter bank")
    p.add_argument("--input", required=True)
    p.add_argument("--size", type=int, default=None, help="Hankel matrix size (default: corner-free)")
    p.add_argument("--tol", type=float, default=1e-4, help="relative singular value threshold")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("distill", help="fit modal systems to a filter bank")
    p.add_argument("--input", required=True)
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--objective", choices=["l2", "h2"], default="l2")
    p.add_argument("--iters", type=int, default=30_000)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=["random", "spectral"], default="spectral")
    p.add_argument("--no-polish", action="store_true", help="skip the final least-squares residue solve")
    p.add_argument("--workers", type=int, default=None, help="process count (default: $LH_THREADS or 1)")
    p.add_argument("--out", required=True, help="output SSM bank")
    p.add_argument("--report", default=None, help="JSON report path ('-' for stdout)")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("verify", help="conv vs recurrent execution of a filter/SSM bank pair")
    p.add_argument("--filters", required=True)
    p.add_argument("--ssms", required=True)
    p.add_argument("--prompt-len", type=int, default=64)
    p.add_argument("--gen-len", type=int, default=64)
    p.add_argument("--block-length", type=int, default=64)
    p.add_argument("--tol", type=float, default=1e-7, help="threshold for within_tolerance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="generation benchmark (CSV)")
    p.add_argument("--ssms", required=True)
    p.add_argument("--prompt-len", type=_int_list, default=[64], help="comma-separated prompt lengths")
    p.add_argument("--gen-len", type=_int_list, default=[64], help="comma-separated generation lengths")
    p.add_argument("--mode", choices=["conv", "recurrent"], default="recurrent")
    p.add_argument("--prefill", choices=["step", "fft"], default="step")
    p.add_argument("--repeats", type=_repeats, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="ssmdistill: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except CLIError as err:
        print(f"ssmdistill: error: {err}", file=sys.stderr)
        return err.code
    except ValueError as err:
        print(f"ssmdistill: error: {err}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as err:
        print(f"ssmdistill: error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
