"""Command-line entry point.

Exit status: 0 on success, 1 when a pairing session fails, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path

import numpy as np

from . import recon, trace_io
from .bitext import KEY_CONFIGS
from .protocol import SessionParams, TcpChannel, pair, run_initiator, run_responder

SEED_ENV = "VOLTKEY_SEED"
BINS_TO_PERIODS = {b: p for p, b in KEY_CONFIGS}


class UsageError(Exception):
    pass


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"{v} must be >= 1")
    return v


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(t) for t in text.split(",") if t.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None

    return parse


def _host_port(text):
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host or "127.0.0.1", int(port)


def _add_globals(p, suppress: bool):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=default(None),
                   help=f"master seed (falls back to ${SEED_ENV}, then 0)")
    p.add_argument("--out", type=Path, default=default(None), help="write the report here")
    p.add_argument("--format", choices=("json", "csv"), default=default(None))


def _add_session_flags(p):
    p.add_argument("--n-b", type=int, choices=sorted(BINS_TO_PERIODS), default=6,
                   help="bits per period (sets the period count for 128-bit keys)")
    p.add_argument("--code", choices=sorted(recon.CODES), default="h31")
    p.add_argument("--max-attempts", type=_positive_int, default=5)
    p.add_argument("--local-noise", type=float, default=0.002, help="device noise rms in volts")
    p.add_argument("--skew-range", type=float, default=20_000.0,
                   help="clock skew drawn uniformly within +-this many ppm")
    p.add_argument("--breaker-hz", type=float, default=None,
                   help="low-pass cutoff between the two outlets")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voltkey", description=__doc__.splitlines()[0])
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a colocated pair of traces")
    _add_globals(p, suppress=True)
    _add_session_flags(p)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--trace-format", choices=("binary", "csv"), default="binary")

    p = sub.add_parser("pair", help="run one pairing session")
    _add_globals(p, suppress=True)
    _add_session_flags(p)
    p.add_argument("--transport", choices=("inproc", "tcp"), default="inproc")
    role = p.add_mutually_exclusive_group()
    role.add_argument("--listen", type=_host_port, metavar="HOST:PORT",
                      help="act as the initiator, waiting for the peer")
    role.add_argument("--connect", type=_host_port, metavar="HOST:PORT",
                      help="act as the responder, dialing the initiator")
    p.add_argument("--trace", type=Path, help="own capture for --listen/--connect runs")

    p = sub.add_parser("attack", help="score an adversary scenario")
    _add_globals(p, suppress=True)
    _add_session_flags(p)
    p.add_argument("--scenario", required=True,
                   choices=("near_time", "daily_pattern", "dominant_noise", "passive"))
    p.add_argument("--trials", type=_positive_int, default=1000)

    p = sub.add_parser("sweep", help="success-rate table over parameter grid")
    _add_globals(p, suppress=True)
    p.add_argument("--n-b", type=_csv_list(int), default=[6, 8, 10])
    p.add_argument("--code", type=_csv_list(str), default=["h31", "h74"])
    p.add_argument("--local-noise", type=_csv_list(float), default=[0.002])
    p.add_argument("--skew", type=_csv_list(float), default=[20_000.0],
                   help="skew ranges in ppm")
    p.add_argument("--breaker-hz", type=float, default=None)
    p.add_argument("--max-attempts", type=_positive_int, default=5)
    p.add_argument("--trials", type=_positive_int, default=50)

    p = sub.add_parser("nist", help="six randomness tests on a bit stream")
    _add_globals(p, suppress=True)
    p.add_argument("--input", type=Path, help="text file of 0/1 characters")
    p.add_argument("--bits", type=_positive_int, default=1_000_000,
                   help="length of the simulated stream when no --input is given")
    p.add_argument("--n-b", type=int, choices=sorted(BINS_TO_PERIODS), default=10)

    p = sub.add_parser("entropy", help="raw bits needed for a token")
    _add_globals(p, suppress=True)
    p.add_argument("--a-max", type=float, required=True, help="best adversary agreement")
    p.add_argument("--target", choices=sorted(recon.TOKEN_TARGETS), required=True)
    p.add_argument("--code", choices=sorted(recon.CODES), default="h31")
    p.add_argument("--n-b", type=_positive_int, default=6)
    return parser


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"${SEED_ENV}={env!r} is not an integer") from None


def _params(args) -> SessionParams:
    return SessionParams.for_bins(
        args.n_b, code=recon.CODES[args.code], max_attempts=args.max_attempts
    )


def _deployment(args, local_noise=None, skew=None):
    from .evaluation.scenario import Deployment

    return Deployment(
        local_noise_rms=args.local_noise if local_noise is None else local_noise,
        skew_range_ppm=args.skew_range if skew is None else skew,
        breaker_hz=args.breaker_hz,
    )


def _cmd_simulate(args, seed):
    from .evaluation.scenario import PairSources

    params = _params(args)
    src = PairSources(_deployment(args), params, seed)
    trace_a, trace_b, lat = src.capture(0)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    ext = "csv" if args.trace_format == "csv" else "vkt"
    paths = {}
    for name, trace in (("a", trace_a), ("b", trace_b)):
        path = args.out_dir / f"device_{name}.{ext}"
        trace_io.write_trace(trace, path, args.trace_format)
        paths[name] = str(path)
    report = {
        "kind": "simulation",
        "seed": seed,
        "samples": params.capture_samples,
        "latency_s": lat,
        "skew_ppm": {"a": src.adc_a.skew_ppm, "b": src.adc_b.skew_ppm},
        "gain": {"a": trace_a.gain_used, "b": trace_b.gain_used},
        "traces": paths,
    }
    return report, 0


def _file_source(path):
    trace = trace_io.read_trace(path)
    return lambda attempt: trace


def _cmd_pair(args, seed):
    from .evaluation.scenario import PairSources

    params = _params(args)
    single = args.listen or args.connect
    if single and args.transport != "tcp":
        raise UsageError("--listen/--connect need --transport tcp")
    if args.trace and not single:
        raise UsageError("--trace only applies with --listen or --connect")
    src = PairSources(_deployment(args), params, seed)
    if args.listen:
        source = _file_source(args.trace) if args.trace else src.source_a
        ch = TcpChannel.listen(*args.listen)
        try:
            rep = run_initiator(ch, source, params)
        finally:
            ch.close()
    elif args.connect:
        source = _file_source(args.trace) if args.trace else src.source_b
        ch = TcpChannel.connect(*args.connect)
        try:
            rep = run_responder(ch, source, params)
        finally:
            ch.close()
    else:
        rep, _ = pair(src.source_a, src.source_b, params, transport=args.transport)
    out = rep.to_dict()
    out["seed"] = seed
    return out, 0 if rep.success else 1


def _cmd_attack(args, seed):
    from .evaluation.attacks import MIN_TRIALS, AttackScenario, run_attack

    if args.trials < MIN_TRIALS:
        raise UsageError(f"argument --trials: attacks need at least {MIN_TRIALS} trials")
    scenario = AttackScenario(args.scenario, args.trials, victim=_deployment(args))
    report = run_attack(scenario, _params(args), seed)
    out = report.to_dict()
    out["seed"] = seed
    return out, 0


def _cmd_sweep(args, seed):
    from .evaluation.batch import run_pairings
    from .evaluation.scenario import Deployment

    for n_b in args.n_b:
        if n_b not in BINS_TO_PERIODS:
            raise UsageError(f"argument --n-b: {n_b} not in {sorted(BINS_TO_PERIODS)}")
    for code in args.code:
        if code not in recon.CODES:
            raise UsageError(f"argument --code: {code!r} not in {sorted(recon.CODES)}")
    rows = []
    for n_b in args.n_b:
        for code in args.code:
            params = SessionParams.for_bins(
                n_b, code=recon.CODES[code], max_attempts=args.max_attempts
            )
            for noise in args.local_noise:
                for skew in args.skew:
                    dep = Deployment(
                        local_noise_rms=noise, skew_range_ppm=skew, breaker_hz=args.breaker_hz
                    )
                    res = run_pairings(dep, params, args.trials, seed)
                    rows.append({
                        "n_b": n_b,
                        "code": code,
                        "local_noise_rms": noise,
                        "skew_range_ppm": skew,
                        "trials": args.trials,
                        "success_rate": res.success_rate,
                        "mean_agreement": res.mean_agreement,
                        "mean_attempts": res.mean_attempts,
                    })
    return {"kind": "sweep", "seed": seed, "rows": rows}, 0


def _read_bits(path: Path) -> np.ndarray:
    text = "".join(path.read_text().split())
    if not text or set(text) - {"0", "1"}:
        raise UsageError(f"argument --input: {path} must hold only 0/1 characters")
    return np.frombuffer(text.encode(), dtype=np.uint8) - ord("0")


def _cmd_nist(args, seed):
    from .evaluation.randomness import MIN_SUITE_BITS, randomness_suite
    from .evaluation.streams import key_stream

    if args.input:
        bits = _read_bits(args.input)
        source = str(args.input)
    else:
        bits = key_stream(args.bits, seed=seed, n_b=args.n_b)
        source = "simulated"
    if bits.size < MIN_SUITE_BITS:
        raise UsageError(f"bit stream has {bits.size} bits, the suite needs {MIN_SUITE_BITS}")
    pvalues = randomness_suite(bits)
    return {
        "kind": "randomness",
        "seed": seed,
        "source": source,
        "bits": int(bits.size),
        "p_values": pvalues,
        "passed_at_0.01": {k: v >= 0.01 for k, v in pvalues.items()},
    }, 0


def _cmd_entropy(args, seed):
    if not 0.5 <= args.a_max < 1:
        raise UsageError("argument --a-max: must lie in [0.5, 1)")
    code = recon.CODES[args.code]
    target = recon.TOKEN_TARGETS[args.target]
    raw, seconds = recon.entropy_accounting(args.a_max, target, code, args.n_b)
    return {
        "kind": "entropy",
        "a_max": args.a_max,
        "target": args.target,
        "target_entropy_bits": target,
        "code": args.code,
        "n_b": args.n_b,
        "raw_bits": raw,
        "measurement_seconds": seconds,
    }, 0


COMMANDS = {
    "simulate": _cmd_simulate,
    "pair": _cmd_pair,
    "attack": _cmd_attack,
    "sweep": _cmd_sweep,
    "nist": _cmd_nist,
    "entropy": _cmd_entropy,
}


def _to_csv(report: dict) -> str:
    buf = io.StringIO()
    rows = report.get("rows")
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    else:
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["field", "value"])
        for k, v in _flatten(report):
            writer.writerow([k, v])
    return buf.getvalue()


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}{k}.")
    elif isinstance(obj, list):
        yield prefix[:-1], " ".join(str(v) for v in obj)
    else:
        yield prefix[:-1], obj


def run_command(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        seed = _resolve_seed(args)
        report, code = COMMANDS[args.command](args, seed)
    except UsageError as exc:
        parser.error(str(exc))
    fmt = args.format or ("csv" if args.command == "sweep" else "json")
    text = _to_csv(report) if fmt == "csv" else trace_io.dumps_report(report)
    if args.out is None:
        sys.stdout.write(text)
    else:
        tmp = args.out.with_name(args.out.name + ".tmp")
        tmp.write_text(text)
        os.replace(tmp, args.out)
    return code


def main(argv=None) -> int:
    try:
        return run_command(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2


if __name__ == "__main__":
    sys.exit(main())
