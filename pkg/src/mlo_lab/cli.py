"""Command-line entry point: ``mlo-lab {bin,synth,calibrate,run,sweep}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .access import SLO
from .engine import SimConfig, derive_seed, full_buffer_throughput
from .experiment import SpecError, format_rows, load_spec, run_experiment, sweep_spec, write_atomic
from .traces import (DEFAULT_THRESHOLD_DBM, SAMPLES_PER_RECORD, OccupancyTrace, SynthTraceParams, TraceFormatError,
                     bin_label, encode_occupancy, load_occupancy_traces, synthesize_onoff)


def _samples(value: str):
    return None if value.lower() in ("any", "none", "0") else int(value)


def cmd_bin(args) -> int:
    lines = []
    for path in args.traces:
        for trace in load_occupancy_traces(path, args.threshold, args.samples_per_record):
            label = bin_label(trace.occupancy)
            lines.append(f"{trace.label},{trace.occupancy:.6f},{'' if label is None else label}")
    out = args.out or Path(args.traces[0]).with_suffix(".bins.csv")
    write_atomic(out, "".join(line + "\n" for line in lines))
    print(f"wrote {len(lines)} traces to {out}")
    return 0


def cmd_synth(args) -> int:
    params = SynthTraceParams(args.occupancy, args.mean_busy_us, args.duration_us, args.distribution,
                              match_occupancy=not args.unmatched)
    out_dir = Path(args.out_dir)
    pct = round(args.occupancy * 100)
    for i in range(args.n):
        trace = synthesize_onoff(params, derive_seed(args.seed, i))
        path = out_dir / f"synth_{pct:02d}_{i:03d}.csv"
        header = (f"# synthetic on/off trace occupancy={trace.occupancy:.6f} "
                  f"threshold_dbm={args.threshold:g}\n")
        write_atomic(path, header + encode_occupancy(trace, args.threshold) + "\n")
        print(f"{path},{trace.occupancy:.6f}")
    return 0


def cmd_calibrate(args) -> int:
    if args.traces:
        traces = []
        for path in args.traces:
            traces.extend(load_occupancy_traces(path, args.threshold, args.samples_per_record))
        if args.bin is not None:
            traces = [t for t in traces if bin_label(t.occupancy) == args.bin]
    else:
        if args.bin is None:
            raise SpecError("--synthetic needs --bin")
        if args.bin == 0:
            traces = [OccupancyTrace.idle(args.duration_us) for _ in range(args.n)]
        else:
            params = SynthTraceParams(args.bin / 100, args.mean_busy_us, args.duration_us, match_occupancy=True)
            traces = [synthesize_onoff(params, derive_seed(args.seed, i)) for i in range(args.n)]
    if not traces:
        raise SpecError(f"no traces in bin {args.bin}")
    cfg = SimConfig(SLO, traces[0], backoff_seed=args.seed, tiebreak_seed=args.seed + 1)
    bps = full_buffer_throughput(SLO, cfg, traces)
    where = "all traces" if args.bin is None else f"bin {args.bin}%"
    print(f"SLO full-buffer throughput ({where}, {len(traces)} traces): {bps / 1e6:.2f} Mbps")
    return 0


def _run_spec(args, sweep: bool) -> int:
    spec = load_spec(args.spec)
    if sweep:
        spec = sweep_spec(spec)
    out = args.out or spec.output
    rows = run_experiment(spec)
    write_atomic(out, format_rows(rows))
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlo-lab", description="Trace-driven Wi-Fi multi-link latency simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bin", help="classify RSSI trace records into occupancy bins")
    p.add_argument("traces", nargs="+", help="trace CSV file(s) or directories")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD_DBM, help="busy threshold in dBm")
    p.add_argument("--samples-per-record", type=_samples, default=SAMPLES_PER_RECORD)
    p.add_argument("-o", "--out", help="manifest path (default: <trace>.bins.csv)")
    p.set_defaults(func=cmd_bin)

    p = sub.add_parser("synth", help="write synthetic on/off occupancy traces")
    p.add_argument("--occupancy", type=float, required=True)
    p.add_argument("--mean-busy-us", type=float, required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration-us", type=int, default=1_000_000)
    p.add_argument("--distribution", choices=("exponential", "fixed"), default="exponential")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD_DBM)
    p.add_argument("--unmatched", action="store_true",
                   help="plain renewal bursts; occupancy then fluctuates around the target")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="SLO full-buffer throughput for an occupancy bin")
    p.add_argument("--bin", type=int, help="bin label in percent (0 = idle channel with --synthetic)")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--traces", nargs="+", help="trace CSV file(s) or directories")
    src.add_argument("--synthetic", action="store_true", help="generate traces for the bin")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD_DBM)
    p.add_argument("--samples-per-record", type=_samples, default=SAMPLES_PER_RECORD)
    p.add_argument("--mean-busy-us", type=float, default=2000.0)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--duration-us", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_calibrate)

    for name, sweep in (("run", False), ("sweep", True)):
        help_text = ("run an experiment spec" if not sweep
                     else "run the full mode x bin-pair x load grid with a spec's source and seeds")
        p = sub.add_parser(name, help=help_text)
        p.add_argument("spec", help="key = value experiment file")
        p.add_argument("-o", "--out", help="CSV path (default: spec 'output')")
        p.set_defaults(func=lambda a, s=sweep: _run_spec(a, s))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, TraceFormatError, SpecError, ValueError) as exc:
        print(f"mlo-lab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
