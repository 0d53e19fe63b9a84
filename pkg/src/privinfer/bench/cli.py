"""``privinfer-bench``: run a benchmark suite and write a report.

Examples::

    privinfer-bench --suite nonlinear --size 1000
    privinfer-bench --suite argmax --size 100000 --rtt-ms 10 --bandwidth-mbps 1000
    privinfer-bench --suite generate --model toy.cfg --format table

    # one process per party (start all three; order does not matter)
    privinfer-bench --suite nonlinear --role p0 --listen 127.0.0.1:7000 \\
        --connect p1=127.0.0.1:7001 --connect p2=127.0.0.1:7002 --out p0.json
    ...
    privinfer-bench --merge p0.json p1.json p2.json --format table
"""

import argparse
import logging
import math
import sys
from pathlib import Path

from ..errors import PrivInferError
from ..model import ModelConfig
from ..roles import Role
from ..transport.link import LinkProfile
from .report import FORMATS, emit_report, load_report
from .runner import MIN_REPS, SUITES, BenchSpec, check_report, merge_reports, run_bench

EXIT_OK, EXIT_ERROR, EXIT_ASSERT = 0, 1, 2


def _addr(text):
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host or "127.0.0.1", int(port)


def _peer(text):
    name, sep, addr = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected ROLE=HOST:PORT, got {text!r}")
    try:
        role = Role.parse(name)
    except (KeyError, ValueError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return role, _addr(addr)


def build_parser():
    p = argparse.ArgumentParser(prog="privinfer-bench", description=__doc__.split("\n")[0])
    p.add_argument("--suite", choices=SUITES, default="nonlinear")
    p.add_argument("--size", type=int, default=None,
                   help="elements (nonlinear), vocabulary (argmax), width (layer), tokens (generate)")
    p.add_argument("--prompt-len", type=int, default=6, help="prompt length for generate")
    p.add_argument("--role", default="all", choices=("p0", "p1", "p2", "all"))
    p.add_argument("--listen", type=_addr, metavar="HOST:PORT",
                   help="this party's address; with --role all, P0..P2 use PORT..PORT+2")
    p.add_argument("--connect", type=_peer, action="append", default=[], metavar="ROLE=HOST:PORT",
                   help="a peer's listen address (repeat for each peer)")
    p.add_argument("--rtt-ms", type=float, default=0.0)
    p.add_argument("--bandwidth-mbps", type=float, default=math.inf,
                   help="link bandwidth; 0 or inf means unlimited")
    p.add_argument("--reps", type=int, default=MIN_REPS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", type=Path, help="model config file (key = value lines)")
    p.add_argument("--k-scale", type=float, default=None)
    p.add_argument("--scheme", choices=("bfv", "stub"), default="bfv")
    p.add_argument("--format", choices=FORMATS, default="table")
    p.add_argument("--out", type=Path, help="write the report here instead of stdout")
    p.add_argument("--merge", type=Path, nargs="+", metavar="REPORT",
                   help="merge JSON reports written by the party processes of one run")
    p.add_argument("--assert", dest="check", action="store_true",
                   help="exit with status 2 if a threshold check fails")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _addresses(args):
    if args.listen is None:
        if args.connect:
            raise SystemExit("--connect needs --listen")
        return None
    if args.role == "all":
        host, port = args.listen
        return {r: (host, port + int(r)) for r in Role}
    addresses = dict(args.connect)
    addresses[Role.parse(args.role)] = args.listen
    missing = [r.name for r in Role if r not in addresses]
    if missing:
        raise SystemExit(f"missing addresses for {', '.join(missing)}")
    return addresses


def _write(data, out):
    if out is None:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        out.write_bytes(data)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        if args.merge:
            report = merge_reports([load_report(p.read_bytes()) for p in args.merge])
        else:
            model = ModelConfig.load(args.model) if args.model else ModelConfig()
            profile = LinkProfile.from_mbps(args.rtt_ms, args.bandwidth_mbps)
            spec = BenchSpec(args.suite, args.size, profile, args.reps, args.seed, model,
                             args.prompt_len, args.k_scale, args.scheme)
            addresses = _addresses(args)
            role = None if args.role == "all" else args.role
            report = run_bench(spec, addresses=addresses, role=role)
    except PrivInferError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    # single-party reports keep their transcripts for --merge
    _write(emit_report(report, args.format, raw=report.party != "all"), args.out)
    if args.check:
        violations = check_report(report)
        for v in violations:
            print(f"assertion failed: {v}", file=sys.stderr)
        if violations:
            return EXIT_ASSERT
    return EXIT_ERROR if report.failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
