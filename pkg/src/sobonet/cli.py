"""Command line entry point ``sobonet``.

Exit status is 0 on success, 2 when a measured error misses its tolerance
and 1 on usage errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import network as nc
from .approximator import build_approximant, scaling_sweep, sweep_to_csv
from .constructions import multiplication_network, squaring_network
from .functions import get_function, registry_names
from .lower_bound import make_family, probe_lower_bound
from .sobolev import reports_to_csv, wsp_error

EXIT_OK, EXIT_USAGE, EXIT_TOLERANCE = 0, 1, 2


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse number list {text!r}")


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _load_net(path: str) -> nc.Network:
    try:
        return nc.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read network {path!r}: {exc}")


def _function(name: str, n: int):
    try:
        return get_function(name, n)
    except KeyError as exc:
        raise UsageError(str(exc))


def cmd_build_square(args):
    if args.m < 1:
        raise UsageError("--m must be >= 1")
    _emit(nc.dumps(squaring_network(args.m)), args.out)
    return EXIT_OK


def cmd_build_mult(args):
    if not args.M >= 1 or not 0 < args.eps < 0.5:
        raise UsageError("need --M >= 1 and 0 < --eps < 1/2")
    _emit(nc.dumps(multiplication_network(float(args.M), float(args.eps))), args.out)
    return EXIT_OK


def _audit_csv(audit) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["L", "M", "N", "eps", "N_grid", "mode", "eps_inner", "error"])
    w.writerow([audit.L, audit.M, audit.N, _fmt(audit.eps), audit.N_grid, audit.mode,
                _fmt(audit.eps_inner), _fmt(audit.error)])
    return buf.getvalue()


def cmd_build_approx(args):
    f = _function(args.fn, args.n)
    approx = build_approximant(f, args.n, s=args.s, B=args.B, eps=args.eps, mode=args.mode,
                               C_cal=args.C, budget=args.budget, seed=args.seed)
    _emit(nc.dumps(approx.network), args.out)
    sys.stderr.write(_audit_csv(approx.audit))
    return EXIT_OK if approx.audit.error <= args.eps else EXIT_TOLERANCE


def cmd_eval(args):
    net = _load_net(args.net)
    x = _floats(args.x)
    if len(x) != net.input_dim:
        raise UsageError(f"--x needs {net.input_dim} values")
    _emit(",".join(_fmt(v) for v in nc.realize(net, np.array(x))), None)
    return EXIT_OK


def cmd_norms(args):
    net = _load_net(args.net)
    f = _function(args.fn, 3)
    if f.d != net.input_dim:
        raise UsageError("network and function dimensions differ")
    report = wsp_error(net, f, args.s, args.p, args.budget, args.seed)
    _emit(reports_to_csv([report]), args.out)
    if args.tol is not None and report.value > args.tol:
        return EXIT_TOLERANCE
    return EXIT_OK


def cmd_sweep(args):
    f = _function(args.fn, args.n)
    eps_list = _floats(args.eps_list)
    if not eps_list:
        raise UsageError("--eps-list is empty")

    def one(eps):
        return scaling_sweep(f, args.n, args.s, [eps], mode=args.mode, budget=args.budget,
                             seed=args.seed, C_cal=args.C)[0]

    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        rows = list(pool.map(one, eps_list))
    _emit(sweep_to_csv(rows, timing=args.timing), args.out)
    return EXIT_OK if all(r["error_target_s"] <= r["eps"] for r in rows) else EXIT_TOLERANCE


def cmd_to_standard(args):
    _emit(nc.dumps(nc.to_standard(_load_net(args.net))), args.out)
    return EXIT_OK


def cmd_audit(args):
    net = _load_net(args.net)
    L, M, N = net.counts()
    _emit(f"L,M,N,standard\n{L},{M},{N},{int(net.is_standard())}\n", args.out)
    return EXIT_OK


def cmd_probe_lb(args):
    family = make_family(args.d, args.n, args.N, args.B)
    if args.d * np.log2(args.N) > 12:
        raise UsageError("too many patterns; keep N^d <= 4096")
    rows, _ = probe_lower_bound(args.d, args.N, args.n, args.B, budget=args.budget,
                                seed=args.seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pattern", "ok", "margin"])
    for pid, ok, margin in rows:
        w.writerow([pid, ok, _fmt(margin)])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK if all(ok for _, ok, _ in rows) and family.eps > 0 else EXIT_TOLERANCE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sobonet", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads; 1 gives the canonical order")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True, seed=False):
        if out:
            p.add_argument("--out", help="output file (default: stdout)")
        if seed:
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--budget", type=int, default=100_000, help="sample points")

    p = sub.add_parser("build-square", help="sawtooth squaring network")
    p.add_argument("--m", type=int, required=True)
    common(p)
    p.set_defaults(func=cmd_build_square)

    p = sub.add_parser("build-mult", help="multiplication network")
    p.add_argument("--M", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    common(p)
    p.set_defaults(func=cmd_build_mult)

    fns = registry_names()
    p = sub.add_parser("build-approx", help="approximant of a built-in function")
    p.add_argument("--fn", required=True, help=f"one of {', '.join(fns)}")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--B", type=float, default=None)
    p.add_argument("--C", type=float, default=None, help="constant for theoretical mode")
    p.add_argument("--mode", choices=["calibrated", "theoretical"], default="calibrated")
    common(p, seed=True)
    p.set_defaults(func=cmd_build_approx, budget=20_000)

    p = sub.add_parser("eval", help="evaluate a network at one point")
    p.add_argument("--net", required=True)
    p.add_argument("--x", required=True, help="comma separated coordinates")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("norms", help="W^{s,p} distance between a network and a function")
    p.add_argument("--net", required=True)
    p.add_argument("--fn", required=True)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--p", type=float, default=np.inf)
    p.add_argument("--tol", type=float, default=None, help="exit 2 if the norm exceeds this")
    common(p, seed=True)
    p.set_defaults(func=cmd_norms)

    p = sub.add_parser("sweep", help="complexity sweep over a list of eps")
    p.add_argument("--fn", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--eps-list", required=True)
    p.add_argument("--C", type=float, default=None)
    p.add_argument("--mode", choices=["calibrated", "theoretical"], default="calibrated")
    p.add_argument("--timing", action="store_true",
                   help="fill the seconds column (output is then not reproducible)")
    common(p, seed=True)
    p.set_defaults(func=cmd_sweep, budget=20_000)

    p = sub.add_parser("to-standard", help="remove skip connections")
    p.add_argument("--net", required=True)
    common(p)
    p.set_defaults(func=cmd_to_standard)

    p = sub.add_parser("audit", help="exact L, M, N counts")
    p.add_argument("--net", required=True)
    common(p)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("probe-lb", help="decode every bump pattern from its approximant")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--N", type=int, default=4)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--B", type=float, default=1.0)
    common(p, seed=True)
    p.set_defaults(func=cmd_probe_lb, budget=20_000)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.threads < 1:
        sys.stderr.write("sobonet: --threads must be >= 1\n")
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"sobonet: {exc}\n")
        return EXIT_USAGE
    except (ValueError, nc.DimensionError) as exc:
        sys.stderr.write(f"sobonet: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
