"""Command line: ``run <config>``, ``verify <suite>``, ``export <manifest> <selector>``.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage error.  The worker
count is read from the WAVEKIN_WORKERS environment variable.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import checks as ck
from .lattice import UsageError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SUITES = ("all", "fast", *ck.CHECKS)

log = logging.getLogger("wavekin")


def _suite(name: str) -> list[str]:
    if name == "all":
        return list(ck.CHECKS)
    if name == "fast":
        return [n for n in ck.CHECKS if n != "kinetic-trend"]
    if name in ck.CHECKS:
        return [name]
    raise UsageError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")


def cmd_run(args) -> int:
    from .pipelines import run
    man = run(args.config)
    for name, ok in man.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"manifest {man.directory}/manifest.json hash={man.content_hash()[:16]}")
    return EXIT_OK if man.passed else EXIT_FAIL


def cmd_verify(args) -> int:
    names = _suite(args.suite)
    results = []
    for name in names:
        kw = ck.QUICK.get(name, {}) if args.quick else {}
        res = ck.CHECKS[name](**kw)
        print(res.line(), flush=True)
        results.append(res)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump([r.to_dict() for r in results], fh, indent=1)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def cmd_export(args) -> int:
    from .pipelines import export_plot_data
    for p in export_plot_data(args.manifest, args.selector, args.dest):
        print(p)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wavekin", description="Wave kinetic experiments and verification suites.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run the pipeline named in a YAML config")
    r.add_argument("config")
    r.set_defaults(fn=cmd_run)
    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", help=f"one of {', '.join(SUITES)}")
    v.add_argument("--quick", action="store_true", help="reduced sizes for a smoke run")
    v.add_argument("--json", help="write the measurements to this file")
    v.set_defaults(fn=cmd_verify)
    e = sub.add_parser("export", help="write plot-ready CSV series from a manifest")
    e.add_argument("manifest")
    e.add_argument("selector", help="n(t,k), moments, density, residuals or summary")
    e.add_argument("--dest", help="output directory (default: <run>/export)")
    e.set_defaults(fn=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
