"""``madelung-strain`` command line.

Exit codes: 0 success, 1 a verification or declared tolerance failed,
2 malformed input, 3 a violated invariant, 4 an internal consistency error.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys
from pathlib import Path

from .. import __version__
from ..errors import ConstraintError, InternalConsistencyError
from .config import ScenarioError, load_scenario
from .expr import ExpressionError

EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_CONSTRAINT, EXIT_INTERNAL = 0, 1, 2, 3, 4


def thread_limit():
    """Cap BLAS threads from MADELUNG_THREADS (0 or unset means no cap)."""
    raw = os.environ.get("MADELUNG_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ScenarioError("MADELUNG_THREADS", f"expected an integer, got {raw!r}") from None
    if n <= 0:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="madelung-strain", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="run a scenario and write report.json plus requested dumps")
    run.add_argument("config")
    run.add_argument("-o", "--output", default="out")

    ver = sub.add_parser("verify", help="run the verification suite on the bundled scenarios")
    ver.add_argument("--filter", default=None, help="group name or substring of a check id")
    ver.add_argument("--refine", action="store_true", help="add convergence orders from an h, h/2 pair")
    ver.add_argument("--json", default=None, help="also write the rows to this JSON file")

    exp = sub.add_parser("export", help="dump named fields of a scenario as CSV with a manifest")
    exp.add_argument("config")
    exp.add_argument("--fields", required=True, help="comma-separated output names")
    exp.add_argument("-o", "--output", default="out")
    return p


def _run(args) -> int:
    from .pipeline import run_scenario

    report = run_scenario(load_scenario(args.config), Path(args.output))
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['value']:.3e} (tol {c['tolerance']:.2e})")
    for w in report["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    print(f"report written to {Path(args.output) / 'report.json'}")
    return EXIT_OK if report["passed"] else EXIT_FAILED


def _verify(args) -> int:
    from . import verify
    from .pipeline import timestamp, write_json

    rows = verify.run_suite(args.filter, args.refine)
    if not rows:
        raise ScenarioError("--filter", f"no check matches {args.filter!r}; groups: {', '.join(verify.GROUPS)}")
    print(verify.format_rows(rows, args.refine))
    if args.json:
        write_json(Path(args.json), {
            "version": __version__,
            "timestamp": timestamp(),
            "filter": args.filter,
            "refine": args.refine,
            "order_range": list(verify.ORDER_RANGE),
            "rows": [r.as_dict() for r in rows],
            "passed": all(r.ok for r in rows),
        })
    return EXIT_OK if all(r.ok for r in rows) else EXIT_FAILED


def _export(args) -> int:
    from .pipeline import export_fields

    names = [n.strip() for n in args.fields.split(",") if n.strip()]
    if not names:
        raise ScenarioError("--fields", "no field names given")
    payload = export_fields(load_scenario(args.config), names, Path(args.output))
    for name, entry in payload["dumps"].items():
        print(f"{name}: {entry['file']} ({entry['rows']} rows)")
    return EXIT_OK


VERBS = {"run": _run, "verify": _verify, "export": _export}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with thread_limit():
            return VERBS[args.verb](args)
    except (ScenarioError, ExpressionError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConstraintError as exc:
        print(f"constraint violated: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except InternalConsistencyError as exc:
        print(f"internal consistency error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
