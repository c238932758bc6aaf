"""Command line entry point.

    fairsse ingest <dir> --out <edb-file>
    fairsse run <scenario.json> --out <report.json> [--figures DIR]
    fairsse analyze <trace.json> [--block-size P] [--figures DIR]

Exit codes: 0 success, 2 configuration error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .analysis import QueryTrace, leakage_report
from .crypto.rng import DeterministicRng
from .errors import ConfigError, EmptyCorpusError, InvariantViolation
from .harness import dump_report, run_scenario, scan_corpus, ScenarioConfig
from .sse import setup

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 2, 3


def _load_pricing(path: str | None) -> dict | None:
    if path is None:
        return None
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read pricing file {path}: {exc}") from exc


def cmd_ingest(args) -> int:
    db, skipped = scan_corpus(args.directory)
    key, edb = setup(db, lam=args.lam, p=args.block_size, rng=DeterministicRng(args.seed if args.seed is not None else 0))
    out = Path(args.out)
    out.write_bytes(edb.to_bytes())
    out.with_suffix(out.suffix + ".key").write_bytes(key)
    if args.json:
        Path(args.json).write_text(edb.to_json())
    print(f"{len(db)} keywords, {len(edb)} rows, {len(skipped)} skipped -> {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    text = Path(args.scenario).read_text()
    cfg = ScenarioConfig.from_json(text, seed=args.seed, pricing=_load_pricing(args.pricing))
    report = run_scenario(cfg)
    body = dump_report(report)
    if args.out:
        Path(args.out).write_text(body)
    else:
        sys.stdout.write(body)
    if args.figures:
        from .figures import write_report_artifacts

        for path in write_report_artifacts(report, args.figures):
            print(f"wrote {path}", file=sys.stderr)
    if not report["conservation"]["ok"] or not report["chain_ok"]:
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_analyze(args) -> int:
    doc = json.loads(Path(args.trace).read_text())
    if "observations" in doc:
        trace = QueryTrace.from_json(json.dumps(doc))
        result = leakage_report(trace, args.block_size)
    elif "leakage" in doc:  # a scenario report
        result = doc["leakage"]
    else:
        raise ConfigError("expected a query trace or a scenario report")
    print(json.dumps(result, indent=1, sort_keys=True))
    if args.figures:
        from .figures import plot_access_profile

        Path(args.figures).mkdir(parents=True, exist_ok=True)
        views = {"trace": result} if "access_pattern" in result else result
        for name, rep in views.items():
            if rep["queries"]:
                plot_access_profile(rep["access_pattern"], Path(args.figures) / f"{name}_profile.png")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairsse", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=None, help="override the RNG seed (u64)")
    parser.add_argument("--pricing", default=None, help="JSON file with PricingConfig fields")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="index a directory of text files")
    p.add_argument("directory")
    p.add_argument("--out", required=True)
    p.add_argument("--json", default=None, help="also write a JSON debug export")
    p.add_argument("--block-size", type=int, default=4)
    p.add_argument("--lam", type=int, default=256)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("run", help="run a scenario file")
    p.add_argument("scenario")
    p.add_argument("--out", default=None)
    p.add_argument("--figures", default=None, help="directory for CSV tables and PNG figures")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="leakage statistics for a trace or report")
    p.add_argument("trace")
    p.add_argument("--block-size", type=int, default=4)
    p.add_argument("--figures", default=None)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, EmptyCorpusError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
