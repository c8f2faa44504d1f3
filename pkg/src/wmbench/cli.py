"""Command line: ``wmbench run|validate|list|catalog|profile|analyze``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .analyzer import DEFAULT_SAMPLES, aggregate_by_attack_param, average_bpp_curves
from .controller import case_study_profile, execute, expand, load_profile, validate
from .media import scan
from .model import WmBenchError
from .registry import default_registry
from .report import emit_plot, emit_table, format_table
from .resultsdb import ResultsDatabase

log = logging.getLogger("wmbench")


def _registry(args):
    return default_registry(args.plugin_path)


def _catalog(args):
    if not args.media_path:
        raise WmBenchError("no --media-path given")
    return scan(args.media_path)


def cmd_list(args) -> int:
    reg = _registry(args)
    table = {"schemes": reg.schemes, "attacks": reg.attacks, "metrics": reg.metrics}[args.kind]
    for ident in reg.list(args.kind):
        entry = table[ident]
        d = entry.descriptor
        params = ", ".join(f"{p.name}={p.default!r}" for p in d.params)
        print(f"{ident}\t{d.display_name}\t[{params}]\t{d.version}@{entry.source}")
    return 0


def cmd_validate(args) -> int:
    vp = validate(load_profile(args.profile), _registry(args), _catalog(args))
    cells = expand(vp)
    print(f"profile {vp.profile_id!r}: {len(vp.images)} images, {len(cells)} cells")
    return 0


def cmd_run(args) -> int:
    reg, cat = _registry(args), _catalog(args)
    vp = validate(load_profile(args.profile), reg, cat)
    out = args.out or vp.output_path
    if not out:
        raise WmBenchError("no output file: pass --out or set output_path")
    cells = expand(vp)
    log.info("running %d cells with %d worker(s)", len(cells), args.workers)
    execute(vp, cells, reg, cat, out, args.workers)
    db = ResultsDatabase.load(out)
    failed = len(db.records) - len(db.ok_records())
    print(f"{out}: {len(db.records)} records, {failed} failed")
    return 0


def cmd_catalog(args) -> int:
    cat = _catalog(args)
    if args.out:
        cat.export(args.out)
    else:
        sys.stdout.write(cat.to_json() + "\n")
    return 0


def cmd_profile(args) -> int:
    doc = case_study_profile(args.profile_id, args.seed)
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_analyze(args) -> int:
    db = ResultsDatabase.load(args.db)
    records = db.ok_records()
    if args.pipeline:
        records = [r for r in records if r["pipeline"]["name"] == args.pipeline]
    by_scheme = args.group == "scheme"
    if args.against == "bpp":
        data = average_bpp_curves(records, args.metric, by_scheme, args.samples)
    else:
        data = aggregate_by_attack_param(records, args.metric, args.against, by_scheme)
    if not data:
        print("empty selection", file=sys.stderr)
        return 1
    axis = args.against.rpartition(".")[2]
    if args.csv:
        emit_table(data, args.csv, axis=axis)
    if args.svg:
        emit_plot(data, args.svg, xlabel=axis, ylabel=args.metric)
    if not (args.csv or args.svg):
        sys.stdout.write(format_table(data, axis=axis))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--media-path", action="append", default=[],
                        help="media root directory (repeatable)")
    common.add_argument("--plugin-path", action="append", default=[],
                        help="plugin search directory (repeatable; later ones shadow)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="wmbench", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", parents=[common], help="execute a profile")
    s.add_argument("profile")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("validate", parents=[common], help="check a profile without running it")
    s.add_argument("profile")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("list", parents=[common], help="list registered plugins")
    s.add_argument("kind", choices=("schemes", "attacks", "metrics"))
    s.set_defaults(func=cmd_list)

    s = sub.add_parser("catalog", parents=[common], help="scan media roots")
    s.add_argument("--out")
    s.set_defaults(func=cmd_catalog)

    s = sub.add_parser("profile", parents=[common], help="write the built-in case-study profile")
    s.add_argument("--profile-id", default="case-study")
    s.add_argument("--seed", type=int, default=2015)
    s.add_argument("--out")
    s.set_defaults(func=cmd_profile)

    s = sub.add_parser("analyze", parents=[common], help="aggregate a results database")
    s.add_argument("db")
    s.add_argument("--metric", default="psnr")
    s.add_argument("--against", default="qf",
                   help="attack parameter (optionally attack-id.param) or bpp")
    s.add_argument("--group", choices=("scheme", "none"), default="scheme")
    s.add_argument("--pipeline", help="only records of this pipeline")
    s.add_argument("--csv")
    s.add_argument("--svg")
    s.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    s.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except WmBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
