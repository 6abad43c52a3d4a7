"""``fairsplit`` command line: validate, consolidate, split, evaluate, report.

Exit status: 0 success, 1 invalid input, 2 usage error.  Diagnostics go to
stderr as single ``fairsplit: error: ...`` lines; data goes to files or stdout.
"""
from __future__ import annotations

import argparse
import logging
import sys
from collections import Counter
from pathlib import Path

from . import __version__
from .domain import DEFAULT_EXPRESSIONS, TaskKind, age_label_sort_key
from .errors import FairsplitError
from .manifest import Schema, join_predictions, load_manifest, load_predictions
from .normalize import (
    RaterFilePair,
    consolidate_annotations,
    normalize_manifest,
    read_rater_file,
    write_consolidation,
)
from .partition import SET_NAMES, PartitionConfig, emit_split, read_split, solve_partition
from .report import evaluate, read_report, render_report, write_report

log = logging.getLogger("fairsplit")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"fairsplit: usage error: {message}\n")


def _add_schema_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", required=True, help="manifest CSV")
    p.add_argument("--task", choices=[t.value for t in TaskKind], default="expr")
    p.add_argument("--aus", help="comma-separated AU ids (default: the au_* header columns)")
    p.add_argument("--vocab", help="comma-separated expression vocabulary (default: 8 basic categories)")
    p.add_argument("--classes", type=int, choices=(7, 8), help="use the first 7 or all 8 default categories")
    p.add_argument("--va-range", help="source range lo,hi of VA labels to rescale into [-1,1]")
    p.add_argument("--au-threshold", type=int, choices=(0, 1), default=0,
                   help="AU active iff intensity > threshold (protocol: 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairsplit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fairsplit {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="load a manifest and print its statistics")
    _add_schema_args(p)
    p.add_argument("--split", help="split file; statistics are then broken down per set")

    p = sub.add_parser("consolidate", help="merge two rater files into consensus/disagreements")
    p.add_argument("--rater-a", required=True)
    p.add_argument("--rater-b", required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("split", help="partition a manifest into train/valid/test")
    _add_schema_args(p)
    p.add_argument("--config", help="flat key=value partition config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--fractions", help="train,valid,test fractions (default 0.55,0.15,0.30)")
    p.add_argument("--weights", help="e.g. size=4,label=2,age=1,gender=1,race=1")
    p.add_argument("--move-budget", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("evaluate", help="score predictions against a manifest")
    _add_schema_args(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--split", help="split file; only --set samples are evaluated")
    p.add_argument("--set", dest="eval_set", choices=SET_NAMES, default="test")
    p.add_argument("--model", default="model", help="model name for the report row")
    p.add_argument("--weighted-subgroups", action="store_true",
                   help="sample-weighted instead of unweighted subgroup F1 mean")
    p.add_argument("--out", help="report file (default: stdout)")

    p = sub.add_parser("report", help="render evaluation reports")
    p.add_argument("reports", nargs="+", help="evaluation report files")
    p.add_argument("--format", choices=("table", "json", "json-like"), default="table")
    p.add_argument("--out", help="output file (default: stdout)")
    return parser


def _schema(args) -> Schema:
    if args.vocab:
        vocab = tuple(v.strip() for v in args.vocab.split(",") if v.strip())
    elif args.classes:
        vocab = DEFAULT_EXPRESSIONS[: args.classes]
    else:
        vocab = DEFAULT_EXPRESSIONS
    aus = tuple(a.strip() for a in args.aus.split(",")) if args.aus else None
    return Schema(TaskKind(args.task), au_ids=aus, vocabulary=vocab)


def _load(args):
    manifest = load_manifest(args.manifest, _schema(args))
    va_range = None
    if args.va_range:
        try:
            lo, hi = (float(x) for x in args.va_range.split(","))
        except ValueError:
            raise FairsplitError(f"--va-range expects lo,hi, got {args.va_range!r}") from None
        va_range = (lo, hi)
    return normalize_manifest(manifest, va_range=va_range, au_threshold=args.au_threshold)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _statistics_table(manifest, split: dict | None) -> str:
    columns = list(SET_NAMES) if split else ["all"]
    tallies = {c: {} for c in columns}
    for s in manifest.samples:
        col = split.get(s.sample_id) if split else "all"
        if col is None:
            continue
        t = tallies[col]
        if manifest.task is TaskKind.EXPR:
            rows = [("Expr.", manifest.schema.vocabulary[s.label])]
        elif manifest.task is TaskKind.AU:
            rows = [("AU", f"AU{a}") for a, v in zip(manifest.au_ids, s.label) if v]
        else:
            from .partition import discretize_va_grid

            r, c = discretize_va_grid(s.label)
            rows = [("VA cell", f"v{r}_a{c}")]
        rows += [("Total", ""), ("Gen.", s.gender or "Unlabeled"), ("Race", s.race), ("Age", s.age_bin or "Unlabeled")]
        for key in rows:
            t[key] = t.get(key, 0) + 1
    keys = set().union(*(t.keys() for t in tallies.values()))
    dim_order = {"Total": 0, "Gen.": 1, "Race": 2, "Age": 3, "Expr.": 4, "AU": 4, "VA cell": 4}

    def sort_key(k):
        dim, cat = k
        if dim == "Age":
            return dim_order[dim], (cat == "Unlabeled", age_label_sort_key(cat) if cat != "Unlabeled" else (0, 0))
        if dim == "Expr.":
            return dim_order[dim], (manifest.schema.vocabulary.index(cat),)
        return dim_order[dim], (cat,)

    header = ["Dimension", "Category", *(c.capitalize() for c in columns)]
    body = [[dim, cat, *(str(tallies[c].get((dim, cat), 0)) for c in columns)] for dim, cat in sorted(keys, key=sort_key)]
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    lines = [" | ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("-+-".join("-" * w for w in widths))
    for r in body:
        lines.append(" | ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))).rstrip())
    return "\n".join(lines) + "\n"


def cmd_validate(args) -> int:
    manifest = _load(args)
    split = read_split(args.split) if args.split else None
    print(
        f"manifest {args.manifest}: {manifest.n_rows} rows, {manifest.n_columns} columns, task {manifest.task.value}",
        file=sys.stderr,
    )
    if manifest.unrecognized:
        detail = ", ".join(f"{k}={v}" for k, v in sorted(manifest.unrecognized.items()))
        print(f"fairsplit: warning: unrecognized demographic values mapped to Unlabeled ({detail})", file=sys.stderr)
    if split is not None:
        unknown = set(split) - set(manifest.by_id)
        if unknown:
            raise FairsplitError(f"split file names {len(unknown)} sample(s) absent from the manifest")
    sys.stdout.write(_statistics_table(manifest, split))
    return 0


def cmd_consolidate(args) -> int:
    pair = RaterFilePair(read_rater_file(args.rater_a), read_rater_file(args.rater_b))
    result = consolidate_annotations(pair)
    cons, dis = write_consolidation(result, args.out)
    per_field = Counter(d.field for d in result.disagreements)
    print(
        f"{len(result.consensus)} samples; disagreements: "
        + ", ".join(f"{f}={per_field.get(f, 0)}" for f in ("age", "gender", "race")),
        file=sys.stderr,
    )
    return 0


def cmd_split(args) -> int:
    config = PartitionConfig()
    if args.config:
        config = PartitionConfig.from_file(args.config, config)
    overrides = {}
    for flag, key in (("seed", "seed"), ("fractions", "fractions"), ("weights", "weights"),
                      ("move_budget", "move_budget"), ("patience", "patience"), ("restarts", "restarts")):
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = str(value)
    config = PartitionConfig.from_items(overrides, config)
    manifest = _load(args)
    assignment = solve_partition(manifest, config)
    for w in assignment.warnings:
        print(f"fairsplit: warning: {w}", file=sys.stderr)
    split_path, stats_path = emit_split(assignment, manifest, args.out)
    fr = assignment.fractions
    print(
        f"wrote {split_path} and {stats_path}; fractions "
        + "/".join(f"{fr[s]:.4f}" for s in SET_NAMES)
        + f"; objective {assignment.objective:.6g}",
        file=sys.stderr,
    )
    return 0


def cmd_evaluate(args) -> int:
    manifest = _load(args)
    predictions = load_predictions(args.predictions, manifest.schema)
    restrict = None
    if args.split:
        split = read_split(args.split)
        restrict = [sid for sid, s in split.items() if s == args.eval_set]
    joined = join_predictions(manifest, predictions, restrict_to=restrict)
    if joined.missing_ids:
        print(f"fairsplit: warning: {len(joined.missing_ids)} sample(s) have no prediction", file=sys.stderr)
    config = {
        "manifest": args.manifest,
        "predictions": args.predictions,
        "split": args.split,
        "set": args.eval_set if args.split else None,
        "task": args.task,
        "weighted_subgroups": bool(args.weighted_subgroups),
    }
    report = evaluate(joined, args.model, weighted_subgroups=args.weighted_subgroups, config=config)
    if args.out:
        write_report(report, args.out)
    else:
        import json

        sys.stdout.write(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return 0


def cmd_report(args) -> int:
    reports = []
    for path in args.reports:
        reports.extend(read_report(path))
    _emit(render_report(reports, args.format), args.out)
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "consolidate": cmd_consolidate,
    "split": cmd_split,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="fairsplit: %(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except FairsplitError as exc:
        print(f"fairsplit: error: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"fairsplit: error: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
