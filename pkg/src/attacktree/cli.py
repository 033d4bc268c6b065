"""Command-line entry point.

Exit status: 0 success, 1 the command ran but found violations, audit
findings, missing coverage or significant differences, 2 parse or usage
errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .assets import CatalogError, coverage, load_assets
from .compare import DEFAULT_THRESHOLD, DuplicateGoalKey, compare
from .dsl import ParseError, SchemaError, emit_canonical, load_forest
from .engine import (
    Infeasible,
    MitigationSet,
    MitigationSyntaxError,
    apply_mitigations,
    audit,
    dominant_scenario,
    load_mitigations,
    propagate,
    scenario_locus,
    what_if,
)
from .model import AttackTreeError, Forest, UnknownNode, resolve_refs, validate
from .render import (
    AuditReport,
    EvalRow,
    REPORT_VERSION,
    EvaluationReport,
    ScenarioReport,
    ScenarioRow,
    UnknownTree,
    ValidationReport,
    envelope,
    export_dot,
    render_markdown,
)

OK, FINDINGS, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "structured"), default="text",
                        help="text tables (default) or versioned JSON")
    common.add_argument("--out", type=Path, help="write output here instead of standard output")

    trees = argparse.ArgumentParser(add_help=False)
    trees.add_argument("--tree", action="append", metavar="ID", help="restrict to this tree (repeatable)")

    mitig = argparse.ArgumentParser(add_help=False)
    mitig.add_argument("--mitigate", action="append", type=Path, metavar="FILE",
                       help="mitigation-set file, one tree:outline per line (repeatable)")

    p = argparse.ArgumentParser(prog="attacktree", description="Attack-tree risk analysis")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("validate", parents=[common], help="check forest structure")
    s.add_argument("forest", type=Path)

    s = sub.add_parser("eval", parents=[common, trees, mitig], help="propagate risk values")
    s.add_argument("forest", type=Path)
    s.add_argument("--all-nodes", action="store_true", help="list every node, not just tree goals")

    s = sub.add_parser("audit", parents=[common, trees], help="recorded vs propagated values")
    s.add_argument("forest", type=Path)

    s = sub.add_parser("dominant", parents=[common, trees, mitig], help="dominant attack scenario per tree")
    s.add_argument("forest", type=Path)

    s = sub.add_parser("mitigate", parents=[common, trees, mitig], help="before/after what-if report")
    s.add_argument("forest", type=Path)

    s = sub.add_parser("compare", parents=[common, mitig], help="compare two designs goal by goal")
    s.add_argument("forest_a", type=Path)
    s.add_argument("forest_b", type=Path)
    s.add_argument("--threshold", type=_positive_int, default=DEFAULT_THRESHOLD,
                   help=f"significance threshold in points (default {DEFAULT_THRESHOLD})")

    s = sub.add_parser("coverage", parents=[common], help="asset catalog coverage of a forest")
    s.add_argument("assets", type=Path)
    s.add_argument("forest", type=Path)

    s = sub.add_parser("export", parents=[common, trees, mitig],
                       help="Graphviz graph of one tree, or canonical JSON with --format structured")
    s.add_argument("forest", type=Path)
    return p


def _mitigations(args) -> MitigationSet:
    m = MitigationSet()
    for path in args.mitigate or ():
        m = m | load_mitigations(path)
    return m


def _selected_trees(forest: Forest, args) -> list[str]:
    if not args.tree:
        return list(forest.trees)
    for t in args.tree:
        if t not in forest:
            raise UnknownTree(t)
    return list(args.tree)


def _emit(args, report) -> str:
    return envelope(report) if args.format == "structured" else render_markdown(report)


def cmd_validate(args) -> tuple[int, str]:
    forest = load_forest(args.forest)
    violations = tuple(validate(forest))
    report = ValidationReport(len(forest), violations)
    return (FINDINGS if violations else OK), _emit(args, report)


def cmd_eval(args) -> tuple[int, str]:
    resolved = resolve_refs(load_forest(args.forest))
    resolved = apply_mitigations(resolved, _mitigations(args))
    evaluation = propagate(resolved)
    rows = []
    for tree_id in _selected_trees(resolved.forest, args):
        root = resolved.forest[tree_id].root
        nodes = list(root.walk()) if args.all_nodes else [root]
        for node in nodes:
            rows.append(EvalRow(node.id, node.title, evaluation[node.id].triple, node.recorded))
    return OK, _emit(args, EvaluationReport(tuple(rows)))


def cmd_audit(args) -> tuple[int, str]:
    resolved = resolve_refs(load_forest(args.forest))
    trees = set(_selected_trees(resolved.forest, args))
    findings = tuple(f for f in audit(resolved) if f.node.tree in trees)
    titles = {f.node: resolved.index[f.node].title for f in findings}
    return (FINDINGS if findings else OK), _emit(args, AuditReport(findings, titles))


def cmd_dominant(args) -> tuple[int, str]:
    resolved = apply_mitigations(resolve_refs(load_forest(args.forest)), _mitigations(args))
    evaluation = propagate(resolved)
    rows = []
    for tree_id in _selected_trees(resolved.forest, args):
        try:
            s = dominant_scenario(resolved, tree_id, evaluation)
        except Infeasible:
            rows.append(ScenarioRow(tree_id, None, None, None))
            continue
        rows.append(ScenarioRow(tree_id, s, resolved.index[s.dominant].title, scenario_locus(resolved, s)))
    return OK, _emit(args, ScenarioReport(tuple(rows)))


def cmd_mitigate(args) -> tuple[int, str]:
    if not args.mitigate:
        raise UsageError("mitigate: --mitigate FILE is required")
    resolved = resolve_refs(load_forest(args.forest))
    m = _mitigations(args)
    reports = [what_if(resolved, t, m) for t in _selected_trees(resolved.forest, args)]
    if args.format == "structured":
        doc = {"version": REPORT_VERSION, "report": {"what_if": [r.to_dict() for r in reports]}}
        return OK, json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
    return OK, "\n".join(render_markdown(r) for r in reports)


def cmd_compare(args) -> tuple[int, str]:
    a = resolve_refs(load_forest(args.forest_a))
    b = resolve_refs(load_forest(args.forest_b))
    report = compare(a, b, _mitigations(args), args.threshold)
    return (FINDINGS if report.any_significant else OK), _emit(args, report)


def cmd_coverage(args) -> tuple[int, str]:
    report = coverage(load_assets(args.assets), load_forest(args.forest))
    return (OK if report.complete else FINDINGS), _emit(args, report)


def cmd_export(args) -> tuple[int, str]:
    forest = load_forest(args.forest)
    if args.format == "structured":
        if args.tree:
            forest = Forest.of(forest[t] for t in _selected_trees(forest, args))
        return OK, emit_canonical(forest)
    if not args.tree or len(args.tree) != 1:
        raise UsageError("export: exactly one --tree ID is required for graph output")
    resolved = apply_mitigations(resolve_refs(forest), _mitigations(args))
    tree_id = _selected_trees(forest, args)[0]
    return OK, export_dot(resolved, tree_id, propagate(resolved))


COMMANDS = {
    "validate": cmd_validate,
    "eval": cmd_eval,
    "audit": cmd_audit,
    "dominant": cmd_dominant,
    "mitigate": cmd_mitigate,
    "compare": cmd_compare,
    "coverage": cmd_coverage,
    "export": cmd_export,
}

_INPUT_ERRORS = (
    ParseError, SchemaError, MitigationSyntaxError, CatalogError, DuplicateGoalKey,
    UnknownNode, UnknownTree, UsageError, AttackTreeError, OSError, UnicodeDecodeError,
)


def run_cli(argv: list[str] | None = None) -> tuple[int, str, str]:
    """Run one command; returns ``(status, stdout_text, stderr_text)``."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the usage message
        return (exc.code if isinstance(exc.code, int) else USAGE), "", ""
    try:
        status, text = COMMANDS[args.command](args)
    except Infeasible as exc:
        return USAGE, "", f"error: {exc}\n"
    except _INPUT_ERRORS as exc:
        return USAGE, "", f"error: {exc}\n"
    if args.out is not None:
        args.out.write_text(text, encoding="utf-8")
        return status, "", ""
    return status, text, ""


def main(argv: list[str] | None = None) -> int:
    status, out, err = run_cli(argv)
    if out:
        sys.stdout.write(out)
    if err:
        sys.stderr.write(err)
    return status


if __name__ == "__main__":
    sys.exit(main())
