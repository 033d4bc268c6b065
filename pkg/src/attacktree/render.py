"""Deterministic text rendering of reports and Graphviz export of trees."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import singledispatch

from .assets import CoverageReport
from .compare import ComparisonReport, ComparisonRow, Side
from .engine import AuditFinding, Evaluation, Scenario, WhatIfReport
from .model import (
    AttackTreeError,
    Combinator,
    Forest,
    NodeId,
    ResolvedForest,
    RiskTriple,
    Violation,
    format_outline,
    resolve_refs,
)

REPORT_VERSION = 1
MINUS = "−"


class UnknownTree(AttackTreeError, KeyError):
    def __init__(self, tree: str) -> None:
        self.tree = tree
        super().__init__(f"no tree {tree!r} in forest")

    def __str__(self) -> str:
        return self.args[0]


@dataclass(frozen=True)
class ValidationReport:
    trees: int
    violations: tuple[Violation, ...]

    def to_dict(self) -> dict:
        return {"trees": self.trees, "violations": [v.to_dict() for v in self.violations]}


@dataclass(frozen=True)
class AuditReport:
    findings: tuple[AuditFinding, ...]
    titles: dict

    def to_dict(self) -> dict:
        return {"findings": [dict(f.to_dict(), title=self.titles.get(f.node)) for f in self.findings]}


@dataclass(frozen=True)
class EvalRow:
    node: NodeId
    title: str
    computed: RiskTriple | None
    recorded: RiskTriple | None


@dataclass(frozen=True)
class EvaluationReport:
    rows: tuple[EvalRow, ...]

    def to_dict(self) -> dict:
        return {"nodes": [
            {
                "node": str(r.node),
                "title": r.title,
                "feasible": r.computed is not None,
                "computed": _triple_dict(r.computed),
                "recorded": _triple_dict(r.recorded),
            }
            for r in self.rows
        ]}


@dataclass(frozen=True)
class ScenarioRow:
    tree: str
    scenario: Scenario | None
    dominant_title: str | None
    locus: str | None


@dataclass(frozen=True)
class ScenarioReport:
    rows: tuple[ScenarioRow, ...]

    def to_dict(self) -> dict:
        out = []
        for r in self.rows:
            s = r.scenario
            out.append({
                "tree": r.tree,
                "feasible": s is not None,
                "summary": None if s is None else _triple_dict(s.summary),
                "dominant": None if s is None else str(s.dominant),
                "dominant_title": r.dominant_title,
                "locus": r.locus,
                "chain": [] if s is None else [str(n) for n in s.chain],
                "leaves": [] if s is None else [str(n) for n in sorted(s.leaves, key=NodeId.sort_key)],
            })
        return {"scenarios": out}


def _triple_dict(t: RiskTriple | None) -> dict | None:
    if t is None:
        return None
    return {"effort": t.effort, "risk": t.risk, "gain": t.gain}


def envelope(report) -> str:
    """Structured output: ``{"version": 1, "report": ...}``."""
    return json.dumps({"version": REPORT_VERSION, "report": report.to_dict()}, indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------


def _cell(text) -> str:
    return str(text).replace("|", "\\|")


def table(headers: list[str], rows: list[list]) -> str:
    cells = [[_cell(c) for c in row] for row in rows]
    widths = [max([len(h)] + [len(r[i]) for r in cells]) for i, h in enumerate(headers)]
    lines = [
        "| " + " | ".join(h.ljust(w) for h, w in zip(headers, widths)) + " |",
        "|" + "|".join("-" * (w + 2) for w in widths) + "|",
    ]
    lines += ["| " + " | ".join(c.ljust(w) for c, w in zip(r, widths)) + " |" for r in cells]
    return "\n".join(lines) + "\n"


def _signed(n: int) -> str:
    if n > 0:
        return f"+{n}"
    if n < 0:
        return f"{MINUS}{-n}"
    return "0"


def _er(t: RiskTriple | None) -> str:
    return "infeasible" if t is None else f"{t.effort}/{t.risk}"


def delta_text(row: ComparisonRow) -> str:
    if row.delta_effort is None:
        return "n/a"
    parts = [
        f"{name} {_signed(d)}"
        for name, d in (("effort", row.delta_effort), ("risk", row.delta_risk))
        if d
    ]
    return ", ".join(parts) or "none"


def _dominant(side: Side) -> str:
    if side.dominant is None:
        return "-"
    text = f"{side.dominant} {side.dominant_title}"
    if side.locus:
        text += f" [{side.locus}]"
    return text


@singledispatch
def render_markdown(report) -> str:
    raise TypeError(f"cannot render {type(report).__name__}")


@render_markdown.register
def _(report: ComparisonReport) -> str:
    rows = [
        [
            r.key[0], r.key[1].value, r.a.tree, r.b.tree,
            _er(r.a.summary), _er(r.b.summary), delta_text(r),
            "yes" if r.significant else "no", _dominant(r.a), _dominant(r.b),
        ]
        for r in sorted(report.rows, key=lambda r: (r.key[0], r.key[1].rank))
    ]
    out = [
        f"Threshold: {report.threshold}",
        "Mitigations: " + (", ".join(str(n) for n in report.mitigations) or "none"),
        "",
        table(
            ["Asset", "Property", "A tree", "B tree", "A", "B", "Delta", "Significant", "A dominant", "B dominant"],
            rows,
        ),
    ]
    for label, items in (("Only in A", report.only_a), ("Only in B", report.only_b)):
        if items:
            out.append(label + ":\n" + "".join(f"- {k[0]} {k[1].value} ({t})\n" for k, t in items))
    return "\n".join(out)


@render_markdown.register
def _(report: CoverageReport) -> str:
    rows = [[a, p.value, report.covered.get((a, p), "MISSING")] for a, p in report.required]
    rows += [[a, p.value, f"{t} (surplus)"] for (a, p), t in report.surplus]
    summary = (
        f"\n{len(report.covered)}/{len(report.required)} required pairs covered, "
        f"{len(report.missing)} missing, {len(report.surplus)} surplus\n"
        if report.required or report.surplus else ""
    )
    return table(["Asset", "Property", "Tree"], rows) + summary


@render_markdown.register
def _(report: AuditReport) -> str:
    rows = [
        [str(f.node), str(f.recorded), f"{f.computed_effort}/{f.computed_risk}",
         _signed(f.effort_delta), _signed(f.risk_delta), report.titles.get(f.node, "")]
        for f in sorted(report.findings, key=lambda f: f.node.sort_key())
    ]
    return table(["Node", "Recorded", "Computed", "Effort delta", "Risk delta", "Title"], rows)


@render_markdown.register
def _(report: ValidationReport) -> str:
    if report.trees == 0:
        return "no trees found\n"
    if not report.violations:
        return f"{report.trees} trees, no violations\n"
    rows = [[str(v.node) if v.node else "-", v.kind.value, v.message] for v in report.violations]
    return table(["Node", "Violation", "Message"], rows)


@render_markdown.register
def _(report: EvaluationReport) -> str:
    rows = [
        [str(r.node), str(r.computed) if r.computed else "infeasible",
         str(r.recorded) if r.recorded else "-", r.title]
        for r in report.rows
    ]
    return table(["Node", "Computed", "Recorded", "Title"], rows)


@render_markdown.register
def _(report: ScenarioReport) -> str:
    rows = []
    for r in report.rows:
        s = r.scenario
        if s is None:
            rows.append([r.tree, "infeasible", "-", "-", "-"])
        else:
            rows.append([r.tree, str(s.summary), f"{s.dominant} {r.dominant_title}", r.locus or "-", str(len(s.leaves))])
    return table(["Tree", "Summary", "Dominant attack", "Locus", "Leaves"], rows)


@render_markdown.register
def _(report: WhatIfReport) -> str:
    def side(s: Scenario | None, locus: str | None) -> list[str]:
        if s is None:
            return ["infeasible", "-", "-"]
        return [str(s.summary), f"{s.dominant} {report.titles.get(s.dominant, '')}", locus or "-"]

    head = [
        f"What-if for tree {report.tree}",
        "Mitigations: " + (", ".join(str(n) for n in report.mitigations) or "none"),
        "",
    ]
    body = table(
        ["", "Summary", "Dominant attack", "Locus"],
        [["before"] + side(report.before, report.before_locus),
         ["after"] + side(report.after, report.after_locus)],
    )
    tail = "" if report.feasible_after else "\nThe goal is infeasible under these mitigations.\n"
    return "\n".join(head) + body + tail


# ---------------------------------------------------------------------------


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def export_dot(forest: Forest | ResolvedForest, tree_id: str, evaluation: Evaluation | None = None) -> str:
    """Graphviz digraph of one tree.

    Labels carry outline, title and the computed triple when an evaluation
    is given (else the recorded one). AND parents get an ``AND`` label;
    mitigated and infeasible nodes are drawn dashed and grey.
    """
    resolved = forest if isinstance(forest, ResolvedForest) else resolve_refs(forest)
    if tree_id not in resolved.forest:
        raise UnknownTree(tree_id)
    tree = resolved.forest[tree_id]
    names: dict[NodeId, str] = {}
    lines = [f'digraph "{_dot_escape(tree_id)}" {{', "  rankdir=TB;", "  node [shape=box, fontsize=10];"]

    for i, node in enumerate(tree.root.walk()):
        names[node.id] = f"n{i}"
    for node in tree.root.walk():
        value = evaluation[node.id] if evaluation is not None else None
        if value is not None and value.triple is not None:
            erg = str(value.triple)
        elif node.recorded is not None:
            erg = str(node.recorded)
        else:
            erg = "-"
        outline = format_outline(node.id.outline) or tree_id
        label_lines = [outline, " ".join(node.title.split()), erg]
        if node.ref is not None:
            label_lines.append(f"-> {node.ref}")
        label = "\\n".join(_dot_escape(t) for t in label_lines)
        attrs = [f'label="{label}"']
        if node.combinator is Combinator.AND:
            attrs.append('xlabel="AND"')
        dead = node.id in resolved.mitigated or (value is not None and not value.feasible)
        if dead:
            attrs.append('style="dashed,filled", fillcolor="gray90", fontcolor="gray40"')
        elif node.is_assumption:
            attrs.append('style="dotted"')
        lines.append(f"  {names[node.id]} [{', '.join(attrs)}];")
    for node in tree.root.walk():
        for child in node.children:
            lines.append(f"  {names[node.id]} -> {names[child.id]};")
    lines.append("}")
    return "\n".join(lines) + "\n"
