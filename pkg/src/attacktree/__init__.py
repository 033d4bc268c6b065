"""Attack-tree risk analysis with effort/risk/gain annotations."""

__version__ = "0.1.0"

from .assets import Asset, AssetCatalog, CoverageReport, coverage, emit_assets, parse_assets
from .compare import ComparisonReport, compare, match_goals
from .dsl import ParseError, emit_canonical, emit_outline, load_forest, parse_canonical, parse_outline
from .engine import (
    AuditFinding,
    Evaluation,
    MitigationSet,
    Scenario,
    WhatIfReport,
    apply_mitigations,
    audit,
    dominant_scenario,
    parse_mitigations,
    propagate,
    what_if,
)
from .model import (
    AttackNode,
    AttackTree,
    Combinator,
    Forest,
    NodeId,
    ProtectionProperty,
    ResolvedForest,
    RiskTriple,
    attractiveness_less,
    make_triple,
    resolve_refs,
    validate,
)
from .render import export_dot, render_markdown
