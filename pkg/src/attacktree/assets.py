"""Critical-asset catalog (``.assets`` files) and forest coverage checks.

Records are separated by blank lines::

    id: revocation-information
    name: Revocation Information
    requires: integrity, availability
    impact.integrity: ...
    impact.availability: ...
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .model import AttackTreeError, Forest, ProtectionProperty

GoalKey = tuple[str, ProtectionProperty]


class CatalogError(AttackTreeError, ValueError):
    def __init__(self, line: int, message: str) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}")


class UnknownProperty(CatalogError):
    pass


class DuplicateAsset(CatalogError):
    pass


@dataclass(frozen=True)
class Asset:
    id: str
    name: str
    required: frozenset[ProtectionProperty]
    impact: Mapping[ProtectionProperty, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.required:
            raise ValueError(f"asset {self.id} requires no protection property")


@dataclass(frozen=True)
class AssetCatalog:
    assets: tuple[Asset, ...] = ()

    def __post_init__(self) -> None:
        ids = [a.id for a in self.assets]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate asset ids in catalog")

    def __getitem__(self, asset_id: str) -> Asset:
        for a in self.assets:
            if a.id == asset_id:
                return a
        raise KeyError(asset_id)

    def __len__(self) -> int:
        return len(self.assets)

    def required_pairs(self) -> list[GoalKey]:
        return sorted(
            ((a.id, p) for a in self.assets for p in a.required), key=goal_sort_key
        )


def goal_sort_key(key: GoalKey) -> tuple[str, int]:
    return (key[0], key[1].rank)


def _property(text: str, line: int) -> ProtectionProperty:
    try:
        return ProtectionProperty(text.strip())
    except ValueError:
        choices = ", ".join(p.value for p in ProtectionProperty)
        raise UnknownProperty(line, f"unknown protection property {text.strip()!r} (expected {choices})") from None


def parse_assets(text: str) -> AssetCatalog:
    records: list[list[tuple[int, str, str]]] = [[]]
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            if records[-1]:
                records.append([])
            continue
        if line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise CatalogError(lineno, f"expected 'field: value', got {line!r}")
        records[-1].append((lineno, key.strip(), value.strip()))

    assets: list[Asset] = []
    seen: set[str] = set()
    for rec in filter(None, records):
        fields: dict[str, str] = {}
        impact: dict[ProtectionProperty, str] = {}
        required: list[ProtectionProperty] = []
        first = rec[0][0]
        for lineno, key, value in rec:
            if key.startswith("impact."):
                impact[_property(key[len("impact."):], lineno)] = value
            elif key == "requires":
                required = [_property(p, lineno) for p in value.split(",") if p.strip()]
            elif key in ("id", "name"):
                fields[key] = value
            else:
                raise CatalogError(lineno, f"unknown field {key!r}")
        if "id" not in fields:
            raise CatalogError(first, "record without an 'id:' field")
        if fields["id"] in seen:
            raise DuplicateAsset(first, f"asset {fields['id']!r} defined twice")
        if not required:
            raise CatalogError(first, f"asset {fields['id']!r} has no 'requires:' properties")
        seen.add(fields["id"])
        assets.append(Asset(fields["id"], fields.get("name", fields["id"]), frozenset(required), impact))
    return AssetCatalog(tuple(assets))


def load_assets(path: str | Path) -> AssetCatalog:
    return parse_assets(Path(path).read_text(encoding="utf-8"))


def emit_assets(catalog: AssetCatalog) -> str:
    chunks = []
    for a in catalog.assets:
        props = sorted(a.required, key=lambda p: p.rank)
        lines = [f"id: {a.id}", f"name: {a.name}", "requires: " + ", ".join(p.value for p in props)]
        for p in sorted(a.impact, key=lambda p: p.rank):
            lines.append(f"impact.{p.value}: {a.impact[p]}")
        chunks.append("\n".join(lines) + "\n")
    return "\n".join(chunks)


@dataclass(frozen=True)
class CoverageReport:
    required: tuple[GoalKey, ...]
    covered: Mapping[GoalKey, str]  # goal -> covering tree id
    missing: tuple[GoalKey, ...]
    surplus: tuple[tuple[GoalKey, str], ...]

    @property
    def complete(self) -> bool:
        return not self.missing and not self.surplus

    def to_dict(self) -> dict:
        def k(key: GoalKey) -> dict:
            return {"asset": key[0], "property": key[1].value}

        return {
            "required": len(self.required),
            "covered": [dict(k(g), tree=self.covered[g]) for g in self.required if g in self.covered],
            "missing": [k(g) for g in self.missing],
            "surplus": [dict(k(g), tree=t) for g, t in self.surplus],
        }


def coverage(catalog: AssetCatalog, forest: Forest) -> CoverageReport:
    by_key: dict[GoalKey, list[str]] = {}
    for tree in forest:
        by_key.setdefault(tree.goal_key, []).append(tree.id)
    required = catalog.required_pairs()
    req_set = set(required)
    covered = {g: min(by_key[g]) for g in required if g in by_key}
    missing = tuple(g for g in required if g not in by_key)
    surplus = tuple(sorted(
        ((g, t) for g, ids in by_key.items() if g not in req_set for t in ids),
        key=lambda gt: (goal_sort_key(gt[0]), gt[1]),
    ))
    return CoverageReport(tuple(required), covered, missing, surplus)
