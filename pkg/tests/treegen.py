"""Random forest generators and brute-force oracles shared by the tests.

The oracles deliberately avoid the engine's code paths: the effort oracle
enumerates every concrete attack explicitly, and the risk oracle evaluates
a flat node table by repeated sweeps instead of recursing over the tree.
"""

from __future__ import annotations

import itertools
import random
import string

from hypothesis import strategies as st

from attacktree.model import (
    LOCI,
    AttackNode,
    AttackTree,
    Combinator,
    Forest,
    NodeId,
    ProtectionProperty,
    RiskTriple,
)

WORDS = (
    "exploit", "server", "database", "login", "forge", "steal", "user", "key",
    "bypass", "inject", "intercept", "replay", "credentials", "session", "wire",
)
PROPERTIES = list(ProtectionProperty)


def random_triple(rng: random.Random) -> RiskTriple:
    return RiskTriple(rng.randint(1, 9), rng.randint(1, 9), rng.randint(1, 9))


def _title(rng: random.Random) -> str:
    return " ".join(rng.choice(WORDS) for _ in range(rng.randint(1, 4)))


class _Budget:
    def __init__(self, leaves: int) -> None:
        self.leaves = leaves


def _build(rng, nid: NodeId, want: int, depth: int, max_depth: int, budget: _Budget, p_internal: float):
    """A subtree using ``want`` scorable leaves (fewer if the depth cap bites)."""
    at_floor = depth >= max_depth
    if want == 1 and (at_floor or rng.random() < 0.6):
        budget.leaves -= 1
        return AttackNode(nid, _title(rng), recorded=random_triple(rng))
    if at_floor:
        budget.leaves -= 1
        return AttackNode(nid, _title(rng), recorded=random_triple(rng))
    k = 1 if want == 1 else rng.randint(2 if depth == max_depth - 1 else 1, min(want, 5))
    if depth == max_depth - 1:
        parts = [1] * k
    else:
        cuts = sorted(rng.sample(range(1, want), k - 1)) if k > 1 else []
        parts = [b - a for a, b in zip([0] + cuts, cuts + [want])]
    and_node = k >= 2 and rng.random() < 0.45
    assume_at = None
    if and_node and budget.leaves > 0 and rng.random() < 0.2:
        assume_at = rng.randint(0, k)
        budget.leaves -= 1
    children = []
    for part in parts:
        if assume_at == len(children):
            children.append(AttackNode(nid.child(len(children) + 1), "precondition", tags={"assumption"}))
        children.append(_build(rng, nid.child(len(children) + 1), part, depth + 1, max_depth, budget, p_internal))
    if assume_at is not None and assume_at == len(children):
        children.append(AttackNode(nid.child(len(children) + 1), "precondition", tags={"assumption"}))
    recorded = random_triple(rng) if rng.random() < p_internal else None
    return AttackNode(
        nid, _title(rng), tuple(children), recorded,
        combinator=Combinator.AND if and_node else Combinator.OR,
    )


def random_tree(
    rng: random.Random,
    tree_id: str = "T",
    max_leaves: int = 12,
    max_depth: int = 5,
    p_internal: float = 0.3,
) -> AttackTree:
    """Random AND/OR tree with at most ``max_leaves`` leaves and depth ``max_depth``."""
    want = rng.randint(1, max_leaves)
    budget = _Budget(max_leaves - want)
    root = _build(rng, NodeId(tree_id, ()), want, 0, max_depth, budget, p_internal)
    prop = rng.choice(PROPERTIES)
    return AttackTree(tree_id, _title(rng), f"asset-{tree_id.lower()}", prop, root)


def random_forest(rng: random.Random, max_leaves: int = 12, max_depth: int = 5, refs: bool = True) -> Forest:
    """One tree, or two where a leaf of the second refers into the first.

    Leaves across the whole forest, assumptions included, never exceed
    ``max_leaves``; the ref node that replaces a leaf is not a leaf.
    """
    first = random_tree(rng, "A", max_leaves, max_depth)
    spare = max_leaves - count_leaves(Forest.of([first]))
    if not refs or spare < 1 or rng.random() < 0.5:
        return Forest.of([first])
    second = random_tree(rng, "B", spare + 1, max_depth)
    leaves = [n for n in second.root.walk() if n.is_leaf and not n.is_assumption and n.id.outline]
    if not leaves:
        return Forest.of([first])
    targets = [n.id for n in first.root.walk() if not n.is_assumption]
    victim = rng.choice(leaves).id
    target = rng.choice(targets)
    root = _replace(second.root, victim, lambda n: AttackNode(n.id, n.title, ref=target))
    second = AttackTree(second.id, second.title, second.asset, second.property, root)
    return Forest.of([first, second])


def count_leaves(forest: Forest) -> int:
    return sum(1 for n in forest.nodes() if n.is_leaf)


def _replace(node: AttackNode, target: NodeId, fn) -> AttackNode:
    if node.id == target:
        return fn(node)
    if not node.children:
        return node
    kids = tuple(_replace(c, target, fn) for c in node.children)
    return AttackNode(node.id, node.title, kids, node.recorded, node.ref, node.tags, node.combinator)


def all_node_ids(forest: Forest) -> list[NodeId]:
    return [n.id for n in forest.nodes()]


# ---------------------------------------------------------------------------
# effort oracle: enumerate scenarios


def _flat_index(forest: Forest) -> dict[NodeId, AttackNode]:
    index = {}
    todo = [t.root for t in forest]
    while todo:
        n = todo.pop()
        index[n.id] = n
        todo.extend(n.children)
    return index


def enumerate_scenarios(forest: Forest, tree_id: str, mitigated=frozenset()) -> list[tuple[frozenset, frozenset]]:
    """Every concrete attack on ``tree_id`` as ``(visited nodes, leaves)``.

    An OR node contributes one child's attacks at a time, an AND node the
    cartesian product over its non-assumption children. Attacks touching
    a mitigated node are dropped.
    """
    index = _flat_index(forest)
    memo: dict[NodeId, list[tuple[frozenset, frozenset]]] = {}

    def attacks(nid: NodeId) -> list[tuple[frozenset, frozenset]]:
        if nid in memo:
            return memo[nid]
        node = index[nid]
        here = frozenset([nid])
        if nid in mitigated:
            result = []
        elif node.ref is not None:
            result = [(here | v, l) for v, l in attacks(node.ref)]
        elif not node.children:
            result = [(here, here)]
        else:
            live = [c for c in node.children if not (c.is_assumption and not c.children)]
            if node.combinator is Combinator.AND:
                result = []
                for combo in itertools.product(*(attacks(c.id) for c in live)):
                    v = here.union(*(x[0] for x in combo))
                    l = frozenset().union(*(x[1] for x in combo))
                    result.append((v, l))
            else:
                result = [(here | v, l) for c in live for v, l in attacks(c.id)]
        memo[nid] = result
        return result

    return attacks(NodeId(tree_id, ()))


def oracle_root_effort(forest: Forest, tree_id: str, mitigated=frozenset()) -> int | None:
    """Minimum over attacks of the maximum leaf effort, None if no attack survives."""
    index = _flat_index(forest)
    efforts = [max(index[leaf].recorded.effort for leaf in leaves)
               for _, leaves in enumerate_scenarios(forest, tree_id, mitigated)]
    return min(efforts) if efforts else None


# ---------------------------------------------------------------------------
# risk oracle: flat table, local selection rule only


def oracle_root_values(forest: Forest, tree_id: str, mitigated=frozenset()) -> tuple[int, int, int] | None:
    """(effort, risk, gain) of the root by sweeping a flat table to a fixpoint."""
    rows = {}
    for nid, node in _flat_index(forest).items():
        rows[nid] = {
            "kids": [c.id for c in node.children if not (c.is_assumption and not c.children)],
            "and": node.combinator is Combinator.AND,
            "ref": node.ref,
            "rec": node.recorded,
            "dead": nid in mitigated,
            "assume": node.is_assumption and not node.children and node.ref is None,
        }
    done: dict[NodeId, tuple | None] = {}
    while len(done) < len(rows):
        progressed = False
        for nid, row in rows.items():
            if nid in done:
                continue
            deps = [row["ref"]] if row["ref"] is not None else row["kids"]
            if any(d not in done for d in deps):
                continue
            progressed = True
            rec = row["rec"]
            if row["dead"] or row["assume"]:
                # nothing depends on assumption rows
                done[nid] = None
            elif row["ref"] is not None:
                t = done[row["ref"]]
                done[nid] = None if t is None else (t[0], t[1], rec.gain if rec else t[2])
            elif not deps:
                done[nid] = (rec.effort, rec.risk, rec.gain)
            elif row["and"]:
                vals = [done[d] for d in deps]
                if any(v is None for v in vals):
                    done[nid] = None
                else:
                    top = max(range(len(vals)), key=lambda i: (vals[i][0], -i))
                    gain = rec.gain if rec else vals[top][2]
                    done[nid] = (max(v[0] for v in vals), max(v[1] for v in vals), gain)
            else:
                live = [(i, done[d]) for i, d in enumerate(deps) if done[d] is not None]
                if not live:
                    done[nid] = None
                else:
                    _, best = min(live, key=lambda iv: (iv[1][0], iv[1][1], -iv[1][2], iv[0]))
                    done[nid] = (best[0], best[1], rec.gain if rec else best[2])
        assert progressed, "reference cycle in generated forest"
    return done[NodeId(tree_id, ())]


# ---------------------------------------------------------------------------
# hypothesis strategies for round-trips

_WORD = st.text(alphabet=string.ascii_lowercase + "'()-,", min_size=1, max_size=8)
titles = st.lists(_WORD, min_size=1, max_size=5).map(" ".join)
triples = st.builds(RiskTriple, st.integers(1, 9), st.integers(1, 9), st.integers(1, 9))
free_tags = st.sampled_from(["unverified", "shared", "todo.review", "x-1"])
locus_tags = st.sampled_from([f"locus({l})" for l in LOCI])


@st.composite
def attack_forests(draw, max_depth: int = 6, max_fanout: int = 5, max_nodes: int = 40, max_trees: int = 3):
    """Valid forests with AND/OR nodes, assumptions, tags and backward refs."""
    n_trees = draw(st.integers(1, max_trees))
    trees = []
    targets: list[NodeId] = []
    budget = [max_nodes]

    def node(nid: NodeId, depth: int, in_and: bool) -> AttackNode:
        budget[0] -= 1
        tags = set()
        if draw(st.booleans()):
            tags.add(draw(st.one_of(free_tags, locus_tags)))
        if in_and and depth > 0 and draw(st.integers(0, 5)) == 0:
            return AttackNode(nid, draw(titles), tags=tags | {"assumption"})
        if targets and nid.outline and draw(st.integers(0, 6)) == 0:
            rec = draw(st.none() | triples)
            return AttackNode(nid, draw(titles), recorded=rec, ref=draw(st.sampled_from(targets)), tags=tags)
        n_kids = 0
        if depth < max_depth and budget[0] > 0:
            n_kids = draw(st.integers(0, min(max_fanout, budget[0])))
        if n_kids == 0:
            return AttackNode(nid, draw(titles), recorded=draw(triples), tags=tags)
        is_and = n_kids >= 2 and draw(st.booleans())
        kids = []
        for i in range(1, n_kids + 1):
            kids.append(node(nid.child(i), depth + 1, is_and))
        if all(k.is_assumption and k.is_leaf for k in kids):
            # keep one scorable child
            first = kids[0]
            kids[0] = AttackNode(first.id, first.title, recorded=draw(triples))
        rec = draw(st.none() | triples)
        return AttackNode(nid, draw(titles), tuple(kids), rec, tags=tags,
                          combinator=Combinator.AND if is_and else Combinator.OR)

    for t in range(n_trees):
        tree_id = f"T.{t + 1}"
        root = node(NodeId(tree_id, ()), 0, False)
        trees.append(AttackTree(tree_id, draw(titles), f"asset-{t}", PROPERTIES[t % 3], root))
        targets.extend(n.id for n in root.walk() if not n.is_assumption)
    return Forest.of(trees)
