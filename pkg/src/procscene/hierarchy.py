"""Scene hierarchies: support tree, per-surface functional trees, serialization.

Node labels follow the ``category_N`` convention; :func:`category_of` maps a
label back to its category by stripping a trailing ``_<digits>`` suffix.
"""

from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import ParseError, UnknownSceneType, ValidationError
from .records import FLOOR

FORMAT_VERSION = 1
_SUFFIX = re.compile(r"_(\d+)$")


def is_floor(label: str) -> bool:
    return label.lower() == FLOOR


def category_of(label: str) -> str:
    if is_floor(label):
        return FLOOR
    return _SUFFIX.sub("", label)


@dataclass
class SupportTree:
    """Floor-rooted tree; ``parent[c]`` supports ``c``. Children keep insertion order."""

    nodes: dict[str, str] = field(default_factory=lambda: {FLOOR: FLOOR})
    parent: dict[str, str] = field(default_factory=dict)
    children: dict[str, list[str]] = field(default_factory=lambda: {FLOOR: []})

    root = FLOOR

    def add(self, node: str, parent: str, category: str | None = None) -> None:
        if node in self.nodes:
            raise ValidationError("node already has a support parent", edge=(parent, node))
        if parent not in self.nodes:
            raise ValidationError("support parent is not grounded to the floor", edge=(parent, node))
        self.nodes[node] = category if category is not None else category_of(node)
        self.parent[node] = parent
        self.children[node] = []
        self.children[parent].append(node)

    def bfs(self) -> list[str]:
        order, queue = [], deque([self.root])
        while queue:
            n = queue.popleft()
            order.append(n)
            queue.extend(self.children[n])
        return order

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass
class FunctionalTree:
    """Semantic placement tree over the children of one support anchor."""

    anchor: str
    parent: dict[str, str] = field(default_factory=dict)
    children: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        self.children.setdefault(self.anchor, [])

    def add(self, node: str, parent: str) -> None:
        if node in self.parent or node == self.anchor:
            raise ValidationError("node has two functional parents", edge=(parent, node))
        if parent != self.anchor and parent not in self.parent:
            raise ValidationError(
                f"functional parent is not on the surface of {self.anchor!r}", edge=(parent, node)
            )
        self.parent[node] = parent
        self.children.setdefault(node, [])
        self.children[parent].append(node)

    @property
    def nodes(self) -> list[str]:
        return [self.anchor, *self.parent]

    def leaves(self) -> list[str]:
        return [n for n in self.nodes if not self.children.get(n)]

    def dfs(self) -> list[str]:
        """Preorder over non-root nodes, children in insertion order."""
        out: list[str] = []
        stack = list(reversed(self.children[self.anchor]))
        while stack:
            n = stack.pop()
            out.append(n)
            stack.extend(reversed(self.children.get(n, [])))
        return out


@dataclass
class HierarchySpec:
    support: SupportTree = field(default_factory=SupportTree)
    functional: dict[str, FunctionalTree] = field(default_factory=dict)

    def add(self, node: str, support_parent: str, functional_parent: str | None = None,
            category: str | None = None) -> None:
        """Add a node under ``support_parent``; the functional parent defaults to the anchor."""
        self.support.add(node, support_parent, category)
        tree = self.functional.setdefault(support_parent, FunctionalTree(support_parent))
        tree.add(node, functional_parent if functional_parent is not None else support_parent)

    def category(self, node: str) -> str:
        return self.support.nodes[node]

    def validate(self) -> None:
        sup = self.support
        for node, par in sup.parent.items():
            if par not in sup.nodes:
                raise ValidationError("dangling support parent", edge=(par, node))
        reached = set(sup.bfs())
        for node in sup.nodes:
            if node not in reached:
                raise ValidationError("node is not grounded to the floor", edge=(sup.parent.get(node, "?"), node))
        for anchor, kids in sup.children.items():
            if not kids:
                if anchor in self.functional and self.functional[anchor].parent:
                    raise ValidationError("functional tree on a leaf support node", edge=(anchor, anchor))
                continue
            tree = self.functional.get(anchor)
            if tree is None or set(tree.parent) != set(kids):
                raise ValidationError(
                    f"functional tree of {anchor!r} must cover exactly its support children",
                    edge=(anchor, kids[0]),
                )
            seen = set(tree.dfs())
            if seen != set(kids):
                raise ValidationError("functional tree is not connected to its anchor", edge=(anchor, kids[0]))

    def node_count(self) -> int:
        return len(self.support)


@dataclass(frozen=True)
class RelationalTuple:
    dependent: str
    support: str
    functional: str | None = None


def serialize(spec: HierarchySpec) -> list[RelationalTuple]:
    """BFS over the support tree; at each node, DFS over its functional tree."""
    spec.validate()
    out: list[RelationalTuple] = []
    for node in spec.support.bfs():
        tree = spec.functional.get(node)
        if tree is None:
            continue
        for dep in tree.dfs():
            fparent = tree.parent[dep]
            out.append(RelationalTuple(dep, node, None if fparent == node else fparent))
    return out


def is_causal(tuples: list[RelationalTuple]) -> bool:
    placed = {FLOOR}
    for t in tuples:
        if t.support not in placed or (t.functional is not None and t.functional not in placed):
            return False
        placed.add(t.dependent)
    return True


# ---------------------------------------------------------------------------
# interchange documents


def _edges(items: Any, where: str) -> list[tuple[str, str]]:
    if not isinstance(items, list):
        raise ParseError("expected a list of edges", field=where)
    out = []
    for i, e in enumerate(items):
        if not isinstance(e, Mapping) or "parent" not in e or "child" not in e:
            raise ParseError("edge needs 'parent' and 'child'", field=f"{where}[{i}]")
        out.append((str(e["parent"]), str(e["child"])))
    return out


def _floor_name(label: str) -> str:
    return FLOOR if is_floor(label) else label


def parse_hierarchy(document: str | Mapping) -> HierarchySpec:
    """Build a validated spec from a ``support_tree`` / ``functional_trees`` document.

    Objects named only inside a functional tree are placed on that tree's
    support anchor. Support children left out of a functional tree hang
    directly off the anchor.

    Raises:
        ParseError: malformed document or wrong ``format_version``.
        ValidationError: structural violations, naming the offending edge.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(str(exc), line=exc.lineno) from exc
    if not isinstance(document, Mapping):
        raise ParseError("hierarchy document must be an object")
    version = document.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format version {version!r}", field="format_version")

    sup_edges = [(_floor_name(p), _floor_name(c)) for p, c in _edges(document.get("support_tree", []), "support_tree")]
    raw_trees = document.get("functional_trees", [])
    if not isinstance(raw_trees, list):
        raise ParseError("expected a list", field="functional_trees")

    parent_of: dict[str, str] = {}
    order: list[str] = []
    for p, c in sup_edges:
        if c == FLOOR:
            raise ValidationError("the floor cannot be supported", edge=(p, c))
        if p == c:
            raise ValidationError("self-support", edge=(p, c))
        if c in parent_of:
            raise ValidationError("node has multiple support parents", edge=(p, c))
        parent_of[c] = p
        order.append(c)

    f_trees: list[tuple[str, list[tuple[str, str]]]] = []
    anchors_seen: set[str] = set()
    for i, t in enumerate(raw_trees):
        if not isinstance(t, Mapping) or "support_anchor" not in t:
            raise ParseError("functional tree needs 'support_anchor'", field=f"functional_trees[{i}]")
        anchor = _floor_name(str(t["support_anchor"]))
        if anchor in anchors_seen:
            raise ValidationError("duplicate functional tree", edge=(anchor, anchor))
        anchors_seen.add(anchor)
        edges = [(_floor_name(p), _floor_name(c)) for p, c in _edges(t.get("edges", []), f"functional_trees[{i}].edges")]
        f_trees.append((anchor, edges))
        # objects named only in a functional tree sit on its anchor
        for p, c in edges:
            for node in (p, c):
                if node != anchor and node not in parent_of and node != FLOOR:
                    parent_of[node] = anchor
                    order.append(node)

    # grounding and cycle check
    for node in order:
        seen = {node}
        cur = node
        while cur != FLOOR:
            nxt = parent_of.get(cur)
            if nxt is None:
                raise ValidationError("node is not grounded to the floor", edge=(cur, node) if cur != node else (parent_of[node], node))
            if nxt in seen:
                raise ValidationError("support cycle", edge=(nxt, cur))
            seen.add(nxt)
            cur = nxt

    spec = HierarchySpec()
    pending = list(order)
    while pending:
        progressed = []
        for node in pending:
            if parent_of[node] in spec.support.nodes:
                spec.support.add(node, parent_of[node])
                progressed.append(node)
        if not progressed:
            node = pending[0]
            raise ValidationError("node is not grounded to the floor", edge=(parent_of[node], node))
        pending = [n for n in pending if n not in progressed]

    for anchor, edges in f_trees:
        if anchor not in spec.support.nodes:
            raise ValidationError("functional tree anchor is not in the support tree", edge=(anchor, anchor))
        tree = FunctionalTree(anchor)
        remaining = list(edges)
        for p, c in edges:
            if spec.support.parent.get(c) != anchor:
                raise ValidationError(
                    "functional edge between objects on different support surfaces", edge=(p, c)
                )
            if p != anchor and spec.support.parent.get(p) != anchor:
                raise ValidationError(
                    "functional edge between objects on different support surfaces", edge=(p, c)
                )
        while remaining:
            progressed = []
            for p, c in remaining:
                if p == anchor or p in tree.parent:
                    tree.add(c, p)
                    progressed.append((p, c))
            if not progressed:
                p, c = remaining[0]
                raise ValidationError("functional cycle or disconnected edge", edge=(p, c))
            remaining = [e for e in remaining if e not in progressed]
        spec.functional[anchor] = tree

    for anchor, kids in spec.support.children.items():
        if not kids:
            continue
        tree = spec.functional.setdefault(anchor, FunctionalTree(anchor))
        for kid in kids:
            if kid not in tree.parent:
                tree.add(kid, anchor)
    spec.validate()
    return spec


def to_document(spec: HierarchySpec) -> dict:
    sup = spec.support
    doc_sup = [{"parent": sup.parent[n], "child": n} for n in sup.bfs() if n != FLOOR]
    trees = []
    for anchor in sup.bfs():
        tree = spec.functional.get(anchor)
        if tree is None or not tree.parent:
            continue
        trees.append({
            "support_anchor": anchor,
            "edges": [{"parent": tree.parent[n], "child": n} for n in tree.dfs()],
        })
    return {"format_version": FORMAT_VERSION, "support_tree": doc_sup, "functional_trees": trees}


def load_hierarchy(path: str | Path) -> HierarchySpec:
    return parse_hierarchy(Path(path).read_text())


# ---------------------------------------------------------------------------
# statistical generation


@dataclass
class StatTables:
    """``sup_dep[anchor][dependent]`` counts; ``func_dep[anchor][leaf]`` is a list of (candidate, count)."""

    sup_dep: dict[str, dict[str, int]] = field(default_factory=dict)
    func_dep: dict[str, dict[str, list[tuple[str, int]]]] = field(default_factory=dict)

    def to_document(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "sup_dep": {a: dict(d) for a, d in self.sup_dep.items()},
            "func_dep": {a: {leaf: dict(c) for leaf, c in d.items()} for a, d in self.func_dep.items()},
        }

    @classmethod
    def from_document(cls, doc: Mapping) -> "StatTables":
        if doc.get("format_version") != FORMAT_VERSION:
            raise ParseError(f"unsupported format version {doc.get('format_version')!r}", field="format_version")
        try:
            sup = {str(a): {str(c): int(n) for c, n in d.items()} for a, d in doc.get("sup_dep", {}).items()}
            fnc = {
                str(a): {str(leaf): [(str(c), int(n)) for c, n in cands.items()] for leaf, cands in d.items()}
                for a, d in doc.get("func_dep", {}).items()
            }
        except (AttributeError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed stats table: {exc}") from exc
        for table, name in ((sup, "sup_dep"),):
            for a, d in table.items():
                for c, n in d.items():
                    if n < 0:
                        raise ParseError("counts must be nonnegative", field=f"{name}.{a}.{c}")
        for a, d in fnc.items():
            for leaf, cands in d.items():
                for c, n in cands:
                    if n < 0:
                        raise ParseError("counts must be nonnegative", field=f"func_dep.{a}.{leaf}.{c}")
        return cls(sup, fnc)

    def categories(self) -> set[str]:
        cats = set()
        for a, d in self.sup_dep.items():
            cats.add(a)
            cats.update(d)
        for a, d in self.func_dep.items():
            cats.add(a)
            for leaf, cands in d.items():
                cats.add(leaf)
                cats.update(c for c, _ in cands)
        return cats


def save_stats(stats: StatTables, path: str | Path) -> None:
    Path(path).write_text(json.dumps(stats.to_document(), indent=2) + "\n")


def load_stats(path: str | Path) -> StatTables:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc), line=exc.lineno) from exc
    return StatTables.from_document(doc)


def base_template(scene_type: str, templates: Mapping[str, Any]) -> HierarchySpec:
    """Seed hierarchy for ``scene_type`` from the configured templates."""
    if scene_type not in templates:
        raise UnknownSceneType(f"no base template for scene type {scene_type!r}")
    return parse_hierarchy(templates[scene_type])


def _instance_counts(spec: HierarchySpec) -> dict[str, int]:
    counts: dict[str, int] = {}
    for label, cat in spec.support.nodes.items():
        m = _SUFFIX.search(label)
        n = int(m.group(1)) if m else 1
        counts[cat] = max(counts.get(cat, 0), n)
    return counts


def _unique_label(category: str, counts: dict[str, int], taken: Mapping[str, Any]) -> str:
    n = counts.get(category, 0)
    while True:
        n += 1
        label = f"{category}_{n}"
        if label not in taken:
            counts[category] = n
            return label


def generate(
    scene_type: str,
    stats: StatTables,
    n_max: int,
    k: float,
    rng: np.random.Generator,
    templates: Mapping[str, Any],
) -> HierarchySpec:
    """Expand the base template by co-occurrence statistics.

    Every functional-tree leaf is queued with its support anchor. A popped
    (leaf, anchor) pair proposes each candidate recorded under
    ``func_dep[anchor][leaf]`` with probability ``min(1, k * freq / total)``,
    where ``total = sup_dep[anchor][leaf]``. Accepted candidates are placed on
    the same anchor with the leaf as functional parent and queued in turn.
    """
    if n_max < 0 or k < 0:
        raise ValueError("n_max and k must be nonnegative")
    spec = base_template(scene_type, templates)
    counts = _instance_counts(spec)
    added = 0
    queue: deque[tuple[str, str]] = deque()
    for anchor in spec.support.bfs():
        tree = spec.functional.get(anchor)
        if tree is None:
            continue
        for leaf in tree.leaves():
            if leaf != anchor:
                queue.append((leaf, anchor))

    while queue and added < n_max:
        leaf, anchor = queue.popleft()
        l_anc, l_leaf = spec.category(anchor), spec.category(leaf)
        total = stats.sup_dep.get(l_anc, {}).get(l_leaf)
        if total is None:
            continue
        for cand, freq in stats.func_dep.get(l_anc, {}).get(l_leaf, []):
            p = min(1.0, max(0.0, k * freq / total)) if total > 0 else 0.0
            if rng.random() < p and added < n_max:
                label = _unique_label(cand, counts, spec.support.nodes)
                spec.add(label, anchor, leaf, category=cand)
                queue.append((label, anchor))
                added += 1
    return spec
