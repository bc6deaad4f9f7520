"""
aggregatefile.py

The shared aggregate file: a small YAML document

    sites:
    - [0, 0]
    - [0, 1]
    edges:
    - [[0, 0], [0, 1]]
    includes_floor: true
    t: 1.0

Sites are written sorted by (x2, x1), edges by (from, to), so a document
re-serializes byte for byte. `t` is optional.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import yaml

from .lattice import DirectedEdge, LatticeError, SdlaError, Site, site_key

REQUIRED_KEYS = ("sites", "edges", "includes_floor")
OPTIONAL_KEYS = ("t",)


class AggregateFormatError(SdlaError):
    """Malformed aggregate file; carries the file, line and field."""

    def __init__(self, source: str, line: Optional[int], field: str, problem: str):
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {field}: {problem}")
        self.source = source
        self.line = line
        self.field = field
        self.problem = problem


@dataclass(frozen=True)
class AggregateDocument:
    sites: frozenset[Site]
    edges: frozenset[DirectedEdge] = frozenset()
    includes_floor: bool = True
    t: Optional[float] = None


# -----------------------------
# Parsing
# -----------------------------

def _line(node: yaml.Node) -> int:
    return node.start_mark.line + 1


class _Reader:
    def __init__(self, source: str):
        self.source = source
        self.constructor = yaml.constructor.SafeConstructor()

    def fail(self, node: Optional[yaml.Node], field: str, problem: str) -> AggregateFormatError:
        return AggregateFormatError(self.source, _line(node) if node is not None else None, field, problem)

    def scalar(self, node: yaml.Node, field: str) -> Any:
        if not isinstance(node, yaml.ScalarNode):
            raise self.fail(node, field, "expected a scalar")
        return self.constructor.construct_object(node, deep=True)

    def coordinate(self, node: yaml.Node, field: str) -> int:
        value = self.scalar(node, field)
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.fail(node, field, f"expected an integer coordinate, got {node.value!r}")
        return value

    def site(self, node: yaml.Node, field: str) -> Site:
        if not isinstance(node, yaml.SequenceNode) or len(node.value) != 2:
            raise self.fail(node, field, "expected [x1, x2]")
        x1 = self.coordinate(node.value[0], field)
        x2 = self.coordinate(node.value[1], field)
        try:
            return Site(x1, x2)
        except LatticeError as exc:
            raise self.fail(node, field, str(exc)) from None

    def edge(self, node: yaml.Node, field: str) -> DirectedEdge:
        if not isinstance(node, yaml.SequenceNode) or len(node.value) != 2:
            raise self.fail(node, field, "expected [[x1, x2], [x1, x2]]")
        tail = self.site(node.value[0], field)
        head = self.site(node.value[1], field)
        try:
            return DirectedEdge(tail, head)
        except LatticeError as exc:
            raise self.fail(node, field, str(exc)) from None

    def sequence(self, node: yaml.Node, field: str) -> list[yaml.Node]:
        if not isinstance(node, yaml.SequenceNode):
            raise self.fail(node, field, "expected a list")
        return node.value


def parse_aggregate(text: str, source: str = "<string>") -> AggregateDocument:
    reader = _Reader(source)
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise AggregateFormatError(source, line, "document", f"not valid YAML ({getattr(exc, 'problem', exc)})") from None
    if root is None:
        raise AggregateFormatError(source, 1, "document", "empty document")
    if not isinstance(root, yaml.MappingNode):
        raise reader.fail(root, "document", "expected a mapping with sites, edges, includes_floor")

    found: dict[str, tuple[yaml.Node, yaml.Node]] = {}
    for key_node, value_node in root.value:
        key = key_node.value if isinstance(key_node, yaml.ScalarNode) else None
        if key not in REQUIRED_KEYS + OPTIONAL_KEYS:
            raise reader.fail(key_node, str(key), "unknown field")
        if key in found:
            raise reader.fail(key_node, key, "field given twice")
        found[key] = (key_node, value_node)
    for key in REQUIRED_KEYS:
        if key not in found:
            raise AggregateFormatError(source, _line(root), key, "missing required field")

    sites: list[Site] = []
    for node in reader.sequence(found["sites"][1], "sites"):
        s = reader.site(node, "sites")
        if s in sites:
            raise reader.fail(node, "sites", f"duplicate site {s.as_list()}")
        sites.append(s)
    site_set = frozenset(sites)

    edges: list[DirectedEdge] = []
    heads: set[Site] = set()
    for node in reader.sequence(found["edges"][1], "edges"):
        e = reader.edge(node, "edges")
        if e.tail not in site_set or e.head not in site_set:
            raise reader.fail(node, "edges", f"edge {e} has an endpoint not listed in sites")
        if e.head in heads:
            raise reader.fail(node, "edges", f"site {e.head.as_list()} has two incoming edges")
        heads.add(e.head)
        edges.append(e)

    floor_node = found["includes_floor"][1]
    includes_floor = reader.scalar(floor_node, "includes_floor")
    if not isinstance(includes_floor, bool):
        raise reader.fail(floor_node, "includes_floor", f"expected true or false, got {floor_node.value!r}")

    t = None
    if "t" in found:
        t_node = found["t"][1]
        t = reader.scalar(t_node, "t")
        if isinstance(t, bool) or not isinstance(t, (int, float)) or t < 0:
            raise reader.fail(t_node, "t", f"expected a non-negative time, got {t_node.value!r}")
        t = float(t)

    return AggregateDocument(site_set, frozenset(edges), includes_floor, t)


def load_aggregate(path: Path) -> AggregateDocument:
    path = Path(path)
    return parse_aggregate(path.read_text(encoding="utf-8"), str(path))


# -----------------------------
# Emission
# -----------------------------

def _yaml_float(x: float) -> str:
    text = repr(float(x))
    if "e" in text and "." not in text:
        text = text.replace("e", ".0e")
    return text


def dump_aggregate(doc: AggregateDocument) -> str:
    lines = []
    sites = sorted(doc.sites, key=site_key)
    lines.append("sites:" if sites else "sites: []")
    lines.extend(f"- [{s.x1}, {s.x2}]" for s in sites)
    edges = sorted(doc.edges, key=lambda e: (site_key(e.tail), site_key(e.head)))
    lines.append("edges:" if edges else "edges: []")
    lines.extend(f"- [[{e.tail.x1}, {e.tail.x2}], [{e.head.x1}, {e.head.x2}]]" for e in edges)
    lines.append(f"includes_floor: {'true' if doc.includes_floor else 'false'}")
    if doc.t is not None:
        lines.append(f"t: {_yaml_float(doc.t)}")
    return "\n".join(lines) + "\n"


def write_aggregate(path: Path, doc: AggregateDocument) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_aggregate(doc), encoding="utf-8")
    return path
