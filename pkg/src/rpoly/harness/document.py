"""Line-oriented polyhedron documents: parsing, validation and canonical emission.

Grammar (one record per line, ``#`` starts a comment)::

    polyhedron 1
    dim 2
    label <free text>
    vertex <id> <x_1> ... <x_n>
    simplex <v_0> ... <v_n>
    face <v_0> ... <v_k>                    # extra lower-dimensional simplex
    metric <v_0> ... <v_n> <i> <j> <e_1> ... <e_n> <coef>
    gamma <name> <v_1> ... <v_n> [<s0> <s1>]

``metric`` lines add ``coef * x_1**e_1 * ... * x_n**e_n`` to g_ij on the named
simplex; a simplex without metric lines gets the identity.  ``gamma`` names a
boundary facet and an optional sub-interval in fractions of its length,
measured from the first listed vertex.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import NamedTuple

import numpy as np

from ..complex import ComplexError, SimplicialComplex, build_complex, check_chainability, check_dimensional_homogeneity
from ..metric import MetricError, PiecewiseMetric, PolyMetric

VERSION = 1
KEYWORDS = ("polyhedron", "dim", "label", "vertex", "simplex", "face", "metric", "gamma")


class DocumentError(ValueError):
    """Syntax or semantic error at a position of the document."""

    def __init__(self, message: str, line: int, column: int = 1, source: str | None = None):
        where = f"line {line}, col {column}"
        super().__init__(f"{source}: {where}: {message}" if source else f"{where}: {message}")
        self.message = message
        self.line = line
        self.column = column
        self.source = source


@dataclass(frozen=True)
class Gamma:
    """Named observation set: a boundary facet and a fraction interval on it."""

    facet: tuple[int, ...]
    interval: tuple[float, float] = (0.0, 1.0)


@dataclass
class PolyhedronDocument:
    """In-memory form of a document; ``emit`` gives its canonical text."""

    dim: int
    vertices: dict[int, tuple[float, ...]]
    simplices: list[tuple[int, ...]]
    faces: list[tuple[int, ...]] = field(default_factory=list)
    metric: dict[tuple[int, ...], dict] = field(default_factory=dict)
    gammas: dict[str, Gamma] = field(default_factory=dict)
    label: str = ""
    version: int = VERSION
    lines: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_objects(cls, m: PiecewiseMetric, gammas=None, label: str = "") -> "PolyhedronDocument":
        """Document describing an existing complex and metric."""
        c = m.complex
        metric = {}
        for t, piece in zip(c.top, m.pieces):
            entries = {(i, j, mi): v for i, j, mi, v in piece.entries()}
            if entries != _identity_entries(c.dim):
                metric[t] = entries
        homog = set()
        for t in c.top:
            for k in range(1, c.dim + 1):
                homog.update(combinations(t, k))
        faces = [s for level in c.simplices[: c.dim] for s in level if s not in homog]
        return cls(
            dim=c.dim,
            vertices={v: tuple(float(a) for a in x) for v, x in c.coords.items()},
            simplices=list(c.top),
            faces=faces,
            metric=metric,
            gammas=dict(gammas or {}),
            label=label,
        )

    def relabeled(self, mapping: dict[int, int]) -> "PolyhedronDocument":
        """Same polyhedron with vertex ids renamed by ``mapping``."""
        f = lambda s: tuple(mapping[v] for v in s)  # noqa: E731
        return PolyhedronDocument(
            dim=self.dim,
            vertices={mapping[v]: x for v, x in self.vertices.items()},
            simplices=[tuple(sorted(f(s))) for s in self.simplices],
            faces=[tuple(sorted(f(s))) for s in self.faces],
            metric={tuple(sorted(f(s))): dict(e) for s, e in self.metric.items()},
            gammas={k: Gamma(f(g.facet), g.interval) for k, g in self.gammas.items()},
            label=self.label,
            version=self.version,
        )

    def emit(self) -> str:
        """Canonical text: records sorted, numbers in shortest round-trip form."""
        out = [f"polyhedron {self.version}", f"dim {self.dim}"]
        if self.label:
            out.append(f"label {self.label}")
        for v in sorted(self.vertices):
            out.append("vertex " + " ".join([str(v)] + [_num(a) for a in self.vertices[v]]))
        for s in sorted(tuple(sorted(s)) for s in self.simplices):
            out.append("simplex " + " ".join(map(str, s)))
        for s in sorted(tuple(sorted(s)) for s in self.faces):
            out.append("face " + " ".join(map(str, s)))
        for s in sorted(self.metric):
            for (i, j, mi), v in sorted(self.metric[s].items()):
                if v != 0:
                    out.append("metric " + " ".join([*map(str, s), str(i), str(j), *map(str, mi), _num(v)]))
        for name in sorted(self.gammas):
            g = self.gammas[name]
            rec = ["gamma", name, *map(str, g.facet)]
            if tuple(g.interval) != (0.0, 1.0):
                rec += [_num(g.interval[0]), _num(g.interval[1])]
            out.append(" ".join(rec))
        return "\n".join(out) + "\n"


def _num(x: float) -> str:
    return repr(float(x))


def _identity_entries(n: int) -> dict:
    return {(i, i, (0,) * n): 1.0 for i in range(n)}


def _tokens(line: str) -> list[tuple[str, int]]:
    body = line.split("#", 1)[0]
    out, col = [], 0
    for tok in body.split():
        col = body.index(tok, col)
        out.append((tok, col + 1))
        col += len(tok)
    return out


def _int(tok, lineno) -> int:
    try:
        return int(tok[0])
    except ValueError:
        raise DocumentError(f"expected an integer, got {tok[0]!r}", lineno, tok[1]) from None


def _float(tok, lineno) -> float:
    try:
        x = float(tok[0])
    except ValueError:
        raise DocumentError(f"expected a number, got {tok[0]!r}", lineno, tok[1]) from None
    if not np.isfinite(x):
        raise DocumentError(f"non-finite number {tok[0]!r}", lineno, tok[1])
    return x


def read_document(text: str) -> PolyhedronDocument:
    """Parse the syntax of a document without building geometric objects."""
    doc = None
    dim = None
    lines: dict = {"simplex": {}, "metric": {}, "gamma": {}, "face": {}}
    vertices, simplices, faces, metric, gammas, label = {}, [], [], {}, {}, ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        toks = _tokens(raw)
        if not toks:
            continue
        key, col = toks[0]
        args = toks[1:]
        if key not in KEYWORDS:
            raise DocumentError(f"unknown record {key!r}", lineno, col)
        if doc is None:
            if key != "polyhedron":
                raise DocumentError("document must start with 'polyhedron <version>'", lineno, col)
            if len(args) != 1:
                raise DocumentError("expected 'polyhedron <version>'", lineno, col)
            version = _int(args[0], lineno)
            if version != VERSION:
                raise DocumentError(f"unsupported version {version}", lineno, args[0][1])
            doc = version
            continue
        if key == "polyhedron":
            raise DocumentError("repeated 'polyhedron' header", lineno, col)
        if key == "label":
            label = raw.split("#", 1)[0][args[0][1] - 1 :].strip() if args else ""
            continue
        if key == "dim":
            if dim is not None:
                raise DocumentError("repeated 'dim' record", lineno, col)
            if len(args) != 1:
                raise DocumentError("expected 'dim <n>'", lineno, col)
            dim = _int(args[0], lineno)
            if dim != 2:
                raise DocumentError(f"only dim 2 is supported, got {dim}", lineno, args[0][1])
            continue
        if dim is None:
            raise DocumentError(f"'{key}' before 'dim'", lineno, col)
        n = dim
        if key == "vertex":
            if len(args) != n + 1:
                raise DocumentError(f"expected 'vertex <id>' and {n} coordinates", lineno, col)
            v = _int(args[0], lineno)
            if v in vertices:
                raise DocumentError(f"duplicate vertex {v}", lineno, args[0][1])
            vertices[v] = tuple(_float(a, lineno) for a in args[1:])
        elif key in ("simplex", "face"):
            ok = len(args) == n + 1 if key == "simplex" else 1 <= len(args) <= n
            if not ok:
                want = f"{n + 1} vertex ids" if key == "simplex" else f"1 to {n} vertex ids"
                raise DocumentError(f"expected {want}", lineno, col)
            ids = tuple(_int(a, lineno) for a in args)
            for a, v in zip(args, ids):
                if v not in vertices:
                    raise DocumentError(f"unknown vertex {v}", lineno, a[1])
            if len(set(ids)) != len(ids):
                raise DocumentError(f"{key} {ids} repeats a vertex", lineno, col)
            s = tuple(sorted(ids))
            if s in lines[key]:
                raise DocumentError(f"duplicate {key} {s}", lineno, col)
            lines[key][s] = lineno
            (simplices if key == "simplex" else faces).append(s)
        elif key == "metric":
            if len(args) != 2 * n + 4:
                raise DocumentError("expected 'metric <simplex> <i> <j> <exponents> <coef>'", lineno, col)
            s = tuple(sorted(_int(a, lineno) for a in args[: n + 1]))
            if s not in lines["simplex"]:
                raise DocumentError(f"metric for unknown simplex {s}", lineno, args[0][1])
            i, j = (_int(a, lineno) for a in args[n + 1 : n + 3])
            for a, v in zip(args[n + 1 : n + 3], (i, j)):
                if not 0 <= v < n:
                    raise DocumentError(f"metric index {v} outside [0, {n})", lineno, a[1])
            mi = tuple(_int(a, lineno) for a in args[n + 3 : 2 * n + 3])
            for a, e in zip(args[n + 3 :], mi):
                if e < 0:
                    raise DocumentError(f"negative exponent {e}", lineno, a[1])
            coef = _float(args[-1], lineno)
            entry = (min(i, j), max(i, j), mi)
            table = metric.setdefault(s, {})
            table[entry] = table.get(entry, 0.0) + coef
            lines["metric"].setdefault(s, lineno)
        elif key == "gamma":
            if len(args) not in (n + 1, n + 3):
                raise DocumentError("expected 'gamma <name> <facet vertices> [<s0> <s1>]'", lineno, col)
            name = args[0][0]
            if name in gammas:
                raise DocumentError(f"duplicate gamma {name!r}", lineno, args[0][1])
            ids = tuple(_int(a, lineno) for a in args[1 : n + 1])
            interval = (0.0, 1.0)
            if len(args) == n + 3:
                interval = (_float(args[n + 1], lineno), _float(args[n + 2], lineno))
                if not 0.0 <= interval[0] < interval[1] <= 1.0:
                    raise DocumentError(f"gamma interval {interval} is not inside [0, 1]", lineno, args[n + 1][1])
            gammas[name] = Gamma(ids, interval)
            lines["gamma"][name] = (lineno, args[1][1])
    if doc is None:
        raise DocumentError("empty document", 1, 1)
    if dim is None:
        raise DocumentError("missing 'dim' record", 1, 1)
    if not simplices:
        raise DocumentError("document has no simplices", 1, 1)
    return PolyhedronDocument(dim, vertices, simplices, faces, metric, gammas, label, doc, lines)


@dataclass(frozen=True)
class Check:
    """One named structural check with its outcome and a short detail."""

    name: str
    passed: bool
    detail: str = ""


def structural_checks(c: SimplicialComplex) -> list[Check]:
    """Homogeneity, manifold facets and (n-1)-chainability of ``c``."""
    homog, offenders = check_dimensional_homogeneity(c)
    out = [
        Check(
            "dimensionally homogeneous",
            homog,
            "every simplex is a face of an n-simplex" if homog else
            "not dimensionally homogeneous: " + ", ".join(str(s) for s in offenders),
        )
    ]
    bad = [f for f in c.facets if len(c.cofaces[f]) > 2]
    out.append(
        Check(
            "manifold facets",
            not bad,
            "every (n-1)-simplex has at most 2 cofaces" if not bad else
            "non-manifold facets: " + ", ".join(f"{f} ({len(c.cofaces[f])} cofaces)" for f in bad),
        )
    )
    chain = check_chainability(c)
    out.append(
        Check(
            "(n-1)-chainable",
            chain,
            "n-simplices connected through (n-1)-faces" if chain else "not (n-1)-chainable",
        )
    )
    return out


class Polyhedron(NamedTuple):
    complex: SimplicialComplex
    metric: PiecewiseMetric
    subsets: dict
    checks: list
    document: PolyhedronDocument

    @property
    def valid(self) -> bool:
        return all(ch.passed for ch in self.checks)


def build_polyhedron(doc: PolyhedronDocument) -> Polyhedron:
    """Geometric objects of a document, with positioned semantic errors."""
    lines = doc.lines or {"simplex": {}, "metric": {}, "gamma": {}, "face": {}}
    try:
        c = build_complex(doc.dim, doc.simplices, doc.vertices, doc.faces)
    except ComplexError as exc:
        where = next((ln for s, ln in lines["simplex"].items() if str(s) in str(exc)), 1)
        raise DocumentError(str(exc), where) from None
    pieces = []
    for t in c.top:
        table = doc.metric.get(t)
        entries = _identity_entries(doc.dim) if table is None else table
        try:
            pieces.append(PolyMetric.from_entries(doc.dim, [(i, j, mi, v) for (i, j, mi), v in sorted(entries.items())]))
        except MetricError as exc:
            raise DocumentError(str(exc), lines["metric"].get(t, lines["simplex"].get(t, 1))) from None
    m = PiecewiseMetric(c, tuple(pieces))
    try:
        m.validate()
    except MetricError as exc:
        bad = next((t for t in c.top if str(t) in str(exc)), None)
        raise DocumentError(str(exc), lines["metric"].get(bad, lines["simplex"].get(bad, 1))) from None
    subsets = {}
    for name, g in doc.gammas.items():
        ln, col = lines["gamma"].get(name, (1, 1))
        key = tuple(sorted(g.facet))
        if key not in c.cofaces:
            raise DocumentError(f"gamma {name!r}: {g.facet} is not an (n-1)-simplex", ln, col)
        if len(c.cofaces[key]) != 1:
            raise DocumentError(f"gamma {name!r}: facet {g.facet} is not in the boundary", ln, col)
        subsets[name] = g
    return Polyhedron(c, m, subsets, structural_checks(c), doc)


def parse_polyhedron(text: str) -> Polyhedron:
    """Parse and validate a document.

    Returns
    -------
    Polyhedron
        ``(complex, metric, subsets, checks, document)``; ``checks`` holds the
        structural verdicts, which are reported rather than raised.

    Raises
    ------
    DocumentError
        On syntax errors, unknown vertices, degenerate simplices, a metric that
        is not positive definite or an invalid observation set.
    """
    return build_polyhedron(read_document(text))


def load_polyhedron(path) -> Polyhedron:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return parse_polyhedron(text)
    except DocumentError as exc:
        raise DocumentError(exc.message, exc.line, exc.column, str(path)) from None


def canonical(text: str) -> str:
    return read_document(text).emit()
