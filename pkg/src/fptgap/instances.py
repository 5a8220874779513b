"""Data model for the five problem families: set systems (plain, colored,
weighted), valued and weighted 2-CSPs, finite metrics and MaxCover graphs.

All instances are frozen dataclasses holding tuples, so they are hashable and
safe to share.  Constructors coerce lists to tuples but never validate; call
:func:`validate` (or go through :func:`deserialize`) for that.

Fractional quantities are :class:`fractions.Fraction` throughout.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Sequence, Union

import numpy as np

log = logging.getLogger(__name__)

Rational = Fraction

FORMAT_VERSION = 1


class ParseError(ValueError):
    """Malformed instance document.  ``where`` is a line:col or a JSON path."""

    def __init__(self, message: str, where: str):
        super().__init__(f"{message} (at {where})")
        self.where = where


class ValidationError(ValueError):
    def __init__(self, violations: Sequence[str]):
        shown = "; ".join(violations[:10])
        more = f" (+{len(violations) - 10} more)" if len(violations) > 10 else ""
        super().__init__(f"instance violates invariants: {shown}{more}")
        self.violations = list(violations)


def _tuple2(rows) -> tuple:
    return tuple(tuple(r) for r in rows)


@dataclass(frozen=True)
class SetSystem:
    universe_size: int
    sets: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "sets", _tuple2(self.sets))

    @property
    def n_sets(self) -> int:
        return len(self.sets)

    def masks(self) -> list[int]:
        out = []
        for s in self.sets:
            m = 0
            for e in s:
                m |= 1 << e
            out.append(m)
        return out


@dataclass(frozen=True)
class ColoredSetSystem:
    base: SetSystem
    color_of: tuple[int, ...]
    k: int

    def __post_init__(self):
        object.__setattr__(self, "color_of", tuple(self.color_of))

    @property
    def universe_size(self) -> int:
        return self.base.universe_size

    @property
    def sets(self):
        return self.base.sets

    @property
    def n_sets(self) -> int:
        return self.base.n_sets

    def color_classes(self) -> list[list[int]]:
        classes: list[list[int]] = [[] for _ in range(self.k)]
        for idx, c in enumerate(self.color_of):
            if 0 <= c < self.k:
                classes[c].append(idx)
        return classes


@dataclass(frozen=True)
class WeightedSetSystem:
    base: Union[SetSystem, ColoredSetSystem]
    element_weight: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "element_weight", tuple(self.element_weight))

    @property
    def universe_size(self) -> int:
        return self.base.universe_size

    @property
    def sets(self):
        return self.base.sets


@dataclass(frozen=True)
class VcspEdge:
    u: int
    v: int
    table: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "table", tuple(tuple(Fraction(x) for x in row) for row in self.table)
        )


@dataclass(frozen=True)
class ValuedTwoCsp:
    variables: tuple[tuple[str, int], ...]
    edges: tuple[VcspEdge, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple((str(n), int(s)) for n, s in self.variables))
        object.__setattr__(
            self, "edges", tuple(e if isinstance(e, VcspEdge) else VcspEdge(*e) for e in self.edges)
        )

    @property
    def alphabet_sizes(self) -> list[int]:
        return [s for _, s in self.variables]


@dataclass(frozen=True)
class CspEdge:
    u: int
    v: int
    weight: int
    allowed: frozenset[tuple[int, int]]

    def __post_init__(self):
        object.__setattr__(self, "allowed", frozenset((int(a), int(b)) for a, b in self.allowed))


@dataclass(frozen=True)
class WeightedTwoCsp:
    variables: tuple[tuple[str, int], ...]
    edges: tuple[CspEdge, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple((str(n), int(s)) for n, s in self.variables))
        object.__setattr__(
            self, "edges", tuple(e if isinstance(e, CspEdge) else CspEdge(*e) for e in self.edges)
        )

    @property
    def alphabet_sizes(self) -> list[int]:
        return [s for _, s in self.variables]


@dataclass(frozen=True)
class MetricInstance:
    n: int
    dist: tuple[tuple[int, ...], ...]
    clients: tuple[int, ...]
    facilities: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "dist", tuple(tuple(int(x) for x in row) for row in self.dist))
        object.__setattr__(self, "clients", tuple(self.clients))
        object.__setattr__(self, "facilities", tuple(self.facilities))

    def d(self, x: int, y: int) -> int:
        return self.dist[x][y]

    def as_array(self) -> np.ndarray:
        """Read-only int64 view of ``dist``, built once."""
        arr = self.__dict__.get("_array")
        if arr is None:
            arr = np.array(self.dist, dtype=np.int64).reshape(self.n, self.n)
            arr.setflags(write=False)
            self.__dict__["_array"] = arr
        return arr


@dataclass(frozen=True)
class MaxCoverInstance:
    left_groups: tuple[tuple[int, ...], ...]
    right_groups: tuple[tuple[int, ...], ...]
    edges: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "left_groups", _tuple2(self.left_groups))
        object.__setattr__(self, "right_groups", _tuple2(self.right_groups))
        object.__setattr__(self, "edges", frozenset((int(a), int(b)) for a, b in self.edges))

    @property
    def k(self) -> int:
        return len(self.left_groups)

    @property
    def ell(self) -> int:
        return len(self.right_groups)


Instance = Union[
    SetSystem, ColoredSetSystem, WeightedSetSystem, ValuedTwoCsp, WeightedTwoCsp,
    MetricInstance, MaxCoverInstance,
]


# --------------------------------------------------------------------------
# validation

@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def _check_set_system(ss: SetSystem, out: list[str], prefix: str = "") -> None:
    if ss.universe_size < 0:
        out.append(f"{prefix}universe_size {ss.universe_size} < 0")
    for i, s in enumerate(ss.sets):
        for pos, e in enumerate(s):
            if not 0 <= e < ss.universe_size:
                out.append(f"{prefix}set {i}: element {e} out of range [0,{ss.universe_size})")
            if pos and s[pos - 1] >= e:
                out.append(f"{prefix}set {i}: not strictly sorted at position {pos}")


def _check_colored(cs: ColoredSetSystem, out: list[str], prefix: str = "") -> None:
    _check_set_system(cs.base, out, prefix)
    if cs.k < 1:
        out.append(f"{prefix}k={cs.k} must be positive")
    if len(cs.color_of) != cs.base.n_sets:
        out.append(f"{prefix}color_of has {len(cs.color_of)} entries for {cs.base.n_sets} sets")
    for i, c in enumerate(cs.color_of):
        if not 0 <= c < cs.k:
            out.append(f"{prefix}set {i}: color {c} out of range [0,{cs.k})")
    used = set(cs.color_of)
    for c in range(max(cs.k, 0)):
        if c not in used:
            out.append(f"{prefix}color class {c} is empty")


def _check_alphabets(variables, out: list[str]) -> None:
    for idx, (_, size) in enumerate(variables):
        if size < 1:
            out.append(f"variable {idx}: alphabet size {size} < 1")


def _check_endpoints(idx: int, u: int, v: int, nvars: int, out: list[str]) -> bool:
    good = True
    for w in (u, v):
        if not 0 <= w < nvars:
            out.append(f"edge {idx}: endpoint {w} is not a variable")
            good = False
    if u == v:
        out.append(f"edge {idx}: self-loop on variable {u}")
        good = False
    return good


def _check_vcsp(p: ValuedTwoCsp, out: list[str]) -> None:
    _check_alphabets(p.variables, out)
    seen: set[tuple[int, int]] = set()
    nv = len(p.variables)
    for idx, e in enumerate(p.edges):
        if (e.u, e.v) in seen:
            out.append(f"edge {idx}: duplicate edge ({e.u},{e.v})")
        seen.add((e.u, e.v))
        if not _check_endpoints(idx, e.u, e.v, nv, out):
            continue
        su, sv = p.variables[e.u][1], p.variables[e.v][1]
        if len(e.table) != su or any(len(row) != sv for row in e.table):
            out.append(f"edge {idx}: table shape does not match {su}x{sv}")
            continue
        for a, row in enumerate(e.table):
            for b, x in enumerate(row):
                if not 0 <= x <= 1:
                    out.append(f"edge {idx}: entry ({a},{b})={x} outside [0,1]")


def _check_csp(p: WeightedTwoCsp, out: list[str]) -> None:
    _check_alphabets(p.variables, out)
    seen: set[tuple[int, int]] = set()
    nv = len(p.variables)
    for idx, e in enumerate(p.edges):
        if (e.u, e.v) in seen:
            out.append(f"edge {idx}: duplicate edge ({e.u},{e.v})")
        seen.add((e.u, e.v))
        if e.weight < 1:
            out.append(f"edge {idx}: weight {e.weight} < 1")
        if not _check_endpoints(idx, e.u, e.v, nv, out):
            continue
        su, sv = p.variables[e.u][1], p.variables[e.v][1]
        for a, b in sorted(e.allowed):
            if not (0 <= a < su and 0 <= b < sv):
                out.append(f"edge {idx}: allowed pair ({a},{b}) outside {su}x{sv}")


def _check_metric(mi: MetricInstance, out: list[str]) -> None:
    n = mi.n
    if len(mi.dist) != n or any(len(r) != n for r in mi.dist):
        out.append(f"dist is not {n}x{n}")
        return
    d = mi.as_array()
    for x, y in zip(*np.nonzero(d < 0)):
        out.append(f"negative distance d({x},{y})={d[x, y]}")
    for x in np.nonzero(np.diag(d) != 0)[0]:
        out.append(f"nonzero diagonal d({x},{x})={d[x, x]}")
    for x, y in zip(*np.nonzero(d != d.T)):
        if x < y:
            out.append(f"asymmetric d({x},{y})={d[x, y]} != d({y},{x})={d[y, x]}")
    for y in range(n):
        # via[x, z] = d(x,y) + d(y,z)
        via = d[:, y][:, None] + d[y, :][None, :]
        for x, z in zip(*np.nonzero(d > via)):
            out.append(f"triangle ({x},{y},{z}): {d[x, z]} > {d[x, y]}+{d[y, z]}")
    for name, idxs in (("clients", mi.clients), ("facilities", mi.facilities)):
        if list(idxs) != sorted(set(idxs)):
            out.append(f"{name} not strictly sorted")
        for x in idxs:
            if not 0 <= x < n:
                out.append(f"{name}: index {x} out of range [0,{n})")


def _check_maxcover(mc: MaxCoverInstance, out: list[str]) -> None:
    side_of: dict[tuple[str, int], int] = {}
    for side, groups in (("left", mc.left_groups), ("right", mc.right_groups)):
        for g, members in enumerate(groups):
            for v in members:
                if (side, v) in side_of:
                    out.append(f"{side} vertex {v} in groups {side_of[(side, v)]} and {g}")
                side_of[(side, v)] = g
    for a, b in sorted(mc.edges):
        if ("left", a) not in side_of:
            out.append(f"edge ({a},{b}): left endpoint {a} in no left group")
        if ("right", b) not in side_of:
            out.append(f"edge ({a},{b}): right endpoint {b} in no right group")


def validate(instance: Instance) -> ValidationReport:
    """Check every type invariant; violations come back as data, never raised."""
    out: list[str] = []
    if isinstance(instance, SetSystem):
        _check_set_system(instance, out)
    elif isinstance(instance, ColoredSetSystem):
        _check_colored(instance, out)
    elif isinstance(instance, WeightedSetSystem):
        if isinstance(instance.base, ColoredSetSystem):
            _check_colored(instance.base, out, "base: ")
        else:
            _check_set_system(instance.base, out, "base: ")
        if len(instance.element_weight) != instance.universe_size:
            out.append(
                f"{len(instance.element_weight)} weights for universe of size {instance.universe_size}"
            )
        for e, w in enumerate(instance.element_weight):
            if w < 1:
                out.append(f"element {e}: weight {w} < 1")
    elif isinstance(instance, ValuedTwoCsp):
        _check_vcsp(instance, out)
    elif isinstance(instance, WeightedTwoCsp):
        _check_csp(instance, out)
    elif isinstance(instance, MetricInstance):
        _check_metric(instance, out)
    elif isinstance(instance, MaxCoverInstance):
        _check_maxcover(instance, out)
    else:
        out.append(f"unknown instance type {type(instance).__name__}")
    return ValidationReport(out)


def check_assignment(sizes: Sequence[int], assignment: Sequence[int]) -> None:
    if len(assignment) != len(sizes):
        raise ValueError(f"assignment has {len(assignment)} entries for {len(sizes)} variables")
    for v, (a, s) in enumerate(zip(assignment, sizes)):
        if not 0 <= a < s:
            raise ValueError(f"variable {v}: symbol {a} outside alphabet of size {s}")


def aspect_ratio(metric: MetricInstance) -> Fraction:
    """Largest distance over smallest positive distance."""
    positive = [x for row in metric.dist for x in row if x > 0]
    if not positive:
        raise ValueError("degenerate metric: no positive distance")
    return Fraction(max(positive), min(positive))


# --------------------------------------------------------------------------
# serialization

KINDS = {
    SetSystem: "set_system",
    ColoredSetSystem: "colored_set_system",
    WeightedSetSystem: "weighted_set_system",
    ValuedTwoCsp: "vcsp",
    WeightedTwoCsp: "csp",
    MetricInstance: "metric",
    MaxCoverInstance: "maxcover",
}


def _frac_out(x: Fraction) -> list[int]:
    return [x.numerator, x.denominator]


def to_dict(instance: Instance, *, top: bool = True) -> dict[str, Any]:
    kind = KINDS[type(instance)]
    doc: dict[str, Any] = {"kind": kind}
    if top:
        doc["version"] = FORMAT_VERSION
    if isinstance(instance, SetSystem):
        doc.update(universe_size=instance.universe_size, sets=[list(s) for s in instance.sets])
    elif isinstance(instance, ColoredSetSystem):
        doc.update(base=to_dict(instance.base, top=False), color_of=list(instance.color_of), k=instance.k)
    elif isinstance(instance, WeightedSetSystem):
        doc.update(base=to_dict(instance.base, top=False), element_weight=list(instance.element_weight))
    elif isinstance(instance, ValuedTwoCsp):
        doc["variables"] = [[n, s] for n, s in instance.variables]
        doc["edges"] = [
            [e.u, e.v, [[_frac_out(x) for x in row] for row in e.table]] for e in instance.edges
        ]
    elif isinstance(instance, WeightedTwoCsp):
        doc["variables"] = [[n, s] for n, s in instance.variables]
        doc["edges"] = [
            [e.u, e.v, e.weight, [list(p) for p in sorted(e.allowed)]] for e in instance.edges
        ]
    elif isinstance(instance, MetricInstance):
        doc.update(
            n=instance.n,
            dist=[list(r) for r in instance.dist],
            clients=list(instance.clients),
            facilities=list(instance.facilities),
        )
    elif isinstance(instance, MaxCoverInstance):
        doc.update(
            left_groups=[list(g) for g in instance.left_groups],
            right_groups=[list(g) for g in instance.right_groups],
            edges=[list(p) for p in sorted(instance.edges)],
        )
    return doc


def serialize(instance: Instance) -> str:
    """Canonical JSON text: sorted keys, compact separators, trailing newline."""
    return json.dumps(to_dict(instance), sort_keys=True, separators=(",", ":")) + "\n"


class _Reader:
    def __init__(self, notes: list[str] | None):
        self.notes = notes if notes is not None else []

    def get(self, doc: Any, key: str, path: str) -> Any:
        if not isinstance(doc, dict):
            raise ParseError("expected an object", path)
        if key not in doc:
            raise ParseError(f"missing field {key!r}", path)
        return doc[key]

    def int_(self, x: Any, path: str) -> int:
        if isinstance(x, bool) or not isinstance(x, int):
            raise ParseError(f"expected integer, got {x!r}", path)
        return x

    def list_(self, x: Any, path: str) -> list:
        if not isinstance(x, list):
            raise ParseError(f"expected array, got {type(x).__name__}", path)
        return x

    def ints(self, x: Any, path: str) -> list[int]:
        return [self.int_(y, f"{path}[{i}]") for i, y in enumerate(self.list_(x, path))]

    def frac(self, x: Any, path: str) -> Fraction:
        pair = self.list_(x, path)
        if len(pair) != 2:
            raise ParseError("rational must be [numerator, denominator]", path)
        num, den = self.int_(pair[0], path + "[0]"), self.int_(pair[1], path + "[1]")
        if den <= 0:
            raise ParseError(f"denominator {den} must be positive", path)
        q = Fraction(num, den)
        if (q.numerator, q.denominator) != (num, den):
            note = f"normalized {num}/{den} to {q} at {path}"
            self.notes.append(note)
            log.info(note)
        return q

    def variables(self, x: Any, path: str) -> list[tuple[str, int]]:
        out = []
        for i, item in enumerate(self.list_(x, path)):
            p = f"{path}[{i}]"
            item = self.list_(item, p)
            if len(item) != 2 or not isinstance(item[0], str):
                raise ParseError("variable must be [name, alphabet_size]", p)
            out.append((item[0], self.int_(item[1], p + "[1]")))
        return out

    def instance(self, doc: Any, path: str, top: bool) -> Instance:
        kind = self.get(doc, "kind", path)
        if top:
            version = self.get(doc, "version", path)
            if version != FORMAT_VERSION:
                raise ParseError(f"unsupported version {version!r}", path + ".version")
        g = lambda key: self.get(doc, key, path)  # noqa: E731
        p = lambda key: f"{path}.{key}"  # noqa: E731
        if kind == "set_system":
            sets = [self.ints(s, f"{p('sets')}[{i}]") for i, s in enumerate(self.list_(g("sets"), p("sets")))]
            return SetSystem(self.int_(g("universe_size"), p("universe_size")), sets)
        if kind == "colored_set_system":
            base = self.instance(g("base"), p("base"), False)
            if not isinstance(base, SetSystem):
                raise ParseError("colored base must be a set_system", p("base"))
            return ColoredSetSystem(base, self.ints(g("color_of"), p("color_of")), self.int_(g("k"), p("k")))
        if kind == "weighted_set_system":
            base = self.instance(g("base"), p("base"), False)
            if not isinstance(base, (SetSystem, ColoredSetSystem)):
                raise ParseError("weighted base must be a (colored) set system", p("base"))
            return WeightedSetSystem(base, self.ints(g("element_weight"), p("element_weight")))
        if kind == "vcsp":
            edges = []
            for i, e in enumerate(self.list_(g("edges"), p("edges"))):
                ep = f"{p('edges')}[{i}]"
                e = self.list_(e, ep)
                if len(e) != 3:
                    raise ParseError("vcsp edge must be [u, v, table]", ep)
                rows = self.list_(e[2], ep + "[2]")
                table = [
                    [self.frac(x, f"{ep}[2][{a}][{b}]") for b, x in enumerate(self.list_(row, f"{ep}[2][{a}]"))]
                    for a, row in enumerate(rows)
                ]
                edges.append(VcspEdge(self.int_(e[0], ep + "[0]"), self.int_(e[1], ep + "[1]"), table))
            return ValuedTwoCsp(self.variables(g("variables"), p("variables")), edges)
        if kind == "csp":
            edges = []
            for i, e in enumerate(self.list_(g("edges"), p("edges"))):
                ep = f"{p('edges')}[{i}]"
                e = self.list_(e, ep)
                if len(e) != 4:
                    raise ParseError("csp edge must be [u, v, weight, allowed]", ep)
                allowed = []
                for j, pair in enumerate(self.list_(e[3], ep + "[3]")):
                    pair = self.ints(pair, f"{ep}[3][{j}]")
                    if len(pair) != 2:
                        raise ParseError("allowed pair must have two entries", f"{ep}[3][{j}]")
                    allowed.append(tuple(pair))
                edges.append(CspEdge(
                    self.int_(e[0], ep + "[0]"), self.int_(e[1], ep + "[1]"),
                    self.int_(e[2], ep + "[2]"), frozenset(allowed),
                ))
            return WeightedTwoCsp(self.variables(g("variables"), p("variables")), edges)
        if kind == "metric":
            dist = [self.ints(r, f"{p('dist')}[{i}]") for i, r in enumerate(self.list_(g("dist"), p("dist")))]
            return MetricInstance(
                self.int_(g("n"), p("n")), dist,
                self.ints(g("clients"), p("clients")), self.ints(g("facilities"), p("facilities")),
            )
        if kind == "maxcover":
            lg = [self.ints(x, f"{p('left_groups')}[{i}]") for i, x in enumerate(self.list_(g("left_groups"), p("left_groups")))]
            rg = [self.ints(x, f"{p('right_groups')}[{i}]") for i, x in enumerate(self.list_(g("right_groups"), p("right_groups")))]
            edges = []
            for i, pair in enumerate(self.list_(g("edges"), p("edges"))):
                pair = self.ints(pair, f"{p('edges')}[{i}]")
                if len(pair) != 2:
                    raise ParseError("edge must be [left, right]", f"{p('edges')}[{i}]")
                edges.append(tuple(pair))
            return MaxCoverInstance(lg, rg, frozenset(edges))
        raise ParseError(f"unknown kind {kind!r}", path + ".kind")


def from_dict(doc: Any, notes: list[str] | None = None, *, check: bool = True) -> Instance:
    inst = _Reader(notes).instance(doc, "$", True)
    if check:
        report = validate(inst)
        if not report.ok:
            raise ValidationError(report.violations)
    return inst


def deserialize(text: str, notes: list[str] | None = None) -> Instance:
    """Parse a document; normalization notes (e.g. 6/4 -> 3/2) land in ``notes``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    return from_dict(doc, notes)


def load(path, notes: list[str] | None = None) -> Instance:
    with open(path) as fh:
        return deserialize(fh.read(), notes)


def dump(instance: Instance, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize(instance))


def sets_from_lists(universe_size: int, sets: Iterable[Iterable[int]]) -> SetSystem:
    """Convenience: build a SetSystem, sorting and deduplicating each set."""
    return SetSystem(universe_size, [sorted(set(s)) for s in sets])
