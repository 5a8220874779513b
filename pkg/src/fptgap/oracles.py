"""Exhaustive ground-truth solvers.

Every solver enumerates its whole search space (after refusing if that space
exceeds ``budget``) and breaks ties towards the lexicographically smallest
witness.  The 2-CSP solvers enumerate assignments to a vertex cover of the
constraint graph and optimise the remaining, mutually independent variables
one at a time; ``brute_force=True`` enumerates every assignment instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, product
from typing import Any, Sequence, Union

import numpy as np

from .errors import BudgetExceeded, ParameterError
from .instances import (
    ColoredSetSystem,
    MaxCoverInstance,
    MetricInstance,
    SetSystem,
    ValuedTwoCsp,
    WeightedSetSystem,
    WeightedTwoCsp,
    check_assignment,
)

DEFAULT_BUDGET = 2**24

AnySetSystem = Union[SetSystem, ColoredSetSystem]


@dataclass(frozen=True)
class SolveResult:
    value: Any  # Fraction for fractions/values, int for k-median cost
    witness: tuple

    def to_dict(self) -> dict:
        v = self.value
        value = [v.numerator, v.denominator] if isinstance(v, Fraction) else v
        return {"value": value, "witness": list(self.witness)}


# --------------------------------------------------------------------------
# k-MaxCoverage

def _plain(ss: AnySetSystem) -> SetSystem:
    return ss.base if isinstance(ss, ColoredSetSystem) else ss


def union_mask(masks: Sequence[int], indices: Sequence[int]) -> int:
    m = 0
    for i in indices:
        m |= masks[i]
    return m


def coverage_count(ss: AnySetSystem, indices: Sequence[int]) -> int:
    """Number of universe elements covered by the chosen sets."""
    return union_mask(_plain(ss).masks(), indices).bit_count()


def coverage_fraction(ss: AnySetSystem, indices: Sequence[int]) -> Fraction:
    m = ss.universe_size
    if m == 0:
        return Fraction(1)
    return Fraction(coverage_count(ss, indices), m)


def coverage_weight(wss: WeightedSetSystem, indices: Sequence[int]) -> int:
    covered = union_mask(_plain(wss.base).masks(), indices)
    return sum(w for e, w in enumerate(wss.element_weight) if covered >> e & 1)


def _candidates(ss: AnySetSystem, k: int | None):
    """Ordered candidate iterator and its size, colored or not."""
    if isinstance(ss, ColoredSetSystem):
        if k is not None and k != ss.k:
            raise ParameterError(f"colored instance has {ss.k} colors, got k={k}")
        classes = ss.color_classes()
        if any(not c for c in classes):
            raise ParameterError("empty color class")
        return product(*classes), math.prod(len(c) for c in classes), ss.k
    if k is None or not 1 <= k <= ss.n_sets:
        raise ParameterError(f"k={k} out of range [1,{ss.n_sets}]")
    return combinations(range(ss.n_sets), k), math.comb(ss.n_sets, k), k


def opt_kmaxcov(ss: AnySetSystem, k: int | None = None, budget: int = DEFAULT_BUDGET) -> SolveResult:
    """Exact optimum coverage fraction over k-subsets (or one set per color)."""
    cands, size, k = _candidates(ss, k)
    if size > budget:
        raise BudgetExceeded("candidate solutions", size, budget)
    masks = _plain(ss).masks()
    best, best_w = -1, None
    for combo in cands:
        c = union_mask(masks, combo).bit_count()
        if c > best:
            best, best_w = c, combo
    m = ss.universe_size
    value = Fraction(1) if m == 0 else Fraction(best, m)
    return SolveResult(value, tuple(best_w))


def greedy_kmaxcov(ss: AnySetSystem, k: int | None = None) -> SolveResult:
    """Max-marginal greedy; for colored input each color is used once."""
    colored = isinstance(ss, ColoredSetSystem)
    if colored:
        if k is not None and k != ss.k:
            raise ParameterError(f"colored instance has {ss.k} colors, got k={k}")
        k = ss.k
    elif k is None or not 1 <= k <= ss.n_sets:
        raise ParameterError(f"k={k} out of range [1,{ss.n_sets}]")
    masks = _plain(ss).masks()
    covered, chosen, used_colors = 0, [], set()
    for _ in range(k):
        best_gain, best_i = -1, None
        for i, m in enumerate(masks):
            if i in chosen or (colored and ss.color_of[i] in used_colors):
                continue
            gain = (m & ~covered).bit_count()
            if gain > best_gain:
                best_gain, best_i = gain, i
        if best_i is None:
            break
        chosen.append(best_i)
        covered |= masks[best_i]
        if colored:
            used_colors.add(ss.color_of[best_i])
    if colored:
        witness = tuple(sorted(chosen, key=lambda i: ss.color_of[i]))
    else:
        witness = tuple(sorted(chosen))
    m = ss.universe_size
    value = Fraction(1) if m == 0 else Fraction(covered.bit_count(), m)
    return SolveResult(value, witness)


# --------------------------------------------------------------------------
# 2-CSP

def _choose_cover(sizes: Sequence[int], pairs: Sequence[tuple[int, int]]) -> list[int]:
    """Vertex cover minimising the product of alphabet sizes."""
    n = len(sizes)
    logs = [math.log(max(s, 1)) for s in sizes]
    if n <= 14:
        best, best_cost = None, math.inf
        for mask in range(1 << n):
            if all(mask >> u & 1 or mask >> v & 1 for u, v in pairs):
                cost = sum(logs[i] for i in range(n) if mask >> i & 1)
                if cost < best_cost - 1e-12:
                    best, best_cost = mask, cost
        return [i for i in range(n) if best >> i & 1]
    cover: set[int] = set()
    open_pairs = [p for p in pairs if p[0] != p[1]]
    while open_pairs:
        deg = [0] * n
        for u, v in open_pairs:
            deg[u] += 1
            deg[v] += 1
        pick = max(range(n), key=lambda i: (deg[i] / (logs[i] + 1e-9), -i))
        cover.add(pick)
        open_pairs = [(u, v) for u, v in open_pairs if u != pick and v != pick]
    return sorted(cover)


def _as_table(t) -> np.ndarray:
    arr = np.array(t, dtype=object)
    ints = [int(x) for x in arr.flat]
    if not ints or max(abs(x) for x in ints) < 2**40:
        return np.array(ints, dtype=np.int64).reshape(arr.shape)
    return np.array(ints, dtype=object).reshape(arr.shape)


def maximize_edge_sum(
    sizes: Sequence[int],
    edges: Sequence[tuple[int, int, Any]],
    budget: int = DEFAULT_BUDGET,
    *,
    cover: Sequence[int] | None = None,
    brute_force: bool = False,
) -> tuple[int, tuple[int, ...]]:
    """Maximise sum_e table_e[a_u, a_v] over assignments of integer tables.

    Returns the optimum and the lexicographically smallest optimal assignment.
    """
    n = len(sizes)
    tables = [(u, v, _as_table(t)) for u, v, t in edges]
    if brute_force:
        cover = list(range(n))
    elif cover is None:
        cover = _choose_cover(sizes, [(u, v) for u, v, _ in tables])
    cover = sorted(cover)
    in_cover = set(cover)
    for u, v, _ in tables:
        if u not in in_cover and v not in in_cover:
            raise ParameterError(f"cover misses edge ({u},{v})")
    space = math.prod(sizes[c] for c in cover)
    if space > budget:
        raise BudgetExceeded("enumerated assignments", space, budget)

    inner = [(u, v, t) for u, v, t in tables if u in in_cover and v in in_cover]
    free = [x for x in range(n) if x not in in_cover]
    # rows[x]: list of (cover var, table oriented [cover symbol, x symbol])
    rows: dict[int, list] = {x: [] for x in free}
    for u, v, t in tables:
        if u in in_cover and v not in in_cover:
            rows[v].append((u, t))
        elif v in in_cover and u not in in_cover:
            rows[u].append((v, t.T))

    best, best_assign = None, None
    assign = [0] * n
    for combo in product(*(range(sizes[c]) for c in cover)):
        for c, a in zip(cover, combo):
            assign[c] = a
        total = 0
        for u, v, t in inner:
            total += t[assign[u], assign[v]]
        for x in free:
            if not rows[x]:
                assign[x] = 0
                continue
            vec = rows[x][0][1][assign[rows[x][0][0]]]
            for c, t in rows[x][1:]:
                vec = vec + t[assign[c]]
            sym = int(np.argmax(vec))
            assign[x] = sym
            total += vec[sym]
        total = int(total)
        cand = tuple(assign)
        if best is None or total > best or (total == best and cand < best_assign):
            best, best_assign = total, cand
    return best, best_assign


def _vcsp_int_tables(vcsp: ValuedTwoCsp) -> tuple[int, list]:
    den = 1
    for e in vcsp.edges:
        for row in e.table:
            for x in row:
                den = math.lcm(den, x.denominator)
    return den, [(e.u, e.v, [[int(x * den) for x in row] for row in e.table]) for e in vcsp.edges]


def vcsp_assignment_value(vcsp: ValuedTwoCsp, assignment: Sequence[int]) -> Fraction:
    check_assignment(vcsp.alphabet_sizes, assignment)
    total = sum((e.table[assignment[e.u]][assignment[e.v]] for e in vcsp.edges), Fraction(0))
    return total / len(vcsp.edges)


def csp_assignment_value(csp: WeightedTwoCsp, assignment: Sequence[int]) -> Fraction:
    check_assignment(csp.alphabet_sizes, assignment)
    sat = sum(e.weight for e in csp.edges if (assignment[e.u], assignment[e.v]) in e.allowed)
    return Fraction(sat, sum(e.weight for e in csp.edges))


def val_vcsp(vcsp: ValuedTwoCsp, budget: int = DEFAULT_BUDGET, *, brute_force: bool = False) -> SolveResult:
    """Exact value: best mean edge value over all assignments."""
    if not vcsp.edges:
        raise ParameterError("valued CSP has no edges")
    den, tables = _vcsp_int_tables(vcsp)
    best, witness = maximize_edge_sum(vcsp.alphabet_sizes, tables, budget, brute_force=brute_force)
    return SolveResult(Fraction(best, den * len(vcsp.edges)), witness)


def val_csp(csp: WeightedTwoCsp, budget: int = DEFAULT_BUDGET, *, brute_force: bool = False) -> SolveResult:
    """Exact value: best weighted fraction of satisfied constraints."""
    if not csp.edges:
        raise ParameterError("CSP has no edges")
    sizes = csp.alphabet_sizes
    tables = []
    for e in csp.edges:
        t = [[0] * sizes[e.v] for _ in range(sizes[e.u])]
        for a, b in e.allowed:
            t[a][b] = e.weight
        tables.append((e.u, e.v, t))
    best, witness = maximize_edge_sum(sizes, tables, budget, brute_force=brute_force)
    return SolveResult(Fraction(best, sum(e.weight for e in csp.edges)), witness)


# --------------------------------------------------------------------------
# k-median / k-means

def kmedian_cost(metric: MetricInstance, F: Sequence[int], squared: bool = False) -> int:
    """Sum over clients of the distance (squared if asked) to the nearest facility in F."""
    if len(F) == 0:
        raise ParameterError("facility set is empty")
    d = metric.as_array()
    near = d[np.ix_(list(metric.clients), list(F))].min(axis=1)
    if squared:
        near = near * near
    return int(near.sum())


def opt_kmedian(
    metric: MetricInstance, k: int, squared: bool = False, budget: int = DEFAULT_BUDGET
) -> SolveResult:
    facs = sorted(metric.facilities)
    if not 1 <= k <= len(facs):
        raise ParameterError(f"k={k} out of range [1,{len(facs)}]")
    size = math.comb(len(facs), k)
    if size > budget:
        raise BudgetExceeded("facility subsets", size, budget)
    d = metric.as_array()[np.ix_(list(metric.clients), facs)]
    if squared:
        d = d * d
    best, best_w = None, None
    for combo in combinations(range(len(facs)), k):
        cost = int(d[:, combo].min(axis=1).sum()) if len(metric.clients) else 0
        if best is None or cost < best:
            best, best_w = cost, tuple(facs[i] for i in combo)
    return SolveResult(best, best_w)


# --------------------------------------------------------------------------
# MaxCover

def _right_index(inst: MaxCoverInstance) -> tuple[dict[int, int], list[int]]:
    pos, group_masks = {}, []
    bit = 0
    for g in inst.right_groups:
        gm = 0
        for w in g:
            pos[w] = bit
            gm |= 1 << bit
            bit += 1
        group_masks.append(gm)
    return pos, group_masks


def covered_groups(inst: MaxCoverInstance, labeling: Sequence[int]) -> list[int]:
    """Right groups holding a joint neighbour of every labelled vertex."""
    pos, group_masks = _right_index(inst)
    joint = (1 << len(pos)) - 1
    for v in labeling:
        nb = 0
        for a, w in inst.edges:
            if a == v:
                nb |= 1 << pos[w]
        joint &= nb
    return [i for i, gm in enumerate(group_masks) if joint & gm]


def maxcover_value(inst: MaxCoverInstance, budget: int = DEFAULT_BUDGET) -> SolveResult:
    """Best fraction of right groups covered by a labeling (one vertex per left group)."""
    if any(not g for g in inst.left_groups):
        raise ParameterError("empty left group")
    if not inst.right_groups:
        raise ParameterError("no right groups")
    groups = [sorted(g) for g in inst.left_groups]
    size = math.prod(len(g) for g in groups)
    if size > budget:
        raise BudgetExceeded("labelings", size, budget)
    pos, group_masks = _right_index(inst)
    nb: dict[int, int] = {}
    for a, w in inst.edges:
        nb[a] = nb.get(a, 0) | 1 << pos[w]
    full = (1 << len(pos)) - 1
    best, best_w = -1, None
    for lab in product(*groups):
        joint = full
        for v in lab:
            joint &= nb.get(v, 0)
        c = sum(1 for gm in group_masks if joint & gm)
        if c > best:
            best, best_w = c, lab
    return SolveResult(Fraction(best, len(group_masks)), tuple(best_w))


# --------------------------------------------------------------------------

def chernoff_bound(zeta: Fraction, q: Fraction, m: int) -> float:
    """exp(-zeta^2 q m / 3); annotation only."""
    zeta, q = Fraction(zeta), Fraction(q)
    if not 0 < zeta < 1:
        raise ParameterError(f"zeta={zeta} outside (0,1)")
    if not 0 <= q <= 1:
        raise ParameterError(f"q={q} outside [0,1]")
    return math.exp(-float(zeta * zeta * q * m) / 3)
