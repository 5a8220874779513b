"""MaxCover -> k-MaxCoverage (Feige-style).

Universe elements are triples ``(t, i, f)`` with ``t < T``, ``i`` a right
group and ``f: W_i -> {0..k-1}``; sets are triples ``(t, j, v)`` with ``v`` in
left group ``j``.  ``(t, i, f)`` lies in ``S_(t, j, v)`` iff some ``w`` in
``W_i`` has ``f(w) = j`` and ``(v, w)`` is an edge.

All indices are 0-based.  A function ``f`` is stored as base-k digits over
``W_i`` in sorted vertex order (lowest digit first).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Callable, Sequence

from ..errors import BudgetExceeded, ParameterError
from ..instances import MaxCoverInstance, SetSystem

DEFAULT_UNIVERSE_CAP = 10**6


@dataclass(frozen=True)
class ElementCodec:
    T: int
    k: int
    right_groups: tuple[tuple[int, ...], ...]  # each sorted

    @property
    def per_group(self) -> list[int]:
        return [self.k ** len(g) for g in self.right_groups]

    @property
    def block(self) -> int:
        return sum(self.per_group)

    @property
    def size(self) -> int:
        return self.T * self.block

    def encode(self, t: int, i: int, f: dict[int, int]) -> int:
        g = self.right_groups[i]
        code = sum(f[w] * self.k**pos for pos, w in enumerate(g))
        return t * self.block + sum(self.per_group[:i]) + code

    def decode(self, element: int) -> tuple[int, int, dict[int, int]]:
        if not 0 <= element < self.size:
            raise ParameterError(f"element {element} out of range")
        t, rest = divmod(element, self.block)
        for i, width in enumerate(self.per_group):
            if rest < width:
                f = {}
                for w in self.right_groups[i]:
                    rest, f[w] = divmod(rest, self.k)
                return t, i, f
            rest -= width
        raise AssertionError("unreachable")


@dataclass(frozen=True)
class SetCodec:
    T: int
    left_groups: tuple[tuple[int, ...], ...]  # each sorted

    @property
    def block(self) -> int:
        return sum(len(g) for g in self.left_groups)

    @property
    def size(self) -> int:
        return self.T * self.block

    def encode(self, t: int, j: int, v: int) -> int:
        offset = sum(len(g) for g in self.left_groups[:j])
        return t * self.block + offset + self.left_groups[j].index(v)

    def decode(self, index: int) -> tuple[int, int, int]:
        if not 0 <= index < self.size:
            raise ParameterError(f"set index {index} out of range")
        t, rest = divmod(index, self.block)
        for j, g in enumerate(self.left_groups):
            if rest < len(g):
                return t, j, g[rest]
            rest -= len(g)
        raise AssertionError("unreachable")


@dataclass(frozen=True)
class MaxCovReductionArtifact:
    ss: SetSystem
    T: int
    k: int
    ell: int
    element_codec: ElementCodec
    set_codec: SetCodec

    @property
    def solution_size(self) -> int:
        return self.T * self.k

    def canonical_solution(self, labeling: Sequence[int]) -> list[int]:
        """The T*k sets S_(t, j, v_j) for a labeling (v_0..v_{k-1})."""
        return [self.set_codec.encode(t, j, v) for t in range(self.T) for j, v in enumerate(labeling)]

    def codec_dict(self) -> dict:
        return {
            "T": self.T,
            "k": self.k,
            "right_groups": [list(g) for g in self.element_codec.right_groups],
            "left_groups": [list(g) for g in self.set_codec.left_groups],
            "elements": [
                [e, t, i, [[w, j] for w, j in sorted(f.items())]]
                for e in range(self.ss.universe_size)
                for t, i, f in [self.element_codec.decode(e)]
            ],
            "sets": [[s, *self.set_codec.decode(s)] for s in range(self.ss.n_sets)],
        }


def maxcover_to_kmaxcov(
    inst: MaxCoverInstance, T: int, cap: int = DEFAULT_UNIVERSE_CAP
) -> MaxCovReductionArtifact:
    k, ell = inst.k, inst.ell
    if k < 1 or ell < 1:
        raise ParameterError(f"need k >= 1 and l >= 1, got k={k}, l={ell}")
    if T < 1:
        raise ParameterError(f"T={T} must be positive")
    right = tuple(tuple(sorted(g)) for g in inst.right_groups)
    left = tuple(tuple(sorted(g)) for g in inst.left_groups)
    ecodec = ElementCodec(T, k, right)
    if ecodec.size > cap:
        raise BudgetExceeded("universe T*sum_i k^|W_i|", ecodec.size, cap)
    scodec = SetCodec(T, left)
    nbrs: dict[int, set[int]] = {}
    for v, w in inst.edges:
        nbrs.setdefault(v, set()).add(w)
    # members of one t-slice; other slices are shifted copies
    slice_sets: list[list[int]] = []
    for j, g in enumerate(left):
        for v in g:
            members = []
            for i, wg in enumerate(right):
                hit = [pos for pos, w in enumerate(wg) if w in nbrs.get(v, ())]
                base = sum(ecodec.per_group[:i])
                for code in range(ecodec.per_group[i]):
                    digits = code
                    ok = False
                    for pos in range(len(wg)):
                        digits, dgt = divmod(digits, k)
                        if dgt == j and pos in hit:
                            ok = True
                    if ok:
                        members.append(base + code)
            slice_sets.append(members)
    sets = [
        [t * ecodec.block + e for e in members]
        for t in range(T)
        for members in slice_sets
    ]
    return MaxCovReductionArtifact(SetSystem(ecodec.size, sets), T, k, ell, ecodec, scodec)


def choose_T(k: int, A: int, rho: Callable[[int], int], max_queries: int = 128) -> int:
    """Least T with rho(T*k) >= 2*k^A, by doubling then bisection."""
    target = 2 * k**A
    queries = 0

    def ok(T: int) -> bool:
        nonlocal queries
        queries += 1
        if queries > max_queries:
            raise BudgetExceeded("rho queries", queries, max_queries)
        return rho(T * k) >= target

    hi = 1
    while not ok(hi):
        hi *= 2
    lo = hi // 2  # rho(lo*k) < target, or lo == 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def soundness_deficiency(artifact: MaxCovReductionArtifact, chosen_sets: Sequence[int]) -> int:
    """Number of universe elements left uncovered by exactly T*k chosen sets."""
    if len(chosen_sets) != artifact.solution_size:
        raise ParameterError(f"need {artifact.solution_size} sets, got {len(chosen_sets)}")
    masks = artifact.ss.masks()
    covered = 0
    for s in chosen_sets:
        covered |= masks[s]
    return artifact.ss.universe_size - covered.bit_count()


def min_deficiency(artifact: MaxCovReductionArtifact, budget: int = 10**6) -> tuple[int, tuple[int, ...]]:
    """Exhaustive minimum of soundness_deficiency over all T*k-subsets."""
    n, r = artifact.ss.n_sets, artifact.solution_size
    size = math.comb(n, r)
    if size > budget:
        raise BudgetExceeded("set choices C(|S|, T*k)", size, budget)
    masks = artifact.ss.masks()
    m = artifact.ss.universe_size
    best, best_w = None, None
    for combo in combinations(range(n), r):
        cov = 0
        for s in combo:
            cov |= masks[s]
        unc = m - cov.bit_count()
        if best is None or unc < best:
            best, best_w = unc, combo
    return best, best_w


def deficiency_bound(artifact: MaxCovReductionArtifact) -> Fraction:
    """l*T/2, the uncovered count guaranteed when MaxCover <= 1/2."""
    return Fraction(artifact.ell * artifact.T, 2)


def max_group_size(inst: MaxCoverInstance) -> int:
    return max(len(g) for g in inst.right_groups)
