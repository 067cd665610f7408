"""VC dimension of permutation sets and formula-shattering probes.

A set of m-permutations has VC dimension k when some k positions realize
all k! relative-order patterns across the set.  Witness-permutation sets
tie this to formulas: collect the permutations under which a sampled
tuple carries an order witness, and a large such set forces a large
shattered point set for the formula's instance family.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .kernels import SampleState
from .theories import StateView, TheoryEvaluator

SEARCH_BUDGET = 5_000_000
MAX_GROUND = 10
MAX_SHATTER_CANDIDATES = 6
MAX_TABLE_GROUND = 4


class PermVcError(Exception):
    pass


class BudgetExceeded(PermVcError):
    pass


# ---------------------------------------------------------------------------
# permutation sets


@dataclass(frozen=True)
class PermSet:
    m: int
    perms: frozenset[tuple[int, ...]]

    def __post_init__(self):
        for p in self.perms:
            if sorted(p) != list(range(1, self.m + 1)):
                raise PermVcError(f"{p} is not a permutation of 1..{self.m}")

    @classmethod
    def make(cls, m: int, perms) -> "PermSet":
        return cls(m, frozenset(tuple(p) for p in perms))

    @classmethod
    def full(cls, m: int) -> "PermSet":
        return cls.make(m, itertools.permutations(range(1, m + 1)))

    def to_json(self) -> dict:
        return {"m": self.m, "perms": sorted(list(p) for p in self.perms)}

    @classmethod
    def from_json(cls, obj) -> "PermSet":
        return cls.make(obj["m"], obj["perms"])


@dataclass(frozen=True)
class PatternWitness:
    positions: tuple[int, ...]
    patterns: frozenset[tuple[int, ...]]

    def to_json(self) -> dict:
        return {"positions": list(self.positions),
                "patterns": sorted(list(p) for p in self.patterns)}


def _pattern(perm: Sequence[int], positions: Sequence[int]) -> tuple[int, ...]:
    values = [perm[j - 1] for j in positions]
    order = sorted(range(len(values)), key=values.__getitem__)
    rank = [0] * len(values)
    for r, idx in enumerate(order, start=1):
        rank[idx] = r
    return tuple(rank)


def perm_vc_dim(a: PermSet) -> tuple[int, Optional[PatternWitness]]:
    """Largest k such that some k positions realize all k! patterns.

    The empty set has dimension 0 by convention; any nonempty set realizes
    the single 1-pattern, so singletons have dimension 1.
    """
    if not a.perms:
        return 0, None
    if a.m > MAX_GROUND:
        raise BudgetExceeded(f"ground size {a.m} exceeds the exhaustive limit {MAX_GROUND}")
    best = (1, PatternWitness((1,), frozenset({(1,)})))
    for k in range(a.m, 1, -1):
        target = math.factorial(k)
        if len(a.perms) < target:
            continue
        work = len(a.perms) * math.comb(a.m, k) * k
        if work > SEARCH_BUDGET:
            raise BudgetExceeded(f"k={k} scan needs ~{work} steps")
        for positions in itertools.combinations(range(1, a.m + 1), k):
            patterns = {_pattern(p, positions) for p in a.perms}
            if len(patterns) == target:
                return k, PatternWitness(positions, frozenset(patterns))
    return best


def witness_perm_set(theory: TheoryEvaluator, formula_id: str, state: SampleState,
                     indices: Sequence[int], kind: str = "O") -> PermSet:
    """All sigma under which the permuted tuple carries the witness formula."""
    m = len(indices)
    if m > 8:
        raise PermVcError(f"witness sets are enumerated up to m=8, got {m}")
    view = StateView(state)
    hits = []
    for sigma in itertools.permutations(range(1, m + 1)):
        v = theory.eval_witness(view, kind, list(indices), sigma)
        if v is None:
            raise PermVcError(
                "witness evaluation came back indeterminate; a complete theory "
                "evaluator is required for permutation-set extraction")
        if v:
            hits.append(sigma)
    return PermSet.make(m, hits)


# ---------------------------------------------------------------------------
# shattering


@dataclass
class ShatterResult:
    shattered: tuple[int, ...]
    size: int
    certificates: dict
    incomplete: list[dict]

    def to_json(self) -> dict:
        return {"shattered": list(self.shattered), "size": self.size,
                "certificates": {",".join(map(str, k)): v
                                 for k, v in self.certificates.items()},
                "incomplete": self.incomplete}


def _dlo_witness(view, subset, inside) -> tuple[Optional[bool], Optional[str]]:
    outside = [a for a in subset if a not in inside]
    for a in inside:
        for b in outside:
            if not view.rel("<", (a, b)):
                return False, None
    return True, f"any point separating {{{','.join(map(str, inside))}}} from the rest"


def _graph_witness(view, subset, inside) -> tuple[Optional[bool], Optional[str]]:
    inside = set(inside)
    for y in range(1, view.n + 1):
        if y in subset:
            continue
        if all(view.rel("R", (a, y)) == (a in inside) for a in subset):
            return True, f"sampled point {y}"
    return None, None  # in-sample search is sound only for success


def _henson_witness(view, subset, inside) -> tuple[Optional[bool], Optional[str]]:
    for a, b in itertools.combinations(inside, 2):
        if view.rel("R", (a, b)) or not view.distinct(a, b):
            return False, None
    return True, "triangle-free extension adjacent exactly to the inside set"


def _finite_witness(theory, view, subset, inside) -> tuple[Optional[bool], Optional[str]]:
    inside = set(inside)
    for u in theory.structure.universe:
        if all(theory.structure.holds(theory.rel, (view.element(a), u)) == (a in inside)
               for a in subset):
            return True, f"element {u}"
    return False, None


def formula_shatter_check(theory: TheoryEvaluator, state: SampleState,
                          candidates: Sequence[int], formula_id: str) -> ShatterResult:
    """Largest subset of the candidates shattered by the formula's instances.

    Witnesses are drawn from the theory's decision procedure where one is
    complete (order cuts, triangle-free extensions, finite structures) and
    from the sampled points otherwise; subsets whose search was incomplete
    are flagged rather than declared unshattered.
    """
    if len(candidates) > MAX_SHATTER_CANDIDATES:
        raise PermVcError(
            f"at most {MAX_SHATTER_CANDIDATES} candidates (2^size subset loop)")
    view = StateView(state)
    oracle = {
        "dlo": lambda s, k: _dlo_witness(view, s, k),
        "random_graph": lambda s, k: _graph_witness(view, s, k),
        "henson_empty": lambda s, k: _henson_witness(view, s, k),
        "finite": lambda s, k: _finite_witness(theory, view, s, k),
    }.get(theory.theory_id)
    if oracle is None:
        raise PermVcError(f"no shattering oracle for theory {theory.theory_id!r}")

    incomplete: list[dict] = []
    for size in range(len(candidates), 0, -1):
        for subset in itertools.combinations(candidates, size):
            certs = {}
            ok = True
            unknown = False
            for r in range(size + 1):
                for inside in itertools.combinations(subset, r):
                    found, cert = oracle(subset, inside)
                    if found is None:
                        unknown = True
                        ok = False
                        break
                    if not found:
                        ok = False
                        break
                    certs[inside] = cert
                if not ok:
                    break
            if unknown:
                incomplete.append({"subset": list(subset),
                                   "reason": "witness search exhausted the sample"})
            if ok:
                return ShatterResult(subset, size, certs, incomplete)
    return ShatterResult((), 0, {(): "empty set is shattered trivially"}, incomplete)


# ---------------------------------------------------------------------------
# tiny exact r_k(n) table


def r_table_tiny(k: int, n: int) -> int:
    """Maximum size of a set of n-permutations with VC dimension <= k.

    Exact for n <= 4 by exhausting the ways to exclude one pattern on each
    (k+1)-tuple of positions: a set has dimension <= k exactly when every
    such tuple misses some pattern, and each exclusion assignment yields
    the largest set compatible with it.
    """
    if n > MAX_TABLE_GROUND:
        raise PermVcError(f"r table is exact only for n <= {MAX_TABLE_GROUND}")
    if k < 0:
        raise PermVcError("k must be >= 0")
    if k == 0:
        return 0 if n >= 1 else 1  # any nonempty set realizes the 1-pattern
    if k >= n:
        return math.factorial(n)
    perms = list(itertools.permutations(range(1, n + 1)))
    position_sets = list(itertools.combinations(range(1, n + 1), k + 1))
    patterns = list(itertools.permutations(range(1, k + 2)))
    # pattern of each perm on each position set, precomputed
    table = [[_pattern(p, ps) for ps in position_sets] for p in perms]
    best = 0
    for assignment in itertools.product(patterns, repeat=len(position_sets)):
        count = sum(
            1 for row in table
            if all(row[i] != assignment[i] for i in range(len(position_sets))))
        if count > best:
            best = count
    return best
