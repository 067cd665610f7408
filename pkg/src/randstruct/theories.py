"""Decision procedures for dividing-line witness events on realized tuples.

The witness formulas ask for parameters in the ambient model (order
witnesses, shattering witnesses, chains).  Quantifier elimination makes
them decidable from the sampled diagram alone in the bundled theories:

dense linear order   order witnesses exist iff the permuted tuple is
                     strictly increasing; half-lines shatter at most one
                     point; chains of half-lines mirror the tuple order
random graph         any pattern over distinct vertices is realized, and
                     no definable family of neighborhoods forms a strict
                     chain (the theory is simple)
triangle-free graph  patterns are realized exactly over independent sets
                     of distinct vertices
finite structure     brute-force witness search over the structure

The generic fallback searches for witnesses among already-sampled points
only: it is sound for "true" and otherwise answers indeterminate, since
quantifiers range over the ambient model, not the sample.
"""

from __future__ import annotations

import itertools
from typing import Optional, Sequence

from .kernels import FiniteStructure, Kernel, LabelSemantics, SampleState
from .model import QfDiagram

KINDS = ("O", "I", "L")

#: chain orientation for L-witnesses: "shrinking" means the definable sets
#: strictly decrease along the tuple, which is the orientation under which
#: an increasing order sample carries chains of half-lines.
DEFAULT_CHAIN_DIRECTION = "shrinking"

FORMULA_THEORIES = {
    "dlo_lt": "dlo",
    "rg_edge": "random_graph",
    "henson_edge": "henson_empty",
    "equiv_E": "finite",
}


class TheoryError(Exception):
    pass


# ---------------------------------------------------------------------------
# realized-tuple views: one code path for sampled states and atlas paths


class StateView:
    """Adapter exposing a sampled prefix to the theory evaluators."""

    def __init__(self, state: SampleState):
        self.state = state
        self.diagram = state.diagram

    @property
    def n(self) -> int:
        return self.diagram.n

    def distinct(self, i: int, j: int) -> bool:
        return not self.diagram.same_point(i, j)

    def rel(self, name: str, args: Sequence[int]) -> bool:
        return self.diagram.holds(name, args)

    def element(self, i: int):
        return self.state.aux[i - 1]


class DiagramView:
    """Same adapter over a bare diagram (no auxiliary payloads)."""

    def __init__(self, diagram: QfDiagram, elements: Optional[Sequence] = None):
        self.diagram = diagram
        self._elements = elements

    @property
    def n(self) -> int:
        return self.diagram.n

    def distinct(self, i, j):
        return not self.diagram.same_point(i, j)

    def rel(self, name, args):
        return self.diagram.holds(name, args)

    def element(self, i):
        if self._elements is None:
            raise TheoryError("view carries no element payloads")
        return self._elements[i - 1]


class PathView:
    """Adapter over an atlas label path; avoids materializing diagrams."""

    def __init__(self, semantics: LabelSemantics, labels: Sequence[str]):
        self.sem = semantics
        self.labels = labels

    @property
    def n(self) -> int:
        return len(self.labels)

    def distinct(self, i, j):
        return not self.sem.eval_eq(i, j, self.labels)

    def rel(self, name, args):
        return self.sem.eval_atom(name, args, self.labels)

    def element(self, i):
        return self.labels[i - 1]


def _permuted(indices: Sequence[int], sigma: Optional[Sequence[int]]) -> list[int]:
    if sigma is None:
        return list(indices)
    n = len(indices)
    if sorted(sigma) != list(range(1, n + 1)):
        raise TheoryError(f"sigma {sigma} is not a permutation of 1..{n}")
    return [indices[s - 1] for s in sigma]


# ---------------------------------------------------------------------------
# evaluators


class TheoryEvaluator:
    theory_id: str
    formula_id: str
    complete = True

    def eval_witness(self, view, kind: str, indices: Sequence[int],
                     sigma: Optional[Sequence[int]] = None) -> Optional[bool]:
        if kind not in KINDS:
            raise TheoryError(f"unknown witness kind {kind!r}")
        pts = _permuted(indices, sigma)
        return getattr(self, f"_eval_{kind}")(view, pts)


class DloTheory(TheoryEvaluator):
    """Witnesses for x < y over a dense linear order without endpoints."""

    theory_id = "dlo"
    formula_id = "dlo_lt"

    def __init__(self, chain_direction: str = DEFAULT_CHAIN_DIRECTION):
        if chain_direction not in ("shrinking", "growing"):
            raise TheoryError(f"unknown chain direction {chain_direction!r}")
        self.chain_direction = chain_direction

    def _increasing(self, view, pts) -> bool:
        return all(view.rel("<", (pts[k], pts[k + 1])) for k in range(len(pts) - 1))

    def _eval_O(self, view, pts):
        # order witnesses can be squeezed between consecutive points exactly
        # when the permuted tuple ascends
        return self._increasing(view, pts)

    def _eval_I(self, view, pts):
        # half-lines have VC dimension 1: no two points can be shattered
        return len(pts) <= 1

    def _eval_L(self, view, pts):
        if self.chain_direction == "shrinking":
            return self._increasing(view, pts)
        return self._increasing(view, list(reversed(pts)))


class RandomGraphTheory(TheoryEvaluator):
    """Witnesses for the edge relation over the countable random graph."""

    theory_id = "random_graph"
    formula_id = "rg_edge"

    def _distinct(self, view, pts) -> bool:
        return all(view.distinct(a, b) for a, b in itertools.combinations(pts, 2))

    def _eval_O(self, view, pts):
        return self._distinct(view, pts)

    def _eval_I(self, view, pts):
        return self._distinct(view, pts)

    def _eval_L(self, view, pts):
        # simple theory: no instance family forms a strict chain
        return False


class HensonTheory(TheoryEvaluator):
    """Witnesses for the edge relation over the triangle-free random graph."""

    theory_id = "henson_empty"
    formula_id = "henson_edge"

    def _independent(self, view, pts) -> bool:
        for a, b in itertools.combinations(pts, 2):
            if not view.distinct(a, b) or view.rel("R", (a, b)):
                return False
        return True

    def _eval_O(self, view, pts):
        # a witness adjacent to several tuple points closes no triangle
        # exactly when those points are pairwise non-adjacent
        return self._independent(view, pts)

    def _eval_I(self, view, pts):
        return self._independent(view, pts)

    def _eval_L(self, view, pts):
        return False


class FiniteStructureTheory(TheoryEvaluator):
    """Brute-force witness search over a fixed finite structure."""

    theory_id = "finite"

    def __init__(self, structure: FiniteStructure, rel: str = "E",
                 chain_direction: str = DEFAULT_CHAIN_DIRECTION):
        self.structure = structure
        self.rel = rel
        self.formula_id = "equiv_E" if rel == "E" else rel
        self.chain_direction = chain_direction

    def _phi(self, e, u) -> bool:
        return self.structure.holds(self.rel, (e, u))

    def _elements(self, view, pts):
        return [view.element(p) for p in pts]

    def _eval_O(self, view, pts):
        elems = self._elements(view, pts)
        n = len(elems)
        # the j-th witness only constrains column j, so search columns independently
        for j in range(n):
            ok = any(
                all(self._phi(elems[i], u) == (i <= j) for i in range(n))
                for u in self.structure.universe)
            if not ok:
                return False
        return True

    def _eval_I(self, view, pts):
        elems = self._elements(view, pts)
        n = len(elems)
        for mask in range(1 << n):
            ok = any(
                all(self._phi(elems[i], u) == bool(mask >> i & 1) for i in range(n))
                for u in self.structure.universe)
            if not ok:
                return False
        return True

    def _eval_L(self, view, pts):
        elems = self._elements(view, pts)
        if self.chain_direction == "shrinking":
            elems = list(reversed(elems))
        sets = [frozenset(u for u in self.structure.universe if self._phi(e, u))
                for e in elems]
        return all(a < b for a, b in zip(sets, sets[1:]))


class GenericFallback(TheoryEvaluator):
    """Witness search among sampled points only: sound for true, else indeterminate."""

    theory_id = "generic"
    complete = False

    def __init__(self, rel: str):
        self.rel = rel
        self.formula_id = rel

    def _candidates(self, view):
        return range(1, view.n + 1)

    def _eval_O(self, view, pts):
        n = len(pts)
        for j in range(n):
            if not any(
                all(view.rel(self.rel, (pts[i], y)) == (i <= j) for i in range(n))
                for y in self._candidates(view)):
                return None
        return True

    def _eval_I(self, view, pts):
        n = len(pts)
        for mask in range(1 << n):
            if not any(
                all(view.rel(self.rel, (pts[i], y)) == bool(mask >> i & 1)
                    for i in range(n))
                for y in self._candidates(view)):
                return None
        return True

    def _eval_L(self, view, pts):
        # the chain condition quantifies over the whole ambient model, so an
        # in-sample search can never soundly confirm it
        return None


def make_theory(theory_id: str, structure: Optional[FiniteStructure] = None,
                chain_direction: str = DEFAULT_CHAIN_DIRECTION) -> TheoryEvaluator:
    if theory_id == "dlo":
        return DloTheory(chain_direction)
    if theory_id == "random_graph":
        return RandomGraphTheory()
    if theory_id == "henson_empty":
        return HensonTheory()
    if theory_id == "finite":
        if structure is None:
            raise TheoryError("finite-structure theory needs the structure")
        return FiniteStructureTheory(structure, chain_direction=chain_direction)
    raise TheoryError(f"unknown theory {theory_id!r}")


def theory_for_kernel(kernel: Kernel,
                      chain_direction: str = DEFAULT_CHAIN_DIRECTION
                      ) -> Optional[TheoryEvaluator]:
    if kernel.theory_id is None:
        return None
    return make_theory(kernel.theory_id, getattr(kernel, "structure", None),
                       chain_direction)


def check_pairing(theory: TheoryEvaluator, formula_id: str) -> None:
    expected = FORMULA_THEORIES.get(formula_id)
    if expected is None and theory.theory_id != "generic":
        raise TheoryError(f"unknown formula id {formula_id!r}")
    if expected is not None and theory.theory_id not in (expected, "generic"):
        raise TheoryError(
            f"formula {formula_id!r} belongs to theory {expected!r}, "
            f"got {theory.theory_id!r}")
