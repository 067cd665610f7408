"""Exact rational probabilities for measures carried by finitely many types.

When the measure is a finite rational mixture of invariant types, every
sample path is a label sequence, the path's probability is the product of
label weights, and every quantifier-free event is decided by the label
semantics.  This module enumerates paths and sums exact Fractions; no
floating point enters.

Limit unions (does the running point eventually satisfy a template?) are
computed by the recurrence rule: every positive-weight label occurs
infinitely often in the tail almost surely, so the union over tail
positions holds exactly when some positive-weight label's tail verdict is
"always".  This requires the semantics to be prefix-determined: the
relation of a later point to the prefix depends only on the prefix's
labels and the new label, which holds for all bundled scenarios by
construction and is spot-checked here.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Iterable, Sequence

from .kernels import Kernel, LabelSemantics, rational_str
from .model import And, QfDiagram, QfFormula, free_vars, substitute
from .rng import Stream

DEFAULT_PATH_BUDGET = 2_000_000

#: variable index standing for the running point x_l in limit-union templates
RUNNING_VAR = 0


class BudgetExceeded(Exception):
    pass


class TailUnknown(Exception):
    """The tail evaluator could not decide the template; refusing to guess."""


class AtlasError(Exception):
    pass


@dataclass(frozen=True)
class PathPrefix:
    """One element of the sampler's support, truncated at depth n."""

    labels: tuple[str, ...]
    prob: Fraction

    def diagram(self, atlas: "InvariantTypeAtlas") -> QfDiagram:
        return atlas.semantics.build_diagram(self.labels)


class InvariantTypeAtlas:
    """Finite set of symbolic types with rational weights and extension rules."""

    def __init__(self, semantics: LabelSemantics, scenario: str = "custom",
                 budget: int = DEFAULT_PATH_BUDGET):
        self.semantics = semantics
        self.scenario = scenario
        self.budget = budget
        self.labels = semantics.labels
        self.weights = semantics.weights
        # integer numerators over a common denominator keep path-probability
        # products in integer arithmetic
        denoms = [w.denominator for w in self.weights.values()]
        self._den = reduce(_lcm, denoms, 1)
        self._num = {lab: int(w * self._den) for lab, w in self.weights.items()}

    @classmethod
    def from_kernel(cls, kernel: Kernel, budget: int = DEFAULT_PATH_BUDGET) -> "InvariantTypeAtlas":
        sem = kernel.semantics
        if sem is None:
            raise AtlasError(
                f"scenario {kernel.scenario!r} is not backed by finitely many types; "
                f"use the Monte Carlo engine")
        return cls(sem, kernel.scenario, budget)

    def descriptor(self) -> dict:
        return {
            "rule": self.scenario,
            "labels": list(self.labels),
            "weights": {lab: rational_str(w) for lab, w in self.weights.items()},
        }

    # -- enumeration

    def check_budget(self, depth: int) -> None:
        if depth > 0 and len(self.labels) ** depth > self.budget:
            raise BudgetExceeded(
                f"{len(self.labels)}^{depth} paths exceed the budget of {self.budget}")

    def paths(self, depth: int) -> Iterable[tuple[tuple[str, ...], int]]:
        """(labels, probability numerator) per path; denominator is den**depth."""
        self.check_budget(depth)
        num = self._num
        for labels in itertools.product(self.labels, repeat=depth):
            w = 1
            for lab in labels:
                w *= num[lab]
            yield labels, w

    def path_denominator(self, depth: int) -> int:
        return self._den ** depth

    def eval_on_path(self, f: QfFormula, labels: Sequence[str]) -> bool:
        sem = self.semantics
        return _eval(f, labels, sem)


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


def _eval(f, labels, sem) -> bool:
    from .model import Atom, Eq, Not, And as AndF, Or as OrF
    if isinstance(f, Atom):
        return sem.eval_atom(f.rel, f.args, labels)
    if isinstance(f, Eq):
        return sem.eval_eq(f.left, f.right, labels)
    if isinstance(f, Not):
        return not _eval(f.inner, labels, sem)
    if isinstance(f, AndF):
        return all(_eval(p, labels, sem) for p in f.parts)
    if isinstance(f, OrF):
        return any(_eval(p, labels, sem) for p in f.parts)
    raise AtlasError(f"unknown formula node {f!r}")


# ---------------------------------------------------------------------------
# operations


def support_paths(atlas: InvariantTypeAtlas, depth: int) -> list[PathPrefix]:
    """All |labels|^depth paths; probabilities sum to exactly 1."""
    if depth < 1:
        raise AtlasError("depth must be >= 1")
    den = atlas.path_denominator(depth)
    return [PathPrefix(labels, Fraction(w, den)) for labels, w in atlas.paths(depth)]


def exact_event_prob(atlas: InvariantTypeAtlas, f: QfFormula) -> Fraction:
    """Exact probability of a quantifier-free event on increasing indices."""
    fv = free_vars(f)
    if RUNNING_VAR in fv:
        raise AtlasError("formula contains the running variable; use exact_limit_union")
    depth = max(fv, default=0)
    if depth == 0:
        return Fraction(1) if atlas.eval_on_path(f, ()) else Fraction(0)
    total = 0
    for labels, w in atlas.paths(depth):
        if atlas.eval_on_path(f, labels):
            total += w
    return Fraction(total, atlas.path_denominator(depth))


def tail_verdict(atlas: InvariantTypeAtlas, theta: QfFormula,
                 prefix: Sequence[str], label: str) -> bool:
    """Does theta(fixed tuple, x_l) hold for any later point realizing label?

    Valid because the bundled semantics are prefix-determined: a later
    point's relations to the prefix depend only on the prefix labels and
    its own label, so evaluating at the very next position answers for
    every later position.
    """
    n = len(prefix)
    inst = substitute(theta, {RUNNING_VAR: n + 1})
    path = tuple(prefix) + (label,)
    try:
        return atlas.eval_on_path(inst, path)
    except NotImplementedError as e:  # pragma: no cover
        raise TailUnknown(f"semantics cannot decide the template: {e}")


def exact_limit_union(atlas: InvariantTypeAtlas, theta: QfFormula,
                      spot_check: int = 16) -> Fraction:
    """Exact probability that some tail point satisfies the template.

    The template's fixed tuple uses indices 1..n; the running point is the
    RUNNING_VAR index.  The union ranges over positions l > n.  Before
    trusting the tail verdicts, the engine spot-checks prefix determinacy
    on randomly extended paths and refuses rather than guess on a mismatch.
    """
    fv = free_vars(theta)
    if RUNNING_VAR not in fv:
        raise AtlasError("template must mention the running variable")
    if spot_check:
        bad = spot_check_prefix_determinacy(atlas, theta, trials=spot_check)
        if bad:  # pragma: no cover - bundled semantics are prefix-determined
            raise TailUnknown(
                f"tail verdicts are not prefix-determined for this template: {bad[0]}")
    depth = max(fv - {RUNNING_VAR}, default=0)
    if depth == 0:
        # no fixed tuple: the event depends only on the tail label
        hit = any(tail_verdict(atlas, theta, (), q) for q in atlas.labels)
        return Fraction(1) if hit else Fraction(0)
    total = 0
    for labels, w in atlas.paths(depth):
        if any(tail_verdict(atlas, theta, labels, q) for q in atlas.labels):
            total += w
    return Fraction(total, atlas.path_denominator(depth))


def limit_union_horizon(atlas: InvariantTypeAtlas, theta: QfFormula, horizon: int) -> Fraction:
    """Probability of the finite union over positions n < l <= horizon.

    Diagnostic companion to exact_limit_union: nondecreasing in the
    horizon and never above the limit value.
    """
    fv = free_vars(theta)
    depth = max(fv - {RUNNING_VAR}, default=0)
    if horizon <= depth:
        return Fraction(0)
    parts = [substitute(theta, {RUNNING_VAR: l}) for l in range(depth + 1, horizon + 1)]
    total = 0
    for labels, w in atlas.paths(horizon):
        if any(atlas.eval_on_path(p, labels) for p in parts):
            total += w
    return Fraction(total, atlas.path_denominator(horizon))


def product_law_check(atlas: InvariantTypeAtlas, f: QfFormula,
                      g: QfFormula) -> tuple[Fraction, Fraction]:
    """(P[f and g], P[f]*P[g]) for events on disjoint variables; caller asserts equality."""
    if free_vars(f) & free_vars(g):
        raise AtlasError(
            f"variable sets overlap: {sorted(free_vars(f) & free_vars(g))}")
    lhs = exact_event_prob(atlas, And((f, g)))
    rhs = exact_event_prob(atlas, f) * exact_event_prob(atlas, g)
    return lhs, rhs


def spot_check_prefix_determinacy(atlas: InvariantTypeAtlas, theta: QfFormula,
                                  trials: int = 64, seed: int = 0,
                                  max_gap: int = 4) -> list[dict]:
    """Compare tail verdicts against randomly extended paths; returns mismatches."""
    fv = free_vars(theta)
    depth = max(fv - {RUNNING_VAR}, default=0)
    rng = Stream(seed, 0, salt=0xD37)
    labels = atlas.labels
    mismatches = []
    for _ in range(trials):
        prefix = tuple(labels[rng.next_u64() % len(labels)] for _ in range(depth))
        gap = rng.next_u64() % (max_gap + 1)
        inter = tuple(labels[rng.next_u64() % len(labels)] for _ in range(gap))
        q = labels[rng.next_u64() % len(labels)]
        verdict = tail_verdict(atlas, theta, prefix, q)
        pos = depth + gap + 1
        inst = substitute(theta, {RUNNING_VAR: pos})
        actual = atlas.eval_on_path(inst, prefix + inter + (q,))
        if actual != verdict:
            mismatches.append({"prefix": prefix, "intermediates": inter,
                               "label": q, "verdict": verdict, "actual": actual})
    return mismatches
