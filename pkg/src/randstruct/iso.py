"""Induced-structure analysis: back-and-forth matching between samples,
positive-type catalogs, extension-axiom checking, categoricity axiom
emission, and divergence tests for the negative scenarios.

The back-and-forth follows the smallest-index strategy: alternate sides,
take the smallest unmatched index on the active side, and match it to the
smallest index on the other side realizing the required quantifier-free
extension type over the points matched so far.  Failure is a result, not
an error, and the full trace is returned either way.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .atlas import InvariantTypeAtlas, exact_event_prob
from .kernels import Kernel, QfExtensionType, SampleState
from .mc import Estimate, make_manifest
from .model import (
    And,
    Atom,
    Eq,
    Not,
    QfDiagram,
    QfFormula,
    diagram_of_tuple,
    labeled_iso_eq,
    substitute,
)


class IsoError(Exception):
    pass


class CatalogExplosion(IsoError):
    pass


# ---------------------------------------------------------------------------
# back-and-forth


@dataclass
class BackForthStep:
    direction: str  # "forward" | "backward"
    source: int
    matched: Optional[int]
    reason: Optional[str] = None


@dataclass
class BackForthTrace:
    steps: list[BackForthStep] = field(default_factory=list)
    pairs: list[tuple[int, int]] = field(default_factory=list)  # (source, target)

    def to_json(self) -> list[dict]:
        return [{"direction": s.direction, "source": s.source,
                 "matched": s.matched, "reason": s.reason} for s in self.steps]


class _FastDiagram:
    """Read-only adjacency accessor used in the matching inner loop."""

    __slots__ = ("rep", "unary", "binary", "generic")

    def __init__(self, d: QfDiagram):
        self.rep = d._rep
        self.unary = []
        self.binary = []
        self.generic = d
        for rel in d.signature.relations:
            facts = d._facts[rel.name]
            if rel.arity == 1:
                self.unary.append(facts)
            elif rel.arity == 2:
                self.binary.append((facts, rel.symmetric))
            else:
                raise IsoError("back_forth supports signatures of arity <= 2")

    def profile(self, mapped: Sequence[int], c: int) -> tuple:
        rep = self.rep
        rc = rep[c]
        parts = [tuple((rc,) in facts for facts in self.unary)]
        for facts, symmetric in self.binary:
            if symmetric:
                loop = (rc, rc) in facts
                row = tuple(
                    ((rep[m], rc) if rep[m] <= rc else (rc, rep[m])) in facts
                    for m in mapped)
                parts.append((loop, row))
            else:
                loop = (rc, rc) in facts
                parts.append((loop,
                              tuple((rep[m], rc) in facts for m in mapped),
                              tuple((rc, rep[m]) in facts for m in mapped)))
        parts.append(tuple(rep[m] == rc for m in mapped))
        return tuple(parts)


def back_forth(s1: SampleState, s2: SampleState, depth: int) -> tuple[bool, BackForthTrace]:
    """Try to build a size-`depth` partial isomorphism between two samples."""
    d1, d2 = s1.diagram, s2.diagram
    if d1.signature != d2.signature:
        raise IsoError("samples have different signatures")
    if depth < 1:
        raise IsoError("depth must be >= 1")
    f1, f2 = _FastDiagram(d1), _FastDiagram(d2)
    src_mapped: list[int] = []
    tgt_mapped: list[int] = []
    src_used: set[int] = set()
    tgt_used: set[int] = set()
    trace = BackForthTrace()

    for step in range(depth):
        forward = step % 2 == 0
        if forward:
            active, other = (f1, f2)
            act_mapped, oth_mapped = src_mapped, tgt_mapped
            act_used, oth_used = src_used, tgt_used
            act_n, oth_n = d1.n, d2.n
        else:
            active, other = (f2, f1)
            act_mapped, oth_mapped = tgt_mapped, src_mapped
            act_used, oth_used = tgt_used, src_used
            act_n, oth_n = d2.n, d1.n
        a = next((i for i in range(1, act_n + 1) if i not in act_used), None)
        direction = "forward" if forward else "backward"
        if a is None:
            trace.steps.append(BackForthStep(direction, -1, None, "active side exhausted"))
            return False, trace
        want = active.profile(act_mapped, a)
        found = None
        for b in range(1, oth_n + 1):
            if b in oth_used:
                continue
            if other.profile(oth_mapped, b) == want:
                found = b
                break
        trace.steps.append(BackForthStep(
            direction, a, found,
            None if found is not None else "no point realizes the extension type"))
        if found is None:
            return False, trace
        act_mapped.append(a)
        oth_mapped.append(found)
        act_used.add(a)
        oth_used.add(found)
        trace.pairs.append((a, found) if forward else (found, a))
    return True, trace


def pair_success_rate(kernel: Kernel, prefix: int, depth: int, pairs: int,
                      seed: int) -> Estimate:
    """Back-and-forth success frequency over independent sample pairs."""
    succ = 0
    for p in range(pairs):
        s1 = kernel.initial_state(seed, 2 * p)
        s2 = kernel.initial_state(seed, 2 * p + 1)
        for _ in range(prefix):
            kernel.sample_next(s1)
            kernel.sample_next(s2)
        ok, _ = back_forth(s1, s2, depth)
        succ += ok
    manifest = make_manifest(kernel, seed, pairs, prefix,
                             {"back_forth": {"depth": depth, "prefix": prefix}})
    return Estimate(succ / pairs, pairs, 0, manifest)


# ---------------------------------------------------------------------------
# positive-type catalogs


@dataclass
class CatalogEntry:
    diagram: QfDiagram
    prob: Fraction | float
    fidelity: str  # "exact" | "analytic" | "empirical"

    def to_json(self) -> dict:
        p = self.prob
        prob = f"{p.numerator}/{p.denominator}" if isinstance(p, Fraction) else p
        return {"diagram": self.diagram.to_json(), "prob": prob,
                "fidelity": self.fidelity}


class PositiveTypeCatalog:
    """E_n for n <= n_max: the positive-probability quantifier-free n-types."""

    def __init__(self, n_max: int, fidelity: str):
        self.n_max = n_max
        self.fidelity = fidelity
        self.levels: dict[int, dict] = {n: {} for n in range(1, n_max + 1)}

    def add(self, n: int, entry: CatalogEntry) -> None:
        self.levels[n][entry.diagram.canonical_key()] = entry

    def level(self, n: int) -> list[CatalogEntry]:
        return list(self.levels[n].values())

    def contains(self, n: int, diagram: QfDiagram) -> bool:
        return diagram.canonical_key() in self.levels[n]

    def level_mass(self, n: int):
        return sum(e.prob for e in self.levels[n].values())

    def restriction_coherent(self) -> bool:
        for n in range(1, self.n_max):
            for e in self.level(n + 1):
                r = diagram_of_tuple(e.diagram, list(range(1, n + 1)))
                if not self.contains(n, r):
                    return False
        return True

    def to_json(self) -> dict:
        return {"n_max": self.n_max, "fidelity": self.fidelity,
                "levels": {n: [e.to_json() for e in self.level(n)]
                           for n in range(1, self.n_max + 1)}}


MAX_CATALOG_ENTRIES = 4096


def _coin_flip_level(kernel, n: int) -> list[CatalogEntry]:
    t = kernel.t
    pairs = list(itertools.combinations(range(1, n + 1), 2))
    if 2 ** len(pairs) > MAX_CATALOG_ENTRIES:
        raise CatalogExplosion(f"2^{len(pairs)} graph types at level {n}")
    entries = []
    for mask in range(1 << len(pairs)):
        d = QfDiagram(kernel.signature)
        edges = [pairs[i] for i in range(len(pairs)) if mask >> i & 1]
        for i in range(1, n + 1):
            facts = [(a, b) for (a, b) in edges if b == i]
            d._append(QfExtensionType.make(i - 1, {"R": facts}))
        prob = t ** len(edges) * (1 - t) ** (len(pairs) - len(edges))
        entries.append(CatalogEntry(d, prob, "analytic"))
    return entries


def positive_type_catalog(kernel: Kernel, n_max: int, fidelity: str = "auto",
                          trials: int = 2000, seed: int = 0) -> PositiveTypeCatalog:
    """Catalog of positive-probability n-types with per-level probabilities.

    Fidelity is exact for type-mixture kernels, analytic (closed form) for
    the coin-flip graph, and empirical otherwise; type counts grow doubly
    exponentially, so keep n_max small.
    """
    if n_max < 1:
        raise IsoError("n_max must be >= 1")
    if fidelity == "auto":
        if kernel.semantics is not None:
            fidelity = "exact"
        elif kernel.scenario == "coin_flip_graph":
            fidelity = "analytic"
        else:
            fidelity = "empirical"
    catalog = PositiveTypeCatalog(n_max, fidelity)

    if fidelity == "exact":
        atlas = InvariantTypeAtlas.from_kernel(kernel)
        for n in range(1, n_max + 1):
            acc: dict = {}
            den = atlas.path_denominator(n)
            for labels, w in atlas.paths(n):
                d = atlas.semantics.build_diagram(labels)
                key = d.canonical_key()
                if key in acc:
                    acc[key] = (acc[key][0], acc[key][1] + w)
                else:
                    acc[key] = (d, w)
                if len(acc) > MAX_CATALOG_ENTRIES:
                    raise CatalogExplosion(f"level {n} exceeded {MAX_CATALOG_ENTRIES} types")
            for d, w in acc.values():
                catalog.add(n, CatalogEntry(d, Fraction(w, den), "exact"))
        return catalog

    if fidelity == "analytic":
        if kernel.scenario != "coin_flip_graph":
            raise IsoError(f"no analytic catalog for scenario {kernel.scenario!r}")
        for n in range(1, n_max + 1):
            for e in _coin_flip_level(kernel, n):
                catalog.add(n, e)
        return catalog

    # empirical: one sampling pass, prefix counts per level
    counts: dict[int, dict] = {n: {} for n in range(1, n_max + 1)}
    for trial in range(trials):
        state = kernel.initial_state(seed, trial)
        for _ in range(n_max):
            kernel.sample_next(state)
        for n in range(1, n_max + 1):
            d = diagram_of_tuple(state.diagram, list(range(1, n + 1)))
            key = d.canonical_key()
            if key in counts[n]:
                counts[n][key][1] += 1
            else:
                if len(counts[n]) >= MAX_CATALOG_ENTRIES:
                    raise CatalogExplosion(f"level {n} exceeded {MAX_CATALOG_ENTRIES} types")
                counts[n][key] = [d, 1]
    for n in range(1, n_max + 1):
        for d, c in counts[n].values():
            catalog.add(n, CatalogEntry(d, c / trials, "empirical"))
    return catalog


# ---------------------------------------------------------------------------
# extension-axiom checking


def diagram_formula(d: QfDiagram) -> QfFormula:
    """Full quantifier-free description of a diagram as one conjunction."""
    parts: list[QfFormula] = []
    for rel in d.signature.relations:
        seen = set()
        for combo in itertools.product(range(1, d.n + 1), repeat=rel.arity):
            key = tuple(sorted(combo)) if rel.symmetric else combo
            if key in seen:
                continue
            seen.add(key)
            atom = Atom(rel.name, combo)
            parts.append(atom if d.holds(rel.name, combo) else Not(atom))
    for i, j in itertools.combinations(range(1, d.n + 1), 2):
        parts.append(Eq(i, j) if d.same_point(i, j) else Not(Eq(i, j)))
    return And(tuple(parts))


def _perm_formula(f: QfFormula, sigma: Sequence[int]) -> QfFormula:
    # x_k -> x_{sigma(k)}
    return substitute(f, {k: sigma[k - 1] for k in range(1, len(sigma) + 1)})


def extension_axiom_check(kernel: Kernel, catalog: PositiveTypeCatalog,
                          fidelity: str = "auto", trials: int = 4000,
                          seed: int = 0, perm_levels: int = 3) -> dict:
    """Check the one-point-extension behaviour of the measure behind `kernel`.

    For every q in E_{n+1} with restriction r: does the measure, conditioned
    on realizing r, extend to q with positive probability?  Exact kernels
    get the exact failure mass (probability of r-realizing prefixes that no
    type label extends to q); the coin-flip graph gets the closed-form
    conditional; empirical kernels get a zero-failure criterion, reporting
    the implied upper bound when no success is seen.

    The permutation section is a finite proxy for order-indifference: it
    compares P[diag_q(x_sigma)] against the identity ordering for all
    sigma on the first `perm_levels` levels and reports any difference as
    an order-sensitivity finding.
    """
    if fidelity == "auto":
        fidelity = catalog.fidelity
    report: dict = {"scenario": kernel.scenario, "fidelity": fidelity,
                    "pairs": [], "order_findings": []}

    atlas = InvariantTypeAtlas.from_kernel(kernel) if fidelity == "exact" else None
    samples: list[QfDiagram] = []
    if fidelity == "empirical":
        # one sampling pass serves every pair and every permutation check
        for trial in range(trials):
            state = kernel.initial_state(seed, trial)
            for _ in range(catalog.n_max):
                kernel.sample_next(state)
            samples.append(state.snapshot())

    for n in range(1, catalog.n_max):
        for q_entry in catalog.level(n + 1):
            q = q_entry.diagram
            r = diagram_of_tuple(q, list(range(1, n + 1)))
            pair: dict = {"n": n, "target": q.to_json(), "base": r.to_json()}
            if fidelity == "exact":
                sem = atlas.semantics
                r_key, q_key = r.canonical_key(), q.canonical_key()
                fail = 0
                den = atlas.path_denominator(n)
                for labels, w in atlas.paths(n):
                    if sem.build_diagram(labels).canonical_key() != r_key:
                        continue
                    if not any(
                        sem.build_diagram(labels + (lab,)).canonical_key() == q_key
                        for lab in atlas.labels):
                        fail += w
                mass = Fraction(fail, den)
                pair["failure_mass"] = f"{mass.numerator}/{mass.denominator}"
                pair["pass"] = mass == 0
            elif fidelity == "analytic":
                # conditional extension probability t^a (1-t)^b in the graph
                t = kernel.t
                edges_to_new = sum(
                    1 for i in range(1, n + 1) if q.holds("R", (i, n + 1)))
                cond = t ** edges_to_new * (1 - t) ** (n - edges_to_new)
                pair["conditional"] = f"{cond.numerator}/{cond.denominator}"
                pair["pass"] = cond > 0
            else:
                c_r = c_q = 0
                r_key, q_key = r.canonical_key(), q.canonical_key()
                for d in samples:
                    if diagram_of_tuple(d, list(range(1, n + 1))).canonical_key() != r_key:
                        continue
                    c_r += 1
                    if diagram_of_tuple(d, list(range(1, n + 2))).canonical_key() == q_key:
                        c_q += 1
                pair["conditioned_trials"] = c_r
                pair["successes"] = c_q
                if c_r == 0:
                    pair["pass"] = False
                    pair["status"] = "base diagram never realized"
                elif c_q > 0:
                    pair["pass"] = True
                else:
                    pair["pass"] = False
                    pair["status"] = "suspect-fail"
                    pair["implied_upper_bound"] = 3.0 / c_r
            report["pairs"].append(pair)

    # order-sensitivity findings (finite proxy with all permutations per level)
    for n in range(2, min(catalog.n_max, perm_levels) + 1):
        for q_entry in catalog.level(n):
            f_id = diagram_formula(q_entry.diagram)
            base = None
            for sigma in itertools.permutations(range(1, n + 1)):
                f_sigma = _perm_formula(f_id, sigma)
                if fidelity == "exact":
                    p = exact_event_prob(atlas, f_sigma)
                elif fidelity == "analytic":
                    p = q_entry.prob  # edge flips are order-blind by the closed form
                else:
                    hits = sum(d.evaluate(f_sigma) for d in samples)
                    p = hits / trials
                if sigma == tuple(range(1, n + 1)):
                    base = p
                    continue
                if fidelity == "exact":
                    differs = p != base
                elif fidelity == "analytic":
                    differs = False
                else:
                    se = math.sqrt(max(base * (1 - base), p * (1 - p), 1e-12) / trials)
                    differs = abs(p - base) > 4 * se * math.sqrt(2)
                if differs:
                    report["order_findings"].append({
                        "n": n,
                        "diagram": q_entry.diagram.to_json(),
                        "sigma": list(sigma),
                        "p_identity": _prob_str(base),
                        "p_sigma": _prob_str(p),
                    })
    report["passed"] = (all(p["pass"] for p in report["pairs"])
                        and not report["order_findings"])
    return report


def _prob_str(p):
    return f"{p.numerator}/{p.denominator}" if isinstance(p, Fraction) else p


# ---------------------------------------------------------------------------
# categoricity axioms


def emit_categoricity_axioms(catalog: PositiveTypeCatalog) -> list[dict]:
    """First-order sentences that pin the almost-sure structure.

    Three schemas per level: every positive type is realized; every
    distinct tuple realizes some positive type; every positive type
    extends by one point to each of its positive successors.  For the
    bundled scenarios these render the familiar extension axioms (graph
    extension sentences, density and unboundedness).
    """
    from .events import render

    axioms: list[dict] = []
    for n in range(1, catalog.n_max + 1):
        vars_n = " ".join(f"x{i}" for i in range(1, n + 1))
        distinct = " & ".join(
            f"x{i} != x{j}" for i, j in itertools.combinations(range(1, n + 1), 2))
        for e in catalog.level(n):
            body = render(diagram_formula(e.diagram))
            axioms.append({
                "schema": "existence", "n": n,
                "diagram": e.diagram.to_json(),
                "text": f"exists {vars_n} ({body})",
            })
        disjunction = " | ".join(
            f"({render(diagram_formula(e.diagram))})" for e in catalog.level(n))
        if n >= 2:
            axioms.append({
                "schema": "cover", "n": n,
                "text": f"forall {vars_n} (({distinct}) -> ({disjunction}))",
            })
    for n in range(1, catalog.n_max):
        vars_n = " ".join(f"x{i}" for i in range(1, n + 1))
        distinct = " & ".join(
            f"x{i} != x{j}" for i, j in itertools.combinations(range(1, n + 1), 2))
        guard = f"({distinct}) -> " if distinct else ""
        for e in catalog.level(n + 1):
            q = e.diagram
            r = diagram_of_tuple(q, list(range(1, n + 1)))
            if not catalog.contains(n, r):
                continue
            r_body = render(diagram_formula(r))
            q_body = render(diagram_formula(q))
            axioms.append({
                "schema": "extension", "n": n,
                "base": r.to_json(), "target": q.to_json(),
                "text": (f"forall {vars_n} exists x{n + 1} "
                         f"({guard}(({r_body}) -> ({q_body})))"),
            })
    return axioms


# ---------------------------------------------------------------------------
# divergence of sampled invariants


def _extract_label_sequence(kernel, state, depth):
    return tuple(state.aux[:depth])


def _extract_ball_pattern(kernel, state, depth):
    return tuple(kernel.pattern(c) for c in state.aux[:depth])


_EXTRACTORS = {
    "label_sequence": _extract_label_sequence,
    "ball_pattern": _extract_ball_pattern,
}


def invariant_divergence(kernel: Kernel, extractor_id: str, depth: int,
                         pairs: int, seed: int) -> Estimate:
    """Probability that two independent samples agree on an extracted invariant.

    Agreement decaying to zero with depth is the signature of a measure
    whose samples scatter across continuum-many isomorphism types.
    """
    if extractor_id not in _EXTRACTORS:
        raise IsoError(f"unknown extractor {extractor_id!r}; "
                       f"known: {sorted(_EXTRACTORS)}")
    if extractor_id == "ball_pattern" and kernel.scenario != "ball_language":
        raise IsoError("ball_pattern extractor requires the ball_language scenario")
    if extractor_id == "label_sequence" and kernel.semantics is None:
        raise IsoError("label_sequence extractor requires a type-mixture scenario")
    extract = _EXTRACTORS[extractor_id]
    agree = 0
    for p in range(pairs):
        s1 = kernel.initial_state(seed, 2 * p)
        s2 = kernel.initial_state(seed, 2 * p + 1)
        for _ in range(depth):
            kernel.sample_next(s1)
            kernel.sample_next(s2)
        agree += extract(kernel, s1, depth) == extract(kernel, s2, depth)
    manifest = make_manifest(kernel, seed, pairs, depth,
                             {"divergence": {"extractor": extractor_id}})
    return Estimate(agree / pairs, pairs, 0, manifest)


def commuting_mixture_check(kernel: Kernel, depth: int, d: int, pairs: int,
                            seed: int, min_occurrences: Optional[int] = None
                            ) -> tuple[int, int]:
    """Back-and-forth by type label: the finite face of the commuting-mixture
    isomorphism argument.

    The matching pairs occurrences of each type label in creation order
    (smallest unused index on the active side, smallest same-label index on
    the other), which mirrors matching full types over the ambient model.
    For a mixture whose realized relations depend only on the labels and
    not on interleaving, the matched tuples must be isomorphic; requiring
    every label to occur at least d times (the occurrence-set condition at
    finite scale) guarantees the matching itself never starves.

    Returns (pairs checked, pairs where the label matching is a partial
    isomorphism of size d); only pairs meeting the occurrence floor on both
    sides are checked.
    """
    sem = kernel.semantics
    if sem is None:
        raise IsoError("commuting-mixture check requires a type-mixture kernel")
    floor = d if min_occurrences is None else min_occurrences
    checked = succ = 0
    for p in range(pairs):
        s1 = kernel.initial_state(seed, 2 * p)
        s2 = kernel.initial_state(seed, 2 * p + 1)
        for _ in range(depth):
            kernel.sample_next(s1)
            kernel.sample_next(s2)
        if any(s1.aux.count(lab) < floor or s2.aux.count(lab) < floor
               for lab in sem.labels):
            continue
        checked += 1
        src: list[int] = []
        tgt: list[int] = []
        for step in range(d):
            if step % 2 == 0:
                a = next(i for i in range(1, depth + 1) if i not in src)
                lab = s1.aux[a - 1]
                b = next(j for j in range(1, depth + 1)
                         if j not in tgt and s2.aux[j - 1] == lab)
                src.append(a)
                tgt.append(b)
            else:
                b = next(j for j in range(1, depth + 1) if j not in tgt)
                lab = s2.aux[b - 1]
                a = next(i for i in range(1, depth + 1)
                         if i not in src and s1.aux[i - 1] == lab)
                src.append(a)
                tgt.append(b)
        succ += labeled_iso_eq(diagram_of_tuple(s1.diagram, src),
                               diagram_of_tuple(s2.diagram, tgt))
    return checked, succ
