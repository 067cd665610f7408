"""Relational signatures, finite quantifier-free diagrams, and formula evaluation.

A diagram is the complete atomic description of a finite sample prefix:
which relation tuples hold, and which sample indices have been identified
(point-mass scenarios can draw the same point twice).  Everything here is
a plain value: operations either return new diagrams or booleans, never
mutate their inputs, and are safe to share across threads.

Facts are stored on equality-class representatives, with symmetric
relations canonicalized to sorted index tuples, so "facts respect
identifications" holds by construction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence


class ModelError(Exception):
    """Base error for diagram/formula violations."""


class SignatureMismatch(ModelError):
    pass


class UnboundVariable(ModelError):
    pass


class IndexOutOfRange(ModelError):
    pass


class InconsistentExtension(ModelError):
    """An extension literal contradicts an identification or the base diagram."""

    def __init__(self, literal: str, reason: str):
        self.literal = literal
        self.reason = reason
        super().__init__(f"inconsistent extension literal {literal}: {reason}")


# ---------------------------------------------------------------------------
# signatures


@dataclass(frozen=True)
class Relation:
    name: str
    arity: int
    symmetric: bool = False
    is_order: bool = False


@dataclass(frozen=True)
class Signature:
    """A finite relational signature; at most one relation is a strict order."""

    relations: tuple[Relation, ...]

    def __post_init__(self):
        names = [r.name for r in self.relations]
        if len(set(names)) != len(names):
            raise SignatureMismatch(f"duplicate relation names in {names}")
        for r in self.relations:
            if r.arity < 1:
                raise SignatureMismatch(f"relation {r.name} has arity {r.arity} < 1")
            if r.is_order and r.arity != 2:
                raise SignatureMismatch(f"order relation {r.name} must be binary")
            if r.is_order and r.symmetric:
                raise SignatureMismatch(f"order relation {r.name} cannot be symmetric")
        if sum(1 for r in self.relations if r.is_order) > 1:
            raise SignatureMismatch("at most one relation may be flagged as the order")

    def relation(self, name: str) -> Relation:
        for r in self.relations:
            if r.name == name:
                return r
        raise SignatureMismatch(f"unknown relation {name!r}")

    @property
    def order_name(self) -> Optional[str]:
        for r in self.relations:
            if r.is_order:
                return r.name
        return None

    def resolve(self, name: str) -> Relation:
        """Resolve a relation name; '<' is an alias for the order relation."""
        if name == "<":
            if self.order_name is None:
                raise SignatureMismatch("signature has no order relation for '<'")
            return self.relation(self.order_name)
        return self.relation(name)

    def to_json(self) -> dict:
        return {
            "relations": [
                {"name": r.name, "arity": r.arity, "symmetric": r.symmetric,
                 "order": r.is_order}
                for r in self.relations
            ]
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Signature":
        return cls(tuple(
            Relation(d["name"], d["arity"], d.get("symmetric", False),
                     d.get("order", False))
            for d in obj["relations"]
        ))


# ---------------------------------------------------------------------------
# quantifier-free formulas


@dataclass(frozen=True)
class Atom:
    rel: str
    args: tuple[int, ...]


@dataclass(frozen=True)
class Eq:
    left: int
    right: int


@dataclass(frozen=True)
class Not:
    inner: "QfFormula"


@dataclass(frozen=True)
class And:
    parts: tuple["QfFormula", ...]


@dataclass(frozen=True)
class Or:
    parts: tuple["QfFormula", ...]


QfFormula = Atom | Eq | Not | And | Or

TRUE = And(())
FALSE = Or(())


def free_vars(f: QfFormula) -> frozenset[int]:
    if isinstance(f, Atom):
        return frozenset(f.args)
    if isinstance(f, Eq):
        return frozenset((f.left, f.right))
    if isinstance(f, Not):
        return free_vars(f.inner)
    return frozenset().union(*(free_vars(p) for p in f.parts)) if f.parts else frozenset()


def substitute(f: QfFormula, mapping: Mapping[int, int]) -> QfFormula:
    """Rename free variables; indices absent from the mapping are kept."""
    if isinstance(f, Atom):
        return Atom(f.rel, tuple(mapping.get(a, a) for a in f.args))
    if isinstance(f, Eq):
        return Eq(mapping.get(f.left, f.left), mapping.get(f.right, f.right))
    if isinstance(f, Not):
        return Not(substitute(f.inner, mapping))
    if isinstance(f, And):
        return And(tuple(substitute(p, mapping) for p in f.parts))
    return Or(tuple(substitute(p, mapping) for p in f.parts))


def conj(parts: Iterable[QfFormula]) -> QfFormula:
    parts = tuple(parts)
    return parts[0] if len(parts) == 1 else And(parts)


# ---------------------------------------------------------------------------
# extension types


@dataclass(frozen=True)
class QfExtensionType:
    """A quantifier-free 1-type of the next point over a realized prefix.

    ``facts`` lists exactly the relation tuples involving the new point
    (index ``base_n + 1``) that are to hold; every unlisted placement is
    negative.  ``equal_to`` optionally identifies the new point with an
    existing one, which forces its facts to mirror that point's.
    """

    base_n: int
    facts: Mapping[str, frozenset[tuple[int, ...]]] = field(default_factory=dict)
    equal_to: Optional[int] = None

    @classmethod
    def make(cls, base_n: int, facts: Mapping[str, Iterable[Sequence[int]]] | None = None,
             equal_to: Optional[int] = None) -> "QfExtensionType":
        frozen = {}
        for rel, tuples in (facts or {}).items():
            frozen[rel] = frozenset(tuple(t) for t in tuples)
        return cls(base_n, frozen, equal_to)

    @property
    def new_index(self) -> int:
        return self.base_n + 1


# ---------------------------------------------------------------------------
# diagrams


class QfDiagram:
    """Quantifier-free diagram of an n-point sample prefix.

    Internally: ``_rep[i]`` is the least index in i's equality class
    (1-based; ``_rep[0]`` is padding), and ``_facts[rel]`` holds tuples of
    representatives, sorted for symmetric relations.
    """

    __slots__ = ("signature", "n", "_rep", "_facts")

    def __init__(self, signature: Signature):
        self.signature = signature
        self.n = 0
        self._rep: list[int] = [0]
        self._facts: dict[str, set[tuple[int, ...]]] = {
            r.name: set() for r in signature.relations
        }

    # -- canonicalization helpers

    def rep(self, i: int) -> int:
        if not 1 <= i <= self.n:
            raise IndexOutOfRange(f"point index {i} out of range 1..{self.n}")
        return self._rep[i]

    def _canon(self, rel: Relation, args: Sequence[int]) -> tuple[int, ...]:
        t = tuple(self._rep[a] for a in args)
        return tuple(sorted(t)) if rel.symmetric else t

    def holds(self, rel_name: str, args: Sequence[int]) -> bool:
        rel = self.signature.resolve(rel_name)
        if len(args) != rel.arity:
            raise SignatureMismatch(
                f"relation {rel.name} has arity {rel.arity}, got {len(args)} arguments")
        for a in args:
            if not 1 <= a <= self.n:
                raise IndexOutOfRange(f"point index {a} out of range 1..{self.n}")
        return self._canon(rel, args) in self._facts[rel.name]

    def same_point(self, i: int, j: int) -> bool:
        return self.rep(i) == self.rep(j)

    def classes(self) -> list[tuple[int, ...]]:
        groups: dict[int, list[int]] = {}
        for i in range(1, self.n + 1):
            groups.setdefault(self._rep[i], []).append(i)
        return [tuple(groups[k]) for k in sorted(groups)]

    # -- growth (single code path for the pure op and the kernels' hot loop)

    def _append(self, ext: QfExtensionType) -> None:
        new = self.n + 1
        if ext.base_n != self.n:
            raise InconsistentExtension(
                f"base_n={ext.base_n}", f"diagram has {self.n} points")
        target_rep = None
        if ext.equal_to is not None:
            if not 1 <= ext.equal_to <= self.n:
                raise IndexOutOfRange(f"equal_to index {ext.equal_to} out of range")
            target_rep = self._rep[ext.equal_to]
        self._rep.append(target_rep if target_rep is not None else new)
        self.n = new
        for rel_name, tuples in ext.facts.items():
            rel = self.signature.relation(rel_name)
            for t in tuples:
                if len(t) != rel.arity:
                    raise SignatureMismatch(
                        f"arity mismatch in extension fact {rel_name}{t}")
                if new not in t:
                    raise InconsistentExtension(
                        f"{rel_name}{t}", "extension fact does not involve the new point")
                canon = self._canon(rel, t)
                if target_rep is not None and canon not in self._facts[rel_name]:
                    # identified with an existing point: the literal must
                    # already hold of that point
                    self._undo_append()
                    raise InconsistentExtension(
                        f"{rel_name}{t}",
                        f"new point is identified with {ext.equal_to} but the "
                        f"literal does not hold there")
                self._facts[rel_name].add(canon)
        if target_rep is not None:
            # closed world: omitted literals are negative, so every existing
            # fact about the identified point must be listed
            for rel_name, facts in self._facts.items():
                rel = self.signature.relation(rel_name)
                listed = {self._canon(rel, t) for t in ext.facts.get(rel_name, ())}
                for t in facts:
                    if target_rep in t and t not in listed:
                        self._undo_append()
                        raise InconsistentExtension(
                            f"{rel_name}{t}",
                            f"holds of point {ext.equal_to} but the extension "
                            f"type omits it for the new point")

    def _undo_append(self) -> None:
        self._rep.pop()
        self.n -= 1

    def _append_trusted(self, facts_by_rel: Mapping[str, Iterable[tuple[int, ...]]]) -> None:
        # kernel hot path: tuples must already be canonical (representative
        # indices, sorted for symmetric relations) and the new point joins no
        # equality class; equivalence with _append is property-tested
        self._rep.append(self.n + 1)
        self.n += 1
        facts = self._facts
        for rel_name, tuples in facts_by_rel.items():
            facts[rel_name].update(tuples)

    def copy(self) -> "QfDiagram":
        d = QfDiagram.__new__(QfDiagram)
        d.signature = self.signature
        d.n = self.n
        d._rep = list(self._rep)
        d._facts = {k: set(v) for k, v in self._facts.items()}
        return d

    # -- formula evaluation

    def evaluate(self, f: QfFormula) -> bool:
        for v in free_vars(f):
            if not 1 <= v <= self.n:
                raise UnboundVariable(f"variable x{v} unbound in {self.n}-point diagram")
        return self._eval(f)

    def _eval(self, f: QfFormula) -> bool:
        if isinstance(f, Atom):
            return self.holds(f.rel, f.args)
        if isinstance(f, Eq):
            return self._rep[f.left] == self._rep[f.right]
        if isinstance(f, Not):
            return not self._eval(f.inner)
        if isinstance(f, And):
            return all(self._eval(p) for p in f.parts)
        return any(self._eval(p) for p in f.parts)

    # -- canonical forms

    def canonical_key(self):
        """Hashable key identifying the diagram up to nothing (labeled)."""
        return (
            self.n,
            tuple(self._rep[1:]),
            tuple(sorted((name, tuple(sorted(facts)))
                         for name, facts in self._facts.items())),
        )

    def to_json(self) -> dict:
        return {
            "signature": self.signature.to_json(),
            "n": self.n,
            "classes": [list(c) for c in self.classes()],
            "facts": {name: sorted(list(t) for t in facts)
                      for name, facts in sorted(self._facts.items())},
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "QfDiagram":
        sig = Signature.from_json(obj["signature"])
        d = cls(sig)
        n = obj["n"]
        rep = {}
        for cls_members in obj["classes"]:
            base = min(cls_members)
            for i in cls_members:
                rep[i] = base
        if sorted(rep) != list(range(1, n + 1)):
            raise ModelError("classes do not partition 1..n")
        d.n = n
        d._rep = [0] + [rep[i] for i in range(1, n + 1)]
        for name, tuples in obj.get("facts", {}).items():
            rel = sig.relation(name)
            for t in tuples:
                if any(not 1 <= a <= n for a in t):
                    raise IndexOutOfRange(f"fact {name}{tuple(t)} uses index > n={n}")
                d._facts[name].add(d._canon(rel, t))
        return d

    def __repr__(self):
        return f"QfDiagram(n={self.n}, facts={ {k: sorted(v) for k, v in self._facts.items()} })"


# ---------------------------------------------------------------------------
# the module's operations


def diagram_extend(d: QfDiagram, t: QfExtensionType) -> QfDiagram:
    """One-point extension; returns a new diagram, ``d`` is untouched."""
    out = d.copy()
    out._append(t)
    return out


def diagram_of_tuple(d: QfDiagram, indices: Sequence[int]) -> QfDiagram:
    """Induced diagram on the listed points, relabeled 1..k in list order."""
    if len(set(indices)) != len(indices):
        raise IndexOutOfRange(f"indices must be distinct as written: {indices}")
    for i in indices:
        if not 1 <= i <= d.n:
            raise IndexOutOfRange(f"point index {i} out of range 1..{d.n}")
    out = QfDiagram(d.signature)
    out.n = len(indices)
    # identifications induced by the old classes, relabeled in list order
    seen: dict[int, int] = {}
    out._rep = [0]
    for k, old in enumerate(indices, start=1):
        r = d._rep[old]
        out._rep.append(seen.setdefault(r, k))
    pos = {old: k for k, old in enumerate(indices, start=1)}
    for rel in d.signature.relations:
        name = rel.name
        old_facts = d._facts[name]
        if rel.arity == 1:
            for old in indices:
                if (d._rep[old],) in old_facts:
                    out._facts[name].add((out._rep[pos[old]],))
        else:
            for combo in itertools.product(indices, repeat=rel.arity):
                if d._canon(rel, combo) in old_facts:
                    out._facts[name].add(out._canon(rel, tuple(pos[c] for c in combo)))
    return out


def eval_qf(d: QfDiagram, f: QfFormula) -> bool:
    return d.evaluate(f)


def labeled_iso_eq(d1: QfDiagram, d2: QfDiagram) -> bool:
    """True iff the identity relabeling is an isomorphism of diagrams."""
    if d1.signature != d2.signature:
        raise SignatureMismatch("diagrams have different signatures")
    return d1.canonical_key() == d2.canonical_key()
