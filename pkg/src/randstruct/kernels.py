"""One-point-extension kernels for the bundled measure scenarios.

A kernel is the computational face of an invariant measure: it extends a
realized sample prefix by one point whose quantifier-free type over the
prefix is drawn from the measure's conditional law, and it prices single
literals about the next point exactly where a closed form exists.

Sampling convention (left extension): sample step n+1 realizes the
outermost factor of the iterated product, so every event on increasing
indices reduces to the n-variable law.  Permuted-variable events are the
event layer's business; kernels never reorder samples.

Bundled scenarios
-----------------
coin_flip_graph   independent edge flips with rational bias t
lebesgue_dlo      uniform-[0,1] coordinates in a dense order
finite_point_mass weighted point masses on a finite structure
two_cuts       two middle cut types of the real line (descending /
                  ascending toward the reals from above / below)
four_types        the four canonical cut types (sup, inf, mid_upper,
                  mid_lower) with configurable weights
dlo_delta         the single type above everything (deterministic chain)
marked_chain       ascending chain with a fair-coin unary mark
henson_delta      the empty-neighborhood type in the triangle-free graph
binary_tree       fresh uniform branches of the infinite binary tree
ball_language     uniform coordinate observed through a finite family of
                  rational balls (a truncation of the cut language)
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Mapping, Optional, Sequence

import jsonschema

from .model import (
    QfDiagram,
    QfExtensionType,
    Relation,
    Signature,
)
from .rng import Stream

HARD_TIE_CAP = 1 << 20


class ConfigError(Exception):
    """Scenario configuration rejected; ``pointer`` locates the offending field."""

    def __init__(self, message: str, pointer: str = ""):
        self.pointer = pointer
        super().__init__(f"{message}" + (f" (at {pointer})" if pointer else ""))


class CapabilityError(Exception):
    """The kernel has no closed form for this literal."""

    def __init__(self, message: str):
        super().__init__(f"{message}; estimate via Monte Carlo instead")


class KernelError(Exception):
    pass


def parse_rational(value) -> Fraction:
    """Parse 'num/den' strings (or ints) into exact rationals."""
    if isinstance(value, bool):
        raise ConfigError(f"expected rational, got boolean {value}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as e:
            raise ConfigError(f"cannot parse rational {value!r}: {e}")
    raise ConfigError(f"rationals must be 'num/den' strings, got {value!r}")


def rational_str(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}" if q.denominator != 1 else str(q.numerator)


# ---------------------------------------------------------------------------
# literal templates for the next point


@dataclass(frozen=True)
class RelLit:
    """R(new, a_other) (or reversed); ``other`` is None for unary relations."""

    rel: str
    other: Optional[int] = None
    new_first: bool = True
    positive: bool = True


@dataclass(frozen=True)
class EqLit:
    """new = a_other."""

    other: int


@dataclass(frozen=True)
class NodeLit:
    """Fixed tree node lies below the new point; path is a 0/1 string."""

    path: str


# ---------------------------------------------------------------------------
# sample states


class SampleState:
    """A growing realization prefix: diagram, per-point payloads, RNG cursor.

    States are builders: ``sample_next`` extends them in place and returns
    the same object.  Take ``snapshot()`` (or ``diagram_of_tuple``) when a
    frozen value is needed.  Each (seed, trial) pair owns a disjoint
    substream, so trials are independent and schedule-insensitive.
    """

    __slots__ = ("scenario", "seed", "trial", "diagram", "aux", "rng")

    def __init__(self, scenario: str, seed: int, trial: int, signature: Signature):
        self.scenario = scenario
        self.seed = seed
        self.trial = trial
        self.diagram = QfDiagram(signature)
        self.aux: list[Any] = []
        self.rng = Stream(seed, trial)

    @property
    def n(self) -> int:
        return self.diagram.n

    @property
    def rng_cursor(self) -> int:
        return self.rng.state

    def snapshot(self) -> QfDiagram:
        return self.diagram.copy()


# ---------------------------------------------------------------------------
# kernels


class Kernel:
    """Immutable sampler + literal evaluator for one scenario."""

    scenario: str
    profile: str  # one of: exact_literals, continuous, symbolic, point_mass
    theory_id: Optional[str]
    signature: Signature

    def __init__(self, scenario: str, params: Mapping[str, Any], signature: Signature,
                 profile: str, theory_id: Optional[str], seed: int = 0):
        self.scenario = scenario
        self.params = dict(params)
        self.signature = signature
        self.profile = profile
        self.theory_id = theory_id
        self.default_seed = seed

    # -- contract surface

    def initial_state(self, seed: Optional[int] = None, trial: int = 0) -> SampleState:
        return SampleState(self.scenario, self.default_seed if seed is None else seed,
                           trial, self.signature)

    def sample_next(self, state: SampleState) -> SampleState:
        if state.scenario != self.scenario:
            raise KernelError(
                f"state was produced by scenario {state.scenario!r}, not {self.scenario!r}")
        self._extend(state)
        return state

    def literal_prob(self, state: SampleState, lit) -> Fraction | float:
        raise CapabilityError(f"{self.scenario} has no closed form for {lit!r}")

    @property
    def exact_literals(self) -> bool:
        return self.profile in ("exact_literals", "symbolic", "point_mass")

    @property
    def semantics(self):
        """Label-path semantics, for kernels backed by finitely many types."""
        return None

    def config_echo(self) -> dict:
        return {"scenario": self.scenario, **self.params}

    def config_hash(self) -> str:
        import hashlib
        blob = json.dumps(self.config_echo(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def _extend(self, state: SampleState) -> None:
        raise NotImplementedError


class CoinFlipGraphKernel(Kernel):
    """Random-graph measure: each new/old adjacency holds with probability t."""

    def __init__(self, t: Fraction, seed: int = 0):
        if not 0 < t < 1:
            raise ConfigError(f"t must lie strictly between 0 and 1, got {rational_str(t)}",
                              pointer="/t")
        sig = Signature((Relation("R", 2, symmetric=True),))
        super().__init__("coin_flip_graph", {"t": rational_str(t)}, sig,
                         "exact_literals", "random_graph", seed)
        self.t = t

    def _extend(self, state: SampleState) -> None:
        d = state.diagram
        new = d.n + 1
        num, den = self.t.numerator << 64, self.t.denominator
        rng = state.rng
        facts = [(j, new) for j in range(1, new) if rng.next_u64() * den < num]
        d._append_trusted({"R": facts})
        state.aux.append(None)

    def literal_prob(self, state, lit) -> Fraction:
        if isinstance(lit, EqLit):
            return Fraction(0)
        if isinstance(lit, RelLit) and lit.rel == "R":
            return self.t if lit.positive else 1 - self.t
        raise CapabilityError(f"unsupported literal {lit!r} for coin_flip_graph")


class LebesgueDloKernel(Kernel):
    """Uniform-[0,1] coordinates; order facts come from coordinate comparisons.

    Exact coordinate ties against earlier points are redrawn: ties carry
    measure zero, so redrawing preserves the law while keeping diagrams
    identification-free.
    """

    def __init__(self, seed: int = 0):
        sig = Signature((Relation("<", 2, is_order=True),))
        super().__init__("lebesgue_dlo", {}, sig, "continuous", "dlo", seed)

    def _extend(self, state: SampleState) -> None:
        d = state.diagram
        new = d.n + 1
        coord = state.rng.next_unit()
        guard = 0
        while coord in state.aux:
            coord = state.rng.next_unit()
            guard += 1
            if guard > HARD_TIE_CAP:  # pragma: no cover
                raise KernelError("coordinate tie loop exceeded hard cap")
        facts = [(j, new) if cj < coord else (new, j)
                 for j, cj in enumerate(state.aux, start=1)]
        d._append_trusted({"<": facts})
        state.aux.append(coord)

    def literal_prob(self, state, lit) -> float:
        # P(new < a_j) equals a_j's coordinate: the uniform mass below it
        if isinstance(lit, EqLit):
            return 0.0
        if isinstance(lit, RelLit) and lit.rel == "<" and lit.other is not None:
            cj = state.aux[lit.other - 1]
            p = cj if lit.new_first else 1.0 - cj
            return p if lit.positive else 1.0 - p
        raise CapabilityError(f"unsupported literal {lit!r} for lebesgue_dlo")


# -- label-path scenarios (finitely many invariant types) -------------------


class LabelSemantics:
    """Shared semantics for measures supported on finitely many types.

    Both the sampler and the exact engine speak in terms of label paths:
    ``eval_atom`` decides a relation atom on the path directly, and
    ``extension`` produces the quantifier-free extension type of the next
    point, so the two routes cannot drift apart.
    """

    def __init__(self, signature: Signature, weights: dict[str, Fraction]):
        self.signature = signature
        total = sum(weights.values())
        if total != 1:
            raise ConfigError(
                f"weights must sum to 1 exactly, got {rational_str(Fraction(total))}",
                pointer="/weights")
        if any(w <= 0 for w in weights.values()):
            raise ConfigError("weights must be positive", pointer="/weights")
        self.weights = dict(weights)
        self.labels = tuple(weights)
        cum = Fraction(0)
        self._cum = []
        for lab, w in weights.items():
            cum += w
            self._cum.append((lab, cum))

    def draw_label(self, rng: Stream) -> str:
        return rng.next_choice(self._cum)

    # positions are 1-based sample indices; labels is the whole path
    def eval_atom(self, rel: str, args: Sequence[int], labels: Sequence[str]) -> bool:
        raise NotImplementedError

    def eval_eq(self, i: int, j: int, labels: Sequence[str]) -> bool:
        raise NotImplementedError

    def extension(self, labels: Sequence[str], new_label: str) -> QfExtensionType:
        raise NotImplementedError

    def extension_raw(self, labels: Sequence[str], new_label: str) -> Optional[dict]:
        """Canonical fact tuples for the trusted append path; None if the
        scenario may identify points and must go through full validation."""
        return None

    def build_diagram(self, labels: Sequence[str]) -> QfDiagram:
        d = QfDiagram(self.signature)
        for i, lab in enumerate(labels):
            d._append(self.extension(labels[:i], lab))
        return d


@dataclass(frozen=True)
class OrderLabel:
    """Placement rule for one invariant order type.

    ``block`` stratifies labels bottom-to-top; within a block, ascending
    labels put each new point above all earlier same-block points and
    descending labels below them.  The key function makes the realized
    order a deterministic function of (label, creation index).
    """

    name: str
    block: int
    ascending: bool
    unary: tuple[str, ...] = ()

    def key(self, position: int) -> tuple[int, int]:
        return (self.block, position if self.ascending else -position)


class OrderSemantics(LabelSemantics):
    def __init__(self, labels: Sequence[OrderLabel], weights: dict[str, Fraction],
                 unary_rels: Sequence[str] = ()):
        rels = [Relation("<", 2, is_order=True)]
        rels += [Relation(u, 1) for u in unary_rels]
        super().__init__(Signature(tuple(rels)), weights)
        self.table = {l.name: l for l in labels}
        if set(self.table) != set(weights):
            raise ConfigError("weight labels do not match scenario labels",
                              pointer="/weights")

    def _key(self, labels, i):
        return self.table[labels[i - 1]].key(i)

    def eval_atom(self, rel, args, labels):
        if rel == "<":
            return self._key(labels, args[0]) < self._key(labels, args[1])
        return rel in self.table[labels[args[0] - 1]].unary

    def eval_eq(self, i, j, labels):
        return i == j

    def extension(self, labels, new_label):
        return QfExtensionType.make(len(labels), self.extension_raw(labels, new_label))

    def extension_raw(self, labels, new_label):
        n = len(labels)
        new = n + 1
        spec = self.table[new_label]
        newkey = spec.key(new)
        table = self.table
        order = []
        for j, lab in enumerate(labels, start=1):
            order.append((j, new) if table[lab].key(j) < newkey else (new, j))
        facts: dict = {"<": order}
        for u in spec.unary:
            facts[u] = [(new,)]
        return facts


class PointMassSemantics(LabelSemantics):
    """Weighted point masses on a finite structure; repeats identify points."""

    def __init__(self, structure: "FiniteStructure", weights: dict[str, Fraction]):
        for e in weights:
            if e not in structure.universe:
                raise ConfigError(f"weight on unknown element {e!r}", pointer="/weights")
        super().__init__(structure.signature, weights)
        self.structure = structure

    def eval_atom(self, rel, args, labels):
        return self.structure.holds(rel, tuple(labels[a - 1] for a in args))

    def eval_eq(self, i, j, labels):
        return labels[i - 1] == labels[j - 1]

    def extension(self, labels, new_label):
        n = len(labels)
        new = n + 1
        equal_to = None
        for j, e in enumerate(labels, start=1):
            if e == new_label:
                equal_to = j
                break
        facts: dict[str, list] = {}
        elems = list(labels) + [new_label]
        for rel in self.structure.signature.relations:
            tuples = []
            if rel.arity == 1:
                if self.structure.holds(rel.name, (new_label,)):
                    tuples.append((new,))
            else:
                for combo in itertools.product(range(1, new + 1), repeat=rel.arity):
                    if new not in combo:
                        continue
                    if self.structure.holds(rel.name, tuple(elems[c - 1] for c in combo)):
                        tuples.append(combo)
            if tuples:
                facts[rel.name] = tuples
        return QfExtensionType.make(n, facts, equal_to=equal_to)


class FiniteStructure:
    """A finite relational structure given by element names and fact tables."""

    def __init__(self, universe: Sequence[str], relations: Mapping[str, Sequence[Sequence[str]]],
                 symmetric: Sequence[str] = (), arities: Mapping[str, int] | None = None):
        self.universe = tuple(universe)
        if len(set(self.universe)) != len(self.universe):
            raise ConfigError("universe elements must be distinct", pointer="/structure/universe")
        rels = []
        self._facts: dict[str, set[tuple[str, ...]]] = {}
        for name, tuples in relations.items():
            tuples = [tuple(t) for t in tuples]
            arity = (arities or {}).get(name) or (len(tuples[0]) if tuples else None)
            if arity is None:
                raise ConfigError(f"cannot infer arity of empty relation {name!r}; "
                                  f"give it in 'arities'", pointer=f"/structure/relations/{name}")
            sym = name in symmetric
            rels.append(Relation(name, arity, symmetric=sym))
            facts = set()
            for t in tuples:
                if len(t) != arity:
                    raise ConfigError(f"fact {name}{t} has wrong arity",
                                      pointer=f"/structure/relations/{name}")
                for e in t:
                    if e not in self.universe:
                        raise ConfigError(f"fact {name}{t} uses unknown element {e!r}",
                                          pointer=f"/structure/relations/{name}")
                facts.add(tuple(sorted(t)) if sym else t)
            self._facts[name] = facts
        self.signature = Signature(tuple(rels))

    def holds(self, rel_name: str, elems: tuple[str, ...]) -> bool:
        rel = self.signature.relation(rel_name)
        key = tuple(sorted(elems)) if rel.symmetric else elems
        return key in self._facts[rel_name]


def four_point_equivalence() -> FiniteStructure:
    pairs = [("a", "a"), ("a", "b"), ("b", "b"), ("c", "c"), ("c", "d"), ("d", "d")]
    return FiniteStructure(("a", "b", "c", "d"), {"E": pairs}, symmetric=("E",))


class HensonSemantics(LabelSemantics):
    """The lone non-adjacency type of the triangle-free random graph."""

    def __init__(self):
        sig = Signature((Relation("R", 2, symmetric=True),))
        super().__init__(sig, {"isolated": Fraction(1)})

    def eval_atom(self, rel, args, labels):
        return False

    def eval_eq(self, i, j, labels):
        return i == j

    def extension(self, labels, new_label):
        return QfExtensionType.make(len(labels))

    def extension_raw(self, labels, new_label):
        return {}


class LabelKernel(Kernel):
    """Kernel driven by a LabelSemantics: draw a label, apply its extension."""

    def __init__(self, scenario: str, semantics: LabelSemantics, params: Mapping,
                 profile: str, theory_id: Optional[str], seed: int = 0):
        super().__init__(scenario, params, semantics.signature, profile, theory_id, seed)
        self._sem = semantics

    @property
    def semantics(self) -> LabelSemantics:
        return self._sem

    def _extend(self, state: SampleState) -> None:
        # deterministic single-type kernels consume no randomness
        if len(self._sem.labels) == 1:
            lab = self._sem.labels[0]
        else:
            lab = self._sem.draw_label(state.rng)
        raw = self._sem.extension_raw(state.aux, lab)
        if raw is None:
            state.diagram._append(self._sem.extension(state.aux, lab))
        else:
            state.diagram._append_trusted(raw)
        state.aux.append(lab)

    def literal_prob(self, state, lit) -> Fraction:
        sem = self._sem
        labels = state.aux
        new_pos = len(labels) + 1
        total = Fraction(0)
        for lab, w in sem.weights.items():
            path = list(labels) + [lab]
            if isinstance(lit, EqLit):
                ok = sem.eval_eq(lit.other, new_pos, path)
            elif isinstance(lit, RelLit):
                if lit.other is None:
                    args: tuple[int, ...] = (new_pos,)
                elif lit.new_first:
                    args = (new_pos, lit.other)
                else:
                    args = (lit.other, new_pos)
                ok = sem.eval_atom(lit.rel, args, path)
                if not lit.positive:
                    ok = not ok
            else:
                raise CapabilityError(f"unsupported literal {lit!r} for {self.scenario}")
            if ok:
                total += w
        return total


class BinaryTreeKernel(Kernel):
    """Fresh uniform branches of the infinite binary tree.

    Two independent branches differ at a finite depth almost surely, so
    sampled points are pairwise incomparable; the only positive tree facts
    involve fixed nodes, priced exactly by literal_prob.
    """

    def __init__(self, seed: int = 0):
        sig = Signature((Relation("below", 2),))
        super().__init__("binary_tree", {}, sig, "continuous", None, seed)

    def _extend(self, state: SampleState) -> None:
        d = state.diagram
        branch = _LazyBranch(state.rng.fork(d.n + 1))
        for other in state.aux:
            _first_difference(branch, other)  # forces incomparability witnesses
        d._append_trusted({})
        state.aux.append(branch)

    def literal_prob(self, state, lit) -> Fraction:
        if isinstance(lit, NodeLit):
            if any(c not in "01" for c in lit.path):
                raise CapabilityError(f"tree node path must be a 0/1 string: {lit.path!r}")
            return Fraction(1, 2 ** len(lit.path))
        if isinstance(lit, EqLit):
            return Fraction(0)
        raise CapabilityError(f"unsupported literal {lit!r} for binary_tree")

    @staticmethod
    def node_below(state: SampleState, path: str, point: int) -> bool:
        branch: _LazyBranch = state.aux[point - 1]
        return branch.prefix(len(path)) == path


class _LazyBranch:
    __slots__ = ("rng", "bits")

    def __init__(self, rng: Stream):
        self.rng = rng
        self.bits: list[int] = []

    def bit(self, depth: int) -> int:
        while len(self.bits) <= depth:
            self.bits.append(self.rng.next_bit())
        return self.bits[depth]

    def prefix(self, length: int) -> str:
        return "".join(str(self.bit(i)) for i in range(length))


def _first_difference(a: _LazyBranch, b: _LazyBranch) -> int:
    depth = 0
    while a.bit(depth) == b.bit(depth):
        depth += 1
        if depth > HARD_TIE_CAP:  # pragma: no cover
            raise KernelError("branch comparison exceeded hard cap")
    return depth


class BallLanguageKernel(Kernel):
    """Uniform coordinate observed through finitely many rational balls.

    A truncation of the infinite cut language: the config fixes the ball
    family, the kernel records membership facts for each sampled point.
    """

    def __init__(self, balls: Sequence[tuple[Fraction, Fraction]], seed: int = 0):
        if not balls:
            raise ConfigError("at least one ball required", pointer="/balls")
        names = [f"B{i}" for i in range(1, len(balls) + 1)]
        sig = Signature(tuple(Relation(nm, 1) for nm in names))
        params = {"balls": [[rational_str(p), rational_str(q)] for p, q in balls]}
        super().__init__("ball_language", params, sig, "continuous", None, seed)
        self.balls = list(balls)

    def _extend(self, state: SampleState) -> None:
        d = state.diagram
        new = d.n + 1
        coord = state.rng.next_unit()
        guard = 0
        while coord in state.aux:
            coord = state.rng.next_unit()
            guard += 1
            if guard > HARD_TIE_CAP:  # pragma: no cover
                raise KernelError("coordinate tie loop exceeded hard cap")
        facts = {}
        for i, (p, q) in enumerate(self.balls, start=1):
            if abs(coord - p) < q:
                facts[f"B{i}"] = [(new,)]
        d._append_trusted(facts)
        state.aux.append(coord)

    def literal_prob(self, state, lit) -> Fraction:
        if isinstance(lit, EqLit):
            return Fraction(0)
        if isinstance(lit, RelLit) and lit.other is None and lit.rel.startswith("B"):
            idx = int(lit.rel[1:])
            p, q = self.balls[idx - 1]
            lo, hi = max(Fraction(0), p - q), min(Fraction(1), p + q)
            length = max(Fraction(0), hi - lo)
            return length if lit.positive else 1 - length
        raise CapabilityError(f"unsupported literal {lit!r} for ball_language")

    def pattern(self, coord: float) -> tuple[bool, ...]:
        return tuple(abs(coord - p) < q for p, q in self.balls)


# ---------------------------------------------------------------------------
# scenario registry and config loading

_RATIONAL = {"type": "string", "pattern": r"^-?\d+(/\d+)?$"}
_SEED = {"type": "integer", "minimum": 0}


def _schema(scenario: str, extra_props: dict, required: list[str]) -> dict:
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": f"{scenario} scenario config",
        "type": "object",
        "properties": {"scenario": {"const": scenario}, "seed": _SEED, **extra_props},
        "required": ["scenario"] + required,
        "additionalProperties": False,
    }


SCENARIO_SCHEMAS: dict[str, dict] = {
    "coin_flip_graph": _schema("coin_flip_graph", {"t": _RATIONAL}, ["t"]),
    "lebesgue_dlo": _schema("lebesgue_dlo", {}, []),
    "finite_point_mass": _schema("finite_point_mass", {
        "weights": {"type": "object", "additionalProperties": _RATIONAL, "minProperties": 1},
        "structure": {
            "oneOf": [
                {"type": "string", "enum": ["four_point_equivalence"]},
                {
                    "type": "object",
                    "properties": {
                        "universe": {"type": "array", "items": {"type": "string"},
                                     "minItems": 1},
                        "relations": {"type": "object", "additionalProperties": {
                            "type": "array",
                            "items": {"type": "array", "items": {"type": "string"}}}},
                        "symmetric": {"type": "array", "items": {"type": "string"}},
                        "arities": {"type": "object",
                                    "additionalProperties": {"type": "integer", "minimum": 1}},
                    },
                    "required": ["universe", "relations"],
                    "additionalProperties": False,
                },
            ]
        },
    }, ["weights", "structure"]),
    "two_cuts": _schema("two_cuts", {
        "weights": {"type": "object",
                    "properties": {"mid_upper": _RATIONAL, "mid_lower": _RATIONAL},
                    "required": ["mid_upper", "mid_lower"], "additionalProperties": False},
    }, []),
    "four_types": _schema("four_types", {
        "weights": {"type": "object",
                    "properties": {n: _RATIONAL for n in
                                   ("sup", "inf", "mid_upper", "mid_lower")},
                    "additionalProperties": False, "minProperties": 1},
    }, []),
    "dlo_delta": _schema("dlo_delta", {}, []),
    "marked_chain": _schema("marked_chain", {
        "weights": {"type": "object",
                    "properties": {"marked": _RATIONAL, "plain": _RATIONAL},
                    "required": ["marked", "plain"], "additionalProperties": False},
    }, []),
    "henson_delta": _schema("henson_delta", {}, []),
    "binary_tree": _schema("binary_tree", {}, []),
    "ball_language": _schema("ball_language", {
        "balls": {"type": "array", "minItems": 1,
                  "items": {"type": "array", "prefixItems": [_RATIONAL, _RATIONAL],
                            "minItems": 2, "maxItems": 2}},
        "count": {"type": "integer", "minimum": 1, "maximum": 64},
    }, []),
}

# the four canonical cut types of the real line
_SUP = OrderLabel("sup", block=3, ascending=True)
_INF = OrderLabel("inf", block=0, ascending=False)
_MID_UPPER = OrderLabel("mid_upper", block=2, ascending=False)
_MID_LOWER = OrderLabel("mid_lower", block=1, ascending=True)


def _weights_from(cfg: Mapping, names: Sequence[str], default: dict[str, Fraction]) -> dict:
    raw = cfg.get("weights")
    if raw is None:
        return dict(default)
    w = {}
    for name in raw:
        if name not in names:
            raise ConfigError(f"unknown label {name!r}", pointer="/weights")
        w[name] = parse_rational(raw[name])
    return w


def _build_coin_flip(cfg, seed):
    return CoinFlipGraphKernel(parse_rational(cfg["t"]), seed)


def _build_lebesgue(cfg, seed):
    return LebesgueDloKernel(seed)


def _build_point_mass(cfg, seed):
    structure = cfg["structure"]
    if structure == "four_point_equivalence":
        struct = four_point_equivalence()
        params_struct = structure
    else:
        struct = FiniteStructure(structure["universe"], structure["relations"],
                                 structure.get("symmetric", ()),
                                 structure.get("arities"))
        params_struct = structure
    weights = {e: parse_rational(v) for e, v in cfg["weights"].items()}
    sem = PointMassSemantics(struct, weights)
    params = {"structure": params_struct,
              "weights": {e: rational_str(w) for e, w in weights.items()}}
    k = LabelKernel("finite_point_mass", sem, params, "point_mass", "finite", seed)
    k.structure = struct
    return k


def _build_two_cuts(cfg, seed):
    half = Fraction(1, 2)
    weights = _weights_from(cfg, ("mid_upper", "mid_lower"),
                            {"mid_upper": half, "mid_lower": half})
    sem = OrderSemantics((_MID_UPPER, _MID_LOWER), weights)
    params = {"weights": {n: rational_str(w) for n, w in weights.items()}}
    return LabelKernel("two_cuts", sem, params, "symbolic", "dlo", seed)


def _build_four_types(cfg, seed):
    quarter = Fraction(1, 4)
    names = ("sup", "inf", "mid_upper", "mid_lower")
    weights = _weights_from(cfg, names, {n: quarter for n in names})
    labels = tuple(l for l in (_SUP, _INF, _MID_UPPER, _MID_LOWER) if l.name in weights)
    sem = OrderSemantics(labels, weights)
    params = {"weights": {n: rational_str(w) for n, w in weights.items()}}
    return LabelKernel("four_types", sem, params, "symbolic", "dlo", seed)


def _build_dlo_delta(cfg, seed):
    sem = OrderSemantics((_SUP,), {"sup": Fraction(1)})
    return LabelKernel("dlo_delta", sem, {}, "symbolic", "dlo", seed)


def _build_marked_chain(cfg, seed):
    half = Fraction(1, 2)
    weights = _weights_from(cfg, ("marked", "plain"), {"marked": half, "plain": half})
    labels = (OrderLabel("marked", block=0, ascending=True, unary=("P",)),
              OrderLabel("plain", block=0, ascending=True))
    sem = OrderSemantics(labels, weights, unary_rels=("P",))
    params = {"weights": {n: rational_str(w) for n, w in weights.items()}}
    return LabelKernel("marked_chain", sem, params, "symbolic", None, seed)


def _build_henson(cfg, seed):
    return LabelKernel("henson_delta", HensonSemantics(), {}, "symbolic",
                       "henson_empty", seed)


def _build_binary_tree(cfg, seed):
    return BinaryTreeKernel(seed)


def _build_ball(cfg, seed):
    if "balls" in cfg:
        balls = [(parse_rational(p), parse_rational(q)) for p, q in cfg["balls"]]
    elif "count" in cfg:
        k = cfg["count"]
        balls = [(Fraction(i, k + 1), Fraction(1, 2 * (k + 1))) for i in range(1, k + 1)]
    else:
        raise ConfigError("ball_language needs 'balls' or 'count'", pointer="/balls")
    for p, q in balls:
        if q <= 0:
            raise ConfigError("ball radius must be positive", pointer="/balls")
    return BallLanguageKernel(balls, seed)


_BUILDERS = {
    "coin_flip_graph": _build_coin_flip,
    "lebesgue_dlo": _build_lebesgue,
    "finite_point_mass": _build_point_mass,
    "two_cuts": _build_two_cuts,
    "four_types": _build_four_types,
    "dlo_delta": _build_dlo_delta,
    "marked_chain": _build_marked_chain,
    "henson_delta": _build_henson,
    "binary_tree": _build_binary_tree,
    "ball_language": _build_ball,
}


def scenario_names() -> list[str]:
    return sorted(_BUILDERS)


def scenario_load(cfg: Mapping[str, Any]) -> Kernel:
    """Validate a scenario config and build its kernel (deterministic)."""
    if not isinstance(cfg, Mapping):
        raise ConfigError(f"config must be a JSON object, got {type(cfg).__name__}")
    name = cfg.get("scenario")
    if name not in _BUILDERS:
        raise ConfigError(
            f"unknown scenario {name!r}; registered scenarios: {', '.join(scenario_names())}",
            pointer="/scenario")
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMAS[name])
    errors = sorted(validator.iter_errors(dict(cfg)), key=lambda e: e.json_path)
    if errors:
        e = errors[0]
        raise ConfigError(e.message, pointer=e.json_path.lstrip("$"))
    seed = cfg.get("seed", 0)
    return _BUILDERS[name](cfg, seed)


def sample_next(kernel: Kernel, state: SampleState) -> SampleState:
    return kernel.sample_next(state)


def literal_prob(kernel: Kernel, state: SampleState, lit) -> Fraction | float:
    return kernel.literal_prob(state, lit)
