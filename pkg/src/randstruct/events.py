"""The event language: quantifier-free events, limit unions, diagram
extensions, dividing-line witnesses, and permutation-average experiments.

Events evaluate on sampled states to True / False / None, where None is
an indeterminate outcome (incomplete witness search); the Monte Carlo
engine tallies these separately and never folds them into the estimate.

Formula text uses a small DSL: atoms ``R(x1,x2)``, ``P(x3)``,
``x1 = x2``, ``x1 != x2``, ``x1 < x2``; connectives ``!``, ``&``, ``|``
with the usual precedence and parentheses.  ``xl`` denotes the running
point of a limit-union template.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .atlas import RUNNING_VAR, InvariantTypeAtlas
from .kernels import Kernel, SampleState
from .mc import Estimate, make_manifest
from .rng import Stream
from .model import (
    And,
    Atom,
    Eq,
    Not,
    Or,
    QfDiagram,
    QfFormula,
    diagram_of_tuple,
    free_vars,
    labeled_iso_eq,
    substitute,
)
from .theories import (
    DEFAULT_CHAIN_DIRECTION,
    FORMULA_THEORIES,
    GenericFallback,
    PathView,
    StateView,
    TheoryError,
    TheoryEvaluator,
    check_pairing,
    make_theory,
    theory_for_kernel,
)


class EventError(Exception):
    pass


class ParseError(EventError):
    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"{message} (at position {position})")


# ---------------------------------------------------------------------------
# evaluation context


@dataclass
class EvalContext:
    """Theory evaluator plus fallback policy for witness events."""

    theory: Optional[TheoryEvaluator] = None
    allow_generic: bool = False

    def evaluator_for(self, formula_id: str) -> TheoryEvaluator:
        if self.theory is not None:
            check_pairing(self.theory, formula_id)
            return self.theory
        if self.allow_generic:
            rel = {"dlo_lt": "<", "rg_edge": "R", "henson_edge": "R",
                   "equiv_E": "E"}.get(formula_id, formula_id)
            return GenericFallback(rel)
        raise TheoryError(
            f"no theory evaluator available for formula {formula_id!r}; "
            f"pass allow_generic=True for the in-sample fallback")


def context_for(kernel: Kernel, chain_direction: str = DEFAULT_CHAIN_DIRECTION,
                allow_generic: bool = False) -> EvalContext:
    return EvalContext(theory_for_kernel(kernel, chain_direction), allow_generic)


# ---------------------------------------------------------------------------
# event AST


@dataclass(frozen=True)
class QfEvent:
    formula: QfFormula

    def __post_init__(self):
        if RUNNING_VAR in free_vars(self.formula):
            raise EventError("the running variable xl only appears in limit unions")

    def min_depth(self) -> int:
        return max(free_vars(self.formula), default=1)

    def evaluate(self, state: SampleState, ctx=None) -> bool:
        return state.diagram.evaluate(self.formula)

    def descriptor(self) -> dict:
        return {"qf": render(self.formula)}


@dataclass(frozen=True)
class NotEvent:
    inner: "EventSpec"

    def min_depth(self) -> int:
        return self.inner.min_depth()

    def evaluate(self, state, ctx=None) -> Optional[bool]:
        v = self.inner.evaluate(state, ctx)
        return None if v is None else not v

    def descriptor(self) -> dict:
        return {"not": self.inner.descriptor()}


@dataclass(frozen=True)
class LimitUnionEvent:
    """Some tail point l in (n, horizon] satisfies theta(x_1..x_n, x_l)."""

    theta: QfFormula
    horizon: int

    def __post_init__(self):
        if RUNNING_VAR not in free_vars(self.theta):
            raise EventError("limit-union template must mention the running variable xl")
        if self.horizon < 1:
            raise EventError("horizon must be >= 1")

    @property
    def fixed_depth(self) -> int:
        return max(free_vars(self.theta) - {RUNNING_VAR}, default=0)

    def min_depth(self) -> int:
        return self.horizon

    def evaluate(self, state, ctx=None) -> bool:
        n = self.fixed_depth
        d = state.diagram
        for l in range(n + 1, self.horizon + 1):
            if d.evaluate(substitute(self.theta, {RUNNING_VAR: l})):
                return True
        return False

    def descriptor(self) -> dict:
        return {"limit_union": {"theta": render(self.theta), "horizon": self.horizon}}


@dataclass(frozen=True)
class DiagExtensionEvent:
    """The first points realize `base` and some point l <= horizon extends it to `target`."""

    base: QfDiagram
    target: QfDiagram
    horizon: int

    def __post_init__(self):
        if self.target.n != self.base.n + 1:
            raise EventError("target diagram must extend base by exactly one point")
        if self.horizon <= self.base.n:
            raise EventError("horizon must exceed the base size")

    def min_depth(self) -> int:
        return self.horizon

    def evaluate(self, state, ctx=None) -> bool:
        n = self.base.n
        d = state.diagram
        prefix = list(range(1, n + 1))
        if not labeled_iso_eq(diagram_of_tuple(d, prefix), self.base):
            return False
        for l in range(n + 1, self.horizon + 1):
            if labeled_iso_eq(diagram_of_tuple(d, prefix + [l]), self.target):
                return True
        return False

    def descriptor(self) -> dict:
        return {"diag_extension": {"base": self.base.to_json(),
                                   "target": self.target.to_json(),
                                   "horizon": self.horizon}}


@dataclass(frozen=True)
class WitnessEvent:
    """A dividing-line witness formula on the first n points, permuted by sigma."""

    kind: str
    formula_id: str
    n: int
    sigma: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if self.kind not in ("O", "I", "L"):
            raise EventError(f"witness kind must be O, I, or L, got {self.kind!r}")
        if self.n < 1:
            raise EventError("witness n must be >= 1")
        if self.sigma is not None and sorted(self.sigma) != list(range(1, self.n + 1)):
            raise EventError(f"sigma {self.sigma} is not a permutation of 1..{self.n}")

    def min_depth(self) -> int:
        return self.n

    def evaluate(self, state, ctx: EvalContext) -> Optional[bool]:
        ev = ctx.evaluator_for(self.formula_id)
        return ev.eval_witness(StateView(state), self.kind,
                               list(range(1, self.n + 1)), self.sigma)

    def descriptor(self) -> dict:
        out = {"kind": self.kind, "formula": self.formula_id, "n": self.n}
        if self.sigma is not None:
            out["sigma"] = list(self.sigma)
        return {"witness": out}


@dataclass(frozen=True)
class EventualWitnessEvent:
    """The witness formula on the shifted window x_start .. x_{start+n-1}."""

    kind: str
    formula_id: str
    n: int
    start: int = 1

    def __post_init__(self):
        if self.start < 1 or self.n < 1:
            raise EventError("start and n must be >= 1")

    def min_depth(self) -> int:
        return self.start + self.n - 1

    def evaluate(self, state, ctx: EvalContext) -> Optional[bool]:
        ev = ctx.evaluator_for(self.formula_id)
        window = list(range(self.start, self.start + self.n))
        return ev.eval_witness(StateView(state), self.kind, window)

    def descriptor(self) -> dict:
        return {"eventual": {"kind": self.kind, "formula": self.formula_id,
                             "n": self.n, "start": self.start}}


EventSpec = (QfEvent | NotEvent | LimitUnionEvent | DiagExtensionEvent
             | WitnessEvent | EventualWitnessEvent)


# ---------------------------------------------------------------------------
# formula DSL


def _tokenize(text: str):
    tokens = []
    i, L = 0, len(text)
    while i < L:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "()&|!,<":
            if c == "!" and i + 1 < L and text[i + 1] == "=":
                tokens.append(("NEQ", "!=", i))
                i += 2
                continue
            kind = {"(": "LP", ")": "RP", "&": "AND", "|": "OR", "!": "NOT",
                    ",": "COMMA", "<": "LT"}[c]
            tokens.append((kind, c, i))
            i += 1
            continue
        if c == "=":
            tokens.append(("EQ", "=", i))
            i += 1
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < L and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            if word == "xl":
                tokens.append(("VAR", RUNNING_VAR, i))
            elif word[0] == "x" and word[1:].isdigit():
                idx = int(word[1:])
                if idx < 1:
                    raise ParseError(f"variable index must be >= 1: {word}", i)
                tokens.append(("VAR", idx, i))
            else:
                tokens.append(("NAME", word, i))
            i = j
            continue
        raise ParseError(f"unexpected character {c!r}", i)
    tokens.append(("END", "", L))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.toks[self.pos]

    def take(self, kind=None):
        tok = self.toks[self.pos]
        if kind is not None and tok[0] != kind:
            raise ParseError(f"expected {kind}, found {tok[1]!r}", tok[2])
        self.pos += 1
        return tok

    def parse(self) -> QfFormula:
        f = self.parse_or()
        tok = self.peek()
        if tok[0] != "END":
            raise ParseError(f"unexpected trailing {tok[1]!r}", tok[2])
        return f

    def parse_or(self) -> QfFormula:
        parts = [self.parse_and()]
        while self.peek()[0] == "OR":
            self.take()
            parts.append(self.parse_and())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def parse_and(self) -> QfFormula:
        parts = [self.parse_unary()]
        while self.peek()[0] == "AND":
            self.take()
            parts.append(self.parse_unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def parse_unary(self) -> QfFormula:
        tok = self.peek()
        if tok[0] == "NOT":
            self.take()
            return Not(self.parse_unary())
        if tok[0] == "LP":
            self.take()
            f = self.parse_or()
            self.take("RP")
            return f
        return self.parse_atom()

    def parse_atom(self) -> QfFormula:
        tok = self.peek()
        if tok[0] == "NAME":
            name = self.take()[1]
            self.take("LP")
            args = [self.take("VAR")[1]]
            while self.peek()[0] == "COMMA":
                self.take()
                args.append(self.take("VAR")[1])
            self.take("RP")
            return Atom(name, tuple(args))
        if tok[0] == "VAR":
            left = self.take()[1]
            op = self.take()
            if op[0] == "EQ":
                return Eq(left, self.take("VAR")[1])
            if op[0] == "NEQ":
                return Not(Eq(left, self.take("VAR")[1]))
            if op[0] == "LT":
                return Atom("<", (left, self.take("VAR")[1]))
            raise ParseError(f"expected =, != or < after variable, found {op[1]!r}", op[2])
        raise ParseError(f"expected an atom, found {tok[1]!r}", tok[2])


def parse_formula(text: str) -> QfFormula:
    return _Parser(text).parse()


def _var_name(i: int) -> str:
    return "xl" if i == RUNNING_VAR else f"x{i}"


def render(f: QfFormula) -> str:
    """Inverse of parse_formula, up to parenthesization."""
    if isinstance(f, Atom):
        if f.rel == "<":
            return f"{_var_name(f.args[0])} < {_var_name(f.args[1])}"
        return f"{f.rel}({', '.join(_var_name(a) for a in f.args)})"
    if isinstance(f, Eq):
        return f"{_var_name(f.left)} = {_var_name(f.right)}"
    if isinstance(f, Not):
        if isinstance(f.inner, Eq):
            return f"{_var_name(f.inner.left)} != {_var_name(f.inner.right)}"
        return f"!({render(f.inner)})"
    if isinstance(f, And):
        return " & ".join(f"({render(p)})" for p in f.parts) if f.parts else "x1 = x1"
    return " | ".join(f"({render(p)})" for p in f.parts) if f.parts else "!(x1 = x1)"


DEFAULT_HORIZON = 64


def validate_arities(f: QfFormula, signature) -> None:
    """Check every atom against the signature; raises EventError on mismatch."""
    if isinstance(f, Atom):
        try:
            rel = signature.resolve(f.rel)
        except Exception as e:
            raise EventError(str(e))
        if len(f.args) != rel.arity:
            raise EventError(
                f"relation {rel.name} has arity {rel.arity}, "
                f"atom {render(f)} has {len(f.args)} arguments")
    elif isinstance(f, Not):
        validate_arities(f.inner, signature)
    elif isinstance(f, (And, Or)):
        for p in f.parts:
            validate_arities(p, signature)


def parse_event(spec, signature=None) -> EventSpec:
    """Build an event from DSL text or a JSON object (see the module docstring).

    When a signature is given, atom arities are checked at parse time.
    """
    event = _parse_event(spec)
    if signature is not None:
        if isinstance(event, QfEvent):
            validate_arities(event.formula, signature)
        elif isinstance(event, LimitUnionEvent):
            validate_arities(event.theta, signature)
        elif isinstance(event, NotEvent):
            parse_event(event.inner.descriptor(), signature)
    return event


def _parse_event(spec) -> EventSpec:
    if isinstance(spec, str):
        text = spec.strip()
        if text.startswith("{"):
            import json
            return _parse_event(json.loads(text))
        return QfEvent(parse_formula(text))
    if not isinstance(spec, dict):
        raise EventError(f"event spec must be text or an object, got {type(spec).__name__}")
    if len(spec) != 1:
        raise EventError(f"event object must have exactly one key, got {sorted(spec)}")
    key, body = next(iter(spec.items()))
    if key == "qf":
        return QfEvent(parse_formula(body))
    if key == "not":
        return NotEvent(_parse_event(body))
    if key == "limit_union":
        return LimitUnionEvent(parse_formula(body["theta"]),
                               body.get("horizon", DEFAULT_HORIZON))
    if key == "diag_extension":
        return DiagExtensionEvent(QfDiagram.from_json(body["base"]),
                                  QfDiagram.from_json(body["target"]),
                                  body["horizon"])
    if key == "witness":
        sigma = tuple(body["sigma"]) if "sigma" in body else None
        return WitnessEvent(body["kind"], body["formula"], body["n"], sigma)
    if key == "eventual":
        return EventualWitnessEvent(body["kind"], body["formula"], body["n"],
                                    body.get("start", 1))
    raise EventError(f"unknown event kind {key!r}")


# ---------------------------------------------------------------------------
# operations


def eval_witness(theory: TheoryEvaluator, kind: str, state: SampleState,
                 indices: Sequence[int],
                 sigma: Optional[Sequence[int]] = None) -> Optional[bool]:
    """Decide one witness formula on a realized tuple; None means indeterminate."""
    return theory.eval_witness(StateView(state), kind, indices, sigma)


def witness_prob_sequence(kernel: Kernel, kind: str, formula_id: str, n_max: int,
                          trials: int, seed: int,
                          chain_direction: str = DEFAULT_CHAIN_DIRECTION,
                          allow_generic: bool = False) -> list[Estimate]:
    """Estimates of the n-witness probability for each n <= n_max (identity order).

    One sampling pass serves every n: the events are nested, so each trial
    is evaluated on all of its prefixes.
    """
    if n_max < 1 or trials < 1:
        raise ValueError("n_max and trials must be >= 1")
    ctx = EvalContext(theory_for_kernel(kernel, chain_direction), allow_generic)
    ev = ctx.evaluator_for(formula_id)
    succ = [0] * (n_max + 1)
    indet = [0] * (n_max + 1)
    for trial in range(trials):
        state = kernel.initial_state(seed, trial)
        for _ in range(n_max):
            kernel.sample_next(state)
        view = StateView(state)
        for n in range(1, n_max + 1):
            v = ev.eval_witness(view, kind, list(range(1, n + 1)))
            if v is None:
                indet[n] += 1
            elif v:
                succ[n] += 1
    out = []
    for n in range(1, n_max + 1):
        decided = trials - indet[n]
        p = succ[n] / decided if decided else 0.0
        manifest = make_manifest(kernel, seed, trials, n,
                                 WitnessEvent(kind, formula_id, n).descriptor())
        out.append(Estimate(p, trials, indet[n], manifest))
    return out


def _perm_from_stream(rng, n: int) -> list[int]:
    perm = list(range(1, n + 1))
    for i in range(n - 1, 0, -1):
        j = rng.next_u64() % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


MAX_EXACT_PERM_N = 8


def perm_average(kernel: Kernel, formula_id: str, n: int, mode: str = "exact_enum",
                 trials: int = 1000, seed: int = 0, sigma_samples: int = 10_000,
                 kind: str = "O",
                 chain_direction: str = DEFAULT_CHAIN_DIRECTION) -> Estimate:
    """Average witness probability across permuted variable orders.

    exact_enum averages over all n! permutations (n <= 8); sampled mode
    draws sigma_samples random permutations per run and carries that extra
    sampling error inside the reported stderr.  Deterministic kernels
    (single-type measures) yield an exact rational from a single path.
    """
    if mode not in ("exact_enum", "sampled"):
        raise EventError(f"unknown mode {mode!r}")
    if mode == "exact_enum" and n > MAX_EXACT_PERM_N:
        raise EventError(
            f"exact enumeration is limited to n <= {MAX_EXACT_PERM_N}; use mode='sampled'")
    ctx = EvalContext(theory_for_kernel(kernel, chain_direction))
    ev = ctx.evaluator_for(formula_id)
    sem = kernel.semantics
    deterministic = sem is not None and len(sem.labels) == 1

    descriptor = {"perm_average": {"kind": kind, "formula": formula_id, "n": n,
                                   "mode": mode}}
    if deterministic and mode == "exact_enum":
        state = kernel.initial_state(seed, 0)
        for _ in range(n):
            kernel.sample_next(state)
        view = StateView(state)
        hits = sum(
            bool(ev.eval_witness(view, kind, list(range(1, n + 1)), sigma))
            for sigma in itertools.permutations(range(1, n + 1)))
        exact = Fraction(hits, math.factorial(n))
        manifest = make_manifest(kernel, seed, 1, n, descriptor)
        return Estimate(float(exact), 1, 0, manifest, exact=exact)

    total = indet = evaluated = 0
    trial_means = []
    for trial in range(trials):
        state = kernel.initial_state(seed, trial)
        for _ in range(n):
            kernel.sample_next(state)
        view = StateView(state)
        if mode == "exact_enum":
            sigmas = itertools.permutations(range(1, n + 1))
        else:
            srng = Stream(seed, trial, salt=0x51)
            sigmas = (_perm_from_stream(srng, n) for _ in range(sigma_samples))
        hits = drawn = 0
        for sigma in sigmas:
            v = ev.eval_witness(view, kind, list(range(1, n + 1)), tuple(sigma))
            evaluated += 1
            drawn += 1
            if v is None:
                indet += 1
            elif v:
                total += 1
                hits += 1
        trial_means.append(hits / drawn if drawn else 0.0)
    decided = evaluated - indet
    p = total / decided if decided else 0.0
    manifest = make_manifest(kernel, seed, trials, n, descriptor)
    est = Estimate(p, evaluated, indet, manifest)
    if mode == "sampled":
        # the inner permutation draws add their own noise on top of the
        # per-trial sampling; report it separately
        within = sum(m * (1.0 - m) for m in trial_means) / len(trial_means)
        est.sigma_sampling_stderr = math.sqrt(within / (trials * sigma_samples))
    return est


def subadditivity_check(atlas: InvariantTypeAtlas, kind: str, formula_id: str,
                        k: int, m: int,
                        chain_direction: str = DEFAULT_CHAIN_DIRECTION,
                        structure=None) -> tuple[Fraction, Fraction]:
    """(P[every one of m disjoint k-blocks witnesses], P[one block witnesses]^m).

    Exact over the atlas; the two sides agree because disjoint variable
    blocks are independent, which is what makes the witness probabilities
    a zero-one family.
    """
    if k < 1 or m < 1:
        raise ValueError("k and m must be >= 1")
    theory_id = FORMULA_THEORIES[formula_id]
    theory = make_theory(theory_id,
                         structure or getattr(atlas.semantics, "structure", None),
                         chain_direction)
    depth = k * m
    atlas.check_budget(depth)

    def block_ok(view, b):
        lo = b * k + 1
        return theory.eval_witness(view, kind, list(range(lo, lo + k)))

    total = 0
    for labels, w in atlas.paths(depth):
        view = PathView(atlas.semantics, labels)
        verdicts = [block_ok(view, b) for b in range(m)]
        if any(v is None for v in verdicts):
            raise EventError("evaluator returned indeterminate on an atlas path")
        if all(verdicts):
            total += w
    lhs = Fraction(total, atlas.path_denominator(depth))

    single = 0
    for labels, w in atlas.paths(k):
        v = theory.eval_witness(PathView(atlas.semantics, labels), kind,
                                list(range(1, k + 1)))
        if v:
            single += w
    rhs = Fraction(single, atlas.path_denominator(k)) ** m
    return lhs, rhs


def atlas_witness_prob(atlas: InvariantTypeAtlas, kind: str, formula_id: str, n: int,
                       sigma: Optional[Sequence[int]] = None,
                       chain_direction: str = DEFAULT_CHAIN_DIRECTION,
                       structure=None) -> Fraction:
    """Exact witness probability on the first n points of an atlas measure."""
    theory = make_theory(FORMULA_THEORIES[formula_id],
                         structure or getattr(atlas.semantics, "structure", None),
                         chain_direction)
    total = 0
    for labels, w in atlas.paths(n):
        v = theory.eval_witness(PathView(atlas.semantics, labels), kind,
                                list(range(1, n + 1)), sigma)
        if v is None:
            raise EventError("evaluator returned indeterminate on an atlas path")
        if v:
            total += w
    return Fraction(total, atlas.path_denominator(n))
