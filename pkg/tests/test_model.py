import pytest
from hypothesis import given, settings, strategies as st

from randstruct.model import (
    And,
    Atom,
    Eq,
    InconsistentExtension,
    IndexOutOfRange,
    Not,
    Or,
    QfDiagram,
    QfExtensionType,
    Relation,
    Signature,
    SignatureMismatch,
    UnboundVariable,
    diagram_extend,
    diagram_of_tuple,
    eval_qf,
    free_vars,
    labeled_iso_eq,
    substitute,
)

GRAPH = Signature((Relation("R", 2, symmetric=True),))
ORDER = Signature((Relation("<", 2, is_order=True),))
EQUIV = Signature((Relation("E", 2, symmetric=True),))


def graph_diagram(n, edges):
    d = QfDiagram(GRAPH)
    for i in range(1, n + 1):
        facts = [(a, b) for (a, b) in edges if max(a, b) == i]
        d._append(QfExtensionType.make(i - 1, {"R": facts}))
    return d


def chain_diagram(n):
    d = QfDiagram(ORDER)
    for i in range(1, n + 1):
        d._append(QfExtensionType.make(i - 1, {"<": [(j, i) for j in range(1, i)]}))
    return d


def test_signature_validation():
    with pytest.raises(SignatureMismatch):
        Signature((Relation("R", 2), Relation("R", 1)))
    with pytest.raises(SignatureMismatch):
        Signature((Relation("R", 0),))
    with pytest.raises(SignatureMismatch):
        Signature((Relation("a", 2, is_order=True), Relation("b", 2, is_order=True)))


def test_extend_base_case():
    d = QfDiagram(GRAPH)
    d2 = diagram_extend(d, QfExtensionType.make(0))
    assert d2.n == 1 and d.n == 0
    assert not d2.holds("R", (1, 1))


def test_extend_path_example():
    # two isolated vertices; new point adjacent to 1 only -> path 3-1, 2 isolated
    d = graph_diagram(2, [])
    d3 = diagram_extend(d, QfExtensionType.make(2, {"R": [(1, 3)]}))
    assert d3.holds("R", (1, 3)) and d3.holds("R", (3, 1))
    assert not d3.holds("R", (2, 3))


def test_extend_with_identification():
    d = QfDiagram(EQUIV)
    d = diagram_extend(d, QfExtensionType.make(0, {"E": [(1, 1)]}))
    d2 = diagram_extend(d, QfExtensionType.make(1, {"E": [(1, 2), (2, 2)]}, equal_to=1))
    assert d2.same_point(1, 2)
    assert d2.classes() == [(1, 2)]


def test_extend_identification_contradiction():
    d = QfDiagram(GRAPH)
    d = diagram_extend(d, QfExtensionType.make(0))
    # new point claims an edge to the point it equals: loops were absent before
    with pytest.raises(InconsistentExtension) as exc:
        diagram_extend(d, QfExtensionType.make(1, {"R": [(1, 2)]}, equal_to=1))
    assert "R" in str(exc.value)


def test_extend_identification_omission():
    d = QfDiagram(EQUIV)
    d = diagram_extend(d, QfExtensionType.make(0, {"E": [(1, 1)]}))
    with pytest.raises(InconsistentExtension):
        # omitting E(2,2) contradicts identification with point 1
        diagram_extend(d, QfExtensionType.make(1, equal_to=1))


def test_extend_wrong_base():
    with pytest.raises(InconsistentExtension):
        diagram_extend(QfDiagram(GRAPH), QfExtensionType.make(3))


def test_restrict_identity_and_relabel():
    d = chain_diagram(3)
    assert labeled_iso_eq(diagram_of_tuple(d, [1, 2, 3]), d)
    r = diagram_of_tuple(d, [3, 1])
    assert r.holds("<", (2, 1)) and not r.holds("<", (1, 2))


def test_restrict_triangle():
    d = graph_diagram(3, [(1, 2), (1, 3), (2, 3)])
    r = diagram_of_tuple(d, [2, 3])
    assert r.n == 2 and r.holds("R", (1, 2))


def test_restrict_errors():
    d = chain_diagram(2)
    with pytest.raises(IndexOutOfRange):
        diagram_of_tuple(d, [1, 3])
    with pytest.raises(IndexOutOfRange):
        diagram_of_tuple(d, [1, 1])


def test_eval_basic():
    d = graph_diagram(2, [(1, 2)])
    assert eval_qf(d, Atom("R", (1, 2)))
    # symmetric storage: the reversed atom holds as well
    assert not eval_qf(d, And((Atom("R", (2, 1)), Not(Atom("R", (1, 2))))))
    with pytest.raises(UnboundVariable):
        eval_qf(d, Atom("R", (1, 3)))


def test_iso_eq():
    d1 = graph_diagram(3, [(1, 2)])
    d2 = graph_diagram(3, [(1, 3)])
    assert labeled_iso_eq(d1, d1)
    assert not labeled_iso_eq(d1, d2)
    with pytest.raises(SignatureMismatch):
        labeled_iso_eq(d1, chain_diagram(3))


def test_substitute_and_free_vars():
    f = And((Atom("R", (1, 2)), Not(Eq(2, 3))))
    assert free_vars(f) == {1, 2, 3}
    g = substitute(f, {2: 5})
    assert free_vars(g) == {1, 5, 3}


def test_json_round_trip():
    d = graph_diagram(3, [(1, 2), (2, 3)])
    d2 = QfDiagram.from_json(d.to_json())
    assert labeled_iso_eq(d, d2)


# -- property tests ---------------------------------------------------------

edge_lists = st.integers(1, 5).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.sets(st.tuples(st.integers(1, n), st.integers(1, n)).filter(
            lambda e: e[0] != e[1]))))


@given(edge_lists, st.data())
@settings(max_examples=60, deadline=None)
def test_extend_then_restrict_round_trip(ne, data):
    n, edges = ne
    d = graph_diagram(n, sorted(tuple(sorted(e)) for e in edges))
    new_edges = data.draw(st.sets(st.integers(1, n)))
    ext = QfExtensionType.make(n, {"R": [(j, n + 1) for j in sorted(new_edges)]})
    bigger = diagram_extend(d, ext)
    assert labeled_iso_eq(diagram_of_tuple(bigger, list(range(1, n + 1))), d)


@given(edge_lists, st.data())
@settings(max_examples=60, deadline=None)
def test_restrict_composes(ne, data):
    n, edges = ne
    d = graph_diagram(n, sorted(tuple(sorted(e)) for e in edges))
    first = data.draw(st.permutations(range(1, n + 1)).map(
        lambda p: list(p)[: data.draw(st.integers(1, n))]))
    second = data.draw(st.permutations(range(1, len(first) + 1)).map(
        lambda p: list(p)[: data.draw(st.integers(1, len(first)))]))
    once = diagram_of_tuple(d, [first[k - 1] for k in second])
    twice = diagram_of_tuple(diagram_of_tuple(d, first), second)
    assert labeled_iso_eq(once, twice)


formulas = st.deferred(lambda: st.one_of(
    st.tuples(st.integers(1, 3), st.integers(1, 3)).map(lambda a: Atom("R", a)),
    st.tuples(st.integers(1, 3), st.integers(1, 3)).map(lambda a: Eq(*a)),
    formulas.map(Not),
    st.lists(formulas, max_size=3).map(lambda fs: And(tuple(fs))),
    st.lists(formulas, max_size=3).map(lambda fs: Or(tuple(fs))),
))


@given(edge_lists.filter(lambda ne: ne[0] >= 3), formulas, formulas)
@settings(max_examples=80, deadline=None)
def test_eval_is_boolean_homomorphism(ne, f, g):
    n, edges = ne
    d = graph_diagram(n, sorted(tuple(sorted(e)) for e in edges))
    assert eval_qf(d, And((f, g))) == (eval_qf(d, f) and eval_qf(d, g))
    assert eval_qf(d, Or((f, g))) == (eval_qf(d, f) or eval_qf(d, g))
    assert eval_qf(d, Not(f)) == (not eval_qf(d, f))


@given(st.lists(st.sets(st.integers(1, 8)), min_size=1, max_size=8))
@settings(max_examples=40, deadline=None)
def test_trusted_append_matches_validated_append(neighbor_sets):
    # the kernels' hot path must agree with the checked one-point extension
    slow = QfDiagram(GRAPH)
    fast = QfDiagram(GRAPH)
    for i, nbrs in enumerate(neighbor_sets, start=1):
        facts = [(j, i) for j in sorted(nbrs) if j < i]
        slow = diagram_extend(slow, QfExtensionType.make(i - 1, {"R": facts}))
        fast._append_trusted({"R": facts})
    assert labeled_iso_eq(slow, fast)
