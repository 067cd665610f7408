from fractions import Fraction

import pytest

from randstruct.iso import (
    CatalogExplosion,
    IsoError,
    back_forth,
    commuting_mixture_check,
    emit_categoricity_axioms,
    extension_axiom_check,
    invariant_divergence,
    pair_success_rate,
    positive_type_catalog,
)
from randstruct.kernels import scenario_load
from randstruct.model import diagram_of_tuple


def sample(kernel, depth, seed=0, trial=0):
    s = kernel.initial_state(seed, trial)
    for _ in range(depth):
        kernel.sample_next(s)
    return s


# -- back and forth -----------------------------------------------------------

def test_identity_pair_succeeds(coin_flip):
    s = sample(coin_flip, 20, seed=1)
    s2 = sample(coin_flip, 20, seed=1)
    ok, trace = back_forth(s, s2, 10)
    assert ok
    assert len(trace.pairs) == 10
    assert all(st.matched is not None for st in trace.steps)
    # smallest-index strategy on identical samples is the identity map
    assert all(a == b for a, b in trace.pairs)


def test_trace_records_failure(dlo_delta, marked_chain):
    s1 = sample(marked_chain, 10, seed=2, trial=0)
    s2 = sample(marked_chain, 10, seed=2, trial=1)
    ok, trace = back_forth(s1, s2, 8)
    if not ok:
        assert trace.steps[-1].matched is None
        assert trace.steps[-1].reason


def test_partial_iso_preserves_diagrams(coin_flip):
    s1 = sample(coin_flip, 40, seed=3, trial=0)
    s2 = sample(coin_flip, 40, seed=3, trial=1)
    ok, trace = back_forth(s1, s2, 6)
    if ok:
        src = [a for a, _ in trace.pairs]
        tgt = [b for _, b in trace.pairs]
        from randstruct.model import labeled_iso_eq
        for size in range(1, len(src) + 1):
            assert labeled_iso_eq(diagram_of_tuple(s1.diagram, src[:size]),
                                  diagram_of_tuple(s2.diagram, tgt[:size]))


def test_signature_mismatch(coin_flip, lebesgue):
    with pytest.raises(IsoError):
        back_forth(sample(coin_flip, 3), sample(lebesgue, 3), 2)


def test_marked_chain_pairs_rarely_match(marked_chain):
    est = pair_success_rate(marked_chain, 60, 8, 120, seed=4)
    assert est.p_hat <= 0.05


def test_commuting_mixture_property(equiv4, dlo_delta, two_cuts):
    # point masses on a fixed structure commute pairwise: the label matching
    # must always come back an isomorphism once every label occurs enough
    checked, succ = commuting_mixture_check(equiv4, depth=28, d=4, pairs=60, seed=5)
    assert checked > 20
    assert succ == checked
    for k in (dlo_delta, two_cuts):
        checked, succ = commuting_mixture_check(k, depth=16, d=4, pairs=20, seed=5)
        assert checked > 5 and succ == checked


def test_commuting_mixture_negative_control(marked_chain):
    # both marks sit on the same ascending chain, so the label matching breaks
    # whenever the mark sequences interleave differently
    checked, succ = commuting_mixture_check(marked_chain, depth=16, d=6, pairs=40, seed=6)
    assert checked > 10
    assert succ < checked


# -- catalogs -------------------------------------------------------------------

def test_coin_flip_catalog_level_2(coin_flip):
    cat = positive_type_catalog(coin_flip, 2)
    assert cat.fidelity == "analytic"
    probs = sorted(e.prob for e in cat.level(2))
    assert probs == [Fraction(1, 2), Fraction(1, 2)]
    assert cat.level_mass(2) == 1


def test_unbalanced_coin_catalog():
    k = scenario_load({"scenario": "coin_flip_graph", "t": "1/3"})
    cat = positive_type_catalog(k, 2)
    assert sorted(e.prob for e in cat.level(2)) == [Fraction(1, 3), Fraction(2, 3)]


def test_equivalence_catalog_levels(equiv4):
    # over the empty set the three point masses share one 1-type; the pair
    # level separates same-point, same-class, and cross-class draws
    cat = positive_type_catalog(equiv4, 2)
    assert cat.fidelity == "exact"
    assert [e.prob for e in cat.level(1)] == [Fraction(1)]
    assert sorted(e.prob for e in cat.level(2)) == [
        Fraction(1, 8), Fraction(3, 8), Fraction(1, 2)]


def test_lebesgue_catalog_empirical(lebesgue):
    cat = positive_type_catalog(lebesgue, 2, trials=4000, seed=6)
    assert cat.fidelity == "empirical"
    assert len(cat.level(2)) == 2  # both orders, never equality
    for e in cat.level(2):
        assert abs(e.prob - 0.5) < 0.05


def test_catalog_restriction_coherence(coin_flip, equiv4, two_cuts):
    for k in (coin_flip, equiv4, two_cuts):
        assert positive_type_catalog(k, 3).restriction_coherent()


def test_catalog_mass_sums_to_one(coin_flip, two_cuts, equiv4):
    for k in (coin_flip, two_cuts, equiv4):
        cat = positive_type_catalog(k, 3)
        for n in (1, 2, 3):
            assert cat.level_mass(n) == 1


def test_catalog_explosion_guard(coin_flip):
    with pytest.raises(CatalogExplosion):
        positive_type_catalog(coin_flip, 7)


# -- extension axioms -----------------------------------------------------------

def test_coin_flip_extension_axioms_pass(coin_flip):
    cat = positive_type_catalog(coin_flip, 3)
    report = extension_axiom_check(coin_flip, cat)
    assert report["passed"]
    assert all(p["pass"] for p in report["pairs"])
    assert report["order_findings"] == []


def test_lebesgue_extension_axioms_pass(lebesgue):
    cat = positive_type_catalog(lebesgue, 3, trials=4000, seed=8)
    report = extension_axiom_check(lebesgue, cat, trials=4000, seed=8)
    assert report["passed"]


def test_marked_chain_has_order_findings(marked_chain):
    cat = positive_type_catalog(marked_chain, 3)
    report = extension_axiom_check(marked_chain, cat)
    # the mixture extends fine (both marks stay available)...
    assert all(p["pass"] for p in report["pairs"])
    # ...but permuted orderings expose the asymmetry of the product
    assert len(report["order_findings"]) >= 1
    f = report["order_findings"][0]
    assert f["p_identity"] != f["p_sigma"]


def test_two_cuts_fails_some_extension(two_cuts):
    # two descending draws can never sandwich a later point between them:
    # some positive 3-type is unreachable from a positive-measure prefix
    cat = positive_type_catalog(two_cuts, 3)
    report = extension_axiom_check(two_cuts, cat)
    assert any(not p["pass"] for p in report["pairs"])


# -- categoricity axioms ----------------------------------------------------------

def test_graph_extension_axioms_cover_all_patterns(coin_flip):
    cat = positive_type_catalog(coin_flip, 3)
    axioms = emit_categoricity_axioms(cat)
    ext2 = [a for a in axioms if a["schema"] == "extension" and a["n"] == 2]
    patterns = set()
    from randstruct.model import QfDiagram
    for a in ext2:
        d = QfDiagram.from_json(a["target"])
        patterns.add((d.holds("R", (1, 3)), d.holds("R", (2, 3))))
    assert patterns == {(False, False), (False, True), (True, False), (True, True)}


def test_dlo_axioms_include_density_and_unboundedness(lebesgue):
    cat = positive_type_catalog(lebesgue, 3, trials=3000, seed=9)
    axioms = emit_categoricity_axioms(cat)
    from randstruct.model import QfDiagram
    up = down = dense = False
    for a in axioms:
        if a["schema"] != "extension":
            continue
        d = QfDiagram.from_json(a["target"])
        if a["n"] == 1:
            up |= d.holds("<", (1, 2))
            down |= d.holds("<", (2, 1))
        if a["n"] == 2 and d.holds("<", (1, 2)):
            dense |= d.holds("<", (1, 3)) and d.holds("<", (3, 2))
    assert up and down and dense


def test_single_type_axioms_trivial(dlo_delta):
    cat = positive_type_catalog(dlo_delta, 2)
    axioms = emit_categoricity_axioms(cat)
    assert [a["schema"] for a in axioms].count("existence") == 2
    assert any(a["schema"] == "extension" for a in axioms)


def test_axioms_render_dsl_text(coin_flip):
    cat = positive_type_catalog(coin_flip, 2)
    axioms = emit_categoricity_axioms(cat)
    assert all("forall" in a["text"] or "exists" in a["text"] for a in axioms)


# -- divergence -------------------------------------------------------------------

@pytest.mark.parametrize("depth", [1, 2, 3, 4])
def test_marked_chain_label_agreement_decays(marked_chain, depth):
    est = invariant_divergence(marked_chain, "label_sequence", depth, 3000, seed=10)
    want = 2.0 ** -depth
    assert abs(est.p_hat - want) < 4 * max(est.stderr, 1e-3)


def test_ball_pattern_agreement_decreases_with_family_size():
    agree = []
    for count in (2, 4, 8):
        k = scenario_load({"scenario": "ball_language", "count": count})
        agree.append(invariant_divergence(k, "ball_pattern", 2, 2500, seed=11).p_hat)
    assert agree[0] > agree[1] > agree[2]


def test_deterministic_kernel_agrees_always(dlo_delta):
    est = invariant_divergence(dlo_delta, "label_sequence", 5, 50, seed=12)
    assert est.p_hat == 1.0


def test_unknown_extractor(coin_flip):
    with pytest.raises(IsoError):
        invariant_divergence(coin_flip, "nope", 2, 10, seed=0)
