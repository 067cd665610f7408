import itertools
import math

import pytest
from hypothesis import given, settings, strategies as st

from randstruct.permvc import (
    BudgetExceeded,
    PermSet,
    PermVcError,
    formula_shatter_check,
    perm_vc_dim,
    r_table_tiny,
    witness_perm_set,
)
from randstruct.theories import DloTheory, HensonTheory, RandomGraphTheory, make_theory


def sample(kernel, depth, seed=0, trial=0):
    s = kernel.initial_state(seed, trial)
    for _ in range(depth):
        kernel.sample_next(s)
    return s


# -- perm vc dimension --------------------------------------------------------

def test_vc_of_full_groups():
    assert perm_vc_dim(PermSet.full(2))[0] == 2
    assert perm_vc_dim(PermSet.full(3))[0] == 3
    dim, witness = perm_vc_dim(PermSet.full(4))
    assert dim == 4
    assert witness.positions == (1, 2, 3, 4)
    assert len(witness.patterns) == 24


def test_vc_of_singleton_and_empty():
    assert perm_vc_dim(PermSet.make(5, [(1, 2, 3, 4, 5)]))[0] == 1
    assert perm_vc_dim(PermSet.make(3, []))[0] == 0


def test_vc_two_permutations():
    # two distinct permutations always disagree on some pair of positions
    a = PermSet.make(3, [(1, 2, 3), (1, 3, 2)])
    dim, witness = perm_vc_dim(a)
    assert dim == 2 and witness.positions == (2, 3)


def test_vc_budget_guard():
    with pytest.raises(BudgetExceeded):
        perm_vc_dim(PermSet.make(11, [tuple(range(1, 12))]))


def brute_vc(a: PermSet) -> int:
    if not a.perms:
        return 0
    best = 1
    for k in range(2, a.m + 1):
        for pos in itertools.combinations(range(1, a.m + 1), k):
            pats = set()
            for p in a.perms:
                vals = [p[j - 1] for j in pos]
                pats.add(tuple(sorted(range(len(vals)), key=vals.__getitem__)))
            if len(pats) == math.factorial(k):
                best = max(best, k)
    return best


@given(st.sets(st.permutations([1, 2, 3, 4]).map(tuple), max_size=24))
@settings(max_examples=60, deadline=None)
def test_vc_matches_bruteforce(perms):
    a = PermSet.make(4, perms)
    assert perm_vc_dim(a)[0] == brute_vc(a)


@given(st.sets(st.permutations([1, 2, 3, 4]).map(tuple), min_size=1, max_size=12), st.data())
@settings(max_examples=40, deadline=None)
def test_vc_monotone_under_inclusion(perms, data):
    big = PermSet.make(4, perms)
    sub = data.draw(st.sets(st.sampled_from(sorted(perms)), max_size=len(perms)))
    small = PermSet.make(4, sub)
    assert perm_vc_dim(small)[0] <= perm_vc_dim(big)[0]


def test_permset_json_round_trip():
    a = PermSet.full(3)
    assert PermSet.from_json(a.to_json()) == a


# -- r_k(n) table ---------------------------------------------------------------

def brute_r(k, n):
    perms = list(itertools.permutations(range(1, n + 1)))
    best = 0
    for size in range(len(perms), 0, -1):
        hit = False
        for subset in itertools.combinations(perms, size):
            if brute_vc(PermSet.make(n, subset)) <= k:
                hit = True
                break
        if hit:
            return size
    return 0


def test_r_table_small_values():
    assert r_table_tiny(1, 2) == 1
    assert r_table_tiny(2, 3) == 5
    assert r_table_tiny(3, 4) == 23
    for n in (1, 2, 3, 4):
        for k in range(n, 5):
            assert r_table_tiny(k, n) == math.factorial(n)


def test_r_table_matches_bruteforce_n3():
    for k in (1, 2):
        assert r_table_tiny(k, 3) == brute_r(k, 3)


def test_r_table_n4_k2_bounds():
    # exhaustive-by-exclusion value, sanity-checked against a witness set:
    # every set of that size must avoid shattering some position triple
    val = r_table_tiny(2, 4)
    assert 6 <= val < 24
    assert brute_vc(PermSet.make(4, itertools.permutations([1, 2, 3, 4]))) == 4


def test_r_table_refuses_large_ground():
    with pytest.raises(PermVcError):
        r_table_tiny(2, 5)


# -- witness permutation sets -----------------------------------------------------

def test_dlo_witness_set_is_sorting_singleton(lebesgue):
    theory = DloTheory()
    for trial in range(10):
        s = sample(lebesgue, 4, seed=7, trial=trial)
        a = witness_perm_set(theory, "dlo_lt", s, [1, 2, 3, 4])
        assert len(a.perms) == 1
        (sigma,) = a.perms
        coords = [s.aux[sigma[k] - 1] for k in range(4)]
        assert coords == sorted(coords)


def test_graph_witness_set_is_everything(coin_flip):
    theory = RandomGraphTheory()
    s = sample(coin_flip, 6, seed=8)
    a = witness_perm_set(theory, "rg_edge", s, [1, 2, 3, 4])
    assert a == PermSet.full(4)


def test_witness_set_m1(lebesgue, coin_flip):
    for k, fid, th in ((lebesgue, "dlo_lt", DloTheory()),
                       (coin_flip, "rg_edge", RandomGraphTheory())):
        s = sample(k, 2, seed=9)
        assert witness_perm_set(th, fid, s, [1]).perms == {(1,)}


def test_witness_set_rejects_indeterminate(coin_flip):
    from randstruct.theories import GenericFallback
    s = sample(coin_flip, 4, seed=10)
    with pytest.raises(PermVcError):
        witness_perm_set(GenericFallback("R"), "rg_edge", s, [1, 2, 3, 4])


# -- shattering -------------------------------------------------------------------

def test_dlo_shatters_only_singletons(lebesgue):
    theory = DloTheory()
    s = sample(lebesgue, 4, seed=11)
    res = formula_shatter_check(theory, s, [1, 2], "dlo_lt")
    assert res.size == 1


def test_empty_candidates_trivially_shattered(lebesgue):
    res = formula_shatter_check(DloTheory(), sample(lebesgue, 2), [], "dlo_lt")
    assert res.size == 0


def test_graph_shatters_four_points(coin_flip):
    theory = RandomGraphTheory()
    hits = 0
    for trial in range(10):
        s = sample(coin_flip, 400, seed=12, trial=trial)
        res = formula_shatter_check(theory, s, [1, 2, 3, 4], "rg_edge")
        hits += res.size == 4
    assert hits >= 9


def test_henson_shatters_independent_sets(henson):
    theory = HensonTheory()
    s = sample(henson, 5)
    res = formula_shatter_check(theory, s, [1, 2, 3, 4], "henson_edge")
    assert res.size == 4
    assert "triangle-free" in next(iter(res.certificates.values()))


def test_finite_structure_shattering(equiv4):
    theory = make_theory("finite", equiv4.structure)
    s = sample(equiv4, 3, seed=13)
    res = formula_shatter_check(theory, s, [1, 2], "equiv_E")
    # E-balls are the two classes: they separate but cannot shatter two points
    assert res.size <= 1


def test_candidate_cap():
    with pytest.raises(PermVcError):
        formula_shatter_check(DloTheory(), None, list(range(1, 8)), "dlo_lt")


# -- the bound-to-shattering link ---------------------------------------------------

def test_large_witness_set_forces_shattering(coin_flip):
    # |Sym(4)| = 24 exceeds r_3(4) = 23, so the witness set's dimension is 4
    # and a 4-point shattered set must exist for the edge formula
    theory = RandomGraphTheory()
    for trial in range(10):
        s = sample(coin_flip, 400, seed=14, trial=trial)
        a = witness_perm_set(theory, "rg_edge", s, [1, 2, 3, 4])
        assert len(a.perms) > r_table_tiny(3, 4)
        assert perm_vc_dim(a)[0] == 4
        res = formula_shatter_check(theory, s, [1, 2, 3, 4], "rg_edge")
        assert res.size == 4
