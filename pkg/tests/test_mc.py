import math

import pytest
from scipy import integrate

from randstruct.events import context_for, parse_event
from randstruct.mc import Estimate, confidence_interval, estimate_event, run_trials


def test_run_trials_rejects_bad_args(coin_flip):
    with pytest.raises(ValueError):
        list(run_trials(coin_flip, 0, 1, 0))
    with pytest.raises(ValueError):
        list(run_trials(coin_flip, 1, 0, 0))


def test_reproducibility_bit_exact(lebesgue):
    ev = parse_event("x1 < x2")
    a = estimate_event(lebesgue, ev, 2, 5000, seed=42)
    b = estimate_event(lebesgue, ev, 2, 5000, seed=42)
    assert a.p_hat == b.p_hat
    assert a.manifest.to_json() == b.manifest.to_json()


def test_parallel_serial_equivalence(lebesgue):
    ev = parse_event("x1 < x2")
    serial = estimate_event(lebesgue, ev, 2, 4001, seed=9, threads=1)
    for threads in (2, 3, 7):
        par = estimate_event(lebesgue, ev, 2, 4001, seed=9, threads=threads)
        assert par.p_hat == serial.p_hat
        assert par.indeterminate == serial.indeterminate


def test_two_uniforms_order(lebesgue):
    est = estimate_event(lebesgue, parse_event("x1 < x2"), 2, 20000, seed=1)
    assert abs(est.p_hat - 0.5) < 4 * est.stderr


def test_first_of_three_is_max(lebesgue):
    # P(first of 3 iid uniforms is the maximum) = 1/3
    ev = parse_event("!(x1 < x2) & !(x1 < x3)")
    est = estimate_event(lebesgue, ev, 3, 50000, seed=2)
    assert abs(est.p_hat - 1 / 3) < 4 * est.stderr


@pytest.mark.parametrize("m", [1, 2, 3])
def test_dlo_gap_event_matches_quadrature(lebesgue, m):
    # oracle: mass of {x<y, no later point in (x,y)} from the triangle integral
    oracle, err = integrate.dblquad(lambda x, y: (1 - y + x) ** m, 0, 1, 0, lambda y: y)
    assert err < 1e-10
    gaps = " & ".join(f"!(x1 < x{l} & x{l} < x2)" for l in range(3, m + 3))
    est = estimate_event(lebesgue, parse_event(f"x1 < x2 & {gaps}"), m + 2,
                         50000, seed=3)
    assert abs(est.p_hat - oracle) < 4 * est.stderr


def test_extension_failure_matches_closed_form(coin_flip):
    # no point among 2..4 adjacent to the first: (1 - t)^(L-1)
    ev = parse_event({"not": {"limit_union": {"theta": "R(x1,xl)", "horizon": 4}}})
    est = estimate_event(coin_flip, ev, 4, 40000, seed=4, ctx=context_for(coin_flip))
    assert abs(est.p_hat - 0.125) < 4 * est.stderr


def test_witness_event_through_engine(dlo_delta):
    ev = parse_event({"witness": {"kind": "O", "formula": "dlo_lt", "n": 5}})
    est = estimate_event(dlo_delta, ev, 5, 50, seed=5, ctx=context_for(dlo_delta))
    assert est.p_hat == 1.0 and est.indeterminate == 0


def test_indeterminate_counted_separately(coin_flip):
    # generic fallback on a tiny sample cannot always find witnesses
    ev = parse_event({"witness": {"kind": "O", "formula": "rg_edge", "n": 3}})
    ctx = context_for(coin_flip)
    ctx.theory = None
    ctx.allow_generic = True
    est = estimate_event(coin_flip, ev, 3, 400, seed=6, ctx=ctx)
    assert est.indeterminate > 0
    assert est.p_hat <= 1.0


def test_depth_must_cover_event(lebesgue):
    with pytest.raises(ValueError):
        estimate_event(lebesgue, parse_event("x1 < x5"), 3, 10, seed=0)


# -- confidence intervals ----------------------------------------------------

def test_ci_arithmetic():
    est = Estimate(0.5, 10_000)
    lo, hi = confidence_interval(est, 3.0)
    assert lo == pytest.approx(0.485, abs=1e-9)
    assert hi == pytest.approx(0.515, abs=1e-9)


def test_ci_clamps():
    est = Estimate(0.999, 1000)
    lo, hi = confidence_interval(est, 3.0)
    assert hi <= 1.0 and lo <= 0.999


def test_ci_boundary_zero():
    est = Estimate(0.0, 1000)
    lo, hi = confidence_interval(est, 3.0)
    alpha = 0.5 * math.erfc(3.0 / math.sqrt(2.0))
    assert lo == 0.0
    assert hi == pytest.approx(1.0 - alpha ** (1 / 1000))
    assert 0 < hi < 0.02


def test_ci_boundary_one():
    est = Estimate(1.0, 100)
    lo, hi = confidence_interval(est, 3.0)
    assert hi == 1.0 and 0.9 < lo < 1.0


def test_ci_rejects_bad_z():
    with pytest.raises(ValueError):
        confidence_interval(Estimate(0.5, 10), 0.0)


def test_calibration_known_event(lebesgue):
    # true value 1/2 must land inside the 4-sigma interval in >= 99 of 100
    # re-seeded repetitions
    ev = parse_event("x1 < x2")
    inside = 0
    T = 1000
    for rep in range(100):
        est = estimate_event(lebesgue, ev, 2, T, seed=1000 + rep)
        inside += abs(est.p_hat - 0.5) <= 4 * max(est.stderr, 1e-12)
    assert inside >= 99


def test_manifest_links_event_and_config(coin_flip):
    ev = parse_event("R(x1,x2)")
    est = estimate_event(coin_flip, ev, 2, 100, seed=0)
    m = est.manifest.to_json()
    assert m["config"]["scenario"] == "coin_flip_graph"
    assert m["event"] == {"qf": "R(x1, x2)"}
    assert m["event_hash"] and m["config_hash"]


def test_estimates_serialize(coin_flip):
    est = estimate_event(coin_flip, parse_event("R(x1,x2)"), 2, 100, seed=0)
    blob = est.to_json()
    assert set(blob) >= {"p_hat", "trials", "stderr", "ci99_7", "indeterminate_count"}


def test_empty_base_extension_event(equiv4):
    # "some point up to the horizon realizes this 1-type": empty base diagram
    from randstruct.model import QfDiagram, QfExtensionType
    base = QfDiagram(equiv4.signature)
    target = base.copy()
    target._append(QfExtensionType.make(0, {"E": [(1, 1)]}))
    ev = parse_event({"diag_extension": {"base": base.to_json(),
                                         "target": target.to_json(), "horizon": 2}})
    est = estimate_event(equiv4, ev, 2, 500, seed=8)
    assert est.p_hat == 1.0  # every element is E-reflexive


def test_mc_agrees_with_exact_engine(two_cuts, equiv4):
    # dual route: the sampler and the path enumerator must describe the same
    # measure; check a qf event and a finite-horizon union on both mixtures
    from randstruct.atlas import InvariantTypeAtlas, exact_event_prob, limit_union_horizon
    from randstruct.events import QfEvent
    cases = [
        (two_cuts, {"qf": "x1 < x2"}),
        (two_cuts, {"limit_union": {"theta": "x1 < xl", "horizon": 6}}),
        (equiv4, {"qf": "E(x1,x2) & x1 != x2"}),
        (equiv4, {"limit_union": {"theta": "E(x1,xl) & x1 != xl", "horizon": 6}}),
    ]
    for kernel, spec in cases:
        ev = parse_event(spec)
        atlas = InvariantTypeAtlas.from_kernel(kernel)
        if isinstance(ev, QfEvent):
            want = float(exact_event_prob(atlas, ev.formula))
        else:
            want = float(limit_union_horizon(atlas, ev.theta, ev.horizon))
        est = estimate_event(kernel, ev, ev.min_depth(), 20000, seed=9)
        sigma = max(est.stderr, math.sqrt(max(want * (1 - want), 1e-9) / 20000))
        assert abs(est.p_hat - want) <= 4 * sigma, (spec, est.p_hat, want)
