"""Command-line surface: scenarios in, reproducible records out.

Every run emits exactly one output record carrying the manifest needed to
reproduce it bit-for-bit.  Sequence-valued results additionally emit a
plot-ready CSV (columns n, p_hat, stderr); CSV is the only plotting
interface, no figures are rendered here.

Seed precedence: scenario config < RANDSTRUCT_SEED < --seed flag.
Exit codes: 0 success, 1 error, 2 indeterminate fraction above the
--max-indeterminate threshold.
"""

from __future__ import annotations

import csv
import json
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

import click

from . import __version__
from .atlas import (
    BudgetExceeded,
    InvariantTypeAtlas,
    exact_event_prob,
    exact_limit_union,
    limit_union_horizon,
)
from .events import (
    LimitUnionEvent,
    QfEvent,
    context_for,
    parse_event,
    perm_average,
    witness_prob_sequence,
)
from .iso import (
    emit_categoricity_axioms,
    extension_axiom_check,
    invariant_divergence,
    pair_success_rate,
    positive_type_catalog,
)
from .kernels import ConfigError, scenario_load
from .mc import estimate_event
from .permvc import PermSet, perm_vc_dim
from .theories import DEFAULT_CHAIN_DIRECTION

SCHEMA_VERSION = 1
ENV_SEED = "RANDSTRUCT_SEED"


class CliError(click.ClickException):
    exit_code = 1


def parse_config(path: str) -> dict:
    """Load and syntax-check a scenario config file."""
    p = Path(path)
    if not p.exists():
        raise CliError(f"scenario file not found: {path}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise CliError(f"scenario file is not valid JSON: {e}")
    if not isinstance(cfg, dict):
        raise CliError("scenario config must be a JSON object")
    return cfg


def load_kernel(path: str, seed_flag):
    cfg = parse_config(path)
    try:
        kernel = scenario_load(cfg)
    except ConfigError as e:
        raise CliError(str(e))
    seed = cfg.get("seed", 0)
    if ENV_SEED in os.environ:
        try:
            seed = int(os.environ[ENV_SEED])
        except ValueError:
            raise CliError(f"{ENV_SEED} must be an integer")
    if seed_flag is not None:
        seed = seed_flag
    return kernel, seed


def _frac_str(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


def write_outputs(record: dict, out: str | None, fmt: str,
                  series: list[dict] | None = None) -> None:
    """One JSON record per run; a CSV alongside for sequence-valued results."""
    text = json.dumps(record, indent=2, default=str)
    if out is None:
        click.echo(text)
    else:
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / f"{record['command']}.json").write_text(text + "\n")
    if series is not None and (fmt == "csv" or out is not None):
        rows = series
        target = Path(out) / f"{record['command']}.csv" if out else None
        if target is not None:
            with target.open("w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
                w.writeheader()
                w.writerows(rows)
        elif fmt == "csv":
            w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0].keys()))
            w.writeheader()
            w.writerows(rows)


def make_record(command: str, args: dict, result, manifest=None, t0: float = 0.0) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "command": command,
        "args": args,
        "manifest": manifest,
        "result": result,
        "duration_s": round(time.perf_counter() - t0, 6),
    }


def _check_indeterminate(est, threshold: float) -> None:
    frac = est.indeterminate / est.trials if est.trials else 0.0
    if frac > threshold:
        click.echo(f"indeterminate fraction {frac:.4f} exceeds {threshold}", err=True)
        sys.exit(2)


scenario_opt = click.option("--scenario", required=True, type=click.Path(),
                            help="Path to a scenario config JSON.")
seed_opt = click.option("--seed", type=int, default=None,
                        help="Seed override (above config and environment).")
out_opt = click.option("--out", type=click.Path(), default=None,
                       help="Directory for the output record.")
fmt_opt = click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
                       default="json", help="Stdout format for series results.")
threads_opt = click.option("--threads", type=int, default=1,
                           help="Worker threads; output is schedule-independent.")
chain_opt = click.option("--chain-direction",
                         type=click.Choice(["shrinking", "growing"]),
                         default=DEFAULT_CHAIN_DIRECTION,
                         help="Orientation of strict-chain witnesses.")


@click.group()
@click.version_option(__version__)
def main():
    """Generic-sampling toolkit: exact engines and Monte Carlo experiments
    over random structure samples."""


@main.command()
@scenario_opt
@seed_opt
@click.option("--depth", type=int, default=4, show_default=True)
@click.option("--trials", type=int, default=1, show_default=True)
@out_opt
@fmt_opt
def sample(scenario, seed, depth, trials, out, fmt):
    """Draw sample prefixes and print their diagrams."""
    t0 = time.perf_counter()
    kernel, seed = load_kernel(scenario, seed)
    from .mc import make_manifest, run_trials
    diagrams = [s.diagram.to_json() for s in run_trials(kernel, depth, trials, seed)]
    manifest = make_manifest(kernel, seed, trials, depth).to_json()
    record = make_record("sample", {"scenario": scenario, "depth": depth,
                                    "trials": trials, "seed": seed},
                         {"diagrams": diagrams}, manifest, t0)
    write_outputs(record, out, fmt)


@main.command()
@scenario_opt
@seed_opt
@click.option("--event", "event_text", required=True,
              help="Event DSL text or inline JSON.")
@out_opt
@fmt_opt
def exact(scenario, seed, event_text, out, fmt):
    """Exact rational probability of an event (type-mixture scenarios only)."""
    t0 = time.perf_counter()
    kernel, seed = load_kernel(scenario, seed)
    try:
        atlas = InvariantTypeAtlas.from_kernel(kernel)
        event = parse_event(event_text, kernel.signature)
        if isinstance(event, QfEvent):
            prob = exact_event_prob(atlas, event.formula)
            result = {"prob": _frac_str(prob)}
        elif isinstance(event, LimitUnionEvent):
            prob = exact_limit_union(atlas, event.theta)
            result = {"prob": _frac_str(prob), "horizon": event.horizon}
            try:
                horizon_p = limit_union_horizon(atlas, event.theta, event.horizon)
                result["horizon_prob"] = _frac_str(horizon_p)
            except BudgetExceeded:
                # the finite horizon is a diagnostic; skip it rather than fail
                result["horizon_prob"] = None
        else:
            raise CliError("the exact engine handles qf and limit_union events")
    except Exception as e:
        if isinstance(e, click.ClickException):
            raise
        raise CliError(str(e))
    record = make_record("exact", {"scenario": scenario, "event": event_text},
                         {**result, "atlas": atlas.descriptor()}, None, t0)
    write_outputs(record, out, fmt)


@main.command()
@scenario_opt
@seed_opt
@click.option("--event", "event_text", required=True)
@click.option("--depth", type=int, required=True)
@click.option("--trials", type=int, default=10_000, show_default=True)
@click.option("--allow-generic", is_flag=True,
              help="Permit the in-sample witness fallback (sound for true only).")
@click.option("--max-indeterminate", type=float, default=0.0, show_default=True)
@threads_opt
@chain_opt
@out_opt
@fmt_opt
def estimate(scenario, seed, event_text, depth, trials, allow_generic,
             max_indeterminate, threads, chain_direction, out, fmt):
    """Monte Carlo estimate of an event probability."""
    t0 = time.perf_counter()
    kernel, seed = load_kernel(scenario, seed)
    try:
        event = parse_event(event_text, kernel.signature)
        ctx = context_for(kernel, chain_direction, allow_generic)
        est = estimate_event(kernel, event, depth, trials, seed, ctx, threads)
    except Exception as e:
        if isinstance(e, click.ClickException):
            raise
        raise CliError(str(e))
    record = make_record("estimate", {"scenario": scenario, "event": event_text,
                                      "depth": depth, "trials": trials, "seed": seed},
                         est.to_json(), est.manifest.to_json(), t0)
    write_outputs(record, out, fmt)
    _check_indeterminate(est, max_indeterminate)


@main.command("perm-avg")
@scenario_opt
@seed_opt
@click.option("--formula", "formula_id", default="dlo_lt", show_default=True)
@click.option("--n", type=int, required=True)
@click.option("--mode", type=click.Choice(["exact_enum", "sampled"]),
              default="exact_enum", show_default=True)
@click.option("--trials", type=int, default=1000, show_default=True)
@click.option("--sigma-samples", type=int, default=10_000, show_default=True)
@chain_opt
@out_opt
@fmt_opt
def perm_avg(scenario, seed, formula_id, n, mode, trials, sigma_samples,
             chain_direction, out, fmt):
    """Average order-witness probability across permuted variable orders."""
    t0 = time.perf_counter()
    kernel, seed = load_kernel(scenario, seed)
    try:
        est = perm_average(kernel, formula_id, n, mode, trials, seed,
                           sigma_samples, chain_direction=chain_direction)
    except Exception as e:
        if isinstance(e, click.ClickException):
            raise
        raise CliError(str(e))
    record = make_record("perm-avg", {"scenario": scenario, "formula": formula_id,
                                      "n": n, "mode": mode, "seed": seed},
                         est.to_json(), est.manifest.to_json(), t0)
    write_outputs(record, out, fmt)


@main.command("witness-seq")
@scenario_opt
@seed_opt
@click.option("--kind", type=click.Choice(["O", "I", "L"]), default="O",
              show_default=True)
@click.option("--formula", "formula_id", default="dlo_lt", show_default=True)
@click.option("--n-max", type=int, default=6, show_default=True)
@click.option("--trials", type=int, default=10_000, show_default=True)
@click.option("--allow-generic", is_flag=True)
@click.option("--max-indeterminate", type=float, default=0.0, show_default=True)
@chain_opt
@out_opt
@fmt_opt
def witness_seq(scenario, seed, kind, formula_id, n_max, trials, allow_generic,
                max_indeterminate, chain_direction, out, fmt):
    """Estimated witness probabilities for each tuple length up to n-max."""
    t0 = time.perf_counter()
    kernel, seed = load_kernel(scenario, seed)
    try:
        ests = witness_prob_sequence(kernel, kind, formula_id, n_max, trials, seed,
                                     chain_direction, allow_generic)
    except Exception as e:
        if isinstance(e, click.ClickException):
            raise
        raise CliError(str(e))
    series = [{"n": i + 1, "p_hat": e.p_hat, "stderr": e.stderr} for i, e in enumerate(ests)]
    record = make_record("witness-seq",
                         {"scenario": scenario, "kind": kind, "formula": formula_id,
                          "n_max": n_max, "trials": trials, "seed": seed},
                         {"series": [e.to_json() for e in ests]},
                         ests[-1].manifest.to_json(), t0)
    write_outputs(record, out, fmt, series=series)
    worst = max(ests, key=lambda e: e.indeterminate)
    _check_indeterminate(worst, max_indeterminate)


@main.command()
@scenario_opt
@seed_opt
@click.option("--pairs", type=int, default=100, show_default=True)
@click.option("--prefix", type=int, default=200, show_default=True)
@click.option("--depth", type=int, default=8, show_default=True)
@click.option("--verbose", is_flag=True, help="Include per-pair traces.")
@out_opt
@fmt_opt
def iso(scenario, seed, pairs, prefix, depth, verbose, out, fmt):
    """Back-and-forth success frequency over independent sample pairs."""
    t0 = time.perf_counter()
    kernel, seed = load_kernel(scenario, seed)
    from .iso import back_forth
    result: dict = {}
    if verbose:
        traces = []
        succ = 0
        for p in range(pairs):
            s1 = kernel.initial_state(seed, 2 * p)
            s2 = kernel.initial_state(seed, 2 * p + 1)
            for _ in range(prefix):
                kernel.sample_next(s1)
                kernel.sample_next(s2)
            ok, trace = back_forth(s1, s2, depth)
            succ += ok
            traces.append({"pair": p, "success": ok, "trace": trace.to_json()})
        result = {"success_rate": succ / pairs, "pairs": pairs, "traces": traces}
        from .mc import make_manifest
        manifest = make_manifest(kernel, seed, pairs, prefix,
                                 {"back_forth": {"depth": depth}}).to_json()
    else:
        est = pair_success_rate(kernel, prefix, depth, pairs, seed)
        result = {"success_rate": est.p_hat, "pairs": pairs}
        manifest = est.manifest.to_json()
    record = make_record("iso", {"scenario": scenario, "pairs": pairs,
                                 "prefix": prefix, "depth": depth, "seed": seed},
                         result, manifest, t0)
    write_outputs(record, out, fmt)


@main.command("ext-check")
@scenario_opt
@seed_opt
@click.option("--n-max", type=int, default=3, show_default=True)
@click.option("--trials", type=int, default=4000, show_default=True)
@out_opt
@fmt_opt
def ext_check(scenario, seed, n_max, trials, out, fmt):
    """Measure-extension-axiom report: conditional extensions and order findings."""
    t0 = time.perf_counter()
    kernel, seed = load_kernel(scenario, seed)
    try:
        catalog = positive_type_catalog(kernel, n_max, trials=trials, seed=seed)
        report = extension_axiom_check(kernel, catalog, trials=trials, seed=seed)
    except Exception as e:
        if isinstance(e, click.ClickException):
            raise
        raise CliError(str(e))
    record = make_record("ext-check", {"scenario": scenario, "n_max": n_max,
                                       "trials": trials, "seed": seed},
                         report, None, t0)
    write_outputs(record, out, fmt)


@main.command()
@scenario_opt
@seed_opt
@click.option("--n-max", type=int, default=3, show_default=True)
@click.option("--trials", type=int, default=4000, show_default=True)
@out_opt
@fmt_opt
def axioms(scenario, seed, n_max, trials, out, fmt):
    """Emit the categoricity axiom schemas for the almost-sure structure."""
    t0 = time.perf_counter()
    kernel, seed = load_kernel(scenario, seed)
    try:
        catalog = positive_type_catalog(kernel, n_max, trials=trials, seed=seed)
        sentences = emit_categoricity_axioms(catalog)
    except Exception as e:
        if isinstance(e, click.ClickException):
            raise
        raise CliError(str(e))
    record = make_record("axioms", {"scenario": scenario, "n_max": n_max, "seed": seed},
                         {"axioms": sentences}, None, t0)
    write_outputs(record, out, fmt)
    if out is not None:
        listing = "\n".join(f"[{ax['schema']}/{ax['n']}] {ax['text']}" for ax in sentences)
        (Path(out) / "axioms.txt").write_text(listing + "\n")


@main.command()
@click.option("--permset", type=click.Path(), default=None,
              help="JSON file with {m, perms}.")
@click.option("--sym", type=int, default=None, help="Use the full symmetric group.")
@out_opt
@fmt_opt
def vc(permset, sym, out, fmt):
    """VC dimension of a permutation set, with a pattern witness."""
    t0 = time.perf_counter()
    if (permset is None) == (sym is None):
        raise CliError("give exactly one of --permset or --sym")
    try:
        if permset is not None:
            obj = json.loads(Path(permset).read_text())
            pset = PermSet.from_json(obj)
        else:
            pset = PermSet.full(sym)
        dim, witness = perm_vc_dim(pset)
    except Exception as e:
        if isinstance(e, click.ClickException):
            raise
        raise CliError(str(e))
    result = {"m": pset.m, "size": len(pset.perms), "vc_dim": dim,
              "witness": witness.to_json() if witness else None}
    record = make_record("vc", {"permset": permset, "sym": sym}, result, None, t0)
    write_outputs(record, out, fmt)


@main.command()
@scenario_opt
@seed_opt
@click.option("--extractor", required=True,
              type=click.Choice(["label_sequence", "ball_pattern"]))
@click.option("--depth", type=int, default=4, show_default=True)
@click.option("--pairs", type=int, default=2000, show_default=True)
@out_opt
@fmt_opt
def divergence(scenario, seed, extractor, depth, pairs, out, fmt):
    """Agreement probability of the extracted invariant across sample pairs."""
    t0 = time.perf_counter()
    kernel, seed = load_kernel(scenario, seed)
    try:
        est = invariant_divergence(kernel, extractor, depth, pairs, seed)
    except Exception as e:
        if isinstance(e, click.ClickException):
            raise
        raise CliError(str(e))
    record = make_record("divergence", {"scenario": scenario, "extractor": extractor,
                                        "depth": depth, "pairs": pairs, "seed": seed},
                         est.to_json(), est.manifest.to_json(), t0)
    write_outputs(record, out, fmt)


if __name__ == "__main__":
    main()
