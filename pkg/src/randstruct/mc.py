"""Seeded, reproducible Monte Carlo estimation with run manifests.

Each trial samples an independent prefix on its own (seed, trial)
substream, so estimates are bit-identical across runs, schedules, and
worker counts: the per-trial tallies are summed, and summing is
order-free.  Boundary confidence intervals use the exact binomial
one-sided bound because many of the events here truly have probability
0 or 1.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Optional, Protocol

from . import __version__
from .kernels import Kernel, SampleState


class Event(Protocol):
    def evaluate(self, state: SampleState, ctx) -> Optional[bool]: ...
    def min_depth(self) -> int: ...
    def descriptor(self) -> dict: ...


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce a run bit-exactly."""

    config: dict
    config_hash: str
    seed: int
    trials: int
    depth: int
    event: Optional[dict] = None
    version: str = __version__

    @property
    def event_hash(self) -> Optional[str]:
        if self.event is None:
            return None
        blob = json.dumps(self.event, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "trials": self.trials,
            "depth": self.depth,
            "event": self.event,
            "event_hash": self.event_hash,
            "version": self.version,
        }


@dataclass
class Estimate:
    """Monte Carlo result; indeterminate trials are counted, never folded into p_hat."""

    p_hat: float
    trials: int
    indeterminate: int = 0
    manifest: Optional[RunManifest] = None
    exact: Optional[Fraction] = None  # set when the kernel is deterministic
    #: extra error from sampling inner permutations, when the run drew them
    sigma_sampling_stderr: Optional[float] = None

    @property
    def decided(self) -> int:
        return self.trials - self.indeterminate

    @property
    def stderr(self) -> float:
        if self.decided <= 0:
            return 0.0
        return math.sqrt(self.p_hat * (1.0 - self.p_hat) / self.decided)

    @property
    def ci99_7(self) -> tuple[float, float]:
        return confidence_interval(self, 3.0)

    def to_json(self) -> dict:
        lo, hi = self.ci99_7
        out = {
            "p_hat": self.p_hat,
            "trials": self.trials,
            "indeterminate_count": self.indeterminate,
            "stderr": self.stderr,
            "ci99_7": [lo, hi],
        }
        if self.exact is not None:
            out["exact"] = f"{self.exact.numerator}/{self.exact.denominator}"
        if self.sigma_sampling_stderr is not None:
            out["sigma_sampling_stderr"] = self.sigma_sampling_stderr
        if self.manifest is not None:
            out["manifest"] = self.manifest.to_json()
        return out


def make_manifest(kernel: Kernel, seed: int, trials: int, depth: int,
                  event: Optional[dict] = None) -> RunManifest:
    return RunManifest(kernel.config_echo(), kernel.config_hash(), seed, trials,
                       depth, event)


def run_trials(kernel: Kernel, depth: int, trials: int, seed: int) -> Iterator[SampleState]:
    """T independent prefixes of the given depth; trial i uses substream (seed, i)."""
    if trials < 1 or depth < 1:
        raise ValueError("trials and depth must be >= 1")
    for trial in range(trials):
        state = kernel.initial_state(seed, trial)
        for _ in range(depth):
            kernel.sample_next(state)
        yield state


def _tally(kernel: Kernel, event, ctx, depth: int, seed: int,
           lo: int, hi: int) -> tuple[int, int]:
    succ = indet = 0
    for trial in range(lo, hi):
        state = kernel.initial_state(seed, trial)
        for _ in range(depth):
            kernel.sample_next(state)
        verdict = event.evaluate(state, ctx)
        if verdict is None:
            indet += 1
        elif verdict:
            succ += 1
    return succ, indet


def estimate_event(kernel: Kernel, event, depth: int, trials: int, seed: int,
                   ctx=None, threads: int = 1) -> Estimate:
    """Estimate P(event) over `trials` independent depth-n prefixes.

    The per-trial substreams make the result independent of the worker
    count; threads only change the schedule of the same tallies.
    """
    need = event.min_depth()
    if depth < need:
        raise ValueError(f"event needs depth >= {need}, got {depth}")
    if threads <= 1:
        succ, indet = _tally(kernel, event, ctx, depth, seed, 0, trials)
    else:
        chunk = (trials + threads - 1) // threads
        bounds = [(lo, min(lo + chunk, trials)) for lo in range(0, trials, chunk)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(
                lambda b: _tally(kernel, event, ctx, depth, seed, b[0], b[1]), bounds))
        succ = sum(p[0] for p in parts)
        indet = sum(p[1] for p in parts)
    decided = trials - indet
    p_hat = succ / decided if decided else 0.0
    manifest = make_manifest(kernel, seed, trials, depth, event.descriptor())
    return Estimate(p_hat, trials, indet, manifest)


def confidence_interval(est: Estimate, z: float) -> tuple[float, float]:
    """Normal-approximation interval, with exact binomial bounds at the boundary.

    At p_hat in {0, 1} the normal interval degenerates, so the one-sided
    exact rule applies: with x = 0 successes in T trials, P(p > u) < alpha
    exactly when u >= 1 - alpha^(1/T).
    """
    if z <= 0:
        raise ValueError("z must be positive")
    T = max(est.decided, 1)
    alpha = 0.5 * math.erfc(z / math.sqrt(2.0))
    if est.p_hat <= 0.0:
        return (0.0, 1.0 - alpha ** (1.0 / T))
    if est.p_hat >= 1.0:
        return (alpha ** (1.0 / T), 1.0)
    half = z * est.stderr
    return (max(0.0, est.p_hat - half), min(1.0, est.p_hat + half))
