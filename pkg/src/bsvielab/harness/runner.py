"""Experiment execution: configs in, verdicts out."""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .hypotheses import HypothesisReport
from .scenarios import REGISTRY, RegistryEntry, ScenarioOutcome


@dataclass
class ScenarioConfig:
    """One experiment request; unset fields fall back to scenario defaults.

    Mirrors the JSON config document: ``{"scenario": ..., "depth": ...,
    "seed": ..., "trials": ..., "out": ..., "format": ...}``.  CLI flags
    override config fields.
    """

    scenario: str
    depth: int | None = None
    seed: int | None = None
    trials: int | None = None
    out: str | None = None
    format: str = "csv"

    @classmethod
    def from_json(cls, path: str) -> "ScenarioConfig":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        known = {k: doc[k] for k in ("scenario", "depth", "seed", "trials", "out", "format")
                 if k in doc}
        if "scenario" not in known:
            raise ValueError("config document needs a 'scenario' field")
        return cls(**known)


@dataclass
class ComparisonVerdict:
    """Structured outcome of one scenario run."""

    scenario: str
    theorem: str
    hypotheses: HypothesisReport
    conclusion_held: bool
    worst_violation: float
    tolerance: float
    witness: str
    depth: int
    seed: int
    runtime_ms: float
    expected_holds: bool
    details: dict = field(default_factory=dict)

    @property
    def agrees_with_expectation(self) -> bool:
        return self.conclusion_held == self.expected_holds


def resolve(config: ScenarioConfig) -> tuple[RegistryEntry, int, int, int]:
    if config.scenario not in REGISTRY:
        raise KeyError(config.scenario)
    entry = REGISTRY[config.scenario]
    depth = config.depth if config.depth is not None else entry.default_depth
    seed = config.seed if config.seed is not None else entry.default_seed
    trials = config.trials if config.trials is not None else entry.default_trials
    if not 1 <= depth <= 16:
        raise ValueError("depth must be in [1, 16]")
    return entry, depth, seed, trials


def run_experiment(config: ScenarioConfig) -> ComparisonVerdict:
    """Dispatch a scenario and wrap its outcome; deterministic for a fixed seed."""
    entry, depth, seed, trials = resolve(config)
    t0 = time.perf_counter()
    try:
        outcome: ScenarioOutcome = entry.build(depth, seed, trials)
    except Exception as exc:
        raise RuntimeError(f"scenario {config.scenario!r} (depth={depth}, seed={seed}): {exc}") from exc
    elapsed_ms = 1e3 * (time.perf_counter() - t0)
    return ComparisonVerdict(
        scenario=entry.name,
        theorem=outcome.theorem,
        hypotheses=outcome.hypotheses,
        conclusion_held=outcome.conclusion_held,
        worst_violation=outcome.worst_violation,
        tolerance=0.0,
        witness=outcome.witness,
        depth=depth,
        seed=seed,
        runtime_ms=elapsed_ms,
        expected_holds=entry.expected_holds,
        details=dict(outcome.details),
    )


def run_suite(
    seed_offset: int = 0, jobs: int = 1, overrides: dict[str, ScenarioConfig] | None = None
) -> list[ComparisonVerdict]:
    """Run every registry scenario; results ordered by scenario name."""
    configs = []
    for name in sorted(REGISTRY):
        cfg = (overrides or {}).get(name) or ScenarioConfig(scenario=name)
        if seed_offset and REGISTRY[name].default_seed:
            cfg.seed = REGISTRY[name].default_seed + seed_offset
        configs.append(cfg)
    if jobs <= 1:
        verdicts = [run_experiment(c) for c in configs]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            verdicts = list(pool.map(run_experiment, configs))
    return sorted(verdicts, key=lambda v: v.scenario)
