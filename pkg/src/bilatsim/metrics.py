"""Run accounting, collapse detection and stability scoring."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from typing import TYPE_CHECKING, Sequence

from .config import INTERVAL_FIELDS, ConfigError, Interval, SimConfig
from .trading import TradeRecord

if TYPE_CHECKING:
    from .experiments import ScenarioResult

log = logging.getLogger(__name__)

INTERBANK_SHARE = 0.28
COLLAPSE_POPULATION = 2


@dataclass
class RunSummary:
    total_actions: int
    trading_actions: int
    collapse_step: int | None
    steps_executed: int
    final_population: int
    population_trajectory: list[int]
    trade_log: list[TradeRecord] = field(default_factory=list)
    replication_index: int = 0
    seed: int = 0

    @property
    def trade_fraction(self) -> float:
        return trade_fraction(self)

    @property
    def n_trades(self) -> int:
        return len(self.trade_log)


def trade_fraction(summary) -> float:
    """Share of agent activations that executed at least one unit trade."""
    if summary.total_actions == 0:
        return 0.0
    return summary.trading_actions / summary.total_actions


def detect_collapse(population_trajectory: Sequence[int]) -> int | None:
    """First index at which fewer than two agents are alive, or None."""
    for i, n in enumerate(population_trajectory):
        if n < COLLAPSE_POPULATION:
            return i
    return None


@dataclass(frozen=True)
class StabilityReport:
    outcome_similarity: float
    interbank_alignment: float
    population_stability: float
    verdicts: dict[str, bool]
    parameter: str | None = None
    direction: int = 0
    config_changed: bool = True

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "direction": self.direction,
            "config_changed": self.config_changed,
            "outcome_similarity": self.outcome_similarity,
            "interbank_alignment": self.interbank_alignment,
            "population_stability": self.population_stability,
            "verdicts": dict(self.verdicts),
        }


@dataclass(frozen=True)
class SkippedPerturbation:
    parameter: str
    direction: int
    reason: str

    def to_dict(self) -> dict:
        return {"parameter": self.parameter, "direction": self.direction, "skipped": self.reason}


# verdict thresholds for the three runtime stability criteria
SIMILARITY_TOLERANCE = 0.05
ALIGNMENT_TOLERANCE = 0.06
POPULATION_STABILITY_FLOOR = 0.5


def stability_score(
    baseline: ScenarioResult,
    perturbed: ScenarioResult,
    target_share: float = INTERBANK_SHARE,
) -> StabilityReport:
    base = baseline.replication_summaries
    pert = perturbed.replication_summaries
    if not base or not pert:
        raise ValueError("stability_score needs non-empty replication sets")
    n_agents = baseline.n_agents

    base_mean = math.fsum(s.trade_fraction for s in base) / len(base)
    pert_mean = math.fsum(s.trade_fraction for s in pert) / len(pert)
    # pair replications by index; unmatched ones are compared with the other side's mean
    pert_by_index = {s.replication_index: s.final_population for s in pert}
    pert_pop_mean = math.fsum(pert_by_index.values()) / len(pert_by_index)
    diffs = [
        abs(s.final_population - pert_by_index.get(s.replication_index, pert_pop_mean)) / n_agents
        for s in base
    ]
    similarity = abs(base_mean - pert_mean) + math.fsum(diffs) / len(diffs)
    alignment = abs(base_mean - target_share)
    stable = sum(1 for s in base if s.collapse_step is None) / len(base)
    verdicts = {
        "similar_outcomes": similarity <= SIMILARITY_TOLERANCE,
        "interbank_alignment": alignment <= ALIGNMENT_TOLERANCE,
        "stable_population": stable >= POPULATION_STABILITY_FLOOR,
    }
    return StabilityReport(similarity, alignment, stable, verdicts)


def _round(x: float) -> int:
    return int(round(x))


def perturb_config(config: SimConfig, parameter: str, relative: float) -> SimConfig:
    """Scale ``parameter`` by ``1 + relative``, rounded to integers and clamped to valid values.

    Raises ConfigError when the perturbed value is invalid even after clamping.
    """
    if parameter in INTERVAL_FIELDS:
        lo, hi = getattr(config, parameter)
        floor = INTERVAL_FIELDS[parameter]
        new_lo = max(floor, _round(lo * (1 + relative)))
        new_hi = max(floor, _round(hi * (1 + relative)))
        if parameter == "vision_range":
            cap = max(config.grid_width, config.grid_height)
            new_lo, new_hi = min(new_lo, cap), min(new_hi, cap)
        value = Interval(new_lo, new_hi)
    elif parameter in {"grid_width", "grid_height", "n_agents", "regrowth_rate", "max_steps"}:
        floor = 0 if parameter == "regrowth_rate" else 1
        value = max(floor, _round(getattr(config, parameter) * (1 + relative)))
    else:
        names = [f.name for f in fields(SimConfig)]
        if parameter in names:
            raise ValueError(f"parameter {parameter!r} cannot be perturbed numerically")
        raise ValueError(f"unknown SimConfig parameter {parameter!r}")
    return config.with_(**{parameter: value}).validate()


def sensitivity_sweep(
    config: SimConfig,
    perturbation: float,
    parameters: Sequence[str],
    workers: int | None = None,
) -> list[StabilityReport | SkippedPerturbation]:
    """Score each parameter perturbed by -perturbation and +perturbation against the baseline."""
    from .experiments import ScenarioSpec, run_scenario

    if perturbation < 0:
        raise ValueError("perturbation must be non-negative")
    for p in parameters:
        if p not in {f.name for f in fields(SimConfig)}:
            raise ValueError(f"unknown SimConfig parameter {p!r}")

    baseline = run_scenario(ScenarioSpec("baseline", config), workers=workers)
    out: list[StabilityReport | SkippedPerturbation] = []
    for parameter in parameters:
        for direction in (-1, 1):
            try:
                perturbed_config = perturb_config(config, parameter, direction * perturbation)
            except ConfigError as exc:
                log.warning("skipping %s %+d: %s", parameter, direction, exc)
                out.append(SkippedPerturbation(parameter, direction, str(exc)))
                continue
            if perturbed_config == config:
                perturbed = baseline
            else:
                perturbed = run_scenario(ScenarioSpec(f"{parameter}{direction:+d}", perturbed_config), workers=workers)
            report = stability_score(baseline, perturbed)
            out.append(
                StabilityReport(
                    report.outcome_similarity,
                    report.interbank_alignment,
                    report.population_stability,
                    report.verdicts,
                    parameter=parameter,
                    direction=direction,
                    config_changed=perturbed_config != config,
                )
            )
    return out


def mean_similarity(reports: Sequence[StabilityReport | SkippedPerturbation]) -> float:
    scored = [r.outcome_similarity for r in reports if isinstance(r, StabilityReport)]
    return math.fsum(scored) / len(scored) if scored else 0.0
