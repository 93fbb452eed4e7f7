"""Named scenarios, replication batches and the hypothesis report."""

from __future__ import annotations

import logging
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .config import Interval, SimConfig
from .engine import run
from .metrics import INTERBANK_SHARE, RunSummary

log = logging.getLogger(__name__)

# Landscape and endowment constants shared by every built-in scenario. The
# agent-defining constants (counts, vision, metabolism, replications) come
# from the reported experiments; these were fixed by a one-off calibration.
LANDSCAPE = dict(
    cell_capacity_range_bonds=Interval(0, 30),
    cell_capacity_range_cash=Interval(0, 30),
    endowment_range_bonds=Interval(1, 1),
    endowment_range_cash=Interval(1, 1),
)
H2B_REGROWTH = 1
SUITE_SEED = 0


@dataclass(frozen=True)
class PaperTarget:
    """Reported outcome for a scenario and the band it is checked against.

    Every field is optional; only the populated ones are checked.
    """

    mean: float | None = None
    tolerance: float | None = None
    mean_below: float | None = None
    median: float | None = None
    median_tolerance: float | None = None
    min_at_most: float | None = None
    max_at_least: float | None = None
    median_collapse_at_most: int | None = None

    def evaluate(self, stats: ScenarioStats) -> dict[str, bool]:
        checks = {}
        if self.mean is not None:
            checks["mean"] = abs(stats.mean - self.mean) <= self.tolerance
        if self.mean_below is not None:
            checks["mean_below"] = stats.mean < self.mean_below
        if self.median is not None:
            checks["median"] = abs(stats.median - self.median) <= self.median_tolerance
        if self.min_at_most is not None:
            checks["min"] = stats.min <= self.min_at_most
        if self.max_at_least is not None:
            checks["max"] = stats.max >= self.max_at_least
        if self.median_collapse_at_most is not None:
            step = stats.median_collapse_step
            checks["median_collapse"] = step is not None and step <= self.median_collapse_at_most
        return checks

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    config: SimConfig
    description: str = ""
    paper_target: PaperTarget | None = None


@dataclass(frozen=True)
class ScenarioStats:
    """Cross-replication aggregates of one scenario."""

    replications: int
    mean: float
    median: float
    min: float
    max: float
    pooled: float
    median_collapse_step: float | None
    collapse_share: float

    @classmethod
    def from_summaries(cls, summaries: Sequence[RunSummary]) -> "ScenarioStats":
        if not summaries:
            raise ValueError("no replication summaries to aggregate")
        # sort first so the fold does not depend on replication order
        fractions = sorted(s.trade_fraction for s in summaries)
        total = sum(s.total_actions for s in summaries)
        trading = sum(s.trading_actions for s in summaries)
        collapse = sorted(math.inf if s.collapse_step is None else s.collapse_step for s in summaries)
        median_collapse = statistics.median(collapse)
        return cls(
            replications=len(summaries),
            mean=math.fsum(fractions) / len(fractions),
            median=statistics.median(fractions),
            min=fractions[0],
            max=fractions[-1],
            pooled=trading / total if total else 0.0,
            median_collapse_step=None if math.isinf(median_collapse) else median_collapse,
            collapse_share=sum(1 for c in collapse if not math.isinf(c)) / len(collapse),
        )

    @property
    def spread(self) -> float:
        return self.max - self.min


@dataclass
class ScenarioResult:
    spec_name: str
    replication_summaries: list[RunSummary]
    stats: ScenarioStats
    n_agents: int
    paper_target: PaperTarget | None = None
    checks: dict[str, bool] = field(default_factory=dict)
    failed_replications: list[tuple[int, str]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    # shorthands for the trade-fraction aggregates
    @property
    def mean(self) -> float:
        return self.stats.mean

    @property
    def median(self) -> float:
        return self.stats.median


def _with_landscape(name: str, description: str, target: PaperTarget | None, **config) -> ScenarioSpec:
    settings = dict(LANDSCAPE, seed=SUITE_SEED)
    settings.update(config)
    return ScenarioSpec(name, SimConfig(**settings).validate(), description, target)


def builtin_scenarios() -> list[ScenarioSpec]:
    return [
        _with_landscape(
            "H1-HOMOG",
            "Four identical agents: narrow vision, high carrying cost, equal endowments.",
            PaperTarget(median_collapse_at_most=25),
            n_agents=4,
            vision_range=Interval(1, 1),
            metabolism_range_bonds=Interval(20, 20),
            metabolism_range_cash=Interval(20, 20),
            endowment_range_bonds=Interval(LANDSCAPE["endowment_range_bonds"].lo, LANDSCAPE["endowment_range_bonds"].lo),
            endowment_range_cash=Interval(LANDSCAPE["endowment_range_cash"].lo, LANDSCAPE["endowment_range_cash"].lo),
        ),
        _with_landscape(
            "H1-A",
            "Four lowly diverse agents, vision and metabolism 1-5.",
            PaperTarget(mean_below=0.02),
            n_agents=4,
            vision_range=Interval(1, 5),
            metabolism_range_bonds=Interval(1, 5),
            metabolism_range_cash=Interval(1, 5),
        ),
        _with_landscape(
            "H1-B",
            "Four agents, vision and metabolism 1-20.",
            PaperTarget(mean=0.034, tolerance=0.02),
            n_agents=4,
            vision_range=Interval(1, 20),
            metabolism_range_bonds=Interval(1, 20),
            metabolism_range_cash=Interval(1, 20),
        ),
        _with_landscape(
            "H1-C",
            "Four agents, vision 1-20, metabolism 1-5.",
            PaperTarget(mean=0.092, tolerance=0.03),
            n_agents=4,
            vision_range=Interval(1, 20),
            metabolism_range_bonds=Interval(1, 5),
            metabolism_range_cash=Interval(1, 5),
        ),
        _with_landscape(
            "H1-D",
            "Sixteen agents, vision and metabolism 1-5.",
            PaperTarget(mean=0.06418, tolerance=0.02),
            n_agents=16,
            vision_range=Interval(1, 5),
            metabolism_range_bonds=Interval(1, 5),
            metabolism_range_cash=Interval(1, 5),
        ),
        _with_landscape(
            "H1-E",
            "One hundred agents, vision and metabolism 1-20.",
            PaperTarget(mean=0.382, tolerance=0.05),
            n_agents=100,
            vision_range=Interval(1, 20),
            metabolism_range_bonds=Interval(1, 20),
            metabolism_range_cash=Interval(1, 20),
        ),
        _with_landscape(
            "H2-A",
            "Four agents, vision 1-10, minimal metabolism.",
            PaperTarget(mean=0.0997, tolerance=0.03),
            n_agents=4,
            vision_range=Interval(1, 10),
            metabolism_range_bonds=Interval(1, 1),
            metabolism_range_cash=Interval(1, 1),
        ),
        _with_landscape(
            "H2-B",
            "Four agents, wide vision, minimal metabolism, regrowing client resources.",
            PaperTarget(mean=0.387, tolerance=0.06),
            n_agents=4,
            vision_range=Interval(1, 20),
            metabolism_range_bonds=Interval(1, 1),
            metabolism_range_cash=Interval(1, 1),
            regrowth_rate=H2B_REGROWTH,
        ),
        _with_landscape(
            "H4-GOLDILOCKS",
            "Four agents seeing the whole grid (vision 50, Moore).",
            PaperTarget(mean=0.291, tolerance=0.05, median=0.237, median_tolerance=0.05, min_at_most=0.10, max_at_least=0.80),
            n_agents=4,
            vision_range=Interval(50, 50),
            metabolism_range_bonds=Interval(1, 5),
            metabolism_range_cash=Interval(1, 5),
            neighborhood="moore",
            replications=100,
        ),
    ]


def get_scenario(name: str) -> ScenarioSpec:
    for spec in builtin_scenarios():
        if spec.name == name:
            return spec
    raise KeyError(f"unknown scenario {name!r}")


def worker_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, requested)
    cap = os.environ.get("BILAT_SIM_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            log.warning("ignoring non-integer BILAT_SIM_THREADS=%r", cap)
    return n


def _run_one(args: tuple[SimConfig, int, bool]) -> tuple[int, RunSummary | None, str | None]:
    config, index, keep_trades = args
    try:
        return index, run(config, index, keep_trades=keep_trades), None
    except Exception as exc:  # recorded per replication, the batch continues
        return index, None, f"{type(exc).__name__}: {exc}"


def run_replications(
    config: SimConfig,
    indices: Iterable[int],
    workers: int | None = None,
    keep_trades: bool = False,
) -> tuple[list[RunSummary], list[tuple[int, str]]]:
    jobs = [(config, i, keep_trades) for i in indices]
    n = worker_count(workers)
    if n == 1 or len(jobs) == 1:
        outcomes = list(map(_run_one, jobs))
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            outcomes = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * n))))
    summaries, failures = [], []
    for index, summary, error in outcomes:
        if error is None:
            summaries.append(summary)
        else:
            log.error("replication %d failed: %s", index, error)
            failures.append((index, error))
    summaries.sort(key=lambda s: s.replication_index)
    return summaries, failures


def run_scenario(
    spec: ScenarioSpec,
    workers: int | None = None,
    replications: int | None = None,
    keep_trades: bool = False,
) -> ScenarioResult:
    """Run every replication of ``spec`` and aggregate.

    Trade logs are dropped from the per-replication summaries unless
    ``keep_trades`` is set; the counts are kept either way.
    """
    config = spec.config if replications is None else spec.config.with_(replications=replications)
    summaries, failures = run_replications(config, range(config.replications), workers, keep_trades)
    stats = ScenarioStats.from_summaries(summaries)
    checks = spec.paper_target.evaluate(stats) if spec.paper_target else {}
    return ScenarioResult(spec.name, summaries, stats, config.n_agents, spec.paper_target, checks, failures)


# --- hypothesis report ------------------------------------------------------

REQUIRED = ("H1-HOMOG", "H1-A", "H1-B", "H1-C", "H1-D", "H1-E", "H2-A", "H2-B", "H4-GOLDILOCKS")
ALIGNMENT_BAND = 0.06
HIGH_VARIANCE_SPREAD = 0.5


class IncompleteReportError(KeyError):
    def __init__(self, missing: Sequence[str]):
        self.missing = list(missing)
        super().__init__(f"missing scenario results: {', '.join(self.missing)}")


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    claim: str
    passed: bool
    detail: str

    def to_dict(self) -> dict:
        return {"name": self.name, "claim": self.claim, "passed": self.passed, "detail": self.detail}


@dataclass
class HypothesisReport:
    checks: list[HypothesisCheck]
    flags: dict[str, bool]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"checks": [c.to_dict() for c in self.checks], "flags": dict(self.flags), "all_passed": self.all_passed}

    def table(self) -> str:
        width = max(len(c.name) for c in self.checks)
        lines = [f"{'check':<{width}}  result  detail"]
        for c in self.checks:
            lines.append(f"{c.name:<{width}}  {'PASS' if c.passed else 'FAIL':<6}  {c.detail}")
        for flag, value in self.flags.items():
            lines.append(f"{flag:<{width}}  {'SET' if value else 'clear':<6}")
        return "\n".join(lines)


def _stats_of(item) -> ScenarioStats:
    return item.stats if isinstance(item, ScenarioResult) else item


def hypothesis_report(results: Mapping[str, ScenarioResult | ScenarioStats]) -> HypothesisReport:
    missing = [name for name in REQUIRED if name not in results]
    if missing:
        raise IncompleteReportError(missing)
    s = {name: _stats_of(results[name]) for name in REQUIRED}

    def less(a: str, b: str, claim: str) -> HypothesisCheck:
        return HypothesisCheck(
            f"{a} < {b}", claim, s[a].mean < s[b].mean, f"{s[a].mean:.4f} vs {s[b].mean:.4f}"
        )

    homog = s["H1-HOMOG"].median_collapse_step
    h4 = s["H4-GOLDILOCKS"]
    checks = [
        HypothesisCheck(
            "H1-HOMOG collapse",
            "identical agents collapse by step 25",
            homog is not None and homog <= 25,
            f"median collapse step {homog}",
        ),
        less("H1-A", "H1-B", "wider vision and metabolism ranges trade more"),
        less("H1-B", "H1-E", "a larger diverse population trades more"),
        less("H1-A", "H1-C", "wider vision trades more"),
        less("H1-A", "H1-D", "more lowly diverse agents trade more"),
        less("H1-A", "H2-A", "low metabolism trades more"),
        less("H2-A", "H2-B", "regrowing resources trade more"),
        HypothesisCheck(
            "H4 alignment",
            f"full-vision trade fraction within {ALIGNMENT_BAND} of the interbank share",
            abs(h4.mean - INTERBANK_SHARE) <= ALIGNMENT_BAND,
            f"|{h4.mean:.4f} - {INTERBANK_SHARE}| = {abs(h4.mean - INTERBANK_SHARE):.4f}",
        ),
    ]
    flags = {"h4_high_variance": h4.spread >= HIGH_VARIANCE_SPREAD}
    return HypothesisReport(checks, flags)
