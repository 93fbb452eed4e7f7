"""Run configuration for the market-maker simulator.

A :class:`SimConfig` fully parameterizes one scenario. Together with a
replication index it determines every event of a run.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import NamedTuple


class Interval(NamedTuple):
    """Inclusive integer interval ``[lo, hi]``."""

    lo: int
    hi: int

    @property
    def degenerate(self) -> bool:
        return self.lo == self.hi

    def __str__(self) -> str:
        return f"[{self.lo}, {self.hi}]"


NEIGHBORHOODS = ("moore", "von_neumann")

# interval fields and the smallest admissible lower bound
INTERVAL_FIELDS = {
    "vision_range": 1,
    "metabolism_range_bonds": 1,
    "metabolism_range_cash": 1,
    "endowment_range_bonds": 1,
    "endowment_range_cash": 1,
    "cell_capacity_range_bonds": 0,
    "cell_capacity_range_cash": 0,
}


@dataclass(frozen=True)
class ConfigIssue:
    path: str
    kind: str  # syntax | unknown_key | type | interval_order | range | missing
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message} [{self.kind}]" if self.path else f"{self.message} [{self.kind}]"


class ConfigError(ValueError):
    """Raised when a configuration violates one or more invariants.

    ``issues`` lists every violation found, each with its field path.
    """

    def __init__(self, issues: list[ConfigIssue]):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))

    @property
    def kinds(self) -> set[str]:
        return {i.kind for i in self.issues}


@dataclass(frozen=True)
class SimConfig:
    grid_width: int = 50
    grid_height: int = 50
    neighborhood: str = "moore"
    n_agents: int = 4
    vision_range: Interval = Interval(1, 5)
    metabolism_range_bonds: Interval = Interval(1, 5)
    metabolism_range_cash: Interval = Interval(1, 5)
    endowment_range_bonds: Interval = Interval(5, 25)
    endowment_range_cash: Interval = Interval(5, 25)
    cell_capacity_range_bonds: Interval = Interval(0, 4)
    cell_capacity_range_cash: Interval = Interval(0, 4)
    regrowth_rate: int = 0
    max_steps: int = 4000
    seed: int = 0
    replications: int = 200

    def __post_init__(self) -> None:
        # accept plain sequences for intervals
        for name in INTERVAL_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, Interval):
                object.__setattr__(self, name, Interval(*value))

    def issues(self) -> list[ConfigIssue]:
        """Every violated invariant, in field order."""
        found: list[ConfigIssue] = []

        def need_int(name: str, minimum: int) -> None:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                found.append(ConfigIssue(name, "type", f"expected integer, got {value!r}"))
            elif value < minimum:
                found.append(ConfigIssue(name, "range", f"must be >= {minimum}, got {value}"))

        need_int("grid_width", 1)
        need_int("grid_height", 1)
        if self.neighborhood not in NEIGHBORHOODS:
            found.append(
                ConfigIssue("neighborhood", "range", f"must be one of {NEIGHBORHOODS}, got {self.neighborhood!r}")
            )
        need_int("n_agents", 1)
        for name, floor in INTERVAL_FIELDS.items():
            lo, hi = getattr(self, name)
            if any(isinstance(v, bool) or not isinstance(v, int) for v in (lo, hi)):
                found.append(ConfigIssue(name, "type", f"interval bounds must be integers, got [{lo!r}, {hi!r}]"))
                continue
            if lo > hi:
                found.append(ConfigIssue(name, "interval_order", f"lo > hi in [{lo}, {hi}]"))
            if lo < floor:
                found.append(ConfigIssue(name, "range", f"lower bound must be >= {floor}, got {lo}"))
        need_int("regrowth_rate", 0)
        need_int("max_steps", 1)
        need_int("seed", 0)
        if isinstance(self.seed, int) and self.seed >= 2**64:
            found.append(ConfigIssue("seed", "range", "seed must fit in 64 bits"))
        need_int("replications", 1)

        if not found:
            if self.vision_range.hi > max(self.grid_width, self.grid_height):
                found.append(
                    ConfigIssue("vision_range", "range", "upper bound exceeds the largest grid dimension")
                )
            if self.n_agents > self.grid_width * self.grid_height:
                found.append(ConfigIssue("n_agents", "range", "more agents than grid cells"))
        return found

    def validate(self) -> "SimConfig":
        problems = self.issues()
        if problems:
            raise ConfigError(problems)
        return self

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = [value.lo, value.hi] if isinstance(value, Interval) else value
        return out


CONFIG_FIELDS = tuple(f.name for f in fields(SimConfig))
