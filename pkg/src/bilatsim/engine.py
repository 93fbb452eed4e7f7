"""Landscape, agents and the asynchronous step loop.

Each step shuffles the living agents and activates them one at a time. An
activated agent moves to the best free cell it can see, harvests it, trades
with every agent in vision, then pays its metabolism and dies if either
holding is exhausted. Regrowth runs once all agents have acted.

Randomness comes from two streams derived from the config seed: one for
agent attributes, shared by every replication, and one per replication for
the landscape, placement and everything that happens during the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .config import Interval, SimConfig
from .metrics import RunSummary, detect_collapse
from .trading import TradeRecord, execute_trade_session, find_partners

_ATTRIBUTE_STREAM = 0
_REPLICATION_STREAM = 1
TIE_TOLERANCE = 1e-12


@dataclass(slots=True)
class AgentState:
    id: int
    position: tuple[int, int]
    vision: int
    metabolism_bonds: int
    metabolism_cash: int
    accum_bonds: float
    accum_cash: float
    alive: bool = True

    @property
    def genes(self) -> tuple[int, int, int]:
        return (self.vision, self.metabolism_bonds, self.metabolism_cash)


@dataclass(frozen=True)
class Cell:
    level_bonds: float
    level_cash: float
    capacity_bonds: float
    capacity_cash: float


@dataclass(frozen=True, slots=True)
class StepEvent:
    step: int
    agent_id: int
    trades: tuple[TradeRecord, ...] = ()

    @property
    def action_kind(self) -> str:
        return "trade" if self.trades else "forage_only"

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "agent_id": self.agent_id,
            "action_kind": self.action_kind,
            "trades": [t.to_dict() for t in self.trades],
        }


@dataclass
class StepReport:
    step: int
    events: list[StepEvent]
    collapsed: bool
    population: int
    harvested_bonds: float = 0.0
    harvested_cash: float = 0.0
    metabolized_bonds: float = 0.0
    metabolized_cash: float = 0.0
    regrown_bonds: float = 0.0
    regrown_cash: float = 0.0


@dataclass
class WorldState:
    config: SimConfig
    replication_index: int
    capacity_bonds: np.ndarray
    capacity_cash: np.ndarray
    level_bonds: np.ndarray
    level_cash: np.ndarray
    occupancy: np.ndarray  # agent id per cell, -1 when free; indexed [y, x]
    agents: list[AgentState]
    rng: np.random.Generator
    step_index: int = 0
    _alive: list[AgentState] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        self._alive = [a for a in self.agents if a.alive]

    def alive_agents(self) -> list[AgentState]:
        return self._alive

    @property
    def population(self) -> int:
        return len(self._alive)

    @property
    def collapsed(self) -> bool:
        return len(self._alive) < 2

    def cell(self, x: int, y: int) -> Cell:
        return Cell(
            float(self.level_bonds[y, x]),
            float(self.level_cash[y, x]),
            float(self.capacity_bonds[y, x]),
            float(self.capacity_cash[y, x]),
        )

    def totals(self) -> tuple[float, float]:
        """Bonds and cash held by agents (dead ones included, frozen) plus landscape levels."""
        bonds = math.fsum(a.accum_bonds for a in self.agents) + math.fsum(self.level_bonds.ravel())
        cash = math.fsum(a.accum_cash for a in self.agents) + math.fsum(self.level_cash.ravel())
        return bonds, cash

    def remove(self, agent: AgentState) -> None:
        """Take a dead agent off the grid."""
        x, y = agent.position
        self.occupancy[y, x] = -1
        self._alive.remove(agent)


def _streams(seed: int, replication_index: int) -> tuple[np.random.Generator, np.random.Generator]:
    attributes = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(_ATTRIBUTE_STREAM,))))
    replication = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(_REPLICATION_STREAM, replication_index)))
    )
    return attributes, replication


def _draw(rng: np.random.Generator, interval: Interval) -> int:
    return int(rng.integers(interval.lo, interval.hi, endpoint=True))


def init_run(config: SimConfig, replication_index: int = 0) -> WorldState:
    config.validate()
    attr_rng, rng = _streams(config.seed, replication_index)
    shape = (config.grid_height, config.grid_width)

    cap_b = config.cell_capacity_range_bonds
    cap_c = config.cell_capacity_range_cash
    capacity_bonds = rng.integers(cap_b.lo, cap_b.hi, size=shape, endpoint=True).astype(float)
    capacity_cash = rng.integers(cap_c.lo, cap_c.hi, size=shape, endpoint=True).astype(float)
    cells = rng.choice(config.grid_width * config.grid_height, size=config.n_agents, replace=False)

    occupancy = np.full(shape, -1, dtype=np.int64)
    agents = []
    for i, flat in enumerate(cells):
        y, x = divmod(int(flat), config.grid_width)
        vision = _draw(attr_rng, config.vision_range)
        met_b = _draw(attr_rng, config.metabolism_range_bonds)
        met_c = _draw(attr_rng, config.metabolism_range_cash)
        end_b = _draw(attr_rng, config.endowment_range_bonds)
        end_c = _draw(attr_rng, config.endowment_range_cash)
        agents.append(AgentState(i, (x, y), vision, met_b, met_c, float(end_b), float(end_c)))
        occupancy[y, x] = i

    return WorldState(
        config=config,
        replication_index=replication_index,
        capacity_bonds=capacity_bonds,
        capacity_cash=capacity_cash,
        level_bonds=capacity_bonds.copy(),
        level_cash=capacity_cash.copy(),
        occupancy=occupancy,
        agents=agents,
        rng=rng,
    )


@lru_cache(maxsize=None)
def _distance_window(vision: int, moore: bool) -> np.ndarray:
    offsets = np.abs(np.arange(-vision, vision + 1))
    if moore:
        return np.maximum.outer(offsets, offsets)
    return np.add.outer(offsets, offsets)


def move_agent(world: WorldState, agent: AgentState) -> tuple[int, int]:
    """Move ``agent`` to the free visible cell with the best post-harvest welfare and harvest it.

    Ties go to the nearest cell, then to a uniform draw. Returns the new
    position; the agent's own cell is always a candidate.
    """
    cfg = world.config
    x, y = agent.position
    v = agent.vision
    y0, y1 = max(0, y - v), min(cfg.grid_height, y + v + 1)
    x0, x1 = max(0, x - v), min(cfg.grid_width, x + v + 1)
    dist = _distance_window(v, cfg.neighborhood == "moore")[y0 - y + v : y1 - y + v, x0 - x + v : x1 - x + v]

    level_b = world.level_bonds[y0:y1, x0:x1]
    level_c = world.level_cash[y0:y1, x0:x1]
    total = agent.metabolism_bonds + agent.metabolism_cash
    score = (agent.accum_bonds + level_b) ** (agent.metabolism_bonds / total) * (
        agent.accum_cash + level_c
    ) ** (agent.metabolism_cash / total)
    occ = world.occupancy[y0:y1, x0:x1]
    blocked = (occ >= 0) & (occ != agent.id)
    if cfg.neighborhood != "moore":
        blocked |= dist > v
    score[blocked] = -1.0

    # equal welfare computed along different float paths can differ in the last bits
    top = score.max()
    best = score >= top - TIE_TOLERANCE * top
    nearest = dist[best].min()
    rows, cols = np.nonzero(best & (dist == nearest))
    k = 0 if len(rows) == 1 else int(world.rng.integers(len(rows)))
    ny, nx = int(rows[k]) + y0, int(cols[k]) + x0

    if (nx, ny) != (x, y):
        world.occupancy[y, x] = -1
        world.occupancy[ny, nx] = agent.id
        agent.position = (nx, ny)
    agent.accum_bonds += float(world.level_bonds[ny, nx])
    agent.accum_cash += float(world.level_cash[ny, nx])
    world.level_bonds[ny, nx] = 0.0
    world.level_cash[ny, nx] = 0.0
    return agent.position


def metabolize(agent: AgentState) -> AgentState:
    agent.accum_bonds -= agent.metabolism_bonds
    agent.accum_cash -= agent.metabolism_cash
    if agent.accum_bonds <= 0 or agent.accum_cash <= 0:
        agent.alive = False
    return agent


def regrow(world: WorldState) -> tuple[float, float]:
    """Grow every cell back by the regrowth rate, clamped at capacity. Returns the amounts added."""
    rate = world.config.regrowth_rate
    if rate == 0:
        return 0.0, 0.0
    # levels stay integer-valued, so plain sums are exact
    added = []
    for level, capacity in ((world.level_bonds, world.capacity_bonds), (world.level_cash, world.capacity_cash)):
        before = level.sum()
        np.minimum(level + rate, capacity, out=level)
        added.append(float(level.sum() - before))
    return added[0], added[1]


def step(world: WorldState) -> StepReport:
    """Advance the world by one asynchronous step."""
    index = world.step_index
    if world.collapsed:
        return StepReport(index, [], True, world.population)

    order = list(world.alive_agents())
    world.rng.shuffle(order)
    report = StepReport(index, [], False, 0)
    for agent in order:
        if not agent.alive:
            continue
        level_before = (agent.accum_bonds, agent.accum_cash)
        x, y = move_agent(world, agent)
        # harvested amounts are exactly the accumulation increments
        report.harvested_bonds += agent.accum_bonds - level_before[0]
        report.harvested_cash += agent.accum_cash - level_before[1]

        trades: list[TradeRecord] = []
        for partner in find_partners(world, agent):
            trades.extend(execute_trade_session(agent, partner, index))

        metabolize(agent)
        report.metabolized_bonds += agent.metabolism_bonds
        report.metabolized_cash += agent.metabolism_cash
        if not agent.alive:
            world.remove(agent)
        report.events.append(StepEvent(index, agent.id, tuple(trades)))

    report.regrown_bonds, report.regrown_cash = regrow(world)
    world.step_index += 1
    report.population = world.population
    report.collapsed = world.collapsed
    return report


def run(config: SimConfig, replication_index: int = 0, trace: list | None = None, keep_trades: bool = True) -> RunSummary:
    """Run one replication until ``max_steps`` or collapse.

    When ``trace`` is a list, every StepEvent is appended to it.
    """
    world = init_run(config, replication_index)
    trajectory = [world.population]
    total = trading = 0
    trade_log: list[TradeRecord] = []
    while world.step_index < config.max_steps and not world.collapsed:
        report = step(world)
        for event in report.events:
            total += 1
            if event.trades:
                trading += 1
                if keep_trades:
                    trade_log.extend(event.trades)
        if trace is not None:
            trace.extend(report.events)
        trajectory.append(report.population)

    return RunSummary(
        total_actions=total,
        trading_actions=trading,
        collapse_step=detect_collapse(trajectory),
        steps_executed=world.step_index,
        final_population=world.population,
        population_trajectory=trajectory,
        trade_log=trade_log,
        replication_index=replication_index,
        seed=config.seed,
    )
