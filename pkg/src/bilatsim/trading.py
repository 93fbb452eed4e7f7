"""Bilateral bond-for-cash trading between market makers.

Bonds play the role of the first resource and cash the second. An agent's
marginal rate of substitution (MRS) is its cash survival horizon over its
bond survival horizon; an agent with MRS above 1 is short bonds and wants to
buy them. Two agents whose MRS differ trade at the geometric mean of their
MRS, one unit at a time, for as long as every unit trade raises both
parties' Cobb-Douglas welfare without flipping their MRS ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .engine import AgentState


class UndefinedMRS(ArithmeticError):
    """MRS requested for an agent holding no bonds (or no cash)."""


@dataclass(frozen=True, slots=True)
class TradeRecord:
    step: int
    buyer_id: int
    seller_id: int
    bonds_moved: float
    cash_moved: float
    price: float

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "buyer_id": self.buyer_id,
            "seller_id": self.seller_id,
            "bonds_moved": self.bonds_moved,
            "cash_moved": self.cash_moved,
            "price": self.price,
        }


def mrs(bonds: float, cash: float, met_bonds: float, met_cash: float) -> float:
    if bonds <= 0 or cash <= 0:
        raise UndefinedMRS(f"MRS undefined for holdings bonds={bonds}, cash={cash}")
    return (cash / met_cash) / (bonds / met_bonds)


def compute_mrs(agent: AgentState) -> float:
    return mrs(agent.accum_bonds, agent.accum_cash, agent.metabolism_bonds, agent.metabolism_cash)


def welfare(bonds: float, cash: float, met_bonds: float, met_cash: float) -> float:
    """Cobb-Douglas welfare with metabolism-share exponents."""
    if bonds < 0 or cash < 0:
        raise ValueError(f"welfare undefined for negative holdings ({bonds}, {cash})")
    total = met_bonds + met_cash
    return bonds ** (met_bonds / total) * cash ** (met_cash / total)


def compute_welfare(agent: AgentState, bonds: float | None = None, cash: float | None = None) -> float:
    """Welfare of ``agent`` at its current holdings, or at hypothetical ones."""
    return welfare(
        agent.accum_bonds if bonds is None else bonds,
        agent.accum_cash if cash is None else cash,
        agent.metabolism_bonds,
        agent.metabolism_cash,
    )


def bargain_price(mrs_a: float, mrs_b: float) -> float:
    if mrs_a <= 0 or mrs_b <= 0:
        raise ValueError(f"prices need positive MRS values, got {mrs_a}, {mrs_b}")
    return math.sqrt(mrs_a * mrs_b)


def unit_quantities(price: float) -> tuple[float, float]:
    """(bonds, cash) exchanged in one unit trade at ``price`` cash per bond."""
    if price >= 1:
        return 1.0, price
    return 1.0 / price, 1.0


def tradeable(agent: AgentState) -> bool:
    return agent.alive and agent.accum_bonds > 0 and agent.accum_cash > 0


def execute_trade_session(a: AgentState, b: AgentState, step: int) -> list[TradeRecord]:
    """Trade units between ``a`` and ``b`` until no welfare-improving unit remains.

    Mutates both agents' holdings. Returns the executed unit trades, possibly
    none; agents that cannot quote (dead, or empty in either resource) simply
    do not trade.
    """
    if a is b or not (tradeable(a) and tradeable(b)):
        return []
    records: list[TradeRecord] = []
    while True:
        mrs_a = compute_mrs(a)
        mrs_b = compute_mrs(b)
        if mrs_a == mrs_b:
            break
        buyer, seller = (a, b) if mrs_a > mrs_b else (b, a)
        price = bargain_price(mrs_a, mrs_b)
        bonds, cash = unit_quantities(price)

        buyer_bonds = buyer.accum_bonds + bonds
        buyer_cash = buyer.accum_cash - cash
        seller_bonds = seller.accum_bonds - bonds
        seller_cash = seller.accum_cash + cash
        if buyer_cash <= 0 or seller_bonds <= 0:
            break
        if compute_welfare(buyer, buyer_bonds, buyer_cash) <= compute_welfare(buyer):
            break
        if compute_welfare(seller, seller_bonds, seller_cash) <= compute_welfare(seller):
            break
        buyer_mrs = mrs(buyer_bonds, buyer_cash, buyer.metabolism_bonds, buyer.metabolism_cash)
        seller_mrs = mrs(seller_bonds, seller_cash, seller.metabolism_bonds, seller.metabolism_cash)
        if buyer_mrs < seller_mrs:
            break

        buyer.accum_bonds, buyer.accum_cash = buyer_bonds, buyer_cash
        seller.accum_bonds, seller.accum_cash = seller_bonds, seller_cash
        records.append(TradeRecord(step, buyer.id, seller.id, bonds, cash, price))
    return records


def find_partners(world, agent: AgentState) -> list[AgentState]:
    """Alive agents within ``agent``'s vision, in a random order drawn from the world stream."""
    x, y = agent.position
    v = agent.vision
    moore = world.config.neighborhood == "moore"
    found = []
    for other in world.alive_agents():
        if other is agent:
            continue
        dx = abs(other.position[0] - x)
        dy = abs(other.position[1] - y)
        if (max(dx, dy) if moore else dx + dy) <= v:
            found.append(other)
    if len(found) > 1:
        order = world.rng.permutation(len(found))
        found = [found[i] for i in order]
    return found
