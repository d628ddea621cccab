"""Participant rewards, virtual-currency payouts and a spot market with a moving floor.

All pricing rules here are model choices with tunable parameters:

* reward rate = base rate scaled by demand/supply, clamped to [0.1, 10];
* a lease pays ``rate x minutes`` if served to term and nothing if withdrawn early;
* the spot floor tracks ``base_floor x clamp(demand/supply)`` with an EWMA;
* the auction is greedy pay-as-bid above the floor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .nodes import Lease, LeaseError, LeaseStatus

MIN_RATIO = 0.1
MAX_RATIO = 10.0


@dataclass(frozen=True)
class DemandSupplySnapshot:
    zone_id: int
    supplied_capacity: float  # requests/s
    demanded_capacity: float  # requests/s
    timestamp: int = 0

    def __post_init__(self) -> None:
        if self.supplied_capacity < 0 or self.demanded_capacity < 0:
            raise ValueError("capacities must be non-negative")


@dataclass(frozen=True)
class RewardQuote:
    zone_id: int
    rate: float
    timestamp: int


def scarcity_ratio(snap: DemandSupplySnapshot) -> float:
    if snap.supplied_capacity == 0:
        return MAX_RATIO
    ratio = snap.demanded_capacity / snap.supplied_capacity
    return min(max(ratio, MIN_RATIO), MAX_RATIO)


def compute_reward(snap: DemandSupplySnapshot, base_rate: float) -> RewardQuote:
    if base_rate <= 0:
        raise ValueError("base_rate must be positive")
    return RewardQuote(snap.zone_id, base_rate * scarcity_ratio(snap), snap.timestamp)


@dataclass
class VirtualCurrencyLedger:
    balances: dict[str, float] = field(default_factory=dict)
    credits: list[tuple[int, str, int, float]] = field(default_factory=list)

    def credit(self, participant: str, amount: float, lease_id: int, at: int) -> None:
        if amount < 0:
            raise ValueError("credits are non-negative")
        self.balances[participant] = self.balances.get(participant, 0.0) + amount
        self.credits.append((at, participant, lease_id, amount))

    @property
    def total_issued(self) -> float:
        return sum(c[3] for c in self.credits)

    @property
    def total_balance(self) -> float:
        return sum(self.balances.values())


def credit_on_lease_close(ledger: VirtualCurrencyLedger, lease: Lease) -> float:
    if lease.status is LeaseStatus.ACTIVE:
        raise LeaseError(f"lease {lease.lease_id} is still active")
    if lease.status is LeaseStatus.EXPIRED:
        amount = lease.price_rate * lease.duration_minutes
    else:
        amount = 0.0
    at = lease.closed_at if lease.closed_at is not None else lease.expires_at
    ledger.credit(lease.node_id, amount, lease.lease_id, at)
    return amount


@dataclass(frozen=True)
class Bid:
    bidder: str
    price: float
    quantity: int = 1


@dataclass
class SpotMarket:
    floor_price: float = 1.0
    base_floor: float = 1.0
    capacity: int = 0
    bids: list[Bid] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.floor_price < 0 or self.base_floor < 0:
            raise ValueError("floor prices must be non-negative")


def update_spot_floor(market: SpotMarket, snap: DemandSupplySnapshot, alpha: float) -> float:
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    target = market.base_floor * scarcity_ratio(snap)
    market.floor_price = (1 - alpha) * market.floor_price + alpha * target
    return market.floor_price


def clear_spot_auction(market: SpotMarket) -> list[Bid]:
    """Accept bids greedily by price; each winner pays its own bid."""
    remaining = market.capacity
    accepted = []
    for bid in sorted(market.bids, key=lambda b: (-b.price, b.bidder)):
        if bid.price < market.floor_price:
            break
        if 0 < bid.quantity <= remaining:
            accepted.append(bid)
            remaining -= bid.quantity
    return accepted
