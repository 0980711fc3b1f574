"""LTL instance data and its cyclic space-time expansion.

Terminals are duplicated in every period ``0..T-1``. An arc ``(i, j, t)``
leaves terminal ``i`` at the departure period of ``t`` and reaches ``j`` at
period ``t``; time wraps, so arrivals at period 0 depart at ``T-1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ModelBuildError


def departure_time(t: int, T: int) -> int:
    """Departure period of a one-period movement arriving at period ``t``."""
    if T < 1:
        raise ValueError(f"horizon must be >= 1, got {T}")
    if not 0 <= t < T:
        raise ValueError(f"period {t} outside [0, {T - 1}]")
    return t - 1 if t >= 1 else T - 1


def next_period(t: int, T: int) -> int:
    return (t + 1) % T


@dataclass(frozen=True)
class Commodity:
    origin: int
    avail_period: int
    destination: int
    deadline: int

    def window_length(self, T: int) -> int:
        """Number of arrival periods in the cyclic window (avail, deadline]."""
        steps = (self.deadline - self.avail_period) % T
        return T if steps == 0 else steps

    def window(self, T: int) -> list[int]:
        """Arrival periods walked forward from ``avail_period + 1``."""
        return [(self.avail_period + k) % T for k in range(1, self.window_length(T) + 1)]


@dataclass(frozen=True)
class SpaceTimeArc:
    from_terminal: int
    to_terminal: int
    arrival: int
    departure: int

    @property
    def is_holding(self) -> bool:
        return self.from_terminal == self.to_terminal


@dataclass
class Instance:
    num_terminals: int
    horizon: int
    commodities: list[Commodity]
    arc_cost: np.ndarray
    capacity: float
    outsourcing_cost: float
    _window_sets: list[frozenset] = field(default_factory=list, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.arc_cost = np.asarray(self.arc_cost, dtype=float)
        self.commodities = list(self.commodities)
        self.validate()
        self._window_sets = [frozenset(k.window(self.horizon)) for k in self.commodities]

    def validate(self) -> None:
        N, T = self.num_terminals, self.horizon
        if N < 2:
            raise ValueError(f"need at least 2 terminals, got {N}")
        if T < 2:
            raise ValueError(f"horizon must be >= 2, got {T}")
        if self.arc_cost.shape != (N, N):
            raise ValueError(f"arc_cost must be {N}x{N}, got {self.arc_cost.shape}")
        if np.any(self.arc_cost < 0) or not np.all(np.isfinite(self.arc_cost)):
            raise ValueError("arc costs must be finite and non-negative")
        if not self.capacity > 0:
            raise ValueError("capacity must be positive")
        if not self.outsourcing_cost > 0:
            raise ValueError("outsourcing cost must be positive")
        for idx, k in enumerate(self.commodities):
            for term in (k.origin, k.destination):
                if not 0 <= term < N:
                    raise ValueError(f"commodity {idx}: terminal {term} out of range")
            for per in (k.avail_period, k.deadline):
                if not 0 <= per < T:
                    raise ValueError(f"commodity {idx}: period {per} outside [0, {T - 1}]")
            if k.origin == k.destination:
                raise ValueError(f"commodity {idx}: origin equals destination")

    @property
    def num_commodities(self) -> int:
        return len(self.commodities)

    @property
    def num_arcs(self) -> int:
        return self.num_terminals ** 2 * self.horizon

    def arc_index(self, i: int, j: int, t: int) -> int:
        """Position of design arc ``(i, j, t)`` in the canonical ordering."""
        N = self.num_terminals
        return (t * N + i) * N + j

    def arc_of(self, a: int) -> tuple[int, int, int]:
        N = self.num_terminals
        t, rest = divmod(a, N * N)
        i, j = divmod(rest, N)
        return i, j, t

    def arc_costs_vector(self) -> np.ndarray:
        """Cost of every design arc in canonical order."""
        return np.tile(self.arc_cost.ravel(), self.horizon)

    def allows(self, k: int, arrival: int) -> bool:
        return arrival in self._window_sets[k]

    def to_dict(self) -> dict:
        return {
            "num_terminals": self.num_terminals,
            "horizon": self.horizon,
            "capacity": self.capacity,
            "outsourcing_cost": self.outsourcing_cost,
            "arc_cost": self.arc_cost.tolist(),
            "commodities": [
                {
                    "origin": k.origin,
                    "avail_period": k.avail_period,
                    "destination": k.destination,
                    "deadline": k.deadline,
                }
                for k in self.commodities
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Instance":
        return cls(
            num_terminals=int(data["num_terminals"]),
            horizon=int(data["horizon"]),
            commodities=[Commodity(**{key: int(v) for key, v in c.items()}) for c in data["commodities"]],
            arc_cost=np.array(data["arc_cost"], dtype=float),
            capacity=float(data["capacity"]),
            outsourcing_cost=float(data["outsourcing_cost"]),
        )


def build_spacetime(inst: Instance) -> list[SpaceTimeArc]:
    """All ``N*N*T`` arcs in canonical order (see :meth:`Instance.arc_index`)."""
    inst.validate()
    return list(iter_arcs(inst))


def iter_arcs(inst: Instance) -> Iterator[SpaceTimeArc]:
    N, T = inst.num_terminals, inst.horizon
    for t in range(T):
        dep = departure_time(t, T)
        for i in range(N):
            for j in range(N):
                yield SpaceTimeArc(i, j, t, dep)


def commodity_arc_allowed(inst: Instance, k: Commodity, arc: SpaceTimeArc) -> bool:
    """Whether commodity ``k`` may use ``arc``.

    Flow is allowed only on arcs arriving inside the cyclic interval
    ``(avail_period, deadline]``; equal endpoints open the whole cycle.
    """
    return arc.arrival in k.window(inst.horizon)


def check_commodity_paths(inst: Instance) -> None:
    """Raise ModelBuildError when a commodity cannot reach its destination in time."""
    # a non-empty window always admits the direct move followed by holding
    for idx, k in enumerate(inst.commodities):
        if not k.window(inst.horizon):
            raise ModelBuildError(f"commodity {idx} has an empty time window")


def load_instance(path: str | Path) -> Instance:
    return Instance.from_dict(json.loads(Path(path).read_text()))


def dump_instance(inst: Instance) -> str:
    return json.dumps(inst.to_dict(), indent=2) + "\n"


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(dump_instance(inst))


def generate_instance(
    num_terminals: int = 12,
    horizon: int = 5,
    num_commodities: int = 6,
    capacity: float = 12.0,
    outsourcing_cost: float = 80.0,
    cost_range: Sequence[int] = (10, 30),
    holding_cost: float = 1.0,
    seed: int = 0,
) -> Instance:
    """Random instance: integer arc costs in ``cost_range``, holding arcs at ``holding_cost``.

    Each commodity gets two distinct terminals, a uniform availability period,
    and a deadline at least two cyclic steps later (the full cycle when T = 2).
    """
    if num_terminals < 2 or horizon < 2 or num_commodities < 1:
        raise ValueError("need >= 2 terminals, horizon >= 2 and >= 1 commodity")
    rng = np.random.default_rng(seed)
    lo, hi = cost_range
    costs = rng.integers(lo, hi, size=(num_terminals, num_terminals), endpoint=True).astype(float)
    np.fill_diagonal(costs, holding_cost)
    commodities = []
    for _ in range(num_commodities):
        o, d = rng.choice(num_terminals, size=2, replace=False)
        sigma = int(rng.integers(0, horizon))
        steps = int(rng.integers(2, horizon, endpoint=False)) if horizon > 2 else 2
        commodities.append(Commodity(int(o), sigma, int(d), (sigma + steps) % horizon))
    return Instance(num_terminals, horizon, commodities, costs, capacity, outsourcing_cost)
