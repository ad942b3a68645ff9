"""Single-product inventory control with lost sales as a finite MDM.

A state ``(y, z)`` is the stock level ``y`` at the start of a period and
the demand ``z`` served in the previous period.  Ordering ``a`` units
raises the level to ``y + a``; demand beyond ``y + a`` is lost.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import FiniteMdm, Sense, TransitionFunction


@dataclass(frozen=True)
class InventorySpec:
    """Economic parameters and demand densities.

    ``demand`` holds one counting density per period ``1..N``, or a single
    density reused for every period.  Mass on demands above the capacity
    ``K`` is folded into demand ``K``; that is lossless because at most
    ``K`` units can ever be sold.
    """

    horizon: int
    capacity: int
    revenue: float
    order_cost: float
    fixed_cost: float
    holding_cost: float
    demand: tuple

    def __post_init__(self):
        dens = self.demand
        if len(dens) and np.isscalar(dens[0]):
            dens = (dens,) * int(self.horizon)
        object.__setattr__(self, "demand", tuple(tuple(float(v) for v in d) for d in dens))
        problems = self.problems()
        if problems:
            raise ValidationError("invalid inventory spec: " + "; ".join(problems), problems)

    def problems(self) -> list:
        out = []
        if int(self.horizon) != self.horizon or self.horizon < 1:
            out.append(f"horizon must be an integer >= 1, got {self.horizon}")
        if int(self.capacity) != self.capacity or self.capacity < 1:
            out.append(f"capacity must be an integer >= 1, got {self.capacity}")
        if len(self.demand) != self.horizon:
            out.append(f"{len(self.demand)} demand densities for horizon {self.horizon}")
        for n, d in enumerate(self.demand):
            arr = np.asarray(d)
            if arr.size == 0 or np.any(arr < 0) or not np.all(np.isfinite(arr)):
                out.append(f"demand density {n} must be finite and non-negative")
            elif abs(arr.sum() - 1.0) > 1e-12:
                out.append(f"demand density {n} sums to {arr.sum()!r}")
        return out

    @property
    def truncation(self) -> int:
        """Largest demand value that is distinguished."""
        return int(self.capacity)

    def truncated_demand(self, n: int) -> np.ndarray:
        """Density of period ``n + 1`` on ``0..K`` with the tail folded into ``K``."""
        K = self.truncation
        d = np.asarray(self.demand[n], dtype=np.float64)
        out = np.zeros(K + 1)
        out[: min(d.size, K + 1)] = d[: K + 1]
        if d.size > K + 1:
            out[K] += d[K + 1:].sum()
        return out


def builtin_spec() -> InventorySpec:
    """Three periods, capacity 4, demand 1, 2 or 3 with probabilities 1/4, 1/2, 1/4."""
    return InventorySpec(3, 4, 8.0, 2.0, 4.0, 1.0, (0.0, 0.25, 0.5, 0.25))


def inventory_states(K: int) -> tuple:
    """States ``(y, z)`` ordered by stock level first, then by served demand."""
    return tuple((y, z) for y in range(K + 1) for z in range(K + 1))


def state_index(K: int, y: int, z: int) -> int:
    return y * (K + 1) + z


def _landing_row(K: int, level: int, density: np.ndarray) -> np.ndarray:
    """Distribution of ``(y', z')`` when stocking up to ``level`` against ``density``."""
    row = np.zeros((K + 1) ** 2)
    for z in range(level):
        row[state_index(K, level - z, z)] += density[z]
    row[state_index(K, 0, level)] += density[level:].sum()
    return row


def _transitions(spec: InventorySpec, densities) -> dict:
    K = spec.truncation
    rows = {}
    for n in range(spec.horizon):
        cache = {}
        for i, (y, z) in enumerate(inventory_states(K)):
            for a in range(K - y + 1):
                level = y + a
                if level not in cache:
                    cache[level] = _landing_row(K, level, densities[n])
                rows[(n, i, a)] = cache[level]
    return rows


def build_inventory_mdm(spec: InventorySpec) -> FiniteMdm:
    """The inventory problem as a maximizing finite MDM.

    Rewards: ordering ``a > 0`` units costs ``fixed + order * a``; holding
    costs ``holding * (y + a)`` per period; revenue ``revenue * z`` is
    booked for the demand served in the previous period, so epoch 0 earns
    none and the terminal reward is revenue minus holding of the leftover.
    """
    K, N = spec.truncation, spec.horizon
    states = inventory_states(K)
    actions = tuple(tuple(tuple(range(K - y + 1)) for (y, _) in states) for _ in range(N))
    densities = [spec.truncated_demand(n) for n in range(N)]
    rewards = {}
    for n in range(N):
        for i, (y, z) in enumerate(states):
            revenue = spec.revenue * z if n > 0 else 0.0
            for a in range(K - y + 1):
                ordering = (spec.fixed_cost + spec.order_cost * a) if a > 0 else 0.0
                rewards[(n, i, a)] = revenue - ordering - spec.holding_cost * (y + a)
    terminal = [spec.revenue * z - spec.holding_cost * y for (y, z) in states]
    return FiniteMdm(N, states, actions, TransitionFunction(_transitions(spec, densities)),
                     rewards, terminal, Sense.MAXIMIZE)


def demand_direction(spec: InventorySpec, j: int) -> TransitionFunction:
    """Transition function with every period's demand replaced by the point mass at ``j``."""
    K = spec.truncation
    if int(j) != j or not 0 <= j <= K:
        raise ValueError(f"demand value {j} outside 0..{K}")
    point = np.zeros(K + 1)
    point[int(j)] = 1.0
    return TransitionFunction(_transitions(spec, [point] * spec.horizon))


def mixed_spec(spec: InventorySpec, j: int, eps: float) -> InventorySpec:
    """Spec whose densities are ``(1 - eps) p + eps * delta_j``."""
    dens = []
    for n in range(spec.horizon):
        p = spec.truncated_demand(n)
        q = np.zeros_like(p)
        q[int(j)] = 1.0
        dens.append(tuple((1.0 - eps) * p + eps * q))
    return InventorySpec(spec.horizon, spec.capacity, spec.revenue, spec.order_cost,
                         spec.fixed_cost, spec.holding_cost, tuple(dens))


def order_table(mdm: FiniteMdm, strategy) -> np.ndarray:
    """Orders as an array ``[n, y, z]`` for a strategy of an inventory model."""
    K = int(round(np.sqrt(mdm.n_states))) - 1
    out = np.empty((mdm.horizon, K + 1, K + 1), dtype=int)
    for n in range(mdm.horizon):
        for i, (y, z) in enumerate(mdm.states):
            out[n, y, z] = strategy(n, i)
    return out
