"""Reward iteration, Bellman recursion and optimal-strategy enumeration."""
from __future__ import annotations

import enum
import itertools
import math
import os
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import CapExceededError, ValidationError
from .model import FiniteMdm, Strategy

TIE_TOL = 1e-9
DEFAULT_ENUM_CAP = 10**6
ORACLE_CAP = 10**7
_CHUNK = 1 << 16


def enumeration_cap(cap: int | None = None) -> int:
    """Resolve the strategy enumeration cap (argument, then env var, then default)."""
    if cap is not None:
        return int(cap)
    env = os.environ.get("MDPSENSE_ENUM_CAP")
    if env:
        try:
            return int(float(env))
        except ValueError:
            raise ValidationError(f"MDPSENSE_ENUM_CAP is not a number: {env!r}") from None
    return DEFAULT_ENUM_CAP


def tie_slack(best, tol: float = TIE_TOL):
    return tol * (1.0 + np.abs(best))


class StrategySetKind(enum.Enum):
    EXACT = "exact"
    MAXIMIZER_PRODUCT = "maximizer_product"
    DELTA_OPTIMAL = "delta_optimal"

    @classmethod
    def coerce(cls, value) -> "StrategySetKind":
        if isinstance(value, cls):
            return value
        aliases = {"exact": cls.EXACT, "maximizer": cls.MAXIMIZER_PRODUCT,
                   "maximizer_product": cls.MAXIMIZER_PRODUCT, "delta_optimal": cls.DELTA_OPTIMAL}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown strategy set kind {value!r}") from None


@dataclass(frozen=True)
class StrategySet:
    """Strategies in lexicographic (n, state, action index) order."""

    strategies: tuple
    kind: StrategySetKind
    delta: float | None = None
    prefiltered: bool = False

    def __len__(self):
        return len(self.strategies)

    def __iter__(self):
        return iter(self.strategies)

    def __contains__(self, item):
        return item in self.strategies


@dataclass(frozen=True)
class BellmanSolution:
    values: np.ndarray  # (N+1, S)
    q: np.ndarray  # q-value of every compiled row
    maximizers: tuple  # maximizers[n][i]: action positions attaining the optimum


def reward_iteration(mdm: FiniteMdm, strategy: Strategy) -> np.ndarray:
    """Value tables ``V[n, i]`` of a fixed strategy, shape ``(N + 1, S)``."""
    c = mdm.compiled
    choice = mdm.choice_indices(strategy)
    return kernels.policy_values(c.P, c.r, c.rN, c.offsets, choice)


def solve_bellman(mdm: FiniteMdm, tie_tol: float = TIE_TOL) -> BellmanSolution:
    c = mdm.compiled
    V, q = kernels.optimal_values(c.P, c.r, c.rN, c.offsets, c.counts, c.sign)
    N, S = c.offsets.shape
    maximizers = []
    for n in range(N):
        per_n = []
        for i in range(S):
            lo = c.offsets[n, i]
            block = q[lo:lo + c.counts[n, i]]
            best = V[n, i]
            hit = c.sign * (block - best) >= -tie_slack(best, tie_tol)
            per_n.append(tuple(int(k) for k in np.flatnonzero(hit)))
        maximizers.append(tuple(per_n))
    return BellmanSolution(V, q, tuple(maximizers))


def bellman(mdm: FiniteMdm, tie_tol: float = TIE_TOL):
    """Optimal value tables and maximizer sets.

    Returns ``(V, maximizers)`` where ``maximizers[n][i]`` is the tuple of
    action labels whose q-value is within ``tie_tol * (1 + |V[n, i]|)`` of
    the optimum.
    """
    sol = solve_bellman(mdm, tie_tol)
    labels = tuple(
        tuple(tuple(mdm.actions[n][i][k] for k in ks) for i, ks in enumerate(per_n))
        for n, per_n in enumerate(sol.maximizers)
    )
    return sol.values, labels


def _product_size(candidates) -> int:
    return math.prod(len(c) for c in candidates)


def _choice_chunks(candidates, N, S):
    dims = [len(c) for c in candidates]
    total = math.prod(dims)
    tables = [np.asarray(c, dtype=np.intp) for c in candidates]
    for start in range(0, total, _CHUNK):
        rest = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        choices = np.empty((rest.size, N * S), dtype=np.intp)
        # mixed-radix digits, first position most significant
        for k in range(len(dims) - 1, -1, -1):
            if dims[k] == 1:
                choices[:, k] = tables[k][0]
                continue
            choices[:, k] = tables[k][rest % dims[k]]
            rest = rest // dims[k]
        yield choices.reshape(-1, N, S)


def _filtered_strategies(mdm, candidates, keep, cap, what):
    c = mdm.compiled
    N, S = c.offsets.shape
    size = _product_size(candidates)
    if size > cap:
        raise CapExceededError(what, size, cap)
    kept = []
    for choices in _choice_chunks(candidates, N, S):
        if keep is None:
            kept.append(choices)
            continue
        V0 = kernels.batch_initial_values(c.P, c.r, c.rN, c.offsets, choices)
        kept.append(choices[keep(V0)])
    return tuple(mdm.strategy_from_choice(ch) for block in kept for ch in block)


def _all_actions(mdm):
    c = mdm.compiled
    N, S = c.offsets.shape
    return [tuple(range(c.counts[n, i])) for n in range(N) for i in range(S)]


def enumerate_optimal_strategies(
    mdm: FiniteMdm,
    mode="exact",
    *,
    cap: int | None = None,
    prefilter: bool = False,
    tie_tol: float = TIE_TOL,
) -> StrategySet:
    """Enumerate optimal strategies.

    ``mode="exact"`` tests every admissible strategy for optimality at all
    initial states.  With ``prefilter=True`` only strategies built from
    maximizers are tested; the result is then the maximizer product
    filtered by the same membership test.  ``mode="maximizer"`` returns the
    Cartesian product of the maximizer sets without re-testing.
    """
    kind = StrategySetKind.coerce(mode)
    cap = enumeration_cap(cap)
    sol = solve_bellman(mdm, tie_tol)
    maxi = [ks for per_n in sol.maximizers for ks in per_n]
    if kind is StrategySetKind.MAXIMIZER_PRODUCT:
        found = _filtered_strategies(mdm, maxi, None, cap, "maximizer product")
        return StrategySet(found, kind)
    if kind is not StrategySetKind.EXACT:
        raise ValueError("use enumerate_delta_optimal for delta-optimal sets")
    V0 = sol.values[0]
    sign = mdm.compiled.sign
    slack = tie_slack(V0, tie_tol)

    def keep(vals):
        return np.all(sign * (vals - V0) >= -slack, axis=1)

    candidates = maxi if prefilter else _all_actions(mdm)
    found = _filtered_strategies(mdm, candidates, keep, cap, "exact strategy enumeration")
    return StrategySet(found, kind, prefiltered=prefilter)


def enumerate_delta_optimal(
    mdm: FiniteMdm,
    delta: float,
    *,
    cap: int | None = None,
    tie_tol: float = TIE_TOL,
) -> StrategySet:
    """All strategies within ``delta`` of the optimal value at every initial state.

    ``delta=math.inf`` returns every admissible strategy.  The tie tolerance
    is added on top of ``delta`` so that ``delta=0`` reproduces the exact set.
    """
    delta = float(delta)
    if not delta >= 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    cap = enumeration_cap(cap)
    sol = solve_bellman(mdm, tie_tol)
    V0 = sol.values[0]
    sign = mdm.compiled.sign
    slack = delta + tie_slack(V0, tie_tol)

    def keep(vals):
        return np.all(sign * (vals - V0) >= -slack, axis=1)

    found = _filtered_strategies(mdm, _all_actions(mdm), keep, cap, "delta-optimal enumeration")
    return StrategySet(found, StrategySetKind.DELTA_OPTIMAL, delta=delta)


def count_optimal_strategies(mdm: FiniteMdm, *, tie_tol: float = TIE_TOL, cap: int | None = None) -> int:
    """Size of the exact optimal set without enumerating it.

    A strategy is optimal at every initial state iff it plays a maximizer at
    each (n, x) it reaches with positive probability from some time-0 state;
    actions at unreached states are free.  The count branches over maximizer
    choices on reached states only.
    """
    cap = enumeration_cap(cap)
    c = mdm.compiled
    sol = solve_bellman(mdm, tie_tol)
    N, S = c.offsets.shape
    support = [np.flatnonzero(row > 0) for row in c.P]
    memo: dict = {}

    def count(n, reach):
        if n == N:
            return 1
        key = (n, reach)
        if key in memo:
            return memo[key]
        free = math.prod(int(c.counts[n, i]) for i in range(S) if i not in reach)
        states = sorted(reach)
        branches = [sol.maximizers[n][i] for i in states]
        if _product_size(branches) > cap:
            raise CapExceededError("optimal strategy count", _product_size(branches), cap)
        total = 0
        for combo in itertools.product(*branches):
            nxt = set()
            for i, k in zip(states, combo):
                nxt.update(support[c.offsets[n, i] + k].tolist())
            total += count(n + 1, frozenset(nxt))
        memo[key] = free * total
        return memo[key]

    return count(0, frozenset(range(S)))


def path_oracle(mdm: FiniteMdm, strategy: Strategy, x0: int, *, cap: int = ORACLE_CAP) -> float:
    """Expected total reward by explicit enumeration of all state paths.

    Paths are grown forward from ``x0``; no backward recursion is involved,
    which makes this an independent check of :func:`reward_iteration`.
    """
    c = mdm.compiled
    choice = mdm.choice_indices(strategy)
    N, S = c.offsets.shape
    if S**N > cap:
        raise CapExceededError("path enumeration", S**N, cap)
    prob = np.ones(1)
    payoff = np.zeros(1)
    last = np.array([x0], dtype=np.intp)
    for n in range(N):
        rows = c.offsets[n, last] + choice[n, last]
        payoff = np.repeat(payoff + c.r[rows], S)
        prob = (prob[:, None] * c.P[rows]).ravel()
        last = np.tile(np.arange(S), rows.size)
    payoff = payoff + c.rN[last]
    return float(np.sum(prob * payoff))
