"""Random models and directions for property tests and benchmarks."""
from __future__ import annotations

import numpy as np

from .model import FiniteMdm, TransitionFunction, from_arrays


def _rows(rng, count, S, sparsity):
    P = rng.random((count, S))
    if sparsity > 0:
        P[rng.random((count, S)) < sparsity] = 0.0
        empty = P.sum(axis=1) == 0
        P[empty, rng.integers(0, S, empty.sum())] = 1.0
    return P / P.sum(axis=1, keepdims=True)


def random_mdm(
    rng,
    horizon: int = 3,
    n_states: int = 3,
    max_actions: int = 2,
    *,
    integer_rewards: bool = False,
    sparsity: float = 0.0,
    sense: str = "max",
) -> FiniteMdm:
    """Random model with 1..max_actions actions per (n, i).

    ``integer_rewards`` draws rewards from -5..5, which produces exact ties
    between strategies more often.
    """
    rng = np.random.default_rng(rng)
    N, S = horizon, n_states
    transitions, rewards = [], []
    for _ in range(N):
        per_t, per_r = [], []
        for _ in range(S):
            A = int(rng.integers(1, max_actions + 1))
            per_t.append(_rows(rng, A, S, sparsity))
            per_r.append(rng.integers(-5, 6, A).astype(float) if integer_rewards else rng.normal(size=A))
        transitions.append(per_t)
        rewards.append(per_r)
    terminal = rng.integers(-5, 6, S).astype(float) if integer_rewards else rng.normal(size=S)
    return from_arrays(transitions, rewards, terminal, sense=sense)


def random_direction(rng, mdm: FiniteMdm, sparsity: float = 0.0) -> TransitionFunction:
    """Random target transition function with the rows of ``mdm``."""
    rng = np.random.default_rng(rng)
    keys = mdm.row_keys()
    rows = _rows(rng, len(keys), mdm.n_states, sparsity)
    return TransitionFunction(dict(zip(keys, rows)))
