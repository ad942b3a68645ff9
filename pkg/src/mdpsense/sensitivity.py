"""First-order sensitivity of values with respect to mixture perturbations.

A direction is given by a target transition function ``Q``; the perturbed
model uses ``(1 - eps) * P + eps * Q``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .errors import CapExceededError, ShapeError
from .model import FiniteMdm, Strategy, TransitionFunction
from .solve import (
    ORACLE_CAP,
    TIE_TOL,
    StrategySet,
    StrategySetKind,
    enumerate_optimal_strategies,
    enumeration_cap,
    reward_iteration,
    solve_bellman,
    tie_slack,
    _all_actions,
    _choice_chunks,
    _product_size,
)


@dataclass(frozen=True)
class SensitivityResult:
    derivative: np.ndarray  # (S,) per initial state
    achieving: tuple  # Strategy per initial state
    kind: StrategySetKind
    breakdown: dict | None = field(default=None, repr=False)


@dataclass(frozen=True)
class FdRow:
    eps: float
    quotient: float
    error: float


def mixture(P: TransitionFunction, Q: TransitionFunction, eps: float) -> TransitionFunction:
    """Row-wise convex combination ``(1 - eps) P + eps Q``."""
    eps = float(eps)
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"mixture weight must lie in [0, 1], got {eps}")
    if not P.shape_compatible(Q):
        raise ShapeError("transition functions are not shape-compatible")
    if eps == 0.0:
        return P
    if eps == 1.0:
        return Q
    # rows that Q leaves unchanged are kept bit-exact
    return TransitionFunction(
        {k: P[k] if np.array_equal(P[k], Q[k]) else (1.0 - eps) * P[k] + eps * Q[k] for k in P}
    )


def _direction(mdm: FiniteMdm, Q: TransitionFunction) -> np.ndarray:
    return np.ascontiguousarray(mdm.direction_matrix(Q) - mdm.compiled.P)


def frechet_fixed(mdm: FiniteMdm, strategy: Strategy, Q: TransitionFunction) -> np.ndarray:
    """Derivative tables of a fixed strategy's values in direction ``Q - P``.

    Row ``[0]`` holds the derivative at each initial state; row ``[N]`` is
    zero.
    """
    c = mdm.compiled
    D = _direction(mdm, Q)
    choice = mdm.choice_indices(strategy)
    V = kernels.policy_values(c.P, c.r, c.rN, c.offsets, choice)
    return kernels.policy_derivative(c.P, D, V, c.offsets, choice)


def frechet_fixed_direct(
    mdm: FiniteMdm, strategy: Strategy, Q: TransitionFunction, x0: int, *, cap: int = ORACLE_CAP
) -> float:
    """Fixed-strategy derivative by explicit summation over state paths.

    For each epoch ``j`` the kernel of that step is replaced by ``Q - P``
    and the rewards collected after ``j`` are summed over all paths.  This
    uses stage rewards directly and never forms the value tables.
    """
    c = mdm.compiled
    D = _direction(mdm, Q)
    choice = mdm.choice_indices(strategy)
    N, S = c.offsets.shape
    if S**N > cap:
        raise CapExceededError("path enumeration", S**N, cap)
    total = 0.0
    for j in range(N):
        weight = np.ones(1)
        payoff = np.zeros(1)
        last = np.array([x0], dtype=np.intp)
        for n in range(N):
            rows = c.offsets[n, last] + choice[n, last]
            if n > j:
                payoff = payoff + c.r[rows]
            kernel = D[rows] if n == j else c.P[rows]
            weight = (weight[:, None] * kernel).ravel()
            payoff = np.repeat(payoff, S)
            last = np.tile(np.arange(S), rows.size)
        total += float(np.sum(weight * (payoff + c.rN[last])))
    return total


def hadamard_optimal(
    mdm: FiniteMdm, Q: TransitionFunction, strategies: StrategySet, *, breakdown: bool = True
) -> SensitivityResult:
    """Derivative of the optimal value: opt over ``strategies`` of fixed-strategy derivatives.

    Ties go to the lexicographically smallest strategy.
    """
    if len(strategies) == 0:
        raise ValueError("strategy set is empty")
    c = mdm.compiled
    D = _direction(mdm, Q)
    order = sorted(strategies, key=mdm.strategy_key)
    choices = np.ascontiguousarray(np.stack([mdm.choice_indices(s) for s in order]))
    _, ders = kernels.batch_initial_derivatives(c.P, D, c.r, c.rN, c.offsets, choices)
    best = np.argmax(c.sign * ders, axis=0)
    S = c.n_states
    derivative = ders[best, np.arange(S)]
    achieving = tuple(order[k] for k in best)
    table = {s: ders[k].copy() for k, s in enumerate(order)} if breakdown else None
    return SensitivityResult(derivative, achieving, strategies.kind, table)


def _optimal_initial(mdm: FiniteMdm) -> np.ndarray:
    return solve_bellman(mdm).values[0]


def fd_quotient(mdm: FiniteMdm, Q: TransitionFunction, eps: float, x0: int | None = None):
    """Forward difference of the optimal value along the segment toward ``Q``.

    The perturbed model is re-solved by the Bellman recursion, so the
    strategy is re-optimized.  Returns an array over initial states when
    ``x0`` is None.
    """
    eps = float(eps)
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    mixed = mdm.with_transitions(mixture(mdm.transitions, Q, eps))
    quot = (_optimal_initial(mixed) - _optimal_initial(mdm)) / eps
    return quot if x0 is None else float(quot[x0])


def fd_quotient_fixed(
    mdm: FiniteMdm, strategy: Strategy, Q: TransitionFunction, eps: float, x0: int | None = None
):
    """Forward difference of a fixed strategy's value along the segment toward ``Q``."""
    eps = float(eps)
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    mixed = mdm.with_transitions(mixture(mdm.transitions, Q, eps))
    quot = (reward_iteration(mixed, strategy)[0] - reward_iteration(mdm, strategy)[0]) / eps
    return quot if x0 is None else float(quot[x0])


def fd_report(
    mdm: FiniteMdm,
    Q: TransitionFunction,
    eps_grid,
    x0: int,
    strategies: StrategySet | None = None,
) -> list:
    """Rows ``(eps, quotient, |quotient - derivative|)`` over ``eps_grid``.

    The derivative is taken over the exact optimal set restricted to
    maximizer-built candidates unless ``strategies`` is given.
    """
    if strategies is None:
        strategies = enumerate_optimal_strategies(mdm, "exact", prefilter=True)
    deriv = float(hadamard_optimal(mdm, Q, strategies, breakdown=False).derivative[x0])
    rows = []
    for eps in eps_grid:
        quot = fd_quotient(mdm, Q, eps, x0)
        rows.append(FdRow(float(eps), quot, abs(quot - deriv)))
    return rows


@dataclass(frozen=True)
class RemainderBound:
    fixed: float  # bound on |fd_quotient_fixed - frechet_fixed| / eps, any strategy
    optimal: np.ndarray  # per initial state, for the re-optimized quotient
    derivative: np.ndarray  # opt over the exact set, per initial state


def remainder_bound(
    mdm: FiniteMdm, Q: TransitionFunction, *, cap: int | None = None, tie_tol: float = TIE_TOL
) -> RemainderBound:
    """A priori constants ``C`` with ``|quotient(eps) - derivative| <= C * eps`` on (0, 1].

    Expanding the value along the segment gives a polynomial of degree N in
    eps whose order-m coefficient is at most ``binom(N, m) 2^m R`` with
    ``R = sum_n max|r_n| + max|r_N|``; summing m >= 2 gives the fixed bound
    ``(3^N - 1 - 2N) R``.  For the re-optimized value each suboptimal
    strategy with gap ``g > 0`` and derivative excess ``d`` can lift the
    quotient by at most ``eps * d^2 / (4 g)``.  Requires enumerating every
    strategy.
    """
    c = mdm.compiled
    N, S = c.offsets.shape
    sign = c.sign
    R = sum(float(np.max(np.abs(c.r[c.offsets[n, 0]:c.offsets[n, 0] + c.counts[n].sum()]))) for n in range(N))
    R += float(np.max(np.abs(c.rN)))
    fixed = (3.0**N - 1.0 - 2.0 * N) * R

    cap = enumeration_cap(cap)
    candidates = _all_actions(mdm)
    size = _product_size(candidates)
    if size > cap:
        raise CapExceededError("remainder bound enumeration", size, cap)
    D = _direction(mdm, Q)
    V0 = solve_bellman(mdm, tie_tol).values[0]
    slack = tie_slack(V0, tie_tol)
    vals, ders = [], []
    for choices in _choice_chunks(candidates, N, S):
        v, d = kernels.batch_initial_derivatives(c.P, D, c.r, c.rN, c.offsets, choices)
        vals.append(v)
        ders.append(d)
    vals = np.concatenate(vals)
    ders = np.concatenate(ders)
    gap = sign * (V0 - vals)
    exact = np.all(gap <= slack, axis=1)
    deriv = sign * np.max(sign * ders[exact], axis=0)
    excess = np.maximum(sign * (ders - deriv), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lift = np.where(gap > slack, excess**2 / (4.0 * np.maximum(gap, slack)), 0.0)
    # strategies optimal at x0 must not beat the exact-set derivative there
    lift = np.where((gap <= slack) & (excess > 1e-9 * (1.0 + np.abs(deriv))), np.inf, lift)
    return RemainderBound(fixed, fixed + lift.max(axis=0), deriv)
