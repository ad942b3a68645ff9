"""Finite Markov decision models: data types, validation and compiled arrays.

A model stores its transition rows and stage rewards keyed by
``(n, i, action)`` where ``n`` is the decision epoch, ``i`` the state index
and ``action`` an admissible action label.  Validation is report-style: a
malformed model can be constructed and inspected, but every numerical
operation goes through :attr:`FiniteMdm.compiled`, which refuses to build
arrays for an invalid model.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from types import MappingProxyType
from typing import Hashable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import ShapeError, ValidationError

RENORM_TOL = 1e-9
IDEMPOTENT_TOL = 1e-14
ROW_TOL = 1e-12

Key = tuple  # (n, i, action label)


class Sense(enum.Enum):
    MAXIMIZE = "max"
    MINIMIZE = "min"

    @property
    def sign(self) -> float:
        return 1.0 if self is Sense.MAXIMIZE else -1.0

    @classmethod
    def coerce(cls, value) -> "Sense":
        if isinstance(value, Sense):
            return value
        text = str(value).lower()
        if text in ("max", "maximize"):
            return cls.MAXIMIZE
        if text in ("min", "minimize"):
            return cls.MINIMIZE
        raise ValidationError(f"unknown objective sense {value!r}")


def _ingest_row(values) -> np.ndarray:
    row = np.array(values, dtype=np.float64).reshape(-1)
    total = row.sum()
    # rows already normalized to rounding level are left untouched so that
    # re-ingesting a serialized row is the identity
    if (
        np.all(np.isfinite(row))
        and np.all(row >= 0)
        and IDEMPOTENT_TOL < abs(total - 1.0) <= RENORM_TOL
    ):
        row = row / total
    row.setflags(write=False)
    return row


class TransitionFunction(Mapping):
    """Immutable family of one-step transition rows.

    ``P[(n, i, a)]`` is the probability vector over target states for epoch
    ``n``, state index ``i`` and action label ``a``.  Rows whose sum is within
    1e-9 of one are renormalized on construction; larger deviations are kept
    so that :func:`validate` can report them.
    """

    __slots__ = ("_rows",)

    def __init__(self, rows: Mapping[Key, Sequence[float]]):
        ingested = {}
        for key, values in rows.items():
            n, i, a = key
            ingested[(int(n), int(i), a)] = _ingest_row(values)
        object.__setattr__(self, "_rows", MappingProxyType(ingested))

    def __setattr__(self, name, value):
        raise AttributeError("TransitionFunction is immutable")

    def __getitem__(self, key: Key) -> np.ndarray:
        return self._rows[key]

    def __iter__(self) -> Iterator[Key]:
        return iter(self._rows)

    def __len__(self) -> int:
        return len(self._rows)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TransitionFunction):
            return NotImplemented
        if set(self._rows) != set(other._rows):
            return False
        return all(
            self._rows[k].shape == other._rows[k].shape
            and np.array_equal(self._rows[k], other._rows[k])
            for k in self._rows
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"TransitionFunction({len(self._rows)} rows)"

    def shape_compatible(self, other: "TransitionFunction") -> bool:
        if set(self._rows) != set(other._rows):
            return False
        return all(self._rows[k].shape == other._rows[k].shape for k in self._rows)

    def stacked(self, keys: Iterable[Key]) -> np.ndarray:
        """Rows for ``keys`` stacked into a C-contiguous matrix."""
        return np.ascontiguousarray(np.stack([self._rows[k] for k in keys]))


@dataclass(frozen=True, eq=False)
class Strategy:
    """Deterministic Markov strategy: ``rules[n][i]`` is the action at (n, i)."""

    rules: tuple

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(tuple(rule) for rule in self.rules))

    @property
    def horizon(self) -> int:
        return len(self.rules)

    def __call__(self, n: int, i: int):
        return self.rules[n][i]

    def __eq__(self, other):
        if not isinstance(other, Strategy):
            return NotImplemented
        return self.rules == other.rules

    def __hash__(self):
        return hash(self.rules)

    def __repr__(self):
        return f"Strategy({self.rules!r})"


@dataclass(frozen=True)
class Issue:
    kind: str
    location: str
    detail: str

    def __str__(self):
        return f"{self.kind} at {self.location}: {self.detail}"


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def __len__(self):
        return len(self.issues)

    def __iter__(self):
        return iter(self.issues)

    def __bool__(self):
        # truthy when there is something to report
        return bool(self.issues)


@dataclass(frozen=True)
class CompiledMdm:
    """Flat array form of a validated model, consumed by the kernels.

    Rows are stacked epoch-major, then by state, then by action position, so
    the rows of epoch ``n`` form the contiguous block
    ``offsets[n, 0] : offsets[n, 0] + counts[n].sum()``.
    """

    P: np.ndarray  # (R, S) transition rows
    r: np.ndarray  # (R,) stage rewards aligned with P
    rN: np.ndarray  # (S,) terminal rewards
    offsets: np.ndarray  # (N, S) first row of each (n, i)
    counts: np.ndarray  # (N, S) number of admissible actions
    keys: tuple  # row keys in stacking order
    sign: float

    @property
    def horizon(self) -> int:
        return self.offsets.shape[0]

    @property
    def n_states(self) -> int:
        return self.rN.shape[0]

    def rows(self, choice: np.ndarray) -> np.ndarray:
        return self.offsets + choice


def _label_list(values) -> tuple:
    return tuple(_freeze(v) for v in values)


def _freeze(label):
    if isinstance(label, list):
        return tuple(_freeze(v) for v in label)
    return label


@dataclass(frozen=True, eq=False)
class FiniteMdm:
    """Finite-horizon Markov decision model.

    Parameters
    ----------
    horizon : int
        Number of decision epochs ``N``.
    states : sequence
        Hashable state labels; index ``i`` refers to ``states[i]``.
    actions : nested sequence
        ``actions[n][i]`` is the ordered admissible action list at (n, i).
    transitions : TransitionFunction or mapping
        Rows keyed by ``(n, i, action)``.
    stage_rewards : mapping
        ``r_n(x_i, a)`` keyed like the transitions.
    terminal_rewards : sequence of float
        ``r_N(x_i)`` per state.
    sense : Sense or {"max", "min"}
    """

    horizon: int
    states: tuple
    actions: tuple
    transitions: TransitionFunction
    stage_rewards: Mapping
    terminal_rewards: np.ndarray
    sense: Sense = Sense.MAXIMIZE

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "states", _label_list(self.states))
        set_(self, "actions", tuple(tuple(_label_list(a) for a in per_n) for per_n in self.actions))
        if not isinstance(self.transitions, TransitionFunction):
            set_(self, "transitions", TransitionFunction(self.transitions))
        rewards = {(int(n), int(i), a): float(v) for (n, i, a), v in self.stage_rewards.items()}
        set_(self, "stage_rewards", MappingProxyType(rewards))
        terminal = np.array(self.terminal_rewards, dtype=np.float64).reshape(-1)
        terminal.setflags(write=False)
        set_(self, "terminal_rewards", terminal)
        set_(self, "sense", Sense.coerce(self.sense))

    @property
    def n_states(self) -> int:
        return len(self.states)

    def row_keys(self) -> list:
        return [
            (n, i, a)
            for n in range(len(self.actions))
            for i in range(len(self.actions[n]))
            for a in self.actions[n][i]
        ]

    def __eq__(self, other):
        if not isinstance(other, FiniteMdm):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and self.states == other.states
            and self.actions == other.actions
            and self.transitions == other.transitions
            and dict(self.stage_rewards) == dict(other.stage_rewards)
            and np.array_equal(self.terminal_rewards, other.terminal_rewards)
            and self.sense is other.sense
        )

    __hash__ = object.__hash__

    @cached_property
    def report(self) -> ValidationReport:
        return _validate(self)

    @cached_property
    def compiled(self) -> CompiledMdm:
        report = self.report
        if not report.ok:
            raise ValidationError(
                f"model is not well-formed ({len(report)} issues): {report.issues[0]}",
                report.issues,
            )
        N, S = self.horizon, self.n_states
        counts = np.array([[len(self.actions[n][i]) for i in range(S)] for n in range(N)], dtype=np.intp)
        offsets = np.zeros((N, S), dtype=np.intp)
        offsets.ravel()[1:] = np.cumsum(counts.ravel())[:-1]
        keys = tuple(self.row_keys())
        P = self.transitions.stacked(keys)
        r = np.array([self.stage_rewards[k] for k in keys], dtype=np.float64)
        rN = np.ascontiguousarray(self.terminal_rewards, dtype=np.float64)
        for arr in (P, r, rN, offsets, counts):
            arr.setflags(write=False)
        return CompiledMdm(P, r, rN, offsets, counts, keys, self.sense.sign)

    @cached_property
    def _action_index(self) -> tuple:
        return tuple(
            tuple({a: k for k, a in enumerate(acts)} for acts in per_n) for per_n in self.actions
        )

    def with_transitions(self, transitions: TransitionFunction) -> "FiniteMdm":
        return FiniteMdm(
            self.horizon,
            self.states,
            self.actions,
            transitions,
            self.stage_rewards,
            self.terminal_rewards,
            self.sense,
        )

    def direction_matrix(self, Q: TransitionFunction) -> np.ndarray:
        """Stack the rows of a target ``Q`` in this model's row order."""
        keys = self.compiled.keys
        if not isinstance(Q, TransitionFunction):
            raise ShapeError("direction target must be a TransitionFunction")
        if set(Q) != set(keys):
            missing = len(set(keys) - set(Q))
            extra = len(set(Q) - set(keys))
            raise ShapeError(f"direction rows do not match model ({missing} missing, {extra} extra)")
        M = Q.stacked(keys)
        if M.shape != self.compiled.P.shape:
            raise ShapeError("direction rows have the wrong length")
        return M

    def choice_indices(self, strategy: Strategy) -> np.ndarray:
        """Action positions ``choice[n, i]`` of ``strategy`` within ``actions[n][i]``."""
        N, S = self.horizon, self.n_states
        rules = strategy.rules
        if len(rules) != N or any(len(rule) != S for rule in rules):
            raise ShapeError(
                f"strategy shape {[len(r) for r in rules]} does not match horizon {N} x {S} states"
            )
        index = self._action_index
        choice = np.empty((N, S), dtype=np.intp)
        for n in range(N):
            for i in range(S):
                try:
                    choice[n, i] = index[n][i][rules[n][i]]
                except (KeyError, TypeError):
                    raise ValidationError(
                        f"strategy action {rules[n][i]!r} is not admissible at n={n}, state {self.states[i]!r}"
                    ) from None
        return choice

    def strategy_from_choice(self, choice) -> Strategy:
        choice = np.asarray(choice)
        return Strategy(
            tuple(
                tuple(self.actions[n][i][int(choice[n, i])] for i in range(self.n_states))
                for n in range(self.horizon)
            )
        )

    def strategy_key(self, strategy: Strategy) -> tuple:
        """Sort key giving the lexicographic order on (n, state, action index)."""
        return tuple(self.choice_indices(strategy).ravel().tolist())


def validate(mdm: FiniteMdm) -> ValidationReport:
    """List every violated structural invariant of ``mdm``."""
    return mdm.report


def _validate(mdm: FiniteMdm) -> ValidationReport:
    issues: list[Issue] = []
    add = lambda kind, where, detail: issues.append(Issue(kind, where, detail))

    N = mdm.horizon
    if not isinstance(N, (int, np.integer)) or isinstance(N, bool) or N < 1:
        add("horizon", "model", f"horizon must be an integer >= 1, got {N!r}")
        return ValidationReport(tuple(issues))
    S = mdm.n_states
    if S < 1:
        add("states", "model", "state list is empty")
    if len(set(mdm.states)) != S:
        add("states", "model", "state labels are not unique")
    if len(mdm.actions) != N:
        add("actions", "model", f"action table has {len(mdm.actions)} epochs, horizon is {N}")
    admissible = {}
    for n, per_n in enumerate(mdm.actions[:N]):
        if len(per_n) != S:
            add("actions", f"n={n}", f"{len(per_n)} action sets for {S} states")
        for i, acts in enumerate(per_n[:S]):
            if not acts:
                add("actions", f"n={n}, i={i}", "empty admissible action set")
            if len(set(acts)) != len(acts):
                add("actions", f"n={n}, i={i}", "duplicate action labels")
            for a in acts:
                admissible[(n, i, a)] = True

    if mdm.terminal_rewards.shape != (S,):
        add("terminal_rewards", "model", f"expected {S} values, got {mdm.terminal_rewards.size}")
    elif not np.all(np.isfinite(mdm.terminal_rewards)):
        add("terminal_rewards", "model", "non-finite terminal reward")

    for key, row in mdm.transitions.items():
        n, i, a = key
        where = f"(n={n}, i={i}, a={a!r})"
        if not (0 <= n < N and 0 <= i < S):
            add("index", where, "transition row outside the index ranges")
            continue
        if key not in admissible:
            add("admissibility", where, f"action {a!r} is not admissible")
            continue
        if row.shape != (S,):
            add("row_length", where, f"row has length {row.size}, expected {S}")
            continue
        if not np.all(np.isfinite(row)):
            add("row_values", where, "non-finite probability")
            continue
        if np.any(row < 0):
            add("row_values", where, f"negative probability {float(row.min())!r}")
        dev = float(row.sum() - 1.0)
        if abs(dev) > ROW_TOL:
            add("row_sum", where, f"row sums to {float(row.sum())!r} (deviation {abs(dev):.6g})")
    for key in admissible:
        if key not in mdm.transitions:
            add("missing_row", f"(n={key[0]}, i={key[1]}, a={key[2]!r})", "no transition row")

    for key, value in mdm.stage_rewards.items():
        n, i, a = key
        where = f"(n={n}, i={i}, a={a!r})"
        if key not in admissible:
            add("admissibility", where, f"reward references inadmissible action {a!r}")
        elif not math.isfinite(value):
            add("reward", where, "non-finite stage reward")
    for key in admissible:
        if key not in mdm.stage_rewards:
            add("missing_reward", f"(n={key[0]}, i={key[1]}, a={key[2]!r})", "no stage reward")

    return ValidationReport(tuple(issues))


def from_arrays(
    transitions,
    stage_rewards,
    terminal_rewards,
    *,
    states: Sequence[Hashable] | None = None,
    sense="max",
) -> FiniteMdm:
    """Build a model from nested per-epoch arrays.

    ``transitions[n][i]`` is a ``(A, S)`` array of rows and
    ``stage_rewards[n][i]`` the matching ``(A,)`` rewards; actions are
    labelled ``0..A-1``.
    """
    N = len(transitions)
    S = len(terminal_rewards)
    states = tuple(range(S)) if states is None else tuple(states)
    actions, rows, rewards = [], {}, {}
    for n in range(N):
        per_n = []
        for i in range(S):
            block = np.atleast_2d(np.asarray(transitions[n][i], dtype=np.float64))
            rew = np.atleast_1d(np.asarray(stage_rewards[n][i], dtype=np.float64))
            per_n.append(tuple(range(block.shape[0])))
            for a in range(block.shape[0]):
                rows[(n, i, a)] = block[a]
                rewards[(n, i, a)] = float(rew[a])
        actions.append(tuple(per_n))
    return FiniteMdm(N, states, tuple(actions), TransitionFunction(rows), rewards, terminal_rewards, sense)
