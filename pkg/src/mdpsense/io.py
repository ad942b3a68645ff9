"""JSON documents for models, strategies, directions, measures and demo specs.

Transition rows and stage rewards are keyed ``"n/state/action"`` where
``state`` and ``action`` are rendered with :func:`label_key`.  Tuple labels
are written as JSON arrays and read back as tuples.
"""
from __future__ import annotations

import json
import math
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from .errors import MdpSenseError
from .finance import FinanceModel, Lognormal
from .inventory import InventorySpec, build_inventory_mdm, demand_direction
from .metrics import DiscreteMeasure
from .model import FiniteMdm, Strategy, TransitionFunction

MODEL_KEYS = ("horizon", "states", "actions", "transitions", "stage_rewards", "terminal_rewards", "sense")
INVENTORY_KEYS = ("horizon", "capacity", "revenue", "order_cost", "fixed_cost", "holding_cost", "demand")


class ParseError(MdpSenseError, ValueError):
    """A document could not be read or does not follow the schema."""


def read_json(path) -> object:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _check_keys(doc, allowed, what, required=()):
    if not isinstance(doc, dict):
        raise ParseError(f"{what} must be a JSON object")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ParseError(f"unknown {what} keys: {unknown}")
    missing = [k for k in required if k not in doc]
    if missing:
        raise ParseError(f"{what} is missing keys: {missing}")


def label_key(label) -> str:
    if isinstance(label, bool) or label is None:
        raise ParseError(f"unsupported label {label!r}")
    if isinstance(label, tuple):
        return ",".join(label_key(v) for v in label)
    if isinstance(label, (int, np.integer)):
        return str(int(label))
    if isinstance(label, (float, np.floating)):
        return repr(float(label))
    if isinstance(label, str):
        return label
    raise ParseError(f"unsupported label type {type(label).__name__}")


def label_to_json(label):
    if isinstance(label, tuple):
        return [label_to_json(v) for v in label]
    if isinstance(label, np.integer):
        return int(label)
    if isinstance(label, np.floating):
        return float(label)
    return label


def label_from_json(value):
    if isinstance(value, list):
        return tuple(label_from_json(v) for v in value)
    if isinstance(value, bool) or value is None or isinstance(value, dict):
        raise ParseError(f"unsupported label {value!r}")
    return value


def row_key(n: int, state, action) -> str:
    return f"{n}/{label_key(state)}/{label_key(action)}"


# -- models -----------------------------------------------------------------


def model_to_dict(mdm: FiniteMdm) -> dict:
    states = mdm.states
    if len({label_key(s) for s in states}) != len(states):
        raise ParseError("state labels collide once rendered as row keys")
    transitions, rewards = {}, {}
    for key, row in mdm.transitions.items():
        n, i, a = key
        transitions[row_key(n, states[i], a)] = [float(v) for v in row]
    for (n, i, a), value in mdm.stage_rewards.items():
        rewards[row_key(n, states[i], a)] = float(value)
    return {
        "horizon": int(mdm.horizon),
        "states": [label_to_json(s) for s in states],
        "actions": [[[label_to_json(a) for a in acts] for acts in per_n] for per_n in mdm.actions],
        "transitions": transitions,
        "stage_rewards": rewards,
        "terminal_rewards": [float(v) for v in mdm.terminal_rewards],
        "sense": mdm.sense.value,
    }


def _key_resolver(horizon, states, actions):
    """Map a ``"n/state/action"`` key to ``(n, i, action)``.

    Keys naming an unknown state become an out-of-range index and unknown
    actions keep their text, so that validation reports them instead of the
    parser rejecting the whole document.
    """
    state_keys = {label_key(s): i for i, s in enumerate(states)}
    exact = {}
    for n, per_n in enumerate(actions):
        for i, acts in enumerate(per_n):
            if i >= len(states):
                continue
            for a in acts:
                exact[row_key(n, states[i], a)] = (n, i, a)

    def resolve(text: str):
        if text in exact:
            return exact[text]
        head, sep, rest = text.partition("/")
        try:
            n = int(head)
        except ValueError:
            raise ParseError(f"row key {text!r} does not start with an epoch number") from None
        if not sep:
            raise ParseError(f"row key {text!r} is not of the form n/state/action")
        for skey, i in state_keys.items():
            if rest.startswith(skey + "/"):
                return (n, i, rest[len(skey) + 1:])
        return (n, -1, rest)

    return resolve


def _number(value, what):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{what} must be a number, got {value!r}")
    return float(value)


def model_from_dict(doc) -> FiniteMdm:
    _check_keys(doc, MODEL_KEYS, "model", required=MODEL_KEYS[:-1])
    horizon = doc["horizon"]
    if isinstance(horizon, bool) or not isinstance(horizon, int):
        raise ParseError(f"horizon must be an integer, got {horizon!r}")
    if not isinstance(doc["states"], list):
        raise ParseError("states must be an array")
    states = tuple(label_from_json(s) for s in doc["states"])
    acts_doc = doc["actions"]
    if not isinstance(acts_doc, list) or not all(
        isinstance(per_n, list) and all(isinstance(acts, list) for acts in per_n) for per_n in acts_doc
    ):
        raise ParseError("actions must be nested arrays [n][state][action]")
    actions = tuple(tuple(tuple(label_from_json(a) for a in acts) for acts in per_n) for per_n in acts_doc)
    resolve = _key_resolver(horizon, states, actions)

    for name in ("transitions", "stage_rewards"):
        if not isinstance(doc[name], dict):
            raise ParseError(f"{name} must be an object keyed 'n/state/action'")
    rows = {}
    for text, row in doc["transitions"].items():
        if not isinstance(row, list):
            raise ParseError(f"transition row {text!r} must be an array")
        rows[resolve(text)] = [_number(v, f"transition entry {text!r}") for v in row]
    rewards = {resolve(text): _number(v, f"reward {text!r}") for text, v in doc["stage_rewards"].items()}
    terminal = doc["terminal_rewards"]
    if not isinstance(terminal, list):
        raise ParseError("terminal_rewards must be an array")
    terminal = [_number(v, "terminal reward") for v in terminal]
    sense = doc.get("sense", "max")
    if sense not in ("max", "min"):
        raise ParseError(f"sense must be 'max' or 'min', got {sense!r}")
    return FiniteMdm(horizon, states, actions, TransitionFunction(rows), rewards, terminal, sense)


def transitions_from_dict(doc, mdm: FiniteMdm) -> TransitionFunction:
    if not isinstance(doc, dict):
        raise ParseError("transitions must be an object keyed 'n/state/action'")
    resolve = _key_resolver(mdm.horizon, mdm.states, mdm.actions)
    rows = {}
    for text, row in doc.items():
        if not isinstance(row, list):
            raise ParseError(f"transition row {text!r} must be an array")
        rows[resolve(text)] = [_number(v, f"transition entry {text!r}") for v in row]
    return TransitionFunction(rows)


# -- strategies ---------------------------------------------------------------


def strategy_to_dict(strategy: Strategy) -> dict:
    return {"rules": [[label_to_json(a) for a in rule] for rule in strategy.rules]}


def strategy_from_dict(doc) -> Strategy:
    _check_keys(doc, ("rules",), "strategy", required=("rules",))
    rules = doc["rules"]
    if not isinstance(rules, list) or not all(isinstance(rule, list) for rule in rules):
        raise ParseError("strategy rules must be nested arrays [n][state]")
    return Strategy(tuple(tuple(label_from_json(a) for a in rule) for rule in rules))


# -- measures -----------------------------------------------------------------


def measure_to_dict(measure: DiscreteMeasure) -> dict:
    return {"points": [float(v) for v in measure.points], "masses": [float(v) for v in measure.masses]}


def measure_from_dict(doc):
    """A discrete measure ``{"points", "masses"}`` or a lognormal ``{"lognormal": {"m", "s2"}}``."""
    if isinstance(doc, dict) and "lognormal" in doc:
        _check_keys(doc, ("lognormal",), "measure")
        _check_keys(doc["lognormal"], ("m", "s2"), "lognormal", required=("m", "s2"))
        return Lognormal(_number(doc["lognormal"]["m"], "m"), _number(doc["lognormal"]["s2"], "s2"))
    _check_keys(doc, ("points", "masses"), "measure", required=("points",))
    points = doc["points"]
    if not isinstance(points, list) or not points:
        raise ParseError("measure points must be a non-empty array")
    points = [_number(v, "measure point") for v in points]
    masses = doc.get("masses")
    if masses is not None:
        if not isinstance(masses, list):
            raise ParseError("measure masses must be an array")
        masses = [_number(v, "measure mass") for v in masses]
    return DiscreteMeasure(points, masses)


# -- demo specs -----------------------------------------------------------------


def inventory_spec_to_dict(spec: InventorySpec) -> dict:
    return {
        "horizon": spec.horizon,
        "capacity": spec.capacity,
        "revenue": spec.revenue,
        "order_cost": spec.order_cost,
        "fixed_cost": spec.fixed_cost,
        "holding_cost": spec.holding_cost,
        "demand": [list(d) for d in spec.demand],
    }


def inventory_spec_from_dict(doc) -> InventorySpec:
    if isinstance(doc, dict) and set(doc) == {"inventory"}:
        doc = doc["inventory"]
    _check_keys(doc, INVENTORY_KEYS, "inventory spec", required=INVENTORY_KEYS)
    demand = doc["demand"]
    if not isinstance(demand, list) or not demand:
        raise ParseError("demand must be a density or a list of densities")
    if all(isinstance(d, list) for d in demand):
        demand = tuple(tuple(_number(v, "demand mass") for v in d) for d in demand)
    else:
        demand = tuple(_number(v, "demand mass") for v in demand)
    for key in ("horizon", "capacity"):
        if isinstance(doc[key], bool) or not isinstance(doc[key], int):
            raise ParseError(f"{key} must be an integer")
    return InventorySpec(
        doc["horizon"], doc["capacity"],
        *(_number(doc[k], k) for k in ("revenue", "order_cost", "fixed_cost", "holding_cost")),
        demand,
    )


FINANCE_KEYS = {
    "bsm": ("kind", "mu", "sigma", "nu", "alpha", "N", "x0"),
    "crr": ("kind", "p", "u", "d", "r", "alpha", "N", "x0"),
    "discrete": ("kind", "horizon", "bond_rates", "returns", "alpha", "x0"),
}


def finance_model_from_dict(doc) -> FinanceModel:
    if not isinstance(doc, dict) or doc.get("kind") not in FINANCE_KEYS:
        raise ParseError(f"finance spec needs 'kind' in {sorted(FINANCE_KEYS)}")
    kind = doc["kind"]
    allowed = FINANCE_KEYS[kind]
    required = tuple(k for k in allowed if k not in ("x0", "N"))
    _check_keys(doc, allowed, f"{kind} finance spec", required=required)
    x0 = _number(doc.get("x0", 1.0), "x0")
    if kind == "bsm":
        N = doc.get("N", 12)
        if isinstance(N, bool) or not isinstance(N, int):
            raise ParseError("N must be an integer")
        return FinanceModel.bsm(*(_number(doc[k], k) for k in ("mu", "sigma", "nu", "alpha")), N, x0)
    if kind == "crr":
        if "N" not in doc or isinstance(doc["N"], bool) or not isinstance(doc["N"], int):
            raise ParseError("crr finance spec needs an integer N")
        return FinanceModel.crr(*(_number(doc[k], k) for k in ("p", "u", "d", "r", "alpha")), doc["N"], x0)
    if not isinstance(doc["returns"], list) or not isinstance(doc["bond_rates"], list):
        raise ParseError("returns and bond_rates must be arrays")
    returns = tuple(measure_from_dict(m) for m in doc["returns"])
    rates = tuple(_number(r, "bond rate") for r in doc["bond_rates"])
    return FinanceModel(doc["horizon"], rates, returns, _number(doc["alpha"], "alpha"), x0)


# -- directions -------------------------------------------------------------------


def direction_from_dict(doc, *, mdm: FiniteMdm | None = None, inventory: InventorySpec | None = None,
                        finance: FinanceModel | None = None):
    """Resolve a direction document against the model it perturbs.

    Returns a :class:`TransitionFunction` for finite models and a tuple of
    return laws for finance models.
    """
    if not isinstance(doc, dict):
        raise ParseError("direction must be a JSON object")
    if "transitions" in doc:
        _check_keys(doc, ("transitions",), "direction")
        if mdm is None:
            raise ParseError("a transitions override needs a finite model")
        return transitions_from_dict(doc["transitions"], mdm)
    kind = doc.get("kind")
    if kind == "inventory-demand":
        _check_keys(doc, ("kind", "j"), "direction", required=("j",))
        if inventory is None:
            raise ParseError("an inventory-demand direction needs an inventory model")
        j = doc["j"]
        if isinstance(j, bool) or not isinstance(j, int):
            raise ParseError("j must be an integer")
        return demand_direction(inventory, j)
    if kind == "finance-jump":
        _check_keys(doc, ("kind", "delta", "periods"), "direction", required=("delta", "periods"))
        if finance is None:
            raise ParseError("a finance-jump direction needs a finance model")
        from .finance import jump_direction

        periods = doc["periods"]
        if not isinstance(periods, list) or any(isinstance(p, bool) or not isinstance(p, int) for p in periods):
            raise ParseError("periods must be an array of integers")
        return jump_direction(finance, _number(doc["delta"], "delta"), periods)
    raise ParseError("direction needs 'transitions' or a kind in ['finance-jump', 'inventory-demand']")


def load_model_document(doc):
    """Dispatch a model-like document.

    Returns ``(mdm, inventory_spec)``; the spec is ``None`` unless the
    document describes an inventory problem.
    """
    if isinstance(doc, dict) and ("inventory" in doc or "capacity" in doc):
        spec = inventory_spec_from_dict(doc)
        return build_inventory_mdm(spec), spec
    return model_from_dict(doc), None


def full(value):
    """Nested floats at full precision, ready for JSON."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return _json_float(float(arr))
    return [full(v) for v in arr]


def rounded(value, digits: int = 4):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        x = float(arr)
        if not math.isfinite(x):
            return _json_float(x)
        # decimal half-away-from-zero on the shortest repr, so 16.53125 -> 16.5313
        q = Decimal(repr(x)).quantize(Decimal(1).scaleb(-digits), rounding=ROUND_HALF_UP)
        return float(q) + 0.0
    return [rounded(v, digits) for v in arr]


def _json_float(x: float):
    # JSON has no infinities; keep them readable instead of failing
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def numeric_fields(name: str, value) -> dict:
    """``{name: display-rounded, name_full: exact}``."""
    return {name: rounded(value), f"{name}_full": full(value)}
