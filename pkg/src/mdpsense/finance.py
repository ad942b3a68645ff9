"""Terminal-wealth portfolio problem under power utility.

Wealth evolves as ``X_{n+1} = X_n * (r_{n+1} + gamma_n * (R_{n+1} - r_{n+1}))``
with a riskless gross rate ``r`` and a risky gross return ``R``.  Because
power utility is homothetic, the optimal value factorizes into one-stage
problems ``v_n(gamma) = E[u(1 + gamma * (R / r - 1))]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .metrics import DiscreteMeasure
from .model import FiniteMdm, Sense, Strategy, TransitionFunction
from .numerics import lognormal_expectation, lognormal_quantile, maximize_concave_01

GOLDEN_TOL = 1e-10


def u_alpha(x, alpha: float):
    """Power utility ``x**alpha`` via ``exp(alpha * log x)`` with ``u(0) = 0``."""
    arr = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(arr)
    pos = arr > 0
    out[pos] = np.exp(alpha * np.log(arr[pos]))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Lognormal:
    """Law of ``exp(Z)`` with ``Z ~ N(m, s2)``."""

    m: float
    s2: float

    def __post_init__(self):
        if not self.s2 > 0:
            raise ValidationError(f"lognormal variance must be positive, got {self.s2}")

    @property
    def s(self) -> float:
        return math.sqrt(self.s2)

    @classmethod
    def from_bsm(cls, mu: float, sigma: float, N: int) -> "Lognormal":
        return cls((mu - sigma**2 / 2.0) / N, sigma**2 / N)

    def expect(self, g) -> float:
        return lognormal_expectation(g, self.m, self.s)

    def quantile(self, t: float, upper: bool = False) -> float:
        return lognormal_quantile(t, self.m, self.s, upper=upper)


@dataclass(frozen=True)
class MixtureMeasure:
    """Finite convex combination of measures."""

    weights: tuple
    components: tuple

    def expect(self, g) -> float:
        return sum(w * c.expect(g) for w, c in zip(self.weights, self.components) if w != 0.0)


def _measure_key(m):
    if isinstance(m, DiscreteMeasure):
        return ("discrete", m.points.tobytes(), m.masses.tobytes())
    if isinstance(m, MixtureMeasure):
        return ("mixture", m.weights, tuple(_measure_key(c) for c in m.components))
    return ("other", m)


@dataclass(frozen=True)
class BsmParams:
    mu: float
    sigma: float
    nu: float


@dataclass(frozen=True)
class CrrParams:
    p: float
    u: float
    d: float
    r: float


@dataclass(frozen=True, eq=False)
class FinanceModel:
    """Terminal-wealth problem data.

    ``bond_rates[n]`` and ``returns[n]`` belong to the period from ``n`` to
    ``n + 1``.  ``params`` records the parametric family, if any, so that
    closed-form fractions can be used.
    """

    horizon: int
    bond_rates: tuple
    returns: tuple
    alpha: float
    x0: float = 1.0
    params: object = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "bond_rates", tuple(float(r) for r in self.bond_rates))
        object.__setattr__(self, "returns", tuple(self.returns))
        problems = []
        if int(self.horizon) != self.horizon or self.horizon < 1:
            problems.append(f"horizon must be an integer >= 1, got {self.horizon}")
        if len(self.bond_rates) != self.horizon or len(self.returns) != self.horizon:
            problems.append("need one bond rate and one return law per period")
        if any(not (r >= 1.0 and math.isfinite(r)) for r in self.bond_rates):
            problems.append("bond rates must be finite and >= 1")
        if not 0.0 < self.alpha < 1.0:
            problems.append(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.x0 >= 0:
            problems.append(f"initial capital must be >= 0, got {self.x0}")
        for n, m in enumerate(self.returns):
            if isinstance(m, DiscreteMeasure) and np.any(m.points < 0):
                problems.append(f"return law {n} has negative support")
        if problems:
            raise ValidationError("invalid finance model: " + "; ".join(problems), problems)

    @classmethod
    def bsm(cls, mu: float, sigma: float, nu: float, alpha: float, N: int = 12, x0: float = 1.0):
        """Discretized Black-Scholes-Merton market with ``N`` periods per unit time."""
        law = Lognormal.from_bsm(mu, sigma, N)
        return cls(N, (math.exp(nu / N),) * N, (law,) * N, alpha, x0, BsmParams(mu, sigma, nu))

    @classmethod
    def crr(cls, p: float, u: float, d: float, r: float, alpha: float, N: int, x0: float = 1.0):
        """Cox-Ross-Rubinstein market: return ``u`` with probability ``p``, else ``d``."""
        law = DiscreteMeasure([d, u], [1.0 - p, p])
        return cls(N, (float(r),) * N, (law,) * N, alpha, x0, CrrParams(p, u, d, r))

    def assumption_flags(self) -> list:
        """Violations of positivity and non-degeneracy of the risky returns."""
        flags = []
        for n, (m, r) in enumerate(zip(self.returns, self.bond_rates)):
            if isinstance(m, DiscreteMeasure):
                if m.masses[m.points <= 0].sum() > 0:
                    flags.append(f"period {n}: return is not almost surely positive")
                if m.masses[np.abs(m.points - r) <= 1e-12].sum() > 0:
                    flags.append(f"period {n}: return equals the bond rate with positive probability")
        return flags


def one_stage_value(model: FinanceModel, n: int, gamma: float, measure=None) -> float:
    """``E[u(1 + gamma * (R / r - 1))]`` for period ``n``; exactly 1 at ``gamma = 0``."""
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    if gamma == 0.0:
        return 1.0
    law = model.returns[n] if measure is None else measure
    r = model.bond_rates[n]
    alpha = model.alpha
    return law.expect(lambda y: u_alpha(1.0 + gamma * (np.asarray(y) / r - 1.0), alpha))


def one_stage_slope(model: FinanceModel, n: int, gamma: float, measure=None, order: int = 1) -> float:
    """First or second derivative in ``gamma`` of the period-``n`` one-stage value."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    gamma = float(gamma)
    law = model.returns[n] if measure is None else measure
    r = model.bond_rates[n]
    alpha = model.alpha
    power = alpha - order
    coef = alpha if order == 1 else alpha * (alpha - 1.0)

    def integrand(y):
        x = np.asarray(y, dtype=np.float64) / r - 1.0
        w = 1.0 + gamma * x
        with np.errstate(divide="ignore"):
            wp = np.where(w > 0, np.exp(power * np.log(np.where(w > 0, w, 1.0))), np.inf)
        return coef * wp * x**order

    return law.expect(integrand)


def solve_gamma_numeric(model: FinanceModel, n: int, measure=None, tol: float = GOLDEN_TOL):
    """Optimal fraction and value of the period-``n`` one-stage problem.

    Golden-section search on [0, 1]; the bracket side is chosen by the sign
    of the analytic slope, so the fraction is resolved well below ``tol``.
    """
    return maximize_concave_01(
        lambda g: one_stage_value(model, n, g, measure),
        tol,
        grad=lambda g: one_stage_slope(model, n, g, measure),
    )


def gamma_crr(p: float, u: float, d: float, r: float, alpha: float) -> float:
    """Closed-form optimal fraction in the two-point (CRR) market."""
    if not 0 < d < r < u:
        raise ValueError("need 0 < d < r < u")
    if not 0.0 <= p <= 1.0 or not 0.0 < alpha < 1.0:
        raise ValueError("need p in [0, 1] and alpha in (0, 1)")
    p0 = (r - d) / (u - d)
    up = u ** (1.0 - alpha) * (r - d)
    p1 = up / (up + d ** (1.0 - alpha) * (u - r))
    if p <= p0:
        return 0.0
    if p >= p1:
        return 1.0
    kappa = 1.0 / (1.0 - alpha)
    a = (p * (u - r)) ** kappa
    b = ((1.0 - p) * (r - d)) ** kappa
    num = a - b
    den = p**kappa * (u - r) ** (kappa * alpha) + (1.0 - p) ** kappa * (r - d) ** (kappa * alpha)
    return r / ((r - d) * (u - r)) * num / den


def gamma_bsm(mu: float, sigma: float, alpha: float, nu: float) -> float:
    """Merton ratio clamped to [0, 1]."""
    if not (mu >= 0 and sigma > 0 and 0.0 < alpha < 1.0 and nu >= 0):
        raise ValueError("need mu >= 0, sigma > 0, alpha in (0, 1), nu >= 0")
    if nu >= mu:
        return 0.0
    threshold = mu - (1.0 - alpha) * sigma**2
    if nu <= threshold:
        return 1.0
    return (mu - nu) / ((1.0 - alpha) * sigma**2)


def _closed_form_gamma(model: FinanceModel, n: int) -> float:
    par = model.params
    if isinstance(par, BsmParams):
        return gamma_bsm(par.mu, par.sigma, model.alpha, par.nu)
    if isinstance(par, CrrParams):
        return gamma_crr(par.p, par.u, par.d, par.r, model.alpha)
    raise ValueError("closed-form fractions need a BSM or CRR model")


def optimal_gammas(model: FinanceModel, measures=None, method: str = "numeric") -> np.ndarray:
    """Optimal fraction per period.

    ``method`` is ``"numeric"`` (one-stage search), ``"closed_form"``
    (CRR formula or Merton ratio) or ``"auto"``.  ``"auto"`` uses the CRR
    formula, the BSM corner solutions 0 and 1 (exact in discrete time), and
    the numeric search for interior BSM fractions, where the Merton ratio is
    only the continuous-time approximation.  Periods with identical rate and
    return law are solved once.
    """
    laws = model.returns if measures is None else tuple(measures)
    if len(laws) != model.horizon:
        raise ValueError(f"expected {model.horizon} measures, got {len(laws)}")
    if method not in ("numeric", "closed_form", "auto"):
        raise ValueError(f"unknown method {method!r}")
    cache = {}
    out = np.empty(model.horizon)
    for n, law in enumerate(laws):
        key = (model.bond_rates[n], _measure_key(law))
        if key not in cache:
            own = law is model.returns[n] and model.params is not None
            if method == "closed_form":
                if not own:
                    raise ValueError("closed forms apply only to a parametric model's own return laws")
                cache[key] = _closed_form_gamma(model, n)
            elif method == "auto" and own:
                g = _closed_form_gamma(model, n)
                if isinstance(model.params, BsmParams) and 0.0 < g < 1.0:
                    g = solve_gamma_numeric(model, n, law)[0]
                cache[key] = g
            else:
                cache[key] = solve_gamma_numeric(model, n, law)[0]
        out[n] = cache[key]
    return out


def _stage_values(model, gammas, measures=None):
    laws = model.returns if measures is None else tuple(measures)
    cache = {}
    vals = np.empty(model.horizon)
    for n, law in enumerate(laws):
        key = (model.bond_rates[n], _measure_key(law), float(gammas[n]))
        if key not in cache:
            cache[key] = one_stage_value(model, n, gammas[n], law)
        vals[n] = cache[key]
    return vals


def _check_gammas(model, gammas):
    g = np.asarray(gammas, dtype=np.float64).reshape(-1)
    if g.size != model.horizon:
        raise ValueError(f"expected {model.horizon} fractions, got {g.size}")
    if np.any(g < 0) or np.any(g > 1):
        raise ValueError("fractions must lie in [0, 1]")
    return g


def value_factor(model: FinanceModel, gammas, n: int = 0) -> float:
    """Product of the one-stage values from period ``n`` to the horizon."""
    g = _check_gammas(model, gammas)
    if not 0 <= n <= model.horizon:
        raise ValueError(f"n must lie in 0..{model.horizon}")
    return float(np.prod(_stage_values(model, g)[n:]))


def value_product(model: FinanceModel, gammas, n: int = 0, x: float | None = None) -> float:
    """Value at time ``n`` and wealth ``x`` of the linear strategy ``gammas``.

    ``x`` defaults to the model's initial capital.
    """
    x = model.x0 if x is None else float(x)
    B_n = float(np.prod(model.bond_rates[:n]))
    return value_factor(model, gammas, n) * u_alpha(x / B_n, model.alpha)


def frechet_product(model: FinanceModel, Q_measures, gammas) -> float:
    """Derivative factor of the time-0 value of a linear strategy toward ``Q_measures``.

    Each period contributes ``(v_k^Q - v_k^P)`` times the product of the
    other periods' base values; periods whose law is unchanged contribute 0.
    """
    Q_measures = tuple(Q_measures)
    if len(Q_measures) != model.horizon:
        raise ValueError(f"expected {model.horizon} measures, got {len(Q_measures)}")
    g = _check_gammas(model, gammas)
    vP = _stage_values(model, g)
    total = 0.0
    for k, q in enumerate(Q_measures):
        if q is model.returns[k]:
            continue
        vQ = one_stage_value(model, k, g[k], q)
        others = np.prod(np.delete(vP, k))
        total += (vQ - vP[k]) * others
    return float(total)


def hadamard_finance(model: FinanceModel, Q_measures, method: str = "auto") -> float:
    """Derivative of the optimal value toward ``Q_measures``, at the optimal fractions.

    See :func:`optimal_gammas` for ``method``.
    """
    gammas = optimal_gammas(model, method=method)
    return frechet_product(model, Q_measures, gammas) * u_alpha(model.x0, model.alpha)


def optimal_value(model: FinanceModel, measures=None) -> float:
    """Optimal time-0 value with fractions re-solved numerically per period."""
    laws = model.returns if measures is None else tuple(measures)
    gammas = optimal_gammas(model, laws)
    return float(np.prod(_stage_values(model, gammas, laws))) * u_alpha(model.x0, model.alpha)


def mixed_measures(model: FinanceModel, Q_measures, eps: float) -> tuple:
    """Per-period laws ``(1 - eps) m + eps q``; unchanged periods keep the base law."""
    out = []
    for m, q in zip(model.returns, Q_measures):
        out.append(m if q is m else MixtureMeasure((1.0 - eps, eps), (m, q)))
    return tuple(out)


def finance_fd_quotient(model: FinanceModel, Q_measures, eps: float) -> float:
    """Forward difference of the optimal value, re-optimizing every period."""
    eps = float(eps)
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    mixed = mixed_measures(model, Q_measures, eps)
    return (optimal_value(model, mixed) - optimal_value(model)) / eps


def finance_remainder_bound(model: FinanceModel, Q_measures, grid: int = 2001) -> float:
    """A priori ``C`` with ``0 <= fd_quotient(eps) - derivative <= C * eps`` for a one-period direction.

    With ``w = v^Q - v^P`` in the perturbed period, re-optimizing can gain at
    most ``max_d (eps * L * d - kappa * d**2 / 2) = eps**2 * L**2 / (2 kappa)``,
    where ``L`` bounds ``|w'|`` and ``kappa`` bounds ``-v^P''`` from below on
    [0, 1].  Both are read off a fine grid with a 10% safety margin.
    """
    Q_measures = tuple(Q_measures)
    changed = [k for k, q in enumerate(Q_measures) if q is not model.returns[k]]
    if len(changed) != 1:
        raise ValueError("the bound covers directions that change exactly one period")
    k = changed[0]
    q = Q_measures[k]
    gs = np.linspace(0.0, 1.0, grid)[:-1]  # slopes may blow up at gamma = 1
    curv = np.array([-one_stage_slope(model, k, g, order=2) for g in gs])
    slope = np.array([one_stage_slope(model, k, g, q) - one_stage_slope(model, k, g) for g in gs])
    kappa = curv.min() / 1.1
    if not kappa > 0:
        raise ValueError("one-stage objective is not strictly concave on the grid")
    L = np.abs(slope).max() * 1.1
    gammas = optimal_gammas(model, method="auto")
    vP = _stage_values(model, gammas)
    others = float(np.prod(np.delete(vP, k)))
    return L**2 / (2.0 * kappa) * others * u_alpha(model.x0, model.alpha)


def finance_fd_report(model: FinanceModel, Q_measures, eps_grid) -> list:
    from .sensitivity import FdRow

    deriv = hadamard_finance(model, Q_measures)
    rows = []
    for eps in eps_grid:
        q = finance_fd_quotient(model, Q_measures, eps)
        rows.append(FdRow(float(eps), q, abs(q - deriv)))
    return rows


def jump_direction(model: FinanceModel, delta: float, periods) -> tuple:
    """Base return laws with the point mass at ``delta`` in the listed periods."""
    delta = float(delta)
    if not delta >= 0:
        raise ValueError(f"jump size must be >= 0, got {delta}")
    periods = set(int(p) for p in periods)
    bad = [p for p in periods if not 0 <= p < model.horizon]
    if bad:
        raise ValueError(f"periods {sorted(bad)} outside 0..{model.horizon - 1}")
    point = DiscreteMeasure.dirac(delta)
    return tuple(point if n in periods else m for n, m in enumerate(model.returns))


SWEEP_HEADER = ("alpha", "nu", "delta", "tau_or_ell", "N", "derivative")
_SWEEP_KEYS = {"alpha", "nu", "delta", "mode", "values", "N"}
_MODEL_KEYS = {"mu", "sigma", "x0", "N"}


def figure_sweeps(model_spec: dict, sweep_spec: dict) -> list:
    """Jump-derivative rows over a grid for the discretized BSM market.

    ``model_spec`` has ``mu``, ``sigma`` and optionally ``x0`` and ``N``.
    ``sweep_spec`` lists ``alpha``, ``nu``, ``delta`` and ``values``, with
    ``mode`` either ``"tau"`` (a single jump in period ``tau``) or ``"ell"``
    (jumps in the first ``ell`` periods), and optionally a list ``N``.
    Rows follow the nesting order of :data:`SWEEP_HEADER`.
    """
    if not isinstance(model_spec, dict) or not isinstance(sweep_spec, dict):
        raise ValueError("model and sweep specs must be objects")
    unknown = (set(model_spec) - _MODEL_KEYS) | (set(sweep_spec) - _SWEEP_KEYS)
    if unknown:
        raise ValueError(f"unknown sweep keys {sorted(unknown)}")
    for key in ("alpha", "nu", "delta", "values"):
        if key not in sweep_spec or not isinstance(sweep_spec[key], (list, tuple)) or not sweep_spec[key]:
            raise ValueError(f"sweep spec needs a non-empty list {key!r}")
    mode = sweep_spec.get("mode", "tau")
    if mode not in ("tau", "ell"):
        raise ValueError(f"sweep mode must be 'tau' or 'ell', got {mode!r}")
    mu, sigma = float(model_spec["mu"]), float(model_spec["sigma"])
    x0 = float(model_spec.get("x0", 1.0))
    horizons = sweep_spec.get("N", [model_spec.get("N", 12)])
    rows = []
    for alpha in sweep_spec["alpha"]:
        for nu in sweep_spec["nu"]:
            models = {int(N): FinanceModel.bsm(mu, sigma, float(nu), float(alpha), int(N), x0) for N in horizons}
            gammas = {N: optimal_gammas(m) for N, m in models.items()}
            for delta in sweep_spec["delta"]:
                for value in sweep_spec["values"]:
                    for N in horizons:
                        N = int(N)
                        model, value = models[N], int(value)
                        if mode == "tau":
                            if not 0 <= value < N:
                                raise ValueError(f"tau={value} outside 0..{N - 1}")
                            periods = {value}
                        else:
                            if not 0 <= value <= N:
                                raise ValueError(f"ell={value} outside 0..{N}")
                            periods = set(range(value))
                        Q = jump_direction(model, float(delta), periods)
                        deriv = frechet_product(model, Q, gammas[N]) * u_alpha(x0, model.alpha)
                        rows.append((float(alpha), float(nu), float(delta), value, N, deriv))
    return rows


QUANTILE_LEVELS = (1e-30, 1e-10, 0.0001, 0.0005, 0.005, 0.01, 0.025, 0.05)


def quantile_table(mu: float = 0.05, sigma: float = 0.2, N: int = 12, levels=QUANTILE_LEVELS):
    """Lower and upper quantiles ``F^-1(t)`` and ``F^-1(1 - t)`` of the one-period return law."""
    law = Lognormal.from_bsm(mu, sigma, N)
    lower = [law.quantile(t) for t in levels]
    upper = [law.quantile(t, upper=True) for t in levels]
    return list(levels), lower, upper


@dataclass(frozen=True)
class WealthLattice:
    """Finite MDM on reachable wealths of a two-point market with a fraction grid."""

    mdm: FiniteMdm
    x0_index: int
    grid: tuple
    reachable: tuple  # reachable[n]: frozenset of state indices
    direction: TransitionFunction | None

    def linear_strategy(self, gammas) -> Strategy:
        """Play ``gammas[n]`` (a grid point) wherever reachable, the placeholder elsewhere."""
        rules = []
        for n in range(self.mdm.horizon):
            g = float(gammas[n])
            if g not in self.grid:
                raise ValueError(f"fraction {g} is not on the grid")
            rules.append(tuple(g if i in self.reachable[n] else 0.0 for i in range(self.mdm.n_states)))
        return Strategy(tuple(rules))


def wealth_lattice(model: FinanceModel, step: float, Q_measures=None) -> WealthLattice:
    """Exact finite MDM for a finitely supported market with fractions on a grid.

    States are all wealths reachable from ``x0`` (merged at 12 decimals).
    At states not reachable at epoch ``n`` the only action is ``0.0`` with a
    self-loop, which cannot affect values from ``x0``.  If ``Q_measures`` is
    given, the lattice also covers their outcomes and the matching target
    transition function is returned in ``direction``.
    """
    laws = list(model.returns)
    if not all(isinstance(m, DiscreteMeasure) for m in laws):
        raise ValueError("wealth lattice needs finitely supported return laws")
    targets = None if Q_measures is None else list(Q_measures)
    if targets is not None and not all(isinstance(m, DiscreteMeasure) for m in targets):
        raise ValueError("wealth lattice needs finitely supported directions")
    steps = int(round(1.0 / step))
    grid = tuple(k / steps for k in range(steps + 1))
    N = model.horizon

    def key(x):
        return round(x, 12)

    index: dict = {}
    values: list = []

    def add(x):
        k = key(x)
        if k not in index:
            index[k] = len(values)
            values.append(x)
        return index[k]

    reach = [{add(model.x0)}]
    for n in range(N):
        r = model.bond_rates[n]
        outcomes = set(laws[n].points.tolist())
        if targets is not None:
            outcomes |= set(targets[n].points.tolist())
        nxt = set()
        for i in sorted(reach[n]):
            x = values[i]
            for g in grid:
                for y in outcomes:
                    nxt.add(add(x * (r + g * (y - r))))
        reach.append(nxt)
    S = len(values)

    def rows_for(law_list):
        rows = {}
        for n in range(N):
            r = model.bond_rates[n]
            law = law_list[n]
            for i in range(S):
                if i not in reach[n]:
                    row = np.zeros(S)
                    row[i] = 1.0
                    rows[(n, i, 0.0)] = row
                    continue
                x = values[i]
                for g in grid:
                    row = np.zeros(S)
                    for y, w in zip(law.points, law.masses):
                        row[index[key(x * (r + g * (y - r)))]] += w
                    rows[(n, i, g)] = row
        return rows

    actions = tuple(
        tuple(grid if i in reach[n] else (0.0,) for i in range(S)) for n in range(N)
    )
    rewards = {(n, i, a): 0.0 for n in range(N) for i in range(S) for a in actions[n][i]}
    B_N = float(np.prod(model.bond_rates))
    terminal = u_alpha(np.array(values) / B_N, model.alpha)
    mdm = FiniteMdm(N, tuple(values), actions, TransitionFunction(rows_for(laws)), rewards,
                    terminal, Sense.MAXIMIZE)
    direction = None if targets is None else TransitionFunction(rows_for(targets))
    return WealthLattice(mdm, 0, grid, tuple(frozenset(s) for s in reach[:N]), direction)
