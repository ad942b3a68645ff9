"""Scalar numerical kernels: golden-section search, lognormal quadrature,
normal quantiles and a small dense transport LP."""
from __future__ import annotations

import math
import warnings
from functools import lru_cache

import numpy as np
from scipy.optimize import linprog

from .errors import CapExceededError, NumericalError

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
LP_CAP = 50


def _finite(f, x):
    fx = float(f(x))
    if not math.isfinite(fx):
        raise NumericalError(f"objective is not finite at {x!r}: {fx!r}")
    return fx


def maximize_concave_01(
    f, tol: float = 1e-10, max_iter: int = 200, history: list | None = None, grad=None
):
    """Maximize a unimodal function on [0, 1] by golden-section search.

    Returns ``(x, f(x))``.  The endpoints are compared with the interior
    candidate at the end; on ties the smallest point wins, so a flat
    objective returns 0.  If ``history`` is a list, the bracket length after
    each step is appended to it.

    Comparing values cannot resolve the maximizer of a flat objective below
    roughly ``sqrt(eps / |f''|)``.  When the derivative ``grad`` of a
    concave ``f`` is supplied, each step keeps the same golden-section
    bracket but decides the side by the sign of ``grad`` between the two
    probes, which resolves the maximizer to near machine precision.
    """
    a, b = 0.0, 1.0
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    if grad is None:
        fc, fd = _finite(f, c), _finite(f, d)
    it = 0
    while b - a > tol and it < max_iter:
        if grad is None:
            go_left = fc >= fd
        else:
            go_left = _finite(grad, 0.5 * (c + d)) <= 0.0
        if go_left:
            b, d = d, c
            c = b - INV_PHI * (b - a)
            if grad is None:
                fd = fc
                fc = _finite(f, c)
        else:
            a, c = c, d
            d = a + INV_PHI * (b - a)
            if grad is None:
                fc = fd
                fd = _finite(f, d)
        it += 1
        if history is not None:
            history.append(b - a)
    if grad is None:
        x, fx = (c, fc) if fc >= fd else (d, fd)
    else:
        # endpoint slopes may be infinite (e.g. wealth hitting zero)
        g0, g1 = float(grad(0.0)), float(grad(1.0))
        if math.isnan(g0) or math.isnan(g1):
            raise NumericalError("derivative is NaN at an endpoint")
        if g0 <= 0.0:
            return 0.0, _finite(f, 0.0)
        if g1 >= 0.0:
            return 1.0, _finite(f, 1.0)
        x = 0.5 * (a + b)
        return x, _finite(f, x)
    f0 = _finite(f, 0.0)
    if f0 >= fx:
        return 0.0, f0
    f1 = _finite(f, 1.0)
    if f1 > fx:
        return 1.0, f1
    return x, fx


@lru_cache(maxsize=8)
def _hermite_rule(nodes: int):
    z, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / math.sqrt(2.0 * math.pi)
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


def _apply(g, y):
    out = np.asarray(g(y), dtype=np.float64)
    if out.shape != y.shape:
        out = np.array([float(g(v)) for v in y])
    return out


def lognormal_expectation(g, m: float, s: float, nodes: int = 200) -> float:
    """``E[g(Y)]`` for ``log Y ~ N(m, s^2)`` by Gauss-Hermite quadrature in ``z = (log Y - m) / s``.

    ``g`` may be vectorized; scalar callables are mapped point by point.
    A warning is issued when the nodes beyond eight standard deviations
    carry a non-negligible share of the integral.
    """
    if not s > 0:
        raise ValueError(f"s must be positive, got {s}")
    z, w = _hermite_rule(nodes)
    with np.errstate(over="ignore", under="ignore"):
        y = np.exp(m + s * z)
        terms = w * _apply(g, y)
    if not np.all(np.isfinite(terms)):
        raise NumericalError("lognormal quadrature produced non-finite terms")
    total = float(np.sum(terms))
    tail = float(np.sum(np.abs(terms[np.abs(z) > 8.0])))
    if tail > 1e-10 * (1.0 + abs(total)):
        warnings.warn(f"lognormal quadrature tail carries {tail:.3g}; integrand may grow too fast", RuntimeWarning)
    return total


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


# rational approximation coefficients for the inverse normal CDF (Acklam)
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _lower_quantile(t: float) -> float:
    """Quantile for t <= 0.5, accurate in the far lower tail."""
    if t < _P_LOW:
        q = math.sqrt(-2.0 * math.log(t))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        )
    else:
        q = t - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        )
    # one Newton step on the CDF
    return x - (normal_cdf(x) - t) / normal_pdf(x)


def normal_quantile(t: float) -> float:
    """Inverse standard normal CDF on (0, 1)."""
    t = float(t)
    if not 0.0 < t < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {t}")
    if t == 0.5:
        return 0.0
    if t > 0.5:
        return -_lower_quantile(1.0 - t)
    return _lower_quantile(t)


def lognormal_quantile(t: float, m: float, s: float, upper: bool = False) -> float:
    """Quantile of the lognormal law with log-mean ``m`` and log-sd ``s``.

    With ``upper=True`` the ``1 - t`` quantile is returned, computed from
    the symmetry of the normal law so that levels like ``1 - 1e-30`` stay
    representable.
    """
    z = normal_quantile(t)
    return math.exp(m + s * (-z if upper else z))


def lp_transport(cost, mu, nu) -> float:
    """Optimal transport value ``min <cost, pi>`` over couplings of ``mu`` and ``nu``.

    Solved as a dense linear program with a simplex method; both marginals
    are rescaled to a common total mass first.
    """
    cost = np.asarray(cost, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    m, n = cost.shape
    if m > LP_CAP or n > LP_CAP:
        raise CapExceededError("transport problem dimension", max(m, n), LP_CAP)
    if mu.shape != (m,) or nu.shape != (n,):
        raise ValueError("marginals do not match the cost matrix")
    if m == 1 or n == 1:
        # a single source or sink leaves exactly one coupling
        plan = np.outer(mu, nu) / (nu.sum() if m == 1 else mu.sum())
        return float(np.sum(cost * plan))
    nu = nu * (mu.sum() / nu.sum())
    A_eq = np.zeros((m + n, m * n))
    for i in range(m):
        A_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A_eq[m + j, j::n] = 1.0
    res = linprog(
        cost.ravel(),
        A_eq=A_eq,
        b_eq=np.concatenate([mu, nu]),
        bounds=(0, None),
        method="highs-ds",
    )
    if res.status != 0:
        raise NumericalError(f"transport LP failed: {res.message}")
    return float(res.fun)
