"""Probability metrics between finitely supported measures on the line,
and the induced distance between transition functions."""
from __future__ import annotations

import numpy as np

from .errors import CapExceededError, ShapeError, ValidationError
from .model import TransitionFunction
from .numerics import LP_CAP, lp_transport

MERGE_TOL = 1e-12
MASS_TOL = 1e-12


def _merge(points, masses):
    order = np.argsort(points, kind="stable")
    points, masses = points[order], masses[order]
    if points.size == 0:
        return points, masses
    new_group = np.empty(points.size, dtype=bool)
    new_group[0] = True
    new_group[1:] = np.diff(points) > MERGE_TOL
    starts = np.flatnonzero(new_group)
    return points[starts], np.add.reduceat(masses, starts)


class DiscreteMeasure:
    """Probability measure with finitely many atoms, kept sorted and merged.

    Points closer than 1e-12 are merged into the leftmost one.  Masses must
    be non-negative and sum to one within 1e-12 after merging; they are then
    rescaled to sum exactly as a float sum can.
    """

    __slots__ = ("points", "masses")

    def __init__(self, points, masses=None):
        pts = np.atleast_1d(np.asarray(points, dtype=np.float64))
        if masses is None:
            ms = np.full(pts.size, 1.0 / max(pts.size, 1))
        else:
            ms = np.atleast_1d(np.asarray(masses, dtype=np.float64))
        if pts.shape != ms.shape or pts.ndim != 1 or pts.size == 0:
            raise ValidationError("points and masses must be non-empty 1-D arrays of equal length")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(ms))):
            raise ValidationError("points and masses must be finite")
        if np.any(ms < 0):
            raise ValidationError("masses must be non-negative")
        total = ms.sum()
        if abs(total - 1.0) > max(MASS_TOL, 1e-9):
            raise ValidationError(f"masses sum to {total!r}, not 1")
        pts, ms = _merge(pts, ms / total)
        pts.setflags(write=False)
        ms.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", ms)

    def __setattr__(self, name, value):
        raise AttributeError("DiscreteMeasure is immutable")

    @classmethod
    def dirac(cls, x: float) -> "DiscreteMeasure":
        return cls([x], [1.0])

    def __len__(self):
        return self.points.size

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(self.masses, other.masses)

    __hash__ = None

    def __repr__(self):
        return f"DiscreteMeasure(points={self.points.tolist()}, masses={self.masses.tolist()})"

    def expect(self, g) -> float:
        vals = np.asarray(g(self.points), dtype=np.float64)
        if vals.shape != self.points.shape:
            vals = np.array([float(g(x)) for x in self.points])
        return float(np.dot(self.masses, vals))

    def cdf(self, t) -> np.ndarray:
        cum = np.cumsum(self.masses)
        idx = np.searchsorted(self.points, np.asarray(t, dtype=np.float64), side="right")
        return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)


def _joint(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Union support with both mass vectors aligned to it."""
    pts = np.concatenate([mu.points, nu.points])
    tags = np.concatenate([np.zeros(len(mu)), np.ones(len(nu))])
    masses = np.concatenate([mu.masses, nu.masses])
    order = np.argsort(pts, kind="stable")
    pts, tags, masses = pts[order], tags[order], masses[order]
    new_group = np.empty(pts.size, dtype=bool)
    new_group[0] = True
    new_group[1:] = np.diff(pts) > MERGE_TOL
    group = np.cumsum(new_group) - 1
    k = group[-1] + 1
    a = np.zeros(k)
    b = np.zeros(k)
    np.add.at(a, group[tags == 0], masses[tags == 0])
    np.add.at(b, group[tags == 1], masses[tags == 1])
    return pts[new_group], a, b


def d_tv(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Total variation distance, half the l1 distance of the mass vectors."""
    _, a, b = _joint(mu, nu)
    return float(min(1.0, 0.5 * np.sum(np.abs(a - b))))


def d_kolm(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Kolmogorov distance, the sup-distance of the CDFs."""
    _, a, b = _joint(mu, nu)
    return float(min(1.0, np.max(np.abs(np.cumsum(a) - np.cumsum(b)))))


def d_wass1(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Wasserstein-1 distance as the area between the two CDFs."""
    pts, a, b = _joint(mu, nu)
    if pts.size < 2:
        return 0.0
    gaps = np.diff(pts)
    return float(np.sum(np.abs(np.cumsum(a - b)[:-1]) * gaps))


def d_hoelder(mu: DiscreteMeasure, nu: DiscreteMeasure, alpha: float) -> float:
    """Hölder-alpha metric as optimal transport with cost ``|x - y|**alpha``."""
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if max(len(mu), len(nu)) > LP_CAP:
        raise CapExceededError("Hölder metric support size", max(len(mu), len(nu)), LP_CAP)
    cost = np.abs(mu.points[:, None] - nu.points[None, :]) ** alpha
    return max(0.0, lp_transport(cost, mu.masses, nu.masses))


METRICS = {"tv": d_tv, "kolm": d_kolm, "wass1": d_wass1, "hoelder": d_hoelder}


def d_inf(
    P: TransitionFunction,
    Q: TransitionFunction,
    metric: str = "tv",
    phi=None,
    *,
    states=None,
    alpha: float = 1.0,
) -> float:
    """Largest gauge-weighted row distance between two transition functions.

    ``phi`` maps a state index to a weight >= 1 (default 1).  Metrics other
    than ``"tv"`` need numeric ``states`` to place the atoms on the line.
    """
    if not P.shape_compatible(Q):
        raise ShapeError("transition functions are not shape-compatible")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if metric == "tv":
        geometry = None
    else:
        if states is None:
            raise ValidationError(f"metric {metric!r} needs numeric state labels")
        try:
            geometry = np.array([float(x) for x in states])
        except (TypeError, ValueError):
            raise ValidationError(f"metric {metric!r} needs numeric state labels") from None
    best = 0.0
    for key in P:
        p, q = P[key], Q[key]
        if geometry is None:
            dist = float(min(1.0, 0.5 * np.sum(np.abs(p - q))))
        else:
            mu = DiscreteMeasure(geometry, p)
            nu = DiscreteMeasure(geometry, q)
            dist = d_hoelder(mu, nu, alpha) if metric == "hoelder" else METRICS[metric](mu, nu)
        weight = 1.0 if phi is None else float(phi(key[1]))
        if weight < 1.0:
            raise ValueError(f"gauge must be >= 1, got {weight} at state {key[1]}")
        best = max(best, dist / weight)
    return best
