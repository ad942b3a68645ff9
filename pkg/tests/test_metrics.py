import itertools

import numpy as np
import pytest

from mdpsense import DiscreteMeasure, TransitionFunction, d_hoelder, d_inf, d_kolm, d_tv, d_wass1
from mdpsense.errors import CapExceededError, ValidationError


def test_measure_merging_and_normalization():
    m = DiscreteMeasure([2.0, 1.0, 1.0 + 1e-14], [0.5, 0.25, 0.25 + 5e-10])
    assert m.points.tolist() == [1.0, 2.0]
    assert m.masses.sum() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValidationError):
        DiscreteMeasure([0.0, 1.0], [0.5, 0.6])
    with pytest.raises(ValidationError):
        DiscreteMeasure([0.0, 1.0], [1.5, -0.5])
    with pytest.raises(ValidationError):
        DiscreteMeasure([], [])


def test_hand_computed_values():
    a = DiscreteMeasure([0, 1, 2], [0.2, 0.3, 0.5])
    b = DiscreteMeasure([0.5, 2])
    assert d_tv(a, b) == pytest.approx(0.5)
    assert d_kolm(a, b) == pytest.approx(0.3)
    assert d_wass1(a, b) == pytest.approx(0.25)
    assert d_wass1(DiscreteMeasure.dirac(0), DiscreteMeasure.dirac(3)) == 3.0
    assert d_hoelder(DiscreteMeasure.dirac(0), DiscreteMeasure.dirac(4), 0.5) == pytest.approx(2.0)


def permutation_oracle(x, y, alpha):
    # uniform measures with equal atom counts: some optimal plan is a permutation
    n = len(x)
    return min(sum(abs(x[i] - y[p[i]]) ** alpha for i in range(n)) / n
               for p in itertools.permutations(range(n)))


def test_hoelder_lp_against_permutation_oracle(rng):
    for _ in range(30):
        n = int(rng.integers(2, 6))
        x, y = rng.normal(size=n), rng.normal(size=n)
        alpha = float(rng.uniform(0.2, 1.0))
        got = d_hoelder(DiscreteMeasure(x), DiscreteMeasure(y), alpha)
        assert got == pytest.approx(permutation_oracle(x, y, alpha), abs=1e-10)


def test_hoelder_cap_and_alpha_range():
    big = DiscreteMeasure(np.arange(60.0))
    with pytest.raises(CapExceededError):
        d_hoelder(big, big, 0.5)
    with pytest.raises(ValueError):
        d_hoelder(DiscreteMeasure.dirac(0), DiscreteMeasure.dirac(1), 1.5)


@pytest.mark.parametrize("metric", [d_tv, d_kolm, d_wass1, lambda a, b: d_hoelder(a, b, 0.7)])
def test_metric_axioms(metric, rng):
    for _ in range(20):
        ms = [DiscreteMeasure(rng.integers(0, 6, 4).astype(float), rng.dirichlet(np.ones(4))) for _ in range(3)]
        a, b, c = ms
        assert metric(a, a) == pytest.approx(0.0, abs=1e-12)
        assert metric(a, b) == pytest.approx(metric(b, a), abs=1e-12)
        assert metric(a, c) <= metric(a, b) + metric(b, c) + 1e-9


def test_d_inf_tv_gauge_and_geometry():
    P = TransitionFunction({(0, 0, 0): [1.0, 0.0, 0.0], (0, 1, 0): [0.0, 1.0, 0.0]})
    Q = TransitionFunction({(0, 0, 0): [0.0, 0.0, 1.0], (0, 1, 0): [0.0, 0.5, 0.5]})
    assert d_inf(P, Q) == 1.0
    assert d_inf(P, Q, phi=lambda i: 4.0 if i == 0 else 1.0) == 0.5
    assert d_inf(P, Q, "wass1", states=[0.0, 1.0, 2.0]) == 2.0
    assert d_inf(P, Q, "hoelder", states=[0.0, 1.0, 2.0], alpha=0.5) == pytest.approx(2.0**0.5)
    with pytest.raises(ValidationError):
        d_inf(P, Q, "kolm", states=["a", "b", "c"])
    with pytest.raises(ValueError):
        d_inf(P, Q, phi=lambda i: 0.5)
