import numpy as np
import pytest

from ugmt.configuration import Configuration, SetSpec
from ugmt.cylinder import cyl_from_star
from ugmt.geometry import BoxDomain, DomainError, SmoothFunction, interval
from ugmt.hausdorff import (CriticalLevelError, dimensional_constant,
                            hausdorff_covering_upper, hausdorff_level_set,
                            rho_m_limit, rho_m_localized, rho_m_on_box, scaled_box,
                            surface_functional)
from ugmt.montecarlo import MCPlan, measure_of_set

UNIT = interval(0.0, 1.0)


class CoordinateSum:
    """g(x) = sum of first coordinates; |grad| = sqrt(k)."""

    def value(self, X):
        return X[:, :, 0].sum(axis=1)

    def grad(self, X):
        g = np.zeros_like(X)
        g[:, :, 0] = 1.0
        return g


def test_dimensional_constants():
    assert dimensional_constant(0) == 1.0
    assert dimensional_constant(1) == pytest.approx(1.0)
    assert dimensional_constant(2) == pytest.approx(np.pi / 4.0)


def test_level_set_point_slice():
    est = hausdorff_level_set(CoordinateSum(), 0.5, 0.01, UNIT, 1,
                              n_samples=200_000, seed=3)
    assert abs(est.value - 1.0) <= 3 * est.error_bar + 5e-3


def test_level_set_segment_and_antidiagonal():
    sq = BoxDomain((0.0, 0.0), (1.0, 1.0))
    est = hausdorff_level_set(CoordinateSum(), 0.5, 0.01, sq, 1,
                              n_samples=300_000, seed=5)
    assert abs(est.value - 1.0) <= 3 * est.error_bar + 0.01  # segment length
    est2 = hausdorff_level_set(CoordinateSum(), 1.0, 0.01, UNIT, 2,
                               n_samples=300_000, seed=6)
    assert abs(est2.value - np.sqrt(2.0)) <= 3 * est2.error_bar + 0.02


def test_level_set_quadrature_route():
    v, e, _ = surface_functional(CoordinateSum(), 1.0, None, UNIT, 2,
                                 eps=0.01, quad_order=96)
    assert v == pytest.approx(np.sqrt(2.0), abs=1e-4)
    v1, e1, _ = surface_functional(CoordinateSum(), 0.5, None, UNIT, 1,
                                   eps=0.01, quad_order=192)
    assert v1 == pytest.approx(1.0, abs=1e-4)


def test_critical_level_detected():
    class Flat:
        def value(self, X):
            return np.full(X.shape[0], 0.3) + 1e-6 * X[:, :, 0].sum(axis=1)

        def grad(self, X):
            return np.full_like(X, 1e-6)

    with pytest.raises(CriticalLevelError):
        surface_functional(Flat(), 0.3, None, UNIT, 1, eps=0.05, n_samples=10_000)


def test_covering_counting_and_empty():
    pts = np.array([[0.1, 0.1], [0.5, 0.5], [0.9, 0.2]])
    est = hausdorff_covering_upper(lambda n: pts, 2, 0.01, 2)
    assert est.value == 3.0 and est.method == "counting"
    assert hausdorff_covering_upper(lambda n: np.zeros((0, 2)), 1, 0.01, 2).value == 0.0


def test_covering_segment_upper_bound():
    def seg(n):
        t = np.linspace(0.0, 1.0, n)
        return np.stack([t, np.full_like(t, 0.3)], axis=1)

    vals = []
    for eps in (0.05, 0.02, 0.01):
        est = hausdorff_covering_upper(seg, 1, eps, 2, n_points=60_000)
        vals.append(est.value)
        if eps <= 0.01:
            assert 1.0 <= est.value <= 1.2
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_rho0_matches_direct_probability():
    plan = MCPlan(n_samples=30_000, seed=8, window=UNIT)
    f = SmoothFunction.bump(0.5, 0.3, 1.0, window=UNIT)
    sets = [
        SetSpec.count_at_least(UNIT, 0),
        SetSpec.count_at_least(interval(0.0, 0.5), 1),
        SetSpec.level_set(cyl_from_star(f), 0.8),
        SetSpec.predicate(lambda g: g.count_in(interval(0.3, 0.7)) == 0,
                          locality=interval(0.3, 0.7)),
        SetSpec.count_at_least(interval(0.2, 0.9), 2),
    ]
    for A in sets:
        res = rho_m_on_box(A, 0, UNIT, seed=21)
        direct = measure_of_set(A, plan)
        comb = 3 * direct.std_err + 3 * res.total_err + 1e-4
        assert abs(res.total - direct.mean) <= comb
    # the count spec with threshold 1: closed form 1 - e^{-vol}
    res = rho_m_on_box(sets[1], 0, UNIT, seed=2)
    assert res.total == pytest.approx(1 - np.exp(-0.5), abs=1e-9)


def test_rho1_halfspace_sheet():
    lin = SmoothFunction.linear(UNIT)
    sheet = SetSpec.level_sheet(cyl_from_star(lin), 0.5, count_equals=1)
    res = rho_m_on_box(sheet, 1, UNIT, seed=7)
    assert res.total == pytest.approx(np.exp(-1.0), abs=1e-3)
    assert res.per_k[1] == pytest.approx(1.0, abs=1e-3)
    # k! weight: the quotient contribution times k! is the product-space content
    assert res.per_k[1] * 1 == pytest.approx(1.0, abs=1e-3)


def test_rho1_rejects_bad_inputs():
    A = SetSpec.count_at_least(UNIT, 1)
    with pytest.raises(DomainError):
        rho_m_on_box(A, 1, UNIT)
    with pytest.raises(DomainError):
        rho_m_on_box(A, 2, UNIT)


def test_rho_localized_constant_when_local():
    f = SmoothFunction.bump(0.0, 0.25, 1.0, window=scaled_box(0.0, 3.0, 1))
    sheet = SetSpec.level_sheet(cyl_from_star(f), 0.55)
    outer = scaled_box(0.0, 3.0, 1)
    est1 = rho_m_localized(sheet, 1, scaled_box(0.0, 1.0, 1), outer, seed=3)
    est2 = rho_m_localized(sheet, 1, scaled_box(0.0, 2.0, 1), outer, seed=3)
    assert abs(est1.mean - est2.mean) <= 3 * (est1.std_err + est2.std_err) + 1e-3
    # m = 0 agrees with the plain probability
    A = SetSpec.level_set(cyl_from_star(f), 0.55)
    est0 = rho_m_localized(A, 0, scaled_box(0.0, 1.0, 1), outer, seed=4)
    plan = MCPlan(n_samples=30_000, seed=5, window=outer)
    direct = measure_of_set(A, plan)
    assert abs(est0.mean - direct.mean) <= 3 * (est0.std_err + direct.std_err) + 1e-3


def test_rho_limit_monotone_and_saturating():
    window = scaled_box(0.0, 3.0, 1)
    f = SmoothFunction.bump(0.0, 0.45, 1.0, window=window)
    sheet = SetSpec.level_sheet(cyl_from_star(f), 0.55)
    boxes = [scaled_box(0.0, r, 1) for r in (1.0, 1.5, 2.0, 3.0)]
    res = rho_m_limit(sheet, 1, boxes, seed=11, n_samples=8000, n_eta=32)
    for a, b, ea, eb in zip(res.values, res.values[1:], res.errors, res.errors[1:]):
        assert b >= a - 3 * (ea + eb)
    assert res.saturated
    assert res.limit == res.values[-1]
