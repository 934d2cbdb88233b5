import numpy as np
import pytest

from ugmt.configuration import Configuration, SetSpec
from ugmt.cylinder import (CylinderFunction, ExponentialCylinderFunction,
                           OuterFunction, add_n, const, coord, cyl_compose,
                           cyl_from_star, mul_n, smoothstep, tanh_of)
from ugmt.geometry import DomainError, SmoothFunction, interval
from ugmt.heat import (BesselOperator, LiftedHeatOperator, _semigroup_at,
                       bakry_emery_battery, bessel_apply, capacity_upper_bound,
                       check_bakry_emery, check_intertwining, lift_semigroup,
                       lifted_gradient_norm, regularization_slope)
from ugmt.montecarlo import MCPlan, integrate

UNIT = interval(0.0, 1.0)
OP = LiftedHeatOperator(window=UNIT)


def shifted_mode(amp=-0.2):
    c = SmoothFunction.constant(amp, UNIT)
    m = SmoothFunction.neumann_mode((1,), UNIT, amplitude=amp)
    return SmoothFunction(kind="sum", support=UNIT, factors=(c, m), window=UNIT)


def test_conservative_on_constants():
    f = SmoothFunction.bump(0.5, 0.3, 1.0, window=UNIT)
    Fc = cyl_compose(lambda r: mul_n(const(0.0), r) + const(1.0), cyl_from_star(f))
    for k in (1, 2, 3):
        for t in (2e-3, 0.1, 10.0):
            grid, out = lift_semigroup(Fc, t, OP, k)
            assert np.max(np.abs(out - 1.0)) < 1e-9


def test_tensor_product_structure():
    # product integrand: the tensor semigroup factorizes per particle
    f = SmoothFunction.bump(0.5, 0.3, 0.6, window=UNIT)
    E = ExponentialCylinderFunction(f=shifted_mode(-0.25))
    t, k = 0.05, 2
    grid, lhs = lift_semigroup(E, t, OP, k)
    ker = OP._axis_kernel(t, 0)
    nodes, w = grid.nodes[0], grid.weights[0]
    K = ker.kernel(nodes[:, None], nodes[None, :]) * w[None, :]
    Ttf = K @ (1.0 + E.f.value(nodes[:, None]))
    rhs = Ttf[:, None] * Ttf[None, :]
    assert np.max(np.abs(lhs - rhs)) < 1e-8


@pytest.mark.parametrize("t", [0.01, 0.1, 1.0])
def test_exponential_cylinder_identity(t):
    E = ExponentialCylinderFunction(f=shifted_mode(-0.2))
    for k in (1, 2, 3):
        grid, lhs = lift_semigroup(E, t, OP, k)
        ker = OP._axis_kernel(t, 0)
        nodes, w = grid.nodes[0], grid.weights[0]
        K = ker.kernel(nodes[:, None], nodes[None, :]) * w[None, :]
        Ttf = K @ E.f.value(nodes[:, None])
        rhs = np.ones(grid.shape())
        for j in range(k):
            shp = [1] * k
            shp[j] = len(nodes)
            rhs = rhs * (1.0 + Ttf.reshape(shp))
        assert np.max(np.abs(lhs - rhs)) < 1e-6


def test_semigroup_law_on_exponentials():
    E = ExponentialCylinderFunction(f=shifted_mode(-0.3))
    s, t = 0.04, 0.07
    grid, two_step = lift_semigroup(E, s, OP, 2)
    # apply the second step on the grid output
    two_step = OP.tensor_apply(two_step, t, grid)
    _, direct = lift_semigroup(E, s + t, OP, 2)
    assert np.max(np.abs(two_step - direct)) < 1e-6


def test_pi_symmetry_on_grids():
    f = SmoothFunction.bump(0.45, 0.3, 1.0, window=UNIT)
    g = SmoothFunction.bump(0.55, 0.3, 0.8, window=UNIT)
    F = cyl_compose(lambda r: tanh_of(r), cyl_from_star(f))
    G = cyl_compose(lambda r: tanh_of(r), cyl_from_star(g))
    t = 0.05
    for k in (1, 2):
        grid, TF = lift_semigroup(F, t, OP, k)
        from ugmt.heat import _eval_on_grid
        Fv = _eval_on_grid(F, grid)
        Gv = _eval_on_grid(G, grid)
        TG = OP.tensor_apply(Gv, t, grid)
        assert grid.integrate(TF * Gv) == pytest.approx(grid.integrate(Fv * TG), abs=1e-10)


def test_lp_contraction():
    f = SmoothFunction.bump(0.5, 0.3, 1.0, window=UNIT)
    F = cyl_compose(lambda r: tanh_of(r), cyl_from_star(f))
    from ugmt.configuration import sample_poisson_batch
    gams = sample_poisson_batch(UNIT, seed=3, n=3000)
    tf = np.array([_semigroup_at(F, g, 0.05, OP) for g in gams])
    fv = np.array([F.value(g) for g in gams])
    for p in (1.0, 2.0, 4.0):
        lhs = np.abs(tf) ** p
        rhs = np.abs(fv) ** p
        diff = lhs - rhs
        se = diff.std(ddof=1) / np.sqrt(len(diff))
        assert diff.mean() <= 3 * se


def test_intertwining_eigenfunction_and_bumps():
    fcos = SmoothFunction.neumann_mode((1,), UNIT)
    rep = check_intertwining(fcos, 0.01, OP, k=1)
    assert rep.max_residual < 1e-8
    fb = SmoothFunction.bump(0.5, 0.35, 1.0, window=UNIT)
    rep2 = check_intertwining(fb, 0.05, OP, k=2)
    assert rep2.max_residual < 1e-4
    # residuals stay small at small t and the refinement estimate is honest
    for t in (0.05, 0.02, 0.01):
        r = check_intertwining(fb, t, OP, k=1, order=128)
        assert r.max_residual < 1e-5
        assert r.refinement_residual <= r.max_residual + 1e-9
    with pytest.raises(DomainError):
        check_intertwining(fb, 0.05, OP, k=3)


def test_bakry_emery_constant_and_linear():
    f = SmoothFunction.bump(0.5, 0.3, 1.0, window=UNIT)
    Fc = cyl_compose(lambda r: mul_n(const(0.0), r) + const(2.0), cyl_from_star(f))
    plan = MCPlan(n_samples=500, seed=5, window=UNIT)
    rep = check_bakry_emery(Fc, 2.0, 0.05, OP, plan)
    assert rep.max_violation <= 0.0 + 1e-12
    F = cyl_from_star(f)
    rep2 = check_bakry_emery(F, 2.0, 0.01, OP, MCPlan(n_samples=2000, seed=6, window=UNIT))
    assert rep2.violation_fraction == 0.0


def test_regularization_slope_window():
    slope, pairs = regularization_slope(OP, np.geomspace(1e-3, 1e-1, 9))
    assert -0.65 <= slope <= -0.45
    assert all(v2 <= v1 for (_, v1), (_, v2) in zip(pairs, pairs[1:]))


def test_bessel_normalization_and_positivity():
    f = SmoothFunction.bump(0.5, 0.3, 1.0, window=UNIT)
    Fc = cyl_compose(lambda r: mul_n(const(0.0), r) + const(1.0), cyl_from_star(f))
    B = BesselOperator(alpha=0.8, p=2.0)
    gams = [Configuration(window=UNIT, points=np.array([[0.4]])),
            Configuration(window=UNIT, points=np.array([[0.3], [0.7]]))]
    vals = bessel_apply(Fc, B, OP, gams)
    assert np.max(np.abs(vals - 1.0)) < 1e-6
    Fpos = cyl_compose(lambda r: smoothstep(r, 0.4, 0.1), cyl_from_star(f))
    assert np.all(bessel_apply(Fpos, B, OP, gams) >= 0.0)
    assert BesselOperator(alpha=0.1, p=2.0).underresolved


def test_bessel_eigen_closed_form():
    # B applied to a mode statistic: (1 + lambda)^(-alpha/2) decay
    amp = 0.3
    fcos = SmoothFunction.neumann_mode((1,), UNIT, amplitude=amp)
    F = cyl_from_star(fcos)
    alpha = 1.2
    B = BesselOperator(alpha=alpha, p=2.0)
    gam = Configuration(window=UNIT, points=np.array([[0.23]]))
    lam = np.pi**2
    expected = (1.0 + lam) ** (-alpha / 2.0) * F.value(gam)
    got = bessel_apply(F, B, OP, [gam], t_floor=1e-6)[0]
    assert got == pytest.approx(expected, rel=2e-3)


def test_capacity_conventions():
    B = BesselOperator(alpha=0.6, p=2.0)
    f = SmoothFunction.bump(0.5, 0.3, 1.0, window=UNIT)
    Fc = cyl_compose(lambda r: mul_n(const(0.0), r) + const(1.0), cyl_from_star(f))
    # empty set
    bound, diag = capacity_upper_bound([], 0.6, 2.0, [Fc], B, OP)
    assert bound == 0.0
    # full space with the constant candidate: B1 = 1 and ||1||_p = 1
    sieve = [Configuration(window=UNIT, points=np.array([[x]])) for x in (0.2, 0.8)]
    bound2, _ = capacity_upper_bound(sieve, 0.6, 2.0, [(Fc, lambda p: 1.0)], B, OP)
    assert bound2 == pytest.approx(1.0, rel=1e-4)


def test_battery_runs_all_pairs():
    f = SmoothFunction.bump(0.45, 0.28, 1.0, window=UNIT)
    F = cyl_compose(lambda r: tanh_of(r), cyl_from_star(f))
    plan = MCPlan(n_samples=1000, seed=9, window=UNIT)
    reports = bakry_emery_battery(F, [1.0, 2.0], [0.01, 0.1], OP, plan)
    assert len(reports) == 4
    assert all(r.violation_fraction == 0.0 for r in reports)


def test_gradient_norm_consistency():
    # for the mode statistic the semigroup gradient norm decays with the
    # exact eigenvalue rate on every stratum
    fcos = SmoothFunction.neumann_mode((1,), UNIT, amplitude=0.5)
    F = cyl_from_star(fcos)
    n0, _ = lifted_gradient_norm(F, None, OP, p=1.0)
    t = 0.02
    nt, _ = lifted_gradient_norm(F, t, OP, p=1.0)
    assert nt == pytest.approx(np.exp(-np.pi**2 * t) * n0, rel=1e-6)
