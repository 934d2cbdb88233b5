import numpy as np
import pytest

from ugmt.geometry import (BoxDomain, DomainError, HeatKernel1D, QuadratureError,
                           SmoothFunction, SmoothVectorField, gauss_legendre,
                           interval, neumann_kernel, neumann_kernel_tail_bound,
                           semigroup_apply_1d)

RNG = np.random.default_rng(20240901)


def probe_points(f, n=100, frac=0.9):
    # points inside the support, away from the support edge where the
    # mollifier's higher derivatives dominate the finite-difference oracle
    if f.kind in ("bump", "coordinate_bump"):
        c = np.array(f.center)
        dirs = RNG.normal(size=(n, f.dim))
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        radii = f.width * frac * RNG.uniform(0.05, 1.0, n) ** (1.0 / f.dim)
        return c + radii[:, None] * dirs
    lo, hi = np.array(f.support.lower), np.array(f.support.upper)
    return RNG.uniform(lo + 0.02, hi - 0.02, (n, f.dim))


FAMILY = [
    SmoothFunction.bump(0.5, 0.3, 1.4),
    SmoothFunction.bump((0.4, 0.6), 0.35, 0.8),
    SmoothFunction.coordinate_bump(0.5, 0.3, 1.1),
    SmoothFunction.coordinate_bump((0.5, 0.5), 0.3, 0.9, axis=1),
    SmoothFunction.neumann_mode((2,), interval(0, 1)),
    SmoothFunction.linear(interval(0, 1), amplitude=0.7),
    SmoothFunction.plateau(interval(0.2, 0.8), 0.05, window=interval(0, 1)),
]


@pytest.mark.parametrize("f", FAMILY, ids=lambda f: f.kind)
def test_gradient_matches_central_differences(f):
    pts = probe_points(f)
    h = 1e-5
    grad = f.gradient(pts)
    scale = np.abs(grad).max() + 1e-9
    for a in range(f.dim):
        e = np.zeros(f.dim)
        e[a] = h
        fd = (f.value(pts + e) - f.value(pts - e)) / (2 * h)
        assert np.max(np.abs(fd - grad[:, a])) <= 1e-5 * scale


@pytest.mark.parametrize("f", FAMILY, ids=lambda f: f.kind)
def test_laplacian_matches_second_differences(f):
    pts = probe_points(f)
    h = 1e-4
    lap = f.laplacian(pts)
    fd = np.zeros(len(pts))
    for a in range(f.dim):
        e = np.zeros(f.dim)
        e[a] = h
        fd += (f.value(pts + e) - 2 * f.value(pts) + f.value(pts - e)) / h**2
    scale = np.abs(lap).max() + 1e-6
    # 1e-7 absolute floor covers second-difference roundoff on flat functions
    assert np.max(np.abs(fd - lap)) <= 1e-4 * scale + 1e-7


@pytest.mark.parametrize("f", FAMILY, ids=lambda f: f.kind)
def test_sup_bounds_dominate_probe_grid(f):
    lo, hi = np.array(f.support.lower), np.array(f.support.upper)
    n = 10_000 if f.dim == 1 else 100
    axes = [np.linspace(lo[a], hi[a], n if f.dim == 1 else 100) for a in range(f.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    vb, gb, lb = f.sup_bounds()
    assert np.abs(f.value(pts)).max() <= vb + 1e-12
    assert np.linalg.norm(f.gradient(pts), axis=-1).max() <= gb + 1e-12
    assert np.abs(f.laplacian(pts)).max() <= lb + 1e-9


def test_bump_vanishes_outside_support():
    f = SmoothFunction.bump(0.5, 0.2, 2.0)
    pts = np.array([[0.71], [0.29], [0.9]])
    assert np.all(f.value(pts) == 0.0)
    assert np.all(f.gradient(pts) == 0.0)


def test_vector_field_divergence_matches_differences():
    v = SmoothVectorField((SmoothFunction.bump((0.5, 0.5), 0.3, 1.0),
                           SmoothFunction.coordinate_bump((0.5, 0.5), 0.3, 0.8)))
    pts = probe_points(v.components[0], 200)
    h = 1e-5
    fd = np.zeros(len(pts))
    for a in range(2):
        e = np.zeros(2)
        e[a] = h
        fd += (v.value(pts + e)[:, a] - v.value(pts - e)[:, a]) / (2 * h)
    div = v.divergence(pts)
    scale = np.abs(div).max() + 1e-9
    assert np.max(np.abs(fd - div)) <= 1e-6 * scale
    assert np.allclose(v.adjoint_divergence(pts), -div)


@pytest.mark.parametrize("t", [1e-3, 1e-2, 0.1, 1.0, 10.0])
def test_kernel_mass_symmetry_positivity(t):
    ker = HeatKernel1D(L=1.0, t=t)
    nodes, w = gauss_legendre(0.0, 1.0, 96)
    K = ker.kernel(nodes[:, None], nodes[None, :])
    assert np.all(K >= 0)
    assert np.allclose(K, K.T)
    mass = (K * w[None, :]).sum(axis=1)
    assert np.max(np.abs(mass - 1.0)) <= ker.tail_bound() + 1e-10


def test_kernel_domain_errors():
    with pytest.raises(DomainError):
        neumann_kernel(-0.1, 0.5, 0.1, 1.0)
    with pytest.raises(DomainError):
        neumann_kernel(0.5, 0.5, -0.1, 1.0)


def test_kernel_truncation_bound_decreases():
    bounds = [neumann_kernel_tail_bound(0.5, 1.0, M) for M in (2, 4, 8, 16)]
    assert all(b2 < b1 for b1, b2 in zip(bounds, bounds[1:]))


def test_approximate_identity():
    f = SmoothFunction.bump(0.5, 0.3, 1.0)
    vals = []
    for t in (1e-2, 1e-3, 1e-4):
        nodes, w = gauss_legendre(0.0, 1.0, 512)
        k = neumann_kernel(0.5, nodes, t, 1.0)
        vals.append(float(np.sum(w * k * f.value(nodes[:, None]))))
    errs = [abs(v - f.value(np.array([[0.5]]))[0]) for v in vals]
    # T_t f - f ~ t lap f; the bump's Laplacian at the center is ~ -22 a / w^2
    assert errs[-1] < 5e-3 and errs[-1] < errs[0]


def test_cosine_eigenfunction_decay():
    g = semigroup_apply_1d(lambda x: np.cos(np.pi * x), 0.01, 1.0, 64)
    exact = np.exp(-np.pi**2 * 0.01) * np.cos(np.pi * g.nodes)
    assert np.max(np.abs(g.values - exact)) < 1e-12
    # probe against the cosine mode's exact decay at x = 0.3
    probe = np.exp(-np.pi**2 * 0.01) * np.cos(0.3 * np.pi)
    assert abs(probe - 0.53254) < 5e-5


def test_semigroup_constant_and_mode():
    g = semigroup_apply_1d(lambda x: 3.0, 0.5, 1.0, 64)
    assert np.max(np.abs(g.values - 3.0)) < 1e-10
    L = 2.0
    g2 = semigroup_apply_1d(lambda x: np.cos(2 * np.pi * x / L), 0.05, L, 128)
    exact = np.exp(-((2 * np.pi / L) ** 2) * 0.05) * np.cos(2 * np.pi * g2.nodes / L)
    assert np.max(np.abs(g2.values - exact)) < 1e-10


def test_semigroup_property_and_contraction():
    f = SmoothFunction.bump(0.5, 0.25, 1.3)
    g1 = semigroup_apply_1d(f, 0.02, 1.0, 96)
    g2 = semigroup_apply_1d(g1, 0.03, 1.0, 96)
    direct = semigroup_apply_1d(f, 0.05, 1.0, 96)
    assert np.max(np.abs(g2.values - direct.values)) < 1e-8
    assert direct.sup() <= 1.3 + 1e-12
    assert np.all(direct.values >= -1e-12)


def test_semigroup_quadrature_guard():
    with pytest.raises(QuadratureError):
        semigroup_apply_1d(lambda x: x, 1e-5, 1.0, 64)
    with pytest.raises(QuadratureError):
        semigroup_apply_1d(lambda x: x, 0.1, 1.0, 8)


def test_box_invariants_and_descriptors():
    with pytest.raises(DomainError):
        BoxDomain((0.0, 0.0), (1.0, 0.0))
    b = BoxDomain((0.0, -1.0), (2.0, 3.0))
    assert b.volume == pytest.approx(8.0)
    assert BoxDomain.from_descriptor(b.descriptor()) == b


@pytest.mark.parametrize("f", [FAMILY[0], FAMILY[2], FAMILY[4], FAMILY[5], FAMILY[6]],
                         ids=lambda f: f.kind)
def test_function_descriptor_round_trip(f):
    g = SmoothFunction.from_descriptor(f.descriptor())
    pts = probe_points(f, 20)
    assert np.allclose(f.value(pts), g.value(pts))
