"""Lifted heat semigroup on the configuration space over a box.

The Poisson measure splits over particle counts, and the lifted semigroup
acts stratum by stratum as the k-fold tensor Neumann semigroup on the product
box, so every operator here reduces to 1-d kernel matrices applied along
tensor-grid axes.  Gradients of semigroup outputs are computed through the
differentiated kernel (equivalently, the absorbing-boundary kernel applied to
the differentiated integrand), never by finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .configuration import Configuration, MCEstimate, SetSpec
from .cylinder import CylinderFunction, ExponentialCylinderFunction
from .geometry import (BoxDomain, DomainError, HeatKernel1D, QuadratureError,
                       gauss_legendre, required_order)
from .montecarlo import MCPlan, poisson_k_cutoff, poisson_pmf, sample_values
from .productspace import product_form
from .rng import stream_rng

__all__ = [
    "LiftedHeatOperator",
    "BesselOperator",
    "StratumGrid",
    "lift_semigroup",
    "lifted_gradient_norm",
    "check_intertwining",
    "check_bakry_emery",
    "regularization_slope",
    "bessel_apply",
    "capacity_upper_bound",
    "IntertwiningReport",
    "ViolationReport",
]


@dataclass(frozen=True)
class StratumGrid:
    """Tensor Gauss-Legendre grid on window^k with per-particle axes."""

    window: BoxDomain
    k: int
    order: int
    nodes: tuple[np.ndarray, ...]    # one per axis (n per particle)
    weights: tuple[np.ndarray, ...]

    @property
    def axes(self) -> int:
        return self.k * self.window.dim

    def shape(self) -> tuple[int, ...]:
        return (self.order,) * self.axes

    def axis_mesh(self, axis: int) -> np.ndarray:
        """Node values of one axis broadcast over the full grid shape."""
        shp = [1] * self.axes
        shp[axis] = self.order
        return self.nodes[axis].reshape(shp)

    def integrate(self, values: np.ndarray) -> float:
        out = values
        for w in reversed(self.weights):
            out = np.tensordot(out, w, axes=([-1], [0]))
        return float(out)

    def tuples(self) -> np.ndarray:
        """All grid points as ordered tuples, shape (order^(nk), k, n)."""
        mesh = np.meshgrid(*self.nodes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1).reshape(-1, self.k, self.window.dim)


def _eval_on_grid(F, grid: StratumGrid) -> np.ndarray:
    """Evaluate a configuration functional on the grid without materializing tuples.

    Works for cylinder functions (sums of per-particle statistics feed the
    outer), product statistics, and level-set indicators; falls back to tuple
    evaluation otherwise.
    """
    n = grid.window.dim
    k = grid.k
    if isinstance(F, CylinderFunction):
        stars = []
        for f in F.inners:
            per_particle = _particle_mesh(f, grid)
            acc = np.zeros(grid.shape())
            for j in range(k):
                acc = acc + per_particle[j]
            stars.append(acc)
        u = np.stack(stars, axis=-1)
        return F.outer.value(u)
    if isinstance(F, ExponentialCylinderFunction):
        out = np.ones(grid.shape())
        for j in range(k):
            out = out * (1.0 + _particle_mesh(F.f, grid)[j])
        return out
    if isinstance(F, SetSpec):
        if F.variant in ("level_set", "level_sheet"):
            if F.count_equals is not None and grid.k != F.count_equals:
                return np.zeros(grid.shape())
            vals = _eval_on_grid(F.function, grid)
            if F.variant == "level_sheet":
                return (vals == F.level).astype(float)
            return (vals > F.level).astype(float) if F.strict else (vals >= F.level).astype(float)
        raise DomainError("grid path supports level-set specs only")
    # generic: tuple evaluation (may be large)
    pf = product_form(F)
    return pf.value(grid.tuples()).reshape(grid.shape())


def _particle_mesh(f, grid: StratumGrid) -> list[np.ndarray]:
    """f evaluated per particle, each broadcastable over the grid shape."""
    n = grid.window.dim
    out = []
    for j in range(k_ := grid.k):
        axes = list(range(j * n, (j + 1) * n))
        mesh = np.meshgrid(*[grid.nodes[a] for a in axes], indexing="ij")
        pts = np.stack(mesh, axis=-1)
        vals = f.value(pts)
        shp = [1] * grid.axes
        for i, a in enumerate(axes):
            shp[a] = grid.order
        out.append(vals.reshape(shp))
    return out


def _particle_mesh_grad(f, grid: StratumGrid, j: int) -> list[np.ndarray]:
    """Components of grad f at particle j, broadcastable over the grid shape."""
    n = grid.window.dim
    axes = list(range(j * n, (j + 1) * n))
    mesh = np.meshgrid(*[grid.nodes[a] for a in axes], indexing="ij")
    pts = np.stack(mesh, axis=-1)
    g = f.gradient(pts)
    shp = [1] * grid.axes
    for a in axes:
        shp[a] = grid.order
    return [g[..., c].reshape(shp) for c in range(n)]


@dataclass
class LiftedHeatOperator:
    """Stratum-wise tensor Neumann semigroup over a box window.

    Grid-based operations are available for small particle counts (per-axis
    orders shrink as k grows); the Poisson count truncation K_max is chosen
    from the stated tail tolerance.
    """

    window: BoxDomain
    k_tail_tol: float = 1e-10
    grid_orders: dict[int, int] = field(default_factory=dict)
    K_max: int = 0

    def __post_init__(self):
        if not self.grid_orders:
            if self.window.dim == 1:
                self.grid_orders = {1: 80, 2: 64, 3: 40, 4: 24}
            else:
                self.grid_orders = {1: 24, 2: 10}
        if self.K_max == 0:
            self.K_max = poisson_k_cutoff(self.window.volume, self.k_tail_tol)
        self._kernels: dict = {}

    @property
    def grid_k_max(self) -> int:
        return max(self.grid_orders)

    def grid(self, k: int, order: int | None = None) -> StratumGrid:
        if order is None:
            if k not in self.grid_orders:
                raise DomainError(f"no grid order configured for k={k}")
            order = self.grid_orders[k]
        nodes, weights = [], []
        for j in range(k):
            for a in range(self.window.dim):
                nd, w = gauss_legendre(self.window.lower[a], self.window.upper[a], order)
                nodes.append(nd)
                weights.append(w)
        return StratumGrid(window=self.window, k=k, order=order,
                           nodes=tuple(nodes), weights=tuple(weights))

    def _axis_kernel(self, t: float, axis_in_particle: int) -> HeatKernel1D:
        L = float(self.window.sides[axis_in_particle])
        key = (t, axis_in_particle)
        if key not in self._kernels:
            self._kernels[key] = HeatKernel1D(L=L, t=t)
        return self._kernels[key]

    def _matrices(self, t: float, grid: StratumGrid, kind: str) -> list[np.ndarray]:
        n = self.window.dim
        mats = []
        for axis in range(grid.axes):
            a = axis % n
            ker = self._axis_kernel(t, a)
            lo = self.window.lower[a]
            x = grid.nodes[axis] - lo
            w = grid.weights[axis]
            if required_order(t, ker.L) > grid.order:
                raise QuadratureError(
                    f"grid order {grid.order} cannot resolve the kernel at t={t}")
            if kind == "neumann":
                mats.append(ker.kernel(x[:, None], x[None, :]) * w[None, :])
            elif kind == "dx":
                mats.append(ker.kernel_dx(x[:, None], x[None, :]) * w[None, :])
            elif kind == "dirichlet":
                mats.append(ker.dirichlet(x[:, None], x[None, :]) * w[None, :])
            else:
                raise ValueError(kind)
        return mats

    def tensor_apply(self, values: np.ndarray, t: float, grid: StratumGrid,
                     special_axis: int | None = None,
                     special_kind: str = "dx") -> np.ndarray:
        """Apply the tensor kernel along every axis (one axis may use the
        differentiated or absorbing kernel)."""
        mats = self._matrices(t, grid, "neumann")
        if special_axis is not None:
            mats[special_axis] = self._matrices(t, grid, special_kind)[special_axis]
        out = values
        for axis, K in enumerate(mats):
            out = np.moveaxis(np.tensordot(K, out, axes=([1], [axis])), 0, axis)
        return out

    def semigroup_on_stratum(self, F, t: float, k: int,
                             order: int | None = None) -> tuple[StratumGrid, np.ndarray]:
        grid = self.grid(k, order)
        vals = _eval_on_grid(F, grid)
        return grid, self.tensor_apply(vals, t, grid)

    def gradient_of_semigroup(self, F, t: float, k: int,
                              order: int | None = None) -> tuple[StratumGrid, np.ndarray]:
        """Full product-space gradient of T_t F on the k-stratum grid.

        Returns (grid, G) with G of shape (axes, *grid.shape()); works for
        indicator-type F as well since only the kernel is differentiated.
        """
        grid = self.grid(k, order)
        vals = _eval_on_grid(F, grid)
        comps = [self.tensor_apply(vals, t, grid, special_axis=ax, special_kind="dx")
                 for ax in range(grid.axes)]
        return grid, np.stack(comps, axis=0)


def lift_semigroup(F, t: float, op: LiftedHeatOperator, k: int,
                   order: int | None = None) -> tuple[StratumGrid, np.ndarray]:
    """T_t F on the k-particle stratum grid (tensor kernel quadrature)."""
    if t <= 0:
        raise DomainError("t must be positive")
    if k > op.K_max:
        raise DomainError(f"stratum {k} exceeds the count truncation {op.K_max}")
    return op.semigroup_on_stratum(F, t, k, order)


def lifted_gradient_norm(F, t: float | None, op: LiftedHeatOperator, p: float = 1.0,
                         sup_tail: float | None = None) -> tuple[float, float]:
    """|| grad T_t F ||_p^p under the Poisson measure (t=None means grad F).

    Grid strata are summed with Poisson weights; the truncated tail is charged
    to the error bar using ``sup_tail`` (a bound on |grad T_t F|_T^p beyond the
    grid strata) when provided, else the last stratum value is used as a
    conservative proxy.
    """
    lam = op.window.volume
    total = 0.0
    last_term = 0.0
    single = isinstance(F, SetSpec) and F.count_equals is not None
    strata = [F.count_equals] if single else list(range(1, op.grid_k_max + 1))
    for k in strata:
        if t is None:
            grid = op.grid(k)
            comps = _grad_grid(F, op, grid)
            sq = np.zeros(grid.shape())
            for c in comps:
                sq += c * c
        else:
            grid, G = op.gradient_of_semigroup(F, t, k)
            sq = np.einsum("a...,a...->...", G, G)
        integrand = sq ** (p / 2.0)
        val = grid.integrate(integrand) / lam**k * poisson_pmf(k, lam)
        total += val
        last_term = val
    if single:
        tail_err = 0.0  # the set lives on one stratum; the others vanish
    elif sup_tail is None:
        tail_err = abs(last_term)
    else:
        tail_err = float(stats.poisson.sf(op.grid_k_max, lam)) * sup_tail
    return total, tail_err


def _grad_grid(F, op: LiftedHeatOperator, grid: StratumGrid) -> list[np.ndarray]:
    """Components of the product-space gradient of F itself on the grid."""
    if isinstance(F, CylinderFunction):
        stars = []
        for f in F.inners:
            acc = np.zeros(grid.shape())
            for pm in _particle_mesh(f, grid):
                acc = acc + pm
            stars.append(acc)
        u = np.stack(stars, axis=-1)
        comps = [np.zeros(grid.shape()) for _ in range(grid.axes)]
        n = grid.window.dim
        for i, f in enumerate(F.inners):
            dphi = F.outer.partial(i).eval(u)
            for j in range(grid.k):
                gcomps = _particle_mesh_grad(f, grid, j)
                for c in range(n):
                    comps[j * n + c] = comps[j * n + c] + dphi * gcomps[c]
        return comps
    raise DomainError("direct gradients on grids need a cylinder function")


# ---------------------------------------------------------------------------
# intertwining


@dataclass(frozen=True)
class IntertwiningReport:
    t: float
    k: int
    max_residual: float
    refinement_residual: float

    @property
    def reliable(self) -> bool:
        return self.max_residual <= 10.0 * self.refinement_residual + 1e-9


def check_intertwining(f, t: float, op: LiftedHeatOperator, k: int = 1,
                       order: int | None = None) -> IntertwiningReport:
    """Compare the two routes to the gradient of the lifted semigroup of f-star.

    Route one differentiates the Neumann kernel; route two applies the
    absorbing-boundary kernel to the exact gradient of the statistic.  The
    report carries the residual at double resolution as a quadrature error
    estimate.
    """
    if k > 2:
        raise DomainError("intertwining grids are limited to k <= 2")
    from .cylinder import cyl_from_star
    F = cyl_from_star(f)

    def residual(order_):
        grid = op.grid(k, order_)
        vals = _eval_on_grid(F, grid)
        worst = 0.0
        n = op.window.dim
        for ax in range(grid.axes):
            lhs = op.tensor_apply(vals, t, grid, special_axis=ax, special_kind="dx")
            dvals = _grad_grid(F, op, grid)[ax]
            rhs = op.tensor_apply(dvals, t, grid, special_axis=ax, special_kind="dirichlet")
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
        return worst

    base_order = order or max(op.grid_orders.get(k, 48), 96)
    r1 = residual(base_order)
    r2 = residual(min(2 * base_order, 192))
    return IntertwiningReport(t=t, k=k, max_residual=r1, refinement_residual=r2)


# ---------------------------------------------------------------------------
# pointwise p-Bakry-Emery check


@dataclass(frozen=True)
class ViolationReport:
    p: float
    t: float
    n_samples: int
    max_violation: float
    violation_fraction: float
    tolerance: float = 1e-8

    @property
    def passed(self) -> bool:
        return self.violation_fraction == 0.0

    def to_json(self) -> dict:
        return {"p": self.p, "t": self.t, "n": self.n_samples,
                "max_violation": self.max_violation,
                "violation_fraction": self.violation_fraction,
                "tolerance": self.tolerance}


_BE_ORDERS = {1: 64, 2: 48, 3: 24, 4: 16, 5: 12, 6: 12, 7: 9, 8: 8}
_BE_CHUNK_FLOATS = 6_000_000


def _draw_configurations(plan: MCPlan) -> list[np.ndarray]:
    """Point arrays of the plan's samples, in stream order."""
    out = []
    S = plan.worker_streams
    from .configuration import _draw
    for j in range(S):
        rng = stream_rng(plan.seed, j)
        for _ in range(len(range(j, plan.n_samples, S))):
            out.append(_draw(plan.window, rng))
    return out


def bakry_emery_battery(F: CylinderFunction, ps, ts, op: LiftedHeatOperator,
                        plan: MCPlan, tolerance: float = 1e-8
                        ) -> list[ViolationReport]:
    """Pointwise |grad T_t F|^p <= T_t |grad F|^p over sampled configurations.

    Both sides are quadratures over the same per-sample product grid: the
    right side contracts |grad F|^p with the Neumann kernel, the left side
    contracts the integrand gradient with the absorbing kernel (equal to the
    differentiated Neumann kernel after integration by parts).  Samples are
    batched by particle count, so one call evaluates all (p, t) pairs.
    One-dimensional windows only; counts beyond the configured orders use a
    coarse grid, which stays faithful because both sides share it.
    """
    if op.window.dim != 1:
        raise DomainError("the pointwise check is implemented for 1-d windows")
    ps = [float(p) for p in np.atleast_1d(ps)]
    ts = [float(t) for t in np.atleast_1d(ts)]
    if any(p < 1 for p in ps):
        raise DomainError("p must be at least 1")
    points = _draw_configurations(plan)
    by_k: dict[int, list[np.ndarray]] = {}
    for pts in points:
        by_k.setdefault(pts.shape[0], []).append(pts)
    stats_acc = {(p, t): [0.0, 0] for p in ps for t in ts}
    n_total = len(points)
    L = float(op.window.sides[0])
    lo = op.window.lower[0]
    for k, group in sorted(by_k.items()):
        if k == 0:
            continue  # both sides vanish on the vacuum
        q = _BE_ORDERS.get(k, 8)
        nodes, w = gauss_legendre(0.0, L, q)
        pts_col = (nodes + lo)[:, None]
        fvals = np.stack([f.value(pts_col) for f in F.inners], axis=-1)   # (q, l)
        fgrads = np.stack([f.gradient(pts_col)[:, 0] for f in F.inners], axis=-1)
        shape = (q,) * k
        u = np.zeros(shape + (F.arity,))
        for j in range(k):
            u = u + fvals.reshape([q if a == j else 1 for a in range(k)] + [F.arity])
        dphi = np.stack([F.outer.partial(i).eval(u) for i in range(F.arity)], axis=-1)
        per_j = []
        sq = np.zeros(shape)
        for j in range(k):
            gj = np.zeros(shape)
            for i in range(F.arity):
                gshape = [q if a == j else 1 for a in range(k)]
                gj = gj + dphi[..., i] * fgrads[:, i].reshape(gshape)
            per_j.append(gj)
            sq = sq + gj * gj
        X = (np.stack(group)[:, :, 0] - lo)                              # (m, k)
        chunk = max(1, _BE_CHUNK_FLOATS // (q ** k + 1))
        for t in ts:
            ker = op._axis_kernel(t, 0)
            powers = {p: sq ** (p / 2.0) for p in ps}
            for s in range(0, X.shape[0], chunk):
                xs = X[s:s + chunk]
                A = ker.kernel(xs[..., None], nodes[None, None, :]) * w    # (m,k,q)
                D = ker.dirichlet(xs[..., None], nodes[None, None, :]) * w

                def contract(vals, special_j=None):
                    out = np.broadcast_to(vals, (xs.shape[0],) + vals.shape) \
                        if vals.ndim == k else vals
                    for j in range(k):
                        vec = D[:, j] if j == special_j else A[:, j]
                        out = np.einsum("mq...,mq->m...", out, vec)
                    return out

                lhs_sq = np.zeros(xs.shape[0])
                for j in range(k):
                    comp = contract(per_j[j], special_j=j)
                    lhs_sq += comp * comp
                for p in ps:
                    rhs = contract(powers[p])
                    gap = np.maximum(lhs_sq, 0.0) ** (p / 2.0) - rhs
                    acc = stats_acc[(p, t)]
                    acc[0] = max(acc[0], float(np.max(gap)))
                    acc[1] += int(np.sum(gap > tolerance))
    return [ViolationReport(p=p, t=t, n_samples=n_total,
                            max_violation=stats_acc[(p, t)][0],
                            violation_fraction=stats_acc[(p, t)][1] / max(n_total, 1),
                            tolerance=tolerance)
            for p in ps for t in ts]


def check_bakry_emery(F: CylinderFunction, p: float, t: float,
                      op: LiftedHeatOperator, plan: MCPlan,
                      tolerance: float = 1e-8) -> ViolationReport:
    """Single (p, t) pointwise Bakry-Emery check; see bakry_emery_battery."""
    return bakry_emery_battery(F, [p], [t], op, plan, tolerance)[0]


def regularization_slope(op: LiftedHeatOperator, t_grid, modes=range(1, 9),
                         order: int = 96) -> tuple[float, list[tuple[float, float]]]:
    """Log-log slope of the heat regularization envelope (p = 2).

    The mode statistics factor over particles, so the envelope of
    ||grad T_t F_j|| / ||F_j|| over cosine modes is computed on the
    single-particle stratum with a high-order grid and the differentiated
    kernel; the fitted slope probes the discretized semigroup, not a closed
    form.  The sharp regularization exponent is -1/2.
    """
    from .geometry import SmoothFunction

    if op.window.dim != 1:
        raise DomainError("the regularization probe is 1-d")
    lo = op.window.lower[0]
    L = float(op.window.sides[0])
    nodes, w = gauss_legendre(0.0, L, order)
    pts = (nodes + lo)[:, None]
    pairs = []
    for t in t_grid:
        ker = op._axis_kernel(t, 0)
        if required_order(t, L) > order:
            raise QuadratureError(f"order {order} cannot resolve t={t}")
        Dx = ker.kernel_dx(nodes[:, None], nodes[None, :]) * w[None, :]
        best = 0.0
        for j in modes:
            f = SmoothFunction.neumann_mode((j,), op.window)
            fv = f.value(pts)
            dTf = Dx @ fv
            num = np.sqrt(np.sum(w * dTf * dTf))
            den = np.sqrt(np.sum(w * fv * fv))
            best = max(best, num / den)
        pairs.append((float(t), float(best)))
    logs = np.log(np.array(pairs))
    slope = float(np.polyfit(logs[:, 0], logs[:, 1], 1)[0])
    return slope, pairs


def _lp_norm(F: CylinderFunction, op: LiftedHeatOperator, p: float) -> float:
    lam = op.window.volume
    total = poisson_pmf(0, lam) * abs(F.value(
        Configuration(window=op.window, points=np.zeros((0, op.window.dim))))) ** p
    for k in range(1, op.grid_k_max + 1):
        grid = op.grid(k)
        vals = np.abs(_eval_on_grid(F, grid)) ** p
        total += grid.integrate(vals) / lam**k * poisson_pmf(k, lam)
    return total ** (1 / p)


# ---------------------------------------------------------------------------
# Bessel operator and capacity upper bounds


@dataclass(frozen=True)
class BesselOperator:
    """Gamma-weighted time average of the heat semigroup.

    B F = (1/Gamma(alpha/2)) * integral of e^{-t} t^{alpha/2-1} T_t F dt,
    realized by generalized Gauss-Laguerre quadrature; exact on constants.
    """

    alpha: float
    p: float
    n_nodes: int = 48

    def __post_init__(self):
        if self.alpha <= 0 or not (1.0 <= self.p < np.inf):
            raise DomainError("need alpha > 0 and p in [1, inf)")

    @property
    def underresolved(self) -> bool:
        return self.alpha < 0.2

    def nodes_weights(self) -> tuple[np.ndarray, np.ndarray]:
        a = self.alpha / 2.0 - 1.0
        x, w = special.roots_genlaguerre(self.n_nodes, a)
        w = w / special.gamma(self.alpha / 2.0)
        return x, w


def bessel_apply(F, B: BesselOperator, op: LiftedHeatOperator,
                 gammas: list[Configuration], t_floor: float = 5e-4) -> np.ndarray:
    """B F at the given configurations (per-sample tensor quadrature).

    Laguerre nodes below ``t_floor`` are evaluated at the floor; for bounded F
    this perturbs the average by at most the weight mass below the floor times
    the modulus of continuity of t -> T_t F, and keeps kernel quadrature well
    posed.
    """
    ts, ws = B.nodes_weights()
    ts = np.maximum(ts, t_floor)
    out = np.zeros(len(gammas))
    for i, gamma in enumerate(gammas):
        acc = 0.0
        for t, w in zip(ts, ws):
            acc += w * _semigroup_at(F, gamma, t, op)
        out[i] = acc
    return out


def _semigroup_at(F, gamma: Configuration, t: float, op: LiftedHeatOperator,
                  q: int | None = None) -> float:
    """T_t F(gamma) by per-particle kernel quadrature (1-d windows).

    Each particle's kernel is integrated over a localized sub-interval
    carrying all but ~1e-11 of its mass, so long windows stay resolvable at
    small times.
    """
    k = gamma.count
    if k == 0:
        return float(product_form(F).value(np.zeros((1, 0, op.window.dim)))[0])
    if op.window.dim != 1:
        raise DomainError("per-sample semigroup evaluation is 1-d only")
    L = float(op.window.sides[0])
    lo = op.window.lower[0]
    if q is None:
        q = _BE_ORDERS.get(k, 8)
    ker = op._axis_kernel(t, 0)
    xs = gamma.points[:, 0] - lo
    reach = 7.0 * np.sqrt(2.0 * t)
    rows_A = []
    rows_pts = []
    for x in xs:
        a = max(0.0, x - reach)
        b = min(L, x + reach)
        nodes, w = gauss_legendre(a, b, q)
        rows_A.append(ker.kernel(np.full(q, x), nodes) * w)
        rows_pts.append(nodes + lo)
    if isinstance(F, ExponentialCylinderFunction):
        out = 1.0
        for A, pts in zip(rows_A, rows_pts):
            out *= float(A @ (1.0 + F.f.value(pts[:, None])))
        return out
    if isinstance(F, CylinderFunction):
        shape = (q,) * k
        u = np.zeros(shape + (F.arity,))
        for j in range(k):
            fv = np.stack([f.value(rows_pts[j][:, None]) for f in F.inners], axis=-1)
            u = u + fv.reshape([q if a == j else 1 for a in range(k)] + [F.arity])
        vals = F.outer.value(u)
        out = vals
        for j in range(k):
            out = np.tensordot(rows_A[j], out, axes=([0], [0]))
        return float(out)
    raise DomainError("per-sample semigroup needs a cylinder-type functional")


def capacity_upper_bound(E_sieve: list[Configuration], alpha: float, p: float,
                         candidates: list, B: BesselOperator | None,
                         op: LiftedHeatOperator, *, quad_k: int = 4,
                         quad_orders: dict[int, int] | None = None,
                         seed: int = 0) -> tuple[float, dict]:
    """Upper bound on the (alpha, p) capacity of the set represented by the sieve.

    Each nonnegative candidate F is scaled so that B F >= 1 on the sieve
    configurations; the bound is the smallest ||F / min_sieve(B F)||_p^p.
    Candidates are either cylinder functions (the p-norm is then computed by
    count stratification) or pairs (F, norm_fn) with a caller-supplied exact
    norm routine (e.g. factorized over independent regions).  An empty sieve
    encodes the empty set (capacity zero).  Returns (bound, diagnostics); the
    bound is +inf when no candidate has a positive sieve minimum.
    """
    if B is None:
        B = BesselOperator(alpha=alpha, p=p)
    if not candidates:
        raise DomainError("candidate list must be nonempty")
    if not E_sieve:
        return 0.0, {"note": "empty set"}
    from .montecarlo import poisson_stratified
    best = float("inf")
    diag = {"candidates": []}
    for cand in candidates:
        F, norm_fn = cand if isinstance(cand, tuple) else (cand, None)
        bf = bessel_apply(F, B, op, E_sieve)
        m = float(np.min(bf))
        if m <= 0:
            diag["candidates"].append({"sieve_min": m, "norm": None})
            continue
        if norm_fn is not None:
            norm_p = float(norm_fn(p))
        else:
            pf = product_form(F)

            def Hk(k, X):
                return np.abs(pf.value(X)) ** p

            norm_p, _ = poisson_stratified(Hk, op.window, quad_k=quad_k,
                                           quad_orders=quad_orders, seed=seed,
                                           sup_bound=None, mc_n=20_000)
        bound = norm_p / m**p
        diag["candidates"].append({"sieve_min": m, "norm": norm_p, "bound": bound})
        best = min(best, bound)
    if np.isinf(best):
        diag["note"] = "no candidate reached a positive sieve minimum"
    return best, diag
