"""Total variation functionals, perimeter measures, coarea, and Gauss-Green checks.

Three routes to the total variation are computed and bracketed against each
other: the variational supremum over normalized cylinder fields (a lower
bound), the relaxation over the artifact's smoothing class (an upper bound up
to the reported smoothing deficiency), and the small-time extrapolation of
t -> ||grad T_t F||_1 (the semigroup value, fitted as a + b sqrt(t)).

Perimeter-type quantities reduce per particle-count stratum to surface
integrals over smooth level sheets in the product box, estimated by the
coarea band estimator.  The Gauss-Green orientation uses the inward normal
sigma = grad g / |grad g| of the super-level set, matching the adjoint
divergence convention of the cylinder calculus.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .configuration import Configuration, SetSpec, section_set
from .cylinder import (CylinderFunction, CylinderVectorField, normalize_field,
                       cyl_compose, mul_n, const)
from .geometry import BoxDomain, DomainError
from .hausdorff import CriticalLevelError, surface_functional_auto
from .heat import LiftedHeatOperator, lifted_gradient_norm
from .montecarlo import poisson_k_cutoff, poisson_pmf, poisson_stratified
from .productspace import ProductCylinder, ProductField, product_form, stratum_indicator
from .rng import stream_rng

__all__ = [
    "TVBracket",
    "PerimeterMeasure",
    "SemigroupTV",
    "VariationalLower",
    "tv_semigroup",
    "tv_variational",
    "tv_relaxation",
    "tv_bracket",
    "perimeter_measure",
    "gauss_green_residual",
    "coarea_check",
    "sobolev_consistency",
    "GaussGreenReport",
    "CoareaReport",
]


# ---------------------------------------------------------------------------
# expectations of indicator-times-smooth integrands
#
# Tensor quadrature cannot see a jump, so level-set indicators are split as
# chi = smoothstep + (chi - smoothstep): the smooth part is quadratured, the
# remainder is supported on a thin band around the sheet and is estimated by
# Monte Carlo there.  The tanh tail beyond the sampled band is charged to the
# error bar.


def _smoothstep_vals(vals: np.ndarray, level: float, delta: float, strict: bool) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh((vals - level) / delta))


_LEVELSET_ORDERS = {1: 192, 2: 96, 3: 48}


def levelset_expectation(E: SetSpec, h, window: BoxDomain, *, delta: float = 0.06,
                         band_halfwidth: float = 8.0, quad_k: int = 3,
                         quad_orders: dict[int, int] | None = None,
                         n_band: int = 60_000, mc_n: int = 20_000,
                         K_max: int | None = None, seed: int = 0,
                         sup_bound: float | None = None) -> tuple[float, float]:
    """E_pi[ chi_E * h ] for a level-set spec E and vectorized integrand h.

    ``h(k, X)`` maps ordered tuples (m, k, n) to values (m,).  Returns
    (value, error); the error combines band Monte Carlo noise, a refinement
    estimate of the smooth-part quadrature error, per-stratum Monte Carlo
    beyond the grid strata, the analytic smooth-step tail, and the Poisson
    count truncation.
    """
    if E.variant != "level_set":
        raise DomainError("levelset_expectation needs a level-set spec")
    pf = product_form(E.function)
    lam = window.volume
    if K_max is None:
        K_max = poisson_k_cutoff(lam)
    from .montecarlo import stratum_grid_points
    orders = dict(_LEVELSET_ORDERS) if window.dim == 1 else {1: 48, 2: 16}
    if quad_orders:
        orders.update(quad_orders)
    total = 0.0
    err_sq = 0.0
    # vacuum stratum
    empty = Configuration(window=window, points=np.zeros((0, window.dim)))
    if E.contains(empty):
        total += poisson_pmf(0, lam) * float(np.asarray(h(0, np.zeros((1, 0, window.dim))))[0])
    width = band_halfwidth * delta
    for k in range(1, K_max + 1):
        pk = poisson_pmf(k, lam)
        if pk == 0.0:
            continue
        if E.count_equals is not None and k != E.count_equals:
            continue
        if k <= quad_k and k in orders:
            def smooth_part(order):
                pts, w = stratum_grid_points(window, k, order)
                gvals = pf.value(pts)
                smooth = _smoothstep_vals(gvals, E.level, delta, E.strict)
                hv = np.asarray(h(k, pts))
                return float(np.sum(w * smooth * hv)) / lam**k, hv

            v_hi, hv = smooth_part(orders[k])
            v_lo, _ = smooth_part(max(8, int(0.7 * orders[k])))
            total += pk * v_hi
            err_sq += (pk * abs(v_hi - v_lo)) ** 2
            # band correction chi - smoothstep by MC
            rng = stream_rng(seed, 500 + k)
            X = rng.uniform(np.tile(window.lower, k), np.tile(window.upper, k),
                            size=(n_band, k * window.dim)).reshape(n_band, k, window.dim)
            gv = pf.value(X)
            inband = np.abs(gv - E.level) <= width
            corr = np.zeros(n_band)
            if np.any(inband):
                chi = (gv[inband] > E.level) if E.strict else (gv[inband] >= E.level)
                step = _smoothstep_vals(gv[inband], E.level, delta, E.strict)
                corr[inband] = (chi.astype(float) - step) * np.asarray(h(k, X[inband]))
            mean = float(np.sum(corr) / n_band)
            var = float(np.sum((corr - mean) ** 2) / max(n_band - 1, 1))
            total += pk * mean
            err_sq += (pk ** 2) * var / n_band
            # tanh tail beyond the sampled band
            tailstep = 0.5 * (1.0 - np.tanh(band_halfwidth))
            hb = sup_bound if sup_bound is not None else float(np.max(np.abs(hv)) + 1e-300)
            err_sq += (pk * tailstep * hb) ** 2
        else:
            rng = stream_rng(seed, 500 + k)
            X = rng.uniform(np.tile(window.lower, k), np.tile(window.upper, k),
                            size=(mc_n, k * window.dim)).reshape(mc_n, k, window.dim)
            chi = stratum_indicator(E, k, X, window)
            vals = chi * np.asarray(h(k, X))
            mean = float(np.sum(vals) / mc_n)
            var = float(np.sum((vals - mean) ** 2) / max(mc_n - 1, 1))
            total += pk * mean
            err_sq += (pk ** 2) * var / mc_n
    if sup_bound is not None:
        from scipy import stats
        err_sq += (float(stats.poisson.sf(K_max, lam)) * sup_bound) ** 2
    return total, float(np.sqrt(err_sq))


def _divergence_evaluator(V: CylinderVectorField):
    """Vectorized adjoint divergence of V on ordered tuples: (k, X) -> (m,)."""
    parts = []
    for c, v in V.terms:
        pc = c if isinstance(c, (int, float)) else ProductCylinder(c)
        parts.append((pc, v))

    def div(k: int, X: np.ndarray) -> np.ndarray:
        m = X.shape[0]
        if k == 0:
            return np.zeros(m)
        out = np.zeros(m)
        for pc, v in parts:
            divsum = np.sum(v.divergence(X), axis=-1)            # (m,)
            if isinstance(pc, (int, float)):
                out += float(pc) * (-divsum)
            else:
                cval = pc.value(X)
                cgrad = pc.grad(X)                                # (m, k, n)
                out += cval * (-divsum) - np.sum(cgrad * v.value(X), axis=(-2, -1))
        return out

    return div


# ---------------------------------------------------------------------------
# semigroup total variation with small-time extrapolation


@dataclass(frozen=True)
class SemigroupTV:
    intercept: float
    slope: float
    fit_residual: float
    t_values: tuple[float, ...]
    norms: tuple[float, ...]
    norm_errs: tuple[float, ...]
    value: float = 0.0
    error: float = 0.0


def tv_semigroup(F, op: LiftedHeatOperator, t_schedule) -> SemigroupTV:
    """Small-time limit of ||grad T_t F||_1 from an a + b sqrt(t) fit.

    The norm is nonincreasing in t and the limit is its supremum, so the
    smallest-schedule norm is a lower estimate while the fitted chord
    intercept is an upper one (the norm is concave in sqrt(t) on the
    schedules used here); the reported value is their midpoint with the half
    gap charged to the error.  A norm increasing in t beyond tolerance
    signals an implementation bug and raises.
    """
    ts = sorted(float(t) for t in np.atleast_1d(t_schedule))
    if len(ts) < 4:
        raise DomainError("schedule must contain at least 4 times")
    if ts[0] <= 0 or ts[-1] > 0.1:
        raise DomainError("schedule must lie in (0, 0.1]")
    norms, errs = [], []
    for t in ts:
        v, e = lifted_gradient_norm(F, t, op, p=1.0)
        norms.append(v)
        errs.append(e)
    for i in range(1, len(ts)):
        tol = errs[i] + errs[i - 1] + 1e-9 * (1.0 + abs(norms[i - 1]))
        if norms[i] > norms[i - 1] + tol:
            raise RuntimeError("||grad T_t F||_1 increased with t beyond tolerance; "
                               "the one-parameter monotonicity is violated")
    A = np.stack([np.ones(len(ts)), np.sqrt(ts)], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.array(norms), rcond=None)
    fitted = A @ coef
    resid = float(np.max(np.abs(fitted - norms)))
    upper = max(float(coef[0]), norms[0])
    lower = norms[0]
    value = 0.5 * (upper + lower)
    error = 0.5 * (upper - lower) + resid + max(errs)
    return SemigroupTV(intercept=float(coef[0]), slope=float(coef[1]),
                       fit_residual=resid, t_values=tuple(ts),
                       norms=tuple(norms), norm_errs=tuple(errs),
                       value=value, error=error)


# ---------------------------------------------------------------------------
# variational lower bound


@dataclass(frozen=True)
class VariationalLower:
    value: float
    error: float
    theta: tuple[float, ...]
    field: CylinderVectorField

    @property
    def lower_bound(self) -> float:
        return self.value - 3.0 * self.error


class _VariationalObjective:
    """Fast evaluator of theta -> E_pi[ F * div*( V_theta / (1 + |V_theta|^2/4) ) ].

    The basis data (coefficient values/gradients, field values/derivatives at
    the particles of every quadrature tuple and band sample) do not depend on
    theta, so they are assembled once and every objective evaluation is plain
    array algebra.  One-dimensional windows only.
    """

    def __init__(self, F, family: list, window: BoxDomain, *, seed: int,
                 n_band: int, mc_n: int, delta: float = 0.06,
                 quad_orders: dict[int, int] | None = None, quad_k: int = 3):
        if window.dim != 1:
            raise DomainError("the fast variational objective is 1-d")
        from .montecarlo import stratum_grid_points
        self.family = family
        self.window = window
        lam = window.volume
        self.batches = []  # (prefactor vector, F-weight vector, basis tensors)
        orders = dict(_LEVELSET_ORDERS if isinstance(F, SetSpec) else
                      {1: 64, 2: 48, 3: 28})
        if quad_orders:
            orders.update(quad_orders)
        K_max = poisson_k_cutoff(lam)
        is_set = isinstance(F, SetSpec)
        pf = product_form(F.function) if is_set else product_form(F)
        width = 8.0 * delta
        for k in range(1, K_max + 1):
            pk = poisson_pmf(k, lam)
            if pk == 0.0:
                continue
            if is_set and F.count_equals is not None and k != F.count_equals:
                continue
            if k <= quad_k and k in orders:
                pts, w = stratum_grid_points(window, k, orders[k])
                if is_set:
                    gv = pf.value(pts)
                    smooth = _smoothstep_vals(gv, F.level, delta, F.strict)
                    self.batches.append(("quad", 0, pk * w / lam**k, smooth,
                                         self._basis(pts)))
                    # band correction samples
                    rng = stream_rng(seed, 700 + k)
                    X = rng.uniform(window.lower[0], window.upper[0],
                                    size=(n_band, k, 1))
                    gb = pf.value(X)
                    inband = np.abs(gb - F.level) <= width
                    Xb = X[inband]
                    if Xb.shape[0]:
                        chi = (gb[inband] > F.level) if F.strict else (gb[inband] >= F.level)
                        corr = chi.astype(float) - _smoothstep_vals(gb[inband], F.level,
                                                                    delta, F.strict)
                        pref = np.full(Xb.shape[0], pk / n_band)
                        self.batches.append(("mc", n_band, pref, corr, self._basis(Xb)))
                else:
                    fv = pf.value(pts)
                    self.batches.append(("quad", 0, pk * w / lam**k, fv,
                                         self._basis(pts)))
            else:
                rng = stream_rng(seed, 700 + k)
                X = rng.uniform(window.lower[0], window.upper[0], size=(mc_n, k, 1))
                if is_set:
                    weight = stratum_indicator(F, k, X, window)
                else:
                    weight = pf.value(X)
                pref = np.full(mc_n, pk / mc_n)
                self.batches.append(("mc", mc_n, pref, weight, self._basis(X)))

    def _basis(self, X: np.ndarray):
        m, k, _ = X.shape
        A = len(self.family)
        C = np.ones((A, m))
        Cg = np.zeros((A, m, k))
        Vv = np.zeros((A, m, k))
        Vd = np.zeros((A, m, k))
        Dv = np.zeros((A, m))
        for a, (c, v) in enumerate(self.family):
            comp = v.components[0]
            Vv[a] = comp.value(X)
            Vd[a] = comp.gradient(X)[..., 0]
            Dv[a] = np.sum(Vd[a], axis=-1)
            if not isinstance(c, (int, float)):
                pc = ProductCylinder(c)
                C[a] = pc.value(X)
                Cg[a] = pc.grad(X)[..., 0]
            else:
                C[a] = float(c)
        return C, Cg, Vv, Vd, Dv

    def _batch_div(self, th, basis):
        C, Cg, Vv, Vd, Dv = basis
        w_a = th[:, None] * C                                   # (A, m)
        Vt = np.einsum("am,amk->mk", w_a, Vv)                   # V_theta at particles
        dVt = np.einsum("am,amk->mk", w_a, Vd)                  # d/dx of the field part
        Q = np.sum(Vt * Vt, axis=-1)                            # (m,)
        D = 1.0 / (1.0 + 0.25 * Q)
        # lifted gradient of Q: the field part moves with the particle and the
        # coefficients feel the particle through their own gradients
        inner_av = np.einsum("mk,amk->am", Vt, Vv)              # <V_theta, v_a>_T
        gradQ = 2.0 * Vt * dVt \
            + 2.0 * np.einsum("am,amk->mk", th[:, None] * inner_av, Cg)
        gradD = (-0.25) * (D * D)[:, None] * gradQ
        # div* W = sum_a theta_a [ -<grad(c_a D), v_a> - c_a D sum_j v_a'(x_j) ]
        div = np.zeros(Q.shape)
        for a in range(len(self.family)):
            grad_caD = D[:, None] * Cg[a] + C[a][:, None] * gradD
            div += th[a] * (-np.sum(grad_caD * Vv[a], axis=-1) - C[a] * D * Dv[a])
        return div

    def value(self, theta: np.ndarray) -> float:
        th = np.asarray(theta, dtype=float)
        total = 0.0
        for _, _, pref, weight, basis in self.batches:
            total += float(np.sum(pref * weight * self._batch_div(th, basis)))
        return total

    def value_with_error(self, theta: np.ndarray) -> tuple[float, float]:
        th = np.asarray(theta, dtype=float)
        total = 0.0
        err_sq = 0.0
        for kind, n, pref, weight, basis in self.batches:
            contrib = pref * weight * self._batch_div(th, basis)
            total += float(np.sum(contrib))
            if kind == "mc":
                # zero-padded variance over the full sample count
                v = contrib * n
                s1 = float(np.sum(v))
                s2 = float(np.sum(v * v))
                var = max(s2 / n - (s1 / n) ** 2, 0.0)
                err_sq += var / n
        return total, float(np.sqrt(err_sq))


def _build_normalized(family: list, theta) -> CylinderVectorField:
    terms = []
    for a, (c, v) in enumerate(family):
        if theta[a] == 0.0:
            continue
        if isinstance(c, (int, float)):
            terms.append((float(c) * theta[a], v))
        else:
            terms.append((cyl_compose(lambda r, s=theta[a]: mul_n(const(s), r), c), v))
    if not terms:
        terms = [(0.0, family[0][1])]
    return normalize_field(CylinderVectorField(tuple(terms)), 0.25)


def tv_variational(F, family: list, window: BoxDomain, *, iterations: int = 2,
                   theta_grid=None, seed: int = 0,
                   eval_seed: int | None = None) -> VariationalLower:
    """Coordinate-ascent maximum of E_pi[F div* V] over normalized fields.

    ``family`` lists basis terms (coefficient, SmoothVectorField); the search
    runs over linear combinations, normalized through V/(1 + |V|^2/4) so the
    tangent norm never exceeds one and the estimate is a genuine lower bound
    for the variational total variation (minus the reported error).  The
    search uses a coarse precomputed objective; the optimum is re-evaluated
    through the independent symbolic route with a fresh seed, and that value
    (with its error) is what is reported.
    """
    if not family:
        raise DomainError("need a nonempty field family")
    if theta_grid is None:
        theta_grid = (-4.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0)
    obj = _VariationalObjective(F, family, window, seed=seed, n_band=8_000, mc_n=4_000)
    theta = np.zeros(len(family))
    for sweep in range(iterations):
        for a in range(len(family)):
            grid = theta_grid if sweep == 0 else tuple(
                theta[a] + d for d in (-0.6, -0.3, -0.15, 0.0, 0.15, 0.3, 0.6))
            vals = []
            for g in grid:
                trial = theta.copy()
                trial[a] = g
                vals.append(obj.value(trial))
            theta[a] = grid[int(np.argmax(vals))]
    W = _build_normalized(family, theta)
    # final value re-evaluated at scale with an independent seed
    final_seed = eval_seed if eval_seed is not None else seed + 7919
    accurate = _VariationalObjective(F, family, window, seed=final_seed,
                                     n_band=60_000, mc_n=20_000)
    value, err = accurate.value_with_error(theta)
    return VariationalLower(value=value, error=err, theta=tuple(theta), field=W)


# ---------------------------------------------------------------------------
# relaxation upper bound


@dataclass(frozen=True)
class RelaxationUpper:
    value: float
    error: float
    eps_values: tuple[float, ...]
    norms: tuple[float, ...]
    smoothing_gap: float

    @property
    def upper_bound(self) -> float:
        return self.value + self.error


def tv_relaxation(F, op: LiftedHeatOperator, eps_schedule) -> RelaxationUpper:
    """Relaxation upper bound over the artifact's smoothing class.

    For cylinder F the class contains F itself, so the bound is the exact
    gradient norm.  For indicators it is the smallest ||grad T_eps F||_1 over
    the schedule; the remaining smoothing deficiency is estimated from the
    sqrt(eps) trend of the schedule and reported in ``smoothing_gap`` (the
    bracketing tolerance absorbs it).
    """
    eps = sorted(float(e) for e in np.atleast_1d(eps_schedule))
    norms = []
    errs = []
    for e in eps:
        v, er = lifted_gradient_norm(F, e, op, p=1.0)
        norms.append(v)
        errs.append(er)
    gap = 0.0
    if isinstance(F, (CylinderFunction,)):
        direct, derr = lifted_gradient_norm(F, None, op, p=1.0)
        value, err = direct, derr
    else:
        value, err = norms[0], errs[0]
        if len(eps) >= 2:
            # the norms increase as eps decreases; extrapolate the deficiency
            s = (norms[0] - norms[1]) / (np.sqrt(eps[1]) - np.sqrt(eps[0]) + 1e-300)
            gap = max(0.0, float(s) * float(np.sqrt(eps[0])))
    return RelaxationUpper(value=value, error=err, eps_values=tuple(eps),
                           norms=tuple(norms), smoothing_gap=gap)


# ---------------------------------------------------------------------------
# the three-route bracket


@dataclass(frozen=True)
class TVBracket:
    variational_lower: float
    lower_err: float
    relaxation_upper: float
    upper_err: float
    semigroup_value: float
    semigroup_err: float
    smoothing_gap: float

    def consistent(self, k_sigma: float = 3.0) -> bool:
        lo = self.variational_lower - k_sigma * self.lower_err
        hi = self.relaxation_upper + k_sigma * self.upper_err + self.smoothing_gap
        mid_lo = self.semigroup_value - self.semigroup_err - k_sigma * self.lower_err
        mid_hi = self.semigroup_value + self.semigroup_err + k_sigma * self.upper_err
        return lo <= hi + 1e-12 and lo <= mid_hi and mid_lo <= hi

    def relative_width(self) -> float:
        mid = max(abs(self.semigroup_value), 1e-300)
        return (self.relaxation_upper + self.smoothing_gap - self.variational_lower) / mid


def tv_bracket(F, op: LiftedHeatOperator, family: list, t_schedule, eps_schedule,
               *, seed: int = 0) -> TVBracket:
    sg = tv_semigroup(F, op, t_schedule)
    var = tv_variational(F, family, op.window, seed=seed)
    rel = tv_relaxation(F, op, eps_schedule)
    return TVBracket(variational_lower=var.value, lower_err=var.error,
                     relaxation_upper=rel.value, upper_err=rel.error,
                     semigroup_value=sg.value, semigroup_err=sg.error,
                     smoothing_gap=rel.smoothing_gap)


# ---------------------------------------------------------------------------
# perimeter measures and the surface battery


def _sheet_strata(E: SetSpec, K_max: int):
    if E.variant != "level_set":
        raise DomainError("perimeter machinery needs level-set specs")
    if E.count_equals is not None:
        return [E.count_equals]
    return list(range(1, K_max + 1))


def surface_battery(E: SetSpec, window: BoxDomain, weights: dict, *, eps: float,
                    n_samples: int = 60_000, seed: int = 0,
                    K_max: int | None = None) -> dict:
    """Surface integrals over the reduced boundary of E for several densities.

    ``weights`` maps names to callables (X, grad) -> surface density against
    the band estimator (already including the |grad g| factor when the plain
    surface measure is wanted; ``None`` means the measure itself).  Returns
    name -> (value, err, per_k).
    """
    from .hausdorff import surface_quad_orders
    g = product_form(E.function)
    level = float(E.level)
    lam = window.volume
    if K_max is None:
        K_max = poisson_k_cutoff(lam)
    squad = surface_quad_orders(window.dim)
    out = {}
    for name, weight in weights.items():
        total, err_sq = 0.0, 0.0
        per_k = {}
        for k in _sheet_strata(E, K_max):
            val, err, _ = surface_functional_auto(g, level, weight, window, k, eps=eps,
                                                  n_samples=n_samples, seed=seed,
                                                  stream=900 + 13 * k,
                                                  quad_order=squad.get(k))
            w = float(np.exp(-lam - gammaln(k + 1)))
            per_k[k] = w * val
            total += w * val
            err_sq += (w * err) ** 2
        out[name] = (total, float(np.sqrt(err_sq)), per_k)
    return out


@dataclass(frozen=True)
class PerimeterMeasure:
    spec: SetSpec
    window: BoxDomain
    total: float
    total_err: float
    per_k: dict[int, float]
    battery: dict[str, tuple[float, float]]
    r_values: tuple[tuple[float, float, float], ...]  # (r, total, err)
    eps: float

    def monotone_in_r(self, k_sigma: float = 3.0) -> bool:
        vals = self.r_values
        return all(vals[i + 1][1] >= vals[i][1] - k_sigma * (vals[i][2] + vals[i + 1][2])
                   for i in range(len(vals) - 1))


def perimeter_measure(E: SetSpec, window: BoxDomain, *, r_boxes=None,
                      G_battery: dict | None = None, eps: float | None = None,
                      n_samples: int = 60_000, n_eta: int = 48, seed: int = 0,
                      K_max: int | None = None) -> PerimeterMeasure:
    """Perimeter measure of a level-set spec via the per-stratum sheet oracle.

    The full-window measure weights each stratum sheet by e^{-vol}/k!.  When
    ``r_boxes`` are given, the localized measures are computed by averaging
    the sectioned sheets over outside patterns; they increase to the
    full-window value.  ``G_battery`` maps names to nonnegative cylinder
    functions integrated against the measure.
    """
    if eps is None:
        eps = 1e-2 * float(np.max(window.sides))
    weights = {"__total__": None}
    G_battery = G_battery or {}
    for name, G in G_battery.items():
        pg = product_form(G)
        weights[name] = (lambda X, grad, pg=pg:
                         pg.value(X) * np.sqrt(np.sum(grad * grad, axis=(-2, -1))))
    res = surface_battery(E, window, weights, eps=eps, n_samples=n_samples,
                          seed=seed, K_max=K_max)
    total, total_err, per_k = res["__total__"]
    battery = {name: (res[name][0], res[name][1]) for name in G_battery}
    r_values = []
    if r_boxes:
        for i, box in enumerate(r_boxes):
            val, err = _localized_perimeter(E, box, window, eps=eps,
                                            n_samples=max(8_000, n_samples // 8),
                                            n_eta=n_eta, seed=seed)
            r_values.append((float(np.max(box.sides)), val, err))
    return PerimeterMeasure(spec=E, window=window, total=total, total_err=total_err,
                            per_k=per_k, battery=battery, r_values=tuple(r_values),
                            eps=eps)


def _localized_perimeter(E: SetSpec, inner: BoxDomain, window: BoxDomain, *,
                         eps: float, n_samples: int, n_eta: int,
                         seed: int) -> tuple[float, float]:
    """Localized perimeter: average over outside patterns of the sectioned
    sheet measure on the inner box."""
    if inner.contains_box(E.locality or inner):
        empty = Configuration(window=window, points=np.zeros((0, window.dim)))
        sec = section_set(E, empty, inner)
        res = surface_battery(sec, inner, {"__total__": None}, eps=eps,
                              n_samples=n_samples, seed=seed)
        return res["__total__"][0], res["__total__"][1]
    shell = E.locality or window
    rng = stream_rng(seed, 31)
    vals = np.empty(n_eta)
    errs = np.empty(n_eta)
    for i in range(n_eta):
        kk = rng.poisson(shell.volume)
        pts = shell.sample_uniform(rng, kk)
        keep = ~inner.contains(pts) if kk else np.zeros(0, dtype=bool)
        eta = Configuration(window=shell, points=pts[keep] if kk else pts)
        sec = section_set(E, eta, inner)
        if sec.variant != "level_set":
            vals[i], errs[i] = 0.0, 0.0
            continue
        res = surface_battery(sec, inner, {"__total__": None}, eps=eps,
                              n_samples=max(2_000, n_samples // 8), seed=seed + i)
        vals[i], errs[i] = res["__total__"][0], res["__total__"][1]
    mean = float(np.sum(vals) / n_eta)
    var = float(np.sum((vals - mean) ** 2) / max(n_eta - 1, 1))
    return mean, float(np.sqrt(var / n_eta + np.sum(errs ** 2) / n_eta ** 2))


# ---------------------------------------------------------------------------
# Gauss-Green residual


@dataclass(frozen=True)
class GaussGreenReport:
    lhs: float
    lhs_err: float
    rhs: float
    rhs_err: float

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def combined_sigma(self) -> float:
        return float(np.sqrt(self.lhs_err ** 2 + self.rhs_err ** 2))

    def passed(self, k_sigma: float = 3.0, atol: float = 1e-4) -> bool:
        return self.residual <= k_sigma * self.combined_sigma + atol


def gauss_green_residual(E: SetSpec, V: CylinderVectorField, window: BoxDomain, *,
                         eps: float | None = None, n_samples: int = 60_000,
                         seed: int = 0, K_max: int | None = None) -> GaussGreenReport:
    """Both sides of int_E div* V dpi = int <V, sigma> d||E||.

    The left side integrates the adjoint divergence over the super-level set
    (smooth-step split plus band correction); the right side is the sheet
    integral of <V, grad g>/|grad g| with an independent seed.  With the
    adjoint convention the normal is sigma = grad g / |grad g|.
    """
    if eps is None:
        eps = 1e-2 * float(np.max(window.sides))
    div = _divergence_evaluator(V)
    lhs, lhs_err = levelset_expectation(E, div, window, seed=seed, K_max=K_max)
    pv = ProductField(V)

    def weight(X, grad):
        return np.sum(pv.value(X) * grad, axis=(-2, -1))

    res = surface_battery(E, window, {"gg": weight}, eps=eps, n_samples=n_samples,
                          seed=seed + 4099, K_max=K_max)
    rhs, rhs_err, _ = res["gg"]
    return GaussGreenReport(lhs=lhs, lhs_err=lhs_err, rhs=rhs, rhs_err=rhs_err)


# ---------------------------------------------------------------------------
# coarea and Sobolev consistency


@dataclass(frozen=True)
class CoareaReport:
    lhs: float
    lhs_err: float
    rhs: float
    rhs_err: float
    per_t: tuple[tuple[float, float], ...]
    gap_fraction: float

    @property
    def deviation(self) -> float:
        scale = max(abs(self.rhs), 1e-300)
        return abs(self.lhs - self.rhs) / scale


def coarea_check(F: CylinderFunction, G, t_grid, window: BoxDomain, *,
                 eps: float | None = None, n_samples: int = 40_000,
                 seed: int = 0, K_max: int | None = None) -> CoareaReport:
    """Trapezoid in t of int G d||{F > t}|| against E_pi[ G |grad F| ].

    Critical levels detected by the sheet oracle are skipped and reported in
    ``gap_fraction`` (fraction of the t-range lost to exclusions).
    """
    if eps is None:
        eps = 1e-2 * float(np.max(window.sides))
    ts = sorted(float(t) for t in np.atleast_1d(t_grid))
    pg = product_form(G) if not isinstance(G, (int, float)) else None

    def weight(X, grad):
        gn = np.sqrt(np.sum(grad * grad, axis=(-2, -1)))
        return gn if pg is None else pg.value(X) * gn

    per_t = []
    gaps = 0
    err_sq_acc = []
    for i, t in enumerate(ts):
        E_t = SetSpec.level_set(F, t)
        try:
            res = surface_battery(E_t, window, {"w": weight}, eps=eps,
                                  n_samples=n_samples, seed=seed + 17 * i, K_max=K_max)
            val, er, _ = res["w"]
        except CriticalLevelError:
            gaps += 1
            val, er = np.nan, np.nan
        per_t.append((t, val))
        err_sq_acc.append(er)
    # trapezoid over the valid values
    tv = [(t, v, e) for (t, v), e in zip(per_t, err_sq_acc) if np.isfinite(v)]
    lhs = 0.0
    lhs_err_sq = 0.0
    for (t0, v0, e0), (t1, v1, e1) in zip(tv, tv[1:]):
        lhs += 0.5 * (v0 + v1) * (t1 - t0)
        lhs_err_sq += (0.5 * (t1 - t0)) ** 2 * (e0 ** 2 + e1 ** 2)
    pf = ProductCylinder(F)

    def Hk(k, X):
        gn = pf.grad_norm(X)
        return gn if pg is None else pg.value(X) * gn

    rhs, rhs_err = poisson_stratified(Hk, window, seed=seed + 7, mc_n=n_samples)
    return CoareaReport(lhs=lhs, lhs_err=float(np.sqrt(lhs_err_sq)), rhs=rhs,
                        rhs_err=rhs_err, per_t=tuple(per_t),
                        gap_fraction=gaps / max(len(ts), 1))


def sobolev_consistency(F: CylinderFunction, G_battery: dict, t_grid,
                        window: BoxDomain, *, family: list | None = None,
                        n_samples: int = 40_000, seed: int = 0) -> dict:
    """Density check |DF| = |grad F| pi for smooth cylinder F.

    For each battery member G, the coarea route to int G d|DF| is compared to
    the direct E_pi[G |grad F|]; when a field family is supplied, the
    optimized variational field direction is compared to grad F / |grad F| on
    samples where the gradient is not degenerate.
    """
    out = {"densities": {}, "alignment": None}
    for name, G in G_battery.items():
        rep = coarea_check(F, G, t_grid, window, n_samples=n_samples, seed=seed)
        out["densities"][name] = {"coarea": rep.lhs, "direct": rep.rhs,
                                  "deviation": rep.deviation}
    if family:
        var = tv_variational(F, family, window, seed=seed)
        W = var.field
        rng = stream_rng(seed, 77)
        cosines = []
        from .configuration import _draw
        for _ in range(400):
            pts = _draw(window, rng)
            gamma = Configuration(window=window, points=pts)
            g = F.gradient(gamma)
            gn = float(np.sqrt(np.sum(g * g)))
            if gn <= 0.1:
                continue
            wv = W.at_particles(gamma)
            wn = float(np.sqrt(np.sum(wv * wv)))
            if wn < 1e-12:
                continue
            cosines.append(float(np.sum(g * wv)) / (gn * wn))
        out["alignment"] = float(np.mean(cosines)) if cosines else None
        out["variational"] = var
    return out
