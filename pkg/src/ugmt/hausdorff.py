"""Codimension-m Poisson surface measures via level-set and covering estimators.

The k-particle stratum over a box is a quotient of the product box, so the
codimension-m content of a set section splits as a sum over particle counts:
    total = e^{-vol} * sum_k per_k,
    per_k = (1/k!) * H^{nk-m}( preimage of the k-section in the product box ).
For m = 0 this reduces to the Poisson probability of the set.  For m = 1 the
sections must be smooth level sets; their surface content is estimated by the
coarea band estimator (1/2 eps) * integral of |grad g| over {|g - c| < eps}.
All spherical Hausdorff values carry the dimensional constant c(d) =
(unit-ball volume)/2^d, so that the full-dimensional measure is Lebesgue.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .configuration import Configuration, MCEstimate, SetSpec, section_set
from .geometry import BoxDomain, DomainError
from .montecarlo import poisson_k_cutoff, poisson_pmf, stratum_grid_points
from .productspace import product_form, stratum_indicator
from .rng import stream_rng

__all__ = [
    "HausdorffEstimate",
    "CodimMeasureResult",
    "RhoLimitResult",
    "dimensional_constant",
    "hausdorff_level_set",
    "hausdorff_covering_upper",
    "rho_m_on_box",
    "rho_m_localized",
    "rho_m_limit",
    "scaled_box",
    "CriticalLevelError",
]

MIN_GRADIENT = 1e-3


class CriticalLevelError(RuntimeError):
    """The defining function has near-vanishing gradient on the level band."""


def surface_quad_orders(dim: int) -> dict[int, int]:
    """Per-count tensor orders for the deterministic sheet quadrature."""
    if dim == 1:
        return {1: 192, 2: 96}
    return {1: 32}


def dimensional_constant(d: int) -> float:
    """c(d) = alpha(d) / 2^d with alpha(d) the unit-ball volume; c(0) = 1."""
    if d < 0:
        raise ValueError("dimension must be nonnegative")
    if d == 0:
        return 1.0
    log_alpha = (d / 2.0) * np.log(np.pi) - gammaln(d / 2.0 + 1.0)
    return float(np.exp(log_alpha - d * np.log(2.0)))


@dataclass(frozen=True)
class HausdorffEstimate:
    value: float
    method: str  # level_set_oracle | covering_upper_bound | counting
    error_bar: float = 0.0
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.value < -1e-12:
            raise ValueError("Hausdorff estimates are nonnegative")


@dataclass(frozen=True)
class CodimMeasureResult:
    m: int
    per_k: dict[int, float]
    per_k_err: dict[int, float]
    k_truncation: int
    window: BoxDomain
    flags: tuple[str, ...] = ()

    @property
    def total(self) -> float:
        w = float(np.exp(-self.window.volume))
        return w * float(sum(self.per_k.values()))

    @property
    def total_err(self) -> float:
        w = float(np.exp(-self.window.volume))
        return w * float(np.sqrt(sum(e * e for e in self.per_k_err.values())))

    def to_json(self) -> dict:
        return {"m": self.m, "per_k": {str(k): v for k, v in self.per_k.items()},
                "per_k_err": {str(k): v for k, v in self.per_k_err.items()},
                "total": self.total, "total_err": self.total_err,
                "k_truncation": self.k_truncation,
                "window": self.window.descriptor(), "flags": list(self.flags)}


# ---------------------------------------------------------------------------
# level-set band estimator


def band_integral_mc(h, window: BoxDomain, k: int, n_samples: int, seed: int,
                     stream: int) -> tuple[float, float]:
    """MC estimate of the integral of h over window^k (h vectorized on tuples)."""
    rng = stream_rng(seed, stream)
    X = rng.uniform(np.tile(window.lower, k), np.tile(window.upper, k),
                    size=(n_samples, k * window.dim)).reshape(n_samples, k, window.dim)
    vals = np.asarray(h(X))
    volk = window.volume ** k
    mean = float(np.sum(vals) / n_samples)
    var = float(np.sum((vals - mean) ** 2) / max(n_samples - 1, 1))
    return volk * mean, volk * float(np.sqrt(var / n_samples))


def band_integral_quad(h, window: BoxDomain, k: int, order: int) -> float:
    pts, w = stratum_grid_points(window, k, order)
    return float(np.sum(w * np.asarray(h(pts))))


def surface_functional(g, level: float, weight, window: BoxDomain, k: int, *,
                       eps: float, n_samples: int = 20_000, seed: int = 0,
                       stream: int = 0, quad_order: int | None = None,
                       check_gradient: bool = True) -> tuple[float, float, float]:
    """Band estimate of int_{ {g = level} cap window^k } weight dH^{nk-1}.

    ``g`` is a product-space function with value/grad; ``weight(X, grad)``
    returns the surface density against H^{nk-1} with the |grad g| factor
    already multiplied in; ``weight=None`` measures the surface itself.

    Two modes share the coarea identity: the hard band chi/(2 eps) with Monte
    Carlo (any k), and, when ``quad_order`` is given, a smooth Gaussian level
    profile with tensor quadrature (deterministic; the error bar is the move
    under halving the profile width, a curvature-bias proxy).
    Returns (value, err, min |grad g| seen near the sheet).
    """
    state = {"min_grad": np.inf, "max_grad": 0.0}

    def density(X, profile, cut, core):
        vals = g.value(X)
        mask = np.abs(vals - level) < cut
        out = np.zeros(X.shape[0])
        if np.any(mask):
            grad = g.grad(X[mask])
            gn = np.sqrt(np.sum(grad * grad, axis=(-2, -1)))
            incore = np.abs(vals[mask] - level) < core
            if np.any(incore):
                state["min_grad"] = min(state["min_grad"], float(np.min(gn[incore])))
                state["max_grad"] = max(state["max_grad"], float(np.max(gn[incore])))
            w = gn if weight is None else weight(X[mask], grad)
            out[mask] = w * profile(vals[mask])
        return out

    if quad_order is not None:
        # smooth Gaussian level profile, wide enough in base-space units for
        # the grid to resolve; truncated at five standard deviations
        spacing = float(np.max(window.sides)) / quad_order

        def run(sig):
            def profile(vals):
                z = (vals - level) / sig
                return np.exp(-0.5 * z * z) / (sig * np.sqrt(2.0 * np.pi))

            return band_integral_quad(lambda X: density(X, profile, 5.0 * sig, 2.0 * sig),
                                      window, k, quad_order)

        sig0 = max(eps, 4.0 * spacing)
        v1 = run(sig0)
        gscale = state["max_grad"]
        sig = max(sig0, 4.0 * spacing * min(gscale, 3.0))
        if sig > 1.01 * sig0:
            v1 = run(sig)
        sigs = np.array([sig, sig * np.sqrt(2.0), sig * 2.0])
        vals = np.array([v1, run(sigs[1]), run(sigs[2])])
        # Richardson in the profile width: sheets meeting the product-box
        # boundary bias the smeared estimate linearly in the width, smooth
        # weights quadratically; eliminate both orders and report the gap to
        # the linear extrapolation as the error proxy
        M = np.stack([np.ones(3), sigs, sigs ** 2], axis=1)
        coef = np.linalg.solve(M, vals)
        r_quad = float(coef[0])
        r_lin = float(vals[0] + (vals[0] - vals[1]) / (np.sqrt(2.0) - 1.0))
        val = r_quad
        err = abs(r_quad - r_lin) * 0.5 + 1e-10 * abs(r_quad)
    else:
        def profile(vals):
            return (np.abs(vals - level) < eps) / (2.0 * eps)

        val, err = band_integral_mc(lambda X: density(X, profile, eps, eps), window, k,
                                    n_samples, seed, stream)
    if check_gradient and np.isfinite(state["min_grad"]) and state["min_grad"] < MIN_GRADIENT:
        raise CriticalLevelError(
            f"gradient {state['min_grad']:.2e} below {MIN_GRADIENT} on the level band; "
            "perturb the level")
    return val, err, state["min_grad"]


def surface_functional_auto(g, level: float, weight, window: BoxDomain, k: int, *,
                            eps: float, n_samples: int = 20_000, seed: int = 0,
                            stream: int = 0, quad_order: int | None = None
                            ) -> tuple[float, float, float]:
    """surface_functional preferring the smooth-profile quadrature.

    The wide profile needed on coarse grids can sweep over critical points of
    steep level functions far from the sheet itself; in that case the
    estimate falls back to the narrow hard-band Monte Carlo route, which
    still detects genuine critical levels.
    """
    if quad_order is not None:
        try:
            return surface_functional(g, level, weight, window, k, eps=eps,
                                      n_samples=n_samples, seed=seed, stream=stream,
                                      quad_order=quad_order)
        except CriticalLevelError:
            pass
    return surface_functional(g, level, weight, window, k, eps=eps,
                              n_samples=n_samples, seed=seed, stream=stream,
                              quad_order=None)


def hausdorff_level_set(g, level: float, eps: float, window: BoxDomain, k: int, *,
                        n_samples: int = 200_000, seed: int = 0,
                        max_halvings: int = 4) -> HausdorffEstimate:
    """Consistent estimator of H^{nk-1}({g = level} cap window^k), codim 1.

    ``g`` must expose vectorized value/grad on (m, k, n) tuples, for instance
    a ProductCylinder.  The band width is halved until the estimate moves by
    less than one combined standard error; a curvature-bias flag is raised if
    halving moves it by more than three.
    """
    if eps <= 0:
        raise DomainError("band width must be positive")
    flags: list[str] = []
    prev = None
    est = (0.0, 0.0)
    width = eps
    for i in range(max_halvings + 1):
        val, err, _ = surface_functional(g, level, None, window, k, eps=width,
                                         n_samples=n_samples, seed=seed, stream=40 + i)
        est = (val, err)
        if prev is not None:
            move = abs(val - prev[0])
            comb = np.sqrt(err ** 2 + prev[1] ** 2) + 1e-300
            if move > 3.0 * comb:
                flags.append("curvature_bias")
            if move < comb:
                break
        prev = est
        width *= 0.5
    return HausdorffEstimate(value=est[0], method="level_set_oracle",
                             error_bar=est[1], flags=tuple(flags))


# ---------------------------------------------------------------------------
# greedy covering upper bound


def hausdorff_covering_upper(sampler, m: int, eps: float, ambient_dim: int, *,
                             n_points: int = 100_000) -> HausdorffEstimate:
    """Greedy ball-cover upper bound for the codim-m spherical content.

    ``sampler(n)`` returns up to n points of the target set in the ambient
    product space R^{ambient_dim}.  Balls of diameter eps are centered
    greedily at uncovered sample points; the bound is c(d) * N * eps^d with
    d = ambient_dim - m.  Monotone nonincreasing in eps for dense samples.
    """
    d = ambient_dim - m
    if d < 0:
        raise DomainError("codimension exceeds the ambient dimension")
    pts = np.atleast_2d(np.asarray(sampler(n_points), dtype=float))
    flags: list[str] = []
    if pts.shape[0] == 0:
        return HausdorffEstimate(0.0, "covering_upper_bound", 0.0, ())
    if pts.shape[0] < n_points:
        flags.append("low_confidence_sampler_exhausted")
    alive = np.ones(pts.shape[0], dtype=bool)
    centers = 0
    radius = eps / 2.0
    while np.any(alive):
        p = pts[int(np.argmax(alive))]
        # drift the center toward the centroid of the uncovered cluster so a
        # ball advances a full diameter along rectifiable sets; always keep
        # the seed point covered so the greedy makes progress
        c = p
        for _ in range(8):
            close = alive & (np.sum((pts - c) ** 2, axis=1) <= radius * radius)
            if not np.any(close):
                break
            cand = np.mean(pts[close], axis=0)
            gap = np.linalg.norm(cand - p)
            if gap > radius:
                cand = p + (cand - p) * (radius * (1 - 1e-9) / gap)
            if np.linalg.norm(cand - c) < 1e-12 * (1.0 + eps):
                c = cand
                break
            c = cand
        centers += 1
        alive &= np.sum((pts - c) ** 2, axis=1) > radius * radius
    method = "counting" if d == 0 else "covering_upper_bound"
    value = dimensional_constant(d) * centers * eps**d
    return HausdorffEstimate(value=value, method=method, error_bar=0.0, flags=tuple(flags))


# ---------------------------------------------------------------------------
# codimension-m Poisson measures


def _level_sections(A: SetSpec):
    if A.variant not in ("level_set", "level_sheet"):
        return None
    return product_form(A.function), float(A.level)


def _stratum_fraction_exact(A: SetSpec, k: int, window: BoxDomain) -> float | None:
    """Closed-form uniform fraction of the k-stratum section, when available.

    Count specs admit the exact binomial tail: conditioned on k uniform
    points, the count in the region is Binomial(k, vol(region)/vol(window)).
    """
    if A.variant != "count_at_least":
        return None
    inter = A.region.intersect(window)
    p = (inter.volume / window.volume) if inter is not None else 0.0
    return float(stats.binom.sf(A.threshold - 1, k, p))


def rho_m_on_box(A: SetSpec, m: int, window: BoxDomain, *, K_max: int | None = None,
                 n_samples: int = 20_000, seed: int = 0, quad_k: int = 3,
                 eps: float | None = None) -> CodimMeasureResult:
    """Codimension-m Poisson measure of A on the configuration space over a box.

    m = 0 reduces to the Poisson probability of A (count-stratified).  m = 1
    requires A to be a level-set description; the measured object is the
    defining level sheet {F = level}, i.e. the reduced boundary of the strict
    super-level set.  Other variants fall back to covering upper bounds and
    are flagged.
    """
    if m not in (0, 1):
        raise DomainError("only m in {0, 1} is computed; use covering bounds beyond")
    if K_max is None:
        K_max = poisson_k_cutoff(window.volume)
    per_k: dict[int, float] = {}
    per_k_err: dict[int, float] = {}
    flags: list[str] = []
    vol = window.volume

    if m == 0:
        # vacuum stratum: membership of the empty configuration
        empty = Configuration(window=window, points=np.zeros((0, window.dim)))
        per_k[0] = 1.0 if A.contains(empty) else 0.0
        per_k_err[0] = 0.0
        for k in range(1, K_max + 1):
            frac_exact = _stratum_fraction_exact(A, k, window)
            if frac_exact is not None:
                val, err = frac_exact * window.volume**k, 0.0
            else:
                def frac(X, k=k):
                    return stratum_indicator(A, k, X, window)
                val, err = band_integral_mc(frac, window, k, n_samples, seed, 60 + k)
            # (1/k!) * integral over the ordered product space
            logfact = gammaln(k + 1)
            per_k[k] = float(np.exp(-logfact)) * val
            per_k_err[k] = float(np.exp(-logfact)) * err
        return CodimMeasureResult(m=0, per_k=per_k, per_k_err=per_k_err,
                                  k_truncation=K_max, window=window, flags=tuple(flags))

    sections = _level_sections(A)
    if sections is None:
        raise DomainError("m = 1 requires a level-set description "
                          "(covering upper bounds available separately)")
    g, level = sections
    if eps is None:
        eps = 1e-2 * float(np.max(window.sides))
    squad = surface_quad_orders(window.dim)
    for k in range(1, K_max + 1):
        if A.count_equals is not None and k != A.count_equals:
            per_k[k] = 0.0
            per_k_err[k] = 0.0
            continue
        val, err, _ = surface_functional_auto(g, level, None, window, k, eps=eps,
                                              n_samples=n_samples, seed=seed,
                                              stream=80 + k, quad_order=squad.get(k))
        logfact = gammaln(k + 1)
        per_k[k] = float(np.exp(-logfact)) * max(val, 0.0)
        per_k_err[k] = float(np.exp(-logfact)) * err
    return CodimMeasureResult(m=1, per_k=per_k, per_k_err=per_k_err,
                              k_truncation=K_max, window=window, flags=tuple(flags))


def scaled_box(center, r: float, dim: int) -> BoxDomain:
    c = np.broadcast_to(np.atleast_1d(np.asarray(center, dtype=float)), (dim,))
    return BoxDomain(tuple(c - r / 2.0), tuple(c + r / 2.0))


@dataclass(frozen=True)
class RhoLimitResult:
    values: tuple[float, ...]
    errors: tuple[float, ...]
    boxes: tuple[BoxDomain, ...]
    limit: float
    limit_err: float
    saturated: bool


def rho_m_localized(A: SetSpec, m: int, inner: BoxDomain, outer: BoxDomain, *,
                    n_eta: int = 64, n_samples: int = 20_000, seed: int = 0,
                    K_max: int | None = None) -> MCEstimate:
    """Localized codim-m measure: average over outside patterns eta of the
    codim-m measure of the eta-section on the inner box.

    Membership may only depend on A.locality, which must sit inside ``outer``;
    the Poisson average over the rest of the complement is then exact.  When
    the locality sits inside ``inner`` the outer integral collapses and the
    result is deterministic up to the inner estimator error.
    """
    if A.locality is None:
        raise DomainError("localized measures need a declared locality")
    if not outer.contains_box(A.locality):
        raise DomainError("locality exceeds the outer box")
    if inner.contains_box(A.locality):
        empty = Configuration(window=outer, points=np.zeros((0, inner.dim)))
        sec = section_set(A, empty, inner)
        res = rho_m_on_box(sec, m, inner, n_samples=n_samples, seed=seed, K_max=K_max)
        return MCEstimate(mean=res.total, std_err=res.total_err, n_samples=n_samples,
                          seed=seed, name=A.name and f"rho{m}_loc({A.name})")
    # sample eta on the locality shell outside the inner box
    shell = A.locality
    rng = stream_rng(seed, 7)
    vals = np.empty(n_eta)
    errs = np.empty(n_eta)
    for i in range(n_eta):
        k = rng.poisson(shell.volume)
        pts = shell.sample_uniform(rng, k)
        keep = ~inner.contains(pts) if k else np.zeros(0, dtype=bool)
        eta = Configuration(window=shell, points=pts[keep] if k else pts)
        sec = section_set(A, eta, inner)
        res = rho_m_on_box(sec, m, inner, n_samples=max(2000, n_samples // 8),
                           seed=seed + 1 + i, K_max=K_max)
        vals[i] = res.total
        errs[i] = res.total_err
    mean = float(np.sum(vals) / n_eta)
    var = float(np.sum((vals - mean) ** 2) / max(n_eta - 1, 1))
    err = float(np.sqrt(var / n_eta + np.sum(errs**2) / n_eta**2))
    return MCEstimate(mean=mean, std_err=err, n_samples=n_eta,
                      seed=seed, name=A.name and f"rho{m}_loc({A.name})")


def rho_m_limit(A: SetSpec, m: int, boxes: list[BoxDomain], *, n_eta: int = 64,
                n_samples: int = 20_000, seed: int = 0) -> RhoLimitResult:
    """Increasing-box sequence of localized measures and its limit proxy.

    The sequence must be monotone within errors (this is a theorem, so a
    decrease beyond 3 sigma signals an implementation bug and raises).
    Saturation is flagged when consecutive increments fall below one sigma.
    """
    if len(boxes) < 3:
        raise DomainError("schedule must contain at least 3 boxes")
    for small, big in zip(boxes, boxes[1:]):
        if not big.contains_box(small):
            raise DomainError("boxes must be increasing")
    vals, errs = [], []
    for b in boxes:
        # common random numbers across the schedule keep the sequence smooth
        est = rho_m_localized(A, m, b, boxes[-1].hull(A.locality or b), n_eta=n_eta,
                              n_samples=n_samples, seed=seed)
        vals.append(est.mean)
        errs.append(est.std_err)
    for i in range(1, len(vals)):
        comb = float(np.sqrt(errs[i] ** 2 + errs[i - 1] ** 2))
        if vals[i] < vals[i - 1] - 3.0 * comb - 1e-12:
            raise RuntimeError(
                f"localized measure decreased from {vals[i-1]:.6g} to {vals[i]:.6g} "
                "beyond 3 sigma; monotonicity violated")
    increments = [vals[i] - vals[i - 1] for i in range(1, len(vals))]
    sat = bool(abs(increments[-1]) < errs[-1] + errs[-2])
    return RhoLimitResult(values=tuple(vals), errors=tuple(errs), boxes=tuple(boxes),
                          limit=vals[-1], limit_err=errs[-1], saturated=sat)
