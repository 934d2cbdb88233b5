"""Monte Carlo and stratified quadrature against the Poisson measure.

Two integration routes are provided and used as mutual oracles throughout:

* plain Monte Carlo over sampled configurations (``integrate``), and
* particle-count stratification (``poisson_stratified``): condition on k
  points, weight by the Poisson probability of k, and integrate over the
  k-fold product box by tensor Gauss-Legendre quadrature (exact up to the
  count truncation) or per-stratum Monte Carlo for larger k.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .configuration import Configuration, MCEstimate, SetSpec, _draw
from .geometry import BoxDomain, gauss_legendre
from .rng import stream_rng, worker_count

__all__ = [
    "MCPlan",
    "integrate",
    "integrate_disintegrated",
    "measure_of_set",
    "poisson_k_cutoff",
    "poisson_pmf",
    "poisson_stratified",
    "stratum_grid_points",
    "default_stratum_orders",
]

MIN_SAMPLES = 100


@dataclass(frozen=True)
class MCPlan:
    """Deterministic Monte Carlo plan; identical plans give identical output."""

    n_samples: int
    seed: int
    window: BoxDomain
    antithetic: bool = False
    worker_streams: int = 16

    def __post_init__(self):
        if self.n_samples < MIN_SAMPLES:
            raise ValueError(f"n_samples must be at least {MIN_SAMPLES}")
        if self.worker_streams < 1:
            raise ValueError("worker_streams must be >= 1")

    def with_seed(self, seed: int) -> "MCPlan":
        return MCPlan(self.n_samples, seed, self.window, self.antithetic, self.worker_streams)


def _reflect(window: BoxDomain, points: np.ndarray) -> np.ndarray:
    lo = np.array(window.lower)
    hi = np.array(window.upper)
    return lo + hi - points


def _stream_values(G, plan: MCPlan, stream: int, count: int) -> np.ndarray:
    rng = stream_rng(plan.seed, stream)
    out = np.empty(count)
    for i in range(count):
        pts = _draw(plan.window, rng)
        gamma = Configuration._unsafe(plan.window, pts)
        val = G(gamma)
        if plan.antithetic:
            mirrored = Configuration._unsafe(plan.window, _reflect(plan.window, pts))
            val = 0.5 * (val + G(mirrored))
        out[i] = val
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite integrand value encountered")
    return out


def sample_values(G, plan: MCPlan) -> np.ndarray:
    """Per-sample values of G under the plan, in a worker-independent order."""
    S = plan.worker_streams
    counts = [len(range(j, plan.n_samples, S)) for j in range(S)]
    workers = min(worker_count(), S)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda j: _stream_values(G, plan, j, counts[j]), range(S)))
    else:
        chunks = [_stream_values(G, plan, j, counts[j]) for j in range(S)]
    values = np.empty(plan.n_samples)
    for j, chunk in enumerate(chunks):
        values[j::S] = chunk
    return values


def integrate(G, plan: MCPlan, name: str = "") -> MCEstimate:
    """Sample mean and standard error of G under the Poisson measure."""
    values = sample_values(G, plan)
    n = values.size
    mean = float(np.sum(values) / n)
    var = float(np.sum((values - mean) ** 2) / (n - 1))
    return MCEstimate(mean=mean, std_err=float(np.sqrt(var / n)), n_samples=n,
                      seed=plan.seed, name=name)


def integrate_disintegrated(G, split: tuple[BoxDomain, BoxDomain], plan: MCPlan,
                            inner_samples: int = 32, name: str = "") -> MCEstimate:
    """Nested estimate over a window partition: outer on N, inner on M.

    For each outer pattern zeta on N, averages G(zeta + xi) over inner Poisson
    patterns xi on M; the standard error is taken across outer samples, which
    accounts for the inner noise as well.
    """
    M, N = split
    if not M.disjoint_interior(N):
        raise ValueError("split boxes must have disjoint interiors")
    if abs(M.volume + N.volume - plan.window.volume) > 1e-9 * plan.window.volume:
        raise ValueError("split must partition the window")
    n_outer = max(plan.n_samples // inner_samples, MIN_SAMPLES)
    rng_o = stream_rng(plan.seed, 1)
    rng_i = stream_rng(plan.seed, 2)
    means = np.empty(n_outer)
    for i in range(n_outer):
        zeta = _draw(N, rng_o)
        acc = np.empty(inner_samples)
        for j in range(inner_samples):
            xi = _draw(M, rng_i)
            merged = Configuration._unsafe(plan.window, np.vstack([zeta, xi]))
            acc[j] = G(merged)
        means[i] = np.sum(acc) / inner_samples
    if not np.all(np.isfinite(means)):
        raise ValueError("non-finite integrand value encountered")
    mean = float(np.sum(means) / n_outer)
    var = float(np.sum((means - mean) ** 2) / (n_outer - 1))
    return MCEstimate(mean=mean, std_err=float(np.sqrt(var / n_outer)),
                      n_samples=n_outer * inner_samples, seed=plan.seed, name=name)


def measure_of_set(A: SetSpec, plan: MCPlan, name: str = "") -> MCEstimate:
    """Probability of A under the Poisson measure on the plan window."""
    return integrate(A.indicator, plan, name=name or (A.name and f"pi({A.name})"))


# ---------------------------------------------------------------------------
# particle-count stratification


def poisson_pmf(k: int, lam: float) -> float:
    return float(stats.poisson.pmf(k, lam))


def poisson_k_cutoff(volume: float, tol: float = 1e-10) -> int:
    """Smallest K with Poisson(volume) tail mass beyond K below tol."""
    k = 0
    while float(stats.poisson.sf(k, volume)) > tol and k < 10_000:
        k += 1
    return k


def default_stratum_orders(n_dim: int) -> dict[int, int]:
    """Per-axis Gauss-Legendre orders by particle count (grid strata)."""
    if n_dim == 1:
        return {1: 64, 2: 48, 3: 28, 4: 16}
    return {1: 32, 2: 12}


def stratum_grid_points(window: BoxDomain, k: int, order: int
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Flattened tensor Gauss-Legendre rule on window^k.

    Returns (points, weights) with points of shape (order^(n k), k, n).
    """
    n = window.dim
    axes_nodes, axes_w = [], []
    for j in range(k):
        for a in range(n):
            nd, w = gauss_legendre(window.lower[a], window.upper[a], order)
            axes_nodes.append(nd)
            axes_w.append(w)
    mesh = np.meshgrid(*axes_nodes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1).reshape(-1, k, n)
    wmesh = np.meshgrid(*axes_w, indexing="ij")
    weights = np.ones(pts.shape[0])
    for m in wmesh:
        weights = weights * m.ravel()
    return pts, weights


def poisson_stratified(Hk, window: BoxDomain, *, quad_k: int = 3,
                       quad_orders: dict[int, int] | None = None,
                       K_max: int | None = None, mc_n: int = 20_000,
                       seed: int = 0, sup_bound: float | None = None,
                       include_empty: bool = True) -> tuple[float, float]:
    """E_pi[H] by conditioning on the particle count.

    ``Hk(k, X)`` evaluates the symmetric stratum function on ordered tuples,
    X of shape (m, k, n) -> (m,).  Strata up to ``quad_k`` use tensor
    quadrature (deterministic); the rest up to ``K_max`` use per-stratum
    Monte Carlo; the truncated tail is charged to the error using
    ``sup_bound`` when supplied.

    Returns (value, error) where error combines Monte Carlo standard errors
    and the tail bound.
    """
    lam = window.volume
    if K_max is None:
        K_max = poisson_k_cutoff(lam)
    orders = dict(default_stratum_orders(window.dim))
    if quad_orders:
        orders.update(quad_orders)
    total = 0.0
    err_sq = 0.0
    if include_empty:
        empty = float(np.asarray(Hk(0, np.zeros((1, 0, window.dim))))[0])
        total += poisson_pmf(0, lam) * empty
    for k in range(1, K_max + 1):
        pk = poisson_pmf(k, lam)
        if pk == 0.0:
            continue
        if k <= quad_k and k in orders:
            pts, w = stratum_grid_points(window, k, orders[k])
            vals = np.asarray(Hk(k, pts))
            mean = float(np.sum(w * vals)) / window.volume**k
            total += pk * mean
        else:
            rng = stream_rng(seed, 9_000 + k)
            pts = rng.uniform(np.tile(window.lower, k), np.tile(window.upper, k),
                              size=(mc_n, k * window.dim)).reshape(mc_n, k, window.dim)
            vals = np.asarray(Hk(k, pts))
            mean = float(np.sum(vals) / mc_n)
            var = float(np.sum((vals - mean) ** 2) / max(mc_n - 1, 1))
            total += pk * mean
            err_sq += (pk ** 2) * var / mc_n
    if sup_bound is not None:
        tail = float(stats.poisson.sf(K_max, lam))
        err_sq += (tail * sup_bound) ** 2
    return total, float(np.sqrt(err_sq))
