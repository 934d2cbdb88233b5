"""Finite point configurations, Poisson sampling, and the quotient transport metric.

A configuration is a finite multiplicity-one point pattern in a box window.
Configurations are canonicalized by lexicographic point order so that equality
and hashing are well defined on the quotient by particle relabeling.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .geometry import BoxDomain, DomainError
from .rng import stream_rng

__all__ = [
    "Configuration",
    "MCEstimate",
    "SetSpec",
    "CollisionError",
    "sample_poisson",
    "sample_poisson_batch",
    "restrict",
    "add",
    "quotient_distance",
    "section_set",
    "hungarian",
]

MAX_ASSIGNMENT_SIZE = 12
_SAMPLE_RETRIES = 10


class CollisionError(RuntimeError):
    """Exact point collision persisted through the retry cap."""


def _canonical(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, points.shape[-1] if points.ndim > 1 else 1)
    if pts.shape[0] == 0:
        return pts
    order = np.lexsort(pts.T[::-1])
    return pts[order]


@dataclass(frozen=True)
class Configuration:
    """Finite multiplicity-one point pattern inside a box window."""

    window: BoxDomain
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, self.window.dim)
        if pts.ndim != 2 or pts.shape[1] != self.window.dim:
            raise DomainError("points must have shape (k, n) matching the window")
        pts = _canonical(pts)
        if pts.shape[0] and not np.all(self.window.contains(pts, tol=1e-12)):
            raise DomainError("points must lie in the window")
        if pts.shape[0] > 1 and np.any(np.all(np.diff(pts, axis=0) == 0.0, axis=1)):
            raise DomainError("multiplicity one violated: duplicate point")
        object.__setattr__(self, "points", pts)
        self.points.setflags(write=False)

    @staticmethod
    def _unsafe(window: BoxDomain, points: np.ndarray) -> "Configuration":
        """Constructor without validation or canonicalization.

        Only for sampler-produced points (already inside the window, distinct
        almost surely); equality/hashing contracts require the public
        constructor.
        """
        self = object.__new__(Configuration)
        object.__setattr__(self, "window", window)
        object.__setattr__(self, "points", points)
        return self

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.window.dim

    def count_in(self, region: BoxDomain) -> int:
        if self.count == 0:
            return 0
        return int(np.sum(region.contains(self.points)))

    def __eq__(self, other) -> bool:
        return (isinstance(other, Configuration)
                and self.window == other.window
                and self.points.shape == other.points.shape
                and bool(np.all(self.points == other.points)))

    def __hash__(self) -> int:
        return hash((self.window, self.points.tobytes()))

    # one-line record: "n k x11 .. x1n x21 .. | lo1 .. lon hi1 .. hin"
    def serialize(self) -> str:
        coords = " ".join(repr(float(v)) for v in self.points.ravel())
        box = " ".join(repr(float(v)) for v in (*self.window.lower, *self.window.upper))
        return f"{self.dim} {self.count} {coords} | {box}".replace("  ", " ")

    @staticmethod
    def deserialize(line: str) -> "Configuration":
        head, box = line.split("|")
        vals = head.split()
        n, k = int(vals[0]), int(vals[1])
        pts = np.array([float(v) for v in vals[2:2 + n * k]]).reshape(k, n)
        bv = [float(v) for v in box.split()]
        window = BoxDomain(tuple(bv[:n]), tuple(bv[n:]))
        return Configuration(window=window, points=pts)


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo result: mean, standard error, sample count, and seed."""

    mean: float
    std_err: float
    n_samples: int
    seed: int
    name: str = ""

    def __post_init__(self):
        if self.std_err < 0:
            raise ValueError("std_err must be nonnegative")

    def within(self, target: float, k_sigma: float = 3.0, atol: float = 0.0) -> bool:
        return abs(self.mean - target) <= k_sigma * self.std_err + atol

    def to_json(self) -> dict:
        return {"name": self.name, "mean": self.mean, "std_err": self.std_err,
                "n": self.n_samples, "seed": self.seed}


# ---------------------------------------------------------------------------
# Poisson sampling (intensity = Lebesgue measure on the window)


def _draw(window: BoxDomain, rng: np.random.Generator) -> np.ndarray:
    k = rng.poisson(window.volume)
    for _ in range(_SAMPLE_RETRIES):
        pts = window.sample_uniform(rng, k)
        if k < 2:
            return pts
        canon = _canonical(pts)
        if not np.any(np.all(np.diff(canon, axis=0) == 0.0, axis=1)):
            return pts
    raise CollisionError("exact point collision persisted; broken RNG?")


def sample_poisson(window: BoxDomain, seed: int, stream: int = 0) -> Configuration:
    """One Poisson configuration: N ~ Poisson(volume), points i.i.d. uniform."""
    rng = stream_rng(seed, stream)
    return Configuration(window=window, points=_draw(window, rng))


def sample_poisson_batch(window: BoxDomain, seed: int, n: int,
                         stream: int = 0) -> list[Configuration]:
    """n i.i.d. Poisson configurations from one stream, in draw order."""
    rng = stream_rng(seed, stream)
    return [Configuration(window=window, points=_draw(window, rng)) for _ in range(n)]


# ---------------------------------------------------------------------------
# restriction, sum, sections


def restrict(gamma: Configuration, box: BoxDomain) -> Configuration:
    """Points of gamma inside box, with box as the new window."""
    if gamma.count == 0:
        return Configuration(window=box, points=np.zeros((0, box.dim)))
    keep = box.contains(gamma.points)
    return Configuration(window=box, points=gamma.points[keep])


def _merge(gamma: Configuration, eta: Configuration) -> Configuration:
    window = gamma.window.hull(eta.window)
    pts = np.vstack([gamma.points, eta.points])
    if pts.shape[0] > 1:
        canon = _canonical(pts)
        if np.any(np.all(np.diff(canon, axis=0) == 0.0, axis=1)):
            raise CollisionError("superposition collides: multiplicity one violated")
    return Configuration(window=window, points=pts)


def add(gamma: Configuration, eta: Configuration) -> Configuration:
    """Superposition of configurations on interior-disjoint windows."""
    if not gamma.window.disjoint_interior(eta.window):
        raise DomainError("windows must have disjoint interiors")
    return _merge(gamma, eta)


# ---------------------------------------------------------------------------
# quotient transport distance: min over particle relabelings


def hungarian(cost: np.ndarray) -> np.ndarray:
    """Exact minimum-cost assignment (O(n^3) potentials form).

    Returns col[i] = column assigned to row i.
    """
    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0]
    if cost.shape != (n, n):
        raise ValueError("cost matrix must be square")
    INF = float("inf")
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)  # p[j] = row matched to column j (1-based)
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = INF
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col = np.zeros(n, dtype=int)
    for j in range(1, n + 1):
        col[p[j] - 1] = j - 1
    return col


def quotient_distance(gamma: Configuration, eta: Configuration) -> float:
    """L2 transport distance between equal-count patterns; inf otherwise."""
    if gamma.count != eta.count:
        return float("inf")
    k = gamma.count
    if k == 0:
        return 0.0
    if k > MAX_ASSIGNMENT_SIZE:
        raise DomainError(f"assignment capped at {MAX_ASSIGNMENT_SIZE} particles")
    diff = gamma.points[:, None, :] - eta.points[None, :, :]
    cost = np.sum(diff * diff, axis=-1)
    col = hungarian(cost)
    return float(np.sqrt(cost[np.arange(k), col].sum()))


def brute_force_distance(gamma: Configuration, eta: Configuration) -> float:
    """Reference minimum over explicit permutations (k <= 8)."""
    if gamma.count != eta.count:
        return float("inf")
    k = gamma.count
    if k == 0:
        return 0.0
    best = float("inf")
    for perm in itertools.permutations(range(k)):
        d = gamma.points[list(perm)] - eta.points
        best = min(best, float(np.sum(d * d)))
    return float(np.sqrt(best))


# ---------------------------------------------------------------------------
# Borel set descriptions with declared locality


@dataclass(frozen=True)
class SetSpec:
    """Membership description of a Borel subset of the configuration space.

    Variants: ``predicate`` (arbitrary membership oracle), ``count_at_least``
    (at least ``threshold`` points in ``region``), ``level_set`` (super-level
    set {F > t} or {F >= t} of a cylinder function), ``level_sheet``
    ({F = t}, the reduced boundary of the strict super-level set).

    ``locality``, when set, declares a box outside of which membership does
    not depend on the configuration; it is caller-declared and spot-checked,
    not inferred.
    """

    variant: str
    locality: BoxDomain | None = None
    region: BoxDomain | None = None
    threshold: int = 0
    function: object = None   # CylinderFunction for level variants
    level: float = 0.0
    strict: bool = True
    oracle: object = None
    count_equals: int | None = None  # restrict level variants to one stratum
    name: str = ""

    # -- constructors -------------------------------------------------------

    @staticmethod
    def predicate(oracle, locality: BoxDomain | None = None, name: str = "") -> "SetSpec":
        return SetSpec(variant="predicate", oracle=oracle, locality=locality, name=name)

    @staticmethod
    def count_at_least(region: BoxDomain, threshold: int, name: str = "") -> "SetSpec":
        return SetSpec(variant="count_at_least", region=region, threshold=int(threshold),
                       locality=region, name=name)

    @staticmethod
    def level_set(function, level: float, strict: bool = True,
                  count_equals: int | None = None, name: str = "") -> "SetSpec":
        return SetSpec(variant="level_set", function=function, level=float(level),
                       strict=strict, locality=function.locality(),
                       count_equals=count_equals, name=name)

    @staticmethod
    def level_sheet(function, level: float, count_equals: int | None = None,
                    name: str = "") -> "SetSpec":
        return SetSpec(variant="level_sheet", function=function, level=float(level),
                       locality=function.locality(), count_equals=count_equals, name=name)

    def boundary_sheet(self) -> "SetSpec":
        """The defining level sheet of a level-set spec (its reduced boundary)."""
        if self.variant != "level_set":
            raise ValueError("boundary sheets exist for level-set specs only")
        return SetSpec.level_sheet(self.function, self.level, self.count_equals,
                                   name=self.name and f"bd({self.name})")

    # -- membership ---------------------------------------------------------

    def contains(self, gamma: Configuration) -> bool:
        if self.variant == "predicate":
            return bool(self.oracle(gamma))
        if self.variant == "count_at_least":
            return gamma.count_in(self.region) >= self.threshold
        if self.count_equals is not None and gamma.count != self.count_equals:
            return False
        if self.variant == "level_set":
            v = self.function.value(gamma)
            return bool(v > self.level) if self.strict else bool(v >= self.level)
        if self.variant == "level_sheet":
            return bool(self.function.value(gamma) == self.level)
        raise ValueError(f"unknown variant {self.variant}")

    def indicator(self, gamma: Configuration) -> float:
        return 1.0 if self.contains(gamma) else 0.0

    def descriptor(self) -> str:
        if self.variant == "count_at_least":
            return f"count_at_least region={self.region.descriptor()} threshold={self.threshold}"
        raise ValueError(f"variant {self.variant} has no flat descriptor")

    @staticmethod
    def from_descriptor(text: str) -> "SetSpec":
        parts = text.split()
        if parts[0] != "count_at_least":
            raise ValueError(f"unknown descriptor kind {parts[0]}")
        kv = dict(p.split("=", 1) for p in parts[1:])
        return SetSpec.count_at_least(BoxDomain.from_descriptor(kv["region"]), int(kv["threshold"]))


def section_set(spec: SetSpec, eta: Configuration, box: BoxDomain) -> SetSpec:
    """Section of a set at the outside pattern eta: gamma -> member(gamma + eta).

    gamma ranges over configurations in ``box``; eta must be supported outside
    it.  When the declared locality sits inside ``box`` the section does not
    depend on eta at all.
    """
    if eta.count and np.any(box.contains(eta.points)):
        raise DomainError("eta must be supported outside the section box")
    locality = spec.locality.intersect(box) if spec.locality is not None else None

    if spec.locality is not None and box.contains_box(spec.locality):
        base = spec

        def member(gamma: Configuration) -> bool:
            return base.contains(gamma)
    else:
        def member(gamma: Configuration) -> bool:
            return spec.contains(_merge(gamma, eta))

    if spec.variant in ("level_set", "level_sheet") and spec.function is not None:
        # shifting the outside pattern only offsets the linear statistics
        shifted = spec.function.shift_by(eta)
        count_eq = spec.count_equals
        if count_eq is not None:
            count_eq = count_eq - eta.count
            if count_eq < 0:
                return SetSpec.predicate(lambda g: False, locality=locality,
                                         name=f"{spec.name}|section" if spec.name else "")
        return SetSpec(variant=spec.variant, function=shifted, level=spec.level,
                       strict=spec.strict, locality=locality, count_equals=count_eq,
                       name=f"{spec.name}|section" if spec.name else "")
    return SetSpec.predicate(member, locality=locality,
                             name=f"{spec.name}|section" if spec.name else "")
