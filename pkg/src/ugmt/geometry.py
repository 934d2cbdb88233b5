"""Box domains, closed-form smooth function families, and the 1-d Neumann heat kernel.

Base domains are axis-aligned boxes: nested boxes play the role of the compact
exhaustion, and the Neumann heat kernel on a box tensorizes exactly over axes.
Inner functions come from parametric families (mollifier bumps, coordinate
bumps, constants, Neumann cosine modes) whose gradients and Laplacians are
exact closed forms, not numerical derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BoxDomain",
    "SmoothFunction",
    "SmoothVectorField",
    "HeatKernel1D",
    "GridFunction1D",
    "DomainError",
    "QuadratureError",
    "neumann_kernel",
    "neumann_kernel_tail_bound",
    "auto_image_order",
    "gauss_legendre",
    "semigroup_apply_1d",
]


class DomainError(ValueError):
    """Point or parameter outside the admissible domain."""


class QuadratureError(RuntimeError):
    """Requested quadrature cannot resolve the integrand at the given scale."""


# ---------------------------------------------------------------------------
# boxes


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box [lower_1, upper_1] x ... x [lower_n, upper_n]."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi) or len(lo) == 0:
            raise DomainError("lower/upper must be equal-length nonempty vectors")
        if any(a >= b for a, b in zip(lo, hi)):
            raise DomainError("box requires lower[i] < upper[i]")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.array(self.upper) - np.array(self.lower)))

    @property
    def sides(self) -> np.ndarray:
        return np.array(self.upper) - np.array(self.lower)

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.array(self.lower) - tol
        hi = np.array(self.upper) + tol
        return np.all((pts >= lo) & (pts <= hi), axis=-1)

    def intersect(self, other: "BoxDomain") -> "BoxDomain | None":
        lo = np.maximum(self.lower, other.lower)
        hi = np.minimum(self.upper, other.upper)
        if np.any(lo >= hi):
            return None
        return BoxDomain(tuple(lo), tuple(hi))

    def hull(self, other: "BoxDomain") -> "BoxDomain":
        return BoxDomain(
            tuple(np.minimum(self.lower, other.lower)),
            tuple(np.maximum(self.upper, other.upper)),
        )

    def contains_box(self, other: "BoxDomain") -> bool:
        return bool(
            np.all(np.array(self.lower) <= np.array(other.lower) + 1e-12)
            and np.all(np.array(self.upper) >= np.array(other.upper) - 1e-12)
        )

    def disjoint_interior(self, other: "BoxDomain") -> bool:
        lo = np.maximum(self.lower, other.lower)
        hi = np.minimum(self.upper, other.upper)
        return bool(np.any(lo >= hi - 1e-15))

    def sample_uniform(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(size, self.dim))

    def descriptor(self) -> str:
        lo = ",".join(repr(v) for v in self.lower)
        hi = ",".join(repr(v) for v in self.upper)
        return f"{lo};{hi}"

    @staticmethod
    def from_descriptor(text: str) -> "BoxDomain":
        lo, hi = text.split(";")
        return BoxDomain(
            tuple(float(v) for v in lo.split(",")),
            tuple(float(v) for v in hi.split(",")),
        )


def interval(lo: float, hi: float) -> BoxDomain:
    return BoxDomain((lo,), (hi,))


# ---------------------------------------------------------------------------
# smooth compactly supported function families
#
# The mollifier profile phi(u) = exp(1 - 1/(1-u)) on u = |x-c|^2/w^2 < 1 gives
# exact gradients and Laplacians:
#   grad f = f * h(u) * 2(x-c)/w^2,          h(u)  = -(1-u)^{-2}
#   lap  f = f * [4u (h^2 + h')/w^2 + 2 n h / w^2],  h'(u) = -2 (1-u)^{-3}

_U_CLIP = 1.0 - 1e-12


def _profile(u: np.ndarray) -> np.ndarray:
    u = np.minimum(u, _U_CLIP)
    inside = u < 1.0
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        val = np.exp(1.0 - 1.0 / (1.0 - u))
    return np.where(inside, val, 0.0)


@dataclass(frozen=True)
class SmoothFunction:
    """Smooth function on a box with exact value/gradient/Laplacian evaluators.

    Kinds: ``bump`` (mollifier ball bump), ``coordinate_bump`` (odd coordinate
    factor times a bump), ``constant`` (constant on the box, Laplacian zero),
    ``neumann_mode`` (product of cosine modes, a Neumann Laplacian
    eigenfunction), ``product`` (pointwise product of two members).
    """

    kind: str
    support: BoxDomain
    center: tuple[float, ...] = ()
    width: float = 0.0
    amplitude: float = 1.0
    axis: int = 0
    modes: tuple[int, ...] = ()
    factors: tuple = ()
    window: BoxDomain | None = None
    region: BoxDomain | None = None

    # -- constructors -------------------------------------------------------

    @staticmethod
    def bump(center, width: float, amplitude: float = 1.0, window: BoxDomain | None = None) -> "SmoothFunction":
        c = tuple(float(v) for v in np.atleast_1d(center))
        if width <= 0:
            raise DomainError("bump width must be positive")
        box = BoxDomain(tuple(x - width for x in c), tuple(x + width for x in c))
        if window is not None and not window.contains_box(box):
            raise DomainError("bump support sticks out of the window")
        return SmoothFunction(kind="bump", support=box, center=c, width=float(width),
                              amplitude=float(amplitude), window=window)

    @staticmethod
    def coordinate_bump(center, width: float, amplitude: float = 1.0, axis: int = 0,
                        window: BoxDomain | None = None) -> "SmoothFunction":
        base = SmoothFunction.bump(center, width, amplitude, window)
        return SmoothFunction(kind="coordinate_bump", support=base.support, center=base.center,
                              width=base.width, amplitude=base.amplitude, axis=int(axis), window=window)

    @staticmethod
    def constant(value: float, box: BoxDomain) -> "SmoothFunction":
        return SmoothFunction(kind="constant", support=box, amplitude=float(value), window=box)

    @staticmethod
    def neumann_mode(modes, box: BoxDomain, amplitude: float = 1.0) -> "SmoothFunction":
        m = tuple(int(j) for j in np.atleast_1d(modes))
        if len(m) != box.dim:
            raise DomainError("one cosine mode index per axis")
        return SmoothFunction(kind="neumann_mode", support=box, modes=m,
                              amplitude=float(amplitude), window=box)

    @staticmethod
    def linear(box: BoxDomain, axis: int = 0, amplitude: float = 1.0,
               offset: float = 0.0) -> "SmoothFunction":
        """a * (x_axis - offset) on the box (smooth on the closed box)."""
        center = [0.0] * box.dim
        center[axis] = float(offset)
        return SmoothFunction(kind="linear", support=box, center=tuple(center),
                              amplitude=float(amplitude), axis=int(axis), window=box)

    @staticmethod
    def plateau(region: BoxDomain, sharpness: float = 0.02, amplitude: float = 1.0,
                window: BoxDomain | None = None) -> "SmoothFunction":
        """Smooth approximation of the region indicator: a product over axes of
        sigmoid shoulders of the given sharpness.  Nonnegative, bounded by the
        amplitude."""
        if sharpness <= 0:
            raise DomainError("sharpness must be positive")
        return SmoothFunction(kind="plateau", support=window or region, region=region,
                              width=float(sharpness), amplitude=float(amplitude),
                              window=window)

    @staticmethod
    def product_of(f: "SmoothFunction", g: "SmoothFunction") -> "SmoothFunction":
        box = f.support.intersect(g.support)
        if box is None:
            # disjoint supports: the zero function on a degenerate stand-in box
            box = f.support
        return SmoothFunction(kind="product", support=box, factors=(f, g), window=f.window or g.window)

    @property
    def dim(self) -> int:
        return self.support.dim

    # -- evaluators ---------------------------------------------------------

    def _u(self, pts: np.ndarray) -> np.ndarray:
        d = pts - np.array(self.center)
        return np.sum(d * d, axis=-1) / (self.width**2)

    def value(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "bump":
            out = self.amplitude * _profile(self._u(pts))
        elif self.kind == "coordinate_bump":
            s = (pts[..., self.axis] - self.center[self.axis]) / self.width
            out = self.amplitude * s * _profile(self._u(pts))
        elif self.kind == "constant":
            out = np.full(pts.shape[:-1], self.amplitude)
        elif self.kind == "linear":
            out = self.amplitude * (pts[..., self.axis] - self.center[self.axis])
        elif self.kind == "neumann_mode":
            lo = np.array(self.support.lower)
            sides = self.support.sides
            out = np.full(pts.shape[:-1], self.amplitude)
            for a, j in enumerate(self.modes):
                out = out * np.cos(j * np.pi * (pts[..., a] - lo[a]) / sides[a])
        elif self.kind == "plateau":
            out = np.full(pts.shape[:-1], self.amplitude)
            for a in range(self.dim):
                out = out * self._shoulder(pts[..., a], a)
        elif self.kind == "product":
            f, g = self.factors
            out = f.value(pts) * g.value(pts)
        elif self.kind == "sum":
            out = self.factors[0].value(pts)
            for g in self.factors[1:]:
                out = out + g.value(pts)
        else:
            raise ValueError(f"unknown kind {self.kind}")
        return out

    def gradient(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "bump":
            u = self._u(pts)
            val = self.amplitude * _profile(u)
            h = -1.0 / (1.0 - np.minimum(u, _U_CLIP)) ** 2
            d = pts - np.array(self.center)
            return (val * h * 2.0 / self.width**2)[..., None] * d
        if self.kind == "coordinate_bump":
            u = self._u(pts)
            prof = _profile(u)
            h = -1.0 / (1.0 - np.minimum(u, _U_CLIP)) ** 2
            d = pts - np.array(self.center)
            s = d[..., self.axis] / self.width
            grad = (self.amplitude * s * prof * h * 2.0 / self.width**2)[..., None] * d
            grad[..., self.axis] += self.amplitude * prof / self.width
            return grad
        if self.kind == "constant":
            return np.zeros(pts.shape)
        if self.kind == "linear":
            out = np.zeros(pts.shape)
            out[..., self.axis] = self.amplitude
            return out
        if self.kind == "neumann_mode":
            lo = np.array(self.support.lower)
            sides = self.support.sides
            cosv = [np.cos(j * np.pi * (pts[..., a] - lo[a]) / sides[a]) for a, j in enumerate(self.modes)]
            sinv = [np.sin(j * np.pi * (pts[..., a] - lo[a]) / sides[a]) for a, j in enumerate(self.modes)]
            grad = np.zeros(pts.shape)
            for a, j in enumerate(self.modes):
                term = np.full(pts.shape[:-1], self.amplitude)
                for b in range(self.dim):
                    term = term * (-(j * np.pi / sides[a]) * sinv[b] if b == a else cosv[b])
                grad[..., a] = term
            return grad
        if self.kind == "plateau":
            shoulders = [self._shoulder(pts[..., a], a) for a in range(self.dim)]
            dshoulders = [self._shoulder_d(pts[..., a], a) for a in range(self.dim)]
            grad = np.zeros(pts.shape)
            for a in range(self.dim):
                term = np.full(pts.shape[:-1], self.amplitude)
                for b in range(self.dim):
                    term = term * (dshoulders[b] if b == a else shoulders[b])
                grad[..., a] = term
            return grad
        if self.kind == "product":
            f, g = self.factors
            return f.value(pts)[..., None] * g.gradient(pts) + g.value(pts)[..., None] * f.gradient(pts)
        if self.kind == "sum":
            out = self.factors[0].gradient(pts)
            for g in self.factors[1:]:
                out = out + g.gradient(pts)
            return out
        raise ValueError(f"unknown kind {self.kind}")

    def laplacian(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.dim
        if self.kind == "bump":
            u = self._u(pts)
            val = self.amplitude * _profile(u)
            um = np.minimum(u, _U_CLIP)
            h = -1.0 / (1.0 - um) ** 2
            hp = -2.0 / (1.0 - um) ** 3
            return val * (4.0 * u * (h * h + hp) + 2.0 * n * h) / self.width**2
        if self.kind == "coordinate_bump":
            # lap(s * B) = s * lap(B) + 2 dB/dx_axis / w  with s = (x_a - c_a)/w
            u = self._u(pts)
            val = self.amplitude * _profile(u)
            um = np.minimum(u, _U_CLIP)
            h = -1.0 / (1.0 - um) ** 2
            hp = -2.0 / (1.0 - um) ** 3
            d = pts - np.array(self.center)
            s = d[..., self.axis] / self.width
            lap_b = val * (4.0 * u * (h * h + hp) + 2.0 * n * h) / self.width**2
            db_axis = val * h * 2.0 * d[..., self.axis] / self.width**2
            return s * lap_b + 2.0 * db_axis / self.width
        if self.kind in ("constant", "linear"):
            return np.zeros(pts.shape[:-1])
        if self.kind == "neumann_mode":
            lam = sum((j * np.pi / s) ** 2 for j, s in zip(self.modes, self.support.sides))
            return -lam * self.value(pts)
        if self.kind == "plateau":
            shoulders = [self._shoulder(pts[..., a], a) for a in range(self.dim)]
            d2 = [self._shoulder_d2(pts[..., a], a) for a in range(self.dim)]
            out = np.zeros(pts.shape[:-1])
            for a in range(self.dim):
                term = np.full(pts.shape[:-1], self.amplitude)
                for b in range(self.dim):
                    term = term * (d2[b] if b == a else shoulders[b])
                out = out + term
            return out
        if self.kind == "product":
            f, g = self.factors
            cross = np.sum(f.gradient(pts) * g.gradient(pts), axis=-1)
            return f.value(pts) * g.laplacian(pts) + 2.0 * cross + g.value(pts) * f.laplacian(pts)
        if self.kind == "sum":
            out = self.factors[0].laplacian(pts)
            for g in self.factors[1:]:
                out = out + g.laplacian(pts)
            return out
        raise ValueError(f"unknown kind {self.kind}")

    def _shoulder(self, x, a):
        lo, hi = self.region.lower[a], self.region.upper[a]
        t = self.width
        return 0.25 * (1.0 + np.tanh((x - lo) / t)) * (1.0 + np.tanh((hi - x) / t))

    def _shoulder_d(self, x, a):
        lo, hi = self.region.lower[a], self.region.upper[a]
        t = self.width
        u = np.tanh((x - lo) / t)
        v = np.tanh((hi - x) / t)
        return 0.25 * ((1.0 - u * u) * (1.0 + v) - (1.0 + u) * (1.0 - v * v)) / t

    def _shoulder_d2(self, x, a):
        lo, hi = self.region.lower[a], self.region.upper[a]
        t = self.width
        u = np.tanh((x - lo) / t)
        v = np.tanh((hi - x) / t)
        du = (1.0 - u * u) / t
        dv = -(1.0 - v * v) / t
        ddu = -2.0 * u * du / t
        ddv = 2.0 * v * dv / t
        return 0.25 * (ddu * (1.0 + v) + 2.0 * du * dv + (1.0 + u) * ddv)

    # -- sup-norm bounds ----------------------------------------------------

    def sup_bounds(self) -> tuple[float, float, float]:
        """Dominating bounds (|f|, |grad f|, |lap f|) over the support."""
        if self.kind == "constant":
            return abs(self.amplitude), 0.0, 0.0
        if self.kind == "linear":
            lo = np.array(self.support.lower)
            hi = np.array(self.support.upper)
            span = max(abs(lo[self.axis] - self.center[self.axis]),
                       abs(hi[self.axis] - self.center[self.axis]))
            return abs(self.amplitude) * span, abs(self.amplitude), 0.0
        if self.kind == "neumann_mode":
            lam = sum((j * np.pi / s) ** 2 for j, s in zip(self.modes, self.support.sides))
            gnorm = np.sqrt(sum((j * np.pi / s) ** 2 for j, s in zip(self.modes, self.support.sides)))
            a = abs(self.amplitude)
            return a, a * gnorm, a * lam
        if self.kind == "product":
            f, g = self.factors
            bf, bg = f.sup_bounds(), g.sup_bounds()
            return (
                bf[0] * bg[0],
                bf[0] * bg[1] + bf[1] * bg[0],
                bf[0] * bg[2] + 2 * bf[1] * bg[1] + bf[2] * bg[0],
            )
        if self.kind == "sum":
            bounds = [g.sup_bounds() for g in self.factors]
            return tuple(float(sum(b[i] for b in bounds)) for i in range(3))
        if self.kind == "plateau":
            a = abs(self.amplitude)
            tau = self.width
            return a, a * self.dim * 0.5 / tau, a * self.dim * 0.77 / tau**2
        # radial profile maxima on a fine grid, with a small safety margin
        rho = np.linspace(0.0, 1.0 - 1e-9, 200_001)
        u = rho * rho
        prof = _profile(u)
        um = np.minimum(u, _U_CLIP)
        h = -1.0 / (1.0 - um) ** 2
        hp = -2.0 / (1.0 - um) ** 3
        dprof = np.abs(prof * h * 2.0 * rho)  # |d/d rho| scale (width 1)
        lapn = np.abs(prof * (4.0 * u * (h * h + hp) + 2.0 * self.dim * h))
        a = abs(self.amplitude)
        margin = 1.0 + 1e-9
        if self.kind == "bump":
            return (
                a * margin,
                a / self.width * float(dprof.max()) * margin,
                a / self.width**2 * float(lapn.max()) * margin,
            )
        # coordinate_bump: |f| <= a * max(rho * prof); conservative chain bounds
        val_b = a * float((rho * prof).max()) * margin
        grad_b = a / self.width * (float(prof.max()) + float((rho * dprof).max())) * margin
        lap_b = a / self.width**2 * (float((rho * lapn).max()) + 2.0 * float(dprof.max())) * margin
        return val_b, grad_b, lap_b

    # -- serialization ------------------------------------------------------

    def descriptor(self) -> str:
        if self.kind == "bump" or self.kind == "coordinate_bump":
            c = ",".join(repr(v) for v in self.center)
            s = f"{self.kind} center={c} width={self.width!r} amp={self.amplitude!r}"
            if self.kind == "coordinate_bump":
                s += f" axis={self.axis}"
            if self.window is not None:
                s += f" window={self.window.descriptor()}"
            return s
        if self.kind == "constant":
            return f"constant amp={self.amplitude!r} box={self.support.descriptor()}"
        if self.kind == "neumann_mode":
            m = ",".join(str(j) for j in self.modes)
            return f"neumann_mode modes={m} amp={self.amplitude!r} box={self.support.descriptor()}"
        if self.kind == "linear":
            return (f"linear axis={self.axis} amp={self.amplitude!r} "
                    f"offset={self.center[self.axis]!r} box={self.support.descriptor()}")
        if self.kind == "plateau":
            s = f"plateau region={self.region.descriptor()} tau={self.width!r} amp={self.amplitude!r}"
            if self.window is not None:
                s += f" window={self.window.descriptor()}"
            return s
        raise ValueError(f"kind {self.kind} has no flat descriptor")

    @staticmethod
    def from_descriptor(text: str) -> "SmoothFunction":
        parts = text.split()
        kind = parts[0]
        kv = dict(p.split("=", 1) for p in parts[1:])
        if kind in ("bump", "coordinate_bump"):
            center = tuple(float(v) for v in kv["center"].split(","))
            window = BoxDomain.from_descriptor(kv["window"]) if "window" in kv else None
            if kind == "bump":
                return SmoothFunction.bump(center, float(kv["width"]), float(kv["amp"]), window)
            return SmoothFunction.coordinate_bump(center, float(kv["width"]), float(kv["amp"]),
                                                  int(kv.get("axis", 0)), window)
        if kind == "constant":
            return SmoothFunction.constant(float(kv["amp"]), BoxDomain.from_descriptor(kv["box"]))
        if kind == "neumann_mode":
            modes = tuple(int(v) for v in kv["modes"].split(","))
            return SmoothFunction.neumann_mode(modes, BoxDomain.from_descriptor(kv["box"]), float(kv["amp"]))
        if kind == "linear":
            return SmoothFunction.linear(BoxDomain.from_descriptor(kv["box"]),
                                         int(kv["axis"]), float(kv["amp"]), float(kv["offset"]))
        if kind == "plateau":
            window = BoxDomain.from_descriptor(kv["window"]) if "window" in kv else None
            return SmoothFunction.plateau(BoxDomain.from_descriptor(kv["region"]),
                                          float(kv["tau"]), float(kv["amp"]), window)
        raise ValueError(f"unknown descriptor kind {kind}")


@dataclass(frozen=True)
class SmoothVectorField:
    """Vector field with one SmoothFunction per component.

    ``adjoint_divergence`` evaluates nabla* v = -div v, the L2 adjoint of the
    gradient on compactly supported fields.
    """

    components: tuple[SmoothFunction, ...]

    def __post_init__(self):
        n = self.components[0].dim
        if any(c.dim != n for c in self.components):
            raise DomainError("component dimensions disagree")
        if len(self.components) != n:
            raise DomainError("need one component per axis")

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def support(self) -> BoxDomain:
        box = self.components[0].support
        for c in self.components[1:]:
            box = box.hull(c.support)
        return box

    def value(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([c.value(pts) for c in self.components], axis=-1)

    def jacobian(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([c.gradient(pts) for c in self.components], axis=-2)

    def divergence(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(pts.shape[:-1])
        for a, c in enumerate(self.components):
            out += c.gradient(pts)[..., a]
        return out

    def adjoint_divergence(self, points) -> np.ndarray:
        return -self.divergence(points)

    def descriptor(self) -> str:
        return " || ".join(c.descriptor() for c in self.components)

    @staticmethod
    def from_descriptor(text: str) -> "SmoothVectorField":
        return SmoothVectorField(tuple(SmoothFunction.from_descriptor(p.strip())
                                       for p in text.split("||")))


# ---------------------------------------------------------------------------
# Neumann heat kernel on an interval, by the method of images


def neumann_kernel_tail_bound(t: float, L: float, M: int) -> float:
    """Stated bound on the truncation error of the image sum at order M."""
    if M < 1:
        return float("inf")
    z = 2.0 * M * L - 2.0 * L
    return 2.0 * np.exp(-(z * z) / (4.0 * t)) / np.sqrt(4.0 * np.pi * t)


def auto_image_order(t: float, L: float, tol: float = 1e-12) -> int:
    """Smallest image order whose stated tail bound is below tol (floor 3)."""
    M = 3
    while neumann_kernel_tail_bound(t, L, M) > tol and M < 10_000:
        M += 1
    return M


def neumann_kernel(a, b, t: float, L: float, M: int | None = None) -> np.ndarray:
    """Heat kernel with reflecting boundary on [0, L], truncated image sum.

    k_t(a, b) = sum_{|m|<=M} g_t(a-b-2mL) + g_t(a+b-2mL), with g_t the
    Gaussian kernel.  Nonnegative, symmetric, and conservative up to the
    stated tail bound.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if t <= 0:
        raise DomainError("t must be positive")
    if np.any(a < -1e-12) or np.any(a > L + 1e-12) or np.any(b < -1e-12) or np.any(b > L + 1e-12):
        raise DomainError("kernel arguments must lie in [0, L]")
    if M is None:
        M = auto_image_order(t, L)
    pref = 1.0 / np.sqrt(4.0 * np.pi * t)
    out = np.zeros(np.broadcast(a, b).shape)
    for m in range(-M, M + 1):
        z1 = a - b - 2.0 * m * L
        z2 = a + b - 2.0 * m * L
        out = out + np.exp(-(z1 * z1) / (4.0 * t)) + np.exp(-(z2 * z2) / (4.0 * t))
    return pref * out


def _neumann_kernel_dx(a, b, t: float, L: float, M: int) -> np.ndarray:
    """d/da of the Neumann kernel (image sum differentiated termwise)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pref = 1.0 / np.sqrt(4.0 * np.pi * t)
    out = np.zeros(np.broadcast(a, b).shape)
    for m in range(-M, M + 1):
        z1 = a - b - 2.0 * m * L
        z2 = a + b - 2.0 * m * L
        out = out + (-z1 / (2.0 * t)) * np.exp(-(z1 * z1) / (4.0 * t)) \
                  + (-z2 / (2.0 * t)) * np.exp(-(z2 * z2) / (4.0 * t))
    return pref * out


def _dirichlet_kernel(a, b, t: float, L: float, M: int) -> np.ndarray:
    """Absorbing-boundary kernel on [0, L] (odd image sum); |k_D| <= k_N."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pref = 1.0 / np.sqrt(4.0 * np.pi * t)
    out = np.zeros(np.broadcast(a, b).shape)
    for m in range(-M, M + 1):
        z1 = a - b - 2.0 * m * L
        z2 = a + b - 2.0 * m * L
        out = out + np.exp(-(z1 * z1) / (4.0 * t)) - np.exp(-(z2 * z2) / (4.0 * t))
    return pref * out


@dataclass(frozen=True)
class HeatKernel1D:
    """Neumann heat kernel on [0, L] at a fixed time, with chosen image order."""

    L: float
    t: float
    tol: float = 1e-12
    M: int = field(default=0)

    def __post_init__(self):
        if self.t <= 0 or self.L <= 0:
            raise DomainError("need t > 0 and L > 0")
        if self.M < 1:
            object.__setattr__(self, "M", auto_image_order(self.t, self.L, self.tol))

    def tail_bound(self) -> float:
        return neumann_kernel_tail_bound(self.t, self.L, self.M)

    def kernel(self, a, b) -> np.ndarray:
        return neumann_kernel(a, b, self.t, self.L, self.M)

    def kernel_dx(self, a, b) -> np.ndarray:
        return _neumann_kernel_dx(np.asarray(a), np.asarray(b), self.t, self.L, self.M)

    def dirichlet(self, a, b) -> np.ndarray:
        return _dirichlet_kernel(np.asarray(a), np.asarray(b), self.t, self.L, self.M)

    def matrix(self, nodes: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Row-stochastic (up to tail) operator matrix K[i,j] = k(x_i, x_j) w_j."""
        return self.kernel(nodes[:, None], nodes[None, :]) * weights[None, :]

    def matrix_dx(self, nodes: np.ndarray, weights: np.ndarray) -> np.ndarray:
        return self.kernel_dx(nodes[:, None], nodes[None, :]) * weights[None, :]

    def matrix_dirichlet(self, nodes: np.ndarray, weights: np.ndarray) -> np.ndarray:
        return self.dirichlet(nodes[:, None], nodes[None, :]) * weights[None, :]


# ---------------------------------------------------------------------------
# 1-d semigroup application on a Gauss-Legendre grid


def gauss_legendre(lo: float, hi: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(int(order))
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


@dataclass(frozen=True)
class GridFunction1D:
    """Function values on a Gauss-Legendre grid over [0, L]."""

    nodes: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    L: float

    def integral(self) -> float:
        return float(np.sum(self.weights * self.values))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def required_order(t: float, L: float) -> int:
    # the kernel varies on scale sqrt(2t); demand at least two nodes per scale
    return int(np.ceil(2.0 * L / np.sqrt(2.0 * t)))


def semigroup_apply_1d(f, t: float, L: float, quad_order: int = 64) -> GridFunction1D:
    """Apply the Neumann semigroup at time t to f on [0, L].

    ``f`` may be a callable on [0, L], a SmoothFunction of dimension 1, or a
    GridFunction1D on the same grid.  Raises QuadratureError when the grid
    cannot resolve the kernel at this t.
    """
    if t <= 0:
        raise DomainError("t must be positive")
    if quad_order < 16:
        raise QuadratureError("quad_order must be at least 16")
    need = required_order(t, L)
    if quad_order < need:
        raise QuadratureError(
            f"quadrature order {quad_order} too small for t={t} (need >= {need})")
    nodes, weights = gauss_legendre(0.0, L, quad_order)
    if isinstance(f, GridFunction1D):
        if f.nodes.shape != nodes.shape or not np.allclose(f.nodes, nodes):
            raise QuadratureError("grid function lives on a different grid")
        fv = f.values
    elif isinstance(f, SmoothFunction):
        fv = f.value(nodes[:, None])
    else:
        fv = np.asarray([float(f(x)) for x in nodes])
    ker = HeatKernel1D(L=L, t=t)
    out = ker.matrix(nodes, weights) @ fv
    return GridFunction1D(nodes=nodes, weights=weights, values=out, L=L)
