"""Symbolic cylinder functions and vector fields with exact derivative evaluators.

Outer functions are expression trees over a closed set of smooth primitives
(constants, coordinates, sums, products, tanh, exponentials of certified
nonpositive arguments, squares, polynomials, and reciprocals 1/(1+x) of
certified nonnegative arguments), so first and second partials are exact
symbolic trees rather than numerical derivatives, and boundedness can be
certified by interval propagation.

Sign convention: the divergence is the L2 adjoint of the lifted gradient,
    int <V, grad F> dpi = int F (div* V) dpi,
which at the base level reads div* v = -div v.  With the representation
V = sum_i F_i v_i this gives
    div* V (gamma) = sum_i [ -<grad F_i, v_i>_T (gamma) + F_i(gamma) ((div* v_i) star gamma) ].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .configuration import Configuration
from .geometry import BoxDomain, DomainError, SmoothFunction, SmoothVectorField

__all__ = [
    "Node", "const", "coord", "add_n", "mul_n", "tanh_of", "exp_neg", "square",
    "inv_one_plus", "poly", "smoothstep",
    "nonneg_hint",
    "OuterFunction", "CylinderFunction", "ExponentialCylinderFunction",
    "CylinderVectorField",
    "eval_star", "gradient", "divergence", "tangent_norm", "tangent_norm_sq",
    "normalize_field", "cyl_from_star", "cyl_compose", "cyl_mul",
    "flow_map", "directional_derivative_fd",
]

_INF = float("inf")


def _iv_add(a, b):
    return (a[0] + b[0], a[1] + b[1])


def _iv_mul(a, b):
    vals = []
    for x in a:
        for y in b:
            if (x == 0 and np.isinf(y)) or (y == 0 and np.isinf(x)):
                vals.extend([-_INF, _INF])  # indeterminate: stay conservative
            else:
                vals.append(x * y)
    return (min(vals), max(vals))


# ---------------------------------------------------------------------------
# expression nodes


class Node:
    """Expression-tree node over coordinates u_1..u_k."""

    def eval(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def diff(self, i: int) -> "Node":
        raise NotImplementedError

    def bound(self) -> tuple[float, float]:
        raise NotImplementedError

    def shift(self, offsets: np.ndarray) -> "Node":
        raise NotImplementedError

    def max_coord(self) -> int:
        raise NotImplementedError

    def __add__(self, other):
        return add_n(self, _as_node(other))

    def __radd__(self, other):
        return add_n(_as_node(other), self)

    def __mul__(self, other):
        return mul_n(self, _as_node(other))

    def __rmul__(self, other):
        return mul_n(_as_node(other), self)

    def __neg__(self):
        return mul_n(const(-1.0), self)

    def __sub__(self, other):
        return add_n(self, -_as_node(other))


def _as_node(x) -> Node:
    return x if isinstance(x, Node) else const(float(x))


@dataclass(frozen=True)
class Const(Node):
    c: float

    def eval(self, u):
        return np.full(np.asarray(u).shape[:-1], self.c)

    def diff(self, i):
        return Const(0.0)

    def bound(self):
        return (self.c, self.c)

    def shift(self, offsets):
        return self

    def max_coord(self):
        return -1


@dataclass(frozen=True)
class Coord(Node):
    i: int

    def eval(self, u):
        return np.asarray(u)[..., self.i]

    def diff(self, i):
        return Const(1.0 if i == self.i else 0.0)

    def bound(self):
        return (-_INF, _INF)

    def shift(self, offsets):
        off = float(offsets[self.i])
        return self if off == 0.0 else add_n(self, Const(off))

    def max_coord(self):
        return self.i


@dataclass(frozen=True)
class Add(Node):
    terms: tuple

    def eval(self, u):
        out = self.terms[0].eval(u)
        for t in self.terms[1:]:
            out = out + t.eval(u)
        return out

    def diff(self, i):
        return add_n(*[t.diff(i) for t in self.terms])

    def bound(self):
        b = (0.0, 0.0)
        for t in self.terms:
            b = _iv_add(b, t.bound())
        return b

    def shift(self, offsets):
        return add_n(*[t.shift(offsets) for t in self.terms])

    def max_coord(self):
        return max(t.max_coord() for t in self.terms)


@dataclass(frozen=True)
class Mul(Node):
    factors: tuple

    def eval(self, u):
        out = self.factors[0].eval(u)
        for f in self.factors[1:]:
            out = out * f.eval(u)
        return out

    def diff(self, i):
        terms = []
        for j, f in enumerate(self.factors):
            df = f.diff(i)
            if isinstance(df, Const) and df.c == 0.0:
                continue
            rest = self.factors[:j] + self.factors[j + 1:]
            terms.append(mul_n(df, *rest) if rest else df)
        return add_n(*terms) if terms else Const(0.0)

    def bound(self):
        b = (1.0, 1.0)
        for f in self.factors:
            b = _iv_mul(b, f.bound())
        return b

    def shift(self, offsets):
        return mul_n(*[f.shift(offsets) for f in self.factors])

    def max_coord(self):
        return max(f.max_coord() for f in self.factors)


@dataclass(frozen=True)
class Tanh(Node):
    arg: Node

    def eval(self, u):
        return np.tanh(self.arg.eval(u))

    def diff(self, i):
        da = self.arg.diff(i)
        if isinstance(da, Const) and da.c == 0.0:
            return Const(0.0)
        return mul_n(add_n(Const(1.0), mul_n(Const(-1.0), Sq(self))), da)

    def bound(self):
        lo, hi = self.arg.bound()
        return (float(np.tanh(lo)) if np.isfinite(lo) else -1.0,
                float(np.tanh(hi)) if np.isfinite(hi) else 1.0)

    def shift(self, offsets):
        return Tanh(self.arg.shift(offsets))

    def max_coord(self):
        return self.arg.max_coord()


@dataclass(frozen=True)
class Exp(Node):
    """exp of a certified nonpositive argument; bounded in (0, 1]."""

    arg: Node

    def __post_init__(self):
        lo, hi = self.arg.bound()
        if hi > 1e-12:
            raise DomainError("exp argument must be certified nonpositive")

    def eval(self, u):
        return np.exp(self.arg.eval(u))

    def diff(self, i):
        da = self.arg.diff(i)
        if isinstance(da, Const) and da.c == 0.0:
            return Const(0.0)
        return mul_n(self, da)

    def bound(self):
        lo, hi = self.arg.bound()
        return (float(np.exp(lo)) if np.isfinite(lo) else 0.0, float(np.exp(min(hi, 0.0))))

    def shift(self, offsets):
        return Exp(self.arg.shift(offsets))

    def max_coord(self):
        return self.arg.max_coord()


@dataclass(frozen=True)
class Sq(Node):
    arg: Node

    def eval(self, u):
        v = self.arg.eval(u)
        return v * v

    def diff(self, i):
        da = self.arg.diff(i)
        if isinstance(da, Const) and da.c == 0.0:
            return Const(0.0)
        return mul_n(Const(2.0), self.arg, da)

    def bound(self):
        lo, hi = self.arg.bound()
        m = max(lo * lo, hi * hi) if np.isfinite(lo) and np.isfinite(hi) else _INF
        return (0.0 if lo <= 0.0 <= hi else min(lo * lo, hi * hi), m)

    def shift(self, offsets):
        return Sq(self.arg.shift(offsets))

    def max_coord(self):
        return self.arg.max_coord()


@dataclass(frozen=True)
class Inv1p(Node):
    """1/(1+x) for certified nonnegative x; bounded in (0, 1]."""

    arg: Node

    def __post_init__(self):
        lo, _ = self.arg.bound()
        if lo < -1e-12:
            raise DomainError("inv_one_plus argument must be certified nonnegative")

    def eval(self, u):
        return 1.0 / (1.0 + self.arg.eval(u))

    def diff(self, i):
        da = self.arg.diff(i)
        if isinstance(da, Const) and da.c == 0.0:
            return Const(0.0)
        return mul_n(Const(-1.0), Sq(self), da)

    def bound(self):
        lo, hi = self.arg.bound()
        return (0.0 if np.isinf(hi) else 1.0 / (1.0 + hi), 1.0 / (1.0 + max(lo, 0.0)))

    def shift(self, offsets):
        return Inv1p(self.arg.shift(offsets))

    def max_coord(self):
        return self.arg.max_coord()


@dataclass(frozen=True)
class Poly(Node):
    arg: Node
    coeffs: tuple  # c_0 + c_1 x + ...

    def eval(self, u):
        x = self.arg.eval(u)
        out = np.full(np.shape(x), 0.0)
        for c in reversed(self.coeffs):
            out = out * x + c
        return out

    def diff(self, i):
        da = self.arg.diff(i)
        if isinstance(da, Const) and da.c == 0.0:
            return Const(0.0)
        dcoef = tuple(k * c for k, c in enumerate(self.coeffs))[1:]
        if not dcoef:
            return Const(0.0)
        return mul_n(Poly(self.arg, dcoef), da)

    def bound(self):
        lo, hi = self.arg.bound()
        if not (np.isfinite(lo) and np.isfinite(hi)):
            return (-_INF, _INF)
        xs = np.linspace(lo, hi, 2001)
        out = np.full(xs.shape, 0.0)
        for c in reversed(self.coeffs):
            out = out * xs + c
        pad = 1e-9 + 1e-9 * np.max(np.abs(out))
        return (float(out.min() - pad), float(out.max() + pad))

    def shift(self, offsets):
        return Poly(self.arg.shift(offsets), self.coeffs)

    def max_coord(self):
        return self.arg.max_coord()


def const(c: float) -> Node:
    return Const(float(c))


def coord(i: int) -> Node:
    return Coord(int(i))


def add_n(*terms) -> Node:
    flat = []
    acc = 0.0
    for t in terms:
        t = _as_node(t)
        if isinstance(t, Const):
            acc += t.c
        elif isinstance(t, Add):
            flat.extend(t.terms)
        else:
            flat.append(t)
    if acc != 0.0 or not flat:
        flat.append(Const(acc))
    return flat[0] if len(flat) == 1 else Add(tuple(flat))


def mul_n(*factors) -> Node:
    flat = []
    acc = 1.0
    for f in factors:
        f = _as_node(f)
        if isinstance(f, Const):
            acc *= f.c
        elif isinstance(f, Mul):
            flat.extend(f.factors)
        else:
            flat.append(f)
    if acc == 0.0:
        return Const(0.0)
    if acc != 1.0 or not flat:
        flat.insert(0, Const(acc))
    return flat[0] if len(flat) == 1 else Mul(tuple(flat))


def tanh_of(x: Node) -> Node:
    return Tanh(_as_node(x))


def exp_neg(x: Node) -> Node:
    """exp(x) for x certified nonpositive (e.g. -square(y))."""
    return Exp(_as_node(x))


def square(x: Node) -> Node:
    return Sq(_as_node(x))


def inv_one_plus(x: Node) -> Node:
    return Inv1p(_as_node(x))


def poly(x: Node, coeffs) -> Node:
    return Poly(_as_node(x), tuple(float(c) for c in coeffs))


def smoothstep(x: Node, center: float, width: float) -> Node:
    """0.5 (1 + tanh((x - center)/width)); smooth plateau transition."""
    return add_n(const(0.5), mul_n(const(0.5), tanh_of(mul_n(const(1.0 / width),
                                                             add_n(x, const(-center))))))


# ---------------------------------------------------------------------------
# outer functions


@dataclass(frozen=True)
class OuterFunction:
    """Expression tree in k coordinates with exact first and second partials."""

    root: Node
    arity: int

    def __post_init__(self):
        if self.root.max_coord() >= self.arity:
            raise DomainError("expression uses a coordinate beyond the arity")

    def value(self, u) -> np.ndarray:
        return self.root.eval(np.asarray(u, dtype=float))

    def partial(self, i: int) -> Node:
        return self.root.diff(i)

    def grad(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.stack([self.root.diff(i).eval(u) for i in range(self.arity)], axis=-1)

    def hess(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        rows = []
        for i in range(self.arity):
            di = self.root.diff(i)
            rows.append(np.stack([di.diff(j).eval(u) for j in range(self.arity)], axis=-1))
        return np.stack(rows, axis=-2)

    def sup_bound(self) -> float:
        lo, hi = self.root.bound()
        return max(abs(lo), abs(hi))

    @property
    def is_bounded(self) -> bool:
        return np.isfinite(self.sup_bound())


# ---------------------------------------------------------------------------
# cylinder functions


@dataclass(frozen=True)
class CylinderFunction:
    """F(gamma) = Phi(f_1 star gamma, ..., f_k star gamma)."""

    outer: OuterFunction
    inners: tuple[SmoothFunction, ...]
    name: str = ""

    def __post_init__(self):
        if len(self.inners) != self.outer.arity:
            raise DomainError("need one inner function per outer coordinate")

    @property
    def arity(self) -> int:
        return self.outer.arity

    def stars(self, gamma: Configuration) -> np.ndarray:
        if gamma.count == 0:
            return np.zeros(self.arity)
        return np.array([float(np.sum(f.value(gamma.points))) for f in self.inners])

    def value(self, gamma: Configuration) -> float:
        return float(self.outer.value(self.stars(gamma)))

    def gradient(self, gamma: Configuration) -> np.ndarray:
        """Lifted gradient at gamma: one base-space vector per particle, (k, n)."""
        k, n = gamma.count, gamma.dim
        if k == 0:
            return np.zeros((0, n))
        u = self.stars(gamma)
        dphi = self.outer.grad(u)
        out = np.zeros((k, n))
        for i, f in enumerate(self.inners):
            if dphi[i] != 0.0:
                out += dphi[i] * f.gradient(gamma.points)
        return out

    def grad_norm_sq(self, gamma: Configuration) -> float:
        g = self.gradient(gamma)
        return float(np.sum(g * g))

    def locality(self) -> BoxDomain:
        box = self.inners[0].support
        for f in self.inners[1:]:
            box = box.hull(f.support)
        return box

    def sup_bound(self) -> float:
        return self.outer.sup_bound()

    def shift_by(self, eta: Configuration) -> "CylinderFunction":
        """Section at an outside pattern: offsets each linear statistic by f_i star eta."""
        offsets = self.stars(eta)
        return CylinderFunction(OuterFunction(self.outer.root.shift(offsets), self.arity),
                                self.inners, name=self.name)


def cyl_from_star(f: SmoothFunction, name: str = "") -> CylinderFunction:
    """The linear statistic F = f star (identity outer; unbounded sup bound)."""
    return CylinderFunction(OuterFunction(coord(0), 1), (f,), name=name or "star")


def cyl_compose(builder, F: CylinderFunction, name: str = "") -> CylinderFunction:
    """Apply a scalar expression builder to F's outer tree (same inners)."""
    return CylinderFunction(OuterFunction(builder(F.outer.root), F.arity), F.inners,
                            name=name or F.name)


def _remap(node: Node, offset: int) -> Node:
    if isinstance(node, Const):
        return node
    if isinstance(node, Coord):
        return Coord(node.i + offset)
    if isinstance(node, Add):
        return Add(tuple(_remap(t, offset) for t in node.terms))
    if isinstance(node, Mul):
        return Mul(tuple(_remap(f, offset) for f in node.factors))
    if isinstance(node, Tanh):
        return Tanh(_remap(node.arg, offset))
    if isinstance(node, Exp):
        return Exp(_remap(node.arg, offset))
    if isinstance(node, Sq):
        return Sq(_remap(node.arg, offset))
    if isinstance(node, Inv1p):
        return Inv1p(_remap(node.arg, offset))
    if isinstance(node, Poly):
        return Poly(_remap(node.arg, offset), node.coeffs)
    if isinstance(node, _NonnegWrap):
        return _NonnegWrap(_remap(node.inner, offset))
    raise TypeError(f"unknown node {type(node)}")


def cyl_mul(F: CylinderFunction, G: CylinderFunction, name: str = "") -> CylinderFunction:
    root = mul_n(F.outer.root, _remap(G.outer.root, F.arity))
    return CylinderFunction(OuterFunction(root, F.arity + G.arity), F.inners + G.inners,
                            name=name)


@dataclass(frozen=True)
class ExponentialCylinderFunction:
    """Product statistic F(gamma) = prod_{x in gamma} (1 + f(x)), -1 < f <= 0.

    Closed under the lifted heat semigroup: applying the one-particle
    semigroup to f inside the product gives the semigroup of F.
    """

    f: SmoothFunction
    name: str = ""

    def __post_init__(self):
        bounds = self.f.sup_bounds()
        if bounds[0] >= 1.0 - 1e-12:
            raise DomainError("need -1 < f <= 0 for the product statistic")

    def value(self, gamma: Configuration) -> float:
        if gamma.count == 0:
            return 1.0
        return float(np.prod(1.0 + self.f.value(gamma.points)))

    def gradient(self, gamma: Configuration) -> np.ndarray:
        k, n = gamma.count, gamma.dim
        if k == 0:
            return np.zeros((0, n))
        vals = 1.0 + self.f.value(gamma.points)
        total = float(np.prod(vals))
        return (total / vals)[:, None] * self.f.gradient(gamma.points)

    def locality(self) -> BoxDomain:
        return self.f.support


# ---------------------------------------------------------------------------
# cylinder vector fields


def _coeff_value(coeff, gamma: Configuration) -> float:
    return float(coeff) if isinstance(coeff, (int, float)) else coeff.value(gamma)


@dataclass(frozen=True)
class CylinderVectorField:
    """V(gamma, x) = sum_i F_i(gamma) v_i(x)."""

    terms: tuple  # ((coeff, SmoothVectorField), ...)
    name: str = ""

    @property
    def dim(self) -> int:
        return self.terms[0][1].dim

    def support(self) -> BoxDomain:
        box = self.terms[0][1].support
        for _, v in self.terms[1:]:
            box = box.hull(v.support)
        return box

    def coefficients(self, gamma: Configuration) -> np.ndarray:
        return np.array([_coeff_value(c, gamma) for c, _ in self.terms])

    def value(self, gamma: Configuration, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        co = self.coefficients(gamma)
        out = np.zeros(pts.shape)
        for a, (_, v) in enumerate(self.terms):
            out += co[a] * v.value(pts)
        return out

    def at_particles(self, gamma: Configuration) -> np.ndarray:
        if gamma.count == 0:
            return np.zeros((0, self.dim))
        return self.value(gamma, gamma.points)

    def tangent_norm_sq(self, gamma: Configuration) -> float:
        """Gram-form |V|^2_T(gamma) = sum_ij F_i F_j (v_i . v_j) star gamma."""
        if gamma.count == 0:
            return 0.0
        co = self.coefficients(gamma)
        vals = np.stack([v.value(gamma.points) for _, v in self.terms])  # (m, k, n)
        gram = np.einsum("akn,bkn->ab", vals, vals)
        return float(co @ gram @ co)

    def tangent_inner(self, other: "CylinderVectorField", gamma: Configuration) -> float:
        if gamma.count == 0:
            return 0.0
        a = self.at_particles(gamma)
        b = other.at_particles(gamma)
        return float(np.sum(a * b))

    def divergence(self, gamma: Configuration) -> float:
        """Adjoint divergence div* V; see the module docstring for the sign."""
        out = 0.0
        for c, v in self.terms:
            if not isinstance(c, (int, float)):
                gradc = c.gradient(gamma)                # (k, n)
                if gamma.count:
                    out -= float(np.sum(gradc * v.value(gamma.points)))
                cval = c.value(gamma)
            else:
                cval = float(c)
            if gamma.count:
                out += cval * float(np.sum(v.adjoint_divergence(gamma.points)))
        return out


def eval_star(f: SmoothFunction, gamma: Configuration) -> float:
    """The linear statistic f star gamma = sum over particles of f."""
    if gamma.count == 0:
        return 0.0
    return float(np.sum(f.value(gamma.points)))


def gradient(F: CylinderFunction, gamma: Configuration) -> np.ndarray:
    return F.gradient(gamma)


def divergence(V: CylinderVectorField, gamma: Configuration) -> float:
    for _, v in V.terms:
        win = v.components[0].window
        if win is not None and not win.contains_box(v.support):
            raise DomainError("field support must stay inside the window interior")
    return V.divergence(gamma)


def tangent_norm_sq(V: CylinderVectorField, gamma: Configuration) -> float:
    return V.tangent_norm_sq(gamma)


def tangent_norm(V: CylinderVectorField, gamma: Configuration) -> float:
    """Squared tangent norm |V|^2_T(gamma) (Gram form)."""
    return V.tangent_norm_sq(gamma)


def tangent_norm_sq_cylinder(V: CylinderVectorField) -> CylinderFunction:
    """|V|^2_T as a cylinder function (quadratic in the coefficient outers)."""
    inners: list[SmoothFunction] = []
    coeff_roots = []
    for c, _ in V.terms:
        if isinstance(c, (int, float)):
            coeff_roots.append(const(float(c)))
        else:
            coeff_roots.append(_remap(c.outer.root, len(inners)))
            inners.extend(c.inners)
    dots = []
    m = len(V.terms)
    for a in range(m):
        for b in range(m):
            va, vb = V.terms[a][1], V.terms[b][1]
            dot = SmoothFunction.product_of(va.components[0], vb.components[0])
            for ax in range(1, va.dim):
                comp = SmoothFunction.product_of(va.components[ax], vb.components[ax])
                dot = SmoothFunction(kind="sum", support=dot.support.hull(comp.support),
                                     factors=(dot, comp))
            dots.append(((a, b), dot))
    terms = []
    for (a, b), dot in dots:
        idx = len(inners)
        inners.append(dot)
        terms.append(mul_n(coeff_roots[a], coeff_roots[b], coord(idx)))
    root = add_n(*terms)
    return CylinderFunction(OuterFunction(root, len(inners)), tuple(inners), name="|V|^2")


class _NonnegWrap(Node):
    """Marks a subtree as nonnegative by construction (Gram quadratic forms)."""

    def __init__(self, inner: Node):
        self.inner = inner

    def eval(self, u):
        return np.maximum(self.inner.eval(u), 0.0)

    def diff(self, i):
        return self.inner.diff(i)

    def bound(self):
        lo, hi = self.inner.bound()
        return (max(lo, 0.0), max(hi, 0.0))

    def shift(self, offsets):
        return _NonnegWrap(self.inner.shift(offsets))

    def max_coord(self):
        return self.inner.max_coord()

    def __eq__(self, other):
        return isinstance(other, _NonnegWrap) and self.inner == other.inner

    def __hash__(self):
        return hash(("nonneg", self.inner))


def nonneg_hint(x: Node) -> Node:
    """Marks an expression as nonnegative on the relevant domain.

    Use for statistics of nonnegative inner functions (their sums over a
    point pattern are nonnegative even though the coordinate alone is
    unbounded); the evaluation clips at zero, so the hint is safe even when
    roundoff produces a tiny negative value.
    """
    return _NonnegWrap(_as_node(x))


def normalize_field(V: CylinderVectorField, eps: float) -> CylinderVectorField:
    """V / (1 + eps |V|^2_T): tangent norm bounded by 1/(2 sqrt(eps))."""
    if eps <= 0:
        raise DomainError("eps must be positive")
    Q = tangent_norm_sq_cylinder(V)
    damp_root = inv_one_plus(_NonnegWrap(mul_n(const(eps), Q.outer.root)))
    damp = CylinderFunction(OuterFunction(damp_root, Q.arity), Q.inners, name="damp")
    new_terms = []
    for c, v in V.terms:
        if isinstance(c, (int, float)):
            scaled = cyl_compose(lambda r: mul_n(const(float(c)), r), damp)
        else:
            scaled = cyl_mul(c, damp)
        new_terms.append((scaled, v))
    return CylinderVectorField(tuple(new_terms), name=f"norm({V.name})" if V.name else "")


# ---------------------------------------------------------------------------
# flow oracle for directional derivatives


def flow_map(v: SmoothVectorField, points: np.ndarray, s: float,
             step: float = 1e-3) -> np.ndarray:
    """RK4 integration of dx/dt = v(x) from 0 to s (fields are compactly
    supported, so the flow is globally defined)."""
    pts = np.array(np.atleast_2d(points), dtype=float)
    if s == 0.0 or pts.size == 0:
        return pts
    nsteps = max(1, int(np.ceil(abs(s) / step)))
    h = s / nsteps
    for _ in range(nsteps):
        k1 = v.value(pts)
        k2 = v.value(pts + 0.5 * h * k1)
        k3 = v.value(pts + 0.5 * h * k2)
        k4 = v.value(pts + h * k3)
        pts = pts + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return pts


def directional_derivative_fd(F: CylinderFunction, v: SmoothVectorField,
                              gamma: Configuration, s: float = 1e-5) -> float:
    """Central difference of F along the flow of v; oracle for <grad F, v>_T."""
    if gamma.count == 0:
        return 0.0
    plus = Configuration(window=gamma.window, points=flow_map(v, gamma.points, s))
    minus = Configuration(window=gamma.window, points=flow_map(v, gamma.points, -s))
    return (F.value(plus) - F.value(minus)) / (2.0 * s)


# ---------------------------------------------------------------------------
# structured-text serialization of outer trees, cylinder functions, and fields


def node_to_text(node: Node) -> str:
    if isinstance(node, Const):
        return f"(c {node.c!r})"
    if isinstance(node, Coord):
        return f"(u {node.i})"
    if isinstance(node, Add):
        return "(+ " + " ".join(node_to_text(t) for t in node.terms) + ")"
    if isinstance(node, Mul):
        return "(* " + " ".join(node_to_text(f) for f in node.factors) + ")"
    if isinstance(node, Tanh):
        return f"(tanh {node_to_text(node.arg)})"
    if isinstance(node, Exp):
        return f"(exp {node_to_text(node.arg)})"
    if isinstance(node, Sq):
        return f"(sq {node_to_text(node.arg)})"
    if isinstance(node, Inv1p):
        return f"(inv1p {node_to_text(node.arg)})"
    if isinstance(node, Poly):
        coeffs = " ".join(repr(c) for c in node.coeffs)
        return f"(poly {node_to_text(node.arg)} {coeffs})"
    if isinstance(node, _NonnegWrap):
        return f"(nn {node_to_text(node.inner)})"
    raise TypeError(f"cannot serialize {type(node)}")


def _tokenize(text: str) -> list[str]:
    return text.replace("(", " ( ").replace(")", " ) ").split()


def _parse(tokens: list[str], pos: int) -> tuple[Node, int]:
    if tokens[pos] != "(":
        raise ValueError(f"expected '(' at {pos}")
    head = tokens[pos + 1]
    pos += 2
    args: list = []
    while tokens[pos] != ")":
        if tokens[pos] == "(":
            sub, pos = _parse(tokens, pos)
            args.append(sub)
        else:
            args.append(tokens[pos])
            pos += 1
    pos += 1
    if head == "c":
        return Const(float(args[0])), pos
    if head == "u":
        return Coord(int(args[0])), pos
    if head == "+":
        return add_n(*args), pos
    if head == "*":
        return mul_n(*args), pos
    if head == "tanh":
        return Tanh(args[0]), pos
    if head == "exp":
        return Exp(args[0]), pos
    if head == "sq":
        return Sq(args[0]), pos
    if head == "inv1p":
        return Inv1p(args[0]), pos
    if head == "poly":
        return Poly(args[0], tuple(float(c) for c in args[1:])), pos
    if head == "nn":
        return _NonnegWrap(args[0]), pos
    raise ValueError(f"unknown node head {head!r}")


def node_from_text(text: str) -> Node:
    node, pos = _parse(_tokenize(text), 0)
    return node


def cylinder_to_text(F: CylinderFunction) -> str:
    inners = " ;; ".join(f.descriptor() for f in F.inners)
    return f"{node_to_text(F.outer.root)} :: {inners}"


def cylinder_from_text(text: str) -> CylinderFunction:
    outer_text, inner_text = text.split("::")
    inners = tuple(SmoothFunction.from_descriptor(p.strip())
                   for p in inner_text.split(";;"))
    root = node_from_text(outer_text.strip())
    return CylinderFunction(OuterFunction(root, len(inners)), inners)


def field_to_text(V: CylinderVectorField) -> str:
    parts = []
    for c, v in V.terms:
        coeff = repr(float(c)) if isinstance(c, (int, float)) else cylinder_to_text(c)
        parts.append(f"{coeff} @@ {v.descriptor()}")
    return " ||| ".join(parts)


def field_from_text(text: str) -> CylinderVectorField:
    terms = []
    for part in text.split("|||"):
        coeff_text, field_text = part.split("@@")
        coeff_text = coeff_text.strip()
        if "::" in coeff_text:
            coeff = cylinder_from_text(coeff_text)
        else:
            coeff = float(coeff_text)
        terms.append((coeff, SmoothVectorField.from_descriptor(field_text.strip())))
    return CylinderVectorField(tuple(terms))
