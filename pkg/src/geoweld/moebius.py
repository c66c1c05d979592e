"""Exact arithmetic on the Riemann sphere and on Moebius transformations.

Points of the sphere are `ExtendedComplex` values: a finite complex number
or the explicit point at infinity (`INF`).  Moebius maps are stored as 2x2
complex matrices normalized to determinant one; the residual sign ambiguity
is fixed by a deterministic convention so that equality tests are stable.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

_NORM_TOL = 1e-300


class ExtendedComplex:
    """A point of the Riemann sphere: a finite complex value or infinity.

    Construction never produces NaN; division by exact zero yields the
    infinity point.  Instances are immutable and hashable.
    """

    __slots__ = ("value", "is_inf")

    def __init__(self, value=None, is_inf: bool = False):
        if is_inf:
            self.value = None
            self.is_inf = True
        else:
            v = complex(value)
            if not (math.isfinite(v.real) and math.isfinite(v.imag)):
                raise ValueError("non-finite value; use INF for the point at infinity")
            self.value = v
            self.is_inf = False

    def __eq__(self, other):
        other = as_point(other)
        if self.is_inf or other.is_inf:
            return self.is_inf and other.is_inf
        return self.value == other.value

    def __hash__(self):
        return hash(("inf",)) if self.is_inf else hash(self.value)

    def __repr__(self):
        return "INF" if self.is_inf else f"ExtendedComplex({self.value!r})"

    def __complex__(self):
        if self.is_inf:
            raise ValueError("cannot convert INF to complex")
        return self.value

    def to_json(self):
        if self.is_inf:
            return "inf"
        return [self.value.real, self.value.imag]

    @staticmethod
    def from_json(data) -> "ExtendedComplex":
        if data == "inf":
            return INF
        re, im = data
        return ExtendedComplex(complex(re, im))


INF = ExtendedComplex(is_inf=True)


def as_point(z) -> ExtendedComplex:
    """Coerce a complex number, real number, or ExtendedComplex to a sphere point."""
    if isinstance(z, ExtendedComplex):
        return z
    return ExtendedComplex(z)


def spherical_distance(z, w) -> float:
    """Chordal distance on the Riemann sphere, in [0, 2]."""
    z, w = as_point(z), as_point(w)
    if z.is_inf and w.is_inf:
        return 0.0
    if z.is_inf or w.is_inf:
        v = w.value if z.is_inf else z.value
        return 2.0 / math.sqrt(1.0 + abs(v) ** 2)
    a, b = z.value, w.value
    return 2.0 * abs(a - b) / math.sqrt((1.0 + abs(a) ** 2) * (1.0 + abs(b) ** 2))


def _sign_normalize(a: complex, b: complex, c: complex, d: complex):
    # Deterministic PSL sign: first entry of (a, b, c) that is nonzero gets
    # positive real part (positive imaginary part when purely imaginary).
    for entry in (a, b, c):
        if abs(entry) > 1e-14:
            if entry.real < 0 or (entry.real == 0 and entry.imag < 0):
                return -a, -b, -c, -d
            return a, b, c, d
    return a, b, c, d


@dataclass(frozen=True)
class MoebiusMap:
    """The map z -> (az + b)/(cz + d), with ad - bc normalized to 1."""

    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        a, b, c, d = complex(self.a), complex(self.b), complex(self.c), complex(self.d)
        det = a * d - b * c
        if abs(det) < _NORM_TOL:
            raise ValueError("degenerate Moebius map (zero determinant)")
        s = cmath.sqrt(det)
        a, b, c, d = _sign_normalize(a / s, b / s, c / s, d / s)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    # -- basic algebra ----------------------------------------------------

    def __call__(self, z):
        return self.apply(z)

    def apply(self, z) -> ExtendedComplex:
        """Evaluate at a sphere point, with the limit cases handled explicitly."""
        z = as_point(z)
        if z.is_inf:
            if abs(self.c) == 0:
                return INF
            return ExtendedComplex(self.a / self.c)
        den = self.c * z.value + self.d
        if abs(den) == 0:
            return INF
        return ExtendedComplex((self.a * z.value + self.b) / den)

    def apply_array(self, z):
        """Vectorized action on a numpy array of finite complex points."""
        import numpy as np

        z = np.asarray(z, dtype=complex)
        den = self.c * z + self.d
        out = np.empty_like(z)
        pole = np.abs(den) == 0
        out[~pole] = (self.a * z[~pole] + self.b) / den[~pole]
        out[pole] = np.inf
        return out

    def compose(self, other: "MoebiusMap") -> "MoebiusMap":
        """self after other: apply(compose(M1, M2), z) == apply(M1, apply(M2, z))."""
        return MoebiusMap(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def __matmul__(self, other: "MoebiusMap") -> "MoebiusMap":
        return self.compose(other)

    def inverse(self) -> "MoebiusMap":
        return MoebiusMap(self.d, -self.b, -self.c, self.a)

    def trace(self) -> complex:
        return self.a + self.d

    def derivative(self, x) -> complex:
        """M'(x) = 1/(cx + d)^2 for finite x (determinant is 1)."""
        x = complex(x)
        return 1.0 / (self.c * x + self.d) ** 2

    def pre_schwarzian(self, x) -> complex:
        """M''/M'(x) = -2c/(cx + d) for finite x."""
        x = complex(x)
        return -2.0 * self.c / (self.c * x + self.d)

    def is_real(self, tol: float = 1e-12) -> bool:
        return max(abs(self.a.imag), abs(self.b.imag), abs(self.c.imag), abs(self.d.imag)) <= tol

    def is_identity(self, tol: float = 1e-12) -> bool:
        return (
            abs(self.b) <= tol
            and abs(self.c) <= tol
            and abs(self.a - self.d) <= tol
        )

    def conjugate_by(self, A: "MoebiusMap") -> "MoebiusMap":
        """A o self o A^{-1}."""
        return A.compose(self).compose(A.inverse())

    # -- constructors ------------------------------------------------------

    @staticmethod
    def identity() -> "MoebiusMap":
        return MoebiusMap(1.0, 0.0, 0.0, 1.0)

    @staticmethod
    def affine(slope, offset) -> "MoebiusMap":
        return MoebiusMap(slope, offset, 0.0, 1.0)

    @staticmethod
    def to_zero_one_inf(p, q, r) -> "MoebiusMap":
        """The unique map sending the distinct points (p, q, r) to (0, 1, inf)."""
        p, q, r = as_point(p), as_point(q), as_point(r)
        if len({p, q, r}) != 3:
            raise ValueError("points must be pairwise distinct")
        if p.is_inf:
            q, r = q.value, r.value
            return MoebiusMap(0.0, r - q, -1.0, r)
        if q.is_inf:
            p, r = p.value, r.value
            return MoebiusMap(1.0, -p, 1.0, -r)
        if r.is_inf:
            p, q = p.value, q.value
            return MoebiusMap(1.0, -p, 0.0, q - p)
        p, q, r = p.value, q.value, r.value
        return MoebiusMap(q - r, -p * (q - r), q - p, -r * (q - p))

    @staticmethod
    def from_three_points(src, dst) -> "MoebiusMap":
        """Map the triple src = (p1, p2, p3) to dst = (q1, q2, q3)."""
        return MoebiusMap.to_zero_one_inf(*dst).inverse().compose(
            MoebiusMap.to_zero_one_inf(*src)
        )

    # -- serialization -----------------------------------------------------

    def to_json(self):
        return {
            "a": [self.a.real, self.a.imag],
            "b": [self.b.real, self.b.imag],
            "c": [self.c.real, self.c.imag],
            "d": [self.d.real, self.d.imag],
        }

    @staticmethod
    def from_json(data) -> "MoebiusMap":
        return MoebiusMap(*(complex(data[k][0], data[k][1]) for k in "abcd"))


def mobius_from_jet(x0: float, v: float, d1: float, d2: float) -> MoebiusMap:
    """The real Moebius map with value v, derivative d1 > 0, second derivative d2 at x0.

    Built as (t -> v + d1*t) composed with the normalized jet
    t -> t/(1 - (mu/2) t) at x0, where mu = d2/d1.
    """
    if not d1 > 0:
        raise ValueError("invalid jet: first derivative must be positive")
    mu = d2 / d1
    base = MoebiusMap(1.0, -x0, -mu / 2.0, 1.0 + mu * x0 / 2.0)
    return MoebiusMap.affine(d1, v).compose(base)


@dataclass(frozen=True)
class MoebiusClass:
    """Conjugacy type of a Moebius map plus its fixed points."""

    tag: str  # identity | parabolic | elliptic | hyperbolic | loxodromic
    fixed_points: tuple = field(default_factory=tuple)


def fixed_points(M: MoebiusMap, tol: float = 1e-12):
    """Fixed points on the sphere; one point for parabolic maps, two otherwise."""
    if abs(M.c) <= tol:
        if abs(M.a - M.d) <= tol:
            return (INF,)
        return (INF, ExtendedComplex(M.b / (M.d - M.a)))
    disc = cmath.sqrt(M.trace() ** 2 - 4.0)
    z1 = (M.a - M.d + disc) / (2 * M.c)
    z2 = (M.a - M.d - disc) / (2 * M.c)
    if abs(z1 - z2) <= tol * max(1.0, abs(z1)):
        return (ExtendedComplex((z1 + z2) / 2),)
    return (ExtendedComplex(z1), ExtendedComplex(z2))


def classify(M: MoebiusMap, tol: float = 1e-9) -> MoebiusClass:
    """Classify by trace^2: 4 parabolic, [0,4) elliptic, >4 hyperbolic, else loxodromic."""
    t2 = M.trace() ** 2
    if M.is_identity(tol):
        return MoebiusClass("identity", ())
    if abs(t2 - 4.0) <= tol:
        return MoebiusClass("parabolic", fixed_points(M, tol=math.sqrt(tol)))
    fps = fixed_points(M)
    if abs(t2.imag) <= tol:
        if 0.0 <= t2.real < 4.0:
            return MoebiusClass("elliptic", fps)
        if t2.real > 4.0:
            return MoebiusClass("hyperbolic", fps)
    return MoebiusClass("loxodromic", fps)


def cross_ratio(z1, z2, z3, z4) -> ExtendedComplex:
    """(z1-z3)(z2-z4) / ((z1-z4)(z2-z3)), with infinity handled by the limit.

    Convention check: cross_ratio(0, 1, INF, x) = (x-1)/x.
    """
    pts = [as_point(z) for z in (z1, z2, z3, z4)]
    if len(set(pts)) != 4:
        raise ValueError("degenerate input: cross-ratio needs four distinct points")
    z1, z2, z3, z4 = pts

    def ratio(num: complex, den: complex) -> ExtendedComplex:
        if den == 0:
            return INF
        return ExtendedComplex(num / den)

    # At most one point is infinite; drop the pair of factors it cancels.
    if z1.is_inf:
        return ratio(z2.value - z4.value, z2.value - z3.value)
    if z2.is_inf:
        return ratio(z1.value - z3.value, z1.value - z4.value)
    if z3.is_inf:
        return ratio(z2.value - z4.value, z1.value - z4.value)
    if z4.is_inf:
        return ratio(z1.value - z3.value, z2.value - z3.value)
    a, b, c, d = z1.value, z2.value, z3.value, z4.value
    return ratio((a - c) * (b - d), (a - d) * (b - c))
