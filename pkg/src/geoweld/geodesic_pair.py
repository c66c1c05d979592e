"""The one-vertex building block: the C1 geodesic pair in the unit disk.

For an opening angle theta in (0, pi) the pair is the unique C1 chord of the
disk from e^{i theta} through 0 to e^{-i theta} whose two halves are each
hyperbolic geodesics in the complement of the other.  Everything about it is
explicit: the uniformizing map

    h(z) = (1/2)(iz + 1/(iz)) - i cos(theta) log(iz)

sends the two sides of the chord to the upper and lower half-planes.  In the
logarithmic coordinate zeta = -i log(iz) (so z = -i e^{i zeta}) the map
becomes the entire function

    H(zeta) = cos(zeta) + cos(theta) * zeta,

which is what this module actually computes with: branch tracking reduces to
choosing the correct vertical strip of zeta, and the inverse maps f/g are
obtained by Newton continuation on H.  The f-side lives over the strip with
base corners (pi/2 - theta, pi/2 + theta), the g-side over the strip with
base corners (theta - 3pi/2, pi/2 - theta); the two boundary values at the
corners are the constants B, D and B, C of the boundary correspondence.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from scipy.optimize import brentq

from .moebius import INF, ExtendedComplex, as_point

_THETA_GUARD = 1e-12


class PairDomainError(ValueError):
    pass


class PairInversionError(RuntimeError):
    """Newton inversion of the pair map failed to converge."""

    def __init__(self, message, theta=None, z=None, residual=None):
        super().__init__(message)
        self.theta = theta
        self.z = z
        self.residual = residual


class AmbiguousBranchError(ValueError):
    """Evaluation on the branch cut without a side hint."""


def _check_theta(theta: float) -> float:
    theta = float(theta)
    if not (_THETA_GUARD < theta < math.pi - _THETA_GUARD):
        raise PairDomainError(f"theta must lie in (0, pi), got {theta}")
    return theta


@dataclass(frozen=True)
class PairConstants:
    """Boundary images of the pair map: A = h(1), B = h(e^{-i theta}), etc."""

    theta: float
    A: float
    B: float
    C: float
    D: float


def pair_constants(theta: float) -> PairConstants:
    """A = (pi/2) cos t, B = sin t + (pi/2 - t) cos t, C = -2A - B, D = 2A - B."""
    theta = _check_theta(theta)
    A = (math.pi / 2.0) * math.cos(theta)
    B = math.sin(theta) + (math.pi / 2.0 - theta) * math.cos(theta)
    return PairConstants(theta, A, B, -2.0 * A - B, 2.0 * A - B)


@dataclass
class BranchedLog:
    """Branch state for log(iz): Im log(iz) = pi/2 on (0,1) plus 2 pi winding.

    `reference_angle` is the continuously tracked argument of the last point
    visited; `continue_to` updates it along a short path segment (the segment
    must subtend less than pi at the origin).
    """

    winding: int = 0
    reference_angle: float = 0.0

    def eval(self, z: complex) -> complex:
        z = complex(z)
        if z == 0:
            raise ZeroDivisionError("log(iz) undefined at z = 0")
        phi = cmath.phase(z)
        # unwrap to the sheet nearest the reference angle
        k = round((self.reference_angle - phi) / (2.0 * math.pi))
        phi += 2.0 * math.pi * k
        return complex(
            math.log(abs(z)),
            phi + math.pi / 2.0 + 2.0 * math.pi * self.winding,
        )

    def continue_to(self, z: complex) -> complex:
        value = self.eval(z)
        self.reference_angle = value.imag - math.pi / 2.0 - 2.0 * math.pi * self.winding
        return value


def _H(theta: float, zeta: complex) -> complex:
    return cmath.cos(zeta) + math.cos(theta) * zeta


def _dH(theta: float, zeta: complex) -> complex:
    return -cmath.sin(zeta) + math.cos(theta)


def _corners(theta: float, side: int):
    """Corner data (zeta_c, H(zeta_c), H''(zeta_c), quadrant) for one side."""
    k = pair_constants(theta)
    if side > 0:  # f-side strip
        return (
            (math.pi / 2.0 - theta, k.B, -math.sin(theta), +1),
            (math.pi / 2.0 + theta, k.D, +math.sin(theta), -1),
        )
    return (
        (math.pi / 2.0 - theta, k.B, -math.sin(theta), -1),
        (theta - 1.5 * math.pi, k.C, +math.sin(theta), +1),
    )


def _corner_seed(theta, u, corner):
    zeta_c, u_c, h2, quad = corner
    delta = cmath.sqrt(2.0 * (u - u_c) / h2)
    # quad selects the horizontal half-plane of the strip at this corner;
    # the vertical component always points up (into Im zeta > 0).
    if delta.imag < 0:
        delta = -delta
    if delta.imag < 1e-14 and quad * delta.real < 0:
        delta = -delta
    return zeta_c + delta


def _newton(theta, u, zeta, side, tol):
    corners = _corners(theta, side)
    for _ in range(60):
        r = _H(theta, zeta) - u
        if abs(r) <= tol:
            return zeta
        d = _dH(theta, zeta)
        if abs(d) < 1e-7:
            # near a fold point of H; restart from the local sqrt model
            corner = min(corners, key=lambda c: abs(zeta - c[0]))
            zeta = _corner_seed(theta, u, corner)
            continue
        step = r / d
        if abs(step) > 1.0:
            step /= abs(step)
        zeta = zeta - step
    r = abs(_H(theta, zeta) - u)
    if r <= 1e3 * tol:
        return zeta
    raise PairInversionError(
        f"pair map inversion stalled (residual {r:.3e})", theta=theta, residual=r
    )


def _invert_H(theta: float, u: complex, side: int) -> complex:
    """Solve H(zeta) = u on the f-side (side=+1) or g-side (side=-1) strip."""
    tol = 1e-13 * max(1.0, abs(u))
    # target very close to a corner value: use the local model directly
    for corner in _corners(theta, side):
        if abs(u - corner[1]) < 1e-12:
            return _newton(theta, u, _corner_seed(theta, u, corner), side, tol)

    bump = 0.15
    if u == 0:
        path = [(-side * 1j) * 8.0 * (0.25**j) for j in range(8)] + [0.0]
    else:
        absu = abs(u)
        if -side * u.imag > bump * absu:
            anchor = u  # safely off the real axis already
            ladder = []
        else:
            anchor = u + complex(0.0, -side * bump * absu)
            ladder = [u + complex(0.0, -side * bump * absu * 0.2**j) for j in range(1, 6)]
            ladder.append(u)
        phase = anchor / abs(anchor)
        moduli = []
        m = max(8.0, abs(anchor))
        while m > abs(anchor) * 1.0001:
            moduli.append(m)
            m /= 1.9
        path = [mm * phase for mm in moduli] + [anchor] + ladder

    u0 = path[0]
    # seed from the leading asymptotic w ~ z/(2i), i.e. zeta ~ i log(2u)
    zeta = complex(-cmath.phase(u0), math.log(2.0 * abs(u0)))
    for node in path:
        zeta = _newton(theta, node, zeta, side, 1e-13 * max(1.0, abs(node)))
    return zeta


def _zeta_to_disk(zeta: complex) -> complex:
    return -1j * cmath.exp(1j * zeta)


def h_theta(theta: float, z, side: str | None = None) -> ExtendedComplex:
    """Evaluate h(z) = (1/2)(iz + 1/(iz)) - i cos(theta) log(iz) on the disk.

    The branch is the canonical one: continuous on the disk cut along the
    upper chord arc, with Im log(iz) = pi/2 on (0, 1).  Points on the cut need
    `side` ("right" for the component containing (0,1), "left" for the other);
    elsewhere the branch is selected automatically.
    """
    theta = _check_theta(theta)
    z = as_point(z)
    if z.is_inf:
        raise PairDomainError("h is defined on the closed unit disk only")
    w = z.value
    if w == 0:
        return INF
    r = abs(w)
    if r > 1.0 + 1e-12:
        raise PairDomainError("h is defined on the closed unit disk only")
    zeta = complex(cmath.phase(w) + math.pi / 2.0, -math.log(min(r, 1.0)))
    val = _H(theta, zeta)
    shift = 2.0 * math.pi * math.cos(theta)
    tol = 1e-12 * max(1.0, abs(val))
    if abs(val.imag) > tol:
        # H maps the f-side strip to the lower half-plane, the unshifted
        # g-side sheet to the upper; the shift by 2 pi cos(theta) is real.
        return ExtendedComplex(val if val.imag < 0 else val - shift)
    consts = pair_constants(theta)
    if r >= 1.0 - 1e-12:  # on the unit circle: side determined by the angle
        phi = abs(cmath.phase(w))
        if abs(phi - theta) <= 1e-12 and cmath.phase(w) > 0:
            # the corner e^{i theta}: value D or C by approach side
            if side == "right":
                return ExtendedComplex(consts.D)
            if side == "left":
                return ExtendedComplex(consts.C)
            raise AmbiguousBranchError("e^{i theta} needs side='right' (D) or 'left' (C)")
        return ExtendedComplex(val.real if phi <= theta else val.real - shift)
    if val.real >= consts.B - 1e-9:
        return ExtendedComplex(val.real)  # on the lower chord arc; h is analytic there
    if side is None:
        raise AmbiguousBranchError(
            "point lies on the branch cut; pass side='right' or side='left'"
        )
    if side == "right":
        return ExtendedComplex(val.real)
    if side == "left":
        return ExtendedComplex(val.real - shift)
    raise ValueError(f"unknown side {side!r}")


def _pair_map(theta: float, z, side: int) -> complex:
    """f (side=+1) or g (side=-1): solve h(w) = 1/z in the appropriate region."""
    z = as_point(z)
    if z.is_inf:
        u = 0.0 + 0.0j
    else:
        if z.value == 0:
            return 0.0 + 0.0j
        u = 1.0 / z.value
    if side > 0 and u.imag > 1e-12 * abs(u):
        raise PairDomainError("f_theta takes points of the closed upper half-plane")
    if side < 0 and u.imag < -1e-12 * abs(u):
        raise PairDomainError("g_theta takes points of the closed lower half-plane")
    zeta = _invert_H(theta, u, side)
    return _zeta_to_disk(zeta)


def f_theta(theta: float, z) -> complex:
    """The conformal map of the upper half-plane onto the (0,1)-side of the pair."""
    theta = _check_theta(theta)
    return _pair_map(theta, z, +1)


def g_theta(theta: float, z) -> complex:
    """The conformal map of the lower half-plane onto the (-1)-side of the pair."""
    theta = _check_theta(theta)
    return _pair_map(theta, z, -1)


def _in_circular_interval(x, lo, hi) -> bool:
    """Membership in the arc of the extended line from lo to hi through increase.

    The arc runs from lo upward, wrapping through infinity when lo > hi.
    """
    x = as_point(x)
    if x.is_inf:
        return lo > hi
    v = x.value.real
    if lo <= hi:
        return lo <= v <= hi
    return v >= lo or v <= hi


def pair_welding(theta: float, x) -> float:
    """The pair welding homeomorphism on [1/D, 1/B] (through infinity when D > 0).

    Identity on [0, 1/B]; the Moebius x -> x/((C-D)x + 1) on [1/D, 0].
    """
    theta = _check_theta(theta)
    k = pair_constants(theta)
    x = as_point(x)
    slack = 1e-12
    if not x.is_inf and -slack < x.value.real <= 1.0 / k.B + slack:
        if abs(x.value.imag) > slack:
            raise PairDomainError("welding argument must be real")
        return float(min(x.value.real, 1.0 / k.B))
    lo = 1.0 / k.D if k.D != 0 else math.inf
    if k.D > 0:
        in_left = x.is_inf or x.value.real >= lo - slack or x.value.real <= slack
    elif k.D < 0:
        in_left = (not x.is_inf) and lo - slack <= x.value.real <= slack
    else:
        in_left = x.is_inf or x.value.real <= slack
    if not in_left:
        raise PairDomainError(f"x outside the welding domain [1/D, 1/B] for theta={theta}")
    cd = k.C - k.D
    if x.is_inf:
        return 1.0 / cd
    v = x.value.real
    return v / (cd * v + 1.0)


def pair_jump(theta: float) -> float:
    """Jump of the pre-Schwarzian of the pair welding at 0: -4 pi cos(theta)."""
    theta = _check_theta(theta)
    return -4.0 * math.pi * math.cos(theta)


def pair_energy(theta: float) -> float:
    """Minimal chordal energy through e^{i theta}: -8 log sin(theta)."""
    theta = _check_theta(theta)
    return -8.0 * math.log(math.sin(theta))


def pair_residue(theta: float) -> float:
    """Residue of the Schwarzian of h at the vertex: C(h)(0) = -4 cos(theta).

    The closed form is stated in the source material for theta below pi/2;
    for theta above pi/2 this routine extends it by the same formula.
    """
    theta = _check_theta(theta)
    return -4.0 * math.cos(theta)


def energy_gradient_halfplane(z) -> complex:
    """Wirtinger derivative of the minimal energy -8 log(Im z / |z|) in (H; 0, inf)."""
    z = complex(z)
    if not z.imag > 0:
        raise PairDomainError("z must lie in the open upper half-plane")
    return -8.0 / (z - z.conjugate()) + 4.0 / z


def jump_relation_rhs(lambda_k: float, x_prev, x_k: float, x_next) -> float:
    """(x_k - x_prev)(x_next - x_k) lambda / (x_next - x_prev), with limits at infinity."""
    x_prev, x_next = as_point(x_prev), as_point(x_next)
    if x_prev.is_inf and x_next.is_inf:
        raise PairDomainError("at most one neighbor may be infinite")
    if x_prev.is_inf:
        return (x_next.value.real - x_k) * lambda_k
    if x_next.is_inf:
        return (x_k - x_prev.value.real) * lambda_k
    a, b = x_prev.value.real, x_next.value.real
    if not a < x_k < b:
        raise PairDomainError("neighbors must straddle the vertex")
    return (x_k - a) * (b - x_k) * lambda_k / (b - a)


def _jump_relation_lhs(theta: float) -> float:
    """2 pi / (theta - tan theta); continuous and increasing on (0, pi), 0 at pi/2."""
    if abs(theta - math.pi / 2.0) < 1e-15:
        return 0.0
    d = theta - math.tan(theta)
    if d == 0.0:  # theta below float resolution of tan: use the cubic term
        d = -(theta**3) / 3.0
    return 2.0 * math.pi / d


def theta_from_jump(lambda_k: float, x_prev, x_k: float, x_next) -> float:
    """The unique theta in (0, pi) solving the vertex jump relation.

    Inverts 2 pi/(theta - tan theta) = (x_k - x_prev)(x_next - x_k) lambda_k
    / (x_next - x_prev) using monotonicity of the left-hand side.
    """
    rhs = jump_relation_rhs(lambda_k, x_prev, x_k, x_next)
    if rhs == 0.0:
        return math.pi / 2.0
    if rhs >= 2.0:
        raise PairInversionError(f"no opening angle matches the jump (rhs={rhs})")
    lo, hi = 1e-12, math.pi - 1e-12
    if _jump_relation_lhs(lo) > rhs or _jump_relation_lhs(hi) < rhs:
        raise PairInversionError(f"jump relation out of range (rhs={rhs})")
    return brentq(
        lambda t: _jump_relation_lhs(t) - rhs, lo, hi, xtol=1e-15, rtol=8.9e-16
    )


def pair_curve_halfplane(theta: float, n_side: int = 1500, u_far: float = 1e6):
    """Sample the energy-minimizing chord of (H; 0, inf) through e^{i theta}.

    Returns complex samples ordered from the root at 0, refined near the root
    corner and geometrically toward the vertex and the truncated far end.
    Built from the explicit disk pair mapped by the Moebius map sending
    (e^{i theta}, e^{-i theta}, 0) to (0, inf, e^{i theta}).
    """
    import numpy as np

    theta = _check_theta(theta)
    k = pair_constants(theta)
    eith = cmath.exp(1j * theta)

    def to_halfplane(w):
        return (w - eith) / (w * eith - 1.0)

    # gamma_1 side: h-values run from D (chord base) down to -inf as x -> 0-.
    # Near the corner the boundary arc behaves like sqrt(D - u), so a
    # quadratic grid there spaces the curve samples evenly.
    m = int(0.35 * n_side)
    u_corner = k.D - 3.0 * np.linspace(0.0, 1.0, m + 1) ** 2
    u_tail = k.D - np.geomspace(3.0, k.D + u_far, n_side - m)
    u1 = np.concatenate([u_corner, u_tail[1:]])
    # gamma_2 side: h-values run from +inf (vertex) toward B (far end);
    # stop short of B, where the chord escapes to infinity.
    u2 = np.geomspace(u_far, k.B * (1.0 + 3e-3), n_side)
    pts = []
    for u in u1:
        zeta = _invert_H(theta, complex(u), +1)
        pts.append(to_halfplane(_zeta_to_disk(zeta)))
    pts.append(to_halfplane(0.0))
    for u in u2:
        zeta = _invert_H(theta, complex(u), +1)
        pts.append(to_halfplane(_zeta_to_disk(zeta)))
    out = np.asarray(pts)
    out[0] = out[0].real  # base point lands on the real axis exactly
    return out
