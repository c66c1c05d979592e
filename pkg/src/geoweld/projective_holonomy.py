"""Holonomy, accessory parameters, ODE monodromy, and pi-grafting.

The projective structure attached to a piecewise geodesic curve has
holonomy generators phi_{k-1}^{-1} o phi_k read off the welding pieces.
Its quadratic differential has simple poles at the vertices with residues
c_k = lambda_k / (2 pi i f'(x_k)); the residues satisfy the three sum rules
expressing that the differential decays like w^{-4} at infinity.  The same
representation is recovered independently by integrating the second-order
equation u'' + (q/2) u = 0 around the poles, and Fuchsian data for the
punctured sphere reproduces the structures through pi-grafting.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import geodesic_pair as gp
from .moebius import INF, ExtendedComplex, MoebiusMap, as_point, classify
from .welding_chart import PiecewiseMoebius, normalize_welding
from .weld_solver import WeldedCurve, _fit_psi


class FuchsianDataError(ValueError):
    pass


class PathTooCloseError(ValueError):
    pass


class InconsistentHolonomyError(ValueError):
    pass


@dataclass(frozen=True)
class HolonomyRep:
    """Holonomy generators rho(eta_k), cyclically indexed from the marking."""

    generators: tuple  # n MoebiusMap values

    @property
    def n(self) -> int:
        return len(self.generators)

    def product(self) -> MoebiusMap:
        out = self.generators[0]
        for g in self.generators[1:]:
            out = out.compose(g)
        return out

    def traces(self) -> np.ndarray:
        return np.array([g.trace() for g in self.generators])

    def pair_traces(self) -> np.ndarray:
        gs = self.generators
        return np.array(
            [gs[i].compose(gs[j]).trace() for i in range(len(gs)) for j in range(i + 1, len(gs))]
        )


def holonomy(pm: PiecewiseMoebius) -> HolonomyRep:
    """Generators rho(eta_k) = phi_{k-1}^{-1} o phi_k of the welding holonomy.

    eta_k encircles the k-th marked point (0-based index k-1 into the
    breakpoints); the product over all generators telescopes to the
    identity exactly.
    """
    n = pm.n
    gens = []
    for k in range(n):
        right = pm.pieces[k]
        left = pm.pieces[(k - 1) % n]
        gens.append(left.inverse().compose(right))
    return HolonomyRep(tuple(gens))


# -- accessory parameters ---------------------------------------------------


@dataclass(frozen=True)
class QuadraticDifferential:
    """Simple poles and residues of the structure-comparison differential.

    Lives in the Moebius frame `frame` applied to the normalized curve
    coordinates, chosen so all poles are finite.
    """

    poles: tuple  # n finite complex points
    residues: tuple  # n complex residues
    frame: MoebiusMap
    sum_defects: tuple  # |sum c|, |sum c z|, |sum c z^2|

    @property
    def n(self) -> int:
        return len(self.poles)

    def to_json(self):
        return {
            "poles": [[p.real, p.imag] for p in self.poles],
            "residues": [[c.real, c.imag] for c in self.residues],
            "frame": self.frame.to_json(),
            "sum_defects": list(self.sum_defects),
        }

    @staticmethod
    def from_json(data) -> "QuadraticDifferential":
        return QuadraticDifferential(
            tuple(complex(*p) for p in data["poles"]),
            tuple(complex(*c) for c in data["residues"]),
            MoebiusMap.from_json(data["frame"]),
            tuple(data["sum_defects"]),
        )


class NormalizationRequiredError(ValueError):
    pass


def _fit_window(u: np.ndarray, curve: np.ndarray, window: float, cap: int = 1600):
    sub = (np.abs(u) <= window) & (np.abs(u) > 1e-12)
    uu = u[sub]
    zz = curve[sub]
    if len(uu) < 24:
        raise NormalizationRequiredError("not enough boundary samples in a vertex window")
    if len(uu) > cap:
        stride = len(uu) // cap + 1
        uu, zz = uu[::stride], zz[::stride]
    return uu, zz


def _transported_fprime(pm, welded, k, to_frame, window):
    """lambda_k and (M o f)'(x_k) via the factorization fit in frame M."""
    n = pm.n
    if k < n - 1:
        lam = pm.jump_at(k)
        xk = pm.breakpoints[k].value.real
        x_prev = pm.breakpoints[(k - 1) % n]
        x_next = pm.breakpoints[(k + 1) % n]
        theta = gp.theta_from_jump(lam, x_prev, xk, x_next)
        consts = gp.pair_constants(theta)
        alpha = MoebiusMap.from_three_points(
            (x_prev, xk, x_next), (1.0 / consts.D, 0.0, 1.0 / consts.B)
        )
        i0 = welded.vertex_indices[k]
        lo, hi = max(0, i0 - 8000), min(len(welded.x_params), i0 + 8000)
        u = alpha.apply_array(welded.x_params[lo:hi]).real
        uu, zz = _fit_window(u, welded.curve[lo:hi], window)
        deriv = alpha.derivative(xk)
    else:
        # vertex at x = infinity, in the chart s = -1/x
        lam = pm.jump_at(n - 1)
        x1 = pm.breakpoints[0].value.real
        theta = gp.theta_from_jump(lam, -1.0, 0.0, -1.0 / x1)
        consts = gp.pair_constants(theta)
        alpha = MoebiusMap.from_three_points(
            (-1.0, 0.0, -1.0 / x1), (1.0 / consts.D, 0.0, 1.0 / consts.B)
        )
        mask = np.abs(welded.x_params) > 2.0
        u = alpha.apply_array(-1.0 / welded.x_params[mask]).real
        uu, zz = _fit_window(u, welded.curve[mask], window)
        deriv = alpha.derivative(0.0)
    svals = np.array([gp.f_theta(theta, float(t)) for t in uu])
    _, prime, _ = _fit_psi(svals, to_frame(zz), degree=11)
    return lam, prime * deriv / 2j


def residues(
    welded: WeldedCurve, pm: PiecewiseMoebius | None = None, window: float = 0.3
) -> QuadraticDifferential:
    """Accessory parameters c_k = lambda_k/(2 pi i f'(x_k)) at all n vertices.

    Computed in the Moebius frame z -> 1/(z - c0) (c0 an interior point of
    the f-side component) that moves the curve point at infinity to a finite
    position, as the sum rules require; residues transport back to any other
    frame as a (1,0)-form.
    """
    pm = pm if pm is not None else welded.pm
    n = pm.n
    c0 = complex(welded.eval_f(np.array([2j]))[0])
    frame = MoebiusMap(0.0, 1.0, 1.0, -c0)

    def to_frame(z):
        return 1.0 / (z - c0)

    poles, res = [], []
    for k in range(n):
        lam, fpk = _transported_fprime(pm, welded, k, to_frame, window)
        res.append(lam / (2j * math.pi * fpk))
        poles.append(to_frame(complex(welded.vertices[k])) if k < n - 1 else 0.0)
    res = np.array(res)
    pl = np.array(poles)
    defects = (
        float(abs(np.sum(res))),
        float(abs(np.sum(res * pl))),
        float(abs(np.sum(res * pl**2))),
    )
    return QuadraticDifferential(tuple(pl), tuple(res), frame, defects)


# -- ODE monodromy -----------------------------------------------------------


def _segment_pole_distance(z0, z1, poles) -> float:
    seg = z1 - z0
    norm2 = abs(seg) ** 2
    if norm2 == 0:
        return float(np.min(np.abs(poles - z0)))
    t = np.clip(((poles - z0) * np.conj(seg)).real / norm2, 0.0, 1.0)
    return float(np.min(np.abs(poles - (z0 + t * seg))))


def _integrate_edge(t_fun, z0, z1, rtol, step_scale):
    seg = z1 - z0

    def rhs(s, y):
        t = t_fun(z0 + s * seg)
        return [seg * y[1], -seg * t * y[0], seg * y[3], -seg * t * y[2]]

    sol = solve_ivp(
        rhs,
        (0.0, 1.0),
        np.array([1, 0, 0, 1], dtype=complex),
        method="DOP853",
        rtol=rtol,
        atol=rtol * 1e-2,
        max_step=min(1.0, step_scale / max(abs(seg), 1e-300)),
    )
    if not sol.success:
        raise PathTooCloseError(f"monodromy integration failed: {sol.message}")
    y = sol.y[:, -1]
    return np.array([[y[0], y[2]], [y[1], y[3]]], dtype=complex)


def monodromy_matrices(
    qd: QuadraticDifferential, basepoint, loops, rtol: float = 1e-10
) -> list:
    """Monodromy of u'' + (q/2) u = 0 along explicit polygonal loops.

    Loops are closed node lists anchored at the basepoint.  Results are
    determinant-one MoebiusMap values; they are defined up to a global sign
    and a common conjugation.
    """
    poles = np.array(qd.poles, dtype=complex)
    resv = np.array(qd.residues, dtype=complex)
    min_gap = min(abs(p - q) for i, p in enumerate(poles) for q in poles[i + 1 :])
    margin = 0.05 * min_gap

    def t_fun(z):
        return 0.5 * np.sum(resv / (z - poles))

    out = []
    for path in loops:
        path = [complex(p) for p in path]
        if abs(path[0] - basepoint) > 1e-9 or abs(path[-1] - basepoint) > 1e-9:
            raise ValueError("every loop must start and end at the basepoint")
        mat = np.eye(2, dtype=complex)
        for z0, z1 in zip(path, path[1:]):
            d = _segment_pole_distance(z0, z1, poles)
            if d < margin:
                raise PathTooCloseError(
                    f"edge {z0:.4g}->{z1:.4g} passes {d:.3g} from a pole (margin {margin:.3g})"
                )
            mat = _integrate_edge(t_fun, z0, z1, rtol, 0.35 * d) @ mat
        det = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
        mat = mat / cmath.sqrt(det)
        out.append(MoebiusMap(mat[0, 0], mat[0, 1], mat[1, 0], mat[1, 1]))
    return out


def vertex_loops(qd: QuadraticDifferential, welded: WeldedCurve):
    """Marked polygonal loops around each pole, in the frame of `qd`.

    Builds offset fences along the two sides of the transported curve and
    routes the k-th loop from a fixed anchor through the arc before vertex
    k, around the pole on the far side, and back through the arc after it.
    Returns (basepoint, loops) with loops ordered like the holonomy
    generators.
    """
    poles = np.array(qd.poles, dtype=complex)
    n = len(poles)
    min_gap = min(abs(p - q) for i, p in enumerate(poles) for q in poles[i + 1 :])
    margin = 0.05 * min_gap

    a, b, c, d = qd.frame.a, qd.frame.b, qd.frame.c, qd.frame.d
    curve_t = (a * welded.curve + b) / (c * welded.curve + d)

    m = len(curve_t)
    stride = max(1, m // (160 + 16 * n))
    idx = np.arange(0, m, stride)
    nodes = curve_t[idx]
    dist = np.min(np.abs(nodes[:, None] - poles[None, :]), axis=1)
    keep = dist > 2.2 * margin
    idx, nodes, dist = idx[keep], nodes[keep], dist[keep]
    if len(nodes) < 4 * n:
        raise PathTooCloseError("too few usable fence nodes; raise the resolution")

    tang = np.roll(nodes, -1) - np.roll(nodes, 1)
    tang /= np.abs(tang)
    delta = np.minimum(0.4 * dist, 2.0 * min_gap)
    upper = nodes + 1j * tang * delta  # f-side of the traversal
    lower = nodes - 1j * tang * delta

    # map each original vertex to the nearest kept fence slot
    vslots = []
    for k in range(n - 1):
        vslots.append(int(np.searchsorted(idx, welded.vertex_indices[k])))
    vslots.append(len(idx))  # the infinity vertex sits at the array wrap
    K = len(idx)

    def arc_mid_slot(k):
        lo = vslots[k - 1] if k >= 1 else 0
        hi = vslots[k] if k < n else K
        if k == 0:
            lo, hi = 0, vslots[0]  # wrap arc before the first vertex
        if hi <= lo:
            raise PathTooCloseError("an arc has no usable fence nodes")
        return (lo + hi) // 2 % K

    def walk(side, i0, i1):
        i = i0
        out = [side[i % K]]
        while i % K != i1 % K:
            i += 1
            out.append(side[i % K])
        return out

    anchor = arc_mid_slot(n - 2)
    base = upper[anchor]
    loops = []
    for k in range(n):
        c1 = arc_mid_slot(k)  # arc entering vertex k
        c2 = arc_mid_slot(k + 1) if k + 1 <= n - 1 else arc_mid_slot(0)
        path = walk(upper, anchor, c1)
        path.append(lower[c1 % K])
        path.extend(walk(lower, c1, c2)[1:])
        path.append(upper[c2 % K])
        path.extend(walk(upper, c2, anchor)[1:])
        loops.append(path)
    return base, loops


def monodromy(qd: QuadraticDifferential, welded: WeldedCurve, rtol: float = 1e-10) -> HolonomyRep:
    """Monodromy generators around each pole, marked like the welding holonomy."""
    base, loops = vertex_loops(qd, welded)
    return HolonomyRep(tuple(monodromy_matrices(qd, base, loops, rtol)))


def psl2r_conjugated(rep: HolonomyRep, tol: float = 1e-7):
    """Conjugate a parabolic representation so three fixed points are 0, 1, inf.

    Returns (conjugated HolonomyRep, max |imaginary part| over entries).
    """
    fps = []
    for g in rep.generators[:3]:
        cl = classify(g, tol=tol)
        if cl.tag not in ("parabolic", "identity") or not cl.fixed_points:
            raise InconsistentHolonomyError("generator is not parabolic within tolerance")
        fps.append(cl.fixed_points[0])
    A = MoebiusMap.to_zero_one_inf(*fps)
    gens = tuple(g.conjugate_by(A) for g in rep.generators)
    worst = 0.0
    for g in gens:
        sign = 1.0 if abs(g.trace().real - 2) < abs(g.trace().real + 2) else -1.0
        for entry in (g.a, g.b, g.c, g.d):
            worst = max(worst, abs((sign * entry).imag))
    return HolonomyRep(gens), worst


# -- pi-grafting -------------------------------------------------------------


@dataclass(frozen=True)
class FuchsianData:
    """Parabolic generator system of a punctured-sphere Fuchsian group.

    `generators[k]` fixes `fixed_points[k]`; the fixed points are cyclically
    ordered on the extended real line and the ordered product of the
    generators is the identity.
    """

    cusps: tuple  # n sphere points (bookkeeping only)
    generators: tuple  # n real parabolic MoebiusMap values
    fixed_points: tuple  # n ExtendedComplex on the real line

    def __post_init__(self):
        n = len(self.generators)
        if not (len(self.cusps) == len(self.fixed_points) == n and n >= 3):
            raise FuchsianDataError("need n >= 3 matching cusps/generators/fixed points")
        object.__setattr__(self, "cusps", tuple(as_point(w) for w in self.cusps))
        object.__setattr__(self, "fixed_points", tuple(as_point(x) for x in self.fixed_points))
        prod = None
        for g, x in zip(self.generators, self.fixed_points):
            if not g.is_real(1e-9):
                raise FuchsianDataError("generators must be real Moebius maps")
            cl = classify(g, tol=1e-9)
            if cl.tag != "parabolic":
                raise FuchsianDataError(f"generator is {cl.tag}, not parabolic")
            if spherical_gap(cl.fixed_points[0], x) > 1e-8:
                raise FuchsianDataError("stated fixed point does not match the generator")
            prod = g if prod is None else prod.compose(g)
        if not prod.is_identity(1e-8):
            raise FuchsianDataError("generator product is not the identity")

    @property
    def n(self) -> int:
        return len(self.generators)


def spherical_gap(p, q) -> float:
    from .moebius import spherical_distance

    return spherical_distance(p, q)


def half_turn(p, q) -> MoebiusMap:
    """The order-two Moebius map rotating by pi about the geodesic (p, q)."""
    p, q = as_point(p), as_point(q)
    if p == q:
        raise FuchsianDataError("half turn needs two distinct fixed points")
    if p.is_inf or q.is_inf:
        x = q.value.real if p.is_inf else p.value.real
        return MoebiusMap(-1.0, 2.0 * x, 0.0, 1.0)
    x, y = p.value.real, q.value.real
    return MoebiusMap(x + y, -2.0 * x * y, 2.0, -(x + y))


def builtin_thrice_punctured() -> FuchsianData:
    """Level-two congruence generators for the thrice-punctured sphere."""
    A = MoebiusMap(1.0, 2.0, 0.0, 1.0)  # fixes inf
    B = MoebiusMap(1.0, 0.0, -2.0, 1.0)  # fixes 0
    C = B.inverse().compose(A.inverse())  # forced third, fixes 1
    return FuchsianData(
        cusps=(INF, ExtendedComplex(0.0), ExtendedComplex(1.0)),
        generators=(A, B, C),
        fixed_points=(INF, ExtendedComplex(0.0), ExtendedComplex(1.0)),
    )


def graft_holonomy(fd: FuchsianData) -> HolonomyRep:
    """Holonomy of the pi-grafted structure: S_{k-1} o rho_F(eta_k) o S_k.

    S_k is the half turn about the geodesic joining the fixed points of the
    k-th and (k+1)-th Fuchsian generators.
    """
    n = fd.n
    turns = [half_turn(fd.fixed_points[k], fd.fixed_points[(k + 1) % n]) for k in range(n)]
    gens = []
    for k in range(n):
        gens.append(turns[(k - 1) % n].compose(fd.generators[k]).compose(turns[k]))
    return HolonomyRep(tuple(gens))


def graft_welding(h: HolonomyRep, fd: FuchsianData):
    """Assemble the piecewise Moebius welding of the grafted structure.

    The piece on [x_1, x_2] is the identity and each subsequent piece
    composes one more holonomy generator; the result is normalized into
    chart coordinates.  Returns (chart, normalized PiecewiseMoebius).
    """
    n = fd.n
    pieces = [MoebiusMap.identity()]
    cur = MoebiusMap.identity()
    for k in range(1, n):
        cur = cur.compose(h.generators[k])
        pieces.append(cur)
    breakpoints = list(fd.fixed_points)
    for k, (p, x) in enumerate(zip(pieces, breakpoints)):
        val = p.apply(x)
        nxt = pieces[(k - 1) % n].apply(x)
        if spherical_gap(val, nxt) > 1e-8:
            raise InconsistentHolonomyError("assembled pieces do not match at a breakpoint")
    # rotate so the three pins land on the final slots
    try:
        return normalize_welding(tuple(breakpoints), tuple(pieces))
    except Exception as exc:
        raise InconsistentHolonomyError(f"assembled welding is not normalizable: {exc}")
