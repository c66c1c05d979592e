"""Numerical conformal welding of piecewise Moebius circle homeomorphisms.

Given a normalized welding phi (from `welding_chart`), this module produces
the conformal maps f of the upper and g of the lower half-plane whose
boundary values satisfy g(phi(x)) = f(x), together with the welded Jordan
curve, the vertex images, and the boundary derivatives f'(x_k).

The scheme is a sewing zipper.  Matched sample pairs (x_i, phi(x_i)) are
placed on the two half-plane boundaries; the piece of phi containing
[1, inf] is sewn exactly by a Moebius change of variable, after which the
state lives in a single half-plane: the unsewn f-side boundary occupies the
negative reals, the unsewn g-side the positive reals, and the seam grows
from the tip at 0.  Each remaining pair is sewn by the elementary two-point
slit map

    w -> i sqrt(-(w - A)(w - B)),       A < 0 < B,

which pinches A and B onto the new tip at 0 and folds the interval between
them onto a vertical slit (the new piece of seam).  A geometric tail of
pairs covers the wrap piece through infinity (affine on both sides, so the
residual pairing is symmetric to machine precision) and the square map
-w^2 closes the sphere.  Vertex derivatives come from the geodesic-pair
factorization f = psi o f_theta o alpha fitted on rings of curve samples,
never from differencing through the vertex singularity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is expected in production
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

from . import geodesic_pair as gp
from .moebius import INF, ExtendedComplex, MoebiusMap
from .welding_chart import PiecewiseMoebius

# Span of the wrap-piece tail, balancing the closing-asymmetry error (~1/span)
# against float cancellation in the final frame (~span * eps).
_TAIL_SPAN = 2.0**24
_TAIL_RATIO = 1.22


class ResolutionError(RuntimeError):
    pass


class NormalizationRequiredError(ValueError):
    pass


def _cluster_grid(a: float, b: float, m: int, stagger: float = 0.0) -> np.ndarray:
    """m+1 nodes on [a, b] clustered quadratically at both ends."""
    t = np.linspace(0.0, 1.0, m + 1)
    if stagger:
        t[1:-1] = t[1:-1] + stagger * (t[2:] - t[1:-1])
    return a + (b - a) * (t - np.sin(2.0 * math.pi * t) / (2.0 * math.pi))


def _fold_c(w, a, b):
    return 1j * np.sqrt(-((w - a) * (w - b)))


@njit(cache=True)
def _sew_kernel(xi, eta, xim, etam, curve_rev, gf, gg, seam, correct, mob_ops, use_mob):
    """Sequential sewing loop: midpoint-corrected two-point slit folds.

    Mutates all arrays in place; records the correction coefficients per
    step.  Returns the index of a degenerate step, or -1 on success.

    The plain fold identifies t with t' when tau(t) tau(t') = 1 where
    tau = (t - a)/(t - b); rescaling tau by mu shifts the product to
    1/mu^2, which is matched to the measured midpoint pair of each gap.
    """
    m = xi.shape[0]
    for s in range(m):
        j = m - 1 - s
        a = xi[j]
        b = eta[j]
        if not (a < 0.0 < b) or not (np.isfinite(a) and np.isfinite(b)):
            return j
        if correct[j]:
            tf = xim[j]
            tg = etam[j]
            if a < tf < 0.0 < tg < b:
                kappa = ((tf - a) * (tg - a)) / ((tf - b) * (tg - b))
                if 0.25 < kappa < 4.0:
                    mu = 1.0 / np.sqrt(kappa)
                    if abs(mu - 1.0) > 1e-15:
                        tstar = (b - a * mu) / (1.0 - mu)
                        guard = max(abs(xi[0]), -a, b)
                        if abs(tstar) >= 50.0 * guard:
                            ma = a - b * mu
                            mb = -a * b * (1.0 - mu)
                            mc = 1.0 - mu
                            md = -(b - a * mu)
                            mob_ops[s, 0] = ma
                            mob_ops[s, 1] = mb
                            mob_ops[s, 2] = mc
                            mob_ops[s, 3] = md
                            use_mob[s] = True
                            for i in range(j):
                                xi[i] = (ma * xi[i] + mb) / (mc * xi[i] + md)
                                eta[i] = (ma * eta[i] + mb) / (mc * eta[i] + md)
                                xim[i] = (ma * xim[i] + mb) / (mc * xim[i] + md)
                                etam[i] = (ma * etam[i] + mb) / (mc * etam[i] + md)
                            for i in range(s):
                                curve_rev[i] = (ma * curve_rev[i] + mb) / (
                                    mc * curve_rev[i] + md
                                )
                            for i in range(gf.shape[0]):
                                gf[i] = (ma * gf[i] + mb) / (mc * gf[i] + md)
                                gg[i] = (ma * gg[i] + mb) / (mc * gg[i] + md)
                            for i in range(seam.shape[0]):
                                seam[i] = (ma * seam[i] + mb) / (mc * seam[i] + md)
        for i in range(j):
            xi[i] = -np.sqrt((xi[i] - a) * (xi[i] - b))
            eta[i] = np.sqrt((eta[i] - a) * (eta[i] - b))
            xim[i] = -np.sqrt((xim[i] - a) * (xim[i] - b))
            etam[i] = np.sqrt((etam[i] - a) * (etam[i] - b))
        for i in range(s):
            curve_rev[i] = 1j * np.sqrt(-((curve_rev[i] - a) * (curve_rev[i] - b)))
        for i in range(gf.shape[0]):
            gf[i] = 1j * np.sqrt(-((gf[i] - a) * (gf[i] - b)))
            gg[i] = 1j * np.sqrt(-((gg[i] - a) * (gg[i] - b)))
        for i in range(seam.shape[0]):
            seam[i] = 1j * np.sqrt(-((seam[i] - a) * (seam[i] - b)))
        mob_ops[s, 4] = a
        mob_ops[s, 5] = b
        # curve_rev[s] stays 0: the sewn pair is the new tip
    return -1


@dataclass
class WeldedCurve:
    """Solution of a welding problem: curve samples, vertices, derivatives.

    `x_params` lists the f-side boundary parameters of the sewn samples in
    ascending order; `curve` holds their images, which trace the Jordan
    curve through the vertices in the frame normalized by z_{n-2}, z_{n-1},
    z_n = 0, 1, inf (the curve point at infinity is implicit).  `y_params`
    are the matched g-side parameters phi(x).
    """

    pm: PiecewiseMoebius
    x_params: np.ndarray
    y_params: np.ndarray
    curve: np.ndarray
    vertices: tuple  # n sphere points, last is INF
    vertex_indices: tuple  # index into x_params per finite-x vertex
    fprime: np.ndarray  # f'(x_k) in this frame; the x_n = inf entry stays nan
    defect: float
    orientation_ccw: bool = True
    _stage: dict = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return len(self.vertices)

    def _push(self, w, dw=None):
        st = self._stage
        for op in st["ops"]:
            if len(op) == 2:
                a, b = op
                root = np.sqrt(-((w - a) * (w - b)))
                if dw is not None:
                    dw = dw * (1j * (-(2.0 * w - a - b)) / (2.0 * root))
                w = 1j * root
            else:
                ma, mb, mc, md = op
                den = mc * w + md
                if dw is not None:
                    dw = dw * (ma * md - mb * mc) / (den * den)
                w = (ma * w + mb) / den
        if dw is not None:
            dw = dw * (-2.0 * w) * st["slope"]
        w = (-w * w - st["p0"]) * st["slope"]
        return (w, dw) if dw is not None else w

    def eval_f(self, z, deriv: bool = False):
        """f(z) (and f'(z)) for z in the open upper half-plane."""
        z = np.asarray(z, dtype=complex)
        root = np.sqrt(z - 1.0)
        if deriv:
            return self._push(1j * root, 1j / (2.0 * root))
        return self._push(1j * root)

    def eval_g(self, z, deriv: bool = False):
        """g(z) (and g'(z)) for z in the open lower half-plane."""
        z = np.asarray(z, dtype=complex)
        q = self._stage["p_last_inv"]
        den = q.c * z + q.d
        s = (q.a * z + q.b) / den
        root = np.sqrt(s - 1.0)
        if deriv:
            return self._push(1j * root, 1j / (den * den) / (2.0 * root))
        return self._push(1j * root)

    def to_json(self):
        return {
            "samples": [[p.real, p.imag] for p in self.curve],
            "x_params": [float(v) for v in self.x_params],
            "y_params": [float(v) for v in self.y_params],
            "vertices": [v.to_json() for v in self.vertices],
            "fprime": [
                [v.real, v.imag] if np.isfinite(v) else None for v in self.fprime
            ],
            "defect": self.defect,
            "orientation_ccw": self.orientation_ccw,
        }


def _welded_pairs(pm: PiecewiseMoebius, xq: np.ndarray) -> np.ndarray:
    """phi(x) for interior points xq (each strictly inside one piece)."""
    breaks = np.array([b.value.real for b in pm.breakpoints[:-1]])
    yq = np.empty_like(xq)
    seg = np.searchsorted(breaks, xq)  # 0 means the wrap piece
    seg = np.where(seg == 0, pm.n, seg) - 1
    for p in np.unique(seg):
        sel = seg == p
        yq[sel] = pm.pieces[int(p)].apply_array(xq[sel]).real
    return yq


def _sample_plan(pm: PiecewiseMoebius, resolution: int, stagger: float):
    """f-side parameters and their welded images, grouped by piece.

    Returns (xs, ys) ascending with xs < 1, and (xs_up, ys_up) on the
    exactly sewn piece [1, inf), xs_up[0] = 1.
    """
    n = pm.n
    bps = [b.value.real for b in pm.breakpoints[: n - 1]]  # x_1..x_{n-3}, 0, 1
    x1 = bps[0]
    scale = max(1.0, abs(x1))
    # near tail: a refining grid over a few scale lengths of the wrap piece;
    # far tail: geometric out to the span (its slack is suppressed by the
    # spherical metric and the affine-exact pairing out there)
    span1 = 4.0 * (scale + 1.0)
    near = _cluster_grid(0.0, span1, resolution // 2, stagger)[1:]
    # beyond that, uniform in the natural chart s = 1/gap down to the span
    sgrid = np.linspace(1.0 / span1, 1.0 / (_TAIL_SPAN * scale), resolution // 2)[1:]
    tail_gaps = np.concatenate([near, 1.0 / sgrid])
    tail = np.sort(x1 - tail_gaps)
    xs_parts = [tail]
    ys_parts = [pm.pieces[n - 1].apply_array(tail).real]  # wrap piece
    for i, (a, b) in enumerate(zip(bps, bps[1:])):
        grid = _cluster_grid(a, b, resolution, stagger)
        if i:
            grid = grid[1:]  # left node shared with the previous piece
        xs_parts.append(grid)
        ys_parts.append(pm.pieces[i].apply_array(grid).real)
    xs = np.concatenate(xs_parts)
    ys = np.concatenate(ys_parts)
    keep = xs < 1.0
    xs_up = np.concatenate([[1.0], 1.0 + tail_gaps])
    ys_up = pm.pieces[n - 2].apply_array(xs_up).real
    ys_up[0] = 1.0
    return xs[keep], ys[keep], xs_up, ys_up


def solve_welding(
    pm: PiecewiseMoebius, resolution: int = 256, stagger: float = 0.0
) -> WeldedCurve:
    """Solve the conformal welding problem for a normalized piecewise map.

    `resolution` counts samples per finite arc (>= 64 advised).  `stagger`
    in [0, 0.5) shifts the sample placement, for placement-independence
    tests.

    Near the vertices each fold is corrected by the Moebius map fixing its
    pinch points whose multiplier matches the true welding at the gap
    midpoint; this keeps the vertex neighborhoods (which feed the derivative
    fits) an order more accurate than the generic arcs.
    """
    n = pm.n
    if not pm.breakpoints[-1].is_inf:
        raise NormalizationRequiredError("welding must be normalized (last breakpoint inf)")
    p_last = pm.pieces[n - 2]  # on (1, inf); affine since it fixes inf
    p_last_inv = p_last.inverse()

    xs, ys, xs_up, ys_up = _sample_plan(pm, resolution, stagger)
    m = len(xs)

    # gap midpoints: gap j runs from xs[j] to xs[j+1] (to 1.0 for the last)
    xmid = 0.5 * (np.append(xs, 1.0)[:-1] + np.append(xs, 1.0)[1:])
    ymid = _welded_pairs(pm, xmid)
    # quarter points of every 8th gap, for the consistency defect
    gsel = slice(0, m - 1, 8)
    xq = (0.75 * xs[:-1] + 0.25 * xs[1:])[gsel]
    yq = _welded_pairs(pm, xq)

    # vertex-adjacent gaps get the midpoint-corrected fold
    correct = np.zeros(m, dtype=bool)
    width = max(8, resolution // 4)
    for b in pm.breakpoints[:-1]:
        i = int(np.searchsorted(xs, b.value.real))
        correct[max(0, i - width) : min(m, i + width)] = True
    correct[xs < pm.breakpoints[0].value.real - 1.0] = True  # whole wrap tail
    correct[-1] = True

    # initial half-plane frame
    xi = -np.sqrt(1.0 - xs)
    eta = np.sqrt(1.0 - p_last_inv.apply_array(ys).real)
    xi_mid = -np.sqrt(1.0 - xmid)
    eta_mid = np.sqrt(1.0 - p_last_inv.apply_array(ymid).real)
    # ghosts carry a tiny positive imaginary part so every branch choice
    # downstream sees an honest interior point
    ghost_f = -np.sqrt(1.0 - xq) + 1e-150j
    ghost_g = np.sqrt(1.0 - p_last_inv.apply_array(yq).real) + 1e-150j
    seam_up = (1j * np.sqrt(xs_up - 1.0)).astype(complex)  # exact seam, x >= 1

    curve_rev = np.zeros(m, dtype=complex)  # sewn-pair positions, sew order
    mob_ops = np.zeros((m, 6))
    use_mob = np.zeros(m, dtype=bool)
    bad = _sew_kernel(
        xi, eta, xi_mid, eta_mid, curve_rev, ghost_f, ghost_g, seam_up,
        correct, mob_ops, use_mob,
    )
    if bad >= 0:
        raise ResolutionError(f"zipper degeneracy at sample {bad}")
    ops = []
    for s in range(m):
        if use_mob[s]:
            ops.append(tuple(mob_ops[s, :4]))
        ops.append((mob_ops[s, 4], mob_ops[s, 5]))

    # close the sphere and return to ascending-x order
    curve = (-curve_rev * curve_rev)[::-1]
    ghost_f = -ghost_f * ghost_f
    ghost_g = -ghost_g * ghost_g
    seam_up = -seam_up * seam_up

    idx0 = int(np.searchsorted(xs, 0.0))
    if idx0 >= m or abs(xs[idx0]) > 1e-12:
        raise ResolutionError("breakpoint 0 missing from the sample set")
    p0 = curve[idx0]
    p1 = seam_up[0]  # exact image of the breakpoint at 1
    slope = 1.0 / (p1 - p0)
    curve = (curve - p0) * slope
    ghost_f = (ghost_f - p0) * slope
    ghost_g = (ghost_g - p0) * slope
    seam_up = (seam_up - p0) * slope

    num = 2.0 * np.abs(ghost_f - ghost_g)
    den = np.sqrt((1.0 + np.abs(ghost_f) ** 2) * (1.0 + np.abs(ghost_g) ** 2))
    defect = float(np.max(num / den)) if len(num) else 0.0

    x_all = np.concatenate([xs, xs_up])
    y_all = np.concatenate([ys, ys_up])
    curve_all = np.concatenate([curve, seam_up])
    curve_all[idx0] = 0.0
    curve_all[m] = 1.0

    vertices = []
    vertex_indices = []
    for k in range(n - 1):
        v = pm.breakpoints[k].value.real
        idx = int(np.searchsorted(x_all, v))
        if abs(x_all[idx] - v) > 1e-12 * max(1.0, abs(v)):
            raise ResolutionError(f"breakpoint {v} missing from the sample set")
        vertex_indices.append(idx)
        vertices.append(ExtendedComplex(curve_all[idx]))
    vertices.append(INF)

    welded = WeldedCurve(
        pm=pm,
        x_params=x_all,
        y_params=y_all,
        curve=curve_all,
        vertices=tuple(vertices),
        vertex_indices=tuple(vertex_indices),
        fprime=np.full(n, np.nan + 0j, dtype=complex),
        defect=defect,
        _stage={"ops": ops, "p_last_inv": p_last_inv, "p0": p0, "slope": slope},
    )
    for k in range(n - 1):
        welded.fprime[k] = vertex_factorization(pm, welded, k).fprime
    welded.orientation_ccw = _orientation(welded)
    return welded


def _orientation(welded: WeldedCurve) -> bool:
    """True when the marked points run counterclockwise around f(H)."""
    c = complex(welded.eval_f(np.array([0.5 + 1j]))[0])
    w = 1.0 / (welded.curve[:: max(1, len(welded.curve) // 800)] - c)
    area = float(np.sum(np.imag(np.conj(w[:-1]) * np.diff(w))))
    return area > 0


@dataclass(frozen=True)
class VertexFactorization:
    """Local model f = psi o f_theta o alpha at a vertex."""

    k: int
    theta: float
    alpha: MoebiusMap
    psi_value: complex
    psi_prime: complex
    psi_second: complex
    fprime: complex


def _ring_indices(idx: int, uvals: np.ndarray, window: float, skip: int = 3) -> np.ndarray:
    """Sample indices with parameter |alpha(x)| inside (0, window], both sides."""
    out = []
    for step in (-1, +1):
        taken = 0
        i = idx + step * skip
        while 0 <= i < len(uvals) and abs(uvals[i]) <= window and taken < 80:
            out.append(i)
            taken += 1
            i += step
        if taken < 5:
            raise ResolutionError("not enough samples around a vertex for the jet fit")
    return np.array(sorted(out), dtype=int)


def _fit_psi(svals: np.ndarray, zvals: np.ndarray, degree: int = 5):
    """Least-squares jet of psi from psi(s) ~ z over a ring of samples."""
    scale = np.max(np.abs(svals))
    s = svals / scale
    A = np.column_stack([s**p for p in range(degree + 1)])
    coef, *_ = np.linalg.lstsq(A, zvals, rcond=None)
    return coef[0], coef[1] / scale, 2.0 * coef[2] / scale**2


def vertex_factorization(
    pm: PiecewiseMoebius, welded: WeldedCurve, k: int, window: float = 0.12
) -> VertexFactorization:
    """Factorization data and f'(x_k) at the k-th breakpoint (finite x_k)."""
    n = pm.n
    if k == n - 1 or pm.breakpoints[k].is_inf:
        raise NormalizationRequiredError(
            "the vertex at x = inf needs a transported frame; see residues()"
        )
    lam = pm.jump_at(k)
    xk = pm.breakpoints[k].value.real
    x_prev = pm.breakpoints[(k - 1) % n]
    x_next = pm.breakpoints[(k + 1) % n]
    theta = gp.theta_from_jump(lam, x_prev, xk, x_next)
    consts = gp.pair_constants(theta)
    alpha = MoebiusMap.from_three_points(
        (x_prev, xk, x_next), (1.0 / consts.D, 0.0, 1.0 / consts.B)
    )
    idx = welded.vertex_indices[k]
    lo = max(0, idx - 200)
    hi = min(len(welded.x_params), idx + 200)
    uvals = np.full(len(welded.x_params), np.inf)
    uvals[lo:hi] = alpha.apply_array(welded.x_params[lo:hi]).real
    ring = _ring_indices(idx, uvals, window)
    svals = np.array([gp.f_theta(theta, float(uvals[i])) for i in ring])
    value, prime, second = _fit_psi(svals, welded.curve[ring])
    fprime = prime * alpha.derivative(xk) / 2j
    return VertexFactorization(k, theta, alpha, value, prime, second, fprime)


def welding_consistency(welded: WeldedCurve, pm: PiecewiseMoebius | None = None) -> float:
    """Max spherical distance between f(x) and g(phi(x)) over midpoint samples."""
    return welded.defect
