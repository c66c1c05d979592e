"""The global chart (x_k, lambda_k) on piecewise Moebius C1 weldings.

A chart fixes marked points x_1 < ... < x_{n-3} < 0 together with the pinned
triple 0, 1, infinity, and pre-Schwarzian jumps lambda_k at the free points.
`build_map` assembles the unique normalized C1 piecewise Moebius circle
homeomorphism with those jumps; `normalize_welding` inverts the process for
an arbitrary representative (used by the grafting routines and the
equivalence-class tests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .moebius import INF, ExtendedComplex, MoebiusMap, as_point

_INV = MoebiusMap(0.0, -1.0, 1.0, 0.0)  # x -> -1/x, orientation preserving chart at inf


class ChartError(ValueError):
    pass


class ChartOrderingError(ChartError):
    pass


class ChartConstraintError(ChartError):
    def __init__(self, index: int, lam: float, bound: float):
        super().__init__(
            f"lambda_{index} = {lam} violates the strict bound {bound} at x_{index}"
        )
        self.index = index
        self.lam = lam
        self.bound = bound


class DegenerateChartError(ChartError):
    pass


@dataclass(frozen=True)
class WeldingChart:
    """n marked points with free coordinates x (n-3 negatives) and jumps lam."""

    n: int
    x: tuple
    lam: tuple

    def __post_init__(self):
        if self.n < 3:
            raise ChartError("need at least three marked points")
        x = tuple(float(v) for v in self.x)
        lam = tuple(float(v) for v in self.lam)
        if len(x) != self.n - 3 or len(lam) != self.n - 3:
            raise ChartError(f"expected {self.n - 3} coordinates, got {len(x)}/{len(lam)}")
        if any(not (a < b) for a, b in zip(x, x[1:])) or (x and not x[-1] < 0.0):
            raise ChartOrderingError("x must satisfy x_1 < ... < x_{n-3} < 0")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "lam", lam)

    def to_json(self):
        return {"n": self.n, "x": list(self.x), "lambda": list(self.lam)}

    @staticmethod
    def from_json(data) -> "WeldingChart":
        return WeldingChart(int(data["n"]), tuple(data["x"]), tuple(data["lambda"]))


@dataclass(frozen=True)
class PiecewiseMoebius:
    """A piecewise Moebius circle homeomorphism with n marked breakpoints.

    `pieces[k]` acts on the arc from `breakpoints[k]` to `breakpoints[k+1]`
    (cyclically; arcs follow the positive orientation of the extended line).
    In normalized form the breakpoints are (x_1, ..., x_{n-3}, 0, 1, inf).
    """

    breakpoints: tuple  # ExtendedComplex entries, circularly ordered
    pieces: tuple  # MoebiusMap entries, real
    images: tuple = field(default=None)  # y_k = phi(x_k)

    def __post_init__(self):
        bps = tuple(as_point(b) for b in self.breakpoints)
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if len(bps) != len(self.pieces):
            raise ChartError("one piece per breakpoint arc required")
        if self.images is None:
            object.__setattr__(
                self, "images", tuple(self.pieces[k].apply(b) for k, b in enumerate(bps))
            )

    @property
    def n(self) -> int:
        return len(self.breakpoints)

    def segment_index(self, x) -> int:
        """Index of the arc whose closed span contains x (ties resolve right)."""
        x = as_point(x)
        for k, b in enumerate(self.breakpoints):
            if x == b:
                return k
        for k in range(self.n):
            if _on_arc(self.breakpoints[k], self.breakpoints[(k + 1) % self.n], x):
                return k
        raise ChartError(f"{x} not on the extended real line partition")

    def evaluate(self, x) -> ExtendedComplex:
        return self.pieces[self.segment_index(x)].apply(x)

    def jump_at(self, k: int) -> float:
        """Pre-Schwarzian jump (right minus left) at breakpoint k."""
        b = self.breakpoints[k]
        right = self.pieces[k]
        left = self.pieces[(k - 1) % self.n]
        if b.is_inf:
            r = right.conjugate_by(_INV)
            l = left.conjugate_by(_INV)
            return float((r.pre_schwarzian(0.0) - l.pre_schwarzian(0.0)).real)
        v = b.value.real
        return float((right.pre_schwarzian(v) - left.pre_schwarzian(v)).real)

    def check_c1(self, tol: float = 1e-9) -> float:
        """Max value/derivative mismatch across breakpoints; raises above tol."""
        worst = 0.0
        for k, b in enumerate(self.breakpoints):
            right = self.pieces[k]
            left = self.pieces[(k - 1) % self.n]
            if b.is_inf:
                right = right.conjugate_by(_INV)
                left = left.conjugate_by(_INV)
                v = 0.0
            else:
                v = b.value.real
            pr, pl = right.apply(v), left.apply(v)
            if pr.is_inf or pl.is_inf:
                raise ChartError(f"breakpoint {k} maps to infinity in the local chart")
            dv = abs(pr.value - pl.value)
            dd = abs(right.derivative(v) - left.derivative(v))
            scale = max(1.0, abs(pr.value))
            worst = max(worst, dv / scale, dd / max(1.0, abs(right.derivative(v))))
        if worst > tol:
            raise ChartError(f"pieces fail to match C1 at a breakpoint (defect {worst:.2e})")
        return worst

    def to_json(self):
        return {
            "breakpoints": [b.to_json() for b in self.breakpoints],
            "pieces": [p.to_json() for p in self.pieces],
        }

    @staticmethod
    def from_json(data) -> "PiecewiseMoebius":
        return PiecewiseMoebius(
            tuple(ExtendedComplex.from_json(b) for b in data["breakpoints"]),
            tuple(MoebiusMap.from_json(p) for p in data["pieces"]),
        )


def _on_arc(a: ExtendedComplex, b: ExtendedComplex, x: ExtendedComplex) -> bool:
    """x on the positively oriented closed arc from a to b on the extended line."""
    if x == a or x == b:
        return True
    if a.is_inf:  # arc (-inf, b]
        return (not x.is_inf) and x.value.real <= b.value.real
    if b.is_inf:  # arc [a, +inf]
        return x.is_inf or x.value.real >= a.value.real
    av, bv = a.value.real, b.value.real
    if av < bv:
        return (not x.is_inf) and av <= x.value.real <= bv
    return x.is_inf or x.value.real >= av or x.value.real <= bv


def _jet_translation(x_k: float, lam: float) -> MoebiusMap:
    """T_k: the Moebius map with T(x_k) = x_k, T'(x_k) = 1, T''(x_k) = lam."""
    return MoebiusMap(
        1.0 - 0.5 * lam * x_k,
        0.5 * lam * x_k * x_k,
        -0.5 * lam,
        1.0 + 0.5 * lam * x_k,
    )


def _constraint_bound(prefix: MoebiusMap, x_k: float, x_next: float) -> float:
    """Upper bound for lambda_k: 2/(x_{k+1}-x_k) - prefix''/prefix'(x_k)."""
    return 2.0 / (x_next - x_k) - prefix.pre_schwarzian(x_k).real


@dataclass(frozen=True)
class ChartValidation:
    ok: bool
    index: int = -1
    lam: float = math.nan
    bound: float = math.nan


def validate_chart(chart: WeldingChart) -> ChartValidation:
    """Check the strict jump inequalities; reports the first violated index."""
    xs = chart.x + (0.0,)
    prefix = MoebiusMap.identity()
    for k, lam in enumerate(chart.lam, start=1):
        x_k, x_next = xs[k - 1], xs[k]
        bound = _constraint_bound(prefix, x_k, x_next)
        if not lam < bound:
            return ChartValidation(False, k, lam, bound)
        prefix = prefix.compose(_jet_translation(x_k, lam))
    return ChartValidation(True)


def _closing_piece(v0: float, d0: float) -> MoebiusMap:
    """The Moebius map with m(0)=v0, m'(0)=d0>0, m'(1)=1, no pole on [0,1].

    Two maps satisfy the endpoint conditions; the increasing one is selected
    by m(0) < m(1).
    """
    if not d0 > 0:
        raise DegenerateChartError("prefix derivative must stay positive")
    d = 1.0 / math.sqrt(d0)
    picked = None
    for c in (1.0 - d, -1.0 - d):
        b = v0 * d
        a = (1.0 + b * c) / d
        m = MoebiusMap(a, b, c, d)
        if abs(m.c) > 1e-15:
            pole = -(m.d / m.c).real
            if 0.0 <= pole <= 1.0:
                continue
        m1 = m.apply(1.0)
        if m1.is_inf or not v0 < m1.value.real:
            continue
        if picked is not None:
            raise ChartError("closing piece selection is ambiguous")
        picked = m
    if picked is None:
        raise ChartError("no valid closing piece; chart is degenerate")
    return picked


def build_map(chart: WeldingChart) -> PiecewiseMoebius:
    """Assemble the normalized piecewise Moebius homeomorphism of a chart."""
    xs = chart.x + (0.0,)
    prefix = MoebiusMap.identity()
    raw = []  # pieces of the unnormalized map on (x_1,x_2), ..., (x_{n-3},0)
    for k, lam in enumerate(chart.lam, start=1):
        x_k, x_next = xs[k - 1], xs[k]
        bound = _constraint_bound(prefix, x_k, x_next)
        if not lam < bound:
            raise ChartConstraintError(k, lam, bound)
        prefix = prefix.compose(_jet_translation(x_k, lam))
        raw.append(prefix)

    at0 = prefix.apply(0.0)
    if at0.is_inf:
        raise DegenerateChartError("prefix maps 0 to infinity; cannot close the chart")
    v0 = at0.value.real
    d0 = prefix.derivative(0.0).real
    close1 = _closing_piece(v0, d0)
    v1 = close1.apply(1.0).value.real
    close2 = MoebiusMap.affine(1.0, v1 - 1.0)

    if not v1 > v0:
        raise ChartError("normalization failed: phi(1) <= phi(0)")
    norm = MoebiusMap.affine(1.0 / (v1 - v0), -v0 / (v1 - v0))

    pieces = [norm.compose(p) for p in raw]
    pieces.append(norm.compose(close1))
    pieces.append(norm.compose(close2))
    pieces.append(norm)  # wrap piece (inf, x_1): the unnormalized identity

    breakpoints = [ExtendedComplex(v) for v in chart.x] + [
        ExtendedComplex(0.0),
        ExtendedComplex(1.0),
        INF,
    ]
    pm = PiecewiseMoebius(tuple(breakpoints), tuple(pieces))
    _check_poles(pm)
    pm.check_c1()
    return pm


def _check_poles(pm: PiecewiseMoebius):
    for k in range(pm.n):
        p = pm.pieces[k]
        scale = max(abs(p.a), abs(p.b), abs(p.d), 1.0)
        if abs(p.c) <= 1e-9 * scale:
            continue  # affine up to roundoff; pole is an artifact
        pole = ExtendedComplex((-p.d / p.c).real)
        a, b = pm.breakpoints[k], pm.breakpoints[(k + 1) % pm.n]
        if not _on_arc(a, b, pole):
            continue
        pv = pole.value.real
        near_end = any(
            (not e.is_inf) and abs(pv - e.value.real) <= 1e-9 * max(1.0, abs(pv))
            for e in (a, b)
        )
        if not near_end:
            raise ChartError(f"piece {k} has a pole inside its arc")


def evaluate(pm: PiecewiseMoebius, x) -> ExtendedComplex:
    """Value of the piecewise map at a point of the extended real line."""
    return pm.evaluate(x)


def jump_at(pm: PiecewiseMoebius, k: int) -> float:
    """Pre-Schwarzian jump at breakpoint k (0-based into pm.breakpoints)."""
    return pm.jump_at(k)


def extract_chart(pm: PiecewiseMoebius) -> WeldingChart:
    """Chart coordinates of a normalized piecewise map."""
    n = pm.n
    xs = []
    for b in pm.breakpoints[: n - 3]:
        xs.append(b.value.real)
    lams = [pm.jump_at(k) for k in range(n - 3)]
    return WeldingChart(n, tuple(xs), tuple(lams))


def normalize_welding(breakpoints, pieces) -> tuple:
    """Bring an arbitrary C1 piecewise Moebius tuple to normalized form.

    Pre- and post-composes with the Moebius maps fixing the last three
    breakpoints to (0, 1, inf) and their images likewise, then re-extracts
    the chart.  Returns (chart, normalized PiecewiseMoebius).
    """
    pm = PiecewiseMoebius(tuple(breakpoints), tuple(pieces))
    n = pm.n
    if n < 3:
        raise ChartError("need at least three breakpoints")
    for p in pm.pieces:
        if not p.is_real(1e-9):
            raise ChartError("pieces must be real Moebius maps")
    b_pins = pm.breakpoints[n - 3 :]
    y_pins = pm.images[n - 3 :]
    beta = MoebiusMap.to_zero_one_inf(*b_pins).inverse()
    alpha = MoebiusMap.to_zero_one_inf(*y_pins)
    if not (beta.is_real(1e-9) and alpha.is_real(1e-9)):
        raise ChartOrderingError("pinned triples are not positively ordered")
    beta_inv = beta.inverse()
    new_bps = tuple(beta_inv.apply(b) for b in pm.breakpoints)
    new_pieces = tuple(alpha.compose(p).compose(beta) for p in pm.pieces)
    out = PiecewiseMoebius(new_bps, new_pieces)
    xs = [b.value.real for b in new_bps[: n - 3]]
    if any(not (a < b) for a, b in zip(xs, xs[1:])) or (xs and not xs[-1] < 0.0):
        raise ChartOrderingError("normalized breakpoints are not ordered")
    out.check_c1()
    _check_poles(out)
    return extract_chart(out), out
