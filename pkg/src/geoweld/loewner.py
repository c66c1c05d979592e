"""Chordal Loewner transform, chordal energy, and loop energy.

Driving functions are piecewise linear in half-plane-capacity time, which
makes the Dirichlet energy (1/2) int W'(t)^2 dt an exact finite sum and the
scaling/concatenation identities exact.  Tracing and driving extraction both
use the vertical slit map per step; the loop energy of a Jordan curve is
computed from the Fourier coefficients of log|f'| and log|g'| on circles,
with Richardson extrapolation of the radius toward the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    pass


class StepSizeError(RuntimeError):
    pass


@dataclass(frozen=True)
class DrivingFunction:
    """Piecewise-linear driving: samples (t_i, W_i) with t_0 = 0, W_0 = 0."""

    t: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if t.ndim != 1 or t.shape != w.shape or len(t) < 2:
            raise ValueError("need matching 1-d sample arrays with at least two nodes")
        if abs(t[0]) > 1e-15 or abs(w[0]) > 1e-12:
            raise ValueError("driving must start at t = 0 with W(0) = 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("capacity times must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "w", w)

    @property
    def total_time(self) -> float:
        return float(self.t[-1])

    def __call__(self, s):
        return np.interp(s, self.t, self.w)

    def scaled(self, lam: float) -> "DrivingFunction":
        """The driving of the curve scaled by lam: t -> lam W(t / lam^2)."""
        if not lam > 0:
            raise ValueError("scale factor must be positive")
        return DrivingFunction(lam * lam * self.t, lam * self.w)

    def restricted(self, s: float) -> "DrivingFunction":
        """Restriction to [0, s] (s must not exceed the total time)."""
        if not 0.0 < s <= self.total_time:
            raise ValueError("restriction time out of range")
        keep = self.t < s
        t = np.append(self.t[keep], s)
        w = np.append(self.w[keep], self(s))
        return DrivingFunction(t, w)

    def tail(self, s: float) -> "DrivingFunction":
        """The shifted remainder t -> W(s + t) - W(s) on [0, T - s]."""
        if not 0.0 <= s < self.total_time:
            raise ValueError("tail time out of range")
        ws = self(s)
        keep = self.t > s
        t = np.concatenate(([0.0], self.t[keep] - s))
        w = np.concatenate(([0.0], self.w[keep] - ws))
        return DrivingFunction(t, w)

    def concatenated(self, other: "DrivingFunction") -> "DrivingFunction":
        t = np.concatenate((self.t, self.total_time + other.t[1:]))
        w = np.concatenate((self.w, self.w[-1] + other.w[1:]))
        return DrivingFunction(t, w)


@dataclass(frozen=True)
class TracedCurve:
    """Capacity-stamped samples of a simple curve in the closed upper half-plane."""

    points: np.ndarray
    capacities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=complex)
        c = np.asarray(self.capacities, dtype=float)
        if p.shape != c.shape or p.ndim != 1:
            raise ValueError("points and capacity stamps must be matching 1-d arrays")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "capacities", c)


def chordal_energy(drv: DrivingFunction) -> float:
    """Exact energy (1/2) sum (dW)^2/dt of a piecewise-linear driving."""
    dw = np.diff(drv.w)
    dt = np.diff(drv.t)
    return float(0.5 * np.sum(dw * dw / dt))


def _halfplane_sqrt(w, shift2):
    """sqrt(w^2 + shift2) with the branch mapping the closed half-plane to itself."""
    val = w * w + shift2
    r = np.sqrt(val.astype(complex))
    r = np.where(r.imag < 0, -r, r)
    on_axis = np.abs(r.imag) == 0.0
    flip = on_axis & (np.sign(r.real) != np.sign(w.real)) & (w.real != 0)
    return np.where(flip, -r, r)


def trace_from_driving(drv: DrivingFunction, dt: float) -> TracedCurve:
    """Trace the curve of a piecewise-linear driving by composing slit maps.

    Each substep of length at most dt uses the vertical slit map with the
    midpoint driving value, which is exact for piecewise-constant driving.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    times = [np.array([0.0])]
    for t0, t1 in zip(drv.t, drv.t[1:]):
        m = max(1, int(math.ceil((t1 - t0) / dt)))
        times.append(np.linspace(t0, t1, m + 1)[1:])
    tgrid = np.concatenate(times)
    wgrid = drv(tgrid)
    n = len(tgrid)

    pts = wgrid.astype(complex).copy()
    for k in range(n - 1, 0, -1):
        u = 0.5 * (wgrid[k - 1] + wgrid[k])
        delta = tgrid[k] - tgrid[k - 1]
        seg = pts[k:]
        mapped = u + _halfplane_sqrt(seg - u, -4.0 * delta)
        if np.any(~np.isfinite(mapped)):
            raise StepSizeError(
                f"slit step left the half-plane at index {k}; retry with dt <= {dt / 4}"
            )
        pts[k:] = mapped
    return TracedCurve(pts, tgrid)


def driving_from_trace(curve: TracedCurve | np.ndarray) -> DrivingFunction:
    """Recover the driving function of a sampled simple curve by unzipping.

    The curve must start at a real point; the output is normalized so that
    W(0) = 0.  Capacity stamps are recomputed from the unzipping (the input
    stamps, if any, are not trusted).
    """
    pts = curve.points if isinstance(curve, TracedCurve) else np.asarray(curve, dtype=complex)
    if len(pts) < 2:
        raise GeometryError("need at least two curve samples")
    if abs(pts[0].imag) > 1e-9 * max(1.0, abs(pts[0])):
        raise GeometryError("curve must start on the real line")
    if np.any(pts[1:].imag < -1e-12):
        raise GeometryError("curve must stay in the closed upper half-plane")
    q = (pts - pts[0].real).astype(complex)
    n = len(q)
    wvals = np.empty(n)
    tvals = np.empty(n)
    wvals[0] = 0.0
    tvals[0] = 0.0
    for k in range(1, n):
        a, b = q[k].real, q[k].imag
        if b <= 0.0:
            raise GeometryError(
                f"sample {k} is not in the open half-plane after unzipping; "
                "curve is not simple at this resolution"
            )
        wvals[k] = a
        tvals[k] = tvals[k - 1] + 0.25 * b * b
        if k < n - 1:
            q[k + 1 :] = a + _halfplane_sqrt(q[k + 1 :] - a, b * b)
    return DrivingFunction(tvals, wvals)


@dataclass(frozen=True)
class LoopEnergyInput:
    """Boundary data for the two-map loop energy formula.

    log|f'| sampled on interior circles (radii increasing toward 1) and
    log|g'| on exterior circles (radii decreasing toward 1), each on a
    uniform angular grid, plus the two scalars log|f'(0)| and log|g'(inf)|.
    """

    radii_inner: tuple
    log_fp_inner: tuple  # one array of angular samples per radius
    radii_outer: tuple
    log_gp_outer: tuple
    log_fp0: float
    log_gp_inf: float

    def __post_init__(self):
        ri = tuple(float(r) for r in self.radii_inner)
        ro = tuple(float(r) for r in self.radii_outer)
        if any(not 0 < r < 1 for r in ri) or any(np.diff(ri) <= 0):
            raise ValueError("inner radii must increase toward 1")
        if any(not r > 1 for r in ro) or any(np.diff(ro) >= 0):
            raise ValueError("outer radii must decrease toward 1")
        object.__setattr__(self, "radii_inner", ri)
        object.__setattr__(self, "radii_outer", ro)


def _dirichlet_partial(samples: np.ndarray) -> float:
    """Sum_n n |a_n|^2 for the harmonic extension sampled on one circle.

    For u = Re(sum a_n z^n) restricted to the circle, the Dirichlet energy of
    the sub-disk is exactly 4 sum_{n>=1} n |u_hat_n|^2.
    """
    u = np.asarray(samples, dtype=float)
    m = len(u)
    coeffs = np.fft.rfft(u) / m
    n = np.arange(1, len(coeffs))
    weights = np.full(len(coeffs) - 1, 4.0)
    if m % 2 == 0:
        weights[-1] = 1.0  # Nyquist coefficient is not doubled
    return float(np.sum(weights * n * np.abs(coeffs[1:]) ** 2))


def _extrapolate(ds, gaps):
    """Extrapolate D(gap) to gap -> 0 from a geometric ladder of gaps."""
    ds = list(ds)
    if len(ds) == 1:
        return ds[0]
    if len(ds) == 2:
        g0, g1 = gaps
        return ds[1] + (ds[1] - ds[0]) * g1 / (g0 - g1)
    d1, d2, d3 = ds[-3:]
    if (d3 - d2) > (d2 - d1) > 0 and (d3 - d2) > 0.5 * abs(d3):
        return math.inf  # accelerating growth toward the boundary
    return (d1 - 6.0 * d2 + 8.0 * d3) / 3.0


def loop_energy(inp: LoopEnergyInput) -> float:
    """Loop energy from the Dirichlet-plus-boundary-derivative formula.

    Returns +inf (a value, not an exception) when the radius extrapolation
    of either Dirichlet energy diverges.
    """
    d_in = [_dirichlet_partial(u) for u in inp.log_fp_inner]
    d_out = [_dirichlet_partial(u) for u in inp.log_gp_outer]
    df = _extrapolate(d_in, [1.0 - r for r in inp.radii_inner])
    dg = _extrapolate(d_out, [r - 1.0 for r in inp.radii_outer])
    if not (math.isfinite(df) and math.isfinite(dg)):
        return math.inf
    return df + dg + 4.0 * inp.log_fp0 - 4.0 * inp.log_gp_inf


def sample_loop_input(
    fprime,
    gprime,
    n_angles: int = 1024,
    inner_radii=(0.9, 0.95, 0.975),
    outer_radii=(1.0 / 0.9, 1.0 / 0.95, 1.0 / 0.975),
) -> LoopEnergyInput:
    """Build a LoopEnergyInput from derivative evaluators.

    `fprime` maps complex arrays in the unit disk to f' values; `gprime`
    likewise outside the closed disk (fixing infinity).  The scalars
    log|f'(0)| and log|g'(inf)| are recovered from circle means of log|.|,
    exact by harmonicity.
    """
    angles = 2.0 * math.pi * np.arange(n_angles) / n_angles
    ring = np.exp(1j * angles)
    logs_in, logs_out = [], []
    means_in, means_out = [], []
    for r in inner_radii:
        u = np.log(np.abs(fprime(r * ring)))
        logs_in.append(u)
        means_in.append(float(np.mean(u)))
    for r in outer_radii:
        u = np.log(np.abs(gprime(r * ring)))
        logs_out.append(u)
        means_out.append(float(np.mean(u)))
    return LoopEnergyInput(
        tuple(inner_radii),
        tuple(logs_in),
        tuple(outer_radii),
        tuple(logs_out),
        means_in[-1],
        means_out[-1],
    )
