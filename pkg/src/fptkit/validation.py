"""Residual and identity checks tying computed objects back to the theory.

Each check returns a `ResidualReport`; a report passes exactly when its
sup-residual is within tolerance.  The checks are deliberately routed
through quantities the solvers do *not* use directly:

* `master_residual` - the hitting distribution must satisfy
  Psi((z - r0)/sqrt(t)) = int_0^t Psi((z - X_s)/sqrt(t - s)) p(s) ds
  for every level z >= X_t;
* `heat_residual` - finite-difference heat-equation residual of any
  space-time field;
* `mass_conservation` - survival probability and hitting CDF must sum
  to one;
* `jump_check` - the boundary flux of the Green function must reproduce
  the density;
* `delta_convergence` - densities for shrinking smeared sources must
  approach the point-source density in the weighted sup norm
  sup_t t^(1-eta) |p_n(t) - p(t)|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .boundary import BoundaryCurve
from .green import GreenField, boundary_flux, survival
from .kernels import psi
from .solver import (
    DensityEstimate,
    SourceSpec,
    TimeGrid,
    _nodal_weights,
    solve_marching,
)


@dataclass(frozen=True)
class ResidualReport:
    """Outcome of one validation check (pass iff sup_residual <= tolerance)."""

    name: str
    points: tuple
    residuals: tuple
    sup_residual: float
    tolerance: float
    passed: bool = field(init=False)
    details: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "passed", bool(self.sup_residual <= self.tolerance))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "points": list(self.points),
            "residuals": list(self.residuals),
            "sup_residual": self.sup_residual,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "details": self.details,
        }


def master_residual(
    est: DensityEstimate,
    curve: BoundaryCurve,
    src: SourceSpec,
    z_offsets,
    times,
    tolerance: float = 2e-3,
) -> ResidualReport:
    """Residual of the hitting-distribution integral identity.

    For z = X_t + offset (offset >= 0) the true density satisfies

        Psi((z - r0)/sqrt(t)) = int_0^t Psi((z - X_s)/sqrt(t - s)) p(s) ds.

    The integrand is bounded; at the s -> t endpoint it tends to
    Psi(0) p(t) = p(t)/2 when offset = 0 (continuous boundaries) and to 0
    otherwise, and is evaluated by that limit.
    """
    if src.kind != "point":
        raise ValueError("master-equation residual requires a point source")
    offsets = [float(o) for o in z_offsets]
    if any(o < 0.0 for o in offsets):
        raise ValueError("offsets must be >= 0 (identity holds for z >= X_t)")
    nodes = est.grid.nodes
    pts = []
    res = []
    for t in times:
        t = float(t)
        if not 0.0 < t <= est.grid.T:
            raise ValueError("probe times must lie in (0, T]")
        part = nodes[nodes < t]
        part = np.concatenate([part, [t]])
        xb = np.asarray(curve.value(part))
        pv = np.interp(part, nodes, est.p)
        c = _nodal_weights(0.0, t, part)
        xt = float(curve.value(t))
        for off in offsets:
            z = xt + off
            arg = (z - xb[:-1]) / np.sqrt(t - part[:-1])
            phi = np.asarray(psi(arg)) * pv[:-1]
            endpoint = 0.5 * pv[-1] if off == 0.0 else 0.0
            integral = float(c[:-1] @ phi + c[-1] * endpoint)
            lhs = psi((z - src.r0) / math.sqrt(t))
            pts.append((t, off))
            res.append(abs(lhs - integral))
    sup = max(res) if res else 0.0
    return ResidualReport(
        name="master_equation",
        points=tuple(pts),
        residuals=tuple(res),
        sup_residual=sup,
        tolerance=tolerance,
    )


def heat_residual(
    fn,
    points,
    dx: float,
    dt_fd: float,
    tolerance: float = 1e-6,
    name: str = "heat_equation",
) -> ResidualReport:
    """Central-difference residual v_t - v_xx / 2 of a field (x, t) -> v.

    The caller guarantees the 5-point stencil stays inside the field's
    domain; any domain error raised by `fn` propagates.
    """
    pts = []
    res = []
    for x, t in points:
        v_t = (fn(x, t + dt_fd) - fn(x, t - dt_fd)) / (2.0 * dt_fd)
        v_xx = (fn(x + dx, t) - 2.0 * fn(x, t) + fn(x - dx, t)) / (dx * dx)
        pts.append((float(x), float(t)))
        res.append(abs(v_t - 0.5 * v_xx))
    sup = max(res) if res else 0.0
    return ResidualReport(
        name=name,
        points=tuple(pts),
        residuals=tuple(res),
        sup_residual=sup,
        tolerance=tolerance,
    )


def mass_conservation(
    fld: GreenField,
    times,
    tolerance: float = 2e-3,
) -> ResidualReport:
    """Residual of S(t) + F(t) = 1 (no probability mass is lost)."""
    pts = []
    res = []
    for t in times:
        t = float(t)
        s = survival(fld, t)
        f = fld.density.cdf(t)
        pts.append(t)
        res.append(abs(s + f - 1.0))
    sup = max(res) if res else 0.0
    return ResidualReport(
        name="mass_conservation",
        points=tuple(pts),
        residuals=tuple(res),
        sup_residual=sup,
        tolerance=tolerance,
    )


def jump_check(
    fld: GreenField,
    times,
    tolerance: float = 2e-2,
) -> ResidualReport:
    """Boundary flux versus density, relative to max(p(t), 1e-3).

    The one-sided derivative of the Green function at the boundary jumps
    by the layer density; the flux -1/2 G^X_x(X_t^-) must therefore equal
    p(t).
    """
    pts = []
    res = []
    for t in times:
        t = float(t)
        flux = boundary_flux(fld, t)
        p = fld.density.density_at(t)
        pts.append(t)
        res.append(abs(flux - p) / max(p, 1e-3))
    sup = max(res) if res else 0.0
    return ResidualReport(
        name="jump_relation",
        points=tuple(pts),
        residuals=tuple(res),
        sup_residual=sup,
        tolerance=tolerance,
    )


def delta_convergence(
    curve: BoundaryCurve,
    r0: float,
    widths,
    eta: float,
    grid: TimeGrid,
    ratio_tolerance: float = 0.5,
    solver=solve_marching,
) -> ResidualReport:
    """Smeared-to-point convergence study in the weighted sup norm.

    For each bump width w, solves with a unit-mass uniform bump of width
    w centered at r0 and computes

        ||p_w - p||_eta = sup_i t_i^(1-eta) |p_w(t_i) - p(t_i)|.

    Passes when the norm sequence is strictly decreasing along shrinking
    widths and the last/first ratio is within `ratio_tolerance`.
    A width of exactly 0 short-circuits to the point solve (norm 0).
    """
    if not 0.0 < eta < 0.5:
        raise ValueError("eta must lie in (0, 1/2)")
    x0 = curve.x0
    for w in widths:
        if w < 0.0:
            raise ValueError("bump widths must be >= 0")
        if w > 0.0 and r0 + w / 2.0 >= x0:
            raise ValueError("bump support must stay strictly below X_0")
    point_est = solver(SourceSpec.point(r0), curve, grid)
    ts = grid.nodes[1:]
    weight = ts ** (1.0 - eta)
    norms = []
    for w in widths:
        if w == 0.0:
            norms.append(0.0)
            continue
        est = solver(SourceSpec.uniform_bump(r0, float(w)), curve, grid)
        norms.append(float(np.max(weight * np.abs(est.p[1:] - point_est.p[1:]))))
    decreasing = all(b < a for a, b in zip(norms, norms[1:]))
    ratio = (norms[-1] / norms[0]) if norms and norms[0] > 0.0 else 0.0
    sup = ratio if decreasing else math.inf
    return ResidualReport(
        name="delta_convergence",
        points=tuple(float(w) for w in widths),
        residuals=tuple(norms),
        sup_residual=sup,
        tolerance=ratio_tolerance,
        details={"monotone_decreasing": decreasing, "eta": eta,
                 "ratio_last_to_first": ratio},
    )


def closed_form_linear(a: float, b: float, r: float, t):
    """Exact first-passage density through X_t = a + b t from r < a:

        f(t) = (a - r) / sqrt(2 pi t^3) exp(-(a + b t - r)^2 / (2 t)).
    """
    if r >= a:
        raise ValueError("closed form requires r < a")
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("closed form requires t > 0")
    val = (a - r) / np.sqrt(2.0 * math.pi * t ** 3) * np.exp(-((a + b * t - r) ** 2) / (2.0 * t))
    return val if val.ndim else float(val)
