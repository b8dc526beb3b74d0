"""Dirichlet Green function of the heat equation on the moving domain.

Once the first-passage density p is known, the killed transition density
(the Green function with absorbing condition on the boundary) is the
free kernel minus the mass re-emitted from the boundary:

    G^X(r0, x, t) = G(x, t; r0, 0) - int_0^t G(x, t; X_tau, tau) p(tau) dtau

Everything else here derives from that representation: the survival
probability S(t) = int_{-inf}^{X_t} G^X dx, the smeared solution u(x, t)
for a distributed initial condition h, and the boundary flux
-1/2 d/dx G^X|_{X_t^-}, which must reproduce p itself.

The time integral has a (t - tau)^(-1/2) endpoint weight from the Gaussian
prefactor; it is product-integrated on the density grid with the last
segment refined geometrically toward tau = t so the boundary layer of the
exponential factor is always resolved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .boundary import BoundaryCurve
from .kernels import SQRT_TWO_PI, gaussian, psi
from .solver import (
    DensityEstimate,
    SourceSpec,
    _nodal_weights,
    problem_fingerprint,
)

#: composite Gauss-Legendre panel count for the survival integral
SURVIVAL_PANELS = 256
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True, eq=False)
class GreenField:
    """Green-function evaluator bound to one (curve, source, density) triple."""

    curve: BoundaryCurve
    src: SourceSpec
    density: DensityEstimate

    def __post_init__(self):
        expected = problem_fingerprint(self.src, self.curve, self.density.grid)
        if self.density.fingerprint != expected:
            raise ValueError(
                "density fingerprint does not match this (curve, source) pair"
            )

    @property
    def horizon(self) -> float:
        return self.density.grid.T


#: geometric ratio of the tail refinement; four nodes per octave keeps the
#: piecewise-linear error of exp(-c/(t-tau)) layers below ~1e-3 relative
_TAIL_RATIO = 2.0 ** 0.25


def _time_partition(nodes: np.ndarray, t: float) -> np.ndarray:
    """Density-grid nodes below t plus a geometric tail refinement.

    The tail nodes shrink the distance to t by `_TAIL_RATIO` per step so
    that integrands with an exp(-c / (t - tau)) boundary layer are
    resolved at every scale down to ~1e-14 relative.
    """
    base = nodes[nodes < t]
    if len(base) == 0:
        base = np.array([0.0])
    w = t - base[-1]
    floor = 1e-14 * max(t, 1.0)
    extras = []
    while w / _TAIL_RATIO > floor:
        w /= _TAIL_RATIO
        extras.append(t - w)
    return np.concatenate([base, np.asarray(extras), [t]])


def _eval_batch(field: GreenField, xs: np.ndarray, t: float) -> np.ndarray:
    """G^X(x, t) for an array of x at a common time t."""
    if not 0.0 < t <= field.horizon:
        raise ValueError(f"Green function defined for 0 < t <= {field.horizon}")
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    curve, density = field.curve, field.density

    part = _time_partition(density.grid.nodes, t)
    xb = np.asarray(curve.value(part))
    pv = np.interp(part, density.grid.nodes, density.p)
    xt = float(curve.value(t))

    # bounded co-factor phi(tau) = exp(-(x - X_tau)^2 / (2 (t - tau))) p(tau) / sqrt(2 pi);
    # the tau = t column is the limit: 0 off the boundary, 1 * p(t) on it.
    dt = t - part[:-1]
    expo = np.exp(-((xs[:, None] - xb[None, :-1]) ** 2) / (2.0 * dt[None, :]))
    last = np.where(xs == xt, 1.0, 0.0)
    phi = np.concatenate([expo, last[:, None]], axis=1) * pv[None, :] / SQRT_TWO_PI

    c = _nodal_weights(-0.5, t, part)
    emitted = phi @ c

    if field.src.kind == "point":
        free = np.asarray(gaussian(xs, t, field.src.r0, 0.0))
    else:
        free = _smeared_free_term(field.src, xs, t)
    return free - emitted


def _smeared_free_term(src: SourceSpec, xs: np.ndarray, t: float) -> np.ndarray:
    """int h(xi) G(x, t; xi, 0) dxi per x, adaptive over each linear piece."""
    out = np.zeros(len(xs))
    for i, x in enumerate(xs):
        total = 0.0
        for lo, hi in zip(src.knots_x[:-1], src.knots_x[1:]):
            val, _ = integrate.quad(
                lambda xi: src.density(xi) * gaussian(x, t, xi, 0.0),
                lo, hi, epsabs=1e-12, epsrel=1e-10, limit=200,
            )
            total += val
        out[i] = total
    return out


def green_eval(field: GreenField, x: float, t: float) -> float:
    """Green function G^X at a single point (diagnostic values >= X_t are ~0)."""
    return float(_eval_batch(field, np.array([float(x)]), t)[0])


def survival(field: GreenField, t: float) -> float:
    """Survival probability P(tau > t) = int_{-inf}^{X_t} G^X(x, t) dx.

    Composite 8-point Gauss-Legendre panels over a 12-standard-deviation
    window below the boundary, cosine-clustered toward X_t where the
    integrand vanishes linearly; the analytic tail of the free kernel
    below the window (at most Psi(12) ~ 2e-33) is added back.
    """
    if not 0.0 < t <= field.horizon:
        raise ValueError(f"survival defined for 0 < t <= {field.horizon}")
    curve = field.curve
    xt = float(curve.value(t))
    x_lo = xt - 12.0 * math.sqrt(t) - abs(field.src.support_lower - curve.x0)

    j = np.arange(SURVIVAL_PANELS + 1)
    bounds = x_lo + (xt - x_lo) * np.sin(0.5 * math.pi * j / SURVIVAL_PANELS)
    mid = 0.5 * (bounds[1:] + bounds[:-1])
    half = 0.5 * (bounds[1:] - bounds[:-1])
    xs = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    ws = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()

    total = float(_eval_batch(field, xs, t) @ ws)
    total += psi((field.src.support_lower - x_lo) / math.sqrt(t))
    return min(max(total, 0.0), 1.0)


def boundary_flux(field: GreenField, t: float, eps: float | None = None) -> float:
    """Density recovered from the boundary: -1/2 d/dx G^X at x = X_t^-.

    One-sided second-order difference using offsets {0, eps, 2 eps}
    strictly inside the domain (the field is identically zero outside, so
    a centered stencil would straddle the kink).
    """
    if not 0.0 < t <= field.horizon:
        raise ValueError(f"flux defined for 0 < t <= {field.horizon}")
    if eps is None:
        eps = max(1e-4, math.sqrt(t) * 1e-3)
    xt = float(field.curve.value(t))
    f = _eval_batch(field, np.array([xt, xt - eps, xt - 2.0 * eps]), t)
    deriv = (3.0 * f[0] - 4.0 * f[1] + f[2]) / (2.0 * eps)
    return -0.5 * deriv


def smeared_solution(
    curve: BoundaryCurve,
    h: SourceSpec,
    density_h: DensityEstimate,
    x: float,
    t: float,
) -> float:
    """Solution u(x, t) of the moving-boundary heat problem with initial datum h.

    u is the h-weighted Green function; via the single-layer representation
    it equals the free evolution of h minus the boundary emission driven by
    the smeared density p_h.  `density_h` must have been solved for exactly
    this source (fingerprint-checked).
    """
    if h.kind != "smeared":
        raise ValueError("smeared_solution requires a smeared source")
    field = GreenField(curve=curve, src=h, density=density_h)
    return green_eval(field, x, t)
