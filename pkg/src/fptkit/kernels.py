"""Gaussian heat kernel, normal survival function, and singular-weight moments.

Everything in this module is a pure function of its arguments, usable on
scalars or numpy arrays.  The kernel follows the standard Brownian
convention Var(B_t - B_s) = t - s:

    G(x, t; r, s) = exp(-(x - r)^2 / (2 (t - s))) / sqrt(2 pi (t - s))

together with its spatial derivatives G_x, G_xx and the upper-tail normal
probability

    Psi(z) = int_z^inf exp(-u^2 / 2) / sqrt(2 pi) du.

The moment integrals at the bottom (`beta_moment`, `segment_weight`) are
what the product-integration quadrature uses to integrate weakly singular
weights (t - tau)^beta exactly against piecewise-linear co-factors.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

SQRT_TWO_PI = math.sqrt(2.0 * math.pi)

# exp() underflows to subnormals below roughly -745; treat anything past it
# as an exact zero so far-field kernel tails drop out of quadratures cleanly.
_EXP_UNDERFLOW = -745.0

# switch point between plain erfc and the scaled-erfcx evaluation of Psi
_PSI_TAIL_Z = 6.0


def _elapsed(t, s):
    """Validated t - s, positive elementwise."""
    dt = np.asarray(t, dtype=float) - np.asarray(s, dtype=float)
    if np.any(dt <= 0.0):
        raise ValueError("heat kernel requires t > s")
    return dt


def _exp_clipped(arg):
    """exp() that maps deep-underflow arguments to exact 0.0."""
    arg = np.asarray(arg, dtype=float)
    out = np.exp(np.maximum(arg, _EXP_UNDERFLOW))
    out = np.where(arg < _EXP_UNDERFLOW, 0.0, out)
    return out


def gaussian(x, t, r=0.0, s=0.0):
    """Heat kernel G(x, t; r, s) of standard Brownian motion.

    Strictly positive (or exactly 0.0 on deep underflow); raises
    ValueError when t <= s.
    """
    dt = _elapsed(t, s)
    dx = np.asarray(x, dtype=float) - np.asarray(r, dtype=float)
    val = _exp_clipped(-dx * dx / (2.0 * dt)) / np.sqrt(2.0 * math.pi * dt)
    return val if val.ndim else float(val)


def gaussian_dx(x, t, r=0.0, s=0.0):
    """Spatial derivative G_x(x, t; r, s) = -((x - r)/(t - s)) G."""
    dt = _elapsed(t, s)
    dx = np.asarray(x, dtype=float) - np.asarray(r, dtype=float)
    val = -(dx / dt) * _exp_clipped(-dx * dx / (2.0 * dt)) / np.sqrt(2.0 * math.pi * dt)
    return val if val.ndim else float(val)


def gaussian_dxx(x, t, r=0.0, s=0.0):
    """Second spatial derivative G_xx = ((x-r)^2/(t-s)^2 - 1/(t-s)) G.

    Satisfies the heat identity G_t = G_xx / 2 (checked by the test
    suite via finite differences).
    """
    dt = _elapsed(t, s)
    dx = np.asarray(x, dtype=float) - np.asarray(r, dtype=float)
    g = _exp_clipped(-dx * dx / (2.0 * dt)) / np.sqrt(2.0 * math.pi * dt)
    val = (dx * dx / (dt * dt) - 1.0 / dt) * g
    return val if val.ndim else float(val)


def psi(z):
    """Upper-tail standard normal probability Psi(z) = P(Z >= z).

    Evaluated as erfc(z / sqrt(2)) / 2 for moderate z and via the scaled
    complementary error function for z > 6, which keeps the result
    accurate in relative terms deep into the tail (until exp(-z^2/2)
    itself underflows).
    """
    z = np.asarray(z, dtype=float)
    arg = z / math.sqrt(2.0)
    with np.errstate(under="ignore"):
        head = 0.5 * special.erfc(arg)
        # clamp keeps the (discarded) erfcx branch finite where z <= 6
        tail = 0.5 * special.erfcx(np.maximum(arg, 0.0)) * _exp_clipped(-z * z / 2.0)
    val = np.where(z > _PSI_TAIL_Z, tail, head)
    return val if val.ndim else float(val)


def beta_moment(a1, a2, t):
    """Closed form of int_0^t tau^a1 (t - tau)^a2 dtau.

    Equal to B(1 + a1, 1 + a2) t^(1 + a1 + a2) with the Beta function
    evaluated through log-Gamma, so large exponents do not overflow.
    Requires a1 > -1, a2 > -1, t > 0.
    """
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(a1 <= -1.0) or np.any(a2 <= -1.0):
        raise ValueError("beta_moment requires exponents > -1")
    if np.any(t <= 0.0):
        raise ValueError("beta_moment requires t > 0")
    logbeta = special.gammaln(1.0 + a1) + special.gammaln(1.0 + a2) - special.gammaln(2.0 + a1 + a2)
    val = np.exp(logbeta) * t ** (1.0 + a1 + a2)
    return val if val.ndim else float(val)


def segment_weight(beta, t, a, b):
    """Exact subinterval moment int_a^b (t - tau)^beta dtau.

    Evaluates ((t-a)^(beta+1) - (t-b)^(beta+1)) / (beta + 1); the b = t
    endpoint is the plain limit (t-a)^(beta+1)/(beta+1).  Requires
    beta > -1 and a < b <= t, elementwise when a, b are arrays.
    """
    if beta <= -1.0:
        raise ValueError("segment_weight requires beta > -1")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a >= b) or np.any(b > t):
        raise ValueError("segment_weight requires a < b <= t")
    bp1 = beta + 1.0
    val = ((t - a) ** bp1 - (t - b) ** bp1) / bp1
    return val if val.ndim else float(val)
