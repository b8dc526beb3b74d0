"""Volterra solvers for the first-passage density through a moving boundary.

For a standard Brownian motion started at r0 below a Hölder-gamma boundary
X_t (gamma > 1/2), the first-passage density p solves the second-kind
Volterra equation

    p(t) = -G_x(X_t, t; r0, 0) + int_0^t G_x(X_t, t; X_tau, tau) p(tau) dtau

whose kernel is weakly singular: G_x along the boundary is bounded by
C (t - tau)^(gamma - 3/2).  Both solvers below factor the kernel as

    G_x(X_t, t; X_tau, tau) = kappa(t, tau) (t - tau)^(gamma - 3/2)

with kappa bounded, and integrate the singular weight exactly against a
piecewise-linear interpolant of kappa * p (product integration) on a
graded time grid:

* `solve_marching` steps forward node by node, solving the scalar
  equation for p(t_i) in closed form (the diagonal weight multiplies the
  unknown);
* `solve_picard` fixed-point iterates the same discrete system on
  successive time windows sized so the integral operator is a certified
  contraction, freezing history integrals as windows complete.

Both return the same discrete solution (the marching recurrence is the
exact fixed point of the Picard sweeps), which makes their nodewise
agreement a useful internal consistency check.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .boundary import BoundaryCurve, estimate_holder
from .kernels import SQRT_TWO_PI, _exp_clipped, gaussian_dx, segment_weight

#: density values may dip this far below zero before we call it an error
TOL_NEG = 1e-8

#: marching fails when the implicit diagonal coefficient drops below this
MIN_DIAGONAL = 0.1


class SolverError(RuntimeError):
    """A solve could not be completed (grid too coarse, no convergence)."""


# ---------------------------------------------------------------------------
# grid and sources
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Graded partition t_i = T (i/N)^q of [0, T].

    q = 1 is uniform; q > 1 clusters nodes near t = 0 where the source
    term varies fastest.
    """

    T: float
    N: int
    q: float = 2.0
    nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.T <= 0.0:
            raise ValueError("grid horizon T must be positive")
        if self.N < 8:
            raise ValueError("grid needs N >= 8 intervals")
        if self.q < 1.0:
            raise ValueError("grading power q must be >= 1")
        nodes = self.T * (np.arange(self.N + 1) / self.N) ** self.q
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("grid nodes are not strictly increasing (q too large for N)")
        nodes.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)


@dataclass(frozen=True, eq=False)
class SourceSpec:
    """Initial condition: a point mass at r0 or a piecewise-linear density h.

    Smeared sources are non-negative piecewise-linear densities on a
    compact support [knots_x[0], knots_x[-1]] with unit mass; the support
    must lie strictly below the boundary start X_0 (checked at solve
    time, when the curve is known).
    """

    kind: str
    r0: float | None = None
    knots_x: np.ndarray | None = field(default=None, repr=False)
    knots_y: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind == "point":
            if self.r0 is None or not math.isfinite(self.r0):
                raise ValueError("point source needs a finite r0")
        elif self.kind == "smeared":
            x, y = self.knots_x, self.knots_y
            if x is None or y is None or len(x) != len(y) or len(x) < 2:
                raise ValueError("smeared source needs matching knot arrays, length >= 2")
            if np.any(np.diff(x) <= 0.0):
                raise ValueError("smeared source knots must be strictly increasing")
            if np.any(y < 0.0):
                raise ValueError("smeared source density must be non-negative")
            mass = float(np.trapezoid(y, x))
            if abs(mass - 1.0) > 1e-10:
                raise ValueError(f"smeared source mass is {mass!r}, must be 1 within 1e-10")
        else:
            raise ValueError(f"unknown source kind {self.kind!r}")

    @classmethod
    def point(cls, r0: float) -> "SourceSpec":
        return cls(kind="point", r0=float(r0))

    @classmethod
    def smeared(cls, knots_x, knots_y) -> "SourceSpec":
        x = np.ascontiguousarray(knots_x, dtype=float)
        y = np.ascontiguousarray(knots_y, dtype=float)
        x.flags.writeable = False
        y.flags.writeable = False
        return cls(kind="smeared", knots_x=x, knots_y=y)

    @classmethod
    def uniform_bump(cls, center: float, width: float) -> "SourceSpec":
        """Uniform density of total mass 1 on [center - width/2, center + width/2]."""
        if width <= 0.0:
            raise ValueError("bump width must be positive")
        h = 1.0 / width
        return cls.smeared([center - width / 2.0, center + width / 2.0], [h, h])

    @property
    def support_upper(self) -> float:
        """Highest point carrying source mass."""
        return self.r0 if self.kind == "point" else float(self.knots_x[-1])

    @property
    def support_lower(self) -> float:
        return self.r0 if self.kind == "point" else float(self.knots_x[0])

    def density(self, xi):
        """Evaluate the smeared density h (zero outside its support)."""
        if self.kind != "smeared":
            raise ValueError("density() is only defined for smeared sources")
        xi = np.asarray(xi, dtype=float)
        val = np.interp(xi, self.knots_x, self.knots_y)
        val = np.where((xi < self.knots_x[0]) | (xi > self.knots_x[-1]), 0.0, val)
        return val if val.ndim else float(val)


# ---------------------------------------------------------------------------
# density estimates
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class DensityEstimate:
    """Grid-indexed first-passage density with its accumulated CDF."""

    grid: TimeGrid
    p: np.ndarray
    F: np.ndarray
    method: str
    gamma: float
    fingerprint: str = ""
    residual_summary: dict | None = None

    def __post_init__(self):
        n = len(self.grid.nodes)
        if len(self.p) != n or len(self.F) != n:
            raise ValueError("p and F must have one value per grid node")
        if self.p[0] != 0.0:
            raise ValueError("density must vanish at t = 0")
        if float(np.min(self.p)) < -TOL_NEG:
            raise ValueError("density has negative values beyond quadrature noise")
        if np.any(np.diff(self.F) < -1e-12):
            raise ValueError("CDF must be non-decreasing")
        if float(self.F[-1]) > 1.0 + 1e-6:
            raise ValueError("CDF exceeds 1 beyond tolerance")

    def density_at(self, t):
        """Piecewise-linear interpolation of p on the grid."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0) or np.any(t > self.grid.T):
            raise ValueError("density evaluated outside [0, T]")
        val = np.interp(t, self.grid.nodes, self.p)
        return val if val.ndim else float(val)

    def cdf(self, t):
        """Piecewise-linear interpolation of F, clamped to [0, 1]."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0) or np.any(t > self.grid.T):
            raise ValueError("CDF evaluated outside [0, T]")
        val = np.clip(np.interp(t, self.grid.nodes, self.F), 0.0, 1.0)
        return val if val.ndim else float(val)

    # -- serialization --------------------------------------------------

    def to_csv(self, path) -> None:
        """Write `t,p,F` rows at 17 significant digits (double round-trip)."""
        with open(path, "w") as fh:
            fh.write("t,p,F\n")
            for t, p, f in zip(self.grid.nodes, self.p, self.F):
                fh.write(f"{t:.17g},{p:.17g},{f:.17g}\n")

    def metadata(self) -> dict:
        return {
            "grid": {"T": self.grid.T, "N": self.grid.N, "q": self.grid.q},
            "method": self.method,
            "gamma": self.gamma,
            "fingerprint": self.fingerprint,
            "residual_summary": self.residual_summary,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_files(cls, csv_path, json_path) -> "DensityEstimate":
        """Rehydrate an estimate from its CSV + JSON pair."""
        with open(json_path) as fh:
            meta = json.load(fh)
        data = np.loadtxt(csv_path, delimiter=",", skiprows=1)
        grid = TimeGrid(T=meta["grid"]["T"], N=int(meta["grid"]["N"]), q=meta["grid"]["q"])
        if not np.allclose(data[:, 0], grid.nodes, rtol=0.0, atol=1e-12):
            raise ValueError("density CSV nodes do not match the grid metadata")
        return cls(grid=grid, p=data[:, 1], F=data[:, 2], method=meta["method"],
                   gamma=meta["gamma"], fingerprint=meta.get("fingerprint", ""),
                   residual_summary=meta.get("residual_summary"))


def cdf_at(est: DensityEstimate, t):
    """First-passage CDF F(t) = int_0^t p, interpolated on the grid."""
    return est.cdf(t)


def problem_fingerprint(src: SourceSpec, curve: BoundaryCurve, grid: TimeGrid) -> str:
    """Content hash tying a density estimate to its (source, curve, grid)."""
    h = hashlib.sha256()
    parts = [curve.kind, repr(curve.gamma), repr(curve.a), repr(curve.b), repr(curve.theta)]
    if curve.kind == "sampled":
        parts += [curve.knots_t.tobytes().hex(), curve.knots_x.tobytes().hex()]
    parts.append(src.kind)
    if src.kind == "point":
        parts.append(repr(src.r0))
    else:
        parts += [src.knots_x.tobytes().hex(), src.knots_y.tobytes().hex()]
    parts += [repr(grid.T), repr(grid.N), repr(grid.q)]
    h.update("|".join(parts).encode())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# equation ingredients
# ---------------------------------------------------------------------------


def source_term(src: SourceSpec, curve: BoundaryCurve, t: float) -> float:
    """Forcing term of the Volterra equation at time t > 0.

    Point source: -G_x(X_t, t; r0, 0).  Smeared source:
    -int h(xi) G_x(X_t, t; xi, 0) dxi by adaptive quadrature over the
    support of h (absolute tolerance 1e-10).
    """
    if t <= 0.0:
        raise ValueError("source term requires t > 0")
    xt = curve.value(t)
    if src.kind == "point":
        return -gaussian_dx(xt, t, src.r0, 0.0)
    total = 0.0
    for lo, hi in zip(src.knots_x[:-1], src.knots_x[1:]):
        val, _ = integrate.quad(
            lambda xi: -src.density(xi) * gaussian_dx(xt, t, xi, 0.0),
            lo, hi, epsabs=1e-10, epsrel=1e-10, limit=200,
        )
        total += val
    return total


def kernel_k(curve: BoundaryCurve, t: float, tau: float) -> float:
    """Bounded kernel co-factor kappa(t, tau).

    The Volterra kernel G_x(X_t, t; X_tau, tau) equals
    kappa(t, tau) (t - tau)^(gamma - 3/2) with

        kappa = -(X_t - X_tau) / (t - tau)^gamma
                * exp(-(X_t - X_tau)^2 / (2 (t - tau))) / sqrt(2 pi)

    which stays bounded by m / sqrt(2 pi) on Hölder-(gamma, m) curves.
    """
    if not 0.0 <= tau < t:
        raise ValueError("kernel requires 0 <= tau < t")
    dt = t - tau
    dx = curve.value(t) - curve.value(tau)
    return float(-(dx / dt ** curve.gamma) * _exp_clipped(-dx * dx / (2.0 * dt)) / SQRT_TWO_PI)


def _kappa_row(t_i, x_i, ts, xs, gamma):
    """kappa(t_i, tau) at nodes tau = ts < t_i, vectorized."""
    dt = t_i - ts
    dx = x_i - xs
    return -(dx / dt ** gamma) * _exp_clipped(-dx * dx / (2.0 * dt)) / SQRT_TWO_PI


def _diagonal_kappa(ts, xs, gamma):
    """Diagonal limit of kappa at each node i >= 1.

    Uses the one-sided difference quotient of the boundary over the last
    subinterval in place of the (possibly degenerate) analytic limit; the
    exponential factor tends to 1 for gamma > 1/2.
    """
    out = np.zeros(len(ts))
    d = np.diff(ts)
    out[1:] = -(np.diff(xs) / d ** gamma) / SQRT_TWO_PI
    return out


def _nodal_weights(beta, t_end, ts):
    """Product-integration coefficients for int (t_end - tau)^beta f(tau) dtau.

    `ts` is a strictly increasing partition ending at t_end; f is taken
    piecewise linear with nodal values f(ts).  Returns one coefficient
    per node, built from exact moments of the weight on each segment.
    """
    a, b = ts[:-1], ts[1:]
    m0 = segment_weight(beta, t_end, a, b)
    m1 = segment_weight(beta + 1.0, t_end, a, b)
    dt = b - a
    rem = t_end - ts
    wl = (m1 - rem[1:] * m0) / dt
    wr = (rem[:-1] * m0 - m1) / dt
    c = np.zeros(len(ts))
    c[:-1] += wl
    c[1:] += wr
    return c


def _source_vector(src, curve, ts):
    g = np.zeros(len(ts))
    if src.kind == "point":
        xt = np.asarray(curve.value(ts[1:]))
        g[1:] = -gaussian_dx(xt, ts[1:], src.r0, 0.0)
    else:
        for i, t in enumerate(ts[1:], start=1):
            g[i] = source_term(src, curve, float(t))
    return g


def _validate_problem(src, curve, grid):
    if curve.gamma <= 0.5:
        raise ValueError("solver requires Hölder exponent gamma > 1/2")
    if grid.T > curve.horizon:
        raise ValueError("grid horizon exceeds the boundary's domain")
    x0 = curve.x0
    if src.kind == "point":
        if not src.r0 < x0:
            raise ValueError(f"source r0={src.r0} must lie strictly below X_0={x0}")
    else:
        if not src.support_upper < x0:
            raise ValueError("smeared source support must lie strictly below X_0")


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------


def solve_marching(src: SourceSpec, curve: BoundaryCurve, grid: TimeGrid) -> DensityEstimate:
    """Time-marching product-integration solve of the density equation.

    Marches i = 1..N; at each node the history integral uses piecewise-
    linear interpolation of kappa * p against exact weight moments, the
    final (singular) subinterval couples the unknown p(t_i) through the
    diagonal kappa limit, and the resulting scalar linear relation is
    solved in closed form.  Fails if the diagonal coefficient
    1 - w_ii kappa_ii drops below 0.1 (grid too coarse for the boundary).
    """
    _validate_problem(src, curve, grid)
    gamma = curve.gamma
    beta = gamma - 1.5
    ts = grid.nodes
    xs = np.asarray(curve.value(ts))
    g = _source_vector(src, curve, ts)
    kdiag = _diagonal_kappa(ts, xs, gamma)

    p = np.zeros(len(ts))
    min_diag = math.inf
    for i in range(1, len(ts)):
        c = _nodal_weights(beta, ts[i], ts[: i + 1])
        kap = _kappa_row(ts[i], xs[i], ts[:i], xs[:i], gamma)
        diag = 1.0 - c[i] * kdiag[i]
        min_diag = min(min_diag, diag)
        if diag < MIN_DIAGONAL:
            raise SolverError(
                f"diagonal coefficient {diag:.3g} below {MIN_DIAGONAL} at node {i}"
                " (t={:.6g}); refine the grid".format(ts[i])
            )
        p[i] = (g[i] + (c[:i] * kap) @ p[:i]) / diag

    F = _trapezoid_cdf(ts, p)
    return DensityEstimate(
        grid=grid, p=p, F=F, method="marching", gamma=gamma,
        fingerprint=problem_fingerprint(src, curve, grid),
        residual_summary={"min_diagonal": min_diag},
    )


def solve_picard(
    src: SourceSpec,
    curve: BoundaryCurve,
    grid: TimeGrid,
    safety: float = 0.5,
    max_iter: int = 200,
    tol: float = 1e-10,
) -> DensityEstimate:
    """Windowed Picard iteration for the density equation.

    [0, T] is split into windows of length L such that the a-priori
    contraction estimate C1 L^(gamma - 1/2) <= safety, where
    C1 = m / (sqrt(2 pi) (gamma - 1/2)) and m is the scanned local
    Hölder constant (the exponential kernel factor is bounded by 1).
    Within a window the discrete system is fixed-point iterated until
    successive sup-norm differences fall below `tol`; history integrals
    over completed windows are frozen.
    """
    _validate_problem(src, curve, grid)
    gamma = curve.gamma
    ts = grid.nodes
    n = len(ts)
    m = estimate_holder(curve, (0.0, grid.T)).m
    if m == 0.0:
        window_len = math.inf
    else:
        c1 = m / (SQRT_TWO_PI * (gamma - 0.5))
        window_len = (safety / c1) ** (1.0 / (gamma - 0.5))

    A = _build_matrix(curve, grid)
    g = _source_vector(src, curve, ts)

    p = np.zeros(n)
    windows = []
    lo = 0
    while lo < n - 1:
        hi = int(np.searchsorted(ts, ts[lo] + window_len, side="right")) - 1
        hi = max(hi, lo + 1)
        hi = min(hi, n - 1)
        sl = slice(lo + 1, hi + 1)
        rhs = g[sl] + A[sl, : lo + 1] @ p[: lo + 1]
        M = A[sl, sl]
        q = rhs.copy()
        prev_diff = None
        max_ratio = 0.0
        iterations = 0
        converged = False
        for iterations in range(1, max_iter + 1):
            q_next = rhs + M @ q
            diff = float(np.max(np.abs(q_next - q)))
            if prev_diff is not None and prev_diff > 10.0 * tol:
                max_ratio = max(max_ratio, diff / prev_diff)
            q = q_next
            if diff <= tol:
                converged = True
                break
            prev_diff = diff
        if not converged:
            raise SolverError(
                f"Picard window {len(windows)} ([{ts[lo]:.6g}, {ts[hi]:.6g}]) did not"
                f" converge in {max_iter} iterations (last contraction ratio {max_ratio:.3g})"
            )
        p[sl] = q
        windows.append({
            "t_start": float(ts[lo]), "t_end": float(ts[hi]),
            "iterations": iterations, "max_ratio": max_ratio,
        })
        lo = hi

    F = _trapezoid_cdf(ts, p)
    return DensityEstimate(
        grid=grid, p=p, F=F, method="picard", gamma=gamma,
        fingerprint=problem_fingerprint(src, curve, grid),
        residual_summary={
            # None encodes an unbounded window (kernel vanishes identically)
            "window_length": window_len if math.isfinite(window_len) else None,
            "holder_m": m,
            "contraction_target": safety,
            "windows": windows,
            "max_ratio": max((w["max_ratio"] for w in windows), default=0.0),
        },
    )


def _build_matrix(curve: BoundaryCurve, grid: TimeGrid) -> np.ndarray:
    """Dense lower-triangular quadrature matrix A with row i approximating

        (A p)_i ~= int_0^{t_i} G_x(X_{t_i}, t_i; X_tau, tau) p(tau) dtau.
    """
    gamma = curve.gamma
    beta = gamma - 1.5
    ts = grid.nodes
    xs = np.asarray(curve.value(ts))
    kdiag = _diagonal_kappa(ts, xs, gamma)
    n = len(ts)
    A = np.zeros((n, n))
    for i in range(1, n):
        c = _nodal_weights(beta, ts[i], ts[: i + 1])
        A[i, :i] = c[:i] * _kappa_row(ts[i], xs[i], ts[:i], xs[:i], gamma)
        A[i, i] = c[i] * kdiag[i]
    return A


def _trapezoid_cdf(ts, p):
    F = np.zeros(len(ts))
    F[1:] = np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(ts))
    return F
