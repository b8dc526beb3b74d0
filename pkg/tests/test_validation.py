import math

import numpy as np
import pytest

from fptkit import (
    BoundaryCurve,
    DensityEstimate,
    GreenField,
    SourceSpec,
    TimeGrid,
    closed_form_linear,
    delta_convergence,
    gaussian,
    gaussian_dx,
    heat_residual,
    jump_check,
    mass_conservation,
    master_residual,
    solve_marching,
)
from fptkit.green import _eval_batch

POINT = SourceSpec.point(0.0)


def inject_exact_density(a, b, grid):
    """DensityEstimate holding the linear-boundary closed form at the nodes."""
    p = np.zeros(len(grid.nodes))
    p[1:] = closed_form_linear(a, b, 0.0, grid.nodes[1:])
    F = np.zeros(len(grid.nodes))
    F[1:] = np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(grid.nodes))
    return DensityEstimate(grid=grid, p=p, F=F, method="marching", gamma=1.0)


@pytest.fixture(scope="module")
def linear_case():
    curve = BoundaryCurve.linear(1.0, 0.5)
    grid = TimeGrid(T=4.0, N=2048, q=2.0)
    est = solve_marching(POINT, curve, grid)
    return curve, grid, est


class TestClosedFormLinear:
    def test_values(self):
        assert closed_form_linear(1.0, 0.0, 0.0, 1.0) == pytest.approx(0.24197072451914337, rel=1e-14)
        assert closed_form_linear(1.0, 1.0, 0.0, 1.0) == pytest.approx(0.05399096651318806, rel=1e-14)
        assert closed_form_linear(1.0, 0.5, 0.0, 1.0) == pytest.approx(0.12951759566589174, rel=1e-14)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            closed_form_linear(1.0, 0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            closed_form_linear(1.0, 0.0, 0.0, 0.0)


class TestMasterResidual:
    def test_exact_density_constant_boundary(self):
        # the identity holds identically for the true density; residual is
        # pure quadrature error
        curve = BoundaryCurve.constant(1.0)
        grid = TimeGrid(T=2.0, N=2048, q=2.0)
        exact = inject_exact_density(1.0, 0.0, grid)
        rep = master_residual(exact, curve, POINT, z_offsets=(0.0,), times=(1.0,), tolerance=1e-6)
        assert rep.passed

    def test_exact_density_linear_many_probes(self, linear_case):
        curve, grid, _ = linear_case
        exact = inject_exact_density(1.0, 0.5, grid)
        rep = master_residual(
            exact, curve, POINT, z_offsets=(0.0, 0.5, 1.0),
            times=(0.5, 1.0, 2.0, 4.0), tolerance=1e-5,
        )
        assert rep.passed
        assert rep.sup_residual <= 1e-5

    def test_early_time_residual_collapses(self, linear_case):
        curve, _, est = linear_case
        rep = master_residual(est, curve, POINT, z_offsets=(0.0,), times=(1e-4,), tolerance=1e-12)
        assert rep.passed

    def test_solver_output(self, linear_case):
        curve, _, est = linear_case
        rep = master_residual(
            est, curve, POINT, z_offsets=(0.0, 0.5, 1.0),
            times=(0.5, 1.0, 2.0, 4.0), tolerance=2e-3,
        )
        assert rep.passed

    def test_detects_corrupted_density(self, linear_case):
        # scaling p by 1.1 introduces a visible mass error
        curve, grid, est = linear_case
        bad = DensityEstimate(grid=grid, p=1.1 * est.p, F=est.F, method="marching", gamma=1.0)
        rep = master_residual(
            bad, curve, POINT, z_offsets=(0.0,), times=(2.0, 4.0), tolerance=2e-3,
        )
        assert not rep.passed

    def test_negative_offset_rejected(self, linear_case):
        curve, _, est = linear_case
        with pytest.raises(ValueError, match="offset"):
            master_residual(est, curve, POINT, z_offsets=(-0.5,), times=(1.0,))

    def test_reproducible(self, linear_case):
        curve, _, est = linear_case
        a = master_residual(est, curve, POINT, z_offsets=(0.0, 1.0), times=(1.0, 2.0))
        b = master_residual(est, curve, POINT, z_offsets=(0.0, 1.0), times=(1.0, 2.0))
        assert a.residuals == b.residuals
        assert a.sup_residual == b.sup_residual


class TestHeatResidual:
    def test_heat_kernel_fixture(self):
        rng = np.random.default_rng(7)
        pts = list(zip(rng.uniform(-2, 2, 10), rng.uniform(0.5, 2.0, 10)))
        rep = heat_residual(lambda x, t: gaussian(x, t, 0.0, 0.0), pts, dx=1e-3, dt_fd=1e-3,
                            tolerance=1e-6)
        assert rep.passed

    def test_dipole_counterexample_fixture(self):
        # (-x/t) exp(-x^2/2t)/sqrt(2 pi t) solves the heat equation even
        # though it is not continuous at the origin; it equals G_x
        rep = heat_residual(lambda x, t: gaussian_dx(x, t, 0.0, 0.0), [(-1.0, 1.0)],
                            dx=1e-3, dt_fd=1e-3, tolerance=1e-6)
        assert rep.passed

    def test_green_interior(self, linear_case):
        curve, grid, est = linear_case
        fld = GreenField(curve=curve, src=POINT, density=est)
        rng = np.random.default_rng(13)
        pts = []
        for _ in range(20):
            t = float(rng.uniform(1.2, 4.0))
            xt = float(curve.value(t))
            pts.append((xt - float(rng.uniform(0.5, 2.5)) * math.sqrt(t), t))
        rep = heat_residual(
            lambda x, t: float(_eval_batch(fld, np.array([x]), t)[0]),
            pts, dx=0.05, dt_fd=0.02, tolerance=1e-2, name="green_interior",
        )
        assert rep.passed

    def test_stencil_out_of_domain_propagates(self, linear_case):
        # the time stencil reaches below t = 0 where the field is undefined
        curve, grid, est = linear_case
        fld = GreenField(curve=curve, src=POINT, density=est)
        with pytest.raises(ValueError):
            heat_residual(
                lambda x, t: float(_eval_batch(fld, np.array([x]), t)[0]),
                [(0.0, 0.005)], dx=0.05, dt_fd=0.02,
            )


class TestMassConservation:
    def test_constant_boundary(self):
        curve = BoundaryCurve.constant(1.0)
        grid = TimeGrid(T=2.0, N=1024, q=2.0)
        est = solve_marching(POINT, curve, grid)
        fld = GreenField(curve=curve, src=POINT, density=est)
        rep = mass_conservation(fld, times=(1.0,), tolerance=2e-3)
        assert rep.passed

    def test_short_time(self, linear_case):
        curve, _, est = linear_case
        fld = GreenField(curve=curve, src=POINT, density=est)
        rep = mass_conservation(fld, times=(1e-4,), tolerance=1e-6)
        assert rep.passed

    def test_power_boundary_quarters(self):
        curve = BoundaryCurve.power(1.0, 0.5, 0.75)
        grid = TimeGrid(T=4.0, N=2048, q=2.0)
        est = solve_marching(POINT, curve, grid)
        fld = GreenField(curve=curve, src=POINT, density=est)
        rep = mass_conservation(fld, times=(1.0, 2.0, 4.0), tolerance=2e-3)
        assert rep.passed


class TestJumpCheck:
    def test_linear_case(self, linear_case):
        curve, _, est = linear_case
        fld = GreenField(curve=curve, src=POINT, density=est)
        rep = jump_check(fld, times=(0.5, 1.0, 2.0), tolerance=2e-2)
        assert rep.passed

    def test_constant_case(self):
        curve = BoundaryCurve.constant(1.0)
        est = solve_marching(POINT, curve, TimeGrid(T=2.0, N=1024, q=2.0))
        fld = GreenField(curve=curve, src=POINT, density=est)
        rep = jump_check(fld, times=(1.0,), tolerance=2e-2)
        assert rep.passed

    def test_first_node_near_zero(self, linear_case):
        # both flux and density are ~0 there; absolute residual <= 1e-3
        curve, grid, est = linear_case
        fld = GreenField(curve=curve, src=POINT, density=est)
        t1 = float(grid.nodes[1])
        rep = jump_check(fld, times=(t1,), tolerance=1.0)
        assert rep.residuals[0] * 1e-3 <= 1e-3  # relative is vs max(p, 1e-3)
        assert rep.passed


class TestDeltaConvergence:
    def test_linear_boundary_norm_sequence(self):
        curve = BoundaryCurve.linear(1.0, 0.5)
        grid = TimeGrid(T=4.0, N=512, q=2.0)
        rep = delta_convergence(
            curve, 0.0, widths=(0.25, 0.125, 0.0625, 0.03125), eta=0.25, grid=grid,
        )
        assert rep.details["monotone_decreasing"]
        assert rep.details["ratio_last_to_first"] <= 0.5
        assert rep.passed

    def test_zero_width_short_circuits(self):
        curve = BoundaryCurve.linear(1.0, 0.5)
        grid = TimeGrid(T=1.0, N=64, q=2.0)
        rep = delta_convergence(curve, 0.0, widths=(0.0,), eta=0.25, grid=grid)
        assert rep.residuals == (0.0,)

    def test_support_clearance_enforced(self):
        curve = BoundaryCurve.linear(1.0, 0.5)
        grid = TimeGrid(T=1.0, N=64, q=2.0)
        with pytest.raises(ValueError, match="below"):
            delta_convergence(curve, 0.0, widths=(2.5,), eta=0.25, grid=grid)

    def test_eta_validated(self):
        curve = BoundaryCurve.linear(1.0, 0.5)
        grid = TimeGrid(T=1.0, N=64, q=2.0)
        with pytest.raises(ValueError, match="eta"):
            delta_convergence(curve, 0.0, widths=(0.25,), eta=0.7, grid=grid)


class TestReportShape:
    def test_pass_iff_within_tolerance(self, linear_case):
        curve, _, est = linear_case
        rep = master_residual(est, curve, POINT, z_offsets=(0.0,), times=(1.0,), tolerance=1e-30)
        assert not rep.passed
        assert rep.to_dict()["passed"] is False
        assert rep.to_dict()["tolerance"] == 1e-30
