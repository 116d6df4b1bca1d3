import numpy as np
import pytest
from hypothesis import given, strategies as st

from cpawarp import (
    Domain,
    SampledFunction,
    build_tessellation,
    integrate_grid,
    interp,
    interp_grad,
    null_space_basis,
    self_compose,
    theta_to_field,
    warp_signal,
)


@pytest.fixture
def hat():
    return SampledFunction(x=np.array([0.0, 0.5, 1.0]), y=np.array([0.0, 1.0, 0.0]))


class TestInterp:
    def test_midpoint(self, hat):
        assert interp(hat, 0.25) == 0.5

    def test_exact_on_knots(self, hat):
        for xi, yi in zip(hat.x, hat.y):
            assert interp(hat, float(xi)) == yi

    def test_clamp_beyond_range(self, hat):
        assert interp(hat, 1.2) == hat.y[-1]
        assert interp(hat, -0.3) == hat.y[0]

    def test_segment_midpoint_is_mean(self):
        rng = np.random.default_rng(0)
        f = SampledFunction(x=np.linspace(0, 1, 9), y=rng.standard_normal(9))
        for i in range(8):
            mid = 0.5 * (f.x[i] + f.x[i + 1])
            assert interp(f, float(mid)) == pytest.approx(0.5 * (f.y[i] + f.y[i + 1]), abs=1e-15)

    def test_irregular_grid(self):
        f = SampledFunction(x=np.array([0.0, 0.1, 0.6, 1.0]), y=np.array([1.0, 2.0, 0.0, 4.0]))
        assert interp(f, 0.35) == pytest.approx(1.0, abs=1e-15)
        for xi, yi in zip(f.x, f.y):
            assert interp(f, float(xi)) == yi

    @given(st.floats(min_value=0.0, max_value=1.0))
    def test_value_between_neighbor_knots(self, xq):
        f = SampledFunction(x=np.linspace(0, 1, 6), y=np.array([0.0, 2.0, -1.0, 5.0, 5.0, 3.0]))
        v = interp(f, xq)
        i = min(int(np.searchsorted(f.x, xq, side="right")) - 1, 4)
        i = max(i, 0)
        lo, hi = sorted((f.y[i], f.y[i + 1]))
        assert lo - 1e-12 <= v <= hi + 1e-12

    def test_bad_construction(self):
        with pytest.raises(ValueError):
            SampledFunction(x=np.array([0.0]), y=np.array([1.0]))
        with pytest.raises(ValueError):
            SampledFunction(x=np.array([0.0, 0.0]), y=np.array([1.0, 2.0]))


class TestInterpGrad:
    def test_hat_values_and_slope(self, hat):
        g = interp_grad(hat, 0.25)
        np.testing.assert_array_equal(g.y_indices, [0, 1])
        np.testing.assert_allclose(g.y_weights, [0.5, 0.5], atol=1e-15)
        assert g.slope == pytest.approx(2.0, abs=1e-15)

    def test_flat_segment_zero_derivatives(self):
        f = SampledFunction(x=np.array([0.0, 0.5, 1.0]), y=np.array([2.0, 2.0, 3.0]))
        g = interp_grad(f, 0.25)
        assert g.slope == 0.0
        np.testing.assert_array_equal(g.x_weights, [0.0, 0.0])

    def test_against_finite_differences(self):
        """All three derivative families vs central differences on each argument."""
        rng = np.random.default_rng(1)
        x = np.sort(rng.uniform(0, 1, 7))
        x[0], x[-1] = 0.0, 1.0
        y = rng.standard_normal(7)
        f = SampledFunction(x=x, y=y)
        xq = 0.431
        g = interp_grad(f, xq)
        h = 1e-6
        # query derivative
        fd_q = (interp(f, xq + h) - interp(f, xq - h)) / (2 * h)
        assert g.slope == pytest.approx(fd_q, rel=1e-8)
        # knot-value derivatives
        for idx, w in zip(g.y_indices, g.y_weights):
            yp, ym = y.copy(), y.copy()
            yp[idx] += h
            ym[idx] -= h
            fd = (interp(SampledFunction(x, yp), xq) - interp(SampledFunction(x, ym), xq)) / (2 * h)
            assert w == pytest.approx(fd, rel=1e-8, abs=1e-12)
        # knot-position derivatives
        for idx, w in zip(g.x_indices, g.x_weights):
            xp, xm = x.copy(), x.copy()
            xp[idx] += h
            xm[idx] -= h
            fd = (interp(SampledFunction(xp, y), xq) - interp(SampledFunction(xm, y), xq)) / (2 * h)
            assert w == pytest.approx(fd, rel=1e-8, abs=1e-12)

    def test_clamped_region(self, hat):
        g = interp_grad(hat, 1.5)
        assert g.slope == 0.0
        np.testing.assert_array_equal(g.y_indices, [2])
        np.testing.assert_array_equal(g.y_weights, [1.0])


class TestWarpSignal:
    def test_identity_warp(self):
        grid = np.linspace(0, 1, 33)
        sig = SampledFunction(x=grid, y=np.sin(2 * np.pi * grid))
        out = warp_signal(sig, grid)
        np.testing.assert_array_equal(out.y, sig.y)

    def test_linear_signal_returns_warp(self):
        grid = np.linspace(0, 1, 65)
        sig = SampledFunction(x=grid, y=grid.copy())
        tess = build_tessellation(Domain(0, 1), 2)
        basis = null_space_basis(tess, "sparse", zero_boundary=True)
        phi = integrate_grid(tess, theta_to_field(basis, np.array([1.0])), grid)
        out = warp_signal(sig, phi)
        np.testing.assert_allclose(out.y, phi.phi, atol=1e-15)

    def test_against_dense_resampling_oracle(self):
        """Warped coarse signal tracks a densely resampled reference."""
        t = np.linspace(0, 1, 1000)
        sig = SampledFunction(x=t, y=np.sin(2 * np.pi * t))
        tess = build_tessellation(Domain(0, 1), 2)
        basis = null_space_basis(tess, "sparse", zero_boundary=True)
        phi = integrate_grid(tess, theta_to_field(basis, np.array([1.0])), t).phi
        out = warp_signal(sig, phi)
        reference = np.sin(2 * np.pi * phi)
        rms = np.sqrt(np.mean((out.y - reference) ** 2))
        assert rms <= 1e-3

    def test_length_mismatch(self):
        sig = SampledFunction(x=np.linspace(0, 1, 8), y=np.zeros(8))
        with pytest.raises(ValueError):
            warp_signal(sig, np.linspace(0, 1, 9))


class TestSelfCompose:
    def test_identity(self):
        grid = np.linspace(0, 1, 21)
        composed, op = self_compose(grid.copy(), grid)
        np.testing.assert_array_equal(composed, grid)
        # derivative operator doubles a constant Jacobian on the identity
        jac = np.ones((21, 3))
        np.testing.assert_allclose(op.apply(jac), 2.0 * jac, atol=1e-14)

    def test_half_time_tent_squares_to_full(self):
        tess = build_tessellation(Domain(0, 1), 2)
        basis = null_space_basis(tess, "sparse", zero_boundary=True)
        fld = theta_to_field(basis, np.array([1.0]))
        grid = np.linspace(0, 1, 1000)
        half = integrate_grid(tess, fld, grid, 0.5).phi
        composed, _ = self_compose(half, grid)
        full = integrate_grid(tess, fld, grid, 1.0).phi
        rms = np.sqrt(np.mean((composed - full) ** 2))
        assert rms <= 1e-4

    def test_monotone_stays_monotone(self):
        rng = np.random.default_rng(2)
        grid = np.linspace(0, 1, 100)
        steps = rng.uniform(0.2, 1.0, 99)
        warp = np.concatenate([[0.0], np.cumsum(steps)])
        warp /= warp[-1]
        composed, _ = self_compose(warp, grid)
        assert np.all(np.diff(composed) >= 0)

    def test_jacobian_against_finite_differences(self):
        """Dense operator matrix vs FD away from knot-crossing queries."""
        tess = build_tessellation(Domain(0, 1), 4)
        basis = null_space_basis(tess, "sparse", zero_boundary=True)
        prior_theta = np.array([0.3, -0.2, 0.25])
        grid = np.linspace(0, 1, 40)
        u = integrate_grid(tess, theta_to_field(basis, prior_theta), grid, 0.25).phi
        _, op = self_compose(u, grid)
        M = op.as_matrix()
        h = 1e-7
        for j in range(1, 39):
            e = np.zeros_like(u)
            e[j] = h
            up, _ = self_compose(u + e, grid)
            dn, _ = self_compose(u - e, grid)
            np.testing.assert_allclose(M[:, j], (up - dn) / (2 * h), atol=1e-6)

    def test_non_monotone_rejected(self):
        grid = np.linspace(0, 1, 5)
        with pytest.raises(ValueError):
            self_compose(np.array([0.0, 0.5, 0.4, 0.8, 1.0]), grid)
