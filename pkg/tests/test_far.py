import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from faripa import far
from faripa.errors import (ConfigurationError, DegenerateRegressionError, InstabilityError,
                           OutOfSupportError, PreconditionError)

from oracles import matmul, normal_equations_var1

finite = st.floats(-5, 5, allow_nan=False)


class TestSineDynamics:
    def test_zero_input(self):
        dyn = far.make_random_sine_dynamics(3, 2, np.random.default_rng(0))
        np.testing.assert_array_equal(dyn(np.zeros(6)), np.zeros(3))

    @settings(max_examples=100, deadline=None)
    @given(hnp.arrays(float, 4, elements=st.floats(-1e6, 1e6)))
    def test_bounded(self, u):
        dyn = far.make_random_sine_dynamics(2, 2, np.random.default_rng(1))
        assert np.max(np.abs(dyn(u))) <= 1.0

    def test_F_reproduces_reference_generator(self):
        dyn = far.make_random_sine_dynamics(2, 1, np.random.default_rng(42))
        ref = np.random.Generator(np.random.PCG64(42)).random((2, 2))
        np.testing.assert_array_equal(dyn.F, ref)
        assert np.all((dyn.F >= 0) & (dyn.F < 1))

    def test_bad_args(self):
        with pytest.raises(PreconditionError):
            far.make_random_sine_dynamics(0, 1, np.random.default_rng(0))


class TestSimulate:
    def test_zero_dynamics_passes_noise_through(self):
        e = np.random.default_rng(0).standard_normal((1 + 10 + 50, 2))
        s = far.simulate_far(far.zero_dynamics(2), e, 50, burn_in=10)
        np.testing.assert_array_equal(s, e[-50:])

    def test_noiseless_sine_bounded(self):
        dyn = far.make_random_sine_dynamics(3, 1, np.random.default_rng(2))
        e = np.zeros((200, 3))
        e[0] = [40.0, -30.0, 7.0]
        s = far.simulate_far(dyn, e, 199, burn_in=0)
        assert np.all(np.abs(s) <= 1.0)

    def test_scalar_extended_precision(self):
        dyn = far.FarDynamics(order=1, map=lambda u: np.sin(0.5 * u), D=1)
        e = np.zeros((4, 1))
        e[0] = 1.0
        s = far.simulate_far(dyn, e, 3, burn_in=0)
        with mpmath.workdps(50):
            ref = [mpmath.mpf(1)]
            for _ in range(3):
                ref.append(mpmath.sin(ref[-1] / 2))
        np.testing.assert_allclose(s[:, 0], [float(v) for v in ref[1:]], rtol=1e-15)

    def test_callable_noise(self):
        rng = np.random.default_rng(3)
        dyn = far.make_random_sine_dynamics(2, 2, rng)
        s = far.simulate_far(dyn, lambda k: np.random.default_rng(5).standard_normal((k, 2)), 30)
        assert s.shape == (30, 2)

    def test_instability_names_step(self):
        dyn = far.FarDynamics(order=1, map=lambda u: 1e4 * u, D=1)
        e = np.zeros((20, 1))
        e[0] = 1.0
        with pytest.raises(InstabilityError) as info:
            far.simulate_far(dyn, e, 19, burn_in=0)
        assert info.value.step == 4

    def test_short_noise(self):
        with pytest.raises(PreconditionError):
            far.simulate_far(far.zero_dynamics(2), np.zeros((5, 2)), 10, burn_in=0)


class TestMixing:
    def test_identity(self):
        s = np.random.default_rng(0).standard_normal((5, 3))
        np.testing.assert_array_equal(far.mix(far.MixingSpec(np.eye(3)), s), s)

    def test_orthogonal_isometry(self):
        rng = np.random.default_rng(1)
        Q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        s = rng.standard_normal((100, 4))
        x = far.mix(far.MixingSpec(Q), s)
        np.testing.assert_allclose(np.linalg.norm(x, axis=1), np.linalg.norm(s, axis=1), atol=1e-10)

    def test_triple_loop_oracle(self):
        rng = np.random.default_rng(2)
        A = rng.standard_normal((3, 3))
        s = rng.standard_normal((5, 3))
        ref = np.array(matmul(s.tolist(), A.T.tolist()))
        np.testing.assert_allclose(far.mix(far.MixingSpec(A), s), ref, atol=1e-12)

    def test_roundtrip(self):
        rng = np.random.default_rng(3)
        spec = far.MixingSpec(rng.standard_normal((4, 4)))
        s = rng.standard_normal((50, 4))
        np.testing.assert_allclose(far.unmix(spec, far.mix(spec, s)), s, atol=1e-10)

    def test_singular(self):
        with pytest.raises(PreconditionError):
            far.MixingSpec(np.array([[1.0, 2.0], [2.0, 4.0]]))
        with pytest.raises(PreconditionError):
            far.mix(far.MixingSpec(np.eye(2)), np.zeros((3, 3)))


class TestKernelSpec:
    def test_beta_range(self):
        with pytest.raises(ConfigurationError):
            far.KernelSpec.recursive(0.5, 2)
        with pytest.raises(ConfigurationError):
            far.KernelSpec.recursive(0.0, 1)
        with pytest.raises(ConfigurationError):
            far.KernelSpec.fixed(0.0)
        assert far.KernelSpec.from_beta_c(0.25, 4).beta == pytest.approx(1 / 16)


class TestNadarayaWatson:
    def test_single_pair(self):
        k = far.KernelSpec.fixed(0.3)
        got = far.nw_regress([[0.2, 0.1]], [[5.0, -1.0]], [3.0, 3.0], k)
        np.testing.assert_array_equal(got, [5.0, -1.0])

    def test_constant_response(self):
        rng = np.random.default_rng(0)
        u = rng.standard_normal((40, 2))
        got = far.nw_regress(u, np.full((40, 3), 2.5), [0.3, -0.1], far.KernelSpec.fixed(0.7))
        np.testing.assert_allclose(got, 2.5, rtol=1e-15)

    def test_symmetric_pair(self):
        got = far.nw_regress([[-0.4], [0.6]], [[1.0], [4.0]], [0.1], far.KernelSpec.fixed(0.5))
        assert abs(got[0] - 2.5) < 1e-12

    def test_underflow(self):
        with pytest.raises(OutOfSupportError):
            far.nw_regress([[0.0]], [[1.0]], [100.0], far.KernelSpec.fixed(1e-3))

    def test_mode_checked(self):
        with pytest.raises(ConfigurationError):
            far.nw_regress([[0.0]], [[1.0]], [0.0], far.KernelSpec.recursive(0.2, 1))
        with pytest.raises(ConfigurationError):
            far.recursive_nw_regress([[0.0]], [[1.0]], [0.0], far.KernelSpec.fixed(1.0))

    @settings(max_examples=100, deadline=None)
    @given(hnp.arrays(float, (8, 2), elements=finite), hnp.arrays(float, (8, 2), elements=finite),
           hnp.arrays(float, 2, elements=finite), st.floats(0.5, 3.0))
    def test_envelope(self, u, v, q, h):
        try:
            got = far.nw_regress(u, v, q, far.KernelSpec.fixed(h))
        except OutOfSupportError:
            return
        assert np.all(got >= v.min(axis=0) - 1e-12) and np.all(got <= v.max(axis=0) + 1e-12)

    @settings(max_examples=100, deadline=None)
    @given(hnp.arrays(float, (6, 2), elements=finite), hnp.arrays(float, (6, 1), elements=finite),
           hnp.arrays(float, 2, elements=finite), hnp.arrays(float, 2, elements=st.floats(-100, 100)))
    def test_translation_invariance(self, u, v, q, shift):
        k = far.KernelSpec.fixed(1.5)
        try:
            a = far.nw_regress(u, v, q, k)
        except OutOfSupportError:
            return
        b = far.nw_regress(u + shift, v, q + shift, k)
        np.testing.assert_allclose(a, b, atol=1e-10)

    def test_recursive_single_pair(self):
        k = far.KernelSpec.recursive(0.3, 1)
        assert far.recursive_nw_regress([[0.4]], [[7.0]], [-2.0], k)[0] == 7.0
        assert far.nw_regress([[0.4]], [[7.0]], [-2.0], far.KernelSpec.fixed(1.0))[0] == 7.0

    def test_recursive_constant(self):
        u = np.linspace(-1, 1, 30)[:, None]
        got = far.recursive_nw_regress(u, np.full((30, 2), -3.0), [0.2], far.KernelSpec.recursive(0.4, 1))
        np.testing.assert_allclose(got, -3.0, rtol=1e-15)

    def test_recursive_three_points_extended_precision(self):
        u = [0.3, -0.8, 1.1]
        v = [2.0, -1.0, 0.5]
        beta = 0.25
        got = far.recursive_nw_regress(np.array(u)[:, None], np.array(v)[:, None], [u[1]],
                                       far.KernelSpec.recursive(beta, 1))
        with mpmath.workdps(50):
            b = mpmath.mpf(beta)
            w = [mpmath.mpf(t) ** b * mpmath.npdf(mpmath.mpf(t) ** b * (mpmath.mpf(u[1]) - mpmath.mpf(ut)))
                 for t, ut in zip((1, 2, 3), u)]
            ref = sum(wi * vi for wi, vi in zip(w, v)) / sum(w)
        assert got[0] == pytest.approx(float(ref), rel=1e-14)


class TestEstimateInnovations:
    def test_iid_residual_close_to_sample(self):
        x = np.random.default_rng(0).standard_normal((5000, 2))
        n = far.estimate_innovations(x, 1, far.KernelSpec.from_beta_c(0.25, 2))
        ratio = np.mean(np.linalg.norm(n - x[1:], axis=1)) / np.mean(np.linalg.norm(x[1:], axis=1))
        assert ratio < 0.15

    def test_iid_covariance_preserved(self):
        x = np.random.default_rng(1).standard_normal((5000, 2))
        n = far.estimate_innovations(x, 1, far.KernelSpec.from_beta_c(0.25, 2))
        C, Cx = np.cov(n.T), np.cov(x[1:].T)
        assert np.linalg.norm(C - Cx) / np.linalg.norm(Cx) < 0.2

    def test_duplicated_series_without_loo(self):
        base = np.random.default_rng(2).standard_normal((200, 2))
        x = np.vstack([base, base])
        n = far.estimate_innovations(x, 1, far.KernelSpec.fixed(1e-3), loo=False)
        np.testing.assert_allclose(n, 0.0, atol=1e-8)

    def test_ar1_residuals_track_true_noise(self):
        rng = np.random.default_rng(0)
        T, D = 10_000, 2
        e = 0.3 * rng.standard_normal((T, D))
        x = np.zeros((T, D))
        for t in range(1, T):
            x[t] = 0.5 * x[t - 1] + e[t]
        n = far.estimate_innovations(x, 1, far.KernelSpec.from_beta_c(0.5, D))
        for i in range(D):
            assert np.corrcoef(n[:, i], e[1:, i])[0, 1] > 0.9

    def test_fallback_counted(self):
        x = np.zeros((20, 1))
        x[10] = 50.0
        n, diag = far.estimate_innovations(x, 1, far.KernelSpec.fixed(0.01), loo=True,
                                           return_diagnostics=True)
        # the pair whose regressor is 50 has no neighbour once it is left out
        assert diag.n_fallback == 1 and diag.fallback_index == [10]
        assert n.shape == (19, 1)

    def test_thinning(self):
        x = np.random.default_rng(3).standard_normal((600, 2))
        n, diag = far.estimate_innovations(x, 1, far.KernelSpec.from_beta_c(0.25, 2), n_max=100,
                                           return_diagnostics=True)
        assert diag.n_queries == 599 and diag.n_train == 100
        assert n.shape == (599, 2) and np.all(np.isfinite(n))

    def test_chunking_irrelevant(self):
        x = np.random.default_rng(4).standard_normal((300, 2))
        k = far.KernelSpec.from_beta_c(0.25, 4)
        a = far.estimate_innovations(x, 2, k, chunk=7)
        b = far.estimate_innovations(x, 2, k, chunk=1000)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_too_short(self):
        with pytest.raises(PreconditionError):
            far.estimate_innovations(np.zeros((2, 1)), 1, far.KernelSpec.fixed(1.0))


class TestLinearAr:
    def test_exact_recursion(self):
        B = np.array([[0.5, -0.3], [0.2, 0.9]])
        x = np.empty((30, 2))
        x[0] = [1.0, 2.0]
        for t in range(1, 30):
            x[t] = B @ x[t - 1]
        fit = far.fit_linear_ar(x, 1)
        np.testing.assert_allclose(fit.coefs[0], B, atol=1e-8)
        np.testing.assert_allclose(fit.residuals, 0.0, atol=1e-8)

    def test_noiseless_affine_recursion(self):
        B = np.array([[0.5, -0.3], [0.2, 0.4]])
        c = np.array([0.1, -0.2])
        rng = np.random.default_rng(0)
        x = np.empty((40, 2))
        x[0] = rng.standard_normal(2) * 5
        for t in range(1, 40):
            x[t] = B @ x[t - 1] + c
        fit = far.fit_linear_ar(x[:12], 1)
        np.testing.assert_allclose(fit.coefs[0], B, atol=1e-8)
        np.testing.assert_allclose(fit.intercept, c, atol=1e-8)
        np.testing.assert_allclose(fit.residuals, 0.0, atol=1e-8)

    def test_hand_points(self):
        x = np.array([[1.0], [2.0], [2.0], [4.0]])
        fit = far.fit_linear_ar(x, 1)
        # pairs (1, 2), (2, 2), (2, 4): slope 1, intercept 1 by the 2x2 normal equations
        assert fit.coefs[0, 0, 0] == pytest.approx(1.0, abs=1e-12)
        assert fit.intercept[0] == pytest.approx(1.0, abs=1e-12)

    def test_normal_equation_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            x = rng.standard_normal((25, 3)).cumsum(axis=0) * 0.1 + rng.standard_normal((25, 3))
            fit = far.fit_linear_ar(x, 1)
            c, B = normal_equations_var1(x.tolist())
            np.testing.assert_allclose(fit.coefs[0], B, atol=1e-9)
            np.testing.assert_allclose(fit.intercept, c, atol=1e-9)

    def test_white_noise_coefficients_small(self):
        ok = 0
        for seed in range(50):
            x = np.random.default_rng(seed).standard_normal((2000, 2))
            fit = far.fit_linear_ar(x, 1)
            ok += np.all(np.abs(fit.coefs) < 3 * fit.stderr)
        assert ok >= 45

    def test_too_short_and_rank_deficient(self):
        with pytest.raises(PreconditionError):
            far.fit_linear_ar(np.zeros((3, 2)), 1)
        with pytest.raises(DegenerateRegressionError):
            far.fit_linear_ar(np.ones((10, 2)), 1)
