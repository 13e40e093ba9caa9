import numpy as np
import pytest

from sharplab import metrics as m
from sharplab import quadratic as q


def psd_oracle(n=12, d=4, seed=2, scale=0.5):
    ens = q.make_random_psd_ensemble(n, d, d, scale, seed=seed)
    return ens, q.QuadraticOracle(ens)


def uniform_landscape_oracle():
    # identical per-sample Hessians and anchors: no batch variability at all
    A = np.tile(np.diag([2.0, 0.5, 1.0]), (6, 1, 1))
    xs = np.tile(np.array([1.0, -1.0, 0.5]), (6, 1))
    ens = q.QuadraticEnsemble(A, xs)
    return ens, q.QuadraticOracle(ens)


def rayleigh(H, v):
    return float(v @ H @ v) / float(v @ v)


class TestOracleContract:
    def test_quadratic_oracle_conforms(self):
        _, oracle = psd_oracle()
        m.check_oracle(oracle, np.array([0.4, -1.2, 0.3, 0.9]), seed=0)


class TestExhaustiveConsistency:
    def test_batch_sharpness_matches_enumeration(self):
        ens, oracle = psd_oracle()
        theta = np.array([1.0, 0.2, -0.7, 0.4])
        est = m.batch_sharpness_est(oracle, theta, b=1, num_batches=4, seed=0)
        exact = q.batch_sharpness_exact(ens, theta)
        assert est == pytest.approx(exact, rel=1e-10)

    def test_gni_matches_enumeration(self):
        ens, oracle = psd_oracle()
        theta = np.array([1.0, 0.2, -0.7, 0.4])
        est = m.gni_est(oracle, theta, b=1, num_batches=4, seed=0)
        assert est == pytest.approx(q.gni_exact(ens, theta), rel=1e-10)

    def test_counterexample_value(self):
        ens = q.make_counterexample(1.0, 3.0)
        oracle = q.QuadraticOracle(ens)
        est = m.batch_sharpness_est(oracle, np.array([0.0, 1.0]), b=1, num_batches=2)
        assert est == pytest.approx(2.8, rel=1e-12)

    def test_ias_identity_with_gni(self):
        # ias = gni * |grad L|^2 / E|g_B|^2 by definition
        ens, oracle = psd_oracle()
        theta = np.array([0.3, 0.3, -0.2, 1.1])
        gni = m.gni_est(oracle, theta, b=1, num_batches=4)
        ias = m.ias_est(oracle, theta, b=1, num_batches=4)
        dec = m.grad_norm_decomposition(oracle, theta, b=1, num_batches=4)
        assert ias == pytest.approx(gni * dec.full_sq / dec.batch_sq_mean, rel=1e-10)

    def test_monte_carlo_close_to_exact(self):
        ens, oracle = psd_oracle(n=40)
        theta = np.array([1.0, 0.2, -0.7, 0.4])
        est = m.batch_sharpness_est(
            oracle, theta, b=4, num_batches=3000, mode="with", seed=1, exhaustive=False
        )
        ref = q.batch_sharpness_exact(ens, theta, q.BatchMode("with", 4), num_batches=3000, seed=7)
        assert est == pytest.approx(ref, rel=0.05)


class TestCollapseAndOrdering:
    def test_full_batch_collapse(self):
        ens, oracle = psd_oracle()
        theta = np.array([0.5, -0.5, 1.0, 0.25])
        g = ens.grad(theta)
        expect = rayleigh(ens.mean_hessian, g)
        n = ens.n
        for fn in (m.batch_sharpness_est, m.gni_est, m.ias_est):
            got = fn(oracle, theta, b=n, num_batches=1, mode="without", seed=0)
            assert got == pytest.approx(expect, rel=1e-8), fn.__name__

    def test_identical_landscapes_all_equal(self):
        ens, oracle = uniform_landscape_oracle()
        theta = np.array([2.0, 0.5, -1.0])
        g = ens.grad(theta)
        expect = rayleigh(ens.mean_hessian, g)
        for b in (1, 3, 6):
            bs = m.batch_sharpness_est(oracle, theta, b, 16, mode="without", seed=0)
            gni = m.gni_est(oracle, theta, b, 16, mode="without", seed=0)
            ias = m.ias_est(oracle, theta, b, 16, mode="without", seed=0)
            assert bs == pytest.approx(expect, rel=1e-9)
            assert gni == pytest.approx(expect, rel=1e-9)
            assert ias == pytest.approx(expect, rel=1e-9)

    def test_ias_capped_by_lambda_max(self):
        ens, oracle = psd_oracle(seed=5)
        lam = m.lambda_max_full(oracle, np.zeros(4))
        rng = np.random.default_rng(0)
        for _ in range(10):
            theta = rng.normal(size=4)
            ias = m.ias_est(oracle, theta, b=2, num_batches=64, mode="without", seed=3)
            assert ias <= lam * (1 + 1e-6)

    def test_lambda_max_b_at_least_lambda_max(self):
        ens, oracle = psd_oracle(seed=7)
        lam = m.lambda_max_full(oracle, np.zeros(4))
        for b in (1, 3, 6):
            lmb = m.lambda_max_b_est(oracle, np.zeros(4), b, num_batches=32, seed=1)
            assert lmb.value >= lam - 2e-4 * lam
            assert lmb.num_converged == lmb.num_batches

    def test_lambda_max_b_counterexample(self):
        # per-sample top eigenvalues are 4 and 1 (signed), so the b=1 mean is
        # 2.5 while the mean Hessian has top eigenvalue 1
        ens = q.make_counterexample(1.0, 3.0)
        oracle = q.QuadraticOracle(ens)
        lmb = m.lambda_max_b_est(oracle, np.zeros(2), b=1, num_batches=2, seed=0)
        assert lmb.value == pytest.approx(2.5, rel=1e-5)
        assert m.lambda_max_full(oracle, np.zeros(2)) == pytest.approx(1.0, rel=1e-6)


class TestLambdaMaxFull:
    def test_diagonal_mean(self):
        A = np.stack([np.diag([4.0, 1.0]), np.diag([2.0, 1.0])])
        ens = q.QuadraticEnsemble(A, np.zeros((2, 2)))
        got = m.lambda_max_full(q.QuadraticOracle(ens), np.zeros(2))
        assert got == pytest.approx(3.0, rel=1e-6)

    def test_matches_dense_eigensolve(self):
        ens, oracle = psd_oracle(n=24, d=6, seed=9)
        w = np.linalg.eigvalsh(ens.mean_hessian)
        got = m.lambda_max_full(oracle, np.zeros(6))
        assert got == pytest.approx(w[-1], rel=1e-5)


class TestStepSharpness:
    def test_full_index_set_is_rayleigh(self):
        ens, oracle = psd_oracle()
        theta = np.array([1.0, 1.0, -1.0, 0.5])
        g = ens.grad(theta)
        got = m.step_sharpness(oracle, theta, np.arange(ens.n))
        assert got == pytest.approx(rayleigh(ens.mean_hessian, g), rel=1e-10)

    def test_bounded_by_batch_lambda_max(self):
        ens, oracle = psd_oracle(seed=11)
        idx = np.array([0, 3, 5])
        Hb = ens.hessians[idx].mean(axis=0)
        top = np.linalg.eigvalsh(Hb)[-1]
        got = m.step_sharpness(oracle, np.array([0.5, 0.1, -0.4, 1.0]), idx)
        assert got <= top + 1e-10

    def test_singleton_average_reproduces_batch_sharpness(self):
        ens, oracle = psd_oracle()
        theta = np.array([0.2, -0.9, 0.4, 0.6])
        num = 0.0
        den = 0.0
        for i in range(ens.n):
            g = oracle.batch_grad(theta, np.array([i]))
            num += g @ oracle.hvp_batch(theta, np.array([i]), g)
            den += g @ g
        est = m.batch_sharpness_est(oracle, theta, b=1, num_batches=4)
        assert num / den == pytest.approx(est, rel=1e-12)

    def test_zero_batch_gradient_rejected(self):
        ens, oracle = uniform_landscape_oracle()
        with pytest.raises(q.ZeroGradientError):
            m.step_sharpness(oracle, np.array([1.0, -1.0, 0.5]), np.array([0]))


class TestGradNormDecomposition:
    def test_full_batch_no_noise(self):
        ens, oracle = psd_oracle()
        dec = m.grad_norm_decomposition(oracle, np.ones(4), b=ens.n, num_batches=1, mode="without")
        assert dec.noise_sq_mean == pytest.approx(0.0, abs=1e-18)

    def test_identical_gradients_no_noise(self):
        ens, oracle = uniform_landscape_oracle()
        dec = m.grad_norm_decomposition(oracle, np.array([3.0, 0.0, 1.0]), b=2, num_batches=16)
        assert dec.noise_sq_mean == pytest.approx(0.0, abs=1e-18)

    def test_exhaustive_identity_exact(self):
        ens, oracle = psd_oracle()
        dec = m.grad_norm_decomposition(oracle, np.array([0.1, 2.0, -0.3, 0.8]), b=1, num_batches=4)
        assert dec.batch_sq_mean == pytest.approx(dec.full_sq + dec.noise_sq_mean, rel=1e-10)


class TestGniGuards:
    def test_zero_gradient_raises(self):
        ens, oracle = psd_oracle()
        with pytest.raises(q.ZeroGradientError):
            m.gni_est(oracle, ens.theta_star, b=1, num_batches=4)

    def test_saturation_cap(self):
        ens, oracle = psd_oracle()
        # just off the minimum the ratio blows up but stays capped
        theta = ens.theta_star + 1e-9
        got = m.gni_est(oracle, theta, b=1, num_batches=4)
        assert got == m.GNI_SATURATION


class TestReport:
    def test_report_columns_and_format(self):
        ens, oracle = psd_oracle()
        rep = m.measure_report(oracle, np.ones(4), step=7, b=2, num_batches=8, seed=3)
        header = m.SharpnessReport.csv_header()
        assert header.split(",") == m.REPORT_COLUMNS
        row = rep.to_csv_row()
        assert len(row.split(",")) == len(m.REPORT_COLUMNS)
        assert row.split(",")[0] == "7"
        assert row.split(",")[-1] == "3"

    def test_bias_variance_invariant(self):
        ens, oracle = psd_oracle(n=30)
        rng = np.random.default_rng(1)
        for trial in range(5):
            theta = rng.normal(size=4)
            rep = m.measure_report(oracle, theta, step=0, b=3, num_batches=256, seed=trial)
            # identity up to 3 Monte-Carlo standard errors of the noise term
            se = rep.grad_noise_sq_mean / np.sqrt(rep.num_batches)
            gap = abs(rep.grad_batch_sq_mean - rep.grad_full_sq - rep.grad_noise_sq_mean)
            assert gap <= 3 * 3 * se + 1e-12

    def test_unrequested_metrics_are_nan(self):
        ens, oracle = psd_oracle()
        rep = m.measure_report(
            oracle, np.ones(4), step=0, b=1, num_batches=4, metrics=("batch_sharpness",)
        )
        assert np.isnan(rep.gni) and np.isnan(rep.lambda_max)
        assert np.isfinite(rep.batch_sharpness)

    def test_unknown_metric_rejected(self):
        ens, oracle = psd_oracle()
        with pytest.raises(ValueError, match="unknown metrics"):
            m.measure_report(oracle, np.ones(4), step=0, b=1, metrics=("sharpness",))


class TestDrawBatches:
    def test_exhaustive_b1(self):
        batches, exhaustive = m.draw_metric_batches(10, 1, 5, mode="with", seed=0)
        assert exhaustive and len(batches) == 10

    def test_exhaustive_without_replacement(self):
        batches, exhaustive = m.draw_metric_batches(8, 2, 5, mode="without", seed=0)
        assert exhaustive and len(batches) == 28

    def test_large_space_sampled(self):
        batches, exhaustive = m.draw_metric_batches(512, 8, 17, mode="with", seed=0)
        assert not exhaustive and len(batches) == 17

    def test_with_replacement_never_enumerates_b_gt_1(self):
        # combinations would estimate the wrong (without-replacement) expectation
        batches, exhaustive = m.draw_metric_batches(6, 2, 9, mode="with", seed=0)
        assert not exhaustive and len(batches) == 9

    def test_deterministic(self):
        a, _ = m.draw_metric_batches(100, 4, 6, mode="without", seed=5)
        b, _ = m.draw_metric_batches(100, 4, 6, mode="without", seed=5)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))


class TestClassifier:
    def _trainer(self, eta=0.5, seed=0):
        ens = q.make_1d_gaussian_means(2, anchors=[1.0, -1.0])
        tr = q.QuadraticTrainer(ens, eta, q.BatchMode("with", 1), theta0=np.array([0.4]), seed=seed)
        tr.run_steps(400)
        return tr

    def test_amplitude_growth_is_noise_driven(self):
        tr = self._trainer()
        verdict = m.classify_oscillation(
            tr, m.ProbeConfig(eta_factor=3.0, probe_steps=300)
        )
        assert verdict.kind == m.NOISE_DRIVEN
        assert np.isfinite(verdict.peak_loss_ratio)

    def test_divergence_is_curvature_driven(self):
        tr = self._trainer()
        verdict = m.classify_oscillation(
            tr, m.ProbeConfig(eta_factor=4.4, probe_steps=200)
        )
        assert verdict.kind == m.CURVATURE_DRIVEN
        assert verdict.peak_loss_ratio >= 3.0
        assert not verdict.re_stabilized

    def test_restore_after(self):
        tr = self._trainer()
        theta_before = tr.theta.copy()
        steps_before = tr.step_count
        m.classify_oscillation(tr, m.ProbeConfig(eta_factor=4.4, probe_steps=50))
        assert np.array_equal(tr.theta, theta_before)
        assert tr.step_count == steps_before
        assert tr.eta == 0.5

    def test_keep_state_when_asked(self):
        tr = self._trainer()
        steps_before = tr.step_count
        m.classify_oscillation(
            tr, m.ProbeConfig(eta_factor=1.2, probe_steps=30, restore_after=False)
        )
        assert tr.step_count == steps_before + 30
        assert tr.eta == pytest.approx(0.6)

    def test_needs_baseline(self):
        ens = q.make_1d_gaussian_means(2, anchors=[1.0, -1.0])
        tr = q.QuadraticTrainer(ens, 0.5, q.BatchMode("with", 1), theta0=np.array([0.4]))
        tr.run_steps(10)
        with pytest.raises(ValueError, match="baseline"):
            m.classify_oscillation(tr, m.ProbeConfig(eta_factor=2.0))

    def test_needs_checkpoint_support(self):
        class NoCheckpoint:
            eta = 0.1
            loss_series = [1.0] * 100

        with pytest.raises(TypeError, match="checkpoint"):
            m.classify_oscillation(NoCheckpoint(), m.ProbeConfig(eta_factor=2.0))

    def test_probe_config_validation(self):
        with pytest.raises(ValueError):
            m.ProbeConfig()
        with pytest.raises(ValueError):
            m.ProbeConfig(eta_factor=2.0, new_b=4)
        with pytest.raises(ValueError):
            m.ProbeConfig(eta_factor=2.0, catapult_factor=1.0)
        with pytest.raises(ValueError):
            m.ProbeConfig(eta_factor=2.0, probe_steps=0)
