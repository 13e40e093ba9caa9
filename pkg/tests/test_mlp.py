import numpy as np
import pytest

from sharplab import metrics as m
from sharplab import mlp


def small_net(seed=1, activation="tanh", dims=(5, 7, 6, 3), init_scale=1.0):
    return mlp.init_mlp(dims, activation, init_scale, seed=seed)


def small_batch(seed=0, n=11, d_in=5, k=3):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, d_in)), rng.normal(size=(n, k))


class TestInit:
    def test_param_count(self):
        assert mlp.init_mlp((10, 32, 32, 4)).num_params == 1540

    def test_determinism(self):
        a = small_net(seed=4).to_flat()
        b = small_net(seed=4).to_flat()
        assert np.array_equal(a, b)

    def test_zero_scale_zero_network(self):
        params = small_net(init_scale=0.0)
        assert np.allclose(params.to_flat(), 0.0)
        data = mlp.make_synthetic_dataset("blobs", 40, 5, 3, 1.0, seed=0)
        # zero outputs against one-hot targets: loss = mean of 0.5 |y|^2 = 0.5
        assert mlp.forward_loss(params, data.inputs, data.targets) == pytest.approx(0.5)

    def test_needs_hidden_layer(self):
        with pytest.raises(ValueError):
            mlp.init_mlp((10, 4))

    def test_flat_roundtrip(self):
        params = small_net(seed=9)
        flat = params.to_flat()
        again = params.from_flat(flat)
        assert np.array_equal(again.to_flat(), flat)
        for w1, w2 in zip(params.weights, again.weights):
            assert np.array_equal(w1, w2)


class TestForwardLoss:
    def test_memorized_targets_zero_loss(self):
        params = small_net()
        X, _ = small_batch()
        Y = mlp._forward(params, X)[0][-1]
        assert mlp.forward_loss(params, X, Y) == 0.0

    def test_doubling_targets_quadruples_zero_net_loss(self):
        params = small_net(init_scale=0.0)
        X, Y = small_batch()
        assert mlp.forward_loss(params, X, 2 * Y) == pytest.approx(
            4 * mlp.forward_loss(params, X, Y)
        )

    def test_shape_mismatch(self):
        params = small_net()
        X, Y = small_batch()
        with pytest.raises(ValueError):
            mlp.forward_loss(params, X, Y[:5])
        with pytest.raises(ValueError):
            mlp.forward_loss(params, X[:, :3], Y)


class TestGrad:
    def test_zero_at_memorizing_point(self):
        params = small_net()
        X, _ = small_batch()
        Y = mlp._forward(params, X)[0][-1]
        assert np.linalg.norm(mlp.grad(params, X, Y)) <= 1e-8

    def test_finite_differences(self):
        params = small_net(seed=3)
        X, Y = small_batch(seed=5)
        flat = params.to_flat()
        g = mlp.grad(params, X, Y)
        rng = np.random.default_rng(7)
        eps = 1e-6
        for j in rng.choice(params.num_params, 20, replace=False):
            e = np.zeros_like(flat)
            e[j] = eps
            fd = (
                mlp.forward_loss(params.from_flat(flat + e), X, Y)
                - mlp.forward_loss(params.from_flat(flat - e), X, Y)
            ) / (2 * eps)
            assert fd == pytest.approx(g[j], rel=1e-5, abs=1e-10)

    def test_linear_in_residual(self):
        params = small_net(seed=2)
        X, _ = small_batch(seed=8)
        f = mlp._forward(params, X)[0][-1]
        r = np.random.default_rng(1).normal(size=f.shape)
        g1 = mlp.grad(params, X, f - r)
        g2 = mlp.grad(params, X, f - 2 * r)
        assert np.allclose(g2, 2 * g1)

    def test_per_sample_grads_average(self):
        params = small_net(seed=6)
        X, Y = small_batch(seed=2)
        G = mlp.per_sample_grads(params, X, Y)
        assert np.allclose(G.mean(axis=0), mlp.grad(params, X, Y), atol=1e-12)
        assert np.allclose(G[3], mlp.grad(params, X[3:4], Y[3:4]), atol=1e-12)


@pytest.mark.parametrize("activation", ["tanh", "identity"])
class TestHvp:
    def test_matches_gradient_finite_differences(self, activation):
        params = small_net(seed=3, activation=activation)
        X, Y = small_batch(seed=5)
        flat = params.to_flat()
        rng = np.random.default_rng(0)
        for _ in range(3):
            v = rng.normal(size=params.num_params)
            hv = mlp.hvp(params, X, Y, v)
            eps = 1e-4 * np.linalg.norm(flat) / np.linalg.norm(v)
            fd = (
                mlp.grad(params.from_flat(flat + eps * v), X, Y)
                - mlp.grad(params.from_flat(flat - eps * v), X, Y)
            ) / (2 * eps)
            assert np.linalg.norm(hv - fd) <= 1e-4 * np.linalg.norm(fd)

    def test_symmetry(self, activation):
        params = small_net(seed=4, activation=activation)
        X, Y = small_batch(seed=6)
        rng = np.random.default_rng(2)
        for _ in range(5):
            u = rng.normal(size=params.num_params)
            v = rng.normal(size=params.num_params)
            a = u @ mlp.hvp(params, X, Y, v)
            b = v @ mlp.hvp(params, X, Y, u)
            assert a == pytest.approx(b, rel=1e-6, abs=1e-10)

    def test_matches_materialized_hessian(self, activation):
        params = mlp.init_mlp((3, 5, 2), activation, 1.0, seed=8)
        X, Y = small_batch(seed=9, n=7, d_in=3, k=2)
        p = params.num_params
        H = np.column_stack([mlp.hvp(params, X, Y, np.eye(p)[j]) for j in range(p)])
        assert np.abs(H - H.T).max() <= 1e-12
        rng = np.random.default_rng(4)
        for _ in range(5):
            v = rng.normal(size=p)
            hv = mlp.hvp(params, X, Y, v)
            assert np.linalg.norm(H @ v - hv) <= 1e-6 * np.linalg.norm(hv)

    def test_zero_vector(self, activation):
        params = small_net(activation=activation)
        X, Y = small_batch()
        assert np.allclose(mlp.hvp(params, X, Y, np.zeros(params.num_params)), 0.0)


class TestHvpLinearNetwork:
    def test_last_layer_block_constant_in_last_layer_params(self):
        # a deep linear net is only multilinear in its joint parameters, but
        # restricted to the output layer the loss is exactly least squares:
        # the output-layer Hessian block must not move when those parameters do
        params = small_net(seed=5, activation="identity", dims=(4, 3, 2))
        X, Y = small_batch(seed=3, n=9, d_in=4, k=2)
        p = params.num_params
        last_block = slice(p - (3 * 2 + 2), p)  # W_last and b_last entries
        rng = np.random.default_rng(1)
        v = np.zeros(p)
        v[last_block] = rng.normal(size=3 * 2 + 2)
        base = mlp.hvp(params, X, Y, v)[last_block]
        shift = np.zeros(p)
        shift[last_block] = 0.05 * rng.normal(size=3 * 2 + 2)
        moved = mlp.hvp(params.from_flat(params.to_flat() + shift), X, Y, v)[last_block]
        assert np.allclose(base, moved, atol=1e-10)


class TestGgn:
    def test_psd(self):
        params = small_net(seed=7)
        X, Y = small_batch(seed=1)
        rng = np.random.default_rng(3)
        for _ in range(100):
            v = rng.normal(size=params.num_params)
            assert v @ mlp.ggn_hvp(params, X, Y, v) >= -1e-12

    def test_equals_hvp_at_interpolation(self):
        params = small_net(seed=2)
        X, _ = small_batch(seed=4)
        Y = mlp._forward(params, X)[0][-1]
        rng = np.random.default_rng(5)
        for _ in range(5):
            v = rng.normal(size=params.num_params)
            hv = mlp.hvp(params, X, Y, v)
            gv = mlp.ggn_hvp(params, X, Y, v)
            assert np.linalg.norm(gv - hv) <= 1e-6 * max(np.linalg.norm(hv), 1e-12)

    def test_equals_hvp_for_linear_network_at_interpolation(self):
        # depth makes even an identity-activation net multilinear in its joint
        # parameters, so the curvatures agree exactly only once the residual
        # (which scales every cross-layer second-order term) vanishes
        params = small_net(seed=6, activation="identity")
        X, _ = small_batch(seed=7)
        Y = mlp._forward(params, X)[0][-1]
        rng = np.random.default_rng(6)
        for _ in range(5):
            v = rng.normal(size=params.num_params)
            hv = mlp.hvp(params, X, Y, v)
            gv = mlp.ggn_hvp(params, X, Y, v)
            assert np.linalg.norm(gv - hv) <= 1e-10 * max(np.linalg.norm(hv), 1e-12)

    def test_residual_controls_the_gap(self):
        # shrinking the residual shrinks |hvp - ggn| proportionally
        params = small_net(seed=6, activation="identity")
        X, _ = small_batch(seed=7)
        f = mlp._forward(params, X)[0][-1]
        r = np.random.default_rng(8).normal(size=f.shape)
        v = np.random.default_rng(9).normal(size=params.num_params)
        gaps = []
        for scale in (1.0, 0.5, 0.25):
            Y = f - scale * r
            gaps.append(np.linalg.norm(mlp.hvp(params, X, Y, v) - mlp.ggn_hvp(params, X, Y, v)))
        assert gaps[1] == pytest.approx(gaps[0] / 2, rel=1e-9)
        assert gaps[2] == pytest.approx(gaps[0] / 4, rel=1e-9)


class TestTenSeededConfigs:
    def test_grad_and_hvp_finite_differences(self):
        # ten architectures/data draws, alternating activations
        for seed in range(10):
            rng = np.random.default_rng(seed)
            d_in, h, k = rng.integers(2, 7), rng.integers(3, 9), rng.integers(1, 4)
            act = "tanh" if seed % 2 == 0 else "relu"
            params = mlp.init_mlp((d_in, h, k), act, 1.0, seed=seed)
            X = rng.normal(size=(8, d_in))
            Y = rng.normal(size=(8, k))
            flat = params.to_flat()
            g = mlp.grad(params, X, Y)
            eps = 1e-6
            for j in rng.choice(params.num_params, 5, replace=False):
                e = np.zeros_like(flat)
                e[j] = eps
                fd = (
                    mlp.forward_loss(params.from_flat(flat + e), X, Y)
                    - mlp.forward_loss(params.from_flat(flat - e), X, Y)
                ) / (2 * eps)
                assert fd == pytest.approx(g[j], rel=2e-5, abs=1e-9), (seed, j)
            v = rng.normal(size=params.num_params)
            hv = mlp.hvp(params, X, Y, v)
            heps = 1e-5 * max(np.linalg.norm(flat), 1.0) / np.linalg.norm(v)
            fdv = (
                mlp.grad(params.from_flat(flat + heps * v), X, Y)
                - mlp.grad(params.from_flat(flat - heps * v), X, Y)
            ) / (2 * heps)
            # relu Hessians are only piecewise smooth; allow the looser bound
            tol = 1e-4 if act == "tanh" else 5e-3
            assert np.linalg.norm(hv - fdv) <= tol * max(np.linalg.norm(fdv), 1e-10), seed


class TestOracle:
    def test_contract(self):
        params = small_net(seed=1)
        X, Y = small_batch(seed=0)
        oracle = mlp.MlpOracle(params, X, Y)
        m.check_oracle(oracle, params.to_flat(), seed=0)

    def test_batch_hvp_full_consistency(self):
        params = small_net(seed=1)
        X, Y = small_batch(seed=0)
        oracle = mlp.MlpOracle(params, X, Y)
        theta = params.to_flat()
        v = np.random.default_rng(2).normal(size=oracle.param_dim)
        full = oracle.hvp_full(theta, v)
        batch = oracle.hvp_batch(theta, np.arange(oracle.num_samples), v)
        assert np.allclose(full, batch, atol=1e-12)


class TestDatasets:
    def test_easy_separable_linear_probe(self):
        data = mlp.make_synthetic_dataset("easy-separable", 200, 10, 4, 1.0, seed=5)
        X1 = np.column_stack([data.inputs, np.ones(data.n)])
        W, *_ = np.linalg.lstsq(X1, data.targets, rcond=None)
        pred = np.argmax(X1 @ W, axis=1)
        truth = np.argmax(data.targets, axis=1)
        assert np.all(pred == truth)

    def test_one_hot_targets(self):
        data = mlp.make_synthetic_dataset("blobs", 64, 6, 3, 1.5, seed=1)
        assert np.allclose(data.targets.sum(axis=1), 1.0)
        assert set(np.unique(data.targets)) == {0.0, 1.0}

    def test_determinism(self):
        a = mlp.make_synthetic_dataset("blobs", 50, 5, 3, 2.0, seed=9)
        b = mlp.make_synthetic_dataset("blobs", 50, 5, 3, 2.0, seed=9)
        assert np.array_equal(a.inputs, b.inputs)
        assert np.array_equal(a.targets, b.targets)

    def test_noisy_labels_flip_fraction(self):
        clean = mlp.make_synthetic_dataset("blobs", 200, 5, 4, 1.0, seed=7)
        noisy = mlp.make_synthetic_dataset("noisy-labels", 200, 5, 4, 1.0, seed=7, label_noise=0.2)
        changed = np.mean(np.argmax(clean.targets, 1) != np.argmax(noisy.targets, 1))
        assert 0.1 <= changed <= 0.2  # flips can land on the original class

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            mlp.make_synthetic_dataset("spiral", 10, 2, 2, 1.0)


class TestDetectCatapult:
    def test_monotone_no_events(self):
        series = np.exp(-0.01 * np.arange(200))
        assert mlp.detect_catapult(series) == []

    def test_single_spike(self):
        series = np.ones(100)
        series[50:53] = 10.0
        events = mlp.detect_catapult(series, window=20, factor=3.0)
        assert len(events) == 1
        ev = events[0]
        assert ev.start_step == 50
        assert ev.peak_ratio == pytest.approx(10.0)
        assert 50 <= ev.peak_step <= 52

    def test_boundary_no_event(self):
        series = np.ones(100)
        series[60] = 3.0 - 1e-9
        assert mlp.detect_catapult(series, window=20, factor=3.0) == []

    def test_disjoint_events(self):
        series = np.ones(200)
        series[50:52] = 8.0
        series[120:122] = 6.0
        events = mlp.detect_catapult(series)
        assert [e.start_step for e in events] == [50, 120]

    def test_window_validation(self):
        with pytest.raises(ValueError):
            mlp.detect_catapult([1.0] * 10, window=2)


class TestNoisyGd:
    def _tiny(self, n=32, seed=0):
        data = mlp.make_synthetic_dataset("blobs", n, 4, 2, 1.0, seed=seed)
        params = mlp.init_mlp((4, 8, 2), "tanh", 1.0, seed=seed)
        return params, data

    def test_full_batch_anisotropic_is_plain_gd(self):
        params, data = self._tiny()
        stepped = mlp.noisy_gd_step(params, data, 0.05, "anisotropic-sampling", seed=3, b=data.n)
        g = mlp.grad(params, data.inputs, data.targets)
        expect = params.to_flat() - 0.05 * g
        assert np.allclose(stepped.to_flat(), expect, atol=1e-12)

    def test_duplicate_samples_no_noise(self):
        # per-sample gradients all equal -> zero covariance -> exact GD step
        rng = np.random.default_rng(0)
        X = np.tile(rng.normal(size=(1, 4)), (16, 1))
        Y = np.tile(np.array([[1.0, 0.0]]), (16, 1))
        data = mlp.Dataset(X, Y, "blobs")
        params = mlp.init_mlp((4, 8, 2), "tanh", 1.0, seed=1)
        g = mlp.grad(params, X, Y)
        for mode in ("diagonal", "isotropic"):
            stepped = mlp.noisy_gd_step(params, data, 0.05, mode, seed=2, b=4)
            assert np.allclose(stepped.to_flat(), params.to_flat() - 0.05 * g, atol=1e-12)

    def test_diagonal_noise_covariance_matches(self):
        params, data = self._tiny(n=24, seed=5)
        b = 4
        diag, trace = mlp.gradient_noise_stats(params, data.inputs, data.targets)
        g = mlp.grad(params, data.inputs, data.targets)
        flat = params.to_flat()
        draws = []
        for t in range(10_000):
            stepped = mlp.noisy_gd_step(params, data, 1.0, "diagonal", seed=9, b=b,
                                        noise_stats=(diag, trace), step_index=t)
            draws.append(flat - stepped.to_flat() - g)
        draws = np.array(draws)
        emp = draws.var(axis=0)
        big = diag > np.quantile(diag, 0.8)  # compare where the target is well away from 0
        ratio = emp[big].sum() / (diag[big].sum() / b)
        assert ratio == pytest.approx(1.0, abs=0.1)

    def test_isotropic_trace_matches(self):
        params, data = self._tiny(n=24, seed=6)
        b = 4
        diag, trace = mlp.gradient_noise_stats(params, data.inputs, data.targets)
        g = mlp.grad(params, data.inputs, data.targets)
        flat = params.to_flat()
        acc = 0.0
        trials = 10_000
        for t in range(trials):
            stepped = mlp.noisy_gd_step(params, data, 1.0, "isotropic", seed=10, b=b,
                                        noise_stats=(diag, trace), step_index=t)
            noise = flat - stepped.to_flat() - g
            acc += noise @ noise
        assert acc / trials == pytest.approx(trace / b, rel=0.1)

    def test_b_exceeds_n(self):
        params, data = self._tiny()
        with pytest.raises(ValueError):
            mlp.noisy_gd_step(params, data, 0.1, "diagonal", b=data.n + 1)


class TestTrain:
    def _setup(self, **kw):
        data = mlp.make_synthetic_dataset("easy-separable", 64, 6, 3, 0.5, seed=2)
        params = mlp.init_mlp((6, 12, 3), "tanh", 1.0, seed=0)
        cfg = mlp.TrainConfig(**{**dict(eta=0.05, b=8, steps=400, seed=0,
                                        metric_every=100, metric_batches=8), **kw})
        return params, data, cfg

    def test_full_batch_gd_monotone(self):
        params, data, cfg = self._setup(noise_mode="none")
        log = mlp.train(params, data, cfg, metrics=())
        assert not log.diverged
        tail = log.loss_series[5:]
        assert np.all(np.diff(tail) <= 1e-12)

    def test_metric_rows_at_cadence(self):
        params, data, cfg = self._setup()
        log = mlp.train(params, data, cfg, metrics=("batch_sharpness",))
        assert log.steps == [0, 100, 200, 300]
        assert all(np.isfinite(r.batch_sharpness) for r in log.reports)
        assert all(np.isnan(r.lambda_max) for r in log.reports)

    def test_schedule_applied_and_echoed(self):
        params, data, cfg = self._setup(steps=300)
        schedule = [mlp.ScheduleEvent(120, "set_eta", 0.01),
                    mlp.ScheduleEvent(200, "set_batch", 16)]
        log = mlp.train(params, data, cfg, schedule, metrics=())
        assert log.schedule_events == [(120, "set_eta", 0.01), (200, "set_batch", 16.0)]

    def test_schedule_beyond_run_rejected(self):
        params, data, cfg = self._setup(steps=100)
        with pytest.raises(ValueError):
            mlp.train(params, data, cfg, [mlp.ScheduleEvent(100, "set_eta", 0.01)])

    def test_divergence_flag_not_crash(self):
        params, data, cfg = self._setup(eta=50.0, steps=2000)
        log = mlp.train(params, data, cfg, metrics=())
        assert log.diverged

    def test_determinism(self):
        p1, data, cfg = self._setup()
        log1 = mlp.train(p1, data, cfg, metrics=())
        p2, _, _ = self._setup()
        log2 = mlp.train(p2, data, cfg, metrics=())
        assert np.array_equal(log1.final_params.to_flat(), log2.final_params.to_flat())
        assert np.array_equal(log1.loss_series, log2.loss_series)

    def test_trainer_snapshot_restore(self):
        params, data, cfg = self._setup()
        tr = mlp.MlpTrainer(params, data, cfg)
        tr.run_steps(50)
        snap = tr.snapshot()
        flat = tr.params.to_flat().copy()
        tr.run_steps(30)
        tr.set_eta(0.5)
        tr.restore(snap)
        assert np.array_equal(tr.params.to_flat(), flat)
        assert tr.step_count == 50
        assert tr.eta == cfg.eta


class TestGapScanStatic:
    def test_full_batch_gap_vanishes_and_monotone(self):
        data = mlp.make_synthetic_dataset("blobs", 32, 5, 2, 1.5, seed=4)
        params = mlp.init_mlp((5, 10, 2), "tanh", 1.0, seed=3)
        rows = mlp.gap_scan_static(params, data, [1, 4, 16, 32], num_batches=200, seed=0)
        assert all(r.lambda_max == rows[0].lambda_max for r in rows)
        assert rows[-1].gap == pytest.approx(0.0, abs=1e-3 * rows[-1].lambda_max)
        gaps = [r.gap for r in rows]
        assert all(gaps[i] >= gaps[i + 1] - 0.15 * abs(gaps[i]) - 1e-3 for i in range(len(gaps) - 1))

    def test_requires_ascending(self):
        data = mlp.make_synthetic_dataset("blobs", 16, 5, 2, 1.5, seed=4)
        params = mlp.init_mlp((5, 8, 2), "tanh", 1.0, seed=3)
        with pytest.raises(ValueError):
            mlp.gap_scan_static(params, data, [4, 2], num_batches=8)


class TestPlateauMedian:
    def test_final_tenth(self):
        vals = list(range(100))
        assert mlp.plateau_median(vals) == pytest.approx(np.median(np.arange(90, 100)))

    def test_nan_skipped(self):
        assert mlp.plateau_median([float("nan"), 1.0, 2.0, 3.0]) == 3.0

    def test_empty(self):
        assert np.isnan(mlp.plateau_median([]))
