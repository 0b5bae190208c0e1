import csv

import numpy as np
import pytest

from toricnet.lattice import Lattice, syndromes_of
from toricnet.noise import ErrorModel, generate_dataset
from toricnet.rbm import RbmParams, effective_energy_batch, enumerate_bits, zeros_params
from toricnet.seeds import NS_TRAIN, substream
from toricnet.training import (
    Hyperparams,
    cd_k_gradient,
    default_grid,
    exact_kl_gradient,
    grid_search,
    init_params,
    sgd_step,
    train,
)

from conftest import tiny_params


def small_hyper(**kw):
    base = dict(eta=0.05, batch_size=50, init_width=0.1, cd_k=1, l2=0.0, n_h=8,
                epochs=5, n_eq=20)
    base.update(kw)
    return Hyperparams(**base)


class TestHyperparams:
    def test_validation(self):
        with pytest.raises(ValueError):
            Hyperparams(eta=0.0)
        with pytest.raises(ValueError):
            Hyperparams(batch_size=0)
        with pytest.raises(ValueError):
            Hyperparams(cd_k=0)
        with pytest.raises(ValueError):
            Hyperparams(l2=-1e-4)
        with pytest.raises(ValueError):
            Hyperparams(n_h=0)
        with pytest.raises(ValueError):
            Hyperparams(init_width=-0.1)

    def test_dict_round_trip(self):
        h = small_hyper(eta=0.02, n_h=12)
        assert Hyperparams.from_dict(h.to_dict()) == h

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(ValueError, match="unknown"):
            Hyperparams.from_dict({"learning_rate": 0.1})


class TestInitParams:
    def test_zero_width_gives_zero_weights(self, lat2):
        params = init_params(lat2, small_hyper(init_width=0.0), np.random.default_rng(0))
        assert not params.U.any()
        assert not params.W.any()

    def test_biases_zero(self, lat2):
        params = init_params(lat2, small_hyper(), np.random.default_rng(1))
        assert not params.b.any() and not params.c.any() and not params.d.any()

    def test_uniform_moments(self):
        lat = Lattice(6)
        hyper = small_hyper(n_h=200, init_width=0.2)
        params = init_params(lat, hyper, np.random.default_rng(2))
        entries = np.concatenate([params.U.ravel(), params.W.ravel()])
        assert entries.min() >= -0.1 and entries.max() <= 0.1
        # mean of U(-w/2, w/2) is 0 with sd w/sqrt(12); 5 sigma of sample mean
        sigma = 0.2 / np.sqrt(12) / np.sqrt(entries.size)
        assert abs(entries.mean()) < 5 * sigma

    def test_deterministic(self, lat2):
        a = init_params(lat2, small_hyper(), np.random.default_rng(3))
        b = init_params(lat2, small_hyper(), np.random.default_rng(3))
        assert np.array_equal(a.U, b.U) and np.array_equal(a.W, b.W)


class TestCdKGradient:
    def test_shapes(self, lat2):
        rng = np.random.default_rng(4)
        params = zeros_params(8, lat2.n_links, lat2.n_vertices)
        ds = generate_dataset(lat2, ErrorModel(0.2), 30, seed=0)
        grad = cd_k_gradient(params, (ds.chains, ds.syndromes()), 1, rng)
        assert grad.dU.shape == params.U.shape
        assert grad.dW.shape == params.W.shape
        assert grad.db.shape == params.b.shape
        assert grad.dc.shape == params.c.shape
        assert grad.dd.shape == params.d.shape

    def test_empty_minibatch_rejected(self):
        params = zeros_params(2, 4, 2)
        with pytest.raises(ValueError, match="empty"):
            cd_k_gradient(params, (np.zeros((0, 4)), np.zeros((0, 2))), 1,
                          np.random.default_rng(0))

    def test_zero_params_db_closed_form(self):
        # at zero parameters the negative chain is fair coins, so the
        # expected error-bias gradient is mean(e_data) - 0.5
        params = zeros_params(3, 4, 2)
        rng = np.random.default_rng(5)
        E = (rng.random((4000, 4)) < 0.3).astype(float)
        S = (rng.random((4000, 2)) < 0.5).astype(float)
        grad = cd_k_gradient(params, (E, S), 1, np.random.default_rng(6))
        expected = E.mean(axis=0) - 0.5
        sigma = 0.5 / np.sqrt(4000)
        assert np.all(np.abs(grad.db - expected) < 5 * sigma)

    def test_cd_converges_to_exact_gradient(self):
        # with a long chain the CD estimate is unbiased for the exact
        # gradient; average 200 independent estimates and compare
        # componentwise within three standard errors
        rng = np.random.default_rng(7)
        params = tiny_params(rng, scale=0.8)
        data_rng = np.random.default_rng(8)
        E = (data_rng.random((20, 4)) < 0.4).astype(float)
        S = (data_rng.random((20, 2)) < 0.5).astype(float)
        exact = exact_kl_gradient(params, E, S)

        reps = 200
        chain_rng = np.random.default_rng(9)
        samples = {name: [] for name in ("dU", "dW", "db", "dc", "dd")}
        for _ in range(reps):
            grad = cd_k_gradient(params, (E, S), 10_000, chain_rng)
            for name in samples:
                samples[name].append(getattr(grad, name))
        for name in samples:
            stack = np.stack(samples[name])
            mean = stack.mean(axis=0)
            stderr = stack.std(axis=0, ddof=1) / np.sqrt(reps)
            assert np.all(np.abs(mean - getattr(exact, name)) < 3 * stderr + 1e-12)


class TestExactKlGradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        params = tiny_params(rng, scale=0.9)
        data_rng = np.random.default_rng(11)
        E = (data_rng.random((12, 4)) < 0.4).astype(float)
        S = (data_rng.random((12, 2)) < 0.5).astype(float)

        from toricnet.rbm import exact_log_partition

        def mean_log_likelihood(p):
            return float(-effective_energy_batch(p, E, S).mean() - exact_log_partition(p))

        analytic = exact_kl_gradient(params, E, S)
        step = 1e-5
        arrays = {"U": params.U, "W": params.W, "b": params.b, "c": params.c, "d": params.d}
        for name, arr in arrays.items():
            fd = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                bumped = {k: v.copy() for k, v in arrays.items()}
                bumped[name][idx] += step
                up = mean_log_likelihood(RbmParams(**bumped))
                bumped[name][idx] -= 2 * step
                down = mean_log_likelihood(RbmParams(**bumped))
                fd[idx] = (up - down) / (2 * step)
            got = getattr(analytic, "d" + name)
            rel = np.abs(got - fd).max() / max(np.abs(fd).max(), 1e-12)
            assert rel < 1e-5, f"{name}: relative error {rel}"

    def test_stationary_at_ml_point(self):
        # one error unit, one syndrome unit, zero weights: the exact ML point
        # sets each visible bias to the logit of its empirical frequency
        E = np.array([[1.0], [0.0], [0.0], [0.0]])
        S = np.array([[1.0], [0.0], [1.0], [0.0]])
        b = np.log(0.25 / 0.75)
        params = RbmParams(U=np.zeros((1, 1)), W=np.zeros((1, 1)),
                           b=np.array([b]), c=np.zeros(1), d=np.array([0.0]))
        grad = exact_kl_gradient(params, E, S)
        for name in ("dU", "dW", "db", "dc", "dd"):
            assert np.allclose(getattr(grad, name), 0.0, atol=1e-12)

    def test_balanced_dataset_zero_db(self):
        params = zeros_params(3, 4, 2)
        E = np.array([[1, 1, 0, 0], [0, 0, 1, 1]], dtype=float)
        S = np.array([[1, 0], [0, 1]], dtype=float)
        grad = exact_kl_gradient(params, E, S)
        assert np.allclose(grad.db, 0.0, atol=1e-12)

    def test_size_cap(self):
        params = zeros_params(2, 16, 8)
        with pytest.raises(ValueError, match="oracle size exceeded"):
            exact_kl_gradient(params, np.zeros((1, 16)), np.zeros((1, 8)))


class TestSgdStep:
    def test_zero_grad_no_change(self):
        rng = np.random.default_rng(12)
        params = tiny_params(rng)
        zero = exact_kl_gradient(zeros_params(3, 4, 2), np.zeros((1, 4)), np.zeros((1, 2)))
        for name in ("dU", "dW", "db", "dc", "dd"):
            getattr(zero, name)[...] = 0.0
        out = sgd_step(params, zero, small_hyper(l2=0.0))
        for name in ("U", "W", "b", "c", "d"):
            assert np.array_equal(getattr(out, name), getattr(params, name))

    def test_decay_only(self):
        rng = np.random.default_rng(13)
        params = tiny_params(rng)
        params = RbmParams(U=params.U, W=params.W, b=params.b + 1.0, c=params.c, d=params.d)
        zero = exact_kl_gradient(zeros_params(3, 4, 2), np.zeros((1, 4)), np.zeros((1, 2)))
        for name in ("dU", "dW", "db", "dc", "dd"):
            getattr(zero, name)[...] = 0.0
        hyper = small_hyper(eta=0.1, l2=0.01)
        out = sgd_step(params, zero, hyper)
        factor = 1 - 0.1 * 0.01
        assert np.allclose(out.U, params.U * factor)
        assert np.allclose(out.W, params.W * factor)
        assert np.array_equal(out.b, params.b)
        assert np.array_equal(out.c, params.c)
        assert np.array_equal(out.d, params.d)

    def test_bias_only_step_from_zero(self):
        params = zeros_params(3, 4, 2)
        grad = exact_kl_gradient(params, np.ones((1, 4)), np.ones((1, 2)))
        for name in ("dU", "dW", "dc", "dd"):
            getattr(grad, name)[...] = 0.0
        grad.db[...] = np.array([1.0, -2.0, 0.5, 0.0])
        out = sgd_step(params, grad, small_hyper(eta=0.05))
        assert np.allclose(out.b, 0.05 * grad.db)
        assert not out.U.any() and not out.W.any()


class TestTrain:
    def test_zero_epochs_returns_init(self, lat2):
        ds = generate_dataset(lat2, ErrorModel(0.1), 100, seed=1)
        hyper = small_hyper(epochs=0)
        params = train(ds, hyper, seed=44)
        expected = init_params(lat2, hyper, substream(44, NS_TRAIN, 0))
        assert np.array_equal(params.U, expected.U)
        assert np.array_equal(params.W, expected.W)

    def test_deterministic(self, lat2):
        ds = generate_dataset(lat2, ErrorModel(0.1), 200, seed=1)
        a = train(ds, small_hyper(), seed=5)
        b = train(ds, small_hyper(), seed=5)
        for name in ("U", "W", "b", "c", "d"):
            assert np.array_equal(getattr(a, name), getattr(b, name))

    def test_kl_decreases_over_training(self, lat2):
        # exact KL between the empirical data distribution and the model,
        # averaged over the first vs last quartile of epochs; determinism
        # makes an epochs=k run a prefix of a longer one, so per-epoch
        # snapshots come from reruns
        ds = generate_dataset(lat2, ErrorModel(0.15), 600, seed=2)
        chains = enumerate_bits(lat2.n_links).astype(float)
        synds = syndromes_of(lat2, chains.astype(np.uint8)).astype(float)

        patterns = {tuple(row): i for i, row in enumerate(enumerate_bits(lat2.n_links))}
        counts = np.zeros(len(patterns))
        for row in ds.chains:
            counts[patterns[tuple(row)]] += 1
        p_data = counts / counts.sum()

        from toricnet.rbm import exact_log_partition

        def exact_kl(params):
            log_model = -effective_energy_batch(params, chains, synds) - exact_log_partition(params)
            mask = p_data > 0
            return float((p_data[mask] * (np.log(p_data[mask]) - log_model[mask])).sum())

        total_epochs = 24
        kls = []
        for k in range(1, total_epochs + 1):
            params = train(ds, small_hyper(epochs=k, n_h=16, eta=0.1, cd_k=5), seed=7)
            kls.append(exact_kl(params))
        q = total_epochs // 4
        assert np.mean(kls[-q:]) < np.mean(kls[:q])

    def test_training_log(self, tmp_path, lat2):
        ds = generate_dataset(lat2, ErrorModel(0.1), 120, seed=3)
        log = tmp_path / "log.csv"
        train(ds, small_hyper(epochs=4), seed=6, log_path=log)
        with open(log) as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 4
        assert list(rows[0]) == [
            "epoch", "mean_effective_energy", "grad_norm_U", "grad_norm_W",
            "grad_norm_b", "grad_norm_c", "grad_norm_d", "wall_time_s",
        ]
        assert [int(r["epoch"]) for r in rows] == [0, 1, 2, 3]
        # append-only: a second run extends the file
        train(ds, small_hyper(epochs=2), seed=6, log_path=log)
        with open(log) as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 6


class TestGridSearch:
    def test_single_point(self, lat2):
        ds = generate_dataset(lat2, ErrorModel(0.1), 200, seed=4)
        grid = [small_hyper(epochs=2)]
        val = generate_dataset(lat2, ErrorModel(0.1), 20, seed=5).chains
        hyper, params = grid_search(ds, grid, val, seed=6)
        assert hyper == grid[0]
        assert params.n_h == grid[0].n_h

    def test_empty_grid_rejected(self, lat2):
        ds = generate_dataset(lat2, ErrorModel(0.1), 10, seed=0)
        with pytest.raises(ValueError, match="empty"):
            grid_search(ds, [], ds.chains[:5], seed=0)

    def test_healthy_beats_degenerate(self, lat4):
        # a single hidden unit cannot model the syndrome coupling; a 2L^2
        # hidden layer can
        ds = generate_dataset(lat4, ErrorModel(0.08), 2000, seed=7)
        grid = [
            small_hyper(n_h=1, epochs=40, eta=0.1, n_eq=50),
            small_hyper(n_h=2 * lat4.n_vertices, epochs=40, eta=0.1, n_eq=50),
        ]
        val = generate_dataset(lat4, ErrorModel(0.08), 150, seed=8).chains
        hyper, _params = grid_search(ds, grid, val, seed=9, max_sweeps=300)
        assert hyper.n_h == 2 * lat4.n_vertices

    def test_deterministic(self, lat2):
        ds = generate_dataset(lat2, ErrorModel(0.1), 150, seed=10)
        grid = [small_hyper(epochs=2), small_hyper(epochs=2, n_h=12)]
        val = generate_dataset(lat2, ErrorModel(0.1), 30, seed=11).chains
        h1, p1 = grid_search(ds, grid, val, seed=12)
        h2, p2 = grid_search(ds, grid, val, seed=12)
        assert h1 == h2
        assert np.array_equal(p1.W, p2.W)

    def test_report_csv(self, tmp_path, lat2):
        ds = generate_dataset(lat2, ErrorModel(0.1), 100, seed=13)
        grid = [small_hyper(epochs=1), small_hyper(epochs=1, n_h=12)]
        val = generate_dataset(lat2, ErrorModel(0.1), 20, seed=14).chains
        report = tmp_path / "grid.csv"
        grid_search(ds, grid, val, seed=15, report_path=report)
        with open(report) as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 2
        assert {"index", "n_h", "p_fail", "n_timeout"} <= set(rows[0])


def test_default_grid_axes(lat4):
    grid = default_grid(lat4)
    assert len(grid) == 144
    assert {h.n_h for h in grid} == {32, 64, 128}
    assert {h.eta for h in grid} == {0.01, 0.05, 0.1}
    assert {h.cd_k for h in grid} == {1, 10}
    assert {h.l2 for h in grid} == {0.0, 1e-4}
    assert {h.batch_size for h in grid} == {50, 100}
    assert {h.init_width for h in grid} == {0.01, 0.1}
    assert all(h.epochs == 500 for h in grid)
