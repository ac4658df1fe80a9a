import json

import numpy as np
import pytest

from ewginn.flownet import generate_dataset, orient_network
from ewginn.graph import Graph, augmented_adjacency, barabasi_albert
from ewginn.layers import GILayer
from ewginn.model import ModelConfig, Network, build_network
from ewginn.numerics import finite_difference_gradient
from ewginn.train import (
    AdamState,
    TrainConfig,
    TrainingDiverged,
    adam_step,
    mse_loss,
    split_dataset,
    split_indices,
    train,
)


def small_problem(kind="gi", seed=0, n_rows=60):
    net_graph = orient_network(barabasi_albert(7, 2, 1))
    data = generate_dataset(net_graph, n_rows, 3)
    lg = net_graph.line_graph
    net = build_network(
        ModelConfig(kind, 2, 3, "swish", "reduce_mean", seed), augmented_adjacency(lg), data.sink_incoming
    )
    tr, va = split_indices(n_rows, 0.2, seed)
    return net, data.capacities[tr], data.flows[tr], data.capacities[va], data.flows[va]


class TestAdam:
    def test_zero_gradient_keeps_theta(self):
        theta = np.array([0.3, -1.0])
        out = adam_step(AdamState.zeros(2), theta, np.zeros(2), 0.1)
        assert np.array_equal(out, theta)

    def test_first_step(self):
        state = AdamState.zeros(1)
        theta = adam_step(state, np.zeros(1), np.ones(1), 0.1)
        assert theta[0] == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-15)
        assert state.t == 1

    def test_quadratic_descends(self):
        state, theta = AdamState.zeros(1), np.ones(1)
        for _ in range(100):
            theta = adam_step(state, theta, 2 * theta, 0.01)
        assert abs(theta[0]) < 1.0

    def test_non_finite_gradient(self):
        with pytest.raises(FloatingPointError):
            adam_step(AdamState.zeros(2), np.zeros(2), np.array([1.0, np.nan]), 0.1)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adam_step(AdamState.zeros(2), np.zeros(3), np.zeros(3), 0.1)


class TestMSE:
    def test_equal(self):
        loss, grad = mse_loss(np.ones((3, 2)), np.ones((3, 2)))
        assert loss == 0.0 and not np.any(grad)

    def test_unit_offset(self):
        loss, grad = mse_loss([[2.0, 3.0]], [[1.0, 2.0]])
        assert loss == 1.0 and grad.tolist() == [[1.0, 1.0]]

    def test_gradient_matches_fd(self, rng):
        target = rng.normal(size=(4, 3))
        pred = rng.normal(size=(4, 3))
        fd = finite_difference_gradient(lambda p: mse_loss(p, target)[0], pred)
        assert np.allclose(mse_loss(pred, target)[1], fd, rtol=1e-8, atol=1e-10)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse_loss(np.ones(3), np.ones(4))


class TestSplit:
    @pytest.mark.parametrize("n,n_train,n_val", [(500, 400, 100), (10, 8, 2)])
    def test_sizes(self, n, n_train, n_val):
        tr, va = split_indices(n, 0.2, 1)
        assert (tr.size, va.size) == (n_train, n_val)
        assert np.array_equal(np.sort(np.concatenate([tr, va])), np.arange(n))

    def test_deterministic_and_seeded(self):
        assert np.array_equal(split_indices(50, 0.2, 3)[1], split_indices(50, 0.2, 3)[1])
        assert not np.array_equal(split_indices(50, 0.2, 3)[1], split_indices(50, 0.2, 4)[1])

    @pytest.mark.parametrize("n,frac", [(2, 0.1), (3, 0.9), (10, 0.0), (10, 1.0)])
    def test_degenerate(self, n, frac):
        with pytest.raises(ValueError):
            split_indices(n, frac, 0)

    def test_split_dataset(self):
        data = generate_dataset(orient_network(barabasi_albert(6, 2, 0)), 10, 0)
        tr, va = split_dataset(data, 0.2, 0)
        assert (len(tr), len(va)) == (8, 2)
        assert tr.network == data.network


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.lr, cfg.es_patience, cfg.es_start_epoch) == (0.002, 550, 200)
        assert (cfg.plateau_factor, cfg.plateau_patience, cfg.min_lr) == (0.5, 50, 1e-6)

    @pytest.mark.parametrize(
        "kwargs",
        [{"plateau_factor": 1.0}, {"min_lr": 0.1}, {"es_patience": 0}, {"val_fraction": 0.0}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(ValueError):
            TrainConfig.from_dict({"learning_rate": 0.1})
        assert TrainConfig.from_dict({"lr": 0.01}).lr == 0.01


class TestTrain:
    def test_zero_epochs(self):
        net, *arrays = small_problem()
        before = net.get_params()
        hist = train(net, *arrays, TrainConfig(max_epochs=0))
        assert hist.epochs == 0 and hist.stop_reason == "max_epochs"
        assert np.array_equal(net.get_params(), before)

    def test_constant_loss_stops_on_schedule(self):
        adj = augmented_adjacency(Graph(3, ((0, 1), (1, 2))))
        net = build_network(ModelConfig("gi", 1, 1, "linear"), adj, [2])
        net.set_params(np.zeros(net.n_params))
        C = np.ones((5, 3))
        T = np.zeros((5, 1))
        cfg = TrainConfig(batch_size=5)
        hist = train(net, C, T, C[:2], T[:2], cfg)
        assert hist.stop_reason == "early_stopping"
        assert hist.epochs == cfg.es_start_epoch + cfg.es_patience == 750
        assert hist.best_epoch == 1
        assert set(hist.val_loss) == {0.0}

    def test_no_stop_before_start_epoch(self):
        adj = augmented_adjacency(Graph(2, ((0, 1),)))
        net = build_network(ModelConfig("gi", 1, 1, "linear"), adj, [1])
        net.set_params(np.zeros(net.n_params))
        C, T = np.ones((4, 2)), np.zeros((4, 1))
        cfg = TrainConfig(es_patience=5, es_start_epoch=40, batch_size=4)
        hist = train(net, C, T, C, T, cfg)
        assert hist.epochs == 45

    def test_disabled_early_stopping_runs_to_budget(self):
        adj = augmented_adjacency(Graph(2, ((0, 1),)))
        net = build_network(ModelConfig("gi", 1, 1, "linear"), adj, [1])
        net.set_params(np.zeros(net.n_params))
        C, T = np.ones((4, 2)), np.zeros((4, 1))
        cfg = TrainConfig(es_patience=5, es_start_epoch=1, early_stopping=False, max_epochs=30)
        assert train(net, C, T, C, T, cfg).epochs == 30

    def test_lr_schedule_and_restore(self):
        net, Ctr, Ttr, Cva, Tva = small_problem("ewgi")
        cfg = TrainConfig(max_epochs=150, plateau_patience=5, lr=0.02)
        hist = train(net, Ctr, Ttr, Cva, Tva, cfg)
        lrs = np.array(hist.lr)
        assert np.all(np.diff(lrs) <= 0) and np.all(lrs >= cfg.min_lr)
        assert lrs[-1] < cfg.lr
        assert len(hist.train_loss) == len(hist.val_loss) == len(hist.lr) == hist.epochs
        assert 1 <= hist.best_epoch <= hist.epochs
        assert abs(mse_loss(net.predict(Cva), Tva)[0] - hist.best_val_loss) <= 1e-12
        assert hist.best_val_loss == min(hist.val_loss)

    def test_lr_floor(self):
        net, *arrays = small_problem()
        cfg = TrainConfig(max_epochs=60, plateau_patience=1, lr=1e-3, min_lr=1e-4)
        hist = train(net, *arrays, cfg)
        assert min(hist.lr) == 1e-4

    def test_deterministic(self):
        runs = []
        for _ in range(2):
            net, *arrays = small_problem("ewgi", seed=2)
            hist = train(net, *arrays, TrainConfig(max_epochs=20, seed=5))
            runs.append((hist.to_jsonl(), net.get_params()))
        assert runs[0][0] == runs[1][0]
        assert np.array_equal(runs[0][1], runs[1][1])

    def test_linear_toy_task(self, rng):
        n = 5
        adj = augmented_adjacency(Graph(n, ((0, 1), (1, 2), (2, 3), (3, 4))))
        teacher = GILayer(adj, 1, 1, "linear", W=rng.normal(size=(n, 1, 1)), B=rng.normal(size=(n, 1)))
        mask = [0, 2, 4]
        C = rng.uniform(size=(200, n))
        T = Network([teacher], "none", mask).predict(C)
        student = build_network(ModelConfig("gi", 1, 1, "linear"), adj, mask)
        cfg = TrainConfig(lr=0.02, max_epochs=600, batch_size=16, early_stopping=False)
        hist = train(student, C[:160], T[:160], C[160:], T[160:], cfg)
        assert hist.best_val_loss < 1e-6

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reports_epoch(self):
        adj = augmented_adjacency(Graph(2, ((0, 1),)))
        net = build_network(ModelConfig("gi", 1, 1, "linear"), adj, [1])
        C, T = np.full((4, 2), 1e200), np.zeros((4, 1))
        with pytest.raises(TrainingDiverged) as info:
            train(net, C, T, C, T, TrainConfig(max_epochs=3))
        assert info.value.epoch == 1

    def test_history_jsonl(self, tmp_path):
        net, *arrays = small_problem()
        hist = train(net, *arrays, TrainConfig(max_epochs=3))
        hist.save(tmp_path / "h.jsonl")
        lines = [json.loads(x) for x in (tmp_path / "h.jsonl").read_text().splitlines()]
        assert [d["epoch"] for d in lines] == [1, 2, 3]
        assert set(lines[0]) == {"epoch", "train_loss", "val_loss", "lr"}
