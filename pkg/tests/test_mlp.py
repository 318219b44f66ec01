import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldcp.dataset import EncodedDataset, LooView, synth_dataset
from ldcp.mlp import (LooTrainer, MlpArchitecture, MlpNetwork, TrainConfig, accuracy, classify, forward,
                      forward_batch, loss_and_grad, train)
from oracles import numeric_gradient, random_network


def _net(sizes, weights, biases):
    return MlpNetwork(MlpArchitecture(tuple(sizes)), tuple(np.array(w, float) for w in weights),
                      tuple(np.array(b, float) for b in biases))


class TestArchitecture:
    def test_param_count(self):
        arch = MlpArchitecture.from_hidden(4, [5, 3])
        assert arch.layer_sizes == (4, 5, 3, 1)
        assert arch.num_params == 4 * 5 + 5 + 5 * 3 + 3 + 3 * 1 + 1

    def test_requires_hidden_layer(self):
        with pytest.raises(ValueError):
            MlpArchitecture((3, 1))

    def test_requires_single_output(self):
        with pytest.raises(ValueError):
            MlpArchitecture((3, 4, 2))

    def test_str(self):
        assert str(MlpArchitecture.from_hidden(2, [5, 5])) == "2x5"


class TestNetwork:
    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="layer 1"):
            _net((2, 3, 1), [np.zeros((2, 2)), np.zeros((1, 3))], [np.zeros(3), np.zeros(1)])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            _net((1, 1, 1), [[[np.nan]], [[1.0]]], [[0.0], [0.0]])

    def test_flat_roundtrip(self, rng):
        net = random_network(rng, (3, 4, 2, 1))
        assert MlpNetwork.from_flat(net.architecture, net.flat()) == net

    def test_json_roundtrip_exact(self, rng, tmp_path):
        net = random_network(rng, (3, 4, 1))
        p = tmp_path / "net.json"
        net.save(p)
        back = MlpNetwork.load(p)
        assert np.array_equal(back.flat(), net.flat())
        assert list(json.loads(p.read_text())) == ["architecture", "weights", "biases", "seed", "train_config"]

    def test_parameters_immutable(self, rng):
        net = random_network(rng, (2, 2, 1))
        with pytest.raises(ValueError):
            net.weights[0][0, 0] = 1.0


class TestForward:
    def test_zero_network(self):
        net = _net((3, 2, 1), [np.zeros((2, 3)), np.zeros((1, 2))], [np.zeros(2), np.zeros(1)])
        assert forward(net, [0.3, 0.1, 0.9]) == 0.0

    def test_single_hidden_neuron(self):
        net = _net((1, 1, 1), [[[2.0]], [[1.0]]], [[-1.0], [0.0]])
        assert forward(net, [1.0]) == 1.0

    def test_two_inputs(self):
        net = _net((2, 1, 1), [[[1.0, -1.0]], [[1.0]]], [[0.0], [0.3]])
        assert forward(net, [0.5, 0.5]) == pytest.approx(0.3, abs=1e-15)

    def test_dimension_mismatch_names_layer(self):
        net = _net((2, 1, 1), [[[1.0, -1.0]], [[1.0]]], [[0.0], [0.3]])
        with pytest.raises(ValueError, match="layer 1"):
            forward(net, [0.5, 0.5, 0.5])

    def test_batch_matches_single(self, rng):
        net = random_network(rng, (4, 6, 3, 1))
        X = rng.uniform(size=(20, 4))
        assert np.allclose(forward_batch(net, X), [forward(net, x) for x in X], rtol=0, atol=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
    def test_piecewise_linear_within_pattern(self, seed, a):
        rng = np.random.default_rng(seed)
        net = random_network(rng, (3, 4, 3, 1))
        x1 = rng.uniform(size=3)
        x2 = np.clip(x1 + 1e-4 * rng.normal(size=3), 0, 1)

        def pattern(x):
            h, pats = x, []
            for w, b in zip(net.weights[:-1], net.biases[:-1]):
                z = w @ h + b
                pats.append(z > 0)
                h = np.maximum(z, 0)
            return np.concatenate(pats)

        if not np.array_equal(pattern(x1), pattern(x2)):
            return
        mid = a * x1 + (1 - a) * x2
        if not np.array_equal(pattern(mid), pattern(x1)):
            return
        assert forward(net, mid) == pytest.approx(a * forward(net, x1) + (1 - a) * forward(net, x2), abs=1e-12)


class TestClassify:
    def _const(self, c):
        return _net((1, 1, 1), [[[0.0]], [[0.0]]], [[0.0], [c]])

    def test_zero_is_positive(self):
        assert classify(self._const(0.0), [0.5]) == 1

    def test_slightly_negative(self):
        assert classify(self._const(-0.001), [0.5]) == -1

    def test_positive(self):
        assert classify(self._const(7.5), [0.5]) == 1


class TestTraining:
    def test_deterministic(self, small_data):
        arch = MlpArchitecture.from_hidden(3, [4])
        cfg = TrainConfig(epochs=3, batch_size=7, seed=9)
        a, b = train(arch, small_data, cfg), train(arch, small_data, cfg)
        assert np.array_equal(a.flat(), b.flat())

    def test_seed_changes_result(self, small_data):
        arch = MlpArchitecture.from_hidden(3, [4])
        a = train(arch, small_data, TrainConfig(epochs=2, seed=1))
        b = train(arch, small_data, TrainConfig(epochs=2, seed=2))
        assert not np.array_equal(a.flat(), b.flat())

    def test_separable_reaches_high_accuracy(self):
        data = synth_dataset(200, 5, seed=7, noise=0.0)
        net = train(MlpArchitecture.from_hidden(5, [5, 5]), data, TrainConfig(epochs=10, batch_size=8, seed=0))
        assert accuracy(net, data.inputs, data.labels) >= 0.95

    def test_empty_dataset_rejected(self):
        empty = EncodedDataset(np.zeros((0, 2)), np.zeros(0, dtype=int))
        with pytest.raises(ValueError, match="empty"):
            train(MlpArchitecture.from_hidden(2, [2]), empty, TrainConfig(epochs=1))

    def test_single_entry_loo_is_empty(self):
        one = EncodedDataset(np.zeros((1, 2)), np.ones(1, dtype=int))
        with pytest.raises(ValueError):
            train(MlpArchitecture.from_hidden(2, [2]), LooView(one, 0), TrainConfig(epochs=1))

    def test_non_finite_loss_names_epoch(self, small_data):
        cfg = TrainConfig(epochs=5, learning_rate=1e200, batch_size=4, seed=0)
        with pytest.raises(FloatingPointError, match="epoch"):
            with np.errstate(all="ignore"):
                train(MlpArchitecture.from_hidden(3, [4]), small_data, cfg)

    def test_loo_training_reproducible_per_omitted_entry(self, small_trainer):
        a = small_trainer(5)
        b = small_trainer(5)
        assert a == b
        assert a != small_trainer(6)

    def test_train_many_parallel_matches_serial(self, small_trainer):
        serial = small_trainer.train_many([0, 1, 2], workers=1)
        parallel = small_trainer.train_many([0, 1, 2], workers=2)
        assert serial == parallel

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(l1_coefficient=-1.0)
        with pytest.raises(ValueError):
            TrainConfig(seed=2**64)


class TestGradient:
    def test_matches_finite_differences(self, rng):
        for _ in range(3):
            net = random_network(rng, (3, 4, 3, 1), scale=0.8)
            X = rng.uniform(size=(10, 3))
            y = np.where(rng.uniform(size=10) < 0.5, 1, -1)
            w = [np.array(a) for a in net.weights]
            b = [np.array(a) for a in net.biases]
            _, gw, gb = loss_and_grad(w, b, X, y, 1e-3)
            nw, nb = numeric_gradient(w, b, X, y, 1e-3)
            ana = np.concatenate([g.ravel() for g in gw + gb])
            num = np.concatenate([g.ravel() for g in nw + nb])
            assert np.linalg.norm(ana - num) / np.linalg.norm(num) < 1e-4

    def test_l1_subgradient_zero_at_zero(self):
        w = [np.zeros((1, 1)), np.zeros((1, 1))]
        b = [np.zeros(1), np.zeros(1)]
        X, y = np.zeros((1, 1)), np.array([1])
        _, gw, gb = loss_and_grad(w, b, X, y, 0.5)
        # with all-zero parameters only the output bias sees a data gradient
        assert gw[0][0, 0] == 0.0 and gw[1][0, 0] == 0.0 and gb[0][0] == 0.0
        assert gb[1][0] == pytest.approx(-0.5)
