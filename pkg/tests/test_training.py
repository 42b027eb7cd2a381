import math

import numpy as np
import pytest

from aflstm.autograd import Parameter, Tape, Tensor
from aflstm.data import PAD, Batch, DataError
from aflstm.model import Model, ModelConfig
from aflstm.training import (Adam, TrainConfig, adam_step, clip_gradients, evaluate, loss,
                             read_history, train, write_history)


def batch_of(seqs, aspects, labels, L=None):
    L = L or max(len(s) for s in seqs)
    tokens = np.zeros((len(seqs), L), dtype=np.intp)
    for i, s in enumerate(seqs):
        tokens[i, :len(s)] = s
    asp = np.array([[a] for a in aspects], dtype=np.intp)
    return Batch(tokens, tokens != PAD, asp, np.asarray(labels, dtype=np.intp))


def toy_separable():
    # token 2..6 -> class 0, token 7..11 -> class 1, plus shared filler token 12
    seqs = [[t, 12] for t in range(2, 12)]
    labels = [0] * 5 + [1] * 5
    return batch_of(seqs, [12] * 10, labels)


class TestLoss:
    def test_perfect(self):
        assert loss(Tensor([[0.0, 1.0, 0.0]]), [1]).item() == 0.0

    def test_uniform(self):
        assert loss(Tensor([[1 / 3] * 3]), [2]).item() == pytest.approx(math.log(3), abs=1e-15)

    def test_l2_term(self):
        p = Parameter(np.array([3.0, 4.0]))
        assert loss(Tensor([[1.0, 0.0]]), [0], [p], lam=1.0).item() == pytest.approx(25.0)

    def test_mean_over_batch_single_regularizer(self):
        p = Parameter(np.array([1.0]))
        probs = Tensor([[0.5, 0.5], [0.25, 0.75]])
        expected = (-math.log(0.5) - math.log(0.75)) / 2 + 0.1
        assert loss(probs, [0, 1], [p], lam=0.1).item() == pytest.approx(expected, abs=1e-15)

    def test_clamped(self):
        assert loss(Tensor([[1.0, 0.0]]), [1]).item() == pytest.approx(-math.log(1e-12))

    def test_monotone_in_lambda(self):
        model = Model(ModelConfig("af-lstm", 14, 4, 4, 3, 2, "conv"))
        b = toy_separable()
        params = model.trainable_parameters()
        probs, _ = model.predict(b)
        vals = [loss(Tensor(probs), b.labels, params, lam).item() for lam in (0, 1e-6, 4e-6, 1e-3, 1)]
        assert all(x <= y for x, y in zip(vals, vals[1:]))

    def test_gradient_of_l2(self):
        p = Parameter(np.array([1.0, -2.0]))
        with Tape() as tape:
            out = loss(Tensor([[1.0, 0.0]]), [0], [p], lam=0.5)
        tape.backward(out)
        np.testing.assert_allclose(p.grad, [1.0, -2.0])


class TestClip:
    def test_under_limit(self):
        p = Parameter(np.zeros(2))
        p.grad[...] = [0.3, 0.4]
        assert clip_gradients([p], 1.0) == 1.0
        np.testing.assert_array_equal(p.grad, [0.3, 0.4])

    def test_rescale(self):
        p = Parameter(np.zeros(2))
        p.grad[...] = [3.0, 4.0]
        assert clip_gradients([p], 1.0) == pytest.approx(0.2)
        np.testing.assert_allclose(p.grad, [0.6, 0.8])

    def test_zero(self):
        p = Parameter(np.zeros(3))
        assert clip_gradients([p], 1.0) == 1.0 and not p.grad.any()

    def test_global_norm_across_params(self):
        a, b = Parameter(np.zeros(1)), Parameter(np.zeros(1))
        a.grad[...] = 6.0
        b.grad[...] = 8.0
        assert clip_gradients([a, b], 5.0) == pytest.approx(0.5)
        assert (a.grad[0], b.grad[0]) == pytest.approx((3.0, 4.0))


class TestAdam:
    def test_first_step_is_lr(self):
        cfg = TrainConfig()
        p = Parameter(np.full(3, 2.0))
        opt = Adam([p], cfg)
        p.grad[...] = 1.0
        opt.step()
        np.testing.assert_allclose(p.data, 2.0 - 1e-3 / (1 + 1e-8), rtol=0, atol=1e-15)
        assert not p.grad.any()

    def test_zero_grad_leaves_params(self):
        cfg = TrainConfig()
        p = Parameter(np.array([1.0]))
        opt = Adam([p], cfg)
        p.grad[...] = 1.0
        opt.step()
        after_one, m1, v1 = p.data.copy(), opt.m[0].copy(), opt.v[0].copy()
        opt.step()          # grad is zero now
        np.testing.assert_allclose(opt.m[0], 0.9 * m1)
        np.testing.assert_allclose(opt.v[0], 0.999 * v1)
        # the decayed first moment still moves the parameter; with m=0 from the start it would not
        q = Parameter(np.array([1.0]))
        fresh = Adam([q], cfg)
        fresh.step()
        assert q.data[0] == 1.0 and after_one[0] < 1.0

    def test_two_step_hand_recurrence(self):
        b1, b2, lr, eps, g = 0.9, 0.999, 1e-3, 1e-8, 0.5
        x = 1.0
        m = v = 0.0
        for t in (1, 2):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            x -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        p = Parameter(np.array([1.0]))
        opt = Adam([p], TrainConfig())
        for _ in range(2):
            p.grad[...] = g
            adam_step([p], opt, TrainConfig())
        assert opt.m[0][0] == pytest.approx(m, abs=1e-15)
        assert opt.v[0][0] == pytest.approx(v, abs=1e-15)
        assert p.data[0] == pytest.approx(x, abs=1e-15)

    def test_frozen_rows_untouched(self):
        p = Parameter(np.ones((2, 2)), frozen_rows=(0,))
        opt = Adam([p], TrainConfig())
        p.grad[...] = 1.0
        opt.step()
        np.testing.assert_array_equal(p.data[0], [1, 1])
        assert np.all(p.data[1] < 1)


class TestConfig:
    def test_defaults(self):
        c = TrainConfig()
        assert (c.learning_rate, c.lambda_l2, c.batch_size, c.max_epochs, c.patience,
                c.grad_clip_norm) == (1e-3, 4e-6, 25, 50, 10, 1.0)

    @pytest.mark.parametrize("bad", [dict(patience=0), dict(patience=60), dict(learning_rate=0),
                                     dict(batch_size=0), dict(lambda_l2=-1), dict(adam_beta1=1.0)])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


class TestEvaluate:
    def test_majority(self):
        model = Model(ModelConfig("majority", 14, num_classes=2))
        b = batch_of([[2]] * 10, [2] * 10, [0] * 6 + [1] * 4)
        model.fit_majority(b.labels)
        m = evaluate(model, b, ["positive", "negative"])
        assert m.accuracy == pytest.approx(0.6)
        assert m.counts == {"positive": 6, "negative": 4} and m.total == 10
        assert m.correct == {"positive": 6, "negative": 0}

    def test_perfect(self):
        model = Model(ModelConfig("majority", 14, num_classes=3))
        model.fit_majority([2, 2])
        assert evaluate(model, batch_of([[2]] * 3, [2] * 3, [2] * 3)).accuracy == 1.0

    def test_random_model_near_chance(self):
        rng = np.random.default_rng(0)
        model = Model(ModelConfig("lstm", 50, 8, 8, 6, 3, seed=1))
        n = 600
        seqs = [list(rng.integers(2, 50, size=rng.integers(1, 7))) for _ in range(n)]
        b = batch_of(seqs, [2] * n, np.arange(n) % 3, L=6)
        assert 0.2 <= evaluate(model, b).accuracy <= 0.47

    def test_empty(self):
        model = Model(ModelConfig("lstm", 14, 4, 4, 3))
        with pytest.raises(DataError):
            evaluate(model, batch_of([[2]], [2], [0]).take(np.arange(0)))


class TestTrain:
    def test_separable_toy(self):
        model = Model(ModelConfig("nbow", 14, 8, 8, 2, 2, dropout_p=0.0))
        b = toy_separable()
        res = train(model, b, b, TrainConfig(patience=50, max_epochs=50, batch_size=5, learning_rate=0.05))
        train_acc = [m.accuracy for m in res.history if m.split == "train"]
        assert max(train_acc) == 1.0
        assert evaluate(model, b).accuracy == 1.0

    def test_patience_one(self):
        model = Model(ModelConfig("nbow", 14, 8, 8, 2, 2))
        b = toy_separable()
        res = train(model, b, b, TrainConfig(patience=1, max_epochs=50, batch_size=5, learning_rate=0.05))
        dev = [m.accuracy for m in res.history if m.split == "dev"]
        best = -1.0
        for epoch, acc in enumerate(dev, 1):
            if acc > best:
                best = acc
            elif epoch < len(dev):
                pytest.fail("training continued past the first non-improving epoch")
        # stopped at the first epoch that did not improve (or ran out of epochs)
        assert len(dev) == 50 or dev[-1] <= max(dev[:-1])
        assert res.best_dev_accuracy == max(dev)

    def test_best_snapshot_restored(self):
        model = Model(ModelConfig("lstm", 14, 4, 4, 3, 2))
        b = toy_separable()
        res = train(model, b, b, TrainConfig(patience=3, max_epochs=8, batch_size=5, learning_rate=0.05))
        dev = [m.accuracy for m in res.history if m.split == "dev"]
        assert res.best_dev_accuracy == max(dev)
        assert evaluate(model, b).accuracy == res.best_dev_accuracy
        final = Model(model.config)
        final.load_state(res.final_state)
        assert res.best_dev_accuracy >= evaluate(final, b).accuracy

    def test_deterministic(self):
        def run():
            model = Model(ModelConfig("af-lstm", 14, 4, 4, 3, 2, "corr", seed=3))
            res = train(model, toy_separable(), toy_separable(), TrainConfig(max_epochs=4, patience=4, seed=5))
            return [m.record() for m in res.history], model.state()

        (h1, s1), (h2, s2) = run(), run()
        assert h1 == h2
        assert all(s1[k].tobytes() == s2[k].tobytes() for k in s1)

    def test_one_small_step_decreases_loss(self):
        for variant, fusion in [("lstm", None), ("af-lstm", "conv"), ("at-lstm", None)]:
            model = Model(ModelConfig(variant, 14, 4, 4, 3, 2, fusion, dropout_p=0.0, seed=2))
            b = toy_separable().take(np.array([3]))
            params = model.trainable_parameters()
            with Tape() as tape:
                before = loss(model.forward(b)[0], b.labels, params, 4e-6)
            tape.backward(before)
            Adam(params, TrainConfig(learning_rate=1e-4)).step()
            after = loss(model.forward(b)[0], b.labels, params, 4e-6)
            assert after.item() < before.item()

    def test_empty_split(self):
        model = Model(ModelConfig("lstm", 14, 4, 4, 3, 2))
        b = toy_separable()
        with pytest.raises(DataError):
            train(model, b.take(np.arange(0)), b, TrainConfig())

    def test_majority_fit(self):
        model = Model(ModelConfig("majority", 14, num_classes=2))
        b = batch_of([[2]] * 5, [2] * 5, [1, 1, 1, 0, 0])
        res = train(model, b, b, TrainConfig())
        assert model.majority_class == 1 and res.best_dev_accuracy == pytest.approx(0.6)

    def test_history_round_trip(self, tmp_path):
        model = Model(ModelConfig("nbow", 14, 4, 4, 3, 2))
        res = train(model, toy_separable(), toy_separable(), TrainConfig(max_epochs=2, patience=2))
        write_history(res.history, tmp_path / "h.jsonl")
        back = read_history(tmp_path / "h.jsonl")
        assert back == [m.record() for m in res.history]
        assert [r["split"] for r in back] == ["train", "dev", "train", "dev"]
