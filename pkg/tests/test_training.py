import numpy as np
import pytest

import prunebench as pb
from prunebench.training import (
    _backward_arrays,
    _forward_arrays,
    loss_history_csv,
)

from oracles import fd_gradients, min_kink_distance


def _rel_err(a, b, floor):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def _max_grad_err(spec, tensors, xs, ys, step, floor):
    out, cache = _forward_arrays(spec, tensors, xs)
    analytic = _backward_arrays(spec, tensors, cache, ys)
    fd = fd_gradients(spec, tensors, xs, ys, step)
    return max(_rel_err(analytic[k], fd[k], floor) for k in fd)


class TestTrainConfig:
    def test_defaults(self):
        cfg = pb.TrainConfig()
        assert cfg.learning_rate == 1e-3
        assert cfg.batch_size == 8
        assert cfg.seed == 42

    def test_zero_learning_rate_allowed(self):
        assert pb.TrainConfig(learning_rate=0.0).learning_rate == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            pb.TrainConfig(learning_rate=-1e-3)
        with pytest.raises(ValueError):
            pb.TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            pb.TrainConfig(batch_size=0)


class TestSynthDataset:
    def test_shapes_and_dtypes(self):
        ds = pb.SynthDataset.generate(3, 4, 12, 16)
        assert len(ds.pairs) == 4
        for noisy, clean in ds.pairs:
            assert noisy.shape == (12, 16)
            assert clean.shape == (12, 16)
            assert noisy.dtype == np.float32
            assert clean.dtype == np.float32

    def test_deterministic(self):
        a = pb.SynthDataset.generate(3, 2, 10, 16)
        b = pb.SynthDataset.generate(3, 2, 10, 16)
        for (na, ca), (nb, cb) in zip(a.pairs, b.pairs):
            np.testing.assert_array_equal(na, nb)
            np.testing.assert_array_equal(ca, cb)

    def test_seed_changes_data(self):
        a = pb.SynthDataset.generate(3, 1, 10, 16)
        b = pb.SynthDataset.generate(4, 1, 10, 16)
        assert not np.array_equal(a.pairs[0][0], b.pairs[0][0])

    def test_noise_is_additive_nonnegative(self):
        ds = pb.SynthDataset.generate(5, 2, 16, 16)
        for noisy, clean in ds.pairs:
            assert np.all(noisy >= clean - 1e-6)
            assert np.any(noisy > clean)

    def test_snr_is_exact(self):
        ds = pb.SynthDataset.generate(5, 3, 32, 16, snr_db=6.0)
        for noisy, clean in ds.pairs:
            noise = noisy.astype(np.float64) - clean.astype(np.float64)
            snr = 20 * np.log10(np.sqrt(np.mean(clean.astype(np.float64) ** 2))
                                / np.sqrt(np.mean(noise ** 2)))
            assert snr == pytest.approx(6.0, abs=1e-3)

    def test_size_validation(self):
        with pytest.raises(ValueError):
            pb.SynthDataset.generate(1, 0, 10, 16)
        with pytest.raises(ValueError):
            pb.SynthDataset.generate(1, 1, 0, 16)


class TestLoss:
    def test_zero_on_own_output(self, small_spec, rng):
        w = pb.build_model(small_spec, seed=1)
        xs = rng.standard_normal((6, 16)).astype(np.float32)
        ys = pb.forward_sequence(w, xs)
        assert pb.loss(w, xs, ys) == 0.0

    def test_single_equals_list_of_one(self, small_spec, rng):
        w = pb.build_model(small_spec, seed=1)
        xs = rng.random((5, 16)).astype(np.float32)
        ys = rng.random((5, 16)).astype(np.float32)
        assert pb.loss(w, xs, ys) == pb.loss(w, [xs], [ys])

    def test_list_is_mean_of_pairs(self, small_spec, rng):
        w = pb.build_model(small_spec, seed=1)
        pairs = [(rng.random((5, 16)).astype(np.float32),
                  rng.random((5, 16)).astype(np.float32)) for _ in range(3)]
        singles = [pb.loss(w, x, y) for x, y in pairs]
        combined = pb.loss(w, [x for x, _ in pairs], [y for _, y in pairs])
        assert combined == pytest.approx(np.mean(singles), rel=1e-12)

    def test_shape_mismatch(self, small_spec):
        w = pb.build_model(small_spec, seed=1)
        with pytest.raises(ValueError, match="mismatch"):
            pb.loss(w, np.zeros((4, 16), np.float32), np.zeros((5, 16), np.float32))

    def test_known_value(self, small_spec):
        # zero weights, zero input: output is 0, so loss is mean(clean^2)
        from prunebench.model import TENSOR_ORDER, tensor_shapes
        shapes = tensor_shapes(small_spec)
        w = pb.ModelWeights(small_spec,
                            {n: np.zeros(shapes[n], np.float32) for n in TENSOR_ORDER})
        clean = np.full((3, 16), 0.25, np.float32)
        got = pb.loss(w, np.zeros((3, 16), np.float32), clean)
        assert got == pytest.approx(0.0625, rel=1e-6)

    def test_evaluate_matches_loss_over_dataset(self, small_spec):
        w = pb.build_model(small_spec, seed=1)
        ds = pb.SynthDataset.generate(3, 3, 8, 16)
        want = np.mean([pb.loss(w, x, y) for x, y in ds.pairs])
        assert pb.evaluate(w, ds) == pytest.approx(want, rel=1e-12)


class TestGradients:
    def test_zero_everywhere_when_output_matches_target(self, small_spec):
        from prunebench.model import TENSOR_ORDER, tensor_shapes
        shapes = tensor_shapes(small_spec)
        w = pb.ModelWeights(small_spec,
                            {n: np.zeros(shapes[n], np.float32) for n in TENSOR_ORDER})
        xs = np.zeros((4, 16), np.float32)
        grads = pb.gradients(w, xs, xs.copy())
        assert set(grads) == set(TENSOR_ORDER)
        for name in TENSOR_ORDER:
            assert np.all(grads[name] == 0.0), name

    def test_shapes_match_weights(self, small_spec, rng):
        w = pb.build_model(small_spec, seed=1)
        xs = rng.random((4, 16)).astype(np.float32)
        ys = rng.random((4, 16)).astype(np.float32)
        grads = pb.gradients(w, xs, ys)
        for name, t in w.tensors.items():
            assert grads[name].shape == t.shape
            assert grads[name].dtype == t.dtype

    def test_duplicated_pair_equals_single(self, small_spec, rng):
        w = pb.build_model(small_spec, seed=1)
        xs = rng.random((4, 16)).astype(np.float32)
        ys = rng.random((4, 16)).astype(np.float32)
        single = pb.gradients(w, xs, ys)
        doubled = pb.gradients(w, [xs, xs], [ys, ys])
        for name in single:
            np.testing.assert_array_equal(single[name], doubled[name])

    def test_batch_order_invariant(self, small_spec, rng):
        w = pb.build_model(small_spec, seed=1)
        p1 = (rng.random((4, 16)).astype(np.float32),
              rng.random((4, 16)).astype(np.float32))
        p2 = (rng.random((4, 16)).astype(np.float32),
              rng.random((4, 16)).astype(np.float32))
        a = pb.gradients(w, [p1[0], p2[0]], [p1[1], p2[1]])
        b = pb.gradients(w, [p2[0], p1[0]], [p2[1], p1[1]])
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_finite_differences_float64(self, tiny_spec):
        # float64 shadow pass: every coordinate of every tensor
        w = pb.build_model(tiny_spec, seed=6)
        t64 = {k: v.astype(np.float64) for k, v in w.tensors.items()}
        rng = np.random.default_rng(106)
        xs = rng.random((4, 16))
        ys = np.clip(0.5 * xs + 0.1 * rng.random((4, 16)), 0.0, None)
        step = 1e-5
        assert min_kink_distance(tiny_spec, t64, xs) > 4 * step
        assert _max_grad_err(tiny_spec, t64, xs, ys, step, floor=1e-3) < 1e-6

    def test_finite_differences_float64_small(self, small_spec):
        w = pb.build_model(small_spec, seed=3)
        t64 = {k: v.astype(np.float64) for k, v in w.tensors.items()}
        rng = np.random.default_rng(103)
        xs = rng.random((3, 16))
        ys = np.clip(0.5 * xs + 0.1 * rng.random((3, 16)), 0.0, None)
        step = 1e-5
        assert min_kink_distance(small_spec, t64, xs) > 4 * step
        assert _max_grad_err(small_spec, t64, xs, ys, step, floor=1e-3) < 1e-6


class TestTrain:
    def _dataset(self):
        return pb.SynthDataset.generate(11, 4, 10, 16)

    def test_zero_learning_rate_keeps_weights(self, small_spec):
        w = pb.build_model(small_spec, seed=1)
        cfg = pb.TrainConfig(learning_rate=0.0, epochs=3, batch_size=2, seed=0)
        trained, history = pb.train(w, self._dataset(), cfg)
        for name, t in w.tensors.items():
            np.testing.assert_array_equal(trained[name], t)
        assert len(history) == 3
        assert history[0] == history[1] == history[2]

    def test_loss_decreases(self, small_spec):
        w = pb.build_model(small_spec, seed=1)
        cfg = pb.TrainConfig(learning_rate=1e-3, epochs=8, batch_size=2, seed=0)
        _, history = pb.train(w, self._dataset(), cfg)
        assert history[-1] < history[0]

    def test_deterministic(self, small_spec):
        w = pb.build_model(small_spec, seed=1)
        cfg = pb.TrainConfig(epochs=2, batch_size=2, seed=5)
        a, hist_a = pb.train(w, self._dataset(), cfg)
        b, hist_b = pb.train(w, self._dataset(), cfg)
        assert hist_a == hist_b
        for name in a.tensors:
            np.testing.assert_array_equal(a[name], b[name])

    def test_input_weights_not_mutated(self, small_spec):
        w = pb.build_model(small_spec, seed=1)
        before = {k: v.copy() for k, v in w.tensors.items()}
        pb.train(w, self._dataset(), pb.TrainConfig(epochs=1, batch_size=4))
        for name, t in before.items():
            np.testing.assert_array_equal(w[name], t)

    def test_freq_bins_mismatch(self, small_spec):
        w = pb.build_model(small_spec, seed=1)
        ds = pb.SynthDataset.generate(1, 2, 8, 32)
        with pytest.raises(ValueError, match="freq_bins"):
            pb.train(w, ds, pb.TrainConfig(epochs=1))

    def test_non_finite_loss_aborts(self, small_spec):
        w = pb.build_model(small_spec, seed=1).copy()
        w.tensors["gru_ih"][0, 0] = np.nan
        with pytest.raises(RuntimeError, match="epoch 1"):
            pb.train(w, self._dataset(), pb.TrainConfig(epochs=1, batch_size=4))


class TestExperiments:
    def _sets(self):
        train_set = pb.SynthDataset.generate(21, 4, 10, 16)
        eval_set = pb.SynthDataset.generate(22, 2, 10, 16)
        return train_set, eval_set

    def test_prune_vs_direct_structure(self, small_spec):
        base = pb.build_model(small_spec, seed=1)
        target = pb.NetworkParam(2, 2, 2, 2)
        cfg = pb.TrainConfig(epochs=2, batch_size=2, seed=9)
        train_set, eval_set = self._sets()
        res = pb.experiment_prune_vs_direct(base, target, cfg, train_set,
                                            eval_set, pretrain_epochs=3)
        assert res.target == target
        assert res.pruned_model.spec.params == target
        assert res.direct_model.spec.params == target
        assert len(res.pruned_history) == 2
        assert len(res.direct_history) == 5  # pretrain budget added
        for v in (res.pruned_pre_loss, res.pruned_final_loss,
                  res.direct_final_loss):
            assert np.isfinite(v) and v >= 0.0

    def test_prune_vs_direct_pre_loss_matches_pruned_model(self, small_spec):
        base = pb.build_model(small_spec, seed=1)
        target = pb.NetworkParam(2, 2, 2, 2)
        cfg = pb.TrainConfig(epochs=1, batch_size=4, seed=9)
        train_set, eval_set = self._sets()
        res = pb.experiment_prune_vs_direct(base, target, cfg, train_set, eval_set)
        pruned = pb.prune_structured(base, target)
        assert res.pruned_pre_loss == pytest.approx(
            pb.evaluate(pruned, eval_set), rel=1e-12)

    def test_lr_sweep_rows(self, small_spec):
        base = pb.build_model(small_spec, seed=1)
        target = pb.NetworkParam(2, 2, 2, 2)
        cfg = pb.TrainConfig(epochs=2, batch_size=2, seed=9)
        train_set, eval_set = self._sets()
        rows = pb.experiment_lr_sweep(base, target, [1e-3, 1e-5], cfg,
                                      train_set, eval_set)
        assert [r.learning_rate for r in rows] == [1e-3, 1e-5]
        for r in rows:
            assert len(r.history) == 2
            assert np.isfinite(r.final_loss)

    def test_lr_sweep_single_and_empty(self, small_spec):
        base = pb.build_model(small_spec, seed=1)
        target = pb.NetworkParam(2, 2, 2, 2)
        cfg = pb.TrainConfig(epochs=1, batch_size=4, seed=9)
        train_set, eval_set = self._sets()
        rows = pb.experiment_lr_sweep(base, target, [1e-4], cfg,
                                      train_set, eval_set)
        assert len(rows) == 1
        with pytest.raises(ValueError):
            pb.experiment_lr_sweep(base, target, [], cfg, train_set, eval_set)


class TestLossHistoryCsv:
    def test_format(self):
        text = loss_history_csv({"pruned": [0.5, 0.25], "direct": [0.75]})
        lines = text.strip().split("\n")
        assert lines[0] == "epoch,arm,loss"
        assert lines[1] == "1,pruned,0.5"
        assert lines[2] == "2,pruned,0.25"
        assert lines[3] == "1,direct,0.75"
        assert text.endswith("\n")

    def test_empty(self):
        assert loss_history_csv({}) == "epoch,arm,loss\n"
