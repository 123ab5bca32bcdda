"""Tests for the training protocol, loss, splits, early stopping, metrics,
and curve export."""

import math

import numpy as np
import pytest

from rumorgraph import numerics as nm
from rumorgraph.fileio import DataError
from rumorgraph.model import ModelConfig, forward, init_params
from rumorgraph.numerics import Tape, Tensor
from rumorgraph.train_eval import (
    EarlyStopper,
    EpochStats,
    TrainConfig,
    TrainLog,
    compute_metrics,
    cross_entropy,
    evaluate,
    export_curves,
    read_curves,
    split_dataset,
    train,
)

from test_model import make_fg, random_tree_fg

TINY_MODEL = ModelConfig(in_dim=6, hidden=4, edge_hidden=4, classes=5, heads=2,
                         depth=1, dropout=0.2)


def labeled_dataset(rng, n, dim=6, signal=4.0):
    """Random trees whose source feature leans toward a class direction."""
    graphs = []
    for _ in range(n):
        label = int(rng.integers(0, 5))
        fg = random_tree_fg(rng, int(rng.integers(2, 7)), dim, label=label)
        fg.features[:, label] += signal
        graphs.append(fg)
    return graphs


# ---------------------------------------------------------------------------
# cross entropy

class TestCrossEntropy:
    def test_uniform_logits(self):
        z = Tensor(np.zeros((1, 5)))
        assert cross_entropy(z, 3).item() == pytest.approx(math.log(5.0), abs=1e-12)

    def test_confident_correct(self):
        z = Tensor(np.array([[10.0, 0.0, 0.0, 0.0, 0.0]]))
        expected = math.log1p(4.0 * math.exp(-10.0))
        assert cross_entropy(z, 0).item() == pytest.approx(expected, rel=1e-12)

    def test_confident_wrong_is_large(self):
        z = Tensor(np.array([[10.0, 0.0, 0.0, 0.0, 0.0]]))
        assert cross_entropy(z, 1).item() > 9.9

    def test_shift_invariance(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=(1, 5))
        a = cross_entropy(Tensor(z), 2).item()
        b = cross_entropy(Tensor(z + 123.0), 2).item()
        assert a == pytest.approx(b, abs=1e-9)

    def test_gradient_is_softmax_minus_onehot(self):
        z = Tensor(np.array([[1.0, -2.0, 0.5, 3.0, 0.0]]), requires_grad=True)
        tape = Tape()
        loss = cross_entropy(z, 3, tape)
        grads = tape.backward(loss)
        p = np.exp(z.data[0] - z.data[0].max())
        p /= p.sum()
        p[3] -= 1.0
        np.testing.assert_allclose(grads[z][0], p, atol=1e-12)

    def test_gradient_matches_finite_differences(self):
        z = Tensor(np.array([[0.3, -1.0, 2.0, 0.1, -0.4]]), requires_grad=True)

        def fn(params, tape):
            return cross_entropy(params["z"], 1, tape)

        report = nm.grad_check(fn, {"z": z}, h=1e-6)
        assert report.max_rel_err < 1e-6

    def test_label_bounds(self):
        z = Tensor(np.zeros((1, 5)))
        with pytest.raises(DataError):
            cross_entropy(z, 5)
        with pytest.raises(DataError):
            cross_entropy(z, -1)

    def test_extreme_logits_no_overflow(self):
        z = Tensor(np.array([[1000.0, -1000.0, 0.0, 0.0, 0.0]]))
        val = cross_entropy(z, 0).item()
        assert val == pytest.approx(0.0, abs=1e-9)


# ---------------------------------------------------------------------------
# splits

class TestSplit:
    def test_ten_items(self):
        graphs = list(range(10))
        tr, va, te = split_dataset(graphs, TrainConfig(model=TINY_MODEL, seed=0))
        assert (len(tr), len(va), len(te)) == (7, 2, 1)
        assert sorted(tr + va + te) == graphs

    def test_hundred_items(self):
        graphs = list(range(100))
        tr, va, te = split_dataset(graphs, TrainConfig(model=TINY_MODEL, seed=1))
        assert (len(tr), len(va), len(te)) == (70, 20, 10)

    def test_floor_rounding(self):
        graphs = list(range(13))
        tr, va, te = split_dataset(graphs, TrainConfig(model=TINY_MODEL, seed=0))
        # floor(0.2*13)=2, floor(0.1*13)=1, remainder 10 in train
        assert (len(tr), len(va), len(te)) == (10, 2, 1)

    def test_deterministic_and_seed_sensitive(self):
        graphs = list(range(50))
        cfg0 = TrainConfig(model=TINY_MODEL, seed=3)
        a = split_dataset(graphs, cfg0)
        b = split_dataset(graphs, cfg0)
        assert a == b
        c = split_dataset(graphs, TrainConfig(model=TINY_MODEL, seed=4))
        assert a != c

    def test_too_few_items(self):
        with pytest.raises(DataError):
            split_dataset(list(range(9)), TrainConfig(model=TINY_MODEL))

    def test_split_must_sum_to_one(self):
        with pytest.raises(DataError):
            TrainConfig(model=TINY_MODEL, split=(0.5, 0.2, 0.1))


# ---------------------------------------------------------------------------
# early stopping

class TestEarlyStopper:
    def test_stops_patience_epochs_after_best(self):
        # best at epoch 5, patience 3: epochs 6,7,8 fail to improve -> stop at 8
        losses = [1.0, 0.9, 0.8, 0.7, 0.5, 0.6, 0.55, 0.51]
        stopper = EarlyStopper(patience=3)
        stopped_at = None
        for epoch, loss in enumerate(losses, start=1):
            if stopper.update(epoch, loss):
                stopped_at = epoch
                break
        assert stopped_at == 8
        assert stopper.best_epoch == 5

    def test_patience_one(self):
        stopper = EarlyStopper(patience=1)
        assert not stopper.update(1, 1.0)
        assert stopper.update(2, 1.0)  # ties do not count as improvement
        assert stopper.best_epoch == 1

    def test_improvement_resets_streak(self):
        stopper = EarlyStopper(patience=2)
        seq = [(1, 1.0), (2, 1.1), (3, 0.9), (4, 1.0), (5, 0.95)]
        results = [stopper.update(e, l) for e, l in seq]
        assert results == [False, False, False, False, True]
        assert stopper.best_epoch == 3

    def test_strict_improvement_required(self):
        stopper = EarlyStopper(patience=2)
        assert not stopper.update(1, 0.5)
        assert not stopper.update(2, 0.5)
        assert stopper.update(3, 0.5)
        assert stopper.best_epoch == 1

    def test_invalid_patience(self):
        with pytest.raises(DataError):
            EarlyStopper(patience=0)


# ---------------------------------------------------------------------------
# training loop

class TestTrain:
    def _data(self, seed=0):
        rng = np.random.default_rng(seed)
        return labeled_dataset(rng, 14), labeled_dataset(rng, 6)

    def test_bitwise_deterministic(self):
        cfg = TrainConfig(model=TINY_MODEL, max_epochs=3, patience=10, seed=5,
                          batch_size=4)
        tr, va = self._data()
        p1, log1 = train(cfg, tr, va)
        tr2, va2 = self._data()
        p2, log2 = train(cfg, tr2, va2)
        assert [e.to_dict() for e in log1.epochs] == [e.to_dict() for e in log2.epochs]
        for name, t in p1.named_tensors().items():
            np.testing.assert_array_equal(t.data, p2.named_tensors()[name].data)

    def test_seed_changes_trajectory(self):
        tr, va = self._data()
        cfg_a = TrainConfig(model=TINY_MODEL, max_epochs=2, seed=1, batch_size=4)
        cfg_b = TrainConfig(model=TINY_MODEL, max_epochs=2, seed=2, batch_size=4)
        _, log_a = train(cfg_a, tr, va)
        _, log_b = train(cfg_b, tr, va)
        assert log_a.epochs[-1].train_loss != log_b.epochs[-1].train_loss

    def test_loss_decreases_on_separable_data(self):
        rng = np.random.default_rng(7)
        data = labeled_dataset(rng, 16, signal=6.0)
        cfg = TrainConfig(model=ModelConfig(in_dim=6, hidden=8, edge_hidden=4,
                                            heads=2, depth=1, dropout=0.0),
                          max_epochs=40, patience=40, seed=0, lr=0.02,
                          batch_size=8)
        params, log = train(cfg, data, data)
        assert log.epochs[-1].train_loss < log.epochs[0].train_loss
        assert log.epochs[-1].train_acc >= 0.75

    def test_early_stop_bounds_epochs(self):
        tr, va = self._data()
        cfg = TrainConfig(model=TINY_MODEL, max_epochs=200, patience=2, seed=0,
                          lr=0.5, batch_size=4)  # aggressive lr to stall fast
        _, log = train(cfg, tr, va)
        assert len(log.epochs) < 200
        last = log.epochs[-1].epoch
        assert last == log.best_epoch + 2 or last == 200

    def test_returns_best_epoch_params(self):
        tr, va = self._data(seed=3)
        cfg = TrainConfig(model=TINY_MODEL, max_epochs=6, patience=10, seed=0,
                          batch_size=4)
        params, log = train(cfg, tr, va)
        best = min(e.val_loss for e in log.epochs)
        assert log.epochs[log.best_epoch - 1].val_loss == best
        # returned params reproduce the best recorded validation loss
        total = 0.0
        for fg in va:
            total += cross_entropy(forward(fg, params, mode="eval").logits,
                                   fg.label).item()
        assert total / len(va) == pytest.approx(best, abs=1e-12)

    def test_empty_sets_rejected(self):
        tr, va = self._data()
        cfg = TrainConfig(model=TINY_MODEL, max_epochs=1)
        with pytest.raises(DataError):
            train(cfg, [], va)
        with pytest.raises(DataError):
            train(cfg, tr, [])

    def test_unlabeled_graph_rejected(self):
        tr, va = self._data()
        tr[0].graph.label = None
        cfg = TrainConfig(model=TINY_MODEL, max_epochs=1)
        with pytest.raises(DataError):
            train(cfg, tr, va)

    def test_sum_reduction_runs(self):
        tr, va = self._data()
        cfg = TrainConfig(model=TINY_MODEL, max_epochs=2, seed=0, batch_size=4,
                          loss_reduction="sum")
        _, log = train(cfg, tr, va)
        assert len(log.epochs) == 2

    def test_baseline_training_runs(self):
        tr, va = self._data()
        cfg = TrainConfig(model=TINY_MODEL, max_epochs=2, seed=0, batch_size=4)
        params, log = train(cfg, tr, va, baseline=True)
        assert params.baseline
        assert len(log.epochs) == 2


# ---------------------------------------------------------------------------
# metrics

def brute_force_metrics(y_true, y_pred, n_classes):
    """Independent loop-based implementation used as an oracle."""
    n = len(y_true)
    acc = sum(1 for t, p in zip(y_true, y_pred) if t == p) / n
    f1s, precs, recs = [], [], []
    tp_all = fp_all = fn_all = 0
    for c in range(n_classes):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0
        precs.append(prec)
        recs.append(rec)
        f1s.append(f1)
        tp_all += tp
        fp_all += fp
        fn_all += fn
    micro = 2 * tp_all / (2 * tp_all + fp_all + fn_all) if tp_all + fp_all + fn_all else 0.0
    macro = sum(f1s) / n_classes
    return acc, micro, macro, precs, recs, f1s


class TestMetrics:
    def test_hand_oracle(self):
        rep = compute_metrics([0, 0, 1], [0, 1, 1], n_classes=5)
        assert rep.accuracy == pytest.approx(2 / 3)
        assert rep.micro_f1 == pytest.approx(2 / 3)
        assert rep.macro_f1 == pytest.approx(4 / 15)
        assert rep.per_class[0].precision == pytest.approx(1.0)
        assert rep.per_class[0].recall == pytest.approx(0.5)
        assert rep.per_class[1].precision == pytest.approx(0.5)
        assert rep.per_class[1].recall == pytest.approx(1.0)
        assert rep.per_class[2].f1 == 0.0  # absent class scores zero, not NaN

    def test_perfect_predictions(self):
        y = [0, 1, 2, 3, 4] * 3
        rep = compute_metrics(y, y, n_classes=5)
        assert rep.accuracy == 1.0
        assert rep.micro_f1 == 1.0
        assert rep.macro_f1 == 1.0

    def test_confusion_layout(self):
        rep = compute_metrics([0, 0, 1], [0, 1, 1], n_classes=2)
        assert rep.confusion == [[1, 1], [0, 1]]  # rows true, cols predicted

    def test_against_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            n = int(rng.integers(1, 200))
            y_true = rng.integers(0, 5, size=n).tolist()
            y_pred = rng.integers(0, 5, size=n).tolist()
            rep = compute_metrics(y_true, y_pred, n_classes=5)
            acc, micro, macro, precs, recs, f1s = brute_force_metrics(
                y_true, y_pred, 5)
            assert rep.accuracy == pytest.approx(acc, abs=1e-12)
            assert rep.micro_f1 == pytest.approx(micro, abs=1e-12)
            assert rep.macro_f1 == pytest.approx(macro, abs=1e-12)
            for c in range(5):
                assert rep.per_class[c].precision == pytest.approx(precs[c], abs=1e-12)
                assert rep.per_class[c].recall == pytest.approx(recs[c], abs=1e-12)
                assert rep.per_class[c].f1 == pytest.approx(f1s[c], abs=1e-12)

    def test_micro_equals_accuracy_exactly(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            n = int(rng.integers(1, 300))
            y_true = rng.integers(0, 5, size=n)
            y_pred = rng.integers(0, 5, size=n)
            rep = compute_metrics(y_true, y_pred, n_classes=5)
            assert rep.micro_f1 == rep.accuracy

    def test_input_validation(self):
        with pytest.raises(DataError):
            compute_metrics([], [], n_classes=5)
        with pytest.raises(DataError):
            compute_metrics([0, 1], [0], n_classes=5)
        with pytest.raises(DataError):
            compute_metrics([0, 5], [0, 0], n_classes=5)

    def test_evaluate_agrees_with_predict(self):
        from rumorgraph.model import predict
        rng = np.random.default_rng(2)
        graphs = labeled_dataset(rng, 12)
        params = init_params(TINY_MODEL, seed=0)
        rep = evaluate(params, graphs)
        manual = sum(1 for fg in graphs if predict(fg, params) == fg.label)
        assert rep.accuracy == pytest.approx(manual / len(graphs))
        assert rep.n_samples == 12
        assert sum(c.support for c in rep.per_class) == 12

    def test_report_to_dict(self):
        rep = compute_metrics([0, 1], [0, 1], n_classes=5)
        d = rep.to_dict()
        assert d["accuracy"] == 1.0
        assert len(d["per_class"]) == 5
        assert len(d["confusion"]) == 5


# ---------------------------------------------------------------------------
# curves

class TestCurves:
    def _log(self):
        epochs = [EpochStats(epoch=i, train_loss=1.0 / i, train_acc=0.1 * i,
                             val_loss=1.1 / i, val_acc=0.09 * i)
                  for i in range(1, 6)]
        return TrainLog(epochs=epochs, best_epoch=5)

    def test_round_trip(self, tmp_path):
        log = self._log()
        path = tmp_path / "curves.csv"
        export_curves(log, path, config={"seed": 1})
        back = read_curves(path)
        assert back.best_epoch == 5
        assert len(back.epochs) == 5
        for a, b in zip(log.epochs, back.epochs):
            assert a.to_dict() == b.to_dict()

    def test_exactly_one_best_row(self, tmp_path):
        path = tmp_path / "curves.csv"
        export_curves(self._log(), path)
        rows = [ln for ln in path.read_text().splitlines()
                if ln and not ln.startswith("#") and not ln.startswith("epoch")]
        assert sum(1 for r in rows if r.endswith(",1")) == 1

    def test_header_carries_config(self, tmp_path):
        import json
        path = tmp_path / "curves.csv"
        export_curves(self._log(), path, config={"lr": 0.01})
        first = path.read_text().splitlines()[0]
        header = json.loads(first[2:])
        assert header["format"] == "training-curves"
        assert header["config"] == {"lr": 0.01}

    def test_full_precision_floats(self, tmp_path):
        stats = EpochStats(epoch=1, train_loss=1 / 3, train_acc=2 / 7,
                           val_loss=1 / 9, val_acc=5 / 11)
        log = TrainLog(epochs=[stats], best_epoch=1)
        path = tmp_path / "c.csv"
        export_curves(log, path)
        back = read_curves(path)
        assert back.epochs[0].train_loss == 1 / 3
        assert back.epochs[0].val_acc == 5 / 11

    def test_read_rejects_bad_format(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text('# {"format": "something-else", "version": 1}\n'
                     "epoch,train_loss,train_acc,val_loss,val_acc,is_best\n")
        with pytest.raises(DataError):
            read_curves(p)

    def test_train_log_round_trips_through_export(self, tmp_path):
        rng = np.random.default_rng(4)
        tr = labeled_dataset(rng, 12)
        va = labeled_dataset(rng, 5)
        cfg = TrainConfig(model=TINY_MODEL, max_epochs=3, seed=0, batch_size=4)
        _, log = train(cfg, tr, va)
        path = tmp_path / "real.csv"
        export_curves(log, path, config=cfg.to_dict())
        back = read_curves(path)
        assert back.best_epoch == log.best_epoch
        for a, b in zip(log.epochs, back.epochs):
            assert a.train_loss == b.train_loss
            assert a.val_loss == b.val_loss
