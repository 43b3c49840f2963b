import json
import math

import numpy as np
import pytest

from chanmi.classifier import (
    DEFAULT_GRID,
    ClassifierModel,
    Example,
    LabeledDataset,
    TrainConfig,
    TrainingDivergedError,
    evaluate,
    kfold_cv,
    loss_and_gradient,
    predict_proba,
    read_dataset,
    run_sweep,
    sweep_configs,
    train,
    write_dataset,
)
from chanmi.estimation import SchemaError, cross_entropy_of_log, empirical_dist, plugin_entropy
from chanmi.infocore import LabelSpace, ValidationError
from chanmi.synthetic import bayes_posterior, fixture_s1, sample
from helpers import one_hot_dataset

BINARY = LabelSpace(("no", "yes"))


def separable_dataset():
    """Four points, two classes, linearly separable with margin."""
    rows = [
        ("a", (1.0, 0.0), 0, "train"),
        ("b", (0.9, 0.1), 0, "train"),
        ("c", (0.0, 1.0), 1, "train"),
        ("d", (0.1, 0.9), 1, "train"),
        ("a2", (1.0, 0.0), 0, "dev"),
        ("b2", (0.9, 0.1), 0, "dev"),
        ("c2", (0.0, 1.0), 1, "dev"),
        ("d2", (0.1, 0.9), 1, "dev"),
    ]
    return LabeledDataset(
        "separable", BINARY,
        tuple(Example(i, x, y, s) for i, x, y, s in rows),
    )


def random_dataset(n_train=1200, n_dev=500, dim=4, seed=0):
    """Gaussian features with labels independent of them."""
    rng = np.random.default_rng(seed)
    examples = []
    for i in range(n_train + n_dev):
        split = "train" if i < n_train else "dev"
        x = tuple(rng.normal(size=dim).tolist())
        y = int(rng.integers(0, 2))
        examples.append(Example(f"r{i:05d}", x, y, split))
    return LabeledDataset("noise", BINARY, tuple(examples))


class TestGradient:
    def fixture(self):
        rng = np.random.default_rng(4)
        w = rng.normal(size=(3, 4))
        b = rng.normal(size=3)
        x = rng.normal(size=(5, 4))
        y = np.array([0, 2, 1, 2, 0])
        return w, b, x, y

    def test_matches_finite_differences(self):
        w, b, x, y = self.fixture()
        wd = 0.01
        _, dw, db = loss_and_gradient(w, b, x, y, wd)
        step = 1e-5

        def loss_at(w_mod, b_mod):
            return loss_and_gradient(w_mod, b_mod, x, y, wd)[0]

        for idx in np.ndindex(w.shape):
            bump = np.zeros_like(w)
            bump[idx] = step
            numeric = (loss_at(w + bump, b) - loss_at(w - bump, b)) / (2 * step)
            assert abs(numeric - dw[idx]) <= 1e-4 * max(1.0, abs(numeric))
        for i in range(b.size):
            bump = np.zeros_like(b)
            bump[i] = step
            numeric = (loss_at(w, b + bump) - loss_at(w, b - bump)) / (2 * step)
            assert abs(numeric - db[i]) <= 1e-4 * max(1.0, abs(numeric))

    def test_decay_excludes_bias(self):
        w, b, x, y = self.fixture()
        _, _, db_plain = loss_and_gradient(w, b, x, y, 0.0)
        _, _, db_decay = loss_and_gradient(w, b, x, y, 0.5)
        assert np.allclose(db_plain, db_decay)

    def test_decay_term_in_loss(self):
        w, b, x, y = self.fixture()
        plain, _, _ = loss_and_gradient(w, b, x, y, 0.0)
        decayed, _, _ = loss_and_gradient(w, b, x, y, 0.5)
        assert decayed == pytest.approx(plain + 0.5 * float(np.sum(w * w)))


class TestTraining:
    def test_separable_data_trains_to_near_zero_loss(self):
        model = train(separable_dataset(), TrainConfig(learning_rate=0.1, epochs=500, batch_size=4))
        assert model.best_dev_loss < 0.05

    def test_random_labels_cannot_beat_chance(self):
        data = random_dataset()
        dev_gold = [ex.gold for ex in data.split("dev")]
        h_dev = plugin_entropy(empirical_dist(dev_gold, BINARY)).value
        model = train(data, TrainConfig(learning_rate=0.1, epochs=10, batch_size=32))
        assert abs(model.best_dev_loss - h_dev) <= 0.05

    def test_same_seed_same_weights(self):
        data = random_dataset(n_train=200, n_dev=50)
        cfg = TrainConfig(learning_rate=0.1, epochs=5, batch_size=16, seed=3)
        m1, m2 = train(data, cfg), train(data, cfg)
        assert np.array_equal(m1.weights, m2.weights)
        assert np.array_equal(m1.bias, m2.bias)
        m3 = train(data, TrainConfig(learning_rate=0.1, epochs=5, batch_size=16, seed=4))
        assert not np.array_equal(m1.weights, m3.weights)

    def test_epoch_zero_model_is_a_candidate(self):
        model = train(separable_dataset(), TrainConfig(epochs=0))
        assert model.best_epoch == 0
        assert np.all(model.weights == 0.0)
        assert predict_proba(model, (1.0, 0.0)).probs == (0.5, 0.5)

    def test_divergence_raises_with_advice(self):
        # a decay step this large multiplies the weights geometrically
        cfg = TrainConfig(learning_rate=50.0, weight_decay=50.0, epochs=150, batch_size=4)
        with pytest.raises(TrainingDivergedError, match="reduce learning_rate"):
            train(separable_dataset(), cfg)

    def test_missing_dev_split_rejected(self):
        data = LabeledDataset(
            "x", BINARY,
            (Example("a", (1.0,), 0, "train"), Example("b", (0.0,), 1, "train")),
        )
        with pytest.raises(ValidationError, match="dev"):
            train(data, TrainConfig())

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValidationError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValidationError):
            TrainConfig(weight_decay=-0.1)
        with pytest.raises(ValidationError):
            TrainConfig(epochs=-1)


class TestPrediction:
    def test_learned_posterior_matches_oracle(self):
        s = fixture_s1()
        draws = sample(s, 20_000, seed=9)
        data = one_hot_dataset(s, draws, [("train", 18_000), ("dev", 2_000)])
        model = train(data, TrainConfig(learning_rate=0.5, epochs=40, batch_size=256))
        for symbol in range(2):
            features = [0.0, 0.0]
            features[symbol] = 1.0
            learned = predict_proba(model, features).probs
            exact = bayes_posterior(s, symbol).probs
            assert learned == pytest.approx(exact, abs=0.02)

    def test_dimension_mismatch_rejected(self):
        model = train(separable_dataset(), TrainConfig(epochs=1))
        with pytest.raises(ValidationError, match="expects 2"):
            predict_proba(model, (1.0, 2.0, 3.0))


class TestEvaluate:
    def test_zero_model_metrics(self):
        data = LabeledDataset(
            "x", BINARY,
            (
                Example("a", (1.0,), 0, "train"),
                Example("b", (1.0,), 0, "dev"),
                Example("t1", (1.0,), 0, "test"),
                Example("t2", (1.0,), 1, "test"),
                Example("t3", (1.0,), 1, "test"),
            ),
        )
        model = train(data, TrainConfig(epochs=0))
        result = evaluate(model, data, "test", channel="text")
        assert result.loss == pytest.approx(1.0)
        # uniform rows argmax to index 0
        assert result.accuracy == pytest.approx(1 / 3)
        assert cross_entropy_of_log(result.log, "test").value == pytest.approx(result.loss)
        assert result.log.channel == "text"
        assert len(result.log.records) == 3

    def test_empty_split_rejected(self):
        model = train(separable_dataset(), TrainConfig(epochs=0))
        with pytest.raises(ValidationError, match="no records"):
            evaluate(model, separable_dataset(), "test")


class TestKFold:
    def dataset(self, n=23, seed=5):
        rng = np.random.default_rng(seed)
        examples = []
        for i in range(n):
            y = int(rng.integers(0, 2))
            x = (rng.normal() + 2.0 * y, rng.normal() - 1.5 * y)
            examples.append(Example(f"k{i:03d}", x, y, "train"))
        return LabeledDataset("cv", BINARY, tuple(examples))

    def test_every_example_predicted_exactly_once(self):
        data = self.dataset()
        result = kfold_cv(data, 5, TrainConfig(epochs=3, batch_size=8))
        ids = [r.example_id for r in result.log.records]
        assert sorted(ids) == sorted(ex.example_id for ex in data.examples)
        assert {r.fold for r in result.log.records} == set(range(5))
        sizes = sorted(m.n for m in result.per_fold)
        assert sizes == [4, 4, 5, 5, 5]

    def test_deterministic(self):
        data = self.dataset()
        cfg = TrainConfig(epochs=3, batch_size=8, seed=2)
        r1 = kfold_cv(data, 4, cfg)
        r2 = kfold_cv(data, 4, cfg)
        assert r1.per_fold == r2.per_fold
        assert r1.log == r2.log

    def test_summary_aggregates_unweighted(self):
        result = kfold_cv(self.dataset(), 5, TrainConfig(epochs=2, batch_size=8))
        assert result.summary.mean_loss == pytest.approx(
            float(np.mean([m.loss for m in result.per_fold]))
        )
        assert result.summary.folds == 5

    def test_k_validation(self):
        data = self.dataset(n=6)
        with pytest.raises(ValidationError, match="k >= 2"):
            kfold_cv(data, 1, TrainConfig())
        with pytest.raises(ValidationError, match="folds from"):
            kfold_cv(data, 7, TrainConfig())

    def test_fold_sizes_for_published_corpus_shape(self):
        # 690 items into 5 folds must give 138 each
        sizes = [len(part) for part in np.array_split(np.arange(690), 5)]
        assert sizes == [138] * 5


class TestSweep:
    def test_default_grid_enumeration(self):
        configs = sweep_configs()
        assert len(configs) == 180
        assert configs[0] == TrainConfig(
            learning_rate=1e-4, epochs=5, batch_size=8, weight_decay=0.0, seed=0
        )
        # weight_decay varies fastest
        assert configs[1].weight_decay == 0.01
        assert configs[1].learning_rate == 1e-4
        assert len(set(configs)) == 180

    def test_grid_shape_matches_published_protocol(self):
        assert DEFAULT_GRID["epochs"] == [5, 10, 15]
        assert DEFAULT_GRID["batch_size"] == [8, 16, 32, 64]
        assert DEFAULT_GRID["weight_decay"] == [0.0, 0.01, 0.1]
        lrs = DEFAULT_GRID["learning_rate"]
        assert lrs[0] == 1e-4 and lrs[-1] == 1e-2
        assert all(a < b for a, b in zip(lrs, lrs[1:]))

    def test_subsample_without_replacement(self):
        def hyper(c):
            return (c.learning_rate, c.epochs, c.batch_size, c.weight_decay)

        full = {hyper(c) for c in sweep_configs()}
        picked = sweep_configs(runs=20, seed=1)
        assert len(picked) == 20
        assert len({hyper(c) for c in picked}) == 20
        assert {hyper(c) for c in picked} <= full
        assert picked == sweep_configs(runs=20, seed=1)
        assert [hyper(c) for c in picked] != [hyper(c) for c in sweep_configs(runs=20, seed=2)]

    def test_runs_covering_grid_keeps_everything(self):
        assert sweep_configs(runs=9999) == sweep_configs()

    def test_bad_grid_rejected(self):
        with pytest.raises(ValidationError, match="grid keys"):
            sweep_configs({"learning_rate": [0.1]})
        with pytest.raises(ValidationError, match="non-empty"):
            sweep_configs({
                "learning_rate": [], "epochs": [5],
                "batch_size": [8], "weight_decay": [0.0],
            })

    def small_data(self):
        rng = np.random.default_rng(7)
        examples = []
        for i in range(120):
            split = "train" if i < 80 else ("dev" if i < 100 else "test")
            y = int(rng.integers(0, 2))
            x = (rng.normal() + 1.5 * y,)
            examples.append(Example(f"s{i:03d}", x, y, split))
        return LabeledDataset("sweep", BINARY, tuple(examples))

    def test_selection_minimizes_dev_loss(self):
        data = self.small_data()
        configs = [
            TrainConfig(learning_rate=1e-6, epochs=2, batch_size=16),
            TrainConfig(learning_rate=0.5, epochs=20, batch_size=16),
        ]
        result = run_sweep(data, configs)
        assert result.criterion == "dev_loss"
        assert result.best_index == 1
        metrics = [e.metric for e in result.entries]
        assert metrics[1] < metrics[0]
        assert result.best_model is not None
        assert result.best_log.records

    def test_diverged_configs_never_win(self):
        data = separable_dataset()
        configs = [
            TrainConfig(learning_rate=50.0, weight_decay=50.0, epochs=150, batch_size=4),
            TrainConfig(learning_rate=0.1, epochs=5, batch_size=4),
        ]
        result = run_sweep(data, configs, eval_split="dev")
        assert result.entries[0].diverged
        assert result.entries[0].metric is None
        assert result.best_index == 1

    def test_all_diverged_raises(self):
        data = separable_dataset()
        configs = [
            TrainConfig(learning_rate=50.0, weight_decay=50.0, epochs=150, batch_size=4),
        ]
        with pytest.raises(TrainingDivergedError, match="every configuration"):
            run_sweep(data, configs, eval_split="dev")

    def test_worker_count_does_not_change_results(self):
        data = self.small_data()
        configs = sweep_configs(
            {
                "learning_rate": [1e-3, 0.3],
                "epochs": [3],
                "batch_size": [16, 32],
                "weight_decay": [0.0, 0.01],
            }
        )
        serial = run_sweep(data, configs, workers=1)
        threaded = run_sweep(data, configs, workers=4)
        assert serial.entries == threaded.entries
        assert serial.best_index == threaded.best_index

    def test_kfold_sweep_uses_cv_loss(self):
        rng = np.random.default_rng(11)
        examples = tuple(
            Example(f"c{i:03d}", (rng.normal() + float(i % 2),), i % 2, "train")
            for i in range(40)
        )
        data = LabeledDataset("cv", BINARY, examples)
        configs = [TrainConfig(learning_rate=0.2, epochs=3, batch_size=8)]
        result = run_sweep(data, configs, kfold=4)
        assert result.criterion == "cv_loss"
        assert {r.fold for r in result.best_log.records} == set(range(4))


class TestDatasetIO:
    def test_round_trip(self, tmp_path):
        data = separable_dataset()
        path = tmp_path / "data.jsonl"
        write_dataset(data, path)
        loaded = read_dataset(path, labels=BINARY.labels)
        assert loaded.examples == data.examples
        assert loaded.label_space == BINARY
        assert loaded.name == "data"

    def test_label_inference(self, tmp_path):
        path = tmp_path / "d.jsonl"
        rows = [
            {"id": "a", "x": [1.0], "y": 2, "split": "train"},
            {"id": "b", "x": [0.0], "y": 0, "split": "train"},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        loaded = read_dataset(path)
        assert loaded.label_space.labels == ("class0", "class1", "class2")

    def test_bad_json_line_numbered(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"id":"a","x":[1.0],"y":0,"split":"train"}\nnope\n')
        with pytest.raises(SchemaError, match="line 2"):
            read_dataset(path)

    def test_extra_key_rejected(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"id":"a","x":[1.0],"y":0,"split":"train","w":1}\n')
        with pytest.raises(SchemaError, match="unexpected.*w"):
            read_dataset(path)

    def test_inconsistent_dims_rejected(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(
            '{"id":"a","x":[1.0],"y":0,"split":"train"}\n'
            '{"id":"b","x":[1.0,2.0],"y":0,"split":"train"}\n'
        )
        with pytest.raises(SchemaError, match="differs"):
            read_dataset(path)

    def test_boolean_y_rejected(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"id":"a","x":[1.0],"y":true,"split":"train"}\n')
        with pytest.raises(SchemaError, match="line 1.*integer"):
            read_dataset(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text("")
        with pytest.raises(SchemaError, match="empty"):
            read_dataset(path)

    def test_gold_out_of_label_range_rejected(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"id":"a","x":[1.0],"y":5,"split":"train"}\n')
        with pytest.raises(SchemaError, match="out of range"):
            read_dataset(path, labels=("no", "yes"))
