import numpy as np
import pytest

from feedtune.datasets import (
    BiasedBinarySpec,
    GaussianClassesSpec,
    TwoGaussiansSpec,
    gen_biased_binary,
    gen_gaussian_classes,
    gen_two_gaussians,
    load_csv,
    pretrain,
    supervised_finetune,
    write_csv,
)
from feedtune.channel import BudgetExhausted
from feedtune.models import LabeledDataset, MlpModel, evaluate
from feedtune.oracle import FeedbackOracle
from feedtune.params import make_rng
from feedtune.pps import PpsConfig, pps_run
from feedtune.scenarios import get_scenario, opt_reference, prepare


class TestTwoGaussians:
    def test_linear_classifier_separates(self):
        data = gen_two_gaussians(TwoGaussiansSpec(means=((-1, -1), (1, 1)), variances=(0.7, 0.7), n_per_class=200))
        model = pretrain([2, 1], data, epochs=500, lr=0.5)
        assert evaluate(model, data, "accuracy")[0] >= 0.9

    def test_identical_means_near_chance(self):
        spec = TwoGaussiansSpec(means=((0, 0), (0, 0)), n_per_class=500)
        model = pretrain([2, 1], gen_two_gaussians(spec), epochs=300, lr=0.5)
        fresh = gen_two_gaussians(TwoGaussiansSpec(means=((0, 0), (0, 0)), n_per_class=500, seed=9))
        assert abs(evaluate(model, fresh, "accuracy")[0] - 0.5) <= 3 / np.sqrt(1000)

    def test_deterministic(self):
        a, b = gen_two_gaussians(TwoGaussiansSpec(seed=4)), gen_two_gaussians(TwoGaussiansSpec(seed=4))
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_balanced(self):
        data = gen_two_gaussians(TwoGaussiansSpec(n_per_class=37))
        assert np.bincount(data.labels).tolist() == [37, 37]

    def test_variance_positive(self):
        with pytest.raises(ValueError):
            TwoGaussiansSpec(variances=(0.0, 1.0))


class TestOtherGenerators:
    def test_biased_binary_correlation(self):
        d = gen_biased_binary(BiasedBinarySpec(n=20000, correlation=0.6))
        gap = d.sensitive[d.labels == 1].mean() - d.sensitive[d.labels == 0].mean()
        assert gap == pytest.approx(0.6, abs=0.03)
        np.testing.assert_array_equal(d.features[:, -1], d.sensitive)

    def test_gaussian_classes_shape(self):
        d = gen_gaussian_classes(GaussianClassesSpec(n_classes=10, dim=4, n_per_class=5))
        assert d.features.shape == (50, 4)
        assert sorted(set(d.labels.tolist())) == list(range(10))


class TestCsv:
    def _write(self, path, text):
        path.write_text(text)
        return path

    def test_numeric_plus_onehot(self, tmp_path):
        f = self._write(tmp_path / "a.csv", "age,sex,y\n30,M,1\n50,F,0\n")
        data, enc = load_csv(f, {"age": "numeric", "sex": "categorical", "y": "label"})
        assert data.features.shape == (2, 3)
        np.testing.assert_allclose(data.features[:, 0], [-1.0, 1.0])
        np.testing.assert_array_equal(data.features[:, 1:], [[0, 1], [1, 0]])
        assert enc.vocab["sex"] == ["F", "M"]

    def test_missing_label(self, tmp_path):
        f = self._write(tmp_path / "a.csv", "age,sex\n30,M\n")
        with pytest.raises(ValueError, match="'y'"):
            load_csv(f, {"age": "numeric", "sex": "categorical", "y": "label"})

    def test_repeatable(self, tmp_path):
        f = self._write(tmp_path / "a.csv", "a,b,y\n1,x,0\n2,y,1\n3,x,1\n")
        schema = {"a": "numeric", "b": "categorical", "y": "label"}
        np.testing.assert_array_equal(load_csv(f, schema)[0].features, load_csv(f, schema)[0].features)

    def test_unseen_category_is_zero(self, tmp_path):
        schema = {"b": "categorical", "y": "label"}
        _, enc = load_csv(self._write(tmp_path / "a.csv", "b,y\nx,0\ny,1\n"), schema)
        data, _ = load_csv(self._write(tmp_path / "b.csv", "b,y\nz,0\nx,1\n"), schema, enc)
        np.testing.assert_array_equal(data.features, [[0, 0], [1, 0]])

    def test_stored_encoding_reproduces(self, tmp_path):
        schema = {"a": "numeric", "b": "categorical", "y": "label"}
        f = self._write(tmp_path / "a.csv", "a,b,y\n1,x,0\n4,y,1\n")
        first, enc = load_csv(f, schema)
        again, _ = load_csv(f, schema, enc)
        np.testing.assert_array_equal(first.features, again.features)

    def test_sensitive_and_round_trip(self, tmp_path):
        d = gen_biased_binary(BiasedBinarySpec(n=200, seed=3))
        write_csv(tmp_path / "adult.csv", d)
        schema = {f"x{i}": "numeric" for i in range(5)} | {"label": "label", "sensitive": "sensitive"}
        loaded, _ = load_csv(tmp_path / "adult.csv", schema)
        np.testing.assert_array_equal(loaded.labels, d.labels)
        np.testing.assert_array_equal(loaded.sensitive, d.sensitive)

    def test_bad_role(self, tmp_path):
        f = self._write(tmp_path / "a.csv", "a,y\n1,0\n")
        with pytest.raises(ValueError):
            load_csv(f, {"a": "text", "y": "label"})


class TestTraining:
    def test_separable_one_layer(self):
        rng = make_rng(0)
        x = rng.standard_normal((200, 2))
        y = (x @ np.array([1.0, -2.0]) > 0).astype(int)
        model = pretrain([2, 1], LabeledDataset(x, y), epochs=1000, lr=1.0)
        assert evaluate(model, LabeledDataset(x, y), "accuracy")[0] >= 0.95

    def test_zero_lr(self):
        data = gen_two_gaussians(TwoGaussiansSpec(n_per_class=20))
        init = MlpModel.init([2, 8, 1], make_rng(5))
        assert pretrain(init, data, epochs=50, lr=0.0) == init

    def test_deterministic(self):
        data = gen_two_gaussians(TwoGaussiansSpec(n_per_class=20))
        assert pretrain([2, 8, 1], data, 50, 0.1, seed=2) == pretrain([2, 8, 1], data, 50, 0.1, seed=2)

    def test_divergence(self):
        rng = make_rng(1)
        data = LabeledDataset(rng.standard_normal((20, 2)), rng.standard_normal(20) * 1e3)
        with pytest.raises(FloatingPointError, match="smaller learning rate"):
            pretrain([2, 16, 1], data, epochs=200, lr=10.0, regression=True)

    def test_finetune_touches_selection_only(self):
        data = gen_two_gaussians(TwoGaussiansSpec(n_per_class=20))
        m = pretrain([2, 8, 8, 1], data, 20, 0.1)
        out = supervised_finetune(m, data, "last", epochs=20, lr=0.1)
        for name, t in out.tensors().items():
            assert np.array_equal(t, m.tensors()[name]) == (name != "2.weight")


class TestScenarioProperties:
    def test_shift_lowers_ini_accuracy(self):
        sc = get_scenario("toy")
        drops = 0
        for seed in range(10):
            prep = prepare(sc, seed)
            src = evaluate(prep.model, prep.source, "accuracy")[0]
            tgt = evaluate(prep.model, sc.target(seed), "accuracy")[0]
            drops += src - tgt >= 0.10
        assert drops >= 9

    def test_opt_dominates_pps_on_support(self):
        sc = get_scenario("toy")
        opt, pps = [], []
        for seed in range(10):
            prep = prepare(sc, seed)
            opt.append(evaluate(opt_reference(sc, prep), prep.support, "accuracy")[0])
            oracle = FeedbackOracle(prep.model, "last", prep.support, prep.holdout, "accuracy", 80)
            _, trace = pps_run(oracle.initial_parameters(), oracle, PpsConfig(80, 0.5, 8, 0.4, seed=seed))
            pps.append(trace.best_score)
        assert np.mean(opt) >= np.mean(pps)
