import numpy as np
import pytest

from agrisynth.errors import (
    EmptySideError,
    InvalidSpecError,
    KTooLargeError,
    SingularSystemError,
    TooFewRowsError,
    UnknownSeasonError,
    ZeroTargetError,
)
from agrisynth.generate import TrialGenParams, gen_trials
from agrisynth.model import (
    KnnSpec,
    RidgeSpec,
    StackSpec,
    TreeSpec,
    evaluate,
    fit,
    fit_stacked,
    fold_assignment,
    load_model,
    metrics,
    predict,
    spec_from_dict,
    temporal_split,
)
from agrisynth.rng import Rng
from agrisynth.table import Table

FEATURES = ["ph", "organic_matter_pct", "n_mgkg", "p_mgkg", "k_mgkg", "n_rate", "p_rate", "k_rate"]


@pytest.fixture(scope="module")
def trials():
    return gen_trials(TrialGenParams(n=600), Rng(21))


class TestTemporalSplit:
    @pytest.fixture
    def seasons(self):
        return Table({"season": list("AABBCC"), "y": np.arange(6.0)}, dtypes={"season": "category"})

    def test_holds_out_c(self, seasons):
        train, test = temporal_split(seasons, "season", ["C"])
        assert set(train["season"].tolist()) == {"A", "B"}
        assert set(test["season"].tolist()) == {"C"}

    def test_partition(self, trials):
        train, test = temporal_split(trials, "season", ["2021"])
        assert train.n_rows + test.n_rows == trials.n_rows
        ids_a, ids_b = set(train["field_id"].tolist()), set(test["field_id"].tolist())
        assert not ids_a & ids_b and ids_a | ids_b == set(trials["field_id"].tolist())

    def test_all_seasons(self, seasons):
        with pytest.raises(EmptySideError):
            temporal_split(seasons, "season", ["A", "B", "C"])

    def test_unknown(self, seasons):
        with pytest.raises(UnknownSeasonError):
            temporal_split(seasons, "season", ["Z"])


class TestRidge:
    def test_exact_line(self):
        x = np.arange(10.0)[:, None]
        m = fit(RidgeSpec(0.0), x, 2 * x[:, 0] + 1)
        assert m.intercept == pytest.approx(1.0, abs=1e-9)
        assert m.coef[0] == pytest.approx(2.0, abs=1e-9)
        np.testing.assert_allclose(m.predict(x), 2 * x[:, 0] + 1, atol=1e-9)

    def test_normal_equations_oracle(self):
        r = Rng(2)
        X = r.normal(size=(50, 3))
        y = X @ np.array([1.0, -2.0, 0.5]) + 3 + r.normal(size=50) * 0.1
        lam = 2.5
        m = fit(RidgeSpec(lam), X, y)
        Xc, yc = X - X.mean(0), y - y.mean()
        beta = np.linalg.solve(Xc.T @ Xc + lam * np.eye(3), Xc.T @ yc)
        np.testing.assert_allclose(m.coef, beta, atol=1e-10)
        assert m.intercept == pytest.approx(y.mean() - X.mean(0) @ beta, abs=1e-10)

    def test_huge_lambda_shrinks_to_mean(self):
        r = Rng(3)
        X = r.normal(size=(40, 2))
        y = X @ np.array([5.0, -3.0]) + 10
        m = fit(RidgeSpec(1e12), X, y)
        np.testing.assert_allclose(m.predict(X), y.mean(), atol=1e-6 * np.abs(y).max())

    def test_singular(self):
        X = np.column_stack([np.arange(5.0), 2 * np.arange(5.0)])
        with pytest.raises(SingularSystemError):
            fit(RidgeSpec(0.0), X, np.arange(5.0))

    def test_feature_order_invariance(self, trials):
        y = trials["yield_kgha"]
        a = fit(RidgeSpec(1.0), trials.select(FEATURES), y)
        b = fit(RidgeSpec(1.0), trials.select(FEATURES[::-1]), y)
        np.testing.assert_allclose(a.predict(trials.select(FEATURES)), b.predict(trials.select(FEATURES[::-1])),
                                   rtol=1e-10)

    def test_negative_lambda(self):
        with pytest.raises(InvalidSpecError):
            RidgeSpec(-1.0)


class TestKnn:
    def test_k_equals_n_is_mean(self):
        X = Rng(4).normal(size=(12, 2))
        y = np.arange(12.0)
        m = fit(KnnSpec(12), X, y)
        np.testing.assert_allclose(m.predict(X + 0.3), y.mean())

    def test_k_too_large(self):
        with pytest.raises(KTooLargeError):
            fit(KnnSpec(5), np.zeros((3, 1)), np.zeros(3))

    def test_k1_interpolates(self):
        X = np.array([[0.0], [1.0], [5.0]])
        m = fit(KnnSpec(1), X, np.array([10.0, 20.0, 30.0]))
        np.testing.assert_allclose(m.predict(X), [10.0, 20.0, 30.0])


class TestTree:
    def test_step_function(self):
        x = np.linspace(0, 1, 40)[:, None]
        y = np.where(x[:, 0] < 0.5, 1.0, 5.0)
        m = fit(TreeSpec(1, 1), x, y)
        np.testing.assert_allclose(m.predict(x), y)

    def test_min_leaf_respected(self):
        x = np.arange(10.0)[:, None]
        m = fit(TreeSpec(5, 4), x, x[:, 0] ** 2)
        assert m.n_leaves <= 2

    def test_invalid(self):
        with pytest.raises(InvalidSpecError):
            TreeSpec(0, 1)


class TestStacked:
    def test_informative_plus_constant(self):
        r = Rng(5)
        X = r.normal(size=(300, 1))
        y = 4 * X[:, 0] + r.normal(size=300) * 0.1
        # knn with k = training-fold size predicts the fold mean: a constant base
        spec = StackSpec((RidgeSpec(0.0), KnnSpec(240)), folds=5)
        m = fit_stacked(spec, X, y, Rng(6))
        # the near-constant base's own weight is not identifiable (its out-of-fold
        # predictions vary only through fold means), so only the informative one is pinned
        assert m.meta_coef[0] == pytest.approx(1.0, abs=0.05)

    def test_identical_exact_bases(self):
        x = np.linspace(0, 10, 60)[:, None]
        y = 2 * x[:, 0] + 1
        spec = StackSpec((RidgeSpec(0.0), RidgeSpec(0.0)), folds=4)
        m = fit_stacked(spec, x, y, Rng(7))
        np.testing.assert_allclose(m.predict(x), fit(RidgeSpec(0.0), x, y).predict(x), atol=1e-9)

    def test_identical_bases_affine_in_base(self, trials):
        X, y = trials.select(FEATURES), trials["yield_kgha"]
        m = fit_stacked(StackSpec((RidgeSpec(1.0), RidgeSpec(1.0)), folds=4), X, y, Rng(7))
        base = fit(RidgeSpec(1.0), X, y).predict(X)
        assert m.meta_coef[0] == pytest.approx(m.meta_coef[1], rel=1e-9)
        slope = m.meta_coef.sum()
        np.testing.assert_allclose(m.predict(X), m.meta_intercept + slope * base, rtol=1e-12)
        assert slope == pytest.approx(1.0, abs=0.02)

    def test_deterministic(self, trials):
        X, y = trials.select(FEATURES), trials["yield_kgha"]
        a = fit_stacked(StackSpec(), X, y, Rng(8)).predict(X)
        b = fit_stacked(StackSpec(), X, y, Rng(8)).predict(X)
        assert a.tolist() == b.tolist()

    def test_too_few_rows(self):
        with pytest.raises(TooFewRowsError):
            fit_stacked(StackSpec(folds=5), np.zeros((3, 1)), np.zeros(3), Rng(1))

    def test_fold_assignment_balanced(self):
        f = fold_assignment(23, 5, Rng(9))
        assert sorted(np.bincount(f).tolist()) == [4, 4, 5, 5, 5]

    def test_stack_near_best_base(self, trials):
        train, test = temporal_split(trials, "season", ["2021"])
        Xtr, ytr, Xte, yte = train.select(FEATURES), train["yield_kgha"], test.select(FEATURES), test["yield_kgha"]
        spec = StackSpec()
        stacked = evaluate(fit_stacked(spec, Xtr, ytr, Rng(10)), Xte, yte).mape
        bases = [evaluate(fit(s, Xtr, ytr), Xte, yte).mape for s in spec.bases]
        assert stacked <= min(bases) + 2.0


class TestMetrics:
    def test_perfect(self):
        r = metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert (r.mape, r.rmse, r.r2) == (0.0, 0.0, 1.0)

    def test_hand_mape(self):
        assert metrics([100.0, 200.0], [110.0, 180.0]).mape == pytest.approx(10.0)

    def test_mean_predictor_r2(self):
        y = np.array([1.0, 4.0, 7.0])
        assert metrics(y, np.full(3, y.mean())).r2 == pytest.approx(0.0, abs=1e-15)

    def test_zero_target(self):
        with pytest.raises(ZeroTargetError):
            metrics([0.0, 1.0], [0.0, 1.0])


class TestPersistence:
    @pytest.mark.parametrize("spec", [RidgeSpec(0.5), KnnSpec(3), TreeSpec(3, 2), StackSpec(folds=3)])
    def test_round_trip(self, tmp_path, trials, spec):
        X, y = trials.select(FEATURES), trials["yield_kgha"]
        m = fit_stacked(spec, X, y, Rng(1)) if isinstance(spec, StackSpec) else fit(spec, X, y)
        m.save(tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        assert predict(back, X).tolist() == predict(m, X).tolist()
        assert list(back.feature_names) == FEATURES

    def test_spec_from_dict(self):
        assert spec_from_dict({"kind": "knn", "k": 4}) == KnnSpec(4)
        with pytest.raises(InvalidSpecError):
            spec_from_dict({"kind": "boost"})
