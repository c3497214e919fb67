import numpy as np
import pytest

from agrisynth.errors import InvalidConfigError, InvalidSpecError, LengthMismatchError, ModelFailureError, ZeroVarianceError
from agrisynth.optimize import (
    NpkRates,
    ObjectiveSpec,
    PSOConfig,
    SAConfig,
    SolverConfig,
    explained_variability,
    grid_search,
    objective,
    objective_terms,
    particle_swarm,
    recommend_npk,
    simulated_annealing,
)
from agrisynth.rng import Rng
from agrisynth.table import Table

SA_CFG = SAConfig(T0=50.0, alpha=0.99, iters=5000)
PSO_CFG = PSOConfig(particles=30, inertia=0.7, c1=1.5, c2=1.5, iters=200)
NO_FIELD: dict = {}

# non-separable concave quadratic in (n, p, k)
B3 = np.array([2.0, 1.6, 1.2])
G3 = np.array([[0.01, 0.002, 0.0], [0.002, 0.012, 0.001], [0.0, 0.001, 0.008]])


def parabola(field, x):
    n = x[0]
    return 10.0 + 2.0 * n - 0.01 * n * n


def quad3(x):
    return float(B3 @ x - x @ G3 @ x)


@pytest.fixture(scope="module")
def grid_argmax():
    # vectorised 1-kg enumeration of the 201^3 grid, independent of grid_search
    g = np.arange(201.0)
    n, p, k = np.meshgrid(g, g, g, indexing="ij", sparse=True)
    v = (B3[0] * n + B3[1] * p + B3[2] * k
         - (G3[0, 0] * n * n + G3[1, 1] * p * p + G3[2, 2] * k * k
            + 2 * G3[0, 1] * n * p + 2 * G3[0, 2] * n * k + 2 * G3[1, 2] * p * k))
    return np.array(np.unravel_index(np.argmax(v), v.shape), dtype=float)


class TestObjective:
    def test_zero_rates_score_zero(self):
        spec = ObjectiveSpec(weights=(1.0, 1.0, 1.0), thresholds=(0.0, 0.0, 0.0))
        t = objective_terms(NpkRates(0, 0, 0), NO_FIELD, parabola, spec)
        assert (t.gain, t.nue, t.env, t.violation, t.score) == (0.0, 0.0, 0.0, 0.0, 0.0)

    def test_cap_penalty_is_exact(self):
        free = ObjectiveSpec(penalty=250.0)
        capped = ObjectiveSpec(total_cap=140.0, penalty=250.0)
        x = np.array([80.0, 40.0, 30.0])
        assert objective(x, NO_FIELD, parabola, free) - objective(x, NO_FIELD, parabola, capped) == pytest.approx(250.0 * 10, abs=1e-9)

    def test_penalty_zero_inside_feasible_region(self):
        spec = ObjectiveSpec(total_cap=300.0)
        assert objective_terms([50.0, 50.0, 50.0], NO_FIELD, parabola, spec).violation == 0.0

    def test_out_of_bounds_excess_counts(self):
        spec = ObjectiveSpec(bounds=((0, 100), (0, 50), (0, 50)))
        assert objective_terms([105.0, -2.0, 50.0], NO_FIELD, parabola, spec).violation == pytest.approx(7.0)

    def test_nue_and_env(self):
        spec = ObjectiveSpec(weights=(0.0, 1.0, 0.5), thresholds=(90.0, 10.0, 100.0))
        t = objective_terms([100.0, 20.0, 0.0], NO_FIELD, parabola, spec)
        assert t.gain == pytest.approx(100.0)
        assert t.nue == pytest.approx(100.0 / 120.0)
        assert t.env == pytest.approx(10.0**2 + 10.0**2)
        assert t.score == pytest.approx(t.nue - 0.5 * t.env)

    def test_parabola_vertex_on_grid(self):
        spec = ObjectiveSpec(bounds=((0, 200), (0, 0), (0, 0)))
        best, _, _ = grid_search(lambda x: objective(x, NO_FIELD, parabola, spec), spec.bounds, step=1.0)
        assert best[0] == 100.0

    def test_model_failure_wrapped(self):
        def broken(field, x):
            raise RuntimeError("boom")

        with pytest.raises(ModelFailureError):
            objective([1, 1, 1], NO_FIELD, broken, ObjectiveSpec())

    def test_non_finite_prediction(self):
        with pytest.raises(ModelFailureError):
            objective([1, 1, 1], NO_FIELD, lambda f, x: float("nan"), ObjectiveSpec())

    @pytest.mark.parametrize("kw", [
        {"weights": (0.0, 0.0, 0.0)},
        {"weights": (1.0, -1.0, 0.0)},
        {"bounds": ((10, 0), (0, 1), (0, 1))},
        {"penalty": 0.0},
    ])
    def test_invalid_spec(self, kw):
        with pytest.raises(InvalidSpecError):
            ObjectiveSpec(**kw)

    def test_from_dict_named_weights(self):
        spec = ObjectiveSpec.from_dict({"weights": {"yield": 1.0, "env": 0.2}, "total_cap": 250})
        assert spec.weights == (1.0, 0.0, 0.2)
        assert spec.total_cap == 250


class TestSimulatedAnnealing:
    def test_parabola_optimum(self):
        spec = ObjectiveSpec()
        best, _, _ = simulated_annealing(lambda x: objective(x, NO_FIELD, parabola, spec), spec.bounds, SA_CFG, Rng(7))
        assert abs(best[0] - 100.0) <= 2.0

    def test_3d_against_grid(self, grid_argmax):
        best, _, _ = simulated_annealing(quad3, ((0, 200),) * 3, SA_CFG, Rng(7))
        assert np.all(np.abs(best - grid_argmax) <= 2.0)

    def test_single_iteration(self):
        res = simulated_annealing(quad3, ((0, 200),) * 3, SAConfig(iters=1), Rng(1))
        assert res.trace.shape == (1,)
        assert res.score >= quad3(np.full(3, 100.0))

    def test_trace_monotone(self):
        _, _, trace = simulated_annealing(quad3, ((0, 200),) * 3, SAConfig(iters=500), Rng(2))
        assert np.all(np.diff(trace) >= 0)

    def test_within_bounds(self):
        bounds = ((0, 10), (5, 6), (0, 300))
        best, _, _ = simulated_annealing(quad3, bounds, SAConfig(iters=400), Rng(3))
        lo, hi = np.array(bounds).T
        assert np.all((best >= lo) & (best <= hi))

    def test_deterministic(self):
        a = simulated_annealing(quad3, ((0, 200),) * 3, SAConfig(iters=300), Rng(4))
        b = simulated_annealing(quad3, ((0, 200),) * 3, SAConfig(iters=300), Rng(4))
        assert np.array_equal(a.trace, b.trace) and np.array_equal(a.best, b.best)

    @pytest.mark.parametrize("kw", [{"T0": 0.0}, {"alpha": 1.0}, {"alpha": 0.0}, {"iters": 0}])
    def test_invalid_config(self, kw):
        with pytest.raises(InvalidConfigError):
            simulated_annealing(quad3, ((0, 1),) * 3, SAConfig(**kw), Rng(0))


class TestParticleSwarm:
    def test_parabola_optimum(self):
        spec = ObjectiveSpec()
        best, _, _ = particle_swarm(lambda x: objective(x, NO_FIELD, parabola, spec), spec.bounds, PSO_CFG, Rng(7))
        assert abs(best[0] - 100.0) <= 2.0

    def test_3d_against_grid(self, grid_argmax):
        best, _, _ = particle_swarm(quad3, ((0, 200),) * 3, PSO_CFG, Rng(7))
        assert np.all(np.abs(best - grid_argmax) <= 2.0)

    def test_degenerate_bounds(self):
        opt = np.linalg.solve(2 * G3, B3)
        res = particle_swarm(quad3, tuple((v, v) for v in opt), PSOConfig(particles=4, iters=3), Rng(0))
        assert np.array_equal(res.best, opt)
        assert res.trace[0] == pytest.approx(quad3(opt))

    def test_trace_monotone_and_bounded(self):
        bounds = ((0, 50), (0, 200), (10, 20))
        best, _, trace = particle_swarm(quad3, bounds, PSOConfig(iters=60), Rng(5))
        assert np.all(np.diff(trace) >= 0)
        lo, hi = np.array(bounds).T
        assert np.all((best >= lo) & (best <= hi))

    def test_invalid_config(self):
        with pytest.raises(InvalidConfigError):
            particle_swarm(quad3, ((0, 1),) * 3, PSOConfig(particles=1), Rng(0))


class TestScaleInvariance:
    @pytest.mark.parametrize("c", [0.25, 8.0])
    def test_sa_path_unchanged(self, c):
        # power-of-two factors keep every delta/T ratio bit-identical
        spec = ObjectiveSpec(weights=(1.0, 0.5, 0.01), thresholds=(80.0, 40.0, 60.0), total_cap=220.0)
        model = lambda _f, r: quad3(r)
        f = lambda x: objective(x, NO_FIELD, model, spec)
        g = lambda x: objective(x, NO_FIELD, model, spec.scaled(c))
        a = simulated_annealing(f, spec.bounds, SAConfig(T0=20.0, iters=800), Rng(9))
        b = simulated_annealing(g, spec.bounds, SAConfig(T0=20.0 * c, iters=800), Rng(9))
        assert np.array_equal(a.best, b.best)
        assert np.allclose(b.trace, c * a.trace, rtol=1e-12)

    @pytest.mark.parametrize("c", [0.3, 17.0])
    def test_pso_argmax_unchanged(self, c):
        spec = ObjectiveSpec(weights=(1.0, 0.5, 0.01), thresholds=(80.0, 40.0, 60.0))
        model = lambda _f, r: quad3(r)
        a = particle_swarm(lambda x: objective(x, NO_FIELD, model, spec), spec.bounds, PSOConfig(iters=40), Rng(9))
        b = particle_swarm(lambda x: objective(x, NO_FIELD, model, spec.scaled(c)), spec.bounds,
                           PSOConfig(iters=40), Rng(9))
        assert np.array_equal(a.best, b.best)


@pytest.fixture(scope="module")
def fields():
    return Table({"field_id": ["f1", "f2", "f3", "f4"], "om": [1.0, 2.0, 3.0, 4.0]},
                 dtypes={"field_id": "category", "om": "float64"})


class TestRecommend:
    @staticmethod
    def model(field, x):
        # linear response grows with organic matter, curvature fixed
        b = B3 * (0.6 + 0.2 * field["om"])
        return float(1000.0 + b @ x - x @ G3 @ x)

    @staticmethod
    def optimum(om):
        return np.linalg.solve(2 * G3, B3 * (0.6 + 0.2 * om))

    def test_matches_analytic_vertex(self, fields):
        spec = ObjectiveSpec(bounds=((0, 200),) * 3)
        rec = recommend_npk(fields, self.model, spec, SolverConfig(SA_CFG, PSO_CFG, seed=3), ["om"])
        got = np.column_stack([rec["rec_n"], rec["rec_p"], rec["rec_k"]])
        want = np.array([self.optimum(om) for om in fields["om"]])
        assert np.mean(np.abs(got - want)) <= 2.0
        assert list(rec["field_id"]) == ["f1", "f2", "f3", "f4"]
        assert set(rec["solver_used"]) <= {"sa", "pso"}

    def test_predicted_gain_definition(self, fields):
        spec = ObjectiveSpec(weights=(1.0, 2.0, 0.001), thresholds=(60.0, 30.0, 30.0))
        cfg = SolverConfig(SAConfig(iters=300), PSOConfig(iters=30), seed=1)
        rec = recommend_npk(fields, self.model, spec, cfg, ["om"])
        for i in range(rec.n_rows):
            x = np.array([rec["rec_n"][i], rec["rec_p"][i], rec["rec_k"][i]])
            field = {"om": fields["om"][i]}
            gain = self.model(field, x) - self.model(field, np.zeros(3))
            assert abs(rec["predicted_gain"][i] - gain) <= 1e-9

    def test_env_only_goes_to_zero(self, fields):
        spec = ObjectiveSpec(weights=(0.0, 0.0, 1.0), thresholds=(0.0, 0.0, 0.0))
        cfg = SolverConfig(SAConfig(iters=400), PSOConfig(iters=60), seed=2)
        rec = recommend_npk(fields, self.model, spec, cfg, ["om"])
        got = np.column_stack([rec["rec_n"], rec["rec_p"], rec["rec_k"]])
        assert np.allclose(got, 0.0, atol=1e-9)

    def test_deterministic(self, fields):
        cfg = SolverConfig(SAConfig(iters=200), PSOConfig(iters=20), seed=5)
        a = recommend_npk(fields, self.model, ObjectiveSpec(), cfg, ["om"])
        b = recommend_npk(fields, self.model, ObjectiveSpec(), cfg, ["om"])
        assert np.array_equal(a["rec_n"], b["rec_n"])


class TestExplainedVariability:
    def test_identical(self):
        obs = np.array([120.0, 80.0, 95.0, 140.0])
        assert explained_variability(obs, obs) == 100.0

    def test_offset(self):
        obs = np.array([120.0, 80.0, 95.0, 140.0])
        assert explained_variability(obs + 25.0, obs) == pytest.approx(100.0, abs=1e-9)

    def test_shuffled_near_zero(self):
        obs = Rng(11).normal(100.0, 20.0, size=500)
        shuffled = obs[Rng(12).permutation(obs.size)]
        assert explained_variability(shuffled, obs) <= 10.0

    def test_partial(self):
        obs = np.array([1.0, 2.0, 3.0, 4.0])
        rec = np.array([1.0, 2.0, 3.0, 5.0])
        want = (1 - np.var(rec - obs) / np.var(obs)) * 100
        assert explained_variability(rec, obs) == pytest.approx(want)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            explained_variability([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_too_short(self):
        with pytest.raises(LengthMismatchError):
            explained_variability([1.0], [1.0])

    def test_zero_variance(self):
        with pytest.raises(ZeroVarianceError):
            explained_variability([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])
