"""The eight acceptance criteria, each at its stated tolerance and time budget.

Every test records one ``criterion N: PASS|FAIL`` line, printed immediately
and again in the pytest terminal summary.
"""

import datetime as dt
import json
import time
from pathlib import Path

import numpy as np
import pytest

from agrisynth import cli
from agrisynth.augment import PROVENANCE, AugmentPlan, smote_augment, stratified_oversample
from agrisynth.generate import WeatherParams, gen_weather
from agrisynth.optimize import (
    ObjectiveSpec,
    PSOConfig,
    SAConfig,
    explained_variability,
    objective,
    particle_swarm,
    simulated_annealing,
)
from agrisynth.power import FIXTURE_DIR, PowerClient, cache_name, fetch_power_daily
from agrisynth.rng import Rng
from agrisynth.simulate import CropParams, run_season
from agrisynth.table import Cmp, Table, quantile, read_csv, write_csv
from agrisynth.validate import ks_statistic, ks_two_sample, overlap_coefficient, pca_fit


def record(log, num, ok, detail):
    line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}"
    log[num] = line
    print(line)


class Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


# -- 1. determinism ----------------------------------------------------------------

PIPELINE = {
    "weather.toml": 'kind = "weather"\n[weather]\nn_days = 400\n',
    "grid.toml": 'kind = "soil_grid"\n[soil_grid]\nwidth = 15\nheight = 10\n',
    "trials.toml": 'kind = "trials"\n[trials]\nn = 200\n',
    "table.toml": 'kind = "table"\nn = 80\n[columns.om]\nfamily = "lognormal"\nmu_log = 0.7\nsigma_log = 0.3\n',
    "augment.toml": ('[augment]\nfeature_cols = ["ph", "n_rate", "yield_kgha"]\ngrowth_pct = 145.2\n'
                     'stratum = {column = "season", in = ["2019", "2020"]}\n'),
    "model.toml": '[model]\ntarget = "yield_kgha"\n[model.spec]\nkind = "stack"\nfolds = 3\n',
    "optimize.toml": "[optimize.solver.sa]\niters = 200\n[optimize.solver.pso]\nparticles = 8\niters = 20\n",
    "simulate.toml": ('[simulate]\nextend_days = 90\n[simulate.location]\nlat = -1.2921\nlon = 36.8219\n'
                      'start = "2021-01-01"\nend = "2021-01-31"\n'),
}


def run_pipeline(root: Path) -> dict[str, bytes]:
    root.mkdir()
    for name, text in PIPELINE.items():
        (root / name).write_text(text, encoding="utf-8")
    c = lambda name: str(root / name)
    steps = [
        ["generate", "--config", c("weather.toml"), "--seed", "1", "-o", c("weather.csv")],
        ["generate", "--config", c("grid.toml"), "--seed", "2", "-o", c("grid.csv")],
        ["generate", "--config", c("trials.toml"), "--seed", "3", "-o", c("trials.csv")],
        ["generate", "--config", c("table.toml"), "--seed", "4", "-o", c("table.csv")],
        ["augment", "--config", c("augment.toml"), "--seed", "5", "--input", c("trials.csv"), "-o", c("aug.csv")],
        ["model", "fit", "--config", c("model.toml"), "--seed", "6", "--input", c("aug.csv"), "-o", c("model.json")],
        ["optimize", "--config", c("optimize.toml"), "--seed", "7", "--input", c("fields.csv"),
         "--model", c("model.json"), "-o", c("recs.csv")],
        ["simulate", "--config", c("simulate.toml"), "--seed", "8", "--offline", "-o", c("season.csv")],
        ["demo", "--seed", "42", "-o", c("demo.json")],
    ]
    for argv in steps:
        assert cli.run(argv) == 0, argv
        if argv[-1].endswith("trials.csv"):
            # the first four trial rows double as the fields to optimise
            trials = read_csv(root / "trials.csv", root / "trials.schema.json")
            write_csv(trials.take(np.arange(4)), root / "fields.csv", root / "fields.schema.json")
    return {p.name: p.read_bytes() for p in sorted(root.iterdir()) if p.suffix in (".csv", ".json")}


def test_criterion_1_determinism(tmp_path, acceptance_log):
    with Clock() as clock:
        first = run_pipeline(tmp_path / "a")
        second = run_pipeline(tmp_path / "b")
    same = first.keys() == second.keys() and all(first[k] == second[k] for k in first)
    ok = same and clock.elapsed < 60
    record(acceptance_log, 1, ok, f"{len(first)} outputs byte-identical={same} in {clock.elapsed:.1f}s (<60s)")
    assert same
    assert clock.elapsed < 60


# -- 2. statistical oracles ---------------------------------------------------------


def test_criterion_2_statistical_oracles(acceptance_log):
    with Clock() as clock:
        sample = Rng(1).normal(size=200)
        d_same, p_same = ks_two_sample(sample, sample)
        d_half = ks_statistic([1, 2, 3, 4], [3, 4, 5, 6])
        ov_same = overlap_coefficient(sample, sample)
        ov_apart = overlap_coefficient([0.0, 0.1, 0.2], [5.0, 5.1, 5.2], bins=10)
        z = Rng(2).normal(size=40_000).reshape(20_000, 2)
        iso = pca_fit(Table({"a": z[:, 0], "b": z[:, 1]}), ["a", "b"]).ratios
        w = Rng(3).normal(size=600).reshape(200, 3) @ np.array([[1.0, 0.4, 0.1], [0, 1.0, 0.5], [0, 0, 1.0]])
        ratios = pca_fit(Table({"a": w[:, 0], "b": w[:, 1], "c": w[:, 2]}), ["a", "b", "c"]).ratios
    checks = {
        "KS identical D=0": d_same == 0.0,
        "KS identical p=1": abs(p_same - 1.0) <= 1e-9,
        "KS hand D=0.5": abs(d_half - 0.5) <= 1e-9,
        "overlap identical=1": abs(ov_same - 1.0) <= 1e-9,
        "overlap disjoint=0": abs(ov_apart) <= 1e-9,
        "PCA ratios sum 1": abs(float(np.sum(ratios)) - 1.0) <= 1e-9,
        "PCA isotropic 0.5/0.5": bool(np.all(np.abs(np.asarray(iso) - 0.5) <= 0.03)),
    }
    ok = all(checks.values()) and clock.elapsed < 10
    failed = [k for k, v in checks.items() if not v]
    record(acceptance_log, 2, ok, f"{len(checks) - len(failed)}/{len(checks)} oracles {failed or ''} "
                                  f"in {clock.elapsed:.2f}s (<10s)")
    assert not failed
    assert clock.elapsed < 10


# -- 3. SMOTE closure -------------------------------------------------------------------


def segment_distance(points, originals):
    best = np.full(len(points), np.inf)
    for i in range(len(originals)):
        for j in range(i + 1, len(originals)):
            a, ab = originals[i], originals[j] - originals[i]
            denom = ab @ ab
            t = np.zeros(len(points)) if denom == 0 else np.clip((points - a) @ ab / denom, 0, 1)
            best = np.minimum(best, np.linalg.norm(points - (a + t[:, None] * ab), axis=1))
    return best


def test_criterion_3_smote_closure(acceptance_log):
    worst = 0.0
    range_ok = True
    with Clock() as clock:
        for seed, n in enumerate([2, 5, 12, 30, 50]):
            rng = Rng(100 + seed)
            cols = ["a", "b", "c"]
            t = Table({c: rng.normal(10.0, 3.0, size=n) for c in cols})
            out = smote_augment(t, cols, min(5, n - 1), 200, Rng(seed))
            syn = out.take(out[PROVENANCE] == "true").matrix(cols)
            worst = max(worst, float(segment_distance(syn, t.matrix(cols)).max()))
        for seed in range(5):
            rng = Rng(200 + seed)
            y = rng.normal(4000.0, 900.0, size=48)
            t = Table({"x": rng.normal(size=48), "yield": y})
            q1 = quantile(y, 0.25)
            inside = y[y <= q1]
            for feats in (("x",), ("x", "yield")):
                plan = AugmentPlan(feature_cols=feats, stratum=Cmp("yield", "<=", q1), n_new=150)
                out = stratified_oversample(t, plan, Rng(seed))
                sy = out.take(out[PROVENANCE] == "true")["yield"]
                range_ok &= bool(sy.min() >= inside.min() and sy.max() <= inside.max())
    ok = worst <= 1e-9 and range_ok and clock.elapsed < 30
    record(acceptance_log, 3, ok, f"max segment distance {worst:.2e} (<=1e-9), quartile range kept={range_ok} "
                                  f"in {clock.elapsed:.1f}s (<30s)")
    assert worst <= 1e-9
    assert range_ok
    assert clock.elapsed < 30


# -- 4. optimizer oracle ------------------------------------------------------------------

B3 = np.array([2.0, 1.6, 1.2])
G3 = np.array([[0.01, 0.002, 0.0], [0.002, 0.012, 0.001], [0.0, 0.001, 0.008]])


def grid_argmax_3d():
    g = np.arange(201.0)
    n, p, k = np.meshgrid(g, g, g, indexing="ij", sparse=True)
    v = (B3[0] * n + B3[1] * p + B3[2] * k
         - (G3[0, 0] * n * n + G3[1, 1] * p * p + G3[2, 2] * k * k
            + 2 * G3[0, 1] * n * p + 2 * G3[0, 2] * n * k + 2 * G3[1, 2] * p * k))
    return np.array(np.unravel_index(np.argmax(v), v.shape), dtype=float)


def test_criterion_4_optimizer_oracle(acceptance_log):
    sa_cfg = SAConfig(T0=50.0, alpha=0.99, iters=5000)
    pso_cfg = PSOConfig(particles=30, inertia=0.7, c1=1.5, c2=1.5, iters=200)
    errors = {}
    with Clock() as clock:
        spec = ObjectiveSpec(bounds=((0, 200), (0, 200), (0, 200)))
        model = lambda field, x: 10.0 + 2.0 * x[0] - 0.01 * x[0] ** 2
        f1 = lambda x: objective(x, {}, model, spec)
        errors["SA 1-D"] = abs(simulated_annealing(f1, spec.bounds, sa_cfg, Rng(42)).best[0] - 100.0)
        errors["PSO 1-D"] = abs(particle_swarm(f1, spec.bounds, pso_cfg, Rng(42)).best[0] - 100.0)
        target = grid_argmax_3d()
        f3 = lambda x: float(B3 @ x - x @ G3 @ x)
        bounds = ((0, 200),) * 3
        errors["SA 3-D"] = float(np.max(np.abs(simulated_annealing(f3, bounds, sa_cfg, Rng(42)).best - target)))
        errors["PSO 3-D"] = float(np.max(np.abs(particle_swarm(f3, bounds, pso_cfg, Rng(42)).best - target)))
    ok = all(e <= 2.0 for e in errors.values()) and clock.elapsed < 120
    detail = ", ".join(f"{k} {v:.2f}" for k, v in errors.items())
    record(acceptance_log, 4, ok, f"max |best-argmax| kg/ha: {detail} (<=2) in {clock.elapsed:.1f}s (<120s)")
    assert all(e <= 2.0 for e in errors.values()), errors
    assert clock.elapsed < 120


# -- 5. directional re-enactment -----------------------------------------------------------


@pytest.fixture(scope="module")
def demo(acceptance_log):
    with Clock() as clock:
        report = cli.pipeline_demo()
    mape_ok = report.augmented.mape <= report.baseline.mape
    overlap = report.validation.mahalanobis_overlap
    growth_ok = abs(report.growth_pct - 145.2) < 1e-9
    ok = mape_ok and overlap >= 0.95 and growth_ok and clock.elapsed < 120
    record(acceptance_log, 5, ok,
           f"MAPE augmented {report.augmented.mape:.3f}% vs baseline {report.baseline.mape:.3f}% "
           f"(direction {'holds' if mape_ok else 'reversed'}), growth {report.growth_pct:.1f}%, "
           f"overlap {overlap:.4f} (>=0.95) in {clock.elapsed:.1f}s (<120s)")
    return report, clock.elapsed


def test_criterion_5_growth_and_overlap(demo):
    report, elapsed = demo
    assert report.growth_pct == pytest.approx(145.2, abs=1e-9)
    assert report.validation.mahalanobis_overlap >= 0.95
    assert elapsed < 120


@pytest.mark.xfail(strict=True, reason="on the bundled synthetic fixture SMOTE-augmented MAPE is slightly worse "
                                       "than the baseline; recorded as an unmet criterion, not tuned away")
def test_criterion_5_mape_direction(demo):
    report, _ = demo
    assert report.augmented.mape <= report.baseline.mape


# -- 6. simulation invariants -----------------------------------------------------------------


def test_criterion_6_simulation_invariants(acceptance_log):
    crop = CropParams(initial_water=60.0)
    root = Rng(2024)
    bad = []
    with Clock() as clock:
        for i in range(1000):
            w = gen_weather(WeatherParams(), "2020-03-01", 200, root.split(f"weather:{i}"))
            log = run_season(w, crop)
            d = log.daily
            fine = (np.all(np.diff(d["gdd_cum"]) >= 0) and np.all(np.diff(d["stage"]) >= 0)
                    and np.all((d["soil_water"] >= 0) & (d["soil_water"] <= crop.water_capacity))
                    and 0.0 <= log.final_yield <= crop.potential_yield)
            if not fine:
                bad.append(i)
        wet = Table({"date": [f"2021-04-{d:02d}" for d in range(1, 31)], "tmin": np.full(30, 15.0),
                     "tmax": np.full(30, 30.0), "rain_mm": np.full(30, 500.0)}, dtypes={"date": "date"})
        full = CropParams()  # bucket starts at capacity
        saturated = run_season(wet, full).final_yield
    ok = not bad and saturated == full.potential_yield and clock.elapsed < 60
    record(acceptance_log, 6, ok, f"{1000 - len(bad)}/1000 seasons satisfy invariants, saturating rain yield "
                                  f"{saturated:.1f} == {full.potential_yield:.1f} in {clock.elapsed:.1f}s (<60s)")
    assert not bad
    assert saturated == full.potential_yield
    assert clock.elapsed < 60


# -- 7. external-client contract ----------------------------------------------------------------


class _CountingSession:
    def __init__(self, doc):
        self.doc = doc
        self.calls = 0

    def get(self, url, params=None, timeout=None):
        self.calls += 1
        doc = self.doc

        class R:
            status_code = 200
            text = ""

            def json(self):
                return doc

        return R()


def test_criterion_7_external_client(tmp_path, golden_dir, acceptance_log):
    lat, lon, start, end = -1.2921, 36.8219, dt.date(2021, 1, 1), dt.date(2021, 1, 31)
    got = fetch_power_daily(lat, lon, start, end, source="fixture")
    want = read_csv(golden_dir / "power_weather.csv", golden_dir / "power_weather.schema.json")
    golden_ok = got == want
    doc = json.loads((FIXTURE_DIR / cache_name(lat, lon, start, end)).read_text(encoding="utf-8"))
    session = _CountingSession(doc)
    client = PowerClient(cache_dir=tmp_path, session=session)
    client.fetch(lat, lon, start, end)
    before = session.calls
    again = client.fetch(lat, lon, start, end)
    cache_ok = before == 1 and session.calls == before and again == got
    ok = golden_ok and cache_ok
    record(acceptance_log, 7, ok, f"fixture parse matches golden={golden_ok}, cache hit made "
                                  f"{session.calls - before} network calls; live test opt-in (AGRISYNTH_LIVE=1)")
    assert golden_ok
    assert cache_ok


# -- 8. explained variability ----------------------------------------------------------------------


def test_criterion_8_explained_variability(acceptance_log):
    obs = Rng(8).normal(120.0, 25.0, size=400)
    same = explained_variability(obs, obs)
    offset = explained_variability(obs + 17.5, obs)
    shuffled = explained_variability(obs[Rng(9).permutation(obs.size)], obs)
    ok = same == 100.0 and abs(offset - 100.0) <= 1e-9 and shuffled <= 10.0
    record(acceptance_log, 8, ok, f"identical {same:.1f}%, offset {offset:.1f}%, shuffled {shuffled:.1f}% (<=10)")
    assert same == 100.0
    assert offset == pytest.approx(100.0, abs=1e-9)
    assert shuffled <= 10.0
