"""Deterministic synthetic agricultural data: generation, augmentation,
validation, yield surrogates, NPK optimization and season simulation."""

from .augment import AugmentPlan, extrapolate_augment, jitter_augment, smote_augment, stratified_oversample
from .catalog import Catalog, CatalogEntry, bundled_catalog, load_manifest, query, register_output, save_manifest
from .errors import AgriSynthError, DataError, ExternalServiceError, UsageError
from .generate import (
    DistSpec,
    SoilGridParams,
    TrialGenParams,
    WeatherParams,
    YieldResponse,
    gen_column,
    gen_soil_grid,
    gen_table,
    gen_trials,
    gen_weather,
)
from .model import (
    EvalReport,
    KnnSpec,
    RidgeSpec,
    StackSpec,
    TreeSpec,
    evaluate,
    fit,
    fit_stacked,
    load_model,
    predict,
    temporal_split,
)
from .optimize import (
    ObjectiveSpec,
    PSOConfig,
    SAConfig,
    SolverConfig,
    explained_variability,
    objective,
    particle_swarm,
    recommend_npk,
    simulated_annealing,
)
from .power import PowerClient, fetch_power_daily, parse_power_json
from .rng import Rng
from .simulate import CropParams, ManagementAction, SeasonLog, blend_weather, run_season
from .table import Column, Table, concat, filter_rows, quantile, read_csv, write_csv
from .validate import (
    PlausibilityRule,
    ValidationReport,
    compare_tables,
    ks_two_sample,
    mahalanobis_overlap,
    overlap_coefficient,
    pca_fit,
)
from .visualize import ChartSpec, render_compare, render_heatmap, render_histogram, render_timeseries

__version__ = "0.1.0"
