"""Constraint-based causal discovery for masked, autocorrelated daily time series."""

__version__ = "0.1.0"

from .citest import CITestResult, LaggedCITester, RankNormalTransformer, partial_correlation, rank_normal_transform, robust_parcorr_test
from .dataset import (
    ALL_REGIMES,
    RegimeSpec,
    TimeSeriesDataset,
    VariableMeta,
    WindowSpec,
    apply_event_mask,
    build_regime_mask,
    load_csv,
    rolling_windows,
)
from .engine import LPCMCI, EngineConfig, discover, orientation_phase, run_regime_suite, skeleton_phase
from .evaluation import (
    EffectTable,
    GrangerBaseline,
    RecoveryMetrics,
    edge_precision_recall,
    effect_ratio_summary,
    granger_baseline,
    load_reference_effects,
    stability_report,
)
from .graph import LinkMark, TemporalCausalGraph, interpret
from .knowledge import BackgroundKnowledge, ercot_default_knowledge
from .preprocess import WeatherPCA, aggregate_daily, decompose_prices, fill_gas_prices, fill_temperature, gen_controls, pca_weather
from .simulate import GroundTruthSCM, expected_marks, latent_motif, random_svar, sample

__all__ = [name for name in dir() if not name.startswith("_")]
