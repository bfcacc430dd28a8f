"""Sponge-poisoning energy-latency attack lab with pruning defenses.

Thin Python layer over the C++ core. Arrays are float64 numpy arrays,
rows are samples.
"""

from ._core import (
    Dataset,
    EnergyReport,
    EpochStats,
    ExperimentRecord,
    GridSpec,
    IoError,
    MlpConfig,
    MlpModel,
    NumericalError,
    SpongeConfig,
    TrainConfig,
    TrainResult,
    ValidationError,
    compact,
    emit_trend_svg,
    energy_proxy,
    load_feature_csv,
    neuron_prune,
    records_from_csv,
    records_to_csv,
    run_grid,
    synth_blobs,
    train,
    weight_prune,
    window_count,
    window_series_csv,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
