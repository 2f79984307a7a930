"""State-aware EEG encoders: pre-training, adaptation and metrics."""

from ._core import (  # noqa: F401
    CheckpointError,
    ConfigError,
    EmptyMontageError,
    Model,
    generate_synthetic,
    gradcheck,
    metrics,
    num_patches,
    render_config,
    resample,
    resolve_montage,
    state_prior,
    version,
    weight_schedule,
)

__version__ = version()
