"""Few-shot network anomaly detection: flow features, selection, meta-training."""

from ._core import (
    FormatError,
    Net,
    NumericError,
    PreconditionError,
    UsageError,
    __version__,
    entropy_bits,
    extract,
    f1_score,
    feature_ids,
    missing_ratio,
    run,
)

__all__ = [
    "FormatError",
    "Net",
    "NumericError",
    "PreconditionError",
    "UsageError",
    "__version__",
    "entropy_bits",
    "extract",
    "f1_score",
    "feature_ids",
    "missing_ratio",
    "run",
]
