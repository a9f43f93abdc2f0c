"""Tennis grunt feature extraction and evaluation."""

from ._core import (
    ArgumentError,
    Error,
    FormatError,
    LeakageError,
    confusion,
    extract_feature,
    feature_kinds,
    grad_check,
    hann_window,
    hz_to_mel,
    load_manifest,
    mel_to_hz,
    plan_folds,
    read_wav,
    run_cli,
    synthesize,
    uar,
)

__all__ = [
    "ArgumentError",
    "Error",
    "FormatError",
    "LeakageError",
    "confusion",
    "extract_feature",
    "feature_kinds",
    "grad_check",
    "hann_window",
    "hz_to_mel",
    "load_manifest",
    "mel_to_hz",
    "plan_folds",
    "read_wav",
    "run_cli",
    "synthesize",
    "uar",
]
