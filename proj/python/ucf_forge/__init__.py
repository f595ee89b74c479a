"""Forgery-detection toolkit: disentangled encoders, conditional AdaIN
decoder, multi-task training and evaluation utilities."""

from ._core import (
    __version__,
    adain,
    auc,
    detect,
    evaluate,
    export_features,
    gen_data,
    scan_dataset,
    train,
)

__all__ = [
    "__version__",
    "adain",
    "auc",
    "detect",
    "evaluate",
    "export_features",
    "gen_data",
    "scan_dataset",
    "train",
]
