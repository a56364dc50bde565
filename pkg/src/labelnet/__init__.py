"""labelnet: label-graph document classification.

Pipeline: corpus ingestion -> document encoding -> label graph -> gated
GCN classifier trained with focal loss -> Platt calibration and threshold
search -> evaluation with significance testing -> integrated-gradients
attribution. See the CLI (`labelnet --help`) for the batch surface.
"""

from ._kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
