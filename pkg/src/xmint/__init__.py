"""Hierarchy-preserving selection of mediators and exposure-by-mediator interactions."""

from .core import (
    CoefficientSet,
    Dataset,
    NuisanceParams,
    SelectionState,
    StandardizedDataset,
    XMIntError,
    extract_selection,
    interaction_columns,
    standardize,
)
from .path import DegenerateInput, EnlargementExhausted, PathConfig, PathResult, run_path
from .simulation import SimTruth, generate_dataset, run_grid, score_selection

__version__ = "0.1.0"

__all__ = [
    "CoefficientSet",
    "Dataset",
    "DegenerateInput",
    "EnlargementExhausted",
    "NuisanceParams",
    "PathConfig",
    "PathResult",
    "SelectionState",
    "SimTruth",
    "StandardizedDataset",
    "XMIntError",
    "extract_selection",
    "generate_dataset",
    "interaction_columns",
    "run_grid",
    "run_path",
    "score_selection",
    "standardize",
]
