"""Evaluation toolkit for multi-label classifier ensembles."""

__version__ = "0.1.0"

from .calibration import brier, ece, nll, reliability_bins
from .classification import auroc, confusion_at, f1_score, roc_curve, select_threshold
from .ensemble import binary_entropy, consensus_heatmap, decompose_uncertainty, ensemble_mean
from .losses import FocalParams, finite_diff_gradient, focal_loss, zlpr_loss
from .report import compare_runs, evaluate, macro_average
from .split import SplitSpec, patient_level_split
from .store import (
    ClassCatalog,
    DatasetManifest,
    PredictionTensor,
    ValidationError,
    load_predictions,
    member_slice,
    parse_nih_manifest,
)
from .synth import SynthSpec, distortion_sweep, generate
