"""Continuous-domain correlation filter tracking with semantic masking,
plus an OTB-style one-pass evaluation harness."""

__version__ = "0.1.0"

from .features import (FeatureBlock, FeatureProviderConfig, FeatureStack,
                       ImagePatch, extract_patch, fuse, hog_features,
                       load_precomputed, read_fmap, write_fmap)
from .semantic import (LabelMap, SemanticMask, WeightGrid, apply_weighting,
                       cosine_window, label_map, semantic_mask)
from .spectral import (InterpKernel, LabelSpectrum, PenaltySpectrum,
                       SampleMemory, cg_solve, gaussian_label, interp_kernel,
                       learn, normal_operator, penalty_spectrum,
                       project_sample, update_filter, update_samples)
from .tracker import (ScoreGrid, TrackerConfig, TrackState, confidence_map,
                      estimate_scale, init, localize, step)

__all__ = [
    "FeatureBlock", "FeatureProviderConfig", "FeatureStack", "ImagePatch",
    "extract_patch", "fuse", "hog_features", "load_precomputed", "read_fmap",
    "write_fmap", "LabelMap", "SemanticMask", "WeightGrid", "apply_weighting",
    "cosine_window", "label_map", "semantic_mask", "InterpKernel",
    "LabelSpectrum", "PenaltySpectrum", "SampleMemory", "cg_solve",
    "gaussian_label", "interp_kernel", "learn", "normal_operator",
    "penalty_spectrum", "project_sample", "update_filter", "update_samples",
    "ScoreGrid", "TrackerConfig", "TrackState", "confidence_map",
    "estimate_scale", "init", "localize", "step", "__version__",
]
