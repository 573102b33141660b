"""Single-pixel coherent diffraction imaging: simulation and reconstruction."""

from .analysis import (
    BackgroundPhase,
    DepthMap,
    align_ambiguities,
    amplitude_psnr,
    calibrate_background,
    correct_field,
    correct_phase,
    depth_to_phase,
    orient_background,
    phase_rms,
    phase_to_depth,
    psnr,
    unwrap_phase,
)
from .errors import DivergedError, FormatError, InvalidArgument, SamplingWarning
from .field import ComplexField, OpticalGeometry, Spectrum, dft2, fresnel_number, fresnel_propagate, idft2
from .forward import DetectorModel, MeasurementSet, PropagationModel, dynamic_range, measure_dc, synthesize
from .patterns import PatternSet, gen_binary_patterns, gen_gray_patterns, gen_patterns
from .retrieval import ReconConfig, ReconDiagnostics, reconstruct, run_epoch

__all__ = [
    "BackgroundPhase",
    "DepthMap",
    "align_ambiguities",
    "amplitude_psnr",
    "calibrate_background",
    "correct_field",
    "correct_phase",
    "depth_to_phase",
    "orient_background",
    "phase_rms",
    "phase_to_depth",
    "psnr",
    "unwrap_phase",
    "DivergedError",
    "FormatError",
    "InvalidArgument",
    "SamplingWarning",
    "ComplexField",
    "OpticalGeometry",
    "Spectrum",
    "dft2",
    "fresnel_number",
    "fresnel_propagate",
    "idft2",
    "DetectorModel",
    "MeasurementSet",
    "PropagationModel",
    "dynamic_range",
    "measure_dc",
    "synthesize",
    "PatternSet",
    "gen_binary_patterns",
    "gen_gray_patterns",
    "gen_patterns",
    "ReconConfig",
    "ReconDiagnostics",
    "reconstruct",
    "run_epoch",
]

__version__ = "0.1.0"
