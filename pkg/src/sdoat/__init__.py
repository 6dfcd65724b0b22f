"""Desk-scale simulator and signal toolkit for software-defined optoacoustic tomography.

The package covers the full chain: phantom rasterization, acoustic forward
model for a rotating integrating line detector, interferometric transduction
onto an RF carrier, software-defined IQ demodulation, filtered back-projection,
and characterization metrics (sensitivity, NEP, resolution).
"""

__version__ = "0.1.0"

from .acoustics import (
    ScanGeometry,
    Sinogram,
    TimeWindow,
    WaterState,
    circular_means,
    covering_window,
    forward_line_signal,
    forward_sinogram,
    sound_speed,
    uniform_angles,
)
from .config import ScenarioConfig, build_config, load_config, with_seed
from .errors import ComputeError, GateError, NoCarrierError, SdoatError, ValidationError
from .metrics import (
    CutLine,
    MetricsReport,
    coherence_summary,
    extract_profile,
    fwhm,
    image_resolution_study,
    nep_and_density,
    noise_floor,
    resolution_bound,
    sensitivity_first_principles,
)
from .optics import (
    NoiseModel,
    OpticalParams,
    RfTrace,
    apply_noise,
    pressure_to_phase,
    synthesize_balanced,
)
from .phantom import Grid2D, PressureField, ShapeSpec, field_statistics, import_bitmap, rasterize
from .pipeline import StageResult, cmd_metrics, cmd_pipeline, cmd_reconstruct, cmd_simulate
from .reconstruction import ReconConfig, ReconImage, backproject, denoise, reconstruct_pipeline
from .receiver import IqTrace, ReceiverConfig, demodulate_scan, downconvert, extract_phase

__all__ = [
    "__version__",
    "CutLine",
    "ComputeError",
    "GateError",
    "Grid2D",
    "IqTrace",
    "MetricsReport",
    "NoCarrierError",
    "NoiseModel",
    "OpticalParams",
    "PressureField",
    "ReconConfig",
    "ReconImage",
    "ReceiverConfig",
    "RfTrace",
    "SdoatError",
    "ScanGeometry",
    "ScenarioConfig",
    "ShapeSpec",
    "Sinogram",
    "StageResult",
    "TimeWindow",
    "ValidationError",
    "WaterState",
    "apply_noise",
    "backproject",
    "build_config",
    "circular_means",
    "cmd_metrics",
    "cmd_pipeline",
    "cmd_reconstruct",
    "cmd_simulate",
    "coherence_summary",
    "covering_window",
    "demodulate_scan",
    "denoise",
    "downconvert",
    "extract_phase",
    "extract_profile",
    "field_statistics",
    "forward_line_signal",
    "forward_sinogram",
    "fwhm",
    "image_resolution_study",
    "import_bitmap",
    "load_config",
    "nep_and_density",
    "noise_floor",
    "pressure_to_phase",
    "rasterize",
    "reconstruct_pipeline",
    "resolution_bound",
    "sensitivity_first_principles",
    "sound_speed",
    "synthesize_balanced",
    "uniform_angles",
    "with_seed",
]
