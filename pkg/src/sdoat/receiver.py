"""Software-defined receiver: coherent IQ demodulation and phase extraction.

The RF trace is mixed with cos(2*pi*f_LO*t) and -sin(2*pi*f_LO*t) on the
same trace-local time base the synthesizer used (that shared clock is the
carrier synchronization the system relies on), low-pass filtered with a
zero-phase FIR, and decimated to the output rate. The instantaneous phase is
the four-quadrant arctangent of (Q, I), unwrapped; samples with negligible
carrier magnitude are flagged and bridged by linear interpolation.

The demodulation filter pairs the windowed-sinc low-pass with a two-tap
comb that places an exact null at half the output Nyquist image; mixing a
carrier at rf_rate/8 leaves its double-frequency image exactly there, so the
null removes it without relying on stopband attenuation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acoustics import STAGE_PHASE, ScanGeometry, Sinogram
from .errors import NoCarrierError, ValidationError
from .filters import apply_zero_phase, design_image_reject_lowpass
from .optics import NoiseModel, RfTrace, apply_noise

# Carrier-magnitude floor, relative to the trace maximum, below which the
# phase sample is considered degenerate and interpolated.
MAGNITUDE_FLOOR = 1e-6


@dataclass(frozen=True)
class IqTrace:
    """Baseband quadrature pair at the receiver output rate."""

    sample_rate: float
    i_samples: np.ndarray
    q_samples: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.sample_rate) or self.sample_rate <= 0:
            raise ValidationError("sample_rate must be positive", code="iq_trace")
        i_s = np.asarray(self.i_samples, dtype=float)
        q_s = np.asarray(self.q_samples, dtype=float)
        if i_s.shape != q_s.shape or i_s.ndim != 1:
            raise ValidationError("i/q sample arrays must be equal-length 1-D", code="iq_trace")
        if not (np.all(np.isfinite(i_s)) and np.all(np.isfinite(q_s))):
            raise ValidationError("iq samples must be finite", code="iq_trace")
        for name, arr in (("i_samples", i_s), ("q_samples", q_s)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.i_samples, self.q_samples)


@dataclass(frozen=True)
class ReceiverConfig:
    """Down-conversion settings.

    local_oscillator_frequency: LO [Hz], equal to the synthesizer carrier
        when the link is coherent.
    output_rate: decimated IQ rate [Hz].
    lowpass_cutoff: demodulation low-pass cutoff [Hz]; sits above the signal
        band so the deliberate band-limiting step stays with reconstruction.
    filter_taps: FIR length, odd so the zero-phase alignment is exact.
    """

    local_oscillator_frequency: float = 75e6
    output_rate: float = 60e6
    lowpass_cutoff: float = 3e6
    filter_taps: int = 255

    def __post_init__(self):
        if not np.isfinite(self.local_oscillator_frequency) or self.local_oscillator_frequency <= 0:
            raise ValidationError("local_oscillator_frequency must be positive", code="receiver_config")
        if not np.isfinite(self.output_rate) or self.output_rate <= 0:
            raise ValidationError("output_rate must be positive", code="receiver_config")
        if not np.isfinite(self.lowpass_cutoff) or self.lowpass_cutoff <= 0:
            raise ValidationError("lowpass_cutoff must be positive", code="receiver_config")
        if self.lowpass_cutoff >= self.output_rate / 2:
            raise ValidationError(
                f"lowpass_cutoff {self.lowpass_cutoff:g} must stay below the output "
                f"Nyquist {self.output_rate / 2:g}",
                code="receiver_config",
            )
        if self.filter_taps < 5 or self.filter_taps % 2 == 0:
            raise ValidationError("filter_taps must be an odd integer >= 5", code="receiver_config")


def downconvert(rf: RfTrace, cfg: ReceiverConfig) -> IqTrace:
    """Mix to baseband, low-pass, and decimate; IQ = B*exp(j*dphi)."""
    if rf.sample_rate < cfg.output_rate:
        raise ValidationError("rf rate below output rate", code="decimation")
    ratio = rf.sample_rate / cfg.output_rate
    m = int(round(ratio))
    if abs(ratio - m) > 1e-9:
        raise ValidationError(
            f"rf rate {rf.sample_rate:g} is not an integer multiple of "
            f"output rate {cfg.output_rate:g}",
            code="decimation",
        )
    t = rf.times()
    lo = 2 * np.pi * cfg.local_oscillator_frequency * t
    # 2*B*cos(w0 t + phi) * cos(w0 t) -> B*cos(phi) + image at 2*w0
    # 2*B*cos(w0 t + phi) * -sin(w0 t) -> B*sin(phi) + image at 2*w0
    mixed_i = rf.samples * np.cos(lo)
    mixed_q = rf.samples * -np.sin(lo)
    taps = design_image_reject_lowpass(cfg.filter_taps, cfg.lowpass_cutoff, rf.sample_rate)
    i_base = apply_zero_phase(mixed_i, taps)[::m]
    q_base = apply_zero_phase(mixed_q, taps)[::m]
    return IqTrace(sample_rate=cfg.output_rate, i_samples=i_base, q_samples=q_base)


def extract_phase(iq: IqTrace) -> np.ndarray:
    """Unwrapped instantaneous phase [rad] from a quadrature pair.

    Degenerate samples (carrier magnitude below MAGNITUDE_FLOOR of the trace
    maximum) are bridged by linear interpolation over the good samples; an
    entirely degenerate trace has no recoverable phase.
    """
    magnitude = iq.magnitude()
    peak = magnitude.max() if magnitude.size else 0.0
    if peak == 0.0:
        raise NoCarrierError("no carrier: all IQ samples are zero")
    good = magnitude >= MAGNITUDE_FLOOR * peak
    raw = np.arctan2(iq.q_samples[good], iq.i_samples[good])
    unwrapped = np.unwrap(raw)
    if np.all(good):
        return unwrapped
    index = np.arange(magnitude.size)
    return np.interp(index, index[good], unwrapped)


def average_shots(shots: list[np.ndarray]) -> np.ndarray:
    """Pointwise mean across repeated shots of one angle."""
    if not shots:
        raise ValidationError("average_shots needs at least one shot", code="shots")
    first = np.asarray(shots[0], dtype=float)
    stack = np.empty((len(shots), first.size))
    for k, shot in enumerate(shots):
        arr = np.asarray(shot, dtype=float)
        if arr.shape != first.shape:
            raise ValidationError(
                f"shot {k} has length {arr.size}, expected {first.size}", code="shots"
            )
        stack[k] = arr
    return stack.mean(axis=0)


def demodulate_scan(
    rf_per_angle_and_shot: list[list[RfTrace]],
    cfg: ReceiverConfig,
    geometry: ScanGeometry,
    sound_speed: float,
    noise: NoiseModel | None = None,
    trim_samples: int = 0,
    shot_index_base: int = 0,
    provenance: str = "demodulate_scan",
) -> Sinogram:
    """Per angle: downconvert each shot, extract phase, average -> phase sinogram.

    When a noise model is given, its phase-noise floor is injected into each
    shot's demodulated series before averaging (shot_index counts through
    the scan in angle-major order, so every draw is reproducible).
    shot_index_base offsets that count, which lets a separate capture on the
    same seed use noise streams disjoint from the imaging scan.

    trim_samples drops that many output-rate samples from each end of every
    demodulated series before the length check. RF synthesized with guard
    padding carries the lowpass edge transients in those samples; trimming
    them leaves exactly the geometry window.
    """
    if not isinstance(trim_samples, int) or trim_samples < 0:
        raise ValidationError(f"trim_samples must be a non-negative int, got {trim_samples!r}")
    if not isinstance(shot_index_base, int) or shot_index_base < 0:
        raise ValidationError(
            f"shot_index_base must be a non-negative int, got {shot_index_base!r}"
        )
    n_angles = geometry.n_angles
    if len(rf_per_angle_and_shot) != n_angles:
        raise ValidationError(
            f"got RF for {len(rf_per_angle_and_shot)} angles, geometry has {n_angles}",
            code="scan_shape",
        )
    data = np.empty((n_angles, geometry.n_samples))
    shots_per_angle = None
    for a, shots in enumerate(rf_per_angle_and_shot):
        if not shots:
            raise ValidationError(f"angle {a} has no shots", code="scan_shape")
        if shots_per_angle is None:
            shots_per_angle = len(shots)
        elif len(shots) != shots_per_angle:
            raise ValidationError("all angles need the same shot count", code="scan_shape")
        series = []
        for s, rf in enumerate(shots):
            phase = extract_phase(downconvert(rf, cfg))
            if trim_samples:
                if phase.size <= 2 * trim_samples:
                    raise ValidationError(
                        f"angle {a}: {phase.size} demodulated samples cannot absorb "
                        f"trim_samples={trim_samples} on both ends",
                        code="scan_shape",
                    )
                phase = phase[trim_samples:-trim_samples].copy()
            if noise is not None:
                phase = apply_noise(phase, noise, shot_index_base + a * shots_per_angle + s)
            series.append(phase)
        averaged = average_shots(series)
        if averaged.size != geometry.n_samples:
            raise ValidationError(
                f"angle {a}: demodulated length {averaged.size} does not match the "
                f"geometry window ({geometry.n_samples} samples)",
                code="scan_shape",
            )
        data[a] = averaged
    return Sinogram(
        data=data,
        geometry=geometry,
        stage=STAGE_PHASE,
        sound_speed=sound_speed,
        provenance=provenance,
    )
