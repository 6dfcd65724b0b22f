"""Interferometric front end: pressure to phase, phase to balanced RF.

A heterodyne interferometer puts the optical phase on a carrier at f0. The
two counterphase interferometer outputs are

    I1(t) = A + B*cos(2*pi*f0*t + dphi(t))
    I2(t) = A - B*cos(2*pi*f0*t + dphi(t))

and the balanced detector output v = I1 - I2 cancels the common background A
structurally. The acoustically induced phase is

    dphi(t) = (2*pi/lambda) * (dn/dp) * g(t)

with g(t) the path-integrated pressure [Pa*m], so a uniform pressure p over a
path of length L gives the textbook (2*pi/lambda)*(dn/dp)*L*p.

Noise enters as a per-shot white Gaussian floor on the recovered phase, a
per-shot multiplicative amplitude factor on the RF trace, and an optional
deterministic carrier impairment (frequency offset plus a slow chirp) that
models loss of transmitter/receiver synchronization. All random draws are
counter-based: reproducible functions of (seed, stream, shot index) only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import hilbert

from .acoustics import STAGE_LINE_PRESSURE, STAGE_PHASE, Sinogram
from .errors import ValidationError

# Random-stream identifiers for the per-shot noise draws.
_STREAM_PHASE = 0
_STREAM_AMPLITUDE = 1


@dataclass(frozen=True)
class OpticalParams:
    """Interferometer constants.

    wavelength: probe laser wavelength [m].
    piezo_optic: dn/dp of the coupling medium [1/Pa].
    interaction_length: acousto-optic interaction path [m] (a 100 mm cuvette
        traversed twice gives the 0.2 m default); used by sensitivity
        arithmetic, not by the transduction itself (g carries the path).
    carrier_frequency: heterodyne carrier f0 [Hz].
    fringe_contrast: interference amplitude B (arbitrary electrical units).
    background: common-mode background A (cancelled by balanced detection).
    """

    wavelength: float = 632.8e-9
    piezo_optic: float = 1.35e-10
    interaction_length: float = 0.2
    carrier_frequency: float = 75e6
    fringe_contrast: float = 1.0
    background: float = 1.0

    def __post_init__(self):
        checks = [
            ("wavelength", self.wavelength, self.wavelength > 0),
            ("piezo_optic", self.piezo_optic, self.piezo_optic > 0),
            ("interaction_length", self.interaction_length, self.interaction_length > 0),
            ("carrier_frequency", self.carrier_frequency, self.carrier_frequency > 0),
            ("fringe_contrast", self.fringe_contrast, self.fringe_contrast > 0),
            ("background", self.background, self.background >= 0),
        ]
        for name, value, ok in checks:
            if not np.isfinite(value) or not ok:
                raise ValidationError(
                    f"optical parameter {name}={value!r} out of range", code="optics_params"
                )

    @property
    def phase_per_pressure_path(self) -> float:
        """Transduction constant (2*pi/lambda)*(dn/dp) [rad/(Pa*m)]."""
        return 2 * np.pi / self.wavelength * self.piezo_optic


@dataclass(frozen=True)
class NoiseModel:
    """Noise and impairment knobs for the simulated front end.

    phase_noise_std: white phase noise per shot on the demodulated series [rad].
    amplitude_noise_std: per-shot fractional jitter of the fringe contrast B.
    carrier_offset: carrier frequency error between synth and receiver [Hz].
    carrier_phase_drift: carrier phase chirp rate [rad/s^2]; the impairment
        phase is 2*pi*carrier_offset*t + carrier_phase_drift*t^2/2.
    rng_seed: 64-bit seed; all draws derive from (seed, stream, shot).
    """

    phase_noise_std: float = 0.55e-3
    amplitude_noise_std: float = 0.0
    carrier_offset: float = 0.0
    carrier_phase_drift: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.phase_noise_std) or self.phase_noise_std < 0:
            raise ValidationError("phase_noise_std must be >= 0", code="noise_model")
        if not np.isfinite(self.amplitude_noise_std) or self.amplitude_noise_std < 0:
            raise ValidationError("amplitude_noise_std must be >= 0", code="noise_model")
        if not np.isfinite(self.carrier_offset) or not np.isfinite(self.carrier_phase_drift):
            raise ValidationError("carrier impairment must be finite", code="noise_model")
        if not (0 <= int(self.rng_seed) < 2**64):
            raise ValidationError("rng_seed must fit in 64 bits", code="noise_model")

    @property
    def silent(self) -> bool:
        return (
            self.phase_noise_std == 0
            and self.amplitude_noise_std == 0
            and self.carrier_offset == 0
            and self.carrier_phase_drift == 0
        )


@dataclass(frozen=True)
class RfTrace:
    """Real-valued RF samples from the balanced detector."""

    sample_rate: float
    samples: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.sample_rate) or self.sample_rate <= 0:
            raise ValidationError("sample_rate must be positive", code="rf_trace")
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or not np.all(np.isfinite(samples)):
            raise ValidationError("samples must be a finite 1-D array", code="rf_trace")
        samples = samples.copy()
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def times(self) -> np.ndarray:
        """Trace-local time base; the receiver mixes against the same base."""
        return np.arange(self.samples.size) / self.sample_rate


def _shot_rng(seed: int, stream: int, shot_index: int) -> np.random.Generator:
    """Counter-based generator: a pure function of (seed, stream, shot)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(shot_index)))
    return np.random.Generator(np.random.Philox(ss))


def pressure_to_phase(g: np.ndarray | Sinogram, optics: OpticalParams):
    """Optical phase [rad] induced by path-integrated pressure [Pa*m].

    Accepts a plain time series or a line_pressure sinogram; sinograms come
    back as phase-stage sinograms with every row transduced.
    """
    if isinstance(g, Sinogram):
        if g.stage != STAGE_LINE_PRESSURE:
            raise ValidationError(
                f"expected a {STAGE_LINE_PRESSURE} sinogram, got {g.stage}", code="stage"
            )
        return Sinogram(
            data=g.data * optics.phase_per_pressure_path,
            geometry=g.geometry,
            stage=STAGE_PHASE,
            sound_speed=g.sound_speed,
            provenance=g.provenance + " | pressure_to_phase",
        )
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValidationError("pressure series must be finite", code="finite")
    return g * optics.phase_per_pressure_path


def synthesize_balanced(
    phase: np.ndarray,
    optics: OpticalParams,
    rf_rate: float,
    phase_rate: float = 60e6,
) -> RfTrace:
    """Balanced heterodyne trace v(t) = I1(t) - I2(t) at the RF rate.

    The phase series (sampled at phase_rate) is resampled to rf_rate by
    linear interpolation. The counterphase pair is formed explicitly so the
    background cancellation is structural, not algebraic.
    """
    if rf_rate < 4 * optics.carrier_frequency:
        raise ValidationError(
            f"rf_rate {rf_rate:g} undersamples the {optics.carrier_frequency:g} Hz carrier "
            "(need >= 4x)",
            code="undersampled",
        )
    if phase_rate <= 0:
        raise ValidationError("phase_rate must be positive", code="phase_rate")
    phase = np.asarray(phase, dtype=float)
    n_rf = int(round(phase.size * rf_rate / phase_rate))
    t = np.arange(n_rf) / rf_rate
    dphi = np.interp(t, np.arange(phase.size) / phase_rate, phase)
    carrier = np.cos(2 * np.pi * optics.carrier_frequency * t + dphi)
    i1 = optics.background + optics.fringe_contrast * carrier
    i2 = optics.background - optics.fringe_contrast * carrier
    return RfTrace(sample_rate=rf_rate, samples=i1 - i2)


def apply_noise(
    trace: RfTrace | np.ndarray,
    model: NoiseModel,
    shot_index: int,
):
    """Inject the modeled noise into one shot; deterministic in (seed, shot).

    RF traces receive the per-shot amplitude factor and the carrier
    impairment (applied to the analytic signal so the trace stays real).
    Phase series receive the white phase-noise floor, which models every
    in-band noise source as seen at the demodulator output.
    """
    if isinstance(trace, RfTrace):
        samples = np.asarray(trace.samples)
        if model.amplitude_noise_std > 0:
            rng = _shot_rng(model.rng_seed, _STREAM_AMPLITUDE, shot_index)
            factor = 1.0 + model.amplitude_noise_std * rng.standard_normal()
            samples = samples * factor
        if model.carrier_offset != 0 or model.carrier_phase_drift != 0:
            t = trace.times()
            drift_phase = (
                2 * np.pi * model.carrier_offset * t
                + 0.5 * model.carrier_phase_drift * t * t
            )
            analytic = hilbert(samples)
            samples = np.real(analytic * np.exp(1j * drift_phase))
        if samples is trace.samples:
            return trace
        return RfTrace(sample_rate=trace.sample_rate, samples=samples)

    series = np.asarray(trace, dtype=float)
    if model.phase_noise_std > 0:
        rng = _shot_rng(model.rng_seed, _STREAM_PHASE, shot_index)
        series = series + model.phase_noise_std * rng.standard_normal(series.size)
    return series
