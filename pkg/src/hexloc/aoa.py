"""Per-array azimuth estimation.

Two estimator families share the AoA result types: a delay-vector grid
matcher (the enhanced estimator and its coarse ablation baseline) and a
wideband incoherent MUSIC scan used as a comparison method.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import dsp, geometry, tdoa
from .dsp import MultichannelRecording
from .errors import AmbiguousEstimateError, NoSignalError
from .geometry import MicArray, PropagationModel
from .tdoa import DelayVector

DEFAULT_GRID_STEP_DEG = 1.0
MUSIC_FRAME = 1024
MUSIC_HOP = 512
MUSIC_NUM_BINS = 32
COVARIANCE_LOADING = 1e-9


class AoaMethod(str, enum.Enum):
    GCC_PLUS = "gcc+"
    GCC_PHAT = "gcc-phat"
    MUSIC = "music"


@dataclass(frozen=True)
class AoaSpectrum:
    """Score per azimuth over a uniform grid covering [0, 360) degrees."""

    angles_deg: np.ndarray
    scores: np.ndarray
    method: AoaMethod
    ambiguous: bool = False

    def __post_init__(self):
        angles = np.asarray(self.angles_deg, dtype=float)
        scores = np.asarray(self.scores, dtype=float)
        object.__setattr__(self, "angles_deg", angles)
        object.__setattr__(self, "scores", scores)
        if angles.shape != scores.shape or angles.ndim != 1 or angles.size < 2:
            raise ValueError("angles and scores must be matching 1D grids")
        steps = np.diff(angles)
        if not np.allclose(steps, steps[0]):
            raise ValueError("azimuth grid must be uniform")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")


@dataclass(frozen=True)
class AoaEstimate:
    """Refined azimuth in global-frame radians, [0, 2pi)."""

    azimuth: float
    confidence: float
    method: AoaMethod
    array_id: str

    def __post_init__(self):
        object.__setattr__(self, "azimuth", float(self.azimuth) % (2.0 * math.pi))
        if self.confidence < 0:
            raise ValueError("confidence must be >= 0")

    @property
    def azimuth_deg(self) -> float:
        return math.degrees(self.azimuth)


@dataclass(frozen=True)
class CovarianceStack:
    """Per-bin spatial covariance matrices from STFT snapshots."""

    matrices: np.ndarray      # (num_bins, channels, channels), Hermitian PSD
    frequencies: np.ndarray   # Hz
    snapshot_count: int

    def __post_init__(self):
        m = np.asarray(self.matrices, dtype=complex)
        object.__setattr__(self, "matrices", m)
        object.__setattr__(self, "frequencies", np.asarray(self.frequencies, dtype=float))
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise ValueError("matrices must have shape (bins, n, n)")
        if m.shape[0] != self.frequencies.size:
            raise ValueError("one frequency per covariance matrix required")


def circular_error_deg(a_deg: float, b_deg: float) -> float:
    """Smallest absolute angular difference in degrees."""
    d = abs(a_deg - b_deg) % 360.0
    return min(d, 360.0 - d)


def _spectrum_peak(angles_deg: np.ndarray, scores: np.ndarray,
                   refine: bool) -> tuple[float, float, bool]:
    """(azimuth_deg, confidence, ambiguous) from a circular score grid."""
    peak = int(np.argmax(scores))
    spread = float(scores.max() - scores.min())
    if spread <= 1e-12 * max(1.0, abs(float(scores.max()))):
        return float(angles_deg[peak]), 0.0, True
    step = float(angles_deg[1] - angles_deg[0])
    offset = 0.0
    if refine:
        offset, _, ok = tdoa.quadratic_peak_offset(scores, peak, circular=True)
        if not ok:
            offset = 0.0
    azimuth = (float(angles_deg[peak]) + offset * step) % 360.0
    prominence = float((scores.max() - np.median(scores)) / spread)
    return azimuth, prominence, False


def _azimuth_grid(grid_step_deg: float) -> np.ndarray:
    if not 0.0 < grid_step_deg <= 5.0:
        raise ValueError(f"grid_step_deg must be in (0, 5], got {grid_step_deg}")
    return np.arange(0.0, 360.0, grid_step_deg)


def estimate_aoa_gcc(delays: DelayVector, array: MicArray,
                     model: PropagationModel,
                     grid_step_deg: float = DEFAULT_GRID_STEP_DEG,
                     weighted: bool = True, refine: bool = True,
                     method: AoaMethod = AoaMethod.GCC_PLUS
                     ) -> tuple[AoaSpectrum, AoaEstimate]:
    """Match an observed delay vector against predicted delays on an
    azimuth grid.

    score(theta) = -sum_e w_e (observed_e - predicted_e(theta))^2, with
    weights from correlation peak scores (normalized) or uniform. The
    discrete argmax is refined by the same quadratic vertex rule the delay
    estimator uses, applied circularly over the grid. Predictions use
    global-frame element positions, so the returned azimuth is global.
    """
    if not delays.entries:
        raise ValueError("delay vector is empty")
    angles_deg = _azimuth_grid(grid_step_deg)
    grid_rad = np.deg2rad(angles_deg)

    pairs = sorted({e.pair for e in delays.entries})
    predicted = np.stack([geometry.predicted_pair_delay(array, p, grid_rad, model)
                          for p in pairs])          # (P, n_angles)
    row = {p: k for k, p in enumerate(pairs)}
    obs = np.array([e.delay for e in delays.entries])
    rows = np.array([row[e.pair] for e in delays.entries])

    if weighted:
        w = np.array([max(e.peak_score, 0.0) for e in delays.entries])
        w = w / w.sum() if w.sum() > 0 else np.full(obs.size, 1.0 / obs.size)
    else:
        w = np.full(obs.size, 1.0 / obs.size)

    diff = predicted[rows] - obs[:, None]
    scores = -(w[:, None] * diff * diff).sum(axis=0)

    azimuth_deg, confidence, ambiguous = _spectrum_peak(angles_deg, scores, refine)
    spectrum = AoaSpectrum(angles_deg=angles_deg, scores=scores,
                           method=method, ambiguous=ambiguous)
    if all(e.low_confidence for e in delays.entries):
        raise AmbiguousEstimateError(
            "every pairwise delay was flagged low-confidence", spectrum=spectrum)
    estimate = AoaEstimate(azimuth=math.radians(azimuth_deg),
                           confidence=confidence, method=method,
                           array_id=delays.source_array)
    return spectrum, estimate


def baseline_aoa_gcc_phat(rec: MultichannelRecording, array: MicArray,
                          model: PropagationModel,
                          grid_step_deg: float = DEFAULT_GRID_STEP_DEG,
                          band_hz: tuple[float, float] | None = dsp.DEFAULT_BAND_HZ
                          ) -> tuple[AoaSpectrum, AoaEstimate]:
    """Ablation baseline: integer-grid delays, one window, uniform weights,
    no quadratic refinement anywhere."""
    delays = tdoa.expand_delay_features(rec, array, num_windows=1,
                                        upsample_factor=1, model=model,
                                        refine=False, band_hz=band_hz)
    return estimate_aoa_gcc(delays, array, model, grid_step_deg,
                            weighted=False, refine=False,
                            method=AoaMethod.GCC_PHAT)


def covariance_stack(rec: MultichannelRecording,
                     band_hz: tuple[float, float] = dsp.DEFAULT_BAND_HZ,
                     num_bins: int = MUSIC_NUM_BINS,
                     frame: int = MUSIC_FRAME,
                     hop: int = MUSIC_HOP) -> CovarianceStack:
    """Spatial covariance matrices on frequency bins sampled uniformly
    inside the band, from 50%-overlap Hann STFT snapshots."""
    if num_bins < 1:
        raise ValueError(f"num_bins must be >= 1, got {num_bins}")
    low, high = band_hz
    nyq = rec.sample_rate / 2.0
    if not (0.0 <= low < high <= nyq):
        raise ValueError(f"band [{low}, {high}] outside (0, {nyq}]")
    if rec.num_samples < frame:
        raise ValueError(f"recording shorter than one {frame}-sample frame")

    num_frames = 1 + (rec.num_samples - frame) // hop
    window = np.hanning(frame)
    freqs = np.fft.rfftfreq(frame, d=1.0 / rec.sample_rate)
    in_band = np.flatnonzero((freqs >= low) & (freqs <= high))
    if in_band.size == 0:
        raise ValueError("band contains no FFT bins at this frame length")
    take = np.unique(np.round(
        np.linspace(0, in_band.size - 1, min(num_bins, in_band.size))).astype(int))
    selected = in_band[take]

    snapshots = np.empty((rec.num_channels, num_frames, selected.size), dtype=complex)
    for t in range(num_frames):
        seg = rec.samples[:, t * hop: t * hop + frame] * window
        snapshots[:, t, :] = np.fft.rfft(seg, axis=1)[:, selected]

    mats = np.empty((selected.size, rec.num_channels, rec.num_channels),
                    dtype=complex)
    for k in range(selected.size):
        x = snapshots[:, :, k]
        mats[k] = x @ x.conj().T / num_frames
    return CovarianceStack(matrices=mats, frequencies=freqs[selected],
                           snapshot_count=num_frames)


def estimate_aoa_music(rec: MultichannelRecording, array: MicArray,
                       model: PropagationModel,
                       band_hz: tuple[float, float] = dsp.DEFAULT_BAND_HZ,
                       num_bins: int = MUSIC_NUM_BINS,
                       grid_step_deg: float = DEFAULT_GRID_STEP_DEG
                       ) -> tuple[AoaSpectrum, AoaEstimate]:
    """Wideband incoherent MUSIC scan assuming a single source.

    Per frequency bin: eigendecompose the spatial covariance, take the five
    smallest eigenvectors as the noise subspace E_n, and score
    1 / (a^H E_n E_n^H a) with the steering vector
    a_m(f, theta) = exp(-j 2 pi f tau_m(theta)); the bin spectra are then
    averaged non-coherently across bins.
    """
    if rec.num_channels != array.num_elements:
        raise ValueError(
            f"recording has {rec.num_channels} channels, "
            f"array has {array.num_elements} elements")
    if not np.any(rec.samples):
        raise NoSignalError("recording is all zeros")

    stack = covariance_stack(rec, band_hz, num_bins)
    if stack.snapshot_count < rec.num_channels:
        warnings.warn(
            f"only {stack.snapshot_count} snapshots for "
            f"{rec.num_channels} channels: covariance is rank-deficient",
            RuntimeWarning)
    if float(np.trace(stack.matrices.sum(axis=0)).real) <= 0.0:
        raise NoSignalError("degenerate covariance: no in-band energy")

    angles_deg = _azimuth_grid(grid_step_deg)
    grid_rad = np.deg2rad(angles_deg)
    taus = geometry.element_delays(array, grid_rad, model)  # (6, n_angles)

    n = rec.num_channels
    accum = np.zeros(angles_deg.size)
    for k in range(stack.matrices.shape[0]):
        r = stack.matrices[k]
        loaded = r + (COVARIANCE_LOADING * np.trace(r).real / n) * np.eye(n)
        _, vecs = np.linalg.eigh(loaded)
        noise = vecs[:, : n - 1]  # single-source assumption
        a = np.exp(-2j * np.pi * stack.frequencies[k] * taus)
        proj = noise.conj().T @ a
        denom = np.maximum(np.sum(np.abs(proj) ** 2, axis=0), 1e-18 * n)
        accum += 1.0 / denom
    scores = accum / stack.matrices.shape[0]

    azimuth_deg, confidence, ambiguous = _spectrum_peak(angles_deg, scores,
                                                        refine=True)
    # a peak that fails to double the median floor is not a detection
    if float(scores.max()) < 2.0 * float(np.median(scores)):
        ambiguous, confidence = True, 0.0
    spectrum = AoaSpectrum(angles_deg=angles_deg, scores=scores,
                           method=AoaMethod.MUSIC, ambiguous=ambiguous)
    estimate = AoaEstimate(azimuth=math.radians(azimuth_deg),
                           confidence=confidence, method=AoaMethod.MUSIC,
                           array_id=array.id)
    return spectrum, estimate
