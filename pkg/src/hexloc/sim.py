"""Ground-truthed far-field scene synthesis.

Propagation is plane-wave: each channel receives the source signal through
an exact frequency-domain fractional delay, so the true pairwise delays are
known to machine precision. Multipath is modeled as discrete attenuated
plane waves arriving from offset azimuths. Channels within an array share a
clock; arrays do not, which is encoded by a random per-array start offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import dsp, geometry
from .dsp import MultichannelRecording, RealSignal
from .geometry import MicArray, PropagationModel

SIGNAL_KINDS = ("speech", "chirp", "tone", "file")
MAX_START_OFFSET_S = 0.05
MAX_ECHO_DELAY_S = 0.1
TAPER_S = 0.02
RANGE_LIMITS_M = (0.47, 5.2)
DEFAULT_DURATION_S = 1.06
SYLLABIC_RATE_HZ = 4.0


class Echo(NamedTuple):
    delay_s: float
    gain: float
    azimuth_offset_deg: float


@dataclass(frozen=True)
class Scene:
    """One source, one signal, any number of arrays."""

    arrays: tuple[MicArray, ...]
    source: np.ndarray
    signal_kind: str = "speech"
    duration: float = DEFAULT_DURATION_S
    snr_db: float = math.inf
    echoes: tuple[Echo, ...] = ()
    seed: int = 0
    model: PropagationModel = field(default_factory=PropagationModel)
    tone_hz: float = 1000.0
    source_samples: np.ndarray | None = None  # used when signal_kind == "file"

    def __post_init__(self):
        object.__setattr__(self, "arrays", tuple(self.arrays))
        object.__setattr__(self, "source", np.asarray(self.source, dtype=float))
        object.__setattr__(self, "echoes",
                           tuple(Echo(*e) for e in self.echoes))
        if not self.arrays:
            raise ValueError("scene needs at least one array")
        if self.source.shape != (2,):
            raise ValueError("source must be a 2D point")
        if not self.duration > 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        if self.signal_kind not in SIGNAL_KINDS:
            raise ValueError(f"unknown signal_kind {self.signal_kind!r}")
        for arr in self.arrays:
            if np.allclose(self.source, arr.center):
                raise ValueError(f"source coincides with array {arr.id!r}")
        for echo in self.echoes:
            if not 0.0 <= echo.gain < 1.0:
                raise ValueError(f"echo gain must be in [0, 1), got {echo.gain}")
            if not 0.0 <= echo.delay_s <= MAX_ECHO_DELAY_S:
                raise ValueError(
                    f"echo delay must be in [0, {MAX_ECHO_DELAY_S}] s, "
                    f"got {echo.delay_s}")


@dataclass(frozen=True)
class GroundTruth:
    """Reference values recomputable from the scene geometry."""

    source: np.ndarray
    azimuth_deg: dict[str, float]                       # per array, global frame
    pair_delays: dict[str, dict[tuple[int, int], float]]  # per array, seconds


def _source_signal(scene: Scene, rng: np.random.Generator,
                   length: int) -> np.ndarray:
    fs = scene.model.sample_rate
    t = np.arange(length) / fs
    kind = scene.signal_kind
    if kind == "speech":
        # band-limited noise with a syllabic amplitude envelope
        noise = rng.standard_normal(length)
        shaped = dsp.bandpass(RealSignal(noise, fs), *dsp.DEFAULT_BAND_HZ).samples
        phase = rng.uniform(0.0, 2.0 * math.pi)
        envelope = 0.6 + 0.4 * np.sin(2.0 * math.pi * SYLLABIC_RATE_HZ * t + phase)
        return shaped * envelope
    if kind == "chirp":
        f0, f1 = dsp.DEFAULT_BAND_HZ
        duration = length / fs
        return np.sin(2.0 * math.pi * (f0 * t + (f1 - f0) / (2 * duration) * t * t))
    if kind == "tone":
        if scene.tone_hz >= fs / 2.0:
            raise ValueError(
                f"tone at {scene.tone_hz} Hz violates Nyquist ({fs / 2} Hz)")
        return np.sin(2.0 * math.pi * scene.tone_hz * t)
    if kind == "file":
        if scene.source_samples is None:
            raise ValueError("signal_kind 'file' requires source_samples")
        src = np.asarray(scene.source_samples, dtype=float)
        if src.size >= length:
            return src[:length]
        return np.pad(src, (0, length - src.size))
    raise ValueError(f"unknown signal_kind {kind!r}")


def synthesize(scene: Scene) -> tuple[list[MultichannelRecording], GroundTruth]:
    """Render one multichannel recording per array plus the ground truth.

    The source waveform is shorter than the recording by a fixed margin
    covering the clock offset and echo budget, and carries raised-cosine
    onset/offset ramps. Every channel therefore contains the complete
    delayed waveform, so the inter-channel delay relation is exact rather
    than perturbed by window truncation. Deterministic for a fixed scene
    seed; echoes with zero gain leave the output bit-identical to an
    echo-free scene.
    """
    model = scene.model
    fs = model.sample_rate
    length = int(round(scene.duration * fs))
    # base delay keeps every per-element shift nonnegative (an element may
    # lead the array center by up to the circumradius)
    base_s = max(2.0 * a.side_length for a in scene.arrays) / model.speed_of_sound
    margin = int(math.ceil(
        (MAX_START_OFFSET_S + MAX_ECHO_DELAY_S + base_s) * fs)) + 64
    src_length = length - margin
    if src_length < 1024:
        raise ValueError(
            f"duration {scene.duration} s too short: need at least "
            f"{(margin + 1024) / fs:.2f} s at {fs} Hz")

    rng = np.random.default_rng(scene.seed)
    source = _source_signal(scene, rng, src_length)
    ramp = min(int(round(TAPER_S * fs)), src_length // 4)
    if ramp > 0:
        taper = 0.5 * (1.0 - np.cos(np.pi * np.arange(ramp) / ramp))
        source = source.copy()
        source[:ramp] *= taper
        source[-ramp:] *= taper[::-1]

    nfft = dsp.next_pow2(length)
    spectrum = np.fft.rfft(source, nfft)
    freqs = np.fft.rfftfreq(nfft, d=1.0 / fs)

    recordings = []
    azimuths: dict[str, float] = {}
    delays: dict[str, dict[tuple[int, int], float]] = {}
    for array in scene.arrays:
        azimuth = geometry.azimuth_to(array, scene.source)
        azimuths[array.id] = math.degrees(azimuth)
        delays[array.id] = {
            pair: float(geometry.predicted_pair_delay(array, pair, azimuth, model))
            for pair in geometry.mic_pairs(array.num_elements)}

        offset = base_s + rng.uniform(0.0, MAX_START_OFFSET_S)
        taus = geometry.element_delays(array, azimuth, model)  # (6,)
        # response per channel: direct path plus each echo as a plane wave
        # from an offset azimuth; tau is re-derived per echo direction
        shift = taus + offset
        response = np.exp(-2j * np.pi * np.outer(shift, freqs))
        for echo in scene.echoes:
            echo_az = azimuth + math.radians(echo.azimuth_offset_deg)
            echo_taus = geometry.element_delays(array, echo_az, model)
            echo_shift = echo_taus + offset + echo.delay_s
            response += echo.gain * np.exp(-2j * np.pi * np.outer(echo_shift, freqs))
        channels = np.fft.irfft(spectrum[None, :] * response, nfft,
                                axis=1)[:, :length]

        if np.isfinite(scene.snr_db):
            signal_power = float(np.mean(channels ** 2))
            noise_sigma = math.sqrt(signal_power * 10.0 ** (-scene.snr_db / 10.0))
            channels = channels + rng.normal(0.0, noise_sigma, channels.shape)
        recordings.append(MultichannelRecording(channels, fs))

    truth = GroundTruth(source=scene.source.copy(), azimuth_deg=azimuths,
                        pair_delays=delays)
    return recordings, truth


def sample_scenarios(n: int, bounds: tuple[float, float, float, float],
                     seed: int = 0, arrays: tuple[MicArray, ...] | None = None,
                     duration: float = DEFAULT_DURATION_S,
                     snr_db: float = 20.0, echoes: tuple[Echo, ...] = (),
                     signal_kind: str = "speech",
                     model: PropagationModel | None = None) -> list[Scene]:
    """Draw ``n`` scenes with sources uniform in a rectangle, keeping only
    positions whose nearest array lies within the 0.47-5.2 m range window."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if model is None:
        model = PropagationModel()
    if arrays is None:
        arrays = default_array_layout()
    x0, y0, x1, y1 = bounds
    if x1 < x0 or y1 < y0:
        raise ValueError(f"bounds rectangle is inverted: {bounds}")

    rng = np.random.default_rng(seed)
    centers = np.stack([a.center for a in arrays])
    lo, hi = RANGE_LIMITS_M
    scenes = []
    attempts = 0
    max_attempts = 10000 * n
    while len(scenes) < n:
        attempts += 1
        if attempts > max_attempts:
            raise ValueError(
                "no feasible source positions in bounds for the given arrays")
        point = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
        dists = np.linalg.norm(centers - point, axis=1)
        if dists.min() < lo or dists.min() > hi:
            continue
        scenes.append(Scene(arrays=arrays, source=point,
                            signal_kind=signal_kind, duration=duration,
                            snr_db=snr_db, echoes=echoes,
                            seed=int(rng.integers(0, 2 ** 31)), model=model))
    return scenes


def default_array_layout(model: PropagationModel | None = None) -> tuple[MicArray, ...]:
    """Three anchors roughly at the edges of a 6 x 5 m room."""
    return (
        geometry.build_hex_array((0.0, 0.0), orientation=0.0, array_id="A1"),
        geometry.build_hex_array((6.0, 0.0), orientation=2.0, array_id="A2"),
        geometry.build_hex_array((3.0, 5.0), orientation=-1.0, array_id="A3"),
    )
