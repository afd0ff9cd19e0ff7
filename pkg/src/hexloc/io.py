"""File I/O: multichannel WAV, scene/array JSON configs, manifests."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from . import geometry, sim
from .dsp import MultichannelRecording
from .errors import SceneConfigError
from .geometry import MicArray, PropagationModel
from .sim import Echo, GroundTruth, Scene

GROUND_TRUTH_NAME = "ground_truth.json"
MANIFEST_NAME = "manifest.json"

_PCM_SCALE = {
    np.dtype(np.int16): 32768.0,
    np.dtype(np.int32): 2147483648.0,
}


def write_wav(path, rec: MultichannelRecording) -> None:
    """Write a recording as 32-bit float WAV, channels ordered by element."""
    wavfile.write(str(path), int(rec.sample_rate),
                  np.ascontiguousarray(rec.samples.T, dtype=np.float32))


def read_wav(path) -> MultichannelRecording:
    """Read a WAV file; integer PCM is normalized to [-1, 1]."""
    rate, data = wavfile.read(str(path))
    if data.ndim == 1:
        data = data[:, None]
    if data.dtype in _PCM_SCALE:
        data = data.astype(np.float64) / _PCM_SCALE[data.dtype]
    elif data.dtype == np.uint8:
        data = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in (np.float32, np.float64):
        data = data.astype(np.float64)
    else:
        raise SceneConfigError(f"unsupported WAV sample format {data.dtype}")
    return MultichannelRecording(data.T, float(rate))


def _require(obj: dict, key: str, context: str):
    if key not in obj:
        raise SceneConfigError(f"missing key '{key}' in {context}")
    return obj[key]


def parse_array(entry: dict, context: str = "array entry") -> MicArray:
    array_id = str(_require(entry, "id", context))
    center = _require(entry, "center_m", context)
    orientation = float(_require(entry, "orientation_rad", context))
    side = float(entry.get("side_length_m", geometry.HEX_SIDE_M))
    try:
        return geometry.build_hex_array(center, orientation, side, array_id)
    except ValueError as exc:
        raise SceneConfigError(f"invalid array {array_id!r}: {exc}") from exc


def load_array_spec(path) -> MicArray:
    with open(path) as fh:
        entry = json.load(fh)
    return parse_array(entry, context=str(path))


def parse_scene(config: dict, context: str = "scene config",
                base_dir=None) -> Scene:
    raw_arrays = _require(config, "arrays", context)
    if not isinstance(raw_arrays, list) or not raw_arrays:
        raise SceneConfigError(f"key 'arrays' must be a non-empty list in {context}")
    arrays = tuple(parse_array(a, f"{context}.arrays[{k}]")
                   for k, a in enumerate(raw_arrays))
    source = _require(config, "source_m", context)
    model = PropagationModel(
        speed_of_sound=float(config.get("speed_of_sound_m_s",
                                        geometry.SPEED_OF_SOUND_M_S)),
        sample_rate=float(config.get("sample_rate_hz", geometry.SAMPLE_RATE_HZ)))
    signal = config.get("signal", {})
    kind = str(signal.get("kind", "speech"))
    source_samples = None
    if kind == "file":
        wav_path = Path(_require(signal, "path", f"{context}.signal"))
        if base_dir is not None and not wav_path.is_absolute():
            wav_path = Path(base_dir) / wav_path
        rec = read_wav(wav_path)
        source_samples = rec.samples.mean(axis=0)  # mono mixdown
    echoes = tuple(
        Echo(float(_require(e, "delay_s", f"{context}.echoes[{k}]")),
             float(_require(e, "gain", f"{context}.echoes[{k}]")),
             float(_require(e, "azimuth_offset_deg", f"{context}.echoes[{k}]")))
        for k, e in enumerate(config.get("echoes", [])))
    snr = config.get("snr_db")
    try:
        return Scene(arrays=arrays, source=np.asarray(source, dtype=float),
                     signal_kind=kind,
                     duration=float(config.get("duration_s", sim.DEFAULT_DURATION_S)),
                     snr_db=math.inf if snr is None else float(snr),
                     echoes=echoes, seed=int(config.get("seed", 0)), model=model,
                     tone_hz=float(signal.get("tone_hz", 1000.0)),
                     source_samples=source_samples)
    except ValueError as exc:
        raise SceneConfigError(f"invalid scene: {exc}") from exc


def load_scene(path) -> Scene:
    with open(path) as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SceneConfigError(f"not valid JSON: {path}: {exc}") from exc
    if not isinstance(config, dict):
        raise SceneConfigError(f"scene config must be a JSON object: {path}")
    return parse_scene(config, context=str(path), base_dir=Path(path).parent)


def array_to_json(array: MicArray) -> dict:
    return {"id": array.id, "center_m": [float(v) for v in array.center],
            "orientation_rad": array.orientation,
            "side_length_m": array.side_length}


def write_scene_outputs(out_dir, scene: Scene,
                        recordings: list[MultichannelRecording],
                        truth: GroundTruth) -> Path:
    """Write per-array WAVs, the ground-truth sidecar, and the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for array, rec in zip(scene.arrays, recordings):
        wav_name = f"{array.id}.wav"
        write_wav(out / wav_name, rec)
        entry = array_to_json(array)
        entry["wav"] = wav_name
        entries.append(entry)

    truth_doc = {
        "source_m": [float(v) for v in truth.source],
        "per_array": [
            {"id": array_id, "azimuth_deg": truth.azimuth_deg[array_id],
             "pair_delays_s": {f"{i}-{j}": d
                               for (i, j), d in truth.pair_delays[array_id].items()}}
            for array_id in truth.azimuth_deg],
    }
    (out / GROUND_TRUTH_NAME).write_text(json.dumps(truth_doc, indent=2))

    manifest = {
        "arrays": entries,
        "ground_truth": GROUND_TRUTH_NAME,
        "sample_rate_hz": scene.model.sample_rate,
        "speed_of_sound_m_s": scene.model.speed_of_sound,
        "seed": scene.seed,
    }
    manifest_path = out / MANIFEST_NAME
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return manifest_path


def load_manifest(path) -> tuple[list[MicArray], list[Path], PropagationModel, dict]:
    """Arrays, their WAV paths, the propagation model, and the raw manifest."""
    path = Path(path)
    with open(path) as fh:
        manifest = json.load(fh)
    raw = _require(manifest, "arrays", str(path))
    arrays = [parse_array(a, f"{path}.arrays[{k}]") for k, a in enumerate(raw)]
    wavs = [path.parent / _require(a, "wav", f"{path}.arrays[{k}]")
            for k, a in enumerate(raw)]
    model = PropagationModel(
        speed_of_sound=float(manifest.get("speed_of_sound_m_s",
                                          geometry.SPEED_OF_SOUND_M_S)),
        sample_rate=float(manifest.get("sample_rate_hz", geometry.SAMPLE_RATE_HZ)))
    return arrays, wavs, model, manifest


def load_ground_truth(manifest_path) -> dict | None:
    path = Path(manifest_path).parent / GROUND_TRUTH_NAME
    if not path.exists():
        return None
    with open(path) as fh:
        return json.load(fh)
