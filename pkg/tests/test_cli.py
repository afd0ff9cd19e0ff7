import hashlib
import json
import math

import numpy as np

from hexloc import cli, io as hio, sim
from hexloc.geometry import build_hex_array
from hexloc.dsp import MultichannelRecording


def scene_config(tmp_path, source=(2.5, 2.0), arrays=None, snr_db=25.0,
                 seed=3, name="scene.json", **extra):
    if arrays is None:
        arrays = [
            {"id": "A1", "center_m": [0.0, 0.0], "orientation_rad": 0.0},
            {"id": "A2", "center_m": [6.0, 0.0], "orientation_rad": 2.0},
            {"id": "A3", "center_m": [3.0, 5.0], "orientation_rad": -1.0},
        ]
    config = {"arrays": arrays, "source_m": list(source),
              "duration_s": 1.06, "snr_db": snr_db, "seed": seed}
    config.update(extra)
    path = tmp_path / name
    path.write_text(json.dumps(config))
    return path


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_simulate_writes_wavs_and_manifest(tmp_path):
    config = scene_config(tmp_path)
    out = tmp_path / "out"
    assert cli.main(["simulate", str(config), "--out-dir", str(out)]) == 0
    for name in ("A1.wav", "A2.wav", "A3.wav", "manifest.json",
                 "ground_truth.json"):
        assert (out / name).exists()
    rec = hio.read_wav(out / "A1.wav")
    assert rec.num_channels == 6
    assert rec.sample_rate == 44100.0


def test_simulate_deterministic_digests(tmp_path):
    config = scene_config(tmp_path)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert cli.main(["simulate", str(config), "--out-dir", str(out1)]) == 0
    assert cli.main(["simulate", str(config), "--out-dir", str(out2)]) == 0
    for name in ("A1.wav", "A2.wav", "A3.wav"):
        assert digest(out1 / name) == digest(out2 / name)


def test_simulate_malformed_config_names_key(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"arrays": [{"id": "A1",
                                            "center_m": [0.0, 0.0]}],
                                "source_m": [1.0, 1.0]}))
    assert cli.main(["simulate", str(path), "--out-dir", str(tmp_path)]) == 2
    assert "orientation_rad" in capsys.readouterr().err


def test_simulate_missing_config_is_io_error(tmp_path):
    assert cli.main(["simulate", str(tmp_path / "none.json"),
                     "--out-dir", str(tmp_path)]) == 4


def simulated_fixture(tmp_path, **kw):
    config = scene_config(tmp_path, **kw)
    out = tmp_path / "fixture"
    assert cli.main(["simulate", str(config), "--out-dir", str(out)]) == 0
    return out


def test_aoa_command_prints_azimuth_and_writes_csv(tmp_path, capsys):
    out = simulated_fixture(tmp_path)
    spec_path = tmp_path / "a1.json"
    spec_path.write_text(json.dumps(
        {"id": "A1", "center_m": [0.0, 0.0], "orientation_rad": 0.0}))
    csv_path = tmp_path / "spectrum.csv"
    code = cli.main(["aoa", str(out / "A1.wav"), str(spec_path),
                     "--method", "gcc+", "--spectrum-csv", str(csv_path)])
    assert code == 0
    printed = capsys.readouterr().out
    azimuth = float(printed.split("azimuth_deg=")[1].split()[0])
    truth = json.loads((out / "ground_truth.json").read_text())
    expected = next(e["azimuth_deg"] for e in truth["per_array"]
                    if e["id"] == "A1")
    diff = abs(azimuth - expected) % 360.0
    assert min(diff, 360.0 - diff) <= 1.0
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "angle_deg,score"
    assert len(lines) == 361


def test_aoa_music_csv_rows(tmp_path):
    out = simulated_fixture(tmp_path)
    spec_path = tmp_path / "a1.json"
    spec_path.write_text(json.dumps(
        {"id": "A1", "center_m": [0.0, 0.0], "orientation_rad": 0.0}))
    csv_path = tmp_path / "music.csv"
    assert cli.main(["aoa", str(out / "A1.wav"), str(spec_path),
                     "--method", "music",
                     "--spectrum-csv", str(csv_path)]) == 0
    assert len(csv_path.read_text().strip().splitlines()) == 361


def test_aoa_channel_mismatch_exit_2(tmp_path):
    rng = np.random.default_rng(0)
    wav = tmp_path / "five.wav"
    hio.write_wav(wav, MultichannelRecording(rng.standard_normal((5, 8192)),
                                             44100.0))
    spec_path = tmp_path / "a1.json"
    spec_path.write_text(json.dumps(
        {"id": "A1", "center_m": [0.0, 0.0], "orientation_rad": 0.0}))
    assert cli.main(["aoa", str(wav), str(spec_path)]) == 2


def test_localize_three_array_fixture(tmp_path, capsys):
    out = simulated_fixture(tmp_path)
    csv_path = tmp_path / "result.csv"
    code = cli.main(["localize", str(out / "manifest.json"),
                     "--solver", "irls", "--result-csv", str(csv_path)])
    assert code == 0
    printed = capsys.readouterr().out
    x = float(printed.split("position_m=(")[1].split(",")[0])
    y = float(printed.split(", ")[1].split(")")[0])
    truth = json.loads((out / "ground_truth.json").read_text())["source_m"]
    assert math.hypot(x - truth[0], y - truth[1]) < 0.1
    text = csv_path.read_text()
    assert text.startswith("record,array_id")
    assert "position" in text


def test_localize_single_array_manifest_exit_2(tmp_path, capsys):
    out = simulated_fixture(tmp_path)
    manifest = json.loads((out / "manifest.json").read_text())
    manifest["arrays"] = manifest["arrays"][:1]
    path = out / "one.json"
    path.write_text(json.dumps(manifest))
    assert cli.main(["localize", str(path)]) == 2
    assert "at least two" in capsys.readouterr().err


def test_localize_parallel_bearings_exit_3(tmp_path):
    # same recording fed to two same-orientation arrays at different
    # positions yields bitwise-identical azimuths: exactly parallel lines
    array = build_hex_array((0.0, 0.0), 0.0, array_id="B1")
    scene = sim.Scene(arrays=(array,), source=(4.0, 0.0), duration=1.06,
                      snr_db=math.inf, seed=2)
    recordings, _ = sim.synthesize(scene)
    out = tmp_path / "parallel"
    out.mkdir()
    hio.write_wav(out / "B1.wav", recordings[0])
    entries = []
    for array_id, center in (("B1", [0.0, 0.0]), ("B2", [0.0, 3.0])):
        entries.append({"id": array_id, "center_m": center,
                        "orientation_rad": 0.0, "wav": "B1.wav"})
    (out / "manifest.json").write_text(json.dumps(
        {"arrays": entries, "sample_rate_hz": 44100.0}))
    code = cli.main(["localize", str(out / "manifest.json"),
                     "--solver", "mle"])
    assert code == 3


def test_eval_command_writes_csvs(tmp_path, capsys):
    out = tmp_path / "eval"
    code = cli.main(["eval", "--trials", "2", "--snr-db", "25",
                     "--out-dir", str(out), "--seed", "5"])
    assert code == 0
    for name in ("summary.csv", "trials_aoa.csv", "trials_loc.csv"):
        assert (out / name).exists()
    printed = capsys.readouterr().out
    assert "method" in printed and "gcc+" in printed


def test_eval_deterministic_digests(tmp_path):
    out1, out2 = tmp_path / "e1", tmp_path / "e2"
    args = ["eval", "--trials", "2", "--snr-db", "25", "--seed", "9"]
    assert cli.main(args + ["--out-dir", str(out1)]) == 0
    assert cli.main(args + ["--out-dir", str(out2)]) == 0
    for name in ("summary.csv", "trials_aoa.csv", "trials_loc.csv"):
        assert digest(out1 / name) == digest(out2 / name)


def test_usage_error_exit_2():
    assert cli.main(["aoa"]) == 2
    assert cli.main(["no-such-command"]) == 2


def test_output_dir_env_var(tmp_path, monkeypatch):
    config = scene_config(tmp_path)
    target = tmp_path / "from-env"
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(target))
    assert cli.main(["simulate", str(config)]) == 0
    assert (target / "manifest.json").exists()


def test_simulate_file_source(tmp_path):
    rng = np.random.default_rng(4)
    wav = tmp_path / "utterance.wav"
    hio.write_wav(wav, MultichannelRecording(
        rng.standard_normal((1, 30000)) * 0.2, 44100.0))
    config = scene_config(tmp_path, signal={"kind": "file",
                                            "path": "utterance.wav"})
    out = tmp_path / "filesrc"
    assert cli.main(["simulate", str(config), "--out-dir", str(out)]) == 0
    rec = hio.read_wav(out / "A1.wav")
    assert rec.num_channels == 6
    assert np.any(rec.samples)


def test_wav_int16_read_normalized(tmp_path):
    from scipy.io import wavfile
    rng = np.random.default_rng(1)
    data = (rng.uniform(-0.5, 0.5, (4096, 6)) * 32767).astype(np.int16)
    path = tmp_path / "int16.wav"
    wavfile.write(str(path), 44100, data)
    rec = hio.read_wav(path)
    assert rec.num_channels == 6
    assert float(np.max(np.abs(rec.samples))) <= 1.0
    np.testing.assert_allclose(rec.samples.T * 32768.0, data, atol=1.0)
