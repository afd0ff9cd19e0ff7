"""Command-line interface: simulate | aoa | localize | eval.

Exit codes: 0 success, 2 usage/config error, 3 unlocalizable geometry,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import io as hio
from . import pipeline, sim
from .aoa import AoaMethod
from .errors import (AmbiguousEstimateError, NoSignalError, SceneConfigError,
                     UnlocalizableError)
from .pipeline import ALL_SOLVERS, PipelineConfig
from .sim import Echo

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_UNLOCALIZABLE = 3
EXIT_IO = 4
OUTPUT_DIR_ENV = "HEXLOC_OUT_DIR"


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _default_out_dir(value: str | None) -> Path:
    if value:
        return Path(value)
    return Path(os.environ.get(OUTPUT_DIR_ENV, "."))


def _config_from_args(args) -> PipelineConfig:
    return PipelineConfig(
        band_hz=(args.band_low_hz, args.band_high_hz),
        upsample_factor=args.upsample_factor,
        num_windows=args.num_windows,
        grid_step_deg=args.grid_step_deg,
        solver=args.solver,
        ransac_threshold_m=args.ransac_threshold_m,
        ransac_iterations=args.ransac_iterations,
        seed=args.seed,
        strict_paper_mode=args.strict_paper_mode)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--band-low-hz", type=float, default=300.0)
    parser.add_argument("--band-high-hz", type=float, default=3500.0)
    parser.add_argument("--upsample-factor", type=int, default=8)
    parser.add_argument("--num-windows", type=int, default=2)
    parser.add_argument("--grid-step-deg", type=float, default=1.0)
    parser.add_argument("--solver", choices=ALL_SOLVERS, default="irls")
    parser.add_argument("--ransac-threshold-m", type=float, default=0.5)
    parser.add_argument("--ransac-iterations", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--strict-paper-mode", action="store_true")


def cmd_simulate(args) -> int:
    try:
        scene = hio.load_scene(args.scene_config)
    except FileNotFoundError:
        return _fail(EXIT_IO, f"cannot read {args.scene_config}")
    except SceneConfigError as exc:
        return _fail(EXIT_USAGE, str(exc))

    out_dir = _default_out_dir(args.out_dir)
    try:
        recordings, truth = sim.synthesize(scene)
        manifest = hio.write_scene_outputs(out_dir, scene, recordings, truth)
    except ValueError as exc:
        return _fail(EXIT_USAGE, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, f"cannot write to {out_dir}: {exc}")
    print(f"wrote {len(recordings)} recordings and {manifest}")
    return EXIT_OK


def cmd_aoa(args) -> int:
    try:
        rec = hio.read_wav(args.wav)
        array = hio.load_array_spec(args.array_spec)
    except FileNotFoundError as exc:
        return _fail(EXIT_IO, str(exc))
    except (SceneConfigError, ValueError) as exc:
        return _fail(EXIT_USAGE, str(exc))
    if rec.num_channels != array.num_elements:
        return _fail(EXIT_USAGE,
                     f"WAV has {rec.num_channels} channels, expected "
                     f"{array.num_elements} for array {array.id!r}")
    config = _config_from_args(args)
    try:
        spectrum, estimate = pipeline.estimate_recording_aoa(
            rec, array, AoaMethod(args.method), config)
    except AmbiguousEstimateError as exc:
        spectrum = exc.spectrum
        if spectrum is not None and args.spectrum_csv:
            Path(args.spectrum_csv).write_text(pipeline.spectrum_to_csv(spectrum))
        return _fail(EXIT_USAGE, f"ambiguous estimate: {exc}")
    except (NoSignalError, ValueError) as exc:
        return _fail(EXIT_USAGE, str(exc))
    print(f"array={array.id} method={estimate.method.value} "
          f"azimuth_deg={estimate.azimuth_deg:.3f} "
          f"confidence={estimate.confidence:.4f} "
          f"ambiguous={spectrum.ambiguous}")
    if args.spectrum_csv:
        try:
            Path(args.spectrum_csv).write_text(pipeline.spectrum_to_csv(spectrum))
        except OSError as exc:
            return _fail(EXIT_IO, f"cannot write {args.spectrum_csv}: {exc}")
    return EXIT_OK


def cmd_localize(args) -> int:
    try:
        arrays, wav_paths, model, _ = hio.load_manifest(args.manifest)
    except FileNotFoundError:
        return _fail(EXIT_IO, f"cannot read {args.manifest}")
    except (SceneConfigError, json.JSONDecodeError) as exc:
        return _fail(EXIT_USAGE, str(exc))
    if len(arrays) < 2:
        return _fail(EXIT_USAGE,
                     "manifest must reference at least two arrays")
    try:
        recs = [hio.read_wav(p) for p in wav_paths]
    except FileNotFoundError as exc:
        return _fail(EXIT_IO, str(exc))
    except SceneConfigError as exc:
        return _fail(EXIT_USAGE, str(exc))

    config = _config_from_args(args)
    try:
        result, estimates = pipeline.localize_recordings(
            recs, arrays, AoaMethod(args.method), config, model)
    except UnlocalizableError as exc:
        return _fail(EXIT_UNLOCALIZABLE, f"unlocalizable geometry: {exc}")
    except (AmbiguousEstimateError, NoSignalError, ValueError) as exc:
        return _fail(EXIT_USAGE, str(exc))

    print(f"position_m=({result.position[0]:.4f}, {result.position[1]:.4f}) "
          f"solver={result.method} iterations={result.iterations} "
          f"condition_flag={result.condition_flag}")
    for array, est, residual in zip(arrays, estimates, result.residuals):
        print(f"  {array.id}: azimuth_deg={est.azimuth_deg:.3f} "
              f"residual_m={residual:.4f}")
    if args.result_csv:
        try:
            Path(args.result_csv).write_text(
                pipeline.result_to_csv(result, arrays, estimates))
        except OSError as exc:
            return _fail(EXIT_IO, f"cannot write {args.result_csv}: {exc}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _config_from_args(args)
    echoes = tuple(Echo(float(d), float(g), float(o))
                   for d, g, o in (args.echo or []))
    arrays = None
    if args.arrays:
        try:
            with open(args.arrays) as fh:
                arrays = tuple(hio.parse_array(a, args.arrays)
                               for a in json.load(fh))
        except FileNotFoundError:
            return _fail(EXIT_IO, f"cannot read {args.arrays}")
        except (SceneConfigError, json.JSONDecodeError) as exc:
            return _fail(EXIT_USAGE, str(exc))
    try:
        rows = pipeline.run_eval(args.trials, tuple(args.bounds), config,
                                 arrays=arrays, snr_db=args.snr_db,
                                 echoes=echoes)
    except ValueError as exc:
        return _fail(EXIT_USAGE, str(exc))
    summaries = pipeline.summarize(rows)
    print(pipeline.summary_table(summaries))

    out_dir = _default_out_dir(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "summary.csv").write_text(pipeline.summaries_to_csv(summaries))
        (out_dir / "trials_aoa.csv").write_text(
            pipeline.rows_to_csv(rows.aoa, pipeline.AOA_TRIAL_FIELDS))
        (out_dir / "trials_loc.csv").write_text(
            pipeline.rows_to_csv(rows.loc, pipeline.LOC_TRIAL_FIELDS))
    except OSError as exc:
        return _fail(EXIT_IO, f"cannot write to {out_dir}: {exc}")
    print(f"wrote summary.csv, trials_aoa.csv, trials_loc.csv to {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hexloc",
        description="Azimuth estimation and 2D localization for hexagonal "
                    "microphone arrays")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="render a scene to WAV files")
    p_sim.add_argument("scene_config", help="scene JSON path")
    p_sim.add_argument("--out-dir", default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_aoa = sub.add_parser("aoa", help="estimate azimuth from one recording")
    p_aoa.add_argument("wav", help="six-channel WAV path")
    p_aoa.add_argument("array_spec", help="array JSON path")
    p_aoa.add_argument("--method", default="gcc+",
                       choices=[m.value for m in AoaMethod])
    p_aoa.add_argument("--spectrum-csv", default=None)
    _add_config_flags(p_aoa)
    p_aoa.set_defaults(func=cmd_aoa)

    p_loc = sub.add_parser("localize", help="fuse bearings from a manifest")
    p_loc.add_argument("manifest", help="manifest JSON path")
    p_loc.add_argument("--method", default="gcc+",
                       choices=[m.value for m in AoaMethod])
    p_loc.add_argument("--result-csv", default=None)
    _add_config_flags(p_loc)
    p_loc.set_defaults(func=cmd_localize)

    p_eval = sub.add_parser("eval", help="simulated accuracy sweep")
    p_eval.add_argument("--trials", type=int, default=50)
    p_eval.add_argument("--bounds", type=float, nargs=4,
                        default=[0.5, 0.5, 5.5, 4.5],
                        metavar=("X0", "Y0", "X1", "Y1"))
    p_eval.add_argument("--snr-db", type=float, default=20.0)
    p_eval.add_argument("--echo", type=float, nargs=3, action="append",
                        metavar=("DELAY_S", "GAIN", "OFFSET_DEG"))
    p_eval.add_argument("--arrays", default=None,
                        help="JSON list of array specs")
    p_eval.add_argument("--out-dir", default=None)
    _add_config_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    return args.func(args)


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
