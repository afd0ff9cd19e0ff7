"""Pipeline orchestration: configuration, per-array estimation, bearing
fusion, and the evaluation harness with CSV emitters."""

from __future__ import annotations

import csv
import io as _io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import aoa, dsp, localize, sim, tdoa
from .aoa import AoaEstimate, AoaMethod, AoaSpectrum, circular_error_deg
from .dsp import MultichannelRecording
from .errors import AmbiguousEstimateError, NoSignalError, UnlocalizableError
from .geometry import MicArray, PropagationModel
from .localize import BearingLine, LocalizationResult
from .sim import Echo

ALL_METHODS = (AoaMethod.GCC_PLUS, AoaMethod.GCC_PHAT, AoaMethod.MUSIC)
ALL_SOLVERS = ("mle", "ransac", "irls")
MIN_BEARING_WEIGHT = 1e-3


@dataclass(frozen=True)
class PipelineConfig:
    """Parameter surface of the full pipeline.

    ``strict_paper_mode`` switches off exactly three enhancements that are
    tuning choices of this implementation: peak-score weighting in the
    matcher, multi-window delay aggregation, and confidence-weighted
    bearings. Nothing else changes, which the config-diff test asserts.
    """

    band_hz: tuple[float, float] = dsp.DEFAULT_BAND_HZ
    upsample_factor: int = dsp.DEFAULT_UPSAMPLE
    num_windows: int = tdoa.DEFAULT_NUM_WINDOWS
    grid_step_deg: float = aoa.DEFAULT_GRID_STEP_DEG
    solver: str = "irls"
    ransac_threshold_m: float = localize.RANSAC_THRESHOLD_M
    ransac_iterations: int = localize.RANSAC_ITERATIONS
    seed: int = 0
    strict_paper_mode: bool = False

    def __post_init__(self):
        if self.solver not in ALL_SOLVERS:
            raise ValueError(f"solver must be one of {ALL_SOLVERS}, got {self.solver!r}")
        if self.upsample_factor < 1 or self.num_windows < 1:
            raise ValueError("upsample_factor and num_windows must be >= 1")

    def effective(self) -> dict:
        """Resolved knob values after applying strict-mode overrides."""
        strict = self.strict_paper_mode
        return {
            "band_hz": self.band_hz,
            "upsample_factor": self.upsample_factor,
            "num_windows": 1 if strict else self.num_windows,
            "grid_step_deg": self.grid_step_deg,
            "solver": self.solver,
            "ransac_threshold_m": self.ransac_threshold_m,
            "ransac_iterations": self.ransac_iterations,
            "seed": self.seed,
            "matcher_weighted": not strict,
            "bearing_weights": "uniform" if strict else "confidence",
        }


def estimate_recording_aoa(rec: MultichannelRecording, array: MicArray,
                           method: AoaMethod | str,
                           config: PipelineConfig | None = None,
                           model: PropagationModel | None = None
                           ) -> tuple[AoaSpectrum, AoaEstimate]:
    """Band-pass a recording and run the chosen azimuth estimator."""
    if config is None:
        config = PipelineConfig()
    if model is None:
        model = PropagationModel(sample_rate=rec.sample_rate)
    method = AoaMethod(method)
    eff = config.effective()
    filtered = dsp.bandpass_recording(rec, *eff["band_hz"])

    if method is AoaMethod.GCC_PLUS:
        delays = tdoa.expand_delay_features(
            filtered, array, num_windows=eff["num_windows"],
            upsample_factor=eff["upsample_factor"], model=model, refine=True,
            band_hz=eff["band_hz"])
        return aoa.estimate_aoa_gcc(delays, array, model, eff["grid_step_deg"],
                                    weighted=eff["matcher_weighted"],
                                    refine=True, method=AoaMethod.GCC_PLUS)
    if method is AoaMethod.GCC_PHAT:
        return aoa.baseline_aoa_gcc_phat(filtered, array, model,
                                         eff["grid_step_deg"], eff["band_hz"])
    return aoa.estimate_aoa_music(filtered, array, model, eff["band_hz"],
                                  grid_step_deg=eff["grid_step_deg"])


def bearings_from_estimates(arrays: list[MicArray],
                            estimates: list[AoaEstimate],
                            config: PipelineConfig) -> list[BearingLine]:
    uniform = config.effective()["bearing_weights"] == "uniform"
    lines = []
    for array, est in zip(arrays, estimates):
        weight = 1.0 if uniform else max(est.confidence, MIN_BEARING_WEIGHT)
        lines.append(BearingLine.from_azimuth(array.center, est.azimuth,
                                              weight=weight, array_id=array.id))
    return lines


def solve_bearings(lines: list[BearingLine],
                   config: PipelineConfig) -> LocalizationResult:
    solver = config.solver
    if solver == "ransac":
        return localize.solve_ransac(lines, config.ransac_threshold_m,
                                     config.ransac_iterations, config.seed)
    if solver == "irls":
        return localize.solve_irls(lines)
    return localize.solve_mle(lines)


def localize_recordings(recs: list[MultichannelRecording],
                        arrays: list[MicArray],
                        method: AoaMethod | str = AoaMethod.GCC_PLUS,
                        config: PipelineConfig | None = None,
                        model: PropagationModel | None = None
                        ) -> tuple[LocalizationResult, list[AoaEstimate]]:
    """Per-array AoA estimation followed by bearing fusion."""
    if config is None:
        config = PipelineConfig()
    if len(recs) != len(arrays) or len(arrays) < 2:
        raise ValueError("need matching recordings for at least two arrays")
    estimates = [estimate_recording_aoa(rec, array, method, config, model)[1]
                 for rec, array in zip(recs, arrays)]
    lines = bearings_from_estimates(arrays, estimates, config)
    return solve_bearings(lines, config), estimates


@dataclass(frozen=True)
class EvalSummary:
    """Error statistics for one method/solver combination."""

    method: str
    solver: str
    trials: int
    aoa_mean_deg: float
    aoa_median_deg: float
    aoa_p90_deg: float
    loc_mean_m: float
    loc_median_m: float
    loc_p90_m: float

    def __post_init__(self):
        if self.aoa_median_deg > self.aoa_p90_deg + 1e-12 \
                or self.loc_median_m > self.loc_p90_m + 1e-12:
            raise ValueError("median cannot exceed the 90th percentile")


@dataclass
class EvalRows:
    """Raw per-trial records backing the summary tables."""

    aoa: list[dict] = field(default_factory=list)   # trial, method, array_id, error_deg, status
    loc: list[dict] = field(default_factory=list)   # trial, method, solver, error_m, status


def run_eval(n_trials: int, bounds: tuple[float, float, float, float],
             config: PipelineConfig | None = None,
             arrays: tuple[MicArray, ...] | None = None,
             snr_db: float = 20.0, echoes: tuple[Echo, ...] = (),
             methods: tuple[AoaMethod, ...] = ALL_METHODS,
             solvers: tuple[str, ...] = ALL_SOLVERS) -> EvalRows:
    """Sample scenarios, run every method and solver, record per-trial errors."""
    if config is None:
        config = PipelineConfig()
    if arrays is None:
        arrays = sim.default_array_layout()
    scenes = sim.sample_scenarios(n_trials, bounds, seed=config.seed,
                                  arrays=arrays, snr_db=snr_db, echoes=echoes)
    rows = EvalRows()
    for t, scene in enumerate(scenes):
        recordings, truth = sim.synthesize(scene)
        per_method: dict[AoaMethod, list[AoaEstimate]] = {}
        for method in methods:
            estimates = []
            for rec, array in zip(recordings, scene.arrays):
                try:
                    _, est = estimate_recording_aoa(rec, array, method,
                                                    config, scene.model)
                except (AmbiguousEstimateError, NoSignalError, ValueError):
                    rows.aoa.append({"trial": t, "method": method.value,
                                     "array_id": array.id,
                                     "error_deg": math.nan, "status": "error"})
                    estimates.append(None)
                    continue
                err = circular_error_deg(est.azimuth_deg,
                                         truth.azimuth_deg[array.id])
                rows.aoa.append({"trial": t, "method": method.value,
                                 "array_id": array.id, "error_deg": err,
                                 "status": "ok"})
                estimates.append(est)
            per_method[method] = estimates

        for method in methods:
            estimates = per_method[method]
            usable = [(a, e) for a, e in zip(scene.arrays, estimates)
                      if e is not None]
            for solver in solvers:
                if len(usable) < 2:
                    rows.loc.append({"trial": t, "method": method.value,
                                     "solver": solver, "error_m": math.nan,
                                     "status": "error"})
                    continue
                solver_config = replace(config, solver=solver)
                lines = bearings_from_estimates([a for a, _ in usable],
                                                [e for _, e in usable],
                                                solver_config)
                try:
                    result = solve_bearings(lines, solver_config)
                except UnlocalizableError:
                    rows.loc.append({"trial": t, "method": method.value,
                                     "solver": solver, "error_m": math.nan,
                                     "status": "error"})
                    continue
                err = float(np.linalg.norm(result.position - truth.source))
                rows.loc.append({"trial": t, "method": method.value,
                                 "solver": solver, "error_m": err,
                                 "status": "ok"})
    return rows


def summarize(rows: EvalRows) -> list[EvalSummary]:
    """Aggregate per-trial rows into mean/median/90th-percentile summaries."""
    summaries = []
    methods = sorted({r["method"] for r in rows.loc})
    solvers = sorted({r["solver"] for r in rows.loc})
    for method in methods:
        aoa_errs = np.array([r["error_deg"] for r in rows.aoa
                             if r["method"] == method and r["status"] == "ok"])
        for solver in solvers:
            loc_errs = np.array([r["error_m"] for r in rows.loc
                                 if r["method"] == method
                                 and r["solver"] == solver
                                 and r["status"] == "ok"])
            trials = len({r["trial"] for r in rows.loc
                          if r["method"] == method and r["solver"] == solver})
            summaries.append(EvalSummary(
                method=method, solver=solver, trials=trials,
                aoa_mean_deg=_stat(aoa_errs, np.mean),
                aoa_median_deg=_stat(aoa_errs, np.median),
                aoa_p90_deg=_stat(aoa_errs, lambda v: np.percentile(v, 90)),
                loc_mean_m=_stat(loc_errs, np.mean),
                loc_median_m=_stat(loc_errs, np.median),
                loc_p90_m=_stat(loc_errs, lambda v: np.percentile(v, 90))))
    return summaries


def _stat(values: np.ndarray, fn) -> float:
    return float(fn(values)) if values.size else math.nan


AOA_TRIAL_FIELDS = ("trial", "method", "array_id", "error_deg", "status")
LOC_TRIAL_FIELDS = ("trial", "method", "solver", "error_m", "status")
SUMMARY_FIELDS = ("method", "solver", "trials", "aoa_mean_deg",
                  "aoa_median_deg", "aoa_p90_deg", "loc_mean_m",
                  "loc_median_m", "loc_p90_m")


def _format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_to_csv(records: list[dict], fields: tuple[str, ...]) -> str:
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for record in records:
        writer.writerow({k: _format_value(record[k]) for k in fields})
    return buf.getvalue()


def csv_to_rows(text: str) -> list[dict]:
    reader = csv.DictReader(_io.StringIO(text))
    out = []
    for raw in reader:
        row = {}
        for key, value in raw.items():
            if key in ("error_deg", "error_m"):
                row[key] = float(value)
            elif key == "trial":
                row[key] = int(value)
            else:
                row[key] = value
        out.append(row)
    return out


def summaries_to_csv(summaries: list[EvalSummary]) -> str:
    records = [{f: getattr(s, f) for f in SUMMARY_FIELDS} for s in summaries]
    return rows_to_csv(records, SUMMARY_FIELDS)


def summary_table(summaries: list[EvalSummary]) -> str:
    lines = [f"{'method':<10} {'solver':<8} {'n':>4} "
             f"{'aoa mean':>9} {'median':>7} {'p90':>7} "
             f"{'loc mean':>9} {'median':>7} {'p90':>7}"]
    for s in summaries:
        lines.append(
            f"{s.method:<10} {s.solver:<8} {s.trials:>4} "
            f"{s.aoa_mean_deg:>9.2f} {s.aoa_median_deg:>7.2f} {s.aoa_p90_deg:>7.2f} "
            f"{s.loc_mean_m:>9.3f} {s.loc_median_m:>7.3f} {s.loc_p90_m:>7.3f}")
    return "\n".join(lines)


def spectrum_to_csv(spectrum: AoaSpectrum) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["angle_deg", "score"])
    for angle, score in zip(spectrum.angles_deg, spectrum.scores):
        writer.writerow([repr(float(angle)), repr(float(score))])
    return buf.getvalue()


def result_to_csv(result: LocalizationResult, arrays: list[MicArray],
                  estimates: list[AoaEstimate]) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["record", "array_id", "x_m", "y_m", "azimuth_deg",
                     "residual_m", "inlier", "behind_anchor"])
    writer.writerow(["position", "", repr(float(result.position[0])),
                     repr(float(result.position[1])), "", "", "", ""])
    for array, est, residual in zip(arrays, estimates, result.residuals):
        writer.writerow([
            "bearing", array.id, repr(float(array.center[0])),
            repr(float(array.center[1])), repr(est.azimuth_deg),
            repr(float(residual)),
            str(array.id in result.inliers) if result.inliers else "",
            str(array.id in result.behind_anchors)])
    return buf.getvalue()
