"""Command-line front end: simulate, calibrate, evaluate, sweep, report.

Every command is reproducible from (config file, seed) alone.  Exit codes:
2 for config errors, 3 for I/O and data-format errors, 4 for evaluation
without ground truth, 1 for anything else the pipeline raises.
"""
from __future__ import annotations

import functools
import sys
from pathlib import Path

import click
import numpy as np

from . import report as reportmod
from . import sim
from .calibrate import calibrate_dataset
from .config import RunConfig, load_config
from .dataio import read_dataset, read_profile, write_dataset, write_profile
from .errors import (
    ConfigError,
    DataFormatError,
    MissingGroundTruth,
    SlipgazeError,
)
from .gaze import evaluate_detailed

_MODE_MAP = {"l2": "least_squares", "l1": "l1"}


def _echo(msg: str) -> None:
    click.echo(msg)


def _fail(msg: str, code: int):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail(str(exc), 2)
        except (DataFormatError, OSError) as exc:
            _fail(str(exc), 3)
        except MissingGroundTruth as exc:
            _fail(str(exc), 4)
        except SlipgazeError as exc:
            _fail(str(exc), 1)

    return wrapper


def _load(config_path, seed) -> RunConfig:
    cfg = load_config(config_path) if config_path else RunConfig()
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    return cfg


def _out_dir(out) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


_config_opt = click.option(
    "--config", "config_path", type=click.Path(), default=None,
    help="JSON run config; defaults apply when omitted.",
)
_seed_opt = click.option(
    "--seed", type=click.IntRange(min=0), default=None,
    help="Override the config seed.",
)


@click.group()
@click.version_option(package_name="slipgaze", prog_name="slipgaze")
def cli() -> None:
    """Slippage-robust gaze estimation on synthetic near-eye data."""


@cli.command()
@_config_opt
@_seed_opt
@click.option("--out", default="out", type=click.Path(), help="Output directory.")
@_guarded
def simulate(config_path, seed, out) -> None:
    """Simulate per-subject session datasets (with ground truth)."""
    cfg = _load(config_path, seed)
    out_dir = _out_dir(out)
    scenario = cfg.scenario()
    for subject, _rig, dataset in sim.simulate_scenario(
        scenario, ipd_rig_builder=lambda ipd_mm: cfg.build_rig(ipd_mm=ipd_mm)
    ):
        path = out_dir / f"dataset_{subject.subject_id:02d}.jsonl"
        write_dataset(dataset, path)
        _echo(f"{path}: {len(dataset.frames)} frames "
              f"({len(dataset.recording_ids())} recordings)")


@cli.command()
@click.argument("dataset", type=click.Path(dir_okay=False))
@click.option("--out", default="profile.json", type=click.Path(),
              help="Output profile path.")
@click.option("--mode", type=click.Choice(sorted(_MODE_MAP)), default="l2",
              help="Batch center solver for E_calib.")
@_guarded
def calibrate(dataset, out, mode) -> None:
    """Calibrate a profile from a dataset's recording 0."""
    ds = read_dataset(dataset)
    profile = calibrate_dataset(ds, mode=_MODE_MAP[mode])
    write_profile(profile, out)
    for eye in ("left", "right"):
        cal = profile.eye(eye)
        _echo(
            f"{eye}: k1={cal.k1:.3f} mm, k2={cal.k2:.3f} mm, "
            f"kappa_fit_rms={cal.diagnostics['kappa_fit_rms_deg']:.4f} deg"
        )
    _echo(f"wrote {out}")


@cli.command()
@click.argument("dataset", type=click.Path(dir_okay=False))
@click.argument("profile", type=click.Path(dir_okay=False))
@click.option("--out", default="report.csv", type=click.Path(),
              help="Output CSV path.")
@click.option("--no-correction", is_flag=True, help="Disable slippage correction.")
@click.option("--center-mode", type=click.Choice(["frame", "batch"]),
              default="frame", help="E_now source for the correction term.")
@click.option("--mode", type=click.Choice(sorted(_MODE_MAP)), default="l2",
              help="Batch center solver.")
@_guarded
def evaluate(dataset, profile, out, no_correction, center_mode, mode) -> None:
    """Evaluate gaze accuracy on a dataset's test recordings."""
    ds = read_dataset(dataset)
    prof = read_profile(profile)
    result = evaluate_detailed(
        ds,
        prof,
        correct=not no_correction,
        center_mode=center_mode,
        batch_mode=_MODE_MAP[mode],
    )
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    from .dataio import atomic_write_text

    atomic_write_text(out, reportmod.rows_to_csv(result.rows))
    agg = result.rows[-1]
    _echo(
        f"aggregate over {agg.n_frames} frames: "
        f"left {agg.offset_mean_deg['left']:.4f} deg, "
        f"right {agg.offset_mean_deg['right']:.4f} deg, "
        f"bino {agg.offset_mean_deg['bino']:.4f} deg"
    )
    _echo(f"wrote {out}")


def _run_pipeline(cfg: RunConfig):
    """simulate -> calibrate -> evaluate for every subject, in memory."""
    scenario = cfg.scenario()
    datasets, profiles, results = [], [], []
    for _subject, _rig, dataset in sim.simulate_scenario(
        scenario, ipd_rig_builder=lambda ipd_mm: cfg.build_rig(ipd_mm=ipd_mm)
    ):
        profile = calibrate_dataset(dataset, mode=cfg.pipeline.batch_mode)
        result = evaluate_detailed(
            dataset,
            profile,
            correct=cfg.pipeline.correction,
            center_mode=cfg.pipeline.center_mode,
            batch_mode=cfg.pipeline.batch_mode,
        )
        datasets.append(dataset)
        profiles.append(profile)
        results.append(result)
    return datasets, profiles, results


def _sweep_config(cfg: RunConfig, axis: str, value: float) -> RunConfig:
    if axis == "noise":
        noise = cfg.noise.model_copy(
            update={
                "glint_sigma_px": value,
                "pupil_sigma_px": value * 0.3 / 0.5,
            }
        )
        return cfg.model_copy(update={"noise": noise})
    slip = cfg.slippage.model_copy(
        update={
            "trans_sigma_mm": value,
            "rot_sigma_deg": value * 0.8 / 1.5,
        }
    )
    return cfg.model_copy(update={"slippage": slip})


SWEEP_COLUMNS = (
    "axis",
    "value",
    "n_frames",
    "offset_mean_left_deg",
    "offset_mean_right_deg",
    "offset_mean_bino_deg",
)


@cli.command()
@_config_opt
@_seed_opt
@click.option("--axis", type=click.Choice(["noise", "slip"]), required=True,
              help="Scenario parameter to sweep: glint sigma px or slip "
                   "translation sigma mm (the paired parameter scales along).")
@click.option("--grid", required=True,
              help="Comma-separated values, e.g. 0,1,2,3.")
@click.option("--out", default="sweep.csv", type=click.Path(),
              help="Output CSV path.")
@click.option("--no-correction", is_flag=True, help="Disable slippage correction.")
@_guarded
def sweep(config_path, seed, axis, grid, out, no_correction) -> None:
    """Rerun the pipeline over a parameter grid; one CSV row per point."""
    cfg = _load(config_path, seed)
    if no_correction:
        cfg = cfg.model_copy(
            update={"pipeline": cfg.pipeline.model_copy(update={"correction": False})}
        )
    try:
        values = [float(v) for v in grid.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad --grid value: {exc}") from exc
    if not values:
        raise ConfigError("--grid is empty")
    lines = [",".join(SWEEP_COLUMNS)]
    for value in values:
        point_cfg = _sweep_config(cfg, axis, value)
        _, _, results = _run_pipeline(point_cfg)
        aggs = [res.rows[-1] for res in results]
        n = sum(a.n_frames for a in aggs)
        cells = [axis, reportmod._fmt(value), str(n)]
        for key in ("left", "right", "bino"):
            cells.append(
                reportmod._fmt(float(np.mean([a.offset_mean_deg[key] for a in aggs])))
            )
        lines.append(",".join(cells))
        _echo(f"{axis}={value:g}: bino mean "
              f"{float(np.mean([a.offset_mean_deg['bino'] for a in aggs])):.4f} deg")
    from .dataio import atomic_write_text

    Path(out).parent.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out, "\n".join(lines) + "\n")
    _echo(f"wrote {out}")


@cli.command()
@_config_opt
@_seed_opt
@click.option("--out", default="out", type=click.Path(), help="Output directory.")
@click.option("--no-correction", is_flag=True, help="Disable slippage correction.")
@click.option("--center-mode", type=click.Choice(["frame", "batch"]),
              default=None, help="Override the config center mode.")
@_guarded
def report(config_path, seed, out, no_correction, center_mode) -> None:
    """Full pipeline: CSV tables, summary JSON, and figures in one pass."""
    cfg = _load(config_path, seed)
    updates = {}
    if no_correction:
        updates["correction"] = False
    if center_mode is not None:
        updates["center_mode"] = center_mode
    if updates:
        cfg = cfg.model_copy(
            update={"pipeline": cfg.pipeline.model_copy(update=updates)}
        )
    out_dir = _out_dir(out)
    datasets, profiles, results = _run_pipeline(cfg)
    rows = [row for res in results for row in res.rows]
    marker_table = []
    for ds, res in zip(datasets, results):
        marker_table.extend(reportmod.marker_rows(ds.subject_id, res.frames))
    from .dataio import atomic_write_text

    report_csv = out_dir / "report.csv"
    atomic_write_text(report_csv, reportmod.rows_to_csv(rows))
    markers_csv = out_dir / "markers.csv"
    atomic_write_text(markers_csv, reportmod.markers_to_csv(marker_table))
    qualities = [q for q in (reportmod.measure_feature_quality(ds) for ds in datasets) if q]
    quality = {}
    if qualities:
        quality = {
            "centroid_discrepancy_px": {
                "mean": float(np.mean(
                    [q["centroid_discrepancy_px"]["mean"] for q in qualities])),
                "max": float(np.max(
                    [q["centroid_discrepancy_px"]["max"] for q in qualities])),
            },
            "plane_residual_mm": {
                "mean": float(np.mean(
                    [q["plane_residual_mm"]["mean"] for q in qualities])),
                "max": float(np.max(
                    [q["plane_residual_mm"]["max"] for q in qualities])),
            },
        }
    summary = reportmod.summary_dict(cfg.model_dump(), rows, quality)
    summary_path = out_dir / "summary.json"
    reportmod.write_summary(summary, summary_path)
    figures = reportmod.render_figures(
        datasets, profiles, results, rows, marker_table, out_dir
    )
    for path in [report_csv, markers_csv, summary_path, *figures]:
        _echo(f"wrote {path}")


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
