"""Report generation: fixed-schema CSV tables, a machine-readable summary,
and diagnostic figures rendered straight to files.

Everything here is deterministic: rows are emitted in (subject, recording)
order, floats are formatted with a fixed rule, and figures are rendered
through the Agg canvas with the Software metadata stripped so identical
runs produce byte-identical files.
"""
from __future__ import annotations

import json
import math

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .dataio import atomic_write_text
from .errors import DegenerateFeatures, TooFewGlints
from .estimate import camera_plane, glint_centroid, optical_axis_frame

EYES = ("left", "right")

REPORT_COLUMNS = (
    "subject_id",
    "recording_id",
    "n_frames",
    "offset_mean_left_deg",
    "offset_sd_left_deg",
    "offset_mean_right_deg",
    "offset_sd_right_deg",
    "offset_mean_bino_deg",
    "offset_sd_bino_deg",
    "center_err_mean_x_mm",
    "center_err_sd_x_mm",
    "center_err_mean_y_mm",
    "center_err_sd_y_mm",
    "center_err_mean_z_mm",
    "center_err_sd_z_mm",
)

MARKER_COLUMNS = (
    "subject_id",
    "recording_id",
    "marker_u",
    "marker_v",
    "n_frames",
    "offset_mean_left_deg",
    "offset_mean_right_deg",
    "offset_mean_bino_deg",
)

FIGURE_DPI = 120


def _fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return ""
    return f"{v:.9g}"


def _row_values(row) -> list:
    rec = "all" if row.recording_id is None else str(row.recording_id)
    vals = [str(row.subject_id), rec, str(row.n_frames)]
    for eye in ("left", "right", "bino"):
        vals.append(_fmt(row.offset_mean_deg[eye]))
        vals.append(_fmt(row.offset_sd_deg[eye]))
    for i in range(3):
        vals.append(_fmt(row.center_err_mean_mm[i]))
        vals.append(_fmt(row.center_err_sd_mm[i]))
    return vals


def rows_to_csv(rows) -> str:
    lines = [",".join(REPORT_COLUMNS)]
    for row in rows:
        lines.append(",".join(_row_values(row)))
    return "\n".join(lines) + "\n"


def marker_rows(subject_id: int, frames) -> list:
    """Per-marker mean offsets for one subject's evaluated frames."""
    keys = sorted(
        {(f.recording_id, float(f.marker_px[0]), float(f.marker_px[1])) for f in frames}
    )
    out = []
    for rec, mu, mv in keys:
        group = [
            f
            for f in frames
            if f.recording_id == rec
            and float(f.marker_px[0]) == mu
            and float(f.marker_px[1]) == mv
        ]
        entry = {
            "subject_id": subject_id,
            "recording_id": rec,
            "marker_u": mu,
            "marker_v": mv,
            "n_frames": len(group),
        }
        for key in ("left", "right", "bino"):
            vals = [f.offsets_deg[key] for f in group if f.offsets_deg[key] is not None]
            entry[f"offset_mean_{key}_deg"] = float(np.mean(vals)) if vals else None
        out.append(entry)
    return out


def markers_to_csv(rows) -> str:
    lines = [",".join(MARKER_COLUMNS)]
    for r in rows:
        lines.append(
            ",".join(
                [
                    str(r["subject_id"]),
                    str(r["recording_id"]),
                    _fmt(r["marker_u"]),
                    _fmt(r["marker_v"]),
                    str(r["n_frames"]),
                    _fmt(r["offset_mean_left_deg"]),
                    _fmt(r["offset_mean_right_deg"]),
                    _fmt(r["offset_mean_bino_deg"]),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def measure_feature_quality(dataset, max_frames: int = 200) -> dict:
    """Measured per-run diagnostics: the pixel discrepancy between the
    glint centroid and the exact camera-aligned glint, and the distance of
    the true optical axis from each estimated camera plane."""
    if not dataset.has_truth:
        return {}
    discrepancies = []
    residuals = []
    step = max(1, len(dataset.frames) // max_frames)
    for frame in dataset.frames[::step]:
        truth = dataset.truth_frames[frame.frame_id]
        for eye in EYES:
            feats = frame.eyes[eye]
            etruth = truth.eyes[eye]
            side = dataset.rig.side(eye)
            for ci, cam_feats in enumerate(feats.cams):
                cg = etruth.cg_px[ci]
                if cg is None or cam_feats.pupil_px is None:
                    continue
                try:
                    centroid = glint_centroid(cam_feats.glints_px)
                    plane = camera_plane(
                        cam_feats.pupil_px, centroid, side.cameras[ci]
                    )
                except (TooFewGlints, DegenerateFeatures):
                    continue
                discrepancies.append(float(np.linalg.norm(centroid - cg)))
                a, b = etruth.axis.point, etruth.axis.point + 20.0 * etruth.axis.direction
                residuals.append(
                    max(
                        abs(float(plane.signed_distance(a))),
                        abs(float(plane.signed_distance(b))),
                    )
                )
    if not discrepancies:
        return {}
    return {
        "centroid_discrepancy_px": {
            "mean": float(np.mean(discrepancies)),
            "max": float(np.max(discrepancies)),
        },
        "plane_residual_mm": {
            "mean": float(np.mean(residuals)),
            "max": float(np.max(residuals)),
        },
    }


def summary_dict(config_dump: dict, rows, quality: dict) -> dict:
    agg = [r for r in rows if r.recording_id is None]
    pooled = {}
    for key in ("left", "right", "bino"):
        vals = [r.offset_mean_deg[key] for r in agg if not math.isnan(r.offset_mean_deg[key])]
        pooled[key] = {
            "mean_deg": float(np.mean(vals)) if vals else None,
            "max_deg": float(np.max(vals)) if vals else None,
        }
    center = {}
    for i, axis in enumerate(("x", "y", "z")):
        vals = [float(r.center_err_mean_mm[i]) for r in agg
                if not math.isnan(r.center_err_mean_mm[i])]
        center[axis] = {"mean_mm": float(np.mean(vals)) if vals else None}
    return {
        "schema_version": 1,
        "config": config_dump,
        "subjects": len(agg),
        "angular_offset": pooled,
        "center_error": center,
        **quality,
    }


def write_summary(summary: dict, path) -> None:
    atomic_write_text(path, json.dumps(summary, sort_keys=True, indent=2) + "\n")


def _new_fig(width=6.4, height=4.8) -> Figure:
    fig = Figure(figsize=(width, height), dpi=FIGURE_DPI)
    FigureCanvasAgg(fig)
    return fig


def _save(fig: Figure, path) -> None:
    fig.savefig(path, metadata={"Software": None})


def distance_model_samples(dataset, profile, eye: str) -> tuple:
    """(tan^2 theta, L) pairs from the calibration recording under the
    fitted profile, for plotting the linear distance model."""
    cal = profile.eye(eye)
    xs, ls = [], []
    for frame in dataset.recording(0):
        try:
            obs = optical_axis_frame(frame, eye, dataset.rig)
        except (DegenerateFeatures, TooFewGlints):
            continue
        xs.append(math.tan(obs.theta_rad) ** 2)
        ls.append(float(np.linalg.norm(cal.e_calib - obs.g2)))
    return np.asarray(xs), np.asarray(ls)


def fig_distance_model(dataset, profile, path) -> None:
    fig = _new_fig(8.0, 4.0)
    for idx, eye in enumerate(EYES):
        ax = fig.add_subplot(1, 2, idx + 1)
        x, ell = distance_model_samples(dataset, profile, eye)
        cal = profile.eye(eye)
        ax.plot(x, ell, ".", ms=3, alpha=0.6, label="samples")
        if len(x):
            grid = np.linspace(0.0, float(x.max()), 50)
            ax.plot(grid, cal.k1 + cal.k2 * grid, "-",
                    label=f"k1={cal.k1:.2f}, k2={cal.k2:.2f}")
        ax.set_xlabel(r"tan$^2\theta$")
        ax.set_ylabel("L (mm)")
        ax.set_title(f"{eye} eye")
        ax.legend(fontsize=8)
    fig.suptitle("Distance model: L vs tan^2 theta")
    fig.tight_layout()
    _save(fig, path)


def fig_center_errors(results, path) -> None:
    """Histograms of single-frame center error per camera-frame axis,
    pooled over subjects, recordings, and eyes."""
    errs = [
        f.center_err_cam[eye]
        for res in results
        for f in res.frames
        for eye in EYES
        if f.center_err_cam[eye] is not None
    ]
    fig = _new_fig(9.0, 3.2)
    if errs:
        arr = np.stack(errs)
        for i, axis in enumerate(("x", "y", "z (depth)")):
            ax = fig.add_subplot(1, 3, i + 1)
            ax.hist(arr[:, i], bins=40, color="#4878a8")
            ax.set_title(f"center error {axis}")
            ax.set_xlabel("mm")
    fig.tight_layout()
    _save(fig, path)


def fig_marker_grid(marker_table, path) -> None:
    """Mean binocular offset per display marker, pooled over subjects."""
    pooled: dict = {}
    for r in marker_table:
        if r["offset_mean_bino_deg"] is None:
            continue
        key = (r["marker_u"], r["marker_v"])
        pooled.setdefault(key, []).append(r["offset_mean_bino_deg"])
    fig = _new_fig(6.4, 4.2)
    ax = fig.add_subplot(1, 1, 1)
    if pooled:
        us = [k[0] for k in sorted(pooled)]
        vs = [k[1] for k in sorted(pooled)]
        cs = [float(np.mean(pooled[k])) for k in sorted(pooled)]
        sc = ax.scatter(us, vs, c=cs, s=160, cmap="viridis")
        fig.colorbar(sc, ax=ax, label="mean binocular offset (deg)")
    ax.set_xlim(0, 1920)
    ax.set_ylim(1080, 0)
    ax.set_xlabel("display u (px)")
    ax.set_ylabel("display v (px)")
    ax.set_title("Offset by marker position")
    fig.tight_layout()
    _save(fig, path)


def fig_offsets_by_recording(rows, path) -> None:
    recs = sorted({r.recording_id for r in rows if r.recording_id is not None})
    fig = _new_fig(6.4, 4.0)
    ax = fig.add_subplot(1, 1, 1)
    width = 0.25
    for j, key in enumerate(("left", "right", "bino")):
        means = []
        for rec in recs:
            vals = [
                r.offset_mean_deg[key]
                for r in rows
                if r.recording_id == rec and not math.isnan(r.offset_mean_deg[key])
            ]
            means.append(float(np.mean(vals)) if vals else 0.0)
        ax.bar(
            np.arange(len(recs)) + (j - 1) * width, means, width, label=key
        )
    ax.set_xticks(np.arange(len(recs)))
    ax.set_xticklabels([str(r) for r in recs])
    ax.set_xlabel("recording")
    ax.set_ylabel("mean angular offset (deg)")
    ax.set_title("Offsets by test recording")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def render_figures(datasets, profiles, results, rows, marker_table, out_dir) -> list:
    """Write all report figures; returns the created paths."""
    out = []
    p = out_dir / "fig_distance_model.png"
    fig_distance_model(datasets[0], profiles[0], p)
    out.append(p)
    p = out_dir / "fig_center_errors.png"
    fig_center_errors(results, p)
    out.append(p)
    p = out_dir / "fig_marker_grid.png"
    fig_marker_grid(marker_table, p)
    out.append(p)
    p = out_dir / "fig_offsets_by_recording.png"
    fig_offsets_by_recording(rows, p)
    out.append(p)
    return out
