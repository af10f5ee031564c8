"""Gaze-mapping tests: the monocular projection with its first-order
slippage term, binocular averaging, the angular-offset metric, and the
evaluation tables, including deterministic-remount A/B runs rendered
through the forward optics."""
from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from conftest import QUIET
from slipgaze import (
    BehindVirtualCamera,
    CalibrationProfile,
    EyeCalibration,
    MissingEye,
    MissingGroundTruth,
    NoiseModel,
    SlippageTransform,
    angular_offset,
    apply_slippage,
    estimate_frame,
    evaluate,
    evaluate_detailed,
    gaze_point_bino,
    gaze_point_mono,
    marker_protocol,
    render_frame,
)
from slipgaze.sim import CameraFeatures, Dataset, EyeFeatures

K = (1000.0, 1000.0, 960.0, 540.0)


def make_profile(e_calib=(0.0, 0.0, 0.0), r=None, r_kappa=None, d_e=1000.0):
    eyes = {
        name: EyeCalibration(
            e_calib=np.asarray(e_calib, dtype=float),
            k1=7.0,
            k2=-0.9,
            r_kappa=r_kappa if r_kappa is not None else Rotation.identity(),
            diagnostics={},
        )
        for name in ("left", "right")
    }
    return CalibrationProfile(
        schema_version=1,
        eyes=eyes,
        r=r if r is not None else Rotation.identity(),
        k_virtual=K,
        d_e=d_e,
    )


class TestGazePointMono:
    def test_forward_direction_hits_the_principal_point(self):
        px = gaze_point_mono((0.0, 0.0, 1.0), (0.0, 0.0, 0.0), make_profile(), "left")
        assert np.allclose(px, (960.0, 540.0), atol=1e-12)

    def test_correction_vanishes_at_the_calibrated_center(self):
        prof = make_profile(e_calib=(1.0, 2.0, 3.0))
        d = np.array([0.1, -0.05, 1.0])
        d /= np.linalg.norm(d)
        on = gaze_point_mono(d, (1.0, 2.0, 3.0), prof, "left", correct=True)
        off = gaze_point_mono(d, (1.0, 2.0, 3.0), prof, "left", correct=False)
        assert np.array_equal(on, off)

    def test_center_shift_moves_the_pixel_first_order(self):
        prof = make_profile()
        px = gaze_point_mono((0.0, 0.0, 1.0), (2.0, 0.0, 0.0), prof, "left")
        fx, _, cx, cy = K
        assert px[0] - cx == pytest.approx(fx * 2.0 / prof.d_e, rel=1e-12)
        assert px[1] == cy

    def test_kappa_rotation_applies_to_the_axis_direction(self):
        phi = math.radians(3.0)
        prof = make_profile(r_kappa=Rotation.from_euler("y", phi))
        px = gaze_point_mono((0.0, 0.0, 1.0), (0.0, 0.0, 0.0), prof, "left")
        fx, _, cx, cy = K
        assert px[0] == pytest.approx(cx + fx * math.tan(phi), rel=1e-12)
        assert px[1] == pytest.approx(cy, abs=1e-12)

    def test_display_rotation_applies_after_the_correction(self):
        # with a zero correction term the display rotation alone steers
        # the pixel, same place the kappa rotation would send it
        phi = math.radians(3.0)
        prof = make_profile(r=Rotation.from_euler("y", phi))
        px = gaze_point_mono(
            (0.0, 0.0, 1.0), (0.0, 0.0, 0.0), prof, "left", correct=False
        )
        fx, _, cx, _ = K
        assert px[0] == pytest.approx(cx + fx * math.tan(phi), rel=1e-12)

    @pytest.mark.parametrize("direction", [(0.0, 0.0, -1.0), (1.0, 0.0, 0.0)])
    def test_non_forward_directions_rejected(self, direction):
        with pytest.raises(BehindVirtualCamera):
            gaze_point_mono(direction, (0.0, 0.0, 0.0), make_profile(), "left")


class TestGazePointBino:
    def test_is_the_component_mean(self):
        px = gaze_point_bino((100.0, 200.0), (110.0, 210.0))
        assert np.array_equal(px, (105.0, 205.0))

    @pytest.mark.parametrize("pair", [(None, (1.0, 2.0)), ((1.0, 2.0), None)])
    def test_requires_both_eyes(self, pair):
        with pytest.raises(MissingEye):
            gaze_point_bino(*pair)


class TestAngularOffset:
    def test_zero_at_equal_pixels(self):
        assert angular_offset((123.0, 456.0), (123.0, 456.0), K) == 0.0

    def test_symmetric(self):
        a, b = (100.0, 900.0), (1500.0, 50.0)
        assert angular_offset(a, b, K) == angular_offset(b, a, K)

    def test_one_degree_along_the_axis(self):
        k = (2376.1, 2376.1, 960.0, 540.0)
        px = (960.0 + 2376.1 * math.tan(math.radians(1.0)), 540.0)
        assert angular_offset(px, (960.0, 540.0), k) == pytest.approx(1.0, abs=1e-9)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            a, b, c = rng.uniform((0.0, 0.0), (1920.0, 1080.0), size=(3, 2))
            assert (
                angular_offset(a, c, K)
                <= angular_offset(a, b, K) + angular_offset(b, c, K) + 1e-9
            )

    def test_binocular_averaging_shrinks_rms_by_root_two(self):
        # i.i.d. pixel noise on the two monocular estimates halves the
        # variance of their mean
        rng = np.random.default_rng(7)
        truth = np.array([960.0, 540.0])
        left = truth + rng.normal(0.0, 10.0, size=(10_000, 2))
        right = truth + rng.normal(0.0, 10.0, size=(10_000, 2))
        mono = [angular_offset(p, truth, K) for p in np.concatenate([left, right])]
        bino = [angular_offset(p, truth, K) for p in (left + right) / 2.0]
        rms = lambda v: math.sqrt(np.mean(np.square(v)))
        assert rms(bino) / rms(mono) == pytest.approx(1.0 / math.sqrt(2.0), rel=0.05)


def break_eye(frame, eye):
    """Copy of the frame with that eye reduced to two glints per camera."""
    crippled = EyeFeatures(
        cams=tuple(
            CameraFeatures(c.pupil_px, c.glints_px[:2] + (None,) * 4)
            for c in frame.eyes[eye].cams
        )
    )
    return dataclasses.replace(frame, eyes={**frame.eyes, eye: crippled})


class TestEstimateFrame:
    def test_matches_truth_noise_free(
        self, nf_zero_kappa_dataset, nf_zero_kappa_profile
    ):
        ds, prof = nf_zero_kappa_dataset, nf_zero_kappa_profile
        for frame in ds.recording(1)[::7]:
            est = estimate_frame(frame, ds.rig, prof)
            truth_px = ds.truth_frames[frame.frame_id].gaze_px
            for px in (est.left_px, est.right_px, est.bino_px):
                assert angular_offset(px, truth_px, prof.k_virtual) < 0.1

    def test_unusable_eye_degrades_to_monocular(
        self, nf_dataset, nf_profile
    ):
        frame = break_eye(nf_dataset.recording(1)[0], "left")
        est = estimate_frame(frame, nf_dataset.rig, nf_profile)
        assert est.left_px is None
        assert est.right_px is not None
        assert est.bino_px is None
        assert est.e_now["left"] is None

    def test_batch_centers_override_the_frame_model(self, nf_dataset, nf_profile):
        frame = nf_dataset.recording(1)[4]
        centers = {
            eye: nf_profile.eye(eye).e_calib for eye in ("left", "right")
        }
        via_batch = estimate_frame(
            frame, nf_dataset.rig, nf_profile, correct=True, batch_e=centers
        )
        uncorrected = estimate_frame(
            frame, nf_dataset.rig, nf_profile, correct=False
        )
        # the correction term is zero at the calibrated centers
        assert np.allclose(via_batch.left_px, uncorrected.left_px, atol=1e-12)
        assert np.allclose(via_batch.right_px, uncorrected.right_px, atol=1e-12)
        assert via_batch.e_now["left"] is centers["left"]


def slipped_session(subject, rig, slip, markers):
    """Noise-free single-recording dataset rendered after a remount; the
    header keeps the nominal rig, as the estimators would see it."""
    frames, truths = [], {}
    rng = np.random.default_rng(0)
    slipped = apply_slippage(rig, slip)
    for i, marker in enumerate(markers):
        frame, truth = render_frame(
            subject, slipped, marker, NoiseModel(0.0, 0.0, 0.0), rng
        )
        frames.append(dataclasses.replace(frame, recording_id=1, frame_id=i))
        truths[i] = dataclasses.replace(truth, frame_id=i)
    return Dataset(
        scenario=QUIET,
        rig=rig,
        subject_id=subject.subject_id,
        frames=frames,
        truth_frames=truths,
        truth_recordings={1: slip},
        truth_subject=subject,
    )


def aggregate_row(rows):
    return next(r for r in rows if r.recording_id is None)


def pure_translation(v):
    return SlippageTransform(Rotation.identity(), np.asarray(v, dtype=float))


class TestSlippageCorrection:
    def test_two_mm_remount_is_corrected_several_fold(
        self, zero_kappa_subject, default_rig, nf_zero_kappa_profile
    ):
        _, test_markers = marker_protocol()
        ds = slipped_session(
            zero_kappa_subject, default_rig, pure_translation((2.0, 0.0, 0.0)),
            test_markers,
        )
        on = aggregate_row(evaluate(ds, nf_zero_kappa_profile, correct=True))
        off = aggregate_row(evaluate(ds, nf_zero_kappa_profile, correct=False))
        for key in ("left", "right", "bino"):
            assert on.offset_mean_deg[key] < 0.05
            assert off.offset_mean_deg[key] > 0.08
            assert off.offset_mean_deg[key] / on.offset_mean_deg[key] > 5.0

    def test_uncorrected_error_tracks_the_displacement_angle(
        self, zero_kappa_subject, default_rig, nf_zero_kappa_profile
    ):
        # a pure device translation tilts the eye-to-marker direction by
        # about atan(|tau| / d_e); uncorrected error should follow it
        _, test_markers = marker_protocol()
        subset = test_markers[::3]
        previous = 0.0
        for mag in (0.5, 1.0, 2.0, 3.0):
            ds = slipped_session(
                zero_kappa_subject, default_rig,
                pure_translation((mag, 0.0, 0.0)), subset,
            )
            row = aggregate_row(evaluate(ds, nf_zero_kappa_profile, correct=False))
            err = row.offset_mean_deg["bino"]
            expected = math.degrees(math.atan(mag / 1000.0))
            assert err > previous
            assert err == pytest.approx(expected, rel=0.25)
            previous = err


class TestEvaluate:
    def test_noise_free_rows_are_tight(self, nf_zero_kappa_dataset, nf_zero_kappa_profile):
        rows = evaluate(nf_zero_kappa_dataset, nf_zero_kappa_profile)
        assert [r.recording_id for r in rows] == [1, 2, 3, None]
        assert [r.n_frames for r in rows] == [25, 25, 25, 75]
        for row in rows:
            for key in ("left", "right", "bino"):
                assert row.offset_mean_deg[key] < 0.1
            assert np.all(row.center_err_mean_mm < 0.05)

    def test_kappa_subject_keeps_a_small_conjugation_residual(
        self, nf_dataset, nf_profile
    ):
        # kappa couples into the pose-dependent part of the mapping, so a
        # small marker-dependent residual survives even noise-free; the
        # mirrored left/right kappa partially cancels in the average
        row = aggregate_row(evaluate(nf_dataset, nf_profile))
        for key in ("left", "right", "bino"):
            assert row.offset_mean_deg[key] < 0.15
        assert row.offset_mean_deg["bino"] < row.offset_mean_deg["left"]
        assert row.offset_mean_deg["bino"] < row.offset_mean_deg["right"]

    def test_missing_truth_rejected(self, nf_dataset, nf_profile):
        stripped = dataclasses.replace(nf_dataset, truth_frames=None)
        with pytest.raises(MissingGroundTruth):
            evaluate(stripped, nf_profile)

    def test_batch_center_mode_agrees_noise_free(
        self, nf_zero_kappa_dataset, nf_zero_kappa_profile
    ):
        frame_rows = evaluate(nf_zero_kappa_dataset, nf_zero_kappa_profile)
        batch_rows = evaluate(
            nf_zero_kappa_dataset, nf_zero_kappa_profile, center_mode="batch"
        )
        a = aggregate_row(frame_rows).offset_mean_deg["bino"]
        b = aggregate_row(batch_rows).offset_mean_deg["bino"]
        assert b == pytest.approx(a, abs=0.01)

    def test_batch_centers_exposed_per_recording_and_eye(
        self, nf_zero_kappa_dataset, nf_zero_kappa_profile
    ):
        res = evaluate_detailed(nf_zero_kappa_dataset, nf_zero_kappa_profile)
        expected = {(rec, eye) for rec in (1, 2, 3) for eye in ("left", "right")}
        assert set(res.batch_centers) == expected
        first = nf_zero_kappa_dataset.recording(1)[0].frame_id
        truth = nf_zero_kappa_dataset.truth_frames[first]
        for eye in ("left", "right"):
            gap = np.linalg.norm(
                res.batch_centers[(1, eye)] - truth.eyes[eye].e_device
            )
            assert gap < 0.05

    def test_recordings_filter(self, nf_zero_kappa_dataset, nf_zero_kappa_profile):
        res = evaluate_detailed(
            nf_zero_kappa_dataset, nf_zero_kappa_profile, recordings=[2]
        )
        assert [r.recording_id for r in res.rows] == [2, None]
        assert {f.recording_id for f in res.frames} == {2}
        assert {rec for rec, _ in res.batch_centers} == {2}

    def test_correction_flag_is_recorded(
        self, nf_zero_kappa_dataset, nf_zero_kappa_profile
    ):
        on = evaluate_detailed(nf_zero_kappa_dataset, nf_zero_kappa_profile)
        off = evaluate_detailed(
            nf_zero_kappa_dataset, nf_zero_kappa_profile, correct=False
        )
        assert on.frames[0].estimate.correction_applied is True
        assert off.frames[0].estimate.correction_applied is False
