import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from slipgaze import (
    DegenerateTarget,
    EyeParams,
    EyePose,
    NoSolution,
    OffSurface,
)
from slipgaze.eyemodel import (
    camera_coincident_glint,
    cornea_center,
    glint_point,
    glint_points,
    optical_axis,
    pose_fixating,
    pupil_center,
    surface_normal,
    surface_residual,
    to_local,
    virtual_pupil_image,
    virtual_pupil_trace,
    visual_axis,
)
from slipgaze.geom import (
    angle_between,
    look_at_camera,
    point_line_distance,
    project,
    unit,
)

DEFAULT = EyeParams()
REST = EyePose(np.zeros(3), Rotation.identity())


def random_pose(rng):
    E = rng.normal(size=3) * 3.0
    rot = Rotation.from_rotvec(rng.normal(size=3) * 0.3)
    return EyePose(E, rot)


def random_params(rng, kappa=True):
    r = rng.uniform(7.2, 8.4)
    q = rng.uniform(-0.45, -0.15)
    apex = r / math.sqrt(q + 1.0)
    return EyeParams(
        r=r,
        q=q,
        t=13.5 - apex,
        d_pupil=apex - 3.6,
        kappa_h_deg=rng.uniform(-6, 6) if kappa else 0.0,
        kappa_v_deg=rng.uniform(-2.5, 2.5) if kappa else 0.0,
    )


class TestEyeParams:
    def test_default_apex_height(self):
        # r / sqrt(Q + 1) = 7.8 / sqrt(0.7)
        assert DEFAULT.apex_height == pytest.approx(9.3228, abs=5e-4)
        assert DEFAULT.apex_height == 7.8 / math.sqrt(0.7)

    def test_apex_lies_on_surface(self):
        apex_world = np.array([0.0, 0.0, DEFAULT.t + DEFAULT.apex_height])
        assert abs(surface_residual(DEFAULT, REST, apex_world)) < 1e-9

    def test_validation(self):
        with pytest.raises(ValueError):
            EyeParams(r=-1.0)
        with pytest.raises(ValueError):
            EyeParams(q=-1.0)
        with pytest.raises(ValueError):
            EyeParams(t=0.0)
        with pytest.raises(ValueError):
            EyeParams(n_refr=0.99)
        with pytest.raises(ValueError):
            EyeParams(d_pupil=0.0)
        with pytest.raises(ValueError):
            EyeParams(d_pupil=9.5)  # beyond the apex

    def test_no_refraction_limit_is_constructible(self):
        assert EyeParams(n_refr=1.0).n_refr == 1.0

    def test_kappa_angle_single_component(self):
        assert EyeParams(kappa_h_deg=5.0).kappa_angle_deg == pytest.approx(
            5.0, abs=1e-9
        )
        assert EyeParams(kappa_v_deg=2.0).kappa_angle_deg == pytest.approx(
            2.0, abs=1e-9
        )


class TestSurface:
    def test_sphere_when_q_zero(self):
        sphere = EyeParams(q=0.0, t=5.7, d_pupil=4.2)
        rng = np.random.default_rng(0)
        pose = random_pose(rng)
        C = cornea_center(sphere, pose)
        for _ in range(50):
            p = C + sphere.r * unit(rng.normal(size=3))
            assert abs(surface_residual(sphere, pose, p)) < 1e-9

    def test_residual_sign(self):
        C = cornea_center(DEFAULT, REST)
        assert surface_residual(DEFAULT, REST, C) < 0
        assert surface_residual(DEFAULT, REST, C + [50.0, 0, 0]) > 0

    def test_normal_at_apex_is_optical_direction(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            pose = random_pose(rng)
            apex = cornea_center(DEFAULT, pose) + DEFAULT.apex_height * pose.optical_dir
            n = surface_normal(DEFAULT, pose, apex)
            assert np.linalg.norm(n - pose.optical_dir) < 1e-9

    def test_normal_matches_finite_difference_gradient(self):
        rng = np.random.default_rng(2)
        params = random_params(rng)
        pose = random_pose(rng)
        apx = params.apex_height
        for _ in range(30):
            # random point on the anterior cap via the chart
            a, b = rng.uniform(-0.7, 0.7, 2)
            if a * a + b * b >= 0.9:
                continue
            local = np.array(
                [params.r * a, params.r * b, apx * math.sqrt(1 - a * a - b * b)]
            )
            p = cornea_center(params, pose) + pose.orientation.apply(local)
            n = surface_normal(params, pose, p)
            h = 1e-6
            grad = np.array(
                [
                    (
                        surface_residual(params, pose, p + h * e)
                        - surface_residual(params, pose, p - h * e)
                    )
                    / (2 * h)
                    for e in np.eye(3)
                ]
            )
            assert np.linalg.norm(n - unit(grad)) < 1e-6
            assert abs(np.linalg.norm(n) - 1.0) < 1e-12

    def test_normal_requires_point_on_surface(self):
        with pytest.raises(OffSurface):
            surface_normal(DEFAULT, REST, np.array([0.0, 0.0, 100.0]))

    def test_sphere_normal_is_radial(self):
        sphere = EyeParams(q=0.0, t=5.7, d_pupil=4.2)
        rng = np.random.default_rng(3)
        pose = random_pose(rng)
        C = cornea_center(sphere, pose)
        for _ in range(20):
            d = unit(rng.normal(size=3))
            p = C + sphere.r * d
            assert np.linalg.norm(surface_normal(sphere, pose, p) - d) < 1e-7


class TestAxes:
    def test_axes_coincide_without_kappa(self):
        rng = np.random.default_rng(4)
        pose = random_pose(rng)
        oa = optical_axis(DEFAULT, pose)
        va = visual_axis(DEFAULT, pose)
        assert angle_between(oa.direction, va.direction) < 1e-12

    def test_visual_optical_angle_equals_composed_kappa(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            params = random_params(rng)
            pose = random_pose(rng)
            a = angle_between(
                optical_axis(params, pose).direction,
                visual_axis(params, pose).direction,
            )
            assert math.degrees(a) == pytest.approx(
                params.kappa_angle_deg, abs=1e-9
            )

    def test_both_axes_contain_cornea_center(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            params = random_params(rng)
            pose = random_pose(rng)
            C = cornea_center(params, pose)
            assert point_line_distance(C, optical_axis(params, pose)) < 1e-9
            assert point_line_distance(C, visual_axis(params, pose)) < 1e-9

    def test_optical_axis_contains_rotation_center(self):
        rng = np.random.default_rng(7)
        pose = random_pose(rng)
        assert (
            point_line_distance(pose.rotation_center, optical_axis(DEFAULT, pose))
            < 1e-12
        )

    def test_pupil_center_on_axis_at_depth(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            params = random_params(rng)
            pose = random_pose(rng)
            pc = pupil_center(params, pose)
            want = cornea_center(params, pose) + params.d_pupil * pose.optical_dir
            assert np.linalg.norm(pc - want) < 1e-12


class TestPoseFixating:
    def test_zero_kappa_straight_ahead_is_identity(self):
        pose = pose_fixating(DEFAULT, np.zeros(3), np.array([0.0, 0.0, 500.0]))
        assert pose.orientation.magnitude() < 1e-12
        assert np.allclose(pose.rotation_center, 0.0)

    def test_zero_kappa_azimuth_target(self):
        target = 500.0 * np.array(
            [math.sin(math.radians(10.0)), 0.0, math.cos(math.radians(10.0))]
        )
        pose = pose_fixating(DEFAULT, np.zeros(3), target)
        a = math.degrees(angle_between(pose.optical_dir, [0, 0, 1.0]))
        assert a == pytest.approx(10.0, abs=1e-9)
        # for kappa = 0 the visual axis is the optical axis and hits the target
        assert point_line_distance(target, optical_axis(DEFAULT, pose)) < 1e-9

    def test_visual_axis_passes_through_target(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            params = random_params(rng)
            E = rng.normal(size=3) * 5.0
            target = E + rng.uniform(200, 1500) * unit(
                rng.normal(size=3) * 0.3 + [0, 0, 1.0]
            )
            pose = pose_fixating(params, E, target)
            va = visual_axis(params, pose)
            assert point_line_distance(target, va) < 1e-6
            assert np.dot(target - va.point, va.direction) > 0  # pointing at it
            assert np.allclose(pose.rotation_center, E)

    def test_target_inside_eye_rejected(self):
        with pytest.raises(DegenerateTarget):
            pose_fixating(DEFAULT, np.zeros(3), np.zeros(3))
        with pytest.raises(DegenerateTarget):
            pose_fixating(DEFAULT, np.zeros(3), np.array([0.0, 0.0, 0.5 * DEFAULT.t]))


class TestGlints:
    def test_led_at_camera_on_axis_reflects_at_apex(self):
        cam = np.array([0.0, 0.0, 300.0])
        g = glint_point(DEFAULT, REST, cam, cam)
        apex = np.array([0.0, 0.0, DEFAULT.t + DEFAULT.apex_height])
        assert np.linalg.norm(g.position - apex) < 1e-8
        assert np.linalg.norm(g.normal - [0, 0, 1.0]) < 1e-8

    def test_reflection_law_holds(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            params = random_params(rng)
            pose = random_pose(rng)
            C = cornea_center(params, pose)
            fwd = pose.optical_dir
            cam = C + 35.0 * unit(fwd + rng.normal(size=3) * 0.25)
            led = cam + rng.normal(size=3) * 4.0
            g = glint_point(params, pose, led, cam)
            d_in = unit(g.position - led)
            reflected = d_in - 2.0 * np.dot(d_in, g.normal) * g.normal
            assert np.linalg.norm(reflected - unit(cam - g.position)) < 1e-8

    def test_glint_lies_on_surface(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            params = random_params(rng)
            pose = random_pose(rng)
            C = cornea_center(params, pose)
            cam = C + 35.0 * unit(pose.optical_dir + rng.normal(size=3) * 0.2)
            led = cam + rng.normal(size=3) * 3.0
            g = glint_point(params, pose, led, cam)
            assert abs(surface_residual(params, pose, g.position)) < 1e-8

    def test_sphere_glint_coplanar_with_sources(self):
        # for a sphere, symmetry confines the reflection point to the plane
        # through the center, the LED, and the camera
        sphere = EyeParams(q=0.0, t=5.7, d_pupil=4.2)
        rng = np.random.default_rng(12)
        for _ in range(20):
            pose = random_pose(rng)
            C = cornea_center(sphere, pose)
            cam = C + 35.0 * unit(pose.optical_dir + rng.normal(size=3) * 0.2)
            led = cam + rng.normal(size=3) * 3.0
            g = glint_point(sphere, pose, led, cam)
            n_plane = unit(np.cross(led - C, cam - C))
            assert abs(np.dot(g.position - C, n_plane)) < 1e-8

    def test_batch_matches_individual_solves(self):
        rng = np.random.default_rng(13)
        params = random_params(rng)
        pose = random_pose(rng)
        C = cornea_center(params, pose)
        cam = C + 35.0 * unit(pose.optical_dir + [0.3, -0.2, 0.0])
        leds = [cam + rng.normal(size=3) * 2.5 for _ in range(6)]
        batch = glint_points(params, pose, np.stack(leds), cam)
        for led, g in zip(leds, batch):
            single = glint_point(params, pose, led, cam)
            assert np.linalg.norm(g.position - single.position) < 1e-10

    def test_source_inside_cornea_rejected(self):
        C = cornea_center(DEFAULT, REST)
        with pytest.raises(ValueError):
            glint_point(DEFAULT, REST, C, C + [0.0, 0.0, 300.0])
        with pytest.raises(ValueError):
            glint_point(DEFAULT, REST, C + [0.0, 0.0, 300.0], C)

    def test_fermat_path_beats_dense_surface_grid(self):
        # global-minimality check: no chart node gives a shorter LED->S->cam
        # path than the solver's reflection point
        params = DEFAULT
        pose = EyePose(
            np.array([1.0, -2.0, 0.5]),
            Rotation.from_rotvec([0.1, -0.2, 0.05]),
        )
        C = cornea_center(params, pose)
        cam_w = C + 35.0 * unit(pose.optical_dir + [0.35, -0.25, 0.0])
        led_w = cam_w + np.array([2.0, 3.0, -1.0])
        g = glint_point(params, pose, led_w, cam_w)

        led = to_local(params, pose, led_w)
        cam = to_local(params, pose, cam_w)
        r, apx = params.r, params.apex_height
        n = 2000
        a, b = np.meshgrid(
            np.linspace(-0.999, 0.999, n), np.linspace(-0.999, 0.999, n)
        )
        w2 = 1.0 - a * a - b * b
        mask = w2 > 0.0
        a, b, w2 = a[mask], b[mask], w2[mask]
        z = apx * np.sqrt(w2)
        path = np.sqrt(
            (r * a - led[0]) ** 2 + (r * b - led[1]) ** 2 + (z - led[2]) ** 2
        ) + np.sqrt(
            (r * a - cam[0]) ** 2 + (r * b - cam[1]) ** 2 + (z - cam[2]) ** 2
        )
        g_local = to_local(params, pose, g.position)
        path_g = np.linalg.norm(g_local - led) + np.linalg.norm(g_local - cam)
        assert path_g <= float(path.min()) + 1e-9


class TestCameraCoincidentGlint:
    def test_on_axis_camera_sees_apex(self):
        cam = np.array([0.0, 0.0, 300.0])
        g = camera_coincident_glint(DEFAULT, REST, cam)
        apex = np.array([0.0, 0.0, DEFAULT.t + DEFAULT.apex_height])
        assert np.linalg.norm(g.position - apex) < 1e-10

    def test_normal_line_passes_through_camera(self):
        rng = np.random.default_rng(14)
        for _ in range(50):
            params = random_params(rng)
            pose = random_pose(rng)
            C = cornea_center(params, pose)
            cam = C + 35.0 * unit(pose.optical_dir + rng.normal(size=3) * 0.25)
            g = camera_coincident_glint(params, pose, cam)
            # residual of cam against the normal line at the glint
            v = cam - g.position
            assert np.linalg.norm(np.cross(v, g.normal)) / np.linalg.norm(v) * min(
                np.linalg.norm(v), 1.0
            ) < 1e-9
            assert np.linalg.norm(np.cross(unit(v), g.normal)) < 1e-9

    def test_agrees_with_fermat_route(self):
        # an LED placed at the camera produces the same glint through the
        # independent Fermat minimization
        rng = np.random.default_rng(15)
        for _ in range(50):
            params = random_params(rng)
            pose = random_pose(rng)
            C = cornea_center(params, pose)
            cam = C + 35.0 * unit(pose.optical_dir + rng.normal(size=3) * 0.25)
            g1 = camera_coincident_glint(params, pose, cam)
            g2 = glint_point(params, pose, cam, cam)
            assert np.linalg.norm(g1.position - g2.position) < 1e-8

    def test_sphere_closed_form(self):
        sphere = EyeParams(q=0.0, t=5.7, d_pupil=4.2)
        rng = np.random.default_rng(16)
        for _ in range(20):
            pose = random_pose(rng)
            C = cornea_center(sphere, pose)
            cam = C + 40.0 * unit(pose.optical_dir + rng.normal(size=3) * 0.3)
            g = camera_coincident_glint(sphere, pose, cam)
            closed = C + sphere.r * unit(cam - C)
            assert np.linalg.norm(g.position - closed) < 1e-7

    def test_camera_behind_apex_on_axis_rejected(self):
        with pytest.raises(NoSolution):
            camera_coincident_glint(DEFAULT, REST, np.array([0.0, 0.0, -300.0]))


def eye_camera(params, pose, offset):
    """A rig-like 800 px camera 35 mm from C, looking at C."""
    C = cornea_center(params, pose)
    center = C + 35.0 * unit(pose.optical_dir + np.asarray(offset, dtype=float))
    return look_at_camera(center, C, 800.0, 800.0, 320.0, 240.0, 640, 480)


class TestVirtualPupil:
    def test_on_axis_camera_sees_apex_pixel(self):
        params, pose = DEFAULT, REST
        cam = look_at_camera(
            [0.0, 0.0, 300.0], [0.0, 0.0, 0.0], 800, 800, 320, 240, 640, 480
        )
        apex = np.array([0.0, 0.0, params.t + params.apex_height])
        px = virtual_pupil_image(params, pose, cam)
        assert np.linalg.norm(px - project(cam, apex)) < 1e-9

    def test_unity_index_means_no_refraction(self):
        params = EyeParams(n_refr=1.0)
        rng = np.random.default_rng(17)
        for _ in range(10):
            pose = random_pose(rng)
            cam = eye_camera(params, pose, rng.normal(size=3) * 0.3)
            px = virtual_pupil_image(params, pose, cam)
            want = project(cam, pupil_center(params, pose))
            assert np.linalg.norm(px - want) < 1e-6

    def test_snell_residual_at_solution(self):
        rng = np.random.default_rng(18)
        for _ in range(30):
            params = random_params(rng)
            pose = random_pose(rng)
            cam = eye_camera(params, pose, rng.normal(size=3) * 0.3)
            tr = virtual_pupil_trace(params, pose, cam)
            assert abs(tr.snell_residual(params.n_refr)) < 1e-9
            assert abs(surface_residual(params, pose, tr.surface_point.position)) < 1e-7

    def test_chief_ray_stays_meridional(self):
        # pupil center, refraction point, camera center and the optical axis
        # share one plane
        rng = np.random.default_rng(19)
        for _ in range(20):
            params = random_params(rng)
            pose = random_pose(rng)
            cam = eye_camera(params, pose, rng.normal(size=3) * 0.3)
            tr = virtual_pupil_trace(params, pose, cam)
            C = cornea_center(params, pose)
            n_plane = unit(np.cross(pose.optical_dir, cam.center - C))
            assert abs(np.dot(tr.surface_point.position - C, n_plane)) < 1e-9

    def test_refraction_bends_toward_the_normal_outside(self):
        rng = np.random.default_rng(20)
        params = random_params(rng)
        pose = random_pose(rng)
        cam = eye_camera(params, pose, [0.4, -0.3, 0.0])
        tr = virtual_pupil_trace(params, pose, cam)
        n = tr.surface_point.normal
        # denser -> rarer: the outside angle exceeds the inside angle
        th_in = angle_between(tr.dir_inside, n)
        th_out = angle_between(tr.dir_outside, n)
        assert th_out > th_in

    def test_pixel_against_exhaustive_angle_sweep(self):
        # independent oracle: trace 1e5 meridional launch angles with a
        # vector-form Snell implementation, pick the ray that best hits the
        # camera center, and compare pixels
        params = EyeParams()
        pose = EyePose(
            np.array([0.5, -1.0, 0.25]), Rotation.from_rotvec([0.05, -0.1, 0.02])
        )
        cam = eye_camera(params, pose, [0.45, -0.35, 0.1])
        got = virtual_pupil_image(params, pose, cam)

        K = to_local(params, pose, cam.center)
        xi_k = math.hypot(K[0], K[1])
        e_xi = np.array([K[0] / xi_k, K[1] / xi_k, 0.0])
        k2 = np.array([xi_k, K[2]])
        p, r2, zp, eta = params.p, params.r**2, params.d_pupil, params.n_refr

        def sweep(phi):
            d = np.stack([np.sin(phi), np.cos(phi)], axis=1)
            aq = d[:, 0] ** 2 + p * d[:, 1] ** 2
            bq = 2.0 * p * zp * d[:, 1]
            cq = p * zp * zp - r2
            disc = bq * bq - 4.0 * aq * cq
            ok = disc > 0
            s = np.full_like(phi, np.nan)
            s[ok] = (-bq[ok] + np.sqrt(disc[ok])) / (2.0 * aq[ok])
            S = np.stack([s * d[:, 0], zp + s * d[:, 1]], axis=1)
            ok &= (s > 0) & (S[:, 1] > 0)
            nrm = np.stack([S[:, 0], p * S[:, 1]], axis=1)
            nrm /= np.linalg.norm(nrm, axis=1)[:, None]
            # vector Snell: t = eta d - (eta cos_i - cos_t) n
            ci = np.sum(d * nrm, axis=1)
            st2 = eta * eta * (1.0 - ci * ci)
            ok &= st2 < 1.0
            ct = np.sqrt(np.clip(1.0 - st2, 0.0, None))
            t = eta * d - (eta * ci - ct)[:, None] * nrm
            w = k2[None, :] - S
            ok &= np.sum(w * t, axis=1) > 0
            miss = np.abs(w[:, 0] * t[:, 1] - w[:, 1] * t[:, 0]) / np.linalg.norm(
                t, axis=1
            )
            miss[~ok] = np.inf
            return S, miss

        n = 100_000
        phi = np.linspace(1e-4, 0.98 * math.pi / 2, n)
        step = phi[1] - phi[0]
        _, miss = sweep(phi)
        i = int(np.argmin(miss))
        # refine around the coarse winner with a second dense sweep
        phi2 = np.linspace(phi[i] - 2 * step, phi[i] + 2 * step, n)
        S2, miss2 = sweep(phi2)
        j = int(np.argmin(miss2))
        assert miss2[j] < 1e-4
        S_world = (
            cornea_center(params, pose)
            + pose.orientation.apply(S2[j, 0] * e_xi + np.array([0, 0, S2[j, 1]]))
        )
        assert np.linalg.norm(project(cam, S_world) - got) < 0.01

    def test_refraction_point_between_pupil_and_camera(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            params = random_params(rng)
            pose = random_pose(rng)
            cam = eye_camera(params, pose, rng.normal(size=3) * 0.3)
            tr = virtual_pupil_trace(params, pose, cam)
            pc = pupil_center(params, pose)
            assert np.dot(tr.surface_point.position - pc, tr.dir_inside) > 0
            assert np.dot(cam.center - tr.surface_point.position, tr.dir_outside) > 0
