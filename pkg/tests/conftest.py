"""Shared fixtures: canonical subjects, rigs, and cached simulated sessions.

Session-scoped so the expensive forward optics run once; tests must treat
these datasets as read-only.
"""
from __future__ import annotations

import numpy as np
import pytest

from slipgaze import (
    EyeParams,
    NoiseModel,
    ProtocolSettings,
    Scenario,
    SlippageModel,
    Subject,
    build_default_rig,
    calibrate_dataset,
    simulate_session,
)

QUIET = Scenario(
    subject_count=1,
    rng_seed=11,
    noise=NoiseModel(0.0, 0.0, 0.0),
    slippage=SlippageModel(0.0, 0.0, 5.0, 3.0),
    protocol=ProtocolSettings(frames_per_marker=1, test_recordings=3),
)

# One line per acceptance check, filled in by tests/test_acceptance.py and
# replayed after the run so the measured numbers are visible in one block.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def default_rig():
    return build_default_rig()


@pytest.fixture(scope="session")
def kappa_subject():
    return Subject(
        0,
        EyeParams(kappa_h_deg=5.0, kappa_v_deg=1.5),
        EyeParams(kappa_h_deg=-5.0, kappa_v_deg=1.5),
        64.0,
    )


@pytest.fixture(scope="session")
def zero_kappa_subject():
    return Subject(1, EyeParams(), EyeParams(), 64.0)


@pytest.fixture(scope="session")
def nf_dataset(kappa_subject, default_rig):
    """Noise-free, no-slip session for a kappa subject."""
    return simulate_session(kappa_subject, default_rig, QUIET)


@pytest.fixture(scope="session")
def nf_zero_kappa_dataset(zero_kappa_subject, default_rig):
    """Noise-free, no-slip session for a zero-kappa subject."""
    return simulate_session(zero_kappa_subject, default_rig, QUIET)


@pytest.fixture(scope="session")
def nf_profile(nf_dataset):
    return calibrate_dataset(nf_dataset)


@pytest.fixture(scope="session")
def nf_zero_kappa_profile(nf_zero_kappa_dataset):
    return calibrate_dataset(nf_zero_kappa_dataset)


@pytest.fixture(scope="session")
def noisy_dataset(kappa_subject, default_rig):
    """Default-noise, no-slip session (noise effects isolated from slip)."""
    scen = Scenario(
        subject_count=1,
        rng_seed=5,
        noise=NoiseModel(),
        slippage=SlippageModel(0.0, 0.0, 5.0, 3.0),
        protocol=ProtocolSettings(frames_per_marker=8, test_recordings=1),
    )
    return simulate_session(kappa_subject, default_rig, scen)


def add_feature_noise(dataset, noise: NoiseModel, rng: np.random.Generator):
    """New Dataset with fresh pixel noise over a noise-free session's
    features.  Equivalent to the simulator's own noise stage (noise is
    additive on clean optics), without re-running the optics."""
    from slipgaze.sim import CameraFeatures, Dataset, EyeFeatures, FeatureFrame

    frames = []
    for f in dataset.frames:
        eyes = {}
        for eye in ("left", "right"):
            cams = []
            for c in f.eyes[eye].cams:
                if c.pupil_px is None:
                    cams.append(c)
                    continue
                pupil = c.pupil_px + rng.normal(0.0, noise.pupil_sigma_px, 2)
                keep = rng.random(6) >= noise.dropout_p
                glints = tuple(
                    g + rng.normal(0.0, noise.glint_sigma_px, 2)
                    if (g is not None and k)
                    else None
                    for g, k in zip(c.glints_px, keep)
                )
                cams.append(CameraFeatures(pupil, glints))
            eyes[eye] = EyeFeatures(cams=(cams[0], cams[1]))
        frames.append(
            FeatureFrame(
                recording_id=f.recording_id,
                frame_id=f.frame_id,
                marker_px=f.marker_px,
                eyes=eyes,
            )
        )
    return Dataset(
        scenario=dataset.scenario,
        rig=dataset.rig,
        subject_id=dataset.subject_id,
        frames=frames,
        truth_frames=dataset.truth_frames,
        truth_recordings=dataset.truth_recordings,
        truth_subject=dataset.truth_subject,
    )
