import numpy as np
import pytest

from resonant_phase import (
    Circle3D,
    DriveSchedule,
    StaticPoint,
    adiabaticity_metric,
    berry_phase_line_quadrature,
    delta_gamma_path,
    extract_geometric_phase,
    propagate,
    sample_loop,
)
from resonant_phase.errors import (
    AdiabaticityViolationError,
    InvalidArgumentError,
    LoopTooCloseError,
    RefineError,
)

GAMMA = np.array([0.0, 0.0, 0.2])
DRIVE = Circle3D([0, 0, 0.5], 1.0, [0, 0, 1], GAMMA)


def test_static_drive_has_no_geometric_phase():
    res = propagate(DriveSchedule(StaticPoint([1.0, 0.0, 0.3], GAMMA), 5.0), 2)
    assert res.extracted_gamma == 0
    assert res.leakage == 0
    np.testing.assert_allclose(res.amplitude_trajectory[:, 1], 1.0)


def test_default_steps_resolve_the_level_splitting():
    schedule = DriveSchedule(DRIVE, 100.0)
    gap = 2 * abs(np.sqrt(1.0 + (0.5 - 0.1j) ** 2))
    assert schedule.steps >= 100.0 * gap / 0.05
    assert DriveSchedule(DRIVE, 1.0).steps == 1000


def test_schedule_validation():
    with pytest.raises(InvalidArgumentError):
        DriveSchedule(DRIVE, -1.0)
    with pytest.raises(InvalidArgumentError):
        DriveSchedule(DRIVE, 10.0, steps=10)
    with pytest.raises(InvalidArgumentError):
        propagate(DriveSchedule(DRIVE, 10.0), 3)
    with pytest.raises(InvalidArgumentError):
        propagate(DriveSchedule(DRIVE, 100.0), 1, mode="fixed")


def test_adiabaticity_metric_scales_as_inverse_time():
    metrics = [adiabaticity_metric(DriveSchedule(DRIVE, T)) for T in (20, 40, 80)]
    assert metrics[0] / metrics[1] == pytest.approx(2.0, rel=1e-6)
    assert metrics[1] / metrics[2] == pytest.approx(2.0, rel=1e-6)


def test_fast_drive_is_flagged():
    res = propagate(DriveSchedule(DRIVE, 5.0), 1)
    assert not res.adiabatic
    with pytest.raises(AdiabaticityViolationError):
        extract_geometric_phase(res)


def test_slow_drive_approaches_quadrature():
    reference = berry_phase_line_quadrature(sample_loop(DRIVE, 512), 1)[1]
    res = propagate(DriveSchedule(DRIVE, 500.0), 1)
    assert res.adiabatic
    assert abs(extract_geometric_phase(res) - reference) < 1e-2


def test_fixed_and_comoving_frames_agree():
    a = propagate(DriveSchedule(DRIVE, 40.0), 1)
    b = propagate(DriveSchedule(DRIVE, 40.0), 1, mode="fixed")
    assert abs(a.extracted_gamma - b.extracted_gamma) < 1e-6
    assert b.leakage == pytest.approx(a.leakage, rel=1e-4)


def test_imaginary_energy_shift_drops_out():
    shifted = Circle3D([0, 0, 0.5], 1.0, [0, 0, 1], GAMMA, E_offset=0.3 - 0.7j)
    a = propagate(DriveSchedule(DRIVE, 40.0), 1)
    b = propagate(DriveSchedule(shifted, 40.0), 1)
    assert a.extracted_gamma == b.extracted_gamma
    c = propagate(DriveSchedule(shifted, 20.0), 1, mode="fixed")
    d = propagate(DriveSchedule(DRIVE, 20.0), 1, mode="fixed")
    assert abs(c.extracted_gamma - d.extracted_gamma) < 1e-6


def test_rk4_is_fourth_order():
    reference = propagate(DriveSchedule(DRIVE, 10.0, steps=16000), 1).extracted_gamma
    errs = [abs(propagate(DriveSchedule(DRIVE, 10.0, steps=n), 1).extracted_gamma - reference)
            for n in (1000, 2000)]
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.1)


def test_kind_two_drive():
    loop = Circle3D([0.1, 0.01, 0.004], 0.04, [0.3, 1, 0.2], GAMMA)
    delta = delta_gamma_path(sample_loop(loop, 512))
    # the level that ends up decaying more slowly is followed adiabatically
    res = propagate(DriveSchedule(loop, 1000.0), 2)
    assert abs(extract_geometric_phase(res) + delta) < 2e-2
    # the other one is overtaken by its growing partner
    with pytest.raises(AdiabaticityViolationError):
        extract_geometric_phase(propagate(DriveSchedule(loop, 1000.0), 1))


def test_too_coarse_steps_raise():
    with pytest.raises(RefineError):
        propagate(DriveSchedule(DRIVE, 1000.0, steps=1000), 1)


def test_drive_through_locus_is_rejected():
    with pytest.raises(LoopTooCloseError):
        propagate(DriveSchedule(Circle3D([0, 0, 0], 0.1, [0, 0, 1], GAMMA), 10.0), 1)
