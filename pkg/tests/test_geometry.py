import numpy as np
import pytest

from loops import random_loop
from resonant_phase import (
    Circle3D,
    ParameterPoint,
    Parametric,
    PathLabel,
    PolyPath,
    StaticPoint,
    classify_path,
    degeneracy_residual,
    diabolical_circle,
    linking_number,
    sample_loop,
    winding_number,
)
from resonant_phase.errors import (
    AmbiguousCrossingError,
    InvalidArgumentError,
    InvalidSpecError,
    LocusDegenerateError,
    LoopTooCloseError,
    WindingUndefinedError,
)

Z = np.array([0.0, 0.0, 1.0])


def test_degeneracy_residual_vanishes_on_circle():
    for t in np.linspace(0, 2 * np.pi, 7):
        res = degeneracy_residual(ParameterPoint([0.5 * np.cos(t), 0.5 * np.sin(t), 0], Z))
        assert res == pytest.approx((0.0, 0.0), abs=1e-15)
    assert degeneracy_residual(ParameterPoint([1, 0, 0], Z)) == pytest.approx((0.75, 0.0))


def test_diabolical_circle_and_gamma_zero():
    c = diabolical_circle([0, 0, 2])
    assert c.radius == 1.0
    np.testing.assert_allclose(c.plane_normal, Z)
    with pytest.raises(LocusDegenerateError):
        diabolical_circle([0, 0, 0])


def test_circle_orientation_and_velocity():
    spec = Circle3D([0, 0, 1], 2.0, Z, Z)
    t = np.linspace(0, 1, 9)
    pos = spec.position(t)
    np.testing.assert_allclose(np.linalg.norm(pos[:, :2], axis=1), 2.0)
    np.testing.assert_allclose(pos[:, 2], 1.0)
    h = 1e-6
    fd = (spec.position(t + h) - spec.position(t - h)) / (2 * h)
    np.testing.assert_allclose(spec.velocity(t), fd, atol=1e-6)


@pytest.mark.parametrize("N", [16, 64, 512])
def test_equatorial_winding_is_resolution_independent(N):
    cls = classify_path(sample_loop(Circle3D([0, 0, 0], 2.0, Z, Z), N))
    assert (cls.winding, cls.linking, cls.label) == (1, 0, PathLabel.KIND_I)


def test_meridian_loop_is_kind_two():
    cls = classify_path(sample_loop(Circle3D([0.5, 0, 0], 0.2, [0, 1, 0], Z), 256))
    assert cls.winding == 0 and abs(cls.linking) == 1
    assert cls.label is PathLabel.KIND_II


def test_double_turn_and_reversal():
    spec = Circle3D([0, 0, 0.3], 1.0, Z, Z, turns=2)
    loop = sample_loop(spec, 256)
    assert winding_number(loop) == 2
    assert winding_number(loop.reversed()) == -2


def test_mixed_loop():
    # a PolyPath that winds the axis once while threading the circle
    verts = [[0.3, 0, -0.5], [0.3, 0, 0.5], [0.8, 0, 0.5], [0.8, 0, 0.2],
             [0, 0.8, 0.2], [-0.8, 0, 0.2], [0, -0.8, 0.2], [0.8, 0, 0.2],
             [0.8, 0, -0.5], [0.3, 0, -0.5]]
    cls = classify_path(sample_loop(PolyPath(verts, Z), 2048))
    assert cls.winding == 1 and abs(cls.linking) == 1
    assert cls.label is PathLabel.MIXED


@pytest.mark.parametrize("kind", ["trivial", "kind1", "kind2"])
def test_classification_invariant_under_roll_resample_and_perturbation(kind):
    rng = np.random.default_rng(17)
    for _ in range(5):
        spec = random_loop(kind, rng)
        loop = sample_loop(spec, 512)
        base = classify_path(loop)
        assert classify_path(loop.rolled(int(rng.integers(1, 512)))) == base
        assert classify_path(sample_loop(spec, 1024)) == base
        rev = classify_path(loop.reversed())
        assert (rev.winding, rev.linking) == (-base.winding, -base.linking)
        bumped = Circle3D(spec.center + 0.01 * rng.normal(size=3), spec.radius,
                          spec.normal + 0.01 * rng.normal(size=3), spec.gamma, turns=spec.turns)
        assert classify_path(sample_loop(bumped, 512)) == base


def test_loop_too_close_reports_parameter():
    with pytest.raises(LoopTooCloseError) as info:
        sample_loop(Circle3D([0, 0, 0], 0.5, Z, Z), 64)
    assert info.value.distance < 1e-12
    # passes within 0.01 of the circle only at one point
    with pytest.raises(LoopTooCloseError):
        sample_loop(Circle3D([0.5, 0, 0.21], 0.2, [0, 1, 0], Z), 64, min_dist=0.02)
    sample_loop(Circle3D([0.5, 0, 0.21], 0.2, [0, 1, 0], Z), 64, min_dist=0.005)


def test_axis_crossing_has_no_winding():
    loop = sample_loop(Circle3D([0, 0, -2], 1.0, [0, 1, 0], Z), 64)
    with pytest.raises(WindingUndefinedError):
        winding_number(loop)


def test_ambiguous_crossing():
    # a polygon edge crossing the plane exactly on the circle
    verts = [[0.5, 0, -0.3], [0.5, 0, 0.3], [1.5, 0, 0.3], [1.5, 0, -0.3], [0.5, 0, -0.3]]
    loop = sample_loop(PolyPath(verts, Z), 8, min_dist=1e-300)
    with pytest.raises(AmbiguousCrossingError):
        linking_number(loop)


def test_polypath_and_parametric_agree_with_circle():
    theta = np.linspace(0, 2 * np.pi, 65)
    pts = np.column_stack([1.5 * np.cos(theta), 1.5 * np.sin(theta), 0.2 + 0 * theta])
    pts[-1] = pts[0]
    poly = classify_path(sample_loop(PolyPath(pts, Z), 512))
    para_spec = Parametric(pts, Z)
    para = classify_path(sample_loop(para_spec, 512))
    assert poly == para
    assert poly.winding == 1
    np.testing.assert_allclose(para_spec.position(np.array([0.25]))[0], [0, 1.5, 0.2], atol=1e-4)


def test_invalid_specs():
    with pytest.raises(InvalidSpecError):
        PolyPath([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], Z)  # not closed
    with pytest.raises(InvalidSpecError):
        Circle3D([0, 0, 0], -1.0, Z, Z)
    with pytest.raises(InvalidArgumentError):
        sample_loop(Circle3D([0, 0, 0], 1.0, Z, Z), 4)


def test_static_point_samples_constant_path():
    loop = sample_loop(StaticPoint([1.0, 0.0, 0.0], Z), 16)
    np.testing.assert_allclose(loop.R, np.tile([1.0, 0, 0], (16, 1)))
