import math

import numpy as np
import pytest

from hybridrt.core import Aabb, Ray, Transform, luminance, srgb_to_linear, tone_map, transform_point, unit, vec3


def test_tone_map_fixed_points():
    assert np.array_equal(tone_map(np.zeros(3)), np.zeros(3))
    assert np.array_equal(tone_map(np.ones(3)), np.ones(3))


def test_tone_map_breakpoint():
    # Both branches evaluated at the sRGB cut 0.0031308:
    # 12.92 * 0.0031308 = 0.040449..., 1.055 * x^(1/2.4) - 0.055 agrees to 6 places.
    out = tone_map(np.array([0.0031308, 0.0031308, 0.0031308]))
    assert abs(out[0] - 0.04045) < 1e-6
    lo = 12.92 * 0.0031308
    hi = 1.055 * 0.0031308 ** (1 / 2.4) - 0.055
    assert abs(lo - hi) < 1e-6


def test_tone_map_monotone_and_bounded(rng):
    x = np.sort(rng.uniform(0.0, 3.0, 500))
    y = tone_map(np.stack([x, x, x], axis=-1))[:, 0]
    assert np.all(np.diff(y) >= 0.0)
    assert y.min() >= 0.0 and y.max() <= 1.0


def test_tone_map_idempotent_only_at_rails(rng):
    x = rng.uniform(0.05, 0.95, 100)
    once = tone_map(np.stack([x, x, x], axis=-1))
    twice = tone_map(once)
    assert np.all(np.abs(once - twice)[:, 0] > 1e-6)


def test_srgb_inverse_of_tone_map(rng):
    x = rng.uniform(0.0, 1.0, 200)
    x3 = np.stack([x, x, x], axis=-1)
    assert np.allclose(srgb_to_linear(tone_map(x3)), x3, atol=1e-12)


def test_transform_identity_point():
    t = Transform.identity()
    assert np.allclose(transform_point(t, [1, 2, 3]), [1, 2, 3])


def test_transform_translation_inverse():
    t = Transform.translate([1, 0, 0])
    assert np.allclose(transform_point(t, [0, 0, 0], inverse=True), [-1, 0, 0])


def test_transform_rotation_90deg():
    t = Transform.rotate([0, 0, 1], math.pi / 2)
    assert np.allclose(transform_point(t, [1, 0, 0]), [0, 1, 0], atol=1e-6)


def test_transform_round_trip_random_points(rng):
    # forward then inverse recovers the input to 1e-5 over 1000 trials
    t = Transform.translate([0.3, -2.0, 1.5]).compose(Transform.rotate([1, 2, 3], 0.7))
    p = rng.uniform(-10, 10, (1000, 3))
    q = transform_point(t, transform_point(t, p), inverse=True)
    assert np.max(np.abs(q - p)) < 1e-5


def test_transform_rejects_singular():
    m = np.eye(4)
    m[0, 0] = 0.0
    m[1, 1] = 0.0
    with pytest.raises(ValueError):
        Transform(m)


def test_transform_rejects_bad_bottom_row():
    m = np.eye(4)
    m[3, 0] = 1.0
    with pytest.raises(ValueError):
        Transform(m)


def test_look_at_convention():
    t = Transform.look_at([0, 0, 5], [0, 0, 0], [0, 1, 0])
    fwd = t.direction([0, 0, -1.0])
    assert np.allclose(fwd, [0, 0, -1])
    assert np.allclose(t.m[:3, 3], [0, 0, 5])


def test_ray_validation():
    r = Ray([0, 0, 0], [0, 0, 2.0])
    assert abs(np.linalg.norm(r.dir) - 1.0) < 1e-12
    assert np.allclose(r.at(2.0), [0, 0, 2.0])
    with pytest.raises(ValueError):
        Ray([0, 0, 0], [0, 0, 1], t_min=-1.0)
    with pytest.raises(ValueError):
        Ray([0, 0, 0], [0, 0, 1], t_min=2.0, t_max=1.0)


def test_unit_rejects_zero():
    with pytest.raises(ValueError):
        unit([0, 0, 0])


def test_vec3_rejects_nonfinite():
    with pytest.raises(ValueError):
        vec3([np.nan, 0, 0])


def test_luminance_weights():
    assert abs(luminance([1.0, 1.0, 1.0]) - 1.0) < 1e-12
    assert abs(luminance([1.0, 0.0, 0.0]) - 0.2126) < 1e-12


def test_aabb_union_and_diag():
    a = Aabb().expand(np.array([[0, 0, 0], [1, 1, 1]]))
    b = Aabb().expand(np.array([[2, 2, 2]]))
    u = a.union(b)
    assert np.allclose(u.lo, [0, 0, 0]) and np.allclose(u.hi, [2, 2, 2])
    assert abs(a.diagonal() - math.sqrt(3)) < 1e-12
