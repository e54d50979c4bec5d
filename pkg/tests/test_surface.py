import math

import numpy as np
import pytest

from hybridrt import assets
from hybridrt.core import Ray, Transform
from hybridrt.rng import PathRng
from hybridrt.surface import (
    Bvh,
    Dielectric,
    Intersection,
    Lambertian,
    Mirror,
    TriangleMesh,
    build_bvh,
    cosine_sample_batch,
    eval_emission,
    intersect,
    load_obj,
    sample_bsdf,
    schlick_r0,
)


def make_mesh(verts, faces, bsdf=None, **kw):
    return TriangleMesh(verts, faces, bsdf or Lambertian(np.array([0.8, 0.8, 0.8])), **kw)


def soup_mesh(rng, n_tris=1000, spread=4.0):
    base = rng.uniform(-spread, spread, (n_tris, 3))
    verts = (base[:, None, :] + rng.uniform(-0.4, 0.4, (n_tris, 3, 3))).reshape(-1, 3)
    faces = np.arange(3 * n_tris).reshape(-1, 3)
    return make_mesh(verts, faces)


# ----------------------------------------------------------------- obj I/O


def test_load_obj_text():
    mesh = load_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n",
                    bsdf=Lambertian(np.array([0.5, 0.5, 0.5])))
    assert len(mesh.vertices) == 3 and len(mesh.indices) == 1
    assert np.allclose(mesh.face_normals[0], [0, 0, 1])


def test_load_obj_slash_indices_and_comments():
    text = "# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n"
    mesh = load_obj(text, bsdf=Lambertian(np.array([0.5, 0.5, 0.5])))
    assert len(mesh.indices) == 1


def test_load_obj_rejects_quads_and_empty():
    with pytest.raises(ValueError):
        load_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n",
                 bsdf=Lambertian(np.array([0.5, 0.5, 0.5])))
    with pytest.raises(ValueError):
        load_obj("v 0 0 0\n", bsdf=Lambertian(np.array([0.5, 0.5, 0.5])))


def test_obj_round_trip(tmp_path, rng):
    v, f = assets.icosphere(1.0, 1)
    path = tmp_path / "s.obj"
    from hybridrt.surface import save_obj
    save_obj(path, v, f)
    mesh = load_obj(str(path), bsdf=Lambertian(np.array([1.0, 1.0, 1.0])))
    assert np.allclose(mesh.vertices, v, atol=1e-7)
    assert np.array_equal(mesh.indices, f)


def test_mesh_rejects_degenerate_faces():
    with pytest.raises(ValueError):
        make_mesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])


def test_mesh_rejects_out_of_range_indices():
    with pytest.raises(ValueError):
        make_mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 5]])


def test_mesh_transform_applied():
    mesh = make_mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]],
                     world_from_object=Transform.translate([0, 0, 3]))
    assert np.allclose(mesh.vertices[0], [0, 0, 3])


# --------------------------------------------------------------------- BVH


def test_single_triangle_bvh_is_leaf():
    mesh = make_mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    bvh = build_bvh([mesh])
    assert bvh.node_count[0] == 1


def test_empty_scene_misses():
    bvh = build_bvh([])
    assert intersect(bvh, Ray([0, 0, 0], [0, 0, 1])) is None


def test_bvh_equals_brute_force_on_soup(rng):
    mesh = soup_mesh(rng, n_tris=1000)
    bvh = build_bvh([mesh])
    n = 10_000
    o = rng.uniform(-6, 6, (n, 3))
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    t_b, f_b = bvh.intersect_batch(o, d)
    t_r, f_r = bvh.brute_force_batch(o, d)
    assert np.array_equal(f_b, f_r)
    hit = f_b >= 0
    assert hit.sum() > 100
    assert np.allclose(t_b[hit], t_r[hit], atol=1e-6, rtol=0)


def test_bvh_scalar_matches_batch(rng):
    mesh = soup_mesh(rng, n_tris=200)
    bvh = build_bvh([mesh])
    for _ in range(50):
        o = rng.uniform(-6, 6, 3)
        d = rng.normal(size=3)
        ray = Ray(o, d)
        isect = intersect(bvh, ray)
        t, f = bvh.brute_force_batch(ray.origin.reshape(1, 3), ray.dir.reshape(1, 3))
        if f[0] < 0:
            assert isect is None
        else:
            assert isect is not None
            assert isect.face_id == f[0]
            assert isect.t_hit == pytest.approx(t[0], abs=1e-9)


def test_intersect_sphere_distance():
    v, f = assets.icosphere(1.0, 3)
    bvh = build_bvh([make_mesh(v, f)])
    isect = intersect(bvh, Ray([0, 0, -5], [0, 0, 1]))
    assert isect is not None
    # analytic first hit at t = 4; tessellation chord error below 1%
    assert abs(isect.t_hit - 4.0) / 4.0 < 0.01


def test_ray_parallel_to_plane_misses():
    v, f = assets.quad((-1, -1, 0), (2, 0, 0), (0, 2, 0))
    bvh = build_bvh([make_mesh(v, f)])
    assert intersect(bvh, Ray([0, 0, 1], [1, 0, 0])) is None


def test_inside_closed_box_normals_oppose_ray(rng):
    v, f = assets.box((-1, -1, -1), (1, 1, 1))
    bvh = build_bvh([make_mesh(v, f)])
    for _ in range(50):
        d = rng.normal(size=3)
        ray = Ray([0, 0, 0], d)
        isect = intersect(bvh, ray)
        assert isect is not None
        assert float(np.dot(isect.normal, ray.dir)) <= 0.0


# ------------------------------------------------------------------- BSDFs


def lam_isect(normal=(0, 0, 1), bsdf=None, front=True):
    return Intersection(t_hit=1.0, point=np.zeros(3), normal=np.asarray(normal, float),
                        face_id=0, mesh_id=0, front_face=front,
                        bsdf=bsdf or Lambertian(np.array([0.5, 0.5, 0.5])))


def test_lambertian_weight_is_albedo():
    s = sample_bsdf(lam_isect(), np.array([0, 0, 1.0]), PathRng(1))
    assert np.array_equal(s.weight, [0.5, 0.5, 0.5])
    assert s.pdf_kind == "area"
    assert s.dir_in[2] > 0.0  # upper hemisphere


def test_mirror_reflection_law():
    wo = np.array([math.sin(math.radians(30)), 0.0, math.cos(math.radians(30))])
    b = Mirror(np.array([0.9, 0.9, 0.9]))
    s = sample_bsdf(lam_isect(bsdf=b), wo, PathRng(1))
    expect = np.array([-wo[0], 0.0, wo[2]])
    assert np.allclose(s.dir_in, expect, atol=1e-12)
    assert np.array_equal(s.weight, [0.9, 0.9, 0.9])
    assert s.pdf_kind == "delta"


def test_dielectric_snell_angle():
    # entering ior 1.5 at 45 degrees: refracted angle asin(sin45/1.5)
    inc = math.radians(45.0)
    wo = np.array([math.sin(inc), 0.0, math.cos(inc)])
    b = Dielectric(1.5)
    expect = math.degrees(math.asin(math.sin(inc) / 1.5))
    got = None
    for seed in range(64):
        s = sample_bsdf(lam_isect(bsdf=b), wo, PathRng(seed))
        if s.dir_in[2] < 0.0:  # refracted into the surface
            got = math.degrees(math.acos(-s.dir_in[2]))
            break
    assert got is not None, "refraction branch never sampled"
    assert got == pytest.approx(28.1255, abs=1e-4)
    assert abs(expect - 28.1255) < 1e-3


def test_dielectric_total_internal_reflection():
    # exiting (back face) at 60 degrees, past the 41.8-degree critical angle
    crit = math.degrees(math.asin(1.0 / 1.5))
    assert crit < 60.0
    inc = math.radians(60.0)
    wo = np.array([math.sin(inc), 0.0, math.cos(inc)])
    b = Dielectric(1.5)
    for seed in range(40):
        s = sample_bsdf(lam_isect(bsdf=b, front=False), wo, PathRng(seed))
        assert s.dir_in[2] > 0.0  # always reflected back


def test_schlick_normal_incidence():
    assert schlick_r0(1.5) == pytest.approx(0.04, abs=1e-6)


def test_bsdf_weights_never_exceed_one(rng):
    # energy conservation fuzz across variants and directions
    bsdfs = [Lambertian(rng.uniform(0, 1, 3)), Mirror(rng.uniform(0, 1, 3)),
             Dielectric(rng.uniform(1.05, 2.5), rng.uniform(0, 1, 3))]
    for k in range(300):
        b = bsdfs[k % 3]
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        if d[2] < 0:
            d = -d
        s = sample_bsdf(lam_isect(bsdf=b, front=bool(k % 2)), d, PathRng(k))
        assert np.all(s.weight <= 1.0 + 1e-12)
        assert np.all(s.weight >= 0.0)
        assert abs(np.linalg.norm(s.dir_in) - 1.0) < 1e-9


def test_cosine_sampling_distribution_chi2():
    # dot(dir, normal)^2 should be uniform for a cosine-weighted density
    # (pdf over theta is 2 sin(theta) cos(theta)). Chi-square against 64
    # equal-probability bins; critical value chi2(0.99, 63) = 92.01.
    n = 1_000_000
    from hybridrt import rng as hrng
    u1 = hrng.uniform(11, np.arange(n), 0, 0, hrng.BSDF_U, 0)
    u2 = hrng.uniform(11, np.arange(n), 0, 0, hrng.BSDF_V, 0)
    normal = np.zeros((n, 3))
    normal[:, 2] = 1.0
    dirs = cosine_sample_batch(normal, u1, u2)
    cos = dirs[:, 2]
    assert np.all(cos > 0.0)
    bins = np.floor(np.clip(cos * cos, 0, 1 - 1e-12) * 64).astype(int)
    counts = np.bincount(bins, minlength=64)
    expected = n / 64.0
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < 92.01


# ---------------------------------------------------------------- emission


def test_emission_defaults_to_black():
    isect = lam_isect()
    isect.emission = None
    assert np.array_equal(eval_emission(isect), np.zeros(3))


def test_emission_front_side_returns_value():
    isect = lam_isect()
    isect.emission = np.array([2.0, 2.0, 2.0])
    assert np.array_equal(eval_emission(isect), [2.0, 2.0, 2.0])


def test_emission_back_side_is_black():
    isect = lam_isect(front=False)
    isect.emission = np.array([2.0, 2.0, 2.0])
    assert np.array_equal(eval_emission(isect), np.zeros(3))


def test_bsdf_parameter_validation():
    with pytest.raises(ValueError):
        Lambertian(np.array([1.2, 0.0, 0.0]))
    with pytest.raises(ValueError):
        Mirror(np.array([-0.1, 0.5, 0.5]))
    with pytest.raises(ValueError):
        Dielectric(0.0)
