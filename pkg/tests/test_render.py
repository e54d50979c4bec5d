import math

import numpy as np
import pytest

from hybridrt import assets
from hybridrt.core import Ray, Transform
from hybridrt.field import RadianceGrid
from hybridrt.images import decode_ppm
from hybridrt.render import (
    Camera,
    EmitterSet,
    finalize,
    render,
    render_surface_only,
    render_volume_only,
    shadow_mask,
    trace_path,
)
from hybridrt.rng import PathRng
from hybridrt.scene import RenderConfig, Scene, SceneConfig, CameraConfig, scene_diagonal
from hybridrt.surface import Bvh, Lambertian, Mirror, TriangleMesh


def make_scene(field=None, meshes=(), emitters=None, camera=None, **render_kw):
    meshes = list(meshes)
    bvh = Bvh(meshes)
    blocker = Bvh([m for m in meshes if not m.is_emissive])
    camera = camera or Camera(pose=Transform.look_at([0, 0, 3], [0, 0, 0]),
                              fov=math.radians(30), resolution=(8, 8))
    cfg = SceneConfig(camera=CameraConfig(position=[0, 0, 3], look_at=[0, 0, 0],
                                          resolution=list(camera.resolution)))
    rc = RenderConfig(**render_kw) if render_kw else RenderConfig()
    return Scene(config=cfg, camera=camera, render=rc, field=field, meshes=meshes,
                 bvh=bvh, blocker_bvh=blocker, emitters=emitters,
                 collider_sdfs=[], spawn_eps=1e-4 * scene_diagonal(field, meshes))


def emissive_quad_mesh(emission=(2.0, 2.0, 2.0), z=0.0, half=4.0):
    v, f = assets.quad((-half, -half, z), (2 * half, 0, 0), (0, 2 * half, 0))
    return TriangleMesh(v, f, Lambertian(np.zeros(3)), emission=np.array(emission))


# ------------------------------------------------------------ trace_path


def test_vacuum_emissive_quad_direct():
    scene = make_scene(meshes=[emissive_quad_mesh()])
    L = trace_path(Ray([0, 0, 3], [0, 0, -1]), scene, PathRng(1))
    assert np.array_equal(L, [2.0, 2.0, 2.0])


def test_homogeneous_slab_path():
    field = RadianceGrid.constant((0, 0, 0), (1, 1, 1), 1.0, (1, 1, 1))
    scene = make_scene(field=field, march_step=1e-3)
    L = trace_path(Ray([0.5, 0.5, -1.0], [0, 0, 1]), scene, PathRng(1))
    assert np.allclose(L, 1.0 - math.exp(-1.0), rtol=1e-2)


def test_mirror_behind_slab_two_segment_form():
    # camera -> slab (length 1) -> mirror -> slab (length 1) -> escape:
    # L = r(1 - 1/e) + (1/e) * rho * r(1 - 1/e)
    rho = 0.8
    r_val = 0.6
    field = RadianceGrid.constant((0, 0, 0), (1, 1, 1), 1.0, (r_val, r_val, r_val))
    v, f = assets.quad((-2, -2, 1.0), (4, 0, 0), (0, 4, 0))
    mirror = TriangleMesh(v, f, Mirror(np.full(3, rho)))
    scene = make_scene(field=field, meshes=[mirror], march_step=1e-3)
    L = trace_path(Ray([0.5, 0.5, -1.0], [0, 0, 1]), scene, PathRng(1))
    seg = r_val * (1.0 - math.exp(-1.0))
    expect = seg + math.exp(-1.0) * rho * seg
    assert np.allclose(L, expect, rtol=2e-2)


def test_path_terminates_on_bounce_limit():
    # two parallel mirrors; path must stop at n_bounces without error
    v1, f1 = assets.quad((-2, -2, 0.0), (4, 0, 0), (0, 4, 0))
    v2, f2 = assets.quad((-2, -2, 2.0), (0, 4, 0), (4, 0, 0))
    m1 = TriangleMesh(v1, f1, Mirror(np.ones(3)))
    m2 = TriangleMesh(v2, f2, Mirror(np.ones(3)))
    scene = make_scene(meshes=[m1, m2], n_bounces=5)
    L = trace_path(Ray([0, 0, 1.0], [0, 0, -1]), scene, PathRng(1))
    assert np.array_equal(L, np.zeros(3))


def test_throughput_threshold_terminates():
    field = RadianceGrid.constant((0, 0, 0), (1, 1, 1), 40.0, (1, 1, 1))
    scene = make_scene(field=field, march_step=1e-2, threshold=1e-3)
    L = trace_path(Ray([0.5, 0.5, -1.0], [0, 0, 1]), scene, PathRng(1))
    assert np.allclose(L, 1.0, rtol=1e-2)  # optically thick: all energy absorbed


# ------------------------------------------------------------ shadow masks


def test_shadow_mask_no_emitters_is_one():
    scene = make_scene()
    assert shadow_mask((0, 0, 0), None, scene.blocker_bvh, PathRng(1)) == 1.0
    empty = EmitterSet(np.zeros((0, 3, 3)), np.zeros(0))
    assert shadow_mask((0, 0, 0), empty, scene.blocker_bvh, PathRng(1)) == 1.0


def test_shadow_mask_unblocked_is_one():
    em = EmitterSet([[[0, 0, 5], [1, 0, 5], [0, 1, 5]]], [0.7])
    bvh = Bvh([])
    assert shadow_mask((0, 0, 0), em, bvh, PathRng(3)) == 1.0


def test_shadow_mask_blocked_is_one_minus_rsrc():
    em = EmitterSet([[[-1, -1, 5], [1, -1, 5], [0, 1, 5]]], [0.7])
    v, f = assets.quad((-3, -3, 2.0), (6, 0, 0), (0, 6, 0))
    blocker = Bvh([TriangleMesh(v, f, Lambertian(np.full(3, 0.5)))])
    m = shadow_mask((0, 0, 0), em, blocker, PathRng(3), eps=1e-6)
    assert m == pytest.approx(1.0 - 0.7, abs=1e-12)


def test_shadow_mask_floor_clamp():
    em = EmitterSet([[[-1, -1, 5], [1, -1, 5], [0, 1, 5]]], [1.0])
    v, f = assets.quad((-3, -3, 2.0), (6, 0, 0), (0, 6, 0))
    blocker = Bvh([TriangleMesh(v, f, Lambertian(np.full(3, 0.5)))])
    m = shadow_mask((0, 0, 0), em, blocker, PathRng(3), eps=1e-6)
    assert m == 0.02  # 1 - r_src clamped to the documented floor


def shadow_scene(r_src):
    field = RadianceGrid.constant((-1, -1, -1), (1, 1, 1), 1.0, (1, 1, 1))
    v, f = assets.quad((-4, -4, 3.0), (8, 0, 0), (0, 8, 0))  # blocks the sky emitter
    blocker = TriangleMesh(v, f, Lambertian(np.full(3, 0.5)))
    em = None
    if r_src is not None:
        em = EmitterSet([[[-1, -1, 6], [1, -1, 6], [0, 1, 6]]], [r_src])
    cam = Camera(pose=Transform.look_at([0, 0, -3], [0, 0, 0]),
                 fov=math.radians(25), resolution=(8, 8))
    return make_scene(field=field, meshes=[blocker], emitters=em, camera=cam,
                      march_step=0.02, spp=4, seed=9)


def test_blocked_contribution_scaled_by_exactly_one_minus_rsrc():
    img_blocked = render(shadow_scene(0.7))
    img_open = render(shadow_scene(0.0))
    assert np.allclose(img_blocked.pixels, 0.3 * img_open.pixels, rtol=1e-12)


def test_rsrc_zero_bit_equals_shadow_free():
    img_r0 = render(shadow_scene(0.0))
    img_free = render(shadow_scene(None))
    assert np.array_equal(img_r0.pixels, img_free.pixels)


# ------------------------------------------------- degeneracy equivalences


def surface_test_scene(sigma):
    field = RadianceGrid.constant((-2, -2, -2), (2, 2, 2), sigma, (0.0, 0.0, 0.0)) \
        if sigma is not None else None
    v, f = assets.box((-2, -2, -2), (2, 2, 2), inward=True)
    room = TriangleMesh(v, f, Lambertian(np.full(3, 0.6)))
    quad_mesh = emissive_quad_mesh(emission=(3.0, 2.0, 1.0), z=-1.9, half=1.0)
    cam = Camera(pose=Transform.look_at([0, 0, 1.5], [0, 0, -1]),
                 fov=math.radians(60), resolution=(64, 64))
    return make_scene(field=field, meshes=[room, quad_mesh], camera=cam,
                      spp=16, seed=5, n_bounces=6)


def test_degeneracy_a_zero_sigma_matches_pure_surface():
    hybrid = render(surface_test_scene(sigma=0.0))
    reference = render_surface_only(surface_test_scene(sigma=None))
    assert np.array_equal(hybrid.pixels, reference.pixels)
    assert hybrid.pixels.mean() > 0.01  # scene is actually lit


def test_degeneracy_b_mesh_free_matches_pure_quadrature(slab_dir):
    from hybridrt.scene import load_scene
    scene = load_scene(str(slab_dir / "slab.json"))
    hybrid = render(scene, spp=16, seed=3)
    reference = render_volume_only(scene, spp=16, seed=3)
    assert np.array_equal(hybrid.pixels, reference.pixels)
    assert hybrid.pixels.mean() > 0.05


# ------------------------------------------------------------------ render


def test_single_pixel_emitter_exact_at_any_spp():
    scene = make_scene(meshes=[emissive_quad_mesh()],
                       camera=Camera(pose=Transform.look_at([0, 0, 3], [0, 0, 0]),
                                     fov=math.radians(20), resolution=(1, 1)))
    for spp in (1, 2, 7):
        img = render(scene, spp=spp, seed=1)
        assert np.array_equal(img.pixels[0, 0], [2.0, 2.0, 2.0])


def test_render_deterministic_rerun(two_room_dir):
    from hybridrt.scene import load_scene
    scene = load_scene(str(two_room_dir / "two_room.json"))
    a = render(scene, spp=2, seed=11)
    b = render(scene, spp=2, seed=11)
    assert np.array_equal(a.pixels, b.pixels)


def test_render_thread_count_invariant(two_room_dir):
    from hybridrt.scene import load_scene
    scene = load_scene(str(two_room_dir / "two_room.json"))
    a = render(scene, spp=2, seed=11, threads=1)
    b = render(scene, spp=2, seed=11, threads=4)
    assert np.array_equal(a.pixels, b.pixels)


def test_render_seed_changes_image(two_room_dir):
    from hybridrt.scene import load_scene
    scene = load_scene(str(two_room_dir / "two_room.json"))
    a = render(scene, spp=2, seed=1)
    b = render(scene, spp=2, seed=2)
    assert not np.array_equal(a.pixels, b.pixels)


def test_render_rejects_bad_spp(two_room_dir):
    from hybridrt.scene import load_scene
    scene = load_scene(str(two_room_dir / "two_room.json"))
    with pytest.raises(ValueError):
        render(scene, spp=0)


# ---------------------------------------------------------------- finalize


def test_finalize_ldr_quantization():
    from hybridrt.images import HdrImage
    img = HdrImage(np.array([[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [0.5, 0.5, 0.5]]]))
    codes = decode_ppm(finalize(img, hdr_output=False))
    assert tuple(codes[0, 0]) == (0, 0, 0)
    assert tuple(codes[0, 1]) == (255, 255, 255)
    assert tuple(codes[0, 2]) == (188, 188, 188)


def test_finalize_hdr_is_pfm():
    from hybridrt.images import HdrImage, decode_pfm
    img = HdrImage(np.full((2, 2, 3), 1.5))
    out = finalize(img, hdr_output=True)
    assert out.startswith(b"PF\n2 2\n-1.0\n")
    assert np.allclose(decode_pfm(out).pixels, 1.5)


# ------------------------------------------------------------- invariants


def test_throughput_multipliers_never_exceed_one(rng):
    # Both per-step factors that scale T_spec stay in [0, 1]: medium
    # absorption keep = exp(-sigma dt), and BSDF sample weights.
    sigma = rng.uniform(0.0, 50.0, 100_000)
    dt = rng.uniform(1e-4, 0.5, 100_000)
    keep = np.exp(-sigma * dt)
    assert np.all((keep > 0.0) & (keep <= 1.0))

    from hybridrt.surface import cosine_sample_batch, dielectric_sample_batch, reflect_batch
    n = np.zeros((100_000, 3))
    n[:, 2] = 1.0
    u1 = rng.uniform(0, 1, 100_000)
    u2 = rng.uniform(0, 1, 100_000)
    d = cosine_sample_batch(n, u1, u2)
    assert np.all(np.abs(np.linalg.norm(d, axis=1) - 1.0) < 1e-9)
    albedo = rng.uniform(0, 1, (100_000, 3))
    assert np.all(albedo <= 1.0)


def test_furnace_small_scale(furnace_dir):
    # quick furnace sanity (the full 1024 spp run lives in acceptance)
    from hybridrt.scene import load_scene
    scene = load_scene(str(furnace_dir / "furnace.json"))
    img = render(scene, spp=16, seed=7)
    center = img.pixels[28:36, 28:36].mean()
    assert abs(center - assets.FURNACE_R_ENV) / assets.FURNACE_R_ENV < 0.05
