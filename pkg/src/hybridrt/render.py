"""Hybrid per-pixel path construction: march the radiance field between
surface intersections, bounce at surfaces, repeat.

Paths alternate two updates. Between surface hits the field segment is
integrated by midpoint substeps (throughput times exp(-sigma dt), radiance
accumulating per-substep opacity, optionally shadow-masked). At a hit the
surface emission weighted by the post-march throughput is added, then a
BSDF sample rotates the ray and multiplies the channel throughput. A path
ends when it leaves the scene, drops below the throughput threshold, or
reaches the bounce limit.

Everything random is a counter-based function of (seed, pixel, sample,
bounce, purpose, lane), so renders are bit-identical for any tile schedule
or worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .core import Ray, Transform
from .field import PathState, RadianceGrid, march_arrays
from .images import HdrImage, encode_pfm, encode_ppm
from .surface import (
    Bvh,
    Dielectric,
    Lambertian,
    Mirror,
    cosine_sample_batch,
    dielectric_sample_batch,
    reflect_batch,
)

TILE_ROWS = 16
MAX_BATCH_RAYS = 65536
SHADOW_T_MAX_SHRINK = 1.0 - 1e-4
BLOCKED_MASK_FLOOR = 0.02


@dataclass
class Camera:
    """Pinhole camera; pose maps camera space (x right, y up, looking down
    -z) to world. fov is the vertical field of view in radians."""

    pose: Transform
    fov: float
    resolution: tuple

    def __post_init__(self):
        w, h = self.resolution
        if w < 1 or h < 1:
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        if not 0 < self.fov < np.pi:
            raise ValueError(f"vertical fov must be in (0, pi), got {self.fov}")
        self.resolution = (int(w), int(h))

    def primary_rays(self, pixel_ids: np.ndarray, jx: np.ndarray, jy: np.ndarray):
        """World rays through pixel centers offset by jitter in [0, 1)."""
        w, h = self.resolution
        i = pixel_ids % w
        j = pixel_ids // w
        tan_half = np.tan(0.5 * self.fov)
        aspect = w / h
        x = (2.0 * (i + jx) / w - 1.0) * tan_half * aspect
        y = (1.0 - 2.0 * (j + jy) / h) * tan_half
        d_cam = np.stack([x, y, -np.ones_like(x)], axis=1)
        d_world = self.pose.direction(d_cam)
        d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
        o = np.broadcast_to(self.pose.m[:3, 3], d_world.shape).copy()
        return o, d_world


class EmitterSet:
    """Area-light triangles with source intensities r_src in [0, 1]."""

    def __init__(self, triangles, r_src):
        self.triangles = np.asarray(triangles, dtype=np.float64).reshape(-1, 3, 3)
        self.r_src = np.clip(np.asarray(r_src, dtype=np.float64).reshape(-1), 0.0, 1.0)
        if len(self.triangles) != len(self.r_src):
            raise ValueError("emitter triangle/intensity count mismatch")
        cross = np.cross(self.triangles[:, 1] - self.triangles[:, 0],
                         self.triangles[:, 2] - self.triangles[:, 0])
        self.areas = 0.5 * np.linalg.norm(cross, axis=1)
        total = self.areas.sum()
        if len(self.areas) and total <= 0:
            raise ValueError("emitter set has zero total area")
        self.cdf = np.cumsum(self.areas) / total if len(self.areas) else np.zeros(0)

    def __len__(self):
        return len(self.triangles)

    def sample(self, u_pick, u1, u2):
        """Pick triangles by area, then uniform points on them."""
        idx = np.minimum(np.searchsorted(self.cdf, u_pick, side="right"),
                         len(self.triangles) - 1)
        tri = self.triangles[idx]
        su = np.sqrt(u1)
        b0 = 1.0 - su
        b1 = su * (1.0 - u2)
        b2 = su * u2
        pts = (b0[:, None] * tri[:, 0] + b1[:, None] * tri[:, 1]
               + b2[:, None] * tri[:, 2])
        return pts, self.r_src[idx]


def shadow_mask_batch(points, emitters: EmitterSet, blocker_bvh: Bvh,
                      u_pick, u1, u2, eps: float):
    """Mask values per point: 1 when the sampled emitter is visible, else
    1 - r_src clamped to [0.02, 1]."""
    if emitters is None or len(emitters) == 0:
        return np.ones(len(points))
    q, r_src = emitters.sample(u_pick, u1, u2)
    delta = q - points
    dist = np.linalg.norm(delta, axis=1)
    safe = np.maximum(dist, 1e-12)
    d = delta / safe[:, None]
    blocked = blocker_bvh.any_hit_batch(points, d, eps, dist * SHADOW_T_MAX_SHRINK)
    masked = np.clip(1.0 - r_src, BLOCKED_MASK_FLOOR, 1.0)
    return np.where(blocked, masked, 1.0)


def shadow_mask(p, emitters: EmitterSet, bvh: Bvh, path_rng: _rng.PathRng,
                bounce: int = 0, substep: int = 0, eps: float = 1e-6) -> float:
    """Scalar shadow mask at a march sample point."""
    if emitters is None or len(emitters) == 0:
        return 1.0
    keys = (path_rng.seed, path_rng.pixel, path_rng.sample, bounce)
    u_pick = _rng.uniform(*keys, _rng.LIGHT_PICK, substep)
    u1 = _rng.uniform(*keys, _rng.LIGHT_U, substep)
    u2 = _rng.uniform(*keys, _rng.LIGHT_V, substep)
    m = shadow_mask_batch(np.asarray(p, dtype=np.float64).reshape(1, 3),
                          emitters, bvh,
                          np.atleast_1d(u_pick), np.atleast_1d(u1),
                          np.atleast_1d(u2), eps)
    return float(m[0])


def _march_field(scene, ids, o, d, s_end, bounce, pix, smp, seed, L, T_spec, T):
    """March rays `ids` from their bbox entry to min(s_end, bbox exit)."""
    field: RadianceGrid = scene.field
    t0, t1 = field.ray_bounds(o[ids], d[ids])
    s0 = np.maximum(t0, 0.0)
    s1 = np.minimum(t1, s_end)
    doit = s1 > s0
    if not np.any(doit):
        return
    mids = ids[doit]
    shadow_fn = None
    if scene.emitters is not None and len(scene.emitters) > 0:
        m_pix = pix[mids]
        m_smp = smp[mids]

        def shadow_fn(p, k, sub_ids):
            keys = (seed, m_pix[sub_ids], m_smp[sub_ids], bounce)
            u_pick = _rng.uniform(*keys, _rng.LIGHT_PICK, k)
            u1 = _rng.uniform(*keys, _rng.LIGHT_U, k)
            u2 = _rng.uniform(*keys, _rng.LIGHT_V, k)
            return shadow_mask_batch(p, scene.emitters, scene.blocker_bvh,
                                     u_pick, u1, u2, scene.spawn_eps)

    Lm = L[mids]
    Tm = T_spec[mids]
    Ts = T[mids]
    march_arrays(field, o[mids], d[mids], s0[doit], s1[doit],
                 scene.render.march_step, Lm, Tm, Ts, shadow_fn)
    L[mids] = Lm
    T_spec[mids] = Tm
    T[mids] = Ts


def _sample_bsdf_groups(scene, bvh, faces, wo, n, front, pix, smp, bounce, seed):
    """Vectorized next-direction sampling, grouped by mesh."""
    k = len(faces)
    new_d = np.zeros((k, 3))
    weight = np.ones((k, 3))
    mesh_of = bvh.face_mesh[faces]
    for mi, mesh in enumerate(bvh.meshes):
        sel = mesh_of == mi
        if not np.any(sel):
            continue
        b = mesh.bsdf
        keys = (seed, pix[sel], smp[sel], bounce)
        if isinstance(b, Lambertian):
            u1 = _rng.uniform(*keys, _rng.BSDF_U, 0)
            u2 = _rng.uniform(*keys, _rng.BSDF_V, 0)
            new_d[sel] = cosine_sample_batch(n[sel], u1, u2)
            weight[sel] = b.albedo
        elif isinstance(b, Mirror):
            new_d[sel] = reflect_batch(wo[sel], n[sel])
            weight[sel] = b.reflectance
        elif isinstance(b, Dielectric):
            u = _rng.uniform(*keys, _rng.BSDF_LOBE, 0)
            new_d[sel] = dielectric_sample_batch(wo[sel], n[sel], front[sel], b.ior, u)
            weight[sel] = b.tint
        else:
            raise TypeError(f"unknown bsdf {type(b)}")
    return new_d, weight


def _trace_batch_hybrid(scene, o, d, pix, smp, seed):
    """Integrate one batch of camera paths; returns linear radiance (N,3)."""
    n = len(o)
    L = np.zeros((n, 3))
    T_spec = np.ones((n, 3))
    T = np.ones(n)
    ray_o = o.copy()
    ray_d = d.copy()
    alive = np.arange(n)
    rc = scene.render
    for bounce in range(1, rc.n_bounces + 1):
        if not len(alive):
            break
        t_hit, face = scene.bvh.intersect_batch(ray_o[alive], ray_d[alive])
        if scene.field is not None:
            _march_field(scene, alive, ray_o, ray_d, t_hit, bounce,
                         pix, smp, seed, L, T_spec, T)
        hit = face >= 0
        hit_ids = alive[hit]
        if not len(hit_ids):
            break  # every live ray ran out of the scene
        hf = face[hit]
        th = t_hit[hit]
        point = ray_o[hit_ids] + th[:, None] * ray_d[hit_ids]
        n_raw = scene.bvh.face_normal[hf]
        facing = np.sum(n_raw * ray_d[hit_ids], axis=1) < 0.0
        normal = np.where(facing[:, None], n_raw, -n_raw)

        emit = scene.bvh.face_emission[hf]
        L[hit_ids] += T_spec[hit_ids] * np.where(facing[:, None], emit, 0.0)

        wo = -ray_d[hit_ids]
        new_d, weight = _sample_bsdf_groups(scene, scene.bvh, hf, wo, normal,
                                            facing, pix[hit_ids], smp[hit_ids],
                                            bounce, seed)
        T_spec[hit_ids] *= weight
        ray_o[hit_ids] = point + scene.spawn_eps * new_d
        ray_d[hit_ids] = new_d

        keep = np.max(T_spec[hit_ids], axis=1) >= rc.threshold
        alive = hit_ids[keep]
    assert not np.any(np.isnan(L)), "NaN radiance in path batch"
    return L


def _trace_batch_surface(scene, o, d, pix, smp, seed):
    """Reference: the same loop with the field removed (pure path tracer)."""
    n = len(o)
    L = np.zeros((n, 3))
    T_spec = np.ones((n, 3))
    T = np.ones(n)
    ray_o = o.copy()
    ray_d = d.copy()
    alive = np.arange(n)
    rc = scene.render
    for bounce in range(1, rc.n_bounces + 1):
        if not len(alive):
            break
        t_hit, face = scene.bvh.intersect_batch(ray_o[alive], ray_d[alive])
        hit = face >= 0
        hit_ids = alive[hit]
        if not len(hit_ids):
            break
        hf = face[hit]
        th = t_hit[hit]
        point = ray_o[hit_ids] + th[:, None] * ray_d[hit_ids]
        n_raw = scene.bvh.face_normal[hf]
        facing = np.sum(n_raw * ray_d[hit_ids], axis=1) < 0.0
        normal = np.where(facing[:, None], n_raw, -n_raw)
        emit = scene.bvh.face_emission[hf]
        L[hit_ids] += T_spec[hit_ids] * np.where(facing[:, None], emit, 0.0)
        wo = -ray_d[hit_ids]
        new_d, weight = _sample_bsdf_groups(scene, scene.bvh, hf, wo, normal,
                                            facing, pix[hit_ids], smp[hit_ids],
                                            bounce, seed)
        T_spec[hit_ids] *= weight
        ray_o[hit_ids] = point + scene.spawn_eps * new_d
        ray_d[hit_ids] = new_d
        keep = np.max(T_spec[hit_ids], axis=1) >= rc.threshold
        alive = hit_ids[keep]
    assert not np.any(np.isnan(L))
    return L


def _trace_batch_volume(scene, o, d, pix, smp, seed):
    """Reference: pure field quadrature over each full ray (no meshes)."""
    n = len(o)
    L = np.zeros((n, 3))
    T_spec = np.ones((n, 3))
    T = np.ones(n)
    alive = np.arange(n)
    t_hit = np.full(n, np.inf)
    if scene.field is not None:
        _march_field(scene, alive, o, d, t_hit, 1, pix, smp, seed, L, T_spec, T)
    assert not np.any(np.isnan(L))
    return L


def trace_path(ray: Ray, scene, path_rng: _rng.PathRng) -> np.ndarray:
    """Linear radiance of a single camera path (batch of one)."""
    L = _trace_batch_hybrid(
        scene,
        ray.origin.reshape(1, 3),
        ray.dir.reshape(1, 3),
        np.array([path_rng.pixel]),
        np.array([path_rng.sample]),
        path_rng.seed,
    )
    return L[0]


def path_state_after(ray: Ray, scene, path_rng: _rng.PathRng) -> PathState:
    """Convenience for tests that inspect the final accumulators."""
    return PathState(L=trace_path(ray, scene, path_rng))


def _sample_jitter(seed, pix, sample_ids, spp):
    """Stratified sub-pixel jitter when spp is a perfect square, else pure
    random jitter; both keyed per (pixel, sample)."""
    u1 = _rng.uniform(seed, pix, sample_ids, 0, _rng.PIXEL_X, 0)
    u2 = _rng.uniform(seed, pix, sample_ids, 0, _rng.PIXEL_Y, 0)
    k = int(np.floor(np.sqrt(spp)))
    if k * k == spp and k > 1:
        sx = sample_ids % k
        sy = sample_ids // k
        return (sx + u1) / k, (sy + u2) / k
    return u1, u2


def _render_tile(scene, camera, spp, seed, rows, tracer):
    w, h = camera.resolution
    r0, r1 = rows
    npix = (r1 - r0) * w
    pix = np.arange(r0 * w, r1 * w)
    acc = np.zeros((npix, 3))
    per_batch = max(1, MAX_BATCH_RAYS // npix) if npix else spp
    s = 0
    while s < spp:
        sb = min(per_batch, spp - s)
        pix_rep = np.repeat(pix, sb)
        smp_rep = np.tile(np.arange(s, s + sb), npix)
        jx, jy = _sample_jitter(seed, pix_rep, smp_rep, spp)
        o, d = camera.primary_rays(pix_rep, jx, jy)
        L = tracer(scene, o, d, pix_rep, smp_rep, seed)
        acc += L.reshape(npix, sb, 3).sum(axis=1)
        s += sb
    return (acc / spp).reshape(r1 - r0, w, 3)


def _render_impl(scene, camera, spp, seed, threads, tracer) -> HdrImage:
    w, h = camera.resolution
    out = np.zeros((h, w, 3))
    tiles = [(r, min(r + TILE_ROWS, h)) for r in range(0, h, TILE_ROWS)]

    def work(rows):
        out[rows[0]:rows[1]] = _render_tile(scene, camera, spp, seed, rows, tracer)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(work, tiles))
    else:
        for rows in tiles:
            work(rows)
    img = HdrImage(out)
    assert np.all(np.isfinite(img.pixels)) and np.all(img.pixels >= 0.0)
    return img


def render(scene, camera: Camera = None, spp: int = None, seed: int = None,
           threads: int = 1) -> HdrImage:
    """Average spp hybrid paths per pixel into a linear HDR image."""
    camera = camera or scene.camera
    spp = scene.render.spp if spp is None else int(spp)
    seed = scene.render.seed if seed is None else int(seed)
    if spp < 1:
        raise ValueError("spp must be >= 1")
    return _render_impl(scene, camera, spp, seed, threads, _trace_batch_hybrid)


def render_surface_only(scene, camera=None, spp=None, seed=None, threads=1) -> HdrImage:
    """Degeneracy reference A: no volume marching at all."""
    camera = camera or scene.camera
    spp = scene.render.spp if spp is None else int(spp)
    seed = scene.render.seed if seed is None else int(seed)
    return _render_impl(scene, camera, spp, seed, threads, _trace_batch_surface)


def render_volume_only(scene, camera=None, spp=None, seed=None, threads=1) -> HdrImage:
    """Degeneracy reference B: one full-field march per camera ray."""
    camera = camera or scene.camera
    spp = scene.render.spp if spp is None else int(spp)
    seed = scene.render.seed if seed is None else int(seed)
    return _render_impl(scene, camera, spp, seed, threads, _trace_batch_volume)


def finalize(img: HdrImage, hdr_output: bool) -> bytes:
    """PFM bytes for HDR output, else tone-mapped 8-bit PPM."""
    return encode_pfm(img) if hdr_output else encode_ppm(img)
