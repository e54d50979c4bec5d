"""Dense radiance/density and signed-distance grids with ray marching.

The radiance field is a trilinear grid of extinction sigma (1/length) and
view-independent linear RGB radiance over an axis-aligned box in field
coordinates; a rigid world_from_field transform places it in the world.
Outside the box the medium is vacuum. Marching uses midpoint substeps with
per-step opacity a = 1 - exp(-sigma * dt), which is exact in homogeneous
media and first-order accurate otherwise.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .core import Ray, Transform, unit, vec3


def _as_res(res) -> tuple:
    r = tuple(int(v) for v in res)
    if len(r) != 3 or any(v < 1 for v in r):
        raise ValueError(f"grid resolution must be 3 positive ints, got {res}")
    return r


def _check_bbox(lo, hi):
    lo, hi = vec3(lo), vec3(hi)
    if np.any(hi <= lo):
        raise ValueError(f"grid bbox must have positive extent, got {lo} .. {hi}")
    return lo, hi


def _grid_scale(lo, hi, res):
    return np.array([(r - 1) / (h - l) if r > 1 else 0.0
                     for r, l, h in zip(res, lo, hi)])


def _trilinear(values: np.ndarray, lo, res, p: np.ndarray, scale=None, hi=None) -> np.ndarray:
    """Interpolate values (nx,ny,nz) or (nx,ny,nz,C) at points p (N,3).

    Callers mask out-of-bbox queries themselves; here coordinates are
    clamped so boundary queries stay continuous.
    """
    if scale is None:
        scale = _grid_scale(lo, hi, res)
    g = (p - lo) * scale
    nx, ny, nz = res
    hi_idx = np.maximum(np.array(res, dtype=np.float64) - 1.0, 0.0)
    gc = np.clip(g, 0.0, np.maximum(hi_idx - 1e-9, 0.0))
    i0 = np.floor(gc).astype(np.int64)
    f = gc - i0
    i1 = np.minimum(i0 + 1, [nx - 1, ny - 1, nz - 1])

    flat = values.reshape(nx * ny * nz, -1)
    stride_x, stride_y = ny * nz, nz
    base = i0[:, 0] * stride_x + i0[:, 1] * stride_y + i0[:, 2]
    dx = (i1[:, 0] - i0[:, 0]) * stride_x
    dy = (i1[:, 1] - i0[:, 1]) * stride_y
    dz = i1[:, 2] - i0[:, 2]

    fx, fy, fz = f[:, 0:1], f[:, 1:2], f[:, 2:3]
    c000 = flat[base]
    c100 = flat[base + dx]
    c010 = flat[base + dy]
    c110 = flat[base + dx + dy]
    c001 = flat[base + dz]
    c101 = flat[base + dx + dz]
    c011 = flat[base + dy + dz]
    c111 = flat[base + dx + dy + dz]

    c00 = c000 * (1 - fx) + c100 * fx
    c10 = c010 * (1 - fx) + c110 * fx
    c01 = c001 * (1 - fx) + c101 * fx
    c11 = c011 * (1 - fx) + c111 * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    out = c0 * (1 - fz) + c1 * fz
    return out if values.ndim == 4 else out[:, 0]


def _inside_mask(lo, hi, p):
    return np.all((p >= lo) & (p <= hi), axis=-1)


def _ray_slab(lo, hi, o, d):
    """Entry/exit parameters of rays against a box; empty hits have t0 > t1."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        ta = (lo - o) * inv
        tb = (hi - o) * inv
    # A zero direction component outside the slab never enters.
    zero = d == 0.0
    out_slab = (o < lo) | (o > hi)
    tlo = np.where(zero, np.where(out_slab, np.inf, -np.inf), np.minimum(ta, tb))
    thi = np.where(zero, np.where(out_slab, -np.inf, np.inf), np.maximum(ta, tb))
    t0 = tlo.max(axis=-1)
    t1 = thi.min(axis=-1)
    return t0, t1


class RadianceGrid:
    """Emissive/absorptive volume: sigma (nx,ny,nz) and radiance (nx,ny,nz,3)."""

    def __init__(self, bbox_lo, bbox_hi, sigma, radiance, world_from_field=None):
        self.bbox_lo, self.bbox_hi = _check_bbox(bbox_lo, bbox_hi)
        sigma = np.asarray(sigma, dtype=np.float64)
        radiance = np.asarray(radiance, dtype=np.float64)
        self.res = _as_res(sigma.shape)
        if radiance.shape != sigma.shape + (3,):
            raise ValueError(
                f"radiance shape {radiance.shape} does not match sigma {sigma.shape} + (3,)"
            )
        if not np.all(np.isfinite(sigma)) or np.any(sigma < 0):
            raise ValueError("sigma must be finite and >= 0")
        if not np.all(np.isfinite(radiance)) or np.any(radiance < 0):
            raise ValueError("radiance must be finite and >= 0")
        self.sigma = sigma
        self.radiance = radiance
        self.world_from_field = world_from_field or Transform.identity()
        self._scale = _grid_scale(self.bbox_lo, self.bbox_hi, self.res)
        # Homogeneous grids skip interpolation entirely (common in tests
        # and the furnace preset; the shortcut is value-identical).
        self._sigma_const = float(sigma.flat[0]) if np.all(sigma == sigma.flat[0]) else None
        rad0 = radiance.reshape(-1, 3)[0]
        self._rad_const = rad0.copy() if np.all(radiance.reshape(-1, 3) == rad0) else None

    @staticmethod
    def constant(bbox_lo, bbox_hi, sigma: float, radiance, res=(2, 2, 2)) -> "RadianceGrid":
        res = _as_res(res)
        sig = np.full(res, float(sigma))
        rad = np.broadcast_to(vec3(radiance), res + (3,)).copy()
        return RadianceGrid(bbox_lo, bbox_hi, sig, rad)

    def _is_identity(self) -> bool:
        m = self.world_from_field.m
        return (m[0, 0] == 1.0 and m[1, 1] == 1.0 and m[2, 2] == 1.0
                and not m[:3, 3].any() and not m[0, 1:3].any()
                and not m[1, 0::2].any() and not m[2, 0:2].any())

    def sample_batch(self, p_world: np.ndarray):
        """(sigma, radiance) at world points (N,3); vacuum outside the bbox."""
        p = np.asarray(p_world, dtype=np.float64).reshape(-1, 3)
        pf = p if self._is_identity() else self.world_from_field.point(p, inverse=True)
        inside = _inside_mask(self.bbox_lo, self.bbox_hi, pf)
        sigma = np.zeros(len(p))
        rad = np.zeros((len(p), 3))
        if np.any(inside):
            if self._sigma_const is not None:
                sigma[inside] = self._sigma_const
            else:
                sigma[inside] = _trilinear(self.sigma, self.bbox_lo, self.res,
                                           pf[inside], scale=self._scale)
            if self._rad_const is not None:
                rad[inside] = self._rad_const
            else:
                rad[inside] = _trilinear(self.radiance, self.bbox_lo, self.res,
                                         pf[inside], scale=self._scale)
        return sigma, rad

    def ray_bounds(self, o: np.ndarray, d: np.ndarray):
        """Parametric [t0, t1] of rays against the transformed bbox.

        The transform must be rigid so the field-frame parameter equals the
        world-frame one. Empty overlaps come back with t0 > t1.
        """
        o = np.asarray(o, dtype=np.float64).reshape(-1, 3)
        d = np.asarray(d, dtype=np.float64).reshape(-1, 3)
        if self._is_identity():
            return _ray_slab(self.bbox_lo, self.bbox_hi, o, d)
        of = self.world_from_field.point(o, inverse=True)
        df = self.world_from_field.direction(d, inverse=True)
        return _ray_slab(self.bbox_lo, self.bbox_hi, of, df)


def sample_field(grid: RadianceGrid, p_world):
    """Scalar convenience wrapper over RadianceGrid.sample_batch."""
    sigma, rad = grid.sample_batch(np.asarray(p_world, dtype=np.float64).reshape(1, 3))
    return float(sigma[0]), rad[0]


# ---------------------------------------------------------------------------
# Marching


@dataclass
class PathState:
    """Per-path accumulators: scalar medium throughput T, channel throughput
    T_spec (BSDF weights times transmittance), accumulated radiance L."""

    T: float = 1.0
    T_spec: np.ndarray = None
    L: np.ndarray = None
    bounce: int = 0

    def __post_init__(self):
        if self.T_spec is None:
            self.T_spec = np.ones(3)
        if self.L is None:
            self.L = np.zeros(3)
        self.T_spec = np.asarray(self.T_spec, dtype=np.float64)
        self.L = np.asarray(self.L, dtype=np.float64)


@dataclass
class MarchResult:
    """Segment-local integral: throughput factor exp(-int sigma), the
    radiance added per unit inbound throughput, and whether the caller's
    path dropped below its termination threshold during this segment."""

    throughput_factor: float
    radiance_in: np.ndarray
    terminated_early: bool


def _substep_counts(seg_len: np.ndarray, dt: float) -> np.ndarray:
    n = np.ceil(seg_len / dt).astype(np.int64)
    return np.where(seg_len > 0.0, np.maximum(n, 1), 0)


def march_arrays(grid, o, d, s0, s1, dt, L, T_spec, T, shadow_fn=None):
    """Vectorized midpoint march over per-ray segments [s0, s1].

    Mutates L (N,3), T_spec (N,3), T (N,) in place. shadow_fn, if given, is
    called per substep as shadow_fn(points, substep_index, ray_indices) and
    returns mask values in [0, 1].
    """
    seg = np.maximum(s1 - s0, 0.0)
    n = _substep_counts(seg, dt)
    n_max = int(n.max()) if len(n) else 0
    all_idx = np.arange(len(n))
    for k in range(n_max):
        act = k < n
        if not np.any(act):
            break
        ids = all_idx[act]
        delta = seg[ids] / n[ids]
        t_mid = s0[ids] + (k + 0.5) * delta
        p = o[ids] + t_mid[:, None] * d[ids]
        sigma, rad = grid.sample_batch(p)
        a = 1.0 - np.exp(-sigma * delta)
        m = 1.0
        if shadow_fn is not None:
            # Substeps with zero opacity or black radiance contribute
            # exactly zero whatever the mask, so skip their shadow rays.
            need = (a > 0.0) & (rad.max(axis=1) > 0.0)
            if np.any(need):
                m = np.ones(len(a))
                m[need] = shadow_fn(p[need], k, ids[need])
        L[ids] += T_spec[ids] * (a * m)[:, None] * rad
        keep = 1.0 - a
        T_spec[ids] *= keep[:, None]
        T[ids] *= keep


def march_segment(grid, ray: Ray, s0: float, s1: float, dt: float,
                  state: PathState, shadow_fn=None) -> PathState:
    """Advance one path state across the field segment [s0, s1] of ray.

    shadow_fn here takes a single world point and returns m in [0, 1].
    """
    if not s0 < s1:
        raise ValueError(f"need s0 < s1, got [{s0}, {s1}]")
    if dt <= 0:
        raise ValueError("march step must be > 0")
    L = state.L.copy().reshape(1, 3)
    T_spec = state.T_spec.copy().reshape(1, 3)
    T = np.array([state.T])
    fn = None
    if shadow_fn is not None:
        fn = lambda pts, k, ids: np.array([shadow_fn(pt) for pt in pts])
    march_arrays(grid, ray.origin.reshape(1, 3), ray.dir.reshape(1, 3),
                 np.array([s0]), np.array([s1]), dt, L, T_spec, T, fn)
    return replace(state, T=float(T[0]), T_spec=T_spec[0], L=L[0])


def march_result(grid, ray: Ray, s0: float, s1: float, dt: float,
                 shadow_fn=None, threshold: float = 0.0) -> MarchResult:
    """March with a fresh unit state and report the segment integral."""
    out = march_segment(grid, ray, s0, s1, dt, PathState(), shadow_fn)
    return MarchResult(
        throughput_factor=out.T,
        radiance_in=out.L,
        terminated_early=bool(np.max(out.T_spec) < threshold),
    )


def transmittance(grid, ray: Ray, s0: float, s1: float, dt: float) -> float:
    """Product over midpoint substeps of exp(-sigma_i * delta_i)."""
    if not s0 < s1:
        raise ValueError(f"need s0 < s1, got [{s0}, {s1}]")
    if dt <= 0:
        raise ValueError("march step must be > 0")
    seg = s1 - s0
    n = int(_substep_counts(np.array([seg]), dt)[0])
    delta = seg / n
    t_mid = s0 + (np.arange(n) + 0.5) * delta
    p = ray.origin[None, :] + t_mid[:, None] * ray.dir[None, :]
    sigma, _ = grid.sample_batch(p)
    return float(np.prod(np.exp(-sigma * delta)))


# ---------------------------------------------------------------------------
# Signed distance grids


class SdfGrid:
    """Trilinear signed-distance grid, negative inside geometry."""

    def __init__(self, bbox_lo, bbox_hi, phi, world_from_grid=None):
        self.bbox_lo, self.bbox_hi = _check_bbox(bbox_lo, bbox_hi)
        phi = np.asarray(phi, dtype=np.float64)
        self.res = _as_res(phi.shape)
        if not np.all(np.isfinite(phi)):
            raise ValueError("phi must be finite")
        self.phi = phi
        self.world_from_grid = world_from_grid or Transform.identity()
        self._scale = _grid_scale(self.bbox_lo, self.bbox_hi, self.res)

    def cell_size(self) -> np.ndarray:
        r = np.maximum(np.array(self.res) - 1, 1)
        return (self.bbox_hi - self.bbox_lo) / r

    def _phi_local(self, p: np.ndarray) -> np.ndarray:
        """phi at local-frame points; exterior composes box distance with
        the clamped boundary value so it stays >= 0 outside."""
        p = p.reshape(-1, 3)
        q = np.clip(p, self.bbox_lo, self.bbox_hi)
        base = _trilinear(self.phi, self.bbox_lo, self.res, q, scale=self._scale)
        outside = np.linalg.norm(p - q, axis=1)
        return np.where(outside > 0.0, np.maximum(outside + base, 0.0), base)

    def query_batch(self, p_world: np.ndarray):
        """(phi, normal, valid) at world points (N,3).

        Normals are central differences at one-cell spacing, rotated back
        to world; valid is False where the gradient degenerates.
        """
        p = np.asarray(p_world, dtype=np.float64).reshape(-1, 3)
        pl = self.world_from_grid.point(p, inverse=True)
        phi = self._phi_local(pl)
        h = self.cell_size()
        grad = np.empty((len(pl), 3))
        for ax in range(3):
            e = np.zeros(3)
            e[ax] = h[ax]
            grad[:, ax] = (self._phi_local(pl + e) - self._phi_local(pl - e)) / (2 * h[ax])
        norm = np.linalg.norm(grad, axis=1)
        valid = norm > 1e-9
        grad[valid] /= norm[valid, None]
        grad[~valid] = (0.0, 0.0, 1.0)
        n_world = self.world_from_grid.direction(grad)
        return phi, n_world, valid


def sdf_query(sdf: SdfGrid, p):
    """Scalar (phi, normal, valid) lookup."""
    phi, n, valid = sdf.query_batch(np.asarray(p, dtype=np.float64).reshape(1, 3))
    return float(phi[0]), n[0], bool(valid[0])


def grid_points(bbox_lo, bbox_hi, res):
    """World positions of all grid nodes, shape (nx*ny*nz, 3), x-fastest."""
    lo, hi = _check_bbox(bbox_lo, bbox_hi)
    res = _as_res(res)
    axes = [np.linspace(lo[i], hi[i], res[i]) if res[i] > 1 else np.array([lo[i]])
            for i in range(3)]
    zz, yy, xx = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
    return np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)


def _xfastest_to_grid(flat: np.ndarray, res) -> np.ndarray:
    nx, ny, nz = res
    extra = flat.shape[1:] if flat.ndim > 1 else ()
    return np.ascontiguousarray(
        flat.reshape((nz, ny, nx) + extra).transpose((2, 1, 0) + tuple(range(3, 3 + len(extra))))
    )


def _grid_to_xfastest(values: np.ndarray) -> np.ndarray:
    extra = tuple(range(3, values.ndim))
    return np.ascontiguousarray(values.transpose((2, 1, 0) + extra)).reshape(
        -1, *values.shape[3:]
    )


def sdf_from_function(fn, bbox_lo, bbox_hi, res) -> SdfGrid:
    pts = grid_points(bbox_lo, bbox_hi, res)
    phi = _xfastest_to_grid(np.asarray(fn(pts), dtype=np.float64), _as_res(res))
    return SdfGrid(bbox_lo, bbox_hi, phi)


# ---------------------------------------------------------------------------
# Baking


def mesh_is_watertight(vertices: np.ndarray, indices: np.ndarray) -> bool:
    """Every undirected edge must be shared by exactly two faces."""
    edges = {}
    for tri in indices:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            edges[key] = edges.get(key, 0) + 1
    return all(count == 2 for count in edges.values())


def _point_triangle_dist_sq(p: np.ndarray, a, b, c) -> np.ndarray:
    """Squared distances for points (n,1,3) against triangles (1,m,3)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.sum(ab * ap, axis=-1)
    d2 = np.sum(ac * ap, axis=-1)
    bp = p - b
    d3 = np.sum(ab * bp, axis=-1)
    d4 = np.sum(ac * bp, axis=-1)
    cp = p - c
    d5 = np.sum(ab * cp, axis=-1)
    d6 = np.sum(ac * cp, axis=-1)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = d1 / np.where(d1 - d3 != 0, d1 - d3, 1.0)
        w_ac = d2 / np.where(d2 - d6 != 0, d2 - d6, 1.0)
        t_bc = (d4 - d3) / np.where((d4 - d3) + (d5 - d6) != 0, (d4 - d3) + (d5 - d6), 1.0)
        denom = va + vb + vc
        denom = np.where(denom != 0, denom, 1.0)
        v_in = vb / denom
        w_in = vc / denom

    # Candidate closest points per Voronoi region, selected innermost-first.
    closest = a + v_in[..., None] * ab + w_in[..., None] * ac
    on_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    closest = np.where(on_bc[..., None], b + np.clip(t_bc, 0, 1)[..., None] * (c - b), closest)
    on_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    closest = np.where(on_ac[..., None], a + np.clip(w_ac, 0, 1)[..., None] * ac, closest)
    on_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    closest = np.where(on_ab[..., None], a + np.clip(v_ab, 0, 1)[..., None] * ab, closest)
    at_c = (d6 >= 0) & (d5 <= d6)
    closest = np.where(at_c[..., None], c, closest)
    at_b = (d3 >= 0) & (d4 <= d3)
    closest = np.where(at_b[..., None], b, closest)
    at_a = (d1 <= 0) & (d2 <= 0)
    closest = np.where(at_a[..., None], a, closest)
    diff = p - closest
    return np.sum(diff * diff, axis=-1)


def _unsigned_distance(points: np.ndarray, tri_verts: np.ndarray, chunk=2_000_000):
    """Min point-triangle distance, brute force over all faces."""
    m = len(tri_verts)
    a = tri_verts[None, :, 0, :]
    b = tri_verts[None, :, 1, :]
    c = tri_verts[None, :, 2, :]
    out = np.empty(len(points))
    rows = max(1, chunk // max(m, 1))
    for i in range(0, len(points), rows):
        p = points[i:i + rows, None, :]
        d2 = _point_triangle_dist_sq(p, a, b, c)
        out[i:i + rows] = np.sqrt(d2.min(axis=1))
    return out


def _parity_scanline(tri_verts: np.ndarray, axes_pts, axis: int, jitter_seed: int):
    """Inside/outside votes by counting crossings along one grid axis.

    Rows of voxels parallel to `axis` share one ray; the two cross-axis
    coordinates get a deterministic sub-cell jitter so edge-grazing rays do
    not produce systematic parity errors.
    """
    from . import rng

    u, v = [ax for ax in range(3) if ax != axis]
    xs, us, vs = axes_pts[axis], axes_pts[u], axes_pts[v]
    nu, nv = len(us), len(vs)
    cell_u = (us[-1] - us[0]) / max(nu - 1, 1) if nu > 1 else 1.0
    cell_v = (vs[-1] - vs[0]) / max(nv - 1, 1) if nv > 1 else 1.0

    row_ids = np.arange(nu * nv)
    ju = (rng.uniform(jitter_seed, row_ids, 0) - 0.5) * 0.25 * cell_u
    jv = (rng.uniform(jitter_seed, row_ids, 1) - 0.5) * 0.25 * cell_v
    uu = np.repeat(us, nv) + ju
    vv = np.tile(vs, nu) + jv

    a2 = tri_verts[:, :, [u, v]]
    x3 = tri_verts[:, :, axis]

    # 2D barycentric point-in-triangle for every (row, face) pair.
    pa = np.stack([uu, vv], axis=1)[:, None, :]
    v0 = a2[None, :, 1, :] - a2[None, :, 0, :]
    v1 = a2[None, :, 2, :] - a2[None, :, 0, :]
    v2 = pa - a2[None, :, 0, :]
    den = v0[..., 0] * v1[..., 1] - v0[..., 1] * v1[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / np.where(den != 0.0, den, 1.0)
        wa = (v2[..., 0] * v1[..., 1] - v2[..., 1] * v1[..., 0]) * inv
        wb = (v0[..., 0] * v2[..., 1] - v0[..., 1] * v2[..., 0]) * inv
    hit = (den != 0.0) & (wa >= 0) & (wb >= 0) & (wa + wb <= 1)
    x_cross = x3[None, :, 0] + wa * (x3[None, :, 1] - x3[None, :, 0]) + wb * (
        x3[None, :, 2] - x3[None, :, 0]
    )
    x_cross = np.where(hit, x_cross, np.inf)
    x_cross.sort(axis=1)

    inside = np.zeros((nu * nv, len(xs)), dtype=bool)
    for r in range(nu * nv):
        counts = np.searchsorted(x_cross[r], xs)
        inside[r] = (counts % 2) == 1

    votes = np.zeros((len(xs), len(us), len(vs)), dtype=bool)
    votes[:, :, :] = inside.reshape(nu, nv, len(xs)).transpose(2, 0, 1)
    # Reorder (axis, u, v) back to (x, y, z).
    order = np.argsort([axis, u, v])
    return votes.transpose(order)


def bake_sdf_from_mesh(vertices: np.ndarray, indices: np.ndarray, bbox_lo, bbox_hi,
                       res, jitter_seed: int = 11) -> SdfGrid:
    """Brute-force unsigned distance per voxel, sign by majority vote of
    three jittered axis-parity scans. Non-watertight input warns and bakes
    all-positive."""
    vertices = np.asarray(vertices, dtype=np.float64)
    indices = np.asarray(indices, dtype=np.int64)
    lo, hi = _check_bbox(bbox_lo, bbox_hi)
    res = _as_res(res)
    tri_verts = vertices[indices]

    pts = grid_points(lo, hi, res)
    dist = _unsigned_distance(pts, tri_verts)

    if mesh_is_watertight(vertices, indices):
        axes_pts = [np.linspace(lo[i], hi[i], res[i]) if res[i] > 1 else np.array([lo[i]])
                    for i in range(3)]
        votes = sum(
            _parity_scanline(tri_verts, axes_pts, ax, jitter_seed + ax).astype(np.int8)
            for ax in range(3)
        )
        inside = votes >= 2
    else:
        warnings.warn("mesh is not watertight; baked SDF has no interior")
        inside = np.zeros(res, dtype=bool)

    phi = _xfastest_to_grid(dist, res)
    # votes come back in (x, y, z) layout already
    phi = np.where(inside, -phi, phi)
    return SdfGrid(lo, hi, phi)


def sdf_from_density(grid: RadianceGrid, threshold_frac: float = 0.5) -> SdfGrid:
    """Collision proxy for a field: occupancy at sigma >= frac*max, then a
    Euclidean redistancing of the voxel set."""
    from scipy import ndimage

    peak = float(grid.sigma.max())
    if peak <= 0.0:
        raise ValueError("cannot derive an SDF from an all-zero density field")
    mask = grid.sigma >= threshold_frac * peak
    h = (grid.bbox_hi - grid.bbox_lo) / np.maximum(np.array(grid.res) - 1, 1)
    outside = ndimage.distance_transform_edt(~mask, sampling=h)
    inside = ndimage.distance_transform_edt(mask, sampling=h)
    return SdfGrid(grid.bbox_lo, grid.bbox_hi, outside - inside)


# ---------------------------------------------------------------------------
# File formats (.rfgrid / .sdfgrid)
#
# Header: nx, ny, nz as little-endian int32, then bbox min xyz and max xyz
# as little-endian float32. Payload: float32 samples in x-fastest order
# (index = ix + nx*(iy + ny*iz)); .rfgrid stores the sigma block then the
# RGB block (3 floats per sample), .sdfgrid stores the phi block.


def save_rfgrid(path, grid: RadianceGrid) -> None:
    nx, ny, nz = grid.res
    header = struct.pack("<3i6f", nx, ny, nz, *grid.bbox_lo, *grid.bbox_hi)
    sig = _grid_to_xfastest(grid.sigma).astype("<f4").tobytes()
    rad = _grid_to_xfastest(grid.radiance).astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header + sig + rad)


def load_rfgrid(path) -> RadianceGrid:
    with open(path, "rb") as f:
        data = f.read()
    nx, ny, nz, *box = struct.unpack_from("<3i6f", data)
    n = nx * ny * nz
    off = struct.calcsize("<3i6f")
    sig = np.frombuffer(data, dtype="<f4", count=n, offset=off).astype(np.float64)
    rad = np.frombuffer(data, dtype="<f4", count=3 * n, offset=off + 4 * n).astype(np.float64)
    res = (nx, ny, nz)
    return RadianceGrid(box[:3], box[3:],
                        _xfastest_to_grid(sig, res),
                        _xfastest_to_grid(rad.reshape(n, 3), res))


def save_sdfgrid(path, sdf: SdfGrid) -> None:
    nx, ny, nz = sdf.res
    header = struct.pack("<3i6f", nx, ny, nz, *sdf.bbox_lo, *sdf.bbox_hi)
    with open(path, "wb") as f:
        f.write(header + _grid_to_xfastest(sdf.phi).astype("<f4").tobytes())


def load_sdfgrid(path) -> SdfGrid:
    with open(path, "rb") as f:
        data = f.read()
    nx, ny, nz, *box = struct.unpack_from("<3i6f", data)
    n = nx * ny * nz
    off = struct.calcsize("<3i6f")
    phi = np.frombuffer(data, dtype="<f4", count=n, offset=off).astype(np.float64)
    return SdfGrid(box[:3], box[3:], _xfastest_to_grid(phi, (nx, ny, nz)))
