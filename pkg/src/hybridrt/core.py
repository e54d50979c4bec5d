"""Shared math and color primitives.

Points, directions, and radiance triples are plain float64 numpy arrays of
shape (3,) (or (N, 3) in batched code); these helpers add the few
invariant-enforcing constructors the rest of the package relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_SRGB_CUT = 0.0031308


def vec3(x, y=None, z=None) -> np.ndarray:
    """Build a (3,) float64 vector from components or any 3-sequence."""
    if y is None:
        v = np.asarray(x, dtype=np.float64).reshape(3)
    else:
        v = np.array([x, y, z], dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector components: {v}")
    return v


def unit(v) -> np.ndarray:
    """Normalize to unit length; rejects near-zero vectors."""
    v = np.asarray(v, dtype=np.float64).reshape(3)
    n = float(np.linalg.norm(v))
    if not np.isfinite(n) or n < 1e-12:
        raise ValueError(f"cannot normalize near-zero vector {v}")
    return v / n


def spectrum(r, g=None, b=None) -> np.ndarray:
    """Non-negative linear RGB triple."""
    s = vec3(r, g, b)
    if np.any(s < 0.0):
        raise ValueError(f"negative spectrum channels: {s}")
    return s


def luminance(c) -> float:
    """Rec. 709 luminance of a linear RGB triple."""
    c = np.asarray(c, dtype=np.float64)
    return float(c[..., 0] * 0.2126 + c[..., 1] * 0.7152 + c[..., 2] * 0.0722)


def tone_map(c: np.ndarray) -> np.ndarray:
    """Linear RGB to sRGB-encoded values clamped to [0, 1].

    Per channel: 12.92*x for x <= 0.0031308, else 1.055*x^(1/2.4) - 0.055.
    Accepts any (..., 3) array.
    """
    c = np.asarray(c, dtype=np.float64)
    assert np.all(np.isfinite(c)), "tone_map requires finite input"
    lo = 12.92 * c
    hi = 1.055 * np.power(np.maximum(c, _SRGB_CUT), 1.0 / 2.4) - 0.055
    out = np.where(c <= _SRGB_CUT, lo, hi)
    # 1.055 - 0.055 lands one ulp under 1, so pin the upper rail exactly.
    out = np.where(c >= 1.0, 1.0, out)
    return np.clip(out, 0.0, 1.0)


def srgb_to_linear(s: np.ndarray) -> np.ndarray:
    """Inverse of tone_map on [0, 1] (used by synthetic test cameras)."""
    s = np.asarray(s, dtype=np.float64)
    lo = s / 12.92
    hi = np.power((s + 0.055) / 1.055, 2.4)
    return np.where(s <= 12.92 * _SRGB_CUT, lo, hi)


class Transform:
    """Invertible homogeneous 4x4 transform with a cached inverse.

    The bottom row must be (0, 0, 0, 1). Construction fails on
    non-invertible matrices; rigid factory methods keep the rotation block
    orthonormal, which dynamic field objects rely on.
    """

    __slots__ = ("m", "m_inv")

    def __init__(self, m, m_inv=None):
        m = np.asarray(m, dtype=np.float64).reshape(4, 4)
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-9):
            raise ValueError(f"transform bottom row must be (0,0,0,1), got {m[3]}")
        if m_inv is None:
            try:
                m_inv = np.linalg.inv(m)
            except np.linalg.LinAlgError as e:
                raise ValueError("transform matrix is not invertible") from e
        m_inv = np.asarray(m_inv, dtype=np.float64).reshape(4, 4)
        if not np.allclose(m @ m_inv, np.eye(4), atol=1e-6):
            raise ValueError("transform inverse check failed (m @ m_inv != I)")
        self.m = m
        self.m_inv = m_inv

    @staticmethod
    def identity() -> "Transform":
        return Transform(np.eye(4), np.eye(4))

    @staticmethod
    def translate(t) -> "Transform":
        m = np.eye(4)
        m[:3, 3] = vec3(t)
        m_inv = np.eye(4)
        m_inv[:3, 3] = -m[:3, 3]
        return Transform(m, m_inv)

    @staticmethod
    def rotate(axis, angle_rad: float) -> "Transform":
        """Rotation about a (not necessarily unit) axis through the origin."""
        a = unit(axis)
        c, s = np.cos(angle_rad), np.sin(angle_rad)
        x, y, z = a
        r = np.array(
            [
                [c + x * x * (1 - c), x * y * (1 - c) - z * s, x * z * (1 - c) + y * s],
                [y * x * (1 - c) + z * s, c + y * y * (1 - c), y * z * (1 - c) - x * s],
                [z * x * (1 - c) - y * s, z * y * (1 - c) + x * s, c + z * z * (1 - c)],
            ]
        )
        m = np.eye(4)
        m[:3, :3] = r
        m_inv = np.eye(4)
        m_inv[:3, :3] = r.T
        return Transform(m, m_inv)

    @staticmethod
    def from_quaternion(q, origin=None) -> "Transform":
        """Rotation from a unit quaternion (w, x, y, z), optional translation."""
        w, x, y, z = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
        r = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
        m = np.eye(4)
        m[:3, :3] = r
        if origin is not None:
            m[:3, 3] = vec3(origin)
        m_inv = np.eye(4)
        m_inv[:3, :3] = r.T
        m_inv[:3, 3] = -r.T @ m[:3, 3]
        return Transform(m, m_inv)

    @staticmethod
    def look_at(position, target, up=(0.0, 1.0, 0.0)) -> "Transform":
        """Camera-to-world pose: camera looks down its local -z axis."""
        position = vec3(position)
        fwd = unit(np.asarray(target, dtype=np.float64) - position)
        right = unit(np.cross(fwd, unit(up)))
        true_up = np.cross(right, fwd)
        m = np.eye(4)
        m[:3, 0] = right
        m[:3, 1] = true_up
        m[:3, 2] = -fwd
        m[:3, 3] = position
        r_inv = m[:3, :3].T
        m_inv = np.eye(4)
        m_inv[:3, :3] = r_inv
        m_inv[:3, 3] = -r_inv @ position
        return Transform(m, m_inv)

    def compose(self, other: "Transform") -> "Transform":
        """self applied after other: (self.compose(other))(p) = self(other(p))."""
        return Transform(self.m @ other.m, other.m_inv @ self.m_inv)

    def is_rigid(self, tol: float = 1e-6) -> bool:
        r = self.m[:3, :3]
        return bool(np.allclose(r @ r.T, np.eye(3), atol=tol))

    def point(self, p, inverse: bool = False) -> np.ndarray:
        """Transform a point (or an (N,3) batch of points)."""
        m = self.m_inv if inverse else self.m
        p = np.asarray(p, dtype=np.float64)
        return p @ m[:3, :3].T + m[:3, 3]

    def direction(self, d, inverse: bool = False) -> np.ndarray:
        """Transform a direction (no translation)."""
        m = self.m_inv if inverse else self.m
        d = np.asarray(d, dtype=np.float64)
        return d @ m[:3, :3].T

    def __eq__(self, other):
        return isinstance(other, Transform) and np.array_equal(self.m, other.m)

    def __repr__(self):
        return f"Transform({self.m.tolist()})"


def transform_point(t: Transform, p, inverse: bool = False) -> np.ndarray:
    """Homogeneous point transform by t.m, or by the cached inverse."""
    return t.point(p, inverse=inverse)


@dataclass
class Ray:
    """Parametric ray origin + t*dir for t in [t_min, t_max]; dir is unit."""

    origin: np.ndarray
    dir: np.ndarray
    t_min: float = 0.0
    t_max: float = np.inf

    def __post_init__(self):
        self.origin = vec3(self.origin)
        self.dir = unit(self.dir)
        if self.t_min < 0.0 or not self.t_max > self.t_min:
            raise ValueError(
                f"bad ray interval [{self.t_min}, {self.t_max}] (need 0 <= t_min < t_max)"
            )

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.dir


@dataclass
class Aabb:
    """Axis-aligned box; used for grid bounds and BVH nodes."""

    lo: np.ndarray = field(default_factory=lambda: np.full(3, np.inf))
    hi: np.ndarray = field(default_factory=lambda: np.full(3, -np.inf))

    def expand(self, pts: np.ndarray) -> "Aabb":
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
        self.lo = np.minimum(self.lo, pts.min(axis=0))
        self.hi = np.maximum(self.hi, pts.max(axis=0))
        return self

    def union(self, other: "Aabb") -> "Aabb":
        out = Aabb()
        out.lo = np.minimum(self.lo, other.lo)
        out.hi = np.maximum(self.hi, other.hi)
        return out

    def diagonal(self) -> float:
        if np.any(self.hi < self.lo):
            return 0.0
        return float(np.linalg.norm(self.hi - self.lo))
