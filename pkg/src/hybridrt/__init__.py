"""hybridrt: hybrid surface/volume path tracer with HDR calibration,
emitter estimation, and XPBD dynamics."""

__version__ = "0.1.0"

from .core import Ray, Transform, tone_map, transform_point
from .field import (
    MarchResult,
    PathState,
    RadianceGrid,
    SdfGrid,
    bake_sdf_from_mesh,
    march_segment,
    sample_field,
    sdf_query,
    transmittance,
)
from .images import HdrImage, read_pfm, read_ppm, write_pfm, write_ppm
from .render import Camera, EmitterSet, finalize, render, shadow_mask, trace_path
from .scene import SceneConfig, build_scene, load_scene, parse_scene, serialize_scene
from .surface import (
    Bsdf,
    BsdfSample,
    Bvh,
    Dielectric,
    Intersection,
    Lambertian,
    Mirror,
    TriangleMesh,
    build_bvh,
    eval_emission,
    intersect,
    load_obj,
    sample_bsdf,
)

__all__ = [name for name in dir() if not name.startswith("_")]
