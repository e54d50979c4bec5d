import json

import numpy as np
import pytest

from hybridrt import assets
from hybridrt.field import RadianceGrid, save_rfgrid
from hybridrt.scene import (
    SceneError,
    build_scene,
    load_scene,
    parse_scene,
    serialize_scene,
)
from hybridrt.surface import save_obj


def minimal_doc():
    return {
        "field": {"path": "f.rfgrid"},
        "camera": {"position": [0, 0, 3], "look_at": [0, 0, 0],
                   "resolution": [8, 8]},
    }


def write_assets(d):
    save_rfgrid(d / "f.rfgrid", RadianceGrid.constant((0, 0, 0), (1, 1, 1), 1.0, (1, 1, 1)))
    v, f = assets.quad((-1, -1, 0), (2, 0, 0), (0, 2, 0))
    save_obj(d / "q.obj", v, f)


def test_minimal_scene_defaults(tmp_path):
    write_assets(tmp_path)
    cfg = parse_scene(json.dumps(minimal_doc()), base_dir=str(tmp_path))
    assert cfg.render.spp == 16
    assert cfg.render.n_bounces == 8
    assert cfg.render.threshold == 1e-3
    assert cfg.camera.fov_deg == 45.0
    assert cfg.field.path == "f.rfgrid"


def test_unknown_key_rejected_with_path(tmp_path):
    write_assets(tmp_path)
    doc = minimal_doc()
    doc["render"] = {"sppp": 4}
    with pytest.raises(SceneError, match="render.sppp"):
        parse_scene(json.dumps(doc), base_dir=str(tmp_path))


def test_spp_zero_names_key(tmp_path):
    write_assets(tmp_path)
    doc = minimal_doc()
    doc["render"] = {"spp": 0}
    with pytest.raises(SceneError, match="render.spp"):
        parse_scene(json.dumps(doc), base_dir=str(tmp_path))


def test_missing_mesh_path_named(tmp_path):
    write_assets(tmp_path)
    doc = minimal_doc()
    doc["meshes"] = [{"path": "nope.obj"}]
    with pytest.raises(SceneError, match="nope.obj"):
        parse_scene(json.dumps(doc), base_dir=str(tmp_path))


def test_missing_field_file_named(tmp_path):
    doc = minimal_doc()
    with pytest.raises(SceneError, match="field.path"):
        parse_scene(json.dumps(doc), base_dir=str(tmp_path))


def test_bad_json_rejected():
    with pytest.raises(SceneError, match="JSON"):
        parse_scene(b"{nope")


def test_resolution_validation(tmp_path):
    write_assets(tmp_path)
    doc = minimal_doc()
    doc["camera"]["resolution"] = [0, 8]
    with pytest.raises(SceneError, match="camera.resolution"):
        parse_scene(json.dumps(doc), base_dir=str(tmp_path))


def test_emitter_validation(tmp_path):
    write_assets(tmp_path)
    doc = minimal_doc()
    doc["emitters"] = [{"triangle": [[0, 0, 0], [1, 0, 0], [0, 1, 0]], "r_src": 1.5}]
    with pytest.raises(SceneError, match=r"emitters\[0\].r_src"):
        parse_scene(json.dumps(doc), base_dir=str(tmp_path))


def test_bsdf_validation(tmp_path):
    write_assets(tmp_path)
    doc = minimal_doc()
    doc["meshes"] = [{"path": "q.obj", "bsdf": {"type": "chrome"}}]
    with pytest.raises(SceneError, match=r"meshes\[0\].bsdf.type"):
        parse_scene(json.dumps(doc), base_dir=str(tmp_path))


def test_round_trip_equality(tmp_path):
    write_assets(tmp_path)
    doc = minimal_doc()
    doc["meshes"] = [{
        "path": "q.obj",
        "bsdf": {"type": "dielectric", "ior": 1.33, "tint": [1.0, 0.9, 0.9]},
        "transform": {"translate": [1.0, 2.0, 3.0], "rotate_axis": [0.0, 0.0, 1.0],
                      "rotate_deg": 45.0},
        "emission": [2.0, 2.0, 2.0],
        "dynamic": {"type": "rigid", "mass": 2.5, "velocity": [1.0, 0.0, 0.0]},
    }]
    doc["emitters"] = [{"triangle": [[0, 0, 0], [1, 0, 0], [0, 1, 0]], "r_src": 0.7}]
    doc["render"] = {"spp": 4, "n_bounces": 3, "threshold": 1e-4,
                     "march_step": 0.01, "seed": 11}
    doc["sim"] = {"gravity": [0.0, 0.0, -1.0], "dt": 0.01, "substeps": 2,
                  "iterations": 4, "restitution": 0.5, "friction": 0.2,
                  "damping": 0.0, "velocity_cap": 100.0}
    cfg = parse_scene(json.dumps(doc), base_dir=str(tmp_path))
    text = serialize_scene(cfg)
    cfg2 = parse_scene(text, base_dir=str(tmp_path))
    assert cfg == cfg2


def test_round_trip_minimal(tmp_path):
    write_assets(tmp_path)
    cfg = parse_scene(json.dumps(minimal_doc()), base_dir=str(tmp_path))
    assert parse_scene(serialize_scene(cfg), base_dir=str(tmp_path)) == cfg


def test_emitters_from_file(tmp_path):
    write_assets(tmp_path)
    with open(tmp_path / "em.json", "w") as f:
        json.dump([{"triangle": [[0, 0, 0], [1, 0, 0], [0, 1, 0]], "r_src": 0.4}], f)
    doc = minimal_doc()
    doc["emitters"] = "em.json"
    cfg = parse_scene(json.dumps(doc), base_dir=str(tmp_path))
    assert len(cfg.emitters) == 1
    assert cfg.emitters[0].r_src == 0.4


def test_build_scene_loads_assets(tmp_path):
    write_assets(tmp_path)
    doc = minimal_doc()
    doc["meshes"] = [{"path": "q.obj", "emission": [1.0, 1.0, 1.0]}]
    path = tmp_path / "scene.json"
    with open(path, "w") as f:
        json.dump(doc, f)
    scene = load_scene(path)
    assert scene.field is not None
    assert scene.bvh.n_faces == 2
    assert scene.blocker_bvh.n_faces == 0  # the only mesh is emissive
    assert scene.spawn_eps > 0
    assert scene.camera.resolution == (8, 8)


def test_scene_rebuild_bvh_after_deform(tmp_path):
    write_assets(tmp_path)
    doc = minimal_doc()
    doc["meshes"] = [{"path": "q.obj"}]
    path = tmp_path / "scene.json"
    with open(path, "w") as f:
        json.dump(doc, f)
    scene = load_scene(path)
    scene.meshes[0].vertices = scene.meshes[0].vertices + np.array([0, 0, 5.0])
    scene.rebuild_bvh()
    assert scene.bvh.node_lo[0][2] >= 4.9
