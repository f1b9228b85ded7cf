"""Smoke tests for the python bindings."""

import json
import math

import numpy as np
import pytest

import rsii


def test_voxel_grid_numpy_round_trip():
    data = np.arange(4 * 5 * 6, dtype=np.float32).reshape(6, 5, 4)
    grid = rsii.VoxelGrid(data, spacing=(1.0, 1.0, 2.0), origin=(0.0, -1.0, 3.0))
    assert grid.dims == [4, 5, 6]
    assert np.array_equal(grid.array, data)


def test_trilinear_on_ramp():
    data = np.zeros((4, 4, 4), dtype=np.float32)
    for i in range(4):
        data[:, :, i] = i  # ramp along x
    grid = rsii.VoxelGrid(data, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0))
    assert rsii.sample_trilinear(grid, (1.5, 1.0, 1.0)) == pytest.approx(1.5)


def test_volume_io_round_trip(tmp_path):
    data = np.random.default_rng(3).random((5, 6, 7)).astype(np.float32)
    grid = rsii.VoxelGrid(data, spacing=(0.63, 0.63, 1.5), origin=(0, 0, 0))
    path = str(tmp_path / "vol.mhd")
    rsii.save_volume(grid, path)
    back = rsii.load_volume(path)
    assert back.spacing == [0.63, 0.63, 1.5]
    assert np.array_equal(back.array, data)


def test_phantom_and_surface():
    case = rsii.make_cylinder_phantom(20.0, 3.0, 40.0, 2.0, 0.03)
    assert case.analytic.tension_per_pressure_m == pytest.approx(0.020)
    surface = rsii.extract_surface(case.labels, 1)
    assert surface.vertices.shape[1] == 3
    assert len(surface.end_rings[0]) > 0
    rsii.local_frames(surface, 12)
    normals = surface.normals
    # outward normals on a tube point radially
    radial = surface.vertices.copy()
    radial[:, 2] = 0.0
    keep = np.linalg.norm(radial, axis=1) > 1.0
    dots = np.sum(normals[keep] * radial[keep] /
                  np.linalg.norm(radial[keep], axis=1, keepdims=True), axis=1)
    assert np.all(dots > 0)


def test_registration_smoke():
    case = rsii.make_cylinder_phantom(20.0, 3.0, 30.0, 2.0, 0.0)
    cfg = rsii.RegConfig()
    cfg.pyramid_levels = 2
    cfg.iterations_per_level = 5
    field, levels = rsii.register_images(case.fixed_image, case.moving_image, cfg)
    # self-registration: essentially zero motion
    assert np.max(np.abs(field.x)) < 0.1
    for level in levels:
        energies = level["energies"]
        assert all(b <= a + 1e-9 for a, b in zip(energies, energies[1:]))


def test_percentile_convention():
    assert rsii.percentile_abs([float(i) for i in range(1, 101)], [1] * 100, 99.0) == \
        pytest.approx(99.01)
    assert rsii.percentile_abs([-4.2] * 10, [1] * 10, 99.0) == pytest.approx(4.2)


def test_full_pipeline(tmp_path):
    config = {
        "input": {
            "phantom": {
                "kind": "cylinder",
                "radius_mm": 20.0,
                "wall_thickness_mm": 3.0,
                "length_mm": 40.0,
                "spacing_mm": 2.0,
                "inflation": 0.05,
            }
        },
        "wall_thickness_mm": 3.0,
        "registration": {"pyramid_levels": 2, "iterations_per_level": 10},
        "output_dir": str(tmp_path / "out"),
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config))
    report = rsii.run_pipeline(str(config_path))
    assert report["total_vertices"] > 0
    assert not report["degenerate_rsii"]
    assert report["rsii"]["p99_abs"] > 0.0
    report_json = json.loads((tmp_path / "out" / "indices" / "report.json").read_text())
    assert report_json["tension"]["unit"] == "N/mm"
    assert report_json["strain"]["unit"] == "%"
    assert report_json["sii"]["unit"] == "mm/N"
