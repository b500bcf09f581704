import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from homecore.camera import Camera, CameraIntrinsics, project, project_camera_points
from homecore.errors import ConfigError, ParseError
from homecore.formats import (
    depth_from_millimeters,
    depth_to_millimeters,
    read_pgm,
    read_ply,
    read_ppm,
    write_pgm,
    write_ply,
    write_ppm,
)


class TestNetpbm:
    def test_16bit_is_big_endian(self, tmp_path):
        img = np.array([[1, 258], [65535, 0]], dtype=np.uint16)
        write_pgm(tmp_path / "d.pgm", img)
        data = (tmp_path / "d.pgm").read_bytes()
        assert data == b"P5\n2 2\n65535\n" + bytes([0, 1, 1, 2, 255, 255, 0, 0])
        assert np.array_equal(read_pgm(tmp_path / "d.pgm"), img)

    @given(hnp.arrays(np.uint8, hnp.array_shapes(min_dims=2, max_dims=2, max_side=9)))
    def test_8bit_round_trip(self, tmp_path_factory, img):
        path = tmp_path_factory.mktemp("pgm") / "m.pgm"
        write_pgm(path, img)
        back = read_pgm(path)
        assert back.dtype == np.uint8 and np.array_equal(back, img)

    def test_header_comments(self, tmp_path):
        (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n3 1\n255\n\x01\x02\x03")
        assert read_pgm(tmp_path / "c.pgm").tolist() == [[1, 2, 3]]

    @pytest.mark.parametrize("data", [b"P6\n1 1\n255\n\x00\x00\x00", b"P5\n2 2\n", b"P5\n2 2\n255\n\x00"])
    def test_malformed(self, tmp_path, data):
        (tmp_path / "x.pgm").write_bytes(data)
        with pytest.raises(ParseError):
            read_pgm(tmp_path / "x.pgm")

    def test_ppm_round_trip(self, tmp_path):
        img = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
        write_ppm(tmp_path / "i.ppm", img)
        assert np.array_equal(read_ppm(tmp_path / "i.ppm"), img)

    def test_depth_units(self):
        raw = np.array([[0, 1500, 65535]], dtype=np.uint16)
        assert depth_from_millimeters(raw).tolist() == [[0.0, 1.5, 65.535]]
        assert np.array_equal(depth_to_millimeters(depth_from_millimeters(raw)), raw)


class TestPly:
    def test_round_trip_exact(self, tmp_path):
        pts = np.random.default_rng(0).normal(size=(20, 3))
        write_ply(tmp_path / "c.ply", pts)
        assert np.array_equal(read_ply(tmp_path / "c.ply"), pts)

    def test_binary_rejected(self, tmp_path):
        (tmp_path / "b.ply").write_text("ply\nformat binary_little_endian 1.0\nend_header\n")
        with pytest.raises(ParseError):
            read_ply(tmp_path / "b.ply")


K128 = CameraIntrinsics(100.0, 100.0, 64.0, 64.0, 128, 128)


class TestCamera:
    def test_principal_ray(self):
        assert project(Camera(K128), (0, 0, 1)) == (64.0, 64.0)

    def test_offset_point(self):
        assert project(Camera(K128), (0.5, 0, 1)) == (114.0, 64.0)

    def test_behind(self):
        assert project(Camera(K128), (0, 0, -1)) is None

    def test_intrinsics_json(self):
        k = CameraIntrinsics.from_json(json.dumps(K128.to_dict()))
        assert k == K128 and k.shape == (128, 128)

    @pytest.mark.parametrize("bad", [{"fx": 0}, {"width": 0}, {"fy": -1}])
    def test_invalid_intrinsics(self, bad):
        with pytest.raises(ConfigError):
            CameraIntrinsics.from_dict({**K128.to_dict(), **bad})

    def test_look_at_frame(self):
        cam = Camera.look_at(K128, eye=(0, -2, 1), target=(0, 0, 1))
        # looking along +y with z up: camera x is world +x, camera y (down) is world -z
        assert np.allclose(cam.rotation, [[1, 0, 0], [0, 0, -1], [0, 1, 0]])
        assert project(cam, (0, 0, 1)) == pytest.approx((64.0, 64.0))
        u, v = project(cam, (0, 0, 1.5))
        assert u == pytest.approx(64.0) and v < 64.0

    def test_non_orthonormal_rotation(self):
        with pytest.raises(ConfigError):
            Camera(K128, rotation=np.diag([1.0, 1.0, 2.0]))

    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 10))
    def test_pinhole_formula(self, x, y, z):
        uv, front = project_camera_points(K128, np.array([[x, y, z]]))
        assert front[0]
        assert uv[0, 0] == pytest.approx(100 * x / z + 64)
        assert uv[0, 1] == pytest.approx(100 * y / z + 64)
