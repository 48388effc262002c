import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radarfields import io as rio
from radarfields.errors import BadMagic, ConfigError, CorruptHeader, InvalidFrame, IoError, VersionMismatch
from radarfields.fields import FieldModel
from radarfields.geometry import pose_matrix
from radarfields.radar import RadarConfig, RadarFrame

from conftest import randomize, tiny_field_config

CFG = RadarConfig(n_bins=6, n_azimuth=4)


def _frames(n=3, seed=0):
    rng = np.random.default_rng(seed)
    return [RadarFrame(pose_matrix(rng.normal(size=3), rng.uniform(-3, 3)), CFG.beam_azimuths(),
                       rng.uniform(0, 5, (4, 6)).astype(np.float32)) for _ in range(n)]


def test_rfld_round_trip_bit_exact(tmp_path):
    fr = _frames()
    path = tmp_path / "s.rfld"
    rio.write_sequence(fr, path, CFG, {"k": [1, 2]})
    back, cfg, extra = rio.read_sequence(path)
    assert back == fr and cfg == CFG and extra == {"k": [1, 2]}
    rio.write_sequence(back, tmp_path / "t.rfld", cfg, extra)
    assert (tmp_path / "t.rfld").read_bytes() == path.read_bytes()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 5), st.integers(0, 2 ** 31))
def test_rfld_round_trip_property(n, seed):
    fr = _frames(n, seed)
    back, _, _ = rio.decode_sequence(rio.encode_sequence(fr, CFG))
    assert back == fr


def test_rfld_header_layout():
    data = rio.encode_sequence(_frames(2), None)
    magic, ver, n, n_az, n_b, n_meta = struct.unpack_from("<4sHIIII", data)
    assert (magic, ver, n, n_az, n_b) == (b"RFLD", 1, 2, 4, 6)
    assert len(data) == 22 + n_meta + 2 * (128 + 4 * 8 + 4 * 6 * 4)


def test_rfld_truncated(tmp_path):
    data = rio.encode_sequence(_frames(), CFG)
    for cut in (10, 30, len(data) - 1):
        with pytest.raises(CorruptHeader):
            rio.decode_sequence(data[:cut])
    with pytest.raises(CorruptHeader):
        rio.decode_sequence(data + b"\0")


def test_rfld_bad_magic_and_version():
    data = bytearray(rio.encode_sequence(_frames(), CFG))
    with pytest.raises(BadMagic):
        rio.decode_sequence(b"XXXX" + bytes(data[4:]))
    data[4] = 9
    with pytest.raises(VersionMismatch):
        rio.decode_sequence(bytes(data))


def test_rfld_rejects_invalid_frames(tmp_path):
    fr = _frames()
    fr[1].power[0, 0] = -1.0
    with pytest.raises(InvalidFrame):
        rio.write_sequence(fr, tmp_path / "x.rfld")
    fr = _frames()
    fr[0].pose[0, 0] = 3.0
    with pytest.raises(InvalidFrame):
        rio.encode_sequence(fr)
    with pytest.raises(InvalidFrame):
        rio.encode_sequence([_frames()[0], RadarFrame(np.eye(4), np.zeros(2), np.zeros((2, 6)))])


def test_rfld_corrupt_payload_detected():
    data = bytearray(rio.encode_sequence(_frames(1), None))
    n_meta = struct.unpack_from("<I", data, 18)[0]
    off = 22 + n_meta + 128 + 32
    data[off:off + 4] = struct.pack("<f", -2.0)
    with pytest.raises(CorruptHeader):
        rio.decode_sequence(bytes(data))


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(IoError):
        rio.read_sequence(tmp_path / "nope.rfld")
    assert issubclass(IoError, OSError)


def test_checkpoint_round_trip(tmp_path, tiny_model):
    path = tmp_path / "m.rfck"
    rio.save_checkpoint(tiny_model, path, {"note": "x"})
    m, extra = rio.load_checkpoint(path)
    assert extra == {"note": "x"} and m.cfg == tiny_model.cfg
    for k, v in tiny_model.parameters().items():
        np.testing.assert_array_equal(m.parameters()[k], v)
    data = path.read_bytes()
    (tmp_path / "cut.rfck").write_bytes(data[:-8])
    with pytest.raises(CorruptHeader):
        rio.load_checkpoint(tmp_path / "cut.rfck")
    (tmp_path / "bad.rfck").write_bytes(b"RFLD" + data[4:])
    with pytest.raises(BadMagic):
        rio.load_checkpoint(tmp_path / "bad.rfck")


def test_json_configs(tmp_path):
    p = tmp_path / "r.json"
    rio.write_json(CFG.to_dict(), p)
    assert rio.load_radar_config(p) == CFG
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        rio.load_json(p)
    p.write_text(json.dumps({"n_bins": 4, "extra_key": 1}))
    with pytest.raises(ConfigError):
        rio.load_radar_config(p)
    p.write_text(json.dumps({"primitives": []}))
    with pytest.raises(ConfigError):
        rio.load_scene(p)


def test_csv_and_voxel_exports(tmp_path):
    hist = [{"epoch": 0, "L_W": 1.5, "L_R": 0.1, "L_P": 0.0, "total": 1.6},
            {"epoch": 1, "L_W": 1.0 / 3, "L_R": 0.2, "L_P": 0.01, "total": 0.5}]
    rio.write_history_csv(hist, tmp_path / "h.csv")
    assert rio.read_history_csv(tmp_path / "h.csv") == hist
    pts = np.array([[0.1, -2.0], [1.0 / 3, 4.0]])
    rio.write_points_csv(pts, tmp_path / "p.csv")
    np.testing.assert_array_equal(rio.read_points_csv(tmp_path / "p.csv"), pts)
    rio.write_points_csv(np.zeros((0, 2)), tmp_path / "e.csv")
    assert rio.read_points_csv(tmp_path / "e.csv").shape == (0, 2)
    g = np.random.default_rng(0).uniform(size=(3, 4, 2)).astype(np.float32)
    rio.write_voxels(g, (1.0, 2.0, 3.0), 0.5, tmp_path / "v.f32")
    back, origin, res = rio.read_voxels(tmp_path / "v.f32")
    np.testing.assert_array_equal(back, g)
    assert list(origin) == [1.0, 2.0, 3.0] and res == 0.5
