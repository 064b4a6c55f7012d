import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_cloud
from urbanseg import container as ct
from urbanseg.container import FormatError
from urbanseg.ingest import read_cloud, write_cloud
from urbanseg.ply import write_ply
from urbanseg.taxonomy import AnnotatedPointCloud


@pytest.mark.parametrize("name", ["c.bin", "c.ply"])
def test_round_trip(tmp_path, name):
    cloud = random_cloud(np.random.default_rng(1), 500)
    write_cloud(cloud, tmp_path / name)
    assert read_cloud(tmp_path / name) == cloud


def test_ascii_ply_round_trip(tmp_path):
    cloud = random_cloud(np.random.default_rng(2), 50)
    write_cloud(cloud, tmp_path / "a.ply", ascii=True)
    assert read_cloud(tmp_path / "a.ply") == cloud


@pytest.mark.parametrize("name", ["e.bin", "e.ply"])
def test_empty_round_trip(tmp_path, name):
    write_cloud(AnnotatedPointCloud.empty(), tmp_path / name)
    assert len(read_cloud(tmp_path / name)) == 0


def test_binary_is_deterministic(tmp_path):
    cloud = random_cloud(np.random.default_rng(3), 100)
    write_cloud(cloud, tmp_path / "a.bin")
    write_cloud(cloud, tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 300), st.integers(0, 2**32 - 1))
def test_round_trip_property(tmp_path_factory, n, seed):
    cloud = random_cloud(np.random.default_rng(seed), n)
    path = tmp_path_factory.mktemp("rt") / "c.bin"
    write_cloud(cloud, path)
    assert read_cloud(path) == cloud


def _vertex_props(n=3, drop=None):
    props = {"x": np.zeros(n), "y": np.zeros(n), "z": np.zeros(n),
             "red": np.zeros(n, np.uint8), "green": np.zeros(n, np.uint8), "blue": np.zeros(n, np.uint8),
             "semantic": np.zeros(n, np.uint8), "instance": np.full(n, -1, np.int32),
             "category": np.full(n, 7, np.uint8)}
    props.pop(drop, None)
    return props


def test_ply_missing_instance_names_property(tmp_path):
    write_ply(tmp_path / "m.ply", [("vertex", _vertex_props(drop="instance"))])
    with pytest.raises(FormatError) as err:
        read_cloud(tmp_path / "m.ply")
    assert err.value.field == "instance"
    assert "instance" in str(err.value)


def test_ply_unknown_class_code_reports_offset(tmp_path):
    props = _vertex_props()
    props["semantic"][2] = 9
    write_ply(tmp_path / "u.ply", [("vertex", props)])
    with pytest.raises(FormatError) as err:
        read_cloud(tmp_path / "u.ply")
    data = (tmp_path / "u.ply").read_bytes()
    assert err.value.field == "semantic"
    assert data[err.value.offset] == 9


def test_container_unknown_class_code_reports_offset(tmp_path):
    cloud = random_cloud(np.random.default_rng(4), 10)
    path = tmp_path / "c.bin"
    write_cloud(cloud, path)
    sec = ct.read_container(path)["points"]
    data = bytearray(path.read_bytes())
    at = sec.offsets["semantic"] + 4
    data[at] = 42
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError) as err:
        read_cloud(path)
    assert err.value.field == "semantic" and err.value.offset == at


def test_container_truncated_and_bad_magic(tmp_path):
    cloud = random_cloud(np.random.default_rng(5), 10)
    path = tmp_path / "c.bin"
    write_cloud(cloud, path)
    data = path.read_bytes()
    path.write_bytes(data[:-7])
    with pytest.raises(FormatError) as err:
        read_cloud(path)
    assert err.value.offset is not None and err.value.field
    path.write_bytes(b"NOTMAGIC" + data[8:])
    with pytest.raises(FormatError) as err:
        read_cloud(path)
    assert err.value.field == "magic" and err.value.offset == 0


def test_container_channel_length_mismatch(tmp_path):
    path = tmp_path / "bad.bin"
    sec = ct.Section("points", {"positions": np.zeros((3, 3)), "colors": np.zeros((3, 3), np.uint8),
                                "semantic": np.zeros(3, np.uint8), "instance": np.full(3, -1),
                                "category": np.full(3, 7, np.uint8)})
    data = bytearray(ct.encode(ct.KIND_CLOUD, [sec]))
    # shrink the declared row count: channel blocks no longer line up with the file
    marker = data.index(b"points") + len(b"points")
    data[marker:marker + 8] = (2).to_bytes(8, "little")
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError):
        read_cloud(path)


def test_ply_malformed_header(tmp_path):
    path = tmp_path / "h.ply"
    path.write_bytes(b"ply\nformat ascii 1.0\nelement vertex two\nend_header\n")
    with pytest.raises(FormatError) as err:
        read_cloud(path)
    assert err.value.field == "element"


def test_wrong_kind_rejected(tmp_path):
    path = tmp_path / "k.bin"
    ct.write_container(path, ct.KIND_FEATURES, [])
    with pytest.raises(FormatError):
        read_cloud(path)
