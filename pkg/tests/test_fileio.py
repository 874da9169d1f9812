import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from deformslice import fileio
from deformslice.errors import FormatError


def test_header_layout(tmp_path):
    path = tmp_path / "t.fmap"
    fileio.save_tensor(path, np.arange(6.0).reshape(2, 3))
    raw = path.read_bytes()
    assert raw[:4] == b"FMAP"
    assert struct.unpack("<HHB", raw[4:9]) == (1, 1, 2)
    assert struct.unpack("<2I", raw[9:17]) == (2, 3)
    assert struct.unpack("<6d", raw[17:]) == (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)


@given(arrays(np.float64, array_shapes(min_dims=1, max_dims=4, max_side=5),
              elements=st.floats(allow_nan=False, width=64)))
def test_round_trip_bit_exact(arr):
    import io

    buf = io.BytesIO()
    fileio.write_fmap(buf, arr)
    buf.seek(0)
    back = fileio.read_fmap(buf)
    assert back.shape == arr.shape
    assert back.tobytes() == np.ascontiguousarray(arr).tobytes()


def test_truncated_payload_names_byte_counts(tmp_path):
    path = tmp_path / "t.fmap"
    fileio.save_tensor(path, np.zeros((2, 2)))
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(FormatError, match="expected 32 bytes, got 29"):
        fileio.load_tensor(path)


def test_wrong_magic(tmp_path):
    path = tmp_path / "t.fmap"
    fileio.save_tensor(path, np.zeros(3))
    path.write_bytes(b"XMAP" + path.read_bytes()[4:])
    with pytest.raises(FormatError, match="magic"):
        fileio.load_tensor(path)


@pytest.mark.parametrize("offset,value,msg", [(4, 2, "version"), (6, 2, "dtype"), (8, 0, "rank")])
def test_bad_header_fields(tmp_path, offset, value, msg):
    path = tmp_path / "t.fmap"
    fileio.save_tensor(path, np.zeros(3))
    raw = bytearray(path.read_bytes())
    raw[offset] = value
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match=msg):
        fileio.load_tensor(path)


def test_trailing_bytes(tmp_path):
    path = tmp_path / "t.fmap"
    fileio.save_tensor(path, np.zeros(3))
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(FormatError, match="trailing"):
        fileio.load_tensor(path)


def test_sections_round_trip():
    sections = {"alpha": np.arange(4.0), "βeta": np.ones((2, 2, 2))}
    back = fileio.loads_sections(fileio.dumps_sections(sections))
    assert list(back) == ["alpha", "βeta"]
    for k in sections:
        assert back[k].tobytes() == sections[k].tobytes()


def test_sections_bad_magic_and_truncation():
    data = fileio.dumps_sections({"a": np.zeros(2)})
    with pytest.raises(FormatError, match="magic"):
        fileio.loads_sections(b"FMAP" + data[4:])
    with pytest.raises(FormatError, match="truncated"):
        fileio.loads_sections(data[:-1])
