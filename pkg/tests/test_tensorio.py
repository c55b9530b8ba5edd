import numpy as np
import pytest

from mllm_lab.errors import InputError
from mllm_lab.numerics import DenseArray
from mllm_lab.tensorio import MAGIC, read_tensor, write_tensor


def test_magic_is_sixteen_bytes():
    assert len(MAGIC) == 16


def test_roundtrip(tmp_path):
    path = tmp_path / "t.bin"
    rng = np.random.default_rng(0)
    tensor = DenseArray(rng.standard_normal((3, 4, 5)))
    write_tensor(path, tensor)
    back = read_tensor(path)
    assert back.shape == (3, 4, 5)
    np.testing.assert_array_equal(back.to_numpy(), tensor.to_numpy())


def test_file_layout(tmp_path):
    path = tmp_path / "t.bin"
    write_tensor(path, DenseArray([[1.0, 2.0]]))
    raw = path.read_bytes()
    assert raw.startswith(MAGIC)
    header_end = raw.index(b"\n")
    assert b'"shape": [1, 2]' in raw[:header_end]
    payload = raw[header_end + 1 :]
    np.testing.assert_array_equal(
        np.frombuffer(payload, dtype="<f8"), [1.0, 2.0]
    )


def test_bad_magic(tmp_path):
    path = tmp_path / "t.bin"
    path.write_bytes(b"NOT.A.TENSOR.FILE" + b"\x00" * 32)
    with pytest.raises(InputError):
        read_tensor(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "t.bin"
    write_tensor(path, DenseArray(np.ones((4, 4))))
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(InputError):
        read_tensor(path)


def test_bad_header(tmp_path):
    path = tmp_path / "t.bin"
    path.write_bytes(MAGIC + b"not json\n" + b"\x00" * 8)
    with pytest.raises(InputError):
        read_tensor(path)
