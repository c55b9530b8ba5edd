"""Flat tensor file format: 16-byte magic, one JSON shape header line,
then raw little-endian float64 payload in row-major order."""

from __future__ import annotations

import json

import numpy as np

from .errors import InputError
from .numerics import DenseArray

MAGIC = b"MLLMLAB.TENSOR.1"


def write_tensor(path, tensor: DenseArray):
    header = json.dumps({"dtype": "float64", "shape": list(tensor.shape)})
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header.encode("utf-8") + b"\n")
        fh.write(tensor.to_numpy().astype("<f8").tobytes(order="C"))


def read_tensor(path) -> DenseArray:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise InputError(f"{path}: not a tensor file (bad magic {magic!r})")
        header_bytes = bytearray()
        while True:
            b = fh.read(1)
            if not b:
                raise InputError(f"{path}: truncated header")
            if b == b"\n":
                break
            header_bytes.extend(b)
        try:
            header = json.loads(header_bytes.decode("utf-8"))
            shape = tuple(int(s) for s in header["shape"])
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"{path}: bad header: {exc}") from exc
        if header.get("dtype") != "float64":
            raise InputError(f"{path}: unsupported dtype {header.get('dtype')!r}")
        payload = fh.read()
    values = np.frombuffer(payload, dtype="<f8")
    expected = int(np.prod(shape)) if shape else 1
    if values.size != expected:
        raise InputError(
            f"{path}: payload holds {values.size} values, header shape "
            f"{shape} needs {expected}"
        )
    return DenseArray(values, shape=shape)
