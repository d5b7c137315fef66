"""Binary container for checkpoints and banks.

All multi-byte values are little-endian. Layout:

    magic      4 bytes (e.g. b"PPDM")
    version    u32
    n_meta     u32
    meta       n_meta x (u16 key length, key utf-8, i64 value)
    n_arrays   u32
    arrays     n_arrays x (u16 name length, name utf-8, u8 dtype code,
                           u8 ndim, ndim x u32 dims, raw data)

Dtype codes: 0=float32, 1=float64, 2=int32, 3=int64, 4=uint8.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ParameterError

FORMAT_VERSION = 1

DIFFUSION_MAGIC = b"PPDM"
CODEC_MAGIC = b"PPVC"
BANK_MAGIC = b"PPEB"
EXTRACTOR_MAGIC = b"PPFX"
SEGMODEL_MAGIC = b"PPSG"

_DTYPE_CODES = {
    np.dtype("<f4"): 0,
    np.dtype("<f8"): 1,
    np.dtype("<i4"): 2,
    np.dtype("<i8"): 3,
    np.dtype("u1"): 4,
}
_CODE_DTYPES = {code: dt for dt, code in _DTYPE_CODES.items()}


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ParameterError(f"string too long for container: {len(raw)} bytes")
    return struct.pack("<H", len(raw)) + raw


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise ParameterError("truncated container file")
    return buf


def _unpack_str(f) -> str:
    (n,) = struct.unpack("<H", _read_exact(f, 2))
    return _read_exact(f, n).decode("utf-8")


def write_container(path, magic: bytes, meta: dict, arrays: dict) -> None:
    """Write integer metadata and named arrays under a 4-byte magic."""
    if len(magic) != 4:
        raise ParameterError("magic must be exactly 4 bytes")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", len(meta)))
        for key, value in meta.items():
            f.write(_pack_str(key))
            f.write(struct.pack("<q", int(value)))
        f.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr)
            dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
            if dt not in _DTYPE_CODES:
                raise ParameterError(f"unsupported array dtype: {arr.dtype}")
            arr = arr.astype(dt, copy=False)
            f.write(_pack_str(name))
            f.write(struct.pack("<BB", _DTYPE_CODES[dt], arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def read_container(path, expect_magic: bytes | None = None):
    """Read a container back as ``(magic, version, meta, arrays)``."""
    with open(path, "rb") as f:
        magic = _read_exact(f, 4)
        if expect_magic is not None and magic != expect_magic:
            raise ParameterError(
                f"bad magic: expected {expect_magic!r}, found {magic!r}"
            )
        (version,) = struct.unpack("<I", _read_exact(f, 4))
        if version > FORMAT_VERSION:
            raise ParameterError(f"unsupported container version {version}")
        (n_meta,) = struct.unpack("<I", _read_exact(f, 4))
        meta = {}
        for _ in range(n_meta):
            key = _unpack_str(f)
            (meta[key],) = struct.unpack("<q", _read_exact(f, 8))
        (n_arrays,) = struct.unpack("<I", _read_exact(f, 4))
        arrays = {}
        for _ in range(n_arrays):
            name = _unpack_str(f)
            code, ndim = struct.unpack("<BB", _read_exact(f, 2))
            shape = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim))
            dt = _CODE_DTYPES[code]
            count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            data = _read_exact(f, count * dt.itemsize)
            arrays[name] = np.frombuffer(data, dtype=dt).reshape(shape).copy()
    return magic, version, meta, arrays


def state_dict_to_arrays(module) -> dict:
    """Flatten a torch module's state dict into float32/int64 numpy arrays."""
    arrays = {}
    for name, tensor in module.state_dict().items():
        arr = tensor.detach().cpu().numpy()
        if arr.dtype == np.float64:
            arr = arr.astype(np.float32)
        arrays[name] = arr
    return arrays


def load_arrays_into(module, arrays: dict) -> None:
    """Load container arrays back into a torch module (strict key match)."""
    import torch

    state = {name: torch.from_numpy(np.ascontiguousarray(arr)) for name, arr in arrays.items()}
    module.load_state_dict(state, strict=True)
