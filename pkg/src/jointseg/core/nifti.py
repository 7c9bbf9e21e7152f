"""Minimal NIfTI-1 single-file reader/writer.

Only the subset needed here is supported: single-file ``.nii`` /
``.nii.gz``, 3D grids, little- or big-endian headers, the common
datatypes, spacing taken from ``pixdim``. Written files are always
little-endian with ``vox_offset = 352`` and a diagonal sform.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, ValidationError

HEADER_SIZE = 348
VOX_OFFSET = 352
MAGIC_SINGLE = b"n+1\x00"

# NIfTI datatype code -> numpy dtype (endianness applied separately)
_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
}
_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


def _open_for_read(path: Path):
    raw = path.open("rb")
    head = raw.read(2)
    raw.seek(0)
    if head == b"\x1f\x8b":
        return gzip.GzipFile(fileobj=raw)
    return raw


def read(path) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Read a single-file NIfTI-1 volume.

    Returns ``(data, spacing)`` with ``data`` a 3D array in (x, y, z)
    index order and ``spacing`` in mm per voxel.
    """
    path = Path(path)
    if not path.exists():
        raise FormatError(f"no such file: {path}")
    try:
        with _open_for_read(path) as f:
            hdr = f.read(HEADER_SIZE)
            if len(hdr) < HEADER_SIZE:
                raise FormatError(f"truncated header in {path}")
            (sizeof_hdr,) = struct.unpack("<i", hdr[:4])
            if sizeof_hdr == HEADER_SIZE:
                end = "<"
            elif struct.unpack(">i", hdr[:4])[0] == HEADER_SIZE:
                end = ">"
            else:
                raise FormatError(f"{path} is not a NIfTI-1 file")
            magic = hdr[344:348]
            if magic != MAGIC_SINGLE:
                raise FormatError(f"{path}: unsupported magic {magic!r}")
            dim = struct.unpack(end + "8h", hdr[40:56])
            datatype, _bitpix = struct.unpack(end + "2h", hdr[70:74])
            pixdim = struct.unpack(end + "8f", hdr[76:108])
            (vox_offset,) = struct.unpack(end + "f", hdr[108:112])
            scl_slope, scl_inter = struct.unpack(end + "2f", hdr[112:120])

            ndim = dim[0]
            if ndim < 3 or any(d > 1 for d in dim[4 : ndim + 1]):
                raise FormatError(f"{path}: only 3D volumes are supported")
            shape = tuple(int(d) for d in dim[1:4])
            if any(s < 1 for s in shape):
                raise FormatError(f"{path}: invalid dims {shape}")
            if datatype not in _DTYPES:
                raise FormatError(f"{path}: unsupported datatype code {datatype}")
            dtype = np.dtype(_DTYPES[datatype]).newbyteorder(end)

            f.read(max(int(vox_offset), HEADER_SIZE) - HEADER_SIZE)
            n = int(np.prod(shape))
            buf = f.read(n * dtype.itemsize)
            if len(buf) < n * dtype.itemsize:
                raise FormatError(f"truncated data in {path}")
            data = np.frombuffer(buf, dtype=dtype).reshape(shape, order="F")
    except (OSError, EOFError, struct.error) as exc:
        raise FormatError(f"unreadable volume {path}: {exc}") from exc

    data = np.asarray(data, dtype=data.dtype.newbyteorder("="))
    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        slope = scl_slope if scl_slope != 0.0 else 1.0
        data = data.astype(np.float32) * slope + scl_inter
    if np.issubdtype(data.dtype, np.floating) and not np.isfinite(data).all():
        raise ValidationError(f"{path}: volume contains NaN/Inf values")

    spacing = tuple(float(abs(p)) if p != 0 else 1.0 for p in pixdim[1:4])
    return data, spacing


def write(path, data: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> None:
    """Write a 3D array as a little-endian single-file NIfTI-1 volume.

    Float inputs are stored as float32, integer inputs as int16.
    """
    path = Path(path)
    data = np.asarray(data)
    if data.ndim != 3:
        raise ValidationError(f"expected 3D data, got shape {data.shape}")
    if np.issubdtype(data.dtype, np.floating):
        out = data.astype("<f4")
    else:
        if data.min() < np.iinfo(np.int16).min or data.max() > np.iinfo(np.int16).max:
            raise ValidationError("integer volume does not fit int16 storage")
        out = data.astype("<i2")
    code = _CODES[np.dtype(out.dtype.newbyteorder("="))]

    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    hdr[38] = ord("r")
    struct.pack_into("<8h", hdr, 40, 3, *out.shape, 1, 1, 1, 1)
    struct.pack_into("<2h", hdr, 70, code, out.dtype.itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, *[float(s) for s in spacing], 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<f", hdr, 108, float(VOX_OFFSET))
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope, scl_inter
    hdr[123] = 2  # NIFTI_UNITS_MM
    struct.pack_into("<2h", hdr, 252, 0, 1)  # qform_code, sform_code
    struct.pack_into("<4f", hdr, 280, float(spacing[0]), 0.0, 0.0, 0.0)
    struct.pack_into("<4f", hdr, 296, 0.0, float(spacing[1]), 0.0, 0.0)
    struct.pack_into("<4f", hdr, 312, 0.0, 0.0, float(spacing[2]), 0.0)
    hdr[344:348] = MAGIC_SINGLE

    payload = bytes(hdr) + b"\x00" * (VOX_OFFSET - HEADER_SIZE) + out.tobytes(order="F")
    if path.suffix == ".gz" or str(path).endswith(".nii.gz"):
        with gzip.open(path, "wb", compresslevel=4) as f:
            f.write(payload)
    else:
        with path.open("wb") as f:
            f.write(payload)
