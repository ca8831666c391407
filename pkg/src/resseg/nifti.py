"""Minimal NIfTI-1 I/O for single-channel volumes.

Covers exactly what the pipeline needs: reading/writing `.nii` / `.nii.gz`
scalar volumes with voxel spacing from the header. Volumes are exposed as
C-ordered (D, H, W) arrays; ``spacing`` follows the same axis order.
"""

import gzip
import struct

import numpy as np

_DTYPES = {2: np.uint8, 4: np.int16, 8: np.int32, 16: np.float32, 64: np.float64, 256: np.int8, 512: np.uint16}
_CODES = {np.dtype(np.uint8): 2, np.dtype(np.int16): 4, np.dtype(np.int32): 8, np.dtype(np.float32): 16, np.dtype(np.float64): 64}

HEADER_SIZE = 348
VOX_OFFSET = 352


def _open(path, mode):
    path = str(path)
    if path.endswith(".gz"):
        if "w" in mode:
            # fixed mtime and no embedded filename keep regenerated files
            # byte-identical regardless of path or wall clock
            raw = open(path, "wb")
            gz = gzip.GzipFile("", mode, fileobj=raw, mtime=0)
            gz.myfileobj = raw  # have close() also close the underlying file
            return gz
        return gzip.GzipFile(path, mode)
    return open(path, mode)


def write_volume(path, data, spacing=(1.0, 1.0, 1.0)):
    """Write a (D, H, W) array as NIfTI-1; dtype preserved for the supported set."""
    data = np.ascontiguousarray(data)
    if data.ndim != 3:
        raise ValueError(f"expected 3-D volume, got shape {data.shape}")
    if data.dtype not in _CODES:
        data = data.astype(np.float32)
    code = _CODES[data.dtype]
    d, h, w = data.shape
    sd, sh, sw = (float(s) for s in spacing)

    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, w, h, d, 1, 1, 1, 1)
    struct.pack_into("<hh", hdr, 70, code, data.dtype.itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, sw, sh, sd, 0, 0, 0, 0)
    struct.pack_into("<f", hdr, 108, float(VOX_OFFSET))
    struct.pack_into("<ff", hdr, 112, 1.0, 0.0)  # scl_slope / scl_inter
    struct.pack_into("<hh", hdr, 252, 0, 1)  # qform / sform codes
    struct.pack_into("<4f", hdr, 280, sw, 0, 0, 0)
    struct.pack_into("<4f", hdr, 296, 0, sh, 0, 0)
    struct.pack_into("<4f", hdr, 312, 0, 0, sd, 0)
    hdr[344:348] = b"n+1\x00"

    with _open(path, "wb") as f:
        f.write(bytes(hdr))
        f.write(b"\x00\x00\x00\x00")  # no header extensions
        f.write(data.tobytes())


def read_volume(path):
    """Read a NIfTI-1 file; returns (data (D, H, W), spacing (sd, sh, sw))."""
    with _open(path, "rb") as f:
        raw = f.read()
    if len(raw) < HEADER_SIZE:
        raise ValueError(f"{path}: truncated NIfTI header")
    (size,) = struct.unpack_from("<i", raw, 0)
    if size != HEADER_SIZE:
        raise ValueError(f"{path}: not a little-endian NIfTI-1 file")
    dim = struct.unpack_from("<8h", raw, 40)
    if not 1 <= dim[0] <= 4:
        raise ValueError(f"{path}: unsupported dimensionality {dim[0]}")
    w, h, d = dim[1], max(dim[2], 1), max(dim[3], 1)
    code, _ = struct.unpack_from("<hh", raw, 70)
    if code not in _DTYPES:
        raise ValueError(f"{path}: unsupported datatype code {code}")
    pixdim = struct.unpack_from("<8f", raw, 76)
    (vox_offset,) = struct.unpack_from("<f", raw, 108)
    slope, inter = struct.unpack_from("<ff", raw, 112)

    dtype = np.dtype(_DTYPES[code]).newbyteorder("<")
    start = int(vox_offset)
    data = np.frombuffer(raw, dtype=dtype, count=w * h * d, offset=start).reshape(d, h, w)
    if slope not in (0.0, 1.0) or inter != 0.0:
        data = data * slope + inter
    spacing = (float(pixdim[3]), float(pixdim[2]), float(pixdim[1]))
    return np.array(data), spacing
