"""Single-file binary tensor archive.

Layout: magic ``RCSG1\\n``, little-endian uint64 header length, UTF-8 JSON
header (sorted keys), then the raw tensor payloads back to back in header
order. Writing is fully deterministic for identical inputs, so archives can
be compared byte for byte.
"""

import json
import struct

import numpy as np

MAGIC = b"RCSG1\n"


def write_archive(path, meta, tensors):
    """Write ``meta`` (JSON-serializable dict) and named numpy arrays."""
    specs = []
    payloads = []
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        if arr.ndim:  # ascontiguousarray would promote 0-d arrays to 1-d
            arr = np.ascontiguousarray(arr)
        specs.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        payloads.append(arr.tobytes())
    header = json.dumps({"meta": meta, "tensors": specs}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for blob in payloads:
            f.write(blob)


def read_archive(path):
    """Read back (meta, tensors). Raises ValueError on a bad magic string."""
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a RCSG1 archive")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode("utf-8"))
        tensors = {}
        for spec in header["tensors"]:
            dtype = np.dtype(spec["dtype"])
            count = int(np.prod(spec["shape"])) if spec["shape"] else 1
            buf = f.read(count * dtype.itemsize)
            tensors[spec["name"]] = np.frombuffer(buf, dtype=dtype).reshape(spec["shape"]).copy()
    return header["meta"], tensors
