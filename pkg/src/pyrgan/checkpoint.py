"""Self-describing checkpoint container.

Layout: 4-byte magic ``LPG1``, little-endian uint64 header length, UTF-8 JSON
header (network specs, shapes, schedule/RNG state, block index), then raw
parameter blocks in the exact order the header lists them.  Writing is
canonical (sorted keys, no whitespace) so identical state produces identical
bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .nn import Network, NetworkSpec, build_network

MAGIC = b"LPG1"


class CheckpointError(ValueError):
    """Raised for missing/alien/corrupt checkpoint files."""


def _dtype_tag(dtype):
    return np.dtype(dtype).newbyteorder("<").str


def save_checkpoint(path, nets: dict, extra: dict | None = None):
    """Serialize named networks plus arbitrary JSON-safe state."""
    index = []
    blocks = []
    for net_name in sorted(nets):
        net = nets[net_name]
        for i, pname, p in net.parameters():
            index.append(
                {
                    "net": net_name,
                    "layer": i,
                    "name": pname,
                    "shape": list(p.shape),
                    "dtype": _dtype_tag(p.dtype),
                }
            )
            blocks.append(np.ascontiguousarray(p, dtype=p.dtype).astype(_dtype_tag(p.dtype)))
    header = {
        "format": "LPG1",
        "nets": {
            name: {"spec": net.spec.to_dict(), "dtype": _dtype_tag(net.dtype)}
            for name, net in nets.items()
        },
        "extra": extra or {},
        "params": index,
    }
    payload = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(payload)))
        f.write(payload)
        for block in blocks:
            f.write(block.tobytes())


def load_checkpoint(path):
    """Rebuild the saved networks; returns (nets dict, extra dict)."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode("utf-8"))
        nets = {}
        for name, entry in header["nets"].items():
            spec = NetworkSpec.from_dict(entry["spec"])
            dtype = np.dtype(entry["dtype"])
            # Parameter values are overwritten below; the init rng is moot.
            nets[name] = build_network(spec, np.random.default_rng(0), dtype=dtype)
        for rec in header["params"]:
            dtype = np.dtype(rec["dtype"])
            count = int(np.prod(rec["shape"])) if rec["shape"] else 1
            raw = f.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise CheckpointError(f"{path}: truncated parameter block {rec}")
            arr = np.frombuffer(raw, dtype=dtype).reshape(rec["shape"]).copy()
            net = nets[rec["net"]]
            net.layers[rec["layer"]].params[rec["name"]] = arr
    return nets, header.get("extra", {})
