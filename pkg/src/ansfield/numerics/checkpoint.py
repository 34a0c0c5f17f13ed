"""Versioned binary parameter container + JSON manifest.

Layout (little-endian): magic b"ANSF", u32 format version, u32 array
count, then per array (sorted by name): u16 name length, utf-8 name,
u8 ndim, u32 dims, raw float64 data. The manifest sits next to the
binary as `<stem>.json` and carries shapes plus caller metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"ANSF"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(
    path: str | Path, params: dict[str, np.ndarray], extra: dict | None = None
) -> None:
    path = Path(path)
    names = sorted(params)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(names)))
        for name in names:
            arr = np.ascontiguousarray(params[name], dtype=np.float64)
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.astype("<f8").tobytes())
    manifest = {
        "format_version": FORMAT_VERSION,
        "arrays": {n: list(params[n].shape) for n in names},
    }
    if extra:
        manifest.update(extra)
    with open(path.with_suffix(".json"), "w") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
        f.write("\n")


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise CheckpointError("bad magic")
        version, count = struct.unpack("<II", f.read(8))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported format version {version}")
        params: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", f.read(2))
            name = f.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            n_vals = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(f.read(8 * n_vals), dtype="<f8")
            params[name] = data.reshape(shape).astype(np.float64)
    manifest_path = path.with_suffix(".json")
    manifest = {}
    if manifest_path.exists():
        with open(manifest_path) as f:
            manifest = json.load(f)
        for name, shape in manifest.get("arrays", {}).items():
            if name not in params or list(params[name].shape) != list(shape):
                raise CheckpointError(f"manifest/binary mismatch for {name}")
    if not all(np.all(np.isfinite(a)) for a in params.values()):
        raise CheckpointError("checkpoint contains non-finite values")
    return params, manifest
