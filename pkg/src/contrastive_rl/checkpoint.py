"""Checkpoint I/O: plain-text manifest + one little-endian float32 blob.

Each manifest line is ``<name> <dims-joined-by-x|scalar> float32 <offset>``;
the blob is the concatenation of every array in manifest order, so
save -> load -> save is byte identical.  The directory also carries the
config snapshot and a JSON with rng streams and counters; an optional
``resume.npz`` holds replay and loop state for exact continuation.
"""

import json
import os

import numpy as np

MANIFEST = "manifest.txt"
BLOB = "params.bin"
CONFIG = "config.cfg"
STATE = "state.json"
RESUME = "resume.npz"


def save(path, named_arrays, config_text: str, state: dict, resume_arrays: dict = None):
    os.makedirs(path, exist_ok=True)
    lines = []
    chunks = []
    offset = 0
    for name, arr in named_arrays:
        flat = np.ascontiguousarray(arr, dtype="<f4").reshape(-1)
        dims = "x".join(str(d) for d in np.shape(arr)) or "scalar"
        lines.append(f"{name} {dims} float32 {offset}")
        chunks.append(flat.tobytes())
        offset += flat.nbytes
    with open(os.path.join(path, MANIFEST), "w") as f:
        f.write("\n".join(lines) + "\n")
    with open(os.path.join(path, BLOB), "wb") as f:
        f.write(b"".join(chunks))
    with open(os.path.join(path, CONFIG), "w") as f:
        f.write(config_text)
    with open(os.path.join(path, STATE), "w") as f:
        json.dump(state, f, indent=1, sort_keys=True)
    if resume_arrays is not None:
        np.savez(os.path.join(path, RESUME), **resume_arrays)


def load(path):
    """Returns (arrays dict, config text, state dict)."""
    arrays = {}
    blob_path = os.path.join(path, BLOB)
    with open(blob_path, "rb") as f:
        blob = f.read()
    with open(os.path.join(path, MANIFEST)) as f:
        for raw in f:
            line = raw.strip()
            if not line:
                continue
            name, dims, dtype, offset = line.rsplit(" ", 3)
            if dtype != "float32":
                raise ValueError(f"unsupported dtype {dtype!r} in manifest")
            shape = () if dims == "scalar" else tuple(int(d) for d in dims.split("x"))
            count = int(np.prod(shape)) if shape else 1
            start = int(offset)
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=start)
            arrays[name] = arr.reshape(shape).copy()
    with open(os.path.join(path, CONFIG)) as f:
        config_text = f.read()
    with open(os.path.join(path, STATE)) as f:
        state = json.load(f)
    return arrays, config_text, state


def load_resume_arrays(path) -> dict:
    fp = os.path.join(path, RESUME)
    if not os.path.exists(fp):
        return None
    with np.load(fp, allow_pickle=False) as z:
        return {k: z[k] for k in z.files}
