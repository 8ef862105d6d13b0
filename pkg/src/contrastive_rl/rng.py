"""Seedable counter-based random streams (Philox), one per subsystem.

Separate streams keep paired experiment variants comparable: the env
stream yields the same episode initializations regardless of how many
draws the agent or augmentation streams consumed.
"""

import numpy as np

STREAMS = ("env", "init", "augment", "action", "eval")
_STREAM_IDS = {name: i + 1 for i, name in enumerate(STREAMS)}


def stream(seed: int, name: str) -> np.random.Generator:
    if name not in _STREAM_IDS:
        raise ValueError(f"unknown rng stream {name!r}; expected one of {STREAMS}")
    key = np.array([np.uint64(seed), np.uint64(_STREAM_IDS[name])], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def make_streams(seed: int) -> dict:
    return {name: stream(seed, name) for name in STREAMS}


def get_state(gen: np.random.Generator) -> dict:
    """JSON-friendly snapshot of a generator's full state."""
    st = gen.bit_generator.state
    return {
        "bit_generator": st["bit_generator"],
        "counter": [int(x) for x in st["state"]["counter"]],
        "key": [int(x) for x in st["state"]["key"]],
        "buffer": [int(x) for x in st["buffer"]],
        "buffer_pos": int(st["buffer_pos"]),
        "has_uint32": int(st["has_uint32"]),
        "uinteger": int(st["uinteger"]),
    }


def set_state(gen: np.random.Generator, snap: dict):
    gen.bit_generator.state = {
        "bit_generator": snap["bit_generator"],
        "state": {
            "counter": np.array(snap["counter"], dtype=np.uint64),
            "key": np.array(snap["key"], dtype=np.uint64),
        },
        "buffer": np.array(snap["buffer"], dtype=np.uint64),
        "buffer_pos": snap["buffer_pos"],
        "has_uint32": snap["has_uint32"],
        "uinteger": snap["uinteger"],
    }
