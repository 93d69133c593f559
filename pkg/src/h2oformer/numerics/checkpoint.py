"""Checkpoint files: an ``.npz`` archive of named arrays plus a JSON header."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

HEADER_KEY = "__header__"


def save_checkpoint(path, arrays: dict[str, np.ndarray], header: dict) -> Path:
    path = Path(path)
    if HEADER_KEY in arrays:
        raise ValueError(f"array name {HEADER_KEY!r} is reserved")
    payload = {name: np.asarray(a) for name, a in arrays.items()}
    payload[HEADER_KEY] = np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **payload)
    tmp.replace(path)
    return path


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(Path(path), allow_pickle=False) as z:
        header = json.loads(z[HEADER_KEY].tobytes().decode("utf-8"))
        arrays = {k: z[k] for k in z.files if k != HEADER_KEY}
    return arrays, header
