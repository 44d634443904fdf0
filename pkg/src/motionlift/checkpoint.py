"""Parameter checkpoints: JSON manifest plus a flat float64 blob.

`<stem>.json` maps each parameter name to its shape, in order; `<stem>.bin`
is the concatenation of the tensors as little-endian 64-bit floats in
manifest order.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DataError
from .tensor import Tensor


def save_params(stem: str | Path, params: Mapping[str, Tensor | np.ndarray]) -> None:
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    manifest: dict[str, list[int]] = {}
    chunks: list[bytes] = []
    for name, p in params.items():
        arr = p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64)
        manifest[name] = list(arr.shape)
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    stem.with_suffix(".json").write_text(json.dumps(manifest, indent=1))
    stem.with_suffix(".bin").write_bytes(b"".join(chunks))


def load_params(stem: str | Path) -> dict[str, np.ndarray]:
    stem = Path(stem)
    try:
        manifest = json.loads(stem.with_suffix(".json").read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"malformed checkpoint manifest {stem.with_suffix('.json')}: {e}") from e
    blob = stem.with_suffix(".bin").read_bytes()
    total = sum(int(np.prod(shape)) for shape in manifest.values())
    if len(blob) != total * 8:
        raise DataError(
            f"checkpoint blob {stem.with_suffix('.bin')} holds {len(blob)} bytes, "
            f"manifest expects {total * 8}"
        )
    out: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in manifest.items():
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset * 8)
        out[name] = arr.astype(np.float64).reshape(shape)
        offset += count
    return out
