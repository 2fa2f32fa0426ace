"""Binary checkpoint layout shared by KGE models and MLPs.

Layout::

    WELDKGE-CKPT 1\\n
    <one-line JSON header>\\n
    <float64 little-endian arrays, concatenated in header order>

The header always carries ``kind`` and ``arrays`` (a list of
``[name, shape]`` pairs); other keys are model specific.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DataError

MAGIC = b"WELDKGE-CKPT 1\n"


def write_arrays(path: str | Path, header: Mapping, arrays: Mapping[str, np.ndarray]) -> None:
    head = dict(header)
    head["arrays"] = [[name, list(a.shape)] for name, a in arrays.items()]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(head, sort_keys=True).encode("utf-8") + b"\n")
        for a in arrays.values():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_arrays(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        with open(path, "rb") as fh:
            if fh.readline() != MAGIC:
                raise DataError(f"{path}: not a checkpoint file")
            header = json.loads(fh.readline().decode("utf-8"))
            body = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: corrupt checkpoint header") from exc
    arrays, offset = {}, 0
    for name, shape in header.get("arrays", []):
        n = int(np.prod(shape)) if shape else 1
        end = offset + 8 * n
        if end > len(body):
            raise DataError(f"{path}: truncated checkpoint")
        arrays[name] = np.frombuffer(body[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        offset = end
    if offset != len(body):
        raise DataError(f"{path}: trailing bytes in checkpoint")
    return header, arrays
