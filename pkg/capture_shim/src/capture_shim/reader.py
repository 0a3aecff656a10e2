"""Selection JSONL reading: which RoIs survived mining at an iteration."""

from __future__ import annotations

import json
import os
from typing import IO


def read_selection(path: IO[str] | str | os.PathLike,
                   iteration: int) -> list[tuple[int, int]]:
    """Return the (image_id, roi_id) pairs selected at `iteration`.

    Pairs keep file order, so a trainer can mask its backward pass by
    position. An iteration absent from the file yields an empty list.
    """
    if hasattr(path, "read"):
        return _scan(path, iteration)  # type: ignore[arg-type]
    with open(path, encoding="utf-8") as f:
        return _scan(f, iteration)


def _scan(stream: IO[str], iteration: int) -> list[tuple[int, int]]:
    pairs: list[tuple[int, int]] = []
    for line in stream:
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        if obj["iter"] != iteration:
            continue
        pairs.extend(
            (int(s["image_id"]), int(s["roi_id"])) for s in obj["selected"]
        )
    return pairs
