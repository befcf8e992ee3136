"""Seed derivation, content digests and worker-count-independent block execution."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Sequence

import numpy as np


def derive_seed(master_seed: int, module: str, index: int) -> np.random.SeedSequence:
    """Seed for one work unit: a hash of (master seed, module name, unit index).

    The derivation is counter-based, so a unit's stream does not depend on how
    many units run or on which worker executes it.
    """
    digest = hashlib.sha256(f"{int(master_seed)}:{module}:{int(index)}".encode()).digest()
    return np.random.SeedSequence(int.from_bytes(digest[:16], "little"))


def _plain(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def config_digest(obj: Any) -> str:
    """Hex SHA-256 of a canonical JSON rendering; insensitive to key order."""
    text = json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def block_ranges(n_items: int, block_size: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + block_size, n_items)) for lo in range(0, n_items, block_size)]


def run_blocks(fn: Callable, tasks: Sequence, workers: int = 1) -> list:
    """Apply ``fn`` to each task, in order; results are returned in task order.

    With ``workers > 1`` tasks run in a process pool.  Because every task carries
    its own seed, the output does not depend on ``workers``.
    """
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))
