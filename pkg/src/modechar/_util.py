"""Shared plumbing: thread pools and the deterministic result cache."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

__all__ = ["max_threads", "thread_map", "cache_key", "load_or_compute"]


def max_threads() -> int:
    """Worker cap: MODECHAR_THREADS if set, else the CPU count."""
    env = os.environ.get("MODECHAR_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def thread_map(fn, items, workers: int | None = None) -> list:
    """Map fn over items on a thread pool, results in input order.

    The heavy kernels release the GIL, so threads give real parallelism.
    Falls back to a plain loop for a single worker.
    """
    items = list(items)
    n = min(workers or max_threads(), len(items)) if items else 0
    if n <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _canonical(obj):
    if isinstance(obj, np.ndarray):
        return ["nd", obj.shape, [float(v) for v in obj.ravel()]]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    return obj


def cache_key(payload: dict) -> str:
    """Stable hash of a parameter dictionary (arrays included by value)."""
    text = json.dumps(_canonical(payload), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:24]


def cache_dir() -> Path:
    return Path(os.environ.get("MODECHAR_CACHE", ".cache/modechar"))


def load_or_compute(key: str, compute, enabled: bool = True) -> dict:
    """npz-backed memoization of a dict of float arrays keyed by cache_key."""
    if not enabled:
        return compute()
    path = cache_dir() / f"{key}.npz"
    if path.exists():
        with np.load(path, allow_pickle=False) as data:
            return {name: data[name] for name in data.files}
    out = compute()
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez_compressed(tmp, **out)
    os.replace(tmp, path)
    return out
