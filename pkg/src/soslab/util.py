"""Shared plumbing: errors, counter-based RNG streams, exact reductions, atomic IO."""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile

import numpy as np


class SoslabError(Exception):
    """Base class for package errors."""


class ConfigError(SoslabError):
    """Invalid or unparseable run configuration (CLI exit code 2)."""


class NonConvergenceError(SoslabError):
    """Iterative eigensolve failed to reach tolerance (CLI exit code 3)."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ResourceCapError(SoslabError):
    """A configured dimension/memory cap would be exceeded (CLI exit code 4)."""


class WindowError(SoslabError):
    """Truncation window too small even after automatic widening."""


# Philox key domains; keeps single-path, batch, and auxiliary streams disjoint.
DOMAIN_PATH = 0
DOMAIN_BATCH = 1
DOMAIN_INCREMENTS = 2
DOMAIN_OU = 3

_MASK64 = (1 << 64) - 1


def stream(seed: int, domain: int, index: int) -> np.random.Generator:
    """Independent counter-based stream keyed by (seed, domain, index)."""
    if not 0 <= index < (1 << 56):
        raise ValueError(f"stream index out of range: {index}")
    key = np.array([seed & _MASK64, ((domain & 0xFF) << 56) | index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def fsum(values) -> float:
    """Compensated (exact) sum of a 1-d array."""
    return math.fsum(np.asarray(values, dtype=float).tolist())


def fdot(a, b) -> float:
    """Compensated dot product."""
    return fsum(np.asarray(a, dtype=float) * np.asarray(b, dtype=float))


def l2_norm(a) -> float:
    return math.sqrt(fsum(np.square(np.asarray(a, dtype=float))))


def config_hash(payload: dict) -> str:
    """sha256 over the canonical JSON encoding of the scientific parameters."""
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def atomic_write_text(path: str, text: str) -> None:
    """Write via temp file + rename so readers never see partial output."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def json_dumps(obj) -> str:
    """Deterministic JSON: sorted keys, round-trip floats, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x)!r}")


def fmt_float(x: float) -> str:
    """Shortest round-trip decimal form, used for all CSV floats."""
    return repr(float(x))
