"""Small filesystem helpers: atomic writes, content hashing, seed derivation."""
from __future__ import annotations

import hashlib
import os
import tempfile
from pathlib import Path

import numpy as np


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write via a temp file in the same directory plus rename.

    A crash mid-write leaves either the old file or nothing, never a
    truncated artifact.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(Path(path), text.encode("utf-8"))


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def stable_int(token: str) -> int:
    """Deterministic 32-bit int from a string (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def seed_sequence(*parts: int | str) -> np.random.SeedSequence:
    """SeedSequence keyed on a mix of ints and strings, reproducibly."""
    entropy = [stable_int(p) if isinstance(p, str) else int(p) for p in parts]
    return np.random.SeedSequence(entropy)


def derive_seed(*parts: int | str) -> int:
    """A single derived 32-bit seed for torch/numpy consumers."""
    return int(seed_sequence(*parts).generate_state(1, dtype=np.uint32)[0])
