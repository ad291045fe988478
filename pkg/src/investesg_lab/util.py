from __future__ import annotations

import json
import os
import time
import uuid
from hashlib import sha256
from pathlib import Path
from typing import Any


def now_ts() -> float:
    return time.time()


def expand_path(p: str | Path) -> Path:
    if isinstance(p, Path):
        p2 = p
    else:
        p2 = Path(p)
    return p2.expanduser()


def ensure_dir(path: Path) -> None:
    path.mkdir(parents=True, exist_ok=True)


def ensure_parent_dir(path: Path) -> None:
    ensure_dir(path.parent)


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(obj: Any, *, length: int = 12) -> str:
    return sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:length]


def atomic_write_text(dest: Path, text: str) -> None:
    """Write via a sibling temp file + rename so readers never see a torn file."""
    ensure_parent_dir(dest)
    tmp_path = dest.parent / f".{dest.name}.{uuid.uuid4().hex}.tmp"
    with tmp_path.open("w", encoding="utf-8") as wf:
        wf.write(text)
        wf.flush()
        os.fsync(wf.fileno())
    tmp_path.replace(dest)


def write_json(dest: Path, obj: Any) -> None:
    atomic_write_text(dest, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def parse_float_list(text: str) -> list[float]:
    out = [float(x) for x in text.replace(" ", "").split(",") if x]
    if not out:
        raise ValueError(f"expected a comma separated list of numbers, got {text!r}")
    return out


def parse_int_list(text: str) -> list[int]:
    """Accept "0,1,2" or a range "0-4" (inclusive)."""
    text = text.replace(" ", "")
    if "-" in text and "," not in text and not text.startswith("-"):
        lo, hi = text.split("-", 1)
        out = list(range(int(lo), int(hi) + 1))
    else:
        out = [int(x) for x in text.split(",") if x]
    if not out:
        raise ValueError(f"expected a comma separated list of integers, got {text!r}")
    return out
