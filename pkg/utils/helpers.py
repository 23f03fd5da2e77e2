import hashlib
import json
from typing import Any, Dict, Iterable, List

import numpy as np


def format_details(details: Dict[str, Any]) -> str:
    """Format a dict as a bulleted, readable list for terminal summaries."""
    if not details:
        return "None"
    lines = []
    for k, v in details.items():
        key = k.replace("_", " ").title()
        if isinstance(v, float):
            v = f"{v:.6g}"
        lines.append(f"• {key}: {v}")
    return "\n".join(lines)


def format_table(headers: List[str], rows: Iterable[Iterable[Any]]) -> str:
    """Left-aligned plain-text table."""
    rows = [[str(c) for c in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows)
    return "\n".join(lines)


def canonical_json(value: Any) -> str:
    """Key-sorted compact JSON; identical values give identical text."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def stable_hash(value: Any) -> str:
    """sha256 hex digest of the canonical JSON of ``value``."""
    return hashlib.sha256(canonical_json(value).encode("utf-8")).hexdigest()


def hash_arrays(*arrays: np.ndarray) -> str:
    """sha256 over dtype, shape and little-endian bytes of each array."""
    digest = hashlib.sha256()
    for arr in arrays:
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        digest.update(f"{le.dtype.str}{le.shape}".encode("ascii"))
        digest.update(le.tobytes())
    return digest.hexdigest()
