"""Structured event logging to <trace root>/logs/trace.jsonl."""
import json
import sys
import threading
import time
from pathlib import Path
from typing import Optional

_lock = threading.RLock()
_root: Optional[Path] = None


def set_trace_root(path: Optional[str]) -> None:
    """Redirect trace output; None restores the default ./output root."""
    global _root
    with _lock:
        _root = Path(path) if path else None


def trace_path() -> Path:
    root = _root if _root is not None else Path.cwd() / "output"
    return root / "logs" / "trace.jsonl"


def emit(event: dict) -> None:
    """Append a JSON event with timestamp to the trace file.

    Silently ignores failures but prints warning to stderr for debugging.
    """
    try:
        path = trace_path()
        event = dict(event or {})
        event.setdefault("ts", time.time())
        line = json.dumps(event, ensure_ascii=False, default=_jsonable)
        with _lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
    except Exception as e:
        try:
            print(f"[WARNING] Failed to emit log event: {e}", file=sys.stderr)
        except Exception:
            pass


def _jsonable(obj):
    # numpy scalars and arrays
    if hasattr(obj, "tolist"):
        return obj.tolist()
    return str(obj)
