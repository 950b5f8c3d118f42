import json
from pathlib import Path
from typing import Any


def ensure_dir(p: str) -> str:
    Path(p).mkdir(parents=True, exist_ok=True)
    return p


def make_output_root() -> str:
    root = Path.cwd() / "output"
    ensure_dir(str(root))
    return str(root)


def slugify(name: str) -> str:
    s = name.strip().replace(" ", "_")
    s = "".join(ch for ch in s if ch.isalnum() or ch in {"_", "-"})
    return s or "experiment"


def create_run_folder(config_path: str) -> str:
    """Default output folder output/<config stem> for an experiment config."""
    root = make_output_root()
    folder = Path(root) / slugify(Path(config_path).stem)
    ensure_dir(str(folder))
    return str(folder)


def write_text(path: str, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def write_json(path: str, obj: Any) -> None:
    """Write obj as indented, key-sorted JSON; parent directories are created."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    write_text(path, json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n")


def read_json(path: str) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))
