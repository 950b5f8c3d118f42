import json
from pathlib import Path
from typing import Any, Dict, List, Tuple

# Leaf annotations: "string", "number", "integer", "boolean", "any", unions
# such as "number|string". A trailing "?" on a leaf annotation or on a key
# marks the key optional.
_LEAF_TYPES = {
    "string": lambda v: isinstance(v, str),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
    "any": lambda v: True,
}


def _parse_annot(annot: str) -> Tuple[List[str], bool]:
    optional = annot.endswith("?")
    names = [t.strip() for t in annot.rstrip("?").split("|") if t.strip()]
    return names, optional


def _key_spec(key: str, node: Any) -> Tuple[str, bool]:
    """(key name, optional flag) of one schema entry."""
    optional = key.endswith("?") or (isinstance(node, str) and _parse_annot(node)[1])
    return key.rstrip("?"), optional


class SchemaContract:
    """Loads a JSON schema of typed leaves and validates configuration objects against it."""
    def __init__(self, schema_path: str = None):
        if schema_path is None:
            schema_path = str(Path(__file__).parent.parent / "modules" / "experiment" / "schema.json")
        self.schema_path = schema_path
        self.schema = self._load_schema()

    def _load_schema(self) -> Dict[str, Any]:
        """Read schema JSON from disk; return empty on failure."""
        p = Path(self.schema_path)
        try:
            return json.loads(p.read_text(encoding="utf-8"))
        except Exception:
            return {}

    def _validate_node(self, node: Any, schema_node: Any, path: str, errors: List[str]) -> None:
        if isinstance(schema_node, dict):
            if not isinstance(node, dict):
                errors.append(f"{path}: expected object, got {type(node).__name__}")
                return
            known = set()
            for k, v in schema_node.items():
                name, optional = _key_spec(k, v)
                known.add(name)
                if node.get(name) is None:
                    if not optional:
                        errors.append(f"{path}.{name}: missing")
                    continue
                self._validate_node(node.get(name), v, f"{path}.{name}", errors)
            for k in node:
                if k not in known:
                    errors.append(f"{path}.{k}: unknown key")
        elif isinstance(schema_node, list):
            if not isinstance(node, list):
                errors.append(f"{path}: expected array, got {type(node).__name__}")
                return
            if len(schema_node) == 0:
                return
            elem_schema = schema_node[0]
            for i, elem in enumerate(node):
                self._validate_node(elem, elem_schema, f"{path}[{i}]", errors)
        else:
            names, _ = _parse_annot(schema_node)
            if not any(_LEAF_TYPES.get(t, _LEAF_TYPES["any"])(node) for t in names):
                errors.append(f"{path}: expected {'|'.join(names)}, got {type(node).__name__}")

    def validate(self, obj: Dict[str, Any]) -> Tuple[bool, List[str]]:
        """Validate object against schema; return (ok, errors)."""
        errors: List[str] = []
        self._validate_node(obj, self.schema, "root", errors)
        return (len(errors) == 0, errors)


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; values in override win, nested dicts are merged."""
    out = dict(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = v
    return out
