"""Unit tests for schema contract."""
import json

import pytest

from infra.schema_contract import SchemaContract, deep_merge


class TestSchemaContract:
    """Test schema validation of typed leaves."""

    @pytest.fixture
    def simple_schema(self, tmp_path):
        """Create a simple test schema."""
        schema = {
            "name": "string",
            "seed": "integer",
            "alpha": "number?",
            "tags": ["string"],
            "csv?": {"path": "string"},
            "flag": "boolean",
        }
        schema_file = tmp_path / "test_schema.json"
        schema_file.write_text(json.dumps(schema))
        return str(schema_file)

    def test_valid_object(self, simple_schema):
        """Test validation of valid object."""
        contract = SchemaContract(schema_path=simple_schema)
        ok, errors = contract.validate({"name": "x", "seed": 3, "alpha": 0.5, "tags": ["a"], "flag": True})
        assert ok is True
        assert errors == []

    def test_missing_field(self, simple_schema):
        """Test validation with missing field."""
        contract = SchemaContract(schema_path=simple_schema)
        ok, errors = contract.validate({"name": "x", "tags": [], "flag": False})
        assert ok is False
        assert any("seed" in e and "missing" in e for e in errors)

    def test_optional_fields_may_be_absent(self, simple_schema):
        contract = SchemaContract(schema_path=simple_schema)
        ok, _ = contract.validate({"name": "x", "seed": 1, "tags": [], "flag": False})
        assert ok is True

    def test_wrong_types(self, simple_schema):
        """Test validation with wrong types."""
        contract = SchemaContract(schema_path=simple_schema)
        ok, errors = contract.validate({"name": 1, "seed": 1.5, "alpha": "x", "tags": "no", "flag": 1})
        assert ok is False
        joined = " | ".join(errors)
        assert "root.name: expected string" in joined
        assert "root.seed: expected integer" in joined
        assert "root.alpha: expected number" in joined
        assert "root.tags: expected array" in joined
        assert "root.flag: expected boolean" in joined

    def test_booleans_are_not_numbers(self, simple_schema):
        contract = SchemaContract(schema_path=simple_schema)
        ok, errors = contract.validate({"name": "x", "seed": True, "tags": [], "flag": False})
        assert ok is False
        assert any("seed" in e for e in errors)

    def test_unknown_key_reported(self, simple_schema):
        contract = SchemaContract(schema_path=simple_schema)
        ok, errors = contract.validate({"name": "x", "seed": 1, "tags": [], "flag": False, "sed": 2})
        assert ok is False
        assert any("root.sed: unknown key" in e for e in errors)

    def test_nested_optional_object_checked_when_present(self, simple_schema):
        contract = SchemaContract(schema_path=simple_schema)
        ok, errors = contract.validate({"name": "x", "seed": 1, "tags": [], "flag": False, "csv": {}})
        assert ok is False
        assert any("root.csv.path: missing" in e for e in errors)

    def test_missing_schema_file_is_empty(self, tmp_path):
        contract = SchemaContract(schema_path=str(tmp_path / "nope.json"))
        assert contract.schema == {}


class TestDeepMerge:

    def test_override_wins_and_nests(self):
        base = {"a": 1, "b": {"c": 2, "d": 3}}
        merged = deep_merge(base, {"b": {"c": 9}, "e": 5})
        assert merged == {"a": 1, "b": {"c": 9, "d": 3}, "e": 5}
        assert base == {"a": 1, "b": {"c": 2, "d": 3}}

    def test_lists_are_replaced(self):
        assert deep_merge({"x": [1, 2]}, {"x": [3]}) == {"x": [3]}
