#!/usr/bin/env python3
"""
JSON Schema Export Tool

Generates JSON schemas for the run configuration and the artifacts the CLI writes.
Exports schemas to docs/schemas/ for documentation.

Usage:
    poetry run python tools/dump_json_schemas.py
"""

import json
import sys
from pathlib import Path

# Add the schemas package to Python path
current_dir = Path(__file__).parent.parent
schemas_src = current_dir / "packages" / "schemas" / "src"
if schemas_src.exists():
    sys.path.insert(0, str(schemas_src))

try:
    from app.schemas.artifacts import Diagnostics, HistoryRow, ThetaDocument
    from app.schemas.run import RunConfig
except ImportError as e:
    print(f"Error importing schemas: {e}")
    print("Run from the workspace root with Poetry:")
    print("  poetry run python tools/dump_json_schemas.py")
    sys.exit(1)


def export_schemas() -> None:
    """Export the config and artifact models as JSON schemas"""

    output_dir = current_dir / "docs" / "schemas"
    output_dir.mkdir(parents=True, exist_ok=True)

    schemas = {
        "RunConfig": RunConfig,
        "ThetaDocument": ThetaDocument,
        "Diagnostics": Diagnostics,
        "HistoryRow": HistoryRow,
    }

    print(f"Exporting JSON schemas to {output_dir}")

    for name, schema_class in schemas.items():
        json_schema = schema_class.model_json_schema()
        output_file = output_dir / f"{name}.json"
        with open(output_file, "w", encoding="utf-8") as f:
            json.dump(json_schema, f, indent=2, sort_keys=True)
        print(f"  - {name}.json")

    index_file = output_dir / "index.json"
    index_data = {
        "title": "FourNet - JSON Schemas",
        "description": "Run configuration (YAML) and artifact (theta.json, diagnostics.json) schemas",
        "schemas": list(schemas),
    }
    with open(index_file, "w", encoding="utf-8") as f:
        json.dump(index_data, f, indent=2)

    print(f"Exported {len(schemas)} schemas")


if __name__ == "__main__":
    export_schemas()
