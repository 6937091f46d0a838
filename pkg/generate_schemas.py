#!/usr/bin/env python3
"""
Generate JSON Schema references for every structured-text format.

This script exports the schemas in both JSON and YAML formats.
Run this whenever a document model in sgsynth/schemas.py changes.

Usage:
    python generate_schemas.py
"""

import json
import yaml
from pathlib import Path

from sgsynth.schemas import AppConfig, EnvironmentDefinition, FitReport, NetworkDefinition, RunManifest

DOCUMENTS = {
    "config": AppConfig,
    "network": NetworkDefinition,
    "environment": EnvironmentDefinition,
    "fit_report": FitReport,
    "manifest": RunManifest,
}


def main():
    """Generate document schemas in JSON and YAML formats."""
    out_dir = Path(__file__).parent / "docs" / "schemas"
    out_dir.mkdir(parents=True, exist_ok=True)

    for name, model in DOCUMENTS.items():
        schema = model.model_json_schema()

        json_path = out_dir / f"{name}.schema.json"
        with open(json_path, "w") as f:
            json.dump(schema, f, indent=2)
        print(f"Generated: {json_path}")

        yaml_path = out_dir / f"{name}.schema.yaml"
        with open(yaml_path, "w") as f:
            yaml.dump(schema, f, sort_keys=False, default_flow_style=False)
        print(f"Generated: {yaml_path}")

    print("\nSchema summary:")
    for name, model in DOCUMENTS.items():
        print(f"   {name}: {len(model.model_fields)} top-level fields")


if __name__ == "__main__":
    main()
