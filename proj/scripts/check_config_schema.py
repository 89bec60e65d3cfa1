#!/usr/bin/env python3
"""Validate run configuration files against configs/run_config.schema.json."""

import json
import pathlib
import sys

import jsonschema

schema_path = pathlib.Path(__file__).resolve().parent.parent / "configs" / "run_config.schema.json"
schema = json.loads(schema_path.read_text())
failed = 0
for name in sys.argv[1:]:
    try:
        jsonschema.validate(json.loads(pathlib.Path(name).read_text()), schema)
        print(f"ok   {name}")
    except jsonschema.ValidationError as e:
        print(f"FAIL {name}: {e.message} at /{'/'.join(map(str, e.absolute_path))}")
        failed += 1
    except (json.JSONDecodeError, OSError) as e:
        print(f"FAIL {name}: {e}")
        failed += 1
sys.exit(1 if failed else 0)
