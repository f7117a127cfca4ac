"""Validate rig and pose files against docs/rig.schema.json."""
import json
import sys

import jsonschema


def main(argv):
    with open(argv[1]) as f:
        schema = json.load(f)
    pose_schema = {"$schema": schema["$schema"], "$defs": schema["$defs"], "$ref": "#/$defs/pose_file"}
    for path in argv[2:]:
        with open(path) as f:
            doc = json.load(f)
        jsonschema.validate(doc, pose_schema if "pose" in doc else schema)
        print("ok", path)


if __name__ == "__main__":
    main(sys.argv)
