"""Regenerate docs/openapi.json from the service app definition."""

import json
from pathlib import Path

from tidecast.service import create_app

out = Path(__file__).resolve().parent.parent / "docs" / "openapi.json"
out.parent.mkdir(exist_ok=True)
schema = create_app().openapi()
out.write_text(json.dumps(schema, indent=2, sort_keys=True) + "\n")
print(f"wrote {out}")
