"""Inferential models: associations, predictive random sets and conditioning."""

import json
from pathlib import Path

MANIFEST = json.loads((Path(__file__).parent / "manifest.json").read_text(encoding="utf-8"))

__version__ = MANIFEST["version"]
