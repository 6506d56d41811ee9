"""JSON and CSV writers with reproducible float formatting."""

import csv
import json
import math
import re
from pathlib import Path

from ..const import FLOAT_FORMAT

_FLOAT_TOKEN = "__imkit_float__"
_TOKEN_RE = re.compile(rf'"{_FLOAT_TOKEN}([^"]*)"')


def format_float(value: float) -> str:
    """Render a float with 17 significant digits."""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, FLOAT_FORMAT)


def _tokenize(obj):
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return None
        return f"{_FLOAT_TOKEN}{format_float(obj)}"
    if isinstance(obj, dict):
        return {key: _tokenize(item) for key, item in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_tokenize(item) for item in obj]
    return obj


def dumps(obj) -> str:
    """Dump to JSON, floats at 17 significant digits, keys in insertion order."""
    text = json.dumps(_tokenize(obj), indent=2, ensure_ascii=False)
    return _TOKEN_RE.sub(r"\1", text) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def write_csv(path, header, rows) -> Path:
    """Write rows of numbers under a header; floats use 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [
                    format_float(item) if not isinstance(item, str) else item
                    for item in row
                ]
            )
    return path


def read_column_csv(path) -> list[float]:
    """Read a single numeric column, skipping a non-numeric header line."""
    values = []
    with Path(path).open(newline="", encoding="utf-8") as handle:
        for line_number, row in enumerate(csv.reader(handle)):
            if not row or not row[0].strip():
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if line_number == 0:
                    continue
                raise
    return values
