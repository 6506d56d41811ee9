"""Base class for reports produced by the inference library."""

import dataclasses

import numpy as np

from .serialization import dumps


class BaseReport:
    """Serialization helpers shared by report dataclasses."""

    def to_dict(self) -> dict:
        """Return the report fields as plain python values."""
        return {
            field.name: _plain(getattr(self, field.name))
            for field in dataclasses.fields(self)
            if not field.name.startswith("_")
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())


def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {
            field.name: _plain(getattr(value, field.name))
            for field in dataclasses.fields(value)
        }
    return value
