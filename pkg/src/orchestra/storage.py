"""Durable key-value storage that outlives any engine.

One JSON file per store.  Every mutation rewrites the whole document to a
sibling temp file, fsyncs, and renames it over the old one, so a store is
always a complete, parseable snapshot: what ``get`` returns after a
restart is bit-exact what ``put`` acknowledged before it.  Values keep
their variant (the integer 1 and the double 1.0 survive as themselves).
"""

from __future__ import annotations

import json
import os
import threading

from .errors import StorageError
from .state import UNDEFINED, Value, check_value, check_var_name


class Storage:
    """A file-backed key-value store with atomic, durable writes."""

    def __init__(self, path: str):
        self.path = str(path)
        self._lock = threading.Lock()
        self._data: dict[str, Value] = {}
        self._load()

    def _load(self) -> None:
        try:
            with open(self.path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            return
        except (OSError, json.JSONDecodeError) as e:
            raise StorageError(f"cannot read store {self.path!r}: {e}") from e
        if not isinstance(raw, dict):
            raise StorageError(f"store {self.path!r} is not a JSON object")
        for k, v in raw.items():
            self._data[check_var_name(k)] = check_value(v)

    def _persist(self) -> None:
        tmp = f"{self.path}.tmp"
        try:
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(self._data, fh, separators=(",", ":"), ensure_ascii=False,
                          allow_nan=False, sort_keys=True)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.path)
        except (OSError, ValueError) as e:
            raise StorageError(f"cannot write store {self.path!r}: {e}") from e

    def get(self, key: str):
        with self._lock:
            return self._data.get(key, UNDEFINED)

    def put(self, key: str, value: Value) -> None:
        check_var_name(key)
        check_value(value)
        with self._lock:
            self._data[key] = value
            self._persist()

    def delete(self, key: str) -> None:
        with self._lock:
            if key in self._data:
                del self._data[key]
                self._persist()

    def keys(self) -> list[str]:
        with self._lock:
            return sorted(self._data)
