"""Model backends for the prediction endpoint.

The mock backend answers from a fixture table keyed by the sorted
reactant set, which makes integration tests byte-stable. A real model
only needs to implement the same two-method surface.
"""

from __future__ import annotations

import json
import threading
from collections import OrderedDict
from pathlib import Path
from typing import Protocol, Sequence


class Backend(Protocol):
    name: str

    def ready(self) -> bool: ...

    def predict(self, reactants: Sequence[str], top_k: int) -> list[str]: ...


def _key(reactants: Sequence[str]) -> tuple[str, ...]:
    return tuple(sorted(reactants))


class MockBackend:
    """Pure lookup over a fixture table; unknown reactant sets yield []. """

    name = "mock"

    def __init__(self, table: dict[tuple[str, ...], list[str]]) -> None:
        self._table = dict(table)
        self._ready = True

    @classmethod
    def from_file(cls, path: str | Path) -> "MockBackend":
        """Fixture format: [{"reactants": [smiles...], "products": [smiles...]}, ...]."""
        raw = json.loads(Path(path).read_text())
        table = {_key(entry["reactants"]): list(entry["products"]) for entry in raw}
        return cls(table)

    def ready(self) -> bool:
        return self._ready

    def predict(self, reactants: Sequence[str], top_k: int) -> list[str]:
        return list(self._table.get(_key(reactants), ()))[:top_k]


class CachingBackend:
    """LRU cache keyed by (reactant set, top_k) in front of any backend."""

    def __init__(self, inner: Backend, max_entries: int = 1024) -> None:
        self._inner = inner
        self._max = max_entries
        self._cache: OrderedDict[tuple, list[str]] = OrderedDict()
        self._lock = threading.Lock()
        self.name = inner.name

    def ready(self) -> bool:
        return self._inner.ready()

    def predict(self, reactants: Sequence[str], top_k: int) -> list[str]:
        key = (_key(reactants), top_k)
        with self._lock:
            if key in self._cache:
                self._cache.move_to_end(key)
                return list(self._cache[key])
        result = self._inner.predict(reactants, top_k)
        with self._lock:
            self._cache[key] = list(result)
            self._cache.move_to_end(key)
            while len(self._cache) > self._max:
                self._cache.popitem(last=False)
        return result
