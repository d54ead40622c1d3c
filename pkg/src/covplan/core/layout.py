"""State variables and their scalar layout."""

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Sequence

import numpy as np


class Kind(str, Enum):
    pose = "pose"  # x, y, theta
    landmark = "landmark"  # x, y
    scalar = "scalar"  # generic 1-D variable


KIND_DIM = {Kind.pose: 3, Kind.landmark: 2, Kind.scalar: 1}


@dataclass(frozen=True, order=True)
class VariableKey:
    """A state variable: kind plus ordinal index. Dimension is fixed by kind."""

    kind: Kind
    index: int

    @property
    def dim(self) -> int:
        return KIND_DIM[self.kind]

    def __str__(self) -> str:
        prefix = {Kind.pose: "x", Kind.landmark: "l", Kind.scalar: "s"}[self.kind]
        return f"{prefix}{self.index}"


def pose(index: int) -> VariableKey:
    return VariableKey(Kind.pose, index)


def landmark(index: int) -> VariableKey:
    return VariableKey(Kind.landmark, index)


def scalar(index: int) -> VariableKey:
    return VariableKey(Kind.scalar, index)


def total_dim(keys: Iterable[VariableKey]) -> int:
    return sum(k.dim for k in keys)


class StateLayout:
    """Ordered variables mapped to disjoint, contiguous scalar ranges covering [0, dim)."""

    def __init__(self, keys: Sequence[VariableKey] = ()):
        self._keys: tuple[VariableKey, ...] = tuple(keys)
        self._offsets: dict[VariableKey, int] = {}
        offset = 0
        for key in self._keys:
            if key in self._offsets:
                raise ValueError(f"Duplicate variable in layout: {key}")
            self._offsets[key] = offset
            offset += key.dim
        self._dim = offset

    @property
    def keys(self) -> tuple[VariableKey, ...]:
        return self._keys

    @property
    def dim(self) -> int:
        return self._dim

    def __len__(self) -> int:
        return len(self._keys)

    def __iter__(self) -> Iterator[VariableKey]:
        return iter(self._keys)

    def __contains__(self, key: object) -> bool:
        return key in self._offsets

    def __eq__(self, other: object) -> bool:
        return isinstance(other, StateLayout) and self._keys == other._keys

    def __hash__(self) -> int:
        return hash(self._keys)

    def __repr__(self) -> str:
        return f"StateLayout({len(self._keys)} vars, dim={self._dim})"

    def offset(self, key: VariableKey) -> int:
        return self._offsets[key]

    def slice(self, key: VariableKey) -> slice:
        start = self._offsets[key]
        return slice(start, start + key.dim)

    def indices(self, keys: Iterable[VariableKey]) -> np.ndarray:
        """Scalar indices of the given variables, in the given order."""
        parts = [np.arange(self._offsets[k], self._offsets[k] + k.dim) for k in keys]
        if not parts:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(parts)

    def owner(self, scalar_index: int) -> VariableKey:
        """Variable that owns a scalar index."""
        starts = np.array([self._offsets[k] for k in self._keys])
        pos = int(np.searchsorted(starts, scalar_index, side="right")) - 1
        return self._keys[pos]

    def extend(self, new_keys: Sequence[VariableKey]) -> "StateLayout":
        return StateLayout(self._keys + tuple(new_keys))

    def subset(self, keys: Sequence[VariableKey]) -> "StateLayout":
        missing = [k for k in keys if k not in self._offsets]
        if missing:
            raise KeyError(f"Not in layout: {', '.join(map(str, missing))}")
        return StateLayout(keys)


def unique_keys(*groups: Iterable[VariableKey]) -> list[VariableKey]:
    """Concatenate key groups keeping first occurrence order."""
    seen: dict[VariableKey, None] = {}
    for group in groups:
        for key in group:
            seen.setdefault(key, None)
    return list(seen)
