"""Flat parameter storage with named segments"""

from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Sequence, Tuple

import numpy as np

from shared.autodiff.tensor import Tensor
from shared.exceptions import NonFiniteError, ValidationError


@dataclass(frozen=True)
class Segment:
    name: str
    offset: int
    shape: Tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def stop(self) -> int:
        return self.offset + self.size


@dataclass(frozen=True)
class ParamLayout:
    """Ordered, uniquely named segments packed back to back"""

    segments: Tuple[Segment, ...]

    @classmethod
    def from_shapes(cls, shapes: Sequence[Tuple[str, Sequence[int]]]) -> "ParamLayout":
        segments: List[Segment] = []
        offset = 0
        seen = set()
        for name, shape in shapes:
            if name in seen:
                raise ValidationError(f"duplicate parameter segment '{name}'")
            seen.add(name)
            seg = Segment(name=name, offset=offset, shape=tuple(int(s) for s in shape))
            segments.append(seg)
            offset = seg.stop
        return cls(segments=tuple(segments))

    @property
    def size(self) -> int:
        return self.segments[-1].stop if self.segments else 0

    @property
    def names(self) -> List[str]:
        return [s.name for s in self.segments]

    def __getitem__(self, name: str) -> Segment:
        for seg in self.segments:
            if seg.name == name:
                return seg
        raise ValidationError(f"parameter layout has no segment '{name}'", details={"segments": self.names})

    def __contains__(self, name: str) -> bool:
        return any(s.name == name for s in self.segments)

    def to_dict(self) -> List[Dict]:
        return [{"name": s.name, "shape": list(s.shape)} for s in self.segments]

    @classmethod
    def from_dict(cls, items: Sequence[Mapping]) -> "ParamLayout":
        return cls.from_shapes([(item["name"], item["shape"]) for item in items])


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Immutable flat float64 parameters; updates produce new vectors"""

    values: np.ndarray
    layout: ParamLayout

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if values.size != self.layout.size:
            raise ValidationError(
                f"parameter vector has {values.size} values but layout needs {self.layout.size}"
            )
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("parameter vector contains non-finite values", node="params")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, layout: ParamLayout) -> "ParamVector":
        return cls(np.zeros(layout.size), layout)

    def __len__(self) -> int:
        return self.values.size

    def segment(self, name: str) -> np.ndarray:
        seg = self.layout[name]
        return self.values[seg.offset:seg.stop].reshape(seg.shape)

    def with_values(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(values, self.layout)

    def replace_segment(self, name: str, value: np.ndarray) -> "ParamVector":
        seg = self.layout[name]
        values = self.values.copy()
        values[seg.offset:seg.stop] = np.asarray(value, dtype=np.float64).reshape(-1)
        return ParamVector(values, self.layout)

    def bind(self, requires_grad: bool = False) -> "BoundParams":
        return BoundParams(Tensor(self.values.copy(), requires_grad=requires_grad), self.layout)

    def same_layout(self, other: "ParamVector") -> bool:
        return self.layout == other.layout


class BoundParams(Mapping[str, Tensor]):
    """Graph view of a ParamVector: one flat leaf, segments as sliced tensors"""

    def __init__(self, flat: Tensor, layout: ParamLayout):
        self.flat = flat
        self.layout = layout
        self._cache: Dict[str, Tensor] = {}

    def __getitem__(self, name: str) -> Tensor:
        if name not in self._cache:
            seg = self.layout[name]
            self._cache[name] = self.flat[seg.offset:seg.stop].reshape(seg.shape)
        return self._cache[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.layout.names)

    def __len__(self) -> int:
        return len(self.layout.segments)

    def __contains__(self, name) -> bool:
        return name in self.layout


def as_bound(params) -> BoundParams:
    """Accept either a ParamVector (bound as constants) or an existing BoundParams"""
    if isinstance(params, BoundParams):
        return params
    if isinstance(params, ParamVector):
        return params.bind(requires_grad=False)
    raise ValidationError(f"expected ParamVector or BoundParams, got {type(params).__name__}")
