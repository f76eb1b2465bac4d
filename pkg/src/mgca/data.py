"""Plain containers for features and annotations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, VocabularyError
from .geometry import Interval


@dataclass
class FeatureMatrix:
    """T x D float64 matrix sampled at ``rate`` rows per second."""

    data: np.ndarray
    rate: float

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise DimensionError(f"feature matrix must be 2-D, got {self.data.shape}")
        if not self.rate > 0:
            raise ContractError(f"feature rate must be positive, got {self.rate}")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return self.rows / self.rate


@dataclass(frozen=True)
class ActionInstance:
    t_s: float
    t_e: float
    label: str

    @property
    def interval(self) -> Interval:
        return Interval(self.t_s, self.t_e)


@dataclass
class AnnotationSet:
    duration: float
    instances: list[ActionInstance] = field(default_factory=list)

    def __post_init__(self):
        for a in self.instances:
            if not (0 <= a.t_s <= a.t_e <= self.duration):
                raise ContractError(f"annotation [{a.t_s}, {a.t_e}] outside [0, {self.duration}]")

    def __len__(self) -> int:
        return len(self.instances)

    def labels(self) -> set[str]:
        return {a.label for a in self.instances}

    def arrays(self, vocab: list[str] | None = None):
        """Return (starts, ends, class indices) with classes indexed into ``vocab``.

        Raises VocabularyError for labels missing from ``vocab``.
        """
        starts = np.array([a.t_s for a in self.instances], dtype=np.float64)
        ends = np.array([a.t_e for a in self.instances], dtype=np.float64)
        if vocab is None:
            return starts, ends, None
        index = {c: i for i, c in enumerate(vocab)}
        try:
            cls = np.array([index[a.label] for a in self.instances], dtype=np.int64)
        except KeyError as exc:
            raise VocabularyError(f"label {exc.args[0]!r} not in vocabulary") from None
        return starts, ends, cls

    def restricted(self, keep: set[str]) -> "AnnotationSet":
        return AnnotationSet(self.duration, [a for a in self.instances if a.label in keep])
