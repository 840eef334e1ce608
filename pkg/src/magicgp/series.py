"""Per-sample observed series container."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError


@dataclass(frozen=True)
class SampleSeries:
    """One individual's observed time points, values, and optional binary label.

    Times must be strictly increasing; values finite; label 0, 1, or None.
    Empty series are representable (prediction handles them as a flagged
    edge case) but are rejected by training-side validation.
    """

    id: str
    times: np.ndarray
    values: np.ndarray
    label: int | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if times.size != values.size:
            raise InvalidParameterError(
                f"sample {self.id!r}: times and values differ in length "
                f"({times.size} vs {values.size})"
            )
        if times.size:
            if not np.all(np.isfinite(times)):
                raise InvalidParameterError(f"sample {self.id!r}: non-finite time stamps")
            if not np.all(np.isfinite(values)):
                raise InvalidParameterError(f"sample {self.id!r}: non-finite values")
            if times.size > 1 and not np.all(np.diff(times) > 0):
                raise InvalidParameterError(
                    f"sample {self.id!r}: times must be strictly increasing"
                )
        if self.label is not None and self.label not in (0, 1):
            raise InvalidParameterError(
                f"sample {self.id!r}: label must be 0, 1, or None, got {self.label!r}"
            )
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if self.label is not None:
            object.__setattr__(self, "label", int(self.label))

    @property
    def n_obs(self) -> int:
        return self.times.size

    def with_label(self, label: int | None) -> "SampleSeries":
        return SampleSeries(self.id, self.times, self.values, label)
