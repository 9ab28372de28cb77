"""Time-weighted occupancy histograms over trajectory coordinates.

Histograms are mergeable monoids: accumulation is single-writer per chain
and merges are cell-wise sums, so parallel chains combine into the same
grid as one long accumulation.  Out-of-range samples land in a counted
overflow bucket rather than being dropped silently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class Axis:
    """One histogram axis over a named trajectory coordinate."""

    name: str
    lo: float
    hi: float
    bins: int

    def __post_init__(self):
        if not (self.hi > self.lo):
            raise InvalidInputError(f"axis {self.name}: hi must exceed lo")
        if self.bins < 1:
            raise InvalidInputError(f"axis {self.name}: need at least one bin")

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.bins + 1)

    @property
    def mids(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.bins

    def index_of(self, values: np.ndarray) -> np.ndarray:
        """Bin indices; values exactly at ``hi`` fall in the last bin,
        anything else out of range maps to -1."""
        v = np.asarray(values, dtype=float)
        idx = np.floor((v - self.lo) / (self.hi - self.lo) * self.bins).astype(np.int64)
        idx[(idx == self.bins) & (v <= self.hi)] = self.bins - 1
        idx[(v < self.lo) | (v > self.hi)] = -1
        idx[(idx < 0) | (idx >= self.bins)] = -1
        return idx


class OccupancyHistogram:
    """Dense 2-d grid of non-negative time weights plus an overflow bucket."""

    def __init__(self, axes, weights=None, overflow: float = 0.0):
        axes = tuple(axes)
        if len(axes) != 2:
            raise InvalidInputError("occupancy histograms are two-dimensional")
        self.axes = axes
        shape = (axes[0].bins, axes[1].bins)
        if weights is None:
            self.weights = np.zeros(shape)
        else:
            weights = np.asarray(weights, dtype=float)
            if weights.shape != shape:
                raise InvalidInputError(f"weights shape {weights.shape} != {shape}")
            self.weights = weights.copy()
        self.overflow = float(overflow)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def accumulate(self, trajectory, burn_in: float = 0.0) -> "OccupancyHistogram":
        """Add every post-burn-in recorded sample, weight ``dt * stride``.

        Mutates and returns this histogram.
        """
        keep = trajectory.times > burn_in
        if not np.any(keep):
            return self
        w = trajectory.dt * trajectory.record_stride
        cols = [trajectory.coordinate(ax.name)[keep] for ax in self.axes]
        i1 = self.axes[0].index_of(cols[0])
        i2 = self.axes[1].index_of(cols[1])
        ok = (i1 >= 0) & (i2 >= 0)
        np.add.at(self.weights, (i1[ok], i2[ok]), w)
        self.overflow += w * float((~ok).sum())
        return self

    def merge(self, other: "OccupancyHistogram") -> "OccupancyHistogram":
        """Cell-wise sum; axes must match exactly."""
        if not isinstance(other, OccupancyHistogram) or other.axes != self.axes:
            raise InvalidInputError("histogram axes do not match")
        return OccupancyHistogram(
            self.axes, self.weights + other.weights, self.overflow + other.overflow
        )

    def normalized(self) -> np.ndarray:
        """Cell probability masses (overflow excluded); sums to 1."""
        total = self.total_weight
        if total <= 0:
            raise InvalidInputError("empty histogram cannot be normalized")
        return self.weights / total

    def to_csv(self, stream) -> None:
        """Rows ``axis1_mid,axis2_mid,weight,prob`` in row-major cell order."""
        stream.write("axis1_mid,axis2_mid,weight,prob\n")
        total = self.total_weight
        prob = self.weights / total if total > 0 else np.zeros_like(self.weights)
        m1 = self.axes[0].mids
        m2 = self.axes[1].mids
        for i in range(self.axes[0].bins):
            for j in range(self.axes[1].bins):
                stream.write(
                    f"{m1[i]:.17g},{m2[j]:.17g},{self.weights[i, j]:.17g},{prob[i, j]:.17g}\n"
                )
