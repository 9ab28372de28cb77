"""Excursion decomposition and exit-rate statistics.

A discrete path touches the boundary exactly at the steps where local time
increased.  Maximal runs of interior steps between two contact steps form
complete excursion records; the stretch before the first contact and the
open stretch after the last one are partial and excluded from rate
statistics.  Excursions shorter than one time step are below the scheme's
resolution floor, so depth thresholds should stay above ``5 * sqrt(dt)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, InvalidInputError


@dataclass(frozen=True)
class ExcursionRecord:
    """One complete excursion between consecutive boundary contacts."""

    start_time: float
    end_time: float
    start_point: np.ndarray
    end_point: np.ndarray
    max_depth: float

    @property
    def lifetime(self) -> float:
        return self.end_time - self.start_time

    @property
    def start_wall(self) -> int:
        """+1 for the top wall, -1 for the bottom (wristband convention)."""
        return 1 if self.start_point[1] > 0 else -1


def decompose(trajectory, domain) -> list[ExcursionRecord]:
    """Split a stride-1 trajectory into complete excursion records.

    Contact steps are those with a positive local-time increment; depth is
    the distance to the boundary at the recorded interior steps.  A path
    that never leaves the contact band yields an empty list.
    """
    if trajectory.record_stride != 1:
        raise InvalidInputError("excursion statistics need record_stride == 1")
    dl = np.diff(trajectory.local_time, prepend=0.0)
    if len(trajectory.times) and trajectory.times[0] > 1.5 * trajectory.dt:
        # burned-in start: the first sample's local time accumulated before
        # recording began, so its contact state is unknown; fold it into the
        # initial partial segment
        dl[0] = 0.0
    contact = np.flatnonzero(dl > 0.0)
    if len(contact) < 2:
        return []
    pos = trajectory.positions
    times = trajectory.times
    if pos.shape[1] == 2 and hasattr(domain, "half_width"):
        depth = domain.half_width - np.abs(pos[:, 1])
    else:
        depth = np.array([domain.boundary_distance(x) for x in pos])
    records = []
    for a, b in zip(contact[:-1], contact[1:]):
        if b - a < 2:
            continue  # consecutive contacts: contact-band time, no excursion
        records.append(ExcursionRecord(
            start_time=float(times[a]),
            end_time=float(times[b]),
            start_point=pos[a].copy(),
            end_point=pos[b].copy(),
            max_depth=float(depth[a + 1:b].max()),
        ))
    return records


def count_deeper_than(records, threshold: float, before: float = np.inf) -> int:
    """Number of records starting before ``before`` with depth above ``threshold``."""
    if not threshold > 0:
        raise InvalidInputError("threshold must be positive")
    return sum(1 for r in records if r.start_time < before and r.max_depth > threshold)


@dataclass(frozen=True)
class RateRow:
    eps: float
    count: int
    local_time: float
    rate: float


def rate_table_from_records(records, total_local_time: float, eps_grid) -> list[RateRow]:
    if not total_local_time > 0:
        raise InsufficientDataError("no boundary local time accumulated")
    rows = []
    for eps in eps_grid:
        n = count_deeper_than(records, eps)
        rows.append(RateRow(float(eps), n, total_local_time, n / total_local_time))
    return rows


def exit_rate_table(trajectory, domain, eps_grid) -> list[RateRow]:
    """Empirical excursion rate per unit local time for each depth threshold.

    The counts are non-increasing in the threshold, so the table is
    monotone decreasing in ``eps``.
    """
    records = decompose(trajectory, domain)
    total = float(trajectory.local_time[-1]) if len(trajectory.local_time) else 0.0
    return rate_table_from_records(records, total, eps_grid)


def rate_table_csv(rows, stream) -> None:
    stream.write("eps,count,local_time,rate\n")
    for r in rows:
        stream.write(f"{r.eps:.17g},{r.count},{r.local_time:.17g},{r.rate:.17g}\n")


def loglog_slope(rows) -> float:
    """Least-squares slope of log rate against log eps."""
    eps = np.array([r.eps for r in rows])
    rate = np.array([r.rate for r in rows])
    if np.any(rate <= 0):
        raise InsufficientDataError("zero rates in the table; horizon too short")
    return float(np.polyfit(np.log(eps), np.log(rate), 1)[0])


@dataclass
class ExcursionStats:
    """Streamed excursion accumulators from the integrator.

    Per-wall counts of complete excursions deeper than each grid threshold,
    plus integer bookkeeping that lets tests verify the exact partition of
    the horizon into initial partial + complete + contact band + final
    partial segments.
    """

    eps_grid: np.ndarray
    counts_top: np.ndarray
    counts_bottom: np.ndarray
    local_time_top: float
    local_time_bottom: float
    n_complete: int
    n_contact_steps: int
    first_contact_step: int
    last_contact_step: int
    complete_steps_total: int
    n_steps: int
    dt: float

    @property
    def local_time(self) -> float:
        return self.local_time_top + self.local_time_bottom

    def merge(self, other: "ExcursionStats") -> "ExcursionStats":
        """Pool counts and local time; per-chain partition bookkeeping is
        not meaningful across chains and is dropped (set to -1)."""
        if not np.array_equal(self.eps_grid, other.eps_grid):
            raise InvalidInputError("eps grids do not match")
        if self.dt != other.dt:
            raise InvalidInputError("time steps do not match")
        return ExcursionStats(
            eps_grid=self.eps_grid,
            counts_top=self.counts_top + other.counts_top,
            counts_bottom=self.counts_bottom + other.counts_bottom,
            local_time_top=self.local_time_top + other.local_time_top,
            local_time_bottom=self.local_time_bottom + other.local_time_bottom,
            n_complete=self.n_complete + other.n_complete,
            n_contact_steps=self.n_contact_steps + other.n_contact_steps,
            first_contact_step=-1,
            last_contact_step=-1,
            complete_steps_total=self.complete_steps_total + other.complete_steps_total,
            n_steps=self.n_steps + other.n_steps,
            dt=self.dt,
        )

    def rate_table(self) -> list[RateRow]:
        if not self.local_time > 0:
            raise InsufficientDataError("no boundary local time accumulated")
        rows = []
        for j, eps in enumerate(self.eps_grid):
            n = int(self.counts_top[j] + self.counts_bottom[j])
            rows.append(RateRow(float(eps), n, self.local_time, n / self.local_time))
        return rows

    def wall_rates(self, j: int) -> tuple[float, float]:
        """(top, bottom) rates for grid entry ``j``, per unit wall local time."""
        if not (self.local_time_top > 0 and self.local_time_bottom > 0):
            raise InsufficientDataError("a wall accumulated no local time")
        return (
            float(self.counts_top[j]) / self.local_time_top,
            float(self.counts_bottom[j]) / self.local_time_bottom,
        )
