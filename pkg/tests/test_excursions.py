import math
from dataclasses import replace

import numpy as np
import pytest

from spindrift.domain import Wristband
from spindrift.errors import InsufficientDataError, InvalidInputError
from spindrift.excursions import (ExcursionRecord, count_deeper_than, decompose,
                                  exit_rate_table, loglog_slope,
                                  rate_table_from_records)
from spindrift.integrator import AnalysisRequest, Trajectory, run_analysis


def synthetic_trajectory(y_path, dl_path, dt=0.1, burn_time=0.0, burn_local=0.0):
    """Hand-built stride-1 trajectory with prescribed transverse path and
    local-time increments; optional burn-in offsets."""
    y = np.asarray(y_path, dtype=float)
    dl = np.asarray(dl_path, dtype=float)
    n = len(y)
    times = burn_time + dt * np.arange(1, n + 1)
    L = burn_local + np.cumsum(dl)
    pos = np.column_stack([np.zeros(n), y])
    return Trajectory(
        times=times, positions=pos, spins=np.zeros((n, 1)), local_time=L,
        local_time_top=None, local_time_bottom=None, dt=dt, record_stride=1,
        seed=0, initial_x=np.zeros(2), initial_s=np.zeros(1),
        final_position=pos[-1], final_spin=np.zeros(1), final_local_time=L[-1],
        n_steps=n, damping_residual=-1.0,
    )


@pytest.fixture
def band():
    return Wristband()


class TestDecompose:
    def test_no_contact_gives_empty_list(self, band):
        traj = synthetic_trajectory([0.0] * 10, [0.0] * 10)
        assert decompose(traj, band) == []

    def test_contact_band_only_gives_empty_list(self, band):
        # consecutive contact steps, never an interior step between them
        traj = synthetic_trajectory([1.0] * 6, [0.1] * 6)
        assert decompose(traj, band) == []

    def test_single_excursion_fixture(self, band):
        # contact, 10 interior steps dipping to depth 0.5, contact
        y = [1.0] + [0.9, 0.8, 0.7, 0.6, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95] + [1.0]
        dl = [0.05] + [0.0] * 10 + [0.07]
        traj = synthetic_trajectory(y, dl)
        records = decompose(traj, band)
        assert len(records) == 1
        rec = records[0]
        assert math.isclose(rec.max_depth, 0.5)
        assert math.isclose(rec.lifetime, 11 * 0.1)
        assert abs(rec.start_point[1]) == 1.0
        assert abs(rec.end_point[1]) == 1.0

    def test_partials_excluded(self, band):
        # interior prefix (partial), one complete excursion, interior suffix
        y = [0.5, 0.7] + [1.0] + [0.8] + [1.0] + [0.9, 0.8]
        dl = [0.0, 0.0] + [0.1] + [0.0] + [0.1] + [0.0, 0.0]
        traj = synthetic_trajectory(y, dl)
        records = decompose(traj, band)
        assert len(records) == 1
        assert math.isclose(records[0].max_depth, 0.2)

    def test_requires_unit_stride(self, band):
        traj = synthetic_trajectory([1.0, 0.5, 1.0], [0.1, 0.0, 0.1])
        traj.record_stride = 2
        with pytest.raises(InvalidInputError):
            decompose(traj, band)

    def test_wall_attribution(self, band):
        y = [1.0, 0.5, -1.0, -0.5, 1.0]
        dl = [0.1, 0.0, 0.1, 0.0, 0.1]
        traj = synthetic_trajectory(y, dl)
        records = decompose(traj, band)
        assert [r.start_wall for r in records] == [1, -1]

    def test_burned_start_not_mistaken_for_contact(self, band):
        # pre-burn local time makes the first sample's increment look huge;
        # it must fold into the initial partial segment, not open a record
        y = [0.5] + [1.0] + [0.8] + [1.0]
        dl = [0.0] + [0.1] + [0.0] + [0.1]
        plain = decompose(synthetic_trajectory(y, dl), band)
        burned = decompose(
            synthetic_trajectory(y, dl, burn_time=7.0, burn_local=3.5), band)
        assert len(plain) == len(burned) == 1
        assert math.isclose(burned[0].max_depth, 0.2)


class TestCounting:
    def make_records(self, depths):
        return [ExcursionRecord(start_time=i * 1.0, end_time=i + 0.5,
                                start_point=np.array([0.0, 1.0]),
                                end_point=np.array([0.0, 1.0]),
                                max_depth=d)
                for i, d in enumerate(depths)]

    def test_threshold_above_all_depths(self):
        assert count_deeper_than(self.make_records([0.1, 0.2]), 0.9) == 0

    def test_mixed_depths(self):
        records = self.make_records([0.1, 0.4, 0.6])
        assert count_deeper_than(records, 0.3) == 2

    def test_before_filter(self):
        records = self.make_records([0.5, 0.5, 0.5])
        assert count_deeper_than(records, 0.3, before=1.5) == 2

    def test_counts_order_free(self):
        records = self.make_records([0.05, 0.3, 0.8, 0.2])
        rows_fwd = rate_table_from_records(records, 2.0, [0.1, 0.25])
        rows_rev = rate_table_from_records(records[::-1], 2.0, [0.1, 0.25])
        assert [(r.count, r.rate) for r in rows_fwd] == \
               [(r.count, r.rate) for r in rows_rev]

    def test_rate_is_count_over_local_time(self):
        records = self.make_records([0.5, 0.4])
        rows = rate_table_from_records(records, 4.0, [0.3])
        assert rows[0].count == 2
        assert math.isclose(rows[0].rate, 0.5)

    def test_monotone_in_threshold(self):
        records = self.make_records(np.linspace(0.01, 0.9, 37))
        rows = rate_table_from_records(records, 1.0, [0.05, 0.1, 0.2, 0.4])
        counts = [r.count for r in rows]
        assert counts == sorted(counts, reverse=True)

    def test_zero_local_time_rejected(self):
        with pytest.raises(InsufficientDataError):
            rate_table_from_records([], 0.0, [0.1])


@pytest.fixture(scope="module")
def medium_run(preset_1d):
    cfg = replace(preset_1d.sim, dt=1e-3, horizon=50.0, burn_in=0.0,
                  seed=5, record_stride=1)
    request = AnalysisRequest(eps_grid=(0.2, 0.3, 0.5), record=True)
    return run_analysis(cfg, preset_1d.domain, preset_1d.fields, request)


class TestPartitionAndStreaming:
    def test_streamed_counts_match_decompose(self, medium_run, preset_1d):
        records = decompose(medium_run.trajectory, preset_1d.domain)
        stats = medium_run.excursions
        assert stats.n_complete == len(records)
        for j, eps in enumerate(stats.eps_grid):
            top = sum(1 for r in records if r.start_wall == 1 and r.max_depth > eps)
            bot = sum(1 for r in records if r.start_wall == -1 and r.max_depth > eps)
            assert stats.counts_top[j] == top
            assert stats.counts_bottom[j] == bot

    def test_streamed_partition_identity(self, medium_run):
        stats = medium_run.excursions
        n_band = (stats.n_contact_steps - 1) - stats.n_complete
        covered = (stats.first_contact_step + stats.complete_steps_total
                   + n_band + (stats.n_steps - stats.last_contact_step))
        assert covered == stats.n_steps

    def test_lifetimes_partition_horizon(self, medium_run, preset_1d):
        traj = medium_run.trajectory
        records = decompose(traj, preset_1d.domain)
        dl = np.diff(traj.local_time, prepend=0.0)
        contact = np.flatnonzero(dl > 0)
        dt = traj.dt
        initial_partial = traj.times[contact[0]]
        final_partial = traj.times[-1] - traj.times[contact[-1]]
        lifetimes = sum(r.lifetime for r in records)
        n_band = len(contact) - 1 - len(records)
        total = initial_partial + lifetimes + n_band * dt + final_partial
        assert math.isclose(total, traj.times[-1], rel_tol=1e-12)

    def test_exit_rate_table_from_trajectory(self, medium_run, preset_1d):
        rows = exit_rate_table(medium_run.trajectory, preset_1d.domain,
                               [0.2, 0.3, 0.5])
        stats = medium_run.excursions
        for row, j in zip(rows, range(3)):
            assert row.count == int(stats.counts_top[j] + stats.counts_bottom[j])
        assert math.isclose(rows[0].local_time, stats.local_time, rel_tol=1e-12)

    def test_slope_requires_nonzero_counts(self):
        rows = rate_table_from_records([], 1.0, [0.1])
        with pytest.raises(InsufficientDataError):
            loglog_slope(rows)
