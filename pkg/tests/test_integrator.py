import io
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spindrift.config import build_run_config
from spindrift.domain import Wristband, unit_disk
from spindrift.errors import InvalidInputError, NumericsError
from spindrift.fields import BuiltinFields, builtin_field_set
from spindrift.integrator import (AnalysisRequest, SimConfig, reflected_step,
                                  run_analysis, run_chains, simulate, spin_update)


def one_d_fields(band, tau_amp=1.0):
    spec = BuiltinFields(top_kinds=(0,), top_amps=(1.0,),
                         bottom_kinds=(0,), bottom_amps=(-1.0,),
                         damping_const=1.0, tau_kind=1, tau_amp=tau_amp,
                         tau_top=True, tau_bottom=False, sigma_scale=1.0)
    return builtin_field_set(band, spec)


def plain_reflection_fields(band):
    spec = BuiltinFields(top_kinds=(0,), top_amps=(0.0,),
                         bottom_kinds=(0,), bottom_amps=(0.0,),
                         damping_const=1.0, tau_kind=0, tau_amp=0.0,
                         tau_top=False, tau_bottom=False, sigma_scale=1.0)
    return builtin_field_set(band, spec)


class TestSpinUpdate:
    def test_zero_increment_is_identity(self):
        s = np.array([0.3, -0.7])
        out = spin_update(s, [1.0, 0.0], 2.0, 0.0)
        assert np.array_equal(out, s)

    def test_log_two_reaches_midpoint(self):
        out = spin_update([0.0, 0.0], [1.0, 0.0], 1.0, math.log(2.0))
        np.testing.assert_allclose(out, [0.5, 0.0], atol=1e-15)

    def test_huge_increment_hits_fixed_point(self):
        out = spin_update([3.0, -4.0], [1.0, 0.5], 2.0, 1e6)
        np.testing.assert_allclose(out, [0.5, 0.25], atol=1e-300)

    def test_negative_increment_rejected(self):
        with pytest.raises(InvalidInputError):
            spin_update([0.0], [1.0], 1.0, -0.1)

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=3),
           st.lists(st.floats(-5, 5), min_size=1, max_size=3),
           st.floats(0.1, 5), st.floats(0, 10))
    def test_one_step_bound(self, s, g, alpha, dl):
        if len(s) != len(g):
            g = (g * 3)[: len(s)]
        s = np.array(s)
        g = np.array(g)
        out = spin_update(s, g, alpha, dl)
        bound = max(float(np.linalg.norm(s)),
                    float(np.linalg.norm(g)) / alpha)
        # convex combination; allowance covers the three float roundings
        assert float(np.linalg.norm(out)) <= bound * (1 + 1e-14) + 1e-300


class TestReflectedStep:
    def test_interior_step_no_local_time(self):
        band = Wristband()
        f = one_d_fields(band)
        x, s, L, dl = reflected_step((np.array([0.0, 0.0]), np.array([0.2]), 0.5),
                                     np.array([0.01, -0.02]), f, band)
        assert dl == 0.0 and L == 0.5
        np.testing.assert_allclose(x, [0.01, -0.02])
        assert np.array_equal(s, [0.2])

    def test_hand_traced_wall_hit(self):
        band = Wristband()
        f = one_d_fields(band, tau_amp=0.7)
        start = np.array([0.0, 0.95])
        db = np.array([0.0, 0.15])
        x, s, L, dl = reflected_step((start, np.array([0.2]), 1.0), db, f, band)
        expected_dl = (0.95 + 0.15) - 1.0
        assert dl == expected_dl
        assert L == 1.0 + expected_dl
        np.testing.assert_allclose(x, [0.7 * expected_dl, 1.0], atol=1e-15)
        np.testing.assert_allclose(
            s, spin_update([0.2], f.forcing(np.array([0.0, 1.0])), 1.0, expected_dl),
            atol=1e-15)

    def test_wraps_periodic_coordinate(self):
        band = Wristband()
        f = one_d_fields(band)
        x, *_ = reflected_step((np.array([6.2, 0.0]), np.array([0.0]), 0.0),
                               np.array([0.2, 0.0]), f, band)
        assert 0.0 <= x[0] < band.period
        assert math.isclose(x[0], 6.4 - band.period)

    def test_disk_oblique_push_stays_in_closure(self):
        disk = unit_disk()
        cfg_text = """
[domain]
type = disk
[fields]
g_top = const:0.4 const:0.0
tau = const:0.5
[sim]
dt = 1e-3
horizon = 1.0
seed = 0
"""
        cfg = build_run_config(cfg_text)
        x, s, L, dl = reflected_step(
            (np.array([0.95, 0.0]), np.array([0.0, 0.0]), 0.0),
            np.array([0.2, 0.0]), cfg.fields, disk)
        assert dl > 0
        assert np.linalg.norm(x) <= 1.0 + 1e-12


class TestSimulate:
    def test_single_step_reproducible(self):
        band = Wristband()
        f = one_d_fields(band)
        cfg = SimConfig(dt=0.5, horizon=0.5, seed=9)
        t1 = simulate(cfg, band, f)
        t2 = simulate(cfg, band, f)
        assert len(t1.times) == 1
        assert np.array_equal(t1.positions, t2.positions)
        assert np.array_equal(t1.spins, t2.spins)

    def test_replay_equality_and_csv_bytes(self):
        band = Wristband()
        f = one_d_fields(band)
        cfg = SimConfig(dt=1e-3, horizon=2.0, seed=123)
        bufs = []
        for _ in range(2):
            buf = io.StringIO()
            simulate(cfg, band, f).to_csv(buf)
            bufs.append(buf.getvalue())
        assert bufs[0] == bufs[1]
        header = bufs[0].splitlines()[0]
        assert header == "t,x1,x2,s1,L,L_top,L_bottom"

    def test_gaussian_increments_have_right_moments(self):
        # the raw increment stream behind the integrator
        rng = np.random.Generator(np.random.PCG64(5))
        dt = 1e-3
        draws = rng.standard_normal((200_000, 2)) * math.sqrt(dt)
        mean = draws.mean(axis=0)
        cov = np.cov(draws.T)
        assert np.all(np.abs(mean) < 4 * math.sqrt(dt / 200_000))
        np.testing.assert_allclose(cov, dt * np.eye(2), atol=4e-6)

    def test_uniform_law_of_reflected_motion(self):
        # tau = 0, forcing = 0: transverse coordinate is reflected Brownian
        # motion on [-1, 1]; its long-run law is uniform with mean |y| = 1/2
        band = Wristband()
        f = plain_reflection_fields(band)
        cfg = SimConfig(dt=1e-3, horizon=2000.0, seed=21, burn_in=100.0,
                        record_stride=10, initial_s=(0.5,))
        traj = simulate(cfg, band, f)
        assert abs(np.abs(traj.positions[:, 1]).mean() - 0.5) < 0.02
        # spin decays toward zero: |s_k| <= |s_0| exp(-L_k) exactly
        decay = np.abs(traj.spins[:, 0]) - 0.5 * np.exp(-traj.local_time)
        assert np.max(decay) <= 1e-12

    def test_spin_stays_in_damping_ball(self, preset_1d):
        cfg = replace(preset_1d.sim, horizon=200.0, burn_in=0.0, seed=77,
                      record_stride=5)
        traj = simulate(cfg, preset_1d.domain, preset_1d.fields)
        radius = preset_1d.fields.spin_radius
        assert np.all(np.linalg.norm(traj.spins, axis=1) <= radius + 1e-9)
        assert traj.damping_residual <= 1e-9

    def test_trajectory_invariants(self, preset_1d):
        cfg = replace(preset_1d.sim, horizon=50.0, burn_in=0.0, seed=3)
        traj = simulate(cfg, preset_1d.domain, preset_1d.fields)
        dl = np.diff(traj.local_time, prepend=0.0)
        assert np.all(dl >= 0)
        assert np.all(np.abs(traj.positions[:, 1]) <= preset_1d.domain.half_width)
        np.testing.assert_allclose(
            traj.local_time, traj.local_time_top + traj.local_time_bottom,
            rtol=1e-12, atol=1e-12)
        # local time grows only on steps that end on a wall
        contact = dl > 0
        assert np.all(np.abs(traj.positions[contact, 1])
                      == preset_1d.domain.half_width)

    def test_kernel_and_generic_paths_agree(self, preset_1d):
        band, fields = preset_1d.domain, preset_1d.fields
        cfg = replace(preset_1d.sim, horizon=20.0, burn_in=2.0, seed=11,
                      record_stride=1)
        request = AnalysisRequest(histogram_axes=preset_1d.analysis.histogram_axes,
                                  eps_grid=(0.05, 0.1, 0.2, 0.4), record=True)
        fast = run_analysis(cfg, band, fields, request)
        generic_fields = replace(fields, kernel_spec=None)
        slow = run_analysis(cfg, band, generic_fields, request)
        np.testing.assert_allclose(fast.trajectory.positions,
                                   slow.trajectory.positions, atol=1e-12)
        np.testing.assert_allclose(fast.trajectory.spins,
                                   slow.trajectory.spins, atol=1e-12)
        np.testing.assert_allclose(fast.trajectory.local_time,
                                   slow.trajectory.local_time, atol=1e-12)
        np.testing.assert_allclose(fast.histogram.weights, slow.histogram.weights,
                                   atol=1e-9)
        assert np.array_equal(fast.excursions.counts_top, slow.excursions.counts_top)
        assert np.array_equal(fast.excursions.counts_bottom,
                              slow.excursions.counts_bottom)
        assert fast.excursions.n_complete == slow.excursions.n_complete

    def test_chains_return_in_seed_order_any_worker_count(self, preset_1d):
        cfg = replace(preset_1d.sim, horizon=5.0, burn_in=0.0, seed=40)
        request = AnalysisRequest(record=True)
        seq = run_chains(cfg, preset_1d.domain, preset_1d.fields, request, 3, workers=1)
        par = run_chains(cfg, preset_1d.domain, preset_1d.fields, request, 3, workers=2)
        for a, b in zip(seq, par):
            assert np.array_equal(a.trajectory.positions, b.trajectory.positions)

    def test_numeric_blowup_aborts_with_step_index(self):
        band = Wristband()
        # even 40 halvings cannot bring such an increment back inside
        spec = BuiltinFields(top_kinds=(0,), top_amps=(1.0,),
                             bottom_kinds=(0,), bottom_amps=(-1.0,),
                             damping_const=1.0, tau_kind=0, tau_amp=0.0,
                             tau_top=False, tau_bottom=False, sigma_scale=1e16)
        f = builtin_field_set(band, spec)
        cfg = SimConfig(dt=1.0, horizon=10.0, seed=0)
        with pytest.raises(NumericsError) as exc_info:
            simulate(cfg, band, f)
        assert exc_info.value.step_index is not None

    def test_initial_state_validation(self):
        band = Wristband()
        f = one_d_fields(band)
        generic = replace(f, kernel_spec=None)
        cfg = SimConfig(dt=1e-3, horizon=1.0, seed=0, initial_x=(0.0, 2.0))
        with pytest.raises(InvalidInputError):
            simulate(cfg, band, generic)


class TestSimConfigValidation:
    def test_dt_exceeding_horizon(self):
        with pytest.raises(InvalidInputError):
            SimConfig(dt=2.0, horizon=1.0, seed=0)

    def test_burn_in_must_be_below_horizon(self):
        with pytest.raises(InvalidInputError):
            SimConfig(dt=0.1, horizon=1.0, seed=0, burn_in=1.0)

    def test_non_integral_horizon(self):
        with pytest.raises(InvalidInputError):
            SimConfig(dt=0.3, horizon=1.0, seed=0)

    def test_bad_stride(self):
        with pytest.raises(InvalidInputError):
            SimConfig(dt=0.1, horizon=1.0, seed=0, record_stride=0)

    def test_bad_scheme(self):
        with pytest.raises(InvalidInputError):
            SimConfig(dt=0.1, horizon=1.0, seed=0, scheme="midpoint")


def test_y_marginal_is_uniform_ks(refinement_pair):
    """Transverse marginal of any wristband run is reflected Brownian
    motion; at this horizon its empirical law is uniform to KS < 0.01."""
    ys = np.concatenate([t.positions[:, 1] for t in refinement_pair["coarse"]["trajs"]])
    ys.sort()
    n = len(ys)
    uniform_cdf = (ys + 1.0) / 2.0
    empirical_hi = np.arange(1, n + 1) / n
    empirical_lo = np.arange(0, n) / n
    ks = max(np.max(np.abs(empirical_hi - uniform_cdf)),
             np.max(np.abs(uniform_cdf - empirical_lo)))
    assert ks < 0.01


class TestSchemeVariants:
    def test_schemes_identical_on_wristband(self, preset_1d):
        generic = replace(preset_1d.fields, kernel_spec=None)
        out = {}
        for scheme in ("half-step", "naive"):
            cfg = replace(preset_1d.sim, horizon=10.0, burn_in=0.0, seed=8,
                          scheme=scheme)
            out[scheme] = simulate(cfg, preset_1d.domain, generic)
        assert np.array_equal(out["half-step"].positions, out["naive"].positions)
        assert np.array_equal(out["half-step"].spins, out["naive"].spins)

    def test_schemes_differ_on_disk(self):
        cfg_text = """
[domain]
type = disk
[fields]
g_top = const:0.4 const:0.0
tau = const:0.8
[sim]
dt = 1e-2
horizon = 20.0
seed = 4
"""
        cfg = build_run_config(cfg_text)
        paths = {}
        for scheme in ("half-step", "naive"):
            sim = replace(cfg.sim, scheme=scheme)
            paths[scheme] = simulate(sim, cfg.domain, cfg.fields)
        assert not np.array_equal(paths["half-step"].positions,
                                  paths["naive"].positions)
