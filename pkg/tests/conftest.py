"""Shared fixtures: presets and the long acceptance-scale runs.

The heavy session fixtures are built once and reused by several criteria:
``refinement_pair`` carries both the reference stationary estimate (its
coarse side) and the half-step refinement twin (fine side), plus streamed
excursion and decay-bound accumulators; four of its coarse chains record
strided samples for marginal tests.
"""

from dataclasses import replace

import numpy as np
import pytest

from spindrift.config import build_run_config
from spindrift.integrator import AnalysisRequest, coupled_refinement, run_chains
from spindrift.presets import preset_text

SEED_A = 1
SEED_B = 101
N_CHAINS = 8
RECORD_STRIDE = 100
RECORDING_CHAINS = 4

_CHECK_LINES = []


def emit_check(name, passed, value, tol):
    """One machine-parsable line per acceptance criterion; echoed in the
    terminal summary (outside capture) at the end of the session."""
    status = "PASS" if passed else "FAIL"
    line = f"CHECK {name} {status} value={value} tol={tol}"
    print(line)
    _CHECK_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _CHECK_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _CHECK_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def preset_1d():
    return build_run_config(preset_text("wristband-1d-spin"))


@pytest.fixture(scope="session")
def preset_point():
    return build_run_config(preset_text("point-concentration"))


@pytest.fixture(scope="session")
def preset_axes():
    return build_run_config(preset_text("axes-concentration"))


@pytest.fixture(scope="session")
def refinement_pair(preset_1d):
    """Eight coupled chain pairs at dt = 1e-4 and dt/2, merged per side.

    Returns a dict with per-side merged histograms, pooled excursion stats,
    the recorded coarse trajectories, and the worst decay-bound residual.
    """
    cfg = preset_1d
    coarse = {"hist": None, "exc": None, "damp": -np.inf, "trajs": []}
    fine = {"hist": None, "exc": None, "damp": -np.inf}
    for c in range(N_CHAINS):
        sim = replace(cfg.sim, seed=SEED_A + c, record_stride=RECORD_STRIDE)
        request = AnalysisRequest(
            histogram_axes=cfg.analysis.histogram_axes,
            eps_grid=cfg.analysis.eps_grid,
            record=c < RECORDING_CHAINS,
        )
        st_c, st_f = coupled_refinement(sim, cfg.domain, cfg.fields, request)
        for side, st in ((coarse, st_c), (fine, st_f)):
            side["hist"] = st.histogram if side["hist"] is None else side["hist"].merge(st.histogram)
            side["exc"] = st.excursions if side["exc"] is None else side["exc"].merge(st.excursions)
            side["damp"] = max(side["damp"], st.damping_residual)
        if st_c.trajectory is not None:
            coarse["trajs"].append(st_c.trajectory)
    return {"coarse": coarse, "fine": fine, "config": cfg}


@pytest.fixture(scope="session")
def estimate_b(preset_1d):
    """Independent 8-chain stationary estimate with a disjoint seed family."""
    cfg = preset_1d
    sim = replace(cfg.sim, seed=SEED_B, record_stride=RECORD_STRIDE)
    request = AnalysisRequest(histogram_axes=cfg.analysis.histogram_axes,
                              eps_grid=None, record=False)
    stats = run_chains(sim, cfg.domain, cfg.fields, request, N_CHAINS)
    hist = stats[0].histogram
    for st in stats[1:]:
        hist = hist.merge(st.histogram)
    damp = max(st.damping_residual for st in stats)
    return {"hist": hist, "damp": damp}


@pytest.fixture(scope="session")
def estimate_lambda0(preset_1d):
    """Estimate with the tangential drift switched off (disjoint seeds)."""
    cfg = build_run_config(
        preset_text("wristband-1d-spin").replace("tau = const:1.0", "tau = none"))
    sim = replace(cfg.sim, seed=201, record_stride=RECORD_STRIDE)
    request = AnalysisRequest(histogram_axes=cfg.analysis.histogram_axes,
                              eps_grid=None, record=False)
    stats = run_chains(sim, cfg.domain, cfg.fields, request, N_CHAINS)
    hist = stats[0].histogram
    for st in stats[1:]:
        hist = hist.merge(st.histogram)
    return {"hist": hist}


def _preset_run(cfg):
    from spindrift.integrator import run_analysis

    stats = run_analysis(cfg.sim, cfg.domain, cfg.fields,
                         AnalysisRequest(histogram_axes=cfg.analysis.histogram_axes,
                                         record=True))
    return {"config": cfg, "stats": stats, "spins": stats.trajectory.spins}


@pytest.fixture(scope="session")
def point_run(preset_point):
    return _preset_run(preset_point)


@pytest.fixture(scope="session")
def axes_run(preset_axes):
    return _preset_run(preset_axes)
