"""Stochastic time-stepping of the reflected system with boundary-driven spin.

The scheme is projected Euler: a Gaussian increment is applied, the
transverse overshoot is projected back onto the closure and its length is
counted as boundary local time, the tangential component of the reflection
pushes the state along the boundary from the projected point, and the spin
advances through the exact exponential solution of its linear flow over the
local-time increment.  The exact flow keeps the spin inside its absorbing
ball step by step, which is what makes the decay-bound diagnostics exact
properties rather than asymptotic ones.

Runs are a pure function of ``(seed, config, domain, fields)``: increments
come from a seeded PCG64 stream (ziggurat Gaussians), drawn in fixed-size
blocks so results do not depend on recording options.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import _kernel as K
from .domain import DomainSpec, Region, Wristband
from .errors import GeometryError, InvalidInputError, NumericsError
from .excursions import ExcursionStats
from .fields import FieldSet
from .histogram import Axis, OccupancyHistogram

#: Increments are drawn in blocks of this many steps; PCG64 streams are
#: chunk-stable, so the block size never changes results.
BLOCK_STEPS = 1 << 20

RNG_DESCRIPTION = "PCG64 counter stream, ziggurat Gaussian increments"

SCHEMES = ("half-step", "naive")


@dataclass(frozen=True)
class SimConfig:
    """Run parameters for one chain."""

    dt: float
    horizon: float
    seed: int
    initial_x: tuple[float, ...] = (0.0, 0.0)
    initial_s: tuple[float, ...] = (0.0,)
    burn_in: float = 0.0
    record_stride: int = 1
    scheme: str = "half-step"

    def __post_init__(self):
        if not (self.dt > 0 and self.horizon > 0 and self.dt <= self.horizon):
            raise InvalidInputError("need 0 < dt <= horizon")
        if not (0.0 <= self.burn_in < self.horizon):
            raise InvalidInputError("need 0 <= burn_in < horizon")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise InvalidInputError("record_stride must be an integer >= 1")
        if self.scheme not in SCHEMES:
            raise InvalidInputError(f"scheme must be one of {SCHEMES}")
        for name, t in (("horizon", self.horizon), ("burn_in", self.burn_in)):
            n = round(t / self.dt)
            if abs(n * self.dt - t) > 1e-9 * max(1.0, abs(t)):
                raise InvalidInputError(f"{name} must be an integer multiple of dt")

    @property
    def n_steps(self) -> int:
        return round(self.horizon / self.dt)

    @property
    def burn_steps(self) -> int:
        return round(self.burn_in / self.dt)

    @property
    def n_recorded(self) -> int:
        return (self.n_steps - self.burn_steps) // self.record_stride


@dataclass
class Trajectory:
    """Recorded samples of (position, spin, cumulative boundary local time).

    ``local_time_top``/``local_time_bottom`` split the local time by wall
    and are present for wristband runs only; their sum equals ``local_time``.
    """

    times: np.ndarray
    positions: np.ndarray   # (k, n)
    spins: np.ndarray       # (k, p)
    local_time: np.ndarray  # (k,)
    local_time_top: np.ndarray | None
    local_time_bottom: np.ndarray | None
    dt: float
    record_stride: int
    seed: int
    initial_x: np.ndarray
    initial_s: np.ndarray
    final_position: np.ndarray
    final_spin: np.ndarray
    final_local_time: float
    n_steps: int
    #: max over all steps of |S|^2 - |S0|^2 exp(-a0 L) - (sup|g|/a0)^2
    damping_residual: float

    def coordinate(self, name: str) -> np.ndarray:
        """Column by name: ``x``/``y`` (2-d runs), ``x1..xn``, ``s1..sp``."""
        n = self.positions.shape[1]
        if name == "x" and n == 2:
            return self.positions[:, 0]
        if name == "y" and n == 2:
            return self.positions[:, 1]
        if name.startswith("x") and name[1:].isdigit():
            i = int(name[1:]) - 1
            if 0 <= i < n:
                return self.positions[:, i]
        if name.startswith("s") and name[1:].isdigit():
            j = int(name[1:]) - 1
            if 0 <= j < self.spins.shape[1]:
                return self.spins[:, j]
        raise InvalidInputError(f"unknown coordinate {name!r}")

    def to_csv(self, stream) -> None:
        """Full-precision CSV: ``t,x1..xn,s1..sp,L[,L_top,L_bottom]``."""
        n = self.positions.shape[1]
        p = self.spins.shape[1]
        cols = (["t"] + [f"x{i + 1}" for i in range(n)]
                + [f"s{j + 1}" for j in range(p)] + ["L"])
        split = self.local_time_top is not None
        if split:
            cols += ["L_top", "L_bottom"]
        stream.write(",".join(cols) + "\n")
        for k in range(len(self.times)):
            row = [self.times[k], *self.positions[k], *self.spins[k], self.local_time[k]]
            if split:
                row += [self.local_time_top[k], self.local_time_bottom[k]]
            stream.write(",".join(f"{v:.17g}" for v in row) + "\n")


@dataclass(frozen=True)
class AnalysisRequest:
    """What a run should stream besides (optionally) recording samples."""

    histogram_axes: tuple[Axis, Axis] | None = None
    eps_grid: tuple[float, ...] | None = None
    record: bool = True


@dataclass
class RunStats:
    """Streamed accumulators from one chain (or a merge of chains)."""

    trajectory: Trajectory | None
    histogram: OccupancyHistogram | None
    excursions: ExcursionStats | None
    damping_residual: float
    min_spin_norm: float
    final_position: np.ndarray
    final_spin: np.ndarray
    final_local_time: float
    n_steps: int
    wall_clock: float


def spin_update(spin, forcing, damping: float, dl: float) -> np.ndarray:
    """Exact flow of ``ds = (forcing - damping * s) dl`` over a step.

    Returns ``e * spin + (1 - e) * forcing / damping`` with
    ``e = exp(-damping * dl)``: a convex combination, so the result never
    leaves the segment between the spin and its attractor.
    """
    if not math.isfinite(dl) or dl < 0:
        raise InvalidInputError(f"local-time increment must be finite and >= 0, got {dl}")
    spin = np.asarray(spin, dtype=float)
    forcing = np.asarray(forcing, dtype=float)
    e = math.exp(-damping * dl)
    return e * spin + (1.0 - e) * (forcing / damping)


def reflected_step(state, db, fields: FieldSet, domain: DomainSpec,
                   scheme: str = "half-step"):
    """One projected-Euler step from ``state = (x, s, L)``.

    Returns ``(x', s', L', dl)``.  Interior tentative points move freely;
    otherwise the overshoot is projected, its length becomes the local-time
    increment, the tangential push is applied with the pre-update spin, and
    the spin advances through its exact flow.  The default half-step
    variant pushes from the projected point; the naive variant pushes from
    the tentative point and projects once at the end (identical on the
    wristband, kept for bias studies on curved boundaries).
    """
    x, s, L = state
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    db = np.asarray(db, dtype=float)
    if fields.diffusion is not None:
        tentative = x + fields.diffusion(x) @ db
    else:
        tentative = x + db
    xp, push = domain.project_to_closure(tentative)
    if push == 0.0:
        x_new = domain.wrap(xp) if isinstance(domain, Wristband) else xp
        return x_new, s.copy(), L, 0.0
    dl = push
    tau = np.asarray(fields.tangential(xp, s), dtype=float)
    s_new = spin_update(s, fields.forcing(xp), fields.damping(xp), dl)
    base = tentative if scheme == "naive" else xp
    x_new = base + tau * dl
    if isinstance(domain, Wristband):
        x_new = domain.wrap(x_new)
    if domain.classify(x_new) is Region.EXTERIOR:
        # constrain back without charging extra local time (always needed
        # for the naive variant, only on curved boundaries for half-step)
        x_new, _ = domain.project_to_closure(x_new)
    return x_new, s_new, L + dl, dl


def _kernel_packs(cfg: SimConfig, domain: Wristband, fields: FieldSet,
                  request: AnalysisRequest):
    spec = fields.kernel_spec["builtin"]
    p = fields.spin_dim
    par = np.zeros(K.P_SIZE)
    par[K.P_HALF] = domain.half_width
    par[K.P_PERIOD] = domain.period
    par[K.P_SIG] = spec.sigma_scale
    par[K.P_ALPHA] = spec.damping_const
    par[K.P_ALPHA0] = fields.damping_inf
    par[K.P_GRATIO_SQ] = fields.spin_radius ** 2
    par[K.P_TAU_AMP] = spec.tau_amp
    par[K.P_DT] = cfg.dt
    codes = np.zeros(K.C_SIZE, dtype=np.int64)
    codes[K.C_TAU_KIND] = spec.tau_kind
    codes[K.C_TAU_TOP] = int(spec.tau_top)
    codes[K.C_TAU_BOT] = int(spec.tau_bottom)
    codes[K.C_NBURN] = cfg.burn_steps
    codes[K.C_STRIDE] = cfg.record_stride
    codes[K.C_RECORD] = int(request.record)
    codes[K.C_HIST] = int(request.histogram_axes is not None)
    codes[K.C_EXC] = int(request.eps_grid is not None)
    if request.histogram_axes is not None:
        ax1, ax2 = request.histogram_axes
        par[K.P_HLO1], par[K.P_HHI1] = ax1.lo, ax1.hi
        par[K.P_HLO2], par[K.P_HHI2] = ax2.lo, ax2.hi
        par[K.P_HWEIGHT] = cfg.dt * cfg.record_stride
        codes[K.C_HC1] = _coord_code(ax1.name, p)
        codes[K.C_HC2] = _coord_code(ax2.name, p)
        codes[K.C_HN1], codes[K.C_HN2] = ax1.bins, ax2.bins
    gt_kind = np.array(spec.top_kinds, dtype=np.int64)
    gt_amp = np.array(spec.top_amps, dtype=float)
    gb_kind = np.array(spec.bottom_kinds, dtype=np.int64)
    gb_amp = np.array(spec.bottom_amps, dtype=float)
    return par, codes, gt_kind, gt_amp, gb_kind, gb_amp


def _coord_code(name: str, p: int) -> int:
    if name == "x":
        return 0
    if name == "y":
        return 1
    if name.startswith("s") and name[1:].isdigit() and 1 <= int(name[1:]) <= p:
        return 1 + int(name[1:])
    raise InvalidInputError(f"unknown histogram coordinate {name!r}")


def _seeded_normals(seed: int, ndim: int):
    """Default increment source: raw standard normals from one PCG64 stream."""
    rng = np.random.Generator(np.random.PCG64(seed))

    def draw(m):
        return rng.standard_normal((m, ndim))

    return draw


def _run_wristband_kernel(cfg: SimConfig, domain: Wristband, fields: FieldSet,
                          request: AnalysisRequest, draw=None) -> RunStats:
    t0 = time.perf_counter()
    p = fields.spin_dim
    par, codes, gt_kind, gt_amp, gb_kind, gb_amp = _kernel_packs(cfg, domain, fields, request)

    fstate = np.zeros(K.F_SIZE)
    fstate[K.F_X], fstate[K.F_Y] = cfg.initial_x
    s = np.array(cfg.initial_s, dtype=float)
    s0_sq = float(s @ s)
    fstate[K.F_S0SQ] = s0_sq
    fstate[K.F_DAMP] = -par[K.P_GRATIO_SQ]
    fstate[K.F_MINSPIN] = s0_sq
    istate = np.zeros(K.I_SIZE, dtype=np.int64)
    istate[K.I_ERR] = -1
    istate[K.I_FIRST] = -1
    istate[K.I_LAST] = -1

    n_rec = cfg.n_recorded if request.record else 0
    rec_x = np.zeros(n_rec)
    rec_y = np.zeros(n_rec)
    rec_s = np.zeros((n_rec, p))
    rec_l = np.zeros(n_rec)
    rec_lt = np.zeros(n_rec)
    rec_lb = np.zeros(n_rec)

    if request.histogram_axes is not None:
        hist = np.zeros((request.histogram_axes[0].bins, request.histogram_axes[1].bins))
    else:
        hist = np.zeros((1, 1))
    overflow = np.zeros(1)
    eps = np.array(request.eps_grid if request.eps_grid else (), dtype=float)
    exc_top = np.zeros(len(eps), dtype=np.int64)
    exc_bot = np.zeros(len(eps), dtype=np.int64)

    if draw is None:
        draw = _seeded_normals(cfg.seed, 2)
    sqdt = math.sqrt(cfg.dt)
    n = cfg.n_steps
    k0 = 0
    while k0 < n:
        m = min(BLOCK_STEPS, n - k0)
        db = draw(m) * sqdt
        K.wristband_block(db, k0, fstate, istate, s,
                          gt_kind, gt_amp, gb_kind, gb_amp, par, codes,
                          rec_x, rec_y, rec_s, rec_l, rec_lt, rec_lb,
                          hist, overflow, eps, exc_top, exc_bot)
        if istate[K.I_ERR] >= 0:
            raise NumericsError(
                f"simulation aborted at step {istate[K.I_ERR]}",
                step_index=int(istate[K.I_ERR]),
            )
        k0 += m

    trajectory = None
    if request.record:
        times = (cfg.burn_steps + cfg.record_stride * np.arange(1, n_rec + 1)) * cfg.dt
        trajectory = Trajectory(
            times=times,
            positions=np.column_stack([rec_x, rec_y]),
            spins=rec_s,
            local_time=rec_l,
            local_time_top=rec_lt,
            local_time_bottom=rec_lb,
            dt=cfg.dt,
            record_stride=cfg.record_stride,
            seed=cfg.seed,
            initial_x=np.array(cfg.initial_x, dtype=float),
            initial_s=np.array(cfg.initial_s, dtype=float),
            final_position=np.array([fstate[K.F_X], fstate[K.F_Y]]),
            final_spin=s.copy(),
            final_local_time=fstate[K.F_L],
            n_steps=n,
            damping_residual=fstate[K.F_DAMP],
        )
    histogram = None
    if request.histogram_axes is not None:
        histogram = OccupancyHistogram(request.histogram_axes, hist, overflow[0])
    excursions = None
    if request.eps_grid is not None:
        excursions = ExcursionStats(
            eps_grid=eps,
            counts_top=exc_top,
            counts_bottom=exc_bot,
            local_time_top=fstate[K.F_LTOP],
            local_time_bottom=fstate[K.F_LBOT],
            n_complete=int(istate[K.I_NCOMPLETE]),
            n_contact_steps=int(istate[K.I_NCONTACT]),
            first_contact_step=int(istate[K.I_FIRST]),
            last_contact_step=int(istate[K.I_LAST]),
            complete_steps_total=int(istate[K.I_SUMSTEPS]),
            n_steps=n,
            dt=cfg.dt,
        )
    return RunStats(
        trajectory=trajectory,
        histogram=histogram,
        excursions=excursions,
        damping_residual=fstate[K.F_DAMP],
        min_spin_norm=math.sqrt(max(fstate[K.F_MINSPIN], 0.0)),
        final_position=np.array([fstate[K.F_X], fstate[K.F_Y]]),
        final_spin=s.copy(),
        final_local_time=fstate[K.F_L],
        n_steps=n,
        wall_clock=time.perf_counter() - t0,
    )


def _run_generic(cfg: SimConfig, domain: DomainSpec, fields: FieldSet,
                 request: AnalysisRequest, draw=None) -> RunStats:
    t0 = time.perf_counter()
    is_band = isinstance(domain, Wristband)
    ndim = domain.dim
    p = fields.spin_dim
    x = np.array(cfg.initial_x, dtype=float)
    s = np.array(cfg.initial_s, dtype=float)
    if len(x) != ndim or len(s) != p:
        raise InvalidInputError("initial state dimensions do not match domain/fields")
    if domain.classify(x) is Region.EXTERIOR:
        raise InvalidInputError(f"initial position {x} lies outside the closure")
    L = l_top = l_bot = 0.0
    s0_sq = float(s @ s)
    g_ratio_sq = fields.spin_radius ** 2
    damp = -g_ratio_sq
    min_spin_sq = s0_sq

    n = cfg.n_steps
    n_burn = cfg.burn_steps
    stride = cfg.record_stride
    n_rec = cfg.n_recorded if request.record else 0
    rec_pos = np.zeros((n_rec, ndim))
    rec_s = np.zeros((n_rec, p))
    rec_l = np.zeros(n_rec)
    rec_lt = np.zeros(n_rec)
    rec_lb = np.zeros(n_rec)

    hist = None
    if request.histogram_axes is not None:
        hist = OccupancyHistogram(request.histogram_axes)
        hv = hist.weights
        hw = cfg.dt * stride
    eps = np.array(request.eps_grid if request.eps_grid else (), dtype=float)
    exc_top = np.zeros(len(eps), dtype=np.int64)
    exc_bot = np.zeros(len(eps), dtype=np.int64)
    exc_open = False
    exc_wall = 0
    exc_inter = 0
    exc_start = 0
    exc_depth = 0.0
    n_contact = 0
    first_contact = -1
    last_contact = -1
    n_complete = 0
    sum_steps = 0

    if draw is None:
        draw = _seeded_normals(cfg.seed, ndim)
    sqdt = math.sqrt(cfg.dt)
    half = domain.half_width if is_band else None

    k = 0
    while k < n:
        m = min(BLOCK_STEPS, n - k)
        block = draw(m) * sqdt
        for i in range(m):
            k += 1
            db = block[i]
            for _ in range(41):
                try:
                    if is_band and abs(x[1] + db[1]) > 3.0 * half:
                        raise GeometryError("tentative point beyond the opposite wall")
                    x_new, s_new, L_new, dl = reflected_step((x, s, L), db, fields,
                                                             domain, cfg.scheme)
                    break
                except GeometryError:
                    db = 0.5 * db
            else:
                raise NumericsError(f"simulation aborted at step {k}", step_index=k)
            if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(s_new))):
                raise NumericsError(f"simulation aborted at step {k}", step_index=k)
            wall = 0
            if dl > 0.0:
                if is_band:
                    wall = 1 if x_new[1] > 0 else -1
                    if wall == 1:
                        l_top += dl
                    else:
                        l_bot += dl
                else:
                    wall = 1  # single-wall accounting off the wristband
                    l_top += dl
                ssq = float(s_new @ s_new)
                resid = ssq - s0_sq * math.exp(-fields.damping_inf * L_new) - g_ratio_sq
                damp = max(damp, resid)
                min_spin_sq = min(min_spin_sq, ssq)
            x, s, L = x_new, s_new, L_new

            if len(eps):
                if wall != 0:
                    if exc_open and exc_inter > 0:
                        n_complete += 1
                        sum_steps += k - exc_start
                        for j, e in enumerate(eps):
                            if exc_depth > e:
                                (exc_top if exc_wall == 1 else exc_bot)[j] += 1
                    exc_open, exc_wall, exc_inter, exc_start = True, wall, 0, k
                    exc_depth = 0.0
                    n_contact += 1
                    if first_contact < 0:
                        first_contact = k
                    last_contact = k
                elif exc_open:
                    exc_inter += 1
                    exc_depth = max(exc_depth, domain.boundary_distance(x))

            if k > n_burn and (k - n_burn) % stride == 0:
                idx = (k - n_burn) // stride - 1
                if request.record and 0 <= idx < n_rec:
                    rec_pos[idx] = x
                    rec_s[idx] = s
                    rec_l[idx] = L
                    rec_lt[idx] = l_top
                    rec_lb[idx] = l_bot
                if hist is not None:
                    i1 = hist.axes[0].index_of(
                        np.array([_coord_value(hist.axes[0].name, x, s)]))[0]
                    i2 = hist.axes[1].index_of(
                        np.array([_coord_value(hist.axes[1].name, x, s)]))[0]
                    if i1 >= 0 and i2 >= 0:
                        hv[i1, i2] += hw
                    else:
                        hist.overflow += hw

    trajectory = None
    if request.record:
        times = (n_burn + stride * np.arange(1, n_rec + 1)) * cfg.dt
        trajectory = Trajectory(
            times=times, positions=rec_pos, spins=rec_s, local_time=rec_l,
            local_time_top=rec_lt if is_band else None,
            local_time_bottom=rec_lb if is_band else None,
            dt=cfg.dt, record_stride=stride, seed=cfg.seed,
            initial_x=np.array(cfg.initial_x, dtype=float),
            initial_s=np.array(cfg.initial_s, dtype=float),
            final_position=x.copy(), final_spin=s.copy(), final_local_time=L,
            n_steps=n, damping_residual=damp,
        )
    excursions = None
    if request.eps_grid is not None:
        excursions = ExcursionStats(
            eps_grid=eps, counts_top=exc_top, counts_bottom=exc_bot,
            local_time_top=l_top, local_time_bottom=l_bot,
            n_complete=n_complete, n_contact_steps=n_contact,
            first_contact_step=first_contact, last_contact_step=last_contact,
            complete_steps_total=sum_steps, n_steps=n, dt=cfg.dt,
        )
    return RunStats(
        trajectory=trajectory, histogram=hist, excursions=excursions,
        damping_residual=damp, min_spin_norm=math.sqrt(max(min_spin_sq, 0.0)),
        final_position=x.copy(), final_spin=s.copy(), final_local_time=L,
        n_steps=n, wall_clock=time.perf_counter() - t0,
    )


def _coord_value(name, x, s):
    if name == "x":
        return x[0]
    if name == "y":
        return x[1]
    if name.startswith("s"):
        return s[int(name[1:]) - 1]
    if name.startswith("x"):
        return x[int(name[1:]) - 1]
    raise InvalidInputError(f"unknown coordinate {name!r}")


def run_analysis(cfg: SimConfig, domain: DomainSpec, fields: FieldSet,
                 request: AnalysisRequest, _draw=None) -> RunStats:
    """Run one chain, streaming the requested accumulators."""
    if isinstance(domain, Wristband) and fields.kernel_spec is not None:
        # both schemes coincide on the wristband: the tangential push runs
        # along the wall, so projecting before or after it is the same map
        return _run_wristband_kernel(cfg, domain, fields, request, _draw)
    return _run_generic(cfg, domain, fields, request, _draw)


def coupled_refinement(cfg: SimConfig, domain: DomainSpec, fields: FieldSet,
                       request: AnalysisRequest,
                       fine_request: AnalysisRequest | None = None
                       ) -> tuple[RunStats, RunStats]:
    """One chain at ``dt`` and one at ``dt/2`` sharing a Brownian driver.

    The fine chain consumes raw normals from the seed's stream; the coarse
    chain uses the pairwise sums (rescaled), which are exact increments of
    the same Brownian path at the doubled step.  Sharing the driver cancels
    most sampling noise when comparing the two resolutions, isolating the
    discretization error.  Both runs are law-identical to independent runs
    at their own step sizes.
    """
    ndim = domain.dim
    fine_cfg = replace(cfg, dt=cfg.dt / 2.0)
    if fine_request is None:
        fine_request = replace(request, record=False)
    fine_stats = run_analysis(fine_cfg, domain, fields, fine_request)

    inner = _seeded_normals(cfg.seed, ndim)
    inv_sqrt2 = 1.0 / math.sqrt(2.0)

    def coarse_draw(m):
        fine = inner(2 * m)
        return (fine[0::2] + fine[1::2]) * inv_sqrt2

    coarse_stats = run_analysis(cfg, domain, fields, request, _draw=coarse_draw)
    return coarse_stats, fine_stats


def simulate(cfg: SimConfig, domain: DomainSpec, fields: FieldSet) -> Trajectory:
    """Integrate one chain and return its recorded trajectory."""
    stats = run_analysis(cfg, domain, fields, AnalysisRequest(record=True))
    return stats.trajectory


def run_chains(cfg: SimConfig, domain: DomainSpec, fields: FieldSet,
               request: AnalysisRequest, chains: int, workers: int = 1) -> list[RunStats]:
    """Run ``chains`` independent chains with seeds ``seed + 0 .. seed + chains-1``.

    Results come back ordered by chain index regardless of scheduling, so
    downstream merges are deterministic for any worker count.
    """
    if chains < 1:
        raise InvalidInputError("need at least one chain")
    configs = [replace(cfg, seed=cfg.seed + c) for c in range(chains)]
    if workers <= 1 or chains == 1:
        return [run_analysis(c, domain, fields, request) for c in configs]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_analysis, c, domain, fields, request) for c in configs]
        return [f.result() for f in futures]
