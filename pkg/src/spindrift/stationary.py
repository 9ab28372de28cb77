"""Stationary-law estimation and its closed-form verification toolkit.

For the wristband with wall forcing ``+pull_top`` on the top wall and
``-pull_bottom`` on the bottom (unit damping), the long-run law of the
transverse coordinate and the spin has the closed form

    rho(y, s)  proportional to  slope(s) * y + intercept(s)

supported on ``[-1, 1] x (-pull_bottom, pull_top)``, with

    slope(s)     = (2 / (top + bot)) * (s - (top - bot) / 2) / w(s)
    intercept(s) = 1 / w(s)
    w(s)         = sqrt((top - s) * (bot + s)).

This module evaluates that density, integrates it exactly over grid cells,
compares it against occupancy histograms, checks the boundary identities
the closed form must satisfy, verifies the steering-map Jacobian formula by
finite differences, and estimates hitting frequencies by Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import InsufficientDataError, InvalidInputError
from .histogram import Axis, OccupancyHistogram
from .integrator import AnalysisRequest, SimConfig, run_analysis

# re-exported for the conceptual grouping of the stationary toolkit
__all__ = [
    "Axis", "OccupancyHistogram", "WristbandDensity", "DensityComparison",
    "compare_to_density", "histogram_l1", "verify_density_identities",
    "IdentityReport", "jacobian_check", "steering_map", "hitting_estimate",
    "HittingReport",
]


class WristbandDensity:
    """Closed-form stationary density on ``[-1,1] x (-pull_bottom, pull_top)``.

    ``normalizer`` is computed once by adaptive quadrature; the inner
    y-integral of the slope term vanishes by symmetry, so it equals twice
    the integral of the intercept term.
    """

    def __init__(self, pull_top: float, pull_bottom: float):
        if not (pull_top > 0 and pull_bottom > 0):
            raise InvalidInputError("wall pulls must be positive")
        self.pull_top = float(pull_top)
        self.pull_bottom = float(pull_bottom)
        # intercept(s) = (s + bot)^(-1/2) (top - s)^(-1/2): integrate the
        # smooth factor (here 1) against the algebraic endpoint weight
        val, err = integrate.quad(
            lambda s: 1.0, -self.pull_bottom, self.pull_top,
            weight="alg", wvar=(-0.5, -0.5), epsabs=1e-13, epsrel=1e-13,
        )
        self.normalizer = 2.0 * val
        self._quad_error = 2.0 * err

    def _w(self, s):
        return np.sqrt((self.pull_top - s) * (self.pull_bottom + s))

    def slope(self, s):
        span = self.pull_top + self.pull_bottom
        return (2.0 / span) * (s - 0.5 * (self.pull_top - self.pull_bottom)) / self._w(s)

    def intercept(self, s):
        return 1.0 / self._w(s)

    def evaluate(self, y, s) -> float:
        """Normalized density; 0 outside the spin range, +inf at the exact
        spin endpoints (integrable singularity)."""
        if not (-1.0 <= y <= 1.0):
            return 0.0
        if s <= -self.pull_bottom or s >= self.pull_top:
            if s == -self.pull_bottom or s == self.pull_top:
                return math.inf
            return 0.0
        return (self.slope(s) * y + self.intercept(s)) / self.normalizer

    # exact antiderivatives in s of slope and intercept
    def _slope_anti(self, s):
        span = self.pull_top + self.pull_bottom
        return -(2.0 / span) * self._w(s)

    def _intercept_anti(self, s):
        span = self.pull_top + self.pull_bottom
        u = np.clip((s + self.pull_bottom) / span, 0.0, 1.0)
        return 2.0 * np.arcsin(np.sqrt(u))

    def cell_masses(self, axes: tuple[Axis, Axis]) -> np.ndarray:
        """Exact probability mass of every grid cell (axes = (y, s)).

        Closed-form s-antiderivatives keep the integrable corner
        singularities exact, where a fixed-order rule would lose several
        percent per edge cell.
        """
        ax_y, ax_s = axes
        ye = np.clip(ax_y.edges, -1.0, 1.0)
        se = np.clip(ax_s.edges, -self.pull_bottom, self.pull_top)
        d_sq = np.diff(ye ** 2) / 2.0
        d_y = np.diff(ye)
        d_slope = np.diff(self._slope_anti(se))
        d_inter = np.diff(self._intercept_anti(se))
        return (np.outer(d_sq, d_slope) + np.outer(d_y, d_inter)) / self.normalizer

    def singular_corner_cells(self, axes: tuple[Axis, Axis]) -> list[tuple[int, int]]:
        """Grid cells containing the two corners where the density blows up."""
        ax_y, ax_s = axes
        cells = set()
        for y, s in ((1.0, self.pull_top), (-1.0, -self.pull_bottom)):
            iy = min(max(int((y - ax_y.lo) / (ax_y.hi - ax_y.lo) * ax_y.bins), 0),
                     ax_y.bins - 1)
            js = min(max(int((s - ax_s.lo) / (ax_s.hi - ax_s.lo) * ax_s.bins), 0),
                     ax_s.bins - 1)
            cells.add((iy, js))
        return sorted(cells)


@dataclass
class DensityComparison:
    l1: float
    per_cell: np.ndarray            # signed empirical-minus-analytic, all cells
    included: np.ndarray            # bool mask of cells entering the l1 sum
    corner_cells: list[tuple[int, int]]
    corner_report: list[tuple[tuple[int, int], float, float]]  # (cell, empirical, analytic)


def compare_to_density(hist: OccupancyHistogram, density: WristbandDensity,
                       exclude_singular_corners: bool = True) -> DensityComparison:
    """l1 distance between normalized cell masses and the closed form.

    The two singular corner cells are excluded from the sum and reported
    separately (their analytic mass is fine but the empirical estimate is
    quadrature-fragile there).
    """
    if hist.total_weight <= 0:
        raise InsufficientDataError("empty histogram")
    empirical = hist.normalized()
    analytic = density.cell_masses(hist.axes)
    diff = empirical - analytic
    corners = density.singular_corner_cells(hist.axes)
    included = np.ones_like(diff, dtype=bool)
    if exclude_singular_corners:
        for c in corners:
            included[c] = False
    l1 = float(np.abs(diff[included]).sum())
    corner_report = [(c, float(empirical[c]), float(analytic[c])) for c in corners]
    return DensityComparison(l1=l1, per_cell=diff, included=included,
                             corner_cells=corners, corner_report=corner_report)


def histogram_l1(h1: OccupancyHistogram, h2: OccupancyHistogram,
                 exclude_cells=()) -> float:
    """l1 distance between two normalized histograms on the same axes."""
    if h1.axes != h2.axes:
        raise InvalidInputError("histogram axes do not match")
    diff = h1.normalized() - h2.normalized()
    mask = np.ones_like(diff, dtype=bool)
    for c in exclude_cells:
        mask[c] = False
    return float(np.abs(diff[mask]).sum())


# ---------------------------------------------------------------------------
# Boundary identities of the closed form


@dataclass
class IdentityCheck:
    name: str
    max_error: float
    tol: float
    worst_point: tuple

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol


@dataclass
class IdentityReport:
    checks: list[IdentityCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def verify_density_identities(pull_top: float, pull_bottom: float,
                              s_grid=None, tol: float = 1e-8,
                              intercept_scale: float = 1.0) -> IdentityReport:
    """Check the three boundary identities of the closed-form density.

    At the walls ``y = +-1`` with wall forcing ``c(1) = pull_top`` and
    ``c(-1) = -pull_bottom``, the unnormalized density must satisfy

    (i)   ``(c(y) - s) * (slope(s) y + intercept(s))
            = (2 sign(y) / (top + bot)) * w(s)``,
    (ii)  the right side vanishes at both spin endpoints,
    (iii) its s-derivative equals ``-sign(y) * slope(s)``.

    The derivative check uses central differences with step 1e-6, so the
    grid keeps a margin of ``0.05 * (top + bot)`` from the endpoints where
    the inverse square root would dominate the truncation error; the
    endpoint behaviour itself is what (ii) checks.  ``intercept_scale`` is
    a fault-injection hook for testing the verifier (a correct density has
    scale 1).
    """
    a, b = float(pull_top), float(pull_bottom)
    span = a + b
    if s_grid is None:
        margin = 0.05 * span
        s_grid = np.linspace(-b + margin, a - margin, 1000)
    s_grid = np.asarray(s_grid, dtype=float)
    if np.any(s_grid <= -b) or np.any(s_grid >= a):
        raise InvalidInputError("s_grid must lie strictly inside the spin range")

    def w(s):
        return np.sqrt((a - s) * (b + s))

    def slope(s):
        return (2.0 / span) * (s - 0.5 * (a - b)) / w(s)

    def intercept(s):
        return intercept_scale / w(s)

    def wall_flux(y, s):
        forcing = a if y > 0 else -b
        return (forcing - s) * (slope(s) * y + intercept(s))

    def wall_flux_closed(y, s):
        return (2.0 * math.copysign(1.0, y) / span) * w(s)

    checks = []

    worst = (0.0, None)
    for y in (1.0, -1.0):
        err = np.abs(wall_flux(y, s_grid) - wall_flux_closed(y, s_grid))
        i = int(np.argmax(err))
        if err[i] >= worst[0]:
            worst = (float(err[i]), (y, float(s_grid[i])))
    checks.append(IdentityCheck("wall_flux_identity", worst[0], tol, worst[1]))

    exact = max(abs(wall_flux_closed(1.0, a)), abs(wall_flux_closed(-1.0, -b)))
    checks.append(IdentityCheck("flux_vanishes_at_endpoints", float(exact), tol,
                                ("s at endpoints", 0.0)))

    # approach rate: sqrt scale, so 1e-6 from the endpoint means ~1.4e-3
    edge = 1e-6
    vanish = max(abs(wall_flux(1.0, a - edge)), abs(wall_flux(-1.0, -b + edge)))
    checks.append(IdentityCheck("flux_endpoint_decay_rate", float(vanish), 2e-3,
                                ("s near endpoints", edge)))

    h = 1e-6
    worst = (0.0, None)
    for y in (1.0, -1.0):
        fd = (wall_flux_closed(y, s_grid + h) - wall_flux_closed(y, s_grid - h)) / (2 * h)
        err = np.abs(fd - (-math.copysign(1.0, y)) * slope(s_grid))
        i = int(np.argmax(err))
        if err[i] >= worst[0]:
            worst = (float(err[i]), (y, float(s_grid[i])))
    checks.append(IdentityCheck("flux_derivative_matches_slope", worst[0], tol, worst[1]))

    return IdentityReport(checks=checks)


# ---------------------------------------------------------------------------
# Steering-map Jacobian


def steering_map(damping_values, forcing_vectors, t) -> np.ndarray:
    """Composite spin displacement after holding at p anchors for times t.

    ``v(t) = sum_j exp(-sum_{k>=j} a_k t_k) (g_j / a_j) (exp(a_j t_j) - 1)``
    with ``g_j`` the rows of ``forcing_vectors``.
    """
    a = np.asarray(damping_values, dtype=float)
    G = np.asarray(forcing_vectors, dtype=float)
    t = np.asarray(t, dtype=float)
    p = len(a)
    out = np.zeros(p)
    for j in range(p):
        decay = math.exp(-float(np.dot(a[j:], t[j:])))
        out += decay * (G[j] / a[j]) * (math.exp(a[j] * t[j]) - 1.0)
    return out


def jacobian_check(damping_values, forcing_vectors, t_points,
                   fd_step: float = 1e-6) -> float:
    """Max relative error between the finite-difference Jacobian determinant
    of the steering map and its closed form
    ``det(G^T) * exp(-sum_k k a_k t_k)``."""
    a = np.asarray(damping_values, dtype=float)
    G = np.asarray(forcing_vectors, dtype=float)
    p = len(a)
    if G.shape != (p, p):
        raise InvalidInputError("need p forcing vectors of dimension p")
    det_g = float(np.linalg.det(G.T))
    if abs(det_g) < 1e-12:
        raise InvalidInputError("forcing vectors are linearly dependent")
    worst = 0.0
    for t in t_points:
        t = np.asarray(t, dtype=float)
        jac = np.zeros((p, p))
        for i in range(p):
            tp = t.copy(); tp[i] += fd_step
            tm = t.copy(); tm[i] -= fd_step
            jac[:, i] = (steering_map(a, G, tp) - steering_map(a, G, tm)) / (2 * fd_step)
        ref = det_g * math.exp(-float(np.dot(np.arange(1, p + 1) * a, t)))
        worst = max(worst, abs(float(np.linalg.det(jac)) - ref) / abs(ref))
    return worst


# ---------------------------------------------------------------------------
# Hitting diagnostics


@dataclass
class HittingReport:
    starts: list
    #: fraction of trials ending inside the target ball in state and spin
    end_in_ball: np.ndarray
    #: fraction of trials whose spin entered the spin ball at some point
    spin_visited: np.ndarray


def hitting_estimate(domain, fields, z, radius: float, horizon: float,
                     starts, trials: int, seed: int, dt: float = 1e-3) -> HittingReport:
    """Monte Carlo frequency of ``(X_T, S_T)`` landing near ``(z, 0)``.

    For each start, runs ``trials`` independent chains and reports the
    fraction ending inside ``B(z, radius) x B(0, radius)`` plus the fraction
    whose spin norm dipped below ``radius`` at any step.
    """
    z = np.asarray(z, dtype=float)
    if domain.boundary_distance(z) <= radius:
        raise InvalidInputError("target ball must sit inside the domain")
    end_freq = np.zeros(len(starts))
    visit_freq = np.zeros(len(starts))
    request = AnalysisRequest(record=False)
    for i, (x0, s0) in enumerate(starts):
        hits = visits = 0
        for t in range(trials):
            cfg = SimConfig(dt=dt, horizon=horizon, seed=seed + i * trials + t,
                            initial_x=tuple(x0), initial_s=tuple(s0))
            stats = run_analysis(cfg, domain, fields, request)
            in_ball = (domain.distance(stats.final_position, z) <= radius
                       and float(np.linalg.norm(stats.final_spin)) <= radius)
            hits += in_ball
            visits += stats.min_spin_norm <= radius
        end_freq[i] = hits / trials
        visit_freq[i] = visits / trials
    return HittingReport(starts=list(starts), end_in_ball=end_freq,
                         spin_visited=visit_freq)
