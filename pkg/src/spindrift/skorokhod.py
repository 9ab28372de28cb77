"""Deterministic drivers of bounded variation and their reflected solutions.

A driver alternates two kinds of segments: *free curves*, explicit paths
through the closure along which boundary local time is frozen, and
*boundary holds*, during which the state sits at a fixed boundary point
while local time grows at a constant rate and the spin relaxes toward the
forcing/damping ratio at that point through its exact exponential flow.

:func:`construct_steering_driver` builds the driver that brings any initial
``(x0, s0)`` to ``(z, 0)`` in a prescribed time: expand ``-s0`` over the
anchor forcing vectors with non-negative coefficients, then choose hold
rates inductively so the composed spin flows cancel the initial spin, while
free curves ferry the position between anchors and finally to the target.
Everything is evaluated in closed form, which is why the round trip closes
to near machine precision.
"""

from __future__ import annotations

import io
import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .domain import DomainSpec, Region, Wristband
from .errors import DriverValidationError, GeometryError, InvalidInputError
from .fields import AnchorSet, FieldSet, solve_lambda
from .integrator import spin_update

_CONTINUITY_TOL = 1e-9
_CURVE_SAMPLES = 1000


@dataclass(frozen=True)
class FreeCurve:
    """Explicit path segment; spin and local time stay frozen along it."""

    t0: float
    t1: float
    path: Callable[[float], np.ndarray]
    #: quadratic Bezier control polygon when the curve was built by us;
    #: needed for serialization, None for user-supplied callables
    control: np.ndarray | None = None

    def start(self) -> np.ndarray:
        return np.asarray(self.path(self.t0), dtype=float)

    def end(self) -> np.ndarray:
        return np.asarray(self.path(self.t1), dtype=float)


@dataclass(frozen=True)
class BoundaryHold:
    """Hold at a boundary point with constant local-time rate."""

    t0: float
    t1: float
    point: np.ndarray
    rate: float

    def start(self) -> np.ndarray:
        return np.asarray(self.point, dtype=float)

    end = start


@dataclass
class BVDriver:
    """Ordered segments partitioning ``[0, total_time]``."""

    segments: list
    total_time: float

    def validate(self, domain: DomainSpec) -> None:
        if not self.segments:
            raise DriverValidationError("driver has no segments")
        t = 0.0
        prev_end = None
        for i, seg in enumerate(self.segments):
            if abs(seg.t0 - t) > _CONTINUITY_TOL:
                raise DriverValidationError(
                    f"segment {i} starts at {seg.t0}, expected {t}", segment_index=i)
            if not seg.t1 > seg.t0:
                raise DriverValidationError(
                    f"segment {i} has non-positive duration", segment_index=i)
            if isinstance(seg, BoundaryHold):
                if seg.rate < 0:
                    raise DriverValidationError(
                        f"segment {i} has negative hold rate", segment_index=i)
                if domain.classify(seg.point) is not Region.BOUNDARY:
                    raise DriverValidationError(
                        f"segment {i} holds off the boundary at {seg.point}",
                        segment_index=i)
            else:
                us = np.linspace(0.0, 1.0, 64)
                pts = np.array([seg.path(seg.t0 + u * (seg.t1 - seg.t0)) for u in us])
                if isinstance(domain, Wristband):
                    outside = np.abs(pts[:, 1]) > domain.half_width + domain.boundary_tolerance
                else:
                    outside = np.array([domain.classify(p) is Region.EXTERIOR for p in pts])
                if outside.any():
                    raise DriverValidationError(
                        f"segment {i} leaves the closure at "
                        f"t={seg.t0 + us[outside.argmax()] * (seg.t1 - seg.t0)}",
                        segment_index=i)
            if prev_end is not None and domain.distance(seg.start(), prev_end) > _CONTINUITY_TOL:
                raise DriverValidationError(
                    f"segment {i} starts at {seg.start()}, previous ended at {prev_end}",
                    segment_index=i)
            prev_end = seg.end()
            t = seg.t1
        if abs(t - self.total_time) > _CONTINUITY_TOL:
            raise DriverValidationError(
                f"segments end at {t}, total_time is {self.total_time}")


class SolvedPath:
    """Piecewise closed-form solution ``(x, s, l)`` driven by a BVDriver."""

    def __init__(self, driver, starts_s, starts_l, fields):
        self._driver = driver
        self._starts_s = starts_s    # spin at each segment start
        self._starts_l = starts_l    # local time at each segment start
        self._fields = fields
        self._t0s = [seg.t0 for seg in driver.segments]

    def _locate(self, t: float) -> int:
        if not 0.0 <= t <= self._driver.total_time + _CONTINUITY_TOL:
            raise InvalidInputError(f"time {t} outside [0, {self._driver.total_time}]")
        return max(0, bisect_right(self._t0s, t) - 1)

    def position(self, t: float) -> np.ndarray:
        seg = self._driver.segments[self._locate(t)]
        if isinstance(seg, BoundaryHold):
            return seg.point.copy()
        return np.asarray(seg.path(min(t, seg.t1)), dtype=float)

    def local_time(self, t: float) -> float:
        i = self._locate(t)
        seg = self._driver.segments[i]
        l = self._starts_l[i]
        if isinstance(seg, BoundaryHold):
            l += seg.rate * (min(t, seg.t1) - seg.t0)
        return l

    def spin(self, t: float) -> np.ndarray:
        i = self._locate(t)
        seg = self._driver.segments[i]
        s = self._starts_s[i]
        if isinstance(seg, BoundaryHold):
            dl = seg.rate * (min(t, seg.t1) - seg.t0)
            s = spin_update(s, self._fields.forcing(seg.point),
                            self._fields.damping(seg.point), dl)
        return np.asarray(s, dtype=float)

    def sample(self, times) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        times = np.asarray(times, dtype=float)
        xs = np.array([self.position(t) for t in times])
        ss = np.array([self.spin(t) for t in times])
        ls = np.array([self.local_time(t) for t in times])
        return xs, ss, ls

    @property
    def final_position(self) -> np.ndarray:
        return self.position(self._driver.total_time)

    @property
    def final_spin(self) -> np.ndarray:
        return self.spin(self._driver.total_time)

    @property
    def final_local_time(self) -> float:
        return self.local_time(self._driver.total_time)


def solve_deterministic(driver: BVDriver, domain: DomainSpec, fields: FieldSet,
                        x0, s0) -> SolvedPath:
    """Solve the reflected system along a validated driver.

    On free curves the position follows the curve with spin and local time
    constant; on boundary holds the position is pinned, local time grows
    linearly and the spin follows its exact flow.  Local time never grows
    off the boundary by construction.
    """
    driver.validate(domain)
    x0 = np.asarray(x0, dtype=float)
    if domain.distance(driver.segments[0].start(), x0) > _CONTINUITY_TOL:
        raise DriverValidationError(
            f"driver starts at {driver.segments[0].start()}, state starts at {x0}",
            segment_index=0)
    s = np.asarray(s0, dtype=float)
    l = 0.0
    starts_s = []
    starts_l = []
    for seg in driver.segments:
        starts_s.append(s.copy())
        starts_l.append(l)
        if isinstance(seg, BoundaryHold):
            dl = seg.rate * (seg.t1 - seg.t0)
            s = spin_update(s, fields.forcing(seg.point), fields.damping(seg.point), dl)
            l += dl
    return SolvedPath(driver, starts_s, starts_l, fields)


# ---------------------------------------------------------------------------
# Interior connecting curves


def interior_curve(domain: DomainSpec, t0: float, t1: float, a, b) -> FreeCurve:
    """Quadratic Bezier from ``a`` to ``b``, strictly interior in between.

    The control point is the midpoint pulled to the domain's interior
    anchor in the transverse direction; interiority is verified by sampling
    and requiring positive clearance.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if isinstance(domain, Wristband):
        # take the short way around the cylinder
        delta = (b[0] - a[0]) % domain.period
        if delta > domain.period / 2:
            delta -= domain.period
        b = np.array([a[0] + delta, b[1]])
        control = np.array([0.5 * (a[0] + b[0]), 0.0])
    else:
        anchor = domain.interior_anchor()
        control = 0.5 * (0.5 * (a + b) + anchor)

    ctrl = np.vstack([a, control, b])

    def path(t):
        u = (t - t0) / (t1 - t0)
        return ((1 - u) ** 2) * ctrl[0] + 2 * u * (1 - u) * ctrl[1] + (u ** 2) * ctrl[2]

    u = ((np.arange(_CURVE_SAMPLES) + 1.0) / (_CURVE_SAMPLES + 1.0))[:, None]
    pts = ((1 - u) ** 2) * ctrl[0] + 2 * u * (1 - u) * ctrl[1] + (u ** 2) * ctrl[2]
    if isinstance(domain, Wristband):
        bad = domain.half_width - np.abs(pts[:, 1]) <= 0.0
    elif getattr(domain, "signed_distance_many", None) is not None:
        bad = domain.signed_distance_many(pts) <= 0.0
    else:
        bad = np.array([not domain.boundary_distance(p) > 0.0 for p in pts])
    if bad.any():
        raise GeometryError(
            f"connecting curve touches the boundary at u={float(u[bad.argmax(), 0])}")
    return FreeCurve(t0=t0, t1=t1, path=path, control=ctrl)


def construct_steering_driver(domain: DomainSpec, fields: FieldSet, anchors: AnchorSet,
                              x0, s0, z, total_time: float) -> BVDriver:
    """Driver steering ``(x0, s0)`` to ``(z, 0)`` at ``total_time``.

    Uses the uniform partition with equal free-curve and hold durations.
    Hold rates solve, hold by hold, the cancellation condition
    ``damping_m * lambda_m = (y_m - 1) * prod_{i<m} y_i`` with
    ``y_m = exp(rate_m * damping_m * duration)`` and ``lambda`` the
    non-negative expansion of ``-s0`` over the anchor forcing vectors.
    """
    if not total_time > 0:
        raise InvalidInputError("total_time must be positive")
    z = np.asarray(z, dtype=float)
    if domain.classify(z) is not Region.INTERIOR:
        raise InvalidInputError(f"steering target {z} must be interior")
    x0 = np.asarray(x0, dtype=float)
    s0 = np.asarray(s0, dtype=float)
    lam = solve_lambda(-s0, anchors.forcing_vectors)

    holds = anchors.forcing_vectors.shape[0]
    dur = total_time / (2 * holds + 1)
    segments = []
    prev_point = x0
    prod = 1.0
    for m in range(holds):
        t_curve = 2 * m * dur
        t_hold = (2 * m + 1) * dur
        pt = anchors.points[m]
        segments.append(interior_curve(domain, t_curve, t_hold, prev_point, pt))
        a_m = float(anchors.damping_values[m])
        y_m = 1.0 + a_m * float(lam[m]) / prod
        rate = math.log(y_m) / (a_m * dur)
        segments.append(BoundaryHold(t0=t_hold, t1=(2 * m + 2) * dur,
                                     point=np.asarray(pt, float), rate=rate))
        prod *= y_m
        prev_point = pt
    segments.append(interior_curve(domain, 2 * holds * dur, total_time, prev_point, z))
    driver = BVDriver(segments=segments, total_time=total_time)
    driver.validate(domain)
    return driver


# ---------------------------------------------------------------------------
# Text serialization (golden-file friendly)


def driver_to_text(driver: BVDriver) -> str:
    out = io.StringIO()
    out.write(f"bvdriver total_time={driver.total_time:.17g} "
              f"segments={len(driver.segments)}\n")
    for seg in driver.segments:
        if isinstance(seg, BoundaryHold):
            pt = " ".join(f"{v:.17g}" for v in seg.point)
            out.write(f"hold {seg.t0:.17g} {seg.t1:.17g} point {pt} rate {seg.rate:.17g}\n")
        else:
            if seg.control is None:
                raise InvalidInputError("only control-polygon curves serialize")
            flat = " ".join(f"{v:.17g}" for row in seg.control for v in row)
            out.write(f"free {seg.t0:.17g} {seg.t1:.17g} ctrl {flat}\n")
    return out.getvalue()


def driver_from_text(text: str) -> BVDriver:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    head = lines[0].split()
    if head[0] != "bvdriver":
        raise InvalidInputError("not a serialized driver")
    total_time = float(head[1].split("=")[1])
    n_seg = int(head[2].split("=")[1])
    segments = []
    for ln in lines[1:]:
        tok = ln.split()
        t0, t1 = float(tok[1]), float(tok[2])
        if tok[0] == "hold":
            k = tok.index("point")
            r = tok.index("rate")
            point = np.array([float(v) for v in tok[k + 1:r]])
            segments.append(BoundaryHold(t0=t0, t1=t1, point=point, rate=float(tok[r + 1])))
        elif tok[0] == "free":
            k = tok.index("ctrl")
            vals = np.array([float(v) for v in tok[k + 1:]])
            ctrl = vals.reshape(3, -1)

            def make_path(c, a, b):
                def path(t):
                    u = (t - a) / (b - a)
                    return ((1 - u) ** 2) * c[0] + 2 * u * (1 - u) * c[1] + (u ** 2) * c[2]
                return path

            segments.append(FreeCurve(t0=t0, t1=t1, path=make_path(ctrl, t0, t1), control=ctrl))
        else:
            raise InvalidInputError(f"unknown segment kind {tok[0]!r}")
    if len(segments) != n_seg:
        raise InvalidInputError("segment count mismatch")
    return BVDriver(segments=segments, total_time=total_time)
