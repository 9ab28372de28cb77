"""Geometry of the state domain.

Two variants are supported: the *wristband* (a flat strip, periodic in the
first coordinate, walls at ``y = +-half_width``) and smooth level-set domains
described by a defining function ``phi`` with interior ``phi > 0``.  Both
expose the same small surface: membership classification, inward unit
normals, nearest-point projection onto the closure (the per-step constraint
map used by the integrator) and, for the wristband, periodic wrapping.

All values are immutable after construction and safe to share across
concurrent workers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import GeometryError, InvalidInputError, UnsupportedOperationError

TWO_PI = 2.0 * math.pi

#: Distance below which a point counts as lying on the boundary.  Tight
#: default for deterministic paths; simulated paths should pass something
#: on the order of sqrt(dt) * 1e-3.
DEFAULT_BOUNDARY_TOLERANCE = 1e-12


class Region(enum.Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    EXTERIOR = "exterior"


def _as_point(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidInputError(f"expected a 1-d point, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError(f"non-finite coordinates: {x}")
    return x


@dataclass(frozen=True)
class Wristband:
    """Strip ``|y| <= half_width`` with ``x`` identified modulo ``period``.

    The interior is ``|y| < half_width``; the boundary is the two walls
    ``y = +-half_width``.  Distances in ``x`` are minimal periodic distances,
    so the strip is a compact flat cylinder.
    """

    period: float = TWO_PI
    half_width: float = 1.0
    boundary_tolerance: float = DEFAULT_BOUNDARY_TOLERANCE

    def __post_init__(self):
        if not (self.period > 0 and self.half_width > 0):
            raise InvalidInputError("period and half_width must be positive")
        if not self.boundary_tolerance > 0:
            raise InvalidInputError("boundary_tolerance must be positive")

    @property
    def dim(self) -> int:
        return 2

    @property
    def inradius(self) -> float:
        return self.half_width

    def boundary_distance(self, x) -> float:
        """Signed distance to the walls: positive inside, negative outside."""
        x = _as_point(x)
        return self.half_width - abs(x[1])

    def classify(self, x) -> Region:
        d = self.boundary_distance(x)
        if abs(d) <= self.boundary_tolerance:
            return Region.BOUNDARY
        return Region.INTERIOR if d > 0 else Region.EXTERIOR

    def inward_normal(self, x) -> np.ndarray:
        if self.classify(x) is not Region.BOUNDARY:
            raise GeometryError(f"{x} is not on the boundary")
        x = _as_point(x)
        return np.array([0.0, -math.copysign(1.0, x[1])])

    def project_to_closure(self, x) -> tuple[np.ndarray, float]:
        """Clamp ``y`` into ``[-half_width, half_width]``.

        Returns the projected point and the push distance (zero iff the
        point was already in the closure).
        """
        x = _as_point(x)
        y = min(max(x[1], -self.half_width), self.half_width)
        return np.array([x[0], y]), abs(x[1] - y)

    def wrap(self, x) -> np.ndarray:
        """Map the first coordinate into ``[0, period)``."""
        x = _as_point(x)
        r = x[0] % self.period
        if r >= self.period:  # tiny negatives can round the modulo up
            r -= self.period
        return np.array([r, x[1]])

    def distance(self, a, b) -> float:
        """Metric distance with minimal periodic separation in ``x``."""
        a, b = _as_point(a), _as_point(b)
        dx = abs(a[0] - b[0]) % self.period
        dx = min(dx, self.period - dx)
        return math.hypot(dx, a[1] - b[1])

    def boundary_points(self, count: int) -> np.ndarray:
        """``count`` points spread over both walls (top first)."""
        if count < 2:
            raise InvalidInputError("need at least 2 boundary points")
        n_top = (count + 1) // 2
        n_bot = count - n_top
        xs_top = np.linspace(0.0, self.period, n_top, endpoint=False)
        xs_bot = np.linspace(0.0, self.period, max(n_bot, 1), endpoint=False)
        top = np.column_stack([xs_top, np.full(n_top, self.half_width)])
        bot = np.column_stack([xs_bot, np.full(max(n_bot, 1), -self.half_width)])
        return np.vstack([top, bot[:n_bot]])

    def interior_anchor(self) -> np.ndarray:
        return np.array([0.0, 0.0])


@dataclass(frozen=True)
class SmoothPhiDomain:
    """Level-set domain: interior ``phi > 0``, boundary ``phi = 0``.

    ``grad_phi`` must not vanish near the boundary; the unit inward normal is
    ``grad_phi / |grad_phi|``.  Projection onto the closure runs a damped
    Newton iteration along the gradient and fails with :class:`GeometryError`
    for points beyond the reach of the boundary.

    Parameters
    ----------
    phi, grad_phi : callables
        Defining function and its gradient, evaluated at 1-d points.
    boundary_sampler : callable, optional
        ``count -> (count, dim) array`` of boundary points; required by
        consumers that scan the boundary (field sup-norms, hulls).
    center : array, optional
        A designated interior point used to bend steering curves inward.
    """

    phi: Callable[[np.ndarray], float]
    grad_phi: Callable[[np.ndarray], np.ndarray]
    dim: int = 2
    boundary_tolerance: float = DEFAULT_BOUNDARY_TOLERANCE
    projection_max_iter: int = 50
    projection_tol: float = 1e-12
    boundary_sampler: Callable[[int], np.ndarray] | None = None
    center: np.ndarray | None = None
    inradius: float = 1.0
    #: exact signed distance when known; the phi-based estimate is only
    #: first-order accurate away from the boundary
    signed_distance: Callable[[np.ndarray], float] | None = None
    #: vectorised variant over (k, dim) arrays, used by bulk clearance checks
    signed_distance_many: Callable[[np.ndarray], np.ndarray] | None = None

    def boundary_distance(self, x) -> float:
        """Signed distance to the boundary: positive inside.

        Uses the exact ``signed_distance`` when provided, otherwise the
        first-order estimate ``phi / |grad_phi|`` (grad_phi never vanishes
        near the boundary, but may at interior critical points, where the
        sign of phi alone decides).
        """
        x = _as_point(x)
        if self.signed_distance is not None:
            return float(self.signed_distance(x))
        val = float(self.phi(x))
        g = np.asarray(self.grad_phi(x), dtype=float)
        norm = np.linalg.norm(g)
        if norm == 0.0:
            if val == 0.0:
                raise GeometryError(f"phi and grad_phi both vanish at {x}")
            return math.inf if val > 0 else -math.inf
        return val / norm

    def classify(self, x) -> Region:
        d = self.boundary_distance(x)
        if abs(d) <= self.boundary_tolerance:
            return Region.BOUNDARY
        return Region.INTERIOR if d > 0 else Region.EXTERIOR

    def inward_normal(self, x) -> np.ndarray:
        if self.classify(x) is not Region.BOUNDARY:
            raise GeometryError(f"{x} is not on the boundary")
        x = _as_point(x)
        g = np.asarray(self.grad_phi(x), dtype=float)
        norm = np.linalg.norm(g)
        if norm < 1.0 - 1e-9:
            raise GeometryError(f"|grad_phi| = {norm} < 1 on the boundary at {x}")
        return g / norm

    def project_to_closure(self, x) -> tuple[np.ndarray, float]:
        x = _as_point(x)
        if self.phi(x) >= 0.0:
            return x.copy(), 0.0
        z = x.copy()
        val = float(self.phi(z))
        for _ in range(self.projection_max_iter):
            # converged, including phi negative at the rounding floor, where
            # the Newton step would fall below one ulp
            if abs(val) <= self.projection_tol:
                return z, float(np.linalg.norm(x - z))
            g = np.asarray(self.grad_phi(z), dtype=float)
            g2 = float(g @ g)
            if g2 < 1e-300:
                raise GeometryError("grad_phi vanished during projection")
            step = (-val / g2) * g
            t = 1.0
            while t > 1e-4:
                cand = z + t * step
                cand_val = float(self.phi(cand))
                if abs(cand_val) < abs(val):
                    break
                t *= 0.5
            else:
                raise GeometryError(f"projection stalled at {z}")
            z, val = cand, cand_val
        if abs(val) <= self.projection_tol:
            return z, float(np.linalg.norm(x - z))
        raise GeometryError(f"projection did not converge from {x}")

    def wrap(self, x) -> np.ndarray:
        raise UnsupportedOperationError("wrap is only defined for the wristband")

    def distance(self, a, b) -> float:
        return float(np.linalg.norm(_as_point(a) - _as_point(b)))

    def boundary_points(self, count: int) -> np.ndarray:
        if self.boundary_sampler is None:
            raise UnsupportedOperationError("domain has no boundary sampler")
        return np.asarray(self.boundary_sampler(count), dtype=float)

    def interior_anchor(self) -> np.ndarray:
        if self.center is None:
            raise UnsupportedOperationError("domain has no designated center")
        return np.asarray(self.center, dtype=float)


def unit_disk(boundary_tolerance: float = DEFAULT_BOUNDARY_TOLERANCE) -> SmoothPhiDomain:
    """The unit disk as a level-set domain, ``phi = 1 - |x|^2``."""

    def sampler(count):
        th = np.linspace(0.0, TWO_PI, count, endpoint=False)
        return np.column_stack([np.cos(th), np.sin(th)])

    return SmoothPhiDomain(
        phi=lambda x: 1.0 - float(x @ x),
        grad_phi=lambda x: -2.0 * np.asarray(x, dtype=float),
        dim=2,
        boundary_tolerance=boundary_tolerance,
        boundary_sampler=sampler,
        center=np.zeros(2),
        inradius=1.0,
        signed_distance=lambda x: 1.0 - float(np.linalg.norm(x)),
        signed_distance_many=lambda pts: 1.0 - np.linalg.norm(pts, axis=1),
    )


DomainSpec = Wristband | SmoothPhiDomain
