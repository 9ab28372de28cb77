"""Boundary coefficient fields and the positive-spanning machinery.

A :class:`FieldSet` bundles the four coefficient evaluators of the reflected
system: the spin forcing (vector field on the boundary), the spin damping
(uniformly positive scalar), the tangential reflection component, and the
diffusion matrix.  On top of it sit the combinatorial checks used by the
steering construction and by the stationary-law analysis:

* :func:`check_positive_span`: do ``p+1`` forcing vectors positively span
  R^p, i.e. can every target be written as a non-negative combination?
* :func:`cone_membership`: is a target reachable with total coefficient
  mass below a given budget?
* :func:`solve_nonneg_combination`: the minimal-mass certificate itself,
  solved exactly by enumerating basic solutions (dimension is tiny).
* :func:`spin_hull`: convex hull of forcing/damping ratios over the
  boundary: the support polytope of the long-run spin law.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .domain import DomainSpec, Region, Wristband
from .errors import CertificateError, FieldError, GeometryError, InvalidInputError

_TANGENCY_TOL = 1e-10


# ---------------------------------------------------------------------------
# FieldSet


@dataclass
class FieldSet:
    """Coefficient evaluators plus cached bounds.

    Attributes
    ----------
    forcing : callable ``x -> (p,) array``
        Spin forcing on the boundary.
    damping : callable ``x -> float``
        Spin damping, bounded below by ``damping_inf > 0``.
    tangential : callable ``(x, s) -> (n,) array``
        Tangential part of the reflection direction; must be orthogonal to
        the inward normal wherever queried.
    diffusion : callable ``x -> (n, n) array`` or None
        Diffusion matrix (None means identity).
    forcing_sup : float
        Cached sup of ``|forcing|`` over the boundary.
    damping_inf : float
        Cached inf of the damping over the boundary.
    kernel_spec : dict or None
        Present when the fields come from the built-in vocabulary; lets the
        integrator drop into its compiled fast path.
    """

    spin_dim: int
    forcing: Callable[[np.ndarray], np.ndarray]
    damping: Callable[[np.ndarray], float]
    tangential: Callable[[np.ndarray, np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray] | None
    forcing_sup: float
    damping_inf: float
    kernel_spec: dict | None = None

    def __post_init__(self):
        if self.spin_dim < 1:
            raise InvalidInputError("spin_dim must be >= 1")
        if not (self.damping_inf > 0):
            raise FieldError("damping must be uniformly positive")

    @property
    def spin_radius(self) -> float:
        """Radius ``forcing_sup / damping_inf`` of the absorbing spin ball."""
        return self.forcing_sup / self.damping_inf

    @classmethod
    def build(
        cls,
        domain: DomainSpec,
        spin_dim: int,
        forcing,
        damping,
        tangential=None,
        diffusion=None,
        forcing_sup: float | None = None,
        damping_inf: float | None = None,
        scan_points: int = 8192,
    ) -> "FieldSet":
        """Assemble a field set, scanning the boundary for missing bounds."""
        if tangential is None:
            tangential = lambda x, s: np.zeros(len(np.atleast_1d(x)))
        if forcing_sup is None or damping_inf is None or diffusion is not None:
            pts = domain.boundary_points(scan_points)
            if forcing_sup is None:
                forcing_sup = max(float(np.linalg.norm(forcing(x))) for x in pts)
            if damping_inf is None:
                damping_inf = min(float(damping(x)) for x in pts)
            if diffusion is not None:
                for x in pts[:: max(1, len(pts) // 8)]:
                    m = np.asarray(diffusion(x), dtype=float)
                    if not np.allclose(m, m.T, atol=1e-9):
                        raise FieldError(f"diffusion matrix not symmetric at {x}")
                    if np.linalg.eigvalsh(0.5 * (m + m.T)).min() <= 0:
                        raise FieldError(f"diffusion matrix not positive definite at {x}")
        return cls(
            spin_dim=spin_dim,
            forcing=forcing,
            damping=damping,
            tangential=tangential,
            diffusion=diffusion,
            forcing_sup=forcing_sup,
            damping_inf=damping_inf,
        )


def reflection_direction(fields: FieldSet, domain: DomainSpec, x, s) -> np.ndarray:
    """Inward normal plus tangential component at a boundary point.

    The result has unit component along the inward normal.  Raises
    :class:`GeometryError` off the boundary and :class:`FieldError` when the
    tangential evaluator is not actually tangential.
    """
    if domain.classify(x) is not Region.BOUNDARY:
        raise GeometryError(f"{x} is not on the boundary")
    n = domain.inward_normal(x)
    t = np.asarray(fields.tangential(np.asarray(x, float), np.asarray(s, float)), float)
    dot = float(t @ n)
    if abs(dot) > _TANGENCY_TOL * max(1.0, float(np.linalg.norm(t))):
        raise FieldError(f"tangential component has normal part {dot} at {x}")
    return n + t


# ---------------------------------------------------------------------------
# Exact small-dimension LP: min sum(lambda) s.t. V^T lambda = target, lambda >= 0
#
# With p+1 vectors in R^p every feasible program has an optimal basic
# solution, so enumerating the p+1 bases is exact.

_FEAS_TOL = 1e-9


def solve_nonneg_combination(vectors, target) -> np.ndarray | None:
    """Minimal-mass non-negative combination of ``p+1`` vectors hitting ``target``.

    Returns the coefficient vector, or None when no basis is feasible.
    """
    V = np.asarray(vectors, dtype=float)
    y = np.asarray(target, dtype=float)
    if V.ndim != 2 or V.shape[0] != V.shape[1] + 1:
        raise InvalidInputError(f"expected p+1 vectors of dimension p, got {V.shape}")
    if y.shape != (V.shape[1],):
        raise InvalidInputError("target dimension mismatch")
    m, p = V.shape
    best = None
    best_mass = math.inf
    scale = max(1.0, float(np.abs(y).max(initial=0.0)))
    for keep in itertools.combinations(range(m), p):
        A = V[list(keep)].T
        try:
            lam_basis = np.linalg.solve(A, y)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(lam_basis)):
            continue
        if np.any(lam_basis < -_FEAS_TOL * max(scale, float(np.abs(lam_basis).max()))):
            continue
        lam = np.zeros(m)
        lam[list(keep)] = np.clip(lam_basis, 0.0, None)
        mass = float(lam.sum())
        if mass < best_mass:
            best, best_mass = lam, mass
    return best


def solve_lambda(target, vectors) -> np.ndarray:
    """Like :func:`solve_nonneg_combination` but raising on infeasibility."""
    lam = solve_nonneg_combination(vectors, target)
    if lam is None:
        check = check_positive_span(vectors)
        raise CertificateError(
            f"target {np.asarray(target)} has no non-negative expansion",
            witness=check.witness_direction,
        )
    return lam


@dataclass(frozen=True)
class SpanCheck:
    holds: bool
    #: when holds: coefficients for the +-unit-basis targets, rows (2p, p+1)
    certificate: np.ndarray | None
    #: when violated: a direction with no non-negative expansion
    witness_direction: np.ndarray | None


def _deepest_uncovered_direction(V: np.ndarray) -> np.ndarray | None:
    """Direction minimising ``max_j v_j . w`` over the unit sphere.

    A witness of non-spanning whenever the minimum is <= 0; found by coarse
    sampling plus local refinement (dimension is at most 3).
    """
    m, p = V.shape
    if p == 1:
        for w in (np.array([1.0]), np.array([-1.0])):
            if np.max(V @ w) <= 0:
                return w
        return None
    rng = np.random.default_rng(0)
    if p == 2:
        th = np.linspace(0.0, 2 * math.pi, 4096, endpoint=False)
        cand = np.column_stack([np.cos(th), np.sin(th)])
    else:
        cand = rng.standard_normal((8192, p))
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
    scores = (cand @ V.T).max(axis=1)
    w = cand[int(np.argmin(scores))]
    best = float(scores.min())
    step = 0.2
    while step > 1e-6:
        local = w + step * rng.standard_normal((64, p))
        local /= np.linalg.norm(local, axis=1, keepdims=True)
        s = (local @ V.T).max(axis=1)
        i = int(np.argmin(s))
        if s[i] < best:
            best, w = float(s[i]), local[i]
        else:
            step *= 0.5
    return w if best <= 1e-12 else None


def check_positive_span(vectors) -> SpanCheck:
    """Do ``p+1`` vectors positively span R^p?

    Decided by feasibility of the +-unit-basis targets together with a
    strict-interior test (the one-dimensional null space of the vector
    matrix must be strictly one-signed).  The returned witness carries the
    certificate coefficients on success, or an unrepresentable direction on
    failure.
    """
    V = np.asarray(vectors, dtype=float)
    if V.ndim != 2 or V.shape[0] != V.shape[1] + 1:
        raise InvalidInputError(f"expected p+1 vectors of dimension p, got {V.shape}")
    m, p = V.shape

    cert = np.zeros((2 * p, m))
    feasible = True
    for i in range(p):
        for sign in (1.0, -1.0):
            e = np.zeros(p)
            e[i] = sign
            lam = solve_nonneg_combination(V, e)
            if lam is None:
                feasible = False
                break
            row = i if sign > 0 else p + i
            cert[row] = lam
        if not feasible:
            break

    # strict-interior test: rank p and the null vector strictly one-signed
    u, sv, vt = np.linalg.svd(V.T)
    scale = sv[0] if sv.size else 0.0
    full_rank = sv.size == p and sv[-1] > 1e-12 * max(scale, 1.0)
    null = vt[-1]
    if null.sum() < 0:
        null = -null
    strict = full_rank and bool(np.all(null > 1e-12 * max(1.0, float(np.abs(null).max()))))

    if feasible and strict:
        return SpanCheck(holds=True, certificate=cert, witness_direction=None)
    return SpanCheck(holds=False, certificate=None,
                     witness_direction=_deepest_uncovered_direction(V))


def cone_membership(vectors, target, budget: float) -> bool:
    """Is ``target`` a non-negative combination with coefficient mass < budget?

    The strict bound is relaxed to ``<= budget * (1 - 1e-9)``.
    """
    if not budget > 0:
        raise InvalidInputError("budget must be positive")
    lam = solve_nonneg_combination(vectors, target)
    if lam is None:
        return False
    return float(lam.sum()) <= budget * (1.0 - 1e-9)


# ---------------------------------------------------------------------------
# Anchors


@dataclass(frozen=True)
class AnchorSet:
    """``p+1`` boundary points whose forcing vectors positively span R^p."""

    points: np.ndarray          # (p+1, n)
    forcing_vectors: np.ndarray  # (p+1, p)
    damping_values: np.ndarray   # (p+1,)

    def __post_init__(self):
        pts = np.asarray(self.points, float)
        fv = np.asarray(self.forcing_vectors, float)
        dv = np.asarray(self.damping_values, float)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "forcing_vectors", fv)
        object.__setattr__(self, "damping_values", dv)
        if fv.shape[0] != fv.shape[1] + 1 or pts.shape[0] != fv.shape[0]:
            raise InvalidInputError("need p+1 anchor points with p-dimensional forcing")
        if dv.shape != (fv.shape[0],) or np.any(dv <= 0):
            raise InvalidInputError("damping values must be positive, one per anchor")

    @property
    def spin_dim(self) -> int:
        return self.forcing_vectors.shape[1]

    @classmethod
    def from_fields(cls, domain: DomainSpec, fields: FieldSet, points) -> "AnchorSet":
        pts = [np.asarray(x, float) for x in points]
        for x in pts:
            if domain.classify(x) is not Region.BOUNDARY:
                raise GeometryError(f"anchor {x} is not on the boundary")
        fv = np.array([fields.forcing(x) for x in pts], float)
        dv = np.array([fields.damping(x) for x in pts], float)
        anchors = cls(np.array(pts), fv, dv)
        if not check_positive_span(fv).holds:
            raise CertificateError("anchor forcing vectors do not positively span")
        return anchors


def default_anchors(domain: DomainSpec, fields: FieldSet, samples: int = 128,
                    tries: int = 500, seed: int = 0) -> AnchorSet:
    """Pick ``p+1`` boundary points whose forcing vectors positively span.

    Seeded random search over boundary samples, keeping the subset whose
    certificate has the largest mass margin.  Raises
    :class:`CertificateError` when no sampled subset spans.
    """
    pts = domain.boundary_points(samples)
    fv = np.array([np.asarray(fields.forcing(x), float) for x in pts])
    p = fields.spin_dim
    rng = np.random.default_rng(seed)
    best = None
    best_margin = -math.inf
    for _ in range(tries):
        idx = rng.choice(len(pts), size=p + 1, replace=False)
        chk = check_positive_span(fv[idx])
        if not chk.holds:
            continue
        # smaller certificate mass = more robust spanning
        margin = -float(chk.certificate.sum(axis=1).max())
        if margin > best_margin:
            best_margin = margin
            best = idx
    if best is None:
        raise CertificateError(
            "no positively spanning anchor subset found on the boundary",
            witness=check_positive_span(fv[: p + 1]).witness_direction
            if len(fv) >= p + 1 else None,
        )
    return AnchorSet(
        points=pts[best],
        forcing_vectors=fv[best],
        damping_values=np.array([fields.damping(x) for x in pts[best]]),
    )


def fields_from_anchors(domain: DomainSpec, anchors: AnchorSet) -> FieldSet:
    """Field set that takes each anchor's values on its nearest boundary
    patch; exact at the anchor points, which is all the steering
    construction evaluates."""

    def nearest(x):
        d = [domain.distance(x, pt) for pt in anchors.points]
        return int(np.argmin(d))

    return FieldSet(
        spin_dim=anchors.spin_dim,
        forcing=lambda x: anchors.forcing_vectors[nearest(x)].copy(),
        damping=lambda x: float(anchors.damping_values[nearest(x)]),
        tangential=lambda x, s: np.zeros(domain.dim),
        diffusion=None,
        forcing_sup=float(np.linalg.norm(anchors.forcing_vectors, axis=1).max()),
        damping_inf=float(anchors.damping_values.min()),
    )


# ---------------------------------------------------------------------------
# Support polytope of the spin law


@dataclass(frozen=True)
class Polytope:
    """Convex hull in dimension 1, 2 or 3.

    ``vertices`` are ordered counter-clockwise for dimension 2.  Distances
    are exact for dimensions 1 and 2; dimension 3 uses a non-negative
    least-squares projection onto the vertex hull.
    """

    dim: int
    vertices: np.ndarray  # (k, dim)
    degenerate: bool = False  # hull has empty interior (collinear/coplanar samples)

    def contains(self, y, tol: float = 1e-9) -> bool:
        return self.distance(y) <= tol

    def distance(self, y) -> float:
        return float(self.distance_many(np.asarray(y, float)[None, :])[0])

    def distance_many(self, ys) -> np.ndarray:
        """Euclidean distance from each row to the polytope (0 inside)."""
        ys = np.asarray(ys, dtype=float)
        if ys.ndim != 2 or ys.shape[1] != self.dim:
            raise InvalidInputError(f"expected points of dimension {self.dim}")
        if self.dim == 1:
            lo, hi = float(self.vertices.min()), float(self.vertices.max())
            return np.maximum.reduce([lo - ys[:, 0], ys[:, 0] - hi, np.zeros(len(ys))])
        if self.dim == 2 and not self.degenerate and len(self.vertices) >= 3:
            return _polygon_distance(self.vertices, ys)
        return np.array([_nnls_hull_distance(self.vertices, y) for y in ys])


def _polygon_distance(verts: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Distance to a convex CCW polygon, vectorised over query points.

    Queries are processed in chunks: the (points x edges) intermediates
    would otherwise scale to gigabytes for long recorded runs.
    """
    k = len(verts)
    a = verts
    b = verts[(np.arange(k) + 1) % k]
    e = b - a  # (k,2)
    ee = (e * e).sum(axis=1)
    ee_safe = np.where(ee > 0, ee, 1.0)
    out = np.empty(len(ys))
    chunk = max(1, 4_000_000 // max(k, 1))
    for lo in range(0, len(ys), chunk):
        q = ys[lo:lo + chunk]
        rel = q[:, None, :] - a[None, :, :]  # (m,k,2)
        cross = e[None, :, 0] * rel[:, :, 1] - e[None, :, 1] * rel[:, :, 0]
        inside = np.all(cross >= -1e-15, axis=1)
        t = np.clip((rel * e[None, :, :]).sum(axis=2) / ee_safe, 0.0, 1.0)
        proj = a[None, :, :] + t[:, :, None] * e[None, :, :]
        d = np.linalg.norm(q[:, None, :] - proj, axis=2).min(axis=1)
        d[inside] = 0.0
        out[lo:lo + chunk] = d
    return out


def _nnls_hull_distance(verts: np.ndarray, y: np.ndarray) -> float:
    """Distance to conv(verts) via a sum-constrained non-negative LS solve."""
    from scipy.optimize import nnls

    big = 1e7
    A = np.vstack([verts.T, big * np.ones(len(verts))])
    b = np.concatenate([y, [big]])
    lam, _ = nnls(A, b)
    total = lam.sum()
    if total <= 0:
        return float(np.linalg.norm(y - verts[0]))
    lam = lam / total
    return float(np.linalg.norm(verts.T @ lam - y))


def _monotone_chain(points: np.ndarray) -> np.ndarray:
    """Convex hull of 2-d points, CCW vertex order (Andrew's monotone chain)."""
    pts = np.unique(points, axis=0)
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    if len(pts) <= 2:
        return pts

    def half(seq):
        out = []
        for q in seq:
            while len(out) >= 2:
                o, a = out[-2], out[-1]
                if (a[0] - o[0]) * (q[1] - o[1]) - (a[1] - o[1]) * (q[0] - o[0]) <= 0:
                    out.pop()
                else:
                    break
            out.append(q)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def hull_of_points(points) -> Polytope:
    """Convex hull of sample points in dimension 1-3."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or not 1 <= pts.shape[1] <= 3:
        raise InvalidInputError("hull supports dimensions 1 to 3")
    p = pts.shape[1]
    if p == 1:
        return Polytope(1, np.array([[pts.min()], [pts.max()]]))
    if p == 2:
        verts = _monotone_chain(pts)
        if len(verts) < 3:
            return Polytope(2, verts, degenerate=True)
        return Polytope(2, verts)
    # p == 3: qhull does the heavy lifting; fall back to the raw point set
    # when the samples are degenerate (coplanar), which keeps distances valid.
    from scipy.spatial import ConvexHull, QhullError

    try:
        hull = ConvexHull(pts)
        return Polytope(3, pts[hull.vertices])
    except QhullError:
        return Polytope(3, np.unique(pts, axis=0), degenerate=True)


def spin_hull(fields: FieldSet, domain: DomainSpec, boundary_samples: int) -> Polytope:
    """Convex hull of forcing/damping ratios sampled over the boundary.

    More samples can only grow the hull, and every sampled ratio is inside
    the returned polytope by construction.
    """
    if boundary_samples < fields.spin_dim + 1:
        raise InvalidInputError("need at least p+1 boundary samples")
    pts = domain.boundary_points(boundary_samples)
    ratios = np.array([
        np.asarray(fields.forcing(x), float) / float(fields.damping(x)) for x in pts
    ])
    return hull_of_points(ratios)


# ---------------------------------------------------------------------------
# Built-in field vocabulary (what run configs can name)
#
# Per-component forcing on each wall: const:c, cos:a (a*cos x), sin:a.
# Tangential drift along the wall direction: none, const:v, parabolic:v
# (v * (1 - |s|^2)).  Damping and diffusion scale are constants.

FORCING_KINDS = {"const": 0, "cos": 1, "sin": 2}
TAU_KINDS = {"none": 0, "const": 1, "parabolic": 2}


@dataclass(frozen=True)
class BuiltinFields:
    """Parsed built-in field description for a wristband run."""

    top_kinds: tuple[int, ...]
    top_amps: tuple[float, ...]
    bottom_kinds: tuple[int, ...]
    bottom_amps: tuple[float, ...]
    damping_const: float
    tau_kind: int
    tau_amp: float
    tau_top: bool
    tau_bottom: bool
    sigma_scale: float

    @property
    def spin_dim(self) -> int:
        return len(self.top_kinds)


def _component_value(kind: int, amp: float, x: float) -> float:
    if kind == 0:
        return amp
    if kind == 1:
        return amp * math.cos(x)
    return amp * math.sin(x)


def _wall_sup_sq(kinds, amps, samples: int = 4096) -> float:
    """Sup of |g|^2 along one wall, dense grid plus golden-section polish."""
    xs = np.linspace(0.0, 2 * math.pi, samples, endpoint=False)
    vals = np.zeros_like(xs)
    for kind, amp in zip(kinds, amps):
        if kind == 0:
            vals += amp * amp
        elif kind == 1:
            vals += (amp * np.cos(xs)) ** 2
        else:
            vals += (amp * np.sin(xs)) ** 2
    i = int(np.argmax(vals))
    lo, hi = xs[i] - (xs[1] - xs[0]), xs[i] + (xs[1] - xs[0])

    def f(x):
        return sum(_component_value(k, a, x) ** 2 for k, a in zip(kinds, amps))

    gr = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - gr * (b - a), a + gr * (b - a)
    for _ in range(80):
        if f(c) > f(d):
            b, d = d, c
            c = b - gr * (b - a)
        else:
            a, c = c, d
            d = a + gr * (b - a)
    return max(f(0.5 * (a + b)), float(vals[i]))


def builtin_field_set(domain: Wristband, spec: BuiltinFields) -> FieldSet:
    """Materialise a :class:`FieldSet` from the built-in vocabulary."""
    if not isinstance(domain, Wristband):
        raise InvalidInputError("built-in fields are defined on the wristband")
    h = domain.half_width

    def forcing(x):
        kinds, amps = (
            (spec.top_kinds, spec.top_amps) if x[1] > 0 else (spec.bottom_kinds, spec.bottom_amps)
        )
        return np.array([_component_value(k, a, x[0]) for k, a in zip(kinds, amps)])

    def damping(x):
        return spec.damping_const

    def tangential(x, s):
        on_top = x[1] > 0
        active = (on_top and spec.tau_top) or ((not on_top) and spec.tau_bottom)
        if not active or spec.tau_kind == 0:
            return np.zeros(2)
        if spec.tau_kind == 1:
            v = spec.tau_amp
        else:
            v = spec.tau_amp * (1.0 - float(np.dot(s, s)))
        return np.array([v, 0.0])

    diffusion = None
    if spec.sigma_scale != 1.0:
        scale = spec.sigma_scale
        diffusion = lambda x: scale * np.eye(2)

    sup = math.sqrt(
        max(_wall_sup_sq(spec.top_kinds, spec.top_amps),
            _wall_sup_sq(spec.bottom_kinds, spec.bottom_amps))
    )
    return FieldSet(
        spin_dim=spec.spin_dim,
        forcing=forcing,
        damping=damping,
        tangential=tangential,
        diffusion=diffusion,
        forcing_sup=sup,
        damping_inf=spec.damping_const,
        kernel_spec={"builtin": spec, "half_width": h, "period": domain.period},
    )
