"""Numerical checks of the geometry of response surfaces.

All verdicts are sampling based: a passing check means no violation was found at the
given resolution, not a proof.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import null_space
from scipy.special import expit, logit

from .errors import DegenerateModelError, DimensionError, HyperplaneVerificationError, SurfaceError
from .mirt_models import CoordinateChange, IndependentItem, as_ability

MONOTONE_TOL = 1e-10
DECOMPOSITION_TOL = 1e-6
FACTORIZATION_TOL = 1e-8
ANGLE_TOL = 1e-6
DEFAULT_HALF_WIDTH = 6.0
COMPENSATION_CAP = 50.0


@dataclass(frozen=True)
class Surface:
    """A black-box response surface.

    ``fn`` maps an array of abilities with shape ``(..., dim)`` to probabilities with
    shape ``(...)``. Use :meth:`pointwise` to wrap a function of a single point.
    """

    fn: Callable
    dim: int
    name: str = "surface"

    def __call__(self, theta):
        theta = as_ability(theta, self.dim)
        values = np.asarray(self.fn(theta), dtype=float)
        if values.shape != theta.shape[:-1]:
            values = np.broadcast_to(values, theta.shape[:-1])
        if not np.all(np.isfinite(values)):
            raise SurfaceError(f"{self.name} returned a non-finite value")
        return values

    @classmethod
    def from_model(cls, model, name=None) -> "Surface":
        return cls(model.prob, model.dim, name or type(model).__name__)

    @classmethod
    def pointwise(cls, fn, dim, name="surface") -> "Surface":
        def vectorized(theta):
            flat = theta.reshape(-1, dim)
            return np.array([fn(t) for t in flat], dtype=float).reshape(theta.shape[:-1])

        return cls(vectorized, dim, name)

    def rescaled(self, factor: float) -> "Surface":
        """The surface theta -> f(factor * theta)."""
        return Surface(lambda t: self.fn(factor * t), self.dim, f"{self.name}(x{factor:g})")

    def in_coordinates(self, G: CoordinateChange) -> "Surface":
        """The functional representation theta' -> f(G theta') in primed coordinates."""
        if not isinstance(G, CoordinateChange):
            G = CoordinateChange(G)
        if G.dim != self.dim:
            raise DimensionError(f"coordinate change of dimension {G.dim} for surface of dimension {self.dim}")
        return Surface(lambda t: self.fn(t @ G.G.T), self.dim, f"{self.name}∘G")


@dataclass(frozen=True)
class LineProbe:
    """Line ``w + lambda * v`` scanned on a uniform grid of ``n`` lambdas in [lo, hi]."""

    w: np.ndarray
    v: np.ndarray
    lo: float = -DEFAULT_HALF_WIDTH
    hi: float = DEFAULT_HALF_WIDTH
    n: int = 241

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(-1)
        v = np.asarray(self.v, dtype=float).reshape(-1)
        if w.shape != v.shape:
            raise DimensionError("base point and direction differ in dimension")
        if not np.any(v):
            raise ValueError("probe direction must be nonzero")
        if not self.lo < self.hi:
            raise ValueError("probe interval requires lo < hi")
        if self.n < 3:
            raise ValueError("probe grid needs at least 3 points")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "v", v)

    def lambdas(self):
        return np.linspace(self.lo, self.hi, self.n)

    def points(self):
        return self.w + self.lambdas()[:, None] * self.v


class Direction(str, enum.Enum):
    NON_DECREASING = "non-decreasing"
    NON_INCREASING = "non-increasing"
    CONSTANT = "constant"
    NONE = "none"


@dataclass
class MonotonicityVerdict:
    monotone: bool
    direction: Direction
    worst_violation: float
    witness: tuple
    lambdas: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    @property
    def peak(self):
        """(lambda, value) at the maximum sampled value."""
        k = int(np.argmax(self.values))
        return float(self.lambdas[k]), float(self.values[k])


def check_line_monotonic(f: Surface, probe: LineProbe, tol: float = MONOTONE_TOL) -> MonotonicityVerdict:
    """Check that f restricted to the probe line is monotone up to ``tol``."""
    lam = probe.lambdas()
    values = f(probe.points())
    diffs = np.diff(values)
    if np.all(np.abs(diffs) <= tol):
        return MonotonicityVerdict(True, Direction.CONSTANT, 0.0, (float(lam[0]), float(lam[-1])), lam, values)

    # violation of each candidate direction is its largest wrong-signed step
    down = float(max(0.0, -diffs.min()))
    up = float(max(0.0, diffs.max()))
    if down <= up:
        direction, worst, k = Direction.NON_DECREASING, down, int(np.argmin(diffs))
    else:
        direction, worst, k = Direction.NON_INCREASING, up, int(np.argmax(diffs))
    monotone = worst <= tol
    return MonotonicityVerdict(
        monotone,
        direction if monotone else Direction.NONE,
        worst,
        (float(lam[k]), float(lam[k + 1])),
        lam,
        values,
    )


def numerical_gradient(f: Surface, theta, h: float = 1e-3):
    """Fourth-order central-difference gradient of ``f`` at each point of ``theta``."""
    theta = as_ability(theta, f.dim)
    eye = np.eye(f.dim) * h
    grads = np.empty(theta.shape, dtype=float)
    for d in range(f.dim):
        e = eye[d]
        grads[..., d] = (f(theta - 2 * e) - 8 * f(theta - e) + 8 * f(theta + e) - f(theta + 2 * e)) / (12 * h)
    return grads


def _angle(u, v):
    """Angle between the lines spanned by u and v (sign ignored)."""
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    c = float(u @ v)
    # atan2 of the orthogonal component stays accurate for tiny angles, unlike acos
    return float(np.arctan2(np.linalg.norm(v - c * u), abs(c)))


def _kernel_frame(normal):
    return null_space(normal[None, :])


def _kernel_offsets(kdim: int, half_width: float):
    per_axis = {0: 1, 1: 121, 2: 31, 3: 13}.get(kdim, 7)
    axis = np.linspace(-half_width, half_width, per_axis)
    return np.array(list(itertools.product(axis, repeat=kdim))) if kdim else np.zeros((1, 0))


@dataclass
class HyperplaneEstimate:
    normal: np.ndarray
    kernel: np.ndarray
    worst_deviation: float | None


def find_constant_hyperplane(
    f: Surface,
    w,
    tol: float = DECOMPOSITION_TOL,
    *,
    verify: bool = True,
    half_width: float = DEFAULT_HALF_WIDTH,
    n_samples: int = 8,
    radius: float = 0.05,
    seed: int = 0,
    min_gradient: float = 1e-12,
) -> HyperplaneEstimate:
    """Unit normal of the hyperplane through ``w`` on which ``f`` is constant.

    The normal is the consensus direction of finite-difference gradients at ``w`` and at
    ``n_samples`` points within ``radius`` of it, oriented so that ``f`` increases along it.
    With ``verify`` the surface is scanned over the kernel of the normal (a box of the
    given half width) and must vary by at most ``tol``.
    """
    w = as_ability(w, f.dim).reshape(-1)
    rng = np.random.default_rng(seed)
    pts = np.vstack([w, w + radius * rng.uniform(-1, 1, size=(n_samples, f.dim))])
    grads = numerical_gradient(f, pts)
    norms = np.linalg.norm(grads, axis=1)
    if norms[0] <= min_gradient or np.all(norms <= min_gradient):
        raise DegenerateModelError("gradient vanishes: the surface is constant near w")
    units = grads[norms > min_gradient] / norms[norms > min_gradient, None]
    ref = units[0]
    units = units * np.where(units @ ref < 0, -1.0, 1.0)[:, None]
    normal = units.mean(axis=0)
    normal /= np.linalg.norm(normal)
    kernel = _kernel_frame(normal)

    worst = None
    if verify:
        offsets = _kernel_offsets(f.dim - 1, half_width)
        values = f(w + offsets @ kernel.T)
        worst = float(np.max(np.abs(values - f(w))))
        if worst > tol:
            raise HyperplaneVerificationError(
                f"surface varies by {worst:.3g} on the candidate constant hyperplane (tol {tol:g})",
                worst,
                normal,
            )
    return HyperplaneEstimate(normal, kernel, worst)


@dataclass
class ParallelReport:
    parallel: bool
    max_angle: float
    normals: np.ndarray


def check_parallel(f: Surface, points, tol: float = ANGLE_TOL, **kwargs) -> ParallelReport:
    """Do the constant hyperplanes through ``points`` share one normal (up to sign)?"""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(points) < 2:
        raise ValueError("parallelism needs at least two points")
    kwargs.setdefault("verify", False)
    normals = np.array([find_constant_hyperplane(f, p, **kwargs).normal for p in points])
    max_angle = 0.0
    for i, j in itertools.combinations(range(len(normals)), 2):
        max_angle = max(max_angle, _angle(normals[i], normals[j]))
    return ParallelReport(max_angle <= tol, max_angle, normals)


def _link_interpolant(mu, values):
    """Cubic spline of the link, fitted on the logit scale when the table allows it.

    Logistic links are linear in logit, so the logit-scale spline is exact for them up to
    rounding; tables that touch 0 or 1 fall back to the probability scale.
    """
    if np.all((values > 0.0) & (values < 1.0)):
        spline = CubicSpline(mu, logit(values))
        return lambda m: expit(spline(m))
    return CubicSpline(mu, values)


@dataclass
class Decomposition:
    mu: np.ndarray
    link_values: np.ndarray
    residual: float
    normal: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self._interp = _link_interpolant(self.mu, self.link_values)

    def link(self, mu):
        return self._interp(mu)

    def project(self, theta):
        """Coefficient mu of the unique decomposition theta = mu u + (kernel part)."""
        return np.asarray(theta, dtype=float) @ self.normal / float(self.normal @ self.u)

    def __call__(self, theta):
        return self.link(self.project(theta))


def decompose_to_univariate(
    f: Surface,
    u,
    lo: float = -8.0,
    hi: float = 8.0,
    n: int = 401,
    *,
    normal=None,
    n_checks: int = 500,
    half_width: float = DEFAULT_HALF_WIDTH,
    seed: int = 0,
) -> Decomposition:
    """Tabulate the univariate link of ``f`` along the transversal ``R u``.

    ``residual`` is the largest gap between ``f(w)`` and the interpolated link at the
    projection of ``w``, over random ``w`` whose projections fall in [lo, hi].
    The constant-hyperplane normal is estimated at the origin unless given.
    """
    u = as_ability(u, f.dim).reshape(-1).astype(float)
    if normal is None:
        normal = find_constant_hyperplane(f, np.zeros(f.dim), verify=False, seed=seed).normal
    normal = np.asarray(normal, dtype=float) / np.linalg.norm(normal)
    cross = float(normal @ u)
    if abs(cross) <= 1e-8 * np.linalg.norm(u):
        raise DegenerateModelError("u lies in the constant hyperplane; it is not transversal")

    mu = np.linspace(lo, hi, n)
    dec = Decomposition(mu, f(mu[:, None] * u), np.nan, normal, u)

    rng = np.random.default_rng(seed)
    kernel = _kernel_frame(normal)
    mu_w = rng.uniform(lo, hi, size=n_checks)
    coef = rng.uniform(-half_width, half_width, size=(n_checks, kernel.shape[1]))
    w = mu_w[:, None] * u + coef @ kernel.T
    dec.residual = float(np.max(np.abs(f(w) - dec(w))))
    return dec


@dataclass
class CompensatoryReport:
    compensatory: bool
    witnesses: dict


def check_compensatory(
    f: Surface,
    lo: float = -4.0,
    hi: float = 4.0,
    level: float = 0.9,
    cap: float = COMPENSATION_CAP,
    n: int = 2001,
) -> CompensatoryReport:
    """For each axis, can that coordinate alone lift f to ``level``?

    The remaining coordinates sit at the box minimum ``lo``; the free coordinate is
    scanned over [-cap, cap], which contains the box.
    """
    if not 0.0 <= level < 1.0:
        raise ValueError("level must lie in [0, 1)")
    scan = np.unique(np.concatenate([np.linspace(-cap, cap, n), np.linspace(lo, hi, 161)]))
    witnesses = {}
    for d in range(f.dim):
        pts = np.full((scan.size, f.dim), float(lo))
        pts[:, d] = scan
        values = f(pts)
        hits = np.flatnonzero(values >= level)
        witnesses[d] = pts[hits[0]].copy() if hits.size else None
    return CompensatoryReport(all(v is not None for v in witnesses.values()), witnesses)


@dataclass
class FactorizationReport:
    x: np.ndarray
    y: np.ndarray
    ratio_values: np.ndarray
    surface_values: np.ndarray
    reference: float
    max_deviation: float
    factorizable: bool

    def ratio_at(self, x, y):
        i = int(np.argmin(np.abs(self.x - x)))
        j = int(np.argmin(np.abs(self.y - y)))
        return float(self.ratio_values[i, j])


def factorization_ratio_test(
    f: Surface, lo: float = -3.0, hi: float = 3.0, n: int = 61, tol: float = FACTORIZATION_TOL
) -> FactorizationReport:
    """Test f(x, y) = h(x) g(y) via the ratio f(x, y) / (f(x, 0) f(0, y)).

    For a product the ratio equals the constant 1 / (h(0) g(0)).
    """
    if f.dim != 2:
        raise DimensionError("the factorization test is defined for two-dimensional surfaces")
    x = np.linspace(lo, hi, n)
    y = np.linspace(lo, hi, n)
    xx, yy = np.meshgrid(x, y, indexing="ij")
    values = f(np.stack([xx, yy], axis=-1))
    zeros = np.zeros_like(x)
    fx0 = f(np.stack([x, zeros], axis=-1))
    f0y = f(np.stack([zeros, y], axis=-1))
    denom = np.outer(fx0, f0y)
    if np.any(denom < 1e-300):
        raise SurfaceError("f(x, 0) f(0, y) vanishes on the grid; the ratio is undefined")
    ratio = values / denom
    reference = float(np.median(ratio))
    deviation = float(np.max(np.abs(ratio - reference)))
    return FactorizationReport(x, y, ratio, values, reference, deviation, deviation <= tol)


DEFAULT_ROTATION = np.array([[1.0, 1.0], [1.0, -1.0]])


def demo_noninvariance(a1: float = 1.0, G=None, lo=-3.0, hi=3.0, n=61, tol=FACTORIZATION_TOL) -> FactorizationReport:
    """Factorization test of the independent model a=(a1, a1), b=0 seen in coordinates G.

    With the default G the surface is sigma(a1 (x + y)) sigma(a1 (x - y)), which does not
    factor although the native-coordinate model does.
    """
    if a1 <= 0:
        raise ValueError("a1 must be positive")
    G = CoordinateChange(DEFAULT_ROTATION if G is None else G)
    native = Surface.from_model(IndependentItem([a1, a1], [0.0, 0.0]), "independent")
    return factorization_ratio_test(native.in_coordinates(G), lo, hi, n, tol)
