"""Multidimensional response models and coordinate changes.

Three families are provided:

* :class:`ScalarProductItem` -- logit ``<a|theta> + b`` (``b`` is an intercept, so a
  larger ``b`` makes the item *easier*; this is the sign convention of the logit as
  written, not a difficulty).
* :class:`IndependentItem` -- product of per-dimension logistic factors.
* :class:`GmirtItem` -- a univariate link composed with the projection of the ability
  onto a unit direction.

Discriminations and abilities share the same array representation. They differ only in
how they transform: abilities map by ``theta = G @ theta_prime`` and discriminations by
``a_prime = G.T @ a``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .errors import DegenerateModelError, DimensionError
from .irt_core import Response, UnivariateItem, irf, irf_derivative, log_irf_pair


def _vector(values, name):
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise DimensionError(f"{name} must have at least one component")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


def as_ability(theta, dim: int):
    """Coerce ``theta`` to a float array whose last axis has length ``dim``."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 0:
        theta = theta.reshape(1)
    if theta.shape[-1] != dim:
        raise DimensionError(f"ability has dimension {theta.shape[-1]}, model expects {dim}")
    return theta


def log1mexp(x):
    """log(1 - exp(x)) for x <= 0 without cancellation."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x > -0.6931471805599453, np.log(-np.expm1(x)), np.log1p(-np.exp(x)))


@dataclass(frozen=True, eq=False)
class ScalarProductItem:
    a: np.ndarray
    b: float = 0.0

    def __post_init__(self):
        a = _vector(self.a, "discrimination")
        if not np.any(a):
            raise DegenerateModelError("zero discrimination vector gives a constant surface")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    def __eq__(self, other):
        return (
            isinstance(other, ScalarProductItem)
            and np.array_equal(self.a, other.a)
            and self.b == other.b
        )

    def __hash__(self):
        return hash((self.a.tobytes(), self.b))

    @property
    def dim(self) -> int:
        return self.a.size

    def logit(self, theta):
        return as_ability(theta, self.dim) @ self.a + self.b

    def prob(self, theta):
        return expit(self.logit(theta))

    def log_prob_pair(self, theta):
        z = self.logit(theta)
        return log_expit(z), log_expit(-z)

    def gradient(self, theta):
        f = self.prob(theta)
        return (f * (1.0 - f))[..., None] * self.a

    def to_gmirt(self) -> "GmirtItem":
        """Equivalent GMIRT item: unit direction a/|a| and 2PL link with slope |a|."""
        norm = float(np.linalg.norm(self.a))
        return GmirtItem(self.a / norm, UnivariateItem.two_pl(norm, -self.b / norm))


@dataclass(frozen=True, eq=False)
class IndependentItem:
    """Product of per-dimension logistic factors sigma(a_d (theta_d - b_d))."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = _vector(self.a, "discrimination")
        b = _vector(self.b, "difficulty")
        if a.shape != b.shape:
            raise DimensionError(f"a has {a.size} components but b has {b.size}")
        if np.any(a <= 0):
            raise ValueError("independent-model discriminations must be positive")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def __eq__(self, other):
        return (
            isinstance(other, IndependentItem)
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.b, other.b)
        )

    def __hash__(self):
        return hash((self.a.tobytes(), self.b.tobytes()))

    @property
    def dim(self) -> int:
        return self.a.size

    def _logits(self, theta):
        return self.a * (as_ability(theta, self.dim) - self.b)

    def prob(self, theta):
        return np.prod(expit(self._logits(theta)), axis=-1)

    def log_prob_pair(self, theta):
        log_p = np.sum(log_expit(self._logits(theta)), axis=-1)
        return log_p, log1mexp(log_p)

    def gradient(self, theta):
        z = self._logits(theta)
        f = np.prod(expit(z), axis=-1)
        # d/dtheta_d of prod_k s_k is prod * a_d (1 - s_d)
        return f[..., None] * self.a * expit(-z)


@dataclass(frozen=True, eq=False)
class GmirtItem:
    """Univariate link applied to the coordinate of theta along a unit ``direction``.

    The direction is normalized on construction; any scale belongs in ``link.a``.
    """

    direction: np.ndarray
    link: UnivariateItem

    def __post_init__(self):
        d = np.array(_vector(self.direction, "direction"))
        norm = np.linalg.norm(d)
        if norm == 0.0:
            raise DegenerateModelError("GMIRT direction must be nonzero")
        # leave already-unit vectors alone so normalization is idempotent
        if abs(norm - 1.0) > 4 * np.finfo(float).eps:
            d /= norm
        d.setflags(write=False)
        object.__setattr__(self, "direction", d)
        if not isinstance(self.link, UnivariateItem):
            raise TypeError("link must be a UnivariateItem")

    def __eq__(self, other):
        return (
            isinstance(other, GmirtItem)
            and np.array_equal(self.direction, other.direction)
            and self.link == other.link
        )

    def __hash__(self):
        return hash((self.direction.tobytes(), self.link))

    @property
    def dim(self) -> int:
        return self.direction.size

    def project(self, theta):
        return as_ability(theta, self.dim) @ self.direction

    def prob(self, theta):
        return irf(self.project(theta), self.link)

    def log_prob_pair(self, theta):
        return log_irf_pair(self.project(theta), self.link)

    def gradient(self, theta):
        return np.asarray(irf_derivative(self.project(theta), self.link))[..., None] * self.direction


@dataclass(frozen=True, eq=False)
class CoordinateChange:
    """Invertible matrix G mapping new coordinates to old ones: theta = G @ theta_prime."""

    G: np.ndarray

    def __post_init__(self):
        G = np.array(self.G, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise DimensionError(f"coordinate change must be square, got shape {G.shape}")
        if not np.all(np.isfinite(G)):
            raise ValueError("coordinate change must be finite")
        scale = float(np.prod(np.linalg.norm(G, axis=1)))
        det = float(np.linalg.det(G))
        if scale == 0.0 or abs(det) <= 1e-12 * scale or not np.isfinite(np.linalg.cond(G)):
            raise DegenerateModelError("coordinate change matrix is singular")
        G.setflags(write=False)
        object.__setattr__(self, "G", G)

    @classmethod
    def identity(cls, dim: int) -> "CoordinateChange":
        return cls(np.eye(dim))

    @property
    def dim(self) -> int:
        return self.G.shape[0]

    def inverse(self) -> "CoordinateChange":
        return CoordinateChange(np.linalg.inv(self.G))


def _check_dim(theta, item):
    return as_ability(theta, item.dim)


def sp_eval(theta, item: ScalarProductItem):
    """1 / (1 + exp(-<a|theta> - b))."""
    p = item.prob(_check_dim(theta, item))
    return p if np.ndim(p) else float(p)


def sp_response_prob(x, theta, item: ScalarProductItem):
    """Probability of observing response ``x`` (0 or 1)."""
    x = Response(int(x))
    if x is Response.NOT_ADMINISTERED:
        raise ValueError("not-administered responses have no response probability")
    sign = 2 * int(x) - 1
    p = expit(sign * item.logit(_check_dim(theta, item)))
    return p if np.ndim(p) else float(p)


def indep_eval(theta, item: IndependentItem):
    p = item.prob(_check_dim(theta, item))
    return p if np.ndim(p) else float(p)


def gmirt_eval(theta, item: GmirtItem):
    p = item.prob(_check_dim(theta, item))
    return p if np.ndim(p) else float(p)


def change_coordinates(theta_prime, G: CoordinateChange):
    """Old coordinates of an ability given in new ones: G @ theta_prime."""
    if not isinstance(G, CoordinateChange):
        G = CoordinateChange(G)
    theta_prime = as_ability(theta_prime, G.dim)
    return theta_prime @ G.G.T


def sp_pullback(item: ScalarProductItem, G: CoordinateChange) -> ScalarProductItem:
    """Scalar Product item expressed in the primed coordinates (a' = G^T a)."""
    if not isinstance(G, CoordinateChange):
        G = CoordinateChange(G)
    if G.dim != item.dim:
        raise DimensionError(f"coordinate change of dimension {G.dim} for item of dimension {item.dim}")
    return ScalarProductItem(G.G.T @ item.a, item.b)


def model_gradient(model, theta):
    """Analytic gradient of the response surface of ``model`` at ``theta``."""
    return model.gradient(_check_dim(theta, model))
