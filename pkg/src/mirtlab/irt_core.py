"""Univariate item response functions and Bernoulli log-probability primitives."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .errors import LikelihoodDomainError


class Response(enum.IntEnum):
    """Dichotomous response code. NOT_ADMINISTERED contributes no likelihood factor."""

    INCORRECT = 0
    CORRECT = 1
    NOT_ADMINISTERED = -1


MISSING = int(Response.NOT_ADMINISTERED)


class ItemKind(str, enum.Enum):
    RASCH = "rasch"
    TWO_PL = "2pl"
    THREE_PL = "3pl"


@dataclass(frozen=True)
class UnivariateItem:
    """Logistic item with discrimination ``a``, difficulty ``b`` and lower asymptote ``c``.

    No 1.7 scaling constant is applied.
    """

    kind: ItemKind
    a: float = 1.0
    b: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ItemKind(self.kind))
        for name in ("a", "b", "c"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"item parameter {name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.a <= 0:
            raise ValueError(f"discrimination must be positive, got a={self.a}")
        if not 0.0 <= self.c < 1.0:
            raise ValueError(f"lower asymptote must lie in [0, 1), got c={self.c}")
        if self.kind is ItemKind.RASCH and (self.a != 1.0 or self.c != 0.0):
            raise ValueError("Rasch items require a=1 and c=0")
        if self.kind is ItemKind.TWO_PL and self.c != 0.0:
            raise ValueError("2PL items require c=0")

    @classmethod
    def rasch(cls, b: float) -> "UnivariateItem":
        return cls(ItemKind.RASCH, 1.0, b, 0.0)

    @classmethod
    def two_pl(cls, a: float, b: float) -> "UnivariateItem":
        return cls(ItemKind.TWO_PL, a, b, 0.0)

    @classmethod
    def three_pl(cls, a: float, b: float, c: float) -> "UnivariateItem":
        return cls(ItemKind.THREE_PL, a, b, c)

    dim = 1

    def prob(self, theta):
        """Vectorized IRF over ability arrays of shape ``(..., 1)``."""
        return irf(_scalar_theta(theta), self)

    def log_prob_pair(self, theta):
        return log_irf_pair(_scalar_theta(theta), self)


def _scalar_theta(theta):
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 0:
        return theta
    if theta.shape[-1] != 1:
        raise ValueError(f"univariate item expects ability of dimension 1, got {theta.shape[-1]}")
    return theta[..., 0]


def irf(theta, item: UnivariateItem):
    """c + (1 - c) / (1 + exp(-a (theta - b))), vectorized over ``theta``."""
    z = item.a * (np.asarray(theta, dtype=float) - item.b)
    p = item.c + (1.0 - item.c) * expit(z)
    return p if np.ndim(p) else float(p)


def irf_derivative(theta, item: UnivariateItem):
    """dP/dtheta = a (P - c)(1 - P) / (1 - c)."""
    s = expit(item.a * (np.asarray(theta, dtype=float) - item.b))
    # (P - c)(1 - P) / (1 - c) == (1 - c) s (1 - s); this form avoids the cancellation in P - c
    d = item.a * (1.0 - item.c) * s * (1.0 - s)
    return d if np.ndim(d) else float(d)


def log_irf_pair(theta, item: UnivariateItem):
    """Return ``(log P, log(1 - P))`` computed from the logit without forming P."""
    z = item.a * (np.asarray(theta, dtype=float) - item.b)
    log_s = log_expit(z)
    log_1ms = log_expit(-z)
    if item.c == 0.0:
        return log_s, log_1ms
    log_c = math.log(item.c)
    log_1mc = math.log1p(-item.c)
    return np.logaddexp(log_c, log_1mc + log_s), log_1mc + log_1ms


def log_bernoulli(p: float, x) -> float:
    """Log-probability of response ``x`` under success probability ``p``.

    Raises LikelihoodDomainError if the result would be -inf.
    """
    x = Response(int(x))
    if x is Response.NOT_ADMINISTERED:
        return 0.0
    if not 0.0 <= p <= 1.0:
        raise LikelihoodDomainError(f"probability outside [0, 1]: {p}")
    if x is Response.CORRECT:
        if p == 0.0:
            raise LikelihoodDomainError("log-probability of a correct response with p=0 is -inf")
        return math.log(p)
    if p == 1.0:
        raise LikelihoodDomainError("log-probability of an incorrect response with p=1 is -inf")
    return math.log1p(-p)
