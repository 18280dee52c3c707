"""Joint, student, item and marginal likelihoods.

Responses are stored as small integer arrays: 1 correct, 0 incorrect and -1 for a cell
that was not administered. Missing cells contribute no factor.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import logsumexp

from .errors import DegenerateModelError, DimensionError, LikelihoodDomainError
from .irt_core import MISSING
from .mirt_models import as_ability

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class ResponseMatrix:
    data: np.ndarray
    student_ids: tuple = None
    item_ids: tuple = None

    def __post_init__(self):
        data = _coerce_cells(self.data)
        if data.ndim != 2:
            raise DimensionError(f"response matrix must be two-dimensional, got shape {data.shape}")
        bad = ~np.isin(data, (0, 1, MISSING))
        if bad.any():
            n, i = np.argwhere(bad)[0]
            raise ValueError(f"invalid response {data[n, i]!r} at row {n}, column {i}")
        data = data.astype(np.int8)
        n_students, n_items = data.shape
        students = tuple(self.student_ids) if self.student_ids is not None else tuple(f"s{k + 1}" for k in range(n_students))
        items = tuple(self.item_ids) if self.item_ids is not None else tuple(f"i{k + 1}" for k in range(n_items))
        if len(students) != n_students or len(items) != n_items:
            raise DimensionError("id labels do not match the matrix shape")
        if len(set(students)) != n_students:
            raise ValueError("duplicate student ids")
        if len(set(items)) != n_items:
            raise ValueError("duplicate item ids")
        empty = np.flatnonzero((data != MISSING).sum(axis=1) == 0)
        if n_items and empty.size:
            raise ValueError(f"student {students[empty[0]]!r} has no administered responses")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "student_ids", students)
        object.__setattr__(self, "item_ids", items)

    @property
    def shape(self):
        return self.data.shape

    @property
    def administered(self):
        return self.data != MISSING

    def subset(self, rows=None, columns=None) -> "ResponseMatrix":
        rows = np.arange(self.shape[0]) if rows is None else np.asarray(rows)
        columns = np.arange(self.shape[1]) if columns is None else np.asarray(columns)
        return ResponseMatrix(
            self.data[np.ix_(rows, columns)],
            [self.student_ids[r] for r in rows],
            [self.item_ids[c] for c in columns],
        )


def _coerce_cells(data):
    """Array of response codes; None and NaN become the missing code."""
    arr = np.asarray(data)
    if arr.dtype == object:
        arr = np.array([[MISSING if v is None else v for v in row] for row in arr], dtype=float)
    if arr.dtype.kind == "f":
        arr = np.where(np.isnan(arr), MISSING, arr)
    return arr


def as_response_array(X):
    if isinstance(X, ResponseMatrix):
        return X.data
    return _coerce_cells(X).astype(np.int8)


@dataclass(frozen=True, eq=False)
class PopulationModel:
    """Multivariate normal ability distribution with mean ``nu`` and covariance ``Sigma``."""

    nu: np.ndarray
    Sigma: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nu = np.array(self.nu, dtype=float).reshape(-1)
        Sigma = np.array(self.Sigma, dtype=float).reshape(nu.size, nu.size)
        if not np.allclose(Sigma, Sigma.T, rtol=1e-12, atol=1e-14):
            raise DegenerateModelError("population covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(Sigma)
        except np.linalg.LinAlgError:
            raise DegenerateModelError("population covariance is not positive definite") from None
        for arr in (nu, Sigma, chol):
            arr.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "_chol", chol)

    @classmethod
    def standard(cls, dim: int) -> "PopulationModel":
        return cls(np.zeros(dim), np.eye(dim))

    @property
    def dim(self) -> int:
        return self.nu.size

    @property
    def cholesky(self):
        return self._chol

    def key(self):
        return (self.nu.tobytes(), self.Sigma.tobytes())

    def precision(self):
        return cho_solve((self._chol, True), np.eye(self.dim))


def mvn_log_density(theta, pop: PopulationModel):
    """Log-density of N(nu, Sigma) at ``theta`` (shape ``(..., D)``)."""
    theta = as_ability(theta, pop.dim)
    resid = (theta - pop.nu).reshape(-1, pop.dim)
    z = solve_triangular(pop.cholesky, resid.T, lower=True)
    log_det = 2.0 * np.sum(np.log(np.diag(pop.cholesky)))
    out = -0.5 * (pop.dim * LOG_2PI + log_det + np.sum(z * z, axis=0))
    out = out.reshape(theta.shape[:-1])
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def log_weights(self):
        return np.log(self.weights)


def gauss_hermite_rule(dim: int, n: int, pop: PopulationModel | None = None) -> QuadratureRule:
    """Tensor-product Gauss-Hermite rule for expectations under N(nu, Sigma).

    Nodes are nu + L z with L the lower Cholesky factor and z on the probabilists'
    Hermite grid; weights sum to one.
    """
    if n < 1:
        raise ValueError("need at least one node per axis")
    pop = pop or PopulationModel.standard(dim)
    if pop.dim != dim:
        raise DimensionError(f"population has dimension {pop.dim}, rule requested for {dim}")
    z1, w1 = hermegauss(n)
    w1 = w1 / w1.sum()
    z = np.array(list(itertools.product(z1, repeat=dim)))
    w = np.prod(np.array(list(itertools.product(w1, repeat=dim))), axis=1)
    return QuadratureRule(pop.nu + z @ pop.cholesky.T, w)


def default_nodes(dim: int) -> int:
    return 21 if dim <= 2 else 11


def item_log_prob_table(items, thetas):
    """(log P, log(1 - P)) arrays of shape ``thetas.shape[:-1] + (I,)``."""
    pairs = [item.log_prob_pair(thetas) for item in items]
    shape = thetas.shape[:-1]
    log_p = np.stack([np.broadcast_to(p, shape) for p, _ in pairs], axis=-1)
    log_q = np.stack([np.broadcast_to(q, shape) for _, q in pairs], axis=-1)
    return log_p, log_q


def _items_dim(items):
    dims = {item.dim for item in items}
    if len(dims) > 1:
        raise DimensionError(f"items have inconsistent dimensions {sorted(dims)}")
    return dims.pop() if dims else None


def _cell_terms(x, log_p, log_q):
    correct = x == 1
    wrong = x == 0
    return np.where(correct, log_p, 0.0) + np.where(wrong, log_q, 0.0)


def student_log_likelihood(row, theta, items) -> float:
    row = np.asarray(row).reshape(-1)
    if row.size != len(items):
        raise DimensionError(f"{row.size} responses for {len(items)} items")
    dim = _items_dim(items) or np.size(theta)
    theta = as_ability(theta, dim).reshape(-1)
    admin = np.flatnonzero(row != MISSING)
    if admin.size == 0:
        return 0.0
    log_p, log_q = item_log_prob_table([items[i] for i in admin], theta)
    terms = _cell_terms(row[admin], log_p, log_q)
    if np.isneginf(terms).any():
        i = admin[int(np.flatnonzero(np.isneginf(terms))[0])]
        raise LikelihoodDomainError(f"log-likelihood is -inf at item {i}", item=int(i))
    return float(np.sum(terms))


def student_likelihood(row, theta, items) -> float:
    return float(np.exp(student_log_likelihood(row, theta, items)))


def item_log_likelihood(column, thetas, item) -> float:
    column = np.asarray(column).reshape(-1)
    thetas = as_ability(np.asarray(thetas, dtype=float).reshape(len(column), -1), item.dim)
    admin = column != MISSING
    log_p, log_q = item.log_prob_pair(thetas[admin])
    terms = _cell_terms(column[admin], log_p, log_q)
    if np.isneginf(terms).any():
        n = np.flatnonzero(admin)[int(np.flatnonzero(np.isneginf(terms))[0])]
        raise LikelihoodDomainError(f"log-likelihood is -inf at student {n}", student=int(n))
    return float(np.sum(terms))


def item_likelihood(column, thetas, item) -> float:
    return float(np.exp(item_log_likelihood(column, thetas, item)))


def joint_log_likelihood_terms(X, thetas, items):
    """Matrix of per-cell log-probabilities (0 for missing cells)."""
    data = as_response_array(X)
    n_students, n_items = data.shape
    if n_items != len(items):
        raise DimensionError(f"matrix has {n_items} items, {len(items)} item models given")
    if n_items == 0:
        return np.zeros((n_students, 0))
    dim = _items_dim(items)
    thetas = as_ability(np.asarray(thetas, dtype=float).reshape(n_students, -1), dim)
    log_p, log_q = item_log_prob_table(items, thetas)
    return _cell_terms(data, log_p, log_q)


def joint_log_likelihood(X, thetas, items) -> float:
    """Sum over administered cells of x log P + (1 - x) log(1 - P)."""
    terms = joint_log_likelihood_terms(X, thetas, items)
    bad = np.argwhere(np.isneginf(terms))
    if bad.size:
        n, i = (int(v) for v in bad[0])
        student = X.student_ids[n] if isinstance(X, ResponseMatrix) else n
        item = X.item_ids[i] if isinstance(X, ResponseMatrix) else i
        raise LikelihoodDomainError(f"log-likelihood is -inf at student {student}, item {item}", student, item)
    return float(np.sum(terms))


def node_log_likelihoods(data, log_p, log_q):
    """Student-by-node log-likelihood matrix from per-node item log-probabilities (K x I)."""
    correct = (data == 1).astype(float)
    wrong = (data == 0).astype(float)
    # 0 * -inf would give nan; finite tables are the normal case
    if np.isneginf(log_p).any() or np.isneginf(log_q).any():
        out = np.empty((data.shape[0], log_p.shape[0]))
        for k in range(log_p.shape[0]):
            out[:, k] = np.sum(_cell_terms(data, log_p[k], log_q[k]), axis=1)
        return out
    return correct @ log_p.T + wrong @ log_q.T


def marginal_log_likelihood(X, items, pops=None, n_nodes: int | None = None, *, per_student=False):
    """Sum over students of log E[student likelihood] under each student's population.

    ``pops`` is a single PopulationModel (shared) or one per student. The expectation
    uses a tensor Gauss-Hermite rule per distinct population, combined in log space.
    """
    data = as_response_array(X)
    n_students, n_items = data.shape
    if n_items != len(items):
        raise DimensionError(f"matrix has {n_items} items, {len(items)} item models given")
    dim = _items_dim(items)
    if pops is None:
        pops = PopulationModel.standard(dim or 1)
    if isinstance(pops, PopulationModel):
        pops = [pops] * n_students
    if len(pops) != n_students:
        raise DimensionError(f"{len(pops)} populations for {n_students} students")
    if n_items == 0:
        out = np.zeros(n_students)
        return out if per_student else 0.0

    groups: dict = {}
    for n, pop in enumerate(pops):
        groups.setdefault(pop.key(), (pop, []))[1].append(n)

    out = np.empty(n_students)
    for pop, members in groups.values():
        if pop.dim != dim:
            raise DimensionError(f"population dimension {pop.dim} does not match items ({dim})")
        rule = gauss_hermite_rule(dim, n_nodes or default_nodes(dim), pop)
        log_p, log_q = item_log_prob_table(items, rule.nodes)
        ll = node_log_likelihoods(data[members], log_p, log_q)
        out[members] = logsumexp(ll + rule.log_weights, axis=1)
    bad = np.flatnonzero(np.isneginf(out))
    if bad.size:
        raise LikelihoodDomainError(
            f"marginal integrand is identically zero for student {int(bad[0])}", student=int(bad[0])
        )
    return out if per_student else float(np.sum(out))
