"""Ability and item parameter estimation.

Item fitting works on a logit-linear parameterization for every supported model kind:

* ``rasch``: logit = theta + d
* ``2pl``:   logit = a theta + d
* ``3pl``:   P = c + (1 - c) sigma(a theta + d), c = sigma(gamma)
* ``sp``:    logit = <a|theta> + d

with ``b = -d`` (Rasch), ``b = -d / a`` (2PL/3PL) and ``b = d`` (Scalar Product intercept).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit, logit, logsumexp

from .errors import ConvergenceError, DimensionError, ExistenceError
from .irt_core import MISSING, UnivariateItem
from .likelihood import (
    PopulationModel,
    ResponseMatrix,
    as_response_array,
    default_nodes,
    gauss_hermite_rule,
    joint_log_likelihood,
    node_log_likelihoods,
)
from .mirt_models import GmirtItem, ScalarProductItem, as_ability

log = logging.getLogger(__name__)

KINDS = ("rasch", "2pl", "3pl", "sp")
RIDGE_ALARM = 100.0


@dataclass
class FitConfig:
    kind: str = "2pl"
    dim: int = 1
    max_iter: int = 500
    inner_tol: float = 1e-8
    tol: float = 1e-6
    n_nodes: int | None = None
    identify: bool = True
    seed: int = 0
    exclude_flagged: bool = False
    estimate_population: bool = False
    c_prior_mean: float = 0.2
    c_prior_sd: float = 1.0
    divergence_bound: float = 50.0

    def __post_init__(self):
        self.kind = str(self.kind).lower()
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.dim < 1:
            raise ValueError("dimension must be at least 1")
        if self.kind != "sp" and self.dim != 1:
            raise ValueError(f"{self.kind} is a univariate model; use kind='sp' for dim > 1")
        for name in ("inner_tol", "tol", "c_prior_sd", "divergence_bound"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.estimate_population and self.kind != "rasch":
            raise ValueError("population scale estimation is only identified for the Rasch model")

    @property
    def n_params(self):
        return {"rasch": 1, "2pl": 2, "3pl": 3, "sp": self.dim + 1}[self.kind]


@dataclass
class FitResult:
    kind: str
    dim: int
    items: list
    item_ids: tuple
    student_ids: tuple
    loglik: float
    trace: list
    converged: bool
    iterations: int
    population: PopulationModel | None = None
    abilities: np.ndarray | None = None
    warnings: list = field(default_factory=list)


@dataclass
class AbilityEstimate:
    theta_hat: np.ndarray
    covariance: np.ndarray
    finite: bool
    hessian_spectrum: np.ndarray
    gradient_norm: float
    iterations: int
    message: str = ""

    @property
    def standard_errors(self):
        return np.sqrt(np.diag(self.covariance))


@dataclass
class ExistenceReport:
    """Rows and columns whose administered responses are all equal (or fewer than two)."""

    rows: np.ndarray
    columns: np.ndarray

    @property
    def ok(self) -> bool:
        return not (self.rows.any() or self.columns.any())

    def flagged_rows(self):
        return np.flatnonzero(self.rows)

    def flagged_columns(self):
        return np.flatnonzero(self.columns)


def check_mle_existence(X) -> ExistenceReport:
    """Flag rows and columns with no two different administered responses."""
    data = as_response_array(X)

    def flags(axis):
        admin = data != MISSING
        n_admin = admin.sum(axis=axis)
        n_correct = (data == 1).sum(axis=axis)
        return (n_admin < 2) | (n_correct == 0) | (n_correct == n_admin)

    return ExistenceReport(flags(1), flags(0))


# -- logit-linear view of items for ability estimation -----------------------------------


def _linear_form(item):
    """(alpha, beta, c) with P = c + (1 - c) sigma(<alpha|theta> + beta)."""
    if isinstance(item, ScalarProductItem):
        return item.a, item.b, 0.0
    if isinstance(item, UnivariateItem):
        return np.array([item.a]), -item.a * item.b, item.c
    if isinstance(item, GmirtItem):
        link = item.link
        return link.a * item.direction, -link.a * link.b, link.c
    raise TypeError(f"ability estimation is not supported for {type(item).__name__}")


def _stack_forms(items):
    forms = [_linear_form(item) for item in items]
    dims = {f[0].size for f in forms}
    if len(dims) != 1:
        raise DimensionError(f"items have inconsistent dimensions {sorted(dims)}")
    alpha = np.array([f[0] for f in forms], dtype=float)
    beta = np.array([f[1] for f in forms], dtype=float)
    c = np.array([f[2] for f in forms], dtype=float)
    return alpha, beta, c


def _response_terms(x, z, c):
    """Value, first and second z-derivatives of each cell's log-probability.

    ``x`` uses the missing code -1; missing cells contribute zeros.
    """
    correct = x == 1
    wrong = x == 0
    s = expit(z)
    log_c = np.log(np.where(c > 0, c, 1.0))
    log_1mc = np.log1p(-c)
    log_p = np.where(c > 0, np.logaddexp(log_c, log_1mc + log_expit(z)), log_expit(z))
    log_q = log_1mc + log_expit(-z)
    # d log P / dz = (1 - c) s (1 - s) / P = (1 - s) * r with r = (1 - c) s / P
    r = np.exp(log_1mc + log_expit(z) - log_p)
    d1_p = (1.0 - s) * r
    d2_p = d1_p * (1.0 - 2.0 * s) - d1_p**2
    value = np.where(correct, log_p, 0.0) + np.where(wrong, log_q, 0.0)
    d1 = np.where(correct, d1_p, 0.0) + np.where(wrong, -s, 0.0)
    d2 = np.where(correct, d2_p, 0.0) + np.where(wrong, -s * (1.0 - s), 0.0)
    return value, d1, d2


def _ability_objective(data, alpha, beta, c, thetas, prior):
    """Per-student log-likelihood (+ log prior up to a constant), gradient and Hessian."""
    z = thetas @ alpha.T + beta
    value, d1, d2 = _response_terms(data, z, c)
    ll = value.sum(axis=1)
    grad = d1 @ alpha
    hess = np.einsum("ni,id,ie->nde", d2, alpha, alpha)
    if prior is not None:
        prec = prior.precision()
        resid = thetas - prior.nu
        ll = ll - 0.5 * np.einsum("nd,de,ne->n", resid, prec, resid)
        grad = grad - resid @ prec
        hess = hess - prec
    return ll, grad, hess


def _newton_direction(grad, hess, floor=1e-10):
    """Solve (-H) step = g with eigenvalues of -H clamped to stay positive."""
    vals, vecs = np.linalg.eigh(-hess)
    scale = np.maximum(np.abs(vals).max(axis=-1, keepdims=True), 1.0)
    vals = np.maximum(vals, floor * scale)
    coef = np.einsum("nde,nd->ne", vecs, grad) / vals
    return np.einsum("nde,ne->nd", vecs, coef)


def _estimate_abilities(data, alpha, beta, c, thetas0, prior=None, tol=1e-8, max_iter=200, bound=50.0):
    """Damped Newton ascent for every student at once.

    Returns (thetas, grad_norms, iterations, diverged mask).
    """
    thetas = np.array(thetas0, dtype=float)
    n = thetas.shape[0]
    active = np.ones(n, dtype=bool)
    diverged = np.zeros(n, dtype=bool)
    iterations = np.zeros(n, dtype=int)
    ll, grad, hess = _ability_objective(data, alpha, beta, c, thetas, prior)
    for _ in range(max_iter):
        gnorm = np.linalg.norm(grad, axis=1)
        active &= (gnorm >= tol) & ~diverged
        if not active.any():
            break
        idx = np.flatnonzero(active)
        step = _newton_direction(grad[idx], hess[idx])
        slope = np.einsum("nd,nd->n", grad[idx], step)
        # predicted gains below rounding level of the objective mean convergence
        stalled = slope < 1e-14 * (1.0 + np.abs(ll[idx]))
        active[idx[stalled]] = False
        idx, step, slope = idx[~stalled], step[~stalled], slope[~stalled]
        pending = np.arange(idx.size)
        t = 1.0
        while pending.size and t > 1e-12:
            sel = idx[pending]
            trial = thetas[sel] + t * step[pending]
            ll_t, g_t, h_t = _ability_objective(data[sel], alpha, beta, c, trial, prior)
            ok = ll_t >= ll[sel] + 1e-4 * t * slope[pending]
            good = sel[ok]
            thetas[good], ll[good], grad[good], hess[good] = trial[ok], ll_t[ok], g_t[ok], h_t[ok]
            pending = pending[~ok]
            t /= 2.0
        iterations[idx] += 1
        # no acceptable step: the iterate is optimal to machine precision
        active[idx[pending]] = False
        diverged |= np.abs(thetas).max(axis=1) > bound
    return thetas, np.linalg.norm(grad, axis=1), iterations, diverged


def _row_array(row, n_items):
    row = np.asarray(as_response_array(np.atleast_2d(row))).reshape(-1)
    if row.size != n_items:
        raise DimensionError(f"{row.size} responses for {n_items} items")
    return row


def estimate_ability(row, items, prior: PopulationModel | None = None, *, tol=1e-8, max_iter=200, start=None, bound=50.0):
    """MLE (or MAP with ``prior``) of one student's ability with curvature covariance."""
    alpha, beta, c = _stack_forms(items)
    dim = alpha.shape[1]
    row = _row_array(row, len(items))
    if prior is not None and prior.dim != dim:
        raise DimensionError(f"prior has dimension {prior.dim}, items have {dim}")
    theta0 = np.zeros((1, dim)) if start is None else as_ability(start, dim).reshape(1, dim)
    if prior is not None and start is None:
        theta0 = prior.nu.reshape(1, dim).copy()
    data = row.reshape(1, -1)
    thetas, gnorm, its, diverged = _estimate_abilities(data, alpha, beta, c, theta0, prior, tol, max_iter, bound)
    theta = thetas[0]
    _, _, hess = _ability_objective(data, alpha, beta, c, thetas, prior)
    spectrum = np.linalg.eigvalsh(hess[0])
    flagged = check_mle_existence(data).rows[0]
    message = ""
    finite = True
    if diverged[0]:
        finite = False
        message = "estimate diverges: " + ("responses are all equal" if flagged else "likelihood increases without bound")
    elif prior is None and flagged:
        finite = False
        message = "responses are all equal; the likelihood maximum lies at infinity"
    elif spectrum.max() >= -1e-10 * max(1.0, abs(spectrum).max()):
        finite = False
        message = "likelihood Hessian is singular or indefinite at the estimate (ridge)"
    elif gnorm[0] >= max(tol, 1e-6):
        raise ConvergenceError(f"ability estimation did not converge (gradient norm {gnorm[0]:.3g})")
    if finite:
        cov = np.linalg.inv(-hess[0])
        cov = 0.5 * (cov + cov.T)
    else:
        cov = np.full((dim, dim), np.inf)
    return AbilityEstimate(theta, cov, finite, spectrum, float(gnorm[0]), int(its[0]), message)


def student_hessian(row, items, theta, prior: PopulationModel | None = None):
    """Analytic Hessian of the log student likelihood (+ log prior) at ``theta``."""
    alpha, beta, c = _stack_forms(items)
    row = _row_array(row, len(items))
    theta = as_ability(theta, alpha.shape[1]).reshape(1, -1)
    return _ability_objective(row.reshape(1, -1), alpha, beta, c, theta, prior)[2][0]


def student_gradient(row, items, theta, prior: PopulationModel | None = None):
    alpha, beta, c = _stack_forms(items)
    row = _row_array(row, len(items))
    theta = as_ability(theta, alpha.shape[1]).reshape(1, -1)
    return _ability_objective(row.reshape(1, -1), alpha, beta, c, theta, prior)[1][0]


@dataclass
class RidgeReport:
    hessian: np.ndarray
    eigenvalues: np.ndarray
    anisotropy: float
    alarm: bool


def ridge_diagnostics(row, items, theta_hat, prior: PopulationModel | None = None) -> RidgeReport:
    """Spectrum of the student log-likelihood Hessian and its max/min magnitude ratio.

    A large ratio means the likelihood is nearly flat along one direction, so the
    student's abilities are only identified through one combination.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    if not np.all(np.isfinite(theta_hat)):
        raise ValueError("ridge diagnostics need a finite ability estimate")
    hess = student_hessian(row, items, theta_hat, prior)
    eig = np.linalg.eigvalsh(hess)
    mags = np.abs(eig)
    ratio = float(mags.max() / mags.min()) if mags.min() > 0 else math.inf
    return RidgeReport(hess, eig, ratio, ratio > RIDGE_ALARM)


# -- item parameter fitting ----------------------------------------------------------------


def _item_eval(kind, params, thetas):
    """log P, log(1 - P), P and g with dP/dparams = P (1 - P) g, over rows of ``thetas``."""
    k = thetas.shape[0]
    ones = np.ones(k)
    if kind == "rasch":
        z = thetas[:, 0] + params[0]
        design = ones[:, None]
    elif kind in ("2pl", "3pl"):
        z = params[0] * thetas[:, 0] + params[1]
        design = np.column_stack([thetas[:, 0], ones])
    else:
        z = thetas @ params[:-1] + params[-1]
        design = np.column_stack([thetas, ones])
    if kind != "3pl":
        return log_expit(z), log_expit(-z), expit(z), design
    gamma = params[2]
    log_c, log_1mc = log_expit(gamma), log_expit(-gamma)
    log_s = log_expit(z)
    log_p = np.logaddexp(log_c, log_1mc + log_s)
    log_q = log_1mc + log_expit(-z)
    p = np.exp(log_p)
    # dP/dz = P (1 - P) s / P and dP/dgamma = P (1 - P) c / P
    gz = np.exp(log_s - log_p)
    gc = np.exp(log_c - log_p)
    return log_p, log_q, p, np.column_stack([design * gz[:, None], gc])


def _item_objective(kind, params, thetas, r, n, penalty):
    log_p, log_q, p, g = _item_eval(kind, params, thetas)
    value = float(np.sum(r * log_p + (n - r) * log_q))
    grad = g.T @ (r - n * p)
    info = (g * (n * p * (1.0 - p))[:, None]).T @ g
    if penalty is not None:
        mean, sd = penalty
        value -= 0.5 * ((params[2] - mean) / sd) ** 2
        grad[2] -= (params[2] - mean) / sd**2
        info[2, 2] += 1.0 / sd**2
    return value, grad, info


def _maximize_item(kind, params, thetas, r, n, free, penalty, tol, max_iter=100):
    """Fisher scoring with backtracking on one item's (expected) log-likelihood."""
    params = np.array(params, dtype=float)
    value, grad, info = _item_objective(kind, params, thetas, r, n, penalty)
    for _ in range(max_iter):
        g = grad[free]
        if np.linalg.norm(g) < tol:
            break
        h = info[np.ix_(free, free)]
        try:
            step_free = np.linalg.solve(h + 1e-12 * np.eye(h.shape[0]) * max(1.0, np.trace(h)), g)
        except np.linalg.LinAlgError:
            step_free = g
        predicted = float(g @ step_free)
        if predicted < 1e-13 * (1.0 + abs(value)):
            break
        step = np.zeros_like(params)
        step[free] = step_free
        t = 1.0
        for _ in range(50):
            trial = params + t * step
            v_t, g_t, i_t = _item_objective(kind, trial, thetas, r, n, penalty)
            if v_t >= value + 1e-4 * t * float(g @ step_free):
                break
            t /= 2.0
        else:
            break
        params, value, grad, info = trial, v_t, g_t, i_t
    return params, value


def _params_to_item(kind, params):
    if kind == "rasch":
        return UnivariateItem.rasch(-params[0])
    if kind == "2pl":
        return UnivariateItem.two_pl(params[0], -params[1] / params[0])
    if kind == "3pl":
        return UnivariateItem.three_pl(params[0], -params[1] / params[0], float(expit(params[2])))
    return ScalarProductItem(params[:-1], params[-1])


def _item_to_params(kind, item):
    if kind == "rasch":
        return np.array([-item.b])
    if kind == "2pl":
        return np.array([item.a, -item.a * item.b])
    if kind == "3pl":
        return np.array([item.a, -item.a * item.b, float(logit(item.c))])
    return np.append(item.a, item.b)


def _proportions(data):
    admin = (data != MISSING).sum(axis=0)
    correct = (data == 1).sum(axis=0)
    return np.clip((correct + 0.5) / (admin + 1.0), 0.02, 0.98)


def _initial_item_params(kind, dim, data, config):
    p = _proportions(data)
    d = logit(p)
    if kind == "rasch":
        return d[:, None].copy()
    if kind == "2pl":
        return np.column_stack([np.ones_like(d), d])
    if kind == "3pl":
        c0 = logit(config.c_prior_mean)
        return np.column_stack([np.ones_like(d), d, np.full_like(d, c0)])
    A = _pca_slopes(data, dim)
    d = d * np.sqrt(1.0 + 0.346 * np.sum(A**2, axis=1))
    return np.column_stack([A, d])


def _pca_slopes(data, dim):
    """Starting slopes from the leading principal components of the item correlations."""
    x = np.where(data == MISSING, np.nan, data).astype(float)
    col_mean = np.nanmean(x, axis=0)
    x = np.where(np.isnan(x), col_mean, x)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    corr = np.corrcoef((x - col_mean) / sd, rowvar=False)
    corr = np.nan_to_num(corr)
    vals, vecs = np.linalg.eigh(corr)
    order = np.argsort(vals)[::-1][:dim]
    loadings = vecs[:, order] * np.sqrt(np.maximum(vals[order], 1e-6))
    loadings *= np.where(loadings.sum(axis=0) < 0, -1.0, 1.0)
    h2 = np.clip(np.sum(loadings**2, axis=1), 0.0, 0.9)
    return 1.702 * loadings / np.sqrt(1.0 - h2)[:, None]


def _lower_triangular_mask(n_items, dim):
    """Free-parameter mask: item j < dim has zero slopes on dimensions k > j."""
    free = np.ones((n_items, dim + 1), dtype=bool)
    for j in range(min(dim, n_items)):
        free[j, j + 1 : dim] = False
    return free


def _rotate_to_lower_triangular(params, dim):
    """Orthogonal rotation of the slopes making the first ``dim`` rows lower triangular."""
    A = params[:, :dim]
    q, _ = np.linalg.qr(A[:dim].T)
    A = A @ q
    A[:dim][np.triu_indices(dim, 1)] = 0.0
    out = params.copy()
    out[:, :dim] = A
    return _fix_signs(out, dim)


def _fix_signs(params, dim):
    """Reflect latent axes so the anchoring items have positive diagonal slopes."""
    out = params.copy()
    for k in range(min(dim, out.shape[0])):
        if out[k, k] < 0:
            out[:, k] *= -1.0
    return out


def _c_penalty(config):
    return (float(logit(config.c_prior_mean)), config.c_prior_sd) if config.kind == "3pl" else None


def _total_penalty(kind, params, penalty):
    if penalty is None:
        return 0.0
    mean, sd = penalty
    return float(-0.5 * np.sum(((params[:, 2] - mean) / sd) ** 2))


# -- marginal maximum likelihood --------------------------------------------------------------


def fit_marginal_em(X, config: FitConfig | None = None) -> FitResult:
    """Marginal maximum likelihood by EM over a fixed Gauss-Hermite grid.

    The E-step forms each student's posterior weights on the quadrature nodes; the M-step
    maximizes each item's expected complete-data log-likelihood by Fisher scoring. For
    ``sp`` with dim >= 2 the population is N(0, I) and the first ``dim`` items carry a
    lower-triangular slope block with positive diagonal.
    """
    config = config or FitConfig()
    rm = X if isinstance(X, ResponseMatrix) else ResponseMatrix(X)
    data = rm.data
    n_students, n_items = data.shape
    kind, dim = config.kind, config.dim
    if n_items == 0:
        raise ValueError("no items to fit")
    correct = (data == 1).astype(float)
    admin = (data != MISSING).astype(float)

    n_nodes = config.n_nodes or default_nodes(dim)
    rule = gauss_hermite_rule(dim, n_nodes, PopulationModel.standard(dim))
    z_nodes, log_w = rule.nodes, rule.log_weights
    scale = 1.0

    params = _initial_item_params(kind, dim, data, config)
    free = np.ones_like(params, dtype=bool)
    if kind == "sp" and dim > 1 and config.identify:
        params = _rotate_to_lower_triangular(params, dim)
        free = _lower_triangular_mask(n_items, dim)
    penalty = _c_penalty(config)

    trace = []
    warnings = []
    converged = False
    iteration = 0
    for iteration in range(1, config.max_iter + 1):
        nodes = z_nodes * scale
        loglik, post = _e_step(kind, params, nodes, log_w, data)
        objective = loglik + _total_penalty(kind, params, penalty)
        if trace and objective < trace[-1] - 1e-8:
            warnings.append(f"EM objective decreased at iteration {iteration} by {trace[-1] - objective:.3g}")
        trace.append(objective)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < config.tol:
            converged = True
            break

        r = post.T @ correct
        n = post.T @ admin
        for i in range(n_items):
            params[i], _ = _maximize_item(kind, params[i], nodes, r[:, i], n[:, i], free[i], penalty, config.inner_tol)
        if kind == "sp" and dim > 1 and config.identify:
            params = _fix_signs(params, dim)
        if config.estimate_population:
            scale = _update_rasch_scale(params, z_nodes, r, n, scale, config.inner_tol)
        if np.abs(params).max() > config.divergence_bound:
            warnings.append("item parameters exceed the divergence bound; stopping")
            break

    if not converged:
        warnings.append(f"EM stopped after {iteration} iterations without meeting tol={config.tol:g}")
    if kind == "sp" and dim > 1 and config.identify:
        _check_anchor_block(params, dim, warnings)
    items = [_params_to_item(kind, p) for p in params]
    if dim > 1:
        _, post = _e_step(kind, params, z_nodes * scale, log_w, data)
        _ridge_warning(data, items, post @ (z_nodes * scale), warnings)
    population = PopulationModel(np.zeros(dim), np.eye(dim) * scale**2)
    return FitResult(
        kind=kind,
        dim=dim,
        items=items,
        item_ids=rm.item_ids,
        student_ids=rm.student_ids,
        loglik=trace[-1],
        trace=trace,
        converged=converged,
        iterations=iteration,
        population=population,
        warnings=warnings,
    )


def _e_step(kind, params, nodes, log_w, data):
    log_p = np.empty((nodes.shape[0], params.shape[0]))
    log_q = np.empty_like(log_p)
    for i, p in enumerate(params):
        log_p[:, i], log_q[:, i], _, _ = _item_eval(kind, p, nodes)
    joint = node_log_likelihoods(data, log_p, log_q) + log_w
    marginal = logsumexp(joint, axis=1)
    if np.isneginf(marginal).any():
        bad = int(np.flatnonzero(np.isneginf(marginal))[0])
        raise ConvergenceError(f"E-step integrand vanishes for student {bad}")
    post = np.exp(joint - marginal[:, None])
    return float(np.sum(marginal)), post


def _update_rasch_scale(params, z_nodes, r, n, scale, tol):
    """One-dimensional Fisher scoring for the common slope (population sd) of a Rasch model."""
    z = z_nodes[:, 0]
    d = params[:, 0]

    def objective(s):
        logits = s * z[:, None] + d[None, :]
        p = expit(logits)
        value = float(np.sum(r * log_expit(logits) + (n - r) * log_expit(-logits)))
        grad = float(np.sum((r - n * p) * z[:, None]))
        info = float(np.sum(n * p * (1 - p) * z[:, None] ** 2))
        return value, grad, info

    value, grad, info = objective(scale)
    for _ in range(100):
        if abs(grad) < tol:
            break
        step = grad / info
        t = 1.0
        while t > 1e-12:
            if scale + t * step > 0:
                v_t, g_t, i_t = objective(scale + t * step)
                if v_t >= value:
                    break
            t /= 2.0
        else:
            break
        scale, value, grad, info = scale + t * step, v_t, g_t, i_t
    return scale


def _ridge_warning(data, items, thetas, warnings):
    """Count students whose likelihood Hessian at ``thetas`` has anisotropy above RIDGE_ALARM."""
    alpha, beta, c = _stack_forms(items)
    _, _, hess = _ability_objective(data, alpha, beta, c, thetas, None)
    mags = np.abs(np.linalg.eigvalsh(hess))
    ratio = mags.max(axis=1) / np.maximum(mags.min(axis=1), 1e-300)
    n_alarm = int(np.sum(ratio > RIDGE_ALARM))
    if n_alarm:
        warnings.append(
            f"ridge alarm: {n_alarm} of {len(ratio)} students have Hessian anisotropy above {RIDGE_ALARM:g} "
            "at their posterior means"
        )


def _check_anchor_block(params, dim, warnings):
    diag = np.array([params[k, k] for k in range(dim)])
    if np.any(diag <= 1e-6):
        warnings.append("anchor items have (near-)zero diagonal slopes; the rotation is weakly identified")


# -- joint maximum likelihood -----------------------------------------------------------------


def _exclude_flagged(rm: ResponseMatrix):
    """Iteratively drop flagged rows and columns until none remain."""
    rows = np.arange(rm.shape[0])
    cols = np.arange(rm.shape[1])
    dropped_rows, dropped_cols = [], []
    while True:
        sub = rm.data[np.ix_(rows, cols)]
        rep = check_mle_existence(sub)
        if rep.ok:
            break
        dropped_rows += [rm.student_ids[rows[k]] for k in rep.flagged_rows()]
        dropped_cols += [rm.item_ids[cols[k]] for k in rep.flagged_columns()]
        rows = rows[~rep.rows]
        cols = cols[~rep.columns]
        if rows.size == 0 or cols.size == 0:
            raise ExistenceError("no rows or columns remain after excluding flagged ones", dropped_rows, dropped_cols)
        # removing columns can empty a row entirely
        keep = (rm.data[np.ix_(rows, cols)] != MISSING).any(axis=1)
        dropped_rows += [rm.student_ids[r] for r in rows[~keep]]
        rows = rows[keep]
    return rows, cols, dropped_rows, dropped_cols


def fit_joint(X, config: FitConfig | None = None) -> FitResult:
    """Joint maximum likelihood by alternating ability and item maximization.

    Rows or columns with no two different responses have no finite maximum; they raise
    ExistenceError unless ``config.exclude_flagged`` drops them first. After each outer
    iteration abilities are centered (Rasch) or standardized (2PL/3PL) with the items
    transformed so the likelihood is unchanged.
    """
    config = config or FitConfig()
    if config.kind == "sp":
        raise ValueError("joint fitting is implemented for univariate models (rasch, 2pl, 3pl)")
    rm = X if isinstance(X, ResponseMatrix) else ResponseMatrix(X)
    warnings = []
    report = check_mle_existence(rm)
    if not report.ok:
        if not config.exclude_flagged:
            rows = [rm.student_ids[k] for k in report.flagged_rows()]
            cols = [rm.item_ids[k] for k in report.flagged_columns()]
            parts = []
            if rows:
                parts.append("students " + ", ".join(map(str, rows)))
            if cols:
                parts.append("items " + ", ".join(map(str, cols)))
            raise ExistenceError(
                "no finite joint maximum likelihood estimate: all responses equal for " + "; ".join(parts),
                rows,
                cols,
            )
        rows, cols, dropped_rows, dropped_cols = _exclude_flagged(rm)
        rm = rm.subset(rows, cols)
        if dropped_rows:
            warnings.append("excluded students " + ", ".join(map(str, dropped_rows)))
        if dropped_cols:
            warnings.append("excluded items " + ", ".join(map(str, dropped_cols)))

    kind = config.kind
    data = rm.data
    n_students, n_items = data.shape
    admin = data != MISSING
    correct_f = (data == 1).astype(float)
    admin_f = admin.astype(float)
    penalty = _c_penalty(config)

    params = _initial_item_params(kind, 1, data, config)
    score = (correct_f.sum(axis=1) + 0.5) / (admin_f.sum(axis=1) + 1.0)
    thetas = logit(score)
    thetas = ((thetas - thetas.mean()) / (thetas.std() or 1.0)).reshape(-1, 1)
    free = np.ones(params.shape[1], dtype=bool)

    def objective():
        items = [_params_to_item(kind, p) for p in params]
        return joint_log_likelihood(rm, thetas, items) + _total_penalty(kind, params, penalty)

    trace = [objective()]
    converged = False
    iteration = 0
    for iteration in range(1, config.max_iter + 1):
        items = [_params_to_item(kind, p) for p in params]
        alpha, beta, c = _stack_forms(items)
        thetas, _, _, diverged = _estimate_abilities(
            data, alpha, beta, c, thetas, None, config.inner_tol, 200, config.divergence_bound
        )
        for i in range(n_items):
            col = admin[:, i]
            params[i], _ = _maximize_item(
                kind, params[i], thetas[col], correct_f[col, i], admin_f[col, i], free, penalty, config.inner_tol
            )
        thetas, params = _normalize_joint(kind, thetas, params)
        value = objective()
        if diverged.any() or np.abs(params).max() > config.divergence_bound:
            warnings.append(
                f"parameters exceed |{config.divergence_bound:g}| on the logit scale at iteration {iteration}; "
                "the joint iteration is diverging"
            )
            trace.append(value)
            break
        if value < trace[-1] - 1e-8:
            warnings.append(f"joint objective decreased at iteration {iteration}")
        trace.append(value)
        if abs(trace[-1] - trace[-2]) < config.tol:
            converged = True
            break
    if not converged and not any("diverg" in w for w in warnings):
        warnings.append(f"joint fit stopped after {iteration} iterations without meeting tol={config.tol:g}")
    items = [_params_to_item(kind, p) for p in params]
    return FitResult(
        kind=kind,
        dim=1,
        items=items,
        item_ids=rm.item_ids,
        student_ids=rm.student_ids,
        loglik=trace[-1],
        trace=trace,
        converged=converged,
        iterations=iteration,
        abilities=thetas,
        warnings=warnings,
    )


def _normalize_joint(kind, thetas, params):
    """Center (Rasch) or standardize (2PL/3PL) abilities; items absorb the transform."""
    m = float(thetas.mean())
    s = float(thetas.std()) if kind != "rasch" else 1.0
    if s <= 0:
        s = 1.0
    thetas = (thetas - m) / s
    params = params.copy()
    if kind == "rasch":
        params[:, 0] += m
    else:
        # a theta + d == (a s) theta' + (d + a m)
        params[:, 1] += params[:, 0] * m
        params[:, 0] *= s
    return thetas, params
