"""Acceptance criteria, each checked at its stated tolerance.

Every test prints one PASS/FAIL line. Run ``pytest tests/test_acceptance.py -v -s`` to see
them inline, or ``python3 tests/test_acceptance.py`` for the bare summary.
"""

import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.special import expit

sys.path.insert(0, str(Path(__file__).parent))
from conftest import central_gradient, random_invertible  # noqa: E402

from mirtlab.estimation import (  # noqa: E402
    FitConfig,
    _item_objective,
    check_mle_existence,
    estimate_ability,
    fit_marginal_em,
    ridge_diagnostics,
    student_gradient,
    student_hessian,
)
from mirtlab.geometry_lab import (  # noqa: E402
    LineProbe,
    Surface,
    check_line_monotonic,
    check_parallel,
    decompose_to_univariate,
    demo_noninvariance,
    factorization_ratio_test,
    find_constant_hyperplane,
)
from mirtlab.io import ParameterFile, SimulationSpec, simulate  # noqa: E402
from mirtlab.irt_core import UnivariateItem  # noqa: E402
from mirtlab.likelihood import (  # noqa: E402
    PopulationModel,
    ResponseMatrix,
    item_log_likelihood,
    joint_log_likelihood,
    marginal_log_likelihood,
    student_log_likelihood,
)
from mirtlab.mirt_models import (  # noqa: E402
    CoordinateChange,
    GmirtItem,
    IndependentItem,
    ScalarProductItem,
    change_coordinates,
    model_gradient,
    sp_eval,
    sp_pullback,
)

WHITELY = Surface.from_model(IndependentItem([1.0, 1.0], [0.0, 0.0]))


def _angle(u, v):
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    return float(2 * np.arctan2(np.linalg.norm(u - v), np.linalg.norm(u + v)))


def _report(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} ({detail})"
    return passed, line


# -- criteria ----------------------------------------------------------------------------


def criterion_1():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst, all_monotone = 0.0, True
    for _ in range(1000):
        dim = int(rng.choice([2, 3]))
        f = Surface.from_model(ScalarProductItem(rng.normal(size=dim), rng.normal()))
        verdict = check_line_monotonic(f, LineProbe(rng.normal(size=dim), rng.normal(size=dim)), 1e-10)
        all_monotone &= verdict.monotone
        worst = max(worst, verdict.worst_violation)
    elapsed = time.perf_counter() - start
    ok = all_monotone and worst < 1e-10 and elapsed < 10
    return _report(1, "scalar product line monotonicity", ok, f"1000 probes, worst violation {worst:.2e}, {elapsed:.2f} s")


def criterion_2():
    verdict = check_line_monotonic(WHITELY, LineProbe([0.0, 0.0], [1.0, -1.0], -6, 6, 241))
    lam, value = verdict.peak
    ok = (not verdict.monotone) and abs(value - 0.25) < 1e-9 and abs(lam) < 1e-9
    return _report(2, "independent model non-monotonicity witness", ok, f"monotone={verdict.monotone}, max {value:.12f} at lambda={lam:g}")


def criterion_3():
    rng = np.random.default_rng(103)
    worst = 0.0
    for k in range(100):
        dim = 2 + k % 2
        a = rng.normal(size=dim)
        while np.linalg.norm(a) < 0.3:
            a = rng.normal(size=dim)
        dec = decompose_to_univariate(Surface.from_model(ScalarProductItem(a, rng.normal())), a / np.linalg.norm(a))
        worst = max(worst, dec.residual)
    irreducible = decompose_to_univariate(WHITELY, np.array([1.0, 1.0]) / np.sqrt(2)).residual
    ok = worst < 1e-6 and irreducible > 0.05
    return _report(3, "univariate decomposition certificate", ok, f"scalar product worst residual {worst:.2e}, independent residual {irreducible:.3f}")


def criterion_4():
    rng = np.random.default_rng(104)
    worst_normal, worst_parallel, all_parallel = 0.0, 0.0, True
    for k in range(30):
        dim = (2, 3, 5)[k % 3]
        a = rng.normal(size=dim)
        f = Surface.from_model(ScalarProductItem(a, rng.normal()))
        est = find_constant_hyperplane(f, rng.uniform(-1, 1, dim))
        worst_normal = max(worst_normal, _angle(est.normal, a))
        report = check_parallel(f, rng.uniform(-2, 2, (10, dim)), 1e-6)
        all_parallel &= report.parallel
        worst_parallel = max(worst_parallel, report.max_angle)
    ok = worst_normal < 1e-6 and all_parallel and worst_parallel < 1e-6
    return _report(4, "constant hyperplane recovery", ok, f"normal error {worst_normal:.2e} rad, parallel max angle {worst_parallel:.2e} rad")


def criterion_5():
    rotated = demo_noninvariance(1.0)
    native = factorization_ratio_test(WHITELY)
    ok = (not rotated.factorizable) and rotated.max_deviation > 0.01 and native.max_deviation < 1e-12
    return _report(5, "non-invariance of factorization", ok, f"rotated deviation {rotated.max_deviation:.4f}, native deviation {native.max_deviation:.1e}")


def criterion_6():
    rng = np.random.default_rng(106)
    worst = 0.0
    for _ in range(1000):
        dim = int(rng.integers(1, 6))
        G = CoordinateChange(random_invertible(rng, dim))
        item = ScalarProductItem(rng.normal(size=dim), rng.normal())
        theta_prime = rng.normal(size=dim)
        diff = abs(sp_eval(change_coordinates(theta_prime, G), item) - sp_eval(theta_prime, sp_pullback(item, G)))
        worst = max(worst, diff)
    return _report(6, "coordinate invariance of the scalar product", worst < 1e-12, f"1000 draws, worst gap {worst:.1e}")


def criterion_7():
    rng = np.random.default_rng(107)
    worst_accounting = 0.0
    for trial in range(10):
        dim = 1 + trial % 3
        data = rng.integers(0, 2, (20, 15))
        mask = rng.random((20, 15)) < 0.15
        mask[:, 0] = False
        data[mask] = -1
        X = ResponseMatrix(data)
        items = [ScalarProductItem(rng.normal(size=dim), rng.normal()) for _ in range(15)]
        thetas = rng.normal(size=(20, dim))
        direct = joint_log_likelihood(X, thetas, items)
        by_student = sum(student_log_likelihood(X.data[n], thetas[n], items) for n in range(20))
        by_item = sum(item_log_likelihood(X.data[:, i], thetas, items[i]) for i in range(15))
        worst_accounting = max(worst_accounting, abs(direct - by_student), abs(direct - by_item))

    worst_mc = 0.0
    for dim in (1, 2):
        items = [ScalarProductItem(rng.normal(size=dim), rng.normal()) for _ in range(5)]
        X = ResponseMatrix(rng.integers(0, 2, (6, 5)))
        quad = marginal_log_likelihood(X, items, PopulationModel.standard(dim))
        draws = rng.standard_normal((1_000_000, dim))
        probs = np.column_stack([item.prob(draws) for item in items])
        mc = sum(np.log(np.prod(np.where(row == 1, probs, 1 - probs), axis=1).mean()) for row in X.data)
        worst_mc = max(worst_mc, abs(quad - mc) / abs(mc))
    ok = worst_accounting < 1e-12 and worst_mc < 0.01
    return _report(7, "likelihood accounting and Monte Carlo agreement", ok, f"accounting gap {worst_accounting:.1e}, Monte Carlo relative gap {worst_mc:.2e}")


def _sp_truth(rng, n_items=30):
    """Alternating simple-structure slopes; the first two items satisfy the anchor constraint."""
    A = np.empty((n_items, 2))
    for i in range(n_items):
        major, minor = i % 2, 1 - i % 2
        A[i, major] = rng.uniform(0.8, 1.6)
        A[i, minor] = rng.uniform(0.0, 0.4)
    A[0, 1] = 0.0
    d = rng.uniform(-1.5, 1.5, n_items)
    return [ScalarProductItem(a, b) for a, b in zip(A, d)]


def criterion_8():
    start = time.perf_counter()
    rng = np.random.default_rng(108)
    b_true = rng.uniform(-2, 2, 30)
    rasch = ParameterFile("rasch", 1, [UnivariateItem.rasch(v) for v in b_true], [f"i{k}" for k in range(30)])
    X, _ = simulate(SimulationSpec(2000, rasch, seed=8))
    fit_r = fit_marginal_em(X, FitConfig("rasch"))
    rmse_rasch = float(np.sqrt(np.mean((np.array([it.b for it in fit_r.items]) - b_true) ** 2)))

    truth = _sp_truth(np.random.default_rng(0))
    sp = ParameterFile("sp", 2, truth, [f"i{k}" for k in range(30)])
    Y, _ = simulate(SimulationSpec(2000, sp, seed=0))
    fit_sp = fit_marginal_em(Y, FitConfig("sp", dim=2))
    A_hat = np.array([it.a for it in fit_sp.items])
    A_true = np.array([it.a for it in truth])
    rmse_a = float(np.sqrt(np.mean((A_hat - A_true) ** 2)))
    rmse_b = float(np.sqrt(np.mean((np.array([it.b for it in fit_sp.items]) - [it.b for it in truth]) ** 2)))

    ascent = all(np.all(np.diff(f.trace) >= -1e-8) for f in (fit_r, fit_sp))
    elapsed = time.perf_counter() - start
    ok = ascent and rmse_rasch < 0.1 and rmse_a < 0.15 and rmse_b < 0.1 and elapsed < 300
    detail = (
        f"ascent={ascent}, Rasch RMSE(b) {rmse_rasch:.3f}, scalar product RMSE(a) {rmse_a:.3f} "
        f"RMSE(b) {rmse_b:.3f}, {elapsed:.1f} s"
    )
    return _report(8, "EM ascent and parameter recovery", ok, detail)


def criterion_9():
    b = np.array([-1.0, 0.0, 1.0])
    items = [UnivariateItem.rasch(v) for v in b]
    flagged = bool(check_mle_existence([[1, 1, 1], [1, 0, 1]]).rows.tolist() == [True, False])
    mle = estimate_ability([1, 1, 1], items)
    map_est = estimate_ability([1, 1, 1], items, PopulationModel.standard(1))
    grid = np.linspace(-4, 4, 800_001)
    values = np.sum(np.log(expit(grid[:, None] - b)), axis=1) - 0.5 * grid**2
    oracle = grid[np.argmax(values)]
    gap = abs(map_est.theta_hat[0] - oracle)
    ok = flagged and not mle.finite and map_est.finite and gap < 1e-4
    return _report(9, "existence and divergence handling", ok, f"flagged={flagged}, MLE finite={mle.finite}, MAP {map_est.theta_hat[0]:.6f} vs grid {oracle:.6f}")


def criterion_10():
    rng = np.random.default_rng(110)
    worst_ratio, worst_shift = 0.0, 0.0
    for _ in range(50):
        n_items = int(rng.integers(3, 10))
        a = rng.normal(size=2)
        items = [ScalarProductItem(a * rng.uniform(0.5, 2.0), rng.normal()) for _ in range(n_items)]
        row = rng.integers(0, 2, n_items)
        theta = rng.normal(size=2)
        report = ridge_diagnostics(row, items, theta)
        lam = np.abs(report.eigenvalues)
        worst_ratio = max(worst_ratio, lam.min() / lam.max())
        shifted = ridge_diagnostics(row, items, theta, PopulationModel.standard(2)).eigenvalues
        worst_shift = max(worst_shift, float(np.max(np.abs(shifted - (report.eigenvalues - 1.0)))))
    ok = worst_ratio < 1e-10 and worst_shift < 1e-8
    return _report(10, "ridge diagnostics", ok, f"worst |lambda_min|/|lambda_max| {worst_ratio:.1e}, prior shift error {worst_shift:.1e}")


def _relative_gap(exact, approx):
    return float(np.linalg.norm(np.asarray(exact) - approx) / max(np.linalg.norm(exact), 1e-3))


def criterion_11():
    rng = np.random.default_rng(111)
    worst = 0.0
    for _ in range(100):
        dim = int(rng.integers(1, 4))
        theta = rng.uniform(-2, 2, dim)
        models = [
            ScalarProductItem(rng.normal(size=dim), rng.normal()),
            IndependentItem(rng.uniform(0.3, 2, dim), rng.normal(size=dim)),
            GmirtItem(rng.normal(size=dim), UnivariateItem.three_pl(rng.uniform(0.3, 2), rng.normal(), rng.uniform(0, 0.4))),
        ]
        for m in models:
            worst = max(worst, _relative_gap(model_gradient(m, theta), central_gradient(m.prob, theta)))

        items = [
            GmirtItem(rng.normal(size=dim), UnivariateItem.three_pl(rng.uniform(0.3, 2), rng.normal(), rng.uniform(0, 0.4)))
            for _ in range(6)
        ]
        row = rng.integers(0, 2, 6)
        prior = PopulationModel(rng.normal(size=dim), np.eye(dim)) if rng.random() < 0.5 else None

        def log_post(t):
            v = student_log_likelihood(row, t, items)
            return v - 0.5 * np.sum((t - prior.nu) ** 2) if prior is not None else v

        worst = max(worst, _relative_gap(student_gradient(row, items, theta, prior), central_gradient(log_post, theta)))
        fd_h = np.column_stack(
            [central_gradient(lambda t, k=k: student_gradient(row, items, t, prior)[k], theta) for k in range(dim)]
        )
        worst = max(worst, _relative_gap(student_hessian(row, items, theta, prior), fd_h))

        kind, n_par = [("rasch", 1), ("2pl", 2), ("3pl", 3), ("sp", dim + 1)][int(rng.integers(0, 4))]
        nodes = rng.normal(size=(11, dim if kind == "sp" else 1))
        n = rng.uniform(1, 10, 11)
        r = n * rng.uniform(0, 1, 11)
        params = rng.normal(size=n_par)
        if kind in ("2pl", "3pl"):
            params[0] = abs(params[0]) + 0.2
        penalty = (np.log(0.25), 1.0) if kind == "3pl" else None
        grad = _item_objective(kind, params, nodes, r, n, penalty)[1]
        fd = central_gradient(lambda p: _item_objective(kind, p, nodes, r, n, penalty)[0], params)
        worst = max(worst, _relative_gap(grad, fd))
    return _report(11, "analytic derivatives match finite differences", worst < 1e-6, f"worst relative gap {worst:.1e}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11]


@pytest.mark.parametrize("criterion", CRITERIA, ids=lambda c: c.__name__)
def test_acceptance(criterion, capsys):
    passed, line = criterion()
    with capsys.disabled():
        print("\n" + line)
    assert passed, line


if __name__ == "__main__":
    results = []
    for criterion in CRITERIA:
        passed, line = criterion()
        print(line, flush=True)
        results.append(passed)
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
