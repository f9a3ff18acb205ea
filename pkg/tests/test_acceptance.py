"""Acceptance gate: the nine headline checks at full scale, with budgets.

Run with -s to see the one-line verdicts. Each test prints
criterion k (<name>): PASS worst=<x> tol=<t> elapsed=<s>s budget=<b>s
and fails if the check fails or overruns its budget.
"""

import json
import time

import numpy as np

from oracles import msbo_exhaustive, sbeed_exhaustive
from sbeedlab import (
    ClassSpec,
    SoftParams,
    build_perturbation_classes,
    build_q_perturbation_classes,
    msbo_solve,
    random_mdp,
    run_rate_experiment,
    sample_dataset,
    sbeed_solve,
    uniform_distribution,
)
from sbeedlab.experiments import load_config
from sbeedlab.suite import (
    check_consistency_fixed_point,
    check_entropy_bias,
    check_excess_risk,
    check_loss_unbiasedness,
    check_quadratic_root,
    check_suboptimality,
    check_telescoping,
    check_variance_identity,
)


def report(k, name, passed, worst, tol, elapsed, budget):
    verdict = "PASS" if passed and elapsed < budget else "FAIL"
    print(
        f"criterion {k} ({name}): {verdict} worst={worst:.3e} tol={tol:.3e} "
        f"elapsed={elapsed:.2f}s budget={budget:.0f}s"
    )
    assert passed, f"criterion {k} check failed (worst={worst:.3e}, tol={tol:.3e})"
    assert elapsed < budget, f"criterion {k} overran: {elapsed:.1f}s >= {budget:.0f}s"


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    result = fn(*args, **kwargs)
    return result, time.perf_counter() - start


class TestAcceptance:
    def test_criterion_1_fixed_point_residuals(self):
        res, dt = timed(check_consistency_fixed_point, 100)
        report(1, "fixed-point residuals, 100 mdps", res.passed, res.worst,
               res.threshold, dt, 10.0)

    def test_criterion_2_telescoping(self):
        res, dt = timed(check_telescoping, 500)
        report(2, "telescoping identity, 500 tuples", res.passed, res.worst,
               res.threshold, dt, 10.0)

    def test_criterion_3_variance_split(self):
        start = time.perf_counter()
        analytic = check_variance_identity(200)
        mc = check_loss_unbiasedness(20, 2000, 200)
        dt = time.perf_counter() - start
        passed = analytic.passed and mc.passed
        report(3, "variance split analytic+mc", passed,
               max(analytic.worst, mc.worst), max(analytic.threshold, mc.threshold),
               dt, 120.0)

    def test_criterion_4_performance_bound(self):
        res, dt = timed(check_suboptimality, 50)
        report(4, "performance bound, 50 runs", res.passed, res.worst,
               res.threshold, dt, 120.0)

    def test_criterion_5_statistical_rate(self, tmp_path):
        config_raw = {
            "mdp": {
                "kind": "random", "n_states": 4, "n_actions": 3,
                "discount": 0.5, "r_max": 1.0,
            },
            "lambda": 0.2,
            "mu": {"kind": "uniform"},
            "class_spec": {
                "n_values": 16, "n_policies": 16, "n_helpers": 256,
                "scale": 0.5, "realizable": True, "helper_complete": True,
            },
            "n_grid": [128, 256, 512, 1024, 2048, 4096, 8192, 16384],
            "repetitions": 20,
            "delta": 0.05,
            "seed": 2,
        }
        path = tmp_path / "rate.json"
        path.write_text(json.dumps(config_raw))
        start = time.perf_counter()
        _, summary = run_rate_experiment(load_config(path))
        dt = time.perf_counter() - start
        slope = summary["slope"]
        passed = (
            summary["bounds_hold"] and slope is not None and -0.70 <= slope <= -0.30
        )
        verdict = "PASS" if passed and dt < 300.0 else "FAIL"
        print(
            f"criterion 5 (residual decay rate): {verdict} slope={slope:.3f} "
            f"window=[-0.70,-0.30] bounds_hold={summary['bounds_hold']} "
            f"elapsed={dt:.2f}s budget=300s"
        )
        assert passed, f"slope {slope} outside [-0.70, -0.30] or bound violated"
        assert dt < 300.0

    def test_criterion_6_excess_risk_moments(self):
        res, dt = timed(check_excess_risk, 2000, 100)
        report(6, "excess-risk moments, 2000 datasets", res.passed, res.worst,
               res.threshold, dt, 120.0)

    def test_criterion_7_quadratic_root_dominance(self):
        res, dt = timed(check_quadratic_root, 10_000)
        report(7, "quadratic root dominance, 1e4 draws", res.passed, res.worst,
               res.threshold, dt, 1.0)

    def test_criterion_8_solver_exactness(self):
        start = time.perf_counter()
        rng = np.random.default_rng(88)
        mismatches = 0
        for trial in range(20):
            if trial == 0:
                sizes = (1, 1, 1)
            elif trial == 1:
                sizes = (8, 8, 8)
            else:
                sizes = tuple(int(v) for v in rng.integers(1, 9, size=3))
            mdp = random_mdp(
                3 + trial % 4, 2 + trial % 3, (0.4, 0.7, 0.9)[trial % 3],
                seed=(880, trial),
            )
            lam = SoftParams((0.2, 0.5, 1.0)[trial % 3])
            classes = build_perturbation_classes(
                mdp, lam,
                ClassSpec(*sizes, scale=0.5, realizable=bool(trial % 2)),
                seed=(881, trial),
            )
            mu = uniform_distribution(mdp)
            n = int(rng.integers(200, 401))
            data = sample_dataset(mdp, mu, n, seed=882_000 + trial)
            res = sbeed_solve(data, classes, lam)
            ref_idx, _ = sbeed_exhaustive(data, classes, lam.lam)
            if res.chosen_indices != ref_idx:
                mismatches += 1
            q_class, f_class = build_q_perturbation_classes(
                mdp, ClassSpec(*sizes, scale=0.5), seed=(883, trial)
            )
            q_hat, _, _ = msbo_solve(data, q_class, f_class)
            m_idx, _ = msbo_exhaustive(data, q_class, f_class)
            if not np.array_equal(q_hat, q_class[m_idx]):
                mismatches += 1
        dt = time.perf_counter() - start
        passed = mismatches == 0
        verdict = "PASS" if passed and dt < 60.0 else "FAIL"
        print(
            f"criterion 8 (solver exactness vs enumeration): {verdict} "
            f"mismatches={mismatches}/40 elapsed={dt:.2f}s budget=60s"
        )
        assert passed, f"{mismatches} solver/oracle index mismatches"
        assert dt < 60.0

    def test_criterion_9_entropy_bias(self):
        res, dt = timed(check_entropy_bias, 10)
        report(9, "regularization bias sweep, 10 mdps", res.passed, res.worst,
               res.threshold, dt, 60.0)
