"""Acceptance criteria, each at its stated tolerance and size.

Every test records a one-line verdict through the ``criterion`` fixture;
the lines are printed together at the end of the session.
"""

import time

import numpy as np

from tubal import algebra as alg
from tubal.cli import main
from tubal.config import RunConfig
from tubal.experiments import (alpha_trend, exp_alignment, exp_alpha_sweep, exp_rank_sweep,
                               rank_trend, rerun_csv, run_experiment,
                               stat_random_tensor_checks)
from tubal.sensing import (adjoint, forward, normal_op, random_symmetric_lowrank, rip_delta,
                           s2n_residual, s2s_residual, sample_ensemble, symmetrize)
from tubal.solver import MetricsConfig, gradient, loss, make_instance, run_gd
from tubal.tsvd import slice_spectrum, tsvd, tubal_rank

DEFAULT = RunConfig()


def test_c01_tprod_oracle(criterion):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for i in range(200):
        k = (1, 3, 4, 8)[i % 4]
        n1, n2, n3 = rng.integers(1, 9, size=3)
        A = rng.standard_normal((n1, n2, k))
        B = rng.standard_normal((n2, n3, k))
        gap = alg.fro_norm(alg.tprod(A, B) - alg.tprod_naive(A, B))
        worst = max(worst, gap / (1 + alg.fro_norm(A) * alg.fro_norm(B)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-11 and elapsed < 5
    criterion(1, "t-product oracle equivalence", ok,
              f"max scaled gap {worst:.2e} (tol 1e-11), {elapsed:.2f}s (< 5s)")
    assert ok


def test_c02_tsvd_contract(criterion):
    rng = np.random.default_rng(102)
    start = time.perf_counter()
    recon = ortho = 0.0
    sorted_ok = True
    for i in range(200):
        n1, n2 = rng.integers(1, 9, size=2)
        k = int(rng.integers(1, 9))
        T = rng.standard_normal((n1, n2, k))
        F = tsvd(T, reduced=bool(i % 2))
        recon = max(recon, alg.fro_norm(F.reconstruct() - T) / alg.fro_norm(T))
        for Q in (F.U, F.V):
            p = Q.shape[1]
            ortho = max(ortho, alg.fro_norm(alg.tprod(alg.ttranspose(Q), Q)
                                            - alg.tidentity(p, k)))
        sorted_ok &= bool(np.all(np.diff(slice_spectrum(T), axis=1) <= 0))
    ranks = [tubal_rank(alg.gram(rng.standard_normal((10, 3, 4)))) for _ in range(100)]
    elapsed = time.perf_counter() - start
    ok = recon <= 1e-9 and ortho <= 1e-9 and sorted_ok and set(ranks) == {3} and elapsed < 10
    criterion(2, "t-SVD contract", ok,
              f"recon {recon:.2e}, ortho {ortho:.2e}, sorted={sorted_ok}, "
              f"ranks={sorted(set(ranks))}, {elapsed:.2f}s (< 10s)")
    assert ok


def test_c03_sensing_identities(criterion):
    rng = np.random.default_rng(103)
    n, k, m, r = 10, 4, 254, 3
    E = sample_ensemble(n, k, m, 7)
    adj = selfadj = 0.0
    psd = True
    for _ in range(100):
        Z = rng.standard_normal((n, n, k))
        W = rng.standard_normal((n, n, k))
        y = rng.standard_normal(m)
        lhs, rhs = forward(E, Z) @ y, alg.inner(Z, adjoint(E, y))
        adj = max(adj, abs(lhs - rhs) / (1 + abs(lhs)))
        a, b = alg.inner(normal_op(E, Z), W), alg.inner(Z, normal_op(E, W))
        selfadj = max(selfadj, abs(a - b) / (1 + abs(a)))
        psd &= alg.inner(normal_op(E, Z), Z) >= -1e-10
    s2s_hits = s2n_hits = 0
    trials = 200
    for t in range(trials):
        Et = sample_ensemble(n, k, m, alg.derive_seed(103, "ens", t))
        d_r1 = rip_delta(Et, r + 1, 60, alg.derive_seed(103, "d4", t))
        d_2 = rip_delta(Et, 2, 60, alg.derive_seed(103, "d2", t))
        Z = random_symmetric_lowrank(n, k, r, alg.derive_seed(103, "z", t))
        s2s_hits += s2s_residual(Et, Z) <= 2 * np.sqrt(k * r) * d_r1
        Zfull = symmetrize(rng.standard_normal((n, n, k)))
        s2n_hits += s2n_residual(Et, Zfull) <= 2 * np.sqrt(k) * d_2
    f2, f3 = s2s_hits / trials, s2n_hits / trials
    ok = adj <= 1e-10 and selfadj <= 1e-10 and psd and f2 >= 0.95 and f3 >= 0.95
    criterion(3, "sensing identities and RIP-variant inequalities", ok,
              f"adjoint {adj:.1e}, self-adjoint {selfadj:.1e}, psd={psd}, "
              f"S2S freq {f2:.3f}, S2N freq {f3:.3f} (>= 0.95)")
    assert ok


def test_c04_gradient_finite_differences(criterion):
    rng = np.random.default_rng(104)
    P = make_instance(10, 3, 4, 200, 254, 1e-7, 1e-5, 4)
    worst = 0.0
    for s in range(5):
        U = rng.standard_normal((10, 200, 4)) * (0.02 * (s + 1))
        G = gradient(P, U)
        h = 1e-6 * (1 + alg.fro_norm(U))
        for _ in range(20):
            D = rng.standard_normal(U.shape)
            fd = (loss(P, U + h * D) - loss(P, U - h * D)) / (2 * h)
            an = alg.inner(G, D)
            worst = max(worst, abs(fd - an) / abs(an))
    ok = worst <= 1e-5
    criterion(4, "gradient finite differences", ok, f"max relative gap {worst:.2e} (tol 1e-5)")
    assert ok


def test_c05_noise_term_orthogonality(criterion):
    P = make_instance(10, 3, 4, 200, 254, 1e-7, 1e-5, 0)
    rows = run_gd(P, 3500, MetricsConfig(stride=10)).rows
    leaks = np.array([r.noise_alignment for r in rows])
    ok = bool(np.all(np.isfinite(leaks)) and np.all(leaks <= 1e-8))
    criterion(5, "noise term orthogonal to the truth's column space", ok,
              f"{len(rows)} strides, max ||V_X^T noise||/||U_t|| = {np.nanmax(leaks):.2e}")
    assert ok


def test_c06_spectral_stage_proximity(criterion):
    start = time.perf_counter()
    gaps, powers = [], []
    for seed in range(3):
        rows, rep = exp_alignment(DEFAULT.replace(seed=seed, stride=1))
        assert rows[-1].t == 500
        gaps.append(rep.max_angle_gap)
        powers.append(rep.max_power_gap)
    elapsed = time.perf_counter() - start
    ok = max(powers) < 1 and max(gaps) <= 0.05 and elapsed < 120
    criterion(6, "spectral-stage proximity to the power method", ok,
              f"max power_gap {max(powers):.2e} (< 1), max angle gap {max(gaps):.2e} "
              f"(<= 0.05), {elapsed:.1f}s")
    assert ok


def test_c07_two_stage_dynamics(criterion):
    start = time.perf_counter()
    reports = []
    for seed in range(5):
        _, rep = run_experiment(DEFAULT.replace(seed=seed), "two-stage")[1]
        reports.append(rep)
    elapsed = time.perf_counter() - start
    passed = sum(rep.passed for rep in reports)
    ok = passed >= 4 and elapsed < 300
    detail = "; ".join(f"unimodal={rep.unimodal} early_min={rep.early_min_err:.3f} "
                       f"final={rep.final_err:.3f}" for rep in reports[:2])
    criterion(7, "two-stage dynamics", ok,
              f"{passed}/5 seeds pass (need 4), {elapsed:.0f}s; {detail}; ...")
    assert ok


def test_c08_alpha_sweep_trend(criterion):
    start = time.perf_counter()
    result = exp_alpha_sweep(DEFAULT)
    elapsed = time.perf_counter() - start
    trend = alpha_trend(result)
    means = [result.aggregates()[a]["mean_test_err"] for a in result.values]
    ok = trend.passed and elapsed < 1200
    criterion(8, "alpha-sweep trend", ok,
              f"spearman {trend.spearman:.3f} (>= 0.9), slope {trend.slope:.3g} (> 0), "
              f"mean test_err {['%.3g' % v for v in means]}, {elapsed:.0f}s")
    assert ok


def test_c09_rank_sweep_trend(criterion):
    start = time.perf_counter()
    result = exp_rank_sweep(DEFAULT)
    elapsed = time.perf_counter() - start
    trend = rank_trend(result)
    ok = trend.passed and elapsed < 2700
    criterion(9, "R-sweep trend", ok,
              f"mean iterations to 0.1: {trend.mean_iters} (nan = some seed never reached), "
              f"inversions {trend.inversions}, {elapsed:.0f}s")
    assert ok


def test_c10_random_tensor_statistics(criterion):
    start = time.perf_counter()
    rep = stat_random_tensor_checks(500, 110)
    elapsed = time.perf_counter() - start
    ok = (rep.norm_event >= 0.99 and rep.bracket_event >= 0.99
          and rep.sigma_min_event >= 0.95 and elapsed < 60)
    criterion(10, "random-tensor statistics", ok,
              f"norm {rep.norm_event:.3f} (>= 0.99), bracket {rep.bracket_event:.3f} "
              f"(>= 0.99), sigma_min {rep.sigma_min_event:.3f} (>= 0.95), {elapsed:.1f}s")
    assert ok


def test_c11_determinism_and_provenance(criterion, tmp_path):
    lines = []
    code = main(["selftest", "--out", str(tmp_path)], out=lines.append)
    small = RunConfig(n=5, k=3, r=2, R=6, m=60, mu=0.05, alpha=0.01, iters=40, window=20,
                      alpha_grid=(1e-2, 1e-3), alpha_seeds=2, rank_grid=(2, 4),
                      rank_seeds=2, trials=20)
    reruns = {}
    for experiment in ("run", "power", "two-stage", "sweep-alpha", "sweep-rank", "stats",
                       "rip-check"):
        text = run_experiment(small, experiment)[0]
        reruns[experiment] = rerun_csv(text) == text
    default_text = run_experiment(DEFAULT, "two-stage")[0]
    reruns["two-stage (default config)"] = rerun_csv(default_text) == default_text
    ok = code == 0 and all(reruns.values())
    criterion(11, "determinism and provenance", ok,
              f"selftest exit {code}, byte-identical reruns "
              f"{sum(reruns.values())}/{len(reruns)}")
    assert ok
