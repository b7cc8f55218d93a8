import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from tubal.config import RunConfig
from tubal.experiments import (SweepResult, SweepRow, alpha_trend, detect_knee,
                               exp_alignment, exp_rank_sweep, moving_average, rank_trend,
                               rerun_csv, run_experiment, sigma_min_floor, stage_report,
                               stage_report_from_csv, stat_random_tensor_checks,
                               sweep_from_csv, unimodal_valley)

TINY = dict(n=5, k=3, r=2, R=6, m=60, iters=60, stride=5, mu=0.05, alpha=0.01)


def test_moving_average_shrinks_at_edges():
    v = np.arange(10.0)
    assert_allclose(moving_average(v, 5), v)
    v = np.array([0.0, 3.0, 0.0, 3.0, 0.0])
    assert_allclose(moving_average(v, 3), [0.0, 1.0, 2.0, 1.0, 0.0])


def test_knee_detector():
    ts = np.arange(0, 200, 10)
    err = np.concatenate([np.ones(8), np.linspace(0.9, 0.1, 12)])
    assert detect_knee(ts, err, window=1, run=10) == 70
    assert detect_knee(ts, np.ones(20), window=1, run=10) is None
    assert detect_knee(ts[:5], err[:5], window=1, run=10) is None
    # a minimum relative drop filters out creeping decreases
    creep = 1.0 - 1e-9 * np.arange(20)
    assert detect_knee(ts, creep, window=1, run=10) == 0
    assert detect_knee(ts, creep, window=1, run=10, min_drop=1e-3) is None


def test_unimodal_valley():
    ok, i = unimodal_valley([1.0, 0.5, 0.2, 0.4, 0.9], 1e-3)
    assert ok and i == 2
    assert not unimodal_valley([1.0, 0.5, 0.8, 0.2, 0.9], 1e-3)[0]
    assert not unimodal_valley([1.0, 0.5, 0.2], 1e-3)[0]  # no rise afterwards
    assert unimodal_valley([1.0, 0.5, 0.5005, 0.2, 0.9], 1e-3)[0]


def test_two_stage_undetermined_without_iterations():
    cfg = RunConfig(**TINY)
    single = stage_report([0], [1.0], [0.7], cfg)
    assert not single.determined and not single.unimodal
    _, (rows, rep) = run_experiment(cfg.replace(iters=1, stride=1), "two-stage")
    assert len(rows) == 2 and not rep.determined


def test_two_stage_report_recomputes_from_csv():
    cfg = RunConfig(**{**TINY, "iters": 300, "knee_window": 5, "knee_run": 3})
    text, (rows, rep) = run_experiment(cfg, "two-stage")
    assert stage_report_from_csv(text) == rep


def test_alignment_starts_identical():
    cfg = RunConfig(**{**TINY, "window": 20, "stride": 1})
    rows, rep = exp_alignment(cfg)
    assert rows[0].angle_L_Lt == rows[0].angle_L_Lpow
    assert rows[0].power_gap == 0.0
    assert rep.margin == pytest.approx(rep.band - rep.max_angle_gap)


def test_alpha_sweep_single_point_has_no_slope():
    cfg = RunConfig(**{**TINY, "alpha_grid": (1e-3,), "alpha_seeds": 2})
    text, result = run_experiment(cfg, "sweep-alpha")
    trend = alpha_trend(result)
    assert trend.slope is None and not trend.passed


def test_alpha_sweep_slope_recomputes_from_csv():
    cfg = RunConfig(**{**TINY, "alpha_grid": (1e-1, 1e-2, 1e-3), "alpha_seeds": 2})
    text, result = run_experiment(cfg, "sweep-alpha")
    a, b = alpha_trend(result), alpha_trend(sweep_from_csv(text))
    assert a.slope == pytest.approx(b.slope, abs=1e-12)
    agg = result.aggregates()
    alphas = np.array(result.values)
    means = np.array([agg[v]["mean_test_err"] for v in result.values])
    assert a.slope == pytest.approx(stats.linregress(np.log(alphas), np.log(means)).slope,
                                    abs=1e-10)


def test_rank_sweep_rows_and_baseline():
    cfg = RunConfig(**{**TINY, "rank_grid": (2, 6), "rank_seeds": 3, "tau": 0.5})
    result = exp_rank_sweep(cfg)
    assert len(result.rows) == 6
    assert all(agg["count"] == 3 for agg in result.aggregates().values())
    assert {row.value for row in result.rows} == {2, 6}


def test_aggregates_and_trend_logic():
    rows = [SweepRow(10, 0, 0.1, 0.2, 100), SweepRow(10, 1, 0.1, 0.4, 300),
            SweepRow(50, 0, 0.1, 0.1, 150), SweepRow(50, 1, 0.1, 0.1, None)]
    res = SweepResult("R", (10, 50), rows)
    agg = res.aggregates()
    assert agg[10]["mean_test_err"] == pytest.approx(0.3)
    assert agg[10]["mean_iters"] == 200.0
    assert math.isnan(agg[50]["mean_iters"])
    trend = rank_trend(res)
    assert trend.missing and not trend.passed
    ok = SweepResult("R", (1, 2, 3, 4), [SweepRow(v, 0, 0, 0, it) for v, it in
                                          [(1, 50), (2, 60), (3, 40), (4, 30)]])
    assert rank_trend(ok).inversions == 1 and rank_trend(ok).passed


def test_sweep_workers_do_not_change_results():
    cfg = RunConfig(**{**TINY, "alpha_grid": (1e-2, 1e-3), "alpha_seeds": 2})
    serial = run_experiment(cfg, "sweep-alpha")[0]
    parallel = run_experiment(cfg.replace(workers=2), "sweep-alpha")[0]
    assert serial.replace("workers=1", "workers=2") == parallel


def test_stat_checks():
    assert stat_random_tensor_checks(0, 0).norm_event is None
    a = stat_random_tensor_checks(20, 3)
    assert a == stat_random_tensor_checks(20, 3)
    k1 = stat_random_tensor_checks(100, 1, n=10, R=50, k=1, r=3)
    assert k1.norm_event >= 0.99 and k1.bracket_event >= 0.99 and k1.sigma_min_event >= 0.95


def test_sigma_min_floor_branches():
    assert sigma_min_floor(3, 200, 4, 0.1) == pytest.approx(0.2 * (1 - math.sqrt(5 / 200)))
    assert sigma_min_floor(3, 5, 4, 0.1) == pytest.approx(0.2 / math.sqrt(15))


@pytest.mark.parametrize("experiment", ["run", "power", "two-stage", "sweep-alpha",
                                        "sweep-rank", "stats", "rip-check"])
def test_rerun_from_header_is_byte_identical(experiment):
    cfg = RunConfig(**{**TINY, "window": 20, "alpha_grid": (1e-2,), "alpha_seeds": 1,
                       "rank_grid": (3,), "rank_seeds": 1, "trials": 5, "rip_rank": 1})
    text = run_experiment(cfg, experiment)[0]
    assert rerun_csv(text) == text
