"""Reproducible experiments: traces, sweeps and random-tensor statistics.

Each experiment is a pure function of its :class:`RunConfig`. Verdicts are
computed only from the rows that get written to CSV, so they can be
recomputed from the files alone.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import stats

from .algebra import derive_seed, random_gaussian, sigma_min_tensor, spectral_norm
from .config import RunConfig, config_from_items
from .errors import FormatError
from .sensing import rip_estimate, sample_ensemble
from .solver import IterateMetrics, MetricsConfig, make_instance, run_gd
from .storage import parse_csv, render_csv


def instance_for(cfg, seed=None, R=None, alpha=None):
    return make_instance(cfg.n, cfg.r, cfg.k, cfg.R if R is None else R, cfg.m,
                         cfg.alpha if alpha is None else alpha, cfg.mu,
                         cfg.seed if seed is None else seed, cfg.normalization)


# -- smoothing and stage detection --------------------------------------------

def moving_average(values, window):
    """Centered moving average; the window shrinks symmetrically near the ends."""
    v = np.asarray(values, dtype=float)
    n = len(v)
    half = window // 2
    csum = np.concatenate([[0.0], np.cumsum(v)])
    out = np.empty(n)
    for i in range(n):
        w = min(half, i, n - 1 - i)
        out[i] = (csum[i + w + 1] - csum[i - w]) / (2 * w + 1)
    return out


def detect_knee(ts, test_err, window=51, run=10, min_drop=0.0):
    """First recorded ``t`` from which the smoothed error falls ``run`` times in a row.

    A step counts as a fall when it shrinks the smoothed value by more than
    ``min_drop`` relative. Returns ``None`` when no such point exists.
    """
    if len(ts) <= run:
        return None
    sm = moving_average(test_err, window)
    falls = sm[1:] < sm[:-1] * (1.0 - min_drop)
    streak = 0
    for i in range(len(falls) - 1, -1, -1):
        streak = streak + 1 if falls[i] else 0
        falls[i] = streak >= run
    hits = np.flatnonzero(falls)
    return int(ts[hits[0]]) if hits.size else None


def unimodal_valley(values, tol):
    """Whether ``values`` falls to an interior minimum and then rises.

    Steps against the expected direction up to ``tol`` are tolerated; both
    the descent and the ascent must exceed ``tol`` overall.
    """
    v = np.asarray(values, dtype=float)
    if len(v) < 3 or not np.all(np.isfinite(v)):
        return False, None
    i = int(np.argmin(v))
    steps = np.diff(v)
    down_ok = np.all(steps[:i] <= tol)
    up_ok = np.all(steps[i:] >= -tol)
    interior = v[0] - v[i] > tol and v[-1] - v[i] > tol
    return bool(down_ok and up_ok and interior), i


@dataclass(frozen=True)
class StageReport:
    t_knee: Optional[int]
    t_angle_min: Optional[int]
    unimodal: bool
    early_min_err: float
    final_err: float
    early_window: int
    tau: float

    @property
    def determined(self):
        return self.t_knee is not None

    @property
    def early_ok(self):
        return self.early_min_err > 0.5

    @property
    def final_ok(self):
        return self.final_err < self.tau

    @property
    def passed(self):
        return self.unimodal and self.early_ok and self.final_ok


def stage_report(ts, test_err, angle, cfg):
    ts = np.asarray(ts)
    test_err = np.asarray(test_err, dtype=float)
    if len(ts) < 2:
        return StageReport(None, None, False, float(test_err.min()) if len(ts) else math.nan,
                           float(test_err[-1]) if len(ts) else math.nan, cfg.window, cfg.tau)
    smooth_angle = moving_average(angle, cfg.knee_window)
    unimodal, imin = unimodal_valley(smooth_angle, cfg.unimodal_tol)
    early = test_err[ts <= cfg.window]
    return StageReport(
        t_knee=detect_knee(ts, test_err, cfg.knee_window, cfg.knee_run, cfg.knee_min_drop),
        t_angle_min=int(ts[imin]) if imin is not None else None,
        unimodal=unimodal,
        early_min_err=float(early.min()),
        final_err=float(test_err[-1]),
        early_window=cfg.window,
        tau=cfg.tau)


def exp_two_stage(cfg):
    P = instance_for(cfg)
    run = run_gd(P, cfg.iters, MetricsConfig(stride=cfg.stride, decomposition=False))
    rows = run.rows
    report = stage_report([r.t for r in rows], [r.test_err for r in rows],
                          [r.angle_L_Lt for r in rows], cfg)
    return rows, report


def exp_run(cfg):
    """Plain run with every metric; returns the :class:`GDRun`."""
    P = instance_for(cfg)
    return run_gd(P, cfg.iters, MetricsConfig(stride=cfg.stride))


# -- alignment with the power method ------------------------------------------

@dataclass(frozen=True)
class AlignmentReport:
    window: int
    band: float
    max_angle_gap: float
    max_power_gap: float

    @property
    def margin(self):
        return self.band - self.max_angle_gap

    @property
    def within_band(self):
        return self.max_angle_gap <= self.band

    @property
    def power_regime(self):
        return self.max_power_gap < 1.0

    @property
    def passed(self):
        return self.within_band and self.power_regime


def alignment_report(rows, cfg):
    inside = [r for r in rows if r.t <= cfg.window]
    gaps = [abs(r.angle_L_Lt - r.angle_L_Lpow) for r in inside]
    power = [r.power_gap for r in inside]
    return AlignmentReport(cfg.window, cfg.band, float(max(gaps)), float(max(power)))


def exp_alignment(cfg):
    """GD and the power iterate side by side over the first ``window`` iterations."""
    P = instance_for(cfg)
    track = MetricsConfig(stride=cfg.stride, decomposition=False, power=True)
    rows = run_gd(P, cfg.window, track).rows
    return rows, alignment_report(rows, cfg)


# -- sweeps --------------------------------------------------------------------

class SweepRow(NamedTuple):
    value: float
    seed: int
    final_loss: float
    final_test_err: float
    iters_to_tau: Optional[int]


SWEEP_COLUMNS = list(SweepRow._fields)


def iterations_to(rows, tau):
    for row in rows:
        if row.test_err <= tau:
            return row.t
    return None


def _sweep_cell(job):
    cfg, param, value, rep = job
    seed = derive_seed(cfg.seed, param, value, rep)
    if param == "alpha":
        P = instance_for(cfg, seed=seed, alpha=value)
    else:
        P = instance_for(cfg, seed=seed, R=int(value))
    track = MetricsConfig(stride=cfg.stride, angles=False, decomposition=False)
    rows = run_gd(P, cfg.iters, track).rows
    last = rows[-1]
    return SweepRow(value, seed, last.loss, last.test_err, iterations_to(rows, cfg.tau))


@dataclass
class SweepResult:
    param: str
    values: tuple
    rows: list

    def cells(self, value):
        return [row for row in self.rows if row.value == value]

    def aggregates(self):
        """Per value: mean/min/max of final test error and mean iterations-to-tau.

        The iteration mean is NaN when any replicate never reached tau.
        """
        out = {}
        for value in self.values:
            cell = self.cells(value)
            errs = [row.final_test_err for row in cell]
            hits = [row.iters_to_tau for row in cell]
            mean_iters = math.nan if any(h is None for h in hits) else float(np.mean(hits))
            out[value] = {"count": len(cell), "mean_test_err": float(np.mean(errs)),
                          "min_test_err": float(np.min(errs)),
                          "max_test_err": float(np.max(errs)), "mean_iters": mean_iters}
        return out


def run_sweep(cfg, param, values, replicates):
    jobs = [(cfg, param, value, rep) for value in values for rep in range(replicates)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_sweep_cell, jobs))
    else:
        rows = [_sweep_cell(job) for job in jobs]
    return SweepResult(param, tuple(values), rows)


def exp_alpha_sweep(cfg):
    return run_sweep(cfg, "alpha", cfg.alpha_grid, cfg.alpha_seeds)


def exp_rank_sweep(cfg):
    return run_sweep(cfg, "R", cfg.rank_grid, cfg.rank_seeds)


@dataclass(frozen=True)
class AlphaTrend:
    spearman: float
    slope: Optional[float]

    @property
    def passed(self):
        return self.slope is not None and self.spearman >= 0.9 and self.slope > 0


def alpha_trend(result):
    """Rank correlation and log-log slope of mean final test error against alpha."""
    agg = result.aggregates()
    alphas = np.array(result.values, dtype=float)
    means = np.array([agg[a]["mean_test_err"] for a in result.values])
    if len(alphas) < 2:
        return AlphaTrend(math.nan, None)
    rho = stats.spearmanr(alphas, means).statistic
    slope = float(np.polyfit(np.log(alphas), np.log(means), 1)[0])
    return AlphaTrend(float(rho), slope)


@dataclass(frozen=True)
class RankTrend:
    mean_iters: tuple
    inversions: int
    missing: bool

    @property
    def passed(self):
        return not self.missing and self.inversions <= 1


def rank_trend(result):
    """Adjacent inversions of mean iterations-to-tau as R grows; any miss fails."""
    agg = result.aggregates()
    order = sorted(result.values)
    means = tuple(agg[v]["mean_iters"] for v in order)
    missing = any(math.isnan(v) for v in means)
    inversions = sum(1 for a, b in zip(means, means[1:]) if b > a)
    return RankTrend(means, inversions, missing)


# -- random-tensor statistics --------------------------------------------------

@dataclass(frozen=True)
class StatReport:
    trials: int
    norm_event: Optional[float]
    bracket_event: Optional[float]
    sigma_min_event: Optional[float]


def sigma_min_floor(r, R, k, epsilon):
    if R > 2 * r:
        return epsilon * math.sqrt(k) * (math.sqrt(R) - math.sqrt(2 * r - 1)) / math.sqrt(R)
    return epsilon * math.sqrt(k) / math.sqrt(r * R)


def stat_random_tensor_checks(trials, seed, n=10, R=200, k=4, r=3, epsilon=0.1):
    """Frequencies of three events for Gaussian tensors with ``N(0, 1/R)`` entries.

    * ``||U|| <= 3 sqrt(k max(n, R) / R)`` for ``U`` of size n x R x k;
    * ``||U^T * V1||_F / sqrt(k)`` in ``[0.5, 2]`` for the unit column
      ``V1 = e_1`` carried on the identity tube;
    * ``sigma_min(G) >= floor(epsilon)`` for ``G`` of size r x R x k.
    """
    if trials == 0:
        return StatReport(0, None, None, None)
    norm_cap = 3.0 * math.sqrt(k * max(n, R) / R)
    floor = sigma_min_floor(r, R, k, epsilon)
    hits = np.zeros(3)
    std = 1.0 / math.sqrt(R)
    for i in range(trials):
        U = random_gaussian(n, R, k, std, derive_seed(seed, "stat-U", i))
        hits[0] += spectral_norm(U) <= norm_cap
        # U^T * V1 is the first horizontal slice of U transposed
        proj = float(np.linalg.norm(U[0])) / math.sqrt(k)
        hits[1] += 0.5 <= proj <= 2.0
        G = random_gaussian(r, R, k, std, derive_seed(seed, "stat-G", i))
        hits[2] += sigma_min_tensor(G) >= floor
    freq = hits / trials
    return StatReport(trials, float(freq[0]), float(freq[1]), float(freq[2]))


def exp_rip(cfg):
    E = sample_ensemble(cfg.n, cfg.k, cfg.m, derive_seed(cfg.seed, "sensing"))
    return rip_estimate(E, cfg.rip_rank, cfg.trials, derive_seed(cfg.seed, "rip"))


# -- CSV rendering and reruns ----------------------------------------------------

def provenance(cfg, experiment):
    return [("experiment", experiment)] + cfg.items()


def trace_csv(cfg, experiment, rows):
    return render_csv(provenance(cfg, experiment), IterateMetrics.columns(cfg.k),
                      [r.flat() for r in rows])


def sweep_csv(cfg, experiment, result):
    return render_csv(provenance(cfg, experiment) + [("param", result.param)],
                      SWEEP_COLUMNS, [list(row) for row in result.rows])


def stats_csv(cfg, experiment, report):
    rows = [["norm_event", report.norm_event], ["bracket_event", report.bracket_event],
            ["sigma_min_event", report.sigma_min_event]]
    return render_csv(provenance(cfg, experiment), ["event", "frequency"], rows)


def rip_csv(cfg, experiment, bounds):
    return render_csv(provenance(cfg, experiment), ["delta_lo", "delta_hi"], [list(bounds)])


def run_experiment(cfg, experiment):
    """Execute ``experiment`` and return ``(csv_text, payload)``."""
    if experiment == "run":
        run = exp_run(cfg)
        return trace_csv(cfg, experiment, run.rows), run
    if experiment == "power":
        rows, report = exp_alignment(cfg)
        return trace_csv(cfg, experiment, rows), (rows, report)
    if experiment == "two-stage":
        rows, report = exp_two_stage(cfg)
        return trace_csv(cfg, experiment, rows), (rows, report)
    if experiment == "sweep-alpha":
        result = exp_alpha_sweep(cfg)
        return sweep_csv(cfg, experiment, result), result
    if experiment == "sweep-rank":
        result = exp_rank_sweep(cfg)
        return sweep_csv(cfg, experiment, result), result
    if experiment == "stats":
        report = stat_random_tensor_checks(cfg.trials, cfg.seed, cfg.n, cfg.R, cfg.k, cfg.r,
                                           cfg.epsilon)
        return stats_csv(cfg, experiment, report), report
    if experiment == "rip-check":
        bounds = exp_rip(cfg)
        return rip_csv(cfg, experiment, bounds), bounds
    raise FormatError(f"unknown experiment {experiment!r}")


def config_from_csv(text):
    """``(experiment, RunConfig)`` recovered from a CSV provenance block."""
    meta, _, _ = parse_csv(text)
    keys = {f for f, _ in RunConfig().items()}
    experiment = dict(meta).get("experiment")
    if experiment is None:
        raise FormatError("CSV lacks an 'experiment' provenance line")
    return experiment, config_from_items([(k, v) for k, v in meta if k in keys])


def rerun_csv(text):
    """Re-execute the experiment described by a CSV header and return fresh CSV text."""
    experiment, cfg = config_from_csv(text)
    return run_experiment(cfg, experiment)[0]


# -- recomputation from files ------------------------------------------------------

def trace_columns(text):
    _, columns, rows = parse_csv(text)
    return {name: [row[i] for row in rows] for i, name in enumerate(columns)}


def stage_report_from_csv(text):
    _, cfg = config_from_csv(text)
    cols = trace_columns(text)
    return stage_report(cols["t"], cols["test_err"], cols["angle_L_Lt"], cfg)


def sweep_from_csv(text):
    meta, _, raw = parse_csv(text)
    _, cfg = config_from_csv(text)
    param = dict(meta)["param"]
    grid = cfg.alpha_grid if param == "alpha" else cfg.rank_grid
    rows = [SweepRow(float(v) if param == "alpha" else int(v), int(s), float(fl), float(fe),
                     None if it is None else int(it)) for v, s, fl, fe, it in raw]
    return SweepResult(param, tuple(grid), rows)
