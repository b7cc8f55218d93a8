"""Fast invariant suite behind ``tubal selftest``."""

import numpy as np

from . import algebra as alg
from .config import RunConfig, parse_config
from .experiments import rerun_csv, run_experiment
from .sensing import adjoint, forward, normal_op, sample_ensemble
from .solver import (MetricsConfig, gd_update, gd_update_normal_form, gradient, loss,
                     make_instance, run_gd, signal_noise_decompose, state_at)
from .storage import decode_tensors, encode_tensors
from .tsvd import slice_spectrum, tsvd


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b)))


def check_tprod(rng):
    worst = 0.0
    for k in (1, 3, 4, 8):
        A = rng.standard_normal((4, 3, k))
        B = rng.standard_normal((3, 5, k))
        worst = max(worst, _rel(alg.tprod(A, B), alg.tprod_naive(A, B)))
    return worst <= 1e-11, f"max relative gap {worst:.2e}"


def check_tsvd(rng):
    worst = 0.0
    for k in (1, 2, 5):
        T = rng.standard_normal((6, 4, k))
        F = tsvd(T)
        worst = max(worst, _rel(F.reconstruct(), T))
        eye = alg.tidentity(4, k)
        worst = max(worst, _rel(alg.tprod(alg.ttranspose(F.U), F.U), eye))
        spec = slice_spectrum(T)
        if np.any(np.diff(spec, axis=1) > 1e-12):
            return False, "slice spectrum not sorted"
    return worst <= 1e-9, f"max relative error {worst:.2e}"


def check_transpose(rng):
    A = rng.standard_normal((3, 4, 5))
    B = rng.standard_normal((4, 2, 5))
    lhs = alg.ttranspose(alg.tprod(A, B))
    rhs = alg.tprod(alg.ttranspose(B), alg.ttranspose(A))
    gap = _rel(lhs, rhs) + _rel(alg.ttranspose(alg.ttranspose(A)), A)
    return gap <= 1e-12, f"gap {gap:.2e}"


def check_sensing(rng):
    E = sample_ensemble(5, 3, 40, 11)
    Z = rng.standard_normal((5, 5, 3))
    Z = 0.5 * (Z + alg.ttranspose(Z))
    y = rng.standard_normal(40)
    adj = abs(np.dot(forward(E, Z), y) - alg.inner(Z, adjoint(E, y)))
    W = rng.standard_normal((5, 5, 3))
    sa = abs(alg.inner(normal_op(E, Z), W) - alg.inner(Z, normal_op(E, W)))
    return max(adj, sa) <= 1e-10, f"adjoint gap {adj:.2e}, self-adjoint gap {sa:.2e}"


def check_gradient(rng):
    P = make_instance(6, 2, 3, 4, 80, 0.5, 1e-2, 5)
    U = rng.standard_normal((6, 4, 3))
    G = gradient(P, U)
    worst = 0.0
    for _ in range(3):
        D = rng.standard_normal(U.shape)
        h = 1e-6 * (1 + np.linalg.norm(U))
        fd = (loss(P, U + h * D) - loss(P, U - h * D)) / (2 * h)
        an = alg.inner(G, D)
        worst = max(worst, abs(fd - an) / max(1.0, abs(an)))
    form = _rel(gd_update(P, U), gd_update_normal_form(P, U))
    return worst <= 1e-5 and form <= 1e-10, f"fd gap {worst:.2e}, update forms {form:.2e}"


def check_decomposition(rng):
    P = make_instance(6, 2, 3, 8, 80, 1e-2, 5e-2, 9)
    S = state_at(P, 40)
    D = signal_noise_decompose(P, S.U)
    total = _rel(D.signal + D.noise, S.U)
    leak = alg.spectral_norm(alg.tprod(alg.ttranspose(P.V_X), D.noise))
    ok = total <= 1e-9 and leak <= 1e-8 * alg.spectral_norm(S.U)
    return ok, f"sum gap {total:.2e}, leak {leak:.2e}"


def check_container(rng):
    T = rng.standard_normal((3, 2, 4))
    (back,), seed = decode_tensors(encode_tensors([T], 77))
    return bool(np.array_equal(back, T) and seed == 77), "bit-exact round trip"


def check_reproducible(rng):
    cfg = parse_config("n = 5\nr = 2\nR = 6\nm = 60\nk = 3\niters = 30\nstride = 5\n"
                       "mu = 0.05\nalpha = 0.01")
    text, _ = run_experiment(cfg, "run")
    again = rerun_csv(text)
    return text == again, "CSV rerun byte-identical" if text == again else "CSV differs"


def check_defaults(rng):
    cfg = parse_config("")
    ok = (cfg.n, cfg.k, cfg.r, cfg.m, cfg.mu) == (10, 4, 3, 254, 1e-5) and cfg == RunConfig()
    return ok, "empty config yields the default configuration"


def check_run(rng):
    P = make_instance(5, 2, 3, 6, 60, 1e-3, 5e-2, 3)
    rows = run_gd(P, 20, MetricsConfig(stride=5)).rows
    finite = all(np.isfinite([r.loss, r.test_err]).all() for r in rows)
    return finite and [r.t for r in rows] == [0, 5, 10, 15, 20], f"{len(rows)} rows"


CHECKS = [check_tprod, check_tsvd, check_transpose, check_sensing, check_gradient,
          check_decomposition, check_container, check_reproducible, check_defaults, check_run]


def run_selftest(seed=0, out=print):
    rng = np.random.default_rng(seed)
    failures = 0
    for check in CHECKS:
        name = check.__name__.removeprefix("check_")
        try:
            ok, detail = check(rng)
        except Exception as exc:  # a crash is a failed check, reported like one
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        failures += not ok
        out(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return failures
