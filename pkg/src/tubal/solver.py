"""Factorized gradient descent for low tubal-rank recovery.

The iteration is ``U <- U + mu * A*(y - A(U*U^T)) * U``, equivalently
``U <- [I + mu * A*A(X*X^T - U*U^T)] * U``. Because ``grad loss = 4 *
A*(A(U*U^T) - y) * U`` this is a gradient step with rate ``mu / 4``.
"""

import math
from dataclasses import dataclass, field, fields
from functools import cached_property

import numpy as np

from .algebra import (derive_seed, fro_norm, gram, half_spectrum, random_gaussian,
                      sigma_min_tensor, spectral_norm, tidentity, tprod, ttranspose)
from .errors import Divergence, InvalidDims, RankDeficientSignal
from .sensing import adjoint, forward, normal_op, sample_ensemble
from .tsvd import leading_columns, orth_complement, principal_angle, slice_spectrum, tsvd

NORMALIZATIONS = ("spectral", "frobenius")
DIVERGENCE_FACTOR = 1e6
SIGNAL_RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    X: np.ndarray
    ensemble: object
    y: np.ndarray
    R: int
    alpha: float
    mu: float
    r: int
    seed: int
    normalization: str = "spectral"

    def __post_init__(self):
        if self.R < self.r:
            raise InvalidDims(f"R={self.R} must be >= r={self.r}")
        if self.alpha <= 0 or self.mu <= 0:
            raise InvalidDims("alpha and mu must be positive")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def k(self):
        return self.X.shape[2]

    @cached_property
    def target(self):
        """Ground truth ``X * X^T``."""
        return gram(self.X)

    @cached_property
    def target_norm(self):
        return fro_norm(self.target)

    @cached_property
    def x_spectral(self):
        return spectral_norm(self.X)

    @cached_property
    def M(self):
        """``A*A(X * X^T)``; the power-method operator is ``I + mu * M``."""
        return adjoint(self.ensemble, self.y)

    @cached_property
    def V_X(self):
        return leading_columns(self.X, self.r)

    @cached_property
    def L(self):
        """Leading ``r`` tensor-columns of ``M``."""
        return leading_columns(self.M, self.r)

    @cached_property
    def sigma_r_tube_X(self):
        return np.fft.ifft(slice_spectrum(self.X)[:, self.r - 1]).real

    def validate(self):
        fresh = forward(self.ensemble, self.target)
        scale = max(1.0, float(np.linalg.norm(fresh)))
        if np.linalg.norm(fresh - self.y) > 1e-12 * scale:
            raise InvalidDims("measurements do not match forward(X * X^T)")
        return self


def make_instance(n, r, k, R, m, alpha, mu, seed, normalization="spectral"):
    """Sample a ground truth ``X`` (n x r x k), an ensemble, and measurements."""
    if min(n, r, k, m) < 1:
        raise InvalidDims("n, r, k and m must be positive")
    if r > n:
        raise InvalidDims(f"r={r} exceeds n={n}")
    if R < r:
        raise InvalidDims(f"R={R} must be >= r={r}")
    if normalization not in NORMALIZATIONS:
        raise InvalidDims(f"normalization must be one of {NORMALIZATIONS}")
    X = random_gaussian(n, r, k, 1.0, derive_seed(seed, "truth"))
    scale = spectral_norm(X) if normalization == "spectral" else fro_norm(X)
    X = X / scale
    ensemble = sample_ensemble(n, k, m, derive_seed(seed, "sensing"))
    y = forward(ensemble, gram(X))
    return ProblemInstance(X, ensemble, y, int(R), float(alpha), float(mu), int(r),
                           int(seed), normalization)


@dataclass(frozen=True)
class GDState:
    t: int
    U: np.ndarray
    residual: np.ndarray  # y - A(U * U^T)


def residual_of(P, U):
    return P.y - forward(P.ensemble, gram(U))


def init_state(P):
    """``U_0`` with i.i.d. ``N(0, alpha^2 / R)`` entries."""
    U = random_gaussian(P.n, P.R, P.k, P.alpha / math.sqrt(P.R), derive_seed(P.seed, "init"))
    return GDState(0, U, residual_of(P, U))


def loss(P, U):
    r = residual_of(P, U)
    return float(np.dot(r, r))


def gradient(P, U):
    """Euclidean gradient of the loss: ``4 * A*(A(U*U^T) - y) * U``."""
    return 4.0 * tprod(adjoint(P.ensemble, -residual_of(P, U)), U)


def gd_update(P, U, residual=None):
    """One iteration in residual form."""
    if residual is None:
        residual = residual_of(P, U)
    return U + P.mu * tprod(adjoint(P.ensemble, residual), U)


def gd_update_normal_form(P, U):
    """One iteration written as ``[I + mu * A*A(XX^T - UU^T)] * U``."""
    op = tidentity(P.n, P.k) + P.mu * normal_op(P.ensemble, P.target - gram(U))
    return tprod(op, U)


def gd_step(P, S):
    U = gd_update(P, S.U, S.residual)
    t = S.t + 1
    if not np.all(np.isfinite(U)):
        raise Divergence(f"non-finite iterate at t={t}", t)
    limit = DIVERGENCE_FACTOR * P.x_spectral
    if fro_norm(U) > limit and spectral_norm(U) > limit:
        raise Divergence(f"||U_t|| exceeded {limit:.3e} at t={t}", t)
    return GDState(t, U, residual_of(P, U))


def power_step(P, U):
    return U + P.mu * tprod(P.M, U)


def power_iterates(P, U0, t):
    """``(I + mu*M)^t * U0`` by repeated application."""
    U = U0
    for _ in range(t):
        U = power_step(P, U)
    return U


# -- signal / noise decomposition -------------------------------------------

@dataclass(frozen=True)
class Decomposition:
    Wt: np.ndarray
    Wperp: np.ndarray
    signal: np.ndarray
    noise: np.ndarray


def signal_noise_decompose(P, U):
    """Split ``U`` into ``U*W*W^T`` (signal) and ``U*W_perp*W_perp^T`` (noise).

    ``W`` holds the right singular tensor-columns of ``V_X^T * U``.
    """
    Y = tprod(ttranspose(P.V_X), U)
    spec = slice_spectrum(Y)
    floor = SIGNAL_RANK_TOL * spectral_norm(U)
    weakest = spec[:, P.r - 1]
    j = int(np.argmin(weakest))
    if weakest[j] <= floor:
        raise RankDeficientSignal(
            f"V_X^T * U loses rank on slice {j} (sigma_r={weakest[j]:.3e})", j, float(weakest[j]))
    W = tsvd(Y, reduced=True).V
    Wperp = orth_complement(W)
    signal = tprod(tprod(U, W), ttranspose(W))
    noise = tprod(tprod(U, Wperp), ttranspose(Wperp))
    return Decomposition(W, Wperp, signal, noise)


# -- metrics ----------------------------------------------------------------

@dataclass(frozen=True)
class MetricsConfig:
    stride: int = 10
    angles: bool = True
    decomposition: bool = True
    power: bool = False
    spectra: bool = False


@dataclass(frozen=True)
class IterateMetrics:
    t: int
    loss: float
    test_err: float
    sig_tube_err: float
    angle_L_Lt: float = math.nan
    angle_X_Lt: float = math.nan
    angle_X_UW: float = math.nan
    noise_spec_norm: float = math.nan
    noise_alignment: float = math.nan
    sigma_r: tuple = ()
    sigma_r1: tuple = ()
    power_gap: float = math.nan
    angle_L_Lpow: float = math.nan
    spectrum: tuple = field(default=(), compare=False, repr=False)

    @classmethod
    def columns(cls, k):
        names = []
        for f in fields(cls):
            if f.name == "spectrum":
                continue
            if f.name in ("sigma_r", "sigma_r1"):
                names.extend(f"{f.name}_{j + 1}" for j in range(k))
            else:
                names.append(f.name)
        return names

    def flat(self):
        values = []
        for f in fields(self):
            if f.name == "spectrum":
                continue
            value = getattr(self, f.name)
            if f.name in ("sigma_r", "sigma_r1"):
                values.extend(value)
            else:
                values.append(value)
        return values

    @classmethod
    def from_flat(cls, values, k):
        it = iter(values)
        kwargs = {}
        for f in fields(cls):
            if f.name == "spectrum":
                continue
            if f.name in ("sigma_r", "sigma_r1"):
                kwargs[f.name] = tuple(float(next(it)) for _ in range(k))
            elif f.name == "t":
                kwargs[f.name] = int(next(it))
            else:
                kwargs[f.name] = float(next(it))
        return cls(**kwargs)


def compute_metrics(P, S, power=None, config=MetricsConfig()):
    """Every tracked quantity for state ``S``; ``power`` is the power iterate at ``S.t``."""
    U = S.U
    r = P.r
    UU = gram(U)
    spec = slice_spectrum(U)
    width = spec.shape[1]
    tube = np.fft.ifft(spec[:, r - 1]).real
    out = {
        "t": S.t,
        "loss": float(np.dot(S.residual, S.residual)),
        "test_err": fro_norm(UU - P.target) / P.target_norm,
        "sig_tube_err": float(np.linalg.norm(tube - P.sigma_r_tube_X)
                              / np.linalg.norm(P.sigma_r_tube_X)),
        "sigma_r": tuple(float(v) for v in spec[:, r - 1]),
        "sigma_r1": tuple(float(v) for v in (spec[:, r] if r < width else np.zeros(P.k))),
    }
    if config.spectra:
        out["spectrum"] = tuple(map(tuple, spec.tolist()))
    if config.angles:
        Lt = leading_columns(U, r)
        out["angle_L_Lt"] = principal_angle(P.L, Lt)
        out["angle_X_Lt"] = principal_angle(P.V_X, Lt)
    if config.decomposition:
        try:
            dec = signal_noise_decompose(P, U)
        except RankDeficientSignal:
            pass
        else:
            UW = tprod(U, dec.Wt)
            out["angle_X_UW"] = principal_angle(P.V_X, leading_columns(UW, r))
            out["noise_spec_norm"] = spectral_norm(tprod(U, dec.Wperp))
            leak = spectral_norm(tprod(ttranspose(P.V_X), dec.noise))
            out["noise_alignment"] = leak / spectral_norm(U)
    if power is not None:
        out["power_gap"] = spectral_norm(U - power) / spectral_norm(power)
        out["angle_L_Lpow"] = principal_angle(P.L, leading_columns(power, r))
    return IterateMetrics(**out)


@dataclass
class GDRun:
    rows: list
    state: GDState
    power: np.ndarray = None


def run_gd(P, iters, track=MetricsConfig()):
    """Run ``iters`` iterations, recording metrics at ``t = 0, stride, 2*stride, ...``.

    The final iterate is always recorded. With ``track.power`` the power
    iterate is advanced alongside and compared directly.
    """
    S = init_state(P)
    power = S.U if track.power else None
    rows = [compute_metrics(P, S, power, track)]
    for _ in range(iters):
        S = gd_step(P, S)
        if power is not None:
            power = power_step(P, power)
        if S.t % track.stride == 0 or S.t == iters:
            rows.append(compute_metrics(P, S, power, track))
    return GDRun(rows, S, power)


# -- spectral-stage diagnostic ------------------------------------------------

@dataclass(frozen=True)
class SpectralStageReport:
    t: int
    error_norm: float          # ||U_t - power iterate||
    power_norm: float
    past_t_star: bool          # error exceeds the power iterate: bounds no longer apply
    hypothesis: tuple          # per slice
    lower_lhs: tuple           # sigma_r(U_t slice)
    lower_rhs: tuple
    upper_lhs: tuple           # sigma_{r+1}(U_t slice)
    upper_rhs: tuple
    angle: float               # ||V_{L perp}^T * V_{L_t}||
    angle_bound: float

    @property
    def lower_ok(self):
        return tuple(a >= b for a, b in zip(self.lower_lhs, self.lower_rhs))

    @property
    def upper_ok(self):
        return tuple(a <= b for a, b in zip(self.upper_lhs, self.upper_rhs))

    @property
    def lower_margin(self):
        return tuple(a - b for a, b in zip(self.lower_lhs, self.lower_rhs))

    @property
    def upper_margin(self):
        return tuple(b - a for a, b in zip(self.upper_lhs, self.upper_rhs))

    @property
    def hypothesis_failed(self):
        return self.past_t_star or not all(self.hypothesis)


def power_operator_spectrum(P, t):
    """Per-slice singular values of ``(I + mu*M)^t`` (k x n, descending)."""
    H = half_spectrum(P.M)
    lam = np.linalg.eigvalsh(H)
    vals = np.sort(np.abs(1.0 + P.mu * lam) ** t, axis=1)[:, ::-1]
    rows = np.arange(P.k)
    return vals[np.minimum(rows, P.k - rows)]


def spectral_stage_diagnostic(P, S):
    """Evaluate both per-slice singular-value bounds and the angle bound at ``S.t``.

    Violations are reported, not raised: the bounds only apply while the
    per-slice hypothesis holds and before the gradient iterate departs from
    the power iterate.
    """
    r = P.r
    U0 = init_state(P).U
    base = U0 / P.alpha
    power = power_iterates(P, U0, S.t)
    err = spectral_norm(S.U - power)
    z = power_operator_spectrum(P, S.t)
    z_r = z[:, r - 1]
    z_r1 = z[:, r] if r < z.shape[1] else np.zeros(P.k)
    smin = sigma_min_tensor(tprod(ttranspose(P.L), base))
    norm_base = spectral_norm(base)
    spec = slice_spectrum(S.U)
    s_r = spec[:, r - 1]
    s_r1 = spec[:, r] if r < spec.shape[1] else np.zeros(P.k)
    lower_rhs = P.alpha * z_r * smin - err
    upper_rhs = P.alpha * z_r1 * norm_base + err
    hypothesis = z_r1 * norm_base + err / P.alpha < z_r * smin
    denom = P.alpha * z_r * smin - P.alpha * z_r1 * norm_base - err
    if np.all(denom > 0):
        bound = float(np.max((P.alpha * z_r1 * norm_base + err) / denom))
    else:
        bound = math.inf
    angle = principal_angle(P.L, leading_columns(S.U, r))
    return SpectralStageReport(
        t=S.t, error_norm=err, power_norm=spectral_norm(power),
        past_t_star=bool(err > spectral_norm(power)),
        hypothesis=tuple(bool(h) for h in hypothesis),
        lower_lhs=tuple(map(float, s_r)), lower_rhs=tuple(map(float, lower_rhs)),
        upper_lhs=tuple(map(float, s_r1)), upper_rhs=tuple(map(float, upper_rhs)),
        angle=angle, angle_bound=bound)


def state_at(P, t):
    """Advance from ``U_0`` to iteration ``t``."""
    S = init_state(P)
    while S.t < t:
        S = gd_step(P, S)
    return S
