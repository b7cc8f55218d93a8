"""Gaussian tubal sensing operator, its adjoint, and RIP probes."""

from dataclasses import dataclass, field

import numpy as np

from .algebra import (as_tubal, derive_seed, gram, nuclear_norm, random_gaussian,
                      spectral_norm, ttranspose)
from .errors import DivisionByZero, InvalidDims, InvalidRank, ShapeMismatch

SYMMETRY_TOL = 1e-12


def symmetrize(T):
    return 0.5 * (T + ttranspose(T))


@dataclass(frozen=True)
class MeasurementEnsemble:
    """``m`` tubal-symmetric ``n x n x k`` sensing tensors.

    ``tensors`` has shape ``(m, n, n, k)``. ``matrix`` caches the tensors
    flattened row-wise so ``forward`` and ``adjoint`` are single mat-vecs.
    """

    tensors: np.ndarray
    seed: int = 0
    matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tensors = np.ascontiguousarray(self.tensors, dtype=np.float64)
        if tensors.ndim != 4 or tensors.shape[1] != tensors.shape[2]:
            raise InvalidDims(f"ensemble must be (m, n, n, k), got {tensors.shape}")
        if not np.all(np.isfinite(tensors)):
            raise InvalidDims("ensemble has non-finite entries")
        tensors.setflags(write=False)
        object.__setattr__(self, "tensors", tensors)
        matrix = tensors.reshape(tensors.shape[0], -1)
        object.__setattr__(self, "matrix", matrix)

    @property
    def m(self):
        return self.tensors.shape[0]

    @property
    def n(self):
        return self.tensors.shape[1]

    @property
    def k(self):
        return self.tensors.shape[3]

    def symmetry_residual(self):
        """Largest ``||A_i - A_i^T||_F / ||A_i||_F`` over the ensemble."""
        worst = 0.0
        for A in self.tensors:
            scale = np.linalg.norm(A)
            if scale > 0:
                worst = max(worst, np.linalg.norm(A - ttranspose(A)) / scale)
        return worst

    def validate(self):
        res = self.symmetry_residual()
        if res > SYMMETRY_TOL:
            raise InvalidDims(f"sensing tensors not tubal-symmetric (residual {res:.2e})")
        return self


def sample_ensemble(n, k, m, seed):
    """Draw ``A_i`` with i.i.d. ``N(0, 1/m)`` entries, then symmetrize each.

    For symmetric ``Z`` only the symmetric part of ``A_i`` enters
    ``<A_i, Z>``, so symmetrizing leaves measurements of symmetric targets
    unchanged in distribution.
    """
    if n < 1 or k < 1 or m < 1:
        raise InvalidDims(f"need n, k, m >= 1 (got n={n}, k={k}, m={m})")
    raw = random_gaussian(n, n * m, k, 1.0 / np.sqrt(m), derive_seed(seed, "ensemble"))
    tensors = np.stack([symmetrize(raw[:, i * n:(i + 1) * n, :]) for i in range(m)])
    return MeasurementEnsemble(tensors, seed)


def _check_target(E, Z):
    Z = as_tubal(Z, "Z")
    if Z.shape != (E.n, E.n, E.k):
        raise ShapeMismatch(f"Z has shape {Z.shape}, ensemble expects {(E.n, E.n, E.k)}")
    return Z


def forward(E, Z):
    """``y_i = <A_i, Z>`` for every sensing tensor."""
    Z = _check_target(E, Z)
    return E.matrix @ Z.ravel()


def adjoint(E, y):
    """``sum_i y_i A_i``."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (E.m,):
        raise ShapeMismatch(f"expected {E.m} measurements, got shape {y.shape}")
    return (E.matrix.T @ y).reshape(E.n, E.n, E.k)


def normal_op(E, Z):
    return adjoint(E, forward(E, Z))


def orthonormal_symmetric_basis(n, k, seed=0):
    """Ensemble whose tensors are an orthonormal basis of the symmetric space.

    Its forward map is an exact isometry on tubal-symmetric tensors.
    """
    dim = n * n * k
    basis = []
    seen = set()
    for flat in range(dim):
        if flat in seen:
            continue
        e = np.zeros(dim)
        e[flat] = 1.0
        E = e.reshape(n, n, k)
        Et = ttranspose(E)
        partner = int(np.flatnonzero(Et.ravel())[0])
        seen.update((flat, partner))
        if partner == flat:
            basis.append(E)
        else:
            basis.append((E + Et) / np.sqrt(2.0))
    return MeasurementEnsemble(np.stack(basis), seed)


def random_symmetric_lowrank(n, k, rank, seed):
    """``G*G^T - H*H^T`` with Gaussian ``G`` (width ceil(rank/2)) and ``H`` (floor).

    The result is symmetric, indefinite for ``rank >= 2``, with tubal rank
    at most ``rank``.
    """
    wide = (rank + 1) // 2
    narrow = rank // 2
    G = random_gaussian(n, wide, k, 1.0, derive_seed(seed, "G"))
    Z = gram(G)
    if narrow:
        H = random_gaussian(n, narrow, k, 1.0, derive_seed(seed, "H"))
        Z = Z - gram(H)
    return Z


def rip_estimate(E, rank, trials, seed):
    """Monte-Carlo range of ``||A(Z)||^2 / ||Z||_F^2 - 1`` over random rank-``rank`` ``Z``.

    The returned ``(delta_lo, delta_hi)`` only lower-bounds the true RIP
    constant: it is the extreme deviation seen on ``trials`` random probes,
    not a supremum over the whole set.
    """
    if trials < 1:
        raise InvalidRank("trials must be >= 1")
    if not 1 <= rank <= E.n:
        raise InvalidRank(f"rank {rank} outside 1..{E.n}")
    ratios = np.empty(trials)
    for t in range(trials):
        Z = random_symmetric_lowrank(E.n, E.k, rank, derive_seed(seed, "rip", t))
        y = forward(E, Z)
        ratios[t] = np.dot(y, y) / np.sum(Z * Z) - 1.0
    return float(ratios.min()), float(ratios.max())


def rip_delta(E, rank, trials, seed):
    lo, hi = rip_estimate(E, rank, trials, seed)
    return max(abs(lo), abs(hi))


def _residual_spectral(E, Z):
    Z = _check_target(E, Z)
    return spectral_norm(Z - normal_op(E, Z)), Z


def s2s_residual(E, Z):
    """``||(I - A*A)(Z)|| / ||Z||`` (spectral over spectral)."""
    num, Z = _residual_spectral(E, Z)
    den = spectral_norm(Z)
    if den == 0:
        raise DivisionByZero("spectral norm of Z is zero")
    return num / den


def s2n_residual(E, Z):
    """``||(I - A*A)(Z)|| / ||Z||_*`` (spectral over tubal nuclear)."""
    num, Z = _residual_spectral(E, Z)
    den = nuclear_norm(Z)
    if den == 0:
        raise DivisionByZero("nuclear norm of Z is zero")
    return num / den
