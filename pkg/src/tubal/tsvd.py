"""t-SVD and the spectral geometry built on it.

Every routine factors only the non-redundant Fourier slices ``0..k//2`` and
recovers the others by conjugation, so assembled factors are exactly real.
Singular vectors are phase-normalized (largest-magnitude entry of each left
vector made real positive) to keep outputs deterministic; when singular
values tie, only the spanned subspaces are meaningful.
"""

from dataclasses import dataclass

import numpy as np

from .algebra import (as_tubal, from_half_spectrum, half_spectrum, real_slices,
                      spectral_norm, tidentity, tprod, ttranspose)
from .errors import (IndexOutOfRange, NotOrthonormal, NumericalFailure,
                     ShapeMismatch, SingularInput)

ORTHO_TOL = 1e-8


@dataclass(frozen=True)
class TSvd:
    """``T = U * S * V^T`` with orthonormal ``U``, ``V`` and f-diagonal ``S``."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    reduced: bool

    def reconstruct(self):
        return tprod(tprod(self.U, self.S), ttranspose(self.V))


def _slice_svd(M, real, full_matrices):
    try:
        if real:
            u, s, vh = np.linalg.svd(M.real, full_matrices=full_matrices)
        else:
            u, s, vh = np.linalg.svd(M, full_matrices=full_matrices)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"slice SVD did not converge: {exc}") from exc
    v = np.conj(vh.T)
    p = min(M.shape)
    if p:
        lead = np.argmax(np.abs(u[:, :p]), axis=0)
        anchor = u[lead, np.arange(p)]
        phase = np.ones(p, dtype=anchor.dtype)
        nonzero = np.abs(anchor) > 0
        phase[nonzero] = anchor[nonzero] / np.abs(anchor[nonzero])
        u[:, :p] = u[:, :p] * np.conj(phase)
        v[:, :p] = v[:, :p] * np.conj(phase)
    return u, s, v


def tsvd(T, reduced=True):
    """Compute the t-SVD of ``T``.

    With ``reduced`` the factors are ``n1 x p``, ``p x p`` and ``n2 x p``
    where ``p = min(n1, n2)``; otherwise ``U`` and ``V`` are square and ``S``
    is ``n1 x n2``.
    """
    T = as_tubal(T)
    n1, n2, k = T.shape
    H = half_spectrum(T)
    p = min(n1, n2)
    ucols = p if reduced else n1
    vcols = p if reduced else n2
    Uh = np.zeros((H.shape[0], n1, ucols), dtype=complex)
    Vh = np.zeros((H.shape[0], n2, vcols), dtype=complex)
    Sh = np.zeros((H.shape[0], ucols, vcols), dtype=complex)
    real = real_slices(k)
    for j in range(H.shape[0]):
        u, s, v = _slice_svd(H[j], j in real, not reduced)
        Uh[j] = u
        Vh[j] = v
        Sh[j, np.arange(p), np.arange(p)] = s
    return TSvd(from_half_spectrum(Uh, k), from_half_spectrum(Sh, k),
                from_half_spectrum(Vh, k), reduced)


def slice_spectrum(T):
    """``k x min(n1, n2)`` array; row ``j`` holds the singular values of slice ``j``."""
    T = as_tubal(T)
    k = T.shape[2]
    H = half_spectrum(T)
    if min(H.shape[1:]) == 0:
        return np.zeros((k, 0))
    s = np.linalg.svd(H, compute_uv=False)
    rows = np.arange(k)
    return s[np.minimum(rows, k - rows)]


def singular_tube(T, i):
    """The ``i``-th (0-based) diagonal tube of ``S`` in the t-SVD of ``T``."""
    spec = slice_spectrum(T)
    if not 0 <= i < spec.shape[1]:
        raise IndexOutOfRange(f"tube index {i} outside 0..{spec.shape[1] - 1}")
    return np.fft.ifft(spec[:, i]).real


def tubal_rank(T, tol=None):
    """Number of singular tubes whose 2-norm exceeds ``tol``.

    ``tol`` defaults to ``1e-9 * spectral_norm(T)``.
    """
    spec = slice_spectrum(T)
    if tol is None:
        tol = 1e-9 * (spec.max() if spec.size else 0.0)
    k = spec.shape[0]
    # Parseval: ||ifft(col)||_2 = ||col||_2 / sqrt(k)
    tube_norms = np.linalg.norm(spec, axis=0) / np.sqrt(k)
    return int(np.count_nonzero(tube_norms > tol))


def noninvertible_tubes(T, tol=None):
    """Indices of nonzero singular tubes that vanish on some Fourier slice.

    Such tubes make the range and kernel share generators; they are only
    reported, never treated specially.
    """
    spec = slice_spectrum(T)
    if tol is None:
        tol = 1e-9 * (spec.max() if spec.size else 0.0)
    k = spec.shape[0]
    tube_norms = np.linalg.norm(spec, axis=0) / np.sqrt(k)
    flagged = (tube_norms > tol) & (spec.min(axis=0) <= tol)
    return [int(i) for i in np.flatnonzero(flagged)]


def condition_number(T):
    spec = slice_spectrum(T)
    if spec.size == 0:
        raise SingularInput("empty tensor has no condition number")
    low = spec[:, -1].min()
    if low < 1e-300:
        raise SingularInput(f"smallest slice singular value {low:.3e}")
    return float(spec[:, 0].max() / low)


def check_orthonormal(W, tol=ORTHO_TOL, name="W"):
    W = as_tubal(W, name)
    n, p, k = W.shape
    gap = spectral_norm(tprod(ttranspose(W), W) - tidentity(p, k)) if p else 0.0
    if gap > tol:
        raise NotOrthonormal(f"{name}^T * {name} deviates from identity by {gap:.3e}")
    return W


def orth_complement(W):
    """Orthonormal ``n x (n-p) x k`` tensor spanning the complement of ``W``."""
    W = check_orthonormal(W)
    n, p, k = W.shape
    H = half_spectrum(W)
    C = np.zeros((H.shape[0], n, n - p), dtype=complex)
    real = real_slices(k)
    for j in range(H.shape[0]):
        if p == 0:
            C[j] = np.eye(n)
            continue
        u, _, _ = _slice_svd(H[j], j in real, True)
        C[j] = u[:, p:]
    return from_half_spectrum(C, k)


def principal_angle(V1, V2):
    """Largest principal angle (as a sine) between two tensor-column subspaces.

    Equals ``||V1_perp^T * V2||``, i.e. the maximum over Fourier slices of
    the spectral norm of the slice products.
    """
    V1 = check_orthonormal(V1, name="V1")
    V2 = check_orthonormal(V2, name="V2")
    if V1.shape[0] != V2.shape[0] or V1.shape[2] != V2.shape[2]:
        raise ShapeMismatch(f"subspaces {V1.shape} and {V2.shape} are not comparable")
    perp = orth_complement(V1)
    if perp.shape[1] == 0 or V2.shape[1] == 0:
        return 0.0
    P = half_spectrum(perp)
    Q = half_spectrum(V2)
    prods = np.conj(np.swapaxes(P, 1, 2)) @ Q
    return float(np.linalg.svd(prods, compute_uv=False).max())


def leading_columns(T, r):
    """First ``r`` left singular tensor-columns of ``T`` (reduced t-SVD)."""
    U = tsvd(T, reduced=True).U
    if r > U.shape[1]:
        raise IndexOutOfRange(f"requested {r} columns from width {U.shape[1]}")
    return np.ascontiguousarray(U[:, :r, :])
