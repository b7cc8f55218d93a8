"""Order-3 tubal tensors: mode-3 DFT, t-product, transpose, norms.

A tubal tensor is a real ``float64`` numpy array of shape ``(n1, n2, k)``;
frontal slice ``j`` is ``T[:, :, j]`` and tube ``(i, i')`` is ``T[i, i', :]``.
Flattened, entries follow the slice-major layout used by the binary
container (``T.ravel(order="F")``): entry ``(i, i', j)`` sits at offset
``j*n1*n2 + i'*n1 + i``.

The Fourier representation is a complex array of shape ``(k, n1, n2)``
whose ``j``-th entry is the slice ``T̄^(j)`` of the unnormalized forward
DFT along the tubes. Inverse transforms carry the ``1/k`` factor.
"""

import zlib

import numpy as np

from .errors import InvalidTensor, ShapeMismatch, SymmetryViolation

IMAG_TOL = 1e-8


def as_tubal(T, name="tensor"):
    """Validate ``T`` and return it as a float64 order-3 array."""
    arr = np.asarray(T, dtype=np.float64)
    if arr.ndim != 3:
        raise InvalidTensor(f"{name} must be order-3, got shape {arr.shape}")
    if arr.shape[2] < 1:
        raise InvalidTensor(f"{name} needs tube length k >= 1")
    if not np.all(np.isfinite(arr)):
        raise InvalidTensor(f"{name} has non-finite entries")
    return arr


def from_data(data, n1, n2, k):
    """Build a tensor from a flat slice-major buffer."""
    data = np.asarray(data, dtype=np.float64)
    if data.size != n1 * n2 * k:
        raise InvalidTensor(f"expected {n1 * n2 * k} values, got {data.size}")
    # C-contiguous so results do not depend on how the tensor was loaded
    return as_tubal(np.ascontiguousarray(data.reshape((n1, n2, k), order="F")))


def to_data(T):
    return np.ascontiguousarray(T).ravel(order="F")


# -- Fourier domain ----------------------------------------------------------

def dft_tubes(T):
    """Unnormalized DFT of every tube; returns slices stacked as ``(k, n1, n2)``."""
    T = as_tubal(T)
    return np.moveaxis(np.fft.fft(T, axis=2), 2, 0)


def is_conjugate_symmetric(F, tol=1e-12):
    F = np.asarray(F)
    k = F.shape[0]
    mirror = np.conj(F[(-np.arange(k)) % k])
    scale = max(np.linalg.norm(F), np.finfo(float).tiny)
    return np.linalg.norm(F - mirror) <= tol * scale


def idft_tubes(F):
    """Inverse of :func:`dft_tubes`; rejects spectra of non-real tensors."""
    F = np.asarray(F, dtype=np.complex128)
    if F.ndim != 3:
        raise InvalidTensor(f"Fourier blocks must be (k, n1, n2), got {F.shape}")
    T = np.fft.ifft(np.moveaxis(F, 0, 2), axis=2)
    k = F.shape[0]
    # real-domain norm is ||F||_F / sqrt(k)
    limit = IMAG_TOL * np.linalg.norm(F) / np.sqrt(k)
    residue = np.linalg.norm(T.imag)
    if residue > limit:
        raise SymmetryViolation(
            f"imaginary residue {residue:.3e} exceeds {limit:.3e}; "
            "blocks are not conjugate symmetric")
    return np.ascontiguousarray(T.real)


def half_spectrum(T):
    """Slices ``0..k//2`` of the DFT as ``(k//2+1, n1, n2)``; the rest are conjugates."""
    return np.moveaxis(np.fft.rfft(T, axis=2), 2, 0)


def from_half_spectrum(H, k):
    """Real tensor from its non-redundant slices (DC/Nyquist imaginary parts dropped)."""
    return np.ascontiguousarray(np.fft.irfft(np.moveaxis(H, 0, 2), n=k, axis=2))


def real_slices(k):
    """Indices into the half spectrum whose slices are real for real tensors."""
    return (0, k // 2) if k % 2 == 0 and k > 1 else (0,)


def full_from_half(H, k):
    """Expand half-spectrum slices to all ``k`` by conjugate mirroring."""
    idx = np.arange(k)
    half = k // 2 + 1
    out = np.empty((k,) + H.shape[1:], dtype=np.result_type(H.dtype, np.complex128))
    out[:half] = H[:half]
    tail = idx[half:]
    out[tail] = np.conj(H[k - tail])
    return out


# -- products ----------------------------------------------------------------

def _check_conformable(A, B):
    if A.shape[1] != B.shape[0] or A.shape[2] != B.shape[2]:
        raise ShapeMismatch(f"cannot t-multiply {A.shape} by {B.shape}")


def tprod(A, B):
    """t-product ``A * B`` via slice-wise products in the Fourier domain."""
    A = as_tubal(A, "A")
    B = as_tubal(B, "B")
    _check_conformable(A, B)
    k = A.shape[2]
    return from_half_spectrum(half_spectrum(A) @ half_spectrum(B), k)


def tprod_naive(A, B):
    """Definitional t-product: sums of circular convolutions of tubes."""
    A = as_tubal(A, "A")
    B = as_tubal(B, "B")
    _check_conformable(A, B)
    k = A.shape[2]
    # circ[p, i', s, s2] = B[p, i', (s - s2) mod k]
    shift = (np.arange(k)[:, None] - np.arange(k)[None, :]) % k
    circ = B[:, :, shift]
    C = np.einsum("ipt,pjst->ijs", A, circ)
    return C


def ttranspose(T):
    """Tubal transpose: transpose each face, reverse faces ``2..k``."""
    T = as_tubal(T)
    return np.ascontiguousarray(
        np.concatenate([T[:, :, :1], T[:, :, :0:-1]], axis=2).transpose(1, 0, 2))


def tidentity(n, k):
    eye = np.zeros((n, n, k))
    eye[:, :, 0] = np.eye(n)
    return eye


def gram(U):
    """``U * U^T``, computed directly in the Fourier domain."""
    U = as_tubal(U)
    H = half_spectrum(U)
    return from_half_spectrum(H @ np.conj(np.swapaxes(H, 1, 2)), U.shape[2])


def inner(A, B):
    A = as_tubal(A, "A")
    B = as_tubal(B, "B")
    if A.shape != B.shape:
        raise ShapeMismatch(f"inner product of {A.shape} and {B.shape}")
    return float(np.sum(A * B))


# -- norms -------------------------------------------------------------------

def _slice_singular_values(T):
    H = half_spectrum(as_tubal(T))
    if min(H.shape[1:]) == 0:
        return np.zeros((H.shape[0], 0))
    return np.linalg.svd(H, compute_uv=False)


def fro_norm(T):
    return float(np.linalg.norm(as_tubal(T)))


def spectral_norm(T):
    s = _slice_singular_values(T)
    return float(s.max()) if s.size else 0.0


def nuclear_norm(T):
    T = as_tubal(T)
    k = T.shape[2]
    s = _slice_singular_values(T).sum(axis=1)
    # each non-real half slice stands for itself and its conjugate mirror
    weights = np.full(s.shape[0], 2.0)
    weights[list(real_slices(k))] = 1.0
    return float(np.dot(weights, s) / k)


def sigma_min_tensor(T):
    s = _slice_singular_values(T)
    return float(s[:, -1].min()) if s.size else 0.0


# -- randomness --------------------------------------------------------------

def _key_to_int(key):
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFFFFFFFFFF
    return zlib.crc32(repr(key).encode())


def derive_seed(seed, *keys):
    """Deterministic 63-bit child seed for a named sub-stream of ``seed``."""
    words = [_key_to_int(seed)] + [_key_to_int(key) for key in keys]
    state = np.random.SeedSequence(words).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & 0x7FFFFFFFFFFFFFFF


def random_gaussian(n1, n2, k, stddev, seed):
    """i.i.d. ``N(0, stddev^2)`` tensor drawn from a PCG64 stream.

    Normals are generated in slice-major order, so a given seed fixes every
    entry independently of the numpy array memory order.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    draws = rng.standard_normal(n1 * n2 * k)
    return np.ascontiguousarray(draws.reshape((n1, n2, k), order="F") * float(stddev))
