import numpy as np
import pytest
from numpy.testing import assert_allclose

from tubal import algebra as alg
from tubal.errors import DivisionByZero, InvalidDims, InvalidRank, ShapeMismatch
from tubal.sensing import (MeasurementEnsemble, adjoint, forward, normal_op,
                           orthonormal_symmetric_basis, random_symmetric_lowrank,
                           rip_delta, rip_estimate, s2n_residual, s2s_residual,
                           sample_ensemble, symmetrize)
from tubal.tsvd import tubal_rank


@pytest.fixture(scope="module")
def ens():
    return sample_ensemble(5, 4, 60, 1)


def test_ensemble_is_symmetric_and_reproducible(ens):
    assert ens.symmetry_residual() < 1e-15
    assert ens.validate() is ens
    again = sample_ensemble(5, 4, 60, 1)
    assert np.array_equal(ens.tensors, again.tensors)
    assert not ens.tensors.flags.writeable


def test_ensemble_rejects_asymmetric_and_bad_shapes():
    raw = np.random.default_rng(0).standard_normal((3, 4, 4, 2))
    with pytest.raises(InvalidDims):
        MeasurementEnsemble(raw).validate()
    with pytest.raises(InvalidDims):
        MeasurementEnsemble(np.zeros((3, 4, 5, 2)))
    with pytest.raises(InvalidDims):
        sample_ensemble(0, 4, 3, 0)


def test_symmetrized_entry_variances():
    """Entries paired with themselves under transpose keep variance 1/m, others halve."""
    n, k, m = 3, 4, 4000
    E = sample_ensemble(n, k, m, 5)
    var = E.tensors.var(axis=0) * m
    for i in range(n):
        for ip in range(n):
            for j in range(k):
                self_paired = i == ip and j == (-j) % k
                assert var[i, ip, j] == pytest.approx(1.0 if self_paired else 0.5, rel=0.1)


def test_forward_matches_inner_products(ens):
    Z = symmetrize(np.random.default_rng(1).standard_normal((5, 5, 4)))
    y = forward(ens, Z)
    assert_allclose(y, [alg.inner(A, Z) for A in ens.tensors], rtol=1e-12)


def test_adjoint_identity(ens):
    rng = np.random.default_rng(2)
    for _ in range(20):
        Z = rng.standard_normal((5, 5, 4))
        y = rng.standard_normal(60)
        assert forward(ens, Z) @ y == pytest.approx(alg.inner(Z, adjoint(ens, y)), abs=1e-10)


def test_normal_op_self_adjoint_psd_and_symmetric(ens):
    rng = np.random.default_rng(3)
    Z = rng.standard_normal((5, 5, 4))
    W = rng.standard_normal((5, 5, 4))
    assert alg.inner(normal_op(ens, Z), W) == pytest.approx(alg.inner(Z, normal_op(ens, W)),
                                                            abs=1e-10)
    assert alg.inner(normal_op(ens, Z), Z) >= 0
    N = normal_op(ens, Z)
    assert_allclose(N, alg.ttranspose(N), atol=1e-12)


def test_shape_errors(ens):
    with pytest.raises(ShapeMismatch):
        forward(ens, np.zeros((4, 4, 4)))
    with pytest.raises(ShapeMismatch):
        adjoint(ens, np.zeros(3))


def test_isometric_basis_is_exact():
    E = orthonormal_symmetric_basis(3, 4)
    assert E.m == 21
    Z = symmetrize(np.random.default_rng(4).standard_normal((3, 3, 4)))
    y = forward(E, Z)
    assert np.dot(y, y) == pytest.approx(alg.fro_norm(Z) ** 2, rel=1e-12)
    assert s2s_residual(E, Z) < 1e-12


def test_random_lowrank_is_symmetric_with_bounded_rank():
    for rank in (1, 2, 3, 4):
        Z = random_symmetric_lowrank(6, 4, rank, rank)
        assert_allclose(Z, alg.ttranspose(Z), atol=1e-12)
        assert tubal_rank(Z) == rank


def test_rip_estimate_bounds_and_errors(ens):
    lo, hi = rip_estimate(ens, 1, 50, 0)
    assert -1 < lo <= hi
    assert rip_delta(ens, 1, 50, 0) == max(abs(lo), abs(hi))
    assert rip_estimate(ens, 1, 50, 0) == (lo, hi)
    with pytest.raises(InvalidRank):
        rip_estimate(ens, 6, 5, 0)
    with pytest.raises(InvalidRank):
        rip_estimate(ens, 1, 0, 0)


def test_rip_concentrates_with_more_measurements():
    small = rip_delta(sample_ensemble(4, 2, 40, 0), 1, 100, 1)
    large = rip_delta(sample_ensemble(4, 2, 4000, 0), 1, 100, 1)
    assert large < small
    assert large < 0.25


def test_residual_ratios_reject_zero(ens):
    with pytest.raises(DivisionByZero):
        s2s_residual(ens, np.zeros((5, 5, 4)))
    with pytest.raises(DivisionByZero):
        s2n_residual(ens, np.zeros((5, 5, 4)))
