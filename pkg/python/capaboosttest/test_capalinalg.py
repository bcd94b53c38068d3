# -*- coding: utf-8 -*-

import numpy as np
import pytest

from capaboost import capalinalg
from capaboost.capaerror import CapaError, CapaErrorCode

def test_SplitMixReferenceSequence():
    stream = capalinalg.RngStream(1234567)
    assert [int(value) for value in stream.NextRaw(5)] == [
        6457827717110365317,
        3203168211198807973,
        9817491932198370423,
        4593380528125082431,
        16408922859458223821,
    ]
    assert stream.GetCounter() == 5

def test_StreamWindowsAreContiguous():
    whole = capalinalg.RngStream(99).NextRaw(10)
    stream = capalinalg.RngStream(99)
    parts = np.concatenate([stream.NextRaw(3), stream.NextRaw(0), stream.NextRaw(7)])
    assert np.array_equal(whole, parts)

@pytest.mark.parametrize('seed', [-1, 1 << 64, 1.5, True])
def test_InvalidSeed(seed):
    with pytest.raises(CapaError) as e:
        capalinalg.RngStream(seed)
    assert e.value.GetErrorCode() == CapaErrorCode.ConfigError

def test_UniformRange():
    uniforms = capalinalg.RngStream(3).NextUniform(10000)
    assert uniforms.min() >= 0.0
    assert uniforms.max() < 1.0

def test_DeriveSeed():
    assert capalinalg.DeriveSeed(5, 0) == capalinalg.DeriveSeed(5, 0)
    assert capalinalg.DeriveSeed(5, 0) != capalinalg.DeriveSeed(5, 1)
    assert capalinalg.DeriveSeed(5, 0) != capalinalg.DeriveSeed(6, 0)
    assert 0 <= capalinalg.DeriveSeed((1 << 64) - 1, 3) < (1 << 64)

def test_GaussianDeterminism():
    a = capalinalg.Gaussian(7, 5, capalinalg.RngStream(11))
    b = capalinalg.Gaussian(7, 5, capalinalg.RngStream(11))
    c = capalinalg.Gaussian(7, 5, capalinalg.RngStream(12))
    assert a.shape == (7, 5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)

def test_GaussianMoments():
    samples = capalinalg.Gaussian(100, 100, capalinalg.RngStream(2024))
    assert abs(samples.mean()) < 0.05
    assert abs(samples.var() - 1.0) < 0.05

def test_GaussianOddCount():
    stream = capalinalg.RngStream(8)
    samples = stream.NextGaussian(3)
    assert samples.shape == (3,)
    assert stream.GetCounter() == 4

@pytest.mark.parametrize('rows,cols', [(0, 3), (3, 0)])
def test_GaussianInvalidDims(rows, cols):
    with pytest.raises(CapaError) as e:
        capalinalg.Gaussian(rows, cols, capalinalg.RngStream(0))
    assert e.value.GetErrorCode() == CapaErrorCode.ConfigError

def test_MatMulHandArithmetic():
    result = capalinalg.MatMul(capalinalg.MakeMatrix([[1, 2]]), capalinalg.MakeMatrix([[3], [4]]))
    assert result.tolist() == [[11.0]]
    m = capalinalg.MakeMatrix([[1, 2], [3, 4]])
    assert np.array_equal(capalinalg.MatMul(np.eye(2), m), m)

def test_MatMulMatchesTripleLoop():
    stream = capalinalg.RngStream(17)
    a = capalinalg.Gaussian(5, 3, stream)
    b = capalinalg.Gaussian(3, 4, stream)
    expected = np.zeros((5, 4))
    for i in range(5):
        for j in range(4):
            for k in range(3):
                expected[i, j] += a[i, k] * b[k, j]
    assert np.max(np.abs(capalinalg.MatMul(a, b) - expected)) <= 1e-12

def test_MatMulAssociativity():
    stream = capalinalg.RngStream(18)
    a = capalinalg.Gaussian(6, 4, stream)
    b = capalinalg.Gaussian(4, 5, stream)
    c = capalinalg.Gaussian(5, 3, stream)
    left = capalinalg.MatMul(capalinalg.MatMul(a, b), c)
    right = capalinalg.MatMul(a, capalinalg.MatMul(b, c))
    assert np.linalg.norm(left - right) <= 1e-10 * np.linalg.norm(left)

def test_MatMulShapeError():
    with pytest.raises(CapaError) as e:
        capalinalg.MatMul(np.ones((2, 3)), np.ones((2, 3)))
    assert e.value.GetErrorCode() == CapaErrorCode.ShapeError

def test_Hadamard():
    m = capalinalg.MakeMatrix([[1, 2], [3, 4]])
    assert capalinalg.Hadamard(m, capalinalg.MakeMatrix([[0, 1], [1, 0]])).tolist() == [[0.0, 2.0], [3.0, 0.0]]
    assert np.array_equal(capalinalg.Hadamard(m, np.ones((2, 2))), m)
    assert np.array_equal(capalinalg.Hadamard(m, np.zeros((2, 2))), np.zeros((2, 2)))
    with pytest.raises(CapaError) as e:
        capalinalg.Hadamard(m, np.ones((2, 3)))
    assert e.value.GetErrorCode() == CapaErrorCode.ShapeError

def test_MakeMatrixRejectsVectors():
    with pytest.raises(CapaError) as e:
        capalinalg.MakeMatrix([1, 2, 3])
    assert e.value.GetErrorCode() == CapaErrorCode.ShapeError

def test_SingularValues():
    assert np.allclose(capalinalg.SingularValues(np.eye(3)), [1.0, 1.0, 1.0])
    assert np.allclose(capalinalg.SingularValues(np.diag([3.0, 2.0, 0.0])), [3.0, 2.0, 0.0])

def test_SingularValuesDeterminant():
    m = capalinalg.Gaussian(6, 4, capalinalg.RngStream(21))
    values = capalinalg.SingularValues(m)
    assert values.shape == (4,)
    assert np.all(np.diff(values) <= 0.0)
    determinant = np.linalg.det(m.T @ m)
    assert abs(np.prod(values ** 2) - determinant) <= 1e-8 * abs(determinant)

def test_SingularValuesFrobenius():
    m = capalinalg.Gaussian(9, 7, capalinalg.RngStream(22))
    values = capalinalg.SingularValues(m)
    assert abs(np.sum(values ** 2) - np.sum(m * m)) <= 1e-10 * np.sum(m * m)

def test_SingularValuesRejectNonFinite():
    m = np.ones((3, 3))
    m[1, 1] = np.nan
    with pytest.raises(CapaError) as e:
        capalinalg.SingularValues(m)
    assert e.value.GetErrorCode() == CapaErrorCode.NumericError

def test_NumericalRank():
    stream = capalinalg.RngStream(23)
    assert capalinalg.NumericalRank(np.zeros((4, 4))) == 0
    u = capalinalg.Gaussian(5, 1, stream)
    v = capalinalg.Gaussian(1, 6, stream)
    assert capalinalg.NumericalRank(u @ v) == 1
    product = capalinalg.Gaussian(64, 8, stream) @ capalinalg.Gaussian(8, 64, stream)
    assert capalinalg.NumericalRank(product) == 8
    assert capalinalg.NumericalRank(-3.5 * product) == 8
    assert capalinalg.NumericalRank(capalinalg.Gaussian(10, 4, stream)) == 4

@pytest.mark.parametrize('relTol', [0.0, 1.0, -1e-3])
def test_NumericalRankInvalidTolerance(relTol):
    with pytest.raises(CapaError) as e:
        capalinalg.NumericalRank(np.eye(2), relTol)
    assert e.value.GetErrorCode() == CapaErrorCode.ConfigError

def test_Checksum():
    m = capalinalg.Gaussian(4, 4, capalinalg.RngStream(1))
    checksum = capalinalg.Checksum(m)
    assert checksum == capalinalg.Checksum(m.copy())
    changed = m.copy()
    changed[0, 0] += 1.0
    assert checksum != capalinalg.Checksum(changed)
    assert capalinalg.Checksum(np.zeros((2, 8))) != capalinalg.Checksum(np.zeros((4, 4)))
