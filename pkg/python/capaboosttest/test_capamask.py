# -*- coding: utf-8 -*-

import math

import numpy as np
import pytest

from capaboost import capamask
from capaboost.capaerror import CapaError, CapaErrorCode

def _Bernoulli(density, rows=64, cols=64, seed=0):
    return capamask.GenerateMask(capamask.MaskSpec(pattern=capamask.MaskPattern.Bernoulli(density), rows=rows, cols=cols, seed=seed))

def test_BernoulliExtremes():
    assert np.array_equal(_Bernoulli(1.0), np.ones((64, 64)))
    assert np.array_equal(_Bernoulli(0.0), np.zeros((64, 64)))

def test_MaskIsBinaryFloat():
    mask = _Bernoulli(0.5, 10, 7, seed=4)
    assert mask.dtype == np.float64
    assert mask.shape == (10, 7)
    assert set(np.unique(mask).tolist()) <= {0.0, 1.0}

def test_GenerateIsDeterministic():
    assert np.array_equal(_Bernoulli(0.5, seed=9), _Bernoulli(0.5, seed=9))
    assert not np.array_equal(_Bernoulli(0.5, seed=9), _Bernoulli(0.5, seed=10))

@pytest.mark.parametrize('density', [0.1, 0.3, 0.5, 0.7])
def test_BernoulliEmpiricalDensity(density):
    mask = _Bernoulli(density, 128, 128, seed=1)
    bound = 3.0 * math.sqrt(density * (1.0 - density) / mask.size)
    assert abs(mask.mean() - density) <= bound

def test_NtoMRowGroups():
    pattern = capamask.MaskPattern.NtoM(2, 4, capamask.MaskAxis.Rows)
    mask = capamask.GenerateMask(capamask.MaskSpec(pattern=pattern, rows=8, cols=4, seed=3))
    assert mask.shape == (8, 4)
    for col in range(4):
        for start in range(0, 8, 4):
            assert mask[start:start + 4, col].sum() == 2

def test_NtoMColGroups():
    pattern = capamask.MaskPattern.NtoM(1, 3, capamask.MaskAxis.Cols)
    mask = capamask.GenerateMask(capamask.MaskSpec(pattern=pattern, rows=5, cols=12, seed=8))
    for row in range(5):
        for start in range(0, 12, 3):
            assert mask[row, start:start + 3].sum() == 1
    assert pattern.GetDensity() == pytest.approx(1.0 / 3.0)

def test_NtoMGroupPositionsVary():
    pattern = capamask.MaskPattern.NtoM(2, 4)
    mask = capamask.GenerateMask(capamask.MaskSpec(pattern=pattern, rows=64, cols=64, seed=5))
    groups = {tuple(mask[start:start + 4, col]) for col in range(64) for start in range(0, 64, 4)}
    # all six 2-of-4 placements show up over 1024 groups
    assert len(groups) == 6

def test_NtoMDivisibility():
    pattern = capamask.MaskPattern.NtoM(2, 4, capamask.MaskAxis.Rows)
    with pytest.raises(CapaError) as e:
        capamask.GenerateMask(capamask.MaskSpec(pattern=pattern, rows=6, cols=4, seed=0))
    assert e.value.GetErrorCode() == CapaErrorCode.ConfigError

@pytest.mark.parametrize('pattern', [
    capamask.MaskPattern.Bernoulli(1.5),
    capamask.MaskPattern.Bernoulli(-0.1),
    capamask.MaskPattern.NtoM(5, 4),
    capamask.MaskPattern.NtoM(0, 4),
])
def test_InvalidPattern(pattern):
    with pytest.raises(CapaError) as e:
        pattern.Validate()
    assert e.value.GetErrorCode() == CapaErrorCode.ConfigError

def test_MaskSpecSerializes():
    spec = capamask.MaskSpec(pattern=capamask.MaskPattern.NtoM(2, 4), rows=8, cols=16, seed=42)
    values = spec.ToDict()
    assert values == {
        'cols': 16,
        'pattern': {'axis': 'rows', 'density': 0.5, 'm': 4, 'n': 2, 'patternType': 'ntom'},
        'rows': 8,
        'seed': 42,
    }
    restored = capamask.MaskSpec.FromDict(values)
    assert restored == spec
    assert np.array_equal(capamask.GenerateMask(restored), capamask.GenerateMask(spec))

def test_UnionStoredFraction():
    mask = _Bernoulli(0.5, seed=2)
    assert capamask.UnionStoredFraction([mask, 1.0 - mask]) == 1.0
    assert capamask.UnionStoredFraction([mask]) == mask.mean()
    assert capamask.UnionStoredFraction([mask, mask, mask]) == mask.mean()

def test_UnionStoredFractionErrors():
    with pytest.raises(CapaError) as e:
        capamask.UnionStoredFraction([np.ones((2, 2)), np.ones((2, 3))])
    assert e.value.GetErrorCode() == CapaErrorCode.ShapeError
    with pytest.raises(CapaError) as e:
        capamask.UnionStoredFraction([np.full((2, 2), 0.5)])
    assert e.value.GetErrorCode() == CapaErrorCode.ConfigError
    with pytest.raises(CapaError) as e:
        capamask.UnionStoredFraction([])
    assert e.value.GetErrorCode() == CapaErrorCode.ConfigError

@pytest.mark.parametrize('d,expected', [(2, 0.75), (4, 0.9375)])
def test_UnionOfIndependentMasks(d, expected):
    policy = capamask.MaskPolicy.DiffMaskFromBase(100, d)
    masks = capamask.MasksForPolicy(policy, capamask.MaskPattern.Bernoulli(0.5), d, 768, 768)
    assert abs(capamask.UnionStoredFraction(masks) - expected) <= 0.01

@pytest.mark.parametrize('sparsity,d,expected', [(0.5, 2, 0.75), (0.5, 4, 0.9375), (0.3, 1, 0.7), (0.0, 3, 1.0), (1.0, 3, 0.0)])
def test_ExpectedStoredFraction(sparsity, d, expected):
    assert capamask.ExpectedStoredFraction(sparsity, d) == pytest.approx(expected)

def test_ExpectedStoredFractionInvalid():
    with pytest.raises(CapaError):
        capamask.ExpectedStoredFraction(1.5, 2)
    with pytest.raises(CapaError):
        capamask.ExpectedStoredFraction(0.5, 0)

def test_SameMaskPolicy():
    masks = capamask.MasksForPolicy(capamask.MaskPolicy.SameMask(7), capamask.MaskPattern.Bernoulli(0.5), 3, 16, 16)
    assert len(masks) == 3
    assert np.array_equal(masks[0], masks[1])
    assert np.array_equal(masks[1], masks[2])

def test_DiffMaskPolicy():
    policy = capamask.MaskPolicy.DiffMask([3, 4])
    masks = capamask.MasksForPolicy(policy, capamask.MaskPattern.Bernoulli(0.5), 2, 64, 64)
    assert not np.array_equal(masks[0], masks[1])
    later = capamask.MasksForPolicy(policy, capamask.MaskPattern.Bernoulli(0.5), 2, 64, 64, step=17)
    assert all(np.array_equal(a, b) for a, b in zip(masks, later))

def test_DiffMaskSeedsFromBase():
    assert capamask.MaskPolicy.DiffMaskFromBase(10, 3).seeds == [10, 11, 12]

def test_DiffMaskTensorsUseSeparateStreams():
    policy = capamask.MaskPolicy.DiffMask([3])
    pattern = capamask.MaskPattern.Bernoulli(0.5)
    masksB = capamask.MasksForPolicy(policy, pattern, 1, 32, 32, tensorIndex=0)
    masksA = capamask.MasksForPolicy(policy, pattern, 1, 32, 32, tensorIndex=1)
    assert not np.array_equal(masksB[0], masksA[0])

def test_DropoutPolicy():
    policy = capamask.MaskPolicy.Dropout(5)
    pattern = capamask.MaskPattern.Bernoulli(0.5)
    first = capamask.MasksForPolicy(policy, pattern, 2, 32, 32, step=5)
    again = capamask.MasksForPolicy(policy, pattern, 2, 32, 32, step=5)
    nextStep = capamask.MasksForPolicy(policy, pattern, 2, 32, 32, step=6)
    assert all(np.array_equal(a, b) for a, b in zip(first, again))
    assert not np.array_equal(first[0], nextStep[0])
    assert not np.array_equal(first[0], first[1])
    assert not policy.IsStatic()

def test_DiffMaskNeedsEnoughSeeds():
    with pytest.raises(CapaError) as e:
        capamask.MasksForPolicy(capamask.MaskPolicy.DiffMask([1, 2]), capamask.MaskPattern(), 3, 4, 4)
    assert e.value.GetErrorCode() == CapaErrorCode.ConfigError

def test_DiffMaskSeedsDistinct():
    with pytest.raises(CapaError) as e:
        capamask.MaskPolicy.DiffMask([1, 1]).Validate(2)
    assert e.value.GetErrorCode() == CapaErrorCode.ConfigError

def test_NtoMWithPolicies():
    pattern = capamask.MaskPattern.NtoM(2, 4)
    masks = capamask.MasksForPolicy(capamask.MaskPolicy.DiffMaskFromBase(0, 2), pattern, 2, 16, 8)
    for mask in masks:
        assert mask.sum() == 16 * 8 // 2
    assert not np.array_equal(masks[0], masks[1])

def test_ExpectedMasks():
    masks = capamask.ExpectedMasks(capamask.MaskPattern.NtoM(1, 4), 2, 4, 3)
    assert len(masks) == 2
    assert np.array_equal(masks[0], np.full((4, 3), 0.25))
