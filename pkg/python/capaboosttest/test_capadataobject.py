# -*- coding: utf-8 -*-

import json

import pytest

from capaboost import CapaDataObject, capamask, capalayer
from capaboost.capaerror import CapaError, CapaErrorCode

def test_Defaults():
    config = capalayer.LayerConfig()
    assert config.d1 == 64
    assert config.policyType == capamask.MaskPolicyType.DiffMask
    assert config.pattern is None

def test_UnknownAttribute():
    with pytest.raises(CapaError) as e:
        capalayer.LayerConfig(rank=8)
    assert e.value.GetErrorCode() == CapaErrorCode.ConfigError
    with pytest.raises(CapaError):
        capalayer.LayerConfig(GetPattern=1)
    with pytest.raises(CapaError):
        capalayer.LayerConfig.FromDict({'d1': 8, 'extra': True})

@pytest.mark.parametrize('values', [
    {'d1': '64'},
    {'scale': 'large'},
    {'useBias': 1},
    {'policyType': 'bogus'},
])
def test_TypeMismatch(values):
    with pytest.raises(CapaError) as e:
        capalayer.LayerConfig(**values)
    assert e.value.GetErrorCode() == CapaErrorCode.ConfigError

def test_Coercion():
    config = capalayer.LayerConfig(scale=2, policyType='samemask')
    assert config.scale == 2.0
    assert isinstance(config.scale, float)
    assert config.policyType == capamask.MaskPolicyType.SameMask
    assert capamask.MaskPolicy(seeds=(1, 2)).seeds == [1, 2]

def test_JsonRoundTrip():
    config = capalayer.LayerConfig(d1=12, d2=10, r=3, pattern=capamask.MaskPattern.Bernoulli(0.3), nonlinearity=capalayer.Nonlinearity.ReLU)
    text = json.dumps(config.ToDict(), sort_keys=True)
    restored = capalayer.LayerConfig.FromDict(json.loads(text))
    assert restored == config
    assert isinstance(restored.pattern, capamask.MaskPattern)
    assert restored.pattern.density == 0.3

@pytest.mark.parametrize('values', [
    {'pattern': 'bernoulli'},
    {'pattern': 5},
    {'pattern': [0.5]},
    {'pattern': capalayer.LayerConfig()},
])
def test_NestedTypeMismatch(values):
    with pytest.raises(CapaError) as e:
        capalayer.LayerConfig(**values)
    assert e.value.GetErrorCode() == CapaErrorCode.ConfigError
    with pytest.raises(CapaError) as e:
        capalayer.LayerConfig.FromDict(dict(values))
    assert e.value.GetErrorCode() == CapaErrorCode.ConfigError

def test_NestedFromDictInConstructor():
    config = capalayer.LayerConfig(pattern={'density': 0.25})
    assert isinstance(config.pattern, capamask.MaskPattern)
    assert config.pattern.density == 0.25
    assert capalayer.LayerConfig(pattern=None).pattern is None

def test_FromDictRejectsNonObjects():
    with pytest.raises(CapaError) as e:
        capalayer.LayerConfig.FromDict([1, 2])
    assert e.value.GetErrorCode() == CapaErrorCode.ConfigError

def test_Equality():
    assert capalayer.LayerConfig(r=4) == capalayer.LayerConfig(r=4)
    assert capalayer.LayerConfig(r=4) != capalayer.LayerConfig(r=5)
    assert capalayer.LayerConfig() != capamask.MaskPattern()

def test_Repr():
    assert repr(capalayer.LayerConfig(r=4)) == '<LayerConfig(r=4)>'
    assert repr(capamask.MaskPattern()) == '<MaskPattern()>'

def test_Subclass():
    class Sample(CapaDataObject):
        count = 0 # type: int
        name = '' # type: str

    assert Sample(count=3).ToDict() == {'count': 3, 'name': ''}

def test_ErrorAccessors():
    error = CapaError(CapaErrorCode.ShapeError, 'bad shape')
    assert error.GetErrorCode() == CapaErrorCode.ShapeError
    assert error.GetErrorDetail() == 'bad shape'
    assert 'ShapeError' in str(error)
    assert 'bad shape' in repr(error)
