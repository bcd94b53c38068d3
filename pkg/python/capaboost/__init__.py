# -*- coding: utf-8 -*-

import enum
import typing # noqa: F401 # used in type check

from .capaerror import CapaError, CapaErrorCode

class CapaDataObject:
    """
    Base for configuration and report structs. Class attributes are the defaults; the constructor
    rejects unknown attributes and values whose type does not match the default.
    Nested structs are declared in _nested; a nested field takes an instance, a dict to rebuild it from, or None.
    """

    _nested = {} # type: typing.Dict[str, typing.Type[CapaDataObject]]

    def __init__(self, **kwargs):
        name = self.__class__.__name__
        for key, value in kwargs.items():
            if key.startswith('_') or not hasattr(self.__class__, key) or callable(getattr(self.__class__, key)):
                raise CapaError(CapaErrorCode.ConfigError, '%s does not have attribute %s' % (name, key))
            setattr(self, key, self._CoerceValue(key, value))

    def _CoerceValue(self, key: str, value: typing.Any) -> typing.Any:
        name = self.__class__.__name__
        originalValue = getattr(self.__class__, key)
        if value is None:
            return value
        nestedType = self._nested.get(key)
        if nestedType is not None:
            if isinstance(value, dict):
                return nestedType.FromDict(value)
            if not isinstance(value, nestedType):
                raise CapaError(CapaErrorCode.ConfigError, 'attribute %s of %s expects %s or an object, got %r' % (key, name, nestedType.__name__, type(value)))
            return value
        if originalValue is None:
            return value
        originalType = type(originalValue)
        valueType = type(value)
        if isinstance(originalValue, enum.Enum) and not isinstance(value, enum.Enum):
            try:
                return originalType(value)
            except ValueError:
                raise CapaError(CapaErrorCode.ConfigError, 'attribute %s of %s has no member %r' % (key, name, value))
        if originalType is float and valueType is int:
            return float(value)
        if originalType is list and valueType is tuple:
            return list(value)
        if originalType != valueType:
            raise CapaError(CapaErrorCode.ConfigError, 'attribute %s of %s is of type %r, but passed in value is of type %r' % (key, name, originalType, valueType))
        return value

    @classmethod
    def _GetFieldNames(cls) -> typing.List[str]:
        return [
            key for key in dir(cls)
            if not key.startswith('_') and not callable(getattr(cls, key))
        ]

    def ToDict(self) -> typing.Dict[str, typing.Any]:
        """
        Plain JSON-ready dictionary, keys sorted.
        """
        return {key: _ToPlain(getattr(self, key)) for key in self._GetFieldNames()}

    @classmethod
    def FromDict(cls, values: typing.Mapping[str, typing.Any]) -> typing.Any:
        if not isinstance(values, dict):
            raise CapaError(CapaErrorCode.ConfigError, '%s expects an object, got %r' % (cls.__name__, type(values)))
        return cls(**values)

    def __eq__(self, other: typing.Any) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return self.ToDict() == other.ToDict()

    def __repr__(self):
        name = self.__class__.__name__
        kwargs = [
            '%s=%r' % (key, getattr(self, key))
            for key in self._GetFieldNames()
            if getattr(self, key) != getattr(self.__class__, key) and not isinstance(getattr(self, key), (list, dict, CapaDataObject))
        ]
        return '<%s(%s)>' % (name, ', '.join(kwargs))

def _ToPlain(value: typing.Any) -> typing.Any:
    if isinstance(value, CapaDataObject):
        return value.ToDict()
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, (list, tuple)):
        return [_ToPlain(item) for item in value]
    if isinstance(value, dict):
        return {str(key): _ToPlain(item) for key, item in value.items()}
    return value
