# -*- coding: utf-8 -*-

import enum

class CapaErrorCode(enum.IntEnum):
    """
    CapaBoost error codes. Exit status mapping lives in capacli.
    """

    ErrorCodeNotAvailable = 0x0
    ShapeError = 0x1000
    ConfigError = 0x2000
    NumericError = 0x3000
    ContractError = 0x4000
    UsageError = 0x5000
    GenericError = 0xffff


class CapaError(Exception):
    """
    CapaError is raised for every failure detected by the library itself.
    """

    _errorCode = None # type: CapaErrorCode
    _errorDetail = None # type: str

    def __init__(self, errorCode: CapaErrorCode = CapaErrorCode.GenericError, errorDetail: str = ''):
        super(CapaError, self).__init__(errorCode, errorDetail)
        self._errorCode = errorCode
        self._errorDetail = errorDetail

    def __repr__(self) -> str:
        return '<CapaError(errorCode=%r, errorDetail=%r)>' % (self._errorCode, self._errorDetail)

    def __str__(self) -> str:
        if self._errorDetail:
            return '%s (%s)' % (self._errorCode.name, self._errorDetail)
        return '%s' % self._errorCode.name

    def GetErrorCode(self) -> CapaErrorCode:
        return self._errorCode

    def GetErrorDetail(self) -> str:
        """
        Human readable description of what was wrong, including offending shapes or values.
        """
        return self._errorDetail
