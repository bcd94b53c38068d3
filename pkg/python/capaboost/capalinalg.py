# -*- coding: utf-8 -*-

import hashlib
import typing # noqa: F401 # used in type check

import numpy as np

from .capaerror import CapaError, CapaErrorCode

import logging
log = logging.getLogger(__name__)

Matrix = np.ndarray # 2-D float64 array, row-major

DefaultRankTolerance = 1e-8 # relative to the largest singular value

_Mask64 = (1 << 64) - 1
_Gamma = np.uint64(0x9E3779B97F4A7C15)
_Mix1 = np.uint64(0xBF58476D1CE4E5B9)
_Mix2 = np.uint64(0x94D049BB133111EB)
_DeriveStride = 0xD1B54A32D192ED03

class RngStream:
    """
    Counter-based SplitMix64 stream. Output k (1-based) is mix64(seed + k * 0x9E3779B97F4A7C15 mod 2**64),
    so any window of the sequence can be produced in one vectorized pass.

    Uniform doubles take the top 53 bits: (raw >> 11) * 2**-53, in [0, 1).
    Gaussians use Box-Muller on consecutive uniform pairs (u1, u2): with rad = sqrt(-2 ln(1 - u1)),
    the pair yields rad * cos(2 pi u2) then rad * sin(2 pi u2). An odd request discards the last sine sample.

    A stream is single-owner mutable state.
    """

    _seed = 0 # type: int
    _counter = 0 # type: int # number of raw outputs consumed

    def __init__(self, seed: int):
        if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool) or seed < 0 or seed > _Mask64:
            raise CapaError(CapaErrorCode.ConfigError, 'seed must be an unsigned 64-bit integer, got %r' % (seed,))
        self._seed = int(seed)
        self._counter = 0

    def GetSeed(self) -> int:
        return self._seed

    def GetCounter(self) -> int:
        return self._counter

    def NextRaw(self, count: int) -> np.ndarray:
        """
        Next count raw 64-bit outputs as a uint64 array.
        """
        if count < 0:
            raise CapaError(CapaErrorCode.ConfigError, 'count must be nonnegative, got %d' % count)
        indices = np.arange(self._counter + 1, self._counter + count + 1, dtype=np.uint64)
        self._counter += count
        with np.errstate(over='ignore'):
            z = np.uint64(self._seed) + indices * _Gamma
            z = (z ^ (z >> np.uint64(30))) * _Mix1
            z = (z ^ (z >> np.uint64(27))) * _Mix2
            return z ^ (z >> np.uint64(31))

    def NextUniform(self, count: int) -> np.ndarray:
        return (self.NextRaw(count) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def NextGaussian(self, count: int) -> np.ndarray:
        numPairs = (count + 1) // 2
        uniforms = self.NextUniform(2 * numPairs)
        radius = np.sqrt(-2.0 * np.log(1.0 - uniforms[0::2]))
        angle = 2.0 * np.pi * uniforms[1::2]
        samples = np.empty(2 * numPairs, dtype=np.float64)
        samples[0::2] = radius * np.cos(angle)
        samples[1::2] = radius * np.sin(angle)
        return samples[:count]

def DeriveSeed(seed: int, index: int) -> int:
    """
    Derive an independent child seed from (seed, index); a pure function.
    """
    if index < 0:
        raise CapaError(CapaErrorCode.ConfigError, 'seed derivation index must be nonnegative, got %d' % index)
    stream = RngStream((int(seed) + int(index) * _DeriveStride) & _Mask64)
    return int(stream.NextRaw(1)[0])

def _CheckMatrix(m: Matrix, name: str) -> None:
    if not isinstance(m, np.ndarray) or m.ndim != 2:
        raise CapaError(CapaErrorCode.ShapeError, '%s must be a 2-D matrix, got %r' % (name, getattr(m, 'shape', type(m))))

def MakeMatrix(values: typing.Any) -> Matrix:
    """
    Build a float64 matrix from nested sequences.
    """
    m = np.array(values, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise CapaError(CapaErrorCode.ShapeError, 'matrix needs positive rows and cols, got shape %r' % (m.shape,))
    return m

def MatMul(a: Matrix, b: Matrix) -> Matrix:
    _CheckMatrix(a, 'a')
    _CheckMatrix(b, 'b')
    if a.shape[1] != b.shape[0]:
        raise CapaError(CapaErrorCode.ShapeError, 'cannot multiply %dx%d by %dx%d' % (a.shape + b.shape))
    return a @ b

def Hadamard(a: Matrix, b: Matrix) -> Matrix:
    _CheckMatrix(a, 'a')
    _CheckMatrix(b, 'b')
    if a.shape != b.shape:
        raise CapaError(CapaErrorCode.ShapeError, 'elementwise product of %dx%d and %dx%d' % (a.shape + b.shape))
    return a * b

def Gaussian(rows: int, cols: int, stream: RngStream) -> Matrix:
    """
    rows x cols matrix of i.i.d. standard normal entries, filled row-major from the stream.
    """
    if rows < 1 or cols < 1:
        raise CapaError(CapaErrorCode.ConfigError, 'gaussian matrix needs positive dims, got %dx%d' % (rows, cols))
    return stream.NextGaussian(rows * cols).reshape(rows, cols)

def SingularValues(m: Matrix) -> np.ndarray:
    """
    Singular values in nonincreasing order, min(rows, cols) of them.

    Backed by LAPACK gesdd through numpy; its internal iteration cap applies and non-convergence raises NumericError.
    """
    _CheckMatrix(m, 'm')
    if not np.all(np.isfinite(m)):
        raise CapaError(CapaErrorCode.NumericError, 'singular values of a matrix with non-finite entries')
    try:
        values = np.linalg.svd(m, compute_uv=False)
    except np.linalg.LinAlgError as e:
        raise CapaError(CapaErrorCode.NumericError, 'svd did not converge: %s' % e)
    return np.maximum(values, 0.0)

def NumericalRank(m: Matrix, relTol: float = DefaultRankTolerance) -> int:
    """
    Count of singular values strictly above relTol * sigma_max. The zero matrix has rank 0.
    """
    if not 0.0 < relTol < 1.0:
        raise CapaError(CapaErrorCode.ConfigError, 'relTol must be in (0, 1), got %r' % relTol)
    values = SingularValues(m)
    if values.size == 0 or values[0] == 0.0:
        return 0
    return int(np.count_nonzero(values > relTol * values[0]))

def Checksum(m: Matrix) -> str:
    """
    sha256 over shape and raw bytes; used to prove a frozen matrix was never modified.
    """
    digest = hashlib.sha256()
    digest.update(repr(m.shape).encode('utf-8'))
    digest.update(np.ascontiguousarray(m, dtype=np.float64).tobytes())
    return digest.hexdigest()
