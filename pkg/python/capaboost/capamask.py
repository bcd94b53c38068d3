# -*- coding: utf-8 -*-

import enum
import typing # noqa: F401 # used in type check

import numpy as np

from . import CapaDataObject
from .capaerror import CapaError, CapaErrorCode
from . import capalinalg

import logging
log = logging.getLogger(__name__)

class MaskPatternType(enum.Enum):
    Bernoulli = 'bernoulli'
    NtoM = 'ntom'

class MaskAxis(enum.Enum):
    Rows = 'rows' # groups run down each column, the axis contracted when the masked factor is on the right
    Cols = 'cols'

class MaskPolicyType(enum.Enum):
    DiffMask = 'diffmask'
    SameMask = 'samemask'
    Dropout = 'dropout'

class MaskPattern(CapaDataObject):
    """
    Bernoulli(density) or N:M structured pattern. Only the fields of the chosen patternType are used.
    """
    patternType = MaskPatternType.Bernoulli # type: MaskPatternType
    density = 0.5 # type: float # fraction of ones for Bernoulli
    n = 2 # type: int # ones per group for NtoM
    m = 4 # type: int # group length for NtoM
    axis = MaskAxis.Rows # type: MaskAxis

    @staticmethod
    def Bernoulli(density: float) -> 'MaskPattern':
        return MaskPattern(patternType=MaskPatternType.Bernoulli, density=float(density))

    @staticmethod
    def NtoM(n: int, m: int, axis: MaskAxis = MaskAxis.Rows) -> 'MaskPattern':
        return MaskPattern(patternType=MaskPatternType.NtoM, n=n, m=m, axis=axis)

    def Validate(self) -> None:
        if self.patternType == MaskPatternType.Bernoulli:
            if not 0.0 <= self.density <= 1.0:
                raise CapaError(CapaErrorCode.ConfigError, 'bernoulli density must be in [0, 1], got %r' % self.density)
        else:
            if self.m < 1 or self.n < 1 or self.n > self.m:
                raise CapaError(CapaErrorCode.ConfigError, 'N:M pattern needs 1 <= n <= m, got %d:%d' % (self.n, self.m))

    def GetDensity(self) -> float:
        """
        Expected fraction of ones (rho).
        """
        if self.patternType == MaskPatternType.Bernoulli:
            return self.density
        return self.n / self.m

    def GetSparsity(self) -> float:
        return 1.0 - self.GetDensity()

class MaskSpec(CapaDataObject):
    """
    Fully determines one binary matrix.
    """
    _nested = {'pattern': MaskPattern}

    pattern = None # type: typing.Optional[MaskPattern]
    rows = 1 # type: int
    cols = 1 # type: int
    seed = 0 # type: int

class MaskPolicy(CapaDataObject):
    """
    How the d parallel modules obtain their masks.

    DiffMask uses one seed per module, SameMask shares seed across modules, Dropout derives
    fresh module seeds every step from (baseSeed, step).
    """
    policyType = MaskPolicyType.DiffMask # type: MaskPolicyType
    seeds = [] # type: typing.List[int]
    seed = 0 # type: int
    baseSeed = 0 # type: int

    @staticmethod
    def DiffMask(seeds: typing.Sequence[int]) -> 'MaskPolicy':
        return MaskPolicy(policyType=MaskPolicyType.DiffMask, seeds=list(seeds))

    @staticmethod
    def DiffMaskFromBase(baseSeed: int, d: int) -> 'MaskPolicy':
        """
        Module i gets seed baseSeed + i.
        """
        return MaskPolicy.DiffMask([baseSeed + i for i in range(d)])

    @staticmethod
    def SameMask(seed: int) -> 'MaskPolicy':
        return MaskPolicy(policyType=MaskPolicyType.SameMask, seed=seed)

    @staticmethod
    def Dropout(baseSeed: int) -> 'MaskPolicy':
        return MaskPolicy(policyType=MaskPolicyType.Dropout, baseSeed=baseSeed)

    @staticmethod
    def FromSeed(policyType: MaskPolicyType, maskSeed: int, d: int) -> 'MaskPolicy':
        if policyType == MaskPolicyType.DiffMask:
            return MaskPolicy.DiffMaskFromBase(maskSeed, d)
        if policyType == MaskPolicyType.SameMask:
            return MaskPolicy.SameMask(maskSeed)
        return MaskPolicy.Dropout(maskSeed)

    def IsStatic(self) -> bool:
        return self.policyType != MaskPolicyType.Dropout

    def Validate(self, d: int) -> None:
        if d < 1:
            raise CapaError(CapaErrorCode.ConfigError, 'number of parallel modules must be >= 1, got %d' % d)
        if self.policyType == MaskPolicyType.DiffMask:
            if len(self.seeds) < d:
                raise CapaError(CapaErrorCode.ConfigError, 'diff-mask policy has %d seeds for %d modules' % (len(self.seeds), d))
            if len(set(self.seeds)) != len(self.seeds):
                raise CapaError(CapaErrorCode.ConfigError, 'diff-mask seeds must be pairwise distinct: %r' % (self.seeds,))

    def GetModuleSeeds(self, d: int, step: int) -> typing.List[int]:
        self.Validate(d)
        if self.policyType == MaskPolicyType.DiffMask:
            return list(self.seeds[:d])
        if self.policyType == MaskPolicyType.SameMask:
            return [self.seed] * d
        stepSeed = capalinalg.DeriveSeed(self.baseSeed, step)
        return [capalinalg.DeriveSeed(stepSeed, i) for i in range(d)]

def GenerateMask(spec: MaskSpec) -> capalinalg.Matrix:
    """
    Materialize the binary matrix of a spec. Bernoulli entries are drawn row-major, entry is one when
    its uniform is below density. N:M groups are contiguous runs of m entries along the pattern axis;
    each group ranks m uniforms and keeps the n smallest.
    """
    pattern = spec.pattern if spec.pattern is not None else MaskPattern()
    pattern.Validate()
    if spec.rows < 1 or spec.cols < 1:
        raise CapaError(CapaErrorCode.ConfigError, 'mask needs positive dims, got %dx%d' % (spec.rows, spec.cols))
    stream = capalinalg.RngStream(spec.seed)

    if pattern.patternType == MaskPatternType.Bernoulli:
        uniforms = stream.NextUniform(spec.rows * spec.cols).reshape(spec.rows, spec.cols)
        return (uniforms < pattern.density).astype(np.float64)

    # lay the masked axis out as the fast axis
    if pattern.axis == MaskAxis.Rows:
        outer, inner = spec.cols, spec.rows
    else:
        outer, inner = spec.rows, spec.cols
    if inner % pattern.m != 0:
        raise CapaError(CapaErrorCode.ConfigError, '%s axis length %d is not divisible by m=%d' % (pattern.axis.value, inner, pattern.m))
    numGroups = outer * inner // pattern.m
    keys = stream.NextUniform(numGroups * pattern.m).reshape(numGroups, pattern.m)
    chosen = np.argsort(keys, axis=1, kind='stable')[:, :pattern.n]
    groups = np.zeros((numGroups, pattern.m), dtype=np.float64)
    np.put_along_axis(groups, chosen, 1.0, axis=1)
    mask = groups.reshape(outer, inner)
    if pattern.axis == MaskAxis.Rows:
        mask = np.ascontiguousarray(mask.T)
    return mask

def UnionStoredFraction(masks: typing.Sequence[capalinalg.Matrix]) -> float:
    """
    Fraction of positions where at least one mask is one; those are the entries that must be stored.
    """
    if not masks:
        raise CapaError(CapaErrorCode.ConfigError, 'union of an empty mask list')
    shape = masks[0].shape
    for mask in masks:
        if mask.shape != shape:
            raise CapaError(CapaErrorCode.ShapeError, 'mask shapes differ: %r vs %r' % (shape, mask.shape))
        if not np.all((mask == 0.0) | (mask == 1.0)):
            raise CapaError(CapaErrorCode.ConfigError, 'mask is not binary')
    union = np.any(np.stack(masks) != 0.0, axis=0)
    return float(np.count_nonzero(union)) / union.size

def UnionStoredCount(masks: typing.Sequence[capalinalg.Matrix]) -> int:
    if not masks:
        return 0
    return int(round(UnionStoredFraction(masks) * masks[0].size))

def ExpectedStoredFraction(sparsity: float, d: int) -> float:
    """
    1 - sparsity**d: probability that an entry survives in at least one of d independent masks.
    """
    if not 0.0 <= sparsity <= 1.0:
        raise CapaError(CapaErrorCode.ConfigError, 'sparsity must be in [0, 1], got %r' % sparsity)
    if d < 1:
        raise CapaError(CapaErrorCode.ConfigError, 'd must be >= 1, got %d' % d)
    return 1.0 - sparsity ** d

def MasksForPolicy(policy: MaskPolicy, pattern: MaskPattern, d: int, rows: int, cols: int, step: int = 0, tensorIndex: int = 0) -> typing.List[capalinalg.Matrix]:
    """
    The d masks of one trainable tensor. tensorIndex separates the streams of tensors that share module seeds
    (0 for B, 1 for A); static policies ignore step.
    """
    return [GenerateMask(spec) for spec in SpecsForPolicy(policy, pattern, d, rows, cols, step=step, tensorIndex=tensorIndex)]

def SpecsForPolicy(policy: MaskPolicy, pattern: MaskPattern, d: int, rows: int, cols: int, step: int = 0, tensorIndex: int = 0) -> typing.List[MaskSpec]:
    return [
        MaskSpec(pattern=pattern, rows=rows, cols=cols, seed=capalinalg.DeriveSeed(moduleSeed, tensorIndex))
        for moduleSeed in policy.GetModuleSeeds(d, step)
    ]

def ExpectedMasks(pattern: MaskPattern, d: int, rows: int, cols: int) -> typing.List[capalinalg.Matrix]:
    """
    Per-entry expectation of each mask, used for dropout at inference.
    """
    pattern.Validate()
    return [np.full((rows, cols), pattern.GetDensity(), dtype=np.float64) for _ in range(d)]
