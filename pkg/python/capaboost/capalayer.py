# -*- coding: utf-8 -*-

import enum
import math
import typing # noqa: F401 # used in type check

import numpy as np

from . import CapaDataObject
from .capaerror import CapaError, CapaErrorCode
from . import capalinalg, capamask

import logging
log = logging.getLogger(__name__)

Matrix = capalinalg.Matrix

class LayerType(enum.Enum):
    Lora = 'lora' # frozen weight plus B A
    CapaBoost = 'capaboost' # d masked weight-tied copies of B A, linear or adapter style
    CapaBoostLinear = 'capaboostlinear' # d masked weight-tied copies of one full weight
    NaiveParallel = 'naiveparallel' # d untied copies of B A, d times the parameters

class Nonlinearity(enum.Enum):
    NoNonlinearity = 'none'
    ReLU = 'relu'
    GeLU = 'gelu'

class InitScheme(enum.Enum):
    Zero = 'zero' # B starts at zero so training starts at the pre-trained function
    Gaussian = 'gaussian' # B Gaussian, for rank studies

_GeluCoefficient = math.sqrt(2.0 / math.pi)
_GeluCubic = 0.044715

def ApplyNonlinearity(nonlinearity: Nonlinearity, h: Matrix) -> Matrix:
    """
    GeLU uses the tanh approximation 0.5 h (1 + tanh(sqrt(2/pi) (h + 0.044715 h^3))).
    """
    if nonlinearity == Nonlinearity.ReLU:
        return np.maximum(h, 0.0)
    if nonlinearity == Nonlinearity.GeLU:
        return 0.5 * h * (1.0 + np.tanh(_GeluCoefficient * (h + _GeluCubic * h ** 3)))
    return h

def NonlinearityDerivative(nonlinearity: Nonlinearity, h: Matrix) -> Matrix:
    if nonlinearity == Nonlinearity.ReLU:
        return (h > 0.0).astype(np.float64)
    if nonlinearity == Nonlinearity.GeLU:
        t = np.tanh(_GeluCoefficient * (h + _GeluCubic * h ** 3))
        return 0.5 * (1.0 + t) + 0.5 * h * (1.0 - t * t) * _GeluCoefficient * (1.0 + 3.0 * _GeluCubic * h * h)
    return np.ones_like(h)

class LayerConfig(CapaDataObject):
    """
    Serializable description of a layer; InitLayer turns it into a layer.
    """
    _nested = {'pattern': capamask.MaskPattern}

    layerType = LayerType.CapaBoost # type: LayerType
    d1 = 64 # type: int # input dim
    d2 = 64 # type: int # output dim
    r = 8 # type: int # inner dimension of B and A
    d = 2 # type: int # number of parallel tied modules
    scale = 1.0 # type: float # multiplies the incremental path
    policyType = capamask.MaskPolicyType.DiffMask # type: capamask.MaskPolicyType
    maskSeed = 0 # type: int # DiffMask module i uses maskSeed + i
    pattern = None # type: typing.Optional[capamask.MaskPattern] # defaults to Bernoulli(0.5)
    nonlinearity = Nonlinearity.NoNonlinearity # type: Nonlinearity
    useBias = False # type: bool
    initScheme = InitScheme.Zero # type: InitScheme

    def GetPattern(self) -> capamask.MaskPattern:
        if self.pattern is None:
            return capamask.MaskPattern()
        return self.pattern

    def GetPolicy(self) -> capamask.MaskPolicy:
        return capamask.MaskPolicy.FromSeed(self.policyType, self.maskSeed, self.d)

    def GetNumModules(self) -> int:
        """
        Parallel modules actually evaluated; plain LoRA is one unmasked module.
        """
        if self.layerType == LayerType.Lora:
            return 1
        return self.d

    def Validate(self) -> None:
        if self.d1 < 1 or self.d2 < 1:
            raise CapaError(CapaErrorCode.ConfigError, 'layer dims must be positive, got %dx%d' % (self.d1, self.d2))
        if self.layerType != LayerType.CapaBoostLinear and not 1 <= self.r <= min(self.d1, self.d2):
            raise CapaError(CapaErrorCode.ConfigError, 'r must be in [1, min(d1, d2)], got r=%d for %dx%d' % (self.r, self.d1, self.d2))
        if self.d < 1:
            raise CapaError(CapaErrorCode.ConfigError, 'd must be >= 1, got %d' % self.d)
        if self.layerType == LayerType.Lora and self.nonlinearity != Nonlinearity.NoNonlinearity:
            raise CapaError(CapaErrorCode.ConfigError, 'lora layers are linear')
        self.GetPattern().Validate()
        if self.layerType not in (LayerType.Lora, LayerType.NaiveParallel):
            self.GetPolicy().Validate(self.d)

class LayerGradients:
    """
    Gradients of a scalar loss with respect to the trainable tensors, keyed like GetParameters.
    """

    _gradients = None # type: typing.Dict[str, Matrix]

    def __init__(self, gradients: typing.Mapping[str, Matrix]):
        self._gradients = dict(gradients)

    def Get(self, name: str) -> Matrix:
        return self._gradients[name]

    def GetNames(self) -> typing.List[str]:
        return sorted(self._gradients.keys())

    def AsDict(self) -> typing.Dict[str, Matrix]:
        return dict(self._gradients)

    @property
    def dB(self) -> Matrix:
        return self._gradients['B']

    @property
    def dA(self) -> Matrix:
        return self._gradients['A']

    @property
    def dBias(self) -> typing.Optional[Matrix]:
        return self._gradients.get('bias')

class ForwardCache:
    """
    What Backward needs from the paired Forward: the step, the realized masks and branch pre-activations.
    """

    step = None # type: typing.Optional[int]
    masks = None # type: typing.List[typing.List[Matrix]] # one list of d masks per masked tensor
    preActivations = None # type: typing.Optional[typing.List[Matrix]]

    def __init__(self, step: typing.Optional[int], masks: typing.List[typing.List[Matrix]], preActivations: typing.Optional[typing.List[Matrix]] = None):
        self.step = step
        self.masks = masks
        self.preActivations = preActivations

class IncrementalLayer:
    """
    Frozen pre-trained weight plus a trainable incremental path. Layers are immutable values:
    WithParameters returns a new layer, the frozen weight is shared and never written.
    Inputs are stacked row vectors, x is batch x d1 and outputs are batch x d2.
    """

    _wPre = None # type: Matrix
    _scale = 1.0 # type: float
    _bias = None # type: typing.Optional[np.ndarray]

    def __init__(self, wPre: Matrix, scale: float = 1.0, bias: typing.Optional[np.ndarray] = None):
        if not isinstance(wPre, np.ndarray) or wPre.ndim != 2:
            raise CapaError(CapaErrorCode.ShapeError, 'pre-trained weight must be a matrix')
        self._wPre = wPre
        self._scale = float(scale)
        if bias is not None:
            bias = np.asarray(bias, dtype=np.float64).reshape(-1)
            if bias.shape[0] != wPre.shape[1]:
                raise CapaError(CapaErrorCode.ShapeError, 'bias length %d does not match output dim %d' % (bias.shape[0], wPre.shape[1]))
        self._bias = bias

    def GetBasis(self) -> Matrix:
        return self._wPre

    def GetScale(self) -> float:
        return self._scale

    def GetBias(self) -> typing.Optional[np.ndarray]:
        return self._bias

    def GetInputDim(self) -> int:
        return self._wPre.shape[0]

    def GetOutputDim(self) -> int:
        return self._wPre.shape[1]

    def IsLinear(self) -> bool:
        return True

    def GetParameters(self) -> typing.Dict[str, Matrix]:
        raise NotImplementedError()

    def WithParameters(self, parameters: typing.Mapping[str, Matrix]) -> 'IncrementalLayer':
        raise NotImplementedError()

    def EffectiveWeight(self, step: typing.Optional[int] = 0) -> Matrix:
        raise NotImplementedError()

    def ForwardWithCache(self, x: Matrix, step: typing.Optional[int] = 0) -> typing.Tuple[Matrix, ForwardCache]:
        raise NotImplementedError()

    def Backward(self, x: Matrix, upstream: Matrix, step: int = 0, cache: typing.Optional[ForwardCache] = None) -> LayerGradients:
        raise NotImplementedError()

    def Forward(self, x: Matrix, step: typing.Optional[int] = 0) -> Matrix:
        output, _ = self.ForwardWithCache(x, step)
        return output

    def Merge(self, step: typing.Optional[int] = 0) -> Matrix:
        """
        Fold the incremental path into one dense weight: wPre + scale * E.
        """
        if not self.IsLinear():
            raise CapaError(CapaErrorCode.ContractError, 'adapter-style layers with a nonlinearity cannot be merged')
        return self._wPre + self._scale * self.EffectiveWeight(step)

    def _CheckInput(self, x: Matrix) -> None:
        if not isinstance(x, np.ndarray) or x.ndim != 2 or x.shape[1] != self.GetInputDim():
            raise CapaError(CapaErrorCode.ShapeError, 'input must be batch x %d, got %r' % (self.GetInputDim(), getattr(x, 'shape', None)))

    def _CheckUpstream(self, x: Matrix, upstream: Matrix) -> None:
        self._CheckInput(x)
        expected = (x.shape[0], self.GetOutputDim())
        if not isinstance(upstream, np.ndarray) or upstream.shape != expected:
            raise CapaError(CapaErrorCode.ShapeError, 'upstream gradient must be %r, got %r' % (expected, getattr(upstream, 'shape', None)))

    def _AddBias(self, z: Matrix) -> Matrix:
        if self._bias is not None:
            return z + self._bias
        return z

    def _BiasGradient(self, upstream: Matrix, gradients: typing.Dict[str, Matrix]) -> None:
        if self._bias is not None:
            gradients['bias'] = upstream.sum(axis=0)

    def _CheckParameterShape(self, name: str, value: Matrix, shape: typing.Tuple[int, ...]) -> None:
        if not isinstance(value, np.ndarray) or value.shape != shape:
            raise CapaError(CapaErrorCode.ShapeError, '%s must have shape %r, got %r' % (name, shape, getattr(value, 'shape', None)))

class LoraLayer(IncrementalLayer):
    """
    z = x (wPre + scale B A) + bias, rank(B A) <= r.
    """

    _B = None # type: Matrix # d1 x r
    _A = None # type: Matrix # r x d2

    def __init__(self, wPre: Matrix, B: Matrix, A: Matrix, scale: float = 1.0, bias: typing.Optional[np.ndarray] = None):
        super(LoraLayer, self).__init__(wPre, scale=scale, bias=bias)
        d1, d2 = wPre.shape
        if not isinstance(B, np.ndarray) or B.ndim != 2:
            raise CapaError(CapaErrorCode.ShapeError, 'B must be a matrix')
        r = B.shape[1]
        if r > min(d1, d2):
            raise CapaError(CapaErrorCode.ConfigError, 'r=%d exceeds min(d1, d2) for %dx%d' % (r, d1, d2))
        self._CheckParameterShape('B', B, (d1, r))
        self._CheckParameterShape('A', A, (r, d2))
        self._B = B
        self._A = A

    def GetRank(self) -> int:
        return self._B.shape[1]

    def GetParameters(self) -> typing.Dict[str, Matrix]:
        parameters = {'B': self._B, 'A': self._A}
        if self._bias is not None:
            parameters['bias'] = self._bias
        return parameters

    def WithParameters(self, parameters: typing.Mapping[str, Matrix]) -> 'LoraLayer':
        return LoraLayer(self._wPre, parameters['B'], parameters['A'], scale=self._scale, bias=parameters.get('bias', self._bias))

    def EffectiveWeight(self, step: typing.Optional[int] = 0) -> Matrix:
        return self._B @ self._A

    def ForwardWithCache(self, x: Matrix, step: typing.Optional[int] = 0) -> typing.Tuple[Matrix, ForwardCache]:
        self._CheckInput(x)
        z = x @ self._wPre + self._scale * (x @ self.EffectiveWeight(step))
        return self._AddBias(z), ForwardCache(step, [])

    def Backward(self, x: Matrix, upstream: Matrix, step: int = 0, cache: typing.Optional[ForwardCache] = None) -> LayerGradients:
        self._CheckUpstream(x, upstream)
        xtG = x.T @ upstream
        gradients = {
            'B': self._scale * (xtG @ self._A.T),
            'A': self._scale * (self._B.T @ xtG),
        }
        self._BiasGradient(upstream, gradients)
        return LayerGradients(gradients)

class NaiveParallelLayer(IncrementalLayer):
    """
    d untied low-rank modules, each with its own B_i and A_i and no masks.

    Linear:  z = x wPre + scale x sum_i B_i A_i + bias
    Adapter: z = x wPre + scale sum_i f(x B_i) A_i + bias
    """

    _Bs = None # type: typing.List[Matrix] # d matrices, d1 x r
    _As = None # type: typing.List[Matrix] # d matrices, r x d2
    _nonlinearity = Nonlinearity.NoNonlinearity # type: Nonlinearity

    def __init__(self, wPre: Matrix, Bs: typing.Sequence[Matrix], As: typing.Sequence[Matrix], nonlinearity: Nonlinearity = Nonlinearity.NoNonlinearity, scale: float = 1.0, bias: typing.Optional[np.ndarray] = None):
        super(NaiveParallelLayer, self).__init__(wPre, scale=scale, bias=bias)
        d1, d2 = wPre.shape
        if len(Bs) < 1 or len(Bs) != len(As):
            raise CapaError(CapaErrorCode.ShapeError, 'need the same positive number of B and A factors, got %d and %d' % (len(Bs), len(As)))
        if not isinstance(Bs[0], np.ndarray) or Bs[0].ndim != 2:
            raise CapaError(CapaErrorCode.ShapeError, 'B0 must be a matrix')
        r = Bs[0].shape[1]
        if r > min(d1, d2):
            raise CapaError(CapaErrorCode.ConfigError, 'r=%d exceeds min(d1, d2) for %dx%d' % (r, d1, d2))
        for index, (B, A) in enumerate(zip(Bs, As)):
            self._CheckParameterShape('B%d' % index, B, (d1, r))
            self._CheckParameterShape('A%d' % index, A, (r, d2))
        self._Bs = list(Bs)
        self._As = list(As)
        self._nonlinearity = nonlinearity

    def GetRank(self) -> int:
        return self._Bs[0].shape[1]

    def GetNumModules(self) -> int:
        return len(self._Bs)

    def GetNonlinearity(self) -> Nonlinearity:
        return self._nonlinearity

    def IsLinear(self) -> bool:
        return self._nonlinearity == Nonlinearity.NoNonlinearity

    def GetParameters(self) -> typing.Dict[str, Matrix]:
        parameters = {} # type: typing.Dict[str, Matrix]
        for index, (B, A) in enumerate(zip(self._Bs, self._As)):
            parameters['B%d' % index] = B
            parameters['A%d' % index] = A
        if self._bias is not None:
            parameters['bias'] = self._bias
        return parameters

    def WithParameters(self, parameters: typing.Mapping[str, Matrix]) -> 'NaiveParallelLayer':
        indices = range(self.GetNumModules())
        return NaiveParallelLayer(
            self._wPre, [parameters['B%d' % index] for index in indices], [parameters['A%d' % index] for index in indices],
            nonlinearity=self._nonlinearity, scale=self._scale, bias=parameters.get('bias', self._bias),
        )

    def EffectiveWeight(self, step: typing.Optional[int] = 0) -> Matrix:
        if not self.IsLinear():
            raise CapaError(CapaErrorCode.ContractError, 'effective weight is undefined with nonlinearity %s' % self._nonlinearity.value)
        return sum(B @ A for B, A in zip(self._Bs, self._As))

    def ForwardWithCache(self, x: Matrix, step: typing.Optional[int] = 0) -> typing.Tuple[Matrix, ForwardCache]:
        self._CheckInput(x)
        z = x @ self._wPre
        if self.IsLinear():
            z = z + self._scale * (x @ self.EffectiveWeight(step))
            return self._AddBias(z), ForwardCache(step, [])

        preActivations = [x @ B for B in self._Bs]
        branches = sum(ApplyNonlinearity(self._nonlinearity, h) @ A for h, A in zip(preActivations, self._As))
        return self._AddBias(z + self._scale * branches), ForwardCache(step, [], preActivations)

    def Backward(self, x: Matrix, upstream: Matrix, step: int = 0, cache: typing.Optional[ForwardCache] = None) -> LayerGradients:
        self._CheckUpstream(x, upstream)
        gradients = {} # type: typing.Dict[str, Matrix]
        if self.IsLinear():
            xtG = x.T @ upstream
            for index, (B, A) in enumerate(zip(self._Bs, self._As)):
                gradients['B%d' % index] = self._scale * (xtG @ A.T)
                gradients['A%d' % index] = self._scale * (B.T @ xtG)
        else:
            preActivations = cache.preActivations if cache is not None and cache.preActivations is not None else [x @ B for B in self._Bs]
            for index, (h, A) in enumerate(zip(preActivations, self._As)):
                gradients['A%d' % index] = self._scale * (ApplyNonlinearity(self._nonlinearity, h).T @ upstream)
                dh = self._scale * (upstream @ A.T) * NonlinearityDerivative(self._nonlinearity, h)
                gradients['B%d' % index] = x.T @ dh
        self._BiasGradient(upstream, gradients)
        return LayerGradients(gradients)

class _MaskedTiedLayer(IncrementalLayer):
    """
    Shared mask bookkeeping for layers that sum d masked copies of tied tensors.
    """

    _d = 1 # type: int
    _policy = None # type: capamask.MaskPolicy
    _pattern = None # type: capamask.MaskPattern
    _cacheMasks = True # type: bool
    _staticMasks = None # type: typing.Optional[typing.List[typing.List[Matrix]]]

    def __init__(self, wPre: Matrix, d: int, policy: capamask.MaskPolicy, pattern: capamask.MaskPattern, scale: float = 1.0, bias: typing.Optional[np.ndarray] = None, cacheMasks: bool = True, staticMasks: typing.Optional[typing.List[typing.List[Matrix]]] = None):
        super(_MaskedTiedLayer, self).__init__(wPre, scale=scale, bias=bias)
        policy.Validate(d)
        pattern.Validate()
        self._d = d
        self._policy = policy
        self._pattern = pattern
        self._cacheMasks = cacheMasks
        self._staticMasks = staticMasks

    def GetNumModules(self) -> int:
        return self._d

    def GetPolicy(self) -> capamask.MaskPolicy:
        return self._policy

    def GetPattern(self) -> capamask.MaskPattern:
        return self._pattern

    def _GetMaskedShapes(self) -> typing.List[typing.Tuple[int, int]]:
        raise NotImplementedError()

    def GetMaskSpecs(self, step: int = 0) -> typing.List[typing.List[capamask.MaskSpec]]:
        """
        Per masked tensor, the d specs realized at this step.
        """
        return [
            capamask.SpecsForPolicy(self._policy, self._pattern, self._d, rows, cols, step=step, tensorIndex=tensorIndex)
            for tensorIndex, (rows, cols) in enumerate(self._GetMaskedShapes())
        ]

    def GetMasks(self, step: typing.Optional[int] = 0) -> typing.List[typing.List[Matrix]]:
        """
        Per masked tensor, the d masks at this step. step None means inference, where dropout masks
        are replaced by their expectation.
        """
        if self._policy.IsStatic():
            if self._staticMasks is not None:
                return self._staticMasks
            masks = self._RealizeMasks(0)
            if self._cacheMasks:
                self._staticMasks = masks
            return masks
        if step is None:
            return [capamask.ExpectedMasks(self._pattern, self._d, rows, cols) for rows, cols in self._GetMaskedShapes()]
        if step < 0:
            raise CapaError(CapaErrorCode.ContractError, 'step must be nonnegative, got %d' % step)
        return self._RealizeMasks(step)

    def _RealizeMasks(self, step: int) -> typing.List[typing.List[Matrix]]:
        return [[capamask.GenerateMask(spec) for spec in specs] for specs in self.GetMaskSpecs(step)]

    def _ResolveMasks(self, step: typing.Optional[int], cache: typing.Optional[ForwardCache]) -> typing.List[typing.List[Matrix]]:
        if step is None:
            raise CapaError(CapaErrorCode.ContractError, 'backward needs the training step of the paired forward')
        if cache is None:
            return self.GetMasks(step)
        if cache.step != step and not self._policy.IsStatic():
            raise CapaError(CapaErrorCode.ContractError, 'dropout masks of step %r do not match forward step %r' % (step, cache.step))
        return cache.masks

class CapaBoostLayer(_MaskedTiedLayer):
    """
    d parallel weight-tied low-rank modules diversified by masks.

    Linear:  z = x wPre + scale x sum_i (B * mB_i)(A * mA_i) + bias
    Adapter: z = x wPre + scale sum_i f(x (B * mB_i)) (A * mA_i) + bias
    """

    _B = None # type: Matrix # d1 x r
    _A = None # type: Matrix # r x d2
    _nonlinearity = Nonlinearity.NoNonlinearity # type: Nonlinearity

    def __init__(self, wPre: Matrix, B: Matrix, A: Matrix, d: int, policy: capamask.MaskPolicy, pattern: typing.Optional[capamask.MaskPattern] = None, nonlinearity: Nonlinearity = Nonlinearity.NoNonlinearity, scale: float = 1.0, bias: typing.Optional[np.ndarray] = None, cacheMasks: bool = True, staticMasks: typing.Optional[typing.List[typing.List[Matrix]]] = None):
        super(CapaBoostLayer, self).__init__(wPre, d, policy, pattern if pattern is not None else capamask.MaskPattern(), scale=scale, bias=bias, cacheMasks=cacheMasks, staticMasks=staticMasks)
        d1, d2 = wPre.shape
        if not isinstance(B, np.ndarray) or B.ndim != 2:
            raise CapaError(CapaErrorCode.ShapeError, 'B must be a matrix')
        r = B.shape[1]
        if r > min(d1, d2):
            raise CapaError(CapaErrorCode.ConfigError, 'r=%d exceeds min(d1, d2) for %dx%d' % (r, d1, d2))
        self._CheckParameterShape('B', B, (d1, r))
        self._CheckParameterShape('A', A, (r, d2))
        self._B = B
        self._A = A
        self._nonlinearity = nonlinearity

    def GetRank(self) -> int:
        return self._B.shape[1]

    def GetNonlinearity(self) -> Nonlinearity:
        return self._nonlinearity

    def IsLinear(self) -> bool:
        return self._nonlinearity == Nonlinearity.NoNonlinearity

    def _GetMaskedShapes(self) -> typing.List[typing.Tuple[int, int]]:
        return [self._B.shape, self._A.shape]

    def GetParameters(self) -> typing.Dict[str, Matrix]:
        parameters = {'B': self._B, 'A': self._A}
        if self._bias is not None:
            parameters['bias'] = self._bias
        return parameters

    def WithParameters(self, parameters: typing.Mapping[str, Matrix]) -> 'CapaBoostLayer':
        return CapaBoostLayer(
            self._wPre, parameters['B'], parameters['A'], self._d, self._policy,
            pattern=self._pattern, nonlinearity=self._nonlinearity, scale=self._scale,
            bias=parameters.get('bias', self._bias), cacheMasks=self._cacheMasks, staticMasks=self._staticMasks,
        )

    def EffectiveWeight(self, step: typing.Optional[int] = 0) -> Matrix:
        """
        E = sum_i (B * mB_i)(A * mA_i). Only defined for the linear composition.
        """
        if not self.IsLinear():
            raise CapaError(CapaErrorCode.ContractError, 'effective weight is undefined with nonlinearity %s' % self._nonlinearity.value)
        masksB, masksA = self.GetMasks(step)
        return self._SumBranches(masksB, masksA)

    def _SumBranches(self, masksB: typing.List[Matrix], masksA: typing.List[Matrix]) -> Matrix:
        total = None # type: typing.Optional[Matrix]
        for maskB, maskA in zip(masksB, masksA):
            product = (self._B * maskB) @ (self._A * maskA)
            total = product if total is None else total + product
        assert total is not None
        return total

    def ForwardWithCache(self, x: Matrix, step: typing.Optional[int] = 0) -> typing.Tuple[Matrix, ForwardCache]:
        self._CheckInput(x)
        masks = self.GetMasks(step)
        masksB, masksA = masks
        z = x @ self._wPre
        if self.IsLinear():
            z = z + self._scale * (x @ self._SumBranches(masksB, masksA))
            return self._AddBias(z), ForwardCache(step, masks)

        preActivations = []
        branches = None # type: typing.Optional[Matrix]
        for maskB, maskA in zip(masksB, masksA):
            h = x @ (self._B * maskB)
            preActivations.append(h)
            branch = ApplyNonlinearity(self._nonlinearity, h) @ (self._A * maskA)
            branches = branch if branches is None else branches + branch
        z = z + self._scale * branches
        return self._AddBias(z), ForwardCache(step, masks, preActivations)

    def Backward(self, x: Matrix, upstream: Matrix, step: int = 0, cache: typing.Optional[ForwardCache] = None) -> LayerGradients:
        """
        Exact gradients with respect to B, A and bias. wPre receives none.
        """
        self._CheckUpstream(x, upstream)
        masksB, masksA = self._ResolveMasks(step, cache)
        dB = np.zeros_like(self._B)
        dA = np.zeros_like(self._A)
        if self.IsLinear():
            xtG = x.T @ upstream
            for maskB, maskA in zip(masksB, masksA):
                dB = dB + self._scale * (xtG @ (self._A * maskA).T) * maskB
                dA = dA + self._scale * ((self._B * maskB).T @ xtG) * maskA
        else:
            preActivations = cache.preActivations if cache is not None and cache.preActivations is not None else None
            for index, (maskB, maskA) in enumerate(zip(masksB, masksA)):
                h = preActivations[index] if preActivations is not None else x @ (self._B * maskB)
                activation = ApplyNonlinearity(self._nonlinearity, h)
                dA = dA + self._scale * (activation.T @ upstream) * maskA
                dh = self._scale * (upstream @ (self._A * maskA).T) * NonlinearityDerivative(self._nonlinearity, h)
                dB = dB + (x.T @ dh) * maskB
        gradients = {'B': dB, 'A': dA}
        self._BiasGradient(upstream, gradients)
        return LayerGradients(gradients)

class CapaBoostLinearLayer(_MaskedTiedLayer):
    """
    d masked weight-tied copies of one full trainable weight: z = x wPre + scale x sum_i (W * m_i) + bias.
    """

    _W = None # type: Matrix # d1 x d2

    def __init__(self, wPre: Matrix, W: Matrix, d: int, policy: capamask.MaskPolicy, pattern: typing.Optional[capamask.MaskPattern] = None, scale: float = 1.0, bias: typing.Optional[np.ndarray] = None, cacheMasks: bool = True, staticMasks: typing.Optional[typing.List[typing.List[Matrix]]] = None):
        super(CapaBoostLinearLayer, self).__init__(wPre, d, policy, pattern if pattern is not None else capamask.MaskPattern(), scale=scale, bias=bias, cacheMasks=cacheMasks, staticMasks=staticMasks)
        self._CheckParameterShape('W', W, wPre.shape)
        self._W = W

    def _GetMaskedShapes(self) -> typing.List[typing.Tuple[int, int]]:
        return [self._W.shape]

    def GetParameters(self) -> typing.Dict[str, Matrix]:
        parameters = {'W': self._W}
        if self._bias is not None:
            parameters['bias'] = self._bias
        return parameters

    def WithParameters(self, parameters: typing.Mapping[str, Matrix]) -> 'CapaBoostLinearLayer':
        return CapaBoostLinearLayer(
            self._wPre, parameters['W'], self._d, self._policy, pattern=self._pattern, scale=self._scale,
            bias=parameters.get('bias', self._bias), cacheMasks=self._cacheMasks, staticMasks=self._staticMasks,
        )

    def EffectiveWeight(self, step: typing.Optional[int] = 0) -> Matrix:
        masks, = self.GetMasks(step)
        return self._W * sum(masks)

    def ForwardWithCache(self, x: Matrix, step: typing.Optional[int] = 0) -> typing.Tuple[Matrix, ForwardCache]:
        self._CheckInput(x)
        masks = self.GetMasks(step)
        z = x @ self._wPre + self._scale * (x @ (self._W * sum(masks[0])))
        return self._AddBias(z), ForwardCache(step, masks)

    def Backward(self, x: Matrix, upstream: Matrix, step: int = 0, cache: typing.Optional[ForwardCache] = None) -> LayerGradients:
        self._CheckUpstream(x, upstream)
        masks, = self._ResolveMasks(step, cache)
        gradients = {'W': self._scale * (x.T @ upstream) * sum(masks)}
        self._BiasGradient(upstream, gradients)
        return LayerGradients(gradients)

def _InitFactors(config: LayerConfig, stream: capalinalg.RngStream) -> typing.Tuple[Matrix, Matrix]:
    A = capalinalg.Gaussian(config.r, config.d2, stream) / math.sqrt(config.r)
    if config.initScheme == InitScheme.Gaussian:
        B = capalinalg.Gaussian(config.d1, config.r, stream)
    else:
        B = np.zeros((config.d1, config.r), dtype=np.float64)
    return A, B

def InitLayer(config: LayerConfig, initSeed: int, wPre: typing.Optional[Matrix] = None) -> IncrementalLayer:
    """
    Build a layer deterministically from its config. A is Gaussian with variance 1/r and is drawn first;
    B is zero or standard Gaussian per initScheme. Naive parallel modules draw their pairs in module order.
    A missing wPre is the zero matrix.
    """
    config.Validate()
    if wPre is None:
        wPre = np.zeros((config.d1, config.d2), dtype=np.float64)
    elif wPre.shape != (config.d1, config.d2):
        raise CapaError(CapaErrorCode.ShapeError, 'pre-trained weight is %r, config expects %dx%d' % (wPre.shape, config.d1, config.d2))
    stream = capalinalg.RngStream(initSeed)
    bias = np.zeros(config.d2, dtype=np.float64) if config.useBias else None

    if config.layerType == LayerType.CapaBoostLinear:
        if config.initScheme == InitScheme.Gaussian:
            W = capalinalg.Gaussian(config.d1, config.d2, stream) / math.sqrt(config.d1)
        else:
            W = np.zeros((config.d1, config.d2), dtype=np.float64)
        return CapaBoostLinearLayer(wPre, W, config.d, config.GetPolicy(), pattern=config.GetPattern(), scale=config.scale, bias=bias)

    if config.layerType == LayerType.NaiveParallel:
        Bs = [] # type: typing.List[Matrix]
        As = [] # type: typing.List[Matrix]
        for _ in range(config.d):
            A, B = _InitFactors(config, stream)
            As.append(A)
            Bs.append(B)
        return NaiveParallelLayer(wPre, Bs, As, nonlinearity=config.nonlinearity, scale=config.scale, bias=bias)

    A, B = _InitFactors(config, stream)
    if config.layerType == LayerType.Lora:
        return LoraLayer(wPre, B, A, scale=config.scale, bias=bias)
    return CapaBoostLayer(wPre, B, A, config.d, config.GetPolicy(), pattern=config.GetPattern(), nonlinearity=config.nonlinearity, scale=config.scale, bias=bias)
