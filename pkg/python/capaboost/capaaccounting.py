# -*- coding: utf-8 -*-

import enum
import typing # noqa: F401 # used in type check

from . import CapaDataObject
from .capaerror import CapaError, CapaErrorCode
from . import capamask
from .capalayer import LayerConfig, LayerType, Nonlinearity

import logging
log = logging.getLogger(__name__)

FlopsPerMac = 2
FlopConvention = 'one multiply-accumulate = %d FLOPs; counts are per input token on the incremental path' % FlopsPerMac

class FlopMode(enum.Enum):
    Train = 'train'
    Infer = 'infer'

class ParamCounts(CapaDataObject):
    denseParams = 0 # type: int # every entry of the trainable tensors plus bias
    expectedStoredParams = 0.0 # type: float # closed form: factor entries times the stored fraction, plus bias
    trainableParams = 0 # type: int # unique stored values, closed form rounded
    storedParams = 0 # type: int # unique stored values counted from realized masks
    optimizerStateParams = 0 # type: int # dense tensors the optimizer still holds
    naiveParallelParams = 0 # type: int # d untied modules

class AccountingReport(CapaDataObject):
    _nested = {'config': LayerConfig}

    config = None # type: typing.Optional[LayerConfig]
    flopConvention = FlopConvention # type: str
    referenceR = 0 # type: int # LoRA inner dimension the factors are relative to

    denseParams = 0 # type: int
    expectedStoredParams = 0.0 # type: float
    trainableParams = 0 # type: int
    storedParams = 0 # type: int
    optimizerStateParams = 0 # type: int
    naiveParallelParams = 0 # type: int

    trainFlopsPerToken = 0 # type: int
    inferFlopsPerToken = 0 # type: int # merged when the layer is linear, unmerged otherwise
    inferMergedFlopsPerToken = 0 # type: int # 0 when the layer cannot be merged
    inferUnmergedFlopsPerToken = 0 # type: int

    referenceParams = 0 # type: int
    referenceTrainFlopsPerToken = 0 # type: int
    referenceInferFlopsPerToken = 0 # type: int

    paramFactor = 0.0 # type: float # expected stored params over the reference
    storedParamFactor = 0.0 # type: float # realized stored params over the reference
    trainFlopFactor = 0.0 # type: float
    inferFlopFactor = 0.0 # type: float

def _ModuleEntries(config: LayerConfig) -> int:
    if config.layerType == LayerType.CapaBoostLinear:
        return config.d1 * config.d2
    return config.d1 * config.r + config.r * config.d2

def _FactorEntries(config: LayerConfig) -> int:
    """
    Entries of every trainable factor tensor; untied modules each hold their own.
    """
    if config.layerType == LayerType.NaiveParallel:
        return config.d * _ModuleEntries(config)
    return _ModuleEntries(config)

def _IsUnmasked(config: LayerConfig) -> bool:
    return config.layerType in (LayerType.Lora, LayerType.NaiveParallel)

def _BiasEntries(config: LayerConfig) -> int:
    return config.d2 if config.useBias else 0

def StoredFraction(config: LayerConfig) -> float:
    """
    Expected share of factor entries that must be stored: 1 - sigma**d for distinct masks,
    rho for one shared mask, everything for unmasked layers and dropout.
    """
    if _IsUnmasked(config) or config.policyType == capamask.MaskPolicyType.Dropout:
        return 1.0
    pattern = config.GetPattern()
    if config.policyType == capamask.MaskPolicyType.SameMask:
        return pattern.GetDensity()
    return capamask.ExpectedStoredFraction(pattern.GetSparsity(), config.d)

def RealizedStoredEntries(config: LayerConfig) -> int:
    """
    Union count over the realized masks of every masked tensor.
    """
    if _IsUnmasked(config) or config.policyType == capamask.MaskPolicyType.Dropout:
        return _FactorEntries(config)
    policy = config.GetPolicy()
    pattern = config.GetPattern()
    if config.layerType == LayerType.CapaBoostLinear:
        shapes = [(config.d1, config.d2)]
    else:
        shapes = [(config.d1, config.r), (config.r, config.d2)]
    total = 0
    for tensorIndex, (rows, cols) in enumerate(shapes):
        total += capamask.UnionStoredCount(capamask.MasksForPolicy(policy, pattern, config.d, rows, cols, tensorIndex=tensorIndex))
    return total

def ReferenceConfig(config: LayerConfig, referenceR: typing.Optional[int] = None) -> LayerConfig:
    """
    Dense single-module LoRA of the same dims; a dense adapter of the same bottleneck has identical counts.
    """
    return LayerConfig(
        layerType=LayerType.Lora, d1=config.d1, d2=config.d2,
        r=referenceR if referenceR is not None else config.r, d=1, useBias=config.useBias,
    )

def ParamCount(config: LayerConfig, realizeMasks: bool = True) -> ParamCounts:
    config.Validate()
    factorEntries = _FactorEntries(config)
    biasEntries = _BiasEntries(config)
    expected = factorEntries * StoredFraction(config) + biasEntries
    if realizeMasks:
        stored = RealizedStoredEntries(config) + biasEntries
    else:
        stored = int(round(expected))
    return ParamCounts(
        denseParams=factorEntries + biasEntries,
        expectedStoredParams=float(expected),
        trainableParams=int(round(expected)),
        storedParams=stored,
        optimizerStateParams=factorEntries + biasEntries,
        naiveParallelParams=config.GetNumModules() * _ModuleEntries(config) + biasEntries,
    )

def _TrainMacs(config: LayerConfig) -> float:
    if _IsUnmasked(config):
        return float(_FactorEntries(config))
    return config.d * config.GetPattern().GetDensity() * _FactorEntries(config)

def _InferUnmergedMacs(config: LayerConfig) -> float:
    if _IsUnmasked(config):
        return float(_FactorEntries(config))
    if config.policyType == capamask.MaskPolicyType.Dropout:
        # expectation masks collapse the branches into one dense module
        return float(_FactorEntries(config))
    return _TrainMacs(config)

def _InferMergedMacs(config: LayerConfig) -> float:
    if config.nonlinearity != Nonlinearity.NoNonlinearity:
        return 0.0
    return StoredFraction(config) * config.d1 * config.d2

def FlopCount(config: LayerConfig, mode: FlopMode) -> int:
    """
    FLOPs per input token of the incremental path.

    Train: d * rho * (d1 r + r d2) MACs, each branch computing with density-rho factors; LoRA is d1 r + r d2
    and d untied modules are d (d1 r + r d2).
    Infer: linear layers use the merged effective path, stored fraction times d1 d2; adapter-style layers
    cannot merge and pay the unmerged branch cost.
    """
    config.Validate()
    if mode == FlopMode.Train:
        macs = _TrainMacs(config)
    elif config.nonlinearity == Nonlinearity.NoNonlinearity:
        macs = _InferMergedMacs(config)
    else:
        macs = _InferUnmergedMacs(config)
    return int(round(FlopsPerMac * macs))

def _Ratio(value: float, reference: float) -> float:
    if reference == 0:
        raise CapaError(CapaErrorCode.ConfigError, 'reference count is zero')
    return float(value) / float(reference)

def Account(config: LayerConfig, referenceR: typing.Optional[int] = None, realizeMasks: bool = True) -> AccountingReport:
    """
    Parameter and FLOP counts, absolute and relative to a dense LoRA reference of inner dimension referenceR.
    """
    reference = ReferenceConfig(config, referenceR)
    counts = ParamCount(config, realizeMasks=realizeMasks)
    referenceCounts = ParamCount(reference, realizeMasks=False)
    trainFlops = FlopCount(config, FlopMode.Train)
    inferFlops = FlopCount(config, FlopMode.Infer)
    referenceTrainFlops = FlopCount(reference, FlopMode.Train)
    referenceInferFlops = FlopCount(reference, FlopMode.Infer)
    report = AccountingReport(
        config=config,
        referenceR=reference.r,
        denseParams=counts.denseParams,
        expectedStoredParams=counts.expectedStoredParams,
        trainableParams=counts.trainableParams,
        storedParams=counts.storedParams,
        optimizerStateParams=counts.optimizerStateParams,
        naiveParallelParams=counts.naiveParallelParams,
        trainFlopsPerToken=trainFlops,
        inferFlopsPerToken=inferFlops,
        inferMergedFlopsPerToken=int(round(FlopsPerMac * _InferMergedMacs(config))),
        inferUnmergedFlopsPerToken=int(round(FlopsPerMac * _InferUnmergedMacs(config))),
        referenceParams=referenceCounts.denseParams,
        referenceTrainFlopsPerToken=referenceTrainFlops,
        referenceInferFlopsPerToken=referenceInferFlops,
        paramFactor=_Ratio(counts.expectedStoredParams, referenceCounts.denseParams),
        storedParamFactor=_Ratio(counts.storedParams, referenceCounts.denseParams),
        trainFlopFactor=_Ratio(trainFlops, referenceTrainFlops),
        inferFlopFactor=_Ratio(inferFlops, referenceInferFlops),
    )
    log.debug('accounting %r: params %d (%.4gx), train flops %d (%.4gx)', config, report.trainableParams, report.paramFactor, report.trainFlopsPerToken, report.trainFlopFactor)
    return report

def FormatFactor(factor: float) -> str:
    return '%.4gx' % factor

AccountingColumns = [
    'layerType', 'd1', 'd2', 'r', 'd', 'policy', 'density', 'nonlinearity',
    'trainableParams', 'storedParams', 'optimizerStateParams', 'paramFactor', 'storedParamFactor',
    'trainFlopsPerToken', 'trainFlopFactor', 'inferFlopsPerToken', 'inferMergedFlopsPerToken', 'inferUnmergedFlopsPerToken', 'inferFlopFactor',
]

def AccountingRow(report: AccountingReport) -> typing.Dict[str, typing.Any]:
    config = report.config if report.config is not None else LayerConfig()
    return {
        'layerType': config.layerType.value,
        'd1': config.d1,
        'd2': config.d2,
        'r': config.r,
        'd': config.GetNumModules(),
        'policy': config.policyType.value if not _IsUnmasked(config) else '',
        'density': config.GetPattern().GetDensity() if not _IsUnmasked(config) else 1.0,
        'nonlinearity': config.nonlinearity.value,
        'trainableParams': report.trainableParams,
        'storedParams': report.storedParams,
        'optimizerStateParams': report.optimizerStateParams,
        'paramFactor': report.paramFactor,
        'storedParamFactor': report.storedParamFactor,
        'trainFlopsPerToken': report.trainFlopsPerToken,
        'trainFlopFactor': report.trainFlopFactor,
        'inferFlopsPerToken': report.inferFlopsPerToken,
        'inferMergedFlopsPerToken': report.inferMergedFlopsPerToken,
        'inferUnmergedFlopsPerToken': report.inferUnmergedFlopsPerToken,
        'inferFlopFactor': report.inferFlopFactor,
    }

def RenderAccountingMarkdown(reports: typing.Sequence[AccountingReport]) -> str:
    lines = [
        '<!-- %s -->' % FlopConvention,
        '',
        '| layer | d | r | density | #Param | #Param factor | train FLOPs | train factor | infer FLOPs | infer factor |',
        '|---|---|---|---|---|---|---|---|---|---|',
    ]
    for report in reports:
        row = AccountingRow(report)
        lines.append('| %s | %d | %d | %.4g | %d | %s | %d | %s | %d | %s |' % (
            row['layerType'], row['d'], row['r'], row['density'], row['trainableParams'], FormatFactor(row['paramFactor']),
            row['trainFlopsPerToken'], FormatFactor(row['trainFlopFactor']), row['inferFlopsPerToken'], FormatFactor(row['inferFlopFactor']),
        ))
    return '\n'.join(lines) + '\n'
