# -*- coding: utf-8 -*-

import argparse
import enum
import os
import sys
import typing # noqa: F401 # used in type check

from . import CapaDataObject
from .capaerror import CapaError, CapaErrorCode
from . import capalinalg, capamask, capalayer, caparank, capaaccounting, capaharness, capareport

import logging
log = logging.getLogger(__name__)

ManifestVersion = 'capaboost/1'
OutputDirEnvironmentVariable = 'CAPABOOST_OUTPUT_DIR'
DefaultOutputDir = './capaboost-output'

ExitSuccess = 0
ExitFailure = 1 # numeric failure or a checked property did not hold
ExitUsage = 2

CommandAliases = {'rank-additivity': 'theorem1'} # alias -> command name
class Manifest(CapaDataObject):
    """
    Experiment manifest. config holds the command-specific struct as a plain dict.
    """
    version = ManifestVersion # type: str
    command = '' # type: str
    config = {} # type: typing.Dict[str, typing.Any]
    outputDir = '' # type: str
    seed = 0 # type: int

class RankTableConfig(CapaDataObject):
    d1 = 768 # type: int
    d2 = 768 # type: int
    rValues = [8, 16, 32, 64] # type: typing.List[int]
    dValues = [1, 2, 4] # type: typing.List[int]
    policyType = capamask.MaskPolicyType.DiffMask # type: capamask.MaskPolicyType
    density = 0.5 # type: float
    seeds = [0, 1, 2] # type: typing.List[int]
    referenceR = 8 # type: int
    relTol = capalinalg.DefaultRankTolerance # type: float

class AccountingTableConfig(CapaDataObject):
    d1 = 768 # type: int
    d2 = 768 # type: int
    rValues = [8, 16, 32, 64] # type: typing.List[int]
    dValues = [1, 2, 4] # type: typing.List[int] # d = 1 is plain LoRA
    policyType = capamask.MaskPolicyType.DiffMask # type: capamask.MaskPolicyType
    density = 0.5 # type: float
    nonlinearity = capalayer.Nonlinearity.NoNonlinearity # type: capalayer.Nonlinearity
    referenceR = 8 # type: int
    maskSeed = 0 # type: int

class SweepType(enum.Enum):
    Density = 'density'
    Dimension = 'dimension'

class SweepConfig(CapaDataObject):
    """
    A density sweep varies (density, policy); a dimension sweep varies (d, r). Both repeat over seeds.
    """
    _nested = {'task': capaharness.TaskSpec, 'layer': capalayer.LayerConfig, 'train': capaharness.TrainConfig}

    sweep = SweepType.Density # type: SweepType
    task = None # type: typing.Optional[capaharness.TaskSpec]
    layer = None # type: typing.Optional[capalayer.LayerConfig]
    train = None # type: typing.Optional[capaharness.TrainConfig]
    densities = [0.1, 0.3, 0.5, 0.7, 0.9] # type: typing.List[float]
    policies = ['diffmask', 'samemask', 'dropout'] # type: typing.List[str]
    rValues = [8, 16, 32, 64] # type: typing.List[int]
    dValues = [1, 2, 3] # type: typing.List[int]
    seeds = [] # type: typing.List[int] # empty means the manifest seed alone
    referenceR = 0 # type: int # 0 means min(rValues)
    numWorkers = 1 # type: int

class TrainOneConfig(CapaDataObject):
    _nested = {'task': capaharness.TaskSpec, 'layer': capalayer.LayerConfig, 'train': capaharness.TrainConfig}

    task = None # type: typing.Optional[capaharness.TaskSpec]
    layer = None # type: typing.Optional[capalayer.LayerConfig]
    train = None # type: typing.Optional[capaharness.TrainConfig]
    referenceR = 0 # type: int # 0 means the layer's r

def LoadManifest(path: str, command: str) -> Manifest:
    """
    Read and check a manifest file for command.
    """
    values = capareport.ReadJson(path)
    try:
        manifest = Manifest.FromDict(values)
    except CapaError as e:
        raise CapaError(CapaErrorCode.UsageError, 'invalid manifest %s: %s' % (path, e.GetErrorDetail()))
    if manifest.version != ManifestVersion:
        raise CapaError(CapaErrorCode.UsageError, 'manifest %s has version %r, expected %r' % (path, manifest.version, ManifestVersion))
    if CommandAliases.get(manifest.command, manifest.command) != command:
        raise CapaError(CapaErrorCode.UsageError, 'manifest %s is for command %r, not %r' % (path, manifest.command, command))
    return manifest

def ResolveOutputDir(flagValue: typing.Optional[str], manifest: typing.Optional[Manifest]) -> str:
    """
    --output-dir flag, then the environment variable, then the manifest, then the default.
    """
    if flagValue:
        return flagValue
    environmentValue = os.environ.get(OutputDirEnvironmentVariable)
    if environmentValue:
        return environmentValue
    if manifest is not None and manifest.outputDir:
        return manifest.outputDir
    return DefaultOutputDir

def _ParseConfig(configClass: typing.Any, values: typing.Mapping[str, typing.Any]) -> typing.Any:
    try:
        return configClass.FromDict(dict(values))
    except CapaError as e:
        raise CapaError(CapaErrorCode.UsageError, 'invalid %s: %s' % (configClass.__name__, e.GetErrorDetail()))

def _LoadCommandConfig(options: argparse.Namespace, command: str, configClass: typing.Any) -> typing.Tuple[typing.Any, typing.Optional[Manifest]]:
    manifest = None # type: typing.Optional[Manifest]
    values = {} # type: typing.Dict[str, typing.Any]
    if options.manifest:
        manifest = LoadManifest(options.manifest, command)
        values = dict(manifest.config)
    return _ParseConfig(configClass, values), manifest

def _Override(config: CapaDataObject, **flags: typing.Any) -> None:
    for key, value in flags.items():
        if value is not None:
            setattr(config, key, config._CoerceValue(key, value))

def _WriteManifestEcho(outputDir: str, command: str, config: CapaDataObject, seed: int) -> None:
    """
    The resolved manifest, so the outputs can be reproduced from outputDir alone.
    """
    capareport.WriteJson(os.path.join(outputDir, 'manifest.json'), Manifest(command=command, config=config.ToDict(), outputDir=outputDir, seed=seed).ToDict())

def CommandRankAdditivity(options: argparse.Namespace) -> int:
    config, manifest = _LoadCommandConfig(options, 'theorem1', caparank.RankTrialConfig)
    if manifest is not None and 'seed' not in manifest.config:
        config.seed = manifest.seed
    _Override(config, dDim=options.dDim, r=options.r, trials=options.trials, seed=options.seed, relTol=options.relTol, numWorkers=options.workers)
    outputDir = ResolveOutputDir(options.outputDir, manifest)

    report = caparank.RunRankAdditivityTrials(config)
    capareport.WriteJson(os.path.join(outputDir, 'rank-additivity.json'), report.ToDict())
    capareport.WriteText(os.path.join(outputDir, 'rank-additivity.txt'), report.GetSummary())
    _WriteManifestEcho(outputDir, 'theorem1', config, config.seed)
    print(report.GetSummary())
    if not report.IsVerified():
        log.error('rank additivity did not hold: %s', report.GetSummary())
        return ExitFailure
    return ExitSuccess

def CommandRankTable(options: argparse.Namespace) -> int:
    config, manifest = _LoadCommandConfig(options, 'rank-table', RankTableConfig)
    _Override(config, d1=options.d1, d2=options.d2, rValues=options.rValues, dValues=options.dValues, seeds=options.seeds, density=options.density, policyType=options.policy, referenceR=options.referenceR)
    outputDir = ResolveOutputDir(options.outputDir, manifest)

    table = caparank.LayerRankSweep(
        config.d1, config.d2, config.rValues, config.dValues, policyType=config.policyType, seeds=config.seeds,
        density=config.density, referenceR=config.referenceR, relTol=config.relTol,
    )
    capareport.WriteJson(os.path.join(outputDir, 'rank-table.json'), table.ToDict())
    capareport.WriteCsv(os.path.join(outputDir, 'rank-table.csv'), table.GetRows())
    capareport.WriteText(os.path.join(outputDir, 'rank-table.md'), table.ToMarkdown())
    _WriteManifestEcho(outputDir, 'rank-table', config, manifest.seed if manifest is not None else 0)
    print(table.ToMarkdown(), end='')
    if not table.IsExact():
        log.error('some rank cells differ from the expected rank')
        return ExitFailure
    return ExitSuccess

def AccountingGrid(config: AccountingTableConfig) -> typing.List[capaaccounting.AccountingReport]:
    """
    One report per (d, r); d = 1 is plain LoRA, larger d are CapaBoost layers.
    """
    reports = []
    for d in config.dValues:
        for r in config.rValues:
            layerConfig = capalayer.LayerConfig(
                layerType=capalayer.LayerType.Lora if d == 1 else capalayer.LayerType.CapaBoost,
                d1=config.d1, d2=config.d2, r=r, d=d, policyType=config.policyType, maskSeed=config.maskSeed,
                pattern=capamask.MaskPattern.Bernoulli(config.density),
                nonlinearity=config.nonlinearity if d != 1 else capalayer.Nonlinearity.NoNonlinearity,
            )
            reports.append(capaaccounting.Account(layerConfig, referenceR=config.referenceR))
    return reports

def CommandAccounting(options: argparse.Namespace) -> int:
    config, manifest = _LoadCommandConfig(options, 'accounting', AccountingTableConfig)
    _Override(config, d1=options.d1, d2=options.d2, rValues=options.rValues, dValues=options.dValues, density=options.density, policyType=options.policy, referenceR=options.referenceR)
    outputDir = ResolveOutputDir(options.outputDir, manifest)

    reports = AccountingGrid(config)
    capareport.WriteJson(os.path.join(outputDir, 'accounting.json'), [report.ToDict() for report in reports])
    capareport.WriteCsv(os.path.join(outputDir, 'accounting.csv'), [capaaccounting.AccountingRow(report) for report in reports], capaaccounting.AccountingColumns)
    capareport.WriteText(os.path.join(outputDir, 'accounting.md'), capaaccounting.RenderAccountingMarkdown(reports))
    _WriteManifestEcho(outputDir, 'accounting', config, manifest.seed if manifest is not None else 0)
    print(capaaccounting.RenderAccountingMarkdown(reports), end='')
    return ExitSuccess

def _CheckTaskAndLayer(task: capaharness.TaskSpec, layer: capalayer.LayerConfig) -> None:
    if (task.d1, task.d2) != (layer.d1, layer.d2):
        raise CapaError(CapaErrorCode.UsageError, 'layer is %dx%d but task is %dx%d' % (layer.d1, layer.d2, task.d1, task.d2))

def _WriteResults(outputDir: str, results: typing.Sequence[capaharness.ExperimentResult]) -> None:
    capareport.WriteJsonLines(os.path.join(outputDir, 'results.jsonl'), [result.ToDict() for result in results])
    capareport.WriteCsv(os.path.join(outputDir, 'runs.csv'), [capaharness.ResultRow(result) for result in results])
    for result in results:
        capareport.WriteCurve(os.path.join(outputDir, 'curves', capareport.SafeFileName(result.runKey or 'run') + '.dat'), result.trainLosses, result.evalLosses)

def DensityComparisons(results: typing.Sequence[capaharness.ExperimentResult], densities: typing.Sequence[float]) -> typing.List[capaharness.ArmComparison]:
    """
    Distinct masks against each other policy at every density, on final eval loss.
    """
    comparisons = []
    diffMask = capamask.MaskPolicyType.DiffMask.value
    for density in densities:
        candidate = capaharness.SelectRuns(results, density=float(density), policy=diffMask)
        for policy in (capamask.MaskPolicyType.SameMask.value, capamask.MaskPolicyType.Dropout.value):
            baseline = capaharness.SelectRuns(results, density=float(density), policy=policy)
            if candidate and baseline:
                comparisons.append(capaharness.CompareArms(
                    candidate, baseline, which='eval',
                    candidateName='%s@%.4g' % (diffMask, density), baselineName='%s@%.4g' % (policy, density),
                ))
    return comparisons

def DimensionComparisons(results: typing.Sequence[capaharness.ExperimentResult], rValues: typing.Sequence[int], dValues: typing.Sequence[int]) -> typing.List[capaharness.ArmComparison]:
    """
    Each d > 1 cell against the single module of the same total rank d * r, on final eval loss.
    """
    comparisons = []
    for d in dValues:
        if d == 1:
            continue
        for r in rValues:
            candidate = capaharness.SelectRuns(results, d=d, r=r)
            baseline = capaharness.SelectRuns(results, d=1, r=d * r)
            if candidate and baseline:
                comparisons.append(capaharness.CompareArms(
                    candidate, baseline, which='eval', candidateName='d=%d r=%d' % (d, r), baselineName='d=1 r=%d' % (d * r),
                ))
    return comparisons

def CommandSweep(options: argparse.Namespace) -> int:
    if not options.manifest:
        raise CapaError(CapaErrorCode.UsageError, 'sweep needs --manifest')
    config, manifest = _LoadCommandConfig(options, 'sweep', SweepConfig)
    task = config.task if config.task is not None else capaharness.TaskSpec()
    layer = config.layer if config.layer is not None else capalayer.LayerConfig()
    train = config.train if config.train is not None else capaharness.TrainConfig()
    seeds = config.seeds or [manifest.seed]
    _CheckTaskAndLayer(task, layer)
    outputDir = ResolveOutputDir(options.outputDir, manifest)

    syntheticTask = capaharness.MakeTask(task)
    if config.sweep == SweepType.Density:
        try:
            policies = [capamask.MaskPolicyType(policy) for policy in config.policies]
        except ValueError as e:
            raise CapaError(CapaErrorCode.UsageError, 'unknown policy in %r: %s' % (config.policies, e))
        results = capaharness.DensitySweep(syntheticTask, layer, train, config.densities, seeds, policies=policies, numWorkers=config.numWorkers)
        axisNames = ['density', 'policy']
        comparisons = DensityComparisons(results, config.densities)
    else:
        results = capaharness.DimensionSweep(syntheticTask, layer, train, config.rValues, config.dValues, seeds, referenceR=config.referenceR or None, numWorkers=config.numWorkers)
        axisNames = ['d', 'r']
        comparisons = DimensionComparisons(results, config.rValues, config.dValues)

    _WriteResults(outputDir, results)
    summary = capaharness.SummarizeRuns(results, axisNames)
    capareport.WriteCsv(os.path.join(outputDir, 'summary.csv'), summary)
    capareport.WriteJson(os.path.join(outputDir, 'comparisons.json'), [comparison.ToDict() for comparison in comparisons])
    _WriteManifestEcho(outputDir, 'sweep', config, manifest.seed)
    numDiverged = sum(1 for result in results if not result.IsCompleted())
    print('%d runs, %d diverged, results in %s' % (len(results), numDiverged, outputDir))
    for comparison in comparisons:
        print('%s vs %s: %.6g vs %.6g (%s)' % (comparison.candidate, comparison.baseline, comparison.candidateMedian, comparison.baselineMedian, 'holds' if comparison.holds else 'does not hold'))
    return ExitSuccess

def CommandTrainOne(options: argparse.Namespace) -> int:
    if not options.manifest:
        raise CapaError(CapaErrorCode.UsageError, 'train-one needs --manifest')
    config, manifest = _LoadCommandConfig(options, 'train-one', TrainOneConfig)
    task = config.task if config.task is not None else capaharness.TaskSpec()
    layer = config.layer if config.layer is not None else capalayer.LayerConfig()
    train = config.train if config.train is not None else capaharness.TrainConfig(seed=manifest.seed)
    _CheckTaskAndLayer(task, layer)
    outputDir = ResolveOutputDir(options.outputDir, manifest)

    result = capaharness.Train(layer, capaharness.MakeTask(task), train, runKey='train-one', referenceR=config.referenceR or None)
    capareport.WriteJson(os.path.join(outputDir, 'result.json'), result.ToDict())
    capareport.WriteCurve(os.path.join(outputDir, 'curve.dat'), result.trainLosses, result.evalLosses)
    _WriteManifestEcho(outputDir, 'train-one', config, manifest.seed)
    print('%s: train %.6g eval %.6g rank %d' % (result.status.value, result.finalTrainLoss, result.finalEvalLoss, result.finalRank))
    if not result.IsCompleted():
        return ExitFailure
    return ExitSuccess

def _IntList(value: str) -> typing.List[int]:
    try:
        return [int(item) for item in value.split(',') if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError('expected comma separated integers, got %r' % value)

def BuildParser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='capaboost', description='Rank checks, accounting and synthetic experiments for masked weight-tied low-rank layers.')
    parser.add_argument('--loglevel', dest='logLevel', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='console log level (default: %(default)s)')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--manifest', default=None, help='experiment manifest json')
    common.add_argument('--output-dir', dest='outputDir', default=None, help='overrides %s and the manifest outputDir' % OutputDirEnvironmentVariable)

    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True

    rankAdditivity = subparsers.add_parser('theorem1', aliases=['rank-additivity'], parents=[common], help='Monte Carlo check that ranks of independent random low-rank products add')
    rankAdditivity.add_argument('--d-dim', dest='dDim', type=int, default=None, help='ambient dimension (default 64)')
    rankAdditivity.add_argument('--r', dest='r', type=int, default=None, help='rank of each product (default 8)')
    rankAdditivity.add_argument('--trials', type=int, default=None, help='number of trials (default 1000)')
    rankAdditivity.add_argument('--seed', type=int, default=None, help='trial i uses seed + i')
    rankAdditivity.add_argument('--rel-tol', dest='relTol', type=float, default=None, help='rank tolerance relative to the largest singular value')
    rankAdditivity.add_argument('--workers', type=int, default=None, help='worker threads')
    rankAdditivity.set_defaults(func=CommandRankAdditivity)

    for name, func, description in (
        ('rank-table', CommandRankTable, 'numerical rank of layer effective weights over an (r, d) grid'),
        ('accounting', CommandAccounting, 'parameter and FLOP factors over an (r, d) grid'),
    ):
        subparser = subparsers.add_parser(name, parents=[common], help=description)
        subparser.add_argument('--d1', type=int, default=None)
        subparser.add_argument('--d2', type=int, default=None)
        subparser.add_argument('--r-values', dest='rValues', type=_IntList, default=None, help='comma separated, e.g. 8,16,32,64')
        subparser.add_argument('--d-values', dest='dValues', type=_IntList, default=None, help='comma separated, e.g. 1,2,4')
        subparser.add_argument('--density', type=float, default=None)
        subparser.add_argument('--policy', choices=[policyType.value for policyType in capamask.MaskPolicyType], default=None)
        subparser.add_argument('--reference-r', dest='referenceR', type=int, default=None, help='LoRA inner dimension the factors are relative to')
        if name == 'rank-table':
            subparser.add_argument('--seeds', type=_IntList, default=None, help='comma separated mask and init seeds')
        subparser.set_defaults(func=func)

    sweep = subparsers.add_parser('sweep', parents=[common], help='density or dimension sweep described by a manifest')
    sweep.set_defaults(func=CommandSweep)

    trainOne = subparsers.add_parser('train-one', parents=[common], help='train a single layer described by a manifest')
    trainOne.set_defaults(func=CommandTrainOne)
    return parser

def Run(options: argparse.Namespace) -> int:
    """
    Execute parsed options and map failures onto exit codes.
    """
    try:
        return options.func(options)
    except CapaError as e:
        if e.GetErrorCode() in (CapaErrorCode.UsageError, CapaErrorCode.ConfigError, CapaErrorCode.ShapeError):
            log.error('usage error: %s', e.GetErrorDetail())
            sys.stderr.write('capaboost %s: error: %s\n' % (options.command, e.GetErrorDetail()))
            return ExitUsage
        log.exception('%s failed: %s', options.command, e)
        return ExitFailure

def Main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    parser = BuildParser()
    try:
        options = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on malformed flags and 0 on --help
        return e.code if isinstance(e.code, int) else ExitUsage
    return Run(options)
