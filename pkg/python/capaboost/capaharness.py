# -*- coding: utf-8 -*-

import concurrent.futures
import enum
import math
import time
import typing # noqa: F401 # used in type check

import numpy as np

from . import CapaDataObject
from .capaerror import CapaError, CapaErrorCode
from . import capalinalg, capamask, capalayer, capaaccounting

import logging
log = logging.getLogger(__name__)

Matrix = capalinalg.Matrix

class TaskType(enum.Enum):
    LowRankTeacher = 'lowrankteacher' # y = x (wPre + U V) + noise, rank(U V) = teacherRank
    TiedMaskTeacher = 'tiedmaskteacher' # teacher increment is a Gaussian-initialized masked tied layer
    SmallClassification = 'smallclassification' # labels = argmax of low-rank teacher logits

class TaskSpec(CapaDataObject):
    """
    Synthetic task description. For classification d1 is the input dim and d2 the number of classes.
    """
    _nested = {'teacherPattern': capamask.MaskPattern}

    taskType = TaskType.LowRankTeacher # type: TaskType
    d1 = 64 # type: int
    d2 = 64 # type: int
    teacherRank = 16 # type: int # LowRankTeacher and SmallClassification
    teacherModules = 2 # type: int # TiedMaskTeacher
    teacherInnerRank = 8 # type: int # TiedMaskTeacher
    teacherMaskSeed = 0 # type: int # TiedMaskTeacher, a student with the same maskSeed shares its masks
    teacherPattern = None # type: typing.Optional[capamask.MaskPattern]
    noiseStd = 0.0 # type: float
    numTrain = 128 # type: int
    numEval = 128 # type: int
    seed = 0 # type: int

    def IsClassification(self) -> bool:
        return self.taskType == TaskType.SmallClassification

    def GetTeacherLayerConfig(self) -> capalayer.LayerConfig:
        return capalayer.LayerConfig(
            layerType=capalayer.LayerType.CapaBoost, d1=self.d1, d2=self.d2, r=self.teacherInnerRank, d=self.teacherModules,
            policyType=capamask.MaskPolicyType.DiffMask, maskSeed=self.teacherMaskSeed,
            pattern=self.teacherPattern if self.teacherPattern is not None else capamask.MaskPattern(),
            initScheme=capalayer.InitScheme.Gaussian,
        )

    def Validate(self) -> None:
        if self.d1 < 1 or self.d2 < 1:
            raise CapaError(CapaErrorCode.ConfigError, 'task dims must be positive, got %dx%d' % (self.d1, self.d2))
        if self.numTrain < 1 or self.numEval < 1:
            raise CapaError(CapaErrorCode.ConfigError, 'task needs at least one train and one eval sample')
        if self.noiseStd < 0.0:
            raise CapaError(CapaErrorCode.ConfigError, 'noiseStd must be nonnegative, got %r' % self.noiseStd)
        if self.taskType == TaskType.TiedMaskTeacher:
            self.GetTeacherLayerConfig().Validate()
        elif not 0 <= self.teacherRank <= min(self.d1, self.d2):
            raise CapaError(CapaErrorCode.ConfigError, 'teacher rank %d outside [0, %d]' % (self.teacherRank, min(self.d1, self.d2)))
        if self.IsClassification() and self.d2 < 2:
            raise CapaError(CapaErrorCode.ConfigError, 'classification needs at least two classes')

class SyntheticTask:
    """
    Materialized datasets. Train rows and eval rows are disjoint draws of the same stream.
    For classification the targets are integer labels.
    """

    spec = None # type: TaskSpec
    wPre = None # type: Matrix # frozen pre-trained weight shared with every student
    deltaW = None # type: Matrix # teacher increment
    teacherB = None # type: typing.Optional[Matrix]
    teacherA = None # type: typing.Optional[Matrix]
    xTrain = None # type: Matrix
    yTrain = None # type: np.ndarray
    xEval = None # type: Matrix
    yEval = None # type: np.ndarray

    def IsClassification(self) -> bool:
        return self.spec.IsClassification()

def MakeTask(spec: TaskSpec) -> SyntheticTask:
    """
    Deterministic in spec. Inputs are standard Gaussian rows scaled by 1/sqrt(d1), wPre is Gaussian
    scaled the same way, and the low-rank increment is (U / sqrt(R)) V for Gaussian U, V.
    """
    spec.Validate()
    task = SyntheticTask()
    task.spec = spec
    stream = capalinalg.RngStream(spec.seed)
    task.wPre = capalinalg.Gaussian(spec.d1, spec.d2, stream) / math.sqrt(spec.d1)

    if spec.taskType == TaskType.TiedMaskTeacher:
        teacher = capalayer.InitLayer(spec.GetTeacherLayerConfig(), capalinalg.DeriveSeed(spec.seed, 1))
        parameters = teacher.GetParameters()
        task.teacherB = parameters['B']
        task.teacherA = parameters['A']
        task.deltaW = teacher.EffectiveWeight(0)
    elif spec.teacherRank > 0:
        task.teacherB = capalinalg.Gaussian(spec.d1, spec.teacherRank, stream) / math.sqrt(spec.teacherRank)
        task.teacherA = capalinalg.Gaussian(spec.teacherRank, spec.d2, stream)
        task.deltaW = task.teacherB @ task.teacherA
    else:
        task.deltaW = np.zeros((spec.d1, spec.d2), dtype=np.float64)

    numSamples = spec.numTrain + spec.numEval
    x = capalinalg.Gaussian(numSamples, spec.d1, stream) / math.sqrt(spec.d1)
    clean = x @ task.wPre + x @ task.deltaW
    if spec.noiseStd > 0.0:
        noisy = clean + spec.noiseStd * capalinalg.Gaussian(numSamples, spec.d2, stream)
    else:
        noisy = clean
    if spec.IsClassification():
        targets = np.argmax(noisy, axis=1) # type: np.ndarray
    else:
        targets = noisy
    task.xTrain, task.xEval = x[:spec.numTrain], x[spec.numTrain:]
    task.yTrain, task.yEval = targets[:spec.numTrain], targets[spec.numTrain:]
    log.debug('made task %r', spec)
    return task

def MeanSquaredError(prediction: Matrix, target: Matrix) -> typing.Tuple[float, Matrix]:
    """
    Mean over every entry, and its gradient with respect to prediction.
    """
    residual = prediction - target
    return float(np.mean(residual * residual)), 2.0 * residual / residual.size

def SoftmaxCrossEntropy(logits: Matrix, labels: np.ndarray) -> typing.Tuple[float, Matrix]:
    """
    Mean cross-entropy over the batch, and its gradient with respect to logits.
    """
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    logNormalizer = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    logProbabilities = shifted - logNormalizer
    rows = np.arange(logits.shape[0])
    loss = -float(np.mean(logProbabilities[rows, labels]))
    gradient = np.exp(logProbabilities)
    gradient[rows, labels] -= 1.0
    return loss, gradient / logits.shape[0]

def TaskLoss(task: SyntheticTask, prediction: Matrix, target: np.ndarray) -> typing.Tuple[float, Matrix]:
    if task.IsClassification():
        return SoftmaxCrossEntropy(prediction, target)
    return MeanSquaredError(prediction, target)

class OptimizerType(enum.Enum):
    SGD = 'sgd'
    Adam = 'adam'

class OptimizerConfig(CapaDataObject):
    optimizerType = OptimizerType.Adam # type: OptimizerType
    lr = 1e-2 # type: float
    momentum = 0.0 # type: float # SGD
    beta1 = 0.9 # type: float # Adam
    beta2 = 0.999 # type: float # Adam
    epsilon = 1e-8 # type: float # Adam

    def Validate(self) -> None:
        if self.lr < 0.0:
            raise CapaError(CapaErrorCode.ConfigError, 'learning rate must be nonnegative, got %r' % self.lr)
        if not 0.0 <= self.momentum < 1.0:
            raise CapaError(CapaErrorCode.ConfigError, 'momentum must be in [0, 1), got %r' % self.momentum)
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise CapaError(CapaErrorCode.ConfigError, 'adam betas must be in [0, 1), got %r %r' % (self.beta1, self.beta2))
        if self.epsilon <= 0.0:
            raise CapaError(CapaErrorCode.ConfigError, 'adam epsilon must be positive, got %r' % self.epsilon)

class OptimizerState:
    """
    Per-parameter moment buffers. Step returns new parameter matrices and never writes the old ones.
    """

    _config = None # type: OptimizerConfig
    _numSteps = 0 # type: int
    _firstMoments = None # type: typing.Dict[str, Matrix] # SGD velocity or Adam m
    _secondMoments = None # type: typing.Dict[str, Matrix] # Adam v

    def __init__(self, config: OptimizerConfig):
        config.Validate()
        self._config = config
        self._numSteps = 0
        self._firstMoments = {}
        self._secondMoments = {}

    def GetNumSteps(self) -> int:
        return self._numSteps

    def GetBuffer(self, name: str) -> typing.Optional[Matrix]:
        return self._firstMoments.get(name)

    def Step(self, parameters: typing.Mapping[str, Matrix], gradients: typing.Mapping[str, Matrix]) -> typing.Dict[str, Matrix]:
        config = self._config
        self._numSteps += 1
        updated = dict(parameters)
        for name, gradient in gradients.items():
            value = parameters[name]
            if gradient.shape != value.shape:
                raise CapaError(CapaErrorCode.ShapeError, 'gradient of %s is %r, parameter is %r' % (name, gradient.shape, value.shape))
            if config.optimizerType == OptimizerType.SGD:
                velocity = self._firstMoments.get(name)
                velocity = gradient if velocity is None else config.momentum * velocity + gradient
                self._firstMoments[name] = velocity
                updated[name] = value - config.lr * velocity
                continue

            m = self._firstMoments.get(name, np.zeros_like(value))
            v = self._secondMoments.get(name, np.zeros_like(value))
            m = config.beta1 * m + (1.0 - config.beta1) * gradient
            v = config.beta2 * v + (1.0 - config.beta2) * gradient * gradient
            self._firstMoments[name] = m
            self._secondMoments[name] = v
            mHat = m / (1.0 - config.beta1 ** self._numSteps)
            vHat = v / (1.0 - config.beta2 ** self._numSteps)
            updated[name] = value - config.lr * mHat / (np.sqrt(vHat) + config.epsilon)
        return updated

class TrainConfig(CapaDataObject):
    _nested = {'optimizer': OptimizerConfig}

    optimizer = None # type: typing.Optional[OptimizerConfig]
    epochs = 500 # type: int
    batchSize = 0 # type: int # 0 is full batch
    seed = 0 # type: int # drives init and shuffling

    def GetOptimizer(self) -> OptimizerConfig:
        if self.optimizer is None:
            return OptimizerConfig()
        return self.optimizer

    def Validate(self) -> None:
        if self.epochs < 0:
            raise CapaError(CapaErrorCode.ConfigError, 'epochs must be nonnegative, got %d' % self.epochs)
        if self.batchSize < 0:
            raise CapaError(CapaErrorCode.ConfigError, 'batchSize must be nonnegative, got %d' % self.batchSize)
        self.GetOptimizer().Validate()

class RunStatus(enum.Enum):
    Completed = 'completed'
    Diverged = 'diverged'

class ExperimentResult(CapaDataObject):
    """
    One training run. Everything except wallTime is a deterministic function of the configs.
    """
    _nested = {
        'layerConfig': capalayer.LayerConfig,
        'taskSpec': TaskSpec,
        'trainConfig': TrainConfig,
        'accounting': capaaccounting.AccountingReport,
    }

    runKey = '' # type: str
    axes = {} # type: typing.Dict[str, typing.Any] # sweep coordinates of this run
    layerConfig = None # type: typing.Optional[capalayer.LayerConfig]
    taskSpec = None # type: typing.Optional[TaskSpec]
    trainConfig = None # type: typing.Optional[TrainConfig]
    status = RunStatus.Completed # type: RunStatus
    lossKind = 'mse' # type: str
    trainLosses = [] # type: typing.List[float] # one per epoch, evaluated in inference mode
    evalLosses = [] # type: typing.List[float]
    finalTrainLoss = 0.0 # type: float
    finalEvalLoss = 0.0 # type: float
    finalEvalAccuracy = -1.0 # type: float # classification only
    finalRank = -1 # type: int # numerical rank of the effective weight, -1 when undefined
    accounting = None # type: typing.Optional[capaaccounting.AccountingReport]
    frozenBaseChecksum = '' # type: str
    frozenBaseIntact = True # type: bool
    seed = 0 # type: int
    wallTime = 0.0 # type: float

    def IsCompleted(self) -> bool:
        return self.status == RunStatus.Completed

    def ToDeterministicDict(self) -> typing.Dict[str, typing.Any]:
        values = self.ToDict()
        values.pop('wallTime', None)
        return values

def _Evaluate(layer: capalayer.IncrementalLayer, task: SyntheticTask, x: Matrix, target: np.ndarray) -> typing.Tuple[float, float]:
    prediction = layer.Forward(x, None)
    loss, _ = TaskLoss(task, prediction, target)
    accuracy = -1.0
    if task.IsClassification():
        accuracy = float(np.mean(np.argmax(prediction, axis=1) == target))
    return loss, accuracy

def _BatchOrder(numSamples: int, batchSize: int, seed: int, epoch: int) -> typing.List[np.ndarray]:
    if batchSize == 0 or batchSize >= numSamples:
        return [np.arange(numSamples)]
    keys = capalinalg.RngStream(capalinalg.DeriveSeed(seed, 2 + epoch)).NextUniform(numSamples)
    order = np.argsort(keys, kind='stable')
    return [order[start:start + batchSize] for start in range(0, numSamples, batchSize)]

def Train(layerConfig: capalayer.LayerConfig, task: SyntheticTask, trainConfig: TrainConfig, runKey: str = '', axes: typing.Optional[typing.Mapping[str, typing.Any]] = None, referenceR: typing.Optional[int] = None, logPrefix: str = '') -> ExperimentResult:
    """
    Gradient descent on the incremental path only; wPre stays frozen and masks are realized per policy at
    every step. Losses are recorded after every epoch in inference mode. A non-finite loss ends the run with
    status diverged instead of raising.
    """
    trainConfig.Validate()
    layerConfig.Validate()
    if (layerConfig.d1, layerConfig.d2) != (task.spec.d1, task.spec.d2):
        raise CapaError(CapaErrorCode.ShapeError, 'layer is %dx%d but task is %dx%d' % (layerConfig.d1, layerConfig.d2, task.spec.d1, task.spec.d2))
    start = time.monotonic()
    layer = capalayer.InitLayer(layerConfig, capalinalg.DeriveSeed(trainConfig.seed, 0), wPre=task.wPre)
    checksumBefore = capalinalg.Checksum(task.wPre)
    optimizer = OptimizerState(trainConfig.GetOptimizer())

    status = RunStatus.Completed
    trainLosses = [] # type: typing.List[float]
    evalLosses = [] # type: typing.List[float]
    accuracy = -1.0
    step = 0
    with np.errstate(over='ignore', invalid='ignore'):
        for epoch in range(trainConfig.epochs):
            for indices in _BatchOrder(task.xTrain.shape[0], trainConfig.batchSize, trainConfig.seed, epoch):
                x = task.xTrain[indices]
                prediction, cache = layer.ForwardWithCache(x, step)
                _, upstream = TaskLoss(task, prediction, task.yTrain[indices])
                gradients = layer.Backward(x, upstream, step, cache)
                layer = layer.WithParameters(optimizer.Step(layer.GetParameters(), gradients.AsDict()))
                step += 1

            trainLoss, _ = _Evaluate(layer, task, task.xTrain, task.yTrain)
            evalLoss, accuracy = _Evaluate(layer, task, task.xEval, task.yEval)
            if not (math.isfinite(trainLoss) and math.isfinite(evalLoss)):
                log.warning('%srun %s diverged at epoch %d', logPrefix, runKey, epoch)
                status = RunStatus.Diverged
                break
            trainLosses.append(trainLoss)
            evalLosses.append(evalLoss)
            log.debug('%s%s epoch %d: train %.6g eval %.6g', logPrefix, runKey, epoch, trainLoss, evalLoss)

    if trainConfig.epochs == 0:
        trainLoss, _ = _Evaluate(layer, task, task.xTrain, task.yTrain)
        evalLoss, accuracy = _Evaluate(layer, task, task.xEval, task.yEval)
    else:
        trainLoss = trainLosses[-1] if trainLosses else float('nan')
        evalLoss = evalLosses[-1] if evalLosses else float('nan')

    finalRank = -1
    if status == RunStatus.Completed and layer.IsLinear():
        finalRank = capalinalg.NumericalRank(layer.EffectiveWeight(None))

    checksumAfter = capalinalg.Checksum(layer.GetBasis())
    result = ExperimentResult(
        runKey=runKey,
        axes=dict(axes or {}),
        layerConfig=layerConfig,
        taskSpec=task.spec,
        trainConfig=trainConfig,
        status=status,
        lossKind='crossentropy' if task.IsClassification() else 'mse',
        trainLosses=trainLosses,
        evalLosses=evalLosses,
        finalTrainLoss=float(trainLoss),
        finalEvalLoss=float(evalLoss),
        finalEvalAccuracy=accuracy,
        finalRank=finalRank,
        accounting=capaaccounting.Account(layerConfig, referenceR=referenceR),
        frozenBaseChecksum=checksumAfter,
        frozenBaseIntact=checksumAfter == checksumBefore,
        seed=trainConfig.seed,
        wallTime=time.monotonic() - start,
    )
    log.info('%s%s %s: train %.6g eval %.6g rank %d in %.2fs', logPrefix, runKey or 'run', status.value, result.finalTrainLoss, result.finalEvalLoss, finalRank, result.wallTime)
    return result

def _WithOverrides(value: typing.Any, **overrides: typing.Any) -> typing.Any:
    values = value.ToDict()
    values.update(overrides)
    return value.__class__.FromDict(values)

class SweepRun:
    runKey = '' # type: str
    axes = None # type: typing.Dict[str, typing.Any]
    layerConfig = None # type: capalayer.LayerConfig
    trainConfig = None # type: TrainConfig

    def __init__(self, runKey: str, axes: typing.Dict[str, typing.Any], layerConfig: capalayer.LayerConfig, trainConfig: TrainConfig):
        self.runKey = runKey
        self.axes = axes
        self.layerConfig = layerConfig
        self.trainConfig = trainConfig

def RunAll(runs: typing.Sequence[SweepRun], task: SyntheticTask, numWorkers: int = 1, referenceR: typing.Optional[int] = None) -> typing.List[ExperimentResult]:
    """
    Train independent runs, concurrently when numWorkers > 1. Results come back in run order.
    """
    def _Run(run: SweepRun) -> ExperimentResult:
        return Train(run.layerConfig, task, run.trainConfig, runKey=run.runKey, axes=run.axes, referenceR=referenceR)

    log.info('running %d runs on %d workers', len(runs), numWorkers)
    if numWorkers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=numWorkers) as executor:
            return list(executor.map(_Run, runs))
    return [_Run(run) for run in runs]

def DensitySweep(task: SyntheticTask, layerConfig: capalayer.LayerConfig, trainConfig: TrainConfig, densities: typing.Sequence[float], seeds: typing.Sequence[int], policies: typing.Sequence[capamask.MaskPolicyType] = (capamask.MaskPolicyType.DiffMask, capamask.MaskPolicyType.SameMask, capamask.MaskPolicyType.Dropout), numWorkers: int = 1) -> typing.List[ExperimentResult]:
    """
    Every (density, policy, seed) with fixed d and r. The seed drives init, shuffling and mask seeds.
    """
    if not densities or not seeds or not policies:
        raise CapaError(CapaErrorCode.ConfigError, 'density sweep needs densities, seeds and policies')
    for density in densities:
        if not 0.0 < density <= 1.0:
            raise CapaError(CapaErrorCode.ConfigError, 'sweep densities must be in (0, 1], got %r' % density)
    runs = []
    for density in densities:
        for policyType in policies:
            for seed in seeds:
                runs.append(SweepRun(
                    'density=%.4g/policy=%s/seed=%d' % (density, policyType.value, seed),
                    {'density': float(density), 'policy': policyType.value},
                    _WithOverrides(layerConfig, layerType=capalayer.LayerType.CapaBoost, pattern=capamask.MaskPattern.Bernoulli(density), policyType=policyType, maskSeed=seed),
                    _WithOverrides(trainConfig, seed=seed),
                ))
    return RunAll(runs, task, numWorkers=numWorkers, referenceR=layerConfig.r)

def DimensionSweep(task: SyntheticTask, layerConfig: capalayer.LayerConfig, trainConfig: TrainConfig, rValues: typing.Sequence[int], dValues: typing.Sequence[int], seeds: typing.Sequence[int], referenceR: typing.Optional[int] = None, numWorkers: int = 1) -> typing.List[ExperimentResult]:
    """
    Every (d, r, seed) with the layer's mask pattern and policy; d = 1 is a single masked module.
    """
    if not rValues or not dValues or not seeds:
        raise CapaError(CapaErrorCode.ConfigError, 'dimension sweep needs r values, d values and seeds')
    if referenceR is None:
        referenceR = min(rValues)
    runs = []
    for d in dValues:
        for r in rValues:
            for seed in seeds:
                runs.append(SweepRun(
                    'd=%d/r=%d/seed=%d' % (d, r, seed),
                    {'d': d, 'r': r},
                    _WithOverrides(layerConfig, layerType=capalayer.LayerType.CapaBoost, d=d, r=r, maskSeed=seed),
                    _WithOverrides(trainConfig, seed=seed),
                ))
    return RunAll(runs, task, numWorkers=numWorkers, referenceR=referenceR)

def _Median(values: typing.Sequence[float]) -> float:
    if not values:
        return float('nan')
    return float(np.median(np.array(values, dtype=np.float64)))

def MedianFinalLoss(results: typing.Sequence[ExperimentResult], which: str = 'eval') -> float:
    """
    Median over completed runs of the final train or eval loss.
    """
    if which not in ('train', 'eval'):
        raise CapaError(CapaErrorCode.ConfigError, 'which must be train or eval, got %r' % which)
    return _Median([result.finalTrainLoss if which == 'train' else result.finalEvalLoss for result in results if result.IsCompleted()])

def SelectRuns(results: typing.Sequence[ExperimentResult], **axes: typing.Any) -> typing.List[ExperimentResult]:
    return [result for result in results if all(result.axes.get(key) == value for key, value in axes.items())]

class ArmComparison(CapaDataObject):
    candidate = '' # type: str
    baseline = '' # type: str
    which = 'eval' # type: str
    candidateMedian = 0.0 # type: float
    baselineMedian = 0.0 # type: float
    relativeGap = 0.0 # type: float # (baseline - candidate) / baseline
    margin = 0.0 # type: float
    holds = False # type: bool

def CompareArms(candidate: typing.Sequence[ExperimentResult], baseline: typing.Sequence[ExperimentResult], which: str = 'eval', margin: float = 0.0, candidateName: str = 'candidate', baselineName: str = 'baseline') -> ArmComparison:
    """
    The candidate holds when its median final loss is at least margin (relative) below the baseline's.
    """
    candidateMedian = MedianFinalLoss(candidate, which)
    baselineMedian = MedianFinalLoss(baseline, which)
    relativeGap = (baselineMedian - candidateMedian) / baselineMedian if baselineMedian > 0.0 else 0.0
    holds = bool(math.isfinite(candidateMedian) and math.isfinite(baselineMedian) and candidateMedian <= baselineMedian * (1.0 - margin))
    comparison = ArmComparison(
        candidate=candidateName, baseline=baselineName, which=which, candidateMedian=candidateMedian,
        baselineMedian=baselineMedian, relativeGap=float(relativeGap), margin=float(margin), holds=holds,
    )
    log.info('%s vs %s (%s): %.6g vs %.6g, gap %.2f%%, %s', candidateName, baselineName, which, candidateMedian, baselineMedian, 100.0 * relativeGap, 'holds' if holds else 'does not hold')
    return comparison

ResultColumns = ['runKey', 'seed', 'status', 'finalTrainLoss', 'finalEvalLoss', 'finalEvalAccuracy', 'finalRank', 'storedParams', 'paramFactor', 'trainFlopFactor']

def ResultRow(result: ExperimentResult) -> typing.Dict[str, typing.Any]:
    """
    Flat CSV row: sweep axes first, then the measured quantities. wallTime is left out.
    """
    row = dict(result.axes) # type: typing.Dict[str, typing.Any]
    accounting = result.accounting if result.accounting is not None else capaaccounting.AccountingReport()
    row.update({
        'runKey': result.runKey,
        'seed': result.seed,
        'status': result.status.value,
        'finalTrainLoss': result.finalTrainLoss,
        'finalEvalLoss': result.finalEvalLoss,
        'finalEvalAccuracy': result.finalEvalAccuracy,
        'finalRank': result.finalRank,
        'storedParams': accounting.storedParams,
        'paramFactor': accounting.paramFactor,
        'trainFlopFactor': accounting.trainFlopFactor,
    })
    return row

def SummarizeRuns(results: typing.Sequence[ExperimentResult], axisNames: typing.Sequence[str]) -> typing.List[typing.Dict[str, typing.Any]]:
    """
    One row per distinct axes value (seeds pooled): medians of the final losses and rank, in first-seen order.
    """
    groups = [] # type: typing.List[typing.Tuple[typing.Tuple[typing.Any, ...], typing.List[ExperimentResult]]]
    for result in results:
        key = tuple(result.axes.get(name) for name in axisNames)
        for groupKey, members in groups:
            if groupKey == key:
                members.append(result)
                break
        else:
            groups.append((key, [result]))

    rows = []
    for key, members in groups:
        row = dict(zip(axisNames, key)) # type: typing.Dict[str, typing.Any]
        completed = [member for member in members if member.IsCompleted()]
        accounting = members[0].accounting if members[0].accounting is not None else capaaccounting.AccountingReport()
        row.update({
            'numRuns': len(members),
            'numCompleted': len(completed),
            'medianTrainLoss': MedianFinalLoss(members, 'train'),
            'medianEvalLoss': MedianFinalLoss(members, 'eval'),
            'medianRank': _Median([member.finalRank for member in completed]),
            'paramFactor': accounting.paramFactor,
            'trainFlopFactor': accounting.trainFlopFactor,
        })
        rows.append(row)
    return rows
