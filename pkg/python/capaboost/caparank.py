# -*- coding: utf-8 -*-

import concurrent.futures
import enum
import typing # noqa: F401 # used in type check

import numpy as np

from . import CapaDataObject
from .capaerror import CapaError, CapaErrorCode
from . import capalinalg, capamask, capalayer, capaaccounting

import logging
log = logging.getLogger(__name__)

class RankRegime(enum.Enum):
    Below = '2r<d' # additivity holds almost surely
    Boundary = '2r==d'
    Above = '2r>d'

def GetRankRegime(dDim: int, r: int) -> RankRegime:
    if 2 * r < dDim:
        return RankRegime.Below
    if 2 * r == dDim:
        return RankRegime.Boundary
    return RankRegime.Above

class RankTrialConfig(CapaDataObject):
    dDim = 64 # type: int # ambient dimension
    r = 8 # type: int # rank of each random factor product
    trials = 1000 # type: int
    seed = 0 # type: int # trial i uses seed + i
    relTol = capalinalg.DefaultRankTolerance # type: float
    numWorkers = 1 # type: int

    def Validate(self) -> None:
        if self.dDim < 1:
            raise CapaError(CapaErrorCode.ConfigError, 'dDim must be >= 1, got %d' % self.dDim)
        if self.trials < 1:
            raise CapaError(CapaErrorCode.ConfigError, 'trials must be >= 1, got %d' % self.trials)
        if self.r < 0 or self.r > self.dDim:
            raise CapaError(CapaErrorCode.ConfigError, 'r must be in [0, dDim], got %d' % self.r)
        if not 0.0 < self.relTol < 1.0:
            raise CapaError(CapaErrorCode.ConfigError, 'relTol must be in (0, 1), got %r' % self.relTol)
        if self.numWorkers < 1:
            raise CapaError(CapaErrorCode.ConfigError, 'numWorkers must be >= 1, got %d' % self.numWorkers)

class RankTrialReport(CapaDataObject):
    _nested = {'config': RankTrialConfig}

    config = None # type: typing.Optional[RankTrialConfig]
    regime = RankRegime.Below # type: RankRegime
    trialsRun = 0 # type: int
    successes = 0 # type: int # rank(X + Y) == rank(X) + rank(Y)
    errors = 0 # type: int # trials whose svd failed
    factorRankMatches = 0 # type: int # trials with rank(X) == rank(Y) == r
    sumRankHistogram = {} # type: typing.Dict[str, int] # rank(X + Y) -> count, keys are decimal strings

    def GetSuccessRate(self) -> float:
        if self.trialsRun == 0:
            return 0.0
        return self.successes / self.trialsRun

    def IsAdditivityPredicted(self) -> bool:
        """
        Only the 2r < d regime is predicted to be additive; the others are measured.
        """
        return self.regime == RankRegime.Below

    def IsVerified(self) -> bool:
        return self.errors == 0 and (not self.IsAdditivityPredicted() or self.successes == self.trialsRun)

    def GetSummary(self) -> str:
        config = self.config if self.config is not None else RankTrialConfig()
        return 'd=%d r=%d regime %s: %d/%d additive, %d errors, ranks %s' % (
            config.dDim, config.r, self.regime.value, self.successes, self.trialsRun, self.errors,
            ', '.join('%s x%d' % (key, self.sumRankHistogram[key]) for key in sorted(self.sumRankHistogram, key=int)),
        )

class _TrialOutcome:
    rankX = 0 # type: int
    rankY = 0 # type: int
    rankSum = 0 # type: int
    failed = False # type: bool

def _SampleProduct(dDim: int, r: int, stream: capalinalg.RngStream) -> capalinalg.Matrix:
    if r == 0:
        return np.zeros((dDim, dDim), dtype=np.float64)
    columns = capalinalg.Gaussian(dDim, r, stream) # r columns drawn i.i.d. from N(0, I_d)
    rows = capalinalg.Gaussian(r, dDim, stream)
    return capalinalg.MatMul(columns, rows)

def _RunTrial(cfg: RankTrialConfig, trialIndex: int) -> _TrialOutcome:
    outcome = _TrialOutcome()
    stream = capalinalg.RngStream(cfg.seed + trialIndex)
    X = _SampleProduct(cfg.dDim, cfg.r, stream)
    Y = _SampleProduct(cfg.dDim, cfg.r, stream)
    try:
        outcome.rankX = capalinalg.NumericalRank(X, cfg.relTol)
        outcome.rankY = capalinalg.NumericalRank(Y, cfg.relTol)
        outcome.rankSum = capalinalg.NumericalRank(X + Y, cfg.relTol)
    except CapaError as e:
        if e.GetErrorCode() != CapaErrorCode.NumericError:
            raise
        log.warning('trial %d failed: %s', trialIndex, e)
        outcome.failed = True
    return outcome

def RunRankAdditivityTrials(cfg: RankTrialConfig) -> RankTrialReport:
    """
    Monte Carlo check that rank(X + Y) == rank(X) + rank(Y) for X, Y products of d x r and r x d
    Gaussian factors. Trial i is seeded with cfg.seed + i, so results do not depend on numWorkers.
    """
    cfg.Validate()
    regime = GetRankRegime(cfg.dDim, cfg.r)
    log.info('running %d rank additivity trials at d=%d r=%d (%s)', cfg.trials, cfg.dDim, cfg.r, regime.value)
    if cfg.numWorkers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.numWorkers) as executor:
            outcomes = list(executor.map(lambda index: _RunTrial(cfg, index), range(cfg.trials)))
    else:
        outcomes = [_RunTrial(cfg, index) for index in range(cfg.trials)]

    successes = 0
    errors = 0
    factorRankMatches = 0
    histogram = {} # type: typing.Dict[str, int]
    for outcome in outcomes:
        if outcome.failed:
            errors += 1
            continue
        if outcome.rankSum == outcome.rankX + outcome.rankY:
            successes += 1
        if outcome.rankX == cfg.r and outcome.rankY == cfg.r:
            factorRankMatches += 1
        key = str(outcome.rankSum)
        histogram[key] = histogram.get(key, 0) + 1

    report = RankTrialReport(
        config=cfg, regime=regime, trialsRun=len(outcomes), successes=successes, errors=errors,
        factorRankMatches=factorRankMatches, sumRankHistogram=histogram,
    )
    log.info('%s', report.GetSummary())
    return report

class RankCell(CapaDataObject):
    r = 0 # type: int
    d = 1 # type: int
    expectedRank = 0 # type: int # min(d r, d1, d2), min(r, d1, d2) for a shared mask
    ranks = [] # type: typing.List[int] # one per seed
    paramFactor = 0.0 # type: float # expected stored params relative to the reference LoRA

    def IsExact(self) -> bool:
        return all(rank == self.expectedRank for rank in self.ranks)

class RankTable(CapaDataObject):
    d1 = 768 # type: int
    d2 = 768 # type: int
    rValues = [] # type: typing.List[int]
    dValues = [] # type: typing.List[int]
    policyType = capamask.MaskPolicyType.DiffMask # type: capamask.MaskPolicyType
    density = 0.5 # type: float
    seeds = [] # type: typing.List[int]
    referenceR = 8 # type: int
    relTol = capalinalg.DefaultRankTolerance # type: float
    cells = [] # type: typing.List[RankCell]

    @classmethod
    def FromDict(cls, values: typing.Mapping[str, typing.Any]) -> 'RankTable':
        values = dict(values)
        values['cells'] = [RankCell.FromDict(cell) for cell in values.get('cells', [])]
        return super(RankTable, cls).FromDict(values)

    def GetCell(self, r: int, d: int) -> RankCell:
        for cell in self.cells:
            if cell.r == r and cell.d == d:
                return cell
        raise CapaError(CapaErrorCode.ConfigError, 'no cell for r=%d d=%d' % (r, d))

    def IsExact(self) -> bool:
        return all(cell.IsExact() for cell in self.cells)

    def GetRows(self) -> typing.List[typing.Dict[str, typing.Any]]:
        """
        One CSV row per (d, r) cell.
        """
        rows = []
        for cell in self.cells:
            rows.append({
                'method': _MethodName(cell.d),
                'd': cell.d,
                'r': cell.r,
                'rank': _CellRank(cell),
                'expectedRank': cell.expectedRank,
                'ranks': ' '.join('%d' % rank for rank in cell.ranks),
                'paramFactor': cell.paramFactor,
            })
        return rows

    def ToMarkdown(self) -> str:
        """
        Rank rows with a #Param row beneath each method, one column per r.
        """
        header = '| Rank of method | %s |' % ' | '.join('r=%d' % r for r in self.rValues)
        lines = [
            '<!-- %dx%d, policy %s, density %.4g, seeds %s, reference LoRA r=%d -->' % (self.d1, self.d2, self.policyType.value, self.density, ' '.join('%d' % seed for seed in self.seeds), self.referenceR),
            '',
            header,
            '|---|%s' % ''.join('---|' for _ in self.rValues),
        ]
        for d in self.dValues:
            cells = [self.GetCell(r, d) for r in self.rValues]
            lines.append('| %s | %s |' % (_MethodName(d), ' | '.join('%d' % _CellRank(cell) for cell in cells)))
            lines.append('| #Param | %s |' % ' | '.join(capaaccounting.FormatFactor(cell.paramFactor) for cell in cells))
        return '\n'.join(lines) + '\n'

def _MethodName(d: int) -> str:
    if d == 1:
        return 'LoRA'
    return 'CapaBoost-LoRA (d=%d)' % d

def _CellRank(cell: RankCell) -> int:
    """
    Rank shown in the table: the common value when all seeds agree, otherwise the minimum.
    """
    if not cell.ranks:
        return 0
    return min(cell.ranks)

def RankStudyConfig(d1: int, d2: int, r: int, d: int, policyType: capamask.MaskPolicyType, density: float, maskSeed: int) -> capalayer.LayerConfig:
    """
    Gaussian-initialized layer; d == 1 is plain LoRA.
    """
    return capalayer.LayerConfig(
        layerType=capalayer.LayerType.Lora if d == 1 else capalayer.LayerType.CapaBoost,
        d1=d1, d2=d2, r=r, d=d, policyType=policyType, maskSeed=maskSeed,
        pattern=capamask.MaskPattern.Bernoulli(density), initScheme=capalayer.InitScheme.Gaussian,
    )

def ExpectedLayerRank(d1: int, d2: int, r: int, d: int, policyType: capamask.MaskPolicyType) -> int:
    """
    Generic rank of a Gaussian-initialized layer: d modules with distinct masks add their ranks,
    a shared mask leaves the sum inside one rank-r subspace.
    """
    if policyType == capamask.MaskPolicyType.SameMask:
        return min(r, d1, d2)
    return min(d * r, d1, d2)

def LayerRankSweep(d1: int, d2: int, rValues: typing.Sequence[int], dValues: typing.Sequence[int], policyType: capamask.MaskPolicyType = capamask.MaskPolicyType.DiffMask, seeds: typing.Sequence[int] = (0, 1, 2), density: float = 0.5, referenceR: typing.Optional[int] = None, relTol: float = capalinalg.DefaultRankTolerance) -> RankTable:
    """
    Numerical rank of the effective weight of Gaussian-initialized layers for every (r, d) cell and seed,
    plus the expected stored-parameter factor against LoRA with inner dimension referenceR.
    Each seed drives both the init stream and the mask seeds.
    """
    if not rValues or not dValues or not seeds:
        raise CapaError(CapaErrorCode.ConfigError, 'rank sweep needs nonempty r values, d values and seeds')
    if referenceR is None:
        referenceR = min(rValues)
    cells = []
    for d in dValues:
        for r in rValues:
            ranks = []
            for seed in seeds:
                config = RankStudyConfig(d1, d2, r, d, policyType, density, seed)
                layer = capalayer.InitLayer(config, seed)
                ranks.append(capalinalg.NumericalRank(layer.EffectiveWeight(0), relTol))
            config = RankStudyConfig(d1, d2, r, d, policyType, density, seeds[0])
            cell = RankCell(
                r=r, d=d, expectedRank=ExpectedLayerRank(d1, d2, r, d, policyType), ranks=ranks,
                paramFactor=capaaccounting.Account(config, referenceR=referenceR, realizeMasks=False).paramFactor,
            )
            log.info('rank cell d=%d r=%d: ranks %r (expected %d)', d, r, ranks, cell.expectedRank)
            cells.append(cell)
    return RankTable(
        d1=d1, d2=d2, rValues=list(rValues), dValues=list(dValues), policyType=policyType, density=float(density),
        seeds=list(seeds), referenceR=referenceR, relTol=relTol, cells=cells,
    )
