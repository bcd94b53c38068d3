# -*- coding: utf-8 -*-

import csv
import json
import os

import pytest

from capaboost import capacli

@pytest.fixture(autouse=True)
def _NoOutputDirEnvironment(monkeypatch):
    monkeypatch.delenv(capacli.OutputDirEnvironmentVariable, raising=False)

def _WriteManifest(path, command, config, seed=0, **values):
    manifest = dict(version=capacli.ManifestVersion, command=command, config=config, seed=seed)
    manifest.update(values)
    with open(str(path), 'w') as f:
        json.dump(manifest, f)
    return str(path)

def _ReadCsv(path):
    with open(str(path), newline='') as f:
        return list(csv.DictReader(f))

def _ReadJsonLines(path):
    with open(str(path)) as f:
        return [json.loads(line) for line in f]

SmallTask = {'d1': 16, 'd2': 16, 'teacherRank': 4, 'numTrain': 32, 'numEval': 16, 'seed': 3}
SmallLayer = {'d1': 16, 'd2': 16, 'r': 2, 'd': 2}

def test_RankAdditivity(tmp_path, capsys):
    code = capacli.Main(['theorem1', '--d-dim', '64', '--r', '8', '--trials', '1000', '--seed', '7', '--output-dir', str(tmp_path)])
    assert code == 0
    assert '1000/1000 additive' in capsys.readouterr().out
    with open(str(tmp_path / 'rank-additivity.json')) as f:
        report = json.load(f)
    assert report['successes'] == 1000
    assert report['sumRankHistogram'] == {'16': 1000}
    assert (tmp_path / 'rank-additivity.txt').exists()
    with open(str(tmp_path / 'manifest.json')) as f:
        echo = json.load(f)
    assert echo['command'] == 'theorem1'
    assert echo['config']['seed'] == 7

def test_RankAdditivityZeroRank(tmp_path):
    assert capacli.Main(['theorem1', '--r', '0', '--trials', '5', '--output-dir', str(tmp_path)]) == 0

def test_RankAdditivityIsReproducible(tmp_path):
    for name in ('first', 'second'):
        assert capacli.Main(['rank-additivity', '--d-dim', '32', '--r', '4', '--trials', '50', '--workers', '2', '--output-dir', str(tmp_path / name)]) == 0
    assert (tmp_path / 'first' / 'rank-additivity.json').read_bytes() == (tmp_path / 'second' / 'rank-additivity.json').read_bytes()

def test_RankAdditivityManifestSeed(tmp_path):
    manifest = _WriteManifest(tmp_path / 'manifest.json', 'rank-additivity', {'dDim': 16, 'r': 4, 'trials': 5}, seed=11)
    assert capacli.Main(['rank-additivity', '--manifest', manifest, '--output-dir', str(tmp_path / 'out')]) == 0
    with open(str(tmp_path / 'out' / 'rank-additivity.json')) as f:
        assert json.load(f)['config']['seed'] == 11

def test_RankAdditivityAlias(tmp_path):
    assert capacli.Main(['rank-additivity', '--d-dim', '16', '--r', '4', '--trials', '5', '--output-dir', str(tmp_path / 'alias')]) == 0
    assert capacli.Main(['theorem1', '--d-dim', '16', '--r', '4', '--trials', '5', '--output-dir', str(tmp_path / 'name')]) == 0
    assert (tmp_path / 'alias' / 'rank-additivity.json').read_bytes() == (tmp_path / 'name' / 'rank-additivity.json').read_bytes()
    with open(str(tmp_path / 'alias' / 'manifest.json')) as f:
        assert json.load(f)['command'] == 'theorem1'

@pytest.mark.parametrize('command', ['theorem1', 'rank-additivity'])
def test_RankAdditivityManifestCommand(tmp_path, command):
    manifest = _WriteManifest(tmp_path / 'manifest.json', command, {'dDim': 16, 'r': 4, 'trials': 5})
    assert capacli.Main(['theorem1', '--manifest', manifest, '--output-dir', str(tmp_path / 'out')]) == 0
    assert capacli.Main(['rank-table', '--manifest', manifest, '--output-dir', str(tmp_path / 'table')]) == 2

@pytest.mark.parametrize('argv', [
    [],
    ['bogus'],
    ['theorem1', '--trials', 'many'],
    ['rank-additivity', '--unknown'],
    ['rank-table', '--r-values', '8,x'],
    ['rank-table', '--policy', 'bogus'],
])
def test_MalformedArguments(argv):
    assert capacli.Main(argv) == 2

def test_InvalidConfigIsUsageError(tmp_path, capsys):
    assert capacli.Main(['rank-additivity', '--trials', '0', '--output-dir', str(tmp_path)]) == 2
    assert 'error' in capsys.readouterr().err

def test_RankTable(tmp_path, capsys):
    code = capacli.Main(['rank-table', '--d1', '64', '--d2', '64', '--r-values', '8,16,32,64', '--d-values', '1,2,4', '--seeds', '0', '--output-dir', str(tmp_path)])
    assert code == 0
    rows = _ReadCsv(tmp_path / 'rank-table.csv')
    assert len(rows) == 12
    ranks = {(int(row['d']), int(row['r'])): int(row['rank']) for row in rows}
    assert ranks[(1, 64)] == 64
    assert ranks[(2, 16)] == 32
    assert ranks[(4, 64)] == 64
    markdown = (tmp_path / 'rank-table.md').read_text()
    assert '| CapaBoost-LoRA (d=4) | 32 | 64 | 64 | 64 |' in markdown
    assert markdown in capsys.readouterr().out

def test_Accounting(tmp_path):
    assert capacli.Main(['accounting', '--d1', '64', '--d2', '64', '--output-dir', str(tmp_path)]) == 0
    rows = _ReadCsv(tmp_path / 'accounting.csv')
    assert len(rows) == 12
    byCell = {(int(row['d']), int(row['r'])): row for row in rows}
    assert byCell[(1, 8)]['layerType'] == 'lora'
    assert float(byCell[(1, 8)]['paramFactor']) == 1.0
    assert float(byCell[(2, 8)]['paramFactor']) == pytest.approx(0.75)
    assert float(byCell[(4, 8)]['paramFactor']) == pytest.approx(0.9375)
    with open(str(tmp_path / 'accounting.json')) as f:
        assert len(json.load(f)) == 12

def test_DensitySweep(tmp_path, capsys):
    config = {
        'sweep': 'density', 'task': SmallTask, 'layer': SmallLayer,
        'train': {'epochs': 3}, 'densities': [0.5, 1.0], 'seeds': [0, 1],
    }
    manifest = _WriteManifest(tmp_path / 'manifest.json', 'sweep', config)
    for name in ('first', 'second'):
        assert capacli.Main(['sweep', '--manifest', manifest, '--output-dir', str(tmp_path / name)]) == 0
    out = capsys.readouterr().out
    assert '12 runs, 0 diverged' in out
    assert 'diffmask@0.5 vs samemask@0.5' in out

    first = tmp_path / 'first'
    rows = _ReadCsv(first / 'runs.csv')
    assert len(rows) == 12
    assert {row['policy'] for row in rows} == {'diffmask', 'samemask', 'dropout'}
    assert len(_ReadCsv(first / 'summary.csv')) == 6
    assert len(os.listdir(str(first / 'curves'))) == 12
    with open(str(first / 'comparisons.json')) as f:
        assert len(json.load(f)) == 4

    def _WithoutWallTime(path):
        values = _ReadJsonLines(path)
        for value in values:
            value.pop('wallTime')
        return values

    assert _WithoutWallTime(first / 'results.jsonl') == _WithoutWallTime(tmp_path / 'second' / 'results.jsonl')

def test_DimensionSweep(tmp_path, capsys):
    config = {
        'sweep': 'dimension', 'task': SmallTask, 'layer': SmallLayer,
        'train': {'epochs': 2}, 'rValues': [2, 4], 'dValues': [1, 2],
    }
    manifest = _WriteManifest(tmp_path / 'manifest.json', 'sweep', config, seed=5)
    assert capacli.Main(['sweep', '--manifest', manifest, '--output-dir', str(tmp_path / 'out')]) == 0
    rows = _ReadCsv(tmp_path / 'out' / 'runs.csv')
    assert len(rows) == 4
    assert all(row['seed'] == '5' for row in rows)
    assert 'paramFactor' in rows[0]
    assert [(row['d'], row['r']) for row in rows] == [('1', '2'), ('1', '4'), ('2', '2'), ('2', '4')]
    with open(str(tmp_path / 'out' / 'comparisons.json')) as f:
        comparisons = json.load(f)
    assert [(comparison['candidate'], comparison['baseline']) for comparison in comparisons] == [('d=2 r=2', 'd=1 r=4')]
    assert 'd=2 r=2 vs d=1 r=4' in capsys.readouterr().out

def test_SweepUnknownPolicy(tmp_path):
    config = {'task': SmallTask, 'layer': SmallLayer, 'train': {'epochs': 1}, 'policies': ['diffmask', 'bogus']}
    manifest = _WriteManifest(tmp_path / 'manifest.json', 'sweep', config)
    assert capacli.Main(['sweep', '--manifest', manifest, '--output-dir', str(tmp_path / 'out')]) == 2

def test_SweepNeedsManifest(tmp_path):
    assert capacli.Main(['sweep', '--output-dir', str(tmp_path)]) == 2

@pytest.mark.parametrize('command, content', [
    ('train-one', 'not json'),
    ('train-one', json.dumps([1, 2])),
    ('train-one', json.dumps({'version': 'capaboost/0', 'command': 'train-one', 'config': {}})),
    ('train-one', json.dumps({'version': capacli.ManifestVersion, 'command': 'sweep', 'config': {}})),
    ('train-one', json.dumps({'version': capacli.ManifestVersion, 'command': 'train-one', 'config': {'task': SmallTask, 'layer': dict(SmallLayer, d1=8)}})),
    ('train-one', json.dumps({'version': capacli.ManifestVersion, 'command': 'train-one', 'config': {'task': SmallTask, 'layer': dict(SmallLayer, rank=2)}})),
    ('train-one', json.dumps({'version': capacli.ManifestVersion, 'command': 'train-one', 'config': {'task': SmallTask, 'layer': dict(SmallLayer, pattern='bernoulli')}})),
    ('train-one', json.dumps({'version': capacli.ManifestVersion, 'command': 'train-one', 'config': {'task': SmallTask, 'train': {'optimizer': 'adam'}}})),
    ('sweep', json.dumps({'version': capacli.ManifestVersion, 'command': 'sweep', 'config': {'task': 5, 'layer': SmallLayer}})),
    ('sweep', json.dumps({'version': capacli.ManifestVersion, 'command': 'sweep', 'config': {'task': dict(SmallTask, teacherPattern=[0.5]), 'layer': SmallLayer}})),
])
def test_InvalidManifest(tmp_path, capsys, command, content):
    path = tmp_path / 'manifest.json'
    path.write_text(content)
    assert capacli.Main([command, '--manifest', str(path), '--output-dir', str(tmp_path / 'out')]) == 2
    assert 'Traceback' not in capsys.readouterr().err
    assert not (tmp_path / 'out').exists()

def test_MissingManifest(tmp_path):
    assert capacli.Main(['train-one', '--manifest', str(tmp_path / 'missing.json'), '--output-dir', str(tmp_path)]) == 2

def test_TrainOne(tmp_path):
    manifest = _WriteManifest(tmp_path / 'manifest.json', 'train-one', {'task': SmallTask, 'layer': SmallLayer, 'train': {'epochs': 5}})
    assert capacli.Main(['train-one', '--manifest', manifest, '--output-dir', str(tmp_path / 'out')]) == 0
    with open(str(tmp_path / 'out' / 'result.json')) as f:
        result = json.load(f)
    assert result['status'] == 'completed'
    assert len(result['trainLosses']) == 5
    lines = (tmp_path / 'out' / 'curve.dat').read_text().splitlines()
    assert lines[0] == '# epoch train eval'
    assert len(lines) == 6

def test_TrainOneDiverged(tmp_path):
    config = {
        'task': SmallTask,
        'layer': {'layerType': 'lora', 'd1': 16, 'd2': 16, 'r': 2, 'd': 1},
        'train': {'epochs': 300, 'optimizer': {'optimizerType': 'sgd', 'lr': 1e8}},
    }
    manifest = _WriteManifest(tmp_path / 'manifest.json', 'train-one', config)
    assert capacli.Main(['train-one', '--manifest', manifest, '--output-dir', str(tmp_path / 'out')]) == 1
    with open(str(tmp_path / 'out' / 'result.json')) as f:
        assert json.load(f)['status'] == 'diverged'

def test_OutputDirFromEnvironment(tmp_path, monkeypatch):
    monkeypatch.setenv(capacli.OutputDirEnvironmentVariable, str(tmp_path / 'env'))
    manifest = _WriteManifest(tmp_path / 'manifest.json', 'rank-additivity', {'dDim': 8, 'r': 2, 'trials': 3}, outputDir=str(tmp_path / 'manifest'))
    assert capacli.Main(['rank-additivity', '--manifest', manifest]) == 0
    assert (tmp_path / 'env' / 'rank-additivity.json').exists()
    assert not (tmp_path / 'manifest').exists()
    assert capacli.Main(['rank-additivity', '--manifest', manifest, '--output-dir', str(tmp_path / 'flag')]) == 0
    assert (tmp_path / 'flag' / 'rank-additivity.json').exists()

def test_ResolveOutputDir(monkeypatch):
    manifest = capacli.Manifest(outputDir='from-manifest')
    assert capacli.ResolveOutputDir('from-flag', manifest) == 'from-flag'
    assert capacli.ResolveOutputDir(None, manifest) == 'from-manifest'
    assert capacli.ResolveOutputDir(None, None) == capacli.DefaultOutputDir
    monkeypatch.setenv(capacli.OutputDirEnvironmentVariable, 'from-env')
    assert capacli.ResolveOutputDir(None, manifest) == 'from-env'
    assert capacli.ResolveOutputDir('from-flag', manifest) == 'from-flag'
