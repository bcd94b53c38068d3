# -*- coding: utf-8 -*-

import csv
import io
import json
import os
import tempfile
import typing # noqa: F401 # used in type check

from .capaerror import CapaError, CapaErrorCode

import logging
log = logging.getLogger(__name__)

def _WriteAtomic(path: str, content: str) -> None:
    """
    Write to a temporary sibling and rename over path, so readers never see a partial file.
    """
    directory = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tempPath = tempfile.mkstemp(prefix='.%s.' % os.path.basename(path), dir=directory)
    except OSError as e:
        raise CapaError(CapaErrorCode.UsageError, 'cannot write %s: %s' % (path, e))
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(content)
        os.replace(tempPath, path)
    except BaseException:
        if os.path.exists(tempPath):
            os.unlink(tempPath)
        raise
    log.debug('wrote %s', path)

def DumpJson(value: typing.Any) -> str:
    return json.dumps(value, sort_keys=True, indent=2) + '\n'

def WriteJson(path: str, value: typing.Any) -> None:
    _WriteAtomic(path, DumpJson(value))

def ReadJson(path: str) -> typing.Any:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except OSError as e:
        raise CapaError(CapaErrorCode.UsageError, 'cannot read %s: %s' % (path, e))
    except ValueError as e:
        raise CapaError(CapaErrorCode.UsageError, '%s is not valid json: %s' % (path, e))

def WriteJsonLines(path: str, values: typing.Iterable[typing.Any]) -> None:
    """
    One compact json object per line.
    """
    _WriteAtomic(path, ''.join(json.dumps(value, sort_keys=True) + '\n' for value in values))

def WriteCsv(path: str, rows: typing.Sequence[typing.Mapping[str, typing.Any]], columns: typing.Optional[typing.Sequence[str]] = None) -> None:
    """
    Header row then one row per mapping. Without columns, the header is the union of keys in first-seen order.
    """
    if columns is None:
        columns = []
        for row in rows:
            for key in row:
                if key not in columns:
                    columns.append(key)
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(columns), extrasaction='ignore', lineterminator='\n')
    writer.writeheader()
    for row in rows:
        writer.writerow({key: _CsvValue(value) for key, value in row.items()})
    _WriteAtomic(path, buffer.getvalue())

def _CsvValue(value: typing.Any) -> typing.Any:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bool):
        return 'true' if value else 'false'
    return value

def WriteText(path: str, text: str) -> None:
    if not text.endswith('\n'):
        text += '\n'
    _WriteAtomic(path, text)

def WriteCurve(path: str, trainLosses: typing.Sequence[float], evalLosses: typing.Sequence[float]) -> None:
    """
    Whitespace separated "epoch train eval" lines, ready for gnuplot.
    """
    if len(trainLosses) != len(evalLosses):
        raise CapaError(CapaErrorCode.ShapeError, 'curve has %d train and %d eval points' % (len(trainLosses), len(evalLosses)))
    lines = ['# epoch train eval']
    for epoch, (trainLoss, evalLoss) in enumerate(zip(trainLosses, evalLosses)):
        lines.append('%d %r %r' % (epoch, trainLoss, evalLoss))
    _WriteAtomic(path, '\n'.join(lines) + '\n')

def SafeFileName(key: str) -> str:
    """
    Run keys such as 'density=0.5/policy=diffmask/seed=0' as a flat file name.
    """
    return ''.join(c if c.isalnum() or c in '.=-_' else '_' for c in key)
