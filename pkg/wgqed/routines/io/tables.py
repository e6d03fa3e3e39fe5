"""
Result files. Every table is a comma-separated file whose leading lines are ``# key = value`` metadata, followed by a
header row and one row per time point. A JSON sidecar (``<stem>.meta.json``) holds the run configuration under
``config`` (enough to rerun) and wall-clock and numerical diagnostics under ``diagnostics``.
"""
import json
from io import StringIO
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Tuple

import pandas as pd

from .common import ensure_parent, open_file, output_stem

FLOAT_FORMAT = '%.15g'
METADATA_SUFFIX = '.meta.json'


def write_table(frame: pd.DataFrame, fp, header: Dict[str, object] = None):
    """
    Writes a result table with a ``#``-prefixed metadata header.

    Args:
        frame: The table. The index is not written, so time should be a column.
        fp: Output path (str or Path) or an open handle.
        header: Ordered ``key -> value`` pairs written as ``# key = value`` lines.
    """
    if isinstance(fp, (str, Path)):
        ensure_parent(fp)
    with open_file(fp, mode='w', newline='') as writer:
        for key, value in (header or {}).items():
            writer.write("# %s = %s\n" % (key, value))
        frame.to_csv(writer, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def read_table(fp) -> Tuple[pd.DataFrame, Dict[str, str]]:
    """
    Reads a table written by ``write_table``.

    Returns:
        Tuple[DataFrame, Dict[str, str]]: The data and the metadata header (values left as text).
    """
    header = OrderedDict()
    with open_file(fp, mode='r') as reader:
        lines = reader.readlines()

    n_header = 0
    for line in lines:
        if not line.startswith('#'):
            break
        n_header += 1
        body = line[1:].strip()
        if '=' in body:
            key, value = (part.strip() for part in body.split('=', 1))
            header[key] = value

    frame = pd.read_csv(StringIO(''.join(lines[n_header:])))
    return frame, header


def metadata_path(fp) -> Path:
    return Path(str(output_stem(fp)) + METADATA_SUFFIX)


def write_metadata(fp, config: Dict[str, object], diagnostics: Dict[str, object]) -> Path:
    """Writes the JSON sidecar for result ``fp`` and returns its path"""
    path = metadata_path(fp)
    ensure_parent(path)
    record = OrderedDict([('config', OrderedDict(config)), ('diagnostics', OrderedDict(diagnostics))])
    with open_file(path, mode='w') as writer:
        json.dump(record, writer, indent=2, default=str)
    return path


def read_metadata(fp) -> Dict[str, object]:
    with open_file(metadata_path(fp), mode='r') as reader:
        return json.load(reader, object_pairs_hook=OrderedDict)


def write_emissions(emissions: pd.DataFrame, fp, header: Dict[str, object] = None) -> Path:
    """Writes the SDW emission record (trajectory, t, direction) next to result ``fp``"""
    path = Path(str(output_stem(fp)) + '_emissions.csv')
    write_table(emissions, path, header)
    return path
