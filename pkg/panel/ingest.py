"""
Long-format panel CSV ingestion.

Expected header: ``id,time,y,<x1>,...,<xp>``. The time column only orders
rows within an individual (observations are treated as i.i.d. over time).
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from .data import PanelData
from .exceptions import PanelFormatError

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ('id', 'time', 'y')

# Header is file line 1, first data row is line 2.
_LINE_OFFSET = 2


def _natural_order(values: pd.Series) -> pd.Series:
    """Sort key: numeric when every value parses as a number, else the raw string."""
    numeric = pd.to_numeric(values, errors='coerce')
    if numeric.notna().all():
        return numeric
    return values


def parse_panel_csv(path: Union[str, Path]) -> PanelData:
    """Read a long-format panel CSV into PanelData.

    Raises:
        PanelFormatError: missing columns, missing or non-numeric cells,
            duplicate (id, time) pairs; ``line`` names the offending file line.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except FileNotFoundError:
        raise PanelFormatError(f"Input file not found: {path}", code='E_PANEL_NOT_FOUND')
    except pd.errors.EmptyDataError:
        raise PanelFormatError(f"Input file is empty: {path}", code='E_PANEL_EMPTY', line=1)
    except pd.errors.ParserError as e:
        raise PanelFormatError(f"Could not parse {path}: {e}", code='E_PANEL_FORMAT')

    frame.columns = [str(c).strip() for c in frame.columns]
    header = list(frame.columns)
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise PanelFormatError(
            f"Missing required column(s): {', '.join(missing)}",
            code='E_PANEL_MISSING_COLUMN', line=1,
        )
    if header[:3] != list(REQUIRED_COLUMNS):
        raise PanelFormatError(
            f"Header must start with id,time,y; got {','.join(header[:3])}",
            code='E_PANEL_MISSING_COLUMN', line=1,
        )
    if frame.empty:
        raise PanelFormatError("Panel file has a header but no rows", code='E_PANEL_EMPTY', line=2)

    covariates = header[3:]
    frame = frame.apply(lambda col: col.str.strip() if col.dtype == object else col)

    blank = frame.isna() | (frame == '')
    if blank.to_numpy().any():
        row, col = np.argwhere(blank.to_numpy())[0]
        raise PanelFormatError(
            f"Missing value in column '{header[col]}'",
            code='E_PANEL_MISSING_CELL', line=int(row) + _LINE_OFFSET,
        )

    for column in ['y', *covariates]:
        parsed = pd.to_numeric(frame[column], errors='coerce')
        bad = parsed.isna() | ~np.isfinite(parsed.fillna(0.0))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise PanelFormatError(
                f"Non-numeric value '{frame[column].iloc[row]}' in column '{column}'",
                code='E_PANEL_NON_NUMERIC', line=row + _LINE_OFFSET,
            )

    duplicated = frame.duplicated(subset=['id', 'time'], keep='first')
    if duplicated.any():
        row = int(np.flatnonzero(duplicated.to_numpy())[0])
        raise PanelFormatError(
            f"Duplicate (id, time) pair ({frame['id'].iloc[row]}, {frame['time'].iloc[row]})",
            code='E_PANEL_DUPLICATE', line=row + _LINE_OFFSET,
        )

    frame = frame.assign(
        _id_key=_natural_order(frame['id']),
        _time_key=_natural_order(frame['time']),
    ).sort_values(['_id_key', '_time_key'], kind='stable')

    labels = tuple(pd.unique(frame['id']))
    index_of = {label: i for i, label in enumerate(labels)}
    ids = frame['id'].map(index_of).to_numpy(dtype=np.int64)
    y = frame['y'].to_numpy(dtype=str).astype(float)
    if covariates:
        x = frame[covariates].to_numpy(dtype=str).astype(float)
    else:
        x = np.zeros((len(frame), 0))

    data = PanelData(
        ids=ids,
        y=y,
        x=x,
        labels=labels,
        times=frame['time'].to_numpy(dtype=str),
        covariate_names=tuple(covariates),
    )
    logger.info(f"Loaded panel {path.name}: n={data.n}, N={data.N}, p={data.p}, balanced={data.is_balanced}")
    return data


def write_panel_csv(data: PanelData, path: Union[str, Path]) -> Path:
    """Write PanelData back to long-format CSV with 17 significant digits."""
    path = Path(path)
    if data.times is not None:
        times = data.times
    else:
        times = np.concatenate([np.arange(1, t + 1) for t in data.t_lengths])
    frame = pd.DataFrame({
        'id': np.asarray(data.labels, dtype=object)[data.ids],
        'time': times,
        'y': data.y,
    })
    for j, name in enumerate(data.covariate_names):
        frame[name] = data.x[:, j]
    frame.to_csv(path, index=False, float_format='%.17g')
    return path
