"""CSV emission and loading.

Files are RFC 4180 with a header row. Doubles use the shortest round-trip
representation and are read back with ``float_precision="round_trip"`` so
values parse to the identical double.
"""

from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd

PHASE_COLUMNS = ("u", "v", "w")


def time_column(count: int, dt: float, start_step: int = 0) -> np.ndarray:
    return (start_step + np.arange(count)) * dt


def phase_frame(
    points: np.ndarray, dt: float, start_step: int = 0
) -> pd.DataFrame:
    points = np.asarray(points, dtype=float)
    frame = pd.DataFrame(
        points, columns=list(PHASE_COLUMNS[: points.shape[1]])
    )
    frame.insert(0, "t", time_column(len(points), dt, start_step))
    return frame


def matrix_frame(
    values: np.ndarray,
    prefix: str,
    dt: float,
    start_step: int = 0,
    first_index: int = 0,
) -> pd.DataFrame:
    """Columns ``t, {prefix}{first_index}, ...``."""
    values = np.asarray(values, dtype=float)
    columns = [
        f"{prefix}{first_index + j}" for j in range(values.shape[1])
    ]
    frame = pd.DataFrame(values, columns=columns)
    frame.insert(0, "t", time_column(len(values), dt, start_step))
    return frame


def series_frame(
    columns: Dict[str, Sequence[float]],
    dt: Optional[float] = None,
    start_step: int = 0,
) -> pd.DataFrame:
    frame = pd.DataFrame({k: np.asarray(v) for k, v in columns.items()})
    if dt is not None:
        frame.insert(0, "t", time_column(len(frame), dt, start_step))
    return frame


def write_table(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\r\n")
    return path


def load_table(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")
