from typing import List, NamedTuple, Tuple

import numexpr as ne
import numpy as np
import pandas as pd

SE_SUFFIX = '_se'


class GridMismatchError(ValueError):
    pass


class ComparisonReport(NamedTuple):
    """One row per shared observable: ``sup``, ``rms``, ``max_z`` (NaN without standard errors) and ``passed``."""
    table: pd.DataFrame
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.table['passed'].all())


def observable_columns(frame: pd.DataFrame) -> List[str]:
    return [c for c in frame.columns if c != 't' and not c.endswith(SE_SUFFIX)]


def _common_grid(times_a: np.ndarray, times_b: np.ndarray) -> np.ndarray:
    lower = max(times_a[0], times_b[0])
    upper = min(times_a[-1], times_b[-1])
    if upper < lower:
        raise GridMismatchError("Time ranges [%g, %g] and [%g, %g] do not overlap" % (times_a[0], times_a[-1],
                                                                                      times_b[0], times_b[-1]))
    if len(times_a) == len(times_b) and np.allclose(times_a, times_b, rtol=0, atol=1e-12):
        return times_a
    eps = 1e-12 * max(1.0, abs(upper))
    candidates = [t[(t >= lower - eps) & (t <= upper + eps)] for t in (times_a, times_b)]
    # Coarser grid first; ties resolved on the values so the choice does not depend on argument order
    candidates.sort(key=lambda t: (len(t), t.tolist()))
    return candidates[0]


def _resample(frame: pd.DataFrame, column: str, grid: np.ndarray) -> np.ndarray:
    times = frame['t'].values
    if len(times) == len(grid) and np.array_equal(times, grid):
        return frame[column].values.astype(np.float64)
    return np.interp(grid, times, frame[column].values.astype(np.float64))


def compare_tables(a: pd.DataFrame, b: pd.DataFrame, tolerance: float) -> ComparisonReport:
    """
    Distances between two result tables over their shared observables, on the coarser of the two time grids (linear
    interpolation). Where standard-error columns exist, pointwise z-scores use the combined error of both inputs.
    All metrics are symmetric in ``a`` and ``b``.

    Raises:
        GridMismatchError: if the tables share no observable or their time ranges do not overlap
    """
    shared = [c for c in observable_columns(a) if c in set(observable_columns(b))]
    if not shared:
        raise GridMismatchError("No shared observable columns between the two tables")
    grid = _common_grid(a['t'].values, b['t'].values)

    rows = []
    for column in shared:
        x = _resample(a, column, grid)
        y = _resample(b, column, grid)
        diff = np.abs(x - y)
        sup = float(diff.max()) if len(diff) else 0.0
        rms = float(np.sqrt(np.mean(diff ** 2))) if len(diff) else 0.0

        se_name = column + SE_SUFFIX
        max_z = np.nan
        if se_name in a.columns or se_name in b.columns:
            se_a = _resample(a, se_name, grid) if se_name in a.columns else np.zeros_like(grid)
            se_b = _resample(b, se_name, grid) if se_name in b.columns else np.zeros_like(grid)
            combined = ne.evaluate("sqrt(se_a ** 2 + se_b ** 2)")
            mask = combined > 0
            if mask.any():
                d, s = diff[mask], combined[mask]
                max_z = float(ne.evaluate("d / s").max())
        rows.append((column, sup, rms, max_z, sup <= tolerance))

    table = pd.DataFrame(rows, columns=['observable', 'sup', 'rms', 'max_z', 'passed'])
    return ComparisonReport(table, float(tolerance))


def oscillation_maxima(times: np.ndarray, values: np.ndarray, t_min: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """Interior local maxima (rising into, strictly falling out of) at or after ``t_min``"""
    times = np.asarray(times)
    values = np.asarray(values)
    if len(values) < 3:
        return times[:0], values[:0]
    inner = (values[1:-1] >= values[:-2]) & (values[1:-1] > values[2:])
    index = np.flatnonzero(inner) + 1
    index = index[times[index] >= t_min]
    return times[index], values[index]


def envelope_slope(times: np.ndarray, values: np.ndarray, t_min: float = 0.0) -> float:
    """Slope of a least-squares line through the oscillation maxima. NaN with fewer than two maxima."""
    peak_times, peak_values = oscillation_maxima(times, values, t_min)
    if len(peak_times) < 2:
        return np.nan
    slope, _ = np.polyfit(peak_times, peak_values, 1)
    return float(slope)


def plateau_spread(times: np.ndarray, values: np.ndarray, t_start: float, t_end: float) -> float:
    """Peak-to-peak variation of ``values`` on ``[t_start, t_end]``"""
    times = np.asarray(times)
    window = np.asarray(values)[(times >= t_start - 1e-9) & (times <= t_end + 1e-9)]
    assert len(window) > 0, "no samples in [%g, %g]" % (t_start, t_end)
    return float(window.max() - window.min())
