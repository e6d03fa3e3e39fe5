import unittest

import numpy as np
import pandas as pd
from numpy import testing as npt

from wgqed.routines.analysis import (GridMismatchError, compare_tables, envelope_slope, observable_columns,
                                     oscillation_maxima, plateau_spread)


def _table(times, **columns):
    frame = pd.DataFrame({'t': np.asarray(times, dtype=np.float64)})
    for name, values in columns.items():
        frame[name] = values
    return frame


class TestCompareTables(unittest.TestCase):

    def setUp(self):
        self.times = np.linspace(0, 5, 101)
        self.decay = np.exp(-self.times)

    def test_identical(self):
        table = _table(self.times, population_1=self.decay)
        report = compare_tables(table, table, 0.05)
        self.assertTrue(report.passed)
        self.assertEqual(report.table['sup'].iloc[0], 0.0)
        self.assertEqual(report.table['rms'].iloc[0], 0.0)
        self.assertTrue(np.isnan(report.table['max_z'].iloc[0]))

    def test_symmetric(self):
        a = _table(self.times, population_1=self.decay, photons=1 - self.decay)
        b = _table(self.times[::2], population_1=self.decay[::2] + 0.01, population_1_se=np.full(51, 0.005))
        ab = compare_tables(a, b, 0.05).table
        ba = compare_tables(b, a, 0.05).table
        pd.testing.assert_frame_equal(ab, ba)
        self.assertEqual(list(ab['observable']), ['population_1'])

    def test_offset_and_z_scores(self):
        """ A constant offset shows up in sup and rms; z-scores divide by the combined error. """
        a = _table(self.times, population_1=self.decay, population_1_se=np.full(101, 0.003))
        b = _table(self.times, population_1=self.decay + 0.02, population_1_se=np.full(101, 0.004))
        report = compare_tables(a, b, 0.05)
        row = report.table.iloc[0]
        self.assertAlmostEqual(row['sup'], 0.02)
        self.assertAlmostEqual(row['rms'], 0.02)
        self.assertAlmostEqual(row['max_z'], 4.0)
        self.assertTrue(report.passed)
        self.assertFalse(compare_tables(a, b, 0.01).passed)

    def test_interpolation(self):
        """ The finer table is interpolated onto the coarser grid. """
        fine = _table(np.linspace(0, 1, 11), population_1=np.linspace(0, 1, 11))
        coarse = _table([0.0, 0.25, 0.5, 1.0], population_1=[0.0, 0.25, 0.5, 1.0])
        report = compare_tables(fine, coarse, 1e-9)
        self.assertTrue(report.passed)

    def test_mismatch(self):
        a = _table([0.0, 1.0], population_1=[1.0, 0.5])
        with self.assertRaises(GridMismatchError):
            compare_tables(a, _table([2.0, 3.0], population_1=[1.0, 0.5]), 0.05)
        with self.assertRaises(GridMismatchError):
            compare_tables(a, _table([0.0, 1.0], photons=[0.0, 0.5]), 0.05)

    def test_observable_columns(self):
        table = _table([0.0], population_1=[1.0], population_1_se=[0.0], entropy=[0.0])
        self.assertEqual(observable_columns(table), ['population_1', 'entropy'])


class TestEnvelopes(unittest.TestCase):

    def test_maxima(self):
        times = np.linspace(0, 4 * np.pi, 2001)
        peak_times, peak_values = oscillation_maxima(times, np.cos(times) ** 2, t_min=0.1)
        npt.assert_allclose(peak_times, [np.pi, 2 * np.pi, 3 * np.pi], atol=1e-2)
        npt.assert_allclose(peak_values, 1.0, atol=1e-4)

    def test_slope(self):
        times = np.linspace(0, 20, 4001)
        decaying = np.exp(-0.05 * times) * np.cos(2 * times) ** 2
        self.assertLess(envelope_slope(times, decaying), -0.01)
        self.assertAlmostEqual(envelope_slope(times, np.cos(2 * times) ** 2), 0.0, places=4)
        self.assertTrue(np.isnan(envelope_slope(times, np.exp(-times))))

    def test_plateau_spread(self):
        times = np.linspace(0, 10, 201)
        values = np.where(times < 5, np.exp(-times), 0.25)
        self.assertEqual(plateau_spread(times, values, 5.0, 10.0), 0.0)
        self.assertGreater(plateau_spread(times, values, 0.0, 10.0), 0.7)


if __name__ == '__main__':
    unittest.main()
