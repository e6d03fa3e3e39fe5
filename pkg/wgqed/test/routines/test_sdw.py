import os
import unittest

import numpy as np
from numpy import testing as npt
from pandas import testing as pdt

from wgqed.routines.analysis import compare_tables, envelope_slope
from wgqed.routines.mps import run_mps
from wgqed.routines.oracles import delay_amplitude, exp_decay
from wgqed.routines.schemes import DelayGeometry, Scheme, SchemeConfig
from wgqed.routines.sdw import (OccupiedOutputBoxError, SDWState, build_basis, build_system, ensemble_average,
                                init_sdw_state, jump_probability, lindblad_jump_check, measure_output_boxes,
                                run_trajectory, shift_boxes, trajectory_rng)

EXTENDED = os.environ.get('WGQED_EXTENDED') == '1'


def _feedback_system(**kwargs):
    config = SchemeConfig(scheme=Scheme.FEEDBACK, tau=0.25, dt=0.05, t_max=1.0, **kwargs)
    return build_system(config)


def _state_with_photon(system, position, excited=False):
    """ A state with the TLS in g (or e) and one photon at ``position`` """
    amplitudes = np.zeros(system.dimension, dtype=np.complex128)
    index = system.basis.index_of([position])
    amplitudes[(1 if excited else 0) * system.basis.size + index] = 1.0
    return SDWState(system, amplitudes, trajectory_rng(0, 0))


class TestBasis(unittest.TestCase):

    def test_sizes(self):
        """ Truncated basis sizes for one and two rows of twenty boxes with two photons. """
        single = build_basis(DelayGeometry(19, 20, 2, 1))
        double = build_basis(DelayGeometry(19, 20, 2, 2))
        self.assertEqual(single.size, 211)
        self.assertEqual(double.size, 821)
        self.assertEqual(2 * single.size, 422)
        self.assertEqual(4 * double.size, 3284)
        self.assertEqual(build_basis(DelayGeometry(1, 2, 1, 1)).size, 3)

    def test_ordering(self):
        """ States are ordered by photon number, vacuum first, with a consistent index map. """
        basis = build_basis(DelayGeometry(2, 3, 2, 2))
        counts = basis.photon_counts()
        self.assertEqual(counts[0], 0)
        self.assertTrue(np.all(np.diff(counts) >= 0))
        for i in range(basis.size):
            occupied = [p for p in basis.occupied[i] if p >= 0]
            self.assertEqual(basis.index_of(occupied), i)

    def test_photon_cap(self):
        """ Only caps of one or two photons are supported. """
        with self.assertRaises(ValueError):
            build_basis(DelayGeometry(1, 2, 3, 1))


class TestPropagator(unittest.TestCase):

    def test_identity_without_rates(self):
        """ Without couplings or drive the propagator is the identity. """
        system = build_system(SchemeConfig(gamma_l=0.0, gamma_r=0.0, t_max=0.1))
        npt.assert_allclose(system.propagator.toarray(), np.eye(system.dimension), atol=1e-14)

    def test_off_chip_decay(self):
        """ Off-chip decay alone damps the excited amplitude by exp(-gamma_0 dt / 2) per step. """
        system = build_system(SchemeConfig(gamma_l=0.0, gamma_r=0.0, gamma_0=0.4, t_max=0.1))
        excited = system.basis.size
        self.assertAlmostEqual(system.propagator[excited, excited].real, np.exp(-0.4 * 0.05 / 2), places=12)

    def test_single_step(self):
        """ One step moves sin^2(sqrt(gamma dt)) of the excitation into the boxes, as in the MPS engine. """
        system = build_system(SchemeConfig(t_max=0.05))
        state = init_sdw_state(system, trajectory_rng(0, 0))
        state.amplitudes = system.propagator @ state.amplitudes
        self.assertAlmostEqual(state.norm(), 1.0, places=12)
        self.assertAlmostEqual(state.populations()[0], np.cos(np.sqrt(0.05)) ** 2, places=12)
        self.assertAlmostEqual(state.photons(), np.sin(np.sqrt(0.05)) ** 2, places=12)

    def test_coupling_graph(self):
        """ The undriven ground state with an empty waveguide is left alone. """
        system = build_system(SchemeConfig(t_max=0.1))
        column = system.propagator[:, 0].toarray().ravel()
        self.assertEqual(np.count_nonzero(column), 1)
        self.assertAlmostEqual(column[0], 1.0)


class TestJumps(unittest.TestCase):

    def test_probability(self):
        """ The jump probability is dt times the decay expectation. """
        system = build_system(SchemeConfig(gamma_0=0.1, t_max=0.1))
        state = init_sdw_state(system, trajectory_rng(0, 0))
        self.assertAlmostEqual(jump_probability(state), 0.005)
        ground = build_system(SchemeConfig(gamma_0=0.1, initial_state='g', t_max=0.1))
        self.assertEqual(jump_probability(init_sdw_state(ground, trajectory_rng(0, 0))), 0.0)

    def test_no_channels(self):
        """ Without Lindblad channels nothing ever jumps. """
        system = build_system(SchemeConfig(t_max=0.1))
        state = init_sdw_state(system, trajectory_rng(0, 0))
        before = state.amplitudes.copy()
        state, label = lindblad_jump_check(state)
        self.assertIsNone(label)
        npt.assert_array_equal(state.amplitudes, before)

    def test_certain_jump(self):
        """ A jump applies the collapse operator and renormalises. """
        system = build_system(SchemeConfig(gamma_0=0.1, t_max=0.1))
        state = init_sdw_state(system, trajectory_rng(0, 0))
        state, label = lindblad_jump_check(state, dt=1e3)
        self.assertEqual(label, 'decay_1')
        self.assertAlmostEqual(state.populations()[0], 0.0)
        self.assertAlmostEqual(state.norm(), 1.0)


class TestMeasureAndShift(unittest.TestCase):

    def test_vacuum(self):
        """ Empty output boxes never click and shifting vacuum gives vacuum. """
        system = _feedback_system()
        state = init_sdw_state(system, trajectory_rng(3, 0))
        before = state.amplitudes.copy()
        state, event = measure_output_boxes(state)
        self.assertIsNone(event)
        state = shift_boxes(state)
        npt.assert_allclose(state.amplitudes, before)

    def test_detection(self):
        """ A photon in the output box is always detected and leaves the vacuum behind. """
        system = _feedback_system()
        state = _state_with_photon(system, system.basis.exit_position('L'))
        state.t = 0.35
        state, event = measure_output_boxes(state)
        self.assertEqual(event, (0.35, 'L'))
        self.assertAlmostEqual(abs(state.amplitudes[0]), 1.0)

    def test_two_row_outcomes(self):
        """ Photons leaving the left-moving row are reported as L. """
        system = build_system(SchemeConfig(t_max=0.1))
        state = _state_with_photon(system, system.basis.exit_position('L'), excited=True)
        state, event = measure_output_boxes(state)
        self.assertEqual(event[1], 'L')
        self.assertAlmostEqual(state.populations()[0], 1.0)

    def test_shift(self):
        """ A photon in box 3 of the feedback row moves to box 4 with its amplitude unchanged. """
        system = _feedback_system()
        state = _state_with_photon(system, system.basis.position(3, 'L'))
        state.amplitudes *= np.exp(0.3j)
        state = shift_boxes(state)
        target = system.basis.index_of([system.basis.position(4, 'L')])
        self.assertAlmostEqual(state.amplitudes[target], np.exp(0.3j))
        self.assertAlmostEqual(state.norm(), 1.0)

    def test_shift_directions(self):
        """ L rows move towards the last box, R rows towards box 0. """
        system = build_system(SchemeConfig(t_max=0.1, photon_cap=2))
        basis = system.basis
        positions = [basis.position(4, 'L'), basis.position(4, 'R')]
        amplitudes = np.zeros(system.dimension, dtype=np.complex128)
        amplitudes[basis.index_of(positions)] = 1.0
        state = shift_boxes(SDWState(system, amplitudes, trajectory_rng(0, 0)))
        moved = basis.index_of([basis.position(5, 'L'), basis.position(3, 'R')])
        self.assertAlmostEqual(abs(state.amplitudes[moved]), 1.0)

    def test_shift_is_a_permutation(self):
        """ Shifting a random state with empty output boxes keeps its norm. """
        system = build_system(SchemeConfig(t_max=0.1, photon_cap=2))
        rng = np.random.default_rng(8)
        amplitudes = rng.normal(size=system.dimension) + 1j * rng.normal(size=system.dimension)
        amplitudes = amplitudes.reshape(2, -1)
        amplitudes[:, system.shift_targets < 0] = 0.0
        amplitudes = amplitudes.ravel() / np.linalg.norm(amplitudes)
        state = shift_boxes(SDWState(system, amplitudes, trajectory_rng(0, 0)))
        self.assertAlmostEqual(state.norm(), 1.0, places=12)

    def test_occupied_output_box(self):
        """ Shifting before measuring a full output box is an error. """
        system = _feedback_system()
        state = _state_with_photon(system, system.basis.exit_position('L'))
        with self.assertRaises(OccupiedOutputBoxError):
            shift_boxes(state)


class TestTrajectories(unittest.TestCase):

    def test_rng_streams(self):
        """ Streams depend only on the master seed and the trajectory index. """
        npt.assert_array_equal(trajectory_rng(5, 2).random(4), trajectory_rng(5, 2).random(4))
        self.assertFalse(np.array_equal(trajectory_rng(5, 2).random(4), trajectory_rng(5, 3).random(4)))

    def test_frozen_emitter(self):
        """ An uncoupled, undriven excited TLS stays excited. """
        config = SchemeConfig(gamma_l=0.0, gamma_r=0.0, t_max=1.0)
        trajectory = run_trajectory(config, seed=1)
        npt.assert_allclose(trajectory.populations[0], 1.0)
        self.assertEqual(trajectory.emissions, [])

    def test_excitation_bookkeeping(self):
        """ Population, in-flight photons and detections add up to one on every trajectory. """
        configs = [SchemeConfig(t_max=2.0), SchemeConfig(scheme=Scheme.FEEDBACK, tau=0.25, phi=np.pi, t_max=2.0)]
        for config in configs:
            system = build_system(config)
            for stream in range(5):
                trajectory = run_trajectory(config, seed=4, stream=stream, system=system)
                total = trajectory.populations[0] + trajectory.photons + trajectory.emitted
                npt.assert_allclose(total, 1.0, atol=1e-10)
                self.assertLessEqual(len(trajectory.emissions), 1)

    def test_delayed_conditioning(self):
        """ A detection collapses the TLS only after the photon has crossed the boxes. """
        config = SchemeConfig(t_max=8.0)
        trajectory = run_trajectory(config, seed=2)
        self.assertEqual(len(trajectory.emissions), 1)
        t_click = trajectory.emissions[0][0]
        self.assertGreaterEqual(t_click, 10 * config.dt - 1e-12)
        after = trajectory.times >= t_click - 1e-12
        npt.assert_allclose(trajectory.populations[0][after], 0.0, atol=1e-12)
        early = trajectory.times < 10 * config.dt - 1e-12
        self.assertTrue(np.all(np.diff(trajectory.populations[0][early]) < 0))

    def test_decay_jump(self):
        """ An off-chip decay jump empties the TLS at the recorded time without a detection. """
        config = SchemeConfig(gamma_l=0.0, gamma_r=0.0, gamma_0=1.0, t_max=10.0)
        system = build_system(config)
        for stream in range(5):
            trajectory = run_trajectory(config, seed=3, stream=stream, system=system)
            self.assertEqual(trajectory.emissions, [])
            self.assertEqual(len(trajectory.jumps), 1)
            t_jump, label = trajectory.jumps[0]
            self.assertEqual(label, 'decay_1')
            before = trajectory.times <= t_jump + 1e-12
            npt.assert_allclose(trajectory.populations[0][before], 1.0, atol=1e-12)
            npt.assert_allclose(trajectory.populations[0][~before], 0.0, atol=1e-12)


class TestEnsembles(unittest.TestCase):

    def test_single_trajectory(self):
        """ A one-trajectory ensemble reproduces trajectory 0. """
        config = SchemeConfig(t_max=1.0)
        result = ensemble_average(config, 1, master_seed=9)
        trajectory = run_trajectory(config, seed=9, stream=0)
        npt.assert_array_equal(result.table['population_1'].values, trajectory.populations[0])
        npt.assert_array_equal(result.table['population_1_se'].values, 0.0)

    def test_worker_independence(self):
        """ The ensemble result does not depend on the number of workers. """
        config = SchemeConfig(scheme=Scheme.FEEDBACK, tau=0.25, phi=np.pi, t_max=1.5)
        serial = ensemble_average(config, 7, master_seed=11, workers=1, keep_trajectories=2)
        threaded = ensemble_average(config, 7, master_seed=11, workers=3, keep_trajectories=2)
        pdt.assert_frame_equal(serial.table, threaded.table)
        pdt.assert_frame_equal(serial.emissions, threaded.emissions)
        pdt.assert_frame_equal(serial.trajectories, threaded.trajectories)
        self.assertEqual(list(serial.trajectories.columns),
                         ['t', 'trajectory_0_population_1', 'trajectory_1_population_1'])

    def test_photon_cap_consistency(self):
        """ From the vacuum with one excitation, caps of one and two photons agree. """
        one = ensemble_average(SchemeConfig(t_max=1.0, photon_cap=1), 5, master_seed=3)
        two = ensemble_average(SchemeConfig(t_max=1.0, photon_cap=2), 5, master_seed=3)
        npt.assert_allclose(one.table['population_1'], two.table['population_1'], atol=1e-8)

    def test_vacuum_decay(self):
        """ The ensemble mean follows exp(-gamma t) within its standard error. """
        result = ensemble_average(SchemeConfig(t_max=3.0), 200, master_seed=21, workers=2)
        table = result.table
        oracle = exp_decay(1.0, table['t'].values).population()
        deviation = np.abs(table['population_1'].values - oracle)
        self.assertTrue(np.all(deviation <= 4.0 * table['population_1_se'].values + 0.015))

    def test_standard_error_scaling(self):
        """ The standard error shrinks like one over the square root of the ensemble size. """
        config = SchemeConfig(t_max=1.0)
        small = ensemble_average(config, 100, master_seed=5)
        large = ensemble_average(config, 400, master_seed=6)
        ratio = small.table['population_1_se'].iloc[-1] / large.table['population_1_se'].iloc[-1]
        self.assertGreater(ratio, 1.5)
        self.assertLess(ratio, 2.6)


@unittest.skipUnless(EXTENDED, "set WGQED_EXTENDED=1 to run long acceptance checks")
class TestAcceptanceExtended(unittest.TestCase):

    def test_vacuum_decay_large_ensemble(self):
        """ 2000 trajectories stay within 0.05 of exp(-gamma t). """
        result = ensemble_average(SchemeConfig(t_max=5.0), 2000, master_seed=1, workers=4)
        oracle = exp_decay(1.0, result.table['t'].values).population()
        deviation = np.abs(result.table['population_1'].values - oracle)
        self.assertLessEqual(deviation.max(), 0.05)
        self.assertTrue(np.all(deviation <= 3.0 * result.table['population_1_se'].values + 0.01))

    def test_mean_detection_time(self):
        """ Detections lag the geometric emission statistics by the box transit. """
        config = SchemeConfig(t_max=10.0)
        result = ensemble_average(config, 2000, master_seed=2, workers=4)
        times = result.emissions['t'].values
        n_boxes = 10
        c = np.cos(np.sqrt(config.dt)) ** 2
        expected = config.dt * (1.0 / (1.0 - c) + n_boxes - 1)
        self.assertLessEqual(abs(times.mean() - expected), 3.0 * times.std(ddof=1) / np.sqrt(len(times)))

    def test_feedback_trapping(self):
        """ With phi = pi the ensemble settles on the delay-equation plateau. """
        config = SchemeConfig(scheme=Scheme.FEEDBACK, tau=1.0, phi=np.pi, t_max=10.0)
        result = ensemble_average(config, 2000, master_seed=3, workers=4)
        oracle = delay_amplitude(config, result.table['t'].values)
        late = result.table['t'].values >= 5.0
        deviation = np.abs(result.table['population_1'].values - oracle.population())
        self.assertLessEqual(deviation[late].max(), 0.05)

    def test_dissipation_breaks_trapping(self):
        """ Off-chip decay or dephasing drains the trapped population. """
        for extra in ({'gamma_0': 0.1}, {'gamma_p': 0.1}):
            config = SchemeConfig(scheme=Scheme.FEEDBACK, tau=1.0, phi=np.pi, t_max=20.0, **extra)
            table = ensemble_average(config, 500, master_seed=4, workers=4).table
            at = table.set_index(np.round(table['t'].values, 6))['population_1']
            self.assertLess(at[20.0], 0.8 * at[5.0])

    def test_two_emitters_against_mps(self):
        """ Two-TLS vacuum dynamics agree between the engines. """
        config = SchemeConfig(scheme=Scheme.TWO_TLS, tau=0.5, initial_state='eg', t_max=5.0, photon_cap=2)
        sdw = ensemble_average(config, 1000, master_seed=5, workers=4).table
        mps = run_mps(config).table
        self.assertTrue(compare_tables(mps, sdw, 0.05).passed)

    def test_two_emitters_driven(self):
        """ Driving TLS 1 populates TLS 2 through the waveguide; the engines agree. """
        config = SchemeConfig(scheme=Scheme.TWO_TLS, tau=0.5, omega=0.5 * np.pi, initial_state='gg', t_max=5.0,
                              photon_cap=2)
        sdw = ensemble_average(config, 3000, master_seed=7, workers=4).table
        mps = run_mps(config).table
        self.assertTrue(compare_tables(mps, sdw, 0.05).passed)
        self.assertGreater(mps['population_2'].iloc[-1], 0.01)

    def test_truncation_breakdown(self):
        """ Under strong drive a one-photon cap fails where two photons still track the MPS result. """
        base = SchemeConfig(scheme=Scheme.FEEDBACK, tau=2.0, phi=np.pi, omega=2 * np.pi, dt=0.02, sub_steps=10,
                            t_max=10.0)
        mps = run_mps(base).table
        two = ensemble_average(base._replace(photon_cap=2), 3000, master_seed=6, workers=4).table
        one = ensemble_average(base._replace(photon_cap=1), 3000, master_seed=6, workers=4).table
        self.assertTrue(compare_tables(mps, two, 0.05).passed)
        self.assertFalse(compare_tables(mps, one, 0.05).passed)

    def test_destructive_interference(self):
        """ With phi = 0 the ensemble follows the accelerated decay of the delay equation. """
        config = SchemeConfig(scheme=Scheme.FEEDBACK, tau=1.0, phi=0.0, t_max=5.0)
        result = ensemble_average(config, 2000, master_seed=8, workers=4)
        oracle = delay_amplitude(config, result.table['t'].values)
        deviation = np.abs(result.table['population_1'].values - oracle.population())
        self.assertLessEqual(deviation.max(), 0.05)

    def test_two_emitters_both_excited(self):
        """ Both TLSs excited with mirror couplings decay alike within the ensemble error. """
        config = SchemeConfig(scheme=Scheme.TWO_TLS, tau=0.5, initial_state='ee', t_max=5.0, photon_cap=2)
        table = ensemble_average(config, 1000, master_seed=9, workers=4).table
        difference = np.abs(table['population_1'].values - table['population_2'].values)
        bound = 3.0 * np.hypot(table['population_1_se'].values, table['population_2_se'].values) + 0.01
        self.assertTrue(np.all(difference <= bound))

    def test_longer_delay_lowers_plateau(self):
        """ The shared plateau of one excited TLS is lower for tau = 2.5 than for tau = 0.5. """
        plateaus = []
        for tau in (0.5, 2.5):
            config = SchemeConfig(scheme=Scheme.TWO_TLS, tau=tau, initial_state='eg', t_max=15.0)
            table = ensemble_average(config, 1000, master_seed=10, workers=4).table
            late = table['t'].values >= 12.0
            plateaus.append(table['population_1'].values[late].mean())
        self.assertGreater(plateaus[1], 0.0)
        self.assertLess(plateaus[1], plateaus[0])

    def test_strong_drive_envelopes(self):
        """ Under strong drive the Rabi envelope decays with two photons and in the MPS run but not with one. """
        base = SchemeConfig(scheme=Scheme.FEEDBACK, tau=1.0, phi=np.pi, omega=8 * np.pi, dt=0.02, sub_steps=10,
                            t_max=10.0)
        mps = run_mps(base).table
        two = ensemble_average(base._replace(photon_cap=2), 1000, master_seed=12, workers=4).table
        one = ensemble_average(base._replace(photon_cap=1), 1000, master_seed=12, workers=4).table
        slopes = [envelope_slope(table['t'].values, table['population_1'].values, t_min=2.0)
                  for table in (mps, two, one)]
        self.assertLess(slopes[0], 0.0)
        self.assertLess(slopes[1], 0.0)
        self.assertLess(abs(slopes[2]), 1e-3)


if __name__ == '__main__':
    unittest.main()
