import unittest

import numpy as np
from numpy import testing as npt

from wgqed.configuration import Config, ConfigTypeError
from wgqed.routines.linalg import SIGMA_MINUS, SIGMA_X, kron
from wgqed.routines.schemes import (Scheme, SchemeConfig, SchemeValidationError, coupling_pattern, default_chi_max,
                                    excited_projector, initial_system_vector, jump_operators, require_lossless,
                                    system_hamiltonian, validate)


class TestScheme(unittest.TestCase):

    def test_parse(self):
        """ Scheme names and their aliases resolve; unknown names raise. """
        self.assertIs(Scheme.parse('feedback'), Scheme.FEEDBACK)
        self.assertIs(Scheme.parse('Two-TLS'), Scheme.TWO_TLS)
        self.assertIs(Scheme.parse('i'), Scheme.INFINITE_WAVEGUIDE)
        with self.assertRaises(SchemeValidationError):
            Scheme.parse('cavity')

    def test_emitters(self):
        """ Only the two-TLS scheme carries a second emitter. """
        self.assertEqual(SchemeConfig(scheme=Scheme.TWO_TLS, initial_state='eg').system_dimension, 4)
        self.assertEqual(SchemeConfig().n_emitters, 1)


class TestValidate(unittest.TestCase):

    def test_infinite_geometry(self):
        """ The infinite waveguide uses two rows of ten boxes by default. """
        geometry = validate(SchemeConfig())
        self.assertEqual((geometry.l, geometry.boxes_n, geometry.rows), (0, 10, 2))

    def test_feedback_geometry(self):
        """ The delay fixes l = tau / dt and one box more than that. """
        geometry = validate(SchemeConfig(scheme=Scheme.FEEDBACK, tau=1.0, dt=0.05, photon_cap=2))
        self.assertEqual((geometry.l, geometry.boxes_n, geometry.photon_cap_m, geometry.rows), (20, 21, 2, 1))
        geometry = validate(SchemeConfig(scheme=Scheme.TWO_TLS, tau=0.5, initial_state='eg'))
        self.assertEqual((geometry.l, geometry.boxes_n, geometry.rows), (10, 11, 2))

    def test_step_count(self):
        """ The step count rounds t_max / dt up, tolerating floating-point noise. """
        self.assertEqual(SchemeConfig(t_max=5.0, dt=0.05).n_steps, 100)
        self.assertEqual(SchemeConfig(t_max=1.0, dt=0.3).n_steps, 4)

    def test_rejections(self):
        """ Invalid fields are rejected with a message naming the field. """
        cases = [
            (SchemeConfig(scheme=Scheme.FEEDBACK, tau=0.125, dt=0.05), 'tau / dt'),
            (SchemeConfig(tau=1.0), 'tau'),
            (SchemeConfig(scheme=Scheme.FEEDBACK, tau=0.0), 'tau'),
            (SchemeConfig(gamma_l=-1.0), 'gamma_l'),
            (SchemeConfig(dt=0.0), 'dt'),
            (SchemeConfig(photon_cap=3), 'photon_cap'),
            (SchemeConfig(initial_state='x'), 'initial_state'),
            (SchemeConfig(scheme=Scheme.TWO_TLS, tau=0.5, initial_state='e'), 'initial_state'),
            (SchemeConfig(detuning=0.1), 'detuning'),
            (SchemeConfig(scheme=Scheme.FEEDBACK, tau=1.0, boxes=5), 'boxes'),
        ]
        for config, field in cases:
            with self.assertRaises(SchemeValidationError) as context:
                validate(config)
            self.assertIn(field, str(context.exception))

    def test_lossless_requirement(self):
        """ Off-chip decay and dephasing are accepted by validate but refused where losses are not modelled. """
        require_lossless(SchemeConfig())
        for field in ('gamma_0', 'gamma_p'):
            config = SchemeConfig(**{field: 0.1})
            validate(config)
            with self.assertRaises(SchemeValidationError) as context:
                require_lossless(config)
            self.assertIn(field, str(context.exception))

    def test_validate_is_idempotent(self):
        """ Validating twice gives the same geometry. """
        config = SchemeConfig(scheme=Scheme.TWO_TLS, tau=0.5, initial_state='eg')
        self.assertEqual(validate(config), validate(config))

    def test_from_config(self):
        """ Values are read from a key = value config, including arithmetic over pi. """
        config = Config.from_string("scheme = feedback\ntau = 1\nphi = pi\nomega = 2*pi\nsub_steps = 10\n")
        scheme_config = SchemeConfig.from_config(config)
        self.assertIs(scheme_config.scheme, Scheme.FEEDBACK)
        self.assertAlmostEqual(scheme_config.phi, np.pi)
        self.assertAlmostEqual(scheme_config.omega, 2 * np.pi)
        self.assertEqual(scheme_config.sub_steps, 10)
        self.assertAlmostEqual(scheme_config.fine_dt, 0.005)

    def test_from_config_location(self):
        """ Conversion errors point at the offending line. """
        config = Config.from_string("scheme = feedback\ntau = abc\n", file_name='run.cfg')
        with self.assertRaises(ConfigTypeError) as context:
            SchemeConfig.from_config(config)
        self.assertIn('run.cfg:2', str(context.exception))


class TestOperators(unittest.TestCase):

    def test_drive(self):
        """ One TLS is driven with Omega sigma_x, two TLSs with (Omega_n / 2) sigma_x on each. """
        npt.assert_allclose(system_hamiltonian(SchemeConfig(omega=2.0)), 2.0 * SIGMA_X)
        config = SchemeConfig(scheme=Scheme.TWO_TLS, tau=0.5, initial_state='eg', omega=1.0)
        npt.assert_allclose(system_hamiltonian(config), 0.5 * kron(SIGMA_X, np.eye(2)))
        forced = config._replace(drive_half_convention=False)
        npt.assert_allclose(system_hamiltonian(forced), kron(SIGMA_X, np.eye(2)))

    def test_initial_vectors(self):
        """ TLS 1 is the slow index of the joint system bin. """
        two = SchemeConfig(scheme=Scheme.TWO_TLS, tau=0.5)
        npt.assert_array_equal(initial_system_vector(two._replace(initial_state='eg')), [0, 0, 1, 0])
        npt.assert_array_equal(initial_system_vector(two._replace(initial_state='ge')), [0, 1, 0, 0])
        npt.assert_array_equal(initial_system_vector(two._replace(initial_state='ee')), [0, 0, 0, 1])
        npt.assert_array_equal(initial_system_vector(SchemeConfig(initial_state='g')), [1, 0])
        npt.assert_array_equal(np.diag(excited_projector(two, 1)).real, [0, 1, 0, 1])

    def test_jump_operators(self):
        """ Off-chip decay and dephasing channels appear only when their rates are positive. """
        self.assertEqual(jump_operators(SchemeConfig()), [])
        channels = jump_operators(SchemeConfig(gamma_0=0.1, gamma_p=0.2))
        self.assertEqual([c.label for c in channels], ['decay_1', 'dephasing_1'])
        npt.assert_allclose(channels[0].operator, np.sqrt(0.1) * SIGMA_MINUS)
        two = jump_operators(SchemeConfig(scheme=Scheme.TWO_TLS, tau=0.5, initial_state='eg', gamma_0=0.1))
        self.assertEqual([c.label for c in two], ['decay_1', 'decay_2'])
        self.assertEqual(two[1].operator.shape, (4, 4))

    def test_coupling_pattern(self):
        """ Couplings sit where each emitter's field enters a row; delayed returns carry the phase. """
        config = SchemeConfig(scheme=Scheme.FEEDBACK, tau=0.25, dt=0.05, phi=np.pi)
        couplings = coupling_pattern(config, validate(config))
        self.assertEqual([(c.emitter, c.box, c.direction) for c in couplings], [(0, 5, 'L'), (0, 0, 'L')])
        self.assertAlmostEqual(couplings[0].amplitude, np.sqrt(0.5 / 0.05))
        self.assertAlmostEqual(couplings[1].amplitude, -np.sqrt(0.5 / 0.05))

        config = SchemeConfig(scheme=Scheme.TWO_TLS, tau=0.25, dt=0.05, initial_state='eg')
        couplings = coupling_pattern(config, validate(config))
        self.assertEqual([(c.emitter, c.box, c.direction) for c in couplings],
                         [(0, 0, 'L'), (0, 0, 'R'), (1, 5, 'L'), (1, 5, 'R')])

        config = SchemeConfig(gamma_l=0.3, gamma_r=0.7, dt=0.05)
        couplings = coupling_pattern(config, validate(config))
        self.assertEqual([(c.emitter, c.box, c.direction) for c in couplings], [(0, 0, 'L'), (0, 9, 'R')])
        npt.assert_allclose([c.amplitude for c in couplings], [np.sqrt(0.3 / 0.05), np.sqrt(0.7 / 0.05)])

    def test_coupling_rates(self):
        """ Per emitter, the squared couplings times dt add up to gamma_L + gamma_R. """
        configs = [
            SchemeConfig(gamma_l=0.2, gamma_r=0.8),
            SchemeConfig(scheme=Scheme.FEEDBACK, tau=0.5, phi=0.4, gamma_l=0.35, gamma_r=0.65),
            SchemeConfig(scheme=Scheme.TWO_TLS, tau=0.5, phi=1.3, initial_state='eg', gamma_l=0.1, gamma_r=0.9,
                         gamma_l2=0.6, gamma_r2=0.4),
        ]
        for config in configs:
            couplings = coupling_pattern(config, validate(config))
            for emitter, (gamma_l, gamma_r) in enumerate(config.emitter_rates()):
                total = sum(abs(c.amplitude) ** 2 * config.dt for c in couplings if c.emitter == emitter)
                self.assertAlmostEqual(total, gamma_l + gamma_r, places=12)

    def test_default_bond_caps(self):
        """ Bond caps follow the regime: vacuum, two TLSs, driven. """
        self.assertEqual(default_chi_max(SchemeConfig()), 2)
        self.assertEqual(default_chi_max(SchemeConfig(omega=1.0)), 32)
        self.assertEqual(default_chi_max(SchemeConfig(scheme=Scheme.TWO_TLS, tau=0.5, initial_state='eg')), 8)


if __name__ == '__main__':
    unittest.main()
