"""
Reference solutions for acceptance checks: closed-form decay, the optical Bloch equations of a driven TLS without
feedback, and the single-excitation delay equations of the feedback and two-TLS schemes.
"""
from enum import Enum
from typing import NamedTuple

import numexpr as ne
import numpy as np
import pandas as pd
from numba import njit
from scipy.integrate import solve_ivp

from ..logging import get_model_logger
from .schemes import Scheme, SchemeConfig

DEFAULT_STEPS_PER_DELAY = 1000

_logger = get_model_logger(__name__)


class OracleDomainError(ValueError):
    pass


class OracleMethod(Enum):

    CLOSED_FORM = 'closed_form'
    BLOCH_ODE = 'bloch_ode'
    DELAY_ODE = 'delay_ode'


class OracleCurve(NamedTuple):
    """``table`` has a ``t`` column and one ``population_<n>`` column per TLS"""
    table: pd.DataFrame
    method: OracleMethod

    @property
    def times(self) -> np.ndarray:
        return self.table['t'].values

    def population(self, which: int = 1) -> np.ndarray:
        return self.table['population_%d' % which].values


def _config_times(config: SchemeConfig) -> np.ndarray:
    return np.arange(config.n_steps + 1) * config.dt


def exp_decay(gamma: float, times) -> OracleCurve:
    """Excited-state population ``exp(-gamma * t)`` of an undriven TLS without feedback."""
    if gamma < 0:
        raise OracleDomainError("gamma must be non-negative, got %r" % gamma)
    times = np.asarray(times, dtype=np.float64)
    values = ne.evaluate("exp(-gamma * times)")
    return OracleCurve(pd.DataFrame({'t': times, 'population_1': values}), OracleMethod.CLOSED_FORM)


def bloch_steady(config: SchemeConfig, times=None) -> OracleCurve:
    """
    Integrates the resonant optical Bloch equations of one driven TLS in an infinite waveguide, with total decay
    ``gamma_l + gamma_r + gamma_0`` and pure dephasing ``gamma_p``, using the same drive prefactor as the engines.

    Args:
        config: An infinite-waveguide configuration
        times: Output grid; defaults to the configuration's coarse time grid

    Raises:
        OracleDomainError: for other schemes or a detuned drive
    """
    if config.scheme is not Scheme.INFINITE_WAVEGUIDE:
        raise OracleDomainError("The Bloch oracle only covers the infinite waveguide, got '%s'" % config.scheme.value)
    if config.detuning != 0:
        raise OracleDomainError("The Bloch oracle is resonant only; detuning must be 0")
    times = _config_times(config) if times is None else np.asarray(times, dtype=np.float64)

    omega = (0.5 if config.half_drive else 1.0) * config.omega
    decay = config.gamma_l + config.gamma_r + config.gamma_0
    coherence_decay = 0.5 * decay + config.gamma_p

    def bloch(_, v):
        x, y, z = v
        return [-coherence_decay * x, 2.0 * omega * z - coherence_decay * y, -2.0 * omega * y - decay * (z + 1.0)]

    z0 = 1.0 if config.excited[0] else -1.0
    solution = solve_ivp(bloch, (0.0, float(times[-1])), [0.0, 0.0, z0], method='DOP853', t_eval=times,
                         rtol=1e-10, atol=1e-12)
    if not solution.success:
        raise RuntimeError("Bloch integration failed: %s" % solution.message)
    population = 0.5 * (1.0 + solution.y[2])
    return OracleCurve(pd.DataFrame({'t': times, 'population_1': population}), OracleMethod.BLOCH_ODE)


@njit(nogil=True)
def _nbf_rate(local, coupling, c, past, delayed):
    n = c.shape[0]
    out = np.empty(n, dtype=np.complex128)
    for a in range(n):
        out[a] = local[a] * c[a]
        if delayed:
            for b in range(n):
                out[a] += coupling[a, b] * past[b]
    return out


@njit(nogil=True)
def _nbf_delay_steps(c0, local, coupling, steps_per_delay, n_steps, h):
    """
    Classical RK4 over a fixed grid whose step divides the delay. The delayed term is off for the first delay interval;
    history at half steps is cubic Hermite on the stored values and one-sided derivatives.
    """
    n = c0.shape[0]
    c = np.zeros((n_steps + 1, n), dtype=np.complex128)
    d_start = np.zeros((n_steps, n), dtype=np.complex128)
    d_end = np.zeros((n_steps, n), dtype=np.complex128)
    c[0] = c0
    zero = np.zeros(n, dtype=np.complex128)
    for j in range(n_steps):
        delayed = j >= steps_per_delay
        if delayed:
            i = j - steps_per_delay
            past0 = c[i]
            past1 = c[i + 1]
            past_mid = 0.5 * (past0 + past1) + h * (d_start[i] - d_end[i]) / 8.0
        else:
            past0 = zero
            past1 = zero
            past_mid = zero
        cj = c[j]
        k1 = _nbf_rate(local, coupling, cj, past0, delayed)
        k2 = _nbf_rate(local, coupling, cj + 0.5 * h * k1, past_mid, delayed)
        k3 = _nbf_rate(local, coupling, cj + 0.5 * h * k2, past_mid, delayed)
        k4 = _nbf_rate(local, coupling, cj + h * k3, past1, delayed)
        c[j + 1] = cj + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        d_start[j] = k1
        d_end[j] = _nbf_rate(local, coupling, c[j + 1], past1, delayed)
    return c


def delay_amplitude(config: SchemeConfig, times=None, steps_per_delay: int = DEFAULT_STEPS_PER_DELAY) -> OracleCurve:
    """
    Single-excitation amplitudes of the delayed schemes, integrated by the method of steps.

    Feedback: ``c' = -(gamma_l + gamma_r)/2 c - sqrt(gamma_l gamma_r) exp(-i phi) c(t - tau)``. Two TLSs:
    ``c1' = -gamma_1/2 c1 - sqrt(gamma_r1 gamma_r2) exp(i phi) c2(t - tau)`` and
    ``c2' = -gamma_2/2 c2 - sqrt(gamma_l1 gamma_l2) exp(i phi) c1(t - tau)``. Off-chip decay adds ``-gamma_0/2 c``.

    Args:
        config: A feedback or two-TLS configuration with at most one excitation and no drive
        times: Output grid (defaults to the configuration grid). Points are taken from the nearest fine step.
        steps_per_delay: Minimum number of fine steps per delay; rounded up to a multiple of ``tau / dt``

    Raises:
        OracleDomainError: for a drive, dephasing, two excitations or a scheme without delay
    """
    if not config.scheme.has_delay:
        raise OracleDomainError("The delay oracle needs a delayed scheme, got '%s'" % config.scheme.value)
    if any(omega != 0 for omega in config.drives()):
        raise OracleDomainError("The delay oracle covers the undriven single-excitation sector only")
    if config.gamma_p != 0:
        raise OracleDomainError("Pure dephasing does not keep the amplitude equations closed")
    if config.excitation_count > 1:
        raise OracleDomainError("The delay oracle covers at most one excitation, got '%s'" % config.initial_state)

    l = int(round(config.tau / config.dt))
    per_dt = max(1, int(np.ceil(steps_per_delay / max(l, 1))))
    h = config.dt / per_dt
    m = l * per_dt

    grid = _config_times(config) if times is None else np.asarray(times, dtype=np.float64)
    n_steps = int(np.ceil(grid[-1] / h - 1e-9))

    phase = np.exp(1j * config.phi)
    rates = config.emitter_rates()
    local = np.array([-0.5 * (gl + gr + config.gamma_0) for gl, gr in rates], dtype=np.complex128)
    if config.scheme is Scheme.FEEDBACK:
        gl, gr = rates[0]
        coupling = np.array([[-np.sqrt(gl * gr) / phase]], dtype=np.complex128)
    else:
        (gl1, gr1), (gl2, gr2) = rates
        coupling = np.array([
            [0.0, -np.sqrt(gr1 * gr2) * phase],
            [-np.sqrt(gl1 * gl2) * phase, 0.0]
        ], dtype=np.complex128)

    c0 = np.array([1.0 if e else 0.0 for e in config.excited], dtype=np.complex128)
    _logger.debug("Delay oracle: %d fine steps of %.3g (%d per delay)", n_steps, h, m)
    amplitudes = _nbf_delay_steps(c0, local, coupling, m, n_steps, h)

    rows = np.clip(np.rint(grid / h).astype(np.int64), 0, n_steps)
    columns = {'t': grid}
    for n in range(config.n_emitters):
        columns['population_%d' % (n + 1)] = np.abs(amplitudes[rows, n]) ** 2
    return OracleCurve(pd.DataFrame(columns), OracleMethod.DELAY_ODE)


def reference_curve(config: SchemeConfig, times=None) -> OracleCurve:
    """Picks the oracle that covers ``config``: closed form, Bloch equations or delay equations."""
    if config.scheme is Scheme.INFINITE_WAVEGUIDE:
        undriven = config.omega == 0 and config.gamma_p == 0 and config.excited[0]
        if undriven:
            grid = _config_times(config) if times is None else times
            return exp_decay(config.gamma_l + config.gamma_r + config.gamma_0, grid)
        return bloch_steady(config, times)
    return delay_amplitude(config, times)
