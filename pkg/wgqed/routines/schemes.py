"""
Physical schemes: a TLS in an infinite waveguide, a TLS in front of a mirror (time-delayed coherent feedback), and two
TLSs separated by a propagation delay. Everything here is engine-agnostic and stated in units of the normalisation
rate (the total waveguide decay rate of TLS 1), so times are ``t * gamma`` and drives are ``Omega / gamma``.
"""
import math
from enum import Enum
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from ..logging import get_model_logger
from .linalg import COMPLEX, SIGMA_MINUS, SIGMA_X, SIGMA_Z, kron, operator_on

DEFAULT_BOXES = 10
_COMMENSURABILITY_TOL = 1e-9

_logger = get_model_logger(__name__)


class SchemeValidationError(ValueError):
    pass


class Scheme(Enum):

    INFINITE_WAVEGUIDE = 'infinite'
    FEEDBACK = 'feedback'
    TWO_TLS = 'two_tls'

    @classmethod
    def parse(cls, value) -> 'Scheme':
        if isinstance(value, Scheme):
            return value
        key = str(value).strip().lower().replace('-', '_')
        aliases = {
            'infinite': cls.INFINITE_WAVEGUIDE, 'infinitewaveguide': cls.INFINITE_WAVEGUIDE,
            'infinite_waveguide': cls.INFINITE_WAVEGUIDE, 'i': cls.INFINITE_WAVEGUIDE,
            'feedback': cls.FEEDBACK, 'mirror': cls.FEEDBACK, 'ii': cls.FEEDBACK,
            'two_tls': cls.TWO_TLS, 'twotls': cls.TWO_TLS, 'iii': cls.TWO_TLS
        }
        if key not in aliases:
            raise SchemeValidationError("Unknown scheme '%s'; expected one of %s" % (value, [s.value for s in cls]))
        return aliases[key]

    @property
    def n_emitters(self) -> int:
        return 2 if self is Scheme.TWO_TLS else 1

    @property
    def has_delay(self) -> bool:
        return self is not Scheme.INFINITE_WAVEGUIDE


class SchemeConfig(NamedTuple):
    """
    Complete physical and numerical parameter set of one run, in normalised units. ``gamma_l``/``gamma_r`` are the
    directional rates of TLS 1 (the only TLS for the single-emitter schemes); ``gamma_l2``/``gamma_r2`` and
    ``omega_2`` belong to TLS 2. ``initial_state`` has one letter (``g`` or ``e``) per TLS, TLS 1 first.
    ``drive_half_convention`` forces the ``Omega/2`` drive prefactor on (True) or off (False); ``None`` uses the
    scheme default (off for one TLS, on for two).
    """
    scheme: Scheme = Scheme.INFINITE_WAVEGUIDE
    gamma_l: float = 0.5
    gamma_r: float = 0.5
    gamma_l2: float = 0.5
    gamma_r2: float = 0.5
    omega: float = 0.0
    omega_2: float = 0.0
    tau: float = 0.0
    phi: float = 0.0
    gamma_0: float = 0.0
    gamma_p: float = 0.0
    dt: float = 0.05
    sub_steps: int = 1
    t_max: float = 5.0
    initial_state: str = 'e'
    photon_cap: int = 1
    boxes: Optional[int] = None
    drive_half_convention: Optional[bool] = None
    detuning: float = 0.0

    @property
    def n_emitters(self) -> int:
        return self.scheme.n_emitters

    @property
    def system_dimension(self) -> int:
        return 2 ** self.n_emitters

    @property
    def normalisation_rate(self) -> float:
        """Total waveguide decay rate of TLS 1; the unit every rate and time is expressed in."""
        return self.gamma_l + self.gamma_r

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_max / self.dt - _COMMENSURABILITY_TOL))

    @property
    def fine_dt(self) -> float:
        return self.dt / self.sub_steps

    @property
    def half_drive(self) -> bool:
        if self.drive_half_convention is None:
            return self.scheme is Scheme.TWO_TLS
        return bool(self.drive_half_convention)

    @property
    def excited(self) -> Tuple[bool, ...]:
        return tuple(c == 'e' for c in self.initial_state)

    @property
    def excitation_count(self) -> int:
        return sum(self.excited)

    def emitter_rates(self) -> List[Tuple[float, float]]:
        """(gamma_L, gamma_R) per emitter"""
        rates = [(self.gamma_l, self.gamma_r)]
        if self.scheme is Scheme.TWO_TLS:
            rates.append((self.gamma_l2, self.gamma_r2))
        return rates

    def drives(self) -> List[float]:
        drives = [self.omega]
        if self.scheme is Scheme.TWO_TLS:
            drives.append(self.omega_2)
        return drives

    @classmethod
    def from_config(cls, config) -> 'SchemeConfig':
        """
        Builds a SchemeConfig from a flat ``wgqed.configuration.Config``. Keys that are absent take their defaults.
        Type errors carry the file and line of the offending entry.
        """
        kwargs = {}
        for name in cls._fields:
            if name not in config:
                continue
            value = config[name]
            if name == 'scheme':
                try:
                    kwargs[name] = Scheme.parse(value.as_str())
                except SchemeValidationError as err:
                    raise SchemeValidationError("%s: %s" % (value.location, err))
            elif name in ('sub_steps', 'photon_cap', 'boxes'):
                kwargs[name] = value.as_int()
            elif name == 'drive_half_convention':
                text = value.as_str().strip().lower()
                kwargs[name] = None if text in ('auto', 'none', '') else value.as_bool()
            elif name == 'initial_state':
                kwargs[name] = value.as_str().strip().lower()
            else:
                kwargs[name] = value.as_float()
        return cls(**kwargs)


class DelayGeometry(NamedTuple):
    """
    Discretisation of the delay line. ``l`` is the delay in coarse steps (``tau / dt``), ``boxes_n`` the number of SDW
    boxes per row, ``rows`` the number of directional box rows and ``photon_cap_m`` the SDW photon cap.
    """
    l: int
    boxes_n: int
    photon_cap_m: int
    rows: int


class Coupling(NamedTuple):
    """One emitter-box coupling of the SDW interaction Hamiltonian, amplitude in units of rate**0.5"""
    emitter: int
    box: int
    direction: str
    amplitude: complex


class JumpChannel(NamedTuple):
    """Lindblad collapse operator on the system space (identity on the waveguide)"""
    label: str
    operator: np.ndarray


def validate(config: SchemeConfig) -> DelayGeometry:
    """
    Checks a configuration and derives its delay geometry.

    Raises:
        SchemeValidationError: on any inconsistent or out-of-range field; the message names the field
    """
    scheme = Scheme.parse(config.scheme)

    rate_fields = ['gamma_l', 'gamma_r', 'omega', 'gamma_0', 'gamma_p']
    if scheme is Scheme.TWO_TLS:
        rate_fields += ['gamma_l2', 'gamma_r2', 'omega_2']
    for name in rate_fields:
        value = getattr(config, name)
        if not math.isfinite(value) or value < 0:
            raise SchemeValidationError("%s must be finite and non-negative, got %r" % (name, value))

    for name in ('tau', 'phi', 'dt', 't_max'):
        if not math.isfinite(getattr(config, name)):
            raise SchemeValidationError("%s must be finite" % name)
    if config.dt <= 0:
        raise SchemeValidationError("dt must be positive, got %r" % config.dt)
    if config.t_max <= 0:
        raise SchemeValidationError("t_max must be positive, got %r" % config.t_max)
    if int(config.sub_steps) != config.sub_steps or config.sub_steps < 1:
        raise SchemeValidationError("sub_steps must be an integer >= 1, got %r" % config.sub_steps)
    if config.detuning != 0:
        raise SchemeValidationError("Only resonant driving is supported; detuning must be 0, got %r" % config.detuning)
    if config.photon_cap not in (1, 2):
        raise SchemeValidationError("photon_cap must be 1 or 2, got %r" % config.photon_cap)
    if config.normalisation_rate > 0 and abs(config.normalisation_rate - 1.0) > 1e-12:
        _logger.warning("gamma_l + gamma_r = %g differs from 1; results are not in units of the total decay rate",
                        config.normalisation_rate)

    initial = config.initial_state
    if len(initial) != scheme.n_emitters or any(c not in 'ge' for c in initial):
        raise SchemeValidationError(
            "initial_state '%s' must have %d letter(s) from {g, e}" % (initial, scheme.n_emitters)
        )

    if scheme is Scheme.INFINITE_WAVEGUIDE:
        if config.tau != 0:
            raise SchemeValidationError("tau must be 0 for the infinite waveguide, got %r" % config.tau)
        boxes = DEFAULT_BOXES if config.boxes is None else int(config.boxes)
        if boxes < 1:
            raise SchemeValidationError("boxes must be at least 1, got %r" % config.boxes)
        return DelayGeometry(0, boxes, int(config.photon_cap), 2)

    if config.tau <= 0:
        raise SchemeValidationError("tau must be positive for scheme '%s'" % scheme.value)
    l = int(round(config.tau / config.dt))
    if l < 1 or abs(l * config.dt - config.tau) > _COMMENSURABILITY_TOL * config.tau:
        raise SchemeValidationError(
            "tau / dt = %.12g / %.12g is not a positive integer" % (config.tau, config.dt)
        )

    boxes = l + 1
    if config.boxes is not None and int(config.boxes) != boxes:
        raise SchemeValidationError(
            "boxes is fixed by the delay for scheme '%s' (tau / dt + 1 = %d), got %r" % (scheme.value, boxes,
                                                                                         config.boxes)
        )
    rows = 1 if scheme is Scheme.FEEDBACK else 2
    return DelayGeometry(l, boxes, int(config.photon_cap), rows)


def require_lossless(config: SchemeConfig):
    """
    The MPS engine has no off-chip decay or dephasing channels.

    Raises:
        SchemeValidationError: if ``gamma_0`` or ``gamma_p`` is not 0
    """
    for name in ('gamma_0', 'gamma_p'):
        value = getattr(config, name)
        if value != 0:
            raise SchemeValidationError("%s = %r needs the SDW engine; the MPS engine only runs with %s = 0" % (
                name, value, name))


def system_hamiltonian(config: SchemeConfig) -> np.ndarray:
    """Rotating-frame system Hamiltonian at resonance: only the drive survives."""
    prefactor = 0.5 if config.half_drive else 1.0
    n = config.n_emitters
    h = np.zeros([2 ** n, 2 ** n], dtype=COMPLEX)
    for emitter, omega in enumerate(config.drives()):
        h += prefactor * omega * operator_on(SIGMA_X, emitter, [2] * n)
    return h


def coupling_pattern(config: SchemeConfig, geometry: DelayGeometry) -> List[Coupling]:
    """
    Emitter-box couplings of the SDW interaction Hamiltonian. ``R`` rows run from box ``N-1`` to box 0 and ``L`` rows
    from box 0 to box ``N-1``; each emitter couples where its outgoing field enters a row, and the delayed return
    couplings carry the propagation phase.

    The box positions are chosen so that the engines match, not to keep every coupling at box 0. The infinite
    waveguide couples ``R`` at box ``N-1`` so both directions cross the whole row before detection. The two-TLS scheme
    puts TLS 1 at box 0 and TLS 2 at box ``N-1``. The feedback scheme uses one ``L`` row. The field leaves through the
    ``gamma_r`` coupling at box 0 and returns ``l`` shifts later through ``gamma_l`` at box ``N-1``. The round trip
    picks up ``exp(-i phi)``, as on the feedback bin of the MPS gate.
    """
    dt = config.dt
    last = geometry.boxes_n - 1
    phase = np.exp(1j * config.phi)
    scheme = Scheme.parse(config.scheme)

    def amp(rate):
        return complex(np.sqrt(rate / dt))

    if scheme is Scheme.INFINITE_WAVEGUIDE:
        return [
            Coupling(0, 0, 'L', amp(config.gamma_l)),
            Coupling(0, last, 'R', amp(config.gamma_r))
        ]

    if scheme is Scheme.FEEDBACK:
        return [
            Coupling(0, last, 'L', amp(config.gamma_l)),
            Coupling(0, 0, 'L', phase * amp(config.gamma_r))
        ]

    return [
        Coupling(0, 0, 'L', amp(config.gamma_l)),
        Coupling(0, 0, 'R', phase * amp(config.gamma_r)),
        Coupling(1, last, 'L', phase * amp(config.gamma_l2)),
        Coupling(1, last, 'R', amp(config.gamma_r2))
    ]


def jump_operators(config: SchemeConfig) -> List[JumpChannel]:
    """Off-chip decay ``sqrt(gamma_0) sigma-`` and pure dephasing ``sqrt(gamma_p / 2) sigma_z``, one of each per TLS."""
    n = config.n_emitters
    channels = []
    for emitter in range(n):
        if config.gamma_0 > 0:
            op = np.sqrt(config.gamma_0) * operator_on(SIGMA_MINUS, emitter, [2] * n)
            channels.append(JumpChannel('decay_%d' % (emitter + 1), op))
        if config.gamma_p > 0:
            op = np.sqrt(config.gamma_p / 2.0) * operator_on(SIGMA_Z, emitter, [2] * n)
            channels.append(JumpChannel('dephasing_%d' % (emitter + 1), op))
    return channels


def initial_system_vector(config: SchemeConfig) -> np.ndarray:
    """Product state of the TLSs, TLS 1 as the slow index"""
    vector = np.ones(1, dtype=COMPLEX)
    for excited in config.excited:
        vector = kron(vector.reshape(-1, 1), np.array([[0], [1]] if excited else [[1], [0]])).ravel()
    return vector


def excited_projector(config: SchemeConfig, emitter: int) -> np.ndarray:
    """``sigma+ sigma-`` of one TLS on the system space"""
    n = config.n_emitters
    return operator_on(np.diag([0, 1]).astype(COMPLEX), emitter, [2] * n)


def default_chi_max(config: SchemeConfig) -> int:
    """Bond caps sufficient for each regime: 2 for the one-TLS vacuum, 8 for two TLSs, 32 for a driven TLS."""
    if config.scheme is Scheme.TWO_TLS:
        return 8
    if config.omega > 0:
        return 32
    return 2
