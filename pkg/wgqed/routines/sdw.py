"""
Space-discretised waveguide (SDW) quantum-trajectory engine.

The waveguide is a chain of boxes of length ``c * dt`` arranged in one or two directional rows. ``R`` rows move towards
box 0 and ``L`` rows towards box ``N - 1``; each box holds at most one photon and the whole waveguide at most ``M``.
A trajectory evolves the system-waveguide ket with the non-Hermitian effective propagator (with Lindblad jumps), then
measures the boxes that leave the chain, projects, shifts every row by one box and renormalises.

The full ket is stored as a vector of length ``dim(system) * size(basis)`` with the system as the slow index.
"""
from itertools import combinations
from threading import Thread
from typing import List, NamedTuple, Optional, Sequence, Tuple

from numba import njit
import numpy as np
import pandas as pd
import scipy.sparse as sp

from ..logging import get_model_logger
from .general import get_breaks
from .linalg import COMPLEX, SIGMA_PLUS, operator_on, sparse_matexp
from .schemes import (Coupling, DelayGeometry, JumpChannel, Scheme, SchemeConfig, coupling_pattern,
                      excited_projector, initial_system_vector, jump_operators, system_hamiltonian, validate)

JUMP_PROBABILITY_WARNING = 0.1
NORM_FLOOR = 1e-12
OUTCOME_NONE = 'none'

_logger = get_model_logger(__name__)


class NormCollapseError(RuntimeError):
    pass


class OccupiedOutputBoxError(RuntimeError):
    pass


class MeasurementError(RuntimeError):
    pass


# region Basis


class WaveguideBasis(object):
    """
    Occupation patterns of ``rows * N`` boxes with at most one photon per box and at most ``M`` photons in total,
    ordered by photon number and then lexicographically by occupied positions. Position ``r * N + n`` is box ``n`` of
    row ``r``. ``occupied`` lists the occupied positions of each state (padded with -1).
    """

    def __init__(self, n_boxes: int, directions: Sequence[str], photon_cap: int):
        if photon_cap not in (1, 2):
            raise ValueError("photon_cap must be 1 or 2, got %r" % photon_cap)
        assert n_boxes >= 1, "at least one box is required"
        self.n_boxes = int(n_boxes)
        self.directions = tuple(directions)
        self.photon_cap = int(photon_cap)

        n_positions = self.n_positions
        patterns = []
        for n_photons in range(self.photon_cap + 1):
            patterns.extend(combinations(range(n_positions), n_photons))

        self.occupied = np.full([len(patterns), self.photon_cap], -1, dtype=np.int64)
        for i, pattern in enumerate(patterns):
            self.occupied[i, :len(pattern)] = pattern

        self.lookup = np.full(_key_space(n_positions, self.photon_cap), -1, dtype=np.int64)
        for i in range(len(patterns)):
            self.lookup[_key(self.occupied[i], n_positions)] = i

    @property
    def rows(self) -> int:
        return len(self.directions)

    @property
    def n_positions(self) -> int:
        return self.rows * self.n_boxes

    @property
    def size(self) -> int:
        return self.occupied.shape[0]

    def __len__(self): return self.size

    def position(self, box: int, direction: str) -> int:
        return self.directions.index(direction) * self.n_boxes + int(box)

    def exit_position(self, direction: str) -> int:
        return self.position(0 if direction == 'R' else self.n_boxes - 1, direction)

    def index_of(self, positions: Sequence[int]) -> int:
        """Dense index of the state with photons at ``positions`` (-1 if outside the truncated basis)"""
        positions = sorted(positions)
        if len(positions) > self.photon_cap or len(set(positions)) != len(positions):
            return -1
        padded = np.full(self.photon_cap, -1, dtype=np.int64)
        padded[:len(positions)] = positions
        return int(self.lookup[_key(padded, self.n_positions)])

    def photon_counts(self) -> np.ndarray:
        return np.sum(self.occupied >= 0, axis=1)

    def annihilation(self, position: int) -> sp.csr_matrix:
        """Sparse operator removing the photon at ``position``; creation is its adjoint (restricted to the basis)."""
        rows, cols = [], []
        for i in range(self.size):
            occupied = [p for p in self.occupied[i] if p >= 0]
            if position not in occupied:
                continue
            occupied.remove(position)
            rows.append(self.index_of(occupied))
            cols.append(i)
        data = np.ones(len(rows), dtype=COMPLEX)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.size, self.size))


def _key_space(n_positions: int, photon_cap: int) -> int:
    return (n_positions + 1) ** photon_cap


def _key(padded: np.ndarray, n_positions: int) -> int:
    key = 0
    for p in padded:
        key = key * (n_positions + 1) + int(p) + 1
    return key


@njit(nogil=True)
def _nbf_shift_targets(occupied, lookup, n_boxes, row_steps):
    """For every basis state, the index after one shift of all rows; -1 if a photon would leave the chain."""
    n_states, cap = occupied.shape
    n_positions = n_boxes * len(row_steps)
    targets = np.full(n_states, -1, dtype=np.int64)
    shifted = np.empty(cap, dtype=np.int64)
    for i in range(n_states):
        leaving = False
        for k in range(cap):
            p = occupied[i, k]
            if p < 0:
                shifted[k] = -1
                continue
            row = p // n_boxes
            box = p % n_boxes + row_steps[row]
            if box < 0 or box >= n_boxes:
                leaving = True
                break
            shifted[k] = row * n_boxes + box
        if leaving:
            continue
        shifted.sort()
        # padding (-1) sorts first; move it to the back to match the basis layout
        n_empty = 0
        for k in range(cap):
            if shifted[k] < 0:
                n_empty += 1
        key = 0
        for k in range(cap):
            value = shifted[(k + n_empty) % cap] if k < cap - n_empty else -1
            key = key * (n_positions + 1) + value + 1
        targets[i] = lookup[key]
    return targets


def build_basis(geometry: DelayGeometry, scheme: Scheme = None) -> WaveguideBasis:
    """
    Truncated box-occupation basis. Two rows (``L``, ``R``) for the infinite waveguide and two TLSs; the feedback
    scheme uses a single ``L``-type row whose field passes the emitter twice.
    """
    directions = ('L', 'R') if geometry.rows == 2 else ('L',)
    if scheme is not None and Scheme.parse(scheme) is Scheme.FEEDBACK:
        assert geometry.rows == 1, "the feedback scheme uses a single row"
    return WaveguideBasis(geometry.boxes_n, directions, geometry.photon_cap_m)

# endregion

# region Propagator


def effective_hamiltonian(config: SchemeConfig, geometry: DelayGeometry, basis: WaveguideBasis,
                          couplings: List[Coupling] = None, channels: List[JumpChannel] = None) -> sp.csr_matrix:
    """``H_S + H_I - (i/2) sum C^dagger C`` on system x waveguide, sparse."""
    if couplings is None:
        couplings = coupling_pattern(config, geometry)
    if channels is None:
        channels = jump_operators(config)
    n = config.n_emitters
    identity_w = sp.identity(basis.size, dtype=COMPLEX, format='csr')

    h_sys = system_hamiltonian(config)
    for channel in channels:
        h_sys = h_sys - 0.5j * (channel.operator.conj().T @ channel.operator)
    h = sp.kron(sp.csr_matrix(h_sys), identity_w, format='csr')

    for coupling in couplings:
        sigma = sp.csr_matrix(operator_on(SIGMA_PLUS, coupling.emitter, [2] * n))
        box = basis.annihilation(basis.position(coupling.box, coupling.direction))
        term = coupling.amplitude * sp.kron(sigma, box, format='csr')
        h = h + term + term.conj().T
    return h.tocsr()


def build_effective_propagator(config: SchemeConfig, geometry: DelayGeometry, basis: WaveguideBasis,
                               couplings: List[Coupling] = None, channels: List[JumpChannel] = None) -> sp.csr_matrix:
    """``exp(-i H_eff dt / sub_steps)``, with entries below 1e-14 dropped."""
    h = effective_hamiltonian(config, geometry, basis, couplings, channels)
    return sparse_matexp(-1j * config.fine_dt * h)


class SDWSystem(NamedTuple):
    """Everything a trajectory needs that does not change between trajectories. Shared read-only by all workers."""
    config: SchemeConfig
    geometry: DelayGeometry
    basis: WaveguideBasis
    propagator: sp.csr_matrix
    channels: List[JumpChannel]
    channel_operators: np.ndarray  # (channels, system, system)
    shift_targets: np.ndarray
    outcome_labels: Tuple[str, ...]
    outcome_sources: np.ndarray  # waveguide indices kept by each outcome, concatenated in outcome order
    outcome_targets: np.ndarray  # where each of them lands once the exit box is emptied
    outcome_offsets: np.ndarray
    excited: np.ndarray  # (emitters, system) indicator of the excited system states
    photon_counts: np.ndarray

    @property
    def dimension(self) -> int:
        return self.config.system_dimension * self.basis.size


def build_system(config: SchemeConfig, geometry: DelayGeometry = None) -> SDWSystem:
    if geometry is None:
        geometry = validate(config)
    basis = build_basis(geometry, config.scheme)
    channels = jump_operators(config)
    _logger.tip("SDW: %s scheme, %d boxes x %d row(s), M = %d, state dimension %d", config.scheme.value,
                geometry.boxes_n, geometry.rows, geometry.photon_cap_m, config.system_dimension * basis.size)
    propagator = build_effective_propagator(config, geometry, basis, channels=channels).tocsr()
    propagator.sort_indices()

    row_steps = np.array([1 if d == 'L' else -1 for d in basis.directions], dtype=np.int64)
    shift_targets = _nbf_shift_targets(basis.occupied, basis.lookup, basis.n_boxes, row_steps)

    exit_positions = [basis.exit_position(d) for d in basis.directions]
    at_exit = [np.any(basis.occupied == p, axis=1) for p in exit_positions]
    any_exit = np.logical_or.reduce(at_exit)

    labels, sources, targets = [OUTCOME_NONE], [np.flatnonzero(~any_exit)], [np.flatnonzero(~any_exit)]
    for r, direction in enumerate(basis.directions):
        only_here = at_exit[r] & (np.sum(at_exit, axis=0) == 1)
        source = np.flatnonzero(only_here)
        target = np.array([
            basis.index_of([p for p in basis.occupied[i] if p >= 0 and p != exit_positions[r]]) for i in source
        ], dtype=np.int64)
        labels.append(direction)
        sources.append(source)
        targets.append(target)

    offsets = np.cumsum([0] + [len(source) for source in sources]).astype(np.int64)
    excited = np.array([np.real(np.diag(excited_projector(config, n))) for n in range(config.n_emitters)])
    return SDWSystem(config, geometry, basis, propagator, channels,
                     _stack_operators(channels, config.system_dimension), shift_targets, tuple(labels),
                     np.concatenate(sources).astype(np.int64), np.concatenate(targets).astype(np.int64), offsets,
                     excited, basis.photon_counts().astype(np.int64))


def _stack_operators(channels: Sequence[JumpChannel], d_sys: int) -> np.ndarray:
    operators = np.zeros([len(channels), d_sys, d_sys], dtype=COMPLEX)
    for i, channel in enumerate(channels):
        operators[i] = channel.operator
    return operators

# endregion

# region Kernels

MEASUREMENT_SLACK = 1e-8

STATUS_OK = 0
STATUS_NORM_COLLAPSE = 1
STATUS_MEASUREMENT = 2
STATUS_OCCUPIED_OUTPUT = 3


@njit(nogil=True)
def _nbf_pick(weights, target):
    """First index whose cumulative weight exceeds ``target``"""
    running = 0.0
    for i in range(weights.shape[0]):
        running += weights[i]
        if target < running:
            return i
    return weights.shape[0] - 1


@njit(nogil=True)
def _nbf_column_weight(psi, d_sys, n_w, j):
    w = 0.0
    for a in range(d_sys):
        x = psi[a * n_w + j]
        w += x.real * x.real + x.imag * x.imag
    return w


@njit(nogil=True)
def _nbf_renormalize(psi):
    """Divides ``psi`` by its norm unless the norm is below the floor. Returns the norm."""
    total = 0.0
    for i in range(psi.shape[0]):
        total += psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
    norm = np.sqrt(total)
    if norm >= NORM_FLOOR:
        for i in range(psi.shape[0]):
            psi[i] = psi[i] / norm
    return norm


@njit(nogil=True)
def _nbf_propagate(data, indices, indptr, psi, work):
    """``psi <- P psi`` for a CSR matrix ``P``"""
    for i in range(indptr.shape[0] - 1):
        acc = 0j
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * psi[indices[k]]
        work[i] = acc
    psi[:] = work


@njit(nogil=True)
def _nbf_jump(psi, operators, dt, u_jump, u_channel, work):
    """
    Lindblad jump check on the flat ket. A channel fires when ``u_jump < dt * sum <C^dagger C>``; it is chosen with
    ``u_channel`` in proportion to its weight and applied to ``psi`` in place (not renormalised).

    Returns:
        (channel index or -1, jump probability)
    """
    n_channels, d_sys = operators.shape[0], operators.shape[1]
    if n_channels == 0:
        return -1, 0.0
    n_w = psi.shape[0] // d_sys
    weights = np.zeros(n_channels)
    for c in range(n_channels):
        for j in range(n_w):
            for a in range(d_sys):
                acc = 0j
                for b in range(d_sys):
                    acc += operators[c, a, b] * psi[b * n_w + j]
                weights[c] += acc.real * acc.real + acc.imag * acc.imag
    total = weights.sum()
    probability = dt * total
    if u_jump >= probability:
        return -1, probability

    choice = _nbf_pick(weights, u_channel * total)
    for j in range(n_w):
        for a in range(d_sys):
            acc = 0j
            for b in range(d_sys):
                acc += operators[choice, a, b] * psi[b * n_w + j]
            work[a * n_w + j] = acc
    psi[:] = work
    return choice, probability


@njit(nogil=True)
def _nbf_measure(psi, d_sys, sources, targets, offsets, u, work):
    """
    Samples an output-box outcome with the uniform ``u`` and projects ``psi`` onto it in place (not renormalised).

    Returns:
        (outcome index or -1 when the weights are unusable, detection weight, total weight)
    """
    n_w = psi.shape[0] // d_sys
    n_outcomes = offsets.shape[0] - 1
    weights = np.zeros(n_outcomes)
    for o in range(n_outcomes):
        for k in range(offsets[o], offsets[o + 1]):
            weights[o] += _nbf_column_weight(psi, d_sys, n_w, sources[k])
    total = weights.sum()
    detected = total - weights[0]
    if detected > 1.0 + MEASUREMENT_SLACK or total < NORM_FLOOR * NORM_FLOOR:
        return -1, detected, total

    choice = _nbf_pick(weights, u * total)
    work[:] = 0j
    for k in range(offsets[choice], offsets[choice + 1]):
        for a in range(d_sys):
            work[a * n_w + targets[k]] = psi[a * n_w + sources[k]]
    psi[:] = work
    return choice, detected, total


@njit(nogil=True)
def _nbf_shift(psi, d_sys, shift_targets, work):
    """
    Permutes ``psi`` one box along every row. Returns the weight found in the exit boxes; above the floor ``psi`` is
    left untouched.
    """
    n_w = shift_targets.shape[0]
    leaving = 0.0
    for j in range(n_w):
        if shift_targets[j] < 0:
            leaving += _nbf_column_weight(psi, d_sys, n_w, j)
    if leaving > NORM_FLOOR:
        return leaving

    work[:] = 0j
    for j in range(n_w):
        target = shift_targets[j]
        if target >= 0:
            for a in range(d_sys):
                work[a * n_w + target] = psi[a * n_w + j]
    psi[:] = work
    return leaving


@njit(nogil=True)
def _nbf_record(psi, excited, photon_counts, populations, photons, k):
    n_emitters, d_sys = excited.shape
    n_w = photon_counts.shape[0]
    for a in range(d_sys):
        for j in range(n_w):
            x = psi[a * n_w + j]
            w = x.real * x.real + x.imag * x.imag
            for n in range(n_emitters):
                populations[n, k] += excited[n, a] * w
            photons[k] += photon_counts[j] * w


@njit(nogil=True)
def _nbf_trajectory(psi, data, indices, indptr, operators, fine_dt, sources, targets, offsets, shift_targets, excited,
                    photon_counts, uniforms, populations, photons, outcomes, jumps):
    """
    Runs one trajectory on ``psi`` in place. Row ``k - 1`` of ``uniforms`` holds the draws of coarse step ``k``: a
    (jump, channel) pair per fine step followed by the measurement draw. Fills ``populations`` and ``photons`` (zeroed
    on entry), ``outcomes`` (outcome index per coarse step) and ``jumps`` (channel per fine step, -1 for none).

    Returns:
        (status, coarse step, largest jump probability, offending weight); status is ``STATUS_OK`` on success
    """
    d_sys = excited.shape[1]
    n_steps, sub_steps = jumps.shape
    work = np.empty_like(psi)
    max_probability = 0.0
    _nbf_record(psi, excited, photon_counts, populations, photons, 0)
    for k in range(1, n_steps + 1):
        draws = uniforms[k - 1]
        for sub in range(sub_steps):
            channel, probability = _nbf_jump(psi, operators, fine_dt, draws[2 * sub], draws[2 * sub + 1], work)
            max_probability = max(max_probability, probability)
            jumps[k - 1, sub] = channel
            if channel >= 0:
                norm = _nbf_renormalize(psi)
                if norm < NORM_FLOOR:
                    return STATUS_NORM_COLLAPSE, k, max_probability, norm
            _nbf_propagate(data, indices, indptr, psi, work)
            norm = _nbf_renormalize(psi)
            if norm < NORM_FLOOR:
                return STATUS_NORM_COLLAPSE, k, max_probability, norm

        outcome, detected, total = _nbf_measure(psi, d_sys, sources, targets, offsets, draws[2 * sub_steps], work)
        if outcome < 0:
            if detected > 1.0 + MEASUREMENT_SLACK:
                return STATUS_MEASUREMENT, k, max_probability, detected
            return STATUS_NORM_COLLAPSE, k, max_probability, total
        outcomes[k] = outcome
        norm = _nbf_renormalize(psi)
        if norm < NORM_FLOOR:
            return STATUS_NORM_COLLAPSE, k, max_probability, norm

        leaving = _nbf_shift(psi, d_sys, shift_targets, work)
        if leaving > NORM_FLOOR:
            return STATUS_OCCUPIED_OUTPUT, k, max_probability, leaving
        norm = _nbf_renormalize(psi)
        if norm < NORM_FLOOR:
            return STATUS_NORM_COLLAPSE, k, max_probability, norm

        _nbf_record(psi, excited, photon_counts, populations, photons, k)
    return STATUS_OK, n_steps, max_probability, 0.0


def _raise_for_status(status: int, t: float, value: float):
    if status == STATUS_NORM_COLLAPSE:
        raise NormCollapseError("State norm collapsed to %.3e at t = %.6g" % (value, t))
    if status == STATUS_MEASUREMENT:
        raise MeasurementError("Detection probabilities sum to %.12g at t = %.6g" % (value, t))
    if status == STATUS_OCCUPIED_OUTPUT:
        raise OccupiedOutputBoxError("Output boxes must be measured before shifting (t = %.6g)" % t)

# endregion

# region Trajectories


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """Counter-based (Philox) stream for trajectory ``index``; independent of how trajectories are scheduled."""
    seed_sequence = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(seed_sequence))


class SDWState(object):
    """One trajectory's ket, its random stream and clock."""

    def __init__(self, system: SDWSystem, amplitudes: np.ndarray, rng: np.random.Generator, t: float = 0.0):
        assert amplitudes.shape == (system.dimension,), "amplitude vector does not match the system dimension"
        self.system = system
        self.amplitudes = np.ascontiguousarray(amplitudes, dtype=COMPLEX)
        self.rng = rng
        self.t = t
        self.warned = False

    @property
    def matrix(self) -> np.ndarray:
        """View of the ket as (system, waveguide)"""
        return self.amplitudes.reshape(self.system.config.system_dimension, self.system.basis.size)

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def renormalize(self):
        norm = _nbf_renormalize(self.amplitudes)
        if norm < NORM_FLOOR:
            raise NormCollapseError("State norm collapsed to %.3e at t = %.6g" % (norm, self.t))

    def populations(self) -> np.ndarray:
        weights = np.sum(np.abs(self.matrix) ** 2, axis=1)
        return self.system.excited @ weights

    def photons(self) -> float:
        weights = np.sum(np.abs(self.matrix) ** 2, axis=0)
        return float(np.dot(weights, self.system.photon_counts))


def init_sdw_state(system: SDWSystem, rng: np.random.Generator) -> SDWState:
    waveguide_vacuum = np.zeros(system.basis.size, dtype=COMPLEX)
    waveguide_vacuum[0] = 1.0
    amplitudes = np.kron(initial_system_vector(system.config), waveguide_vacuum).astype(COMPLEX)
    return SDWState(system, amplitudes, rng)


def jump_probability(state: SDWState, channels: List[JumpChannel] = None, dt: float = None) -> float:
    """``dt * sum <C^dagger C>`` over the Lindblad channels (default: the system channels and the fine step)"""
    if channels is None:
        channels = state.system.channels
    if dt is None:
        dt = state.system.config.fine_dt
    psi = state.matrix
    return float(dt * sum(np.sum(np.abs(op.operator @ psi) ** 2) for op in channels))


def lindblad_jump_check(state: SDWState, channels: List[JumpChannel] = None,
                        dt: float = None) -> Tuple[SDWState, Optional[str]]:
    """
    Draws whether a Lindblad jump happens in the next ``dt`` (default: the fine step). With probability
    ``P = dt * sum <C^dagger C>`` one channel, chosen in proportion to its ``<C^dagger C>``, is applied and the state
    renormalised. Otherwise the state is left alone; the non-Hermitian propagator supplies the no-jump evolution.

    Returns:
        The state and the label of the channel that fired (``None`` if there was no jump)
    """
    system = state.system
    if channels is None:
        channels, operators = system.channels, system.channel_operators
    else:
        operators = _stack_operators(channels, system.config.system_dimension)
    if dt is None:
        dt = system.config.fine_dt
    if not channels:
        return state, None

    u_jump, u_channel = state.rng.random(2)
    choice, probability = _nbf_jump(state.amplitudes, operators, float(dt), u_jump, u_channel,
                                    np.empty_like(state.amplitudes))
    if probability > JUMP_PROBABILITY_WARNING and not state.warned:
        _logger.warning("Jump probability %.3f per step exceeds %.1f; reduce dt or raise sub_steps", probability,
                        JUMP_PROBABILITY_WARNING)
        state.warned = True
    if choice < 0:
        return state, None
    state.renormalize()
    return state, channels[choice].label


def measure_output_boxes(state: SDWState) -> Tuple[SDWState, Optional[Tuple[float, str]]]:
    """
    Measures the boxes leaving the chain. Outcomes are {none, L, R} (or {none, L} for the single feedback row),
    sampled with one uniform draw in that order; components with more than one occupied exit box are discarded. The
    surviving component has its exit box emptied and is renormalised.

    Returns:
        The state and the emission event ``(t, direction)``, or ``None`` when no photon was detected
    """
    system = state.system
    choice, detected, total = _nbf_measure(state.amplitudes, system.config.system_dimension, system.outcome_sources,
                                           system.outcome_targets, system.outcome_offsets, state.rng.random(),
                                           np.empty_like(state.amplitudes))
    if choice < 0:
        if detected > 1.0 + MEASUREMENT_SLACK:
            raise MeasurementError("Detection probabilities sum to %.12g" % detected)
        raise NormCollapseError("No weight left on any measurement outcome at t = %.6g" % state.t)
    state.renormalize()

    label = system.outcome_labels[choice]
    if label == OUTCOME_NONE:
        return state, None
    return state, (state.t, label)


def shift_boxes(state: SDWState) -> SDWState:
    """
    Moves every photon one box along its row (``R``: n -> n-1, ``L``: n -> n+1); fresh vacuum boxes enter at the other
    end. A pure permutation of amplitudes.

    Raises:
        OccupiedOutputBoxError: if an exit box still holds amplitude
    """
    leaving = _nbf_shift(state.amplitudes, state.system.config.system_dimension, state.system.shift_targets,
                         np.empty_like(state.amplitudes))
    if leaving > NORM_FLOOR:
        raise OccupiedOutputBoxError("Output boxes must be measured before shifting (t = %.6g)" % state.t)
    return state


class Trajectory(NamedTuple):
    times: np.ndarray
    populations: np.ndarray  # (emitters, times)
    photons: np.ndarray
    emitted: np.ndarray
    emissions: List[Tuple[float, str]]
    jumps: List[Tuple[float, str]]


def run_trajectory(config: SchemeConfig, geometry: DelayGeometry = None, seed: int = 0, stream: int = 0,
                   system: SDWSystem = None) -> Trajectory:
    """
    One quantum trajectory. Per coarse step: ``sub_steps`` fine steps of (jump check, propagator, renormalise);
    measurement of the output boxes; box shift; renormalise. Observables are recorded at ``t = 0`` and after every
    coarse step. The uniforms of the whole trajectory are drawn up front and the loop runs in a nogil kernel.

    Args:
        config: The run configuration
        geometry: Its delay geometry; validated from ``config`` if omitted
        seed: Master seed
        stream: Trajectory index; the random stream is derived from ``(seed, stream)``
        system: A prebuilt ``SDWSystem`` to share between trajectories

    Raises:
        NormCollapseError: if the ket norm falls below 1e-12
    """
    if system is None:
        system = build_system(config, geometry)
    config = system.config
    n_steps, sub_steps = config.n_steps, int(config.sub_steps)
    state = init_sdw_state(system, trajectory_rng(seed, stream))
    uniforms = state.rng.random([n_steps, 2 * sub_steps + 1])

    populations = np.zeros([config.n_emitters, n_steps + 1])
    photons = np.zeros(n_steps + 1)
    outcomes = np.zeros(n_steps + 1, dtype=np.int64)
    jump_channels = np.full([n_steps, sub_steps], -1, dtype=np.int64)
    propagator = system.propagator
    status, step, max_probability, value = _nbf_trajectory(
        state.amplitudes, propagator.data, propagator.indices, propagator.indptr, system.channel_operators,
        float(config.fine_dt), system.outcome_sources, system.outcome_targets, system.outcome_offsets,
        system.shift_targets, system.excited, system.photon_counts, uniforms, populations, photons, outcomes,
        jump_channels
    )
    if max_probability > JUMP_PROBABILITY_WARNING:
        _logger.warning("Jump probability %.3f per step exceeds %.1f; reduce dt or raise sub_steps", max_probability,
                        JUMP_PROBABILITY_WARNING)
    _raise_for_status(status, step * config.dt, value)

    times = np.arange(n_steps + 1) * config.dt
    detected = outcomes > 0
    emissions = [(float(k * config.dt), system.outcome_labels[outcomes[k]]) for k in np.flatnonzero(detected)]
    emitted = np.cumsum(detected).astype(float)
    jumps = [
        (float(row * config.dt + sub * config.fine_dt), system.channels[jump_channels[row, sub]].label)
        for row, sub in zip(*np.nonzero(jump_channels >= 0))
    ]
    return Trajectory(times, populations, photons, emitted, emissions, jumps)

# endregion

# region Ensembles


class EnsembleResult(NamedTuple):
    """
    ``table`` has ``t`` plus, for each observable, its mean and standard error (``<name>_se``). ``emissions`` lists
    every detection as (trajectory, t, direction). ``trajectories`` holds the population traces of the first
    ``keep_trajectories`` trajectories, one column per (trajectory, TLS).
    """
    table: pd.DataFrame
    n_trajectories: int
    emissions: pd.DataFrame
    n_jumps: int
    trajectories: pd.DataFrame


def _trajectory_worker(system, master_seed, start, stop, results, errors):
    try:
        for i in range(start, stop):
            results[i] = run_trajectory(system.config, system.geometry, master_seed, i, system)
    except Exception as err:
        errors.append(err)


def ensemble_average(config: SchemeConfig, n_trajectories: int, master_seed: int = 0, workers: int = 1,
                     geometry: DelayGeometry = None, keep_trajectories: int = 0,
                     system: SDWSystem = None) -> EnsembleResult:
    """
    Averages ``n_trajectories`` trajectories over a pool of worker threads. Trajectory ``i`` always uses the random
    stream ``(master_seed, i)`` and results are reduced in trajectory order, so the output does not depend on
    ``workers``.
    """
    assert n_trajectories >= 1, "at least one trajectory is required"
    if system is None:
        system = build_system(config, geometry)
    config = system.config
    workers = max(1, int(workers))

    _logger.tip("SDW ensemble: %d trajectories on %d worker(s)", n_trajectories, workers)
    results = [None] * n_trajectories
    errors = []
    threads = [
        Thread(target=_trajectory_worker, args=[system, master_seed, start, stop, results, errors])
        for start, stop in get_breaks(n_trajectories, workers)
    ]
    for t in threads: t.start()
    for t in threads: t.join()
    if errors:
        raise errors[0]

    times = results[0].times
    columns = {'t': times}
    stacked = np.stack([r.populations for r in results])  # (trajectories, emitters, times)
    series = {'population_%d' % (n + 1): stacked[:, n, :] for n in range(config.n_emitters)}
    series['photons'] = np.stack([r.photons for r in results])
    series['emitted'] = np.stack([r.emitted for r in results])
    for name, values in series.items():
        columns[name] = values.mean(axis=0)
        if n_trajectories > 1:
            columns[name + '_se'] = values.std(axis=0, ddof=1) / np.sqrt(n_trajectories)
        else:
            columns[name + '_se'] = np.zeros_like(times)

    emission_rows = [(i, t, direction) for i, r in enumerate(results) for t, direction in r.emissions]
    emissions = pd.DataFrame(emission_rows, columns=['trajectory', 't', 'direction'])
    n_jumps = sum(len(r.jumps) for r in results)

    kept = {'t': times}
    for i in range(min(keep_trajectories, n_trajectories)):
        for n in range(config.n_emitters):
            kept['trajectory_%d_population_%d' % (i, n + 1)] = results[i].populations[n]

    _logger.report("SDW ensemble finished: %d detections, %d Lindblad jumps", len(emissions), n_jumps)
    return EnsembleResult(pd.DataFrame(columns), n_trajectories, emissions, n_jumps, pd.DataFrame(kept))

# endregion
