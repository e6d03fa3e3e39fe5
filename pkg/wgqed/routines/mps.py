"""
Time-bin matrix product state engine.

The chain holds the system bin (one TLS, or the joint TLS1 x TLS2 bin) among the waveguide time bins. Each coarse step
the system interacts with the next fresh time bin and, with a delay, with the bin it emitted into ``l`` steps earlier.
That feedback bin is carried next to the system by swap gates, the step gate is applied to the three adjacent bins,
and the swaps are undone. Site tensors are ``(left, physical, right)``; the state is kept in mixed-canonical form
around the orthogonality centre (OC) and renormalised after every truncating SVD.
"""
from typing import Iterable, List, NamedTuple, Optional

import numpy as np
import pandas as pd
import scipy.linalg as sla

from ..logging import get_model_logger
from .linalg import (COMPLEX, SIGMA_PLUS, contract, kron, matexp, noise_increment, svd_truncate,
                     swap_matrix)
from .schemes import (DelayGeometry, Scheme, SchemeConfig, default_chi_max, initial_system_vector, require_lossless,
                      system_hamiltonian, validate)

SYSTEM = 'system'
TIME_BIN = 'time-bin'
FEEDBACK_BIN = 'feedback-bin'

DEFAULT_REL_TOL = 1e-12
DISCARDED_WEIGHT_WARNING = 1e-6

_logger = get_model_logger(__name__)


class EvolutionGate(NamedTuple):
    """Step propagator ``exp(-i H_step)`` on ``len(dims)`` adjacent sites, ordered as they sit in the chain"""
    dims: tuple
    matrix: np.ndarray

    @property
    def n_sites(self) -> int:
        return len(self.dims)


class MPSState(object):
    """
    Mixed-canonical MPS. ``labels`` tags each site as the system, a time bin, or the (single) feedback bin that the
    system meets on the next delayed step. ``discarded_weight`` accumulates the relative weight dropped by truncation.
    """

    def __init__(self, tensors: List[np.ndarray], labels: List[str], oc: int, chi_max: int,
                 rel_tol: float = DEFAULT_REL_TOL):
        assert len(tensors) == len(labels), "one label per site"
        assert 0 <= oc < len(tensors), "OC out of range"
        self.tensors = tensors
        self.labels = labels
        self.oc = oc
        self.chi_max = int(chi_max)
        self.rel_tol = float(rel_tol)
        self.discarded_weight = 0.0

    def __len__(self): return len(self.tensors)

    @property
    def bond_dimensions(self) -> List[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    @property
    def system_site(self) -> int:
        return self.labels.index(SYSTEM)

    @property
    def feedback_site(self) -> Optional[int]:
        return self.labels.index(FEEDBACK_BIN) if FEEDBACK_BIN in self.labels else None

    def copy(self) -> 'MPSState':
        other = MPSState([t.copy() for t in self.tensors], list(self.labels), self.oc, self.chi_max, self.rel_tol)
        other.discarded_weight = self.discarded_weight
        return other

    def norm(self) -> float:
        """<psi|psi>, read off the OC tensor"""
        return float(np.vdot(self.tensors[self.oc], self.tensors[self.oc]).real)

    # region Gauge moves

    def move_oc(self, target: int):
        """Moves the OC to ``target`` with QR decompositions; the state itself is unchanged."""
        assert 0 <= target < len(self), "OC target out of range"
        while self.oc < target:
            a = self.tensors[self.oc]
            dl, d, dr = a.shape
            q, r = sla.qr(a.reshape(dl * d, dr), mode='economic')
            self.tensors[self.oc] = q.reshape(dl, d, q.shape[1])
            self.tensors[self.oc + 1] = contract([r, self.tensors[self.oc + 1]], [[-1, 1], [1, -2, -3]])
            self.oc += 1
        while self.oc > target:
            b = self.tensors[self.oc]
            dl, d, dr = b.shape
            q, r = sla.qr(b.reshape(dl, d * dr).T, mode='economic')
            self.tensors[self.oc] = q.T.reshape(q.shape[1], d, dr)
            self.tensors[self.oc - 1] = contract([self.tensors[self.oc - 1], r.T], [[-1, -2, 1], [1, -3]])
            self.oc -= 1

    # endregion

    # region Local updates

    def _split(self, theta: np.ndarray, site: int, oc_right: bool):
        """Splits a ``(left, d1, d2, right)`` block back into sites ``site`` and ``site + 1``."""
        dl, d1, d2, dr = theta.shape
        result = svd_truncate(theta.reshape(dl * d1, d2 * dr), self.chi_max, self.rel_tol)
        kept = float(np.sum(result.s ** 2))
        self.discarded_weight += result.discarded_weight / (kept + result.discarded_weight)
        s = result.s / np.sqrt(kept)

        rank = result.rank
        if oc_right:
            left = result.U
            right = s[:, np.newaxis] * result.Vh
        else:
            left = result.U * s[np.newaxis, :]
            right = result.Vh
        self.tensors[site] = left.reshape(dl, d1, rank)
        self.tensors[site + 1] = right.reshape(rank, d2, dr)
        self.oc = site + 1 if oc_right else site

    def _block(self, site: int, n_sites: int) -> np.ndarray:
        assert site <= self.oc < site + n_sites, "the OC must lie inside the updated block"
        if n_sites == 2:
            return contract(self.tensors[site:site + 2], [[-1, -2, 1], [1, -3, -4]])
        return contract(self.tensors[site:site + 3], [[-1, -2, 1], [1, -3, 2], [2, -4, -5]])

    @staticmethod
    def _apply_matrix(theta: np.ndarray, matrix: np.ndarray, out_dims) -> np.ndarray:
        dl, dr = theta.shape[0], theta.shape[-1]
        grouped = theta.reshape(dl, -1, dr)
        updated = contract([matrix, grouped], [[-2, 1], [-1, 1, -3]])
        return updated.reshape((dl,) + tuple(out_dims) + (dr,))

    def apply_two_site(self, site: int, matrix: np.ndarray, oc_right: bool):
        theta = self._block(site, 2)
        theta = self._apply_matrix(theta, matrix, theta.shape[1:3])
        self._split(theta, site, oc_right)

    def swap(self, site: int, oc_right: bool):
        """Exchanges sites ``site`` and ``site + 1`` (physical content and labels) with the swap permutation."""
        theta = self._block(site, 2)
        d1, d2 = theta.shape[1:3]
        theta = self._apply_matrix(theta, swap_matrix(d1, d2), (d2, d1))
        self._split(theta, site, oc_right)
        self.labels[site], self.labels[site + 1] = self.labels[site + 1], self.labels[site]

    def apply_three_site(self, site: int, matrix: np.ndarray):
        """Applies a gate on sites ``site .. site + 2`` and restores three sites; the OC ends on the middle one."""
        theta = self._block(site, 3)
        dl, d1, d2, d3, dr = theta.shape
        theta = self._apply_matrix(theta, matrix, (d1, d2, d3))

        first = svd_truncate(theta.reshape(dl * d1, d2 * d3 * dr), self.chi_max, self.rel_tol)
        kept = float(np.sum(first.s ** 2))
        self.discarded_weight += first.discarded_weight / (kept + first.discarded_weight)
        s = first.s / np.sqrt(kept)
        self.tensors[site] = first.U.reshape(dl, d1, first.rank)
        rest = (s[:, np.newaxis] * first.Vh).reshape(first.rank, d2, d3, dr)
        self.oc = site + 1
        self._split(rest, site + 1, oc_right=False)

    # endregion

    def canonical_residual(self) -> float:
        """Largest deviation from the isometry condition over all non-OC sites (0 for an exact canonical form)."""
        worst = 0.0
        for j, t in enumerate(self.tensors):
            dl, d, dr = t.shape
            if j < self.oc:
                m = t.reshape(dl * d, dr)
                worst = max(worst, float(np.max(np.abs(m.conj().T @ m - np.eye(dr)))))
            elif j > self.oc:
                m = t.reshape(dl, d * dr)
                worst = max(worst, float(np.max(np.abs(m @ m.conj().T - np.eye(dl)))))
        return worst


def _site_dims(config: SchemeConfig):
    """(system dimension, time-bin dimension)"""
    if config.scheme is Scheme.TWO_TLS:
        return 4, 4
    return 2, 2


def init_state(config: SchemeConfig, geometry: DelayGeometry, chi_max: int = None,
               rel_tol: float = DEFAULT_REL_TOL) -> MPSState:
    """
    Product state: ``l`` vacuum delay bins (the first labelled as the feedback bin), the system bin in its initial
    state, then one vacuum time bin per step. All bonds have dimension 1 and the OC sits on the system.
    """
    if chi_max is None:
        chi_max = default_chi_max(config)
    d_sys, d_bin = _site_dims(config)
    vacuum = np.zeros(d_bin, dtype=COMPLEX)
    vacuum[0] = 1.0

    labels = [TIME_BIN] * geometry.l + [SYSTEM] + [TIME_BIN] * config.n_steps
    if geometry.l > 0:
        labels[0] = FEEDBACK_BIN
    tensors = []
    for label in labels:
        vector = initial_system_vector(config) if label == SYSTEM else vacuum
        tensors.append(vector.reshape(1, -1, 1).copy())
    return MPSState(tensors, labels, geometry.l, chi_max, rel_tol)


def build_gate(config: SchemeConfig, geometry: DelayGeometry = None, scheme: Scheme = None) -> EvolutionGate:
    """
    Exponentiates the step Hamiltonian (already multiplied by ``dt``) for the scheme.

    - infinite waveguide: system x time bin, one collective bin coupled with ``sqrt(gamma_L + gamma_R)``
    - feedback: feedback bin x system x time bin; the returning field carries ``exp(-i phi)``
    - two TLSs: delayed bin x joint system x current bin, bins ``L x R``

    Raises:
        SchemeValidationError: for off-chip decay or dephasing, which only the SDW engine models
    """
    scheme = Scheme.parse(scheme if scheme is not None else config.scheme)
    require_lossless(config)
    if geometry is None:
        geometry = validate(config)
    dt = config.dt
    h_sys = system_hamiltonian(config) * dt
    db = noise_increment(dt)
    i2 = np.eye(2, dtype=COMPLEX)

    if scheme is Scheme.INFINITE_WAVEGUIDE:
        coupling = np.sqrt(config.gamma_l + config.gamma_r) * kron(SIGMA_PLUS, db)
        h_step = kron(h_sys, i2) + coupling + coupling.conj().T
        dims = (2, 2)

    elif scheme is Scheme.FEEDBACK:
        phase = np.exp(-1j * config.phi)
        coupling = (np.sqrt(config.gamma_l) * phase * kron(db, SIGMA_PLUS, i2) +
                    np.sqrt(config.gamma_r) * kron(i2, SIGMA_PLUS, db))
        h_step = kron(i2, h_sys, i2) + coupling + coupling.conj().T
        dims = (2, 2, 2)

    else:
        phase = np.exp(1j * config.phi)
        i4 = np.eye(4, dtype=COMPLEX)
        db_l, db_r = kron(db, i2), kron(i2, db)
        s1, s2 = kron(SIGMA_PLUS, i2), kron(i2, SIGMA_PLUS)
        coupling = (np.sqrt(config.gamma_l) * kron(i4, s1, db_l) +
                    np.sqrt(config.gamma_r) * phase * kron(db_r, s1, i4) +
                    np.sqrt(config.gamma_l2) * phase * kron(db_l, s2, i4) +
                    np.sqrt(config.gamma_r2) * kron(i4, s2, db_r))
        h_step = kron(i4, h_sys, i4) + coupling + coupling.conj().T
        dims = (4, 4, 4)

    return EvolutionGate(dims, matexp(-1j * h_step))


def step_no_feedback(state: MPSState, gate: EvolutionGate) -> MPSState:
    """Applies the 2-site gate to the system and the next time bin, then swaps them. The OC stays on the system."""
    assert gate.n_sites == 2, "a 2-site gate is required"
    p = state.system_site
    if state.oc != p:
        state.move_oc(p)
    state.apply_two_site(p, gate.matrix, oc_right=False)
    state.swap(p, oc_right=True)
    return state


def _step_delayed(state: MPSState, gate: EvolutionGate) -> MPSState:
    f = state.feedback_site
    p = state.system_site
    assert f is not None and f < p, "no feedback bin to the left of the system"

    state.move_oc(f)
    for j in range(f, p - 1):
        state.swap(j, oc_right=True)

    state.apply_three_site(p - 1, gate.matrix)
    state.swap(p, oc_right=True)

    state.move_oc(p - 1)
    for j in range(p - 2, f - 1, -1):
        state.swap(j, oc_right=False)

    state.labels[f] = TIME_BIN
    state.labels[f + 1] = FEEDBACK_BIN
    return state


def step_feedback(state: MPSState, gate: EvolutionGate) -> MPSState:
    """
    One delayed step: the feedback bin is swapped next to the system (``l - 1`` swaps, OC carried along), the 3-site
    gate acts on feedback bin, system and fresh time bin, the system moves past its time bin, and the feedback bin is
    swapped home. The following bin becomes the feedback bin. The OC is left on the feedback bin.
    """
    assert gate.dims == (2, 2, 2), "feedback steps need the 8x8 gate"
    return _step_delayed(state, gate)


def step_two_tls(state: MPSState, gate: EvolutionGate) -> MPSState:
    """As ``step_feedback`` with 4-dimensional bins and the 64x64 two-emitter gate."""
    assert gate.dims == (4, 4, 4), "two-TLS steps need the 64x64 gate"
    return _step_delayed(state, gate)


def reduced_system_matrix(state: MPSState) -> np.ndarray:
    """Density matrix of the system bin. Moves the OC onto the system if it is elsewhere."""
    p = state.system_site
    if state.oc != p:
        state.move_oc(p)
    a = state.tensors[p]
    rho = contract([a, a.conj()], [[1, -1, 2], [1, -2, 2]])
    return rho / np.trace(rho).real


def population(state: MPSState, which_tls: int = 0) -> float:
    """``<sigma+ sigma->`` of TLS ``which_tls`` (0-based); for two TLSs the partner is traced out."""
    rho = reduced_system_matrix(state)
    d = rho.shape[0]
    n_emitters = int(np.log2(d))
    assert 0 <= which_tls < n_emitters, "no TLS %d in a %d-dimensional system bin" % (which_tls, d)
    shift = n_emitters - 1 - which_tls
    excited = np.array([(i >> shift) & 1 for i in range(d)], dtype=bool)
    return float(np.clip(np.real(np.diag(rho))[excited].sum(), 0.0, 1.0))


def entanglement_entropy(state: MPSState) -> float:
    """
    von Neumann entropy (base 2) between the system bin and the rest of the chain, from the Schmidt coefficients of
    the OC tensor with the physical index split off.
    """
    p = state.system_site
    if state.oc != p:
        state.move_oc(p)
    a = state.tensors[p]
    dl, d, dr = a.shape
    schmidt = svd_truncate(a.transpose(1, 0, 2).reshape(d, dl * dr), d, 0.0).s
    weights = schmidt ** 2
    weights = weights[weights > 0] / np.sum(weights)
    return float(max(0.0, -np.sum(weights * np.log2(weights))))


def photon_number(state: MPSState) -> float:
    """Total photon expectation over all waveguide bins. Works on a copy, sweeping the OC across the chain."""
    sweep = state.copy()
    sweep.move_oc(0)
    total = 0.0
    for j, label in enumerate(sweep.labels):
        if j > 0:
            sweep.move_oc(j)
        if label == SYSTEM:
            continue
        a = sweep.tensors[j]
        d = a.shape[1]
        counts = np.array([bin(i).count('1') for i in range(d)], dtype=float)
        weights = np.sum(np.abs(a) ** 2, axis=(0, 2))
        total += float(np.dot(weights, counts))
    return total


class MPSRun(NamedTuple):
    table: pd.DataFrame
    discarded_weight: float
    max_bond: int


def run_mps(config: SchemeConfig, geometry: DelayGeometry = None, chi_max: int = None,
            rel_tol: float = DEFAULT_REL_TOL, observables: Iterable[str] = ('population',),
            entropy_every: int = 1) -> MPSRun:
    """
    Runs the MPS engine from ``t = 0`` to ``t_max``.

    Args:
        config: The run configuration
        geometry: Its delay geometry; validated from ``config`` if omitted
        chi_max: Bond-dimension cap. Defaults to the regime default (``schemes.default_chi_max``)
        rel_tol: Relative singular-value floor for every SVD
        observables: Any of ``population`` and ``entropy``
        entropy_every: Entropy cadence in steps; other rows carry NaN

    Returns:
        MPSRun: Table with ``t``, ``population_<n>`` per TLS and optionally ``entropy``; the cumulative discarded
        weight; and the largest bond dimension reached.
    """
    require_lossless(config)
    if geometry is None:
        geometry = validate(config)
    observables = set(observables)
    if chi_max is None:
        chi_max = default_chi_max(config)

    _logger.tip("MPS: %s scheme, %d steps, l = %d, chi_max = %d", config.scheme.value, config.n_steps, geometry.l,
                chi_max)
    state = init_state(config, geometry, chi_max, rel_tol)
    gate = build_gate(config, geometry)
    if config.scheme is Scheme.INFINITE_WAVEGUIDE:
        step = step_no_feedback
    elif config.scheme is Scheme.FEEDBACK:
        step = step_feedback
    else:
        step = step_two_tls

    n_steps = config.n_steps
    n_emitters = config.n_emitters
    columns = {'t': np.arange(n_steps + 1) * config.dt}
    populations = np.zeros([n_emitters, n_steps + 1])
    entropy = np.full(n_steps + 1, np.nan)
    max_bond = 1

    def record(k):
        if 'population' in observables:
            for n in range(n_emitters):
                populations[n, k] = population(state, n)
        if 'entropy' in observables and k % entropy_every == 0:
            entropy[k] = entanglement_entropy(state)

    record(0)
    for k in range(1, n_steps + 1):
        step(state, gate)
        record(k)
        max_bond = max(max_bond, max(state.bond_dimensions or [1]))

    if 'population' in observables:
        for n in range(n_emitters):
            columns['population_%d' % (n + 1)] = populations[n]
    if 'entropy' in observables:
        columns['entropy'] = entropy

    _logger.report("MPS finished: discarded weight %.3e, largest bond %d", state.discarded_weight, max_bond)
    if state.discarded_weight > DISCARDED_WEIGHT_WARNING:
        _logger.warning("Cumulative discarded weight %.3e exceeds %.0e; consider raising chi_max",
                        state.discarded_weight, DISCARDED_WEIGHT_WARNING)
    return MPSRun(pd.DataFrame(columns), state.discarded_weight, max_bond)
