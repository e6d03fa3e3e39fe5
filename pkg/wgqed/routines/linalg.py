"""
Dense and sparse complex linear algebra shared by the MPS and SDW engines.

All arrays are ``complex128`` and stored in row-major (C) order. Every reshape in the package is defined against that
order: a pair of physical indices ``(i, j)`` with dimensions ``(d_i, d_j)`` merges to ``i * d_j + j``.
"""
from typing import List, NamedTuple, Sequence

import numpy as _np
import scipy.linalg as _sla
import scipy.sparse as _sp

COMPLEX = _np.complex128

SIGMA_PLUS = _np.array([[0, 0], [1, 0]], dtype=COMPLEX)
SIGMA_MINUS = _np.array([[0, 1], [0, 0]], dtype=COMPLEX)
SIGMA_X = SIGMA_PLUS + SIGMA_MINUS
SIGMA_Z = _np.array([[-1, 0], [0, 1]], dtype=COMPLEX)

_EINSUM_LETTERS = 'abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ'


class DegenerateMatrixError(ValueError):
    pass


class ContractionError(ValueError):
    pass


class NonSquareMatrixError(ValueError):
    pass


class SVDResult(NamedTuple):
    U: _np.ndarray
    s: _np.ndarray
    Vh: _np.ndarray
    discarded_weight: float

    @property
    def rank(self) -> int:
        return len(self.s)


def noise_increment(dt: float) -> _np.ndarray:
    """Time-bin annihilation increment for a bin holding at most one photon: ``[[0, sqrt(dt)], [0, 0]]``"""
    return _np.array([[0, _np.sqrt(dt)], [0, 0]], dtype=COMPLEX)


def svd_truncate(m: _np.ndarray, max_rank: int, rel_tol: float = 0.0) -> SVDResult:
    """
    Singular value decomposition keeping at most ``max_rank`` values, and only those with ``s_i / s_0 > rel_tol``.

    The retained singular values are NOT rescaled; renormalising is the caller's job.

    Args:
        m (numpy.ndarray): A 2D matrix
        max_rank (int): Maximum number of singular values to keep. Must be at least 1
        rel_tol (float): Relative floor on the singular values, in [0, 1)

    Returns:
        SVDResult: ``U`` (rows x r), ``s`` (r, descending), ``Vh`` (r x cols) and the discarded weight, the sum of
        squared singular values that were dropped.

    Raises:
        DegenerateMatrixError: if ``m`` is identically zero
    """
    assert m.ndim == 2, "`m` must be a two-dimensional matrix"
    assert max_rank >= 1, "max_rank must be at least 1"
    assert 0.0 <= rel_tol < 1.0, "rel_tol must lie in [0, 1)"

    m = _np.asarray(m, dtype=COMPLEX)
    if not _np.any(m):
        raise DegenerateMatrixError("Cannot decompose an all-zero %d x %d matrix" % m.shape)

    try:
        u, s, vh = _sla.svd(m, full_matrices=False, lapack_driver='gesdd', check_finite=False)
    except _np.linalg.LinAlgError:
        # gesdd occasionally fails to converge on nearly-degenerate spectra
        u, s, vh = _sla.svd(m, full_matrices=False, lapack_driver='gesvd', check_finite=False)

    n_kept = int(_np.count_nonzero(s / s[0] > rel_tol))
    n_kept = max(1, min(max_rank, n_kept))

    discarded = float(_np.sum(s[n_kept:] ** 2))
    return SVDResult(u[:, :n_kept], s[:n_kept], vh[:n_kept, :], discarded)


def kron(a: _np.ndarray, b: _np.ndarray, *others: _np.ndarray) -> _np.ndarray:
    """Kronecker product of two or more matrices, left to right."""
    result = _np.kron(_np.asarray(a, dtype=COMPLEX), _np.asarray(b, dtype=COMPLEX))
    for item in others:
        result = _np.kron(result, _np.asarray(item, dtype=COMPLEX))
    return result


def matexp(m: _np.ndarray) -> _np.ndarray:
    """
    Matrix exponential by scaling-and-squaring with a Pade approximant (``scipy.linalg.expm``).

    Raises:
        NonSquareMatrixError: if ``m`` is not square
    """
    m = _np.asarray(m, dtype=COMPLEX)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NonSquareMatrixError("Cannot exponentiate a matrix of shape %s" % (m.shape,))
    return _sla.expm(m)


def sparse_matexp(m: _sp.spmatrix, dense_limit: int = 4096, threshold: float = 1e-14) -> _sp.csr_matrix:
    """
    Exponentiates a sparse square matrix and returns it in CSR format with entries below ``threshold`` (in absolute
    value) removed. Matrices up to ``dense_limit`` rows are exponentiated densely; larger ones use the sparse Pade
    routine, which stays sparse as long as the coupling graph is local.
    """
    n_rows, n_cols = m.shape
    if n_rows != n_cols:
        raise NonSquareMatrixError("Cannot exponentiate a matrix of shape %s" % (m.shape,))

    if n_rows <= dense_limit:
        dense = matexp(m.toarray())
        dense[_np.abs(dense) < threshold] = 0
        return _sp.csr_matrix(dense)

    from scipy.sparse.linalg import expm as _sparse_expm
    result = _sp.csr_matrix(_sparse_expm(_sp.csc_matrix(m, dtype=COMPLEX)))
    result.data[_np.abs(result.data) < threshold] = 0
    result.eliminate_zeros()
    return result


def swap_matrix(d1: int, d2: int) -> _np.ndarray:
    """
    Permutation mapping ``|i>|j>`` (dims ``d1``, ``d2``) onto ``|j>|i>``. For ``d1 == d2 == 2`` this is the familiar 4x4
    swap; two-TLS time bins use the 16x16 version.
    """
    v = _np.zeros([d1 * d2, d1 * d2], dtype=COMPLEX)
    for i in range(d1):
        for j in range(d2):
            v[j * d1 + i, i * d2 + j] = 1.0
    return v


def contract(tensors: Sequence[_np.ndarray], network: Sequence[Sequence[int]]) -> _np.ndarray:
    """
    Contracts a tensor network given in "ncon" notation.

    Each tensor gets a list of integer labels, one per axis. Positive labels name bonds and must appear exactly twice
    across the network (summed over). Negative labels are open indices; the result carries them ordered -1, -2, ...

    Args:
        tensors: The tensors to contract
        network: One label list per tensor

    Returns:
        numpy.ndarray: The contracted tensor (0-dimensional if no open indices remain)

    Raises:
        ContractionError: if the labelling is inconsistent or a bond joins axes of different dimensions
    """
    if len(tensors) != len(network):
        raise ContractionError("Got %d tensors but %d label lists" % (len(tensors), len(network)))

    dims = {}
    counts = {}
    for position, (tensor, labels) in enumerate(zip(tensors, network)):
        if _np.ndim(tensor) != len(labels):
            raise ContractionError("Tensor %d has %d axes but %d labels" % (position, _np.ndim(tensor), len(labels)))
        for axis, label in enumerate(labels):
            if label == 0:
                raise ContractionError("Label 0 is not allowed")
            size = _np.shape(tensor)[axis]
            if label in dims and dims[label] != size:
                raise ContractionError("Dimension mismatch on label %d: %d vs %d" % (label, dims[label], size))
            dims[label] = size
            counts[label] = counts.get(label, 0) + 1

    for label, count in counts.items():
        if label > 0 and count != 2:
            raise ContractionError("Bond label %d appears %d times; bonds must appear exactly twice" % (label, count))
        if label < 0 and count != 1:
            raise ContractionError("Open label %d appears %d times" % (label, count))

    if len(dims) > len(_EINSUM_LETTERS):
        raise ContractionError("Too many distinct labels (%d)" % len(dims))

    letters = {label: _EINSUM_LETTERS[i] for i, label in enumerate(sorted(dims))}
    inputs = [''.join(letters[label] for label in labels) for labels in network]
    open_labels = sorted((label for label in dims if label < 0), reverse=True)
    output = ''.join(letters[label] for label in open_labels)

    subscripts = ','.join(inputs) + '->' + output
    return _np.einsum(subscripts, *tensors, optimize=len(tensors) > 2)


def is_unitary(u: _np.ndarray, tol: float = 1e-10) -> bool:
    n = u.shape[0]
    return bool(_np.linalg.norm(u.conj().T @ u - _np.eye(n), ord='fro') <= tol)


def operator_on(op: _np.ndarray, position: int, dims: List[int]) -> _np.ndarray:
    """Embeds a single-factor operator at ``position`` of a tensor product space with factor dimensions ``dims``."""
    factors = [_np.eye(d, dtype=COMPLEX) for d in dims]
    assert op.shape == (dims[position], dims[position]), "operator does not match the factor dimension"
    factors[position] = op
    result = factors[0]
    for factor in factors[1:]:
        result = _np.kron(result, factor)
    return result
