"""Weyl operator algebra on chains of q-state qudits.

The single-site shift S and weight W operators generalize the Pauli X and Z
to local dimension q >= 2:

    S |k> = |k+1 mod q>        W |k> = omega^k |k>,   omega = exp(2*pi*i/q)

and obey W S = omega S W.  Products S^m W^n form an orthonormal basis of
operator space under the Frobenius inner product <A|B> = tr(A^dag B)/D.
Many-body basis operators carry one (m_j, n_j) pair per site.  This module
provides the dense matrices, the basis bookkeeping (WeylIndex), sparse
coefficient vectors (OperatorVector), decomposition/reconstruction, and the
normalized projectors used by the transition-matrix engine.
"""

from dataclasses import dataclass, field
from itertools import product

import numpy as np

__all__ = [
    "WeylIndex", "DenseOperator", "OperatorVector",
    "shift_matrix", "weight_matrix", "weyl_matrix", "weyl_string",
    "weyl_product", "op_inner", "decompose", "reconstruct",
    "z_projector", "x_projector", "shift_eigenstate",
    "naive_op", "naive_x_op", "all_indices",
]

PRUNE_DEFAULT = 1e-14


class DimensionError(ValueError):
    """Local dimension or matrix shape is invalid."""


class IncompatibleOperands(ValueError):
    """Operands live on different qudit spaces."""


def _check_q(q):
    if q < 2:
        raise DimensionError(f"local dimension must be >= 2, got {q}")


def omega(q):
    """Primitive q-th root of unity."""
    return np.exp(2j * np.pi / q)


def phase(q, k):
    """omega^k for integer k (exact-period reduction before exponentiating)."""
    return np.exp(2j * np.pi * (k % q) / q)


def shift_matrix(q):
    """Dense shift operator S, the q-state extension of Pauli X."""
    _check_q(q)
    s = np.zeros((q, q), dtype=complex)
    for k in range(q):
        s[(k + 1) % q, k] = 1.0
    return s


def weight_matrix(q):
    """Dense weight operator W = diag(omega^k), the extension of Pauli Z."""
    _check_q(q)
    return np.diag(np.exp(2j * np.pi * np.arange(q) / q))


def weyl_matrix(q, m, n):
    """Dense single-site basis operator S^m W^n.

    Unitary for every (m, n); traceless unless m = n = 0 mod q.
    """
    _check_q(q)
    m, n = m % q, n % q
    out = np.zeros((q, q), dtype=complex)
    cols = np.arange(q)
    out[(cols + m) % q, cols] = np.exp(2j * np.pi * n * cols / q)
    return out


def weyl_string(q, ms, ns):
    """Dense tensor product of S^m W^n over sites, in site order."""
    out = np.ones((1, 1), dtype=complex)
    for m, n in zip(ms, ns):
        out = np.kron(out, weyl_matrix(q, m, n))
    return out


@dataclass(frozen=True)
class WeylIndex:
    """Label (m, n) of a many-body Weyl basis operator, entries mod q.

    `sites` is the ordered tuple of site labels the entries refer to; the
    all-zero index is the identity.
    """
    m: tuple
    n: tuple
    q: int
    sites: tuple

    def __post_init__(self):
        _check_q(self.q)
        if len(self.m) != len(self.n) or len(self.m) != len(self.sites):
            raise DimensionError("m, n, sites must have equal length")
        object.__setattr__(self, "m", tuple(v % self.q for v in self.m))
        object.__setattr__(self, "n", tuple(v % self.q for v in self.n))
        object.__setattr__(self, "sites", tuple(self.sites))

    @classmethod
    def identity(cls, q, sites):
        z = (0,) * len(sites)
        return cls(z, z, q, tuple(sites))

    @property
    def is_identity(self):
        return not any(self.m) and not any(self.n)

    def restrict(self, sites):
        """Sub-index on the given sites (must be present)."""
        pos = [self.sites.index(s) for s in sites]
        return tuple(self.m[p] for p in pos), tuple(self.n[p] for p in pos)

    def replace(self, sites, m_new, n_new):
        """New index with entries on `sites` overwritten."""
        m, n = list(self.m), list(self.n)
        for s, mm, nn in zip(sites, m_new, n_new):
            p = self.sites.index(s)
            m[p], n[p] = mm, nn
        return WeylIndex(tuple(m), tuple(n), self.q, self.sites)

    def dense(self):
        return weyl_string(self.q, self.m, self.n)


def weyl_product(a, b):
    """Product of two basis operators: (phase, index).

    dense(a) @ dense(b) == phase * dense(result), with the phase omega^k,
    k = sum_j n_j(a) * m_j(b), from commuting the W factors of `a` past the
    S factors of `b`.
    """
    if a.q != b.q or a.sites != b.sites:
        raise IncompatibleOperands("operands must share q and site set")
    k = sum(na * mb for na, mb in zip(a.n, b.m))
    idx = WeylIndex(tuple(ma + mb for ma, mb in zip(a.m, b.m)),
                    tuple(na + nb for na, nb in zip(a.n, b.n)),
                    a.q, a.sites)
    return phase(a.q, k), idx


@dataclass(frozen=True)
class DenseOperator:
    """Dense matrix on a register of qudits (dimension q^len(sites))."""
    matrix: np.ndarray
    q: int
    sites: tuple

    def __post_init__(self):
        _check_q(self.q)
        d = self.q ** len(self.sites)
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.shape != (d, d):
            raise DimensionError(f"expected {d}x{d} matrix, got {mat.shape}")
        mat = mat.copy()
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "sites", tuple(self.sites))


def _as_matrix(a):
    return a.matrix if isinstance(a, DenseOperator) else np.asarray(a, dtype=complex)


def op_inner(a, b):
    """Frobenius inner product tr(a^dag b) / D.

    Skew symmetric: op_inner(b, a) == conj(op_inner(a, b)).
    """
    ma, mb = _as_matrix(a), _as_matrix(b)
    if ma.shape != mb.shape:
        raise IncompatibleOperands(f"dimension mismatch {ma.shape} vs {mb.shape}")
    return np.vdot(ma, mb) / ma.shape[0]


def z_projector(q, a):
    """Normalized projector sqrt(q)|a><a| onto a weight-basis state."""
    _check_q(q)
    if not 0 <= a < q:
        raise IndexError(f"level {a} out of range for q={q}")
    p = np.zeros((q, q), dtype=complex)
    p[a, a] = np.sqrt(q)
    return p


def shift_eigenstate(q, a):
    """Eigenvector of S with eigenvalue omega^a."""
    _check_q(q)
    if not 0 <= a < q:
        raise IndexError(f"level {a} out of range for q={q}")
    return np.exp(-2j * np.pi * a * np.arange(q) / q) / np.sqrt(q)


def x_projector(q, a):
    """Normalized projector sqrt(q)|a~><a~| onto a shift-basis state."""
    v = shift_eigenstate(q, a)
    return np.sqrt(q) * np.outer(v, v.conj())


def naive_op(q, a, b):
    """Naive (outer-product) basis operator sqrt(q)|a><b| in the W basis."""
    _check_q(q)
    m = np.zeros((q, q), dtype=complex)
    m[a, b] = np.sqrt(q)
    return m


def naive_x_op(q, a, b):
    """sqrt(q)|a~><b~| built from shift-basis states."""
    va, vb = shift_eigenstate(q, a), shift_eigenstate(q, b)
    return np.sqrt(q) * np.outer(va, vb.conj())


def all_indices(q, sites):
    """Iterate over every WeylIndex on the given sites (q^(2N) of them)."""
    n_sites = len(sites)
    for m in product(range(q), repeat=n_sites):
        for n in product(range(q), repeat=n_sites):
            yield WeylIndex(m, n, q, sites)


@dataclass
class OperatorVector:
    """Sparse complex coefficient map over WeylIndex.

    Coefficients below `prune_threshold` in magnitude are dropped whenever
    `prune` runs; arithmetic helpers keep the map normalized so indices with
    entries outside [0, q) never appear as keys.
    """
    q: int
    sites: tuple
    terms: dict = field(default_factory=dict)
    prune_threshold: float = PRUNE_DEFAULT

    def __post_init__(self):
        _check_q(self.q)
        self.sites = tuple(self.sites)

    def copy(self):
        return OperatorVector(self.q, self.sites, dict(self.terms), self.prune_threshold)

    def coeff(self, idx):
        return self.terms.get(idx, 0j)

    def set(self, idx, value):
        if idx.q != self.q or idx.sites != self.sites:
            raise IncompatibleOperands("index does not match vector layout")
        if abs(value) <= self.prune_threshold:
            self.terms.pop(idx, None)
        else:
            self.terms[idx] = complex(value)

    def add(self, idx, value):
        self.set(idx, self.terms.get(idx, 0j) + value)

    def prune(self):
        self.terms = {k: v for k, v in self.terms.items()
                      if abs(v) > self.prune_threshold}
        return self

    def scaled(self, c):
        out = self.copy()
        out.terms = {k: c * v for k, v in out.terms.items()}
        return out.prune()

    def norm2(self):
        """Squared operator-space norm (sum of |coefficient|^2)."""
        return sum(abs(v) ** 2 for v in self.terms.values())

    @property
    def identity_coefficient(self):
        return self.coeff(WeylIndex.identity(self.q, self.sites))


def decompose(a, q, sites=None, prune_threshold=PRUNE_DEFAULT):
    """Expand a dense operator in the many-body Weyl basis.

    Coefficients are tr(T_{m,n}^dag A)/D.  For each shift vector m the
    weight coefficients over all n come from one multi-dimensional DFT of
    the generalized diagonal A[k+m, k], so the full expansion costs
    O(D^2 log D) rather than O(D^3).
    """
    mat = _as_matrix(a)
    d = mat.shape[0]
    n_sites = int(round(np.log(d) / np.log(q)))
    if q ** n_sites != d or mat.shape != (d, d):
        raise DimensionError(f"matrix dimension {mat.shape} is not a power of q={q}")
    if sites is None:
        sites = tuple(range(n_sites))
    tensor = mat.reshape((q,) * (2 * n_sites))
    row_axes = list(range(n_sites))
    diag_spec = list(range(n_sites)) * 2  # paired row/col labels: extract diagonal
    out = OperatorVector(q, sites, prune_threshold=prune_threshold)
    for m in product(range(q), repeat=n_sites):
        rolled = tensor
        for ax, shift in enumerate(m):
            if shift:
                rolled = np.roll(rolled, -shift, axis=ax)
        diag = np.einsum(rolled, diag_spec, row_axes)
        coeffs = np.fft.fftn(diag) / d
        for n in product(range(q), repeat=n_sites):
            c = coeffs[n]
            if abs(c) > prune_threshold:
                out.terms[WeylIndex(m, n, q, sites)] = complex(c)
    return out


def reconstruct(v):
    """Dense matrix from an OperatorVector (inverse of decompose)."""
    q, n_sites = v.q, len(v.sites)
    d = q ** n_sites
    grid = np.indices((q,) * n_sites).reshape(n_sites, -1)  # site-major digits
    weights = q ** np.arange(n_sites - 1, -1, -1)
    cols = weights @ grid
    mat = np.zeros((d, d), dtype=complex)
    for idx, c in v.terms.items():
        phases = np.exp(2j * np.pi * (np.array(idx.n) @ grid) / q)
        rows = weights @ ((grid + np.array(idx.m)[:, None]) % q)
        mat[rows, cols] += c * phases
    return mat
