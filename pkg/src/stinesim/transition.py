"""Haar- and outcome-averaged superoperator gates on Weyl coefficients.

Averaging a local unitary gate over the Haar ensemble (within symmetry or
constraint blocks) and averaging a projective measurement over outcomes both
yield linear maps on the Weyl-basis coefficients of operators and density
matrices.  These "transition gates" are Hermitian matrices in the cluster's
coefficient basis; circuits of them propagate coefficient vectors forward
(Schrodinger) or in reverse order (Heisenberg).

Gate matrices are assembled from normalized-projector and outer-product
forms, converted to Weyl coefficients through the naive <-> Weyl change of
basis, and stored sparse by column.
"""

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .weyl import OperatorVector, WeylIndex, phase

__all__ = [
    "TransitionGate", "TransitionCircuit",
    "tgate_evo_generic", "tgate_evo_blocks",
    "tgate_meas_z", "tgate_meas_x", "tgate_meas_nondegenerate",
    "tgate_cc_effective", "tgate_identity", "bernoulli_mix",
    "compose", "evolve",
    "onefold_haar_channel", "onefold_channel_dense",
    "config_int", "config_tuple",
]


def config_tuple(c, q, length):
    """Base-q digits (site-major) of a cluster configuration."""
    if isinstance(c, tuple):
        return c
    digits = []
    for _ in range(length):
        digits.append(c % q)
        c //= q
    return tuple(reversed(digits))


def config_int(c, q):
    out = 0
    for d in c:
        out = out * q + d
    return out


def _cluster_keys(q, length):
    """All (m, n) cluster keys, m and n being length-`length` tuples."""
    singles = list(product(range(q), repeat=length))
    return [(m, n) for m in singles for n in singles]


def _naive_z_vector(q, a, b):
    """Weyl coefficients of the naive operator sqrt(q^l)|a><b| (W basis).

    Nonzero only at m = a - b (mod q), with coefficient
    omega^{-n.b} / q^{l/2} for every n.
    """
    length = len(a)
    m = tuple((ai - bi) % q for ai, bi in zip(a, b))
    scale = q ** (-length / 2)
    out = {}
    for n in product(range(q), repeat=length):
        k = sum(ni * bi for ni, bi in zip(n, b))
        out[(m, n)] = scale * phase(q, -k)
    return out


def _naive_x_vector(q, a, b):
    """Weyl coefficients of sqrt(q^l)|a~><b~| (shift-basis outer product).

    Nonzero only at n = b - a (mod q), with coefficient
    omega^{-m.a} / q^{l/2} for every m.
    """
    length = len(a)
    n = tuple((bi - ai) % q for ai, bi in zip(a, b))
    scale = q ** (-length / 2)
    out = {}
    for m in product(range(q), repeat=length):
        k = sum(mi * ai for mi, ai in zip(m, a))
        out[(m, n)] = scale * phase(q, -k)
    return out


@dataclass(frozen=True)
class TransitionGate:
    """Sparse Hermitian linear map on the Weyl coefficients of a cluster.

    `cols` maps an input key (m, n) to a tuple of (output key, amplitude);
    keys are pairs of per-site tuples.  `kind` tags the construction.
    `requires_no_shift` marks gates valid only on shift-free input; evolve()
    zeroes such content and reports the dropped weight.
    """
    q: int
    length: int
    cols: dict
    kind: str
    requires_no_shift: bool = False

    def matrix(self):
        """Dense matrix, index = (m-digits, n-digits) mixed radix, m major."""
        keys = _cluster_keys(self.q, self.length)
        pos = {k: i for i, k in enumerate(keys)}
        d = len(keys)
        mat = np.zeros((d, d), dtype=complex)
        for key_in, entries in self.cols.items():
            for key_out, amp in entries:
                mat[pos[key_out], pos[key_in]] = amp
        return mat

    def apply_key(self, key):
        return self.cols.get(key, ())


def _gate_from_matrix_dict(q, length, dense, kind, tol=1e-15, requires_no_shift=False):
    """Build the sparse column map from a dict {(key_out, key_in): amp}."""
    cols = {}
    for (key_out, key_in), amp in dense.items():
        if abs(amp) > tol:
            cols.setdefault(key_in, []).append((key_out, amp))
    cols = {k: tuple(v) for k, v in cols.items()}
    return TransitionGate(q, length, cols, kind, requires_no_shift)


def _outer_product_gate(q, length, vector_pairs, kind):
    """Sum of weighted outer products |u><u| of coefficient vectors.

    vector_pairs: iterable of (weight, vector-dict).  Yields a Hermitian
    gate since each summand is.
    """
    dense = {}
    for w, vec in vector_pairs:
        for key_out, amp_out in vec.items():
            for key_in, amp_in in vec.items():
                k = (key_out, key_in)
                dense[k] = dense.get(k, 0j) + w * amp_out * np.conj(amp_in)
    return dense


def tgate_evo_generic(q, length):
    """Haar-averaged featureless evolution: rank-one projector onto identity.

    Annihilates every nontrivial cluster coefficient.
    """
    z = (0,) * length
    return TransitionGate(q, length, {(z, z): (((z, z), 1.0 + 0j),)}, "evo-generic")


def tgate_evo_blocks(q, blocks, frozen=(), length=None):
    """Haar-averaged block-diagonal evolution.

    `blocks` partitions the q^l cluster configurations (ints or digit
    tuples); blocks listed in `frozen` (by index) act as identity instead of
    receiving a Haar unitary.  Without frozen blocks the gate annihilates
    all shift content; frozen blocks preserve the off-diagonal operators
    connecting their configurations.
    """
    if length is None:
        first = blocks[0][0]
        length = len(first) if isinstance(first, tuple) else \
            max(1, int(np.ceil(np.log(max(max(b) for b in blocks) + 1) / np.log(q))))
    blocks = [tuple(config_tuple(c, q, length) for c in blk) for blk in blocks]
    seen = [c for blk in blocks for c in blk]
    if sorted(seen) != sorted(product(range(q), repeat=length)):
        raise ValueError("blocks must partition the cluster configurations exactly once")
    frozen = set(frozen)
    pairs = []
    frozen_configs = []
    for i, blk in enumerate(blocks):
        if i in frozen:
            frozen_configs.extend(blk)
        else:
            vec = {}
            for a in blk:
                for key, amp in _naive_z_vector(q, a, a).items():
                    vec[key] = vec.get(key, 0j) + amp
            pairs.append((1.0 / len(blk), vec))
    dense = _outer_product_gate(q, length, pairs, "evo-blocks")
    # frozen blocks act as identity: every |a><b| between frozen configs survives
    for a in frozen_configs:
        for b in frozen_configs:
            vec = _naive_z_vector(q, a, b)
            for key_out, amp_out in vec.items():
                for key_in, amp_in in vec.items():
                    k = (key_out, key_in)
                    dense[k] = dense.get(k, 0j) + amp_out * np.conj(amp_in)
    return _gate_from_matrix_dict(q, length, dense, "evo-blocks")


def _meas_gate(q, blocks, length, vector_fn, kind):
    """Outcome-averaged measurement gate from eigenvalue blocks.

    Sum over all configurations of |a><a| projector terms plus, for each
    degenerate block, the off-diagonal |a><b| (a != b) terms.
    """
    blocks = [tuple(config_tuple(c, q, length) for c in blk) for blk in blocks]
    seen = [c for blk in blocks for c in blk]
    if sorted(seen) != sorted(product(range(q), repeat=length)):
        raise ValueError("eigenvalue blocks must partition the configurations")
    pairs = []
    for blk in blocks:
        for a in blk:
            for b in blk:
                pairs.append((1.0, vector_fn(q, a, b)))
    dense = _outer_product_gate(q, length, pairs, kind)
    return _gate_from_matrix_dict(q, length, dense, kind)


def tgate_meas_z(q, blocks, length=None):
    """Outcome-averaged measurement of a weight-basis (computational) observable.

    `blocks` groups the q^l computational configurations by eigenvalue.
    """
    if length is None:
        first = blocks[0][0]
        length = len(first) if isinstance(first, tuple) else 1
    return _meas_gate(q, blocks, length, _naive_z_vector, "meas-Z")


def tgate_meas_x(q, blocks, length=None):
    """Outcome-averaged measurement of a shift-basis observable."""
    if length is None:
        first = blocks[0][0]
        length = len(first) if isinstance(first, tuple) else 1
    return _meas_gate(q, blocks, length, _naive_x_vector, "meas-X")


def tgate_meas_nondegenerate(q, length=1, basis="z"):
    """Measurement with a fully nondegenerate spectrum (singleton blocks)."""
    singles = [(c,) for c in product(range(q), repeat=length)]
    gate = (tgate_meas_z if basis == "z" else tgate_meas_x)(q, singles, length)
    return TransitionGate(gate.q, gate.length, gate.cols, "meas-nondegenerate")


def pair_difference_counts(q, blocks, length):
    """Counter I(n): ordered pairs b != b' within a block with b' - b = n."""
    blocks = [tuple(config_tuple(c, q, length) for c in blk) for blk in blocks]
    counts = {}
    for blk in blocks:
        for b in blk:
            for bp in blk:
                if b == bp:
                    continue
                n = tuple((x - y) % q for x, y in zip(bp, b))
                counts[n] = counts.get(n, 0) + 1
    return counts


def tgate_cc_effective(q, blocks, length=None):
    """Effective gate for a charge-changing (shift-basis) measurement.

    Valid only between evolution layers that leave no shift content; the
    gate zeroes shift-bearing input (evolve() counts the dropped weight) and
    suppresses weight operators by I(n)/q^l, annihilating those with no
    degenerate-block pair at difference n.
    """
    if length is None:
        first = blocks[0][0]
        length = len(first) if isinstance(first, tuple) else 1
    counts = pair_difference_counts(q, blocks, length)
    z = (0,) * length
    scale = q ** (-length)
    cols = {}
    for n in product(range(q), repeat=length):
        # I(0) is empty (pairs are distinct), so the identity passes intact
        amp = (1.0 if n == z else 0.0) + counts.get(n, 0) * scale
        if amp:
            key = (z, n)
            cols[key] = ((key, complex(amp)),)
    return TransitionGate(q, length, cols, "cc-effective", requires_no_shift=True)


def tgate_identity(q, length):
    keys = _cluster_keys(q, length)
    return TransitionGate(q, length, {k: ((k, 1.0 + 0j),) for k in keys}, "custom")


def bernoulli_mix(gate, p):
    """Convex mixture (1-p)*Id + p*gate: a site measured with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("probability must be in [0, 1]")
    dense = {}
    for key in _cluster_keys(gate.q, gate.length):
        dense[(key, key)] = (1.0 - p)
    for key_in, entries in gate.cols.items():
        for key_out, amp in entries:
            k = (key_out, key_in)
            dense[k] = dense.get(k, 0j) + p * amp
    return _gate_from_matrix_dict(gate.q, gate.length, dense, "custom",
                                  requires_no_shift=gate.requires_no_shift)


@dataclass(frozen=True)
class TransitionCircuit:
    """Ordered layers of (gate, cluster) pairs with an evolution direction.

    direction "schrodinger": layers act on density-matrix vectors in listed
    (chronological) order; "heisenberg": operators evolve through the same
    layers in reverse order (the gates are Hermitian, so no conjugation is
    needed).
    """
    layers: tuple
    direction: str = "schrodinger"

    def ordered_layers(self):
        if self.direction == "schrodinger":
            return self.layers
        return tuple(reversed(self.layers))


def compose(layers, direction="schrodinger"):
    """Build a TransitionCircuit from layers of (gate, cluster-sites) pairs."""
    if direction not in ("schrodinger", "heisenberg"):
        raise ValueError(f"unknown direction {direction!r}")
    norm = []
    for layer in layers:
        covered = []
        for gate, cluster in layer:
            cluster = tuple(cluster)
            if len(cluster) != gate.length:
                raise ValueError("cluster size does not match gate length")
            if set(cluster) & set(covered):
                raise ValueError("clusters within a layer must not overlap")
            covered.extend(cluster)
        norm.append(tuple((g, tuple(c)) for g, c in layer))
    return TransitionCircuit(tuple(norm), direction)


def _apply_gate(vec, gate, cluster, diagnostics=None):
    out = OperatorVector(vec.q, vec.sites, prune_threshold=vec.prune_threshold)
    dropped = 0.0
    for idx, c in vec.terms.items():
        key = idx.restrict(cluster)
        if gate.requires_no_shift and any(key[0]):
            dropped += abs(c) ** 2
            continue
        for (m_out, n_out), amp in gate.apply_key(key):
            out.add(idx.replace(cluster, m_out, n_out), c * amp)
    if diagnostics is not None and gate.requires_no_shift:
        diagnostics["cc_dropped_weight"] = diagnostics.get("cc_dropped_weight", 0.0) + dropped
    return out.prune()


def evolve(circuit, vec, diagnostics=None):
    """Propagate an OperatorVector through a transition circuit.

    Returns a new vector; the identity coefficient of a density matrix is
    invariant under every built-in gate.
    """
    out = vec.copy()
    for layer in circuit.ordered_layers():
        for gate, cluster in layer:
            out = _apply_gate(out, gate, cluster, diagnostics)
    return out


def onefold_haar_channel(vec, cluster):
    """Project onto terms acting trivially on `cluster` (one Haar layer).

    Equivalent to averaging U^dag . U over the unitary group on the cluster:
    only coefficients with all-zero Weyl index there survive.
    """
    out = OperatorVector(vec.q, vec.sites, prune_threshold=vec.prune_threshold)
    for idx, c in vec.terms.items():
        m, n = idx.restrict(cluster)
        if not any(m) and not any(n):
            out.terms[idx] = c
    return out


def onefold_channel_dense(mat):
    """Dense onefold Haar channel: A -> tr(A)/D * I."""
    mat = np.asarray(mat, dtype=complex)
    d = mat.shape[0]
    return np.trace(mat) / d * np.eye(d, dtype=complex)
