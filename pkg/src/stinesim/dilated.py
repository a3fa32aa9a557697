"""Exact dense simulation on the dilated space: system qudits plus one
outcome register per measurement.

A projective measurement of an observable with projectors {P^(m)} acts
unitarily on system (x) register as sum_m P^(m) (x) S^m, shifting a fresh
q-level register initialized to |0>.  Feedback gates read registers and
apply outcome-conditioned unitaries to the system.  Floquet circuits add a
cyclic shift of the register slices so one fixed operator generates all
periods.
"""

from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from .weyl import shift_matrix

__all__ = [
    "Register", "SpacetimeLattice", "MeasurementSpec", "BlockGateSpec",
    "AdaptiveGateSpec", "DilatedState",
    "haar_unitary", "haar_unitaries", "embed_operator",
    "build_measurement_unitary", "sample_haar_block_gate", "assemble_block_gate",
    "build_adaptive_gate", "time_shift", "build_floquet",
    "outcome_probability", "project_trajectory", "average_outcomes",
    "dilated_expval", "measure_and_average",
    "pauli_string_measurement", "weight_basis_measurement",
    "u1_blocks", "ising_blocks", "east_blocks", "generic_blocks",
]

MEMORY_BUDGET = 2 ** 26  # complex entries; builds beyond this fail fast


class MemoryBudgetError(MemoryError):
    """Requested dilated space exceeds the configured budget."""


class RegisterTooSmall(ValueError):
    """Target register has fewer levels than measurement outcomes."""


class ImpossibleOutcome(ValueError):
    """Requested trajectory has zero probability."""


def haar_unitary(n, rng):
    """Haar-distributed n x n unitary: QR of a complex Gaussian matrix with
    the R diagonal phase-normalized."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    qm, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return qm * (d / np.abs(d))


def haar_unitaries(n, count, rng):
    """Batch of independent Haar unitaries, shape (count, n, n)."""
    z = (rng.standard_normal((count, n, n)) + 1j * rng.standard_normal((count, n, n))) / np.sqrt(2)
    qm, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return qm * (d / np.abs(d))[:, None, :]


@dataclass(frozen=True)
class Register:
    """Outcome register: attached to `site`, in temporal slice `layer`,
    with `levels` internal states (levels <= q for uniform lattices)."""
    site: int
    layer: int
    levels: int


@dataclass(frozen=True)
class SpacetimeLattice:
    """Physical sites plus the outcome registers of the whole protocol."""
    n_sites: int
    q: int
    registers: tuple = ()
    budget: int = MEMORY_BUDGET

    def __post_init__(self):
        object.__setattr__(self, "registers", tuple(self.registers))
        if any(r.levels < 1 for r in self.registers):
            raise ValueError("registers need at least one level")
        if self.dim > self.budget:
            raise MemoryBudgetError(
                f"dilated dimension {self.dim} exceeds budget {self.budget}")

    @property
    def dims(self):
        return tuple([self.q] * self.n_sites + [r.levels for r in self.registers])

    @property
    def dim(self):
        d = self.q ** self.n_sites
        for r in self.registers:
            d *= r.levels
        return d

    @property
    def physical_dim(self):
        return self.q ** self.n_sites

    def register_axis(self, index):
        return self.n_sites + index

    def with_register(self, reg):
        return replace(self, registers=self.registers + (reg,))


@dataclass(frozen=True)
class MeasurementSpec:
    """Projective measurement of an observable on a physical cluster.

    `projectors` act on the cluster space (dimension q^len(cluster)), are
    Hermitian, idempotent, mutually orthogonal and complete; `eigenvalues`
    are the distinct outcomes; `register` indexes the target register.
    """
    cluster: tuple
    projectors: tuple
    eigenvalues: tuple
    register: int

    def __post_init__(self):
        object.__setattr__(self, "cluster", tuple(self.cluster))
        object.__setattr__(self, "projectors",
                           tuple(np.asarray(p, dtype=complex) for p in self.projectors))
        object.__setattr__(self, "eigenvalues", tuple(self.eigenvalues))
        d = self.projectors[0].shape[0]
        total = np.zeros((d, d), dtype=complex)
        for i, p in enumerate(self.projectors):
            if not np.allclose(p, p.conj().T, atol=1e-10):
                raise ValueError("projector is not Hermitian")
            if not np.allclose(p @ p, p, atol=1e-10):
                raise ValueError("projector is not idempotent")
            for pj in self.projectors[i + 1:]:
                if not np.allclose(p @ pj, 0, atol=1e-10):
                    raise ValueError("projectors are not mutually orthogonal")
            total += p
        if not np.allclose(total, np.eye(d), atol=1e-10):
            raise ValueError("projectors do not sum to identity")
        if len(set(np.round(np.asarray(self.eigenvalues, dtype=complex), 12))) != len(self.eigenvalues):
            raise ValueError("eigenvalues must be distinct")

    @property
    def n_outcomes(self):
        return len(self.projectors)

    def observable(self):
        return sum(lam * p for lam, p in zip(self.eigenvalues, self.projectors))


@dataclass(frozen=True)
class BlockGateSpec:
    """Block-diagonal unitary on an l-site cluster.

    `blocks` partitions the q^l computational configurations (as ints in
    site-major base q, or digit tuples); `frozen` lists block indices that
    act as identity; `unitaries` holds one sampled n_a x n_a unitary per
    non-frozen block (None before sampling).
    """
    cluster: tuple
    q: int
    blocks: tuple
    frozen: tuple = ()
    unitaries: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "cluster", tuple(self.cluster))
        length = len(self.cluster)
        norm = []
        for blk in self.blocks:
            norm.append(tuple(_config_int(c, self.q, length) for c in blk))
        object.__setattr__(self, "blocks", tuple(norm))
        object.__setattr__(self, "frozen", tuple(self.frozen))
        seen = sorted(c for blk in self.blocks for c in blk)
        if seen != list(range(self.q ** length)):
            raise ValueError("blocks must partition the cluster configurations")

    def block_partition(self):
        """Blocks as digit tuples, for the transition-matrix builders."""
        length = len(self.cluster)
        return [tuple(_digits(c, self.q, length) for c in blk) for blk in self.blocks]


def _config_int(c, q, length):
    if isinstance(c, tuple):
        out = 0
        for d in c:
            out = out * q + d
        return out
    return int(c)


def _digits(c, q, length):
    out = []
    for _ in range(length):
        out.append(c % q)
        c //= q
    return tuple(reversed(out))


@dataclass(frozen=True)
class AdaptiveGateSpec:
    """Outcome-conditioned feedback: unitary R_m on `cluster` when the joint
    state of `control_registers` is m.  `table` maps outcome tuples to
    cluster unitaries and must cover every joint outcome."""
    cluster: tuple
    control_registers: tuple
    table: dict

    def __post_init__(self):
        object.__setattr__(self, "cluster", tuple(self.cluster))
        object.__setattr__(self, "control_registers", tuple(self.control_registers))


@dataclass
class DilatedState:
    """Pure vector or density matrix on the dilated space."""
    lattice: SpacetimeLattice
    rho: np.ndarray = None
    psi: np.ndarray = None

    def __post_init__(self):
        d = self.lattice.dim
        if (self.rho is None) == (self.psi is None):
            raise ValueError("provide exactly one of rho or psi")
        if self.psi is not None:
            self.psi = np.asarray(self.psi, dtype=complex).reshape(d)
        else:
            self.rho = np.asarray(self.rho, dtype=complex).reshape(d, d)

    @classmethod
    def from_physical(cls, lattice, rho_ph=None, psi_ph=None):
        """Physical state with every register in its default level 0."""
        if psi_ph is not None:
            psi = np.asarray(psi_ph, dtype=complex)
            for r in lattice.registers:
                reg = np.zeros(r.levels, dtype=complex)
                reg[0] = 1.0
                psi = np.kron(psi, reg)
            return cls(lattice, psi=psi)
        rho = np.asarray(rho_ph, dtype=complex)
        for r in lattice.registers:
            reg = np.zeros((r.levels, r.levels), dtype=complex)
            reg[0, 0] = 1.0
            rho = np.kron(rho, reg)
        return cls(lattice, rho=rho)

    def density(self):
        if self.rho is not None:
            return self.rho
        return np.outer(self.psi, self.psi.conj())

    def apply(self, op):
        """In-place application of a dense dilated operator."""
        if self.psi is not None:
            self.psi = op @ self.psi
        else:
            self.rho = op @ self.rho @ op.conj().T
        return self


def embed_operator(op, axes, dims):
    """Dense operator on the full product space acting as `op` on `axes`.

    `op` has row/column dimension prod(dims[a] for a in axes); remaining
    axes carry the identity.
    """
    n_ax = len(dims)
    rest = [a for a in range(n_ax) if a not in axes]
    d_axes = int(np.prod([dims[a] for a in axes], initial=1))
    d_rest = int(np.prod([dims[a] for a in rest], initial=1))
    op = np.asarray(op, dtype=complex).reshape([dims[a] for a in axes] * 2)
    full = np.tensordot(op, np.eye(d_rest).reshape([dims[a] for a in rest] * 2), axes=0)
    # current axis order: axes-out, axes-in, rest-out, rest-in
    k, r = len(axes), len(rest)
    out_order = [None] * n_ax
    for i, a in enumerate(axes):
        out_order[a] = i
    for i, a in enumerate(rest):
        out_order[a] = 2 * k + i
    in_order = [None] * n_ax
    for i, a in enumerate(axes):
        in_order[a] = k + i
    for i, a in enumerate(rest):
        in_order[a] = 2 * k + r + i
    full = full.transpose(out_order + in_order)
    d = int(np.prod(dims))
    return full.reshape(d, d)


def build_measurement_unitary(spec, lattice):
    """Dilated unitary sum_m P^(m) (x) S^m for measurement of an observable.

    The register shift S acts modulo the register's level count, which must
    be at least the number of outcomes.
    """
    reg = lattice.registers[spec.register]
    if reg.levels < spec.n_outcomes:
        raise RegisterTooSmall(
            f"register has {reg.levels} levels < {spec.n_outcomes} outcomes")
    dims = lattice.dims
    cluster_axes = list(spec.cluster)
    reg_axis = lattice.register_axis(spec.register)
    shift = shift_matrix(reg.levels) if reg.levels > 1 else np.eye(1, dtype=complex)
    total = np.zeros((lattice.dim, lattice.dim), dtype=complex)
    for m, proj in enumerate(spec.projectors):
        op = np.kron(proj, np.linalg.matrix_power(shift, m))
        total += embed_operator(op, cluster_axes + [reg_axis], dims)
    return total


def sample_haar_block_gate(spec, rng):
    """Fill a BlockGateSpec with independent Haar unitaries per block.

    Frozen blocks receive the identity.
    """
    unitaries = []
    frozen = set(spec.frozen)
    for i, blk in enumerate(spec.blocks):
        n = len(blk)
        unitaries.append(np.eye(n, dtype=complex) if i in frozen
                         else haar_unitary(n, rng))
    return replace(spec, unitaries=tuple(unitaries))


def assemble_block_gate(spec):
    """Dense cluster unitary from a sampled BlockGateSpec."""
    if spec.unitaries is None:
        raise ValueError("gate has not been sampled")
    d = spec.q ** len(spec.cluster)
    gate = np.zeros((d, d), dtype=complex)
    for blk, u in zip(spec.blocks, spec.unitaries):
        idx = np.array(blk)
        gate[np.ix_(idx, idx)] = u
    return gate


def build_adaptive_gate(spec, lattice):
    """Dilated unitary sum_m R_m (x) |m><m| on the control registers.

    Controls are read-only: the gate is block diagonal in their basis.
    """
    regs = [lattice.registers[r] for r in spec.control_registers]
    outcomes = list(product(*[range(r.levels) for r in regs]))
    missing = [m for m in outcomes if (m if len(m) > 1 else m[0]) not in spec.table
               and m not in spec.table]
    if missing:
        raise ValueError(f"outcome table missing entries for {missing}")
    dims = lattice.dims
    cluster_axes = list(spec.cluster)
    reg_axes = [lattice.register_axis(r) for r in spec.control_registers]
    total = np.zeros((lattice.dim, lattice.dim), dtype=complex)
    for m in outcomes:
        key = m if m in spec.table else (m if len(m) > 1 else m[0])
        r_m = np.asarray(spec.table[key], dtype=complex)
        proj = np.ones((1, 1), dtype=complex)
        for reg, mi in zip(regs, m):
            p = np.zeros((reg.levels, reg.levels), dtype=complex)
            p[mi, mi] = 1.0
            proj = np.kron(proj, p)
        total += embed_operator(np.kron(r_m, proj), cluster_axes + reg_axes, dims)
    return total


def time_shift(lattice):
    """Cyclic permutation of register slices: slice tau receives the content
    of slice tau+1 (slice 1 wraps to the last), physical sites untouched.

    Requires a uniform layout: the same (site, levels) register set in every
    slice.
    """
    layers = sorted({r.layer for r in lattice.registers})
    if not layers:
        return np.eye(lattice.dim, dtype=complex)
    per_layer = {}
    for i, r in enumerate(lattice.registers):
        per_layer.setdefault(r.layer, []).append((r.site, r.levels, i))
    signature = None
    for lay in layers:
        sig = tuple((s, lv) for s, lv, _ in sorted(per_layer[lay]))
        if signature is None:
            signature = sig
        elif sig != signature:
            raise ValueError("register layout differs between slices")
    # permutation of register axes: axis of (site, tau) gets state of (site, tau+1)
    n_ax = len(lattice.dims)
    perm = list(range(n_ax))
    for site, _lv in signature:
        ring = [dict((s, i) for s, _l, i in per_layer[lay])[site] for lay in layers]
        for k, reg_index in enumerate(ring):
            src = ring[(k + 1) % len(ring)]
            perm[lattice.register_axis(reg_index)] = lattice.register_axis(src)
    dims = lattice.dims
    d = lattice.dim
    idx = np.arange(d).reshape(dims)
    moved = idx.transpose(perm).reshape(d)
    mat = np.zeros((d, d), dtype=complex)
    mat[np.arange(d), moved] = 1.0
    return mat


def build_floquet(layers, lattice):
    """Time-ordered dense product of circuit layers.

    `layers` is a sequence of ("evo", [(gate_matrix, cluster), ...]),
    ("meas", [MeasurementSpec, ...]) or ("shift",) entries; the first entry
    acts first.
    """
    total = np.eye(lattice.dim, dtype=complex)
    dims = lattice.dims
    for layer in layers:
        kind = layer[0]
        if kind == "evo":
            op = np.eye(lattice.dim, dtype=complex)
            for gate, cluster in layer[1]:
                op = embed_operator(gate, list(cluster), dims) @ op
            total = op @ total
        elif kind == "meas":
            for spec in layer[1]:
                total = build_measurement_unitary(spec, lattice) @ total
        elif kind == "shift":
            total = time_shift(lattice) @ total
        elif kind == "adaptive":
            for spec in layer[1]:
                total = build_adaptive_gate(spec, lattice) @ total
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
    return total


def _register_axes(lattice, registers):
    return [lattice.register_axis(r) for r in registers]


def outcome_probability(state, outcomes):
    """Joint probability of a partial outcome assignment {register: level}."""
    for r in outcomes:
        if not 0 <= r < len(state.lattice.registers):
            raise KeyError(f"unknown register {r}")
    dims = state.lattice.dims
    rho = state.density().reshape(dims + dims)
    n_ax = len(dims)
    for r, level in outcomes.items():
        ax = state.lattice.register_axis(r)
        rho = np.take(rho, [level], axis=ax)
        rho = np.take(rho, [level], axis=n_ax + ax)
    # trace over everything
    rho = rho.reshape(int(np.prod(rho.shape[:n_ax])), -1)
    return float(np.real(np.trace(rho)))


def project_trajectory(state, outcomes, tol=1e-12):
    """Normalized state conditioned on outcomes {register: level}.

    The referenced registers are traced out; the result lives on the
    physical sites plus the remaining registers.
    """
    p = outcome_probability(state, outcomes)
    if p <= tol:
        raise ImpossibleOutcome(f"trajectory has probability {p}")
    lattice = state.lattice
    dims = lattice.dims
    n_ax = len(dims)
    rho = state.density().reshape(dims + dims)
    for r, level in outcomes.items():
        ax = lattice.register_axis(r)
        rho = np.take(rho, [level], axis=ax)
        rho = np.take(rho, [level], axis=n_ax + ax)
    # drop the pinned (size-1) axes, bra side first to keep positions valid
    for r in sorted(outcomes, reverse=True):
        ax = lattice.register_axis(r)
        rho = np.squeeze(rho, axis=n_ax + ax)
        rho = np.squeeze(rho, axis=ax)
        n_ax -= 1
    keep = [i for i in range(len(lattice.registers)) if i not in outcomes]
    new_latt = SpacetimeLattice(lattice.n_sites, lattice.q,
                                tuple(lattice.registers[i] for i in keep),
                                lattice.budget)
    d = new_latt.dim
    return DilatedState(new_latt, rho=rho.reshape(d, d) / p)


def average_outcomes(state, registers):
    """Partial trace over the listed registers (probability-weighted outcome
    average); tracing every register returns the physical density matrix."""
    lattice = state.lattice
    dims = lattice.dims
    rho = state.density().reshape(dims + dims)
    n_ax = len(dims)
    for r in sorted(registers, reverse=True):
        ax = lattice.register_axis(r)
        rho = np.trace(rho, axis1=ax, axis2=n_ax + ax)
        n_ax -= 1
    keep = [i for i in range(len(lattice.registers)) if i not in registers]
    new_latt = SpacetimeLattice(lattice.n_sites, lattice.q,
                                tuple(lattice.registers[i] for i in keep),
                                lattice.budget)
    d = new_latt.dim
    return DilatedState(new_latt, rho=rho.reshape(d, d))


def dilated_expval(state, op_ph, register_ops=None):
    """tr[(A_ph (x) A_ss) rho] with per-register Stinespring factors.

    `register_ops` maps register index -> dense operator; omitted registers
    carry the identity.
    """
    lattice = state.lattice
    dims = lattice.dims
    op_ph = np.asarray(op_ph, dtype=complex)
    if op_ph.shape != (lattice.physical_dim,) * 2:
        raise ValueError("physical operator dimension mismatch")
    full = embed_operator(op_ph, list(range(lattice.n_sites)), dims)
    for r, op in (register_ops or {}).items():
        op = np.asarray(op, dtype=complex)
        if op.shape != (lattice.registers[r].levels,) * 2:
            raise ValueError("register operator dimension mismatch")
        full = full @ embed_operator(op, [lattice.register_axis(r)], dims)
    if state.psi is not None:
        return complex(np.vdot(state.psi, full @ state.psi))
    return complex(np.trace(full @ state.rho))


def measure_and_average(rho_ph, projectors, n_sites, q, cluster):
    """Outcome-averaged measurement on a physical density matrix.

    Attaches a fresh register, applies the dilated measurement unitary, and
    traces the register out again; equivalent to rho -> sum_m P rho P.
    """
    lattice = SpacetimeLattice(n_sites, q, (Register(cluster[0], 1, len(projectors)),))
    spec = MeasurementSpec(cluster, projectors, tuple(range(len(projectors))), 0)
    u = build_measurement_unitary(spec, lattice)
    state = DilatedState.from_physical(lattice, rho_ph=rho_ph)
    state.apply(u)
    return average_outcomes(state, [0]).rho


# ---------------------------------------------------------------------------
# measurement-spec helpers for string observables

def pauli_string_measurement(cluster, ms, ns, register):
    """Measurement spec for a +/-1 Pauli string S^m W^n ... on qubits.

    Only q = 2 strings are Hermitian up to phase; the projectors are
    (I +/- A)/2 with A the phase-fixed string.
    """
    from .weyl import weyl_string
    a = weyl_string(2, ms, ns)
    # fix the global phase so the string is Hermitian (Y = i XZ etc.)
    phase_fix = 1j ** sum(m * n for m, n in zip(ms, ns))
    a = phase_fix * a
    if not np.allclose(a, a.conj().T, atol=1e-12):
        raise ValueError("string is not Hermitian after phase fixing")
    d = a.shape[0]
    eye = np.eye(d)
    return MeasurementSpec(cluster, ((eye + a) / 2, (eye - a) / 2), (1.0, -1.0), register)


def weight_basis_measurement(cluster, q, blocks, register):
    """Measurement of a computational-basis observable with eigenvalue
    blocks given as configuration groups."""
    length = len(cluster)
    d = q ** length
    projectors = []
    for blk in blocks:
        p = np.zeros((d, d), dtype=complex)
        for c in blk:
            ci = _config_int(c, q, length)
            p[ci, ci] = 1.0
        projectors.append(p)
    return MeasurementSpec(cluster, tuple(projectors),
                           tuple(range(len(projectors))), register)


# ---------------------------------------------------------------------------
# standard block structures (two-site clusters)

def generic_blocks(cluster, q):
    length = len(cluster)
    return BlockGateSpec(cluster, q, (tuple(range(q ** length)),))


def u1_blocks(cluster, q=2):
    """Charge-conserving blocks: configurations grouped by digit sum."""
    length = len(cluster)
    groups = {}
    for c in range(q ** length):
        charge = sum(_digits(c, q, length))
        groups.setdefault(charge, []).append(c)
    return BlockGateSpec(cluster, q, tuple(tuple(g) for _, g in sorted(groups.items())))


def ising_blocks(cluster):
    """Two-qubit parity blocks {00,11} and {01,10}."""
    if len(cluster) != 2:
        raise ValueError("Ising blocks are defined on two-site clusters")
    return BlockGateSpec(cluster, 2, ((0, 3), (1, 2)))


def east_blocks(cluster):
    """Kinetic constraint: act on the west site only when the east site is
    excited.  Configurations a1 (east bit set) mix; a0 are frozen."""
    if len(cluster) != 2:
        raise ValueError("East blocks are defined on two-site clusters")
    # site-major ints: (west, east) -> 2*west + east
    return BlockGateSpec(cluster, 2, blocks=((1, 3), (0,), (2,)), frozen=(1, 2))
