"""Experiment drivers shared by the CLI and the acceptance suite.

Each driver is deterministic given (config params, seed) and independent of
the worker count: work is split into fixed-size blocks with Philox streams
keyed by block index, and results are reduced in block order.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product

import numpy as np

from . import rng as rngmod
from . import stochastic as st
from .dilated import (Register, SpacetimeLattice, MeasurementSpec,
                      build_measurement_unitary, generic_blocks, u1_blocks,
                      ising_blocks, haar_unitaries)
from .transition import (bernoulli_mix, compose, evolve, tgate_evo_blocks,
                         tgate_evo_generic, tgate_meas_nondegenerate)
from .weyl import OperatorVector, WeylIndex, decompose

TMAT_BLOCK = 512  # realizations per parallel block


def _pool_map(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


# ---------------------------------------------------------------------------
# trajectory curves (ssep / east)

def _curve_task(args):
    model, L, gamma, t_max, samples, seed, stream_id, boundary, interleaving = args
    params = st.ProtocolParams(model, L, gamma, t_max, samples,
                               seed=_derive_seed(seed, stream_id),
                               boundary=boundary, interleaving=interleaving)
    return st.defect_density(params)


def _derive_seed(seed, stream_id):
    # fold the task index into the 64-bit master seed; Philox keys on both
    return (seed ^ (0x9E3779B97F4A7C15 * (stream_id + 1))) & 0xFFFFFFFFFFFFFFFF


def density_curves(model, points, samples, seed, workers=1,
                   boundary="periodic", interleaving="layer"):
    """Defect-density curves for a list of (L, gamma, t_max) points.

    Each point gets its own counter-derived stream, so the curve set is
    byte-stable under any worker count.
    """
    tasks = [(model, L, g, t_max, samples, seed, i, boundary, interleaving)
             for i, (L, g, t_max) in enumerate(points)]
    return _pool_map(_curve_task, tasks, workers)


# ---------------------------------------------------------------------------
# transition-matrix oracle check (exact dilated MC vs superoperator circuit)

@dataclass
class TmatCheckResult:
    mc_mean: np.ndarray       # complex coefficient means, one per Weyl index
    mc_stderr: np.ndarray     # standard errors of the complex means
    predicted: np.ndarray     # transition-circuit coefficients
    indices: list             # WeylIndex order
    realizations: int
    max_z: float

    def z_scores(self, atol=1e-10):
        """Deviation in standard errors; zero-variance coefficients (the
        exactly conserved ones) compare absolutely at `atol`."""
        dev = np.abs(self.mc_mean - self.predicted)
        err = self.mc_stderr.copy()
        frozen = err < 1e-14
        z = np.where(frozen, np.where(dev < atol, 0.0, np.inf),
                     dev / np.where(frozen, 1.0, err))
        return z


def _brickwork_bonds(n_sites):
    even = [(j, j + 1) for j in range(0, n_sites - 1, 2)]
    odd = [(j, (j + 1) % n_sites) for j in range(1, n_sites, 2)]
    return even, odd


def _embed_batched(gates, axes, n_sites):
    """Embed a batch of two-site gates into the full qubit register."""
    b = gates.shape[0]
    dims = [2] * n_sites
    rest = [a for a in range(n_sites) if a not in axes]
    d_rest = 2 ** len(rest)
    eye = np.eye(d_rest).reshape([2] * (2 * len(rest)))
    g = gates.reshape([b] + [2] * (2 * len(axes)))
    # outer product (batch, A_out*A_in) x (R_out*R_in), then interleave axes
    full = g.reshape(b, -1)[:, :, None] * eye.reshape(-1)[None, None, :]
    full = full.reshape([b] + [2] * (2 * len(axes)) + [2] * (2 * len(rest)))
    k, r = len(axes), len(rest)
    out_order, in_order = [0] * n_sites, [0] * n_sites
    for i, a in enumerate(axes):
        out_order[a] = 1 + i
        in_order[a] = 1 + k + i
    for i, a in enumerate(rest):
        out_order[a] = 1 + 2 * k + i
        in_order[a] = 1 + 2 * k + r + i
    full = full.transpose([0] + out_order + in_order)
    d = 2 ** n_sites
    return full.reshape(b, d, d)


def _batched_weyl_coeffs(rho_batch, n_sites):
    """All Weyl coefficients of a batch of density matrices, via the same
    generalized-diagonal DFT used by weyl.decompose."""
    b = rho_batch.shape[0]
    d = 2 ** n_sites
    tens = rho_batch.reshape([b] + [2] * (2 * n_sites))
    diag_spec = [0] + list(range(1, n_sites + 1)) * 2
    out_spec = list(range(n_sites + 1))
    coeffs = np.empty((b, d, d), dtype=complex)
    for mi, m in enumerate(product(range(2), repeat=n_sites)):
        rolled = tens
        for ax, s in enumerate(m):
            if s:
                rolled = np.roll(rolled, -s, axis=1 + ax)
        diag = np.einsum(rolled, diag_spec, out_spec)
        coeffs[:, mi, :] = np.fft.fftn(diag, axes=tuple(range(1, n_sites + 1))) \
            .reshape(b, d) / d
    return coeffs.reshape(b, d * d)


def _sample_bond_gates(block_partition, block_size, rng):
    """Batch of block-diagonal two-site gates with per-block Haar draws."""
    gates = np.zeros((block_size, 4, 4), dtype=complex)
    for blk in block_partition:
        idx = np.asarray(blk)
        gates[:, idx[:, None], idx[None, :]] = haar_unitaries(len(blk), block_size, rng)
    return gates


def _tmat_block(args):
    (block_id, block_size, n_sites, steps, gamma, seed, rho0_flat, partition) = args
    rng = rngmod.stream(seed, 1 + block_id)
    d = 2 ** n_sites
    rho0 = np.asarray(rho0_flat, dtype=complex).reshape(d, d)
    rho = np.broadcast_to(rho0, (block_size, d, d)).copy()
    even, odd = _brickwork_bonds(n_sites)
    meas_unitaries = []
    for site in range(n_sites):
        latt = SpacetimeLattice(n_sites, 2, (Register(site, 1, 2),))
        spec = MeasurementSpec((site,), (np.diag([1.0, 0.0]), np.diag([0.0, 1.0])),
                               (1.0, -1.0), 0)
        meas_unitaries.append(build_measurement_unitary(spec, latt))
    for _ in range(steps):
        for bonds in (even, odd):
            layer = None
            for bond in bonds:
                g = _sample_bond_gates(partition, block_size, rng)
                emb = _embed_batched(g, list(bond), n_sites)
                layer = emb if layer is None else emb @ layer
            rho = (layer @ rho) @ layer.conj().transpose(0, 2, 1)
        for site in range(n_sites):
            mask = rng.random(block_size) < gamma
            if not mask.any():
                continue
            sub = rho[mask]
            m = sub.shape[0]
            # attach a fresh register in |0>, apply the dilated measurement
            # unitary, and trace the register out again
            dil = np.zeros((m, d, 2, d, 2), dtype=complex)
            dil[:, :, 0, :, 0] = sub
            u = meas_unitaries[site]
            dil = dil.reshape(m, 2 * d, 2 * d)
            dil = (u @ dil) @ u.conj().T
            rho[mask] = np.einsum("bxmym->bxy", dil.reshape(m, d, 2, d, 2))
    coeffs = _batched_weyl_coeffs(rho, n_sites)
    return coeffs.sum(axis=0), (np.abs(coeffs) ** 2).sum(axis=0)


def tmat_check(n_sites=4, steps=2, gamma=0.5, realizations=10000, seed=0,
               workers=1, blocks="generic"):
    """Criterion-style oracle check: exact dilated Monte Carlo of the
    outcome-averaged density matrix versus the transition-matrix circuit.

    The circuit per step is a periodic brickwork of two-site Haar gates
    (generic or charge-conserving blocks; even then odd bonds) followed by
    one round of per-site Z measurements, each performed with probability
    gamma.
    """
    d = 2 ** n_sites
    sites = tuple(range(n_sites))
    rng0 = rngmod.stream(seed, 0)
    # fixed random pure product initial state
    rho0 = np.ones((1, 1), dtype=complex)
    for _ in range(n_sites):
        v = rng0.standard_normal(2) + 1j * rng0.standard_normal(2)
        v /= np.linalg.norm(v)
        rho0 = np.kron(rho0, np.outer(v, v.conj()))

    if blocks == "generic":
        partition = ((0, 1, 2, 3),)
    elif blocks == "u1":
        partition = ((0,), (1, 2), (3,))
    else:
        raise ValueError(f"unknown block structure {blocks!r}")

    n_blocks = (realizations + TMAT_BLOCK - 1) // TMAT_BLOCK
    sizes = [min(TMAT_BLOCK, realizations - k * TMAT_BLOCK) for k in range(n_blocks)]
    tasks = [(k, sizes[k], n_sites, steps, gamma, seed, rho0.ravel(), partition)
             for k in range(n_blocks)]
    parts = _pool_map(_tmat_block, tasks, workers)
    total = np.zeros(d * d, dtype=complex)
    total_sq = np.zeros(d * d, dtype=float)
    for s, s2 in parts:
        total += s
        total_sq += s2
    n = realizations
    mean = total / n
    var = np.maximum(total_sq / n - np.abs(mean) ** 2, 0.0)
    stderr = np.sqrt(var / n)

    # transition-matrix prediction on the same circuit
    even, odd = _brickwork_bonds(n_sites)
    ge = tgate_evo_generic(2, 2) if blocks == "generic" else \
        tgate_evo_blocks(2, [[(0, 0)], [(0, 1), (1, 0)], [(1, 1)]])
    meas = bernoulli_mix(tgate_meas_nondegenerate(2), gamma)
    layers = []
    for _ in range(steps):
        layers.append([(ge, bond) for bond in even])
        layers.append([(ge, bond) for bond in odd])
        layers.append([(meas, (s,)) for s in sites])
    circuit = compose(layers)
    vec = evolve(circuit, decompose(rho0, 2, sites))

    indices = [WeylIndex(m, n, 2, sites)
               for m in product(range(2), repeat=n_sites)
               for n in product(range(2), repeat=n_sites)]
    predicted = np.array([vec.coeff(ix) for ix in indices])
    result = TmatCheckResult(mean, stderr, predicted, indices, n, 0.0)
    result.max_z = float(result.z_scores().max())
    return result
