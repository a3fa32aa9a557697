"""Spectral form factors for hybrid Floquet circuits.

K(t) = |tr F^t|^2 probes eigenphase rigidity; the CUE prediction is the
linear ramp K = t up to the Heisenberg time.  For circuits with projective
measurements the postselected variant joins the outcome registers of the
two trace copies through a swap, which reduces to a sum over outcome
trajectories of squared physical traces,

    K_post(t) = sum_m |tr_ph[ prod_s P^(m_s) W_s ]|^2 ,

evaluated here exactly per realization (no outcome sampling).  A dense
dilated evaluation on an exactly sized register lattice serves as the
oracle; the per-register outcome sums contribute one factor of the register
dimension each, which the dense path divides out so that both paths agree
and the measurement-free limit reduces to the physical form factor.
"""

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numpy as np

from . import rng as rngmod
from .dilated import (BlockGateSpec, DilatedState, MeasurementSpec, Register,
                      SpacetimeLattice, assemble_block_gate, build_floquet,
                      embed_operator, haar_unitary, sample_haar_block_gate)

__all__ = [
    "SffCurve", "HybridPeriodSpec", "PeriodMeasurement",
    "sff_unitary", "sff_postselected", "sff_reset", "sff_transition",
    "sff_state_dependent", "sff_isometric_diagnostics",
    "state_space_tgate", "cue_unitary", "thouless_time", "write_curve_csv",
    "sample_period",
]

BATCH_BUDGET = 1 << 16  # max outcome-trajectory batch for the exact sum


@dataclass
class SffCurve:
    """Ensemble-averaged form-factor curve with standard errors."""
    times: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    variant: str
    realizations: int = 1
    seed: int = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=int)
        self.values = np.asarray(self.values, dtype=float)
        self.errors = np.asarray(self.errors, dtype=float)


def cue_unitary(n, rng):
    """Circular-unitary-ensemble sample (alias for the Haar sampler)."""
    return haar_unitary(n, rng)


def sff_unitary(f, t_max, include_t0=True):
    """Single-realization K(t) = |tr F^t|^2 via eigenphase sums.

    K(0) equals the squared matrix dimension exactly.
    """
    f = np.asarray(f, dtype=complex)
    d = f.shape[0]
    if not np.allclose(f @ f.conj().T, np.eye(d), atol=1e-9):
        raise ValueError("Floquet operator is not unitary")
    lam = np.linalg.eigvals(f)
    times = np.arange(0 if include_t0 else 1, t_max + 1)
    values = np.empty(len(times), dtype=float)
    for i, t in enumerate(times):
        if t == 0:
            values[i] = float(d) ** 2
        else:
            values[i] = float(np.abs(np.sum(lam ** t)) ** 2)
    return SffCurve(times, values, np.zeros_like(values), "unitary")


@dataclass(frozen=True)
class PeriodMeasurement:
    """Measurement template inside one Floquet period: cluster plus the
    eigenspace projectors (on the cluster space)."""
    cluster: tuple
    projectors: tuple

    def __post_init__(self):
        object.__setattr__(self, "cluster", tuple(self.cluster))
        object.__setattr__(self, "projectors",
                           tuple(np.asarray(p, dtype=complex) for p in self.projectors))


@dataclass(frozen=True)
class HybridPeriodSpec:
    """One Floquet period: ordered elements ("evo", [BlockGateSpec, ...]) or
    ("meas", [PeriodMeasurement, ...]).  Unitaries are drawn fresh per
    realization; the measurement pattern is fixed."""
    n_sites: int
    q: int
    elements: tuple

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))

    @property
    def meas_rounds(self):
        return [el[1] for el in self.elements if el[0] == "meas"]

    @property
    def measurements_per_period(self):
        return sum(len(r) for r in self.meas_rounds)


def sample_period(spec, rng):
    """Draw one realization: ordered list of ("U", dense physical layer) and
    ("P", [list over templates of per-outcome embedded projectors])."""
    dims = [spec.q] * spec.n_sites
    d = spec.q ** spec.n_sites
    out = []
    for kind, payload in spec.elements:
        if kind == "evo":
            layer = np.eye(d, dtype=complex)
            for bspec in payload:
                gate = assemble_block_gate(sample_haar_block_gate(bspec, rng))
                layer = embed_operator(gate, list(bspec.cluster), dims) @ layer
            out.append(("U", layer))
        elif kind == "meas":
            projs = []
            for tpl in payload:
                projs.append([embed_operator(p, list(tpl.cluster), dims)
                              for p in tpl.projectors])
            out.append(("P", projs))
        else:
            raise ValueError(f"unknown period element {kind!r}")
    return out


def physical_unitary(period):
    """Product of the unitary layers of a sampled period (gamma = 0 limit)."""
    w = None
    for kind, payload in period:
        if kind == "U":
            w = payload if w is None else payload @ w
    if w is None:
        raise ValueError("period has no unitary layers")
    return w


def _trajectory_curve(period, t_max, d, rho0=None, batch_budget=BATCH_BUDGET):
    """Exact outcome-trajectory sum for one sampled period.

    Returns K(t), t = 1..t_max, with K(t) = sum over outcome assignments of
    |tr(X)|^2 where X accumulates P^(m) W products (times rho0 if given).
    """
    start = np.eye(d, dtype=complex) if rho0 is None else np.asarray(rho0, dtype=complex)
    batch = start[None, :, :].copy()
    values = np.empty(t_max, dtype=float)
    for t in range(1, t_max + 1):
        for kind, payload in period:
            if kind == "U":
                batch = payload @ batch
            else:
                for projs in payload:
                    if batch.shape[0] * len(projs) > batch_budget:
                        raise MemoryError(
                            "outcome-trajectory batch exceeds budget; "
                            "lower t_max or the number of measurements")
                    batch = np.concatenate([p @ batch for p in projs], axis=0)
        traces = np.einsum("bii->b", batch)
        values[t - 1] = float(np.sum(np.abs(traces) ** 2))
    return values


def _ensemble(curve_fn, t_max, realizations, seed, variant, include_t0=False):
    """Average single-realization curves drawn from per-realization streams."""
    acc = np.zeros((realizations, t_max), dtype=float)
    for k in range(realizations):
        acc[k] = curve_fn(rngmod.stream(seed, k))
    mean = acc.mean(axis=0)
    err = acc.std(axis=0, ddof=1) / np.sqrt(realizations) if realizations > 1 \
        else np.zeros(t_max)
    return SffCurve(np.arange(1, t_max + 1), mean, err, variant, realizations, seed)


def sff_postselected(spec, t_max, realizations, seed, batch_budget=BATCH_BUDGET):
    """Ensemble-averaged postselected hybrid SFF (exact per realization).

    With no measurement rounds this is bit-identical to `sff_unitary` of the
    physical period unitary (same eigenphase pathway).
    """
    d = spec.q ** spec.n_sites
    if not spec.meas_rounds:
        def one(rng):
            w = physical_unitary(sample_period(spec, rng))
            return sff_unitary(w, t_max, include_t0=False).values
        return _ensemble(one, t_max, realizations, seed, "postselected")

    def one(rng):
        period = sample_period(spec, rng)
        return _trajectory_curve(period, t_max, d, batch_budget=batch_budget)
    return _ensemble(one, t_max, realizations, seed, "postselected")


def sff_state_dependent(spec, rho0_ph, t_max, realizations, seed,
                        batch_budget=BATCH_BUDGET):
    """State-dependent SFF D^2 * mean |tr(rho0 W(t))|^2.

    With rho0 = I/D this reduces to the standard (postselected) form; with
    measurements the outcome registers of the two copies are joined as in
    `sff_postselected`.
    """
    d = spec.q ** spec.n_sites
    rho0 = np.asarray(rho0_ph, dtype=complex)
    if abs(np.trace(rho0) - 1.0) > 1e-9:
        raise ValueError("initial density matrix must have unit trace")

    def one(rng):
        period = sample_period(spec, rng)
        return d ** 2 * _trajectory_curve(period, t_max, d, rho0=rho0,
                                          batch_budget=batch_budget)
    return _ensemble(one, t_max, realizations, seed, "state-dependent")


# ---------------------------------------------------------------------------
# dense dilated evaluations (oracles and diagnostics)

def _per_t_lattice(spec, t):
    """Exactly sized register lattice for t periods: one slice per round."""
    rounds = spec.meas_rounds
    registers = []
    for tau in range(1, len(rounds) * t + 1):
        rnd = rounds[(tau - 1) % len(rounds)]
        for tpl in rnd:
            registers.append(Register(tpl.cluster[0], tau, len(tpl.projectors)))
    return SpacetimeLattice(spec.n_sites, spec.q, tuple(registers))


def _dense_floquet(spec, period, lattice):
    """Dense Floquet operator for one sampled period on the given lattice.

    Measurements write into the slice-1 registers and every round is
    followed by the cyclic slice shift.
    """
    from .dilated import build_measurement_unitary, time_shift
    regs_by_layer = {}
    for i, r in enumerate(lattice.registers):
        regs_by_layer.setdefault(r.layer, []).append(i)
    slice1 = regs_by_layer[1]
    total = np.eye(lattice.dim, dtype=complex)
    dims = lattice.dims
    for (kind, payload), (_skind, sampled) in zip(spec.elements, period):
        if kind == "evo":
            total = embed_operator(sampled, list(range(spec.n_sites)), dims) @ total
        else:
            for j, tpl in enumerate(payload):
                ms = MeasurementSpec(tpl.cluster, tpl.projectors,
                                     tuple(range(len(tpl.projectors))), slice1[j])
                total = build_measurement_unitary(ms, lattice) @ total
            total = time_shift(lattice) @ total
    return total


def _sampled_physical_layers(spec, period):
    """The ("U", layer) payloads of a sampled period, in order."""
    return [payload for kind, payload in period if kind == "U"]


def sff_postselected_dense(spec, t_max, realizations, seed):
    """Dense-oracle postselected SFF: tr_ss[(tr_ph F^t)(tr_ph F^-t)] on an
    exactly sized lattice, divided by the product of register dimensions."""
    values = np.zeros((realizations, t_max), dtype=float)
    for k in range(realizations):
        rng = rngmod.stream(seed, k)
        period = sample_period(spec, rng)
        for t in range(1, t_max + 1):
            lattice = _per_t_lattice(spec, t)
            f = _dense_floquet(spec, period, lattice)
            ft = np.linalg.matrix_power(f, t)
            d_ph = lattice.physical_dim
            d_ss = lattice.dim // d_ph
            g = ft.reshape(d_ph, d_ss, d_ph, d_ss)
            a = np.einsum("aman->mn", g)  # physical trace of F^t, ss operator
            norm = 1
            for r in lattice.registers:
                norm *= r.levels
            values[k, t - 1] = float(np.real(np.trace(a @ a.conj().T))) / norm
    mean = values.mean(axis=0)
    err = values.std(axis=0, ddof=1) / np.sqrt(realizations) if realizations > 1 \
        else np.zeros(t_max)
    return SffCurve(np.arange(1, t_max + 1), mean, err, "postselected", realizations, seed)


def _reset_operator(spec, lattice):
    """Reset of the slice-1 registers to |0>: product of sum_m |0><m|."""
    total = np.eye(lattice.dim, dtype=complex)
    for i, r in enumerate(lattice.registers):
        if r.layer != 1:
            continue
        reset = np.zeros((r.levels, r.levels), dtype=complex)
        reset[0, :] = 1.0
        total = embed_operator(reset, [lattice.register_axis(i)], lattice.dims) @ total
    return total


def sff_reset(spec, t_max, realizations, seed):
    """Hybrid SFF with each register reset to |0> before its measurement.

    The register trace loops evaluate to one, so per realization the result
    equals the measurement-free SFF of the period's unitary layers.
    """
    values = np.zeros((realizations, t_max), dtype=float)
    for k in range(realizations):
        rng = rngmod.stream(seed, k)
        period = sample_period(spec, rng)
        for t in range(1, t_max + 1):
            lattice = _per_t_lattice(spec, t)
            f = _dense_floquet(spec, period, lattice)
            fr = f @ _reset_operator(spec, lattice)
            tr = np.trace(np.linalg.matrix_power(fr, t))
            values[k, t - 1] = float(np.abs(tr) ** 2)
    mean = values.mean(axis=0)
    err = values.std(axis=0, ddof=1) / np.sqrt(realizations) if realizations > 1 \
        else np.zeros(t_max)
    return SffCurve(np.arange(1, t_max + 1), mean, err, "reset", realizations, seed)


def sff_isometric_diagnostics(spec, t_max, realizations, seed):
    """Diagnostic (non-physical) in/out isometric SFF candidates.

    K_in postselects identical outcome trajectories created inward and is
    expected to fall far below the CUE ramp; K_out is trivially blind to
    measurements.  Excluded from acceptance; small systems only.
    """
    k_in = np.zeros((realizations, t_max), dtype=float)
    k_out = np.zeros((realizations, t_max), dtype=complex)
    for k in range(realizations):
        rng = rngmod.stream(seed, k)
        period = sample_period(spec, rng)
        for t in range(1, t_max + 1):
            lattice = _per_t_lattice(spec, t)
            f = _dense_floquet(spec, period, lattice)
            ft = np.linalg.matrix_power(f, t)
            d_ph = lattice.physical_dim
            d_ss = lattice.dim // d_ph
            g = ft.reshape(d_ph, d_ss, d_ph, d_ss)
            block_traces_m0 = np.einsum("amao->mo", g)[:, 0]
            block_traces_0n = np.einsum("amao->mo", g)[0, :]
            k_in[k, t - 1] = float(np.sum(np.abs(block_traces_m0) ** 2))
            k_out[k, t - 1] = np.sum(block_traces_m0) * np.sum(block_traces_0n)
    times = np.arange(1, t_max + 1)
    cin = SffCurve(times, k_in.mean(axis=0),
                   k_in.std(axis=0, ddof=1) / np.sqrt(max(realizations - 1, 1)),
                   "isometric-in", realizations, seed)
    cout = SffCurve(times, np.real(k_out).mean(axis=0),
                    np.real(k_out).std(axis=0, ddof=1) / np.sqrt(max(realizations - 1, 1)),
                    "isometric-out", realizations, seed)
    return cin, cout


# ---------------------------------------------------------------------------
# transition-matrix form factor

def state_space_tgate(q, blocks, length, exact=False):
    """State-space transfer gate sum_a (1/n_a) sum_{a,b in block} |a><b|.

    The operator-space evolution gate with normalized projectors replaced by
    the q^l cluster states.
    """
    d = q ** length
    if exact:
        mat = [[Fraction(0) for _ in range(d)] for _ in range(d)]
        for blk in blocks:
            w = Fraction(1, len(blk))
            for a in blk:
                for b in blk:
                    mat[a][b] += w
        return mat
    mat = np.zeros((d, d), dtype=float)
    for blk in blocks:
        w = 1.0 / len(blk)
        for a in blk:
            for b in blk:
                mat[a][b] += w
    return mat


def _embed_state_gate(gate, cluster, n_sites, q, exact=False):
    """Lift a cluster transfer gate to the full q^N state space."""
    d = q ** n_sites
    length = len(cluster)
    weights = [q ** (n_sites - 1 - s) for s in range(n_sites)]
    if exact:
        full = [[Fraction(0) for _ in range(d)] for _ in range(d)]
    else:
        full = np.zeros((d, d), dtype=float)
    for s in range(d):
        digits = [(s // weights[i]) % q for i in range(n_sites)]
        c_in = 0
        for site in cluster:
            c_in = c_in * q + digits[site]
        for c_out in range(q ** length):
            val = gate[c_out][c_in] if exact else gate[c_out, c_in]
            if not val:
                continue
            out_digits = list(digits)
            rem = c_out
            for site in reversed(cluster):
                out_digits[site] = rem % q
                rem //= q
            s_out = sum(w * dg for w, dg in zip(weights, out_digits))
            if exact:
                full[s_out][s] += val
            else:
                full[s_out, s] += val
    return full


def _mat_mul(a, b, exact):
    if not exact:
        return a @ b
    n = len(a)
    out = [[Fraction(0) for _ in range(n)] for _ in range(n)]
    for i in range(n):
        ai = a[i]
        oi = out[i]
        for k in range(n):
            v = ai[k]
            if v:
                bk = b[k]
                for j in range(n):
                    if bk[j]:
                        oi[j] += v * bk[j]
    return out


def sff_transition(layer_blockspecs, n_sites, q, t_max, exact=False):
    """K(t) = t * tr(T^t) from the single-period state-space transfer matrix.

    `layer_blockspecs` is a list of layers, each a list of BlockGateSpec
    (frozen blocks are not supported here: every block must carry Haar
    dynamics).  With exact=True all arithmetic is rational and the generic
    ramp K(t) = t is reproduced exactly.  t = 0 is reported as 0 by
    convention (the formula's domain is t >= 1).
    """
    d = q ** n_sites
    if exact:
        trans = None
        for layer in layer_blockspecs:
            lay = [[Fraction(1) if i == j else Fraction(0) for j in range(d)]
                   for i in range(d)]
            for bspec in layer:
                if bspec.frozen:
                    raise ValueError("frozen blocks are outside the transfer-matrix formula")
                gate = state_space_tgate(q, bspec.blocks, len(bspec.cluster), exact=True)
                lay = _mat_mul(_embed_state_gate(gate, bspec.cluster, n_sites, q, True),
                               lay, True)
            trans = lay if trans is None else _mat_mul(lay, trans, True)
        power = [[Fraction(1) if i == j else Fraction(0) for j in range(d)]
                 for i in range(d)]
        values, times = [0.0], [0]
        exact_values = [Fraction(0)]
        for t in range(1, t_max + 1):
            power = _mat_mul(trans, power, True)
            tr = sum(power[i][i] for i in range(d))
            exact_values.append(t * tr)
            values.append(float(t * tr))
            times.append(t)
        curve = SffCurve(np.array(times), np.array(values), np.zeros(len(times)),
                         "transition")
        curve.exact_values = exact_values
        return curve
    trans = np.eye(d)
    for layer in layer_blockspecs:
        lay = np.eye(d)
        for bspec in layer:
            if bspec.frozen:
                raise ValueError("frozen blocks are outside the transfer-matrix formula")
            gate = state_space_tgate(q, bspec.blocks, len(bspec.cluster))
            lay = _embed_state_gate(gate, bspec.cluster, n_sites, q) @ lay
        trans = lay @ trans
    power = np.eye(d)
    values = [0.0]
    for t in range(1, t_max + 1):
        power = trans @ power
        values.append(t * float(np.trace(power)))
    return SffCurve(np.arange(0, t_max + 1), np.array(values),
                    np.zeros(t_max + 1), "transition")


def thouless_time(curve, rtol=0.2):
    """Earliest time with |K(t)/t - 1| < rtol persisting to the end of the
    curve; None when the ramp is never reached."""
    mask = np.abs(curve.values / np.maximum(curve.times, 1) - 1.0) < rtol
    mask &= curve.times >= 1
    for i in range(len(mask)):
        if curve.times[i] >= 1 and mask[i:].all():
            return int(curve.times[i])
    return None


def write_curve_csv(curve, path):
    """Emit (variant, t, K_mean, K_stderr, realizations, seed) rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "t", "K_mean", "K_stderr", "realizations", "seed"])
        for t, v, e in zip(curve.times, curve.values, curve.errors):
            w.writerow([curve.variant, int(t), repr(float(v)), repr(float(e)),
                        curve.realizations, curve.seed])
