"""Stochastic Heisenberg-picture sampling of adaptive circuits.

Under charge-conserving or East-constrained Haar gates plus measure-Z-then-
flip feedback, the ensemble- and outcome-averaged evolution of Z-string
operators closes on classical bit strings b (bit j set = a Z factor on
site j):

  U(1) bond:  a single Z on a bond hops with probability 1/2; I and ZZ are
              stationary.
  East bond (j, j+1): nothing happens unless b_j = 1, in which case b_{j+1}
              is resampled uniformly from {0, 1}.
  feedback:   each site is measured with probability gamma per sweep and its
              bit cleared.

The all-zero string is absorbing.  X/Y content is never generated from
Z-string initial operators under these rules, so it needs no representation.
One time step = one bond layer (parities alternating) plus one measurement
sweep, so an isolated bit decays at exactly rate gamma per step; a
brickwork variant with both layers per step is exposed as an option but
does not enter acceptance.  The defect density relative to the absorbing
state is half the surviving fraction of single-seed trajectories.
"""

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import rng as rngmod

__all__ = [
    "ProtocolParams", "TrajectoryState", "DensityCurve",
    "ssep_bond_update", "east_bond_update", "adaptive_measure_sweep",
    "run_trajectory", "defect_density", "survival_counts",
    "diffusive_kernel", "kernel_fraction", "ssep_enumerate", "ssep_walk_positions",
    "fit_decay_rate", "write_density_csv", "write_absorption_dump",
]

COMPACT_EVERY = 32  # drop absorbed trajectories from the batch at this cadence


@dataclass(frozen=True)
class ProtocolParams:
    """Adaptive-circuit Monte Carlo parameters.

    gamma is the per-site per-step measurement probability.  With the
    default "layer" interleaving one time step is a single brickwork bond
    layer (parity alternating step to step) followed by one measurement
    sweep, so an isolated bit survives exactly (1 - gamma)^t.  The
    alternative "brickwork" interleaving packs both bond layers into one
    step before a single sweep; only the default enters acceptance.
    """
    model: str
    L: int
    gamma: float
    t_max: int
    samples: int
    seed: int
    boundary: str = "periodic"
    interleaving: str = "layer"
    seed_site: int = 0

    def __post_init__(self):
        if self.model not in ("u1", "east"):
            raise ValueError(f"unknown model {self.model!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.L < 2:
            raise ValueError("need at least two sites")
        if self.boundary not in ("periodic", "open"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.boundary == "periodic" and self.L % 2:
            raise ValueError("periodic brickwork needs even L")
        if self.interleaving not in ("layer", "brickwork"):
            raise ValueError(f"unknown interleaving {self.interleaving!r}")


@dataclass
class TrajectoryState:
    """Single-trajectory state: bit string, step counter, private stream."""
    bits: np.ndarray
    step: int
    rng: np.random.Generator

    @classmethod
    def single_seed(cls, params, j0=None, index=0):
        bits = np.zeros(params.L, dtype=np.uint8)
        bits[params.seed_site if j0 is None else j0] = 1
        return cls(bits, 0, rngmod.stream(params.seed, index))

    @property
    def absorbed(self):
        return not self.bits.any()


@dataclass
class DensityCurve:
    """Defect density n_d(t) with binomial standard errors."""
    times: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    params: ProtocolParams

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=int)
        self.values = np.asarray(self.values, dtype=float)
        self.errors = np.asarray(self.errors, dtype=float)


def _bonds(L, parity, boundary):
    """Bond (j, j+1) west-site indices for the given layer parity."""
    js = np.arange(parity, L - 1, 2)
    if boundary == "periodic" and parity == 1 and L % 2 == 0:
        js = np.append(js, L - 1)  # wrap bond (L-1, 0)
    return js


def ssep_bond_update(state, bond):
    """U(1) rule on one bond: a lone Z hops with probability 1/2."""
    j, k = bond[0] % len(state.bits), bond[1] % len(state.bits)
    a, b = state.bits[j], state.bits[k]
    if a != b and state.rng.integers(0, 2):
        state.bits[j], state.bits[k] = b, a
    return state


def east_bond_update(state, bond):
    """East rule on one bond: b_j = 1 resamples b_{j+1} uniformly."""
    j, k = bond[0] % len(state.bits), bond[1] % len(state.bits)
    if state.bits[j]:
        state.bits[k] = state.rng.integers(0, 2)
    return state


def adaptive_measure_sweep(state, gamma):
    """Measure-and-flip feedback: each bit cleared with probability gamma."""
    if gamma > 0.0:
        mask = state.rng.random(len(state.bits)) < gamma
        state.bits[mask] = 0
    return state


def run_trajectory(params, j0=None, index=0, record_history=False):
    """Run one single-seed trajectory to absorption or t_max.

    Returns (absorption_step, history); absorption_step is t_max + 1 when
    the trajectory is still active after t_max steps (sentinel).  The
    trajectory is a deterministic function of (params.seed, index).
    """
    state = TrajectoryState.single_seed(params, j0=j0, index=index)
    update = ssep_bond_update if params.model == "u1" else east_bond_update
    brickwork = params.interleaving == "brickwork"
    history = [state.bits.copy()] if record_history else None
    for t in range(1, params.t_max + 1):
        parities = (0, 1) if brickwork else ((t - 1) % 2,)
        for parity in parities:
            for j in _bonds(params.L, parity, params.boundary):
                update(state, (j, j + 1))
        adaptive_measure_sweep(state, params.gamma)
        state.step = t
        if record_history:
            history.append(state.bits.copy())
        if state.absorbed:
            return t, history
    return params.t_max + 1, history


def _apply_bond_layer(bits, coins, bonds, L, model):
    """One brickwork bond layer on a (n, L) bool array; `coins` holds the
    fair bits at the bonds' west-site columns."""
    src = bits[:, bonds]
    tgt_idx = (bonds + 1) % L
    tgt = bits[:, tgt_idx]
    layer_coins = coins[:, bonds]
    if model == "east":
        bits[:, tgt_idx] = np.where(src, layer_coins, tgt)
    else:
        do_swap = (src != tgt) & layer_coins
        bits[:, bonds] = np.where(do_swap, tgt, src)
        bits[:, tgt_idx] = np.where(do_swap, src, bits[:, tgt_idx])
    return bits


def survival_counts(params, progress=None):
    """Active-trajectory counts at t = 0..t_max plus absorption steps.

    Vectorized over all trajectories of the run in one Philox stream, so
    results are independent of scheduling; absorbed trajectories are
    compacted away periodically.  One uint16 word per (trajectory, site,
    step drawing randomness) supplies independent fields: bit 0 the bond
    coins, the upper 15 bits the measurement draw.
    """
    n, L = params.samples, params.L
    rng = rngmod.stream(params.seed, 0)
    bits = np.zeros((n, L), dtype=bool)
    bits[:, params.seed_site % L] = True
    bonds = {p: _bonds(L, p, params.boundary) for p in (0, 1)}
    brickwork = params.interleaving == "brickwork"
    thresh = np.uint16(int(params.gamma * 32768))
    counts = np.empty(params.t_max + 1, dtype=np.int64)
    counts[0] = n
    absorption = np.full(n, params.t_max + 1, dtype=np.int64)
    active_idx = np.arange(n)
    for t in range(1, params.t_max + 1):
        if bits.shape[0] == 0:
            counts[t:] = 0
            break
        words = rng.integers(0, 65536, size=bits.shape, dtype=np.uint16)
        coins = (words & 1).astype(bool)
        parities = (0, 1) if brickwork else ((t - 1) % 2,)
        for parity in parities:
            _apply_bond_layer(bits, coins, bonds[parity], L, params.model)
        if params.gamma > 0.0:
            bits &= ~((words >> 1) < thresh)
        alive = bits.any(axis=1)
        newly_dead = ~alive & (absorption[active_idx] > params.t_max)
        absorption[active_idx[newly_dead]] = t
        counts[t] = int(alive.sum())
        if t % COMPACT_EVERY == 0:
            bits = bits[alive]
            active_idx = active_idx[alive]
        if progress is not None:
            progress(t, counts[t])
    return counts, absorption


def defect_density(params):
    """Defect density n_d(t) = (active fraction)/2 from single-seed sampling.

    Translation invariance makes one seed site representative of the site
    average; errors are binomial.
    """
    if params.samples < 1:
        raise ValueError("need at least one trajectory")
    counts, absorption = survival_counts(params)
    frac = counts / params.samples
    err = np.sqrt(np.maximum(frac * (1 - frac), 0.0) / params.samples) / 2.0
    curve = DensityCurve(np.arange(params.t_max + 1), frac / 2.0, err, params)
    curve.absorption = absorption
    return curve


# ---------------------------------------------------------------------------
# diffusive kernel of the U(1) model

def _kernel_lower_index(r, t):
    rr = abs(r) + (1 if r <= 0 else 0)
    # floor(t - rr/2) with integer arithmetic
    return t - (rr + 1) // 2


def diffusive_kernel(r, t):
    """Infinite-temperature diffusive kernel of the brickwork SSEP.

    f(r, t) = 4^(-t) * C(2t - 1, floor(t - |r|/2)), with |r| -> |r| + 1 for
    r <= 0; evaluated in log space, zero when the lower index is negative.
    The seed sits on the west site of an even bond and even bonds act first.
    """
    if t < 1:
        raise ValueError("kernel is defined for t >= 1")
    k = _kernel_lower_index(r, t)
    if k < 0 or k > 2 * t - 1:
        return 0.0
    log_binom = math.lgamma(2 * t) - math.lgamma(k + 1) - math.lgamma(2 * t - k)
    return math.exp(log_binom - t * math.log(4.0))


def kernel_fraction(r, t):
    """Exact rational value of the diffusive kernel."""
    if t < 1:
        raise ValueError("kernel is defined for t >= 1")
    k = _kernel_lower_index(r, t)
    if k < 0 or k > 2 * t - 1:
        return Fraction(0)
    return Fraction(math.comb(2 * t - 1, k), 4 ** t)


def ssep_enumerate(t):
    """Exact displacement distribution of one walker under the brickwork
    SSEP (infinite lattice, seed at an even site, even bonds first)."""
    dist = {0: Fraction(1)}
    for _ in range(t):
        for parity in (0, 1):
            new = {}
            for pos, p in dist.items():
                partner = pos + 1 if pos % 2 == parity else pos - 1
                new[pos] = new.get(pos, Fraction(0)) + p / 2
                new[partner] = new.get(partner, Fraction(0)) + p / 2
            dist = new
    return dist


def ssep_walk_positions(t, n, rng):
    """Monte Carlo displacement samples of the single SSEP walker."""
    pos = np.zeros(n, dtype=np.int64)
    for _ in range(t):
        for parity in (0, 1):
            coins = rng.integers(0, 2, size=n).astype(bool)
            partner = np.where(pos % 2 == parity, pos + 1, pos - 1)
            pos = np.where(coins, partner, pos)
    return pos


def fit_decay_rate(curve, t_min=1, t_max=None, min_count=10):
    """Per-step decay rate of n_d from a weighted log-linear fit.

    Fits ln n_d = a + s t and reports the discrete-time hazard
    rate = 1 - e^s (the per-step decay probability), its standard error,
    and the raw slope.  Points with too few surviving trajectories are
    dropped.
    """
    params = curve.params
    t_max = params.t_max if t_max is None else t_max
    n = params.samples
    counts = np.round(curve.values * 2 * n).astype(int)
    mask = (curve.times >= t_min) & (curve.times <= t_max) & (counts >= min_count)
    t = curve.times[mask].astype(float)
    y = np.log(curve.values[mask])
    sig = curve.errors[mask] / curve.values[mask]
    w = 1.0 / sig ** 2
    wx = np.sum(w * t)
    wy = np.sum(w * y)
    wxx = np.sum(w * t * t)
    wxy = np.sum(w * t * y)
    ws = np.sum(w)
    denom = ws * wxx - wx ** 2
    slope = (ws * wxy - wx * wy) / denom
    slope_err = math.sqrt(ws / denom)
    rate = 1.0 - math.exp(slope)
    rate_err = math.exp(slope) * slope_err
    return rate, rate_err, slope


def write_density_csv(curves, path):
    """Emit (model, L, gamma, t, n_d, stderr, samples, seed) rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "L", "gamma", "t", "n_d", "stderr", "samples", "seed"])
        for c in curves:
            p = c.params
            for t, v, e in zip(c.times, c.values, c.errors):
                w.writerow([p.model, p.L, repr(p.gamma), int(t), repr(float(v)),
                            repr(float(e)), p.samples, p.seed])


def write_absorption_dump(curve, path):
    """Raw absorption steps, one integer per trajectory (t_max+1 = active)."""
    with open(path, "w") as fh:
        for step in curve.absorption:
            fh.write(f"{int(step)}\n")
