"""Seeded Monte-Carlo sampling of the covariance chain, and its analytics.

Reproducibility protocol: every chain owns a private bit stream derived from
(master seed, chain index) through numpy's SeedSequence, so results are
bit-identical regardless of batching, thread count, or evaluation order.  A
sweep over arrival rates derives per-gridpoint master seeds the same way,
(master seed, gridpoint index).

Chains advance in lockstep as a stacked array of covariances; that keeps the
per-step cost at a handful of vectorized matrix products even for tens of
thousands of chains.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .linalg import SymMatrix, as_sym, spectral_norm
from .operators import lyapunov_step, riccati_step, uniform_bound_kappa
from .rate import EventPredicate
from .operators import solve_dare


@dataclass(frozen=True)
class SimulationConfig:
    """Knobs of one sampling run.

    p0 of None means "use the model's P0".  The seed may be an int or a tuple
    of ints; tuples are how sweeps hand out derived, non-colliding seeds.
    """

    gamma_bar: float
    n_samples: int = 1
    burn_in: int = 0
    horizon: int = 0
    seed: int | tuple = 0
    p0: Optional[SymMatrix] = None

    def __post_init__(self):
        if not 0.0 < self.gamma_bar <= 1.0:
            raise ValueError(f"gamma_bar must be in (0, 1], got {self.gamma_bar}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.burn_in < 0:
            raise ValueError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.horizon < 0:
            raise ValueError(f"horizon must be >= 0, got {self.horizon}")
        if self.p0 is not None:
            object.__setattr__(self, "p0", as_sym(self.p0))

    def seed_tuple(self) -> tuple:
        return _as_seed_tuple(self.seed)


def _as_seed_tuple(seed) -> tuple:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


def _chain_bits(seed_tuple: tuple, chain: int, steps: int, gamma_bar: float) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed_tuple + (chain,)))
    return rng.random(steps) < gamma_bar


def _resolve_p0(m, cfg: SimulationConfig) -> SymMatrix:
    p0 = cfg.p0 if cfg.p0 is not None else m.P0
    if p0.dim != m.dim_state:
        raise ValueError(f"P0 must be {m.dim_state}x{m.dim_state}, got {p0.dim}x{p0.dim}")
    return p0


def _advance_batch(m, p: np.ndarray, arrived: np.ndarray) -> np.ndarray:
    """One chain step for a stack of covariances p (n, N, N), in place of loops.

    Every chain gets the open-loop update; chains whose bit arrived get the
    measurement correction subtracted.  Output is re-symmetrized to stop
    round-off drift from accumulating across steps.
    """
    a, at, q = m.A, m.A.T, m.Q.a
    out = a @ p @ at + q
    if arrived.any():
        pa = p[arrived]
        axct = a @ pa @ m.C.T
        innov = m.C @ pa @ m.C.T + m.R.a
        innov = (innov + np.transpose(innov, (0, 2, 1))) / 2.0
        gain = np.linalg.solve(innov, np.transpose(axct, (0, 2, 1)))
        out[arrived] -= axct @ gain
    return (out + np.transpose(out, (0, 2, 1))) / 2.0


@dataclass(frozen=True)
class Trajectory:
    """One simulated covariance path with the arrival bits that produced it."""

    path: tuple
    arrivals: tuple

    def __len__(self) -> int:
        return len(self.path)


def simulate_rre(m, cfg: SimulationConfig,
                 arrivals: Optional[Sequence[int]] = None) -> Trajectory:
    """Single chain over cfg.horizon steps; returns P_0..P_horizon and the bits.

    `arrivals` overrides the random bit stream with a forced sequence (the
    deterministic hook used to pin down corner cases); it must have exactly
    horizon entries of 0 or 1.
    """
    p0 = _resolve_p0(m, cfg)
    t_max = cfg.horizon
    if arrivals is None:
        bits = _chain_bits(cfg.seed_tuple(), 0, t_max, cfg.gamma_bar).astype(int)
    else:
        bits = np.asarray(list(arrivals), dtype=int)
        if bits.shape != (t_max,):
            raise ValueError(f"need exactly {t_max} forced arrivals, got {bits.shape}")
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("forced arrivals must be 0 or 1")
    path = [p0]
    x = p0
    for t in range(t_max):
        x = riccati_step(m, x) if bits[t] else lyapunov_step(m, x)
        path.append(x)
    return Trajectory(path=tuple(path), arrivals=tuple(int(b) for b in bits))


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Final covariances of n independent chains after the burn-in."""

    samples: np.ndarray
    gamma_bar: float
    burn_in: int
    seed: tuple

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def scalar_values(self) -> np.ndarray:
        if self.dim != 1:
            raise ValueError(f"scalar view needs 1x1 samples, got dim {self.dim}")
        return self.samples[:, 0, 0]


def sample_invariant(m, cfg: SimulationConfig, threads: int = 1) -> EmpiricalDistribution:
    """Draw n_samples chains for burn_in steps each; keep the final covariances.

    Chain i's bits come from (seed, i), so any contiguous block of chains can
    be advanced independently; `threads` splits the chain index range across a
    thread pool and reassembles in index order, leaving the samples identical
    to the single-threaded run.
    """
    p0 = _resolve_p0(m, cfg)
    n, burn = cfg.n_samples, cfg.burn_in
    seed_tuple = cfg.seed_tuple()

    def run_block(lo: int, hi: int) -> np.ndarray:
        count = hi - lo
        bits = np.empty((count, burn), dtype=bool)
        for i in range(count):
            bits[i] = _chain_bits(seed_tuple, lo + i, burn, cfg.gamma_bar)
        p = np.broadcast_to(p0.a, (count, p0.dim, p0.dim)).copy()
        for t in range(burn):
            p = _advance_batch(m, p, bits[:, t])
        return p

    threads = max(1, int(threads))
    if threads == 1 or n < 2 * threads:
        samples = run_block(0, n)
    else:
        bounds = np.linspace(0, n, threads + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(lambda ab: run_block(*ab), zip(bounds[:-1], bounds[1:])))
        samples = np.concatenate(blocks, axis=0)
    samples.flags.writeable = False
    return EmpiricalDistribution(samples=samples, gamma_bar=cfg.gamma_bar,
                                 burn_in=burn, seed=seed_tuple)


def event_probability(d: EmpiricalDistribution, pred: EventPredicate,
                      p_star: Optional[SymMatrix] = None) -> tuple[float, int]:
    """Hit fraction and raw hit count of the event over the sample."""
    mask = pred.batch(d.samples, p_star)
    hits = int(np.sum(mask))
    return hits / d.n, hits


@dataclass(frozen=True)
class ExponentFit:
    """Least-squares slope of ln(hit fraction) against ln(1 - gamma_bar).

    Gridpoints with zero hits cannot enter the log fit; they are kept, flagged
    censored, and excluded from the regression.  burn_in_drift compares one
    gridpoint against a doubled burn-in as an adequacy cross-check: the two
    hit fractions should agree within 2 combined standard errors.
    """

    gamma_grid: tuple
    probs: tuple
    hits: tuple
    censored: tuple
    slope: float
    intercept: float
    stderr: float
    points_used: int
    n_samples: int
    burn_in: int
    seed: tuple
    burn_in_drift: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "gamma_grid": list(self.gamma_grid),
            "probs": list(self.probs),
            "hits": list(self.hits),
            "censored": list(self.censored),
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "points_used": self.points_used,
            "n_samples": self.n_samples,
            "burn_in": self.burn_in,
            "seed": list(self.seed),
            "burn_in_drift": self.burn_in_drift,
        }


def decay_exponent_fit(m, pred: EventPredicate, gamma_grid: Sequence[float],
                       n_samples: int, burn_in: int, seed: int | tuple,
                       threads: int = 1, check_burn_in: bool = True,
                       p0: Optional[SymMatrix] = None) -> ExponentFit:
    """Estimate the decay exponent of a rare event across an arrival-rate grid.

    For each gridpoint j, samples the chain with master seed (seed, j) and
    evaluates the event's hit fraction; the exponent is the slope of
    ln p_hat on ln(1 - gamma_bar) over the uncensored gridpoints.  At least
    three uncensored points are required for a slope with a standard error.
    """
    grid = tuple(float(g) for g in gamma_grid)
    if len(grid) < 3:
        raise ValueError(f"need at least 3 gridpoints, got {len(grid)}")
    if any(not 0.0 < g < 1.0 for g in grid):
        raise ValueError("gamma_grid entries must lie strictly inside (0, 1)")
    if len(set(grid)) != len(grid):
        raise ValueError("gamma_grid entries must be distinct")
    seed_tuple = _as_seed_tuple(seed)
    p_star = solve_dare(m).p_star

    probs, hits = [], []
    for j, g in enumerate(grid):
        cfg = SimulationConfig(gamma_bar=g, n_samples=n_samples, burn_in=burn_in,
                               seed=seed_tuple + (j,), p0=p0)
        dist = sample_invariant(m, cfg, threads=threads)
        p_hat, k = event_probability(dist, pred, p_star)
        probs.append(p_hat)
        hits.append(k)
    censored = tuple(k == 0 for k in hits)

    xs = np.array([math.log(1.0 - g) for g, c in zip(grid, censored) if not c])
    ys = np.array([math.log(p) for p, c in zip(probs, censored) if not c])
    if xs.size < 3:
        raise RuntimeError(
            f"only {xs.size} gridpoints had any hits; increase n_samples or "
            "move the grid toward smaller gamma_bar"
        )
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    dof = xs.size - 2
    sxx = float(np.sum((xs - xs.mean()) ** 2))
    stderr = float(np.sqrt(np.sum(resid**2) / dof / sxx)) if dof > 0 else math.nan

    drift = None
    if check_burn_in:
        drift = _burn_in_drift(m, pred, grid[0], n_samples, burn_in,
                               seed_tuple + (0,), threads, p0, p_star)

    return ExponentFit(
        gamma_grid=grid, probs=tuple(probs), hits=tuple(hits), censored=censored,
        slope=float(slope), intercept=float(intercept), stderr=stderr,
        points_used=int(xs.size), n_samples=n_samples, burn_in=burn_in,
        seed=seed_tuple, burn_in_drift=drift,
    )


def _burn_in_drift(m, pred, gamma_bar, n_samples, burn_in, seed_tuple,
                   threads, p0, p_star) -> dict:
    """Hit fraction at burn_in vs 2 * burn_in on one gridpoint, same seeds."""
    p1 = None
    fractions = []
    for factor in (1, 2):
        cfg = SimulationConfig(gamma_bar=gamma_bar, n_samples=n_samples,
                               burn_in=burn_in * factor, seed=seed_tuple, p0=p0)
        dist = sample_invariant(m, cfg, threads=threads)
        frac, _ = event_probability(dist, pred, p_star)
        fractions.append(frac)
    p1, p2 = fractions
    se = math.sqrt(p1 * (1 - p1) / n_samples + p2 * (1 - p2) / n_samples)
    return {
        "gamma_bar": gamma_bar,
        "p_at_burn_in": p1,
        "p_at_doubled_burn_in": p2,
        "combined_se": se,
        "within_2se": abs(p2 - p1) <= 2.0 * se or se == 0.0,
    }


def prohorov_distance_scalar(d: EmpiricalDistribution, target: float) -> float:
    """Exact Prohorov distance between a scalar sample and a point mass.

    Against a Dirac at `target` the general definition collapses to

        inf { eps > 0 : fraction(|x - target| > eps) <= eps },

    computed here by scanning the sorted absolute deviations, so the result
    is exact for the empirical measure rather than a grid approximation.
    """
    devs = np.sort(np.abs(d.scalar_values() - float(target)))
    n = devs.size
    best = math.inf
    for i in range(n + 1):
        lo = 0.0 if i == 0 else float(devs[i - 1])
        hi = float(devs[i]) if i < n else math.inf
        frac_outside = (n - i) / n
        eps = max(lo, frac_outside)
        if eps < hi or i == n:
            best = min(best, eps)
    return best


@dataclass(frozen=True)
class TailBound:
    """Analytic ceiling on sup_t P(||P_t|| > M) for unstable open-loop maps.

    applicable is False when ||A|| <= 1: the open-loop map is non-expanding,
    thresholds are never forced, and the geometric argument says nothing.
    vacuous flags bounds >= 1.  k_of_m is the number of consecutive open-loop
    steps needed to push the worst bounded state past M.
    """

    gamma_bar: float
    threshold: float
    applicable: bool
    k_of_m: Optional[int]
    bound: Optional[float]
    vacuous: bool
    alpha: float
    kappa: Optional[float]
    kappa1: Optional[float]

    def to_dict(self) -> dict:
        return {
            "gamma_bar": self.gamma_bar,
            "threshold": self.threshold,
            "applicable": self.applicable,
            "k_of_m": self.k_of_m,
            "bound": self.bound,
            "vacuous": self.vacuous,
            "alpha": self.alpha,
            "kappa": self.kappa,
            "kappa1": self.kappa1,
        }


def tail_bound(m, gamma_bar: float, threshold: float,
               p0: Optional[SymMatrix] = None, kappa: Optional[float] = None,
               kappa_trials: int = 50, seed: int = 0) -> TailBound:
    """Geometric tail bound on the running covariance norm.

    After any window of N = state-dimension consecutive arrivals the iterate
    is below kappa * I, so exceeding M requires a long enough arrival-free
    stretch: at least k(M) steps, where k(M) is when the open-loop envelope

        kappa1 * a^(2k) + ||Q|| * (a^(2k) - 1) / (a^2 - 1),   a = ||A||

    first reaches M, with kappa1 = max(kappa, ||P0||).  Summing the chance of
    such stretches over time gives, with r = (1 - gamma_bar^N)^(1/N),

        sup_t P(||P_t|| > M) <= r^k(M) / ((1 - gamma_bar^N) * (1 - r)).

    kappa defaults to the calibrated uniform bound of the model; pass an
    explicit kappa to reproduce a bound computed elsewhere.
    """
    if not 0.0 < gamma_bar < 1.0:
        raise ValueError(f"gamma_bar must be in (0, 1), got {gamma_bar}")
    if not threshold > 0.0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    alpha = float(np.linalg.norm(m.A, 2))
    if alpha <= 1.0:
        return TailBound(gamma_bar=gamma_bar, threshold=threshold, applicable=False,
                         k_of_m=None, bound=None, vacuous=False, alpha=alpha,
                         kappa=None, kappa1=None)
    if kappa is None:
        kappa = uniform_bound_kappa(m, trials=kappa_trials, seed=seed)
    p0 = p0 if p0 is not None else m.P0
    kappa1 = max(kappa, spectral_norm(p0))
    q_norm = spectral_norm(m.Q)
    a2 = alpha * alpha

    k = 0
    while kappa1 * a2**k + q_norm * (a2**k - 1.0) / (a2 - 1.0) < threshold:
        k += 1
        if k > 10_000:
            raise RuntimeError("threshold unreachable by the geometric envelope")

    n = m.dim_state
    decay = (1.0 - gamma_bar**n) ** (1.0 / n)
    bound = decay**k / ((1.0 - gamma_bar**n) * (1.0 - decay))
    return TailBound(gamma_bar=gamma_bar, threshold=threshold, applicable=True,
                     k_of_m=k, bound=float(bound), vacuous=bound >= 1.0,
                     alpha=alpha, kappa=float(kappa), kappa1=float(kappa1))


@dataclass(frozen=True)
class ExceedanceReport:
    """Worst-over-time empirical exceedance frequencies per threshold."""

    thresholds: tuple
    sup_frequency: tuple
    argmax_t: tuple
    n_chains: int
    horizon: int


def exceedance_sup(m, gamma_bar: float, thresholds: Sequence[float], horizon: int,
                   n_chains: int, seed: int | tuple,
                   p0: Optional[SymMatrix] = None) -> ExceedanceReport:
    """Empirical sup_t P(||P_t|| > M) over t = 0..horizon for each M.

    All thresholds share one batch of chains (seeded per chain as everywhere
    else), so the frequencies are comparable across thresholds.
    """
    thresholds = tuple(float(t) for t in thresholds)
    p0 = p0 if p0 is not None else m.P0
    seed_tuple = _as_seed_tuple(seed)

    bits = np.empty((n_chains, horizon), dtype=bool)
    for i in range(n_chains):
        bits[i] = _chain_bits(seed_tuple, i, horizon, gamma_bar)

    p = np.broadcast_to(p0.a, (n_chains, p0.dim, p0.dim)).copy()
    sup_freq = [0.0] * len(thresholds)
    arg_t = [0] * len(thresholds)
    for t in range(horizon + 1):
        if p.shape[1] == 1:
            norms = np.abs(p[:, 0, 0])
        else:
            norms = np.max(np.abs(np.linalg.eigvalsh(p)), axis=-1)
        for j, thr in enumerate(thresholds):
            freq = float(np.mean(norms > thr))
            if freq > sup_freq[j]:
                sup_freq[j] = freq
                arg_t[j] = t
        if t < horizon:
            p = _advance_batch(m, p, bits[:, t])
    return ExceedanceReport(thresholds=thresholds, sup_frequency=tuple(sup_freq),
                            argmax_t=tuple(arg_t), n_chains=n_chains, horizon=horizon)
