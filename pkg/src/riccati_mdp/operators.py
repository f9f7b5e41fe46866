"""The two covariance update maps and their fixed-point analysis.

A missed observation applies the open-loop update

    f0(X) = A X A^T + Q,

an arrived observation applies the measurement update

    f1(X) = A X A^T + Q - A X C^T (C X C^T + R)^(-1) C X A^T.

f1 is the arrival map even though sample paths select between the two at
random; randomness lives entirely in which map gets applied.  Both maps
preserve the PSD cone and are monotone in the Loewner order, and f1 admits a
unique PSD fixed point P* for validated models, found here by plain
fixed-point iteration (`solve_dare`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .linalg import DEFAULT_ORDER_TOL, SymMatrix, as_sym, spectral_norm

# Iterates are symmetrized every step; this is the PSD slack allowed on inputs.
_PSD_INPUT_TOL = 1e-8


def _require_psd(x: SymMatrix, what: str) -> SymMatrix:
    x = as_sym(x)
    lam_min = float(np.min(np.linalg.eigvalsh(x.a)))
    if lam_min < -_PSD_INPUT_TOL * (1.0 + spectral_norm(x)):
        raise ValueError(f"{what} must be PSD, min eigenvalue {lam_min:.6e}")
    return x


def lyapunov_step(m, x: SymMatrix) -> SymMatrix:
    """Open-loop update f0(X) = A X A^T + Q."""
    x = _require_psd(x, "X")
    if x.dim != m.dim_state:
        raise ValueError(f"X must be {m.dim_state}x{m.dim_state}, got {x.dim}x{x.dim}")
    return SymMatrix(m.A @ x.a @ m.A.T + m.Q.a)


def riccati_step(m, x: SymMatrix) -> SymMatrix:
    """Measurement update f1(X) = A X A^T + Q - A X C^T (C X C^T + R)^(-1) C X A^T.

    The innovation matrix C X C^T + R is symmetric positive definite for
    admissible models, so it is inverted through a Cholesky factorization.
    """
    x = _require_psd(x, "X")
    if x.dim != m.dim_state:
        raise ValueError(f"X must be {m.dim_state}x{m.dim_state}, got {x.dim}x{x.dim}")
    axct = m.A @ x.a @ m.C.T
    innov = m.C @ x.a @ m.C.T + m.R.a
    innov = (innov + innov.T) / 2.0
    try:
        correction = axct @ cho_solve(cho_factor(innov, lower=True), axct.T)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"innovation matrix is not positive definite: {exc}") from exc
    return SymMatrix(m.A @ x.a @ m.A.T + m.Q.a - correction)


def riccati_power(m, x: SymMatrix, t: int) -> SymMatrix:
    """t-fold application of the measurement update, f1^t(X)."""
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    out = as_sym(x)
    for _ in range(t):
        out = riccati_step(m, out)
    return out


@dataclass(frozen=True)
class DareSolution:
    """Fixed point of the measurement update, with solver diagnostics."""

    p_star: SymMatrix
    iterations: int
    residual: float

    def to_dict(self) -> dict:
        return {
            "p_star": self.p_star.a.tolist(),
            "iterations": self.iterations,
            "residual": self.residual,
        }


def solve_dare(m, tol: float = 1e-12, max_iterations: int = 100_000) -> DareSolution:
    """Fixed point of f1 by direct iteration from X = Q.

    Stops when the step size drops below tol * (1 + ||X||).  Validated models
    contract geometrically near the fixed point, so the plain iteration is
    reliable and keeps the solver free of model-reduction heuristics.
    """
    x = m.Q
    for k in range(1, max_iterations + 1):
        x_next = riccati_step(m, x)
        if spectral_norm(x_next - x) <= tol * (1.0 + spectral_norm(x)):
            residual = spectral_norm(riccati_step(m, x_next) - x_next)
            return DareSolution(p_star=x_next, iterations=k, residual=residual)
        x = x_next
    raise RuntimeError(
        f"fixed-point iteration did not converge in {max_iterations} iterations"
    )


def random_psd(rng: np.random.Generator, n: int, scale: float = 1.0) -> SymMatrix:
    """Random PSD matrix scale * G G^T / n with Gaussian G.

    The norm concentrates near `scale` but keeps sampling spread; exact
    normalization would collapse all 1x1 draws to the same value.
    """
    g = rng.standard_normal((n, n))
    return SymMatrix(g @ g.T * (scale / n))


@dataclass(frozen=True)
class ContractionEstimate:
    """Empirical geometric-contraction fit for repeated measurement updates.

    Models ||f1^t(X1) - f1^t(X2)|| <= c1 * exp(-c2 * t) * ||X1 - X2|| on the
    sampled worst-case pair.  t_table maps an accuracy eps to the first t at
    which every sampled start has converged to within eps of the fixed point;
    entries are math.inf when t_max was not enough.  degenerate marks runs
    where all sampled distances collapsed below resolution, leaving nothing
    to fit (c2 is math.inf there by convention).
    """

    c1: float
    c2: float
    t_table: dict
    degenerate: bool
    # One-step Lipschitz diagnostic of the open-loop map: ||A||^2.
    lyapunov_lipschitz: float


def estimate_contraction(
    m,
    trials: int = 20,
    t_max: int = 60,
    seed: int = 0,
    epsilons: tuple = (1e-1, 1e-2, 1e-3, 1e-4, 1e-6),
) -> ContractionEstimate:
    """Fit contraction constants from sampled pairs of PSD starting points.

    Draws `trials` pairs at spread scales, tracks d_t = ||f1^t(X1) - f1^t(X2)||,
    and least-squares fits ln d_t against t on the pair that contracts slowest
    (largest d_t / d_0 at t_max).  The fit window starts at t = N (state
    dimension) and is cut at the first non-decreasing or sub-resolution step so
    the reported rate reflects the genuinely contracting regime.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    n = m.dim_state
    p_star = solve_dare(m).p_star
    alpha = float(np.linalg.norm(m.A, 2))

    pairs = []
    for _ in range(trials):
        scale = 10.0 ** rng.uniform(0.0, 3.0)
        pairs.append((random_psd(rng, n, scale), random_psd(rng, n, scale)))

    # Distance tracks per pair, plus worst distance to P* across every start.
    tracks = np.empty((trials, t_max + 1))
    worst_to_fixed = np.zeros(t_max + 1)
    for i, (x1, x2) in enumerate(pairs):
        a, b = x1, x2
        for t in range(t_max + 1):
            tracks[i, t] = spectral_norm(a - b)
            gap = max(spectral_norm(a - p_star), spectral_norm(b - p_star))
            worst_to_fixed[t] = max(worst_to_fixed[t], gap)
            if t < t_max:
                a, b = riccati_step(m, a), riccati_step(m, b)

    t_table = {}
    for eps in epsilons:
        hit = np.nonzero(worst_to_fixed <= eps)[0]
        t_table[eps] = int(hit[0]) if hit.size else math.inf

    resolution = 1e-14
    live = tracks[:, 0] > resolution
    if not np.any(live):
        return ContractionEstimate(
            c1=math.nan, c2=math.inf, t_table=t_table, degenerate=True,
            lyapunov_lipschitz=alpha ** 2,
        )
    ratios = np.where(live, tracks[:, t_max] / np.maximum(tracks[:, 0], resolution), -1.0)
    worst = int(np.argmax(ratios))
    d = tracks[worst]

    # Fit window: [N, t_max], trimmed to the strictly decreasing, resolvable part.
    end = t_max
    for t in range(n + 1, t_max + 1):
        if d[t] >= d[t - 1] or d[t] < resolution:
            end = t - 1
            break
    ts = np.arange(n, end + 1)
    if ts.size < 2 or d[n] < resolution:
        return ContractionEstimate(
            c1=math.nan, c2=math.inf, t_table=t_table, degenerate=True,
            lyapunov_lipschitz=alpha ** 2,
        )
    slope, intercept = np.polyfit(ts, np.log(d[ts]), 1)
    c2 = -float(slope)
    c1 = float(np.exp(intercept) / d[0])
    return ContractionEstimate(
        c1=c1, c2=c2, t_table=t_table, degenerate=False,
        lyapunov_lipschitz=alpha ** 2,
    )


def uniform_bound_kappa(m, trials: int = 50, seed: int = 0) -> float:
    """Constant kappa with f1^N(X) <= kappa * I across operating scales.

    Takes twice the largest ||f1^N(X)|| over scaled identities and random PSD
    draws at norms 1 through 1e4, then verifies the candidate against 200
    fresh random draws, doubling on any violation.  More than 10 doublings
    means the model does not admit a uniform N-step bound at these scales.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    n = m.dim_state
    scales = [1.0, 10.0, 100.0, 1e3, 1e4]

    probes = [SymMatrix(s * np.eye(n)) for s in scales]
    for s in scales:
        probes.extend(random_psd(rng, n, s) for _ in range(trials))
    kappa = 2.0 * max(spectral_norm(riccati_power(m, x, n)) for x in probes)

    for attempt in range(11):
        check_rng = np.random.default_rng(np.random.SeedSequence((seed, 10_000 + attempt)))
        ok = True
        for _ in range(200):
            scale = 10.0 ** check_rng.uniform(0.0, 4.0)
            x = random_psd(check_rng, n, scale)
            lam_max = float(np.max(np.linalg.eigvalsh(riccati_power(m, x, n).a)))
            if lam_max > kappa * (1.0 + DEFAULT_ORDER_TOL):
                ok = False
                break
        if ok:
            return kappa
        kappa *= 2.0
    raise RuntimeError(
        "no uniform N-step bound found after 10 doublings; "
        "the measurement update does not appear uniformly bounded for this model"
    )
