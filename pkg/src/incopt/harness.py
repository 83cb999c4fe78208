"""Experiment harness: success rule, (rho, mu0) grid searches, baseline
comparison, rate fitting and sharpness calibration."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from incopt.problem import estimate_lipschitz
from incopt.rng import make_rng
from incopt.solvers import (
    CYCLIC, Geometric, InnerSolverError, OrderKind, OrderPolicy, SolverKind, initial_point, run,
)
from incopt.trace import RunTrace, Status, SuccessMap

log = logging.getLogger(__name__)

THRESHOLD = 1e-8
WINDOW = 5
# rate fits stop here: below the success threshold the trace shows solver
# accuracy floors (IPP inner tolerance, round-off) rather than the rate
DIST_FLOOR = 0.1 * THRESHOLD
DEFAULT_RHO_GRID = np.linspace(0.65, 0.99, 15)
DEFAULT_MU0_GRID = np.linspace(1.0, 210.0, 15)  # units of 1/m
VOTE_SEEDS = 5


# ---------------------------------------------------------------------------
# success rule
# ---------------------------------------------------------------------------

def success_metric(trace: RunTrace, threshold=THRESHOLD, window=WINDOW) -> bool:
    """Mean distance of the last ``window`` epochs is at most ``threshold``.

    Diverged runs and runs stopped with a certificate are decided by their status.
    """
    if trace.status == Status.DIVERGED or trace.certified_stall:
        return False
    if trace.certified_success:
        return True
    if len(trace.dist) < window:
        raise ValueError(f"trace has {len(trace.dist)} records, need at least {window}")
    tail = np.asarray(trace.dist[-window:], dtype=float)
    return bool(np.all(np.isfinite(tail)) and tail.mean() <= threshold)


def final_distance(trace: RunTrace, window=WINDOW) -> float:
    d = np.asarray(trace.dist, dtype=float)
    if d.size == 0:
        return float("nan")
    return float(np.mean(d[-window:]))


# ---------------------------------------------------------------------------
# grid search
# ---------------------------------------------------------------------------

def cell_schedule(kind, mu0_times_m, rho, m) -> Geometric:
    """Schedule of one grid cell.

    Incremental and stochastic methods take m steps per epoch, each of size
    mu_k = mu0 rho^k with mu0 = mu0_times_m / m.  Full-gradient descent takes a
    single averaged step per epoch, so it gets the epoch-fair stepsize m mu_k,
    i.e. the same per-epoch displacement budget.
    """
    mu0 = mu0_times_m / m
    if SolverKind(kind) == SolverKind.GD:
        mu0 *= m
    return Geometric(mu0, rho)


def run_cell(kind, instance, rho, mu0_times_m, epochs=500, x0=None, order_seed=0,
             threshold=THRESHOLD, window=WINDOW, early_stop=True):
    """One deterministic grid cell; returns (success, final averaged distance)."""
    kind = SolverKind(kind)
    problem = instance.problem
    order = OrderPolicy(OrderKind.IID, order_seed) if kind.stochastic else CYCLIC
    try:
        trace = run(kind, problem, cell_schedule(kind, mu0_times_m, rho, problem.m), order=order,
                    x0=x0, epochs=epochs, distance=instance.distance, track_fval=False,
                    stop_when_hopeless=early_stop, stop_when_certain=early_stop,
                    threshold=threshold, window=window)
    except (ValueError, InnerSolverError) as err:
        # e.g. IPP with mu0 tau >= 1: the prox subproblem is not strongly convex
        log.info("cell rho=%g mu0=%g/m rejected: %s", rho, mu0_times_m, err)
        return False, float("nan")
    return success_metric(trace, threshold, window), final_distance(trace, window)


def _vote(kind, instance, rho, c, epochs, x0, seeds, threshold, window, early_stop):
    """Majority over ``seeds`` sampling seeds, stopping once the vote is decided."""
    need = len(seeds) // 2 + 1
    wins = losses = 0
    dists = []
    for s in seeds:
        ok, d = run_cell(kind, instance, rho, c, epochs, x0, s, threshold, window, early_stop)
        dists.append(d)
        wins += ok
        losses += not ok
        if wins >= need or losses >= need:
            break
    return wins >= need, float(np.nanmedian(dists)) if np.any(np.isfinite(dists)) else float("nan")


def _grid_arg(values, name):
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if np.any(np.diff(arr) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return arr


def grid_search(kind, instance, rho_grid=DEFAULT_RHO_GRID, mu0_grid=DEFAULT_MU0_GRID,
                epochs=500, x0_seed=0, workers=1, threshold=THRESHOLD, window=WINDOW,
                seeds=VOTE_SEEDS, early_stop=True, config=None) -> SuccessMap:
    """Success map over (rho, mu0 * m), every cell started from the same x0.

    Deterministic solvers run once per cell; stochastic ones are decided by a
    majority over ``seeds`` sampling seeds.  Cells are independent, so they may
    run on ``workers`` threads; the result does not depend on evaluation order.
    """
    kind = SolverKind(kind)
    rho_grid = _grid_arg(rho_grid, "rho_grid")
    mu0_grid = _grid_arg(mu0_grid, "mu0_grid")
    if epochs < window:
        raise ValueError(f"epochs = {epochs} < window = {window}")
    x0 = initial_point(instance.problem.dim, x0_seed)
    seed_list = list(range(seeds)) if kind.stochastic else [0]

    def cell(ij):
        i, j = ij
        return ij, _vote(kind, instance, rho_grid[i], mu0_grid[j], epochs, x0, seed_list,
                         threshold, window, early_stop)

    jobs = [(i, j) for i in range(rho_grid.size) for j in range(mu0_grid.size)]
    cells = np.zeros((rho_grid.size, mu0_grid.size), dtype=bool)
    final = np.full(cells.shape, np.nan)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for (i, j), (ok, d) in pool.map(cell, jobs):
            cells[i, j] = ok
            final[i, j] = d
    cfg = dict(config or {})
    cfg.update(solver=kind.value, epochs=epochs, x0_seed=x0_seed, threshold=threshold,
               window=window, seeds=len(seed_list), instance=dict(getattr(instance, "params", {})))
    return SuccessMap(rho_grid, mu0_grid, cells, final, cfg)


@dataclass
class BaselineReport:
    smallest_rho: dict  # solver name -> smallest successful rho, or None
    winning_mu0: dict  # solver name -> mu0 * m of the first successful cell
    config: dict = field(default_factory=dict)

    def ordered(self, a, b) -> bool:
        """True if solver ``a`` admits a strictly smaller rho than ``b`` (None counts as +inf)."""
        ra, rb = self.smallest_rho[a], self.smallest_rho[b]
        inf = float("inf")
        ra = inf if ra is None else ra
        rb = inf if rb is None else rb
        return ra < rb


def compare_baselines(instance, kinds=("igd", "gd", "sgd"), rho_grid=DEFAULT_RHO_GRID,
                      mu0_grid=DEFAULT_MU0_GRID, epochs=500, x0_seed=0, seeds=VOTE_SEEDS,
                      threshold=THRESHOLD, window=WINDOW) -> BaselineReport:
    """Smallest successful rho per solver on a shared grid and start point.

    Rows are scanned from the smallest rho upward and a row stops at its first
    successful cell; this gives the same answer as reading the full map.
    """
    rho_grid = _grid_arg(rho_grid, "rho_grid")
    mu0_grid = _grid_arg(mu0_grid, "mu0_grid")
    x0 = initial_point(instance.problem.dim, x0_seed)
    best, mu_at = {}, {}
    for name in kinds:
        kind = SolverKind(name)
        seed_list = list(range(seeds)) if kind.stochastic else [0]
        best[kind.value] = mu_at[kind.value] = None
        for rho in rho_grid:
            hit = next((c for c in mu0_grid
                        if _vote(kind, instance, rho, c, epochs, x0, seed_list, threshold, window, True)[0]),
                       None)
            if hit is not None:
                best[kind.value], mu_at[kind.value] = float(rho), float(hit)
                break
        log.info("%s: smallest successful rho = %s", kind.value, best[kind.value])
    cfg = dict(epochs=epochs, x0_seed=x0_seed, seeds=seeds, threshold=threshold, window=window,
               instance=dict(getattr(instance, "params", {})))
    return BaselineReport(best, mu_at, cfg)


# ---------------------------------------------------------------------------
# rate fit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    slope_log10: float
    r_squared: float
    n_used: int
    degenerate: bool = False  # R^2 undefined (flat data), reported as 0


def fit_linear_rate(trace, skip=0, floor=DIST_FLOOR) -> RateFit:
    """Least-squares fit of log10(dist) against epoch.

    Uses records from index ``skip`` up to (not including) the first one below
    ``floor``, where round-off takes over.
    """
    dist = np.asarray(getattr(trace, "dist", trace), dtype=float)
    epoch = np.asarray(getattr(trace, "epoch", np.arange(1, dist.size + 1)), dtype=float)
    d, e = dist[skip:], epoch[skip:]
    below = np.flatnonzero(d < floor)
    if below.size:
        d, e = d[: below[0]], e[: below[0]]
    if d.size < 3:
        raise ValueError(f"only {d.size} usable records, need at least 3")
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise ValueError("distances must be positive and finite")
    y = np.log10(d)
    slope, icpt = np.polyfit(e, y, 1)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 1e-28 * y.size:
        return RateFit(0.0, 0.0, d.size, True)
    ss_res = float(np.sum((y - (slope * e + icpt)) ** 2))
    return RateFit(float(slope), 1.0 - ss_res / ss_tot, d.size)


# ---------------------------------------------------------------------------
# sharpness calibration
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KnownSolutionInstance:
    """Minimal instance: a problem, one minimizer and a solution-set distance."""

    problem: object
    x_star: np.ndarray
    distance_fn: Callable
    params: dict = field(default_factory=dict)

    def distance(self, x):
        return float(self.distance_fn(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class Calibration:
    alpha: float
    lipschitz: Optional[float]
    sharp: bool
    growth_exponent: float  # slope of log ratio vs log dist: ~0 sharp, ~1 quadratic
    radius: float
    probes: int


SHARP_EXPONENT = 0.5


def calibrate_alpha(instance, probe_points=500, seed=0, radius=None, min_radius=1e-4,
                    with_lipschitz=True, lipschitz_samples=100) -> Calibration:
    """Empirical sharpness constant alpha_hat = min (f(x) - f*) / dist(x, X).

    Probes are x* + r d with d uniform on the sphere and r log-uniform in
    [min_radius, 1] * radius (radius defaults to max(|x*|, 1) / 2).  Probes
    that land on the solution set are resampled.  The problem is flagged as
    not sharp when the ratio shrinks with the probe distance (log-log slope
    above 0.5).  L_hat is sampled over the same ball.
    """
    if probe_points < 3:
        raise ValueError("need at least 3 probe points")
    problem = instance.problem
    x_star = np.asarray(instance.x_star, dtype=float)
    if radius is None:
        radius = 0.5 * max(float(np.linalg.norm(x_star)), 1.0)
    f_star = problem.value(x_star)
    rng = make_rng(seed, "calibrate")
    n = x_star.size
    ratios, dists = [], []
    tries = 0
    while len(ratios) < probe_points:
        tries += 1
        if tries > 20 * probe_points:
            raise RuntimeError("could not draw probes off the solution set")
        d = rng.standard_normal(n)
        d /= np.linalg.norm(d)
        r = radius * min_radius ** rng.random()
        x = x_star + r * d
        dist = instance.distance(x)
        if not dist > 0:
            continue
        ratios.append((problem.value(x) - f_star) / dist)
        dists.append(dist)
    ratios = np.array(ratios)
    dists = np.array(dists)
    alpha = float(ratios.min())
    pos = ratios > 0
    if pos.sum() >= 3:
        expo = float(np.polyfit(np.log(dists[pos]), np.log(ratios[pos]), 1)[0])
    else:
        expo = float("inf")
    sharp = alpha > 0 and expo < SHARP_EXPONENT
    L = (estimate_lipschitz(problem, x_star, radius, samples=lipschitz_samples, seed=seed)
         if with_lipschitz else None)
    return Calibration(alpha, L, sharp, expo, radius, probe_points)
