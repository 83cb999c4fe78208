"""Incremental, stochastic and full-batch solvers with their stepsize rules.

Built-in problems (``CompositeProblem`` subclasses) run through the compiled
epoch drivers in ``_kernels``; any other ``FiniteSumProblem`` goes through the
pure-Python loops here, which follow the same update rules.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np

from incopt import _kernels as K
from incopt.problem import CompositeProblem, FiniteSumProblem
from incopt.rng import make_rng
from incopt.trace import RunTrace, Status

log = logging.getLogger(__name__)

DIVERGENCE_BOUND = 1e8
IPP_INNER_TOL = 1e-7
IPP_MAX_INNER = 200


class InnerSolverError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# stepsizes and orders
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("stepsize must be positive")

    def step(self, k):
        return self.mu

    def remaining_sum(self, k, epochs):
        """sum of mu_j for j >= k up to the last epoch."""
        return self.mu * max(epochs - k, 0)


@dataclass(frozen=True)
class Geometric:
    mu0: float
    rho: float

    def __post_init__(self):
        if not self.mu0 > 0:
            raise ValueError("initial stepsize must be positive")
        if not 0 < self.rho < 1:
            raise ValueError(f"decay factor must lie in (0, 1), got {self.rho}")

    def step(self, k):
        return self.mu0 * self.rho ** k

    def remaining_sum(self, k, epochs):
        return self.step(k) / (1.0 - self.rho)


StepSchedule = Union[Constant, Geometric]


def constant_schedule(m: int, N: int) -> Constant:
    """mu = 1 / (m sqrt(N + 1)) for a budget of N epochs."""
    if m < 1 or N < 0:
        raise ValueError("need m >= 1 and N >= 0")
    return Constant(1.0 / (m * math.sqrt(N + 1)))


def rho_lower_bound(alpha, tau, L, m, mu0):
    return math.sqrt(1.0 - 2 * m * tau * mu0 + 5 * m**2 * tau**2 * L**2 * mu0**2 / alpha**2)


def geometric_schedule(alpha, tau, L, m, mu0=None, rho=None) -> Geometric:
    """Geometric schedule mu_k = rho^k mu0 with the admissible (mu0, rho) region.

    Defaults pick mu0 = alpha^2 / (5 m tau L^2), which minimizes the admissible
    decay bound to sqrt(1 - alpha^2 / (5 L^2)).
    """
    if not (alpha > 0 and tau > 0 and m >= 1):
        raise ValueError("need alpha > 0, tau > 0 and m >= 1")
    if L < alpha:
        raise ValueError(f"L = {L:g} < alpha = {alpha:g} contradicts L >= alpha")
    mu_max = alpha**2 / (5 * m * tau * L**2)
    if mu0 is None:
        mu0 = mu_max
    elif not 0 < mu0 <= mu_max * (1 + 1e-12):
        raise ValueError(f"mu0 = {mu0:g} outside (0, {mu_max:g}]")
    rho_bar = rho_lower_bound(alpha, tau, L, m, mu0)
    if rho is None:
        rho = rho_bar
    elif not rho_bar * (1 - 1e-12) <= rho < 1:
        raise ValueError(f"rho = {rho:g} outside [{rho_bar:g}, 1)")
    return Geometric(mu0, rho)


class OrderKind(str, Enum):
    CYCLIC = "cyclic"
    SHUFFLED = "shuffled"
    IID = "iid"


@dataclass(frozen=True)
class OrderPolicy:
    kind: OrderKind = OrderKind.CYCLIC
    seed: int = 0

    def indices(self, epoch, m):
        if self.kind == OrderKind.CYCLIC:
            return np.arange(m)
        if self.kind == OrderKind.SHUFFLED:
            return make_rng(self.seed, "shuffle", epoch).permutation(m)
        return make_rng(self.seed, "iid", epoch).integers(m, size=m)


CYCLIC = OrderPolicy()


class SolverKind(str, Enum):
    IGD = "igd"
    IPP = "ipp"
    IPL = "ipl"
    GD = "gd"
    SGD = "sgd"
    SPL = "spl"

    @property
    def stochastic(self):
        return self in (SolverKind.SGD, SolverKind.SPL)


# ---------------------------------------------------------------------------
# single updates
# ---------------------------------------------------------------------------

def prox_scalar_affine(a, b, center, mu):
    """argmin_x |<a, x> + b| + |x - center|^2 / (2 mu), in closed form."""
    a = np.asarray(a, dtype=float)
    center = np.asarray(center, dtype=float)
    q = float(a @ a)
    if q == 0.0:
        return center.copy()
    t0 = float(a @ center) + b
    return center - min(max(t0 / q, -mu), mu) * a


def _is_compiled(problem):
    return isinstance(problem, CompositeProblem)


def _prepare(problem, x, order):
    x = np.array(problem._check_point(x), dtype=float)
    order = np.asarray(order, dtype=np.int64)
    if order.size and (order.min() < 0 or order.max() >= problem.m):
        raise IndexError("order contains an out-of-range component index")
    return x, order


def igd_epoch(problem: FiniteSumProblem, x, mu, order=None):
    """One pass x <- x - mu * subgradient f_i(x) over ``order``."""
    if not mu > 0:
        raise ValueError("stepsize must be positive")
    x, order = _prepare(problem, x, np.arange(problem.m) if order is None else order)
    if _is_compiled(problem):
        K.igd_epoch(problem.inner, problem.data, x, mu, order)
        return x
    for i in order:
        x = x - mu * problem._subgradient(i, x)
    return x


def ipl_epoch(problem: FiniteSumProblem, x, mu, order=None):
    """One pass of prox-linear steps on each component's local model."""
    if not mu > 0:
        raise ValueError("stepsize must be positive")
    x, order = _prepare(problem, x, np.arange(problem.m) if order is None else order)
    if _is_compiled(problem):
        K.ipl_epoch(problem.inner, problem.data, x, mu, order)
        return x
    for i in order:
        model = problem._local_model(i, x)
        x = prox_scalar_affine(model.a, model.b, x, mu)
    return x


def prox_residual(problem, i, y, center, mu):
    """Norm of the minimal element of subdiff f_i(y) + (y - center)/mu."""
    model = problem._local_model(i, y)
    c = float(model.a @ y) + model.b
    return K.prox_residual(c, np.ascontiguousarray(model.a), np.ascontiguousarray(y, dtype=float),
                           np.ascontiguousarray(center, dtype=float), mu)


def ipp_step(problem, i, center, mu, inner_tol=IPP_INNER_TOL, max_inner=IPP_MAX_INNER):
    """Proximal step on component i: returns (solution, residual).

    The strongly convex subproblem (mu < 1/tau_i) is solved by repeated
    prox-linear majorization steps until the optimality residual is below
    ``inner_tol``.
    """
    center = np.array(problem._check(i, center), dtype=float)
    tau = problem.component_tau(i)
    if not mu * tau < 1:
        raise ValueError(f"mu = {mu:g} must be below 1/tau_i = {1 / tau:g}")
    if _is_compiled(problem):
        y = np.empty_like(center)
        g = np.empty_like(center)
        res, _ = K.ipp_step(problem.inner, problem.data, i, center, mu, tau, inner_tol,
                            max_inner, y, g)
    else:
        y = center.copy()
        mu_s = 1.0 / (tau + 1.0 / mu)
        for it in range(max_inner + 1):
            res = prox_residual(problem, i, y, center, mu)
            floor = K.residual_floor(y, center, problem._local_model(i, y).a, mu)
            if res <= max(inner_tol, floor) or it == max_inner:
                break
            model = problem._local_model(i, y)
            y = prox_scalar_affine(model.a, model.b, mu_s * (tau * y + center / mu), mu_s)
    if res > max(inner_tol, K.residual_floor(y, center, problem._local_model(i, y).a, mu)):
        raise InnerSolverError(
            f"proximal subproblem for component {i} stalled at residual {res:.3g} "
            f"after {max_inner} passes"
        )
    return y, res


def _max_tau(problem):
    if _is_compiled(problem):
        return float(np.max(problem.taus))
    return max(problem.component_tau(i) for i in range(problem.m))


def ipp_epoch(problem: FiniteSumProblem, x, mu, order=None, inner_tol=IPP_INNER_TOL,
              max_inner=IPP_MAX_INNER):
    """One pass of exact (to ``inner_tol``) proximal steps."""
    if not mu > 0:
        raise ValueError("stepsize must be positive")
    if not inner_tol > 0:
        raise ValueError("inner_tol must be positive")
    tau = _max_tau(problem)
    if not mu * tau < 1:
        raise ValueError(f"mu = {mu:g} must be below 1/tau = {1 / tau:g}")
    x, order = _prepare(problem, x, np.arange(problem.m) if order is None else order)
    if _is_compiled(problem):
        flag = K.ipp_epoch(problem.inner, problem.data, x, mu, order, problem.taus,
                           inner_tol, max_inner)
        if flag < 0:
            raise InnerSolverError(
                f"proximal subproblem for component {int(-flag) - 1} did not reach "
                f"residual {inner_tol:g} within {max_inner} passes"
            )
        return x
    for i in order:
        x, _ = ipp_step(problem, i, x, mu, inner_tol, max_inner)
    return x


def gd_step(problem: FiniteSumProblem, x, mu):
    """x - mu * (1/m) sum_i subgradient f_i(x)."""
    if not mu > 0:
        raise ValueError("stepsize must be positive")
    x = problem._check_point(x)
    return x - mu * problem.full_subgradient(x)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def initial_point(dim, seed):
    """Standard Gaussian starting point shared by every solver in a comparison."""
    return make_rng(seed, "x0").standard_normal(dim)


def _epoch_fn(kind):
    return {
        SolverKind.IGD: igd_epoch,
        SolverKind.SGD: igd_epoch,
        SolverKind.IPL: ipl_epoch,
        SolverKind.SPL: ipl_epoch,
        SolverKind.IPP: ipp_epoch,
    }[kind]


def _reach(problem, kind, schedule, k_next, epochs, x):
    """Upper bound on how far any future iterate can move from ``x``.

    Uses the growth bound ||grad c_i(x)|| <= beta ||x|| of the built-in families:
    every remaining step is at most mu_j beta ||x_current||, so the iterate moves
    at most ||x|| (exp(passes * beta * sum_j mu_j) - 1) from here on.  Returns
    inf when no bound is available.
    """
    beta_fn = getattr(problem, "growth_bound", None)
    if beta_fn is None:
        return math.inf
    beta = beta_fn()
    passes = 1 if kind == SolverKind.GD else problem.m
    total = schedule.remaining_sum(k_next, epochs)
    if kind == SolverKind.IPP:
        if schedule.step(k_next) * beta >= 1:
            return math.inf
        # implicit step: |dx| <= mu beta |x| / (1 - mu beta)
        total /= 1.0 - schedule.step(k_next) * beta
    expo = passes * beta * total
    if expo > 50:
        return math.inf
    return float(np.linalg.norm(x)) * math.expm1(expo)


def run(kind, problem: FiniteSumProblem, schedule, order: OrderPolicy = CYCLIC, x0=None,
        epochs: int = 500, distance: Optional[Callable] = None, track_fval: bool = True,
        moreau: Optional[Callable] = None, stop_when_hopeless: bool = False,
        stop_when_certain: bool = False,
        threshold: float = 1e-8, window: int = 5, inner_tol: float = IPP_INNER_TOL,
        config: Optional[dict] = None) -> RunTrace:
    """Run ``epochs`` outer iterations of solver ``kind``.

    ``distance(x)`` and ``moreau(x)`` are optional per-epoch metrics.  Runs whose
    iterate norm exceeds 1e8 are aborted as diverged.  With
    ``stop_when_hopeless`` a run is also cut short once the remaining stepsizes
    provably cannot bring it within ``threshold`` of the solution set, and with
    ``stop_when_certain`` once every remaining iterate provably stays within it.
    Either early stop leaves a trace shorter than ``epochs`` with
    ``certified_stall`` / ``certified_success`` set.
    """
    kind = SolverKind(kind)
    if epochs < 1:
        raise ValueError("need at least one epoch")
    if kind in (SolverKind.IPL, SolverKind.SPL) and not problem.has_composite:
        raise TypeError(f"{kind.value} needs a problem with composite structure")
    if kind.stochastic and order.kind != OrderKind.IID:
        order = OrderPolicy(OrderKind.IID, order.seed)
    if x0 is None:
        x0 = initial_point(problem.dim, 0)
    x = np.array(problem._check_point(x0), dtype=float)
    m = problem.m

    rec_mu, rec_d, rec_f, rec_g = [], [], [], []
    nan = float("nan")
    status = None
    certified = False
    certified_ok = False
    trace_cfg = dict(config or {})
    trace_cfg.setdefault("solver", kind.value)

    x0_dist = distance(x) if distance else nan
    x0_f = problem.value(x) if track_fval else nan
    x0_g = moreau(x) if moreau else nan

    for k in range(epochs):
        mu = schedule.step(k)
        if kind == SolverKind.GD:
            x = gd_step(problem, x, mu)
        elif kind == SolverKind.IPP:
            x = ipp_epoch(problem, x, mu, order.indices(k, m), inner_tol=inner_tol)
        else:
            x = _epoch_fn(kind)(problem, x, mu, order.indices(k, m))
        nrm = float(np.linalg.norm(x))
        finite = math.isfinite(nrm)
        rec_mu.append(mu)
        rec_d.append(distance(x) if distance and finite else nan)
        rec_f.append(problem.value(x) if track_fval and finite else nan)
        rec_g.append(moreau(x) if moreau and finite else nan)
        if not finite or nrm > DIVERGENCE_BOUND:
            status = Status.DIVERGED
            log.info("%s diverged at epoch %d (|x| = %.3g)", kind.value, k + 1, nrm)
            break
        # only decide early while the whole final window still lies ahead
        if (stop_when_hopeless or stop_when_certain) and distance and k + 1 <= epochs - window:
            reach = _reach(problem, kind, schedule, k + 1, epochs, x)
            if stop_when_hopeless and rec_d[-1] - reach > threshold:
                status = Status.STALLED
                certified = True
                break
            if stop_when_certain and rec_d[-1] + reach <= threshold:
                status = Status.CONVERGED
                certified_ok = True
                break

    if status is None:
        tail = rec_d[-window:]
        ok = distance is not None and len(tail) == window and float(np.mean(tail)) <= threshold
        status = Status.CONVERGED if ok else Status.STALLED

    n = len(rec_mu)
    return RunTrace(
        epoch=np.arange(1, n + 1),
        step_size=np.array(rec_mu),
        dist=np.array(rec_d),
        fval=np.array(rec_f),
        moreau_grad_norm=np.array(rec_g),
        status=status,
        epochs=epochs,
        config=trace_cfg,
        x0_dist=x0_dist,
        x0_fval=x0_f,
        x0_moreau=x0_g,
        x_final=x,
        certified_stall=certified,
        certified_success=certified_ok,
    )
