"""Moreau-envelope stationarity measure.

For lambda < 1/tau the envelope f_lambda(x) = min_y f(y) + |y - x|^2/(2 lambda)
is smooth with gradient (x - prox(x))/lambda, and a small gradient certifies
that prox(x) is nearly stationary.  The measure is evaluated with
lambda = 1/tau_hat, tau_hat = 3 tau by default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import clarabel
import scipy.sparse as sp
from scipy.optimize import lsq_linear

from incopt import _kernels as K
from incopt.problem import CompositeProblem

PROX_MAX_ITER = 2000
# relative size below which |c_i| counts as a kink in the stopping certificate
KINK_EPS = 1e-9


class ProxSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class MoreauEstimate:
    proximal_point: np.ndarray
    grad_norm: float
    envelope_value: float
    residual: float
    iterations: int


def _taus(problem):
    if isinstance(problem, CompositeProblem):
        return np.asarray(problem.taus, dtype=float)
    return np.array([problem.component_tau(i) for i in range(problem.m)], dtype=float)


def _linearize(problem, y):
    if isinstance(problem, CompositeProblem):
        return K.all_linearizations(problem.inner, problem.data, np.ascontiguousarray(y), problem.m)
    models = [problem._local_model(i, y) for i in range(problem.m)]
    G = np.array([md.a for md in models], dtype=float).reshape(problem.m, problem.dim)
    c = G @ y + np.array([md.b for md in models])
    return c, G


def solve_l1_prox(G, h, z, lam, u0=None):
    """min_y (1/m)|G y + h|_1 + |y - z|^2/(2 lam); returns (y, u) with u the dual signs.

    Solved as a QP in (y, t) with -t <= G y + h <= t by an interior-point
    method.  Near a solution many kinks are active at once, which makes the
    box-constrained dual degenerate; the interior-point iterates stay
    well-centred there.  ``u0`` is accepted for interface compatibility.
    """
    m, n = G.shape
    P = sp.block_diag([sp.identity(n) / lam, sp.csc_matrix((m, m))], format="csc")
    q = np.concatenate([-z / lam, np.full(m, 1.0 / m)])
    Gs, I = sp.csc_matrix(G), sp.identity(m)
    A = sp.vstack([sp.hstack([Gs, -I]), sp.hstack([-Gs, -I])], format="csc")
    b = np.concatenate([-h, h])
    st = clarabel.DefaultSettings()
    st.verbose = False
    st.tol_gap_abs = st.tol_gap_rel = st.tol_feas = 1e-12
    st.max_iter = 400
    sol = clarabel.DefaultSolver(P, q, A, b, [clarabel.NonnegativeConeT(2 * m)], st).solve()
    x, d = np.asarray(sol.x), np.asarray(sol.z)
    if not np.all(np.isfinite(x)):
        raise ProxSolverError(f"l1 prox subproblem failed: {sol.status}")
    y, u = x[:n], np.clip(m * (d[:m] - d[m:]), -1.0, 1.0)
    return _polish(G, h, z, lam, y, u)


def _polish(G, h, z, lam, y, u):
    """Snap the k smallest residuals to exact kinks.

    The interior-point answer has an objective gap near 1e-12, so y itself is
    only accurate to about its square root and never lands on a kink.  Each
    candidate (k = 0 is the smooth closed form) is the exact minimizer with
    the chosen kinks pinned; the first one satisfying the KKT conditions is
    the unique minimizer.  Without one the interior-point answer is returned.
    """
    m, n = G.shape
    c = lam / m
    w = G @ y + h
    scale = 1.0 + np.abs(G).sum(axis=1) * np.max(np.abs(y)) + np.abs(h)
    order = np.argsort(np.abs(w) / scale)
    kmax = min(n, int(np.sum(np.abs(w) <= 1e-4 * scale)))
    sign = np.where(w >= 0, 1.0, -1.0)
    for k in range(kmax + 1):
        zero = np.zeros(m, dtype=bool)
        zero[order[:k]] = True
        s = np.where(zero, 0.0, sign)
        base = z - c * (G.T @ s)
        if k:
            GZ = G[zero]
            # project onto {G_Z y + h_Z = 0}; the shift lies in the row space of G_Z
            shift, *_ = np.linalg.lstsq(GZ, GZ @ base + h[zero], rcond=None)
            nu, *_ = np.linalg.lstsq(c * GZ.T, shift, rcond=None)
            if np.any(np.abs(nu) > 1.0 + 1e-9):
                continue
            base = base - shift
            s[zero] = nu
        w2 = G @ base + h
        if np.all(zero | (w2 * sign >= -1e-12 * scale)):
            return base, np.clip(s, -1.0, 1.0)
    return y, u


def _certificate(c, G, y, x, lam, u):
    """Norm of (1/m) sum_i s_i grad c_i(y) + (y - x)/lam over s_i in the eps-sign set of c_i(y).

    Components with |c_i| <= KINK_EPS (1 + |grad c_i| |y|) are treated as
    kinks; their s_i in [-1, 1] are chosen to minimize the norm (bounded
    least squares, seeded with the subproblem duals).  Elsewhere s_i = sign(c_i).
    """
    m = G.shape[0]
    gn = np.linalg.norm(G, axis=1)
    kink = np.abs(c) <= KINK_EPS * (1.0 + gn * np.linalg.norm(y))
    s = np.where(kink, np.clip(u, -1.0, 1.0), np.sign(c))
    r = G.T @ s / m + (y - x) / lam
    if kink.any():
        rest = G[~kink].T @ s[~kink] / m + (y - x) / lam
        fit = lsq_linear(G[kink].T / m, -rest, bounds=(-1.0, 1.0), method="bvls")
        r2 = G[kink].T @ fit.x / m + rest
        if np.linalg.norm(r2) < np.linalg.norm(r):
            r = r2
    return float(np.linalg.norm(r))


def prox_full(problem, x, lam, tol=1e-8, max_iter=PROX_MAX_ITER, y0=None, return_info=False):
    """prox_{lam f}(x) for f = (1/m) sum_i |c_i|, requires lam < 1/tau.

    Iterates y <- argmin of the prox-linear majorizer
    (1/m) sum_i |c_i(y_t) + <grad c_i(y_t), y - y_t>| + tau_bar/2 |y - y_t|^2
    + |y - x|^2/(2 lam) with tau_bar the mean component modulus, until the
    optimality residual of the prox subproblem drops below ``tol``.
    """
    x = np.array(problem._check_point(x), dtype=float)
    taus = _taus(problem)
    if not lam > 0 or not lam * float(np.max(taus)) < 1:
        raise ValueError(f"lambda = {lam:g} must lie in (0, 1/tau)")
    tau_bar = float(np.mean(taus))
    lam_s = 1.0 / (tau_bar + 1.0 / lam)
    y = x.copy() if y0 is None else np.array(y0, dtype=float)
    u = None
    c, G = _linearize(problem, y)
    residual = np.inf
    for it in range(max_iter + 1):
        if u is not None:
            residual = _certificate(c, G, y, x, lam, u)
            floor = 16 * np.finfo(float).eps * np.sqrt(y.size) * (
                np.max(np.abs(y) + np.abs(x)) / lam + np.max(np.abs(G)))
            if residual <= max(tol, floor):
                break
        if it == max_iter:
            raise ProxSolverError(f"prox residual {residual:.3g} above {tol:g} after {max_iter} passes")
        h = c - G @ y
        z = lam_s * (tau_bar * y + x / lam)
        y, u = solve_l1_prox(G, h, z, lam_s, u)
        c, G = _linearize(problem, y)
    if return_info:
        return y, residual, it
    return y


def default_tau(problem):
    return float(np.max(_taus(problem)))


def moreau_grad_norm(problem, x, tau_hat=None, tol=1e-8, tau=None, y0=None) -> MoreauEstimate:
    """|grad f_{1/tau_hat}(x)| = tau_hat |x - prox_{1/tau_hat, f}(x)|, with tau_hat > 2 tau."""
    tau = default_tau(problem) if tau is None else tau
    if tau_hat is None:
        tau_hat = 3.0 * tau
    if not tau_hat > 2.0 * tau or not tau_hat > 0:
        raise ValueError(f"tau_hat = {tau_hat:g} must exceed 2 tau = {2 * tau:g}")
    x = np.array(problem._check_point(x), dtype=float)
    lam = 1.0 / tau_hat
    xbar, residual, iters = prox_full(problem, x, lam, tol=tol, y0=y0, return_info=True)
    gap = float(np.linalg.norm(x - xbar))
    return MoreauEstimate(
        proximal_point=xbar,
        grad_norm=tau_hat * gap,
        envelope_value=problem.value(xbar) + 0.5 * tau_hat * gap**2,
        residual=residual,
        iterations=iters,
    )


class MoreauTracker:
    """Callable for ``solvers.run``: evaluates the measure, warm-starting each prox."""

    def __init__(self, problem, tau_hat=None, tol=1e-8, tau=None):
        self.problem = problem
        self.tau = default_tau(problem) if tau is None else tau
        self.tau_hat = 3.0 * self.tau if tau_hat is None else tau_hat
        self.tol = tol
        self._last = None

    def __call__(self, x):
        est = moreau_grad_norm(self.problem, x, self.tau_hat, self.tol, self.tau, y0=self._last)
        self._last = est.proximal_point
        return est.grad_norm
