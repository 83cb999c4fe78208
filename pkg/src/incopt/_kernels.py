"""Compiled inner loops.

Every built-in component has the form f_i(x) = |c_i(x)| with smooth scalar c_i.
A family is described by an ``inner(data, i, x, g) -> c`` function that writes
grad c_i(x) into ``g`` and returns c_i(x).  The epoch drivers below are generic
over ``inner`` so one compiled driver serves every family.
"""

import numpy as np
from numba import njit

# |c| below this (relative to the size of the linear term) is treated as a kink
# when certifying proximal subproblem solutions.
KINK_RTOL = 1e-12

# reassociation lets LLVM vectorize the dot-product reductions; results stay
# deterministic for a given build and CPU.
_REASSOC = {"reassoc"}


# ---------------------------------------------------------------------------
# component families
# ---------------------------------------------------------------------------

@njit(nogil=True, cache=True, fastmath=_REASSOC)
def affine_inner(data, i, x, g):
    # c_i(x) = <a_i, x> - b_i
    A, b = data
    t = 0.0
    for j in range(x.size):
        t += A[i, j] * x[j]
        g[j] = A[i, j]
    return t - b[i]


@njit(nogil=True, cache=True, fastmath=_REASSOC)
def rpr_inner(data, i, x, g):
    # c_i(x) = <a_i, x>^2 - b_i
    A, b = data
    t = 0.0
    for j in range(x.size):
        t += A[i, j] * x[j]
    for j in range(x.size):
        g[j] = 2.0 * t * A[i, j]
    return t * t - b[i]


@njit(nogil=True, cache=True, fastmath=_REASSOC)
def rms_inner(data, i, x, g):
    # c_i(U) = <A_i, U U^T> - y_i with S_i = A_i + A_i^T; x is U column-major,
    # so row k of x.reshape(r, n) is column k of U.
    S, y, n, r = data
    Si = S[i]
    c = 0.0
    for k in range(r):
        off = k * n
        for a in range(n):
            acc = 0.0
            for b in range(n):
                acc += Si[a, b] * x[off + b]
            g[off + a] = acc
            c += x[off + a] * acc
    return 0.5 * c - y[i]


@njit(nogil=True, cache=True, fastmath=_REASSOC)
def bd_inner(data, i, x, g):
    # c_i(w, v) = <a_i, w> <c_i, v> - y_i with x = [w; v]
    A, C, y, n1 = data
    n2 = x.size - n1
    u = 0.0
    for j in range(n1):
        u += A[i, j] * x[j]
    v = 0.0
    for j in range(n2):
        v += C[i, j] * x[n1 + j]
    for j in range(n1):
        g[j] = v * A[i, j]
    for j in range(n2):
        g[n1 + j] = u * C[i, j]
    return u * v - y[i]


@njit(nogil=True, cache=True)
def rpca_inner(data, k, x, g):
    # component k <-> entry (p, q) = divmod(k, n); c = (U U^T)_pq - Y_pq
    Y, n, r = data
    p = k // n
    q = k - p * n
    for j in range(x.size):
        g[j] = 0.0
    s = 0.0
    for l in range(r):
        up = x[l * n + p]
        uq = x[l * n + q]
        s += up * uq
        g[l * n + p] += uq
        g[l * n + q] += up
    return s - Y[k]


# ---------------------------------------------------------------------------
# epoch drivers
# ---------------------------------------------------------------------------

@njit(nogil=True, cache=True)
def _sign(c):
    if c > 0.0:
        return 1.0
    if c < 0.0:
        return -1.0
    return 0.0


@njit(nogil=True)
def igd_epoch(inner, data, x, mu, order):
    g = np.empty_like(x)
    for i in order:
        s = mu * _sign(inner(data, i, x, g))
        if s != 0.0:
            for j in range(x.size):
                x[j] -= s * g[j]


@njit(nogil=True)
def ipl_epoch(inner, data, x, mu, order):
    g = np.empty_like(x)
    for i in order:
        c = inner(data, i, x, g)
        q = 0.0
        for j in range(x.size):
            q += g[j] * g[j]
        if q == 0.0:
            continue
        s = min(max(c / q, -mu), mu)
        for j in range(x.size):
            x[j] -= s * g[j]


@njit(nogil=True)
def residual_floor(y, center, g, mu):
    """Round-off level of the prox residual: below this it cannot be resolved."""
    a = 0.0
    b = 0.0
    for j in range(y.size):
        a = max(a, abs(y[j]) + abs(center[j]))
        b = max(b, abs(g[j]))
    return 16.0 * 2.220446049250313e-16 * np.sqrt(y.size) * (a / mu + b)


@njit(nogil=True)
def prox_residual(c, g, y, center, mu):
    """Min-norm element of sign-subdifferential * g + (y - center)/mu."""
    gv = 0.0
    q = 0.0
    yn = 0.0
    for j in range(y.size):
        gv += g[j] * (y[j] - center[j]) / mu
        q += g[j] * g[j]
        yn += y[j] * y[j]
    if abs(c) <= KINK_RTOL * (1.0 + np.sqrt(q * yn)) and q > 0.0:
        s = min(max(-gv / q, -1.0), 1.0)
    else:
        s = _sign(c)
    r = 0.0
    for j in range(y.size):
        d = s * g[j] + (y[j] - center[j]) / mu
        r += d * d
    return np.sqrt(r)


@njit(nogil=True)
def _mm_step(c, g, y, center, mu, tau, out):
    """Closed-form minimizer of |c + <g, v - y>| + tau/2|v - y|^2 + |v - center|^2/(2 mu)."""
    mu_s = 1.0 / (tau + 1.0 / mu)
    q = 0.0
    t0 = c
    for j in range(y.size):
        out[j] = mu_s * (tau * y[j] + center[j] / mu)
        t0 += g[j] * (out[j] - y[j])
        q += g[j] * g[j]
    if q > 0.0:
        s = min(max(t0 / q, -mu_s), mu_s)
        for j in range(y.size):
            out[j] -= s * g[j]


@njit(nogil=True)
def _prox_objective(inner, data, i, v, center, mu, g):
    c = inner(data, i, v, g)
    d = 0.0
    for j in range(v.size):
        d += (v[j] - center[j]) ** 2
    return abs(c) + d / (2.0 * mu)


ANDERSON_MEMORY = 5


@njit(nogil=True)
def ipp_step(inner, data, i, center, mu, tau, tol, max_iter, y, g):
    """Solve min |c_i(y)| + |y - center|^2/(2 mu) for mu < 1/tau.

    Writes the solution into ``y`` and returns (residual, passes).  Each pass
    takes the closed-form minimizer of the prox-linear majorizer
    |linearization at y_t| + tau/2 |y - y_t|^2 + |y - center|^2/(2 mu), then
    tries an Anderson extrapolation over the last few passes, kept only if it
    lowers the true subproblem objective.
    """
    n = y.size
    M = ANDERSON_MEMORY
    Yh = np.zeros((M, n))  # past iterates
    Fh = np.zeros((M, n))  # past fixed-point residuals T(y) - y
    ty = np.empty(n)
    ya = np.empty(n)
    gs = np.empty(n)
    for j in range(n):
        y[j] = center[j]
    hist = 0
    it = 0
    while True:
        c = inner(data, i, y, g)
        res = prox_residual(c, g, y, center, mu)
        if res <= max(tol, residual_floor(y, center, g, mu)) or it >= max_iter:
            return res, it
        _mm_step(c, g, y, center, mu, tau, ty)
        slot = hist % M
        for j in range(n):
            Yh[slot, j] = y[j]
            Fh[slot, j] = ty[j] - y[j]
        hist += 1
        k = min(hist, M)
        accepted = False
        if k >= 2:
            # min_gamma |f_last - sum_j gamma_j (f_last - f_j)| over older slots j
            last = slot
            D = np.empty((n, k - 1))
            col = 0
            for h in range(k):
                if h == last:
                    continue
                for j in range(n):
                    D[j, col] = Fh[last, j] - Fh[h, j]
                col += 1
            G = D.T @ D
            reg = 1e-12 * (np.trace(G) + 1e-300)
            for a in range(k - 1):
                G[a, a] += reg
            rhs = D.T @ Fh[last]
            gam = np.linalg.solve(G, rhs)
            for j in range(n):
                ya[j] = ty[j]
            col = 0
            for h in range(k):
                if h == last:
                    continue
                for j in range(n):
                    ya[j] -= gam[col] * ((Yh[last, j] + Fh[last, j]) - (Yh[h, j] + Fh[h, j]))
                col += 1
            f_a = _prox_objective(inner, data, i, ya, center, mu, gs)
            f_t = _prox_objective(inner, data, i, ty, center, mu, gs)
            if f_a < f_t:
                accepted = True
        if accepted:
            for j in range(n):
                y[j] = ya[j]
        else:
            for j in range(n):
                y[j] = ty[j]
            if k >= 2:
                hist = 0
        it += 1


@njit(nogil=True)
def ipp_epoch(inner, data, x, mu, order, taus, tol, max_iter):
    """Returns the worst inner residual, or -(index+1) if an inner solve hit the cap."""
    g = np.empty_like(x)
    y = np.empty_like(x)
    worst = 0.0
    for i in order:
        res, it = ipp_step(inner, data, i, x, mu, taus[i], tol, max_iter, y, g)
        if res > max(tol, residual_floor(y, x, g, mu)):
            return -(i + 1.0)
        worst = max(worst, res)
        for j in range(x.size):
            x[j] = y[j]
    return worst


@njit(nogil=True)
def full_subgradient(inner, data, x, m, out):
    """out <- (1/m) sum_i sign(c_i(x)) grad c_i(x); returns (1/m) sum_i |c_i(x)|."""
    g = np.empty_like(x)
    for j in range(x.size):
        out[j] = 0.0
    val = 0.0
    for i in range(m):
        c = inner(data, i, x, g)
        val += abs(c)
        s = _sign(c)
        if s != 0.0:
            for j in range(x.size):
                out[j] += s * g[j]
    for j in range(x.size):
        out[j] /= m
    return val / m


@njit(nogil=True)
def all_residuals(inner, data, x, m):
    g = np.empty_like(x)
    out = np.empty(m)
    for i in range(m):
        out[i] = inner(data, i, x, g)
    return out


@njit(nogil=True)
def max_grad_norm(inner, data, x, m):
    g = np.empty_like(x)
    best = 0.0
    for i in range(m):
        c = inner(data, i, x, g)
        if c == 0.0:
            continue
        q = 0.0
        for j in range(x.size):
            q += g[j] * g[j]
        best = max(best, q)
    return np.sqrt(best)


@njit(nogil=True)
def all_linearizations(inner, data, x, m):
    """Rows of grad c_i(x) and the values c_i(x) for every component."""
    g = np.empty_like(x)
    G = np.empty((m, x.size))
    c = np.empty(m)
    for i in range(m):
        c[i] = inner(data, i, x, g)
        for j in range(x.size):
            G[i, j] = g[j]
    return c, G
