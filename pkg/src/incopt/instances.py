"""Synthetic robust recovery instances with planted solutions.

Four families, each with sparse Gaussian outliers (variance 10) on a
``round(p * m)`` subset of measurements:

* ``rms``  -- robust matrix sensing, f_i(U) = |y_i - <A_i, U U^T>|
* ``rpr``  -- robust phase retrieval, f_i(x) = |<a_i, x>^2 - b_i|
* ``bd``   -- robust blind deconvolution, f_i(w, x) = |<a_i, w><c_i, x> - y_i|
* ``rpca`` -- robust PCA, f_pq(U) = |Y_pq - (U U^T)_pq|

Matrix variables are flattened column-major.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from incopt import _kernels as K
from incopt.problem import CompositeProblem
from incopt.rng import make_rng

OUTLIER_STD = math.sqrt(10.0)

# BD distance: log-spaced search over the scaling orbit, then golden-section.
BD_ALPHA_RANGE = (1e-3, 1e3)
BD_GRID_POINTS = 2001


def _n_outliers(p, m):
    return int(math.floor(p * m + 0.5))


def _check_sizes(p, **sizes):
    for name, v in sizes.items():
        if int(v) != v or v < 1:
            raise ValueError(f"{name} must be a positive integer, got {v!r}")
    if not 0.0 <= p < 1.0:
        raise ValueError(f"outlier ratio must lie in [0, 1), got {p!r}")


def _outliers(rng, m, p):
    s = np.zeros(m)
    k = _n_outliers(p, m)
    if k:
        idx = np.sort(rng.permutation(m)[:k])
        s[idx] = OUTLIER_STD * rng.standard_normal(k)
    return s


def _procrustes_dist(U, U_star):
    # min_R ||U - U* R||_F over orthogonal R, computed on the residual directly
    W, _, Vt = np.linalg.svd(U_star.T @ U)
    return float(np.linalg.norm(U - U_star @ (W @ Vt)))


def measure_rms(A, U):
    n = A.shape[1]
    return A.reshape(A.shape[0], n * n) @ (U @ U.T).ravel()


def measure_rpr(A, x):
    return (A @ x) ** 2


def measure_bd(A, C, w, x):
    return (A @ w) * (C @ x)


# ---------------------------------------------------------------------------
# problems
# ---------------------------------------------------------------------------

class RmsProblem(CompositeProblem):
    inner = staticmethod(K.rms_inner)

    def __init__(self, A, y, r):
        m, n, _ = A.shape
        self.A = A
        self.S = np.ascontiguousarray(A + A.transpose(0, 2, 1))
        self.m, self.dim = m, n * r
        self.n, self.r = n, r
        self.data = (self.S, np.ascontiguousarray(y), n, r)

    @cached_property
    def taus(self):
        return np.array([2.0 * np.linalg.norm(Ai, 2) for Ai in self.A])

    def growth_bound(self):
        # ||grad c_i(U)|| = ||S_i U||_F <= ||S_i||_2 ||U||_F
        return float(np.max(self.taus))


class RprProblem(CompositeProblem):
    inner = staticmethod(K.rpr_inner)

    def __init__(self, A, b):
        self.A = np.ascontiguousarray(A)
        self.m, self.dim = A.shape
        self.data = (self.A, np.ascontiguousarray(b))

    @cached_property
    def taus(self):
        return 2.0 * np.sum(self.A ** 2, axis=1)

    def growth_bound(self):
        # ||2 <a_i, x> a_i|| <= 2 ||a_i||^2 ||x||
        return float(np.max(self.taus))


class BdProblem(CompositeProblem):
    inner = staticmethod(K.bd_inner)

    def __init__(self, A, C, y):
        self.A, self.C = np.ascontiguousarray(A), np.ascontiguousarray(C)
        self.m = A.shape[0]
        self.n1, self.n2 = A.shape[1], C.shape[1]
        self.dim = self.n1 + self.n2
        self.data = (self.A, self.C, np.ascontiguousarray(y), self.n1)

    @cached_property
    def taus(self):
        return np.linalg.norm(self.A, axis=1) * np.linalg.norm(self.C, axis=1)

    def growth_bound(self):
        return float(np.max(self.taus))


class RpcaProblem(CompositeProblem):
    inner = staticmethod(K.rpca_inner)

    def __init__(self, Y, r):
        n = Y.shape[0]
        self.n, self.r = n, r
        self.m, self.dim = n * n, n * r
        self.data = (np.ascontiguousarray(Y.ravel()), n, r)

    @cached_property
    def taus(self):
        return np.full(self.m, 2.0)

    def growth_bound(self):
        # grad of (U U^T)_pq touches two rows of U: norm <= 2 ||U||_F
        return 2.0


# ---------------------------------------------------------------------------
# instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Instance:
    kind = ""
    params: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.problem.m

    @property
    def dim(self):
        return self.problem.dim

    def distance(self, x) -> float:
        raise NotImplementedError

    def optimal_value(self) -> float:
        return self.problem.value(self.x_star)

    def arrays(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class RmsInstance(Instance):
    A: np.ndarray = None
    U_star: np.ndarray = None
    y: np.ndarray = None
    s_star: np.ndarray = None
    kind = "rms"

    @cached_property
    def problem(self):
        return RmsProblem(self.A, self.y, self.U_star.shape[1])

    @property
    def x_star(self):
        return self.U_star.ravel(order="F")

    def to_matrix(self, x):
        n, r = self.U_star.shape
        return np.asarray(x, dtype=float).reshape((n, r), order="F")

    def distance(self, x):
        return dist_rms(x, self)

    def arrays(self):
        return dict(A=self.A, U_star=self.U_star, y=self.y, s_star=self.s_star)


@dataclass(frozen=True, eq=False)
class RprInstance(Instance):
    A: np.ndarray = None
    x_star_: np.ndarray = None
    b: np.ndarray = None
    s_star: np.ndarray = None
    kind = "rpr"

    @cached_property
    def problem(self):
        return RprProblem(self.A, self.b)

    @property
    def x_star(self):
        return self.x_star_

    def distance(self, x):
        return dist_rpr(x, self)

    def arrays(self):
        return dict(A=self.A, x_star_=self.x_star_, b=self.b, s_star=self.s_star)


@dataclass(frozen=True, eq=False)
class BdInstance(Instance):
    A: np.ndarray = None
    C: np.ndarray = None
    w_star: np.ndarray = None
    v_star: np.ndarray = None
    y: np.ndarray = None
    s_star: np.ndarray = None
    kind = "bd"

    @cached_property
    def problem(self):
        return BdProblem(self.A, self.C, self.y)

    @property
    def x_star(self):
        return np.concatenate([self.w_star, self.v_star])

    def split(self, x):
        x = np.asarray(x, dtype=float)
        return x[: self.w_star.size], x[self.w_star.size:]

    def distance(self, x):
        w, v = self.split(x)
        return dist_bd(w, v, self)

    def arrays(self):
        return dict(A=self.A, C=self.C, w_star=self.w_star, v_star=self.v_star,
                    y=self.y, s_star=self.s_star)


@dataclass(frozen=True, eq=False)
class RpcaInstance(Instance):
    U_star: np.ndarray = None
    S_star: np.ndarray = None
    Y: np.ndarray = None
    kind = "rpca"

    @cached_property
    def problem(self):
        return RpcaProblem(self.Y, self.U_star.shape[1])

    @property
    def x_star(self):
        return self.U_star.ravel(order="F")

    def distance(self, x):
        n, r = self.U_star.shape
        U = np.asarray(x, dtype=float).reshape((n, r), order="F")
        return _procrustes_dist(U, self.U_star)

    def arrays(self):
        return dict(U_star=self.U_star, S_star=self.S_star, Y=self.Y)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def generate_rms(n=50, r=5, m=None, p=0.3, seed=0) -> RmsInstance:
    m = 5 * n * r if m is None else m
    _check_sizes(p, n=n, r=r, m=m)
    if r > n:
        raise ValueError("rank r cannot exceed n")
    A = make_rng(seed, "rms", "A").standard_normal((m, n, n))
    U = make_rng(seed, "rms", "U").standard_normal((n, r))
    s = _outliers(make_rng(seed, "rms", "outliers"), m, p)
    y = measure_rms(A, U) + s
    return RmsInstance(params=dict(kind="rms", n=n, r=r, m=m, p=p, seed=seed),
                       A=A, U_star=U, y=y, s_star=s)


def generate_rpr(n=100, m=None, p=0.3, seed=0) -> RprInstance:
    m = 10 * n if m is None else m
    _check_sizes(p, n=n, m=m)
    A = make_rng(seed, "rpr", "A").standard_normal((m, n))
    x = make_rng(seed, "rpr", "x").standard_normal(n)
    s = _outliers(make_rng(seed, "rpr", "outliers"), m, p)
    b = measure_rpr(A, x) + s
    return RprInstance(params=dict(kind="rpr", n=n, m=m, p=p, seed=seed),
                       A=A, x_star_=x, b=b, s_star=s)


def generate_bd(n1=50, n2=50, m=None, p=0.3, seed=0) -> BdInstance:
    m = 8 * (n1 + n2) if m is None else m
    _check_sizes(p, n1=n1, n2=n2, m=m)
    A = make_rng(seed, "bd", "A").standard_normal((m, n1))
    C = make_rng(seed, "bd", "C").standard_normal((m, n2))
    w = make_rng(seed, "bd", "w").standard_normal(n1)
    v = make_rng(seed, "bd", "x").standard_normal(n2)
    s = _outliers(make_rng(seed, "bd", "outliers"), m, p)
    y = measure_bd(A, C, w, v) + s
    return BdInstance(params=dict(kind="bd", n1=n1, n2=n2, m=m, p=p, seed=seed),
                      A=A, C=C, w_star=w, v_star=v, y=y, s_star=s)


def generate_rpca(n=30, r=3, p=0.1, seed=0) -> RpcaInstance:
    _check_sizes(p, n=n, r=r)
    if r > n:
        raise ValueError("rank r cannot exceed n")
    U = make_rng(seed, "rpca", "U").standard_normal((n, r))
    S = _outliers(make_rng(seed, "rpca", "outliers"), n * n, p).reshape(n, n)
    Y = U @ U.T + S
    return RpcaInstance(params=dict(kind="rpca", n=n, r=r, p=p, seed=seed),
                        U_star=U, S_star=S, Y=Y)


GENERATORS = {"rms": generate_rms, "rpr": generate_rpr, "bd": generate_bd, "rpca": generate_rpca}


def generate(kind, **kwargs) -> Instance:
    try:
        gen = GENERATORS[kind]
    except KeyError:
        raise ValueError(f"unknown instance kind {kind!r}") from None
    return gen(**kwargs)


# ---------------------------------------------------------------------------
# distances to the solution set
# ---------------------------------------------------------------------------

def dist_rms(U, inst: RmsInstance) -> float:
    n, r = inst.U_star.shape
    U = np.asarray(U, dtype=float)
    if U.shape == (n * r,):
        U = U.reshape((n, r), order="F")
    if U.shape != (n, r):
        raise ValueError(f"expected an {n}x{r} factor, got shape {U.shape}")
    return _procrustes_dist(U, inst.U_star)


def dist_rpr(x, inst: RprInstance) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != inst.x_star_.shape:
        raise ValueError(f"expected shape {inst.x_star_.shape}, got {x.shape}")
    return float(min(np.linalg.norm(x - inst.x_star_), np.linalg.norm(x + inst.x_star_)))


def _golden(fun, lo, hi, tol=1e-12, max_iter=200):
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return (a + b) / 2


def dist_bd(w, x, inst: BdInstance) -> float:
    """min over the scaling orbit {(t w*, x*/t)} of the Euclidean distance.

    Both signs of t are searched since (-w*, -x*) is also a minimizer.
    """
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    if w.shape != inst.w_star.shape or x.shape != inst.v_star.shape:
        raise ValueError("dimension mismatch with the blind deconvolution instance")
    ws, vs = inst.w_star, inst.v_star

    def dist(log_t, sign):
        t = sign * math.exp(log_t)
        return math.sqrt(np.sum((w - t * ws) ** 2) + np.sum((x - vs / t) ** 2))

    lo, hi = math.log(BD_ALPHA_RANGE[0]), math.log(BD_ALPHA_RANGE[1])
    grid = np.linspace(lo, hi, BD_GRID_POINTS)
    step = grid[1] - grid[0]
    best = math.inf
    for sign in (1.0, -1.0):
        t = sign * np.exp(grid)
        vals = (np.sum((w[None, :] - t[:, None] * ws) ** 2, axis=1)
                + np.sum((x[None, :] - vs / t[:, None]) ** 2, axis=1))
        k = int(np.argmin(vals))
        a, b = max(lo, grid[k] - step), min(hi, grid[k] + step)
        lt = _golden(lambda q: dist(q, sign), a, b)
        best = min(best, dist(lt, sign), math.sqrt(vals[k]))
    return best


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

_CLASSES = {"rms": RmsInstance, "rpr": RprInstance, "bd": BdInstance, "rpca": RpcaInstance}


def save_instance(inst: Instance, path) -> None:
    """Write all instance arrays plus generator arguments to an ``.npz`` file."""
    meta = json.dumps(dict(inst.params, kind=inst.kind), sort_keys=True)
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(meta), **inst.arrays())


def load_instance(path) -> Instance:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        arrays = {k: z[k] for k in z.files if k != "__meta__"}
    cls = _CLASSES.get(meta.get("kind"))
    if cls is None:
        raise ValueError(f"unknown instance kind in {path}: {meta.get('kind')!r}")
    return cls(params=meta, **arrays)
