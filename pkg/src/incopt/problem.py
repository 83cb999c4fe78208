"""Finite-sum problem oracles and regularity parameters.

A problem is f(x) = (1/m) sum_i f_i(x).  Component oracles are indexed from 0
and always return the unaveraged f_i; only :meth:`FiniteSumProblem.value`
applies the 1/m factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from incopt import _kernels as K
from incopt.rng import make_rng


class NoCompositeStructure(TypeError):
    """Raised when a local model is requested from a black-box component."""


@dataclass(frozen=True)
class CompositeComponent:
    """Local model x -> |<a, x> + b| of one component around a base point."""

    a: np.ndarray
    b: float

    def __call__(self, x):
        return abs(float(np.dot(self.a, x)) + self.b)


@dataclass(frozen=True)
class RegularityParams:
    tau: float
    lipschitz: float
    sharpness: Optional[float] = None
    region_radius: Optional[float] = None

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if not self.lipschitz > 0:
            raise ValueError("lipschitz constant must be positive")
        if self.sharpness is not None:
            if not self.sharpness > 0:
                raise ValueError("sharpness must be positive")
            if self.lipschitz < self.sharpness:
                raise ValueError(
                    f"L = {self.lipschitz:g} < alpha = {self.sharpness:g}; L >= alpha must hold"
                )


class FiniteSumProblem:
    """Base class: ``m`` components over R^dim.

    Subclasses implement ``_value`` and ``_subgradient``; composite problems
    additionally implement ``_local_model``.
    """

    m: int
    dim: int
    regularity: Optional[RegularityParams] = None

    def _check(self, i, x):
        if not 0 <= i < self.m:
            raise IndexError(f"component index {i} out of range [0, {self.m})")
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a point of shape ({self.dim},), got {x.shape}")
        return x

    def _check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a point of shape ({self.dim},), got {x.shape}")
        return x

    def component_value(self, i, x) -> float:
        return float(self._value(i, self._check(i, x)))

    def component_subgradient(self, i, x) -> np.ndarray:
        return np.asarray(self._subgradient(i, self._check(i, x)), dtype=float)

    def local_model(self, i, base) -> CompositeComponent:
        return self._local_model(i, self._check(i, base))

    @property
    def has_composite(self) -> bool:
        return False

    def _local_model(self, i, base):
        raise NoCompositeStructure(f"{type(self).__name__} has no composite structure")

    def component_tau(self, i) -> float:
        """Weak-convexity modulus of component i (defaults to the global tau)."""
        if self.regularity is None:
            raise ValueError("problem carries no weak-convexity modulus")
        return self.regularity.tau

    def value(self, x) -> float:
        x = self._check_point(x)
        return sum(self._value(i, x) for i in range(self.m)) / self.m

    def full_subgradient(self, x) -> np.ndarray:
        x = self._check_point(x)
        return sum(np.asarray(self._subgradient(i, x)) for i in range(self.m)) / self.m


class CallableProblem(FiniteSumProblem):
    """Black-box components given as Python callables."""

    def __init__(self, values: Sequence[Callable], subgradients: Sequence[Callable], dim: int,
                 regularity=None):
        if len(values) != len(subgradients) or not values:
            raise ValueError("need one value and one subgradient oracle per component")
        self._values = list(values)
        self._subgrads = list(subgradients)
        self.m = len(values)
        self.dim = dim
        self.regularity = regularity

    def _value(self, i, x):
        return self._values[i](x)

    def _subgradient(self, i, x):
        return np.atleast_1d(self._subgrads[i](x))


class CompositeProblem(FiniteSumProblem):
    """Components f_i(x) = |c_i(x)| backed by a compiled ``inner`` function.

    ``inner(data, i, x, g)`` returns c_i(x) and writes grad c_i(x) into g.
    Subclasses set ``inner``, ``data``, ``m``, ``dim`` and ``taus`` (per-component
    weak-convexity moduli).
    """

    inner = None
    data: tuple = ()
    taus: np.ndarray

    @property
    def has_composite(self):
        return True

    def residual(self, i, x):
        """(c_i(x), grad c_i(x))."""
        g = np.empty(self.dim)
        c = self.inner(self.data, i, np.ascontiguousarray(x, dtype=float), g)
        return c, g

    def _value(self, i, x):
        return abs(self.residual(i, x)[0])

    def _subgradient(self, i, x):
        c, g = self.residual(i, x)
        # sign(0) = 0: minimal-norm choice at kinks
        return np.sign(c) * g

    def _local_model(self, i, base):
        c, g = self.residual(i, base)
        return CompositeComponent(a=g, b=float(c - g @ base))

    def component_tau(self, i):
        return float(self.taus[i])

    def residuals(self, x) -> np.ndarray:
        x = np.ascontiguousarray(self._check_point(x))
        return K.all_residuals(self.inner, self.data, x, self.m)

    def value(self, x):
        return float(np.mean(np.abs(self.residuals(x))))

    def full_subgradient(self, x):
        x = np.ascontiguousarray(self._check_point(x))
        out = np.empty(self.dim)
        K.full_subgradient(self.inner, self.data, x, self.m, out)
        return out


class AffineL1Problem(CompositeProblem):
    """f_i(x) = |<a_i, x> - b_i|: convex, tau = 0, local models are exact."""

    inner = staticmethod(K.affine_inner)

    def __init__(self, A, b):
        A = np.ascontiguousarray(np.atleast_2d(np.asarray(A, dtype=float)))
        b = np.ascontiguousarray(np.asarray(b, dtype=float).reshape(-1))
        if A.shape[0] != b.shape[0]:
            raise ValueError("A and b disagree on the number of components")
        self.A, self.b = A, b
        self.m, self.dim = A.shape
        self.data = (A, b)
        self.taus = np.zeros(self.m)
        self.regularity = RegularityParams(
            tau=0.0, lipschitz=float(np.max(np.linalg.norm(A, axis=1))) or 1.0
        )


def estimate_tau(instance) -> float:
    """Closed-form weak-convexity modulus for a generated instance."""
    kind = getattr(instance, "kind", None)
    if kind == "rms":
        return 2.0 * max(np.linalg.norm(Ai, 2) for Ai in instance.A)
    if kind == "rpr":
        return 2.0 * float(np.max(np.sum(instance.A ** 2, axis=1)))
    if kind == "bd":
        return float(np.max(np.linalg.norm(instance.A, axis=1) * np.linalg.norm(instance.C, axis=1)))
    if kind == "rpca":
        return 2.0
    raise ValueError(f"unknown instance kind {kind!r}")


LIPSCHITZ_INFLATION = 1.2


def estimate_lipschitz(problem: FiniteSumProblem, region_center, region_radius: float,
                       samples: int = 100, seed: int = 0) -> float:
    """Sampled bound on component subgradient norms over a ball, inflated by 1.2.

    Points are drawn uniformly from the ball of ``region_radius`` around
    ``region_center`` (the center itself is always included).
    """
    if not region_radius > 0:
        raise ValueError("region_radius must be positive")
    if samples < 1:
        raise ValueError("need at least one sample")
    center = problem._check_point(region_center)
    compiled = isinstance(problem, CompositeProblem)
    rng = make_rng(seed, "lipschitz")
    n = problem.dim
    best = 0.0
    for s in range(samples + 1):
        if s == 0:
            x = center
        else:
            d = rng.standard_normal(n)
            d *= region_radius * rng.random() ** (1.0 / n) / np.linalg.norm(d)
            x = center + d
        if compiled:
            best = max(best, K.max_grad_norm(problem.inner, problem.data, np.ascontiguousarray(x), problem.m))
        else:
            for i in range(problem.m):
                best = max(best, float(np.linalg.norm(problem._subgradient(i, x))))
    L = LIPSCHITZ_INFLATION * best
    if not L > 0:
        raise ValueError("all sampled subgradients vanish; L must be positive")
    return L
