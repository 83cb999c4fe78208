import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from incopt import solvers as S
from incopt.instances import generate_rpr, generate_rms
from incopt.problem import AffineL1Problem, CallableProblem, FiniteSumProblem
from incopt.solvers import (
    CYCLIC, Constant, Geometric, InnerSolverError, OrderKind, OrderPolicy, SolverKind,
    constant_schedule, gd_step, geometric_schedule, igd_epoch, initial_point, ipl_epoch, ipp_epoch,
    ipp_step, prox_residual, prox_scalar_affine, rho_lower_bound, run,
)
from incopt.trace import Status


class Uncompiled(FiniteSumProblem):
    """Routes a compiled problem through the generic Python code paths."""

    def __init__(self, P):
        self.P, self.m, self.dim = P, P.m, P.dim

    has_composite = True

    def _value(self, i, x):
        return self.P._value(i, x)

    def _subgradient(self, i, x):
        return self.P._subgradient(i, x)

    def _local_model(self, i, base):
        return self.P._local_model(i, base)

    def component_tau(self, i):
        return self.P.component_tau(i)


def prox_oracle(a, b, center, mu):
    """Dense grid plus bounded golden-section refinement along the only relevant direction."""
    q = np.linalg.norm(a)
    u = a / q
    t0 = a @ center + b

    def obj(s):  # x = center - s u
        return abs(t0 - s * q) + s * s / (2 * mu)

    R = abs(t0) / q + mu * q + 1.0
    grid = np.linspace(-R, R, 20001)
    k = int(np.argmin([obj(s) for s in grid]))
    h = grid[1] - grid[0]
    r = minimize_scalar(obj, bounds=(grid[k] - h, grid[k] + h), method="bounded",
                        options=dict(xatol=1e-13))
    return center - r.x * u


# --- prox-linear closed form ---------------------------------------------------

def test_prox_scalar_affine_examples():
    np.testing.assert_allclose(prox_scalar_affine([1.0, 0.0], 0.0, [2.0, 0.0], 1.0), [1.0, 0.0])
    np.testing.assert_allclose(prox_scalar_affine([1.0, 0.0], 0.0, [0.3, 0.0], 1.0), [0.0, 0.0])
    np.testing.assert_array_equal(prox_scalar_affine([0.0, 0.0], 5.0, [0.7, -1.0], 1.0), [0.7, -1.0])


def test_prox_scalar_affine_against_grid_oracle():
    rng = np.random.default_rng(0)
    for _ in range(40):
        n = rng.integers(1, 5)
        a, c = rng.standard_normal(n), rng.standard_normal(n)
        b, mu = rng.standard_normal(), 10 ** rng.uniform(-2, 1)
        np.testing.assert_allclose(prox_scalar_affine(a, b, c, mu), prox_oracle(a, b, c, mu), atol=1e-8)


@settings(max_examples=100, deadline=None)
@given(a=st.lists(st.floats(-10, 10).filter(lambda v: v == 0 or abs(v) > 1e-3), min_size=3, max_size=3),
       c=st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       b=st.floats(-10, 10), mu=st.floats(1e-3, 10))
def test_prox_scalar_affine_optimality(a, c, b, mu):
    a, c = np.array(a), np.array(c)
    x = prox_scalar_affine(a, b, c, mu)
    lin = a @ x + b
    # 0 in s a + (x - c)/mu with s in sign(lin)
    if np.linalg.norm(a) == 0:
        np.testing.assert_array_equal(x, c)
        return
    s = np.clip(-(x - c) @ a / mu / (a @ a), -1, 1)
    assert np.linalg.norm(s * a + (x - c) / mu) <= 1e-8 * (1 + np.linalg.norm(c) / mu + np.linalg.norm(a))
    if abs(lin) > 1e-9 * (1 + np.linalg.norm(a) * np.linalg.norm(x) + abs(b)):
        assert s == pytest.approx(np.sign(lin), abs=1e-8)


# --- schedules ------------------------------------------------------------------

def test_constant_schedule_examples():
    assert constant_schedule(10, 99).mu == 1 / (10 * 10)
    assert constant_schedule(1, 0).mu == 1.0
    assert constant_schedule(5, 24).mu == 1 / 25
    with pytest.raises(ValueError):
        constant_schedule(0, 3)


def test_geometric_schedule_defaults():
    g = geometric_schedule(1.0, 1.0, 1.0, 1)
    assert g.mu0 == 0.2
    assert g.rho == math.sqrt(0.8)
    assert rho_lower_bound(1.0, 1.0, 1.0, 1, 0.2) == pytest.approx(math.sqrt(0.8), rel=1e-15)
    g2 = geometric_schedule(1.0, 1.0, 1.0, 1, mu0=0.2)
    assert g2.rho == pytest.approx(math.sqrt(0.8), rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(alpha=st.floats(1e-3, 10), ratio=st.floats(1.0, 100), tau=st.floats(1e-3, 1e3),
       m=st.integers(1, 10_000))
def test_geometric_default_attains_minimal_rho(alpha, ratio, tau, m):
    L = alpha * ratio
    g = geometric_schedule(alpha, tau, L, m)
    assert g.mu0 == pytest.approx(alpha**2 / (5 * m * tau * L**2), rel=1e-14)
    assert g.rho == pytest.approx(math.sqrt(1 - alpha**2 / (5 * L**2)), rel=1e-12)
    assert 0 < g.rho < 1


def test_geometric_schedule_errors():
    with pytest.raises(ValueError):
        geometric_schedule(2.0, 1.0, 1.0, 1)  # L < alpha
    with pytest.raises(ValueError):
        geometric_schedule(1.0, 1.0, 1.0, 1, mu0=0.3)
    with pytest.raises(ValueError):
        geometric_schedule(1.0, 1.0, 1.0, 1, mu0=0.2, rho=0.5)
    with pytest.raises(ValueError):
        geometric_schedule(1.0, 1.0, 1.0, 1, rho=1.0)
    with pytest.raises(ValueError):
        Geometric(0.1, 1.2)
    with pytest.raises(ValueError):
        Constant(0.0)


def test_geometric_steps_exact():
    g = Geometric(0.3, 0.7)
    for k in range(20):
        assert g.step(k) == 0.3 * 0.7**k
    assert g.remaining_sum(3, 100) >= sum(g.step(j) for j in range(3, 100))
    assert Constant(0.5).remaining_sum(2, 10) == 4.0


# --- orders ---------------------------------------------------------------------

def test_order_policies():
    np.testing.assert_array_equal(CYCLIC.indices(4, 6), np.arange(6))
    sh = OrderPolicy(OrderKind.SHUFFLED, seed=3)
    p0, p1 = sh.indices(0, 50), sh.indices(1, 50)
    assert sorted(p0) == list(range(50)) and not np.array_equal(p0, p1)
    np.testing.assert_array_equal(p0, OrderPolicy(OrderKind.SHUFFLED, seed=3).indices(0, 50))
    iid = OrderPolicy(OrderKind.IID, seed=3).indices(2, 1000)
    assert iid.size == 1000 and iid.min() >= 0 and iid.max() < 1000
    assert len(np.unique(iid)) < 1000  # repeats occur when sampling with replacement


def test_stochastic_kinds():
    assert SolverKind.SGD.stochastic and SolverKind.SPL.stochastic
    assert not SolverKind.IGD.stochastic


# --- epochs ---------------------------------------------------------------------

def abs_m(m):
    return AffineL1Problem(np.ones((m, 1)), np.zeros(m))


def test_igd_examples(abs1):
    assert igd_epoch(abs1, [1.0], 0.5)[0] == 0.5
    assert igd_epoch(abs_m(2), [1.0], 0.4)[0] == pytest.approx(0.2)
    assert igd_epoch(abs1, [0.0], 0.5)[0] == 0.0
    with pytest.raises(ValueError):
        igd_epoch(abs1, [1.0, 2.0], 0.5)


def test_gd_examples():
    assert gd_step(abs_m(3), [1.0], 0.5)[0] == 0.5
    assert gd_step(abs_m(3), [0.0], 0.5)[0] == 0.0
    two = AffineL1Problem([[1.0], [1.0]], [0.0, 2.0])
    assert gd_step(two, [1.0], 0.5)[0] == 1.0


def test_ipl_fixed_point_on_exact_model():
    P = AffineL1Problem([[1.0, 2.0]], [3.0])
    x = np.array([1.0, 1.0])
    np.testing.assert_array_equal(ipl_epoch(P, x, 0.7), x)


def test_ipl_two_steps_compose_closed_form():
    P = generate_rpr(n=3, m=2, p=0.0, seed=0).problem
    x0 = np.array([0.4, -1.0, 0.3])
    mu = 0.05
    x = x0.copy()
    for i in range(2):
        md = P.local_model(i, x)
        x = prox_scalar_affine(md.a, md.b, x, mu)
    np.testing.assert_allclose(ipl_epoch(P, x0, mu), x, rtol=1e-13, atol=1e-14)


def test_ipl_inner_residuals(small_rpr):
    P = small_rpr.problem
    x = initial_point(P.dim, 1)
    mu = 0.3 / P.m
    for i in range(P.m):
        md = P.local_model(i, x)
        y = prox_scalar_affine(md.a, md.b, x, mu)
        lin = md.a @ y + md.b
        s = np.clip(-(y - x) @ md.a / mu / (md.a @ md.a), -1, 1)
        assert np.linalg.norm(s * md.a + (y - x) / mu) <= 1e-8 * (1 + np.linalg.norm(x) / mu)
        if abs(lin) > 1e-10:
            assert s == pytest.approx(np.sign(lin))
        x = y


@settings(max_examples=30, deadline=None)
@given(mu=st.floats(1e-8, 1e-4), seed=st.integers(0, 1000))
def test_small_step_length_bound(small_rpr, mu, seed):
    P = small_rpr.problem
    x = initial_point(P.dim, seed)
    L = 2 * np.max(np.linalg.norm(P.A, axis=1) ** 2) * (np.linalg.norm(x) + 1)
    for ep in (igd_epoch, ipl_epoch):
        assert np.linalg.norm(ep(P, x, mu) - x) <= P.m * mu * L * (1 + 1e-6) + 1e-15


@pytest.mark.parametrize("fixture", ["small_rpr", "small_rms", "small_bd", "small_rpca"])
@pytest.mark.parametrize("epoch", [igd_epoch, ipl_epoch])
def test_compiled_matches_python_path(fixture, epoch, request):
    P = request.getfixturevalue(fixture).problem
    x = initial_point(P.dim, 2)
    order = OrderPolicy(OrderKind.SHUFFLED, 1).indices(0, P.m)
    mu = 0.05 / P.m
    np.testing.assert_allclose(epoch(P, x, mu, order), epoch(Uncompiled(P), x, mu, order),
                               rtol=1e-9, atol=1e-12)


def test_epochs_reject_bad_order(abs1):
    with pytest.raises(IndexError):
        igd_epoch(abs1, [1.0], 0.1, [1])


# --- incremental proximal point ---------------------------------------------------

def test_ipp_soft_threshold(abs1):
    y, res = ipp_step(abs1, 0, [2.0], 0.5)
    assert y[0] == pytest.approx(1.5) and res <= 1e-12
    assert ipp_step(abs1, 0, [0.3], 0.5)[0][0] == pytest.approx(0.0, abs=1e-12)
    assert ipp_epoch(abs1, [2.0], 0.5)[0] == pytest.approx(1.5)


def test_ipp_fixed_point(abs1):
    y, res = ipp_step(abs1, 0, [0.0], 0.5)
    assert y[0] == 0.0 and res == 0.0


def test_ipp_rejects_large_steps(small_rpr):
    P = small_rpr.problem
    tau = np.max(P.taus)
    with pytest.raises(ValueError):
        ipp_epoch(P, np.zeros(P.dim), 1.0 / tau)
    i = int(np.argmax(P.taus))
    with pytest.raises(ValueError):
        ipp_step(P, i, np.zeros(P.dim), 1.01 / P.taus[i])
    with pytest.raises(ValueError):
        ipp_epoch(P, np.zeros(P.dim), 0.1 / tau, inner_tol=0.0)


@pytest.mark.parametrize("fixture", ["small_rpr", "small_rms", "small_bd"])
def test_ipp_inner_certificate(fixture, request):
    P = request.getfixturevalue(fixture).problem
    rng = np.random.default_rng(4)
    for _ in range(40):
        i = int(rng.integers(P.m))
        center = 2 * rng.standard_normal(P.dim)
        mu = rng.uniform(0.01, 0.99) / P.component_tau(i)
        y, res = ipp_step(P, i, center, mu)
        assert res <= 1e-7
        assert prox_residual(P, i, y, center, mu) == pytest.approx(res, abs=1e-12)
        # y is no worse than the center for the prox objective
        assert P.component_value(i, y) + np.sum((y - center) ** 2) / (2 * mu) <= P.component_value(i, center) + 1e-12


def test_ipp_python_path_agrees(small_rpr):
    P = small_rpr.problem
    x = initial_point(P.dim, 0)
    mu = 0.5 / np.max(P.taus)
    np.testing.assert_allclose(ipp_epoch(P, x, mu), ipp_epoch(Uncompiled(P), x, mu), atol=1e-6)


def test_ipp_inner_cap_raises(small_rpr):
    P = small_rpr.problem
    i = int(np.argmax(P.taus))
    with pytest.raises(InnerSolverError):
        ipp_step(Uncompiled(P), i, 3 * initial_point(P.dim, 1), 0.999 / P.taus[i], inner_tol=1e-14,
                 max_inner=1)


# --- driver -----------------------------------------------------------------------

def test_run_single_epoch_matches_direct_call(small_rpr):
    P = small_rpr.problem
    x0 = initial_point(P.dim, 0)
    mu = 1.0 / P.m
    for kind, ep in [("igd", igd_epoch), ("ipl", ipl_epoch)]:
        tr = run(kind, P, Constant(mu), x0=x0, epochs=1)
        np.testing.assert_array_equal(tr.x_final, ep(P, x0, mu))
    tr = run("gd", P, Constant(mu), x0=x0, epochs=1)
    np.testing.assert_array_equal(tr.x_final, gd_step(P, x0, mu))


def test_run_records_and_schedule(small_rpr):
    tr = run("igd", small_rpr.problem, Geometric(0.5 / 80, 0.9), epochs=12, distance=small_rpr.distance)
    assert len(tr) == 12 and tr.epoch[0] == 1 and tr.epoch[-1] == 12
    np.testing.assert_array_equal(tr.step_size, [0.5 / 80 * 0.9**k for k in range(12)])
    assert np.all(np.isnan(tr.moreau_grad_norm))
    assert tr.x0_dist == small_rpr.distance(initial_point(small_rpr.dim, 0))


def test_run_is_deterministic(small_rms):
    P = small_rms.problem
    kw = dict(epochs=15, distance=small_rms.distance, order=OrderPolicy(OrderKind.SHUFFLED, 5))
    a = run("igd", P, Geometric(2.0 / P.m, 0.8), **kw)
    b = run("igd", P, Geometric(2.0 / P.m, 0.8), **kw)
    np.testing.assert_array_equal(a.dist, b.dist)
    np.testing.assert_array_equal(a.x_final, b.x_final)


def test_run_divergence_abort(small_rpr):
    tr = run("igd", small_rpr.problem, Constant(5.0), epochs=50, distance=small_rpr.distance)
    assert tr.status == Status.DIVERGED and len(tr) < 50


def test_run_converges_on_small_rpr(small_rpr):
    tr = run("ipl", small_rpr.problem, Geometric(3.0 / 80, 0.8), epochs=150, distance=small_rpr.distance)
    assert tr.status == Status.CONVERGED
    assert np.mean(tr.dist[-5:]) <= 1e-8


def test_run_rejects_incompatible_problem():
    P = CallableProblem([lambda x: abs(x[0])], [lambda x: np.sign(x)], dim=1)
    with pytest.raises(TypeError):
        run("ipl", P, Constant(0.1), epochs=2)
    with pytest.raises(ValueError):
        run("igd", P, Constant(0.1), epochs=0)


def test_stochastic_run_uses_iid_sampling(small_rpr):
    P = small_rpr.problem
    a = run("sgd", P, Constant(0.1 / P.m), order=OrderPolicy(OrderKind.IID, 1), epochs=3)
    b = run("sgd", P, Constant(0.1 / P.m), order=OrderPolicy(OrderKind.CYCLIC, 1), epochs=3)
    c = run("igd", P, Constant(0.1 / P.m), epochs=3)
    np.testing.assert_array_equal(a.x_final, b.x_final)
    assert not np.array_equal(a.x_final, c.x_final)


@pytest.mark.parametrize("kind", ["igd", "ipl", "ipp", "gd"])
@pytest.mark.parametrize("rho,c", [(0.5, 1.0), (0.6, 3.0), (0.8, 3.0), (0.9, 0.5)])
def test_certified_early_stops_agree_with_full_runs(small_rpr, kind, rho, c):
    P = small_rpr.problem
    mu0 = c / P.m * (P.m if kind == "gd" else 1)
    if kind == "ipp" and mu0 * np.max(P.taus) >= 1:
        mu0 = 0.9 / np.max(P.taus)
    kw = dict(epochs=120, distance=small_rpr.distance, track_fval=False)
    full = run(kind, P, Geometric(mu0, rho), **kw)
    fast = run(kind, P, Geometric(mu0, rho), stop_when_hopeless=True, stop_when_certain=True, **kw)
    ok_full = full.status == Status.CONVERGED
    if fast.certified_stall:
        assert not ok_full
    if fast.certified_success:
        assert ok_full
    assert (fast.status == Status.CONVERGED) == ok_full
    n = len(fast)
    np.testing.assert_array_equal(fast.dist, full.dist[:n])


def test_initial_point_seeded():
    np.testing.assert_array_equal(initial_point(5, 3), initial_point(5, 3))
    assert not np.array_equal(initial_point(5, 3), initial_point(5, 4))
