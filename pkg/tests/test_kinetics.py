import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdode.errors import InvalidArgumentError, NoRootFoundError
from rdode.kinetics import (
    CANONICAL_RHO,
    ConstantState,
    KineticsModel,
    branches_at,
    constant_steady_states,
    cubic_eigroots,
    derive_canonical_parameters,
    fitzhugh_folds,
    fitzhugh_model,
    fitzhugh_roots,
    linearization_at,
    newton_branch,
    newton_root,
    validate_model,
)


def _bisect_root(fun, a, b):
    fa = fun(a)
    for _ in range(200):
        m = 0.5 * (a + b)
        if np.sign(fun(m)) == np.sign(fa):
            a, fa = m, fun(m)
        else:
            b = m
    return 0.5 * (a + b)


def test_fitzhugh_closed_forms():
    for beta in (0.1, 0.5, 0.9):
        m = fitzhugh_model(beta, 0.3, 0.7, 0.1)
        z = np.zeros(1)
        assert m.f(z, np.asarray(0.0))[0] == 0.0
        assert m.f(np.ones(1), np.asarray(0.0))[0] == 0.0
        for v in (-1.0, 0.0, 2.0):
            assert m.f_u(z, np.asarray(v))[0, 0] == -beta
    m = fitzhugh_model(0.5, 0.3, 0.7, 0.1)
    u = np.array([0.8])
    assert m.f_u(u, np.asarray(0.0))[0, 0] == pytest.approx(-3 * 0.64 + 2 * 0.8 * 1.5 - 0.5)
    assert m.g(u, np.asarray(0.2)) == pytest.approx(0.3 * 0.8 - 0.7 * 0.2 - 0.1)


def test_fitzhugh_validation():
    with pytest.raises(InvalidArgumentError):
        fitzhugh_model(0.5, -1.0, 1.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        fitzhugh_model(1.5, 1.0, 1.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        fitzhugh_model(0.5, 1.0, 1.0, -0.1)
    fitzhugh_model(0.5, 1.0, 1.0, 0.0)  # rho = 0 is allowed


def test_branches_at_zero():
    m = fitzhugh_model(0.5, 1, 1, 0)
    roots = [r.u[0] for r in branches_at(m, 0.0)]
    assert np.allclose(roots, [0.0, 0.5, 1.0], atol=1e-12, rtol=0)


def test_single_root_far_tail():
    # phi(u) = u(1-u)(u-0.5) is monotone decreasing for u < u_lo
    m = fitzhugh_model(0.5, 1, 1, 0)
    roots = branches_at(m, 10.0)
    assert len(roots) == 1
    oracle = _bisect_root(lambda u: u * (1 - u) * (u - 0.5) - 10.0, -10.0, 0.0)
    assert roots[0].u[0] == pytest.approx(oracle, abs=1e-12)
    # discriminant of u^3 - 1.5u^2 + 0.5u + 10 is negative
    a, b, c, d = 1.0, -1.5, 0.5, 10.0
    disc = 18 * a * b * c * d - 4 * b**3 * d + b**2 * c**2 - 4 * a * c**3 - 27 * a**2 * d**2
    assert disc < 0


def test_fold_root_degenerate():
    beta = 0.5
    u_lo, u_hi, v_min, v_max = fitzhugh_folds(beta)
    # numerically solve discriminant = 0 in v and compare with the fold values
    def disc(v):
        b, c, d = -(1 + beta), beta, v
        return 18 * b * c * d - 4 * b**3 * d + b**2 * c**2 - 4 * c**3 - 27 * d**2
    v_fold = _bisect_root(disc, 0.03, 0.06)
    assert v_fold == pytest.approx(v_max, abs=1e-12)
    roots = fitzhugh_roots(v_max, beta)
    assert len(roots) == 2
    assert [r.degenerate for r in roots] == [False, True]
    assert roots[1].u[0] == pytest.approx(u_hi, abs=1e-5)


def test_root_reassembly(rng):
    n = 2000
    betas = rng.uniform(0.05, 0.95, n)
    vs = rng.uniform(-0.3, 0.3, n)
    checked = 0
    for beta, v in zip(betas, vs):
        roots = fitzhugh_roots(v, beta, cluster_tol=1e-9)
        if len(roots) != 3:
            continue
        r = np.array([x.u[0] for x in roots])
        coeffs = np.poly(r)
        expect = np.array([1.0, -(1 + beta), beta, v])
        assert np.max(np.abs(coeffs - expect)) <= 1e-9 * np.max(np.abs(expect))
        checked += 1
    assert checked > 100


def test_roots_stable_under_small_shift():
    beta = 0.5
    for v in (-0.03, 0.0, 0.02):
        a = [r.u[0] for r in fitzhugh_roots(v, beta)]
        b = [r.u[0] for r in fitzhugh_roots(v + 1e-9, beta)]
        assert len(a) == len(b) and np.max(np.abs(np.subtract(a, b))) <= 1e-6


def test_root_residual_invariant(rng):
    m = fitzhugh_model(0.3, 1, 1, 0)
    for v in rng.uniform(-1, 1, 200):
        for r in branches_at(m, v):
            if not r.degenerate:
                assert abs(m.f(r.u, np.asarray(v))[0]) <= 1e-12 * (1 + abs(r.u[0]) + abs(v))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-0.5, 0.5))
def test_named_branches_solve_f(beta, v):
    m = fitzhugh_model(beta, 1, 1, 0)
    for b in m.branches.values():
        if b.contains(v) and min(abs(v - b.v_lo), abs(v - b.v_hi)) > 1e-6:
            u = b(np.array([v]))
            assert u.shape == (1, 1)
            assert abs(m.f(u, np.array([v]))[0, 0]) <= 1e-12 * (1 + abs(u[0, 0]) + abs(v))


def test_branch_ordering():
    m = fitzhugh_model(0.5, 1, 1, 0)
    v = np.linspace(-0.04, 0.04, 9)
    left, mid, right = (m.branch(n)(v)[0] for n in ("left", "middle", "right"))
    assert np.all(left < mid) and np.all(mid < right)
    u_lo, u_hi, _, _ = fitzhugh_folds(0.5)
    assert np.all(left <= u_lo) and np.all(right >= u_hi)
    with pytest.raises(InvalidArgumentError):
        m.branch("upper")
    pair = m.branch_pair("left", "right")
    assert pair.v_lo < pair.v_hi


def test_cubic_eigroots_batch():
    z = cubic_eigroots([-6.0, -3.0], [11.0, 3.0], [-6.0, -1.0])
    assert np.allclose(np.sort(z[0].real), [1, 2, 3])
    assert np.allclose(z[1].real, 1.0, atol=1e-4)


def test_constant_states_canonical(model, states):
    assert len(states) == 3
    u = [s.u_bar[0] for s in states]
    assert u[0] < u[1] < u[2]
    for s in states:
        scale = 1 + np.abs(s.u_bar).max() + abs(s.v_bar)
        assert abs(model.f(s.u_bar, np.asarray(s.v_bar))[0]) <= 1e-10 * scale
        assert abs(model.g(s.u_bar, np.asarray(s.v_bar))) <= 1e-10 * scale
    assert states[0].v_bar == pytest.approx(-0.01, abs=1e-14)


def test_constant_states_match_dense_sampling(model, states):
    # oracle: sign changes of f(u, (sigma u - rho)/delta) on a fine grid
    p = model.params
    u = np.linspace(-1, 2, 300001)
    r = u * (1 - u) * (u - p["beta"]) - (p["sigma"] * u - p["rho"]) / p["delta"]
    idx = np.flatnonzero(np.sign(r[:-1]) != np.sign(r[1:]))
    assert len(idx) == 3
    for k, s in zip(idx, states):
        assert u[k] <= s.u_bar[0] <= u[k + 1]


def test_constant_states_simple_cases():
    m = fitzhugh_model(0.5, 1.0, 1.0, 0.0)
    st_ = constant_steady_states(m, ((-1.0, 2.0), None), 256)
    assert len(st_) == 1 and abs(st_[0].u_bar[0]) < 1e-12
    m = fitzhugh_model(0.5, 0.05, 1.0, CANONICAL_RHO)
    assert constant_steady_states(m, ((1.5, 2.0), None), 64) == []


def test_canonical_parameters_derivation():
    p = derive_canonical_parameters()
    assert p["rho"] == pytest.approx(CANONICAL_RHO, rel=1e-12)


def test_linearization(model):
    m = fitzhugh_model(0.5, 0.3, 0.7, 0.1)
    A, B, C, d = linearization_at(m, [0.0], 0.0)
    assert A.shape == (1, 1) and A[0, 0] == -0.5 and B[0, 0] == -1.0 and C[0, 0] == 0.3 and d == -0.7
    assert validate_model(model, rng=1) < 1e-5


def test_validate_rejects_wrong_jacobian():
    good = fitzhugh_model(0.5, 1, 1, 0)
    bad = KineticsModel(1, good.f, good.g, lambda u, v: 2 * good.f_u(u, v), good.f_v, good.g_u, good.g_v)
    with pytest.raises(InvalidArgumentError):
        validate_model(bad, rng=0)


def _two_species():
    # f = (u1 (1 - u1) (u1 - 0.5) - v, u2 - u1), n = 2
    def f(u, v):
        return np.stack([u[0] * (1 - u[0]) * (u[0] - 0.5) - v, u[1] - u[0]])

    def f_u(u, v):
        z = np.zeros_like(u[0] + 0.0 * np.asarray(v))
        d = -3 * u[0] ** 2 + 3 * u[0] - 0.5
        return np.array([[d, z], [z - 1.0, z + 1.0]])

    def g(u, v):
        return 0.1 * u[0] + 0.1 * u[1] - v - 0.01

    def f_v(u, v):
        return np.stack([np.full(np.shape(u[0] + 0.0 * np.asarray(v)), -1.0), np.zeros(np.shape(u[0] + 0.0 * np.asarray(v)))])

    def g_u(u, v):
        s = np.shape(u[0] + 0.0 * np.asarray(v))
        return np.stack([np.full(s, 0.1), np.full(s, 0.1)])

    def g_v(u, v):
        return np.full(np.shape(u[0] + 0.0 * np.asarray(v)), -1.0)

    return KineticsModel(2, f, g, f_u, f_v, g_u, g_v, name="two")


def test_general_n_newton_paths():
    m = _two_species()
    assert validate_model(m, rng=2) < 1e-5
    roots = branches_at(m, 0.0, seeds=[[-0.1, 0.0], [0.45, 0.4], [1.2, 1.0], [0.01, 0.0]])
    assert [round(r.u[0], 10) for r in roots] == [0.0, 0.5, 1.0]
    assert np.allclose(roots[2].u, [1.0, 1.0])
    with pytest.raises(InvalidArgumentError):
        branches_at(m, 0.0)
    br = newton_branch(m, "low", [0.0, 0.0], -0.04, 0.04)
    u = br(np.array([0.01, -0.02]))
    assert np.max(np.abs(m.f(u, np.array([0.01, -0.02])))) < 1e-13
    with pytest.raises(NoRootFoundError):
        newton_root(fitzhugh_model(0.5, 1, 1, 0), 0.0, [0.21132486540518713], max_iter=0)


def test_constant_state_roundtrip():
    s = ConstantState(np.array([0.25]), -0.1)
    assert ConstantState.from_dict(s.to_dict()) == s or np.array_equal(ConstantState.from_dict(s.to_dict()).u_bar, s.u_bar)
