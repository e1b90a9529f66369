import numpy as np
import pytest

from rdode.domain import ScalarField, build_grid, discrete_neumann_eigenvalues, laplacian, make_mask, pi_glyph_spec
from rdode.errors import BranchDomainError, InvalidArgumentError, NonConvergenceError, ResonanceError
from rdode.kinetics import ConstantState, linearization_at
from rdode.stability import det_ratio
from rdode.stationary import (
    ResolventOperator,
    StationarySolution,
    fixed_point_construct,
    multi_branch_construct,
    newton_stationary,
    residuals,
    resolvent_solve,
)


def test_resolvent_constant_rhs():
    g = build_grid(12, 9, 1.0, 2.0)
    for gamma in (0.1, 3.0, 80.0):
        v = resolvent_solve(g, gamma, -1.0, ScalarField.constant(g, 2.5))
        assert np.allclose(v.values, -2.5, rtol=0, atol=1e-14)


def test_resolvent_cosine_mode():
    errs = []
    for n in (16, 32, 64):
        g = build_grid(n, 8, 1.0, 1.0)
        x, _ = g.centers()
        f = np.cos(np.pi * x)
        # b = 0 resonates with the constant mode; f is mean-free so the compatible solve applies
        v = resolvent_solve(g, 1.0, 0.0, f, compatible=True)
        mu1 = discrete_neumann_eigenvalues(g)[1, 0]
        assert np.allclose(v, -f / mu1, atol=1e-12)
        errs.append(np.max(np.abs(v + f / np.pi**2)))
    assert errs[0] > errs[1] > errs[2]


def test_resolvent_forward_identity(rng):
    g = build_grid(20, 14, 1.5, 1.0)
    f = rng.standard_normal(g.shape)
    op = ResolventOperator(g, 7.0, 3.3)
    v = op.solve(f)
    assert np.max(np.abs(op.apply_forward(v) - f)) <= 1e-12 * np.max(np.abs(f)) * 1e2


def test_resolvent_resonance():
    g = build_grid(16, 16, 1.0, 1.0)
    mu = discrete_neumann_eigenvalues(g)
    with pytest.raises(ResonanceError) as exc:
        ResolventOperator(g, 2.0, 2.0 * mu[1, 0])
    assert exc.value.mode in ((1, 0), (0, 1))
    with pytest.raises(ResonanceError):
        ResolventOperator(g, 1.0, 0.0)
    with pytest.raises(ResonanceError):
        resolvent_solve(g, 1.0, 0.0, np.ones(g.shape), compatible=True)
    with pytest.raises(InvalidArgumentError):
        ResolventOperator(g, 0.0, -1.0)


def test_full_mask_gives_constant(model, states):
    g = build_grid(16, 16, 1.0, 1.0)
    mask = make_mask(g, {"kind": "full"})
    sol = fixed_point_construct(model, g, mask, states[0], ("left", "right"), 5.0)
    assert sol.diagnostics["iterations"] == 1
    assert np.max(np.abs(sol.V - states[0].v_bar)) < 1e-16
    assert np.max(np.abs(sol.U - states[0].u_bar[0])) < 1e-15


def test_same_branch_gives_constant(model, states, small_case):
    g, mask = small_case
    sol = fixed_point_construct(model, g, mask, states[0], ("left", "left"), 5.0)
    assert sol.eps_measured < 1e-15


def test_constant_state_residuals(model, states):
    g = build_grid(8, 8, 1.0, 1.0)
    for s in states:
        sol = StationarySolution(g, np.full((1, 8, 8), s.u_bar[0]), np.full((8, 8), s.v_bar), None, [], s, 1.0)
        f_res, g_res = residuals(model, g, 3.0, sol)
        assert f_res <= 1e-10 and g_res <= 1e-10


def test_residual_spike_lower_bound(model, stable50, grid64):
    V = stable50.V.copy()
    V[20, 30] += 0.01
    bumped = StationarySolution(grid64, stable50.U, V, stable50.mask, stable50.branches, stable50.base, 50.0)
    _, g_res = residuals(model, grid64, 50.0, bumped)
    assert g_res >= 50.0 * 0.01 / max(grid64.hx, grid64.hy) ** 2 / 2


def test_canonical_construction(model, states, stable50, grid64):
    d = stable50.diagnostics
    assert d["iterations"] <= 200 and d["final_update_norm"] <= 1e-10
    scale = 1 + np.abs(stable50.U).max() + np.abs(stable50.V).max()
    assert d["f_res"] <= 1e-12 * scale and d["g_res"] <= 1e-8 * scale
    assert d["clamped_evaluations"] == 0
    base = states[0]
    k1 = model.branch("left")(np.array(base.v_bar))[0]
    k2 = model.branch("right")(np.array(base.v_bar))[0]
    jump = abs(k2 - k1)
    assert stable50.eps_measured <= 0.05 * jump
    inside = stable50.U[0][stable50.mask.labels == 2]
    outside = stable50.U[0][stable50.mask.labels == 1]
    assert np.min(inside) - np.max(outside) == pytest.approx(jump, rel=0.05)
    # every V in both branch intervals
    assert np.all(model.branch("right").contains(stable50.V[stable50.mask.labels == 2]))


def test_contraction_ratio(stable50):
    ratios = stable50.diagnostics["contraction_ratios"]
    assert ratios and max(ratios[-5:]) < 0.95


def test_shift_equals_determinant_ratio(model, states, stable50):
    A0, B0, C0, d0 = linearization_at(model, states[0].u_bar, states[0].v_bar)
    assert stable50.diagnostics["shift_b"] == det_ratio(A0, B0, C0, d0)
    assert stable50.diagnostics["shift_b"] == pytest.approx(d0 - (C0 @ np.linalg.solve(A0, B0))[0, 0], rel=1e-12)


def test_newton_oracle(model, states):
    g = build_grid(32, 32, 1.0, 1.0)
    mask = make_mask(g, pi_glyph_spec(g, 0.01))
    sol = fixed_point_construct(model, g, mask, states[0], ("left", "right"), 50.0, tol=1e-12)
    V, U, hist = newton_stationary(model, g, mask, states[0], ("left", "right"), 50.0)
    assert hist[-1] < 1e-10
    assert np.max(np.abs(V - sol.V)) <= 1e-7


def test_eps_shrinks_with_mask(model, states, grid64):
    eps = []
    for frac in (0.01, 0.005, 0.0025):
        mask = make_mask(grid64, pi_glyph_spec(grid64, frac))
        eps.append(fixed_point_construct(model, grid64, mask, states[0], ("left", "right"), 50.0).eps_measured)
    assert eps[0] > eps[1] > eps[2]


def test_multi_branch_reduces_to_two_branch(model, states, small_case):
    g, mask = small_case
    a = fixed_point_construct(model, g, mask, states[0], ("left", "right"), 5.0)
    b = multi_branch_construct(model, g, mask, states[0], ["left", "right"], 5.0)
    assert np.array_equal(a.V, b.V) and np.array_equal(a.U, b.U)
    assert a.diagnostics["update_history"] == b.diagnostics["update_history"]


def test_multi_branch_zero_measure_labels(model, states):
    g = build_grid(16, 16, 1.0, 1.0)
    mask = make_mask(g, {"kind": "full"})
    sol = multi_branch_construct(model, g, mask, states[0], ["left", "right", "right"], 5.0)
    assert sol.eps_measured == 0.0


def test_multi_branch_two_patches(model, states):
    g = build_grid(32, 32, 1.0, 1.0)
    mask = make_mask(g, {"kind": "multi", "parts": [
        {"kind": "rectangle", "x0": 0.15, "y0": 0.15, "x1": 0.3, "y1": 0.3},
        {"kind": "rectangle", "x0": 0.65, "y0": 0.6, "x1": 0.8, "y1": 0.75}]})
    names = ["left", "right", "right"]
    sol = multi_branch_construct(model, g, mask, states[0], names, 20.0, tol=1e-12)
    for lab in (2, 3):
        assert np.all(sol.U[0][mask.labels == lab] > 0.9)
    assert np.all(sol.U[0][mask.labels == 1] < 0.1)
    assert sol.diagnostics["g_res"] < 1e-9
    V, U, hist = newton_stationary(model, g, mask, states[0], names, 20.0)
    assert np.max(np.abs(V - sol.V)) <= 1e-7
    assert sol.branch_assignment() == {"1": "left", "2": "right", "3": "right"}


def test_large_region_fails_cleanly():
    # with stronger coupling (sigma = 0.4) a 30% label-2 region pushes V past the right fold
    from rdode.kinetics import fitzhugh_model

    u1 = float(fitzhugh_model(0.5, 1, 1, 0).branch("left")(np.array(-0.01))[0])
    m = fitzhugh_model(0.5, 0.4, 1.0, 0.4 * u1 + 0.01)
    base = ConstantState([u1], -0.01)
    g = build_grid(64, 64, 1.0, 1.0)
    small = fixed_point_construct(m, g, make_mask(g, pi_glyph_spec(g, 0.01)), base, ("left", "right"), 50.0)
    assert small.diagnostics["g_res"] < 1e-8
    with pytest.raises(BranchDomainError) as exc:
        fixed_point_construct(m, g, make_mask(g, pi_glyph_spec(g, 0.3)), base, ("left", "right"), 50.0)
    assert exc.value.cells > 0


def test_nonconvergence_reports_history(model, states, small_case):
    g, mask = small_case
    with pytest.raises(NonConvergenceError) as exc:
        fixed_point_construct(model, g, mask, states[0], ("left", "right"), 5.0, tol=1e-30, max_iter=3)
    assert len(exc.value.history) == 3


def test_base_state_must_lie_on_branch(model, states, small_case):
    g, mask = small_case
    with pytest.raises(InvalidArgumentError):
        fixed_point_construct(model, g, mask, states[0], ("right", "left"), 5.0)
    with pytest.raises(InvalidArgumentError):
        fixed_point_construct(model, g, mask, states[0], ("left",), 5.0)


def test_middle_branch_construction(model, states, small_case):
    g, mask = small_case
    sol = fixed_point_construct(model, g, mask, states[0], ("left", "middle"), 5.0)
    mid = sol.U[0][mask.labels == 2]
    assert np.all((mid > 0.2) & (mid < 0.8))
    assert sol.diagnostics["g_res"] < 1e-8


def test_one_dimensional_construction(model, states):
    g = build_grid(128, 1, 1.0, 1.0)
    mask = make_mask(g, {"kind": "rectangle", "x0": 0.45, "y0": 0.0, "x1": 0.55, "y1": 1.0})
    sol = fixed_point_construct(model, g, mask, states[0], ("left", "right"), 1.0, tol=1e-12)
    r = 1.0 * laplacian(sol.V, g) + model.g(sol.U, sol.V)
    assert np.max(np.abs(r)) < 1e-9
