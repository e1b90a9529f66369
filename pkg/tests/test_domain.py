import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdode import kernels
from rdode.domain import (
    PI_GLYPH_FILL,
    ScalarField,
    VectorField,
    apply_discrete_laplacian,
    build_grid,
    discrete_neumann_eigenvalues,
    laplacian,
    laplacian_matrix,
    lp_norm,
    make_mask,
    neumann_eigenvalues,
    pi_glyph_spec,
)
from rdode.errors import InvalidArgumentError


def test_build_grid_examples():
    g = build_grid(4, 4, 1.0, 1.0)
    assert g.ncells == 16 and g.hx == 0.25 and g.hy == 0.25
    g = build_grid(2, 8, 2.0, 1.0)
    assert g.hx == 1.0 and g.hy == 0.125
    with pytest.raises(InvalidArgumentError):
        build_grid(1, 4, 1, 1)
    with pytest.raises(InvalidArgumentError):
        build_grid(4, 4, 0.0, 1.0)


def test_one_dimensional_grid():
    g = build_grid(8, 1, 2.0, 1.0)
    assert g.is_1d and g.shape == (8, 1)
    x = g.centers()[0]
    assert np.allclose(x[:, 0], (np.arange(8) + 0.5) * 0.25)


def test_cell_centres():
    g = build_grid(3, 2, 3.0, 1.0)
    x, y = g.centers()
    assert x[2, 1] == 2.5 and y[2, 1] == 0.75


def test_neumann_eigenvalue_examples():
    g = build_grid(8, 8, 1.0, 1.0)
    assert neumann_eigenvalues(g, 1) == [(0.0, (0, 0))]
    ev = neumann_eigenvalues(g, 3)
    assert ev[1] == (pytest.approx(math.pi**2), (0, 1))
    assert ev[2] == (pytest.approx(math.pi**2), (1, 0))
    g2 = build_grid(8, 8, 2.0, 1.0)
    assert neumann_eigenvalues(g2, 2)[1] == (pytest.approx(math.pi**2 / 4), (1, 0))
    with pytest.raises(InvalidArgumentError):
        neumann_eigenvalues(g, 0)


@pytest.mark.parametrize("lx,ly", [(1.0, 1.0), (2.0, 1.0), (1.0, 3.0)])
def test_neumann_eigenvalues_sorted_and_gap(lx, ly):
    g = build_grid(8, 8, lx, ly)
    mus = [m for m, _ in neumann_eigenvalues(g, 40)]
    assert mus[0] == 0.0 and all(a <= b for a, b in zip(mus, mus[1:]))
    assert mus[1] - mus[0] == pytest.approx(min((math.pi / lx) ** 2, (math.pi / ly) ** 2))


def test_neumann_eigenvalues_1d_only_m_zero():
    g = build_grid(8, 1, 1.0, 1.0)
    assert all(mode[1] == 0 for _, mode in neumann_eigenvalues(g, 5))


def test_laplacian_of_constant_is_zero():
    g = build_grid(7, 5, 1.3, 0.7)
    assert np.array_equal(apply_discrete_laplacian(ScalarField.constant(g, 3.2)).values, np.zeros(g.shape))


def test_laplacian_spike():
    g = build_grid(5, 6, 1.0, 2.0)
    v = np.zeros(g.shape)
    v[2, 3] = 1.0
    L = laplacian(v, g)
    ihx2, ihy2 = 1 / g.hx**2, 1 / g.hy**2
    assert L[2, 3] == pytest.approx(-2 * ihx2 - 2 * ihy2)
    for (i, j), val in {(1, 3): ihx2, (3, 3): ihx2, (2, 2): ihy2, (2, 4): ihy2}.items():
        assert L[i, j] == pytest.approx(val)
    assert np.count_nonzero(L) == 5


def test_laplacian_cosine_refinement():
    errs = []
    for n in (16, 32, 64):
        g = build_grid(n, 4, 2.0, 1.0)
        x, _ = g.centers()
        f = np.cos(np.pi * x / g.lx)
        errs.append(np.max(np.abs(laplacian(f, g) + (np.pi / g.lx) ** 2 * f)))
    assert 3.6 < errs[0] / errs[1] < 4.4 and 3.6 < errs[1] / errs[2] < 4.4


def test_laplacian_matches_matrix_and_is_symmetric(rng):
    g = build_grid(9, 6, 1.0, 0.5)
    L = laplacian_matrix(g)
    assert abs(L - L.T).max() == 0.0
    v = rng.standard_normal(g.shape)
    assert np.allclose((L @ v.ravel()).reshape(g.shape), laplacian(v, g), rtol=1e-13, atol=1e-10)
    assert np.allclose(L @ np.ones(g.ncells), 0.0)


def test_laplacian_1d():
    g = build_grid(6, 1, 1.0, 1.0)
    v = np.arange(6.0)[:, None] ** 2
    L = laplacian(v, g)
    assert L[2, 0] == pytest.approx(2.0 / g.hx**2)
    assert np.sum(L) == pytest.approx(0.0, abs=1e-9)


def test_backends_agree(rng):
    comp = kernels.compiled_backend()
    if comp is None:
        pytest.skip("compiled backend not built")
    g = build_grid(13, 11, 1.0, 2.0)
    v = rng.standard_normal(g.shape)
    a = comp.laplacian(v, g.hx, g.hy, np.empty_like(v))
    b = kernels.python_backend.laplacian(v, g.hx, g.hy, np.empty_like(v))
    assert np.array_equal(a, b)


def test_discrete_eigenvalues_match_matrix():
    g = build_grid(6, 4, 1.0, 0.8)
    dense = np.sort(-np.linalg.eigvalsh(laplacian_matrix(g).toarray()))
    assert np.allclose(dense, np.sort(discrete_neumann_eigenvalues(g).ravel()), atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(1, 12), st.integers(0, 2**31 - 1))
def test_laplacian_conserves_mass(nx, ny, seed):
    g = build_grid(nx, ny, 1.0, 1.5)
    v = np.random.default_rng(seed).uniform(-5, 5, g.shape)
    L = laplacian(v, g)
    assert abs(L.sum()) <= 1e-12 * np.abs(L).sum() + 1e-12


def test_masks_full_rectangle_random(grid64):
    full = make_mask(grid64, {"kind": "full"})
    assert full.measure(2) == 0 and full.nlabels == 1
    r1 = make_mask(grid64, {"kind": "random", "fraction": 0.1, "seed": 42})
    r2 = make_mask(grid64, {"kind": "random", "fraction": 0.1, "seed": 42})
    assert r1.count(2) == 410 and np.array_equal(r1.labels, r2.labels)
    assert not np.array_equal(r1.labels, make_mask(grid64, {"kind": "random", "fraction": 0.1, "seed": 43}).labels)
    h = grid64.hx
    one = make_mask(grid64, {"kind": "rectangle", "x0": 10 * h, "y0": 3 * h, "x1": 11 * h, "y1": 4 * h})
    assert one.count(2) == 1 and one.measure(2) == pytest.approx(grid64.cell_volume)
    assert one.labels[10, 3] == 2


def test_mask_errors(grid64):
    with pytest.raises(InvalidArgumentError):
        make_mask(grid64, {"kind": "rectangle", "x0": 0.5, "y0": 0.5, "x1": 1.5, "y1": 0.9})
    with pytest.raises(InvalidArgumentError):
        make_mask(grid64, {"kind": "random", "fraction": 1.5})
    with pytest.raises(InvalidArgumentError):
        make_mask(grid64, {"kind": "hexagon"})


@pytest.mark.parametrize("spec", [
    {"kind": "random", "fraction": 0.3, "seed": 1},
    {"kind": "pi_glyph", "x0": 0.2, "y0": 0.2, "x1": 0.7, "y1": 0.8},
    {"kind": "multi", "parts": [{"kind": "rectangle", "x0": 0.1, "y0": 0.1, "x1": 0.3, "y1": 0.3},
                                {"kind": "rectangle", "x0": 0.6, "y0": 0.6, "x1": 0.9, "y1": 0.8}]},
])
def test_mask_measures_partition(grid64, spec):
    m = make_mask(grid64, spec)
    total = sum(m.measure(lab) for lab in range(1, m.nlabels + 1))
    assert total == pytest.approx(grid64.area, rel=1e-14)
    assert sum(m.count(lab) for lab in range(1, m.nlabels + 1)) == grid64.ncells


def test_multi_mask_labels(grid64):
    m = make_mask(grid64, {"kind": "multi", "parts": [
        {"kind": "rectangle", "x0": 0.1, "y0": 0.1, "x1": 0.3, "y1": 0.3},
        {"kind": "rectangle", "x0": 0.6, "y0": 0.6, "x1": 0.9, "y1": 0.8}]})
    assert m.nlabels == 3 and m.count(2) > 0 and m.count(3) > 0


def test_pi_glyph_shape(grid64):
    spec = pi_glyph_spec(grid64, 0.01)
    m = make_mask(grid64, spec)
    assert m.measure(2) <= 0.01 * grid64.area
    assert m.measure(2) == pytest.approx(0.01, rel=0.5)
    big = make_mask(build_grid(400, 400, 1, 1), pi_glyph_spec(build_grid(400, 400, 1, 1), 0.2))
    assert big.measure(2) / 0.2 == pytest.approx(1.0, rel=0.05)
    assert PI_GLYPH_FILL == pytest.approx(0.25 + 0.75 * 0.4)


def test_field_norms(rng):
    g = build_grid(8, 5, 2.0, 0.5)
    v = rng.standard_normal(g.shape)
    f = ScalarField(g, v)
    for p in (1, 2, 3.5):
        assert f.lp_norm(p) <= g.area ** (1 / p) * f.sup_norm() * (1 + 1e-12)
    assert lp_norm(np.ones(g.shape), g, 2) == pytest.approx(math.sqrt(g.area))
    assert lp_norm(v, g, math.inf) == f.sup_norm()
    assert (f + f).sup_norm() == pytest.approx(2 * f.sup_norm())
    assert (2 * f).integral() == pytest.approx(2 * f.integral())
    w = VectorField.constant(g, [1.0, 2.0])
    assert w.n == 2 and w.sup_norm() == 2.0
    with pytest.raises(InvalidArgumentError):
        ScalarField(g, np.full(g.shape, np.nan))
    with pytest.raises(InvalidArgumentError):
        ScalarField(g, np.zeros((3, 3)))
