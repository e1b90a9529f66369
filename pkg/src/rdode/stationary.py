"""Discontinuous stationary solutions by fixed-point iteration.

The elliptic equation ``gamma Delta V + g(U, V) = 0`` with ``U = k_l(V)`` on
the cells of label ``l`` is rewritten around the constant state as

    w = R[(b w - h_1(w + Vbar)) 1_{Omega_1}] + ... + R[(b w - h_J(w + Vbar)) 1_{Omega_J}],

with ``h_l(v) = g(k_l(v), v)``, ``R = (gamma Delta_h + b)^{-1}`` and
``b = h_1'(Vbar)``.  ``R`` is applied exactly in the discrete cosine basis.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import (
    Grid,
    ScalarField,
    SubdomainMask,
    VectorField,
    discrete_neumann_eigenvalues,
    laplacian,
    laplacian_matrix,
    sup_norm,
)
from .errors import (
    BranchDomainError,
    InvalidArgumentError,
    NonConvergenceError,
    ResidualError,
    ResonanceError,
)
from .kinetics import ConstantState, KineticsModel, linearization_at
from .stability import det_ratio

log = logging.getLogger(__name__)

RESONANCE_TOL = 1e-8


class ResolventOperator:
    """``(gamma Delta_h + b)^{-1}`` on a Neumann grid, diagonal in the DCT-II basis.

    With ``compatible=True`` resonant modes are tolerated: ``solve`` then
    requires the right-hand side to have no component along them and returns
    the solution orthogonal to them (e.g. ``b = 0`` with a mean-free ``f``).
    """

    def __init__(self, grid: Grid, gamma: float, b: float, resonance_tol: float = RESONANCE_TOL,
                 compatible: bool = False):
        if not gamma > 0:
            raise InvalidArgumentError(f"gamma must be positive, got {gamma}")
        self.grid = grid
        self.gamma = float(gamma)
        self.b = float(b)
        self.mu_h = discrete_neumann_eigenvalues(grid)
        self.denom = self.b - self.gamma * self.mu_h
        gaps = np.abs(self.denom)
        thresh = resonance_tol * max(1.0, abs(self.b))
        self.resonant = gaps <= thresh
        k = np.unravel_index(np.argmin(gaps), gaps.shape)
        self.gap = float(gaps[k])
        if self.resonant.any() and not compatible:
            raise ResonanceError(
                f"shift b={self.b:.17g} resonates with gamma*mu_h at mode {tuple(map(int, k))} "
                f"(mu_h={self.mu_h[k]:.17g}, gap={self.gap:.3e})",
                mode=tuple(map(int, k)), eigenvalue=float(self.mu_h[k]), gap=self.gap,
            )
        self._inv = np.where(self.resonant, 0.0, 1.0 / np.where(self.resonant, 1.0, self.denom))

    def solve(self, f: np.ndarray) -> np.ndarray:
        fh = scipy.fft.dctn(np.asarray(f, dtype=float), type=2, norm="ortho")
        if self.resonant.any():
            bad = np.abs(fh[self.resonant])
            if bad.size and bad.max() > 1e-12 * max(1.0, np.abs(fh).max()):
                k = tuple(int(i) for i in np.argwhere(self.resonant)[0])
                raise ResonanceError(f"right-hand side has a component {bad.max():.3e} along resonant mode {k}",
                                     mode=k, eigenvalue=float(self.mu_h[k]), gap=self.gap)
            return scipy.fft.idctn(fh * self._inv, type=2, norm="ortho")
        return scipy.fft.idctn(fh / self.denom, type=2, norm="ortho")

    def apply_forward(self, v: np.ndarray) -> np.ndarray:
        return self.gamma * laplacian(v, self.grid) + self.b * v


def resolvent_solve(grid: Grid, gamma: float, b: float, f, compatible: bool = False):
    """Solve ``(gamma Delta_h + b) v = f``; accepts a ScalarField or an array."""
    op = ResolventOperator(grid, gamma, b, compatible=compatible)
    if isinstance(f, ScalarField):
        return ScalarField(grid, op.solve(f.values))
    return op.solve(f)


@dataclass
class StationarySolution:
    grid: Grid
    U: np.ndarray
    V: np.ndarray
    mask: SubdomainMask
    branches: list
    base: ConstantState
    gamma: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def U_field(self) -> VectorField:
        return VectorField(self.grid, self.U)

    @property
    def V_field(self) -> ScalarField:
        return ScalarField(self.grid, self.V)

    @property
    def eps_measured(self) -> float:
        return sup_norm(self.V - self.base.v_bar)

    def branch_assignment(self) -> dict:
        return {str(i + 1): name for i, name in enumerate(self.branches)}


def residuals(model: KineticsModel, grid: Grid, gamma: float, solution) -> tuple[float, float]:
    """``(max |f(U, V)|, ||gamma Delta_h V + g(U, V)||_inf)``."""
    U = np.asarray(solution.U, dtype=float)
    V = np.asarray(solution.V, dtype=float)
    if V.shape != grid.shape or U.shape[1:] != grid.shape:
        raise InvalidArgumentError("solution fields do not live on the given grid")
    f_res = sup_norm(model.f(U, V))
    g_res = sup_norm(gamma * laplacian(V, grid) + model.g(U, V))
    return f_res, g_res


def _assemble_U(model, branches, label_masks, V, clamp_counter=None):
    U = np.empty((model.n, *V.shape))
    for br, sel in zip(branches, label_masks):
        if not sel.any():
            continue
        vv = V[sel]
        if clamp_counter is not None:
            clamp_counter[0] += int(np.count_nonzero(~br.contains(vv)))
        U[:, sel] = br(vv)
    return U


def _check_base(model, base, branch):
    u1 = branch(np.array(base.v_bar))
    if np.max(np.abs(u1 - base.u_bar)) > 1e-8 * (1.0 + np.max(np.abs(base.u_bar))):
        raise InvalidArgumentError(
            f"base state u={base.u_bar.tolist()} is not on branch {branch.name!r} (k(Vbar)={np.ravel(u1).tolist()})"
        )


def multi_branch_construct(model: KineticsModel, grid: Grid, mask: SubdomainMask, base: ConstantState,
                           branch_names, gamma: float, tol: float = 1e-10, max_iter: int = 200,
                           residual_tol: float | None = None) -> StationarySolution:
    """Fixed-point construction with branch ``branch_names[l-1]`` on label ``l``.

    The label-1 branch must pass through the base state and fixes the shift
    ``b = h_1'(Vbar)``.  Raises NonConvergenceError, BranchDomainError,
    ResonanceError or ResidualError.
    """
    branch_names = list(branch_names)
    if len(branch_names) < max(1, mask.nlabels):
        raise InvalidArgumentError(f"mask has {mask.nlabels} labels but only {len(branch_names)} branches given")
    branches = [model.branch(n) for n in branch_names]
    _check_base(model, base, branches[0])
    A0, B0, C0, d0 = linearization_at(model, base.u_bar, base.v_bar)
    b = det_ratio(A0, B0, C0, d0)
    R = ResolventOperator(grid, gamma, b)

    label_masks = [mask.labels == (l + 1) for l in range(len(branches))]
    vbar = base.v_bar
    clamps = [0]

    def h(w):
        V = vbar + w
        return model.g(_assemble_U(model, branches, label_masks, V, clamps), V)

    w = np.zeros(grid.shape)
    history = []
    for it in range(1, max_iter + 1):
        w_new = R.solve(b * w - h(w))
        r = sup_norm(w_new - w)
        history.append(r)
        w = w_new
        if not np.isfinite(r):
            raise NonConvergenceError("fixed-point iterates became non-finite", history)
        if r <= tol:
            break
    else:
        raise NonConvergenceError(
            f"no convergence in {max_iter} iterations (last update {history[-1]:.3e}); "
            "shrink the label-2 region or change gamma", history)

    V = vbar + w
    outside = 0
    for br, sel in zip(branches, label_masks):
        outside += int(np.count_nonzero(~br.contains(V[sel])))
    if outside:
        raise BranchDomainError(f"{outside} cells have V outside their branch interval", cells=outside)
    U = _assemble_U(model, branches, label_masks, V)
    sol = StationarySolution(grid, U, V, mask, branch_names[: len(branches)], base, float(gamma))
    f_res, g_res = residuals(model, grid, gamma, sol)
    scale = 1.0 + sup_norm(U) + sup_norm(V)
    if residual_tol is None:
        residual_tol = max(1e-8, 100.0 * tol) * scale
    if f_res > 1e-12 * scale:
        raise ResidualError(f"f-residual {f_res:.3e} exceeds {1e-12 * scale:.3e}")
    if g_res > residual_tol:
        raise ResidualError(f"g-residual {g_res:.3e} exceeds {residual_tol:.3e}")
    ratios = [history[k + 1] / history[k] for k in range(len(history) - 1) if history[k] > 0]
    sol.diagnostics = {
        "iterations": it,
        "final_update_norm": history[-1],
        "update_history": history,
        "contraction_ratios": ratios,
        "f_res": f_res,
        "g_res": g_res,
        "residual_tol": residual_tol,
        "eps_measured": sup_norm(w),
        "shift_b": b,
        "resonance_gap": R.gap,
        "clamped_evaluations": clamps[0],
        "tol": tol,
    }
    log.info("construction converged in %d iterations, eps=%.3e, g_res=%.2e", it, sup_norm(w), g_res)
    return sol


def fixed_point_construct(model: KineticsModel, grid: Grid, mask: SubdomainMask, base: ConstantState,
                          branch_pair, gamma: float, tol: float = 1e-10, max_iter: int = 200,
                          residual_tol: float | None = None) -> StationarySolution:
    """Two-branch construction: ``branch_pair = (name_1, name_2)`` on labels 1 and 2."""
    names = (branch_pair.index_1, branch_pair.index_2) if hasattr(branch_pair, "index_1") else tuple(branch_pair)
    if len(names) != 2:
        raise InvalidArgumentError("branch_pair must name exactly two branches")
    if mask.nlabels > 2:
        raise InvalidArgumentError("use multi_branch_construct for masks with more than two labels")
    return multi_branch_construct(model, grid, mask, base, names, gamma, tol, max_iter, residual_tol)


def _branch_slope(model, U, V):
    """``k'(V) = -f_u^{-1} f_v`` per cell, shape (n, *S)."""
    fu = model.f_u(U, V)
    fv = model.f_v(U, V)
    if model.n == 1:
        return -fv / fu[0]
    J = np.moveaxis(fu, (0, 1), (-2, -1))
    return -np.moveaxis(np.linalg.solve(J, np.moveaxis(fv, 0, -1)[..., None])[..., 0], -1, 0)


def newton_stationary(model: KineticsModel, grid: Grid, mask: SubdomainMask, base: ConstantState,
                      branch_names, gamma: float, tol: float = 1e-13, max_iter: int = 50):
    """Damped Newton on the assembled system ``gamma L V + h_label(V) = 0``.

    Uses a sparse matrix Laplacian and ``spsolve``; independent of the DCT
    resolvent route.  Returns ``(V, U, history)``.
    """
    branches = [model.branch(n) for n in branch_names]
    label_masks = [mask.labels == (l + 1) for l in range(len(branches))]
    L = laplacian_matrix(grid) * gamma
    V = np.full(grid.shape, base.v_bar)

    def G(V):
        U = _assemble_U(model, branches, label_masks, V)
        return (L @ V.ravel()).reshape(grid.shape) + model.g(U, V), U

    r, U = G(V)
    history = [sup_norm(r)]
    for _ in range(max_iter):
        if history[-1] <= tol * (1.0 + gamma):
            break
        k1 = _branch_slope(model, U, V)
        dh = np.einsum("i...,i...->...", model.g_u(U, V), k1) + model.g_v(U, V)
        J = (L + sp.diags(dh.ravel())).tocsc()
        step = spla.spsolve(J, r.ravel()).reshape(grid.shape)
        t = 1.0
        while True:
            Vc = V - t * step
            rc, Uc = G(Vc)
            if sup_norm(rc) < history[-1] or t < 1e-6:
                break
            t *= 0.5
        V, r, U = Vc, rc, Uc
        history.append(sup_norm(r))
    return V, U, history
