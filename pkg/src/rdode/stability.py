"""Stability checks for (discontinuous) stationary solutions.

Certification routes:

* algebraic sign conditions at the constant state and on every branch used,
  combined with either the scalar ``h(x, lambda)`` scan (n = 1) or small
  deviation norms with a user-asserted large ``gamma``;
* the rightmost eigenvalues of the discretised linearised operator serve as
  corroborating evidence only.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import Grid, discrete_neumann_eigenvalues, laplacian_matrix, neumann_eigenvalues_below
from .errors import InvalidArgumentError, NotApplicableError, NumericError, SingularMatrixError, SizeError
from .kinetics import ConstantState, KineticsModel, linearization_at

NONRESONANCE_TOL = 1e-8
DENSE_LIMIT = 5000


# --------------------------------------------------------------------------
# matrix facts


def spectral_bound(M) -> float:
    """``max Re lambda`` over the eigenvalues of a square matrix."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidArgumentError(f"spectral_bound needs a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericError(f"non-finite matrix: {M.tolist()}")
    try:
        s = float(np.max(np.linalg.eigvals(M).real))
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed on {M.tolist()}: {exc}") from exc
    if M.shape[0] <= 2:
        s2 = _closed_form_bound(M)
        if abs(s - s2) > 1e-7 * max(1.0, np.abs(M).max()):
            raise NumericError(f"eigensolver ({s}) and trace/det formula ({s2}) disagree for {M.tolist()}")
    return s


def _closed_form_bound(M):
    if M.shape[0] == 1:
        return float(M[0, 0])
    tr = M[0, 0] + M[1, 1]
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    disc = tr * tr - 4.0 * det
    return float((tr + math.sqrt(disc)) / 2.0 if disc >= 0 else tr / 2.0)


def block_matrix(A, B, C, d):
    A = np.atleast_2d(np.asarray(A))
    n = A.shape[0]
    B, C, d = np.asarray(B), np.asarray(C), np.asarray(d)
    M = np.zeros((n + 1, n + 1), dtype=np.result_type(A.dtype, B.dtype, C.dtype, d.dtype, float))
    M[:n, :n] = A
    M[:n, n] = np.ravel(B)
    M[n, :n] = np.ravel(C)
    M[n, n] = d
    return M


def schur_complement(A, B, C, d, lam=0.0):
    """``d - lam - C (A - lam I)^{-1} B``."""
    A = np.atleast_2d(np.asarray(A))
    n = A.shape[0]
    x = np.linalg.solve(A - lam * np.eye(n), np.reshape(B, (n, 1)))
    return complex(d - lam - (np.reshape(C, (1, n)) @ x)[0, 0]) if np.iscomplexobj(x) or isinstance(lam, complex) \
        else float(d - lam - (np.reshape(C, (1, n)) @ x)[0, 0])


def determinant_ratio(A, B, C, d, lam=0.0):
    """``det([[A - lam I, B], [C, d - lam]]) / det(A - lam I)``."""
    A = np.atleast_2d(np.asarray(A))
    n = A.shape[0]
    M = block_matrix(A, B, C, d) - lam * np.eye(n + 1)
    val = np.linalg.det(M) / np.linalg.det(A - lam * np.eye(n))
    return complex(val) if np.iscomplexobj(val) else float(val)


def det_ratio(A0, B0, C0, d0) -> float:
    """The shift ``det([[A0, B0], [C0, d0]]) / det A0``, cross-checked against ``d0 - C0 A0^{-1} B0``."""
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    n = A0.shape[0]
    scale = max(1.0, float(np.linalg.norm(A0))) ** n
    detA = float(np.linalg.det(A0))
    if abs(detA) < 1e-12 * scale:
        raise SingularMatrixError(f"det A0 = {detA:.3e} is numerically zero")
    ratio = determinant_ratio(A0, B0, C0, float(d0))
    schur = schur_complement(A0, B0, C0, float(d0))
    if abs(ratio - schur) > 1e-12 * max(1.0, abs(schur)) * max(1.0, np.linalg.cond(A0)):
        raise NumericError(f"determinant ratio {ratio!r} and Schur complement {schur!r} disagree")
    return float(schur)


# --------------------------------------------------------------------------
# verdicts


@dataclass
class Verdict:
    name: str
    passed: bool
    value: float
    tolerance: float
    note: str = ""

    def to_dict(self):
        d = asdict(self)
        d["value"] = _jsonable(self.value)
        return d


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


@dataclass
class NonresonanceReport:
    ratio: float
    gamma: float
    margin: float
    mode: tuple
    mu: float
    passed: bool
    tolerance: float


def check_nonresonance(A0, B0, C0, d0, gamma, eigenvalues=None, grid: Grid | None = None,
                       window: float = 1.0) -> NonresonanceReport:
    """Distance of the determinant ratio from every ``gamma * mu_k``.

    ``eigenvalues`` is a list of ``(mu, mode)`` pairs; if omitted, all
    continuum eigenvalues of ``grid`` up to ``max(ratio, 0) / gamma + window``
    are generated (larger ones are farther away).
    """
    ratio = det_ratio(A0, B0, C0, d0)
    if eigenvalues is None:
        if grid is None:
            raise InvalidArgumentError("pass an eigenvalue list or a grid")
        top = max(ratio, 0.0) / gamma
        eigenvalues = neumann_eigenvalues_below(grid, top + window * max(1.0, top))
    best = min(eigenvalues, key=lambda e: abs(ratio - gamma * e[0]))
    margin = abs(ratio - gamma * best[0])
    tol = NONRESONANCE_TOL * max(1.0, abs(ratio))
    return NonresonanceReport(ratio, float(gamma), margin, tuple(best[1]), float(best[0]), margin > tol, tol)


def check_stability_conditions(model: KineticsModel, base: ConstantState, branch_names, gamma: float) -> dict:
    """Sign conditions at the constant state and at every branch point ``k_i(Vbar)``.

    Returns ``{name: Verdict}``.  Names: ``det_A0``, ``s_A0``, ``s_block``,
    ``s_fu_<branch>`` (one per distinct branch), ``g_v_<branch>``.
    """
    A0, B0, C0, d0 = linearization_at(model, base.u_bar, base.v_bar)
    out = {}
    detA = float(np.linalg.det(A0))
    out["det_A0"] = Verdict("det_A0", abs(detA) > 1e-12, detA, 1e-12, "det A0 != 0")
    out["s_A0"] = Verdict("s_A0", spectral_bound(A0) < 0, spectral_bound(A0), 0.0, "s(A0) < 0")
    sb = spectral_bound(block_matrix(A0, B0, C0, d0))
    out["s_block"] = Verdict("s_block", sb < 0, sb, 0.0, "s([[A0, B0], [C0, d0]]) < 0")
    for name in dict.fromkeys(branch_names):
        u = model.branch(name)(np.array(base.v_bar)).reshape(model.n)
        A, B, C, d = linearization_at(model, u, base.v_bar)
        s = spectral_bound(A)
        out[f"s_fu_{name}"] = Verdict(f"s_fu_{name}", s < 0, s, 0.0, f"s(f_u(k_{name}(Vbar), Vbar)) < 0")
        out[f"g_v_{name}"] = Verdict(f"g_v_{name}", d < 0, d, 0.0, f"g_v(k_{name}(Vbar), Vbar) < 0")
    return out


# --------------------------------------------------------------------------
# linearisation about a solution


@dataclass
class LinearizationData:
    """Per-cell coefficient fields and the constant-state reference matrices.

    Shapes: ``A (n, n, nx, ny)``, ``B (n, nx, ny)``, ``C (n, nx, ny)``,
    ``d (nx, ny)``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    d: np.ndarray
    A0: np.ndarray
    B0: np.ndarray
    C0: np.ndarray
    d0: float

    @property
    def n(self):
        return self.A.shape[0]

    @classmethod
    def constant(cls, grid: Grid, A0, B0, C0, d0):
        A0 = np.atleast_2d(np.asarray(A0, dtype=float))
        n = A0.shape[0]
        shp = grid.shape
        return cls(
            np.broadcast_to(A0[:, :, None, None], (n, n, *shp)).copy(),
            np.broadcast_to(np.reshape(B0, (n, 1, 1)), (n, *shp)).astype(float),
            np.broadcast_to(np.reshape(C0, (n, 1, 1)), (n, *shp)).astype(float),
            np.full(shp, float(d0)),
            A0, np.reshape(np.asarray(B0, float), (n, 1)), np.reshape(np.asarray(C0, float), (1, n)), float(d0),
        )


def linearize(model: KineticsModel, solution) -> LinearizationData:
    U, V = solution.U, solution.V
    A0, B0, C0, d0 = linearization_at(model, solution.base.u_bar, solution.base.v_bar)
    lin = LinearizationData(
        np.asarray(model.f_u(U, V), float), np.asarray(model.f_v(U, V), float),
        np.asarray(model.g_u(U, V), float), np.asarray(model.g_v(U, V), float),
        A0, B0, C0, d0,
    )
    if not all(np.all(np.isfinite(x)) for x in (lin.A, lin.B, lin.C, lin.d)):
        raise NumericError("linearisation has non-finite entries")
    return lin


def cellwise_spectral_bound(A: np.ndarray) -> np.ndarray:
    """``s(A(x))`` for every cell of an ``(n, n, *S)`` field."""
    n = A.shape[0]
    if n == 1:
        return A[0, 0].copy()
    M = np.moveaxis(A, (0, 1), (-2, -1))
    return np.max(np.linalg.eigvals(M).real, axis=-1)


def deviation_norms(lin: LinearizationData, grid: Grid, N_exponent: float) -> dict:
    """Cell-volume weighted ``L^N`` norms of ``|A - A0|``, ``|B - B0|``, ``|C - C0|``, ``|d - d0|``.

    ``|.|`` is the Frobenius norm of the per-cell deviation.
    """
    if N_exponent < 1:
        raise InvalidArgumentError("N_exponent must be >= 1")
    n = lin.n
    dev = {
        "A": np.sqrt(np.sum((lin.A - lin.A0.reshape(n, n, 1, 1)) ** 2, axis=(0, 1))),
        "B": np.sqrt(np.sum((lin.B - lin.B0.reshape(n, 1, 1)) ** 2, axis=0)),
        "C": np.sqrt(np.sum((lin.C - lin.C0.reshape(n, 1, 1)) ** 2, axis=0)),
        "d": np.abs(lin.d - lin.d0),
    }
    w = grid.cell_volume
    return {k: float((np.sum(v**N_exponent) * w) ** (1.0 / N_exponent)) for k, v in dev.items()}


# --------------------------------------------------------------------------
# scalar h(x, lambda) scan


def h_function(a, b, c, d, alpha, beta):
    """``Re(-c b / (a - lambda) + d - lambda)`` at ``lambda = alpha + i beta`` (broadcasting)."""
    am = a - alpha
    return -(c * b * am) / (am * am + beta * beta) + d - alpha


@dataclass
class HScanResult:
    sup: float
    sup_scanned: float
    beta_tail: float
    alpha_tail: float
    kappa: float
    alpha_max: float
    beta_max: float
    certified: bool
    argmax: dict = field(default_factory=dict)

    def to_dict(self):
        return {k: _jsonable(v) for k, v in asdict(self).items()}


def scan_h_function(a, b, c, d, kappa: float = 0.01, alpha_grid=None, beta_grid=None,
                    alpha_max: float | None = None, beta_max: float | None = None,
                    n_alpha: int = 201, n_beta: int = 41) -> HScanResult:
    """Supremum of ``h(x, lambda)`` over cells and ``Re lambda >= -kappa``.

    The scan covers ``alpha in [-kappa, alpha_max]``, ``beta in [0, beta_max]``
    (h is even in beta).  Two tail bounds complete it: h is monotone in
    beta^2, so beyond ``beta_max`` it is below ``max(h(alpha, beta_max), d - alpha)``;
    beyond ``alpha_max`` it is below ``|cb| / (alpha_max - sup a) + sup d - alpha_max``.
    Requires ``ess sup a < 0``.
    """
    a, b, c, d = (np.ravel(np.asarray(x, dtype=float)) for x in np.broadcast_arrays(a, b, c, d))
    if np.max(a) >= 0:
        raise NotApplicableError(f"ess sup a = {np.max(a):.3e} is not negative")
    coef = max(np.max(np.abs(a)), np.max(np.abs(b)), np.max(np.abs(c)), np.max(np.abs(d)))
    if alpha_max is None:
        alpha_max = float(coef + 1.0)
    if beta_max is None:
        beta_max = float(10.0 * (coef + 1.0))
    alphas = np.linspace(-kappa, alpha_max, n_alpha) if alpha_grid is None else np.asarray(alpha_grid, float)
    betas = np.linspace(0.0, beta_max, n_beta) if beta_grid is None else np.asarray(beta_grid, float)
    cb = c * b
    best, best_at = -math.inf, {}
    beta_tail = -math.inf
    for al in alphas:
        vals = h_function(a[:, None], b[:, None], c[:, None], d[:, None], al, betas[None, :])
        k = np.unravel_index(np.argmax(vals), vals.shape)
        if vals[k] > best:
            best = float(vals[k])
            best_at = {"cell": int(k[0]), "alpha": float(al), "beta": float(betas[k[1]])}
        tail = np.maximum(vals[:, -1], d - al)
        beta_tail = max(beta_tail, float(np.max(tail)))
    alpha_tail = float(np.max(np.abs(cb)) / (alpha_max - np.max(a)) + np.max(d) - alpha_max)
    sup = max(best, beta_tail, alpha_tail)
    return HScanResult(sup, best, beta_tail, alpha_tail, float(kappa), float(alpha_max), float(beta_max),
                       sup < 0, best_at)


# --------------------------------------------------------------------------
# discrete linearised operator


def assemble_linearized_operator(lin: LinearizationData, grid: Grid, gamma: float) -> sp.csr_matrix:
    """Sparse matrix of ``(phi, psi) -> (A phi + B psi, gamma Delta_h psi + C phi + d psi)``.

    Unknown ordering: ``phi_1 .. phi_n`` then ``psi``, each over flattened cells.
    """
    n = lin.n
    blocks = [[None] * (n + 1) for _ in range(n + 1)]
    for i in range(n):
        for j in range(n):
            blocks[i][j] = sp.diags(lin.A[i, j].ravel())
        blocks[i][n] = sp.diags(lin.B[i].ravel())
        blocks[n][i] = sp.diags(lin.C[i].ravel())
    blocks[n][n] = gamma * laplacian_matrix(grid) + sp.diags(lin.d.ravel())
    return sp.bmat(blocks, format="csr")


def symbol_eigenvalues(A0, B0, C0, d0, grid: Grid, gamma: float) -> np.ndarray:
    """Eigenvalues of ``[[A0, B0], [C0, d0 - gamma mu_h]]`` over all discrete modes."""
    out = []
    for mu in discrete_neumann_eigenvalues(grid).ravel():
        out.append(np.linalg.eigvals(block_matrix(A0, B0, C0, d0 - gamma * mu)))
    return np.concatenate(out)


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    spectral_bound: float
    method: str
    cell_ode_bound: float
    note: str

    def to_dict(self):
        return {
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "spectral_bound": self.spectral_bound,
            "method": self.method,
            "cell_ode_bound": self.cell_ode_bound,
            "note": self.note,
        }


def _gershgorin_right(M):
    M = M.tocsr()
    diag = M.diagonal()
    absrow = np.asarray(abs(M).sum(axis=1)).ravel()
    return float(np.max(diag + (absrow - np.abs(diag))))


def discrete_linearized_spectrum(lin: LinearizationData, grid: Grid, gamma: float, n_report: int = 10,
                                 dense_limit: int = DENSE_LIMIT, iterative: bool = True) -> SpectrumResult:
    """Rightmost eigenvalues of the assembled operator.

    Dense eigensolve up to ``dense_limit`` unknowns; beyond that ARPACK in
    shift-invert mode about a point right of the Gershgorin region (unless
    ``iterative=False``, which raises SizeError).
    """
    M = assemble_linearized_operator(lin, grid, gamma)
    size = M.shape[0]
    cell_bound = float(np.max(cellwise_spectral_bound(lin.A)))
    note = ("discrete point spectrum samples the multiplication-operator spectrum by cell "
            "values of A(x) plus genuine eigenvalues; corroborating evidence only")
    if size <= dense_limit:
        ev = np.linalg.eigvals(M.toarray())
        method = "dense"
    elif iterative:
        shift = _gershgorin_right(M) + 1.0
        k = min(n_report, size - 2)
        ncv = min(size - 1, max(2 * k + 1, 60))
        method = f"arpack-shift-invert(sigma={shift:.6g})"
        try:
            ev = spla.eigs(M.tocsc(), k=k, sigma=shift, which="LM", return_eigenvectors=False, ncv=ncv,
                           tol=1e-10, maxiter=5000)
        except spla.ArpackNoConvergence as exc:
            ev = exc.eigenvalues
            if ev.size == 0:
                raise NumericError("ARPACK found no eigenvalues") from exc
            note += f"; only {ev.size} of {k} eigenvalues converged"
    else:
        raise SizeError(f"{size} unknowns exceed the dense limit {dense_limit}")
    ev = ev[np.lexsort((-ev.imag, -ev.real))]
    return SpectrumResult(ev[:n_report], float(ev.real.max()), method, cell_bound, note)


# --------------------------------------------------------------------------
# full report


@dataclass
class StabilityReport:
    verdicts: dict
    nonresonance: NonresonanceReport
    deviation: dict
    h_scan: HScanResult | None
    spectrum: SpectrumResult | None
    classification: str
    linear_certified: bool
    nonlinear_certified: bool
    route: str
    settings: dict

    def to_dict(self):
        return {
            "schema": "rdode.stability_report/1",
            "classification": self.classification,
            "linear_certified": self.linear_certified,
            "nonlinear_certified": self.nonlinear_certified,
            "route": self.route,
            "verdicts": {k: v.to_dict() for k, v in self.verdicts.items()},
            "nonresonance": {k: _jsonable(v) if not isinstance(v, tuple) else list(v)
                             for k, v in asdict(self.nonresonance).items()},
            "deviation_norms": self.deviation,
            "h_scan": self.h_scan.to_dict() if self.h_scan else None,
            "spectrum": self.spectrum.to_dict() if self.spectrum else None,
            "settings": self.settings,
        }

    def table(self) -> str:
        rows = [f"{'check':<24} {'value':>14} {'tol':>10}  verdict"]
        for v in self.verdicts.values():
            rows.append(f"{v.name:<24} {v.value:>14.6g} {v.tolerance:>10.2g}  {'pass' if v.passed else 'FAIL'}")
        nr = self.nonresonance
        rows.append(f"{'nonresonance margin':<24} {nr.margin:>14.6g} {nr.tolerance:>10.2g}  "
                    f"{'pass' if nr.passed else 'FAIL'} (closest mode {nr.mode})")
        for k, v in self.deviation.items():
            rows.append(f"{'|' + k + ' - ' + k + '0|_L^N':<24} {v:>14.6g}")
        if self.h_scan:
            rows.append(f"{'sup h(x, lambda)':<24} {self.h_scan.sup:>14.6g} {0.0:>10.2g}  "
                        f"{'pass' if self.h_scan.certified else 'FAIL'}")
        if self.spectrum:
            rows.append(f"{'discrete s(L)':<24} {self.spectrum.spectral_bound:>14.6g}             ({self.spectrum.method})")
        rows.append(f"classification: {self.classification} (route: {self.route}; "
                    f"nonlinear: {'yes' if self.nonlinear_certified else 'no'})")
        return "\n".join(rows)


def stability_report(model: KineticsModel, solution, gamma: float | None = None, kappa: float = 0.01,
                     N_exponent: float | None = None, deviation_threshold: float | None = None,
                     assume_large_gamma: bool = False, with_spectrum: bool = False,
                     n_report: int = 10, dense_limit: int = DENSE_LIMIT) -> StabilityReport:
    """Run every check on a constructed solution and classify it."""
    grid = solution.grid
    gamma = solution.gamma if gamma is None else gamma
    base = solution.base
    names = list(solution.branches)
    verdicts = check_stability_conditions(model, base, names, gamma)
    A0, B0, C0, d0 = linearization_at(model, base.u_bar, base.v_bar)
    nonres = check_nonresonance(A0, B0, C0, d0, gamma, grid=grid)
    lin = linearize(model, solution)
    N = N_exponent if N_exponent is not None else (1 if grid.is_1d else 2)
    dev = deviation_norms(lin, grid, N)
    cell_s = float(np.max(cellwise_spectral_bound(lin.A)))
    verdicts["s_A_cells"] = Verdict("s_A_cells", cell_s < 0, cell_s, 0.0, "ess sup s(A(x)) < 0 on the solution")
    s_d = float(np.max(lin.d))
    verdicts["s_d_cells"] = Verdict("s_d_cells", s_d < 0, s_d, 0.0, "ess sup d(x) < 0 on the solution")

    h_scan = None
    if model.n == 1 and cell_s < 0:
        h_scan = scan_h_function(lin.A[0, 0], lin.B[0], lin.C[0], lin.d, kappa=kappa)
    spectrum = discrete_linearized_spectrum(lin, grid, gamma, n_report, dense_limit) if with_spectrum else None

    branch_keys = [k for k in verdicts if k.startswith("s_fu_")]
    gv_keys = [k for k in verdicts if k.startswith("g_v_")]
    sign_ok = all(verdicts[k].passed for k in ("det_A0", "s_A0", "s_block", *branch_keys)) and nonres.passed
    ode_unstable = any(verdicts[k].value > 0 for k in branch_keys) or cell_s > 0
    route = "none"
    linear_ok = False
    if sign_ok and h_scan is not None and h_scan.certified:
        linear_ok, route = True, "h-scan"
    elif sign_ok and assume_large_gamma and deviation_threshold is not None and \
            sum(dev.values()) <= deviation_threshold and cell_s < 0:
        linear_ok, route = True, "deviation-norms"
    nonlinear_ok = linear_ok and all(verdicts[k].passed for k in gv_keys) and s_d < 0
    if ode_unstable:
        classification = "unstable-by-ODE-spectrum"
    elif linear_ok:
        classification = "stable-certified-conditions"
    else:
        classification = "inconclusive"
    settings = {"gamma": gamma, "kappa": kappa, "N_exponent": N, "deviation_threshold": deviation_threshold,
                "assume_large_gamma": assume_large_gamma}
    return StabilityReport(verdicts, nonres, dev, h_scan, spectrum, classification, linear_ok, nonlinear_ok,
                           route, settings)
