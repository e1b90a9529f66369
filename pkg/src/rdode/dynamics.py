"""Explicit Euler integration of ``u_t = f(u, v)``, ``v_t = gamma Delta v + g(u, v)``.

The FitzHugh instance is stepped by the fused kernel in :mod:`rdode.kernels`;
any other model (or a run with forcing) goes through the generic numpy path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .domain import Grid, SubdomainMask, laplacian, sup_norm
from .errors import BlowUpError, InsufficientDataError, InvalidArgumentError
from .kinetics import ConstantState, KineticsModel

BLOWUP_THRESHOLD = 1e8
CFL_SAFETY = 0.45
FIT_FLOOR = 1e-13
MIN_FIT_SAMPLES = 10


@dataclass
class SimulationState:
    grid: Grid
    t: float
    u: np.ndarray  # (n, nx, ny)
    v: np.ndarray  # (nx, ny)

    def __post_init__(self):
        self.u = np.array(self.u, dtype=float, order="C")
        self.v = np.array(self.v, dtype=float, order="C")
        if self.u.ndim == 2:
            self.u = self.u[None]
        if self.v.shape != self.grid.shape or self.u.shape[1:] != self.grid.shape:
            raise InvalidArgumentError("state fields do not match the grid")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise InvalidArgumentError("state contains non-finite values")

    def copy(self):
        return SimulationState(self.grid, self.t, self.u.copy(), self.v.copy())

    @classmethod
    def from_solution(cls, solution, t=0.0):
        return cls(solution.grid, t, solution.U, solution.V)


@dataclass
class SimulationTrace:
    """Snapshots plus per-step deviation norms.

    ``times[k]`` is the time after k steps (``times[0]`` is the initial time);
    ``du``, ``dv`` are the sup-norm deviations from the reference and
    ``D = du + dv``.  Without a reference these arrays are empty.
    """

    dt: float
    times: np.ndarray
    du: np.ndarray
    dv: np.ndarray
    snapshots: list = field(default_factory=list)
    completed: bool = True
    message: str = ""

    @property
    def D(self):
        return self.du + self.dv

    @property
    def snapshot_times(self):
        return np.array([s.t for s in self.snapshots])

    @property
    def final(self) -> SimulationState:
        return self.snapshots[-1]


def cfl_max_dt(grid: Grid, gamma: float) -> float:
    """``0.45 / (gamma (1/hx^2 + 1/hy^2))``; a 1-D grid uses ``1/hx^2`` only."""
    if not gamma > 0:
        raise InvalidArgumentError(f"gamma must be positive, got {gamma}")
    s = 1.0 / grid.hx**2 + (0.0 if grid.is_1d else 1.0 / grid.hy**2)
    return CFL_SAFETY / (gamma * s)


def _check_dt(grid, gamma, dt, allow_cfl_override):
    if not dt > 0:
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    dmax = cfl_max_dt(grid, gamma)
    if dt > dmax * (1 + 1e-12) and not allow_cfl_override:
        raise InvalidArgumentError(f"dt={dt:.3e} exceeds the CFL limit {dmax:.3e}; pass allow_cfl_override to force it")


def _blow_check(un, vn, t, blowup):
    bad = ~np.isfinite(vn) | (np.abs(vn) > blowup)
    bad |= np.any(~np.isfinite(un) | (np.abs(un) > blowup), axis=0)
    if bad.any():
        cell = tuple(int(c) for c in np.argwhere(bad)[0])
        return cell
    return None


def step_euler(model: KineticsModel, gamma: float, state: SimulationState, dt: float,
               allow_cfl_override: bool = False, forcing=None, blowup: float = BLOWUP_THRESHOLD) -> SimulationState:
    """One forward Euler step (generic path).

    ``forcing(t, grid) -> (Fu, Fv)`` adds source terms evaluated at the old time.
    """
    _check_dt(state.grid, gamma, dt, allow_cfl_override)
    u, v = state.u, state.v
    fu = model.f(u, v)
    gv = model.g(u, v)
    if forcing is not None:
        Fu, Fv = forcing(state.t, state.grid)
        fu = fu + Fu
        gv = gv + Fv
    un = u + dt * fu
    vn = v + dt * (gamma * laplacian(v, state.grid) + gv)
    t = state.t + dt
    cell = _blow_check(un, vn, t, blowup)
    if cell is not None:
        raise BlowUpError(f"blow-up at cell {cell}, t={t:.6g}", cell=cell, time=t)
    out = SimulationState.__new__(SimulationState)
    out.grid, out.t, out.u, out.v = state.grid, t, un, vn
    return out


def _fused_ok(model, forcing, backend):
    return model.fused == "fitzhugh" and forcing is None and backend != "generic"


def simulate(model: KineticsModel, gamma: float, initial: SimulationState, dt: float | None, t_end: float,
             snapshot_stride: int = 0, reference=None, allow_cfl_override: bool = False, forcing=None,
             backend: str = "auto", blowup: float = BLOWUP_THRESHOLD) -> SimulationTrace:
    """Integrate from ``initial.t`` to ``t_end``.

    ``dt=None`` uses ``cfl_max_dt``.  The step count is ``ceil((t_end - t0) / dt)``
    with a fixed dt, so the final time can overshoot ``t_end`` by less than dt.
    ``snapshot_stride`` > 0 stores a state every that many steps (the initial
    and final states are always kept).  ``reference`` is a StationarySolution
    (or anything with ``U``, ``V``); the deviation is then recorded every step.
    On blow-up a BlowUpError is raised whose ``trace`` holds the partial run.
    """
    grid = initial.grid
    dt = cfl_max_dt(grid, gamma) if dt is None else float(dt)
    _check_dt(grid, gamma, dt, allow_cfl_override)
    if backend not in ("auto", "fused", "generic"):
        raise InvalidArgumentError(f"unknown backend {backend!r}")
    if backend == "fused" and not _fused_ok(model, forcing, backend):
        raise InvalidArgumentError("the fused backend needs the FitzHugh model and no forcing")
    t0 = float(initial.t)
    nsteps = max(0, int(math.ceil((t_end - t0) / dt - 1e-9)))
    stride = snapshot_stride if snapshot_stride > 0 else max(nsteps, 1)
    times = t0 + dt * np.arange(nsteps + 1)
    track = reference is not None
    du = np.zeros(nsteps + 1 if track else 0)
    dv = np.zeros(nsteps + 1 if track else 0)
    if track:
        U_ref = np.ascontiguousarray(reference.U, dtype=float)
        V_ref = np.ascontiguousarray(reference.V, dtype=float)
        du[0] = sup_norm(initial.u - U_ref)
        dv[0] = sup_norm(initial.v - V_ref)
    state = initial.copy()
    snaps = [state.copy()]
    trace = SimulationTrace(dt, times, du, dv, snaps)
    done = 0
    if _fused_ok(model, forcing, backend) and model.n == 1:
        p = model.params
        u2 = np.ascontiguousarray(state.u[0])
        v2 = state.v
        ur = U_ref[0] if track else u2
        vr = V_ref if track else v2
        empty = np.empty(0)
        while done < nsteps:
            k = min(stride, nsteps - done)
            sl = slice(done + 1, done + 1 + k)
            ran, bi, bj = kernels.fitzhugh_advance(
                u2, v2, p["beta"], p["sigma"], p["delta"], p["rho"], float(gamma), dt, grid.hx, grid.hy, k,
                ur, vr, du[sl] if track else empty, dv[sl] if track else empty, blowup)
            done += ran
            state = SimulationState.__new__(SimulationState)
            state.grid, state.t, state.u, state.v = grid, float(times[done]), u2[None].copy(), v2.copy()
            if bi >= 0:
                _fail(trace, done, (bi, bj), times[min(done + 1, nsteps)], state)
            snaps.append(state)
    else:
        while done < nsteps:
            try:
                state = step_euler(model, gamma, state, dt, True, forcing, blowup)
            except BlowUpError as exc:
                _fail(trace, done, exc.cell, exc.time, state)
            done += 1
            state.t = float(times[done])
            if track:
                du[done] = sup_norm(state.u - U_ref)
                dv[done] = sup_norm(state.v - V_ref)
            if done % stride == 0 or done == nsteps:
                snaps.append(state.copy())
    return trace


def _fail(trace, done, cell, time, state):
    trace.times = trace.times[: done + 1]
    if trace.du.size:
        trace.du = trace.du[: done + 1]
        trace.dv = trace.dv[: done + 1]
    trace.completed = False
    trace.message = f"blow-up at cell {tuple(cell)}, t={time:.6g}"
    if not trace.snapshots or trace.snapshots[-1].t != state.t:
        trace.snapshots.append(state)
    raise BlowUpError(trace.message + "; try a smaller dt", cell=tuple(cell), time=float(time), trace=trace)


# --------------------------------------------------------------------------
# initial data


def label_shift_state(grid: Grid, mask: SubdomainMask, U, V, amplitude: float, signs=None, t=0.0) -> SimulationState:
    """``(U, V)`` shifted by ``sign_l * amplitude`` on the cells of label ``l`` (both components)."""
    if amplitude < 0:
        raise InvalidArgumentError("amplitude must be non-negative")
    signs = {1: -1.0, 2: 1.0} if signs is None else {int(k): float(s) for k, s in signs.items()}
    shift = np.zeros(grid.shape)
    for lab in range(1, mask.nlabels + 1):
        shift[mask.labels == lab] = signs.get(lab, 1.0) * amplitude
    U = np.asarray(U, dtype=float)
    U = U if U.ndim == 3 else np.broadcast_to(np.reshape(U, (-1, 1, 1)), (U.size, *grid.shape))
    return SimulationState(grid, t, U + shift[None], np.broadcast_to(V, grid.shape) + shift)


def recipe_initial_state(grid: Grid, mask: SubdomainMask, base: ConstantState, amplitude: float) -> SimulationState:
    """Initial data below the constant state on label 1 and above it on label 2."""
    return label_shift_state(grid, mask, base.u_bar, base.v_bar, amplitude)


def perturb(solution, amplitude: float, mode: str = "uniform", seed: int = 0, eigenmode=(1, 0),
            signs=None) -> SimulationState:
    """Perturbed copy of a stationary solution.

    Modes: ``uniform`` (constant shift per label, sign down on label 1 and up
    elsewhere unless ``signs`` overrides), ``noise`` (seeded uniform noise in
    ``[-amplitude, amplitude]`` per cell and component) and ``eigenmode``
    (cosine mode ``(k, m)`` scaled to sup-norm ``amplitude``).  Both u and v
    are perturbed.
    """
    if amplitude < 0:
        raise InvalidArgumentError("amplitude must be non-negative")
    grid = solution.grid
    U, V = np.asarray(solution.U, float), np.asarray(solution.V, float)
    if mode == "uniform":
        return label_shift_state(grid, solution.mask, U, V, amplitude, signs)
    if mode == "noise":
        rng = np.random.default_rng(seed)
        pu = rng.uniform(-1.0, 1.0, U.shape)
        pv = rng.uniform(-1.0, 1.0, V.shape)
        return SimulationState(grid, 0.0, U + amplitude * pu, V + amplitude * pv)
    if mode == "eigenmode":
        k, m = eigenmode
        x, y = grid.centers()
        phi = np.cos(k * np.pi * x / grid.lx) * np.cos(m * np.pi * y / grid.ly)
        phi = phi / np.max(np.abs(phi))
        return SimulationState(grid, 0.0, U + amplitude * phi[None], V + amplitude * phi)
    raise InvalidArgumentError(f"unknown perturbation mode {mode!r}")


# --------------------------------------------------------------------------
# manufactured solutions


def manufactured_forcing(model: KineticsModel, gamma: float, u_exact, v_exact, u_t, v_t):
    """Forcing that makes ``(u_exact, v_exact)`` an exact solution of the semi-discrete system.

    Each callable takes ``(t, grid)`` and returns the field on the cell
    centres (``u`` with a leading component axis).  The discrete Laplacian is
    used, so the only error left in a run is the time-stepping error.
    """

    def forcing(t, grid):
        u = u_exact(t, grid)
        v = v_exact(t, grid)
        Fu = u_t(t, grid) - model.f(u, v)
        Fv = v_t(t, grid) - gamma * laplacian(v, grid) - model.g(u, v)
        return Fu, Fv

    return forcing


# --------------------------------------------------------------------------
# rate fitting


@dataclass
class DecayFit:
    k_est: float
    r_squared: float
    n_samples: int
    t_start: float
    t_stop: float
    truncated: bool


def fit_decay_rate(trace, window=None, floor: float = FIT_FLOOR, max_samples: int = 20000) -> DecayFit:
    """Least-squares slope of ``log D(t)``; ``k_est = -slope``.

    ``trace`` is a SimulationTrace or a ``(times, D)`` pair; ``window`` an
    optional ``(t_start, t_stop)``.  The window is cut at the first sample
    where D falls to ``floor`` (round-off level).  Long traces are thinned to
    at most ``max_samples`` evenly strided points.
    """
    if isinstance(trace, SimulationTrace):
        t, D = trace.times, trace.D
    else:
        t, D = (np.asarray(a, dtype=float) for a in trace)
    if t.shape != D.shape or D.size == 0:
        raise InsufficientDataError("trace has no deviation record")
    sel = np.ones(t.shape, dtype=bool)
    if window is not None:
        sel &= (t >= window[0]) & (t <= window[1])
    idx = np.flatnonzero(sel)
    truncated = False
    low = np.flatnonzero(D[idx] <= floor)
    if low.size:
        idx = idx[: low[0]]
        truncated = True
    if idx.size < MIN_FIT_SAMPLES:
        raise InsufficientDataError(f"only {idx.size} usable samples (need {MIN_FIT_SAMPLES})")
    if idx.size > max_samples:
        idx = idx[:: int(math.ceil(idx.size / max_samples))]
    tt, y = t[idx], np.log(D[idx])
    slope, icpt = np.polyfit(tt, y, 1)
    resid = y - (slope * tt + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(-slope), r2, int(idx.size), float(tt[0]), float(tt[-1]), truncated)


def l2_deviation(state: SimulationState, reference) -> float:
    """Diagnostic L^2 variant of the deviation (not used for acceptance)."""
    w = state.grid.cell_volume
    return float(np.sqrt(np.sum((state.u - reference.U) ** 2) * w) + np.sqrt(np.sum((state.v - reference.V) ** 2) * w))


__all__ = [
    "SimulationState", "SimulationTrace", "cfl_max_dt", "step_euler", "simulate", "perturb",
    "label_shift_state", "recipe_initial_state", "manufactured_forcing", "fit_decay_rate", "DecayFit",
    "l2_deviation",
]
