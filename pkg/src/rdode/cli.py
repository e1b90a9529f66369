"""Command line runner: ``rdode {nullclines,construct,simulate,stability,eigs}``.

Exit codes: 0 success, 2 invalid configuration or input, 3 construction
failure or blow-up, 4 internal numeric error.  Every command writes
``manifest.json`` into its output directory; passing that file back via
``--config`` reruns the command with the same resolved settings.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, io
from .config import default_config, load_config, mask_spec, schema_doc
from .domain import build_grid, make_mask
from .dynamics import fit_decay_rate, perturb, recipe_initial_state, simulate
from .errors import (
    BlowUpError,
    BranchDomainError,
    InsufficientDataError,
    InvalidArgumentError,
    NonConvergenceError,
    RDODEError,
    ResidualError,
    SchemaError,
)
from .kinetics import constant_steady_states, fitzhugh_folds, fitzhugh_model, linearization_at
from .stability import discrete_linearized_spectrum, linearize, stability_report
from .stationary import multi_branch_construct

log = logging.getLogger("rdode")

EXIT_OK, EXIT_SCHEMA, EXIT_FAILURE, EXIT_NUMERIC = 0, 2, 3, 4

_HINTS = {
    NonConvergenceError: "shrink the label-2 region or change gamma",
    BranchDomainError: "V left a branch interval; shrink the label-2 region or pick another base state",
    ResidualError: "tighten construct.tol",
    BlowUpError: "reduce simulate.dt (or drop --allow-cfl-override)",
}


def _model(cfg):
    m = cfg["model"]
    return fitzhugh_model(m["beta"], m["sigma"], m["delta"], m["rho"])


def _grid(cfg):
    g = cfg["grid"]
    return build_grid(g["nx"], g["ny"], g["lx"], g["ly"])


def _states(model, cfg):
    n = cfg["nullclines"]
    return constant_steady_states(model, ((n["u_min"], n["u_max"]), None), max(n["samples"], 2048))


def _pick_state(states, index, what):
    if not 1 <= index <= len(states):
        raise InvalidArgumentError(f"{what} = {index} but the model has {len(states)} constant states in the search box")
    return states[index - 1]


def _write_manifest(out: Path, command, cfg, extra=None):
    man = {
        "schema": "rdode.manifest/1",
        "command": command,
        "version": __version__,
        "config": cfg,
        "seeds": {"run": cfg["run"]["seed"],
                  "mask": cfg["mask"]["seed"] if cfg["mask"]["seed"] is not None else cfg["run"]["seed"]},
        "threads": cfg["run"]["threads"],
    }
    if extra:
        man.update(extra)
    io.write_json(out / "manifest.json", man)


# --------------------------------------------------------------------------
# commands


def cmd_nullclines(cfg, out: Path):
    model = _model(cfg)
    p = model.params
    n = cfg["nullclines"]
    u = np.linspace(n["u_min"], n["u_max"], n["samples"])
    rows = [(x, x * (1 - x) * (x - p["beta"]), "f") for x in u]
    rows += [(x, (p["sigma"] * x - p["rho"]) / p["delta"], "g") for x in u]
    with open(out / "nullclines.csv", "w") as fh:
        fh.write("u,v,curve_id\n")
        for a, b, c in rows:
            fh.write(f"{a:.17g},{b:.17g},{c}\n")
    states = _states(model, cfg)
    with open(out / "states.csv", "w") as fh:
        fh.write("index,u,v,branch,f_u\n")
        for k, s in enumerate(states, 1):
            A = linearization_at(model, s.u_bar, s.v_bar)[0]
            fh.write(f"{k},{s.u_bar[0]:.17g},{s.v_bar:.17g},{_branch_of(model, s)},{A[0, 0]:.17g}\n")
    u_lo, u_hi, v_min, v_max = fitzhugh_folds(p["beta"])
    io.write_json(out / "branches.json", {
        "folds": {"u_lo": u_lo, "u_hi": u_hi, "v_min": v_min, "v_max": v_max},
        "branches": {b.name: {"v_lo": b.v_lo, "v_hi": b.v_hi} for b in model.branches.values()},
    })
    print(f"{len(states)} constant states:")
    for k, s in enumerate(states, 1):
        print(f"  {k}: u={s.u_bar[0]:.8f} v={s.v_bar:.8f} ({_branch_of(model, s)})")
    return EXIT_OK, {"n_states": len(states)}


def _branch_of(model, s):
    best = None
    for b in model.branches.values():
        if b.contains(np.array(s.v_bar)):
            err = float(np.max(np.abs(b(np.array(s.v_bar)).ravel() - s.u_bar)))
            if best is None or err < best[0]:
                best = (err, b.name)
    return best[1] if best else "none"


def _construct(cfg):
    model = _model(cfg)
    grid = _grid(cfg)
    mask = make_mask(grid, mask_spec(cfg, grid))
    c = cfg["construct"]
    base = _pick_state(_states(model, cfg), c["base_state"], "construct.base_state")
    names = list(c["branches"])
    if len(names) < mask.nlabels:
        raise InvalidArgumentError(f"construct.branches lists {len(names)} branches for {mask.nlabels} mask labels")
    sol = multi_branch_construct(model, grid, mask, base, names, c["gamma"], c["tol"], c["max_iter"],
                                 c["residual_tol"])
    return model, sol


def _report(model, sol, cfg):
    s = cfg["stability"]
    return stability_report(model, sol, kappa=s["kappa"], N_exponent=s["n_exponent"],
                            deviation_threshold=s["deviation_threshold"],
                            assume_large_gamma=s["assume_large_gamma"], with_spectrum=s["spectrum"],
                            n_report=s["n_report"], dense_limit=s["dense_limit"])


def cmd_construct(cfg, out: Path):
    model, sol = _construct(cfg)
    io.save_solution(out / "solution", sol, model, seed=cfg["run"]["seed"])
    rep = _report(model, sol, cfg)
    io.write_json(out / "stability.json", rep.to_dict())
    d = sol.diagnostics
    print(f"converged in {d['iterations']} iterations; eps = {sol.eps_measured:.3e}; "
          f"f_res = {d['f_res']:.2e}; g_res = {d['g_res']:.2e}")
    print(rep.table())
    return EXIT_OK, {"classification": rep.classification, "iterations": d["iterations"]}


def cmd_simulate(cfg, out: Path, allow_cfl_override=False):
    model, sol = _construct(cfg)
    io.save_solution(out / "solution", sol, model, seed=cfg["run"]["seed"])
    s = cfg["simulate"]
    if s["initial"] == "recipe":
        base = _pick_state(_states(model, cfg), s["recipe_state"], "simulate.recipe_state")
        init = recipe_initial_state(sol.grid, sol.mask, base, s["amplitude"])
    else:
        init = perturb(sol, s["amplitude"], s["mode"], cfg["run"]["seed"], tuple(s["eigenmode"]))
    gamma = cfg["construct"]["gamma"]
    summary = {"gamma": gamma, "t_end": s["t_end"], "initial": s["initial"], "amplitude": s["amplitude"]}
    code = EXIT_OK
    try:
        trace = simulate(model, gamma, init, s["dt"], s["t_end"], s["snapshot_stride"], reference=sol,
                         allow_cfl_override=allow_cfl_override)
    except BlowUpError as exc:
        trace = exc.trace
        summary["error"] = str(exc)
        code = EXIT_FAILURE
    io.write_norms_csv(out / "norms.csv", trace, s["norms_stride"])
    io.write_snapshots(out / "snapshots", trace)
    D = trace.D
    summary.update({"dt": trace.dt, "steps": int(trace.times.size - 1), "D0": float(D[0]), "D_final": float(D[-1]),
                    "ratio": float(D[-1] / D[0]) if D[0] > 0 else None, "completed": trace.completed})
    window = None if s["window_start"] is None else (s["window_start"], s["window_stop"])
    try:
        fit = fit_decay_rate(trace, window)
        summary.update({"k_est": fit.k_est, "r_squared": fit.r_squared, "fit_samples": fit.n_samples,
                        "fit_truncated": fit.truncated})
    except InsufficientDataError as exc:
        summary.update({"k_est": None, "r_squared": None, "note": f"decay fit skipped: {exc}"})
    fin = trace.final
    summary["plateaus"] = {str(lab): {"u_mean": float(fin.u[0][sol.mask.labels == lab].mean()),
                                      "U_mean": float(sol.U[0][sol.mask.labels == lab].mean())}
                           for lab in range(1, sol.mask.nlabels + 1)}
    summary["final_deviation_from_construction"] = float(np.max(np.abs(fin.u - sol.U)) + np.max(np.abs(fin.v - sol.V)))
    io.write_json(out / "summary.json", summary)
    k = summary["k_est"]
    print(f"steps={summary['steps']} dt={trace.dt:.4g} D0={summary['D0']:.3e} D_end={summary['D_final']:.3e}"
          + (f" k_est={k:.4f} r2={summary['r_squared']:.4f}" if k is not None else f" ({summary['note']})"))
    if code != EXIT_OK:
        print(f"error: {summary['error']}", file=sys.stderr)
    return code, {"k_est": k}


def _load_artifacts(args, cfg):
    src = Path(args.solution)
    if (src / "solution").is_dir() and not (src / "solution.json").exists():
        src = src / "solution"
    sol, side = io.load_solution(src)
    m = side.get("model") or {}
    if m.get("name") not in (None, "fitzhugh"):
        raise InvalidArgumentError(f"unsupported model {m.get('name')!r} in {src}")
    params = m.get("params") or cfg["model"]
    model = fitzhugh_model(params["beta"], params["sigma"], params["delta"], params["rho"])
    return model, sol


def cmd_stability(cfg, out: Path, args=None):
    model, sol = _load_artifacts(args, cfg)
    rep = _report(model, sol, cfg)
    io.write_json(out / "stability.json", rep.to_dict())
    print(rep.table())
    return EXIT_OK, {"classification": rep.classification}


def cmd_eigs(cfg, out: Path, args=None):
    model, sol = _load_artifacts(args, cfg)
    s = cfg["stability"]
    spec = discrete_linearized_spectrum(linearize(model, sol), sol.grid, sol.gamma, s["n_report"], s["dense_limit"])
    with open(out / "eigs.csv", "w") as fh:
        fh.write("re,im\n")
        for z in spec.eigenvalues:
            fh.write(f"{z.real:.17g},{z.imag:.17g}\n")
    io.write_json(out / "eigs.json", spec.to_dict())
    print(f"discrete spectral bound {spec.spectral_bound:.8g} ({spec.method}); "
          f"cell-wise s(A(x)) max {spec.cell_ode_bound:.8g}")
    return EXIT_OK, {"spectral_bound": spec.spectral_bound}


COMMANDS = {
    "nullclines": cmd_nullclines,
    "construct": cmd_construct,
    "simulate": cmd_simulate,
    "stability": cmd_stability,
    "eigs": cmd_eigs,
}


def build_parser():
    p = argparse.ArgumentParser(prog="rdode", description=__doc__.splitlines()[0],
                                epilog="config schema:\n" + schema_doc(),
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"rdode {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI config or a manifest.json from an earlier run")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--threads", type=int, help="thread count for BLAS/FFT")
        sp.add_argument("--seed", type=int, help="overrides run.seed")
        sp.add_argument("--allow-cfl-override", action="store_true", help="accept dt above the CFL limit")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name in ("stability", "eigs"):
            sp.add_argument("--solution", required=True, help="directory written by construct or simulate")
    return p


def _threads(n):
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    import scipy.fft

    stack = contextlib.ExitStack()
    stack.enter_context(threadpool_limits(limits=n))
    stack.enter_context(scipy.fft.set_workers(n))
    return stack


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else default_config()
        if args.seed is not None:
            if args.seed < 0:
                raise SchemaError("--seed must be non-negative", path="run.seed")
            cfg["run"]["seed"] = args.seed
        if args.threads is not None:
            if args.threads < 0:
                raise SchemaError("--threads must be non-negative", path="run.threads")
            cfg["run"]["threads"] = args.threads
        out = Path(args.out if args.out else cfg["output"]["dir"])
        out.mkdir(parents=True, exist_ok=True)
        with _threads(cfg["run"]["threads"]):
            if args.command == "simulate":
                code, extra = cmd_simulate(cfg, out, args.allow_cfl_override)
            elif args.command in ("stability", "eigs"):
                code, extra = COMMANDS[args.command](cfg, out, args)
            else:
                code, extra = COMMANDS[args.command](cfg, out)
        man_extra = {"result": extra, "allow_cfl_override": bool(args.allow_cfl_override)}
        if args.command in ("stability", "eigs"):
            man_extra["solution"] = str(args.solution)
        _write_manifest(out, args.command, cfg, man_extra)
        return code
    except (SchemaError, InvalidArgumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (NonConvergenceError, BranchDomainError, ResidualError, BlowUpError) as exc:
        hint = next((h for t, h in _HINTS.items() if isinstance(exc, t)), "")
        print(f"error: {exc}" + (f"\nhint: {hint}" if hint else ""), file=sys.stderr)
        return EXIT_FAILURE
    except (RDODEError, FileNotFoundError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
