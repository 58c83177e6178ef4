"""Command-line front end.

Usage::

    twophoton --config run.yaml --out results/ [--workers N] [--strict-cutoff] [--tolerance X]

The config is a YAML mapping; see ``README.md`` for the schema.  Exit codes:
0 success, 2 invalid config, 3 solver failure, 4 inadequate cutoff with
``--strict-cutoff``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import yaml

from .entanglement import (
    duan_variance,
    fit_ces_mixture,
    fock_populations,
    mean_photon_number,
    negativity,
    optimize_phase,
)
from .exceptions import (
    ConfigError,
    DimensionError,
    ParameterError,
    SolverError,
    TruncationError,
)
from .fock import Truncation
from .model import SystemParams, build_reduced_liouvillian, derived_couplings
from .spectra import (
    default_omega_grid,
    integrated_cavity_check,
    narrowband_output_criterion,
    squeezing_spectra,
    to_db,
)
from .steady import coherent_product_state, fidelity_to_pure, solve_reduced
from .validation import check_conditions, choose_parameters, compare_full_vs_reduced

EXIT_OK, EXIT_SCHEMA, EXIT_SOLVER, EXIT_CUTOFF = 0, 2, 3, 4
TASKS = ("steady", "populations", "negativity", "duan", "ces-fit", "spectrum", "validate", "choose-params", "sweep")
SWEEP_AXES = ("Gamma", "Omega", "kappa")
_TOP_KEYS = {"task", "params", "rates", "truncation", "joint_max", "frame", "include_eps_correction", "tolerance",
             "solver", "spectrum", "duan", "ces_fit", "validate", "choose_params", "sweep", "plot"}




# ---------------------------------------------------------------- config


def _num(x, name):
    try:
        return float(x)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected a number, got {x!r}") from exc


def _grid(spec, name):
    if isinstance(spec, dict):
        unknown = set(spec) - {"start", "stop", "num", "spacing"}
        if unknown:
            raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
        try:
            start, stop, num = _num(spec["start"], name), _num(spec["stop"], name), int(spec["num"])
        except KeyError as exc:
            raise ConfigError(f"{name}: needs start, stop and num") from exc
        spacing = spec.get("spacing", "linear")
        if num < 1:
            raise ConfigError(f"{name}: grid is empty")
        if spacing == "log":
            if start <= 0 or stop <= 0:
                raise ConfigError(f"{name}: log grid needs positive bounds")
            grid = np.logspace(np.log10(start), np.log10(stop), num)
        elif spacing == "linear":
            grid = np.linspace(start, stop, num)
        else:
            raise ConfigError(f"{name}: spacing must be 'linear' or 'log'")
    elif isinstance(spec, (list, tuple)):
        grid = np.array([_num(v, name) for v in spec], dtype=float)
    else:
        raise ConfigError(f"{name}: expected a list or a start/stop/num mapping")
    if grid.size == 0:
        raise ConfigError(f"{name}: grid is empty")
    d = np.diff(grid)
    if grid.size > 1 and not (np.all(d > 0) or np.all(d < 0)):
        raise ConfigError(f"{name}: grid must be strictly monotone")
    return grid


def _params_from_rates(r):
    r = dict(r)
    try:
        Gamma = _num(r.pop("Gamma"), "rates.Gamma")
    except KeyError as exc:
        raise ConfigError("rates: Gamma is required") from exc
    kw = {}
    for k in ("kappa", "Omega_L", "Delta"):
        if k in r:
            kw[k] = _num(r.pop(k), f"rates.{k}")
    if "Omega" in r:
        v = r.pop("Omega")
        kw["Omega"] = complex(v[0], v[1]) if isinstance(v, (list, tuple)) else _num(v, "rates.Omega")
    if r:
        raise ConfigError(f"rates: unknown keys {sorted(r)}")
    return SystemParams.from_rates(Gamma, **kw)


def load_config(path: str, tolerance: float | None = None) -> dict:
    """Read and validate a YAML run config; raises :class:`ConfigError`."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    task = raw.get("task")
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got {task!r}")
    cfg = {"task": task, "raw": raw}
    if task != "choose-params":
        if ("params" in raw) == ("rates" in raw):
            raise ConfigError("give exactly one of 'params' or 'rates'")
        try:
            if "params" in raw:
                if not isinstance(raw["params"], dict):
                    raise ConfigError("params must be a mapping")
                cfg["params"] = SystemParams.from_dict(raw["params"])
            else:
                if not isinstance(raw["rates"], dict):
                    raise ConfigError("rates must be a mapping")
                cfg["params"] = _params_from_rates(raw["rates"])
        except (ParameterError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        tr = raw.get("truncation")
        try:
            if isinstance(tr, int) and not isinstance(tr, bool):
                cfg["trunc"] = Truncation.square(tr)
            elif isinstance(tr, dict):
                cfg["trunc"] = Truncation(int(tr["n_a_max"]), int(tr["n_b_max"]))
            else:
                raise ConfigError("truncation must be an integer or {n_a_max, n_b_max}")
        except (KeyError, TypeError, ValueError, TruncationError) as exc:
            raise ConfigError(f"invalid truncation: {exc}") from exc
    jm = raw.get("joint_max")
    if jm is not None and (isinstance(jm, bool) or not isinstance(jm, int) or jm < 0):
        raise ConfigError("joint_max must be a non-negative integer")
    if jm is not None and task in ("spectrum", "validate"):
        raise ConfigError(f"joint_max is not supported by task {task!r}")
    cfg["joint_max"] = jm
    cfg["frame"] = raw.get("frame", "lab")
    if cfg["frame"] not in ("lab", "displaced"):
        raise ConfigError("frame must be 'lab' or 'displaced'")
    cfg["eps"] = bool(raw.get("include_eps_correction", False))
    cfg["tol"] = tolerance if tolerance is not None else _num(raw.get("tolerance", 1e-9), "tolerance")
    if cfg["tol"] <= 0:
        raise ConfigError("tolerance must be positive")
    cfg["solver"] = raw.get("solver", "auto")
    if cfg["solver"] not in ("auto", "direct", "iterative"):
        raise ConfigError("solver must be auto, direct or iterative")
    cfg["plot"] = bool(raw.get("plot", True))
    for key in ("spectrum", "duan", "ces_fit", "validate", "choose_params", "sweep"):
        sub = raw.get(key, {}) or {}
        if not isinstance(sub, dict):
            raise ConfigError(f"{key} must be a mapping")
        cfg[key] = sub
    if task == "spectrum":
        sp_ = cfg["spectrum"]
        cfg["omega"] = _grid(sp_["omega"], "spectrum.omega") if "omega" in sp_ else default_omega_grid()
    if task == "sweep":
        sw = cfg["sweep"]
        if sw.get("axis") not in SWEEP_AXES:
            raise ConfigError(f"sweep.axis must be one of {SWEEP_AXES}")
        if "grid" not in sw:
            raise ConfigError("sweep.grid is required")
        cfg["grid"] = _grid(sw["grid"], "sweep.grid")
    if task == "choose-params":
        cp = cfg["choose_params"]
        try:
            cfg["N"], cfg["Gamma_t"], cfg["x"] = int(cp["N"]), _num(cp["Gamma_t"], "Gamma_t"), _num(cp["x"], "x")
        except KeyError as exc:
            raise ConfigError("choose_params needs N, Gamma_t and x") from exc
    return cfg


# ---------------------------------------------------------------- tasks


def _phi(spec, default=np.pi / 2):
    v = spec.get("phi", default)
    if v == "optimal":
        return v
    return _num(v, "phi")


def _solve(cfg, p=None):
    return solve_reduced(p or cfg["params"], cfg["trunc"], frame=cfg["frame"],
                         include_eps_correction=cfg["eps"], tol=cfg["tol"], solver=cfg["solver"],
                         joint_max=cfg.get("joint_max"))


def _steady_diag(rep):
    return {
        "residual": rep.residual,
        "method": rep.method.value,
        "iterations": rep.iterations,
        "solver": rep.info.get("solver"),
        "frame_displacement": [[z.real, z.imag] for z in rep.rho.displacement],
        "displacement_updates": rep.info.get("displacement_updates"),
        "top_fock_population": list(rep.cutoff.top_population),
        "cutoff_adequate": rep.cutoff.adequate,
        "recommended_truncation": [rep.cutoff.recommended.n_a_max, rep.cutoff.recommended.n_b_max],
        "joint_edge_population": rep.cutoff.joint_edge,
    }


def _task_steady(cfg):
    rep = _solve(cfg)
    p = cfg["params"]
    out = {"mean_photon_number": mean_photon_number(rep.rho)}
    a, b = rep.rho.mode_operators()
    for name, op in (("mean_a", a), ("mean_b", b)):
        z = rep.rho.expect(op)
        out[name] = [z.real, z.imag]
    c = derived_couplings(p)
    out["derived"] = {"Gamma": c.Gamma, "U": c.U, "Gamma1": c.Gamma1, "H1_shift": c.H1_shift}
    if c.Gamma == 0 and c.U == 0 and p.kappa_a > 0 and p.kappa_b > 0:
        ket = coherent_product_state(p, cfg["trunc"], rep.rho.displacement)
        out["fidelity_to_coherent"] = fidelity_to_pure(rep.rho, ket)
    return rep, out, {}


def _task_populations(cfg):
    rep = _solve(cfg)
    P = fock_populations(rep.rho)
    out = {
        "mean_photon_number": mean_photon_number(rep.rho),
        "jointly_excited_population": float(P[1:, 1:].sum()),
        "axis_population": float(P[0, :].sum() + P[:, 0].sum() - P[0, 0]),
        "total_population": float(P.sum()),
    }
    return rep, out, {"populations.csv": (["n_a"] + [f"n_b={j}" for j in range(P.shape[1])],
                                          [[i] + list(P[i]) for i in range(P.shape[0])])}


def _task_negativity(cfg):
    rep = _solve(cfg)
    return rep, {"negativity": negativity(rep.rho)}, {}


def _duan_out(rho, phi):
    res = optimize_phase(rho) if phi == "optimal" else duan_variance(rho, phi)
    return {"phi": res.phi, "variance": res.variance, "entangled": res.entangled_flag,
            "imag_residual": res.imag_residual}


def _task_duan(cfg):
    rep = _solve(cfg)
    return rep, _duan_out(rep.rho, _phi(cfg["duan"])), {}


def _task_ces(cfg):
    if cfg["frame"] != "lab":
        raise ConfigError("ces-fit needs frame: lab")
    rep = _solve(cfg)
    sub = cfg["ces_fit"]
    alpha0 = sub.get("alpha0")
    if isinstance(alpha0, (list, tuple)):
        alpha0 = complex(alpha0[0], alpha0[1])
    fit = fit_ces_mixture(rep.rho, alpha0=alpha0, metric=sub.get("metric", "trace"))
    out = {"p1": fit.p1, "p2": fit.p2, "alpha1": [fit.alpha1.real, fit.alpha1.imag],
           "alpha2": [fit.alpha2.real, fit.alpha2.imag], "overlap": fit.overlap, "metric": fit.metric,
           "trace_overlap": fit.trace_overlap, "fidelity": fit.fidelity,
           "branch_overlaps": list(fit.branch_overlaps), "converged": fit.converged}
    return rep, out, {}


def _task_spectrum(cfg):
    rep = _solve(cfg)
    sub = cfg["spectrum"]
    phi = _phi(sub)
    if phi == "optimal":
        phi = optimize_phase(rep.rho).phi
    p = cfg["params"]
    L = build_reduced_liouvillian(p, cfg["trunc"], cfg["eps"], displacement=rep.rho.displacement)
    s = squeezing_spectra(L, rep.rho, phi, cfg["omega"], krylov_steps=int(sub.get("krylov_steps", 50)),
                          method=sub.get("method", "krylov"), tol=max(cfg["tol"], 1e-8), solver=cfg["solver"])
    su0, sv0 = s.at(0.0)
    out = {"phi": phi, "kappa": s.kappa, "S_u0": su0, "S_v0": sv0,
           "S_u0_dB": float(to_db(su0)), "S_v0_dB": float(to_db(sv0)),
           "parity_error": s.parity_error(), "imag_residual_max": s.imag_residual_max,
           "resolvent_residual": s.info["resolvent_residual"], "fallback_solves": s.info["fallbacks"],
           "narrowband_criterion": narrowband_output_criterion(s, float(sub.get("delta_omega", 1e-3)))}
    if sub.get("integral_check", False):
        lhs, rhs = integrated_cavity_check(s, rep.rho)
        out["integral_check"] = {"lhs": lhs, "rhs": rhs}
    rows = [[w, u, v] for w, u, v in zip(s.omega_grid, s.S_u, s.S_v)]
    return rep, out, {"spectrum.csv": (["omega", "S_u", "S_v"], rows)}


def _task_validate(cfg):
    sub = cfg["validate"]
    mf = _num(sub.get("margin_factor", 10.0), "margin_factor")
    rep_c = check_conditions(cfg["params"], cfg["trunc"], mf)
    out = {"conditions": rep_c.to_dict(), "table": rep_c.table()}
    if sub.get("compare", False):
        cmp_ = compare_full_vs_reduced(cfg["params"], cfg["trunc"], margin_factor=mf, tol=cfg["tol"])
        out["trace_distance_full_vs_reduced"] = cmp_.distance
    return None, out, {}


def _task_choose(cfg):
    fp = choose_parameters(cfg["N"], cfg["Gamma_t"], cfg["x"])
    return None, {"N": fp.N, "Gamma_t": fp.Gamma_t, "x": fp.x, "g_t": fp.g_t, "OmegaL_t": fp.OmegaL_t,
                  "OmegaL_over_g": fp.OmegaL_t / fp.g_t, "Gamma_roundtrip": fp.Gamma_roundtrip}, {}


def sweep_params(p: SystemParams, axis: str, value: float) -> SystemParams:
    """Parameters at one sweep point (symmetric in the two modes)."""
    if axis == "Gamma":
        if value < 0:
            raise ParameterError("Gamma must be >= 0")
        g = (value * abs(p.Omega_L) ** 2 * (p.Delta**2 + p.gamma42**2 / 4) / p.gamma42) ** 0.25
        return p.replace(g_a=g, g_b=g)
    if axis == "Omega":
        return p.replace(Omega_a=value, Omega_b=value)
    if axis == "kappa":
        return p.replace(kappa_a=value, kappa_b=value)
    raise ParameterError(f"unknown sweep axis {axis!r}")


def _sweep_row(args):
    cfg, axis, value = args
    p = sweep_params(cfg["params"], axis, value)
    row = {"Gamma": derived_couplings(p).Gamma, "Omega": p.Omega_a.real, "kappa": p.kappa_a}
    row[axis] = value
    try:
        rep = _solve(cfg, p)
        phi = _phi(cfg["sweep"])
        d = optimize_phase(rep.rho) if phi == "optimal" else duan_variance(rep.rho, phi)
        row.update(negativity=negativity(rep.rho), duan=d.variance, duan_phi=d.phi,
                   mean_photon_number=mean_photon_number(rep.rho), residual=rep.residual,
                   top_population=max(rep.cutoff.top_population), joint_edge=rep.cutoff.joint_edge,
                   cutoff_adequate=rep.cutoff.adequate, status="ok")
    except (SolverError, ParameterError, DimensionError) as exc:
        row.update(status=f"failed: {exc}")
    return row


def _task_sweep(cfg, workers):
    axis = cfg["sweep"]["axis"]
    jobs = [(cfg, axis, float(v)) for v in cfg["grid"]]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_row, jobs))  # map preserves input order
    else:
        rows = [_sweep_row(j) for j in jobs]
    cols = [axis] + [c for c in ("Gamma", "Omega", "kappa") if c != axis] + [
        "negativity", "duan", "duan_phi", "mean_photon_number", "residual", "top_population",
        "joint_edge", "cutoff_adequate", "status"]
    table = [[r.get(c, "") for c in cols] for r in rows]
    out = {"axis": axis, "rows": rows, "failed_rows": sum(r["status"] != "ok" for r in rows)}
    return None, out, {"sweep.csv": (cols, table)}, rows


# ---------------------------------------------------------------- output

_PLOTS = {
    "populations": '''import numpy as np, matplotlib.pyplot as plt
P = np.loadtxt("populations.csv", delimiter=",", skiprows=1)[:, 1:]
plt.imshow(P, origin="lower", cmap="viridis")
plt.xlabel("n_b"); plt.ylabel("n_a"); plt.colorbar(label="population")
plt.savefig("populations.png", dpi=150)
''',
    "spectrum": '''import numpy as np, matplotlib.pyplot as plt
w, su, sv = np.loadtxt("spectrum.csv", delimiter=",", skiprows=1, unpack=True)
plt.plot(w, 10 * np.log10(1 + su), label="S_u")
plt.plot(w, 10 * np.log10(1 + sv), label="S_v")
plt.xlabel("omega / gamma42"); plt.ylabel("dB relative to shot noise"); plt.legend()
plt.savefig("spectrum.png", dpi=150)
''',
    "sweep": '''import csv, matplotlib.pyplot as plt
rows = [r for r in csv.DictReader(open("sweep.csv")) if r["status"] == "ok"]
axis = list(rows[0].keys())[0]
x = [float(r[axis]) for r in rows]
fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
a1.semilogx(x, [float(r["negativity"]) for r in rows], "o-"); a1.set_ylabel("negativity")
a2.semilogx(x, [float(r["duan"]) for r in rows], "o-"); a2.axhline(0, color="k", lw=0.5)
a2.set_ylabel("EPR variance")
for a in (a1, a2):
    a.set_xlabel(axis)
fig.tight_layout(); fig.savefig("sweep.png", dpi=150)
''',
}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x) if np.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def run(config_path: str, out_dir: str = ".", workers: int | None = None, strict_cutoff: bool = False,
        tolerance: float | None = None) -> int:
    """Execute one config and write ``result.json`` (plus CSV/plot files) to ``out_dir``."""
    t0 = time.perf_counter()
    try:
        cfg = load_config(config_path, tolerance)
    except (ConfigError, ParameterError, TruncationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    workers = workers or os.cpu_count() or 1
    task = cfg["task"]
    handlers = {"steady": _task_steady, "populations": _task_populations, "negativity": _task_negativity,
                "duan": _task_duan, "ces-fit": _task_ces, "spectrum": _task_spectrum,
                "validate": _task_validate, "choose-params": _task_choose}
    code = EXIT_OK
    try:
        if task == "sweep":
            rep, out, tables, rows = _task_sweep(cfg, workers)
            diag = {"rows_cutoff_adequate": [r.get("cutoff_adequate") for r in rows]}
            inadequate = any(r.get("cutoff_adequate") is False for r in rows)
        else:
            rep, out, tables = handlers[task](cfg)
            diag = _steady_diag(rep) if rep is not None else {}
            inadequate = rep is not None and not rep.cutoff.adequate
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (ParameterError, DimensionError, TruncationError) as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if inadequate and strict_cutoff:
        code = EXIT_CUTOFF
        print("cutoff inadequate: top Fock-level population above threshold", file=sys.stderr)
    os.makedirs(out_dir, exist_ok=True)
    echo = dict(cfg["raw"])
    if "params" in cfg:
        echo["resolved_params"] = cfg["params"].to_dict()
    envelope = {"config": echo, "task": task, "outputs": out, "diagnostics": diag,
                "wall_time_s": time.perf_counter() - t0, "exit_code": code}
    with open(os.path.join(out_dir, "result.json"), "w") as fh:
        json.dump(_jsonable(envelope), fh, indent=2, sort_keys=True)
    for name, (header, rows) in tables.items():
        _write_csv(os.path.join(out_dir, name), header, rows)
    if cfg["plot"] and task in _PLOTS:
        with open(os.path.join(out_dir, f"plot_{task}.py"), "w") as fh:
            fh.write(_PLOTS[task])
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="twophoton", description="Two-mode cavity simulator with two-photon loss")
    ap.add_argument("--config", required=True, help="YAML run configuration")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--workers", type=int, default=None, help="sweep worker processes (default: all cores)")
    ap.add_argument("--strict-cutoff", action="store_true", help="exit 4 if the Fock cutoff is inadequate")
    ap.add_argument("--tolerance", type=float, default=None, help="steady-state residual tolerance")
    args = ap.parse_args(argv)
    return run(args.config, args.out, args.workers, args.strict_cutoff, args.tolerance)


if __name__ == "__main__":
    sys.exit(main())
