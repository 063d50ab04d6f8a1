"""Command-line front end: JSON config in, CSV/JSON/SVG artifacts out.

    scareth <task> --config run.json --output out/ [--threads N] [--seed S]

Exit codes: 0 success, 2 validation, 3 capacity, 4 convergence,
5 integration.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .basis import enumerate_basis, product_basis
from .constraint import build_constrained_hamiltonian, build_local_observable, build_quasiparticle_counter, observable_name
from .errors import ScarethError, ValidationError
from .model import GENERIC, HD_PXP, SPIN_CHAIN, ModelSpec, spec_from_dict
from .plots import Figure
from .spectra import (
    SCAR_POLICIES,
    EigenSystem,
    diagonal_ensemble_mean,
    diagonalize,
    eigen_expectation,
    eigen_table,
    fmt,
    load_eigensystem,
    overlaps,
    save_eigensystem,
    scar_initial_state,
    tag_scars,
)

TASKS = ("basis", "spectrum", "evolve", "decay", "cscan", "leakage", "ensemble", "ethfit")
MODEL_FIELDS = ("family", "j", "n_sites", "boundary", "c", "local_h", "bond_states", "basis_cap", "full_cap")
EVOLVE_METHODS = ("unitary", "master", "trajectories", "projected")

# documented defaults, filled by parse_config
DEFAULTS = {
    "common": {"threads": 1, "seed": None, "cache": True, "cache_dir": None},
    "basis": {},
    "spectrum": {"observables": None, "scar_policy": "gap", "scar_window": 0.3},
    "evolve": {
        "method": "unitary",
        "kind": "LindbladPrime",
        "t_max": 10.0,
        "grid_step": 0.1,
        "dt": None,
        "n_traj": 500,
        "initial_state": None,
        "observables": [],
    },
    "decay": {"indices": None, "t_max": None, "n_times": 101, "method": None, "kind": "Positive"},
    "cscan": {"c_list": [400, 600, 800, 1000, 1200], "indices": None, "t_max": None, "n_times": 101, "method": None},
    "leakage": {"states": None, "t_max": None, "n_times": 401, "method": "trajectories", "n_traj": 500},
    "ensemble": {
        "observable": "O2",
        "subsystem": [1, 2],
        "targets": "scars",
        "scar_policy": "gap",
        "scar_window": 0.3,
        "dynamics": None,
    },
    "ethfit": {"observable": "O2", "energy_window": None, "scar_policy": "gap", "scar_window": 0.3},
}
STOCHASTIC = {"evolve": lambda p: p["method"] == "trajectories", "leakage": lambda p: p["method"] == "trajectories"}


@dataclass
class RunConfig:
    spec: ModelSpec
    task: str
    params: dict = field(default_factory=dict)
    output: Path = Path(".")
    source: str | None = None


# ---------------------------------------------------------------------------
# configuration


def _load_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"config: cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ValidationError("config: top level must be a JSON object")
    return data


def config_from_dict(data: dict, task: str | None = None, output=None, source=None) -> RunConfig:
    """Validate a config mapping and fill the documented defaults."""
    data = dict(data)
    cfg_task = data.pop("task", None)
    if task is not None and cfg_task is not None and cfg_task != task:
        raise ValidationError(f"task: config says {cfg_task!r} but the command is {task!r}")
    task = task or cfg_task
    if task is None:
        raise ValidationError("task: missing")
    if task not in TASKS:
        raise ValidationError(f"task: {task!r} is not one of {', '.join(TASKS)}")
    model = data.pop("model", None)
    if model is None:
        model = {k: data.pop(k) for k in MODEL_FIELDS if k in data}
    elif any(k in data for k in MODEL_FIELDS):
        raise ValidationError("model: give the model either flat or under 'model', not both")
    spec = spec_from_dict(model)
    out_dir = data.pop("output", None)
    params = {**DEFAULTS["common"], **DEFAULTS[task]}
    unknown = set(data) - set(params)
    if unknown:
        raise ValidationError(f"{task}: unknown fields {sorted(unknown)}; expected {sorted(params)}")
    params.update(data)
    _check_params(spec, task, params)
    return RunConfig(spec, task, params, Path(output or out_dir or "."), source)


def parse_config(path, task: str | None = None, output=None) -> RunConfig:
    return config_from_dict(_load_json(path), task, output, str(path))


def _positive(params, name, integer=False, allow_none=False):
    v = params[name]
    if v is None and allow_none:
        return
    ok = isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0
    if integer:
        ok = ok and int(v) == v
    if not ok:
        raise ValidationError(f"{name}: must be a positive {'integer' if integer else 'number'}, got {v!r}")


def _check_params(spec: ModelSpec, task: str, p: dict) -> None:
    _positive(p, "threads", integer=True)
    if p["seed"] is not None and (not isinstance(p["seed"], int) or isinstance(p["seed"], bool) or not 0 <= p["seed"] < 2**64):
        raise ValidationError(f"seed: must be an unsigned 64-bit integer, got {p['seed']!r}")
    if "scar_policy" in p and p["scar_policy"] not in SCAR_POLICIES:
        raise ValidationError(f"scar_policy: {p['scar_policy']!r} not in {SCAR_POLICIES}")
    if task == "evolve":
        if p["method"] not in EVOLVE_METHODS:
            raise ValidationError(f"method: {p['method']!r} not in {EVOLVE_METHODS}")
        _positive(p, "t_max")
        _positive(p, "grid_step")
        _positive(p, "dt", allow_none=True)
        _positive(p, "n_traj", integer=True)
        if p["method"] != "unitary":
            from .dynamics import parse_kind

            parse_kind(p["kind"])
    if task in ("decay", "cscan"):
        _positive(p, "t_max", allow_none=True)
        _positive(p, "n_times", integer=True)
        if p["method"] not in (None, "master", "projected"):
            raise ValidationError(f"method: {p['method']!r} not in (master, projected)")
    if task == "cscan":
        cs = p["c_list"]
        if not isinstance(cs, list) or len(cs) < 2 or any(not isinstance(c, (int, float)) or c <= 0 for c in cs):
            raise ValidationError("c_list: need at least two positive values")
    if task == "leakage":
        _positive(p, "t_max", allow_none=True)
        _positive(p, "n_times", integer=True)
        _positive(p, "n_traj", integer=True)
        if p["method"] not in ("trajectories", "projected", "master"):
            raise ValidationError(f"method: {p['method']!r} not in (trajectories, projected, master)")
        if p["states"] is None and spec.family != SPIN_CHAIN:
            raise ValidationError("states: required for this model family")
    if task == "ensemble":
        sub = p["subsystem"]
        if not isinstance(sub, list) or not sub or any(not isinstance(s, int) for s in sub):
            raise ValidationError("subsystem: a list of 1-based site indices")
        if not (p["targets"] in ("scars", "all") or isinstance(p["targets"], list)):
            raise ValidationError("targets: 'scars', 'all' or a list of eigenstate indices")


# ---------------------------------------------------------------------------
# outputs


class Outputs:
    """Tracks written files so a failed run can remove its partial artifacts."""

    def __init__(self, directory: Path):
        self.dir = Path(directory)
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
            probe = self.dir / ".write-test"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise ValidationError(f"output: directory {self.dir} is not writable ({exc.strerror})") from exc
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.dir / name
        self.files.append(p)
        return p

    def cleanup(self) -> None:
        for p in self.files:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def _code_version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:
        return "unknown"


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _state_tuple(state) -> tuple:
    if not isinstance(state, (list, tuple)):
        raise ValidationError(f"state: expected a list of site labels, got {state!r}")
    out = []
    for s in state:
        if isinstance(s, str) and not s.startswith("b_") and not s.startswith("a_"):
            s = Fraction(s)
        out.append(s)
    return tuple(out)


# ---------------------------------------------------------------------------
# shared helpers


def get_eigensystem(cfg: RunConfig, outputs: Outputs | None = None, spec: ModelSpec | None = None) -> EigenSystem:
    """Diagonalize, reusing a cached eigensystem whose key matches the spec hash."""
    spec = spec or cfg.spec
    basis = enumerate_basis(spec)
    key = spec.spec_hash()
    cache_dir = cfg.params.get("cache_dir") or os.environ.get("SCARETH_CACHE") or (cfg.output / ".cache")
    path = Path(cache_dir) / f"{key[:32]}.eig"
    if cfg.params.get("cache", True) and path.exists():
        try:
            return load_eigensystem(path, basis, key)
        except ValidationError:
            pass  # stale or foreign file: recompute and overwrite
    eigsys = diagonalize(build_constrained_hamiltonian(spec, basis), basis)
    if cfg.params.get("cache", True):
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        save_eigensystem(tmp, eigsys, key)
        os.replace(tmp, path)
    return eigsys


def _default_observables(spec: ModelSpec) -> list:
    if spec.family == HD_PXP:
        return ["hd-O1", "hd-O2"]
    if spec.family == GENERIC:
        return []
    return ["O1", "O2", "O3"]


def _scars(cfg: RunConfig, eigsys: EigenSystem, ov: np.ndarray) -> np.ndarray:
    p = cfg.params
    return tag_scars(
        ov, eigsys.energies, candidates=eigsys.nondegenerate(), policy=p.get("scar_policy", "gap"), window=p.get("scar_window", 0.3)
    )


# ---------------------------------------------------------------------------
# tasks


def task_basis(cfg: RunConfig, out: Outputs) -> dict:
    from .basis import transfer_matrix_count

    basis = enumerate_basis(cfg.spec)
    count = transfer_matrix_count(cfg.spec)
    if count != basis.dim:
        raise ValidationError(f"enumeration gives {basis.dim} states but the transfer matrix gives {count}")
    labels = basis.site_values()
    _write_rows(out.path("basis.csv"), ["index", "state"], ([i, " ".join(str(x) for x in labels[i])] for i in range(basis.dim)))
    report = f"dim = {basis.dim}"
    out.path("report.txt").write_text(report + "\n")
    print(report)
    return {"dim": basis.dim}


def task_spectrum(cfg: RunConfig, out: Outputs) -> dict:
    spec = cfg.spec
    eigsys = get_eigensystem(cfg, out)
    basis = eigsys.basis
    names = cfg.params["observables"]
    names = _default_observables(spec) if names is None else names
    obs = {observable_name(d): build_local_observable(spec, d, basis) for d in names}
    psi0 = scar_initial_state(basis)
    table = eigen_table(
        eigsys,
        psi0,
        build_quasiparticle_counter(spec, basis),
        obs,
        policy=cfg.params["scar_policy"],
        window=cfg.params["scar_window"],
    )
    table.write_csv(out.path("spectrum.csv"))
    fig = Figure("overlap with the initial state", "energy", "overlap", logy=True)
    keep = table.overlap0 > 1e-14
    fig.scatter(table.energy[keep], table.overlap0[keep], color="#7f7f7f", radius=1.5)
    fig.scatter(table.energy[table.scar_flag], table.overlap0[table.scar_flag], color="#d62728", radius=3, label="tagged")
    fig.save(out.path("overlap.svg"))
    fig = Figure("quasi-particle number", "energy", "<N>")
    fig.scatter(table.energy, table.n_expect, color="#7f7f7f", radius=1.5)
    fig.scatter(table.energy[table.scar_flag], table.n_expect[table.scar_flag], color="#d62728", radius=3, label="tagged")
    fig.save(out.path("n_expect.svg"))
    return {"dim": eigsys.dim, "scars": [int(i) for i in np.nonzero(table.scar_flag)[0]]}


def task_evolve(cfg: RunConfig, out: Outputs) -> dict:
    from .dynamics import evolve_master, evolve_projected, evolve_unitary, sample_trajectories, time_grid

    spec, p = cfg.spec, cfg.params
    basis = enumerate_basis(spec)
    psi0 = scar_initial_state(basis) if p["initial_state"] is None else basis.product_state(_state_tuple(p["initial_state"]))
    times = time_grid(p["t_max"], p["grid_step"])
    method = p["method"]
    if method in ("unitary", "projected"):
        obs = {observable_name(d): build_local_observable(spec, d, basis) for d in p["observables"]}
    else:
        full = product_basis(spec)
        obs = {observable_name(d): build_local_observable(spec, d, full) for d in p["observables"]}
    if method == "unitary":
        ts = evolve_unitary(get_eigensystem(cfg, out), psi0, times, obs)
    elif method == "projected":
        ts = evolve_projected(spec, p["kind"], psi0, times, basis=basis, observables=obs)
    elif method == "master":
        ts = evolve_master(spec, p["kind"], psi0, times, dt=p["dt"], observables=obs)
    else:
        ts = sample_trajectories(spec, p["kind"], psi0, times, p["n_traj"], p["seed"], dt=p["dt"], observables=obs, threads=p["threads"])
    ts.write_csv(out.path("timeseries.csv"))
    out.files.append(out.dir / "timeseries.csv.json")
    fig = Figure(f"{method} evolution", "t", "value")
    for name in ("fidelity", "leakage"):
        if name in ts.channels:
            fig.line(ts.times, ts.channels[name], label=name)
    fig.save(out.path("timeseries.svg"))
    return {"method": method, "points": len(times)}


def task_decay(cfg: RunConfig, out: Outputs) -> dict:
    from .analysis import decay_scan

    p = cfg.params
    eigsys = get_eigensystem(cfg, out)
    scan = decay_scan(cfg.spec, None, p["indices"], p["t_max"], p["n_times"], p["method"], p["kind"], eigsys=eigsys)
    scan.write_csv(out.path("decay.csv"))
    fig = Figure("decay rate against quasi-particle number", "<N>_i", "alpha_i")
    fig.scatter(scan.n_expect, scan.alphas, radius=3)
    x = np.array([0.0, scan.n_expect.max()])
    fig.line(x, scan.gamma_fit * x, dashed=True, label="through-origin fit")
    fig.save(out.path("decay.svg"))
    rate = 2 * np.sqrt(2 * float(cfg.spec.j)) / cfg.spec.c
    return {
        "gamma_fit": scan.gamma_fit,
        "expected": rate,
        "free_fit": [float(x) for x in scan.intercept_fit.coefficients],
        "method": scan.method,
        "note": "degenerate eigenstates are excluded from the window",
    }


def task_cscan(cfg: RunConfig, out: Outputs) -> dict:
    from .analysis import c_scan

    p = cfg.params
    eigsys = get_eigensystem(cfg, out)
    scan = c_scan(cfg.spec, p["c_list"], p["indices"], t_max=p["t_max"], n_times=p["n_times"], method=p["method"], eigsys=eigsys)
    scan.write_csv(out.path("cscan.csv"))
    inv = 1 / scan.cs
    fig = Figure("gamma_fit against 1/c", "1/c", "gamma_fit")
    fig.scatter(inv, scan.gamma_fit, radius=3)
    x = np.array([0.0, inv.max()])
    fig.line(x, scan.slope * x, dashed=True, label="through-origin fit")
    fig.save(out.path("cscan.svg"))
    return {
        "slope": scan.slope,
        "expected": 2 * np.sqrt(2 * float(cfg.spec.j)),
        "relative_residual": scan.relative_residual,
        "free_fit": [float(x) for x in scan.free_fit.coefficients],
    }


def default_leakage_states(spec: ModelSpec) -> list[tuple]:
    """Three zero-energy product states: all m=j, all m=j-1, alternating."""
    n, j = spec.n_sites, spec.j
    alt = tuple(j if k % 2 == 0 else j - 1 for k in range(n))
    return [(j,) * n, (j - 1,) * n, alt]


def task_leakage(cfg: RunConfig, out: Outputs) -> dict:
    from .analysis import leakage_experiment

    p = cfg.params
    states = default_leakage_states(cfg.spec) if p["states"] is None else [_state_tuple(s) for s in p["states"]]
    run = leakage_experiment(
        cfg.spec,
        states,
        t_max=p["t_max"],
        n_times=p["n_times"],
        method=p["method"],
        n_traj=p["n_traj"],
        seed=p["seed"],
        eigsys=get_eigensystem(cfg, out),
        threads=p["threads"],
    )
    run.write_csv(out.path("leakage.csv"))
    header = ["t"] + [f"h[{k}]" for k in range(len(states))]
    times = run.series[0].times
    rows = ([fmt(t)] + [fmt(ts["leakage"][g]) for ts in run.series] for g, t in enumerate(times))
    _write_rows(out.path("leakage_series.csv"), header, rows)
    fig = Figure("leakage out of the constrained space", "t", "Tr(rho P)")
    for k, ts in enumerate(run.series):
        fig.line(times, ts["leakage"], label=run.labels[k][:18])
        fig.line(times, 1 + run.predicted[k] * times, dashed=True, color="#000000")
    fig.save(out.path("leakage.svg"))
    return {"relative_error": [float(x) for x in run.relative_error], "method": run.method}


def task_ensemble(cfg: RunConfig, out: Outputs) -> dict:
    from .thermo import canonical_params, ensemble_average, grand_canonical_params, reduced_dm, schatten_distance

    spec, p = cfg.spec, cfg.params
    eigsys = get_eigensystem(cfg, out)
    basis = eigsys.basis
    E = eigsys.energies
    N = eigen_expectation(eigsys, build_quasiparticle_counter(spec, basis))
    op = build_local_observable(spec, p["observable"], basis)
    O = eigen_expectation(eigsys, op)
    psi0 = scar_initial_state(basis)
    ov = overlaps(eigsys, psi0)
    scars = _scars(cfg, eigsys, ov)
    if p["targets"] == "scars":
        targets = scars
    elif p["targets"] == "all":
        targets = np.arange(eigsys.dim)
    else:
        targets = np.asarray(p["targets"], dtype=np.int64)
    inside = (E[targets] > E[0]) & (E[targets] < E[-1])
    skipped = [int(i) for i in targets[~inside]]
    targets = targets[inside]
    sites = [s - 1 for s in p["subsystem"]]
    flag = np.zeros(eigsys.dim, dtype=bool)
    flag[scars] = True
    rows = []
    results = {}
    for i in targets:
        gc = grand_canonical_params(E, N, E[i], N[i])
        ca = canonical_params(E, E[i])
        sigma = reduced_dm(basis, eigsys.vectors[:, i], sites)
        rho_g = reduced_dm(basis, eigsys.vectors, sites, gc.weights)
        rho_c = reduced_dm(basis, eigsys.vectors, sites, ca.weights)
        dev_c = ensemble_average(ca, O) - O[i]
        dev_g = ensemble_average(gc, O) - O[i]
        d = [schatten_distance(r, sigma, q) for q in (1, 2) for r in (rho_c, rho_g)]
        rows.append([int(i), fmt(E[i]), fmt(dev_c), fmt(dev_g), *map(fmt, d), int(flag[i])])
        results[int(i)] = {"residual_grand": gc.residual, "residual_canonical": ca.residual, "beta": gc.beta, "beta_mu": gc.beta_mu}
    _write_rows(
        out.path("ensemble.csv"),
        ["index", "energy", "dev_canonical", "dev_grand", "d1_canonical", "d1_grand", "d2_canonical", "d2_grand", "scar_flag"],
        rows,
    )
    if rows:
        arr = np.array([[float(x) for x in r[1:4]] for r in rows])
        fig = Figure(f"ensemble deviation of {observable_name(p['observable'])}", "energy", "Tr(O rho) - <O>_i")
        fig.scatter(arr[:, 0], arr[:, 1], color="#7f7f7f", radius=3, label="canonical")
        fig.scatter(arr[:, 0], arr[:, 2], color="#1f77b4", radius=2.5, label="grand canonical")
        fig.save(out.path("ensemble.svg"))
    summary = {"targets": [int(i) for i in targets], "skipped_extremal": skipped, "solves": results}
    if p["dynamics"] is not None:
        summary["dynamics"] = _ensemble_dynamics(cfg, out, eigsys, E, N, psi0)
    return summary


def _ensemble_dynamics(cfg, out, eigsys, E, N, psi0) -> dict:
    """Long-time averages from the initial state against both ensemble predictions."""
    from .dynamics import evolve_unitary
    from .thermo import canonical_params, ensemble_average, grand_canonical_params

    spec, p = cfg.spec, cfg.params
    dyn = p["dynamics"]
    names = dyn.get("observables", ["O2", "O3"])
    basis = eigsys.basis
    ops = {observable_name(d): build_local_observable(spec, d, basis) for d in names}
    times = np.linspace(0.0, float(dyn.get("t_max", 200.0)), int(dyn.get("n_times", 2001)))
    ts = evolve_unitary(eigsys, psi0, times, ops)
    counter = build_quasiparticle_counter(spec, basis)
    H = build_constrained_hamiltonian(spec, basis).matrix
    e0 = float(np.real(np.vdot(psi0, H @ psi0)))
    n_bar = diagonal_ensemble_mean(eigsys, psi0, counter)
    gc = grand_canonical_params(E, N, e0, n_bar)
    ca = canonical_params(E, e0)
    rows, res = [], {}
    for name, op in ops.items():
        vals = eigen_expectation(eigsys, op)
        lt = float(np.mean(ts[name]))
        g, c = ensemble_average(gc, vals), ensemble_average(ca, vals)
        rows.append([name, fmt(lt), fmt(g), fmt(c)])
        res[name] = {"long_time": lt, "grand": g, "canonical": c}
    _write_rows(out.path("ensemble_dynamics.csv"), ["observable", "long_time_average", "grand", "canonical"], rows)
    return {"energy": e0, "n_bar": n_bar, "observables": res}


def task_ethfit(cfg: RunConfig, out: Outputs) -> dict:
    from .analysis import fit_bivariate_cubic, fit_energy_cubic

    spec, p = cfg.spec, cfg.params
    eigsys = get_eigensystem(cfg, out)
    basis = eigsys.basis
    E = eigsys.energies
    N = eigen_expectation(eigsys, build_quasiparticle_counter(spec, basis))
    O = eigen_expectation(eigsys, build_local_observable(spec, p["observable"], basis))
    win = p["energy_window"]
    two = fit_bivariate_cubic(E, N, O, win)
    one = fit_energy_cubic(E, O, win)
    flag = np.zeros(eigsys.dim, dtype=bool)
    flag[_scars(cfg, eigsys, overlaps(eigsys, scar_initial_state(basis)))] = True
    p2, p1 = two.predict(E, N), one.predict(E, None)
    rows = ([i, fmt(E[i]), fmt(N[i]), fmt(O[i]), fmt(p2[i]), fmt(p1[i]), int(flag[i])] for i in range(eigsys.dim))
    _write_rows(out.path("ethfit.csv"), ["index", "energy", "n_expect", "value", "fit_energy_n", "fit_energy", "scar_flag"], rows)
    fig = Figure(f"{observable_name(p['observable'])} against energy", "energy", "<O>_i")
    fig.scatter(E, O, color="#7f7f7f", radius=1.5, label="eigenstates")
    fig.scatter(E[flag], O[flag], color="#d62728", radius=3, label="tagged")
    order = np.argsort(E)
    fig.line(E[order], p1[order], color="#000000", dashed=True, label="cubic in E")
    fig.save(out.path("ethfit.svg"))
    return {
        "rms_energy_n": two.rms,
        "rms_energy": one.rms,
        "coefficients": [float(x) for x in two.coefficients],
        "scar_residual_energy_n": [float(x) for x in two.residuals[flag]],
        "scar_residual_energy": [float(x) for x in one.residuals[flag]],
    }


RUNNERS = {
    "basis": task_basis,
    "spectrum": task_spectrum,
    "evolve": task_evolve,
    "decay": task_decay,
    "cscan": task_cscan,
    "leakage": task_leakage,
    "ensemble": task_ensemble,
    "ethfit": task_ethfit,
}


def run_task(cfg: RunConfig) -> list[Path]:
    """Run one task; on failure remove whatever it had written."""
    if cfg.task in STOCHASTIC and STOCHASTIC[cfg.task](cfg.params) and cfg.params["seed"] is None:
        raise ValidationError(f"seed: required for stochastic task {cfg.task} (pass --seed or set 'seed')")
    out = Outputs(cfg.output)
    start = time.perf_counter()
    try:
        summary = RUNNERS[cfg.task](cfg, out)
        meta = {
            "task": cfg.task,
            "spec": cfg.spec.to_dict(),
            "spec_hash": cfg.spec.spec_hash(),
            "code_version": _code_version(),
            "params": {k: v for k, v in cfg.params.items() if k != "cache_dir"},
            "wall_time_s": time.perf_counter() - start,
            "result": summary,
            "files": sorted(f.name for f in out.files),
        }
        with open(out.path("run.json"), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
    except BaseException:
        out.cleanup()
        raise
    return list(out.files)


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Fraction):
        return str(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scareth", description="Constrained spin chains with engineered dissipation.")
    sub = parser.add_subparsers(dest="task", required=True, metavar="task")
    for name in TASKS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--output", help="output directory (default: config 'output' or .)")
        sp.add_argument("--threads", type=int, help="worker threads for trajectory sampling")
        sp.add_argument("--seed", type=int, help="base seed (unsigned 64-bit) for stochastic tasks")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        data = _load_json(args.config)
        if args.threads is not None:
            data["threads"] = args.threads
        if args.seed is not None:
            data["seed"] = args.seed
        cfg = config_from_dict(data, args.task, args.output, args.config)
        run_task(cfg)
    except ScarethError as exc:
        print(f"scareth {args.task}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
