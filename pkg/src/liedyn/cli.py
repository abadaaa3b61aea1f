"""Command-line front door: scenario runner, verifier, and preset browser.

Verbs:
    liedyn run <config.toml | scenario-name>   write CSV/SVG artifacts
    liedyn verify                              run the property suite
    liedyn list-presets                        show everything nameable
    liedyn describe <name>                     details for one preset

Scenario configs are TOML.  A config may name a built-in scenario in
``[scenario] name = "..."`` and override any of its tables; the resolved
config is embedded in the run's ``manifest.json``.  The output root comes
from ``--output-root``, the ``LIEDYN_OUTPUT_ROOT`` environment variable, or
the working directory, in that order.

Exit codes: 0 all requested checks passed, 1 a check failed, 2 bad usage
or a config error.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import time
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Any, Callable

try:
    import tomllib
except ModuleNotFoundError:                      # Python <= 3.10
    import tomli as tomllib

import numpy as np

from . import dynamics as dyn
from . import howland as how
from . import quantum as qm
from . import sections as sec
from .algebra import (
    algebra_preset,
    check_gradients,
    list_algebras,
    verify_closure,
)
from .integrators import StepControl
from .invariant import (
    QUASIPERIODIC_FIELD,
    build_invariant,
    InvariantFunction,
    invariant_drift,
    spin_coefficients,
)

ENV_OUTPUT_ROOT = "LIEDYN_OUTPUT_ROOT"
VERSION = "0.1.0"

OMEGA_PRESETS = ("constant", "periodic", "resonant", "quasiperiodic")


class ConfigError(ValueError):
    """A scenario config failed to parse or validate."""


# ---------------------------------------------------------------------------
# built-in scenarios
# ---------------------------------------------------------------------------

def _octet(q0: float, p0: float, radius: float) -> list[list[float]]:
    return [[q0 + radius * math.cos(k * math.pi / 4),
             p0 + radius * math.sin(k * math.pi / 4)] for k in range(8)]


def _builtin_scenarios() -> dict[str, dict]:
    grid12 = {"q": [-1.5, 1.5, 12], "p": [-1.5, 1.5, 12]}
    few_ics = [[0.0, 1.0], [0.5, 0.5], [1.2, 0.0], [-1.0, 0.7]]
    return {
        "fig1a": {
            "scenario": {"name": "fig1a", "kind": "sections",
                         "title": "stroboscopic map, periodic drive, eps=0"},
            "model": {"preset": "quartic-periodic", "eps": 0.0},
            "run": {"t_span": [0.0, 600.0], "dt": 1e-3, "stride": 10},
            "section": {"strobe_omega": math.pi / 2,
                        "check_level_curves": True, "tol": 1e-6},
            "ics": {"grid": grid12},
        },
        "fig1b": {
            "scenario": {"name": "fig1b", "kind": "sections",
                         "title": "stroboscopic map, periodic drive, "
                                  "eps=0.01"},
            "model": {"preset": "quartic-periodic", "eps": 0.01},
            "run": {"t_span": [0.0, 600.0], "dt": 1e-3, "stride": 10},
            "section": {"strobe_omega": math.pi / 2,
                        "check_level_curves": False},
            "ics": {"grid": grid12},
        },
        "fig2a": {
            "scenario": {"name": "fig2a", "kind": "sections",
                         "title": "stroboscopic map, resonant drive, eps=0"},
            "model": {"preset": "quartic-resonant", "eps": 0.0},
            "run": {"t_span": [0.0, 600.0], "dt": 1e-3, "stride": 10},
            "section": {"strobe_omega": 1.0,
                        "check_level_curves": True, "tol": 1e-6},
            "ics": {"list": few_ics},
        },
        "fig2b": {
            "scenario": {"name": "fig2b", "kind": "sections",
                         "title": "stroboscopic map, resonant drive, "
                                  "eps=0.01"},
            "model": {"preset": "quartic-resonant", "eps": 0.01},
            "run": {"t_span": [0.0, 600.0], "dt": 1e-3, "stride": 10},
            "section": {"strobe_omega": 1.0, "check_level_curves": False},
            "ics": {"list": few_ics},
        },
        "fig3": {
            "scenario": {"name": "fig3", "kind": "orbits",
                         "title": "single long orbit vs eight short ones, "
                                  "quasiperiodic drive"},
            "model": {"preset": "quartic-quasiperiodic"},
            "run": {"dt": 1e-3, "stride": 10},
            "orbits": {"groups": [
                {"label": "long-eps0", "eps": 0.0,
                 "t_span": [0.0, 600.0], "ics": [[0.0, 1.0]]},
                {"label": "octet-eps0", "eps": 0.0,
                 "t_span": [0.0, 200.0], "ics": _octet(0.0, 1.0, 0.05)},
                {"label": "long-eps0.01", "eps": 0.01,
                 "t_span": [0.0, 600.0], "ics": [[0.0, 1.0]]},
                {"label": "octet-eps0.01", "eps": 0.01,
                 "t_span": [0.0, 200.0], "ics": _octet(0.0, 1.0, 0.05)},
            ]},
        },
        "fig4": {
            "scenario": {"name": "fig4", "kind": "separation",
                         "title": "sensitivity to initial conditions, "
                                  "quasiperiodic drive"},
            "model": {"preset": "quartic-quasiperiodic"},
            "run": {"t_span": [0.0, 200.0], "dt": 1e-3, "stride": 10},
            "separation": {"x0": [0.0, 1.0], "x1": [0.01, 1.01],
                           "eps_values": [0.0, 0.01],
                           "bounded_below": 3.0, "mixing_above": 5.0},
        },
        "lemma1-spin": {
            "scenario": {"name": "lemma1-spin",
                         "kind": "quantum-conservation",
                         "title": "operator-invariant expectation drift, "
                                  "two-tone field"},
            "quantum": {"spins": [0.5, 5.0], "field": "quasiperiodic",
                        "t_max": 100.0, "dt": 1e-3, "stride": 10,
                        "drift_budget": 1e-7, "seed": 7},
        },
        "classical-limit": {
            "scenario": {"name": "classical-limit", "kind": "classical-limit",
                         "title": "normalized spin expectations vs the "
                                  "classical two-level flow"},
            "quantum": {"spin": 20.0, "field": "quasiperiodic",
                        "ic": [0.2, 0.3], "t_max": 50.0, "dt": 1e-3,
                        "stride": 10, "deviation_budget": 0.05},
        },
    }


SCENARIOS = _builtin_scenarios()

_KNOWN_TABLES = {
    "sections": {"scenario", "model", "run", "section", "ics"},
    "orbits": {"scenario", "model", "run", "orbits"},
    "separation": {"scenario", "model", "run", "separation"},
    "quantum-conservation": {"scenario", "quantum"},
    "classical-limit": {"scenario", "quantum"},
}


# ---------------------------------------------------------------------------
# config loading and validation
# ---------------------------------------------------------------------------

def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(source: str) -> dict:
    """Resolve a config from a TOML file or a built-in scenario name."""
    path = Path(source)
    if path.exists():
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"{source}: {err}") from None
        name = raw.get("scenario", {}).get("name")
        if name in SCENARIOS:
            raw = _deep_merge(SCENARIOS[name], raw)
        return validate_config(raw, source)
    if source in SCENARIOS:
        return validate_config(copy.deepcopy(SCENARIOS[source]), source)
    raise ConfigError(
        f"{source!r} is neither a config file nor a known scenario; "
        f"scenarios: {', '.join(sorted(SCENARIOS))}")


def _require(cond: bool, where: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"[{where}]: {message}")


def _check_span(span, where: str) -> None:
    _require(isinstance(span, (list, tuple)) and len(span) == 2,
             where, "t_span must be [t0, t1]")
    _require(float(span[1]) > float(span[0]), where,
             "t_span must be increasing")


def _check_ics(ics, where: str) -> None:
    _require(isinstance(ics, list) and len(ics) > 0, where,
             "needs a nonempty list of [q, p] pairs")
    for ic in ics:
        _require(isinstance(ic, (list, tuple)) and len(ic) == 2, where,
                 f"bad initial condition {ic!r}")


def validate_config(cfg: dict, source: str = "<config>") -> dict:
    scen = cfg.get("scenario")
    _require(isinstance(scen, dict), "scenario", "missing [scenario] table")
    kind = scen.get("kind")
    _require(kind in _KNOWN_TABLES, "scenario",
             f"kind must be one of {sorted(_KNOWN_TABLES)}, got {kind!r}")
    unknown = set(cfg) - _KNOWN_TABLES[kind]
    _require(not unknown, "config",
             f"unknown tables for kind {kind!r}: {sorted(unknown)}")
    scen.setdefault("name", "custom")
    scen.setdefault("output_dir", scen["name"])
    scen.setdefault("title", scen["name"])

    if kind in ("sections", "orbits", "separation"):
        model = cfg.get("model", {})
        preset = model.get("preset")
        _require(preset in dyn.MODEL_PRESETS, "model",
                 f"preset must be one of {list(dyn.MODEL_PRESETS)}, "
                 f"got {preset!r}")
        _require(float(model.get("eps", 0.0)) >= 0.0, "model",
                 "eps must be >= 0")
        run = cfg.setdefault("run", {})
        run.setdefault("dt", 1e-3)
        run.setdefault("stride", 10)
        _require(float(run["dt"]) > 0, "run", "dt must be positive")
        _require(int(run["stride"]) >= 1, "run", "stride must be >= 1")

    if kind == "sections":
        _check_span(cfg["run"].get("t_span"), "run")
        section = cfg.setdefault("section", {})
        _require(float(section.get("strobe_omega", 0.0)) > 0.0, "section",
                 "strobe_omega must be positive")
        section.setdefault("check_level_curves", False)
        section.setdefault("tol", 1e-6)
        ics = cfg.get("ics", {})
        has_grid = "grid" in ics
        has_list = "list" in ics
        _require(has_grid != has_list, "ics",
                 "provide exactly one of 'grid' or 'list'")
        if has_grid:
            for axis in ("q", "p"):
                g = ics["grid"].get(axis)
                _require(isinstance(g, list) and len(g) == 3 and int(g[2]) >= 1,
                         "ics.grid", f"{axis} must be [lo, hi, n]")
        else:
            _check_ics(ics["list"], "ics.list")
    elif kind == "orbits":
        groups = cfg.get("orbits", {}).get("groups")
        _require(isinstance(groups, list) and groups, "orbits",
                 "needs a nonempty 'groups' list")
        for i, grp in enumerate(groups):
            where = f"orbits.groups[{i}]"
            _require("label" in grp, where, "missing label")
            _check_span(grp.get("t_span"), where)
            _check_ics(grp.get("ics"), where)
            _require(float(grp.get("eps", 0.0)) >= 0.0, where,
                     "eps must be >= 0")
    elif kind == "separation":
        _check_span(cfg["run"].get("t_span"), "run")
        sep = cfg.get("separation", {})
        for key in ("x0", "x1"):
            _require(isinstance(sep.get(key), (list, tuple))
                     and len(sep[key]) == 2, "separation",
                     f"{key} must be [q, p]")
        _require(isinstance(sep.get("eps_values"), list) and sep["eps_values"],
                 "separation", "eps_values must be a nonempty list")
        sep.setdefault("bounded_below", 3.0)
        sep.setdefault("mixing_above", 5.0)
    elif kind == "quantum-conservation":
        q = cfg.get("quantum", {})
        _require(isinstance(q.get("spins"), list) and q["spins"], "quantum",
                 "spins must be a nonempty list")
        _require(float(q.get("t_max", 0.0)) > 0, "quantum",
                 "t_max must be positive")
        q.setdefault("dt", 1e-3)
        q.setdefault("stride", 10)
        q.setdefault("drift_budget", 1e-7)
        q.setdefault("seed", 7)
        q.setdefault("field", "quasiperiodic")
    elif kind == "classical-limit":
        q = cfg.get("quantum", {})
        _require(float(q.get("spin", 0.0)) > 0, "quantum",
                 "spin must be positive")
        _require(isinstance(q.get("ic"), (list, tuple)) and len(q["ic"]) == 2,
                 "quantum", "ic must be [q, p]")
        _require(float(q.get("t_max", 0.0)) > 0, "quantum",
                 "t_max must be positive")
        q.setdefault("dt", 1e-3)
        q.setdefault("stride", 10)
        q.setdefault("deviation_budget", 0.05)
        q.setdefault("field", "quasiperiodic")
    return cfg


def _resolve_field(name):
    if name == "quasiperiodic":
        return QUASIPERIODIC_FIELD
    if isinstance(name, (list, tuple)) and len(name) == 3:
        return tuple(float(v) for v in name)
    raise ConfigError(f"[quantum]: unknown field {name!r}")


def _ic_list(cfg: dict) -> list[tuple[float, float]]:
    ics = cfg["ics"]
    if "list" in ics:
        return [(float(q), float(p)) for q, p in ics["list"]]
    gq, gp = ics["grid"]["q"], ics["grid"]["p"]
    qs = np.linspace(float(gq[0]), float(gq[1]), int(gq[2]))
    ps = np.linspace(float(gp[0]), float(gp[1]), int(gp[2]))
    return [(float(q), float(p)) for q in qs for p in ps]


# ---------------------------------------------------------------------------
# the scenario runner
# ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    budget: float
    detail: str = ""

    def row(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        return (f"{verdict:４4s}  {self.name:40s} measured {self.measured:11.4e}"
                f"  budget {self.budget:9.1e}  {self.detail}")


class _Workspace:
    """Collects files, checks, and task timings for one run."""

    def __init__(self, outdir: Path):
        self.outdir = outdir
        self.files: list[dict] = []
        self.checks: list[CheckResult] = []
        self.tasks: list[dict] = []

    def write_text(self, relname: str, producer: Callable) -> Path:
        path = self.outdir / relname
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            producer(fh)
        self.files.append({"file": relname,
                           "bytes": path.stat().st_size})
        return path

    def task(self, name: str, seconds: float, status: str = "ok") -> None:
        self.tasks.append({"name": name, "status": status,
                           "seconds": round(seconds, 3)})


def _steps_from(run_cfg: dict) -> StepControl:
    return StepControl(dt=float(run_cfg["dt"]), stride=int(run_cfg["stride"]))


def _run_sections(cfg: dict, ws: _Workspace) -> None:
    model = cfg["model"]
    spec = dyn.model_preset(model["preset"], eps=float(model.get("eps", 0.0)))
    steps = _steps_from(cfg["run"])
    t_span = tuple(float(t) for t in cfg["run"]["t_span"])
    section = cfg["section"]
    omega = float(section["strobe_omega"])
    check = bool(section["check_level_curves"])
    tol = float(section.get("tol", 1e-6))

    inv = None
    if check:
        t0 = time.perf_counter()
        path = build_invariant(spec.algebra, spec.h, t_span, steps=steps)
        inv = InvariantFunction(spec.algebra, path)
        ws.task("build-invariant", time.perf_counter() - t0)

    index_rows = []
    datasets = []
    worst = 0.0
    all_ok = True
    for i, ic in enumerate(_ic_list(cfg)):
        t0 = time.perf_counter()
        traj = dyn.integrate(spec, ic, t_span, steps=steps)
        orbit_id = f"orbit{i:03d}"
        pts = sec.stroboscopic(traj, omega, orbit_id=orbit_id)
        fname = f"sections_{orbit_id}.csv"
        ws.write_text(fname, pts.to_csv)
        datasets.append((orbit_id, pts.points))
        mean = dev = math.nan
        ok = True
        if inv is not None and len(pts):
            rep = sec.level_curve_constancy(pts, inv)
            mean, dev = rep.mean, rep.max_deviation
            ok = rep.within(tol)
            scale = dev / (1.0 + abs(mean))
            worst = max(worst, scale)
            all_ok = all_ok and ok
        status = "ok" if traj.complete else f"partial: {traj.diagnostic}"
        ws.task(f"integrate[{orbit_id}]", time.perf_counter() - t0, status)
        index_rows.append((orbit_id, ic[0], ic[1], len(pts), mean, dev,
                           fname))

    def write_index(fh):
        fh.write("orbit_id,q0,p0,n_points,I_mean,I_max_deviation,file\n")
        for row in index_rows:
            fh.write("%s,%.17g,%.17g,%d,%.17g,%.17g,%s\n" % row)

    ws.write_text("index.csv", write_index)
    title = cfg["scenario"]["title"]
    ws.write_text("map.svg",
                  lambda fh: sec.svg_scatter(datasets, fh, title=title))
    if check:
        ws.checks.append(CheckResult(
            name="level-curves", passed=all_ok, measured=worst, budget=tol,
            detail=f"worst relative spread over {len(index_rows)} orbits"))


def _run_orbits(cfg: dict, ws: _Workspace) -> None:
    preset = cfg["model"]["preset"]
    steps = _steps_from(cfg["run"])
    for grp in cfg["orbits"]["groups"]:
        label = grp["label"]
        spec = dyn.model_preset(preset, eps=float(grp.get("eps", 0.0)))
        t_span = tuple(float(t) for t in grp["t_span"])
        datasets = []
        for i, ic in enumerate(grp["ics"]):
            t0 = time.perf_counter()
            traj = dyn.integrate(spec, (float(ic[0]), float(ic[1])), t_span,
                                 steps=steps)
            name = f"orbit_{label}_{i}"
            ws.write_text(name + ".csv", traj.to_csv)
            datasets.append((name, traj.states[:, :2]))
            status = "ok" if traj.complete else f"partial: {traj.diagnostic}"
            ws.task(f"integrate[{name}]", time.perf_counter() - t0, status)
        ws.write_text(
            f"orbits_{label}.svg",
            lambda fh, d=datasets, lb=label: sec.svg_scatter(
                d, fh, title=f"{cfg['scenario']['title']} ({lb})"))


def _run_separation(cfg: dict, ws: _Workspace) -> None:
    preset = cfg["model"]["preset"]
    steps = _steps_from(cfg["run"])
    t_span = tuple(float(t) for t in cfg["run"]["t_span"])
    scfg = cfg["separation"]
    x0 = tuple(float(v) for v in scfg["x0"])
    x1 = tuple(float(v) for v in scfg["x1"])
    bounded_below = float(scfg["bounded_below"])
    mixing_above = float(scfg["mixing_above"])
    for eps in scfg["eps_values"]:
        eps = float(eps)
        t0 = time.perf_counter()
        spec = dyn.model_preset(preset, eps=eps)
        series = sec.separation(spec, x0, x1, t_span, steps=steps)
        tag = f"eps{eps:g}"

        def write_series(fh, s=series):
            fh.write("t,dq,distance\n")
            for t, dq, d in zip(s.times, s.dq, s.distance):
                fh.write(f"{t:.17g},{dq:.17g},{d:.17g}\n")

        ws.write_text(f"separation_{tag}.csv", write_series)
        ws.task(f"separation[{tag}]", time.perf_counter() - t0,
                "ok" if series.complete else f"partial: {series.note}")
        if eps == 0.0:
            ws.checks.append(CheckResult(
                name=f"separation-bounded[{tag}]",
                passed=series.max_distance < bounded_below,
                measured=series.max_distance, budget=bounded_below,
                detail="max distance must stay below the budget"))
        else:
            ws.checks.append(CheckResult(
                name=f"separation-mixing[{tag}]",
                passed=series.max_distance > mixing_above,
                measured=series.max_distance, budget=mixing_above,
                detail="max distance must exceed the budget"))


def _run_quantum_conservation(cfg: dict, ws: _Workspace) -> None:
    qcfg = cfg["quantum"]
    field = _resolve_field(qcfg["field"])
    t_max = float(qcfg["t_max"])
    steps = StepControl(dt=float(qcfg["dt"]), stride=int(qcfg["stride"]))
    budget = float(qcfg["drift_budget"])
    seed = int(qcfg["seed"])
    for spin in qcfg["spins"]:
        spin = float(spin)
        t0 = time.perf_counter()
        qalg = qm.spin_matrices(spin)
        rng = np.random.default_rng([seed, int(round(2 * spin))])
        psi0 = rng.normal(size=qalg.dim_rep) \
            + 1j * rng.normal(size=qalg.dim_rep)
        psi0 /= np.linalg.norm(psi0)
        states = qm.evolve(qalg, field, psi0, (0.0, t_max), steps=steps)
        inv = qm.quantum_invariant(qalg, field, (0.0, t_max), steps=steps)
        drift = qm.expectation_conservation(states, inv)
        norm_drift = float(np.abs(states.norms() - 1.0).max())
        tag = f"S={spin:g}"
        ws.write_text(f"expectations_{tag}.csv",
                      lambda fh, s=states, a=qalg, i=inv:
                      qm.expectation_csv(s, a, fh, inv=i))
        ws.task(f"evolve[{tag}]", time.perf_counter() - t0)
        ws.checks.append(CheckResult(
            name=f"expectation-drift[{tag}]", passed=drift < budget,
            measured=drift, budget=budget))
        ws.checks.append(CheckResult(
            name=f"unitarity[{tag}]", passed=norm_drift < 1e-10,
            measured=norm_drift, budget=1e-10))


def _run_classical_limit(cfg: dict, ws: _Workspace) -> None:
    qcfg = cfg["quantum"]
    field = _resolve_field(qcfg["field"])
    steps = StepControl(dt=float(qcfg["dt"]), stride=int(qcfg["stride"]))
    t0 = time.perf_counter()
    report = qm.classical_limit_check(
        float(qcfg["spin"]), field,
        (float(qcfg["ic"][0]), float(qcfg["ic"][1])),
        (0.0, float(qcfg["t_max"])), steps=steps)

    def write_report(fh):
        fh.write("t,sx,sy,sz,o1,o2,o3\n")
        for i, t in enumerate(report.times):
            row = (t, *report.quantum[i], *report.classical[i])
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    ws.write_text("classical_limit.csv", write_report)
    ws.task(f"classical-limit[S={report.spin:g}]", time.perf_counter() - t0)
    budget = float(qcfg["deviation_budget"])
    ws.checks.append(CheckResult(
        name=f"classical-limit[S={report.spin:g}]",
        passed=report.max_deviation < budget,
        measured=report.max_deviation, budget=budget,
        detail="max normalized expectation deviation"))


_RUNNERS = {
    "sections": _run_sections,
    "orbits": _run_orbits,
    "separation": _run_separation,
    "quantum-conservation": _run_quantum_conservation,
    "classical-limit": _run_classical_limit,
}


def run_config(cfg: dict, output_root: str | Path = ".") -> tuple[dict, int]:
    """Execute a validated config; returns (manifest, exit_code)."""
    outdir = Path(output_root) / cfg["scenario"]["output_dir"]
    outdir.mkdir(parents=True, exist_ok=True)
    ws = _Workspace(outdir)
    started = time.perf_counter()
    _RUNNERS[cfg["scenario"]["kind"]](cfg, ws)
    passed = all(c.passed for c in ws.checks) and all(
        t["status"] == "ok" for t in ws.tasks)
    manifest = {
        "tool": "liedyn",
        "version": VERSION,
        "scenario": cfg["scenario"]["name"],
        "passed": passed,
        "total_seconds": round(time.perf_counter() - started, 3),
        "config": cfg,
        "outputs": ws.files,
        "checks": [asdict(c) for c in ws.checks],
        "tasks": ws.tasks,
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest, (0 if passed else 1)


# ---------------------------------------------------------------------------
# the verification suite
# ---------------------------------------------------------------------------

def verify(step_scale: float = 1.0,
           gamma_tamper: tuple[str, int, int, int] | None = None
           ) -> list[CheckResult]:
    """Run the cross-module property suite at default tolerances.

    ``step_scale`` multiplies every integration step (used to demonstrate
    that loosened steps are caught); ``gamma_tamper`` flips the sign of one
    structure-constant entry of the named algebra before the closure check
    (used to demonstrate that a corrupted table is caught).
    """
    results: list[CheckResult] = []
    steps = StepControl(dt=1e-3 * step_scale)

    for name in ("quadratic6", "spin-classical"):
        alg = algebra_preset(name)
        override = None
        if gamma_tamper is not None and gamma_tamper[0] == name:
            override = alg.constants.gamma.copy()
            i, j, k = gamma_tamper[1:]
            override[i, j, k] = -override[i, j, k]
        rep = verify_closure(alg, n_samples=64, tol=1e-10,
                             gamma_override=override)
        results.append(CheckResult(
            name=f"closure[{name}]", passed=rep.passed,
            measured=rep.max_residual, budget=rep.tol,
            detail=f"worst pair {rep.worst_pair}"))
        worst = check_gradients(alg)
        results.append(CheckResult(
            name=f"gradients[{name}]", passed=worst < 1e-6,
            measured=worst, budget=1e-6))

    # classical conservation along the flow
    spec = dyn.model_preset("quartic-periodic")
    traj = dyn.integrate(spec, (0.0, 1.0), (0.0, 500.0), steps=steps)
    path = build_invariant(spec.algebra, spec.h, (0.0, 500.0), steps=steps)
    rep = invariant_drift(InvariantFunction(spec.algebra, path), traj)
    results.append(CheckResult(
        name="invariant-drift[quartic-periodic]",
        passed=rep.rel_drift < 1e-6, measured=rep.rel_drift, budget=1e-6,
        detail=f"t <= 500, max at t = {rep.t_at_max:g}"))

    tl = dyn.model_preset("two-level")
    traj = dyn.integrate(tl, (0.2, 0.3), (0.0, 200.0), steps=steps)
    path = build_invariant(tl.algebra, tl.h, (0.0, 200.0), steps=steps)
    rep = invariant_drift(InvariantFunction(tl.algebra, path), traj)
    results.append(CheckResult(
        name="invariant-drift[two-level]",
        passed=rep.rel_drift < 1e-6, measured=rep.rel_drift, budget=1e-6,
        detail=f"t <= 200, max at t = {rep.t_at_max:g}"))

    # extended-flow conservation and clock slaving
    ext = how.extend(spec)
    etraj = how.integrate_extended(ext, (0.0, 1.0), (0.0, 200.0), steps=steps)
    k_vals = ext.value_series(etraj.states)
    k_drift = float(np.abs(k_vals - k_vals[0]).max())
    results.append(CheckResult(
        name="extension-drift[quartic-periodic]", passed=k_drift < 1e-7,
        measured=k_drift, budget=1e-7, detail="t <= 200"))
    theta_err = float(np.abs(etraj.states[:, 2] - etraj.times).max())
    results.append(CheckResult(
        name="clock-slaving[quartic-periodic]", passed=theta_err < 1e-9,
        measured=theta_err, budget=1e-9))

    # involution and flow independence on a shorter window
    short = how.integrate_extended(ext, (0.0, 1.0), (0.0, 50.0), steps=steps)
    path = build_invariant(spec.algebra, spec.h, (0.0, 50.001), steps=steps)
    inv = InvariantFunction(spec.algebra, path)
    idx = np.linspace(0, len(short.times) - 1, 50).astype(int)
    resid = how.involution_residual(ext, inv, short.states[idx])
    results.append(CheckResult(
        name="involution[quartic-periodic]", passed=resid < 1e-8,
        measured=resid, budget=1e-8, detail="50 points along the flow"))
    rank_ok = True
    for i in idx[::10]:
        verdict = how.independence_check(ext, inv, short.states[i])
        rank_ok = rank_ok and verdict.independent
    results.append(CheckResult(
        name="independence[quartic-periodic]", passed=rank_ok,
        measured=2.0 if rank_ok else 1.0, budget=2.0,
        detail="velocity rank with clock certificate"))

    # quantum side: unitarity and expectation conservation
    qalg = qm.spin_matrices(0.5)
    psi0 = np.array([1.0, 0.0], dtype=complex)
    states = qm.evolve(qalg, None, psi0, (0.0, 100.0), steps=steps)
    norm_drift = float(np.abs(states.norms() - 1.0).max())
    results.append(CheckResult(
        name="unitarity[S=1/2]", passed=norm_drift < 1e-10,
        measured=norm_drift, budget=1e-10,
        detail=f"{states.n_steps} steps"))
    qinv = qm.quantum_invariant(qalg, None, (0.0, 100.0), steps=steps)
    drift = qm.expectation_conservation(states, qinv)
    results.append(CheckResult(
        name="expectation-drift[S=1/2]", passed=drift < 1e-7,
        measured=drift, budget=1e-7, detail="t <= 100, two-tone field"))
    return results


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------

def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    root = args.output_root or os.environ.get(ENV_OUTPUT_ROOT, ".")
    manifest, code = run_config(cfg, root)
    outdir = Path(root) / cfg["scenario"]["output_dir"]
    print(f"scenario {manifest['scenario']}: "
          f"{'pass' if manifest['passed'] else 'FAIL'} "
          f"({len(manifest['outputs'])} files in {outdir}, "
          f"{manifest['total_seconds']} s)")
    for check in manifest["checks"]:
        verdict = "pass" if check["passed"] else "FAIL"
        print(f"  {verdict}  {check['name']}: {check['measured']:.4e} "
              f"(budget {check['budget']:.1e})")
    return code


def _cmd_verify(args) -> int:
    results = verify()
    width = max(len(r.name) for r in results)
    for r in results:
        verdict = "pass" if r.passed else "FAIL"
        print(f"{verdict:4s}  {r.name:{width}s}  measured {r.measured:11.4e}"
              f"  budget {r.budget:9.1e}  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if args.json:
        payload = {"tool": "liedyn", "version": VERSION,
                   "passed": not failed,
                   "checks": [asdict(r) for r in results]}
        with open(args.json, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def _cmd_list_presets(_args) -> int:
    print("model presets:")
    for name in dyn.MODEL_PRESETS:
        print(f"  {name}")
    print("stiffness schedules (quartic family):")
    for name in OMEGA_PRESETS:
        print(f"  {name}")
    print("algebras:")
    for name in list_algebras():
        print(f"  {name}")
    print("scenarios:")
    for name in sorted(SCENARIOS):
        print(f"  {name}: {SCENARIOS[name]['scenario']['title']}")
    return 0


def _cmd_describe(args) -> int:
    name = args.name
    if name in SCENARIOS:
        print(json.dumps(SCENARIOS[name], indent=2))
        return 0
    if name in dyn.MODEL_PRESETS:
        spec = dyn.model_preset(name)
        print(f"model preset {name}:")
        print(f"  hamiltonian: {spec.label}")
        print(f"  algebra: {spec.algebra.name} (dim {spec.algebra.dim})")
        print(f"  coefficients: {spec.h.label}")
        print(f"  compiled kernel: {'yes' if spec.kernel_kind >= 0 else 'no'}")
        return 0
    if name in list_algebras():
        alg = algebra_preset(name)
        print(f"algebra {name}: dim {alg.dim}")
        print(f"  basis: {', '.join(ob.name for ob in alg.basis)}")
        (qlo, qhi), (plo, phi) = alg.sample_box
        print(f"  sample box: q in [{qlo:g}, {qhi:g}], "
              f"p in [{plo:g}, {phi:g}]")
        return 0
    print(f"unknown preset {name!r}; try 'liedyn list-presets'",
          file=sys.stderr)
    return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="liedyn",
        description="Invariants, sections, and spin checks for "
                    "algebra-spanned time-dependent Hamiltonians.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("config",
                       help="TOML config file or built-in scenario name")
    p_run.add_argument("--output-root", default=None,
                       help=f"output root (default: ${ENV_OUTPUT_ROOT} "
                            "or the working directory)")
    p_run.set_defaults(func=_cmd_run)

    p_verify = sub.add_parser("verify", help="run the property suite")
    p_verify.add_argument("--json", default=None,
                          help="also write the results to this JSON file")
    p_verify.set_defaults(func=_cmd_verify)

    p_list = sub.add_parser("list-presets", help="list nameable things")
    p_list.set_defaults(func=_cmd_list_presets)

    p_desc = sub.add_parser("describe", help="describe one preset")
    p_desc.add_argument("name")
    p_desc.set_defaults(func=_cmd_describe)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
