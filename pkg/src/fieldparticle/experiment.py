"""Run orchestration: validate a config, execute checks, persist a provenance-stamped artifact directory."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acceptance import ACCEPTANCE, CheckResult, acceptance_config, run_acceptance, run_check
from .config import ExperimentConfig, code_version
from .dynamics import LatticeSystem, SystemState, evolve_leapfrog, evolve_spectral_duhamel
from .equilibrium import Ensemble, Verdict
from .kernels import build_kernel_table
from .random_fields import generic_density

__all__ = ["RunOutcome", "run", "run_evolve", "run_suite", "initial_state", "write_results"]


@dataclass
class RunOutcome:
    path: Path
    results: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)


def _stamp(cfg: ExperimentConfig) -> str:
    return f"config_hash={cfg.config_hash()} code_version={code_version()}"


def _write_csv(path: Path, columns, rows, stamp: str) -> None:
    with path.open("w") as fh:
        fh.write(f"# {stamp}\n")
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(repr(float(x)) for x in r) + "\n")


def write_results(out: Path, cfg: ExperimentConfig, results, extra: dict | None = None) -> None:
    """Config copy, per-check CSV curves, ``verdicts.json`` and ``summary.txt``.

    No wall-clock data is written, so a fixed config reproduces the files
    byte for byte.
    """
    out.mkdir(parents=True, exist_ok=True)
    stamp = _stamp(cfg)
    (out / "config.toml").write_text(f"# {stamp}\n" + cfg.to_toml())
    payload = cfg.provenance()
    if extra:
        payload.update(extra)
    checks = []
    for r in results:
        prefix = f"{r.number:02d}_" if r.number is not None else ""
        for stem, (cols, rows) in r.curves.items():
            _write_csv(out / f"{prefix}{stem}.csv", cols, rows, stamp)
        entry = {"check": r.name, "pass": bool(r.passed), "summary": r.summary,
                 "verdicts": [v.to_dict() if isinstance(v, Verdict) else v for v in r.verdicts]}
        if r.number is not None:
            entry["criterion"] = r.number
        checks.append(entry)
    payload["checks"] = checks
    payload["passed"] = all(r.passed for r in results)
    (out / "verdicts.json").write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")
    lines = [f"# {stamp}"] + [r.line(timing=False) for r in results]
    if not results:
        lines.append("config validated; no checks requested")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"not JSON serializable: {type(x)}")


def run(cfg: ExperimentConfig, out=None, workers: int = 1, checks=None, validate: bool = True,
        echo=None) -> RunOutcome:
    """Validate ``cfg`` and run ``checks`` (default ``cfg.checks``) into ``out`` (default ``cfg.output``)."""
    checks = list(cfg.checks if checks is None else checks)
    report = cfg.validate() if validate else {}
    path = Path(out if out is not None else cfg.output)
    results = []
    for name in checks:
        res = run_check(name, cfg, workers)
        results.append(res)
        if echo is not None:
            echo(res.line())
    write_results(path, cfg, results, {"validation": report})
    return RunOutcome(path, results)


def run_suite(out, workers: int = 1, numbers=None, base: ExperimentConfig | None = None, echo=None) -> RunOutcome:
    """The acceptance suite; each criterion runs on its own stated configuration."""
    path = Path(out)
    results = run_acceptance(numbers, workers, echo)
    base = base or ExperimentConfig()
    cfgs = {n: acceptance_config(n) for n in (sorted(ACCEPTANCE) if numbers is None else numbers)}
    extra = {"criteria_configs": {str(n): {"config_hash": c.config_hash(), "config": c.to_dict()}
                                  for n, c in cfgs.items()}}
    write_results(path, base, results, extra)
    return RunOutcome(path, results)


def initial_state(cfg: ExperimentConfig, member: int = 0, system: LatticeSystem | None = None) -> SystemState:
    """Member ``member`` of the configured initial law as a full state."""
    spec, grid = cfg.spec, cfg.mode_grid
    system = system or LatticeSystem(spec, grid)
    ms, en = cfg.measure, cfg.ensemble
    if ms.kind == "limit":
        raise ValueError("the limit law has no particle part to evolve; use measure.kind generic or gibbs")
    dens = generic_density(ms.A, ms.B, ms.ell, spec) if ms.kind == "generic" else None
    ens = Ensemble(system, ms.kind, max(member + 1, 2), en.base_seed, density=dens, particle_law=ms.particle_law,
                   particle_scale=ms.particle_scale, T=ms.T, T_minus=ms.T_minus, T_plus=ms.T_plus, a=ms.a)
    _, canon, selfv, q0, p0 = ens.draw([member])
    return SystemState(grid.expand_half(canon[0, 0], selfv[0, 0]), grid.expand_half(canon[0, 1], selfv[0, 1]),
                       q0[0], p0[0])


def run_evolve(cfg: ExperimentConfig, out=None, record_dt: float = 0.1) -> RunOutcome:
    """Evolve member 0 of the configured law and store the particle path and energies."""
    cfg.validate()
    spec, grid = cfg.spec, cfg.mode_grid
    system = LatticeSystem(spec, grid)
    it = cfg.integrator
    Y0 = initial_state(cfg, 0, system)
    every = max(1, int(round(record_dt / it.dt)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if it.method == "leapfrog":
            tr = evolve_leapfrog(Y0, spec, grid, it.dt, it.T, record_every=every, energies=True, system=system)
        else:
            tr = evolve_spectral_duhamel(Y0, spec, grid, it.dt, it.T, record_every=every, energies=True,
                                         system=system)
    E = np.array([e.H_total for e in tr.energies])
    drift = float(np.max(np.abs(E - E[0])) / abs(E[0]))
    finite = bool(all(s.is_finite() for s in tr.states))
    traj = tr.particle
    idx = np.arange(0, len(traj.q), every)
    rows = [(traj.times[i], *traj.q[i], *traj.p[i]) for i in idx]
    res = CheckResult("evolve", finite, f"{it.method} dt={it.dt} T={it.T}: relative energy drift {drift:.2e}",
                      [Verdict("finite_trajectory", float(finite), 1.0, 0.0, 0.0, finite,
                               {"energy_drift": drift, "method": it.method})],
                      {"trajectory": (["t", "q1", "q2", "q3", "p1", "p2", "p3"], rows),
                       "energy": (["t", "H", "H_A", "H_B", "H_int"],
                                  [(t, e.H_total, e.H_A, e.H_B, e.H_int) for t, e in zip(tr.record_times, tr.energies)])})
    path = Path(out if out is not None else cfg.output)
    write_results(path, cfg, [res])
    return RunOutcome(path, [res])


def write_kernel_table(cfg: ExperimentConfig, out) -> Path:
    """Continuum kernel table on the integrator grid as NDJSON, stamped with provenance."""
    spec, it = cfg.spec, cfg.integrator
    table = build_kernel_table(spec, it.dt, it.T)
    table.meta = dict(table.meta, config_hash=cfg.config_hash(), code_version=code_version())
    path = Path(out) / "kernel_table.ndjson"
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_ndjson(path)
    return path
