"""Experiment configuration: TOML loading, dotted overrides, validation, provenance."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli

from .spectral_core import CouplingSpec, ModeGrid

__all__ = [
    "CouplingBlock",
    "GridBlock",
    "IntegratorBlock",
    "MeasureBlock",
    "EnsembleBlock",
    "ExperimentConfig",
    "ConfigError",
    "PRESETS",
    "CHECK_NAMES",
    "preset_config",
    "load_config",
    "apply_override",
    "code_version",
]

CHECK_NAMES = (
    "kernel_identities",
    "laplace_consistency",
    "resolvent_decay",
    "stability_gate",
    "conservation",
    "dual_integrator",
    "fluctuation_dissipation",
    "covariance_convergence",
    "gibbs_invariance",
    "mixing",
    "two_temperature",
    "gaussianity",
)


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def code_version() -> str:
    from importlib.metadata import PackageNotFoundError, version
    try:
        return version("artifact")
    except PackageNotFoundError:  # running from a source tree
        return "0+unknown"


@dataclass
class CouplingBlock:
    shape: str = "gaussian"
    g: float = 0.5
    sigma: float = 1.0
    m: float = 0.0
    omega0: float = 1.5

    def spec(self) -> CouplingSpec:
        return CouplingSpec(self.g, self.sigma, self.m, self.omega0, self.shape)


@dataclass
class GridBlock:
    L: float = 48.0
    npts: int = 48

    def grid(self) -> ModeGrid:
        return ModeGrid(self.L, self.npts)


@dataclass
class IntegratorBlock:
    dt: float = 1e-2
    T: float = 100.0
    method: str = "duhamel"


@dataclass
class MeasureBlock:
    """Initial law.  ``kind`` is ``generic``, ``gibbs``, ``two_temperature`` or ``limit``."""

    kind: str = "generic"
    T: float = 1.0
    T_minus: float = 1.0
    T_plus: float = 2.0
    a: float = 1.0
    A: float = 1.0
    B: float = 1.0
    ell: float = 0.5
    particle_law: str = "uniform"
    particle_scale: float = 1.0


@dataclass
class EnsembleBlock:
    size: int = 2000
    base_seed: int = 0
    times: list = field(default_factory=lambda: [5.0, 10.0, 15.0])
    lags: list = field(default_factory=lambda: [0.0, 1.0, 2.0, 5.0, 10.0, 20.0])
    window: float = 1.0
    chunk: int = 250


_BLOCKS = {"coupling": CouplingBlock, "grid": GridBlock, "integrator": IntegratorBlock,
           "measure": MeasureBlock, "ensemble": EnsembleBlock}


@dataclass
class ExperimentConfig:
    coupling: CouplingBlock = field(default_factory=CouplingBlock)
    grid: GridBlock = field(default_factory=GridBlock)
    integrator: IntegratorBlock = field(default_factory=IntegratorBlock)
    measure: MeasureBlock = field(default_factory=MeasureBlock)
    ensemble: EnsembleBlock = field(default_factory=EnsembleBlock)
    checks: list = field(default_factory=list)
    output: str = "runs/default"
    skip_stability: bool = False

    # -- conversions ---------------------------------------------------------
    @property
    def spec(self) -> CouplingSpec:
        return self.coupling.spec()

    @property
    def mode_grid(self) -> ModeGrid:
        return self.grid.grid()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        preset = data.pop("preset", None)
        cfg = preset_config(preset) if preset else cls()
        for key, value in data.items():
            if key in _BLOCKS:
                if not isinstance(value, dict):
                    raise ConfigError(f"[{key}] must be a table")
                block = getattr(cfg, key)
                names = {f.name for f in fields(block)}
                for k, v in value.items():
                    if k not in names:
                        raise ConfigError(f"unknown key {key}.{k}; expected one of {sorted(names)}")
                    setattr(block, k, _coerce(getattr(block, k), v, f"{key}.{k}"))
            elif key in ("checks", "output", "skip_stability"):
                setattr(cfg, key, _coerce(getattr(cfg, key), value, key))
            else:
                raise ConfigError(f"unknown top-level key {key!r}")
        return cfg

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    def provenance(self) -> dict:
        return {"config_hash": self.config_hash(), "code_version": code_version(), "config": self.to_dict()}

    def to_toml(self) -> str:
        """Resolved configuration as TOML text (reloads to an equal config)."""
        lines = [f"checks = {_toml_value(self.checks)}", f"output = {_toml_value(self.output)}",
                 f"skip_stability = {_toml_value(self.skip_stability)}"]
        for name in _BLOCKS:
            lines.append(f"\n[{name}]")
            for k, v in asdict(getattr(self, name)).items():
                lines.append(f"{k} = {_toml_value(v)}")
        return "\n".join(lines) + "\n"

    # -- validation ----------------------------------------------------------
    def validate(self, stability: bool | None = None) -> dict:
        """Fail fast on inconsistent settings; returns a small validation report.

        Checks the block values, the PSD property of the initial spectral
        density, the leapfrog CFL bound, and (unless ``skip_stability`` or
        ``stability=False``) the imaginary-axis stability scan.
        """
        from .kernels import stability_scan
        from .dynamics import LatticeSystem

        try:
            spec = self.spec
            grid = self.mode_grid
        except ValueError as exc:
            raise ConfigError(f"coupling/grid: {exc}") from exc
        bad = [c for c in self.checks if c not in CHECK_NAMES]
        if bad:
            raise ConfigError(f"unknown checks {bad}; expected names from {list(CHECK_NAMES)}")
        it = self.integrator
        if it.dt <= 0:
            raise ConfigError("integrator.dt must be positive")
        if it.method not in ("duhamel", "leapfrog"):
            raise ConfigError("integrator.method must be 'duhamel' or 'leapfrog'")
        if abs(round(it.T / it.dt) * it.dt - it.T) > 1e-9 * max(1.0, abs(it.T)):
            raise ConfigError("integrator.T must be an integer multiple of integrator.dt")
        ms = self.measure
        if ms.kind not in ("generic", "gibbs", "two_temperature", "limit"):
            raise ConfigError(f"unknown measure.kind {ms.kind!r}")
        if min(ms.T, ms.T_minus, ms.T_plus) < 0:
            raise ConfigError("temperatures must be nonnegative")
        en = self.ensemble
        if en.size < 2 or en.chunk < 1:
            raise ConfigError("ensemble.size must be at least 2 and ensemble.chunk positive")
        if not 0 <= en.base_seed < 2 ** 64:
            raise ConfigError("ensemble.base_seed must be an unsigned 64-bit integer")
        report = {}
        try:
            self.initial_density().check_psd(grid)
        except ValueError as exc:
            raise ConfigError(f"initial density: {exc}") from exc
        system = LatticeSystem(spec, grid)
        report["omega_max"] = float(system.omega_max)
        if it.method == "leapfrog" and not it.dt < 2.0 / system.omega_max:
            raise ConfigError(f"integrator.dt={it.dt} violates the leapfrog CFL bound "
                              f"2/omega_max = {2.0 / system.omega_max:.4g}; lower dt")
        if stability is None:
            stability = not self.skip_stability
        if stability:
            rep = stability_scan(spec, n_scan=200)
            report["stability"] = rep.to_dict()
            if not rep.stable:
                raise ConfigError(f"stability scan failed (r1prime_ok={rep.r1prime_ok}, margin={rep.margin:.3g}); "
                                  "reduce coupling.g or raise coupling.omega0, or set skip_stability = true")
        return report

    def initial_density(self):
        from .random_fields import generic_density, gibbs_field_density, two_temperature_density
        ms = self.measure
        spec = self.spec
        if ms.kind == "generic":
            return generic_density(ms.A, ms.B, ms.ell, spec)
        if ms.kind == "two_temperature":
            return two_temperature_density(ms.T_minus, ms.T_plus, ms.a, spec)
        # gibbs and limit laws are both built on a one-temperature field
        return gibbs_field_density(ms.T, spec) if ms.kind == "gibbs" else generic_density(ms.A, ms.B, ms.ell, spec)


PRESETS = {
    "wf": dict(coupling=dict(g=0.5, sigma=1.0, m=0.0, omega0=1.5)),
    "kgf": dict(coupling=dict(g=1.0, sigma=0.7, m=1.0, omega0=2.0)),
}


def preset_config(name: str | None) -> ExperimentConfig:
    """Default configuration for the named field preset (``wf`` or ``kgf``)."""
    cfg = ExperimentConfig()
    if name is None:
        return cfg
    key = name.lower()
    if key not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    for k, v in PRESETS[key]["coupling"].items():
        setattr(cfg.coupling, k, v)
    return cfg


def load_config(path=None, overrides=(), preset: str | None = None) -> ExperimentConfig:
    """Read a TOML file (optional), then apply ``KEY=VAL`` overrides in order."""
    data = {}
    if path is not None:
        try:
            data = tomli.loads(Path(path).read_text())
        except (OSError, tomli.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if preset is not None:
        if "preset" in data and data["preset"] != preset:
            raise ConfigError(f"preset {preset!r} conflicts with the file's preset {data['preset']!r}")
        data["preset"] = preset
    cfg = ExperimentConfig.from_dict(data)
    for ov in overrides:
        cfg = apply_override(cfg, ov)
    return cfg


def apply_override(cfg: ExperimentConfig, text: str) -> ExperimentConfig:
    """Apply a dotted ``KEY=VAL`` override; ``VAL`` is parsed as a TOML value, else taken as a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form KEY=VAL")
    key, raw = (s.strip() for s in text.split("=", 1))
    try:
        value = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        value = raw
    cfg = replace(cfg, **{n: (replace(getattr(cfg, n)) if is_dataclass(getattr(cfg, n)) else getattr(cfg, n))
                          for n in ("coupling", "grid", "integrator", "measure", "ensemble")})
    parts = key.split(".")
    if len(parts) == 1:
        if parts[0] not in ("checks", "output", "skip_stability"):
            raise ConfigError(f"unknown override key {key!r}")
        setattr(cfg, parts[0], _coerce(getattr(cfg, parts[0]), value, key))
        return cfg
    if len(parts) != 2 or parts[0] not in _BLOCKS:
        raise ConfigError(f"unknown override key {key!r}")
    block = getattr(cfg, parts[0])
    if parts[1] not in {f.name for f in fields(block)}:
        raise ConfigError(f"unknown override key {key!r}")
    setattr(block, parts[1], _coerce(getattr(block, parts[1]), value, key))
    return cfg


def _coerce(current, value, key):
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} expects true/false, got {value!r}")
        return value
    if isinstance(current, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} expects an integer, got {value!r}")
        return value
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} expects a number, got {value!r}")
        return float(value)
    if isinstance(current, list):
        if isinstance(value, str):
            value = [v for v in (s.strip() for s in value.split(",")) if v]
        if not isinstance(value, list):
            raise ConfigError(f"{key} expects a list, got {value!r}")
        if key == "checks":
            return [str(v) for v in value]
        try:
            return [float(v) for v in value]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key} expects a list of numbers, got {value!r}") from exc
    if isinstance(current, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key} expects a string, got {value!r}")
        return value
    raise ConfigError(f"cannot set {key}")


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {v!r}")
