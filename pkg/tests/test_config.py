import pytest

from fieldparticle.config import (CHECK_NAMES, ConfigError, ExperimentConfig, apply_override, load_config,
                                  preset_config)


def test_defaults():
    cfg = ExperimentConfig()
    assert (cfg.grid.L, cfg.grid.npts, cfg.integrator.dt) == (48.0, 48, 1e-2)
    assert cfg.ensemble.size == 2000 and cfg.ensemble.times == [5.0, 10.0, 15.0]
    assert cfg.mode_grid.npts == 48


def test_presets():
    wf, kgf = preset_config("wf"), preset_config("KGF")
    assert (wf.spec.g, wf.spec.sigma, wf.spec.m, wf.spec.omega0) == (0.5, 1.0, 0.0, 1.5)
    assert (kgf.spec.g, kgf.spec.sigma, kgf.spec.m, kgf.spec.omega0) == (1.0, 0.7, 1.0, 2.0)
    with pytest.raises(ConfigError):
        preset_config("dirac")


def test_overrides_are_typed_and_do_not_mutate():
    cfg = ExperimentConfig()
    new = apply_override(cfg, "coupling.g=0.8")
    assert new.coupling.g == 0.8 and cfg.coupling.g != 0.8
    assert apply_override(cfg, "ensemble.times=[1, 2]").ensemble.times == [1.0, 2.0]
    assert apply_override(cfg, "ensemble.times=3,4").ensemble.times == [3.0, 4.0]
    assert apply_override(cfg, "checks=mixing,gaussianity").checks == ["mixing", "gaussianity"]
    assert apply_override(cfg, "measure.kind=gibbs").measure.kind == "gibbs"
    assert apply_override(cfg, "integrator.dt=1").integrator.dt == 1.0
    for bad in ("coupling.g", "coupling.mass=1", "ensemble.size=2.5", "skip_stability=1", "nothing=1",
                "a.b.c=1", "grid.npts=true"):
        with pytest.raises(ConfigError):
            apply_override(cfg, bad)


def test_toml_round_trip_and_hash(tmp_path):
    cfg = load_config(overrides=["coupling.g=0.3", "checks=[\"mixing\"]", "output=\"x/y\""], preset="kgf")
    path = tmp_path / "c.toml"
    path.write_text(cfg.to_toml())
    back = load_config(path)
    assert back == cfg and back.config_hash() == cfg.config_hash()
    assert len(cfg.config_hash()) == 16
    assert apply_override(cfg, "coupling.g=0.31").config_hash() != cfg.config_hash()
    prov = cfg.provenance()
    assert set(prov) == {"config_hash", "code_version", "config"}


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    p = tmp_path / "bad.toml"
    p.write_text("[coupling]\nmass = 1.0\n")
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(p)
    p.write_text("colour = 1\n")
    with pytest.raises(ConfigError, match="top-level"):
        load_config(p)
    p.write_text("coupling = 3\n")
    with pytest.raises(ConfigError):
        load_config(p)
    p.write_text('preset = "wf"\n')
    assert load_config(p).spec.m == 0.0
    with pytest.raises(ConfigError, match="conflicts"):
        load_config(p, preset="kgf")


@pytest.mark.parametrize("override, match", [
    ("checks=[\"everything\"]", "unknown checks"),
    ("integrator.dt=0.0", "dt"),
    ("integrator.method=\"euler\"", "method"),
    ("integrator.T=0.015", "multiple"),
    ("measure.kind=\"micro\"", "measure.kind"),
    ("measure.T=-1.0", "temperatures"),
    ("ensemble.size=1", "size"),
    ("ensemble.base_seed=-3", "base_seed"),
    ("coupling.sigma=-1.0", "coupling"),
    ("grid.npts=15", "coupling/grid"),
])
def test_validation_errors(override, match):
    cfg = apply_override(preset_config("kgf"), override)
    with pytest.raises(ConfigError, match=match):
        cfg.validate(stability=False)


def test_validation_gates_on_stability_and_cfl():
    strong = apply_override(preset_config("wf"), "coupling.g=2.0")
    with pytest.raises(ConfigError, match="stability"):
        strong.validate()
    strong.skip_stability = True
    strong.validate()
    leap = load_config(overrides=["integrator.method=\"leapfrog\"", "integrator.dt=0.5", "integrator.T=1.0"],
                       preset="kgf")
    with pytest.raises(ConfigError, match="CFL"):
        leap.validate(stability=False)
    report = preset_config("kgf").validate()
    assert report["stability"]["stable"] and report["omega_max"] > 0


def test_check_names_cover_every_acceptance_check():
    from fieldparticle.acceptance import ACCEPTANCE, CHECKS
    assert set(CHECKS) == set(CHECK_NAMES)
    assert {spec[1] for spec in ACCEPTANCE.values()} <= set(CHECK_NAMES)
