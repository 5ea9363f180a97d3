from pathlib import Path

import numpy as np
import pytest

from tdimaging.scenario import ScenarioError, load, loads

ROOT = Path(__file__).resolve().parents[1]
SMALL = (ROOT / "scenarios" / "small.yaml").read_text()


def test_shipped_scenarios_load():
    for name in ("default", "dielectric", "small"):
        sc = load(ROOT / "scenarios" / f"{name}.yaml")
        assert len(sc.sha256) == 64
        assert sc.scene.boundary_radius > 0


def test_lengths_are_in_wavelengths():
    sc = loads(SMALL)
    lam = sc.wavelength
    assert sc.scene.boundary_radius == pytest.approx(5.0 * lam)
    assert np.allclose(sc.scene.inclusion.center, np.array([0.1, 0.0, -0.1]) * lam)
    assert sc.grid.spacing == pytest.approx(0.125 * lam)
    # origin defaults to the inclusion centre
    assert np.allclose(sc.grid.points().mean(axis=0), sc.scene.inclusion.center)


def test_seed_override_and_hash():
    a = loads(SMALL)
    b = loads(SMALL, seed=99)
    assert a.seed == 7 and b.seed == 99
    assert a.sha256 == b.sha256
    assert loads(SMALL + "\n# comment\n").sha256 != a.sha256


def test_unknown_key_reports_line():
    with pytest.raises(ScenarioError, match=r"line 4: unknown field 'inclusion.colour'"):
        loads(SMALL.replace("rho: 0.0015", "rho: 0.0015, colour: red"))


@pytest.mark.parametrize("old,new,msg", [
    ("rho: 0.0015", "rho: 0.2", "exceeds 0.5"),
    ("n: 200", "n: -3", "line 6"),
    ("n: 200", "n: 2.5", "incidences.n"),
    ("spacing: 0.125", "spacing: 0", "grid.spacing"),
    ("center: [0.1, 0.0, -0.1]", "center: [0.1, 0.0]", "inclusion.center"),
    ("kind: permeability", "kind: conductivity", "kind"),
    ("radius: 5.0", "radius: 0.5", "boundary"),
])
def test_invalid_values_rejected(old, new, msg):
    with pytest.raises(ScenarioError, match=msg):
        loads(SMALL.replace(old, new))


def test_missing_block_and_bad_yaml():
    with pytest.raises(ScenarioError, match="missing required block"):
        loads("seed: 1\n")
    with pytest.raises(ScenarioError, match="YAML"):
        loads("::: [")


def test_missing_file():
    with pytest.raises(OSError):
        load(ROOT / "scenarios" / "nope.yaml")
