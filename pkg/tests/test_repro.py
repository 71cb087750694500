import json
import os
import stat
from pathlib import Path

import pytest

from slicewave.scenario import bundled_scenarios, load_scenario

REPRO = Path(__file__).resolve().parents[1] / "repro"


@pytest.mark.parametrize("name", bundled_scenarios())
def test_repro_copies_match_bundled(name):
    copy = REPRO / "scenarios" / f"{name}.json"
    assert load_scenario(copy) == load_scenario(name)
    assert json.loads(copy.read_text())["name"] == name


@pytest.mark.parametrize("k", range(1, 10))
def test_scripts_present(k):
    p = REPRO / f"criterion_{k}.sh"
    assert p.exists()
    assert p.stat().st_mode & stat.S_IXUSR
    assert f"criterion_{k}" in p.read_text() or "test_properties" in p.read_text()


def test_generator_reproduces_files(tmp_path, monkeypatch):
    import importlib.util
    spec = importlib.util.spec_from_file_location("make_scenarios", REPRO / "make_scenarios.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    for build in (mod.single_mvno, mod.multi_mvno, mod.toy_pair, mod.toy_triple):
        data = build()
        shipped = json.loads((REPRO / "scenarios" / f"{data['name']}.json").read_text())
        assert json.loads(json.dumps(data)) == shipped
    assert os.path.isdir(mod.OUT)
