import numpy as np
import pytest

from kpp_lab.errors import ConfigError
from kpp_lab.model import validate_spec
from kpp_lab.scenarios import (BUILTIN, COUNTEREXAMPLE, dump_scenario, load_scenario,
                               load_scenario_file)


def test_counterexample_encoding():
    sc = BUILTIN[COUNTEREXAMPLE]
    np.testing.assert_array_equal(sc.spec.d, [1.0, 1.0])
    np.testing.assert_array_equal(sc.spec.coupling, [[1 - 1 / 5, 1 / 5], [1 / 5, 1 - 1 / 5]])
    np.testing.assert_array_equal(sc.spec.competition, [[0.1, 0.9], [0.9, 0.1]])


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_builtins_are_admissible(name):
    sc = BUILTIN[name]
    assert validate_spec(sc.spec, sc.grid) == []


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_file_roundtrip(tmp_path, name):
    sc = BUILTIN[name]
    p = tmp_path / "s.toml"
    p.write_text(dump_scenario(sc))
    back = load_scenario(str(p))
    assert back.grid == sc.grid and back.name == sc.name
    np.testing.assert_array_equal(back.spec.coupling, sc.spec.coupling)
    np.testing.assert_array_equal(back.spec.competition, sc.spec.competition)
    assert back.provenance.startswith("file:")


def test_two_dimensional_file(tmp_path):
    p = tmp_path / "sq.toml"
    p.write_text('n = 1\nd = [1.0]\nA = [[1.0]]\nC = [[1.0]]\n\n'
                 '[grid]\ndimension = 2\nextent = [1.0, 2.0]\ncells = [4, 8]\n')
    sc = load_scenario_file(p)
    assert sc.grid.cells == (4, 8) and sc.name == "sq"


@pytest.mark.parametrize("text", [
    "n = 2\nd = [1.0, 1.0]\nA = [[1.0, 0.1], [0.1, 1.0]]\n",
    "n = 3\nd = [1.0, 1.0]\nA = [[1.0, 0.1], [0.1, 1.0]]\nC = [[1, 1], [1, 1]]\n"
    "[grid]\ndimension = 1\nextent = [1.0]\ncells = [4]\n",
    "n = = 2",
])
def test_bad_files(tmp_path, text):
    p = tmp_path / "bad.toml"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_scenario(str(p))


def test_unknown_name():
    with pytest.raises(ConfigError):
        load_scenario("no-such-scenario")
