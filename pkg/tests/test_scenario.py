import textwrap
from dataclasses import replace

import pytest

from flexneedle import scenario as scen
from flexneedle.errors import ConfigurationError

MINIMAL = textwrap.dedent("""
    [needle]
    n_nodes = 21
    element_length_mm = 3.0
    young_modulus_gpa = 200.0
    outer_diameter_mm = 0.819

    [[tissue.layers]]
    depth_mm = 50.0
    mu_kpa = 2.0
    alpha = 8.74

    [geometry]
    guide_to_skin_mm = 20.0
    tip_to_skin_mm = 10.0

    [targets]
    depths_mm = [25.0]
    lateral_offsets_mm = [0.0]
    repetitions = 2
""")


def write(tmp_path, text):
    p = tmp_path / "scenario.toml"
    p.write_text(text)
    return p


def test_default_scenario_loads():
    s = scen.load_default_scenario()
    assert s.sim_config.n_nodes == 41
    assert s.sim_config.layers[0].mu == pytest.approx(1.82e3)
    assert s.sim_config.layers[1].mu == pytest.approx(3.63e3)
    assert s.sim_config.young_modulus == pytest.approx(200e9)
    assert s.sim_config.guide_x == pytest.approx(-41.0)
    assert len(s.targets()) == 15
    assert s.repetitions == 10
    assert s.perturbation.initial_lateral_offset == 0.5
    assert s.perturbation.mu_scale == 1.1


def test_targets_grid():
    s = scen.load_default_scenario()
    ts = s.targets()
    assert (25.0, -5.0) in ts and (45.0, 5.0) in ts
    assert all(0.0 < x <= 60.0 for x, _ in ts)


def test_minimal_file_parses(tmp_path):
    s = scen.parse_scenario(write(tmp_path, MINIMAL))
    assert s.sim_config.n_nodes == 21
    assert s.repetitions == 2
    assert s.sim_config.layers[0].mu == pytest.approx(2.0e3)


def test_missing_section_diagnostic(tmp_path):
    bad = MINIMAL.replace("[geometry]", "[geom]")
    with pytest.raises(ConfigurationError, match="geometry"):
        scen.parse_scenario(write(tmp_path, bad))


def test_missing_tissue_diagnostic(tmp_path):
    bad = MINIMAL.replace("[[tissue.layers]]", "[[tissue.other]]")
    with pytest.raises(ConfigurationError, match="tissue"):
        scen.parse_scenario(write(tmp_path, bad))


def test_negative_element_length_rejected(tmp_path):
    bad = MINIMAL.replace("element_length_mm = 3.0", "element_length_mm = -3.0")
    with pytest.raises(ConfigurationError):
        scen.parse_scenario(write(tmp_path, bad))


def test_invalid_toml_diagnostic(tmp_path):
    with pytest.raises(ConfigurationError, match="TOML"):
        scen.parse_scenario(write(tmp_path, "not = [valid"))


def test_target_outside_tissue_rejected(tmp_path):
    bad = MINIMAL.replace("depths_mm = [25.0]", "depths_mm = [80.0]")
    with pytest.raises(ConfigurationError):
        scen.parse_scenario(write(tmp_path, bad))


def test_scenario_validate_flip_mode():
    s = scen.load_default_scenario()
    bad = replace(s, tracking=replace(s.tracking, flip_mode="sometimes"))
    with pytest.raises(ConfigurationError):
        bad.validate()
