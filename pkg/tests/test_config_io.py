import json
import xml.etree.ElementTree as ET

import pytest

from hydrounit.config import bundled_defaults, config_hash, load_config, resolve, save_config
from hydrounit.errors import ConfigError, ParameterError
from hydrounit.io import PlotSpec, RunManifest, read_csv, render_svg, sha256_file, write_csv
from hydrounit.params import UnitParams
from hydrounit.transient import IntegrationConfig


def write(tmp_path, doc):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return path


def test_empty_config_gives_defaults(tmp_path):
    params, integ = load_config(write(tmp_path, {}))
    assert params.gen.x_d == 1.58
    assert params == UnitParams()
    assert integ == IntegrationConfig()


def test_invalid_value_names_key(tmp_path):
    with pytest.raises(ParameterError) as ei:
        load_config(write(tmp_path, {"gen": {"x_d": -1}}))
    assert ei.value.key == "gen.x_d"


@pytest.mark.parametrize(
    "doc, key",
    [
        ({"gov": {"sigmaa": 1}}, "gov.sigmaa"),
        ({"gov": {"sigma": "big"}}, "gov.sigma"),
        ({"whatever": 1}, "whatever"),
        ({"gamma": True}, "gamma"),
        ({"der": {"x_rd": "x"}}, "der.x_rd"),
    ],
)
def test_rejected_documents(tmp_path, doc, key):
    with pytest.raises(ParameterError) as ei:
        load_config(write(tmp_path, doc))
    assert ei.value.key == key


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_user_section_beats_calibration():
    doc = resolve({"gov": {"sigma": 2.0}})
    assert doc["gov"]["sigma"] == 2.0
    assert resolve({})["gov"]["sigma"] == bundled_defaults()["calibration"]["values"]["gov.sigma"]


def test_calibration_has_provenance():
    cal = bundled_defaults()["calibration"]
    assert set(cal["values"]) <= set(cal["provenance"])


def test_inconsistent_derived_strictness(tmp_path):
    path = write(tmp_path, {"der": {"x_rd": 1.9}})
    with pytest.raises(ParameterError):
        load_config(path)
    params, _ = load_config(path, strict=False)
    assert params.der.x_rd == 1.9


def test_save_load_roundtrip(tmp_path):
    params, integ = load_config(write(tmp_path, {"gamma": 0.9, "gov": {"T_c": 0.7}}))
    save_config(params, integ, tmp_path / "out.json")
    again, integ2 = load_config(tmp_path / "out.json")
    assert again == params and integ2 == integ
    assert config_hash(again, integ2) == config_hash(params, integ)


def test_hash_changes_with_values():
    a = config_hash(UnitParams(), IntegrationConfig())
    b = config_hash(UnitParams(gamma=0.9), IntegrationConfig())
    assert a != b


def test_csv_roundtrip(tmp_path):
    rows = [(0.1, 1, "x"), (1 / 3, 0, "y")]
    path = write_csv(tmp_path / "a.csv", "amplitude", ("beta", "n", "kind"), rows)
    head, cols, back = read_csv(path)
    assert head == "# hydrounit.amplitude/1"
    assert cols == ["beta", "n", "kind"]
    assert float(back[1][0]) == 1 / 3


def test_manifest_digests(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    f = tmp_path / "x.txt"
    f.write_text("hello")
    m = RunManifest(command=["hydrounit", "check"], config_hash="abc")
    m.add(f, tmp_path)
    doc = json.loads(m.write(tmp_path).read_text())
    assert doc["outputs"] == [{"path": "x.txt", "sha256": sha256_file(f)}]
    assert doc["timestamp"] == "1970-01-01T00:00:00Z"


@pytest.mark.parametrize(
    "spec, extra",
    [
        (PlotSpec("timeseries", ("t", "a", "b"), path="ts.svg"), None),
        (PlotSpec("curve", ("t", "a"), path="c.svg"), None),
        (PlotSpec("projection3", ("t", "a", "b"), path="p.svg"), None),
        (PlotSpec("sweep_band", ("t", "a"), path="s.svg"), {"stable": [True, False, True], "window": (0.5, 1.5)}),
    ],
)
def test_svg_well_formed(tmp_path, spec, extra):
    data = {"t": [0.0, 1.0, 2.0], "a": [1.0, float("nan"), 3.0], "b": [0.0, 0.5, 0.2]}
    path = render_svg(spec, data, tmp_path, extra)
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")


def test_plot_spec_validation():
    with pytest.raises(ValueError):
        PlotSpec("pie", ("a", "b")).validate(["a", "b"])
    with pytest.raises(ValueError):
        PlotSpec("curve", ("a", "z")).validate(["a", "b"])
    with pytest.raises(ValueError):
        PlotSpec("projection3", ("a", "b")).validate(["a", "b"])
