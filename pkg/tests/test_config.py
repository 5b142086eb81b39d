import math

import numpy as np
import pytest
import yaml

from swingid.config import bundled_scenarios, config_from_dict, load_config
from swingid.errors import ConfigParseError, ConfigValidationError

IEEE39_INERTIA = [0.2228, 0.1607, 0.1873, 0.1517, 0.1379, 0.1846, 0.1401, 0.18289, 0.1830, 2.6526]


def minimal(**changes):
    data = {
        "schema_version": 1,
        "network": {"laplacian": [[1, -1], [-1, 1]]},
        "generators": [{"m": 1.0, "d": 0.5}, {"m": 2.0, "d": 0.5}],
        "sigma": 0.01,
        "ts": 0.1,
        "horizon": 50,
    }
    data.update(changes)
    return data


def test_bundled_list():
    assert bundled_scenarios() == ["ieee39_case1", "ieee39_case2", "ieee39_droop"]


def test_case1_values():
    c = load_config("ieee39_case1")
    np.testing.assert_array_equal(c.params.m, IEEE39_INERTIA)
    np.testing.assert_array_equal(c.params.d, [0.0531] * 10)
    np.testing.assert_array_equal(c.sigma, [0.01] * 10)
    assert c.ts == 1 / 60
    assert c.laplacian.node_labels == tuple(range(30, 40))


def test_case2_and_droop_values():
    c2 = load_config("ieee39_case2")
    np.testing.assert_array_equal(c2.params.m[2:5], [0.0019, 0.0015, 0.0014])
    assert c2.params.m[7] == 0.1289
    assert [k.value for k in c2.params.kind[2:5]] == ["vsm"] * 3
    cd = load_config("ieee39_droop")
    assert cd.params.droop_nodes == (3, 4, 5)
    assert cd.estimator.droop_set == (3, 4, 5)
    assert cd.estimator.method == "constrained"


def test_defaults_resolved():
    c = config_from_dict(minimal())
    assert c.seed == 0
    assert c.estimator.method == "unconstrained"
    assert c.estimator.d_max == math.inf
    np.testing.assert_array_equal(c.delta0, [0, 0])
    np.testing.assert_array_equal(c.omega0, [0, 0])
    r = c.resolved()
    assert r["estimator"] == {"method": "unconstrained", "droop_set": [], "d_max": None}
    assert r["generators"][0]["kind"] == "synchronous"


def test_droop_set_defaults_to_droop_generators():
    c = config_from_dict(minimal(generators=[{"m": 0, "d": 0.5}, {"m": 2.0, "d": 0.5}]))
    assert c.params.droop_nodes == (1,)
    assert c.estimator.droop_set == (1,)


def test_delta_deg_is_converted():
    c = config_from_dict(minimal(initial_state={"delta_deg": [90, -180]}))
    np.testing.assert_allclose(c.delta0, [math.pi / 2, -math.pi])


@pytest.mark.parametrize(
    "changes, field",
    [
        ({"ts": 0}, "ts"),
        ({"ts": -1}, "ts"),
        ({"horizon": 1}, "horizon"),
        ({"sigma": -0.1}, "sigma"),
        ({"schema_version": 2}, "schema_version"),
        ({"generators": [{"m": 0.5, "d": 0.5, "kind": "droop"}, {"m": 1.0, "d": 0.5}]}, "generators[0].m"),
        ({"generators": [{"m": 0, "d": 0.5, "kind": "vsm"}, {"m": 1.0, "d": 0.5}]}, "generators[0].m"),
        ({"generators": [{"m": 1.0, "d": 0}, {"m": 1.0, "d": 0.5}]}, "generators[0].d"),
        ({"generators": [{"m": 1.0, "d": 0.5}]}, "generators"),
        ({"sigma": [0.1, 0.1, 0.1]}, "sigma"),
        ({"initial_state": {"delta": [0.1]}}, "initial_state.delta"),
        ({"estimator": {"droop_set": [1]}}, "estimator.droop_set"),
        ({"estimator": {"method": "magic"}}, "estimator.method"),
        ({"estimator": {"d_max": 0}}, "estimator.d_max"),
        ({"network": {"laplacian": [[1, 1], [1, 1]]}}, "network"),
        ({"bogus": 1}, "<root>"),
    ],
)
def test_validation_errors(changes, field):
    with pytest.raises(ConfigValidationError) as info:
        config_from_dict(minimal(**changes))
    assert info.value.field == field
    assert field in str(info.value)


def test_missing_key_is_reported():
    data = minimal()
    del data["ts"]
    with pytest.raises(ConfigValidationError, match="ts"):
        config_from_dict(data)


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("schema_version: 1\nsigma: 0.1\nts: [1, 2\nhorizon: 3\n")
    with pytest.raises(ConfigParseError) as info:
        load_config(path)
    assert info.value.line is not None and info.value.line >= 3
    assert "line" in str(info.value)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "absent.yaml")


def test_network_file_relative_to_config(tmp_path):
    (tmp_path / "net.yaml").write_text(yaml.safe_dump({"node_labels": [4, 7], "laplacian": [[2, -2], [-2, 2]]}))
    cfg = minimal(network={"file": "net.yaml"})
    cfg["generators"][0]["bus"] = 4
    (tmp_path / "exp.yaml").write_text(yaml.safe_dump(cfg))
    c = load_config(tmp_path / "exp.yaml")
    assert c.laplacian.node_labels == (4, 7)
    assert c.source == str(tmp_path / "exp.yaml")


def test_bus_label_mismatch(tmp_path):
    (tmp_path / "net.yaml").write_text(yaml.safe_dump({"node_labels": [4, 7], "laplacian": [[2, -2], [-2, 2]]}))
    cfg = minimal(network={"file": "net.yaml"})
    cfg["generators"][1]["bus"] = 5
    (tmp_path / "exp.yaml").write_text(yaml.safe_dump(cfg))
    with pytest.raises(ConfigValidationError) as info:
        load_config(tmp_path / "exp.yaml")
    assert info.value.field == "generators[1].bus"


def test_inline_topology_is_reduced():
    topo = {"n_buses": 3, "edges": [[1, 2, 1.0], [2, 3, 1.0]], "generator_buses": [1, 3]}
    c = config_from_dict(minimal(network={"topology": topo}))
    np.testing.assert_allclose(c.laplacian.matrix, [[0.5, -0.5], [-0.5, 0.5]])
    assert c.laplacian.node_labels == (1, 3)


def test_bad_topology_is_validation_error():
    topo = {"n_buses": 3, "edges": [[1, 1, 1.0]], "generator_buses": [1, 3]}
    with pytest.raises(ConfigValidationError):
        config_from_dict(minimal(network={"topology": topo}))


def test_fingerprint():
    a = config_from_dict(minimal())
    b = config_from_dict(minimal())
    assert a.fingerprint == b.fingerprint
    assert a.replace(sigma=0.02).fingerprint != a.fingerprint
    assert a.replace(seed=3).fingerprint != a.fingerprint


def test_replace_broadcasts_sigma():
    c = config_from_dict(minimal()).replace(sigma=0.5)
    np.testing.assert_array_equal(c.sigma, [0.5, 0.5])
