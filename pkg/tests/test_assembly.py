import numpy as np
import pytest
import yaml

from phasorgrid.assembly import (
    build_model, check_physics, node_voltages, outputs, vector_field,
)
from phasorgrid.config import (
    ConfigError, bundled_case, config_hash, dump_config, load_config, parse_config,
)
from phasorgrid.fastrhs import compile_model

COUNTS = {  # (states, inputs, outputs)
    ("case1", "spc"): (90, 3, 9), ("case1", "qpc"): (54, 3, 9),
    ("case2", "spc"): (94, 4, 12), ("case2", "qpc"): (60, 4, 12),
}


def raw(case):
    return yaml.safe_load(bundled_case(case).read_text())


@pytest.mark.parametrize("key", list(COUNTS))
def test_initialized_equilibrium(key, operating_points):
    op = operating_points[key]
    assert op.residual < 1e-8
    assert np.abs(vector_field(op.model, op.x0, op.u0)).max() < 1e-8


@pytest.mark.parametrize("key", list(COUNTS))
def test_dimensions(key, operating_points):
    m = operating_points[key].model
    n, p, q = COUNTS[key]
    assert (m.n_states, m.n_inputs, len(m.output_channels)) == (n, p, q)
    assert len(m.state_labels()) == n and len(set(m.state_labels())) == n
    assert m.topology.n == 7


@pytest.mark.parametrize("case", ["case1", "case2"])
def test_frameworks_share_the_steady_state(case, operating_points):
    a, b = operating_points[case, "spc"], operating_points[case, "qpc"]
    va = node_voltages(a.model, a.x0)
    vb = node_voltages(b.model, b.x0)
    assert np.abs(va - vb).max() < 1e-6
    for d in b.model.devices:
        sa, sb = a.model.device_slice(d.name), b.model.device_slice(d.name)
        k = sb.stop - sb.start
        assert np.abs(a.x0[sa][:k] - b.x0[sb]).max() < 1e-6


@pytest.mark.parametrize("key", list(COUNTS))
def test_outputs_at_equilibrium(key, operating_points):
    op = operating_points[key]
    y = outputs(op.model, op.x0)
    assert np.allclose(y[0::3], 1.0)
    v = outputs(op.model, op.x0, channels=["bus7.vm"])
    assert 0.9 < v[0] < 1.1
    with pytest.raises(KeyError):
        outputs(op.model, op.x0, channels=["nope"])


@pytest.mark.parametrize("key", list(COUNTS))
def test_compiled_field_matches_reference(key, operating_points, rng):
    op = operating_points[key]
    f = compile_model(op.model)
    for scale in (0.0, 1e-3, 1e-2):
        x = op.x0 + scale * rng.standard_normal(op.x0.size)
        u = scale * rng.standard_normal(op.model.n_inputs)
        ref = vector_field(op.model, x, u)
        assert np.abs(f(x, u) - ref).max() <= 1e-9 * (1 + np.abs(ref).max())


def test_unknown_framework(case_cfg, power_flows):
    with pytest.raises(ValueError, match="framework"):
        build_model(case_cfg["case1"], power_flows["case1"], "emt")


@pytest.mark.parametrize("case", ["case1", "case2"])
def test_config_round_trip(case, case_cfg):
    cfg = case_cfg[case]
    again = parse_config(yaml.safe_load(dump_config(cfg)))
    assert again == cfg
    assert config_hash(again) == config_hash(cfg)


def test_missing_inertia_names_the_field():
    data = raw("case1")
    del data["generators"][0]["params"]["H"]
    with pytest.raises(ConfigError) as exc:
        parse_config(data)
    assert exc.value.path == "generators.0.params.H"


@pytest.mark.parametrize("mutate, path", [
    (lambda d: d["generators"][0]["params"].update(Xdp=5.0), "generators.0.params"),
    (lambda d: d["converters"][1].update(params={"C_c": 0.0}), "converters.1.params"),
])
def test_physics_violations_name_the_device(mutate, path):
    data = raw("case1")
    mutate(data)
    with pytest.raises(ConfigError) as exc:
        check_physics(parse_config(data))
    assert exc.value.path.startswith(path)


def test_disconnected_network_is_rejected():
    data = raw("case1")
    data["lines"] = [ln for ln in data["lines"] if ln["name"] != "6-7"]
    with pytest.raises(ConfigError) as exc:
        check_physics(parse_config(data))
    assert exc.value.path == "lines"


@pytest.mark.parametrize("mutate, msg", [
    (lambda d: d["converters"][0].update(name="G3"), "unique"),
    (lambda d: d["converters"][0].update(role="slack"), "slack"),
    (lambda d: d["loads"][0].update(bus="99"), "unknown bus"),
    (lambda d: d["converters"][0].update(hv_bus="42"), "not a network bus"),
    (lambda d: d.update(framework="emt"), "framework"),
])
def test_schema_errors(mutate, msg):
    data = raw("case1")
    mutate(data)
    with pytest.raises(ConfigError, match=msg):
        parse_config(data)


def test_bad_yaml(tmp_path):
    p = tmp_path / "x.cfg"
    p.write_text("- just\n- a list\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(p)
    p.write_text("a: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(p)
