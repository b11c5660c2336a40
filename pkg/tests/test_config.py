import pytest

from uavnet.config import (ConfigError, config_from_dict, dump_config, load_config,
                           packaged_config)


def test_defaults_validate():
    cfg = config_from_dict({})
    assert cfg.uav.count == 3 and cfg.n_users == 30
    assert cfg.uav.array_rows * cfg.uav.array_cols == 16
    assert cfg.mdp.horizon == 200 and cfg.ppo.episodes == 1000


@pytest.mark.parametrize("data", [
    {"uav": {"colour": "red"}},
    {"nonsense": 1},
    {"scenario": {"obstacles": [{"kind": "cylinder", "radius": 5, "depth": 3}]}},
])
def test_unknown_keys_rejected(data):
    with pytest.raises(ConfigError, match="unknown keys"):
        config_from_dict(data)


@pytest.mark.parametrize("data, fragment", [
    ({"uav": {"count": 2}}, "total capacity"),
    ({"uav": {"capacity": 17}}, "exceeds antenna count"),
    ({"scenario": {"workspace": {"h_min": 200}}}, "h_min < h_max"),
    ({"scenario": {"obstacles": [{"kind": "cone"}]}}, "unknown kind"),
    ({"scenario": {"obstacles": [{"kind": "cylinder", "radius": 5, "height": 170}]}}, "height"),
    ({"satisfaction": {"shaping": 6}}, "exceed 7"),
    ({"mdp": {"beamforming": "mrt"}}, "beamforming"),
    ({"ppo": {"gamma": 1.5}}, "gamma"),
    ({"ppo": {"update_every_episodes": 500}}, "buffer capacity"),
])
def test_validation_errors(data, fragment):
    with pytest.raises(ConfigError, match=fragment):
        config_from_dict(data)


def test_missing_file_names_the_path(tmp_path):
    missing = tmp_path / "nope.yaml"
    with pytest.raises(ConfigError, match="nope.yaml"):
        load_config(missing)


def test_invalid_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("uav: [1, 2\n")
    with pytest.raises(ConfigError, match="invalid YAML"):
        load_config(p)


def test_dump_load_round_trip(tmp_path):
    cfg = config_from_dict({"uav": {"count": 4}, "ppo": {"gamma": 0.9}})
    dump_config(cfg, tmp_path / "c.yaml")
    back = load_config(tmp_path / "c.yaml")
    assert back == cfg and back.digest() == cfg.digest()


@pytest.mark.parametrize("name", ["default", "smoke"])
def test_packaged_configs_load(name):
    cfg = load_config(packaged_config(name))
    assert cfg.ppo.episodes >= 1
