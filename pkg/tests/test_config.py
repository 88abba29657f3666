import pytest

from marlids.config import CONFIG_ENV, RunConfig, dump_config, from_dict, load_config
from marlids.errors import ConfigError


def test_defaults_follow_hyperparameter_table():
    c = RunConfig()
    assert (c.replay_buffer_size, c.minibatch_size) == (10_000_000, 1_000_000)
    assert c.hidden_layers == (128, 128)
    assert (c.learning_rate, c.gamma, c.epsilon_decay, c.episodes) == (0.01, 0.01, 0.01, 300)
    assert (c.k, c.l1_weight_agent_class, c.l1_weight_other) == (5.0, 2.0, 1.0)
    assert c.train_fraction == 0.8 and c.benign_target == 700_000


def test_yaml_round_trip(tmp_path):
    c = RunConfig(seed=7, hidden_layers=(16, 8), grouping={"A": "G", "BENIGN": "BENIGN"},
                  exclude_labels=("A",), k=3.0)
    p = tmp_path / "c.yaml"
    p.write_text(dump_config(c))
    assert load_config(p) == c


def test_env_fallback(tmp_path, monkeypatch):
    p = tmp_path / "c.yaml"
    p.write_text("run: {seed: 42}\n")
    monkeypatch.setenv(CONFIG_ENV, str(p))
    assert load_config().seed == 42
    monkeypatch.delenv(CONFIG_ENV)
    assert load_config() == RunConfig()


@pytest.mark.parametrize("data", [
    {"bogus": {}}, {"run": {"sede": 1}}, {"hyperparameters": {"gamma": 1.5}},
    {"reward": {"k": 1}}, {"reward": {"l1_weight_agent_class": 0.5}},
    {"data": {"train_fraction": 1.0}}, {"run": {"threads": 0}},
    {"hyperparameters": {"hidden_layers": [0]}}, {"run": {"dtype": "int8"}}])
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        from_dict(data)


def test_malformed_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("run: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(p)
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_reward_view():
    r = RunConfig(k=8, decider_beta=1.0).reward
    assert r.k == 8 and r.decider_beta == 1.0
