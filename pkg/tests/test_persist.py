import numpy as np
import pytest

from marlids import data as dp
from marlids import ensemble as en
from marlids import persist
from marlids.config import RunConfig
from marlids.errors import ContainerError


@pytest.fixture
def trained(toy_flows):
    train, test = dp.split(toy_flows, 0.8, seed=0)
    z = dp.fit_zscore(train)
    train, test = dp.apply_zscore(train, z), dp.apply_zscore(test, z)
    cfg = RunConfig(minibatch_size=16, hidden_layers=(16, 16), episodes=2)
    ens = en.build_ensemble(["Flood", "Scan"], 4, cfg, z)
    en.train_all(ens, train)
    return ens, train, test


def test_model_round_trip(tmp_path, trained):
    ens, _, test = trained
    d1 = persist.save_model(ens, tmp_path / "a.mlds")
    loaded = persist.load_model(tmp_path / "a.mlds")
    d2 = persist.save_model(loaded, tmp_path / "b.mlds")
    assert d1 == d2
    assert (tmp_path / "a.mlds").read_bytes() == (tmp_path / "b.mlds").read_bytes()
    assert loaded.agent_digests() == ens.agent_digests()
    assert loaded.label_registry == ens.label_registry
    assert loaded.config == ens.config
    a, qa = en.predict_batch(ens, test.features)
    b, qb = en.predict_batch(loaded, test.features)
    assert a.tolist() == b.tolist() and np.array_equal(qa, qb)
    assert loaded.decider.epsilon == ens.decider.epsilon
    np.testing.assert_array_equal(loaded.normalization.std, ens.normalization.std)


def test_loaded_model_keeps_training_identically(tmp_path, trained):
    ens, train, _ = trained
    persist.save_model(ens, tmp_path / "m")
    loaded = persist.load_model(tmp_path / "m")
    # same Adam state and schedule; buffers restart empty on both sides
    for e in (ens, loaded):
        for agent in list(e.l1_agents.values()) + [e.decider]:
            agent.buffer = type(agent.buffer)(agent.buffer.capacity, agent.buffer.state_dim,
                                              seed=1, dtype=agent.buffer.dtype)
            agent.rng = np.random.default_rng(2)
    en.train_all(ens, train, episodes=1)
    en.train_all(loaded, train, episodes=1)
    assert ens.agent_digests() == loaded.agent_digests()


def test_corrupt_model(tmp_path, trained):
    path = tmp_path / "m"
    persist.save_model(trained[0], path)
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ContainerError):
        persist.load_model(path)


def test_dataset_round_trip(tmp_path, trained):
    _, train, _ = trained
    z = dp.fit_zscore(train)
    d1 = persist.save_dataset(train, tmp_path / "d", z, {"note": [1, 2]})
    ds, z2, summary = persist.load_dataset(tmp_path / "d")
    assert ds.equals(train) and ds.provenance == train.provenance
    assert summary == {"note": [1, 2]}
    np.testing.assert_array_equal(z2.mean, z.mean)
    assert persist.save_dataset(ds, tmp_path / "e", z2, summary) == d1


def test_kind_checked(tmp_path, trained):
    persist.save_dataset(trained[1], tmp_path / "d")
    with pytest.raises(ContainerError):
        persist.load_model(tmp_path / "d")
