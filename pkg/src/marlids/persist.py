"""Model and dataset files on top of the versioned container format."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import container
from .agent import DqnAgent, EpsilonSchedule
from .config import RunConfig, from_dict
from .data import Dataset, ZScoreParams
from .ensemble import DECIDER, MarlEnsemble, agent_seed
from .errors import ContainerError
from .nn import AdamConfig, DenseNetwork

MODEL_KIND = "marl-ids-model"
DATASET_KIND = "flow-dataset"

_GROUPS = ("weights", "biases", "m_weights", "v_weights", "m_biases", "v_biases")


def _agent_meta(agent: DqnAgent) -> dict:
    net = agent.network
    s = agent.schedule
    return {
        "name": agent.name,
        "layer_dims": list(net.layer_dims),
        "activations": [a.value for a in net.activations],
        "adam_step": net.step,
        "epsilon": {"initial": s.initial, "decay_per_episode": s.decay_per_episode,
                    "floor": s.floor, "episodes_done": agent.episodes_done},
    }


def _agent_arrays(prefix: str, net: DenseNetwork) -> dict[str, np.ndarray]:
    out = {}
    for group in _GROUPS:
        for i, arr in enumerate(getattr(net, group)):
            out[f"{prefix}/{group}/{i}"] = arr
    return out


def _normalization_arrays(z: ZScoreParams | None) -> dict[str, np.ndarray]:
    if z is None:
        return {}
    return {"normalization/mean": np.asarray(z.mean, dtype=np.float64),
            "normalization/std": np.asarray(z.std, dtype=np.float64)}


def _read_normalization(meta: dict, arrays: dict) -> ZScoreParams | None:
    if "normalization/mean" not in arrays:
        return None
    return ZScoreParams(arrays["normalization/mean"], arrays["normalization/std"],
                        tuple(meta.get("feature_names") or ()))


def model_to_bytes(ens: MarlEnsemble) -> bytes:
    agents = list(ens.l1_agents.values()) + [ens.decider]
    meta = {
        "feature_dim": ens.feature_dim,
        "label_registry": ens.label_registry,
        "n_agents": ens.n_agents,
        "config": ens.config.to_dict(),
        "agents": [_agent_meta(a) for a in agents],
        "feature_names": list(ens.normalization.feature_names) if ens.normalization else None,
    }
    arrays = {}
    for i, agent in enumerate(agents):
        arrays.update(_agent_arrays(f"agent{i}", agent.network))
    arrays.update(_normalization_arrays(ens.normalization))
    return container.dumps(MODEL_KIND, meta, arrays)


def save_model(ens: MarlEnsemble, path) -> str:
    """Write the ensemble; returns the file's SHA-256 digest."""
    raw = model_to_bytes(ens)
    Path(path).write_bytes(raw)
    return container.file_digest(path)


def load_model(path) -> MarlEnsemble:
    meta, arrays = container.read(path, MODEL_KIND)
    try:
        cfg = from_dict(meta["config"])
        agents = []
        for i, am in enumerate(meta["agents"]):
            n_layers = len(am["layer_dims"]) - 1
            parts = {g: [arrays[f"agent{i}/{g}/{j}"] for j in range(n_layers)] for g in _GROUPS}
            net = DenseNetwork(tuple(am["layer_dims"]), activations=tuple(am["activations"]),
                               step=am["adam_step"], **parts)
            eps = am["epsilon"]
            agent = DqnAgent(
                net, am["layer_dims"][-1], gamma=cfg.gamma,
                epsilon=EpsilonSchedule(eps["initial"], eps["decay_per_episode"], eps["floor"]),
                buffer_capacity=cfg.replay_buffer_size, batch_size=cfg.minibatch_size,
                adam=AdamConfig(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                                cfg.adam_epsilon),
                seed=agent_seed(cfg.seed, am["name"]), name=am["name"])
            agent.episodes_done = eps["episodes_done"]
            agents.append(agent)
    except KeyError as exc:
        raise ContainerError(f"model container is missing {exc}") from None
    if not agents or agents[-1].name != DECIDER:
        raise ContainerError("model container has no decider")
    l1 = {a.name: a for a in agents[:-1]}
    return MarlEnsemble(l1, agents[-1], meta["label_registry"], meta["feature_dim"], cfg,
                        _read_normalization(meta, arrays))


def save_dataset(ds: Dataset, path, normalization: ZScoreParams | None = None,
                 summary: dict | None = None) -> str:
    meta = {
        "feature_names": list(ds.feature_names),
        "labels": [str(x) for x in ds.labels.tolist()],
        "provenance": list(ds.provenance),
        "summary": summary or {},
    }
    arrays = {"features": np.asarray(ds.features, dtype=np.float64)}
    arrays.update(_normalization_arrays(normalization))
    return container.write(path, DATASET_KIND, meta, arrays)


def load_dataset(path) -> tuple[Dataset, ZScoreParams | None, dict]:
    meta, arrays = container.read(path, DATASET_KIND)
    try:
        ds = Dataset(arrays["features"], np.array(meta["labels"], dtype=object),
                     tuple(meta["feature_names"]), tuple(meta["provenance"]))
    except KeyError as exc:
        raise ContainerError(f"dataset container is missing {exc}") from None
    return ds, _read_normalization(meta, arrays), meta.get("summary", {})
