"""Two-level ensemble: one Q-learner per attack class plus a decider.

Each first-level (L1) agent sees the raw flow features and chooses among
{its attack, another attack, normal}.  After every episode the greedy
Q-values of all L1 agents are concatenated per record, in registry order, to
form the decider's state; the decider picks one of the attack labels or
benign.  Action ``i`` of the decider maps to ``label_registry[i]``; benign is
always the last slot.
"""
from __future__ import annotations

import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from . import data as dp
from .agent import DqnAgent, EpsilonSchedule, make_agent, network_digest
from .config import RunConfig
from .data import Dataset, ZScoreParams
from .errors import ValidationError
from .nn import AdamConfig, DenseNetwork, _forward_layers, init_network
from .rewards import L1Category, decider_sample_weights, l1_reward_table

log = logging.getLogger(__name__)

DECIDER = "__decider__"
_ADAPT_STREAM = 1
_PREDICT_CHUNK = 65536


@dataclass
class EpisodeStats:
    episode: int
    agent: str
    mean_loss: float
    mean_reward: float
    epsilon: float
    train_accuracy: float

    def as_dict(self) -> dict:
        return asdict(self)


def agent_seed(master_seed: int, name: str, stream: int = 0) -> np.random.SeedSequence:
    """Per-agent seed that does not depend on how many other agents exist."""
    return np.random.SeedSequence(entropy=int(master_seed),
                                  spawn_key=(zlib.crc32(name.encode()), stream))


def _agent_kwargs(cfg: RunConfig) -> dict:
    return dict(gamma=cfg.gamma, epsilon=EpsilonSchedule(1.0, cfg.epsilon_decay, 0.0),
                buffer_capacity=cfg.replay_buffer_size, batch_size=cfg.minibatch_size,
                adam=AdamConfig(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                                cfg.adam_epsilon))


class MarlEnsemble:
    def __init__(self, l1_agents: dict[str, DqnAgent], decider: DqnAgent,
                 label_registry: Sequence[str], feature_dim: int, config: RunConfig,
                 normalization: ZScoreParams | None = None):
        self.l1_agents = dict(l1_agents)
        self.decider = decider
        self.label_registry = list(label_registry)
        self.feature_dim = int(feature_dim)
        self.config = config
        self.normalization = normalization
        self._check()

    def _check(self):
        attacks = self.label_registry[:-1]
        if list(self.l1_agents) != attacks:
            raise ValidationError("L1 agents must match the registry's attack labels, in order")
        if self.label_registry[-1] != self.config.benign_label:
            raise ValidationError("the benign label must be last in the registry")
        for name, agent in self.l1_agents.items():
            if agent.network.input_dim != self.feature_dim or agent.action_arity != 3:
                raise ValidationError(f"agent {name!r} has the wrong shape")
        n = len(attacks)
        if self.decider.network.input_dim != 3 * n or self.decider.action_arity != n + 1:
            raise ValidationError(
                f"decider must map {3 * n} inputs to {n + 1} actions, "
                f"got {self.decider.network.input_dim} -> {self.decider.action_arity}")

    @property
    def attack_labels(self) -> list[str]:
        return self.label_registry[:-1]

    @property
    def benign_label(self) -> str:
        return self.label_registry[-1]

    @property
    def n_agents(self) -> int:
        return len(self.l1_agents)

    def agent_digests(self) -> dict[str, str]:
        out = {name: network_digest(a.network) for name, a in self.l1_agents.items()}
        out[DECIDER] = network_digest(self.decider.network)
        return out

    def label_index(self, labels) -> np.ndarray:
        lookup = {lab: i for i, lab in enumerate(self.label_registry)}
        try:
            return np.array([lookup[lab] for lab in labels], dtype=np.int64)
        except KeyError as exc:
            raise ValidationError(f"label {exc.args[0]!r} is not in the registry") from None


def build_ensemble(attack_labels: Iterable[str], feature_dim: int, config: RunConfig,
                   normalization: ZScoreParams | None = None) -> MarlEnsemble:
    attacks = list(attack_labels)
    if config.benign_label in attacks:
        raise ValidationError("the benign label cannot have its own L1 agent")
    if len(set(attacks)) != len(attacks) or not attacks:
        raise ValidationError("attack labels must be unique and non-empty")
    dtype = np.dtype(config.dtype)
    hidden = list(config.hidden_layers)
    kw = _agent_kwargs(config)
    agents = {
        name: make_agent([feature_dim, *hidden, 3], agent_seed(config.seed, name),
                         dtype=dtype, name=name, **kw)
        for name in attacks
    }
    n = len(attacks)
    decider = make_agent([3 * n, *hidden, n + 1], agent_seed(config.seed, DECIDER),
                         dtype=dtype, name=DECIDER, **kw)
    return MarlEnsemble(agents, decider, attacks + [config.benign_label], feature_dim, config,
                        normalization)


def _softmax_triples(q: np.ndarray) -> np.ndarray:
    z = q - q.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _batched_forward(net: DenseNetwork, x: np.ndarray) -> np.ndarray:
    if len(x) <= _PREDICT_CHUNK:
        return _forward_layers(net, x)[-1]
    return np.concatenate([_forward_layers(net, x[i:i + _PREDICT_CHUNK])[-1]
                           for i in range(0, len(x), _PREDICT_CHUNK)])


def build_decider_state(ens: MarlEnsemble, flow_state) -> np.ndarray:
    """Concatenated L1 Q-value triples for one record (1-D) or many (2-D)."""
    x = np.asarray(flow_state, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.ndim != 2 or x.shape[1] != ens.feature_dim:
        raise ValidationError(f"expected {ens.feature_dim} features, got shape {np.shape(flow_state)}")
    if not np.isfinite(x).all():
        raise ValidationError("flow state contains non-finite values")
    x = x.astype(ens.decider.network.dtype)
    blocks = []
    for agent in ens.l1_agents.values():
        q = _batched_forward(agent.network, x)
        blocks.append(_softmax_triples(q) if ens.config.softmax_decider_inputs else q)
    out = np.concatenate(blocks, axis=1)
    return out[0] if single else out


def predict_batch(ens: MarlEnsemble, flow_states) -> tuple[np.ndarray, np.ndarray]:
    """Greedy labels and raw decider Q-values for a batch of normalized records."""
    states = build_decider_state(ens, np.atleast_2d(flow_states))
    q = _batched_forward(ens.decider.network, states)
    labels = np.array(ens.label_registry, dtype=object)[np.argmax(q, axis=1)]
    return labels, q


def predict(ens: MarlEnsemble, flow_state) -> tuple[str, np.ndarray]:
    x = np.asarray(flow_state, dtype=float)
    if x.ndim != 1:
        raise ValidationError("predict takes one record; use predict_batch for many")
    labels, q = predict_batch(ens, x[None, :])
    return labels[0], q[0]


# -- sweeps -------------------------------------------------------------------

def _l1_categories(labels: np.ndarray, agent_class: str, benign: str) -> np.ndarray:
    cats = np.full(len(labels), int(L1Category.OTHER_ATTACK), dtype=np.int64)
    cats[labels == benign] = int(L1Category.NORMAL)
    cats[labels == agent_class] = int(L1Category.AGENT_ATTACK)
    return cats


def _sweep(agent: DqnAgent, states: np.ndarray, reward_table: np.ndarray, truth: np.ndarray,
           weights: np.ndarray, order: np.ndarray) -> tuple[float, float, float]:
    """One episode for one agent over ``states`` in ``order``.

    ``reward_table[truth, action]`` is the reward.  The transition stored for
    record ``order[j]`` points at ``order[j + 1]`` as its next state; the last
    record points at itself.  Returns (mean loss, mean reward, epsilon used).
    """
    eps = agent.epsilon
    buffer = agent.buffer
    total_loss = total_reward = 0.0
    n = len(order)
    for j in range(n):
        k = order[j]
        s = states[k]
        a = agent.act(s)
        r = reward_table[truth[k], a]
        buffer.push(s, a, r, states[order[j + 1]] if j + 1 < n else s, weights[k])
        total_loss += agent.learn()
        total_reward += float(r)
    agent.decay_epsilon()
    return total_loss / n, total_reward / n, eps


def _l1_episode(agent: DqnAgent, agent_class: str, states: np.ndarray, labels: np.ndarray,
                benign: str, cfg: RunConfig, order: np.ndarray):
    truth = _l1_categories(labels, agent_class, benign)
    weights = np.where(labels == agent_class, cfg.l1_weight_agent_class, cfg.l1_weight_other)
    table = np.array(l1_reward_table(cfg.k))
    loss, reward, eps = _sweep(agent, states, table, truth, weights, order)
    q = _batched_forward(agent.network, states)
    acc = float(np.mean(np.argmax(q, axis=1) == truth))
    return agent, (loss, reward, eps, acc), q


def _decider_weights(ens: MarlEnsemble, labels: np.ndarray) -> np.ndarray:
    cfg = ens.config
    counts = dict(zip(*np.unique(labels.astype(str), return_counts=True)))
    if cfg.decider_class_weights:
        missing = set(counts) - set(cfg.decider_class_weights)
        if missing:
            raise ValidationError(f"decider_class_weights lacks labels {sorted(missing)}")
        table = cfg.decider_class_weights
    else:
        table = decider_sample_weights({k: int(v) for k, v in counts.items()},
                                       cfg.decider_beta, cfg.decider_weight_cap)
    return np.array([table[lab] for lab in labels.tolist()], dtype=float)


def train_decider(ens: MarlEnsemble, decider_states: np.ndarray, labels,
                  order: np.ndarray | None = None, weights: np.ndarray | None = None
                  ) -> tuple[float, float, float, float]:
    """One sweep of the decider over precomputed decider states.

    Reward is +1 when the chosen registry label equals the true label, else -1.
    Returns (mean loss, mean reward, epsilon used, greedy training accuracy).
    """
    states = np.asarray(decider_states, dtype=ens.decider.network.dtype)
    labels = np.asarray(labels, dtype=object)
    n_in = 3 * ens.n_agents
    if states.ndim != 2 or states.shape[1] != n_in:
        raise ValidationError(f"decider states must have {n_in} columns, got {states.shape}")
    if len(states) != len(labels) or len(states) == 0:
        raise ValidationError("need one label per decider state and at least one state")
    truth = ens.label_index(labels)
    if weights is None:
        weights = _decider_weights(ens, labels)
    if order is None:
        order = np.arange(len(states))
    n_actions = ens.decider.action_arity
    table = np.where(np.eye(n_actions, dtype=bool), 1.0, -1.0)
    loss, reward, eps = _sweep(ens.decider, states, table, truth, weights, order)
    q = _batched_forward(ens.decider.network, states)
    acc = float(np.mean(np.argmax(q, axis=1) == truth))
    return loss, reward, eps, acc


def _validate_train_set(ens: MarlEnsemble, ds: Dataset):
    if len(ds) == 0:
        raise ValidationError("training set is empty")
    if ds.n_features != ens.feature_dim:
        raise ValidationError(f"training set has {ds.n_features} features, model expects "
                              f"{ens.feature_dim}")
    if not np.isfinite(ds.features).all():
        raise ValidationError("training set contains non-finite features; run clean first")
    ens.label_index(ds.labels)


def _run_episodes(ens: MarlEnsemble, ds: Dataset, episodes: int, agents: Sequence[str],
                  first_episode: int, order_seed: np.random.SeedSequence,
                  threads: int) -> list[EpisodeStats]:
    cfg = ens.config
    states = ds.features.astype(ens.decider.network.dtype)
    labels = ds.labels
    decider_w = _decider_weights(ens, labels)
    order_rng = np.random.default_rng(order_seed)
    frozen = [name for name in ens.l1_agents if name not in agents]
    frozen_q = {name: _batched_forward(ens.l1_agents[name].network, states) for name in frozen}
    rows: list[EpisodeStats] = []
    pool = ProcessPoolExecutor(max_workers=threads) if threads > 1 and len(agents) > 1 else None
    try:
        for e in range(first_episode, first_episode + episodes):
            order = order_rng.permutation(len(ds)) if cfg.shuffle else np.arange(len(ds))
            jobs = [(ens.l1_agents[name], name, states, labels, ens.benign_label, cfg, order)
                    for name in agents]
            results = pool.map(_l1_episode_star, jobs) if pool else map(_l1_episode_star, jobs)
            q_blocks = dict(frozen_q)
            for name, (agent, (loss, reward, eps, acc), q) in zip(agents, results):
                ens.l1_agents[name] = agent
                q_blocks[name] = q
                rows.append(EpisodeStats(e, name, loss, reward, eps, acc))
            blocks = [q_blocks[name] for name in ens.l1_agents]
            if cfg.softmax_decider_inputs:
                blocks = [_softmax_triples(b) for b in blocks]
            decider_states = np.concatenate(blocks, axis=1)
            loss, reward, eps, acc = train_decider(ens, decider_states, labels, order, decider_w)
            rows.append(EpisodeStats(e, DECIDER, loss, reward, eps, acc))
            log.info("episode %d: decider loss %.4f reward %.3f acc %.4f eps %.2f",
                     e, loss, reward, acc, eps)
    finally:
        if pool:
            pool.shutdown()
    return rows


def _l1_episode_star(args):
    return _l1_episode(*args)


def train_all(ens: MarlEnsemble, train_set: Dataset, episodes: int | None = None
              ) -> list[EpisodeStats]:
    """Train every L1 agent and the decider for ``episodes`` episodes.

    Per episode: each L1 agent sweeps the whole training set (act, reward,
    store, sample, update), then the decider sweeps the decider states built
    from the agents' post-sweep Q-values.  Agents are independent within an
    episode and may run in worker processes (``config.threads``).
    """
    cfg = ens.config
    episodes = cfg.episodes if episodes is None else episodes
    _validate_train_set(ens, train_set)
    if episodes == 0:
        log.warning("train_all called with 0 episodes; weights stay at initialization")
        return []
    if cfg.minibatch_size > len(train_set) * episodes:
        log.warning("minibatch_size %d exceeds the transitions this run will store; "
                    "each update uses the whole buffer", cfg.minibatch_size)
    return _run_episodes(ens, train_set, episodes, list(ens.l1_agents), 0,
                         agent_seed(cfg.seed, "order"), cfg.threads)


# -- adaptation -----------------------------------------------------------------

def _widen_decider(ens: MarlEnsemble, new_labels: list[str]) -> DqnAgent:
    """Decider for the grown registry, keeping every weight that still applies.

    Input columns of the first layer and output rows of the last layer are
    copied to their new positions; weights touching the new agents' inputs or
    new labels' outputs are freshly initialized.  Adam moments are reset.
    """
    old = ens.decider.network
    n_old = ens.n_agents
    n_new = n_old + len(new_labels)
    dims = [3 * n_new, *old.layer_dims[1:-1], n_new + 1]
    fresh = init_network(dims, agent_seed(ens.config.seed, DECIDER, n_new), dtype=old.dtype)
    weights = [w.copy() for w in fresh.weights]
    biases = [b.copy() for b in fresh.biases]
    last = len(weights) - 1
    out_map = list(range(n_old)) + [n_new]  # old attack rows, then the benign row
    for i, (w_old, b_old) in enumerate(zip(old.weights, old.biases)):
        cols = slice(0, 3 * n_old) if i == 0 else slice(None)
        if i == last:
            for src, dst in enumerate(out_map):
                weights[i][dst, cols] = w_old[src]
                biases[i][dst] = b_old[src]
        else:
            weights[i][:, cols] = w_old
            biases[i][:] = b_old
    net = DenseNetwork(tuple(dims), weights, biases, old.activations)
    agent = DqnAgent(net, n_new + 1, gamma=ens.decider.gamma, epsilon=ens.decider.schedule,
                     buffer_capacity=ens.decider.buffer.capacity,
                     batch_size=ens.decider.batch_size, adam=ens.decider.adam,
                     seed=agent_seed(ens.config.seed, DECIDER, _ADAPT_STREAM), name=DECIDER)
    agent.episodes_done = ens.decider.episodes_done
    return agent


def _refresh(agent: DqnAgent, seed: np.random.SeedSequence) -> DqnAgent:
    """Copy of the network and schedule with new RNG streams and an empty buffer."""
    fresh = DqnAgent(agent.network.copy(), agent.action_arity, gamma=agent.gamma,
                     epsilon=agent.schedule, buffer_capacity=agent.buffer.capacity,
                     batch_size=agent.batch_size, adam=agent.adam, seed=seed, name=agent.name)
    fresh.episodes_done = agent.episodes_done
    return fresh


def adapt(ens: MarlEnsemble, previous_train: Dataset, new_data: Dataset,
          affected: Iterable[str], episodes: int | None = None,
          new_fraction: float | None = None, allow_new: bool = False
          ) -> tuple[MarlEnsemble, Dataset, list[EpisodeStats]]:
    """Retrain only the affected L1 agents and the decider on old + new data.

    ``new_fraction`` of ``new_data`` (stratified) joins the previous training
    set; the rest is returned for testing, along with the training log.
    Affected labels that are not yet registered get a fresh agent when
    ``allow_new`` is set, and the decider is widened to match.  Unaffected
    agents are never touched and the input ensemble is left unmodified.
    """
    cfg = ens.config
    affected = list(dict.fromkeys(affected))
    if not affected:
        raise ValidationError("adapt needs at least one affected attack label")
    if cfg.benign_label in affected:
        raise ValidationError("the benign label has no agent to adapt")
    episodes = cfg.adapt_episodes if episodes is None else episodes
    new_fraction = cfg.adapt_new_fraction if new_fraction is None else new_fraction
    new_labels = [lab for lab in affected if lab not in ens.l1_agents]
    if new_labels and not allow_new:
        raise ValidationError(f"unknown attack labels {new_labels}; pass allow_new to add them")

    if new_fraction >= 1:
        new_train, held_out = new_data, new_data.subset(np.zeros(len(new_data), dtype=bool))
    else:
        new_train, held_out = dp.split(new_data, new_fraction, cfg.seed)
    combined = dp.concat([previous_train, new_train], note="adapt: previous + new")

    if new_labels:
        agents = dict(ens.l1_agents)
        kw = _agent_kwargs(cfg)
        hidden = list(cfg.hidden_layers)
        for name in new_labels:
            agents[name] = make_agent([ens.feature_dim, *hidden, 3], agent_seed(cfg.seed, name),
                                      dtype=np.dtype(cfg.dtype), name=name, **kw)
        decider = _widen_decider(ens, new_labels)
        registry = ens.attack_labels + new_labels + [ens.benign_label]
        ens = MarlEnsemble(agents, decider, registry, ens.feature_dim, cfg, ens.normalization)
    else:
        ens = MarlEnsemble(dict(ens.l1_agents), ens.decider, ens.label_registry,
                           ens.feature_dim, cfg, ens.normalization)
    for name in affected:
        ens.l1_agents[name] = _refresh(ens.l1_agents[name],
                                       agent_seed(cfg.seed, name, _ADAPT_STREAM))
    ens.decider = _refresh(ens.decider, agent_seed(cfg.seed, DECIDER, _ADAPT_STREAM))
    _validate_train_set(ens, combined)
    rows = _run_episodes(ens, combined, episodes, affected, 0,
                         agent_seed(cfg.seed, "order", _ADAPT_STREAM), cfg.threads)
    return ens, held_out, rows
