"""MADDPG: decentralised sigmoid actors, centralised critics, shared replay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .neural import AdamState, Bundle, Mlp, adam_step, load_bundle, save_bundle, soft_update

CRITIC_INPUT_ORDER = "observations,actions"


@dataclass
class MaddpgConfig:
    hidden: int = 128
    actor_layers: int = 6
    critic_layers: int = 4
    actor_lr: float = 1e-7
    critic_lr: float = 1e-5
    gamma: float = 0.99
    tau: float = 5e-3
    batch_size: int = 64
    buffer_size: int = 20_000
    warmup_batches: int = 10
    sigma: float = 0.2
    sigma_decay: float = 0.9995
    sigma_floor: float = 0.01
    reward_scale: float = 1e4

    def validate(self):
        for name in ("actor_lr", "critic_lr", "tau", "batch_size", "buffer_size", "reward_scale", "hidden"):
            if not getattr(self, name) > 0:
                raise ValueError(f"maddpg.{name} must be positive")
        if not 0 < self.gamma < 1:
            raise ValueError("maddpg.gamma must lie in (0, 1)")
        if self.actor_layers < 1 or self.critic_layers < 1:
            raise ValueError("network depth must be at least 1")
        if self.sigma < 0 or self.sigma_floor < 0 or not 0 < self.sigma_decay <= 1:
            raise ValueError("bad exploration schedule")


@dataclass
class Transition:
    joint_obs: np.ndarray  # (n_agents, obs_dim)
    joint_actions: np.ndarray  # (n_agents,)
    rewards: np.ndarray  # (n_agents,), already scaled
    next_joint_obs: np.ndarray
    terminal: bool


@dataclass
class Batch:
    obs: np.ndarray  # (B, n_agents, obs_dim)
    actions: np.ndarray  # (B, n_agents)
    rewards: np.ndarray
    next_obs: np.ndarray
    terminal: np.ndarray  # (B,) bool

    def __len__(self):
        return len(self.actions)


class ReplayBuffer:
    """Fixed-capacity FIFO ring with uniform sampling."""

    def __init__(self, capacity, n_agents, obs_dim):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.n_agents = n_agents
        self.obs_dim = obs_dim
        self.obs = np.zeros((self.capacity, n_agents, obs_dim))
        self.next_obs = np.zeros_like(self.obs)
        self.actions = np.zeros((self.capacity, n_agents))
        self.rewards = np.zeros((self.capacity, n_agents))
        self.terminal = np.zeros(self.capacity, dtype=bool)
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def store(self, tr):
        o = np.asarray(tr.joint_obs, dtype=float)
        if o.shape != (self.n_agents, self.obs_dim) or np.shape(tr.next_joint_obs) != o.shape:
            raise ValueError(f"observation shape {o.shape} does not match buffer ({self.n_agents}, {self.obs_dim})")
        if np.shape(tr.joint_actions) != (self.n_agents,) or np.shape(tr.rewards) != (self.n_agents,):
            raise ValueError("actions and rewards need one entry per agent")
        k = self._next
        self.obs[k] = o
        self.next_obs[k] = tr.next_joint_obs
        self.actions[k] = tr.joint_actions
        self.rewards[k] = tr.rewards
        self.terminal[k] = tr.terminal
        self._next = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _order(self):
        # storage slots from oldest to newest
        start = self._next if self.size == self.capacity else 0
        return (start + np.arange(self.size)) % self.capacity

    def items(self):
        return [self._get(k) for k in self._order()]

    def _get(self, k):
        return Transition(self.obs[k].copy(), self.actions[k].copy(), self.rewards[k].copy(), self.next_obs[k].copy(), bool(self.terminal[k]))

    def sample(self, batch_size, rng):
        if self.size == 0 or batch_size > self.size:
            raise ValueError(f"insufficient samples: have {self.size}, need {batch_size}")
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.terminal[idx])


class Agent:
    """Actor, centralised critic, their targets and optimizer states."""

    def __init__(self, obs_dim, n_agents, cfg, rng):
        self.obs_dim = obs_dim
        self.cfg = cfg
        actor_sizes = [obs_dim] + [cfg.hidden] * (cfg.actor_layers - 1) + [1]
        critic_sizes = [n_agents * (obs_dim + 1)] + [cfg.hidden] * (cfg.critic_layers - 1) + [1]
        self.actor = Mlp(actor_sizes, "sigmoid", rng)
        self.critic = Mlp(critic_sizes, "identity", rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = AdamState.for_params(self.actor.params)
        self.critic_opt = AdamState.for_params(self.critic.params)
        self.sigma = cfg.sigma

    def decay_sigma(self, factor=None, floor=None):
        factor = self.cfg.sigma_decay if factor is None else factor
        floor = self.cfg.sigma_floor if floor is None else floor
        self.sigma = max(self.sigma * factor, floor)


def select_action(agent, obs, explore, rng):
    """Deterministic pi(o), or pi perturbed by Gaussian noise before the sigmoid."""
    obs = np.asarray(obs, dtype=float)
    if obs.shape != (agent.obs_dim,):
        raise ValueError(f"observation has shape {obs.shape}, actor expects ({agent.obs_dim},)")
    if not explore:
        return float(agent.actor.forward(obs)[0])
    z = agent.actor.logits(obs)[0]
    if agent.sigma > 0:
        z += agent.sigma * rng.standard_normal()
    return float(1.0 / (1.0 + np.exp(-z)))


def critic_input(obs, actions):
    """Concatenate all observations, then all actions, per batch row."""
    return np.concatenate([obs.reshape(len(obs), -1), actions], axis=1)


def td_targets(agents, i, batch, gamma):
    nxt = np.stack([ag.actor_target.forward(batch.next_obs[:, k])[:, 0] for k, ag in enumerate(agents)], axis=1)
    q_next = agents[i].critic_target.forward(critic_input(batch.next_obs, nxt))[:, 0]
    return batch.rewards[:, i] + gamma * np.where(batch.terminal, 0.0, q_next)


def update_critic(agents, batch, gamma):
    """One Adam step per agent on the TD mean-squared error; returns pre-update losses."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    x = critic_input(batch.obs, batch.actions)
    losses = []
    for i, ag in enumerate(agents):
        y = td_targets(agents, i, batch, gamma)
        q = ag.critic.forward(x)[:, 0]
        err = q - y
        losses.append(float(np.mean(err**2)))
        grads, _ = ag.critic.backward(x, (2.0 / len(batch) * err)[:, None])
        adam_step(ag.critic.params, grads, ag.critic_opt, ag.cfg.critic_lr)
    return losses


def actor_gradient(agents, i, batch):
    """Mean Q_i with agent i's batch action replaced by pi_i(o_i), and its actor gradient."""
    ag = agents[i]
    o_i = batch.obs[:, i]
    a_i = ag.actor.forward(o_i)[:, 0]
    actions = batch.actions.copy()
    actions[:, i] = a_i
    x = critic_input(batch.obs, actions)
    q = ag.critic.forward(x)[:, 0]
    _, dx = ag.critic.backward(x, np.full((len(batch), 1), 1.0 / len(batch)))
    col = batch.obs.shape[1] * batch.obs.shape[2] + i
    grads, _ = ag.actor.backward(o_i, dx[:, col : col + 1])
    return float(q.mean()), grads


def update_actor(agents, i, batch):
    """Deterministic policy-gradient ascent step; returns mean Q before the step."""
    value, grads = actor_gradient(agents, i, batch)
    ag = agents[i]
    adam_step(ag.actor.params, [-g for g in grads], ag.actor_opt, ag.cfg.actor_lr)
    return value


def end_of_step_maintenance(agents, tau, sigma_decay=None):
    """Soft-update every target; decay exploration when ``sigma_decay`` is given."""
    for ag in agents:
        soft_update(ag.actor_target, ag.actor, tau)
        soft_update(ag.critic_target, ag.critic, tau)
        if sigma_decay is not None:
            ag.decay_sigma(sigma_decay)


class Maddpg:
    """Agents plus shared replay buffer and the per-step learning schedule."""

    def __init__(self, n_agents, obs_dim, cfg, init_rng, sample_rng, noise_rng):
        cfg.validate()
        self.cfg = cfg
        self.n_agents = n_agents
        self.obs_dim = obs_dim
        self.agents = [Agent(obs_dim, n_agents, cfg, init_rng) for _ in range(n_agents)]
        self.buffer = ReplayBuffer(cfg.buffer_size, n_agents, obs_dim)
        self.sample_rng = sample_rng
        self.noise_rng = noise_rng
        self.updates = 0

    @property
    def warmup(self):
        return self.cfg.warmup_batches * self.cfg.batch_size

    def act(self, joint_obs, explore=True):
        return np.array([select_action(ag, o, explore, self.noise_rng) for ag, o in zip(self.agents, joint_obs)])

    def observe(self, joint_obs, actions, raw_rewards, next_obs, terminal):
        tr = Transition(np.asarray(joint_obs), np.asarray(actions), np.asarray(raw_rewards) / self.cfg.reward_scale, np.asarray(next_obs), terminal)
        self.buffer.store(tr)

    def learn(self):
        """Critic and actor updates once the buffer is warm; returns losses or None."""
        if len(self.buffer) < max(self.warmup, self.cfg.batch_size):
            return None
        batch = self.buffer.sample(self.cfg.batch_size, self.sample_rng)
        losses = update_critic(self.agents, batch, self.cfg.gamma)
        for i in range(self.n_agents):
            update_actor(self.agents, i, batch)
        self.updates += 1
        return losses

    def end_of_step(self, episode_done):
        end_of_step_maintenance(self.agents, self.cfg.tau, self.cfg.sigma_decay if episode_done else None)

    def save(self, path, **meta):
        b = Bundle(meta={"critic_input_order": CRITIC_INPUT_ORDER, "updates": self.updates, **meta})
        for k, ag in enumerate(self.agents):
            for role in ("actor", "critic", "actor_target", "critic_target"):
                b.nets[f"agent{k}.{role}"] = getattr(ag, role)
            b.optims[f"agent{k}.actor_opt"] = ag.actor_opt
            b.optims[f"agent{k}.critic_opt"] = ag.critic_opt
            b.meta[f"agent{k}.sigma"] = ag.sigma
        save_bundle(path, b)

    def load(self, path):
        b = load_bundle(path)
        if b.meta.get("critic_input_order") != CRITIC_INPUT_ORDER:
            raise ValueError("checkpoint uses a different critic input layout")
        for k, ag in enumerate(self.agents):
            for role in ("actor", "critic", "actor_target", "critic_target"):
                net = b.nets[f"agent{k}.{role}"]
                if not net.same_architecture(getattr(ag, role)):
                    raise ValueError(f"checkpoint architecture mismatch for agent {k} {role}")
                setattr(ag, role, net)
            ag.actor_opt = b.optims[f"agent{k}.actor_opt"]
            ag.critic_opt = b.optims[f"agent{k}.critic_opt"]
            ag.sigma = float(b.meta[f"agent{k}.sigma"])
        self.updates = int(b.meta["updates"])
