"""TD3 learner: clipped double critics, delayed actor updates, target smoothing.

The agent owns its networks, replay buffer, observation normalizer and random
generators; given the same seed, config and environment it reproduces the
same training trajectory exactly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .neural import (
    Adam,
    Mlp,
    adam_from_dict,
    adam_to_dict,
    decode_array,
    encode_array,
    init_mlp,
    load_checkpoint,
    mlp_from_dict,
    mlp_to_dict,
    polyak_update,
    save_checkpoint,
)


@dataclass(frozen=True, slots=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass(frozen=True)
class TD3Config:
    gamma: float = 0.99
    tau: float = 0.005
    policy_delay: int = 2
    explore_sigma: float = 0.1
    smooth_sigma: float = 0.2
    noise_clip: float = 0.5
    batch_size: int = 100
    buffer_capacity: int = 1_000_000
    warmup_steps: int = 1000
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    hidden: tuple[int, ...] = (256, 256)
    reward_scale: float = 1.0
    normalize_observations: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must be in [0, 1]")
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be >= 1")
        if self.noise_clip <= 0:
            raise ValueError("noise_clip must be positive")
        if min(self.explore_sigma, self.smooth_sigma) < 0:
            raise ValueError("noise sigmas must be non-negative")
        if min(self.batch_size, self.buffer_capacity, self.warmup_steps) < 1:
            raise ValueError("batch_size, buffer_capacity and warmup_steps must be >= 1")
        if self.reward_scale <= 0:
            raise ValueError("reward_scale must be positive")


class ReplayBuffer:
    """Ring buffer of transitions with a seeded uniform-with-replacement sampler."""

    def __init__(self, capacity: int, seed):
        self.capacity = capacity
        self.rng = np.random.default_rng(seed)
        self._size = 0
        self._pos = 0
        self._states: Optional[np.ndarray] = None
        self._actions: Optional[np.ndarray] = None
        self._rewards: Optional[np.ndarray] = None
        self._next_states: Optional[np.ndarray] = None
        self._dones: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self._size

    def push(self, state, action, reward: float, next_state, done: bool) -> None:
        if self._states is None:
            self._states = np.empty((self.capacity, len(state)))
            self._actions = np.empty((self.capacity, len(action)))
            self._rewards = np.empty(self.capacity)
            self._next_states = np.empty((self.capacity, len(next_state)))
            self._dones = np.empty(self.capacity)
        i = self._pos
        self._states[i] = state
        self._actions[i] = action
        self._rewards[i] = reward
        self._next_states[i] = next_state
        self._dones[i] = float(done)
        self._pos = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int) -> dict[str, np.ndarray]:
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = self.rng.integers(0, self._size, size=batch_size)
        return {
            "states": self._states[idx],
            "actions": self._actions[idx],
            "rewards": self._rewards[idx],
            "next_states": self._next_states[idx],
            "dones": self._dones[idx],
        }


class RunningNormalizer:
    """Welford running mean/variance; frozen when ``update`` stops being called."""

    def __init__(self, size: int):
        self.size = size
        self.count = 0
        self.mean = np.zeros(size)
        self.m2 = np.zeros(size)

    def update(self, x: np.ndarray) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        """Standardize a vector or a (batch, size) matrix with the running stats."""
        x = np.asarray(x, dtype=np.float64)
        if self.count == 0:
            return x
        var = self.m2 / self.count
        return (x - self.mean) / np.sqrt(var + 1e-8)

    def state_dict(self) -> dict:
        return {
            "size": self.size,
            "count": self.count,
            "mean": encode_array(self.mean),
            "m2": encode_array(self.m2),
        }

    @classmethod
    def from_state_dict(cls, doc: dict) -> "RunningNormalizer":
        norm = cls(doc["size"])
        norm.count = doc["count"]
        norm.mean = decode_array(doc["mean"])
        norm.m2 = decode_array(doc["m2"])
        return norm


class TD3Agent:
    def __init__(self, obs_dim: int, action_dim: int, config: TD3Config):
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.config = config

        agent_seed, buffer_seed = np.random.SeedSequence(config.seed).spawn(2)
        self.rng = np.random.default_rng(agent_seed)
        self.buffer = ReplayBuffer(config.buffer_capacity, buffer_seed)

        sizes = [obs_dim, *config.hidden, action_dim]
        critic_sizes = [obs_dim + action_dim, *config.hidden, 1]
        self.actor = init_mlp(sizes, output_activation="tanh", rng=self.rng)
        self.critic1 = init_mlp(critic_sizes, output_activation="linear", rng=self.rng)
        self.critic2 = init_mlp(critic_sizes, output_activation="linear", rng=self.rng)
        self.actor_target = self.actor.clone()
        self.critic1_target = self.critic1.clone()
        self.critic2_target = self.critic2.clone()

        self.actor_opt = Adam(lr=config.actor_lr)
        self.critic1_opt = Adam(lr=config.critic_lr)
        self.critic2_opt = Adam(lr=config.critic_lr)

        self.normalizer = RunningNormalizer(obs_dim)
        self.env_steps = 0
        self.update_count = 0

    # -- acting ---------------------------------------------------------

    def _norm(self, state: np.ndarray) -> np.ndarray:
        if not self.config.normalize_observations:
            return np.asarray(state, dtype=np.float64)
        return self.normalizer.normalize(np.asarray(state, dtype=np.float64))

    def select_action(self, state: np.ndarray, explore: bool) -> np.ndarray:
        """Deterministic policy action, plus Gaussian exploration noise when asked."""
        action = self.actor.forward(self._norm(state))
        if explore:
            action = action + self.rng.normal(0.0, self.config.explore_sigma, size=self.action_dim)
        return np.clip(action, -1.0, 1.0)

    def behaviour_action(self, state: np.ndarray) -> np.ndarray:
        """Training-time action: uniform random during warm-up, then noisy policy."""
        if self.env_steps < self.config.warmup_steps:
            return self.rng.uniform(-1.0, 1.0, size=self.action_dim)
        return self.select_action(state, explore=True)

    # -- targets ----------------------------------------------------------

    def smoothed_target_action(self, next_states: np.ndarray) -> np.ndarray:
        """Target-policy action with clipped Gaussian smoothing noise."""
        next_states = np.atleast_2d(np.asarray(next_states, dtype=np.float64))
        action = self.actor_target.forward(self._norm_batch(next_states))
        noise = self.rng.normal(0.0, self.config.smooth_sigma, size=action.shape)
        noise = np.clip(noise, -self.config.noise_clip, self.config.noise_clip)
        return np.clip(action + noise, -1.0, 1.0)

    def critic_target(
        self, rewards: np.ndarray, next_states: np.ndarray, dones: np.ndarray
    ) -> np.ndarray:
        """y = r + gamma * (1 - done) * min(Q1', Q2') at the smoothed target action."""
        rewards = np.atleast_1d(np.asarray(rewards, dtype=np.float64))
        dones = np.atleast_1d(np.asarray(dones, dtype=np.float64))
        next_states = np.atleast_2d(np.asarray(next_states, dtype=np.float64))
        next_action = self.smoothed_target_action(next_states)
        next_input = np.hstack([self._norm_batch(next_states), next_action])
        q1 = self.critic1_target.forward(next_input)[:, 0]
        q2 = self.critic2_target.forward(next_input)[:, 0]
        return rewards + self.config.gamma * (1.0 - dones) * np.minimum(q1, q2)

    def _norm_batch(self, states: np.ndarray) -> np.ndarray:
        if not self.config.normalize_observations:
            return states
        return self.normalizer.normalize(states)

    # -- updates ----------------------------------------------------------

    def update_critics(self, batch: dict[str, np.ndarray]) -> tuple[float, float]:
        """One MSE step on each critic toward the shared clipped-double target."""
        y = self.critic_target(batch["rewards"], batch["next_states"], batch["dones"])
        states = self._norm_batch(batch["states"])
        net_input = np.hstack([states, batch["actions"]])
        n = len(y)

        losses = []
        for critic, opt in ((self.critic1, self.critic1_opt), (self.critic2, self.critic2_opt)):
            q, cache = critic.forward_cached(net_input)
            err = q[:, 0] - y
            losses.append(float(np.mean(err**2)))
            grads, _ = critic.backward(cache, (2.0 * err / n)[:, None])
            opt.step(critic.parameters(), grads)
        return losses[0], losses[1]

    def update_actor_and_targets(
        self, batch: dict[str, np.ndarray], step_count: int
    ) -> Optional[float]:
        """Delayed deterministic-policy-gradient step plus Polyak target refresh.

        No-op unless ``step_count`` is a multiple of the policy delay.
        """
        if step_count % self.config.policy_delay != 0:
            return None
        states = self._norm_batch(batch["states"])
        n = len(states)

        action, actor_cache = self.actor.forward_cached(states)
        q_input = np.hstack([states, action])
        q1, critic_cache = self.critic1.forward_cached(q_input)
        actor_loss = float(-np.mean(q1))

        # d(-mean q1)/d action, chained through the frozen critic into the actor.
        _, input_grad = self.critic1.backward(critic_cache, np.full((n, 1), -1.0 / n))
        action_grad = input_grad[:, self.obs_dim :]
        grads, _ = self.actor.backward(actor_cache, action_grad)
        self.actor_opt.step(self.actor.parameters(), grads)

        polyak_update(self.actor_target, self.actor, self.config.tau)
        polyak_update(self.critic1_target, self.critic1, self.config.tau)
        polyak_update(self.critic2_target, self.critic2, self.config.tau)
        return actor_loss

    def train_step(self, transition: Transition) -> dict:
        """Store one environment transition and, past warm-up, run one update."""
        if self.config.normalize_observations:
            self.normalizer.update(np.asarray(transition.state, dtype=np.float64))
        self.buffer.push(
            transition.state,
            transition.action,
            transition.reward * self.config.reward_scale,
            transition.next_state,
            transition.done,
        )
        self.env_steps += 1

        diagnostics: dict = {"buffer_size": len(self.buffer), "updated": False}
        if len(self.buffer) >= self.config.warmup_steps:
            batch = self.buffer.sample(self.config.batch_size)
            loss1, loss2 = self.update_critics(batch)
            self.update_count += 1
            actor_loss = self.update_actor_and_targets(batch, self.update_count)
            diagnostics.update(
                updated=True, critic1_loss=loss1, critic2_loss=loss2, actor_loss=actor_loss
            )
        return diagnostics

    # -- persistence ------------------------------------------------------

    def save(self, path: str | Path, include_buffer: bool = False) -> None:
        """Checkpoint networks, optimizer states, normalizer and rng state.

        ``include_buffer`` additionally embeds the replay buffer so training
        can resume as an exact continuation.
        """
        payload = {
            "obs_dim": self.obs_dim,
            "action_dim": self.action_dim,
            "config": {**asdict(self.config), "hidden": list(self.config.hidden)},
            "networks": {
                "actor": mlp_to_dict(self.actor),
                "critic1": mlp_to_dict(self.critic1),
                "critic2": mlp_to_dict(self.critic2),
                "actor_target": mlp_to_dict(self.actor_target),
                "critic1_target": mlp_to_dict(self.critic1_target),
                "critic2_target": mlp_to_dict(self.critic2_target),
            },
            "optimizers": {
                "actor": adam_to_dict(self.actor_opt),
                "critic1": adam_to_dict(self.critic1_opt),
                "critic2": adam_to_dict(self.critic2_opt),
            },
            "normalizer": self.normalizer.state_dict(),
            "env_steps": self.env_steps,
            "update_count": self.update_count,
            "rng_state": self.rng.bit_generator.state,
            "buffer_rng_state": self.buffer.rng.bit_generator.state,
        }
        if include_buffer:
            size = len(self.buffer)
            payload["buffer"] = {
                "pos": self.buffer._pos,
                "size": size,
                "states": encode_array(self.buffer._states[:size] if size else np.zeros((0, self.obs_dim))),
                "actions": encode_array(self.buffer._actions[:size] if size else np.zeros((0, self.action_dim))),
                "rewards": encode_array(self.buffer._rewards[:size] if size else np.zeros(0)),
                "next_states": encode_array(self.buffer._next_states[:size] if size else np.zeros((0, self.obs_dim))),
                "dones": encode_array(self.buffer._dones[:size] if size else np.zeros(0)),
            }
        save_checkpoint(path, payload)

    @classmethod
    def load(cls, path: str | Path) -> "TD3Agent":
        payload = load_checkpoint(path)
        cfg = dict(payload["config"])
        cfg["hidden"] = tuple(cfg["hidden"])
        agent = cls(payload["obs_dim"], payload["action_dim"], TD3Config(**cfg))
        nets = payload["networks"]
        agent.actor = mlp_from_dict(nets["actor"])
        agent.critic1 = mlp_from_dict(nets["critic1"])
        agent.critic2 = mlp_from_dict(nets["critic2"])
        agent.actor_target = mlp_from_dict(nets["actor_target"])
        agent.critic1_target = mlp_from_dict(nets["critic1_target"])
        agent.critic2_target = mlp_from_dict(nets["critic2_target"])
        opts = payload["optimizers"]
        agent.actor_opt = adam_from_dict(opts["actor"])
        agent.critic1_opt = adam_from_dict(opts["critic1"])
        agent.critic2_opt = adam_from_dict(opts["critic2"])
        agent.normalizer = RunningNormalizer.from_state_dict(payload["normalizer"])
        agent.env_steps = payload["env_steps"]
        agent.update_count = payload["update_count"]
        agent.rng.bit_generator.state = payload["rng_state"]
        agent.buffer.rng.bit_generator.state = payload["buffer_rng_state"]
        if "buffer" in payload:
            doc = payload["buffer"]
            states = decode_array(doc["states"])
            actions = decode_array(doc["actions"])
            rewards = decode_array(doc["rewards"])
            next_states = decode_array(doc["next_states"])
            dones = decode_array(doc["dones"])
            for i in range(doc["size"]):
                agent.buffer.push(states[i], actions[i], rewards[i], next_states[i], bool(dones[i]))
            agent.buffer._pos = doc["pos"]
        return agent
