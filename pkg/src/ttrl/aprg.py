"""Actor-critic training with a reward-parameter critic.

The critic predicts where a return lands and how high it flies instead of
the scalar reward; the reward is computed from those predictions and the
goal, so its gradient can be pushed through the critic into the actor and,
at action time, into the action itself (post-optimization).

Three variants share one training loop:

* ``aprg``   - reward-parameter critic, actor via the composed gradient,
  gradient post-optimization of every executed action after warm-up.
* ``prg``    - same, without post-optimization.
* ``scalar`` - DDPG-style critic that regresses the scalar reward directly
  (it must see the goal as an input); no post-optimization.

Networks see states and goals scaled to about [-1, 1] and act in the
normalized action box [-1, 1]^3; see ``Action.normalized``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import env as E
from .neuralnet import AdamState, MlpNet, adam_step

MODES = ("aprg", "prg", "scalar")
STATE_DIM, GOAL_DIM, ACTION_DIM, PARAM_DIM = 9, 2, 3, 3


@dataclass(frozen=True)
class AprgConfig:
    mode: str = "aprg"
    warmup_episodes: int = 30
    total_episodes: int = 200
    train_steps: int = 32  # gradient iterations per episode after warm-up
    batch_size: int = 64
    hidden: tuple = (64, 64)
    critic_lr: float = 1e-3
    actor_lr: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    base_action: tuple = (10.0, 0.0, 1.0)
    warmup_std: tuple = (6.0, 6.0, 0.4)
    explore_std: tuple = (1.0, 1.0, 0.05)
    explore_decay: float = 0.99  # per episode after warm-up
    post_opt_steps: int = 10
    post_opt_lr: float = 0.05  # normalized action units

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0 <= self.warmup_episodes <= self.total_episodes:
            raise ValueError("need 0 <= warmup_episodes <= total_episodes")
        if min(self.train_steps, self.batch_size, self.post_opt_steps) < 0:
            raise ValueError("step counts must be non-negative")


@dataclass(frozen=True)
class EpisodeRecord:
    observed_state: np.ndarray
    goal: E.Goal
    action: E.Action
    reward_params: E.RewardParams
    reward: float


@dataclass
class Batch:
    states: np.ndarray  # normalized
    goals: np.ndarray  # metres
    goals_norm: np.ndarray
    actions: np.ndarray  # normalized
    params: np.ndarray
    rewards: np.ndarray
    index: np.ndarray


class ReplayBuffer:
    """Append-only episode store with uniform sampling (with replacement)."""

    def __init__(self, env_config: E.EnvConfig = E.EnvConfig()):
        self.env_config = env_config
        self.records: list[EpisodeRecord] = []
        self._rows = {k: [] for k in ("s", "g", "gn", "u", "p", "r")}
        self._cache = None

    def __len__(self):
        return len(self.records)

    def add(self, rec: EpisodeRecord):
        cfg = self.env_config
        self.records.append(rec)
        self._rows["s"].append(cfg.normalize_state(rec.observed_state))
        self._rows["g"].append(rec.goal.as_array())
        self._rows["gn"].append(cfg.normalize_goal(rec.goal))
        self._rows["u"].append(rec.action.normalized())
        self._rows["p"].append(rec.reward_params.as_array())
        self._rows["r"].append(rec.reward)
        self._cache = None

    def _arrays(self):
        if self._cache is None:
            self._cache = {k: np.array(v, dtype=np.float64) for k, v in self._rows.items()}
        return self._cache

    def batch(self, index) -> Batch:
        a = self._arrays()
        index = np.asarray(index)
        return Batch(a["s"][index], a["g"][index], a["gn"][index], a["u"][index],
                     a["p"][index], a["r"][index], index)

    def sample(self, rng: np.random.Generator, n: int) -> Batch:
        if not self.records:
            raise ValueError("cannot sample from an empty buffer")
        return self.batch(rng.integers(0, len(self.records), size=n))


# ---------------------------------------------------------------------------
# networks and the differentiable reward


def make_actor(config: AprgConfig, rng) -> MlpNet:
    sizes = [STATE_DIM + GOAL_DIM, *config.hidden, ACTION_DIM]
    return MlpNet.xavier(sizes, ["relu"] * len(config.hidden) + ["tanh"], rng)


def make_critic(config: AprgConfig, rng) -> MlpNet:
    if config.mode == "scalar":
        sizes = [STATE_DIM + ACTION_DIM + GOAL_DIM, *config.hidden, 1]
    else:
        sizes = [STATE_DIM + ACTION_DIM, *config.hidden, PARAM_DIM]
    return MlpNet.xavier(sizes, ["relu"] * len(config.hidden) + ["linear"], rng)


def is_scalar(critic) -> bool:
    return critic.sizes[-1] == 1


def critic_input(critic, states, actions, goals_norm):
    if is_scalar(critic):
        return np.concatenate([states, actions, goals_norm], axis=-1)
    return np.concatenate([states, actions], axis=-1)


def reward_and_grad(q, goals, height_weight):
    """Reward computed from critic output ``q`` and its gradient w.r.t. ``q``.

    For a reward-parameter critic ``q = (x, y, h)`` and the reward is
    ``-|(x, y) - goal| - height_weight * h``; a scalar critic's output is the
    reward itself.
    """
    q = np.asarray(q, float)
    if q.shape[-1] == 1:
        return q[..., 0], np.ones_like(q)
    d = q[..., :2] - goals
    dist = np.sqrt(np.sum(d * d, axis=-1))
    r = -dist - height_weight * q[..., 2]
    grad = np.empty_like(q)
    grad[..., :2] = -d / np.maximum(dist, 1e-12)[..., None]
    grad[..., 2] = -height_weight
    return r, grad


def estimated_reward(critic, state, u, goal, goal_norm, height_weight, with_grad=False):
    q, tape = critic.forward(critic_input(critic, state, u, goal_norm))
    r, dq = reward_and_grad(q, goal, height_weight)
    if not with_grad:
        return float(r)
    dx, _ = critic.backward(tape, dq, param_grads=False)
    return float(r), dx[STATE_DIM:STATE_DIM + ACTION_DIM]


# ---------------------------------------------------------------------------
# the four per-episode operations


def select_action(actor, state, goal_norm, episode, config: AprgConfig, rng) -> E.Action:
    """Exploration policy.

    During warm-up: the base action plus wide Gaussian noise. Afterwards: the
    actor's output plus narrow noise that decays geometrically per episode.
    Three normals are drawn either way, so the noise stream does not depend on
    the branch taken.
    """
    z = rng.standard_normal(ACTION_DIM)
    if episode < config.warmup_episodes:
        return E.Action.from_array(np.asarray(config.base_action) + z * np.asarray(config.warmup_std))
    u = actor(np.concatenate([state, goal_norm]))
    scale = config.explore_decay ** (episode - config.warmup_episodes)
    return E.Action.from_array(E.Action.from_normalized(u).as_array()
                               + z * scale * np.asarray(config.explore_std))


def post_optimize_action(critic, state, action: E.Action, goal: E.Goal, config: AprgConfig,
                         height_weight: float = 0.07, goal_norm=None) -> E.Action:
    """Projected gradient ascent on the critic-estimated reward.

    Each of the ``post_opt_steps`` iterations tries a step of
    ``post_opt_lr`` along the gradient (normalized action units), projects onto
    the action box and halves the step until the estimate does not decrease.
    """
    if config.mode != "aprg" or config.post_opt_steps == 0:
        return action
    g = goal.as_array()
    gn = np.zeros(GOAL_DIM) if goal_norm is None else goal_norm
    u = action.normalized()
    r, grad = estimated_reward(critic, state, u, g, gn, height_weight, with_grad=True)
    for _ in range(config.post_opt_steps):
        step = config.post_opt_lr
        while step > config.post_opt_lr * 2.0 ** -12:
            u_new = np.clip(u + step * grad, -1.0, 1.0)
            r_new = estimated_reward(critic, state, u_new, g, gn, height_weight)
            if r_new >= r:
                break
            step *= 0.5
        else:
            break
        if np.array_equal(u_new, u):
            break
        u = u_new
        r, grad = estimated_reward(critic, state, u, g, gn, height_weight, with_grad=True)
    return E.Action.from_normalized(u)


def critic_targets(critic, batch: Batch):
    return batch.rewards[:, None] if is_scalar(critic) else batch.params


def critic_loss_and_grad(critic, batch: Batch):
    """Mean over the batch of the squared error summed over output dims."""
    x = critic_input(critic, batch.states, batch.actions, batch.goals_norm)
    q, tape = critic.forward(x)
    diff = q - critic_targets(critic, batch)
    n = len(diff)
    loss = float(np.sum(diff * diff) / n)
    _, grads = critic.backward(tape, 2.0 * diff / n, input_grad=False)
    return loss, grads


def train_critic_batch(critic, batch: Batch, optimizer: AdamState) -> float:
    if len(batch.states) == 0:
        raise ValueError("empty batch")
    loss, grads = critic_loss_and_grad(critic, batch)
    adam_step(critic, grads, optimizer)
    return loss


def actor_objective_and_grad(actor, critic, batch: Batch, height_weight=0.07):
    """Mean estimated reward of the actor's actions and its parameter gradient."""
    u, atape = actor.forward(np.concatenate([batch.states, batch.goals_norm], axis=1))
    q, ctape = critic.forward(critic_input(critic, batch.states, u, batch.goals_norm))
    r, dq = reward_and_grad(q, batch.goals, height_weight)
    n = len(r)
    dx, _ = critic.backward(ctape, dq / n, param_grads=False)
    _, grads = actor.backward(atape, dx[:, STATE_DIM:STATE_DIM + ACTION_DIM], input_grad=False)
    return float(np.mean(r)), grads


def train_actor_batch(actor, critic, batch: Batch, optimizer: AdamState, height_weight=0.07) -> float:
    """One ascent step on the critic-estimated reward; the critic is not modified."""
    if len(batch.states) == 0:
        raise ValueError("empty batch")
    obj, grads = actor_objective_and_grad(actor, critic, batch, height_weight)
    adam_step(actor, -grads, optimizer)
    return obj


# ---------------------------------------------------------------------------
# training loop


@dataclass
class EpisodeLog:
    episode: int
    goal: E.Goal
    observed_state: np.ndarray
    proposed_action: E.Action  # before post-optimization
    action: E.Action  # commanded
    outcome_params: E.RewardParams
    reward: float
    goal_error: float
    terminal_event: str

    COLUMNS = (
        ["episode", "goal_x", "goal_y"]
        + [f"s{i}" for i in range(9)]
        + ["proposed_alpha", "proposed_beta", "proposed_vx", "alpha", "beta", "vx"]
        + ["achieved_x", "achieved_y", "height", "reward", "goal_error", "event"]
    )

    def row(self) -> list:
        return (
            [self.episode, self.goal.x, self.goal.y]
            + list(self.observed_state)
            + list(self.proposed_action.as_array()) + list(self.action.as_array())
            + list(self.outcome_params.as_array())
            + [self.reward, self.goal_error, self.terminal_event]
        )


@dataclass
class TrainingResult:
    actor: MlpNet
    critic: MlpNet
    log: list
    buffer: ReplayBuffer
    config: AprgConfig
    env_config: E.EnvConfig

    @property
    def goal_errors(self) -> np.ndarray:
        return np.array([e.goal_error for e in self.log])


@dataclass
class Streams:
    """Independent random streams, one per consumer, all from one seed."""

    serve: np.random.Generator
    observe: np.random.Generator
    explore: np.random.Generator
    execute: np.random.Generator
    init: np.random.Generator
    batch: np.random.Generator

    @classmethod
    def from_seed(cls, seed) -> "Streams":
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        return cls(*(np.random.default_rng(c) for c in ss.spawn(6)))


@dataclass
class Agent:
    actor: MlpNet
    critic: MlpNet
    config: AprgConfig
    env_config: E.EnvConfig

    @classmethod
    def create(cls, config: AprgConfig, env_config: E.EnvConfig, rng) -> "Agent":
        actor = make_actor(config, rng)
        critic = make_critic(config, rng)
        return cls(actor, critic, config, env_config)

    def act(self, observed: np.ndarray, goal: E.Goal, post_optimize: bool = True) -> E.Action:
        """Greedy (noise-free) action for deployment."""
        cfg = self.env_config
        s, gn = cfg.normalize_state(observed), cfg.normalize_goal(goal)
        a = E.Action.from_normalized(self.actor(np.concatenate([s, gn])))
        if post_optimize:
            a = post_optimize_action(self.critic, s, a, goal, self.config, cfg.height_weight, gn)
        return a


def run_training(env_config: E.EnvConfig, config: AprgConfig, seed=0,
                 sink: Callable[[EpisodeLog], None] | None = None) -> TrainingResult:
    """Run one full training session, one serve per episode."""
    rs = Streams.from_seed(seed)
    agent = Agent.create(config, env_config, rs.init)
    actor, critic = agent.actor, agent.critic
    actor_opt = AdamState.for_net(actor, config.actor_lr, config.adam_beta1, config.adam_beta2)
    critic_opt = AdamState.for_net(critic, config.critic_lr, config.adam_beta1, config.adam_beta2)
    buffer = ReplayBuffer(env_config)
    w = env_config.height_weight
    log = []

    for e in range(config.total_episodes):
        ball = E.sample_serve(rs.serve, env_config)
        goal = env_config.goal(e)
        obs = E.observe(ball, env_config, rs.observe).as_vector()
        s, gn = env_config.normalize_state(obs), env_config.normalize_goal(goal)

        proposed = select_action(actor, s, gn, e, config, rs.explore)
        action = proposed
        if e >= config.warmup_episodes:
            action = post_optimize_action(critic, s, proposed, goal, config, w, gn)
        out = E.step(ball, action, goal, env_config, rs.execute)
        buffer.add(EpisodeRecord(obs, goal, action, out.reward_params, out.reward))

        entry = EpisodeLog(e, goal, obs, proposed, action, out.reward_params, out.reward,
                           out.goal_error, out.terminal_event.value)
        log.append(entry)
        if sink is not None:
            sink(entry)

        if e >= config.warmup_episodes:
            for _ in range(config.train_steps):
                batch = buffer.sample(rs.batch, config.batch_size)
                train_critic_batch(critic, batch, critic_opt)
                train_actor_batch(actor, critic, batch, actor_opt, w)

    return TrainingResult(actor, critic, log, buffer, config, env_config)


def window_mean(errors, start, stop) -> float:
    errors = np.asarray(errors)
    return float(np.mean(errors[start:stop])) if len(errors[start:stop]) else math.nan
