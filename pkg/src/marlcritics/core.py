"""Tabular Dec-POMDP model, fixed-memory histories, rollouts and returns.

Conventions
-----------
* Joint actions and joint observations are flattened row-major over agents
  (agent 0 is the most significant digit).
* ``observation[s, a, o]`` is Pr(joint o | s, joint a) where ``s`` is the
  state in which the joint action was taken.
* Terminal states are absorbing, zero reward and never a decision point.
* An optional ``initial_observation[s, o]`` is emitted at episode start; it
  enters the history with the placeholder action ``NO_ACTION``.
* A history is a tuple of ``(action, observation)`` integer pairs, at most
  ``k`` long, newest last.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from .validation import (
    ModelValidationError,
    check_action,
    check_discount,
    check_random_state,
    check_shape,
    check_stochastic,
)

NO_ACTION = -1


def initial_histories(n_agents, k=0):
    """Empty history for every agent (``n_agents`` may also be a model)."""
    if k < 0:
        raise ValueError("memory k must be >= 0")
    if isinstance(n_agents, DecPomdpModel):
        n_agents = n_agents.n_agents
    return ((),) * n_agents


def append_step(history, action, observation, k):
    if k <= 0:
        return ()
    h = history + ((int(action), int(observation)),)
    return h[-k:] if len(h) > k else h


def append_joint(histories, joint_action, joint_observation, k):
    return tuple(
        append_step(h, a, o, k) for h, a, o in zip(histories, joint_action, joint_observation)
    )


@dataclass(eq=False)
class DecPomdpModel:
    """Explicit tabular Dec-POMDP.

    Arrays are indexed ``transition[s, a, s']``, ``observation[s, a, o]``,
    ``reward[s, a, s']`` with flat joint indices ``a`` and ``o``.
    """

    n_actions: tuple
    n_observations: tuple
    initial: np.ndarray
    transition: np.ndarray
    observation: np.ndarray
    reward: np.ndarray
    gamma: float = 0.95
    terminal: np.ndarray = None
    initial_observation: np.ndarray = None
    horizon: int = None
    name: str = "model"
    state_names: list = field(default=None, repr=False)
    action_names: list = field(default=None, repr=False)

    def __post_init__(self):
        self.n_actions = tuple(int(n) for n in self.n_actions)
        self.n_observations = tuple(int(n) for n in self.n_observations)
        self.initial = np.asarray(self.initial, dtype=float)
        self.transition = np.asarray(self.transition, dtype=float)
        self.observation = np.asarray(self.observation, dtype=float)
        self.reward = np.asarray(self.reward, dtype=float)
        if self.terminal is None:
            self.terminal = np.zeros(len(self.initial), dtype=bool)
        self.terminal = np.asarray(self.terminal, dtype=bool)
        if self.initial_observation is not None:
            self.initial_observation = np.asarray(self.initial_observation, dtype=float)
        self.validate()

    # dimensions -------------------------------------------------------
    @property
    def n_agents(self):
        return len(self.n_actions)

    @property
    def n_states(self):
        return len(self.initial)

    @property
    def n_joint_actions(self):
        return int(np.prod(self.n_actions))

    @property
    def n_joint_observations(self):
        return int(np.prod(self.n_observations))

    def joint_action(self, index):
        return tuple(int(a) for a in np.unravel_index(index, self.n_actions))

    def joint_action_index(self, actions):
        return int(np.ravel_multi_index(tuple(actions), self.n_actions))

    def joint_observation(self, index):
        return tuple(int(o) for o in np.unravel_index(index, self.n_observations))

    def joint_observation_index(self, observations):
        return int(np.ravel_multi_index(tuple(observations), self.n_observations))

    def validate(self, tol=1e-12):
        S, A, O = self.n_states, self.n_joint_actions, self.n_joint_observations
        check_stochastic(self.initial, "initial", tol)
        check_shape(self.transition, (S, A, S), "transition")
        check_shape(self.observation, (S, A, O), "observation")
        check_shape(self.reward, (S, A, S), "reward")
        check_shape(self.terminal, (S,), "terminal")
        check_stochastic(self.transition, "transition", tol)
        check_stochastic(self.observation, "observation", tol)
        if not np.all(np.isfinite(self.reward)):
            raise ModelValidationError("reward contains non-finite entries")
        if self.initial_observation is not None:
            check_shape(self.initial_observation, (S, O), "initial_observation")
            check_stochastic(self.initial_observation, "initial_observation", tol)
        check_discount(self.gamma)
        if self.horizon is not None and self.horizon < 1:
            raise ModelValidationError("horizon must be positive or None")
        if np.any(self.initial[self.terminal] > 0):
            raise ModelValidationError("initial distribution puts mass on a terminal state")
        return self

    # JSON ---------------------------------------------------------------
    def to_dict(self):
        return {
            "name": self.name,
            "n_actions": list(self.n_actions),
            "n_observations": list(self.n_observations),
            "n_states": self.n_states,
            "gamma": self.gamma,
            "horizon": self.horizon,
            "initial": self.initial.tolist(),
            "terminal": self.terminal.astype(int).tolist(),
            "transition": self.transition.ravel().tolist(),
            "observation": self.observation.ravel().tolist(),
            "reward": self.reward.ravel().tolist(),
            "initial_observation": (
                None if self.initial_observation is None else self.initial_observation.ravel().tolist()
            ),
        }

    @classmethod
    def from_dict(cls, doc, tol=1e-9):
        S = int(doc["n_states"])
        n_actions = tuple(doc["n_actions"])
        n_obs = tuple(doc["n_observations"])
        A, O = int(np.prod(n_actions)), int(np.prod(n_obs))

        def arr(key, shape):
            flat = np.asarray(doc[key], dtype=float)
            if flat.size != int(np.prod(shape)):
                raise ModelValidationError(f"{key} has {flat.size} entries, expected {int(np.prod(shape))}")
            return flat.reshape(shape)

        init_obs = doc.get("initial_observation")
        raw = dict(
            n_actions=n_actions,
            n_observations=n_obs,
            initial=arr("initial", (S,)),
            transition=arr("transition", (S, A, S)),
            observation=arr("observation", (S, A, O)),
            reward=arr("reward", (S, A, S)),
            terminal=np.asarray(doc.get("terminal", [0] * S), dtype=bool),
            initial_observation=None if init_obs is None else arr("initial_observation", (S, O)),
        )
        # loose check first so files written with rounded floats are accepted
        for key in ("initial", "transition", "observation", "initial_observation"):
            if raw[key] is not None:
                raw[key] = check_stochastic(raw[key], key, tol)
                raw[key] = raw[key] / raw[key].sum(axis=-1, keepdims=True)
        return cls(gamma=float(doc["gamma"]), horizon=doc.get("horizon"), name=doc.get("name", "model"), **raw)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _sample(p, rng):
    return int(min(np.searchsorted(np.cumsum(p), rng.random(), side="right"), len(p) - 1))


def sample_initial(model, rng):
    """Draw s0 and, if the model has one, the initial joint observation."""
    s = _sample(model.initial, rng)
    if model.initial_observation is None:
        return s, None
    return s, model.joint_observation(_sample(model.initial_observation[s], rng))


def step(model, state, joint_action, rng):
    """One environment transition: ``(next_state, joint_observation, reward)``."""
    a = model.joint_action_index(joint_action) if not np.isscalar(joint_action) else int(joint_action)
    s_next = _sample(model.transition[state, a], rng)
    o = model.joint_observation(_sample(model.observation[state, a], rng))
    return s_next, o, float(model.reward[state, a, s_next])


@dataclass(frozen=True)
class Step:
    state: int
    histories: tuple
    joint_action: tuple
    reward: float
    next_state: int
    joint_observation: tuple


@dataclass
class Trajectory:
    steps: list
    seed: object = None
    terminated: bool = False

    @property
    def length(self):
        return len(self.steps)

    @property
    def rewards(self):
        return [st.reward for st in self.steps]


def rollout(model, policies, k, max_steps=None, rng=None):
    """Run one episode with per-agent ``policies`` (objects with ``act``)."""
    seed = rng if not isinstance(rng, np.random.Generator) else None
    rng = check_random_state(rng)
    if max_steps is None:
        max_steps = model.horizon if model.horizon is not None else 10_000
    steps = []
    if max_steps <= 0:
        return Trajectory(steps, seed)
    s, o0 = sample_initial(model, rng)
    hist = initial_histories(model.n_agents, k)
    if o0 is not None:
        hist = append_joint(hist, (NO_ACTION,) * model.n_agents, o0, k)
    terminated = False
    for _ in range(max_steps):
        ja = tuple(
            check_action(pol.act(h, rng), n, i)
            for i, (pol, h, n) in enumerate(zip(policies, hist, model.n_actions))
        )
        s_next, o, r = step(model, s, ja, rng)
        steps.append(Step(s, hist, ja, r, s_next, o))
        hist = append_joint(hist, ja, o, k)
        s = s_next
        if model.terminal[s]:
            terminated = True
            break
    return Trajectory(steps, seed, terminated)


def discounted_return(trajectory, gamma):
    """sum_t gamma^t r_t with the first reward undiscounted."""
    rewards = trajectory.rewards if isinstance(trajectory, Trajectory) else list(trajectory)
    g = 0.0
    for r in reversed(rewards):
        g = r + gamma * g
    return g


class GenerativeEnv:
    """Step-function environment interface used by the learners.

    ``reset`` returns the initial joint observation (or ``None`` when agents
    observe nothing before acting); ``step`` returns
    ``(joint_observation, team_reward, done)``.
    """

    n_agents = 2
    n_actions = ()
    n_observations = ()
    gamma = 0.95
    horizon = 100
    name = "env"

    def reset(self, rng):
        raise NotImplementedError

    def step(self, joint_action, rng):
        raise NotImplementedError


class ModelEnv(GenerativeEnv):
    """Generative view of an explicit ``DecPomdpModel``."""

    def __init__(self, model, horizon=None):
        self.model = model
        self.n_agents = model.n_agents
        self.n_actions = model.n_actions
        self.n_observations = model.n_observations
        self.gamma = model.gamma
        self.horizon = horizon or model.horizon or 1000
        self.name = model.name
        self.state = None
        # cumulative tables for fast sampling
        self._T = np.cumsum(model.transition, axis=-1)
        self._O = np.cumsum(model.observation, axis=-1)
        self._strides = [int(np.prod(model.n_actions[i + 1:])) for i in range(model.n_agents)]
        self._obs_cache = [model.joint_observation(o) for o in range(model.n_joint_observations)]

    def reset(self, rng):
        self.state, o0 = sample_initial(self.model, rng)
        return o0

    def step(self, joint_action, rng):
        s = self.state
        a = 0
        for ai, st in zip(joint_action, self._strides):
            a += ai * st
        row = self._T[s, a]
        s2 = min(int(np.searchsorted(row, rng.random(), side="right")), len(row) - 1)
        orow = self._O[s, a]
        o = min(int(np.searchsorted(orow, rng.random(), side="right")), len(orow) - 1)
        r = float(self.model.reward[s, a, s2])
        self.state = s2
        return self._obs_cache[o], r, bool(self.model.terminal[s2])
