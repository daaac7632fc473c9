"""Sampling-based actor-critic learners: JAC, IAC and IACC.

* **JAC**: one softmax actor over joint actions keyed by the joint history,
  one critic over (joint history, joint action).
* **IAC**: per-agent actors, per-agent critics over (own history, own action).
* **IACC**: per-agent actors sharing one critic over (joint history, joint action).

Each update collects a batch of complete rollouts with the current policies,
takes the actor step using the current critic (one gradient record per
rollout), then runs SARSA-style TD(0) over every transition of the batch.
"""
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .core import NO_ACTION, ModelEnv, append_joint, initial_histories
from .policies import LOGIT_CLIP, SoftmaxPolicy
from .validation import ConfigurationError, check_is_fitted, check_positive, check_random_state

ALGORITHMS = ("IAC", "IACC", "JAC")
CRITIC_MODES = {"IAC": "decentral", "IACC": "central", "JAC": "joint"}


@dataclass
class TrainConfig:
    algorithm: str = "IAC"
    actor_step: float = 0.01
    critic_schedule: str = "visit"  # "visit" (1/n) or "constant"
    critic_step: float = 0.1  # used by the constant schedule
    batch_size: int = 64
    k: int = 1
    n_updates: int = 500
    max_env_steps: int = None  # optional cap on total environment steps
    eval_every: int = 10
    eval_episodes: int = 0  # 0: report the batch's own on-policy returns
    discounted_gradient: bool = True
    critic_init: float = 0.0
    logit_clip: float = LOGIT_CLIP
    record_gradients: bool = False
    max_steps: int = None  # per-episode cap, defaults to env.horizon
    seed: int = None

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.critic_schedule not in ("visit", "constant"):
            raise ConfigurationError(f"unknown critic schedule {self.critic_schedule!r}")
        # a zero actor step freezes the policies (critic evaluation only)
        check_positive(self.actor_step, "actor_step", allow_zero=True)
        check_positive(self.critic_step, "critic_step")
        check_positive(self.batch_size, "batch_size")
        check_positive(self.n_updates, "n_updates")
        check_positive(self.eval_every, "eval_every")
        check_positive(self.k, "k", allow_zero=True)
        return self

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# critics


class CriticTable:
    """Tabular Q over hashable keys with a per-key visit count.

    ``mode`` is ``"central"``/``"joint"`` (keys are (joint history, joint
    action)) or ``"decentral"`` with ``agent`` set (keys are (own history,
    own action)).
    """

    def __init__(self, mode, agent=None, schedule="visit", step=0.1, init=0.0):
        if mode not in ("central", "decentral", "joint"):
            raise ConfigurationError(f"unknown critic mode {mode!r}")
        self.mode = mode
        self.agent = agent
        self.schedule = schedule
        self.step = step
        self.init = float(init)
        self.q = {}
        self.visits = {}

    def key(self, histories, joint_action):
        if self.mode == "decentral":
            return histories[self.agent], joint_action[self.agent]
        return histories, joint_action

    def value(self, key):
        return self.q.get(key, self.init)

    def alpha(self, key):
        if self.schedule == "visit":
            return 1.0 / self.visits.get(key, 1)
        return self.step

    def update(self, key, reward, next_key, gamma, alpha=None):
        """One TD(0) step; ``next_key=None`` means no bootstrap (terminal or cut)."""
        n = self.visits.get(key, 0) + 1
        self.visits[key] = n
        if alpha is None:
            alpha = 1.0 / n if self.schedule == "visit" else self.step
        target = reward if next_key is None else reward + gamma * self.q.get(next_key, self.init)
        q = self.q.get(key, self.init)
        self.q[key] = q + alpha * (target - q)
        return self.q[key]

    def as_dict(self):
        return dict(self.q)


def critic_update(critic, transition, alpha, gamma):
    """Apply ``Q(key) += alpha * (target - Q(key))`` for ``(key, reward, next_key)``."""
    key, reward, next_key = transition
    critic.update(key, reward, next_key, gamma, alpha)
    return critic


# ---------------------------------------------------------------------------
# rollouts and gradients


@dataclass
class Rollout:
    histories: list  # per step: tuple of per-agent histories
    actions: list  # per step: joint action tuple
    rewards: list
    terminated: bool

    @property
    def ret(self):
        return float(sum(self.rewards))

    def discounted(self, gamma):
        g = 0.0
        for r in reversed(self.rewards):
            g = r + gamma * g
        return g


@dataclass
class GradientRecord:
    run: int
    update: int
    agent: int
    indices: np.ndarray
    values: np.ndarray
    ret: float
    actions: tuple = ()  # the agent's own actions in the rollout

    def dense(self, n_params):
        out = np.zeros(n_params)
        np.add.at(out, self.indices, self.values)
        return out


@dataclass
class LearningCurve:
    update: list = field(default_factory=list)
    env_steps: list = field(default_factory=list)
    ret: list = field(default_factory=list)
    discounted: list = field(default_factory=list)

    def append(self, update, steps, ret, disc):
        self.update.append(update)
        self.env_steps.append(steps)
        self.ret.append(ret)
        self.discounted.append(disc)

    def rows(self, run=0):
        """Long-format rows ``(run, step, metric, value)`` keyed by update index."""
        out = []
        for u, s, r, d in zip(self.update, self.env_steps, self.ret, self.discounted):
            out.append((run, u, "return", r))
            out.append((run, u, "discounted_return", d))
            out.append((run, u, "env_steps", s))
        return out


class JointActor:
    """Softmax over flat joint actions, keyed by the joint history."""

    def __init__(self, n_actions, clip=LOGIT_CLIP):
        self.agent_actions = tuple(n_actions)
        self.policy = SoftmaxPolicy(int(np.prod(n_actions)), clip)
        self.decode = [tuple(int(x) for x in np.unravel_index(a, n_actions)) for a in range(self.policy.n_actions)]
        self.encode = {ja: a for a, ja in enumerate(self.decode)}

    def act(self, histories, rng):
        return self.decode[self.policy.act(histories, rng)]


def collect_rollout(env, actors, k, max_steps, rng, joint=False):
    n = env.n_agents
    obs = env.reset(rng)
    hist = initial_histories(n, k)
    if obs is not None and k > 0:
        hist = append_joint(hist, (NO_ACTION,) * n, obs, k)
    H, A, R = [], [], []
    done = False
    for _ in range(max_steps):
        if joint:
            ja = actors.act(hist, rng)
        else:
            ja = tuple(pol.act(h, rng) for pol, h in zip(actors, hist))
        obs, r, done = env.step(ja, rng)
        H.append(hist)
        A.append(ja)
        R.append(r)
        if done:
            break
        if k > 0:
            hist = append_joint(hist, ja, obs, k)
    return Rollout(H, A, R, done)


def rollout_gradient(policy, hist_seq, act_seq, qhat, gamma, discounted=True):
    """sum_t gamma^t grad log pi(a_t | h_t) * qhat_t as a sparse (index, value) pair."""
    acc = {}
    w = 1.0
    for h, a, q in zip(hist_seq, act_seq, qhat):
        g = policy.grad_log(h, a)
        g *= w * q
        prev = acc.get(h)
        acc[h] = g if prev is None else prev + g
        if discounted:
            w *= gamma
    n = policy.n_actions
    idx, vals = [], []
    for h, g in acc.items():
        base = policy.history_id(h) * n
        idx.extend(range(base, base + n))
        vals.extend(g)
    return acc, np.asarray(idx, dtype=int), np.asarray(vals, dtype=float)


def actor_update(policies, critics, batch, config, gamma, run=0, update=0):
    """One batched actor step; returns the gradient records (one per rollout and agent).

    ``policies``/``critics`` follow the algorithm: a ``JointActor`` and one
    joint critic for JAC, per-agent policies with one shared critic (IACC) or
    one critic per agent (IAC).
    """
    alg = config.algorithm
    records = []
    if alg == "JAC":
        actors = [policies.policy]
    else:
        actors = policies
    totals = [dict() for _ in actors]
    for ro in batch:
        for i, pol in enumerate(actors):
            if alg == "JAC":
                critic = critics[0]
                hs = ro.histories
                acts = [policies.encode[ja] for ja in ro.actions]
            else:
                critic = critics[i] if alg == "IAC" else critics[0]
                hs = [h[i] for h in ro.histories]
                acts = [ja[i] for ja in ro.actions]
            qhat = [critic.value(critic.key(h, ja)) for h, ja in zip(ro.histories, ro.actions)]
            acc, idx, vals = rollout_gradient(pol, hs, acts, qhat, gamma, config.discounted_gradient)
            for h, g in acc.items():
                prev = totals[i].get(h)
                totals[i][h] = g if prev is None else prev + g
            if config.record_gradients:
                records.append(GradientRecord(run, update, i, idx, vals, ro.ret, tuple(acts)))
    if config.actor_step > 0:
        scale = config.actor_step / len(batch)
        for pol, tot in zip(actors, totals):
            for h, g in tot.items():
                pol.apply_gradient(h, scale * g)
    return records


def critics_update(critics, batch, config, gamma):
    for ro in batch:
        T = len(ro.rewards)
        for critic in critics:
            keys = [critic.key(h, ja) for h, ja in zip(ro.histories, ro.actions)]
            for t in range(T):
                # terminal and time-limit cuts both bootstrap 0
                nxt = keys[t + 1] if t + 1 < T else None
                critic.update(keys[t], ro.rewards[t], nxt, gamma)


def make_learner(env, config):
    alg = config.algorithm
    sched = dict(schedule=config.critic_schedule, step=config.critic_step, init=config.critic_init)
    if alg == "JAC":
        actors = JointActor(env.n_actions, config.logit_clip)
        critics = [CriticTable("joint", **sched)]
    elif alg == "IACC":
        actors = [SoftmaxPolicy(n, config.logit_clip) for n in env.n_actions]
        critics = [CriticTable("central", **sched)]
    else:
        actors = [SoftmaxPolicy(n, config.logit_clip) for n in env.n_actions]
        critics = [CriticTable("decentral", agent=i, **sched) for i in range(env.n_agents)]
    return actors, critics


@dataclass
class TrainResult:
    curve: LearningCurve
    records: list
    policies: object
    critics: list
    config: TrainConfig
    env_steps: int = 0
    aborted: bool = False
    diagnostic: str = ""


def train(env, config, rng=None, run=0):
    """Run one training job; never raises on numerical blow-up (see ``aborted``)."""
    config.validate()
    if not hasattr(env, "step"):
        env = ModelEnv(env)
    rng = check_random_state(config.seed if rng is None else rng)
    gamma = env.gamma
    max_steps = config.max_steps or env.horizon
    joint = config.algorithm == "JAC"
    actors, critics = make_learner(env, config)
    curve = LearningCurve()
    records = []
    steps = 0
    result = TrainResult(curve, records, actors, critics, config)
    for u in range(config.n_updates):
        batch = [collect_rollout(env, actors, config.k, max_steps, rng, joint) for _ in range(config.batch_size)]
        steps += sum(len(ro.rewards) for ro in batch)
        if u % config.eval_every == 0 or u == config.n_updates - 1:
            if config.eval_episodes > 0:
                ev = [collect_rollout(env, actors, config.k, max_steps, rng, joint) for _ in range(config.eval_episodes)]
            else:
                ev = batch
            curve.append(u, steps, float(np.mean([ro.ret for ro in ev])), float(np.mean([ro.discounted(gamma) for ro in ev])))
        try:
            with np.errstate(over="raise", invalid="raise"):
                records.extend(actor_update(actors, critics, batch, config, gamma, run, u))
        except FloatingPointError as exc:
            result.aborted = True
            result.diagnostic = f"update {u}: {exc}"
            break
        critics_update(critics, batch, config, gamma)
        if config.max_env_steps is not None and steps >= config.max_env_steps:
            break
    result.env_steps = steps
    return result


def evaluate(env, policies, k, n_episodes, rng, joint=False, max_steps=None):
    """Mean undiscounted and discounted return of on-policy rollouts."""
    if not hasattr(env, "step"):
        env = ModelEnv(env)
    rng = check_random_state(rng)
    rollouts = [collect_rollout(env, policies, k, max_steps or env.horizon, rng, joint) for _ in range(n_episodes)]
    return (
        float(np.mean([ro.ret for ro in rollouts])),
        float(np.mean([ro.discounted(env.gamma) for ro in rollouts])),
        rollouts,
    )


# ---------------------------------------------------------------------------
# per-rollout gradient variance


def gradient_matrix(records, n_params=None):
    if not records:
        return np.zeros((0, n_params or 0))
    if n_params is None:
        n_params = 1 + max((int(r.indices.max()) for r in records if r.indices.size), default=-1)
    out = np.zeros((len(records), n_params))
    for row, rec in zip(out, records):
        np.add.at(row, rec.indices, rec.values)
    return out


def per_rollout_gradient_variance(records, window, n_params=None, action=None):
    """Sliding-window unbiased variance of per-rollout gradients.

    Row ``t`` covers the records ``max(0, t - window + 1) .. t``; rows whose
    window holds fewer than two records are NaN. ``action`` keeps only
    rollouts whose first own action equals it.
    """
    if window < 2:
        raise ConfigurationError("window must be at least 2")
    if action is not None:
        records = [r for r in records if r.actions and r.actions[0] == action]
    G = gradient_matrix(records, n_params)
    n, P = G.shape
    out = np.full((n, P), np.nan)
    if n == 0:
        return out
    c1 = np.vstack([np.zeros(P), np.cumsum(G, axis=0)])
    c2 = np.vstack([np.zeros(P), np.cumsum(G * G, axis=0)])
    for t in range(n):
        lo = max(0, t - window + 1)
        m = t + 1 - lo
        if m < 2:
            continue
        s1 = c1[t + 1] - c1[lo]
        s2 = c2[t + 1] - c2[lo]
        var = (s2 - s1 * s1 / m) / (m - 1)
        out[t] = np.where(np.abs(var) < 1e-12, 0.0, var)
    return out


def variance_by_action(variance, n_actions):
    """Sum per-parameter variances over history blocks, one column per action."""
    n, P = variance.shape
    blocks = P // n_actions
    return variance[:, : blocks * n_actions].reshape(n, blocks, n_actions).sum(axis=1)


# ---------------------------------------------------------------------------
# frozen-policy gradient estimator (checks against the exact engine)


def sampled_gradients(model, policies, agent, critic, n_samples, rng, k):
    """Single-step gradient samples grad log pi_i(a_i|h_i) * Q at every
    decision step of back-to-back episodes with frozen ``policies``.

    ``critic`` is an exact critic table (central or decentral). Returns the
    ``[n, L_i * A_i]`` sample matrix (parameters laid out as in the exact
    engine) and the episode id of every sample, for clustered errors.
    """
    space = critic.space
    rng = check_random_state(rng)
    n_loc = len(space.local[agent])
    Ai = model.n_actions[agent]
    env = ModelEnv(model)
    cap = model.horizon or 10_000
    out = np.zeros((n_samples, n_loc * Ai))
    episode = np.zeros(n_samples, dtype=int)
    i, e = 0, 0
    while i < n_samples:
        ro = collect_rollout(env, policies, k, cap, rng)
        for h, ja in zip(ro.histories, ro.actions):
            if i >= n_samples:
                break
            if critic.mode == "central":
                q = critic.values[space.joint_id(h), model.joint_action_index(ja)]
            else:
                q = critic.values[space.local_id(agent, h[agent]), ja[agent]]
            l = space.local_id(agent, h[agent])
            p = np.asarray(policies[agent].probs(h[agent]))
            g = -p * q
            g[ja[agent]] += q
            out[i, l * Ai:(l + 1) * Ai] = g
            episode[i] = e
            i += 1
        e += 1
    return out, episode


# ---------------------------------------------------------------------------
# estimator facade


class ActorCritic(BaseEstimator):
    """Scikit-learn style wrapper around :func:`train`.

    ``fit`` takes an environment (explicit model or generative env) in place
    of ``X``. ``predict_proba`` maps a tuple of per-agent histories to the
    per-agent action distributions (the joint distribution for JAC).
    """

    def __init__(
        self,
        algorithm="IAC",
        actor_step=0.01,
        critic_schedule="visit",
        critic_step=0.1,
        batch_size=64,
        k=1,
        n_updates=500,
        eval_every=10,
        eval_episodes=0,
        discounted_gradient=True,
        critic_init=0.0,
        record_gradients=False,
        random_state=None,
    ):
        self.algorithm = algorithm
        self.actor_step = actor_step
        self.critic_schedule = critic_schedule
        self.critic_step = critic_step
        self.batch_size = batch_size
        self.k = k
        self.n_updates = n_updates
        self.eval_every = eval_every
        self.eval_episodes = eval_episodes
        self.discounted_gradient = discounted_gradient
        self.critic_init = critic_init
        self.record_gradients = record_gradients
        self.random_state = random_state

    def _config(self):
        params = self.get_params()
        seed = params.pop("random_state")
        return TrainConfig(seed=seed, **params)

    def fit(self, env, y=None):
        if not hasattr(env, "step"):
            env = ModelEnv(env)
        self.env_ = env
        self.result_ = train(env, self._config())
        self.policies_ = self.result_.policies
        self.critics_ = self.result_.critics
        self.curve_ = self.result_.curve
        self.records_ = self.result_.records
        return self

    def predict_proba(self, histories):
        check_is_fitted(self, "policies_")
        histories = tuple(histories)
        if self.algorithm == "JAC":
            return self.policies_.policy.probs(histories).copy()
        return [pol.probs(h).copy() for pol, h in zip(self.policies_, histories)]

    def predict(self, histories):
        """Most likely action per agent (the argmax joint action for JAC)."""
        probs = self.predict_proba(histories)
        if self.algorithm == "JAC":
            return self.policies_.decode[int(np.argmax(probs))]
        return tuple(int(np.argmax(p)) for p in probs)

    def score(self, env=None, n_episodes=200, random_state=0):
        """Mean undiscounted on-policy return."""
        check_is_fitted(self, "policies_")
        env = self.env_ if env is None else env
        ret, _, _ = evaluate(env, self.policies_, self.k, n_episodes, random_state, joint=self.algorithm == "JAC")
        return ret
