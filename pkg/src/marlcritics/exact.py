"""Exact analysis of fixed policies on explicit Dec-POMDPs.

Everything here is an exhaustive weighted sum over the reachable
``(joint history, state)`` decision nodes: no sampling. The pieces are

* :func:`enumerate_histories` - reachable nodes for memory ``k``;
* :func:`steady_state` - stationary Pr(h, s) of the policy-induced chain;
* :class:`BellmanSystem` - centralized and per-agent decentralized
  one-step backups, weighted by the stationary Pr(s | h) and Pr(h_j | h_i);
* :func:`fixed_point` - plain operator iteration;
* :func:`gradient_moments` - mean and per-dimension variance of the
  single-sample actor gradient under either critic;
* :func:`mav` / :func:`mov` - the two variance sources of the centralized
  value seen from one agent.
"""
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from sklearn.base import BaseEstimator

from .core import NO_ACTION, append_joint, initial_histories
from .policies import uniform_policies
from .validation import check_discount, check_is_fitted

DENSE_LIMIT = 4096


class SteadyStateError(np.linalg.LinAlgError):
    def __init__(self, msg, condition=None):
        super().__init__(msg)
        self.condition = condition


class NonConvergenceError(RuntimeError):
    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


class MissingPosteriorError(KeyError):
    pass


# ---------------------------------------------------------------------------
# history space


@dataclass
class HistorySpace:
    model: object
    k: int
    joint: list
    joint_index: dict
    local: list
    local_index: list
    local_of: np.ndarray  # [H, n_agents]
    nodes: list  # (joint history id, state)
    node_index: dict
    start: np.ndarray  # initial node distribution
    next_joint: np.ndarray  # [H, A, O], -1 where no successor node exists
    action_of: np.ndarray  # [A, n_agents]
    obs_of: np.ndarray  # [O, n_agents]
    truncated: bool = False  # some reachable history dropped its oldest pair
    _rows: np.ndarray = field(repr=False, default=None)
    _cols: np.ndarray = field(repr=False, default=None)
    _vals: np.ndarray = field(repr=False, default=None)

    @property
    def n_joint(self):
        return len(self.joint)

    @property
    def n_nodes(self):
        return len(self.nodes)

    def local_id(self, agent, history):
        return self.local_index[agent][history]

    def joint_id(self, histories):
        return self.joint_index[tuple(histories)]


def enumerate_histories(model, k):
    """Breadth-first enumeration of decision nodes reachable under any
    full-support policy."""
    n = model.n_agents
    A, O = model.n_joint_actions, model.n_joint_observations
    action_of = np.array([model.joint_action(a) for a in range(A)], dtype=int).reshape(A, n)
    obs_of = np.array([model.joint_observation(o) for o in range(O)], dtype=int).reshape(O, n)
    joint, joint_index = [], {}
    nodes, node_index = [], {}
    start = {}

    def add(h, s):
        if h not in joint_index:
            joint_index[h] = len(joint)
            joint.append(h)
        key = (joint_index[h], s)
        if key not in node_index:
            node_index[key] = len(nodes)
            nodes.append(key)
        return node_index[key]

    h0 = initial_histories(n, k)
    for s in np.flatnonzero(model.initial > 0):
        if model.initial_observation is None:
            i = add(h0, int(s))
            start[i] = start.get(i, 0.0) + model.initial[s]
        else:
            for o in np.flatnonzero(model.initial_observation[s] > 0):
                h = append_joint(h0, (NO_ACTION,) * n, obs_of[o], k)
                i = add(h, int(s))
                start[i] = start.get(i, 0.0) + model.initial[s] * model.initial_observation[s, o]

    rows, cols, vals = [], [], []
    truncated = False
    frontier = 0
    while frontier < len(nodes):
        hid, s = nodes[frontier]
        h = joint[hid]
        for a in range(A):
            t_row = model.transition[s, a]
            o_row = model.observation[s, a]
            live = [s2 for s2 in np.flatnonzero(t_row > 0) if not model.terminal[s2]]
            if not live:
                continue
            if k > 0 and len(h[0]) >= k:
                truncated = True
            for o in np.flatnonzero(o_row > 0):
                h2 = append_joint(h, action_of[a], obs_of[o], k)
                for s2 in live:
                    j = add(h2, int(s2))
                    rows.append(frontier * A + a)
                    cols.append(j)
                    vals.append(t_row[s2] * o_row[o])
        frontier += 1

    local, local_index = [], []
    local_of = np.zeros((len(joint), n), dtype=int)
    for i in range(n):
        idx = {}
        for hid, h in enumerate(joint):
            if h[i] not in idx:
                idx[h[i]] = len(idx)
            local_of[hid, i] = idx[h[i]]
        local_index.append(idx)
        local.append(list(idx))

    H = len(joint)
    next_joint = np.full((H, A, O), -1, dtype=int)
    for hid, h in enumerate(joint):
        for a in range(A):
            for o in range(O):
                h2 = append_joint(h, action_of[a], obs_of[o], k)
                next_joint[hid, a, o] = joint_index.get(h2, -1)

    start_vec = np.zeros(len(nodes))
    for i, p in start.items():
        start_vec[i] = p
    return HistorySpace(
        model=model,
        k=k,
        joint=joint,
        joint_index=joint_index,
        local=local,
        local_index=local_index,
        local_of=local_of,
        nodes=nodes,
        node_index=node_index,
        start=start_vec,
        next_joint=next_joint,
        action_of=action_of,
        obs_of=obs_of,
        truncated=truncated,
        _rows=np.asarray(rows, dtype=int),
        _cols=np.asarray(cols, dtype=int),
        _vals=np.asarray(vals, dtype=float),
    )


def policy_tables(space, policies):
    """Per-agent ``[L_i, A_i]`` probability tables and the joint ``[H, A]`` table."""
    local = []
    for i, pol in enumerate(policies):
        tab = np.array([pol.probs(h) for h in space.local[i]], dtype=float)
        tab = tab.reshape(len(space.local[i]), space.model.n_actions[i])
        local.append(tab)
    joint = np.ones((space.n_joint, len(space.action_of)))
    for i, tab in enumerate(local):
        joint *= tab[space.local_of[:, i]][:, space.action_of[:, i]]
    return local, joint


# ---------------------------------------------------------------------------
# steady state


@dataclass
class SteadyStateDistribution:
    space: HistorySpace
    joint: np.ndarray  # Pr(h, s), [H, S]
    visits: np.ndarray  # per-episode expected visits eta(h, s) (or stationary mass)
    condition: float = float("nan")

    @property
    def p_history(self):
        return self.joint.sum(axis=1)

    @property
    def p_state(self):
        return self.joint.sum(axis=0)

    @property
    def p_state_given_history(self):
        ph = self.p_history
        out = np.zeros_like(self.joint)
        ok = ph > 0
        out[ok] = self.joint[ok] / ph[ok, None]
        return out

    def p_local(self, agent):
        return np.bincount(
            self.space.local_of[:, agent],
            weights=self.p_history,
            minlength=len(self.space.local[agent]),
        )

    def teammate_conditional(self, agent):
        """Pr(h_{-i} | h_i) laid out over joint history ids."""
        pl = self.p_local(agent)[self.space.local_of[:, agent]]
        out = np.zeros(self.space.n_joint)
        ok = pl > 0
        out[ok] = self.p_history[ok] / pl[ok]
        return out

    def prob(self, histories, state=None):
        hid = self.space.joint_id(histories)
        return self.p_history[hid] if state is None else self.joint[hid, state]


def chain_matrix(space, joint_pi):
    """Node-to-node transition matrix (sub-stochastic: terminal exits dropped)."""
    A = joint_pi.shape[1]
    node_h = np.array([h for h, _ in space.nodes], dtype=int)
    w = joint_pi[node_h].ravel()[space._rows] * space._vals
    N = space.n_nodes
    return sp.csr_matrix((w, (space._rows // A, space._cols)), shape=(N, N))


def steady_state(model, policies, k, space=None, cond_limit=1e12):
    """Stationary Pr(h, s) over decision nodes.

    Episodic chains solve the per-episode visit equations
    ``eta = start + P^T eta`` and normalise (equivalent to restarting from
    the initial distribution at termination). Chains with no exit solve
    ``mu = P^T mu`` with a normalisation row.
    """
    space = space or enumerate_histories(model, k)
    _, joint_pi = policy_tables(space, policies)
    P = chain_matrix(space, joint_pi)
    N = space.n_nodes
    exit_mass = 1.0 - np.asarray(P.sum(axis=1)).ravel()
    episodic = exit_mass.max() > 1e-14
    cond = float("nan")
    if N <= DENSE_LIMIT:
        M = np.eye(N) - P.T.toarray()
        if episodic:
            rhs = space.start.copy()
        else:
            M[-1, :] = 1.0
            rhs = np.zeros(N)
            rhs[-1] = 1.0
        cond = float(np.linalg.cond(M))
        if not np.isfinite(cond) or cond > cond_limit:
            raise SteadyStateError(f"steady-state system is ill-conditioned (cond={cond:.3g})", cond)
        eta = np.linalg.solve(M, rhs)
    else:
        M = (sp.identity(N, format="csr") - P.T).tolil()
        if episodic:
            rhs = space.start.copy()
        else:
            M[N - 1, :] = np.ones(N)
            rhs = np.zeros(N)
            rhs[-1] = 1.0
        eta = spla.spsolve(M.tocsc(), rhs)
        if not np.all(np.isfinite(eta)):
            raise SteadyStateError("sparse steady-state solve failed")
    eta = np.where(np.abs(eta) < 1e-15, 0.0, eta)
    if np.any(eta < -1e-9):
        raise SteadyStateError("steady-state solution has negative mass", cond)
    eta = np.clip(eta, 0.0, None)
    joint = np.zeros((space.n_joint, model.n_states))
    visits = np.zeros_like(joint)
    for n, (hid, s) in enumerate(space.nodes):
        visits[hid, s] = eta[n]
    joint = visits / visits.sum()
    return SteadyStateDistribution(space, joint, visits, cond)


# ---------------------------------------------------------------------------
# Bellman operators


class BellmanSystem:
    """Centralized and decentralized one-step backups for fixed policies.

    Centralized::

        Q'(h, a) = sum_s Pr(s|h) sum_s' T(s'|s,a) [R(s,a,s')
                   + g * [s' live] * sum_o O(o|s,a) sum_a' pi(a'|h') Q(h', a')]

    Decentralized (agent i) averages the same backup of its own value over
    Pr(h_j | h_i) pi_j(a_j | h_j), bootstrapping on Q_i(h_i', a_i').
    """

    def __init__(self, model, policies, steady):
        gamma = check_discount(model.gamma, strict=True)
        self.model = model
        self.gamma = gamma
        self.space = space = steady.space
        self.steady = steady
        self.pi_local, self.pi_joint = policy_tables(space, policies)
        post = steady.p_state_given_history  # [H, S]
        live = (~model.terminal).astype(float)
        rbar = np.einsum("sat,sat->sa", model.transition, model.reward)
        cont = model.transition @ live  # [S, A]
        self.rbar = post @ rbar  # [H, A]
        self.weight = np.einsum("hs,sa,sao->hao", post, cont, model.observation)
        self.next_joint = np.where(space.next_joint < 0, 0, space.next_joint)
        if np.any((self.weight > 0) & (space.next_joint < 0)):
            raise MissingPosteriorError("successor history with positive weight is not enumerated")
        self.n_agents = model.n_agents
        self._teammate = {}

    @property
    def shape_central(self):
        return self.pi_joint.shape

    def shape_local(self, agent):
        return self.pi_local[agent].shape

    def central(self, Q):
        V = (self.pi_joint * Q).sum(axis=1)
        return self.rbar + self.gamma * (self.weight * V[self.next_joint]).sum(axis=-1)

    def teammate_weight(self, agent):
        """Pr(h_{-i} | h_i) * prod_{j != i} pi_j(a_j | h_j), shape [H, A]."""
        w = self._teammate.get(agent)
        if w is None:
            sp_ = self.space
            w = np.ones_like(self.pi_joint)
            for j, tab in enumerate(self.pi_local):
                if j != agent:
                    w *= tab[sp_.local_of[:, j]][:, sp_.action_of[:, j]]
            w *= self.steady.teammate_conditional(agent)[:, None]
            self._teammate[agent] = w
        return w

    def aggregate(self, agent, X):
        """sum_{h in h_i} sum_{a with a_i} weight * X, shape [L_i, A_i]."""
        sp_ = self.space
        L, Ai = self.pi_local[agent].shape
        idx = sp_.local_of[:, agent][:, None] * Ai + sp_.action_of[:, agent][None, :]
        vals = self.teammate_weight(agent) * X
        return np.bincount(idx.ravel(), weights=vals.ravel(), minlength=L * Ai).reshape(L, Ai)

    def decentral(self, agent, Qi):
        Vi = (self.pi_local[agent] * Qi).sum(axis=1)
        nxt_local = self.space.local_of[self.next_joint, agent]
        Y = self.rbar + self.gamma * (self.weight * Vi[nxt_local]).sum(axis=-1)
        return self.aggregate(agent, Y)

    def marginalize(self, agent, Q_central):
        return self.aggregate(agent, Q_central)


def bellman_central_apply(model, policies, Q, steady):
    return BellmanSystem(model, policies, steady).central(np.asarray(Q, dtype=float))


def bellman_decentral_apply(model, policies, agent, Qi, steady):
    return BellmanSystem(model, policies, steady).decentral(agent, np.asarray(Qi, dtype=float))


# ---------------------------------------------------------------------------
# fixed points


@dataclass
class ExactCriticTable:
    mode: str  # "central" or "decentral"
    values: np.ndarray
    residual: float
    iterations: int
    agent: int = None
    space: HistorySpace = None

    def q(self, histories, action):
        """Look up a value by history (joint tuple or local) and action."""
        if self.mode == "central":
            hid = self.space.joint_id(histories)
            a = self.space.model.joint_action_index(action)
            return self.values[hid, a]
        return self.values[self.space.local_id(self.agent, histories), action]


def default_max_iter(gamma, tol):
    if gamma <= 0.0:
        return 100
    return 10 * math.ceil(math.log(tol) / math.log(gamma)) + 100


def fixed_point(operator, initial_Q, gamma, tol=1e-10, max_iter=None, mode="central", agent=None, space=None):
    """Iterate ``Q <- operator(Q)`` until the sup-norm change is <= ``tol``."""
    check_discount(gamma, strict=True)
    if max_iter is None:
        max_iter = default_max_iter(gamma, tol)
    Q = np.array(initial_Q, dtype=float)
    trace = []
    for it in range(max_iter + 1):
        Q2 = operator(Q)
        res = float(np.max(np.abs(Q2 - Q))) if Q.size else 0.0
        trace.append(res)
        if res <= tol:
            return ExactCriticTable(mode, Q2, res, it, agent, space)
        Q = Q2
    raise NonConvergenceError(f"no convergence after {max_iter} iterations (residual {trace[-1]:.3g})", trace)


def solve_central(system, tol=1e-10, max_iter=None, initial=None):
    Q0 = np.zeros(system.shape_central) if initial is None else initial
    return fixed_point(system.central, Q0, system.gamma, tol, max_iter, "central", None, system.space)


def solve_decentral(system, agent, tol=1e-10, max_iter=None, initial=None):
    Q0 = np.zeros(system.shape_local(agent)) if initial is None else initial
    return fixed_point(
        lambda Q: system.decentral(agent, Q), Q0, system.gamma, tol, max_iter, "decentral", agent, system.space
    )


def marginalize_central(Q_central, steady, policies, agent):
    """E_{h_j, a_j}[Q(h_i, h_j, a_i, a_j)] as a local table."""
    values = Q_central.values if isinstance(Q_central, ExactCriticTable) else Q_central
    system = BellmanSystem(steady.space.model, policies, steady)
    return system.marginalize(agent, values)


# ---------------------------------------------------------------------------
# gradients


@dataclass
class GradientMoments:
    """Moments of the single-sample gradient grad log pi_i(a_i|h_i) * Q.

    Arrays are laid out ``[local history, action]``; flatten for the
    parameter vector theta(h_i, a_i).
    """

    agent: int
    mode: str
    mean: np.ndarray
    second: np.ndarray
    mass: np.ndarray  # Pr(h_i) pi_i(a_i | h_i)
    value_mean: np.ndarray  # E[Q | h_i, a_i]
    value_spread: np.ndarray  # Var[Q | h_i, a_i]
    _m2: np.ndarray = field(repr=False, default=None)
    _pi: np.ndarray = field(repr=False, default=None)

    @property
    def variance(self):
        var = self.second - self.mean**2
        # cancellation can leave tiny negatives
        return np.where(np.abs(var) < 1e-12, 0.0, var)

    def covariance(self):
        """Full covariance matrix over the flattened parameters."""
        L, Ai = self.mean.shape
        P = L * Ai
        outer = np.zeros((P, P))
        eye = np.eye(Ai)
        for l in range(L):
            v = eye - self._pi[l][None, :]  # row a_i: onehot(a_i) - pi
            block = (v * self._m2[l][:, None]).T @ v
            outer[l * Ai:(l + 1) * Ai, l * Ai:(l + 1) * Ai] = block
        mu = self.mean.ravel()
        return outer - np.outer(mu, mu)


def _moments(agent, mode, m1, m2, mass, pi):
    Ai = pi.shape[1]
    eye = np.eye(Ai)
    v = eye[None, :, :] - pi[:, None, :]  # [L, a_i, b]
    mean = np.einsum("la,lab->lb", m1, v)
    second = np.einsum("la,lab->lb", m2, v**2)
    with np.errstate(invalid="ignore", divide="ignore"):
        vm = np.where(mass > 0, m1 / np.where(mass > 0, mass, 1.0), 0.0)
        spread = np.where(mass > 0, m2 / np.where(mass > 0, mass, 1.0) - vm**2, 0.0)
    spread = np.where(np.abs(spread) < 1e-12, 0.0, spread)
    return GradientMoments(agent, mode, mean, second, mass, vm, spread, m2, pi)


def gradient_moments(system, agent, critic_mode, Q):
    """Exact gradient moments for agent ``agent`` with a converged critic.

    ``Q`` is the centralized ``[H, A]`` table for ``critic_mode="central"``
    and agent i's ``[L_i, A_i]`` table for ``"decentral"``.
    """
    sp_ = system.space
    pi = system.pi_local[agent]
    L, Ai = pi.shape
    w = system.steady.p_history[:, None] * system.pi_joint
    idx = (sp_.local_of[:, agent][:, None] * Ai + sp_.action_of[:, agent][None, :]).ravel()
    mass = np.bincount(idx, weights=w.ravel(), minlength=L * Ai).reshape(L, Ai)
    if critic_mode == "central":
        m1 = np.bincount(idx, weights=(w * Q).ravel(), minlength=L * Ai).reshape(L, Ai)
        m2 = np.bincount(idx, weights=(w * Q**2).ravel(), minlength=L * Ai).reshape(L, Ai)
    elif critic_mode == "decentral":
        m1 = mass * Q
        m2 = mass * Q**2
    else:
        raise ValueError(f"unknown critic mode {critic_mode!r}")
    return _moments(agent, critic_mode, m1, m2, mass, pi)


def exact_policy_gradient(model, policies, agent, critic_mode, steady, tol=1e-10):
    system = BellmanSystem(model, policies, steady)
    if critic_mode == "central":
        Q = solve_central(system, tol).values
    else:
        Q = solve_decentral(system, agent, tol).values
    return gradient_moments(system, agent, critic_mode, Q).mean


def gradient_variance(model, policies, agent, critic_mode, steady, tol=1e-10):
    system = BellmanSystem(model, policies, steady)
    if critic_mode == "central":
        Q = solve_central(system, tol).values
    else:
        Q = solve_decentral(system, agent, tol).values
    return gradient_moments(system, agent, critic_mode, Q)


# ---------------------------------------------------------------------------
# variance sources


def _as_table(Q):
    return (Q.values, Q.space) if isinstance(Q, ExactCriticTable) else (Q, None)


def mav(Q_central, policies, histories, action, agent=0, space=None):
    """Variance of Q(h, a_i, a_j) over teammates' actions a_j ~ pi_j(.|h_j)."""
    values, sp0 = _as_table(Q_central)
    space = space or sp0
    hid = space.joint_id(histories)
    model = space.model
    p = np.ones(model.n_joint_actions)
    for j, pol in enumerate(policies):
        if j != agent:
            p *= np.asarray(pol.probs(histories[j]))[space.action_of[:, j]]
    p = p * (space.action_of[:, agent] == action)
    q = values[hid]
    m = p @ q
    return float(max(p @ q**2 - m * m, 0.0))


def mov(Q_central, steady, local_history, joint_action, agent=0):
    """Variance of Q(h_i, h_j, a) over h_j ~ Pr(h_j | h_i), joint action fixed."""
    values, _ = _as_table(Q_central)
    space = steady.space
    l = space.local_id(agent, local_history)
    a = space.model.joint_action_index(joint_action)
    mask = space.local_of[:, agent] == l
    w = steady.teammate_conditional(agent)[mask]
    q = values[mask, a]
    m = w @ q
    return float(max(w @ q**2 - m * m, 0.0))


# ---------------------------------------------------------------------------
# contraction


@dataclass
class ContractionReport:
    worst_ratio: float
    n_pairs: int
    gamma: float
    ok: bool
    offending: tuple = None


def contraction_check(operator, gamma, shape, num_random_pairs=100, rng=None, scale=100.0, slack=1e-10):
    """Check ||B Q1 - B Q2|| <= gamma ||Q1 - Q2|| + slack on random pairs."""
    rng = np.random.default_rng(rng)
    worst, offending = 0.0, None
    for _ in range(num_random_pairs):
        Q1 = rng.uniform(-scale, scale, size=shape)
        Q2 = rng.uniform(-scale, scale, size=shape)
        d_in = float(np.max(np.abs(Q1 - Q2)))
        d_out = float(np.max(np.abs(operator(Q1) - operator(Q2))))
        ratio = d_out / d_in if d_in > 0 else 0.0
        worst = max(worst, ratio)
        if d_out > gamma * d_in + slack and offending is None:
            offending = (Q1, Q2)
    return ContractionReport(worst, num_random_pairs, gamma, offending is None, offending)


# ---------------------------------------------------------------------------
# estimator facade


class ExactAnalysis(BaseEstimator):
    """Run the whole exact pipeline for one model and one set of policies.

    >>> from marlcritics.envs import build_morning_game
    >>> ea = ExactAnalysis(k=0).fit(build_morning_game())
    >>> ea.decentral_[0].values.round(3).tolist()
    [[0.5, 1.5]]
    """

    def __init__(self, k=1, tol=1e-10, max_iter=None):
        self.k = k
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, model, policies=None, space=None):
        check_discount(model.gamma, strict=True)
        if policies is None:
            policies = uniform_policies(model.n_actions)
        self.model_ = model
        self.policies_ = policies
        self.space_ = space or enumerate_histories(model, self.k)
        self.steady_ = steady_state(model, policies, self.k, self.space_)
        self.system_ = BellmanSystem(model, policies, self.steady_)
        self.central_ = solve_central(self.system_, self.tol, self.max_iter)
        n = model.n_agents
        self.decentral_ = [solve_decentral(self.system_, i, self.tol, self.max_iter) for i in range(n)]
        self.marginals_ = [self.system_.marginalize(i, self.central_.values) for i in range(n)]
        self.moments_central_ = [gradient_moments(self.system_, i, "central", self.central_.values) for i in range(n)]
        self.moments_decentral_ = [
            gradient_moments(self.system_, i, "decentral", self.decentral_[i].values) for i in range(n)
        ]
        return self

    def marginalization_residual(self):
        check_is_fitted(self, "central_")
        return max(float(np.max(np.abs(m - d.values))) for m, d in zip(self.marginals_, self.decentral_))

    def gradient_gap(self):
        check_is_fitted(self, "central_")
        return max(
            float(np.max(np.abs(c.mean - d.mean))) for c, d in zip(self.moments_central_, self.moments_decentral_)
        )

    def variance_gap(self):
        """Smallest Var_c - Var_d over all agents and dimensions."""
        check_is_fitted(self, "central_")
        return min(
            float(np.min(c.second - c.mean**2 - (d.second - d.mean**2)))
            for c, d in zip(self.moments_central_, self.moments_decentral_)
        )

    def contraction(self, num_random_pairs=100, rng=None):
        check_is_fitted(self, "central_")
        rng = np.random.default_rng(rng)
        g = self.system_.gamma
        reports = [contraction_check(self.system_.central, g, self.system_.shape_central, num_random_pairs, rng)]
        for i in range(self.model_.n_agents):
            reports.append(
                contraction_check(
                    lambda Q, i=i: self.system_.decentral(i, Q), g, self.system_.shape_local(i), num_random_pairs, rng
                )
            )
        return reports
