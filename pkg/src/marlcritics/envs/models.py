"""Explicit (exact-analysis capable) environments."""
import numpy as np

from ..core import DecPomdpModel

CLIMB_PAYOFF = [[11, -30, 0], [-30, 7, 6], [0, 0, 5]]
MORNING_PAYOFF = [[1, 0], [0, 3]]


def matrix_game(payoff, name="matrix", gamma=0.95, action_names=None):
    """One-shot two-player game.

    ``payoff[row][col]`` is the team reward when agent 2 plays ``row`` and
    agent 1 plays ``col``.
    """
    payoff = np.asarray(payoff, dtype=float)
    n2, n1 = payoff.shape
    A = n1 * n2
    T = np.zeros((2, A, 2))
    T[:, :, 1] = 1.0
    R = np.zeros((2, A, 2))
    for a1 in range(n1):
        for a2 in range(n2):
            R[0, a1 * n2 + a2, 1] = payoff[a2, a1]
    return DecPomdpModel(
        n_actions=(n1, n2),
        n_observations=(1, 1),
        initial=[1.0, 0.0],
        transition=T,
        observation=np.ones((2, A, 1)),
        reward=R,
        gamma=gamma,
        terminal=[False, True],
        horizon=1,
        name=name,
        state_names=["play", "done"],
        action_names=action_names,
    )


def build_climb_game(gamma=0.95):
    return matrix_game(CLIMB_PAYOFF, "climb", gamma, [["u1", "u2", "u3"]] * 2)


def build_morning_game(gamma=0.95):
    return matrix_game(
        MORNING_PAYOFF, "morning", gamma, [["pickles", "cereal"], ["vodka", "milk"]]
    )


def _one_shot_observed(reward_fn, n_act, name, gamma):
    """Two agents, state (s1, s2) uniform on {0,1}^2, agent i sees s_i, one step."""
    S = 5  # four (s1, s2) states, then terminal
    A = n_act * n_act
    T = np.zeros((S, A, S))
    T[:, :, 4] = 1.0
    R = np.zeros((S, A, S))
    for s1 in range(2):
        for s2 in range(2):
            for a1 in range(n_act):
                for a2 in range(n_act):
                    R[s1 * 2 + s2, a1 * n_act + a2, 4] = reward_fn(s1, s2, a1, a2)
    O = np.zeros((S, A, 4))
    O[:, :, 0] = 1.0
    O0 = np.zeros((S, 4))
    for s in range(4):
        O0[s, s] = 1.0
    O0[4, 0] = 1.0
    return DecPomdpModel(
        n_actions=(n_act, n_act),
        n_observations=(2, 2),
        initial=[0.25, 0.25, 0.25, 0.25, 0.0],
        transition=T,
        observation=O,
        reward=R,
        gamma=gamma,
        terminal=[False] * 4 + [True],
        initial_observation=O0,
        horizon=1,
        name=name,
    )


def build_guess_game(r_match=10.0, safe_reward=5.0, gamma=0.95):
    """Each agent guesses the other's binary observation (actions a1, a2) or
    plays the safe a3.

    Every guess adds +r_match/2 when right and -r_match/2 when wrong, so two
    matches pay +10, one mismatch 0 and two mismatches -10 at the default.
    a3 adds nothing, except that (a3, a3) pays ``safe_reward`` whatever the
    state.
    """
    half = r_match / 2.0

    def term(a, s):
        return 0.0 if a == 2 else (half if a == s else -half)

    def reward(s1, s2, a1, a2):
        if a1 == 2 and a2 == 2:
            return safe_reward
        return term(a1, s2) + term(a2, s1)

    return _one_shot_observed(reward, 3, "guess", gamma)


def build_binary_match_game(r=1.0, gamma=0.95):
    """Agent i earns +r when its binary action equals the teammate's
    observation and -r otherwise; the team reward is the sum of both terms."""
    if r <= 0:
        raise ValueError("r must be positive")

    def reward(s1, s2, a1, a2):
        return (r if a1 == s2 else -r) + (r if a2 == s1 else -r)

    return _one_shot_observed(reward, 2, "binary_match", gamma)


# Dec-Tiger ---------------------------------------------------------------

OPEN_LEFT, OPEN_RIGHT, LISTEN = 0, 1, 2
HEAR_LEFT, HEAR_RIGHT = 0, 1


def _tiger_reward(tiger, a1, a2):
    """Standard two-agent Tiger payoffs; ``tiger`` is 0 (left) or 1 (right)."""
    bad = OPEN_LEFT if tiger == 0 else OPEN_RIGHT
    good = OPEN_RIGHT if tiger == 0 else OPEN_LEFT
    pair = {a1, a2}
    if a1 == a2 == LISTEN:
        return -2.0
    if a1 == a2 == good:
        return 20.0
    if a1 == a2 == bad:
        return -50.0
    if pair == {OPEN_LEFT, OPEN_RIGHT}:
        return -100.0
    if pair == {bad, LISTEN}:
        return -101.0
    return 9.0  # one opens the treasure door, the other listens


def build_dectiger(horizon=None, accuracy=0.85, gamma=0.9):
    """Dec-Tiger where any door opening ends the episode.

    With ``horizon=None`` the agents may listen forever (the rollout cap is
    then external). With a finite horizon the time step is folded into the
    state so that listening at the last step also terminates.
    """
    sides = 2
    T_len = 1 if horizon is None else int(horizon)
    n_live = sides * T_len
    S = n_live + 1
    term = S - 1
    A, O = 9, 4

    def idx(side, t):
        return t * sides + side

    T = np.zeros((S, A, S))
    R = np.zeros((S, A, S))
    Obs = np.zeros((S, A, O))
    T[term, :, term] = 1.0
    Obs[term, :, 0] = 1.0
    for t in range(T_len):
        for side in range(sides):
            s = idx(side, t)
            for a1 in range(3):
                for a2 in range(3):
                    a = a1 * 3 + a2
                    if a1 == a2 == LISTEN:
                        if horizon is None:
                            s2 = s
                        elif t + 1 < T_len:
                            s2 = idx(side, t + 1)
                        else:
                            s2 = term
                        hear = [accuracy if o == side else 1.0 - accuracy for o in range(2)]
                        for o1 in range(2):
                            for o2 in range(2):
                                Obs[s, a, o1 * 2 + o2] = hear[o1] * hear[o2]
                    else:
                        s2 = term
                        Obs[s, a, :] = 0.25
                    T[s, a, s2] = 1.0
                    R[s, a, s2] = _tiger_reward(side, a1, a2)
    initial = np.zeros(S)
    initial[idx(0, 0)] = initial[idx(1, 0)] = 0.5
    terminal = np.zeros(S, dtype=bool)
    terminal[term] = True
    return DecPomdpModel(
        n_actions=(3, 3),
        n_observations=(2, 2),
        initial=initial,
        transition=T,
        observation=Obs,
        reward=R,
        gamma=gamma,
        terminal=terminal,
        horizon=horizon,
        name="dectiger" if horizon is None else f"dectiger_h{horizon}",
        action_names=[["open-left", "open-right", "listen"]] * 2,
    )


def random_decpomdp(
    rng,
    n_states=3,
    n_actions=(2, 2),
    n_observations=(2, 2),
    horizon=2,
    stop_prob=0.3,
    initial_observation=True,
    gamma=0.9,
):
    """Random small Dec-POMDP with Dirichlet(1) rows and N(0, 1) rewards.

    ``horizon`` folds the time step into the state (episodes last at most
    ``horizon`` decisions); ``horizon=None`` instead ends each step with
    probability ``stop_prob``.
    """
    A = int(np.prod(n_actions))
    O = int(np.prod(n_observations))
    T_len = 1 if horizon is None else horizon
    n_live = n_states * T_len
    S = n_live + 1
    term = S - 1
    base_T = rng.dirichlet(np.ones(n_states), size=(n_states, A))
    base_O = rng.dirichlet(np.ones(O), size=(n_states, A))
    base_R = rng.normal(size=(n_states, A, n_states))
    T = np.zeros((S, A, S))
    R = np.zeros((S, A, S))
    Obs = np.zeros((S, A, O))
    T[term, :, term] = 1.0
    Obs[term, :, 0] = 1.0
    for t in range(T_len):
        for s in range(n_states):
            i = t * n_states + s
            Obs[i] = base_O[s]
            if horizon is None:
                T[i, :, :n_states] = base_T[s] * (1.0 - stop_prob)
                T[i, :, term] = stop_prob
                R[i, :, :n_states] = base_R[s]
                R[i, :, term] = base_R[s].mean(axis=-1)
            elif t + 1 < T_len:
                nxt = (t + 1) * n_states
                T[i, :, nxt:nxt + n_states] = base_T[s]
                R[i, :, nxt:nxt + n_states] = base_R[s]
            else:
                T[i, :, term] = 1.0
                R[i, :, term] = base_R[s].mean(axis=-1)
    initial = np.zeros(S)
    initial[:n_states] = rng.dirichlet(np.ones(n_states))
    O0 = None
    if initial_observation:
        O0 = np.zeros((S, O))
        O0[:n_live] = np.tile(rng.dirichlet(np.ones(O), size=n_states), (T_len, 1))
        O0[term, 0] = 1.0
    terminal = np.zeros(S, dtype=bool)
    terminal[term] = True
    return DecPomdpModel(
        n_actions=n_actions,
        n_observations=n_observations,
        initial=initial,
        transition=T,
        observation=Obs,
        reward=R,
        gamma=gamma,
        terminal=terminal,
        initial_observation=O0,
        horizon=horizon,
        name="random",
    )
