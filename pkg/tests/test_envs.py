import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from marlcritics.core import ModelEnv, rollout, step
from marlcritics.envs import available, make_env, make_model
from marlcritics.envs.grid import (
    BOUNDARY,
    BOX,
    DOWN,
    EMPTY,
    FORWARD,
    LEFT,
    RIGHT,
    STAY,
    TEAMMATE,
    TURN_LEFT,
    TURN_RIGHT,
    UP,
    WAIT,
    Cleaner,
    GoTogether,
    resolve_moves,
)
from marlcritics.envs.models import LISTEN, OPEN_LEFT, OPEN_RIGHT, build_dectiger, random_decpomdp
from marlcritics.envs.tiles import load_tiles, parse_tiles
from marlcritics.exact import ExactAnalysis
from marlcritics.policies import TabularPolicy
from marlcritics.validation import ConfigurationError


def payoff(model, a1, a2, state=0):
    a = model.joint_action_index((a1, a2))
    return float(model.transition[state, a] @ model.reward[state, a])


@pytest.mark.parametrize(
    "cell, value",
    [((0, 0), 11), ((0, 1), -30), ((1, 1), 7), ((2, 2), 5), ((2, 0), 0), ((1, 2), 0), ((2, 1), 6)],
)
def test_climb_payoffs(cell, value):
    # cell is (agent 1 action, agent 2 action); agent 2 picks the payoff row
    assert payoff(make_model("climb"), *cell) == value


def test_morning_payoffs():
    m = make_model("morning")
    assert [payoff(m, a, b) for a in range(2) for b in range(2)] == [1, 0, 0, 3]


def test_guess_game_examples():
    g = make_model("guess")
    s = lambda s1, s2: s1 * 2 + s2  # noqa: E731
    assert payoff(g, 1, 0, s(0, 1)) == 10  # both guesses right
    assert payoff(g, 0, 1, s(0, 1)) == -10  # both wrong
    assert payoff(g, 1, 1, s(0, 1)) == 0  # one right, one wrong
    for state in range(4):
        assert payoff(g, 2, 2, state) == 5
        assert payoff(g, 2, 0, state) in (-5, 5)


def test_guess_game_guess_is_worth_zero_against_any_teammate():
    g = make_model("guess")
    for a1 in (0, 1):
        for a2 in range(3):
            # averaged over both hidden observations
            assert np.mean([payoff(g, a1, a2, s) for s in range(4)]) == pytest.approx(0.0)


@pytest.mark.parametrize("r", [1.0, 2.5])
def test_binary_match_examples(r):
    m = make_model("binary_match", r=r)
    assert payoff(m, 1, 0, 0 * 2 + 1) == 2 * r
    assert payoff(m, 0, 1, 0 * 2 + 1) == -2 * r
    assert payoff(m, 1, 1, 0 * 2 + 1) == 0


def test_binary_match_rejects_nonpositive_r():
    with pytest.raises(ValueError):
        make_model("binary_match", r=0)


def test_dectiger_payoffs():
    m = build_dectiger()
    # tiger behind the left door (state 0)
    assert payoff(m, OPEN_RIGHT, OPEN_RIGHT, 0) == 20
    assert payoff(m, OPEN_LEFT, OPEN_RIGHT, 0) == -100
    assert payoff(m, OPEN_LEFT, OPEN_LEFT, 0) == -50
    assert payoff(m, LISTEN, LISTEN, 0) == -2
    assert payoff(m, OPEN_RIGHT, LISTEN, 0) == 9
    assert payoff(m, OPEN_LEFT, LISTEN, 0) == -101


def test_dectiger_listen_observation_accuracy():
    m = build_dectiger(accuracy=0.85)
    a = m.joint_action_index((LISTEN, LISTEN))
    o_both_left = m.joint_observation_index((0, 0))
    assert m.observation[0, a, o_both_left] == pytest.approx(0.85**2)
    assert m.transition[0, a, 0] == 1.0


def _tiger_oracle_policy_value(gamma, acc=0.85):
    """Listen twice, then open the door away from the side heard twice."""
    total = 0.0
    for side in (0, 1):
        p_hear = [acc if o == side else 1 - acc for o in (0, 1)]
        for obs in itertools.product((0, 1), repeat=4):  # o1_t0, o1_t1, o2_t0, o2_t1
            p = 0.5 * np.prod([p_hear[o] for o in obs])
            acts = []
            for o_a, o_b in (obs[:2], obs[2:]):
                if o_a == o_b:
                    acts.append(OPEN_RIGHT if o_a == 0 else OPEN_LEFT)
                else:
                    acts.append(LISTEN)
            r_last = _tiger_table(side, *acts)
            total += p * (-2 - 2 * gamma + gamma**2 * r_last)
    return total


def _tiger_table(side, a1, a2):
    bad, good = (OPEN_LEFT, OPEN_RIGHT) if side == 0 else (OPEN_RIGHT, OPEN_LEFT)
    if a1 == a2 == LISTEN:
        return -2
    if a1 == a2 == good:
        return 20
    if a1 == a2 == bad:
        return -50
    if {a1, a2} == {OPEN_LEFT, OPEN_RIGHT}:
        return -100
    if bad in (a1, a2):
        return -101
    return 9


def _tiger_expectimax(belief, steps, gamma, acc=0.85):
    """Optimal value with pooled observations (an upper bound for any
    decentralized policy)."""
    if steps == 0:
        return 0.0
    best = -np.inf
    for a1, a2 in itertools.product(range(3), repeat=2):
        v = sum(b * _tiger_table(s, a1, a2) for s, b in enumerate(belief))
        if a1 == a2 == LISTEN and steps > 1:
            for o1, o2 in itertools.product((0, 1), repeat=2):
                like = [(acc if o1 == s else 1 - acc) * (acc if o2 == s else 1 - acc) for s in (0, 1)]
                joint = [belief[s] * like[s] for s in (0, 1)]
                z = sum(joint)
                v += gamma * z * _tiger_expectimax([j / z for j in joint], steps - 1, gamma, acc)
        best = max(best, v)
    return best


def _listen_twice_policies():
    table = {}
    for o_a, o_b in itertools.product((0, 1), repeat=2):
        h = ((LISTEN, o_a), (LISTEN, o_b))
        if o_a == o_b:
            table[h] = np.eye(3)[OPEN_RIGHT if o_a == 0 else OPEN_LEFT]
    return [TabularPolicy(3, table, np.eye(3)[LISTEN]) for _ in range(2)]


def test_dectiger_horizon3_against_hand_oracle():
    m = build_dectiger(horizon=3)
    pols = _listen_twice_policies()
    want = _tiger_oracle_policy_value(m.gamma)
    ea = ExactAnalysis(k=2).fit(m, pols)
    h0 = ea.space_.joint_id(((), ()))
    q = ea.central_.values[h0]
    got = q[m.joint_action_index((LISTEN, LISTEN))]
    assert got == pytest.approx(want, abs=1e-10)
    # Monte Carlo rollouts agree
    rng = np.random.default_rng(0)
    n = 40_000
    disc = []
    for _ in range(n):
        traj = rollout(m, pols, 2, rng=rng)
        disc.append(sum(m.gamma**t * s.reward for t, s in enumerate(traj.steps)))
    assert abs(np.mean(disc) - want) < 4 * np.std(disc) / np.sqrt(n)
    # no policy beats the pooled-observation optimum
    assert want <= _tiger_expectimax([0.5, 0.5], 3, m.gamma) + 1e-12


def test_dectiger_horizon_terminates():
    m = build_dectiger(horizon=3)
    always_listen = [TabularPolicy(3, {}, np.eye(3)[LISTEN])] * 2
    traj = rollout(m, always_listen, 1, rng=0)
    assert traj.length == 3 and traj.terminated


@pytest.mark.parametrize("seed", range(5))
def test_random_models_validate(seed):
    rng = np.random.default_rng(seed)
    random_decpomdp(rng, horizon=2).validate()
    random_decpomdp(rng, horizon=None, initial_observation=False).validate()


def test_explicit_models_validate():
    for name in ("climb", "morning", "guess", "binary_match", "dectiger"):
        make_model(name).validate()


def test_registry():
    assert set(available()) >= {"climb", "move_box", "capture_target", "small_box_pushing"}
    with pytest.raises(ConfigurationError):
        make_env("nope")
    with pytest.raises(ConfigurationError):
        make_model("move_box")
    assert isinstance(make_env("climb"), ModelEnv)


# ---------------------------------------------------------------------------
# grid worlds


def play(env, actions, seed=0):
    rng = np.random.default_rng(seed)
    env.reset(rng)
    out = []
    for ja in actions:
        out.append(env.step(ja, rng))
        if out[-1][2]:
            break
    return out


def test_resolve_moves_conflicts():
    assert resolve_moves([(0, 0), (0, 2)], [(0, 1), (0, 1)]) == [(0, 0), (0, 2)]
    assert resolve_moves([(0, 0), (0, 2)], [(1, 0), (0, 1)]) == [(1, 0), (0, 1)]
    # a reverted agent blocks whoever follows it
    assert resolve_moves([(0, 0), (0, 1), (0, 3)], [(0, 1), (0, 2), (0, 2)]) == [(0, 0), (0, 1), (0, 3)]


def test_move_box_near_goal():
    env = make_env("move_box")
    out = play(env, [(LEFT, LEFT)])
    assert out[-1][1:] == (10.0, True)


def test_move_box_far_goal():
    env = make_env("move_box")
    out = play(env, [(RIGHT, RIGHT)] * 10)
    assert out[-1][1:] == (100.0, True)
    assert [r for _, r, _ in out[:-1]] == [0.0] * (len(out) - 1)


def test_move_box_needs_both_agents():
    env = make_env("move_box")
    out = play(env, [(RIGHT, STAY)] * 3)
    assert env.box == env.box_start
    assert all(r == 0 for _, r, _ in out)


def test_cleaner_rewards_first_visit_only():
    env = Cleaner()
    out = play(env, [(UP, RIGHT), (DOWN, LEFT)])
    assert out[0][1] == 2.0  # both enter new cells
    assert out[1][1] == 0.0  # both step back onto cleaned cells


def test_cleaner_small_map_finishes():
    env = Cleaner(tiles="####\n#AA#\n####\n")
    out = play(env, [(STAY, STAY)])
    assert out[-1][2] is True


def test_find_treasure_needs_switch():
    env = make_env("find_treasure")
    # agent 2 stands on the switch, agent 1 walks through the door
    to_door = [(DOWN, DOWN), (RIGHT, STAY), (RIGHT, STAY), (RIGHT, STAY), (RIGHT, STAY), (RIGHT, STAY), (RIGHT, STAY)]
    env.reset(np.random.default_rng(0))
    env.pos = [(2, 3), (3, 1)]
    rewards = []
    for ja in [(RIGHT, STAY)] * 4:
        _, r, done = env.step(ja, None)
        rewards.append(r)
        if done:
            break
    assert rewards[-1] == 100.0 and done
    # without the switch held the door stays shut
    env.reset(np.random.default_rng(0))
    env.pos = [(2, 3), (1, 1)]
    env.step((RIGHT, STAY), None)
    assert env.pos[0] == (2, 3)
    assert to_door  # kept for readability of the layout


def test_go_together_penalties():
    env = GoTogether()
    rng = np.random.default_rng(0)
    env.reset(rng)
    _, r, _ = env.step((STAY, STAY), rng)  # spawns are 4 apart
    assert r == -0.1
    env.pos = [(2, 2), (2, 3)]
    _, r, _ = env.step((STAY, STAY), rng)
    assert r == 0.0
    g1, g2 = env.tiles.cells("G")
    env.pos = [g1, (g2[0], g2[1] + 1)]
    _, r, done = env.step((STAY, LEFT), rng)
    assert (r, done) == (10.0, True)


def test_capture_target_capture_and_wrap():
    env = make_env("capture_target", m=4, slip=0.0, blur=0.0)
    rng = np.random.default_rng(0)
    env.reset(rng)
    env.pos = [(0, 0), (1, 1)]
    env.target = (0, 1)
    _, r, done = env.step((RIGHT, UP), rng)
    assert (r, done) == (1.0, True)
    env.reset(rng)
    env.pos = [(0, 3), (3, 0)]
    env.target = (2, 2)
    env.step((RIGHT, DOWN), rng)
    assert env.pos == [(0, 0), (0, 0)]
    assert env.target == (2, 3)
    env.step((STAY, STAY), rng)
    assert env.target == (2, 0)


def test_capture_target_one_agent_is_not_enough():
    env = make_env("capture_target", m=4, slip=0.0, blur=0.0)
    rng = np.random.default_rng(0)
    env.reset(rng)
    env.pos = [(0, 0), (3, 3)]
    env.target = (0, 1)
    _, r, done = env.step((RIGHT, STAY), rng)
    assert (r, done) == (0.0, False)


def test_capture_target_slip_and_blur_rates():
    env = make_env("capture_target", m=4, slip=0.1, blur=0.3)
    rng = np.random.default_rng(5)
    env.reset(rng)
    slips = blurs = n = 0
    for _ in range(100_000):
        env.done = False
        obs, _, _ = env.step((STAY, STAY), rng)
        slips += env.last_info["slipped"].sum()
        blurs += sum(o % (env.n_cells + 1) == env.null for o in obs)
        n += 2
    assert abs(slips / n - 0.1) < 0.01
    assert abs(blurs / n - 0.3) < 0.01


def test_small_box_pushing_push_to_goal():
    env = make_env("small_box_pushing", m=4)
    rng = np.random.default_rng(0)
    obs = env.reset(rng)
    assert obs == (BOX, BOX)
    obs, r, done = env.step((FORWARD, WAIT), rng)
    assert env.boxes[0] == (1, 1) and env.pos[0] == (2, 1) and not done
    obs, r, done = env.step((FORWARD, WAIT), rng)
    assert (r, done) == (100.0, True)


def test_small_box_pushing_observations():
    env = make_env("small_box_pushing", m=5)
    rng = np.random.default_rng(0)
    env.reset(rng)
    obs, _, _ = env.step((TURN_LEFT, WAIT), rng)
    assert obs[0] == EMPTY  # facing left from column 1 is column 0
    obs, _, _ = env.step((TURN_LEFT, WAIT), rng)
    assert obs[0] == BOUNDARY  # facing down off the bottom row
    env.reset(rng)
    env.pos = [(4, 1), (4, 2)]
    obs, _, _ = env.step((TURN_RIGHT, WAIT), rng)
    assert obs[0] == TEAMMATE
    obs, _, _ = env.step((FORWARD, WAIT), rng)
    assert env.pos[0] == (4, 1)  # blocked by the teammate


def test_small_box_pushing_three_agents():
    env = make_env("small_box_pushing", m=4, n_agents=3)
    assert env.reset(np.random.default_rng(0)) == (BOX, BOX, EMPTY)
    with pytest.raises(ConfigurationError):
        make_env("small_box_pushing", n_agents=4)


@pytest.mark.parametrize("name", ["go_together", "find_treasure", "cleaner", "move_box", "capture_target", "small_box_pushing"])
@given(seed=st.integers(0, 2**32 - 1))
def test_episode_is_function_of_seed_and_actions(name, seed):
    env = make_env(name)
    acts = np.random.default_rng(seed).integers(0, env.n_actions[0], size=(30, env.n_agents))

    def run():
        rng = np.random.default_rng(seed)
        trace = [env.reset(rng)]
        for ja in acts:
            trace.append(env.step(tuple(ja), rng))
        return trace

    a, b = run(), run()
    assert a == b
    for obs in [a[0]] + [t[0] for t in a[1:]]:
        assert all(0 <= o < n for o, n in zip(obs, env.n_observations))


def test_parse_tiles_errors():
    with pytest.raises(ConfigurationError):
        parse_tiles("")
    with pytest.raises(ConfigurationError):
        parse_tiles("###\n##\n")
    with pytest.raises(ConfigurationError):
        parse_tiles("#X#\n")
    with pytest.raises(ConfigurationError):
        load_tiles("no_such_map")
    with pytest.raises(ConfigurationError):
        GoTogether(tiles="#####\n#A..#\n#####\n")


def test_tile_round_trip(tmp_path):
    t = load_tiles("move_box")
    path = tmp_path / "m.txt"
    path.write_text(t.to_text())
    t2 = load_tiles(str(path))
    assert t2.rows == t.rows and t2.cell("B") == (2, 2)
