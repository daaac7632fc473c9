"""Environment registry.

``make_model`` returns an explicit :class:`~marlcritics.core.DecPomdpModel`
(exact analysis possible); ``make_env`` returns a step-function environment
for any registered name, wrapping explicit models in ``ModelEnv``.
"""
from ..core import DecPomdpModel, ModelEnv
from ..validation import ConfigurationError
from .grid import (
    CaptureTarget,
    Cleaner,
    FindTreasure,
    GoTogether,
    MoveBox,
    SmallBoxPushing,
    build_capture_target,
    build_gridworld,
    build_small_box_pushing,
)
from .models import (
    CLIMB_PAYOFF,
    MORNING_PAYOFF,
    build_binary_match_game,
    build_climb_game,
    build_dectiger,
    build_guess_game,
    build_morning_game,
    matrix_game,
    random_decpomdp,
)
from .tiles import TileMap, load_tiles, parse_tiles

MODELS = {
    "climb": build_climb_game,
    "morning": build_morning_game,
    "guess": build_guess_game,
    "binary_match": build_binary_match_game,
    "dectiger": build_dectiger,
}

GENERATIVE = {
    "go_together": GoTogether,
    "find_treasure": FindTreasure,
    "cleaner": Cleaner,
    "move_box": MoveBox,
    "capture_target": build_capture_target,
    "small_box_pushing": build_small_box_pushing,
}


def available():
    return sorted(MODELS) + sorted(GENERATIVE)


def make_model(name, **params):
    if name not in MODELS:
        if name in GENERATIVE:
            raise ConfigurationError(f"{name!r} is generative only; no explicit model for exact analysis")
        raise ConfigurationError(f"unknown environment {name!r}; choose from {available()}")
    return MODELS[name](**params)


def make_env(name, **params):
    if name in MODELS:
        horizon = params.pop("max_steps", None)
        return ModelEnv(make_model(name, **params), horizon)
    if name in GENERATIVE:
        return GENERATIVE[name](**params)
    raise ConfigurationError(f"unknown environment {name!r}; choose from {available()}")


def load_model(path):
    return DecPomdpModel.load(path)
