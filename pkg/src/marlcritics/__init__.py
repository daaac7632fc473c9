"""Tabular multi-agent actor-critic laboratory.

Centralized vs decentralized critics on small Dec-POMDPs: an exact engine
(steady states, Bellman fixed points, gradient moments) and sampling
learners (JAC, IAC, IACC) with an experiment harness.
"""
__version__ = "0.1.0"

from .core import DecPomdpModel, ModelEnv, append_step, discounted_return, initial_histories, rollout, step
from .exact import ExactAnalysis, enumerate_histories, steady_state
from .learners import ActorCritic, TrainConfig, train
from .policies import SoftmaxPolicy, TabularPolicy, uniform_policies
