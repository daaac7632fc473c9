"""Input checks shared by the model, learners and exact engine.

Modelled on ``sklearn.utils.validation``: small ``check_*`` functions that
either return a cleaned value or raise.
"""
import numpy as np


class ModelValidationError(ValueError):
    """A Dec-POMDP table is malformed (shape, sign or row-sum)."""


class ContractViolation(RuntimeError):
    """A caller-supplied object (policy, env) broke its contract."""


class ConfigurationError(ValueError):
    """Unknown environment/algorithm name or invalid configuration value."""


class NotFittedError(AttributeError):
    pass


def check_stochastic(table, name, tol=1e-12, axis=-1):
    """Return ``table`` as a float array after checking it is row-stochastic."""
    arr = np.asarray(table, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ModelValidationError(f"{name} contains non-finite entries")
    if np.any(arr < -tol):
        raise ModelValidationError(f"{name} has negative probabilities")
    sums = arr.sum(axis=axis)
    bad = np.abs(sums - 1.0) > tol
    if np.any(bad):
        where = np.argwhere(bad)[0]
        raise ModelValidationError(
            f"{name} row {tuple(int(i) for i in where)} sums to {sums[tuple(where)]!r}"
        )
    return arr


def check_shape(arr, shape, name):
    arr = np.asarray(arr)
    if arr.shape != tuple(shape):
        raise ModelValidationError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    return arr


def check_discount(gamma, strict=False):
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise ModelValidationError(f"gamma must lie in [0, 1], got {gamma}")
    if strict and gamma >= 1.0:
        raise ModelValidationError("exact analysis needs gamma < 1 (contraction)")
    return gamma


def check_positive(value, name, allow_zero=False):
    if value is None or (value < 0 if allow_zero else value <= 0):
        raise ConfigurationError(f"{name} must be {'non-negative' if allow_zero else 'positive'}, got {value!r}")
    return value


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def check_is_fitted(estimator, attributes):
    if isinstance(attributes, str):
        attributes = [attributes]
    missing = [a for a in attributes if not hasattr(estimator, a)]
    if missing:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first (missing {missing})"
        )


def check_action(action, n_actions, agent):
    if not (isinstance(action, (int, np.integer)) and 0 <= action < n_actions):
        raise ContractViolation(
            f"policy of agent {agent} returned action {action!r}, outside range(0, {n_actions})"
        )
    return int(action)
