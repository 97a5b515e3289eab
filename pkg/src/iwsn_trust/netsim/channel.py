"""Two-state (good/bad) Markov link model."""

from __future__ import annotations

import numpy as np


def transition_matrix(p_bad: float) -> np.ndarray:
    """Rows are from-states (good, bad); P(good->bad) = p_bad, P(bad->good) = 1 - p_bad."""
    return np.array([[1.0 - p_bad, p_bad], [1.0 - p_bad, p_bad]])


def stationary_bad(p_bad: float) -> float:
    # pi_bad = pi_good * p_bad + pi_bad * p_bad  =>  pi_bad = p_bad
    return p_bad


def step_channel(bad: np.ndarray, p_bad: float, rng: np.random.Generator, matrix=None) -> np.ndarray:
    """Advance every chain one step. ``bad`` is a boolean array of current states."""
    bad = np.asarray(bad, dtype=bool)
    matrix = transition_matrix(p_bad) if matrix is None else np.asarray(matrix)
    p_to_bad = matrix[bad.astype(int), 1]
    return rng.random(bad.shape) < p_to_bad


def initial_states(shape, p_bad: float, rng: np.random.Generator) -> np.ndarray:
    return rng.random(shape) < stationary_bad(p_bad)
