"""Deadbeat preprocessing of the staircase pair and composition back to (A, B)."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .core import IndexSummary, StaircasePair, TransformTriple
from .parametrization import build_transformations, default_parameters
from .staircase import zero_below_stair


def _default_parameter_gain(stair: StaircasePair, idx: IndexSummary) -> np.ndarray:
    params = default_parameters(stair, idx)
    return build_transformations(params, stair.A_s, stair.B_s, idx).F


DeadbeatStrategy = Callable[[StaircasePair, IndexSummary], np.ndarray]

STRATEGIES: dict[str, DeadbeatStrategy] = {"default-parameters": _default_parameter_gain}


def deadbeat_gain_staircase(stair: StaircasePair, idx: IndexSummary, strategy: str | DeadbeatStrategy = "default-parameters") -> np.ndarray:
    """Gain ``K_s`` making ``A_s + B_s K_s`` nilpotent with Jordan blocks of sizes ``mu``.

    The default strategy takes the feedback of the parametrized construction at
    default parameters, which lies in the set of such gains. Any callable with
    the same signature may be passed instead.
    """
    fn = STRATEGIES[strategy] if isinstance(strategy, str) else strategy
    return np.asarray(fn(stair, idx), dtype=float)


def apply_predeadbeat(stair: StaircasePair, K_s: np.ndarray) -> StaircasePair:
    """``(A_s + B_s K_s, B_s)`` with the sub-stair entries reset to exact zeros."""
    A_tilde = zero_below_stair(stair.A_s + stair.B_s @ K_s, stair.weyr)
    return StaircasePair(A_tilde, stair.B_s, stair.U, stair.weyr)


def compose_transforms(U: np.ndarray, K_s: np.ndarray, inner: TransformTriple) -> TransformTriple:
    """Pull a triple built on the preprocessed staircase pair back to the original system.

    ``T = T_in U``, ``F = (K_s + F_in) U``, ``G = G_in``.
    """
    T = inner.T @ U
    F = (K_s + inner.F) @ U
    return TransformTriple(T, F, inner.G, inner.mu, dict(inner.diagnostics))
