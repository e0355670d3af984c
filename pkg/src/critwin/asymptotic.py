"""Asymptotic predictors that drop o(1) corrections.

These are heuristics for exploratory scans, not exact values; nothing in the
acceptance suite treats them as ground truth.
"""

from __future__ import annotations

import math

from .model import ContractError, critical_beta


def theta_predictor(gamma: float, beta: float) -> float:
    """Barely-supercritical giant fraction exp(-(π/2)/sqrt(4 β_c (β - β_c)))."""
    bc = critical_beta(gamma)
    if bc <= 0.0 or not beta > bc:
        raise ContractError(f"need beta > beta_c={bc} > 0, got beta={beta}")
    return math.exp(-(math.pi / 2.0) / math.sqrt(4.0 * bc * (beta - bc)))
