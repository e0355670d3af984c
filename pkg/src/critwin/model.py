"""Model parameters, connection kernels and the window parametrisation.

Vertex ``j`` of the γ-growing random graph connects to each earlier vertex
``i`` independently with probability ``min(β i^-γ j^(γ-1), 1)`` (polynomial
kernel) or ``1 - exp(-β i^-γ j^(γ-1))`` (exponential lower kernel). The
critical density is ``β_c = max(1/4 - γ/2, 0)``, and the critical window is
addressed through ``α = 4 β_c (β - β_c) (ln n)^2``. All logarithms are
natural logarithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class Kernel(str, Enum):
    POLYNOMIAL = "polynomial"
    EXPONENTIAL_LOWER = "exponential_lower"


class ContractError(ValueError):
    """Raised when an operation is called outside its documented domain."""


def critical_beta(gamma: float) -> float:
    """β_c = max(1/4 - γ/2, 0)."""
    if not gamma < 1.0:
        raise ContractError(f"gamma must be < 1, got {gamma}")
    return max(0.25 - 0.5 * gamma, 0.0)


@dataclass(frozen=True)
class WindowPoint:
    alpha: float
    n: int
    beta: float
    beta_c: float


@dataclass(frozen=True)
class ModelParams:
    """Single source of truth for a run.

    Exactly one of ``beta`` (absolute edge density) or ``alpha`` (window
    coordinate at size ``n``) is given.
    """

    gamma: float
    n: int
    beta: float | None = None
    alpha: float | None = None
    kernel: Kernel = Kernel.POLYNOMIAL

    def __post_init__(self):
        if not (0.0 <= self.gamma < 0.5):
            raise ContractError(f"gamma must lie in [0, 1/2), got {self.gamma}")
        if int(self.n) != self.n or self.n < 1:
            raise ContractError(f"n must be a positive integer, got {self.n}")
        if (self.beta is None) == (self.alpha is None):
            raise ContractError("give exactly one of beta (absolute) or alpha (window)")
        if self.beta is not None and not self.beta > 0:
            raise ContractError(f"beta must be positive, got {self.beta}")
        object.__setattr__(self, "kernel", Kernel(self.kernel))

    @property
    def window_mode(self) -> bool:
        return self.alpha is not None

    @property
    def beta_c(self) -> float:
        return critical_beta(self.gamma)

    def resolved_beta(self) -> float:
        return resolve_beta(self).beta

    def with_beta(self, beta: float) -> "ModelParams":
        return ModelParams(self.gamma, self.n, beta=beta, kernel=self.kernel)


def resolve_beta(params: ModelParams) -> WindowPoint:
    """Return the mutually consistent (α, β, β_c, n) of ``params``."""
    bc = critical_beta(params.gamma)
    n = int(params.n)
    if params.alpha is not None:
        if n < 2:
            raise ContractError("window mode needs n >= 2")
        if bc == 0.0:
            raise ContractError("window mode needs beta_c > 0")
        beta = bc + params.alpha / (4.0 * bc * math.log(n) ** 2)
        if not beta > 0:
            raise ContractError(
                f"alpha={params.alpha} gives non-positive beta={beta} at n={n}")
        return WindowPoint(alpha=float(params.alpha), n=n, beta=beta, beta_c=bc)
    beta = float(params.beta)
    alpha = 4.0 * bc * (beta - bc) * math.log(n) ** 2 if n >= 2 else 0.0
    return WindowPoint(alpha=alpha, n=n, beta=beta, beta_c=bc)


def connection_probability(i: int, j: int, params: ModelParams) -> float:
    """Edge probability between vertices ``i < j``."""
    if not (1 <= i < j):
        raise ContractError(f"need 1 <= i < j, got i={i}, j={j}")
    beta = resolve_beta(params).beta
    return kernel_value(i, j, params.gamma, beta, params.kernel)


def kernel_value(i, j, gamma: float, beta: float, kernel=Kernel.POLYNOMIAL):
    """Vectorised kernel evaluation (no contract checks)."""
    import numpy as np

    x = beta * np.power(np.asarray(i, dtype=float), -gamma) * np.power(
        np.asarray(j, dtype=float), gamma - 1.0)
    if Kernel(kernel) is Kernel.POLYNOMIAL:
        out = np.minimum(x, 1.0)
    else:
        out = -np.expm1(-x)
    return float(out) if np.ndim(out) == 0 else out


def subcritical_exponent(gamma: float, beta: float) -> float:
    """ρ = 1/2 - sqrt(4 β_c (β_c - β)) for 0 < β < β_c."""
    bc = critical_beta(gamma)
    if not (0.0 < beta <= bc) or bc == 0.0:
        raise ContractError(f"need 0 < beta <= beta_c={bc}, got {beta}")
    return 0.5 - math.sqrt(4.0 * bc * (bc - beta))
