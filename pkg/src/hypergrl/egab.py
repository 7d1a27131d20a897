"""Entropy-guided adaptive balancing of the uniformity weight.

Each epoch the collapse metric C is turned into an entropy proxy
H = -log(C + eps); the uniformity weight alpha then tracks

    alpha_hat = alpha_min + (alpha_max - alpha_min)
                * sigmoid(beta * (H_target - H) / H_target)

through an exponential moving average. When H sits at its target the
controller holds alpha at the midpoint of its range; collapse (H -> 0)
drives alpha toward alpha_max, over-dispersion toward alpha_min.
"""

import math
from dataclasses import dataclass

from .errors import ConfigError
from .objective import entropy_proxy, ENTROPY_EPS


@dataclass
class EgabState:
    alpha: float = 1.0
    alpha_min: float = 0.0
    alpha_max: float = 2.0
    beta: float = 5.0
    gamma: float = 0.1
    h_target: float = 1.5
    eps: float = ENTROPY_EPS
    enabled: bool = True

    def __post_init__(self):
        if self.alpha_min > self.alpha_max:
            raise ConfigError(
                f"alpha bounds out of order: [{self.alpha_min}, {self.alpha_max}]")
        if self.enabled and self.h_target <= 0:
            raise ConfigError(f"H_target must be positive, got {self.h_target}")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.beta <= 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")


def _sigmoid(x: float) -> float:
    # branch on sign so exp never sees a large positive argument
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def target_alpha(h_proxy: float, state: EgabState) -> float:
    """Instantaneous controller output for an observed entropy proxy."""
    if state.h_target <= 0:
        raise ConfigError(f"H_target must be positive, got {state.h_target}")
    gate = _sigmoid(state.beta * (state.h_target - h_proxy) / state.h_target)
    return state.alpha_min + (state.alpha_max - state.alpha_min) * gate


def ema_update(state: EgabState, alpha_hat: float) -> EgabState:
    state.alpha = (1.0 - state.gamma) * state.alpha + state.gamma * alpha_hat
    return state


def epoch_update(state: EgabState, c: float) -> EgabState:
    """End-of-epoch update from the collapse metric; no-op when the
    controller is disabled (static alpha)."""
    if not state.enabled:
        return state
    return ema_update(state, target_alpha(entropy_proxy(c, state.eps), state))
