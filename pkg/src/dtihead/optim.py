"""Decoupled-weight-decay adaptive optimizer with warmup + cosine schedule.

The update at step t (1-based after the call) for each parameter entry:

    m <- b1 m + (1 - b1) g
    v <- b2 v + (1 - b2) g^2
    m_hat = m / (1 - b1^t),  v_hat = v / (1 - b2^t)
    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * lam * theta

with the decay term applied only to weight matrices (and the head weight
vector), never to biases; rbf_centers and rbf_sigma are frozen outright.
The learning rate ramps linearly over ``warmup_steps`` then follows a half
cosine down to zero at ``total_steps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError
from .model import Gradients, ModelParams, ParamBlock, decay_mask, frozen_mask


@dataclass
class OptimState:
    """Optimizer state plus the schedule it runs under."""

    total_steps: int
    step: int = 0
    m: Gradients | None = None
    v: Gradients | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-6
    weight_decay: float = 0.1
    peak_lr: float = 5e-5
    warmup_steps: int = 500

    def validate(self) -> None:
        if self.total_steps <= self.warmup_steps:
            raise ParameterError(
                f"total_steps ({self.total_steps}) must exceed warmup_steps "
                f"({self.warmup_steps}); the cosine phase would be empty"
            )
        if self.warmup_steps < 0 or self.step < 0:
            raise ParameterError("step counts must be nonnegative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ParameterError("betas must lie in [0, 1)")
        if self.eps <= 0 or self.peak_lr < 0 or self.weight_decay < 0:
            raise ParameterError("eps must be > 0; lr and decay nonnegative")


def init_optim_state(params: ModelParams, total_steps: int, **overrides) -> OptimState:
    """Fresh state with zeroed moment buffers shaped like the parameters."""
    state = OptimState(
        total_steps=total_steps,
        m=Gradients.zeros_like(params),
        v=Gradients.zeros_like(params),
        **overrides,
    )
    state.validate()
    return state


def lr_at(step: int, sched: OptimState) -> float:
    """Learning rate at a 0-based step index.

    Linear ramp peak * step / warmup while step < warmup, then
    peak * 0.5 * (1 + cos(pi * (step - warmup) / (total - warmup))). Both
    branches equal peak exactly at step == warmup; the cosine hits exactly
    zero at step == total_steps.
    """
    sched.validate()
    if not 0 <= step <= sched.total_steps:
        raise ParameterError(
            f"step {step} outside schedule range [0, {sched.total_steps}]"
        )
    if step < sched.warmup_steps:
        return sched.peak_lr * step / sched.warmup_steps
    frac = (step - sched.warmup_steps) / (sched.total_steps - sched.warmup_steps)
    return sched.peak_lr * 0.5 * (1.0 + math.cos(math.pi * frac))


def apply_update(
    params: ModelParams,
    grads: Gradients,
    state: OptimState,
    frozen_extra: np.ndarray | None = None,
) -> tuple[ModelParams, OptimState]:
    """One optimizer step; returns new params and advanced state.

    Pure with respect to its inputs: params and the state buffers are not
    mutated. The learning rate is lr_at(state.step), so the very first
    update under a nonzero warmup uses lr 0 while the moments warm up.
    ``frozen_extra`` pins additional entries (flat boolean mask), used by
    ablations that exclude parameter groups from every update.
    """
    theta = params.to_vector()
    g = grads.to_vector()
    if theta.shape != g.shape:
        raise DimensionError(
            f"gradient vector length {g.shape[0]} != parameter length {theta.shape[0]}"
        )
    lr = lr_at(state.step, state)
    t = state.step + 1

    frozen = frozen_mask(params)
    if frozen_extra is not None:
        if frozen_extra.shape != frozen.shape:
            raise DimensionError("frozen_extra mask length mismatch")
        frozen = frozen | frozen_extra
    decay = decay_mask(params)
    g = np.where(frozen, 0.0, g)

    m = state.beta1 * state.m.to_vector() + (1.0 - state.beta1) * g
    v = state.beta2 * state.v.to_vector() + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)

    delta = lr * m_hat / (np.sqrt(v_hat) + state.eps)
    delta = delta + lr * state.weight_decay * decay * theta
    delta[frozen] = 0.0
    new_theta = theta - delta

    new_params = ModelParams.from_vector(new_theta, params)
    new_state = OptimState(
        total_steps=state.total_steps,
        step=t,
        m=Gradients.from_vector(m, state.m),
        v=Gradients.from_vector(v, state.v),
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
        weight_decay=state.weight_decay,
        peak_lr=state.peak_lr,
        warmup_steps=state.warmup_steps,
    )
    return new_params, new_state
