"""Ego longitudinal model K_v e^{-kappa s} / (s^2 (tau s + 1)) and spacing geometry."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

log = logging.getLogger(__name__)


class VehicleParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    K_v: float = Field(1.0, gt=0)
    tau: float = Field(0.5, gt=0)
    kappa: float = Field(0.0, ge=0)


class SpacingPolicy(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    d_st: float = Field(10.0, ge=0)
    t_gap: float = Field(0.6, gt=0)


def desired_distance(policy: SpacingPolicy, v_ego: float) -> float:
    return policy.d_st + policy.t_gap * v_ego


def spacing_error(x_lead: float, x_ego: float, v_ego: float, policy: SpacingPolicy) -> float:
    """Gap minus desired gap; positive when the ego has fallen behind."""
    return (x_lead - x_ego) - desired_distance(policy, v_ego)


def delay_samples(delay: float, dt: float, what: str = "delay") -> int:
    """Whole number of samples for a transport delay; warns when rounding."""
    if delay < 0:
        raise ValueError(f"{what} must be non-negative")
    exact = delay / dt
    n = int(round(exact))
    if abs(exact - n) > 1e-6:
        log.warning("%s %.6g s is not a multiple of dt=%.6g s; rounded to %d samples", what, delay, dt, n)
    return n


@dataclass(frozen=True)
class PlantState:
    position: float = 0.0
    speed: float = 0.0
    lagged_accel: float = 0.0
    delay_buffer: tuple[float, ...] = ()


def initial_state(params: VehicleParams, dt: float, position: float = 0.0, speed: float = 0.0) -> PlantState:
    n = delay_samples(params.kappa, dt, "actuator delay")
    return PlantState(position=position, speed=speed, lagged_accel=0.0, delay_buffer=(0.0,) * n)


def step_plant(state: PlantState, command: float, params: VehicleParams, dt: float) -> PlantState:
    """Advance one step: delay line, forward-Euler lag, semi-implicit kinematics."""
    if state.delay_buffer:
        applied = state.delay_buffer[0]
        buffer = state.delay_buffer[1:] + (command,)
    else:
        applied = command
        buffer = ()
    accel = state.lagged_accel + dt / params.tau * (params.K_v * applied - state.lagged_accel)
    speed = state.speed + dt * accel
    if speed < 0.0:
        # no reversing; also drop negative lag state so it cannot wind up at rest
        speed = 0.0
        accel = max(accel, 0.0)
    position = state.position + dt * speed
    return PlantState(position=position, speed=speed, lagged_accel=accel, delay_buffer=buffer)


def frequency_response_plant(params: VehicleParams, omega):
    """G(j omega); ``omega`` may be a scalar or an array of positive values."""
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise ValueError("plant response is singular at omega <= 0")
    s = 1j * w
    g = params.K_v * np.exp(-s * params.kappa) / (s**2 * (params.tau * s + 1.0))
    return g if g.ndim else complex(g)
