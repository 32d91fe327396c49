"""PD feedback, lead-lag feedforward, the Q low-pass, and the ACC/CACC/Eco-CACC assemblies."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ecocacc.plant import SpacingPolicy, VehicleParams, delay_samples

log = logging.getLogger(__name__)


class ControllerMode(str, Enum):
    ACC = "acc"
    CACC = "cacc"
    ECO_CACC = "eco_cacc"

    @property
    def cooperative(self) -> bool:
        return self is not ControllerMode.ACC


class LinkLossError(RuntimeError):
    """A cooperative step was requested without a lead-acceleration sample."""


class PdGains(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    K_p: float = Field(0.1, gt=0)
    K_d: float = Field(1.0, ge=0)


class LinkConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    beta: float = Field(0.3, ge=0)


class QFilterConfig(BaseModel):
    """Unity-gain low-pass 1/(f_c s + 1); ``f_c`` is a time constant in seconds."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    f_c: float = Field(gt=0)

    @model_validator(mode="before")
    @classmethod
    def _accept_shorthands(cls, data):
        if isinstance(data, str):
            try:
                return {"f_c": Q_PRESETS[data].f_c}
            except KeyError:
                raise ValueError(f"unknown Q preset {data!r}; expected one of {sorted(Q_PRESETS)}") from None
        if isinstance(data, dict) and "corner_hz" in data:
            data = dict(data)
            corner = data.pop("corner_hz")
            if "f_c" in data:
                raise ValueError("give either f_c or corner_hz, not both")
            if not isinstance(corner, (int, float)) or corner <= 0:
                raise ValueError("corner_hz must be a positive number")
            data["f_c"] = 1.0 / (2.0 * math.pi * corner)
        return data

    @classmethod
    def from_corner_hz(cls, corner_hz: float) -> "QFilterConfig":
        return cls(corner_hz=corner_hz)

    @property
    def corner_hz(self) -> float:
        return 1.0 / (2.0 * math.pi * self.f_c)


# Q1 corner sits below the 0.3 Hz erratic peak, Q2 above it.
Q_PRESETS = {
    "Q1": QFilterConfig(f_c=1.0 / (2.0 * math.pi * 0.1)),
    "Q2": QFilterConfig(f_c=1.0 / (2.0 * math.pi * 1.0)),
}
Q1 = Q_PRESETS["Q1"]
Q2 = Q_PRESETS["Q2"]


class ControllerSettings(BaseModel):
    """Controller section of a scenario; the vehicle is supplied separately."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    mode: ControllerMode = ControllerMode.ACC
    gains: PdGains = PdGains()
    policy: SpacingPolicy = SpacingPolicy()
    link: LinkConfig | None = None
    q: QFilterConfig | None = None
    on_link_loss: Literal["degrade", "raise"] = "degrade"

    @model_validator(mode="after")
    def _mode_requirements(self):
        if self.mode.cooperative and self.link is None:
            raise ValueError(f"mode {self.mode.value} requires a link (V2V delay beta)")
        if self.mode is ControllerMode.ECO_CACC and self.q is None:
            raise ValueError("mode eco_cacc requires a q filter")
        return self


class ControllerConfig(ControllerSettings):
    vehicle: VehicleParams = VehicleParams()


def pd_output(gains: PdGains, error: float, error_rate: float) -> float:
    return gains.K_p * error + gains.K_d * error_rate


@dataclass(frozen=True)
class FilterState:
    """Previous input/output of a first-order discrete section."""

    x_prev: float = 0.0
    y_prev: float = 0.0


def feedforward_step(
    state: FilterState, a_lead_delayed: float, tau: float, t_gap: float, dt: float
) -> tuple[FilterState, float]:
    """Bilinear discretization of (tau s + 1) / (t_gap s + 1)."""
    if tau <= 0 or t_gap <= 0 or dt <= 0:
        raise ValueError("tau, t_gap and dt must be positive")
    kn = 2.0 * tau / dt
    kd = 2.0 * t_gap / dt
    y = ((kn + 1.0) * a_lead_delayed + (1.0 - kn) * state.x_prev - (1.0 - kd) * state.y_prev) / (kd + 1.0)
    return FilterState(a_lead_delayed, y), y


def q_filter_step(state: FilterState, value: float, f_c: float, dt: float) -> tuple[FilterState, float]:
    """Step-invariant discretization of 1 / (f_c s + 1).

    Stays well behaved when f_c is far below dt (it collapses to a pass-through),
    where the bilinear map would put a pole next to z = -1.
    """
    if f_c <= 0 or dt <= 0:
        raise ValueError("f_c and dt must be positive")
    alpha = -math.expm1(-dt / f_c)
    y = state.y_prev + alpha * (value - state.y_prev)
    return FilterState(value, y), y


class CommLink:
    """Fixed transport delay on the received lead acceleration."""

    def __init__(self, beta: float, dt: float):
        self.beta = beta
        self.buffer: deque[float] = deque([0.0] * delay_samples(beta, dt, "communication delay"))

    def push(self, value: float) -> float:
        if not self.buffer:
            return value
        self.buffer.append(value)
        return self.buffer.popleft()


class Controller:
    """Stateful controller assembly for one ego vehicle.

    The mode may change between steps (the supervisor does this); the V2V delay
    line and the feedforward state carry over. The Q filter is primed with its
    input the first time Eco-CACC runs so a mode switch does not kick it.
    """

    def __init__(self, link: LinkConfig | None, dt: float):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.dt = dt
        self.link = CommLink(link.beta, dt) if link is not None else None
        self.ff_state = FilterState()
        self.q_state: FilterState | None = None
        self._warned_link_loss = False

    def step(self, config: ControllerConfig, spacing_error: float, error_rate: float, a_lead: float | None) -> float:
        u = pd_output(config.gains, spacing_error, error_rate)
        if a_lead is None:
            if config.mode.cooperative:
                if config.on_link_loss == "raise":
                    raise LinkLossError(f"{config.mode.value} step without a lead acceleration sample")
                if not self._warned_link_loss:
                    log.warning("lead acceleration unavailable; %s degrades to ACC", config.mode.value)
                    self._warned_link_loss = True
            return u
        if self.link is None:
            if config.mode.cooperative:
                raise LinkLossError(f"{config.mode.value} needs a configured V2V link")
            return u
        delayed = self.link.push(a_lead)
        if not config.mode.cooperative:
            return u
        ff_in = delayed
        if config.mode is ControllerMode.ECO_CACC:
            if self.q_state is None:
                self.q_state = FilterState(delayed, delayed)
            self.q_state, ff_in = q_filter_step(self.q_state, delayed, config.q.f_c, self.dt)
        self.ff_state, ff = feedforward_step(self.ff_state, ff_in, config.vehicle.tau, config.policy.t_gap, self.dt)
        return u + ff


def controller_step(
    controller: Controller,
    config: ControllerConfig,
    spacing_error: float,
    error_rate: float,
    a_lead: float | None,
) -> float:
    return controller.step(config, spacing_error, error_rate, a_lead)
