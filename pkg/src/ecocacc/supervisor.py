"""High-level mode supervisor: CACC following, then Eco-CACC, then constant-speed cruise."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ecocacc.controllers import Q1, ControllerMode, QFilterConfig
from ecocacc.signals import (
    DEFAULT_INDEX_WINDOW,
    DEFAULT_V_FLOOR,
    ERRATIC_SPEC,
    NORMAL_SPEC,
    SpeedProfile,
    generate_profile,
    index_series,
    window_samples,
)


class CalibrationError(ValueError):
    pass


class SupervisorMode(str, Enum):
    CACC_FOLLOW = "cacc_follow"
    ECO_FOLLOW = "eco_follow"
    CRUISE = "cruise"

    @property
    def rank(self) -> int:
        return _RANK[self]


_RANK = {SupervisorMode.CACC_FOLLOW: 0, SupervisorMode.ECO_FOLLOW: 1, SupervisorMode.CRUISE: 2}


class SupervisorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    # None: calibrate on the canonical normal/erratic profiles at run time
    index_threshold: float | None = Field(None, gt=0)
    index_window: float = Field(DEFAULT_INDEX_WINDOW, gt=0)
    v_floor: float = Field(DEFAULT_V_FLOOR, gt=0)
    min_eco_duration: float = Field(10.0, gt=0)
    cruise_speed_source: Literal["freeze_current"] | float = "freeze_current"
    cruise_gain: float = Field(1.0, gt=0)
    cacc_t_gap: float = Field(0.6, gt=0)
    eco_t_gap: float = Field(1.0, gt=0)
    eco_filter: QFilterConfig = Q1


@dataclass(frozen=True)
class Directive:
    mode: SupervisorMode
    controller: ControllerMode | None
    t_gap: float | None
    target_speed: float | None
    index: float


@dataclass(frozen=True)
class Transition:
    time: float
    from_mode: SupervisorMode
    to_mode: SupervisorMode
    index: float

    def as_dict(self) -> dict:
        return {"time": self.time, "from": self.from_mode.value, "to": self.to_mode.value, "index": self.index}


@dataclass
class SupervisorState:
    """Owned by one simulation; mutated in place by :func:`supervisor_step`."""

    window_len: int
    mode: SupervisorMode = SupervisorMode.CACC_FOLLOW
    steps: int = 0
    mode_steps: int = 0
    target_speed: float | None = None
    squares: deque = field(default_factory=deque)
    sum_sq: float = 0.0
    transitions: list[Transition] = field(default_factory=list)
    _since_resum: int = 0

    @classmethod
    def create(cls, config: SupervisorConfig, dt: float) -> "SupervisorState":
        return cls(window_len=window_samples(config.index_window, dt))

    def push(self, a_lead: float) -> None:
        sq = a_lead * a_lead
        self.squares.append(sq)
        self.sum_sq += sq
        if len(self.squares) > self.window_len:
            self.sum_sq -= self.squares.popleft()
        self._since_resum += 1
        if self._since_resum >= self.window_len:
            # bound floating drift of the running sum
            self.sum_sq = math.fsum(self.squares)
            self._since_resum = 0


def supervisor_step(
    state: SupervisorState,
    config: SupervisorConfig,
    a_lead: float,
    v_lead: float,
    lane_clear: bool,
    dt: float,
    v_ego: float = 0.0,
    threshold: float | None = None,
) -> tuple[SupervisorState, Directive]:
    """Update the rolling index and the mode; return the directive for this step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    threshold = config.index_threshold if threshold is None else threshold
    if threshold is None:
        raise ValueError("no index threshold configured or supplied")

    state.push(a_lead)
    index = float(state.sum_sq / max(v_lead, config.v_floor))

    nxt = state.mode
    if state.mode is SupervisorMode.CACC_FOLLOW and index > threshold:
        nxt = SupervisorMode.ECO_FOLLOW

    time_in_mode = state.mode_steps * dt
    if state.mode is SupervisorMode.ECO_FOLLOW and time_in_mode >= config.min_eco_duration - 1e-9 and lane_clear:
        nxt = SupervisorMode.CRUISE

    if nxt is not state.mode:
        state.transitions.append(Transition(state.steps * dt, state.mode, nxt, index))
        if nxt is SupervisorMode.CRUISE:
            src = config.cruise_speed_source
            state.target_speed = float(v_ego if src == "freeze_current" else src)
        state.mode = nxt
        state.mode_steps = 0

    state.steps += 1
    state.mode_steps += 1
    return state, _directive(state, config, index)


def _directive(state: SupervisorState, config: SupervisorConfig, index: float) -> Directive:
    if state.mode is SupervisorMode.CACC_FOLLOW:
        return Directive(state.mode, ControllerMode.CACC, config.cacc_t_gap, None, index)
    if state.mode is SupervisorMode.ECO_FOLLOW:
        return Directive(state.mode, ControllerMode.ECO_CACC, config.eco_t_gap, None, index)
    return Directive(state.mode, None, None, state.target_speed, index)


def _cruise_span(profile: SpeedProfile) -> tuple[int, int]:
    if profile.cruise is not None:
        return profile.cruise
    # loaded series: the stretch between first and last sample above 90% of the top speed
    fast = np.flatnonzero(profile.speeds >= 0.9 * profile.speeds.max())
    return int(fast[0]), int(fast[-1])


def calibrate_threshold(
    normal: SpeedProfile,
    erratic: SpeedProfile,
    window: float = DEFAULT_INDEX_WINDOW,
    v_floor: float = DEFAULT_V_FLOOR,
) -> float:
    """Geometric midpoint between the normal profile's peak index and the erratic cruise minimum.

    The normal peak is taken over the whole profile (the supervisor sees all of it);
    the erratic minimum over windows lying entirely in its cruise phase.
    """
    if not math.isclose(normal.dt, erratic.dt, rel_tol=1e-12):
        raise CalibrationError("profiles must share dt")
    width = window_samples(window, erratic.dt)
    i_normal = float(np.max(index_series(normal, window, v_floor)))
    c0, c1 = _cruise_span(erratic)
    first_full = c0 + width - 1
    if first_full > c1:
        raise CalibrationError("erratic cruise phase is shorter than the index window")
    i_erratic = float(np.min(index_series(erratic, window, v_floor)[first_full : c1 + 1]))
    if not i_normal < i_erratic:
        raise CalibrationError(
            f"profiles not separable at a {window} s window: normal peak {i_normal:.6g} >= erratic minimum {i_erratic:.6g}"
        )
    if i_normal <= 0:
        raise CalibrationError("normal profile has zero index everywhere; threshold would be 0")
    return math.sqrt(i_normal * i_erratic)


def canonical_threshold(dt: float, window: float = DEFAULT_INDEX_WINDOW, v_floor: float = DEFAULT_V_FLOOR) -> float:
    return calibrate_threshold(generate_profile(NORMAL_SPEC, dt), generate_profile(ERRATIC_SPEC, dt), window, v_floor)
