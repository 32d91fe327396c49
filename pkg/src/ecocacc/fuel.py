"""Power-based fuel estimate for the ego vehicle."""

from __future__ import annotations

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

GRAVITY = 9.81


class FuelModelParams(BaseModel):
    """Mid-size sedan defaults."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    vehicle_mass: float = Field(1500.0, gt=0)
    idle_rate: float = Field(1.4e-4, gt=0)
    drivetrain_efficiency: float = Field(0.30, gt=0, le=1)
    fuel_energy_density: float = Field(43e6, gt=0)
    rolling_coeff: float = Field(0.01, gt=0)
    drag_term: float = Field(0.39, gt=0)
    # injection is cut while decelerating harder than this
    fuel_cut_decel: float = Field(-0.5, le=0)


def tractive_power(v, a, params: FuelModelParams):
    m = params.vehicle_mass
    return v * (m * a + m * GRAVITY * params.rolling_coeff + params.drag_term * v * v)


def fuel_rate(v: float, a: float, params: FuelModelParams) -> float:
    """Instantaneous fuel mass flow in kg/s."""
    if v < 0:
        raise ValueError("speed must be non-negative")
    if v == 0:
        return params.idle_rate
    if a < params.fuel_cut_decel:
        return 0.0
    power = tractive_power(v, a, params)
    return params.idle_rate + max(power, 0.0) / (params.drivetrain_efficiency * params.fuel_energy_density)


def fuel_rates(v, a, params: FuelModelParams) -> np.ndarray:
    """Vectorised :func:`fuel_rate`."""
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    if np.any(v < 0):
        raise ValueError("speed must be non-negative")
    burn = np.maximum(tractive_power(v, a, params), 0.0) / (params.drivetrain_efficiency * params.fuel_energy_density)
    rate = params.idle_rate + burn
    rate = np.where(a < params.fuel_cut_decel, 0.0, rate)
    return np.where(v == 0, params.idle_rate, rate)


class FuelLedger:
    """Online trapezoid integration of the fuel rate."""

    def __init__(self, dt: float):
        self.dt = dt
        self.cumulative_kg = 0.0
        self.rates: list[float] = []

    def add(self, rate: float) -> float:
        if self.rates:
            self.cumulative_kg += 0.5 * (self.rates[-1] + rate) * self.dt
        self.rates.append(rate)
        return self.cumulative_kg


def integrate_rates(rates, dt: float) -> float:
    r = np.asarray(rates, dtype=float)
    if r.size < 2:
        return 0.0
    return float(np.sum(r[1:] + r[:-1]) * 0.5 * dt)


def trip_fuel(trace, params: FuelModelParams) -> float:
    """Trip fuel in kg for anything carrying ``dt``, ``v_ego`` and ``a_ego``."""
    if len(trace.v_ego) == 0:
        raise ValueError("empty trace")
    return integrate_rates(fuel_rates(trace.v_ego, trace.a_ego, params), trace.dt)
