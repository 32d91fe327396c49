"""String-stability transfer functions on a frequency grid, and the PD gain search."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ecocacc.controllers import ControllerMode, PdGains, QFilterConfig
from ecocacc.plant import SpacingPolicy, VehicleParams, frequency_response_plant

STABILITY_TOL = 1e-3
# |1 + C_fb G H| below this on the grid means a closed-loop resonance
MIN_DENOMINATOR = 1e-6


class ResonanceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class FrequencyGrid:
    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("a frequency grid needs at least 2 points")
        if np.any(pts <= 0):
            raise ValueError("grid frequencies must be positive")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid frequencies must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def log(cls, lo: float = 1e-3, hi: float = 1e3, n: int = 6001) -> "FrequencyGrid":
        return cls(np.logspace(math.log10(lo), math.log10(hi), n))

    def refined(self, factor: int = 2) -> "FrequencyGrid":
        lo, hi = math.log10(self.points[0]), math.log10(self.points[-1])
        return FrequencyGrid(np.logspace(lo, hi, (self.points.size - 1) * factor + 1))


class StabilityCase(BaseModel):
    """Everything needed to evaluate the three string-stability functions."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    vehicle: VehicleParams = VehicleParams()
    policy: SpacingPolicy = SpacingPolicy()
    gains: PdGains = PdGains()
    beta: float = Field(0.3, ge=0)
    q: QFilterConfig | None = None


def spacing_policy_response(policy: SpacingPolicy, omega):
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise ValueError("omega must be non-negative")
    h = 1.0 + 1j * w * policy.t_gap
    return h if h.ndim else complex(h)


def feedback_response(gains: PdGains, omega):
    return gains.K_p + gains.K_d * 1j * np.asarray(omega, dtype=float)


def feedforward_response(tau: float, t_gap: float, omega):
    s = 1j * np.asarray(omega, dtype=float)
    return (tau * s + 1.0) / (t_gap * s + 1.0)


def q_response(q: QFilterConfig, omega):
    return 1.0 / (q.f_c * 1j * np.asarray(omega, dtype=float) + 1.0)


def _loop(omega, gains: PdGains, vehicle: VehicleParams, policy: SpacingPolicy):
    w = np.asarray(omega, dtype=float)
    g = np.asarray(frequency_response_plant(vehicle, w))
    c = feedback_response(gains, w)
    den = 1.0 + c * g * spacing_policy_response(policy, w)
    smallest = float(np.min(np.abs(den)))
    if smallest < MIN_DENOMINATOR:
        raise ResonanceError(f"|1 + C_fb G H| = {smallest:.3g} on the grid: closed loop is at a resonance")
    return w, c, g, den


def _scalar(x):
    return complex(x) if np.ndim(x) == 0 else x


def ss_acc(omega, gains: PdGains, vehicle: VehicleParams, policy: SpacingPolicy):
    _, c, g, den = _loop(omega, gains, vehicle, policy)
    return _scalar(c * g / den)


def ss_cacc(omega, gains: PdGains, vehicle: VehicleParams, policy: SpacingPolicy, beta: float):
    w, c, g, den = _loop(omega, gains, vehicle, policy)
    s = 1j * w
    ff = s**2 * np.exp(-beta * s) * feedforward_response(vehicle.tau, policy.t_gap, w)
    return _scalar((c + ff) * g / den)


def ss_eco_cacc(omega, gains: PdGains, vehicle: VehicleParams, policy: SpacingPolicy, beta: float, q: QFilterConfig):
    w, c, g, den = _loop(omega, gains, vehicle, policy)
    s = 1j * w
    ff = s**2 * np.exp(-beta * s) * feedforward_response(vehicle.tau, policy.t_gap, w) * q_response(q, w)
    return _scalar((c + ff) * g / den)


def ss_response(mode: ControllerMode | str, case: StabilityCase, omega):
    mode = ControllerMode(mode)
    if mode is ControllerMode.ACC:
        return ss_acc(omega, case.gains, case.vehicle, case.policy)
    if mode is ControllerMode.CACC:
        return ss_cacc(omega, case.gains, case.vehicle, case.policy, case.beta)
    if case.q is None:
        raise ValueError("eco_cacc evaluation needs a q filter in the case")
    return ss_eco_cacc(omega, case.gains, case.vehicle, case.policy, case.beta, case.q)


def pade_delay(delay: float, order: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Numerator/denominator polynomials (highest power first) approximating e^{-delay s}."""
    if delay == 0:
        return np.array([1.0]), np.array([1.0])
    coef = [
        math.factorial(2 * order - k) * math.factorial(order)
        / (math.factorial(2 * order) * math.factorial(k) * math.factorial(order - k))
        * delay**k
        for k in range(order + 1)
    ]
    num = np.array([c * (-1) ** k for k, c in enumerate(coef)])[::-1]
    den = np.array(coef)[::-1]
    return num, den


def closed_loop_poles(gains: PdGains, vehicle: VehicleParams, policy: SpacingPolicy, pade_order: int = 4) -> np.ndarray:
    """Roots of s^2 (tau s + 1) + (K_p + K_d s) K_v e^{-kappa s} (1 + t_gap s), delay via Pade."""
    num, den = pade_delay(vehicle.kappa, pade_order)
    open_den = np.polymul([vehicle.tau, 1.0, 0.0, 0.0], den)
    open_num = vehicle.K_v * np.polymul(np.polymul([gains.K_d, gains.K_p], [policy.t_gap, 1.0]), num)
    return np.roots(np.polyadd(open_den, open_num))


def is_closed_loop_stable(gains: PdGains, vehicle: VehicleParams, policy: SpacingPolicy) -> bool:
    return bool(np.all(closed_loop_poles(gains, vehicle, policy).real < 0))


@dataclass(frozen=True)
class StabilityReport:
    label: str
    omegas: np.ndarray
    magnitudes: np.ndarray
    inf_norm: float
    argmax_omega: float
    is_string_stable: bool
    tol: float = STABILITY_TOL
    closed_loop_stable: bool | None = None
    exceedance_bands: list[tuple[float, float]] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "label": self.label,
            "inf_norm": self.inf_norm,
            "argmax_omega": self.argmax_omega,
            "is_string_stable": self.is_string_stable,
            "tol": self.tol,
            "closed_loop_stable": self.closed_loop_stable,
            "exceedance_bands": [list(b) for b in self.exceedance_bands],
        }

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["omega_rad_s", "magnitude"])
            for w, m in zip(self.omegas, self.magnitudes):
                writer.writerow([f"{w:.9g}", f"{m:.9g}"])


def exceedance_bands(omegas: np.ndarray, magnitudes: np.ndarray, limit: float) -> list[tuple[float, float]]:
    """Contiguous grid runs where the magnitude exceeds ``limit``, as (first, last) omega."""
    above = np.concatenate(([False], magnitudes > limit, [False]))
    edges = np.flatnonzero(np.diff(above.astype(np.int8)))
    return [(float(omegas[a]), float(omegas[b - 1])) for a, b in zip(edges[::2], edges[1::2])]


def grid_inf_norm(
    controller: ControllerMode | str | Callable,
    case: StabilityCase | None = None,
    grid: FrequencyGrid | None = None,
    tol: float = STABILITY_TOL,
    label: str | None = None,
) -> StabilityReport:
    """Max of |SS(j omega)| over the grid.

    ``controller`` is a controller mode evaluated with ``case``, or any callable
    mapping an omega array to complex responses.
    """
    grid = grid or FrequencyGrid.log()
    w = grid.points
    if callable(controller):
        values = np.broadcast_to(np.asarray(controller(w), dtype=complex), w.shape)
        label = label or getattr(controller, "__name__", "custom")
        cl_stable = None
    else:
        mode = ControllerMode(controller)
        if case is None:
            raise ValueError("a StabilityCase is required for a named controller")
        values = ss_response(mode, case, w)
        label = label or mode.value
        cl_stable = is_closed_loop_stable(case.gains, case.vehicle, case.policy)
    mags = np.abs(values)
    k = int(np.argmax(mags))
    inf_norm = float(mags[k])
    return StabilityReport(
        label=label,
        omegas=w,
        magnitudes=mags,
        inf_norm=inf_norm,
        argmax_omega=float(w[k]),
        is_string_stable=inf_norm <= 1.0 + tol,
        tol=tol,
        closed_loop_stable=cl_stable,
        exceedance_bands=exceedance_bands(w, mags, 1.0 + tol),
    )


@dataclass(frozen=True)
class GainSearchResult:
    gains: PdGains
    inf_norm: float
    constraint_met: bool
    evaluated: int


def search_gains(
    vehicle: VehicleParams,
    policy: SpacingPolicy,
    beta: float,
    kp_values=None,
    kd_values=None,
    grid: FrequencyGrid | None = None,
) -> GainSearchResult:
    """Coarse grid search for the PD pair minimising the CACC string-stability norm.

    Pairs with an unstable closed loop are skipped. Pairs meeting the norm <= 1
    constraint are preferred; when none does, the unconstrained minimiser is
    returned with ``constraint_met=False``. Ties go to the smaller K_p, then K_d.
    """
    if kp_values is None:
        kp_values = np.round(np.arange(0.1, 2.0 + 1e-9, 0.05), 10)
    if kd_values is None:
        kd_values = np.round(np.arange(0.0, 1.0 + 1e-9, 0.05), 10)
    grid = grid or FrequencyGrid.log(1e-2, 1e2, 2001)
    best: tuple[float, float, float] | None = None
    best_feasible: tuple[float, float, float] | None = None
    count = 0
    for kp in kp_values:
        for kd in kd_values:
            gains = PdGains(K_p=float(kp), K_d=float(kd))
            if not is_closed_loop_stable(gains, vehicle, policy):
                continue
            try:
                norm = float(np.max(np.abs(ss_cacc(grid.points, gains, vehicle, policy, beta))))
            except ResonanceError:
                continue
            count += 1
            cand = (norm, float(kp), float(kd))
            if best is None or cand < best:
                best = cand
            if norm <= 1.0 + STABILITY_TOL and (best_feasible is None or cand < best_feasible):
                best_feasible = cand
    if best is None:
        raise ValueError("no closed-loop stable gain pair in the search box")
    chosen = best_feasible or best
    return GainSearchResult(
        gains=PdGains(K_p=chosen[1], K_d=chosen[2]),
        inf_norm=chosen[0],
        constraint_met=best_feasible is not None,
        evaluated=count,
    )
