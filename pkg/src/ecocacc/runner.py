"""Scenario loading, the two-vehicle simulation loop, and result files."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ecocacc import __version__
from ecocacc.controllers import Controller, ControllerConfig, ControllerMode, ControllerSettings
from ecocacc.fuel import FuelLedger, FuelModelParams, fuel_rate
from ecocacc.plant import VehicleParams, desired_distance, initial_state, spacing_error, step_plant
from ecocacc.signals import ProfileSpec, SpeedProfile, differentiate, generate_profile, load_speed_series
from ecocacc.supervisor import (
    SupervisorConfig,
    SupervisorMode,
    SupervisorState,
    canonical_threshold,
    supervisor_step,
)

TRACE_COLUMNS = (
    "t",
    "x_lead",
    "v_lead",
    "a_lead",
    "x_ego",
    "v_ego",
    "a_ego",
    "spacing_error",
    "desired_gap",
    "command",
    "active_mode",
    "fuel_rate",
    "cumulative_fuel",
)
CRUISE_LABEL = "cruise"
# time-gap statistics ignore samples slower than this
MIN_SPEED_FOR_TIME_GAP = 1.0


class ScenarioError(ValueError):
    pass


class SimulationAbort(RuntimeError):
    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


class CollisionError(SimulationAbort):
    pass


class NumericalError(SimulationAbort):
    pass


class LeadConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    profile: ProfileSpec | None = None
    series_file: str | None = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.profile is None) == (self.series_file is None):
            raise ValueError("lead needs exactly one of 'profile' or 'series_file'")
        return self


class OutputNames(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    trace: str = "trace.csv"
    report: str = "report.json"


class Scenario(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    label: str = "run"
    dt: float = Field(0.01, gt=0)
    duration: float = Field(0.0, ge=0)
    lead: LeadConfig
    initial_gap: float | None = Field(None, gt=0)
    vehicle: VehicleParams = VehicleParams()
    controller: ControllerSettings = ControllerSettings()
    supervisor: SupervisorConfig | None = None
    lane_clear_time: float | None = Field(None, ge=0)
    fuel: FuelModelParams = FuelModelParams()
    output: OutputNames = OutputNames()

    @model_validator(mode="after")
    def _consistency(self):
        if self.supervisor is not None and self.controller.mode is not ControllerMode.CACC:
            raise ValueError("a supervised run starts in CACC: controller.mode must be 'cacc'")
        if self.initial_gap is not None and self.initial_gap < self.controller.policy.d_st:
            raise ValueError("initial_gap is below the standstill distance d_st")
        return self

    @property
    def controller_config(self) -> ControllerConfig:
        return ControllerConfig(**self.controller.model_dump(), vehicle=self.vehicle)

    def lead_profile(self, base_dir: Path | None = None) -> SpeedProfile:
        if self.lead.profile is not None:
            return generate_profile(self.lead.profile, self.dt)
        path = Path(self.lead.series_file)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return load_speed_series(path, self.dt)


def _format_validation(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_scenario(data: dict, base_dir: Path | None = None, source: str = "<scenario>") -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError(f"{source}: top level must be a mapping")
    lead = data.get("lead")
    if base_dir is not None and isinstance(lead, dict) and isinstance(lead.get("series_file"), str):
        p = Path(lead["series_file"])
        if not p.is_absolute():
            data = {**data, "lead": {**lead, "series_file": str((base_dir / p).resolve())}}
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError(f"{source}: {_format_validation(exc)}") from None


def load_scenario(path: str | Path, dt: float | None = None) -> Scenario:
    """Read and validate a YAML scenario; unknown keys are rejected."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror or exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        raise ScenarioError(f"{where}: {exc.problem}") from None
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    if data is None:
        raise ScenarioError(f"{path}: empty scenario file")
    if isinstance(data, dict) and "label" not in data:
        data = {"label": path.stem, **data}
    if dt is not None and isinstance(data, dict):
        data = {**data, "dt": dt}
    return parse_scenario(data, base_dir=path.parent, source=str(path))


def dump_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.model_dump(mode="json"), sort_keys=False)


@dataclass
class SimTrace:
    dt: float
    t: np.ndarray
    x_lead: np.ndarray
    v_lead: np.ndarray
    a_lead: np.ndarray
    x_ego: np.ndarray
    v_ego: np.ndarray
    a_ego: np.ndarray
    spacing_error: np.ndarray
    desired_gap: np.ndarray
    command: np.ndarray
    active_mode: list[str]
    fuel_rate: np.ndarray
    cumulative_fuel: np.ndarray

    def __len__(self) -> int:
        return self.t.size

    @property
    def gap(self) -> np.ndarray:
        return self.x_lead - self.x_ego

    @property
    def following(self) -> np.ndarray:
        return np.array([m != CRUISE_LABEL for m in self.active_mode])


@dataclass
class RunReport:
    label: str
    scenario: dict
    steps: int
    duration: float
    total_fuel_kg: float
    transitions: list[dict] = field(default_factory=list)
    spacing_error_min: float = math.nan
    spacing_error_mean: float = math.nan
    spacing_error_max_abs: float = math.nan
    min_time_gap: float | None = None
    collision: bool = False
    index_threshold: float | None = None
    baseline_label: str | None = None
    baseline_fuel_kg: float | None = None
    reduction_pct: float | None = None
    version: str = __version__

    def with_baseline(self, label: str, fuel_kg: float) -> "RunReport":
        self.baseline_label = label
        self.baseline_fuel_kg = fuel_kg
        self.reduction_pct = reduction_pct(fuel_kg, self.total_fuel_kg)
        return self

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "label": self.label,
            "steps": self.steps,
            "duration_s": self.duration,
            "total_fuel_kg": self.total_fuel_kg,
            "baseline": None
            if self.baseline_label is None
            else {"label": self.baseline_label, "total_fuel_kg": self.baseline_fuel_kg, "reduction_pct": self.reduction_pct},
            "transitions": self.transitions,
            "spacing_error": {
                "min": self.spacing_error_min,
                "mean": self.spacing_error_mean,
                "max_abs": self.spacing_error_max_abs,
            },
            "min_time_gap_s": self.min_time_gap,
            "collision": self.collision,
            "index_threshold": self.index_threshold,
            "scenario": self.scenario,
        }


def reduction_pct(baseline_kg: float, this_kg: float) -> float:
    """Percent fuel saved relative to the baseline run."""
    if baseline_kg <= 0:
        raise ValueError("baseline fuel must be positive")
    return (baseline_kg - this_kg) / baseline_kg * 100.0


def _lead_arrays(profile: SpeedProfile, n: int, x0: float):
    v = np.full(n, profile.speeds[-1])
    v[: min(n, len(profile))] = profile.speeds[:n]
    a = np.zeros(n)
    a[: min(n, len(profile))] = differentiate(profile)[:n]
    x = x0 + np.concatenate(([0.0], np.cumsum((v[1:] + v[:-1]) * 0.5 * profile.dt)))
    return x, v, a


def run_convoy(scenario: Scenario, abort_on_collision: bool = True, base_dir: Path | None = None) -> tuple[SimTrace, RunReport]:
    """Fixed-step lead/ego simulation for one scenario."""
    dt = scenario.dt
    profile = scenario.lead_profile(base_dir)
    horizon = max(scenario.duration, profile.duration)
    n = int(round(horizon / dt)) + 1
    base_cfg = scenario.controller_config
    sup_cfg = scenario.supervisor

    configs = {base_cfg.mode: base_cfg}
    first_t_gap = base_cfg.policy.t_gap
    threshold = None
    if sup_cfg is not None:
        first_t_gap = sup_cfg.cacc_t_gap
        configs = {
            ControllerMode.CACC: base_cfg.model_copy(
                update={"mode": ControllerMode.CACC, "policy": base_cfg.policy.model_copy(update={"t_gap": sup_cfg.cacc_t_gap})}
            ),
            ControllerMode.ECO_CACC: base_cfg.model_copy(
                update={
                    "mode": ControllerMode.ECO_CACC,
                    "policy": base_cfg.policy.model_copy(update={"t_gap": sup_cfg.eco_t_gap}),
                    "q": sup_cfg.eco_filter,
                }
            ),
        }
        threshold = sup_cfg.index_threshold
        if threshold is None:
            threshold = canonical_threshold(dt, sup_cfg.index_window, sup_cfg.v_floor)

    v0 = float(profile.speeds[0])
    gap0 = scenario.initial_gap
    if gap0 is None:
        gap0 = desired_distance(base_cfg.policy.model_copy(update={"t_gap": first_t_gap}), v0)
    if gap0 < desired_distance(base_cfg.policy.model_copy(update={"t_gap": first_t_gap}), v0) - 1e-9:
        raise ScenarioError("initial_gap is below the desired distance at the initial speed")

    x_l, v_l, a_l = _lead_arrays(profile, n, gap0)
    plant = initial_state(scenario.vehicle, dt, position=0.0, speed=v0)
    controller = Controller(base_cfg.link, dt)
    sup_state = SupervisorState.create(sup_cfg, dt) if sup_cfg is not None else None
    ledger = FuelLedger(dt)

    cols = {name: np.empty(n) for name in TRACE_COLUMNS if name != "active_mode"}
    modes: list[str] = []
    collided = False
    fixed_cfg = configs[base_cfg.mode]

    for k in range(n):
        t = k * dt
        x_e, v_e, a_e = plant.position, plant.speed, plant.lagged_accel
        if sup_state is not None:
            lane_clear = scenario.lane_clear_time is not None and t >= scenario.lane_clear_time
            sup_state, directive = supervisor_step(
                sup_state, sup_cfg, a_l[k], v_l[k], lane_clear, dt, v_ego=v_e, threshold=threshold
            )
            cfg = configs[directive.controller] if directive.controller is not None else None
        else:
            directive = None
            cfg = fixed_cfg

        if cfg is None:
            policy = configs[ControllerMode.ECO_CACC].policy
            label = CRUISE_LABEL
            u = sup_cfg.cruise_gain * (directive.target_speed - v_e)
        else:
            policy = cfg.policy
            label = cfg.mode.value
        desired = desired_distance(policy, v_e)
        err = spacing_error(x_l[k], x_e, v_e, policy)
        if cfg is not None:
            if x_l[k] - x_e <= 0:
                collided = True
                if abort_on_collision:
                    raise CollisionError(f"ego reached the lead vehicle at t={t:.2f} s (gap {x_l[k] - x_e:.3f} m)", k)
            err_rate = (v_l[k] - v_e) - policy.t_gap * a_e
            u = controller.step(cfg, err, err_rate, a_l[k])
        if not (math.isfinite(u) and math.isfinite(x_e) and math.isfinite(v_e) and math.isfinite(a_e)):
            raise NumericalError(f"non-finite state or command at t={t:.2f} s", k)

        rate = fuel_rate(v_e, a_e, scenario.fuel)
        cols["t"][k] = t
        cols["x_lead"][k] = x_l[k]
        cols["v_lead"][k] = v_l[k]
        cols["a_lead"][k] = a_l[k]
        cols["x_ego"][k] = x_e
        cols["v_ego"][k] = v_e
        cols["a_ego"][k] = a_e
        cols["spacing_error"][k] = err
        cols["desired_gap"][k] = desired
        cols["command"][k] = u
        cols["fuel_rate"][k] = rate
        cols["cumulative_fuel"][k] = ledger.add(rate)
        modes.append(label)

        plant = step_plant(plant, u, scenario.vehicle, dt)

    trace = SimTrace(dt=dt, active_mode=modes, **cols)
    report = _summarise(scenario, trace, ledger.cumulative_kg, collided, threshold, sup_state)
    return trace, report


def _summarise(scenario, trace: SimTrace, fuel_kg, collided, threshold, sup_state) -> RunReport:
    follow = trace.following
    err = trace.spacing_error[follow]
    d_st = scenario.controller.policy.d_st
    moving = follow & (trace.v_ego > MIN_SPEED_FOR_TIME_GAP)
    time_gaps = (trace.gap[moving] - d_st) / trace.v_ego[moving]
    return RunReport(
        label=scenario.label,
        scenario=scenario.model_dump(mode="json"),
        steps=len(trace),
        duration=float(trace.t[-1]),
        total_fuel_kg=fuel_kg,
        transitions=[tr.as_dict() for tr in sup_state.transitions] if sup_state is not None else [],
        spacing_error_min=float(err.min()) if err.size else math.nan,
        spacing_error_mean=float(err.mean()) if err.size else math.nan,
        spacing_error_max_abs=float(np.abs(err).max()) if err.size else math.nan,
        min_time_gap=float(time_gaps.min()) if time_gaps.size else None,
        collision=collided,
        index_threshold=threshold,
    )


def trace_csv(trace: SimTrace, report: RunReport) -> str:
    buf = io.StringIO()
    buf.write(f"# ecocacc {report.version}\n")
    buf.write("# scenario: " + json.dumps(report.scenario, sort_keys=True, separators=(",", ":")) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    numeric = [getattr(trace, c) for c in TRACE_COLUMNS if c != "active_mode"]
    mode_at = TRACE_COLUMNS.index("active_mode")
    for k in range(len(trace)):
        row = [f"{col[k]:.10g}" for col in numeric]
        row.insert(mode_at, trace.active_mode[k])
        writer.writerow(row)
    return buf.getvalue()


def read_trace_csv(path: str | Path) -> dict[str, np.ndarray | list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    header, body = rows[0], rows[1:]
    out: dict[str, np.ndarray | list[str]] = {}
    for j, name in enumerate(header):
        values = [r[j] for r in body]
        out[name] = values if name == "active_mode" else np.array(values, dtype=float)
    return out


def report_json(report: RunReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(trace: SimTrace, report: RunReport, out_dir: str | Path, names: OutputNames | None = None) -> tuple[Path, Path]:
    """Write the trace CSV and the JSON report; returns their paths."""
    names = names or OutputNames()
    out_dir = Path(out_dir)
    trace_path = out_dir / names.trace
    report_path = out_dir / names.report
    try:
        atomic_write(trace_path, trace_csv(trace, report))
        atomic_write(report_path, report_json(report))
    except OSError as exc:
        raise OSError(f"cannot write outputs to {out_dir}: {exc}") from exc
    return trace_path, report_path


def compare_reports(reports: list[RunReport]) -> dict:
    """Fuel table with the first report as baseline."""
    base = reports[0]
    rows = []
    for rep in reports:
        rows.append(
            {
                "label": rep.label,
                "total_fuel_kg": rep.total_fuel_kg,
                "reduction_pct": None if rep is base else reduction_pct(base.total_fuel_kg, rep.total_fuel_kg),
            }
        )
    return {"version": __version__, "baseline": base.label, "runs": rows}
