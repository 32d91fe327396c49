"""Command-line entry point: ``ecocacc <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ecocacc import __version__
from ecocacc.controllers import ControllerMode
from ecocacc.runner import (
    ScenarioError,
    SimulationAbort,
    compare_reports,
    load_scenario,
    run_convoy,
    write_outputs,
    atomic_write,
)
from ecocacc.signals import (
    SpeedProfile,
    difference_spectrum,
    dominant_frequency,
    load_speed_series,
    magnitude_spectrum,
)
from ecocacc.stability import FrequencyGrid, StabilityCase, grid_inf_norm, search_gains
from ecocacc.supervisor import CalibrationError, calibrate_threshold

log = logging.getLogger("ecocacc")


class GridSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    lo: float = Field(1e-3, gt=0)
    hi: float = Field(1e3, gt=0)
    points: int = Field(6001, ge=2000)


class StabilityConfig(StabilityCase):
    label: str = "stability"
    grid: GridSpec = GridSpec()


def load_stability_config(path: str | Path) -> StabilityConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror or exc}") from None
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    try:
        return StabilityConfig.model_validate(data)
    except ValidationError as exc:
        msgs = "; ".join(f"{'.'.join(map(str, e['loc']))}: {e['msg']}" for e in exc.errors())
        raise ScenarioError(f"{path}: {msgs}") from None


def _profile_from(path: str, dt: float | None) -> SpeedProfile:
    if path.endswith(".csv"):
        return load_speed_series(path, dt)
    scenario = load_scenario(path, dt=dt)
    return scenario.lead_profile()


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario, dt=args.dt)
    trace, report = run_convoy(scenario)
    if args.baseline:
        base = json.loads(Path(args.baseline).read_text())
        report.with_baseline(base["label"], base["total_fuel_kg"])
    out_dir = Path(args.out_dir)
    trace_path, report_path = write_outputs(trace, report, out_dir, scenario.output)
    print(f"{report.label}: {report.total_fuel_kg:.6f} kg over {report.duration:.2f} s", end="")
    if report.reduction_pct is not None:
        print(f" ({report.reduction_pct:+.2f}% vs {report.baseline_label})", end="")
    print(f"\nwrote {trace_path} and {report_path}")
    return 0


def cmd_compare(args) -> int:
    scenarios = [load_scenario(p, dt=args.dt) for p in (args.scenario_a, args.scenario_b)]
    reports = []
    out_dir = Path(args.out_dir)
    for sc in scenarios:
        trace, report = run_convoy(sc)
        write_outputs(trace, report, out_dir / sc.label, sc.output)
        reports.append(report)
    table = compare_reports(reports)
    atomic_write(out_dir / "compare.json", json.dumps(table, indent=2, sort_keys=True) + "\n")
    for row in table["runs"]:
        pct = "-" if row["reduction_pct"] is None else f"{row['reduction_pct']:.2f}%"
        print(f"{row['label']:<24} {row['total_fuel_kg']:.6f} kg  {pct}")
    return 0


def cmd_stability(args) -> int:
    cfg = load_stability_config(args.config)
    grid = FrequencyGrid.log(cfg.grid.lo, cfg.grid.hi, cfg.grid.points)
    case = StabilityCase(**cfg.model_dump(exclude={"label", "grid"}))
    modes = [ControllerMode.ACC, ControllerMode.CACC]
    if case.q is not None:
        modes.append(ControllerMode.ECO_CACC)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {"version": __version__, "label": cfg.label, "case": cfg.model_dump(mode="json"), "reports": []}
    for mode in modes:
        rep = grid_inf_norm(mode, case, grid)
        rep.to_csv(out_dir / f"{mode.value}.csv")
        summary["reports"].append(rep.summary())
        verdict = "string stable" if rep.is_string_stable else "not string stable"
        print(f"{mode.value:<9} inf-norm {rep.inf_norm:.6f} at {rep.argmax_omega:.4g} rad/s ({verdict})")
    atomic_write(out_dir / "stability.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_spectrum(args) -> int:
    profile = _profile_from(args.scenario, args.dt)
    if args.reference:
        spec = difference_spectrum(profile, _profile_from(args.reference, profile.dt))
    else:
        spec = magnitude_spectrum(profile)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec.to_csv(out_dir / "spectrum.csv")
    try:
        peak = dominant_frequency(spec, max(args.min_freq, spec.freq_resolution))
        print(f"dominant frequency above {args.min_freq} Hz: {peak:.4f} Hz")
    except ValueError as exc:
        print(f"no dominant frequency: {exc}")
    print(f"wrote {out_dir / 'spectrum.csv'}")
    return 0


def cmd_calibrate(args) -> int:
    normal = _profile_from(args.normal, args.dt)
    erratic = _profile_from(args.erratic, args.dt)
    print(f"{calibrate_threshold(normal, erratic, args.window, args.v_floor):.6g}")
    return 0


def cmd_tune(args) -> int:
    cfg = load_stability_config(args.config)
    result = search_gains(cfg.vehicle, cfg.policy, cfg.beta)
    print(
        json.dumps(
            {
                "K_p": result.gains.K_p,
                "K_d": result.gains.K_d,
                "cacc_inf_norm": result.inf_norm,
                "constraint_met": result.constraint_met,
                "pairs_evaluated": result.evaluated,
            },
            indent=2,
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecocacc", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        if out:
            p.add_argument("--out-dir", default="out", help="output directory (default: out)")
        p.add_argument("--dt", type=float, default=None, help="override the scenario time step")
        p.add_argument("--seed", type=int, default=None, help="reserved; runs are deterministic")

    p = sub.add_parser("simulate", help="run one scenario and write trace + report")
    p.add_argument("scenario")
    p.add_argument("--baseline", help="report JSON of a baseline run for the %% reduction")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="run two scenarios and tabulate fuel (first is baseline)")
    p.add_argument("scenario_a")
    p.add_argument("scenario_b")
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("stability", help="string-stability frequency responses and grid norms")
    p.add_argument("config")
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("spectrum", help="magnitude spectrum of a scenario's lead profile")
    p.add_argument("scenario")
    p.add_argument("--min-freq", type=float, default=0.05)
    p.add_argument("--reference", help="subtract this scenario's (or CSV's) lead profile before the FFT")
    common(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("calibrate", help="acceleration-index threshold from a normal/erratic pair")
    p.add_argument("normal", help="scenario YAML or time_s,speed_mps CSV")
    p.add_argument("erratic", help="scenario YAML or time_s,speed_mps CSV")
    p.add_argument("--window", type=float, default=10.0)
    p.add_argument("--v-floor", type=float, default=5.0)
    common(p, out=False)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("tune", help="grid search for PD gains minimising the CACC norm")
    p.add_argument("config")
    p.set_defaults(func=cmd_tune)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, CalibrationError, SimulationAbort, FileNotFoundError, ValueError, OSError, KeyError) as exc:
        print(f"ecocacc {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
