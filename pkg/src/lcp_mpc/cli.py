"""Scenario configuration, strategy sweeps and CSV/JSON emission.

A run is described by one JSON document (SI units, radians). Every field is
optional except where noted; omitted fields take the library defaults, and
unknown keys are rejected so that typos never silently fall back to a
default. Example::

    {
      "heave": {"amplitude": 0.1, "frequency": 1.5, "phase": 1.9634954},
      "strategies": ["tracking", 0.0, 0.25, 0.5, 0.75],
      "baseline": "tracking"
    }

A strategy entry is either the string "tracking", a number (the ε_N of an
LCP strategy) or an object {"variant": "lcp", "restitution": 0.5}.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dynamics import State, VehicleParams
from .heave import HeaveModel
from .mpc import LcpRestitution, MpcConfig, StrategyVariant, TrackingNoLcp
from .sim import Scenario, SimResult, landing_metrics, simulate

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "t", "x", "z", "theta", "xdot", "zdot", "thetadot", "T", "tau",
    "z_plat", "zdot_plat", "g_N", "gdot_N", "lambda_N", "nu_N", "solver_flag",
)
METRIC_KEYS = (
    "mae_z", "post_impact_deflection", "time_to_land", "success",
    "pre_impact_relative_velocity", "impulse_total", "first_impact_time",
)
DEFAULT_STRATEGIES = ("tracking", 0.0, 0.25, 0.5, 0.75)


class ConfigError(ValueError):
    """Schema violation in a run configuration."""


@dataclass(frozen=True)
class RunConfig:
    strategies: Tuple[StrategyVariant, ...]
    output_dir: str = "out"
    emit_trajectories: bool = True
    settle_window: float = 0.5
    success_threshold: float = 1e-3
    baseline: Optional[str] = "tracking"
    config_path: Optional[str] = None

    def __post_init__(self):
        if not self.strategies:
            raise ConfigError("strategies: at least one strategy is required")
        names = [s.name for s in self.strategies]
        if len(set(names)) != len(names):
            raise ConfigError(f"strategies: duplicate entries {names}")
        if self.baseline is not None and self.baseline not in names:
            raise ConfigError(f"baseline: {self.baseline!r} is not one of the configured strategies {names}")
        if not self.settle_window >= 0:
            raise ConfigError("settle_window: expected a number >= 0")
        if not self.success_threshold >= 0:
            raise ConfigError("success_threshold: expected a number >= 0")


# ---------------------------------------------------------------- parsing


def _number(path: str, v: Any) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{path}: expected a finite number, got {v!r}")
    return float(v)


def _integer(path: str, v: Any) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    return v


def _boolean(path: str, v: Any) -> bool:
    if not isinstance(v, bool):
        raise ConfigError(f"{path}: expected a boolean, got {v!r}")
    return v


def _string(path: str, v: Any) -> str:
    if not isinstance(v, str):
        raise ConfigError(f"{path}: expected a string, got {v!r}")
    return v


def _vector(path: str, v: Any, n: int) -> List[float]:
    if not isinstance(v, list) or len(v) != n:
        raise ConfigError(f"{path}: expected a list of {n} numbers, got {v!r}")
    return [_number(f"{path}[{i}]", x) for i, x in enumerate(v)]


def _pair(path: str, v: Any) -> Optional[Tuple[float, float]]:
    if v is None:
        return None
    lo, hi = _vector(path, v, 2)
    return lo, hi


def _weight(path: str, v: Any, n: int) -> np.ndarray:
    """A weight is a scalar (times identity), a diagonal list or a full matrix."""
    if isinstance(v, list) and v and isinstance(v[0], list):
        if len(v) != n:
            raise ConfigError(f"{path}: expected an {n}x{n} matrix")
        return np.array([_vector(f"{path}[{i}]", row, n) for i, row in enumerate(v)])
    if isinstance(v, list):
        return np.diag(_vector(path, v, n))
    return _number(path, v) * np.eye(n)


def _section(path: str, v: Any, allowed: Sequence[str]) -> Dict[str, Any]:
    if not isinstance(v, dict):
        raise ConfigError(f"{path}: expected an object, got {type(v).__name__}")
    for key in v:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"{where}: unknown key (allowed: {', '.join(allowed)})")
    return v


def _check_restitution(path: str, eps: float) -> float:
    if not 0.0 <= eps <= 1.0:
        raise ConfigError(f"{path}: restitution out of [0,1] (got {eps})")
    return eps


def _strategy(path: str, v: Any) -> StrategyVariant:
    if v == "tracking":
        return TrackingNoLcp()
    if isinstance(v, str):
        raise ConfigError(f"{path}: expected \"tracking\", a restitution number or an object, got {v!r}")
    if isinstance(v, dict):
        d = _section(path, v, ("variant", "restitution"))
        variant = _string(f"{path}.variant", d.get("variant", "lcp"))
        if variant == "tracking":
            if "restitution" in d:
                raise ConfigError(f"{path}.restitution: not allowed for the tracking variant")
            return TrackingNoLcp()
        if variant != "lcp":
            raise ConfigError(f"{path}.variant: expected \"tracking\" or \"lcp\", got {variant!r}")
        eps = _number(f"{path}.restitution", d.get("restitution", 0.5))
        return LcpRestitution(_check_restitution(f"{path}.restitution", eps))
    eps = _number(path, v)
    return LcpRestitution(_check_restitution(path, eps))


def _build(path: str, cls, d: Dict[str, Any], conv: Dict[str, Any], base=None):
    """Instantiate ``cls`` from section ``d`` using per-key converters."""
    kwargs = {k: conv[k](f"{path}.{k}", v) for k, v in d.items()}
    try:
        return replace(base, **kwargs) if base is not None else cls(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


_HEAVE = {
    "amplitude": _number,
    "frequency": _number,
    "phase": _number,
    "restitution": lambda p, v: _check_restitution(p, _number(p, v)),
}
_VEHICLE = {k: _number for k in ("mass", "inertia", "gravity", "thrust_min", "thrust_max", "torque_min", "torque_max")}
_MPC = {
    "horizon": _integer,
    "dt": _number,
    "Q": lambda p, v: _weight(p, v, 6),
    "R": lambda p, v: _weight(p, v, 2),
    "W": _number,
    "rest_velocity": _number,
    "gap_tol": _number,
    "smoothing": _number,
    "max_iter": _integer,
    "tol": _number,
    "thrust_bounds": _pair,
    "torque_bounds": _pair,
}
_SIM = {
    "plant_dt": _number,
    "control_period": _number,
    "duration": _number,
    "seed": _integer,
    "rest_velocity": _number,
    "gap_tol": _number,
}
_TOP = (
    "heave", "vehicle", "initial_state", "mpc", "simulation", "strategies",
    "baseline", "output_dir", "emit_trajectories", "settle_window", "success_threshold",
)


def parse_config(text: str) -> Tuple[RunConfig, Scenario]:
    """Parse and validate a JSON run configuration.

    Returns the run configuration and a template scenario whose MPC strategy
    is a placeholder; `scenario_for` substitutes each configured strategy.

    Raises:
        ConfigError: on malformed JSON, unknown keys, wrong types or values
            that violate a model invariant. The message starts with the
            dotted path of the offending key.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    doc = _section("", doc, _TOP)

    heave = _build("heave", HeaveModel, _section("heave", doc.get("heave", {}), tuple(_HEAVE)), _HEAVE)
    vehicle = _build("vehicle", VehicleParams, _section("vehicle", doc.get("vehicle", {}), tuple(_VEHICLE)), _VEHICLE)
    mpc = _build("mpc", MpcConfig, _section("mpc", doc.get("mpc", {}), tuple(_MPC)), _MPC)

    init = _section("initial_state", doc.get("initial_state", {}), ("q", "qdot"))
    default_state = Scenario().initial_state
    q = _vector("initial_state.q", init["q"], 3) if "q" in init else default_state.q
    qdot = _vector("initial_state.qdot", init["qdot"], 3) if "qdot" in init else default_state.qdot

    sim_kw = _section("simulation", doc.get("simulation", {}), tuple(_SIM))
    scenario = _build(
        "simulation",
        Scenario,
        sim_kw,
        _SIM,
        base=Scenario(heave=heave, vehicle=vehicle, initial_state=State(q, qdot), mpc=mpc),
    )

    raw = doc.get("strategies", list(DEFAULT_STRATEGIES))
    if not isinstance(raw, list):
        raise ConfigError(f"strategies: expected a list, got {type(raw).__name__}")
    strategies = tuple(_strategy(f"strategies[{i}]", s) for i, s in enumerate(raw))

    baseline = doc.get("baseline", "tracking" if any(isinstance(s, TrackingNoLcp) for s in strategies) else None)
    if baseline is not None:
        baseline = _string("baseline", baseline)
    run = RunConfig(
        strategies=strategies,
        output_dir=_string("output_dir", doc.get("output_dir", "out")),
        emit_trajectories=_boolean("emit_trajectories", doc.get("emit_trajectories", True)),
        settle_window=_number("settle_window", doc.get("settle_window", 0.5)),
        success_threshold=_number("success_threshold", doc.get("success_threshold", 1e-3)),
        baseline=baseline,
    )
    return run, scenario


def scenario_for(template: Scenario, strategy: StrategyVariant) -> Scenario:
    return replace(template, mpc=replace(template.mpc, strategy=strategy))


# ---------------------------------------------------------------- output


def _fmt(v: float) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if v == 0.0:
        return "0"  # folds -0.0 so reruns never differ in sign of zero
    return format(v, ".9g")


def trajectory_rows(r: SimResult):
    for k in range(len(r.t)):
        s = r.states[k]
        u = r.inputs[k]
        yield (
            r.t[k], s[0], s[1], s[2], s[3], s[4], s[5], u[0], u[1],
            r.z_plat[k], r.zdot_plat[k], r.gap[k], r.gap_rate[k],
            r.impulse[k], r.residual[k], int(r.solver_flag[k]),
        )


def write_trajectory_csv(r: SimResult, path: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in trajectory_rows(r):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _json_number(v: float):
    """JSON has no inf/nan; encode them as strings so the file stays standard."""
    if isinstance(v, bool):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return float(format(v, ".9g"))


def _metrics_dict(r: SimResult, run: RunConfig) -> Dict[str, Any]:
    lm = landing_metrics(r, run.settle_window, run.success_threshold)
    out = {k: _json_number(getattr(lm, k)) for k in METRIC_KEYS}
    out["first_braking_time"] = _json_number(lm.first_braking_time)
    out["monotonicity_violations"] = r.monotonicity_violations()
    out["min_gap"] = _json_number(float(np.min(r.gap)))
    out["aborted"] = r.aborted
    return out


def _relative_delta(value: float, base: float) -> Optional[float]:
    if not (math.isfinite(value) and math.isfinite(base)) or base == 0:
        return None
    return float(format((value - base) / base, ".9g"))


def run_sweep(run: RunConfig, template: Scenario, seed: Optional[int] = None) -> Dict[str, Any]:
    """Simulate every strategy, write CSVs and ``metrics.json``; return the report.

    A strategy that raises is recorded with its error and the sweep moves on,
    so every configured strategy appears exactly once in the report.
    """
    if seed is not None:
        template = replace(template, seed=seed)
    os.makedirs(run.output_dir, exist_ok=True)
    report: Dict[str, Any] = {"seed": template.seed, "baseline": run.baseline, "strategies": {}}
    for strategy in run.strategies:
        name = strategy.name
        entry: Dict[str, Any]
        try:
            r = simulate(scenario_for(template, strategy))
            entry = {"status": "ok" if r.aborted is None else "aborted", "metrics": _metrics_dict(r, run)}
            if run.emit_trajectories:
                fname = f"trajectory_{name}.csv"
                write_trajectory_csv(r, os.path.join(run.output_dir, fname))
                entry["trajectory"] = fname
        except Exception as exc:  # recorded per strategy; the sweep continues
            log.exception("strategy %s failed", name)
            entry = {"status": "failed", "error": f"{type(exc).__name__}: {exc}", "metrics": None}
        report["strategies"][name] = entry

    base = report["strategies"].get(run.baseline) if run.baseline else None
    if base is not None and base["metrics"] is not None:
        bm = base["metrics"]
        for name, entry in report["strategies"].items():
            m = entry["metrics"]
            if m is None:
                entry["vs_baseline"] = None
                continue
            entry["vs_baseline"] = {
                "mae_z_rel": _relative_delta(m["mae_z"], bm["mae_z"]),
                "deflection_rel": _relative_delta(_as_float(m["post_impact_deflection"]), _as_float(bm["post_impact_deflection"])),
            }

    with open(os.path.join(run.output_dir, "metrics.json"), "w", newline="\n") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return report


def _as_float(v) -> float:
    # metrics store inf/nan as strings; float() parses both spellings
    return float(v)


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lcp-mpc", description="Heaving-deck landing sweeps with a contact-aware MPC.")
    ap.add_argument("config", help="path to the JSON run configuration")
    ap.add_argument("-o", "--output-dir", help="directory for CSV/JSON output (overrides the config)")
    ap.add_argument(
        "-s", "--strategy", action="append", metavar="NAME",
        help="only run the named strategy (e.g. tracking, lcp_eps0.5); repeatable",
    )
    ap.add_argument("--seed", type=int, help="override the scenario seed")
    ap.add_argument(
        "--emit-trajectories", action=argparse.BooleanOptionalAction, default=None,
        help="write one trajectory CSV per strategy (overrides the config)",
    )
    ap.add_argument("--baseline", metavar="NAME", help="strategy that the deltas are computed against")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with open(args.config) as fh:
            run, template = parse_config(fh.read())
        changes: Dict[str, Any] = {"config_path": args.config}
        if args.output_dir is not None:
            changes["output_dir"] = args.output_dir
        if args.emit_trajectories is not None:
            changes["emit_trajectories"] = args.emit_trajectories
        strategies = run.strategies
        if args.strategy:
            known = {s.name: s for s in strategies}
            missing = [n for n in args.strategy if n not in known]
            if missing:
                raise ConfigError(f"--strategy: unknown {missing}; configured: {sorted(known)}")
            strategies = tuple(s for s in strategies if s.name in args.strategy)
            changes["strategies"] = strategies
        baseline = args.baseline if args.baseline is not None else run.baseline
        if baseline is not None and baseline not in {s.name for s in strategies}:
            if args.baseline is not None:
                raise ConfigError(f"--baseline: {baseline!r} is not among the strategies being run")
            baseline = None
        changes["baseline"] = baseline
        run = replace(run, **changes)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    report = run_sweep(run, template, seed=args.seed)
    for name, entry in report["strategies"].items():
        m = entry["metrics"]
        if m is None:
            print(f"{name:>14}  FAILED  {entry['error']}")
            continue
        print(
            f"{name:>14}  mae_z={m['mae_z']:.4g}  deflection={m['post_impact_deflection']}  "
            f"time_to_land={m['time_to_land']}  success={m['success']}"
        )
    failed = [n for n, e in report["strategies"].items() if e["status"] != "ok"]
    return 1 if failed else 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
