"""Command-line interface: scenario execution and analysis.

Verbs: run (simulate a scenario config and write CSV/JSON artifacts),
analyze (closed-form equilibrium report for constant demand), compare
(base / all-GP / HOT three-way comparison), validate (config and geometry
checks).  Configuration is a JSON file; no environment variables are
consulted, so identical inputs produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import equilibrium
from .control import SplitRatioController
from .core import (
    GP,
    TOLL,
    CflViolation,
    DualGeometry,
    FreewayGeometry,
    GeometryError,
    RampSpec,
    RawLinkSpec,
    build_geometry,
    max_timestep,
    normalize,
    split_lanes,
    validate_geometry,
)
from .pricing import AuctionPricer, VotDistribution, VotPricer
from .sim import DemandProfile, TrafficState, empty_state, metrics, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    pass


_LINK_KEYS = {"length_miles", "lanes", "freeflow_mph", "congestion_mph",
              "capacity_vphpl", "jam_vpmpl", "onramp", "offramp"}
_ONRAMP_KEYS = {"capacity_vph", "freeflow_mph", "length_miles"}
_OFFRAMP_KEYS = {"capacity_vph", "split"}
_TOP_KEYS = {"timestep_s", "horizon_steps", "priorities", "entrance", "links",
             "exit", "lane_split", "demand", "initial_state", "controller",
             "pricer", "compare", "output_dir"}
_ENTRANCE_KEYS = {"capacity_vph", "freeflow_mph", "length_miles"}
_DEMAND_KEYS = {"entrance_vph", "onramps_vph"}
_INITIAL_KEYS = {"mode", "congested_from", "boundary_fill", "n", "q"}
_CONTROLLER_KEYS = {"enabled"}
_PRICER_KEYS = {"mode", "distribution", "smoothing", "calibrate_every",
                "travelers_per_step", "variant", "pricing_rule", "u_min_mph",
                "calibration_mode"}
_COMPARE_KEYS = {"base_toll_share"}
_LANE_SPLIT_KEYS = {"toll", "gp"}


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ParseError(f"{where}: unknown keys {sorted(unknown)}")


@dataclass(frozen=True)
class ContourTable:
    """Per-step, per-mainline-link density (veh/mile/lane) and speed (mph)
    matrices, one layer per lane group."""

    density_vpm: np.ndarray  # (horizon, groups, K)
    speed_mph: np.ndarray
    vehicles: np.ndarray

    @property
    def horizon(self):
        return self.density_vpm.shape[0]

    @property
    def n_links(self):
        return self.density_vpm.shape[2]


def contour_table(traj) -> ContourTable:
    rep = metrics(traj)
    K = traj.geometry.K
    if traj.dual:
        vehicles = traj.n[:-1, :, 1:K + 1]
    else:
        vehicles = traj.n[:-1, None, 1:K + 1]
    return ContourTable(density_vpm=rep.density_vpm, speed_mph=rep.speed_mph,
                        vehicles=vehicles)


@dataclass
class ScenarioConfig:
    """Parsed scenario: geometry, demand and run options."""

    geometry: FreewayGeometry
    dual: DualGeometry | None
    profile: DemandProfile
    horizon: int
    tau_hours: float
    initial: dict
    controller_enabled: bool
    pricer_spec: dict
    compare_spec: dict
    output_dir: str

    def sim_geometry(self):
        return self.dual if self.dual is not None else self.geometry


def _parse_link(obj, where) -> tuple[RawLinkSpec, RampSpec | None]:
    _check_keys(obj, _LINK_KEYS, where)
    try:
        spec = RawLinkSpec(
            length_miles=float(obj["length_miles"]),
            lanes=int(obj["lanes"]),
            freeflow_mph=float(obj["freeflow_mph"]),
            congestion_mph=float(obj["congestion_mph"]),
            capacity_vphpl=float(obj["capacity_vphpl"]),
            jam_vpmpl=float(obj["jam_vpmpl"]),
        )
    except KeyError as e:
        raise ParseError(f"{where}: missing key {e.args[0]!r}") from None
    except GeometryError as e:
        raise ValidationError(f"{where}: {e}") from None
    ramp = None
    if "onramp" in obj or "offramp" in obj:
        on = obj.get("onramp") or {}
        off = obj.get("offramp") or {}
        _check_keys(on, _ONRAMP_KEYS, f"{where}.onramp")
        _check_keys(off, _OFFRAMP_KEYS, f"{where}.offramp")
        ramp = {"on": on, "off": off}
    return spec, ramp


def _series_to_steps(series, tau_hours, where):
    """[[time_s, vph], ...] -> [(step, veh/step), ...], stepwise-constant."""
    out = []
    if not isinstance(series, list):
        raise ParseError(f"{where}: expected a list of [time_s, vph] pairs")
    for item in series:
        if not isinstance(item, list) or len(item) != 2:
            raise ParseError(f"{where}: expected [time_s, vph] pairs")
        t_s, vph = float(item[0]), float(item[1])
        if vph < 0:
            raise ValidationError(f"{where}: negative demand value {vph}")
        step = int(round(t_s / (tau_hours * 3600.0)))
        out.append((step, vph * tau_hours))
    return out


def parse_config(path) -> ScenarioConfig:
    """Load and validate a scenario configuration file."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON: {e}") from None
    _check_keys(raw, _TOP_KEYS, str(path))

    try:
        tau_s = float(raw["timestep_s"])
        horizon = int(raw["horizon_steps"])
        links_raw = raw["links"]
        exit_raw = raw["exit"]
        entrance_raw = raw["entrance"]
    except KeyError as e:
        raise ParseError(f"{path}: missing key {e.args[0]!r}") from None
    if tau_s <= 0:
        raise ValidationError("timestep_s must be positive")
    if horizon < 1:
        raise ValidationError("horizon_steps must be at least 1")
    tau_hours = tau_s / 3600.0

    _check_keys(entrance_raw, _ENTRANCE_KEYS, "entrance")
    priorities = raw.get("priorities", "capacity")
    if priorities not in ("capacity", "demand"):
        raise ParseError("priorities must be 'capacity' or 'demand'")

    if not isinstance(links_raw, list) or not links_raw:
        raise ParseError("links must be a nonempty list")
    specs = []
    ramps_raw = []
    for idx, obj in enumerate(links_raw, start=1):
        spec, ramp = _parse_link(obj, f"links[{idx}]")
        specs.append(spec)
        ramps_raw.append(ramp)
    exit_spec, exit_ramp = _parse_link(exit_raw, "exit")
    if exit_ramp is not None:
        raise ValidationError("the exit link cannot carry ramps")

    # CFL check with a helpful bound before normalizing.
    tau_max = max_timestep(specs + [exit_spec])
    entrance_len = float(entrance_raw.get("length_miles", 0.25))
    entrance_vf = float(entrance_raw["freeflow_mph"])
    tau_max = min(tau_max, entrance_len / entrance_vf)
    if tau_hours > tau_max + 1e-12:
        raise ValidationError(
            f"timestep_s={tau_s} violates the CFL condition; maximum admissible "
            f"timestep is {tau_max * 3600:.6g} s")

    try:
        fds = [normalize(s, tau_hours) for s in specs]
        exit_fd = normalize(exit_spec, tau_hours)
    except CflViolation as e:
        raise ValidationError(str(e)) from None

    ramps = {}
    for idx, ramp in enumerate(ramps_raw, start=1):
        if ramp is None:
            continue
        on, off = ramp["on"], ramp["off"]
        on_cap = float(on.get("capacity_vph", 0.0)) * tau_hours
        on_len = float(on.get("length_miles", 0.25))
        on_v = float(on.get("freeflow_mph", 30.0)) * tau_hours / on_len
        if on_v > 1.0 + 1e-12:
            raise ValidationError(
                f"links[{idx}].onramp violates the CFL condition; maximum "
                f"admissible timestep is {on_len / float(on.get('freeflow_mph', 30.0)) * 3600:.6g} s")
        off_cap = float(off["capacity_vph"]) * tau_hours if "capacity_vph" in off else None
        split = float(off.get("split", 0.0))
        try:
            ramps[idx] = RampSpec(
                on_capacity=on_cap,
                on_freeflow=min(on_v, 1.0) if on_cap > 0 else 1.0,
                off_capacity=off_cap if off_cap is not None else float("inf"),
                split_off=split,
            )
        except GeometryError as e:
            raise ValidationError(f"links[{idx}]: {e}") from None

    lengths = [entrance_len] + [s.length_miles for s in specs] + [exit_spec.length_miles]
    lanes = [1] + [s.lanes for s in specs] + [exit_spec.lanes]

    lane_split = None
    if "lane_split" in raw:
        _check_keys(raw["lane_split"], _LANE_SPLIT_KEYS, "lane_split")
        lane_split = (int(raw["lane_split"]["toll"]), int(raw["lane_split"]["gp"]))
        if min(lane_split) < 1:
            raise ValidationError("lane_split entries must be >= 1")

    geometry = build_geometry(
        fds, exit_fd,
        entrance_capacity=float(entrance_raw["capacity_vph"]) * tau_hours,
        entrance_freeflow=min(entrance_vf * tau_hours / entrance_len, 1.0),
        ramps=ramps, lengths_miles=lengths, lanes=lanes,
        entrance_length_miles=entrance_len, tau_hours=tau_hours,
        lane_split=lane_split, priority_mode=priorities,
    )
    report = validate_geometry(geometry)
    if not report.ok:
        raise ValidationError(str(report))

    demand_raw = raw.get("demand", {})
    _check_keys(demand_raw, _DEMAND_KEYS, "demand")
    entrance_series = _series_to_steps(demand_raw.get("entrance_vph", []),
                                       tau_hours, "demand.entrance_vph")
    ramp_series = {}
    for key, series in (demand_raw.get("onramps_vph") or {}).items():
        i = int(key)
        if not 1 <= i <= geometry.K or geometry.R[i] <= 0:
            raise ValidationError(f"demand.onramps_vph[{key}]: link has no on-ramp")
        ramp_series[i] = _series_to_steps(series, tau_hours, f"demand.onramps_vph[{key}]")
    profile = DemandProfile(entrance=entrance_series, ramps=ramp_series)

    initial = dict(raw.get("initial_state", {"mode": "empty"}))
    _check_keys(initial, _INITIAL_KEYS, "initial_state")
    if initial.get("mode", "empty") not in ("empty", "equilibrium", "explicit"):
        raise ParseError("initial_state.mode must be empty|equilibrium|explicit")

    controller_raw = raw.get("controller", {})
    _check_keys(controller_raw, _CONTROLLER_KEYS, "controller")
    controller_enabled = bool(controller_raw.get("enabled", False))

    pricer_spec = dict(raw.get("pricer", {"mode": "none"}))
    _check_keys(pricer_spec, _PRICER_KEYS, "pricer")
    if pricer_spec.get("mode", "none") not in ("none", "vot", "auction"):
        raise ParseError("pricer.mode must be none|vot|auction")

    compare_spec = dict(raw.get("compare", {}))
    _check_keys(compare_spec, _COMPARE_KEYS, "compare")

    dual = None
    if lane_split is not None:
        dual = split_lanes(geometry)
    if (controller_enabled or pricer_spec.get("mode", "none") != "none") and dual is None:
        raise ValidationError("controller and pricer require lane_split")
    if controller_enabled and priorities != "capacity":
        raise ValidationError(
            "the controller requires capacity-proportional priorities")

    return ScenarioConfig(
        geometry=geometry, dual=dual, profile=profile, horizon=horizon,
        tau_hours=tau_hours, initial=initial,
        controller_enabled=controller_enabled, pricer_spec=pricer_spec,
        compare_spec=compare_spec, output_dir=raw.get("output_dir", "out"),
    )


def _constant_demands(profile: DemandProfile, geometry):
    """Demand values at t=0 for the analyze verb."""
    f_minus1 = 0.0
    for start, val in sorted(profile.entrance):
        if start <= 0:
            f_minus1 = val
    d = {}
    for i, series in profile.ramps.items():
        for start, val in sorted(series):
            if start <= 0:
                d[i] = val
    return f_minus1, d


def initial_state_from_config(config: ScenarioConfig) -> TrafficState:
    """Resolve the configured initial state against the run geometry."""
    geometry = config.sim_geometry()
    mode = config.initial.get("mode", "empty")
    state = empty_state(geometry)
    if mode == "empty":
        return state
    if mode == "explicit":
        n = np.asarray(config.initial.get("n", []), dtype=float)
        if n.shape != state.n.shape:
            raise ValidationError(
                f"initial_state.n must have shape {state.n.shape}")
        state.n[...] = n
        if "q" in config.initial:
            q = np.asarray(config.initial["q"], dtype=float)
            if q.shape != state.q.shape:
                raise ValidationError(f"initial_state.q must have shape {state.q.shape}")
            state.q[...] = q
        if (state.n < 0).any() or (state.q < 0).any():
            raise ValidationError("initial_state counts must be nonnegative")
        return state

    # mode == "equilibrium": single-lane equilibrium of the base geometry,
    # optionally congested from a given link, scaled per lane group.
    base = config.geometry
    f_minus1, d = _constant_demands(config.profile, base)
    feas, eq, struct = equilibrium.analyze(base, f_minus1, d)
    c = config.initial.get("congested_from", base.K + 2)
    c = int(c)
    fill = float(config.initial.get("boundary_fill", 0.0))
    n = struct.n_u.copy()
    if c <= base.K:
        n[c:base.K + 1] = struct.n_c[c:base.K + 1]
        h = c - 1
        if h >= 1 and fill > 0.0:
            n[h] = struct.n_u[h] + fill * (struct.n_c[h] - struct.n_u[h])
    if not struct.contains(n):
        raise ValidationError(
            f"initial_state: congested_from={c} does not yield an equilibrium "
            f"member (boundary range per segment: "
            f"{[list(s.h_range) for s in struct.segments if not s.single]})")
    n0, q = equilibrium.queue_witness(base, eq, f_minus1, d)
    if isinstance(geometry, DualGeometry):
        shares = geometry.lane_share
        state.n[TOLL] = shares[TOLL] * n
        state.n[GP] = shares[GP] * n
        state.n[:, 0] = 0.0
        state.q[...] = q
        state.q[1] = n0  # entrance queue folded into ramp 1
    else:
        state.n[...] = n
        state.n[0] = n0
        state.q[...] = q
    return state


def build_pricer(config: ScenarioConfig, seed: int):
    spec = config.pricer_spec
    mode = spec.get("mode", "none")
    if mode == "none":
        return None
    knots = spec.get("distribution", [[0.0, 0.0], [60.0, 1.0]])
    dist = VotDistribution(knots=np.array([k[0] for k in knots]),
                           cdf=np.array([k[1] for k in knots]))
    if mode == "vot":
        return VotPricer(
            dist,
            travelers_per_step=int(spec.get("travelers_per_step", 2000)),
            smoothing=float(spec.get("smoothing", 0.1)),
            calibrate_every=int(spec.get("calibrate_every", 0)),
            mode=spec.get("calibration_mode", "ETL"),
            u_min_mph=float(spec.get("u_min_mph", 5.0)),
            seed=seed,
        )
    return AuctionPricer(
        dist,
        variant=spec.get("variant", "paper"),
        pricing_rule=spec.get("pricing_rule", "lowest_accepted"),
        u_min_mph=float(spec.get("u_min_mph", 5.0)),
        seed=seed,
    )


def _fmt(x) -> str:
    return repr(float(x))

def write_contours_csv(path, traj):
    """t, link, lane_group, vehicles, density_vpm, speed_mph over mainline
    links; lane_group 1 = toll, 2 = GP, 0 = undivided."""
    table = contour_table(traj)
    groups = [(1, TOLL), (2, GP)] if traj.dual else [(0, 0)]
    lines = ["t,link,lane_group,vehicles,density_vpm,speed_mph"]
    for t in range(table.horizon):
        for link in range(1, table.n_links + 1):
            for out_g, gi in groups:
                lines.append(
                    f"{t},{link},{out_g},{_fmt(table.vehicles[t, gi, link - 1])},"
                    f"{_fmt(table.density_vpm[t, gi, link - 1])},"
                    f"{_fmt(table.speed_mph[t, gi, link - 1])}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_flows_csv(path, traj):
    """t, link, lane_group, f, r, s, queue for every link incl. entrance
    (single mode) and exit."""
    g = traj.geometry
    K = g.K
    lines = ["t,link,lane_group,f,r,s,queue"]
    if traj.dual:
        for t in range(traj.horizon):
            for link in range(1, K + 2):
                for out_g, gi in ((1, TOLL), (2, GP)):
                    queue = traj.q[t, link] if link <= K else 0.0
                    lines.append(
                        f"{t},{link},{out_g},{_fmt(traj.f[t, gi, link])},"
                        f"{_fmt(traj.r[t, gi, link])},{_fmt(traj.s[t, gi, link])},"
                        f"{_fmt(queue)}")
    else:
        for t in range(traj.horizon):
            for link in range(0, K + 2):
                queue = traj.n[t, 0] if link == 0 else (traj.q[t, link] if link <= K else 0.0)
                lines.append(
                    f"{t},{link},0,{_fmt(traj.f[t, link])},{_fmt(traj.r[t, link])},"
                    f"{_fmt(traj.s[t, link])},{_fmt(queue)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_directives_csv(path, traj):
    lines = ["t,entrance,alpha1,toll,revenue"]
    if traj.dual and traj.alpha1 is not None:
        ramps = traj.geometry.ramp_links()
        for t in range(traj.horizon):
            for i in ramps:
                toll = traj.toll[t, i] if traj.toll is not None else 0.0
                rev = traj.revenue[t, i] if traj.revenue is not None else 0.0
                lines.append(
                    f"{t},{i},{_fmt(traj.alpha1[t, i])},{_fmt(toll)},{_fmt(rev)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_metrics_json(path, traj):
    rep = metrics(traj)
    Path(path).write_text(
        json.dumps(rep.as_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    return rep


def run_scenario(config: ScenarioConfig, out_dir, seed: int = 0,
                 geometry=None, controller="auto", pricer="auto",
                 initial_state=None) -> dict:
    """Simulate one scenario and write the four artifacts into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    geometry = geometry if geometry is not None else config.sim_geometry()
    if controller == "auto":
        controller = (SplitRatioController(geometry)
                      if config.controller_enabled and isinstance(geometry, DualGeometry)
                      else None)
    if pricer == "auto":
        pricer = build_pricer(config, seed) if isinstance(geometry, DualGeometry) else None
    state = initial_state if initial_state is not None else initial_state_from_config(config)
    if isinstance(geometry, DualGeometry) != state.dual:
        raise ValidationError("initial state does not match the run geometry")
    traj = run(geometry, config.profile, config.horizon,
               controller=controller, pricer=pricer, initial_state=state)
    write_contours_csv(out / "contours.csv", traj)
    write_flows_csv(out / "flows.csv", traj)
    write_directives_csv(out / "directives.csv", traj)
    rep = write_metrics_json(out / "metrics.json", traj)
    if pricer is not None and hasattr(pricer, "state_dump"):
        (out / "vot_calibration.json").write_text(
            json.dumps(pricer.state_dump(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
    return {"trajectory": traj, "metrics": rep}


def analyze_config(config: ScenarioConfig, out_dir=None) -> dict:
    """Equilibrium report for the (single-lane) geometry at t=0 demand."""
    base = config.geometry
    f_minus1, d = _constant_demands(config.profile, base)
    feas, eq, struct = equilibrium.analyze(base, f_minus1, d)
    rates = equilibrium.growth_rates(base, eq, f_minus1, d)
    # bottleneck membership is decided at 1e-9; flag links whose margin is
    # small enough that measurement noise could flip the classification
    near_degenerate = [
        i for i in range(1, base.K + 1)
        if i not in struct.bottlenecks
        and min(abs(eq.f[i] - base.Fd[i]),
                abs(eq.f[i] + (eq.r[i + 1] if i + 1 <= base.K else 0.0)
                    - base.Fs[i + 1])) < 1e-6
    ]
    report = {
        "feasibility": feas.value,
        "equilibrium_flows": {
            "f": [float(x) for x in eq.f],
            "r": [float(x) for x in eq.r],
        },
        "bottlenecks": struct.bottlenecks,
        "near_degenerate_links": near_degenerate,
        "unique": struct.is_unique,
        "n_uncongested": [float(x) for x in struct.n_u],
        "n_congested": [float(x) for x in struct.n_c],
        "queue_growth_rates": {str(k): float(v) for k, v in rates.items()
                               if abs(v) > 1e-12},
        "structure": struct.describe(),
    }
    text = [f"feasibility: {feas.value}"]
    if struct.is_unique and feas is equilibrium.FeasibilityClass.STRICTLY_FEASIBLE:
        text.append("unique equilibrium (single uncongested profile):")
        text.append("  n = [" + ", ".join(f"{x:.4g}" for x in struct.n_u[1:]) + "]")
    text.append(struct.describe())
    if near_degenerate:
        text.append(f"note: links {near_degenerate} sit within 1e-6 of a "
                    "bottleneck condition; their classification is tolerance-sensitive")
    if report["queue_growth_rates"]:
        text.append("queue growth rates (veh/step): " + ", ".join(
            f"entrance={v:.4g}" if k == "0" else f"ramp {k}={v:.4g}"
            for k, v in report["queue_growth_rates"].items()))
    report_text = "\n".join(text)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "analysis.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        (out / "analysis.txt").write_text(report_text + "\n", encoding="utf-8")
    return {"report": report, "text": report_text}


def compare_runs(config: ScenarioConfig, out_dir, seed: int = 0) -> dict:
    """Base (fixed toll share) / all-GP / HOT-controlled comparison."""
    if config.dual is None:
        raise ValidationError("compare requires a dual-lane config (lane_split)")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    share = float(config.compare_spec.get("base_toll_share", 0.1))

    class FixedSharePricer:
        """Pins every entrance's toll share to an exogenous constant."""

        def __init__(self, alpha1):
            self.alpha1 = alpha1

        def realize(self, state, dual, alpha_row, prev_flows, t):
            return {i: (self.alpha1, 0.0, 0.0) for i in dual.ramp_links()}

    results = {}
    base_state = initial_state_from_config(config)
    results["base"] = run_scenario(
        config, out / "base", seed=seed, geometry=config.dual,
        controller=None, pricer=FixedSharePricer(share),
        initial_state=base_state.copy())

    single_cfg_state = _merge_dual_state(base_state, config)
    results["allgp"] = run_scenario(
        config, out / "allgp", seed=seed, geometry=config.geometry,
        controller=None, pricer=None, initial_state=single_cfg_state)

    hot_controller = SplitRatioController(config.dual)
    results["hot"] = run_scenario(
        config, out / "hot", seed=seed, geometry=config.dual,
        controller=hot_controller, pricer="auto",
        initial_state=base_state.copy())

    table = {}
    for name, res in results.items():
        rep = res["metrics"]
        table[name] = {
            "vmt": rep.vmt, "vmt_by_group": rep.vmt_by_group,
            "vht": rep.vht, "delay": rep.delay,
            "delay_by_group": rep.delay_by_group,
            "queue_delay": rep.queue_delay,
        }
    (out / "compare.json").write_text(
        json.dumps(table, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    header = f"{'case':<10}{'VMT total':>12}{'VMT toll':>12}{'VMT gp':>12}{'delay':>10}"
    rows = [header, "-" * len(header)]
    label = {"base": "base", "allgp": "all-GP", "hot": "HOT"}
    for name in ("base", "allgp", "hot"):
        t = table[name]
        vmt_toll = t["vmt_by_group"].get("toll", t["vmt"] * 0.0)
        vmt_gp = t["vmt_by_group"].get("gp", t["vmt_by_group"].get("all", 0.0))
        rows.append(f"{label[name]:<10}{t['vmt']:>12.1f}{vmt_toll:>12.1f}"
                    f"{vmt_gp:>12.1f}{t['delay']:>10.2f}")
    text = "\n".join(rows)
    (out / "compare.txt").write_text(text + "\n", encoding="utf-8")
    return {"table": table, "text": text, "results": results}


def _merge_dual_state(dual_state: TrafficState, config: ScenarioConfig) -> TrafficState:
    """Project a dual initial state onto the undivided geometry."""
    base = config.geometry
    state = empty_state(base)
    state.n[...] = dual_state.n.sum(axis=0)
    state.q[...] = dual_state.q
    state.n[0] = dual_state.q[1]  # entrance queue lives in ramp 1 when dual
    state.q[1] = 0.0
    return state


def _cmd_validate(args) -> int:
    config = parse_config(args.config)
    report = validate_geometry(config.geometry)
    print(report)
    print(f"mode: {'dual' if config.dual is not None else 'single'};"
          f" K={config.geometry.K}; horizon={config.horizon} steps")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = parse_config(args.config)
    out = args.out or config.output_dir
    run_scenario(config, out, seed=args.seed)
    print(f"wrote contours.csv, flows.csv, directives.csv, metrics.json to {out}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    config = parse_config(args.config)
    out = args.out or config.output_dir
    res = analyze_config(config, out)
    print(res["text"])
    return EXIT_OK


def _cmd_compare(args) -> int:
    config = parse_config(args.config)
    out = args.out or config.output_dir
    res = compare_runs(config, out, seed=args.seed)
    print(res["text"])
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tollsim",
        description="Deterministic freeway CTM simulator with toll-lane control")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, fn in (("run", _cmd_run), ("analyze", _cmd_analyze),
                     ("compare", _cmd_compare), ("validate", _cmd_validate)):
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=lambda s: int(s) & (2**64 - 1), default=0,
                       help="pricer sampling seed (u64)")
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, ValidationError, GeometryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
