"""Time-stepping simulation engine, metrics, and the off-ramp-elimination
transform.

States hold vehicle counts per link (per lane group in dual mode) plus
ramp queues; flows are resolved each step by the node solvers embedded in
the stepping kernels.  A run produces an immutable trajectory of states
and flows from which metrics and contour tables are computed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import GP, TOLL, DualGeometry, FreewayGeometry, _frozen

PRIORITY_MODES = {"capacity": 0, "demand": 1}


class SimulationError(RuntimeError):
    pass


class StateCorruption(SimulationError):
    """A post-step vehicle count left [0, N] beyond tolerance: solver bug."""

    def __init__(self, step, link):
        self.step = step
        self.link = link
        super().__init__(f"state corruption at step {step}, link {link}")


@dataclass
class TrafficState:
    """Vehicle counts per link (row pair in dual mode) and ramp queues.

    Single mode: n has shape (K+2,) and n[0] is the entrance queue.
    Dual mode: n has shape (2, K+2) (toll row first) and the entrance
    queue lives in q[1].
    """

    n: np.ndarray
    q: np.ndarray
    t: int = 0

    @property
    def dual(self):
        return self.n.ndim == 2

    def copy(self):
        return TrafficState(n=self.n.copy(), q=self.q.copy(), t=self.t)

    def total_vehicles(self):
        return float(self.n.sum() + self.q.sum())


def empty_state(geometry) -> TrafficState:
    nl = geometry.n_links
    if isinstance(geometry, DualGeometry):
        return TrafficState(n=np.zeros((2, nl)), q=np.zeros(nl))
    return TrafficState(n=np.zeros(nl), q=np.zeros(nl))


@dataclass(frozen=True)
class DemandProfile:
    """Stepwise-constant demand series in vehicles per step.

    entrance: list of (start_step, value); ramps: mapping link -> series.
    In dual mode the entrance series feeds ramp 1.
    """

    entrance: list[tuple[int, float]] = field(default_factory=list)
    ramps: dict[int, list[tuple[int, float]]] = field(default_factory=dict)

    @staticmethod
    def constant(entrance: float, ramps: dict[int, float] | None = None):
        return DemandProfile(
            entrance=[(0, float(entrance))],
            ramps={i: [(0, float(v))] for i, v in (ramps or {}).items()},
        )

    def validate(self):
        for series in [self.entrance, *self.ramps.values()]:
            for _, val in series:
                if val < 0:
                    raise ValueError("demand values must be nonnegative")

    def expand(self, T: int, n_links: int):
        """Per-step arrays: entrance (T,) and ramp demands (T, n_links)."""
        def fill(series):
            out = np.zeros(T)
            for start, value in sorted(series, key=lambda p: p[0]):
                if start < T:
                    out[max(0, int(start)):] = value
            return out

        entrance = fill(self.entrance)
        ramps = np.zeros((T, n_links))
        for i, series in self.ramps.items():
            ramps[:, i] = fill(series)
        return entrance, ramps


@dataclass(frozen=True)
class StepFlows:
    """Realized flows of one step: f out of each link, r onto each link,
    s off of each link (per lane group in dual mode)."""

    f: np.ndarray
    r: np.ndarray
    s: np.ndarray


def demands_supplies(state: TrafficState, geometry):
    """Per-link outflow demands, inflow supplies and ramp demands.

    Returns (f_d, f_s, r_d); in dual mode f_d and f_s have a leading
    lane-group axis.  Entries at index 0 are the entrance-queue demand in
    single mode and zero in dual mode.
    """
    if isinstance(geometry, DualGeometry):
        f_d = np.minimum(geometry.beta_f * geometry.v * state.n, geometry.Fd)
        f_s = np.minimum(geometry.w * (geometry.N - state.n), geometry.Fs)
        f_d[:, 0] = 0.0
        f_s[:, 0] = 0.0
    else:
        f_d = np.minimum(geometry.beta_f * geometry.v * state.n, geometry.Fd)
        f_s = np.minimum(geometry.w * (geometry.N - state.n), geometry.Fs)
        f_d[0] = min(geometry.v[0] * state.n[0], geometry.F[0])
        f_s[0] = 0.0
    r_d = np.minimum(geometry.vr * state.q, geometry.R)
    return f_d, f_s, r_d


def _geom_args_single(g: FreewayGeometry):
    return (g.K, g.F[0], g.v[0], g.Fs, g.Fd, g.N, g.v, g.w, g.beta_f,
            _s_ratio(g), g.R, g.vr, g.pf, g.pr, PRIORITY_MODES[g.priority_mode])


def _geom_args_dual(g: DualGeometry):
    return (g.K, g.Fs, g.Fd, g.N, g.v, g.w, g.beta_f, _s_ratio(g),
            g.R, g.vr, g.pf, g.pr, PRIORITY_MODES[g.priority_mode])


def _s_ratio(g):
    ratio = np.zeros(g.n_links)
    np.divide(g.beta_s, g.beta_f, out=ratio, where=g.beta_f > 0)
    ratio.flags.writeable = False
    return ratio


def step(state: TrafficState, geometry, entrance_demand: float = 0.0,
         ramp_demand=None, alpha1=None) -> tuple[TrafficState, StepFlows]:
    """Advance one step; returns the new state and the realized flows.

    alpha1 (per-ramp toll shares) applies in dual mode only and defaults
    to the lane-proportional split.
    """
    nl = geometry.n_links
    kern = kernels.get()
    new = state.copy()
    dem = np.zeros(nl)
    if ramp_demand is not None:
        for i, val in dict(ramp_demand).items():
            dem[i] = val
    if isinstance(geometry, DualGeometry):
        if entrance_demand:
            dem[1] = dem[1] + entrance_demand
        if alpha1 is None:
            a1 = np.full(nl, geometry.lane_share[0])
        else:
            a1 = np.asarray(alpha1, dtype=float)
        f = np.zeros((2, nl))
        r = np.zeros((2, nl))
        s = np.zeros((2, nl))
        status = kern.step_dual(*_geom_args_dual(geometry), new.n, new.q,
                                dem, a1, f, r, s)
    else:
        if alpha1 is not None:
            raise SimulationError("alpha directives require a dual geometry")
        f = np.zeros(nl)
        r = np.zeros(nl)
        s = np.zeros(nl)
        status = kern.step_single(*_geom_args_single(geometry), new.n, new.q,
                                  float(entrance_demand), dem, f, r, s)
    if status != 0:
        raise StateCorruption(state.t, status - 1)
    new.t = state.t + 1
    return new, StepFlows(f=f, r=r, s=s)


@dataclass
class Trajectory:
    """Recorded simulation run: states after every step plus flows.

    Arrays are time-major; alpha/toll/revenue are populated only for
    controlled or priced dual runs.
    """

    geometry: object
    n: np.ndarray  # (T+1, ...) states, row 0 initial
    q: np.ndarray
    f: np.ndarray  # (T, ...)
    r: np.ndarray
    s: np.ndarray
    entrance_demand: np.ndarray
    ramp_demand: np.ndarray
    alpha1: np.ndarray | None = None
    toll: np.ndarray | None = None
    revenue: np.ndarray | None = None

    @property
    def horizon(self):
        return self.f.shape[0]

    @property
    def dual(self):
        return isinstance(self.geometry, DualGeometry)

    def state(self, t: int) -> TrafficState:
        return TrafficState(n=self.n[t].copy(), q=self.q[t].copy(), t=t)

    def final_state(self) -> TrafficState:
        return self.state(self.horizon)

    def total_entered(self):
        tot = float(self.entrance_demand.sum() + self.ramp_demand.sum())
        return tot

    def total_exited(self):
        if self.dual:
            return float(self.f[:, :, -1].sum() + self.s.sum())
        return float(self.f[:, -1].sum() + self.s.sum())


def run(geometry, profile: DemandProfile, horizon: int, controller=None,
        pricer=None, initial_state: TrafficState | None = None) -> Trajectory:
    """Simulate a corridor for the given horizon.

    A controller (dual mode only) is consulted every step before flows are
    resolved; a pricer converts its requested splits into realized ones.
    """
    if horizon < 1:
        raise SimulationError("horizon must be at least 1 step")
    profile.validate()
    nl = geometry.n_links
    dual = isinstance(geometry, DualGeometry)
    if (controller or pricer) and not dual:
        raise SimulationError("controller and pricer require a dual geometry")
    state = initial_state.copy() if initial_state is not None else empty_state(geometry)

    dem0, dem = profile.expand(horizon, nl)
    if dual:
        dem[:, 1] += dem0
        dem0 = np.zeros(horizon)

    kern = kernels.get()
    err = np.zeros(2, dtype=np.int64)
    if dual:
        n_out = np.zeros((horizon + 1, 2, nl))
        q_out = np.zeros((horizon + 1, nl))
        f_out = np.zeros((horizon, 2, nl))
        r_out = np.zeros_like(f_out)
        s_out = np.zeros_like(f_out)
        n_out[0] = state.n
        q_out[0] = state.q
        alpha_default = geometry.lane_share[0]
        alpha_out = np.full((horizon, nl), alpha_default)
        toll_out = np.zeros((horizon, nl))
        revenue_out = np.zeros((horizon, nl))
        if controller is None and pricer is None:
            status = kern.run_dual(*_geom_args_dual(geometry), state.n, state.q,
                                   dem, alpha_out, horizon,
                                   f_out, r_out, s_out, n_out, q_out, err)
            if status:
                raise StateCorruption(int(err[0]), int(err[1]))
        else:
            prev_flows = None
            for t in range(horizon):
                alpha_row = alpha_out[t]
                if controller is not None:
                    directives = controller.directives(
                        TrafficState(n=state.n, q=state.q, t=t), dem[t])
                    for d in directives:
                        alpha_row[d.entrance] = d.alpha1
                pending_revenue = []
                if pricer is not None:
                    realized = pricer.realize(
                        TrafficState(n=state.n, q=state.q, t=t),
                        geometry, alpha_row, prev_flows, t)
                    for i, (a1, toll, rev) in realized.items():
                        alpha_row[i] = a1
                        toll_out[t, i] = toll
                        if rev is None:
                            pending_revenue.append(i)
                        else:
                            revenue_out[t, i] = rev
                status = kern.step_dual(*_geom_args_dual(geometry), state.n,
                                        state.q, dem[t], alpha_row,
                                        f_out[t], r_out[t], s_out[t])
                if status:
                    raise StateCorruption(t, status - 1)
                n_out[t + 1] = state.n
                q_out[t + 1] = state.q
                prev_flows = StepFlows(f=f_out[t], r=r_out[t], s=s_out[t])
                for i in pending_revenue:
                    revenue_out[t, i] = toll_out[t, i] * r_out[t, 0, i]
                if pricer is not None and hasattr(pricer, "observe"):
                    pricer.observe(TrafficState(n=state.n, q=state.q, t=t + 1),
                                   geometry, prev_flows, toll_out[t], t)
        return Trajectory(geometry=geometry, n=n_out, q=q_out, f=f_out,
                          r=r_out, s=s_out, entrance_demand=np.zeros(horizon),
                          ramp_demand=dem, alpha1=alpha_out, toll=toll_out,
                          revenue=revenue_out)

    n_out = np.zeros((horizon + 1, nl))
    q_out = np.zeros((horizon + 1, nl))
    f_out = np.zeros((horizon, nl))
    r_out = np.zeros_like(f_out)
    s_out = np.zeros_like(f_out)
    n_out[0] = state.n
    q_out[0] = state.q
    status = kern.run_single(*_geom_args_single(geometry), state.n, state.q,
                             dem0, dem, horizon,
                             f_out, r_out, s_out, n_out, q_out, err)
    if status:
        raise StateCorruption(int(err[0]), int(err[1]))
    return Trajectory(geometry=geometry, n=n_out, q=q_out, f=f_out, r=r_out,
                      s=s_out, entrance_demand=dem0, ramp_demand=dem)


@dataclass(frozen=True)
class MetricsReport:
    """Aggregate run metrics plus per-step contour matrices.

    vmt/vht/delay are totals; the by-group dicts break mainline quantities
    down per lane group ("all" in single mode), with queue delay reported
    separately since queues belong to no lane group.
    """

    vmt: float
    vht: float
    delay: float
    vmt_by_group: dict
    delay_by_group: dict
    queue_delay: float
    density_vpm: np.ndarray  # (T, groups, K) veh/mile/lane
    speed_mph: np.ndarray  # (T, groups, K)

    def as_dict(self):
        return {
            "vmt": {"total": self.vmt, **self.vmt_by_group},
            "vht": {"total": self.vht},
            "delay": {"total": self.delay, **self.delay_by_group,
                      "queues": self.queue_delay},
        }


def _group_data(traj: Trajectory):
    """Yield (name, n, f, r, s, lanes) per lane group with 2-D arrays."""
    g = traj.geometry
    if traj.dual:
        shares = g.lane_share
        for gi, name in ((TOLL, "toll"), (GP, "gp")):
            yield (name, traj.n[:, gi, :], traj.f[:, gi, :], traj.s[:, gi, :],
                   g.lanes * shares[gi])
    else:
        yield ("all", traj.n, traj.f, traj.s, g.lanes)


def metrics(traj: Trajectory, geometry=None, tau_hours=None) -> MetricsReport:
    """Vehicle-miles, vehicle-hours and delay for a recorded trajectory.

    Delay weights a link's vehicles by 1 - u/V where u is the realized
    (outflow-based) speed capped at free flow, and counts queued vehicles
    in full.
    """
    g = geometry if geometry is not None else traj.geometry
    tau = tau_hours if tau_hours is not None else g.tau_hours
    K = g.K
    T = traj.horizon
    L = g.length_miles
    V_mph = g.v * L / tau  # free-flow speeds back in mph

    vmt_by_group = {}
    delay_by_group = {}
    densities = []
    speeds = []
    vht = 0.0
    for name, n, f, s, lanes in _group_data(traj):
        moved = f + s  # (T, nl) vehicles advancing each step
        # mainline and exit links only: the entrance is a queue, not road
        vmt_by_group[name] = float((moved[:, 1:] * L[None, 1:]).sum())
        n_links = n[:-1, 1:]  # occupancy during each step, mainline+exit
        moved_links = moved[:, 1:]
        with np.errstate(invalid="ignore", divide="ignore"):
            u = np.where(n_links > 0,
                         moved_links * L[None, 1:] / (np.maximum(n_links, 1e-300) * tau),
                         V_mph[None, 1:])
        u = np.minimum(u, V_mph[None, 1:])
        delay_by_group[name] = float(
            (n_links * (1.0 - u / V_mph[None, 1:])).sum() * tau)
        vht += float(n[:-1].sum() * tau)
        lanes_main = np.maximum(lanes[1:K + 1], 1e-300)
        densities.append(n[:-1, 1:K + 1] / (L[None, 1:K + 1] * lanes_main[None, :]))
        speeds.append(u[:, :K])

    # Queued vehicles (ramp queues, plus the entrance queue in single mode)
    # count toward VHT and are fully delayed.
    queue_vehicles = float(traj.q[:-1].sum())
    if not traj.dual:
        queue_vehicles += float(traj.n[:-1, 0].sum())
    queue_delay = queue_vehicles * tau
    vht += float(traj.q[:-1].sum() * tau)

    delay = sum(delay_by_group.values()) + queue_delay
    vmt = sum(vmt_by_group.values())
    return MetricsReport(
        vmt=vmt, vht=vht, delay=delay,
        vmt_by_group=vmt_by_group, delay_by_group=delay_by_group,
        queue_delay=queue_delay,
        density_vpm=np.stack(densities, axis=1),
        speed_mph=np.stack(speeds, axis=1),
    )


@dataclass(frozen=True)
class OfframpFreeTransform:
    """Result of eliminating off-ramps: an equivalent corridor whose
    trajectories are the original's scaled by mu per link."""

    geometry: FreewayGeometry
    mu: np.ndarray
    state: TrafficState | None = None
    profile: DemandProfile | None = None


def transform_remove_offramps(geometry: FreewayGeometry,
                              state: TrafficState | None = None,
                              profile: DemandProfile | None = None) -> OfframpFreeTransform:
    """Rescale a corridor so every off-ramp split becomes 1.

    Link i's supply-side quantities (inflow capacity, storage, ramp
    capacity, demands, vehicle counts, queues) scale by
    mu_i = prod_{j<i} 1/beta_j^f and its outflow capacity by mu_{i+1};
    the transformed trajectory satisfies n'_i(t) = mu_i n_i(t).
    """
    K = geometry.K
    nl = geometry.n_links
    if (geometry.beta_f[1:] <= 0).any():
        raise ValueError("through splits must be positive")
    mu = np.ones(nl + 1)
    for i in range(2, nl + 1):
        mu[i] = mu[i - 1] / geometry.beta_f[i - 1]
    mu_l = mu[:nl]

    new_geom = geometry.copy_with(
        F=_frozen(geometry.F * mu_l),
        N=_frozen(geometry.N * mu_l),
        Fs=_frozen(geometry.Fs * mu_l),
        Fd=_frozen(geometry.Fd * mu[1:]),
        R=_frozen(geometry.R * mu_l),
        S=_frozen(np.full(nl, np.inf)),
        beta_f=_frozen(np.ones(nl)),
        beta_s=_frozen(np.zeros(nl)),
    )
    new_state = None
    if state is not None:
        new_state = TrafficState(n=state.n * mu_l, q=state.q * mu_l, t=state.t)
    new_profile = None
    if profile is not None:
        new_profile = DemandProfile(
            entrance=list(profile.entrance),
            ramps={i: [(t, val * mu_l[i]) for t, val in series]
                   for i, series in profile.ramps.items()},
        )
    return OfframpFreeTransform(geometry=new_geom, mu=mu_l, state=new_state,
                                profile=new_profile)
