"""Freeway geometry and parameter model.

Physical inputs (miles, mph, vehicles per hour per lane) are normalized to
per-time-step model units: speeds in links per step, capacities in vehicles
per step, storage in vehicles.  A corridor is a chain of mainline links
1..K with an entrance queue (link 0), an exit link K+1, and optional
on/off-ramps per link.  A dual geometry splits every mainline link into a
toll lane group and a general-purpose lane group, capacity-proportional to
the lane split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TOLL = 0  # lane-group index of the toll lanes in dual arrays
GP = 1  # lane-group index of the general-purpose lanes


class GeometryError(ValueError):
    pass


class CflViolation(GeometryError):
    """A link's free-flow or congestion speed exceeds one link per step."""

    def __init__(self, link, v, w, max_tau_hours):
        self.link = link
        self.v = v
        self.w = w
        self.max_tau_hours = max_tau_hours
        super().__init__(
            f"link {link}: normalized speeds v={v:.6g}, w={w:.6g} exceed 1 "
            f"link/step; maximum admissible time step is {max_tau_hours:.6g} h "
            f"({max_tau_hours * 3600:.6g} s)"
        )


@dataclass(frozen=True)
class RawLinkSpec:
    """Field-style description of one mainline link."""

    length_miles: float
    lanes: int
    freeflow_mph: float
    congestion_mph: float
    capacity_vphpl: float
    jam_vpmpl: float

    def __post_init__(self):
        for name in (
            "length_miles",
            "lanes",
            "freeflow_mph",
            "congestion_mph",
            "capacity_vphpl",
            "jam_vpmpl",
        ):
            if getattr(self, name) <= 0:
                raise GeometryError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class FundamentalDiagram:
    """Per-link normalized parameters.

    F: capacity (veh/step), N: storage (veh), v/w: free-flow and congestion
    wave speeds (link/step).
    """

    F: float
    N: float
    v: float
    w: float


@dataclass(frozen=True)
class RampSpec:
    """Normalized ramp parameters for one mainline link.

    on_capacity = 0 means no on-ramp; split_off = 0 means no off-ramp.
    """

    on_capacity: float = 0.0  # R, veh/step
    on_freeflow: float = 1.0  # v^r, link/step
    off_capacity: float = math.inf  # S, veh/step
    split_off: float = 0.0  # beta^s

    def __post_init__(self):
        if not 0 <= self.split_off < 1:
            raise GeometryError("split_off must lie in [0, 1)")
        if self.on_capacity < 0 or self.off_capacity < 0:
            raise GeometryError("ramp capacities must be nonnegative")
        if self.on_capacity > 0 and not 0 < self.on_freeflow <= 1:
            raise GeometryError("on-ramp free-flow speed must lie in (0, 1]")

    @property
    def split_through(self):
        return 1.0 - self.split_off


def normalize(spec: RawLinkSpec, tau_hours: float) -> FundamentalDiagram:
    """Convert a physical link spec to per-step units for time step tau.

    Raises CflViolation when either speed exceeds one link per step.
    """
    if tau_hours <= 0:
        raise GeometryError("time step must be positive")
    v = spec.freeflow_mph * tau_hours / spec.length_miles
    w = spec.congestion_mph * tau_hours / spec.length_miles
    if v > 1.0 + 1e-12 or w > 1.0 + 1e-12:
        max_tau = spec.length_miles / max(spec.freeflow_mph, spec.congestion_mph)
        raise CflViolation(spec, v, w, max_tau)
    F = spec.capacity_vphpl * spec.lanes * tau_hours
    N = spec.jam_vpmpl * spec.length_miles * spec.lanes
    return FundamentalDiagram(F=F, N=N, v=min(v, 1.0), w=min(w, 1.0))


def denormalize(fd: FundamentalDiagram, tau_hours: float, length_miles: float,
                lanes: int = 1) -> RawLinkSpec:
    """Inverse of normalize for the same tau and length."""
    return RawLinkSpec(
        length_miles=length_miles,
        lanes=lanes,
        freeflow_mph=fd.v * length_miles / tau_hours,
        congestion_mph=fd.w * length_miles / tau_hours,
        capacity_vphpl=fd.F / (lanes * tau_hours),
        jam_vpmpl=fd.N / (length_miles * lanes),
    )


def max_timestep(specs) -> float:
    """Largest admissible time step (hours) over a set of links."""
    specs = list(specs)
    if not specs:
        raise GeometryError("need at least one link")
    return min(s.length_miles / max(s.freeflow_mph, s.congestion_mph) for s in specs)


def _frozen(a):
    a = np.asarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FreewayGeometry:
    """Single-lane-group corridor in normalized units.

    Arrays have length K+2 and are indexed 0 (entrance) .. K+1 (exit);
    entries at unused indices are zero.  The entrance is a pure queue with
    capacity F[0] and release speed v[0].  Node priorities pf[i], pr[i]
    belong to the node feeding link i (upstream mainline vs on-ramp i).
    """

    K: int
    F: np.ndarray
    N: np.ndarray
    v: np.ndarray
    w: np.ndarray
    beta_f: np.ndarray
    beta_s: np.ndarray
    S: np.ndarray
    R: np.ndarray
    vr: np.ndarray
    pf: np.ndarray
    pr: np.ndarray
    Fd: np.ndarray
    Fs: np.ndarray
    length_miles: np.ndarray
    lanes: np.ndarray
    tau_hours: float
    lane_split: tuple[int, int] | None = None
    priority_mode: str = "capacity"  # "capacity" or "demand"

    @property
    def n_links(self):
        return self.K + 2

    def ramp_links(self):
        """Indices of mainline links with an on-ramp."""
        return [i for i in range(1, self.K + 1) if self.R[i] > 0]

    def copy_with(self, **overrides):
        fields = {name: getattr(self, name) for name in self.__dataclass_fields__}
        fields.update(overrides)
        return FreewayGeometry(**fields)


def outflow_capacity(F, S, beta_f, beta_s):
    """Capacity of the mainline-to-mainline movement given the off-ramp cap."""
    if beta_s == 0.0:
        return F
    return beta_f * min(F, S / beta_s)


def build_geometry(
    links: list[FundamentalDiagram],
    exit_link: FundamentalDiagram,
    entrance_capacity: float,
    entrance_freeflow: float,
    ramps: dict[int, RampSpec] | None = None,
    lengths_miles=None,
    lanes=None,
    entrance_length_miles: float = 0.25,
    tau_hours: float = 1.0 / 300.0,
    lane_split: tuple[int, int] | None = None,
    priority_mode: str = "capacity",
) -> FreewayGeometry:
    """Assemble a FreewayGeometry from normalized per-link parameters.

    links are mainline links 1..K in order; ramps maps a mainline index to
    its RampSpec.  Default priorities are capacity-proportional, normalized
    pairwise so pf[i] + pr[i] = 1 at every node.
    """
    K = len(links)
    if K < 1:
        raise GeometryError("need at least one mainline link")
    ramps = dict(ramps or {})
    for i in ramps:
        if not 1 <= i <= K:
            raise GeometryError(f"ramp index {i} outside mainline range 1..{K}")
    nl = K + 2
    F = np.zeros(nl)
    N = np.zeros(nl)
    v = np.zeros(nl)
    w = np.zeros(nl)
    beta_f = np.ones(nl)
    beta_s = np.zeros(nl)
    S = np.full(nl, math.inf)
    R = np.zeros(nl)
    vr = np.ones(nl)
    all_links = [None] + list(links) + [exit_link]
    for i in range(1, nl):
        fd = all_links[i]
        F[i], N[i], v[i], w[i] = fd.F, fd.N, fd.v, fd.w
    F[0] = entrance_capacity
    v[0] = entrance_freeflow
    N[0] = 0.0  # the entrance queue is unbounded; its storage is never read
    for i, ramp in ramps.items():
        R[i] = ramp.on_capacity
        vr[i] = ramp.on_freeflow
        S[i] = ramp.off_capacity
        beta_s[i] = ramp.split_off
        beta_f[i] = ramp.split_through

    Fd = np.zeros(nl)
    Fs = np.zeros(nl)
    Fd[0] = F[0]
    for i in range(1, nl):
        Fd[i] = outflow_capacity(F[i], S[i], beta_f[i], beta_s[i])
        Fs[i] = F[i]

    # Capacity-proportional priorities, normalized pairwise per node.
    pf = np.ones(nl)
    pr = np.zeros(nl)
    for i in range(1, K + 1):
        if R[i] > 0:
            up = beta_f[i - 1] * F[i - 1] if i > 1 else F[0]
            pf[i] = up / (up + R[i])
            pr[i] = R[i] / (up + R[i])

    if lengths_miles is None:
        lengths_miles = [entrance_length_miles] + [0.25] * (K + 1)
    if lanes is None:
        lanes = [1] * nl
    L = np.asarray(lengths_miles, dtype=float)
    lanes = np.asarray(lanes, dtype=float)
    if L.shape != (nl,) or lanes.shape != (nl,):
        raise GeometryError(f"lengths and lanes must have {nl} entries (0..K+1)")

    return FreewayGeometry(
        K=K,
        F=_frozen(F), N=_frozen(N), v=_frozen(v), w=_frozen(w),
        beta_f=_frozen(beta_f), beta_s=_frozen(beta_s), S=_frozen(S),
        R=_frozen(R), vr=_frozen(vr), pf=_frozen(pf), pr=_frozen(pr),
        Fd=_frozen(Fd), Fs=_frozen(Fs),
        length_miles=_frozen(L), lanes=_frozen(lanes),
        tau_hours=tau_hours,
        lane_split=lane_split,
        priority_mode=priority_mode,
    )


@dataclass(frozen=True)
class ValidationIssue:
    link: int
    message: str

    def __str__(self):
        return f"link {self.link}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    issues: list[ValidationIssue] = field(default_factory=list)

    @property
    def ok(self):
        return not self.issues

    def raise_if_failed(self):
        if not self.ok:
            raise GeometryError("; ".join(str(i) for i in self.issues))

    def __str__(self):
        if self.ok:
            return "geometry OK"
        return "\n".join(str(i) for i in self.issues)


def validate_geometry(g: FreewayGeometry) -> ValidationReport:
    """Check fundamental-diagram consistency, splits, priorities and
    derived capacities of every link; returns all violations found."""
    issues = []
    tol = 1e-9
    for i in range(1, g.K + 2):
        if g.F[i] <= 0 or g.N[i] <= 0:
            issues.append(ValidationIssue(i, "capacity and storage must be positive"))
            continue
        if not 0 < g.v[i] <= 1 or not 0 < g.w[i] <= 1:
            issues.append(ValidationIssue(i, f"speeds v={g.v[i]:.6g}, w={g.w[i]:.6g} outside (0, 1]"))
        if g.F[i] / g.v[i] + g.F[i] / g.w[i] > g.N[i] + tol:
            issues.append(ValidationIssue(
                i, f"F/v + F/w = {g.F[i] / g.v[i] + g.F[i] / g.w[i]:.6g} exceeds N = {g.N[i]:.6g}"))
        if abs(g.beta_f[i] + g.beta_s[i] - 1.0) > 1e-12 or g.beta_f[i] <= 0:
            issues.append(ValidationIssue(i, "off-ramp split ratios must satisfy beta_f + beta_s = 1, beta_f > 0"))
        expect_fd = outflow_capacity(g.F[i], g.S[i], g.beta_f[i], g.beta_s[i])
        if abs(g.Fd[i] - expect_fd) > tol:
            issues.append(ValidationIssue(i, f"outflow capacity {g.Fd[i]:.6g} != {expect_fd:.6g}"))
    for i in range(1, g.K + 1):
        if g.R[i] > 0:
            if abs(g.pf[i] + g.pr[i] - 1.0) > 1e-12 or g.pf[i] < 0 or g.pr[i] < 0:
                issues.append(ValidationIssue(i, f"node priorities pf={g.pf[i]:.6g}, pr={g.pr[i]:.6g} not normalized"))
            if not 0 < g.vr[i] <= 1:
                issues.append(ValidationIssue(i, "on-ramp speed outside (0, 1]"))
    if g.F[0] <= 0 or not 0 < g.v[0] <= 1:
        issues.append(ValidationIssue(0, "entrance capacity or release speed invalid"))
    return ValidationReport(issues)


@dataclass(frozen=True)
class DualGeometry:
    """Toll/GP split of a corridor: two parallel lane groups per link.

    Group arrays have shape (2, K+2) with row TOLL and row GP.  Capacities,
    storages and mainline priorities are lane-proportional; speeds, splits
    and ramps are shared.  The entrance queue of the base geometry becomes
    the on-ramp of link 1 (lane choice happens at entry), so R[1] > 0
    always holds and there is no link 0.
    """

    K: int
    l1: int
    l2: int
    F: np.ndarray  # (2, K+2)
    N: np.ndarray
    Fd: np.ndarray
    Fs: np.ndarray
    pf: np.ndarray  # (2, K+2) mainline priority at node i per group
    v: np.ndarray  # shared, (K+2,)
    w: np.ndarray
    beta_f: np.ndarray
    beta_s: np.ndarray
    R: np.ndarray
    vr: np.ndarray
    pr: np.ndarray
    length_miles: np.ndarray
    lanes: np.ndarray
    tau_hours: float
    priority_mode: str
    base: FreewayGeometry

    @property
    def n_links(self):
        return self.K + 2

    @property
    def lane_share(self):
        tot = self.l1 + self.l2
        return (self.l1 / tot, self.l2 / tot)

    def ramp_links(self):
        return [i for i in range(1, self.K + 1) if self.R[i] > 0]

    def group_lanes(self, xi):
        """Lane count of group xi per link (fractional if k_i indivisible)."""
        share = self.lane_share[xi]
        return self.lanes * share


def split_lanes(g: FreewayGeometry, l1: int | None = None, l2: int | None = None) -> DualGeometry:
    """Split every mainline link into toll and GP lane groups.

    Every capacity-like quantity scales by l_xi / (l1 + l2); the entrance
    queue is converted into the on-ramp of link 1, which therefore must not
    already carry one.
    """
    if l1 is None or l2 is None:
        if g.lane_split is None:
            raise GeometryError("geometry has no lane split; pass l1, l2 explicitly")
        l1, l2 = g.lane_split
    if l1 < 1 or l2 < 1:
        raise GeometryError("both lane groups need at least one lane")
    if g.R[1] > 0:
        raise GeometryError("link 1 already has an on-ramp; cannot fold the entrance into it")

    shares = np.array([l1, l2], dtype=float) / (l1 + l2)
    F = shares[:, None] * g.F[None, :]
    N = shares[:, None] * g.N[None, :]
    Fd = shares[:, None] * g.Fd[None, :]
    Fs = shares[:, None] * g.Fs[None, :]
    pf = shares[:, None] * g.pf[None, :]

    R = g.R.copy()
    vr = g.vr.copy()
    pr = g.pr.copy()
    R[1] = g.F[0]
    vr[1] = g.v[0]
    pr[1] = 1.0
    pf[:, 1] = 0.0  # no upstream mainline at the entrance node

    return DualGeometry(
        K=g.K, l1=int(l1), l2=int(l2),
        F=_frozen(F), N=_frozen(N), Fd=_frozen(Fd), Fs=_frozen(Fs), pf=_frozen(pf),
        v=g.v, w=g.w, beta_f=g.beta_f, beta_s=g.beta_s,
        R=_frozen(R), vr=_frozen(vr), pr=_frozen(pr),
        length_miles=g.length_miles, lanes=g.lanes,
        tau_hours=g.tau_hours, priority_mode=g.priority_mode,
        base=g,
    )
