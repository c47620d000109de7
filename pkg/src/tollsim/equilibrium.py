"""Closed-form equilibrium analysis for constant demand.

Under constant inflows the corridor's flows settle to a unique vector,
computed by a backward recursion from the exit; the set of equilibrium
density vectors is a direct product of per-segment sets delimited by
bottlenecks, each either a single profile or a one-parameter family with
an uncongested head, a free boundary link, and a congested tail.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .core import FreewayGeometry

TOL = 1e-9


class FeasibilityClass(enum.Enum):
    STRICTLY_FEASIBLE = "strictly_feasible"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class MaxFlows:
    """Demand-and-capacity-capped flows: the forward recursion's output."""

    f: np.ndarray  # f_bar, index 0..K+1
    r: np.ndarray  # r_bar, index 0..K+1 (0 where no ramp)


@dataclass(frozen=True)
class EquilibriumFlows:
    f: np.ndarray
    r: np.ndarray
    max_flows: MaxFlows

    @property
    def f_bar(self):
        return self.max_flows.f

    @property
    def r_bar(self):
        return self.max_flows.r


def _ramp_demand_array(geometry, d):
    nl = geometry.n_links
    out = np.zeros(nl)
    if d is None:
        return out
    if isinstance(d, dict):
        for i, val in d.items():
            out[i] = val
    else:
        arr = np.asarray(d, dtype=float)
        out[: len(arr)] = arr
    return out


def max_flows(geometry: FreewayGeometry, f_minus1: float, d=None) -> MaxFlows:
    """Forward recursion capping demands by ramp and outflow capacities."""
    nl = geometry.n_links
    dem = _ramp_demand_array(geometry, d)
    fbar = np.zeros(nl)
    rbar = np.zeros(nl)
    fbar[0] = min(f_minus1, geometry.F[0])
    for i in range(1, nl):
        if i <= geometry.K:
            rbar[i] = min(dem[i], geometry.R[i])
        fbar[i] = min(geometry.beta_f[i] * (fbar[i - 1] + rbar[i]), geometry.Fd[i])
    return MaxFlows(f=fbar, r=rbar)


def equilibrium_flows(geometry: FreewayGeometry, mf: MaxFlows) -> EquilibriumFlows:
    """Unique equilibrium flows via the backward three-case recursion.

    Working upstream from f_{K+1} = fbar_{K+1}: whichever of the upstream
    link and the ramp fits inside its priority share of the required node
    throughput is served at its maximum; the other supplies the remainder;
    if neither fits, the split is priority-proportional.
    """
    nl = geometry.n_links
    f = np.zeros(nl)
    r = np.zeros(nl)
    f[nl - 1] = mf.f[nl - 1]
    for i in range(nl - 1, 0, -1):
        x = f[i] / geometry.beta_f[i]  # required inflow to link i
        pf = geometry.pf[i]
        pr = geometry.pr[i]
        if mf.f[i - 1] <= pf * x:
            f[i - 1] = mf.f[i - 1]
            r[i] = x - mf.f[i - 1]
        elif mf.r[i] <= pr * x:
            r[i] = mf.r[i]
            f[i - 1] = x - mf.r[i]
        else:
            f[i - 1] = pf * x
            r[i] = pr * x
    return EquilibriumFlows(f=f, r=r, max_flows=mf)


def entry_flows(geometry: FreewayGeometry, f0: float, r) -> np.ndarray:
    """Flows induced by entry flows alone: f_i = prod of through-splits
    applied to f0 plus every upstream ramp contribution."""
    nl = geometry.n_links
    r = _ramp_demand_array(geometry, r)
    f = np.zeros(nl)
    f[0] = f0
    for i in range(1, nl):
        f[i] = geometry.beta_f[i] * (f[i - 1] + r[i])
    return f


def classify(geometry: FreewayGeometry, f_minus1: float, d=None) -> FeasibilityClass:
    """Compare capped entry flows against every outflow capacity."""
    mf = max_flows(geometry, f_minus1, d)
    f = entry_flows(geometry, mf.f[0], mf.r)
    over = f[1:] - geometry.Fd[1:]
    if (over > TOL).any():
        return FeasibilityClass.INFEASIBLE
    if (over < -TOL).all():
        return FeasibilityClass.STRICTLY_FEASIBLE
    return FeasibilityClass.FEASIBLE


@dataclass(frozen=True)
class Segment:
    """Links (start..end) ending at bottleneck end (or at the exit for the
    final segment).  Either a pinned profile or the union over a boundary
    link h of profiles uncongested strictly upstream of h and congested
    strictly downstream."""

    index: int
    start: int
    end: int
    iu: int
    ic: int
    n_u: np.ndarray  # full-length profiles (views of the structure's)
    n_c: np.ndarray
    final: bool = False

    @property
    def single(self):
        return self.final or self.iu == self.ic - 1

    @property
    def h_range(self):
        if self.single:
            return range(0)
        return range(self.iu + 1, self.ic)

    def fixed_vector(self):
        if not self.single:
            raise ValueError("segment is a one-parameter family")
        out = np.empty(self.end - self.start + 1)
        for k, i in enumerate(range(self.start, self.end + 1)):
            out[k] = self.n_u[i] if i <= self.iu or self.final else self.n_c[i]
        return out

    def matching_boundaries(self, n, tol=TOL):
        """Boundary links h whose family contains n (restricted to this
        segment); [-1] flags a matching pinned profile."""
        if self.single:
            ref = self.fixed_vector()
            seg = n[self.start:self.end + 1]
            return [-1] if np.abs(seg - ref).max() <= tol else []
        out = []
        for h in self.h_range:
            ok = True
            for i in range(self.start, self.end + 1):
                if i < h:
                    ok = abs(n[i] - self.n_u[i]) <= tol
                elif i == h:
                    ok = self.n_u[i] - tol <= n[i] <= self.n_c[i] + tol
                else:
                    ok = abs(n[i] - self.n_c[i]) <= tol
                if not ok:
                    break
            if ok:
                out.append(h)
        return out

    def sample(self, h=None, frac=0.5):
        """A member of the segment's set; h and frac pick the boundary
        link and its fill level for family segments."""
        out = np.empty(self.end - self.start + 1)
        if self.single:
            return self.fixed_vector()
        if h is None:
            h = (self.iu + self.ic) // 2
            h = min(max(h, self.iu + 1), self.ic - 1)
        if h not in self.h_range:
            raise ValueError(f"boundary link {h} outside {self.h_range}")
        for k, i in enumerate(range(self.start, self.end + 1)):
            if i < h:
                out[k] = self.n_u[i]
            elif i == h:
                out[k] = self.n_u[i] + frac * (self.n_c[i] - self.n_u[i])
            else:
                out[k] = self.n_c[i]
        return out


@dataclass(frozen=True)
class DensitySetStructure:
    """The full equilibrium density set: profiles, forced sets, segments."""

    geometry: FreewayGeometry
    flows: EquilibriumFlows
    bottlenecks: list[int]
    n_u: np.ndarray
    n_c: np.ndarray
    forced_uncongested: list[int]  # U
    forced_congested: list[int]  # C
    segments: list[Segment] = field(default_factory=list)

    def contains(self, n, tol=TOL) -> bool:
        n = np.asarray(n, dtype=float)
        return all(seg.matching_boundaries(n, tol) for seg in self.segments)

    def matching_boundaries(self, n, tol=TOL):
        return [seg.matching_boundaries(n, tol) for seg in self.segments]

    @property
    def is_unique(self):
        return all(seg.single for seg in self.segments)

    def sample(self, boundaries: dict[int, int] | None = None, frac=0.5) -> np.ndarray:
        """Assemble one equilibrium vector (index 0 unused, set to 0)."""
        out = np.zeros(self.geometry.n_links)
        boundaries = boundaries or {}
        for seg in self.segments:
            out[seg.start:seg.end + 1] = seg.sample(boundaries.get(seg.index), frac)
        return out

    def describe(self) -> str:
        lines = []
        lines.append(f"bottlenecks I = {self.bottlenecks or 'none'}")
        lines.append(f"forced uncongested U = {self.forced_uncongested or 'none'}; "
                     f"forced congested C = {self.forced_congested or 'none'}")
        for seg in self.segments:
            span = f"links {seg.start}..{seg.end}"
            if seg.single:
                vec = ", ".join(f"{x:.4g}" for x in seg.fixed_vector())
                lines.append(f"segment {seg.index} ({span}): single profile [{vec}]")
            else:
                lines.append(
                    f"segment {seg.index} ({span}): one-parameter families, boundary link "
                    f"h in {seg.h_range.start}..{seg.h_range.stop - 1}, "
                    f"n_h in [n_u, n_c] per link")
        return "\n".join(lines)


def density_set(geometry: FreewayGeometry, eq: EquilibriumFlows,
                tol=TOL) -> DensitySetStructure:
    """Build the equilibrium density-set structure for given flows."""
    K = geometry.K
    nl = geometry.n_links
    f, r = eq.f, eq.r

    n_u = np.zeros(nl)
    n_c = np.zeros(nl)
    for i in range(1, nl):
        n_u[i] = f[i] / (geometry.beta_f[i] * geometry.v[i])
        r_i = r[i] if i <= K else 0.0
        n_c[i] = geometry.N[i] - (r_i + f[i - 1]) / geometry.w[i]

    bottl = []
    for i in range(1, K + 1):
        if abs(f[i] - geometry.Fd[i]) <= tol:
            bottl.append(i)
            continue
        r_next = r[i + 1] if i + 1 <= K else 0.0
        if abs(f[i] + r_next - geometry.Fs[i + 1]) <= tol:
            bottl.append(i)

    U = []
    for i in range(1, K):
        if f[i] < geometry.Fd[i] - tol:
            if f[i] * geometry.pr[i + 1] < r[i + 1] * geometry.pf[i + 1] - tol:
                U.append(i)
    C = []
    for i in range(1, K + 1):
        inflow = f[i - 1] + r[i]
        starved = r[i] < eq.r_bar[i] - tol
        if i == 1:
            starved = starved or f[0] < eq.f_bar[0] - tol
        if starved and inflow < geometry.Fs[i] - tol:
            C.append(i)

    if C and (not bottl or max(C) > bottl[-1]):
        raise AssertionError("forced congested links downstream of every bottleneck")

    segments = []
    prev = 0
    for m, im in enumerate(bottl, start=1):
        seg_links = range(prev + 1, im + 1)
        in_u = [i for i in seg_links if i in U]
        in_c = [i for i in seg_links if i in C]
        iu = max(in_u) if in_u else prev
        ic = min(in_c) if in_c else im + 1
        if iu >= ic:
            raise AssertionError(
                f"inconsistent forced sets in segment {m}: iu={iu} >= ic={ic}")
        segments.append(Segment(index=m, start=prev + 1, end=im, iu=iu, ic=ic,
                                n_u=n_u, n_c=n_c))
        prev = im
    segments.append(Segment(index=len(bottl) + 1, start=prev + 1, end=K + 1,
                            iu=0, ic=0, n_u=n_u, n_c=n_c, final=True))

    return DensitySetStructure(
        geometry=geometry, flows=eq, bottlenecks=bottl,
        n_u=n_u, n_c=n_c, forced_uncongested=U, forced_congested=C,
        segments=segments,
    )


def analyze(geometry: FreewayGeometry, f_minus1: float, d=None):
    """Full pipeline: (feasibility class, equilibrium flows, structure)."""
    mf = max_flows(geometry, f_minus1, d)
    eq = equilibrium_flows(geometry, mf)
    return classify(geometry, f_minus1, d), eq, density_set(geometry, eq)


def is_equilibrium(geometry: FreewayGeometry, flows: EquilibriumFlows, n,
                   tol=TOL) -> bool:
    """Membership test of n in the equilibrium density set for the flows."""
    return density_set(geometry, flows).contains(n, tol)


def queue_witness(geometry: FreewayGeometry, eq: EquilibriumFlows,
                  f_minus1: float, d=None, tol=TOL):
    """Entrance/ramp queue levels that sustain the equilibrium flows.

    Where the node restricts an entry below its capped demand (or capacity
    binds below demand) the queue is saturated; otherwise it is the
    smallest steady level releasing exactly the equilibrium flow.
    """
    dem = _ramp_demand_array(geometry, d)
    if eq.f[0] < eq.f_bar[0] - tol or f_minus1 > geometry.F[0] + tol:
        n0 = 2.0 * geometry.F[0] / geometry.v[0]
    else:
        n0 = eq.f[0] / geometry.v[0]
    q = np.zeros(geometry.n_links)
    for i in range(1, geometry.K + 1):
        if geometry.R[i] <= 0:
            continue
        if eq.r[i] < eq.r_bar[i] - tol or dem[i] > geometry.R[i] + tol:
            q[i] = 2.0 * geometry.R[i] / geometry.vr[i]
        else:
            q[i] = eq.r[i] / geometry.vr[i]
    return n0, q


def growth_rates(geometry: FreewayGeometry, eq: EquilibriumFlows,
                 f_minus1: float, d=None):
    """Queue growth rates (veh/step) at the entrance and each ramp."""
    dem = _ramp_demand_array(geometry, d)
    rates = {0: f_minus1 - eq.f[0]}
    for i in range(1, geometry.K + 1):
        if geometry.R[i] > 0 or dem[i] > 0:
            rates[i] = dem[i] - eq.r[i]
    return rates
