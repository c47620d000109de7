"""Split-ratio feedback controller for the toll lane.

Each step and each entrance, the controller (1) finds the split-ratio
range that maximizes the admitted fraction of the ramp demand (minimum
queue growth), (2) caps the toll-lane share so a free-flowing freeway is
left alone, and (3) sweeps entrances downstream-to-upstream choosing
toll-lane inflows that drain the estimated excess vehicles above the
maximum free-flow equilibrium profile, shrinking upstream targets when a
downstream entrance cannot clear its excess alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GP, TOLL, DualGeometry, GeometryError
from .sim import TrafficState, demands_supplies

BISECT_TOL = 1e-12


class InvalidTargets(GeometryError):
    """A computed equilibrium ramp inflow came out negative."""


def _lambda_group(alpha, fs, fd_up, rd, pfg, prg):
    """Admitted fraction of the ramp demand routed to one lane group when
    it receives share alpha; 1 by convention at alpha = 0."""
    if alpha <= 0.0:
        return 1.0
    denom = alpha * prg + pfg
    if denom > 0.0:
        t1 = fs * (alpha * prg) / denom / (alpha * rd)
    else:
        t1 = fs / (alpha * rd)
    t2 = (fs - fd_up) / (alpha * rd)
    lam = t1 if t1 > t2 else t2
    return lam if lam < 1.0 else 1.0


def _lambda_right_limit(alpha, fs, fd_up, rd, pfg, prg):
    """lim of the group's lambda as its share decreases to alpha."""
    if alpha > 0.0:
        return _lambda_group(alpha, fs, fd_up, rd, pfg, prg)
    if prg > 0.0:
        t1 = math.inf if pfg == 0.0 else (fs / rd) * (prg / pfg)
    else:
        t1 = math.inf if pfg == 0.0 else 0.0
    if fs > fd_up:
        t2 = math.inf
    elif fs < fd_up:
        t2 = -math.inf
    else:
        t2 = 0.0
    return min(max(t1, t2), 1.0)


def _alpha_bar(fs, fd_up, rd, pfg, prg):
    """Largest share the group absorbs without throttling, before clamping."""
    if prg == 0.0:
        a = (fs - fd_up) / rd
    else:
        a = max((fs - fd_up) / rd, fs / rd - pfg / prg)
    return min(1.0, max(0.0, a))


@dataclass(frozen=True)
class GrowthBounds:
    """Optimal toll-share interval for one entrance and the flows at its
    endpoints."""

    alpha_lo: float
    alpha_hi: float
    lambda_star: float
    alpha_bar: tuple[float, float]  # per-group saturation shares
    r1_min: float
    r1_max: float
    rd: float

    @property
    def interval(self):
        return (self.alpha_lo, self.alpha_hi)


def growth_bounds_from_values(fs, fd_up, rd, pf, pr) -> GrowthBounds:
    """Queue-growth-minimizing toll shares from per-group supplies fs,
    upstream demands fd_up and node priorities pf (pairs, toll first)."""
    if rd <= 1e-12:  # nothing to split; also keeps fs/rd finite below
        return GrowthBounds(0.0, 1.0, 1.0, (1.0, 1.0), 0.0, 0.0, rd)

    a1 = _alpha_bar(fs[0], fd_up[0], rd, pf[0], pr)
    a2 = _alpha_bar(fs[1], fd_up[1], rd, pf[1], pr)

    def lam1(x):
        return _lambda_group(x, fs[0], fd_up[0], rd, pf[0], pr)

    def lam2(x):
        return _lambda_group(x, fs[1], fd_up[1], rd, pf[1], pr)

    if a1 + a2 >= 1.0:
        lo, hi, lam_star = 1.0 - a2, a1, 1.0
    elif pr == 0.0 and fs[0] <= fd_up[0] and fs[1] <= fd_up[1]:
        lo, hi, lam_star = 0.0, 1.0, 0.0
    elif lam1(1.0 - a2) >= _lambda_right_limit(a2, fs[1], fd_up[1], rd, pf[1], pr):
        lo = hi = 1.0 - a2
        lam_star = min(lam1(lo), lam2(1.0 - lo))
    elif lam2(1.0 - a1) >= _lambda_right_limit(a1, fs[0], fd_up[0], rd, pf[0], pr):
        lo = hi = a1
        lam_star = min(lam1(lo), lam2(1.0 - lo))
    else:
        # Unique crossing of the two decreasing curves inside (a1, 1 - a2).
        left, right = a1, 1.0 - a2
        for _ in range(200):
            mid = 0.5 * (left + right)
            if lam1(mid) >= lam2(1.0 - mid):
                left = mid
            else:
                right = mid
            if right - left <= BISECT_TOL:
                break
        lo = hi = 0.5 * (left + right)
        lam_star = min(lam1(lo), lam2(1.0 - lo))

    return GrowthBounds(
        alpha_lo=lo, alpha_hi=hi, lambda_star=lam_star, alpha_bar=(a1, a2),
        r1_min=lam_star * lo * rd, r1_max=lam_star * hi * rd, rd=rd,
    )


def growth_bounds(entrance: int, state: TrafficState, dual: DualGeometry) -> GrowthBounds:
    """Bounds at a ramp link from the current dual state."""
    f_d, f_s, r_d = demands_supplies(state, dual)
    return growth_bounds_from_values(
        fs=(f_s[TOLL, entrance], f_s[GP, entrance]),
        fd_up=(f_d[TOLL, entrance - 1], f_d[GP, entrance - 1]),
        rd=r_d[entrance],
        pf=(dual.pf[TOLL, entrance], dual.pf[GP, entrance]),
        pr=dual.pr[entrance],
    )


def freeflow_correction(bounds: GrowthBounds, l1: int, l2: int, rd: float) -> GrowthBounds:
    """Leave a free-flowing entrance alone: when both groups could take
    more than the whole demand, the toll share is capped near its lane
    share instead of soaking up flow."""
    a1, a2 = bounds.alpha_bar
    lane_share = l1 / (l1 + l2)
    if a1 + a2 > 1.0 and a1 > lane_share:
        new_hi = max(1.0 - a2, lane_share)
        return GrowthBounds(
            alpha_lo=min(bounds.alpha_lo, new_hi), alpha_hi=new_hi,
            lambda_star=bounds.lambda_star, alpha_bar=(new_hi, a2),
            r1_min=bounds.r1_min, r1_max=new_hi * rd, rd=bounds.rd,
        )
    return bounds


@dataclass(frozen=True)
class TollTargets:
    """Toll-lane control targets (arrays indexed like links).

    n_star: maximum maintainable free-flow densities; f_star: the flows
    they carry.  n_e / f_e / r_e: the maximum free-flow equilibrium given
    inflows only at ramps.  budgets[m]: vehicle budget of the inter-ramp
    segment starting at ramp m (mainline links only).
    """

    f_star: np.ndarray
    n_star: np.ndarray
    f_e: np.ndarray
    n_e: np.ndarray
    r_e: np.ndarray
    budgets: np.ndarray
    ramps: list[int]


def toll_targets(dual: DualGeometry) -> TollTargets:
    """Backward-recursed maintainable flows and the free-flow equilibrium
    pinned to them at every ramp."""
    K = dual.K
    nl = dual.n_links
    ramps = dual.ramp_links()
    if not ramps or ramps[0] != 1:
        raise GeometryError("controller requires a ramp at link 1 (the entrance)")

    f_star = np.zeros(nl)
    f_star[K + 1] = dual.F[TOLL, K + 1]
    for i in range(K, 0, -1):
        f_star[i] = min(dual.Fd[TOLL, i], f_star[i + 1] / dual.beta_f[i + 1])
    n_star = np.zeros(nl)
    n_star[1:] = f_star[1:] / (dual.beta_f[1:] * dual.v[1:])

    f_e = np.zeros(nl)
    for i in range(1, nl):
        f_e[i] = f_star[i] if i in ramps else dual.beta_f[i] * f_e[i - 1]
    n_e = np.zeros(nl)
    n_e[1:] = f_e[1:] / (dual.beta_f[1:] * dual.v[1:])

    r_e = np.zeros(nl)
    for i in ramps:
        r_e[i] = f_e[i] / dual.beta_f[i] - f_e[i - 1]
        if r_e[i] < -1e-12:
            raise InvalidTargets(f"negative equilibrium ramp inflow at link {i}")

    bounds = ramps + [K + 2]
    budgets = np.zeros(len(ramps))
    for m in range(len(ramps)):
        seg_end = min(bounds[m + 1] - 1, K)
        budgets[m] = n_e[bounds[m]:seg_end + 1].sum()
    return TollTargets(f_star=f_star, n_star=n_star, f_e=f_e, n_e=n_e,
                       r_e=r_e, budgets=budgets, ramps=ramps)


def lane_flow_pass(dual: DualGeometry, group: int, n, r_by_link):
    """Single-lane-group flows given exogenous ramp inflows.

    Mirrors the node model with the ramp flows fixed: the flow out of each
    link is capped by the next link's supply net of its ramp inflow.
    Returns (f, s) arrays.
    """
    K = dual.K
    nl = dual.n_links
    f_d = np.minimum(dual.beta_f * dual.v * n, dual.Fd[group])
    f_s = np.minimum(dual.w * (dual.N[group] - n), dual.Fs[group])
    f = np.zeros(nl)
    s = np.zeros(nl)
    for i in range(1, K + 1):
        r_next = r_by_link[i + 1] if i + 1 <= K else 0.0
        f[i] = min(f_d[i], f_s[i + 1] - r_next)
    f[K + 1] = f_d[K + 1]
    ratio = np.zeros(nl)
    np.divide(dual.beta_s, dual.beta_f, out=ratio, where=dual.beta_f > 0)
    s[1:K + 1] = ratio[1:K + 1] * f[1:K + 1]
    return f, s


def step_lane_exogenous(dual: DualGeometry, group: int, n, r_by_link):
    """One conservation step of a single lane group with fixed ramp
    inflows (a test oracle for the controller's invariance properties)."""
    f, s = lane_flow_pass(dual, group, n, r_by_link)
    K = dual.K
    new = n.copy()
    for i in range(1, K + 1):
        new[i] = n[i] + f[i - 1] + r_by_link[i] - f[i] - s[i]
    new[K + 1] = n[K + 1] + f[K] - f[K + 1]
    return new, f, s


@dataclass(frozen=True)
class ControlDirective:
    """Per-entrance split decision for one step."""

    entrance: int
    alpha1: float
    alpha2: float
    r1: float
    r1_min: float
    r1_max: float
    lambda_star: float
    delta_n: float  # estimated segment excess before choosing r1
    gamma: float  # target-shrinking coefficient applied to this segment


def compute_directives(state: TrafficState, dual: DualGeometry,
                       targets: TollTargets) -> list[ControlDirective]:
    """One sweep of the redistribution loop; returns directives ordered by
    entrance index (upstream first)."""
    K = dual.K
    ramps = targets.ramps
    M = len(ramps)
    seg_bounds = ramps + [K + 2]
    f_d, f_s, r_d = demands_supplies(state, dual)

    bounds: dict[int, GrowthBounds] = {}
    for i in ramps:
        b = growth_bounds_from_values(
            fs=(f_s[TOLL, i], f_s[GP, i]),
            fd_up=(f_d[TOLL, i - 1], f_d[GP, i - 1]),
            rd=r_d[i],
            pf=(dual.pf[TOLL, i], dual.pf[GP, i]),
            pr=dual.pr[i],
        )
        bounds[i] = freeflow_correction(b, dual.l1, dual.l2, r_d[i])

    # Toll-lane flow estimates with every entrance held at its minimum.
    r_tilde = np.zeros(dual.n_links)
    for i in ramps:
        r_tilde[i] = bounds[i].r1_min
    f_tilde, s_tilde = lane_flow_pass(dual, TOLL, state.n[TOLL], r_tilde)

    r1_max = {}
    for i in ramps:
        cap = min(f_s[TOLL, i], targets.f_e[i] / dual.beta_f[i])
        rmax = bounds[i].r1_max
        if f_d[TOLL, i - 1] + rmax > cap:
            rmax = max(bounds[i].r1_min, cap - f_d[TOLL, i - 1])
        r1_max[i] = rmax

    gamma = {M: 1.0}
    delta_n = 0.0
    chosen: dict[int, tuple[float, float, float]] = {}
    for m in range(M, 0, -1):
        im = seg_bounds[m - 1]
        seg_end = min(seg_bounds[m] - 1, K)
        content = float(state.n[TOLL, im:seg_end + 1].sum())
        delta_n += (content - gamma[m] * targets.budgets[m - 1]
                    + f_tilde[im - 1] - f_tilde[seg_end]
                    - float(s_tilde[im:seg_end + 1].sum()))
        r1 = max(bounds[im].r1_min, min(r1_max[im], -delta_n))
        chosen[im] = (r1, delta_n, gamma[m])
        if m == 1:
            break
        delta_n = max(0.0, delta_n + r1)
        fe_up = targets.f_e[im - 1]
        gamma[m - 1] = min(1.0, (f_s[TOLL, im] - r1) / fe_up) if fe_up > 0 else 1.0

    directives = []
    lane_share = dual.lane_share[0]
    for i in ramps:
        b = bounds[i]
        r1, dn, gm = chosen[i]
        if r_d[i] <= 0.0 or b.lambda_star <= 0.0:
            alpha1 = lane_share
            r1 = 0.0
        else:
            alpha1 = r1 / (b.lambda_star * r_d[i])
            alpha1 = min(max(alpha1, 0.0), 1.0)
        directives.append(ControlDirective(
            entrance=i, alpha1=alpha1, alpha2=1.0 - alpha1, r1=r1,
            r1_min=b.r1_min, r1_max=r1_max[i], lambda_star=b.lambda_star,
            delta_n=dn, gamma=gm,
        ))
    return directives


class SplitRatioController:
    """Stateless per-step controller; caches the toll-lane targets."""

    def __init__(self, dual: DualGeometry):
        if dual.priority_mode != "capacity":
            # growth bounds evaluate the stored node priorities; with
            # demand-proportional priorities the predictions would not
            # match the realized node flows
            raise GeometryError("the split-ratio controller requires "
                                "capacity-proportional priorities")
        self.dual = dual
        self.targets = toll_targets(dual)

    def directives(self, state: TrafficState, ramp_demand=None) -> list[ControlDirective]:
        return compute_directives(state, self.dual, self.targets)
