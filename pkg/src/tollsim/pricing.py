"""Demand-side actuators: tolls that realize requested split ratios.

Two mechanisms: inverting a (piecewise-linear) value-of-time distribution
to price the requested GP share, with online recalibration from observed
revenue; and a uniform-price auction over traveler bids that admits
exactly the requested fraction.  A synthetic traveler model closes the
loop in simulation: a traveler pays iff their value of time times the
time saving covers the toll.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GP, TOLL, DualGeometry


class PricingError(ValueError):
    pass


class InconsistentObservation(PricingError):
    """Observed revenue implies more paying vehicles than vehicles."""


@dataclass(frozen=True)
class VotDistribution:
    """Piecewise-linear CDF of value of time over [0, pi_max] ($/hour)."""

    knots: np.ndarray  # price points, increasing, knots[0] = 0
    cdf: np.ndarray  # nondecreasing, cdf[0] = 0, cdf[-1] = 1

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        c = np.asarray(self.cdf, dtype=float)
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "cdf", c)
        if k.ndim != 1 or k.shape != c.shape or len(k) < 2:
            raise PricingError("need matching knot/cdf arrays with >= 2 points")
        if k[0] != 0 or (np.diff(k) <= 0).any():
            raise PricingError("knots must start at 0 and increase")
        if abs(c[0]) > 1e-12 or abs(c[-1] - 1) > 1e-12 or (np.diff(c) < -1e-12).any():
            raise PricingError("cdf must be nondecreasing from 0 to 1")

    @staticmethod
    def uniform(pi_max: float) -> "VotDistribution":
        return VotDistribution(knots=np.array([0.0, pi_max]), cdf=np.array([0.0, 1.0]))

    @property
    def pi_max(self):
        return float(self.knots[-1])

    def cdf_at(self, pi: float) -> float:
        return float(np.interp(pi, self.knots, self.cdf))

    def inverse(self, prob: float) -> float:
        """Generalized inverse; ties on flat segments resolve to the
        smallest price."""
        prob = min(max(prob, 0.0), 1.0)
        c = self.cdf
        k = int(np.searchsorted(c, prob, side="left"))
        if k == 0:
            return float(self.knots[0])
        lo_c, hi_c = c[k - 1], c[k]
        lo_p, hi_p = self.knots[k - 1], self.knots[k]
        if hi_c == lo_c:
            return float(lo_p)
        return float(lo_p + (prob - lo_c) * (hi_p - lo_p) / (hi_c - lo_c))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        return np.interp(u, self.cdf, self.knots)


def vot_price(alpha2: float, dist: VotDistribution) -> float:
    """Price per hour at which a fraction alpha2 of travelers (those with
    lower value of time) prefers the free lanes."""
    if not 0.0 <= alpha2 <= 1.0:
        raise PricingError("target GP fraction must lie in [0, 1]")
    return dist.inverse(alpha2)


@dataclass(frozen=True)
class TollQuote:
    price_per_hour: float
    time_saving_hours: float

    @property
    def toll(self):
        return self.price_per_hour * self.time_saving_hours


@dataclass(frozen=True)
class TollObservation:
    """One calibration period's observables."""

    revenue: float  # T
    price: float  # pi* tau_save actually charged
    n_toll: float  # vehicles counted in the toll lanes (HOT mode)
    n_gp: float  # vehicles counted in the GP lanes
    time_saving_hours: float
    price_per_hour: float  # pi*


def time_saving(state, dual: DualGeometry, entrance: int, flows=None,
                u_min_mph: float = 5.0) -> float:
    """Instantaneous GP-minus-toll travel time from an entrance to the
    exit, clamped at zero.

    Speeds are outflow-based as in the metrics (free flow on empty links),
    floored at u_min to keep travel times finite.
    """
    tau = dual.tau_hours
    L = dual.length_miles
    V = dual.v * L / tau
    total = [0.0, 0.0]
    for g in (TOLL, GP):
        for j in range(entrance, dual.K + 2):
            n_j = state.n[g, j]
            if n_j <= 1e-12 or flows is None:
                u = V[j]
            else:
                moved = flows.f[g, j] + flows.s[g, j]
                u = min(moved * L[j] / (n_j * tau), V[j])
            u = max(u, u_min_mph)
            total[g] += L[j] / u
    return max(0.0, total[GP] - total[TOLL])


def vot_update(dist: VotDistribution, obs: TollObservation, mode: str = "ETL",
               smoothing: float = 0.1) -> VotDistribution:
    """Recalibrate the distribution from one observation period.

    The observed tail mass above the charged price (paying share) pulls
    the CDF knot nearest that price toward 1 - tail by exponential
    smoothing; the CDF is then re-monotonized.  ETL mode infers the paying
    count from revenue alone; HOT mode uses the counted toll-lane
    vehicles, since some of them ride free.
    """
    if obs.price <= 0:
        raise PricingError("charged price must be positive to calibrate")
    if mode == "ETL":
        inferred = obs.revenue / obs.price
        # use counted toll vehicles when available, else the inference
        base = obs.n_toll if obs.n_toll > 0 else inferred
        denom = base + obs.n_gp
        tail = inferred / denom if denom > 0 else 0.0
    elif mode == "HOT":
        denom = obs.price * (obs.n_toll + obs.n_gp)
        tail = obs.revenue / denom if denom > 0 else 0.0
    else:
        raise PricingError(f"unknown calibration mode {mode!r}")
    if tail > 1.0 + 1e-9:
        raise InconsistentObservation(
            f"inferred paying share {tail:.4g} exceeds 1")
    tail = min(tail, 1.0)

    target = 1.0 - tail
    cdf = dist.cdf.copy()
    if len(cdf) > 2:
        k = 1 + int(np.argmin(np.abs(dist.knots[1:-1] - obs.price_per_hour)))
        cdf[k] = (1.0 - smoothing) * cdf[k] + smoothing * target
        cdf = np.maximum.accumulate(np.clip(cdf, 0.0, 1.0))
        cdf[0] = 0.0
        cdf[-1] = 1.0
        cdf = np.maximum.accumulate(cdf)
    return VotDistribution(knots=dist.knots.copy(), cdf=cdf)


@dataclass(frozen=True)
class AuctionOutcome:
    admitted: np.ndarray  # indices into the submitted bid list
    clearing_price: float
    revenue: float

    @property
    def count(self):
        return len(self.admitted)


def run_auction(bids, alpha1: float, variant: str = "paper",
                pricing_rule: str = "lowest_accepted") -> AuctionOutcome:
    """Admit the top bidders at a uniform price.

    variant="paper" admits round(alpha1 * H) bidders (half away from
    zero); variant="revenue_max" admits the count h <= alpha1 * H
    maximizing h * (h-th highest bid), smallest h on ties.  Everyone
    admitted pays the lowest accepted bid, or the highest rejected bid
    under pricing_rule="next_bid".
    """
    if not 0.0 <= alpha1 <= 1.0:
        raise PricingError("target toll fraction must lie in [0, 1]")
    if variant not in ("paper", "revenue_max"):
        raise PricingError(f"unknown auction variant {variant!r}")
    bids = np.asarray(bids, dtype=float)
    H = len(bids)
    order = np.argsort(-bids, kind="stable")
    if H == 0:
        return AuctionOutcome(admitted=np.empty(0, dtype=int),
                              clearing_price=0.0, revenue=0.0)
    if variant == "paper":
        h_star = int(math.floor(alpha1 * H + 0.5))
    else:
        h_max = int(math.floor(alpha1 * H + 1e-12))
        h_star = 0
        best = 0.0
        for h in range(1, h_max + 1):
            rev = h * bids[order[h - 1]]
            if rev > best + 1e-15:
                best = rev
                h_star = h
    if h_star <= 0:
        return AuctionOutcome(admitted=np.empty(0, dtype=int),
                              clearing_price=0.0, revenue=0.0)
    h_star = min(h_star, H)
    if pricing_rule == "lowest_accepted":
        price = float(bids[order[h_star - 1]])
    elif pricing_rule == "next_bid":
        price = float(bids[order[h_star]]) if h_star < H else 0.0
    else:
        raise PricingError(f"unknown pricing rule {pricing_rule!r}")
    return AuctionOutcome(admitted=order[:h_star].copy(),
                          clearing_price=price, revenue=h_star * price)


@dataclass(frozen=True)
class TravelerSample:
    vot: np.ndarray  # $/hour
    bids: np.ndarray  # $ for the current time saving

    def toll_choices(self, price_per_hour: float) -> np.ndarray:
        """Who buys in at price pi*: those valuing the saving at least as
        much as it costs."""
        return self.vot >= price_per_hour


def sample_travelers(dist: VotDistribution, tau_save_hours: float, H: int,
                     seed) -> TravelerSample:
    """Draw H travelers; deterministic for a fixed seed."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    vot = dist.sample(rng, int(H))
    return TravelerSample(vot=vot, bids=vot * tau_save_hours)


class VotPricer:
    """Converts requested splits to tolls via the VoT distribution and
    simulates traveler compliance; optionally recalibrates.

    Travelers are indifferent when the toll lane saves no time; the
    requested split is then recorded as realized with a zero toll.
    """

    def __init__(self, dist: VotDistribution, travelers_per_step: int = 2000,
                 smoothing: float = 0.1, calibrate_every: int = 0,
                 mode: str = "ETL", u_min_mph: float = 5.0, seed: int = 0):
        self.dist = dist
        self.H = int(travelers_per_step)
        self.smoothing = smoothing
        self.calibrate_every = int(calibrate_every)
        self.mode = mode
        self.u_min_mph = u_min_mph
        self.rng = np.random.default_rng(seed)
        self._period = {"revenue": 0.0, "steps": 0, "last_price": 0.0,
                        "last_tau": 0.0}

    def realize(self, state, dual, alpha_row, prev_flows, t):
        out = {}
        for i in dual.ramp_links():
            alpha2 = 1.0 - alpha_row[i]
            price = vot_price(alpha2, self.dist)
            tau_save = time_saving(state, dual, i, prev_flows, self.u_min_mph)
            toll = price * tau_save
            if tau_save <= 0.0:
                out[i] = (alpha_row[i], 0.0, None)
                continue
            sample = sample_travelers(self.dist, tau_save, self.H, self.rng)
            realized = float(sample.toll_choices(price).mean()) if self.H else alpha_row[i]
            out[i] = (realized, toll, None)
            self._period["last_price"] = price
            self._period["last_tau"] = tau_save
        return out

    def observe(self, state, dual, flows, tolls_row, t):
        """Post-step revenue accounting and periodic recalibration."""
        step_rev = float((tolls_row * flows.r[TOLL]).sum())
        self._period["revenue"] += step_rev
        self._period["steps"] += 1
        if self.calibrate_every and self._period["steps"] >= self.calibrate_every:
            price = self._period["last_price"]
            tau_save = self._period["last_tau"]
            if price > 0 and tau_save > 0:
                obs = TollObservation(
                    revenue=self._period["revenue"],
                    price=price * tau_save,
                    n_toll=float(state.n[TOLL].sum()),
                    n_gp=float(state.n[GP].sum()),
                    time_saving_hours=tau_save,
                    price_per_hour=price,
                )
                try:
                    self.dist = vot_update(self.dist, obs, self.mode, self.smoothing)
                except InconsistentObservation:
                    pass  # skip a period whose books do not balance
            self._period = {"revenue": 0.0, "steps": 0, "last_price": 0.0,
                            "last_tau": 0.0}

    def state_dump(self):
        return {"knots": self.dist.knots.tolist(), "cdf": self.dist.cdf.tolist()}


class AuctionPricer:
    """Realizes splits by auctioning toll-lane slots among the step's
    queued demand."""

    def __init__(self, dist: VotDistribution, variant: str = "paper",
                 pricing_rule: str = "lowest_accepted",
                 u_min_mph: float = 5.0, seed: int = 0):
        self.dist = dist
        self.variant = variant
        self.pricing_rule = pricing_rule
        self.u_min_mph = u_min_mph
        self.rng = np.random.default_rng(seed)

    def realize(self, state, dual, alpha_row, prev_flows, t):
        out = {}
        r_d = np.minimum(dual.vr * state.q, dual.R)
        for i in dual.ramp_links():
            H = int(round(r_d[i]))
            if H <= 0:
                continue
            tau_save = time_saving(state, dual, i, prev_flows, self.u_min_mph)
            sample = sample_travelers(self.dist, tau_save, H, self.rng)
            outcome = run_auction(sample.bids, alpha_row[i], self.variant,
                                  self.pricing_rule)
            out[i] = (outcome.count / H, outcome.clearing_price, outcome.revenue)
        return out
