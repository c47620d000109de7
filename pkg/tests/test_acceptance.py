"""Acceptance suite: one test per criterion, each printing a PASS line
with its measured numbers (run with -s to see them live).

Criteria with runtime budgets assume the compiled kernel; conftest builds
it automatically when a compiler is available.
"""

import hashlib
import json
import time
from pathlib import Path

import numpy as np

from conftest import converging_demands, grid_demands, random_corridor
from tollsim import equilibrium as eqm
from tollsim import kernels, scenarios
from tollsim.cli import compare_runs, initial_state_from_config, parse_config, run_scenario
from tollsim.control import SplitRatioController, growth_bounds_from_values
from tollsim.core import GP, TOLL, FundamentalDiagram, build_geometry, split_lanes
from tollsim.node import NodeProblem, solve_merge, solve_node, solve_toll_node
from tollsim.pricing import VotDistribution, run_auction, sample_travelers, vot_price
from tollsim.sim import DemandProfile, empty_state, run, step

GOLDENS = Path(__file__).parent / "goldens.json"


def report(num, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"[criterion {num:2d}] {status} - {detail}")
    assert ok, f"criterion {num}: {detail}"


def random_node_problem(rng):
    m = int(rng.integers(1, 7))
    n = int(rng.integers(1, 7))
    demands = rng.uniform(0.0, 10.0, m)
    supplies = rng.uniform(0.0, 10.0, n)
    split = rng.uniform(0.0, 1.0, (m, n))
    split[rng.random((m, n)) < 0.3] = 0.0
    for i in range(m):
        if split[i].sum() == 0.0:
            split[i, int(rng.integers(0, n))] = 1.0
        split[i] /= split[i].sum()
    priorities = rng.uniform(0.0, 2.0, m)
    return NodeProblem(demands=demands, supplies=supplies, split=split,
                       priorities=priorities)


def test_criterion_1_node_properties():
    """Node solver invariants on 1e4 random problems; merge equivalence."""
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    for _ in range(10_000):
        p = random_node_problem(rng)
        res = solve_node(p)
        f = res.flows
        assert (f >= 0.0).all()
        assert (res.by_input <= p.demands + 1e-9).all()
        assert (res.by_output <= p.supplies + 1e-9).all()
        m, n = p.shape
        assert res.iterations <= m
        for i in range(m):
            row = f[i]
            beta = p.split[i]
            pos = beta > 0.0
            if pos.sum() > 1:
                ratios = row[pos] / beta[pos]
                assert ratios.max() - ratios.min() <= 1e-9
    for _ in range(10_000):
        fd = rng.uniform(0.0, 10.0)
        rd = rng.uniform(0.0, 10.0)
        fs = rng.uniform(0.0, 12.0)
        pf = rng.uniform(0.0, 1.0)
        f, r = solve_merge(fd, rd, fs, pf, 1.0 - pf)
        res = solve_node(NodeProblem(
            demands=np.array([fd, rd]), supplies=np.array([fs]),
            split=np.array([[1.0], [1.0]]), priorities=np.array([pf, 1.0 - pf])))
        assert abs(f - res.flows[0, 0]) <= 1e-9
        assert abs(r - res.flows[1, 0]) <= 1e-9
    elapsed = time.perf_counter() - t0
    report(1, elapsed < 10.0,
           f"2x1e4 node problems, all invariants, merge==node; {elapsed:.1f}s < 10s")


def test_criterion_2_equilibrium_flow_oracle():
    """Simulated long-run flows match the closed-form equilibrium flows."""
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    worst = 0.0
    cut_links_checked = 0
    for _ in range(1000):
        g = random_corridor(rng)
        f_minus1, d = converging_demands(rng, g)
        mf = eqm.max_flows(g, f_minus1, d)
        eq = eqm.equilibrium_flows(g, mf)
        traj = run(g, DemandProfile.constant(f_minus1, d), 10_000)
        err = max(np.abs(traj.f[-1] - eq.f).max(), np.abs(traj.r[-1] - eq.r).max())
        worst = max(worst, err)
        assert err <= 1e-6
        st = traj.final_state()
        f_dem = np.minimum(g.beta_f * g.v * st.n, g.Fd)
        for i in range(1, g.K + 2):
            if traj.f[-1, i] < mf.f[i] - 1e-6:
                cut_links_checked += 1
                assert traj.f[-1, i] < f_dem[i] - 1e-9
    elapsed = time.perf_counter() - t0
    report(2, elapsed < 60.0,
           f"1000 corridors x 1e4 steps, worst flow err {worst:.1e} <= 1e-6, "
           f"flow-cut demand margin at {cut_links_checked} links; {elapsed:.1f}s < 60s "
           f"({kernels.active_name()} kernel)")


def test_criterion_3_density_set_structure():
    """Brute-forced fixed points all lie in the emitted density set."""
    t0 = time.perf_counter()
    fd = FundamentalDiagram(F=12.0, N=100.0, v=0.8, w=0.4)
    exit_fd = FundamentalDiagram(F=8.0, N=100.0, v=0.8, w=0.4)
    g = build_geometry([fd] * 3, exit_fd, entrance_capacity=20.0,
                       entrance_freeflow=0.8)
    demand = 8.0  # exactly the bottleneck capacity
    feas, eq, struct = eqm.analyze(g, demand)
    assert struct.bottlenecks == [3]
    prof = DemandProfile.constant(demand)
    grid = np.linspace(0.0, 100.0, 20)
    checked = 0
    boundary_hits = set()
    for n1 in grid:
        for n2 in grid:
            for n3 in grid:
                st = empty_state(g)
                st.n[1:4] = (n1, n2, n3)
                traj = run(g, prof, 600, initial_state=st)
                final = traj.final_state()
                drift = np.abs(traj.n[-1] - traj.n[-2]).max()
                assert drift <= 1e-10, "not converged"
                assert struct.contains(final.n, tol=1e-9)
                matches = struct.matching_boundaries(final.n)[0]
                boundary_hits.update(matches)
                # interior boundary values identify exactly one family
                h = matches[0]
                interior = (struct.n_u[h] + 1e-6 < final.n[h] < struct.n_c[h] - 1e-6)
                if interior:
                    assert len(matches) == 1
                checked += 1
    # sampled members of E are fixed points of step
    n0, q = eqm.queue_witness(g, eq, demand, None)
    for h in struct.segments[0].h_range:
        for frac in (0.0, 0.3, 0.7, 1.0):
            n = struct.sample(boundaries={1: h}, frac=frac)
            st = empty_state(g)
            st.n[...] = n
            st.n[0] = n0
            st.q[...] = q
            new, flows = step(st, g, entrance_demand=demand)
            assert np.abs(new.n[1:] - st.n[1:]).max() <= 1e-9
    elapsed = time.perf_counter() - t0
    report(3, elapsed < 30.0,
           f"{checked} grid starts converged into E (families hit: "
           f"{sorted(boundary_hits)}), sampled members are fixed points; "
           f"{elapsed:.1f}s < 30s")


def test_criterion_4_strict_feasibility():
    """Strictly feasible inputs: single-profile set and max ramp flows."""
    rng = np.random.default_rng(404)
    count = 0
    while count < 100:
        g = random_corridor(rng)
        f_minus1, d = grid_demands(rng, g)
        for _ in range(12):
            if eqm.classify(g, f_minus1, d) is eqm.FeasibilityClass.STRICTLY_FEASIBLE:
                break
            f_minus1 *= 0.6
            d = {i: v * 0.6 for i, v in d.items()}
        else:
            continue
        mf = eqm.max_flows(g, f_minus1, d)
        eq = eqm.equilibrium_flows(g, mf)
        struct = eqm.density_set(g, eq)
        assert struct.is_unique
        assert struct.bottlenecks == []
        np.testing.assert_allclose(eq.r, mf.r, atol=1e-12)
        np.testing.assert_allclose(eq.f, mf.f, atol=1e-12)
        sample = struct.sample()
        np.testing.assert_allclose(sample[1:], struct.n_u[1:], atol=1e-12)
        count += 1
    report(4, count == 100,
           "100 strictly feasible instances: E = {n_u}, r = r_bar, f = f_bar")


def test_criterion_5_controller_optimality():
    """Grid search over the split never beats lambda_star materially."""
    rng = np.random.default_rng(505)
    grid = np.arange(0.0, 1.0 + 1e-12, 1e-3)
    worst_gap = 0.0
    for _ in range(1000):
        pr = float(rng.uniform(0.0, 1.0))
        share = float(rng.uniform(0.2, 0.8))
        pf = ((1.0 - pr) * share, (1.0 - pr) * (1.0 - share))
        fs = (float(rng.uniform(0.0, 10.0)), float(rng.uniform(0.0, 10.0)))
        fd_up = (float(rng.uniform(0.0, 10.0)), float(rng.uniform(0.0, 10.0)))
        rd = float(rng.uniform(0.05, 8.0))
        b = growth_bounds_from_values(fs=fs, fd_up=fd_up, rd=rd, pf=pf, pr=pr)
        best = 0.0
        for alpha in grid:
            lam = solve_toll_node(alpha, 1.0 - alpha, rd, fd_up=fd_up, fs=fs,
                                  pf=pf, pr=pr).lam
            if lam > best:
                best = lam
        gap = best - b.lambda_star
        worst_gap = max(worst_gap, gap)
        assert gap <= 1e-6
        for alpha in (b.alpha_lo, b.alpha_hi):
            lam = solve_toll_node(alpha, 1.0 - alpha, rd, fd_up=fd_up, fs=fs,
                                  pf=pf, pr=pr).lam
            assert abs(lam - b.lambda_star) <= 1e-9
    report(5, True,
           f"1000 entrance states, grid oracle gap <= {worst_gap:.2e} (<= 1e-6)")


def _run_scenario_1b():
    config = parse_config(scenarios.path("scenario_1b"))
    dual = config.dual
    ctrl = SplitRatioController(dual)
    state = initial_state_from_config(config)
    traj = run(dual, config.profile, config.horizon, controller=ctrl,
               initial_state=state)
    return config, ctrl, traj


def test_criterion_6_controller_convergence():
    """Controller drives the toll lane under its free-flow equilibrium in
    finite time and keeps it there."""
    t0 = time.perf_counter()
    config, ctrl, traj = _run_scenario_1b()
    n_e = ctrl.targets.n_e
    below = (traj.n[:, TOLL, :] <= n_e[None, :] + 1e-3).all(axis=1)
    assert below.any(), "toll lane never reached its free-flow equilibrium zone"
    T = int(np.argmax(below))
    assert below[T:].all(), "toll lane left the zone after entering it"
    elapsed = time.perf_counter() - t0
    report(6, elapsed < 30.0,
           f"scenario 1b: n_toll <= n_e + 1e-3 from step T={T} onward "
           f"(horizon {traj.horizon}); {elapsed:.1f}s < 30s")


def _scenario_run(name, out_dir):
    config = parse_config(scenarios.path(name))
    return config, run_scenario(config, out_dir, seed=0)


def test_criterion_7_scenario_reproduction(tmp_path):
    """Qualitative behavior of the four bundled scenarios + pinned goldens."""
    details = []

    config, res = _scenario_run("scenario_1a", tmp_path / "s1a")
    traj = res["trajectory"]
    ctrl = SplitRatioController(config.dual)
    n_e = ctrl.targets.n_e
    toll_free = (traj.n[:, TOLL, :] <= n_e[None, :] + 1e-3).all(axis=1)
    assert not toll_free.any(), "1a: toll lane should never become fully free"
    congested0 = (traj.n[0, TOLL, 1:] > n_e[1:] + 1e-3).sum()
    congested1 = (traj.n[-1, TOLL, 1:] > n_e[1:] + 1e-3).sum()
    assert congested1 < congested0, "1a: toll lane should partially decongest"
    gp0 = (traj.n[0, GP, 1:] > n_e[1:] + 1e-3).sum()
    gp1 = (traj.n[-1, GP, 1:] > n_e[1:] + 1e-3).sum()
    assert gp1 > gp0, "1a: GP lane should absorb the excess"
    details.append(f"1a: toll congested links {congested0}->{congested1}, "
                   f"gp {gp0}->{gp1}, never fully free")

    config, res = _scenario_run("scenario_1b", tmp_path / "s1b")
    traj = res["trajectory"]
    ctrl = SplitRatioController(config.dual)
    n_e = ctrl.targets.n_e
    toll_free = (traj.n[:, TOLL, :] <= n_e[None, :] + 1e-3).all(axis=1)
    assert toll_free.any() and toll_free[int(np.argmax(toll_free)):].all()
    details.append(f"1b: toll lane fully free from step {int(np.argmax(toll_free))}")

    config, res = _scenario_run("scenario_2", tmp_path / "s2")
    traj = res["trajectory"]
    ctrl = SplitRatioController(config.dual)
    n_e = ctrl.targets.n_e
    toll_free = (traj.n[:, TOLL, :] <= n_e[None, :] + 1e-3).all(axis=1)
    gp_free = (traj.n[:, GP, :] <= n_e[None, :] + 1e-3).all(axis=1)
    surge_end = 100
    assert not toll_free[80:surge_end].any(), "2: toll lane should congest in the surge"
    rec_candidates = np.where(toll_free[surge_end:])[0]
    assert rec_candidates.size, "2: toll lane should recover after the surge"
    T_toll = surge_end + int(rec_candidates[0])
    assert toll_free[T_toll:].all()
    assert not gp_free[T_toll], "2: GP must still be congested when the toll lane clears"
    assert not gp_free[-1], "2: congestion is transferred to the GP lane"
    details.append(f"2: toll congests in surge, recovers at {T_toll}, GP still congested")

    config, res = _scenario_run("scenario_3", tmp_path / "s3")
    traj = res["trajectory"]
    share = config.dual.lane_share[0]
    for ramp in (1, 7):
        assert (np.abs(traj.alpha1[:, ramp] - share) > 1e-6).any(), \
            f"3: ramp {ramp} never redistributed"
    ctrl = SplitRatioController(config.dual)
    n_e = ctrl.targets.n_e
    toll_free = (traj.n[:, TOLL, :] <= n_e[None, :] + 1e-3).all(axis=1)
    assert toll_free[-1], "3: toll lane should decongest"
    details.append("3: both ramps redistribute, toll lane decongests")

    assert GOLDENS.exists(), (
        "goldens.json missing; generate with: python tests/make_goldens.py")
    golden = json.loads(GOLDENS.read_text())
    mismatches = []
    for name, out in (("scenario_1a", tmp_path / "s1a"),
                      ("scenario_1b", tmp_path / "s1b"),
                      ("scenario_2", tmp_path / "s2"),
                      ("scenario_3", tmp_path / "s3")):
        for fname, expect in golden[name].items():
            got = hashlib.sha256((out / fname).read_bytes()).hexdigest()
            if got != expect:
                mismatches.append(f"{name}/{fname}")
    assert not mismatches, f"golden artifact drift: {mismatches}"
    details.append("goldens match")
    report(7, True, "; ".join(details))


def test_criterion_8_three_way_comparison(tmp_path):
    """Equal service across base / all-GP / HOT; delay ordering holds."""
    config = parse_config(scenarios.path("compare_bottleneck"))
    res = compare_runs(config, tmp_path / "cmp", seed=0)
    table = res["table"]
    vmts = [table[k]["vmt"] for k in ("base", "allgp", "hot")]
    spread = (max(vmts) - min(vmts)) / max(vmts)
    assert spread <= 1e-6, f"VMT spread {spread:.2e}"
    d_hot = table["hot"]["delay"]
    d_gp = table["allgp"]["delay"]
    d_base = table["base"]["delay"]
    assert d_hot <= d_gp * (1 + 1e-9) + 1e-9
    assert d_gp <= d_base * (1 + 1e-9) + 1e-9
    assert d_base > 2.0 * d_gp, "base case should be clearly worse"
    report(8, True,
           f"VMT spread {spread:.1e} <= 1e-6; delay HOT {d_hot:.3f} <= "
           f"all-GP {d_gp:.3f} <= base {d_base:.3f} vehicle-hours")


def test_criterion_9_pricing():
    """Auction split exactness and the VoT closed loop."""
    rng = np.random.default_rng(909)
    worst = 0.0
    for _ in range(10_000):
        H = int(rng.integers(1, 80))
        bids = rng.uniform(0.0, 30.0, H)
        alpha1 = float(rng.uniform(0.0, 1.0))
        out = run_auction(bids, alpha1)
        gap = abs(out.count / H - alpha1)
        worst = max(worst, gap - 0.5 / H)
        assert gap <= 0.5 / H
    dist = VotDistribution.uniform(30.0)
    alpha2 = 0.65
    H = 10_000
    price = vot_price(alpha2, dist)
    shares = []
    for t in range(100):
        sample = sample_travelers(dist, 0.25, H, rng)
        shares.append(1.0 - sample.toll_choices(price).mean())
    mean_share = float(np.mean(shares))
    sigma_mean = np.sqrt(alpha2 * (1 - alpha2) / (100 * H))
    assert abs(mean_share - alpha2) <= 3 * sigma_mean
    report(9, True,
           f"1e4 auctions within 1/(2H); VoT loop mean GP share "
           f"{mean_share:.5f} vs target {alpha2} (3 sigma = {3 * sigma_mean:.5f})")


def test_criterion_10_simulation_safety():
    """Long fuzz runs never violate the state-space or conservation."""
    rng = np.random.default_rng(1010)
    t0 = time.perf_counter()
    runs = 0
    for kind in ("single", "dual"):
        for _ in range(10):
            g = random_corridor(rng, lane_split=(1, 1))
            geometry = split_lanes(g) if kind == "dual" else g
            breaks = sorted(rng.integers(0, 10_000, 3).tolist())
            levels = rng.uniform(0.0, 2.5, 4) * g.F[0]
            profile = DemandProfile(
                entrance=[(0, levels[0])] + [(b, lv) for b, lv in zip(breaks, levels[1:])],
                ramps={i: [(0, float(rng.uniform(0, 5)))] for i in g.ramp_links()},
            )
            traj = run(geometry, profile, 10_000)
            n = traj.n
            assert (n >= 0.0).all()
            if kind == "dual":
                assert (n[:, :, 1:] <= geometry.N[None, :, 1:] + 1e-9).all()
                exit_ff = (geometry.v[-1] * n[:, :, -1]
                           <= geometry.F[:, -1][None, :] + 1e-9)
                assert (~exit_ff[:-1] | exit_ff[1:]).all()
                outflow = traj.f[:, :, -1].sum() + traj.s.sum()
            else:
                assert (n[:, 1:] <= geometry.N[None, 1:] + 1e-9).all()
                exit_ff = geometry.v[-1] * n[:, -1] <= geometry.F[-1] + 1e-9
                assert (~exit_ff[:-1] | exit_ff[1:]).all()
                outflow = traj.f[:, -1].sum() + traj.s.sum()
            assert (traj.q >= 0.0).all()
            total_in = traj.entrance_demand.sum() + traj.ramp_demand.sum()
            inside = traj.n[-1].sum() + traj.q[-1].sum()
            assert abs(total_in - outflow - inside) <= 1e-6
            runs += 1
    elapsed = time.perf_counter() - t0
    report(10, True,
           f"{runs} fuzz runs x 1e4 steps: bounds, queues, conservation, "
           f"exit persistence all hold; {elapsed:.1f}s")
