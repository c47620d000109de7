import numpy as np
import pytest

from conftest import grid_demands, random_corridor
from tollsim.core import FundamentalDiagram, RampSpec, build_geometry
from tollsim.equilibrium import (
    FeasibilityClass,
    analyze,
    classify,
    density_set,
    entry_flows,
    equilibrium_flows,
    growth_rates,
    is_equilibrium,
    max_flows,
    queue_witness,
)
from tollsim.sim import DemandProfile, empty_state, run, step


def chain(F_values, exit_F, N=200.0, v=0.5, w=0.5, ramps=None, F0=15.0, **kw):
    links = [FundamentalDiagram(F=F, N=N, v=v, w=w) for F in F_values]
    exit_fd = FundamentalDiagram(F=exit_F, N=N, v=v, w=w)
    return build_geometry(links, exit_fd, entrance_capacity=F0,
                          entrance_freeflow=0.8, ramps=ramps, **kw)


class TestMaxFlows:
    def test_entrance_cap(self):
        g = chain([20.0], 20.0, F0=15.0)
        mf = max_flows(g, 20.0)
        assert mf.f[0] == pytest.approx(15.0)

    def test_ramp_cap(self):
        g = chain([20.0, 20.0], 20.0, ramps={2: RampSpec(on_capacity=3.0, on_freeflow=0.5)})
        mf = max_flows(g, 1.0, {2: 5.0})
        assert mf.r[2] == pytest.approx(3.0)

    def test_min_recursion_clips_downstream(self):
        g = chain([10.0, 8.0], 20.0, F0=20.0)
        mf = max_flows(g, 50.0)
        assert mf.f[0] == pytest.approx(20.0)
        assert mf.f[1] == pytest.approx(10.0)
        assert mf.f[2] == pytest.approx(8.0)
        assert mf.f[3] == pytest.approx(8.0)


class TestEquilibriumFlows:
    def test_simple_bottleneck_matches_long_run_simulation(self):
        g = chain([8.0], 20.0, F0=15.0)
        eq = equilibrium_flows(g, max_flows(g, 10.0))
        assert eq.f[1] == pytest.approx(8.0)
        assert eq.f[0] == pytest.approx(8.0)
        traj = run(g, DemandProfile.constant(10.0), 5000)
        np.testing.assert_allclose(traj.f[-1], eq.f, atol=1e-6)

    def test_priority_proportional_case_matches_simulation(self):
        g = chain([12.0], 20.0, F0=15.0,
                  ramps={1: RampSpec(on_capacity=6.0, on_freeflow=0.5)})
        pf = g.pf.copy()
        pr = g.pr.copy()
        pf[1], pr[1] = 0.8, 0.2
        g = g.copy_with(pf=pf, pr=pr)
        eq = equilibrium_flows(g, max_flows(g, 10.0, {1: 6.0}))
        assert eq.f[1] == pytest.approx(12.0)
        assert eq.f[0] == pytest.approx(9.6)
        assert eq.r[1] == pytest.approx(2.4)
        traj = run(g, DemandProfile.constant(10.0, {1: 6.0}), 5000)
        np.testing.assert_allclose(traj.f[-1], eq.f, atol=1e-6)
        np.testing.assert_allclose(traj.r[-1], eq.r, atol=1e-6)

    def test_strictly_feasible_equals_max_flows(self):
        g = chain([20.0, 20.0], 20.0, F0=15.0,
                  ramps={2: RampSpec(on_capacity=3.0, on_freeflow=0.5)})
        mf = max_flows(g, 5.0, {2: 2.0})
        eq = equilibrium_flows(g, mf)
        np.testing.assert_allclose(eq.f, mf.f, atol=1e-12)
        np.testing.assert_allclose(eq.r, mf.r, atol=1e-12)


class TestClassify:
    def test_strictly_feasible(self):
        g = chain([12.0, 12.0], 12.0)
        assert classify(g, 7.0) is FeasibilityClass.STRICTLY_FEASIBLE

    def test_feasible_at_equality(self):
        g = chain([12.0, 12.0], 12.0, F0=20.0)
        assert classify(g, 12.0) is FeasibilityClass.FEASIBLE

    def test_infeasible(self):
        g = chain([12.0, 12.0], 12.0, F0=20.0)
        assert classify(g, 16.0) is FeasibilityClass.INFEASIBLE

    def test_entry_flow_product_formula(self):
        g = chain([20.0, 20.0], 20.0,
                  ramps={2: RampSpec(on_capacity=5.0, on_freeflow=0.5,
                                     off_capacity=4.0, split_off=0.2)})
        f = entry_flows(g, 6.0, {2: 3.0})
        assert f[1] == pytest.approx(6.0)
        assert f[2] == pytest.approx(0.8 * (6.0 + 3.0))
        assert f[3] == pytest.approx(0.8 * (6.0 + 3.0))


def bottleneck_corridor(K=3, F=12.0, Fb=8.0):
    """Uniform chain whose exit is the unique bottleneck; demand at exactly
    the bottleneck capacity is feasible but not strictly feasible."""
    return chain([F] * K, Fb, N=100.0, v=0.8, w=0.4, F0=20.0)


class TestDensitySet:
    def test_strictly_feasible_single_vector(self):
        g = chain([12.0, 12.0], 12.0)
        feas, eq, struct = analyze(g, 7.0)
        assert feas is FeasibilityClass.STRICTLY_FEASIBLE
        assert struct.is_unique
        assert struct.bottlenecks == []
        sample = struct.sample()
        np.testing.assert_allclose(sample[1:], struct.n_u[1:], atol=1e-12)

    def test_exit_bottleneck_families(self):
        g = bottleneck_corridor()
        feas, eq, struct = analyze(g, 8.0)
        assert feas is FeasibilityClass.FEASIBLE
        assert struct.bottlenecks == [3]
        seg = struct.segments[0]
        assert not seg.single
        assert list(seg.h_range) == [1, 2, 3]
        assert struct.segments[1].single

    def test_bottleneck_by_outflow_capacity(self):
        # flow hits F_d exactly at link 2 only (off-ramp caps the movement)
        g = chain([20.0, 20.0, 20.0], 20.0, F0=10.0,
                  ramps={2: RampSpec(off_capacity=2.0, split_off=0.2)})
        assert g.Fd[2] == pytest.approx(8.0)
        feas, eq, struct = analyze(g, 10.0)
        assert eq.f[2] == pytest.approx(8.0)
        assert struct.bottlenecks == [2]
        assert struct.segments[0].start == 1 and struct.segments[0].end == 2
        assert struct.segments[1].start == 3 and struct.segments[1].end == 4

    def test_nu_le_nc_where_flow_within_capacity(self, rng):
        for _ in range(20):
            g = random_corridor(rng)
            f_minus1, d = grid_demands(rng, g)
            feas, eq, struct = analyze(g, f_minus1, d)
            for i in range(1, g.K + 2):
                if eq.f[i] <= g.Fd[i] + 1e-12:
                    assert struct.n_u[i] <= struct.n_c[i] + 1e-9

    def test_feasible_implies_no_forced_congestion(self, rng):
        checked = 0
        for _ in range(60):
            g = random_corridor(rng)
            f_minus1, d = grid_demands(rng, g)
            if classify(g, f_minus1, d) is FeasibilityClass.INFEASIBLE:
                continue
            checked += 1
            mf = max_flows(g, f_minus1, d)
            eq = equilibrium_flows(g, mf)
            struct = density_set(g, eq)
            assert struct.forced_congested == []
            np.testing.assert_allclose(eq.r, mf.r, atol=1e-9)
            np.testing.assert_allclose(eq.f, mf.f, atol=1e-9)
        assert checked > 10


class TestIsEquilibrium:
    def test_uncongested_profile_accepted(self):
        g = chain([12.0, 12.0], 12.0)
        feas, eq, struct = analyze(g, 7.0)
        assert is_equilibrium(g, eq, struct.n_u)

    def test_perturbed_profile_rejected_and_not_fixed(self):
        g = chain([12.0, 12.0], 12.0)
        feas, eq, struct = analyze(g, 7.0)
        n = struct.n_u.copy()
        n[1] += 10.0
        assert not is_equilibrium(g, eq, n)
        st = equilibrium_state(g, eq, 7.0, None, n)
        new, _ = step(st, g, entrance_demand=7.0)
        assert np.abs(new.n - st.n)[1:].max() > 1e-6

    def test_family_member_is_fixed_point(self):
        g = bottleneck_corridor()
        feas, eq, struct = analyze(g, 8.0)
        for h in struct.segments[0].h_range:
            n = struct.sample(boundaries={1: h}, frac=0.5)
            assert is_equilibrium(g, eq, n)
            st = equilibrium_state(g, eq, 8.0, None, n)
            new, flows = step(st, g, entrance_demand=8.0)
            np.testing.assert_allclose(new.n[1:], st.n[1:], atol=1e-9)
            np.testing.assert_allclose(flows.f, eq.f, atol=1e-9)


def equilibrium_state(g, eq, f_minus1, d, n):
    n0, q = queue_witness(g, eq, f_minus1, d)
    st = empty_state(g)
    st.n[...] = n
    st.n[0] = n0
    st.q[...] = q
    return st


class TestSampledMembersAreFixedPoints:
    def test_random_instances(self, rng):
        tested = 0
        for _ in range(40):
            g = random_corridor(rng)
            f_minus1, d = grid_demands(rng, g)
            feas, eq, struct = analyze(g, f_minus1, d)
            n = struct.sample()
            st = equilibrium_state(g, eq, f_minus1, d, n)
            new, flows = step(st, g, entrance_demand=f_minus1, ramp_demand=d)
            np.testing.assert_allclose(new.n[1:], st.n[1:], atol=1e-9)
            np.testing.assert_allclose(flows.f, eq.f, atol=1e-9)
            np.testing.assert_allclose(flows.r, eq.r, atol=1e-9)
            tested += 1
        assert tested == 40


class TestGrowthRates:
    def test_infeasible_reports_queue_growth(self):
        g = chain([12.0, 12.0], 12.0, F0=20.0)
        mf = max_flows(g, 16.0)
        eq = equilibrium_flows(g, mf)
        rates = growth_rates(g, eq, 16.0)
        assert rates[0] == pytest.approx(16.0 - eq.f[0])
        assert rates[0] > 0

    def test_zero_demand_empty_equilibrium(self):
        g = chain([12.0], 12.0)
        feas, eq, struct = analyze(g, 0.0)
        assert (struct.n_u[1:] == 0.0).all()
        assert struct.is_unique
