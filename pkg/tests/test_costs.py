import math
import random

import pytest
from hypothesis import given, strategies as st

from vtmig import oracles
from vtmig.costs import (EnergyInputs, Thresholds, UxParams, check_qos_constraints, energy,
                         migration_cost, ux_rating, vehicle_ux)
from vtmig.netlink import MigrationDecision, Route
from vtmig.scenario import VtTaskProfile

ROUTE_NAMES = {Route.V2E: "v->j", Route.V2C: "v->i", Route.V2E2C: "v->j->i", Route.NONE: "none"}


class TestEnergy:
    def test_upload(self):
        e = energy(Route.V2E, 8e7, EnergyInputs(vehicle_power_w=1.0, uplink_rate=8e7))
        assert e.upload_j == 1.0

    def test_edge_execution(self):
        inp = EnergyInputs(1.0, 1e6, src_switch_cap=1e-28, src_cpu_hz=1e9)
        assert energy(Route.V2E, 0.0, inp).exec_src == pytest.approx(1e-28 * 1e9 ** 2, rel=1e-15)
        # the conventional form scales by cycles: 1e9 cycles gives 0.1 J
        task = VtTaskProfile(8e7, 1e9 / 8e7, 5.0)
        assert energy(Route.V2E, task, inp, times_cycles=True).exec_src == pytest.approx(0.1, rel=1e-14)

    def test_inactive_route(self):
        e = energy(MigrationDecision(), 8e7, EnergyInputs(1.0, 0.0))
        assert e.total == 0.0 and e.upload_j == e.exec_src == e.migrate == e.exec_dst == 0.0

    def test_zero_rate_on_active_link(self):
        with pytest.raises(ValueError):
            energy(Route.V2E, 1.0, EnergyInputs(1.0, 0.0))
        with pytest.raises(ValueError):
            energy(Route.V2E2C, 1.0, EnergyInputs(1.0, 1e6, backhaul_rate=0.0))

    @pytest.mark.parametrize("times_cycles", [False, True])
    def test_random_routes_match_accumulator(self, times_cycles):
        rng = random.Random(4)
        for _ in range(200):
            route = rng.choice([Route.V2E, Route.V2C, Route.V2E2C])
            task = VtTaskProfile(rng.uniform(1e6, 4e8), rng.uniform(1, 100), 5.0)
            inp = EnergyInputs(rng.uniform(0.1, 0.3), rng.uniform(1e6, 1e8), 1e-28, rng.uniform(1e8, 1e9),
                               rng.uniform(1, 10), rng.uniform(1e6, 1e8), 1e-28, rng.uniform(1e9, 2e9))
            got = energy(route, task, inp, times_cycles=times_cycles)
            ref = oracles.route_energy(ROUTE_NAMES[route], task.data_volume_bits, task.total_cycles,
                                       inp.vehicle_power_w, inp.uplink_rate, inp.src_switch_cap,
                                       inp.src_cpu_hz, inp.edge_power_w, inp.backhaul_rate,
                                       inp.dst_switch_cap, inp.dst_cpu_hz, times_cycles)
            assert got.total == pytest.approx(ref, rel=1e-13)
            assert min(got.upload_j, got.exec_src, got.migrate, got.exec_dst) >= 0.0

    def test_route_active_terms_only(self):
        inp = EnergyInputs(1.0, 1e6, 1e-28, 1e9, 5.0, 1e6, 1e-28, 2e9)
        assert energy(Route.V2E, 1e6, inp).migrate == 0.0
        assert energy(Route.V2E, 1e6, inp).exec_dst == 0.0
        assert energy(Route.V2C, 1e6, inp).exec_src == 0.0
        assert energy(Route.V2C, 1e6, inp).migrate == 0.0
        assert energy(Route.V2E2C, 1e6, inp).migrate == 5.0


class TestMigrationCost:
    def task(self, mb=10.0, cycles=1e9):
        bits = mb * 8e6
        return VtTaskProfile(bits, cycles / bits, 5.0)

    def test_zero_price(self):
        assert migration_cost(self.task(), 0.0) == 0.0

    def test_per_mb(self):
        assert migration_cost(self.task(10.0), 0.40) == pytest.approx(4.0, rel=1e-15)

    def test_per_cycle(self):
        assert migration_cost(self.task(cycles=1e9), 1e-9, mode="per_cycle") == pytest.approx(1.0, rel=1e-15)

    def test_negative_price(self):
        with pytest.raises(ValueError):
            migration_cost(self.task(), -0.1)

    @given(st.floats(0.1, 100), st.floats(0, 1))
    def test_linear(self, mb, price):
        assert migration_cost(self.task(2 * mb), price) == pytest.approx(2 * migration_cost(self.task(mb), price), rel=1e-14)

    def test_random_inputs_match_oracle(self):
        rng = random.Random(5)
        for _ in range(200):
            t, p = self.task(rng.uniform(10, 50)), rng.uniform(0.3, 0.5)
            assert migration_cost(t, p) == oracles.megabyte_cost(t.data_volume_bits, p)


class TestUx:
    def test_all_terms_vanish(self):
        assert ux_rating(1e6, 0.0, 0.0, UxParams()) == 0.0

    def test_asymptote(self):
        assert ux_rating(0.0, 1e6, 1e6, UxParams()) == pytest.approx(1.0, rel=1e-15)

    def test_latency_only(self):
        p = UxParams(w_l=1.0, w_q=0.0, w_r=0.0, a_l=1.0, b_l=1.0)
        assert ux_rating(1.0, 0.0, 0.0, p) == pytest.approx(0.36787944117144232160, rel=1e-15)

    def test_negative_inputs(self):
        with pytest.raises(ValueError):
            ux_rating(-1.0, 0.0, 0.0, UxParams())

    @given(st.floats(0, 50), st.floats(0, 50), st.floats(0, 5), st.floats(0, 5))
    def test_monotone_in_latency(self, l1, l2, q, r):
        lo, hi = sorted((l1, l2))
        p = UxParams(b_l=0.5)
        assert ux_rating(lo, q, r, p) >= ux_rating(hi, q, r, p)
        if hi - lo > 1e-6 and hi < 30:
            assert ux_rating(lo, q, r, p) > ux_rating(hi, q, r, p)

    @given(st.floats(0, 20), st.floats(0, 5), st.floats(0, 5))
    def test_bounded(self, l, q, r):
        p = UxParams(0.5, 0.3, 0.2, 2.0, 0.5, 1.5, 3.0, 1.0, 3.0)
        assert 0.0 <= ux_rating(l, q, r, p) <= p.ceiling + 1e-15

    def test_random_inputs_match_oracle(self):
        rng = random.Random(6)
        for _ in range(200):
            w = [rng.random() for _ in range(3)]
            w = [x / sum(w) for x in w]
            a = [rng.uniform(0.5, 2) for _ in range(3)]
            b = [rng.uniform(0.1, 5) for _ in range(3)]
            L, Q, R = rng.uniform(0, 10), rng.uniform(0, 1), rng.uniform(0, 1)
            got = ux_rating(L, Q, R, UxParams(*w, a[0], b[0], a[1], b[1], a[2], b[2]))
            assert got == pytest.approx(oracles.experience(L, Q, R, w, a, b), rel=1e-14)

    def test_vehicle_ux(self):
        assert vehicle_ux([0.5], True) == 0.5
        assert vehicle_ux([0.2, 0.4, 0.6], True) == pytest.approx(0.4, rel=1e-15)
        assert vehicle_ux([0.9], MigrationDecision()) == 0.0
        with pytest.raises(ValueError):
            vehicle_ux([], True)


class TestQos:
    T = Thresholds(latency_max=5.0, energy_max=50.0, cost_max=20.0, ux_min=0.2,
                   reliability_min=0.5, quality_min=0.5)

    def test_bounds_inclusive(self):
        assert check_qos_constraints(5.0, 50.0, 20.0, 0.2, 0.5, 0.5, self.T) == []

    def test_latency_over(self):
        assert check_qos_constraints(5.0 + 1e-9, 50.0, 20.0, 0.2, 0.5, 0.5, self.T) == ["latency"]

    def test_three_violations_in_stable_order(self):
        out = check_qos_constraints(1.0, 60.0, 25.0, 0.5, 0.1, 0.9, self.T)
        assert out == ["energy", "cost", "reliability"]
        assert check_qos_constraints(1.0, 60.0, 25.0, 0.5, 0.1, 0.9, self.T) == out
