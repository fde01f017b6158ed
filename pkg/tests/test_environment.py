"""World-state tests: traffic, mobility, channel refresh, buffer ledger."""

import numpy as np
import pytest

from teamran.environment import (
    Environment,
    MobilityParams,
    NetworkTopology,
    RandomStreams,
    UserBuffer,
    apply_allocation,
    build_topology,
    generate_arrivals,
    packet_drop_rate,
    refresh_channel,
    step_mobility,
)
from teamran.phy import Allocation, SimParams, path_gain


def small_params(**kw):
    defaults = dict(n_bs=2, n_users=4, n_rbg=3)
    defaults.update(kw)
    return SimParams(**defaults)


class TestArrivals:
    def test_zero_rate_is_silent(self):
        rng = np.random.default_rng(0)
        bits = generate_arrivals(rng, 0.0, 0.1, 10, 4000)
        assert (bits == 0).all()

    def test_mean_matches_offered_load(self):
        rng = np.random.default_rng(1)
        total = np.zeros(1, dtype=np.int64)
        draws = 100_000
        for _ in range(draws // 1000):
            total += generate_arrivals(rng, 4e6, 0.1, 1000, 4000).sum()
        mean = total[0] / draws
        assert mean == pytest.approx(400_000, rel=0.01)

    def test_deterministic_given_seed(self):
        a = generate_arrivals(np.random.default_rng(42), 3e6, 0.1, 20, 4000)
        b = generate_arrivals(np.random.default_rng(42), 3e6, 0.1, 20, 4000)
        np.testing.assert_array_equal(a, b)

    def test_packetized(self):
        bits = generate_arrivals(np.random.default_rng(2), 5e6, 0.1, 50, 4000)
        assert (bits % 4000 == 0).all()


def make_topology(params, mobility, seed=0):
    return build_topology(params, mobility, np.random.default_rng(seed))


class TestMobility:
    def test_zero_speed_keeps_positions(self):
        params = small_params()
        mob = MobilityParams(speed=0.0)
        topo = make_topology(params, mob)
        before = topo.user_positions.copy()
        headings = np.zeros(params.n_users)
        step_mobility(np.random.default_rng(0), topo, mob, 0.1, headings)
        np.testing.assert_array_equal(topo.user_positions, before)

    def test_displacement_is_speed_times_slot(self):
        params = small_params()
        mob = MobilityParams(speed=20.0, turn_probability=0.0,
                             region_radius=1e6)
        topo = make_topology(params, mob)
        before = topo.user_positions.copy()
        headings = np.zeros(params.n_users)
        step_mobility(np.random.default_rng(0), topo, mob, 0.1, headings)
        moved = np.linalg.norm(topo.user_positions - before, axis=1)
        np.testing.assert_allclose(moved, 2.0)

    def test_turn_frequency(self):
        params = small_params(n_users=20)
        mob = MobilityParams(speed=5.0, turn_probability=0.3)
        topo = make_topology(params, mob)
        rng = np.random.default_rng(3)
        headings = rng.uniform(0, 2 * np.pi, params.n_users)
        turns = 0
        trials = 10_000
        for _ in range(trials):
            before = headings.copy()
            headings = step_mobility(rng, topo, mob, 1e-9, headings)
            turns += (headings != before).sum()
        freq = turns / (trials * params.n_users)
        assert freq == pytest.approx(0.3, rel=0.02)

    def test_users_stay_in_home_circle(self):
        params = small_params()
        mob = MobilityParams(speed=30.0, turn_probability=0.3,
                             region_radius=50.0)
        topo = make_topology(params, mob)
        rng = np.random.default_rng(4)
        headings = rng.uniform(0, 2 * np.pi, params.n_users)
        for _ in range(2000):
            headings = step_mobility(rng, topo, mob, 0.1, headings)
            dist = np.linalg.norm(topo.user_positions - topo.home_centers,
                                  axis=1)
            assert (dist <= mob.region_radius + 1e-9).all()


class TestChannel:
    def test_equidistant_users_equal_gain(self):
        params = small_params(n_bs=1, n_users=2)
        topo = NetworkTopology(
            bs_positions=np.array([[0.0, 0.0]]),
            user_positions=np.array([[100.0, 0.0], [0.0, 100.0]]),
            association=np.array([0, 0]),
            home_centers=np.array([[100.0, 0.0], [0.0, 100.0]]),
            home_radius=250.0,
        )
        g = refresh_channel(topo, params)
        assert g[0, 0] == pytest.approx(g[0, 1])

    def test_distance_ratio(self):
        params = small_params(n_bs=1, n_users=2)
        topo = NetworkTopology(
            bs_positions=np.array([[0.0, 0.0]]),
            user_positions=np.array([[100.0, 0.0], [1000.0, 0.0]]),
            association=np.array([0, 0]),
            home_centers=np.zeros((2, 2)),
            home_radius=250.0,
        )
        g = refresh_channel(topo, params)
        assert g[0, 0] / g[0, 1] == pytest.approx(10 ** 3.76)

    def test_matches_elementwise_recomputation(self):
        params = SimParams()
        mob = MobilityParams()
        topo = make_topology(params, mob, seed=5)
        g = refresh_channel(topo, params)
        assert g.shape == (4, 30)
        for n in range(4):
            for k in range(30):
                d = max(np.linalg.norm(topo.bs_positions[n]
                                       - topo.user_positions[k]), 10.0)
                assert g[n, k] == pytest.approx(path_gain(d), rel=1e-12)


class TestBuffers:
    def test_serve_then_arrive_then_truncate(self):
        buf = UserBuffer(capacity=1000)
        buf.arrive(600)
        assert buf.serve(200) == 200
        assert buf.arrive(900) == 300  # 400 + 900 over the 1000 cap
        buf.check_conservation()
        assert buf.queued == 1000

    def test_conservation_random_walk(self):
        rng = np.random.default_rng(6)
        buf = UserBuffer(capacity=5000)
        for _ in range(10_000):
            buf.serve(int(rng.integers(0, 3000)))
            buf.arrive(int(rng.integers(0, 3000)))
            buf.check_conservation()


class TestApplyAllocation:
    def setup_method(self):
        self.params = small_params()
        self.mob = MobilityParams()
        self.topo = make_topology(self.params, self.mob, seed=7)
        self.gains = refresh_channel(self.topo, self.params)

    def _alloc(self):
        alpha = np.zeros((2, 3, 4), dtype=np.int8)
        for n in range(2):
            users = np.flatnonzero(self.topo.association == n)
            for m in range(3):
                alpha[n, m, users[m % len(users)]] = 1
        power = np.full((2, 3), self.params.p_max_watts)
        return Allocation(alpha, power)

    def test_empty_buffers_zero_throughput(self):
        buffers = [UserBuffer(capacity=10**7) for _ in range(4)]
        out = apply_allocation(self._alloc(), self.gains, buffers,
                               self.params, np.zeros(4),
                               self.topo.association)
        assert out.total_throughput == 0.0
        assert (out.dropped_bits == 0).all()

    def test_single_link_hits_capacity(self):
        params = SimParams(n_bs=1, n_users=1, n_rbg=1)
        gains = np.array([[path_gain(200.0)]])
        buffers = [UserBuffer(capacity=10**12)]
        buffers[0].arrive(10**11)
        alpha = np.ones((1, 1, 1), dtype=np.int8)
        alloc = Allocation(alpha, np.full((1, 1), params.p_max_watts))
        out = apply_allocation(alloc, gains, buffers, params, np.zeros(1))
        snr = params.p_max_watts * gains[0, 0] / params.noise_watts
        expected = params.bandwidth_rbg * np.log2(1 + snr)
        assert out.total_throughput == pytest.approx(expected)

    def test_ledger_conservation(self):
        rng = np.random.default_rng(8)
        buffers = [UserBuffer(capacity=50_000) for _ in range(4)]
        for _ in range(200):
            arrivals = rng.integers(0, 40_000, size=4)
            apply_allocation(self._alloc(), self.gains, buffers,
                             self.params, arrivals, self.topo.association)
            for b in buffers:
                b.check_conservation()

    def test_rejects_foreign_user(self):
        alloc = self._alloc()
        # swap one scheduled user to the other BS's user
        other = np.flatnonzero(self.topo.association == 1)[0]
        alloc.alpha[0, 0, :] = 0
        alloc.alpha[0, 0, other] = 1
        buffers = [UserBuffer(capacity=10**6) for _ in range(4)]
        with pytest.raises(ValueError):
            apply_allocation(alloc, self.gains, buffers, self.params,
                             np.zeros(4), self.topo.association)


class TestPacketDropRate:
    def test_no_arrivals(self):
        assert packet_drop_rate([UserBuffer(capacity=10)]) == 0.0

    def test_all_dropped(self):
        buf = UserBuffer(capacity=0)
        buf.arrive(4000)
        assert packet_drop_rate([buf]) == 1.0

    def test_ratio(self):
        buf = UserBuffer(capacity=10**9)
        buf.total_arrived = 10**6
        buf.total_dropped = 2 * 10**5
        buf.queued = 8 * 10**5
        assert packet_drop_rate([buf]) == pytest.approx(0.2)


class TestTopologyAndEnvironment:
    def test_every_bs_has_a_user(self):
        for seed in range(20):
            params = small_params(n_users=3, n_bs=3)
            topo = make_topology(params, MobilityParams(), seed=seed)
            for n in range(3):
                assert (topo.association == n).sum() >= 1

    def test_association_is_total(self):
        params = SimParams()
        topo = make_topology(params, MobilityParams(), seed=9)
        counts = [len(topo.users_of(n)) for n in range(params.n_bs)]
        assert sum(counts) == params.n_users

    def test_env_step_reproducible(self):
        params = small_params()

        def run(seed):
            streams = RandomStreams.from_seed(seed)
            env = Environment(params, MobilityParams(), 3e6, streams)
            alpha = np.zeros((2, 3, 4), dtype=np.int8)
            for n in range(2):
                users = np.flatnonzero(env.topology.association == n)
                for m in range(3):
                    alpha[n, m, users[m % len(users)]] = 1
            alloc = Allocation(alpha, np.full((2, 3), params.p_max_watts))
            outs = [env.step(alloc) for _ in range(50)]
            return np.array([o.total_throughput for o in outs]), env.trace_hash()

        tp1, h1 = run(11)
        tp2, h2 = run(11)
        tp3, h3 = run(12)
        np.testing.assert_array_equal(tp1, tp2)
        assert h1 == h2
        assert h1 != h3

    def test_throughput_is_sum_of_rates(self):
        params = small_params()
        streams = RandomStreams.from_seed(13)
        env = Environment(params, MobilityParams(), 5e6, streams)
        alpha = np.zeros((2, 3, 4), dtype=np.int8)
        for n in range(2):
            users = np.flatnonzero(env.topology.association == n)
            for m in range(3):
                alpha[n, m, users[m % len(users)]] = 1
        alloc = Allocation(alpha, np.full((2, 3), params.p_max_watts))
        for _ in range(20):
            out = env.step(alloc)
            assert out.total_throughput == pytest.approx(out.rates.sum(),
                                                         rel=1e-9)
