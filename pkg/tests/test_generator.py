import numpy as np
import pytest

from synthstream.corpus import LengthDistribution, StartDistribution
from synthstream.generator import (
    DEAD_END,
    GenerationStats,
    MbrwConfig,
    MemoryDistribution,
    TransitionDistribution,
    generate_clickstream,
    generate_set,
    generate_set_with_stats,
    mbrw_kernel,
    mix_epsilon,
    sample_step,
    split64,
)
from synthstream.seqgraph import CvsMatrix, DsMatrix


def cvs_from_pairs(n, pairs):
    entries = {}
    for (a, b), count in pairs.items():
        entries[(a, b)] = count
        entries[(b, a)] = count
    return CvsMatrix(n, entries)


def complete_cvs(n, count=1):
    return cvs_from_pairs(n, {(a, b): count for a in range(n) for b in range(a + 1, n)})


def dense_oracle(ds, cvs, history, m, epsilon):
    """Direct dense evaluation of the transition formula, independent of the sparse path."""
    n = ds.n
    weights = np.array([float(ds.get(j, history[-1])) for j in range(n)])
    for t in range(min(m, len(history) - 1)):
        w = history[-2 - t]
        weights = weights * np.array([float(cvs.get(j, w)) for j in range(n)])
    total = weights.sum()
    if total > 0:
        return (1.0 - epsilon) * (weights / total) + epsilon / n
    return np.full(n, 1.0 / n)


class TestSeedDerivation:
    def test_reference_vectors(self):
        # split64(0, i) walks the published SplitMix64 output stream for state 0
        assert split64(0, 1) == 0xE220A8397B1DCDAF
        assert split64(0, 2) == 0x6E789E6AA1B965F4
        assert split64(0, 3) == 0x06C45D188009454F

    def test_frozen_values(self):
        assert split64(42, 7) == 6029533247520485195
        assert split64(2**63, 123456) == 13143702252214794660

    def test_no_collisions_small_range(self):
        assert len({split64(99, i) for i in range(100_000)}) == 100_000


class TestKernel:
    def test_single_item_history(self):
        # successor counts 3:1 -> probabilities 0.75 / 0.25
        ds = DsMatrix(3, {(1, 0): 3, (2, 0): 1})
        dist = mbrw_kernel(ds, complete_cvs(3), [0], m=2)
        assert dist.probabilities == pytest.approx([0.0, 0.75, 0.25], abs=1e-12)

    def test_equal_coview_factors_cancel(self):
        ds = DsMatrix(4, {(1, 0): 3, (2, 0): 1})
        cvs = cvs_from_pairs(4, {(1, 3): 2, (2, 3): 2})
        dist = mbrw_kernel(ds, cvs, [3, 0], m=1)
        assert dist.probabilities == pytest.approx([0.0, 0.75, 0.25, 0.0], abs=1e-12)

    def test_zero_coview_kills_candidate(self):
        ds = DsMatrix(4, {(1, 0): 3, (2, 0): 1})
        cvs = cvs_from_pairs(4, {(2, 3): 5})  # candidate 1 never co-viewed with 3
        dist = mbrw_kernel(ds, cvs, [3, 0], m=1)
        assert dist.probabilities == pytest.approx([0.0, 0.0, 1.0, 0.0], abs=1e-12)

    def test_dead_end_marker(self):
        ds = DsMatrix(3, {(1, 0): 3})  # item 2 has no successors
        assert mbrw_kernel(ds, complete_cvs(3), [2], m=1) is DEAD_END

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(25):
            n = int(rng.integers(2, 7))
            ds_entries = {
                (int(r), int(c)): int(rng.integers(1, 10))
                for r in range(n)
                for c in range(n)
                if rng.random() < 0.5
            }
            if not ds_entries:
                continue
            pairs = {
                (a, b): int(rng.integers(1, 10))
                for a in range(n)
                for b in range(a + 1, n)
                if rng.random() < 0.6
            }
            ds = DsMatrix(n, ds_entries)
            cvs = cvs_from_pairs(n, pairs)
            history = [int(x) for x in rng.integers(0, n, size=rng.integers(1, 5))]
            m = int(rng.integers(0, 4))
            for eps in (0.0, 0.3):
                mixed = mix_epsilon(mbrw_kernel(ds, cvs, history, m), eps, n)
                assert mixed.probabilities == pytest.approx(dense_oracle(ds, cvs, history, m, eps), abs=1e-12)

    def test_first_order_reduction(self):
        # with one item of history the kernel is the bare successor distribution
        rng = np.random.default_rng(22)
        for _ in range(10):
            n = 5
            entries = {(int(r), int(c)): int(rng.integers(1, 20)) for r in range(n) for c in range(n) if rng.random() < 0.6}
            if not entries:
                continue
            ds = DsMatrix(n, entries)
            cvs = complete_cvs(n, 3)
            for current in range(n):
                rows, _ = ds.column(current)
                if rows.size == 0:
                    continue
                dist = mbrw_kernel(ds, cvs, [current], m=3)
                colsum = ds.column_sum(current)
                expected = [ds.get(j, current) / colsum for j in range(n)]
                assert dist.probabilities == pytest.approx(expected, abs=1e-12)

    def test_second_order_reduction(self):
        # two items of history with m >= 1: weight = successor count * one co-view factor
        ds = DsMatrix(4, {(1, 0): 3, (2, 0): 5, (3, 0): 2})
        cvs = cvs_from_pairs(4, {(1, 3): 7, (2, 3): 1, (0, 3): 9})
        dist = mbrw_kernel(ds, cvs, [3, 0], m=2)
        raw = {1: 3 * 7, 2: 5 * 1, 3: 2 * 0}
        total = sum(raw.values())
        expected = [0.0, raw[1] / total, raw[2] / total, 0.0]
        assert dist.probabilities == pytest.approx(expected, abs=1e-12)

    def test_scale_invariance(self):
        ds = DsMatrix(4, {(1, 0): 3, (2, 0): 5, (3, 2): 1, (0, 2): 4})
        cvs = cvs_from_pairs(4, {(1, 3): 7, (2, 3): 2, (0, 1): 9})
        scaled_ds = DsMatrix(4, {(r, c): 11 * v for r, c, v in ds.entries()})
        scaled_cvs = CvsMatrix(4, {(r, c): 5 * v for r, c, v in cvs.entries()})
        for history in ([0], [3, 0], [1, 3, 0], [2]):
            for m in (0, 1, 2):
                base = mbrw_kernel(ds, cvs, history, m)
                for other in (mbrw_kernel(scaled_ds, cvs, history, m), mbrw_kernel(ds, scaled_cvs, history, m)):
                    if base is DEAD_END:
                        assert other is DEAD_END
                    else:
                        assert other.probabilities == pytest.approx(base.probabilities, abs=1e-12)

    def test_window_shrinks_at_walk_start(self):
        # memory beyond the available history must not raise or change support
        ds = DsMatrix(3, {(1, 0): 2, (2, 0): 2})
        dist = mbrw_kernel(ds, complete_cvs(3), [0], m=50)
        assert dist.probabilities == pytest.approx([0.0, 0.5, 0.5], abs=1e-12)

    def test_dimension_mismatch(self):
        ds = DsMatrix(3, {(1, 0): 1})
        with pytest.raises(ValueError):
            mbrw_kernel(ds, complete_cvs(4), [0], 1)
        with pytest.raises(ValueError):
            mbrw_kernel(ds, complete_cvs(3), [5], 1)
        with pytest.raises(ValueError):
            mbrw_kernel(ds, complete_cvs(3), [], 1)


class TestMixEpsilon:
    def test_full_smoothing_is_uniform(self):
        ds = DsMatrix(3, {(1, 0): 3})
        mixed = mix_epsilon(mbrw_kernel(ds, complete_cvs(3), [0], 1), 1.0, 3)
        assert mixed.probabilities == pytest.approx([1 / 3] * 3, abs=1e-12)

    def test_zero_epsilon_is_identity(self):
        ds = DsMatrix(3, {(1, 0): 3, (2, 0): 1})
        kernel = mbrw_kernel(ds, complete_cvs(3), [0], 1)
        mixed = mix_epsilon(kernel, 0.0, 3)
        assert mixed.probabilities == pytest.approx(kernel.probabilities, abs=1e-15)

    def test_tiny_epsilon_arithmetic(self):
        # point-mass kernel, eps=1e-4, N=100: winner 0.999901, everyone else 1e-6
        probs = np.zeros(100)
        probs[7] = 1.0
        mixed = mix_epsilon(TransitionDistribution(probs), 0.0001, 100)
        assert mixed.probabilities[7] == pytest.approx(0.999901, abs=1e-12)
        others = np.delete(mixed.probabilities, 7)
        assert others == pytest.approx(np.full(99, 1e-6), abs=1e-15)

    def test_dead_end_mixes_to_uniform(self):
        mixed = mix_epsilon(DEAD_END, 0.0001, 5)
        assert mixed.probabilities == pytest.approx([0.2] * 5, abs=1e-12)

    def test_epsilon_floor(self):
        ds = DsMatrix(6, {(1, 0): 3, (2, 0): 1})
        for eps in (1e-4, 0.1, 0.5, 1.0):
            mixed = mix_epsilon(mbrw_kernel(ds, complete_cvs(6), [0], 1), eps, 6)
            assert mixed.probabilities.min() >= eps / 6 - 1e-12

    def test_total_variation_contraction(self):
        ds = DsMatrix(4, {(1, 0): 9, (2, 0): 1})
        kernel = mbrw_kernel(ds, complete_cvs(4), [0], 1)
        uniform = np.full(4, 0.25)
        tv0 = 0.5 * np.abs(kernel.probabilities - uniform).sum()
        for eps in (0.0, 0.2, 0.7, 1.0):
            mixed = mix_epsilon(kernel, eps, 4)
            tv = 0.5 * np.abs(mixed.probabilities - uniform).sum()
            assert tv == pytest.approx((1 - eps) * tv0, abs=1e-12)

    def test_distribution_validation(self):
        with pytest.raises(ValueError):
            TransitionDistribution(np.array([0.5, 0.4]))
        with pytest.raises(ValueError):
            mix_epsilon(DEAD_END, 1.5, 3)


class TestSampling:
    def test_sample_step_matches_mixed_distribution(self):
        ds = DsMatrix(5, {(1, 0): 3, (2, 0): 1, (3, 0): 6})
        cvs = cvs_from_pairs(5, {(1, 4): 2, (2, 4): 5, (3, 4): 1, (0, 4): 1})
        history, m, eps = [4, 0], 2, 0.15
        expected = mix_epsilon(mbrw_kernel(ds, cvs, history, m), eps, 5).probabilities
        rng = np.random.default_rng(33)
        counts = np.zeros(5)
        draws = 40_000
        for _ in range(draws):
            item, _ = sample_step(ds, cvs, history, m, eps, rng)
            counts[item] += 1
        assert counts / draws == pytest.approx(expected, abs=0.02)

    def test_dead_end_fallback_flag(self):
        ds = DsMatrix(3, {(1, 0): 3})  # item 1 is absorbing
        rng = np.random.default_rng(4)
        item, fell_back = sample_step(ds, complete_cvs(3), [1], 2, 0.0, rng)
        assert fell_back
        assert 0 <= item < 3


class TestGenerate:
    def cycle_setup(self):
        # directed 3-cycle with co-view support everywhere
        ds = DsMatrix(3, {(1, 0): 1, (2, 1): 1, (0, 2): 1})
        return ds, complete_cvs(3)

    def test_single_item_stream(self):
        ds, cvs = self.cycle_setup()
        config = MbrwConfig(
            MemoryDistribution.constant(2),
            LengthDistribution.constant(1),
            epsilon=0.0,
            stream_count=1,
            start_dist=StartDistribution.fixed(1, 3),
            seed=0,
        )
        stream = generate_clickstream(ds, cvs, config, walk_seed=99)
        assert stream.items == (1,)

    def test_cycle_is_deterministic(self):
        # memory 1: the window never reaches back to the candidate itself, so
        # the zero co-view diagonal cannot cut the cycle
        ds, cvs = self.cycle_setup()
        config = MbrwConfig(
            MemoryDistribution.constant(1),
            LengthDistribution.constant(4),
            epsilon=0.0,
            stream_count=1,
            start_dist=StartDistribution.fixed(0, 3),
            seed=0,
        )
        for walk_seed in (1, 2, 12345):
            assert generate_clickstream(ds, cvs, config, walk_seed).items == (0, 1, 2, 0)

    def test_same_walk_seed_same_stream(self):
        ds, cvs = self.cycle_setup()
        config = MbrwConfig(
            MemoryDistribution.rounded_gaussian(3, 2),
            LengthDistribution.geometric(0.2),
            epsilon=0.3,
            stream_count=1,
            start_dist=StartDistribution.uniform(),
            seed=0,
        )
        assert generate_clickstream(ds, cvs, config, 777) == generate_clickstream(ds, cvs, config, 777)

    def test_set_shape_and_lengths(self):
        ds, cvs = self.cycle_setup()
        config = MbrwConfig(
            MemoryDistribution.constant(1),
            LengthDistribution.poisson(2.5),
            epsilon=0.05,
            stream_count=257,
            start_dist=StartDistribution.uniform(),
            seed=5,
        )
        cset = generate_set(ds, cvs, config)
        assert len(cset) == 257
        assert min(len(s) for s in cset.streams) >= 1

    def test_workers_do_not_change_output(self):
        ds, cvs = self.cycle_setup()
        config = MbrwConfig(
            MemoryDistribution.rounded_gaussian(2, 1),
            LengthDistribution.geometric(0.25),
            epsilon=0.1,
            stream_count=400,
            start_dist=StartDistribution.uniform(),
            seed=31,
        )
        serial, stats_serial = generate_set_with_stats(ds, cvs, config, workers=1)
        parallel, stats_parallel = generate_set_with_stats(ds, cvs, config, workers=4)
        assert serial == parallel
        assert stats_serial == stats_parallel

    def test_geometric_lengths_mean_ten(self):
        # published configuration: memory 5, geometric(0.1) lengths, 20000 streams
        ds, cvs = self.cycle_setup()
        config = MbrwConfig(
            MemoryDistribution.constant(5),
            LengthDistribution.geometric(0.1),
            epsilon=0.0,
            stream_count=20_000,
            start_dist=StartDistribution.uniform(),
            seed=12,
        )
        cset = generate_set(ds, cvs, config)
        mean_length = np.mean([len(s) for s in cset.streams])
        assert abs(mean_length - 10.0) / 10.0 < 0.05

    def test_dead_end_walks_keep_their_length(self):
        ds = DsMatrix(3, {(1, 0): 5})  # 1 absorbs, 2 unreachable without jumps
        config = MbrwConfig(
            MemoryDistribution.constant(0),
            LengthDistribution.constant(6),
            epsilon=0.0,
            stream_count=50,
            start_dist=StartDistribution.fixed(0, 3),
            seed=77,
        )
        cset, stats = generate_set_with_stats(ds, complete_cvs(3), config)
        assert all(len(s) == 6 for s in cset.streams)
        assert stats.dead_end_jumps > 0

    def test_zero_memory_walks_counted(self):
        ds, cvs = self.cycle_setup()
        config = MbrwConfig(
            MemoryDistribution.constant(0),
            LengthDistribution.constant(3),
            epsilon=0.0,
            stream_count=20,
            start_dist=StartDistribution.uniform(),
            seed=3,
        )
        _, stats = generate_set_with_stats(ds, cvs, config)
        assert stats == GenerationStats(dead_end_jumps=0, zero_memory_walks=20)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MbrwConfig(
                MemoryDistribution.constant(1),
                LengthDistribution.constant(2),
                epsilon=1.5,
                stream_count=1,
                start_dist=StartDistribution.uniform(),
                seed=0,
            )
        with pytest.raises(ValueError):
            MbrwConfig(
                MemoryDistribution.constant(1),
                LengthDistribution.constant(2),
                epsilon=0.5,
                stream_count=0,
                start_dist=StartDistribution.uniform(),
                seed=0,
            )

    def test_memory_distribution_clamps_to_zero(self):
        rng = np.random.default_rng(8)
        dist = MemoryDistribution.rounded_gaussian(-4, 2)
        samples = [dist.sample(rng) for _ in range(500)]
        assert min(samples) == 0

    def test_epsilon_zero_stays_on_support(self):
        # dead-end free by construction: every column has more candidates (4)
        # than the memory window can suppress (2), and co-views are complete
        rng = np.random.default_rng(14)
        n = 8
        entries = {}
        for col in range(n):
            for row in rng.choice(n, size=4, replace=False):
                entries[(int(row), col)] = int(rng.integers(1, 9))
        ds = DsMatrix(n, entries)
        cvs = complete_cvs(n, 2)
        config = MbrwConfig(
            MemoryDistribution.constant(2),
            LengthDistribution.geometric(0.2),
            epsilon=0.0,
            stream_count=300,
            start_dist=StartDistribution.uniform(),
            seed=15,
        )
        cset, stats = generate_set_with_stats(ds, cvs, config)
        assert stats.dead_end_jumps == 0
        for s in cset.streams:
            for cur, nxt in zip(s.items, s.items[1:]):
                assert ds.get(nxt, cur) > 0
