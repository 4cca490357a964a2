import numpy as np
import pytest

from subdeconv.datagen import RngSeed, SourceSpec, gen_source
from subdeconv.dependency import DependencyMeasure, jfd_cost
from subdeconv.errors import SingleBlock, TooLarge
from subdeconv.model import SampleMatrix, validate_block_structure
from subdeconv.permutation import (
    exhaustive_search,
    greedy_sweeps,
    grouping_classes,
)

JFD = DependencyMeasure(kind="jfd")


def correlated_pair_data(T=4000, seed=0):
    """Two 2-dim blocks with strong within-block, zero cross-block coupling."""
    src, _ = gen_source(
        [SourceSpec.uniform(1), SourceSpec.uniform(1), SourceSpec.uniform(1)],
        T,
        RngSeed(seed),
    )
    a, b, c = src.data
    block1 = np.vstack([a, 0.8 * a + 0.6 * b])
    block2 = np.vstack([c, np.sign(c) * np.abs(c) ** 1.5])
    data = np.vstack([block1, block2])
    return SampleMatrix(data / data.std(axis=1, keepdims=True))


class TestGroupingClasses:
    def test_counts(self):
        assert len(grouping_classes(2, (1, 1))) == 1
        assert len(grouping_classes(4, (2, 2))) == 3
        assert len(grouping_classes(6, (3, 3))) == 10
        assert len(grouping_classes(6, (2, 2, 2))) == 15
        assert len(grouping_classes(3, (1, 2))) == 3

    def test_each_class_partitions(self):
        for cls in grouping_classes(5, (2, 3)):
            flat = sorted(i for grp in cls for i in grp)
            assert flat == list(range(5))


class TestGreedySweeps:
    def test_grouped_input_is_fixed_point(self):
        y = correlated_pair_data()
        blocks = validate_block_structure([2, 2])
        res = greedy_sweeps(y, blocks, JFD)
        assert np.array_equal(res.P, np.eye(4))
        assert res.sweeps == 1
        assert res.converged

    def test_interleaved_recovery_matches_exhaustive(self):
        y = correlated_pair_data(T=10_000, seed=3)
        order = [0, 2, 1, 3]  # interleave the two blocks
        shuffled = SampleMatrix(y.data[order])
        blocks = validate_block_structure([2, 2])
        greedy = greedy_sweeps(shuffled, blocks, JFD)
        exhaustive = exhaustive_search(shuffled, blocks, JFD)
        assert greedy.final_cost == pytest.approx(exhaustive.final_cost, rel=1e-10)
        # recovered grouping reunites rows {0,1} and {2,3} of the original
        regrouped = [sorted(order[i] for i in grp) for grp in
                     (greedy.perm[:2], greedy.perm[2:])]
        assert sorted(map(tuple, regrouped)) == [(0, 1), (2, 3)]

    def test_trace_strictly_decreasing(self):
        y = correlated_pair_data(T=3000, seed=5)
        shuffled = SampleMatrix(y.data[[3, 1, 2, 0]])
        res = greedy_sweeps(shuffled, validate_block_structure([2, 2]), JFD)
        trace = np.array(res.cost_trace)
        assert np.all(np.diff(trace) < 0)
        assert res.final_cost <= trace[0]

    def test_final_cost_consistent_with_direct_evaluation(self):
        y = correlated_pair_data(T=2000, seed=6)
        shuffled = SampleMatrix(y.data[[1, 3, 0, 2]])
        blocks = validate_block_structure([2, 2])
        res = greedy_sweeps(shuffled, blocks, JFD)
        direct = jfd_cost(SampleMatrix(res.P @ shuffled.data), blocks)
        assert res.final_cost == pytest.approx(direct, rel=1e-10)

    def test_idempotent(self):
        y = correlated_pair_data(T=3000, seed=7)
        shuffled = SampleMatrix(y.data[[2, 0, 3, 1]])
        blocks = validate_block_structure([2, 2])
        first = greedy_sweeps(shuffled, blocks, JFD)
        again = greedy_sweeps(
            SampleMatrix(first.P @ shuffled.data), blocks, JFD
        )
        assert np.array_equal(again.P, np.eye(4))
        assert again.sweeps == 1

    def test_sweep_limit_flag(self):
        y = correlated_pair_data(T=3000, seed=8)
        shuffled = SampleMatrix(y.data[[3, 1, 0, 2]])
        res = greedy_sweeps(
            shuffled, validate_block_structure([2, 2]), JFD, max_sweeps=1
        )
        assert res.sweeps == 1
        assert not res.converged

    def test_single_block_rejected(self):
        y = correlated_pair_data()
        with pytest.raises(SingleBlock):
            greedy_sweeps(y, validate_block_structure([4]), JFD)

    def test_kernel_measure_recovery(self):
        src, _ = gen_source(
            [SourceSpec.spherical(2), SourceSpec.letter("B")], 800, RngSeed(9)
        )
        shuffled = SampleMatrix(src.data[[0, 2, 1, 3]])
        blocks = validate_block_structure([2, 2])
        res = greedy_sweeps(shuffled, blocks, DependencyMeasure(kind="kcca"))
        assert res.converged
        regrouped = [sorted([0, 2, 1, 3][i] for i in grp) for grp in
                     (res.perm[:2], res.perm[2:])]
        assert sorted(map(tuple, regrouped)) == [(0, 1), (2, 3)]


class TestExhaustiveSearch:
    def test_too_large(self):
        y = SampleMatrix(np.random.default_rng(0).standard_normal((10, 50)))
        with pytest.raises(TooLarge):
            exhaustive_search(y, validate_block_structure([5, 5]), JFD)

    def test_two_singletons_identity(self):
        y = SampleMatrix(np.random.default_rng(1).standard_normal((2, 50)))
        res = exhaustive_search(y, validate_block_structure([1, 1]), JFD)
        assert np.array_equal(res.P, np.eye(2))

    def test_minimum_over_classes(self):
        # scan the 3 classes of [2,2] by hand and compare
        y = correlated_pair_data(T=1500, seed=11)
        shuffled = SampleMatrix(y.data[[0, 3, 2, 1]])
        blocks = validate_block_structure([2, 2])
        res = exhaustive_search(shuffled, blocks, JFD)
        best = min(
            jfd_cost(SampleMatrix(shuffled.data[list(g1) + list(g2)]), blocks)
            for g1, g2 in grouping_classes(4, (2, 2))
        )
        assert res.final_cost == pytest.approx(best, rel=1e-12)

    def test_greedy_never_beats_exhaustive(self):
        ties = 0
        n = 12
        for s in range(n):
            src, _ = gen_source(
                [SourceSpec.letter("A"), SourceSpec.letter("C"), SourceSpec.spherical(2)],
                1500,
                RngSeed(40 + s),
            )
            rng = np.random.default_rng(s)
            shuffled = SampleMatrix(src.data[rng.permutation(6)])
            blocks = validate_block_structure([2, 2, 2])
            g = greedy_sweeps(shuffled, blocks, JFD)
            e = exhaustive_search(shuffled, blocks, JFD)
            assert g.final_cost >= e.final_cost - 1e-12
            if g.final_cost <= e.final_cost + 1e-12:
                ties += 1
        assert ties >= int(0.6 * n)
