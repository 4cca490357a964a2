import numpy as np
import pytest

from oracles import (
    brute_jfd,
    dense_centered_gram,
    dense_kc_lambda_max,
    dense_kcca_lambda_max,
    dense_kgv,
)
from subdeconv.datagen import RngSeed, SourceSpec, gen_component, gen_source
from subdeconv.dependency import (
    DependencyMeasure,
    FunctionSet,
    KernelConfig,
    aggregate_pairwise,
    block_mask,
    default_function_set,
    generalized_variance_gap,
    gram_factor,
    jfd_cost,
    kc_multi,
    kcca_multi,
    kcca_pair,
    kgv_cost,
)
from subdeconv.errors import DegenerateKernel, DimMismatch, NonFiniteDeterminant
from subdeconv.model import SampleMatrix, validate_block_structure

EXACT_CFG = KernelConfig(lowrank_tol=0.0)


def sign_pattern_data():
    """Two 1-D blocks whose centered Grams multiply to exactly zero.

    Built from orthogonal +/- patterns: the centered Gram of each block is
    a rank-one matrix on its pattern, and the patterns are orthogonal.
    """
    u = np.array([[1.0, 1.0, -1.0, -1.0]])
    v = np.array([[1.0, -1.0, 1.0, -1.0]])
    return SampleMatrix(u), SampleMatrix(v)


class TestBlockMask:
    def test_structure(self):
        mask = block_mask(validate_block_structure([2, 1]))
        expected = np.array(
            [[0, 0, 1], [0, 0, 1], [1, 1, 0]], dtype=float
        )
        assert np.array_equal(mask, expected)

    def test_symmetric_idempotent(self):
        mask = block_mask(validate_block_structure([2, 3, 1]))
        assert np.array_equal(mask, mask.T)
        assert np.array_equal(mask * mask, mask)


class TestJfd:
    def test_exact_zero_on_orthogonal_patterns(self):
        # rows follow mutually orthogonal sign patterns, so every
        # coordinate-wise transform has exactly zero cross covariance
        h = np.array(
            [
                [1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0],
                [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0],
            ]
        )
        y = SampleMatrix(h)
        assert jfd_cost(y, validate_block_structure([1, 1])) == pytest.approx(0.0, abs=1e-28)

    def test_two_singleton_blocks_hand_value(self):
        rng = np.random.default_rng(3)
        y = SampleMatrix(rng.standard_normal((2, 400)))
        yc = y.data - y.data.mean(axis=1, keepdims=True)
        c = float(yc[0] @ yc[1]) / 400
        fs = FunctionSet((lambda u: u,))
        cost = jfd_cost(y, validate_block_structure([1, 1]), fs)
        assert cost == pytest.approx(2 * c * c, rel=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(4)
        y = SampleMatrix(rng.standard_normal((5, 300)))
        blocks = validate_block_structure([2, 1, 2])
        ours = jfd_cost(y, blocks)
        brute = brute_jfd(y.data, blocks.dims, default_function_set().fns)
        assert ours == pytest.approx(brute, rel=1e-12)

    def test_invariant_under_block_respecting_permutation(self):
        rng = np.random.default_rng(5)
        y = rng.standard_normal((6, 500))
        blocks = validate_block_structure([3, 3])
        base = jfd_cost(SampleMatrix(y), blocks)
        # permute within blocks and relabel the equal-size blocks
        shuffled = y[[4, 3, 5, 2, 0, 1]]
        assert jfd_cost(SampleMatrix(shuffled), blocks) == pytest.approx(
            base, rel=1e-12
        )

    def test_sample_scaling_toward_zero(self):
        # independent blocks: cost decays like 1/T
        means = []
        sizes = [1000, 10_000, 100_000]
        for T in sizes:
            vals = []
            for s in range(5):
                src, blocks = gen_source(
                    [SourceSpec.uniform(2), SourceSpec.uniform(2)],
                    T,
                    RngSeed(100 + s),
                )
                vals.append(jfd_cost(src, blocks))
            means.append(np.mean(vals))
        assert means[2] < 1e-3
        slope = np.polyfit(np.log(sizes), np.log(means), 1)[0]
        assert slope == pytest.approx(-1.0, abs=0.35)

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            jfd_cost(
                SampleMatrix(np.ones((3, 10))), validate_block_structure([2, 2])
            )


class TestGramFactor:
    def test_identical_points_rank(self):
        data = SampleMatrix(np.ones((2, 16)))
        gf = gram_factor(data, EXACT_CFG)
        assert gf.pivot_rank == 1
        assert gf.rank == 0

    def test_exact_factorization_matches_dense(self):
        rng = np.random.default_rng(6)
        x = SampleMatrix(rng.standard_normal((2, 8)))
        gf = gram_factor(x, EXACT_CFG)
        dense = dense_centered_gram(x.data, EXACT_CFG.sigma)
        assert np.max(np.abs(gf.g @ gf.g.T - dense)) < 1e-10

    def test_columns_centered(self):
        rng = np.random.default_rng(7)
        gf = gram_factor(SampleMatrix(rng.standard_normal((3, 200))), KernelConfig())
        assert np.max(np.abs(gf.g.mean(axis=0))) < 1e-12

    def test_residual_bound_against_centered_trace(self):
        # the bound applies when the tolerance (not the rank cap) terminates
        rng = np.random.default_rng(8)
        cfg = KernelConfig()
        x = SampleMatrix(rng.standard_normal((2, 2000)))
        gf = gram_factor(x, cfg)
        assert gf.rank < cfg.lowrank_cap
        dense = dense_centered_gram(x.data, cfg.sigma)
        trace_centered = np.trace(dense)
        explained = np.sum(gf.g * gf.g)
        assert trace_centered - explained <= cfg.lowrank_tol * trace_centered

    def test_rank_cap_respected(self):
        rng = np.random.default_rng(9)
        cfg = KernelConfig(sigma=0.05, lowrank_cap=10)  # narrow kernel: high rank
        gf = gram_factor(SampleMatrix(rng.standard_normal((2, 300))), cfg)
        assert gf.rank <= 10

    def test_kernel_trace_identity(self):
        # k(u, u) = 1 for every point, so trace(K) = T; an exact pivoted
        # factorization leaves essentially none of it unexplained
        rng = np.random.default_rng(21)
        T = 12
        x = rng.standard_normal((2, T))
        cfg = EXACT_CFG
        diag = [np.exp(-0.5 * 0.0 / cfg.sigma**2) for _ in range(T)]
        assert sum(diag) == T
        gf = gram_factor(SampleMatrix(x), cfg)
        assert gf.residual < 1e-10 * T


class TestKccaPair:
    def test_independent_blocks_small(self):
        src, _ = gen_source(
            [SourceSpec.uniform(2), SourceSpec.uniform(2)], 2000, RngSeed(200)
        )
        cfg = KernelConfig()
        gu = gram_factor(SampleMatrix(src.data[:2]), cfg)
        gv = gram_factor(SampleMatrix(src.data[2:]), cfg)
        assert kcca_pair(gu, gv, cfg) < 0.1

    def test_identical_blocks_near_one(self):
        comp = gen_component(SourceSpec.uniform(2), 2000, RngSeed(201))
        cfg = KernelConfig()
        g = gram_factor(comp, cfg)
        gamma = kcca_pair(g, g, cfg)
        assert 0.9 <= gamma < 1.0
        # dense oracle confirms the same behavior at a subsample size
        sub = SampleMatrix(comp.data[:, :200])
        dense = dense_centered_gram(sub.data, cfg.sigma)
        lam = dense_kcca_lambda_max([dense, dense], cfg.kappa2(200))
        assert lam - 1.0 >= 0.9

    def test_matches_dense_pencil(self):
        rng = np.random.default_rng(10)
        cfg = EXACT_CFG
        for _ in range(5):
            T = int(rng.integers(6, 12))
            u = SampleMatrix(rng.standard_normal((2, T)))
            v = SampleMatrix(rng.standard_normal((1, T)))
            gu, gv = gram_factor(u, cfg), gram_factor(v, cfg)
            gamma = kcca_pair(gu, gv, cfg)
            dense = dense_kcca_lambda_max(
                [dense_centered_gram(u.data, cfg.sigma),
                 dense_centered_gram(v.data, cfg.sigma)],
                cfg.kappa2(T),
            )
            assert 1.0 + gamma == pytest.approx(dense, abs=1e-8)

    def test_sample_reordering_invariance_exact(self):
        # with an exact factorization the measures depend only on the set
        # of samples, not their order
        rng = np.random.default_rng(11)
        T = 120
        cfg = KernelConfig(lowrank_tol=0.0, lowrank_cap=T)
        u = rng.standard_normal((2, T))
        v = rng.standard_normal((2, T)) + 0.5 * u
        perm = rng.permutation(T)
        gu, gv = gram_factor(SampleMatrix(u), cfg), gram_factor(SampleMatrix(v), cfg)
        gup = gram_factor(SampleMatrix(u[:, perm]), cfg)
        gvp = gram_factor(SampleMatrix(v[:, perm]), cfg)
        assert kcca_pair(gu, gv, cfg) == pytest.approx(
            kcca_pair(gup, gvp, cfg), abs=1e-10
        )
        assert kgv_cost([gu, gv], cfg) == pytest.approx(
            kgv_cost([gup, gvp], cfg), abs=1e-10
        )
        assert kc_multi([gu, gv]) == pytest.approx(kc_multi([gup, gvp]), abs=1e-10)

    def test_sample_reordering_stability_truncated(self):
        # truncated factorization: invariance up to the truncation level
        rng = np.random.default_rng(11)
        cfg = KernelConfig()
        u = rng.standard_normal((2, 300))
        v = rng.standard_normal((2, 300)) + 0.5 * u
        perm = rng.permutation(300)
        a = kcca_pair(
            gram_factor(SampleMatrix(u), cfg),
            gram_factor(SampleMatrix(v), cfg),
            cfg,
        )
        b = kcca_pair(
            gram_factor(SampleMatrix(u[:, perm]), cfg),
            gram_factor(SampleMatrix(v[:, perm]), cfg),
            cfg,
        )
        assert a == pytest.approx(b, abs=1e-5)


class TestKccaMulti:
    def test_two_blocks_reduce_to_pair(self):
        rng = np.random.default_rng(12)
        cfg = KernelConfig()
        u = gram_factor(SampleMatrix(rng.standard_normal((2, 150))), cfg)
        v = gram_factor(SampleMatrix(rng.standard_normal((2, 150))), cfg)
        assert kcca_multi([u, v], cfg) - 1.0 == pytest.approx(
            kcca_pair(u, v, cfg), abs=1e-10
        )

    def test_three_blocks_match_dense(self):
        rng = np.random.default_rng(13)
        cfg = EXACT_CFG
        T = 8
        datas = [rng.standard_normal((1, T)) for _ in range(3)]
        grams = [gram_factor(SampleMatrix(d), cfg) for d in datas]
        ours = kcca_multi(grams, cfg)
        dense = dense_kcca_lambda_max(
            [dense_centered_gram(d, cfg.sigma) for d in datas], cfg.kappa2(T)
        )
        assert ours == pytest.approx(dense, abs=1e-8)

    def test_independent_blocks_near_one(self):
        src, _ = gen_source(
            [SourceSpec.uniform(1)] * 3, 2000, RngSeed(205)
        )
        cfg = KernelConfig()
        grams = [gram_factor(SampleMatrix(src.data[i : i + 1]), cfg) for i in range(3)]
        assert kcca_multi(grams, cfg) - 1.0 < 0.2


class TestKgv:
    def test_exactly_block_diagonal_is_zero(self):
        u, v = sign_pattern_data()
        cfg = KernelConfig()
        gu, gv = gram_factor(u, cfg), gram_factor(v, cfg)
        assert kgv_cost([gu, gv], cfg) == pytest.approx(0.0, abs=1e-10)
        assert kcca_pair(gu, gv, cfg) == pytest.approx(0.0, abs=1e-10)

    def test_nonnegative(self):
        rng = np.random.default_rng(14)
        cfg = KernelConfig()
        for _ in range(10):
            grams = [
                gram_factor(SampleMatrix(rng.standard_normal((2, 60))), cfg)
                for _ in range(2)
            ]
            assert kgv_cost(grams, cfg) >= -1e-10

    def test_matches_dense_logdet(self):
        rng = np.random.default_rng(15)
        cfg = EXACT_CFG
        T = 8
        u = rng.standard_normal((2, T))
        v = 0.7 * u + 0.3 * rng.standard_normal((2, T))
        ours = kgv_cost(
            [gram_factor(SampleMatrix(u), cfg), gram_factor(SampleMatrix(v), cfg)],
            cfg,
        )
        dense = dense_kgv(
            [dense_centered_gram(u, cfg.sigma), dense_centered_gram(v, cfg.sigma)],
            cfg.kappa2(T),
        )
        assert ours == pytest.approx(dense, abs=1e-8)

    def test_positive_on_dependent(self):
        comp = gen_component(SourceSpec.uniform(2), 500, RngSeed(206))
        cfg = KernelConfig()
        g = gram_factor(comp, cfg)
        assert kgv_cost([g, g], cfg) > 1.0


class TestKc:
    def test_matches_dense(self):
        rng = np.random.default_rng(16)
        cfg = EXACT_CFG
        T = 8
        u = rng.standard_normal((2, T))
        v = rng.standard_normal((1, T))
        ours = kc_multi(
            [gram_factor(SampleMatrix(u), cfg), gram_factor(SampleMatrix(v), cfg)]
        )
        dense = dense_kc_lambda_max(
            [dense_centered_gram(u, cfg.sigma), dense_centered_gram(v, cfg.sigma)]
        )
        assert ours == pytest.approx(dense, abs=1e-6)

    def test_independent_blocks_near_one(self):
        u, v = sign_pattern_data()
        cfg = KernelConfig()
        assert kc_multi(
            [gram_factor(u, cfg), gram_factor(v, cfg)]
        ) == pytest.approx(1.0, abs=1e-10)

    def test_identical_exceeds_independent(self):
        cfg = KernelConfig()
        dep_vals, ind_vals = [], []
        for s in range(5):
            comp = gen_component(SourceSpec.uniform(2), 800, RngSeed(300 + s))
            other = gen_component(SourceSpec.uniform(2), 800, RngSeed(400 + s))
            g = gram_factor(comp, cfg)
            dep_vals.append(kc_multi([g, g]))
            ind_vals.append(kc_multi([g, gram_factor(other, cfg)]))
        assert min(dep_vals) > max(ind_vals)

    def test_degenerate_kernel(self):
        flat = SampleMatrix(np.ones((1, 8)))
        cfg = KernelConfig()
        with pytest.raises(DegenerateKernel):
            kc_multi([gram_factor(flat, cfg), gram_factor(flat, cfg)])


class TestGeneralizedVarianceGap:
    def test_nonnegative_on_random_psd(self):
        rng = np.random.default_rng(17)
        blocks = validate_block_structure([2, 3])
        for _ in range(50):
            a = rng.standard_normal((5, 5))
            sigma = a @ a.T + 0.1 * np.eye(5)
            assert generalized_variance_gap(sigma, blocks) >= -1e-10

    def test_zero_iff_block_diagonal(self):
        rng = np.random.default_rng(18)
        blocks = validate_block_structure([2, 2])
        a = rng.standard_normal((2, 2))
        b = rng.standard_normal((2, 2))
        sigma = np.zeros((4, 4))
        sigma[:2, :2] = a @ a.T + 0.2 * np.eye(2)
        sigma[2:, 2:] = b @ b.T + 0.2 * np.eye(2)
        assert generalized_variance_gap(sigma, blocks) == pytest.approx(0.0, abs=1e-10)
        sigma[0, 2] = sigma[2, 0] = 0.1
        assert generalized_variance_gap(sigma, blocks) > 1e-4

    def test_singular_block_raises(self):
        blocks = validate_block_structure([1, 1])
        with pytest.raises(NonFiniteDeterminant):
            generalized_variance_gap(np.array([[0.0, 0.0], [0.0, 1.0]]), blocks)


class TestAggregation:
    def test_two_blocks_all_coincide(self):
        rng = np.random.default_rng(19)
        y = SampleMatrix(rng.standard_normal((4, 200)))
        blocks = validate_block_structure([2, 2])
        for kind in ("kcca", "kgv", "kc", "jfd"):
            vals = [
                aggregate_pairwise(
                    DependencyMeasure(kind=kind, aggregation=agg), y, blocks
                )
                for agg in ("pairwise", "recursive", "multiway")
            ]
            assert vals[0] == pytest.approx(vals[1], abs=1e-10)
            assert vals[0] == pytest.approx(vals[2], abs=1e-10)

    def test_jfd_aggregations_identical_three_blocks(self):
        rng = np.random.default_rng(20)
        y = SampleMatrix(rng.standard_normal((6, 150)))
        blocks = validate_block_structure([2, 2, 2])
        vals = [
            aggregate_pairwise(
                DependencyMeasure(kind="jfd", aggregation=agg), y, blocks
            )
            for agg in ("pairwise", "recursive", "multiway")
        ]
        assert vals[0] == pytest.approx(vals[1], rel=1e-12)
        assert vals[0] == pytest.approx(vals[2], rel=1e-12)

    def test_recursive_detects_triple_dependence(self):
        """Pairwise-independent but jointly dependent coordinates: only the
        recursive chain (block vs joint tail) sees the dependence; pairwise
        sums and the multiway pencil are built from pairwise cross-Grams
        and stay at the independent baseline."""
        T = 2000
        blocks = validate_block_structure([1, 1, 1])
        dep = gen_component(SourceSpec.all_k_independent(2), T, RngSeed(500))
        ind, _ = gen_source([SourceSpec.uniform(1)] * 3, T, RngSeed(501))

        def measure(agg, data):
            return aggregate_pairwise(
                DependencyMeasure(kind="kcca", aggregation=agg),
                data,
                blocks,
            )

        rec_dep = measure("recursive", dep)
        rec_ind = measure("recursive", ind)
        assert rec_dep > 5 * rec_ind

        pw_dep = measure("pairwise", dep)
        pw_ind = measure("pairwise", ind)
        assert pw_dep < 3 * max(pw_ind, 0.01)

        mw_dep = measure("multiway", dep)
        mw_ind = measure("multiway", ind)
        assert mw_dep < 3 * max(mw_ind, 0.01)

    def test_monotone_sample_behaviour(self):
        """Each measure separates a dependent process from an independent
        one by at least five null standard deviations at T = 2000."""
        T = 2000
        blocks = validate_block_structure([2, 2])
        n_seeds = 20
        for kind in ("jfd", "kcca", "kgv", "kc"):
            m = DependencyMeasure(kind=kind)
            dep_vals, ind_vals = [], []
            for s in range(n_seeds):
                rng = np.random.default_rng(1000 + s)
                z = gen_component(SourceSpec.uniform(2), T, RngSeed(600 + s)).data
                w = gen_component(SourceSpec.uniform(2), T, RngSeed(700 + s)).data
                dep = SampleMatrix(np.vstack([z, 0.6 * z + 0.8 * w]))
                ind = SampleMatrix(np.vstack([z, w]))
                dep_vals.append(aggregate_pairwise(m, dep, blocks))
                ind_vals.append(aggregate_pairwise(m, ind, blocks))
            null_sd = np.std(ind_vals, ddof=1)
            assert np.mean(dep_vals) > np.mean(ind_vals) + 5 * null_sd, kind
