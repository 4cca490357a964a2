import numpy as np
import pytest

from subdeconv.datagen import RngSeed, SourceSpec, gen_source
from subdeconv.errors import NotWhitened
from subdeconv.evaluation import GlobalMap, amari_index
from subdeconv.ica import IcaConfig, run_ica
from subdeconv.model import SampleMatrix, validate_block_structure
from subdeconv.preprocess import apply_whitener, fit_whitener


def random_rotation(dim, seed):
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


class TestRunIca:
    def test_separates_two_uniforms(self):
        src, _ = gen_source(
            [SourceSpec.uniform(1), SourceSpec.uniform(1)], 100_000, RngSeed(10)
        )
        mix = random_rotation(2, 1)
        res = run_ica(SampleMatrix(mix @ src.data), IcaConfig(seed=RngSeed(2)))
        assert res.converged
        g = res.matrix @ mix
        blocks = validate_block_structure([1, 1])
        assert amari_index(GlobalMap(g, blocks, blocks)) < 0.02
        # one dominant entry per row and column
        a = np.abs(g)
        assert np.all(a.max(axis=0) >= 0.99)
        assert np.all(a.max(axis=1) >= 0.99)

    def test_gaussian_does_not_converge(self):
        rng = np.random.default_rng(3)
        x = SampleMatrix(rng.standard_normal((2, 20000)))
        white = apply_whitener(fit_whitener(x), x)
        res = run_ica(
            white, IcaConfig(seed=RngSeed(4), max_iter=100, restarts=1)
        )
        assert not res.converged
        # orthonormality holds regardless of the flag
        w = res.matrix
        assert np.max(np.abs(w.T @ w - np.eye(2))) <= 1e-10

    def test_already_separated_input(self):
        src, _ = gen_source(
            [SourceSpec.uniform(1), SourceSpec.uniform(1)], 100_000, RngSeed(20)
        )
        res = run_ica(src, IcaConfig(seed=RngSeed(21)))
        blocks = validate_block_structure([1, 1])
        assert amari_index(GlobalMap(res.matrix, blocks, blocks)) < 0.01

    def test_not_whitened_raises(self):
        rng = np.random.default_rng(5)
        base = rng.standard_normal((1, 5000))
        x = np.vstack([base, base + 0.1 * rng.standard_normal((1, 5000))])
        with pytest.raises(NotWhitened):
            run_ica(SampleMatrix(x), IcaConfig(seed=RngSeed(6)))

    def test_determinism(self):
        src, _ = gen_source(
            [SourceSpec.uniform(1), SourceSpec.uniform(1)], 20000, RngSeed(30)
        )
        mixed = SampleMatrix(random_rotation(2, 2) @ src.data)
        cfg = IcaConfig(seed=RngSeed(31))
        a = run_ica(mixed, cfg)
        b = run_ica(mixed, cfg)
        assert np.array_equal(a.matrix, b.matrix)
        assert a.converged == b.converged

    @pytest.mark.parametrize("nonlinearity", ["tanh", "cube", "gauss"])
    def test_contrasts_all_separate(self, nonlinearity):
        src, _ = gen_source(
            [SourceSpec.uniform(1), SourceSpec.uniform(1)], 50_000, RngSeed(40)
        )
        mix = random_rotation(2, 7)
        res = run_ica(
            SampleMatrix(mix @ src.data),
            IcaConfig(nonlinearity=nonlinearity, seed=RngSeed(41)),
        )
        blocks = validate_block_structure([1, 1])
        assert amari_index(GlobalMap(res.matrix @ mix, blocks, blocks)) < 0.02


class TestSeparationPrinciple:
    def test_spherical_components_split_into_ica_plus_permutation(self):
        """For spherical components mixed orthogonally, the ICA minimum
        followed by an oracle coordinate permutation solves the grouping."""
        seed = RngSeed(50)
        src, blocks = gen_source(
            [SourceSpec.spherical(3), SourceSpec.spherical(3)], 100_000, seed
        )
        mix = random_rotation(6, 11)
        observed = SampleMatrix(mix @ src.data)
        white = fit_whitener(observed, target_rank=6)
        whitened = apply_whitener(white, observed)
        res = run_ica(whitened, IcaConfig(seed=seed.split(1)))
        g = res.matrix @ white.q @ mix
        # oracle permutation: assign each output row to its dominant block
        groups = blocks.groups()
        owner = np.array(
            [np.argmax([np.abs(g[i, gr]).sum() for gr in groups]) for i in range(6)]
        )
        assert sorted(owner.tolist()) == [0, 0, 0, 1, 1, 1]
        order = np.argsort(owner, kind="stable")
        p = np.zeros((6, 6))
        p[np.arange(6), order] = 1.0
        assert amari_index(GlobalMap(p @ g, blocks, blocks)) < 0.02
