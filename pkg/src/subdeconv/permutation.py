"""Grouping ICA coordinates into subspaces by permutation search.

The greedy search sweeps over all cross-block coordinate pairs in
lexicographic order, accepting a swap exactly when it strictly lowers the
configured dependence cost, and stops after the first sweep with no
accepted swap. An exhaustive oracle over all groupings (quotiented by
within-block order and equal-size block relabeling) covers small instances.

Cost evaluation is incremental: the JFD cost needs only the block-diagonal
sums of precomputed transformed covariances, and kernel measures rebuild
Gram factors only for the two blocks a swap touches, with factors and pair
values cached by row content.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .dependency import DependencyMeasure, GramFactor, kcca_multi, kc_multi, kgv_cost
from .errors import DimMismatch, SingleBlock, SubdeconvError, TooLarge
from .model import BlockStructure, SampleMatrix

EXHAUSTIVE_MAX_DIM = 8


@dataclass(frozen=True)
class PermutationResult:
    """Outcome of a permutation search.

    ``P`` is the permutation matrix (estimate = ``P @ y``), ``perm`` the
    equivalent row assignment (position i holds input row ``perm[i]``).
    ``cost_trace`` records the initial cost and the cost after each
    accepted swap, so it is strictly decreasing after the first entry.
    """

    P: np.ndarray
    perm: np.ndarray
    sweeps: int
    cost_trace: tuple
    converged: bool

    def __post_init__(self):
        p = np.asarray(self.P, dtype=float)
        n = p.shape[0]
        if (
            p.shape != (n, n)
            or not np.all(p.sum(axis=0) == 1)
            or not np.all(p.sum(axis=1) == 1)
            or not np.all((p == 0) | (p == 1))
        ):
            raise SubdeconvError("P is not a permutation matrix")
        pc = p.copy()
        pc.flags.writeable = False
        object.__setattr__(self, "P", pc)
        object.__setattr__(self, "perm", np.asarray(self.perm, dtype=int).copy())
        object.__setattr__(self, "cost_trace", tuple(float(c) for c in self.cost_trace))

    @property
    def final_cost(self) -> float:
        return self.cost_trace[-1]


def _perm_to_matrix(perm: np.ndarray) -> np.ndarray:
    n = perm.size
    p = np.zeros((n, n))
    p[np.arange(n), perm] = 1.0
    return p


class _JfdEvaluator:
    """Block-diagonal-sum bookkeeping for the JFD cost.

    Masked cost = (total sum of squared covariance entries) - (sum over
    block-diagonal squares); only the latter depends on the grouping.
    """

    def __init__(self, y: np.ndarray, measure: DependencyMeasure):
        T = y.shape[1]
        self._c2 = []
        self._sums: dict[tuple, float] = {}
        self.total = 0.0
        for f in measure.functions.fns:
            fy = f(y)
            fy = fy - fy.mean(axis=1, keepdims=True)
            cov = (fy @ fy.T) / T
            c2 = cov * cov
            self._c2.append(c2)
            self.total += float(c2.sum())

    def block_sum(self, rows: np.ndarray) -> float:
        key = tuple(sorted(int(r) for r in rows))
        val = self._sums.get(key)
        if val is None:
            ix = np.ix_(rows, rows)
            val = float(sum(c2[ix].sum() for c2 in self._c2))
            self._sums[key] = val
        return val

    def cost(self, block_rows: "list[np.ndarray]") -> float:
        return self.total - sum(self.block_sum(r) for r in block_rows)


class _KernelEvaluator:
    """Content-addressed cache of Gram factors and pair values."""

    def __init__(self, y: np.ndarray, measure: DependencyMeasure):
        self._y = y
        self._measure = measure
        self._factors: dict[tuple, GramFactor] = {}
        self._pairs: dict[tuple, float] = {}

    @staticmethod
    def key(rows) -> tuple:
        return tuple(sorted(int(r) for r in rows))

    def factor(self, key: tuple) -> GramFactor:
        gf = self._factors.get(key)
        if gf is None:
            gf = self._measure.factor(self._y[list(key)])
            self._factors[key] = gf
        return gf

    def pair(self, key_a: tuple, key_b: tuple) -> float:
        pk = (key_a, key_b) if key_a <= key_b else (key_b, key_a)
        val = self._pairs.get(pk)
        if val is None:
            val = self._measure.pair_value(self.factor(pk[0]), self.factor(pk[1]))
            self._pairs[pk] = val
        return val

    def cost(self, block_rows: "list[np.ndarray]") -> float:
        keys = [self.key(r) for r in block_rows]
        agg = self._measure.aggregation
        if agg == "pairwise":
            return float(
                sum(self.pair(a, b) for a, b in combinations(keys, 2))
            )
        if agg == "recursive":
            total = 0.0
            for m in range(len(keys) - 1):
                tail_key = self.key(np.concatenate(block_rows[m + 1 :]))
                total += self._measure.pair_value(
                    self.factor(keys[m]), self.factor(tail_key)
                )
            return float(total)
        grams = [self.factor(k) for k in keys]
        if self._measure.kind == "kcca":
            return kcca_multi(grams, self._measure.kernel) - 1.0
        if self._measure.kind == "kgv":
            return kgv_cost(grams, self._measure.kernel)
        return kc_multi(grams) - 1.0


def _make_evaluator(y: np.ndarray, measure: DependencyMeasure):
    if measure.kind == "jfd":
        return _JfdEvaluator(y, measure)
    return _KernelEvaluator(y, measure)


def greedy_sweeps(
    Y_ica: SampleMatrix,
    blocks: BlockStructure,
    cost: DependencyMeasure,
    max_sweeps: int = 50,
) -> PermutationResult:
    """Greedy cross-block coordinate-swap search.

    Sweeps candidate pairs in lexicographic (block pair, position pair)
    order; a swap is kept iff it strictly decreases the cost. Terminates at
    the first sweep with no accepted swap, or flags ``converged=False``
    after ``max_sweeps``.
    """
    if Y_ica.dim != blocks.total_dim:
        raise DimMismatch(f"Y dim {Y_ica.dim} != blocks total {blocks.total_dim}")
    if blocks.n_blocks < 2:
        raise SingleBlock("permutation search needs at least two blocks")
    if max_sweeps < 1:
        raise SubdeconvError("max_sweeps must be >= 1")

    groups = blocks.groups()
    M = blocks.n_blocks
    evaluator = _make_evaluator(Y_ica.data, cost)

    perm = np.arange(blocks.total_dim)
    block_rows = [perm[g].copy() for g in groups]
    current = evaluator.cost(block_rows)
    trace = [current]

    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        accepted_any = False
        for m1 in range(M):
            for m2 in range(m1 + 1, M):
                for pi in range(groups[m1].size):
                    for qi in range(groups[m2].size):
                        trial = [r.copy() for r in block_rows]
                        trial[m1][pi], trial[m2][qi] = (
                            block_rows[m2][qi],
                            block_rows[m1][pi],
                        )
                        candidate = evaluator.cost(trial)
                        if candidate < current:
                            block_rows = trial
                            current = candidate
                            trace.append(candidate)
                            accepted_any = True
        sweeps += 1
        if not accepted_any:
            converged = True
            break

    for g, rows in zip(groups, block_rows):
        perm[g] = rows
    return PermutationResult(
        P=_perm_to_matrix(perm),
        perm=perm,
        sweeps=sweeps,
        cost_trace=tuple(trace),
        converged=converged,
    )


def grouping_classes(n: int, dims: tuple) -> "list[list[tuple]]":
    """All partitions of ``range(n)`` into groups of the given sizes, one
    representative per symmetry class (within-group order and equal-size
    group relabeling quotiented out).

    Groups are emitted anchored by their smallest element, in anchor order;
    each class assigns its k-th group of size s to the k-th slot of size s.
    """
    if sum(dims) != n:
        raise DimMismatch(f"sizes {dims} do not add up to {n}")

    def recurse(remaining: tuple, sizes: tuple):
        if not remaining:
            yield []
            return
        anchor = remaining[0]
        rest = remaining[1:]
        seen_sizes = set()
        for idx, s in enumerate(sizes):
            if s in seen_sizes:
                continue
            seen_sizes.add(s)
            next_sizes = sizes[:idx] + sizes[idx + 1 :]
            for combo in combinations(rest, s - 1):
                group = (anchor,) + combo
                left = tuple(i for i in rest if i not in combo)
                for tail in recurse(left, next_sizes):
                    yield [group] + tail

    return [cls for cls in recurse(tuple(range(n)), tuple(dims))]


def exhaustive_search(
    Y: SampleMatrix, blocks: BlockStructure, cost: DependencyMeasure
) -> PermutationResult:
    """Global cost minimizer over all coordinate groupings (D <= 8)."""
    if Y.dim != blocks.total_dim:
        raise DimMismatch(f"Y dim {Y.dim} != blocks total {blocks.total_dim}")
    if blocks.n_blocks < 2:
        raise SingleBlock("permutation search needs at least two blocks")
    if Y.dim > EXHAUSTIVE_MAX_DIM:
        raise TooLarge(
            f"exhaustive search limited to D <= {EXHAUSTIVE_MAX_DIM}, got {Y.dim}"
        )

    evaluator = _make_evaluator(Y.data, cost)
    dims = blocks.dims
    best_cost = None
    best_assignment = None
    for cls in grouping_classes(Y.dim, dims):
        # Groups arrive in anchor order; hand the k-th group of size s to
        # the k-th block slot of that size.
        pools: dict[int, list[tuple]] = {}
        for grp in cls:
            pools.setdefault(len(grp), []).append(grp)
        taken = {s: 0 for s in pools}
        block_rows = []
        for d in dims:
            block_rows.append(np.asarray(pools[d][taken[d]], dtype=int))
            taken[d] += 1
        value = evaluator.cost(block_rows)
        if best_cost is None or value < best_cost:
            best_cost = value
            best_assignment = block_rows

    perm = np.empty(Y.dim, dtype=int)
    for g, rows in zip(blocks.groups(), best_assignment):
        perm[g] = rows
    return PermutationResult(
        P=_perm_to_matrix(perm),
        perm=perm,
        sweeps=0,
        cost_trace=(best_cost,),
        converged=True,
    )
