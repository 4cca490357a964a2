"""Quality metrics and diagnostics.

The Amari index scores how close the product of estimated demixing and
true mixing is to a block-permutation matrix; it is the pipeline's
scoreboard. Entropy estimation (k-NN based) supports the empirical
projection-inequality checks that justify splitting subspace separation
into ICA plus permutation search.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma

from .datagen import RngSeed
from .errors import (
    DegenerateSamples,
    DimMismatch,
    SingleBlock,
    SubdeconvError,
    TooFewSamples,
)
from .model import BlockStructure, SampleMatrix


@dataclass(frozen=True)
class GlobalMap:
    """Product ``G = W A`` of estimated demixing and true mixing, with the
    block partitions of both axes."""

    matrix: np.ndarray
    blocks_row: BlockStructure
    blocks_col: BlockStructure

    def __post_init__(self):
        g = np.asarray(self.matrix, dtype=float)
        if g.shape != (self.blocks_row.total_dim, self.blocks_col.total_dim):
            raise DimMismatch(
                f"matrix shape {g.shape} does not match partitions "
                f"({self.blocks_row.total_dim}, {self.blocks_col.total_dim})"
            )
        if not np.all(np.isfinite(g)):
            raise SubdeconvError("global map contains non-finite entries")
        gc = g.copy()
        gc.flags.writeable = False
        object.__setattr__(self, "matrix", gc)

    def block_mass(self) -> np.ndarray:
        """M x M matrix of per-block absolute-entry sums."""
        if self.blocks_row.n_blocks != self.blocks_col.n_blocks:
            raise DimMismatch("row and column partitions must have equal counts")
        rows = self.blocks_row.slices()
        cols = self.blocks_col.slices()
        a = np.abs(self.matrix)
        return np.array([[a[r, c].sum() for c in cols] for r in rows])


def amari_index(g: GlobalMap) -> float:
    """Normalized Amari error on block masses, in ``[0, 1]``.

    Zero exactly on block-permutation matrices; one when every block has
    equal mass. Supports unequal block dimensions since only block sums
    enter. Rows or columns of all-zero mass contribute zero.
    """
    mass = g.block_mass()
    M = mass.shape[0]
    if M < 2:
        raise SingleBlock("Amari index needs at least two blocks")

    def _axis_term(m: np.ndarray) -> float:
        mx = m.max(axis=1)
        s = m.sum(axis=1)
        out = np.zeros(m.shape[0])
        nz = mx > 0
        out[nz] = s[nz] / mx[nz] - 1.0
        return float(out.sum())

    return (_axis_term(mass) + _axis_term(mass.T)) / (2.0 * M * (M - 1))


def is_block_permutation(
    g: GlobalMap, tol: float = 0.1
) -> tuple[bool, "np.ndarray | None"]:
    """Detect block-permutation structure up to a relative tolerance.

    True iff in every block row and block column exactly one block carries
    mass above ``tol * max(mass)`` and the induced block assignment is a
    bijection; returns (flag, assignment) with ``assignment[i]`` the column
    block matched to row block i.
    """
    mass = g.block_mass()
    threshold = tol * mass.max()
    active = mass > threshold
    if not (np.all(active.sum(axis=1) == 1) and np.all(active.sum(axis=0) == 1)):
        return False, None
    assignment = np.argmax(active, axis=1)
    return True, assignment


def hinton_export(g: GlobalMap, path_or_file) -> None:
    """Write the magnitude grid of ``|G|`` normalized to [0, 1] as CSV.

    First line is a header of column indices; values carry 6 decimals.
    """
    a = np.abs(g.matrix)
    peak = a.max()
    if peak > 0:
        a = a / peak
    lines = [",".join(str(j) for j in range(a.shape[1]))]
    for row in a:
        lines.append(",".join(format(v, ".6f") for v in row))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", encoding="ascii") as fh:
            fh.write(text)


def read_hinton(path_or_file) -> np.ndarray:
    """Read a grid written by :func:`hinton_export`."""
    if hasattr(path_or_file, "read"):
        lines = path_or_file.read().splitlines()
    else:
        with open(path_or_file, "r", encoding="ascii") as fh:
            lines = fh.read().splitlines()
    return np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])


def _knn_distances_sorted(x: np.ndarray, k: int) -> np.ndarray:
    """k-th nearest-neighbor distance per sample of a 1-D sorted array."""
    T = x.size
    cands = np.full((T, 2 * k), np.inf)
    for o in range(1, k + 1):
        cands[o:, o - 1] = x[o:] - x[:-o]
        cands[:-o, k + o - 1] = x[o:] - x[:-o]
    return np.partition(cands, k - 1, axis=1)[:, k - 1]


def entropy_1d(samples, k: int = 3) -> float:
    """Kozachenko-Leonenko k-NN differential entropy estimate (nats).

    Exactly location invariant and equivariant under scaling: estimates of
    ``w * u`` differ from those of ``u`` by ``log |w|``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 100:
        raise TooFewSamples(f"need at least 100 samples, got {x.size}")
    if k < 1 or k >= x.size:
        raise SubdeconvError(f"k must be in [1, T), got {k}")
    spread = x.max() - x.min()
    if spread == 0:
        raise DegenerateSamples("samples have zero spread")
    xs = np.sort(x)
    eps = _knn_distances_sorted(xs, k)
    # Exact ties produce zero distances; floor them at a negligible scale.
    eps = np.maximum(eps, spread * 1e-15)
    T = x.size
    return float(
        digamma(T) - digamma(k) + np.log(2.0) + np.mean(np.log(eps))
    )


def _entropy_blocks(x: np.ndarray, k: int, n_blocks: int) -> np.ndarray:
    """Entropy estimates on contiguous disjoint sample blocks."""
    T = x.size
    size = T // n_blocks
    return np.array(
        [entropy_1d(x[b * size : (b + 1) * size], k) for b in range(n_blocks)]
    )


def w_epi_check(
    component: SampleMatrix,
    directions: int = 100,
    seed: RngSeed = RngSeed(0),
    k: int = 3,
    n_subsamples: int = 16,
) -> float:
    """Fraction of random unit directions along which the projection
    entropy dominates the weighted sum of coordinate entropies.

    For each direction ``w`` on the unit sphere, tests
    ``H(sum_i w_i u_i) >= sum_i w_i^2 H(u_i) - eps`` with ``eps`` set to
    three standard errors of the estimated gap (standard error from
    disjoint-subsample replication).
    """
    d, T = component.dim, component.count
    if d < 2:
        raise DimMismatch(f"need a component of dimension >= 2, got {d}")
    if T < 10_000:
        raise TooFewSamples(f"need at least 10000 samples, got {T}")
    u = component.data
    coord_full = np.array([entropy_1d(u[i], k) for i in range(d)])
    coord_blocks = np.vstack(
        [_entropy_blocks(u[i], k, n_subsamples) for i in range(d)]
    )

    rng = seed.generator()
    passed = 0
    for _ in range(directions):
        w = rng.standard_normal(d)
        w /= np.linalg.norm(w)
        proj = w @ u
        gap_full = entropy_1d(proj, k) - float(w**2 @ coord_full)
        gap_blocks = _entropy_blocks(proj, k, n_subsamples) - (w**2) @ coord_blocks
        se = float(np.std(gap_blocks, ddof=1) / np.sqrt(n_subsamples))
        if gap_full >= -3.0 * se:
            passed += 1
    return passed / directions
