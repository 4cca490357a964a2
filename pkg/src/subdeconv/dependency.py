"""Inter-subspace dependence costs.

Four measures gauge how dependent the coordinate blocks of an estimated
source still are:

* ``jfd`` penalizes off-block entries of empirical covariances of
  coordinate-wise nonlinear transforms, summed over a function set;
* ``kcca`` is the largest regularized kernel canonical correlation;
* ``kgv`` is the log-determinant gap of the regularized kernel covariance
  against its block diagonal (a feature-space decorrelation measure);
* ``kc`` is the largest eigenvalue of the kernel covariance pencil.

Kernel measures operate on centered low-rank Gram factors obtained by
pivoted incomplete Cholesky, so the eigenproblems stay small: a pencil over
``M`` blocks has size ``sum r_m`` instead of ``M T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateKernel,
    DimMismatch,
    NonFiniteDeterminant,
    SingleBlock,
    SubdeconvError,
    TooFewSamples,
)
from .model import BlockStructure, SampleMatrix

MEASURE_KINDS = ("jfd", "kcca", "kgv", "kc")
AGGREGATIONS = ("pairwise", "recursive", "multiway")


def _cos2(u):
    return np.cos(2.0 * u)


@dataclass(frozen=True)
class FunctionSet:
    """Ordered coordinate-wise maps used by the JFD cost."""

    fns: tuple = (np.cos, _cos2)

    def __post_init__(self):
        if len(self.fns) == 0:
            raise SubdeconvError("function set must not be empty")
        object.__setattr__(self, "fns", tuple(self.fns))


def default_function_set() -> FunctionSet:
    """The default set {u -> cos(u), u -> cos(2u)}."""
    return FunctionSet()


def block_mask(blocks: BlockStructure) -> np.ndarray:
    """0/1 matrix with zeros on the block diagonal, ones elsewhere.

    Symmetric and idempotent under Hadamard product; valid for unequal
    block dimensions.
    """
    d = blocks.total_dim
    mask = np.ones((d, d))
    for sl in blocks.slices():
        mask[sl, sl] = 0.0
    return mask


def jfd_cost(Y: SampleMatrix, blocks: BlockStructure, fs: FunctionSet | None = None) -> float:
    """Joint f-decorrelation cost: squared Frobenius norm of the masked
    empirical covariance of each transformed output, summed over the set.

    Covariances use mean subtraction and 1/T normalization. Zero exactly
    when every transformed covariance is block diagonal.
    """
    if fs is None:
        fs = default_function_set()
    if Y.dim != blocks.total_dim:
        raise DimMismatch(f"Y dim {Y.dim} != blocks total {blocks.total_dim}")
    mask = block_mask(blocks)
    return _jfd_cost_raw(Y.data, mask, fs)


def _jfd_cost_raw(y: np.ndarray, mask: np.ndarray, fs: FunctionSet) -> float:
    T = y.shape[1]
    total = 0.0
    for f in fs.fns:
        fy = f(y)
        fy = fy - fy.mean(axis=1, keepdims=True)
        cov = (fy @ fy.T) / T
        total += float(np.sum((mask * cov) ** 2))
    return total


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian kernel width, regularization and low-rank controls.

    ``kappa2(T) = kappa * T / 2`` is the per-dataset regularizer added to
    each centered Gram before squaring.
    """

    sigma: float = 5.0
    kappa: float = 1e-4
    lowrank_tol: float = 1e-6
    lowrank_cap: int = 60

    def __post_init__(self):
        if self.sigma <= 0 or self.kappa <= 0:
            raise SubdeconvError("sigma and kappa must be positive")
        if self.lowrank_tol < 0 or self.lowrank_cap < 1:
            raise SubdeconvError("lowrank_tol must be >= 0 and lowrank_cap >= 1")

    def kappa2(self, T: int) -> float:
        return self.kappa * T / 2.0


@dataclass(frozen=True)
class GramFactor:
    """Centered low-rank factor: ``g g^T`` approximates the doubly centered
    Gram matrix of one block's samples.

    ``pivot_rank`` is the rank reached before centering; ``residual`` the
    trace left unexplained by the pivoted factorization.
    """

    g: np.ndarray
    pivot_rank: int
    residual: float

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        if g.ndim != 2:
            raise DimMismatch(f"factor must be 2-D, got shape {g.shape}")
        gc = g.copy()
        gc.flags.writeable = False
        object.__setattr__(self, "g", gc)

    @property
    def count(self) -> int:
        return self.g.shape[0]

    @property
    def rank(self) -> int:
        return self.g.shape[1]


def _gaussian_column(x: np.ndarray, j: int, sqnorm: np.ndarray, sigma: float) -> np.ndarray:
    dist2 = np.maximum(sqnorm + sqnorm[j] - 2.0 * (x[:, j] @ x), 0.0)
    return np.exp(-0.5 * dist2 / (sigma * sigma))


def gram_factor(component: SampleMatrix, cfg: KernelConfig) -> GramFactor:
    """Pivoted incomplete Cholesky of the Gaussian Gram matrix, centered.

    Pivoting continues until the residual trace falls below a safety margin
    under ``lowrank_tol * trace(K)`` (so the centered residual also meets
    the tolerance) or the rank cap is reached. Columns are then centered and
    exactly-null ones dropped; T identical samples therefore give pivot
    rank 1 but a rank-0 centered factor.
    """
    if component.count < 2:
        raise TooFewSamples(f"need T >= 2 samples, got {component.count}")
    x = component.data
    T = component.count
    sqnorm = np.einsum("ij,ij->j", x, x)
    max_rank = min(T, cfg.lowrank_cap)
    trace = float(T)  # Gaussian kernel has k(u, u) = 1
    # 1e-2 margin keeps the residual below tol * trace of the centered Gram
    # even when centering removes most of the trace.
    threshold = max(cfg.lowrank_tol * trace * 1e-2, trace * 1e-15)

    diag = np.ones(T)
    g = np.zeros((T, max_rank))
    r = 0
    residual = trace
    while r < max_rank and residual > threshold:
        j = int(np.argmax(diag))
        piv = diag[j]
        if piv <= trace * 1e-15:
            break
        col = _gaussian_column(x, j, sqnorm, cfg.sigma)
        new = (col - g[:, :r] @ g[j, :r]) / np.sqrt(piv)
        g[:, r] = new
        diag = np.maximum(diag - new * new, 0.0)
        diag[j] = 0.0
        residual = float(diag.sum())
        r += 1

    g = g[:, :r]
    centered = g - g.mean(axis=0, keepdims=True)
    norms = np.einsum("ij,ij->j", centered, centered)
    keep = norms > max(norms.max(initial=0.0), 1.0) * 1e-24
    return GramFactor(g=centered[:, keep], pivot_rank=r, residual=residual)


def _orthofactor(gf: GramFactor) -> tuple[np.ndarray, np.ndarray]:
    """Thin SVD of the centered factor: returns (U, lam) with the centered
    Gram equal to U diag(lam) U^T up to the factorization residual."""
    if gf.rank == 0:
        return np.zeros((gf.count, 0)), np.zeros(0)
    u, s, _ = np.linalg.svd(gf.g, full_matrices=False)
    lam = s * s
    keep = lam > lam[0] * 1e-24 if lam.size else np.zeros(0, dtype=bool)
    return u[:, keep], lam[keep]


def _check_same_count(grams: "list[GramFactor]") -> int:
    counts = {gf.count for gf in grams}
    if len(counts) != 1:
        raise DimMismatch(f"factors disagree on sample count: {sorted(counts)}")
    return counts.pop()


def _kcca_reduced(grams: "list[GramFactor]", cfg: KernelConfig) -> np.ndarray:
    """Correlation-like matrix whose eigenvalues are the nontrivial
    generalized eigenvalues of the regularized canonical-correlation pencil."""
    T = _check_same_count(grams)
    kappa2 = cfg.kappa2(T)
    bases = [_orthofactor(gf) for gf in grams]
    weights = [lam / (lam + kappa2) for _, lam in bases]
    sizes = [u.shape[1] for u, _ in bases]
    total = sum(sizes)
    R = np.eye(total)
    offs = np.cumsum([0] + sizes)
    for i in range(len(grams)):
        ui, wi = bases[i][0], weights[i]
        for j in range(i + 1, len(grams)):
            uj, wj = bases[j][0], weights[j]
            blockij = (wi[:, None] * (ui.T @ uj)) * wj[None, :]
            R[offs[i] : offs[i + 1], offs[j] : offs[j + 1]] = blockij
            R[offs[j] : offs[j + 1], offs[i] : offs[i + 1]] = blockij.T
    return R


def kcca_pair(gu: GramFactor, gv: GramFactor, cfg: KernelConfig) -> float:
    """Largest regularized kernel canonical correlation, in ``[0, 1)``.

    The two-block pencil's top generalized eigenvalue is ``1 + gamma``;
    this returns ``gamma``, solved in the joint factor basis.
    """
    R = _kcca_reduced([gu, gv], cfg)
    if R.shape[0] == 0:
        return 0.0
    return float(np.linalg.eigvalsh(R)[-1] - 1.0)


def kcca_multi(grams: "list[GramFactor]", cfg: KernelConfig) -> float:
    """Largest generalized eigenvalue of the M-block correlation pencil.

    Always >= 1; the dependence measure is this value minus one.
    """
    if len(grams) < 2:
        raise SingleBlock("need at least two blocks")
    R = _kcca_reduced(grams, cfg)
    if R.shape[0] == 0:
        return 1.0
    return float(np.linalg.eigvalsh(R)[-1])


def kgv_cost(grams: "list[GramFactor]", cfg: KernelConfig) -> float:
    """Kernel generalized variance: ``-1/2 sum log lambda_i`` over the
    generalized eigenvalues of the regularized pencil against its block
    diagonal. Zero iff the assembled matrix is block diagonal."""
    if len(grams) < 2:
        raise SingleBlock("need at least two blocks")
    R = _kcca_reduced(grams, cfg)
    if R.shape[0] == 0:
        return 0.0
    vals = np.linalg.eigvalsh(R)
    if vals[0] <= 0.0:
        raise NonFiniteDeterminant(
            f"pencil eigenvalue {vals[0]:.3e} is not positive"
        )
    return float(-0.5 * np.sum(np.log(vals)))


def kc_multi(grams: "list[GramFactor]") -> float:
    """Largest eigenvalue of the kernel covariance pencil.

    Solved in the factor basis, where the singular right-hand side becomes
    the identity on the span of the centered Grams. Value is >= 1, with
    equality when the off-diagonal cross-Gram products vanish.
    """
    if len(grams) < 2:
        raise SingleBlock("need at least two blocks")
    _check_same_count(grams)
    bases = [_orthofactor(gf) for gf in grams]
    sizes = [u.shape[1] for u, _ in bases]
    total = sum(sizes)
    if total == 0:
        raise DegenerateKernel("all centered Grams are zero")
    R = np.eye(total)
    offs = np.cumsum([0] + sizes)
    for i in range(len(grams)):
        ui, li = bases[i]
        si = np.sqrt(li)
        for j in range(i + 1, len(grams)):
            uj, lj = bases[j]
            sj = np.sqrt(lj)
            blockij = (si[:, None] * (ui.T @ uj)) * sj[None, :]
            R[offs[i] : offs[i + 1], offs[j] : offs[j + 1]] = blockij
            R[offs[j] : offs[j + 1], offs[i] : offs[i + 1]] = blockij.T
    return float(np.linalg.eigvalsh(R)[-1])


def generalized_variance_gap(sigma: np.ndarray, blocks: BlockStructure) -> float:
    """Log-determinant gap ``-1/2 log(det S / prod_m det S^mm)`` of a PSD
    matrix against its block diagonal; non-negative, zero iff block diagonal."""
    s = np.asarray(sigma, dtype=float)
    if s.shape != (blocks.total_dim, blocks.total_dim):
        raise DimMismatch(
            f"matrix shape {s.shape} != blocks total {blocks.total_dim}"
        )
    block_logdet = 0.0
    for sl in blocks.slices():
        sign, ld = np.linalg.slogdet(s[sl, sl])
        if sign <= 0:
            raise NonFiniteDeterminant("a diagonal block is singular")
        block_logdet += ld
    sign, full_logdet = np.linalg.slogdet(s)
    if sign < 0:
        raise NonFiniteDeterminant("matrix determinant is negative")
    if sign == 0:
        return float("inf")
    return float(-0.5 * (full_logdet - block_logdet))


@dataclass(frozen=True)
class DependencyMeasure:
    """A configured inter-subspace dependence cost.

    ``kind`` selects the measure; kernel measures honor ``aggregation``
    (``pairwise`` sums pair values, ``recursive`` chains each block against
    the concatenation of later ones, ``multiway`` solves one M-block
    pencil). The JFD cost is a sum of masked pair terms already, so all
    aggregations coincide for it.
    """

    kind: str = "jfd"
    functions: FunctionSet = field(default_factory=default_function_set)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    aggregation: str = "pairwise"

    def __post_init__(self):
        if self.kind not in MEASURE_KINDS:
            raise SubdeconvError(f"unknown measure kind {self.kind!r}")
        if self.aggregation not in AGGREGATIONS:
            raise SubdeconvError(f"unknown aggregation {self.aggregation!r}")

    def pair_value(self, gu: GramFactor, gv: GramFactor) -> float:
        """Dependence of two blocks from their Gram factors (kernel kinds)."""
        if self.kind == "kcca":
            return kcca_pair(gu, gv, self.kernel)
        if self.kind == "kgv":
            return kgv_cost([gu, gv], self.kernel)
        if self.kind == "kc":
            return kc_multi([gu, gv]) - 1.0
        raise SubdeconvError(f"{self.kind} has no kernel pair value")

    def factor(self, block_data: np.ndarray) -> GramFactor:
        return gram_factor(SampleMatrix(block_data), self.kernel)

    def cost(self, Y: SampleMatrix, blocks: BlockStructure) -> float:
        return aggregate_pairwise(self, Y, blocks)


def aggregate_pairwise(
    measure: DependencyMeasure, Y: SampleMatrix, blocks: BlockStructure
) -> float:
    """Total dependence of the blocks of ``Y`` under the configured measure
    and aggregation scheme."""
    if blocks.n_blocks < 2:
        raise SingleBlock("aggregation needs at least two blocks")
    if Y.dim != blocks.total_dim:
        raise DimMismatch(f"Y dim {Y.dim} != blocks total {blocks.total_dim}")
    if measure.kind == "jfd":
        return jfd_cost(Y, blocks, measure.functions)

    slices = blocks.slices()
    y = Y.data
    if measure.aggregation == "pairwise":
        grams = [measure.factor(y[sl]) for sl in slices]
        return float(
            sum(
                measure.pair_value(grams[i], grams[j])
                for i in range(len(grams))
                for j in range(i + 1, len(grams))
            )
        )
    if measure.aggregation == "recursive":
        total = 0.0
        for m in range(len(slices) - 1):
            head = measure.factor(y[slices[m]])
            rest_rows = np.concatenate(
                [np.arange(sl.start, sl.stop) for sl in slices[m + 1 :]]
            )
            tail = measure.factor(y[rest_rows])
            total += measure.pair_value(head, tail)
        return float(total)
    # multiway
    grams = [measure.factor(y[sl]) for sl in slices]
    if measure.kind == "kcca":
        return kcca_multi(grams, measure.kernel) - 1.0
    if measure.kind == "kgv":
        return kgv_cost(grams, measure.kernel)
    return kc_multi(grams) - 1.0
