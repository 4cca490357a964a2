"""Reduction machinery: lag stacking and PCA whitening.

A convolutive mixture with more observation channels than source
coordinates becomes an instantaneous mixing problem once lagged copies of
each observation coordinate are stacked into one tall vector. The stacked
model is ``X(t) = A S(t)`` where ``A`` is block-Toeplitz in the filter taps
and ``S`` stacks lagged copies of each hidden component. PCA whitening then
reduces the stacked observation to a square, white problem.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimMismatch,
    NotUndercomplete,
    RankDeficient,
    ShapeMismatch,
    TooFewSamples,
)
from .model import BlockStructure, FirFilter, SampleMatrix

AUTO_EIGENVALUE_FLOOR = 1e-12


@dataclass(frozen=True)
class ConcatPlan:
    """Bookkeeping for the lag-stacking reduction.

    ``depth`` is the smallest number of stacked observation lags for which
    the stacked problem has at least as many rows as unknowns:
    ``obs_dim * depth >= source_dim * (order + depth)``.
    """

    order: int
    depth: int
    obs_dim: int
    source_dim: int
    source_blocks: BlockStructure

    @property
    def isa_dim(self) -> int:
        return self.source_dim * (self.order + self.depth)

    @property
    def stacked_obs_dim(self) -> int:
        return self.obs_dim * self.depth

    @property
    def copies(self) -> int:
        """How many lagged copies of each component appear: order + depth."""
        return self.order + self.depth

    def isa_blocks(self) -> BlockStructure:
        """Block structure of the stacked source: each original block
        repeated ``copies`` times, grouped per component."""
        dims = []
        for d in self.source_blocks.dims:
            dims.extend([d] * self.copies)
        return BlockStructure(tuple(dims))


def plan_concat(
    obs_dim: int, source_dim: int, order: int, blocks: BlockStructure
) -> ConcatPlan:
    """Choose the minimal stacking depth for an undercomplete problem."""
    if blocks.total_dim != source_dim:
        raise DimMismatch(
            f"blocks total {blocks.total_dim} != source dim {source_dim}"
        )
    if obs_dim <= source_dim:
        raise NotUndercomplete(
            f"need obs_dim > source_dim, got {obs_dim} <= {source_dim}"
        )
    if order < 0:
        raise ShapeMismatch(f"filter order must be >= 0, got {order}")
    depth = max(1, math.ceil(source_dim * order / (obs_dim - source_dim)))
    return ConcatPlan(
        order=order,
        depth=depth,
        obs_dim=obs_dim,
        source_dim=source_dim,
        source_blocks=blocks,
    )


def temporal_concat(observation: SampleMatrix, plan: ConcatPlan) -> SampleMatrix:
    """Stack lagged windows of each observation coordinate.

    Coordinate m of the input contributes rows ``[x_m(t); x_m(t-1); ...;
    x_m(t-depth+1)]`` (newest first), coordinates in order. Output has
    ``obs_dim * depth`` rows and ``T - depth + 1`` columns.
    """
    if observation.dim != plan.obs_dim:
        raise DimMismatch(
            f"observation dim {observation.dim} != plan obs dim {plan.obs_dim}"
        )
    Lp = plan.depth
    T = observation.count
    if T < Lp:
        raise TooFewSamples(f"need T >= depth = {Lp}, got T = {T}")
    x = observation.data
    n_out = T - Lp + 1
    out = np.empty((plan.obs_dim * Lp, n_out))
    for m in range(plan.obs_dim):
        for r in range(Lp):
            out[m * Lp + r] = x[m, Lp - 1 - r : Lp - 1 - r + n_out]
    return SampleMatrix(out)


def concat_source(source: SampleMatrix, plan: ConcatPlan) -> SampleMatrix:
    """Lag-stack the true source to align with ``temporal_concat`` output.

    Component m contributes ``copies`` lagged copies, newest first; columns
    align one-to-one with the stacked observation built from the filtered
    source. Used for provenance and oracle checks only.
    """
    if source.dim != plan.source_dim:
        raise DimMismatch(f"source dim {source.dim} != plan {plan.source_dim}")
    K = plan.copies
    T = source.count
    if T < plan.order + plan.depth:
        raise TooFewSamples(f"need T >= order + depth = {K}, got T = {T}")
    n_out = T - K + 1
    s = source.data
    rows = []
    for sl in plan.source_blocks.slices():
        for k in range(K):
            rows.append(s[sl, K - 1 - k : K - 1 - k + n_out])
    return SampleMatrix(np.vstack(rows))


def build_concat_mixing(filt: FirFilter, plan: ConcatPlan) -> np.ndarray:
    """Assemble the block-Toeplitz mixing of the stacked model.

    Returns ``A`` with ``obs_dim * depth`` rows and ``isa_dim`` columns such
    that stacking the filtered source reproduces ``X(t) = A S(t)`` exactly.
    Used for evaluation provenance.
    """
    if filt.out_dim != plan.obs_dim or filt.in_dim != plan.source_dim:
        raise ShapeMismatch(
            f"filter {filt.out_dim}x{filt.in_dim} does not match plan "
            f"{plan.obs_dim}x{plan.source_dim}"
        )
    if filt.order != plan.order:
        raise ShapeMismatch(f"filter order {filt.order} != plan order {plan.order}")
    Lp, K = plan.depth, plan.copies
    A = np.zeros((plan.obs_dim * Lp, plan.isa_dim))
    col_base = 0
    for d, sl in zip(plan.source_blocks.dims, plan.source_blocks.slices()):
        for i in range(plan.obs_dim):
            for r in range(Lp):
                for l, h in enumerate(filt.coeffs):
                    c0 = col_base + (r + l) * d
                    A[i * Lp + r, c0 : c0 + d] = h[i, sl]
        col_base += d * K
    return A


@dataclass(frozen=True)
class Whitener:
    """Affine map ``x -> Q (x - mean)`` built from a covariance
    eigendecomposition; output covariance is the identity on fitting data."""

    mean: np.ndarray
    q: np.ndarray
    kept_rank: int
    eigenvalue_floor: float

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float).ravel()
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 2 or q.shape != (self.kept_rank, m.size):
            raise DimMismatch(
                f"whitening matrix shape {q.shape} inconsistent with rank "
                f"{self.kept_rank} and mean size {m.size}"
            )
        m.flags.writeable = False
        qc = q.copy()
        qc.flags.writeable = False
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "q", qc)

    @property
    def in_dim(self) -> int:
        return self.mean.size

    def to_json(self) -> str:
        return json.dumps(
            {
                "mean": self.mean.tolist(),
                "q": self.q.tolist(),
                "kept_rank": self.kept_rank,
                "eigenvalue_floor": self.eigenvalue_floor,
            }
        )

    @staticmethod
    def from_json(text: str) -> "Whitener":
        rec = json.loads(text)
        return Whitener(
            mean=np.asarray(rec["mean"], dtype=float),
            q=np.asarray(rec["q"], dtype=float),
            kept_rank=int(rec["kept_rank"]),
            eigenvalue_floor=float(rec["eigenvalue_floor"]),
        )


def whitener_from_covariance(
    mean: np.ndarray,
    cov: np.ndarray,
    target_rank: int | None = None,
    eigenvalue_floor: float = AUTO_EIGENVALUE_FLOOR,
) -> Whitener:
    """Whitener from an explicit covariance (symmetric eigendecomposition).

    Keeps the ``target_rank`` largest eigenpairs, or with ``target_rank``
    None all eigenvalues above ``floor * lambda_max``; raises
    :class:`RankDeficient` when the request exceeds the numerical rank.
    """
    cov = np.asarray(cov, dtype=float)
    vals, vecs = np.linalg.eigh(cov)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    cutoff = eigenvalue_floor * max(vals[0], 0.0)
    numerical_rank = int(np.sum(vals > cutoff))
    if target_rank is None:
        rank = numerical_rank
        if rank == 0:
            raise RankDeficient("covariance is numerically zero")
    else:
        rank = int(target_rank)
        if rank < 1 or rank > numerical_rank:
            raise RankDeficient(
                f"requested rank {rank} exceeds numerical rank {numerical_rank}"
            )
    q = vecs[:, :rank].T / np.sqrt(vals[:rank])[:, None]
    return Whitener(
        mean=np.asarray(mean, dtype=float),
        q=q,
        kept_rank=rank,
        eigenvalue_floor=eigenvalue_floor,
    )


def fit_whitener(
    samples: SampleMatrix, target_rank: int | None = None
) -> Whitener:
    """Fit a whitener on the empirical covariance (1/T normalization)."""
    if samples.count <= samples.dim:
        raise TooFewSamples(
            f"need more samples than dimensions, got T = {samples.count}, "
            f"D = {samples.dim}"
        )
    x = samples.data
    mean = x.mean(axis=1)
    xc = x - mean[:, None]
    cov = (xc @ xc.T) / samples.count
    return whitener_from_covariance(mean, cov, target_rank=target_rank)


def apply_whitener(w: Whitener, samples: SampleMatrix) -> SampleMatrix:
    if samples.dim != w.in_dim:
        raise DimMismatch(f"samples dim {samples.dim} != whitener dim {w.in_dim}")
    return SampleMatrix(w.q @ (samples.data - w.mean[:, None]))
