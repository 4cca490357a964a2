"""Core value types shared by every pipeline stage.

Samples are stored coordinate-major: a signal is a ``D x T`` matrix whose
columns are time steps, so per-step vectors are contiguous. All types are
immutable after construction (arrays are copied and marked read-only) and
safe to share across threads.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimMismatch,
    EmptyPartition,
    NonPositiveDimension,
    NotOrthonormal,
    SubdeconvError,
)

ORTHONORMALITY_TOL = 1e-10


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class BlockStructure:
    """Partition of ``{0..D-1}`` into contiguous coordinate groups.

    ``dims`` lists the group sizes in order; derived fields give the number
    of groups ``M``, the total dimension ``D`` and the per-group index sets.
    """

    dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.dims) == 0:
            raise EmptyPartition("block structure needs at least one block")
        if any(int(d) != d or d < 1 for d in self.dims):
            raise NonPositiveDimension(f"block dims must be >= 1, got {self.dims}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def n_blocks(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return sum(self.dims)

    def groups(self) -> list[np.ndarray]:
        """Index arrays of each block, concatenating to ``arange(D)``."""
        edges = np.cumsum((0,) + self.dims)
        return [np.arange(edges[m], edges[m + 1]) for m in range(self.n_blocks)]

    def group(self, m: int) -> np.ndarray:
        return self.groups()[m]

    def slices(self) -> list[slice]:
        edges = np.cumsum((0,) + self.dims)
        return [slice(int(edges[m]), int(edges[m + 1])) for m in range(self.n_blocks)]


def validate_block_structure(dims) -> BlockStructure:
    """Build a :class:`BlockStructure`, rejecting empty or non-positive input."""
    return BlockStructure(tuple(dims))


@dataclass(frozen=True)
class SampleMatrix:
    """``D x T`` batch of samples: D coordinates observed at T time steps."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=float)
        if a.ndim != 2:
            raise DimMismatch(f"sample matrix must be 2-D, got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise DimMismatch(f"sample matrix needs D >= 1 and T >= 1, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise SubdeconvError("sample matrix contains non-finite entries")
        object.__setattr__(self, "data", _frozen(a))

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def count(self) -> int:
        return self.data.shape[1]

    def rows(self, idx) -> "SampleMatrix":
        return SampleMatrix(self.data[np.asarray(idx, dtype=int)])

    def to_csv(self, path_or_file) -> None:
        """Write headerless CSV, one time step per line, 17 significant digits.

        17 digits round-trip IEEE doubles exactly (the format contract asks
        for at least 12).
        """
        text = "\n".join(
            ",".join(format(v, ".17g") for v in col) for col in self.data.T
        )
        if hasattr(path_or_file, "write"):
            path_or_file.write(text + "\n")
        else:
            with open(path_or_file, "w", encoding="ascii") as fh:
                fh.write(text + "\n")

    @staticmethod
    def from_csv(path_or_file) -> "SampleMatrix":
        """Read the CSV form back, enforcing a constant column count."""
        if hasattr(path_or_file, "read"):
            lines = path_or_file.read().splitlines()
        else:
            with open(path_or_file, "r", encoding="ascii") as fh:
                lines = fh.read().splitlines()
        rows = []
        width = None
        for ln, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            parts = line.split(",")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise SubdeconvError(
                    f"line {ln}: expected {width} columns, found {len(parts)}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise SubdeconvError(f"line {ln}: {exc}") from exc
        if not rows:
            raise SubdeconvError("CSV contains no samples")
        return SampleMatrix(np.asarray(rows).T)

    def to_csv_str(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


@dataclass(frozen=True)
class FirFilter:
    """Causal FIR mixing: an ordered list of ``D_out x D_in`` tap matrices."""

    coeffs: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.coeffs) == 0:
            raise SubdeconvError("FIR filter needs at least one tap matrix")
        mats = tuple(_frozen(np.atleast_2d(c)) for c in self.coeffs)
        shape = mats[0].shape
        if any(m.shape != shape for m in mats):
            raise DimMismatch(
                f"all taps must share one shape, got {[m.shape for m in mats]}"
            )
        object.__setattr__(self, "coeffs", mats)

    @property
    def order(self) -> int:
        """Filter order L; the tap list has length L + 1."""
        return len(self.coeffs) - 1

    @property
    def out_dim(self) -> int:
        return self.coeffs[0].shape[0]

    @property
    def in_dim(self) -> int:
        return self.coeffs[0].shape[1]


@dataclass(frozen=True)
class OrthonormalMap:
    """Square orthogonal matrix, validated to ``max|W^T W - I| <= 1e-10``."""

    matrix: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.matrix, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimMismatch(f"orthonormal map must be square, got {w.shape}")
        err = np.max(np.abs(w.T @ w - np.eye(w.shape[0])))
        if not err <= ORTHONORMALITY_TOL:
            raise NotOrthonormal(
                f"orthonormality defect {err:.3e} exceeds {ORTHONORMALITY_TOL:.0e}"
            )
        object.__setattr__(self, "matrix", _frozen(w))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class IsaTask:
    """Whitened instantaneous-mixing problem handed to the solver stages.

    ``provenance_mixing`` carries the ground-truth concatenated mixing (as
    seen by the whitener input) so estimates can be scored; it is optional
    and never consulted by the solvers themselves.
    """

    observation: SampleMatrix
    blocks: BlockStructure
    whitener: "object | None" = None
    provenance_mixing: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.observation.dim != self.blocks.total_dim:
            raise DimMismatch(
                f"observation dim {self.observation.dim} != blocks total "
                f"{self.blocks.total_dim}"
            )
        if self.provenance_mixing is not None:
            a = np.asarray(self.provenance_mixing, dtype=float)
            if a.ndim != 2 or a.shape[1] != self.blocks.total_dim:
                raise DimMismatch(
                    f"provenance mixing must have {self.blocks.total_dim} columns, "
                    f"got shape {a.shape}"
                )
            object.__setattr__(self, "provenance_mixing", _frozen(a))
