"""Synthetic hidden sources and random mixing filters.

Every generator is a pure function of ``(spec, T, seed)``: a fixed seed
reproduces bit-identical output on any platform. Streams are split with
``numpy.random.SeedSequence`` spawn keys, so concurrent generation of
distinct components never shares state.

All component kinds are standardized to zero mean and unit per-coordinate
variance after generation; the scale ambiguity of subspace separation makes
the raw scale irrelevant and standardization stabilizes the ICA stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimMismatch,
    EmptyImage,
    EmptyPartition,
    NonPositiveDimension,
    SubdeconvError,
    TooFewSamples,
    UnknownShape,
)
from .model import BlockStructure, FirFilter, SampleMatrix

GEOM3D_SHAPES = ("cube", "sphere", "segments", "spiral", "tetrahedron", "cylinder")

# Classic 5x7 dot-matrix glyphs for A-Z; one int per row, 5 bits wide.
_FONT_5X7 = {
    "A": (0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11),
    "B": (0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E),
    "C": (0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E),
    "D": (0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C),
    "E": (0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F),
    "F": (0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10),
    "G": (0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F),
    "H": (0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11),
    "I": (0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E),
    "J": (0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C),
    "K": (0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11),
    "L": (0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F),
    "M": (0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11),
    "N": (0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11),
    "O": (0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E),
    "P": (0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10),
    "Q": (0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D),
    "R": (0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11),
    "S": (0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E),
    "T": (0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04),
    "U": (0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E),
    "V": (0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04),
    "W": (0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A),
    "X": (0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11),
    "Y": (0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04),
    "Z": (0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F),
}


@dataclass(frozen=True)
class RngSeed:
    """Seed for the documented deterministic generator (PCG64).

    ``split(i)`` derives the i-th independent child stream via SeedSequence
    spawn keys, so per-component and per-run streams never overlap.
    """

    seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise SubdeconvError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "path", tuple(int(p) for p in self.path))

    def split(self, index: int) -> "RngSeed":
        return RngSeed(self.seed, self.path + (int(index),))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class SourceSpec:
    """One hidden component family plus its parameters.

    Use the classmethod constructors; ``kind`` is one of ``geom3d``,
    ``image_density``, ``all_k_independent``, ``spherical``, ``uniform``,
    ``stereo_ar``.
    """

    kind: str
    shape: str | None = None
    grid: np.ndarray | None = None
    k: int | None = None
    size: int | None = None
    ar_coeffs: np.ndarray | None = field(default=None)

    @classmethod
    def geom3d(cls, shape: str) -> "SourceSpec":
        if shape not in GEOM3D_SHAPES:
            raise UnknownShape(f"unknown 3-D shape {shape!r}; catalog: {GEOM3D_SHAPES}")
        return cls(kind="geom3d", shape=shape)

    @classmethod
    def image_density(cls, grid) -> "SourceSpec":
        g = np.asarray(grid, dtype=float)
        if g.ndim != 2:
            raise DimMismatch(f"density grid must be 2-D, got shape {g.shape}")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise SubdeconvError("density grid must be finite and non-negative")
        if not np.any(g > 0):
            raise EmptyImage("density grid has no positive mass")
        g = g.copy()
        g.flags.writeable = False
        return cls(kind="image_density", grid=g)

    @classmethod
    def letter(cls, char: str) -> "SourceSpec":
        return cls.image_density(letter_grid(char))

    @classmethod
    def all_k_independent(cls, k: int) -> "SourceSpec":
        if k < 2:
            raise SubdeconvError(f"all-k-independent needs k >= 2, got {k}")
        return cls(kind="all_k_independent", k=int(k))

    @classmethod
    def spherical(cls, dim: int) -> "SourceSpec":
        if dim < 1:
            raise NonPositiveDimension(f"component dimension must be >= 1, got {dim}")
        return cls(kind="spherical", size=int(dim))

    @classmethod
    def uniform(cls, dim: int) -> "SourceSpec":
        if dim < 1:
            raise NonPositiveDimension(f"component dimension must be >= 1, got {dim}")
        return cls(kind="uniform", size=int(dim))

    @classmethod
    def stereo_ar(cls, coeffs) -> "SourceSpec":
        f = np.asarray(coeffs, dtype=float)
        if f.shape != (2, 2):
            raise DimMismatch(f"stereo AR coefficients must be 2x2, got {f.shape}")
        if np.max(np.abs(np.linalg.eigvals(f))) >= 1.0:
            raise SubdeconvError("stereo AR coefficient matrix must be stable")
        f = f.copy()
        f.flags.writeable = False
        return cls(kind="stereo_ar", ar_coeffs=f)

    @property
    def dim(self) -> int:
        if self.kind == "geom3d":
            return 3
        if self.kind == "image_density":
            return 2
        if self.kind == "all_k_independent":
            return self.k + 1
        if self.kind in ("spherical", "uniform"):
            return self.size
        if self.kind == "stereo_ar":
            return 2
        raise SubdeconvError(f"unknown source kind {self.kind!r}")


def letter_grid(char: str, size: int = 64) -> np.ndarray:
    """Binary ``size x size`` bitmap of an uppercase letter.

    Rendered by nearest-neighbor upscaling of a built-in 5x7 dot-matrix
    font, so no font files are needed.
    """
    char = char.upper()
    if char not in _FONT_5X7:
        raise UnknownShape(f"no glyph for {char!r}; letters A-Z are available")
    rows = _FONT_5X7[char]
    small = np.array(
        [[(r >> (4 - c)) & 1 for c in range(5)] for r in rows], dtype=float
    )
    ri = (np.arange(size) * 7) // size
    ci = (np.arange(size) * 5) // size
    return small[np.ix_(ri, ci)]


def load_pgm(path) -> np.ndarray:
    """Read a plain-text (P2) grayscale PGM into a float grid."""
    with open(path, "r", encoding="ascii") as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0]
            tokens.extend(line.split())
    if not tokens or tokens[0] != "P2":
        raise SubdeconvError("not a plain-text (P2) PGM file")
    if len(tokens) < 4:
        raise SubdeconvError("PGM header incomplete")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval < 1:
        raise SubdeconvError(f"PGM maxval must be >= 1, got {maxval}")
    values = tokens[4:]
    if len(values) != width * height:
        raise SubdeconvError(
            f"PGM needs {width * height} pixels, found {len(values)}"
        )
    grid = np.array([int(v) for v in values], dtype=float).reshape(height, width)
    return grid / maxval


def _standardize(x: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance per coordinate (population normalization)."""
    x = x - x.mean(axis=1, keepdims=True)
    sd = x.std(axis=1)
    if np.any(sd == 0):
        raise SubdeconvError("degenerate component: a coordinate has zero spread")
    return x / sd[:, None]


def _raw_geom3d(shape: str, T: int, rng: np.random.Generator) -> np.ndarray:
    if shape == "cube":
        # Uniform on the surface of [-1,1]^3: pick a face, then the face point.
        face = rng.integers(0, 6, size=T)
        uv = rng.uniform(-1.0, 1.0, size=(2, T))
        pts = np.empty((3, T))
        axis = face // 2
        sign = np.where(face % 2 == 0, -1.0, 1.0)
        for a in range(3):
            sel = axis == a
            others = [i for i in range(3) if i != a]
            pts[a, sel] = sign[sel]
            pts[others[0], sel] = uv[0, sel]
            pts[others[1], sel] = uv[1, sel]
        return pts
    if shape == "sphere":
        g = rng.standard_normal((3, T))
        return g / np.linalg.norm(g, axis=0, keepdims=True)
    if shape == "segments":
        # Three unit segments along the coordinate axes through the origin.
        axis = rng.integers(0, 3, size=T)
        t = rng.uniform(-1.0, 1.0, size=T)
        pts = np.zeros((3, T))
        pts[axis, np.arange(T)] = t
        return pts
    if shape == "spiral":
        # Helix with constant speed, so uniform angle is uniform arclength.
        theta = rng.uniform(0.0, 4.0 * np.pi, size=T)
        return np.vstack([np.cos(theta), np.sin(theta), theta / (2.0 * np.pi) - 1.0])
    if shape == "tetrahedron":
        verts = np.array(
            [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float
        )
        edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
        e = rng.integers(0, len(edges), size=T)
        t = rng.uniform(0.0, 1.0, size=T)
        a = verts[[edges[i][0] for i in e]]
        b = verts[[edges[i][1] for i in e]]
        return (a + (b - a) * t[:, None]).T
    if shape == "cylinder":
        theta = rng.uniform(0.0, 2.0 * np.pi, size=T)
        z = rng.uniform(-1.0, 1.0, size=T)
        return np.vstack([np.cos(theta), np.sin(theta), z])
    raise UnknownShape(f"unknown 3-D shape {shape!r}; catalog: {GEOM3D_SHAPES}")


def _raw_image_density(grid: np.ndarray, T: int, rng: np.random.Generator) -> np.ndarray:
    weights = grid.ravel().astype(float)
    total = weights.sum()
    if total <= 0:
        raise EmptyImage("density grid has no positive mass")
    cells = rng.choice(weights.size, size=T, p=weights / total)
    r, c = np.divmod(cells, grid.shape[1])
    jitter = rng.uniform(0.0, 1.0, size=(2, T))
    x = c + jitter[0]
    y = (grid.shape[0] - 1 - r) + jitter[1]
    return np.vstack([x, y])


def _raw_all_k_independent(k: int, T: int, rng: np.random.Generator) -> np.ndarray:
    """Integer draws: k uniform coordinates on {0..k-1} plus their mod-k sum."""
    u = rng.integers(0, k, size=(k, T))
    last = np.mod(u.sum(axis=0), k)
    return np.vstack([u, last[None, :]])


def _raw_spherical(dim: int, T: int, rng: np.random.Generator) -> np.ndarray:
    # Uniform in the unit ball: spherically symmetric and non-Gaussian.
    g = rng.standard_normal((dim, T))
    g /= np.linalg.norm(g, axis=0, keepdims=True)
    radius = rng.uniform(0.0, 1.0, size=T) ** (1.0 / dim)
    return g * radius


def _raw_stereo_ar(coeffs: np.ndarray, T: int, rng: np.random.Generator) -> np.ndarray:
    burn = 1000
    innov = rng.uniform(-1.0, 1.0, size=(2, T + burn))
    out = np.empty((2, T + burn))
    state = np.zeros(2)
    for t in range(T + burn):
        state = coeffs @ state + innov[:, t]
        out[:, t] = state
    return out[:, burn:]


def random_stereo_ar_coeffs(seed: RngSeed, spectral_radius: float = 0.7) -> np.ndarray:
    """Draw a random stable 2x2 AR coefficient matrix."""
    rng = seed.generator()
    f = rng.standard_normal((2, 2))
    f *= spectral_radius / np.max(np.abs(np.linalg.eigvals(f)))
    return f


def gen_component(spec: SourceSpec, T: int, seed: RngSeed) -> SampleMatrix:
    """Generate one ``d x T`` component, standardized per coordinate.

    Draws are i.i.d. over time for every kind except ``stereo_ar``, which is
    deliberately serially dependent.
    """
    if T < 1:
        raise TooFewSamples(f"need T >= 1, got {T}")
    rng = seed.generator()
    if spec.kind == "geom3d":
        raw = _raw_geom3d(spec.shape, T, rng)
    elif spec.kind == "image_density":
        raw = _raw_image_density(spec.grid, T, rng)
    elif spec.kind == "all_k_independent":
        raw = _raw_all_k_independent(spec.k, T, rng).astype(float)
    elif spec.kind == "spherical":
        raw = _raw_spherical(spec.size, T, rng)
    elif spec.kind == "uniform":
        raw = rng.uniform(-1.0, 1.0, size=(spec.size, T))
    elif spec.kind == "stereo_ar":
        raw = _raw_stereo_ar(spec.ar_coeffs, T, rng)
    else:
        raise SubdeconvError(f"unknown source kind {spec.kind!r}")
    return SampleMatrix(_standardize(raw))


def gen_source(
    specs: "list[SourceSpec]", T: int, seed: RngSeed
) -> tuple[SampleMatrix, BlockStructure]:
    """Stack independently generated components into one hidden source.

    Components draw from split, non-overlapping child streams. A singleton
    list consumes the seed directly and is identical to ``gen_component``.
    """
    if len(specs) == 0:
        raise EmptyPartition("source needs at least one component spec")
    if len(specs) == 1:
        comp = gen_component(specs[0], T, seed)
        return comp, BlockStructure((specs[0].dim,))
    parts = [gen_component(sp, T, seed.split(i)) for i, sp in enumerate(specs)]
    data = np.vstack([p.data for p in parts])
    return SampleMatrix(data), BlockStructure(tuple(sp.dim for sp in specs))


def gen_random_fir(
    out_dim: int,
    in_dim: int,
    order: int,
    seed: RngSeed,
    entries: str = "normal",
) -> FirFilter:
    """Random FIR mixing filter: ``order + 1`` tap matrices.

    Entries are i.i.d. standard normal by default; ``entries="uniform01"``
    draws them uniformly on [0, 1] instead.
    """
    if out_dim < 1 or in_dim < 1:
        raise DimMismatch(f"filter dims must be >= 1, got {out_dim}x{in_dim}")
    if order < 0:
        raise SubdeconvError(f"filter order must be >= 0, got {order}")
    rng = seed.generator()
    if entries == "normal":
        taps = [rng.standard_normal((out_dim, in_dim)) for _ in range(order + 1)]
    elif entries == "uniform01":
        taps = [rng.uniform(0.0, 1.0, size=(out_dim, in_dim)) for _ in range(order + 1)]
    else:
        raise SubdeconvError(f"unknown entry law {entries!r}")
    return FirFilter(tuple(taps))


def apply_fir(filt: FirFilter, source: SampleMatrix) -> SampleMatrix:
    """Causal FIR mix: ``x(t) = sum_l H_l s(t - l)`` for ``t = L+1 .. T``.

    The first L outputs are dropped rather than zero-padded, so every
    emitted sample is an exact mixture of real source samples; the output
    has ``T - L`` time steps.
    """
    if source.dim != filt.in_dim:
        raise DimMismatch(
            f"source dim {source.dim} != filter input dim {filt.in_dim}"
        )
    L = filt.order
    T = source.count
    if T <= L:
        raise TooFewSamples(f"need T > L = {L}, got T = {T}")
    s = source.data
    out = np.zeros((filt.out_dim, T - L))
    for l, h in enumerate(filt.coeffs):
        out += h @ s[:, L - l : T - l]
    return SampleMatrix(out)
