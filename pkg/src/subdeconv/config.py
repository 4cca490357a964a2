"""TOML experiment configuration.

Schema (all tables optional unless noted):

    [experiment]            # required
    T = 5000                # sample count of the observation
    runs = 10
    seed = 12345
    output_dir = "out"      # optional; also settable via CLI
    jobs = 1
    max_sweeps = 50

    [[database]]            # one table per hidden component (required)
    kind = "geom3d"         # geom3d | letter | image_density |
    shape = "cube"          #   all_k_independent | spherical | uniform |
                            #   stereo_ar
    # letter:            char = "A"
    # image_density:     pgm = "grid.pgm"
    # all_k_independent: k = 2
    # spherical/uniform: dim = 3
    # stereo_ar:         coeffs = [[0.4, 0.1], [0.0, 0.5]]

    [mixing]
    model = "isa"           # isa | ubssd
    order = 1               # ubssd: FIR filter order L
    obs_dim = 8             # ubssd: observation dimension (> source dim)
    entries = "normal"      # normal | uniform01

    [measure]
    name = "jfd"            # jfd | kcca | kgv | kc
    aggregation = "pairwise"  # pairwise | recursive | multiway
    functions = ["cos", "cos2"]  # jfd only

    [measure.kernel]
    sigma = 5.0
    kappa = 1e-4
    lowrank_tol = 1e-6
    lowrank_cap = 60

    [ica]
    nonlinearity = "tanh"   # tanh | cube | gauss
    max_iter = 200
    tol = 1e-6
    restarts = 5
"""

from __future__ import annotations

import os

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .datagen import SourceSpec, load_pgm
from .dependency import DependencyMeasure, FunctionSet, KernelConfig
from .errors import ConfigError, SubdeconvError
from .ica import IcaConfig
from .pipeline import ExperimentConfig

def _cos2(u):
    return np.cos(2.0 * u)


def _cos3(u):
    return np.cos(3.0 * u)


def _square(u):
    return u * u


def _cube(u):
    return u**3


# named module-level functions so loaded configs stay picklable for --jobs
JFD_FUNCTIONS = {
    "cos": np.cos,
    "cos2": _cos2,
    "cos3": _cos3,
    "sin": np.sin,
    "tanh": np.tanh,
    "square": _square,
    "cube": _cube,
    "abs": np.abs,
}


def _source_spec(entry: dict, base_dir: str) -> SourceSpec:
    kind = entry.get("kind")
    try:
        if kind == "geom3d":
            return SourceSpec.geom3d(entry["shape"])
        if kind == "letter":
            return SourceSpec.letter(entry["char"])
        if kind == "image_density":
            path = entry["pgm"]
            if not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            return SourceSpec.image_density(load_pgm(path))
        if kind == "all_k_independent":
            return SourceSpec.all_k_independent(int(entry["k"]))
        if kind == "spherical":
            return SourceSpec.spherical(int(entry["dim"]))
        if kind == "uniform":
            return SourceSpec.uniform(int(entry["dim"]))
        if kind == "stereo_ar":
            return SourceSpec.stereo_ar(np.asarray(entry["coeffs"], dtype=float))
    except KeyError as exc:
        raise ConfigError(f"database entry {entry!r} is missing key {exc}") from exc
    except (SubdeconvError, OSError) as exc:
        raise ConfigError(f"database entry {entry!r}: {exc}") from exc
    raise ConfigError(f"unknown database kind {kind!r}")


def _measure(table: dict) -> DependencyMeasure:
    name = table.get("name", "jfd")
    aggregation = table.get("aggregation", "pairwise")
    fn_names = table.get("functions", ["cos", "cos2"])
    try:
        fns = tuple(JFD_FUNCTIONS[n] for n in fn_names)
    except KeyError as exc:
        raise ConfigError(
            f"unknown JFD function {exc}; available: {sorted(JFD_FUNCTIONS)}"
        ) from exc
    kt = table.get("kernel", {})
    try:
        kernel = KernelConfig(
            sigma=float(kt.get("sigma", 5.0)),
            kappa=float(kt.get("kappa", 1e-4)),
            lowrank_tol=float(kt.get("lowrank_tol", 1e-6)),
            lowrank_cap=int(kt.get("lowrank_cap", 60)),
        )
        return DependencyMeasure(
            kind=name,
            functions=FunctionSet(fns),
            kernel=kernel,
            aggregation=aggregation,
        )
    except SubdeconvError as exc:
        raise ConfigError(str(exc)) from exc


def _ica(table: dict) -> IcaConfig:
    try:
        return IcaConfig(
            nonlinearity=table.get("nonlinearity", "tanh"),
            max_iter=int(table.get("max_iter", 200)),
            tol=float(table.get("tol", 1e-6)),
            restarts=int(table.get("restarts", 5)),
        )
    except SubdeconvError as exc:
        raise ConfigError(str(exc)) from exc


def _read_toml(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc


def load_source_spec(path: str):
    """Parse just the generation part of a config: (specs, T, seed).

    Used by dataset generation, which needs no mixing or measure tables.
    """
    doc = _read_toml(path)
    base_dir = os.path.dirname(os.path.abspath(path))
    db = doc.get("database")
    if not isinstance(db, list) or not db:
        raise ConfigError("config needs at least one [[database]] entry")
    exp = doc.get("experiment", {})
    specs = [_source_spec(e, base_dir) for e in db]
    return specs, int(exp.get("T", 0)), int(exp.get("seed", 0))


def load_config(path: str, **overrides) -> ExperimentConfig:
    """Parse a TOML experiment file; keyword overrides win over the file."""
    doc = _read_toml(path)
    base_dir = os.path.dirname(os.path.abspath(path))
    exp = doc.get("experiment")
    if not isinstance(exp, dict):
        raise ConfigError("config needs an [experiment] table")
    db = doc.get("database")
    if not isinstance(db, list) or not db:
        raise ConfigError("config needs at least one [[database]] entry")
    mixing = doc.get("mixing", {})

    values = dict(
        database=tuple(_source_spec(e, base_dir) for e in db),
        T=int(exp.get("T", 0)),
        runs=int(exp.get("runs", 1)),
        seed=int(exp.get("seed", 0)),
        output_dir=exp.get("output_dir"),
        jobs=int(exp.get("jobs", 1)),
        max_sweeps=int(exp.get("max_sweeps", 50)),
        mixing_model=mixing.get("model", "isa"),
        filter_order=int(mixing.get("order", 1)),
        obs_dim=(int(mixing["obs_dim"]) if "obs_dim" in mixing else None),
        mixing_entries=mixing.get("entries", "normal"),
        measure=_measure(doc.get("measure", {})),
        ica=_ica(doc.get("ica", {})),
    )
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**values)
    except SubdeconvError as exc:
        raise ConfigError(str(exc)) from exc
