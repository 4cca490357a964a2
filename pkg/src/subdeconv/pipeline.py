"""Seeded end-to-end experiment harness.

One run: generate hidden sources, mix them (instantaneous orthogonal or
causal FIR), reduce to a square white problem, run ICA, group coordinates
by greedy permutation search, then score the product of estimated demixing
and true mixing with the Amari index. Multi-run reports aggregate the
per-run scores; a sample-size curve fits the power-law decline of the
error.

Everything is deterministic given (config, seed): per-run streams are
derived by seed splitting, never by seed arithmetic. Wall-clock fields are
the only nondeterministic values in the emitted reports.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .datagen import RngSeed, apply_fir, gen_random_fir, gen_source
from .dependency import DependencyMeasure
from .errors import ConfigError, SubdeconvError
from .evaluation import GlobalMap, amari_index, hinton_export
from .ica import IcaConfig, run_ica
from .model import BlockStructure, IsaTask, SampleMatrix
from .permutation import greedy_sweeps
from .preprocess import (
    apply_whitener,
    build_concat_mixing,
    fit_whitener,
    plan_concat,
    temporal_concat,
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one experiment (shared by every run)."""

    database: tuple
    T: int
    mixing_model: str = "isa"  # "isa" | "ubssd"
    filter_order: int = 1
    obs_dim: int | None = None
    mixing_entries: str = "normal"
    measure: DependencyMeasure = field(default_factory=DependencyMeasure)
    ica: IcaConfig = field(default_factory=IcaConfig)
    runs: int = 1
    seed: int = 0
    max_sweeps: int = 50
    jobs: int = 1
    output_dir: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "database", tuple(self.database))
        if len(self.database) == 0:
            raise ConfigError("database needs at least one component spec")
        if self.T < 2:
            raise ConfigError(f"T must be >= 2, got {self.T}")
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if self.mixing_model not in ("isa", "ubssd"):
            raise ConfigError(f"unknown mixing model {self.mixing_model!r}")
        source_dim = sum(sp.dim for sp in self.database)
        if self.mixing_model == "ubssd":
            if self.obs_dim is None:
                raise ConfigError("ubssd mixing needs obs_dim")
            if self.obs_dim <= source_dim:
                raise ConfigError(
                    f"ubssd needs obs_dim > source dim, got "
                    f"{self.obs_dim} <= {source_dim}"
                )
            if self.filter_order < 0:
                raise ConfigError("filter order must be >= 0")
        elif len(self.database) < 2:
            raise ConfigError("isa experiments need at least two components")

    @property
    def source_dim(self) -> int:
        return sum(sp.dim for sp in self.database)

    def source_blocks(self) -> BlockStructure:
        return BlockStructure(tuple(sp.dim for sp in self.database))

    def summary(self) -> dict:
        return {
            "database": [sp.kind for sp in self.database],
            "T": self.T,
            "mixing": self.mixing_model,
            "filter_order": self.filter_order if self.mixing_model == "ubssd" else 0,
            "obs_dim": self.obs_dim,
            "measure": self.measure.kind,
            "aggregation": self.measure.aggregation,
            "ica_nonlinearity": self.ica.nonlinearity,
            "runs": self.runs,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class RunRecord:
    index: int
    amari: float | None
    sweeps: int | None
    perm_converged: bool | None
    ica_converged: bool | None
    ica_iterations: int | None
    final_cost: float | None
    wall_time_s: float
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "run": self.index,
            "amari_index": self.amari,
            "sweeps": self.sweeps,
            "perm_converged": self.perm_converged,
            "ica_converged": self.ica_converged,
            "ica_iterations": self.ica_iterations,
            "final_cost": self.final_cost,
            "wall_time_s": self.wall_time_s,
            "error": self.error,
        }


@dataclass(frozen=True)
class RunReport:
    """Per-run records plus aggregate statistics over the successful runs."""

    config_summary: dict
    records: tuple

    def successes(self) -> "list[RunRecord]":
        return [r for r in self.records if r.error is None]

    def aggregate(self) -> dict:
        good = self.successes()
        out = {
            "runs_total": len(self.records),
            "runs_failed": len(self.records) - len(good),
        }
        if good:
            amaris = np.array([r.amari for r in good])
            sweeps = np.array([r.sweeps for r in good])
            out["amari"] = {
                "mean": float(amaris.mean()),
                "std": float(amaris.std(ddof=0)),
                "min": float(amaris.min()),
                "max": float(amaris.max()),
                "median": float(np.median(amaris)),
            }
            out["sweeps"] = {
                "min": int(sweeps.min()),
                "mean": float(sweeps.mean()),
                "max": int(sweeps.max()),
            }
            out["ica_converged_runs"] = int(sum(r.ica_converged for r in good))
            out["perm_converged_runs"] = int(sum(r.perm_converged for r in good))
        return out

    def to_json(self) -> str:
        body = {
            "config": self.config_summary,
            "aggregate": self.aggregate(),
            "wall_time_s": float(sum(r.wall_time_s for r in self.records)),
        }
        return json.dumps(body, indent=2, sort_keys=True)


def prepare_isa_task(cfg: ExperimentConfig, run_seed: RngSeed) -> IsaTask:
    """Generate, mix and whiten one run's data.

    The returned task carries the whitened observation, the block structure
    of the (possibly lag-stacked) problem, and the composed provenance
    mixing ``Q A`` used for scoring.
    """
    gen_seed = run_seed.split(0)
    mix_seed = run_seed.split(1)
    if cfg.mixing_model == "isa":
        source, blocks = gen_source(list(cfg.database), cfg.T, gen_seed)
        rng = mix_seed.generator()
        q, r = np.linalg.qr(rng.standard_normal((cfg.source_dim, cfg.source_dim)))
        mixing = q * np.sign(np.diag(r))
        observation = SampleMatrix(mixing @ source.data)
        stacked = observation
        isa_blocks = blocks
        target_rank = cfg.source_dim
        a_true = mixing
    else:
        source, blocks = gen_source(
            list(cfg.database), cfg.T + cfg.filter_order, gen_seed
        )
        filt = gen_random_fir(
            cfg.obs_dim,
            cfg.source_dim,
            cfg.filter_order,
            mix_seed,
            entries=cfg.mixing_entries,
        )
        observation = apply_fir(filt, source)
        plan = plan_concat(cfg.obs_dim, cfg.source_dim, cfg.filter_order, blocks)
        stacked = temporal_concat(observation, plan)
        isa_blocks = plan.isa_blocks()
        target_rank = plan.isa_dim
        a_true = build_concat_mixing(filt, plan)

    whitener = fit_whitener(stacked, target_rank=target_rank)
    whitened = apply_whitener(whitener, stacked)
    return IsaTask(
        observation=whitened,
        blocks=isa_blocks,
        whitener=whitener,
        provenance_mixing=whitener.q @ a_true,
    )


def execute_run(cfg: ExperimentConfig, index: int) -> tuple[RunRecord, "np.ndarray | None"]:
    """Run one seeded pipeline instance; failures become error records."""
    start = time.perf_counter()
    run_seed = RngSeed(cfg.seed).split(index)
    try:
        task = prepare_isa_task(cfg, run_seed)
        ica_cfg = dataclasses.replace(cfg.ica, seed=run_seed.split(2))
        ica_res = run_ica(task.observation, ica_cfg)
        estimates = SampleMatrix(ica_res.matrix @ task.observation.data)
        perm = greedy_sweeps(estimates, task.blocks, cfg.measure, cfg.max_sweeps)
        g = perm.P @ ica_res.matrix @ task.provenance_mixing
        score = amari_index(GlobalMap(g, task.blocks, task.blocks))
        record = RunRecord(
            index=index,
            amari=score,
            sweeps=perm.sweeps,
            perm_converged=perm.converged,
            ica_converged=ica_res.converged,
            ica_iterations=ica_res.iterations,
            final_cost=perm.final_cost,
            wall_time_s=time.perf_counter() - start,
        )
        return record, g
    except (SubdeconvError, np.linalg.LinAlgError) as exc:
        record = RunRecord(
            index=index,
            amari=None,
            sweeps=None,
            perm_converged=None,
            ica_converged=None,
            ica_iterations=None,
            final_cost=None,
            wall_time_s=time.perf_counter() - start,
            error=f"{type(exc).__name__}: {exc}",
        )
        return record, None


def run_pipeline(cfg: ExperimentConfig) -> RunReport:
    """Execute all runs (optionally in parallel) and emit report files.

    With ``output_dir`` set, writes ``report.json``, ``runs.jsonl``, and for
    the best run a ``hinton.csv`` magnitude grid plus rendered figure.
    """
    if cfg.jobs == 1 or cfg.runs == 1:
        outcomes = [execute_run(cfg, i) for i in range(cfg.runs)]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = [pool.submit(execute_run, cfg, i) for i in range(cfg.runs)]
            outcomes = [f.result() for f in futures]

    records = tuple(rec for rec, _ in outcomes)
    report = RunReport(config_summary=cfg.summary(), records=records)

    if cfg.output_dir is not None:
        _write_report_files(cfg, report, outcomes)
    return report


def _write_report_files(cfg: ExperimentConfig, report: RunReport, outcomes) -> None:
    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(os.path.join(cfg.output_dir, "report.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    with open(os.path.join(cfg.output_dir, "runs.jsonl"), "w") as fh:
        for rec in report.records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")

    best = None
    for rec, g in outcomes:
        if rec.error is None and (best is None or rec.amari < best[0].amari):
            best = (rec, g)
    if best is not None:
        blocks = _result_blocks(cfg)
        gmap = GlobalMap(best[1], blocks, blocks)
        hinton_export(gmap, os.path.join(cfg.output_dir, "hinton.csv"))
        from .plots import save_hinton_figure

        save_hinton_figure(
            best[1], blocks, os.path.join(cfg.output_dir, "hinton.png")
        )


def _result_blocks(cfg: ExperimentConfig) -> BlockStructure:
    if cfg.mixing_model == "isa":
        return cfg.source_blocks()
    plan = plan_concat(
        cfg.obs_dim, cfg.source_dim, cfg.filter_order, cfg.source_blocks()
    )
    return plan.isa_blocks()


def fit_power_law(sample_sizes, mean_errors) -> float | None:
    """Exponent ``c`` of ``r(T) ~ T^-c`` fitted over the declining segment.

    The segment starts at the largest mean error (the flat pre-threshold
    part is excluded); returns None when fewer than two usable points
    remain or any error is non-positive.
    """
    t = np.asarray(sample_sizes, dtype=float)
    r = np.asarray(mean_errors, dtype=float)
    order = np.argsort(t)
    t, r = t[order], r[order]
    start = int(np.argmax(r))
    t, r = t[start:], r[start:]
    if t.size < 2 or np.any(r <= 0):
        return None
    slope = np.polyfit(np.log(t), np.log(r), 1)[0]
    return float(-slope)


def emit_curve(cfgs: "list[ExperimentConfig]", output_dir: str | None = None):
    """Run an experiment per sample size and tabulate the error curve.

    Returns ``(rows, slope)`` where each row holds
    ``(T, mean_r, std_r, min_r, max_r, mean_sweeps)``; the fitted power-law
    exponent is None when undefined. With ``output_dir`` set, writes
    ``curve.csv``, a rendered ``curve.png``, and per-T report directories.
    """
    if len(cfgs) == 0:
        raise ConfigError("curve needs at least one configuration")
    baseline = cfgs[0].summary()
    baseline.pop("T")
    for cfg in cfgs[1:]:
        other = cfg.summary()
        other.pop("T")
        if other != baseline:
            raise ConfigError("curve configurations may differ only in T")

    rows = []
    for cfg in cfgs:
        sub_dir = None
        if output_dir is not None:
            sub_dir = os.path.join(output_dir, f"T{cfg.T}")
        report = run_pipeline(dataclasses.replace(cfg, output_dir=sub_dir))
        agg = report.aggregate()
        if "amari" in agg:
            rows.append(
                (
                    cfg.T,
                    agg["amari"]["mean"],
                    agg["amari"]["std"],
                    agg["amari"]["min"],
                    agg["amari"]["max"],
                    agg["sweeps"]["mean"],
                )
            )
        else:
            rows.append((cfg.T, None, None, None, None, None))

    usable = [(t, m, s) for t, m, s, *_ in rows if m is not None]
    slope = None
    if len(usable) >= 2:
        slope = fit_power_law([t for t, _, _ in usable], [m for _, m, _ in usable])

    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
        with open(os.path.join(output_dir, "curve.csv"), "w") as fh:
            fh.write("T,mean_r,std_r,min_r,max_r,mean_sweeps\n")
            for row in rows:
                fh.write(
                    ",".join("" if v is None else format(v, ".12g") for v in row)
                    + "\n"
                )
        if usable:
            from .plots import save_curve_figure

            save_curve_figure(
                [t for t, _, _ in usable],
                [m for _, m, _ in usable],
                [s for _, _, s in usable],
                slope,
                os.path.join(output_dir, "curve.png"),
            )
    return rows, slope
