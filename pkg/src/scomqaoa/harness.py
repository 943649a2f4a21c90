"""Experiment orchestration: preparations, sweeps and spectrum dumps.

Every command takes a validated :class:`RunConfig`, writes its tables into
``cfg.out`` and returns a plain result object.  Tables are CSV files whose
first line is a ``# <schema>`` comment naming the column set and version;
all files are written to a temporary name and renamed into place.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.stats

from scomqaoa.circuit import Ansatz, build_ansatz, layer_profile, save_angles
from scomqaoa.config import ConfigError, RunConfig
from scomqaoa.eigensolver import TargetState, correlation_length, degenerate_block, eigenstates, sector_indices
from scomqaoa.model import HamiltonianSpec
from scomqaoa.operators import SymmetryCharge
from scomqaoa.qng import TRACE_COLUMNS, OptimizationTrace, optimize
from scomqaoa.statevector import State, half_chain_entropy, product_state

log = logging.getLogger(__name__)

SUMMARY_SCHEMA = "scomqaoa.summary/1"
TRACE_SCHEMA = "scomqaoa.trace/1"
PROFILE_SCHEMA = "scomqaoa.profile/1"
LAYERS_SCHEMA = "scomqaoa.sweep_layers/1"
SIZE_SCHEMA = "scomqaoa.sweep_size/1"
COUPLING_SCHEMA = "scomqaoa.sweep_coupling/1"
SPECTRUM_SCHEMA = "scomqaoa.spectrum/1"

PROFILE_COLUMNS = ("layer", "fidelity", "energy", "entropy")
LAYERS_COLUMNS = ("L", "lambda_x", "N", "P", "fidelity", "iterations", "status", "attempts")
SIZE_COLUMNS = ("L", "N_c", "fidelity", "iterations")
COUPLING_COLUMNS = ("lambda_x", "xi", "N_c", "fidelity", "iterations")
SPECTRUM_COLUMNS = ("sector", "i", "energy", "degenerate")


# ---------------------------------------------------------------- file output


def atomic_write(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_table(path: str | os.PathLike, schema: str, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write ``rows`` as CSV under a ``# schema`` comment line."""
    buf = io.StringIO()
    buf.write(f"# {schema}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row {row} does not match columns {columns}")
        w.writerow([_cell(v) for v in row])
    atomic_write(path, buf.getvalue())


def read_table(path: str | os.PathLike) -> tuple[str, list[dict[str, str]]]:
    """Inverse of :func:`write_table`: ``(schema, rows as str dicts)``."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ValueError(f"{path}: missing schema comment")
    schema = lines[0][2:].strip()
    return schema, list(csv.DictReader(lines[1:]))


def write_json(path: str | os.PathLike, doc: dict) -> None:
    atomic_write(path, json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n")


# ---------------------------------------------------------------- preparation


def initial_state(L: int, q: int | None) -> State:
    """``|up...up>`` for ``q=+1`` or no sector; one flip at ``L // 2`` for ``q=-1``."""
    return product_state(L, [L // 2] if q == -1 else [])


def resolve_target(spec: HamiltonianSpec, q: int | None, index: int) -> TargetState:
    if q is not None:
        dim = len(sector_indices(spec.L, q))
    else:
        dim = 2**spec.L
    if index >= dim:
        raise ConfigError(f"state index {index} outside sector of dimension {dim}")
    return eigenstates(spec, q, index + 1)[index]


@dataclass
class Preparation:
    """One optimized circuit together with its target and diagnostics."""

    spec: HamiltonianSpec
    ansatz: Ansatz
    target: TargetState
    target_rows: np.ndarray
    psi0: State
    trace: OptimizationTrace
    attempts: int
    seconds: float

    @property
    def converged(self) -> bool:
        return self.trace.converged


def prepare_state(cfg: RunConfig, L: int, lambda_x: float, N: int, target: TargetState | None = None) -> Preparation:
    """ED target, ansatz, QNG optimization (with restarts when allowed)."""
    t0 = time.perf_counter()
    spec = cfg.build(L, lambda_x)
    q = cfg.sector_for(spec)
    if target is None:
        target = resolve_target(spec, q, cfg.state_index)
    rows = degenerate_block(spec, target)
    psi0 = initial_state(L, q)
    ansatz = build_ansatz(spec, N, trotter_order=cfg.trotter_order, tied=cfg.tied)
    best = None
    attempt = 0
    for attempt in range(cfg.attempts()):
        if attempt:
            log.info("restart %d from random angles (L=%d, N=%d)", attempt, L, N)
        trace = optimize(ansatz, psi0, cfg.optimizer(attempt), target=rows)
        if best is None or trace.final.fidelity > best.final.fidelity:
            best = trace
        if trace.converged:
            break
    return Preparation(spec, ansatz, target, rows, psi0, best, attempt + 1, time.perf_counter() - t0)


def summarize(prep: Preparation, cfg: RunConfig) -> dict:
    """The ``summary.json`` document of one preparation."""
    tr = prep.trace
    final = tr.final
    even = prep.spec.L % 2 == 0
    s_ed = half_chain_entropy(prep.target.state) if even else float("nan")

    def num(x):
        return None if x is None or not math.isfinite(x) else float(x)

    return {
        "schema": SUMMARY_SCHEMA,
        "model": prep.spec.name,
        "L": prep.spec.L,
        "sector": cfg.sector_for(prep.spec),
        "state_index": cfg.state_index,
        "N": prep.ansatz.N,
        "P": prep.ansatz.P,
        "status": tr.status.value,
        "iterations": tr.iterations,
        "attempts": prep.attempts,
        "fidelity": final.fidelity,
        "fidelity_cutoff": cfg.cutoff,
        "energy": final.energy,
        "energy_ed": prep.target.energy,
        "energy_error": abs(final.energy - prep.target.energy),
        "entropy": num(final.entropy),
        "entropy_ed": num(s_ed),
        "entropy_error": num(abs(final.entropy - s_ed)) if even else None,
        "degenerate_target": prep.target.degenerate,
        "max_norm_drift": tr.max_norm_drift,
        "max_charge_drift": tr.max_charge_drift,
        "min_metric_eigenvalue": num(tr.min_metric_eigenvalue),
        "epsilon_escalations": tr.epsilon_escalations,
        "seed": cfg.seed,
        "wall_time_s": round(prep.seconds, 3),
    }


@dataclass
class PrepareResult:
    summary: dict
    preparation: Preparation
    files: dict[str, Path]

    @property
    def ok(self) -> bool:
        return self.preparation.converged


def cmd_prepare(cfg: RunConfig) -> PrepareResult:
    """Prepare one target state and write trace, angles, layer profile and summary."""
    L = cfg.single("size", cfg.size)
    N = cfg.single("layers", cfg.layers)
    lx = cfg.single("lambda_x", cfg.lambda_x)
    if L % 2:
        raise ConfigError(f"prepare reports half-chain entropies and needs even L, got {L}")
    prep = prepare_state(cfg, L, lx, N)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    files = {name: out / name for name in ("trace.csv", "angles.json", "profile.csv", "summary.json")}
    write_table(files["trace.csv"], TRACE_SCHEMA, TRACE_COLUMNS, prep.trace.rows)
    save_angles(files["angles.json"], prep.ansatz, prep.trace.theta)
    profile = layer_profile(prep.ansatz, prep.trace.theta, prep.psi0, prep.target_rows)
    write_table(files["profile.csv"], PROFILE_SCHEMA, PROFILE_COLUMNS, profile)
    summary = summarize(prep, cfg)
    write_json(files["summary.json"], summary)
    return PrepareResult(summary, prep, files)


# ---------------------------------------------------------------- sweeps


def _layer_point(cfg: RunConfig, L: int, lambda_x: float, N: int) -> tuple:
    prep = prepare_state(cfg, L, lambda_x, N)
    tr = prep.trace
    return (L, lambda_x, N, prep.ansatz.P, tr.final.fidelity, tr.iterations, tr.status.value, prep.attempts)


def critical_depth(rows: Sequence[tuple]) -> int | None:
    """Smallest ``N`` whose run converged, or ``None``."""
    done = [r[2] for r in rows if r[6] == "converged"]
    return min(done) if done else None


def layer_scan(cfg: RunConfig, L: int, lambda_x: float, until_converged: bool) -> list[tuple]:
    """Run every ``N`` in ``cfg.layers`` (ascending) at one size and coupling."""
    Ns = sorted(set(cfg.layers))
    if until_converged or cfg.jobs == 1:
        rows = []
        for N in Ns:
            rows.append(_layer_point(cfg, L, lambda_x, N))
            log.info("L=%d lambda_x=%g N=%d fidelity=%.5f %s", L, lambda_x, N, rows[-1][4], rows[-1][6])
            if until_converged and rows[-1][6] == "converged":
                break
        return rows
    with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
        futures = [pool.submit(_layer_point, cfg, L, lambda_x, N) for N in Ns]
        return [f.result() for f in futures]


@dataclass
class SweepResult:
    rows: list[tuple]
    summary: dict
    files: dict[str, Path] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return bool(self.summary.get("ok"))


def cmd_sweep_layers(cfg: RunConfig) -> SweepResult:
    """Fidelity against layer count at one size; reports the critical depth ``N_c``."""
    L = cfg.single("size", cfg.size)
    lx = cfg.single("lambda_x", cfg.lambda_x)
    rows = layer_scan(cfg, L, lx, cfg.until_converged)
    n_c = critical_depth(rows)
    summary = {"schema": LAYERS_SCHEMA, "model": cfg.model, "L": L, "lambda_x": lx,
               "N_c": n_c, "ok": n_c is not None, "config": cfg.to_dict()}
    out = Path(cfg.out)
    files = {"table": out / "sweep_layers.csv", "summary": out / "sweep_layers.json"}
    write_table(files["table"], LAYERS_SCHEMA, LAYERS_COLUMNS, rows)
    write_json(files["summary"], summary)
    return SweepResult(rows, summary, files)


def _depth_row(rows: list[tuple]) -> tuple:
    n_c = critical_depth(rows)
    hit = [r for r in rows if r[2] == n_c]
    if not hit:
        return n_c, float("nan"), None
    return n_c, hit[0][4], hit[0][5]


def cmd_sweep_size(cfg: RunConfig) -> SweepResult:
    """Critical depth ``N_c`` for each size in ``cfg.size``.

    Layer counts are scanned upward and each scan stops at the first
    converged depth.
    """
    lx = cfg.single("lambda_x", cfg.lambda_x)
    table, points = [], []
    for L in cfg.size:
        rows = layer_scan(cfg, L, lx, until_converged=True)
        points.extend(rows)
        table.append((L, *_depth_row(rows)))
    summary = {"schema": SIZE_SCHEMA, "model": cfg.model, "lambda_x": lx,
               "N_c": {str(r[0]): r[1] for r in table},
               "ok": all(r[1] is not None for r in table), "config": cfg.to_dict()}
    out = Path(cfg.out)
    files = {"table": out / "sweep_size.csv", "points": out / "sweep_size_points.csv", "summary": out / "sweep_size.json"}
    write_table(files["table"], SIZE_SCHEMA, SIZE_COLUMNS, table)
    write_table(files["points"], LAYERS_SCHEMA, LAYERS_COLUMNS, points)
    write_json(files["summary"], summary)
    return SweepResult(table, summary, files)


def rank_correlation(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Spearman correlation, ``None`` when either column is constant or has missing values."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        return None
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    return float(scipy.stats.spearmanr(x, y).statistic)


def cmd_sweep_coupling(cfg: RunConfig) -> SweepResult:
    """Correlation length ``xi`` and critical depth against the longitudinal field."""
    if cfg.model != "ising":
        raise ConfigError("coupling sweeps vary lambda_x of the ising model")
    L = cfg.single("size", cfg.size)
    if any(lx <= 0 for lx in cfg.lambda_x):
        raise ConfigError("coupling sweeps need lambda_x > 0 (gapped chain)")
    table, points = [], []
    for lx in sorted(cfg.lambda_x):
        xi = correlation_length(lx, cfg.lambda_z, L)
        rows = layer_scan(cfg, L, lx, until_converged=True)
        points.extend(rows)
        table.append((lx, xi, *_depth_row(rows)))
    xis = [r[1] for r in table]
    ncs = [float("nan") if r[2] is None else r[2] for r in table]
    summary = {"schema": COUPLING_SCHEMA, "model": cfg.model, "L": L,
               "spearman_xi_N_c": rank_correlation(xis, ncs),
               "ok": all(r[2] is not None for r in table), "config": cfg.to_dict()}
    out = Path(cfg.out)
    files = {"table": out / "sweep_coupling.csv", "points": out / "sweep_coupling_points.csv",
             "summary": out / "sweep_coupling.json"}
    write_table(files["table"], COUPLING_SCHEMA, COUPLING_COLUMNS, table)
    write_table(files["points"], LAYERS_SCHEMA, LAYERS_COLUMNS, points)
    write_json(files["summary"], summary)
    return SweepResult(table, summary, files)


def spectrum_rows(spec: HamiltonianSpec, k: int, q: int | None = None) -> list[tuple]:
    """``(sector, i, energy, degenerate)`` for the ``k`` lowest levels of each sector, by energy."""
    if q is not None:
        sectors = [q]
    elif spec.conserves(SymmetryCharge.PRODUCT_Z):
        sectors = [1, -1]
    else:
        sectors = [None]
    rows = []
    for s in sectors:
        dim = 2**spec.L if s is None else len(sector_indices(spec.L, s))
        if k > dim:
            raise ConfigError(f"k={k} exceeds sector dimension {dim}")
        for t in eigenstates(spec, s, k):
            rows.append(("none" if s is None else f"{s:+d}", t.index, t.energy, int(t.degenerate)))
    return sorted(rows, key=lambda r: (r[2], r[0] != "+1"))


def cmd_spectrum(cfg: RunConfig) -> SweepResult:
    """Lowest ``cfg.k`` energies per sector as a CSV table."""
    spec = cfg.build(cfg.single("size", cfg.size), cfg.single("lambda_x", cfg.lambda_x))
    rows = spectrum_rows(spec, cfg.k, cfg.sector)
    out = Path(cfg.out)
    files = {"table": out / "spectrum.csv"}
    write_table(files["table"], SPECTRUM_SCHEMA, SPECTRUM_COLUMNS, rows)
    return SweepResult(rows, {"schema": SPECTRUM_SCHEMA, "rows": len(rows), "ok": True}, files)
