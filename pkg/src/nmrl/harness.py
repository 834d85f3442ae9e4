"""Run an experiment matrix and persist its results.

Layout of a results directory::

    results.csv       checkpoint rows of every cell, in canonical cell order
    summary.csv       mean and standard deviation across seeds per checkpoint
    timings.csv       wall-clock time per cell (kept apart so results.csv is reproducible)
    failures.csv      cells that raised, with the error message
    cells/<run>.csv   per-cell rows, written as each cell finishes
    machines/<run>.txt final machines of each cell in the tabular DFA format
    config.ini        the full configuration

Every CSV starts with ``#`` comment lines carrying the serialized config and
the package version.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import statistics
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

from . import __version__
from .config import ExperimentConfig
from .orchestrate import run_cell

log = logging.getLogger(__name__)

COLUMNS = ["run_id", "seed", "algorithm", "learner", "env", "scheme", "step", "mean_return",
           "machine_states", "machine_correct"]
SUMMARY_COLUMNS = ["env", "scheme", "algorithm", "learner", "step", "n", "mean", "std"]


@dataclass(frozen=True)
class Cell:
    scheme: str
    algorithm: str
    learner: str
    seed: int

    def run_id(self, env: str) -> str:
        return f"{env}-{self.scheme}-{self.algorithm}-{self.learner}-s{self.seed}"


@dataclass
class CellResult:
    cell: Cell
    rows: list[dict] = field(default_factory=list)
    machines: str = ""
    wall_ms: int = 0
    error: str | None = None


@dataclass
class ResultSet:
    out_dir: str
    results: list[CellResult]

    @property
    def rows(self) -> list[dict]:
        return [r for res in self.results for r in res.rows]

    @property
    def failures(self) -> list[CellResult]:
        return [r for r in self.results if r.error is not None]


def cells(config: ExperimentConfig) -> list[Cell]:
    return [Cell(sc, alg, lrn, seed) for sc in config.schemes for alg in config.algorithms
            for lrn in config.learners for seed in config.seeds]


def columns(config: ExperimentConfig) -> list[str]:
    return COLUMNS + (["exact_return"] if config.exact_eval else [])


def fmt_float(x: float) -> str:
    return f"{x:.6f}"


def execute_cell(config_text: str, cell: Cell) -> CellResult:
    """Run one cell; exceptions are captured into the result."""
    config = ExperimentConfig.from_ini(config_text)
    t0 = time.perf_counter()
    res = CellResult(cell)
    try:
        settings = config.run_settings(cell.algorithm, cell.learner, cell.seed)
        runner = run_cell(config.env_factory(cell.scheme), settings)
    except Exception as exc:  # recorded, the other cells carry on
        res.error = f"{type(exc).__name__}: {exc}"
        log.debug("cell %s failed\n%s", cell, traceback.format_exc())
        res.wall_ms = int((time.perf_counter() - t0) * 1000)
        return res
    run_id = cell.run_id(config.env)
    for rec in runner.records:
        row = {
            "run_id": run_id, "seed": cell.seed, "algorithm": cell.algorithm, "learner": cell.learner,
            "env": config.env, "scheme": cell.scheme, "step": rec["step"],
            "mean_return": fmt_float(rec["mean_return"]),
            "machine_states": ";".join(map(str, rec["machine_states"])),
            "machine_correct": ";".join(str(int(c)) for c in rec["machine_correct"]),
        }
        if "exact_return" in rec:
            row["exact_return"] = fmt_float(rec["exact_return"])
        res.rows.append(row)
    res.machines = "".join(f"# type {t}\n{d.to_text()}" for t, d in enumerate(runner.machines))
    res.wall_ms = int((time.perf_counter() - t0) * 1000)
    return res


def header(config: ExperimentConfig) -> str:
    lines = [f"nmrl {__version__}"] + config.to_ini().splitlines()
    return "".join(f"# {line}\n" for line in lines)


def write_csv(path: str, config: ExperimentConfig, cols: list[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(header(config))
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(row)


def read_csv(path: str) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        body = "".join(line for line in fh if not line.startswith("#"))
    return list(csv.DictReader(io.StringIO(body)))


def aggregate(rows: Iterable[dict]) -> list[dict]:
    """Mean and sample standard deviation across seeds, per variant and checkpoint."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        key = (r["env"], r["scheme"], r["algorithm"], r["learner"], int(r["step"]))
        groups.setdefault(key, []).append(float(r["mean_return"]))
    out = []
    for key in sorted(groups):
        vals = groups[key]
        std = statistics.stdev(vals) if len(vals) > 1 else 0.0
        out.append(dict(zip(SUMMARY_COLUMNS, [*key, len(vals), fmt_float(statistics.fmean(vals)), fmt_float(std)])))
    return out


def run_matrix(config: ExperimentConfig, out_dir: str, workers: int = 1) -> ResultSet:
    """Execute every cell, stream per-cell files, then write the combined outputs."""
    os.makedirs(os.path.join(out_dir, "cells"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "machines"), exist_ok=True)
    with open(os.path.join(out_dir, "config.ini"), "w", encoding="utf-8") as fh:
        fh.write(config.to_ini())
    text = config.to_ini()
    todo = cells(config)
    cols = columns(config)

    def collect(res: CellResult) -> None:
        run_id = res.cell.run_id(config.env)
        write_csv(os.path.join(out_dir, "cells", f"{run_id}.csv"), config, cols, res.rows)
        with open(os.path.join(out_dir, "machines", f"{run_id}.txt"), "w", encoding="utf-8") as fh:
            fh.write(res.machines)
        status = "failed" if res.error else "done"
        log.info("%s %s (%d ms)", status, run_id, res.wall_ms)

    results: list[CellResult] = []
    if workers <= 1:
        for cell in todo:
            res = execute_cell(text, cell)
            collect(res)
            results.append(res)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(execute_cell, text, cell) for cell in todo]
            for fut in futures:  # collected in cell order by the single parent process
                res = fut.result()
                collect(res)
                results.append(res)

    rs = ResultSet(out_dir, results)
    write_csv(os.path.join(out_dir, "results.csv"), config, cols, rs.rows)
    write_csv(os.path.join(out_dir, "summary.csv"), config, SUMMARY_COLUMNS, aggregate(rs.rows))
    write_csv(os.path.join(out_dir, "timings.csv"), config, ["run_id", "wall_ms"],
              [{"run_id": r.cell.run_id(config.env), "wall_ms": r.wall_ms} for r in results])
    write_csv(os.path.join(out_dir, "failures.csv"), config, ["run_id", "error"],
              [{"run_id": r.cell.run_id(config.env), "error": r.error} for r in rs.failures])
    return rs
