"""CSV artifacts written by the command-line front end.

Bodies are deterministic for a given scenario and seed: floats are written
with 17 significant digits and anything run-dependent (timestamps, wall
times) goes either into a leading ``#`` comment line or into timing.csv.
"""

from __future__ import annotations

import csv
import datetime as _dt
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bcd import SolveResult
from .scenario import Scenario


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence], comment: str | None = None,
              stamp: bool = True) -> Path:
    """Write one CSV with an optional '#' comment line (which carries the timestamp)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if comment is not None or stamp:
            parts = [] if comment is None else [comment]
            if stamp:
                parts.append("generated " + _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))
            fh.write("# " + "; ".join(parts) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def csv_body(path: str | Path) -> bytes:
    """File contents without '#' comment lines, for reproducibility checks."""
    lines = Path(path).read_bytes().splitlines(keepends=True)
    return b"".join(line for line in lines if not line.startswith(b"#"))


def noise_dbm(scenario: Scenario) -> float:
    return float(10.0 * np.log10(scenario.noise_power) + 30.0)


SUMMARY_COLUMNS = ("strategy", "seed", "num_sensors", "num_slots", "noise_dbm", "time_averaged_mse",
                   "iterations", "converged", "admm_iterations", "admm_cap_hits", "cap_hit")


def summary_row(result: SolveResult, scenario: Scenario) -> tuple:
    return (result.strategy, scenario.rng_seed, scenario.num_sensors, scenario.num_slots,
            round(noise_dbm(scenario), 9), result.mse, result.iterations, result.converged,
            int(sum(result.admm_iterations)), result.admm_cap_hits, result.cap_hit)


def write_solve_outputs(result: SolveResult, scenario: Scenario, outdir: str | Path,
                        stamp: bool = True) -> dict[str, Path]:
    """trajectory.csv, mse_per_iter.csv, powers.csv, summary.csv and timing.csv."""
    outdir = Path(outdir)
    tag = f"strategy={result.strategy} seed={scenario.rng_seed}"
    files = {}
    files["trajectory"] = write_csv(
        outdir / "trajectory.csv", ("n", "x", "y"),
        ((n, x, y) for n, (x, y) in enumerate(result.trajectory)), tag, stamp)
    files["mse_per_iter"] = write_csv(
        outdir / "mse_per_iter.csv", ("iteration", "mse"),
        enumerate(result.mse_per_iteration), tag, stamp)
    k, n = result.powers.shape
    files["powers"] = write_csv(
        outdir / "powers.csv", ("k", "n", "watts"),
        ((kk, nn + 1, result.powers[kk, nn]) for kk in range(k) for nn in range(n)), tag, stamp)
    files["summary"] = write_csv(outdir / "summary.csv", SUMMARY_COLUMNS,
                                 [summary_row(result, scenario)], tag, stamp)
    files["timing"] = write_csv(outdir / "timing.csv", ("strategy", "wall_seconds", "admm_iter_seconds"),
                                [(result.strategy, result.wall_time, result.admm_iter_time)], tag, stamp)
    return files


def write_trace(path: str | Path, objective: Sequence[float], optimum: float | None = None,
                comment: str | None = None, stamp: bool = True, start: int = 0) -> Path:
    """Convergence trace: iteration, objective[, relative_error]; iterations count from ``start``."""
    if optimum is None:
        return write_csv(path, ("iteration", "objective"), enumerate(objective, start), comment, stamp)
    scale = max(abs(optimum), np.finfo(float).tiny)
    rows = ((i, v, abs(v - optimum) / scale) for i, v in enumerate(objective, start))
    return write_csv(path, ("iteration", "objective", "relative_error"), rows, comment, stamp)
