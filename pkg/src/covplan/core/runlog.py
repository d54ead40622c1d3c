"""Per-step experiment records and their CSV/JSON files."""

import csv
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

RUNLOG_HEADER = "# covplan-runlog v1"
TIMINGS_HEADER = "# covplan-timings v1"
CANDIDATES_HEADER = "# covplan-candidates v1"

RUNLOG_FILE = "runlog.csv"
TIMINGS_FILE = "timings.csv"
CANDIDATES_FILE = "candidates.csv"
SUMMARY_FILE = "summary.json"


def _num(value: Optional[float]) -> str:
    """Shortest round-tripping text for a float; empty for missing values."""
    if value is None:
        return ""
    return repr(float(value))


@dataclass
class StepRecord:
    step: int
    n: int
    m: int
    involved: int
    relinearized_poses: int = 0
    relinearized_landmarks: int = 0
    fallback: bool = False
    chosen: Optional[int] = None
    best_score: Optional[float] = None
    disagreement: Optional[float] = None
    timings: dict[str, float] = field(default_factory=dict)


@dataclass
class CandidateRecord:
    step: int
    candidate: int
    target: str
    score: float
    distance: float
    path_length: float
    objective: float


@dataclass
class RunLog:
    """Append-only log of a passive or active run."""

    mode: str
    timing_columns: list[str]
    cross_check: bool = False
    steps: list[StepRecord] = field(default_factory=list)
    candidates: list[CandidateRecord] = field(default_factory=list)
    decisions_agreed: int = 0
    aborted: Optional[str] = None

    def append(self, record: StepRecord) -> None:
        self.steps.append(record)

    def add_candidates(self, records: list[CandidateRecord]) -> None:
        self.candidates.extend(records)

    # ------------------------------------------------------------------------
    # Rows
    # ------------------------------------------------------------------------

    def runlog_columns(self) -> list[str]:
        cols = [
            "step", "n", "m", "involved", "relinearized_poses", "relinearized_landmarks",
            "fallback",
        ]
        if self.mode == "active":
            cols += ["chosen", "best_score"]
        if self.cross_check:
            cols.append("max_disagreement")
        return cols

    def runlog_rows(self) -> list[list[str]]:
        rows = []
        for r in self.steps:
            row = [
                str(r.step), str(r.n), str(r.m), str(r.involved),
                str(r.relinearized_poses), str(r.relinearized_landmarks), str(int(r.fallback)),
            ]
            if self.mode == "active":
                row += ["" if r.chosen is None else str(r.chosen), _num(r.best_score)]
            if self.cross_check:
                row.append(_num(r.disagreement))
            rows.append(row)
        return rows

    def timing_rows(self) -> list[list[str]]:
        return [
            [str(r.step)] + [_num(r.timings.get(c)) for c in self.timing_columns]
            for r in self.steps
        ]

    def candidate_rows(self) -> list[list[str]]:
        return [
            [
                str(c.step), str(c.candidate), c.target, _num(c.score), _num(c.distance),
                _num(c.path_length), _num(c.objective),
            ]
            for c in self.candidates
        ]

    # ------------------------------------------------------------------------
    # Summary
    # ------------------------------------------------------------------------

    def timing_summary(self) -> dict[str, dict[str, float]]:
        out = {}
        for col in self.timing_columns:
            values = [r.timings[col] for r in self.steps if col in r.timings]
            if not values:
                continue
            out[col] = {
                "median": statistics.median(values),
                "mean": statistics.fmean(values),
                "max": max(values),
                "total": sum(values),
            }
        return out

    def summary(self, config_hash: str, seed: int) -> dict[str, Any]:
        data: dict[str, Any] = {
            "mode": self.mode,
            "config_hash": config_hash,
            "seed": seed,
            "steps": len(self.steps),
            "final_dimension": self.steps[-1].n if self.steps else 0,
            "fallback_steps": sum(1 for r in self.steps if r.fallback),
            "relinearization_steps": sum(
                1 for r in self.steps if r.relinearized_poses or r.relinearized_landmarks
            ),
            "timings": self.timing_summary(),
        }
        if self.cross_check:
            data["max_disagreement"] = max(
                (r.disagreement for r in self.steps if r.disagreement is not None), default=0.0
            )
        if self.mode == "active":
            data["decisions_agreed"] = self.decisions_agreed
            data["candidates_scored"] = len(self.candidates)
        if self.aborted:
            data["aborted"] = self.aborted
        return data

    # ------------------------------------------------------------------------
    # Files
    # ------------------------------------------------------------------------

    def write(self, out_dir: Path, config_hash: str, seed: int) -> list[Path]:
        """Write runlog.csv, timings.csv, candidates.csv (active) and summary.json."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = [
            _write_csv(
                out_dir / RUNLOG_FILE, RUNLOG_HEADER, self.runlog_columns(), self.runlog_rows()
            ),
            _write_csv(
                out_dir / TIMINGS_FILE,
                TIMINGS_HEADER,
                ["step"] + [f"{c}_seconds" for c in self.timing_columns],
                self.timing_rows(),
            ),
        ]
        if self.mode == "active":
            cols = [
                "step", "candidate", "target", "score", "distance", "path_length", "objective",
            ]
            written.append(
                _write_csv(
                    out_dir / CANDIDATES_FILE, CANDIDATES_HEADER, cols, self.candidate_rows()
                )
            )
        summary_path = out_dir / SUMMARY_FILE
        with open(summary_path, "w") as f:
            json.dump(self.summary(config_hash, seed), f, indent=2, sort_keys=True)
            f.write("\n")
        written.append(summary_path)
        return written


def _write_csv(path: Path, header: str, columns: list[str], rows: list[list[str]]) -> Path:
    with open(path, "w", newline="") as f:
        f.write(header + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)
    return path


def read_csv(path: Path) -> tuple[str, list[dict[str, str]]]:
    """(header comment, rows as dicts) of a file written by RunLog."""
    with open(path, newline="") as f:
        header = f.readline().rstrip("\n")
        return header, list(csv.DictReader(f))
