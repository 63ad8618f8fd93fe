"""Experiment report assembly and emission.

The report mirrors the shapes a reader would want to tabulate or plot:
a detector-metrics table, one attack-summary row per (model, category,
variant) cell, per-cell fitness quartiles for box plots, the most-added
feature ranking, per-generation best-fitness trajectories, and the raw
per-sample records.  Emission is byte-stable: same report in, same bytes
out, with floats written via repr().
"""

import csv
import dataclasses
import io
import json
import os
from dataclasses import dataclass, field


class ReportError(ValueError):
    pass


@dataclass
class AttackRecord:
    """One attacked sample under one (model, category, variant) cell."""

    app_id: str
    model: str
    category: str           # "S1" / "S2"
    variant: str             # "baseline" / "excluded" / "distilled"
    success: bool
    num_added: int
    added_features: list     # vocabulary names of the added bits
    query_count: int
    generations_run: int
    final_proba: float
    fitness_trajectory: list


@dataclass
class CellSummary:
    model: str
    category: str
    variant: str
    attacked: int
    skipped: int             # held-out malware already classified benign
    successes: int
    success_rate: float
    mean_num: float | None   # over successful attacks; None if none succeeded
    fitness_quartiles: list  # [min, q1, median, q3, max] of final best fitness
    most_added: list         # [(feature_name, count), ...] descending


@dataclass
class ExperimentReport:
    master_seed: int
    detector_metrics: dict = field(default_factory=dict)  # kind -> metrics dict
    importance: dict = field(default_factory=dict)        # category -> value
    selected_categories: list = field(default_factory=list)
    distill: dict = field(default_factory=dict)
    cells: list = field(default_factory=list)
    records: list = field(default_factory=list)

    def check_consistency(self):
        """success_rate recomputed from records must equal the aggregate."""
        for cell in self.cells:
            recs = [r for r in self.records
                    if (r.model, r.category, r.variant) == (cell.model, cell.category, cell.variant)]
            if len(recs) != cell.attacked:
                raise ReportError(
                    f"cell {cell.model}/{cell.category}/{cell.variant}: "
                    f"{len(recs)} records but attacked={cell.attacked}")
            successes = sum(r.success for r in recs)
            if successes != cell.successes:
                raise ReportError(
                    f"cell {cell.model}/{cell.category}/{cell.variant}: "
                    f"recomputed successes {successes} != {cell.successes}")
            expected = successes / cell.attacked if cell.attacked else 0.0
            if expected != cell.success_rate:
                raise ReportError(
                    f"cell {cell.model}/{cell.category}/{cell.variant}: "
                    f"success_rate {cell.success_rate} != recomputed {expected}")

    def to_json(self) -> str:
        payload = {
            "master_seed": self.master_seed,
            "detector_metrics": self.detector_metrics,
            "importance": self.importance,
            "selected_categories": list(self.selected_categories),
            "distill": self.distill,
            "cells": [dataclasses.asdict(c) for c in self.cells],
            "records": [dataclasses.asdict(r) for r in self.records],
        }
        return json.dumps(payload, sort_keys=True, indent=2)


def summarize_cell(model: str, category: str, variant: str,
                   records: list, skipped: int) -> CellSummary:
    """Aggregate one (model, category, variant) cell from its records."""
    successes = sum(r.success for r in records)
    nums = [r.num_added for r in records if r.success]
    finals = sorted(r.fitness_trajectory[-1] for r in records if r.fitness_trajectory)
    quartiles = _quartiles(finals)
    counts = {}
    for r in records:
        if not r.success:
            continue
        for name in r.added_features:
            counts[name] = counts.get(name, 0) + 1
    most_added = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return CellSummary(
        model=model, category=category, variant=variant,
        attacked=len(records), skipped=skipped, successes=successes,
        success_rate=successes / len(records) if records else 0.0,
        mean_num=sum(nums) / len(nums) if nums else None,
        fitness_quartiles=quartiles,
        most_added=most_added,
    )


def _quartiles(sorted_values: list) -> list:
    if not sorted_values:
        return []
    def q(p):
        # linear interpolation between closest ranks
        pos = p * (len(sorted_values) - 1)
        lo = int(pos)
        hi = min(lo + 1, len(sorted_values) - 1)
        return sorted_values[lo] + (pos - lo) * (sorted_values[hi] - sorted_values[lo])
    return [q(0.0), q(0.25), q(0.5), q(0.75), q(1.0)]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv_table(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def emit_report(report: ExperimentReport, out_dir: str, formats=("json", "csv")) -> list:
    """Write the report files; returns the paths written."""
    report.check_consistency()
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def put(name, text):
        path = os.path.join(out_dir, name)
        try:
            with open(path, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise ReportError(f"cannot write report file {path}: {exc}") from exc
        written.append(path)

    if "json" in formats:
        put("report.json", report.to_json() + "\n")
        lines = [json.dumps(dataclasses.asdict(r), sort_keys=True) for r in report.records]
        put("records.jsonl", "".join(line + "\n" for line in lines))

    if "csv" in formats:
        put("detectors.csv", _csv_table(
            ["model", "accuracy", "precision", "recall"],
            [[kind, m.get("accuracy"), m.get("precision"), m.get("recall")]
             for kind, m in sorted(report.detector_metrics.items())]))

        cells = sorted(report.cells, key=lambda c: (c.model, c.category, c.variant))
        put("attack_results.csv", _csv_table(
            ["model", "category", "variant", "attacked", "skipped",
             "successes", "success_rate", "mean_num"],
            [[c.model, c.category, c.variant, c.attacked, c.skipped,
              c.successes, c.success_rate, c.mean_num] for c in cells]))

        put("fitness_boxplot.csv", _csv_table(
            ["model", "category", "variant", "min", "q1", "median", "q3", "max"],
            [[c.model, c.category, c.variant, *c.fitness_quartiles]
             for c in cells if c.fitness_quartiles]))

        put("most_added.csv", _csv_table(
            ["model", "category", "variant", "rank", "feature", "count"],
            [[c.model, c.category, c.variant, rank, name, count]
             for c in cells
             for rank, (name, count) in enumerate(c.most_added, start=1)]))

        records = sorted(report.records, key=lambda r: (r.model, r.category, r.variant, r.app_id))
        put("fitness_trajectory.csv", _csv_table(
            ["model", "category", "variant", "app_id", "generation", "best_fitness"],
            [[r.model, r.category, r.variant, r.app_id, g, f]
             for r in records
             for g, f in enumerate(r.fitness_trajectory)]))

    return written
