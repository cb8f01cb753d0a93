"""Results tables, per-run records, aggregate CSV and embedding dumps."""
from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import torch

from .refine import ALL_MODULES, canonical_name, display_name
from .train import RunResult, aggregate

#: row order of the results table; unknown base models follow in order of appearance
BASE_ORDER = ["FM", "DeepFM", "DeepFM(2)", "CN", "DCN", "DCN(2)", "AFN", "AFN+", "AFN+(2)",
              "CN2", "DCNV2", "DCNV2(2)"]

AGGREGATE_COLUMNS = ["model_name", "dataset", "mean_auc", "std_auc", "mean_logloss",
                     "std_logloss", "n_runs", "params", "seconds_per_epoch"]


class ReportError(ValueError):
    pass


def split_model_name(name: str) -> tuple[str, str]:
    """``"DeepFM(2)_SENET"`` -> ``("DeepFM(2)", "SENET")``; a bare base name is its SKIP cell."""
    row, _, col = name.partition("_")
    return row, (col or "SKIP")


def _canon(col: str) -> str:
    try:
        return "+".join(canonical_name(c) for c in col.split("+"))
    except KeyError:
        return col


def _column_label(col: str) -> str:
    try:
        return "+".join(display_name(c) for c in col.split("+"))
    except KeyError:
        return col


@dataclass
class ResultsTable:
    """Mean test AUC per (base model, FR module) with the average relative lift per column."""

    rows: list
    columns: list
    cells: dict = field(default_factory=dict)

    @classmethod
    def from_cells(cls, cells: Mapping[tuple[str, str], float], rows: Sequence[str] | None = None,
                   columns: Sequence[str] | None = None) -> "ResultsTable":
        cells = {(r, _canon(c)): float(v) for (r, c), v in cells.items()}
        if rows is None:
            seen = list(dict.fromkeys(r for r, _ in cells))
            rows = [r for r in BASE_ORDER if r in seen] + [r for r in seen if r not in BASE_ORDER]
        if columns is None:
            seen = list(dict.fromkeys(c for _, c in cells))
            known = [c for c in ALL_MODULES if c in seen]
            columns = known + [c for c in seen if c not in known]
        return cls(list(rows), [_canon(c) for c in columns], cells)

    @classmethod
    def from_runs(cls, runs: Iterable[RunResult], **kw) -> "ResultsTable":
        by_name = defaultdict(list)
        for r in runs:
            by_name[r.model_name].append(r.test_auc)
        return cls.from_cells({split_model_name(n): aggregate(v)[0] for n, v in by_name.items()}, **kw)

    def baseline(self, row: str) -> float | None:
        """SKIP cell of ``row``; a two-module row shares its base model's baseline."""
        if (row, "SKIP") in self.cells:
            return self.cells[(row, "SKIP")]
        return self.cells.get((row.removesuffix("(2)"), "SKIP"))

    def average_improvement(self) -> dict[str, float | None]:
        """Per column: mean over rows of ``aug / skip - 1`` (a fraction, not a percentage)."""
        if "SKIP" not in self.columns:
            raise ReportError("no SKIP column: the average improvement needs a baseline")
        out = {}
        for col in self.columns:
            if col == "SKIP":
                out[col] = None
                continue
            lifts = [self.cells[(r, col)] / b - 1.0 for r in self.rows
                     if (r, col) in self.cells and (b := self.baseline(r))]
            out[col] = float(np.mean(lifts)) if lifts else None
        return out

    def _grid(self, digits: int = 4, improvement: bool = True) -> list[list[str]]:
        grid = [["Modules"] + [_column_label(c) for c in self.columns]]
        for r in self.rows:
            vals = [self.baseline(r) if c == "SKIP" else self.cells.get((r, c)) for c in self.columns]
            grid.append([r] + ["" if v is None else f"{v:.{digits}f}" for v in vals])
        if improvement:
            imp = self.average_improvement()
            grid.append(["Ave.Imp"] + ["-" if imp[c] is None else f"{100 * imp[c]:.2f}%"
                                       for c in self.columns])
        return grid

    def to_csv(self, digits: int = 4, improvement: bool = True) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self._grid(digits, improvement))
        return buf.getvalue()

    def to_markdown(self, digits: int = 4, improvement: bool = True) -> str:
        grid = self._grid(digits, improvement)
        lines = ["| " + " | ".join(grid[0]) + " |", "|" + "---|" * len(grid[0])]
        lines += ["| " + " | ".join(row) + " |" for row in grid[1:]]
        return "\n".join(lines) + "\n"


def emit_results_table(results, out_dir: str | Path | None = None, stem: str = "results",
                       digits: int = 4, improvement: bool = True) -> ResultsTable:
    """Build the table from RunResults or a ``{(row, col): auc}`` mapping; optionally write CSV + markdown.

    With ``improvement`` the files carry the Ave.Imp row, which needs a SKIP column.
    """
    if isinstance(results, Mapping):
        table = ResultsTable.from_cells(results)
    else:
        table = ResultsTable.from_runs(results)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.csv").write_text(table.to_csv(digits, improvement))
        (out / f"{stem}.md").write_text(table.to_markdown(digits, improvement))
    return table


# -- run records --------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def run_record(result: RunResult, dataset: str = "", extra: dict | None = None) -> dict:
    return _jsonable({"dataset": dataset, **result.to_dict(), **(extra or {})})


def write_run_json(result: RunResult, path: str | Path, dataset: str = "",
                   extra: dict | None = None) -> dict:
    rec = run_record(result, dataset, extra)
    Path(path).write_text(json.dumps(rec, indent=2) + "\n")
    return rec


def load_run_json(path: str | Path) -> RunResult:
    rec = json.loads(Path(path).read_text())
    keep = {k: rec[k] for k in RunResult.__dataclass_fields__ if k in rec}
    for k in ("best_valid_auc", "test_auc", "test_logloss"):
        if keep.get(k) is None:
            keep[k] = float("nan")
    return RunResult(**keep)


def aggregate_rows(runs: Iterable[RunResult], dataset: str = "") -> list[dict]:
    groups = defaultdict(list)
    for r in runs:
        groups[r.model_name].append(r)
    rows = []
    for name, rs in groups.items():
        mean_auc, std_auc = aggregate([r.test_auc for r in rs])
        mean_ll, std_ll = aggregate([r.test_logloss for r in rs])
        rows.append({"model_name": name, "dataset": dataset, "mean_auc": mean_auc,
                     "std_auc": std_auc, "mean_logloss": mean_ll, "std_logloss": std_ll,
                     "n_runs": len(rs), "params": rs[0].params,
                     "seconds_per_epoch": float(np.mean([r.seconds_per_epoch for r in rs]))})
    return rows


def write_aggregate_csv(runs: Iterable[RunResult], path: str | Path, dataset: str = "") -> list[dict]:
    rows = aggregate_rows(runs, dataset)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=AGGREGATE_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return rows


# -- embedding dumps ------------------------------------------------------------

def export_refined_embeddings(module: torch.nn.Module, table: torch.Tensor | torch.nn.Module,
                              instances: np.ndarray, feature_id: int, n: int,
                              path: str | Path | None = None, delimiter: str = "\t") -> str:
    """Dump the original embedding of ``feature_id`` and its refined rows in ``n`` instances.

    ``table`` is either an embedding module mapping ids to ``(B, F, D)`` or a raw
    ``(M, D)`` weight matrix. Instances are taken in order among those that
    contain the feature.
    """
    x = np.asarray(instances)
    hits = np.argwhere(x == feature_id)
    if len(hits) == 0:
        raise ReportError(f"feature {feature_id} does not occur in the sampled instances")
    k = int(hits[0, 1])
    rows = hits[hits[:, 1] == k, 0][:n]
    if len(rows) < n:
        raise ReportError(f"feature {feature_id} occurs in only {len(rows)} instances, {n} requested")

    def lookup(ids):
        ids = torch.as_tensor(ids, dtype=torch.long)
        return table(ids) if isinstance(table, torch.nn.Module) else table[ids]

    was_training = module.training
    module.eval()
    with torch.no_grad():
        original = lookup(np.array([[feature_id]]))[0, 0]
        refined = module(lookup(x[rows]))[:, k] if len(rows) else original.new_empty(0, len(original))
    module.train(was_training)
    dim = original.numel()
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(["kind", "instance", "field", "feature"] + [f"d{j}" for j in range(dim)])
    w.writerow(["original", "", k, feature_id] + [repr(float(v)) for v in original])
    for i, vec in zip(rows, refined):
        w.writerow(["refined", int(i), k, feature_id] + [repr(float(v)) for v in vec])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
