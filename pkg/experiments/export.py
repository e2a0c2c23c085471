# experiments/export.py
import csv
import json
from pathlib import Path

import numpy as np

from model.units import concentration_to_count

TRACE_HEADER = ["time_s", "value_nM", "value_molecules", "stderr"]


def trace_rows(output) -> list:
    trace = output.trace
    molecules = concentration_to_count(trace.values, output.volume)
    stderr = output.stderr if output.stderr is not None else np.full(len(trace), np.nan)
    return [
        [repr(float(t)), repr(float(c)), repr(float(n)), "" if np.isnan(e) else repr(float(e))]
        for t, c, n, e in zip(trace.times(), trace.values, molecules, stderr)
    ]


def write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def write_json(path: Path, payload):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_plain) + "\n", encoding="utf-8")


def _plain(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def export_result(result, out_dir, manifest=None) -> list:
    """
    Write every trace and table of a run, its summary and checks, and the manifest.

    Returns:
        list: Paths written, in order.
    """
    out = Path(out_dir)
    written = []
    for key, output in result.traces.items():
        path = out / f"{result.name}_{key}.csv"
        write_csv(path, TRACE_HEADER, trace_rows(output))
        written.append(path)
    for key, (header, rows) in result.tables.items():
        path = out / f"{result.name}_{key}.csv"
        write_csv(path, header, [[repr(v) if isinstance(v, float) else v for v in row] for row in rows])
        written.append(path)
    summary = {
        "summary": result.summary,
        "checks": [{"name": c.name, "passed": c.passed, "required": c.required, "detail": c.detail} for c in result.checks],
    }
    path = out / f"{result.name}_summary.json"
    write_json(path, summary)
    written.append(path)
    if manifest is not None:
        path = out / "manifest.json"
        write_json(path, manifest)
        written.append(path)
    return written
