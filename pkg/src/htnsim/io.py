"""CSV/JSON serialization. Floats are written with 17 significant digits so files
round-trip exactly and are byte-identical across reruns."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, List, Sequence

from .engine import KIND_NAMES, EventTrace


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def atomic_write(path: str | Path, text: str) -> None:
    """Write-then-rename so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_csv(trace: EventTrace) -> str:
    N = trace.model.N
    header = ["t", "event_kind", "class", "j"]
    header += [f"Q_{i}" for i in range(1, N + 1)] + [f"Psi_{i}" for i in range(1, N + 1)] + ["busy"]
    busy = trace.busy

    def rows():
        for k in range(len(trace.times)):
            init = trace.kinds[k] == 0
            yield (
                [float(trace.times[k]), KIND_NAMES[trace.kinds[k]]]
                + (["", ""] if init else [int(trace.classes[k]), int(trace.indices[k])])
                + trace.Q[k].tolist()
                + trace.Psi[k].tolist()
                + [int(busy[k])]
            )

    return _csv_text(header, rows())


def customers_csv(trace: EventTrace) -> str:
    header = ["i", "j", "AT", "q_observed", "action", "RT", "WT", "post_horizon"]
    rows = (
        [r.i, r.j, r.at, r.q_observed, "join" if r.joined else "leave", r.rt, r.wt, int(r.post_horizon)]
        for r in trace.all_records()
    )
    return _csv_text(header, rows)


def dict_rows_csv(rows: List[dict]) -> str:
    if not rows:
        return ""
    header = list(rows[0])
    return _csv_text(header, ([row.get(k) for k in header] for row in rows))


def report_csv(report) -> str:
    return _csv_text(["metric", "n", "class", "quantile", "value"], report.rows)


def sde_csv(paths) -> str:
    N = paths[0].X.shape[1] if paths else 0
    header = ["path_id", "t"] + [f"X_{i}" for i in range(1, N + 1)] + ["L"] + [f"Q_{i}" for i in range(1, N + 1)]

    def rows():
        for pid, p in enumerate(paths):
            for k in range(len(p.t)):
                yield [pid, float(p.t[k])] + p.X[k].tolist() + [float(p.L[k])] + p.Q[k].tolist()

    return _csv_text(header, rows())


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
