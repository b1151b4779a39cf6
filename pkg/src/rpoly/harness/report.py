"""Report text, CSV formatting and atomic artifact writing."""
from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class Result:
    """One reported check; ``passed`` is None for purely informative lines."""

    name: str
    passed: bool | None
    detail: str = ""


def fmt(x) -> str:
    """Decimal text for CSV cells: floats with 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def emit_report(results: Sequence[Result], title: str = "rpoly") -> dict[str, str]:
    """Human-readable summary and a machine CSV of the same checks.

    Returns
    -------
    dict
        ``{"report.txt": summary, "checks.csv": csv}``.  An empty result list
        gives a header-only summary and a header-only CSV.
    """
    lines = [f"# {title}"]
    for r in results:
        tag = "INFO" if r.passed is None else ("PASS" if r.passed else "FAIL")
        lines.append(f"{tag} {r.name}" + (f": {r.detail}" if r.detail else ""))
    rows = [(r.name, "" if r.passed is None else int(r.passed), r.detail) for r in results]
    return {
        "report.txt": "\n".join(lines) + "\n",
        "checks.csv": csv_text(("check", "passed", "detail"), rows),
    }


def write_atomic(path: Path, data: str | bytes) -> None:
    """Write to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_artifacts(out_dir: Path, artifacts: Mapping[str, str | bytes]) -> list[Path]:
    """Write every artifact atomically, in name order."""
    out = []
    for name in sorted(artifacts):
        p = Path(out_dir) / name
        write_atomic(p, artifacts[name])
        out.append(p)
    return out
