"""CSV/TSV/JSON outputs of an experiment run."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
from pathlib import Path

from .harness import ResultRow, Summary

RESULTS_HEADER = ("replication", "strategy", "env", "metric", "value")
SUMMARY_HEADER = ("strategy", "env", "mean", "sd", "n_ok", "n_failed")


def fmt(value) -> str:
    """Shortest round-trip text for floats; ints and strings unchanged."""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _table(header, rows, delimiter=",") -> str:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def results_csv(rows: list[ResultRow]) -> str:
    return _table(
        RESULTS_HEADER,
        ((r.replication, r.strategy.value, r.env, r.metric, float(r.value)) for r in rows),
    )


def summary_csv(summary: Summary) -> str:
    return _table(
        SUMMARY_HEADER,
        ((c.strategy.value, c.env, c.mean, c.sd, c.n_ok, c.n_failed) for c in summary.cells),
    )


def stability_csv(summary: Summary) -> str:
    return _table(
        ("strategy", "stability_error", "stability_error_sd", "replications"),
        (
            (s.value, rep.stability_error,
             float(rep.per_replication.std(ddof=1)) if rep.per_replication.size > 1 else float("nan"),
             int(rep.per_replication.size))
            for s, rep in summary.stability.items()
        ),
    )


def failures_csv(summary: Summary) -> str:
    return _table(
        ("replication", "strategy", "error"),
        ((f.replication, f.strategy.value, f.error) for f in summary.failures),
    )


def plotdata_tsv(summary: Summary, strategy) -> str:
    return _table(
        ("env", "mean", "sd"),
        ((c.env, c.mean, c.sd) for c in summary.cells if c.strategy is strategy),
        delimiter="\t",
    )


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_outputs(out_dir, rows, summary: Summary) -> dict[str, str]:
    """Write every output file; returns {file name: sha256 digest}."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "results.csv": results_csv(rows),
        "summary.csv": summary_csv(summary),
        "stability.csv": stability_csv(summary),
        "failures.csv": failures_csv(summary),
    }
    strategies = []
    for c in summary.cells:
        if c.strategy not in strategies:
            strategies.append(c.strategy)
    for s in strategies:
        files[f"plotdata-{s.value}.tsv"] = plotdata_tsv(summary, s)
    digests = {}
    for name, text in files.items():
        _atomic_write(out / name, text)
        digests[name] = hashlib.sha256(text.encode()).hexdigest()
    return digests


def write_manifest(out_dir, manifest: dict) -> Path:
    path = Path(out_dir) / "manifest.json"
    _atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
