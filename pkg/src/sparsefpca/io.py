"""Panel CSV files, fit artifacts and deterministic JSON reports."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import PanelParseError
from .model import SparsePanel

PANEL_HEADER = ("subject", "t", "y")


# --------------------------------------------------------------------------
# panels
# --------------------------------------------------------------------------


def write_panel_csv(panel, path):
    """Write one row per observation, sorted by (subject, t).

    Floats are written with ``repr`` so reading the file back reproduces
    every value exactly.
    """
    rows = []
    for label, t, y in zip(panel.labels, panel.times, panel.values):
        order = np.argsort(t, kind="stable")
        rows.extend((label, float(t[k]), float(y[k])) for k in order)
    rows.sort(key=lambda r: (_sort_key(r[0]), r[1]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PANEL_HEADER)
        for label, t, y in rows:
            w.writerow((label, repr(t), repr(y)))


def _sort_key(label):
    return (0, label, "") if isinstance(label, (int, np.integer)) else (1, 0, str(label))


def _parse_float(text, name, line):
    try:
        x = float(text)
    except ValueError:
        raise PanelParseError(f"cannot parse {name} value {text!r} as a number", line) from None
    if not math.isfinite(x):
        raise PanelParseError(f"{name} value {text!r} is not finite", line)
    return x


def read_panel_csv(path, interval=(0.0, 1.0)):
    """Read a panel written in the ``subject,t,y`` format.

    Subjects keep their order of first appearance; observations within a
    subject are sorted by time. Integer-looking subject identifiers become
    ints.

    Raises
    ------
    PanelParseError
        With the offending line number for an empty file, a bad header, a
        malformed row or a time outside ``interval``.
    """
    a, b = map(float, interval)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelParseError("empty file: expected header 'subject,t,y'", 1) from None
        if tuple(h.strip() for h in header) != PANEL_HEADER:
            raise PanelParseError(f"expected header 'subject,t,y', found {','.join(header)!r}", 1)
        groups = {}
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise PanelParseError(f"expected 3 fields, found {len(row)}", line)
            label = row[0].strip()
            if not label:
                raise PanelParseError("missing subject identifier", line)
            t = _parse_float(row[1], "t", line)
            y = _parse_float(row[2], "y", line)
            if not a <= t <= b:
                raise PanelParseError(f"time {t!r} outside the domain [{a}, {b}]", line)
            groups.setdefault(label, []).append((t, y))
    if not groups:
        raise PanelParseError("no observations after the header", 2)
    labels, times, values = [], [], []
    for label, obs in groups.items():
        obs.sort(key=lambda p: p[0])
        labels.append(int(label) if label.lstrip("-").isdigit() else label)
        times.append(np.array([p[0] for p in obs]))
        values.append(np.array([p[1] for p in obs]))
    return SparsePanel(times, values, (a, b), labels=labels)


# --------------------------------------------------------------------------
# JSON and CSV reports
# --------------------------------------------------------------------------


def jsonable(obj):
    """Convert numpy scalars/arrays and tuples into plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj):
    """Deterministic JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj), encoding="utf-8")


def write_rows_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


# --------------------------------------------------------------------------
# fit artifacts
# --------------------------------------------------------------------------


def write_fit_artifacts(fit, outdir, extra_metadata=None):
    """Write mean, covariance, eigenvalues, eigenfunctions and run metadata under ``outdir``.

    Returns the list of written paths.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    nodes = fit.mean.grid.nodes
    paths = []

    p = out / "mean.csv"
    write_rows_csv(p, ("t", "mu"), zip(nodes, fit.mean.values))
    paths.append(p)

    p = out / "covariance.csv"
    C = fit.covariance.values
    G = nodes.size
    write_rows_csv(p, ("u", "v", "value"), ((nodes[i], nodes[j], C[i, j]) for i in range(G) for j in range(G)))
    paths.append(p)

    p = out / "eigenvalues.json"
    write_json(
        p,
        {
            "eigenvalues": fit.eigen.values,
            "negative": fit.eigen.negative,
            "any_negative": bool(np.any(fit.eigen.negative)),
        },
    )
    paths.append(p)

    for j in range(1, fit.eigen.j0 + 1):
        p = out / f"eigenfunction_{j}.csv"
        write_rows_csv(p, ("t", "psi"), zip(nodes, fit.eigen.functions[j - 1]))
        paths.append(p)

    meta = fit.metadata()
    if extra_metadata:
        meta.update(extra_metadata)
    p = out / "metadata.json"
    write_json(p, meta)
    paths.append(p)
    return paths
