"""CSV records and legacy VTK output."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .driver import IterationRecord

VTK_TETRA = 10
CSV_FIELDS = IterationRecord.csv_fields()
_INT_FIELDS = {"iter", "ndofs", "ncells", "lambda_max", "n_marked", "n_refined", "cg_iters"}


def _fmt(value):
    # repr gives the shortest string that round-trips a float
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(int(value))


def record_row(rec):
    return [_fmt(getattr(rec, k)) for k in CSV_FIELDS]


def _open_out(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline="", encoding="utf-8")


def write_csv(records, path):
    """Write iteration records with a header row."""
    try:
        with _open_out(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_FIELDS)
            for rec in records:
                w.writerow(record_row(rec))
    except OSError as exc:
        raise OSError(f"cannot write CSV file {path}: {exc}") from exc


def write_joined_csv(runs, path):
    """Write several labelled runs into one CSV with a leading ``method`` column."""
    try:
        with _open_out(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method"] + CSV_FIELDS)
            for label, records in runs:
                for rec in records:
                    w.writerow([label] + record_row(rec))
    except OSError as exc:
        raise OSError(f"cannot write CSV file {path}: {exc}") from exc


def read_csv(path):
    """Parse a file written by :func:`write_csv` back into records.

    A leading ``method`` column, if present, is returned alongside:
    the result is a list of records or of ``(method, record)`` pairs.
    """
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            kw = {k: (int(row[k]) if k in _INT_FIELDS else float(row[k])) for k in CSV_FIELDS}
            rec = IterationRecord(**kw)
            out.append((row["method"], rec) if "method" in row else rec)
    return out


def write_vtk(path, coords, tets, point_data=None, cell_data=None, title="avem3d mesh"):
    """Legacy ASCII VTK 3.0 unstructured grid of 4-node tetrahedra.

    ``point_data`` and ``cell_data`` map names to 1D arrays.
    """
    coords = np.asarray(coords, dtype=float)
    tets = np.asarray(tets, dtype=np.int64)
    n, m = len(coords), len(tets)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {n} double"]
    lines += [f"{x!r} {y!r} {z!r}" for x, y, z in coords.tolist()]
    lines.append(f"CELLS {m} {5 * m}")
    lines += [f"4 {a} {b} {c} {d}" for a, b, c, d in tets.tolist()]
    lines.append(f"CELL_TYPES {m}")
    lines += [str(VTK_TETRA)] * m

    def block(kind, count, data):
        if not data:
            return
        lines.append(f"{kind} {count}")
        for name, vals in data.items():
            vals = np.asarray(vals)
            if len(vals) != count:
                raise ValueError(f"{kind.lower()} field {name!r} has {len(vals)} values, expected {count}")
            typ = "int" if np.issubdtype(vals.dtype, np.integer) else "double"
            lines.append(f"SCALARS {name} {typ} 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(repr(v) if typ == "double" else str(v) for v in vals.tolist())

    block("POINT_DATA", n, point_data)
    block("CELL_DATA", m, cell_data)
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc


def write_solution_vtk(path, snap, u, eta2_local):
    """Solution, local indicators and the largest vertex global index of every leaf."""
    write_vtk(path, snap.coords, snap.verts,
              point_data={"solution": np.asarray(u, dtype=float)},
              cell_data={"eta2": np.asarray(eta2_local, dtype=float),
                         "lambda_max": snap.lam[snap.verts].max(axis=1).astype(np.int64)})


def read_vtk_counts(path):
    """Declared and actual sizes of a legacy VTK file, for structural checks."""
    tokens = Path(path).read_text(encoding="utf-8").split("\n")
    info = {}
    i = 0
    while i < len(tokens):
        t = tokens[i].split()
        if t and t[0] == "POINTS":
            info["points"] = int(t[1])
            info["point_rows"] = tokens[i + 1:i + 1 + int(t[1])]
        elif t and t[0] == "CELLS":
            info["cells"] = int(t[1])
            info["cell_size"] = int(t[2])
            info["cell_rows"] = tokens[i + 1:i + 1 + int(t[1])]
        elif t and t[0] == "CELL_TYPES":
            info["cell_types"] = [int(x) for x in tokens[i + 1:i + 1 + int(t[1])]]
        i += 1
    return info
