import math

import numpy as np
import pytest

from avem3d.driver import IterationRecord
from avem3d.io import (CSV_FIELDS, read_csv, read_vtk_counts, write_csv, write_joined_csv,
                       write_solution_vtk, write_vtk)
from avem3d.fichera import fichera_problem
from avem3d.mesh import MeshForest


def _records():
    return [IterationRecord(0, 26, 42, 0.8, 1.2345678901234567, 0.01, 0, 10, 30, 0),
            IterationRecord(1, 40, 72, 0.1 + 0.2, 1e-300, 0.0, 2, 5, 11, 17, qo_residual=3e-12)]


def test_csv_round_trip(tmp_path):
    path = tmp_path / "out" / "run.csv"
    write_csv(_records(), path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == CSV_FIELDS
    back = read_csv(path)
    assert back == _records()
    assert back[1].h1err == 0.1 + 0.2  # bit-exact floats


def test_joined_csv(tmp_path):
    path = tmp_path / "cmp.csv"
    recs = _records()
    write_joined_csv([("afem", recs[:1]), ("avem", recs)], path)
    back = read_csv(path)
    assert [m for m, _ in back] == ["afem", "avem", "avem"]
    assert [r for _, r in back] == recs[:1] + recs


def test_csv_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        write_csv(_records(), blocker / "sub" / "run.csv")


def test_vtk_structure(tmp_path):
    p = fichera_problem(0.5)
    snap = MeshForest.from_cubes(p.cubes).snapshot()
    u = p.u_exact(snap.coords)
    path = tmp_path / "mesh.vtk"
    write_solution_vtk(path, snap, u, np.arange(snap.n_elements, dtype=float))
    info = read_vtk_counts(path)
    assert info["points"] == 26 and len(info["point_rows"]) == 26
    assert info["cells"] == 42 and info["cell_size"] == 5 * 42
    assert info["cell_types"] == [10] * 42
    for row, v in zip(info["cell_rows"], snap.verts):
        assert [int(x) for x in row.split()] == [4, *v.tolist()]
    X = np.array([[float(x) for x in r.split()] for r in info["point_rows"]])
    assert np.array_equal(X, snap.coords)
    text = path.read_text()
    for key in ("POINT_DATA 26", "SCALARS solution double 1", "CELL_DATA 42", "SCALARS eta2 double 1",
                "SCALARS lambda_max int 1"):
        assert key in text


def test_vtk_rejects_bad_field(tmp_path):
    with pytest.raises(ValueError):
        write_vtk(tmp_path / "x.vtk", np.zeros((4, 3)), [[0, 1, 2, 3]], point_data={"u": np.zeros(3)})


def test_nan_qo_not_written(tmp_path):
    path = tmp_path / "r.csv"
    write_csv(_records(), path)
    assert "qo_residual" not in path.read_text()
    assert math.isnan(read_csv(path)[0].qo_residual)
