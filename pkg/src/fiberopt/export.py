"""Field snapshots (legacy ASCII VTK) and iteration history (CSV)."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .orientation import element_angles

HISTORY_HEADER = ("step", "J_C", "g_W", "lambda", "Lambda", "max_dphi", "wall_ms")
_VTK_QUAD = 9


def _fmt(x):
    return "%.17g" % x


@dataclass(frozen=True)
class SnapshotFields:
    """Everything a snapshot writes; node fields (n,), element fields (m,)."""

    phi_VI: np.ndarray
    phi_VF: np.ndarray
    phi_IF: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    chi: np.ndarray  # (3, m) smoothed fractions
    theta: np.ndarray
    indeterminate: np.ndarray
    u_mag: np.ndarray

    @classmethod
    def from_state(cls, mesh, phi, orientation, evaluation):
        theta, flag = element_angles(orientation, mesh)
        u = evaluation.solve.u.reshape(-1, 2)
        u_mag = np.linalg.norm(u[mesh.elements], axis=2).mean(axis=1)
        return cls(phi.phi_VI, phi.phi_VF, phi.phi_IF, orientation.xi, orientation.eta,
                   evaluation.fractions, theta, flag, u_mag)


def _block(name, values):
    lines = [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    lines.extend(_fmt(v) for v in np.asarray(values, dtype=float))
    return lines


def vtk_text(mesh, fields):
    lines = ["# vtk DataFile Version 3.0", "fiberopt snapshot", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.n_nodes} double"]
    lines.extend(f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.coords)
    m = mesh.n_elements
    lines.append(f"CELLS {m} {5 * m}")
    lines.extend("4 " + " ".join(str(int(k)) for k in quad) for quad in mesh.elements)
    lines.append(f"CELL_TYPES {m}")
    lines.extend([str(_VTK_QUAD)] * m)
    lines.append(f"CELL_DATA {m}")
    for name, values in zip(("chi_V", "chi_I", "chi_F"), fields.chi):
        lines.extend(_block(name, values))
    lines.extend(_block("theta", fields.theta))
    lines.extend(_block("indeterminate", fields.indeterminate.astype(float)))
    lines.extend(_block("u_mag", fields.u_mag))
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    for name in ("phi_VI", "phi_VF", "phi_IF", "xi", "eta"):
        lines.extend(_block(name, getattr(fields, name)))
    return "\n".join(lines) + "\n"


def write_snapshot(directory, step, mesh, fields):
    """Write ``step_<N>.vtk``; identical inputs give identical bytes."""
    path = Path(directory) / f"step_{int(step)}.vtk"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(vtk_text(mesh, fields), encoding="ascii")
    return path


def read_vtk(path):
    """Minimal reader for files produced by :func:`write_snapshot`.

    Returns ``(points, cells, cell_data, point_data)``.
    """
    tokens = Path(path).read_text(encoding="ascii").split("\n")
    it = iter(tokens)
    points = cells = None
    cell_data, point_data = {}, {}
    target = None
    for line in it:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "POINTS":
            n = int(parts[1])
            points = np.array([[float(v) for v in next(it).split()] for _ in range(n)])
        elif parts[0] == "CELLS":
            n = int(parts[1])
            cells = np.array([[int(v) for v in next(it).split()[1:]] for _ in range(n)])
        elif parts[0] == "CELL_DATA":
            target, count = cell_data, int(parts[1])
        elif parts[0] == "POINT_DATA":
            target, count = point_data, int(parts[1])
        elif parts[0] == "SCALARS":
            next(it)  # lookup table line
            target[parts[1]] = np.array([float(next(it)) for _ in range(count)])
    return points, cells, cell_data, point_data


def write_history(path, history):
    """CSV of the optimisation history, one row per recorded step."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_HEADER)
        for row in history.rows():
            writer.writerow([row[0]] + [_fmt(v) for v in row[1:]])
    return path


def read_history(path):
    with Path(path).open(newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header)}


def save_design(path, phi, orientation):
    """Design fields in the ``.npz`` layout accepted as an initial design."""
    np.savez(path, phi_VI=phi.phi_VI, phi_VF=phi.phi_VF, phi_IF=phi.phi_IF,
             xi=orientation.xi, eta=orientation.eta)
    return Path(path)
