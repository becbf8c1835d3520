"""Writers for CSV tables, key-value text reports and legacy-VTK fields."""

import csv
from pathlib import Path

import numpy as np

from .mesh import write_vtk


def fmt(v):
    """Fixed textual form: floats as %.12e, None as an empty cell, booleans lowercase."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12e}"
    return str(v)


def write_csv(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def report_text(fields):
    """``key: value`` lines; a ``checks`` entry, if present, comes first."""
    items = dict(fields)
    lines = []
    if "checks" in items:
        lines.append(f"checks: {items.pop('checks')}")
    for k, v in items.items():
        if isinstance(v, (list, tuple)):
            v = " ".join(fmt(x) for x in v)
        lines.append(f"{k}: {fmt(v)}")
    return "\n".join(lines) + "\n"


def write_text(path, text):
    path = Path(path)
    path.write_text(text)
    return path


def nodal_values(f):
    """Values of a FeFunction at every mesh vertex (zero off its subdomain)."""
    dm = f.dofmap
    nv = dm.mesh.num_nodes
    dofs = np.array([dm.entity_dof(k) for k in range(nv)])
    on = dofs >= 0
    out = np.zeros((nv, dm.arity))
    for a in range(dm.arity):
        out[on, a] = f.component(a)[dofs[on]]
    return out[:, 0] if dm.arity == 1 else out


def write_state_vtk(path, state, title="coupled solution"):
    data = {name: nodal_values(getattr(state, name)) for name in ("u", "p", "phi_m", "phi_f")}
    write_vtk(path, state.spaces.mesh, data, title)
    return Path(path)
