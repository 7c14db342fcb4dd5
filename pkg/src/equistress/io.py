"""Run artifacts: the run.csv log, VTK snapshots and the text summary.

The CSV schema is the exchange format consumed by the plotting frontend;
its header and column order are fixed.  Blank cells encode the absent
energy error and effectivity on records without an analytical solution.
VTK files use the legacy ASCII unstructured-grid format so they open in
ParaView without plugins.
"""

import csv

import numpy as np

from .adaptivity import RunLog, RunRecord
from .errors import ConfigurationError

CSV_FIELDS = ("loop", "k", "nu", "ncells", "eta_disc", "eta_lin",
              "eta_quad", "eta_osc", "total_bound", "energy_error",
              "ieff", "newton_residual", "wall_ms")
_INT_FIELDS = ("loop", "k", "nu", "ncells")
_OPTIONAL_FIELDS = ("energy_error", "ieff")


def write_run_csv(path, log):
    """Write every logged record of a run to CSV.

    Parameters
    ----------
    path : str or Path
    log : RunLog

    Floats are written with repr so the values round-trip exactly.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for r in log.records:
            row = []
            for name in CSV_FIELDS:
                value = getattr(r, name)
                if value is None:
                    row.append("")
                elif name in _INT_FIELDS:
                    row.append(str(int(value)))
                else:
                    row.append(repr(float(value)))
            writer.writerow(row)


def read_run_csv(path):
    """Read a run.csv back into a RunLog.

    The accepted flag is not stored in the file; it is reconstructed as
    the last record of each mesh loop, which is how the solve loop marks
    acceptance when writing.

    Raises
    ------
    ConfigurationError
        If the header does not match the run.csv schema.
    """
    log = RunLog()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_FIELDS:
            raise ConfigurationError(
                f"{path} is not a run.csv: unexpected header {header}")
        for row in reader:
            if len(row) != len(CSV_FIELDS):
                raise ConfigurationError(
                    f"{path}: row has {len(row)} fields, "
                    f"expected {len(CSV_FIELDS)}")
            kwargs = {}
            for name, cell in zip(CSV_FIELDS, row):
                if name in _INT_FIELDS:
                    kwargs[name] = int(cell)
                elif cell == "":
                    if name not in _OPTIONAL_FIELDS:
                        raise ConfigurationError(
                            f"{path}: blank value in column {name}")
                    kwargs[name] = None
                else:
                    kwargs[name] = float(cell)
            log.append(RunRecord(**kwargs))
    last = {}
    for i, r in enumerate(log.records):
        last[r.loop] = i
    for i in last.values():
        log.records[i].accepted = True
    return log


def write_vtk(path, mesh, displacement, cell_fields):
    """Write a mesh snapshot in legacy ASCII unstructured-grid format.

    Parameters
    ----------
    path : str or Path
    mesh : Mesh
    displacement : ndarray (nv, 2)
        Vertex displacements, written as 3-vectors with zero z.
    cell_fields : dict
        Scalar cellwise arrays of shape (nc,), written as CELL_DATA in
        insertion order.
    """
    displacement = np.asarray(displacement, dtype=float)
    if displacement.shape != (mesh.nv, 2):
        raise ValueError(
            f"displacement shape {displacement.shape}, "
            f"expected {(mesh.nv, 2)}")
    lines = [
        "# vtk DataFile Version 3.0",
        "equistress snapshot",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.nv} double",
    ]
    for x, y in mesh.vertices:
        lines.append(f"{float(x)!r} {float(y)!r} 0.0")
    lines.append(f"CELLS {mesh.nc} {4 * mesh.nc}")
    for a, b, c in mesh.cells:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {mesh.nc}")
    lines.extend(["5"] * mesh.nc)
    lines.append(f"POINT_DATA {mesh.nv}")
    lines.append("VECTORS displacement double")
    for ux, uy in displacement:
        lines.append(f"{float(ux)!r} {float(uy)!r} 0.0")
    if cell_fields:
        lines.append(f"CELL_DATA {mesh.nc}")
        for name, values in cell_fields.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (mesh.nc,):
                raise ValueError(
                    f"cell field {name} shape {values.shape}, "
                    f"expected {(mesh.nc,)}")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(repr(float(v)) for v in values)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _format_table(rows, headers):
    """Right-aligned plain-text table."""
    cells = [headers] + [[str(c) for c in row] for row in rows]
    widths = [max(len(row[j]) for row in cells) for j in range(len(headers))]
    out = []
    for row in cells:
        out.append("  ".join(c.rjust(w) for c, w in zip(row, widths)))
    return out


def write_summary(path, title, config_items, log, state):
    """Write the plain-text run summary.

    Parameters
    ----------
    path : str or Path
    title : str
        First line, e.g. 'adaptive_study: l_shape / hencky_mises'.
    config_items : sequence of (str, str)
        Echo of the resolved configuration.
    log : RunLog
    state : dict
        Final per-mesh state from the solve driver; provides the basic
        and split forms of the final bound.
    """
    lines = [title, ""]
    lines.append("configuration:")
    width = max((len(k) for k, _ in config_items), default=0)
    for key, value in config_items:
        lines.append(f"  {key.ljust(width)} = {value}")
    lines.append("")
    accepted = log.accepted()
    counts = log.newton_counts()
    lines.append("accepted meshes:")
    rows = []
    for r, count in zip(accepted, counts):
        row = [r.loop, r.ncells, r.nu, count,
               f"{r.eta_disc:.6e}", f"{r.eta_lin:.6e}",
               f"{r.eta_quad:.6e}", f"{r.eta_osc:.6e}",
               f"{r.total_bound:.6e}"]
        if r.energy_error is not None:
            row += [f"{r.energy_error:.6e}", f"{r.ieff:.4f}"]
        else:
            row += ["-", "-"]
        rows.append(row)
    headers = ["loop", "ncells", "nu", "newton", "eta_disc", "eta_lin",
               "eta_quad", "eta_osc", "bound", "error", "ieff"]
    lines.extend("  " + line for line in _format_table(rows, headers))
    lines.append("")
    glob = state["glob"]
    final = accepted[-1]
    lines.append(
        f"final mesh: {final.ncells} cells, quadrature degree "
        f"{final.nu}, {counts[-1]} Newton updates")
    lines.append(f"energy error bound, basic form: {state['bound']:.6e}")
    lines.append(f"energy error bound, split form: {glob.total:.6e}")
    lines.append(
        f"  eta_disc={glob.eta_disc:.6e}  eta_lin={glob.eta_lin:.6e}"
        f"  eta_quad={glob.eta_quad:.6e}  eta_osc={glob.eta_osc:.6e}")
    if final.energy_error is not None:
        lines.append(
            f"energy error (analytic): {final.energy_error:.6e}, "
            f"effectivity {final.ieff:.4f}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
