"""Snapshot and diagnostics files.

Floats are written with 17 significant digits so that every binary double
round-trips exactly. Vertices are listed with the ``u`` index running fastest.
"""

from __future__ import annotations

import os

import numpy as np

from .geometry import ImmersionGrid

DIAGNOSTICS_HEADER = "step,t,dt,willmore_energy,min_a0sq,max_speed"


def fmt(x):
    return "%.17g" % x


def _open(path, mode="w"):
    try:
        return open(path, mode, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot open {path}: {exc}") from exc


def _flat(f: ImmersionGrid):
    # (nu, nv, n) -> rows ordered by v then u (u fastest)
    return f.points.transpose(1, 0, 2).reshape(-1, f.n)


def export_obj(f: ImmersionGrid, path):
    """Wavefront OBJ with periodic quad faces (R³ surfaces only)."""
    if f.n != 3:
        raise ValueError("OBJ export needs a surface in R³")
    nu, nv = f.nu, f.nv
    with _open(path) as fh:
        for x, y, z in _flat(f):
            fh.write(f"v {fmt(x)} {fmt(y)} {fmt(z)}\n")
        for j in range(nv):
            for i in range(nu):
                a = i + nu * j + 1
                b = (i + 1) % nu + nu * j + 1
                c = (i + 1) % nu + nu * ((j + 1) % nv) + 1
                d = i + nu * ((j + 1) % nv) + 1
                fh.write(f"f {a} {b} {c} {d}\n")


def export_csv(f: ImmersionGrid, path):
    """CSV ``u,v,x1,...,xn``, one row per grid point."""
    U, V = f.params()
    uv = np.stack([U.T.ravel(), V.T.ravel()], axis=1)
    rows = np.concatenate([uv, _flat(f)], axis=1)
    header = ",".join(["u", "v"] + [f"x{k + 1}" for k in range(f.n)])
    with _open(path) as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(fmt(x) for x in row) + "\n")


def read_csv(path) -> ImmersionGrid:
    """Inverse of :func:`export_csv`."""
    with _open(path, "r") as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["u", "v"] or len(header) < 4:
            raise ValueError(f"{path}: expected header u,v,x1,...")
        data = np.array([[float(x) for x in line.split(",")] for line in fh if line.strip()])
    n = len(header) - 2
    nu = int(np.sum(data[:, 1] == data[0, 1]))
    if nu == 0 or len(data) % nu:
        raise ValueError(f"{path}: rows do not form a grid")
    nv = len(data) // nu
    pts = data[:, 2:].reshape(nv, nu, n).transpose(1, 0, 2)
    return ImmersionGrid(pts)


def export_snapshot(f: ImmersionGrid, directory, step):
    """Write ``snap_<step>.csv`` (always) and ``snap_<step>.obj`` (R³ only); return the paths."""
    base = os.path.join(directory, f"snap_{step:06d}")
    paths = [base + ".csv"]
    export_csv(f, paths[0])
    if f.n == 3:
        paths.append(base + ".obj")
        export_obj(f, paths[1])
    return paths


class DiagnosticsWriter:
    """Streams diagnostics rows; a halt is recorded as a trailing ``# halt:`` comment."""

    def __init__(self, path):
        self.path = path
        self.fh = _open(path)
        self.fh.write(DIAGNOSTICS_HEADER + "\n")

    def row(self, step, t, dt, energy, min_a0sq, max_speed):
        self.fh.write(",".join([str(int(step))] + [fmt(x) for x in (t, dt, energy, min_a0sq, max_speed)]) + "\n")

    def halt(self, reason, message=""):
        self.fh.write(f"# halt: {reason}" + (f" ({message})" if message else "") + "\n")

    def close(self):
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_diagnostics(rows, path, halt_reason=None):
    with DiagnosticsWriter(path) as w:
        for r in rows:
            w.row(*r)
        if halt_reason:
            w.halt(halt_reason)


def read_diagnostics(path):
    """Rows as a float array plus the halt reason (``None`` if the run finished)."""
    rows, halt = [], None
    with _open(path, "r") as fh:
        header = fh.readline().strip()
        if header != DIAGNOSTICS_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in fh:
            if line.startswith("# halt:"):
                halt = line[len("# halt:"):].strip().split(" ")[0]
            elif line.strip():
                rows.append([float(x) for x in line.split(",")])
    return np.array(rows).reshape(-1, 6), halt


def write_table(path, header, rows):
    with _open(path) as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(fmt(x) if isinstance(x, float) else str(x) for x in r) + "\n")
