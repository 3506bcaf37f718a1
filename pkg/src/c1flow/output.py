"""Writers for CSV time series, legacy ASCII VTK snapshots and SVG
convergence plots."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .c1space import Field
from .diagnostics import NORMS, RateTable

CSV_HEADER = ["step", "t"] + list(NORMS)


class OutputError(OSError):
    pass


def _open(path: Path, mode: str = "w"):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, mode, newline="")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from None


def write_csv(path, rows) -> Path:
    """``rows`` are (step, t, NormReport); t must be strictly increasing."""
    path = Path(path)
    last = -math.inf
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for step, t, rep in rows:
            if not t > last:
                raise ValueError(f"time series not increasing at step {step} (t = {t!r})")
            last = t
            w.writerow([step, repr(float(t))] + [repr(float(rep[n])) for n in NORMS])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_vtk(path, U: Field, title: str = "c1flow field") -> Path:
    """Legacy ASCII VTK 3.0 unstructured grid with vertex values ``u<a>`` and
    gradient magnitudes ``grad_u<a>`` for every component ``a``."""
    path = Path(path)
    S = U.space
    mesh = S.mesh
    nv = mesh.n_vertices
    blocks = U.blocks
    if S.dim == 1:
        vals = blocks[:, 0::2]
        gmag = np.abs(blocks[:, 1::2])
        pts = np.column_stack([mesh.vertices[:, 0], np.zeros(nv), np.zeros(nv)])
        cell_type, nper = 3, 2
    else:
        vals = blocks[:, 0:3 * nv:3]
        gmag = np.hypot(blocks[:, 1:3 * nv:3], blocks[:, 2:3 * nv:3])
        pts = np.column_stack([mesh.vertices, np.zeros(nv)])
        cell_type, nper = 5, 3
    nc = mesh.n_cells
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [" ".join(repr(float(c)) for c in p) for p in pts]
    lines.append(f"CELLS {nc} {nc * (nper + 1)}")
    lines += [f"{nper} " + " ".join(str(int(v)) for v in cell) for cell in mesh.cells]
    lines.append(f"CELL_TYPES {nc}")
    lines += [str(cell_type)] * nc
    lines.append(f"POINT_DATA {nv}")
    for a in range(U.m):
        for name, data in ((f"u{a}", vals[a]), (f"grad_u{a}", gmag[a])):
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [repr(float(x)) for x in data]
    with _open(path) as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_vtk_scalars(path) -> dict[str, np.ndarray]:
    """Point scalars of a file written by :func:`write_vtk`."""
    out: dict[str, list] = {}
    current = None
    lines = Path(path).read_text().splitlines()
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith("SCALARS"):
            current = line.split()[1]
            out[current] = []
            i += 2
            continue
        if current is not None:
            out[current].append(float(line))
        i += 1
    return {k: np.array(v) for k, v in out.items()}


_COLORS = {"l2": "#d62728", "h1_semi": "#1f77b4", "h2_broken": "#2ca02c", "l4": "#9467bd"}
_ORDERS = {"l2": 4, "h1_semi": 3, "h2_broken": 2}


def write_convergence_svg(path, table: RateTable, title: str = "error against 1/h") -> Path:
    """Log-log plot of error against 1/h: one polyline per norm and a dashed
    reference line of the expected slope (4, 3, 2) anchored at the finest point."""
    path = Path(path)
    norms = [n for n in table.rates if n in _ORDERS]
    inv_h = np.array([1.0 / h for h, _ in table.levels])
    errs = {n: np.array([rep[n] for _, rep in table.levels]) for n in norms}
    good = [v for n in norms for v in errs[n] if v > 0]
    if not good:
        raise ValueError("no positive errors to plot")
    W, H, pad = 640, 480, 60
    x0, x1 = math.log10(inv_h.min()) - 0.1, math.log10(inv_h.max()) + 0.1
    y0, y1 = math.log10(min(good)) - 0.5, math.log10(max(good)) + 0.5

    def px(x, y):
        return (pad + (math.log10(x) - x0) / (x1 - x0) * (W - 2 * pad),
                H - pad - (math.log10(y) - y0) / (y1 - y0) * (H - 2 * pad))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}">',
           f'<rect x="{pad}" y="{pad}" width="{W - 2 * pad}" height="{H - 2 * pad}" '
           'fill="none" stroke="black"/>',
           f'<text x="{W / 2}" y="{pad / 2}" text-anchor="middle">{title}</text>',
           f'<text x="{W / 2}" y="{H - pad / 4}" text-anchor="middle">1/h</text>']
    for n in norms:
        pts = [px(x, y) for x, y in zip(inv_h, errs[n]) if y > 0]
        out.append(f'<polyline class="data" fill="none" stroke="{_COLORS[n]}" points="'
                   + " ".join(f"{a:.2f},{b:.2f}" for a, b in pts) + '"/>')
    for i, n in enumerate(norms):
        p = _ORDERS[n]
        xe, ye = inv_h[-1], errs[n][-1]
        if ye <= 0:
            continue
        xs = inv_h[0]
        (a, b), (c, d) = px(xs, ye * (xe / xs) ** p), px(xe, ye)
        out.append(f'<line class="reference" x1="{a:.2f}" y1="{b:.2f}" x2="{c:.2f}" y2="{d:.2f}" '
                   f'stroke="{_COLORS[n]}" stroke-dasharray="6,4"/>')
        out.append(f'<text x="{W - pad + 5}" y="{pad + 20 * (i + 1)}" fill="{_COLORS[n]}" '
                   f'font-size="12">{n} (order {p})</text>')
    out.append("</svg>")
    with _open(path) as fh:
        fh.write("\n".join(out) + "\n")
    return path


def write_rate_csv(path, table: RateTable) -> Path:
    path = Path(path)
    names = list(table.rates)
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["h"] + names + [f"rate_{n}" for n in names])
        for h, rep, r in table.rows():
            w.writerow([repr(h)] + [repr(rep[n]) for n in names]
                       + ["" if r[n] is None else f"{r[n]:.6f}" for n in names])
    return path
