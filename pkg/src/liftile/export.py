"""File exports of a generatrix: OBJ surface mesh, per-cell CSV table, SVG tiling snapshot."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull

from .errors import UnsupportedDim
from .lift import Generatrix

FORMATS = {"mesh": ".obj", "table": ".csv", "snapshot": ".svg"}


def _ccw(points: np.ndarray) -> np.ndarray:
    """Indices of planar points sorted counterclockwise around their mean."""
    c = points.mean(axis=0)
    return np.argsort(np.arctan2(points[:, 1] - c[1], points[:, 0] - c[0]))


def _g(x) -> str:
    return format(float(x), ".17g")


def mesh_obj(gen: Generatrix) -> str:
    """Graph of G over a planar patch, each cell fanned from its lifted center."""
    cx = gen.patch.complex
    if cx.dim != 2:
        raise UnsupportedDim(f"surface mesh needs d = 2, got d = {cx.dim}")
    heights = np.full(len(cx.vertices), np.nan)
    for i, ids in enumerate(cx.cell_vertex_ids):
        heights[ids] = gen.lifted[i](cx.vertices[ids])
    lines = [f"# lifted surface: {len(cx.cells)} cells"]
    lines += [f"v {_g(x)} {_g(y)} {_g(z)}" for (x, y), z in zip(cx.vertices.tolist(), heights.tolist())]
    nv = len(cx.vertices)
    for i, cell in enumerate(cx.cells):
        c = cell.centroid
        lines.append(f"v {_g(c[0])} {_g(c[1])} {_g(gen.lifted[i](c))}")
    for i, ids in enumerate(cx.cell_vertex_ids):
        ring = ids[_ccw(cx.vertices[ids])]
        apex = nv + i + 1
        lines.append(f"g cell{i}")
        for a, b in zip(ring, np.roll(ring, -1)):
            lines.append(f"f {apex} {int(a) + 1} {int(b) + 1}")
    return "\n".join(lines) + "\n"


def table_csv(gen: Generatrix) -> str:
    d = gen.patch.dim
    header = ["cell"] + [f"coord_{k}" for k in range(d)] + [f"gradient_{k}" for k in range(d)] + ["offset"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for i, cell in enumerate(gen.lifted):
        coords = gen.patch.cell_coords[i].tolist()
        writer.writerow([i, *coords, *map(_g, cell.gradient), _g(cell.offset)])
    return buf.getvalue()


def snapshot_svg(gen: Generatrix, size: int = 640) -> str:
    """Tiling drawn in the first two coordinates, interior facets labelled with their weights.

    In d = 3 only the layer of cells with last lattice coordinate 0 is drawn, projected
    along the last axis, and the labels are those of the base cell's facets.
    """
    patch, cx = gen.patch, gen.patch.complex
    d = patch.dim
    if d == 2:
        cells = list(range(len(cx.cells)))
        labelled = cx.interior_facets
    else:
        cells = [i for i in range(len(cx.cells)) if patch.cell_coords[i][-1] == 0]
        labelled = [f for f in cx.cell_facets[patch.base_cell_index] if cx.facets[f].interior]
    pts = np.vstack([cx.cells[i].vertices[:, :2] for i in cells])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    scale = (size - 40) / float(max(hi - lo))

    def xy(p):
        return 20 + (p[0] - lo[0]) * scale, size - 20 - (p[1] - lo[1]) * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
           '<rect width="100%" height="100%" fill="white"/>']
    for i in cells:
        flat = cx.cells[i].vertices[:, :2]
        ring = flat[ConvexHull(flat).vertices] if d == 3 else flat[_ccw(flat)]
        path = " ".join(f"{x:.3f},{y:.3f}" for x, y in map(xy, ring))
        fill = "#dde8f5" if i == gen.base_cell_index else "none"
        out.append(f'<polygon points="{path}" fill="{fill}" stroke="black" stroke-width="1"/>')
    weights = gen.scaling.weights if gen.scaling is not None else None
    if weights is not None:
        for f in labelled:
            x, y = xy(cx.facets[f].barycenter[:2])
            out.append(f'<text x="{x:.3f}" y="{y:.3f}" font-size="9" text-anchor="middle" '
                       f'fill="#b03030">{weights[f]:.4g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_surface(gen: Generatrix, fmt: str, path: str | Path) -> Path:
    """Write one export format to ``path`` (a directory gets ``generatrix<ext>``)."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown export format {fmt!r}; choose from {sorted(FORMATS)}")
    render = {"mesh": mesh_obj, "table": table_csv, "snapshot": snapshot_svg}[fmt]
    text = render(gen)
    path = Path(path)
    if path.is_dir() or not path.suffix:
        path = path / f"generatrix{FORMATS[fmt]}"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
