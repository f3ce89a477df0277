"""Serialization: point-cloud CSV, per-slice SVG, stacked-contour PLY mesh.

All writers are deterministic; identical inputs give byte-identical files.
The boundary mesh replaces a CAD reconstruction step: each slice region is
rasterized with the membership oracle, its outer contour extracted by
marching squares, resampled at fixed bearings around the region centroid,
refined onto the membership boundary, and consecutive rings are zipped
into triangle strips with fan caps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from skimage import measure

from .constraints import AxisBox, interference_box
from .errors import TopologyError, ValidationError
from .sweep import SliceSet, WorkspaceSlice, _oracle_membership_batch

_CSV_FMT = "{:.11e}"   # 12 significant digits
_PLY_FMT = "{:.17g}"   # exact float round trip


@dataclass(frozen=True)
class MeshParams:
    raster_resolution: int = 96
    contour_samples: int = 128
    component_limit: int = 1

    def __post_init__(self):
        if self.raster_resolution < 16 or self.contour_samples < 3:
            raise ValueError("raster_resolution >= 16 and contour_samples >= 3 required")
        if self.component_limit < 1:
            raise ValueError("component_limit must be >= 1")


@dataclass(frozen=True)
class MeshSurface:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= v.shape[0]):
            raise ValidationError("triangle indices out of vertex range")
        if t.size:
            p = v[t]
            areas = 0.5 * np.linalg.norm(
                np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
            if np.any(areas <= 1e-15):
                raise ValidationError("mesh contains a degenerate triangle")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)


def _write_text(destination, text: str) -> int:
    data = text.encode("ascii")
    if hasattr(destination, "write"):
        written = destination.write(data)
        return len(data) if written is None else int(written)
    with open(Path(destination), "wb") as handle:
        handle.write(data)
    return len(data)


def write_point_cloud(cloud, destination) -> int:
    """CSV with a fixed header; 12 significant digits per value."""
    rows = np.asarray(cloud.rows, dtype=float)
    if rows.shape[0] == 0:
        raise ValueError("point cloud is empty")
    lines = ["x,y,z,alpha,rho1,rho2,rho3"]
    for row in rows:
        lines.append(",".join(_CSV_FMT.format(v) for v in row))
    return _write_text(destination, "\n".join(lines) + "\n")


def write_slice_svg(slice_: WorkspaceSlice, box: AxisBox, destination) -> int:
    """Top view of one slice: interference box rectangle plus arc polylines."""
    width = box.x_max - box.x_min
    height = box.y_max - box.y_min
    stroke = max(width, height) / 400.0
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'viewBox="{box.x_min:.6g} {box.y_min:.6g} {width:.6g} {height:.6g}">',
        f'<rect x="{box.x_min:.6g}" y="{box.y_min:.6g}" width="{width:.6g}" '
        f'height="{height:.6g}" fill="none" stroke="black" stroke-width="{stroke:.6g}"/>',
    ]
    for arc in slice_.arcs:
        for start, stop in arc.runs:
            seg = arc.points[start:stop, :2]
            if seg.shape[0] < 2:
                continue
            coords = " ".join(f"{p[0]:.6g},{p[1]:.6g}" for p in seg)
            parts.append(f'<polyline points="{coords}" fill="none" stroke="steelblue" '
                         f'stroke-width="{stroke:.6g}"/>')
    parts.append("</svg>")
    return _write_text(destination, "\n".join(parts) + "\n")


def _slice_raster(sliceset: SliceSet, slice_: WorkspaceSlice, resolution: int):
    geom = sliceset.geom
    box = interference_box(geom, slice_.d_pu)
    dx = (box.x_max - box.x_min) / resolution
    dy = (box.y_max - box.y_min) / resolution
    xs = box.x_min + (np.arange(resolution) + 0.5) * dx
    ys = box.y_min + (np.arange(resolution) + 0.5) * dy
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, slice_.z_p)])
    member = _oracle_membership_batch(geom, pts, slice_.d_pu).reshape(resolution, resolution)
    return member, (box.x_min, box.y_min, dx, dy)


def _outer_contour(member: np.ndarray, origin):
    x0, y0, dx, dy = origin
    # zero padding closes contours that would otherwise end at the raster edge
    padded = np.pad(member.astype(float), 1)
    contours = measure.find_contours(padded, 0.5)
    best, best_area = None, -1.0
    for c in contours:
        x = x0 + (c[:, 0] - 1 + 0.5) * dx
        y = y0 + (c[:, 1] - 1 + 0.5) * dy
        area = abs(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
        if area > best_area:
            best, best_area = np.column_stack([x, y]), area
    return best


def _ring_vertices(sliceset: SliceSet, slice_: WorkspaceSlice, params: MeshParams):
    """Boundary ring at fixed bearings, refined onto the oracle boundary."""
    geom = sliceset.geom
    member, origin = _slice_raster(sliceset, slice_, params.raster_resolution)
    if not member.any():
        return None
    n_components = int(ndimage.label(member)[1])
    if n_components > params.component_limit:
        raise TopologyError(
            f"slice at z={slice_.z_p!r} has {n_components} components "
            f"(limit {params.component_limit})")
    contour = _outer_contour(member, origin)
    if contour is None or contour.shape[0] < 3:
        return None
    cx, cy = contour.mean(axis=0)

    m = params.contour_samples
    angles = 2.0 * math.pi * np.arange(m) / m
    cos_a, sin_a = np.cos(angles), np.sin(angles)
    r_max = float(np.max(np.hypot(contour[:, 0] - cx, contour[:, 1] - cy))) * 1.5 + 2 * origin[2]
    n_march = 4 * params.raster_resolution
    radii = np.linspace(0.0, r_max, n_march)
    d_pu = slice_.d_pu

    # outermost inside->outside crossing along every bearing, then bisect
    ray_x = cx + radii[None, :] * cos_a[:, None]
    ray_y = cy + radii[None, :] * sin_a[:, None]
    pts = np.column_stack([ray_x.ravel(), ray_y.ravel(),
                           np.full(ray_x.size, slice_.z_p)])
    inside = _oracle_membership_batch(geom, pts, d_pu).reshape(m, n_march)
    any_hit = inside.any(axis=1)
    last = n_march - 1 - np.argmax(inside[:, ::-1], axis=1)
    lo = radii[last]
    hi = radii[np.minimum(last + 1, n_march - 1)]
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        probe = np.column_stack([cx + mid * cos_a, cy + mid * sin_a,
                                 np.full(m, slice_.z_p)])
        hit = _oracle_membership_batch(geom, probe, d_pu)
        lo = np.where(hit, mid, lo)
        hi = np.where(hit, hi, mid)
    r = np.where(any_hit, 0.5 * (lo + hi), 0.0)
    ring = np.column_stack([cx + r * cos_a, cy + r * sin_a,
                            np.full(m, slice_.z_p)])
    return ring


def _zip_rings(rings: list[np.ndarray]):
    """Triangle-strip consecutive rings of equal length, with fan caps."""
    m = rings[0].shape[0]
    vertices = np.concatenate(rings, axis=0)
    vertices = np.vstack([vertices, rings[0].mean(axis=0), rings[-1].mean(axis=0)])
    i_top = len(rings) * m
    i_bottom = i_top + 1
    base = (len(rings) - 1) * m
    triangles = []
    for i in range(len(rings) - 1):
        for k in range(m):
            k1 = (k + 1) % m
            a, b = i * m + k, i * m + k1
            c, d = (i + 1) * m + k, (i + 1) * m + k1
            triangles.append((a, b, c))
            triangles.append((b, d, c))
    for k in range(m):
        k1 = (k + 1) % m
        triangles.append((i_top, k1, k))
        triangles.append((i_bottom, base + k, base + k1))
    return vertices, np.asarray(triangles, dtype=np.int64)


def build_boundary_mesh(sliceset: SliceSet, params: MeshParams = MeshParams()) -> MeshSurface:
    """Stitch per-slice boundary rings into a closed triangle mesh."""
    rings = []
    for slice_ in sliceset.slices:
        ring = _ring_vertices(sliceset, slice_, params)
        if ring is not None:
            rings.append(ring)
    if len(rings) < 2:
        raise ValueError("boundary mesh needs at least 2 nonempty slices")
    vertices, tri = _zip_rings(rings)
    p = vertices[tri]
    areas = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    return MeshSurface(vertices=vertices, triangles=tri[areas > 1e-15])


def stitch_contours(contours: list[np.ndarray]) -> MeshSurface:
    """Zip pre-sampled rings (equal lengths, matching bearings) into a
    closed mesh; entry point for synthetic contour input."""
    if len(contours) < 2:
        raise ValueError("need at least 2 contours")
    rings = [np.asarray(c, dtype=float) for c in contours]
    if any(c.shape[0] != rings[0].shape[0] for c in rings):
        raise ValueError("all contours must have the same sample count")
    vertices, tri = _zip_rings(rings)
    return MeshSurface(vertices=vertices, triangles=tri)


def write_ply(mesh: MeshSurface, destination) -> int:
    """ASCII PLY: header, one vertex line per point, '3 i j k' face lines."""
    if mesh.vertices.shape[0] == 0:
        raise ValueError("mesh is empty")
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {mesh.vertices.shape[0]}",
        "property float x",
        "property float y",
        "property float z",
        f"element face {mesh.triangles.shape[0]}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    for v in mesh.vertices:
        lines.append(" ".join(_PLY_FMT.format(c) for c in v))
    for t in mesh.triangles:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")
    return _write_text(destination, "\n".join(lines) + "\n")
