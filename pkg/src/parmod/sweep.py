"""Slice-and-sweep workspace construction plus the brute-force oracle.

The constant-orientation workspace is assembled as a union of admissible
arcs: for each tilt value the reachable positions at a given height form
part of half of the coupling ellipse, and sweeping the height through the
interference box stacks those arcs into a volume.  Slices in the interior
height band where no stroke end-cap interferes are computed once and
reused.  ``oracle_membership`` answers the same membership question by
direct predicate composition and is the validation reference.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .constraints import _admissible_arrays, interference_box
from .errors import EmptyBoxError
from .geometry import RODS, MachineGeometry, geometry_hash
from .kinematics import (
    _actuators_at_alpha,
    _ellipse_axes,
    _solve_alpha_batch,
    max_tilt,
)

_ALPHA_EDGE_PULL = 1e-6  # relative pull-in of the open tilt bound


@dataclass(frozen=True)
class SweepParams:
    """Discretization of the sweep; all counts are grid sizes."""

    alpha_steps: int = 181
    arc_samples: int = 512
    z_steps: int = 101
    d_pu: float = 0.0
    boundary_band: float | None = None

    def __post_init__(self):
        for name in ("alpha_steps", "arc_samples", "z_steps"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be >= 2")
        if self.d_pu < 0:
            raise ValueError("d_pu must be >= 0")

    def band(self, geom: MachineGeometry) -> float:
        return self.boundary_band if self.boundary_band is not None else 1e-4 * geom.L1


class Classification(enum.Enum):
    CONSTANT = "constant"
    LOWER_TRANSITION = "lower-transition"
    UPPER_TRANSITION = "upper-transition"
    EMPTY = "empty"


@dataclass
class SliceArc:
    """Admissible portion of one constant-tilt arc at a fixed height."""

    alpha: float
    t_intervals: tuple[tuple[float, float], ...]
    runs: tuple[tuple[int, int], ...]  # slices into ``points`` per interval
    points: np.ndarray  # rows (x, y, z, alpha, rho1, rho2, rho3)


@dataclass
class WorkspaceSlice:
    z_p: float
    arcs: list[SliceArc]
    classification: Classification
    d_pu: float = 0.0

    @property
    def n_points(self) -> int:
        return sum(arc.points.shape[0] for arc in self.arcs)

    def point_rows(self) -> np.ndarray:
        blocks = [arc.points for arc in self.arcs if arc.points.size]
        return np.concatenate(blocks, axis=0) if blocks else np.empty((0, 7))


@dataclass
class SliceSet:
    slices: list[WorkspaceSlice]
    params: SweepParams
    geom: MachineGeometry

    def z_values(self) -> np.ndarray:
        return np.array([s.z_p for s in self.slices])


@dataclass
class PointCloud:
    """Workspace samples, rows sorted by (z, alpha, arc parameter)."""

    rows: np.ndarray
    geometry_hash: str
    params: SweepParams

    HEADER = ("x", "y", "z", "alpha", "rho1", "rho2", "rho3")

    def __len__(self) -> int:
        return self.rows.shape[0]


def alpha_grid(geom: MachineGeometry, alpha_steps: int) -> np.ndarray:
    """Uniform tilt grid pulled in from the open bound; exactly mirror
    symmetric so reflected samples map onto grid values bitwise."""
    am = max_tilt(geom) * (1.0 - _ALPHA_EDGE_PULL)
    numerators = 2 * np.arange(alpha_steps) - (alpha_steps - 1)
    return numerators * (am / (alpha_steps - 1))


def classify_z(geom: MachineGeometry, z_p: float) -> Classification:
    """Height band of a horizontal plane relative to the stroke end-caps.

    The anchor of each rod carries a tilt-dependent vertical offset, so the
    test uses the envelope of that offset over the admissible tilt range.
    A plane some rod cannot reach at any tilt yields an empty slice.
    """
    sin_am = math.sin(max_tilt(geom) * (1.0 - _ALPHA_EDGE_PULL))
    upper = lower = False
    for (i, j) in RODS:
        length = geom.rod_length(i, j)
        lo, hi = geom.stroke(i)
        c = (geom.R1 if i == 1 else geom.R2) * sin_am
        h_lo, h_hi = z_p - c, z_p + c
        if h_hi < lo or h_lo > hi + length:
            return Classification.EMPTY
        if h_hi >= lo and h_lo <= lo + length:
            upper = True
        if h_hi >= hi and h_lo <= hi + length:
            lower = True
    if lower:
        return Classification.LOWER_TRANSITION
    if upper:
        return Classification.UPPER_TRANSITION
    return Classification.CONSTANT


def _stroke_mask(geom: MachineGeometry, rho: np.ndarray):
    ok = np.isfinite(rho).all(axis=-1)
    for leg in range(3):
        ok &= (rho[..., leg] >= geom.rho_min[leg]) & (rho[..., leg] <= geom.rho_max[leg])
    return ok


def _tool_mask(geom: MachineGeometry, z, alpha, d_pu: float):
    if d_pu <= 0:
        return np.ones(np.broadcast(z, alpha).shape, dtype=bool)
    return z + d_pu * np.cos(alpha) <= geom.z_tilting_table


def slice_at(geom: MachineGeometry, z_p: float, params: SweepParams) -> WorkspaceSlice:
    """Admissible arcs of every tilt value at one height (fresh compute).

    All tilt rows are classified in one vectorized predicate pass; runs of
    consecutive admissible samples become the per-row parameter intervals.
    """
    box = interference_box(geom, params.d_pu)
    grid = alpha_grid(geom, params.alpha_steps)
    tgrid = np.linspace(0.0, math.pi, params.arc_samples)
    na, nt = grid.size, tgrid.size

    a, b = _ellipse_axes(geom, grid)
    x = (geom.d1 - geom.D1) + a[:, None] * np.cos(tgrid)[None, :]
    y = -np.sign(grid)[:, None] * b[:, None] * np.sin(tgrid)[None, :] + 0.0
    z_flat = np.full(na * nt, float(z_p))
    alpha_flat = np.repeat(grid, nt)

    with np.errstate(invalid="ignore"):
        masks = _admissible_arrays(geom, x.ravel(), y.ravel(), z_flat, alpha_flat, box=box)
        rho = _actuators_at_alpha(geom, x.ravel(), y.ravel(), z_flat, alpha_flat)
        keep = (masks["admissible"] & _stroke_mask(geom, rho)
                & _tool_mask(geom, z_flat, alpha_flat, params.d_pu))
    keep = keep.reshape(na, nt) & np.isfinite(x)
    rho = rho.reshape(na, nt, 3)

    arcs: list[SliceArc] = []
    for r in range(na):
        idx = np.nonzero(keep[r])[0]
        if idx.size == 0:
            arcs.append(SliceArc(float(grid[r]), (), (), np.empty((0, 7))))
            continue
        breaks = np.nonzero(np.diff(idx) > 1)[0]
        starts = np.r_[0, breaks + 1]
        stops = np.r_[breaks, idx.size - 1]
        intervals = tuple((float(tgrid[idx[s]]), float(tgrid[idx[e]]))
                          for s, e in zip(starts, stops))
        runs = tuple((int(s), int(e) + 1) for s, e in zip(starts, stops))
        points = np.column_stack([x[r, idx], y[r, idx], np.full(idx.size, float(z_p)),
                                  np.full(idx.size, grid[r]), rho[r, idx]])
        arcs.append(SliceArc(float(grid[r]), intervals, runs, points))
    return WorkspaceSlice(z_p=float(z_p), arcs=arcs, classification=classify_z(geom, z_p),
                          d_pu=params.d_pu)


def _shift_constant_slice(geom: MachineGeometry, ref: WorkspaceSlice, z_p: float,
                          d_pu: float) -> WorkspaceSlice | None:
    """Reuse a constant-band slice at a new height.

    Every slider coordinate is affine in z with unit slope, so points and
    actuator values shift rigidly.  Returns None when any shifted point
    leaves its stroke or the tool bound, which forces a fresh compute.
    """
    dz = z_p - ref.z_p
    arcs = []
    for arc in ref.arcs:
        pts = arc.points.copy()
        if pts.size:
            pts[:, 2] += dz
            pts[:, 4:7] += dz
            rho = pts[:, 4:7]
            ok = _stroke_mask(geom, rho) & _tool_mask(geom, pts[:, 2], pts[:, 3], d_pu)
            if not np.all(ok):
                return None
        arcs.append(SliceArc(arc.alpha, arc.t_intervals, arc.runs, pts))
    return WorkspaceSlice(z_p=float(z_p), arcs=arcs, classification=Classification.CONSTANT,
                          d_pu=d_pu)


def sweep(geom: MachineGeometry, params: SweepParams) -> tuple[PointCloud, SliceSet]:
    """Full workspace sweep over the interference box heights.

    Slices are independent given the immutable geometry and could be mapped
    in parallel; rows are emitted in (z, tilt, arc parameter) order so the
    output is the same regardless of evaluation order.
    """
    box = interference_box(geom, params.d_pu)
    span = box.z_max - box.z_min
    # cell-centered heights: the box interval is open, so its endpoints
    # carry no workspace and would only yield degenerate boundary slices
    zgrid = box.z_min + (np.arange(params.z_steps) + 0.5) * (span / params.z_steps)

    slices: list[WorkspaceSlice] = []
    constant_ref: WorkspaceSlice | None = None
    for z_p in zgrid:
        z_p = float(z_p)
        if classify_z(geom, z_p) is Classification.CONSTANT and constant_ref is not None:
            shifted = _shift_constant_slice(geom, constant_ref, z_p, params.d_pu)
            if shifted is not None:
                slices.append(shifted)
                continue
        sl = slice_at(geom, z_p, params)
        slices.append(sl)
        if sl.classification is Classification.CONSTANT:
            constant_ref = sl

    blocks = [s.point_rows() for s in slices]
    rows = np.concatenate([b for b in blocks if b.size], axis=0) if any(b.size for b in blocks) \
        else np.empty((0, 7))
    if rows.shape[0] == 0:
        warnings.warn("workspace sweep produced no admissible point", stacklevel=2)
    cloud = PointCloud(rows=rows, geometry_hash=geometry_hash(geom), params=params)
    return cloud, SliceSet(slices=slices, params=params, geom=geom)


# ------------------------------ oracle side ------------------------------

def _oracle_membership_batch(geom: MachineGeometry, pts: np.ndarray, d_pu: float,
                             chunk: int = 16384) -> np.ndarray:
    """Brute-force membership by direct predicate composition."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    try:
        box = interference_box(geom, d_pu)
    except EmptyBoxError:
        return np.zeros(pts.shape[0], dtype=bool)

    member = np.zeros(pts.shape[0], dtype=bool)
    for start in range(0, pts.shape[0], chunk):
        sel = slice(start, start + chunk)
        x, y, z = pts[sel, 0], pts[sel, 1], pts[sel, 2]
        roots, counts = _solve_alpha_batch(geom, x, y)
        got = np.zeros(x.shape[0], dtype=bool)
        for slot in range(roots.shape[1]):
            act = counts > slot
            if not np.any(act):
                break
            al = roots[act, slot]
            masks = _admissible_arrays(geom, x[act], y[act], z[act], al, box=box)
            rho = _actuators_at_alpha(geom, x[act], y[act], z[act], al)
            got[act] |= masks["admissible"] & _stroke_mask(geom, rho)
        member[sel] = got
    return member


def oracle_membership(geom: MachineGeometry, x: float, y: float, z: float, d_pu: float = 0.0) -> bool:
    """True iff some sign-consistent tilt makes (x, y, z) admissible with
    all sliders in stroke; independent of the slice machinery."""
    return bool(_oracle_membership_batch(geom, np.array([[x, y, z]]), d_pu)[0])


def estimate_slice_area(slice_: WorkspaceSlice, geom: MachineGeometry, resolution: int) -> float:
    """Rasterized area of the admissible region at the slice height."""
    if resolution < 16:
        raise ValueError("resolution must be >= 16")
    box = interference_box(geom, slice_.d_pu)
    dx = (box.x_max - box.x_min) / resolution
    dy = (box.y_max - box.y_min) / resolution
    xs = box.x_min + (np.arange(resolution) + 0.5) * dx
    ys = box.y_min + (np.arange(resolution) + 0.5) * dy
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, slice_.z_p)])
    member = _oracle_membership_batch(geom, pts, slice_.d_pu)
    return float(member.sum()) * dx * dy


def estimate_volume(sliceset: SliceSet, geom: MachineGeometry, resolution: int) -> float:
    """Trapezoidal integral of rasterized slice areas over height."""
    if len(sliceset.slices) < 2:
        raise ValueError("volume estimation needs at least 2 slices")
    zs = sliceset.z_values()
    areas = np.array([estimate_slice_area(s, geom, resolution) for s in sliceset.slices])
    order = np.argsort(zs)
    integrate = getattr(np, "trapezoid", None) or np.trapz
    return float(integrate(areas[order], zs[order]))


# ----------------------------- validation -----------------------------

@dataclass
class ValidationReport:
    n_total: int
    n_excluded: int
    n_compared: int
    n_disagree: int
    agreement: float
    worst_disagreement_distance: float
    params: SweepParams | None = field(repr=False, default=None)


def _sweep_membership(geom: MachineGeometry, sliceset: SliceSet, pts: np.ndarray) -> np.ndarray:
    """Membership according to the sweep output: the point's tilt root must
    fall on an admissible arc interval of the nearest sampled tilt row at
    the matching height, within one arc sample step."""
    params = sliceset.params
    grid = alpha_grid(geom, params.alpha_steps)
    d_alpha = grid[1] - grid[0]
    t_step = math.pi / (params.arc_samples - 1)
    zs = sliceset.z_values()
    x_center = geom.d1 - geom.D1

    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    slice_idx = np.clip(np.searchsorted(zs, z - 1e-12), 0, zs.size - 1)
    if np.any(np.abs(zs[slice_idx] - z) > 1e-9 * max(1.0, np.abs(zs).max())):
        raise ValueError("query heights must coincide with sweep slice heights")

    roots, counts = _solve_alpha_batch(geom, x, y)
    member = np.zeros(pts.shape[0], dtype=bool)
    for slot in range(roots.shape[1]):
        act = np.nonzero(counts > slot)[0]
        if act.size == 0:
            break
        al = roots[act, slot]
        a, _ = _ellipse_axes(geom, al)
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.arccos(np.clip((x[act] - x_center) / a, -1.0, 1.0))
        row = np.clip(np.rint((al - grid[0]) / d_alpha).astype(int), 0, grid.size - 1)
        group = slice_idx[act] * grid.size + row
        order = np.argsort(group, kind="stable")
        ordered = group[order]
        bounds = np.nonzero(np.r_[True, ordered[1:] != ordered[:-1]])[0]
        for g_start, g_end in zip(bounds, np.r_[bounds[1:], ordered.size]):
            g = ordered[g_start]
            arc = sliceset.slices[g // grid.size].arcs[g % grid.size]
            if not arc.t_intervals:
                continue
            sel = act[order[g_start:g_end]]
            tt = t[order[g_start:g_end]]
            hit = np.zeros(tt.shape, dtype=bool)
            for t_lo, t_hi in arc.t_intervals:
                hit |= (tt >= t_lo - t_step) & (tt <= t_hi + t_step)
            member[sel] |= hit & np.isfinite(tt)
    return member


def _boundary_exclusion(geom: MachineGeometry, pts: np.ndarray, base: np.ndarray,
                        d_pu: float, band: float) -> np.ndarray:
    """Points whose membership flips under a +-band probe along an axis."""
    excluded = np.zeros(pts.shape[0], dtype=bool)
    for axis in range(3):
        for sign in (-1.0, 1.0):
            probe = pts.copy()
            probe[:, axis] += sign * band
            excluded |= _oracle_membership_batch(geom, probe, d_pu) != base
    return excluded


def validate_against_oracle(geom: MachineGeometry, params: SweepParams,
                            nx: int = 64, ny: int = 64, nz: int = 32) -> ValidationReport:
    """Compare sweep-derived membership against the brute-force oracle on a
    grid over the interference box, excluding a band around the boundary."""
    if min(nx, ny, nz) < 2:
        raise ValueError("validation grid must be at least 2 points per axis")
    run_params = replace(params, z_steps=nz)
    _, sliceset = sweep(geom, run_params)
    box = interference_box(geom, run_params.d_pu)
    band = run_params.band(geom)

    xs = box.x_min + (np.arange(nx) + 0.5) * (box.x_max - box.x_min) / nx
    ys = box.y_min + (np.arange(ny) + 0.5) * (box.y_max - box.y_min) / ny
    zs = sliceset.z_values()
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    oracle = _oracle_membership_batch(geom, pts, run_params.d_pu)
    swept = _sweep_membership(geom, sliceset, pts)
    excluded = _boundary_exclusion(geom, pts, oracle, run_params.d_pu, band)

    compared = ~excluded
    n_compared = int(compared.sum())
    disagree = compared & (oracle != swept)
    n_disagree = int(disagree.sum())
    agreement = 1.0 if n_compared == 0 else 1.0 - n_disagree / n_compared

    # distance of each disagreement to the boundary, bracketed by doubling probes
    worst = 0.0
    if n_disagree:
        bad = pts[disagree]
        base = oracle[disagree]
        remaining = np.arange(bad.shape[0])
        radius = band
        for _ in range(16):
            radius *= 2.0
            if remaining.size == 0:
                break
            flips = _boundary_exclusion(geom, bad[remaining], base[remaining],
                                        run_params.d_pu, radius)
            if np.any(flips):
                worst = max(worst, float(radius))
            remaining = remaining[~flips]
        if remaining.size:
            worst = max(worst, float(radius))
    return ValidationReport(
        n_total=int(pts.shape[0]), n_excluded=int(excluded.sum()),
        n_compared=n_compared, n_disagree=n_disagree, agreement=float(agreement),
        worst_disagreement_distance=float(worst), params=run_params)
