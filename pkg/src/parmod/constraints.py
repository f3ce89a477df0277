"""Membership predicates for every workspace-limiting constraint.

Each rod contributes three predicates: a swept-hemisphere reach test, a
slider-side joint-limit test and a platform-side joint-limit test.  The
joint tests demand that the rod closes exactly at some in-stroke slider
position, because the allowed regions are swept spherical patches; the
reach test is the solid sweep and is evaluated in closed form (the anchor
moves on a vertical line, so the sphere condition is a quadratic in rho).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import EmptyBoxError
from .geometry import (
    RODS,
    JointMount,
    MachineGeometry,
    _check_rod,
    mount_rotation,
)
from .kinematics import coupling_residual

COUPLING_REL_TOL = 1e-10   # coupling membership, relative to L1^4
SURFACE_REL_TOL = 1e-9     # rod-sphere membership, relative to L_i
ZERO_TOL = 1e-12           # tilt/offset comparisons against zero


@dataclass(frozen=True)
class AxisBox:
    """Axis-aligned open box; construction rejects empty extents."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float
    z_max: float

    def __post_init__(self):
        for axis in "xyz":
            lo, hi = getattr(self, f"{axis}_min"), getattr(self, f"{axis}_max")
            if not (lo < hi):
                raise EmptyBoxError(f"empty interference box: {axis}_min >= {axis}_max ({lo!r} >= {hi!r})")

    def contains(self, x, y, z):
        """Strict interior test (the printed bounds are open)."""
        x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
        return (
            (x > self.x_min) & (x < self.x_max)
            & (y > self.y_min) & (y < self.y_max)
            & (z > self.z_min) & (z < self.z_max)
        )


@dataclass(frozen=True)
class ConstraintReport:
    in_box: bool
    in_rod_reach: Mapping[str, bool]
    in_base_joint: Mapping[str, bool]
    in_platform_joint: Mapping[str, bool]
    coupling_ok: bool
    closure_half_ok: bool
    admissible: bool


def interference_box(geom: MachineGeometry, d_pu: float = 0.0) -> AxisBox:
    """Collision-free box for the platform point at worst-case (zero) tilt."""
    if d_pu < 0:
        raise ValueError("d_pu must be >= 0")
    return AxisBox(
        x_min=geom.d2 - geom.D2,
        x_max=geom.d1 - geom.D1,
        y_min=geom.r4 - geom.R2 - geom.L3,
        y_max=geom.L2 + geom.R2 - geom.r4,
        z_min=geom.z_hood + geom.l_p2,
        z_max=geom.z_tilting_table - d_pu,
    )


def _anchor_components(geom: MachineGeometry, i: int, j: int, alpha):
    """Anchor line of rod ij: A'(rho) = (ax, ay, cz + rho)."""
    key = _check_rod(i, j)
    alpha = np.asarray(alpha, dtype=float)
    c, s = np.cos(alpha), np.sin(alpha)
    if key == "11":
        return geom.d1 - geom.D1, geom.r1 - geom.R1 * c, -geom.R1 * s
    if key == "12":
        return geom.d1 - geom.D1, geom.R1 * c - geom.r1, geom.R1 * s
    if key == "21":
        return geom.d2 - geom.D2, geom.R2 * c - geom.r4, geom.R2 * s
    return geom.d2 - geom.D2, geom.r4 - geom.R2 * c, -geom.R2 * s


def _rod_reach_mask(geom: MachineGeometry, x, y, z, alpha, i: int, j: int):
    ax, ay, cz = _anchor_components(geom, i, j, alpha)
    length = geom.rod_length(i, j)
    lo, hi = geom.stroke(i)
    r_sq = (x - ax) ** 2 + (y - ay) ** 2
    h = z - cz
    u = np.sqrt(np.clip(length * length - r_sq, 0.0, None))
    return (r_sq <= length * length) & (h >= lo) & (h - u <= hi)


def in_rod_reach(geom: MachineGeometry, P, i: int, j: int, alpha: float) -> bool:
    """True iff some in-stroke slider reaches P with rod ij on the
    singularity-free side (platform below the anchor, z pointing down)."""
    p = np.asarray(P, dtype=float)
    return bool(_rod_reach_mask(geom, p[0], p[1], p[2], float(alpha), i, j))


def _joint_limit_mask(geom: MachineGeometry, mount: JointMount, x, y, z, alpha,
                      i: int, j: int, negate: bool):
    """Exact-closure joint test: some quadratic root in stroke passes the
    clipped swing range and the interpolated tilt limit."""
    ax, ay, cz = _anchor_components(geom, i, j, alpha)
    length = geom.rod_length(i, j)
    lo, hi = geom.stroke(i)
    rot = mount_rotation(mount)
    prof = mount.profile
    d_lo = max(-prof.delta2, -0.5 * math.pi - mount.psi)
    d_hi = min(prof.delta2, 0.5 * math.pi - mount.psi)

    r_sq = (x - ax) ** 2 + (y - ay) ** 2
    l_sq = length * length
    on_sphere = r_sq <= l_sq * (1.0 + 2.0 * SURFACE_REL_TOL)
    u = np.sqrt(np.clip(l_sq - r_sq, 0.0, None))
    h = z - cz

    ok = np.zeros(np.broadcast(x, y, z, alpha).shape, dtype=bool)
    sign = -1.0 if negate else 1.0
    for rho in (h - u, h + u):
        in_stroke = (rho >= lo) & (rho <= hi)
        vx, vy, vz = x - ax, y - ay, z - (cz + rho)
        norm = np.sqrt(vx * vx + vy * vy + vz * vz)
        with np.errstate(invalid="ignore", divide="ignore"):
            inv = sign / norm
            jx = (rot[0, 0] * vx + rot[1, 0] * vy + rot[2, 0] * vz) * inv
            jy = (rot[0, 1] * vx + rot[1, 1] * vy + rot[2, 1] * vz) * inv
            jz = (rot[0, 2] * vx + rot[1, 2] * vy + rot[2, 2] * vz) * inv
        beta = -np.arcsin(np.clip(jy, -1.0, 1.0))
        delta = np.arctan2(jx, jz)
        in_range = (delta >= d_lo) & (delta <= d_hi)
        beta_lim = np.interp(delta, prof.deltas, prof.betas)
        ok |= (on_sphere & in_stroke & (norm > 0)
               & in_range & (np.abs(beta) <= beta_lim))
    return ok


def in_base_joint_limits(geom: MachineGeometry, P, i: int, j: int, alpha: float) -> bool:
    """True iff rod ij can close at some in-stroke slider position without
    violating the slider-side joint limits."""
    p = np.asarray(P, dtype=float)
    key = _check_rod(i, j)
    mask = _joint_limit_mask(geom, geom.base_joints[key], p[0], p[1], p[2],
                             float(alpha), i, j, negate=False)
    return bool(mask)


def in_platform_joint_limits(geom: MachineGeometry, P, i: int, j: int, alpha: float) -> bool:
    """Same as the slider-side test with the rod direction negated and the
    platform-side mount and profile."""
    p = np.asarray(P, dtype=float)
    key = _check_rod(i, j)
    mask = _joint_limit_mask(geom, geom.platform_joints[key], p[0], p[1], p[2],
                             float(alpha), i, j, negate=True)
    return bool(mask)


def closure_half_ok(alpha, y_p, alpha_tol: float = ZERO_TOL, y_tol: float = ZERO_TOL):
    """Valid half of the coupling surface: tilt and y must have opposite
    signs, or both vanish."""
    alpha = np.asarray(alpha, dtype=float)
    y_p = np.asarray(y_p, dtype=float)
    a_zero = np.abs(alpha) <= alpha_tol
    y_zero = np.abs(y_p) <= y_tol
    ok = (a_zero & y_zero) | ((alpha > alpha_tol) & (y_p < -y_tol)) \
        | ((alpha < -alpha_tol) & (y_p > y_tol))
    return bool(ok) if ok.ndim == 0 else ok


def _admissible_arrays(geom: MachineGeometry, x, y, z, alpha,
                       d_pu: float = 0.0, box: AxisBox | None = None):
    """Vector form of ``admissible``; returns a dict of boolean arrays."""
    x, y, z, alpha = np.broadcast_arrays(
        np.asarray(x, dtype=float), np.asarray(y, dtype=float),
        np.asarray(z, dtype=float), np.asarray(alpha, dtype=float))
    if box is None:
        try:
            box = interference_box(geom, d_pu)
        except EmptyBoxError:
            box = None
    masks: dict[str, object] = {}
    masks["in_box"] = box.contains(x, y, z) if box is not None \
        else np.zeros(x.shape, dtype=bool)
    overall = masks["in_box"].copy()
    for (i, j) in RODS:
        key = f"{i}{j}"
        reach = _rod_reach_mask(geom, x, y, z, alpha, i, j)
        base = _joint_limit_mask(geom, geom.base_joints[key], x, y, z, alpha, i, j, negate=False)
        plat = _joint_limit_mask(geom, geom.platform_joints[key], x, y, z, alpha, i, j, negate=True)
        masks[f"reach_{key}"] = reach
        masks[f"base_{key}"] = base
        masks[f"platform_{key}"] = plat
        overall &= reach & base & plat
    masks["coupling_ok"] = np.abs(coupling_residual(geom, x, y, alpha)) \
        < COUPLING_REL_TOL * geom.L1 ** 4
    masks["closure_half_ok"] = closure_half_ok(
        alpha, y, alpha_tol=ZERO_TOL, y_tol=ZERO_TOL * geom.L1)
    overall &= masks["coupling_ok"] & masks["closure_half_ok"]
    masks["admissible"] = overall
    return masks


def admissible(geom: MachineGeometry, P, alpha: float, d_pu: float = 0.0) -> ConstraintReport:
    """Evaluate every constraint at platform position P and tilt alpha."""
    p = np.asarray(P, dtype=float)
    masks = _admissible_arrays(geom, p[0], p[1], p[2], float(alpha), d_pu=d_pu)
    keys = [f"{i}{j}" for i, j in RODS]
    return ConstraintReport(
        in_box=bool(masks["in_box"]),
        in_rod_reach={k: bool(masks[f"reach_{k}"]) for k in keys},
        in_base_joint={k: bool(masks[f"base_{k}"]) for k in keys},
        in_platform_joint={k: bool(masks[f"platform_{k}"]) for k in keys},
        coupling_ok=bool(masks["coupling_ok"]),
        closure_half_ok=bool(masks["closure_half_ok"]),
        admissible=bool(masks["admissible"]),
    )
