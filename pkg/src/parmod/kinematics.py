"""Closure residuals, tilt coupling, inverse kinematics and joint angles.

The non-parallelogram leg couples the platform tilt ``alpha`` to position:
eliminating its slider coordinate from the two rod equations leaves a
quadric in (x_p, y_p, alpha) that is an ellipse for each fixed tilt.  All
positions handled here live on that surface; the inverse kinematics keeps
the single branch with the slider above the platform (z points down).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AmbiguityError, NoSolutionError
from .geometry import RODS, MachineGeometry, _check_rod

_ALPHA_GRID = 256  # sign-change scan resolution for tilt root isolation
_MAX_ROOTS = 3


@dataclass(frozen=True)
class Pose:
    """Platform reference point plus the coupled tilt about x."""

    x_p: float
    y_p: float
    z_p: float
    alpha: float = 0.0

    def __post_init__(self):
        for name in ("x_p", "y_p", "z_p", "alpha"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"pose field {name} must be finite")

    def point(self) -> np.ndarray:
        return np.array([self.x_p, self.y_p, self.z_p])


@dataclass(frozen=True)
class ActuatorState:
    rho1: float
    rho2: float
    rho3: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.rho1, self.rho2, self.rho3)


@dataclass(frozen=True)
class IKResult:
    alpha: float
    actuators: ActuatorState
    in_stroke: tuple[bool, bool, bool]

    @property
    def all_in_stroke(self) -> bool:
        return all(self.in_stroke)


@dataclass(frozen=True)
class CouplingEllipse:
    """Locus of platform positions sharing one tilt value."""

    x_center: float
    a: float
    b: float
    alpha: float

    def point_at(self, t):
        """Parametric point (x_p, y_p) at angle ``t``; degenerate at b = 0."""
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape + (2,), dtype=float)
        out[..., 0] = self.x_center + self.a * np.cos(t)
        out[..., 1] = self.b * np.sin(t)
        return out


def rod_residual(geom: MachineGeometry, pose: Pose, rho: float, i: int, j: int) -> float:
    """Squared-distance closure residual of rod ij; zero iff the rod closes."""
    return float(_rod_residual_xyz(geom, pose.x_p, pose.y_p, pose.z_p, rho, pose.alpha, i, j))


def _rod_residual_xyz(geom: MachineGeometry, x, y, z, rho, alpha, i: int, j: int):
    key = _check_rod(i, j)
    c, s = np.cos(alpha), np.sin(alpha)
    if key in ("11", "12"):
        dx = x + geom.D1 - geom.d1
        sign = 1.0 if key == "11" else -1.0
        dy = y + sign * (geom.R1 * c) - sign * geom.r1
        dz = z + sign * geom.R1 * s - rho
        return dx * dx + dy * dy + dz * dz - geom.L1 ** 2
    dx = x + geom.D2 - geom.d2
    sign = -1.0 if key == "21" else 1.0
    dy = y + sign * (geom.R2 * c) - sign * geom.r4
    dz = z + sign * geom.R2 * s - rho
    length = geom.L2 if key == "21" else geom.L3
    return dx * dx + dy * dy + dz * dz - length ** 2


def coupling_residual(geom: MachineGeometry, x_p, y_p, alpha):
    """Tilt-position coupling residual of the non-parallelogram leg.

    Zero exactly when (x_p, y_p, alpha) lies on the coupling surface; the
    slider coordinate and z_p drop out of the relation.
    """
    x_p = np.asarray(x_p, dtype=float)
    y_p = np.asarray(y_p, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    r1, R1 = geom.r1, geom.R1
    c, s = np.cos(alpha), np.sin(alpha)
    s2 = (R1 * s) ** 2
    m = R1 * R1 + r1 * r1 - 2.0 * R1 * r1 * c
    dx = x_p + geom.D1 - geom.d1
    out = s2 * dx * dx + m * y_p * y_p - s2 * (geom.L1 ** 2 - m)
    return float(out) if out.ndim == 0 else out


def _coupling_scalar(geom: MachineGeometry, x: float, y: float, alpha: float) -> float:
    c = math.cos(alpha)
    s2 = (geom.R1 * math.sin(alpha)) ** 2
    m = geom.R1 * geom.R1 + geom.r1 * geom.r1 - 2.0 * geom.R1 * geom.r1 * c
    dx = x + geom.D1 - geom.d1
    return s2 * dx * dx + m * y * y - s2 * (geom.L1 ** 2 - m)


def _ellipse_axes(geom: MachineGeometry, alpha):
    """Semi-axes (a, b) of the constant-tilt ellipse; NaN where imaginary."""
    alpha = np.asarray(alpha, dtype=float)
    c, s = np.cos(alpha), np.sin(alpha)
    m = geom.R1 ** 2 + geom.r1 ** 2 - 2.0 * geom.R1 * geom.r1 * c
    a_sq = geom.L1 ** 2 - m
    with np.errstate(invalid="ignore"):
        a = np.sqrt(np.where(a_sq >= 0, a_sq, np.nan))
        b = geom.R1 * np.abs(s) * a / np.sqrt(m)
    return a, b


def coupling_ellipse(geom: MachineGeometry, alpha: float) -> CouplingEllipse:
    """Constant-tilt ellipse; raises when the leg cannot close at ``alpha``."""
    m = geom.R1 ** 2 + geom.r1 ** 2 - 2.0 * geom.R1 * geom.r1 * math.cos(alpha)
    a_sq = geom.L1 ** 2 - m
    if a_sq < 0:
        raise NoSolutionError(
            f"leg 1 cannot close at tilt {alpha!r}: ellipse semi-axis is imaginary")
    a = math.sqrt(a_sq)
    b = 0.0 if math.sin(alpha) == 0.0 else geom.R1 * abs(math.sin(alpha)) * a / math.sqrt(m)
    return CouplingEllipse(x_center=geom.d1 - geom.D1, a=a, b=b, alpha=float(alpha))


def max_tilt(geom: MachineGeometry) -> float:
    """Open tilt bound: |alpha| must stay strictly below this value."""
    return math.acos(geom.r1 / geom.R1)


def _solve_alpha_batch(geom: MachineGeometry, x, y, chunk: int = 8192):
    """All sign-consistent tilt roots for each (x, y).

    Returns ``(roots, counts)`` where ``roots`` is (n, 3) NaN-padded and
    ``counts[i]`` is the number of valid roots of row i.  Root signs follow
    the closure rule: positive tilt pairs with negative y and vice versa;
    y = 0 pairs with the zero-tilt branch when the degenerate segment is
    reachable.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n = x.shape[0]
    roots = np.full((n, _MAX_ROOTS), np.nan)
    counts = np.zeros(n, dtype=np.int64)

    y_tol = 1e-12 * geom.L1
    near_zero = np.abs(y) < y_tol
    if np.any(near_zero):
        a0_sq = geom.L1 ** 2 - (geom.R1 - geom.r1) ** 2
        dx = x + geom.D1 - geom.d1
        ok = near_zero & (dx * dx <= a0_sq)
        roots[ok, 0] = 0.0
        counts[ok] = 1

    rest = np.nonzero(~near_zero)[0]
    if rest.size == 0:
        return roots, counts

    alpha1 = max_tilt(geom)
    t_hi = math.tan(0.5 * alpha1) * (1.0 - 1e-12)
    tgrid = np.linspace(0.0, t_hi, _ALPHA_GRID)
    agrid = 2.0 * np.arctan(tgrid)

    for start in range(0, rest.size, chunk):
        idx = rest[start:start + chunk]
        xx, yy = x[idx], y[idx]
        f = coupling_residual(geom, xx[:, None], yy[:, None], agrid[None, :])
        neg = np.signbit(f)
        change = neg[:, :-1] != neg[:, 1:]
        rows, cols = np.nonzero(change)
        if rows.size == 0:
            continue

        lo = tgrid[cols]
        hi = tgrid[cols + 1]
        flo_neg = neg[rows, cols]
        bx, by = xx[rows], yy[rows]
        if rows.size <= 8:
            # scalar bisection: numpy call overhead dominates tiny batches
            t_root = np.empty(rows.size)
            for b in range(rows.size):
                s_lo, s_hi = float(lo[b]), float(hi[b])
                s_neg = bool(flo_neg[b])
                px, py = float(bx[b]), float(by[b])
                for _ in range(60):
                    mid = 0.5 * (s_lo + s_hi)
                    if (_coupling_scalar(geom, px, py, 2.0 * math.atan(mid)) < 0) == s_neg:
                        s_lo = mid
                    else:
                        s_hi = mid
                t_root[b] = 0.5 * (s_lo + s_hi)
        else:
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                fmid_neg = np.signbit(coupling_residual(geom, bx, by, 2.0 * np.arctan(mid)))
                same = fmid_neg == flo_neg
                lo = np.where(same, mid, lo)
                hi = np.where(same, hi, mid)
            t_root = 0.5 * (lo + hi)
        mag = 2.0 * np.arctan(t_root)
        signed = np.where(by < 0, mag, -mag)

        # pack the per-row brackets (np.nonzero yields them row-sorted)
        first = np.r_[True, rows[1:] != rows[:-1]]
        starts = np.where(first, np.arange(rows.size), 0)
        slot = np.arange(rows.size) - np.maximum.accumulate(starts)
        keep = slot < _MAX_ROOTS
        roots[idx[rows[keep]], slot[keep]] = signed[keep]
        counts[idx] = np.bincount(rows, minlength=xx.size).clip(max=_MAX_ROOTS)
    return roots, counts


def solve_alpha(geom: MachineGeometry, x_p: float, y_p: float) -> list[float]:
    """Tilt roots of the coupling relation at (x_p, y_p), sign-consistent.

    Empty when no admissible tilt reaches the point.  Roots are refined by
    bracketed bisection until the residual is at machine level.
    """
    roots, counts = _solve_alpha_batch(geom, [x_p], [y_p])
    found = sorted(float(a) for a in roots[0, : counts[0]])
    return found


def _actuators_at_alpha(geom: MachineGeometry, x, y, z, alpha):
    """Branch-selected slider coordinates for positions on the coupling surface.

    Row entries are NaN where a parallelogram leg cannot reach the point.
    The leg-1 coordinate comes from the closure identity obtained by
    subtracting the leg's two rod equations, which picks the slider-above-
    platform branch unambiguously.
    """
    x, y, z, alpha = np.broadcast_arrays(
        np.asarray(x, dtype=float), np.asarray(y, dtype=float),
        np.asarray(z, dtype=float), np.asarray(alpha, dtype=float))
    c, s = np.cos(alpha), np.sin(alpha)
    k = geom.R1 * c - geom.r1
    x1 = x + geom.D1 - geom.d1
    x2 = x + geom.D2 - geom.d2

    q1 = geom.L1 ** 2 - x1 * x1 - (y + geom.R1 * c - geom.r1) ** 2
    q2 = geom.L2 ** 2 - x2 * x2 - (y - geom.R2 * c + geom.r4) ** 2
    q3 = geom.L3 ** 2 - x2 * x2 - (y + geom.R2 * c - geom.r4) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        rho1_tilted = z + y * k / (geom.R1 * s)
        rho1_flat = z - np.sqrt(np.where(q1 >= 0, q1, np.nan))
        rho1 = np.where(s != 0.0, rho1_tilted, rho1_flat)
        rho2 = z - geom.R2 * s - np.sqrt(np.where(q2 >= 0, q2, np.nan))
        rho3 = z + geom.R2 * s - np.sqrt(np.where(q3 >= 0, q3, np.nan))
    return np.stack([rho1, rho2, rho3], axis=-1)


def inverse_kinematics(geom: MachineGeometry, x_p: float, y_p: float, z_p: float) -> IKResult:
    """Unique branch-selected inverse kinematics at a platform position.

    The tilt is the single sign-consistent root of the coupling relation;
    every slider lands on the branch that keeps it above the platform.
    Stroke violations are reported in ``in_stroke``, not raised.
    """
    candidates = solve_alpha(geom, x_p, y_p)
    if not candidates:
        raise NoSolutionError(
            f"({x_p!r}, {y_p!r}) is outside the reachable coupling region")
    if len(candidates) > 1:
        raise AmbiguityError(
            f"{len(candidates)} sign-consistent tilt roots at ({x_p!r}, {y_p!r}): {candidates}")
    alpha = candidates[0]
    rho = _actuators_at_alpha(geom, x_p, y_p, z_p, alpha)
    if not np.all(np.isfinite(rho)):
        raise NoSolutionError(
            f"a parallelogram leg cannot reach ({x_p!r}, {y_p!r}, {z_p!r})")
    rho1, rho2, rho3 = (float(v) for v in rho)

    pose = Pose(x_p, y_p, z_p, alpha)
    scales = (geom.L1 ** 2, geom.L1 ** 2, geom.L2 ** 2, geom.L3 ** 2)
    rhos = (rho1, rho1, rho2, rho3)
    for (i, j), r, scale in zip(RODS, rhos, scales):
        if abs(rod_residual(geom, pose, r, i, j)) > 1e-10 * scale:
            raise NoSolutionError(
                f"closure residual of rod {i}{j} did not vanish at ({x_p!r}, {y_p!r}, {z_p!r})")

    in_stroke = tuple(
        bool(geom.rho_min[leg] <= r <= geom.rho_max[leg])
        for leg, r in enumerate((rho1, rho2, rho3)))
    return IKResult(alpha=alpha, actuators=ActuatorState(rho1, rho2, rho3), in_stroke=in_stroke)


def spherical_joint_point(L: float, delta, beta):
    """Rod endpoint in the joint frame for swing ``delta`` and tilt ``beta``."""
    delta = np.asarray(delta, dtype=float)
    beta = np.asarray(beta, dtype=float)
    out = np.empty(np.broadcast(delta, beta).shape + (3,), dtype=float)
    out[..., 0] = L * np.sin(delta) * np.cos(beta)
    out[..., 1] = -L * np.sin(beta)
    out[..., 2] = L * np.cos(delta) * np.cos(beta)
    return out


def joint_angles_from_rod(v) -> tuple[float, float]:
    """Invert the joint-frame direction into (delta, beta).

    ``v`` must be a unit vector; the swing is undefined when the rod points
    along the joint y-axis (cos beta = 0).
    """
    v = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"rod direction must be a unit vector, |v| = {norm!r}")
    beta = -math.asin(max(-1.0, min(1.0, float(v[1]))))
    if math.cos(beta) < 1e-12:
        raise ValueError("joint swing is undefined at the pole (rod along joint y-axis)")
    delta = math.atan2(float(v[0]), float(v[2]))
    return delta, beta


def tool_point(pose: Pose, d_pu: float) -> np.ndarray:
    """Tool-tip position for a platform-to-tip distance ``d_pu``."""
    if d_pu < 0:
        raise ValueError("d_pu must be >= 0")
    return np.array([
        pose.x_p,
        pose.y_p - d_pu * math.sin(pose.alpha),
        pose.z_p + d_pu * math.cos(pose.alpha),
    ])
