"""Independent oracles shared by the test modules.

Everything here is re-derived from the machine's closure equations with its
own code paths (grid scans, explicit rotation products, direct quadratics)
so that agreement with the package is a real check, not an identity.
"""

from __future__ import annotations

import math

import numpy as np

ROD_LIST = ((1, 1), (1, 2), (2, 1), (3, 1))


def rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


def rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


def mount_rotation_oracle(psi, theta, phi):
    return rot_y(psi) @ rot_x(theta) @ rot_z(phi)


def anchor_line(geom, i, j, alpha):
    """(ax, ay, cz) with the rod anchor at (ax, ay, cz + rho)."""
    c, s = np.cos(alpha), np.sin(alpha)
    key = f"{i}{j}"
    if key == "11":
        return geom.d1 - geom.D1, geom.r1 - geom.R1 * c, -geom.R1 * s
    if key == "12":
        return geom.d1 - geom.D1, geom.R1 * c - geom.r1, geom.R1 * s
    if key == "21":
        return geom.d2 - geom.D2, geom.R2 * c - geom.r4, geom.R2 * s
    if key == "31":
        return geom.d2 - geom.D2, geom.r4 - geom.R2 * c, -geom.R2 * s
    raise ValueError(key)


def rod_len(geom, i):
    return (geom.L1, geom.L2, geom.L3)[i - 1]


def ellipse_axes_oracle(geom, alpha):
    m = geom.R1 ** 2 + geom.r1 ** 2 - 2 * geom.R1 * geom.r1 * np.cos(alpha)
    a = np.sqrt(geom.L1 ** 2 - m)
    b = geom.R1 * np.abs(np.sin(alpha)) * a / np.sqrt(m)
    return a, b


def forward_poses(geom, n, rng, *, zero_fraction=0.08, alpha_span=(0.01, 0.80),
                  require_in_box=True, stroke_margin=0.02):
    """In-stroke poses built forward from chosen (alpha, x, rho1).

    Returns an (n, 7) array of rows (x, y, z, alpha, rho1, rho2, rho3); all
    quantities computed from the closure equations directly.
    """
    alpha1 = math.acos(geom.r1 / geom.R1)
    lo = np.array(geom.rho_min)
    hi = np.array(geom.rho_max)
    x_lo, x_hi = geom.d2 - geom.D2, geom.d1 - geom.D1
    z_lo = geom.z_hood + geom.l_p2
    z_hi = geom.z_tilting_table
    rows = []
    while len(rows) < n:
        m = 2 * (n - len(rows)) + 32
        alpha = rng.uniform(alpha_span[0] * alpha1, alpha_span[1] * alpha1, m)
        alpha *= rng.choice((-1.0, 1.0), m)
        alpha[rng.random(m) < zero_fraction] = 0.0
        x = rng.uniform(x_lo + 1e-3, x_hi - 1e-3, m)
        rho1 = rng.uniform(lo[0] + stroke_margin, hi[0] - stroke_margin, m)

        c, s = np.cos(alpha), np.sin(alpha)
        k = geom.R1 * c - geom.r1
        a, b = ellipse_axes_oracle(geom, alpha)
        big_x = x + geom.D1 - geom.d1
        frac = np.sqrt(np.clip(1.0 - (big_x / a) ** 2, 0.0, None))
        y = np.where(alpha == 0.0, 0.0, -np.sign(alpha) * b * frac)

        # height from the chosen slider of leg 1
        w_flat = np.sqrt(np.clip(geom.L1 ** 2 - big_x ** 2 - (geom.R1 - geom.r1) ** 2, 0.0, None))
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(alpha == 0.0, w_flat, -y * k / (geom.R1 * s))
        z = rho1 + w

        # parallelogram legs: direct quadratics, slider-above branch
        x2 = x + geom.D2 - geom.d2
        q2 = geom.L2 ** 2 - x2 ** 2 - (y - geom.R2 * c + geom.r4) ** 2
        q3 = geom.L3 ** 2 - x2 ** 2 - (y + geom.R2 * c - geom.r4) ** 2
        with np.errstate(invalid="ignore"):
            rho2 = z - geom.R2 * s - np.sqrt(q2)
            rho3 = z + geom.R2 * s - np.sqrt(q3)

        ok = (q2 > 1e-6) & (q3 > 1e-6) & (np.abs(big_x) < a * (1 - 1e-9))
        ok &= (rho2 > lo[1] + stroke_margin) & (rho2 < hi[1] - stroke_margin)
        ok &= (rho3 > lo[2] + stroke_margin) & (rho3 < hi[2] - stroke_margin)
        if require_in_box:
            ok &= (z > z_lo + 1e-6) & (z < z_hi - 1e-6)
        batch = np.column_stack([x, y, z, alpha, rho1, rho2, rho3])[ok]
        rows.extend(batch)
    return np.asarray(rows[:n])


def dense_rod_oracles(geom, pts, alphas, i, j, samples=10_000, chunk=1024):
    """Stroke-scan oracles of one rod: (reach, base-joint, platform-joint).

    One dense rho grid drives all three: the solid hemisphere sweep is the
    pointwise scan of the distance inequality, and the two joint tests
    isolate the sphere-closure roots by sign change, refine them by
    bisection and check the angle limits at each root.
    """
    pts = np.asarray(pts, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    lo, hi = geom.rho_min[i - 1], geom.rho_max[i - 1]
    length = rod_len(geom, i)
    base_mount = geom.base_joints[f"{i}{j}"]
    plat_mount = geom.platform_joints[f"{i}{j}"]
    rho = np.linspace(lo, hi, samples)
    reach = np.zeros(pts.shape[0], dtype=bool)
    base = np.zeros(pts.shape[0], dtype=bool)
    plat = np.zeros(pts.shape[0], dtype=bool)

    for s0 in range(0, pts.shape[0], chunk):
        sel = slice(s0, min(s0 + chunk, pts.shape[0]))
        npts = pts[sel].shape[0]
        ax, ay, cz = anchor_line(geom, i, j, alphas[sel])
        ax, ay, cz = (np.broadcast_to(v, (npts,)) for v in
                      np.broadcast_arrays(ax, ay, cz))
        r_sq = (pts[sel, 0] - ax) ** 2 + (pts[sel, 1] - ay) ** 2
        h = pts[sel, 2] - cz
        dz = h[:, None] - rho[None, :]
        g_val = r_sq[:, None] + dz ** 2 - length ** 2
        reach[sel] = ((g_val <= 0) & (dz >= 0)).any(axis=1)

        neg = np.signbit(g_val)
        change = neg[:, :-1] != neg[:, 1:]
        rows, cols = np.nonzero(change)
        ok_base = np.zeros(npts, dtype=bool)
        ok_plat = np.zeros(npts, dtype=bool)

        # grid nodes already on the sphere within tolerance count as roots
        near = np.abs(g_val) <= 1e-9 * length ** 2
        n_rows, n_cols = np.nonzero(near)
        for rr, cc in zip(n_rows, n_cols):
            vx = pts[sel][rr, 0] - ax[rr]
            vy = pts[sel][rr, 1] - ay[rr]
            vz = pts[sel][rr, 2] - (cz[rr] + rho[cc])
            if _joint_pass(geom, base_mount, vx, vy, vz, False):
                ok_base[rr] = True
            if _joint_pass(geom, plat_mount, vx, vy, vz, True):
                ok_plat[rr] = True

        if rows.size:
            lo_b = rho[cols].copy()
            hi_b = rho[cols + 1].copy()
            g_lo_neg = neg[rows, cols]
            rr_sq = r_sq[rows]
            hh = h[rows]
            for _ in range(52):
                mid = 0.5 * (lo_b + hi_b)
                g_mid_neg = np.signbit(rr_sq + (hh - mid) ** 2 - length ** 2)
                same = g_mid_neg == g_lo_neg
                lo_b = np.where(same, mid, lo_b)
                hi_b = np.where(same, hi_b, mid)
            root = 0.5 * (lo_b + hi_b)
            vx = pts[sel][rows, 0] - ax[rows]
            vy = pts[sel][rows, 1] - ay[rows]
            vz = pts[sel][rows, 2] - (cz[rows] + root)
            np.logical_or.at(ok_base, rows, _joint_pass(geom, base_mount, vx, vy, vz, False))
            np.logical_or.at(ok_plat, rows, _joint_pass(geom, plat_mount, vx, vy, vz, True))
        base[sel] = ok_base
        plat[sel] = ok_plat
    return reach, base, plat


def dense_reach_oracle(geom, pts, alphas, i, j, samples=10_000, chunk=1024):
    """Brute-force swept-hemisphere membership by scanning the stroke."""
    pts = np.asarray(pts, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    lo, hi = geom.rho_min[i - 1], geom.rho_max[i - 1]
    length = rod_len(geom, i)
    rho = np.linspace(lo, hi, samples)
    out = np.zeros(pts.shape[0], dtype=bool)
    for s0 in range(0, pts.shape[0], chunk):
        sel = slice(s0, s0 + chunk)
        ax, ay, cz = anchor_line(geom, i, j, alphas[sel])
        dx = pts[sel, 0] - ax
        dy = pts[sel, 1] - ay
        dz = pts[sel, 2][:, None] - (np.asarray(cz)[:, None] + rho[None, :])
        dist_sq = (dx ** 2 + dy ** 2)[:, None] + dz ** 2
        hit = (dist_sq <= length ** 2) & (dz >= 0)
        out[sel] = hit.any(axis=1)
    return out


def _joint_pass(geom, mount, vx, vy, vz, negate):
    """Angle-limit check of rod directions, re-derived stepwise."""
    rot = mount_rotation_oracle(mount.psi, mount.theta, mount.phi)
    norm = np.sqrt(vx * vx + vy * vy + vz * vz)
    sign = -1.0 if negate else 1.0
    with np.errstate(invalid="ignore", divide="ignore"):
        ux, uy, uz = sign * vx / norm, sign * vy / norm, sign * vz / norm
    jx = rot[0, 0] * ux + rot[1, 0] * uy + rot[2, 0] * uz
    jy = rot[0, 1] * ux + rot[1, 1] * uy + rot[2, 1] * uz
    jz = rot[0, 2] * ux + rot[1, 2] * uy + rot[2, 2] * uz
    beta = -np.arcsin(np.clip(jy, -1.0, 1.0))
    delta = np.arctan2(jx, jz)
    d2 = mount.profile.delta2
    d_lo = max(-d2, -math.pi / 2 - mount.psi)
    d_hi = min(d2, math.pi / 2 - mount.psi)
    limit = np.interp(delta, mount.profile.deltas, mount.profile.betas)
    return (norm > 0) & (delta >= d_lo) & (delta <= d_hi) & (np.abs(beta) <= limit)


def dense_joint_oracle(geom, pts, alphas, i, j, side, samples=10_000, chunk=512):
    """Joint-limit membership via stroke-scan root isolation.

    Brackets the sphere-closure roots on a dense rho grid, refines by
    bisection, and checks the angle limits at each root.  ``side`` is
    "base" or "platform".
    """
    pts = np.asarray(pts, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    lo, hi = geom.rho_min[i - 1], geom.rho_max[i - 1]
    length = rod_len(geom, i)
    negate = side == "platform"
    mount = (geom.platform_joints if negate else geom.base_joints)[f"{i}{j}"]
    rho = np.linspace(lo, hi, samples)
    out = np.zeros(pts.shape[0], dtype=bool)

    for s0 in range(0, pts.shape[0], chunk):
        sel = slice(s0, min(s0 + chunk, pts.shape[0]))
        npts = pts[sel].shape[0]
        ax, ay, cz = anchor_line(geom, i, j, alphas[sel])
        ax, ay, cz = (np.broadcast_to(v, (npts,)) for v in
                      np.broadcast_arrays(ax, ay, cz))
        r_sq = (pts[sel, 0] - ax) ** 2 + (pts[sel, 1] - ay) ** 2
        h = pts[sel, 2] - cz
        g_val = r_sq[:, None] + (h[:, None] - rho[None, :]) ** 2 - length ** 2
        neg = np.signbit(g_val)
        change = neg[:, :-1] != neg[:, 1:]
        rows, cols = np.nonzero(change)
        ok_chunk = np.zeros(npts, dtype=bool)

        # grid nodes already on the sphere within tolerance count as roots
        near = np.abs(g_val) <= 1e-9 * length ** 2
        n_rows, n_cols = np.nonzero(near)
        for rr, cc in zip(n_rows, n_cols):
            vx = pts[sel][rr, 0] - ax[rr]
            vy = pts[sel][rr, 1] - ay[rr]
            vz = pts[sel][rr, 2] - (cz[rr] + rho[cc])
            if _joint_pass(geom, mount, vx, vy, vz, negate):
                ok_chunk[rr] = True

        if rows.size:
            lo_b = rho[cols].copy()
            hi_b = rho[cols + 1].copy()
            g_lo_neg = neg[rows, cols]
            rr_sq = r_sq[rows]
            hh = h[rows]
            for _ in range(52):
                mid = 0.5 * (lo_b + hi_b)
                g_mid_neg = np.signbit(rr_sq + (hh - mid) ** 2 - length ** 2)
                same = g_mid_neg == g_lo_neg
                lo_b = np.where(same, mid, lo_b)
                hi_b = np.where(same, hi_b, mid)
            root = 0.5 * (lo_b + hi_b)
            vx = pts[sel][rows, 0] - ax[rows]
            vy = pts[sel][rows, 1] - ay[rows]
            vz = pts[sel][rows, 2] - (cz[rows] + root)
            passing = _joint_pass(geom, mount, vx, vy, vz, negate)
            np.logical_or.at(ok_chunk, rows, passing)
        out[sel] = ok_chunk
    return out
