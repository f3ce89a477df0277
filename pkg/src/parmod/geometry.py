"""Machine geometry: dimensions, joint mounts, limit profiles, rigid frames.

All lengths are meters, all angles radians.  The fixed frame has its z-axis
pointing downward along the vertical guideways, so "below" means larger z.
``MachineGeometry`` is immutable after loading and safe to share across
workers; every operation in this package is a pure function of its inputs.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .errors import ConfigError, ValidationError

# The two parallelogram legs contribute one representative rod each; the
# non-parallelogram leg needs both of its rods.
RODS: tuple[tuple[int, int], ...] = ((1, 1), (1, 2), (2, 1), (3, 1))
ROD_KEYS: tuple[str, ...] = ("11", "12", "21", "31")

_ORTHO_TOL = 1e-12


@dataclass(frozen=True)
class JointLimitProfile:
    """Piecewise-linear swing limit of a passive spherical joint.

    ``deltas`` are strictly increasing sample abscissae spanning
    ``[-delta2, +delta2]``; ``betas`` are the corresponding maximum tilt
    magnitudes.  Asymmetric beta tables are allowed.
    """

    deltas: tuple[float, ...]
    betas: tuple[float, ...]

    def __post_init__(self):
        if len(self.deltas) == 0 or len(self.deltas) != len(self.betas):
            raise ValidationError("joint profile must pair at least one (delta, beta) sample")
        d = np.asarray(self.deltas, dtype=float)
        b = np.asarray(self.betas, dtype=float)
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(b))):
            raise ValidationError("joint profile samples must be finite")
        if np.any(np.diff(d) <= 0):
            raise ValidationError("joint profile deltas must be strictly increasing")
        if np.any(b < 0):
            raise ValidationError("joint profile beta_max must be >= 0 at every sample")
        if len(d) > 1 and not math.isclose(d[0], -d[-1], rel_tol=0, abs_tol=1e-12):
            raise ValidationError("joint profile must span a symmetric delta range [-delta2, +delta2]")

    @property
    def delta2(self) -> float:
        """Half-range of the swing angle (largest sampled |delta|)."""
        return max(abs(self.deltas[0]), abs(self.deltas[-1]))


def beta_max_at(profile: JointLimitProfile, delta):
    """Interpolated tilt limit at swing angle ``delta``.

    Linear between neighboring samples, exact at sample points.  Raises
    ``ValueError`` outside ``[-delta2, +delta2]``.
    """
    d = np.asarray(delta, dtype=float)
    lim = profile.delta2
    if np.any(np.abs(d) > lim):
        raise ValueError(f"delta outside joint profile range [-{lim!r}, {lim!r}]")
    out = np.interp(d, profile.deltas, profile.betas)
    return float(out) if np.isscalar(delta) or np.ndim(delta) == 0 else out


@dataclass(frozen=True)
class JointMount:
    """Placement angles of a passive joint frame plus its limit profile."""

    psi: float
    theta: float
    phi: float
    profile: JointLimitProfile

    def __post_init__(self):
        for name in ("psi", "theta", "phi"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"joint mount angle {name} must be finite")


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid transform stored as rotation matrix plus translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValidationError("rigid transform needs a 3x3 rotation and a 3-vector")
        if np.abs(r.T @ r - np.eye(3)).max() > _ORTHO_TOL:
            raise ValidationError("rotation is not orthonormal within 1e-12")
        if np.linalg.det(r) < 0:
            raise ValidationError("rotation must have determinant +1")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def apply(self, p: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation


@dataclass(frozen=True)
class MachineGeometry:
    """All dimensions of the parallel module plus environment planes.

    x-offsets: ``d1``/``D1`` place the slider plane and the platform
    attachments of the non-parallelogram leg (leg 1); ``d2``/``D2`` do the
    same for the two parallelogram legs (legs 2 and 3).  ``R1``/``r1`` are
    the half-spacings of leg-1 platform/slider attachments, ``R2``/``r4``
    the y-offsets for legs 2 and 3.
    """

    D1: float
    d1: float
    D2: float
    d2: float
    R1: float
    r1: float
    R2: float
    r4: float
    L1: float
    L2: float
    L3: float
    rho_min: tuple[float, float, float]
    rho_max: tuple[float, float, float]
    z_hood: float
    z_tilting_table: float
    l_p1: float
    l_p2: float
    base_joints: Mapping[str, JointMount] = field(repr=False)
    platform_joints: Mapping[str, JointMount] = field(repr=False)

    def __post_init__(self):
        lengths = {
            "D1": self.D1, "d1": self.d1, "D2": self.D2, "d2": self.d2,
            "R1": self.R1, "r1": self.r1, "R2": self.R2, "r4": self.r4,
            "L1": self.L1, "L2": self.L2, "L3": self.L3,
            "z_hood": self.z_hood, "z_tilting_table": self.z_tilting_table,
            "l_p1": self.l_p1, "l_p2": self.l_p2,
        }
        for i in range(3):
            lengths[f"rho{i + 1}_min"] = self.rho_min[i]
        for name, value in lengths.items():
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be strictly positive, got {value!r}")
        for i in range(3):
            if not (math.isfinite(self.rho_max[i]) and self.rho_min[i] < self.rho_max[i]):
                raise ValidationError(
                    f"rho{i + 1}_min >= rho{i + 1}_max: empty actuator stroke")
        if self.r1 >= self.R1:
            raise ValidationError("r1 >= R1 forbids tilt")
        if self.L1 <= self.R1 - self.r1:
            raise ValidationError("L1 <= R1 - r1: leg 1 cannot close at zero tilt")
        if self.L2 ** 2 <= (self.R2 - self.r4) ** 2:
            raise ValidationError("L2^2 <= (R2 - r4)^2: leg 2 cannot close at zero tilt")
        if self.L3 ** 2 <= (self.R2 - self.r4) ** 2:
            raise ValidationError("L3^2 <= (R2 - r4)^2: leg 3 cannot close at zero tilt")
        if self.z_hood + self.l_p2 >= self.z_tilting_table - self.l_p1:
            raise ValidationError(
                "z_hood + l_p2 >= z_tilting_table - l_p1: empty vertical travel")
        for side, joints in (("base_joint", self.base_joints), ("platform_joint", self.platform_joints)):
            if set(joints) != set(ROD_KEYS):
                raise ValidationError(f"{side} mounts must cover rods {ROD_KEYS}")

    def rod_length(self, i: int, j: int) -> float:
        _check_rod(i, j)
        return (self.L1, self.L2, self.L3)[i - 1]

    def stroke(self, i: int) -> tuple[float, float]:
        return self.rho_min[i - 1], self.rho_max[i - 1]

    def max_abs_tilt(self) -> float:
        return math.acos(self.r1 / self.R1)


def _check_rod(i: int, j: int) -> str:
    if (i, j) not in RODS:
        raise ValueError(f"invalid rod ({i}, {j}); valid rods are {RODS}")
    return f"{i}{j}"


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def mount_rotation(mount: JointMount) -> np.ndarray:
    """Joint frame orientation: y-swing, then x-tilt, then z-spin."""
    return rot_y(mount.psi) @ rot_x(mount.theta) @ rot_z(mount.phi)


def slider_point(geom: MachineGeometry, i: int, j: int, rho):
    """Slider-side joint center A_ij for slider coordinate ``rho``."""
    key = _check_rod(i, j)
    rho = np.asarray(rho, dtype=float)
    if key == "11":
        xy = (geom.d1, geom.r1)
    elif key == "12":
        xy = (geom.d1, -geom.r1)
    elif key == "21":
        xy = (geom.d2, -geom.r4)
    else:
        xy = (geom.d2, geom.r4)
    out = np.empty(rho.shape + (3,), dtype=float)
    out[..., 0] = xy[0]
    out[..., 1] = xy[1]
    out[..., 2] = rho
    return out


def platform_offset(geom: MachineGeometry, i: int, j: int, alpha):
    """Vector from platform point P to the attachment B_ij at tilt ``alpha``."""
    key = _check_rod(i, j)
    alpha = np.asarray(alpha, dtype=float)
    c, s = np.cos(alpha), np.sin(alpha)
    out = np.empty(alpha.shape + (3,), dtype=float)
    if key == "11":
        out[..., 0], out[..., 1], out[..., 2] = geom.D1, geom.R1 * c, geom.R1 * s
    elif key == "12":
        out[..., 0], out[..., 1], out[..., 2] = geom.D1, -geom.R1 * c, -geom.R1 * s
    elif key == "21":
        out[..., 0], out[..., 1], out[..., 2] = geom.D2, -geom.R2 * c, -geom.R2 * s
    else:
        out[..., 0], out[..., 1], out[..., 2] = geom.D2, geom.R2 * c, geom.R2 * s
    return out


def virtual_anchor(geom: MachineGeometry, i: int, j: int, rho, alpha):
    """Anchor A'_ij = A_ij - (B_ij - P); P is on the rod sphere about it."""
    return slider_point(geom, i, j, rho) - platform_offset(geom, i, j, alpha)


def base_joint_frame(geom: MachineGeometry, i: int, j: int, rho: float, alpha: float) -> RigidTransform:
    """Frame of the slider-side joint: mount rotation at the anchor A'_ij."""
    key = _check_rod(i, j)
    rot = mount_rotation(geom.base_joints[key])
    return RigidTransform(rotation=rot, translation=virtual_anchor(geom, i, j, float(rho), float(alpha)))


def attachment_points(geom: MachineGeometry, pose, i: int, j: int, rho: float):
    """Slider-side and platform-side joint centers (A_ij, B_ij) for a pose."""
    a = slider_point(geom, i, j, float(rho))
    b = np.array([pose.x_p, pose.y_p, pose.z_p]) + platform_offset(geom, i, j, float(pose.alpha))
    return a, b


# -------------------------- configuration loading --------------------------

_SCALAR_KEYS = (
    "D1", "d1", "D2", "d2", "R1", "r1", "R2", "r4", "L1", "L2", "L3",
    "rho1_min", "rho1_max", "rho2_min", "rho2_max", "rho3_min", "rho3_max",
    "z_hood", "z_tilting_table", "l_p1", "l_p2",
)
_MOUNT_FIELDS = ("psi", "theta", "phi", "profile")


def _expected_keys() -> set[str]:
    keys = set(_SCALAR_KEYS)
    for side in ("base_joint", "platform_joint"):
        for rod in ROD_KEYS:
            for f in _MOUNT_FIELDS:
                keys.add(f"{side}.{rod}.{f}")
    return keys


def _parse_profile(value: str, key: str) -> JointLimitProfile:
    text = value.strip()
    if not (text.startswith("(") and text.endswith(")")):
        raise ConfigError(f"{key}: profile must look like (d0:b0, d1:b1, ...)")
    deltas, betas = [], []
    for item in text[1:-1].split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise ConfigError(f"{key}: profile entry {item!r} is not 'delta:beta'")
        d_text, b_text = item.split(":", 1)
        try:
            deltas.append(float(d_text))
            betas.append(float(b_text))
        except ValueError as exc:
            raise ConfigError(f"{key}: bad number in profile entry {item!r}") from exc
    if not deltas:
        raise ConfigError(f"{key}: profile has no samples")
    return JointLimitProfile(deltas=tuple(deltas), betas=tuple(betas))


def load_machine_config(text: str) -> MachineGeometry:
    """Parse and validate a flat ``key = value`` configuration document."""
    expected = _expected_keys()
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in expected:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if key.endswith(".profile"):
            values[key] = _parse_profile(value, key)
        else:
            try:
                values[key] = float(value)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: {key} is not a number: {value!r}") from exc

    missing = sorted(expected - set(values))
    if missing:
        raise ConfigError(f"missing keys: {', '.join(missing)}")

    def mounts(side: str) -> dict[str, JointMount]:
        return {
            rod: JointMount(
                psi=values[f"{side}.{rod}.psi"],
                theta=values[f"{side}.{rod}.theta"],
                phi=values[f"{side}.{rod}.phi"],
                profile=values[f"{side}.{rod}.profile"],
            )
            for rod in ROD_KEYS
        }

    return MachineGeometry(
        D1=values["D1"], d1=values["d1"], D2=values["D2"], d2=values["d2"],
        R1=values["R1"], r1=values["r1"], R2=values["R2"], r4=values["r4"],
        L1=values["L1"], L2=values["L2"], L3=values["L3"],
        rho_min=(values["rho1_min"], values["rho2_min"], values["rho3_min"]),
        rho_max=(values["rho1_max"], values["rho2_max"], values["rho3_max"]),
        z_hood=values["z_hood"], z_tilting_table=values["z_tilting_table"],
        l_p1=values["l_p1"], l_p2=values["l_p2"],
        base_joints=mounts("base_joint"),
        platform_joints=mounts("platform_joint"),
    )


def load_machine_file(path) -> MachineGeometry:
    with open(path, "r", encoding="utf-8") as handle:
        return load_machine_config(handle.read())


def geometry_hash(geom: MachineGeometry) -> str:
    """Stable digest of every dimension, mount angle and profile sample."""
    parts = []
    for name in _SCALAR_KEYS:
        if name.startswith("rho"):
            leg = int(name[3]) - 1
            value = (geom.rho_min if name.endswith("min") else geom.rho_max)[leg]
        else:
            value = getattr(geom, name)
        parts.append(f"{name}={value!r}")
    for side, joints in (("base_joint", geom.base_joints), ("platform_joint", geom.platform_joints)):
        for rod in ROD_KEYS:
            m = joints[rod]
            samples = ",".join(f"{d!r}:{b!r}" for d, b in zip(m.profile.deltas, m.profile.betas))
            parts.append(f"{side}.{rod}={m.psi!r}/{m.theta!r}/{m.phi!r}/({samples})")
    return hashlib.sha256("\n".join(parts).encode()).hexdigest()


def with_profiles(geom: MachineGeometry, profile: JointLimitProfile,
                  platform_profile: JointLimitProfile | None = None) -> MachineGeometry:
    """Copy of ``geom`` with every joint limit profile replaced (test helper)."""
    pp = platform_profile if platform_profile is not None else profile
    base = {k: replace(m, profile=profile) for k, m in geom.base_joints.items()}
    plat = {k: replace(m, profile=pp) for k, m in geom.platform_joints.items()}
    return replace(geom, base_joints=base, platform_joints=plat)
