"""Rigid head pose from three keypoints, synthetic motion, moving volumes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal
from scipy.spatial.transform import Rotation, Slerp

from .volume import Volume, resample_affine, resample_plane

_ORTHO_TOL = 1e-6


def _check_rotation(r: np.ndarray, what: str):
    if r.shape != (3, 3):
        raise ValueError(f"{what} must be 3x3, got {r.shape}")
    if not np.allclose(r.T @ r, np.eye(3), atol=_ORTHO_TOL):
        raise ValueError(f"{what} is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
        raise ValueError(f"{what} is not a proper rotation (det != +1)")


@dataclass(frozen=True, eq=False)
class KeypointSet:
    eye_left: np.ndarray
    eye_right: np.ndarray
    shoulder_mid: np.ndarray

    def __post_init__(self):
        for name in ("eye_left", "eye_right", "shoulder_mid"):
            p = np.asarray(getattr(self, name), dtype=np.float64).reshape(3)
            object.__setattr__(self, name, p)

    def as_array(self) -> np.ndarray:
        return np.stack([self.eye_left, self.eye_right, self.shoulder_mid])

    def __eq__(self, other):
        if not isinstance(other, KeypointSet):
            return NotImplemented
        return bool(np.array_equal(self.as_array(), other.as_array()))

    __hash__ = None

    @classmethod
    def from_array(cls, pts) -> "KeypointSet":
        pts = np.asarray(pts, dtype=np.float64).reshape(3, 3)
        return cls(pts[0], pts[1], pts[2])

    def transformed(self, transform: "RigidTransform") -> "KeypointSet":
        return KeypointSet.from_array(transform.apply(self.as_array()))


@dataclass(frozen=True)
class Pose:
    """Rigid frame: columns of ``rotation`` are the unit axes X, Y, Z; ``origin`` is O."""

    rotation: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        _check_rotation(rot, "pose rotation")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3))


@dataclass(frozen=True)
class RigidTransform:
    """``p -> rotation @ p + translation`` in physical (mm) coordinates."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    def check(self):
        r = self.rotation
        if r.shape != (3, 3) or not np.all(np.isfinite(r)) or abs(np.linalg.det(r)) < 1e-12:
            raise ValueError("singular transform")

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def compose(self, first: "RigidTransform") -> "RigidTransform":
        """``self after first``."""
        return RigidTransform(self.rotation @ first.rotation, self.rotation @ first.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)


def pose_from_keypoints(kp: KeypointSet) -> Pose:
    """Head frame from the eyes and the shoulder midpoint.

    X points from the left to the right eye, Y is the normal of the keypoint
    plane, Z = X x Y points from the shoulder towards the eyes, and the origin
    is the keypoint centroid.
    """
    pts = kp.as_array()
    scale = max(np.ptp(pts, axis=0).max(), 1e-300)
    x = kp.eye_right - kp.eye_left
    eye_mid = 0.5 * (kp.eye_left + kp.eye_right)
    up = eye_mid - kp.shoulder_mid
    normal = np.cross(up, x)
    if np.linalg.norm(x) < 1e-9 * scale or np.linalg.norm(normal) < 1e-9 * scale**2:
        raise ValueError("degenerate keypoints: the three points are collinear")
    x = x / np.linalg.norm(x)
    y = normal / np.linalg.norm(normal)
    z = np.cross(x, y)
    return Pose(np.column_stack([x, y, z]), pts.mean(axis=0))


def relative_transform(a: Pose, b: Pose) -> RigidTransform:
    """Rigid map carrying frame ``a`` onto frame ``b``.

    Equal poses give the exact identity, so a still subject is resampled
    without round-off.
    """
    if np.array_equal(a.rotation, b.rotation) and np.array_equal(a.origin, b.origin):
        return RigidTransform.identity()
    r = b.rotation @ a.rotation.T
    return RigidTransform(r, b.origin - r @ a.origin)


@dataclass(frozen=True)
class MotionStats:
    """Speed statistics (deg/s and mm/s) a synthetic trajectory should match.

    Defaults are the fetal head motion statistics measured on real scans.
    """

    rot_mean: float = 3.10
    rot_std: float = 3.75
    rot_max: float = 59.7
    trans_mean: float = 2.40
    trans_std: float = 1.80
    trans_max: float = 21.36
    speed_cutoff_hz: float = 0.05
    direction_cutoff_hz: float = 0.1

    def validate(self):
        for name in ("rot_mean", "rot_std", "rot_max", "trans_mean", "trans_std", "trans_max"):
            if getattr(self, name) < 0:
                raise ValueError(f"invalid motion stats: {name} must be >= 0")
        if self.rot_mean > self.rot_max or self.trans_mean > self.trans_max:
            raise ValueError("invalid motion stats: mean speed exceeds maximum")
        if (self.rot_mean > 0 and self.rot_max == 0) or (self.trans_mean > 0 and self.trans_max == 0):
            raise ValueError("invalid motion stats: zero maximum with nonzero mean")
        if self.speed_cutoff_hz <= 0 or self.direction_cutoff_hz <= 0:
            raise ValueError("invalid motion stats: filter cutoffs must be positive")


STATIC = MotionStats(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    keypoints: tuple

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "keypoints", tuple(self.keypoints))
        if len(times) < 2:
            raise ValueError("trajectory needs at least 2 samples")
        if len(times) != len(self.keypoints):
            raise ValueError("times and keypoints differ in length")
        if np.any(np.diff(times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    @property
    def poses(self) -> list[Pose]:
        return [pose_from_keypoints(kp) for kp in self.keypoints]

    def pose_at(self, t: float) -> Pose:
        """Pose at time ``t``: slerp on rotation, linear on origin."""
        times = self.times
        if not times[0] <= t <= times[-1]:
            raise ValueError(f"time {t} outside trajectory range [{times[0]}, {times[-1]}]")
        i = int(np.searchsorted(times, t, side="right")) - 1
        i = min(i, len(times) - 2)
        p0 = pose_from_keypoints(self.keypoints[i])
        p1 = pose_from_keypoints(self.keypoints[i + 1])
        w = (t - times[i]) / (times[i + 1] - times[i])
        if w == 0.0 or (np.array_equal(p0.rotation, p1.rotation) and np.array_equal(p0.origin, p1.origin)):
            return p0
        if w == 1.0:
            return p1
        slerp = Slerp([0.0, 1.0], Rotation.from_matrix(np.stack([p0.rotation, p1.rotation])))
        rot = slerp([w]).as_matrix()[0]
        return Pose(rot, (1 - w) * p0.origin + w * p1.origin)

    def displacement_at(self, t: float) -> RigidTransform:
        """Rigid motion from the first sample's pose to the pose at ``t``."""
        if t == self.times[0]:
            return RigidTransform.identity()
        return relative_transform(pose_from_keypoints(self.keypoints[0]), self.pose_at(t))


def speeds(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Per-step rotation (deg/s) and origin translation (mm/s) speeds."""
    poses = traj.poses
    dt = np.diff(traj.times)
    rot = np.empty(len(dt))
    trans = np.empty(len(dt))
    for i in range(len(dt)):
        rel = poses[i + 1].rotation @ poses[i].rotation.T
        rot[i] = np.degrees(Rotation.from_matrix(rel).magnitude()) / dt[i]
        trans[i] = np.linalg.norm(poses[i + 1].origin - poses[i].origin) / dt[i]
    return rot, trans


def default_keypoints() -> KeypointSet:
    return KeypointSet((-7.0, 12.0, 3.0), (7.0, 12.0, 3.0), (0.0, -4.0, -20.0))


def _lowpass(rng, n, dt, cutoff_hz, dims):
    """Unit-variance first-order low-pass Gaussian noise, ``(n, dims)``."""
    cutoff = min(cutoff_hz, 0.45 / dt)
    sos = signal.butter(1, cutoff, btype="lowpass", fs=1.0 / dt, output="sos")
    burn = int(np.ceil(5.0 / (cutoff * dt)))
    out = signal.sosfilt(sos, rng.standard_normal((n + burn, dims)), axis=0)[burn:]
    return out / out.std(axis=0)


def _velocity_process(rng, n, dt, stats, mean_speed, std_speed, max_speed):
    """Smooth random 3-vector velocity with prescribed speed mean and spread.

    The direction follows low-pass filtered Gaussian noise.  The speed is
    log-normal in a second low-pass process, with its log-spread chosen so
    the coefficient of variation equals ``std_speed / mean_speed``; it is
    then rescaled to the target mean and clipped at ``max_speed``.
    """
    if mean_speed == 0:
        return np.zeros((n, 3))
    direction = _lowpass(rng, n, dt, stats.direction_cutoff_hz, 3)
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    cv = std_speed / mean_speed
    log_sd = np.sqrt(np.log1p(cv * cv))
    speed = np.exp(log_sd * _lowpass(rng, n, dt, stats.speed_cutoff_hz, 1)[:, 0])
    # Clipping pulls the mean down, so rescale and clip until stable.
    for _ in range(50):
        speed *= mean_speed / speed.mean()
        if speed.max() <= max_speed:
            break
        speed = np.minimum(speed, max_speed)
    speed = np.minimum(speed, max_speed)
    return direction * speed[:, None]


def synthesize_trajectory(
    duration_s: float,
    dt_s: float,
    stats: MotionStats = MotionStats(),
    seed: int = 0,
    keypoints: KeypointSet | None = None,
) -> Trajectory:
    """Smooth random rigid motion of a keypoint set.

    Angular and linear velocities have smoothly varying random directions
    and log-normal speeds matching the mean and standard deviation in
    ``stats``, clipped at the maxima.  Rotation is about the keypoint
    centroid.
    """
    if not duration_s > dt_s > 0:
        raise ValueError("need duration_s > dt_s > 0")
    stats.validate()
    kp0 = keypoints if keypoints is not None else default_keypoints()
    pose_from_keypoints(kp0)
    n = int(np.floor(duration_s / dt_s + 1e-9))
    times = np.arange(n + 1) * dt_s
    rng = np.random.default_rng(seed)
    omega = _velocity_process(
        rng, n, dt_s, stats, np.radians(stats.rot_mean), np.radians(stats.rot_std), np.radians(stats.rot_max)
    )
    vel = _velocity_process(rng, n, dt_s, stats, stats.trans_mean, stats.trans_std, stats.trans_max)

    pts0 = kp0.as_array()
    centre0 = pts0.mean(axis=0)
    rot = Rotation.identity()
    centre = centre0.copy()
    kps = [kp0]
    for i in range(n):
        if not omega[i].any() and not vel[i].any():
            kps.append(kps[-1])
            continue
        rot = Rotation.from_rotvec(omega[i] * dt_s) * rot
        centre = centre + vel[i] * dt_s
        kps.append(KeypointSet.from_array(rot.apply(pts0 - centre0) + centre))
    return Trajectory(times, kps)


def volume_at_time(static_v: Volume, traj: Trajectory, t: float) -> Volume:
    """The static phantom moved by the trajectory's displacement at ``t``."""
    disp = traj.displacement_at(t)
    if np.array_equal(disp.rotation, np.eye(3)) and not disp.translation.any():
        return static_v
    return resample_affine(static_v, disp)


def plane_at_time(static_v: Volume, traj: Trajectory, t: float, z: int) -> np.ndarray:
    """Plane ``z`` of :func:`volume_at_time` (cheaper than the full volume)."""
    disp = traj.displacement_at(t)
    if np.array_equal(disp.rotation, np.eye(3)) and not disp.translation.any():
        return np.array(static_v.data[:, :, z])
    return resample_plane(static_v, disp, z)
