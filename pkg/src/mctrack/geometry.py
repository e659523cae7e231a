"""Pinhole camera geometry: projection, camera centers, ground-plane back-projection.

Coordinate conventions:

  World frame (right-handed):
    - z-axis is the height axis; the ground plane is z = 0 (meters).
  Camera frame (standard computer vision):
    - x right, y down, z forward along the optical axis.
  Image frame:
    - u right, v down, origin at the top-left corner (pixels).

A camera is the finite projective model x = P X with P = K [R | t],
decomposed as P = [M | p4] with M = K R.  The camera center in world
coordinates is C = -M^{-1} p4 and satisfies P (C, 1) = 0.

The back-projection of an image point x onto the ground plane follows
the closed form  X = -(C_3 / d_3) M^{-1} x + C  where d = M^{-1} x is
the ray direction and the subscript 3 selects the z-component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    PointAtCamera,
    PointBehindCamera,
    RayParallelToGround,
    SingularMatrix,
)

# |det(M)| below EPS_SING times the matrix scale cubed counts as singular.
EPS_SING = 1e-12
# |ray z-component| below EPS_RAY means the ray never hits the ground.
EPS_RAY = 1e-9

# Default pedestrian body cylinder (meters).
DEFAULT_PERSON_RADIUS = 0.3
DEFAULT_PERSON_HEIGHT = 1.7

# Rim samples per circle when projecting a cylinder to a box.
CYLINDER_RIM_SAMPLES = 16


@dataclass(frozen=True)
class ImagePoint:
    u: float
    v: float

    def homogeneous(self) -> np.ndarray:
        return np.array([self.u, self.v, 1.0])


@dataclass(frozen=True)
class GroundPoint:
    """Point on the ground plane; z is 0 by construction."""

    x: float
    y: float

    @property
    def z(self) -> float:
        return 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, 0.0])

    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class BoundingBox:
    left: float
    top: float
    width: float
    height: float

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def bottom(self) -> float:
        return self.top + self.height

    def foot_pixel(self) -> ImagePoint:
        """Center of the bottom edge."""
        return ImagePoint(self.left + self.width / 2.0, self.top + self.height)

    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class PersonCylinder:
    center: GroundPoint
    radius: float = DEFAULT_PERSON_RADIUS
    height: float = DEFAULT_PERSON_HEIGHT


@dataclass(frozen=True)
class CameraModel:
    id: int
    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    P: np.ndarray = field(repr=False)
    M: np.ndarray = field(repr=False)
    p4: np.ndarray = field(repr=False)
    M_inv: np.ndarray = field(repr=False)
    center: np.ndarray


def build_camera(cam_id: int, K: np.ndarray, R: np.ndarray, t: np.ndarray,
                 eps_sing: float = EPS_SING) -> CameraModel:
    """Assemble the derived projection quantities from K, R, t.

    Raises SingularMatrix when K R is numerically singular relative to
    its scale.
    """
    K = np.asarray(K, dtype=float).reshape(3, 3)
    R = np.asarray(R, dtype=float).reshape(3, 3)
    t = np.asarray(t, dtype=float).reshape(3)
    M = K @ R
    scale = np.linalg.norm(M) / math.sqrt(3.0)
    det = np.linalg.det(M)
    if abs(det) <= eps_sing * max(scale, 1e-300) ** 3:
        raise SingularMatrix(f"camera {cam_id}: |det(K R)| = {abs(det):.3e}")
    P = np.hstack([M, (K @ t).reshape(3, 1)])
    p4 = P[:, 3].copy()
    M_inv = np.linalg.inv(M)
    center = -M_inv @ p4
    return CameraModel(id=cam_id, K=K, R=R, t=t, P=P, M=M, p4=p4,
                       M_inv=M_inv, center=center)


def project_point(cam: CameraModel, X) -> ImagePoint:
    """Project a 3D world point to pixel coordinates.

    Raises PointAtCamera when X coincides with the camera center and
    PointBehindCamera when the point has non-positive depth.
    """
    X = np.asarray(X, dtype=float).reshape(3)
    xh = cam.M @ X + cam.p4
    norm = np.linalg.norm(xh)
    ref = np.linalg.norm(cam.M) * max(np.linalg.norm(X), 1.0)
    if norm <= 1e-12 * max(ref, 1e-300):
        raise PointAtCamera(f"camera {cam.id}: point {X} is at the camera center")
    depth = xh[2]
    if depth <= 0.0:
        raise PointBehindCamera(
            f"camera {cam.id}: point {X} has depth {depth:.3e}")
    return ImagePoint(xh[0] / depth, xh[1] / depth)


def ground_backproject(cam: CameraModel, x: ImagePoint,
                       eps_ray: float = EPS_RAY) -> GroundPoint:
    """Intersect the back-projection ray of pixel x with the ground plane.

    Raises RayParallelToGround when the ray direction has (numerically)
    no z-component.
    """
    d = cam.M_inv @ x.homogeneous()
    if abs(d[2]) <= eps_ray:
        raise RayParallelToGround(
            f"camera {cam.id}: ray through ({x.u:.1f}, {x.v:.1f}) is parallel to the ground")
    s = -cam.center[2] / d[2]
    p = s * d + cam.center
    # z is zero by construction; only x and y are kept.
    return GroundPoint(p[0], p[1])


def foot_point(cam: CameraModel, box: BoundingBox) -> GroundPoint:
    """Ground position of a detection: back-projected bottom-edge center."""
    return ground_backproject(cam, box.foot_pixel())


def project_cylinder(cam: CameraModel, cyl: PersonCylinder,
                     samples: int = CYLINDER_RIM_SAMPLES) -> BoundingBox:
    """Axis-aligned box of a person cylinder seen by a camera.

    The cylinder is sampled at `samples` rim points on its base and top
    circles; the box is the bounding rectangle of their projections.
    Raises PointBehindCamera when any sampled point is not in front of
    the camera.
    """
    angles = 2.0 * math.pi * np.arange(samples) / samples
    cx, cy = cyl.center.x, cyl.center.y
    ring_x = cx + cyl.radius * np.cos(angles)
    ring_y = cy + cyl.radius * np.sin(angles)
    pts = np.empty((2 * samples, 3))
    pts[:samples, 0] = ring_x
    pts[:samples, 1] = ring_y
    pts[:samples, 2] = 0.0
    pts[samples:, 0] = ring_x
    pts[samples:, 1] = ring_y
    pts[samples:, 2] = cyl.height
    xh = pts @ cam.M.T + cam.p4
    depths = xh[:, 2]
    if np.any(depths <= 0.0):
        raise PointBehindCamera(
            f"camera {cam.id}: cylinder at ({cx:.2f}, {cy:.2f}) is not fully in front")
    u = xh[:, 0] / depths
    v = xh[:, 1] / depths
    return BoundingBox(float(u.min()), float(v.min()),
                       float(u.max() - u.min()), float(v.max() - v.min()))


def person_box(cam: CameraModel, ground: GroundPoint,
               radius: float = DEFAULT_PERSON_RADIUS,
               height: float = DEFAULT_PERSON_HEIGHT) -> BoundingBox:
    """Detector-style box for a person standing at `ground`.

    Width and top come from the projected body cylinder; the bottom
    edge is anchored so that the box's bottom-center pixel is exactly
    the projection of the ground position, matching the foot-point
    convention used everywhere else (feet are thin, so real detector
    boxes end at the ground contact, not at the body's near silhouette).
    """
    raw = project_cylinder(cam, PersonCylinder(ground, radius, height))
    anchor = project_point(cam, ground.as_array())
    return BoundingBox(anchor.u - raw.width / 2.0, raw.top,
                       raw.width, anchor.v - raw.top)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two axis-aligned boxes."""
    ix = min(a.right, b.right) - max(a.left, b.left)
    iy = min(a.bottom, b.bottom) - max(a.top, b.top)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area() + b.area() - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def look_at_camera(cam_id: int, position, target, fx: float, fy: float,
                   cx: float, cy: float) -> CameraModel:
    """Build a camera at `position` looking at `target` (both world, meters).

    Uses the world z-axis to level the image; falls back to the y-axis
    when looking straight up or down.
    """
    position = np.asarray(position, dtype=float).reshape(3)
    target = np.asarray(target, dtype=float).reshape(3)
    forward = target - position
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("camera position and target coincide")
    z = forward / norm
    up = np.array([0.0, 0.0, 1.0])
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, np.array([0.0, 1.0, 0.0]))
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.vstack([x, y, z])
    t = -R @ position
    K = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
    return build_camera(cam_id, K, R, t)
