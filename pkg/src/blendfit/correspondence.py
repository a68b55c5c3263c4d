"""Depth-map correspondences and the residual terms built from them.

Association is projective: a camera-frame vertex is projected into the
depth image, the depth under it is read, and the backprojected pixel
center becomes the correspondence target. The target normal is estimated
by central differences of the backprojected 4-neighborhood (cross product
of the u- and v-direction tangents), oriented toward the camera.

Two robustness gates reject unusable matches: a point-distance gate and a
view-incidence gate that drops targets whose normal is more than
max_normal_angle away from the direction back to the camera (grazing
surfaces, where depth-map normals are unreliable).

A depth value of exactly 0 marks an invalid pixel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    BehindCameraError,
    CameraIntrinsics,
    _readonly,
    project,
)


class NoDataError(ValueError):
    """No depth correspondences and no landmarks to fit against."""


@dataclass(frozen=True)
class DepthFrame:
    """Metric depth image, row-major (height, width), 0.0 = invalid pixel."""

    values: np.ndarray
    frame_index: int = 0
    timestamp: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 2:
            raise ValueError(f"depth values must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or v.min() < 0.0:
            raise ValueError("depth values must be finite and >= 0")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def valid_mask(self) -> np.ndarray:
        return self.values > 0.0


@dataclass(frozen=True)
class DepthCorrespondence:
    """Match of one mesh vertex to a depth-map surface point and normal."""

    vertex_index: int
    target_point: np.ndarray
    target_normal: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.target_point, dtype=np.float64).reshape(3)
        n = np.asarray(self.target_normal, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > 1e-6:
            raise ValueError("target normal must be unit length")
        object.__setattr__(self, "target_point", _readonly(p))
        object.__setattr__(self, "target_normal", _readonly(n))


@dataclass(frozen=True)
class CorrespondenceSet:
    """Batch of depth correspondences as parallel arrays.

    vertex_indices: (M,) int, points/normals: (M, 3). The vectorized
    search returns this form; it converts to and from per-item
    DepthCorrespondence lists where convenient.
    """

    vertex_indices: np.ndarray
    points: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.vertex_indices, dtype=np.int64).reshape(-1)
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        nrm = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if not (len(idx) == len(pts) == len(nrm)):
            raise ValueError("correspondence arrays must have equal length")
        object.__setattr__(self, "vertex_indices", _readonly(idx))
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "normals", _readonly(nrm))

    def __len__(self) -> int:
        return len(self.vertex_indices)

    def to_list(self) -> list:
        return [DepthCorrespondence(int(i), p, n)
                for i, p, n in zip(self.vertex_indices, self.points, self.normals)]

    @classmethod
    def from_list(cls, corrs) -> "CorrespondenceSet":
        if isinstance(corrs, CorrespondenceSet):
            return corrs
        corrs = list(corrs)
        if not corrs:
            return cls(np.zeros(0, dtype=np.int64), np.zeros((0, 3)), np.zeros((0, 3)))
        return cls(
            np.array([c.vertex_index for c in corrs], dtype=np.int64),
            np.stack([c.target_point for c in corrs]),
            np.stack([c.target_normal for c in corrs]),
        )


@dataclass(frozen=True)
class GateConfig:
    """Robustness gates for projective association."""

    max_point_distance: float = 0.02   # meters
    max_normal_angle: float = 60.0     # degrees, view-incidence limit
    depth_window: int = 1              # pixel offset for normal estimation

    def __post_init__(self):
        if self.max_point_distance <= 0 or self.max_normal_angle <= 0:
            raise ValueError("gates must be positive")
        if self.depth_window < 1:
            raise ValueError("depth_window must be >= 1")


def find_correspondences(vertices_cam, frame: DepthFrame, intr: CameraIntrinsics,
                         gates: GateConfig) -> CorrespondenceSet:
    """Vectorized projective association for a batch of camera-frame vertices.

    For each vertex: project to a pixel, read the depth there, estimate
    the surface normal from the backprojected 4-neighborhood, and take as
    target the intersection of the vertex's own view ray with the tangent
    plane at the backprojected pixel center. The ray cast removes the
    half-pixel tangential quantization a raw pixel-center point carries,
    and is exact on locally planar surfaces. Distance and incidence gates
    apply last; vertices that fail any step are simply absent from the
    result.
    """
    verts = np.asarray(vertices_cam, dtype=np.float64).reshape(-1, 3)
    m = len(verts)
    if m == 0:
        return CorrespondenceSet.from_list([])

    depth = np.asarray(frame.values, dtype=np.float64)
    h, w = depth.shape
    win = gates.depth_window

    keep = verts[:, 2] > 0.0
    uv = np.zeros((m, 2))
    z = np.where(keep, verts[:, 2], 1.0)
    uv[:, 0] = intr.fx * verts[:, 0] / z + intr.cx
    uv[:, 1] = intr.fy * verts[:, 1] / z + intr.cy

    ix = np.floor(uv[:, 0]).astype(np.int64)
    iy = np.floor(uv[:, 1]).astype(np.int64)
    # the normal window must also be inside the image
    keep &= (ix >= win) & (ix < w - win) & (iy >= win) & (iy < h - win)

    ixc = np.clip(ix, win, max(w - 1 - win, win))
    iyc = np.clip(iy, win, max(h - 1 - win, win))
    d0 = depth[iyc, ixc]
    dxp = depth[iyc, ixc + win]
    dxm = depth[iyc, ixc - win]
    dyp = depth[iyc + win, ixc]
    dym = depth[iyc - win, ixc]
    keep &= (d0 > 0) & (dxp > 0) & (dxm > 0) & (dyp > 0) & (dym > 0)

    def lift(u_idx, v_idx, d):
        u = u_idx + 0.5
        v = v_idx + 0.5
        return np.stack([(u - intr.cx) * d / intr.fx,
                         (v - intr.cy) * d / intr.fy,
                         d], axis=-1)

    anchor = lift(ixc, iyc, d0)
    tan_u = lift(ixc + win, iyc, dxp) - lift(ixc - win, iyc, dxm)
    tan_v = lift(ixc, iyc + win, dyp) - lift(ixc, iyc - win, dym)
    normal = np.cross(tan_u, tan_v)
    nlen = np.linalg.norm(normal, axis=1)
    keep &= nlen > 0
    normal = normal / np.where(nlen > 0, nlen, 1.0)[:, None]

    # orient toward the camera
    flip = np.einsum("ij,ij->i", normal, anchor) > 0
    normal[flip] = -normal[flip]

    # cast the vertex's view ray onto the tangent plane at the anchor;
    # keep the anchor itself when the ray grazes the plane
    rays = np.stack([(uv[:, 0] - intr.cx) / intr.fx,
                     (uv[:, 1] - intr.cy) / intr.fy,
                     np.ones(m)], axis=-1)
    n_dot_ray = np.einsum("ij,ij->i", normal, rays)
    n_dot_anchor = np.einsum("ij,ij->i", normal, anchor)
    grazing = np.abs(n_dot_ray) < 1e-6
    t = np.where(grazing, 1.0, n_dot_anchor / np.where(grazing, 1.0, n_dot_ray))
    target = np.where((grazing | (t <= 0.0))[:, None], anchor, t[:, None] * rays)

    # distance gate
    keep &= np.linalg.norm(verts - target, axis=1) <= gates.max_point_distance

    # view-incidence gate: angle between the normal and the ray back to
    # the camera
    tlen = np.linalg.norm(target, axis=1)
    keep &= tlen > 0
    to_cam = -target / np.where(tlen > 0, tlen, 1.0)[:, None]
    cos_inc = np.einsum("ij,ij->i", normal, to_cam)
    keep &= cos_inc >= np.cos(np.deg2rad(gates.max_normal_angle))

    idx = np.flatnonzero(keep)
    return CorrespondenceSet(idx, target[idx], normal[idx])


def find_correspondence(vertex_cam, frame: DepthFrame, intr: CameraIntrinsics,
                        gates: GateConfig):
    """Single-vertex projective association; None when every gate fails."""
    found = find_correspondences(np.asarray(vertex_cam).reshape(1, 3), frame, intr, gates)
    if len(found) == 0:
        return None
    return DepthCorrespondence(0, found.points[0], found.normals[0])


def depth_residual(v, corr: DepthCorrespondence) -> float:
    """Squared point-to-plane distance (n^T (v - target))^2, meters^2."""
    d = float(np.dot(corr.target_normal, np.asarray(v, dtype=np.float64) - corr.target_point))
    return d * d


def landmark_residual(v_cam, intr: CameraIntrinsics, u_j) -> float:
    """Squared pixel distance between the projected vertex and a landmark."""
    r = project(intr, v_cam) - np.asarray(u_j, dtype=np.float64)
    return float(r @ r)


def landmark_jacobian(v_cam, intr: CameraIntrinsics) -> np.ndarray:
    """Analytic 2x3 Jacobian of the pinhole projection at a camera-frame point."""
    x, y, z = np.asarray(v_cam, dtype=np.float64)
    if z <= 0.0:
        raise BehindCameraError("cannot linearize projection behind the camera")
    return np.array([
        [intr.fx / z, 0.0, -intr.fx * x / (z * z)],
        [0.0, intr.fy / z, -intr.fy * y / (z * z)],
    ])


@dataclass(frozen=True)
class LandmarkSet:
    """2D facial landmarks bound to mesh vertices.

    Parallel arrays: ids (M,), vertex_indices (M,), pixels (M, 2),
    confidences (M,) in [0, 1].
    """

    ids: tuple
    vertex_indices: np.ndarray
    pixels: np.ndarray
    confidences: np.ndarray = field(default=None)
    image_size: tuple = field(default=None)

    def __post_init__(self):
        ids = tuple(str(s) for s in self.ids)
        idx = np.asarray(self.vertex_indices, dtype=np.int64).reshape(-1)
        px = np.asarray(self.pixels, dtype=np.float64).reshape(-1, 2)
        conf = self.confidences
        if conf is None:
            conf = np.ones(len(ids))
        conf = np.asarray(conf, dtype=np.float64).reshape(-1)
        if not (len(ids) == len(idx) == len(px) == len(conf)):
            raise ValueError("landmark arrays must have equal length")
        if len(conf) and (conf.min() < 0 or conf.max() > 1):
            raise ValueError("confidences must be in [0, 1]")
        if self.image_size is not None and len(px):
            w, h = self.image_size
            if px[:, 0].min() < 0 or px[:, 0].max() >= w or \
               px[:, 1].min() < 0 or px[:, 1].max() >= h:
                raise ValueError("landmark pixels outside image bounds")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "vertex_indices", _readonly(idx))
        object.__setattr__(self, "pixels", _readonly(px))
        object.__setattr__(self, "confidences", _readonly(conf))
        object.__setattr__(self, "image_size",
                           None if self.image_size is None else tuple(self.image_size))

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def empty(cls) -> "LandmarkSet":
        return cls((), np.zeros(0, dtype=np.int64), np.zeros((0, 2)), np.zeros(0))

    def check_vertices(self, vertex_count: int) -> None:
        if len(self) and self.vertex_indices.max() >= vertex_count:
            raise ValueError("landmark vertex index out of range for the model")
