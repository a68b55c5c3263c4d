"""Rigid alignment of the expression mesh to a depth frame.

Classic point-to-plane ICP with projective association. Each iteration
gathers correspondences under the current pose, solves the small-angle
linearized 6x6 normal equations for a twist update (3 rotation + 3
translation), and re-orthonormalizes the quaternion. A candidate step
whose mean point-to-plane error increases is rejected and halved, up to
four times, which keeps the error trace non-increasing across accepted
iterations even on noisy data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .correspondence import CorrespondenceSet, DepthFrame, GateConfig, find_correspondences
from .geometry import CameraIntrinsics, Mesh, RigidPose, apply_twist

_MAX_HALVINGS = 4
_COND_LIMIT = 1e12


class InsufficientDataError(RuntimeError):
    """Too few depth correspondences to constrain the rigid pose."""


class DegenerateGeometryError(RuntimeError):
    """The 6x6 point-to-plane system is singular (e.g. a single plane)."""


@dataclass(frozen=True)
class IcpConfig:
    max_iterations: int = 30
    translation_epsilon: float = 1e-5             # meters
    rotation_epsilon: float = 0.01                # degrees
    gates: GateConfig = field(
        default_factory=lambda: GateConfig(max_point_distance=0.05))
    min_correspondences: int = 6

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.translation_epsilon <= 0 or self.rotation_epsilon <= 0:
            raise ValueError("epsilons must be positive")
        if self.min_correspondences < 6:
            raise ValueError("min_correspondences must be >= 6 (6-DOF problem)")


@dataclass
class IcpDiagnostics:
    iterations: int = 0
    correspondence_counts: list = field(default_factory=list)
    mean_errors: list = field(default_factory=list)   # mean squared point-to-plane
    halvings: int = 0
    converged: bool = False

    @property
    def final_count(self) -> int:
        return self.correspondence_counts[-1] if self.correspondence_counts else 0


def _gather(mesh_vertices, pose, frame, intr, gates):
    verts_cam = pose.apply(mesh_vertices)
    corrs = find_correspondences(verts_cam, frame, intr, gates)
    return verts_cam, corrs


def _mean_sq_error(verts_cam, corrs: CorrespondenceSet) -> float:
    v = verts_cam[corrs.vertex_indices]
    r = np.einsum("ij,ij->i", corrs.normals, v - corrs.points)
    return float(np.mean(r * r))


def initial_pose_from_depth(mesh: Mesh, frame: DepthFrame,
                            intr: CameraIntrinsics,
                            min_pixels: int = 50) -> RigidPose:
    """Coarse pose guess: translate the mesh centroid onto the centroid
    of the observed depth cloud, identity rotation.

    Good enough to seed ICP for roughly frontal captures. Raises
    InsufficientDataError when the frame has fewer than min_pixels valid
    depth values.
    """
    from .geometry import backproject

    mask = frame.valid_mask()
    if int(mask.sum()) < min_pixels:
        raise InsufficientDataError(
            f"{int(mask.sum())} valid depth pixels < required {min_pixels}")
    rows, cols = np.nonzero(mask)
    cloud = backproject(intr, cols + 0.5, rows + 0.5,
                        frame.values[rows, cols].astype(np.float64))
    t = cloud.mean(axis=0) - mesh.vertices.mean(axis=0)
    return RigidPose(np.array([1.0, 0.0, 0.0, 0.0]), t)


def align_rigid(mesh: Mesh, frame: DepthFrame, intr: CameraIntrinsics,
                init: RigidPose, cfg: IcpConfig | None = None
                ) -> tuple[RigidPose, IcpDiagnostics]:
    """Point-to-plane ICP from `init`; returns the refined pose and diagnostics.

    Raises InsufficientDataError when fewer than min_correspondences
    vertices match at any iteration, DegenerateGeometryError when the
    normal equations are singular.
    """
    cfg = cfg or IcpConfig()
    if mesh.vertex_count == 0:
        raise InsufficientDataError("empty mesh")

    pose = init
    diag = IcpDiagnostics()

    verts_cam, corrs = _gather(mesh.vertices, pose, frame, intr, cfg.gates)
    if len(corrs) < cfg.min_correspondences:
        raise InsufficientDataError(
            f"{len(corrs)} correspondences < required {cfg.min_correspondences}")
    err = _mean_sq_error(verts_cam, corrs)

    for _ in range(cfg.max_iterations):
        diag.iterations += 1
        diag.correspondence_counts.append(len(corrs))
        diag.mean_errors.append(err)

        v = verts_cam[corrs.vertex_indices]
        n = corrs.normals
        r = np.einsum("ij,ij->i", n, v - corrs.points)
        jac = np.concatenate([np.cross(v, n), n], axis=1)   # (M, 6)
        jtj = jac.T @ jac
        jtr = jac.T @ r
        if np.linalg.cond(jtj) > _COND_LIMIT:
            raise DegenerateGeometryError("point-to-plane normal equations are singular")
        step = -np.linalg.solve(jtj, jtr)

        # step halving keeps the accepted-error trace non-increasing
        accepted = None
        scale = 1.0
        for _h in range(_MAX_HALVINGS + 1):
            cand_pose = apply_twist(pose, scale * step[:3], scale * step[3:])
            cand_verts, cand_corrs = _gather(mesh.vertices, cand_pose, frame, intr, cfg.gates)
            if len(cand_corrs) >= cfg.min_correspondences:
                cand_err = _mean_sq_error(cand_verts, cand_corrs)
                if cand_err <= err:
                    accepted = (cand_pose, cand_verts, cand_corrs, cand_err, scale)
                    break
            if _h < _MAX_HALVINGS:
                diag.halvings += 1
                scale *= 0.5
        if accepted is None:
            break

        pose, verts_cam, corrs, err, scale = accepted
        rot_step = float(np.linalg.norm(scale * step[:3]))
        trans_step = float(np.linalg.norm(scale * step[3:]))
        if rot_step < np.deg2rad(cfg.rotation_epsilon) and trans_step < cfg.translation_epsilon:
            diag.converged = True
            break

    diag.correspondence_counts.append(len(corrs))
    diag.mean_errors.append(err)
    return pose, diag
