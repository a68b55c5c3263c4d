"""Synthetic data generation with known ground truth.

Everything downstream (rigid alignment, the coefficient solver, rig
personalization) is validated against data produced here, so the
conventions are pinned down once:

* pixel (i, j) is sampled at its center (i + 0.5, j + 0.5), top-left origin;
* rasterization is perspective-correct (screen-space barycentrics with
  1/z interpolation) into a nearest-wins z-buffer;
* only camera-facing triangles are drawn (back-face culling), mimicking
  what a depth sensor sees;
* uncovered pixels keep the invalid marker 0.0;
* all randomness flows from a single integer seed, and per-frame noise
  streams are derived as (seed, frame_index) so frame renders can run in
  any order and still produce bit-identical output.

The test head is procedural: a low-poly face-like shell (elliptic dome
with nose, brow, and chin features) with 51 localized smooth bump
blendshapes. It ships as a generator, not a binary asset.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .correspondence import DepthFrame, LandmarkSet
from .geometry import (
    BlendshapeModel,
    BscSequence,
    CameraIntrinsics,
    Mesh,
    RigidPose,
    SequenceFrame,
    evaluate_mesh,
    validate_bsc,
    vertex_normals,
)

log = logging.getLogger(__name__)

_Z_NEAR = 1e-6


@dataclass(frozen=True)
class NoiseConfig:
    """Sensor noise model for synthetic captures."""

    depth_sigma: float = 0.0       # meters
    landmark_sigma: float = 0.0    # pixels
    landmark_dropout: float = 0.0  # probability per landmark
    seed: int = 0

    def __post_init__(self):
        if self.depth_sigma < 0 or self.landmark_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")
        if not 0.0 <= self.landmark_dropout <= 1.0:
            raise ValueError("dropout must be a probability")


@dataclass(frozen=True)
class ScriptFrame:
    coefficients: np.ndarray
    pose: RigidPose
    timestamp: float

    def __post_init__(self):
        object.__setattr__(self, "coefficients", validate_bsc(self.coefficients))


@dataclass(frozen=True)
class SequenceScript:
    """Ground-truth expression script: per-frame coefficients and pose."""

    frames: tuple

    def __post_init__(self):
        frames = tuple(self.frames)
        ts = [f.timestamp for f in frames]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("script timestamps must be strictly increasing")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)


def constant_script(x, pose: RigidPose, count: int, fps: float = 30.0) -> SequenceScript:
    """Script that holds one expression and pose for `count` frames."""
    x = np.asarray(x, dtype=np.float64)
    return SequenceScript(tuple(
        ScriptFrame(x, pose, i / fps) for i in range(count)))


def render_depth(mesh: Mesh, pose: RigidPose, intr: CameraIntrinsics) -> DepthFrame:
    """Software z-buffer rasterization of the posed mesh into a depth frame."""
    h, w = intr.height, intr.width
    zbuf = np.full((h, w), np.inf)

    verts = pose.apply(mesh.vertices)
    if mesh.face_count == 0 or len(verts) == 0:
        return DepthFrame(np.zeros((h, w), dtype=np.float32))

    tris = verts[mesh.faces]                      # (F, 3, 3)
    zs = tris[:, :, 2]
    in_front = np.all(zs > _Z_NEAR, axis=1)

    normals = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    centroids = tris.mean(axis=1)
    facing = np.einsum("ij,ij->i", normals, centroids) < 0.0

    drawable = np.flatnonzero(in_front & facing)
    uv = np.empty_like(tris[:, :, :2])
    np.divide(intr.fx * tris[:, :, 0], zs, out=uv[:, :, 0], where=zs > _Z_NEAR)
    np.divide(intr.fy * tris[:, :, 1], zs, out=uv[:, :, 1], where=zs > _Z_NEAR)
    uv[:, :, 0] += intr.cx
    uv[:, :, 1] += intr.cy

    for f in drawable:
        p = uv[f]
        x0 = int(np.floor(p[:, 0].min() - 0.5))
        x1 = int(np.ceil(p[:, 0].max() - 0.5))
        y0 = int(np.floor(p[:, 1].min() - 0.5))
        y1 = int(np.ceil(p[:, 1].max() - 0.5))
        x0 = max(x0, 0)
        y0 = max(y0, 0)
        x1 = min(x1, w - 1)
        y1 = min(y1, h - 1)
        if x1 < x0 or y1 < y0:
            continue

        px = np.arange(x0, x1 + 1) + 0.5
        py = np.arange(y0, y1 + 1) + 0.5
        gx, gy = np.meshgrid(px, py)

        ax, ay = p[0]
        bx, by = p[1]
        cx_, cy_ = p[2]
        denom = (bx - ax) * (cy_ - ay) - (by - ay) * (cx_ - ax)
        if denom == 0.0:
            continue
        l0 = ((bx - gx) * (cy_ - gy) - (by - gy) * (cx_ - gx)) / denom
        l1 = ((cx_ - gx) * (ay - gy) - (cy_ - gy) * (ax - gx)) / denom
        l2 = 1.0 - l0 - l1
        inside = (l0 >= 0) & (l1 >= 0) & (l2 >= 0)
        if not inside.any():
            continue

        inv_z = l0 / zs[f, 0] + l1 / zs[f, 1] + l2 / zs[f, 2]
        z = np.where(inside & (inv_z > 0), 1.0 / np.where(inv_z > 0, inv_z, 1.0), np.inf)
        tile = zbuf[y0:y1 + 1, x0:x1 + 1]
        np.minimum(tile, z, out=tile)

    depth = np.where(np.isfinite(zbuf), zbuf, 0.0)
    return DepthFrame(depth.astype(np.float32))


def add_depth_noise(frame: DepthFrame, sigma: float, rng: np.random.Generator) -> DepthFrame:
    """Gaussian depth noise on valid pixels only; invalid pixels stay 0."""
    if sigma == 0.0:
        return frame
    values = np.asarray(frame.values, dtype=np.float64).copy()
    valid = values > 0.0
    noise = rng.normal(0.0, sigma, size=values.shape)
    values[valid] = np.maximum(values[valid] + noise[valid], _Z_NEAR)
    return DepthFrame(values.astype(np.float32),
                      frame_index=frame.frame_index, timestamp=frame.timestamp)


def project_landmarks(mesh: Mesh, pose: RigidPose, intr: CameraIntrinsics, ids,
                      noise: NoiseConfig | None = None,
                      rng: np.random.Generator | None = None) -> LandmarkSet:
    """Project the listed (landmark_id, vertex_index) pairs into the image.

    Gaussian pixel noise and dropout are applied per the noise config.
    Landmarks behind the camera or outside the image after noise are
    dropped. Deterministic for a fixed seed; pass `rng` to share a stream
    across frames.
    """
    noise = noise or NoiseConfig()
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    ids = list(ids)

    kept_ids, kept_idx, kept_px = [], [], []
    dropped_behind = 0
    verts = pose.apply(mesh.vertices)
    for name, vi in ids:
        vi = int(vi)
        p = verts[vi]
        # draw the per-landmark randomness unconditionally so dropping a
        # landmark does not shift the stream of the remaining ones
        jitter = rng.normal(0.0, 1.0, size=2)
        drop_draw = rng.uniform()
        if p[2] <= _Z_NEAR:
            dropped_behind += 1
            continue
        if drop_draw < noise.landmark_dropout:
            continue
        u = intr.fx * p[0] / p[2] + intr.cx + noise.landmark_sigma * jitter[0]
        v = intr.fy * p[1] / p[2] + intr.cy + noise.landmark_sigma * jitter[1]
        if not (0 <= u < intr.width and 0 <= v < intr.height):
            continue
        kept_ids.append(str(name))
        kept_idx.append(vi)
        kept_px.append((u, v))
    if dropped_behind:
        log.debug("dropped %d landmarks behind the camera", dropped_behind)

    if not kept_ids:
        return LandmarkSet.empty()
    return LandmarkSet(tuple(kept_ids), np.array(kept_idx, dtype=np.int64),
                       np.array(kept_px), np.ones(len(kept_ids)),
                       image_size=(intr.width, intr.height))


@dataclass(frozen=True)
class GeneratedSequence:
    frames: tuple
    landmarks: tuple
    ground_truth: BscSequence


def _frame_rng(seed: int, frame_index: int) -> np.random.Generator:
    # derived stream: deterministic regardless of render order
    return np.random.default_rng([seed, frame_index])


def generate_frame(model: BlendshapeModel, script_frame: ScriptFrame,
                   intr: CameraIntrinsics, ids, noise: NoiseConfig,
                   frame_index: int) -> tuple[DepthFrame, LandmarkSet]:
    """Render one script frame with its derived noise stream."""
    mesh = evaluate_mesh(model, script_frame.coefficients)
    frame = render_depth(mesh, script_frame.pose, intr)
    frame = DepthFrame(frame.values, frame_index=frame_index,
                       timestamp=script_frame.timestamp)
    rng = _frame_rng(noise.seed, frame_index)
    frame = add_depth_noise(frame, noise.depth_sigma, rng)
    lms = project_landmarks(mesh, script_frame.pose, intr, ids, noise, rng)
    return frame, lms


def generate_sequence(model: BlendshapeModel, script: SequenceScript,
                      intr: CameraIntrinsics, ids,
                      noise: NoiseConfig | None = None) -> GeneratedSequence:
    """Render a whole script: depth frames, landmark sets, and ground truth."""
    if len(script) == 0:
        raise ValueError("script is empty")
    noise = noise or NoiseConfig()
    ids = list(ids)

    frames, lm_sets, gt = [], [], []
    for i, sf in enumerate(script.frames):
        frame, lms = generate_frame(model, sf, intr, ids, noise, i)
        frames.append(frame)
        lm_sets.append(lms)
        gt.append(SequenceFrame(i, sf.timestamp, sf.pose, sf.coefficients))
    truth = BscSequence(model.names, tuple(gt))
    return GeneratedSequence(tuple(frames), tuple(lm_sets), truth)


# ---------------------------------------------------------------------------
# procedural test head

def make_test_head(grid: int = 52, n_blendshapes: int = 51,
                   seed: int = 0) -> BlendshapeModel:
    """Procedural face-like blendshape model (~2k vertices by default).

    The base mesh is the camera-facing half of an elliptic dome with a
    nose, brow ridge, and chin so the surface constrains all six rigid
    degrees of freedom. Each blendshape is a localized smooth bump along
    the local surface normal, centers spread over the face interior.
    """
    half_w, half_h = 0.08, 0.11   # face half-extent, meters
    us = np.linspace(-1.0, 1.0, grid)
    vs = np.linspace(-1.0, 1.0, grid)
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    rr = uu ** 2 + vv ** 2
    inside = rr <= 1.0

    index = -np.ones((grid, grid), dtype=np.int64)
    index[inside] = np.arange(int(inside.sum()))

    x = uu * half_w
    y = vv * half_h
    # dome toward the camera (-z), plus face features
    dome = 0.05 * np.sqrt(np.clip(1.0 - rr, 0.0, None))
    nose = 0.022 * np.exp(-((uu / 0.16) ** 2 + ((vv - 0.05) / 0.28) ** 2))
    brow = 0.010 * np.exp(-((uu / 0.55) ** 2 + ((vv + 0.38) / 0.12) ** 2))
    chin = 0.012 * np.exp(-((uu / 0.22) ** 2 + ((vv - 0.72) / 0.16) ** 2))
    cheek_l = 0.008 * np.exp(-(((uu + 0.45) / 0.18) ** 2 + ((vv - 0.12) / 0.2) ** 2))
    cheek_r = 0.008 * np.exp(-(((uu - 0.45) / 0.18) ** 2 + ((vv - 0.12) / 0.2) ** 2))
    z = -(dome + nose + brow + chin + cheek_l + cheek_r)

    verts = np.stack([x[inside], y[inside], z[inside]], axis=1)

    faces = []
    for i in range(grid - 1):
        for j in range(grid - 1):
            a = index[i, j]
            b = index[i + 1, j]
            c = index[i + 1, j + 1]
            d = index[i, j + 1]
            if min(a, b, c, d) < 0:
                continue
            faces.append((a, b, c))
            faces.append((a, c, d))
    mesh = Mesh(verts, np.array(faces, dtype=np.int64))

    # orient faces so vertex normals point toward the camera (-z)
    normals = vertex_normals(mesh)
    if np.median(normals[:, 2]) > 0:
        mesh = Mesh(verts, mesh.faces[:, ::-1])
        normals = vertex_normals(mesh)

    rng = np.random.default_rng(seed)
    param_r = np.sqrt(rr[inside])
    candidates = np.flatnonzero(param_r <= 0.78)
    centers = _spread_sample(verts[candidates], n_blendshapes, rng)
    centers = candidates[centers]

    # sigma sets the bump footprint; it must stay well below the center
    # spacing (~2 cm for 51 shapes) or neighboring blendshapes become
    # too correlated for sparse recovery, and the flank slope amp/sigma
    # must stay shallow enough to survive the view-incidence gate
    sigma = 0.01
    basis = np.zeros((n_blendshapes, len(verts), 3))
    for k, ci in enumerate(centers):
        amp = rng.uniform(0.012, 0.022)
        d2 = np.sum((verts - verts[ci]) ** 2, axis=1)
        weight = np.exp(-d2 / (2.0 * sigma * sigma))
        weight[weight < 1e-4] = 0.0
        basis[k] = (amp * weight)[:, None] * normals[ci]

    names = tuple(f"bump{k:02d}" for k in range(n_blendshapes))
    return BlendshapeModel(mesh, basis, names)


def _spread_sample(points: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy farthest-point sampling; first pick seeded from rng."""
    if count > len(points):
        raise ValueError("fewer candidate points than requested samples")
    first = int(rng.integers(len(points)))
    chosen = [first]
    dist = np.linalg.norm(points - points[first], axis=1)
    for _ in range(count - 1):
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    return np.array(chosen, dtype=np.int64)


def default_landmarks(model: BlendshapeModel, count: int = 40,
                      seed: int = 0) -> list:
    """Deterministic (landmark_id, vertex_index) pairs spread over the face."""
    rng = np.random.default_rng(seed)
    verts = model.neutral.vertices
    picks = _spread_sample(verts, count, rng)
    return [(f"lm{i:02d}", int(v)) for i, v in enumerate(picks)]


def frontal_pose(distance: float = 0.5) -> RigidPose:
    """Head facing the camera at the given distance along +z."""
    return RigidPose(np.array([1.0, 0.0, 0.0, 0.0]), np.array([0.0, 0.0, distance]))
