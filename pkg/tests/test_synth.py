"""Synthetic data generation: rasterizer, landmarks, scripts, noise."""

import numpy as np
import pytest

from blendfit import Mesh, RigidPose, evaluate_mesh
from blendfit.synth import (
    NoiseConfig,
    ScriptFrame,
    SequenceScript,
    add_depth_noise,
    constant_script,
    frontal_pose,
    generate_sequence,
    make_test_head,
    project_landmarks,
    render_depth,
)


# ---------------------------------------------------------------------------
# depth rasterizer

def test_empty_mesh_renders_all_invalid(intr):
    frame = render_depth(Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=int)),
                         RigidPose.identity(), intr)
    assert not frame.valid_mask().any()


def _facing_square(z=1.0, half=0.2):
    verts = np.array([[-half, -half, z], [half, -half, z],
                      [half, half, z], [-half, half, z]])
    faces = np.array([[0, 2, 1], [0, 3, 2]])
    return Mesh(verts, faces)


def test_square_at_one_meter_renders_exact_depth(intr):
    frame = render_depth(_facing_square(), RigidPose.identity(), intr)
    covered = frame.valid_mask()
    assert covered.any()
    assert (frame.values[covered] == 1.0).all()
    # center pixel is covered, corners are not
    assert covered[intr.height // 2, intr.width // 2]
    assert not covered[0, 0]


def test_back_face_is_culled(intr):
    mesh = _facing_square()
    away = Mesh(mesh.vertices, mesh.faces[:, ::-1])
    frame = render_depth(away, RigidPose.identity(), intr)
    assert not frame.valid_mask().any()


def _ray_triangle_depth(intr, u, v, tri):
    """z of the intersection of the pixel-center ray with a triangle,
    or None. Moller-Trumbore with the camera at the origin."""
    d = np.array([(u + 0.5 - intr.cx) / intr.fx, (v + 0.5 - intr.cy) / intr.fy, 1.0])
    e1 = tri[1] - tri[0]
    e2 = tri[2] - tri[0]
    p = np.cross(d, e2)
    det = e1 @ p
    if abs(det) < 1e-14:
        return None
    s = -tri[0]
    b1 = (s @ p) / det
    q = np.cross(s, e1)
    b2 = (d @ q) / det
    if b1 < -1e-9 or b2 < -1e-9 or b1 + b2 > 1 + 1e-9:
        return None
    t = (e2 @ q) / det
    return t if t > 0 else None


def test_rasterized_depth_matches_ray_casting(intr):
    rng = np.random.default_rng(0)
    for _ in range(5):
        tri = np.column_stack([rng.uniform(-0.15, 0.15, 3),
                               rng.uniform(-0.15, 0.15, 3),
                               rng.uniform(0.6, 1.4, 3)])
        # orient toward the camera so the rasterizer draws it
        n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
        if n @ tri.mean(axis=0) > 0:
            tri = tri[::-1].copy()
        frame = render_depth(Mesh(tri, np.array([[0, 1, 2]])),
                             RigidPose.identity(), intr)
        ys, xs = np.nonzero(frame.valid_mask())
        assert len(ys) > 20
        for v, u in zip(ys, xs):
            z = _ray_triangle_depth(intr, u, v, tri)
            assert z is not None
            assert abs(frame.values[v, u] - z) < 1e-5


def test_nearest_surface_wins_z_buffer(intr):
    near = _facing_square(z=0.8, half=0.05)
    far = _facing_square(z=1.2, half=0.3)
    both = Mesh(np.vstack([near.vertices, far.vertices]),
                np.vstack([near.faces, far.faces + 4]))
    frame = render_depth(both, RigidPose.identity(), intr)
    cy, cx = intr.height // 2, intr.width // 2
    assert abs(frame.values[cy, cx] - 0.8) < 1e-6


# ---------------------------------------------------------------------------
# noise

def test_depth_noise_preserves_invalid_pixels(intr):
    frame = render_depth(_facing_square(), RigidPose.identity(), intr)
    noisy = add_depth_noise(frame, 0.005, np.random.default_rng(1))
    np.testing.assert_array_equal(noisy.valid_mask(), frame.valid_mask())
    changed = noisy.values[frame.valid_mask()] != frame.values[frame.valid_mask()]
    assert changed.all()


def test_depth_noise_deterministic_under_seed(intr):
    frame = render_depth(_facing_square(), RigidPose.identity(), intr)
    a = add_depth_noise(frame, 0.002, np.random.default_rng(7))
    b = add_depth_noise(frame, 0.002, np.random.default_rng(7))
    np.testing.assert_array_equal(a.values, b.values)


def test_noise_config_validation():
    with pytest.raises(ValueError):
        NoiseConfig(depth_sigma=-0.001)
    with pytest.raises(ValueError):
        NoiseConfig(landmark_dropout=1.5)


# ---------------------------------------------------------------------------
# landmark projection

def test_landmarks_exact_without_noise(head, head_landmark_ids, intr):
    from blendfit import project
    mesh = evaluate_mesh(head, np.zeros(head.n))
    pose = frontal_pose()
    lms = project_landmarks(mesh, pose, intr, head_landmark_ids,
                            NoiseConfig(), np.random.default_rng(0))
    assert len(lms) == len(head_landmark_ids)
    for lid, vj in head_landmark_ids:
        j = lms.ids.index(lid)
        np.testing.assert_allclose(lms.pixels[j],
                                   project(intr, pose.apply(mesh.vertices[vj])),
                                   atol=1e-9)


def test_landmark_dropout_one_empties_the_set(head, head_landmark_ids, intr):
    mesh = evaluate_mesh(head, np.zeros(head.n))
    lms = project_landmarks(mesh, frontal_pose(), intr, head_landmark_ids,
                            NoiseConfig(landmark_dropout=1.0),
                            np.random.default_rng(0))
    assert len(lms) == 0


def test_landmarks_deterministic_under_seed(head, head_landmark_ids, intr):
    mesh = evaluate_mesh(head, np.zeros(head.n))
    noise = NoiseConfig(landmark_sigma=1.5, landmark_dropout=0.2, seed=3)
    a = project_landmarks(mesh, frontal_pose(), intr, head_landmark_ids, noise,
                          np.random.default_rng(3))
    b = project_landmarks(mesh, frontal_pose(), intr, head_landmark_ids, noise,
                          np.random.default_rng(3))
    assert a.ids == b.ids
    np.testing.assert_array_equal(a.pixels, b.pixels)


def test_behind_camera_landmark_is_dropped(intr):
    mesh = Mesh(np.array([[0.0, 0.0, 1.0], [0.02, 0.0, 1.0], [0.0, 0.02, -0.5]]),
                np.array([[0, 1, 2]]))
    lms = project_landmarks(mesh, RigidPose.identity(), intr,
                            [("front", 0), ("behind", 2)], NoiseConfig(),
                            np.random.default_rng(0))
    assert lms.ids == ("front",)


# ---------------------------------------------------------------------------
# scripts and sequences

def test_constant_script_timestamps_increase(head):
    script = constant_script(np.zeros(head.n), frontal_pose(), 5)
    ts = [f.timestamp for f in script.frames]
    assert all(b > a for a, b in zip(ts, ts[1:]))


def test_script_rejects_non_increasing_timestamps(head):
    frames = (ScriptFrame(np.zeros(head.n), frontal_pose(), 0.1),
              ScriptFrame(np.zeros(head.n), frontal_pose(), 0.1))
    with pytest.raises(ValueError):
        SequenceScript(frames)


def test_all_zero_script_renders_neutral(head, head_landmark_ids, intr):
    gen = generate_sequence(head, constant_script(np.zeros(head.n), frontal_pose(), 2),
                            intr, head_landmark_ids, NoiseConfig())
    neutral = render_depth(evaluate_mesh(head, np.zeros(head.n)),
                           frontal_pose(), intr)
    for frame in gen.frames:
        np.testing.assert_array_equal(frame.values, neutral.values)
    np.testing.assert_array_equal(gen.ground_truth.coefficient_matrix(),
                                  np.zeros((2, head.n)))


def test_generation_is_bit_reproducible(head, head_landmark_ids, intr):
    rng = np.random.default_rng(11)
    script = constant_script(rng.uniform(0, 1, head.n), frontal_pose(), 3)
    noise = NoiseConfig(depth_sigma=0.002, landmark_sigma=1.0,
                        landmark_dropout=0.1, seed=42)
    a = generate_sequence(head, script, intr, head_landmark_ids, noise)
    b = generate_sequence(head, script, intr, head_landmark_ids, noise)
    for fa, fb in zip(a.frames, b.frames):
        np.testing.assert_array_equal(fa.values, fb.values)
    for la, lb in zip(a.landmarks, b.landmarks):
        assert la.ids == lb.ids
        np.testing.assert_array_equal(la.pixels, lb.pixels)


def test_empty_script_rejected(head, head_landmark_ids, intr):
    with pytest.raises(ValueError):
        generate_sequence(head, SequenceScript(()), intr, head_landmark_ids)


# ---------------------------------------------------------------------------
# procedural test head

def test_test_head_shape_and_determinism():
    a = make_test_head()
    b = make_test_head()
    assert a.n == 51
    assert 1500 <= a.vertex_count <= 3000
    np.testing.assert_array_equal(a.neutral.vertices, b.neutral.vertices)
    np.testing.assert_array_equal(a.basis, b.basis)
    assert a.names == b.names


def test_frontal_pose_distance():
    pose = frontal_pose(0.62)
    np.testing.assert_allclose(pose.translation, [0.0, 0.0, 0.62], atol=1e-15)
