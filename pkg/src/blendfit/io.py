"""Readers and writers for every persistent artifact.

All formats are versioned and little-endian; text formats always use '.'
as the decimal separator and write floats with repr(), the shortest
decimal string that round-trips the exact float64. Readers reject
unknown versions and unknown fields instead of guessing.

Formats
-------
mesh            plain-text OBJ subset: 'v x y z' and 'f a b c' records
                (1-based indices, triangles only), '#' comments
depth frame     binary, magic "BSDF": version u16, width u32, height
                u32, fx fy cx cy f32, timestamp f64, then width*height
                f32 row-major depth values, 0.0 meaning invalid
model           binary, magic "BSBM": version u16, n u32, V u32, F u32,
                n length-prefixed utf-8 names, neutral vertices V*3 f64,
                faces F*3 u32, basis n*V*3 f64
sequence        text, first line "bscseq 1", then a comma-separated
                header (frame,timestamp,qw,qx,qy,qz,tx,ty,tz,names...)
                and one record per frame
landmarks       JSON document, format "landmarks" version 1
viseme table    text, first line "visemes 1", then one cluster per
                line: viseme weight phonemes...
manifest        JSON document, format "dataset" version 1; file paths
                are relative to the manifest's directory
report          JSON document, format "bscreport" version 1
alignment       text, one phoneme label per line, '#' comments
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .correspondence import DepthFrame, LandmarkSet
from .geometry import (
    BlendshapeModel,
    BscSequence,
    CameraIntrinsics,
    Mesh,
    RigidPose,
    SequenceFrame,
)
from .metrics import FrameAlignment, VisemeTable
from .synth import NoiseConfig


class FormatError(ValueError):
    """File content violates its format contract."""


class ParseError(FormatError):
    """Malformed text record; carries the 1-based line number."""

    def __init__(self, source, line_number: int, message: str):
        self.source = str(source)
        self.line_number = line_number
        super().__init__(f"{source}:{line_number}: {message}")


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# OBJ mesh subset

def write_mesh(path, mesh: Mesh) -> None:
    lines = ["# triangle mesh, meters"]
    for v in mesh.vertices:
        lines.append(f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_mesh(path) -> Mesh:
    vertices = []
    faces = []
    with open(path, encoding="ascii") as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            kind, args = parts[0], parts[1:]
            if kind == "v":
                if len(args) != 3:
                    raise ParseError(path, ln, f"vertex needs 3 coordinates, got {len(args)}")
                try:
                    vertices.append([float(a) for a in args])
                except ValueError:
                    raise ParseError(path, ln, f"bad vertex coordinate in {line!r}") from None
            elif kind == "f":
                if len(args) != 3:
                    raise ParseError(
                        path, ln, f"only triangle faces are supported, got {len(args)} indices")
                idx = []
                for a in args:
                    if "/" in a:
                        raise ParseError(
                            path, ln, "texture/normal face indices are not supported")
                    try:
                        i = int(a)
                    except ValueError:
                        raise ParseError(path, ln, f"bad face index {a!r}") from None
                    if i < 1:
                        raise ParseError(path, ln, f"face indices are 1-based, got {i}")
                    idx.append(i - 1)
                faces.append(idx)
            else:
                raise ParseError(path, ln, f"unsupported record {kind!r}")
    try:
        return Mesh(np.array(vertices, dtype=np.float64).reshape(-1, 3),
                    np.array(faces, dtype=np.int64).reshape(-1, 3))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# depth frames

_DEPTH_MAGIC = b"BSDF"
_DEPTH_VERSION = 1
_DEPTH_HEADER = struct.Struct("<4sHIIffffd")


def write_depth(path, frame: DepthFrame, intr: CameraIntrinsics) -> None:
    if (frame.width, frame.height) != (intr.width, intr.height):
        raise FormatError(
            f"frame is {frame.width}x{frame.height}, camera says {intr.width}x{intr.height}")
    header = _DEPTH_HEADER.pack(_DEPTH_MAGIC, _DEPTH_VERSION,
                                frame.width, frame.height,
                                intr.fx, intr.fy, intr.cx, intr.cy,
                                frame.timestamp)
    payload = np.ascontiguousarray(frame.values, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_depth(path, frame_index: int = 0) -> tuple[DepthFrame, CameraIntrinsics]:
    blob = Path(path).read_bytes()
    if len(blob) < _DEPTH_HEADER.size:
        raise FormatError(
            f"{path}: header needs {_DEPTH_HEADER.size} bytes, file has {len(blob)}")
    magic, version, width, height, fx, fy, cx, cy, ts = _DEPTH_HEADER.unpack_from(blob)
    if magic != _DEPTH_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {_DEPTH_MAGIC!r}")
    if version != _DEPTH_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _DEPTH_HEADER.size + 4 * width * height
    if len(blob) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes for {width}x{height}, got {len(blob)}")
    values = np.frombuffer(blob, dtype="<f4", offset=_DEPTH_HEADER.size)
    frame = DepthFrame(values.reshape(height, width), frame_index=frame_index,
                       timestamp=ts)
    intr = CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height)
    return frame, intr


# ---------------------------------------------------------------------------
# blendshape models

_MODEL_MAGIC = b"BSBM"
_MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sHIII")


def write_model(path, model: BlendshapeModel) -> None:
    n, nv, nf = model.n, model.vertex_count, model.neutral.face_count
    parts = [_MODEL_HEADER.pack(_MODEL_MAGIC, _MODEL_VERSION, n, nv, nf)]
    for name in model.names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
    parts.append(np.ascontiguousarray(model.neutral.vertices, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(model.neutral.faces, dtype="<u4").tobytes())
    parts.append(np.ascontiguousarray(model.basis, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_model(path) -> BlendshapeModel:
    blob = Path(path).read_bytes()
    if len(blob) < _MODEL_HEADER.size:
        raise FormatError(
            f"{path}: header needs {_MODEL_HEADER.size} bytes, file has {len(blob)}")
    magic, version, n, nv, nf = _MODEL_HEADER.unpack_from(blob)
    if magic != _MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {_MODEL_MAGIC!r}")
    if version != _MODEL_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    off = _MODEL_HEADER.size
    names = []
    for _ in range(n):
        if off + 2 > len(blob):
            raise FormatError(f"{path}: truncated name table")
        (ln,) = struct.unpack_from("<H", blob, off)
        off += 2
        if off + ln > len(blob):
            raise FormatError(f"{path}: truncated name table")
        names.append(blob[off:off + ln].decode("utf-8"))
        off += ln
    need = nv * 3 * 8 + nf * 3 * 4 + n * nv * 3 * 8
    if len(blob) - off != need:
        raise FormatError(
            f"{path}: expected {need} payload bytes after names, got {len(blob) - off}")
    verts = np.frombuffer(blob, dtype="<f8", count=nv * 3, offset=off).reshape(nv, 3)
    off += nv * 3 * 8
    faces = np.frombuffer(blob, dtype="<u4", count=nf * 3, offset=off).reshape(nf, 3)
    off += nf * 3 * 4
    basis = np.frombuffer(blob, dtype="<f8", count=n * nv * 3, offset=off).reshape(n, nv, 3)
    return BlendshapeModel(neutral=Mesh(verts, faces.astype(np.int64)),
                           basis=basis, names=tuple(names))


# ---------------------------------------------------------------------------
# coefficient sequences

_SEQ_TAG = "bscseq 1"
_SEQ_FIXED = ["frame", "timestamp", "qw", "qx", "qy", "qz", "tx", "ty", "tz"]


def write_bsc_sequence(path, seq: BscSequence) -> None:
    for name in seq.names:
        if "," in name or "\n" in name:
            raise FormatError(f"blendshape name {name!r} cannot be stored")
    lines = [_SEQ_TAG, ",".join(_SEQ_FIXED + list(seq.names))]
    for fr in seq.frames:
        q, t = fr.pose.rotation, fr.pose.translation
        fields = ([str(fr.frame_index), _fmt(fr.timestamp)]
                  + [_fmt(v) for v in q] + [_fmt(v) for v in t]
                  + [_fmt(v) for v in fr.coefficients])
        lines.append(",".join(fields))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_bsc_sequence(path) -> BscSequence:
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != _SEQ_TAG:
        raise FormatError(f"{path}: first line must be {_SEQ_TAG!r}")
    if len(lines) < 2:
        raise FormatError(f"{path}: missing header row")
    header = [h.strip() for h in lines[1].split(",")]
    if header[:len(_SEQ_FIXED)] != _SEQ_FIXED:
        raise ParseError(path, 2, f"header must start with {','.join(_SEQ_FIXED)}")
    names = tuple(header[len(_SEQ_FIXED):])
    n = len(names)
    frames = []
    for ln, raw in enumerate(lines[2:], start=3):
        if not raw.strip():
            continue
        fields = raw.split(",")
        if len(fields) != len(_SEQ_FIXED) + n:
            raise ParseError(
                path, ln, f"expected {len(_SEQ_FIXED) + n} fields, got {len(fields)}")
        try:
            frame_index = int(fields[0])
            vals = [float(v) for v in fields[1:]]
        except ValueError:
            raise ParseError(path, ln, "non-numeric field") from None
        coeffs = np.array(vals[8:])
        if coeffs.size and (coeffs.min() < 0.0 or coeffs.max() > 1.0):
            raise FormatError(
                f"{path}: frame {frame_index} has coefficient outside [0, 1] "
                f"(min {coeffs.min()!r}, max {coeffs.max()!r})")
        try:
            pose = RigidPose(np.array(vals[1:5]), np.array(vals[5:8]))
            frames.append(SequenceFrame(frame_index=frame_index, timestamp=vals[0],
                                        pose=pose, coefficients=coeffs))
        except ValueError as exc:
            raise ParseError(path, ln, str(exc)) from None
    try:
        return BscSequence(names=names, frames=tuple(frames))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# landmarks

_LM_FORMAT = "landmarks"
_LM_VERSION = 1
_LM_POINT_KEYS = {"id", "vertex", "u", "v", "confidence"}


def write_landmarks(path, lms: LandmarkSet) -> None:
    points = []
    for i, lid in enumerate(lms.ids):
        points.append({"id": lid, "vertex": int(lms.vertex_indices[i]),
                       "u": float(lms.pixels[i, 0]), "v": float(lms.pixels[i, 1]),
                       "confidence": float(lms.confidences[i])})
    doc = {"format": _LM_FORMAT, "version": _LM_VERSION, "points": points}
    if lms.image_size is not None:
        doc["image_size"] = [int(lms.image_size[0]), int(lms.image_size[1])]
    _write_json(path, doc)


def read_landmarks(path) -> LandmarkSet:
    doc = _read_json(path, _LM_FORMAT, _LM_VERSION,
                     allowed={"format", "version", "points", "image_size"})
    points = doc.get("points")
    if not isinstance(points, list):
        raise FormatError(f"{path}: 'points' must be a list")
    ids, vids, px, conf = [], [], [], []
    for i, p in enumerate(points):
        unknown = set(p) - _LM_POINT_KEYS
        if unknown:
            raise FormatError(
                f"{path}: points[{i}] has unknown fields {sorted(unknown)}")
        try:
            ids.append(str(p["id"]))
            vids.append(int(p["vertex"]))
            px.append([float(p["u"]), float(p["v"])])
            conf.append(float(p.get("confidence", 1.0)))
        except KeyError as exc:
            raise FormatError(f"{path}: points[{i}] missing field {exc}") from None
    image_size = doc.get("image_size")
    if image_size is not None:
        image_size = (int(image_size[0]), int(image_size[1]))
    if not ids:
        return LandmarkSet.empty()
    try:
        return LandmarkSet(tuple(ids), np.array(vids, dtype=np.int64),
                           np.array(px), np.array(conf), image_size=image_size)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# viseme tables

_VIS_TAG = "visemes 1"


def parse_viseme_table(text: str, source="<string>") -> VisemeTable:
    lines = text.splitlines()
    if not lines or lines[0].split("#", 1)[0].strip() != _VIS_TAG:
        raise FormatError(f"{source}: first line must be {_VIS_TAG!r}")
    viseme_of = {}
    weights = {}
    for ln, raw in enumerate(lines[1:], start=2):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 3:
            raise ParseError(source, ln,
                             "cluster rows are: viseme weight phoneme...")
        viseme = parts[0]
        try:
            weight = float(parts[1])
        except ValueError:
            raise ParseError(source, ln, f"bad weight {parts[1]!r}") from None
        if viseme in weights:
            raise ParseError(source, ln, f"viseme {viseme} listed twice")
        weights[viseme] = weight
        for p in parts[2:]:
            if p in viseme_of:
                raise ParseError(source, ln, f"phoneme {p!r} already mapped")
            viseme_of[p] = viseme
    try:
        return VisemeTable(viseme_of=viseme_of, weights=weights)
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from exc


def read_viseme_table(path) -> VisemeTable:
    return parse_viseme_table(Path(path).read_text(encoding="ascii"), source=path)


def write_viseme_table(path, table: VisemeTable) -> None:
    clusters: dict[str, list] = {v: [] for v in table.weights}
    for p, v in table.viseme_of.items():
        clusters[v].append(p)
    lines = [_VIS_TAG]
    for v in sorted(clusters, key=lambda v: (-table.weights[v], v)):
        lines.append(f"{v} {_fmt(table.weights[v])} {' '.join(sorted(clusters[v]))}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


# ---------------------------------------------------------------------------
# alignments

def read_alignment(path) -> FrameAlignment:
    labels = []
    with open(path, encoding="ascii") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                labels.append(line)
    return FrameAlignment(tuple(labels))


def write_alignment(path, align: FrameAlignment) -> None:
    Path(path).write_text("\n".join(align.labels) + "\n", encoding="ascii")


# ---------------------------------------------------------------------------
# reports

_REPORT_FORMAT = "bscreport"
_REPORT_VERSION = 1


def write_report(path, report: dict) -> None:
    doc = {"format": _REPORT_FORMAT, "version": _REPORT_VERSION}
    overlap = set(doc) & set(report)
    if overlap:
        raise FormatError(f"report keys collide with the envelope: {sorted(overlap)}")
    doc.update(report)
    _write_json(path, doc)


# ---------------------------------------------------------------------------
# dataset manifests

_MANIFEST_FORMAT = "dataset"
_MANIFEST_VERSION = 1


@dataclass(frozen=True)
class FrameEntry:
    depth_path: Path
    timestamp: float
    landmarks_path: Path | None = None


@dataclass(frozen=True)
class DatasetManifest:
    """Index of one captured or generated dataset.

    Paths are absolute after loading. Every referenced file must exist
    at load time.
    """
    camera: CameraIntrinsics
    frames: tuple
    ground_truth: Path | None = None
    seed: int | None = None
    noise: NoiseConfig | None = None

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        ts = [f.timestamp for f in self.frames]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("frame timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frames)


def write_manifest(path, manifest: DatasetManifest) -> None:
    base = Path(path).parent
    cam = manifest.camera

    def rel(p):
        # stored paths are manifest-relative; fall back to absolute for
        # files outside the manifest directory
        p = Path(p).resolve()
        try:
            return str(p.relative_to(base.resolve()))
        except ValueError:
            return str(p)

    frames = []
    for f in manifest.frames:
        entry = {"depth": rel(f.depth_path), "timestamp": f.timestamp}
        if f.landmarks_path is not None:
            entry["landmarks"] = rel(f.landmarks_path)
        frames.append(entry)
    doc = {
        "format": _MANIFEST_FORMAT, "version": _MANIFEST_VERSION,
        "camera": {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
                   "width": cam.width, "height": cam.height},
        "frames": frames,
    }
    if manifest.ground_truth is not None:
        doc["ground_truth"] = rel(manifest.ground_truth)
    if manifest.seed is not None:
        doc["seed"] = int(manifest.seed)
    if manifest.noise is not None:
        doc["noise"] = {"depth_sigma": manifest.noise.depth_sigma,
                        "landmark_sigma": manifest.noise.landmark_sigma,
                        "landmark_dropout": manifest.noise.landmark_dropout}
    _write_json(path, doc)


def read_manifest(path) -> DatasetManifest:
    base = Path(path).parent
    doc = _read_json(path, _MANIFEST_FORMAT, _MANIFEST_VERSION,
                     allowed={"format", "version", "camera", "frames",
                              "ground_truth", "seed", "noise"})
    cam_doc = doc.get("camera")
    if not isinstance(cam_doc, dict):
        raise FormatError(f"{path}: missing camera block")
    unknown = set(cam_doc) - {"fx", "fy", "cx", "cy", "width", "height"}
    if unknown:
        raise FormatError(f"{path}: camera has unknown fields {sorted(unknown)}")
    try:
        cam = CameraIntrinsics(fx=float(cam_doc["fx"]), fy=float(cam_doc["fy"]),
                               cx=float(cam_doc["cx"]), cy=float(cam_doc["cy"]),
                               width=int(cam_doc["width"]), height=int(cam_doc["height"]))
    except KeyError as exc:
        raise FormatError(f"{path}: camera missing field {exc}") from None

    frames = []
    for i, entry in enumerate(doc.get("frames", [])):
        unknown = set(entry) - {"depth", "timestamp", "landmarks"}
        if unknown:
            raise FormatError(f"{path}: frames[{i}] has unknown fields {sorted(unknown)}")
        try:
            depth = base / entry["depth"]
            ts = float(entry["timestamp"])
        except KeyError as exc:
            raise FormatError(f"{path}: frames[{i}] missing field {exc}") from None
        lm = base / entry["landmarks"] if "landmarks" in entry else None
        if not depth.is_file():
            raise FormatError(f"{path}: frames[{i}] depth file {depth} does not exist")
        if lm is not None and not lm.is_file():
            raise FormatError(f"{path}: frames[{i}] landmark file {lm} does not exist")
        frames.append(FrameEntry(depth_path=depth, timestamp=ts, landmarks_path=lm))

    gt = None
    if "ground_truth" in doc:
        gt = base / doc["ground_truth"]
        if not gt.is_file():
            raise FormatError(f"{path}: ground truth file {gt} does not exist")
    noise = None
    if "noise" in doc:
        nd = doc["noise"]
        unknown = set(nd) - {"depth_sigma", "landmark_sigma", "landmark_dropout"}
        if unknown:
            raise FormatError(f"{path}: noise has unknown fields {sorted(unknown)}")
        noise = NoiseConfig(depth_sigma=float(nd.get("depth_sigma", 0.0)),
                            landmark_sigma=float(nd.get("landmark_sigma", 0.0)),
                            landmark_dropout=float(nd.get("landmark_dropout", 0.0)),
                            seed=int(doc.get("seed", 0)))
    return DatasetManifest(camera=cam, frames=tuple(frames), ground_truth=gt,
                           seed=doc.get("seed"), noise=noise)


# ---------------------------------------------------------------------------
# personalization example sets

_EXAMPLES_FORMAT = "examples"
_EXAMPLES_VERSION = 1


def write_examples(dir_path, examples) -> None:
    """Write an example-expression directory: one OBJ per scan plus an
    examples.json index (landmarks, camera, and pose when present)."""
    from .personalize import ExampleExpression

    base = Path(dir_path)
    base.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, ex in enumerate(examples):
        if not isinstance(ex, ExampleExpression):
            raise TypeError(f"examples[{i}] is {type(ex).__name__}, not ExampleExpression")
        scan_name = f"scan_{i:02d}.obj"
        write_mesh(base / scan_name, ex.scan)
        entry = {"scan": scan_name,
                 "activation": [float(v) for v in ex.activation]}
        if ex.landmarks is not None:
            lm_name = f"landmarks_{i:02d}.json"
            write_landmarks(base / lm_name, ex.landmarks)
            entry["landmarks"] = lm_name
            cam = ex.camera
            entry["camera"] = {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx,
                               "cy": cam.cy, "width": cam.width, "height": cam.height}
            entry["pose"] = {"rotation": [float(v) for v in ex.pose.rotation],
                             "translation": [float(v) for v in ex.pose.translation]}
        entries.append(entry)
    _write_json(base / "examples.json",
                {"format": _EXAMPLES_FORMAT, "version": _EXAMPLES_VERSION,
                 "examples": entries})


def read_examples(dir_path) -> list:
    """Load an example-expression directory written by write_examples."""
    from .personalize import ExampleExpression

    base = Path(dir_path)
    index = base / "examples.json"
    if not index.is_file():
        raise FormatError(f"{index}: examples index not found")
    doc = _read_json(index, _EXAMPLES_FORMAT, _EXAMPLES_VERSION,
                     allowed={"format", "version", "examples"})
    out = []
    for i, entry in enumerate(doc.get("examples", [])):
        unknown = set(entry) - {"scan", "activation", "landmarks", "camera", "pose"}
        if unknown:
            raise FormatError(f"{index}: examples[{i}] has unknown fields {sorted(unknown)}")
        try:
            scan = read_mesh(base / entry["scan"])
            activation = np.array([float(v) for v in entry["activation"]])
        except KeyError as exc:
            raise FormatError(f"{index}: examples[{i}] missing field {exc}") from None
        lms = camera = pose = None
        if "landmarks" in entry:
            lms = read_landmarks(base / entry["landmarks"])
            cam_doc = entry.get("camera")
            pose_doc = entry.get("pose")
            if cam_doc is None or pose_doc is None:
                raise FormatError(
                    f"{index}: examples[{i}] has landmarks but no camera/pose")
            camera = CameraIntrinsics(fx=float(cam_doc["fx"]), fy=float(cam_doc["fy"]),
                                      cx=float(cam_doc["cx"]), cy=float(cam_doc["cy"]),
                                      width=int(cam_doc["width"]),
                                      height=int(cam_doc["height"]))
            pose = RigidPose(np.array([float(v) for v in pose_doc["rotation"]]),
                             np.array([float(v) for v in pose_doc["translation"]]))
        try:
            out.append(ExampleExpression(scan=scan, activation=activation,
                                         landmarks=lms, camera=camera, pose=pose))
        except ValueError as exc:
            raise FormatError(f"{index}: examples[{i}]: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# JSON plumbing

def _write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                          encoding="ascii")


def _read_json(path, expected_format: str, expected_version: int, allowed: set) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="ascii"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top level must be a JSON object")
    if doc.get("format") != expected_format:
        raise FormatError(
            f"{path}: format is {doc.get('format')!r}, expected {expected_format!r}")
    if doc.get("version") != expected_version:
        raise FormatError(
            f"{path}: unsupported version {doc.get('version')!r}")
    unknown = set(doc) - allowed
    if unknown:
        raise FormatError(f"{path}: unknown fields {sorted(unknown)}")
    return doc
