"""Deterministic synthetic ground truth: word → AU+PS keyframes, AU+PS → cartoon face frame.

Rasterizer: every pixel is sampled on an ss x ss grid of sub-pixel points, each point is mapped
through the inverse pose transform into canonical face space and tested against the implicit
shapes (face, brows, eyes, mouth). Shape coverage is the fraction of inside samples; layers are
composited in that order with ``img = img * (1 - cov) + color * cov``. Only float64 numpy
elementwise arithmetic is involved, so output bytes are reproducible.
"""
from __future__ import annotations
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import AU_DIM, AUPSVector, FrameImage, LandmarkSet, au_index, average_landmarks
from .errors import ContractError, DataError, EmptyInputError
from .logging import log_step
from .text_frontend import tokenize

Color = Tuple[float, float, float]

# peak AU intensities (normalized) and peak pose (pitch, yaw, roll) per canonical mouth pattern
_PATTERNS: Tuple[Tuple[Dict[str, float], Tuple[float, float, float]], ...] = (
    ({"au23": 0.6, "au17": 0.5, "au25": 0.05}, (0.05, 0.0, 0.0)),
    ({"au25": 0.8, "au26": 0.9}, (-0.08, 0.0, 0.0)),
    ({"au12": 0.9, "au06": 0.5, "au25": 0.4}, (0.0, 0.1, 0.0)),
    ({"au25": 0.6, "au26": 0.5, "au01": 0.5, "au02": 0.5}, (0.0, -0.1, 0.05)),
    ({"au12": 0.5, "au20": 0.6, "au25": 0.5, "au26": 0.2}, (0.05, 0.15, 0.0)),
    ({"au10": 0.6, "au04": 0.4, "au25": 0.3, "au26": 0.1}, (0.0, 0.0, -0.08)),
    ({"au25": 0.4, "au26": 0.6, "au45": 0.9}, (-0.05, -0.12, 0.0)),
    ({"au01": 0.8, "au02": 0.8, "au25": 0.7, "au26": 0.7}, (0.1, 0.0, 0.08)),
)
_TAIL = 0.4  # last keyframe holds this fraction of the peak


def _pattern_keyframes(peak_aus: Mapping[str, float], peak_pose: Sequence[float]) -> Tuple[AUPSVector, ...]:
    au = [0.0] * AU_DIM
    for name, value in peak_aus.items():
        au[au_index(name)] = value
    rest = AUPSVector.zeros(normalized=True)
    peak = AUPSVector(tuple(au), tuple(peak_pose), True)
    tail = AUPSVector(tuple(_TAIL * x for x in au), tuple(_TAIL * x for x in peak_pose), True)
    return rest, peak, tail


@dataclass(frozen=True)
class VisemeTable:
    patterns: Tuple[Tuple[AUPSVector, ...], ...]
    entries: Mapping[str, Tuple[AUPSVector, ...]] = field(default_factory=dict)
    frames_per_word: int = 4
    seed: int = 0

    def __post_init__(self):
        for name, frames in list(self.entries.items()) + [(f"pattern {i}", p) for i, p in enumerate(self.patterns)]:
            if not frames or not all(v.normalized for v in frames):
                raise ContractError(f"viseme keyframes for {name} must be non-empty and normalized")

    def pattern_index(self, word: str) -> int:
        digest = hashlib.sha256(f"{self.seed}\x1f{word}".encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little") % len(self.patterns)

    def keyframes(self, word: str) -> Tuple[AUPSVector, ...]:
        if word in self.entries:
            return self.entries[word]
        return self.patterns[self.pattern_index(word)]


def default_viseme_table(seed: int = 0, frames_per_word: int = 4, num_patterns: int = 8) -> VisemeTable:
    if not 1 <= num_patterns <= len(_PATTERNS):
        raise ContractError(f"num_patterns must be in [1, {len(_PATTERNS)}], got {num_patterns}")
    patterns = tuple(_pattern_keyframes(a, p) for a, p in _PATTERNS[:num_patterns])
    return VisemeTable(patterns=patterns, frames_per_word=frames_per_word, seed=seed)


def interpolate_keyframes(keys: Sequence[AUPSVector], frames: int) -> List[AUPSVector]:
    mat = np.stack([k.as_array() for k in keys])
    if len(keys) == 1:
        return [keys[0]] * frames
    out = []
    for pos in np.linspace(0.0, len(keys) - 1, frames):
        lo = min(int(math.floor(pos)), len(keys) - 2)
        frac = pos - lo
        out.append(AUPSVector.from_values((1.0 - frac) * mat[lo] + frac * mat[lo + 1], normalized=True))
    return out


def word_to_aups(word: str, table: VisemeTable) -> List[AUPSVector]:
    if not word:
        raise EmptyInputError("word_to_aups needs a non-empty word")
    return interpolate_keyframes(table.keyframes(word), table.frames_per_word)


def sentence_to_aups(text: str, table: VisemeTable) -> List[AUPSVector]:
    seq: List[AUPSVector] = []
    for tok in tokenize(text):
        seq.extend(word_to_aups(tok, table))
    return seq


# ---------- renderer ----------

@dataclass(frozen=True)
class RenderSpec:
    height: int = 64
    width: int = 64
    supersample: int = 4
    background: Color = (0.18, 0.20, 0.26)
    skin: Color = (0.93, 0.78, 0.65)
    eye_color: Color = (0.10, 0.10, 0.12)
    brow_color: Color = (0.30, 0.20, 0.12)
    mouth_color: Color = (0.55, 0.10, 0.14)
    face_center: Tuple[float, float] = (0.5, 0.52)
    face_radii: Tuple[float, float] = (0.30, 0.38)
    eye_centers: Tuple[Tuple[float, float], Tuple[float, float]] = ((0.38, 0.42), (0.62, 0.42))
    eye_radii: Tuple[float, float] = (0.055, 0.03)
    brow_xs: Tuple[float, float] = (0.38, 0.62)
    brow_y: float = 0.33
    brow_radii: Tuple[float, float] = (0.07, 0.018)
    brow_raise: float = 0.05
    mouth_center: Tuple[float, float] = (0.5, 0.68)
    mouth_half_width: float = 0.10
    mouth_smile_width: float = 0.03
    mouth_lift: float = 0.035
    mouth_thickness: float = 0.012
    mouth_open: float = 0.09
    jaw_points: Tuple[Tuple[float, float], Tuple[float, float]] = ((0.30, 0.80), (0.70, 0.80))
    jaw_drop: float = 0.03
    yaw_shift: float = 0.08
    yaw_shear: float = 0.15
    pitch_shift: float = 0.06
    roll_rotation: float = 0.30

    def canonical_landmarks(self) -> LandmarkSet:
        return face_landmarks(AUPSVector.zeros(normalized=True), self)


@dataclass(frozen=True)
class _FaceParams:
    brow_dy: float
    eye_ry: float
    mouth_hw: float
    mouth_lift: float
    mouth_thick: float
    jaw_dy: float


def _face_params(au: np.ndarray, spec: RenderSpec) -> _FaceParams:
    brow = 0.5 * (au[au_index("au01")] + au[au_index("au02")])
    opening = 0.5 * (au[au_index("au25")] + au[au_index("au26")])
    smile = au[au_index("au12")]
    return _FaceParams(
        brow_dy=-spec.brow_raise * brow,
        eye_ry=spec.eye_radii[1] * (1.0 - 0.9 * au[au_index("au45")]),
        mouth_hw=spec.mouth_half_width + spec.mouth_smile_width * smile,
        mouth_lift=spec.mouth_lift * smile,
        mouth_thick=spec.mouth_thickness + spec.mouth_open * opening,
        jaw_dy=spec.jaw_drop * au[au_index("au26")],
    )


def _pose_matrix(pose: np.ndarray, spec: RenderSpec) -> Tuple[np.ndarray, np.ndarray]:
    pitch, yaw, roll = pose
    theta = spec.roll_rotation * roll
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    shear = np.array([[1.0, spec.yaw_shear * yaw], [0.0, 1.0]])
    shift = np.array([spec.yaw_shift * yaw, spec.pitch_shift * pitch])
    return shear @ rot, shift


def _to_image(q: np.ndarray, pose: np.ndarray, spec: RenderSpec) -> np.ndarray:
    m, shift = _pose_matrix(pose, spec)
    c = np.asarray(spec.face_center)
    return (q - c) @ m.T + c + shift


def _to_canonical(px: np.ndarray, py: np.ndarray, pose: np.ndarray, spec: RenderSpec) -> Tuple[np.ndarray, np.ndarray]:
    pitch, yaw, roll = pose
    cx, cy = spec.face_center
    dx = px - cx - spec.yaw_shift * yaw
    dy = py - cy - spec.pitch_shift * pitch
    dx = dx - spec.yaw_shear * yaw * dy  # undo shear
    theta = spec.roll_rotation * roll
    c, s = math.cos(theta), math.sin(theta)
    return c * dx + s * dy + cx, -s * dx + c * dy + cy  # undo rotation


def face_landmarks(v: AUPSVector, spec: RenderSpec) -> LandmarkSet:
    """Twelve landmarks: 4 eye corners, 2 brow centers, 4 mouth points, 2 jaw points."""
    if not v.normalized:
        raise ContractError("face_landmarks needs a normalized AU+PS vector")
    arr = v.as_array()
    p = _face_params(arr[:AU_DIM], spec)
    (lx, ly), (rx, ry) = spec.eye_centers
    ew = spec.eye_radii[0]
    mx, my = spec.mouth_center
    pts = np.array([
        (lx - ew, ly), (lx + ew, ly), (rx - ew, ry), (rx + ew, ry),
        (spec.brow_xs[0], spec.brow_y + p.brow_dy), (spec.brow_xs[1], spec.brow_y + p.brow_dy),
        (mx - p.mouth_hw, my - p.mouth_lift), (mx + p.mouth_hw, my - p.mouth_lift),
        (mx, my - p.mouth_thick), (mx, my + p.mouth_thick),
        (spec.jaw_points[0][0], spec.jaw_points[0][1] + p.jaw_dy),
        (spec.jaw_points[1][0], spec.jaw_points[1][1] + p.jaw_dy),
    ])
    return LandmarkSet.from_array(np.clip(_to_image(pts, arr[AU_DIM:], spec), 0.0, 1.0))


def _ellipse(qx, qy, center, radii) -> np.ndarray:
    return ((qx - center[0]) / radii[0]) ** 2 + ((qy - center[1]) / radii[1]) ** 2 <= 1.0


def _mouth(qx, qy, spec: RenderSpec, p: _FaceParams) -> np.ndarray:
    u = (qx - spec.mouth_center[0]) / p.mouth_hw
    inside_u = np.abs(u) <= 1.0
    half = p.mouth_thick * np.sqrt(np.clip(1.0 - u * u, 0.0, None))
    centre_line = spec.mouth_center[1] - p.mouth_lift * u * u
    return inside_u & (np.abs(qy - centre_line) <= half)


def render_face(v: AUPSVector, spec: RenderSpec) -> FrameImage:
    if not v.normalized:
        raise ContractError("render_face needs a normalized AU+PS vector")
    arr = v.as_array()
    p = _face_params(arr[:AU_DIM], spec)
    h, w, ss = spec.height, spec.width, spec.supersample
    offsets = (np.arange(ss) + 0.5) / ss - 0.5
    xs = (np.arange(w)[:, None] + offsets[None, :]).reshape(-1) / max(w - 1, 1)
    ys = (np.arange(h)[:, None] + offsets[None, :]).reshape(-1) / max(h - 1, 1)
    px, py = np.meshgrid(xs, ys)
    qx, qy = _to_canonical(px, py, arr[AU_DIM:], spec)

    layers = [
        (_ellipse(qx, qy, spec.face_center, spec.face_radii), spec.skin),
        (_ellipse(qx, qy, (spec.brow_xs[0], spec.brow_y + p.brow_dy), spec.brow_radii)
         | _ellipse(qx, qy, (spec.brow_xs[1], spec.brow_y + p.brow_dy), spec.brow_radii), spec.brow_color),
        (_ellipse(qx, qy, spec.eye_centers[0], (spec.eye_radii[0], p.eye_ry))
         | _ellipse(qx, qy, spec.eye_centers[1], (spec.eye_radii[0], p.eye_ry)), spec.eye_color),
        (_mouth(qx, qy, spec, p), spec.mouth_color),
    ]
    img = np.empty((h, w, 3), dtype=np.float64)
    img[:] = spec.background
    for mask, color in layers:
        cov = mask.reshape(h, ss, w, ss).mean(axis=(1, 3))[..., None]
        img = img * (1.0 - cov) + np.asarray(color) * cov
    return FrameImage((img * 2.0 - 1.0).astype(np.float32))


def mouth_pixel_count(frame: FrameImage, spec: RenderSpec) -> int:
    """Pixels closer to the mouth color than to the skin color."""
    rgb = (frame.pixels.astype(np.float64) + 1.0) / 2.0
    d_mouth = ((rgb - np.asarray(spec.mouth_color)) ** 2).sum(-1)
    d_skin = ((rgb - np.asarray(spec.skin)) ** 2).sum(-1)
    return int((d_mouth < d_skin).sum())


# ---------- corpus generation ----------

@dataclass(frozen=True)
class RenderedSample:
    id: str
    text: str
    aups: Tuple[AUPSVector, ...]
    landmarks: Tuple[LandmarkSet, ...]
    frames: Tuple[FrameImage, ...]


def render_sample(sample_id: str, text: str, table: VisemeTable, spec: RenderSpec) -> RenderedSample:
    aups = sentence_to_aups(text, table)
    return RenderedSample(
        id=sample_id, text=text, aups=tuple(aups),
        landmarks=tuple(face_landmarks(v, spec) for v in aups),
        frames=tuple(render_face(v, spec) for v in aups),
    )


def render_spec_from_config(cfg) -> RenderSpec:
    h, w = cfg.image_hw
    return RenderSpec(height=h, width=w, supersample=cfg.corpus.supersample)


def viseme_table_from_config(cfg) -> VisemeTable:
    return default_viseme_table(cfg.seed, cfg.corpus.frames_per_word, cfg.corpus.num_patterns)


def corpus_echo(cfg) -> dict:
    """Settings that determine corpus bytes; thread count is left out."""
    c = cfg.corpus
    return {"seed": cfg.seed, "image_hw": list(cfg.image_hw), "frames_per_word": c.frames_per_word,
            "num_patterns": c.num_patterns, "landmark_count": c.landmark_count, "supersample": c.supersample}


def generate_corpus(sentences: Sequence[str], table: VisemeTable, spec: RenderSpec, out_dir: Path,
                    config_echo: Optional[dict] = None, workers: int = 1, quiet: bool = False) -> dict:
    from .io_corpus import write_avg_flm_csv, write_manifest, write_sample

    sentences = [s.strip() for s in sentences if s.strip()]
    if not sentences:
        raise EmptyInputError("generate_corpus needs at least one sentence")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create corpus directory {out_dir}: {e}", code="E480")

    ids = [f"s{i:05d}" for i in range(len(sentences))]
    jobs = list(zip(ids, sentences))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # map yields in submission order
            rendered = list(pool.map(lambda job: render_sample(job[0], job[1], table, spec), jobs))
    else:
        rendered = [render_sample(i, s, table, spec) for i, s in jobs]
    log_step("A. Samples rendered", True, f"{len(rendered)} samples, {sum(len(r.aups) for r in rendered)} frames", quiet)

    all_landmarks: List[LandmarkSet] = []
    try:
        for sample in rendered:
            all_landmarks.extend(write_sample(out_dir, sample))
        avg = average_landmarks(all_landmarks)
        write_avg_flm_csv(out_dir / "avg_flm.csv", avg)
        manifest = {
            "seed": table.seed,
            "frames_per_word": table.frames_per_word,
            "config": config_echo or {},
            "samples": [{"id": r.id, "text": r.text, "num_frames": len(r.aups)} for r in rendered],
        }
        write_manifest(out_dir / "manifest.json", manifest)
    except OSError as e:
        raise DataError(f"cannot write corpus under {out_dir}: {e}", code="E480")
    log_step("B. Corpus written", True, str(out_dir), quiet)
    return manifest


def manifest_json(manifest: dict) -> str:
    return json.dumps(manifest, indent=2, ensure_ascii=False) + "\n"
