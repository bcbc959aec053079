from __future__ import annotations
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from PIL import Image

from .core import (AUPS_NAMES, AUPSVector, FrameImage, LandmarkSet, SampleRecord, denormalize_aups,
                   normalize_aups)
from .errors import DataError, FormatError

FLOAT_FORMAT = "%.6f"
FRAME_PATTERN = "{:05d}.png"


def landmark_columns(count: int) -> List[str]:
    cols: List[str] = []
    for k in range(count):
        cols += [f"x{k}", f"y{k}"]
    return cols


def _write_csv(df: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")
    return path


def _read_csv_df(path: Path, expected: Sequence[str] | None = None) -> pd.DataFrame:
    if not path.exists():
        raise DataError(f"missing file: {path}", code="E401")
    try:
        df = pd.read_csv(path, dtype=np.float64)
    except (ValueError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FormatError(f"{path}: {e}")
    df = df.rename(columns=str.strip)
    if expected is not None and list(df.columns) != list(expected):
        raise FormatError(f"{path}: header {list(df.columns)} does not match {list(expected)}")
    return df


# ---------- AU+PS ----------

def write_aups_csv(path: Path, seq: Sequence[AUPSVector]) -> Path:
    raw = [denormalize_aups(v) if v.normalized else v for v in seq]
    df = pd.DataFrame([v.values for v in raw], columns=list(AUPS_NAMES))
    df.insert(0, "frame", np.arange(len(raw), dtype=np.int64))
    return _write_csv(df, Path(path))


def read_aups_csv(path: Path, normalized: bool = True) -> List[AUPSVector]:
    df = _read_csv_df(Path(path), ["frame", *AUPS_NAMES])
    if df.empty:
        raise FormatError(f"{path}: no AU+PS rows")
    if not np.array_equal(df["frame"].to_numpy(), np.arange(len(df))):
        raise FormatError(f"{path}: frame column must count 0..{len(df) - 1}")
    out: List[AUPSVector] = []
    for row, values in enumerate(df[list(AUPS_NAMES)].to_numpy()):
        try:
            v = AUPSVector.from_values(values, normalized=False)
        except ValueError as e:
            raise FormatError(f"{path}: row {row}: {e}")
        out.append(normalize_aups(v) if normalized else v)
    return out


# ---------- landmarks ----------

def write_flm_csv(path: Path, seq: Sequence[LandmarkSet]) -> Path:
    count = len(seq[0]) if seq else 0
    df = pd.DataFrame([s.as_array().reshape(-1) for s in seq], columns=landmark_columns(count))
    df.insert(0, "frame", np.arange(len(seq), dtype=np.int64))
    return _write_csv(df, Path(path))


def read_flm_csv(path: Path, count: int) -> List[LandmarkSet]:
    df = _read_csv_df(Path(path), ["frame", *landmark_columns(count)])
    return [LandmarkSet.from_array(row) for row in df[landmark_columns(count)].to_numpy()]


def write_avg_flm_csv(path: Path, avg: LandmarkSet) -> Path:
    df = pd.DataFrame([avg.as_array().reshape(-1)], columns=landmark_columns(len(avg)))
    return _write_csv(df, Path(path))


def read_avg_flm_csv(path: Path, count: int) -> LandmarkSet:
    df = _read_csv_df(Path(path), landmark_columns(count))
    if len(df) != 1:
        raise FormatError(f"{path}: expected exactly one row, found {len(df)}")
    try:
        return LandmarkSet.from_array(df.to_numpy()[0])
    except ValueError as e:
        raise FormatError(f"{path}: {e}")


def rounded_landmarks(s: LandmarkSet) -> LandmarkSet:
    """What a landmark set reads back as after a CSV round trip."""
    return LandmarkSet.from_array(np.round(s.as_array(), 6))


# ---------- frames ----------

def write_frame_png(path: Path, frame: FrameImage) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(frame.to_uint8(), mode="RGB").save(path, format="PNG")
    return path


def read_frame_png(path: Path) -> FrameImage:
    if not path.exists():
        raise DataError(f"missing frame: {path}", code="E401")
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"))
    except OSError as e:
        raise FormatError(f"{path}: {e}")
    return FrameImage.from_uint8(arr)


def write_frames(frames_dir: Path, frames: Sequence[FrameImage]) -> List[Path]:
    return [write_frame_png(frames_dir / FRAME_PATTERN.format(t), f) for t, f in enumerate(frames)]


def read_frames(frames_dir: Path, count: int) -> List[FrameImage]:
    return [read_frame_png(frames_dir / FRAME_PATTERN.format(t)) for t in range(count)]


def write_gif(path: Path, frames: Sequence[FrameImage], fps: int) -> Path:
    images = [Image.fromarray(f.to_uint8(), mode="RGB") for f in frames]
    path.parent.mkdir(parents=True, exist_ok=True)
    images[0].save(path, format="GIF", save_all=True, append_images=images[1:],
                   duration=int(round(1000 / fps)), loop=0)
    return path


# ---------- manifest / corpus ----------

def write_manifest(path: Path, manifest: Dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8", newline="\n")
    return path


def read_manifest(path: Path) -> Dict[str, Any]:
    if not path.exists():
        raise DataError(f"corpus manifest not found: {path}", code="E401")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: line {e.lineno}: {e.msg}")
    if not isinstance(data, dict) or not isinstance(data.get("samples"), list):
        raise FormatError(f"{path}: manifest must be an object with a 'samples' list")
    return data


def write_sample(root: Path, sample) -> List[LandmarkSet]:
    """Write one rendered sample; returns its landmarks as stored on disk."""
    sdir = root / "samples" / sample.id
    write_aups_csv(sdir / "aups.csv", sample.aups)
    write_flm_csv(sdir / "flm.csv", sample.landmarks)
    write_frames(sdir / "frames", sample.frames)
    return [rounded_landmarks(s) for s in sample.landmarks]


@dataclass(frozen=True)
class Corpus:
    root: Path
    manifest: Dict[str, Any]
    records: Tuple[SampleRecord, ...]
    avg_flm: LandmarkSet

    def __len__(self) -> int:
        return len(self.records)

    def texts(self) -> List[str]:
        return [r.text for r in self.records]


def load_corpus(root: Path, landmark_count: int = 12, load_frames: bool = True) -> Corpus:
    root = Path(root)
    manifest = read_manifest(root / "manifest.json")
    avg = read_avg_flm_csv(root / "avg_flm.csv", landmark_count)
    records = []
    for entry in manifest["samples"]:
        sid = str(entry["id"])
        sdir = root / "samples" / sid
        aups = read_aups_csv(sdir / "aups.csv")
        if len(aups) != int(entry["num_frames"]):
            raise FormatError(f"{sdir}: manifest says {entry['num_frames']} frames, aups.csv has {len(aups)}")
        frames = read_frames(sdir / "frames", len(aups)) if load_frames else ()
        records.append(SampleRecord(sid, str(entry["text"]), tuple(aups), tuple(frames)))
    return Corpus(root=root, manifest=manifest, records=tuple(records), avg_flm=avg)
